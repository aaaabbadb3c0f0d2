//! Layer descriptors and hand-written forward/backward passes.
//!
//! Parameters live in one flat buffer per network; each layer owns a
//! contiguous slice holding its weights followed by its biases.

use serde::{Deserialize, Serialize};

use crate::scalar::{matmul, MatRef, Scalar};

/// Kernel geometry shared by every convolution in the reference networks.
pub const KERNEL: usize = 4;
pub const STRIDE: usize = 2;
pub const PADDING: usize = 1;
const KK: usize = KERNEL * KERNEL;
pub const LEAK: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu,
    Sigmoid,
}

impl Activation {
    fn has_kink(self) -> bool {
        matches!(self, Activation::Relu | Activation::LeakyRelu)
    }
}

/// Channel-major activation shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape { channels, height, width }
    }

    pub const fn flat(n: usize) -> Self {
        Shape { channels: n, height: 1, width: 1 }
    }

    pub const fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub const fn plane(&self) -> usize {
        self.height * self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    Dense,
    /// 4×4 stride-2 convolution halving each spatial side.
    Conv,
    /// 4×4 stride-2 transposed convolution doubling each spatial side.
    ConvTranspose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub input: Shape,
    pub output: Shape,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn dense(inputs: Shape, outputs: Shape, activation: Activation) -> Self {
        LayerSpec { kind: LayerKind::Dense, input: inputs, output: outputs, activation }
    }

    pub fn conv(input: Shape, out_channels: usize, activation: Activation) -> Self {
        let output = Shape::new(out_channels, input.height / STRIDE, input.width / STRIDE);
        LayerSpec { kind: LayerKind::Conv, input, output, activation }
    }

    pub fn conv_transpose(input: Shape, out_channels: usize, activation: Activation) -> Self {
        let output = Shape::new(out_channels, input.height * STRIDE, input.width * STRIDE);
        LayerSpec { kind: LayerKind::ConvTranspose, input, output, activation }
    }

    pub fn weight_count(&self) -> usize {
        match self.kind {
            LayerKind::Dense => self.input.len() * self.output.len(),
            LayerKind::Conv | LayerKind::ConvTranspose => self.input.channels * self.output.channels * KK,
        }
    }

    pub fn bias_count(&self) -> usize {
        match self.kind {
            LayerKind::Dense => self.output.len(),
            LayerKind::Conv | LayerKind::ConvTranspose => self.output.channels,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.bias_count()
    }

    /// Fan-in used for uniform initialization bounds.
    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Dense => self.input.len(),
            LayerKind::Conv => self.input.channels * KK,
            LayerKind::ConvTranspose => self.output.channels * KK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    pub fn input(&self) -> Shape {
        self.layers[0].input
    }

    pub fn output(&self) -> Shape {
        self.layers[self.layers.len() - 1].output
    }

    /// Start offset of each layer's parameters, plus the total at the end.
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.layers.len() + 1);
        let mut acc = 0;
        out.push(0);
        for l in &self.layers {
            acc += l.param_count();
            out.push(acc);
        }
        out
    }

    pub fn forward<S: Scalar>(&self, params: &[S], input: &[S]) -> ForwardCache<S> {
        self.forward_masked(params, input, None)
    }

    /// Forward pass. With `masks`, every kinked activation uses the slope
    /// recorded in the given cache instead of the sign of its own input.
    pub fn forward_masked<S: Scalar>(&self, params: &[S], input: &[S], masks: Option<&ForwardCache<S>>) -> ForwardCache<S> {
        assert_eq!(params.len(), self.param_count(), "parameter buffer size");
        assert_eq!(input.len(), self.input().len(), "input size");
        let offsets = self.offsets();
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cols = Vec::with_capacity(self.layers.len());
        acts.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let p = &params[offsets[i]..offsets[i + 1]];
            let (w, b) = p.split_at(layer.weight_count());
            let x = &acts[i];
            let mut z = vec![S::zero(); layer.output.len()];
            let col = match layer.kind {
                LayerKind::Dense => {
                    matmul(&mut z, MatRef::new(w, layer.output.len(), layer.input.len()), MatRef::new(x, layer.input.len(), 1), false);
                    for (zv, &bv) in z.iter_mut().zip(b) {
                        *zv += bv;
                    }
                    None
                }
                LayerKind::Conv => {
                    let c = im2col(x, layer.input, layer.output);
                    let k = layer.input.channels * KK;
                    let n = layer.output.plane();
                    matmul(&mut z, MatRef::new(w, layer.output.channels, k), MatRef::new(&c, k, n), false);
                    add_channel_bias(&mut z, b, n);
                    Some(c)
                }
                LayerKind::ConvTranspose => {
                    let m = layer.output.channels * KK;
                    let n = layer.input.plane();
                    let mut c = vec![S::zero(); m * n];
                    matmul(&mut c, MatRef::new(w, layer.input.channels, m).t(), MatRef::new(x, layer.input.channels, n), false);
                    col2im(&c, &mut z, layer.output, layer.input);
                    add_channel_bias(&mut z, b, layer.output.plane());
                    None
                }
            };
            let mask = masks.map(|m| m.pre[i].as_slice());
            let y = activate(layer.activation, &z, mask);
            pre.push(z);
            cols.push(col);
            acts.push(y);
        }
        ForwardCache { acts, pre, cols }
    }

    /// Backpropagates `grad_out` (gradient w.r.t. the final activation output).
    ///
    /// Parameter gradients are accumulated into `param_grads` when given. The
    /// gradient with respect to the network input is returned when
    /// `input_grad` is set, otherwise the result is empty.
    pub fn backward<S: Scalar>(
        &self,
        params: &[S],
        cache: &ForwardCache<S>,
        grad_out: &[S],
        mut param_grads: Option<&mut [S]>,
        input_grad: bool,
    ) -> Vec<S> {
        let offsets = self.offsets();
        let mut grad = grad_out.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (w, _) = params[offsets[i]..offsets[i + 1]].split_at(layer.weight_count());
            let dz = activation_backward(layer.activation, &cache.pre[i], &cache.acts[i + 1], &grad);
            let x = &cache.acts[i];
            if let Some(g) = param_grads.as_deref_mut() {
                let (gw, gb) = g[offsets[i]..offsets[i + 1]].split_at_mut(layer.weight_count());
                match layer.kind {
                    LayerKind::Dense => {
                        matmul(gw, MatRef::new(&dz, layer.output.len(), 1), MatRef::new(x, 1, layer.input.len()), true);
                        for (gbv, &d) in gb.iter_mut().zip(&dz) {
                            *gbv += d;
                        }
                    }
                    LayerKind::Conv => {
                        let k = layer.input.channels * KK;
                        let n = layer.output.plane();
                        let c = cache.cols[i].as_ref().expect("conv columns cached");
                        matmul(gw, MatRef::new(&dz, layer.output.channels, n), MatRef::new(c, k, n).t(), true);
                        accumulate_channel_bias(gb, &dz, n);
                    }
                    LayerKind::ConvTranspose => {
                        let m = layer.output.channels * KK;
                        let n = layer.input.plane();
                        let dcols = im2col(&dz, layer.output, layer.input);
                        matmul(gw, MatRef::new(x, layer.input.channels, n), MatRef::new(&dcols, m, n).t(), true);
                        accumulate_channel_bias(gb, &dz, layer.output.plane());
                    }
                }
            }
            if i == 0 && !input_grad {
                return Vec::new();
            }
            let mut dx = vec![S::zero(); layer.input.len()];
            match layer.kind {
                LayerKind::Dense => {
                    matmul(&mut dx, MatRef::new(w, layer.output.len(), layer.input.len()).t(), MatRef::new(&dz, layer.output.len(), 1), false);
                }
                LayerKind::Conv => {
                    let k = layer.input.channels * KK;
                    let n = layer.output.plane();
                    let mut dcols = vec![S::zero(); k * n];
                    matmul(&mut dcols, MatRef::new(w, layer.output.channels, k).t(), MatRef::new(&dz, layer.output.channels, n), false);
                    col2im(&dcols, &mut dx, layer.input, layer.output);
                }
                LayerKind::ConvTranspose => {
                    let m = layer.output.channels * KK;
                    let n = layer.input.plane();
                    let dcols = im2col(&dz, layer.output, layer.input);
                    matmul(&mut dx, MatRef::new(w, layer.input.channels, m), MatRef::new(&dcols, m, n), false);
                }
            }
            grad = dx;
        }
        grad
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<S> {
    /// `acts[0]` is the input; `acts[i + 1]` the output of layer `i`.
    pub acts: Vec<Vec<S>>,
    /// Pre-activation values per layer.
    pub pre: Vec<Vec<S>>,
    cols: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> ForwardCache<S> {
    pub fn output(&self) -> &[S] {
        self.acts.last().expect("at least the input")
    }

    /// Number of kinked units whose pre-activation sign differs between caches.
    pub fn kink_crossings(&self, other: &ForwardCache<S>, spec: &NetworkSpec) -> usize {
        spec.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.activation.has_kink())
            .map(|(i, _)| self.pre[i].iter().zip(&other.pre[i]).filter(|(a, b)| (**a > S::zero()) != (**b > S::zero())).count())
            .sum()
    }
}

fn add_channel_bias<S: Scalar>(z: &mut [S], b: &[S], plane: usize) {
    for (chunk, &bv) in z.chunks_exact_mut(plane).zip(b) {
        for v in chunk {
            *v += bv;
        }
    }
}

fn accumulate_channel_bias<S: Scalar>(gb: &mut [S], dz: &[S], plane: usize) {
    for (g, chunk) in gb.iter_mut().zip(dz.chunks_exact(plane)) {
        *g += chunk.iter().copied().sum::<S>();
    }
}

pub fn sigmoid<S: Scalar>(z: S) -> S {
    S::one() / (S::one() + (-z).exp())
}

fn activate<S: Scalar>(act: Activation, z: &[S], mask: Option<&[S]>) -> Vec<S> {
    let leak = S::lit(LEAK);
    let positive = |i: usize, v: S| match mask {
        Some(m) => m[i] > S::zero(),
        None => v > S::zero(),
    };
    match act {
        Activation::Identity => z.to_vec(),
        Activation::Relu => z.iter().enumerate().map(|(i, &v)| if positive(i, v) { v } else { S::zero() }).collect(),
        Activation::LeakyRelu => z.iter().enumerate().map(|(i, &v)| if positive(i, v) { v } else { leak * v }).collect(),
        Activation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
    }
}

fn activation_backward<S: Scalar>(act: Activation, z: &[S], y: &[S], grad: &[S]) -> Vec<S> {
    let leak = S::lit(LEAK);
    match act {
        Activation::Identity => grad.to_vec(),
        Activation::Relu => z.iter().zip(grad).map(|(&v, &g)| if v > S::zero() { g } else { S::zero() }).collect(),
        Activation::LeakyRelu => z.iter().zip(grad).map(|(&v, &g)| if v > S::zero() { g } else { leak * g }).collect(),
        Activation::Sigmoid => y.iter().zip(grad).map(|(&s, &g)| g * s * (S::one() - s)).collect(),
    }
}

/// Unfolds `big` (the strided side) into a `[C·16, small.plane()]` column
/// matrix where column `(oy, ox)` holds the 4×4 patch at `(2·oy − 1, 2·ox − 1)`.
fn im2col<S: Scalar>(big: &[S], big_shape: Shape, small: Shape) -> Vec<S> {
    let (h, w) = (big_shape.height as isize, big_shape.width as isize);
    let n = small.plane();
    let mut cols = vec![S::zero(); big_shape.channels * KK * n];
    for c in 0..big_shape.channels {
        let plane = &big[c * big_shape.plane()..(c + 1) * big_shape.plane()];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut cols[((c * KERNEL + ky) * KERNEL + kx) * n..][..n];
                for oy in 0..small.height {
                    let iy = (oy * STRIDE + ky) as isize - PADDING as isize;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    for ox in 0..small.width {
                        let ix = (ox * STRIDE + kx) as isize - PADDING as isize;
                        if ix >= 0 && ix < w {
                            row[oy * small.width + ox] = plane[(iy * w + ix) as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters columns back onto `big`, accumulating.
fn col2im<S: Scalar>(cols: &[S], big: &mut [S], big_shape: Shape, small: Shape) {
    let (h, w) = (big_shape.height as isize, big_shape.width as isize);
    let n = small.plane();
    for c in 0..big_shape.channels {
        let plane = &mut big[c * big_shape.plane()..(c + 1) * big_shape.plane()];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &cols[((c * KERNEL + ky) * KERNEL + kx) * n..][..n];
                for oy in 0..small.height {
                    let iy = (oy * STRIDE + ky) as isize - PADDING as isize;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    for ox in 0..small.width {
                        let ix = (ox * STRIDE + kx) as isize - PADDING as isize;
                        if ix >= 0 && ix < w {
                            plane[(iy * w + ix) as usize] += row[oy * small.width + ox];
                        }
                    }
                }
            }
        }
    }
}
