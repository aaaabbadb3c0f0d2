use crate::scalar::Scalar;

const EPS: f64 = 1e-8;

/// Adaptive-moment optimizer state for one flat parameter buffer.
pub(crate) struct Adam<S> {
    lr: S,
    beta1: S,
    beta2: S,
    m: Vec<S>,
    v: Vec<S>,
    step: i32,
}

impl<S: Scalar> Adam<S> {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam { lr: S::lit(lr), beta1: S::lit(beta1), beta2: S::lit(beta2), m: vec![S::zero(); len], v: vec![S::zero(); len], step: 0 }
    }

    pub fn step(&mut self, params: &mut [S], grads: &[S]) {
        debug_assert_eq!(params.len(), grads.len());
        self.step += 1;
        let one = S::one();
        let c1 = one - self.beta1.powi(self.step);
        let c2 = one - self.beta2.powi(self.step);
        let eps = S::lit(EPS);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            *m = self.beta1 * *m + (one - self.beta1) * g;
            *v = self.beta2 * *v + (one - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
