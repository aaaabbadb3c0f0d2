//! Affinity arithmetic between tiles: Frobenius pseudo-cosines, the entropic
//! log-ratio and its schedule average, and Pearson correlation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::Tile;
use crate::gan::FakeSeries;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("undefined cosine: zero-norm input")]
    UndefinedCosine,
    #[error("zero-norm {0} tile")]
    ZeroNormTile(&'static str),
    #[error("undefined log ratio: c_train_fake = {0}, c_test_fake = {1}")]
    UndefinedLog(f64, f64),
    #[error("no valid fakes: all {0} scheduled fakes were skipped")]
    NoValidFakes(usize),
    #[error("empty fake series")]
    EmptySeries,
    #[error("zero variance input")]
    ZeroVariance,
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
}

/// How per-fake values are pooled over a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    /// Average the two c-values, then take the log ratio.
    #[default]
    CValues,
    /// Take the log ratio per fake, then average.
    Rho,
}

pub fn frobenius_norm<S: Scalar>(x: &[S]) -> S {
    x.iter().map(|&v| v * v).sum::<S>().sqrt()
}

/// `(‖sx·x + sy·y‖² − ‖sx·x − sy·y‖²) / 4`, i.e. `sx·sy·⟨x, y⟩`. Scaling both
/// operands to unit norm first keeps the two squared norms comparable, so the
/// subtraction loses no more than a few ulps.
fn polarized_inner<S: Scalar>(x: &[S], y: &[S], sx: S, sy: S) -> S {
    let (plus, minus) = x.iter().zip(y).fold((S::zero(), S::zero()), |(p, m), (&a, &b)| {
        let (u, v) = (sx * a, sy * b);
        (p + (u + v) * (u + v), m + (u - v) * (u - v))
    });
    (plus - minus) / S::lit(4.0)
}

/// Pseudo-metric cosine via the polarization identity.
pub fn cosine<S: Scalar>(x: &[S], y: &[S]) -> Result<S, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::Length(x.len(), y.len()));
    }
    let (nx, ny) = (frobenius_norm(x), frobenius_norm(y));
    if nx == S::zero() || ny == S::zero() {
        return Err(MetricError::UndefinedCosine);
    }
    Ok(polarized_inner(x, y, nx.recip(), ny.recip()))
}

/// Fake-vs-train and fake-vs-test cosines over the shared `‖train‖·‖test‖`
/// denominator. An all-zero fake gives `(0, 0)`.
pub fn modified_cosine<S: Scalar>(train: &Tile<S>, test: &Tile<S>, fake: &Tile<S>) -> Result<(S, S), MetricError> {
    let nt = frobenius_norm(&train.values);
    let ns = frobenius_norm(&test.values);
    if nt == S::zero() {
        return Err(MetricError::ZeroNormTile("train"));
    }
    if ns == S::zero() {
        return Err(MetricError::ZeroNormTile("test"));
    }
    let nf = frobenius_norm(&fake.values);
    if nf == S::zero() {
        return Ok((S::zero(), S::zero()));
    }
    // ⟨t, f⟩ / (‖t‖‖s‖) = cos(t, f) · ‖f‖ / ‖s‖, and symmetrically for the test tile
    let c_tr = polarized_inner(&train.values, &fake.values, nt.recip(), nf.recip()) * (nf / ns);
    let c_te = polarized_inner(&test.values, &fake.values, ns.recip(), nf.recip()) * (nf / nt);
    Ok((c_tr, c_te))
}

/// `ln(c_train_fake / c_test_fake)`; both arguments must be positive.
///
/// Evaluated as a difference of logs so that swapping the arguments negates
/// the result bit-for-bit.
pub fn rho<S: Scalar>(c_train_fake: S, c_test_fake: S) -> Result<S, MetricError> {
    if c_train_fake > S::zero() && c_test_fake > S::zero() {
        Ok(c_train_fake.ln() - c_test_fake.ln())
    } else {
        Err(MetricError::UndefinedLog(c_train_fake.as_f64(), c_test_fake.as_f64()))
    }
}

/// First-order expansion of [`rho`]: `ratio − 1`.
pub fn rho_linearized<S: Scalar>(c_train_fake: S, c_test_fake: S) -> S {
    c_train_fake / c_test_fake - S::one()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinityMeasure<S> {
    pub c_train_fake: S,
    pub c_test_fake: S,
    pub rho: S,
    pub rho_linearized: S,
    pub skipped_epochs: usize,
    pub averaging: Averaging,
}

/// Averages the modified cosines over every scheduled fake and derives ρ.
pub fn schedule_average<S: Scalar>(series: &FakeSeries<S>, train: &Tile<S>, test: &Tile<S>) -> Result<AffinityMeasure<S>, MetricError> {
    schedule_average_with(series, train, test, Averaging::CValues)
}

pub fn schedule_average_with<S: Scalar>(
    series: &FakeSeries<S>,
    train: &Tile<S>,
    test: &Tile<S>,
    averaging: Averaging,
) -> Result<AffinityMeasure<S>, MetricError> {
    if series.fakes.is_empty() {
        return Err(MetricError::EmptySeries);
    }
    let mut c_train = Vec::with_capacity(series.fakes.len());
    let mut c_test = Vec::with_capacity(series.fakes.len());
    let mut rhos = Vec::with_capacity(series.fakes.len());
    let mut skipped = 0;
    for fake in &series.fakes {
        let (a, b) = modified_cosine(train, test, &fake.tile)?;
        match rho(a, b) {
            Ok(r) => {
                c_train.push(a);
                c_test.push(b);
                rhos.push(r);
            }
            Err(_) => skipped += 1,
        }
    }
    if c_train.is_empty() {
        return Err(MetricError::NoValidFakes(skipped));
    }
    if skipped > 0 {
        log::warn!("{skipped} of {} scheduled fakes had non-positive inner products", series.fakes.len());
    }
    let mean = |v: &[S]| kahan_sum(v) / S::lit(v.len() as f64);
    let c_train_fake = mean(&c_train);
    let c_test_fake = mean(&c_test);
    let rho_value = match averaging {
        Averaging::CValues => rho(c_train_fake, c_test_fake)?,
        Averaging::Rho => mean(&rhos),
    };
    Ok(AffinityMeasure {
        c_train_fake,
        c_test_fake,
        rho: rho_value,
        rho_linearized: rho_linearized(c_train_fake, c_test_fake),
        skipped_epochs: skipped,
        averaging,
    })
}

/// Compensated sum over a sorted copy, so the result does not depend on input order.
fn kahan_sum<S: Scalar>(values: &[S]) -> S {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let (mut sum, mut comp) = (S::zero(), S::zero());
    for &v in &sorted {
        let y = v - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Product-moment correlation of two flattened arrays.
pub fn pearson<S: Scalar>(x: &[S], y: &[S]) -> Result<S, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::Length(x.len(), y.len()));
    }
    let n = S::lit(x.len() as f64);
    let mx = x.iter().copied().sum::<S>() / n;
    let my = y.iter().copied().sum::<S>() / n;
    let (mut sxy, mut sxx, mut syy) = (S::zero(), S::zero(), S::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == S::zero() || syy == S::zero() {
        return Err(MetricError::ZeroVariance);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-S::one()).min(S::one()))
}
