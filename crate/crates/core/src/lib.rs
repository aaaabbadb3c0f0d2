//! Language affinity from adversarially generated text fingerprints.
//!
//! Texts are digitized ([`corpus`]), packed into 64×64 tiles
//! ([`fingerprint`]), and a small convolutional GAN ([`gan`]) is trained on
//! one language's tile. How much more its fakes resemble the training tile
//! than another language's tile ([`metrics`]) gives a directed asymmetry; the
//! two directions of a pair combine into four distances ([`protocol`]).
//!
//! Numeric types are generic over [`Scalar`]; the aliases below fix the
//! pipeline precision to `f64`.

pub mod corpus;
pub mod fingerprint;
pub mod gan;
pub mod metrics;
pub mod parallel;
pub mod protocol;
pub mod report;
pub mod robustness;
pub mod scalar;

pub use scalar::Scalar;

/// Pipeline precision.
pub type Real = f64;
pub type Tile = fingerprint::Tile<Real>;
pub type FingerprintSet = fingerprint::FingerprintSet<Real>;
pub type ModelParams = gan::ModelParams<Real>;
pub type FakeSeries = gan::FakeSeries<Real>;
pub type AffinityMeasure = metrics::AffinityMeasure<Real>;

use std::path::Path;

use corpus::{Corpus, CorpusError, SymbolSequence, TransliterationScheme};
use fingerprint::FingerprintError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error(transparent)]
    Gan(#[from] gan::GanError),
    #[error(transparent)]
    Metric(#[from] metrics::MetricError),
    #[error(transparent)]
    Protocol(#[from] protocol::ProtocolError),
    #[error(transparent)]
    Robustness(#[from] robustness::RobustnessError),
    #[error(transparent)]
    Report(#[from] report::ReportError),
}

/// Digitizes every sample with the default scheme for its kind.
pub fn digitize_corpus(corpus: &Corpus) -> Result<Vec<SymbolSequence>, CorpusError> {
    corpus.samples.iter().map(|s| corpus::digitize(s, &TransliterationScheme::new(s.kind))).collect()
}

/// Loads a manifest and fingerprints it with the shared corpus divisor.
pub fn fingerprints_from_manifest<S: Scalar>(path: &Path) -> Result<(Corpus, Vec<fingerprint::FingerprintSet<S>>), Error> {
    let corpus = corpus::load_manifest(path)?;
    let seqs = digitize_corpus(&corpus)?;
    let sets = fingerprint::build_corpus(&seqs, corpus.normalization_divisor)?;
    Ok((corpus, sets))
}
