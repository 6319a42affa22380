//! Classifiers trained from scratch: a tanh/sigmoid MLP, a small ReLU CNN,
//! and a one-dimensional threshold rule with ROC analysis.
//!
//! Both networks are generic over [`Real`]; experiment runs use `f32`,
//! gradient checks use `f64`. Training is single-threaded and fully
//! determined by the data order and [`TrainConfig::seed`].

mod cnn;
mod linalg;
mod mlp;
mod roc;
mod standardize;
mod threshold;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;
use crate::texture::FeatureVector;

pub use cnn::{cnn_predict, cnn_train, CnnModel, CnnSpec, MapShape};
pub use linalg::{gemm, Op, Real};
pub use mlp::{mlp_predict, mlp_topology_for, mlp_train, Dense, MlpModel, MlpSpec, MlpVariant, FIRST_LAYER_CAP};
pub use roc::{roc_and_eer, Polarity, RocCurve, RocPoint};
pub use standardize::Standardizer;
pub use threshold::ThresholdClassifier;

/// Version tag written into serialized models.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("unknown MLP variant `{0}` (expected one of 20, 40, 300-40, 300-80, 600-80, 300-80-20)")]
    UnknownVariant(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training data contains a single class")]
    SingleClassTraining,
    #[error("input contains a single class")]
    SingleClassInput,
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged (non-finite parameters)")]
    Diverged,
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    MseSigmoid,
    CrossEntropySoftmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Caps the number of mini-batch updates; the CNN trains on this alone.
    pub batch_budget: Option<usize>,
    /// Stop once the best training loss improved by less than
    /// `early_stop_delta` over this many epochs (0 disables).
    pub early_stop_window: usize,
    pub early_stop_delta: f64,
    pub seed: u64,
    pub loss: Loss,
    /// Fit a per-feature standardizer on the training rows and apply it to
    /// every input, at training and at prediction time.
    pub standardize: bool,
}

impl TrainConfig {
    pub fn mlp(seed: u64) -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            max_epochs: 200,
            batch_budget: None,
            early_stop_window: 10,
            early_stop_delta: 1e-5,
            seed,
            loss: Loss::MseSigmoid,
            standardize: true,
        }
    }

    pub fn cnn(seed: u64) -> Self {
        Self {
            learning_rate: 0.005,
            momentum: 0.9,
            batch_size: 32,
            max_epochs: 0,
            batch_budget: Some(2500),
            early_stop_window: 0,
            early_stop_delta: 0.0,
            seed,
            loss: Loss::CrossEntropySoftmax,
            standardize: false,
        }
    }

    /// A zero learning rate is accepted and leaves parameters untouched.
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::InvalidConfig(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.early_stop_delta.is_nan() || self.early_stop_delta < 0.0 {
            return bad("early_stop_delta must be >= 0");
        }
        Ok(())
    }
}

/// Stacks feature vectors into a row-major sample matrix.
pub fn feature_matrix<T: Real>(features: &[FeatureVector]) -> Result<Grid<T>, LearnError> {
    let dim = features.first().map_or(0, FeatureVector::len);
    let mut data = Vec::with_capacity(features.len() * dim);
    for f in features {
        if f.len() != dim {
            return Err(LearnError::DimensionMismatch {
                expected: dim,
                got: f.len(),
            });
        }
        data.extend(f.values.iter().map(|&v| T::of(v)));
    }
    Ok(Grid::from_vec(features.len(), dim, data))
}

pub(crate) fn check_both_classes(labels: &[bool], err: LearnError) -> Result<(), LearnError> {
    if labels.iter().any(|&l| l) && labels.iter().any(|&l| !l) {
        Ok(())
    } else {
        Err(err)
    }
}

pub(crate) fn sigmoid<T: Real>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Fraction of predictions equal to the labels.
pub fn accuracy(predicted: &[bool], labels: &[bool]) -> f64 {
    assert_eq!(predicted.len(), labels.len());
    if labels.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64
}

/// SHA-256 over the little-endian bytes of every parameter, in order.
pub(crate) fn params_sha256<'a, T: Real>(chunks: impl IntoIterator<Item = &'a [T]>) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for chunk in chunks {
        for &v in chunk {
            h.update(v.le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[derive(Serialize, Deserialize)]
struct Envelope<M> {
    format_version: u32,
    kind: String,
    digest: String,
    model: M,
}

#[derive(Deserialize)]
struct Header {
    format_version: u32,
    kind: String,
}

pub(crate) fn envelope_to_json<M: Serialize>(kind: &str, digest: String, model: &M) -> Result<String, LearnError> {
    Ok(serde_json::to_string(&Envelope {
        format_version: MODEL_FORMAT_VERSION,
        kind: kind.to_string(),
        digest,
        model,
    })?)
}

pub(crate) fn envelope_from_json<M: serde::de::DeserializeOwned>(
    kind: &str,
    s: &str,
) -> Result<(String, M), LearnError> {
    let header: Header = serde_json::from_str(s)?;
    if header.format_version != MODEL_FORMAT_VERSION {
        return Err(LearnError::Format(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    if header.kind != kind {
        return Err(LearnError::Format(format!(
            "expected a {kind} model, found {}",
            header.kind
        )));
    }
    let env: Envelope<M> = serde_json::from_str(s)?;
    Ok((env.digest, env.model))
}
