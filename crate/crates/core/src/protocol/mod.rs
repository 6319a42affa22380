//! Experiment engine: seeded splits, class balancing, the trial pipeline
//! and report aggregation.
//!
//! A trial is a split, a training run and an evaluation of the test side.
//! Trial `i` uses seed `base_seed + i`; every random choice inside the
//! trial derives from that seed, so trials can run on any number of
//! threads and still produce the same report.

mod pipeline;
mod report;
mod split;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{CorpusError, CosmeticsGroup, Gender};
use crate::learn::{LearnError, MlpVariant, TrainConfig};
use crate::texture::{FeatureSpec, TextureError};
use crate::unwrap::UnwrapError;

pub use pipeline::{plan_for, prepare, run_experiment, run_trial, run_trial_prepared, Prepared};
pub use report::{ExperimentReport, CSV_HEADER};
pub use split::{balance_by_gender, split_image_level, split_subject_disjoint, verify_disjoint, SplitMode, SplitPlan};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("need at least 2 {gender} subjects, found {found}")]
    TooFewSubjects { gender: Gender, found: usize },
    #[error("need at least 2 {gender} images, found {found}")]
    TooFewImages { gender: Gender, found: usize },
    #[error("both genders must be present")]
    SingleClassInput,
    #[error("image {0} is not in the corpus")]
    UnknownImage(String),
    #[error("image {0} has no iris geometry")]
    MissingGeometry(String),
    #[error("{field}: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error("training set for trial {trial} is empty after filtering")]
    EmptyTrainingSet { trial: usize },
    #[error("failed to build a worker pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Unwrap(#[from] UnwrapError),
    #[error(transparent)]
    Texture(#[from] TextureError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    /// The whole eye image, resampled to the configured resolution.
    WholeEye,
    /// The rubber-sheet iris with its occlusion mask.
    NormalizedIris,
    /// Only the occlusion mask of the normalized iris.
    MaskOnly,
}

impl InputKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::WholeEye => "whole_eye",
            Self::NormalizedIris => "normalized_iris",
            Self::MaskOnly => "mask_only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierSpec {
    Mlp {
        variant: MlpVariant,
    },
    Cnn {
        conv_features: Vec<usize>,
        fc: Vec<usize>,
    },
    /// Threshold on the mean intensity of the input (occluded fraction for
    /// `mask_only`).
    Threshold,
}

impl ClassifierSpec {
    pub fn cnn_standard() -> Self {
        Self::Cnn {
            conv_features: vec![16, 32, 64],
            fc: vec![1024, 1536],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Mlp { .. } => "mlp",
            Self::Cnn { .. } => "cnn",
            Self::Threshold => "threshold",
        }
    }
}

/// Which cosmetics groups may appear in the training set. Test sets always
/// keep every image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupFilter {
    All,
    MalesPlusFnc,
    MalesPlusFwc,
}

impl GroupFilter {
    pub fn admits(self, group: Option<CosmeticsGroup>) -> bool {
        match self {
            Self::All => true,
            Self::MalesPlusFnc => matches!(group, Some(CosmeticsGroup::Male | CosmeticsGroup::Fnc)),
            Self::MalesPlusFwc => matches!(group, Some(CosmeticsGroup::Male | CosmeticsGroup::Fwc)),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::All => "all",
            Self::MalesPlusFnc => "males_plus_fnc",
            Self::MalesPlusFwc => "males_plus_fwc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Manifest path or `preset:<name>[:subjects[:seed]]`; informational
    /// here, resolved by the caller.
    pub corpus: String,
    pub input: InputKind,
    /// (rows, cols) of the classifier input.
    pub resolution: (usize, usize),
    pub feature: FeatureSpec,
    pub classifier: ClassifierSpec,
    /// `seed` is replaced by the trial seed.
    pub train: TrainConfig,
    pub n_trials: usize,
    pub train_fraction: f64,
    pub split: SplitMode,
    pub balance_classes: bool,
    pub group_filter: GroupFilter,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus: String::new(),
            input: InputKind::NormalizedIris,
            resolution: (40, 240),
            feature: FeatureSpec::Intensity,
            classifier: ClassifierSpec::Mlp {
                variant: MlpVariant::H20,
            },
            train: TrainConfig::mlp(0),
            n_trials: 10,
            train_fraction: 0.8,
            split: SplitMode::SubjectDisjoint,
            balance_classes: true,
            group_filter: GroupFilter::All,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |field: &'static str, message: String| Err(ProtocolError::InvalidConfig { field, message });
        if self.n_trials == 0 {
            return bad("n_trials", "must be at least 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction", format!("{} is outside (0, 1)", self.train_fraction));
        }
        if self.resolution.0 == 0 || self.resolution.1 == 0 {
            return bad("resolution", "rows and cols must be >= 1".into());
        }
        let mask_feature = self.feature == FeatureSpec::MaskOnly;
        if (self.input == InputKind::MaskOnly) != mask_feature && self.classifier != ClassifierSpec::Threshold {
            return bad("feature", "mask_only input and mask_only feature go together".into());
        }
        if let ClassifierSpec::Cnn { conv_features, fc } = &self.classifier {
            if matches!(self.feature, FeatureSpec::Gabor(_) | FeatureSpec::LbpHist(_)) {
                return bad(
                    "feature",
                    "the CNN needs a 2-D feature (intensity, lbp_image or mask_only)".into(),
                );
            }
            if conv_features.is_empty() || conv_features.contains(&0) || fc.contains(&0) {
                return bad("cnn_features", "layer sizes must be >= 1".into());
            }
        }
        if self.classifier != ClassifierSpec::Threshold {
            let (rows, cols) = self.resolution;
            if let Err(e) = self.feature.output_len(rows, cols) {
                return bad("feature", e.to_string());
            }
        }
        self.train.validate().or_else(|e| bad("train", e.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }
}

/// Independent sub-seed for one use inside a trial.
pub(crate) fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    /// Female predicted female.
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub male: usize,
    pub fnc: usize,
    pub fwc: usize,
    /// Females with unknown cosmetics.
    pub ungrouped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub image_id: String,
    pub female: bool,
    pub predicted_female: bool,
    /// Classifier score: sigmoid output, softmax female probability or raw
    /// mean intensity.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_index: usize,
    pub seed: u64,
    pub train_size: usize,
    pub test_size: usize,
    pub overall: f64,
    pub male_acc: Option<f64>,
    pub fnc_acc: Option<f64>,
    pub fwc_acc: Option<f64>,
    pub group_counts: GroupCounts,
    pub confusion: Confusion,
    /// EER of the test scores for males against each female group.
    pub male_vs_fnc_eer: Option<f64>,
    pub male_vs_fwc_eer: Option<f64>,
    pub predictions: Vec<Prediction>,
}

impl TrialResult {
    pub fn group_acc(&self, group: CosmeticsGroup) -> Option<f64> {
        match group {
            CosmeticsGroup::Male => self.male_acc,
            CosmeticsGroup::Fnc => self.fnc_acc,
            CosmeticsGroup::Fwc => self.fwc_acc,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::texture::LbpConfig;

    #[test]
    fn config_validation_names_fields() {
        let cfg = ExperimentConfig {
            train_fraction: 1.2,
            ..Default::default()
        };
        match cfg.validate() {
            Err(ProtocolError::InvalidConfig { field, .. }) => assert_eq!(field, "train_fraction"),
            other => panic!("{other:?}"),
        }
        let cfg = ExperimentConfig {
            input: InputKind::MaskOnly,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            feature: FeatureSpec::LbpHist(LbpConfig::default()),
            resolution: (10, 60),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn digest_tracks_semantic_fields() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            n_trials: 3,
            ..a.clone()
        };
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), a.clone().digest());
    }

    #[test]
    fn filters() {
        use CosmeticsGroup::*;
        assert!(GroupFilter::MalesPlusFwc.admits(Some(Fwc)));
        assert!(!GroupFilter::MalesPlusFwc.admits(Some(Fnc)));
        assert!(!GroupFilter::MalesPlusFnc.admits(None));
        assert!(GroupFilter::All.admits(None));
    }
}
