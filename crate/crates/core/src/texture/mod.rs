//! Feature extraction from normalized irises and whole-eye images.
//!
//! Dense extractors (intensity, Gabor, LBP code images) zero-fill masked
//! cells, so the shape of the mask stays visible to a classifier.
//! Histogram extractors exclude masked cells from the counts instead.

mod gabor;
mod intensity;
mod lbp;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, Mask};
use crate::unwrap::NormalizedIris;

pub use gabor::{gabor_rows, GaborBank, GaborKernel, GaborOutput};
pub use intensity::{intensity_vector, mask_vector, mean_intensity, IntensityInput};
pub use lbp::{
    is_uniform, lbp_codes, lbp_histograms, lbp_image_vector, transitions, uniform_bin, LbpConfig, LbpOutput,
    LbpVariant, NON_UNIFORM, UNIFORM_BINS,
};

#[derive(Debug, Error, PartialEq)]
pub enum TextureError {
    #[error("wavelength {lambda} exceeds the {cols}-column row length")]
    WavelengthTooLarge { lambda: f64, cols: usize },
    #[error("invalid Gabor bank: {0}")]
    InvalidBank(String),
    #[error("image {rows}x{cols} is too small for a 3x3 neighbourhood")]
    ImageTooSmall { rows: usize, cols: usize },
    #[error("patch {patch_rows}x{patch_cols} does not fit the {rows}x{cols} code grid")]
    PatchLargerThanImage {
        patch_rows: usize,
        patch_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("mask size differs from the input grid")]
    MaskSize,
    #[error("every pixel is masked")]
    EmptySelection,
    #[error("empty input")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extractor {
    Intensity,
    Gabor,
    LbpImage,
    LbpHist,
    MaskOnly,
}

impl Extractor {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Intensity => "intensity",
            Self::Gabor => "gabor",
            Self::LbpImage => "lbp_image",
            Self::LbpHist => "lbp_hist",
            Self::MaskOnly => "mask_only",
        }
    }
}

/// Real-valued feature vector tagged with how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub extractor: Extractor,
    /// Canonical `key=value` pairs, sorted by key and joined with `;`.
    pub params_digest: String,
    pub source_image_id: String,
    /// `(rows, cols)` when the values are a row-major 2-D grid.
    pub shape: Option<(usize, usize)>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_source(mut self, id: impl Into<String>) -> Self {
        self.source_image_id = id.into();
        self
    }
}

/// Canonical parameter string: pairs sorted by key, `key=value` joined by `;`.
pub fn params_digest<K: AsRef<str>, V: ToString>(pairs: impl IntoIterator<Item = (K, V)>) -> String {
    let mut kv: Vec<(String, String)> = pairs
        .into_iter()
        .map(|(k, v)| (k.as_ref().to_string(), v.to_string()))
        .collect();
    kv.sort();
    kv.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

/// A configured extractor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    Intensity,
    Gabor(GaborBank),
    LbpImage(LbpConfig),
    LbpHist(LbpConfig),
    MaskOnly,
}

impl FeatureSpec {
    pub fn extractor(&self) -> Extractor {
        match self {
            Self::Intensity => Extractor::Intensity,
            Self::Gabor(_) => Extractor::Gabor,
            Self::LbpImage(_) => Extractor::LbpImage,
            Self::LbpHist(_) => Extractor::LbpHist,
            Self::MaskOnly => Extractor::MaskOnly,
        }
    }

    /// Feature length for an input of `rows x cols`, without extracting.
    pub fn output_len(&self, rows: usize, cols: usize) -> Result<usize, TextureError> {
        Ok(match self {
            Self::Intensity | Self::MaskOnly => rows * cols,
            Self::Gabor(bank) => {
                bank.validate(cols)?;
                bank.wavelengths.len() * rows * cols * bank.output.values_per_sample()
            }
            Self::LbpImage(_) => {
                lbp::check_size(rows, cols)?;
                (rows - 2) * (cols - 2)
            }
            Self::LbpHist(cfg) => {
                lbp::check_size(rows, cols)?;
                let (pr, pc) = cfg.patch_grid(rows - 2, cols - 2)?;
                pr * pc * cfg.variant.bins()
            }
        })
    }

    /// Extracts features from a normalized iris (or any texture + mask pair).
    pub fn extract(&self, n: &NormalizedIris) -> Result<FeatureVector, TextureError> {
        match self {
            Self::Intensity => intensity_vector(n),
            Self::MaskOnly => Ok(mask_vector(n)),
            Self::Gabor(bank) => gabor_rows(n, bank),
            Self::LbpImage(cfg) => {
                let codes = lbp_codes(&n.texture, cfg)?;
                Ok(lbp_image_vector(&codes, Some(&interior_mask(&n.mask)), cfg))
            }
            Self::LbpHist(cfg) => {
                let codes = lbp_codes(&n.texture, cfg)?;
                lbp_histograms(&codes, Some(&interior_mask(&n.mask)), cfg)
            }
        }
    }
}

/// Crops a mask to the cells that have a full 3x3 neighbourhood.
pub fn interior_mask(mask: &Mask) -> Mask {
    let (rows, cols) = mask.dims();
    if rows < 3 || cols < 3 {
        return Grid::filled(0, 0, false);
    }
    Grid::from_fn(rows - 2, cols - 2, |r, c| mask.at(r + 1, c + 1))
}
