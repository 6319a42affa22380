//! 8-neighbour, radius-1 local binary patterns and patch histograms.

use serde::{Deserialize, Serialize};

use super::{params_digest, Extractor, FeatureVector, TextureError};
use crate::grid::{Grid, Mask};

/// Catch-all code for non-uniform patterns in uniform-mapped code grids.
pub const NON_UNIFORM: u16 = 256;
/// 58 uniform patterns plus one catch-all bin.
pub const UNIFORM_BINS: usize = 59;

/// Neighbour offsets `(drow, dcol)`, bit 0 first: counterclockwise from east.
const RING: [(i32, i32); 8] = [(0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LbpVariant {
    /// Raw 8-bit sign codes.
    Basic,
    /// Sign codes with non-uniform patterns collapsed.
    Uniform,
    /// Sign component of completed LBP, uniform-mapped.
    ClbpSign,
    /// Magnitude component of completed LBP, uniform-mapped.
    ClbpMag,
}

impl LbpVariant {
    pub fn bins(self) -> usize {
        match self {
            Self::Basic => 256,
            _ => UNIFORM_BINS,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Basic => "basic",
            Self::Uniform => "uniform",
            Self::ClbpSign => "clbp_sign",
            Self::ClbpMag => "clbp_mag",
        }
    }
}

impl std::str::FromStr for LbpVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "basic" => Self::Basic,
            "uniform" => Self::Uniform,
            "clbp_sign" => Self::ClbpSign,
            "clbp_mag" => Self::ClbpMag,
            _ => return Err(format!("unknown LBP variant `{s}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LbpOutput {
    CodeImage,
    ConcatenatedHistograms,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbpConfig {
    pub variant: LbpVariant,
    pub patch_rows: usize,
    pub patch_cols: usize,
    /// Half-patch stride when set.
    pub overlap: bool,
}

impl Default for LbpConfig {
    fn default() -> Self {
        Self {
            variant: LbpVariant::Uniform,
            patch_rows: 19,
            patch_cols: 119,
            overlap: false,
        }
    }
}

impl LbpConfig {
    fn strides(&self) -> (usize, usize) {
        if self.overlap {
            ((self.patch_rows / 2).max(1), (self.patch_cols / 2).max(1))
        } else {
            (self.patch_rows, self.patch_cols)
        }
    }

    /// Number of patch positions (down, across) on a `rows x cols` code grid.
    pub fn patch_grid(&self, rows: usize, cols: usize) -> Result<(usize, usize), TextureError> {
        if self.patch_rows == 0 || self.patch_cols == 0 {
            return Err(TextureError::EmptyInput);
        }
        if self.patch_rows > rows || self.patch_cols > cols {
            return Err(TextureError::PatchLargerThanImage {
                patch_rows: self.patch_rows,
                patch_cols: self.patch_cols,
                rows,
                cols,
            });
        }
        let (sr, sc) = self.strides();
        Ok(((rows - self.patch_rows) / sr + 1, (cols - self.patch_cols) / sc + 1))
    }

    pub fn digest(&self, output: LbpOutput) -> String {
        let mut pairs = vec![
            ("neighbors", "8".to_string()),
            ("radius", "1".to_string()),
            ("variant", self.variant.as_str().to_string()),
            (
                "output",
                match output {
                    LbpOutput::CodeImage => "code_image",
                    LbpOutput::ConcatenatedHistograms => "concatenated_histograms",
                }
                .to_string(),
            ),
        ];
        if output == LbpOutput::ConcatenatedHistograms {
            pairs.push(("patch", format!("{}x{}", self.patch_rows, self.patch_cols)));
            pairs.push(("overlap", self.overlap.to_string()));
        }
        params_digest(pairs)
    }
}

pub(crate) fn check_size(rows: usize, cols: usize) -> Result<(), TextureError> {
    if rows < 3 || cols < 3 {
        return Err(TextureError::ImageTooSmall { rows, cols });
    }
    Ok(())
}

/// Circular 0/1 transitions in an 8-bit pattern.
pub fn transitions(code: u8) -> u32 {
    (code ^ code.rotate_right(1)).count_ones()
}

pub fn is_uniform(code: u8) -> bool {
    transitions(code) <= 2
}

/// Histogram bin of a code: identity for `basic`; for the uniform variants,
/// uniform codes get bins 0..58 in increasing code order and the catch-all
/// gets bin 58.
pub fn uniform_bin(code: u16) -> usize {
    static TABLE: std::sync::OnceLock<[u8; 256]> = std::sync::OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = [(UNIFORM_BINS - 1) as u8; 256];
        let mut next = 0u8;
        for c in 0..=255u8 {
            if is_uniform(c) {
                t[c as usize] = next;
                next += 1;
            }
        }
        t
    });
    match u8::try_from(code) {
        Ok(c) => table[c as usize] as usize,
        Err(_) => UNIFORM_BINS - 1,
    }
}

/// Code grid of size `(rows - 2) x (cols - 2)`; border pixels are dropped.
pub fn lbp_codes(img: &Grid<f64>, cfg: &LbpConfig) -> Result<Grid<u16>, TextureError> {
    let (rows, cols) = img.dims();
    check_size(rows, cols)?;
    let neighbour = |r: usize, c: usize, k: usize| {
        let (dr, dc) = RING[k];
        img.at((r as i32 + dr) as usize, (c as i32 + dc) as usize)
    };
    let threshold = match cfg.variant {
        LbpVariant::ClbpMag => {
            let mut total = 0.0;
            for r in 1..rows - 1 {
                for c in 1..cols - 1 {
                    let centre = img.at(r, c);
                    total += (0..8).map(|k| (neighbour(r, c, k) - centre).abs()).sum::<f64>();
                }
            }
            Some(total / ((rows - 2) * (cols - 2) * 8) as f64)
        }
        _ => None,
    };
    Ok(Grid::from_fn(rows - 2, cols - 2, |r, c| {
        let (r, c) = (r + 1, c + 1);
        let centre = img.at(r, c);
        let mut code = 0u8;
        for k in 0..8 {
            let n = neighbour(r, c, k);
            let bit = match threshold {
                Some(t) => (n - centre).abs() >= t,
                None => n >= centre,
            };
            code |= (bit as u8) << k;
        }
        match cfg.variant {
            LbpVariant::Basic => u16::from(code),
            _ if is_uniform(code) => u16::from(code),
            _ => NON_UNIFORM,
        }
    }))
}

fn bin_of(code: u16, variant: LbpVariant) -> usize {
    match variant {
        LbpVariant::Basic => code as usize,
        _ => uniform_bin(code),
    }
}

fn check_mask(codes: &Grid<u16>, mask: Option<&Mask>) -> Result<(), TextureError> {
    match mask {
        Some(m) if m.dims() != codes.dims() => Err(TextureError::MaskSize),
        _ => Ok(()),
    }
}

/// Code grid as a dense vector: bin index scaled to [0, 1], masked cells 0.
///
/// Panics if the mask does not match the code grid.
pub fn lbp_image_vector(codes: &Grid<u16>, mask: Option<&Mask>, cfg: &LbpConfig) -> FeatureVector {
    check_mask(codes, mask).expect("mask must match the code grid");
    let top = (cfg.variant.bins() - 1) as f64;
    let values = codes
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &code)| {
            if mask.is_some_and(|m| m.as_slice()[i]) {
                0.0
            } else {
                bin_of(code, cfg.variant) as f64 / top
            }
        })
        .collect();
    FeatureVector {
        values,
        extractor: Extractor::LbpImage,
        params_digest: cfg.digest(LbpOutput::CodeImage),
        source_image_id: String::new(),
        shape: Some(codes.dims()),
    }
}

/// Per-patch normalized histograms, patches concatenated row-major.
/// Masked cells are not counted; an empty patch yields all-zero bins.
pub fn lbp_histograms(codes: &Grid<u16>, mask: Option<&Mask>, cfg: &LbpConfig) -> Result<FeatureVector, TextureError> {
    check_mask(codes, mask)?;
    let (rows, cols) = codes.dims();
    let (down, across) = cfg.patch_grid(rows, cols)?;
    let (sr, sc) = cfg.strides();
    let bins = cfg.variant.bins();
    let mut values = vec![0.0; down * across * bins];
    for pr in 0..down {
        for pc in 0..across {
            let hist = &mut values[(pr * across + pc) * bins..][..bins];
            let mut counted = 0usize;
            for r in pr * sr..pr * sr + cfg.patch_rows {
                for c in pc * sc..pc * sc + cfg.patch_cols {
                    if mask.is_some_and(|m| m.at(r, c)) {
                        continue;
                    }
                    hist[bin_of(codes.at(r, c), cfg.variant)] += 1.0;
                    counted += 1;
                }
            }
            if counted > 0 {
                hist.iter_mut().for_each(|h| *h /= counted as f64);
            }
        }
    }
    Ok(FeatureVector {
        values,
        extractor: Extractor::LbpHist,
        params_digest: cfg.digest(LbpOutput::ConcatenatedHistograms),
        source_image_id: String::new(),
        shape: None,
    })
}
