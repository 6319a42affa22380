use super::{params_digest, Extractor, FeatureVector, TextureError};
use crate::corpus::EyeImage;
use crate::grid::{GrayImage, Grid, Mask};
use crate::unwrap::NormalizedIris;

/// Anything that can be read as a grid of gray levels with optional masking.
pub trait IntensityInput {
    fn shape(&self) -> (usize, usize);
    /// Gray level of cell `index` (row-major), `None` when masked.
    fn cell(&self, index: usize) -> Option<f64>;
}

impl IntensityInput for NormalizedIris {
    fn shape(&self) -> (usize, usize) {
        self.texture.dims()
    }

    fn cell(&self, index: usize) -> Option<f64> {
        (!self.mask.as_slice()[index]).then(|| self.texture.as_slice()[index])
    }
}

impl IntensityInput for GrayImage {
    fn shape(&self) -> (usize, usize) {
        self.dims()
    }

    fn cell(&self, index: usize) -> Option<f64> {
        Some(f64::from(self.as_slice()[index]))
    }
}

impl IntensityInput for Grid<f64> {
    fn shape(&self) -> (usize, usize) {
        self.dims()
    }

    fn cell(&self, index: usize) -> Option<f64> {
        Some(self.as_slice()[index])
    }
}

impl IntensityInput for EyeImage {
    fn shape(&self) -> (usize, usize) {
        self.pixels.dims()
    }

    fn cell(&self, index: usize) -> Option<f64> {
        self.pixels.cell(index)
    }
}

/// Row-major gray levels scaled to [0, 1]; masked cells become 0.
pub fn intensity_vector<I: IntensityInput + ?Sized>(input: &I) -> Result<FeatureVector, TextureError> {
    let (rows, cols) = input.shape();
    if rows * cols == 0 {
        return Err(TextureError::EmptyInput);
    }
    let values = (0..rows * cols)
        .map(|i| input.cell(i).map_or(0.0, |v| v / 255.0))
        .collect();
    Ok(FeatureVector {
        values,
        extractor: Extractor::Intensity,
        params_digest: params_digest([("masked", "zero"), ("scale", "1/255")]),
        source_image_id: String::new(),
        shape: Some((rows, cols)),
    })
}

/// Row-major occlusion mask: occluded = 1, visible = 0.
pub fn mask_vector(n: &NormalizedIris) -> FeatureVector {
    FeatureVector {
        values: n.mask.as_slice().iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        extractor: Extractor::MaskOnly,
        params_digest: params_digest([("occluded", "1")]),
        source_image_id: String::new(),
        shape: Some(n.mask.dims()),
    }
}

/// Mean gray level over unmasked cells (all cells when `mask` is `None`).
pub fn mean_intensity<I: IntensityInput + ?Sized>(input: &I, mask: Option<&Mask>) -> Result<f64, TextureError> {
    let (rows, cols) = input.shape();
    if let Some(m) = mask {
        if m.dims() != (rows, cols) {
            return Err(TextureError::MaskSize);
        }
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..rows * cols {
        if mask.is_some_and(|m| m.as_slice()[i]) {
            continue;
        }
        if let Some(v) = input.cell(i) {
            sum += v;
            count += 1;
        }
    }
    if count == 0 {
        return Err(TextureError::EmptySelection);
    }
    Ok(sum / count as f64)
}
