//! Row-wise 1-D complex Gabor filtering of normalized irises.

use serde::{Deserialize, Serialize};

use super::{params_digest, Extractor, FeatureVector, TextureError};
use crate::unwrap::NormalizedIris;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaborOutput {
    /// |response| scaled to [0, 1].
    Magnitude,
    /// Real and imaginary parts interleaved per sample, scaled to [-1, 1].
    RealImag,
}

impl GaborOutput {
    pub fn values_per_sample(self) -> usize {
        match self {
            Self::Magnitude => 1,
            Self::RealImag => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Magnitude => "magnitude",
            Self::RealImag => "real_imag",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaborBank {
    /// Carrier wavelengths in pixels (columns).
    pub wavelengths: Vec<f64>,
    /// Gaussian envelope width per wavelength, in pixels.
    pub sigmas: Vec<f64>,
    pub output: GaborOutput,
}

impl Default for GaborBank {
    fn default() -> Self {
        Self::with_sigma_factor(&[8.0, 16.0, 24.0, 32.0], 0.5, GaborOutput::Magnitude)
    }
}

impl GaborBank {
    pub fn with_sigma_factor(wavelengths: &[f64], factor: f64, output: GaborOutput) -> Self {
        Self {
            wavelengths: wavelengths.to_vec(),
            sigmas: wavelengths.iter().map(|l| l * factor).collect(),
            output,
        }
    }

    /// Checks the bank and that every wavelength fits in a `cols`-long row.
    pub fn validate(&self, cols: usize) -> Result<(), TextureError> {
        if self.wavelengths.is_empty() || self.wavelengths.len() != self.sigmas.len() {
            return Err(TextureError::InvalidBank(
                "need one sigma per wavelength and at least one wavelength".into(),
            ));
        }
        for (&lambda, &sigma) in self.wavelengths.iter().zip(&self.sigmas) {
            if !(lambda.is_finite() && sigma.is_finite()) || lambda < 2.0 || sigma <= 0.0 {
                return Err(TextureError::InvalidBank(format!(
                    "lambda {lambda} must be >= 2 and sigma {sigma} > 0"
                )));
            }
            if lambda > cols as f64 {
                return Err(TextureError::WavelengthTooLarge { lambda, cols });
            }
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        params_digest([
            ("lambda", join(&self.wavelengths)),
            ("output", self.output.as_str().to_string()),
            ("sigma", join(&self.sigmas)),
        ])
    }
}

/// Discrete DC-corrected complex Gabor kernel on taps `-half..=half`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaborKernel {
    pub lambda: f64,
    pub sigma: f64,
    pub half: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl GaborKernel {
    pub fn new(lambda: f64, sigma: f64) -> Self {
        let half = (3.0 * sigma).ceil() as usize;
        let omega = std::f64::consts::TAU / lambda;
        let taps: Vec<(f64, f64)> = (-(half as i64)..=half as i64)
            .map(|k| {
                let k = k as f64;
                ((-k * k / (2.0 * sigma * sigma)).exp(), omega * k)
            })
            .collect();
        let env_sum: f64 = taps.iter().map(|(e, _)| e).sum();
        // the envelope is symmetric, so the carrier's mean is real
        let dc = taps.iter().map(|(e, p)| e * p.cos()).sum::<f64>() / env_sum;
        let re = taps.iter().map(|(e, p)| e * (p.cos() - dc)).collect();
        let im = taps.iter().map(|(e, p)| e * p.sin()).collect();
        Self {
            lambda,
            sigma,
            half,
            re,
            im,
        }
    }

    /// Largest response magnitude any row with values in [0, 255] can
    /// produce (the kernel sums to zero, so inputs can be centered on 127.5).
    pub fn max_response(&self) -> f64 {
        127.5 * self.re.iter().zip(&self.im).map(|(r, i)| r.hypot(*i)).sum::<f64>()
    }

    /// Circular convolution of `row` with the kernel; taps wrap around
    /// when the kernel is longer than the row.
    pub fn filter_row(&self, row: &[f64], out_re: &mut [f64], out_im: &mut [f64]) {
        let n = row.len() as i64;
        let half = self.half as i64;
        for j in 0..row.len() {
            let (mut acc_re, mut acc_im) = (0.0, 0.0);
            for (t, (kr, ki)) in self.re.iter().zip(&self.im).enumerate() {
                let k = t as i64 - half;
                let x = row[(j as i64 - k).rem_euclid(n) as usize];
                acc_re += kr * x;
                acc_im += ki * x;
            }
            out_re[j] = acc_re;
            out_im[j] = acc_im;
        }
    }
}

/// Rows with masked cells replaced by the row's unmasked mean (the global
/// unmasked mean for fully masked rows, 0 if nothing is visible).
fn filled_rows(n: &NormalizedIris) -> Vec<Vec<f64>> {
    let (tex, mask) = (&n.texture, &n.mask);
    let visible: Vec<f64> = tex
        .as_slice()
        .iter()
        .zip(mask.as_slice())
        .filter(|(_, &m)| !m)
        .map(|(&v, _)| v)
        .collect();
    let global = if visible.is_empty() {
        0.0
    } else {
        visible.iter().sum::<f64>() / visible.len() as f64
    };
    (0..tex.rows())
        .map(|r| {
            let row = tex.row(r);
            let m = mask.row(r);
            let (sum, cnt) = row
                .iter()
                .zip(m)
                .filter(|(_, &masked)| !masked)
                .fold((0.0, 0usize), |(s, c), (&v, _)| (s + v, c + 1));
            let fill = if cnt > 0 { sum / cnt as f64 } else { global };
            row.iter()
                .zip(m)
                .map(|(&v, &masked)| if masked { fill } else { v })
                .collect()
        })
        .collect()
}

/// Filters every row with every kernel of the bank.
///
/// Layout: wavelength-major, then rows, then columns; in `real_imag` mode
/// each sample contributes `(re, im)`.
pub fn gabor_rows(n: &NormalizedIris, bank: &GaborBank) -> Result<FeatureVector, TextureError> {
    let (rows, cols) = n.texture.dims();
    if rows * cols == 0 {
        return Err(TextureError::EmptyInput);
    }
    bank.validate(cols)?;
    let filled = filled_rows(n);
    let mut values = Vec::with_capacity(bank.wavelengths.len() * rows * cols * bank.output.values_per_sample());
    let mut re = vec![0.0; cols];
    let mut im = vec![0.0; cols];
    for (&lambda, &sigma) in bank.wavelengths.iter().zip(&bank.sigmas) {
        let kernel = GaborKernel::new(lambda, sigma);
        let scale = kernel.max_response();
        for row in &filled {
            kernel.filter_row(row, &mut re, &mut im);
            match bank.output {
                GaborOutput::Magnitude => values.extend(re.iter().zip(&im).map(|(r, i)| r.hypot(*i) / scale)),
                GaborOutput::RealImag => {
                    for (r, i) in re.iter().zip(&im) {
                        values.push(r / scale);
                        values.push(i / scale);
                    }
                }
            }
        }
    }
    Ok(FeatureVector {
        values,
        extractor: Extractor::Gabor,
        params_digest: bank.digest(),
        source_image_id: String::new(),
        shape: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::f64::consts::TAU;

    fn iris_from_row(row: &[f64]) -> NormalizedIris {
        NormalizedIris::new(
            Grid::from_vec(1, row.len(), row.to_vec()),
            Grid::filled(1, row.len(), false),
        )
    }

    fn sinusoid(cols: usize, lambda: f64) -> Vec<f64> {
        (0..cols)
            .map(|j| 127.5 + 100.0 * (TAU * j as f64 / lambda).sin())
            .collect()
    }

    /// Closed-form response of a Gaussian-windowed DC-corrected carrier to
    /// `A sin(w j)`: with `E(w) = sum_k e(k) cos(w k)`, the two side bands
    /// are `G+ = E(0) - E(w0) E(w)/E(0)` at `+w` and
    /// `G- = E(w + w0) - E(w0) E(w)/E(0)` at `-w`.
    fn analytic_magnitude(lambda: f64, sigma: f64, signal_lambda: f64, amplitude: f64, j: usize) -> (f64, f64) {
        let half = (3.0 * sigma).ceil() as i64;
        let env = |k: i64| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp();
        let e_at = |w: f64| (-half..=half).map(|k| env(k) * (w * k as f64).cos()).sum::<f64>();
        let w0 = TAU / lambda;
        let w = TAU / signal_lambda;
        let (e0, ew0) = (e_at(0.0), e_at(w0));
        let c = ew0 / e0;
        // G(u) = sum_k g(k) e^{-iuk} with g(k) = e(k)(e^{i w0 k} - c), real by symmetry
        let g_at = |u: f64| e_at(w0 - u) - c * e_at(u);
        let (gp, gm) = (g_at(w), g_at(-w));
        let phase = w * j as f64;
        // y_j = A/(2i) (e^{i w j} G(w) - e^{-i w j} G(-w))
        let re = gp * phase.cos() - gm * phase.cos();
        let im = gp * phase.sin() + gm * phase.sin();
        let mag = 0.5 * amplitude * re.hypot(im);
        let scale = 127.5
            * (-half..=half)
                .map(|k| {
                    let p = w0 * k as f64;
                    env(k) * (p.cos() - c).hypot(p.sin())
                })
                .sum::<f64>();
        (mag, scale)
    }

    #[test]
    fn constant_row_gives_zero() {
        let n = iris_from_row(&[173.0; 240]);
        let fv = gabor_rows(&n, &GaborBank::default()).unwrap();
        assert!(fv.values.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn matched_sinusoid_matches_closed_form() {
        let (cols, lambda) = (240, 16.0);
        let bank = GaborBank::with_sigma_factor(&[lambda], 0.5, GaborOutput::Magnitude);
        let fv = gabor_rows(&iris_from_row(&sinusoid(cols, lambda)), &bank).unwrap();
        for j in 0..cols {
            let (mag, scale) = analytic_magnitude(lambda, 0.5 * lambda, lambda, 100.0, j);
            let expected = mag / scale;
            assert!(
                (fv.values[j] - expected).abs() <= 0.05 * expected,
                "col {j}: {} vs {expected}",
                fv.values[j]
            );
        }
    }

    #[test]
    fn mismatched_wavelength_is_suppressed() {
        let (cols, lambda) = (240, 16.0);
        let bank = GaborBank::with_sigma_factor(&[lambda], 1.0, GaborOutput::Magnitude);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let matched = gabor_rows(&iris_from_row(&sinusoid(cols, lambda)), &bank).unwrap();
        let off = gabor_rows(&iris_from_row(&sinusoid(cols, lambda / 4.0)), &bank).unwrap();
        assert!(mean(&off.values) < 0.1 * mean(&matched.values));
        let (mag, scale) = analytic_magnitude(lambda, lambda, lambda / 4.0, 100.0, 0);
        assert!((off.values[0] - mag / scale).abs() < 1e-6);
    }

    #[test]
    fn linear_in_dc_free_input() {
        let kernel = GaborKernel::new(24.0, 12.0);
        let x: Vec<f64> = (0..120)
            .map(|j| (TAU * j as f64 / 24.0).sin() * 40.0 + (TAU * j as f64 / 40.0).cos() * 17.0)
            .collect();
        let (mut r1, mut i1) = (vec![0.0; 120], vec![0.0; 120]);
        let (mut r2, mut i2) = (vec![0.0; 120], vec![0.0; 120]);
        kernel.filter_row(&x, &mut r1, &mut i1);
        let a = -2.75;
        let ax: Vec<f64> = x.iter().map(|v| a * v).collect();
        kernel.filter_row(&ax, &mut r2, &mut i2);
        for j in 0..120 {
            for (lhs, rhs) in [(r2[j], a * r1[j]), (i2[j], a * i1[j])] {
                assert!((lhs - rhs).abs() <= 1e-6 * rhs.abs().max(1e-9) + 1e-12);
            }
        }
    }

    #[test]
    fn masked_cells_take_row_mean() {
        let mut row = vec![80.0; 60];
        row[10] = 250.0;
        let mut mask = Grid::filled(1, 60, false);
        mask.set(0, 10, true);
        let n = NormalizedIris::new(Grid::from_vec(1, 60, row), mask);
        let fv = gabor_rows(&n, &GaborBank::with_sigma_factor(&[8.0], 0.5, GaborOutput::Magnitude)).unwrap();
        assert!(fv.values.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn rejects_bad_banks() {
        let n = iris_from_row(&[0.0; 30]);
        assert_eq!(
            gabor_rows(&n, &GaborBank::default()),
            Err(TextureError::WavelengthTooLarge { lambda: 32.0, cols: 30 })
        );
        let bad = GaborBank::with_sigma_factor(&[1.5], 0.5, GaborOutput::Magnitude);
        assert!(matches!(gabor_rows(&n, &bad), Err(TextureError::InvalidBank(_))));
    }

    #[test]
    fn magnitudes_stay_in_unit_range() {
        let row: Vec<f64> = (0..96).map(|j| if (j / 4) % 2 == 0 { 0.0 } else { 255.0 }).collect();
        let fv = gabor_rows(&iris_from_row(&row), &GaborBank::default()).unwrap();
        assert!(fv.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let ri = GaborBank {
            output: GaborOutput::RealImag,
            ..GaborBank::default()
        };
        let fv = gabor_rows(&iris_from_row(&row), &ri).unwrap();
        assert_eq!(fv.len(), 4 * 96 * 2);
        assert!(fv.values.iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }
}
