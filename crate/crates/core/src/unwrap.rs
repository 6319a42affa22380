//! Rubber-sheet polar normalization of the iris annulus and resampling of
//! normalized irises.
//!
//! Row `i` of a normalized iris sits at radial fraction `(i + 0.5) / rows`
//! between the pupil and limbus circles; column `j` at angle
//! `2π (j + 0.5) / cols`, measured from the positive x-axis and increasing
//! counterclockwise on screen (image y grows downward, so a sample point is
//! `(cx + r cos θ, cy - r sin θ)`).

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::pgm;
use crate::grid::{GrayImage, Grid, Mask};

/// Row counts of the standard normalized resolutions.
pub const STANDARD_RESOLUTIONS: [(usize, usize); 6] = [(40, 240), (20, 240), (10, 240), (5, 120), (3, 60), (2, 30)];

/// Base resolution that every standard resolution is resampled from.
pub const BASE_RESOLUTION: (usize, usize) = (40, 240);

#[derive(Debug, Error)]
pub enum UnwrapError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("iris annulus lies entirely outside the {width}x{height} image")]
    GeometryOutOfBounds { width: usize, height: usize },
    #[error("invalid output size {rows}x{cols}")]
    InvalidSize { rows: usize, cols: usize },
    #[error("occlusion mask is {mask_rows}x{mask_cols}, image is {rows}x{cols}")]
    MaskSize {
        mask_rows: usize,
        mask_cols: usize,
        rows: usize,
        cols: usize,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

impl Circle {
    pub fn new(cx: f64, cy: f64, r: f64) -> Self {
        Self { cx, cy, r }
    }

    #[inline]
    fn point(&self, cos: f64, sin: f64) -> (f64, f64) {
        (self.cx + self.r * cos, self.cy - self.r * sin)
    }
}

/// Pupil and limbus boundaries of one eye.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrisGeometry {
    pub pupil: Circle,
    pub limbus: Circle,
}

impl IrisGeometry {
    pub fn concentric(cx: f64, cy: f64, pupil_r: f64, limbus_r: f64) -> Self {
        Self {
            pupil: Circle::new(cx, cy, pupil_r),
            limbus: Circle::new(cx, cy, limbus_r),
        }
    }

    pub fn validate(&self) -> Result<(), UnwrapError> {
        let (p, l) = (&self.pupil, &self.limbus);
        let finite = [p.cx, p.cy, p.r, l.cx, l.cy, l.r].iter().all(|v| v.is_finite());
        if !finite || p.r <= 0.0 {
            return Err(UnwrapError::DegenerateGeometry(
                "radii must be finite and positive".into(),
            ));
        }
        if p.r >= l.r {
            return Err(UnwrapError::DegenerateGeometry(format!(
                "pupil radius {} >= limbus radius {}",
                p.r, l.r
            )));
        }
        if (p.cx - l.cx).hypot(p.cy - l.cy) >= l.r {
            return Err(UnwrapError::DegenerateGeometry(
                "pupil center lies outside the limbus circle".into(),
            ));
        }
        Ok(())
    }

    /// Cartesian sample position for radial fraction `rho` and angle `theta`.
    #[inline]
    pub fn sample_point(&self, rho: f64, theta: f64) -> (f64, f64) {
        let (sin, cos) = theta.sin_cos();
        let (px, py) = self.pupil.point(cos, sin);
        let (lx, ly) = self.limbus.point(cos, sin);
        ((1.0 - rho) * px + rho * lx, (1.0 - rho) * py + rho * ly)
    }
}

/// Polar-unwrapped iris: radial rows by angular columns.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedIris {
    pub texture: Grid<f64>,
    /// `true` = occluded or outside the image.
    pub mask: Mask,
}

impl NormalizedIris {
    pub fn new(texture: Grid<f64>, mask: Mask) -> Self {
        assert_eq!(texture.dims(), mask.dims(), "texture and mask dims differ");
        Self { texture, mask }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.texture.rows()
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.texture.cols()
    }

    pub fn occluded_fraction(&self) -> f64 {
        let n = self.mask.as_slice().iter().filter(|&&m| m).count();
        n as f64 / self.mask.len().max(1) as f64
    }

    /// Writes `<id>_tex.pgm` (rounded intensities) and `<id>_mask.pgm`
    /// (255 = occluded) into `dir`.
    pub fn save(&self, dir: &Path, id: &str) -> Result<(PathBuf, PathBuf), UnwrapError> {
        let tex_path = dir.join(format!("{id}_tex.pgm"));
        let mask_path = dir.join(format!("{id}_mask.pgm"));
        let tex: GrayImage = self.texture.map(|&v| v.round().clamp(0.0, 255.0) as u8);
        let mask: GrayImage = self.mask.map(|&m| if m { 255 } else { 0 });
        for (path, img) in [(&tex_path, &tex), (&mask_path, &mask)] {
            fs::write(path, pgm::encode(img)).map_err(|source| UnwrapError::Io {
                path: path.clone(),
                source,
            })?;
        }
        Ok((tex_path, mask_path))
    }

    /// Reads a pair written by [`NormalizedIris::save`].
    pub fn load(dir: &Path, id: &str) -> Result<Self, crate::corpus::CorpusError> {
        let tex = pgm::read(&dir.join(format!("{id}_tex.pgm")))?;
        let mask = pgm::read(&dir.join(format!("{id}_mask.pgm")))?;
        if tex.dims() != mask.dims() {
            return Err(crate::corpus::CorpusError::InvalidImage {
                id: id.to_string(),
                message: "texture and mask sizes differ".into(),
            });
        }
        Ok(Self::new(tex.map(|&v| f64::from(v)), mask.map(|&v| v >= 128)))
    }
}

#[inline]
fn bilinear(image: &GrayImage, x: f64, y: f64) -> f64 {
    let (w, h) = (image.cols(), image.rows());
    let x0 = (x.floor() as usize).min(w - 1);
    let y0 = (y.floor() as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let p = |r: usize, c: usize| f64::from(image.at(r, c));
    let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
    let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Unwraps the annulus between the pupil and limbus circles into a
/// `rows x cols` normalized iris.
///
/// Intensities are bilinearly interpolated. A cell is masked when the
/// nearest pixel of the occlusion mask is occluded, or when the sample point
/// falls outside the image (its texture value is then 0).
pub fn rubber_sheet(
    image: &GrayImage,
    geom: &IrisGeometry,
    occlusion: Option<&Mask>,
    rows: usize,
    cols: usize,
) -> Result<NormalizedIris, UnwrapError> {
    geom.validate()?;
    if rows == 0 || cols == 0 {
        return Err(UnwrapError::InvalidSize { rows, cols });
    }
    if let Some(m) = occlusion {
        if m.dims() != image.dims() {
            return Err(UnwrapError::MaskSize {
                mask_rows: m.rows(),
                mask_cols: m.cols(),
                rows: image.rows(),
                cols: image.cols(),
            });
        }
    }
    let (w, h) = (image.cols(), image.rows());
    let (max_x, max_y) = ((w - 1) as f64, (h - 1) as f64);
    let mut texture = Grid::filled(rows, cols, 0.0);
    let mut mask = Grid::filled(rows, cols, true);
    let mut inside = 0usize;
    for j in 0..cols {
        let theta = TAU * (j as f64 + 0.5) / cols as f64;
        for i in 0..rows {
            let rho = (i as f64 + 0.5) / rows as f64;
            let (x, y) = geom.sample_point(rho, theta);
            if !(0.0..=max_x).contains(&x) || !(0.0..=max_y).contains(&y) {
                continue;
            }
            inside += 1;
            texture.set(i, j, bilinear(image, x, y));
            let occluded = occlusion.is_some_and(|m| {
                let (c, r) = (x.round() as usize, y.round() as usize);
                m.at(r.min(h - 1), c.min(w - 1))
            });
            mask.set(i, j, occluded);
        }
    }
    if inside == 0 {
        return Err(UnwrapError::GeometryOutOfBounds { width: w, height: h });
    }
    Ok(NormalizedIris::new(texture, mask))
}

/// Source weights along one axis: area overlap when shrinking (or equal
/// size), linear interpolation when growing.
fn texture_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    if dst <= src {
        area_weights(src, dst)
    } else {
        (0..dst)
            .map(|d| {
                let pos = ((d as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64);
                let s0 = pos.floor() as usize;
                let f = pos - s0 as f64;
                if s0 + 1 < src && f > 0.0 {
                    vec![(s0, 1.0 - f), (s0 + 1, f)]
                } else {
                    vec![(s0, 1.0)]
                }
            })
            .collect()
    }
}

fn mask_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    if dst <= src {
        area_weights(src, dst)
    } else {
        (0..dst)
            .map(|d| vec![(((2 * d + 1) * src / (2 * dst)).min(src - 1), 1.0)])
            .collect()
    }
}

/// Integer-exact area overlap: destination cell `d` covers
/// `[d*src, (d+1)*src)` and source cell `s` covers `[s*dst, (s+1)*dst)`, both
/// in units of `1/(src*dst)` of the axis.
fn area_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    (0..dst)
        .map(|d| {
            let (lo, hi) = (d * src, (d + 1) * src);
            let first = lo / dst;
            let last = (hi - 1) / dst;
            (first..=last)
                .filter_map(|s| {
                    let overlap = hi.min((s + 1) * dst) - lo.max(s * dst);
                    (overlap > 0).then(|| (s, overlap as f64 / src as f64))
                })
                .collect()
        })
        .collect()
}

/// Resamples a normalized iris to `rows x cols`.
///
/// Shrinking area-averages the texture and marks a mask cell when more than
/// half of the covered source area is occluded. Growing interpolates the
/// texture bilinearly and takes the mask from the nearest source cell.
pub fn resample(n: &NormalizedIris, rows: usize, cols: usize) -> Result<NormalizedIris, UnwrapError> {
    if rows == 0 || cols == 0 {
        return Err(UnwrapError::InvalidSize { rows, cols });
    }
    if (rows, cols) == n.texture.dims() {
        return Ok(n.clone());
    }
    let texture = resample_with(&n.texture, rows, cols, texture_weights);
    let occluded = n.mask.map(|&m| if m { 1.0 } else { 0.0 });
    let frac = resample_with(&occluded, rows, cols, mask_weights);
    Ok(NormalizedIris::new(texture, frac.map(|&f| f > 0.5 + 1e-12)))
}

/// Resamples any real grid (e.g. a whole-eye image) with the texture rules
/// of [`resample`].
pub fn resample_grid(src: &Grid<f64>, rows: usize, cols: usize) -> Result<Grid<f64>, UnwrapError> {
    if rows == 0 || cols == 0 {
        return Err(UnwrapError::InvalidSize { rows, cols });
    }
    Ok(resample_with(src, rows, cols, texture_weights))
}

/// Source taps `(index, weight)` for every output index.
type Taps = Vec<Vec<(usize, f64)>>;

fn resample_with(src: &Grid<f64>, rows: usize, cols: usize, weights: fn(usize, usize) -> Taps) -> Grid<f64> {
    let wr = weights(src.rows(), rows);
    let wc = weights(src.cols(), cols);
    // columns first, then rows
    let mut tmp = Grid::filled(src.rows(), cols, 0.0);
    for r in 0..src.rows() {
        let row = src.row(r);
        for (j, ws) in wc.iter().enumerate() {
            tmp.set(r, j, ws.iter().map(|&(s, w)| w * row[s]).sum());
        }
    }
    Grid::from_fn(rows, cols, |i, j| wr[i].iter().map(|&(s, w)| w * tmp.at(s, j)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radial_image(size: usize, cx: f64, cy: f64, f: impl Fn(f64, f64) -> f64) -> GrayImage {
        Grid::from_fn(size, size, |y, x| {
            let dx = x as f64 - cx;
            let dy = cy - y as f64;
            f(dx.hypot(dy), dy.atan2(dx)).round().clamp(0.0, 255.0) as u8
        })
    }

    #[test]
    fn radially_symmetric_rows_are_constant() {
        let (c, rp, rl) = (100.0, 20.0, 80.0);
        let img = radial_image(201, c, c, |r, _| 60.0 + 1.5 * r);
        let geom = IrisGeometry::concentric(c, c, rp, rl);
        let n = rubber_sheet(&img, &geom, None, 40, 240).unwrap();
        for i in 0..n.rows() {
            let row = n.texture.row(i);
            let (lo, hi) = row
                .iter()
                .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            assert!(hi - lo <= 1.0, "row {i} spread {}", hi - lo);
        }
        assert!(n.mask.as_slice().iter().all(|&m| !m));
    }

    #[test]
    fn radial_ramp_matches_closed_form() {
        let (c, rp, rl) = (100.0, 25.0, 85.0);
        let img = radial_image(201, c, c, |r, _| 100.0 + 100.0 * (r - rp) / (rl - rp));
        let geom = IrisGeometry::concentric(c, c, rp, rl);
        let rows = 20;
        let n = rubber_sheet(&img, &geom, None, rows, 120).unwrap();
        for i in 0..rows {
            let expected = 100.0 + 100.0 * (i as f64 + 0.5) / rows as f64;
            for &v in n.texture.row(i) {
                assert!((v - expected).abs() <= 2.0, "row {i}: {v} vs {expected}");
            }
        }
    }

    #[test]
    fn top_half_occlusion_masks_upper_angles() {
        let size = 201;
        let c = 100.0;
        let img = Grid::filled(size, size, 128u8);
        let occlusion = Grid::from_fn(size, size, |y, _| (y as f64) < c);
        let geom = IrisGeometry::concentric(c, c, 20.0, 80.0);
        let cols = 240;
        let n = rubber_sheet(&img, &geom, Some(&occlusion), 10, cols).unwrap();
        for j in 0..cols {
            let theta = TAU * (j as f64 + 0.5) / cols as f64;
            let expected = theta > 0.0 && theta < std::f64::consts::PI;
            let near_boundary = j.abs_diff(0) <= 1
                || j.abs_diff(cols / 2 - 1) <= 1
                || j.abs_diff(cols / 2) <= 1
                || j.abs_diff(cols - 1) <= 1;
            for i in 0..n.rows() {
                if !near_boundary {
                    assert_eq!(*n.mask.get(i, j), expected, "cell ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn out_of_bounds_samples_are_masked() {
        let img = Grid::filled(60, 60, 200u8);
        let geom = IrisGeometry::concentric(5.0, 30.0, 5.0, 20.0);
        let n = rubber_sheet(&img, &geom, None, 8, 64).unwrap();
        assert!(n.mask.as_slice().iter().any(|&m| m));
        assert!(n.mask.as_slice().iter().any(|&m| !m));
        for (t, m) in n.texture.as_slice().iter().zip(n.mask.as_slice()) {
            if *m {
                assert_eq!(*t, 0.0);
            }
        }
    }

    #[test]
    fn geometry_errors() {
        let img = Grid::filled(50, 50, 0u8);
        let bad = IrisGeometry::concentric(25.0, 25.0, 10.0, 10.0);
        assert!(matches!(
            rubber_sheet(&img, &bad, None, 4, 8),
            Err(UnwrapError::DegenerateGeometry(_))
        ));
        let far = IrisGeometry::concentric(500.0, 500.0, 5.0, 10.0);
        assert!(matches!(
            rubber_sheet(&img, &far, None, 4, 8),
            Err(UnwrapError::GeometryOutOfBounds { .. })
        ));
        let off_center = IrisGeometry {
            pupil: Circle::new(40.0, 25.0, 2.0),
            limbus: Circle::new(25.0, 25.0, 10.0),
        };
        assert!(off_center.validate().is_err());
    }

    #[test]
    fn rotation_shifts_columns() {
        let (c, rp, rl) = (100.0, 20.0, 80.0);
        let cols = 120;
        let shift = 7usize;
        let dtheta = TAU * shift as f64 / cols as f64;
        let pattern = |r: f64, t: f64| 128.0 + 60.0 * (3.0 * t).sin() + 20.0 * (r / 9.0).cos();
        let img = radial_image(201, c, c, pattern);
        let rotated = radial_image(201, c, c, |r, t| pattern(r, t - dtheta));
        let geom = IrisGeometry::concentric(c, c, rp, rl);
        let a = rubber_sheet(&img, &geom, None, 10, cols).unwrap();
        let b = rubber_sheet(&rotated, &geom, None, 10, cols).unwrap();
        for i in 0..10 {
            for j in 0..cols {
                let expected = a.texture.at(i, j);
                let got = b.texture.at(i, (j + shift) % cols);
                assert!((expected - got).abs() <= 1.0, "({i},{j}) {expected} vs {got}");
            }
        }
    }

    #[test]
    fn enlarging_occlusion_never_unmasks() {
        let size = 120;
        let img = Grid::from_fn(size, size, |y, x| ((x * 7 + y * 3) % 256) as u8);
        let geom = IrisGeometry {
            pupil: Circle::new(61.0, 58.0, 14.0),
            limbus: Circle::new(60.0, 60.0, 45.0),
        };
        let small = Grid::from_fn(size, size, |y, x| y < 30 && x > 40);
        let large = Grid::from_fn(size, size, |y, x| y < 45 || (x > 90 && y > 70));
        assert!(small.as_slice().iter().zip(large.as_slice()).all(|(s, l)| !s || *l));
        let a = rubber_sheet(&img, &geom, Some(&small), 20, 120).unwrap();
        let b = rubber_sheet(&img, &geom, Some(&large), 20, 120).unwrap();
        for (ma, mb) in a.mask.as_slice().iter().zip(b.mask.as_slice()) {
            assert!(!ma || *mb);
        }
    }

    #[test]
    fn resample_identity_and_constants() {
        let n = NormalizedIris::new(
            Grid::from_fn(40, 240, |r, c| ((r * 31 + c * 7) % 256) as f64),
            Grid::from_fn(40, 240, |r, c| (r + c) % 5 == 0),
        );
        assert_eq!(resample(&n, 40, 240).unwrap(), n);

        let constant = NormalizedIris::new(Grid::filled(40, 240, 93.0), Grid::filled(40, 240, false));
        for &(r, c) in &STANDARD_RESOLUTIONS {
            let small = resample(&constant, r, c).unwrap();
            for &v in small.texture.as_slice() {
                assert!((v - 93.0).abs() < 1e-9);
            }
        }
        let up = resample(&constant, 50, 300).unwrap();
        assert!(up.texture.as_slice().iter().all(|v| (v - 93.0).abs() < 1e-9));
    }

    #[test]
    fn checkerboard_averages_to_mid_gray() {
        let tex = Grid::from_fn(4, 4, |r, c| if (r + c) % 2 == 0 { 0.0 } else { 255.0 });
        let n = NormalizedIris::new(tex, Grid::filled(4, 4, false));
        let small = resample(&n, 2, 2).unwrap();
        for &v in small.texture.as_slice() {
            assert!((v - 127.5).abs() < 1e-12);
            assert_eq!(v.round(), 128.0);
        }
    }

    #[test]
    fn mask_majority_rule() {
        // 2x2 blocks with 0..=4 occluded cells; only 3 and 4 exceed half
        let mask = Grid::from_vec(
            2,
            10,
            vec![
                false, false, true, false, true, true, true, true, true, true, //
                false, false, false, false, false, false, true, false, true, true,
            ],
        );
        let n = NormalizedIris::new(Grid::filled(2, 10, 0.0), mask);
        let small = resample(&n, 1, 5).unwrap();
        assert_eq!(small.mask.as_slice(), &[false, false, false, true, true]);
    }

    #[test]
    fn save_and_load_pair() {
        let dir = tempfile::tempdir().unwrap();
        let n = NormalizedIris::new(
            Grid::from_fn(3, 6, |r, c| (r * 50 + c) as f64 + 0.4),
            Grid::from_fn(3, 6, |r, _| r == 0),
        );
        let (tex, mask) = n.save(dir.path(), "e1").unwrap();
        assert!(tex.ends_with("e1_tex.pgm") && mask.ends_with("e1_mask.pgm"));
        let raw = fs::read(&mask).unwrap();
        assert_eq!(raw[raw.len() - 18..][..6], [255u8; 6]);
        let back = NormalizedIris::load(dir.path(), "e1").unwrap();
        assert_eq!(back.mask, n.mask);
        assert_eq!(back.texture.at(1, 2), 52.0);
    }
}
