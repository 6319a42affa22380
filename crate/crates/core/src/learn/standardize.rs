use serde::{Deserialize, Serialize};

use super::Real;
use crate::grid::Grid;

/// Per-feature `(x - mean) * inv_std`, fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    /// 1 for features that are constant over the training rows.
    pub inv_std: Vec<T>,
}

impl<T: Real> Standardizer<T> {
    pub fn fit(x: &Grid<T>) -> Self {
        let (n, dim) = x.dims();
        let mut sum = vec![0.0f64; dim];
        let mut sq = vec![0.0f64; dim];
        for r in 0..n {
            for (k, &v) in x.row(r).iter().enumerate() {
                let v = v.f64();
                sum[k] += v;
                sq[k] += v * v;
            }
        }
        let mut mean = Vec::with_capacity(dim);
        let mut inv_std = Vec::with_capacity(dim);
        for k in 0..dim {
            let m = sum[k] / n as f64;
            let var = (sq[k] / n as f64 - m * m).max(0.0);
            mean.push(T::of(m));
            inv_std.push(T::of(if var > 1e-12 { 1.0 / var.sqrt() } else { 1.0 }));
        }
        Self { mean, inv_std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Standardizes rows stored back to back in `rows`.
    pub fn apply(&self, rows: &mut [T]) {
        for row in rows.chunks_mut(self.dim()) {
            for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.inv_std) {
                *v = (*v - m) * s;
            }
        }
    }

    pub fn apply_grid(&self, x: &Grid<T>) -> Grid<T> {
        let mut data = x.as_slice().to_vec();
        self.apply(&mut data);
        Grid::from_vec(x.rows(), x.cols(), data)
    }

    pub(crate) fn chunks(&self) -> [&[T]; 2] {
        [&self.mean, &self.inv_std]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_mean_unit_variance() {
        let x = Grid::from_fn(5, 3, |r, c| if c == 2 { 7.0 } else { (r * (c + 1)) as f64 });
        let s = Standardizer::fit(&x);
        let z = s.apply_grid(&x);
        for c in 0..2 {
            let col: Vec<f64> = (0..5).map(|r| *z.get(r, c)).collect();
            let m = col.iter().sum::<f64>() / 5.0;
            let v = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 5.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
        assert!((0..5).all(|r| *z.get(r, 2) == 0.0));
    }
}
