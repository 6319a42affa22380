//! Three conv/pool stages, two ReLU fully connected layers and a softmax.
//!
//! Feature maps are stored row-major with channels innermost (HWC).
//! Convolutions are `k x k`, stride 1, same padding (the odd padding pixel
//! goes to the bottom/right); pooling is 2x2 stride 2 and keeps partial
//! windows, so each stage maps `d` to `ceil(d / 2)`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{gemm, Op, Real};
use super::mlp::Dense;
use super::{check_both_classes, params_sha256, LearnError, Standardizer, TrainConfig};
use crate::grid::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapShape {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
}

impl MapShape {
    pub fn len(&self) -> usize {
        self.rows * self.cols * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn pooled(&self) -> Self {
        Self {
            rows: self.rows.div_ceil(2),
            cols: self.cols.div_ceil(2),
            channels: self.channels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnSpec {
    pub input_rows: usize,
    pub input_cols: usize,
    pub kernel: usize,
    pub conv_features: Vec<usize>,
    pub fc: Vec<usize>,
    pub classes: usize,
}

impl CnnSpec {
    /// 4x4 kernels with 16, 32 and 64 maps, then FC 1024 and 1536.
    pub fn standard(input_rows: usize, input_cols: usize) -> Self {
        Self {
            input_rows,
            input_cols,
            kernel: 4,
            conv_features: vec![16, 32, 64],
            fc: vec![1024, 1536],
            classes: 2,
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        if self.input_rows == 0 || self.input_cols == 0 || self.kernel == 0 {
            return Err(LearnError::InvalidSpec("input and kernel sizes must be >= 1".into()));
        }
        if self.conv_features.contains(&0) || self.fc.contains(&0) {
            return Err(LearnError::InvalidSpec("layer sizes must be >= 1".into()));
        }
        if self.classes != 2 {
            return Err(LearnError::InvalidSpec("the output is a two-way softmax".into()));
        }
        Ok(())
    }

    /// Input map followed by the map after each conv + pool stage.
    pub fn shape_chain(&self) -> Vec<MapShape> {
        let mut shape = MapShape {
            rows: self.input_rows,
            cols: self.input_cols,
            channels: 1,
        };
        let mut chain = vec![shape];
        for &f in &self.conv_features {
            shape = MapShape { channels: f, ..shape }.pooled();
            chain.push(shape);
        }
        chain
    }

    pub fn flatten_len(&self) -> usize {
        self.shape_chain().last().unwrap().len()
    }

    fn pad(&self) -> (usize, usize) {
        let before = (self.kernel - 1) / 2;
        (before, self.kernel - 1 - before)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CnnModel<T> {
    pub spec: CnnSpec,
    /// Conv kernels as `(k * k * in_channels) x out_channels` matrices.
    pub convs: Vec<Dense<T>>,
    /// Hidden FC layers followed by the output layer.
    pub fcs: Vec<Dense<T>>,
    pub seed: u64,
    pub batches: usize,
    /// Applied to input pixels before the first convolution.
    pub input_norm: Option<Standardizer<T>>,
}

/// Per-image forward state kept for backpropagation.
struct ConvCache<T> {
    /// Post-ReLU map of every stage, before pooling.
    relu: Vec<Vec<T>>,
    /// Index into `relu` chosen by each pooled cell.
    argmax: Vec<Vec<u32>>,
    /// Input map of every stage.
    inputs: Vec<Vec<T>>,
}

fn im2col<T: Real>(input: &[T], shape: MapShape, k: usize, pad: usize, col: &mut Vec<T>) {
    let MapShape { rows, cols, channels } = shape;
    let run = k * channels;
    col.clear();
    col.resize(rows * cols * k * run, T::zero());
    for (y, out_row) in col.chunks_mut(cols * k * run).enumerate() {
        for (x, patch) in out_row.chunks_mut(k * run).enumerate() {
            // Columns x - pad .. x - pad + k, clipped to the map.
            let x0 = x as isize - pad as isize;
            let lo = (-x0).max(0) as usize;
            let hi = k.min((cols as isize - x0) as usize);
            for (ky, dst) in patch.chunks_mut(run).enumerate() {
                let iy = (y + ky) as isize - pad as isize;
                if iy < 0 || iy >= rows as isize || lo >= hi {
                    continue;
                }
                let at = (iy as usize * cols + (x0 + lo as isize) as usize) * channels;
                dst[lo * channels..hi * channels].copy_from_slice(&input[at..at + (hi - lo) * channels]);
            }
        }
    }
}

fn col2im<T: Real>(col: &[T], shape: MapShape, k: usize, pad: usize, out: &mut [T]) {
    let MapShape { rows, cols, channels } = shape;
    out.iter_mut().for_each(|v| *v = T::zero());
    let mut it = col.chunks(channels);
    for y in 0..rows {
        for x in 0..cols {
            for ky in 0..k {
                let iy = (y + ky) as isize - pad as isize;
                for kx in 0..k {
                    let ix = (x + kx) as isize - pad as isize;
                    let src = it.next().unwrap();
                    if iy >= 0 && ix >= 0 && iy < rows as isize && ix < cols as isize {
                        let at = (iy as usize * cols + ix as usize) * channels;
                        for (o, &s) in out[at..at + channels].iter_mut().zip(src) {
                            *o = *o + s;
                        }
                    }
                }
            }
        }
    }
}

fn max_pool<T: Real>(input: &[T], shape: MapShape) -> (Vec<T>, Vec<u32>) {
    let out = shape.pooled();
    let c = shape.channels;
    let mut vals = vec![T::neg_infinity(); out.len()];
    let mut idx = vec![0u32; out.len()];
    for oy in 0..out.rows {
        for ox in 0..out.cols {
            let o = (oy * out.cols + ox) * c;
            let (best, arg) = (&mut vals[o..o + c], &mut idx[o..o + c]);
            // Row-major scan of the window keeps the first maximum on ties.
            for y in 2 * oy..(2 * oy + 2).min(shape.rows) {
                for x in 2 * ox..(2 * ox + 2).min(shape.cols) {
                    let at = (y * shape.cols + x) * c;
                    for (ch, &v) in input[at..at + c].iter().enumerate() {
                        if v > best[ch] {
                            best[ch] = v;
                            arg[ch] = (at + ch) as u32;
                        }
                    }
                }
            }
        }
    }
    (vals, idx)
}

fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

impl<T: Real> CnnModel<T> {
    pub fn zeros(spec: &CnnSpec) -> Self {
        let chain = spec.shape_chain();
        let k2 = spec.kernel * spec.kernel;
        let convs = chain
            .windows(2)
            .map(|w| Dense::zeros(k2 * w[0].channels, w[1].channels))
            .collect();
        let mut sizes = vec![spec.flatten_len()];
        sizes.extend(&spec.fc);
        sizes.push(spec.classes);
        let fcs = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self {
            spec: spec.clone(),
            convs,
            fcs,
            seed: 0,
            batches: 0,
            input_norm: None,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: &CnnSpec, rng: &mut impl Rng, seed: u64) -> Self {
        let mut m = Self::zeros(spec);
        m.seed = seed;
        let k2 = spec.kernel * spec.kernel;
        let fill = |layer: &mut Dense<T>, fan_in: usize, fan_out: usize, rng: &mut dyn rand::RngCore| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut layer.weights {
                *w = T::of(rng.random_range(-bound..bound));
            }
        };
        for layer in &mut m.convs {
            let (fi, fo) = (layer.inputs, k2 * layer.outputs);
            fill(layer, fi, fo, rng);
        }
        for layer in &mut m.fcs {
            let (fi, fo) = (layer.inputs, layer.outputs);
            fill(layer, fi, fo, rng);
        }
        m
    }

    fn image_len(&self) -> usize {
        self.spec.input_rows * self.spec.input_cols
    }

    fn conv_forward(&self, image: &[T], col: &mut Vec<T>) -> (Vec<T>, ConvCache<T>) {
        let chain = self.spec.shape_chain();
        let (pad, _) = self.spec.pad();
        let k = self.spec.kernel;
        let mut cache = ConvCache {
            relu: Vec::with_capacity(self.convs.len()),
            argmax: Vec::with_capacity(self.convs.len()),
            inputs: Vec::with_capacity(self.convs.len()),
        };
        let mut current = image.to_vec();
        for (l, layer) in self.convs.iter().enumerate() {
            let shape = chain[l];
            im2col(&current, shape, k, pad, col);
            let mut z = layer.affine(col, shape.rows * shape.cols);
            z.iter_mut().for_each(|v| *v = v.max(T::zero()));
            let out_shape = MapShape {
                channels: layer.outputs,
                ..shape
            };
            let (pooled, idx) = max_pool(&z, out_shape);
            cache.inputs.push(std::mem::replace(&mut current, pooled));
            cache.relu.push(z);
            cache.argmax.push(idx);
        }
        (current, cache)
    }

    /// FC activations for a batch of flattened maps; the last entry holds
    /// softmax probabilities.
    fn fc_forward(&self, flat: &[T], n: usize) -> Vec<Vec<T>> {
        let last = self.fcs.len() - 1;
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(self.fcs.len());
        for (l, layer) in self.fcs.iter().enumerate() {
            let input: &[T] = if l == 0 { flat } else { &acts[l - 1] };
            let mut z = layer.affine(input, n);
            if l == last {
                z = z.chunks(layer.outputs).flat_map(softmax).collect();
            } else {
                z.iter_mut().for_each(|v| *v = v.max(T::zero()));
            }
            acts.push(z);
        }
        acts
    }

    /// Class probabilities `[male, female]` for each image.
    pub fn predict_batch(&self, x: &Grid<T>) -> Result<Vec<[f64; 2]>, LearnError> {
        self.check_dim(x.cols())?;
        let mut col = Vec::new();
        let mut out = Vec::with_capacity(x.rows());
        for start in (0..x.rows()).step_by(64) {
            let n = (x.rows() - start).min(64);
            let mut flat = Vec::with_capacity(n * self.spec.flatten_len());
            for i in start..start + n {
                let image = self.normalized(x.row(i));
                flat.extend(self.conv_forward(&image, &mut col).0);
            }
            let probs = self.fc_forward(&flat, n).pop().unwrap();
            out.extend(probs.chunks(2).map(|p| [p[0].f64(), p[1].f64()]));
        }
        Ok(out)
    }

    fn normalized<'a>(&self, image: &'a [T]) -> std::borrow::Cow<'a, [T]> {
        match &self.input_norm {
            Some(norm) => {
                let mut v = image.to_vec();
                norm.apply(&mut v);
                v.into()
            }
            None => image.into(),
        }
    }

    fn check_dim(&self, got: usize) -> Result<(), LearnError> {
        if got != self.image_len() {
            return Err(LearnError::DimensionMismatch {
                expected: self.image_len(),
                got,
            });
        }
        Ok(())
    }

    /// Mean cross-entropy and gradients (conv layers, then FC layers) for
    /// images stored back to back in `x`, taken as already standardized.
    pub fn loss_and_gradient(&self, x: &[T], labels: &[bool]) -> (f64, Vec<Dense<T>>, Vec<Dense<T>>) {
        let n = labels.len();
        let len = self.image_len();
        let flat_len = self.spec.flatten_len();
        let mut col = Vec::new();
        let mut flat = Vec::with_capacity(n * flat_len);
        let mut caches = Vec::with_capacity(n);
        for i in 0..n {
            let (f, c) = self.conv_forward(&x[i * len..(i + 1) * len], &mut col);
            flat.extend(f);
            caches.push(c);
        }
        let acts = self.fc_forward(&flat, n);
        let probs = acts.last().unwrap();
        let inv_n = T::of(1.0 / n as f64);
        let mut loss = 0.0;
        let mut delta = probs.clone();
        for (i, &label) in labels.iter().enumerate() {
            let y = label as usize;
            loss -= probs[2 * i + y].f64().max(1e-300).ln();
            delta[2 * i + y] = delta[2 * i + y] - T::one();
        }
        delta.iter_mut().for_each(|d| *d = *d * inv_n);

        let mut fc_grads: Vec<Dense<T>> = self.fcs.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect();
        for l in (0..self.fcs.len()).rev() {
            let input: &[T] = if l == 0 { &flat } else { &acts[l - 1] };
            let mut dx = self.fcs[l].backward(input, &delta, n, &mut fc_grads[l], true).unwrap();
            if l > 0 {
                for (d, &a) in dx.iter_mut().zip(&acts[l - 1]) {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                }
            }
            delta = dx;
        }

        let chain = self.spec.shape_chain();
        let (pad, _) = self.spec.pad();
        let k = self.spec.kernel;
        let mut conv_grads: Vec<Dense<T>> = self.convs.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect();
        for (i, cache) in caches.iter().enumerate() {
            let mut d_pooled = delta[i * flat_len..(i + 1) * flat_len].to_vec();
            for l in (0..self.convs.len()).rev() {
                let layer = &self.convs[l];
                let shape = chain[l];
                let pixels = shape.rows * shape.cols;
                let relu = &cache.relu[l];
                let mut dz = vec![T::zero(); relu.len()];
                for (&src, &g) in cache.argmax[l].iter().zip(&d_pooled) {
                    dz[src as usize] = dz[src as usize] + g;
                }
                for (d, &a) in dz.iter_mut().zip(relu) {
                    if a <= T::zero() {
                        *d = T::zero();
                    }
                }
                im2col(&cache.inputs[l], shape, k, pad, &mut col);
                let grad = &mut conv_grads[l];
                gemm(
                    Op::t(&col, pixels, layer.inputs),
                    Op::n(&dz, pixels, layer.outputs),
                    T::one(),
                    &mut grad.weights,
                );
                for row in dz.chunks(layer.outputs) {
                    for (g, &d) in grad.bias.iter_mut().zip(row) {
                        *g = *g + d;
                    }
                }
                if l > 0 {
                    let mut dcol = vec![T::zero(); pixels * layer.inputs];
                    gemm(
                        Op::n(&dz, pixels, layer.outputs),
                        Op::t(&layer.weights, layer.inputs, layer.outputs),
                        T::zero(),
                        &mut dcol,
                    );
                    let mut d_in = vec![T::zero(); shape.len()];
                    col2im(&dcol, shape, k, pad, &mut d_in);
                    d_pooled = d_in;
                }
            }
        }
        (loss / n as f64, conv_grads, fc_grads)
    }

    fn layers(&self) -> impl Iterator<Item = &Dense<T>> {
        self.convs.iter().chain(&self.fcs)
    }

    pub fn params(&self) -> Vec<T> {
        self.layers()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params(&mut self, flat: &[T]) {
        let mut it = flat.iter().copied();
        for l in self.convs.iter_mut().chain(self.fcs.iter_mut()) {
            for p in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *p = it.next().expect("parameter vector too short");
            }
        }
        assert!(it.next().is_none(), "parameter vector too long");
    }

    pub fn digest(&self) -> String {
        let norm = self.input_norm.iter().flat_map(Standardizer::chunks);
        params_sha256(self.layers().flat_map(|l| [&l.weights[..], &l.bias[..]]).chain(norm))
    }

    pub fn to_json(&self) -> Result<String, LearnError> {
        super::envelope_to_json("cnn", self.digest(), self)
    }

    pub fn from_json(s: &str) -> Result<Self, LearnError> {
        let (digest, model): (String, Self) = super::envelope_from_json("cnn", s)?;
        if model.digest() != digest {
            return Err(LearnError::Format("parameter digest mismatch".into()));
        }
        Ok(model)
    }
}

/// `[p_male, p_female]`, summing to 1.
pub fn cnn_predict<T: Real>(model: &CnnModel<T>, image: &[T]) -> Result<[f64; 2], LearnError> {
    model.check_dim(image.len())?;
    let mut col = Vec::new();
    let flat = model.conv_forward(&model.normalized(image), &mut col).0;
    let p = model.fc_forward(&flat, 1).pop().unwrap();
    Ok([p[0].f64(), p[1].f64()])
}

/// Momentum SGD on softmax cross-entropy for `batch_budget` mini-batches
/// (or `max_epochs` passes when no budget is set). Rows of `x` are images
/// of `spec.input_rows x spec.input_cols`.
pub fn cnn_train<T: Real>(
    x: &Grid<T>,
    labels: &[bool],
    spec: &CnnSpec,
    cfg: &TrainConfig,
) -> Result<CnnModel<T>, LearnError> {
    cfg.validate()?;
    spec.validate()?;
    let len = spec.input_rows * spec.input_cols;
    if x.cols() != len {
        return Err(LearnError::DimensionMismatch {
            expected: len,
            got: x.cols(),
        });
    }
    if x.rows() != labels.len() {
        return Err(LearnError::DimensionMismatch {
            expected: x.rows(),
            got: labels.len(),
        });
    }
    check_both_classes(labels, LearnError::SingleClassTraining)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = CnnModel::<T>::init(spec, &mut rng, cfg.seed);
    let standardized;
    let x = if cfg.standardize {
        let norm = Standardizer::fit(x);
        standardized = norm.apply_grid(x);
        model.input_norm = Some(norm);
        &standardized
    } else {
        x
    };
    let mut conv_v: Vec<Dense<T>> = model.convs.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect();
    let mut fc_v: Vec<Dense<T>> = model.fcs.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect();
    let (lr, mom) = (T::of(cfg.learning_rate), T::of(cfg.momentum));
    let budget = cfg
        .batch_budget
        .unwrap_or(cfg.max_epochs * x.rows().div_ceil(cfg.batch_size));

    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut xb = Vec::with_capacity(cfg.batch_size * len);
    let mut yb = Vec::with_capacity(cfg.batch_size);
    let mut done = 0;
    'outer: while done < budget {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            if done >= budget {
                break 'outer;
            }
            xb.clear();
            yb.clear();
            for &i in chunk {
                xb.extend_from_slice(x.row(i));
                yb.push(labels[i]);
            }
            let (_, conv_g, fc_g) = model.loss_and_gradient(&xb, &yb);
            for ((layer, g), v) in model.convs.iter_mut().zip(&conv_g).zip(&mut conv_v) {
                layer.momentum_step(g, v, lr, mom);
            }
            for ((layer, g), v) in model.fcs.iter_mut().zip(&fc_g).zip(&mut fc_v) {
                layer.momentum_step(g, v, lr, mom);
            }
            done += 1;
        }
    }
    if !model.layers().all(Dense::is_finite) {
        return Err(LearnError::Diverged);
    }
    model.batches = done;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> CnnSpec {
        CnnSpec {
            input_rows: 8,
            input_cols: 8,
            kernel: 4,
            conv_features: vec![2, 2, 2],
            fc: vec![4, 3],
            classes: 2,
        }
    }

    #[test]
    fn standard_shape_chain() {
        let spec = CnnSpec::standard(40, 240);
        let chain = spec.shape_chain();
        let last = chain.last().unwrap();
        assert_eq!((last.rows, last.cols, last.channels), (5, 30, 64));
        assert_eq!(spec.flatten_len(), 9600);
        let odd = CnnSpec::standard(10, 60).shape_chain();
        let last = odd.last().unwrap();
        assert_eq!((last.rows, last.cols), (2, 8));
        let m = CnnModel::<f32>::zeros(&spec);
        let sizes: Vec<(usize, usize)> = m.fcs.iter().map(|l| (l.inputs, l.outputs)).collect();
        assert_eq!(sizes, vec![(9600, 1024), (1024, 1536), (1536, 2)]);
        assert_eq!(m.convs[0].inputs, 16);
        assert_eq!(m.convs[2].inputs, 16 * 32);
    }

    #[test]
    fn zero_network_is_uniform() {
        let spec = tiny_spec();
        let m = CnnModel::<f64>::zeros(&spec);
        let img: Vec<f64> = (0..64).map(|i| i as f64 / 64.0).collect();
        assert_eq!(cnn_predict(&m, &img).unwrap(), [0.5, 0.5]);
        assert!(cnn_predict(&m, &img[..10]).is_err());
    }

    #[test]
    fn probabilities_sum_to_one() {
        let spec = tiny_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = CnnModel::<f64>::init(&spec, &mut rng, 2);
        for k in 0..20 {
            let img: Vec<f64> = (0..64)
                .map(|i| ((i * (k + 3)) % 17) as f64 * (k as f64 + 1.0))
                .collect();
            let p = cnn_predict(&m, &img).unwrap();
            assert!(p[0] >= 0.0 && p[1] >= 0.0);
            assert!((p[0] + p[1] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn same_padding_keeps_size() {
        let shape = MapShape {
            rows: 3,
            cols: 5,
            channels: 2,
        };
        let input: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let mut col = Vec::new();
        im2col(&input, shape, 4, 1, &mut col);
        assert_eq!(col.len(), 15 * 16 * 2);
        // output (0, 0): tap (1, 1) reads input (0, 0)
        let tap = (4 + 1) * 2; // kernel row 1, col 1, first of 2 channels
        assert_eq!(&col[tap..tap + 2], &[0.0, 1.0]);
        // tap (0, 0) lies in the top/left padding
        assert_eq!(&col[..2], &[0.0, 0.0]);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)>
        let shape = MapShape {
            rows: 5,
            cols: 6,
            channels: 3,
        };
        let x: Vec<f64> = (0..shape.len()).map(|i| (i as f64 * 0.7).sin()).collect();
        let mut col = Vec::new();
        im2col(&x, shape, 4, 1, &mut col);
        let c: Vec<f64> = (0..col.len()).map(|i| (i as f64 * 0.3).cos()).collect();
        let mut back = vec![0.0; shape.len()];
        col2im(&c, shape, 4, 1, &mut back);
        let lhs: f64 = col.iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn pool_keeps_partial_windows() {
        let shape = MapShape {
            rows: 3,
            cols: 3,
            channels: 1,
        };
        let input: Vec<f64> = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        let (v, idx) = max_pool(&input, shape);
        assert_eq!(v, vec![5.0, 6.0, 8.0, 9.0]);
        assert_eq!(idx, vec![4, 5, 7, 8]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let spec = tiny_spec();
        for seed in 0..3u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = CnnModel::<f64>::init(&spec, &mut rng, seed);
            for l in m.convs.iter_mut().chain(m.fcs.iter_mut()) {
                for b in &mut l.bias {
                    *b = rng.random_range(0.0..0.2);
                }
            }
            let x: Vec<f64> = (0..3 * 64).map(|_| rng.random_range(0.0..1.0)).collect();
            let y = [true, false, true];
            let (_, cg, fg) = m.loss_and_gradient(&x, &y);
            let analytic: Vec<f64> = cg
                .iter()
                .chain(&fg)
                .flat_map(|g| g.weights.iter().chain(&g.bias).copied())
                .collect();
            let base = m.params();
            let h = 1e-6;
            let numeric: Vec<f64> = (0..base.len())
                .map(|i| {
                    let mut p = base.clone();
                    p[i] += h;
                    m.set_params(&p);
                    let up = m.loss_and_gradient(&x, &y).0;
                    p[i] -= 2.0 * h;
                    m.set_params(&p);
                    let down = m.loss_and_gradient(&x, &y).0;
                    (up - down) / (2.0 * h)
                })
                .collect();
            m.set_params(&base);
            let diff = analytic
                .iter()
                .zip(&numeric)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            let norm =
                analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!(diff / norm < 1e-4, "seed {seed}: {}", diff / norm);
        }
    }

    /// Bright top-left quadrant (class 1) versus bright bottom-right (class 0).
    fn blobs(n: usize, seed: u64) -> (Grid<f32>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(n * 64);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = i % 2 == 0;
            for r in 0..8 {
                for c in 0..8 {
                    let lit = if label { r < 4 && c < 4 } else { r >= 4 && c >= 4 };
                    let base = if lit { 0.8 } else { 0.2 };
                    data.push(base + rng.random_range(-0.15..0.15f32));
                }
            }
            labels.push(label);
        }
        (Grid::from_vec(n, 64, data), labels)
    }

    #[test]
    fn learns_two_blobs() {
        let spec = CnnSpec {
            conv_features: vec![4, 4, 4],
            fc: vec![16, 16],
            ..tiny_spec()
        };
        let (x, y) = blobs(200, 1);
        let cfg = TrainConfig {
            learning_rate: 0.05,
            batch_budget: Some(150),
            ..TrainConfig::cnn(4)
        };
        let m = cnn_train(&x, &y, &spec, &cfg).unwrap();
        let (tx, ty) = blobs(50, 2);
        let probs = m.predict_batch(&tx).unwrap();
        let correct = probs.iter().zip(&ty).filter(|(p, &l)| (p[1] >= p[0]) == l).count();
        assert!(correct as f64 / 50.0 >= 0.9, "{correct}/50");
        let bright = tx.row(0);
        let p = cnn_predict(&m, bright).unwrap();
        assert!(p[1] > p[0]);

        let again = cnn_train(&x, &y, &spec, &cfg).unwrap();
        assert_eq!(again.digest(), m.digest());
        assert_eq!(CnnModel::<f32>::from_json(&m.to_json().unwrap()).unwrap(), m);
    }
}
