use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::linalg::{gemm, Op, Real};
use super::{check_both_classes, params_sha256, sigmoid, LearnError, Standardizer, TrainConfig};
use crate::grid::Grid;

/// Largest first hidden layer; wider inputs are capped here.
pub const FIRST_LAYER_CAP: usize = 5000;

/// Hidden-layer tails following the `1.5 P` first layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MlpVariant {
    #[serde(rename = "20")]
    H20,
    #[serde(rename = "40")]
    H40,
    #[serde(rename = "300-40")]
    H300x40,
    #[serde(rename = "300-80")]
    H300x80,
    #[serde(rename = "600-80")]
    H600x80,
    #[serde(rename = "300-80-20")]
    H300x80x20,
}

impl MlpVariant {
    pub const ALL: [Self; 6] = [
        Self::H20,
        Self::H40,
        Self::H300x40,
        Self::H300x80,
        Self::H600x80,
        Self::H300x80x20,
    ];

    pub fn tail(self) -> &'static [usize] {
        match self {
            Self::H20 => &[20],
            Self::H40 => &[40],
            Self::H300x40 => &[300, 40],
            Self::H300x80 => &[300, 80],
            Self::H600x80 => &[600, 80],
            Self::H300x80x20 => &[300, 80, 20],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::H20 => "20",
            Self::H40 => "40",
            Self::H300x40 => "300-40",
            Self::H300x80 => "300-80",
            Self::H600x80 => "600-80",
            Self::H300x80x20 => "300-80-20",
        }
    }
}

impl FromStr for MlpVariant {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| LearnError::UnknownVariant(s.to_string()))
    }
}

/// Fully connected tanh network with a single sigmoid output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_size: usize,
    pub hidden: Vec<usize>,
}

impl MlpSpec {
    pub fn new(input_size: usize, hidden: Vec<usize>) -> Result<Self, LearnError> {
        if input_size == 0 || hidden.contains(&0) {
            return Err(LearnError::InvalidSpec("layer sizes must be >= 1".into()));
        }
        Ok(Self { input_size, hidden })
    }

    /// `[P, hidden..., 1]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut v = vec![self.input_size];
        v.extend(&self.hidden);
        v.push(1);
        v
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// First layer `min(round(1.5 P), 5000)` followed by the variant's tail.
pub fn mlp_topology_for(p: usize, variant: MlpVariant) -> Result<MlpSpec, LearnError> {
    if p == 0 {
        return Err(LearnError::InvalidSpec("input size must be >= 1".into()));
    }
    let first = ((1.5 * p as f64).round() as usize).min(FIRST_LAYER_CAP);
    let mut hidden = vec![first];
    hidden.extend(variant.tail());
    MlpSpec::new(p, hidden)
}

/// Weights stored `inputs x outputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    /// `out = x * W + b` for `n` rows of `x`.
    pub(crate) fn affine(&self, x: &[T], n: usize) -> Vec<T> {
        let mut z = Vec::with_capacity(n * self.outputs);
        for _ in 0..n {
            z.extend_from_slice(&self.bias);
        }
        gemm(
            Op::n(x, n, self.inputs),
            Op::n(&self.weights, self.inputs, self.outputs),
            T::one(),
            &mut z,
        );
        z
    }

    /// Parameter gradients from the layer input and the output delta;
    /// returns `delta * W^T` when `want_input` is set.
    pub(crate) fn backward(
        &self,
        x: &[T],
        delta: &[T],
        n: usize,
        grad: &mut Dense<T>,
        want_input: bool,
    ) -> Option<Vec<T>> {
        gemm(
            Op::t(x, n, self.inputs),
            Op::n(delta, n, self.outputs),
            T::zero(),
            &mut grad.weights,
        );
        grad.bias.iter_mut().for_each(|b| *b = T::zero());
        for row in delta.chunks(self.outputs) {
            for (g, &d) in grad.bias.iter_mut().zip(row) {
                *g = *g + d;
            }
        }
        want_input.then(|| {
            let mut dx = vec![T::zero(); n * self.inputs];
            gemm(
                Op::n(delta, n, self.outputs),
                Op::t(&self.weights, self.inputs, self.outputs),
                T::zero(),
                &mut dx,
            );
            dx
        })
    }

    pub(crate) fn momentum_step(&mut self, grad: &Dense<T>, velocity: &mut Dense<T>, lr: T, momentum: T) {
        let pairs = [
            (&mut self.weights, &grad.weights, &mut velocity.weights),
            (&mut self.bias, &grad.bias, &mut velocity.bias),
        ];
        for (p, g, v) in pairs {
            for ((p, &g), v) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                *v = momentum * *v - lr * g;
                *p = *p + *v;
            }
        }
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MlpModel<T> {
    pub spec: MlpSpec,
    pub layers: Vec<Dense<T>>,
    pub seed: u64,
    pub epochs: usize,
    /// Mean squared error on the training set for the kept parameters.
    pub train_loss: Option<f64>,
    /// Applied to inputs before the first layer.
    pub input_norm: Option<Standardizer<T>>,
}

impl<T: Real> MlpModel<T> {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let layers = spec
            .layer_sizes()
            .windows(2)
            .map(|w| Dense::zeros(w[0], w[1]))
            .collect();
        Self {
            spec: spec.clone(),
            layers,
            seed: 0,
            epochs: 0,
            train_loss: None,
            input_norm: None,
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(spec: &MlpSpec, rng: &mut impl Rng, seed: u64) -> Self {
        let mut m = Self::zeros(spec);
        m.seed = seed;
        for layer in &mut m.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in &mut layer.weights {
                *w = T::of(rng.random_range(-bound..bound));
            }
        }
        m
    }

    /// Activations of every layer for `n` input rows; the last is the score.
    fn forward(&self, x: &[T], n: usize) -> Vec<Vec<T>> {
        let last = self.layers.len() - 1;
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let input: &[T] = if l == 0 { x } else { &acts[l - 1] };
            let mut z = layer.affine(input, n);
            if l == last {
                z.iter_mut().for_each(|v| *v = sigmoid(*v));
            } else {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    /// Sigmoid scores for every row of `x`.
    pub fn predict_batch(&self, x: &Grid<T>) -> Result<Vec<f64>, LearnError> {
        self.check_dim(x.cols())?;
        Ok(self.scores(x.as_slice(), x.rows(), true))
    }

    fn scores(&self, x: &[T], rows: usize, normalize: bool) -> Vec<f64> {
        let dim = self.spec.input_size;
        let mut out = Vec::with_capacity(rows);
        let mut buf = Vec::new();
        for start in (0..rows).step_by(256) {
            let n = (rows - start).min(256);
            let mut chunk = &x[start * dim..(start + n) * dim];
            if let (true, Some(norm)) = (normalize, &self.input_norm) {
                buf.clear();
                buf.extend_from_slice(chunk);
                norm.apply(&mut buf);
                chunk = &buf;
            }
            out.extend(self.forward(chunk, n).pop().unwrap().into_iter().map(T::f64));
        }
        out
    }

    fn check_dim(&self, got: usize) -> Result<(), LearnError> {
        if got != self.spec.input_size {
            return Err(LearnError::DimensionMismatch {
                expected: self.spec.input_size,
                got,
            });
        }
        Ok(())
    }

    /// Mean squared error and its gradient over `n` rows. `x` is taken as
    /// already standardized.
    pub fn loss_and_gradient(&self, x: &[T], targets: &[T]) -> (f64, Vec<Dense<T>>) {
        let n = targets.len();
        let acts = self.forward(x, n);
        let score = acts.last().unwrap();
        let scale = T::of(2.0 / n as f64);
        let mut loss = 0.0;
        let mut delta: Vec<T> = score
            .iter()
            .zip(targets)
            .map(|(&s, &y)| {
                let e = s - y;
                loss += (e * e).f64();
                scale * e * s * (T::one() - s)
            })
            .collect();
        let mut grads: Vec<Dense<T>> = self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect();
        for l in (0..self.layers.len()).rev() {
            let input: &[T] = if l == 0 { x } else { &acts[l - 1] };
            let dx = self.layers[l].backward(input, &delta, n, &mut grads[l], l > 0);
            if let Some(mut dx) = dx {
                for (d, &a) in dx.iter_mut().zip(&acts[l - 1]) {
                    *d = *d * (T::one() - a * a);
                }
                delta = dx;
            }
        }
        (loss / n as f64, grads)
    }

    /// Loss on standardized rows.
    fn full_loss(&self, x: &Grid<T>, y: &[T]) -> f64 {
        self.scores(x.as_slice(), x.rows(), false)
            .iter()
            .zip(y)
            .map(|(s, t)| (s - t.f64()).powi(2))
            .sum::<f64>()
            / y.len() as f64
    }

    pub fn params(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params(&mut self, flat: &[T]) {
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for p in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *p = it.next().expect("parameter vector too short");
            }
        }
        assert!(it.next().is_none(), "parameter vector too long");
    }

    /// SHA-256 of all parameters, standardizer included.
    pub fn digest(&self) -> String {
        let norm = self.input_norm.iter().flat_map(Standardizer::chunks);
        params_sha256(
            self.layers
                .iter()
                .flat_map(|l| [&l.weights[..], &l.bias[..]])
                .chain(norm),
        )
    }

    pub fn to_json(&self) -> Result<String, LearnError> {
        super::envelope_to_json("mlp", self.digest(), self)
    }

    pub fn from_json(s: &str) -> Result<Self, LearnError> {
        let (digest, model): (String, Self) = super::envelope_from_json("mlp", s)?;
        if model.digest() != digest {
            return Err(LearnError::Format("parameter digest mismatch".into()));
        }
        Ok(model)
    }
}

/// Score in (0, 1); female (label 1) when `>= 0.5`.
pub fn mlp_predict<T: Real>(model: &MlpModel<T>, feature: &[T]) -> Result<f64, LearnError> {
    model.check_dim(feature.len())?;
    Ok(model.scores(feature, 1, true)[0])
}

/// Mini-batch momentum SGD on mean squared error.
///
/// The parameters with the lowest full training loss seen after any epoch
/// (or at initialization) are returned, so the final loss never exceeds
/// the initial one.
pub fn mlp_train<T: Real>(
    x: &Grid<T>,
    labels: &[bool],
    spec: &MlpSpec,
    cfg: &TrainConfig,
) -> Result<MlpModel<T>, LearnError> {
    cfg.validate()?;
    if x.cols() != spec.input_size {
        return Err(LearnError::DimensionMismatch {
            expected: spec.input_size,
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
    let mut model = MlpModel::<T>::init(spec, &mut rng, cfg.seed);
    let standardized;
    let x = if cfg.standardize {
        let norm = Standardizer::fit(x);
        standardized = norm.apply_grid(x);
        model.input_norm = Some(norm);
        &standardized
    } else {
        x
    };
    let y: Vec<T> = labels.iter().map(|&l| if l { T::one() } else { T::zero() }).collect();
    let mut velocity: Vec<Dense<T>> = model.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect();
    let (lr, mom) = (T::of(cfg.learning_rate), T::of(cfg.momentum));

    let mut best_loss = model.full_loss(x, &y);
    let mut best = model.params();
    let mut history = vec![best_loss];
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut batches = 0usize;
    let mut epochs = 0usize;
    let dim = x.cols();
    let mut xb: Vec<T> = Vec::with_capacity(cfg.batch_size * dim);
    let mut yb: Vec<T> = Vec::with_capacity(cfg.batch_size);

    'epochs: for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.batch_budget.is_some_and(|b| batches >= b) {
                break 'epochs;
            }
            xb.clear();
            yb.clear();
            for &i in chunk {
                xb.extend_from_slice(x.row(i));
                yb.push(y[i]);
            }
            let (_, grads) = model.loss_and_gradient(&xb, &yb);
            for ((layer, g), v) in model.layers.iter_mut().zip(&grads).zip(&mut velocity) {
                layer.momentum_step(g, v, lr, mom);
            }
            batches += 1;
        }
        epochs = epoch;
        if !model.layers.iter().all(Dense::is_finite) {
            break;
        }
        let loss = model.full_loss(x, &y);
        if loss < best_loss {
            best_loss = loss;
            best = model.params();
        }
        history.push(best_loss);
        let w = cfg.early_stop_window;
        if w > 0 && history.len() > w && history[history.len() - 1 - w] - best_loss < cfg.early_stop_delta {
            break;
        }
    }
    model.set_params(&best);
    model.epochs = epochs;
    model.train_loss = Some(best_loss);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn xor() -> (Grid<f64>, Vec<bool>) {
        let x = Grid::from_vec(4, 2, vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        (x, vec![false, true, true, false])
    }

    #[test]
    fn table_topologies() {
        assert_eq!(mlp_topology_for(2400, MlpVariant::H20).unwrap().hidden, vec![3600, 20]);
        assert_eq!(
            mlp_topology_for(60, MlpVariant::H300x40).unwrap().hidden,
            vec![90, 300, 40]
        );
        assert_eq!(mlp_topology_for(9600, MlpVariant::H20).unwrap().hidden, vec![5000, 20]);
        assert_eq!(mlp_topology_for(4800, MlpVariant::H20).unwrap().hidden, vec![5000, 20]);
        assert_eq!(
            mlp_topology_for(180, MlpVariant::H300x80x20).unwrap().layer_sizes(),
            vec![180, 270, 300, 80, 20, 1]
        );
        assert!(matches!(
            "30-20".parse::<MlpVariant>(),
            Err(LearnError::UnknownVariant(_))
        ));
        for v in MlpVariant::ALL {
            assert_eq!(v.as_str().parse::<MlpVariant>().unwrap(), v);
        }
    }

    proptest! {
        #[test]
        fn first_layer_rule(p in 1usize..20_000) {
            for v in MlpVariant::ALL {
                let spec = mlp_topology_for(p, v).unwrap();
                let want = (3 * p).div_ceil(2).min(5000);
                prop_assert_eq!(spec.hidden[0], want);
                prop_assert_eq!(&spec.hidden[1..], v.tail());
            }
        }
    }

    #[test]
    fn learns_xor() {
        let (x, y) = xor();
        let spec = MlpSpec::new(2, vec![8]).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.2,
            batch_size: 4,
            max_epochs: 5000,
            early_stop_window: 0,
            ..TrainConfig::mlp(3)
        };
        let m = mlp_train(&x, &y, &spec, &cfg).unwrap();
        let pred: Vec<bool> = m.predict_batch(&x).unwrap().iter().map(|&s| s >= 0.5).collect();
        assert_eq!(pred, y, "loss {:?}", m.train_loss);
    }

    #[test]
    fn zero_learning_rate_keeps_init() {
        let (x, y) = xor();
        let spec = MlpSpec::new(2, vec![5, 3]).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            max_epochs: 20,
            ..TrainConfig::mlp(11)
        };
        let m = mlp_train(&x, &y, &spec, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let init = MlpModel::<f64>::init(&spec, &mut rng, 11);
        assert_eq!(m.params(), init.params());
    }

    #[test]
    fn deterministic_and_never_worse() {
        let x = Grid::from_fn(40, 6, |r, c| ((r * 7 + c * 3) % 11) as f32 / 11.0);
        let y: Vec<bool> = (0..40).map(|r| (r * 7) % 11 > 5).collect();
        let spec = MlpSpec::new(6, vec![9]).unwrap();
        let cfg = TrainConfig {
            max_epochs: 30,
            ..TrainConfig::mlp(5)
        };
        let a = mlp_train(&x, &y, &spec, &cfg).unwrap();
        let b = mlp_train(&x, &y, &spec, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.digest(), b.digest());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let init = MlpModel::<f32>::init(&spec, &mut rng, 5);
        let yt: Vec<f32> = y.iter().map(|&l| l as u8 as f32).collect();
        assert!(a.train_loss.unwrap() <= init.full_loss(&x, &yt));
    }

    #[test]
    fn rejects_bad_inputs() {
        let (x, y) = xor();
        let spec = MlpSpec::new(3, vec![2]).unwrap();
        let cfg = TrainConfig::mlp(0);
        assert!(matches!(
            mlp_train(&x, &y, &spec, &cfg),
            Err(LearnError::DimensionMismatch { .. })
        ));
        let spec = MlpSpec::new(2, vec![2]).unwrap();
        assert!(matches!(
            mlp_train(&x, &[true; 4], &spec, &cfg),
            Err(LearnError::SingleClassTraining)
        ));
        let m = MlpModel::<f64>::zeros(&spec);
        assert!(mlp_predict(&m, &[1.0]).is_err());
    }

    #[test]
    fn closed_form_outputs() {
        let spec = MlpSpec::new(3, vec![4, 2]).unwrap();
        let zero = MlpModel::<f64>::zeros(&spec);
        assert_eq!(mlp_predict(&zero, &[5.0, -3.0, 9.0]).unwrap(), 0.5);

        let spec = MlpSpec::new(1, vec![1]).unwrap();
        let mut m = MlpModel::<f64>::zeros(&spec);
        m.set_params(&[1.0, 0.0, 1.0, 0.0]);
        let s = mlp_predict(&m, &[1.0]).unwrap();
        let want = 1.0 / (1.0 + (-(1.0f64.tanh())).exp());
        assert!((s - want).abs() < 1e-15);
        assert!((s - 0.6815).abs() < 5e-4);
    }

    #[test]
    fn outputs_stay_open_unit() {
        let spec = MlpSpec::new(4, vec![6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = MlpModel::<f64>::init(&spec, &mut rng, 9);
        for k in 0..50 {
            let v = k as f64 - 25.0;
            let s = mlp_predict(&m, &[v, -v, 0.5 * v, 1.0]).unwrap();
            assert!(s > 0.0 && s < 1.0);
        }
    }

    fn grad_check(spec: &MlpSpec, seed: u64) -> f64 {
        assert!(spec.param_count() <= 30);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = MlpModel::<f64>::init(spec, &mut rng, seed);
        for p in m.layers.iter_mut().flat_map(|l| l.bias.iter_mut()) {
            *p = rng.random_range(-0.5..0.5);
        }
        let n = 5;
        let x: Vec<f64> = (0..n * spec.input_size).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let (_, grads) = m.loss_and_gradient(&x, &y);
        let analytic: Vec<f64> = grads
            .iter()
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
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm: f64 =
            analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        diff / norm
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (seed, spec) in [
            (1, MlpSpec::new(3, vec![4]).unwrap()),
            (2, MlpSpec::new(3, vec![2, 3]).unwrap()),
            (3, MlpSpec::new(2, vec![3, 2, 2]).unwrap()),
        ] {
            let err = grad_check(&spec, seed);
            assert!(err < 1e-4, "{spec:?}: {err}");
        }
    }

    #[test]
    fn json_round_trip() {
        let spec = MlpSpec::new(3, vec![2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = MlpModel::<f32>::init(&spec, &mut rng, 4);
        let s = m.to_json().unwrap();
        assert_eq!(MlpModel::<f32>::from_json(&s).unwrap(), m);
        let tampered = s.replacen("\"weights\":[", "\"weights\":[0.5,", 1);
        assert!(MlpModel::<f32>::from_json(&tampered).is_err());
    }
}
