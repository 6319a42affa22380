use std::collections::HashMap;

use rayon::prelude::*;

use super::split::{balance_by_gender, split_image_level, split_subject_disjoint, SplitMode, SplitPlan};
use super::{
    derive_seed, ClassifierSpec, Confusion, ExperimentConfig, ExperimentReport, GroupCounts, InputKind, Prediction,
    ProtocolError, TrialResult,
};
use crate::corpus::{Corpus, CorpusEntry, CosmeticsGroup, Gender};
use crate::grid::Grid;
use crate::learn::{cnn_train, mlp_topology_for, mlp_train, roc_and_eer, CnnSpec, ThresholdClassifier};
use crate::texture::{mean_intensity, FeatureSpec};
use crate::unwrap::{resample, resample_grid, rubber_sheet, NormalizedIris, BASE_RESOLUTION};

const SPLIT_TAG: u64 = 1;
const BALANCE_TAG: u64 = 2;
const TRAIN_TAG: u64 = 3;

/// Per-image classifier inputs, extracted once per experiment.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub ids: Vec<String>,
    pub female: Vec<bool>,
    pub groups: Vec<Option<CosmeticsGroup>>,
    /// One row per image; empty for the threshold classifier.
    pub features: Grid<f32>,
    /// 2-D layout of a feature row, when it has one.
    pub shape: Option<(usize, usize)>,
    /// Threshold-classifier scores; empty for other classifiers.
    pub scores: Vec<f64>,
    index: HashMap<String, usize>,
}

impl Prepared {
    pub fn position(&self, id: &str) -> Result<usize, ProtocolError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| ProtocolError::UnknownImage(id.to_string()))
    }
}

/// Input grid for one image at the configured resolution.
fn input_of(entry: &CorpusEntry, cfg: &ExperimentConfig) -> Result<NormalizedIris, ProtocolError> {
    let (rows, cols) = cfg.resolution;
    if cfg.input == InputKind::WholeEye {
        let pixels = entry.image.pixels.map(|&p| f64::from(p));
        let texture = resample_grid(&pixels, rows, cols)?;
        return Ok(NormalizedIris::new(texture, Grid::filled(rows, cols, false)));
    }
    let geom = entry
        .geometry
        .as_ref()
        .ok_or_else(|| ProtocolError::MissingGeometry(entry.image.image_id.clone()))?;
    let (br, bc) = BASE_RESOLUTION;
    let base = rubber_sheet(&entry.image.pixels, geom, entry.occlusion.as_ref(), br, bc)?;
    Ok(resample(&base, rows, cols)?)
}

fn threshold_score(n: &NormalizedIris, input: InputKind) -> Result<f64, ProtocolError> {
    Ok(match input {
        InputKind::MaskOnly => n.occluded_fraction(),
        InputKind::WholeEye => mean_intensity(&n.texture, None)?,
        InputKind::NormalizedIris => mean_intensity(&n.texture, Some(&n.mask))?,
    })
}

/// Extracts every image's features (or threshold score). Images are
/// processed in parallel on the current rayon pool; results keep corpus
/// order.
pub fn prepare(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<Prepared, ProtocolError> {
    cfg.validate()?;
    let threshold = cfg.classifier == ClassifierSpec::Threshold;
    let feature = if cfg.input == InputKind::MaskOnly {
        FeatureSpec::MaskOnly
    } else {
        cfg.feature.clone()
    };
    // (feature values, 2-D shape, mean intensity) per image
    type Row = (Vec<f32>, Option<(usize, usize)>, f64);
    let rows: Vec<Row> = corpus
        .entries()
        .par_iter()
        .map(|entry| {
            let n = input_of(entry, cfg)?;
            if threshold {
                return Ok((Vec::new(), None, threshold_score(&n, cfg.input)?));
            }
            let fv = feature.extract(&n)?;
            Ok((fv.values.iter().map(|&v| v as f32).collect(), fv.shape, 0.0))
        })
        .collect::<Result<_, ProtocolError>>()?;
    let dim = rows.first().map_or(0, |r| r.0.len());
    let shape = rows.first().and_then(|r| r.1);
    let mut data = Vec::with_capacity(rows.len() * dim);
    let mut scores = Vec::new();
    for (values, _, score) in rows {
        data.extend(values);
        if threshold {
            scores.push(score);
        }
    }
    let ids: Vec<String> = corpus.images().map(|im| im.image_id.clone()).collect();
    let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
    Ok(Prepared {
        female: corpus.images().map(|im| im.gender == Gender::Female).collect(),
        groups: corpus.images().map(|im| im.group()).collect(),
        features: Grid::from_vec(ids.len(), dim, data),
        shape,
        scores,
        ids,
        index,
    })
}

/// Plan for trial `trial` of `cfg`.
pub fn plan_for(cfg: &ExperimentConfig, corpus: &Corpus, trial: usize) -> Result<SplitPlan, ProtocolError> {
    let seed = cfg.trial_seed(trial);
    let split_seed = derive_seed(seed, SPLIT_TAG);
    let mut plan = match cfg.split {
        SplitMode::SubjectDisjoint => split_subject_disjoint(corpus, cfg.train_fraction, split_seed)?,
        SplitMode::ImageLevel => split_image_level(corpus, cfg.train_fraction, split_seed)?,
    };
    plan.trial_index = trial;
    plan.seed = seed;
    Ok(plan)
}

fn gather(features: &Grid<f32>, rows: &[usize]) -> Grid<f32> {
    let dim = features.cols();
    let mut data = Vec::with_capacity(rows.len() * dim);
    for &r in rows {
        data.extend_from_slice(features.row(r));
    }
    Grid::from_vec(rows.len(), dim, data)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Trains on the plan's (filtered, optionally balanced) training side and
/// scores every test image.
pub fn run_trial_prepared(
    cfg: &ExperimentConfig,
    corpus: &Corpus,
    prepared: &Prepared,
    plan: &SplitPlan,
) -> Result<TrialResult, ProtocolError> {
    let mut train_ids: Vec<String> = plan
        .train_image_ids
        .iter()
        .filter(|id| {
            prepared
                .position(id)
                .is_ok_and(|i| cfg.group_filter.admits(prepared.groups[i]))
        })
        .cloned()
        .collect();
    if cfg.balance_classes {
        train_ids = balance_by_gender(&train_ids, corpus, derive_seed(plan.seed, BALANCE_TAG))?;
    }
    if train_ids.is_empty() {
        return Err(ProtocolError::EmptyTrainingSet {
            trial: plan.trial_index,
        });
    }
    let train_rows: Vec<usize> = train_ids
        .iter()
        .map(|id| prepared.position(id))
        .collect::<Result<_, _>>()?;
    let test_rows: Vec<usize> = plan
        .test_image_ids
        .iter()
        .map(|id| prepared.position(id))
        .collect::<Result<_, _>>()?;
    let train_labels: Vec<bool> = train_rows.iter().map(|&i| prepared.female[i]).collect();
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = derive_seed(plan.seed, TRAIN_TAG);

    let (scores, predicted): (Vec<f64>, Vec<bool>) = match &cfg.classifier {
        ClassifierSpec::Threshold => {
            let train_scores: Vec<f64> = train_rows.iter().map(|&i| prepared.scores[i]).collect();
            let clf = ThresholdClassifier::fit(&train_scores, &train_labels)?;
            test_rows
                .iter()
                .map(|&i| (prepared.scores[i], clf.predict(prepared.scores[i])))
                .unzip()
        }
        ClassifierSpec::Mlp { variant } => {
            let spec = mlp_topology_for(prepared.features.cols(), *variant)?;
            let model = mlp_train(
                &gather(&prepared.features, &train_rows),
                &train_labels,
                &spec,
                &train_cfg,
            )?;
            let s = model.predict_batch(&gather(&prepared.features, &test_rows))?;
            let p = s.iter().map(|&v| v >= 0.5).collect();
            (s, p)
        }
        ClassifierSpec::Cnn { conv_features, fc } => {
            let (rows, cols) = prepared.shape.ok_or(ProtocolError::InvalidConfig {
                field: "feature",
                message: "the CNN needs a 2-D feature".into(),
            })?;
            let spec = CnnSpec {
                conv_features: conv_features.clone(),
                fc: fc.clone(),
                ..CnnSpec::standard(rows, cols)
            };
            let model = cnn_train(
                &gather(&prepared.features, &train_rows),
                &train_labels,
                &spec,
                &train_cfg,
            )?;
            let probs = model.predict_batch(&gather(&prepared.features, &test_rows))?;
            probs.iter().map(|p| (p[1], p[1] >= p[0])).unzip()
        }
    };

    let mut confusion = Confusion::default();
    let mut counts = GroupCounts::default();
    let mut correct = [0usize; 3];
    let mut predictions = Vec::with_capacity(test_rows.len());
    for ((&row, &score), &pred) in test_rows.iter().zip(&scores).zip(&predicted) {
        let female = prepared.female[row];
        match (female, pred) {
            (true, true) => confusion.tp += 1,
            (true, false) => confusion.fn_ += 1,
            (false, true) => confusion.fp += 1,
            (false, false) => confusion.tn += 1,
        }
        let slot = match prepared.groups[row] {
            Some(CosmeticsGroup::Male) => {
                counts.male += 1;
                Some(0)
            }
            Some(CosmeticsGroup::Fnc) => {
                counts.fnc += 1;
                Some(1)
            }
            Some(CosmeticsGroup::Fwc) => {
                counts.fwc += 1;
                Some(2)
            }
            None => {
                counts.ungrouped += 1;
                None
            }
        };
        if let Some(s) = slot {
            correct[s] += (female == pred) as usize;
        }
        predictions.push(Prediction {
            image_id: prepared.ids[row].clone(),
            female,
            predicted_female: pred,
            score,
        });
    }
    let group_eer = |other: CosmeticsGroup| -> Option<f64> {
        let (s, l): (Vec<f64>, Vec<bool>) = test_rows
            .iter()
            .zip(&scores)
            .filter(|(&r, _)| matches!(prepared.groups[r], Some(g) if g == CosmeticsGroup::Male || g == other))
            .map(|(&r, &s)| (s, prepared.female[r]))
            .unzip();
        roc_and_eer(&s, &l).ok().map(|roc| roc.eer)
    };
    Ok(TrialResult {
        trial_index: plan.trial_index,
        seed: plan.seed,
        train_size: train_rows.len(),
        test_size: test_rows.len(),
        overall: ratio(confusion.tp + confusion.tn, test_rows.len()).unwrap_or(0.0),
        male_acc: ratio(correct[0], counts.male),
        fnc_acc: ratio(correct[1], counts.fnc),
        fwc_acc: ratio(correct[2], counts.fwc),
        group_counts: counts,
        confusion,
        male_vs_fnc_eer: group_eer(CosmeticsGroup::Fnc),
        male_vs_fwc_eer: group_eer(CosmeticsGroup::Fwc),
        predictions,
    })
}

/// Extracts features and runs one trial.
pub fn run_trial(cfg: &ExperimentConfig, corpus: &Corpus, plan: &SplitPlan) -> Result<TrialResult, ProtocolError> {
    let prepared = prepare(cfg, corpus)?;
    run_trial_prepared(cfg, corpus, &prepared, plan)
}

/// Runs all trials on a pool of `jobs` threads (0 = rayon's default).
/// The report does not depend on `jobs`.
pub fn run_experiment(cfg: &ExperimentConfig, corpus: &Corpus, jobs: usize) -> Result<ExperimentReport, ProtocolError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ProtocolError::ThreadPool(e.to_string()))?;
    pool.install(|| {
        let prepared = prepare(cfg, corpus)?;
        let trials = (0..cfg.n_trials)
            .into_par_iter()
            .map(|i| {
                let plan = plan_for(cfg, corpus, i)?;
                run_trial_prepared(cfg, corpus, &prepared, &plan)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ExperimentReport::new(cfg, trials))
    })
}
