use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, ProtocolError, TrialResult};
use crate::corpus::CosmeticsGroup;

/// Columns of `report.csv`, one row per trial. Absent group accuracies are
/// written as empty fields.
pub const CSV_HEADER: &str = "trial_index,seed,overall,male_acc,fnc_acc,fwc_acc";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_digest: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    /// Sorted by `trial_index`.
    pub trials: Vec<TrialResult>,
    pub mean: f64,
    /// Sample standard deviation (0 for a single trial).
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Mean over the trials where the group was present in the test set.
    pub male_mean: Option<f64>,
    pub fnc_mean: Option<f64>,
    pub fwc_mean: Option<f64>,
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

impl ExperimentReport {
    pub fn new(cfg: &ExperimentConfig, mut trials: Vec<TrialResult>) -> Self {
        assert!(!trials.is_empty(), "a report needs at least one trial");
        trials.sort_by_key(|t| t.trial_index);
        let overall: Vec<f64> = trials.iter().map(|t| t.overall).collect();
        let (mean, std) = mean_std(&overall);
        let group_mean = |g: CosmeticsGroup| {
            let v: Vec<f64> = trials.iter().filter_map(|t| t.group_acc(g)).collect();
            (!v.is_empty()).then(|| mean_std(&v).0)
        };
        Self {
            config_digest: cfg.digest(),
            config: cfg.clone(),
            seeds: trials.iter().map(|t| t.seed).collect(),
            mean,
            std,
            min: overall.iter().copied().fold(f64::INFINITY, f64::min),
            max: overall.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            male_mean: group_mean(CosmeticsGroup::Male),
            fnc_mean: group_mean(CosmeticsGroup::Fnc),
            fwc_mean: group_mean(CosmeticsGroup::Fwc),
            trials,
        }
    }

    pub fn group_mean(&self, group: CosmeticsGroup) -> Option<f64> {
        match group {
            CosmeticsGroup::Male => self.male_mean,
            CosmeticsGroup::Fnc => self.fnc_mean,
            CosmeticsGroup::Fwc => self.fwc_mean,
        }
    }

    pub fn to_json(&self) -> Result<String, ProtocolError> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self, ProtocolError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for t in &self.trials {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                t.trial_index,
                t.seed,
                t.overall,
                opt(t.male_acc),
                opt(t.fnc_acc),
                opt(t.fwc_acc)
            );
        }
        out
    }

    /// `mean ± std` line shared by the CLI commands.
    pub fn summary_line(&self) -> String {
        format!(
            "accuracy {:.4} ± {:.4} over {} trials (min {:.4}, max {:.4})",
            self.mean,
            self.std,
            self.trials.len(),
            self.min,
            self.max
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{Confusion, GroupCounts};
    use proptest::prelude::*;

    fn trial(i: usize, overall: f64, fwc: Option<f64>) -> TrialResult {
        TrialResult {
            trial_index: i,
            seed: 100 + i as u64,
            train_size: 8,
            test_size: 2,
            overall,
            male_acc: Some(overall),
            fnc_acc: None,
            fwc_acc: fwc,
            group_counts: GroupCounts::default(),
            confusion: Confusion::default(),
            male_vs_fnc_eer: None,
            male_vs_fwc_eer: None,
            predictions: Vec::new(),
        }
    }

    #[test]
    fn csv_layout_and_absent_groups() {
        let r = ExperimentReport::new(
            &ExperimentConfig::default(),
            vec![trial(1, 0.5, None), trial(0, 0.75, Some(1.0))],
        );
        assert_eq!(r.seeds, vec![100, 101]);
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "0,100,0.75,0.75,,1");
        assert_eq!(lines[2], "1,101,0.5,0.5,,");
        assert_eq!(r.fnc_mean, None);
        assert_eq!(r.fwc_mean, Some(1.0));
        let back = ExperimentReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_csv(), csv);
    }

    proptest! {
        #[test]
        fn aggregates_match_recomputation(values in proptest::collection::vec(0.0f64..=1.0, 1..15)) {
            let trials = values.iter().enumerate().map(|(i, &v)| trial(i, v, None)).collect();
            let r = ExperimentReport::new(&ExperimentConfig::default(), trials);
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = if values.len() > 1 {
                values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
            } else { 0.0 };
            prop_assert!((r.mean - mean).abs() < 1e-12);
            prop_assert!((r.std - var.sqrt()).abs() < 1e-12);
            prop_assert!(r.min <= r.mean + 1e-12 && r.mean <= r.max + 1e-12);
            prop_assert!(r.std >= 0.0);
        }
    }
}
