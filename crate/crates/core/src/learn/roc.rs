use serde::{Deserialize, Serialize};

use super::{check_both_classes, LearnError};

/// Which side of the threshold counts as the positive (label `true`) class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    HigherIsPositive,
    /// Positive class has lower scores (darker-is-female).
    LowerIsPositive,
}

impl Polarity {
    /// Score mapped so that larger always means "more positive".
    pub fn orient(self, score: f64) -> f64 {
        match self {
            Self::HigherIsPositive => score,
            Self::LowerIsPositive => -score,
        }
    }
}

/// Operating point: accept as positive when `orient(score) >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    /// Negatives accepted.
    pub far: f64,
    /// Positives rejected.
    pub frr: f64,
}

impl RocPoint {
    pub fn balanced_accuracy(&self) -> f64 {
        1.0 - (self.far + self.frr) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub polarity: Polarity,
    /// Sorted by increasing (oriented) threshold.
    pub points: Vec<RocPoint>,
    pub eer: f64,
    pub best_accuracy: f64,
    /// Oriented threshold achieving `best_accuracy`.
    pub best_threshold: f64,
}

impl RocCurve {
    pub fn accepts(&self, score: f64) -> bool {
        self.polarity.orient(score) >= self.best_threshold
    }
}

/// FAR/FRR at every midpoint of the sorted unique oriented scores, plus
/// both infinities.
fn sweep(scores: &[f64], labels: &[bool], polarity: Polarity) -> Vec<RocPoint> {
    let mut pairs: Vec<(f64, bool)> = scores
        .iter()
        .zip(labels)
        .map(|(&s, &l)| (polarity.orient(s), l))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    // everything accepted at -inf
    let (mut rejected_pos, mut rejected_neg) = (0usize, 0usize);
    let point = |t: f64, rp: usize, rn: usize| RocPoint {
        threshold: t,
        far: (neg - rn) as f64 / neg as f64,
        frr: rp as f64 / pos as f64,
    };
    let mut points = vec![point(f64::NEG_INFINITY, 0, 0)];
    let mut i = 0;
    while i < pairs.len() {
        let v = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == v {
            if pairs[i].1 {
                rejected_pos += 1;
            } else {
                rejected_neg += 1;
            }
            i += 1;
        }
        let t = if i < pairs.len() {
            v + (pairs[i].0 - v) / 2.0
        } else {
            f64::INFINITY
        };
        points.push(point(t, rejected_pos, rejected_neg));
    }
    points
}

/// Linear interpolation of the FAR = FRR crossing along consecutive points.
pub(crate) fn eer_of(points: &[RocPoint]) -> f64 {
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (da, db) = (a.far - a.frr, b.far - b.frr);
        if da >= 0.0 && db <= 0.0 {
            if da == db {
                return a.far;
            }
            let t = da / (da - db);
            return a.far + t * (b.far - a.far);
        }
    }
    unreachable!("FAR - FRR goes from 1 to -1")
}

fn curve(scores: &[f64], labels: &[bool], polarity: Polarity) -> RocCurve {
    let points = sweep(scores, labels, polarity);
    let eer = eer_of(&points);
    let best = points
        .iter()
        .copied()
        .reduce(|best, p| {
            if p.balanced_accuracy() > best.balanced_accuracy() {
                p
            } else {
                best
            }
        })
        .unwrap();
    RocCurve {
        polarity,
        eer,
        best_accuracy: best.balanced_accuracy(),
        best_threshold: best.threshold,
        points,
    }
}

/// ROC sweep for both polarities; the one with the lower EER is kept
/// (ties keep higher-is-positive).
pub fn roc_and_eer(scores: &[f64], labels: &[bool]) -> Result<RocCurve, LearnError> {
    if scores.len() != labels.len() {
        return Err(LearnError::DimensionMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    check_both_classes(labels, LearnError::SingleClassInput)?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(LearnError::InvalidConfig("scores must be finite".into()));
    }
    let high = curve(scores, labels, Polarity::HigherIsPositive);
    let low = curve(scores, labels, Polarity::LowerIsPositive);
    Ok(if low.eer < high.eer { low } else { high })
}
