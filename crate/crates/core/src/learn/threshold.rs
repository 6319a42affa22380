use serde::{Deserialize, Serialize};

use super::roc::{roc_and_eer, Polarity, RocCurve};
use super::LearnError;

/// One-dimensional rule fitted on training scores (e.g. mean intensity).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdClassifier {
    pub polarity: Polarity,
    /// Oriented threshold; see [`Polarity::orient`].
    pub threshold: f64,
    pub train_eer: f64,
    pub train_accuracy: f64,
}

impl ThresholdClassifier {
    /// Picks the polarity with the lower EER and the threshold with the
    /// best balanced accuracy on the training scores.
    pub fn fit(scores: &[f64], labels: &[bool]) -> Result<Self, LearnError> {
        let roc: RocCurve = roc_and_eer(scores, labels)?;
        Ok(Self {
            polarity: roc.polarity,
            threshold: roc.best_threshold,
            train_eer: roc.eer,
            train_accuracy: roc.best_accuracy,
        })
    }

    /// `true` (female) when the oriented score clears the threshold.
    pub fn predict(&self, score: f64) -> bool {
        self.polarity.orient(score) >= self.threshold
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn darker_positive_class() {
        let scores = [90.0, 95.0, 100.0, 120.0, 125.0, 130.0];
        let labels = [true, true, true, false, false, false];
        let t = ThresholdClassifier::fit(&scores, &labels).unwrap();
        assert_eq!(t.polarity, Polarity::LowerIsPositive);
        assert_eq!(t.train_accuracy, 1.0);
        assert!(t.predict(80.0));
        assert!(!t.predict(140.0));
        let pred: Vec<bool> = scores.iter().map(|&s| t.predict(s)).collect();
        assert_eq!(pred, labels);
    }
}
