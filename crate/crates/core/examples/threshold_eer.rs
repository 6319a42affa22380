//! Mean whole-eye intensity as a one-number gender score.
//!
//! Mascara darkens the image, so intensity separates males from women
//! wearing cosmetics but not from women without.

use iclab::corpus::{generate_synthetic, CosmeticsGroup, SynthConfig};
use iclab::learn::{roc_and_eer, Polarity, ThresholdClassifier};
use iclab::texture::mean_intensity;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_synthetic(&SynthConfig::preset("mascara").unwrap(), 11)?;
    let scored: Vec<(CosmeticsGroup, f64)> = corpus
        .images()
        .filter_map(|img| Some((img.group()?, mean_intensity(img, None).ok()?)))
        .collect();

    for other in [CosmeticsGroup::Fwc, CosmeticsGroup::Fnc] {
        let (scores, labels): (Vec<f64>, Vec<bool>) = scored
            .iter()
            .filter(|(g, _)| *g == CosmeticsGroup::Male || *g == other)
            .map(|&(g, s)| (s, g == other))
            .unzip();
        let roc = roc_and_eer(&scores, &labels)?;
        let rule = ThresholdClassifier::fit(&scores, &labels)?;
        let side = match rule.polarity {
            Polarity::LowerIsPositive => "<=",
            Polarity::HigherIsPositive => ">=",
        };
        println!(
            "Male vs {}: EER {:.3}; best rule \"female if mean {side} {:.2}\" scores {:.3}",
            other.as_str().to_uppercase(),
            roc.eer,
            rule.polarity.orient(rule.threshold),
            rule.train_accuracy,
        );
    }
    Ok(())
}
