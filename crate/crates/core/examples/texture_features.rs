//! Feature vectors of every extractor for one normalized iris.

use iclab::corpus::{generate_synthetic, SynthConfig};
use iclab::texture::{FeatureSpec, GaborBank, GaborOutput, LbpConfig, LbpVariant};
use iclab::unwrap::rubber_sheet;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_synthetic(
        &SynthConfig {
            n_subjects: 2,
            ..SynthConfig::preset("iris-signal").unwrap()
        },
        5,
    )?;
    let e = &corpus.entries()[0];
    let n = rubber_sheet(
        &e.image.pixels,
        e.geometry.as_ref().unwrap(),
        e.occlusion.as_ref(),
        40,
        240,
    )?;

    let specs = [
        FeatureSpec::Intensity,
        FeatureSpec::Gabor(GaborBank::default()),
        FeatureSpec::Gabor(GaborBank::with_sigma_factor(
            &[8.0, 16.0, 32.0],
            0.5,
            GaborOutput::Magnitude,
        )),
        FeatureSpec::LbpImage(LbpConfig::default()),
        FeatureSpec::LbpHist(LbpConfig {
            variant: LbpVariant::Uniform,
            ..LbpConfig::default()
        }),
        FeatureSpec::LbpHist(LbpConfig {
            variant: LbpVariant::ClbpMag,
            ..LbpConfig::default()
        }),
        FeatureSpec::MaskOnly,
    ];
    for spec in specs {
        let f = spec.extract(&n)?;
        let mean = f.values.iter().sum::<f64>() / f.len() as f64;
        println!(
            "{:<10} len {:>6}  mean {:>9.4}  [{}]",
            f.extractor.as_str(),
            f.len(),
            mean,
            f.params_digest
        );
    }
    Ok(())
}
