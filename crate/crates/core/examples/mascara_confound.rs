//! Gender "prediction" on a corpus whose only gender cue is mascara.
//!
//! Whole-eye crops, unwrapped irises and bare occlusion masks all beat
//! chance, and the per-group breakdown shows the accuracy comes from women
//! wearing cosmetics.

use iclab::cli::render_table;
use iclab::corpus::{generate_synthetic, SynthConfig};
use iclab::learn::TrainConfig;
use iclab::protocol::{run_experiment, ExperimentConfig, InputKind};
use iclab::texture::FeatureSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_synthetic(&SynthConfig::preset("mascara").unwrap(), 11)?;
    let train = TrainConfig {
        max_epochs: 40,
        standardize: false,
        ..TrainConfig::mlp(0)
    };
    let runs = [
        ("whole eye", InputKind::WholeEye, (20, 23), FeatureSpec::Intensity),
        (
            "normalized iris",
            InputKind::NormalizedIris,
            (5, 60),
            FeatureSpec::Intensity,
        ),
        ("occlusion mask", InputKind::MaskOnly, (5, 60), FeatureSpec::MaskOnly),
    ];
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    for (name, input, resolution, feature) in runs {
        let cfg = ExperimentConfig {
            input,
            resolution,
            feature,
            train: train.clone(),
            n_trials: 5,
            seed: 1000,
            ..Default::default()
        };
        let r = run_experiment(&cfg, &corpus, jobs)?;
        println!("== {name}\n{}", render_table(&r, true));
    }
    Ok(())
}
