//! Image-level splits put images of one subject on both sides, so the
//! classifier can recognise people instead of gender.

use iclab::corpus::{generate_synthetic, SynthConfig};
use iclab::learn::TrainConfig;
use iclab::protocol::{run_experiment, ExperimentConfig, InputKind, SplitMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate_synthetic(&SynthConfig::preset("leakage").unwrap(), 11)?;
    let base = ExperimentConfig {
        input: InputKind::NormalizedIris,
        resolution: (5, 60),
        train: TrainConfig {
            max_epochs: 40,
            ..TrainConfig::mlp(0)
        },
        n_trials: 5,
        seed: 1000,
        ..Default::default()
    };
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    for split in [SplitMode::SubjectDisjoint, SplitMode::ImageLevel] {
        let r = run_experiment(&ExperimentConfig { split, ..base.clone() }, &corpus, jobs)?;
        println!("{:<16} {}", split.as_str(), r.summary_line());
    }
    Ok(())
}
