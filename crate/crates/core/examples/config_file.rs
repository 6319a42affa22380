//! Parse a key = value experiment config, run it and print the report.
//!
//! ```text
//! cargo run --release --example config_file -- configs/threshold-whole-eye.cfg
//! ```
//! Without an argument a built-in config is used.

use std::path::Path;

use iclab::cli::{parse_experiment, render_experiment, render_table, resolve_corpus};
use iclab::protocol::run_experiment;

const BUILT_IN: &str = "\
corpus = preset:mascara:120:4
input = whole_eye
resolution = 60x69
feature = intensity
classifier = threshold
n_trials = 5
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1);
    let text = match &path {
        Some(p) => std::fs::read_to_string(p)?,
        None => BUILT_IN.to_string(),
    };
    let cfg = parse_experiment(&text, 0)?;
    cfg.validate()?;
    let base = path
        .as_deref()
        .and_then(|p| Path::new(p).parent())
        .unwrap_or(Path::new("."));
    let corpus = resolve_corpus(&cfg, base)?;
    let report = run_experiment(&cfg, &corpus, 1)?;
    println!(
        "# resolved config (digest {})\n{}",
        &cfg.digest()[..16],
        render_experiment(&cfg)
    );
    print!("{}", render_table(&report, true));
    Ok(())
}
