//! The `iclab` command line: `synth`, `run` and `report`.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | bad flags, bad config, or an input file named by a flag is unreadable |
//! | 2 | I/O failure while reading corpus files or writing outputs |
//! | 3 | an experiment stage failed (corpus validation, unwrapping, training) |
//!
//! `ICLAB_SEED` supplies the seed when neither a flag nor the config sets
//! one. Every command writes only below its `--out` directory.

mod config;

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::corpus::{corpus_stats, generate_synthetic, load_manifest, write_corpus, Corpus, CorpusError, SynthConfig};
use crate::protocol::{run_experiment, ExperimentConfig, ExperimentReport, ProtocolError};

pub use config::{
    experiment_preset, parse_experiment, parse_synth, render_experiment, ConfigError, CorpusRef, KeyValues,
    EXPERIMENT_PRESETS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_STAGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "iclab",
    version,
    about = "Gender-from-iris experiments on real or synthetic eye corpora"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus (manifest.csv + PGM images).
    Synth(SynthArgs),
    /// Run the trials of an experiment config.
    Run(RunArgs),
    /// Render a report.json as a table or CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// One of null, mascara, iris-signal, leakage.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// key = value file with `preset`, SynthConfig fields and `seed`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    subjects: Option<usize>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides `n_trials`.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads for trials (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Adds Male/FNC/FWC accuracy columns.
    #[arg(long)]
    group_breakdown: bool,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

/// Written next to the report by `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_path: PathBuf,
    pub config_digest: String,
    pub out_dir: PathBuf,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub version: String,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn fail(code: i32, message: impl std::fmt::Display) -> Failure {
    Failure {
        code,
        message: message.to_string(),
    }
}

fn corpus_failure(e: CorpusError) -> Failure {
    match e {
        CorpusError::Io { .. } | CorpusError::MissingFile(_) => fail(EXIT_IO, e),
        CorpusError::InvalidConfig(_) => fail(EXIT_USAGE, e),
        other => fail(EXIT_STAGE, other),
    }
}

fn protocol_failure(e: ProtocolError) -> Failure {
    match e {
        ProtocolError::InvalidConfig { .. } => fail(EXIT_USAGE, e),
        ProtocolError::Corpus(c) => corpus_failure(c),
        other => fail(EXIT_STAGE, other),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| fail(EXIT_IO, format!("{}: {e}", path.display())))
}

fn read_input(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", path.display())))
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

/// Seed from `ICLAB_SEED`, or 0 when unset. An unparsable value is an error.
pub fn env_seed() -> Result<u64, String> {
    match std::env::var("ICLAB_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("ICLAB_SEED={v:?} is not an unsigned integer")),
        Err(_) => Ok(0),
    }
}

/// Builds the corpus a config refers to. Relative manifest paths resolve
/// against `base`.
pub fn resolve_corpus(cfg: &ExperimentConfig, base: &Path) -> Result<Corpus, ProtocolError> {
    let bad = |e: ConfigError| ProtocolError::InvalidConfig {
        field: "corpus",
        message: e.to_string(),
    };
    let r = CorpusRef::parse(&cfg.corpus).map_err(bad)?;
    match &r {
        CorpusRef::Preset { name, subjects, seed } => {
            let mut synth = SynthConfig::preset(name).expect("preset checked during parse");
            if let Some(n) = subjects {
                synth.n_subjects = *n;
            }
            Ok(generate_synthetic(&synth, seed.unwrap_or(cfg.seed))?)
        }
        CorpusRef::Manifest(_) => Ok(load_manifest(&r.resolve_path(base).expect("manifest ref"))?),
    }
}

/// Runs the CLI on `args` (program name first). Output goes to `out`,
/// diagnostics to `err`; the return value is the exit code.
pub fn run<I, T>(args: I, default_seed: u64, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{text}");
                EXIT_OK
            } else {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a, default_seed, out),
        Command::Run(a) => cmd_run(a, default_seed, out),
        Command::Report(a) => cmd_report(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn cmd_synth(a: SynthArgs, default_seed: u64, out: &mut dyn Write) -> Result<(), Failure> {
    let (mut cfg, file_seed) = match (&a.preset, &a.config) {
        (Some(name), None) => {
            let cfg = SynthConfig::preset(name).ok_or_else(|| {
                fail(
                    EXIT_USAGE,
                    format!(
                        "unknown preset {name:?} (expected one of {})",
                        crate::corpus::synth::PRESETS.join(", ")
                    ),
                )
            })?;
            (cfg, None)
        }
        (None, Some(path)) => {
            let text = read_input(path)?;
            let (cfg, seed) = parse_synth(&text, default_seed).map_err(|e| fail(EXIT_USAGE, e))?;
            (cfg, Some(seed))
        }
        _ => unreachable!("clap enforces exactly one of --preset/--config"),
    };
    if let Some(n) = a.subjects {
        cfg.n_subjects = n;
    }
    let seed = a.seed.or(file_seed).unwrap_or(default_seed);
    let corpus = generate_synthetic(&cfg, seed).map_err(corpus_failure)?;
    fs::create_dir_all(&a.out).map_err(|e| fail(EXIT_IO, format!("{}: {e}", a.out.display())))?;
    let manifest = write_corpus(&corpus, &a.out).map_err(corpus_failure)?;
    let _ = writeln!(out, "wrote {} images to {}", corpus.len(), manifest.display());
    let _ = writeln!(out, "{}", corpus_stats(&corpus));
    Ok(())
}

fn cmd_run(a: RunArgs, default_seed: u64, out: &mut dyn Write) -> Result<(), Failure> {
    let started = now_ms();
    let text = read_input(&a.config)?;
    let mut cfg = parse_experiment(&text, default_seed).map_err(|e| fail(EXIT_USAGE, e))?;
    if let Some(n) = a.trials {
        cfg.n_trials = n;
    }
    cfg.validate().map_err(protocol_failure)?;
    let base = a.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let corpus = resolve_corpus(&cfg, &base).map_err(protocol_failure)?;
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(fail(EXIT_USAGE, "--jobs must be at least 1"));
    }
    let report = run_experiment(&cfg, &corpus, jobs).map_err(protocol_failure)?;

    fs::create_dir_all(&a.out).map_err(|e| fail(EXIT_IO, format!("{}: {e}", a.out.display())))?;
    let json = report.to_json().map_err(|e| fail(EXIT_STAGE, e))?;
    write_file(&a.out.join("report.json"), json.as_bytes())?;
    write_file(&a.out.join("report.csv"), report.to_csv().as_bytes())?;
    write_file(&a.out.join("config.resolved"), render_experiment(&cfg).as_bytes())?;
    let manifest = RunManifest {
        config_path: a.config.clone(),
        config_digest: cfg.digest(),
        out_dir: a.out.clone(),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let manifest = serde_json::to_string_pretty(&manifest).map_err(|e| fail(EXIT_STAGE, e))?;
    write_file(&a.out.join("run_manifest.json"), manifest.as_bytes())?;

    let _ = writeln!(out, "{}", report.summary_line());
    let _ = write!(out, "{}", group_lines(&report));
    Ok(())
}

fn group_lines(r: &ExperimentReport) -> String {
    let mut s = String::new();
    for (name, v) in [("male", r.male_mean), ("fnc", r.fnc_mean), ("fwc", r.fwc_mean)] {
        if let Some(v) = v {
            let _ = writeln!(s, "  {name:<4} {v:.4}");
        }
    }
    s
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

/// Per-trial table with an aggregate row.
pub fn render_table(r: &ExperimentReport, group_breakdown: bool) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:>5} {:>20} {:>8}", "trial", "seed", "overall");
    if group_breakdown {
        let _ = write!(s, " {:>8} {:>8} {:>8}", "male", "fnc", "fwc");
    }
    s.push('\n');
    for t in &r.trials {
        let _ = write!(s, "{:>5} {:>20} {:>8.4}", t.trial_index, t.seed, t.overall);
        if group_breakdown {
            let _ = write!(
                s,
                " {:>8} {:>8} {:>8}",
                cell(t.male_acc),
                cell(t.fnc_acc),
                cell(t.fwc_acc)
            );
        }
        s.push('\n');
    }
    let _ = write!(s, "{:>5} {:>20} {:>8.4}", "mean", format!("± {:.4}", r.std), r.mean);
    if group_breakdown {
        let _ = write!(
            s,
            " {:>8} {:>8} {:>8}",
            cell(r.male_mean),
            cell(r.fnc_mean),
            cell(r.fwc_mean)
        );
    }
    s.push('\n');
    let _ = writeln!(s, "{}", r.summary_line());
    s
}

fn cmd_report(a: ReportArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let text = read_input(&a.input)?;
    let report =
        ExperimentReport::from_json(&text).map_err(|e| fail(EXIT_USAGE, format!("{}: {e}", a.input.display())))?;
    let rendered = match a.format {
        Format::Csv => report.to_csv(),
        Format::Table => render_table(&report, a.group_breakdown),
    };
    let _ = write!(out, "{rendered}");
    Ok(())
}
