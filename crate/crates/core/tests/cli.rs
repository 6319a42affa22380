use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use iclab::cli::{self, EXIT_OK, EXIT_USAGE};
use iclab::corpus::{corpus_stats, load_manifest, CosmeticsGroup, Gender};
use iclab::protocol::ExperimentReport;
use sha2::{Digest, Sha256};

fn iclab(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("iclab").chain(args.iter().copied());
    let code = cli::run(argv, 0, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

/// sha256 of every file below `dir`, keyed by relative path.
fn digests(dir: &Path) -> BTreeMap<String, String> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<String, String>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, acc);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                acc.insert(rel, hex::encode(Sha256::digest(fs::read(&p).unwrap())));
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(dir, dir, &mut acc);
    acc
}

const SMALL_RUN: &str = "\
# tiny threshold experiment on a generated corpus
corpus = preset:null:20:3
input = whole_eye
resolution = 20x23
feature = intensity
classifier = threshold
n_trials = 4
seed = 5
";

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.cfg");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_twice_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let (code, out, err) = iclab(&[
            "synth",
            "--preset",
            "null",
            "--seed",
            "1",
            "--subjects",
            "12",
            "--out",
            s(d),
        ]);
        assert_eq!(code, EXIT_OK, "{err}");
        assert!(out.contains("images: "), "{out}");
    }
    let (da, db) = (digests(&a), digests(&b));
    assert!(da.contains_key("manifest.csv"));
    assert_eq!(da, db);
}

#[test]
fn synth_mascara_fraction() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("m");
    let (code, _, err) = iclab(&[
        "synth",
        "--preset",
        "mascara",
        "--subjects",
        "200",
        "--seed",
        "7",
        "--out",
        s(&d),
    ]);
    assert_eq!(code, EXIT_OK, "{err}");
    let corpus = load_manifest(&d.join("manifest.csv")).unwrap();
    let stats = corpus_stats(&corpus);
    let frac = stats.female_cosmetics_fraction().unwrap();
    assert!((0.5..=0.7).contains(&frac), "female cosmetics fraction {frac}");
    assert_eq!(stats.male_with_cosmetics, 0);
    assert_eq!(stats.group_count(CosmeticsGroup::Male), stats.male);
    assert!(corpus
        .images()
        .all(|i| i.gender == Gender::Male || i.group() != Some(CosmeticsGroup::Male)));
}

#[test]
fn synth_without_out_is_usage_error() {
    let (code, _, err) = iclab(&["synth", "--preset", "null"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("--out"), "{err}");
    assert!(err.to_lowercase().contains("usage"), "{err}");
}

#[test]
fn unknown_preset_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, err) = iclab(&["synth", "--preset", "glitter", "--out", s(tmp.path())]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("glitter"));
}

#[test]
fn run_then_report_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_RUN);
    let out_dir = tmp.path().join("out");
    let (code, out, err) = iclab(&["run", "--config", &cfg, "--out", s(&out_dir), "--jobs", "2"]);
    assert_eq!(code, EXIT_OK, "{err}");
    for f in ["report.json", "report.csv", "config.resolved", "run_manifest.json"] {
        assert!(out_dir.join(f).is_file(), "{f} missing");
    }
    let report = ExperimentReport::from_json(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.trials.len(), 4);
    assert_eq!(out.lines().next().unwrap(), report.summary_line());

    let json = out_dir.join("report.json");
    let (code, csv, _) = iclab(&["report", "--in", s(&json), "--format", "csv"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(csv, fs::read_to_string(out_dir.join("report.csv")).unwrap());

    let (code, table, _) = iclab(&["report", "--in", s(&json), "--group-breakdown"]);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<&str> = table.lines().collect();
    // header, 4 trials, aggregate row, summary line
    assert_eq!(lines.len(), 1 + 4 + 1 + 1);
    assert!(lines[0].contains("male") && lines[0].contains("fnc") && lines[0].contains("fwc"));
    assert!(lines[5].trim_start().starts_with("mean"));
    assert_eq!(lines[6], report.summary_line());

    // The resolved config re-runs to the same report.
    let again = tmp.path().join("again");
    let resolved = out_dir.join("config.resolved");
    let (code, _, err) = iclab(&["run", "--config", s(&resolved), "--out", s(&again), "--jobs", "1"]);
    assert_eq!(code, EXIT_OK, "{err}");
    assert_eq!(
        fs::read_to_string(again.join("report.json")).unwrap(),
        fs::read_to_string(json).unwrap()
    );
}

#[test]
fn trials_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL_RUN);
    let out_dir = tmp.path().join("out");
    let (code, _, err) = iclab(&["run", "--config", &cfg, "--out", s(&out_dir), "--trials", "1"]);
    assert_eq!(code, EXIT_OK, "{err}");
    let csv = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn bad_train_fraction_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL_RUN}train_fraction = 1.2\n"));
    let out_dir = tmp.path().join("out");
    let (code, _, err) = iclab(&["run", "--config", &cfg, "--out", s(&out_dir)]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("train_fraction"), "{err}");
    assert!(!out_dir.exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("{SMALL_RUN}colour = blue\n"));
    let (code, _, err) = iclab(&["run", "--config", &cfg, "--out", s(&tmp.path().join("o"))]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("colour"), "{err}");
}

#[test]
fn missing_report_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, err) = iclab(&["report", "--in", s(&tmp.path().join("nope.json"))]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("nope.json"));
}

#[test]
fn binary_exit_codes_and_env_seed() {
    let bin = env!("CARGO_BIN_EXE_iclab");
    let st = Command::new(bin).arg("synth").output().unwrap();
    assert_eq!(st.status.code(), Some(EXIT_USAGE));

    let tmp = tempfile::tempdir().unwrap();
    let run = |seed: &str, dir: &str| {
        let d = tmp.path().join(dir);
        let st = Command::new(bin)
            .env("ICLAB_SEED", seed)
            .args(["synth", "--preset", "null", "--subjects", "4", "--out", s(&d)])
            .output()
            .unwrap();
        assert_eq!(st.status.code(), Some(EXIT_OK));
        digests(&d)
    };
    assert_eq!(run("9", "x"), run("9", "y"));
    assert_ne!(run("9", "x"), run("10", "z"));

    let st = Command::new(bin)
        .env("ICLAB_SEED", "many")
        .args(["synth", "--preset", "null", "--out", s(&tmp.path().join("w"))])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(EXIT_USAGE));
}
