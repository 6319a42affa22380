//! `key = value` files for experiments and synthetic corpora.
//!
//! Blank lines and text after `#` are ignored. Top-level experiment keys
//! are the `ExperimentConfig` field names; nested settings use a prefix
//! (`gabor_*`, `lbp_*`, `mlp_*`, `cnn_*`) or, for training, the
//! `TrainConfig` field name itself.

use std::collections::BTreeMap;
use std::fmt::{Display, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::{GenderSignal, SynthConfig};
use crate::learn::{MlpVariant, TrainConfig};
use crate::protocol::{ClassifierSpec, ExperimentConfig, GroupFilter, InputKind, SplitMode};
use crate::texture::{FeatureSpec, GaborBank, GaborOutput, LbpConfig, LbpVariant};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: {key} is set twice")]
    Duplicate { line: usize, key: String },
    #[error("{0}: unknown key")]
    UnknownKey(String),
    #[error("{key}: {message}")]
    Value { key: String, message: String },
}

fn value_err(key: &str, message: impl Display) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        message: message.to_string(),
    }
}

/// Parsed lines, consumed key by key so leftovers can be reported.
#[derive(Debug, Default)]
pub struct KeyValues {
    map: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            if map.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate { line: i + 1, key });
            }
        }
        Ok(Self { map })
    }

    fn take_raw(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: Display,
    {
        self.take_raw(key)
            .map(|v| v.parse::<T>().map_err(|e| value_err(key, format!("{v:?}: {e}"))))
            .transpose()
    }

    fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: Display,
    {
        self.take_raw(key)
            .map(|v| {
                v.split(',')
                    .map(|s| s.trim().parse::<T>().map_err(|e| value_err(key, format!("{s:?}: {e}"))))
                    .collect()
            })
            .transpose()
    }

    fn take_dims(&mut self, key: &str) -> Result<Option<(usize, usize)>, ConfigError> {
        self.take_raw(key)
            .map(|v| parse_dims(&v).ok_or_else(|| value_err(key, format!("{v:?}: expected AxB"))))
            .transpose()
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.map.into_keys().next() {
            Some(k) => Err(ConfigError::UnknownKey(k)),
            None => Ok(()),
        }
    }
}

fn parse_dims(s: &str) -> Option<(usize, usize)> {
    let (a, b) = s.split_once('x')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

struct Enum<T>(T);

macro_rules! enum_parse {
    ($t:ty { $($text:literal => $v:expr),+ $(,)? }) => {
        impl FromStr for Enum<$t> {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($text => Ok(Enum($v)),)+
                    _ => Err(concat!("expected one of", $(" ", $text),+).to_string()),
                }
            }
        }
    };
}

enum_parse!(InputKind { "whole_eye" => InputKind::WholeEye, "normalized_iris" => InputKind::NormalizedIris, "mask_only" => InputKind::MaskOnly });
enum_parse!(SplitMode { "subject_disjoint" => SplitMode::SubjectDisjoint, "image_level" => SplitMode::ImageLevel });
enum_parse!(GroupFilter { "all" => GroupFilter::All, "males_plus_fnc" => GroupFilter::MalesPlusFnc, "males_plus_fwc" => GroupFilter::MalesPlusFwc });
enum_parse!(GaborOutput { "magnitude" => GaborOutput::Magnitude, "real_imag" => GaborOutput::RealImag });

fn take_enum<T>(kv: &mut KeyValues, key: &str) -> Result<Option<T>, ConfigError>
where
    Enum<T>: FromStr<Err = String>,
{
    Ok(kv.take::<Enum<T>>(key)?.map(|e| e.0))
}

/// `corpus = path` or `corpus = preset:<name>[:subjects[:seed]]`.
#[derive(Debug, Clone, PartialEq)]
pub enum CorpusRef {
    Manifest(PathBuf),
    Preset {
        name: String,
        subjects: Option<usize>,
        seed: Option<u64>,
    },
}

impl CorpusRef {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        let Some(rest) = s.strip_prefix("preset:") else {
            if s.is_empty() {
                return Err(value_err("corpus", "must be set"));
            }
            return Ok(Self::Manifest(PathBuf::from(s)));
        };
        let mut parts = rest.split(':');
        let name = parts.next().unwrap_or_default().to_string();
        if SynthConfig::preset(&name).is_none() {
            return Err(value_err("corpus", format!("unknown preset {name:?}")));
        }
        let num = |p: Option<&str>| -> Result<Option<u64>, ConfigError> {
            p.map(|p| {
                p.parse()
                    .map_err(|_| value_err("corpus", format!("{p:?} is not a number")))
            })
            .transpose()
        };
        let subjects = num(parts.next())?.map(|n| n as usize);
        let seed = num(parts.next())?;
        if parts.next().is_some() {
            return Err(value_err("corpus", "expected preset:<name>[:subjects[:seed]]"));
        }
        Ok(Self::Preset { name, subjects, seed })
    }

    /// Manifest paths are taken relative to `base` unless absolute; a
    /// directory stands for its `manifest.csv`.
    pub fn resolve_path(&self, base: &Path) -> Option<PathBuf> {
        let Self::Manifest(p) = self else { return None };
        let p = if p.is_absolute() { p.clone() } else { base.join(p) };
        Some(if p.is_dir() { p.join("manifest.csv") } else { p })
    }
}

/// Parses an experiment file. `default_seed` fills `seed` when the file
/// leaves it out.
pub fn parse_experiment(text: &str, default_seed: u64) -> Result<ExperimentConfig, ConfigError> {
    let mut kv = KeyValues::parse(text)?;
    let base = ExperimentConfig::default();

    let corpus = kv.take_raw("corpus").unwrap_or_default();
    CorpusRef::parse(&corpus)?;
    let input = take_enum(&mut kv, "input")?.unwrap_or(base.input);
    let resolution = kv.take_dims("resolution")?.unwrap_or(base.resolution);

    let feature_name = kv.take_raw("feature").unwrap_or_else(|| "intensity".into());
    let gabor = [
        kv.take_list::<f64>("gabor_wavelengths")?.map(Gabor::Wavelengths),
        kv.take_list::<f64>("gabor_sigmas")?.map(Gabor::Sigmas),
        kv.take::<f64>("gabor_sigma_factor")?.map(Gabor::Factor),
        take_enum::<GaborOutput>(&mut kv, "gabor_output")?.map(Gabor::Output),
    ];
    let lbp = [
        kv.take::<LbpVariant>("lbp_variant")?.map(Lbp::Variant),
        kv.take_dims("lbp_patch")?.map(Lbp::Patch),
        kv.take::<bool>("lbp_overlap")?.map(Lbp::Overlap),
    ];
    let feature = match feature_name.as_str() {
        "intensity" => FeatureSpec::Intensity,
        "mask_only" => FeatureSpec::MaskOnly,
        "gabor" => FeatureSpec::Gabor(gabor_bank(gabor.iter().flatten())?),
        "lbp_image" => FeatureSpec::LbpImage(lbp_config(lbp.iter().flatten())),
        "lbp_hist" => FeatureSpec::LbpHist(lbp_config(lbp.iter().flatten())),
        other => {
            return Err(value_err(
                "feature",
                format!("{other:?}: expected one of intensity gabor lbp_image lbp_hist mask_only"),
            ))
        }
    };
    if !matches!(feature, FeatureSpec::Gabor(_)) && gabor.iter().any(Option::is_some) {
        return Err(value_err("gabor_wavelengths", "gabor_* keys need feature = gabor"));
    }
    if !matches!(feature, FeatureSpec::LbpImage(_) | FeatureSpec::LbpHist(_)) && lbp.iter().any(Option::is_some) {
        return Err(value_err("lbp_variant", "lbp_* keys need an lbp feature"));
    }

    let classifier_name = kv.take_raw("classifier").unwrap_or_else(|| "mlp".into());
    let mlp_variant = kv.take_raw("mlp_variant");
    let cnn_features = kv.take_list::<usize>("cnn_features")?;
    let cnn_fc = kv.take_raw("cnn_fc");
    let (classifier, mut train) = match classifier_name.as_str() {
        "mlp" => {
            let variant = match mlp_variant.as_deref() {
                Some(v) => v.parse::<MlpVariant>().map_err(|e| value_err("mlp_variant", e))?,
                None => MlpVariant::H20,
            };
            (ClassifierSpec::Mlp { variant }, TrainConfig::mlp(0))
        }
        "cnn" => {
            let ClassifierSpec::Cnn { conv_features, fc } = ClassifierSpec::cnn_standard() else {
                unreachable!()
            };
            let fc = match cnn_fc.as_deref() {
                // an empty list means no hidden FC layers
                Some("") | Some("none") => Vec::new(),
                Some(s) => s
                    .split(',')
                    .map(|v| {
                        v.trim()
                            .parse()
                            .map_err(|_| value_err("cnn_fc", format!("{v:?} is not a size")))
                    })
                    .collect::<Result<_, _>>()?,
                None => fc,
            };
            let spec = ClassifierSpec::Cnn {
                conv_features: cnn_features.clone().unwrap_or(conv_features),
                fc,
            };
            (spec, TrainConfig::cnn(0))
        }
        "threshold" => (ClassifierSpec::Threshold, TrainConfig::mlp(0)),
        other => {
            return Err(value_err(
                "classifier",
                format!("{other:?}: expected one of mlp cnn threshold"),
            ))
        }
    };
    if mlp_variant.is_some() && classifier_name != "mlp" {
        return Err(value_err("mlp_variant", "needs classifier = mlp"));
    }
    if (cnn_features.is_some() || cnn_fc.is_some()) && classifier_name != "cnn" {
        return Err(value_err("cnn_features", "cnn_* keys need classifier = cnn"));
    }

    if let Some(v) = kv.take("learning_rate")? {
        train.learning_rate = v;
    }
    if let Some(v) = kv.take("momentum")? {
        train.momentum = v;
    }
    if let Some(v) = kv.take("batch_size")? {
        train.batch_size = v;
    }
    if let Some(v) = kv.take("max_epochs")? {
        train.max_epochs = v;
    }
    if let Some(v) = kv.take_raw("batch_budget") {
        train.batch_budget = match v.as_str() {
            "none" => None,
            s => Some(
                s.parse()
                    .map_err(|_| value_err("batch_budget", format!("{s:?}: expected a count or none")))?,
            ),
        };
    }
    if let Some(v) = kv.take("early_stop_window")? {
        train.early_stop_window = v;
    }
    if let Some(v) = kv.take("early_stop_delta")? {
        train.early_stop_delta = v;
    }
    if let Some(v) = kv.take("standardize")? {
        train.standardize = v;
    }

    let cfg = ExperimentConfig {
        corpus,
        input,
        resolution,
        feature,
        classifier,
        train,
        n_trials: kv.take("n_trials")?.unwrap_or(base.n_trials),
        train_fraction: kv.take("train_fraction")?.unwrap_or(base.train_fraction),
        split: take_enum(&mut kv, "split")?.unwrap_or(base.split),
        balance_classes: kv.take("balance_classes")?.unwrap_or(base.balance_classes),
        group_filter: take_enum(&mut kv, "group_filter")?.unwrap_or(base.group_filter),
        seed: kv.take("seed")?.unwrap_or(default_seed),
    };
    kv.finish()?;
    Ok(cfg)
}

enum Gabor {
    Wavelengths(Vec<f64>),
    Sigmas(Vec<f64>),
    Factor(f64),
    Output(GaborOutput),
}

fn gabor_bank<'a>(items: impl Iterator<Item = &'a Gabor>) -> Result<GaborBank, ConfigError> {
    let mut bank = GaborBank::default();
    let (mut sigmas, mut factor) = (None, None);
    for item in items {
        match item {
            Gabor::Wavelengths(w) => bank.wavelengths = w.clone(),
            Gabor::Sigmas(s) => sigmas = Some(s.clone()),
            Gabor::Factor(f) => factor = Some(*f),
            Gabor::Output(o) => bank.output = *o,
        }
    }
    bank.sigmas = match (sigmas, factor) {
        (Some(_), Some(_)) => {
            return Err(value_err(
                "gabor_sigmas",
                "set gabor_sigmas or gabor_sigma_factor, not both",
            ))
        }
        (Some(s), None) => s,
        (None, Some(f)) => GaborBank::with_sigma_factor(&bank.wavelengths, f, bank.output).sigmas,
        (None, None) => GaborBank::with_sigma_factor(&bank.wavelengths, 0.5, bank.output).sigmas,
    };
    Ok(bank)
}

enum Lbp {
    Variant(LbpVariant),
    Patch((usize, usize)),
    Overlap(bool),
}

fn lbp_config<'a>(items: impl Iterator<Item = &'a Lbp>) -> LbpConfig {
    let mut cfg = LbpConfig::default();
    for item in items {
        match item {
            Lbp::Variant(v) => cfg.variant = *v,
            Lbp::Patch((r, c)) => (cfg.patch_rows, cfg.patch_cols) = (*r, *c),
            Lbp::Overlap(o) => cfg.overlap = *o,
        }
    }
    cfg
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Writes every key with its current value; `parse_experiment` reads it
/// back to an equal config.
pub fn render_experiment(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let mut put = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    put("corpus", cfg.corpus.clone());
    put("input", cfg.input.as_str().into());
    put("resolution", format!("{}x{}", cfg.resolution.0, cfg.resolution.1));
    put("feature", cfg.feature.extractor().as_str().into());
    match &cfg.feature {
        FeatureSpec::Gabor(bank) => {
            put("gabor_wavelengths", join(&bank.wavelengths));
            put("gabor_sigmas", join(&bank.sigmas));
            put("gabor_output", bank.output.as_str().into());
        }
        FeatureSpec::LbpImage(l) | FeatureSpec::LbpHist(l) => {
            put("lbp_variant", l.variant.as_str().into());
            put("lbp_patch", format!("{}x{}", l.patch_rows, l.patch_cols));
            put("lbp_overlap", l.overlap.to_string());
        }
        _ => {}
    }
    put("classifier", cfg.classifier.name().into());
    match &cfg.classifier {
        ClassifierSpec::Mlp { variant } => put("mlp_variant", variant.as_str().into()),
        ClassifierSpec::Cnn { conv_features, fc } => {
            put("cnn_features", join(conv_features));
            put("cnn_fc", if fc.is_empty() { "none".into() } else { join(fc) });
        }
        ClassifierSpec::Threshold => {}
    }
    let t = &cfg.train;
    put("learning_rate", t.learning_rate.to_string());
    put("momentum", t.momentum.to_string());
    put("batch_size", t.batch_size.to_string());
    put("max_epochs", t.max_epochs.to_string());
    put("batch_budget", t.batch_budget.map_or("none".into(), |b| b.to_string()));
    put("early_stop_window", t.early_stop_window.to_string());
    put("early_stop_delta", t.early_stop_delta.to_string());
    put("standardize", t.standardize.to_string());
    put("n_trials", cfg.n_trials.to_string());
    put("train_fraction", cfg.train_fraction.to_string());
    put("split", cfg.split.as_str().into());
    put("balance_classes", cfg.balance_classes.to_string());
    put("group_filter", cfg.group_filter.as_str().into());
    put("seed", cfg.seed.to_string());
    s
}

/// Synthetic corpus file: optional `preset` plus any `SynthConfig` field
/// and `seed`.
pub fn parse_synth(text: &str, default_seed: u64) -> Result<(SynthConfig, u64), ConfigError> {
    let mut kv = KeyValues::parse(text)?;
    let mut cfg = match kv.take_raw("preset") {
        Some(name) => {
            SynthConfig::preset(&name).ok_or_else(|| value_err("preset", format!("unknown preset {name:?}")))?
        }
        None => SynthConfig::default(),
    };
    macro_rules! field {
        ($($name:ident),+) => {
            $(if let Some(v) = kv.take(stringify!($name))? { cfg.$name = v; })+
        };
    }
    field!(
        n_subjects,
        images_per_subject,
        female_fraction,
        mascara_rate_female,
        mascara_rate_male,
        eyeliner_share,
        iris_signal_strength,
        occlusion_severity,
        subject_texture_stability
    );
    if let Some(v) = kv.take::<GenderSignal>("gender_signal")? {
        cfg.gender_signal = v;
    }
    if let Some(v) = kv.take_dims("image_size")? {
        cfg.image_size = v;
    }
    let seed = kv.take("seed")?.unwrap_or(default_seed);
    kv.finish()?;
    Ok((cfg, seed))
}

/// Named experiment configurations used by the examples and the
/// acceptance suite.
pub fn experiment_preset(name: &str) -> Option<ExperimentConfig> {
    let base = ExperimentConfig::default();
    Some(match name {
        "iris-mlp" => ExperimentConfig {
            corpus: "preset:iris-signal".into(),
            ..base
        },
        "whole-eye-mlp" => ExperimentConfig {
            corpus: "preset:mascara".into(),
            input: InputKind::WholeEye,
            resolution: (60, 69),
            ..base
        },
        "mask-leakage" => ExperimentConfig {
            corpus: "preset:mascara".into(),
            input: InputKind::MaskOnly,
            feature: FeatureSpec::MaskOnly,
            ..base
        },
        "leakage-image-level" => ExperimentConfig {
            corpus: "preset:leakage".into(),
            split: SplitMode::ImageLevel,
            ..base
        },
        "cnn" => ExperimentConfig {
            corpus: "preset:iris-signal".into(),
            classifier: ClassifierSpec::cnn_standard(),
            train: TrainConfig::cnn(0),
            ..base
        },
        _ => return None,
    })
}

pub const EXPERIMENT_PRESETS: [&str; 5] = [
    "iris-mlp",
    "whole-eye-mlp",
    "mask-leakage",
    "leakage-image-level",
    "cnn",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_comments() {
        let cfg = parse_experiment("# nothing but a corpus\ncorpus = preset:null  # inline\n", 7).unwrap();
        assert_eq!(cfg.n_trials, 10);
        assert_eq!(cfg.train_fraction, 0.8);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.corpus, "preset:null");
        assert_eq!(
            ExperimentConfig {
                corpus: String::new(),
                seed: 0,
                ..cfg
            },
            ExperimentConfig::default()
        );
    }

    #[test]
    fn render_round_trips() {
        let mut configs: Vec<ExperimentConfig> = EXPERIMENT_PRESETS
            .iter()
            .map(|n| experiment_preset(n).unwrap())
            .collect();
        configs.push(ExperimentConfig {
            corpus: "data/manifest.csv".into(),
            feature: FeatureSpec::Gabor(GaborBank::with_sigma_factor(&[8.0, 12.5], 0.7, GaborOutput::RealImag)),
            train_fraction: 0.75,
            ..Default::default()
        });
        configs.push(ExperimentConfig {
            corpus: "preset:null:50:3".into(),
            feature: FeatureSpec::LbpHist(LbpConfig {
                variant: LbpVariant::ClbpMag,
                patch_rows: 5,
                patch_cols: 7,
                overlap: true,
            }),
            classifier: ClassifierSpec::Cnn {
                conv_features: vec![4],
                fc: vec![],
            },
            train: TrainConfig {
                batch_budget: None,
                max_epochs: 3,
                standardize: true,
                ..TrainConfig::cnn(0)
            },
            group_filter: GroupFilter::MalesPlusFwc,
            ..Default::default()
        });
        configs.push(ExperimentConfig {
            corpus: "preset:mascara".into(),
            classifier: ClassifierSpec::Threshold,
            balance_classes: false,
            ..Default::default()
        });
        for cfg in configs {
            let text = render_experiment(&cfg);
            assert_eq!(parse_experiment(&text, 99).unwrap(), cfg, "{text}");
        }
    }

    #[test]
    fn errors_name_the_key() {
        let err = |t: &str| parse_experiment(&format!("corpus = preset:null\n{t}"), 0).unwrap_err();
        assert_eq!(
            err("train_fraction = x").to_string().split(':').next(),
            Some("train_fraction")
        );
        assert_eq!(err("bogus = 1"), ConfigError::UnknownKey("bogus".into()));
        assert!(matches!(
            err("seed = 1\nseed = 2"),
            ConfigError::Duplicate { line: 3, .. }
        ));
        assert!(matches!(err("no equals sign"), ConfigError::Syntax { line: 2 }));
        assert!(err("lbp_variant = basic").to_string().starts_with("lbp_variant"));
        assert!(err("mlp_variant = 7").to_string().starts_with("mlp_variant"));
        assert!(parse_experiment("input = whole_eye", 0)
            .unwrap_err()
            .to_string()
            .starts_with("corpus"));
        assert!(parse_experiment("corpus = preset:nope", 0).is_err());
    }

    #[test]
    fn corpus_refs() {
        assert_eq!(
            CorpusRef::parse("preset:mascara:200:7").unwrap(),
            CorpusRef::Preset {
                name: "mascara".into(),
                subjects: Some(200),
                seed: Some(7)
            }
        );
        assert_eq!(
            CorpusRef::parse("d/manifest.csv")
                .unwrap()
                .resolve_path(Path::new("/x")),
            Some(PathBuf::from("/x/d/manifest.csv"))
        );
        assert!(CorpusRef::parse("preset:null:a").is_err());
    }

    #[test]
    fn synth_files() {
        let (cfg, seed) = parse_synth("preset = mascara\nn_subjects = 20\nimage_size = 64x48\n", 5).unwrap();
        assert_eq!(seed, 5);
        assert_eq!(cfg.n_subjects, 20);
        assert_eq!(cfg.image_size, (64, 48));
        assert_eq!(
            cfg.mascara_rate_female,
            SynthConfig::preset("mascara").unwrap().mascara_rate_female
        );
        assert!(parse_synth("gender_signal = loud", 0).is_err());
    }
}
