//! Run configuration: strict TOML parsing with preset overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use lmbtrack_core::glmb::{AssociationStrategy, TruncationParams};
use lmbtrack_core::metrics::MetricConfig;
use lmbtrack_core::models::{preset, ScenarioSpec, PRESET_NAMES};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TrackerKind {
    Lmb,
    SteLmb,
}

impl TrackerKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Lmb => "lmb",
            Self::SteLmb => "ste-lmb",
        }
    }
}

impl fmt::Display for TrackerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: ScenarioSpec,
    pub trackers: Vec<TrackerKind>,
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the available parallelism.
    pub threads: Option<usize>,
    pub truncation: TruncationParams,
    pub gating: bool,
    pub metrics: MetricConfig,
    pub out: PathBuf,
    /// Write zeros in the per-step timing columns of metrics.csv.
    pub reproducible: bool,
}

impl RunConfig {
    pub fn from_preset(name: &str) -> Result<Self, ConfigError> {
        let scenario = preset(name).ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?;
        Ok(Self {
            scenario,
            trackers: vec![TrackerKind::SteLmb],
            trials: 100,
            seed: 1,
            threads: None,
            truncation: TruncationParams::default(),
            gating: true,
            metrics: MetricConfig::default(),
            out: PathBuf::from("out"),
            reproducible: false,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.trials < 1 {
            return invalid("trials must be at least 1");
        }
        if self.trackers.is_empty() {
            return invalid("at least one tracker is required");
        }
        if self.truncation.max_hypotheses < 1 || self.truncation.gibbs_iterations < 1 {
            return invalid("max_hypotheses and gibbs_iterations must be at least 1");
        }
        if self.threads == Some(0) {
            return invalid("threads must be at least 1");
        }
        self.metrics.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.scenario.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Io { path: PathBuf, source: std::io::Error },
    Syntax(String),
    Schema {
        path: String,
        line: Option<usize>,
        message: String,
        suggestion: Option<String>,
    },
    UnknownPreset(String),
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Self::Syntax(m) => write!(f, "config syntax error: {m}"),
            Self::Schema {
                path,
                line,
                message,
                suggestion,
            } => {
                write!(f, "config error at `{path}`")?;
                if let Some(l) = line {
                    write!(f, " (line {l})")?;
                }
                write!(f, ": {message}")?;
                if let Some(s) = suggestion {
                    write!(f, "; did you mean `{s}`?")?;
                }
                Ok(())
            }
            Self::UnknownPreset(n) => write!(f, "unknown preset `{n}` (known: {})", PRESET_NAMES.join(", ")),
            Self::Invalid(m) => write!(f, "invalid configuration: {m}"),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<toml::Table>,
    run: Option<RawRun>,
    truncation: Option<RawTruncation>,
    metrics: Option<RawMetrics>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    tracker: Option<TrackerKind>,
    trials: Option<usize>,
    seed: Option<u64>,
    threads: Option<usize>,
    out: Option<PathBuf>,
    reproducible: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTruncation {
    max_hypotheses: Option<usize>,
    gibbs_iterations: Option<usize>,
    gating: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetrics {
    cutoff: Option<f64>,
    order: Option<f64>,
    window: Option<u32>,
}

const ALIASES: &[(&str, &str)] = &[
    ("pd", "detection_probability"),
    ("p_d", "detection_probability"),
    ("ps", "survival_probability"),
    ("p_s", "survival_probability"),
    ("lambda", "clutter_rate"),
    ("lambda_c", "clutter_rate"),
    ("clutter", "clutter_rate"),
    ("k", "duration"),
    ("steps", "duration"),
    ("dt", "sampling_interval"),
    ("c", "cutoff"),
    ("p", "order"),
    ("iterations", "gibbs_iterations"),
];

/// Closest known key for an unknown one, from the alias table or by edit
/// distance.
pub fn suggest_key(unknown: &str, expected: &[&str]) -> Option<String> {
    let lower = unknown.to_ascii_lowercase();
    if let Some((_, target)) = ALIASES.iter().find(|(a, t)| *a == lower && expected.contains(t)) {
        return Some(target.to_string());
    }
    expected
        .iter()
        .map(|e| (strsim::levenshtein(&lower, e), *e))
        .filter(|(d, e)| *d <= 3.max(e.len() / 3))
        .min()
        .map(|(_, e)| e.to_string())
}

/// Parses a serde "unknown field `x`, expected one of `a`, `b`" message.
fn unknown_field(message: &str) -> Option<(String, Vec<String>)> {
    let rest = message.strip_prefix("unknown field `")?;
    let (name, tail) = rest.split_once('`')?;
    let expected = tail.split('`').skip(1).step_by(2).map(str::to_string).collect();
    Some((name.to_string(), expected))
}

/// 1-based line of `section.key` (or a top-level `key`) in TOML text.
fn line_of(text: &str, path: &[&str]) -> Option<usize> {
    let (key, tables) = path.split_last()?;
    let want = tables.join(".");
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[') {
            current = h.trim_start_matches('[').split(']').next().unwrap_or("").trim().to_string();
            if tables.is_empty() && current == *key {
                return Some(i + 1);
            }
            continue;
        }
        if let Some((k, _)) = line.split_once('=') {
            if current == want && k.trim().trim_matches('"') == *key {
                return Some(i + 1);
            }
        }
    }
    None
}

fn schema_error<E: fmt::Display>(text: &str, prefix: &[&str], err: serde_path_to_error::Error<E>) -> ConfigError {
    let inner = err.inner().to_string();
    let mut segments: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
    segments.extend(err.path().iter().map(|s| s.to_string()).filter(|s| s != "?"));
    let mut suggestion = None;
    if let Some((name, expected)) = unknown_field(&inner) {
        let expected: Vec<&str> = expected.iter().map(String::as_str).collect();
        suggestion = suggest_key(&name, &expected);
        if segments.last() != Some(&name) {
            segments.push(name);
        }
    }
    let path: Vec<&str> = segments.iter().map(String::as_str).collect();
    // for nested scenario entries only the first table level is located
    let line = line_of(text, &path).or_else(|| line_of(text, &path[..path.len().min(2)]));
    ConfigError::Schema {
        path: segments.join("."),
        line,
        message: inner,
        suggestion,
    }
}

fn merge(base: &mut toml::Table, overrides: toml::Table) {
    for (k, v) in overrides {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Resolves a scenario table: an optional `preset` key plus field overrides,
/// or a complete scenario.
fn resolve_scenario(text: &str, mut table: toml::Table) -> Result<ScenarioSpec, ConfigError> {
    let base = match table.remove("preset") {
        Some(toml::Value::String(name)) => {
            let spec = preset(&name).ok_or(ConfigError::UnknownPreset(name))?;
            toml::Table::try_from(&spec).expect("presets serialise")
        }
        Some(_) => {
            return Err(ConfigError::Schema {
                path: "scenario.preset".into(),
                line: line_of(text, &["scenario", "preset"]),
                message: "expected a preset name".into(),
                suggestion: None,
            })
        }
        None => toml::Table::new(),
    };
    let mut merged = base;
    merge(&mut merged, table);
    serde_path_to_error::deserialize(toml::Value::Table(merged)).map_err(|e| schema_error(text, &["scenario"], e))
}

/// Parses configuration text. Missing sections keep the defaults of the
/// `scenario1-linear` preset run.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let raw: RawConfig =
        serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| schema_error(text, &[], e))?;
    let mut cfg = RunConfig::from_preset("scenario1-linear")?;
    if let Some(s) = raw.scenario {
        cfg.scenario = resolve_scenario(text, s)?;
    }
    if let Some(r) = raw.run {
        if let Some(t) = r.tracker {
            cfg.trackers = vec![t];
        }
        cfg.trials = r.trials.unwrap_or(cfg.trials);
        cfg.seed = r.seed.unwrap_or(cfg.seed);
        cfg.threads = r.threads.or(cfg.threads);
        cfg.out = r.out.unwrap_or(cfg.out);
        cfg.reproducible = r.reproducible.unwrap_or(cfg.reproducible);
    }
    if let Some(t) = raw.truncation {
        cfg.truncation.max_hypotheses = t.max_hypotheses.unwrap_or(cfg.truncation.max_hypotheses);
        cfg.truncation.gibbs_iterations = t.gibbs_iterations.unwrap_or(cfg.truncation.gibbs_iterations);
        cfg.gating = t.gating.unwrap_or(cfg.gating);
    }
    if let Some(m) = raw.metrics {
        cfg.metrics.cutoff = m.cutoff.unwrap_or(cfg.metrics.cutoff);
        cfg.metrics.order = m.order.unwrap_or(cfg.metrics.order);
        cfg.metrics.window = m.window.unwrap_or(cfg.metrics.window);
    }
    cfg.truncation.strategy = AssociationStrategy::Auto;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

/// A preset name or the path of a config file.
pub fn load_scenario_arg(arg: &str) -> Result<RunConfig, ConfigError> {
    if PRESET_NAMES.contains(&arg) {
        RunConfig::from_preset(arg)
    } else {
        parse_config(Path::new(arg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_without_overrides() {
        let cfg = parse_config_str("[scenario]\npreset = \"scenario1-linear\"\n").unwrap();
        assert_eq!(cfg.scenario, lmbtrack_core::models::scenario1_linear());
        assert_eq!(cfg.trials, 100);
        assert_eq!(cfg.metrics, MetricConfig::default());
    }

    #[test]
    fn field_overrides() {
        let text = r#"
[scenario]
preset = "scenario2-ct"
detection_probability = 0.95
duration = 20

[scenario.measurement]
sigma_range = 5.0

[run]
tracker = "lmb"
trials = 3
seed = 42

[metrics]
window = 5
"#;
        let cfg = parse_config_str(text).unwrap();
        assert_eq!(cfg.scenario.detection_probability, 0.95);
        assert_eq!(cfg.scenario.duration, 20);
        assert!(matches!(
            cfg.scenario.measurement,
            lmbtrack_core::models::MeasurementSpec::RangeBearing { sigma_range, .. } if sigma_range == 5.0
        ));
        assert_eq!(cfg.scenario.clutter_rate, 15.0);
        assert_eq!(cfg.trackers, vec![TrackerKind::Lmb]);
        assert_eq!((cfg.trials, cfg.seed, cfg.metrics.window), (3, 42, 5));
    }

    #[test]
    fn unknown_scenario_key_suggests_name() {
        let text = "[scenario]\npreset = \"scenario1-linear\"\npd = 0.9\n";
        let err = parse_config_str(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("scenario.pd"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("detection_probability"), "{msg}");
    }

    #[test]
    fn unknown_section_keys_rejected() {
        let err = parse_config_str("[run]\ntrails = 3\n").unwrap_err().to_string();
        assert!(err.contains("run.trails") && err.contains("line 2") && err.contains("`trials`"), "{err}");
        let err = parse_config_str("[output]\nx = 1\n").unwrap_err().to_string();
        assert!(err.contains("output") && err.contains("line 1"), "{err}");
    }

    #[test]
    fn wrong_types_report_path() {
        let err = parse_config_str("[scenario]\npreset = \"scenario1-linear\"\nclutter_rate = \"many\"\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("scenario.clutter_rate") && err.contains("line 3"), "{err}");
    }

    #[test]
    fn bad_values_and_presets() {
        assert!(matches!(
            parse_config_str("[scenario]\npreset = \"scenario9\"\n"),
            Err(ConfigError::UnknownPreset(_))
        ));
        assert!(matches!(parse_config_str("[run]\ntrials = 0\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse_config_str("[run\n"), Err(ConfigError::Syntax(_))));
    }

    #[test]
    fn full_scenario_without_preset() {
        let spec = lmbtrack_core::models::scenario1_linear();
        let mut doc = toml::Table::new();
        doc.insert("scenario".into(), toml::Value::try_from(&spec).unwrap());
        let text = toml::to_string(&doc).unwrap();
        let cfg = parse_config_str(&text).unwrap();
        assert_eq!(cfg.scenario, spec);
    }

    #[test]
    fn suggestions() {
        let fields = ["detection_probability", "survival_probability", "clutter_rate", "duration"];
        assert_eq!(suggest_key("pd", &fields).as_deref(), Some("detection_probability"));
        assert_eq!(suggest_key("duraton", &fields).as_deref(), Some("duration"));
        assert_eq!(suggest_key("zzzzzzzzzzzzz", &fields), None);
    }
}
