//! `key = value` run configuration with command-line overrides.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::ingest::AccelRange;
use crate::nn::Hyperparams;
use crate::pipeline::{combination_catalog, FitScope, DEFAULT_MAX_GAP};

pub const DATA_ROOT_ENV: &str = "HARBENCH_DATA_ROOT";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("invalid value for {key}: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
}

/// Fully resolved settings of a `run`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_root: Option<PathBuf>,
    pub combos: Vec<char>,
    pub hyper: Hyperparams,
    pub norm_scope: FitScope,
    pub accel_range: AccelRange,
    pub subsample: usize,
    pub max_gap: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_root: None,
            combos: combination_catalog().iter().map(|c| c.id).collect(),
            hyper: Hyperparams::default(),
            norm_scope: FitScope::TrainOnly,
            accel_range: AccelRange::G16,
            subsample: 1,
            max_gap: DEFAULT_MAX_GAP,
            out: PathBuf::from("harbench-out"),
        }
    }
}

/// Values given on the command line; `None` leaves the file or default value.
#[derive(Debug, Clone, Default)]
pub struct ConfigOverrides {
    pub data_root: Option<PathBuf>,
    pub combos: Option<String>,
    pub seed: Option<u64>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
    pub min_delta: Option<f64>,
    pub dropout: Option<f64>,
    pub norm_scope: Option<String>,
    pub accel_range: Option<String>,
    pub subsample: Option<usize>,
    pub max_gap: Option<usize>,
    pub out: Option<PathBuf>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::InvalidValue { key: key.into(), reason: e.to_string() })
}

pub fn parse_combos(value: &str) -> Result<Vec<char>, ConfigError> {
    let invalid = |reason: String| ConfigError::InvalidValue { key: "combos".into(), reason };
    let value = value.trim();
    if value.eq_ignore_ascii_case("all") {
        return Ok(combination_catalog().iter().map(|c| c.id).collect());
    }
    let known: Vec<char> = combination_catalog().iter().map(|c| c.id).collect();
    let mut ids = Vec::new();
    for part in value.split(',').map(str::trim) {
        let mut chars = part.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if known.contains(&c.to_ascii_lowercase()) => {
                let c = c.to_ascii_lowercase();
                if !ids.contains(&c) {
                    ids.push(c);
                }
            }
            _ => return Err(invalid(format!("{part:?} is not a combination letter a-o"))),
        }
    }
    if ids.is_empty() {
        return Err(invalid("no combinations selected".into()));
    }
    Ok(ids)
}

impl RunConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        match key {
            "data_root" => self.data_root = Some(PathBuf::from(value)),
            "combos" => self.combos = parse_combos(value)?,
            "seed" => self.hyper.seed = parse(key, value)?,
            "lr" => self.hyper.learning_rate = parse(key, value)?,
            "batch_size" => self.hyper.batch_size = parse(key, value)?,
            "max_epochs" => self.hyper.max_epochs = parse(key, value)?,
            "patience" => self.hyper.patience = parse(key, value)?,
            "min_delta" => self.hyper.min_delta = parse(key, value)?,
            "dropout" => self.hyper.dropout_rate = parse(key, value)?,
            "norm_scope" => self.norm_scope = parse(key, value)?,
            "accel_range" => self.accel_range = parse(key, value)?,
            "subsample" => self.subsample = parse(key, value)?,
            "max_gap" => self.max_gap = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.hyper.validate().map_err(|e| {
            let key = match &e {
                crate::nn::NnError::InvalidHyperparam { name, .. } => (*name).to_string(),
                _ => "hyperparameters".to_string(),
            };
            ConfigError::InvalidValue { key, reason: e.to_string() }
        })?;
        if self.subsample == 0 {
            return Err(ConfigError::InvalidValue { key: "subsample".into(), reason: "must be at least 1".into() });
        }
        if self.combos.is_empty() {
            return Err(ConfigError::InvalidValue { key: "combos".into(), reason: "no combinations selected".into() });
        }
        Ok(())
    }

    /// Renders the configuration in the same format [`load_config`] reads.
    pub fn to_config_text(&self) -> String {
        let h = &self.hyper;
        let mut out = String::new();
        if let Some(root) = &self.data_root {
            let _ = writeln!(out, "data_root = {}", root.display());
        }
        let combos: Vec<String> = self.combos.iter().map(char::to_string).collect();
        let _ = writeln!(out, "combos = {}", combos.join(","));
        let _ = writeln!(out, "seed = {}", h.seed);
        let _ = writeln!(out, "lr = {:?}", h.learning_rate);
        let _ = writeln!(out, "batch_size = {}", h.batch_size);
        let _ = writeln!(out, "max_epochs = {}", h.max_epochs);
        let _ = writeln!(out, "patience = {}", h.patience);
        let _ = writeln!(out, "min_delta = {:?}", h.min_delta);
        let _ = writeln!(out, "dropout = {:?}", h.dropout_rate);
        let _ = writeln!(out, "norm_scope = {}", self.norm_scope);
        let _ = writeln!(out, "accel_range = {}", self.accel_range);
        let _ = writeln!(out, "subsample = {}", self.subsample);
        let _ = writeln!(out, "max_gap = {}", self.max_gap);
        let _ = writeln!(out, "out = {}", self.out.display());
        out
    }
}

/// Resolves a configuration: defaults, then the file, then overrides. The
/// data root falls back to `HARBENCH_DATA_ROOT` when neither sets it.
pub fn load_config(text: &str, overrides: &ConfigOverrides) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: idx + 1 })?;
        let (key, value) = (key.trim(), value.trim());
        if !cfg.set(key, value)? {
            return Err(ConfigError::UnknownKey { line: idx + 1, key: key.to_string() });
        }
    }

    let o = overrides;
    if let Some(v) = &o.data_root {
        cfg.data_root = Some(v.clone());
    }
    if let Some(v) = &o.combos {
        cfg.combos = parse_combos(v)?;
    }
    if let Some(v) = o.seed {
        cfg.hyper.seed = v;
    }
    if let Some(v) = o.lr {
        cfg.hyper.learning_rate = v;
    }
    if let Some(v) = o.batch_size {
        cfg.hyper.batch_size = v;
    }
    if let Some(v) = o.max_epochs {
        cfg.hyper.max_epochs = v;
    }
    if let Some(v) = o.patience {
        cfg.hyper.patience = v;
    }
    if let Some(v) = o.min_delta {
        cfg.hyper.min_delta = v;
    }
    if let Some(v) = o.dropout {
        cfg.hyper.dropout_rate = v;
    }
    if let Some(v) = &o.norm_scope {
        cfg.norm_scope = parse("norm_scope", v)?;
    }
    if let Some(v) = &o.accel_range {
        cfg.accel_range = parse("accel_range", v)?;
    }
    if let Some(v) = o.subsample {
        cfg.subsample = v;
    }
    if let Some(v) = o.max_gap {
        cfg.max_gap = v;
    }
    if let Some(v) = &o.out {
        cfg.out = v.clone();
    }
    if cfg.data_root.is_none() {
        cfg.data_root = std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from);
    }
    cfg.validate()?;
    Ok(cfg)
}
