//! Experiment configuration.
//!
//! Config files are UTF-8 text with one `key = value` pair per line. Blank
//! lines and lines starting with `#` are ignored. List values are
//! comma-separated.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use alice_core::models::ToyKind;
use alice_core::ErrorFunction;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Overlap,
    ModelUncertainty,
    Imbalance,
    Mixture,
    Calibration,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Overlap,
        Scenario::ModelUncertainty,
        Scenario::Imbalance,
        Scenario::Mixture,
        Scenario::Calibration,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Overlap => "overlap",
            Scenario::ModelUncertainty => "model-uncertainty",
            Scenario::Imbalance => "imbalance",
            Scenario::Mixture => "mixture",
            Scenario::Calibration => "calibration",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.name() == s.trim())
            .ok_or_else(|| HarnessError::InvalidConfig(format!("unknown scenario `{s}`")))
    }
}

/// Training regime of the base model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// One gradient step.
    Underfit,
    /// 200 gradient steps.
    Well,
    /// 256 hidden units on a 10% per-class training subsample, 1000 steps,
    /// no weight decay.
    Overfit,
}

pub const OVERFIT_HIDDEN: usize = 256;
pub const OVERFIT_SUBSAMPLE: f64 = 0.1;
pub const OVERFIT_ITERATIONS: usize = 1000;

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Underfit, Regime::Well, Regime::Overfit];

    pub fn name(&self) -> &'static str {
        match self {
            Regime::Underfit => "underfit",
            Regime::Well => "well",
            Regime::Overfit => "overfit",
        }
    }

    pub fn model(&self) -> ToyKind {
        match self {
            Regime::Overfit => ToyKind::Mlp {
                hidden: OVERFIT_HIDDEN,
                weight_decay: 0.0,
            },
            _ => ToyKind::mlp(),
        }
    }

    pub fn iterations(&self) -> usize {
        match self {
            Regime::Underfit => 1,
            Regime::Well => 200,
            Regime::Overfit => OVERFIT_ITERATIONS,
        }
    }

    /// Fraction of each training class the base model sees.
    pub fn subsample(&self) -> f64 {
        match self {
            Regime::Overfit => OVERFIT_SUBSAMPLE,
            _ => 1.0,
        }
    }
}

impl FromStr for Regime {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s.trim())
            .ok_or_else(|| HarnessError::InvalidConfig(format!("unknown regime `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    /// δ grid size.
    pub deltas: usize,
    /// Overrides each suite's own error-function list.
    pub error_fns: Option<Vec<ErrorFunction>>,
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
    pub regimes: Vec<Regime>,
    pub overlaps: Vec<f64>,
    pub proportions: Vec<f64>,
    pub keep_fraction: f64,
    pub mixture_size: usize,
    pub calibration_iterations: Vec<usize>,
    pub calibration_delta: f64,
    pub calibration_overlap: f64,
    /// Risk threshold for the optional decision column.
    pub epsilon: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 10,
            deltas: 100,
            error_fns: None,
            out_dir: None,
            regimes: Regime::ALL.to_vec(),
            overlaps: vec![0.0, 0.1, 0.25, 0.5, 0.75, 1.0],
            proportions: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            keep_fraction: 0.05,
            mixture_size: 1000,
            calibration_iterations: vec![1, 5, 200],
            calibration_delta: 0.2,
            calibration_overlap: 0.5,
            epsilon: None,
        }
    }
}

fn list<T: FromStr>(value: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("`{s}`: {e}")))
        .collect()
}

fn scalar<T: FromStr>(value: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("`{value}`: {e}"))
}

impl ExperimentConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| HarnessError::Config {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (key, value) = line.split_once('=').ok_or_else(|| err("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            seen.push(key.to_string());
            cfg.set(key, value).map_err(err)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "seed" => self.seed = scalar(value)?,
            "trials" => self.trials = scalar(value)?,
            "deltas" => self.deltas = scalar(value)?,
            "error_fn" | "error_fns" => self.error_fns = Some(list(value)?),
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            "regimes" => self.regimes = list(value)?,
            "overlaps" => self.overlaps = list(value)?,
            "proportions" => self.proportions = list(value)?,
            "keep_fraction" => self.keep_fraction = scalar(value)?,
            "mixture_size" => self.mixture_size = scalar(value)?,
            "calibration_iterations" => self.calibration_iterations = list(value)?,
            "calibration_delta" => self.calibration_delta = scalar(value)?,
            "calibration_overlap" => self.calibration_overlap = scalar(value)?,
            "epsilon" => self.epsilon = Some(scalar(value)?),
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::InvalidConfig(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be >= 1");
        }
        if self.deltas < 2 {
            return bad("deltas must be >= 2");
        }
        if self.error_fns.as_ref().is_some_and(Vec::is_empty) {
            return bad("error_fn list is empty");
        }
        if self.overlaps.iter().any(|o| !(0.0..=1.0).contains(o)) {
            return bad("overlaps must lie in [0, 1]");
        }
        if self.proportions.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("proportions must lie in [0, 1]");
        }
        if !(self.keep_fraction > 0.0 && self.keep_fraction <= 1.0) {
            return bad("keep_fraction must lie in (0, 1]");
        }
        if self.calibration_iterations.contains(&0) {
            return bad("calibration iterations must be >= 1");
        }
        if self.calibration_delta.is_nan() || self.calibration_delta < 0.0 {
            return bad("calibration_delta must be >= 0");
        }
        if self.mixture_size == 0 {
            return bad("mixture_size must be >= 1");
        }
        Ok(())
    }

    /// Seed of trial `t`.
    pub fn trial_seed(&self, t: usize) -> u64 {
        self.seed.wrapping_add(t as u64)
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.trials).map(|t| self.trial_seed(t)).collect()
    }

    pub fn error_fns_or(&self, defaults: &[ErrorFunction]) -> Vec<ErrorFunction> {
        self.error_fns.clone().unwrap_or_else(|| defaults.to_vec())
    }
}
