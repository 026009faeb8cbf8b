//! Suite reports and their JSON/CSV serializations.
//!
//! Every collection is a `Vec` in construction order and floats are written
//! with Rust's shortest round-trip formatting, so equal inputs give
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use alice_core::eval::{CalibrationHistogram, MeanAp, CALIBRATION_BINS};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::stats::Summary;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub key: String,
    pub value: String,
}

pub fn params(pairs: &[(&str, String)]) -> Vec<Param> {
    pairs
        .iter()
        .map(|(k, v)| Param {
            key: (*k).to_string(),
            value: v.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub name: String,
    pub mean_ap: Summary,
    /// Trials where every point was competent at some δ and no δ had a
    /// defined AP; these count as AP 1.
    pub saturated_trials: usize,
    pub per_trial: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub setting: Vec<Param>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<Summary>,
    pub estimators: Vec<EstimatorSummary>,
}

impl Row {
    pub fn param(&self, key: &str) -> Option<&str> {
        self.setting.iter().find(|p| p.key == key).map(|p| p.value.as_str())
    }

    pub fn estimator(&self, name: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.name == name)
    }

    pub fn mean_of(&self, name: &str) -> Option<f64> {
        self.estimator(name).and_then(|e| e.mean_ap.mean)
    }
}

/// One line of the per-δ table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerDeltaLine {
    pub row: usize,
    pub estimator: String,
    pub trial: usize,
    pub delta: f64,
    pub n_competent: usize,
    pub ap: Option<f64>,
}

/// Accumulates one report row over trials.
#[derive(Debug, Clone)]
pub struct RowBuilder {
    setting: Vec<Param>,
    accuracies: Vec<f64>,
    estimators: Vec<(String, Vec<Option<f64>>, usize)>,
    per_delta: Vec<PerDeltaLine>,
}

impl RowBuilder {
    pub fn new(setting: Vec<Param>) -> Self {
        Self {
            setting,
            accuracies: Vec::new(),
            estimators: Vec::new(),
            per_delta: Vec::new(),
        }
    }

    pub fn accuracy(&mut self, value: f64) {
        self.accuracies.push(value);
    }

    pub fn record(&mut self, name: &str, trial: usize, result: Option<&MeanAp>) {
        let idx = match self.estimators.iter().position(|(n, _, _)| n == name) {
            Some(i) => i,
            None => {
                self.estimators.push((name.to_string(), Vec::new(), 0));
                self.estimators.len() - 1
            }
        };
        let entry = &mut self.estimators[idx];
        entry.1.push(result.map(|m| m.mean));
        if result.is_some_and(|m| m.saturated) {
            entry.2 += 1;
        }
        if let Some(m) = result {
            for d in &m.per_delta {
                self.per_delta.push(PerDeltaLine {
                    row: 0,
                    estimator: name.to_string(),
                    trial,
                    delta: d.delta,
                    n_competent: d.n_competent,
                    ap: d.ap,
                });
            }
        }
    }

    pub fn finish(self, row_index: usize) -> (Row, Vec<PerDeltaLine>) {
        let estimators = self
            .estimators
            .into_iter()
            .map(|(name, values, saturated)| EstimatorSummary {
                name,
                mean_ap: Summary::of(&values),
                saturated_trials: saturated,
                per_trial: values,
            })
            .collect();
        let row = Row {
            setting: self.setting,
            accuracy: (!self.accuracies.is_empty()).then(|| Summary::of_all(&self.accuracies)),
            estimators,
        };
        let lines = self
            .per_delta
            .into_iter()
            .map(|mut l| {
                l.row = row_index;
                l
            })
            .collect();
        (row, lines)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub epsilon: f64,
    /// Points whose score exceeds ε.
    pub flagged: usize,
    /// Flagged points that were truly competent.
    pub flagged_competent: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub setting: Vec<Param>,
    pub delta: f64,
    /// Pooled over all trials.
    pub histogram: CalibrationHistogram,
    /// Largest |residual| over bins holding at least `min_count` points.
    pub min_count: usize,
    pub max_abs_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub decision: Option<Decision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    pub setting: Vec<Param>,
    pub estimator: String,
    pub origin: String,
    pub delta: f64,
    /// Ten equal-width bins over [0, 1]; 1.0 falls in the last bin.
    pub counts: Vec<usize>,
}

impl ScoreHistogram {
    pub fn new(setting: Vec<Param>, estimator: &str, origin: &str, delta: f64) -> Self {
        Self {
            setting,
            estimator: estimator.into(),
            origin: origin.into(),
            delta,
            counts: vec![0; CALIBRATION_BINS],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub setting: Vec<Param>,
    pub trial: usize,
    /// `(δ, mean score)` pairs.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub notes: Vec<String>,
    pub rows: Vec<Row>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub calibration: Vec<CalibrationEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub histograms: Vec<ScoreHistogram>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub curves: Vec<Curve>,
    #[serde(skip)]
    pub per_delta: Vec<PerDeltaLine>,
}

impl SuiteReport {
    pub fn new(suite: &str, config: &ExperimentConfig) -> Self {
        Self {
            suite: suite.into(),
            config: config.clone(),
            seeds: config.seeds(),
            notes: Vec::new(),
            rows: Vec::new(),
            calibration: Vec::new(),
            histograms: Vec::new(),
            curves: Vec::new(),
            per_delta: Vec::new(),
        }
    }

    pub fn push_rows(&mut self, builders: Vec<RowBuilder>) {
        for b in builders {
            let (row, lines) = b.finish(self.rows.len());
            self.rows.push(row);
            self.per_delta.extend(lines);
        }
    }

    /// Rows whose setting contains every `(key, value)` pair.
    pub fn find(&self, pairs: &[(&str, &str)]) -> Option<&Row> {
        self.rows
            .iter()
            .find(|r| pairs.iter().all(|(k, v)| r.param(k) == Some(*v)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// One line per (row, estimator).
    pub fn summary_csv(&self) -> String {
        let keys: Vec<&str> = self.rows.first().map(|r| r.setting.iter().map(|p| p.key.as_str()).collect()).unwrap_or_default();
        let mut out = String::new();
        for k in &keys {
            let _ = write!(out, "{k},");
        }
        out.push_str("estimator,trials,undefined_trials,saturated_trials,mean_ap,sd,accuracy_mean,accuracy_sd\n");
        for r in &self.rows {
            for e in &r.estimators {
                for p in &r.setting {
                    let _ = write!(out, "{},", p.value);
                }
                let acc = r.accuracy.as_ref();
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    e.name,
                    e.mean_ap.trials,
                    e.mean_ap.undefined_trials,
                    e.saturated_trials,
                    opt(e.mean_ap.mean),
                    opt(e.mean_ap.sd),
                    opt(acc.and_then(|a| a.mean)),
                    opt(acc.and_then(|a| a.sd)),
                );
            }
        }
        out
    }

    pub fn per_delta_csv(&self) -> String {
        let mut out = String::from("row,estimator,trial,delta,n_competent,ap\n");
        for l in &self.per_delta {
            let _ = writeln!(out, "{},{},{},{},{},{}", l.row, l.estimator, l.trial, l.delta, l.n_competent, opt(l.ap));
        }
        out
    }

    pub fn calibration_csv(&self) -> String {
        let mut out = String::from("entry,setting,delta,bin,lower,upper,count,competent,fraction,residual\n");
        for (i, c) in self.calibration.iter().enumerate() {
            for (b, bin) in c.histogram.bins.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{i},{},{},{b},{},{},{},{},{},{}",
                    setting_label(&c.setting),
                    c.delta,
                    bin.lower,
                    bin.upper,
                    bin.count,
                    bin.competent,
                    opt(bin.fraction),
                    opt(bin.residual)
                );
            }
        }
        out
    }

    pub fn histograms_csv(&self) -> String {
        let mut out = String::from("setting,estimator,origin,delta,bin,lower,upper,count\n");
        for h in &self.histograms {
            for (b, c) in h.counts.iter().enumerate() {
                let lower = b as f64 / CALIBRATION_BINS as f64;
                let upper = (b + 1) as f64 / CALIBRATION_BINS as f64;
                let _ = writeln!(out, "{},{},{},{},{b},{lower},{upper},{c}", setting_label(&h.setting), h.estimator, h.origin, h.delta);
            }
        }
        out
    }

    pub fn curves_csv(&self) -> String {
        let mut out = String::from("setting,trial,delta,mean_score\n");
        for c in &self.curves {
            for (d, m) in &c.points {
                let _ = writeln!(out, "{},{},{d},{m}", setting_label(&c.setting), c.trial);
            }
        }
        out
    }

    /// Writes `<suite>.json` plus the CSV tables that have content, and
    /// returns the written paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut files = vec![(format!("{}.json", self.suite), self.to_json()?), (format!("{}_summary.csv", self.suite), self.summary_csv())];
        if !self.per_delta.is_empty() {
            files.push((format!("{}_per_delta.csv", self.suite), self.per_delta_csv()));
        }
        if !self.calibration.is_empty() {
            files.push((format!("{}_calibration.csv", self.suite), self.calibration_csv()));
        }
        if !self.histograms.is_empty() {
            files.push((format!("{}_histograms.csv", self.suite), self.histograms_csv()));
        }
        if !self.curves.is_empty() {
            files.push((format!("{}_curves.csv", self.suite), self.curves_csv()));
        }
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body)?;
            written.push(path);
        }
        Ok(written)
    }

    /// Human-readable table for the terminal.
    pub fn render(&self) -> String {
        let mut out = format!("{} ({} trials)\n", self.suite, self.config.trials);
        for r in &self.rows {
            let _ = write!(out, "  {}", setting_label(&r.setting));
            if let Some(a) = &r.accuracy {
                let _ = write!(out, "  accuracy {}", a.display());
            }
            out.push('\n');
            for e in &r.estimators {
                let _ = writeln!(out, "    {:<20} {}", e.name, e.mean_ap.display());
            }
        }
        for c in &self.calibration {
            let _ = writeln!(
                out,
                "  calibration {} δ={}  max |residual| (bins ≥ {}) {}",
                setting_label(&c.setting),
                c.delta,
                c.min_count,
                c.max_abs_residual.map_or("n/a".into(), |v| format!("{v:.3}"))
            );
        }
        for n in &self.notes {
            let _ = writeln!(out, "  note: {n}");
        }
        out
    }
}

pub fn setting_label(setting: &[Param]) -> String {
    setting.iter().map(|p| format!("{}={}", p.key, p.value)).collect::<Vec<_>>().join(";")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
