//! Ranking evaluation of competence scores.
//!
//! For a tolerance δ a point is competent when its true error is strictly
//! below δ. Estimators are compared by the Average Precision of their scores
//! against those binary labels, averaged over a grid of δ values. Only the
//! order of the scores matters, so uncalibrated baselines can be compared with
//! calibrated ones.

use std::fmt::Write as _;

use ndarray::{ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{AliceError, Result};
use crate::estimator::AliceEstimator;
use crate::types::ProbabilityVector;

/// Ground-truth competence at one tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct CompetenceLabels {
    errors: Vec<f64>,
    delta: f64,
    competent: Vec<bool>,
}

impl CompetenceLabels {
    pub fn new(errors: &[f64], delta: f64) -> Self {
        Self {
            errors: errors.to_vec(),
            delta,
            competent: errors.iter().map(|e| *e < delta).collect(),
        }
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn competent(&self) -> &[bool] {
        &self.competent
    }

    pub fn n_competent(&self) -> usize {
        self.competent.iter().filter(|c| **c).count()
    }

    /// All competent or none competent: AP carries no ranking information.
    pub fn is_degenerate(&self) -> bool {
        let k = self.n_competent();
        k == 0 || k == self.competent.len()
    }
}

/// Average Precision of `scores` as a ranking of `positives`.
///
/// Tied scores form a single threshold: every positive in a tie group is
/// credited with the precision obtained after the whole group is included.
/// This equals the mean over positives `i` of
/// `#{positives j : s_j >= s_i} / #{j : s_j >= s_i}`, and makes the AP of a
/// constant score exactly the positive rate.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Result<f64> {
    if scores.len() != positives.len() {
        return Err(AliceError::DimensionMismatch {
            expected: scores.len(),
            got: positives.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(AliceError::InvalidArgument("NaN score".into()));
    }
    let total = positives.iter().filter(|p| **p).count();
    if total == 0 {
        return Err(AliceError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)));

    let mut seen = 0usize;
    let mut hits = 0usize;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let mut group_hits = 0usize;
        let mut j = i;
        while j < order.len() && scores[order[j]] == s {
            if positives[order[j]] {
                group_hits += 1;
            }
            j += 1;
        }
        seen += j - i;
        hits += group_hits;
        if group_hits > 0 {
            ap += group_hits as f64 * (hits as f64 / seen as f64);
        }
        i = j;
    }
    Ok(ap / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaAp {
    pub delta: f64,
    pub n_competent: usize,
    /// `None` when every point, or no point, is competent at this δ.
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanAp {
    /// Mean over the δ's with a defined AP.
    pub mean: f64,
    pub per_delta: Vec<DeltaAp>,
    pub excluded_deltas: usize,
    /// Set when no δ had a defined AP but some δ had every point competent;
    /// `mean` is then 1, the AP of any ranking of an all-positive set.
    #[serde(default)]
    pub saturated: bool,
}

/// Mean AP over `grid`. `scores_at(i, δ)` returns the scores of every point at
/// the `i`-th tolerance; δ-independent estimators may return the same vector
/// each time.
pub fn mean_ap<F>(mut scores_at: F, errors: &[f64], grid: &[f64]) -> Result<MeanAp>
where
    F: FnMut(usize, f64) -> Result<Vec<f64>>,
{
    let mut per_delta = Vec::with_capacity(grid.len());
    let mut sum = 0.0;
    let mut defined = 0usize;
    for (i, &delta) in grid.iter().enumerate() {
        let labels = CompetenceLabels::new(errors, delta);
        let ap = if labels.is_degenerate() {
            None
        } else {
            let scores = scores_at(i, delta)?;
            Some(average_precision(&scores, labels.competent())?)
        };
        if let Some(v) = ap {
            sum += v;
            defined += 1;
        }
        per_delta.push(DeltaAp {
            delta,
            n_competent: labels.n_competent(),
            ap,
        });
    }
    if defined == 0 {
        return Err(AliceError::AllDeltasUndefined);
    }
    Ok(MeanAp {
        mean: sum / defined as f64,
        excluded_deltas: grid.len() - defined,
        per_delta,
        saturated: false,
    })
}

/// Like [`mean_ap`], but when every δ is undefined and at least one δ labels
/// every point competent, returns a saturated result with mean 1.
pub fn mean_ap_saturating<F>(scores_at: F, errors: &[f64], grid: &[f64]) -> Result<MeanAp>
where
    F: FnMut(usize, f64) -> Result<Vec<f64>>,
{
    match mean_ap(scores_at, errors, grid) {
        Err(AliceError::AllDeltasUndefined) => {
            let per_delta: Vec<DeltaAp> = grid
                .iter()
                .map(|&delta| {
                    let labels = CompetenceLabels::new(errors, delta);
                    DeltaAp {
                        delta,
                        n_competent: labels.n_competent(),
                        ap: None,
                    }
                })
                .collect();
            if !errors.is_empty() && per_delta.iter().any(|d| d.n_competent == errors.len()) {
                Ok(MeanAp {
                    mean: 1.0,
                    excluded_deltas: grid.len(),
                    per_delta,
                    saturated: true,
                })
            } else {
                Err(AliceError::AllDeltasUndefined)
            }
        }
        other => other,
    }
}

/// Mean AP of a `points × grid` score matrix.
pub fn mean_ap_matrix(scores: ArrayView2<'_, f64>, errors: &[f64], grid: &[f64]) -> Result<MeanAp> {
    if scores.ncols() != grid.len() || scores.nrows() != errors.len() {
        return Err(AliceError::DimensionMismatch {
            expected: errors.len() * grid.len(),
            got: scores.len(),
        });
    }
    mean_ap(|i, _| Ok(scores.column(i).to_vec()), errors, grid)
}

/// Mean AP of a δ-independent score vector.
pub fn mean_ap_fixed(scores: &[f64], errors: &[f64], grid: &[f64]) -> Result<MeanAp> {
    mean_ap(|_, _| Ok(scores.to_vec()), errors, grid)
}

pub const CALIBRATION_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub competent: usize,
    /// Empirical competent fraction; `None` for an empty bin.
    pub fraction: Option<f64>,
    /// `fraction - midpoint`.
    pub residual: Option<f64>,
}

impl CalibrationBin {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationHistogram {
    pub bins: Vec<CalibrationBin>,
}

impl CalibrationHistogram {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// Largest |residual| over bins holding at least `min_count` points.
    pub fn max_abs_residual(&self, min_count: usize) -> Option<f64> {
        self.bins
            .iter()
            .filter(|b| b.count >= min_count)
            .filter_map(|b| b.residual)
            .map(f64::abs)
            .reduce(f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,lower,upper,count,competent,fraction,residual\n");
        for (i, b) in self.bins.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{},{},{},{},{},{}",
                b.lower,
                b.upper,
                b.count,
                b.competent,
                opt(b.fraction),
                opt(b.residual)
            );
        }
        out
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Bin index of a score in `[0, 1]`; 1.0 falls in the last bin.
pub fn calibration_bin(score: f64) -> usize {
    ((score * CALIBRATION_BINS as f64).floor() as usize).min(CALIBRATION_BINS - 1)
}

/// Ten half-open bins `[0, 0.1), …, [0.9, 1.0]` of scores against observed
/// competence.
pub fn calibration_histogram(scores: &[f64], competent: &[bool]) -> Result<CalibrationHistogram> {
    if scores.len() != competent.len() {
        return Err(AliceError::DimensionMismatch {
            expected: scores.len(),
            got: competent.len(),
        });
    }
    if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(AliceError::InvalidArgument(format!("score {s} outside [0, 1]")));
    }
    let mut counts = [0usize; CALIBRATION_BINS];
    let mut hits = [0usize; CALIBRATION_BINS];
    for (s, c) in scores.iter().zip(competent) {
        let b = calibration_bin(*s);
        counts[b] += 1;
        if *c {
            hits[b] += 1;
        }
    }
    let bins = (0..CALIBRATION_BINS)
        .map(|b| {
            let lower = b as f64 / CALIBRATION_BINS as f64;
            let upper = (b + 1) as f64 / CALIBRATION_BINS as f64;
            let fraction = (counts[b] > 0).then(|| hits[b] as f64 / counts[b] as f64);
            CalibrationBin {
                lower,
                upper,
                count: counts[b],
                competent: hits[b],
                fraction,
                residual: fraction.map(|f| f - 0.5 * (lower + upper)),
            }
        })
        .collect();
    Ok(CalibrationHistogram { bins })
}

/// Mean ALICE score over all points at each δ of `grid`.
pub fn mean_score_vs_delta(
    estimator: &AliceEstimator,
    features: ArrayView2<'_, f64>,
    predictions: &[ProbabilityVector],
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let m = estimator.score_matrix(features, predictions, grid)?;
    let means = m.mean_axis(Axis(0)).ok_or_else(|| AliceError::InvalidArgument("no points".into()))?;
    Ok(grid.iter().copied().zip(means.iter().copied()).collect())
}

/// Column means of a precomputed `points × grid` score matrix.
pub fn mean_curve(scores: ArrayView2<'_, f64>, grid: &[f64]) -> Vec<(f64, f64)> {
    grid.iter()
        .enumerate()
        .map(|(i, d)| (*d, mean(scores.column(i))))
        .collect()
}

fn mean(v: ArrayView1<'_, f64>) -> f64 {
    v.sum() / v.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub name: String,
    pub mean_ap: f64,
    pub excluded_deltas: usize,
    #[serde(default)]
    pub saturated: bool,
    pub per_delta: Vec<DeltaAp>,
}

impl EstimatorReport {
    pub fn new(name: impl Into<String>, m: MeanAp) -> Self {
        Self {
            name: name.into(),
            mean_ap: m.mean,
            excluded_deltas: m.excluded_deltas,
            saturated: m.saturated,
            per_delta: m.per_delta,
        }
    }
}

/// Results of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub error_fn: String,
    pub seeds: Vec<u64>,
    pub grid: Vec<f64>,
    pub estimators: Vec<EstimatorReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub calibration: Option<CalibrationHistogram>,
}

impl EvaluationReport {
    /// One row per (estimator, δ); undefined APs are left blank.
    pub fn per_delta_csv(&self) -> String {
        let mut out = String::from("estimator,delta,n_competent,ap\n");
        for e in &self.estimators {
            for d in &e.per_delta {
                let _ = writeln!(out, "{},{},{},{}", e.name, d.delta, d.n_competent, opt(d.ap));
            }
        }
        out
    }

    pub fn get(&self, name: &str) -> Option<&EstimatorReport> {
        self.estimators.iter().find(|e| e.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_enumerated_ap() {
        let ap = average_precision(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_all_positive() {
        assert_eq!(average_precision(&[0.9, 0.8, 0.1, 0.0], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.1, 0.5, 0.3], &[true, true, true]).unwrap(), 1.0);
    }

    #[test]
    fn constant_scores_give_base_rate() {
        let pos = [true, false, false, true, false];
        let ap = average_precision(&[0.4; 5], &pos).unwrap();
        assert!((ap - 0.4).abs() < 1e-15);
    }

    #[test]
    fn no_positives_is_undefined() {
        assert!(matches!(average_precision(&[0.1, 0.2], &[false, false]), Err(AliceError::NoPositives)));
        assert!(average_precision(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn mean_ap_excludes_degenerate_deltas() {
        let errors = [0.0, 0.5, 1.0];
        let grid = [0.0, 0.75, 2.0];
        let m = mean_ap_fixed(&[3.0, 2.0, 1.0], &errors, &grid).unwrap();
        assert_eq!(m.excluded_deltas, 2);
        assert_eq!(m.mean, 1.0);
        assert_eq!(m.per_delta[0].ap, None);
        assert!(matches!(mean_ap_fixed(&[1.0, 2.0, 3.0], &errors, &[0.0]), Err(AliceError::AllDeltasUndefined)));
    }

    #[test]
    fn oracle_estimator_is_perfect() {
        let errors = [0.1, 0.9, 0.4, 0.7, 0.0];
        let max = 0.9;
        let scores: Vec<f64> = errors.iter().map(|e| 1.0 - e / max).collect();
        let grid = crate::error_fn::delta_grid(&errors, 20).unwrap();
        assert_eq!(mean_ap_fixed(&scores, &errors, &grid).unwrap().mean, 1.0);
    }

    #[test]
    fn constant_estimator_mean_ap_is_rate() {
        // 3 of 5 competent at every δ in (0.2, 0.8]
        let errors = [0.1, 0.9, 0.2, 0.95, 0.0];
        let grid = [0.3, 0.5, 0.8];
        let m = mean_ap_fixed(&[0.5; 5], &errors, &grid).unwrap();
        assert!((m.mean - 0.6).abs() < 1e-15);
    }

    #[test]
    fn calibration_bins() {
        let h = calibration_histogram(&[0.05, 0.05, 1.0, 0.9, 0.35], &[false, false, true, false, true]).unwrap();
        assert_eq!(h.total(), 5);
        assert_eq!(h.bins[0].count, 2);
        assert_eq!(h.bins[0].fraction, Some(0.0));
        assert!((h.bins[0].residual.unwrap() + 0.05).abs() < 1e-15);
        assert_eq!(h.bins[9].count, 2);
        assert_eq!(h.bins[3].count, 1);
        assert_eq!(h.bins[5].fraction, None);
        assert!(calibration_histogram(&[1.5], &[true]).is_err());
    }

    #[test]
    fn csv_emitters() {
        let h = calibration_histogram(&[0.15], &[true]).unwrap();
        let csv = h.to_csv();
        assert!(csv.starts_with("bin,lower,upper,count"));
        assert!(csv.contains("\n1,0.1,0.2,1,1,1,"));
        let r = EvaluationReport {
            error_fn: "xent".into(),
            seeds: vec![1],
            grid: vec![0.0],
            estimators: vec![EstimatorReport {
                name: "alice".into(),
                mean_ap: 1.0,
                excluded_deltas: 1,
                saturated: false,
                per_delta: vec![DeltaAp {
                    delta: 0.0,
                    n_competent: 0,
                    ap: None,
                }],
            }],
            calibration: None,
        };
        assert_eq!(r.per_delta_csv(), "estimator,delta,n_competent,ap\nalice,0,0,\n");
    }

    #[test]
    fn saturation_only_when_everyone_competent() {
        let scores = [0.3, 0.1, 0.2];
        let all_right = [0.0, 0.0, 0.0];
        assert!(matches!(mean_ap_fixed(&scores, &all_right, &[0.0, 0.0]), Err(AliceError::AllDeltasUndefined)));
        let m = mean_ap_saturating(|_, _| Ok(scores.to_vec()), &all_right, &[0.0, 1.0]).unwrap();
        assert!(m.saturated);
        assert_eq!(m.mean, 1.0);
        assert!(mean_ap_saturating(|_, _| Ok(scores.to_vec()), &all_right, &[0.0]).is_err());
        let mixed = mean_ap_saturating(|_, _| Ok(scores.to_vec()), &[0.0, 1.0, 1.0], &[0.0, 0.5]).unwrap();
        assert!(!mixed.saturated);
        assert_eq!(mixed.mean, 1.0);
    }
}
