//! Error functions comparing a true class against a predicted distribution.
//!
//! Every error is a non-negative extended real. `f64::INFINITY` is the value
//! assigned when the true class lies outside the prediction space Ŷ, except
//! for the distributional error, whose codomain is `{0, 1}` and which returns
//! `1` in that case.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AliceError, Result};
use crate::types::{ClassId, LabelSpace, ProbabilityVector};

/// Floor applied to the true-class probability before taking the log.
pub const DEFAULT_CLAMP_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorKind {
    ZeroOne,
    TopK { k: usize },
    CrossEntropy,
    MeanSquared,
    /// Indicator that the true class is outside the prediction space.
    Distributional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorFunction {
    pub kind: ErrorKind,
    pub clamp_floor: f64,
}

impl ErrorFunction {
    pub fn new(kind: ErrorKind) -> Self {
        Self {
            kind,
            clamp_floor: DEFAULT_CLAMP_FLOOR,
        }
    }

    pub fn zero_one() -> Self {
        Self::new(ErrorKind::ZeroOne)
    }

    pub fn top_k(k: usize) -> Self {
        Self::new(ErrorKind::TopK { k })
    }

    pub fn cross_entropy() -> Self {
        Self::new(ErrorKind::CrossEntropy)
    }

    pub fn mean_squared() -> Self {
        Self::new(ErrorKind::MeanSquared)
    }

    pub fn distributional() -> Self {
        Self::new(ErrorKind::Distributional)
    }

    /// Error of `prediction` (indexed by `prediction_space`, i.e. Ŷ) when the
    /// true class is `true_class`.
    pub fn eval(&self, true_class: ClassId, prediction: &ProbabilityVector, prediction_space: &LabelSpace) -> Result<f64> {
        if prediction.len() != prediction_space.len() {
            return Err(AliceError::DimensionMismatch {
                expected: prediction_space.len(),
                got: prediction.len(),
            });
        }
        let Some(t) = prediction_space.index_of(true_class) else {
            return Ok(match self.kind {
                ErrorKind::Distributional => 1.0,
                _ => f64::INFINITY,
            });
        };
        Ok(self.eval_index(t, prediction.as_slice()))
    }

    /// Like [`eval`](Self::eval), but also rejects a true class that is not in
    /// the distributional space Y.
    pub fn eval_checked(
        &self,
        true_class: ClassId,
        prediction: &ProbabilityVector,
        prediction_space: &LabelSpace,
        full_space: &LabelSpace,
    ) -> Result<f64> {
        if !full_space.contains(true_class) {
            return Err(AliceError::UnknownClass(true_class));
        }
        self.eval(true_class, prediction, prediction_space)
    }

    /// Error for a true class known to be at position `t` of Ŷ.
    pub(crate) fn eval_index(&self, t: usize, probs: &[f64]) -> f64 {
        match self.kind {
            ErrorKind::ZeroOne => {
                if argmax(probs) == t {
                    0.0
                } else {
                    1.0
                }
            }
            ErrorKind::TopK { k } => {
                // rank of t = number of entries strictly larger, plus earlier equal ones
                let pt = probs[t];
                let rank = probs
                    .iter()
                    .enumerate()
                    .filter(|(i, p)| **p > pt || (**p == pt && *i < t))
                    .count();
                if rank < k {
                    0.0
                } else {
                    1.0
                }
            }
            ErrorKind::CrossEntropy => -probs[t].max(self.clamp_floor).ln(),
            ErrorKind::MeanSquared => probs
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let target = if i == t { 1.0 } else { 0.0 };
                    (p - target) * (p - target)
                })
                .sum(),
            ErrorKind::Distributional => 0.0,
        }
    }

    /// Errors of `prediction` against every class of Ŷ in turn.
    pub fn errors_per_class(&self, prediction: &ProbabilityVector) -> Vec<f64> {
        (0..prediction.len())
            .map(|t| self.eval_index(t, prediction.as_slice()))
            .collect()
    }

    /// Largest finite value the error can take on any prediction.
    pub fn finite_upper_bound(&self) -> Option<f64> {
        match self.kind {
            ErrorKind::ZeroOne | ErrorKind::TopK { .. } | ErrorKind::Distributional => Some(1.0),
            ErrorKind::MeanSquared => Some(2.0),
            ErrorKind::CrossEntropy => Some(-self.clamp_floor.ln()),
        }
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..p.len() {
        if p[i] > p[best] {
            best = i;
        }
    }
    best
}

impl fmt::Display for ErrorFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ErrorKind::ZeroOne => f.write_str("zero-one"),
            ErrorKind::TopK { k } => write!(f, "top-{k}"),
            ErrorKind::CrossEntropy => f.write_str("xent"),
            ErrorKind::MeanSquared => f.write_str("mse"),
            ErrorKind::Distributional => f.write_str("distributional"),
        }
    }
}

impl FromStr for ErrorFunction {
    type Err = AliceError;

    /// Accepts `zero-one`, `xent`, `mse`, `distributional`, `top-k` (k = 5)
    /// and `top-<k>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase().replace('_', "-");
        match s.as_str() {
            "zero-one" | "0-1" => Ok(Self::zero_one()),
            "xent" | "cross-entropy" => Ok(Self::cross_entropy()),
            "mse" | "mean-squared" => Ok(Self::mean_squared()),
            "distributional" | "e-d" => Ok(Self::distributional()),
            "top-k" => Ok(Self::top_k(5)),
            other => match other.strip_prefix("top-").map(str::parse::<usize>) {
                Some(Ok(k)) if k >= 1 => Ok(Self::top_k(k)),
                _ => Err(AliceError::InvalidArgument(format!("unknown error function `{s}`"))),
            },
        }
    }
}

/// `count` values linearly spaced over the finite range of `errors`,
/// endpoints included. Infinite errors are ignored.
pub fn delta_grid(errors: &[f64], count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(AliceError::InvalidArgument(format!("delta grid needs at least 2 points, got {count}")));
    }
    if errors.iter().any(|e| e.is_nan() || *e < 0.0) {
        return Err(AliceError::InvalidArgument("errors must be non-negative".into()));
    }
    let (lo, hi) = errors
        .iter()
        .filter(|e| e.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(*e), hi.max(*e)));
    if !lo.is_finite() {
        return Err(AliceError::DegenerateErrors);
    }
    let step = (hi - lo) / (count - 1) as f64;
    let mut grid: Vec<f64> = (0..count).map(|i| lo + step * i as f64).collect();
    grid[count - 1] = hi;
    Ok(grid)
}

/// Strict: a score equal to the risk threshold is not competent.
pub fn is_delta_epsilon_competent(score: f64, epsilon: f64) -> bool {
    score > epsilon
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(n: usize) -> LabelSpace {
        LabelSpace::range(0, n, "test").unwrap()
    }

    fn pv(p: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(p.to_vec()).unwrap()
    }

    #[test]
    fn zero_one_identity_and_miss() {
        let e = ErrorFunction::zero_one();
        let p = pv(&[0.1, 0.2, 0.7]);
        assert_eq!(e.eval(ClassId(2), &p, &space(3)).unwrap(), 0.0);
        assert_eq!(e.eval(ClassId(0), &p, &space(3)).unwrap(), 1.0);
    }

    #[test]
    fn cross_entropy_analytic_values() {
        let e = ErrorFunction::cross_entropy();
        let s = space(2);
        assert_eq!(e.eval(ClassId(0), &pv(&[1.0, 0.0]), &s).unwrap(), 0.0);
        let q = (-1.0f64).exp();
        let v = e.eval(ClassId(0), &pv(&[q, 1.0 - q]), &s).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // zero probability hits the clamp instead of infinity
        let z = e.eval(ClassId(1), &pv(&[1.0, 0.0]), &s).unwrap();
        assert!((z - 1e-12f64.ln().abs()).abs() < 1e-9);
    }

    #[test]
    fn off_support_is_infinite_except_distributional() {
        let p = pv(&[0.5, 0.5]);
        let s = space(2);
        for e in [
            ErrorFunction::zero_one(),
            ErrorFunction::cross_entropy(),
            ErrorFunction::mean_squared(),
            ErrorFunction::top_k(1),
        ] {
            assert_eq!(e.eval(ClassId(7), &p, &s).unwrap(), f64::INFINITY);
        }
        assert_eq!(ErrorFunction::distributional().eval(ClassId(7), &p, &s).unwrap(), 1.0);
        assert_eq!(ErrorFunction::distributional().eval(ClassId(1), &p, &s).unwrap(), 0.0);
    }

    #[test]
    fn distributional_across_namespaced_datasets() {
        // Ŷ = dataset A's classes 0..10; a point from dataset B (ids 100..) is off-support
        let a = LabelSpace::range(0, 10, "a").unwrap();
        let p = ProbabilityVector::uniform(10);
        assert_eq!(ErrorFunction::distributional().eval(ClassId(103), &p, &a).unwrap(), 1.0);
    }

    #[test]
    fn checked_eval_rejects_unknown_class() {
        let y = LabelSpace::range(0, 3, "y").unwrap();
        let yhat = space(2);
        let e = ErrorFunction::zero_one();
        let p = pv(&[0.5, 0.5]);
        assert_eq!(e.eval_checked(ClassId(2), &p, &yhat, &y).unwrap(), f64::INFINITY);
        assert!(matches!(e.eval_checked(ClassId(9), &p, &yhat, &y), Err(AliceError::UnknownClass(_))));
    }

    #[test]
    fn length_mismatch_rejected() {
        let e = ErrorFunction::mean_squared();
        assert!(e.eval(ClassId(0), &pv(&[0.5, 0.5]), &space(3)).is_err());
    }

    #[test]
    fn mean_squared_and_top_k() {
        let p = pv(&[0.6, 0.3, 0.1]);
        let s = space(3);
        let mse = ErrorFunction::mean_squared().eval(ClassId(0), &p, &s).unwrap();
        assert!((mse - (0.16 + 0.09 + 0.01)).abs() < 1e-12);
        let top2 = ErrorFunction::top_k(2);
        assert_eq!(top2.eval(ClassId(1), &p, &s).unwrap(), 0.0);
        assert_eq!(top2.eval(ClassId(2), &p, &s).unwrap(), 1.0);
    }

    #[test]
    fn parse_names() {
        assert_eq!("xent".parse::<ErrorFunction>().unwrap(), ErrorFunction::cross_entropy());
        assert_eq!("top-3".parse::<ErrorFunction>().unwrap(), ErrorFunction::top_k(3));
        assert_eq!("zero-one".parse::<ErrorFunction>().unwrap(), ErrorFunction::zero_one());
        assert!("bogus".parse::<ErrorFunction>().is_err());
    }

    #[test]
    fn delta_grid_examples() {
        assert_eq!(delta_grid(&[0.0, 1.0], 3).unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(delta_grid(&[0.7; 4], 5).unwrap(), vec![0.7; 5]);
        let g = delta_grid(&[0.2, f64::INFINITY, 0.9], 8).unwrap();
        assert_eq!(g[0], 0.2);
        assert_eq!(g[7], 0.9);
        assert!(matches!(
            delta_grid(&[f64::INFINITY, f64::INFINITY], 3),
            Err(AliceError::DegenerateErrors)
        ));
        assert!(delta_grid(&[0.0, 1.0], 1).is_err());
    }

    #[test]
    fn competence_decision_is_strict() {
        assert!(is_delta_epsilon_competent(0.9, 0.5));
        assert!(!is_delta_epsilon_competent(0.5, 0.5));
        assert!(!is_delta_epsilon_competent(0.0, 0.0));
    }
}
