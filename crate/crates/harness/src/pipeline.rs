//! Shared per-trial machinery: errors, δ grids, estimator scores, mean AP.

use alice_core::eval::{mean_ap_saturating, MeanAp};
use alice_core::{
    delta_grid, fit_gaussians, softmax_confidence, Ablations, AliceError, AliceEstimator, ClassId, ErrorFunction, GaussianConfig,
    GaussianSet, LabelSpace, LabeledDataset, ProbabilityVector, TransferClassifier, TrustScoreEstimator,
};
use ndarray::{Array2, ArrayView2, Axis};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Alice(Ablations),
    Softmax,
    TrustScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NamedEstimator {
    pub name: &'static str,
    pub kind: EstimatorKind,
}

pub const ALICE: NamedEstimator = NamedEstimator {
    name: "alice",
    kind: EstimatorKind::Alice(Ablations::NONE),
};
pub const ALICE_NO_OOD: NamedEstimator = NamedEstimator {
    name: "alice_no_ood",
    kind: EstimatorKind::Alice(Ablations::OOD),
};
pub const ALICE_NO_INDICATOR: NamedEstimator = NamedEstimator {
    name: "alice_no_indicator",
    kind: EstimatorKind::Alice(Ablations::INDICATOR),
};
pub const ALICE_NO_TRANSFER: NamedEstimator = NamedEstimator {
    name: "alice_no_transfer",
    kind: EstimatorKind::Alice(Ablations::TRANSFER),
};
pub const SOFTMAX: NamedEstimator = NamedEstimator {
    name: "softmax",
    kind: EstimatorKind::Softmax,
};
pub const TRUST_SCORE: NamedEstimator = NamedEstimator {
    name: "trust_score",
    kind: EstimatorKind::TrustScore,
};

/// Class of Ŷ with the highest predicted probability.
pub fn predicted_classes(predictions: &[ProbabilityVector], space: &LabelSpace) -> Vec<ClassId> {
    predictions.iter().map(|p| space.id_at(p.argmax())).collect()
}

/// Gaussians fitted on the base model's predicted training labels.
pub fn fit_ood(train_features: ArrayView2<'_, f64>, train_predictions: &[ProbabilityVector], space: &LabelSpace) -> Result<GaussianSet> {
    let predicted = predicted_classes(train_predictions, space);
    Ok(fit_gaussians(train_features, &predicted, space, &GaussianConfig::default())?)
}

pub fn errors(error_fn: &ErrorFunction, labels: &[ClassId], predictions: &[ProbabilityVector], space: &LabelSpace) -> Result<Vec<f64>> {
    labels
        .iter()
        .zip(predictions)
        .map(|(y, p)| Ok(error_fn.eval(*y, p, space)?))
        .collect()
}

/// δ grid over the validation errors. When every validation error is equal
/// the grid is widened to the error function's finite upper bound.
pub fn grid_for(error_fn: &ErrorFunction, validation_errors: &[f64], count: usize) -> Result<Vec<f64>> {
    let grid = delta_grid(validation_errors, count)?;
    let (lo, hi) = (grid[0], grid[count - 1]);
    if lo == hi {
        if let Some(ub) = error_fn.finite_upper_bound().filter(|ub| *ub > lo) {
            return Ok(delta_grid(&[lo, ub], count)?);
        }
    }
    Ok(grid)
}

/// Points to score: features, base-model predictions over Ŷ, true labels.
pub struct EvalSet<'a> {
    pub features: ArrayView2<'a, f64>,
    pub predictions: &'a [ProbabilityVector],
    pub labels: &'a [ClassId],
}

/// Fitted competence estimators for one trial.
pub struct Fitted<'a> {
    pub alice: AliceEstimator,
    pub trust: Option<&'a TrustScoreEstimator>,
}

impl<'a> Fitted<'a> {
    pub fn new(gaussians: GaussianSet, transfer: TransferClassifier, error_fn: ErrorFunction, trust: Option<&'a TrustScoreEstimator>) -> Result<Self> {
        Ok(Self {
            alice: AliceEstimator::new(gaussians, transfer, error_fn)?,
            trust,
        })
    }

    pub fn with_error_fn(&self, error_fn: ErrorFunction) -> Fitted<'a> {
        Fitted {
            alice: self.alice.variant(error_fn, Ablations::NONE),
            trust: self.trust,
        }
    }
}

/// Scores of one estimator on every point of an [`EvalSet`].
#[derive(Debug, Clone)]
pub enum Scores {
    /// `points × grid`.
    PerDelta(Array2<f64>),
    Fixed(Vec<f64>),
}

impl Scores {
    pub fn select(&self, rows: &[usize]) -> Scores {
        match self {
            Scores::PerDelta(m) => Scores::PerDelta(m.select(Axis(0), rows)),
            Scores::Fixed(v) => Scores::Fixed(rows.iter().map(|i| v[*i]).collect()),
        }
    }

    /// Scores at the `i`-th δ.
    pub fn column(&self, i: usize) -> Vec<f64> {
        match self {
            Scores::PerDelta(m) => m.column(i).to_vec(),
            Scores::Fixed(v) => v.clone(),
        }
    }
}

pub fn score(estimator: NamedEstimator, fitted: &Fitted<'_>, set: &EvalSet<'_>, grid: &[f64]) -> Result<Scores> {
    match estimator.kind {
        EstimatorKind::Alice(ablations) => {
            let est = fitted.alice.variant(*fitted.alice.error_fn(), ablations);
            Ok(Scores::PerDelta(est.score_matrix(set.features, set.predictions, grid)?))
        }
        EstimatorKind::Softmax => Ok(Scores::Fixed(set.predictions.iter().map(softmax_confidence).collect())),
        EstimatorKind::TrustScore => {
            let trust = fitted
                .trust
                .ok_or_else(|| AliceError::InvalidArgument("trust score requested but not fitted".into()))?;
            let space = fitted.alice.label_space();
            let v = set
                .features
                .rows()
                .into_iter()
                .zip(set.predictions)
                .map(|(x, p)| trust.score(x, space.id_at(p.argmax())))
                .collect::<alice_core::Result<Vec<f64>>>()?;
            Ok(Scores::Fixed(v))
        }
    }
}

/// Mean AP, or `None` when no δ has a defined AP.
pub fn mean_ap_of(scores: &Scores, errors: &[f64], grid: &[f64]) -> Result<Option<MeanAp>> {
    match mean_ap_saturating(|i, _| Ok(scores.column(i)), errors, grid) {
        Ok(m) => Ok(Some(m)),
        Err(AliceError::AllDeltasUndefined) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Splits a dataset into the rows a base model trains on.
pub fn base_training_rows(train: &LabeledDataset, fraction: f64) -> Result<LabeledDataset> {
    if fraction >= 1.0 {
        Ok(train.clone())
    } else {
        Ok(alice_core::models::stratified_head(train, fraction)?)
    }
}
