//! Competence estimators: the ALICE score and two baselines.
//!
//! The ALICE score of a point `x` with base-model prediction `ŷ = f̂(x)` at
//! tolerance `δ` is
//!
//! ```text
//! p(D|x) · Σ_{c_j ∈ Ŷ} 1[E(c_j, ŷ) < δ] · p̂(c_j | x, D)
//! ```
//!
//! where `p(D|x)` comes from [`GaussianSet`], `p̂(c_j | x, D)` from the
//! [`TransferClassifier`] and `E` is the configured [`ErrorFunction`]. The
//! score is a lower bound on the probability that the model's error at `x`
//! is below `δ`.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{AliceError, Result};
use crate::error_fn::ErrorFunction;
use crate::ood::GaussianSet;
use crate::persist::Document;
use crate::transfer::TransferClassifier;
use crate::types::{ClassId, LabelSpace, LabeledDataset, ProbabilityVector};

/// Terms replaced by a neutral value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Ablations {
    /// `p(D|x)` replaced by 1.
    pub ood: bool,
    /// Every error indicator replaced by 1.
    pub indicator: bool,
    /// `p̂(c_j|x,D)` replaced by `1/|Ŷ|`.
    pub transfer: bool,
}

impl Ablations {
    pub const NONE: Ablations = Ablations {
        ood: false,
        indicator: false,
        transfer: false,
    };
    pub const OOD: Ablations = Ablations {
        ood: true,
        indicator: false,
        transfer: false,
    };
    pub const INDICATOR: Ablations = Ablations {
        ood: false,
        indicator: true,
        transfer: false,
    };
    pub const TRANSFER: Ablations = Ablations {
        ood: false,
        indicator: false,
        transfer: true,
    };
}

#[derive(Debug, Clone)]
pub struct AliceEstimator {
    gaussians: GaussianSet,
    transfer: TransferClassifier,
    error_fn: ErrorFunction,
    ablations: Ablations,
}

/// The δ-independent parts of a score, computed once per point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTerms {
    pub p_in_distribution: f64,
    /// `E(c_j, ŷ)` for every class of Ŷ.
    pub class_errors: Vec<f64>,
    /// `p̂(c_j | x, D)` (or uniform when ablated).
    pub class_probs: Vec<f64>,
}

impl ScoreTerms {
    pub fn score(&self, delta: f64, ablate_indicator: bool) -> f64 {
        if ablate_indicator || self.class_errors.iter().all(|e| *e < delta) {
            // the whole probability vector: exactly 1, free of summation rounding
            return self.p_in_distribution;
        }
        let mass: f64 = self
            .class_errors
            .iter()
            .zip(&self.class_probs)
            .filter(|(e, _)| **e < delta)
            .map(|(_, p)| *p)
            .sum();
        self.p_in_distribution * mass
    }
}

impl AliceEstimator {
    pub fn new(gaussians: GaussianSet, transfer: TransferClassifier, error_fn: ErrorFunction) -> Result<Self> {
        if !gaussians.label_space().same_classes(transfer.label_space()) {
            return Err(AliceError::LabelSpaceMismatch(format!(
                "Gaussians cover {:?}, transfer classifier covers {:?}",
                gaussians.label_space().class_ids(),
                transfer.label_space().class_ids()
            )));
        }
        if gaussians.dim() != transfer.dim() {
            return Err(AliceError::DimensionMismatch {
                expected: gaussians.dim(),
                got: transfer.dim(),
            });
        }
        Ok(Self {
            gaussians,
            transfer,
            error_fn,
            ablations: Ablations::NONE,
        })
    }

    pub fn with_ablations(mut self, ablations: Ablations) -> Self {
        self.ablations = ablations;
        self
    }

    /// Same fitted parts under different ablations or error function.
    pub fn variant(&self, error_fn: ErrorFunction, ablations: Ablations) -> Self {
        Self {
            gaussians: self.gaussians.clone(),
            transfer: self.transfer.clone(),
            error_fn,
            ablations,
        }
    }

    pub fn gaussians(&self) -> &GaussianSet {
        &self.gaussians
    }

    pub fn transfer(&self) -> &TransferClassifier {
        &self.transfer
    }

    pub fn error_fn(&self) -> &ErrorFunction {
        &self.error_fn
    }

    pub fn ablations(&self) -> Ablations {
        self.ablations
    }

    pub fn label_space(&self) -> &LabelSpace {
        self.transfer.label_space()
    }

    pub fn terms(&self, x: ArrayView1<'_, f64>, prediction: &ProbabilityVector) -> Result<ScoreTerms> {
        let k = self.label_space().len();
        if prediction.len() != k {
            return Err(AliceError::LabelSpaceMismatch(format!(
                "prediction has {} entries, estimator label space has {k}",
                prediction.len()
            )));
        }
        let p_in_distribution = if self.ablations.ood {
            1.0
        } else {
            self.gaussians.p_in_distribution(x)?
        };
        let class_probs = if self.ablations.transfer {
            if x.len() != self.transfer.dim() {
                return Err(AliceError::DimensionMismatch {
                    expected: self.transfer.dim(),
                    got: x.len(),
                });
            }
            vec![1.0 / k as f64; k]
        } else {
            self.transfer.predict_proba(x)?.as_slice().to_vec()
        };
        Ok(ScoreTerms {
            p_in_distribution,
            class_errors: self.error_fn.errors_per_class(prediction),
            class_probs,
        })
    }

    /// ALICE score of one point at tolerance `delta`.
    pub fn score(&self, x: ArrayView1<'_, f64>, prediction: &ProbabilityVector, delta: f64) -> Result<f64> {
        check_delta(delta)?;
        Ok(self.terms(x, prediction)?.score(delta, self.ablations.indicator))
    }

    /// Scores of one point at every tolerance of `deltas`.
    pub fn score_sweep(&self, x: ArrayView1<'_, f64>, prediction: &ProbabilityVector, deltas: &[f64]) -> Result<Vec<f64>> {
        deltas.iter().try_for_each(|d| check_delta(*d))?;
        let terms = self.terms(x, prediction)?;
        Ok(deltas.iter().map(|d| terms.score(*d, self.ablations.indicator)).collect())
    }

    /// `points × deltas` score matrix.
    pub fn score_matrix(&self, x: ArrayView2<'_, f64>, predictions: &[ProbabilityVector], deltas: &[f64]) -> Result<Array2<f64>> {
        if x.nrows() != predictions.len() {
            return Err(AliceError::DimensionMismatch {
                expected: x.nrows(),
                got: predictions.len(),
            });
        }
        let mut out = Array2::zeros((x.nrows(), deltas.len()));
        for ((row, pred), mut dst) in x.rows().into_iter().zip(predictions).zip(out.axis_iter_mut(Axis(0))) {
            let s = self.score_sweep(row, pred, deltas)?;
            dst.assign(&ndarray::ArrayView1::from(&s[..]));
        }
        Ok(out)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_nan() || delta < 0.0 {
        Err(AliceError::InvalidArgument(format!("delta must be non-negative, got {delta}")))
    } else {
        Ok(())
    }
}

/// Largest entry of the prediction.
pub fn softmax_confidence(prediction: &ProbabilityVector) -> f64 {
    prediction.max()
}

/// Guard on the predicted-class distance in the trust-score ratio.
pub const TRUST_SCORE_ETA: f64 = 1e-12;

/// Ratio of the distance to the nearest non-predicted class over the distance
/// to the predicted class, each measured to the class's k-th nearest stored
/// point (Euclidean).
#[derive(Debug, Clone)]
pub struct TrustScoreEstimator {
    label_space: LabelSpace,
    k: usize,
    /// One `n_c × d` block per class of the label space.
    class_points: Vec<Array2<f64>>,
    /// Classes holding fewer than `k` points, for which all points are used.
    clipped_classes: Vec<ClassId>,
}

impl TrustScoreEstimator {
    pub const DEFAULT_K: usize = 10;

    pub fn fit(train: &LabeledDataset, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(AliceError::InvalidArgument("trust score needs k >= 1".into()));
        }
        let space = train.label_space().clone();
        if space.len() < 2 {
            return Err(AliceError::InvalidArgument("trust score needs at least two classes".into()));
        }
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); space.len()];
        for (i, j) in train.label_indices().into_iter().enumerate() {
            rows[j].push(i);
        }
        let missing: Vec<ClassId> = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_empty())
            .map(|(j, _)| space.id_at(j))
            .collect();
        if !missing.is_empty() {
            return Err(AliceError::MissingClasses(missing));
        }
        let clipped_classes = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.len() < k)
            .map(|(j, _)| space.id_at(j))
            .collect();
        let class_points = rows.iter().map(|r| train.features().select(Axis(0), r)).collect();
        Ok(Self {
            label_space: space,
            k,
            class_points,
            clipped_classes,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn clipped_classes(&self) -> &[ClassId] {
        &self.clipped_classes
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    /// Distance from `x` to the k-th nearest point of class index `j`.
    fn kth_distance(&self, j: usize, x: ArrayView1<'_, f64>) -> f64 {
        let pts = &self.class_points[j];
        let mut d: Vec<f64> = pts
            .rows()
            .into_iter()
            .map(|r| r.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .collect();
        let kk = self.k.min(d.len()) - 1;
        let (_, v, _) = d.select_nth_unstable_by(kk, f64::total_cmp);
        v.sqrt()
    }

    pub fn score(&self, x: ArrayView1<'_, f64>, predicted: ClassId) -> Result<f64> {
        let dim = self.class_points[0].ncols();
        if x.len() != dim {
            return Err(AliceError::DimensionMismatch { expected: dim, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(AliceError::NonFinite);
        }
        let p = self.label_space.index_of(predicted).ok_or(AliceError::UnknownClass(predicted))?;
        let d_pred = self.kth_distance(p, x);
        let d_other = (0..self.label_space.len())
            .filter(|j| *j != p)
            .map(|j| self.kth_distance(j, x))
            .fold(f64::INFINITY, f64::min);
        Ok(d_other / d_pred.max(TRUST_SCORE_ETA))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AliceRecord {
    pub error_fn: ErrorFunction,
    pub ablations: Ablations,
    pub gaussians: serde_json::Value,
    pub transfer: serde_json::Value,
}

impl Document for AliceEstimator {
    const FORMAT: &'static str = "alice.estimator";
    const VERSION: u32 = 1;
    type Body = AliceRecord;

    fn to_body(&self) -> AliceRecord {
        AliceRecord {
            error_fn: self.error_fn,
            ablations: self.ablations,
            gaussians: serde_json::to_value(self.gaussians.to_body()).expect("serializable"),
            transfer: serde_json::to_value(self.transfer.to_body()).expect("serializable"),
        }
    }

    fn from_body(b: AliceRecord) -> Result<Self> {
        let gaussians = GaussianSet::from_body(serde_json::from_value(b.gaussians)?)?;
        let transfer = TransferClassifier::from_body(serde_json::from_value(b.transfer)?)?;
        Ok(AliceEstimator::new(gaussians, transfer, b.error_fn)?.with_ablations(b.ablations))
    }
}
