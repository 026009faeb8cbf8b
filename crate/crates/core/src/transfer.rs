//! L2-regularized multinomial logistic regression used as the calibrated
//! transfer classifier `p̂(c_j | x, D)`.
//!
//! The objective is the mean cross-entropy over training rows plus
//! `reg / 2 * ‖W‖²_F`; biases are not penalized. Fitting is full-batch
//! gradient descent (see [`crate::optim`]), and the regularization strength is
//! chosen from a grid by validation log-loss.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AliceError, Result};
use crate::optim::{self, DescentSettings};
use crate::persist::Document;
use crate::types::{LabelSpace, LabeledDataset, ProbabilityVector};

/// Eleven strengths, log-spaced over `1e-5 ..= 1e5`.
pub fn default_reg_grid() -> Vec<f64> {
    (-5..=5).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    Zeros,
    /// Uniform in `[-scale, scale]` from a seeded stream.
    Random { seed: u64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub descent: DescentSettings,
    pub init: Init,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            descent: DescentSettings {
                window: 10,
                ..DescentSettings::default()
            },
            init: Init::Zeros,
        }
    }
}

/// Regularized multinomial cross-entropy over a fixed design matrix.
///
/// Parameters are flattened as the row-major `d × K` weight matrix followed
/// by the `K` biases.
pub struct LogisticObjective<'a> {
    x: ArrayView2<'a, f64>,
    targets: Vec<usize>,
    classes: usize,
    reg: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(x: ArrayView2<'a, f64>, targets: Vec<usize>, classes: usize, reg: f64) -> Self {
        assert_eq!(x.nrows(), targets.len());
        Self { x, targets, classes, reg }
    }

    pub fn n_params(&self) -> usize {
        (self.x.ncols() + 1) * self.classes
    }

    fn split<'p>(&self, theta: &'p Array1<f64>) -> (ArrayView2<'p, f64>, ArrayView1<'p, f64>) {
        let d = self.x.ncols();
        let k = self.classes;
        let s = theta.as_slice().expect("contiguous parameters");
        let w = ArrayView2::from_shape((d, k), &s[..d * k]).expect("weight block");
        let b = ArrayView1::from(&s[d * k..]);
        (w, b)
    }

    /// Row-wise log-softmax of the affine scores.
    fn log_probs(&self, theta: &Array1<f64>) -> Array2<f64> {
        let (w, b) = self.split(theta);
        let mut z = self.x.dot(&w) + &b;
        for mut row in z.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, v| a.max(*v));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            row.mapv_inplace(|v| v - lse);
        }
        z
    }

    fn penalty(&self, theta: &Array1<f64>) -> f64 {
        let (w, _) = self.split(theta);
        0.5 * self.reg * w.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn value(&self, theta: &Array1<f64>) -> f64 {
        let lp = self.log_probs(theta);
        let n = self.targets.len() as f64;
        let nll: f64 = self.targets.iter().enumerate().map(|(i, &t)| -lp[[i, t]]).sum();
        nll / n + self.penalty(theta)
    }

    pub fn value_and_gradient(&self, theta: &Array1<f64>) -> (f64, Array1<f64>) {
        let d = self.x.ncols();
        let k = self.classes;
        let n = self.targets.len() as f64;
        let lp = self.log_probs(theta);
        let mut nll = 0.0;
        let mut resid = lp.mapv(f64::exp);
        for (i, &t) in self.targets.iter().enumerate() {
            nll -= lp[[i, t]];
            resid[[i, t]] -= 1.0;
        }
        resid /= n;
        let (w, _) = self.split(theta);
        let gw = self.x.t().dot(&resid) + &(&w * self.reg);
        let gb = resid.sum_axis(Axis(0));
        let mut grad = Array1::<f64>::zeros(self.n_params());
        {
            let s = grad.as_slice_mut().expect("contiguous");
            for (dst, src) in s[..d * k].iter_mut().zip(gw.iter()) {
                *dst = *src;
            }
            for (dst, src) in s[d * k..].iter_mut().zip(gb.iter()) {
                *dst = *src;
            }
        }
        (nll / n + self.penalty(theta), grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub converged: bool,
    pub iterations: usize,
    /// Absent for models assembled from explicit parameters.
    pub objective: Option<f64>,
    pub gradient_max_norm: Option<f64>,
}

/// Calibrated multinomial logistic model.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferClassifier {
    /// `d × |Ŷ|`.
    weights: Array2<f64>,
    biases: Array1<f64>,
    label_space: LabelSpace,
    reg_strength: f64,
    diagnostics: FitDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub reg_strength: f64,
    pub validation_log_loss: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl TransferClassifier {
    pub fn from_parts(weights: Array2<f64>, biases: Array1<f64>, label_space: LabelSpace, reg_strength: f64) -> Result<Self> {
        if weights.ncols() != label_space.len() || biases.len() != label_space.len() {
            return Err(AliceError::DimensionMismatch {
                expected: label_space.len(),
                got: weights.ncols(),
            });
        }
        Ok(Self {
            weights,
            biases,
            label_space,
            reg_strength,
            diagnostics: FitDiagnostics {
                converged: true,
                iterations: 0,
                objective: None,
                gradient_max_norm: None,
            },
        })
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn biases(&self) -> &Array1<f64> {
        &self.biases
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn reg_strength(&self) -> f64 {
        self.reg_strength
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    pub fn converged(&self) -> bool {
        self.diagnostics.converged
    }

    pub fn dim(&self) -> usize {
        self.weights.nrows()
    }

    /// `softmax(Wᵀx + b)`, stabilized by subtracting the max score.
    pub fn predict_proba(&self, x: ArrayView1<'_, f64>) -> Result<ProbabilityVector> {
        if x.len() != self.dim() {
            return Err(AliceError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(AliceError::NonFinite);
        }
        let scores = self.weights.t().dot(&x) + &self.biases;
        ProbabilityVector::new(softmax(scores.as_slice().expect("contiguous")))
    }

    /// Row-wise probabilities for a feature matrix.
    pub fn predict_proba_batch(&self, x: ArrayView2<'_, f64>) -> Result<Vec<ProbabilityVector>> {
        x.rows().into_iter().map(|r| self.predict_proba(r)).collect()
    }

    /// Mean negative log-likelihood of the true labels.
    pub fn log_loss(&self, data: &LabeledDataset) -> Result<f64> {
        let mut total = 0.0;
        for (row, label) in data.features().rows().into_iter().zip(data.labels()) {
            let p = self.predict_proba(row)?;
            let j = self.label_space.index_of(*label).ok_or(AliceError::UnknownClass(*label))?;
            total -= p[j].max(f64::MIN_POSITIVE).ln();
        }
        Ok(total / data.len() as f64)
    }

    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64> {
        let mut hits = 0usize;
        for (row, label) in data.features().rows().into_iter().zip(data.labels()) {
            if self.label_space.id_at(self.predict_proba(row)?.argmax()) == *label {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }

    fn from_theta(theta: &Array1<f64>, d: usize, label_space: LabelSpace, reg: f64, diagnostics: FitDiagnostics) -> Self {
        let k = label_space.len();
        let s = theta.as_slice().expect("contiguous");
        Self {
            weights: Array2::from_shape_vec((d, k), s[..d * k].to_vec()).expect("weight block"),
            biases: Array1::from(s[d * k..].to_vec()),
            label_space,
            reg_strength: reg,
            diagnostics,
        }
    }

    fn to_theta(&self) -> Array1<f64> {
        self.weights.iter().chain(self.biases.iter()).copied().collect()
    }
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().fold(f64::NEG_INFINITY, |a, v| a.max(*v));
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

fn check_all_classes_present(train: &LabeledDataset) -> Result<()> {
    let missing: Vec<_> = train
        .class_counts()
        .iter()
        .enumerate()
        .filter(|(_, c)| **c == 0)
        .map(|(j, _)| train.label_space().id_at(j))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(AliceError::MissingClasses(missing))
    }
}

fn initial_theta(n: usize, init: &Init) -> Array1<f64> {
    match *init {
        Init::Zeros => Array1::zeros(n),
        Init::Random { seed, scale } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
        }
    }
}

/// Fits at a single regularization strength.
pub fn fit_logistic_fixed(train: &LabeledDataset, reg: f64, opt: &OptimizerSettings) -> Result<TransferClassifier> {
    check_all_classes_present(train)?;
    let start = initial_theta((train.dim() + 1) * train.label_space().len(), &opt.init);
    fit_from(train, reg, opt, start)
}

fn fit_from(train: &LabeledDataset, reg: f64, opt: &OptimizerSettings, start: Array1<f64>) -> Result<TransferClassifier> {
    if !(reg >= 0.0) || !reg.is_finite() {
        return Err(AliceError::InvalidArgument(format!("regularization must be finite and >= 0, got {reg}")));
    }
    let objective = LogisticObjective::new(
        train.features().view(),
        train.label_indices(),
        train.label_space().len(),
        reg,
    );
    let out = optim::minimize(
        |t| objective.value_and_gradient(t),
        |t| objective.value(t),
        start,
        &opt.descent,
    );
    let diagnostics = FitDiagnostics {
        converged: out.converged,
        iterations: out.iterations,
        objective: Some(out.objective),
        gradient_max_norm: Some(out.gradient_max_norm),
    };
    Ok(TransferClassifier::from_theta(
        &out.params,
        train.dim(),
        train.label_space().clone(),
        reg,
        diagnostics,
    ))
}

/// Grid search over `reg_grid`, keeping the model with the lowest validation
/// log-loss. Targets are the true labels of `train`.
///
/// Strengths are visited from largest to smallest and each fit starts from
/// the previous solution (with [`Init::Zeros`]); the result is deterministic.
/// Returns the chosen model and the whole grid trace.
pub fn fit_logistic(
    train: &LabeledDataset,
    val: &LabeledDataset,
    reg_grid: &[f64],
    opt: &OptimizerSettings,
) -> Result<(TransferClassifier, Vec<GridPoint>)> {
    if reg_grid.is_empty() {
        return Err(AliceError::InvalidArgument("empty regularization grid".into()));
    }
    if !train.label_space().same_classes(val.label_space()) {
        return Err(AliceError::LabelSpaceMismatch("train and validation label spaces differ".into()));
    }
    if train.dim() != val.dim() {
        return Err(AliceError::DimensionMismatch {
            expected: train.dim(),
            got: val.dim(),
        });
    }
    check_all_classes_present(train)?;

    let mut order: Vec<usize> = (0..reg_grid.len()).collect();
    order.sort_by(|a, b| reg_grid[*b].total_cmp(&reg_grid[*a]));

    let mut start = initial_theta((train.dim() + 1) * train.label_space().len(), &opt.init);
    let mut results: Vec<Option<(TransferClassifier, GridPoint)>> = vec![None; reg_grid.len()];
    for &i in &order {
        let model = fit_from(train, reg_grid[i], opt, start.clone())?;
        if matches!(opt.init, Init::Zeros) {
            start = model.to_theta();
        }
        let point = GridPoint {
            reg_strength: reg_grid[i],
            validation_log_loss: model.log_loss(val)?,
            converged: model.converged(),
            iterations: model.diagnostics.iterations,
        };
        results[i] = Some((model, point));
    }

    let trace: Vec<GridPoint> = results.iter().map(|r| r.as_ref().expect("filled").1.clone()).collect();
    let best = (0..trace.len())
        .min_by(|a, b| trace[*a].validation_log_loss.total_cmp(&trace[*b].validation_log_loss))
        .expect("non-empty grid");
    let chosen = results.swap_remove(best).expect("filled").0;
    Ok((chosen, trace))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TransferRecord {
    pub label_space: LabelSpace,
    pub reg_strength: f64,
    /// Row per input feature, column per class.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

impl Document for TransferClassifier {
    const FORMAT: &'static str = "alice.transfer_classifier";
    const VERSION: u32 = 1;
    type Body = TransferRecord;

    fn to_body(&self) -> TransferRecord {
        TransferRecord {
            label_space: self.label_space.clone(),
            reg_strength: self.reg_strength,
            weights: self.weights.rows().into_iter().map(|r| r.to_vec()).collect(),
            biases: self.biases.to_vec(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    fn from_body(b: TransferRecord) -> Result<Self> {
        let k = b.label_space.len();
        let d = b.weights.len();
        if d == 0 || b.weights.iter().any(|r| r.len() != k) || b.biases.len() != k {
            return Err(AliceError::Format("transfer classifier shape does not match its label space".into()));
        }
        let weights = Array2::from_shape_fn((d, k), |(i, j)| b.weights[i][j]);
        let mut m = TransferClassifier::from_parts(weights, Array1::from(b.biases), b.label_space, b.reg_strength)?;
        m.diagnostics = b.diagnostics;
        Ok(m)
    }
}
