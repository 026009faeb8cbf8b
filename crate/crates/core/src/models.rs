//! Small base classifiers used to produce under-fit, well-trained and
//! over-fit predictions.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AliceError, Result};
use crate::optim::{self, DescentSettings};
use crate::persist::Document;
use crate::transfer::{self, softmax, OptimizerSettings, TransferClassifier};
use crate::types::{LabelSpace, LabeledDataset, ProbabilityVector};

/// Added to every k-NN vote before normalizing.
pub const KNN_SMOOTHING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ToyKind {
    LogisticRegression { reg: f64 },
    /// One tanh hidden layer.
    Mlp { hidden: usize, weight_decay: f64 },
    Knn { k: usize },
}

impl ToyKind {
    pub fn logistic() -> Self {
        ToyKind::LogisticRegression { reg: 1e-4 }
    }

    pub fn mlp() -> Self {
        ToyKind::Mlp {
            hidden: 10,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub iterations: usize,
    /// Training objective before the first step and after each step.
    pub losses: Vec<f64>,
    pub line_search_failures: usize,
}

impl TrainingLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

/// Cross-entropy of a one-hidden-layer tanh network, with optional L2 on
/// both weight matrices.
///
/// Flattened layout: `W1 (d×h)`, `b1 (h)`, `W2 (h×K)`, `b2 (K)`, row-major.
pub struct MlpObjective<'a> {
    x: ArrayView2<'a, f64>,
    targets: Vec<usize>,
    hidden: usize,
    classes: usize,
    weight_decay: f64,
}

struct MlpView<'p> {
    w1: ArrayView2<'p, f64>,
    b1: ArrayView1<'p, f64>,
    w2: ArrayView2<'p, f64>,
    b2: ArrayView1<'p, f64>,
}

fn mlp_view(theta: &[f64], d: usize, h: usize, k: usize) -> MlpView<'_> {
    let (w1, rest) = theta.split_at(d * h);
    let (b1, rest) = rest.split_at(h);
    let (w2, b2) = rest.split_at(h * k);
    MlpView {
        w1: ArrayView2::from_shape((d, h), w1).expect("W1 block"),
        b1: ArrayView1::from(b1),
        w2: ArrayView2::from_shape((h, k), w2).expect("W2 block"),
        b2: ArrayView1::from(b2),
    }
}

pub fn mlp_param_count(d: usize, hidden: usize, classes: usize) -> usize {
    d * hidden + hidden + hidden * classes + classes
}

/// Row-wise softmax output and hidden activations of the network.
fn mlp_forward(theta: &[f64], x: ArrayView2<'_, f64>, h: usize, k: usize) -> (Array2<f64>, Array2<f64>) {
    let p = mlp_view(theta, x.ncols(), h, k);
    let a = (x.dot(&p.w1) + &p.b1).mapv(f64::tanh);
    let mut z = a.dot(&p.w2) + &p.b2;
    for mut row in z.rows_mut() {
        let probs = softmax(row.as_slice().expect("row-major"));
        row.assign(&ArrayView1::from(&probs[..]));
    }
    (z, a)
}

impl<'a> MlpObjective<'a> {
    pub fn new(x: ArrayView2<'a, f64>, targets: Vec<usize>, hidden: usize, classes: usize, weight_decay: f64) -> Self {
        assert_eq!(x.nrows(), targets.len());
        Self {
            x,
            targets,
            hidden,
            classes,
            weight_decay,
        }
    }

    pub fn n_params(&self) -> usize {
        mlp_param_count(self.x.ncols(), self.hidden, self.classes)
    }

    fn penalty(&self, theta: &[f64]) -> f64 {
        if self.weight_decay == 0.0 {
            return 0.0;
        }
        let p = mlp_view(theta, self.x.ncols(), self.hidden, self.classes);
        let sq = p.w1.iter().chain(p.w2.iter()).map(|v| v * v).sum::<f64>();
        0.5 * self.weight_decay * sq
    }

    fn nll(&self, probs: &Array2<f64>) -> f64 {
        let n = self.targets.len() as f64;
        self.targets
            .iter()
            .enumerate()
            .map(|(i, &t)| -probs[[i, t]].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / n
    }

    pub fn value(&self, theta: &Array1<f64>) -> f64 {
        let t = theta.as_slice().expect("contiguous");
        let (probs, _) = mlp_forward(t, self.x, self.hidden, self.classes);
        self.nll(&probs) + self.penalty(t)
    }

    pub fn value_and_gradient(&self, theta: &Array1<f64>) -> (f64, Array1<f64>) {
        let t = theta.as_slice().expect("contiguous");
        let (d, h, k) = (self.x.ncols(), self.hidden, self.classes);
        let (probs, a) = mlp_forward(t, self.x, h, k);
        let value = self.nll(&probs) + self.penalty(t);
        let n = self.targets.len() as f64;

        let mut g_out = probs;
        for (i, &y) in self.targets.iter().enumerate() {
            g_out[[i, y]] -= 1.0;
        }
        g_out /= n;
        let p = mlp_view(t, d, h, k);
        let mut gw2 = a.t().dot(&g_out);
        let gb2 = g_out.sum_axis(Axis(0));
        let mut g_hidden = g_out.dot(&p.w2.t());
        g_hidden.zip_mut_with(&a, |g, act| *g *= 1.0 - act * act);
        let mut gw1 = self.x.t().dot(&g_hidden);
        let gb1 = g_hidden.sum_axis(Axis(0));
        if self.weight_decay != 0.0 {
            gw1.scaled_add(self.weight_decay, &p.w1);
            gw2.scaled_add(self.weight_decay, &p.w2);
        }

        let grad: Array1<f64> = gw1
            .iter()
            .chain(gb1.iter())
            .chain(gw2.iter())
            .chain(gb2.iter())
            .copied()
            .collect();
        (value, grad)
    }
}

/// Glorot-uniform weights, zero biases.
pub fn mlp_init(d: usize, hidden: usize, classes: usize, seed: u64) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = Vec::with_capacity(mlp_param_count(d, hidden, classes));
    let l1 = (6.0 / (d + hidden) as f64).sqrt();
    theta.extend((0..d * hidden).map(|_| rng.random_range(-l1..=l1)));
    theta.extend(std::iter::repeat_n(0.0, hidden));
    let l2 = (6.0 / (hidden + classes) as f64).sqrt();
    theta.extend((0..hidden * classes).map(|_| rng.random_range(-l2..=l2)));
    theta.extend(std::iter::repeat_n(0.0, classes));
    Array1::from(theta)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ToyParams {
    Logistic(TransferClassifier),
    Mlp { dim: usize, theta: Array1<f64> },
    Knn { features: Array2<f64>, labels: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    kind: ToyKind,
    label_space: LabelSpace,
    params: ToyParams,
    log: TrainingLog,
}

/// Trains a base classifier for exactly `iterations` optimizer steps (MLP),
/// at most `iterations` steps (logistic regression, which stops early at its
/// gradient tolerance), or by memorizing the data (k-NN).
pub fn train_toy(kind: ToyKind, train: &LabeledDataset, iterations: usize, seed: u64) -> Result<ToyModel> {
    if iterations == 0 {
        return Err(AliceError::InvalidArgument("iterations must be >= 1".into()));
    }
    let missing: Vec<_> = train
        .class_counts()
        .iter()
        .enumerate()
        .filter(|(_, c)| **c == 0)
        .map(|(j, _)| train.label_space().id_at(j))
        .collect();
    if !missing.is_empty() {
        return Err(AliceError::MissingClasses(missing));
    }
    let label_space = train.label_space().clone();
    let (params, log) = match kind {
        ToyKind::LogisticRegression { reg } => {
            let opt = OptimizerSettings {
                descent: DescentSettings {
                    max_iterations: iterations,
                    ..Default::default()
                },
                ..Default::default()
            };
            let m = transfer::fit_logistic_fixed(train, reg, &opt)?;
            let d = m.diagnostics();
            let log = TrainingLog {
                iterations: d.iterations,
                losses: d.objective.into_iter().collect(),
                line_search_failures: 0,
            };
            (ToyParams::Logistic(m), log)
        }
        ToyKind::Mlp { hidden, weight_decay } => {
            if hidden == 0 {
                return Err(AliceError::InvalidArgument("hidden layer must have >= 1 unit".into()));
            }
            let k = label_space.len();
            let obj = MlpObjective::new(train.features().view(), train.label_indices(), hidden, k, weight_decay);
            let start = mlp_init(train.dim(), hidden, k, seed);
            let settings = DescentSettings {
                tolerance: None,
                max_iterations: iterations,
                initial_step: 1.0,
                window: 1,
            };
            let out = optim::minimize(|t| obj.value_and_gradient(t), |t| obj.value(t), start, &settings);
            let log = TrainingLog {
                iterations: out.iterations,
                losses: out.history,
                line_search_failures: out.line_search_failures,
            };
            (
                ToyParams::Mlp {
                    dim: train.dim(),
                    theta: out.params,
                },
                log,
            )
        }
        ToyKind::Knn { k } => {
            if k == 0 {
                return Err(AliceError::InvalidArgument("k must be >= 1".into()));
            }
            let log = TrainingLog {
                iterations: 0,
                losses: Vec::new(),
                line_search_failures: 0,
            };
            (
                ToyParams::Knn {
                    features: train.features().clone(),
                    labels: train.label_indices(),
                },
                log,
            )
        }
    };
    Ok(ToyModel {
        kind,
        label_space,
        params,
        log,
    })
}

impl ToyModel {
    pub fn kind(&self) -> ToyKind {
        self.kind
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn params(&self) -> &ToyParams {
        &self.params
    }

    pub fn training_log(&self) -> &TrainingLog {
        &self.log
    }

    pub fn dim(&self) -> usize {
        match &self.params {
            ToyParams::Logistic(m) => m.dim(),
            ToyParams::Mlp { dim, .. } => *dim,
            ToyParams::Knn { features, .. } => features.ncols(),
        }
    }

    /// Row-wise class probabilities.
    pub fn predict_batch(&self, features: ArrayView2<'_, f64>) -> Result<Vec<ProbabilityVector>> {
        if features.ncols() != self.dim() {
            return Err(AliceError::DimensionMismatch {
                expected: self.dim(),
                got: features.ncols(),
            });
        }
        let k = self.label_space.len();
        match &self.params {
            ToyParams::Logistic(m) => m.predict_proba_batch(features),
            ToyParams::Mlp { theta, .. } => {
                let hidden = match self.kind {
                    ToyKind::Mlp { hidden, .. } => hidden,
                    _ => unreachable!("MLP parameters with non-MLP kind"),
                };
                let (probs, _) = mlp_forward(theta.as_slice().expect("contiguous"), features, hidden, k);
                probs
                    .rows()
                    .into_iter()
                    .map(|r| ProbabilityVector::new(r.to_vec()))
                    .collect()
            }
            ToyParams::Knn { features: train, labels } => {
                let kk = match self.kind {
                    ToyKind::Knn { k } => k.min(labels.len()),
                    _ => unreachable!("k-NN parameters with non-k-NN kind"),
                };
                features
                    .rows()
                    .into_iter()
                    .map(|q| {
                        let mut order: Vec<(f64, usize)> = train
                            .rows()
                            .into_iter()
                            .enumerate()
                            .map(|(i, r)| (r.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum(), i))
                            .collect();
                        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                        let mut votes = vec![KNN_SMOOTHING; k];
                        for (_, i) in &order[..kk] {
                            votes[labels[*i]] += 1.0;
                        }
                        let total: f64 = votes.iter().sum();
                        ProbabilityVector::new(votes.into_iter().map(|v| v / total).collect())
                    })
                    .collect()
            }
        }
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<ProbabilityVector> {
        let row = x.insert_axis(Axis(0));
        Ok(self.predict_batch(row)?.remove(0))
    }

    pub fn accuracy(&self, data: &LabeledDataset) -> Result<f64> {
        let preds = self.predict_batch(data.features().view())?;
        let hits = preds
            .iter()
            .zip(data.label_indices())
            .filter(|(p, y)| p.argmax() == *y)
            .count();
        Ok(hits as f64 / data.len() as f64)
    }
}

/// Layer matrices of a trained MLP, for inspection and independent checks.
pub fn mlp_layers(theta: &Array1<f64>, d: usize, hidden: usize, classes: usize) -> (Array2<f64>, Array1<f64>, Array2<f64>, Array1<f64>) {
    let p = mlp_view(theta.as_slice().expect("contiguous"), d, hidden, classes);
    (p.w1.to_owned(), p.b1.to_owned(), p.w2.to_owned(), p.b2.to_owned())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ToyParamsRecord {
    Logistic { model: serde_json::Value },
    Mlp { dim: usize, theta: Vec<f64> },
    Knn { features: Vec<Vec<f64>>, labels: Vec<usize> },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ToyModelRecord {
    pub kind: ToyKind,
    pub label_space: LabelSpace,
    pub params: ToyParamsRecord,
    pub training_log: TrainingLog,
}

impl Document for ToyModel {
    const FORMAT: &'static str = "alice.toy_model";
    const VERSION: u32 = 1;
    type Body = ToyModelRecord;

    fn to_body(&self) -> ToyModelRecord {
        let params = match &self.params {
            ToyParams::Logistic(m) => ToyParamsRecord::Logistic {
                model: serde_json::to_value(m.to_body()).expect("serializable"),
            },
            ToyParams::Mlp { dim, theta } => ToyParamsRecord::Mlp {
                dim: *dim,
                theta: theta.to_vec(),
            },
            ToyParams::Knn { features, labels } => ToyParamsRecord::Knn {
                features: features.rows().into_iter().map(|r| r.to_vec()).collect(),
                labels: labels.clone(),
            },
        };
        ToyModelRecord {
            kind: self.kind,
            label_space: self.label_space.clone(),
            params,
            training_log: self.log.clone(),
        }
    }

    fn from_body(b: ToyModelRecord) -> Result<Self> {
        let k = b.label_space.len();
        let params = match (b.kind, b.params) {
            (ToyKind::LogisticRegression { .. }, ToyParamsRecord::Logistic { model }) => {
                ToyParams::Logistic(TransferClassifier::from_body(serde_json::from_value(model)?)?)
            }
            (ToyKind::Mlp { hidden, .. }, ToyParamsRecord::Mlp { dim, theta }) => {
                if theta.len() != mlp_param_count(dim, hidden, k) {
                    return Err(AliceError::Format("MLP parameter count does not match its shape".into()));
                }
                ToyParams::Mlp {
                    dim,
                    theta: Array1::from(theta),
                }
            }
            (ToyKind::Knn { .. }, ToyParamsRecord::Knn { features, labels }) => {
                let d = features.first().map_or(0, Vec::len);
                if d == 0 || features.len() != labels.len() || features.iter().any(|r| r.len() != d) || labels.iter().any(|l| *l >= k) {
                    return Err(AliceError::Format("k-NN memory is malformed".into()));
                }
                let n = features.len();
                ToyParams::Knn {
                    features: Array2::from_shape_fn((n, d), |(i, j)| features[i][j]),
                    labels,
                }
            }
            _ => return Err(AliceError::Format("model kind does not match its parameters".into())),
        };
        Ok(ToyModel {
            kind: b.kind,
            label_space: b.label_space,
            params,
            log: b.training_log,
        })
    }
}

/// Keeps the first `fraction` of rows per class (at least one), in order.
/// Used for the over-fit regime's training subsample.
pub fn stratified_head(data: &LabeledDataset, fraction: f64) -> Result<LabeledDataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(AliceError::InvalidArgument(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let labels = data.label_indices();
    let counts = data.class_counts();
    let quota: Vec<usize> = counts.iter().map(|c| ((*c as f64 * fraction).ceil() as usize).max(1)).collect();
    let mut taken = vec![0usize; counts.len()];
    let rows: Vec<usize> = labels
        .iter()
        .enumerate()
        .filter_map(|(i, &j)| {
            (taken[j] < quota[j]).then(|| {
                taken[j] += 1;
                i
            })
        })
        .collect();
    data.select(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ClassId;
    use ndarray::array;

    fn toy() -> LabeledDataset {
        let x = array![[0.0, 0.0], [0.2, 0.1], [3.0, 3.0], [3.1, 2.9], [0.0, 3.0], [0.1, 3.2]];
        let y = [0, 0, 1, 1, 2, 2].iter().map(|c| ClassId(*c)).collect();
        LabeledDataset::new(x, y, LabelSpace::range(0, 3, "toy").unwrap()).unwrap()
    }

    #[test]
    fn one_nn_memorizes() {
        let m = train_toy(ToyKind::Knn { k: 1 }, &toy(), 1, 0).unwrap();
        assert_eq!(m.accuracy(&toy()).unwrap(), 1.0);
        let p = m.predict(toy().row(2)).unwrap();
        assert!(p[1] > 1.0 - 1e-5);
    }

    #[test]
    fn zero_weight_logistic_is_uniform() {
        let lr = TransferClassifier::from_parts(Array2::zeros((2, 3)), Array1::zeros(3), LabelSpace::range(0, 3, "t").unwrap(), 1.0).unwrap();
        let m = ToyModel {
            kind: ToyKind::logistic(),
            label_space: lr.label_space().clone(),
            params: ToyParams::Logistic(lr),
            log: TrainingLog {
                iterations: 0,
                losses: vec![],
                line_search_failures: 0,
            },
        };
        for p in m.predict_batch(toy().features().view()).unwrap() {
            assert!(p.as_slice().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        }
    }

    #[test]
    fn mlp_is_deterministic_and_monotone() {
        let a = train_toy(ToyKind::mlp(), &toy(), 25, 7).unwrap();
        let b = train_toy(ToyKind::mlp(), &toy(), 25, 7).unwrap();
        assert_eq!(a, b);
        let log = a.training_log();
        assert_eq!(log.iterations, 25);
        assert!(log.losses.windows(2).all(|w| w[1] <= w[0]));
        let c = train_toy(ToyKind::mlp(), &toy(), 25, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(train_toy(ToyKind::mlp(), &toy(), 0, 0).is_err());
        let x = array![[0.0], [1.0]];
        let ds = LabeledDataset::new(x, vec![ClassId(0), ClassId(0)], LabelSpace::range(0, 2, "t").unwrap()).unwrap();
        assert!(matches!(train_toy(ToyKind::Knn { k: 1 }, &ds, 1, 0), Err(AliceError::MissingClasses(_))));
        let m = train_toy(ToyKind::Knn { k: 1 }, &toy(), 1, 0).unwrap();
        assert!(m.predict_batch(array![[1.0, 2.0, 3.0]].view()).is_err());
    }

    #[test]
    fn stratified_head_keeps_each_class() {
        let s = stratified_head(&toy(), 0.1).unwrap();
        assert_eq!(s.class_counts(), vec![1, 1, 1]);
    }

    #[test]
    fn json_round_trip_all_kinds() {
        for kind in [ToyKind::logistic(), ToyKind::mlp(), ToyKind::Knn { k: 2 }] {
            let m = train_toy(kind, &toy(), 10, 3).unwrap();
            let back: ToyModel = crate::persist::from_json(&crate::persist::to_json(&m).unwrap()).unwrap();
            let a = m.predict_batch(toy().features().view()).unwrap();
            let b = back.predict_batch(toy().features().view()).unwrap();
            assert_eq!(a, b);
        }
    }
}
