//! In-distribution probability `p(D|x)` from class-conditional Gaussians.
//!
//! A Gaussian is fitted to the training points that the *classifier* assigns
//! to each class. The Mahalanobis distances of those same points to their
//! Gaussian form the reference sample β_j. A query point is scored by the
//! right-tail empirical probability of its distance under β_j, maximized over
//! classes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{AliceError, Result};
use crate::linalg::Cholesky;
use crate::persist::Document;
use crate::types::{ClassId, LabelSpace};

/// Ridge added to the sample covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularization {
    /// `1e-6 * trace(Σ) / d + 1e-12`, per covariance matrix.
    Auto,
    Fixed(f64),
}

impl Regularization {
    fn strength(&self, covariance: &Array2<f64>) -> f64 {
        match *self {
            Regularization::Auto => {
                let d = covariance.nrows() as f64;
                1e-6 * covariance.diag().sum() / d + 1e-12
            }
            Regularization::Fixed(l) => l,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    /// One covariance per class.
    #[default]
    PerClass,
    /// A single pooled within-class covariance shared by every class.
    Tied,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianConfig {
    pub regularization: Regularization,
    pub covariance: CovarianceMode,
}

impl Default for GaussianConfig {
    fn default() -> Self {
        Self {
            regularization: Regularization::Auto,
            covariance: CovarianceMode::PerClass,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClassGaussian {
    class_id: ClassId,
    mean: Array1<f64>,
    /// Regularized covariance.
    covariance: Array2<f64>,
    factor: Cholesky,
    regularization: f64,
    /// Sorted, non-decreasing.
    train_distances: Vec<f64>,
}

impl ClassGaussian {
    pub fn class_id(&self) -> ClassId {
        self.class_id
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    pub fn train_distances(&self) -> &[f64] {
        &self.train_distances
    }

    pub fn n_train(&self) -> usize {
        self.train_distances.len()
    }

    /// `sqrt((x-μ)ᵀ Σ⁻¹ (x-μ))` through the Cholesky factor.
    pub fn mahalanobis(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        if x.len() != self.mean.len() {
            return Err(AliceError::DimensionMismatch {
                expected: self.mean.len(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(AliceError::NonFinite);
        }
        let diff = &x - &self.mean;
        Ok(self.factor.inverse_quadratic_form(diff.view()).max(0.0).sqrt())
    }

    /// Fraction of training distances that are `>= distance`.
    pub fn survival(&self, distance: f64) -> f64 {
        let n = self.train_distances.len();
        let below = self.train_distances.partition_point(|t| *t < distance);
        (n - below) as f64 / n as f64
    }
}

#[derive(Debug, Clone)]
pub struct GaussianSet {
    label_space: LabelSpace,
    dim: usize,
    config: GaussianConfig,
    gaussians: Vec<ClassGaussian>,
    /// Classes of the label space that received no predicted training point.
    absent_classes: Vec<ClassId>,
}

/// Fits one Gaussian per class of `label_space` that has at least one point
/// with that predicted label.
///
/// `predicted` must hold the classifier's predictions for the rows of
/// `features`, not the ground truth.
pub fn fit_gaussians(
    features: ArrayView2<'_, f64>,
    predicted: &[ClassId],
    label_space: &LabelSpace,
    config: &GaussianConfig,
) -> Result<GaussianSet> {
    let (n, d) = features.dim();
    if n == 0 || d == 0 {
        return Err(AliceError::InvalidDataset(format!("cannot fit Gaussians to a {n}x{d} matrix")));
    }
    if predicted.len() != n {
        return Err(AliceError::DimensionMismatch {
            expected: n,
            got: predicted.len(),
        });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(AliceError::NonFinite);
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); label_space.len()];
    for (i, c) in predicted.iter().enumerate() {
        let j = label_space.index_of(*c).ok_or(AliceError::UnknownClass(*c))?;
        members[j].push(i);
    }

    let mut absent = Vec::new();
    let mut moments = Vec::new();
    for (j, rows) in members.iter().enumerate() {
        let id = label_space.id_at(j);
        if rows.is_empty() {
            absent.push(id);
            continue;
        }
        let points = features.select(Axis(0), rows);
        let mean = points.mean_axis(Axis(0)).expect("non-empty");
        let centered = &points - &mean;
        let scatter = centered.t().dot(&centered);
        moments.push((id, points, mean, scatter));
    }

    let pooled = match config.covariance {
        CovarianceMode::PerClass => None,
        CovarianceMode::Tied => {
            let mut total = Array2::<f64>::zeros((d, d));
            for (_, _, _, scatter) in &moments {
                total += scatter;
            }
            Some(total / n as f64)
        }
    };

    let mut gaussians = Vec::with_capacity(moments.len());
    for (id, points, mean, scatter) in moments {
        let mut covariance = match &pooled {
            Some(p) => p.clone(),
            None => scatter / points.nrows() as f64,
        };
        let regularization = config.regularization.strength(&covariance);
        if !(regularization >= 0.0) {
            return Err(AliceError::InvalidArgument(format!("negative regularization {regularization}")));
        }
        covariance.diag_mut().mapv_inplace(|v| v + regularization);
        let factor = Cholesky::factor(covariance.view()).ok_or(AliceError::Factorization(id))?;
        let mut g = ClassGaussian {
            class_id: id,
            mean,
            covariance,
            factor,
            regularization,
            train_distances: Vec::new(),
        };
        let mut dist = points
            .rows()
            .into_iter()
            .map(|r| g.mahalanobis(r))
            .collect::<Result<Vec<_>>>()?;
        dist.sort_by(f64::total_cmp);
        g.train_distances = dist;
        gaussians.push(g);
    }

    Ok(GaussianSet {
        label_space: label_space.clone(),
        dim: d,
        config: *config,
        gaussians,
        absent_classes: absent,
    })
}

impl GaussianSet {
    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &GaussianConfig {
        &self.config
    }

    pub fn gaussians(&self) -> &[ClassGaussian] {
        &self.gaussians
    }

    pub fn absent_classes(&self) -> &[ClassId] {
        &self.absent_classes
    }

    pub fn get(&self, class: ClassId) -> Option<&ClassGaussian> {
        self.gaussians.iter().find(|g| g.class_id == class)
    }

    /// `max_j survival_j(mahalanobis_j(x))`.
    pub fn p_in_distribution(&self, x: ArrayView1<'_, f64>) -> Result<f64> {
        let mut best = 0.0f64;
        for g in &self.gaussians {
            best = best.max(g.survival(g.mahalanobis(x)?));
        }
        Ok(best)
    }

    /// Same set with the class order reversed; scores must not change.
    #[doc(hidden)]
    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        out.gaussians.reverse();
        out
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClassGaussianRecord {
    pub class_id: ClassId,
    pub regularization: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub train_distances: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GaussianSetRecord {
    pub label_space: LabelSpace,
    pub dim: usize,
    pub config: GaussianConfig,
    pub absent_classes: Vec<ClassId>,
    pub classes: Vec<ClassGaussianRecord>,
}

impl Document for GaussianSet {
    const FORMAT: &'static str = "alice.gaussian_set";
    const VERSION: u32 = 1;
    type Body = GaussianSetRecord;

    fn to_body(&self) -> GaussianSetRecord {
        GaussianSetRecord {
            label_space: self.label_space.clone(),
            dim: self.dim,
            config: self.config,
            absent_classes: self.absent_classes.clone(),
            classes: self
                .gaussians
                .iter()
                .map(|g| ClassGaussianRecord {
                    class_id: g.class_id,
                    regularization: g.regularization,
                    mean: g.mean.to_vec(),
                    covariance: g.covariance.rows().into_iter().map(|r| r.to_vec()).collect(),
                    train_distances: g.train_distances.clone(),
                })
                .collect(),
        }
    }

    fn from_body(body: GaussianSetRecord) -> Result<Self> {
        let d = body.dim;
        let mut gaussians = Vec::with_capacity(body.classes.len());
        for rec in body.classes {
            if rec.mean.len() != d || rec.covariance.len() != d || rec.covariance.iter().any(|r| r.len() != d) {
                return Err(AliceError::Format(format!("class {} has wrong dimensions", rec.class_id)));
            }
            if rec.train_distances.is_empty() || rec.train_distances.windows(2).any(|w| w[0] > w[1]) {
                return Err(AliceError::Format(format!(
                    "class {} distances must be non-empty and sorted",
                    rec.class_id
                )));
            }
            let covariance = Array2::from_shape_fn((d, d), |(i, j)| rec.covariance[i][j]);
            let factor = Cholesky::factor(covariance.view()).ok_or(AliceError::Factorization(rec.class_id))?;
            gaussians.push(ClassGaussian {
                class_id: rec.class_id,
                mean: Array1::from(rec.mean),
                covariance,
                factor,
                regularization: rec.regularization,
                train_distances: rec.train_distances,
            });
        }
        Ok(GaussianSet {
            label_space: body.label_space,
            dim: d,
            config: body.config,
            gaussians,
            absent_classes: body.absent_classes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::persist;
    use ndarray::array;

    fn space(n: usize) -> LabelSpace {
        LabelSpace::range(0, n, "t").unwrap()
    }

    fn fit(x: Array2<f64>, labels: &[i64], n_classes: usize, reg: Regularization) -> GaussianSet {
        let pred: Vec<ClassId> = labels.iter().map(|l| ClassId(*l)).collect();
        let cfg = GaussianConfig {
            regularization: reg,
            ..Default::default()
        };
        fit_gaussians(x.view(), &pred, &space(n_classes), &cfg).unwrap()
    }

    #[test]
    fn mean_of_two_points() {
        let gs = fit(array![[0.0, 0.0], [2.0, 2.0]], &[0, 0], 1, Regularization::Auto);
        assert_eq!(gs.gaussians()[0].mean(), &array![1.0, 1.0]);
    }

    #[test]
    fn identical_points_give_pure_ridge() {
        let gs = fit(array![[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]], &[0, 0, 0], 1, Regularization::Fixed(0.25));
        let g = &gs.gaussians()[0];
        assert_eq!(g.covariance(), &(Array2::<f64>::eye(2) * 0.25));
        // auto mode falls back to the 1e-12 floor
        let auto = fit(array![[1.0, 2.0], [1.0, 2.0]], &[0, 0], 1, Regularization::Auto);
        assert_eq!(auto.gaussians()[0].regularization(), 1e-12);
    }

    #[test]
    fn euclidean_reduction() {
        let gs = fit(array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]], &[0, 0, 0, 0], 1, Regularization::Auto);
        // covariance is 0.5 I plus a tiny ridge; rescale the query accordingly
        let g = &gs.gaussians()[0];
        assert_eq!(g.mahalanobis(array![0.0, 0.0].view()).unwrap(), 0.0);
        let d = g.mahalanobis(array![3.0, 4.0].view()).unwrap();
        let s = (0.5 + g.regularization()).sqrt();
        assert!((d - 5.0 / s).abs() < 1e-9);
    }

    #[test]
    fn absent_classes_are_reported() {
        let gs = fit(array![[0.0], [1.0], [5.0]], &[0, 0, 2], 3, Regularization::Auto);
        assert_eq!(gs.absent_classes(), &[ClassId(1)]);
        assert_eq!(gs.gaussians().len(), 2);
        assert!(gs.get(ClassId(1)).is_none());
    }

    #[test]
    fn survival_counting_rule() {
        let mut gs = fit(array![[0.0], [1.0]], &[0, 0], 1, Regularization::Auto);
        gs.gaussians[0].train_distances = vec![1.0, 2.0, 3.0, 4.0];
        let g = &gs.gaussians()[0];
        assert_eq!(g.survival(2.0), 0.75);
        assert_eq!(g.survival(0.5), 1.0);
        assert_eq!(g.survival(4.5), 0.0);
        assert_eq!(g.survival(4.0), 0.25);
    }

    #[test]
    fn p_in_distribution_extremes() {
        let gs = fit(
            array![[0.0, 0.0], [1.0, 0.3], [0.2, 1.0], [10.0, 10.0], [11.0, 10.5], [10.4, 11.0]],
            &[0, 0, 0, 1, 1, 1],
            2,
            Regularization::Auto,
        );
        let m = gs.gaussians()[0].mean().clone();
        assert_eq!(gs.p_in_distribution(m.view()).unwrap(), 1.0);
        assert_eq!(gs.p_in_distribution(array![-500.0, 400.0].view()).unwrap(), 0.0);
    }

    #[test]
    fn max_over_classes() {
        let mut gs = fit(array![[0.0], [1.0], [10.0], [11.0]], &[0, 0, 1, 1], 2, Regularization::Fixed(1.0));
        // pin the reference samples so the two survivals are 0.2 and 0.7 at x = 3
        let d0 = gs.gaussians()[0].mahalanobis(array![3.0].view()).unwrap();
        let d1 = gs.gaussians()[1].mahalanobis(array![3.0].view()).unwrap();
        gs.gaussians[0].train_distances = (0..10).map(|i| if i < 8 { d0 * 0.5 } else { d0 * 2.0 }).collect();
        gs.gaussians[1].train_distances = (0..10).map(|i| if i < 3 { d1 * 0.5 } else { d1 * 2.0 }).collect();
        assert!((gs.gaussians()[0].survival(d0) - 0.2).abs() < 1e-15);
        assert!((gs.gaussians()[1].survival(d1) - 0.7).abs() < 1e-15);
        assert!((gs.p_in_distribution(array![3.0].view()).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = GaussianConfig::default();
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(fit_gaussians(empty.view(), &[], &space(1), &cfg).is_err());
        let x = array![[1.0, f64::NAN]];
        assert!(fit_gaussians(x.view(), &[ClassId(0)], &space(1), &cfg).is_err());
        let gs = fit(array![[0.0, 0.0], [1.0, 1.0]], &[0, 0], 1, Regularization::Auto);
        assert!(gs.gaussians()[0].mahalanobis(array![f64::INFINITY, 0.0].view()).is_err());
        assert!(gs.gaussians()[0].mahalanobis(array![0.0].view()).is_err());
    }

    #[test]
    fn zero_ridge_on_singular_covariance_fails_with_class_id() {
        let cfg = GaussianConfig {
            regularization: Regularization::Fixed(0.0),
            ..Default::default()
        };
        let x = array![[1.0, 1.0], [2.0, 2.0]];
        let r = fit_gaussians(x.view(), &[ClassId(4), ClassId(4)], &LabelSpace::range(4, 1, "t").unwrap(), &cfg);
        assert!(matches!(r, Err(AliceError::Factorization(ClassId(4)))));
    }

    #[test]
    fn tied_mode_shares_covariance() {
        let cfg = GaussianConfig {
            covariance: CovarianceMode::Tied,
            ..Default::default()
        };
        let x = array![[0.0, 0.0], [1.0, 0.5], [0.3, 1.0], [5.0, 5.0], [6.0, 5.2], [5.5, 6.0]];
        let pred: Vec<ClassId> = [0, 0, 0, 1, 1, 1].iter().map(|c| ClassId(*c)).collect();
        let gs = fit_gaussians(x.view(), &pred, &space(2), &cfg).unwrap();
        assert_eq!(gs.gaussians()[0].covariance(), gs.gaussians()[1].covariance());
    }

    #[test]
    fn json_round_trip() {
        let gs = fit(
            array![[0.0, 0.0], [1.0, 0.3], [0.2, 1.0], [10.0, 10.0], [11.0, 10.5]],
            &[0, 0, 0, 2, 2],
            3,
            Regularization::Auto,
        );
        let text = persist::to_json(&gs).unwrap();
        let back: GaussianSet = persist::from_json(&text).unwrap();
        let q = array![0.7, 0.1];
        assert_eq!(back.p_in_distribution(q.view()).unwrap(), gs.p_in_distribution(q.view()).unwrap());
        assert_eq!(back.absent_classes(), &[ClassId(1)]);
    }
}
