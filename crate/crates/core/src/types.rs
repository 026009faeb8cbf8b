//! Label spaces, probability vectors, and labeled datasets.

use std::fmt;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{AliceError, Result};

/// Globally namespaced class identifier.
///
/// Ids are plain integers so that the label spaces of two unrelated datasets
/// can be unioned without collisions, provided their ids were assigned from
/// disjoint ranges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub i64);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<i64> for ClassId {
    fn from(v: i64) -> Self {
        ClassId(v)
    }
}

/// Ordered set of class ids with a descriptive tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LabelSpaceRepr", into = "LabelSpaceRepr")]
pub struct LabelSpace {
    class_ids: Vec<ClassId>,
    name: String,
}

#[derive(Serialize, Deserialize)]
struct LabelSpaceRepr {
    name: String,
    class_ids: Vec<ClassId>,
}

impl TryFrom<LabelSpaceRepr> for LabelSpace {
    type Error = AliceError;
    fn try_from(r: LabelSpaceRepr) -> Result<Self> {
        LabelSpace::new(r.class_ids, r.name)
    }
}

impl From<LabelSpace> for LabelSpaceRepr {
    fn from(s: LabelSpace) -> Self {
        LabelSpaceRepr {
            name: s.name,
            class_ids: s.class_ids,
        }
    }
}

impl LabelSpace {
    /// Ids must be non-empty and strictly increasing.
    pub fn new(class_ids: Vec<ClassId>, name: impl Into<String>) -> Result<Self> {
        if class_ids.is_empty() {
            return Err(AliceError::InvalidLabelSpace("no classes".into()));
        }
        if let Some(w) = class_ids.windows(2).find(|w| w[0] >= w[1]) {
            return Err(AliceError::InvalidLabelSpace(format!(
                "class ids must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(Self {
            class_ids,
            name: name.into(),
        })
    }

    /// Builds the space from arbitrary ids, sorting and deduplicating them.
    pub fn from_unsorted(ids: impl IntoIterator<Item = ClassId>, name: impl Into<String>) -> Result<Self> {
        let mut v: Vec<ClassId> = ids.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self::new(v, name)
    }

    /// Contiguous ids `offset..offset + count`.
    pub fn range(offset: i64, count: usize, name: impl Into<String>) -> Result<Self> {
        Self::new((0..count as i64).map(|i| ClassId(offset + i)).collect(), name)
    }

    pub fn class_ids(&self) -> &[ClassId] {
        &self.class_ids
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn index_of(&self, id: ClassId) -> Option<usize> {
        self.class_ids.binary_search(&id).ok()
    }

    pub fn contains(&self, id: ClassId) -> bool {
        self.index_of(id).is_some()
    }

    pub fn id_at(&self, index: usize) -> ClassId {
        self.class_ids[index]
    }

    /// True when the two spaces share no class id.
    pub fn is_disjoint(&self, other: &LabelSpace) -> bool {
        self.class_ids.iter().all(|c| !other.contains(*c))
    }

    pub fn union(&self, other: &LabelSpace, name: impl Into<String>) -> LabelSpace {
        let ids = self.class_ids.iter().chain(other.class_ids.iter()).copied();
        // both inputs are non-empty, so the union is too
        Self::from_unsorted(ids, name).expect("union of non-empty label spaces")
    }

    /// Same classes, ignoring the name tag.
    pub fn same_classes(&self, other: &LabelSpace) -> bool {
        self.class_ids == other.class_ids
    }
}

/// Tolerance on the sum of a probability vector.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-9;

/// Non-negative entries summing to one, indexed like some [`LabelSpace`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbabilityVector {
    probs: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(probs, PROBABILITY_SUM_TOLERANCE)
    }

    /// Validates against a caller-chosen sum tolerance (interchange files are
    /// checked at 1e-6 because they pass through decimal text).
    pub fn with_tolerance(probs: Vec<f64>, tol: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(AliceError::InvalidProbability("empty".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(AliceError::InvalidProbability(
                "entries must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(AliceError::InvalidProbability(format!("entries sum to {sum}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(len: usize) -> Self {
        Self {
            probs: vec![1.0 / len as f64; len],
        }
    }

    pub fn one_hot(len: usize, index: usize) -> Self {
        let mut probs = vec![0.0; len];
        probs[index] = 1.0;
        Self { probs }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the largest entry; the first one wins on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate().skip(1) {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.probs[self.argmax()]
    }
}

impl std::ops::Index<usize> for ProbabilityVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.probs[i]
    }
}

/// Feature matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<ClassId>,
    label_space: LabelSpace,
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, labels: Vec<ClassId>, label_space: LabelSpace) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(AliceError::InvalidDataset(format!("shape {n}x{d}")));
        }
        if labels.len() != n {
            return Err(AliceError::InvalidDataset(format!(
                "{} labels for {n} rows",
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(AliceError::InvalidDataset("non-finite feature value".into()));
        }
        if let Some(bad) = labels.iter().find(|l| !label_space.contains(**l)) {
            return Err(AliceError::UnknownClass(*bad));
        }
        Ok(Self {
            features,
            labels,
            label_space,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    /// Label positions within the label space.
    pub fn label_indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .map(|l| self.label_space.index_of(*l).expect("validated at construction"))
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.label_space.len()];
        for i in self.label_indices() {
            counts[i] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order. Indices may repeat.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(features, labels, self.label_space.clone())
    }

    /// Same rows under a different (superset) label space.
    pub fn with_label_space(self, label_space: LabelSpace) -> Result<Self> {
        Self::new(self.features, self.labels, label_space)
    }

    /// Elementwise feature transform (e.g. pixel rescaling).
    pub fn map_features(mut self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.features.mapv_inplace(f);
        Self::new(self.features, self.labels, self.label_space)
    }
}
