//! Dataset ingestion, splitting and synthetic generators.
//!
//! The on-disk dataset format is a CSV file with a header row, numeric
//! feature columns and one integer label column (by convention
//! `f0,…,f{d-1},label`).

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{AliceError, Result};
use crate::types::{ClassId, LabelSpace, LabeledDataset};

const DIGITS_CSV: &str = include_str!("../data/digits.csv");

/// The 8×8 handwritten digits corpus (1797 rows, 64 pixel features with
/// values 0..=16, classes 0..=9).
pub fn digits() -> Result<LabeledDataset> {
    read_dataset(DIGITS_CSV.as_bytes(), Path::new("<bundled digits.csv>"), "label", None)
}

pub fn load_csv_dataset(path: impl AsRef<Path>, label_column: &str, label_space: Option<LabelSpace>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_dataset(file, path, label_column, label_space)
}

fn csv_error(path: &Path, e: csv::Error) -> AliceError {
    AliceError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Parses an integer class id, accepting integral decimals such as `3.0`.
pub(crate) fn parse_class(cell: &str) -> Option<ClassId> {
    let t = cell.trim();
    if let Ok(v) = t.parse::<i64>() {
        return Some(ClassId(v));
    }
    let f = t.parse::<f64>().ok()?;
    (f.is_finite() && f.fract() == 0.0 && f.abs() < 9.0e15).then_some(ClassId(f as i64))
}

pub fn read_dataset<R: Read>(reader: R, path: &Path, label_column: &str, label_space: Option<LabelSpace>) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.is_empty() {
        return Err(AliceError::EmptyFile { path: path.to_path_buf() });
    }
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| AliceError::MissingLabelColumn {
            path: path.to_path_buf(),
            column: label_column.to_string(),
        })?;
    let d = headers.len() - 1;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        for (col, cell) in rec.iter().enumerate() {
            if col == label_idx {
                let c = parse_class(cell).ok_or_else(|| AliceError::NonNumeric {
                    path: path.to_path_buf(),
                    row: row + 1,
                    column: headers[col].to_string(),
                    value: cell.to_string(),
                })?;
                labels.push(c);
            } else {
                let v: f64 = cell.trim().parse().map_err(|_| AliceError::NonNumeric {
                    path: path.to_path_buf(),
                    row: row + 1,
                    column: headers[col].to_string(),
                    value: cell.to_string(),
                })?;
                values.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(AliceError::EmptyFile { path: path.to_path_buf() });
    }
    if d == 0 {
        return Err(AliceError::InvalidDataset(format!("{}: no feature columns", path.display())));
    }
    let features = Array2::from_shape_vec((labels.len(), d), values)
        .map_err(|e| AliceError::InvalidDataset(e.to_string()))?;
    let space = match label_space {
        Some(s) => s,
        None => LabelSpace::from_unsorted(labels.iter().copied(), path.display().to_string())?,
    };
    LabeledDataset::new(features, labels, space)
}

/// Writes `f0,…,f{d-1},label`.
pub fn write_csv_dataset(data: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(dataset_to_csv(data).as_bytes())?;
    Ok(())
}

pub fn dataset_to_csv(data: &LabeledDataset) -> String {
    let mut out = String::new();
    let header: Vec<String> = (0..data.dim()).map(|j| format!("f{j}")).chain(["label".to_string()]).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for (row, label) in data.features().rows().into_iter().zip(data.labels()) {
        for v in row {
            out.push_str(&v.to_string());
            out.push(',');
        }
        out.push_str(&label.to_string());
        out.push('\n');
    }
    out
}

/// Train/test/validation fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub test: f64,
    pub validation: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub validation: LabeledDataset,
}

impl SplitSpec {
    /// 80/10/10.
    pub fn standard(seed: u64) -> Self {
        Self {
            train: 0.8,
            test: 0.1,
            validation: 0.1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = [self.train, self.test, self.validation];
        if f.iter().any(|v| !(*v > 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(AliceError::InvalidArgument(format!(
                "split fractions must be positive and sum to 1, got {f:?}"
            )));
        }
        Ok(())
    }

    /// Shuffled disjoint partition: `round(train·n)` training rows,
    /// `round(test·n)` test rows, the remainder for validation.
    pub fn index_split(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        self.validate()?;
        let n_train = (self.train * n as f64).round() as usize;
        let n_test = (self.test * n as f64).round() as usize;
        if n_train == 0 || n_test == 0 || n_train + n_test >= n {
            return Err(AliceError::InvalidArgument(format!("{n} rows are too few for split {self:?}")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed));
        let val = idx.split_off(n_train + n_test);
        let test = idx.split_off(n_train);
        Ok((idx, test, val))
    }

    pub fn split(&self, data: &LabeledDataset) -> Result<Splits> {
        let (tr, te, va) = self.index_split(data.len())?;
        Ok(Splits {
            train: data.select(&tr)?,
            test: data.select(&te)?,
            validation: data.select(&va)?,
        })
    }
}

/// Rows per class for the overlap generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapCounts {
    pub train: usize,
    pub test: usize,
    pub validation: usize,
}

impl Default for OverlapCounts {
    fn default() -> Self {
        Self {
            train: 1000,
            test: 100,
            validation: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OverlapData {
    pub z: f64,
    pub splits: Splits,
}

/// Boundary `z` for which `(-z, z)` holds an `overlap` share of each class's
/// mass when class 0 is `U(-5, z)` and class 1 is `U(-z, 5)`.
pub fn overlap_boundary(overlap: f64) -> f64 {
    5.0 * overlap / (2.0 - overlap)
}

/// One-dimensional two-class data with a controlled overlap fraction.
pub fn make_overlap_dataset(overlap: f64, counts: OverlapCounts, seed: u64) -> Result<OverlapData> {
    if !(0.0..=1.0).contains(&overlap) {
        return Err(AliceError::InvalidArgument(format!("overlap must be in [0, 1], got {overlap}")));
    }
    let z = overlap_boundary(overlap);
    let space = LabelSpace::range(0, 2, "overlap")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |per_class: usize| -> Result<LabeledDataset> {
        let mut x = Vec::with_capacity(2 * per_class);
        let mut y = Vec::with_capacity(2 * per_class);
        for _ in 0..per_class {
            x.push(rng.random_range(-5.0..z.max(-5.0 + f64::EPSILON)));
            y.push(ClassId(0));
        }
        for _ in 0..per_class {
            x.push(rng.random_range(-z..5.0));
            y.push(ClassId(1));
        }
        LabeledDataset::new(Array2::from_shape_vec((x.len(), 1), x).expect("column"), y, space.clone())
    };
    let train = draw(counts.train)?;
    let test = draw(counts.test)?;
    let validation = draw(counts.validation)?;
    Ok(OverlapData {
        z,
        splits: Splits { train, test, validation },
    })
}

/// Keeps `ceil(keep_fraction · n_c)` uniformly chosen rows of each starved
/// class; other classes are untouched. Row order is preserved.
pub fn make_imbalanced(train: &LabeledDataset, starved: &[ClassId], keep_fraction: f64, seed: u64) -> Result<LabeledDataset> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(AliceError::InvalidArgument(format!("keep_fraction must be in (0, 1], got {keep_fraction}")));
    }
    let counts = train.class_counts();
    for c in starved {
        match train.label_space().index_of(*c) {
            Some(j) if counts[j] > 0 => {}
            _ => return Err(AliceError::MissingClasses(vec![*c])),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut drop = vec![false; train.len()];
    for c in starved {
        let mut rows: Vec<usize> = (0..train.len()).filter(|i| train.labels()[*i] == *c).collect();
        let keep = (keep_fraction * rows.len() as f64).ceil() as usize;
        rows.shuffle(&mut rng);
        for &i in &rows[keep..] {
            drop[i] = true;
        }
    }
    let kept: Vec<usize> = (0..train.len()).filter(|i| !drop[*i]).collect();
    train.select(&kept)
}

#[derive(Debug, Clone)]
pub struct Mixture {
    /// Labelled under the union of both label spaces.
    pub dataset: LabeledDataset,
    /// True for rows drawn from the in-distribution source.
    pub in_distribution: Vec<bool>,
    /// Set when a source had fewer rows than requested.
    pub sampled_with_replacement: bool,
}

/// `round(in_proportion · n_total)` in-distribution rows and the rest from
/// `out_dist`, shuffled together.
pub fn make_mixture(
    in_dist: &LabeledDataset,
    out_dist: &LabeledDataset,
    in_proportion: f64,
    n_total: usize,
    seed: u64,
) -> Result<Mixture> {
    if !(0.0..=1.0).contains(&in_proportion) {
        return Err(AliceError::InvalidArgument(format!("in_proportion must be in [0, 1], got {in_proportion}")));
    }
    if !in_dist.label_space().is_disjoint(out_dist.label_space()) {
        return Err(AliceError::LabelSpaceMismatch("mixture sources must use disjoint class ids".into()));
    }
    if in_dist.dim() != out_dist.dim() {
        return Err(AliceError::DimensionMismatch {
            expected: in_dist.dim(),
            got: out_dist.dim(),
        });
    }
    let n_in = (in_proportion * n_total as f64).round() as usize;
    let n_out = n_total - n_in;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut replaced = false;
    let mut sample = |n_src: usize, k: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
        if k <= n_src {
            let mut idx: Vec<usize> = (0..n_src).collect();
            idx.shuffle(rng);
            idx.truncate(k);
            idx
        } else {
            replaced = true;
            (0..k).map(|_| rng.random_range(0..n_src)).collect()
        }
    };
    let in_rows = sample(in_dist.len(), n_in, &mut rng);
    let out_rows = sample(out_dist.len(), n_out, &mut rng);

    let mut rows: Vec<(bool, usize)> = in_rows.into_iter().map(|i| (true, i)).chain(out_rows.into_iter().map(|i| (false, i))).collect();
    rows.shuffle(&mut rng);

    let d = in_dist.dim();
    let mut features = Array2::<f64>::zeros((rows.len(), d));
    let mut labels = Vec::with_capacity(rows.len());
    for (r, (is_in, i)) in rows.iter().enumerate() {
        let src = if *is_in { in_dist } else { out_dist };
        features.row_mut(r).assign(&src.row(*i));
        labels.push(src.labels()[*i]);
    }
    let space = in_dist.label_space().union(out_dist.label_space(), "mixture");
    Ok(Mixture {
        dataset: LabeledDataset::new(features, labels, space)?,
        in_distribution: rows.iter().map(|(f, _)| *f).collect(),
        sampled_with_replacement: replaced,
    })
}

/// Isotropic unit-variance 2-D Gaussian blobs centred on a circle.
pub fn make_blobs(
    n_classes: usize,
    radius: f64,
    per_class: usize,
    class_offset: i64,
    seed: u64,
    name: &str,
) -> Result<LabeledDataset> {
    if n_classes == 0 || per_class == 0 {
        return Err(AliceError::InvalidArgument("blobs need at least one class and one point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::<f64>::zeros((n_classes * per_class, 2));
    let mut y = Vec::with_capacity(n_classes * per_class);
    for c in 0..n_classes {
        let angle = std::f64::consts::TAU * c as f64 / n_classes as f64;
        let (cx, cy) = (radius * angle.cos(), radius * angle.sin());
        for i in 0..per_class {
            let r = c * per_class + i;
            let nx: f64 = rng.sample(StandardNormal);
            let ny: f64 = rng.sample(StandardNormal);
            x[[r, 0]] = cx + nx;
            x[[r, 1]] = cy + ny;
            y.push(ClassId(class_offset + c as i64));
        }
    }
    LabeledDataset::new(x, y, LabelSpace::range(class_offset, n_classes, name)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub class_id: ClassId,
    pub count: usize,
}

/// Provenance record written next to generated datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source: String,
    pub seed: u64,
    pub rows: usize,
    pub dim: usize,
    pub label_space: LabelSpace,
    pub class_counts: Vec<ClassCount>,
}

impl DatasetManifest {
    pub fn describe(data: &LabeledDataset, source: impl Into<String>, seed: u64) -> Self {
        let class_counts = data
            .class_counts()
            .into_iter()
            .enumerate()
            .map(|(j, count)| ClassCount {
                class_id: data.label_space().id_at(j),
                count,
            })
            .collect();
        Self {
            source: source.into(),
            seed,
            rows: data.len(),
            dim: data.dim(),
            label_space: data.label_space().clone(),
            class_counts,
        }
    }
}
