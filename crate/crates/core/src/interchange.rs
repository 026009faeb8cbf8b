//! File formats shared with external exporters and batch scoring.
//!
//! An export directory holds `features.csv` (header `f0,…,f{d-1}`),
//! `predictions.csv` (header = class ids, one probability column per
//! class), `labels.csv` (header `label`) and `manifest.json`. Row `i` of
//! every CSV refers to the same point.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::parse_class;
use crate::error::{AliceError, Result};
use crate::types::{ClassId, LabelSpace, LabeledDataset, ProbabilityVector};

pub const FEATURES_FILE: &str = "features.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKSUM_ALGORITHM: &str = "sha256";
/// Row-sum tolerance for exported probability rows.
pub const EXPORT_PROBABILITY_TOLERANCE: f64 = 1e-6;

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checksums {
    pub algorithm: String,
    pub features: String,
    pub predictions: String,
    pub labels: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub model: String,
    pub layer: String,
    pub split: String,
    pub rows: usize,
    pub dim: usize,
    /// Prediction label space; its order is the column order of
    /// `predictions.csv`.
    pub label_space: LabelSpace,
    pub checksums: Checksums,
}

#[derive(Debug, Clone)]
pub struct Export {
    pub manifest: ExportManifest,
    pub features: Array2<f64>,
    pub predictions: Vec<ProbabilityVector>,
    pub labels: Vec<ClassId>,
}

impl Export {
    pub fn label_space(&self) -> &LabelSpace {
        &self.manifest.label_space
    }

    /// Features and true labels as a dataset over `space` (which must
    /// contain every label).
    pub fn dataset(&self, space: LabelSpace) -> Result<LabeledDataset> {
        LabeledDataset::new(self.features.clone(), self.labels.clone(), space)
    }
}

fn csv_error(path: &Path, e: csv::Error) -> AliceError {
    AliceError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn non_numeric(path: &Path, row: usize, column: &str, value: &str) -> AliceError {
    AliceError::NonNumeric {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        value: value.to_string(),
    }
}

fn read_table(bytes: &[u8], path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers: Vec<String> = rdr.headers().map_err(|e| csv_error(path, e))?.iter().map(|h| h.trim().to_string()).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(AliceError::EmptyFile { path: path.to_path_buf() });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((headers, rows))
}

fn parse_matrix(headers: &[String], rows: &[Vec<String>], path: &Path) -> Result<Array2<f64>> {
    let mut values = Vec::with_capacity(rows.len() * headers.len());
    for (r, row) in rows.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| non_numeric(path, r + 1, &headers[c], cell))?;
            values.push(v);
        }
    }
    Array2::from_shape_vec((rows.len(), headers.len()), values).map_err(|e| AliceError::InvalidDataset(e.to_string()))
}

pub fn parse_features_csv(bytes: &[u8], path: &Path) -> Result<Array2<f64>> {
    let (headers, rows) = read_table(bytes, path)?;
    if rows.is_empty() {
        return Err(AliceError::EmptyFile { path: path.to_path_buf() });
    }
    let x = parse_matrix(&headers, &rows, path)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(AliceError::NonFinite);
    }
    Ok(x)
}

pub fn read_features_csv(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    parse_features_csv(&fs::read(path)?, path)
}

pub fn features_to_csv(features: &Array2<f64>) -> String {
    let mut out = (0..features.ncols()).map(|j| format!("f{j}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for row in features.rows() {
        out.push_str(&row.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

/// Parses a prediction table. The header must list strictly increasing
/// class ids; every row must sum to 1 within `tolerance`.
pub fn parse_predictions_csv(bytes: &[u8], path: &Path, tolerance: f64) -> Result<(LabelSpace, Vec<ProbabilityVector>)> {
    let (headers, rows) = read_table(bytes, path)?;
    let ids = headers
        .iter()
        .map(|h| parse_class(h).ok_or_else(|| non_numeric(path, 0, h, h)))
        .collect::<Result<Vec<_>>>()?;
    let space = LabelSpace::new(ids, path.display().to_string())?;
    if rows.is_empty() {
        return Err(AliceError::EmptyFile { path: path.to_path_buf() });
    }
    let m = parse_matrix(&headers, &rows, path)?;
    let preds = m
        .rows()
        .into_iter()
        .enumerate()
        .map(|(r, row)| {
            ProbabilityVector::with_tolerance(row.to_vec(), tolerance)
                .map_err(|e| AliceError::InvalidProbability(format!("{} row {}: {e}", path.display(), r + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((space, preds))
}

pub fn read_predictions_csv(path: impl AsRef<Path>) -> Result<(LabelSpace, Vec<ProbabilityVector>)> {
    let path = path.as_ref();
    parse_predictions_csv(&fs::read(path)?, path, EXPORT_PROBABILITY_TOLERANCE)
}

pub fn predictions_to_csv(space: &LabelSpace, predictions: &[ProbabilityVector]) -> Result<String> {
    let mut out = space.class_ids().iter().map(ClassId::to_string).collect::<Vec<_>>().join(",");
    out.push('\n');
    for p in predictions {
        if p.len() != space.len() {
            return Err(AliceError::DimensionMismatch {
                expected: space.len(),
                got: p.len(),
            });
        }
        out.push_str(&p.as_slice().iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_labels_csv(bytes: &[u8], path: &Path) -> Result<Vec<ClassId>> {
    let (headers, rows) = read_table(bytes, path)?;
    if headers.len() != 1 || headers[0] != "label" {
        return Err(AliceError::MissingLabelColumn {
            path: path.to_path_buf(),
            column: "label".into(),
        });
    }
    rows.iter()
        .enumerate()
        .map(|(r, row)| parse_class(&row[0]).ok_or_else(|| non_numeric(path, r + 1, "label", &row[0])))
        .collect()
}

pub fn read_labels_csv(path: impl AsRef<Path>) -> Result<Vec<ClassId>> {
    let path = path.as_ref();
    parse_labels_csv(&fs::read(path)?, path)
}

pub fn labels_to_csv(labels: &[ClassId]) -> String {
    let mut out = String::from("label\n");
    for l in labels {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    out
}

/// Identifies where an export came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportSource {
    pub model: String,
    pub layer: String,
    pub split: String,
}

/// Writes the four export files and returns the manifest.
pub fn write_export(
    dir: impl AsRef<Path>,
    source: &ExportSource,
    features: &Array2<f64>,
    space: &LabelSpace,
    predictions: &[ProbabilityVector],
    labels: &[ClassId],
) -> Result<ExportManifest> {
    let n = features.nrows();
    if predictions.len() != n || labels.len() != n {
        return Err(AliceError::InvalidDataset(format!(
            "row counts differ: features {n}, predictions {}, labels {}",
            predictions.len(),
            labels.len()
        )));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let f = features_to_csv(features);
    let p = predictions_to_csv(space, predictions)?;
    let l = labels_to_csv(labels);
    fs::write(dir.join(FEATURES_FILE), &f)?;
    fs::write(dir.join(PREDICTIONS_FILE), &p)?;
    fs::write(dir.join(LABELS_FILE), &l)?;
    let manifest = ExportManifest {
        model: source.model.clone(),
        layer: source.layer.clone(),
        split: source.split.clone(),
        rows: n,
        dim: features.ncols(),
        label_space: space.clone(),
        checksums: Checksums {
            algorithm: CHECKSUM_ALGORITHM.into(),
            features: sha256_hex(f.as_bytes()),
            predictions: sha256_hex(p.as_bytes()),
            labels: sha256_hex(l.as_bytes()),
        },
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

fn verify_checksum(path: &Path, bytes: &[u8], expected: &str) -> Result<()> {
    let got = sha256_hex(bytes);
    if !got.eq_ignore_ascii_case(expected) {
        return Err(AliceError::Format(format!(
            "{}: checksum mismatch (manifest {expected}, file {got})",
            path.display()
        )));
    }
    Ok(())
}

fn file_in(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

/// Loads and cross-checks an export directory: checksums, row counts,
/// feature dimension and prediction label space against the manifest.
pub fn load_export(dir: impl AsRef<Path>) -> Result<Export> {
    let dir = dir.as_ref();
    let manifest: ExportManifest = serde_json::from_str(&fs::read_to_string(file_in(dir, MANIFEST_FILE))?)?;
    if manifest.checksums.algorithm != CHECKSUM_ALGORITHM {
        return Err(AliceError::Format(format!("unsupported checksum algorithm {:?}", manifest.checksums.algorithm)));
    }
    let fp = file_in(dir, FEATURES_FILE);
    let pp = file_in(dir, PREDICTIONS_FILE);
    let lp = file_in(dir, LABELS_FILE);
    let (fb, pb, lb) = (fs::read(&fp)?, fs::read(&pp)?, fs::read(&lp)?);
    verify_checksum(&fp, &fb, &manifest.checksums.features)?;
    verify_checksum(&pp, &pb, &manifest.checksums.predictions)?;
    verify_checksum(&lp, &lb, &manifest.checksums.labels)?;

    let features = parse_features_csv(&fb, &fp)?;
    let (space, predictions) = parse_predictions_csv(&pb, &pp, EXPORT_PROBABILITY_TOLERANCE)?;
    let labels = parse_labels_csv(&lb, &lp)?;

    let n = manifest.rows;
    for (what, got) in [("features", features.nrows()), ("predictions", predictions.len()), ("labels", labels.len())] {
        if got != n {
            return Err(AliceError::InvalidDataset(format!("{what}: {got} rows, manifest says {n}")));
        }
    }
    if features.ncols() != manifest.dim {
        return Err(AliceError::DimensionMismatch {
            expected: manifest.dim,
            got: features.ncols(),
        });
    }
    if !space.same_classes(&manifest.label_space) {
        return Err(AliceError::LabelSpaceMismatch(format!(
            "predictions.csv header {:?} differs from manifest {:?}",
            space.class_ids(),
            manifest.label_space.class_ids()
        )));
    }
    Ok(Export {
        manifest,
        features,
        predictions,
        labels,
    })
}

/// One line of a batch score table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub point_id: usize,
    pub delta: f64,
    pub estimator: String,
    pub score: f64,
}

pub fn scores_to_csv(rows: &[ScoreRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| AliceError::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| AliceError::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| AliceError::Format(e.to_string()))
}

pub fn read_scores_csv(path: impl AsRef<Path>) -> Result<Vec<ScoreRow>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    rdr.deserialize().map(|r| r.map_err(|e| csv_error(path, e))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample() -> (Array2<f64>, LabelSpace, Vec<ProbabilityVector>, Vec<ClassId>) {
        let x = array![[0.5, -1.0], [2.0, 0.25], [1e-3, 7.0]];
        let space = LabelSpace::new(vec![ClassId(3), ClassId(8)], "s").unwrap();
        let p = vec![
            ProbabilityVector::new(vec![0.25, 0.75]).unwrap(),
            ProbabilityVector::new(vec![1.0, 0.0]).unwrap(),
            ProbabilityVector::new(vec![0.1, 0.9]).unwrap(),
        ];
        (x, space, p, vec![ClassId(3), ClassId(8), ClassId(8)])
    }

    fn source() -> ExportSource {
        ExportSource {
            model: "m".into(),
            layer: "penultimate".into(),
            split: "test".into(),
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (x, space, p, y) = sample();
        let m = write_export(dir.path(), &source(), &x, &space, &p, &y).unwrap();
        let e = load_export(dir.path()).unwrap();
        assert_eq!(e.manifest, m);
        assert_eq!(e.features, x);
        assert_eq!(e.predictions, p);
        assert_eq!(e.labels, y);
        let header = fs::read_to_string(dir.path().join(PREDICTIONS_FILE)).unwrap();
        assert!(header.starts_with("3,8\n"));
    }

    #[test]
    fn tampered_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (x, space, p, y) = sample();
        write_export(dir.path(), &source(), &x, &space, &p, &y).unwrap();
        fs::write(dir.path().join(LABELS_FILE), "label\n8\n8\n8\n").unwrap();
        assert!(matches!(load_export(dir.path()), Err(AliceError::Format(_))));
    }

    #[test]
    fn logits_are_rejected() {
        let path = Path::new("p.csv");
        let r = parse_predictions_csv(b"0,1\n2.0,-1.0\n", path, EXPORT_PROBABILITY_TOLERANCE);
        assert!(matches!(r, Err(AliceError::InvalidProbability(_))));
        let (_, ok) = parse_predictions_csv(b"0,1\n0.3,0.7000005\n", path, EXPORT_PROBABILITY_TOLERANCE).unwrap();
        assert_eq!(ok.len(), 1);
    }

    #[test]
    fn mismatched_row_counts() {
        let dir = tempfile::tempdir().unwrap();
        let (x, space, p, y) = sample();
        assert!(write_export(dir.path(), &source(), &x, &space, &p[..2], &y).is_err());
    }

    #[test]
    fn score_table_columns() {
        let rows = vec![ScoreRow {
            point_id: 4,
            delta: 0.5,
            estimator: "alice".into(),
            score: 0.25,
        }];
        assert_eq!(scores_to_csv(&rows).unwrap(), "point_id,delta,estimator,score\n4,0.5,alice,0.25\n");
    }
}
