//! `fit-alice`, `score` and `eval`.
//!
//! A data argument is either an export directory (`features.csv`,
//! `predictions.csv`, `labels.csv`, `manifest.json`) or a dataset CSV with a
//! `label` column, paired with a separate prediction CSV where predictions
//! are needed.

use std::fs;
use std::path::{Path, PathBuf};

use alice_core::eval::{calibration_histogram, EstimatorReport, EvaluationReport};
use alice_core::interchange::{load_export, read_features_csv, read_predictions_csv, scores_to_csv, ScoreRow};
use alice_core::persist;
use alice_core::transfer::{default_reg_grid, OptimizerSettings};
use alice_core::{
    fit_logistic, is_delta_epsilon_competent, AliceError, AliceEstimator, ClassId, ErrorFunction, GaussianConfig, LabelSpace,
    LabeledDataset, ProbabilityVector, TrustScoreEstimator,
};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::pipeline::{
    errors, grid_for, mean_ap_of, score, EvalSet, Fitted, NamedEstimator, ALICE, ALICE_NO_INDICATOR, ALICE_NO_OOD,
    ALICE_NO_TRANSFER, SOFTMAX, TRUST_SCORE,
};
use crate::report::Decision;

/// Points loaded from the command line.
#[derive(Debug, Clone)]
pub struct Input {
    pub features: Array2<f64>,
    pub labels: Option<Vec<ClassId>>,
    /// Prediction label space Ŷ and one probability row per point.
    pub predictions: Option<(LabelSpace, Vec<ProbabilityVector>)>,
}

impl Input {
    pub fn load(data: &Path, predictions: Option<&Path>) -> Result<Self> {
        if data.is_dir() {
            if predictions.is_some() {
                return Err(HarnessError::Usage(format!(
                    "{} is an export directory; it already holds its predictions",
                    data.display()
                )));
            }
            let e = load_export(data)?;
            return Ok(Self {
                features: e.features,
                labels: Some(e.labels),
                predictions: Some((e.manifest.label_space, e.predictions)),
            });
        }
        let (features, labels) = match alice_core::data::load_csv_dataset(data, "label", None) {
            Ok(ds) => (ds.features().clone(), Some(ds.labels().to_vec())),
            Err(AliceError::MissingLabelColumn { .. }) => (read_features_csv(data)?, None),
            Err(e) => return Err(e.into()),
        };
        let predictions = predictions.map(read_predictions_csv).transpose()?;
        if let Some((_, p)) = &predictions {
            if p.len() != features.nrows() {
                return Err(AliceError::InvalidDataset(format!(
                    "{} has {} rows but the prediction file has {}",
                    data.display(),
                    features.nrows(),
                    p.len()
                ))
                .into());
            }
        }
        Ok(Self {
            features,
            labels,
            predictions,
        })
    }

    pub fn labels(&self) -> Result<&[ClassId]> {
        self.labels
            .as_deref()
            .ok_or_else(|| HarnessError::Usage("labels are required (a `label` column or an export directory)".into()))
    }

    pub fn predictions(&self) -> Result<(&LabelSpace, &[ProbabilityVector])> {
        self.predictions
            .as_ref()
            .map(|(s, p)| (s, p.as_slice()))
            .ok_or_else(|| HarnessError::Usage("predictions are required (a prediction CSV or an export directory)".into()))
    }

    /// Labelled dataset over `space`.
    pub fn dataset(&self, space: &LabelSpace) -> Result<LabeledDataset> {
        Ok(LabeledDataset::new(self.features.clone(), self.labels()?.to_vec(), space.clone())?)
    }
}

#[derive(Debug, Clone)]
pub struct FitArgs {
    pub train: PathBuf,
    pub train_predictions: Option<PathBuf>,
    pub val: PathBuf,
    pub error_fn: ErrorFunction,
    pub gaussian: GaussianConfig,
    pub out: PathBuf,
}

/// Fits the Gaussians on the predicted training labels and the transfer
/// classifier on the true labels, then saves the estimator.
pub fn fit_alice(args: &FitArgs) -> Result<AliceEstimator> {
    let train = Input::load(&args.train, args.train_predictions.as_deref())?;
    let (space, preds) = train.predictions()?;
    let val = Input::load(&args.val, None)?;
    let predicted = crate::pipeline::predicted_classes(preds, space);
    let gaussians = alice_core::fit_gaussians(train.features.view(), &predicted, space, &args.gaussian)?;
    let (transfer, _) = fit_logistic(&train.dataset(space)?, &val.dataset(space)?, &default_reg_grid(), &OptimizerSettings::default())?;
    let est = AliceEstimator::new(gaussians, transfer, args.error_fn)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    persist::save(&est, &args.out)?;
    Ok(est)
}

pub fn estimator_by_name(name: &str) -> Result<NamedEstimator> {
    [ALICE, ALICE_NO_OOD, ALICE_NO_INDICATOR, ALICE_NO_TRANSFER, SOFTMAX, TRUST_SCORE]
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| HarnessError::Usage(format!("unknown estimator `{name}`")))
}

/// Where the δ values of a scoring run come from.
#[derive(Debug, Clone)]
pub enum DeltaSource {
    Values(Vec<f64>),
    /// `count` values spanning the errors on a labelled, predicted set.
    Grid { data: PathBuf, predictions: Option<PathBuf>, count: usize },
}

#[derive(Debug, Clone)]
pub struct ScoreArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub predictions: Option<PathBuf>,
    pub deltas: DeltaSource,
    pub error_fn: Option<ErrorFunction>,
    pub estimators: Vec<String>,
    pub out: PathBuf,
}

fn load_model(path: &Path, error_fn: Option<ErrorFunction>) -> Result<AliceEstimator> {
    let est: AliceEstimator = persist::load(path)?;
    Ok(match error_fn {
        Some(e) => est.variant(e, est.ablations()),
        None => est,
    })
}

fn check_space(est: &AliceEstimator, space: &LabelSpace) -> Result<()> {
    if !est.label_space().same_classes(space) {
        return Err(AliceError::LabelSpaceMismatch(format!(
            "model classes {:?}, prediction columns {:?}",
            est.label_space().class_ids(),
            space.class_ids()
        ))
        .into());
    }
    Ok(())
}

fn resolve_deltas(est: &AliceEstimator, source: &DeltaSource) -> Result<Vec<f64>> {
    match source {
        DeltaSource::Values(v) => {
            if v.is_empty() || v.iter().any(|d| d.is_nan() || *d < 0.0) {
                return Err(HarnessError::Usage("δ values must be non-negative numbers".into()));
            }
            Ok(v.clone())
        }
        DeltaSource::Grid { data, predictions, count } => {
            let input = Input::load(data, predictions.as_deref())?;
            let (space, preds) = input.predictions()?;
            check_space(est, space)?;
            let e = est.error_fn();
            grid_for(e, &errors(e, input.labels()?, preds, space)?, *count)
        }
    }
}

/// Writes `point_id,delta,estimator,score` rows and returns them.
pub fn score_points(args: &ScoreArgs) -> Result<Vec<ScoreRow>> {
    let est = load_model(&args.model, args.error_fn)?;
    let input = Input::load(&args.data, args.predictions.as_deref())?;
    let (space, preds) = input.predictions()?;
    check_space(&est, space)?;
    let deltas = resolve_deltas(&est, &args.deltas)?;
    let named = args.estimators.iter().map(|n| estimator_by_name(n)).collect::<Result<Vec<_>>>()?;
    if named.contains(&TRUST_SCORE) {
        return Err(HarnessError::Usage("trust_score needs training data; use `eval --train`".into()));
    }
    let fitted = Fitted {
        alice: est,
        trust: None,
    };
    let set = EvalSet {
        features: input.features.view(),
        predictions: preds,
        labels: &[],
    };
    let mut rows = Vec::new();
    for n in &named {
        let scores = score(*n, &fitted, &set, &deltas)?;
        for (j, delta) in deltas.iter().enumerate() {
            for (i, s) in scores.column(j).into_iter().enumerate() {
                rows.push(ScoreRow {
                    point_id: i,
                    delta: *delta,
                    estimator: n.name.to_string(),
                    score: s,
                });
            }
        }
    }
    rows.sort_by(|a, b| a.point_id.cmp(&b.point_id).then(a.delta.total_cmp(&b.delta)));
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&args.out, scores_to_csv(&rows)?)?;
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub model: PathBuf,
    pub test: PathBuf,
    pub test_predictions: Option<PathBuf>,
    pub val: PathBuf,
    pub val_predictions: Option<PathBuf>,
    /// Labelled training data for the trust-score baseline.
    pub train: Option<PathBuf>,
    pub deltas: usize,
    pub error_fn: Option<ErrorFunction>,
    pub calibration_delta: f64,
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub evaluation: EvaluationReport,
    pub calibration_delta: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub decision: Option<Decision>,
}

/// Mean AP of every estimator on a labelled test set, a calibration
/// histogram at `calibration_delta` and, with ε, the decision counts.
/// Writes `report.json`, `per_delta.csv` and `calibration.csv`.
pub fn evaluate(args: &EvalArgs) -> Result<EvalOutput> {
    let est = load_model(&args.model, args.error_fn)?;
    let test = Input::load(&args.test, args.test_predictions.as_deref())?;
    let val = Input::load(&args.val, args.val_predictions.as_deref())?;
    let (space, preds) = test.predictions()?;
    let (val_space, val_preds) = val.predictions()?;
    check_space(&est, space)?;
    check_space(&est, val_space)?;
    let e = *est.error_fn();
    let grid = grid_for(&e, &errors(&e, val.labels()?, val_preds, val_space)?, args.deltas)?;
    let test_errors = errors(&e, test.labels()?, preds, space)?;

    let trust = match &args.train {
        Some(p) => {
            let train = Input::load(p, None)?;
            Some(TrustScoreEstimator::fit(&train.dataset(space)?, TrustScoreEstimator::DEFAULT_K)?)
        }
        None => None,
    };
    let mut named = vec![ALICE, ALICE_NO_OOD, ALICE_NO_INDICATOR, ALICE_NO_TRANSFER, SOFTMAX];
    if trust.is_some() {
        named.push(TRUST_SCORE);
    }
    let set = EvalSet {
        features: test.features.view(),
        predictions: preds,
        labels: test.labels()?,
    };
    let fitted = Fitted {
        alice: est,
        trust: trust.as_ref(),
    };
    let mut estimators = Vec::new();
    for n in &named {
        let s = score(*n, &fitted, &set, &grid)?;
        if let Some(m) = mean_ap_of(&s, &test_errors, &grid)? {
            estimators.push(EstimatorReport::new(n.name, m));
        }
    }

    let cal_scores = fitted
        .alice
        .score_matrix(set.features, preds, &[args.calibration_delta])?
        .column(0)
        .to_vec();
    let competent: Vec<bool> = test_errors.iter().map(|v| *v < args.calibration_delta).collect();
    let decision = args.epsilon.map(|eps| {
        let flagged: Vec<usize> = (0..cal_scores.len()).filter(|i| is_delta_epsilon_competent(cal_scores[*i], eps)).collect();
        Decision {
            epsilon: eps,
            flagged: flagged.len(),
            flagged_competent: flagged.iter().filter(|i| competent[**i]).count(),
        }
    });
    let evaluation = EvaluationReport {
        error_fn: e.to_string(),
        seeds: vec![args.seed],
        grid,
        estimators,
        calibration: Some(calibration_histogram(&cal_scores, &competent)?),
    };
    let out = EvalOutput {
        calibration_delta: args.calibration_delta,
        decision,
        evaluation,
    };
    fs::create_dir_all(&args.out_dir)?;
    fs::write(args.out_dir.join("report.json"), serde_json::to_string_pretty(&out)? + "\n")?;
    fs::write(args.out_dir.join("per_delta.csv"), out.evaluation.per_delta_csv())?;
    if let Some(c) = &out.evaluation.calibration {
        fs::write(args.out_dir.join("calibration.csv"), c.to_csv())?;
    }
    Ok(out)
}
