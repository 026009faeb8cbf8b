//! In-distribution blobs mixed with out-of-distribution blobs.

use alice_core::data::{make_blobs, make_mixture};
use alice_core::eval::calibration_bin;
use alice_core::models::{train_toy, ToyKind};
use alice_core::transfer::{default_reg_grid, OptimizerSettings};
use alice_core::{fit_logistic, ErrorFunction, TrustScoreEstimator};

use super::{predict, sub_seed};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::pipeline::{errors, fit_ood, grid_for, mean_ap_of, score, EvalSet, Fitted, NamedEstimator, ALICE, ALICE_NO_OOD, SOFTMAX, TRUST_SCORE};
use crate::report::{params, RowBuilder, ScoreHistogram, SuiteReport};

pub const ESTIMATORS: [NamedEstimator; 4] = [ALICE, ALICE_NO_OOD, SOFTMAX, TRUST_SCORE];
pub const CLASSES: usize = 10;
pub const IN_RADIUS: f64 = 5.0;
pub const OUT_RADIUS: f64 = 20.0;
/// First class id of the out-of-distribution blobs.
pub const OUT_OFFSET: i64 = 100;
pub const TRAIN_PER_CLASS: usize = 100;
pub const VALIDATION_PER_CLASS: usize = 20;
pub const POOL_PER_CLASS: usize = 100;
pub const BASE_ITERATIONS: usize = 5000;

pub fn run(config: &ExperimentConfig) -> Result<SuiteReport> {
    let error_fns = config.error_fns_or(&[ErrorFunction::distributional()]);
    let mut report = SuiteReport::new("mixture", config);
    let mut rows: Vec<RowBuilder> = Vec::new();
    let mut histograms: Vec<ScoreHistogram> = Vec::new();
    for &p in &config.proportions {
        for e in &error_fns {
            let setting = params(&[("in_proportion", p.to_string()), ("error_fn", e.to_string())]);
            rows.push(RowBuilder::new(setting.clone()));
            for est in [ALICE, ALICE_NO_OOD] {
                for origin in ["in", "out"] {
                    histograms.push(ScoreHistogram::new(setting.clone(), est.name, origin, f64::NAN));
                }
            }
        }
    }
    let mut replaced = false;
    for t in 0..config.trials {
        let seed = config.trial_seed(t);
        let train = make_blobs(CLASSES, IN_RADIUS, TRAIN_PER_CLASS, 0, sub_seed(seed, 0), "in")?;
        let val_in = make_blobs(CLASSES, IN_RADIUS, VALIDATION_PER_CLASS, 0, sub_seed(seed, 1), "in")?;
        let val_out = make_blobs(CLASSES, OUT_RADIUS, VALIDATION_PER_CLASS, OUT_OFFSET, sub_seed(seed, 2), "out")?;
        let test_in = make_blobs(CLASSES, IN_RADIUS, POOL_PER_CLASS, 0, sub_seed(seed, 3), "in")?;
        let test_out = make_blobs(CLASSES, OUT_RADIUS, POOL_PER_CLASS, OUT_OFFSET, sub_seed(seed, 4), "out")?;

        let base = train_toy(ToyKind::logistic(), &train, BASE_ITERATIONS, seed)?;
        let space = base.label_space().clone();
        let gaussians = fit_ood(train.features().view(), &predict(&base, &train)?, &space)?;
        let (transfer, _) = fit_logistic(&train, &val_in, &default_reg_grid(), &OptimizerSettings::default())?;
        let trust = TrustScoreEstimator::fit(&train, TrustScoreEstimator::DEFAULT_K)?;
        let fitted = Fitted::new(gaussians, transfer, error_fns[0], Some(&trust))?;

        for (pi, &p) in config.proportions.iter().enumerate() {
            let val = make_mixture(&val_in, &val_out, p, val_in.len(), sub_seed(seed, 10 + 2 * pi as u64))?;
            let test = make_mixture(&test_in, &test_out, p, config.mixture_size, sub_seed(seed, 11 + 2 * pi as u64))?;
            replaced |= val.sampled_with_replacement || test.sampled_with_replacement;
            let p_val = predict(&base, &val.dataset)?;
            let p_test = predict(&base, &test.dataset)?;
            let set = EvalSet {
                features: test.dataset.features().view(),
                predictions: &p_test,
                labels: test.dataset.labels(),
            };
            for (ei, e) in error_fns.iter().enumerate() {
                let idx = pi * error_fns.len() + ei;
                let f = fitted.with_error_fn(*e);
                let grid = grid_for(e, &errors(e, val.dataset.labels(), &p_val, &space)?, config.deltas)?;
                let test_errors = errors(e, test.dataset.labels(), &p_test, &space)?;
                let delta = grid[grid.len() - 1];
                for est in ESTIMATORS {
                    let scores = score(est, &f, &set, &grid)?;
                    let m = mean_ap_of(&scores, &test_errors, &grid)?;
                    rows[idx].record(est.name, t, m.as_ref());
                    if let Some(hi) = [ALICE, ALICE_NO_OOD].iter().position(|x| *x == est) {
                        let last = scores.column(grid.len() - 1);
                        for (s, is_in) in last.iter().zip(&test.in_distribution) {
                            let h = &mut histograms[idx * 4 + hi * 2 + usize::from(!*is_in)];
                            h.delta = delta;
                            h.counts[calibration_bin(*s)] += 1;
                        }
                    }
                }
            }
        }
    }
    report.push_rows(rows);
    report.histograms = histograms;
    report.notes.push("histograms pool ALICE scores at the largest δ of each trial's grid, split by point origin".into());
    if replaced {
        report.notes.push("a mixture source was smaller than requested; rows were sampled with replacement".into());
    }
    Ok(report)
}
