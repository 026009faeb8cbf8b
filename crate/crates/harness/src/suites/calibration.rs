//! Calibration of ALICE scores across stages of training.

use alice_core::data::{make_overlap_dataset, OverlapCounts};
use alice_core::eval::{calibration_histogram, mean_score_vs_delta};
use alice_core::models::{train_toy, ToyKind};
use alice_core::transfer::{default_reg_grid, OptimizerSettings};
use alice_core::{fit_logistic, is_delta_epsilon_competent, ErrorFunction};

use super::{evaluate_into, predict, sub_seed};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::pipeline::{errors, fit_ood, grid_for, EvalSet, Fitted, ALICE};
use crate::report::{params, CalibrationEntry, Curve, Decision, RowBuilder, SuiteReport};

/// Bins with fewer points are left out of the residual check.
pub const MIN_BIN_COUNT: usize = 30;

pub fn run(config: &ExperimentConfig) -> Result<SuiteReport> {
    let error_fns = config.error_fns_or(&[ErrorFunction::zero_one(), ErrorFunction::cross_entropy()]);
    let delta = config.calibration_delta;
    let mut report = SuiteReport::new("calibration", config);
    let n_cells = config.calibration_iterations.len() * error_fns.len();
    let settings: Vec<_> = config
        .calibration_iterations
        .iter()
        .flat_map(|it| error_fns.iter().map(move |e| params(&[("iterations", it.to_string()), ("error_fn", e.to_string())])))
        .collect();
    let mut rows: Vec<RowBuilder> = settings.iter().cloned().map(RowBuilder::new).collect();
    let mut pooled_scores: Vec<Vec<f64>> = vec![Vec::new(); n_cells];
    let mut pooled_competent: Vec<Vec<bool>> = vec![Vec::new(); n_cells];
    let mut curves = Vec::new();

    for t in 0..config.trials {
        let seed = config.trial_seed(t);
        let data = make_overlap_dataset(config.calibration_overlap, OverlapCounts::default(), sub_seed(seed, 0))?;
        let s = &data.splits;
        let (transfer, _) = fit_logistic(&s.train, &s.validation, &default_reg_grid(), &OptimizerSettings::default())?;
        for (ii, &iterations) in config.calibration_iterations.iter().enumerate() {
            let base = train_toy(ToyKind::mlp(), &s.train, iterations, sub_seed(seed, 1))?;
            let space = base.label_space().clone();
            let (p_train, p_val, p_test) = (predict(&base, &s.train)?, predict(&base, &s.validation)?, predict(&base, &s.test)?);
            let accuracy = base.accuracy(&s.test)?;
            let gaussians = fit_ood(s.train.features().view(), &p_train, &space)?;
            let fitted = Fitted::new(gaussians, transfer.clone(), error_fns[0], None)?;
            let set = EvalSet {
                features: s.test.features().view(),
                predictions: &p_test,
                labels: s.test.labels(),
            };
            for (ei, e) in error_fns.iter().enumerate() {
                let cell = ii * error_fns.len() + ei;
                let f = fitted.with_error_fn(*e);
                let test_errors = errors(e, s.test.labels(), &p_test, &space)?;
                for (i, x) in s.test.features().rows().into_iter().enumerate() {
                    pooled_scores[cell].push(f.alice.score(x, &p_test[i], delta)?);
                    pooled_competent[cell].push(test_errors[i] < delta);
                }
                let grid = grid_for(e, &errors(e, s.validation.labels(), &p_val, &space)?, config.deltas)?;
                rows[cell].accuracy(accuracy);
                evaluate_into(&mut rows[cell], t, &[ALICE], &f, &set, &test_errors, &grid)?;
                curves.push(Curve {
                    setting: settings[cell].clone(),
                    trial: t,
                    points: mean_score_vs_delta(&f.alice, set.features, &p_test, &grid)?,
                });
            }
        }
    }

    for (cell, setting) in settings.into_iter().enumerate() {
        let histogram = calibration_histogram(&pooled_scores[cell], &pooled_competent[cell])?;
        let decision = config.epsilon.map(|eps| {
            let flagged: Vec<usize> = (0..pooled_scores[cell].len())
                .filter(|i| is_delta_epsilon_competent(pooled_scores[cell][*i], eps))
                .collect();
            Decision {
                epsilon: eps,
                flagged: flagged.len(),
                flagged_competent: flagged.iter().filter(|i| pooled_competent[cell][**i]).count(),
            }
        });
        report.calibration.push(CalibrationEntry {
            setting,
            delta,
            max_abs_residual: histogram.max_abs_residual(MIN_BIN_COUNT),
            histogram,
            min_count: MIN_BIN_COUNT,
            decision,
        });
    }
    report.push_rows(rows);
    report.curves = curves;
    report.notes.push(format!(
        "overlap {} data; histograms pool every trial's test points at δ = {delta}",
        config.calibration_overlap
    ));
    Ok(report)
}
