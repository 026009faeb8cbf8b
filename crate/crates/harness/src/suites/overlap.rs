//! Two-class uniform data with controlled class overlap.

use alice_core::data::{make_overlap_dataset, OverlapCounts};
use alice_core::models::{train_toy, ToyKind};
use alice_core::transfer::{default_reg_grid, OptimizerSettings};
use alice_core::{fit_logistic, ErrorFunction, TrustScoreEstimator};

use super::{evaluate_into, predict, sub_seed};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::pipeline::{errors, fit_ood, grid_for, EvalSet, Fitted, ALICE, ALICE_NO_OOD, ALICE_NO_TRANSFER, SOFTMAX, TRUST_SCORE};
use crate::report::{params, RowBuilder, SuiteReport};

pub const BASE_ITERATIONS: usize = 5000;
pub const ESTIMATORS: [crate::pipeline::NamedEstimator; 5] = [ALICE, SOFTMAX, TRUST_SCORE, ALICE_NO_TRANSFER, ALICE_NO_OOD];

pub fn run(config: &ExperimentConfig) -> Result<SuiteReport> {
    let error_fns = config.error_fns_or(&[ErrorFunction::zero_one()]);
    let mut report = SuiteReport::new("overlap", config);
    let mut rows: Vec<RowBuilder> = Vec::new();
    for &overlap in &config.overlaps {
        for e in &error_fns {
            rows.push(RowBuilder::new(params(&[("overlap", overlap.to_string()), ("error_fn", e.to_string())])));
        }
    }
    for (oi, &overlap) in config.overlaps.iter().enumerate() {
        for t in 0..config.trials {
            let seed = sub_seed(config.trial_seed(t), oi as u64);
            let data = make_overlap_dataset(overlap, OverlapCounts::default(), seed)?;
            let s = &data.splits;
            let base = train_toy(ToyKind::logistic(), &s.train, BASE_ITERATIONS, seed)?;
            let space = base.label_space().clone();
            let (p_train, p_val, p_test) = (predict(&base, &s.train)?, predict(&base, &s.validation)?, predict(&base, &s.test)?);
            let accuracy = base.accuracy(&s.test)?;
            let gaussians = fit_ood(s.train.features().view(), &p_train, &space)?;
            let (transfer, _) = fit_logistic(&s.train, &s.validation, &default_reg_grid(), &OptimizerSettings::default())?;
            let trust = TrustScoreEstimator::fit(&s.train, TrustScoreEstimator::DEFAULT_K)?;
            let fitted = Fitted::new(gaussians, transfer, error_fns[0], Some(&trust))?;
            let set = EvalSet {
                features: s.test.features().view(),
                predictions: &p_test,
                labels: s.test.labels(),
            };
            for (ei, e) in error_fns.iter().enumerate() {
                let row = &mut rows[oi * error_fns.len() + ei];
                row.accuracy(accuracy);
                let f = fitted.with_error_fn(*e);
                let grid = grid_for(e, &errors(e, s.validation.labels(), &p_val, &space)?, config.deltas)?;
                let test_errors = errors(e, s.test.labels(), &p_test, &space)?;
                evaluate_into(row, t, &ESTIMATORS, &f, &set, &test_errors, &grid)?;
            }
        }
    }
    report.push_rows(rows);
    report.notes.push("accuracy is the base model's test accuracy; target 1 - overlap/2".into());
    Ok(report)
}
