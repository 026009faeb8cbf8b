//! Under-fit, well-trained and over-fit MLPs on the digits corpus.

use alice_core::data::{digits, SplitSpec, Splits};
use alice_core::models::train_toy;
use alice_core::transfer::{default_reg_grid, OptimizerSettings};
use alice_core::{fit_logistic, ErrorFunction, LabeledDataset, TrustScoreEstimator};

use super::{evaluate_into, predict, sub_seed};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::pipeline::{
    base_training_rows, errors, fit_ood, grid_for, EvalSet, Fitted, NamedEstimator, ALICE, ALICE_NO_INDICATOR, ALICE_NO_OOD,
    ALICE_NO_TRANSFER, SOFTMAX, TRUST_SCORE,
};
use crate::report::{params, RowBuilder, SuiteReport};

pub const ESTIMATORS: [NamedEstimator; 6] = [ALICE, SOFTMAX, TRUST_SCORE, ALICE_NO_INDICATOR, ALICE_NO_TRANSFER, ALICE_NO_OOD];

/// Digits with pixel intensities scaled from 0..=16 to [0, 1].
pub fn scaled_digits() -> Result<LabeledDataset> {
    Ok(digits()?.map_features(|v| v / 16.0)?)
}

pub fn default_error_fns() -> Vec<ErrorFunction> {
    vec![ErrorFunction::cross_entropy(), ErrorFunction::mean_squared(), ErrorFunction::zero_one()]
}

pub fn run(config: &ExperimentConfig) -> Result<SuiteReport> {
    let error_fns = config.error_fns_or(&default_error_fns());
    let data = scaled_digits()?;
    let mut report = SuiteReport::new("model-uncertainty", config);
    let mut rows: Vec<RowBuilder> = Vec::new();
    for r in &config.regimes {
        for e in &error_fns {
            rows.push(RowBuilder::new(params(&[("regime", r.name().into()), ("error_fn", e.to_string())])));
        }
    }
    for t in 0..config.trials {
        let seed = config.trial_seed(t);
        let s: Splits = SplitSpec::standard(sub_seed(seed, 0)).split(&data)?;
        let (transfer, _) = fit_logistic(&s.train, &s.validation, &default_reg_grid(), &OptimizerSettings::default())?;
        let trust = TrustScoreEstimator::fit(&s.train, TrustScoreEstimator::DEFAULT_K)?;
        for (ri, regime) in config.regimes.iter().enumerate() {
            let base_train = base_training_rows(&s.train, regime.subsample())?;
            let base = train_toy(regime.model(), &base_train, regime.iterations(), sub_seed(seed, 1 + ri as u64))?;
            let space = base.label_space().clone();
            let (p_train, p_val, p_test) = (predict(&base, &s.train)?, predict(&base, &s.validation)?, predict(&base, &s.test)?);
            let accuracy = base.accuracy(&s.test)?;
            let gaussians = fit_ood(s.train.features().view(), &p_train, &space)?;
            let fitted = Fitted::new(gaussians, transfer.clone(), error_fns[0], Some(&trust))?;
            let set = EvalSet {
                features: s.test.features().view(),
                predictions: &p_test,
                labels: s.test.labels(),
            };
            for (ei, e) in error_fns.iter().enumerate() {
                let row = &mut rows[ri * error_fns.len() + ei];
                row.accuracy(accuracy);
                let f = fitted.with_error_fn(*e);
                let grid = grid_for(e, &errors(e, s.validation.labels(), &p_val, &space)?, config.deltas)?;
                let test_errors = errors(e, s.test.labels(), &p_test, &space)?;
                evaluate_into(row, t, &ESTIMATORS, &f, &set, &test_errors, &grid)?;
            }
        }
    }
    report.push_rows(rows);
    report.notes.push("scores are computed on the input features (pixels / 16)".into());
    Ok(report)
}
