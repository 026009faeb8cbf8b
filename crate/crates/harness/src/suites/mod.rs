//! Experiment suites. Each returns a [`SuiteReport`]; trials run
//! sequentially with seeds derived from the configured base seed.

pub mod calibration;
pub mod imbalance;
pub mod mixture;
pub mod overlap;
pub mod uncertainty;

use alice_core::models::ToyModel;
use alice_core::{LabeledDataset, ProbabilityVector};

use crate::config::{ExperimentConfig, Scenario};
use crate::error::Result;
use crate::pipeline::{mean_ap_of, score, EvalSet, Fitted, NamedEstimator};
use crate::report::{RowBuilder, SuiteReport};

pub fn run(scenario: Scenario, config: &ExperimentConfig) -> Result<SuiteReport> {
    config.validate()?;
    match scenario {
        Scenario::Overlap => overlap::run(config),
        Scenario::ModelUncertainty => uncertainty::run(config),
        Scenario::Imbalance => imbalance::run(config),
        Scenario::Mixture => mixture::run(config),
        Scenario::Calibration => calibration::run(config),
    }
}

/// Independent stream seed for `(base, tag)` (SplitMix64 finalizer).
pub fn sub_seed(base: u64, tag: u64) -> u64 {
    let mut z = base.wrapping_add(tag.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn predict(model: &ToyModel, data: &LabeledDataset) -> Result<Vec<ProbabilityVector>> {
    Ok(model.predict_batch(data.features().view())?)
}

/// Scores every estimator and records its mean AP for `trial`.
pub(crate) fn evaluate_into(
    row: &mut RowBuilder,
    trial: usize,
    estimators: &[NamedEstimator],
    fitted: &Fitted<'_>,
    set: &EvalSet<'_>,
    errors: &[f64],
    grid: &[f64],
) -> Result<()> {
    for est in estimators {
        let scores = score(*est, fitted, set, grid)?;
        let m = mean_ap_of(&scores, errors, grid)?;
        row.record(est.name, trial, m.as_ref());
    }
    Ok(())
}
