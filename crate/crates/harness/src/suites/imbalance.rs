//! Digits with the upper half of the classes starved of training data.

use alice_core::data::{make_imbalanced, SplitSpec};
use alice_core::models::{train_toy, ToyKind};
use alice_core::transfer::{default_reg_grid, OptimizerSettings};
use alice_core::{fit_logistic, ClassId, ErrorFunction, TrustScoreEstimator};

use super::{predict, sub_seed};
use super::uncertainty::scaled_digits;
use crate::config::{ExperimentConfig, Regime};
use crate::error::Result;
use crate::pipeline::{errors, fit_ood, grid_for, predicted_classes, score, mean_ap_of, EvalSet, Fitted, NamedEstimator, ALICE, SOFTMAX, TRUST_SCORE};
use crate::report::{params, RowBuilder, SuiteReport};

pub const ESTIMATORS: [NamedEstimator; 3] = [ALICE, SOFTMAX, TRUST_SCORE];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Grouping {
    All,
    TrueClass,
    PredictedClass,
}

impl Grouping {
    fn name(&self) -> &'static str {
        match self {
            Grouping::All => "all",
            Grouping::TrueClass => "true_class",
            Grouping::PredictedClass => "predicted_class",
        }
    }
}

pub fn run(config: &ExperimentConfig) -> Result<SuiteReport> {
    let error_fns = config.error_fns_or(&[ErrorFunction::cross_entropy(), ErrorFunction::zero_one()]);
    let data = scaled_digits()?;
    let space = data.label_space().clone();
    let k = space.len();
    let starved: Vec<ClassId> = space.class_ids()[k - k / 2..].to_vec();
    let mut keep = vec![config.keep_fraction];
    if config.keep_fraction != 1.0 {
        keep.push(1.0);
    }

    let mut groups: Vec<(Grouping, Option<ClassId>)> = vec![(Grouping::All, None)];
    for g in [Grouping::TrueClass, Grouping::PredictedClass] {
        groups.extend(space.class_ids().iter().map(|c| (g, Some(*c))));
    }
    let mut rows: Vec<RowBuilder> = Vec::new();
    for kf in &keep {
        for e in &error_fns {
            for (g, c) in &groups {
                let class = c.map_or("all".to_string(), |c| c.to_string());
                let is_starved = c.is_some_and(|c| starved.contains(&c));
                rows.push(RowBuilder::new(params(&[
                    ("keep_fraction", kf.to_string()),
                    ("error_fn", e.to_string()),
                    ("grouping", g.name().into()),
                    ("class", class),
                    ("starved", is_starved.to_string()),
                ])));
            }
        }
    }

    let regime = Regime::Well;
    let per_kf = error_fns.len() * groups.len();
    for t in 0..config.trials {
        let seed = config.trial_seed(t);
        let s = SplitSpec::standard(sub_seed(seed, 0)).split(&data)?;
        for (ki, kf) in keep.iter().enumerate() {
            let train = make_imbalanced(&s.train, &starved, *kf, sub_seed(seed, 1))?;
            let base = train_toy(ToyKind::mlp(), &train, regime.iterations(), sub_seed(seed, 2))?;
            let (p_train, p_val, p_test) = (predict(&base, &train)?, predict(&base, &s.validation)?, predict(&base, &s.test)?);
            let accuracy = base.accuracy(&s.test)?;
            let gaussians = fit_ood(train.features().view(), &p_train, &space)?;
            let (transfer, _) = fit_logistic(&train, &s.validation, &default_reg_grid(), &OptimizerSettings::default())?;
            let trust = TrustScoreEstimator::fit(&train, TrustScoreEstimator::DEFAULT_K)?;
            let fitted = Fitted::new(gaussians, transfer, error_fns[0], Some(&trust))?;
            let set = EvalSet {
                features: s.test.features().view(),
                predictions: &p_test,
                labels: s.test.labels(),
            };
            let predicted = predicted_classes(&p_test, &space);
            for (ei, e) in error_fns.iter().enumerate() {
                let f = fitted.with_error_fn(*e);
                let grid = grid_for(e, &errors(e, s.validation.labels(), &p_val, &space)?, config.deltas)?;
                let test_errors = errors(e, s.test.labels(), &p_test, &space)?;
                let all_scores = ESTIMATORS
                    .iter()
                    .map(|est| score(*est, &f, &set, &grid))
                    .collect::<Result<Vec<_>>>()?;
                for (gi, (g, c)) in groups.iter().enumerate() {
                    let row = &mut rows[ki * per_kf + ei * groups.len() + gi];
                    let members: Vec<usize> = (0..s.test.len())
                        .filter(|i| match (g, c) {
                            (Grouping::All, _) => true,
                            (Grouping::TrueClass, Some(class)) => s.test.labels()[*i] == *class,
                            (_, Some(class)) => predicted[*i] == *class,
                            (_, None) => unreachable!("per-class groups carry a class"),
                        })
                        .collect();
                    if *g == Grouping::All {
                        row.accuracy(accuracy);
                    }
                    let sub_errors: Vec<f64> = members.iter().map(|i| test_errors[*i]).collect();
                    for (est, scores) in ESTIMATORS.iter().zip(&all_scores) {
                        let m = if members.is_empty() {
                            None
                        } else {
                            mean_ap_of(&scores.select(&members), &sub_errors, &grid)?
                        };
                        row.record(est.name, t, m.as_ref());
                    }
                }
            }
        }
    }
    let mut report = SuiteReport::new("imbalance", config);
    report.push_rows(rows);
    report.notes.push(format!(
        "starved classes {:?} keep a fraction of their training rows; keep_fraction 1 is the control run",
        starved.iter().map(|c| c.0).collect::<Vec<_>>()
    ));
    Ok(report)
}
