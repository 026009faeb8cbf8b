//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

mod properties;

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use alice_harness::report::Row;
use alice_harness::{suites, ExperimentConfig, Regime, Scenario, SuiteReport};

struct Outcome {
    name: &'static str,
    failures: Vec<String>,
    detail: String,
}

fn mean(row: &Row, estimator: &str) -> f64 {
    row.mean_of(estimator).unwrap_or(f64::NAN)
}

fn row<'a>(report: &'a SuiteReport, pairs: &[(&str, &str)]) -> &'a Row {
    report.find(pairs).unwrap_or_else(|| panic!("{} has no row {pairs:?}", report.suite))
}

fn overlap() -> Outcome {
    let cfg = ExperimentConfig::default();
    let start = Instant::now();
    let report = suites::run(Scenario::Overlap, &cfg).unwrap();
    let per_trial = start.elapsed().as_secs_f64() / cfg.trials as f64;
    let expected_ap = [1.0, 0.998, 0.987, 0.960, 0.862, 0.500];
    let mut failures = Vec::new();
    let mut detail = Vec::new();
    for (o, want_ap) in cfg.overlaps.iter().zip(expected_ap) {
        let r = row(&report, &[("overlap", &o.to_string())]);
        let acc = r.accuracy.as_ref().and_then(|a| a.mean).unwrap_or(f64::NAN);
        let ap = mean(r, "alice");
        detail.push(format!("o={o}: acc {acc:.3} AP {ap:.3}"));
        let want_acc = 1.0 - o / 2.0;
        if !((acc - want_acc).abs() <= 0.03) {
            failures.push(format!("overlap {o}: accuracy {acc:.3}, want {want_acc:.3} ± 0.03"));
        }
        if !((ap - want_ap).abs() <= 0.03) {
            failures.push(format!("overlap {o}: ALICE AP {ap:.3}, want {want_ap:.3} ± 0.03"));
        }
    }
    detail.push(format!("{per_trial:.2} s/trial"));
    if per_trial >= 60.0 {
        failures.push(format!("{per_trial:.1} s per trial"));
    }
    Outcome {
        name: "class overlap",
        failures,
        detail: detail.join("; "),
    }
}

fn base_rate() -> Outcome {
    let cfg = ExperimentConfig::default();
    let report = suites::run(Scenario::Mixture, &cfg).unwrap();
    let mut failures = Vec::new();
    let mut detail = Vec::new();
    for p in &cfg.proportions {
        let r = row(&report, &[("in_proportion", &p.to_string()), ("error_fn", "distributional")]);
        let ablated = r.estimator("alice_no_ood").expect("ablated estimator");
        for (t, ap) in ablated.per_trial.iter().enumerate() {
            match ap {
                Some(ap) if (ap - p).abs() <= 1e-9 => {}
                other => failures.push(format!("p={p} trial {t}: ablated AP {other:?}")),
            }
        }
        let (full, abl) = (mean(r, "alice"), mean(r, "alice_no_ood"));
        detail.push(format!("p={p}: {full:.3} vs {abl:.3}"));
        if !(full >= abl + 0.05) {
            failures.push(format!("p={p}: full {full:.3} < ablated {abl:.3} + 0.05"));
        }
    }
    Outcome {
        name: "constant-score base rate",
        failures,
        detail: detail.join("; "),
    }
}

fn model_uncertainty() -> Outcome {
    let cfg = ExperimentConfig {
        regimes: vec![Regime::Underfit, Regime::Well],
        ..ExperimentConfig::default()
    };
    let report = suites::run(Scenario::ModelUncertainty, &cfg).unwrap();
    let under = row(&report, &[("regime", "underfit"), ("error_fn", "xent")]);
    let well = row(&report, &[("regime", "well"), ("error_fn", "xent")]);
    let (ua, us, ui) = (mean(under, "alice"), mean(under, "softmax"), mean(under, "alice_no_indicator"));
    let wa = mean(well, "alice");
    let mut failures = Vec::new();
    if !(ua >= 0.9) {
        failures.push(format!("underfit ALICE {ua:.3} < 0.9"));
    }
    if !(ua - us >= 0.2) {
        failures.push(format!("underfit gap {:.3} < 0.2", ua - us));
    }
    if !(wa >= 0.95) {
        failures.push(format!("well-trained ALICE {wa:.3} < 0.95"));
    }
    if !(ui < ua) {
        failures.push(format!("indicator-ablated {ui:.3} ≥ full {ua:.3}"));
    }
    let sd = |r: &Row, e: &str| r.estimator(e).map(|s| s.mean_ap.display()).unwrap_or_default();
    Outcome {
        name: "model-uncertainty ordering",
        failures,
        detail: format!(
            "underfit alice {} softmax {} no-indicator {}; well alice {}",
            sd(under, "alice"),
            sd(under, "softmax"),
            sd(under, "alice_no_indicator"),
            sd(well, "alice")
        ),
    }
}

fn calibration() -> Outcome {
    let cfg = ExperimentConfig::default();
    let report = suites::run(Scenario::Calibration, &cfg).unwrap();
    let mut failures = Vec::new();
    let mut detail = Vec::new();
    for e in ["zero-one", "xent"] {
        let entry = report
            .calibration
            .iter()
            .find(|c| c.setting.iter().any(|p| p.key == "iterations" && p.value == "200") && c.setting.iter().any(|p| p.key == "error_fn" && p.value == e))
            .expect("calibration entry");
        match entry.max_abs_residual {
            Some(r) => {
                detail.push(format!("{e}: max residual {r:.3}"));
                if r > 0.15 {
                    failures.push(format!("{e}: max |residual| {r:.3} > 0.15"));
                }
            }
            None => failures.push(format!("{e}: no bin with ≥ {} points", entry.min_count)),
        }
    }
    Outcome {
        name: "calibration",
        failures,
        detail: detail.join("; "),
    }
}

fn property_suites() -> Outcome {
    let checks = properties::all();
    let n = checks.len();
    let failures: Vec<String> = checks.into_iter().filter_map(|(name, r)| r.err().map(|e| format!("{name}: {e}"))).collect();
    Outcome {
        name: "property suites",
        detail: format!("{}/{n} checks", n - failures.len()),
        failures,
    }
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let cfg = ExperimentConfig {
        trials: 2,
        deltas: 20,
        ..ExperimentConfig::default()
    };
    let mut failures = Vec::new();
    let mut compared = 0;
    for scenario in Scenario::ALL {
        let cfg = ExperimentConfig {
            trials: if scenario == Scenario::Imbalance { 1 } else { cfg.trials },
            ..cfg.clone()
        };
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        suites::run(scenario, &cfg).unwrap().write(a.path()).unwrap();
        suites::run(scenario, &cfg).unwrap().write(b.path()).unwrap();
        let (fa, fb) = (read_all(a.path()), read_all(b.path()));
        compared += fa.len();
        if fa != fb {
            failures.push(format!("{scenario}: reports differ"));
        }
    }
    Outcome {
        name: "determinism",
        failures,
        detail: format!("{compared} report files compared byte for byte"),
    }
}

fn main() -> ExitCode {
    let criteria: [fn() -> Outcome; 6] = [overlap, base_rate, model_uncertainty, calibration, property_suites, determinism];
    let mut failed = 0;
    for criterion in criteria {
        let o = criterion();
        if o.failures.is_empty() {
            println!("PASS  {}: {}", o.name, o.detail);
        } else {
            failed += 1;
            println!("FAIL  {}: {}", o.name, o.detail);
            for f in &o.failures {
                println!("        {f}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
