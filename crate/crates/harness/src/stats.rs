//! Across-trial summaries.

use serde::{Deserialize, Serialize};

/// Mean and population standard deviation over the trials that produced a
/// value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub undefined_trials: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

impl Summary {
    pub fn of(values: &[Option<f64>]) -> Self {
        let defined: Vec<f64> = values.iter().flatten().copied().collect();
        let n = defined.len();
        let (mean, sd) = if n == 0 {
            (None, None)
        } else {
            let m = defined.iter().sum::<f64>() / n as f64;
            let var = defined.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            (Some(m), Some(var.sqrt()))
        };
        Self {
            trials: n,
            undefined_trials: values.len() - n,
            mean,
            sd,
        }
    }

    pub fn of_all(values: &[f64]) -> Self {
        Self::of(&values.iter().map(|v| Some(*v)).collect::<Vec<_>>())
    }

    /// `mean ± sd` with three decimals, or `n/a`.
    pub fn display(&self) -> String {
        match (self.mean, self.sd) {
            (Some(m), Some(s)) => format!("{m:.3} ± {s:.3}"),
            _ => "n/a".into(),
        }
    }
}
