//! Deterministic full-batch gradient descent with backtracking line search.
//!
//! The trial step of each iteration is the Barzilai-Borwein step computed from
//! the previous iterate (or twice the last accepted step when that is not
//! available); it is then halved until the Armijo sufficient-decrease
//! condition holds against the largest objective among the last
//! `window` iterates. With `window = 1` accepted steps never increase the
//! objective.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const MAX_STEP: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescentSettings {
    /// Stop once the gradient's max-norm is at or below this value.
    /// `None` runs exactly `max_iterations` steps.
    pub tolerance: Option<f64>,
    pub max_iterations: usize,
    pub initial_step: f64,
    /// Number of recent objective values the Armijo test compares against.
    #[serde(default = "monotone")]
    pub window: usize,
}

fn monotone() -> usize {
    1
}

impl Default for DescentSettings {
    fn default() -> Self {
        Self {
            tolerance: Some(1e-6),
            max_iterations: 5000,
            initial_step: 1.0,
            window: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DescentOutcome {
    pub params: Array1<f64>,
    pub objective: f64,
    pub gradient_max_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective before the first step and after every step.
    pub history: Vec<f64>,
    pub line_search_failures: usize,
}

/// Minimizes `objective`, which returns the value and gradient at a point.
/// `value` must agree with the first component of `objective`; it is used
/// during the line search where the gradient is not needed.
pub fn minimize<F, V>(objective: F, value: V, start: Array1<f64>, settings: &DescentSettings) -> DescentOutcome
where
    F: Fn(&Array1<f64>) -> (f64, Array1<f64>),
    V: Fn(&Array1<f64>) -> f64,
{
    let mut x = start;
    let (mut f, mut g) = objective(&x);
    let mut history = vec![f];
    let mut step = settings.initial_step;
    let mut prev: Option<(Array1<f64>, Array1<f64>)> = None;
    let mut iterations = 0;
    let mut failures = 0;
    let mut converged = false;

    loop {
        let gmax = max_norm(&g);
        if let Some(tol) = settings.tolerance {
            if gmax <= tol {
                converged = true;
                break;
            }
        }
        if iterations >= settings.max_iterations {
            break;
        }
        iterations += 1;

        let mut t = match &prev {
            Some((dx, dg)) => {
                let sy = dx.dot(dg);
                let ss = dx.dot(dx);
                if sy > 0.0 && ss > 0.0 {
                    ss / sy
                } else {
                    step * 2.0
                }
            }
            None => step,
        }
        .min(MAX_STEP);

        let gg = g.dot(&g);
        let window = settings.window.max(1);
        let reference = history[history.len().saturating_sub(window)..].iter().fold(f, |m, v| m.max(*v));
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = &x - &(&g * t);
            let fc = value(&candidate);
            if fc.is_finite() && fc <= reference - ARMIJO_C * t * gg {
                accepted = Some((candidate, fc));
                break;
            }
            t *= 0.5;
        }

        match accepted {
            Some((next, _)) => {
                let (fn_, gn) = objective(&next);
                prev = Some((&next - &x, &gn - &g));
                x = next;
                f = fn_;
                g = gn;
                step = t;
                history.push(f);
            }
            None => {
                // no descent possible at machine precision; treat as stationary
                failures += 1;
                history.push(f);
                if settings.tolerance.is_some() {
                    break;
                }
            }
        }
    }

    DescentOutcome {
        gradient_max_norm: max_norm(&g),
        params: x,
        objective: f,
        iterations,
        converged,
        history,
        line_search_failures: failures,
    }
}

fn max_norm(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
