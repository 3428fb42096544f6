//! Damped Gauss-Newton (Levenberg-Marquardt) for small least-squares problems.

use crate::error::{Error, Result};
use crate::linalg::{solve, Dense};

/// Residual model with an analytic Jacobian over `N` parameters.
pub trait Residuals<const N: usize> {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Residual `i` and its gradient with respect to the parameters.
    fn eval(&self, params: &[f64; N], i: usize) -> (f64, [f64; N]);
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step changes the cost by less than this fraction.
    pub relative_tolerance: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 500,
            relative_tolerance: 1e-10,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LmReport<const N: usize> {
    pub params: [f64; N],
    /// Sum of squared residuals.
    pub cost: f64,
    pub iterations: usize,
}

fn cost<const N: usize>(model: &impl Residuals<N>, p: &[f64; N]) -> f64 {
    (0..model.len()).map(|i| model.eval(p, i).0.powi(2)).sum()
}

pub fn levenberg_marquardt<const N: usize>(
    model: &impl Residuals<N>,
    start: [f64; N],
    opts: LmOptions,
) -> Result<LmReport<N>> {
    let mut params = start;
    let mut current = cost(model, &params);
    let floor = 1e-20 * current;
    let mut lambda = opts.initial_damping;

    for iteration in 1..=opts.max_iterations {
        let mut jtj = [[0.0; N]; N];
        let mut jtr = [0.0; N];
        for i in 0..model.len() {
            let (r, g) = model.eval(&params, i);
            for a in 0..N {
                jtr[a] += g[a] * r;
                for b in 0..N {
                    jtj[a][b] += g[a] * g[b];
                }
            }
        }

        let mut accepted = false;
        while lambda < 1e16 {
            let system = Dense::from_fn(N, |a, b| {
                let diag = if a == b { lambda * jtj[a][a].max(1e-30) } else { 0.0 };
                jtj[a][b] + diag
            });
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let step = match solve(&system, &rhs) {
                Ok(s) => s,
                Err(_) => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut trial = params;
            for a in 0..N {
                trial[a] += step[a];
            }
            let trial_cost = cost(model, &trial);
            if trial_cost.is_finite() && trial_cost < current {
                let change = (current - trial_cost) / current.max(f64::MIN_POSITIVE);
                let step_norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
                let scale = trial.iter().map(|v| v * v).sum::<f64>().sqrt();
                params = trial;
                current = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if change < opts.relative_tolerance || current < 1e-30 || current <= floor || step_norm <= 1e-12 * (scale + 1e-12) {
                    return Ok(LmReport {
                        params,
                        cost: current,
                        iterations: iteration,
                    });
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no descent direction left at any damping: stationary point
            return Ok(LmReport {
                params,
                cost: current,
                iterations: iteration,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        best: pad4(&params),
        best_rmse: (current / model.len().max(1) as f64).sqrt(),
    })
}

fn pad4<const N: usize>(p: &[f64; N]) -> [f64; 4] {
    let mut out = [f64::NAN; 4];
    for (o, v) in out.iter_mut().zip(p) {
        *o = *v;
    }
    out
}
