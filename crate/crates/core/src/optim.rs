//! Derivative-free minimization (Nelder–Mead) with deterministic restarts.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Settings for [`nelder_mead`].
#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOptions {
    /// Iteration cap per run.
    pub max_iter: usize,
    /// A run converges once every vertex is within this max-norm distance of the best.
    pub tol: f64,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
    /// Additional runs started from the incumbent.
    pub restarts: usize,
    /// Two converged runs agreeing to this max-norm distance confirm the minimum.
    pub confirm_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
            initial_step: 0.1,
            restarts: 3,
            confirm_tol: 1e-6,
        }
    }
}

/// Result of a minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    /// Iterations summed over all runs.
    pub iterations: usize,
    /// Runs after the first.
    pub restarts: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

struct Run {
    x: Vec<f64>,
    value: f64,
    iterations: usize,
    converged: bool,
}

/// Minimizes `f` from `x0`.
///
/// After the first run, each restart rebuilds a fresh simplex around the
/// incumbent (alternating the sign of the edges). The minimum counts as
/// converged once a run terminates on the simplex-size criterion and lands
/// within `confirm_tol` of the previous converged run. Non-finite function
/// values are treated as `+∞`. If no confirmation happens within the
/// restart budget the best point found is returned in the error.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut best = x0.to_vec();
    let mut best_value = eval(&best);
    let mut iterations = 0;
    let mut previous: Option<Vec<f64>> = None;
    for run in 0..=opts.restarts {
        let sign = if run % 2 == 0 { 1.0 } else { -1.0 };
        let r = single_run(&mut eval, &best, sign * opts.initial_step, opts);
        iterations += r.iterations;
        if r.value <= best_value {
            best_value = r.value;
            best = r.x.clone();
        }
        if r.converged {
            if let Some(prev) = &previous {
                if max_dist(prev, &r.x) <= opts.confirm_tol {
                    return Ok(Minimum {
                        x: best,
                        value: best_value,
                        iterations,
                        restarts: run,
                        converged: true,
                    });
                }
            }
            previous = Some(r.x);
        } else {
            previous = None;
        }
    }
    Err(Error::NonConvergence {
        best_theta: best,
        best_value,
        iterations,
        restarts: opts.restarts,
    })
}

fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn single_run<F>(f: &mut F, x0: &[f64], step: f64, opts: &NelderMeadOptions) -> Run
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut centroid = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut trial2 = vec![0.0; n];

    let mut iterations = 0;
    loop {
        // stable sort keeps ties in insertion order, so runs are reproducible
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = simplex[1..]
            .iter()
            .map(|v| max_dist(v, &simplex[0]))
            .fold(0.0, f64::max);
        if diameter < opts.tol {
            return Run {
                x: simplex.swap_remove(0),
                value: values[0],
                iterations,
                converged: true,
            };
        }
        if iterations >= opts.max_iter {
            return Run {
                x: simplex.swap_remove(0),
                value: values[0],
                iterations,
                converged: false,
            };
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let along = |t: f64, out: &mut Vec<f64>| {
            for ((o, c), w) in out.iter_mut().zip(&centroid).zip(&worst) {
                *o = c + t * (c - w);
            }
        };

        along(REFLECT, &mut trial);
        let fr = f(&trial);
        if fr < values[0] {
            along(EXPAND, &mut trial2);
            let fe = f(&trial2);
            if fe < fr {
                simplex[n].copy_from_slice(&trial2);
                values[n] = fe;
            } else {
                simplex[n].copy_from_slice(&trial);
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n].copy_from_slice(&trial);
            values[n] = fr;
            continue;
        }
        let (t, reference) = if fr < values[n] {
            (CONTRACT * REFLECT, fr)
        } else {
            (-CONTRACT, values[n])
        };
        along(t, &mut trial2);
        let fc = f(&trial2);
        if fc < reference {
            simplex[n].copy_from_slice(&trial2);
            values[n] = fc;
            continue;
        }
        let head = simplex[0].clone();
        for i in 1..=n {
            for (x, b) in simplex[i].iter_mut().zip(&head) {
                *x = b + SHRINK * (*x - b);
            }
            values[i] = f(&simplex[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq(x: f64) -> f64 {
        x * x
    }

    #[test]
    fn quadratic_bowl() {
        let f = |x: &[f64]| sq(x[0] - 1.0) + 10.0 * sq(x[1] + 2.0);
        let m = nelder_mead(f, &[0.0, 0.0], &NelderMeadOptions::default()).unwrap();
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-7);
        assert!((m.x[1] + 2.0).abs() < 1e-7);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| 100.0 * sq(x[1] - x[0] * x[0]) + sq(1.0 - x[0]);
        let opts = NelderMeadOptions {
            max_iter: 5000,
            ..Default::default()
        };
        let m = nelder_mead(f, &[-1.2, 1.0], &opts).unwrap();
        assert!((m.x[0] - 1.0).abs() < 1e-6);
        assert!((m.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn reports_nonconvergence() {
        let opts = NelderMeadOptions {
            max_iter: 3,
            ..Default::default()
        };
        let err = nelder_mead(|x: &[f64]| x[0] * x[0], &[5.0], &opts).unwrap_err();
        match err {
            Error::NonConvergence { best_theta, .. } => assert!(best_theta[0].abs() < 5.0),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn nan_is_treated_as_infinite() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { sq(x[0] - 0.5) };
        let m = nelder_mead(f, &[0.05], &NelderMeadOptions::default()).unwrap();
        assert!((m.x[0] - 0.5).abs() < 1e-7);
    }
}
