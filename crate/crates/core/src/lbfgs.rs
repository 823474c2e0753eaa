//! Limited-memory BFGS with a backtracking (Armijo) line search.
//!
//! Shared by the configuration minimizer, the polyline distance relaxation and
//! the quasiconvex-envelope estimator. Accepted iterates never increase the
//! objective.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    /// Stop when the Euclidean norm of the gradient drops below this value.
    pub grad_tol: f64,
    /// Stop when an accepted step decreases the objective by less than
    /// `rel_tol * |f|`. Zero disables the test.
    pub rel_tol: f64,
    pub history: usize,
    /// Sufficient-decrease constant of the Armijo condition.
    pub c1: f64,
    /// Step contraction factor while backtracking.
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Stop as `Stalled` after this many accepted steps that together lower
    /// the objective by no more than `stall_rtol * |f|`. Zero disables the test.
    pub stall_window: usize,
    pub stall_rtol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            max_iters: 10_000,
            grad_tol: 1e-8,
            rel_tol: 0.0,
            history: 10,
            c1: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            stall_window: 20,
            stall_rtol: 1e-14,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    RelativeDecrease,
    MaxIterations,
    /// No decrease above rounding level over the stall window.
    Stalled,
    LineSearchFailed,
    NonFiniteStart,
}

impl Termination {
    /// Whether the run ended at a point satisfying a convergence test.
    /// A stall counts: the objective cannot be lowered at working precision.
    pub fn converged(self) -> bool {
        matches!(self, Termination::GradientTolerance | Termination::RelativeDecrease | Termination::Stalled)
    }
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimizes `objective`, which writes the gradient into its second argument
/// and returns the value. Non-finite values are treated as infeasible and
/// rejected by the line search.
pub fn minimize<F>(mut objective: F, x0: Vec<f64>, opts: &LbfgsOptions) -> LbfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = objective(&x, &mut g);
    let mut evaluations = 1;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return LbfgsResult {
            x,
            f,
            grad_norm: f64::NAN,
            iterations: 0,
            evaluations,
            termination: Termination::NonFiniteStart,
        };
    }

    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.history);
    let mut d = vec![0.0; n];
    let mut alpha = vec![0.0; opts.history.max(1)];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut iterations = 0;
    let mut stall_ref = f;
    let mut stall_count = 0;

    let termination = loop {
        let gnorm = norm(&g);
        if gnorm <= opts.grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iters {
            break Termination::MaxIterations;
        }

        // two-loop recursion: d = -H g
        d.copy_from_slice(&g);
        for (k, (s, y, rho)) in hist.iter().enumerate().rev() {
            let a = rho * dot(s, &d);
            alpha[k] = a;
            for (di, yi) in d.iter_mut().zip(y) {
                *di -= a * yi;
            }
        }
        let gamma = match hist.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / gnorm.max(1.0),
        };
        for di in d.iter_mut() {
            *di *= gamma;
        }
        for (k, (s, y, rho)) in hist.iter().enumerate() {
            let b = rho * dot(y, &d);
            for (di, si) in d.iter_mut().zip(s) {
                *di += (alpha[k] - b) * si;
            }
        }
        for di in d.iter_mut() {
            *di = -*di;
        }
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            // not a descent direction; restart from steepest descent
            hist.clear();
            for (di, gi) in d.iter_mut().zip(&g) {
                *di = -gi / gnorm.max(1.0);
            }
            slope = dot(&g, &d);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            let f_trial = objective(&x_new, &mut g_new);
            evaluations += 1;
            if f_trial.is_finite()
                && g_new.iter().all(|v| v.is_finite())
                && f_trial <= f + opts.c1 * step * slope
            {
                accepted = Some(f_trial);
                break;
            }
            step *= opts.backtrack;
        }
        let Some(f_trial) = accepted else {
            if hist.is_empty() {
                break Termination::LineSearchFailed;
            }
            hist.clear();
            continue;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if hist.len() == opts.history {
                hist.pop_front();
            }
            if opts.history > 0 {
                hist.push_back((s, y, 1.0 / sy));
            }
        }

        let decrease = f - f_trial;
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_trial;
        iterations += 1;
        if opts.rel_tol > 0.0 && decrease <= opts.rel_tol * f.abs() {
            break Termination::RelativeDecrease;
        }
        if opts.stall_window > 0 {
            if stall_ref - f > opts.stall_rtol * f.abs() {
                stall_ref = f;
                stall_count = 0;
            } else {
                stall_count += 1;
                if stall_count >= opts.stall_window {
                    break Termination::Stalled;
                }
            }
        }
    };

    LbfgsResult {
        grad_norm: norm(&g),
        x,
        f,
        iterations,
        evaluations,
        termination,
    }
}
