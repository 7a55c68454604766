//! Limited-memory quasi-Newton minimizer (two-loop recursion) with a
//! backtracking Armijo line search. Tailored to smooth convex objectives like
//! the dual: no box constraints, no restarts, curvature pairs with
//! non-positive `y·s` are skipped.

use crate::scalar::{s, Scalar};

pub struct LbfgsOptions<S> {
    /// Number of stored curvature pairs.
    pub memory: usize,
    /// Convergence threshold on the gradient max-abs norm.
    pub grad_tol: S,
    pub max_iters: usize,
    /// Abort when the iterate's Euclidean norm exceeds this bound.
    pub divergence_norm: S,
}

impl<S: Scalar> Default for LbfgsOptions<S> {
    fn default() -> Self {
        LbfgsOptions {
            memory: 10,
            grad_tol: s(1e-6),
            max_iters: 500,
            divergence_norm: s(1e3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsStatus {
    Converged,
    MaxIterations,
    /// Iterate norm exceeded the divergence bound.
    Diverged,
    /// Line search could not find a decrease (objective flat or non-finite).
    LineSearchFailed,
}

pub struct LbfgsOutcome<S> {
    pub x: Vec<S>,
    pub objective: S,
    pub gradient: Vec<S>,
    pub iterations: usize,
    pub status: LbfgsStatus,
}

/// Step record handed to the caller once per accepted iterate.
pub struct IterationInfo<'a, S> {
    pub iteration: usize,
    pub objective: S,
    pub grad_inf_norm: S,
    pub x: &'a [S],
    pub gradient: &'a [S],
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn inf_norm<S: Scalar>(v: &[S]) -> S {
    v.iter()
        .fold(S::zero(), |acc, &x| if x.abs() > acc { x.abs() } else { acc })
}

fn norm<S: Scalar>(v: &[S]) -> S {
    dot(v, v).sqrt()
}

/// Minimize `f` starting from `x0`. `f` must return the objective value and
/// fill the gradient slice. `on_iter`, when provided, observes each accepted
/// iterate.
pub fn minimize<S: Scalar>(
    x0: Vec<S>,
    opts: &LbfgsOptions<S>,
    mut f: impl FnMut(&[S], &mut [S]) -> S,
    mut on_iter: impl FnMut(IterationInfo<'_, S>),
) -> LbfgsOutcome<S> {
    let n = x0.len();
    let mut x = x0;
    let mut grad = vec![S::zero(); n];
    let mut value = f(&x, &mut grad);

    let mut s_hist: Vec<Vec<S>> = Vec::new();
    let mut y_hist: Vec<Vec<S>> = Vec::new();
    let mut rho_hist: Vec<S> = Vec::new();

    let c1: S = s(1e-4);
    let shrink: S = s(0.5);
    let max_backtracks = 50;

    let mut status = LbfgsStatus::MaxIterations;
    let mut iterations = 0;

    for iter in 0..opts.max_iters {
        iterations = iter;
        let gnorm = inf_norm(&grad);
        on_iter(IterationInfo {
            iteration: iter,
            objective: value,
            grad_inf_norm: gnorm,
            x: &x,
            gradient: &grad,
        });
        if gnorm <= opts.grad_tol {
            status = LbfgsStatus::Converged;
            break;
        }
        if norm(&x) > opts.divergence_norm || !value.is_finite() {
            status = LbfgsStatus::Diverged;
            break;
        }

        // two-loop recursion: direction = -H grad
        let mut q = grad.clone();
        let hist = s_hist.len();
        let mut alpha = vec![S::zero(); hist];
        for i in (0..hist).rev() {
            alpha[i] = rho_hist[i] * dot(&s_hist[i], &q);
            for (qv, yv) in q.iter_mut().zip(&y_hist[i]) {
                *qv -= alpha[i] * *yv;
            }
        }
        if hist > 0 {
            let last = hist - 1;
            let gamma = dot(&s_hist[last], &y_hist[last]) / dot(&y_hist[last], &y_hist[last]);
            for qv in q.iter_mut() {
                *qv *= gamma;
            }
        }
        for i in 0..hist {
            let beta = rho_hist[i] * dot(&y_hist[i], &q);
            for (qv, sv) in q.iter_mut().zip(&s_hist[i]) {
                *qv += (alpha[i] - beta) * *sv;
            }
        }
        let direction: Vec<S> = q.iter().map(|&v| -v).collect();

        let mut slope = dot(&grad, &direction);
        let descending = slope < S::zero();
        let dir = if descending {
            direction
        } else {
            // fall back to steepest descent if the model direction is bad
            slope = -dot(&grad, &grad);
            grad.iter().map(|&g| -g).collect()
        };

        // backtracking Armijo search
        let mut step = S::one();
        let mut accepted = false;
        let mut new_x = x.clone();
        let mut new_grad = vec![S::zero(); n];
        let mut new_value = value;
        for _ in 0..max_backtracks {
            for ((nx, &xv), &dv) in new_x.iter_mut().zip(&x).zip(&dir) {
                *nx = xv + step * dv;
            }
            new_value = f(&new_x, &mut new_grad);
            if new_value.is_finite() && new_value <= value + c1 * step * slope {
                accepted = true;
                break;
            }
            step *= shrink;
        }
        if !accepted {
            status = LbfgsStatus::LineSearchFailed;
            break;
        }

        let s_vec: Vec<S> = new_x.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y_vec: Vec<S> = new_grad.iter().zip(&grad).map(|(&a, &b)| a - b).collect();
        let ys = dot(&y_vec, &s_vec);
        if ys > s(1e-12) {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            rho_hist.push(S::one() / ys);
            s_hist.push(s_vec);
            y_hist.push(y_vec);
        }

        x = new_x;
        grad = new_grad;
        value = new_value;
        iterations = iter + 1;
    }

    if status == LbfgsStatus::MaxIterations && inf_norm(&grad) <= opts.grad_tol {
        status = LbfgsStatus::Converged;
    }

    LbfgsOutcome {
        x,
        objective: value,
        gradient: grad,
        iterations,
        status,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_convex_quadratic() {
        // f(x) = Σ c_i (x_i - t_i)^2, minimum at t
        let c = [1.0f64, 4.0, 0.5, 9.0];
        let t = [2.0f64, -1.0, 0.3, 5.0];
        let out = minimize(
            vec![0.0; 4],
            &LbfgsOptions::default(),
            |x, g| {
                let mut v = 0.0;
                for i in 0..4 {
                    let d = x[i] - t[i];
                    v += c[i] * d * d;
                    g[i] = 2.0 * c[i] * d;
                }
                v
            },
            |_| {},
        );
        assert_eq!(out.status, LbfgsStatus::Converged);
        for i in 0..4 {
            assert!((out.x[i] - t[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn minimizes_rosenbrock_like_smooth_function() {
        // log-sum-exp of linear forms: smooth strictly convex
        let out = minimize(
            vec![0.0f64, 0.0],
            &LbfgsOptions {
                grad_tol: 1e-10,
                ..Default::default()
            },
            |x, g| {
                let terms = [(1.0, 0.0, -1.0), (0.0, 1.0, -1.0), (-1.0, -1.0, 0.0)];
                let exps: Vec<f64> = terms
                    .iter()
                    .map(|&(a, b, c)| (a * x[0] + b * x[1] + c).exp())
                    .collect();
                let z: f64 = exps.iter().sum();
                g[0] = terms.iter().zip(&exps).map(|(&(a, _, _), e)| a * e).sum::<f64>() / z;
                g[1] = terms.iter().zip(&exps).map(|(&(_, b, _), e)| b * e).sum::<f64>() / z;
                z.ln()
            },
            |_| {},
        );
        assert_eq!(out.status, LbfgsStatus::Converged);
        assert!(out.gradient.iter().all(|g| g.abs() <= 1e-10));
    }

    #[test]
    fn reports_divergence_on_unbounded_objective() {
        // f(x) = -x: gradient never vanishes, iterates run away
        let out = minimize(
            vec![0.0f64],
            &LbfgsOptions {
                divergence_norm: 50.0,
                max_iters: 10_000,
                ..Default::default()
            },
            |x, g| {
                g[0] = -1.0;
                -x[0]
            },
            |_| {},
        );
        assert_eq!(out.status, LbfgsStatus::Diverged);
    }
}
