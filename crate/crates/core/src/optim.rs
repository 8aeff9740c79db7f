//! Small dense quasi-Newton minimizer.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop when `|Δf| ≤ rel_tolerance · |f|`.
    pub rel_tolerance: f64,
    /// Stop when `‖Δx‖ ≤ step_tolerance · (1 + ‖x‖)`.
    pub step_tolerance: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            rel_tolerance: 1e-12,
            step_tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

/// BFGS with a backtracking Armijo line search. Only decreasing steps are
/// accepted, so `history` is non-increasing.
///
/// `objective(x, grad)` returns `f(x)` and writes `∇f(x)` into `grad`.
/// A stopping test that fires right after a curvature update first resets the
/// inverse Hessian; the search ends only when a fresh steepest-descent step
/// also meets the test.
pub fn bfgs<F>(mut objective: F, x0: &[f64], opts: &BfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut g = DVector::zeros(n);
    let mut f = objective(x.as_slice(), g.as_mut_slice());
    let mut history = vec![f];
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut x_trial = DVector::zeros(n);
    let mut g_trial = DVector::zeros(n);

    for iter in 0..opts.max_iterations {
        if g.iter().all(|v| *v == 0.0) || f == 0.0 {
            return done(x, f, iter, true, history);
        }
        let mut dir = -(&h_inv * &g);
        let mut slope = g.dot(&dir);
        if slope >= 0.0 {
            h_inv.fill_with_identity();
            dir = -&g;
            slope = -g.norm_squared();
            fresh = true;
        }
        if fresh {
            // keep the first steepest-descent trial step on the scale of x
            let scale = (1.0 + x.norm()) / dir.norm();
            if scale < 1.0 {
                dir *= scale;
                slope *= scale;
            }
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            x_trial.copy_from(&x);
            x_trial.axpy(alpha, &dir, 1.0);
            let f_trial = objective(x_trial.as_slice(), g_trial.as_mut_slice());
            if f_trial.is_finite() && f_trial <= f + 1e-4 * alpha * slope {
                accepted = Some(f_trial);
                break;
            }
            alpha *= 0.5;
        }

        let Some(f_new) = accepted else {
            if fresh {
                return done(x, f, iter, true, history);
            }
            h_inv.fill_with_identity();
            fresh = true;
            continue;
        };

        let s = &x_trial - &x;
        let y = &g_trial - &g;
        let small_change = (f - f_new).abs() <= opts.rel_tolerance * f.abs();
        let small_step = s.norm() <= opts.step_tolerance * (1.0 + x.norm());

        x.copy_from(&x_trial);
        g.copy_from(&g_trial);
        f = f_new;
        history.push(f);

        if small_change || small_step {
            if fresh {
                return done(x, f, iter + 1, true, history);
            }
            h_inv.fill_with_identity();
            fresh = true;
            continue;
        }

        let sy = s.dot(&y);
        if sy > 1e-300 {
            if fresh {
                h_inv *= sy / y.norm_squared();
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H ← H − ρ(s·(Hy)ᵀ + (Hy)·sᵀ) + (ρ² yᵀHy + ρ) s·sᵀ
            h_inv.ger(-rho, &s, &hy, 1.0);
            h_inv.ger(-rho, &hy, &s, 1.0);
            h_inv.ger(rho * rho * yhy + rho, &s, &s, 1.0);
            fresh = false;
        }
    }
    let iterations = opts.max_iterations;
    done(x, f, iterations, false, history)
}

fn done(x: DVector<f64>, value: f64, iterations: usize, converged: bool, history: Vec<f64>) -> Minimum {
    Minimum {
        x: x.as_slice().to_vec(),
        value,
        iterations,
        converged,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64], g: &mut [f64]| {
            let (a, b) = (x[0], x[1]);
            g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
            g[1] = 200.0 * (b - a * a);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let m = bfgs(f, &[-1.2, 1.0], &BfgsOptions::default());
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
        assert!(m.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn quadratic_exact() {
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (x[0] - 3.0);
            g[1] = 20.0 * (x[1] + 1.0);
            (x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2)
        };
        let m = bfgs(f, &[0.0, 0.0], &BfgsOptions::default());
        assert!((m.x[0] - 3.0).abs() < 1e-8 && (m.x[1] + 1.0).abs() < 1e-8);
    }
}
