//! Limited-memory quasi-Newton minimizer with Armijo backtracking, shared
//! by the 3d plate and 2d limit functionals.
//!
//! The loop is strictly sequential and every inner product is a fixed-order
//! fold, so runs are bit-reproducible for identical inputs.

use crate::scalar::{real, Real};

/// Objective with an exact gradient.
pub trait Objective<T: Real>: Sync {
    fn eval(&self, x: &[T]) -> T;
    /// Writes the gradient into `grad` and returns the value.
    fn eval_grad(&self, x: &[T], grad: &mut [T]) -> T;
}

#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions<T> {
    /// Base gradient tolerance; the loop stops when the gradient sup norm
    /// drops below `tol · (1 + |E|)`.
    pub tol: T,
    pub max_iters: usize,
    /// Number of curvature pairs kept by the two-loop recursion.
    pub memory: usize,
    pub armijo_c: T,
    pub backtrack: T,
    pub max_backtracks: usize,
}

impl<T: Real> Default for MinimizeOptions<T> {
    fn default() -> Self {
        Self {
            tol: real(1e-8),
            max_iters: 5000,
            memory: 10,
            armijo_c: real(1e-4),
            backtrack: real(0.5),
            max_backtracks: 60,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MinimizeOutcome<T> {
    pub energy: T,
    pub grad_sup_norm: T,
    pub iterations: usize,
    pub converged: bool,
    pub line_search_failed: bool,
    pub wall_time: f64,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn sup_norm<T: Real>(a: &[T]) -> T {
    let mut m = T::zero();
    for &x in a {
        m = m.max(x.abs());
    }
    m
}

/// Minimizes `obj` from `x0`. Returns the best iterate seen; on line-search
/// failure the outcome carries `converged = false` and the best iterate is
/// still returned.
pub fn minimize<T: Real, O: Objective<T>>(
    obj: &O,
    x0: Vec<T>,
    opts: &MinimizeOptions<T>,
) -> (Vec<T>, MinimizeOutcome<T>) {
    let start = std::time::Instant::now();
    let n = x0.len();
    let mut x = x0;
    let mut grad = vec![T::zero(); n];
    let mut energy = obj.eval_grad(&x, &mut grad);

    let mut best_x = x.clone();
    let mut best_energy = energy;

    // (s, y, 1/yᵀs) ring buffer, most recent last.
    let mut pairs: Vec<(Vec<T>, Vec<T>, T)> = Vec::with_capacity(opts.memory);
    let line_search_failed = false;
    let mut iterations = 0;

    let finish = |x: Vec<T>,
                  energy: T,
                  gsup: T,
                  iterations: usize,
                  converged: bool,
                  line_search_failed: bool| {
        let outcome = MinimizeOutcome {
            energy,
            grad_sup_norm: gsup,
            iterations,
            converged,
            line_search_failed,
            wall_time: start.elapsed().as_secs_f64(),
        };
        (x, outcome)
    };

    loop {
        let gsup = sup_norm(&grad);
        if gsup <= opts.tol * (T::one() + energy.abs()) {
            return finish(x, energy, gsup, iterations, true, false);
        }
        if iterations >= opts.max_iters {
            return finish(best_x, best_energy, gsup, iterations, false, line_search_failed);
        }

        // Two-loop recursion for the search direction.
        let mut d: Vec<T> = grad.iter().map(|&g| -g).collect();
        let m = pairs.len();
        let mut alphas = vec![T::zero(); m];
        for idx in (0..m).rev() {
            let (s, y, rho) = &pairs[idx];
            let a = *rho * dot(s, &d);
            alphas[idx] = a;
            for i in 0..n {
                d[i] -= y[i] * a;
            }
        }
        if let Some((s, y, _)) = pairs.last() {
            let yy = dot(y, y);
            if yy > T::zero() {
                let gamma = dot(s, y) / yy;
                for v in d.iter_mut() {
                    *v *= gamma;
                }
            }
        }
        for idx in 0..m {
            let (s, y, rho) = &pairs[idx];
            let beta = *rho * dot(y, &d);
            let a = alphas[idx];
            for i in 0..n {
                d[i] += s[i] * (a - beta);
            }
        }

        // Fall back to steepest descent when the direction is not a descent
        // direction (possible far from the basin).
        let mut slope = dot(&grad, &d);
        if slope >= T::zero() {
            for i in 0..n {
                d[i] = -grad[i];
            }
            slope = dot(&grad, &d);
            pairs.clear();
        }

        // Armijo backtracking.
        let mut alpha = T::one();
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let trial: Vec<T> = (0..n).map(|i| x[i] + d[i] * alpha).collect();
            let e_trial = obj.eval(&trial);
            if e_trial <= energy + opts.armijo_c * alpha * slope {
                accepted = Some((trial, e_trial));
                break;
            }
            alpha *= opts.backtrack;
        }
        let (x_new, e_new) = match accepted {
            Some(v) => v,
            None => {
                let gsup = sup_norm(&grad);
                return finish(best_x, best_energy, gsup, iterations, false, true);
            }
        };

        let mut grad_new = vec![T::zero(); n];
        let e_new = {
            let e = obj.eval_grad(&x_new, &mut grad_new);
            // eval and eval_grad are required to agree; keep the gradient call's value.
            debug_assert!((e - e_new).abs() <= real::<T>(1e-12) * (T::one() + e.abs()));
            e
        };

        let s: Vec<T> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<T> = (0..n).map(|i| grad_new[i] - grad[i]).collect();
        let sy = dot(&s, &y);
        let s_norm = dot(&s, &s).sqrt();
        let y_norm = dot(&y, &y).sqrt();
        if sy > real::<T>(1e-12) * s_norm * y_norm {
            if pairs.len() == opts.memory {
                pairs.remove(0);
            }
            pairs.push((s, y, T::one() / sy));
        }

        x = x_new;
        grad = grad_new;
        energy = e_new;
        if energy < best_energy {
            best_energy = energy;
            best_x.clone_from(&x);
        }
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        center: Vec<f64>,
        scales: Vec<f64>,
    }

    impl Objective<f64> for Quadratic {
        fn eval(&self, x: &[f64]) -> f64 {
            x.iter()
                .zip(&self.center)
                .zip(&self.scales)
                .map(|((xi, ci), si)| si * (xi - ci) * (xi - ci))
                .sum()
        }
        fn eval_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            for i in 0..x.len() {
                grad[i] = 2.0 * self.scales[i] * (x[i] - self.center[i]);
            }
            self.eval(x)
        }
    }

    struct Rosenbrock;

    impl Objective<f64> for Rosenbrock {
        fn eval(&self, x: &[f64]) -> f64 {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        }
        fn eval_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
            grad[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            grad[1] = 200.0 * (x[1] - x[0] * x[0]);
            self.eval(x)
        }
    }

    #[test]
    fn quadratic_bowl_converges_quickly() {
        let problem = Quadratic {
            center: vec![1.0, -2.0, 0.5, 3.0],
            scales: vec![1.0, 10.0, 0.1, 5.0],
        };
        let opts = MinimizeOptions {
            tol: 1e-10,
            ..Default::default()
        };
        let (x, outcome) = minimize(&problem, vec![0.0; 4], &opts);
        assert!(outcome.converged);
        assert!(outcome.energy <= 1e-16, "energy {}", outcome.energy);
        assert!(outcome.iterations <= 60);
        for (xi, ci) in x.iter().zip(&problem.center) {
            assert!((xi - ci).abs() <= 1e-7);
        }
    }

    #[test]
    fn already_optimal_input_converges_immediately() {
        let problem = Quadratic {
            center: vec![2.0, 2.0],
            scales: vec![1.0, 1.0],
        };
        let (_, outcome) = minimize(&problem, vec![2.0, 2.0], &MinimizeOptions::default());
        assert!(outcome.converged);
        assert_eq!(outcome.iterations, 0);
        assert_eq!(outcome.energy, 0.0);
    }

    #[test]
    fn rosenbrock_reaches_the_minimum() {
        // Armijo-only backtracking crawls through the Rosenbrock valley;
        // convergence is what matters here.
        let opts = MinimizeOptions {
            tol: 1e-10,
            max_iters: 2000,
            ..Default::default()
        };
        let (x, outcome) = minimize(&Rosenbrock, vec![-1.2, 1.0], &opts);
        assert!(outcome.converged, "outcome {outcome:?}");
        assert!((x[0] - 1.0).abs() <= 1e-6 && (x[1] - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn reruns_are_bit_identical() {
        let problem = Quadratic {
            center: vec![0.3; 8],
            scales: (1..=8).map(|i| i as f64).collect(),
        };
        let run = || minimize(&problem, vec![1.0; 8], &MinimizeOptions::default());
        let (xa, oa) = run();
        let (xb, ob) = run();
        assert_eq!(oa.iterations, ob.iterations);
        assert_eq!(oa.energy.to_bits(), ob.energy.to_bits());
        for (a, b) in xa.iter().zip(&xb) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
