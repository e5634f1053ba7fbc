//! Derivative-free minimisation: Nelder-Mead simplex search with an optional
//! BFGS refinement driven by central finite-difference gradients. Everything
//! operates on an unconstrained (transformed) parameter scale; the caller
//! owns the transform.

/// Options for [`nelder_mead`].
#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    pub max_evaluations: usize,
    /// Convergence: absolute spread of objective values over the simplex.
    pub f_tolerance: f64,
    /// Convergence: max coordinate spread of the simplex.
    pub x_tolerance: f64,
    /// Initial simplex step per coordinate, relative to 1 + |x0_i|.
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 50_000,
            f_tolerance: 1e-8,
            x_tolerance: 1e-7,
            initial_step: 0.1,
        }
    }
}

/// Result of a minimisation run.
#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimise `f` from `x0` with the Nelder-Mead simplex method
/// (reflection 1, expansion 2, contraction 0.5, shrink 0.5).
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> OptimResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += opts.initial_step * (1.0 + p[i].abs());
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex
        .iter()
        .map(|p| eval(p, &mut evaluations))
        .collect();

    let mut iterations = 0usize;
    let mut converged = false;
    while evaluations < opts.max_evaluations {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let f_spread = values[worst] - values[best];
        let x_spread = (0..n)
            .map(|d| {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for p in &simplex {
                    lo = lo.min(p[d]);
                    hi = hi.max(p[d]);
                }
                hi - lo
            })
            .fold(0.0f64, f64::max);
        if f_spread.abs() < opts.f_tolerance && x_spread < opts.x_tolerance {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for &idx in order.iter().take(n) {
            for d in 0..n {
                centroid[d] += simplex[idx][d];
            }
        }
        for c in centroid.iter_mut() {
            *c /= n as f64;
        }

        let reflect: Vec<f64> = (0..n)
            .map(|d| centroid[d] + (centroid[d] - simplex[worst][d]))
            .collect();
        let f_reflect = eval(&reflect, &mut evaluations);

        if f_reflect < values[best] {
            let expand: Vec<f64> = (0..n)
                .map(|d| centroid[d] + 2.0 * (centroid[d] - simplex[worst][d]))
                .collect();
            let f_expand = eval(&expand, &mut evaluations);
            if f_expand < f_reflect {
                simplex[worst] = expand;
                values[worst] = f_expand;
            } else {
                simplex[worst] = reflect;
                values[worst] = f_reflect;
            }
            continue;
        }
        if f_reflect < values[second_worst] {
            simplex[worst] = reflect;
            values[worst] = f_reflect;
            continue;
        }

        // contraction, outside if the reflection improved on the worst
        let worst_point = simplex[worst].clone();
        let (anchor, f_anchor) = if f_reflect < values[worst] {
            (&reflect, f_reflect)
        } else {
            (&worst_point, values[worst])
        };
        let contract: Vec<f64> = (0..n)
            .map(|d| centroid[d] + 0.5 * (anchor[d] - centroid[d]))
            .collect();
        let f_contract = eval(&contract, &mut evaluations);
        if f_contract < f_anchor {
            simplex[worst] = contract;
            values[worst] = f_contract;
            continue;
        }

        // shrink toward the best vertex
        let best_point = simplex[best].clone();
        for idx in 0..=n {
            if idx == best {
                continue;
            }
            for d in 0..n {
                simplex[idx][d] = best_point[d] + 0.5 * (simplex[idx][d] - best_point[d]);
            }
            values[idx] = eval(&simplex[idx].clone(), &mut evaluations);
        }
    }

    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    OptimResult {
        x: simplex[best].clone(),
        fx: values[best],
        iterations,
        evaluations,
        converged,
    }
}

/// Central finite-difference gradient with step h_i = scale (1 + |x_i|).
pub fn fd_gradient<F>(f: &mut F, x: &[f64], scale: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; x.len()];
    let mut p = x.to_vec();
    for i in 0..x.len() {
        let h = scale * (1.0 + x[i].abs());
        p[i] = x[i] + h;
        let up = f(&p);
        p[i] = x[i] - h;
        let down = f(&p);
        p[i] = x[i];
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Central finite-difference Hessian with step h_i = scale (1 + |x_i|).
pub fn fd_hessian<F>(f: &mut F, x: &[f64], scale: f64) -> Vec<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    let steps: Vec<f64> = x.iter().map(|&xi| scale * (1.0 + xi.abs())).collect();
    let f0 = f(x);
    let mut h = vec![vec![0.0; n]; n];
    let mut p = x.to_vec();
    for i in 0..n {
        p[i] = x[i] + steps[i];
        let up = f(&p);
        p[i] = x[i] - steps[i];
        let down = f(&p);
        p[i] = x[i];
        h[i][i] = (up - 2.0 * f0 + down) / (steps[i] * steps[i]);
    }
    for i in 0..n {
        for j in i + 1..n {
            p[i] = x[i] + steps[i];
            p[j] = x[j] + steps[j];
            let pp = f(&p);
            p[j] = x[j] - steps[j];
            let pm = f(&p);
            p[i] = x[i] - steps[i];
            let mm = f(&p);
            p[j] = x[j] + steps[j];
            let mp = f(&p);
            p[i] = x[i];
            p[j] = x[j];
            let v = (pp - pm - mp + mm) / (4.0 * steps[i] * steps[j]);
            h[i][j] = v;
            h[j][i] = v;
        }
    }
    h
}

/// Options for [`bfgs_refine`].
#[derive(Debug, Clone)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub gradient_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tolerance: 1e-5,
            gradient_step: 1e-6,
        }
    }
}

/// Quasi-Newton polish of a near-optimal point using finite-difference
/// gradients and a backtracking Armijo line search. Returns the best point
/// seen; never moves uphill.
pub fn bfgs_refine<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> OptimResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut x = x0.to_vec();
    let mut fx = eval(&x, &mut evaluations);
    // inverse Hessian approximation, started at identity
    let mut h_inv: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut grad = {
        let mut g = |p: &[f64]| eval(p, &mut evaluations);
        fd_gradient(&mut g, &x, opts.gradient_step)
    };

    let mut iterations = 0usize;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        let g_norm = grad.iter().fold(0.0f64, |a, &g| a.max(g.abs()));
        if g_norm < opts.gradient_tolerance {
            converged = true;
            break;
        }

        let mut direction = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                direction[i] -= h_inv[i][j] * grad[j];
            }
        }
        let descent: f64 = direction.iter().zip(&grad).map(|(d, g)| d * g).sum();
        if descent >= 0.0 {
            // not a descent direction; reset curvature information
            for i in 0..n {
                for j in 0..n {
                    h_inv[i][j] = if i == j { 1.0 } else { 0.0 };
                }
                direction[i] = -grad[i];
            }
        }

        let mut step = 1.0;
        let mut accepted = false;
        let mut x_new = x.clone();
        let mut f_new = fx;
        for _ in 0..40 {
            for i in 0..n {
                x_new[i] = x[i] + step * direction[i];
            }
            f_new = eval(&x_new, &mut evaluations);
            let dir_grad: f64 = direction.iter().zip(&grad).map(|(d, g)| d * g).sum();
            if f_new <= fx + 1e-4 * step * dir_grad {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }

        let grad_new = {
            let mut g = |p: &[f64]| eval(p, &mut evaluations);
            fd_gradient(&mut g, &x_new, opts.gradient_step)
        };
        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| grad_new[i] - grad[i]).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 {
            // standard BFGS inverse update
            let rho = 1.0 / sy;
            let mut hy = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    hy[i] += h_inv[i][j] * y[j];
                }
            }
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h_inv[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j]
                        - rho * (s[i] * hy[j] + hy[i] * s[j]);
                }
            }
        }
        x = x_new.clone();
        fx = f_new;
        grad = grad_new;
    }

    OptimResult {
        x,
        fx,
        iterations,
        evaluations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rosenbrock(x: &[f64]) -> f64 {
        let (a, b) = (1.0, 100.0);
        (a - x[0]).powi(2) + b * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn nelder_mead_minimises_quadratic() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + 5.0;
        let r = nelder_mead(f, &[0.0, 0.0], &NelderMeadOptions::default());
        assert!(r.converged);
        assert_relative_eq!(r.x[0], 3.0, epsilon = 1e-4);
        assert_relative_eq!(r.x[1], -1.0, epsilon = 1e-4);
        assert_relative_eq!(r.fx, 5.0, epsilon = 1e-7);
    }

    #[test]
    fn nelder_mead_handles_rosenbrock() {
        let r = nelder_mead(rosenbrock, &[-1.2, 1.0], &NelderMeadOptions::default());
        assert!(r.fx < 1e-6, "fx = {}", r.fx);
        assert!((r.x[0] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn nelder_mead_survives_nan_regions() {
        let f = |x: &[f64]| {
            if x[0] < -5.0 {
                f64::NAN
            } else {
                (x[0] - 1.0).powi(2)
            }
        };
        let r = nelder_mead(f, &[-4.0], &NelderMeadOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn nelder_mead_respects_budget() {
        let r = nelder_mead(
            rosenbrock,
            &[-1.2, 1.0],
            &NelderMeadOptions {
                max_evaluations: 25,
                ..Default::default()
            },
        );
        assert!(!r.converged);
        assert!(r.evaluations <= 30);
    }

    #[test]
    fn fd_gradient_matches_analytic() {
        let mut f = |x: &[f64]| x[0] * x[0] + 3.0 * x[0] * x[1];
        let g = fd_gradient(&mut f, &[2.0, -1.0], 1e-6);
        assert_relative_eq!(g[0], 1.0, epsilon = 1e-6);
        assert_relative_eq!(g[1], 6.0, epsilon = 1e-6);
    }

    #[test]
    fn fd_hessian_matches_analytic() {
        let mut f = |x: &[f64]| 2.0 * x[0] * x[0] + 3.0 * x[0] * x[1] + 0.5 * x[1] * x[1];
        let h = fd_hessian(&mut f, &[0.3, -0.7], 1e-4);
        assert_relative_eq!(h[0][0], 4.0, epsilon = 1e-5);
        assert_relative_eq!(h[0][1], 3.0, epsilon = 1e-5);
        assert_relative_eq!(h[1][0], 3.0, epsilon = 1e-5);
        assert_relative_eq!(h[1][1], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn bfgs_polishes_rosenbrock() {
        let coarse = nelder_mead(
            rosenbrock,
            &[-1.2, 1.0],
            &NelderMeadOptions {
                max_evaluations: 200,
                ..Default::default()
            },
        );
        let refined = bfgs_refine(rosenbrock, &coarse.x, &BfgsOptions::default());
        assert!(refined.fx <= coarse.fx);
        assert!(refined.fx < 1e-8, "fx = {}", refined.fx);
    }
}
