//! Standard errors and confidence intervals from the observed Fisher
//! information (the Hessian of the negative log-likelihood at the optimum).

use nalgebra::DMatrix;

use crate::optim::fd_hessian;

use super::fit::{Problem, Transform};

/// Uncertainty summary for one parameter, on the natural scale.
#[derive(Debug, Clone)]
pub struct CiEntry {
    pub name: String,
    pub estimate: f64,
    pub se: Option<f64>,
    pub ci95: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct FisherInfo {
    pub entries: Vec<CiEntry>,
    /// True when the Hessian was not positive definite and the covariance
    /// could not be formed.
    pub singular: bool,
}

/// Invert a finite-difference Hessian of `f` at `x`. Returns the covariance
/// matrix (the inverse) when the Hessian is positive definite, `None`
/// otherwise. `step` is the relative finite-difference step.
pub fn fisher_from_objective<F>(f: &mut F, x: &[f64], step: f64) -> Option<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    let h = fd_hessian(f, x, step);
    let mut mat = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = h[i][j];
            if !v.is_finite() {
                return None;
            }
            mat[(i, j)] = v;
        }
    }
    // symmetrise before factorising; FD cross terms are only symmetric to
    // truncation error
    let sym = (&mat + mat.transpose()) * 0.5;
    let chol = sym.cholesky()?;
    Some(chol.inverse())
}

/// Standard errors and 95% Wald intervals at a transformed-scale optimum.
///
/// The Hessian is taken on the transformed scale where the objective is
/// better conditioned; log-parameter intervals are formed there and
/// exponentiated, so they are asymmetric and respect positivity. The
/// delta method gives the natural-scale se as `estimate * se_transformed`
/// for log parameters.
pub fn observed_fisher_ci(problem: &Problem<'_>, t_opt: &[f64]) -> FisherInfo {
    const Z95: f64 = 1.959963984540054;
    let mut f = |t: &[f64]| problem.objective(t);
    let cov = fisher_from_objective(&mut f, t_opt, 1e-4);
    let natural = problem.to_natural(t_opt);
    let singular = cov.is_none();
    let entries = problem
        .params()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let estimate = natural[i];
            let var_t = cov.as_ref().map(|c| c[(i, i)]);
            let (se, ci95) = match var_t {
                Some(v) if v > 0.0 && v.is_finite() => {
                    let se_t = v.sqrt();
                    match p.transform {
                        Transform::Log => (
                            Some(estimate * se_t),
                            Some((
                                (t_opt[i] - Z95 * se_t).exp(),
                                (t_opt[i] + Z95 * se_t).exp(),
                            )),
                        ),
                        Transform::Identity => (
                            Some(se_t),
                            Some((t_opt[i] - Z95 * se_t, t_opt[i] + Z95 * se_t)),
                        ),
                    }
                }
                _ => (None, None),
            };
            CiEntry {
                name: p.name.clone(),
                estimate,
                se,
                ci95,
            }
        })
        .collect();
    FisherInfo { entries, singular }
}
