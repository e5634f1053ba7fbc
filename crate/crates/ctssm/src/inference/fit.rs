//! Numerical maximum approximate-likelihood fitting with parameter
//! transforms, multi-start Nelder-Mead and optional BFGS polish.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretization::{Grid, TransitionCache};
use crate::emissions::{negbin_marginal_logpmf, NegBinSplineEmission, PoissonScaleEmission};
use crate::error::{Error, Result};
use crate::optim::{bfgs_refine, nelder_mead, BfgsOptions, NelderMeadOptions};
use crate::splines::{SplineBasis, SplineCoefficients};
use crate::state_process::OuParams;

use super::data::{EmissionSpec, ModelSpec, PanelDataset};
use super::fisher::observed_fisher_ci;
use super::likelihood::panel_loglik;

/// Scale on which a parameter is optimised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// Positive parameter, optimised as its natural logarithm.
    Log,
    Identity,
}

impl Transform {
    pub fn to_natural(self, t: f64) -> f64 {
        match self {
            Transform::Log => t.exp(),
            Transform::Identity => t,
        }
    }

    pub fn to_transformed(self, natural: f64) -> f64 {
        match self {
            Transform::Log => natural.ln(),
            Transform::Identity => natural,
        }
    }
}

/// One free parameter: report name plus its optimisation transform.
#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub transform: Transform,
}

/// What to fit: the model family plus its fixed structure (grid, basis).
/// The OU long-term mean is fixed at zero throughout; any overall level is
/// carried by alpha or by the spline coefficients.
#[derive(Debug, Clone)]
pub enum FitTemplate {
    PoissonScale { grid: Grid },
    NegBinSpline { grid: Grid, basis: SplineBasis },
    /// The stateless benchmark: negative-binomial spline regression with
    /// the state term omitted.
    Benchmark { basis: SplineBasis },
}

impl FitTemplate {
    pub fn model_name(&self) -> &'static str {
        match self {
            FitTemplate::PoissonScale { .. } => "poisson-scale",
            FitTemplate::NegBinSpline { .. } => "negbin-spline",
            FitTemplate::Benchmark { .. } => "benchmark",
        }
    }

    pub fn grid(&self) -> Option<&Grid> {
        match self {
            FitTemplate::PoissonScale { grid } => Some(grid),
            FitTemplate::NegBinSpline { grid, .. } => Some(grid),
            FitTemplate::Benchmark { .. } => None,
        }
    }
}

/// Options controlling the optimisation run.
#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Number of starts; starts beyond the first jitter the transformed
    /// starting point. Panel fits default to 3 in the CLI.
    pub multi_start: usize,
    /// Nelder-Mead settings; `max_evaluations == 0` picks a
    /// dimension-dependent budget.
    pub nelder_mead: NelderMeadOptions,
    /// Polish the simplex optimum with finite-difference BFGS.
    pub refine: bool,
    /// Compute observed-Fisher standard errors and 95% CIs.
    pub compute_ci: bool,
    /// Seed for start jittering; recorded in the fit report.
    pub seed: Option<u64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            multi_start: 1,
            nelder_mead: NelderMeadOptions {
                max_evaluations: 0,
                f_tolerance: 1e-8,
                x_tolerance: 1e-6,
                initial_step: 0.1,
            },
            refine: true,
            compute_ci: false,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Convergence {
    pub status: String,
    pub iterations: usize,
    pub evaluations: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridInfo {
    pub b0: f64,
    pub bm: f64,
    pub m: usize,
}

impl GridInfo {
    pub fn from_grid(grid: &Grid) -> Self {
        Self {
            b0: grid.b0(),
            bm: grid.bm(),
            m: grid.m(),
        }
    }

    pub fn to_grid(self) -> Result<Grid> {
        crate::discretization::build_grid(self.b0, self.bm, self.m)
    }
}

/// Fit output: natural-scale estimates, uncertainty, fit quality and
/// convergence diagnostics. Serialises to the fit-report JSON schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub estimates: BTreeMap<String, f64>,
    pub se: BTreeMap<String, Option<f64>>,
    pub ci95: BTreeMap<String, Option<[f64; 2]>>,
    pub loglik: f64,
    pub aic: f64,
    pub convergence: Convergence,
    pub grid: Option<GridInfo>,
    pub seed: Option<u64>,
    /// Optimum on the transformed scale, in parameter order.
    #[serde(skip)]
    pub transformed_optimum: Vec<f64>,
    /// Non-schema diagnostics (near-singular Hessian, CI failures, grid
    /// coverage warnings).
    #[serde(skip)]
    pub diagnostics: Vec<String>,
}

impl FitResult {
    pub fn n_free_parameters(&self) -> usize {
        self.estimates.len()
    }

    pub fn converged(&self) -> bool {
        self.convergence.status == "converged"
    }

    /// Rebuild the fitted model for decoding or further evaluation.
    /// Benchmark fits have no state process and cannot be decoded.
    pub fn to_model_spec(&self) -> Result<ModelSpec> {
        let grid_info = self
            .grid
            .ok_or_else(|| Error::invalid("fit report has no grid (benchmark model?)"))?;
        let grid = grid_info.to_grid()?;
        let get = |name: &str| -> Result<f64> {
            self.estimates
                .get(name)
                .copied()
                .ok_or_else(|| Error::invalid(format!("fit report lacks parameter {name}")))
        };
        match self.model.as_str() {
            "poisson-scale" => {
                let process = OuParams::new(get("theta")?, 0.0, get("sigma")?)?;
                let emission =
                    EmissionSpec::PoissonScale(PoissonScaleEmission::new(get("alpha")?)?);
                Ok(ModelSpec::new(process, emission, grid))
            }
            "negbin-spline" => {
                let process = OuParams::new(get("theta")?, 0.0, get("sigma")?)?;
                let basis = SplineBasis::age_default();
                let mut omega1 = Vec::with_capacity(8);
                let mut omega2 = Vec::with_capacity(8);
                for l in 1..=basis.basis_count() {
                    omega1.push(get(&format!("omega1_{l}"))?);
                    omega2.push(get(&format!("omega2_{l}"))?);
                }
                let emission = EmissionSpec::NegBinSpline(NegBinSplineEmission::new(
                    get("phi")?,
                    SplineCoefficients::new(omega1, &basis)?,
                    SplineCoefficients::new(omega2, &basis)?,
                    basis,
                )?);
                Ok(ModelSpec::new(process, emission, grid))
            }
            other => Err(Error::invalid(format!(
                "model {other:?} has no state process to reconstruct"
            ))),
        }
    }
}

/// AIC = 2 k - 2 loglik with k the number of free parameters.
pub fn aic(fit: &FitResult) -> f64 {
    2.0 * fit.n_free_parameters() as f64 - 2.0 * fit.loglik
}

/// The objective a fit minimises: negative pooled log-likelihood as a
/// function of the transformed parameter vector.
pub struct Problem<'a> {
    template: &'a FitTemplate,
    data: &'a PanelDataset,
    params: Vec<ParamSpec>,
}

impl<'a> Problem<'a> {
    pub fn new(template: &'a FitTemplate, data: &'a PanelDataset) -> Result<Self> {
        match template {
            FitTemplate::NegBinSpline { .. } | FitTemplate::Benchmark { .. } => {
                if !data.has_covariates() {
                    return Err(Error::invalid(
                        "spline emission models require per-observation covariates",
                    ));
                }
            }
            FitTemplate::PoissonScale { .. } => {}
        }
        let params = match template {
            FitTemplate::PoissonScale { .. } => vec![
                ParamSpec {
                    name: "theta".into(),
                    transform: Transform::Log,
                },
                ParamSpec {
                    name: "sigma".into(),
                    transform: Transform::Log,
                },
                ParamSpec {
                    name: "alpha".into(),
                    transform: Transform::Log,
                },
            ],
            FitTemplate::NegBinSpline { basis, .. } => {
                let mut p = vec![
                    ParamSpec {
                        name: "theta".into(),
                        transform: Transform::Log,
                    },
                    ParamSpec {
                        name: "sigma".into(),
                        transform: Transform::Log,
                    },
                    ParamSpec {
                        name: "phi".into(),
                        transform: Transform::Log,
                    },
                ];
                for curve in ["omega1", "omega2"] {
                    for l in 1..=basis.basis_count() {
                        p.push(ParamSpec {
                            name: format!("{curve}_{l}"),
                            transform: Transform::Identity,
                        });
                    }
                }
                p
            }
            FitTemplate::Benchmark { basis } => {
                let mut p = vec![ParamSpec {
                    name: "phi".into(),
                    transform: Transform::Log,
                }];
                for curve in ["omega1", "omega2"] {
                    for l in 1..=basis.basis_count() {
                        p.push(ParamSpec {
                            name: format!("{curve}_{l}"),
                            transform: Transform::Identity,
                        });
                    }
                }
                p
            }
        };
        Ok(Self {
            template,
            data,
            params,
        })
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn dimension(&self) -> usize {
        self.params.len()
    }

    /// Natural-scale values in parameter order.
    pub fn to_natural(&self, transformed: &[f64]) -> Vec<f64> {
        self.params
            .iter()
            .zip(transformed)
            .map(|(p, &t)| p.transform.to_natural(t))
            .collect()
    }

    /// Assemble the model at a transformed parameter vector; benchmark
    /// templates have no state-space model and return None.
    pub fn model_spec(&self, transformed: &[f64]) -> Result<Option<ModelSpec>> {
        let nat = self.to_natural(transformed);
        match self.template {
            FitTemplate::PoissonScale { grid } => {
                let process = OuParams::new(nat[0], 0.0, nat[1])?;
                let emission = EmissionSpec::PoissonScale(PoissonScaleEmission::new(nat[2])?);
                Ok(Some(ModelSpec::new(process, emission, grid.clone())))
            }
            FitTemplate::NegBinSpline { grid, basis } => {
                let process = OuParams::new(nat[0], 0.0, nat[1])?;
                let k = basis.basis_count();
                let omega1 = SplineCoefficients::new(nat[3..3 + k].to_vec(), basis)?;
                let omega2 = SplineCoefficients::new(nat[3 + k..3 + 2 * k].to_vec(), basis)?;
                let emission = EmissionSpec::NegBinSpline(NegBinSplineEmission::new(
                    nat[2],
                    omega1,
                    omega2,
                    basis.clone(),
                )?);
                Ok(Some(ModelSpec::new(process, emission, grid.clone())))
            }
            FitTemplate::Benchmark { .. } => Ok(None),
        }
    }

    fn benchmark_loglik(&self, transformed: &[f64]) -> Result<f64> {
        let FitTemplate::Benchmark { basis } = self.template else {
            unreachable!("benchmark_loglik called on a state-space template");
        };
        let nat = self.to_natural(transformed);
        let k = basis.basis_count();
        let emission = NegBinSplineEmission::new(
            nat[0],
            SplineCoefficients::new(nat[1..1 + k].to_vec(), basis)?,
            SplineCoefficients::new(nat[1 + k..1 + 2 * k].to_vec(), basis)?,
            basis.clone(),
        )?;
        let per_seq: Vec<Result<f64>> = self
            .data
            .sequences()
            .par_iter()
            .map(|(_, seq)| {
                let covs = seq.covariates().expect("validated at construction");
                let mut total = 0.0;
                for (idx, &y) in seq.counts().iter().enumerate() {
                    total += negbin_marginal_logpmf(&emission, y, &covs[idx])?;
                }
                Ok(total)
            })
            .collect();
        let mut total = 0.0;
        for r in per_seq {
            total += r?;
        }
        Ok(total)
    }

    /// Pooled log-likelihood at a transformed parameter vector.
    pub fn loglik(&self, transformed: &[f64]) -> Result<f64> {
        match self.template {
            FitTemplate::Benchmark { .. } => self.benchmark_loglik(transformed),
            _ => {
                let spec = self
                    .model_spec(transformed)?
                    .expect("non-benchmark template");
                let cache = TransitionCache::new();
                panel_loglik(self.data, &spec, &cache)
            }
        }
    }

    /// Negative log-likelihood, with failures mapped to +infinity so the
    /// optimizer backs away from invalid regions.
    pub fn objective(&self, transformed: &[f64]) -> f64 {
        match self.loglik(transformed) {
            Ok(ll) if ll.is_finite() => -ll,
            _ => f64::INFINITY,
        }
    }
}

/// Maximise the approximate likelihood for `template` over `data`.
///
/// Non-convergence is reported in the result's `convergence.status`, not as
/// an error; only an invalid start (non-finite likelihood at the starting
/// point) fails fast.
pub fn fit(data: &PanelDataset, template: &FitTemplate, options: &FitOptions) -> Result<FitResult> {
    let clock = Instant::now();
    let problem = Problem::new(template, data)?;
    let t0 = starting_values(&problem)?;
    if !problem.objective(&t0).is_finite() {
        return Err(Error::InvalidStart(
            "likelihood is not finite at the starting values".into(),
        ));
    }

    let n = problem.dimension();
    let mut nm_opts = options.nelder_mead.clone();
    if nm_opts.max_evaluations == 0 {
        nm_opts.max_evaluations = (500 * (n + 1)).min(20_000);
    }

    let mut jitter_rng = ChaCha8Rng::seed_from_u64(options.seed.unwrap_or(0));
    let mut best: Option<(Vec<f64>, f64, usize, usize, bool)> = None;
    let mut total_evaluations = 0usize;
    let mut total_iterations = 0usize;
    for start_idx in 0..options.multi_start.max(1) {
        let start: Vec<f64> = if start_idx == 0 {
            t0.clone()
        } else {
            t0.iter()
                .map(|&t| t + jitter_rng.gen_range(-0.5..0.5))
                .collect()
        };
        let run = nelder_mead(|t| problem.objective(t), &start, &nm_opts);
        total_evaluations += run.evaluations;
        total_iterations += run.iterations;
        let (x, fx, converged) = if options.refine {
            let polished = bfgs_refine(
                |t| problem.objective(t),
                &run.x,
                &BfgsOptions {
                    max_iterations: 60,
                    gradient_tolerance: 1e-4,
                    gradient_step: 1e-6,
                },
            );
            total_evaluations += polished.evaluations;
            total_iterations += polished.iterations;
            let converged = run.converged || polished.converged;
            if polished.fx <= run.fx {
                (polished.x, polished.fx, converged)
            } else {
                (run.x, run.fx, converged)
            }
        } else {
            (run.x, run.fx, run.converged)
        };
        match &best {
            Some((_, best_fx, _, _, _)) if *best_fx <= fx => {}
            _ => best = Some((x, fx, total_iterations, total_evaluations, converged)),
        }
    }
    let (t_opt, neg_ll, _, _, converged) = best.expect("at least one start");
    if !neg_ll.is_finite() {
        return Err(Error::InvalidStart(
            "optimizer never found a finite likelihood".into(),
        ));
    }

    let mut diagnostics = Vec::new();
    if let Some(spec) = problem.model_spec(&t_opt)? {
        if spec.grid_coverage_warning() {
            diagnostics
                .push("grid covers less than six stationary sds around mu".to_string());
        }
    }

    let mut estimates = BTreeMap::new();
    let natural = problem.to_natural(&t_opt);
    for (p, &v) in problem.params().iter().zip(&natural) {
        estimates.insert(p.name.clone(), v);
    }

    let mut se = BTreeMap::new();
    let mut ci95 = BTreeMap::new();
    if options.compute_ci {
        let info = observed_fisher_ci(&problem, &t_opt);
        if info.singular {
            diagnostics.push(
                "observed Fisher information is not positive definite (near-singular Hessian)"
                    .to_string(),
            );
        }
        for entry in info.entries {
            se.insert(entry.name.clone(), entry.se);
            ci95.insert(entry.name, entry.ci95.map(|(lo, hi)| [lo, hi]));
        }
    } else {
        for p in problem.params() {
            se.insert(p.name.clone(), None);
            ci95.insert(p.name.clone(), None);
        }
    }

    let loglik = -neg_ll;
    let k = problem.dimension() as f64;
    let result = FitResult {
        model: template.model_name().to_string(),
        estimates,
        se,
        ci95,
        loglik,
        aic: 2.0 * k - 2.0 * loglik,
        convergence: Convergence {
            status: if converged {
                "converged".to_string()
            } else {
                "max-evaluations".to_string()
            },
            iterations: total_iterations,
            evaluations: total_evaluations,
            seconds: clock.elapsed().as_secs_f64(),
        },
        grid: template.grid().map(GridInfo::from_grid),
        seed: options.seed,
        transformed_optimum: t_opt,
        diagnostics,
    };
    Ok(result)
}

/// Fit the stateless benchmark model (phi and the spline coefficients).
pub fn fit_benchmark(
    data: &PanelDataset,
    basis: SplineBasis,
    options: &FitOptions,
) -> Result<FitResult> {
    fit(data, &FitTemplate::Benchmark { basis }, options)
}

/// Method-of-moments and least-squares starting values on the transformed
/// scale.
fn starting_values(problem: &Problem<'_>) -> Result<Vec<f64>> {
    match problem.template {
        FitTemplate::PoissonScale { .. } => {
            let (theta0, sigma0, alpha0) = poisson_moment_start(problem.data);
            Ok(vec![theta0.ln(), sigma0.ln(), alpha0.ln()])
        }
        FitTemplate::NegBinSpline { basis, .. } => {
            let (phi0, omega, resid_var) = spline_prefit(problem.data, basis)?;
            let theta0: f64 = 0.5;
            let state_var = (resid_var * 0.5).clamp(0.04, 9.0);
            let sigma0 = (2.0 * theta0 * state_var).sqrt();
            let mut t = vec![theta0.ln(), sigma0.ln(), phi0.ln()];
            t.extend(omega);
            Ok(t)
        }
        FitTemplate::Benchmark { basis } => {
            let (phi0, omega, _) = spline_prefit(problem.data, basis)?;
            let mut t = vec![phi0.ln()];
            t.extend(omega);
            Ok(t)
        }
    }
}

/// Moment-based (theta, sigma, alpha) guesses for a count panel, exposed
/// for grid auto-selection.
pub fn moment_start(data: &PanelDataset) -> (f64, f64, f64) {
    poisson_moment_start(data)
}

/// Treat log-transformed counts as a direct proxy for the state: its
/// variance (minus the Poisson noise floor) estimates the stationary
/// variance and its lag-1 correlation over the mean gap estimates
/// exp(-theta mean_gap).
fn poisson_moment_start(data: &PanelDataset) -> (f64, f64, f64) {
    let mut count_sum = 0.0;
    let mut n = 0usize;
    for (_, seq) in data.sequences() {
        for &y in seq.counts() {
            count_sum += y as f64;
            n += 1;
        }
    }
    let alpha0 = (count_sum / n as f64).max(0.1);

    let mut z_all = Vec::with_capacity(n);
    let mut pairs = Vec::new();
    let mut gap_sum = 0.0;
    let mut gap_n = 0usize;
    for (_, seq) in data.sequences() {
        let z: Vec<f64> = seq
            .counts()
            .iter()
            .map(|&y| ((y as f64 + 0.5) / alpha0).ln())
            .collect();
        for w in z.windows(2) {
            pairs.push((w[0], w[1]));
        }
        for g in seq.gaps() {
            gap_sum += g;
            gap_n += 1;
        }
        z_all.extend(z);
    }
    let mean_z = z_all.iter().sum::<f64>() / z_all.len() as f64;
    let var_z =
        z_all.iter().map(|z| (z - mean_z) * (z - mean_z)).sum::<f64>() / z_all.len() as f64;
    let state_var = (var_z - 1.0 / alpha0).clamp(0.01, 25.0);

    let rho = if pairs.is_empty() {
        0.5
    } else {
        let mx = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
        let my = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
        let mut cov = 0.0;
        let mut vx = 0.0;
        let mut vy = 0.0;
        for (a, b) in &pairs {
            cov += (a - mx) * (b - my);
            vx += (a - mx) * (a - mx);
            vy += (b - my) * (b - my);
        }
        (cov / (vx * vy).sqrt().max(1e-12)).clamp(0.05, 0.95)
    };
    let mean_gap = if gap_n == 0 { 1.0 } else { gap_sum / gap_n as f64 };
    let theta0 = (-rho.ln() / mean_gap).clamp(1e-3, 20.0);
    let sigma0 = (2.0 * theta0 * state_var).sqrt();
    (theta0, sigma0, alpha0)
}

/// Ridge least squares of log(y + 0.5) on the spline design plus a moment
/// estimate of phi; returns (phi0, omega starting vector, residual
/// variance).
fn spline_prefit(data: &PanelDataset, basis: &SplineBasis) -> Result<(f64, Vec<f64>, f64)> {
    let k = basis.basis_count();
    let p = 2 * k;
    let mut xtx = nalgebra::DMatrix::<f64>::zeros(p, p);
    let mut xtz = nalgebra::DVector::<f64>::zeros(p);
    let mut rows = Vec::new();
    for (_, seq) in data.sequences() {
        let covs = seq
            .covariates()
            .ok_or_else(|| Error::invalid("spline prefit requires covariates"))?;
        for (idx, &y) in seq.counts().iter().enumerate() {
            let b = basis.eval(covs[idx].age())?;
            let mut row = vec![0.0; p];
            row[..k].copy_from_slice(&b);
            if covs[idx].gender() == 1 {
                row[k..].copy_from_slice(&b);
            }
            let z = (y as f64 + 0.5).ln();
            for i in 0..p {
                xtz[i] += row[i] * z;
                for j in 0..p {
                    xtx[(i, j)] += row[i] * row[j];
                }
            }
            rows.push((row, z, y));
        }
    }
    for i in 0..p {
        xtx[(i, i)] += 1e-6;
    }
    let omega = xtx
        .clone()
        .lu()
        .solve(&xtz)
        .ok_or_else(|| Error::invalid("spline prefit design is singular"))?;

    let mut resid_sq = 0.0;
    let mut y_sum = 0.0;
    let mut y_sq = 0.0;
    for (row, z, y) in &rows {
        let fitted: f64 = row.iter().zip(omega.iter()).map(|(r, w)| r * w).sum();
        resid_sq += (z - fitted) * (z - fitted);
        y_sum += *y as f64;
        y_sq += (*y as f64) * (*y as f64);
    }
    let n = rows.len() as f64;
    let resid_var = resid_sq / n;
    let y_mean = y_sum / n;
    let y_var = y_sq / n - y_mean * y_mean;
    let phi0 = if y_var > y_mean {
        (y_mean * y_mean / (y_var - y_mean)).clamp(0.05, 1e4)
    } else {
        100.0
    };
    Ok((phi0, omega.iter().copied().collect(), resid_var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::build_grid;
    use crate::inference::data::ObservationSequence;
    use crate::state_process::{simulate_exact, StateProcess};
    use rand::Rng;
    use rand_distr::{Distribution, Poisson};

    fn simulate_poisson_sequence(
        theta: f64,
        sigma: f64,
        alpha: f64,
        t_len: usize,
        seed: u64,
    ) -> ObservationSequence {
        let params = OuParams::new(theta, 0.0, sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut times = Vec::with_capacity(t_len);
        let mut t = 0.0;
        for _ in 0..t_len {
            times.push(t);
            t += rng.gen_range(0.8..1.7);
        }
        let x0 = params.stationary_law().sample(&mut rng);
        let path = simulate_exact(&params, x0, &times, &mut rng).unwrap();
        let counts: Vec<u64> = path
            .values()
            .iter()
            .map(|&x| {
                let lambda = x.exp() * alpha;
                Poisson::new(lambda).unwrap().sample(&mut rng) as u64
            })
            .collect();
        ObservationSequence::new(times, counts).unwrap()
    }

    #[test]
    fn recovers_setting_two_at_desk_scale() {
        let seq = simulate_poisson_sequence(0.5, 0.5, 200.0, 400, 99);
        let data = PanelDataset::single(seq);
        let template = FitTemplate::PoissonScale {
            grid: build_grid(-2.5, 2.5, 50).unwrap(),
        };
        let result = fit(&data, &template, &FitOptions::default()).unwrap();
        assert!(result.converged(), "status {}", result.convergence.status);
        let theta = result.estimates["theta"];
        let sigma = result.estimates["sigma"];
        let alpha = result.estimates["alpha"];
        // T=400 tolerances are generous; tighter recovery is exercised in
        // the acceptance suite at T=2000
        assert!((theta - 0.5).abs() / 0.5 < 0.6, "theta {theta}");
        assert!((sigma - 0.5).abs() / 0.5 < 0.3, "sigma {sigma}");
        assert!((alpha - 200.0).abs() / 200.0 < 0.15, "alpha {alpha}");
        assert_eq!(result.n_free_parameters(), 3);
        assert!((aic(&result) - (6.0 - 2.0 * result.loglik)).abs() < 1e-12);
    }

    #[test]
    fn fit_report_roundtrips_to_model_spec() {
        let seq = simulate_poisson_sequence(0.5, 0.5, 200.0, 120, 5);
        let data = PanelDataset::single(seq);
        let template = FitTemplate::PoissonScale {
            grid: build_grid(-2.5, 2.5, 30).unwrap(),
        };
        let result = fit(&data, &template, &FitOptions::default()).unwrap();
        let spec = result.to_model_spec().unwrap();
        assert_eq!(spec.grid.m(), 30);
        let json = serde_json::to_string(&result).unwrap();
        let parsed: FitResult = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed.model, "poisson-scale");
        assert_eq!(parsed.estimates.len(), 3);
        parsed.to_model_spec().unwrap();
    }

    #[test]
    fn benchmark_has_no_state_parameters() {
        let basis = SplineBasis::age_default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut sequences = Vec::new();
        for id in 0..40 {
            let times: Vec<f64> = (0..6).map(|w| w as f64).collect();
            let covs: Vec<_> = (0..6)
                .map(|w| {
                    crate::emissions::Covariates::new(13.0 + w as f64, (id % 2) as u8).unwrap()
                })
                .collect();
            let counts: Vec<u64> = (0..6).map(|_| rng.gen_range(0..6)).collect();
            sequences.push((
                format!("{id:03}"),
                ObservationSequence::with_covariates(times, counts, covs).unwrap(),
            ));
        }
        let data = PanelDataset::new(sequences).unwrap();
        let result = fit_benchmark(&data, basis, &FitOptions::default()).unwrap();
        assert!(!result.estimates.contains_key("theta"));
        assert!(!result.estimates.contains_key("sigma"));
        assert_eq!(result.n_free_parameters(), 17);
        assert!(result.grid.is_none());
    }

    #[test]
    fn benchmark_saturated_mean_recovery() {
        // constant counts at one age: the fitted mean must approach the
        // constant
        let basis = SplineBasis::age_default();
        let c = 4u64;
        let mut sequences = Vec::new();
        for id in 0..10 {
            let times: Vec<f64> = (0..4).map(|w| w as f64).collect();
            let covs: Vec<_> = (0..4)
                .map(|_| crate::emissions::Covariates::new(20.0, 0).unwrap())
                .collect();
            sequences.push((
                format!("{id}"),
                ObservationSequence::with_covariates(times, vec![c; 4], covs).unwrap(),
            ));
        }
        let data = PanelDataset::new(sequences).unwrap();
        let result = fit_benchmark(&data, basis.clone(), &FitOptions::default()).unwrap();
        let omega1: Vec<f64> = (1..=8)
            .map(|l| result.estimates[&format!("omega1_{l}")])
            .collect();
        let f1 = crate::splines::curve_eval(
            &basis,
            &SplineCoefficients::new(omega1, &basis).unwrap(),
            20.0,
        )
        .unwrap();
        let fitted_mean = f1.exp();
        assert!(
            (fitted_mean - c as f64).abs() < 0.2,
            "fitted mean {fitted_mean}"
        );
    }

    #[test]
    fn benchmark_is_the_sigma_zero_limit() {
        // with sigma tiny and a grid whose central midpoint sits at zero,
        // the state contributes nothing and the state-space likelihood
        // collapses to the benchmark likelihood; a fitted SSM can
        // therefore never do worse than the fitted benchmark
        use crate::discretization::TransitionCache;
        use crate::inference::panel_loglik;
        let basis = SplineBasis::age_default();
        for seed in 0..20 {
            let config = crate::simulation::PanelConfig {
                n_individuals: 8,
                dropout: 0.2,
                ..crate::simulation::PanelConfig::case_study_default(seed)
            };
            let generated = crate::simulation::generate_panel(&config).unwrap();
            let bench = fit_benchmark(
                &generated.panel,
                basis.clone(),
                &FitOptions {
                    refine: false,
                    ..FitOptions::default()
                },
            )
            .unwrap();
            let omega = |prefix: &str| {
                let v: Vec<f64> = (1..=basis.basis_count())
                    .map(|l| bench.estimates[&format!("{prefix}_{l}")])
                    .collect();
                SplineCoefficients::new(v, &basis).unwrap()
            };
            let spec = ModelSpec::new(
                OuParams::new(0.5, 0.0, 1e-4).unwrap(),
                EmissionSpec::NegBinSpline(
                    NegBinSplineEmission::new(
                        bench.estimates["phi"],
                        omega("omega1"),
                        omega("omega2"),
                        basis.clone(),
                    )
                    .unwrap(),
                ),
                build_grid(-0.0015, 0.0015, 3).unwrap(),
            );
            let cache = TransitionCache::new();
            let collapsed = panel_loglik(&generated.panel, &spec, &cache).unwrap();
            assert!(
                (collapsed - bench.loglik).abs() < 1e-3 * bench.loglik.abs(),
                "seed {seed}: collapsed {collapsed} vs benchmark {}",
                bench.loglik
            );
        }
    }

    #[test]
    fn invalid_start_is_reported() {
        // an absurd fixed grid far away from the data's state range makes
        // the starting likelihood non-finite
        let seq = ObservationSequence::new(vec![0.0, 1.0], vec![2, 3]).unwrap();
        let data = PanelDataset::single(seq);
        let template = FitTemplate::PoissonScale {
            grid: build_grid(900.0, 910.0, 10).unwrap(),
        };
        match fit(&data, &template, &FitOptions::default()) {
            Err(Error::InvalidStart(_)) => {}
            other => panic!("expected invalid-start, got {other:?}"),
        }
    }

    #[test]
    fn gradient_small_at_reported_optimum() {
        let seq = simulate_poisson_sequence(0.5, 0.5, 200.0, 300, 11);
        let data = PanelDataset::single(seq);
        let template = FitTemplate::PoissonScale {
            grid: build_grid(-2.5, 2.5, 40).unwrap(),
        };
        let result = fit(&data, &template, &FitOptions::default()).unwrap();
        let problem = Problem::new(&template, &data).unwrap();
        let mut f = |t: &[f64]| problem.objective(t);
        let grad = crate::optim::fd_gradient(&mut f, &result.transformed_optimum, 1e-6);
        let max_grad = grad.iter().fold(0.0f64, |a, &g| a.max(g.abs()));
        assert!(max_grad < 1e-3, "gradient max-norm {max_grad}");
    }

    #[test]
    fn flat_likelihood_flags_near_singular_hessian() {
        // sigma -> 0 data with a flat emission carries no information about
        // theta; the Fisher information must come back non-invertible (or
        // with an undefined theta se) rather than fabricating values
        let params = OuParams::new(0.5, 0.0, 1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let times: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let x0 = 0.0;
        let path = simulate_exact(&params, x0, &times, &mut rng).unwrap();
        let counts: Vec<u64> = path
            .values()
            .iter()
            .map(|&x| Poisson::new(x.exp() * 50.0).unwrap().sample(&mut rng) as u64)
            .collect();
        let seq = ObservationSequence::new(times, counts).unwrap();
        let data = PanelDataset::single(seq);
        let template = FitTemplate::PoissonScale {
            grid: build_grid(-3.0, 3.0, 20).unwrap(),
        };
        let opts = FitOptions {
            compute_ci: true,
            ..Default::default()
        };
        let result = fit(&data, &template, &opts).unwrap();
        let theta_se_missing = result.se["theta"].is_none();
        let flagged = result
            .diagnostics
            .iter()
            .any(|d| d.contains("near-singular"));
        assert!(
            theta_se_missing || flagged || result.se["theta"].unwrap() > 10.0,
            "expected non-identifiability to surface; got {:?} / {:?}",
            result.se,
            result.diagnostics
        );
    }
}
