//! Conditional observation models given a state value and covariates.
//!
//! Two families ship: the Poisson-scale model y ~ Poisson(exp(x) alpha) used
//! in the simulation experiments, and the negative-binomial model with
//! spline age/gender effects used in the case study. Anything conditionally
//! independent given the state can plug in through [`Emission`].

use statrs::function::gamma::ln_gamma;

use crate::discretization::Grid;
use crate::error::{Error, Result};
use crate::splines::{curve_eval, SplineBasis, SplineCoefficients};

/// Largest admissible log-mean; beyond this exp overflows f64.
const MAX_LOG_MEAN: f64 = 700.0;

/// Per-observation covariates for the spline emission model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariates {
    age: f64,
    gender: u8,
}

impl Covariates {
    /// `gender` is dummy-coded: 0 = male (baseline curve f1),
    /// 1 = female (f1 + f2).
    pub fn new(age: f64, gender: u8) -> Result<Self> {
        if gender > 1 {
            return Err(Error::invalid(format!("gender must be 0 or 1, got {gender}")));
        }
        if !age.is_finite() {
            return Err(Error::invalid("age must be finite"));
        }
        Ok(Self { age, gender })
    }

    pub fn age(&self) -> f64 {
        self.age
    }

    pub fn gender(&self) -> u8 {
        self.gender
    }
}

/// A conditional count distribution given the latent state.
pub trait Emission: Sync {
    /// Log pmf of count `y` given state value `x` and covariates.
    fn log_pmf(&self, y: u64, x: f64, cov: Option<&Covariates>) -> Result<f64>;

    /// Whether per-observation covariates are required.
    fn requires_covariates(&self) -> bool {
        false
    }

    /// Log pmf of `y` at every grid midpoint. The default evaluates the
    /// scalar pmf per midpoint; implementations override it to hoist
    /// state-independent work out of the loop.
    fn log_pmf_vector(
        &self,
        y: u64,
        cov: Option<&Covariates>,
        grid: &Grid,
    ) -> Result<Vec<f64>> {
        grid.midpoints()
            .iter()
            .map(|&x| self.log_pmf(y, x, cov))
            .collect()
    }
}

/// The diagonal of P(y) in log space: entry i is log p(y | x = b*_i).
pub fn emission_vector<E: Emission + ?Sized>(
    emission: &E,
    y: u64,
    cov: Option<&Covariates>,
    grid: &Grid,
) -> Result<Vec<f64>> {
    emission.log_pmf_vector(y, cov, grid)
}

fn poisson_log_pmf_at_rate(y: u64, rate: f64) -> f64 {
    let yf = y as f64;
    yf * rate.ln() - rate - ln_gamma(yf + 1.0)
}

/// y ~ Poisson(exp(x) alpha): counts fluctuate asymmetrically around the
/// baseline rate alpha.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoissonScaleEmission {
    alpha: f64,
}

impl PoissonScaleEmission {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Emission for PoissonScaleEmission {
    fn log_pmf(&self, y: u64, x: f64, _cov: Option<&Covariates>) -> Result<f64> {
        let log_rate = x + self.alpha.ln();
        if log_rate > MAX_LOG_MEAN {
            return Err(Error::NumericDomain(format!(
                "log rate {log_rate} overflows"
            )));
        }
        Ok(poisson_log_pmf_at_rate(y, log_rate.exp()))
    }

    fn log_pmf_vector(
        &self,
        y: u64,
        _cov: Option<&Covariates>,
        grid: &Grid,
    ) -> Result<Vec<f64>> {
        let yf = y as f64;
        let log_alpha = self.alpha.ln();
        let lgamma_term = ln_gamma(yf + 1.0);
        grid.midpoints()
            .iter()
            .map(|&x| {
                let log_rate = x + log_alpha;
                if log_rate > MAX_LOG_MEAN {
                    return Err(Error::NumericDomain(format!(
                        "log rate {log_rate} overflows"
                    )));
                }
                Ok(yf * log_rate - log_rate.exp() - lgamma_term)
            })
            .collect()
    }
}

pub fn poisson_logpmf(emission: &PoissonScaleEmission, y: u64, x: f64) -> Result<f64> {
    emission.log_pmf(y, x, None)
}

/// Negative binomial with mean nu = exp(x + f1(age) + f2(age) gender) and
/// dispersion phi, parameterised so variance = nu + nu^2 / phi.
#[derive(Debug, Clone, PartialEq)]
pub struct NegBinSplineEmission {
    phi: f64,
    omega1: SplineCoefficients,
    omega2: SplineCoefficients,
    basis: SplineBasis,
}

impl NegBinSplineEmission {
    pub fn new(
        phi: f64,
        omega1: SplineCoefficients,
        omega2: SplineCoefficients,
        basis: SplineBasis,
    ) -> Result<Self> {
        if !(phi > 0.0) || !phi.is_finite() {
            return Err(Error::invalid(format!("phi must be > 0, got {phi}")));
        }
        if omega1.omega().len() != basis.basis_count()
            || omega2.omega().len() != basis.basis_count()
        {
            return Err(Error::invalid("coefficient length does not match basis"));
        }
        Ok(Self {
            phi,
            omega1,
            omega2,
            basis,
        })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn omega1(&self) -> &SplineCoefficients {
        &self.omega1
    }

    pub fn omega2(&self) -> &SplineCoefficients {
        &self.omega2
    }

    pub fn basis(&self) -> &SplineBasis {
        &self.basis
    }

    /// Covariate part of the log mean, f1(age) + f2(age) gender.
    pub fn covariate_log_mean(&self, cov: &Covariates) -> Result<f64> {
        let mut lin = curve_eval(&self.basis, &self.omega1, cov.age())?;
        if cov.gender() == 1 {
            lin += curve_eval(&self.basis, &self.omega2, cov.age())?;
        }
        Ok(lin)
    }

    fn log_pmf_at_log_mean(&self, y: u64, log_mean: f64) -> Result<f64> {
        if log_mean > MAX_LOG_MEAN {
            return Err(Error::NumericDomain(format!(
                "log mean {log_mean} overflows"
            )));
        }
        let nu = log_mean.exp();
        let phi = self.phi;
        let yf = y as f64;
        // log(phi / (phi + nu)) and log(nu / (phi + nu)) via log1p for
        // accuracy when nu is tiny or huge
        let log_phi_frac = -((nu / phi).ln_1p());
        let log_nu_frac = log_mean - (phi + nu).ln();
        Ok(ln_gamma(yf + phi) - ln_gamma(phi) - ln_gamma(yf + 1.0)
            + phi * log_phi_frac
            + yf * log_nu_frac)
    }
}

impl Emission for NegBinSplineEmission {
    fn log_pmf(&self, y: u64, x: f64, cov: Option<&Covariates>) -> Result<f64> {
        let cov = cov.ok_or_else(|| Error::invalid("spline emission needs covariates"))?;
        let lin = self.covariate_log_mean(cov)?;
        self.log_pmf_at_log_mean(y, x + lin)
    }

    fn requires_covariates(&self) -> bool {
        true
    }

    fn log_pmf_vector(
        &self,
        y: u64,
        cov: Option<&Covariates>,
        grid: &Grid,
    ) -> Result<Vec<f64>> {
        let cov = cov.ok_or_else(|| Error::invalid("spline emission needs covariates"))?;
        let lin = self.covariate_log_mean(cov)?;
        grid.midpoints()
            .iter()
            .map(|&x| self.log_pmf_at_log_mean(y, x + lin))
            .collect()
    }
}

pub fn negbin_logpmf(
    emission: &NegBinSplineEmission,
    y: u64,
    x: f64,
    cov: &Covariates,
) -> Result<f64> {
    emission.log_pmf(y, x, Some(cov))
}

/// Benchmark pmf with the state term removed (x = 0), i.e. the model
/// without an underlying state process.
pub fn negbin_marginal_logpmf(
    emission: &NegBinSplineEmission,
    y: u64,
    cov: &Covariates,
) -> Result<f64> {
    emission.log_pmf(y, 0.0, Some(cov))
}
