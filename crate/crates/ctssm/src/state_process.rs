//! The latent continuous-time state process.
//!
//! The Ornstein-Uhlenbeck (OU) process dX = theta (mu - X) dt + sigma dW is
//! the one process shipped here; anything exposing a Gaussian-CDF-compatible
//! transition law and a stationary law can be discretised through the
//! [`StateProcess`] trait.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Parameters of an Ornstein-Uhlenbeck process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuParams {
    theta: f64,
    mu: f64,
    sigma: f64,
}

impl OuParams {
    /// `theta` is the strength of reversion to the long-term mean `mu`;
    /// `sigma` is the diffusion coefficient. Both must be positive.
    pub fn new(theta: f64, mu: f64, sigma: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::invalid(format!("theta must be > 0, got {theta}")));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be > 0, got {sigma}")));
        }
        if !mu.is_finite() {
            return Err(Error::invalid(format!("mu must be finite, got {mu}")));
        }
        Ok(Self { theta, mu, sigma })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Variance of the limiting distribution, sigma^2 / (2 theta).
    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.theta)
    }
}

/// A univariate Gaussian law, used for both the transition distribution over
/// a time gap and the limiting distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianLaw {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianLaw {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if variance < 0.0 || !variance.is_finite() || !mean.is_finite() {
            return Err(Error::invalid(format!(
                "Gaussian law needs finite mean and variance >= 0, got ({mean}, {variance})"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    /// CDF at `x`, exact through the complementary error function so that
    /// far-tail masses stay accurate.
    pub fn cdf(&self, x: f64) -> f64 {
        let sd = self.sd();
        if sd == 0.0 {
            return if x < self.mean { 0.0 } else { 1.0 };
        }
        let z = (x - self.mean) / (sd * std::f64::consts::SQRT_2);
        0.5 * statrs::function::erf::erfc(-z)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean + self.sd() * z
    }
}

/// A realisation of the state process at a set of time points.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl SamplePath {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::invalid("times and values must have equal length"));
        }
        check_times(&times)?;
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if let Some(&first) = times.first() {
        if first < 0.0 || !first.is_finite() {
            return Err(Error::invalid("first time must be finite and >= 0"));
        }
    }
    for w in times.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::invalid(format!(
                "times must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// A continuous-time Markov state process with closed-form transition and
/// stationary laws. The discretisation layer only touches processes through
/// this trait.
pub trait StateProcess: Sync {
    /// Law of the state a gap `delta > 0` ahead, given current value `x`.
    fn transition_law(&self, x: f64, delta: f64) -> Result<GaussianLaw>;

    /// The limiting (long-run) law of the process.
    fn stationary_law(&self) -> GaussianLaw;
}

impl StateProcess for OuParams {
    fn transition_law(&self, x: f64, delta: f64) -> Result<GaussianLaw> {
        ou_transition_law(self, x, delta)
    }

    fn stationary_law(&self) -> GaussianLaw {
        ou_stationary_law(self)
    }
}

/// Gaussian transition law of the OU process over a gap `delta`:
/// mean e^{-theta delta} x + mu (1 - e^{-theta delta}),
/// variance sigma^2/(2 theta) (1 - e^{-2 theta delta}).
pub fn ou_transition_law(params: &OuParams, x: f64, delta: f64) -> Result<GaussianLaw> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid(format!("delta must be > 0, got {delta}")));
    }
    let decay = (-params.theta * delta).exp();
    let mean = decay * x + params.mu * (1.0 - decay);
    let variance = params.stationary_variance() * (1.0 - decay * decay);
    GaussianLaw::new(mean, variance)
}

/// Limiting distribution N(mu, sigma^2 / (2 theta)).
pub fn ou_stationary_law(params: &OuParams) -> GaussianLaw {
    GaussianLaw {
        mean: params.mu,
        variance: params.stationary_variance(),
    }
}

/// Simulate the process exactly at the given time stamps by sampling the
/// closed-form transition law sequentially, starting from `x0` at the first
/// time stamp. Deterministic given the rng state.
pub fn simulate_exact<R: Rng + ?Sized>(
    params: &OuParams,
    x0: f64,
    times: &[f64],
    rng: &mut R,
) -> Result<SamplePath> {
    check_times(times)?;
    let mut values = Vec::with_capacity(times.len());
    if times.is_empty() {
        return SamplePath::new(Vec::new(), Vec::new());
    }
    values.push(x0);
    for k in 1..times.len() {
        let delta = times[k] - times[k - 1];
        let law = ou_transition_law(params, values[k - 1], delta)?;
        values.push(law.sample(rng));
    }
    SamplePath::new(times.to_vec(), values)
}

/// Euler-Maruyama path on the regular grid {0, step, 2 step, ..., horizon}:
/// X_{k+1} = X_k + theta (mu - X_k) step + sigma sqrt(step) Z_k.
///
/// Kept for dense-path illustration; estimation experiments use
/// [`simulate_exact`].
pub fn simulate_euler_maruyama<R: Rng + ?Sized>(
    params: &OuParams,
    x0: f64,
    step: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<SamplePath> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid(format!("step must be > 0, got {step}")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid(format!("horizon must be > 0, got {horizon}")));
    }
    let n = (horizon / step).floor() as usize;
    let sqrt_step = step.sqrt();
    let mut times = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    times.push(0.0);
    values.push(x0);
    let mut x = x0;
    for k in 1..=n {
        let z: f64 = StandardNormal.sample(rng);
        x += params.theta * (params.mu - x) * step + params.sigma * sqrt_step * z;
        times.push(k as f64 * step);
        values.push(x);
    }
    SamplePath::new(times, values)
}
