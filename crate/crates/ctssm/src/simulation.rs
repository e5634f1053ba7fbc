//! Synthetic-data generators and the two estimation experiments built on
//! them: the m-sweep on a single long sequence and the consistency study
//! over replicated datasets. Also generates case-study-shaped panels
//! (wave schedules, ages, gender, negative-binomial spline emission).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::discretization::build_grid;
use crate::emissions::{Covariates, NegBinSplineEmission};
use crate::error::{Error, Result};
use crate::inference::{
    fit, panel_loglik, EmissionSpec, FitOptions, FitTemplate, ModelSpec, ObservationSequence,
    PanelDataset,
};
use crate::splines::{SplineBasis, SplineCoefficients};
use crate::state_process::{simulate_exact, OuParams, StateProcess};

/// One simulated-sequence configuration: an OU process observed through
/// scaled-Poisson counts at irregular times.
#[derive(Debug, Clone)]
pub struct SimSetting {
    pub process: OuParams,
    pub alpha: f64,
    pub t_len: usize,
    /// Mean of the integer hour-gap law; gaps are drawn in whole hours and
    /// converted to days.
    pub gap_mean_hours: f64,
    pub seed: u64,
}

impl SimSetting {
    pub fn new(
        process: OuParams,
        alpha: f64,
        t_len: usize,
        gap_mean_hours: f64,
        seed: u64,
    ) -> Result<Self> {
        if t_len < 2 {
            return Err(Error::invalid("a setting needs at least two observations"));
        }
        if !(alpha > 0.0) || !(gap_mean_hours > 0.0) {
            return Err(Error::invalid("alpha and gap mean must be positive"));
        }
        Ok(Self {
            process,
            alpha,
            t_len,
            gap_mean_hours,
            seed,
        })
    }

    /// The three standard settings: (theta, sigma) in {(0.02, 0.1),
    /// (0.5, 0.5), (2, 1)}, all sharing the stationary law N(0, 0.25),
    /// with alpha = 200 and T = 2000.
    pub fn preset(index: usize, seed: u64) -> Result<Self> {
        let (theta, sigma) = match index {
            1 => (0.02, 0.1),
            2 => (0.5, 0.5),
            3 => (2.0, 1.0),
            _ => return Err(Error::invalid("setting index must be 1, 2 or 3")),
        };
        Self::new(OuParams::new(theta, 0.0, sigma)?, 200.0, 2000, 30.0, seed)
    }

    /// Shrink the sequence length, keeping everything else.
    pub fn with_t_len(mut self, t_len: usize) -> Self {
        self.t_len = t_len;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Generator output: the observable sequence plus the hidden states that
/// produced it, kept for decoding-accuracy scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDataset {
    pub observations: ObservationSequence,
    pub true_states: Vec<f64>,
}

/// Draw one inter-observation gap in days: an integer number of hours from
/// a Poisson law, redrawn while zero so gaps are strictly positive.
pub fn draw_gap_days<R: Rng + ?Sized>(rng: &mut R, mean_hours: f64) -> f64 {
    let law = Poisson::new(mean_hours).expect("positive mean");
    loop {
        let k = law.sample(rng);
        if k >= 1.0 {
            return k / 24.0;
        }
    }
}

/// Simulate one irregular count sequence from a setting.
pub fn generate_dataset(setting: &SimSetting) -> Result<GeneratedDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(setting.seed);
    let mut times = Vec::with_capacity(setting.t_len);
    let mut t = 0.0;
    for _ in 0..setting.t_len {
        times.push(t);
        t += draw_gap_days(&mut rng, setting.gap_mean_hours);
    }
    let x0 = setting.process.stationary_law().sample(&mut rng);
    let path = simulate_exact(&setting.process, x0, &times, &mut rng)?;
    let counts: Vec<u64> = path
        .values()
        .iter()
        .map(|&x| {
            let lambda = (x.exp() * setting.alpha).max(1e-12);
            Poisson::new(lambda).expect("positive rate").sample(&mut rng) as u64
        })
        .collect();
    Ok(GeneratedDataset {
        observations: ObservationSequence::new(times, counts)?,
        true_states: path.values().to_vec(),
    })
}

/// One row of an m-sweep table: the fit at a single grid resolution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub estimates: BTreeMap<String, f64>,
    pub neg_loglik: f64,
    pub seconds: f64,
    pub error: Option<String>,
}

/// Per-m fits of one fixed dataset at increasing grid resolutions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub setting_seed: u64,
    pub rows: Vec<SweepRow>,
}

/// Generate one dataset from `setting` and fit it at every grid size in
/// `m_values` over the fixed state range `(b0, bm)`. Failed fits are
/// recorded in their row; the sweep continues.
pub fn run_m_sweep(
    setting: &SimSetting,
    m_values: &[usize],
    range: (f64, f64),
    options: &FitOptions,
) -> Result<SweepResult> {
    if m_values.is_empty() {
        return Err(Error::invalid("sweep needs at least one m value"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for &m in m_values {
        if !seen.insert(m) {
            return Err(Error::invalid(format!("duplicate m value {m} in sweep")));
        }
    }
    let dataset = generate_dataset(setting)?;
    let data = PanelDataset::single(dataset.observations);
    let mut rows = Vec::with_capacity(m_values.len());
    for &m in m_values {
        let clock = std::time::Instant::now();
        let row = match build_grid(range.0, range.1, m)
            .and_then(|grid| fit(&data, &FitTemplate::PoissonScale { grid }, options))
        {
            Ok(result) => SweepRow {
                m,
                estimates: result.estimates.clone(),
                neg_loglik: -result.loglik,
                seconds: clock.elapsed().as_secs_f64(),
                error: None,
            },
            Err(e) => SweepRow {
                m,
                estimates: BTreeMap::new(),
                neg_loglik: f64::NAN,
                seconds: clock.elapsed().as_secs_f64(),
                error: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    Ok(SweepResult {
        setting_seed: setting.seed,
        rows,
    })
}

/// One replicate of the consistency study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyRow {
    pub t_len: usize,
    pub replicate: usize,
    pub estimates: BTreeMap<String, f64>,
    /// (estimate - truth) / truth per parameter.
    pub relative_bias: BTreeMap<String, f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyResult {
    pub rows: Vec<ConsistencyRow>,
    pub n_failed: usize,
}

/// For each sequence length, generate and fit `n_replicates` independent
/// datasets at a fixed grid size and record relative biases. Each
/// replicate draws from its own stream derived from the master seed, so
/// the study is reproducible and replicates are independent.
pub fn run_consistency_study(
    setting: &SimSetting,
    t_values: &[usize],
    n_replicates: usize,
    m: usize,
    range: (f64, f64),
    options: &FitOptions,
) -> Result<ConsistencyResult> {
    if t_values.is_empty() || n_replicates == 0 {
        return Err(Error::invalid("consistency study needs T values and replicates"));
    }
    let truth: BTreeMap<String, f64> = [
        ("theta".to_string(), setting.process.theta()),
        ("sigma".to_string(), setting.process.sigma()),
        ("alpha".to_string(), setting.alpha),
    ]
    .into();
    let mut rows = Vec::new();
    let mut n_failed = 0usize;
    for (t_idx, &t_len) in t_values.iter().enumerate() {
        for replicate in 0..n_replicates {
            let mut stream = ChaCha8Rng::seed_from_u64(setting.seed);
            stream.set_stream(((t_idx as u64) << 32) | replicate as u64 | (1 << 63));
            let rep_seed: u64 = stream.gen();
            let rep_setting = setting.clone().with_t_len(t_len).with_seed(rep_seed);
            let dataset = generate_dataset(&rep_setting)?;
            let data = PanelDataset::single(dataset.observations);
            let grid = build_grid(range.0, range.1, m)?;
            match fit(&data, &FitTemplate::PoissonScale { grid }, options) {
                Ok(result) => {
                    let relative_bias = result
                        .estimates
                        .iter()
                        .map(|(k, &v)| (k.clone(), (v - truth[k]) / truth[k]))
                        .collect();
                    rows.push(ConsistencyRow {
                        t_len,
                        replicate,
                        estimates: result.estimates,
                        relative_bias,
                        error: None,
                    });
                }
                Err(e) => {
                    n_failed += 1;
                    rows.push(ConsistencyRow {
                        t_len,
                        replicate,
                        estimates: BTreeMap::new(),
                        relative_bias: BTreeMap::new(),
                        error: Some(e.to_string()),
                    });
                }
            }
        }
    }
    Ok(ConsistencyResult { rows, n_failed })
}

/// Configuration for a case-study-shaped panel: a cohort followed over
/// twelve waves (eight annual, four biannual), ages 12-28, binary gender,
/// negative-binomial spline emission on top of per-individual OU paths.
#[derive(Debug, Clone)]
pub struct PanelConfig {
    pub n_individuals: usize,
    pub process: OuParams,
    pub phi: f64,
    pub omega1: Vec<f64>,
    pub omega2: Vec<f64>,
    /// Per-wave probability of nonresponse; waves are retained whenever
    /// skipping would open a gap of more than four years.
    pub dropout: f64,
    /// Starting ages are drawn uniformly from this range.
    pub start_age_range: (f64, f64),
    /// Probability an individual is female (gender code 1).
    pub female_fraction: f64,
    pub seed: u64,
}

impl PanelConfig {
    /// Defaults shaped like the adolescent offending cohort: about a
    /// thousand individuals starting at ages 12-13 with 57% female, a
    /// hump-shaped age curve peaking in the late teens, slight female
    /// deficit, strong overdispersion, and moderately persistent states.
    pub fn case_study_default(seed: u64) -> Self {
        Self {
            n_individuals: 1000,
            process: OuParams::new(0.25, 0.0, 1.0).expect("valid defaults"),
            phi: 0.57,
            omega1: vec![-0.8, 0.2, 1.0, 1.4, 1.0, 0.3, -0.5, -1.2],
            omega2: vec![-0.2, -0.4, -0.6, -0.7, -0.6, -0.5, -0.4, -0.3],
            dropout: 0.0,
            start_age_range: (12.0, 13.0),
            female_fraction: 626.0 / 1093.0,
            seed,
        }
    }

    fn validate(&self, basis: &SplineBasis) -> Result<()> {
        if self.n_individuals == 0 {
            return Err(Error::invalid("panel needs at least one individual"));
        }
        if !(self.phi > 0.0) {
            return Err(Error::invalid("phi must be positive"));
        }
        if self.omega1.len() != basis.basis_count() || self.omega2.len() != basis.basis_count() {
            return Err(Error::invalid("omega curves must match the basis size"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout must lie in [0, 1)"));
        }
        let (lo, hi) = self.start_age_range;
        if !(lo <= hi) {
            return Err(Error::invalid("start age range must be ordered"));
        }
        let max_age = hi + WAVE_OFFSETS[WAVE_OFFSETS.len() - 1];
        if lo < 12.0 || max_age > 28.0 {
            return Err(Error::invalid(
                "start ages must keep all observed ages inside [12, 28]",
            ));
        }
        Ok(())
    }
}

/// Years since the first wave: eight annual waves then four biannual ones.
pub const WAVE_OFFSETS: [f64; 12] =
    [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 9.0, 11.0, 13.0, 15.0];

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPanel {
    pub panel: PanelDataset,
    /// True states per individual, aligned with the retained waves.
    pub true_states: Vec<(String, Vec<f64>)>,
}

/// Simulate a case-study-shaped panel together with its hidden states.
pub fn generate_panel(config: &PanelConfig) -> Result<GeneratedPanel> {
    let basis = SplineBasis::age_default();
    config.validate(&basis)?;
    let emission = NegBinSplineEmission::new(
        config.phi,
        SplineCoefficients::new(config.omega1.clone(), &basis)?,
        SplineCoefficients::new(config.omega2.clone(), &basis)?,
        basis,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sequences = Vec::with_capacity(config.n_individuals);
    let mut true_states = Vec::with_capacity(config.n_individuals);
    let width = (config.n_individuals as f64).log10().ceil().max(1.0) as usize;
    for idx in 0..config.n_individuals {
        let id = format!("{idx:0width$}");
        let start_age = rng.gen_range(config.start_age_range.0..=config.start_age_range.1);
        let gender = u8::from(rng.gen_bool(config.female_fraction));

        // retain wave 0 always; later waves drop out independently unless
        // skipping would stretch the gap past four years
        let mut offsets = vec![WAVE_OFFSETS[0]];
        for w in 1..WAVE_OFFSETS.len() {
            let last = *offsets.last().expect("wave 0 retained");
            let next_gap_if_skipped = WAVE_OFFSETS
                .get(w + 1)
                .map(|&next| next - last)
                .unwrap_or(0.0);
            let forced = next_gap_if_skipped > 4.0;
            if forced || !rng.gen_bool(config.dropout) {
                offsets.push(WAVE_OFFSETS[w]);
            }
        }

        let x0 = config.process.stationary_law().sample(&mut rng);
        let path = simulate_exact(&config.process, x0, &offsets, &mut rng)?;
        let mut counts = Vec::with_capacity(offsets.len());
        let mut covs = Vec::with_capacity(offsets.len());
        for (k, &offset) in offsets.iter().enumerate() {
            let cov = Covariates::new(start_age + offset, gender)?;
            let nu = (path.values()[k] + emission.covariate_log_mean(&cov)?).exp();
            let lambda = Gamma::new(config.phi, nu / config.phi)
                .map_err(|e| Error::invalid(format!("gamma mixing draw: {e}")))?
                .sample(&mut rng)
                .max(1e-12);
            let y = Poisson::new(lambda).expect("positive rate").sample(&mut rng) as u64;
            counts.push(y);
            covs.push(cov);
        }
        sequences.push((
            id.clone(),
            ObservationSequence::with_covariates(offsets, counts, covs)?,
        ));
        true_states.push((id, path.values().to_vec()));
    }
    true_states.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(GeneratedPanel {
        panel: PanelDataset::new(sequences)?,
        true_states,
    })
}

/// Evaluate (not fit) the likelihood of a generated dataset at its true
/// parameters — a cheap sanity probe used by the consistency harness.
pub fn true_parameter_loglik(
    setting: &SimSetting,
    dataset: &GeneratedDataset,
    m: usize,
    range: (f64, f64),
) -> Result<f64> {
    let grid = build_grid(range.0, range.1, m)?;
    let spec = ModelSpec::new(
        setting.process,
        EmissionSpec::PoissonScale(crate::emissions::PoissonScaleEmission::new(setting.alpha)?),
        grid,
    );
    let cache = crate::discretization::TransitionCache::new();
    panel_loglik(
        &PanelDataset::single(dataset.observations.clone()),
        &spec,
        &cache,
    )
}
