//! Observation containers and the assembled model specification.

use crate::discretization::Grid;
use crate::emissions::{Covariates, Emission, NegBinSplineEmission, PoissonScaleEmission};
use crate::error::{Error, Result};
use crate::state_process::OuParams;

/// One individual's irregularly timed count sequence with optional
/// per-observation covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    times: Vec<f64>,
    counts: Vec<u64>,
    covariates: Option<Vec<Covariates>>,
}

impl ObservationSequence {
    pub fn new(times: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        Self::build(times, counts, None)
    }

    pub fn with_covariates(
        times: Vec<f64>,
        counts: Vec<u64>,
        covariates: Vec<Covariates>,
    ) -> Result<Self> {
        Self::build(times, counts, Some(covariates))
    }

    fn build(
        times: Vec<f64>,
        counts: Vec<u64>,
        covariates: Option<Vec<Covariates>>,
    ) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::invalid("sequence must contain at least one observation"));
        }
        if times.len() != counts.len() {
            return Err(Error::invalid("times and counts must have equal length"));
        }
        if let Some(cov) = &covariates {
            if cov.len() != times.len() {
                return Err(Error::invalid("covariates must match observation count"));
            }
        }
        if times[0] < 0.0 || !times[0].is_finite() {
            return Err(Error::invalid("first time must be finite and >= 0"));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::invalid(format!(
                    "times must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self {
            times,
            counts,
            covariates,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn covariates(&self) -> Option<&[Covariates]> {
        self.covariates.as_deref()
    }

    pub fn covariate(&self, idx: usize) -> Option<&Covariates> {
        self.covariates.as_ref().map(|c| &c[idx])
    }

    /// Time gaps Delta_tau = t_tau - t_{tau-1}; length is len() - 1.
    pub fn gaps(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.windows(2).map(|w| w[1] - w[0])
    }
}

/// A collection of individual sequences, ordered by id so that likelihood
/// reductions are deterministic regardless of insertion or execution order.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    sequences: Vec<(String, ObservationSequence)>,
}

impl PanelDataset {
    pub fn new(mut sequences: Vec<(String, ObservationSequence)>) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::invalid("panel must contain at least one sequence"));
        }
        sequences.sort_by(|a, b| a.0.cmp(&b.0));
        for w in sequences.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::invalid(format!("duplicate individual id {:?}", w[0].0)));
            }
        }
        Ok(Self { sequences })
    }

    pub fn single(seq: ObservationSequence) -> Self {
        Self {
            sequences: vec![("0".to_string(), seq)],
        }
    }

    pub fn sequences(&self) -> &[(String, ObservationSequence)] {
        &self.sequences
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_observations(&self) -> usize {
        self.sequences.iter().map(|(_, s)| s.len()).sum()
    }

    pub fn has_covariates(&self) -> bool {
        self.sequences.iter().all(|(_, s)| s.covariates().is_some())
    }
}

/// The emission families shipped with the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum EmissionSpec {
    PoissonScale(PoissonScaleEmission),
    NegBinSpline(NegBinSplineEmission),
}

impl Emission for EmissionSpec {
    fn log_pmf(&self, y: u64, x: f64, cov: Option<&Covariates>) -> Result<f64> {
        match self {
            EmissionSpec::PoissonScale(e) => e.log_pmf(y, x, cov),
            EmissionSpec::NegBinSpline(e) => e.log_pmf(y, x, cov),
        }
    }

    fn requires_covariates(&self) -> bool {
        match self {
            EmissionSpec::PoissonScale(e) => e.requires_covariates(),
            EmissionSpec::NegBinSpline(e) => e.requires_covariates(),
        }
    }

    fn log_pmf_vector(
        &self,
        y: u64,
        cov: Option<&Covariates>,
        grid: &Grid,
    ) -> Result<Vec<f64>> {
        match self {
            EmissionSpec::PoissonScale(e) => e.log_pmf_vector(y, cov, grid),
            EmissionSpec::NegBinSpline(e) => e.log_pmf_vector(y, cov, grid),
        }
    }
}

/// A fully specified model: state process, emission family, and grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub process: OuParams,
    pub emission: EmissionSpec,
    pub grid: Grid,
}

impl ModelSpec {
    pub fn new(process: OuParams, emission: EmissionSpec, grid: Grid) -> Self {
        Self {
            process,
            emission,
            grid,
        }
    }

    /// True when the grid fails to cover six stationary standard deviations
    /// of the process on each side of mu. A warning condition, not an error.
    pub fn grid_coverage_warning(&self) -> bool {
        let sd = self.process.stationary_variance().sqrt();
        let mu = self.process.mu();
        self.grid.b0() > mu - 6.0 * sd || self.grid.bm() < mu + 6.0 * sd
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::build_grid;

    #[test]
    fn sequence_validation() {
        assert!(ObservationSequence::new(vec![], vec![]).is_err());
        assert!(ObservationSequence::new(vec![0.0, 1.0], vec![1]).is_err());
        assert!(ObservationSequence::new(vec![0.0, 0.0], vec![1, 2]).is_err());
        assert!(ObservationSequence::new(vec![-1.0, 1.0], vec![1, 2]).is_err());
        let seq = ObservationSequence::new(vec![0.0, 1.5, 2.0], vec![3, 0, 7]).unwrap();
        let gaps: Vec<f64> = seq.gaps().collect();
        assert_eq!(gaps, vec![1.5, 0.5]);
    }

    #[test]
    fn covariate_length_checked() {
        let cov = vec![Covariates::new(15.0, 0).unwrap()];
        assert!(
            ObservationSequence::with_covariates(vec![0.0, 1.0], vec![1, 2], cov).is_err()
        );
    }

    #[test]
    fn panel_sorts_and_rejects_duplicates() {
        let s = ObservationSequence::new(vec![0.0], vec![1]).unwrap();
        let p = PanelDataset::new(vec![
            ("b".into(), s.clone()),
            ("a".into(), s.clone()),
        ])
        .unwrap();
        assert_eq!(p.sequences()[0].0, "a");
        assert!(PanelDataset::new(vec![("a".into(), s.clone()), ("a".into(), s)]).is_err());
    }

    #[test]
    fn grid_coverage_warning() {
        let process = OuParams::new(0.5, 0.0, 0.5).unwrap(); // stationary sd 0.5
        let emission = EmissionSpec::PoissonScale(PoissonScaleEmission::new(200.0).unwrap());
        let wide = ModelSpec::new(process, emission.clone(), build_grid(-3.0, 3.0, 10).unwrap());
        assert!(!wide.grid_coverage_warning());
        let narrow = ModelSpec::new(process, emission, build_grid(-1.0, 1.0, 10).unwrap());
        assert!(narrow.grid_coverage_warning());
    }
}
