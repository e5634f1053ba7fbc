//! State-space discretisation: an equally spaced grid over `[b0, bm]`, the
//! gap-dependent transition probability matrices of the approximating m-state
//! HMM, the stationary initial distribution, and a gap-keyed matrix cache.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use crate::error::{Error, Result};
use crate::state_process::{OuParams, StateProcess};

/// Minimum raw probability mass a grid must capture before rows are
/// renormalised; below this the grid is declared ill-conditioned.
const MIN_CAPTURED_MASS: f64 = 0.5;

/// An equal-width partition of `[b0, bm]` into `m` intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    b0: f64,
    bm: f64,
    m: usize,
    midpoints: Vec<f64>,
}

impl Grid {
    pub fn b0(&self) -> f64 {
        self.b0
    }

    pub fn bm(&self) -> f64 {
        self.bm
    }

    /// Number of intervals.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Interval width h = (bm - b0) / m.
    pub fn width(&self) -> f64 {
        (self.bm - self.b0) / self.m as f64
    }

    /// Boundary b_i = b0 + i h for i in 0..=m.
    pub fn boundary(&self, i: usize) -> f64 {
        self.b0 + i as f64 * self.width()
    }

    /// Interval midpoints, strictly increasing with spacing h.
    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }
}

/// Build the discretisation grid. Requires `b0 < bm` and `m >= 2`.
pub fn build_grid(b0: f64, bm: f64, m: usize) -> Result<Grid> {
    if !(b0 < bm) || !b0.is_finite() || !bm.is_finite() {
        return Err(Error::invalid(format!("need b0 < bm, got [{b0}, {bm}]")));
    }
    if m < 2 {
        return Err(Error::invalid(format!("need m >= 2, got {m}")));
    }
    let h = (bm - b0) / m as f64;
    let midpoints = (0..m).map(|i| b0 + (i as f64 + 0.5) * h).collect();
    Ok(Grid { b0, bm, m, midpoints })
}

/// Default grid range for an OU process: mu plus/minus six stationary
/// standard deviations, i.e. mu +/- 6 sigma / sqrt(2 theta).
pub fn default_range(params: &OuParams) -> (f64, f64) {
    let sd = params.stationary_variance().sqrt();
    (params.mu() - 6.0 * sd, params.mu() + 6.0 * sd)
}

/// Row-stochastic m x m transition matrix of the approximating HMM for one
/// time gap.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    m: usize,
    delta: f64,
    /// Row-major entries; row i is the distribution over arrival intervals
    /// from midpoint i.
    entries: Vec<f64>,
    log_entries: Vec<f64>,
}

impl TransitionMatrix {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.m + j]
    }

    pub fn log_get(&self, i: usize, j: usize) -> f64 {
        self.log_entries[i * self.m + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }

    pub fn log_row(&self, i: usize) -> &[f64] {
        &self.log_entries[i * self.m..(i + 1) * self.m]
    }

    /// v^T Gamma for a length-m row vector, written into `out`.
    pub fn left_multiply(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.m);
        debug_assert_eq!(out.len(), self.m);
        out.fill(0.0);
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            let row = self.row(i);
            for (o, &g) in out.iter_mut().zip(row) {
                *o += vi * g;
            }
        }
    }
}

/// Initial state distribution of the approximating HMM.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialDistribution {
    probabilities: Vec<f64>,
}

impl InitialDistribution {
    /// Construct from explicit probabilities (renormalised); mainly for
    /// tests that need a point mass or custom delta.
    pub fn from_probabilities(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::invalid("probabilities must be finite and >= 0"));
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("probabilities must not all be zero"));
        }
        Ok(Self {
            probabilities: probs.into_iter().map(|p| p / total).collect(),
        })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }
}

/// Stationary initial distribution over grid intervals: delta_i is the
/// stationary mass of interval B_i, renormalised over the grid.
pub fn initial_distribution<P: StateProcess + ?Sized>(
    process: &P,
    grid: &Grid,
) -> Result<InitialDistribution> {
    let law = process.stationary_law();
    let mut raw = Vec::with_capacity(grid.m());
    let mut prev_cdf = law.cdf(grid.boundary(0));
    let mut total = 0.0;
    for i in 1..=grid.m() {
        let cdf = law.cdf(grid.boundary(i));
        let mass = (cdf - prev_cdf).max(0.0);
        raw.push(mass);
        total += mass;
        prev_cdf = cdf;
    }
    if total < MIN_CAPTURED_MASS {
        return Err(Error::IllConditionedGrid(format!(
            "stationary mass captured by grid is only {total:.3}"
        )));
    }
    InitialDistribution::from_probabilities(raw)
}

/// Transition matrix over gap `delta`: raw entry (i, j) is the transition-law
/// mass of interval B_j starting from midpoint b*_i, computed as a difference
/// of two CDF evaluations; rows are then renormalised to sum to 1.
pub fn transition_matrix<P: StateProcess + ?Sized>(
    process: &P,
    grid: &Grid,
    delta: f64,
) -> Result<TransitionMatrix> {
    transition_matrix_counted(process, grid, delta, None)
}

fn transition_matrix_counted<P: StateProcess + ?Sized>(
    process: &P,
    grid: &Grid,
    delta: f64,
    counter: Option<&AtomicU64>,
) -> Result<TransitionMatrix> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::invalid(format!("delta must be > 0, got {delta}")));
    }
    let m = grid.m();
    let mut entries = vec![0.0f64; m * m];
    for i in 0..m {
        let law = process.transition_law(grid.midpoints()[i], delta)?;
        let mut prev_cdf = law.cdf(grid.boundary(0));
        let mut row_sum = 0.0;
        for j in 0..m {
            let cdf = law.cdf(grid.boundary(j + 1));
            let mass = (cdf - prev_cdf).max(0.0);
            entries[i * m + j] = mass;
            row_sum += mass;
            prev_cdf = cdf;
        }
        if let Some(c) = counter {
            c.fetch_add(m as u64 + 1, Ordering::Relaxed);
        }
        if row_sum < MIN_CAPTURED_MASS {
            return Err(Error::IllConditionedGrid(format!(
                "row {i} captures only {row_sum:.3} transition mass; grid too narrow"
            )));
        }
        for j in 0..m {
            entries[i * m + j] /= row_sum;
        }
    }
    let log_entries = entries.iter().map(|&p| p.ln()).collect();
    Ok(TransitionMatrix {
        m,
        delta,
        entries,
        log_entries,
    })
}

/// Cache key resolution: gaps are quantised to 1e-9 time units so that
/// floating-point-equal gaps parsed from files share a cache entry.
fn quantize_delta(delta: f64) -> u64 {
    (delta * 1e9).round() as u64
}

/// Memoises transition matrices per time gap for one (process, grid) pair.
/// Distinct gaps are few in practice, so fitting rebuilds only a handful of
/// m x m matrices per objective evaluation.
pub struct TransitionCache {
    map: RwLock<HashMap<u64, Arc<TransitionMatrix>>>,
    cdf_evaluations: AtomicU64,
}

impl TransitionCache {
    pub fn new() -> Self {
        Self {
            map: RwLock::new(HashMap::new()),
            cdf_evaluations: AtomicU64::new(0),
        }
    }

    /// Number of CDF evaluations spent building matrices so far; cache hits
    /// leave this unchanged.
    pub fn cdf_evaluations(&self) -> u64 {
        self.cdf_evaluations.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fetch the matrix for `delta`, building and storing it on a miss.
    /// A racing build may compute the same matrix twice; the stored value is
    /// always fully constructed.
    pub fn get<P: StateProcess + ?Sized>(
        &self,
        process: &P,
        grid: &Grid,
        delta: f64,
    ) -> Result<Arc<TransitionMatrix>> {
        let key = quantize_delta(delta);
        if let Some(hit) = self.map.read().unwrap().get(&key) {
            return Ok(Arc::clone(hit));
        }
        let built = Arc::new(transition_matrix_counted(
            process,
            grid,
            delta,
            Some(&self.cdf_evaluations),
        )?);
        let mut map = self.map.write().unwrap();
        let entry = map.entry(key).or_insert_with(|| Arc::clone(&built));
        Ok(Arc::clone(entry))
    }
}

impl Default for TransitionCache {
    fn default() -> Self {
        Self::new()
    }
}

/// Convenience wrapper matching the free-function style of the other
/// operations.
pub fn matrix_cache_get<P: StateProcess + ?Sized>(
    cache: &TransitionCache,
    process: &P,
    grid: &Grid,
    delta: f64,
) -> Result<Arc<TransitionMatrix>> {
    cache.get(process, grid, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state_process::ou_transition_law;
    use approx::assert_relative_eq;

    fn ou(theta: f64, mu: f64, sigma: f64) -> OuParams {
        OuParams::new(theta, mu, sigma).unwrap()
    }

    #[test]
    fn grid_paper_ranges() {
        let g = build_grid(-2.5, 2.5, 50).unwrap();
        assert_relative_eq!(g.width(), 0.1, epsilon = 1e-12);
        assert_relative_eq!(g.midpoints()[0], -2.45, epsilon = 1e-12);
        assert_relative_eq!(g.midpoints()[49], 2.45, epsilon = 1e-12);

        let g = build_grid(-9.0, 9.0, 100).unwrap();
        assert_relative_eq!(g.width(), 0.18, epsilon = 1e-12);

        let g = build_grid(0.0, 1.0, 2).unwrap();
        assert_eq!(g.midpoints(), &[0.25, 0.75]);
    }

    #[test]
    fn grid_invariants() {
        let g = build_grid(-3.0, 3.0, 17).unwrap();
        let h = g.width();
        for i in 0..g.m() {
            let mid = g.midpoints()[i];
            assert!(mid > g.boundary(i) && mid < g.boundary(i + 1));
            if i > 0 {
                assert_relative_eq!(mid - g.midpoints()[i - 1], h, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn grid_rejects_bad_args() {
        assert!(build_grid(1.0, 1.0, 10).is_err());
        assert!(build_grid(2.0, 1.0, 10).is_err());
        assert!(build_grid(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn default_range_is_six_stationary_sds() {
        let (lo, hi) = default_range(&ou(0.5, 0.0, 0.5));
        assert_relative_eq!(lo, -3.0, epsilon = 1e-12);
        assert_relative_eq!(hi, 3.0, epsilon = 1e-12);
        // stationary mass outside +/- 6 sd is negligible
        let law = ou(0.5, 0.0, 0.5).stationary_law();
        assert!(law.cdf(lo) < 1e-8);
        assert!(1.0 - law.cdf(hi) < 1e-8);

        let (lo, hi) = default_range(&ou(2.0, 0.0, 1.0));
        assert_relative_eq!(lo, -3.0, epsilon = 1e-12);
        assert_relative_eq!(hi, 3.0, epsilon = 1e-12);

        let (lo, hi) = default_range(&ou(2.0, 10.0, 1.0));
        assert_relative_eq!(lo, 7.0, epsilon = 1e-12);
        assert_relative_eq!(hi, 13.0, epsilon = 1e-12);
    }

    #[test]
    fn rows_are_stochastic() {
        let p = ou(0.5, 0.0, 0.5);
        let g = build_grid(-3.0, 3.0, 40).unwrap();
        for delta in [0.01, 0.5, 2.0, 20.0] {
            let gamma = transition_matrix(&p, &g, delta).unwrap();
            for i in 0..g.m() {
                let s: f64 = gamma.row(i).iter().sum();
                assert!((s - 1.0).abs() < 1e-12, "row {i} sums to {s}");
                assert!(gamma.row(i).iter().all(|&x| (0.0..=1.0).contains(&x)));
            }
        }
    }

    #[test]
    fn large_delta_rows_match_stationary() {
        let p = ou(0.5, 0.0, 0.5);
        let g = build_grid(-3.0, 3.0, 30).unwrap();
        let gamma = transition_matrix(&p, &g, 50.0 / 0.5).unwrap();
        let delta0 = initial_distribution(&p, &g).unwrap();
        for i in 0..g.m() {
            for j in 0..g.m() {
                assert!(
                    (gamma.get(i, j) - delta0.probabilities()[j]).abs() < 1e-8,
                    "entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn tiny_delta_is_near_identity() {
        let p = ou(0.5, 0.0, 0.5);
        let g = build_grid(-3.0, 3.0, 20).unwrap();
        let gamma = transition_matrix(&p, &g, 1e-8).unwrap();
        for i in 0..g.m() {
            let off: f64 = (0..g.m())
                .filter(|&j| j != i)
                .map(|j| gamma.get(i, j))
                .sum();
            assert!(off < 1e-6, "row {i} off-diagonal mass {off}");
        }
    }

    #[test]
    fn entries_match_quadrature_oracle() {
        // Integrate the Gaussian transition density over each interval by
        // Simpson quadrature; after renormalising the oracle row the same
        // way the implementation renormalises its rows, entries agree to
        // quadrature precision.
        let p = ou(0.5, 0.0, 0.5);
        let g = build_grid(-3.0, 3.0, 5).unwrap();
        let gamma = transition_matrix(&p, &g, 1.0).unwrap();
        for i in 0..5 {
            let law = ou_transition_law(&p, g.midpoints()[i], 1.0).unwrap();
            let integrals: Vec<f64> = (0..5)
                .map(|j| {
                    let (a, b) = (g.boundary(j), g.boundary(j + 1));
                    simpson(|x| gauss_pdf(x, law.mean, law.variance), a, b, 4001)
                })
                .collect();
            let total: f64 = integrals.iter().sum();
            for j in 0..5 {
                assert!(
                    (gamma.get(i, j) - integrals[j] / total).abs() < 1e-10,
                    "entry ({i},{j}): {} vs {}",
                    gamma.get(i, j),
                    integrals[j] / total
                );
            }
        }
    }

    fn gauss_pdf(x: f64, mean: f64, var: f64) -> f64 {
        let z = (x - mean) * (x - mean) / (2.0 * var);
        (-z).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let n = if n % 2 == 0 { n + 1 } else { n };
        let h = (b - a) / (n - 1) as f64;
        let mut s = f(a) + f(b);
        for k in 1..n - 1 {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let p = ou(0.5, 0.0, 2.0); // stationary sd = 2
        let g = build_grid(-0.1, 0.1, 10).unwrap();
        match initial_distribution(&p, &g) {
            Err(Error::IllConditionedGrid(_)) => {}
            other => panic!("expected ill-conditioned grid, got {other:?}"),
        }
        // from a midpoint at 0 over a long gap, nearly all mass leaves [-0.1, 0.1]
        match transition_matrix(&p, &g, 100.0) {
            Err(Error::IllConditionedGrid(_)) => {}
            other => panic!("expected ill-conditioned grid, got {other:?}"),
        }
    }

    #[test]
    fn initial_distribution_symmetry_and_mode() {
        let p = ou(0.5, 0.0, 0.5);
        let g = build_grid(-2.5, 2.5, 50).unwrap();
        let d = initial_distribution(&p, &g).unwrap();
        let probs = d.probabilities();
        let m = g.m();
        for i in 0..m {
            assert!((probs[i] - probs[m - 1 - i]).abs() < 1e-12);
        }
        let centre = probs[24].max(probs[25]);
        assert!(centre > probs[0] && centre > probs[m - 1]);
        let total: f64 = probs.iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn raw_stationary_mass_matches_erf_total() {
        let p = ou(0.5, 0.0, 0.5);
        let law = p.stationary_law();
        let raw_total = law.cdf(2.5) - law.cdf(-2.5);
        // N(0, 0.25) mass on (-2.5, 2.5), i.e. +/- 5 sd
        assert_relative_eq!(raw_total, 0.9999994, epsilon = 1e-7);
    }

    #[test]
    fn cache_hits_skip_cdf_evaluations() {
        let p = ou(0.5, 0.0, 0.5);
        let g = build_grid(-3.0, 3.0, 10).unwrap();
        let cache = TransitionCache::new();
        cache.get(&p, &g, 1.0).unwrap();
        let after_first = cache.cdf_evaluations();
        assert!(after_first > 0);
        cache.get(&p, &g, 1.0).unwrap();
        assert_eq!(cache.cdf_evaluations(), after_first);
        cache.get(&p, &g, 2.0).unwrap();
        assert!(cache.cdf_evaluations() > after_first);
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn cache_quantises_float_equal_gaps() {
        let p = ou(0.5, 0.0, 0.5);
        let g = build_grid(-3.0, 3.0, 10).unwrap();
        let cache = TransitionCache::new();
        cache.get(&p, &g, 0.1 + 0.2).unwrap();
        cache.get(&p, &g, 0.3).unwrap();
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn chapman_kolmogorov_error_shrinks_with_m() {
        let p = ou(0.5, 0.0, 0.5);
        let mut errs = Vec::new();
        for m in [20, 50, 100, 200] {
            let g = build_grid(-3.0, 3.0, m).unwrap();
            let g1 = transition_matrix(&p, &g, 1.0).unwrap();
            let g2 = transition_matrix(&p, &g, 2.0).unwrap();
            let mut max_err = 0.0f64;
            for i in 0..m {
                for j in 0..m {
                    let composed: f64 = (0..m).map(|k| g1.get(i, k) * g1.get(k, j)).sum();
                    max_err = max_err.max((composed - g2.get(i, j)).abs());
                }
            }
            errs.push(max_err);
        }
        for w in errs.windows(2) {
            assert!(w[1] < w[0], "errors not decreasing: {errs:?}");
        }
        assert!(errs[2] < 1e-3, "error at m=100 is {}", errs[2]);
    }

    fn fixed_point_error(theta: f64, sigma: f64, m: usize, delta: f64) -> f64 {
        let p = ou(theta, 0.0, sigma);
        let g = build_grid(-2.5, 2.5, m).unwrap();
        let d = initial_distribution(&p, &g).unwrap();
        let gamma = transition_matrix(&p, &g, delta).unwrap();
        let mut out = vec![0.0; m];
        gamma.left_multiply(d.probabilities(), &mut out);
        out.iter()
            .zip(d.probabilities())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
    }

    #[test]
    fn stationary_distribution_is_approximate_fixed_point() {
        // The midpoint scheme leaves an O(m^-3) residual in delta Gamma -
        // delta; it is ~1.6e-5 at m=100 for the slow-mixing settings and
        // drops below 1e-6 by m=400.
        for (theta, sigma) in [(0.02, 0.1), (0.5, 0.5), (2.0, 1.0)] {
            let coarse = fixed_point_error(theta, sigma, 100, 1.0);
            assert!(coarse < 2e-5, "setting ({theta},{sigma}) at m=100: {coarse}");
            let fine = fixed_point_error(theta, sigma, 400, 1.0);
            assert!(fine < 1e-6, "setting ({theta},{sigma}) at m=400: {fine}");
            assert!(fine < coarse / 8.0, "decay slower than m^-3");
        }
    }
}
