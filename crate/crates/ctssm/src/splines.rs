//! Cubic B-spline basis for the nonparametric age effects.
//!
//! The basis lives on a simple (non-repeated) knot vector of 12 equally
//! spaced knots from 7 to 35 years, giving 12 - 4 = 8 cubic basis functions.
//! Partition of unity therefore holds only on the fully supported span
//! [knot_4, knot_9]; evaluation outside that span but inside [7, 35] is
//! permitted and flagged by [`SplineBasis::fully_supported`].

use crate::error::{Error, Result};

/// Spline order (degree + 1); cubic.
pub const ORDER: usize = 4;

/// Number of basis functions on the case-study knot vector.
pub const BASIS_COUNT: usize = 8;

/// A cubic B-spline basis on a simple, equally spaced knot vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    knots: Vec<f64>,
}

impl SplineBasis {
    /// The case-study basis: 12 equally spaced knots from 7 to 35 years.
    pub fn age_default() -> Self {
        Self::with_knot_range(7.0, 35.0, 12).expect("static knot vector is valid")
    }

    /// `n_knots` equally spaced simple knots on `[lo, hi]`; needs at least
    /// ORDER + 1 knots for one cubic basis function.
    pub fn with_knot_range(lo: f64, hi: f64, n_knots: usize) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::invalid(format!("need lo < hi, got [{lo}, {hi}]")));
        }
        if n_knots <= ORDER {
            return Err(Error::invalid(format!(
                "need more than {ORDER} knots, got {n_knots}"
            )));
        }
        let spacing = (hi - lo) / (n_knots - 1) as f64;
        let knots = (0..n_knots).map(|j| lo + j as f64 * spacing).collect();
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn basis_count(&self) -> usize {
        self.knots.len() - ORDER
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    /// Span on which the basis functions sum to one (here [knot_4, knot_9]
    /// in 1-based counting).
    pub fn fully_supported(&self) -> (f64, f64) {
        (
            self.knots[ORDER - 1],
            self.knots[self.knots.len() - ORDER],
        )
    }

    /// Evaluate all basis functions at `age` via the Cox-de Boor recursion.
    /// At most ORDER entries are nonzero.
    pub fn eval(&self, age: f64) -> Result<Vec<f64>> {
        let (lo, hi) = self.domain();
        if !(age >= lo && age <= hi) || !age.is_finite() {
            return Err(Error::OutOfDomain(format!(
                "age {age} outside spline domain [{lo}, {hi}]"
            )));
        }
        let n = self.basis_count();
        let t = &self.knots;
        // first-order (piecewise constant) functions; the right domain
        // boundary is folded into the last knot interval
        let mut b: Vec<f64> = (0..t.len() - 1)
            .map(|i| {
                let in_interval = if i == t.len() - 2 {
                    age >= t[i] && age <= t[i + 1]
                } else {
                    age >= t[i] && age < t[i + 1]
                };
                if in_interval {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        for k in 2..=ORDER {
            for i in 0..t.len() - k {
                let left = {
                    let den = t[i + k - 1] - t[i];
                    if den > 0.0 {
                        (age - t[i]) / den * b[i]
                    } else {
                        0.0
                    }
                };
                let right = {
                    let den = t[i + k] - t[i + 1];
                    if den > 0.0 {
                        (t[i + k] - age) / den * b[i + 1]
                    } else {
                        0.0
                    }
                };
                b[i] = left + right;
            }
        }
        b.truncate(n);
        Ok(b)
    }
}

/// Coefficients omega for one spline curve, one per basis function.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineCoefficients {
    omega: Vec<f64>,
}

impl SplineCoefficients {
    pub fn new(omega: Vec<f64>, basis: &SplineBasis) -> Result<Self> {
        if omega.len() != basis.basis_count() {
            return Err(Error::invalid(format!(
                "expected {} coefficients, got {}",
                basis.basis_count(),
                omega.len()
            )));
        }
        Ok(Self { omega })
    }

    pub fn zeros(basis: &SplineBasis) -> Self {
        Self {
            omega: vec![0.0; basis.basis_count()],
        }
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }
}

/// f(age) = sum_l omega_l C_l(age).
pub fn curve_eval(basis: &SplineBasis, coefficients: &SplineCoefficients, age: f64) -> Result<f64> {
    if coefficients.omega.len() != basis.basis_count() {
        return Err(Error::invalid("coefficient length does not match basis"));
    }
    let values = basis.eval(age)?;
    Ok(values
        .iter()
        .zip(&coefficients.omega)
        .map(|(c, w)| c * w)
        .sum())
}
