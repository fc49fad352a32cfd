//! Discretized strategy spaces, reference measures, probability densities and
//! the divergences (KL, Jeffreys, total variation) used everywhere else.
//!
//! A continuous strategy set is represented by a finite grid with positive
//! quadrature weights (midpoint rule for intervals); a finite game uses unit
//! weights. All integrals reduce to weighted sums over the grid.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for density normalization drift accepted at construction.
pub const DENSITY_TOL: f64 = 1e-10;
/// Tolerance for reference-measure normalization.
pub const REFERENCE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("strategy space must contain at least one point")]
    EmptySpace,
    #[error("quadrature weight at index {0} is not strictly positive: {1}")]
    NonPositiveWeight(usize, f64),
    #[error("points and weights have mismatched lengths ({points} vs {weights})")]
    LengthMismatch { points: usize, weights: usize },
    #[error("non-finite value at index {0}: {1}")]
    NonFinite(usize, f64),
    #[error("density value at index {0} is negative: {1}")]
    NegativeDensity(usize, f64),
    #[error("density integrates to {0}, outside tolerance {1} of 1")]
    NotNormalized(f64, f64),
    #[error("densities live on different strategy spaces")]
    SpaceMismatch,
    #[error("KL divergence is infinite: p has mass at index {0} where q vanishes")]
    InfiniteDivergence(usize),
}

/// A discretized strategy set: points in R^d with positive quadrature weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpace {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl StrategySpace {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Arc<Self>, MeasureError> {
        if points.is_empty() {
            return Err(MeasureError::EmptySpace);
        }
        if points.len() != weights.len() {
            return Err(MeasureError::LengthMismatch {
                points: points.len(),
                weights: weights.len(),
            });
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(MeasureError::NonFinite(i, w));
            }
            if w <= 0.0 {
                return Err(MeasureError::NonPositiveWeight(i, w));
            }
        }
        Ok(Arc::new(Self { points, weights }))
    }

    /// n abstract pure strategies, unit weights (a finite game).
    pub fn finite(n: usize) -> Result<Arc<Self>, MeasureError> {
        let points = (0..n).map(|i| vec![i as f64]).collect();
        let weights = vec![1.0; n];
        Self::new(points, weights)
    }

    /// Uniform 1-d grid of n cell midpoints on [lo, hi], weights = cell width.
    pub fn grid_1d(lo: f64, hi: f64, n: usize) -> Result<Arc<Self>, MeasureError> {
        if n == 0 {
            return Err(MeasureError::EmptySpace);
        }
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(MeasureError::NonFinite(0, hi - lo));
        }
        let h = (hi - lo) / n as f64;
        let points = (0..n).map(|i| vec![lo + (i as f64 + 0.5) * h]).collect();
        let weights = vec![h; n];
        Self::new(points, weights)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted sum of per-point values, i.e. the quadrature integral.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum()
    }
}

pub(crate) fn same_space(a: &Arc<StrategySpace>, b: &Arc<StrategySpace>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// A normalized Gibbs reference measure e^{-U} on a strategy space.
///
/// The potential is shifted by the log-partition at construction so that the
/// density integrates to exactly 1 under the space's quadrature.
#[derive(Debug, Clone, Serialize)]
pub struct ReferenceMeasure {
    space: Arc<StrategySpace>,
    potential: Vec<f64>,
    density: Vec<f64>,
}

impl ReferenceMeasure {
    /// Normalizes a raw potential: U_i = raw_i + log(sum_j w_j e^{-raw_j}).
    pub fn normalize(
        raw_potential: &[f64],
        space: Arc<StrategySpace>,
    ) -> Result<Self, MeasureError> {
        if raw_potential.len() != space.len() {
            return Err(MeasureError::LengthMismatch {
                points: space.len(),
                weights: raw_potential.len(),
            });
        }
        for (i, &u) in raw_potential.iter().enumerate() {
            if !u.is_finite() {
                return Err(MeasureError::NonFinite(i, u));
            }
        }
        // log-partition via log-sum-exp over log(w_i) - raw_i
        let log_z = log_sum_exp(
            raw_potential
                .iter()
                .zip(space.weights())
                .map(|(&u, &w)| w.ln() - u),
        );
        let potential: Vec<f64> = raw_potential.iter().map(|&u| u + log_z).collect();
        let density: Vec<f64> = potential.iter().map(|&u| (-u).exp()).collect();
        Ok(Self {
            space,
            potential,
            density,
        })
    }

    /// Uniform reference on the space.
    pub fn uniform(space: Arc<StrategySpace>) -> Self {
        let raw = vec![0.0; space.len()];
        Self::normalize(&raw, space).expect("uniform potential is always valid")
    }

    /// Gaussian potential (x - mean)^2 / (2 std^2), normalized on the grid.
    pub fn gaussian(space: Arc<StrategySpace>, mean: f64, std: f64) -> Result<Self, MeasureError> {
        if !(std.is_finite() && std > 0.0) {
            return Err(MeasureError::NonFinite(0, std));
        }
        let raw: Vec<f64> = space
            .points()
            .iter()
            .map(|p| {
                let r2: f64 = p.iter().map(|&x| (x - mean) * (x - mean)).sum();
                r2 / (2.0 * std * std)
            })
            .collect();
        Self::normalize(&raw, space)
    }

    pub fn space(&self) -> &Arc<StrategySpace> {
        &self.space
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// The reference viewed as a Density value.
    pub fn as_density(&self) -> Density {
        Density {
            space: Arc::clone(&self.space),
            values: self.density.clone(),
        }
    }
}

/// A probability density on a strategy space: nonnegative values integrating
/// to 1 under the space's quadrature.
#[derive(Debug, Clone, Serialize)]
pub struct Density {
    space: Arc<StrategySpace>,
    values: Vec<f64>,
}

impl Density {
    /// Validates nonnegativity and normalization (within [`DENSITY_TOL`]),
    /// then renormalizes exactly. Larger drift is an error, not a fixup.
    pub fn new(space: Arc<StrategySpace>, values: Vec<f64>) -> Result<Self, MeasureError> {
        if values.len() != space.len() {
            return Err(MeasureError::LengthMismatch {
                points: space.len(),
                weights: values.len(),
            });
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(MeasureError::NonFinite(i, v));
            }
            if v < 0.0 {
                return Err(MeasureError::NegativeDensity(i, v));
            }
        }
        let mass = space.integrate(&values);
        if (mass - 1.0).abs() > DENSITY_TOL {
            return Err(MeasureError::NotNormalized(mass, DENSITY_TOL));
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(Self { space, values })
    }

    /// Normalizes arbitrary nonnegative values into a density.
    pub fn from_unnormalized(
        space: Arc<StrategySpace>,
        values: Vec<f64>,
    ) -> Result<Self, MeasureError> {
        if values.len() != space.len() {
            return Err(MeasureError::LengthMismatch {
                points: space.len(),
                weights: values.len(),
            });
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(MeasureError::NonFinite(i, v));
            }
            if v < 0.0 {
                return Err(MeasureError::NegativeDensity(i, v));
            }
        }
        let mass = space.integrate(&values);
        if !(mass.is_finite() && mass > 0.0) {
            return Err(MeasureError::NotNormalized(mass, DENSITY_TOL));
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(Self { space, values })
    }

    pub fn space(&self) -> &Arc<StrategySpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Expectation of a per-point function under this density.
    pub fn expect(&self, values: &[f64]) -> f64 {
        self.space
            .weights()
            .iter()
            .zip(self.values.iter().zip(values))
            .map(|(w, (p, v))| w * p * v)
            .sum()
    }
}

/// Numerically stable log(sum(exp(x_i))) with max subtraction.
pub fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms
        .clone()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = terms.map(|x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Relative entropy D_KL(p|q) = sum w_i p_i log(p_i/q_i), with 0 log 0 := 0.
///
/// p having mass where q vanishes is a distinct error so callers must handle
/// the infinite case explicitly.
pub fn kl(p: &Density, q: &Density) -> Result<f64, MeasureError> {
    if !same_space(&p.space, &q.space) {
        return Err(MeasureError::SpaceMismatch);
    }
    let mut acc = 0.0;
    for (i, ((&w, &pi), &qi)) in p
        .space
        .weights()
        .iter()
        .zip(p.values.iter())
        .zip(q.values.iter())
        .enumerate()
    {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(MeasureError::InfiniteDivergence(i));
            }
            acc += w * pi * (pi.ln() - qi.ln());
        }
    }
    // Gibbs' inequality: exact zero for p == q, clamp away roundoff noise
    Ok(acc.max(0.0))
}

/// Jeffreys divergence D_J(p,q) = D_KL(p|q) + D_KL(q|p).
pub fn jeffreys(p: &Density, q: &Density) -> Result<f64, MeasureError> {
    Ok(kl(p, q)? + kl(q, p)?)
}

/// Total variation distance: (1/2) sum w_i |p_i - q_i|, in [0, 1].
pub fn tv(p: &Density, q: &Density) -> Result<f64, MeasureError> {
    if !same_space(&p.space, &q.space) {
        return Err(MeasureError::SpaceMismatch);
    }
    let sum: f64 = p
        .space
        .weights()
        .iter()
        .zip(p.values.iter().zip(q.values.iter()))
        .map(|(w, (a, b))| w * (a - b).abs())
        .sum();
    Ok(0.5 * sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit2() -> Arc<StrategySpace> {
        StrategySpace::finite(2).unwrap()
    }

    fn dens(space: &Arc<StrategySpace>, v: &[f64]) -> Density {
        Density::new(Arc::clone(space), v.to_vec()).unwrap()
    }

    #[test]
    fn normalize_uniform_potential() {
        let s = unit2();
        let r = ReferenceMeasure::normalize(&[0.0, 0.0], Arc::clone(&s)).unwrap();
        assert_abs_diff_eq!(r.potential()[0], 2.0f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(r.potential()[1], 2.0f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(r.density()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(r.density()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn normalize_is_shift_invariant() {
        let s = unit2();
        let a = ReferenceMeasure::normalize(&[0.0, 0.0], Arc::clone(&s)).unwrap();
        let b = ReferenceMeasure::normalize(&[7.3, 7.3], Arc::clone(&s)).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(a.density()[i], b.density()[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn normalize_asymmetric_potential() {
        // e^0 / (e^0 + e^{-log 3}) = 1 / (1 + 1/3) = 0.75
        let s = unit2();
        let r = ReferenceMeasure::normalize(&[0.0, 3.0f64.ln()], Arc::clone(&s)).unwrap();
        assert_abs_diff_eq!(r.density()[0], 0.75, epsilon = 1e-14);
        assert_abs_diff_eq!(r.density()[1], 0.25, epsilon = 1e-14);
    }

    #[test]
    fn normalize_is_idempotent() {
        let s = unit2();
        let r = ReferenceMeasure::normalize(&[0.3, -1.2], Arc::clone(&s)).unwrap();
        let r2 = ReferenceMeasure::normalize(r.potential(), Arc::clone(&s)).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(r.potential()[i], r2.potential()[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_non_finite() {
        let s = unit2();
        assert!(ReferenceMeasure::normalize(&[f64::NAN, 0.0], s).is_err());
    }

    #[test]
    fn kl_identity_is_zero() {
        let s = unit2();
        let p = dens(&s, &[0.3, 0.7]);
        assert_eq!(kl(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_two_term_value() {
        let s = unit2();
        let p = dens(&s, &[0.5, 0.5]);
        let q = dens(&s, &[0.25, 0.75]);
        let expected = 0.5 * 2.0f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert_abs_diff_eq!(kl(&p, &q).unwrap(), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(kl(&p, &q).unwrap(), 0.14384, epsilon = 1e-5);
    }

    #[test]
    fn kl_single_surviving_term() {
        let s = unit2();
        let p = dens(&s, &[1.0, 0.0]);
        let q = dens(&s, &[0.5, 0.5]);
        assert_abs_diff_eq!(kl(&p, &q).unwrap(), 2.0f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn kl_infinite_is_error() {
        let s = unit2();
        let p = dens(&s, &[0.5, 0.5]);
        let q = dens(&s, &[1.0, 0.0]);
        assert!(matches!(
            kl(&p, &q),
            Err(MeasureError::InfiniteDivergence(1))
        ));
    }

    #[test]
    fn kl_space_mismatch() {
        let p = dens(&unit2(), &[0.5, 0.5]);
        let q = dens(&StrategySpace::finite(3).unwrap(), &[0.5, 0.25, 0.25]);
        assert!(matches!(kl(&p, &q), Err(MeasureError::SpaceMismatch)));
    }

    #[test]
    fn jeffreys_value_and_symmetry() {
        let s = unit2();
        let p = dens(&s, &[0.5, 0.5]);
        let q = dens(&s, &[0.25, 0.75]);
        let j = jeffreys(&p, &q).unwrap();
        assert_abs_diff_eq!(j, 0.14384 + 0.13081, epsilon = 1e-4);
        assert_eq!(j, jeffreys(&q, &p).unwrap());
        assert_eq!(jeffreys(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn tv_values() {
        let s = unit2();
        let p = dens(&s, &[0.5, 0.5]);
        let q = dens(&s, &[0.25, 0.75]);
        assert_abs_diff_eq!(tv(&p, &q).unwrap(), 0.25, epsilon = 1e-15);
        assert_eq!(tv(&p, &p).unwrap(), 0.0);
        let a = dens(&s, &[1.0, 0.0]);
        let b = dens(&s, &[0.0, 1.0]);
        assert_abs_diff_eq!(tv(&a, &b).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn density_rejects_denormalized() {
        let s = unit2();
        assert!(matches!(
            Density::new(Arc::clone(&s), vec![0.6, 0.6]),
            Err(MeasureError::NotNormalized(..))
        ));
        assert!(matches!(
            Density::new(s, vec![-0.1, 1.1]),
            Err(MeasureError::NegativeDensity(..))
        ));
    }

    #[test]
    fn grid_weights_are_cell_volumes() {
        let g = StrategySpace::grid_1d(0.0, 1.0, 4).unwrap();
        assert_eq!(g.weights(), &[0.25; 4]);
        assert_abs_diff_eq!(g.points()[0][0], 0.125, epsilon = 1e-15);
        // uniform density on the grid has value 1 everywhere
        let d = Density::new(Arc::clone(&g), vec![1.0; 4]).unwrap();
        assert_abs_diff_eq!(g.integrate(d.values()), 1.0, epsilon = 1e-15);
    }
}
