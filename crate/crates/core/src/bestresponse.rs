//! Entropic best-response maps with numerically stable normalization, plus
//! the explicit Gibbs-bound and TV-Lipschitz certificates attached to them.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measure::{kl, log_sum_exp, Density, MeasureError, ReferenceMeasure};
use crate::objective::{expect_space, Objective, ObjectiveError};

#[derive(Debug, Error)]
pub enum BestResponseError {
    #[error("sigma must be strictly positive, got {0}")]
    InvalidSigma(f64),
    #[error("alpha must be strictly positive, got {0}")]
    InvalidAlpha(f64),
    #[error("flat derivative produced a non-finite entry at index {0}")]
    NonFiniteDerivative(usize),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Regularization strength sigma and learning rate alpha.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationParams {
    pub sigma: f64,
    pub alpha: f64,
}

impl RegularizationParams {
    pub fn new(sigma: f64, alpha: f64) -> Result<Self, BestResponseError> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(BestResponseError::InvalidSigma(sigma));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(BestResponseError::InvalidAlpha(alpha));
        }
        Ok(Self { sigma, alpha })
    }

    /// The inverse-temperature factor 2/sigma^2 tilting the Gibbs densities.
    pub fn beta(&self) -> f64 {
        2.0 / (self.sigma * self.sigma)
    }
}

/// A best-response density together with the log-partition of its
/// unnormalized Gibbs form. The log-partition feeds the bilinear
/// Nikaido-Isoda closed form.
#[derive(Debug, Clone)]
pub struct BestResponse {
    pub density: Density,
    pub log_z: f64,
}

/// Conservative bound constants derived from the declared derivative bounds:
/// Gibbs envelope ratios and TV-Lipschitz constants of the response maps.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundsCertificate {
    pub k_psi: f64,
    pub big_k_psi: f64,
    pub k_phi: f64,
    pub big_k_phi: f64,
    pub l_psi: f64,
    pub l_phi: f64,
    /// L + L' = (l_psi + l_phi)/2; an undamped fixed-point iteration is a
    /// certified contraction when this is below 1.
    pub tv_lipschitz_sum: f64,
    /// True when the exponentials overflowed; the certificate then carries
    /// saturated values and certifies nothing.
    pub saturated: bool,
}

/// Evaluates the certificate formulas: K = exp(4 C / sigma^2), k = 1/K,
/// L_map = (2/sigma^2) K (1 + K), and the TV-Lipschitz sum (L_psi + L_phi)/2.
pub fn bounds_certificate(
    c_nu: f64,
    c_mu: f64,
    sigma: f64,
) -> Result<BoundsCertificate, BestResponseError> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(BestResponseError::InvalidSigma(sigma));
    }
    let s2 = sigma * sigma;
    let big_k_psi = (4.0 * c_nu / s2).exp();
    let big_k_phi = (4.0 * c_mu / s2).exp();
    let l_psi = (2.0 / s2) * big_k_psi * (1.0 + big_k_psi);
    let l_phi = (2.0 / s2) * big_k_phi * (1.0 + big_k_phi);
    let saturated = !(big_k_psi.is_finite() && big_k_phi.is_finite() && l_psi.is_finite() && l_phi.is_finite());
    Ok(BoundsCertificate {
        k_psi: 1.0 / big_k_psi,
        big_k_psi,
        k_phi: 1.0 / big_k_phi,
        big_k_phi,
        l_psi,
        l_phi,
        tv_lipschitz_sum: 0.5 * (l_psi + l_phi),
        saturated,
    })
}

/// The minimizing best response: a Gibbs density proportional to
/// exp(-beta * dF/dnu(nu, mu, x) - U_pi(x)), normalized in log domain.
pub fn best_response_nu(
    oracle: &dyn Objective,
    nu: &Density,
    mu: &Density,
    params: &RegularizationParams,
    reference: &ReferenceMeasure,
) -> Result<BestResponse, BestResponseError> {
    expect_space(nu, oracle.x_space())?;
    expect_space(mu, oracle.y_space())?;
    let d = oracle.dnu(nu, mu);
    gibbs_tilt(&d, -params.beta(), reference)
}

/// The maximizing best response, proportional to
/// exp(+beta * dF/dmu(nu, mu, y) - U_rho(y)).
pub fn best_response_mu(
    oracle: &dyn Objective,
    nu: &Density,
    mu: &Density,
    params: &RegularizationParams,
    reference: &ReferenceMeasure,
) -> Result<BestResponse, BestResponseError> {
    expect_space(nu, oracle.x_space())?;
    expect_space(mu, oracle.y_space())?;
    let d = oracle.dmu(nu, mu);
    gibbs_tilt(&d, params.beta(), reference)
}

/// Normalizes exp(sign_beta * d_i - U_i) against the reference's quadrature,
/// entirely in log domain with max subtraction. Summation order is ascending
/// index so results are bitwise reproducible.
pub(crate) fn gibbs_tilt(
    derivative: &[f64],
    sign_beta: f64,
    reference: &ReferenceMeasure,
) -> Result<BestResponse, BestResponseError> {
    for (i, &d) in derivative.iter().enumerate() {
        if !d.is_finite() {
            return Err(BestResponseError::NonFiniteDerivative(i));
        }
    }
    let space = reference.space();
    let logits: Vec<f64> = derivative
        .iter()
        .zip(reference.potential())
        .map(|(&d, &u)| sign_beta * d - u)
        .collect();
    let log_z = log_sum_exp(
        logits
            .iter()
            .zip(space.weights())
            .map(|(&l, &w)| l + w.ln()),
    );
    let values: Vec<f64> = logits.iter().map(|&l| (l - log_z).exp()).collect();
    let density = Density::from_unnormalized(Arc::clone(space), values)?;
    Ok(BestResponse { density, log_z })
}

/// The Lyapunov function of the flow: KL(nu|Psi) + KL(mu|Phi). Zero exactly
/// at the fixed point, i.e. at the regularized equilibrium.
pub fn lyapunov(
    nu: &Density,
    mu: &Density,
    psi: &Density,
    phi: &Density,
) -> Result<f64, MeasureError> {
    Ok(kl(nu, psi)? + kl(mu, phi)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::StrategySpace;
    use crate::objective::{random_density, seeded_rng, BilinearObjective};
    use approx::assert_abs_diff_eq;

    fn mp() -> BilinearObjective {
        let x = StrategySpace::finite(2).unwrap();
        let y = StrategySpace::finite(2).unwrap();
        BilinearObjective::new(vec![vec![1.0, -1.0], vec![-1.0, 1.0]], x, y).unwrap()
    }

    fn zero_game() -> BilinearObjective {
        let x = StrategySpace::finite(2).unwrap();
        let y = StrategySpace::finite(2).unwrap();
        BilinearObjective::new(vec![vec![0.0, 0.0], vec![0.0, 0.0]], x, y).unwrap()
    }

    fn dens(space: &Arc<StrategySpace>, v: &[f64]) -> Density {
        Density::new(Arc::clone(space), v.to_vec()).unwrap()
    }

    #[test]
    fn zero_derivative_returns_reference() {
        let obj = zero_game();
        let pi = ReferenceMeasure::normalize(&[0.0, 3.0f64.ln()], Arc::clone(obj.x_space())).unwrap();
        let params = RegularizationParams::new(1.0, 1.0).unwrap();
        let nu = dens(obj.x_space(), &[0.9, 0.1]);
        let mu = dens(obj.y_space(), &[0.2, 0.8]);
        let br = best_response_nu(&obj, &nu, &mu, &params, &pi).unwrap();
        for (a, b) in br.density.values().iter().zip(pi.density()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn matching_pennies_uniform_mu_gives_uniform_response() {
        let obj = mp();
        let pi = ReferenceMeasure::uniform(Arc::clone(obj.x_space()));
        let params = RegularizationParams::new(1.0, 1.0).unwrap();
        let nu = dens(obj.x_space(), &[0.9, 0.1]);
        let mu = dens(obj.y_space(), &[0.5, 0.5]);
        let br = best_response_nu(&obj, &nu, &mu, &params, &pi).unwrap();
        assert_abs_diff_eq!(br.density.values()[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn matching_pennies_softmax_value() {
        // sigma = sqrt(2) so beta = 1; mu = (0.3, 0.7) gives dnu = (-0.4, 0.4)
        // and Psi = softmax(0.4, -0.4)
        let obj = mp();
        let pi = ReferenceMeasure::uniform(Arc::clone(obj.x_space()));
        let params = RegularizationParams::new(2.0f64.sqrt(), 1.0).unwrap();
        let nu = dens(obj.x_space(), &[0.5, 0.5]);
        let mu = dens(obj.y_space(), &[0.3, 0.7]);
        let br = best_response_nu(&obj, &nu, &mu, &params, &pi).unwrap();
        let e = (0.8f64).exp();
        assert_abs_diff_eq!(br.density.values()[0], e / (1.0 + e), epsilon = 1e-12);
        assert_abs_diff_eq!(br.density.values()[0], 0.68997, epsilon = 1e-5);
        assert_abs_diff_eq!(br.density.values()[1], 0.31003, epsilon = 1e-5);
    }

    #[test]
    fn matching_pennies_mirror_response() {
        let obj = mp();
        let rho = ReferenceMeasure::uniform(Arc::clone(obj.y_space()));
        let params = RegularizationParams::new(2.0f64.sqrt(), 1.0).unwrap();
        let nu = dens(obj.x_space(), &[0.3, 0.7]);
        let mu = dens(obj.y_space(), &[0.5, 0.5]);
        let br = best_response_mu(&obj, &nu, &mu, &params, &rho).unwrap();
        assert_abs_diff_eq!(br.density.values()[0], 0.31003, epsilon = 1e-5);
        assert_abs_diff_eq!(br.density.values()[1], 0.68997, epsilon = 1e-5);
    }

    #[test]
    fn shift_invariance_of_tilt() {
        let obj = mp();
        let pi = ReferenceMeasure::uniform(Arc::clone(obj.x_space()));
        let mut rng = seeded_rng(21);
        let mu = random_density(obj.y_space(), &mut rng);
        let d = obj.dnu_of_mu(&mu);
        for &c in &[-1000.0, -3.7, 0.0, 12.0, 1000.0] {
            let shifted: Vec<f64> = d.iter().map(|x| x + c).collect();
            let a = gibbs_tilt(&d, -1.0, &pi).unwrap();
            let b = gibbs_tilt(&shifted, -1.0, &pi).unwrap();
            for (x, y) in a.density.values().iter().zip(b.density.values()) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn tiny_sigma_does_not_overflow() {
        let obj = mp();
        let pi = ReferenceMeasure::uniform(Arc::clone(obj.x_space()));
        let params = RegularizationParams::new(0.05, 1.0).unwrap();
        let nu = dens(obj.x_space(), &[0.5, 0.5]);
        let mu = dens(obj.y_space(), &[0.1, 0.9]);
        let br = best_response_nu(&obj, &nu, &mu, &params, &pi).unwrap();
        let total: f64 = br.density.values().iter().sum::<f64>();
        assert!(total.is_finite());
        assert_abs_diff_eq!(
            obj.x_space().integrate(br.density.values()),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn certificate_formulas() {
        // C = 0: K = k = 1, L = 4/sigma^2
        let c = bounds_certificate(0.0, 0.0, 2.0).unwrap();
        assert_abs_diff_eq!(c.big_k_psi, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.k_psi, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.l_psi, 1.0, epsilon = 1e-15); // 4/sigma^2 = 1
        assert!(!c.saturated);

        // C_nu = 1, sigma = 2: K = e, L = (1/2) e (1 + e)
        let c = bounds_certificate(1.0, 1.0, 2.0).unwrap();
        let e = std::f64::consts::E;
        assert_abs_diff_eq!(c.big_k_psi, e, epsilon = 1e-12);
        assert_abs_diff_eq!(c.l_psi, 0.5 * e * (1.0 + e), epsilon = 1e-12);
        assert_abs_diff_eq!(c.l_psi, 5.0537, epsilon = 1e-4);
        assert_abs_diff_eq!(c.tv_lipschitz_sum, 0.5 * (c.l_psi + c.l_phi), epsilon = 1e-15);
    }

    #[test]
    fn certificate_monotone_in_sigma() {
        let mut prev = f64::INFINITY;
        for sigma in [0.5, 1.0, 2.0, 4.0, 8.0, 100.0] {
            let c = bounds_certificate(1.0, 1.0, sigma).unwrap();
            assert!(c.big_k_psi < prev);
            assert!(c.big_k_psi >= 1.0);
            prev = c.big_k_psi;
        }
    }

    #[test]
    fn certificate_saturates_for_tiny_sigma() {
        let c = bounds_certificate(10.0, 10.0, 1e-3).unwrap();
        assert!(c.saturated);
    }

    #[test]
    fn lyapunov_at_fixed_point_is_zero() {
        let obj = zero_game();
        let pi = ReferenceMeasure::uniform(Arc::clone(obj.x_space()));
        let rho = ReferenceMeasure::uniform(Arc::clone(obj.y_space()));
        let l = lyapunov(
            &pi.as_density(),
            &rho.as_density(),
            &pi.as_density(),
            &rho.as_density(),
        )
        .unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn lyapunov_zero_objective_is_kl_to_references() {
        let obj = zero_game();
        let pi = ReferenceMeasure::normalize(&[0.0, 3.0f64.ln()], Arc::clone(obj.x_space())).unwrap();
        let rho = ReferenceMeasure::uniform(Arc::clone(obj.y_space()));
        let params = RegularizationParams::new(1.0, 1.0).unwrap();
        let nu = dens(obj.x_space(), &[0.5, 0.5]);
        let mu = dens(obj.y_space(), &[0.5, 0.5]);
        let psi = best_response_nu(&obj, &nu, &mu, &params, &pi).unwrap();
        let phi = best_response_mu(&obj, &nu, &mu, &params, &rho).unwrap();
        let l = lyapunov(&nu, &mu, &psi.density, &phi.density).unwrap();
        let expected = kl(&nu, &pi.as_density()).unwrap() + kl(&mu, &rho.as_density()).unwrap();
        assert_abs_diff_eq!(l, expected, epsilon = 1e-13);
        assert!(l >= kl(&nu, &psi.density).unwrap());
    }

    #[test]
    fn gibbs_bounds_hold_on_random_pairs() {
        let obj = mp();
        let pi = ReferenceMeasure::uniform(Arc::clone(obj.x_space()));
        let rho = ReferenceMeasure::uniform(Arc::clone(obj.y_space()));
        let params = RegularizationParams::new(1.0, 1.0).unwrap();
        let cert = bounds_certificate(obj.bound_c_nu(), obj.bound_c_mu(), params.sigma).unwrap();
        let mut rng = seeded_rng(42);
        for _ in 0..500 {
            let nu = random_density(obj.x_space(), &mut rng);
            let mu = random_density(obj.y_space(), &mut rng);
            let psi = best_response_nu(&obj, &nu, &mu, &params, &pi).unwrap();
            for (p, r) in psi.density.values().iter().zip(pi.density()) {
                assert!(*p >= cert.k_psi * r - 1e-12);
                assert!(*p <= cert.big_k_psi * r + 1e-12);
            }
            let phi = best_response_mu(&obj, &nu, &mu, &params, &rho).unwrap();
            for (p, r) in phi.density.values().iter().zip(rho.density()) {
                assert!(*p >= cert.k_phi * r - 1e-12);
                assert!(*p <= cert.big_k_phi * r + 1e-12);
            }
        }
    }

    #[test]
    fn tv_lipschitz_bound_on_random_quadruples() {
        use crate::measure::tv;
        let obj = mp();
        let pi = ReferenceMeasure::uniform(Arc::clone(obj.x_space()));
        let params = RegularizationParams::new(1.0, 1.0).unwrap();
        let cert = bounds_certificate(obj.bound_c_nu(), obj.bound_c_mu(), params.sigma).unwrap();
        let l = 0.5 * cert.l_psi;
        let mut rng = seeded_rng(77);
        for _ in 0..200 {
            let nu = random_density(obj.x_space(), &mut rng);
            let nu2 = random_density(obj.x_space(), &mut rng);
            let mu = random_density(obj.y_space(), &mut rng);
            let mu2 = random_density(obj.y_space(), &mut rng);
            let a = best_response_nu(&obj, &nu, &mu, &params, &pi).unwrap();
            let b = best_response_nu(&obj, &nu2, &mu2, &params, &pi).unwrap();
            let lhs = tv(&a.density, &b.density).unwrap();
            let rhs = l * (tv(&nu, &nu2).unwrap() + tv(&mu, &mu2).unwrap());
            assert!(lhs <= rhs + 1e-12, "lhs {lhs} rhs {rhs}");
        }
    }

    #[test]
    fn variational_characterization_at_psi() {
        // Psi minimizes nu' -> <dnu, nu'> + (sigma^2/2) KL(nu'|pi)
        let obj = mp();
        let pi = ReferenceMeasure::uniform(Arc::clone(obj.x_space()));
        let params = RegularizationParams::new(1.3, 1.0).unwrap();
        let mut rng = seeded_rng(5);
        let nu = random_density(obj.x_space(), &mut rng);
        let mu = random_density(obj.y_space(), &mut rng);
        let d = obj.dnu_of_mu(&mu);
        let psi = best_response_nu(&obj, &nu, &mu, &params, &pi).unwrap();
        let objective = |cand: &Density| -> f64 {
            cand.expect(&d) + 0.5 * params.sigma * params.sigma * kl(cand, &pi.as_density()).unwrap()
        };
        let at_psi = objective(&psi.density);
        for _ in 0..50 {
            let cand = random_density(obj.x_space(), &mut rng);
            assert!(objective(&cand) >= at_psi - 1e-12);
        }
    }
}
