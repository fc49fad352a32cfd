//! Randomized property tests for the measure layer and the best-response
//! machinery. These exercise the algebraic identities and inequalities on
//! arbitrary densities rather than hand-picked examples.

use mfbr::*;
use proptest::prelude::*;
use std::sync::Arc;

fn space(n: usize) -> Arc<StrategySpace> {
    StrategySpace::finite(n).unwrap()
}

/// Strategy producing a positive density on an n-point space.
fn density_strategy(n: usize) -> impl Strategy<Value = Density> {
    prop::collection::vec(1e-6..1.0f64, n).prop_map(move |raw| {
        Density::from_unnormalized(space(n), raw).unwrap()
    })
}

fn pair_strategy(n: usize) -> impl Strategy<Value = (Density, Density)> {
    (density_strategy(n), density_strategy(n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn kl_nonnegative_and_zero_iff_equal((p, q) in pair_strategy(8)) {
        let d = kl(&p, &q).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert_eq!(kl(&p, &p).unwrap(), 0.0);
        if d == 0.0 {
            prop_assert!(tv(&p, &q).unwrap() <= 1e-7);
        }
    }

    #[test]
    fn pinsker((p, q) in pair_strategy(8)) {
        let t = tv(&p, &q).unwrap();
        prop_assert!(t * t <= 0.5 * kl(&p, &q).unwrap() + 1e-15);
    }

    #[test]
    fn jeffreys_symmetric_and_dominates_kl((p, q) in pair_strategy(8)) {
        let j = jeffreys(&p, &q).unwrap();
        prop_assert_eq!(j, jeffreys(&q, &p).unwrap());
        prop_assert!(j + 1e-15 >= kl(&p, &q).unwrap());
        prop_assert!(j + 1e-15 >= kl(&q, &p).unwrap());
    }

    #[test]
    fn tv_is_a_metric((p, q) in pair_strategy(8), r in density_strategy(8)) {
        let pq = tv(&p, &q).unwrap();
        prop_assert_eq!(pq, tv(&q, &p).unwrap());
        prop_assert!(pq <= 1.0 + 1e-12);
        prop_assert!(pq <= tv(&p, &r).unwrap() + tv(&r, &q).unwrap() + 1e-15);
    }

    #[test]
    fn normalization_idempotent(raw in prop::collection::vec(1e-6..1.0f64, 8)) {
        let d = Density::from_unnormalized(space(8), raw).unwrap();
        let again = Density::from_unnormalized(Arc::clone(d.space()), d.values().to_vec()).unwrap();
        for (a, b) in d.values().iter().zip(again.values()) {
            prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
        let mass: f64 = d.space().integrate(d.values());
        prop_assert!((mass - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn log_sum_exp_matches_naive(terms in prop::collection::vec(-20.0..20.0f64, 1..16)) {
        let naive = terms.iter().map(|t| t.exp()).sum::<f64>().ln();
        let lse = log_sum_exp(terms.iter().cloned());
        prop_assert!((naive - lse).abs() <= 1e-12 * naive.abs().max(1.0));
    }

    #[test]
    fn log_sum_exp_shift_invariant(
        terms in prop::collection::vec(-5.0..5.0f64, 1..16),
        c in -500.0..500.0f64,
    ) {
        let base = log_sum_exp(terms.iter().cloned());
        let shifted = log_sum_exp(terms.iter().map(|t| t + c));
        prop_assert!((shifted - (base + c)).abs() <= 1e-9);
    }
}

fn random_kernel(n: usize, seed: u64) -> BilinearObjective {
    let mut rng = seeded_rng(seed);
    use rand::Rng;
    let kernel = (0..n)
        .map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    BilinearObjective::new(kernel, space(n), space(n)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gibbs_response_within_certificate_bounds(
        (nu, mu) in pair_strategy(6),
        seed in 0u64..1000,
        sigma in 0.8..3.0f64,
    ) {
        let obj = random_kernel(6, seed);
        let pi = ReferenceMeasure::uniform(space(6));
        let params = RegularizationParams::new(sigma, 1.0).unwrap();
        let cert = bounds_certificate(obj.bound_c_nu(), obj.bound_c_mu(), sigma).unwrap();
        prop_assume!(!cert.saturated);
        let psi = best_response_nu(&obj, &nu, &mu, &params, &pi).unwrap();
        for (&p, &r) in psi.density.values().iter().zip(pi.density()) {
            prop_assert!(p >= cert.k_psi * r - 1e-12);
            prop_assert!(p <= cert.big_k_psi * r + 1e-12);
        }
    }

    #[test]
    fn response_ignores_kernel_offset(
        (nu, mu) in pair_strategy(6),
        seed in 0u64..1000,
        c in -100.0..100.0f64,
    ) {
        let obj = random_kernel(6, seed);
        let shifted_kernel: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..6).map(|j| obj.kernel()[i][j] + c).collect())
            .collect();
        let shifted = BilinearObjective::new(shifted_kernel, space(6), space(6)).unwrap();
        let pi = ReferenceMeasure::uniform(space(6));
        let params = RegularizationParams::new(1.0, 1.0).unwrap();
        let a = best_response_nu(&obj, &nu, &mu, &params, &pi).unwrap();
        let b = best_response_nu(&shifted, &nu, &mu, &params, &pi).unwrap();
        prop_assert!(tv(&a.density, &b.density).unwrap() <= 1e-12);
    }

    #[test]
    fn euler_step_stays_on_the_simplex(
        (nu, mu) in pair_strategy(6),
        seed in 0u64..1000,
        tau in 1e-4..1.0f64,
    ) {
        let obj = random_kernel(6, seed);
        let refs = ReferencePair {
            pi: ReferenceMeasure::uniform(space(6)),
            rho: ReferenceMeasure::uniform(space(6)),
        };
        let params = RegularizationParams::new(1.0, 1.0).unwrap();
        let state = PairState { nu, mu, t: 0.0 };
        let cfg = FlowConfig {
            params,
            tau,
            scheme: Scheme::ExplicitEuler,
            t_end: 1.0,
            record_stride: 1,
        };
        let next = step_explicit_euler(&state, &obj, &refs, &cfg).unwrap();
        let mass: f64 = next.nu.space().integrate(next.nu.values());
        prop_assert!((mass - 1.0).abs() <= 1e-12);
        prop_assert!(next.nu.values().iter().all(|&v| v >= 0.0));
        prop_assert!((next.t - tau).abs() <= 1e-15);
    }
}

#[test]
fn pinsker_bulk_thousand_pairs() {
    let mut rng = seeded_rng(99);
    let s = space(16);
    for _ in 0..1000 {
        let p = random_density(&s, &mut rng);
        let q = random_density(&s, &mut rng);
        let t = tv(&p, &q).unwrap();
        assert!(t * t <= 0.5 * kl(&p, &q).unwrap() + 1e-15);
    }
}
