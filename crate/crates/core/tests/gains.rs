mod common;

use std::f64::consts::PI;

use common::{oracle_gain, random_context, rel_err, OracleGrid, PhasePrior};
use phasestsa::gains::{
    gain_known_phase, gain_phase_blind, gain_uncertain_phase, gain_uncertain_phase_bessel, CostParams,
    GainContext, DEFAULT_QUADRATURE_POINTS,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn oracle_is_self_consistent_under_refinement() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let fine = OracleGrid { h: 1.0 / 48.0, t_lo: -13.0, t_hi: 4.0, phase_nodes: 768 };
    for _ in 0..10 {
        let c = random_context(&mut rng);
        for prior in [PhasePrior::Known, PhasePrior::Uniform, PhasePrior::VonMises(3.0)] {
            let a = oracle_gain(&c, prior, &OracleGrid::default());
            let b = oracle_gain(&c, prior, &fine);
            assert!(rel_err(a, b) < 1e-9, "{c:?} {prior:?}: {a} vs {b}");
        }
    }
}

#[test]
fn oracle_reproduces_hand_derived_cases() {
    // known phase at ν = 0: 0.5·sqrt(2/π)
    let c = GainContext { zeta: 0.5, gamma: 1.0, mu: 0.5, alpha: 0.0, beta: 1.0, delta_theta: PI / 2.0, tau: 0.0 };
    let g = oracle_gain(&c, PhasePrior::Known, &OracleGrid::default());
    assert!(rel_err(g, 0.5 * (2.0 / PI).sqrt()) < 1e-10, "{g}");
    // uniform phase, second moment: Â² = ζ/(1+ζ) + (ζ/(1+ζ))² R²
    let c = GainContext { zeta: 1.0, gamma: 2.0, mu: 1.0, alpha: 0.0, beta: 2.0, delta_theta: 0.0, tau: 0.0 };
    let g = oracle_gain(&c, PhasePrior::Uniform, &OracleGrid::default());
    assert!(rel_err(g, 0.5f64.sqrt()) < 1e-10, "{g}");
}

#[test]
fn closed_forms_match_brute_force_posterior() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let grid = OracleGrid::default();
    let (mut worst_kp, mut worst_pb) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let c = random_context(&mut rng);
        let kp = gain_known_phase(&c).unwrap();
        let pb = gain_phase_blind(&c).unwrap();
        let e_kp = rel_err(kp, oracle_gain(&c, PhasePrior::Known, &grid));
        let e_pb = rel_err(pb, oracle_gain(&c, PhasePrior::Uniform, &grid));
        worst_kp = worst_kp.max(e_kp);
        worst_pb = worst_pb.max(e_pb);
        assert!(e_kp <= 1e-5, "known phase {c:?}: err {e_kp}");
        assert!(e_pb <= 1e-5, "phase blind {c:?}: err {e_pb}");
    }
    println!("worst relative error: known phase {worst_kp:e}, phase blind {worst_pb:e}");
}

#[test]
fn uncertain_phase_matches_brute_force_posterior() {
    let c = GainContext { zeta: 0.5, gamma: 4.0, mu: 1.0, alpha: 0.5, beta: 0.3, delta_theta: PI / 4.0, tau: 4.0 };
    let got = gain_uncertain_phase(&c, DEFAULT_QUADRATURE_POINTS).unwrap();
    let expect = oracle_gain(&c, PhasePrior::VonMises(4.0), &OracleGrid::default());
    assert!(rel_err(got, expect) <= 1e-5, "{got} vs {expect}");

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let tau = rng.gen_range(0.1..30.0);
        let c = random_context(&mut rng).with_phase(rng.gen_range(-PI..PI), tau);
        let got = gain_uncertain_phase(&c, DEFAULT_QUADRATURE_POINTS).unwrap();
        let expect = oracle_gain(&c, PhasePrior::VonMises(tau), &OracleGrid::default());
        assert!(rel_err(got, expect) <= 1e-5, "{c:?}: {got} vs {expect}");
    }
}

#[test]
fn uncertain_phase_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..50 {
        let c = random_context(&mut rng);
        let blind = gain_phase_blind(&c).unwrap();
        let flat = gain_uncertain_phase(&c.with_phase(c.delta_theta, 0.0), 256).unwrap();
        assert!(rel_err(flat, blind) <= 1e-6, "{c:?}: {flat} vs {blind}");
        let known = gain_known_phase(&c).unwrap();
        let sharp = gain_uncertain_phase(&c.with_phase(c.delta_theta, 1e6), 256).unwrap();
        assert!(rel_err(sharp, known) <= 1e-4, "{c:?}: {sharp} vs {known}");
    }
}

#[test]
fn bessel_phase_average_matches_brute_force_posterior() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..30 {
        let tau = rng.gen_range(0.0..30.0);
        let c = random_context(&mut rng).with_phase(rng.gen_range(-PI..PI), tau);
        let got = gain_uncertain_phase_bessel(&c).unwrap();
        let expect = oracle_gain(&c, PhasePrior::VonMises(tau), &OracleGrid::default());
        assert!(rel_err(got, expect) <= 1e-5, "{c:?}: {got} vs {expect}");
    }
}

#[test]
fn bessel_phase_average_is_the_trapezoid_limit() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let c = random_context(&mut rng).with_phase(rng.gen_range(-PI..PI), rng.gen_range(0.0..50.0));
        let trap = gain_uncertain_phase(&c, DEFAULT_QUADRATURE_POINTS).unwrap();
        let exact = gain_uncertain_phase_bessel(&c).unwrap();
        worst = worst.max(rel_err(exact, trap));
        assert!(rel_err(exact, trap) <= 2e-6, "{c:?}: {exact} vs {trap}");
    }
    println!("worst Bessel vs trapezoid: {worst:e}");
}

#[test]
fn bessel_phase_average_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for _ in 0..50 {
        let c = random_context(&mut rng);
        let flat = gain_uncertain_phase_bessel(&c.with_phase(c.delta_theta, 0.0)).unwrap();
        let blind = gain_phase_blind(&c).unwrap();
        assert!(rel_err(flat, blind) <= 1e-9, "{c:?}: {flat} vs {blind}");
        let sharp = gain_uncertain_phase_bessel(&c.with_phase(c.delta_theta, 1e6)).unwrap();
        let known = gain_known_phase(&c).unwrap();
        assert!(rel_err(sharp, known) <= 1e-4, "{c:?}: {sharp} vs {known}");
    }
    // large a-posteriori SNR keeps the integral finite and the gain sane
    for gamma in [1e3, 1e5, 1e7] {
        let c = GainContext { zeta: gamma, gamma, mu: 1.0, alpha: 0.2, beta: 0.8, delta_theta: 0.3, tau: 4.0 };
        let g = gain_uncertain_phase_bessel(&c).unwrap();
        assert!((0.9..1.1).contains(&g), "gamma {gamma}: {g}");
    }
}

#[test]
fn starting_resolution_does_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let c = random_context(&mut rng).with_phase(rng.gen_range(-PI..PI), rng.gen_range(0.0..50.0));
        let a = gain_uncertain_phase(&c, 64).unwrap();
        let b = gain_uncertain_phase(&c, 1024).unwrap();
        assert!(rel_err(a, b) <= 2e-6, "{c:?}: {a} vs {b}");
    }
}

#[test]
fn phase_blind_monotone_in_cost_exponents() {
    let alphas: Vec<f64> = (0..10).map(|i| 0.1 + 0.7 * i as f64 / 9.0).collect();
    let betas: Vec<f64> = (0..10).map(|i| 0.2 + 1.3 * i as f64 / 9.0).collect();
    for gamma in [0.1, 1.0, 2.0, 10.0, 100.0] {
        let g = |alpha, beta| {
            gain_phase_blind(&GainContext { zeta: 1.0, gamma, mu: 1.0, alpha, beta, delta_theta: 0.0, tau: 0.0 })
                .unwrap()
        };
        for i in 0..10 {
            for j in 0..10 {
                if i + 1 < 10 {
                    assert!(g(alphas[i + 1], betas[j]) < g(alphas[i], betas[j]), "gamma={gamma} alpha step {i} beta {j}");
                }
                if j + 1 < 10 {
                    assert!(g(alphas[i], betas[j + 1]) > g(alphas[i], betas[j]), "gamma={gamma} beta step {j} alpha {i}");
                }
            }
        }
    }
}

#[test]
fn known_phase_non_increasing_in_phase_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let c = GainContext { gamma: 25.0, ..random_context(&mut rng) };
        let mut prev = f64::INFINITY;
        for i in 0..=64 {
            let d = PI * i as f64 / 64.0;
            let g = gain_known_phase(&c.with_phase(d, 0.0)).unwrap();
            assert!(g <= prev * (1.0 + 1e-12), "{c:?} at {d}: {g} > {prev}");
            // symmetric in the sign of the deviation
            let m = gain_known_phase(&c.with_phase(-d, 0.0)).unwrap();
            assert!(rel_err(m, g) < 1e-12);
            prev = g;
        }
    }
}

#[test]
fn beta_order_baseline_is_a_fixed_parameter_case() {
    // α = 0, β = μ = 0.5 is the β-order phase-aware estimator; with a flat
    // phase prior it must agree with the phase-blind law
    let c = GainContext { zeta: 2.0, gamma: 3.0, mu: 0.5, alpha: 0.0, beta: 0.5, delta_theta: 0.4, tau: 0.0 };
    let pb = gain_phase_blind(&c).unwrap();
    let up = gain_uncertain_phase(&c, 256).unwrap();
    assert!(rel_err(up, pb) < 1e-6);
}

proptest! {
    #[test]
    fn gains_are_scale_free(r in 0.01f64..100.0, sigma2 in 1e-6f64..1e6, c in 1e-3f64..1e3,
                            zeta in 0.01f64..100.0, dtheta in -3.1f64..3.1) {
        let cost = CostParams { mu: 1.0, alpha: 0.3, beta: 0.7 };
        let base = GainContext::from_observation(r, sigma2, zeta, cost).with_phase(dtheta, 2.0);
        let scaled = GainContext::from_observation(c * r, c * c * sigma2, zeta, cost).with_phase(dtheta, 2.0);
        for f in [gain_phase_blind, gain_known_phase] {
            let a = f(&base).unwrap();
            let b = f(&scaled).unwrap();
            prop_assert!(rel_err(a, b) < 1e-9, "{} vs {}", a, b);
        }
    }
}
