use num_complex::Complex64 as C64;
use proptest::prelude::*;

use tfqkd::bounds::{binary_entropy, chernoff_delta, hoeffding_delta, Tail};
use tfqkd::channel::{arm_transmissivity, click_stats, PhysicalParams};
use tfqkd::decoy::{q_intensity_given_fock, q_intensity_joint, IntensityModel};
use tfqkd::fock::FockVector;
use tfqkd::keyrate::{asymptotic_key_rate, bloch_ellipse_max, generalized_bloch_bound, phase_error_rate};

fn amp(max_mean: f64) -> impl Strategy<Value = C64> {
    (0.0..max_mean, 0.0..std::f64::consts::TAU).prop_map(|(m, th): (f64, f64)| C64::from_polar(m.sqrt(), th))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beam_splitter_preserves_norm(a in amp(0.5), b in amp(0.5), theta in 0.0..std::f64::consts::FRAC_PI_2) {
        let s = FockVector::coherent(a, 10).tensor(&FockVector::coherent(b, 10));
        let out = s.beam_splitter_with(0, 1, theta.cos(), theta.sin()).unwrap();
        // leakage carries the inputs' own truncation plus what the splitter pushes out
        prop_assert!((out.norm_sqr() + out.leakage() - s.leakage() - s.norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn loss_composes(a in amp(0.3), e1 in 0.0..1.0f64, e2 in 0.0..1.0f64) {
        let twice = FockVector::coherent(a, 8).loss_channel(0, e1).unwrap().loss_channel(0, e2).unwrap();
        let once = FockVector::coherent(a, 8).loss_channel(0, e1 * e2).unwrap();
        let d2 = twice.occupation_distribution(&[0]).unwrap();
        for (k, p) in once.occupation_distribution(&[0]).unwrap() {
            prop_assert!((p - d2.get(&k).copied().unwrap_or(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn intensity_posteriors_normalize(
        p0 in 0.05..0.9f64, p1 in 0.05..0.9f64, pt in 0.05..1.0f64,
        na in 0usize..6, nb in 0usize..6,
    ) {
        let s = p0 + p1 + 0.1;
        let m = IntensityModel { intensities: [0.02, 0.005, 0.0], probs: [p0 / s, p1 / s, 0.1 / s], p_test: pt, p_z_code: 0.5 };
        let joint: f64 = (0..9).map(|k| q_intensity_joint(k / 3, k % 3, &m)).sum();
        prop_assert!((joint - 1.0).abs() < 1e-12);
        let post: f64 = (0..9).map(|k| q_intensity_given_fock(k / 3, k % 3, na, nb, &m).unwrap_or(0.0)).sum();
        prop_assert!((post - 1.0).abs() < 1e-9);
    }

    #[test]
    fn clicks_are_probabilities(phi in -10.0..10.0f64, ma in 0.0..0.1f64, mb in 0.0..0.1f64) {
        let c = click_stats(phi, ma, mb, &PhysicalParams::default());
        let sum = c.p_t(1) + c.p_t(2) + c.p_none;
        prop_assert!((sum - 1.0).abs() < 1e-12);
        prop_assert!(c.p_t(1) >= 0.0 && c.p_t(2) >= 0.0);
    }

    #[test]
    fn transmission_decreases(l in 0.0..800.0f64, dl in 0.1..100.0f64) {
        let p = PhysicalParams::default();
        prop_assert!(arm_transmissivity(&p.with_distance(l + dl)) < arm_transmissivity(&p.with_distance(l)));
    }

    #[test]
    fn phase_error_grows_with_bias(e in 0.0..0.3f64, d in 0.0..0.2f64, dd in 1e-4..0.1f64) {
        prop_assert!(phase_error_rate(e, d + dd).unwrap() >= phase_error_rate(e, d).unwrap());
        prop_assert!(phase_error_rate(e, d).unwrap() >= e - 1e-15);
    }

    #[test]
    fn entropy_symmetric(x in 0.0..1.0f64) {
        prop_assert!((binary_entropy(x).unwrap() - binary_entropy(1.0 - x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn deviations_shrink_with_trials(n in 1.0..1e6f64, eps in 1e-12..0.5f64, p in 0.01..0.99f64) {
        prop_assert!(hoeffding_delta(4.0 * n, eps).unwrap() < hoeffding_delta(n, eps).unwrap());
        for tail in [Tail::Upper, Tail::Lower] {
            let a = chernoff_delta(p, n, eps, tail).unwrap();
            let b = chernoff_delta(p, 4.0 * n, eps, tail).unwrap();
            prop_assert!(b.delta <= a.delta + 1e-12);
        }
    }

    #[test]
    fn bloch_bound_is_ellipse_max(pz in 0.0..1.0f64, q in 0.0..1.0f64) {
        let v = generalized_bloch_bound(pz, q);
        prop_assert!(v.abs() <= 1.0 + 1e-12);
        prop_assert!((v - bloch_ellipse_max(pz, q)).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rate_decreases_with_distance(l in 50.0..600.0f64) {
        let p = PhysicalParams::default();
        let mu = p.intensities[0];
        let near = asymptotic_key_rate(mu, 1, &p.with_distance(l)).unwrap().rate;
        let far = asymptotic_key_rate(mu, 1, &p.with_distance(l + 25.0)).unwrap().rate;
        prop_assert!(far < near);
    }
}
