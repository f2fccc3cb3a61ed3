use pepsim::analysis::{
    beta_limit, gain_table_upgrade, histogram, subtract_counts, uniform_edges, upper_limit_counts,
    LimitFactors, UpgradeStep,
};
use pepsim::physics::{
    attenuation_fraction, electron_count, fwhm_to_sigma, ElectronBudget, Material, FWHM_PER_SIGMA,
};
use pepsim::simulate::{expected_signal_count, EventRecord, Origin};
use proptest::prelude::*;

fn rel_eq(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn budget() -> ElectronBudget {
    ElectronBudget::from_days(100.0, 40.0).unwrap()
}

proptest! {
    #[test]
    fn attenuation_is_multiplicative(e in 1.0f64..100.0, a in 0.0f64..0.01, b in 0.0f64..0.01) {
        let cu = Material::copper();
        let whole = attenuation_fraction(e, cu, a + b).unwrap();
        let parts = attenuation_fraction(e, cu, a).unwrap() * attenuation_fraction(e, cu, b).unwrap();
        prop_assert!(rel_eq(whole, parts, 1e-12));
        prop_assert!((0.0..=1.0).contains(&whole));
    }

    #[test]
    fn attenuation_decreases_with_path(e in 1.0f64..100.0, a in 0.0f64..0.01, d in 1e-6f64..0.01) {
        let si = Material::silicon();
        prop_assert!(attenuation_fraction(e, si, a + d).unwrap() < attenuation_fraction(e, si, a).unwrap());
    }

    #[test]
    fn electron_count_is_bilinear(i in 0.0f64..1e3, t in 0.0f64..1e8, k in 0.1f64..10.0) {
        let n = electron_count(i, t).unwrap();
        prop_assert!(rel_eq(electron_count(k * i, t).unwrap(), k * n, 1e-12));
        prop_assert!(rel_eq(electron_count(i, k * t).unwrap(), k * n, 1e-12));
    }

    #[test]
    fn fwhm_sigma_inverse(f in 1e-3f64..1e6) {
        prop_assert!(rel_eq(fwhm_to_sigma(f).unwrap() * FWHM_PER_SIGMA, f, 1e-14));
    }

    #[test]
    fn signal_expectation_is_linear(beta in 0.0f64..1e-20, acc in 1e-4f64..0.5, k in 0.1f64..10.0) {
        let s = expected_signal_count(beta, &budget(), 0.1, acc, 0.99);
        prop_assert!(rel_eq(expected_signal_count(beta, &budget(), 0.1, k * acc, 0.99), k * s, 1e-12));
        prop_assert!(rel_eq(expected_signal_count(k * beta, &budget(), 0.1, acc, 0.99), k * s, 1e-12));
    }

    #[test]
    fn limit_monotone_in_every_factor(
        n_x in 0.1f64..1e4,
        cap in 1e-3f64..1e6,
        acc in 1e-4f64..0.5,
        eff in 1e-3f64..1.0,
        k in 1.01f64..10.0,
    ) {
        let f = LimitFactors { capture_factor: cap, acceptance: acc, detection_efficiency: eff };
        let base = beta_limit(n_x, &budget(), f).unwrap().beta2_over_2_upper;
        prop_assert!(beta_limit(k * n_x, &budget(), f).unwrap().beta2_over_2_upper > base);
        let bigger = [
            LimitFactors { capture_factor: k * cap, ..f },
            LimitFactors { acceptance: k * acc, ..f },
            LimitFactors { detection_efficiency: k * eff, ..f },
        ];
        for g in bigger {
            prop_assert!(beta_limit(n_x, &budget(), g).unwrap().beta2_over_2_upper < base);
        }
        prop_assert!(rel_eq(beta_limit(k * n_x, &budget(), f).unwrap().beta2_over_2_upper, k * base, 1e-12));
    }

    #[test]
    fn upper_limit_never_below_clamped_excess(excess in -1e4f64..1e4, sigma in 0.0f64..1e3, c in 0.0f64..5.0) {
        let u = upper_limit_counts(excess, sigma, c).unwrap();
        prop_assert!(u >= excess.max(0.0));
        prop_assert!(u >= c * sigma);
    }

    #[test]
    fn subtraction_antisymmetry(on in 0u64..100_000, off in 0u64..100_000, r in 0.01f64..100.0) {
        let fwd = subtract_counts(on, off, r);
        let rev = subtract_counts(off, on, 1.0 / r);
        prop_assert!((fwd.excess + r * rev.excess).abs() <= 1e-9 * (on + off).max(1) as f64 * r.max(1.0));
        prop_assert!(fwd.sigma >= 0.0);
    }

    #[test]
    fn gain_total_is_product_of_rows(
        steps in proptest::collection::vec((0.1f64..10.0, 0.01f64..10.0), 1..6)
    ) {
        let steps: Vec<_> = steps
            .iter()
            .enumerate()
            .map(|(i, &(s, b))| UpgradeStep::new(&format!("step {i}"), s, b))
            .collect();
        let g = gain_table_upgrade(&steps).unwrap();
        let p: f64 = g.rows.iter().map(|r| r.sensitivity_gain).product();
        prop_assert!(rel_eq(g.total_sensitivity, p, 1e-12));
        let s: f64 = g.rows.iter().map(|r| r.signal_factor).product();
        prop_assert!(rel_eq(g.total_signal, s, 1e-12));
    }

    #[test]
    fn histogram_conserves_events(energies in proptest::collection::vec(0.0f64..25.0, 0..500)) {
        let events: Vec<_> = energies
            .iter()
            .map(|&e| EventRecord {
                time_s: 0.0,
                energy_kev: e,
                cell_id: 0,
                origin: Origin::Background,
                vetoed: false,
                correlated: false,
                coincidence_ns: None,
            })
            .collect();
        let h = histogram(&events, &uniform_edges(1.0, 20.0, 190).unwrap(), false).unwrap();
        prop_assert_eq!(h.total() + h.underflow + h.overflow, events.len() as u64);
        let r = h.rebin(7).unwrap();
        prop_assert_eq!(r.total(), h.total());
    }
}
