mod common;

use std::f64::consts::PI;

use common::*;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;
use trisopt::bench::{fmt_num, Experiment, ResultTable, Row, Scheme};
use trisopt::lift::{
    angles_from_beta, build_b, build_beta, build_d, effective_delta, lift_f, lift_w, quadratic_value,
};
use trisopt::par::{self, Execution};
use trisopt::surrogate::{g_lower_bound, h_upper_bound, m1_surrogate, m2_surrogate};
use trisopt::system::{effective_gain, rate_report, BeamformerSet, PowerAllocation};
use trisopt::C64;

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(64)
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn lifted_gains_agree(seed in 0u64..10_000, m in 1usize..6, n in 1usize..4) {
        let ch = channels(m, n, 2, seed % 50);
        let mut r = rng(seed);
        let f = random_ris(&mut r, m);
        let w = random_beamformers(&mut r, n, 2);
        let alpha = lift_f(&f);
        for k in 0..2 {
            let direct = effective_gain(&ch, k, &f, &w) / NOISE;
            let b = build_b(k, &ch, &w, NOISE).unwrap();
            let d = build_d(k, &ch, &f, NOISE).unwrap();
            let beta = lift_w(w.get(k));
            let via_alpha = alpha.as_vector().dot(&(&b * alpha.as_vector()));
            let via_beta = beta.dot(&(&d * &beta));
            let scale = direct.max(1e-300);
            prop_assert!((via_alpha - direct).abs() <= 1e-10 * scale);
            prop_assert!((via_beta - direct).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn spherical_vectors_have_unit_norm(theta in prop::collection::vec(-PI..PI, 1..8)) {
        prop_assert!((build_beta(&theta).norm() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn angle_inversion_round_trips(raw in prop::collection::vec(-1.0f64..1.0, 2..9)) {
        let v = DVector::from_vec(raw);
        prop_assume!(v.norm() > 1e-3);
        let beta = v.normalize();
        let back = build_beta(&angles_from_beta(&beta));
        prop_assert!((back - &beta).norm() <= 1e-10);
    }

    #[test]
    fn tangent_minorizes_gain(seed in 0u64..10_000) {
        let ch = channels(4, 2, 2, seed % 50);
        let mut r = rng(seed);
        let w = random_beamformers(&mut r, 2, 2);
        let b = build_b(0, &ch, &w, NOISE).unwrap();
        let prev = lift_f(&random_ris(&mut r, 4));
        let g = g_lower_bound(prev.as_vector(), &b);
        prop_assert!((g.eval(prev.as_vector()) - prev.as_vector().dot(&(&b * prev.as_vector()))).abs()
            <= 1e-10 * (1.0 + g.eval(prev.as_vector()).abs()));
        let x = lift_f(&random_ris(&mut r, 4));
        let exact = x.as_vector().dot(&(&b * x.as_vector()));
        prop_assert!(g.eval(x.as_vector()) <= exact + 1e-8 * (1.0 + exact.abs()));
    }

    #[test]
    fn product_majorant_is_tight_and_above(
        r_prev in 1.0f64..20.0, l_prev in 1.0f64..20.0, r in 1.0f64..20.0, l in 1.0f64..20.0,
    ) {
        let at_prev = h_upper_bound(r_prev, l_prev, r_prev, l_prev);
        prop_assert!((at_prev - (r_prev * l_prev - l_prev)).abs() <= 1e-10 * (1.0 + at_prev.abs()));
        prop_assert!(h_upper_bound(r, l, r_prev, l_prev) >= r * l - l - 1e-8);
    }

    #[test]
    fn angle_majorants_bracket_quadratic(seed in 0u64..10_000, n in 1usize..4) {
        let ch = channels(3, n, 1, seed % 50);
        let mut r = rng(seed);
        let f = random_ris(&mut r, 3);
        let d = build_d(0, &ch, &f, NOISE).unwrap();
        let delta = effective_delta(&d, n).value();
        let prev = random_theta(&mut r, 2 * n - 1);
        let theta = random_theta(&mut r, 2 * n - 1);
        let q = quadratic_value(&theta, &d);
        let tol = 1e-8 * (1.0 + delta);
        prop_assert!((m1_surrogate(&prev, &prev, &d, delta) - quadratic_value(&prev, &d)).abs() <= tol);
        prop_assert!(m1_surrogate(&theta, &prev, &d, delta) >= q - tol);
        prop_assert!(m2_surrogate(&theta, &prev, &d, delta) >= -q - tol);
    }

    #[test]
    fn beamformer_phase_is_irrelevant(seed in 0u64..10_000, phi in -PI..PI) {
        let ch = channels(4, 3, 3, seed % 50);
        let mut r = rng(seed);
        let f = random_ris(&mut r, 4);
        let w = random_beamformers(&mut r, 3, 3);
        let rotated = BeamformerSet::from_raw(w.vectors().iter().map(|v| v * C64::from_polar(1.0, phi)).collect());
        let p = PowerAllocation::equal(3, budget());
        let a = rate_report(&ch, &f, &w, &p, &[NOISE; 3]).unwrap();
        let b = rate_report(&ch, &f, &rotated, &p, &[NOISE; 3]).unwrap();
        for (x, y) in a.sinr.iter().zip(&b.sinr) {
            prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn rate_report_is_consistent(seed in 0u64..10_000, k in 1usize..4) {
        let ch = channels(5, 2, k, seed % 50);
        let mut r = rng(seed);
        let f = random_ris(&mut r, 5);
        let w = random_beamformers(&mut r, 2, k);
        let shares: Vec<f64> = (0..k).map(|_| r.random_range(0.0..1.0)).collect();
        let total: f64 = shares.iter().sum::<f64>().max(1e-12);
        let p = PowerAllocation::new(shares.iter().map(|s| s / total * budget()).collect(), budget()).unwrap();
        let rep = rate_report(&ch, &f, &w, &p, &vec![NOISE; k]).unwrap();
        for (rate, sinr) in rep.rate.iter().zip(&rep.sinr) {
            prop_assert!(*rate >= 0.0);
            prop_assert!((rate - (1.0 + sinr).log2()).abs() <= 1e-12 * (1.0 + rate));
        }
        prop_assert!((rep.sum_rate - rep.rate.iter().sum::<f64>()).abs() <= 1e-12 * (1.0 + rep.sum_rate));
    }

    #[test]
    fn formatted_numbers_keep_nine_digits(x in prop::num::f64::NORMAL) {
        let s = fmt_num(x);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-9 * x.abs());
        prop_assert_eq!(fmt_num(back), s);
    }

    #[test]
    fn csv_round_trip_is_byte_identical(
        rows in prop::collection::vec((0u64..1000, 0usize..4, -1e6f64..1e6, 0usize..40, 0usize..3), 0..12),
        users in 1usize..4,
    ) {
        let mut table = ResultTable::new(users);
        for (seed, scheme, value, iters, status) in rows {
            table.rows.push(Row {
                experiment: Experiment::PowerSweep,
                sweep_value: (value / 1e4).round(),
                seed,
                scheme: Scheme::ALL[scheme],
                sum_rate: value.abs() / 3.0,
                rates: (0..users).map(|u| value.abs() / (u as f64 + 7.0)).collect(),
                iters,
                wall_ms: 0.0,
                status: ["converged", "max-iterations", "infeasible"][status].into(),
            });
        }
        table.sort();
        let text = table.to_csv().unwrap();
        let again = ResultTable::from_csv(&text).unwrap().to_csv().unwrap();
        prop_assert_eq!(text, again);
    }

    #[test]
    fn parallel_map_matches_sequential(items in prop::collection::vec(any::<i64>(), 0..200)) {
        let f = |x: &i64| x.wrapping_mul(31).wrapping_add(7);
        prop_assert_eq!(par::map(&items, Execution::Parallel, f), par::map(&items, Execution::Sequential, f));
    }
}

#[test]
fn sampled_delta_dominates_hessian() {
    use trisopt::lift::hessian_f_quadratic;
    let mut r = rng(99);
    for seed in 0..5 {
        let ch = channels(4, 3, 1, seed);
        let f = random_ris(&mut r, 4);
        let d = build_d(0, &ch, &f, NOISE).unwrap();
        let delta = effective_delta(&d, 3).value();
        for _ in 0..1000 {
            let theta = random_theta(&mut r, 5);
            let h = hessian_f_quadratic(&theta, &d);
            let radius = h.symmetric_eigenvalues().iter().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(delta >= radius - 1e-8 * (1.0 + delta), "delta {delta} radius {radius}");
        }
    }
}
