use std::sync::OnceLock;

use prefid_core::analytic_bounds::*;
use proptest::prelude::*;

fn baseline() -> ToyModel {
    ToyModel {
        beta: 0.9,
        omega: 2.0,
        r: 0.05,
        income: IncomeDist::two_point(0.7, 1.3, 0.5),
        n_grid: 4000,
        x_max: 200.0,
    }
}

fn baseline_policy() -> &'static ToyPolicy {
    static P: OnceLock<ToyPolicy> = OnceLock::new();
    P.get_or_init(|| solve_toy_model(&baseline(), 1e-10, 5000).unwrap())
}

#[test]
fn rho_set_hand_value() {
    let s = rho_identified_set(-0.02, 0.1).unwrap();
    assert!((s.upper - 0.8).abs() < 1e-15);
    assert!(s.contains(0.8) && !s.contains(0.81));
}

proptest! {
    #[test]
    fn omega_bound_falls_with_stronger_covariance(
        beta in 0.5f64..0.97,
        cov_c in 0.01f64..1.0,
        frac in 0.01f64..0.45,
    ) {
        let a = omega_upper_bound(beta, 0.02, cov_c, -frac * cov_c).unwrap().value().unwrap();
        let b = omega_upper_bound(beta, 0.02, cov_c, -2.0 * frac * cov_c).unwrap().value().unwrap();
        prop_assert!(a > 0.0 && a.is_finite());
        prop_assert!(b < a);
    }

    #[test]
    fn threshold_is_a_probability_with_fixed_endpoints(
        v in -0.5f64..0.5,
        c in 0.2f64..3.0,
        rho in 0.5f64..1.0,
        lambda0 in 0.0f64..2.0,
        scale in 0.1f64..2.0,
        sigma in 0.05f64..1.0,
        p in 0.0f64..1.0,
    ) {
        let inp = ThresholdInputs { v, c, rho, lambda0, lambda1: -rho * scale, sigma_eps: sigma };
        let t = threshold_at(&inp, p).unwrap();
        if !t.degenerate {
            prop_assert!(t.g >= -1e-12 && t.g <= 1.0 + 1e-12, "g = {}", t.g);
            prop_assert_eq!(threshold_at(&inp, 0.0).unwrap().g, 0.0);
            prop_assert!((threshold_at(&inp, 1.0).unwrap().g - 1.0).abs() < 1e-12);
            let near = threshold_at(&inp, (p + 1e-9).min(1.0)).unwrap().g;
            prop_assert!((near - t.g).abs() < 1e-5);
        }
    }
}

#[test]
fn threshold_frictionless_limit() {
    for &p in &[0.1, 0.37, 0.8] {
        let inp = ThresholdInputs {
            v: 0.0,
            c: 1.0,
            rho: 0.97,
            lambda0: 1e-6,
            lambda1: -0.97e-6,
            sigma_eps: 0.1,
        };
        let g = threshold_at(&inp, p).unwrap().g;
        assert!((g - p).abs() < 1e-4, "p {p}: g {g}");
    }
}

#[test]
fn threshold_with_unit_mean_income_reaches_one() {
    let m = baseline();
    let rho = m.rho();
    let lambda0 = 1.0 * (1.0 - rho / (1.0 + m.r) * 0.5);
    let inp = ThresholdInputs {
        v: 0.0,
        c: 1.0,
        rho,
        lambda0,
        lambda1: -rho,
        sigma_eps: 0.1,
    };
    assert!((threshold_at(&inp, 1.0).unwrap().g - 1.0).abs() < 1e-12);
    assert_eq!(threshold_at(&inp, 0.0).unwrap().g, 0.0);
}

#[test]
fn band_widens_when_intensive_distortion_doubles() {
    let rho = baseline().rho();
    let base = ThresholdInputs {
        v: 0.0,
        c: 1.0,
        rho,
        lambda0: 0.0,
        lambda1: -rho,
        sigma_eps: 0.1,
    };
    let doubled = ThresholdInputs {
        lambda1: 2.0 * base.lambda1,
        ..base
    };
    let a = refinement_curve(&base, 1001).unwrap().band_area();
    let b = refinement_curve(&doubled, 1001).unwrap().band_area();
    assert!(b > a, "{a} vs {b}");
    let mut out = Vec::new();
    refinement_curve(&base, 11).unwrap().write_csv(&mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap().lines().count(), 12);
}

#[test]
fn constrained_region_consumes_cash_on_hand_exactly() {
    let p = baseline_policy();
    let xs = p.x_star().unwrap();
    for i in 0..p.x.len() {
        if p.x[i] <= xs {
            assert!(p.constrained[i]);
            assert_eq!(p.c[i], p.x[i]);
        } else {
            assert!(p.c[i] < p.x[i]);
        }
    }
    let m = baseline();
    assert!(xs > m.income.values[0] && xs < m.income.values[1]);
}

#[test]
fn slope_at_high_cash_on_hand_matches_limit() {
    let m = baseline();
    let slope = baseline_policy().slope_between(0.7 * m.x_max, 0.9 * m.x_max).unwrap();
    assert!((slope - m.mpc()).abs() < 1e-3, "{slope} vs {}", m.mpc());
}

#[test]
fn gap_to_perfect_foresight_shrinks_with_wealth() {
    // The numerical policy converges to the perfect-foresight line in levels,
    // so the gap vanishes rather than settling at mpc·ȳ/r.
    let m = baseline();
    let p = baseline_policy();
    let gaps: Vec<f64> = [25.0, 50.0, 100.0, 180.0]
        .iter()
        .map(|&x| m.perfect_foresight(x) - p.consumption(x))
        .collect();
    for w in gaps.windows(2) {
        assert!(w[1] < w[0] && w[1] > 0.0, "{gaps:?}");
    }
    assert!(gaps[3] < 0.1 * m.mpc() * m.mean_income() / m.r);
}

#[test]
fn iv_slope_is_biased_down_and_truth_exceeds_the_endpoint() {
    let m = baseline();
    let panel = hall_growth_simulate(&m, baseline_policy(), 2000, 50, 100, 3).unwrap();
    let (cov_dc, cov_c) = panel.iv_covariances();
    let set = rho_identified_set(cov_dc, cov_c).unwrap();
    assert!(set.rho_iv < m.rho() - 1.0);
    assert!(!set.contains(m.rho()));
}

#[test]
fn precautionary_residual_is_nonnegative_off_the_constraint() {
    let m = baseline();
    let p = baseline_policy();
    let panel = hall_growth_simulate(&m, p, 1000, 40, 100, 4).unwrap();
    let h = p.x[1] - p.x[0];
    for i in 0..panel.len() {
        let total = panel.eps[i] + panel.distortion[i] + panel.phi[i] + (m.rho() - 1.0) * panel.c[i];
        assert!((total - panel.dc[i]).abs() < 1e-12);
        if !panel.constrained[i] {
            assert_eq!(panel.distortion[i], 0.0);
            // Linear interpolation of the policy costs O(grid step) accuracy.
            assert!(panel.phi[i] > -h, "phi {} at x {}", panel.phi[i], panel.x[i]);
        }
    }
}

#[test]
fn always_constrained_regression_recovers_lambdas() {
    let m = ToyModel {
        beta: 0.3,
        n_grid: 1000,
        x_max: 40.0,
        ..baseline()
    };
    let p = solve_toy_model(&m, 1e-10, 5000).unwrap();
    let lam = lambda_coefficients(&m, &p).unwrap();
    assert_eq!(lam.prob_constrained, 1.0);
    assert_eq!(lam.lambda1, -m.rho());
    let panel = hall_growth_simulate(&m, &p, 2000, 50, 10, 5).unwrap();
    let (l0, l1) = panel.constrained_regression(m.rho()).unwrap();
    assert!((l0 - lam.lambda0).abs() < 1e-2, "{l0} vs {}", lam.lambda0);
    assert!((l1 - lam.lambda1).abs() < 1e-2, "{l1} vs {}", lam.lambda1);
}

#[test]
fn policy_csv_has_plot_columns() {
    let m = ToyModel {
        n_grid: 50,
        x_max: 10.0,
        ..baseline()
    };
    let p = solve_toy_model(&m, 1e-9, 5000).unwrap();
    let mut out = Vec::new();
    p.write_csv(&m, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("x,c,c_unconstrained_line,c_perfect_foresight,constrained\n"));
    assert_eq!(text.lines().count(), 51);
}
