use prefid_core::asset_pricing::*;
use prefid_core::{MacroPanel, PreferenceTheta, ReturnKind};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Lognormal consumption with equity loading `load` on log growth.
fn two_asset_panel(n: usize, load: f64, rg: Option<f64>, seed: u64) -> MacroPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Normal::<f64>::new(0.004, 0.01).unwrap();
    let e = Normal::<f64>::new(0.0, 0.04).unwrap();
    let mut c = vec![1.0];
    let mut re = vec![f64::NAN];
    let mut r_g = vec![f64::NAN];
    for _ in 1..n {
        let lg: f64 = g.sample(&mut rng);
        c.push(c.last().unwrap() * lg.exp());
        re.push((0.012 + load * (lg - 0.004) + e.sample(&mut rng)).exp());
        r_g.push(rg.unwrap_or_else(|| 1.004 + 0.002 * e.sample(&mut rng)));
    }
    let mut p = MacroPanel::with_index(c);
    p.set_var_share(vec![0.02; n]).unwrap();
    p.set_return(ReturnKind::Equity, re).unwrap();
    p.set_return(ReturnKind::Government, r_g).unwrap();
    p
}

fn theta(omega: f64, h: f64, beta: f64) -> PreferenceTheta {
    PreferenceTheta::new(omega, 1.0, h, beta).unwrap()
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

#[test]
fn premium_matches_brute_force_with_safe_bond() {
    let panel = two_asset_panel(400, 1.0, Some(1.004), 1);
    for th in [theta(2.0, 0.0, 0.99), theta(5.0, 0.5, 0.97)] {
        let pi = premium_prediction(&[th], &panel, PremiumMode::WithFrictions).unwrap();
        let x = pi.lo;
        // With a constant bond return mean(R_e)/mean(R_g) = 1 + x exactly,
        // so the log approximation is off by at most x².
        assert!((pi.observed - x).abs() <= x * x, "{} vs {x}", pi.observed);
    }
}

#[test]
fn premium_matches_brute_force_to_first_order() {
    let panel = two_asset_panel(2000, 1.0, None, 2);
    let pi = premium_prediction(&[theta(2.0, 0.3, 0.99)], &panel, PremiumMode::WithFrictions).unwrap();
    assert!((pi.observed - pi.lo).abs() < 1e-3, "{} vs {}", pi.observed, pi.lo);
}

#[test]
fn singleton_set_equals_pointwise_formula() {
    let panel = two_asset_panel(300, 0.5, None, 3);
    let th = theta(3.0, 0.4, 0.98);
    let pi = premium_prediction(&[th], &panel, PremiumMode::WithFrictions).unwrap();
    let m = sdf_series(&th, &panel).unwrap();
    let re = panel.return_series(ReturnKind::Equity).unwrap();
    let r_e: Vec<f64> = m.periods.iter().map(|&t| re[t + 1]).collect();
    let (mm, me) = (mean(&m.values), mean(&r_e));
    let cov = m.values.iter().zip(&r_e).map(|(a, b)| (a - mm) * (b - me)).sum::<f64>() / r_e.len() as f64;
    let mu_e = distortions(&th, &panel, ReturnKind::Equity).unwrap().mean_share;
    let mu_g = distortions(&th, &panel, ReturnKind::Government).unwrap().mean_share;
    let direct = -(cov + mu_e - mu_g) / (1.0 - mu_g);
    assert_eq!(pi.lo, pi.hi);
    assert!((pi.lo - direct).abs() < 1e-12);
}

#[test]
fn counterfactual_premium_is_weakly_negative_with_countercyclical_equity() {
    let panel = two_asset_panel(400, -2.0, None, 4);
    let set: Vec<PreferenceTheta> = [1.5, 2.0, 3.0]
        .iter()
        .flat_map(|&w| [0.3, 0.5].map(|h| theta(w, h, 0.98)))
        .collect();
    let with = premium_prediction(&set, &panel, PremiumMode::WithFrictions).unwrap();
    let without = premium_prediction(&set, &panel, PremiumMode::Counterfactual).unwrap();
    assert!(with.observed > 0.0);
    assert!(with.lo - 1e-3 <= with.observed && with.observed <= with.hi + 1e-3);
    assert!(without.hi <= 0.0, "{}", without.hi);
    for p in &without.points {
        assert_eq!((p.mu_e, p.mu_g), (0.0, 0.0));
    }
    let mut out = Vec::new();
    with.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("mode,omega,eta,h,beta,cov_m_re,mu_e,mu_g,prediction\n"));
    assert_eq!(text.lines().count(), set.len() + 1);
}

#[test]
fn zero_wedge_panel_reduces_to_standard_pricing() {
    let n = 50;
    let th = theta(2.0, 0.0, 0.97);
    let mut panel = MacroPanel::with_index(vec![1.0; n]);
    panel.set_var_share(vec![0.0; n]).unwrap();
    panel.set_return(ReturnKind::Government, vec![1.0 / 0.97; n]).unwrap();
    panel.set_return(ReturnKind::Equity, vec![1.0 / 0.97; n]).unwrap();
    let rw = bond_equity_rewrite(&th, &panel).unwrap();
    assert!(rw.mean_mu_g_share.abs() < 1e-15 && rw.mean_mu_e_share.abs() < 1e-15);
    assert!(rw.bond_residual.abs() < 1e-15 && rw.equity_residual.abs() < 1e-15);
}

#[test]
fn distortion_csv_and_band() {
    let panel = two_asset_panel(40, 1.0, None, 5);
    let set = [theta(2.0, 0.2, 0.98), theta(4.0, 0.2, 0.98)];
    let d = distortions(&set[0], &panel, ReturnKind::Equity).unwrap();
    let mut out = Vec::new();
    write_distortions_csv(&[d.clone(), d], &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("asset,omega,eta,h,beta,period,date,wedge,share\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 38);
    let band = distortion_band(&set, &panel, ReturnKind::Government).unwrap();
    assert!(band.lo.iter().zip(&band.hi).all(|(l, h)| l <= h));
    assert!(band.mean_share_lo <= band.mean_share_hi);
}

#[test]
fn equity_wedge_sign_tags_follow_the_wedge() {
    let panel = two_asset_panel(200, 1.0, None, 6);
    let th = theta(2.0, 0.2, 0.98);
    let rw = bond_equity_rewrite(&th, &panel).unwrap();
    let d = distortions(&th, &panel, ReturnKind::Equity).unwrap();
    for (tag, w) in rw.equity_tags.iter().zip(&d.wedge) {
        assert_eq!(*tag, WedgeSign::of(*w));
    }
    assert!(rw.equity_tags.contains(&WedgeSign::TradingConstraints));
    assert!(rw.equity_tags.contains(&WedgeSign::TransactionCosts));
}

#[test]
fn implicit_frisch_equation_is_solved() {
    let el = WageElasticities {
        hours: 0.6,
        mu_net: -0.1,
        b: -0.3,
        kappa: -0.2,
        v_c: 0.5,
        g_c: 0.4,
    };
    let g = GammaInputs {
        omega: 2.0,
        eta: 1.0,
        h: 0.5,
        var_share: 0.05,
        c_t: 1.0,
        c_prev: 0.99,
    };
    let eta = implied_frisch_eta(&el, 0.05, &g, (0.05, 20.0)).unwrap();
    let d = frisch_decomposition(&el, 0.05, &GammaInputs { eta, ..g }).unwrap();
    assert!((eta * d.inv_eta.unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn panel_wage_elasticities_recover_power_laws() {
    let n = 60;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noise = Normal::<f64>::new(0.0, 0.05).unwrap();
    let w: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng).exp()).collect();
    let l: Vec<f64> = w.iter().map(|w| 0.3 * w.powf(0.5)).collect();
    let mut panel = MacroPanel::with_index(vec![1.0; n]);
    panel.set_labor(l, w).unwrap();
    panel.set_var_share(vec![0.0; n]).unwrap();
    panel.set_return(ReturnKind::Government, vec![1.01; n]).unwrap();
    let th = theta(2.0, 0.0, 0.97);
    let inp = panel_frisch_inputs(&th, &panel, ReturnKind::Government, 0.0).unwrap();
    assert!((inp.elasticities.hours - 0.5).abs() < 1e-12);
    assert!(inp.elasticities.mu_net.abs() < 1e-12);
    assert_eq!(inp.elasticities.v_c, 0.0);
    let d = frisch_decomposition(&inp.elasticities, inp.mu_ratio, &inp.gamma).unwrap();
    assert!((d.inv_eta.unwrap() - 0.5).abs() < 1e-12);
}

fn random_panel(seed: u64, n: usize, h: f64) -> MacroPanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Normal::<f64>::new(0.0, 0.02).unwrap();
    let mut c = vec![1.0 + 0.5 * (seed % 7) as f64];
    for _ in 1..n {
        c.push(c.last().unwrap() * g.sample(&mut rng).exp());
    }
    let ret = |rng: &mut ChaCha8Rng, s: f64| -> Vec<f64> { (0..n).map(|_| (0.01 + s * g.sample(rng)).exp()).collect() };
    let mut p = MacroPanel::with_index(c);
    p.set_return(ReturnKind::Government, ret(&mut rng, 0.1)).unwrap();
    p.set_return(ReturnKind::Equity, ret(&mut rng, 4.0)).unwrap();
    p.set_var_share((0..n).map(|t| 0.01 + 0.005 * ((t as f64) * h).sin().abs()).collect()).unwrap();
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rewrite_identities_hold_on_random_panels(
        seed in 0u64..10_000,
        omega in 0.3f64..8.0,
        h in 0.0f64..0.8,
        beta in 0.9f64..0.999,
    ) {
        let panel = random_panel(seed, 40, h);
        let rw = bond_equity_rewrite(&theta(omega, h, beta), &panel).unwrap();
        prop_assert!(rw.bond_residual.abs() < 1e-12, "{}", rw.bond_residual);
        prop_assert!(rw.equity_residual.abs() < 1e-12, "{}", rw.equity_residual);
    }

    #[test]
    fn wedge_share_is_invariant_to_consumption_units_without_habit(
        seed in 0u64..10_000,
        scale in 0.01f64..100.0,
        omega in 0.3f64..8.0,
    ) {
        let panel = random_panel(seed, 30, 0.0);
        let mut scaled = panel.clone();
        scaled.c.iter_mut().for_each(|c| *c *= scale);
        let th = theta(omega, 0.0, 0.98);
        let a = distortions(&th, &panel, ReturnKind::Equity).unwrap();
        let b = distortions(&th, &scaled, ReturnKind::Equity).unwrap();
        for (x, y) in a.share.iter().zip(&b.share) {
            prop_assert!((x - y).abs() < 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn habit_free_gamma_two_term_vanishes(eps_g in -5.0f64..5.0, v in 0.0f64..0.2) {
        let el = WageElasticities { hours: 0.5, g_c: eps_g, ..Default::default() };
        let g = GammaInputs { omega: 2.0, eta: 1.5, h: 0.0, var_share: v, c_t: 1.0, c_prev: 0.98 };
        let d = frisch_decomposition(&el, 0.0, &g).unwrap();
        prop_assert_eq!(d.eps_xi_lab, 0.0);
    }
}
