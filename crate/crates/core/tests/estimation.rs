use prefid_core::estimator::*;
use prefid_core::inference::{BProcess, SyntheticDgp};
use prefid_core::moments::{InstrumentSpec, MomentSystemConfig};
use prefid_core::{PreferenceTheta, ReturnKind};
use proptest::prelude::*;

fn dgp(b: BProcess, seed: u64) -> SyntheticDgp {
    SyntheticDgp {
        omega: 2.0,
        beta: 0.98,
        growth_mean: 0.005,
        growth_sd: 0.02,
        growth_loading: 0.5,
        return_noise_sd: 0.01,
        kappa: 0.5,
        b,
        var_share: 0.01,
        n_periods: 1500,
        seed,
    }
}

fn config() -> MomentSystemConfig {
    MomentSystemConfig::euler(
        vec![ReturnKind::Capital, ReturnKind::Government],
        vec![InstrumentSpec::Constant, InstrumentSpec::Growth {
            column: "C".into(),
            lag: 1,
        }],
    )
}

fn omega_space() -> ParamSpace {
    ParamSpace {
        free: vec![(ParamId::Omega, 0.5, 4.0)],
        fixed: PreferenceTheta::new(2.0, 1.0, 0.0, 0.98).unwrap(),
    }
}

#[test]
fn frictionless_equalities_recover_risk_aversion() {
    let panel = dgp(BProcess::Zero, 4).simulate().unwrap();
    let cfg = MomentSystemConfig {
        equalities_only: true,
        ..config()
    };
    let crit = GmmCriterion::new(&panel, cfg, omega_space(), Weighting::NeweyWest { lag: 1 }).unwrap();
    let min = minimize(&crit, 3, 1).unwrap();
    assert!((min.theta[0] - 2.0).abs() < 0.1, "{:?}", min.theta);
    assert!(min.u.iter().all(|&u| u == 0.0));
}

#[test]
fn positive_wedges_leave_slack_at_the_truth() {
    let panel = dgp(
        BProcess::LogitAr1 {
            mean: 0.05,
            rho: 0.8,
            sd: 0.4,
        },
        5,
    )
    .simulate()
    .unwrap();
    let crit = GmmCriterion::new(&panel, config(), omega_space(), Weighting::NeweyWest { lag: 1 }).unwrap();
    let s = crit.state(&[2.0]).unwrap();
    let (q, u) = s.profile();
    assert!(q * crit.sample_size() as f64 * 2.0 < chi2_95());
    assert!(u.iter().any(|&x| x > 0.0));
}

fn chi2_95() -> f64 {
    prefid_core::inference::chi2_critical(0.95, 1.0).unwrap()
}

#[test]
fn param_names_round_trip() {
    for id in [ParamId::Omega, ParamId::Eta, ParamId::Frisch, ParamId::H, ParamId::Beta] {
        assert_eq!(ParamId::parse(id.name()).unwrap(), id);
    }
    assert!(ParamId::parse("gamma").unwrap_err().is_validation());
}

#[test]
fn lag_at_sample_size_is_rejected() {
    let panel = dgp(BProcess::Zero, 6).simulate().unwrap();
    let e = GmmCriterion::new(&panel, config(), omega_space(), Weighting::NeweyWest { lag: 5000 }).unwrap_err();
    assert!(e.is_validation());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn profiled_criterion_is_below_zero_nuisance(omega in 0.5f64..4.0, seed in 0u64..50) {
        let mut d = dgp(BProcess::Constant { value: 0.05 }, seed);
        d.n_periods = 200;
        let panel = d.simulate().unwrap();
        let crit = GmmCriterion::new(&panel, config(), omega_space(), Weighting::Covariance).unwrap();
        let s = crit.state(&[omega]).unwrap();
        let zero = vec![0.0; s.mean.len()];
        let (q, u) = s.profile();
        prop_assert!(q <= s.q(&zero) + 1e-12);
        prop_assert!(u.iter().all(|&x| x >= 0.0));
        prop_assert!(q >= 0.0);
    }
}
