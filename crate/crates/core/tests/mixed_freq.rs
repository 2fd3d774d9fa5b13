use nalgebra::{DMatrix, DVector};
use prefid_core::mixed_freq::*;
use proptest::prelude::*;

fn scalar_ar1(c: f64, rho: f64, q: f64, r: f64, m0: f64, p0: f64) -> LinearGaussian {
    LinearGaussian {
        transition: DMatrix::from_element(1, 1, rho),
        intercept: DVector::from_element(1, c),
        state_cov: DMatrix::from_element(1, 1, q),
        observation: DMatrix::from_element(1, 1, 1.0),
        obs_intercept: DVector::zeros(1),
        obs_var: DVector::from_element(1, r),
        init_mean: DVector::from_element(1, m0),
        init_cov: DMatrix::from_element(1, 1, p0),
    }
}

/// Joint mean and covariance of (x1, x2, x3, y1, y2, y3) built directly.
fn joint(c: f64, rho: f64, q: f64, r: f64, m0: f64, p0: f64) -> (DVector<f64>, DMatrix<f64>) {
    let mut mx = [m0, 0.0, 0.0];
    let mut vx = [p0, 0.0, 0.0];
    for t in 1..3 {
        mx[t] = c + rho * mx[t - 1];
        vx[t] = rho * rho * vx[t - 1] + q;
    }
    let cov_x = |i: usize, j: usize| {
        let (a, b) = (i.min(j), i.max(j));
        rho.powi((b - a) as i32) * vx[a]
    };
    let mut mean = DVector::zeros(6);
    let mut cov = DMatrix::zeros(6, 6);
    for i in 0..3 {
        mean[i] = mx[i];
        mean[i + 3] = mx[i];
        for j in 0..3 {
            let v = cov_x(i, j);
            cov[(i, j)] = v;
            cov[(i, j + 3)] = v;
            cov[(i + 3, j)] = v;
            cov[(i + 3, j + 3)] = v + if i == j { r } else { 0.0 };
        }
    }
    (mean, cov)
}

/// E[x_k | y_s, s in `given`] and the Gaussian log density of those y.
fn condition(mean: &DVector<f64>, cov: &DMatrix<f64>, y: &[f64; 3], given: &[usize], k: usize) -> (f64, f64) {
    let n = given.len();
    let syy = DMatrix::from_fn(n, n, |a, b| cov[(given[a] + 3, given[b] + 3)]);
    let sxy = DMatrix::from_fn(1, n, |_, b| cov[(k, given[b] + 3)]);
    let dev = DVector::from_fn(n, |a, _| y[given[a]] - mean[given[a] + 3]);
    let inv = syy.clone().try_inverse().unwrap();
    let cond = mean[k] + (sxy * &inv * &dev)[0];
    let logpdf = -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + syy.determinant().ln() + (dev.transpose() * inv * dev)[0]);
    (cond, logpdf)
}

#[test]
fn three_period_filter_matches_joint_gaussian_conditioning() {
    let (c, rho, q, r, m0, p0) = (0.3, 0.7, 0.5, 0.2, 1.0, 0.9);
    let y = [1.4, 0.2, 2.1];
    let (mean, cov) = joint(c, rho, q, r, m0, p0);
    let model = scalar_ar1(c, rho, q, r, m0, p0);

    let obs: Vec<Vec<Option<f64>>> = y.iter().map(|&v| vec![Some(v)]).collect();
    let f = model.filter(&obs).unwrap();
    let s = model.smooth(&f);
    for t in 0..3 {
        let given: Vec<usize> = (0..=t).collect();
        let (filt, _) = condition(&mean, &cov, &y, &given, t);
        assert!((f.filtered[t][0] - filt).abs() < 1e-10, "filtered t={t}");
        let (sm, _) = condition(&mean, &cov, &y, &[0, 1, 2], t);
        assert!((s.smoothed[t][0] - sm).abs() < 1e-10, "smoothed t={t}");
    }
    let (_, ll) = condition(&mean, &cov, &y, &[0, 1, 2], 0);
    assert!((f.log_likelihood - ll).abs() < 1e-10);

    let obs = vec![vec![Some(y[0])], vec![None], vec![Some(y[2])]];
    let f = model.filter(&obs).unwrap();
    let s = model.smooth(&f);
    for t in 0..3 {
        let given: Vec<usize> = [0, 2].into_iter().filter(|&g| g <= t).collect();
        let (filt, _) = condition(&mean, &cov, &y, &given, t);
        assert!((f.filtered[t][0] - filt).abs() < 1e-10);
        let (sm, _) = condition(&mean, &cov, &y, &[0, 2], t);
        assert!((s.smoothed[t][0] - sm).abs() < 1e-10);
    }
    let (_, ll) = condition(&mean, &cov, &y, &[0, 2], 0);
    assert!((f.log_likelihood - ll).abs() < 1e-10);
}

fn benchmark_model() -> MixedFreqModel {
    MixedFreqModel {
        params: MixedFreqParams {
            rho_b: 0.85,
            rho_zeta: 0.5,
            var_b: 0.02,
            var_zeta: 0.005,
            mean_b: -3.5,
            mean_zeta: 1.2,
        },
        noise: ObsNoise {
            pi_var: 2e-4,
            b_var: 1e-4,
        },
        weighting: SurveyWeighting::EightQuarters,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn row_order_does_not_change_likelihood(seed in 0u64..1000, miss in proptest::collection::vec(any::<bool>(), 30)) {
        let m = benchmark_model();
        let mut s = m.simulate(30, 6, seed).unwrap();
        for (t, &drop) in miss.iter().enumerate() {
            if drop {
                s.data.log_pi[t] = None;
            }
        }
        let ss = m.state_space().unwrap();
        let rows = s.data.rows();
        let joint = ss.filter(&rows).unwrap();
        let a = ss.filter_sequential(&rows, &[0, 1]).unwrap();
        let b = ss.filter_sequential(&rows, &[1, 0]).unwrap();
        prop_assert!((joint.log_likelihood - a.log_likelihood).abs() < 1e-8);
        prop_assert!((a.log_likelihood - b.log_likelihood).abs() < 1e-8);
        for t in 0..30 {
            prop_assert!((&joint.filtered[t] - &b.filtered[t]).amax() < 1e-8);
        }
    }

    #[test]
    fn gain_stays_in_half_open_interval(ratio in 0.0f64..1e6) {
        let g = steady_gain(ratio);
        prop_assert!(g > 0.5 && g <= 1.0);
    }
}

#[test]
fn smoother_matches_filter_at_final_period() {
    let m = benchmark_model();
    let s = m.simulate(72, 12, 11).unwrap();
    let ss = m.state_space().unwrap();
    let f = ss.filter(&s.data.rows()).unwrap();
    let sm = ss.smooth(&f);
    let last = f.filtered.len() - 1;
    assert!((&sm.smoothed[last] - &f.filtered[last]).amax() < 1e-12);
}

#[test]
fn nearly_exact_survey_every_quarter_is_reproduced() {
    let mut m = benchmark_model();
    m.noise.b_var = 1e-12;
    let s = m.simulate(60, 1, 4).unwrap();
    let e = extract_b(&m, &s.data).unwrap();
    for t in 7..60 {
        let avg = e.log_b_smoothed[t - 7..=t].iter().sum::<f64>() / 8.0;
        assert!((avg - s.data.log_b[t].unwrap()).abs() < 1e-4, "t={t}");
    }
}

#[test]
fn smoothed_survey_average_near_survey_measure() {
    let m = benchmark_model();
    let s = m.simulate(240, 12, 8).unwrap();
    let e = extract_b(&m, &s.data).unwrap();
    let sd = m.noise.b_var.sqrt();
    for (t, obs) in s.data.log_b.iter().enumerate() {
        if let Some(b) = obs {
            let avg = e.log_b_smoothed[t - 7..=t].iter().sum::<f64>() / 8.0;
            assert!((avg - b).abs() < 2.0 * sd, "t={t}: {avg} vs {b}");
        }
    }
}

#[test]
fn extraction_beats_carrying_survey_forward() {
    let m = benchmark_model();
    let s = m.simulate(240, 12, 21).unwrap();
    let e = extract_b(&m, &s.data).unwrap();
    let mut last = s.data.log_b.iter().flatten().next().copied().unwrap();
    let (mut se_kf, mut se_naive) = (0.0, 0.0);
    for t in 0..240 {
        if let Some(b) = s.data.log_b[t] {
            last = b;
        }
        se_kf += (e.log_b_smoothed[t] - s.log_b[t]).powi(2);
        se_naive += (last - s.log_b[t]).powi(2);
    }
    assert!(se_kf < se_naive, "{se_kf} vs {se_naive}");
}

#[test]
fn mle_recovers_parameters_across_replications() {
    let truth = benchmark_model();
    let reps = 100;
    let est: Vec<[f64; 4]> = (0..reps)
        .map(|r| {
            let s = truth.simulate(200, 12, 1000 + r).unwrap();
            let fit = mle_fit(&s.data, &truth, &MleOptions { n_starts: 1, ..Default::default() }).unwrap();
            let p = fit.model.params;
            [p.rho_b, p.rho_zeta, p.var_b, p.var_zeta]
        })
        .collect();
    let tp = truth.params;
    let true_vals = [tp.rho_b, tp.rho_zeta, tp.var_b, tp.var_zeta];
    for j in 0..4 {
        let xs: Vec<f64> = est.iter().map(|e| e[j]).collect();
        let mean = xs.iter().sum::<f64>() / reps as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
        assert!((mean - true_vals[j]).abs() < 3.0 * sd, "param {j}: mean {mean}, sd {sd}, truth {}", true_vals[j]);
    }
}

#[test]
fn no_ratio_noise_gives_gain_near_one() {
    let mut truth = benchmark_model();
    truth.params.var_zeta = 0.0;
    let s = truth.simulate(200, 12, 5).unwrap();
    let mut init = benchmark_model();
    init.params.var_zeta = 1e-3;
    let fit = mle_fit(&s.data, &init, &MleOptions::default()).unwrap();
    let p = fit.model.params;
    assert!(p.var_zeta / p.var_b < 0.05, "{p:?}");
    let e = extract_b(&fit.model, &s.data).unwrap();
    assert!(e.steady_gain > 0.95, "{}", e.steady_gain);
}

#[test]
fn csv_round_trip_through_extraction() {
    let m = benchmark_model();
    let s = m.simulate(36, 12, 1).unwrap();
    let mut csv = String::from("date,pi_obs,b_obs\n");
    for t in 0..36 {
        let b = s.data.log_b[t].map(|v| v.exp().to_string()).unwrap_or_default();
        csv.push_str(&format!("{},{},{}\n", s.data.dates[t], s.data.log_pi[t].unwrap().exp(), b));
    }
    let data = read_mixed_csv(csv.as_bytes()).unwrap();
    let e = extract_b(&m, &data).unwrap();
    let mut out = Vec::new();
    write_extraction_csv(&e, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("date,b_filtered,b_smoothed,gain\n"));
    assert_eq!(text.lines().count(), 37);
}

#[test]
fn likelihood_flat_in_ratio_persistence_without_ratio_noise() {
    let mut m = benchmark_model();
    m.params.var_zeta = 1e-10;
    let s = m.simulate(200, 12, 6).unwrap();
    let lls: Vec<f64> = (0..=20)
        .map(|k| {
            let mut mk = m.clone();
            mk.params.rho_zeta = -0.98 + 1.96 * k as f64 / 20.0;
            log_likelihood(&mk, &s.data).unwrap()
        })
        .collect();
    let spread = lls.iter().cloned().fold(f64::MIN, f64::max) - lls.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 1e-3, "{spread}");

    let fit = mle_fit(
        &s.data,
        &m,
        &MleOptions {
            var_bounds: (1e-10, 1.0),
            n_starts: 1,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(
        fit.at_bound.iter().chain(&fit.flat).any(|n| n.ends_with("zeta")),
        "{:?} {:?} {:?}",
        fit.model.params,
        fit.at_bound,
        fit.flat
    );
}
