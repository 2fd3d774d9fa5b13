use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};

use prefid_core::analytic_bounds::{
    hall_growth_simulate, lambda_coefficients, omega_upper_bound, refinement_curve, rho_identified_set,
    solve_toy_model, ThresholdInputs,
};
use prefid_core::asset_pricing::{
    bond_equity_rewrite, distortion_band, distortions, premium_prediction, write_distortions_csv, PremiumMode,
};
use prefid_core::estimator::{minimize, GmmCriterion};
use prefid_core::inference::{
    compare_profiles, linear_grid, mh_sample_chains, profile_lr_set, quantile_set, ConfidenceSet, MhOptions,
    ProfileOptions, ProfileSet, SetMethod,
};
use prefid_core::ingest::{ingest, RawTable};
use prefid_core::ks::{simulate_panel, solve_ks, SolverOptions};
use prefid_core::mixed_freq::{extract_b, mle_fit, read_mixed_csv, write_extraction_csv, MleOptions};
use prefid_core::{Error, MacroPanel, PreferenceTheta};
use serde_json::json;

use crate::config::{Command, Config};
use crate::manifest::{sha256_hex, Manifest, RunDir};
use crate::{Common, MarginFlags};

/// A library error tagged with the module that raised it and the config in use.
#[derive(Debug)]
pub struct CliError {
    module: &'static str,
    config: Option<PathBuf>,
    source: Error,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        if self.source.is_validation() {
            2
        } else {
            3
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.config {
            Some(p) => write!(f, "[{}] {} (config {})", self.module, self.source, p.display()),
            None => write!(f, "[{}] {}", self.module, self.source),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

trait Tag<T> {
    fn tag(self, module: &'static str, config: &Path) -> CliResult<T>;
}

impl<T> Tag<T> for prefid_core::Result<T> {
    fn tag(self, module: &'static str, config: &Path) -> CliResult<T> {
        self.map_err(|source| CliError {
            module,
            config: Some(config.to_path_buf()),
            source,
        })
    }
}

struct Ctx {
    cfg: Config,
    config_path: PathBuf,
    config_sha: String,
    seed: u64,
    base: PathBuf,
    run: RunDir,
}

impl Ctx {
    fn new(c: &Common, cmd: Command) -> CliResult<Ctx> {
        let (cfg, text) = Config::load(&c.config).tag("config", &c.config)?;
        cfg.validate_for(cmd).tag("config", &c.config)?;
        let run = RunDir::create(&c.out_dir).tag("io", &c.config)?;
        Ok(Ctx {
            seed: c.seed.unwrap_or(cfg.run.seed),
            config_sha: sha256_hex(text.as_bytes()),
            base: c.config.parent().map(Path::to_path_buf).unwrap_or_default(),
            config_path: c.config.clone(),
            cfg,
            run,
        })
    }

    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn finish(self, command: &str, flags: Vec<String>, streams: BTreeMap<String, u64>) -> CliResult<()> {
        let manifest = Manifest {
            command: command.into(),
            config_path: self.config_path.display().to_string(),
            config_sha256: self.config_sha,
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").into(),
            flags,
            streams,
            outputs: BTreeMap::new(),
        };
        let cp = self.config_path.clone();
        self.run.finish(manifest).tag("io", &cp)
    }

    fn panel(&self) -> CliResult<MacroPanel> {
        let cp = &self.config_path;
        let d = self.cfg.data_section().tag("config", cp)?;
        let mut panel = match (&d.panel, &d.raw, &d.schema) {
            (Some(p), _, _) => {
                let f = File::open(self.path(p)).map_err(Error::from).tag("data", cp)?;
                MacroPanel::read_csv(f).tag("data", cp)?
            }
            (None, Some(raw), Some(schema)) => {
                let f = File::open(self.path(raw)).map_err(Error::from).tag("data", cp)?;
                ingest(&RawTable::read(f).tag("data", cp)?, schema).tag("data", cp)?
            }
            _ => unreachable!("validated"),
        };
        panel.impute_var_share();
        Ok(panel)
    }
}

fn margins(flags: MarginFlags) -> Vec<bool> {
    match (flags.with_b, flags.without_b) {
        (true, false) => vec![true],
        (false, true) => vec![false],
        _ => vec![true, false],
    }
}

fn label(margin: bool) -> &'static str {
    if margin {
        "with_B"
    } else {
        "without_B"
    }
}

fn margin_flags(flags: MarginFlags) -> Vec<String> {
    let mut v = Vec::new();
    if flags.with_b {
        v.push("--with-B".into());
    }
    if flags.without_b {
        v.push("--without-B".into());
    }
    v
}

pub fn simulate(c: &Common) -> CliResult<()> {
    let mut ctx = Ctx::new(c, Command::Simulate)?;
    let cp = ctx.config_path.clone();
    let ks = ctx.cfg.ks.clone().expect("validated");
    let sim = ctx.cfg.simulate.clone().expect("validated");
    let params = ks.params();
    let opts = SolverOptions {
        seed: ctx.seed,
        ..ks.solver.clone().unwrap_or_default()
    };
    let sol = solve_ks(&params, &ks.grid(), &opts).tag("ks", &cp)?;
    let panel_seed = ctx.seed.wrapping_add(1);
    let sp = simulate_panel(&sol, &params, sim.n_agents, sim.t_total, sim.t_burn, panel_seed).tag("ks", &cp)?;
    let zeros = sp.b.iter().filter(|&&b| b == 0.0).count();
    ctx.run.write_with("panel.csv", |w| sp.to_macro_panel().write_csv(w)).tag("io", &cp)?;
    ctx.run.write_with("ks_panel.csv", |w| sp.write_csv(w)).tag("io", &cp)?;
    ctx.run
        .write_json(
            "solution.json",
            &json!({
                "params": params,
                "law_of_motion": sol.alm,
                "convergence": sol.report,
                "periods": sp.len(),
                "mean_B": sp.mean_b(),
                "zero_B_periods": zeros,
            }),
        )
        .tag("io", &cp)?;
    let streams = BTreeMap::from([("solver".into(), ctx.seed), ("panel".into(), panel_seed)]);
    ctx.finish("simulate", vec![], streams)
}

fn combined_set(sets: &[ProfileSet], level: f64) -> ConfidenceSet {
    let mut out = ConfidenceSet {
        method: SetMethod::ProfileLr,
        level,
        intervals: Vec::new(),
        metadata: BTreeMap::new(),
    };
    for s in sets {
        let cs = s.confidence_set();
        out.intervals.extend(cs.intervals);
        for (k, v) in cs.metadata {
            out.metadata.insert(format!("{}.{k}", s.param), v);
        }
    }
    out
}

pub fn estimate(c: &Common, flags: MarginFlags) -> CliResult<()> {
    let mut ctx = Ctx::new(c, Command::Estimate)?;
    let cp = ctx.config_path.clone();
    let panel = ctx.panel()?;
    let m = ctx.cfg.moments.clone().expect("validated");
    let e = ctx.cfg.estimate.clone().expect("validated");
    let space = m.space().tag("config", &cp)?;
    let mut profiles: BTreeMap<bool, Vec<ProfileSet>> = BTreeMap::new();
    for margin in margins(flags) {
        let crit = GmmCriterion::new(&panel, m.system(margin), space.clone(), m.weighting).tag("estimator", &cp)?;
        let min = minimize(&crit, e.n_starts, ctx.seed).tag("estimator", &cp)?;
        let mut sets = Vec::new();
        for name in &e.profile {
            let idx = space.free.iter().position(|f| f.0.name() == name).expect("validated");
            let (lo, hi) = (space.free[idx].1, space.free[idx].2);
            let opts = ProfileOptions {
                seed: ctx.seed,
                ..Default::default()
            };
            let set = profile_lr_set(&crit, idx, &linear_grid(lo, hi, e.grid_points), m.level, &min, &opts)
                .tag("inference", &cp)?;
            ctx.run
                .write_with(&format!("profile_{}_{name}.csv", label(margin)), |w| set.write_csv(w))
                .tag("io", &cp)?;
            sets.push(set);
        }
        let mut cs = combined_set(&sets, m.level);
        cs.metadata.insert("q_min".into(), min.q_min.into());
        cs.metadata.insert("argmin".into(), json!(min.theta));
        ctx.run.write_json(&format!("set_{}.json", label(margin)), &cs).tag("io", &cp)?;
        profiles.insert(margin, sets);
    }
    if let (Some(w), Some(wo)) = (profiles.get(&true), profiles.get(&false)) {
        let mut cmp = BTreeMap::new();
        for (a, b) in w.iter().zip(wo) {
            cmp.insert(a.param.clone(), compare_profiles(a, b).tag("inference", &cp)?);
        }
        ctx.run.write_json("containment.json", &cmp).tag("io", &cp)?;
    }
    let streams = BTreeMap::from([("multistart".into(), ctx.seed), ("profile".into(), ctx.seed)]);
    ctx.finish("estimate", margin_flags(flags), streams)
}

pub fn infer(c: &Common, flags: MarginFlags) -> CliResult<()> {
    let mut ctx = Ctx::new(c, Command::Infer)?;
    let cp = ctx.config_path.clone();
    let panel = ctx.panel()?;
    let m = ctx.cfg.moments.clone().expect("validated");
    let inf = ctx.cfg.infer.clone().expect("validated");
    let space = m.space().tag("config", &cp)?;
    let mut sets = BTreeMap::new();
    for margin in margins(flags) {
        let crit = GmmCriterion::new(&panel, m.system(margin), space.clone(), m.weighting).tag("estimator", &cp)?;
        let opts = MhOptions {
            n_draws: inf.n_draws,
            seed: ctx.seed,
            ..Default::default()
        };
        let chain = mh_sample_chains(&crit, &opts, inf.n_chains).tag("inference", &cp)?;
        let mut set = quantile_set(&chain, m.level).tag("inference", &cp)?;
        set.metadata.insert("acceptance_rate".into(), chain.acceptance_rate.into());
        ctx.run.write_json(&format!("mcmc_set_{}.json", label(margin)), &set).tag("io", &cp)?;
        ctx.run
            .write_with(&format!("chain_{}.csv", label(margin)), |w| chain.write_csv(w, inf.thin_output))
            .tag("io", &cp)?;
        sets.insert(margin, set);
    }
    if let (Some(w), Some(wo)) = (sets.get(&true), sets.get(&false)) {
        ctx.run
            .write_json(
                "containment.json",
                &json!({
                    "contained": w.is_within(wo, 0.0),
                    "volume_with_B": w.volume(),
                    "volume_without_B": wo.volume(),
                }),
            )
            .tag("io", &cp)?;
    }
    let streams = BTreeMap::from([("mcmc".into(), ctx.seed)]);
    ctx.finish("infer", margin_flags(flags), streams)
}

pub fn filter_b(c: &Common) -> CliResult<()> {
    let mut ctx = Ctx::new(c, Command::FilterB)?;
    let cp = ctx.config_path.clone();
    let f = ctx.cfg.filter_b.clone().expect("validated");
    let file = File::open(ctx.path(&f.data)).map_err(Error::from).tag("data", &cp)?;
    let data = read_mixed_csv(file).tag("mixed_freq", &cp)?;
    let mut model = f.model();
    if f.fit {
        let opts = MleOptions {
            seed: ctx.seed,
            ..f.mle.clone().unwrap_or_default()
        };
        let fit = mle_fit(&data, &model, &opts).tag("mixed_freq", &cp)?;
        ctx.run.write_json("fit.json", &fit).tag("io", &cp)?;
        model = fit.model;
    }
    let res = extract_b(&model, &data).tag("mixed_freq", &cp)?;
    ctx.run.write_with("extraction.csv", |w| write_extraction_csv(&res, w)).tag("io", &cp)?;
    let finite: Vec<f64> = res.gain.iter().copied().filter(|g| g.is_finite()).collect();
    ctx.run
        .write_json(
            "gain_report.json",
            &json!({
                "steady_gain": res.steady_gain,
                "gain_min": finite.iter().copied().fold(f64::INFINITY, f64::min),
                "gain_max": finite.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                "log_likelihood": res.log_likelihood,
                "params": res.params,
                "out_of_range_quarters": res.out_of_range,
            }),
        )
        .tag("io", &cp)?;
    let streams = BTreeMap::from([("mle_starts".into(), ctx.seed)]);
    ctx.finish("filter-b", vec![], streams)
}

pub fn bounds(c: &Common) -> CliResult<()> {
    let mut ctx = Ctx::new(c, Command::Bounds)?;
    let cp = ctx.config_path.clone();
    let b = ctx.cfg.bounds.clone().expect("validated");
    let toy = &b.toy;
    let policy = solve_toy_model(toy, b.tol, b.max_iter).tag("analytic_bounds", &cp)?;
    ctx.run.write_with("policy.csv", |w| policy.write_csv(toy, w)).tag("io", &cp)?;
    let lambda = match lambda_coefficients(toy, &policy) {
        Ok(l) => Some(l),
        Err(e) => {
            log::warn!("no distortion coefficients: {e}");
            None
        }
    };
    let panel = hall_growth_simulate(toy, &policy, b.households, b.periods, b.burn, ctx.seed).tag("analytic_bounds", &cp)?;
    let (cov_dc, cov_c) = panel.iv_covariances();
    let rho_set = rho_identified_set(cov_dc, cov_c).tag("analytic_bounds", &cp)?;
    let omega = omega_upper_bound(toy.beta, toy.r, cov_c, cov_dc);
    let t = &b.threshold;
    let (lambda0, lambda1) = lambda.as_ref().map_or((0.0, -toy.rho()), |l| (l.lambda0, l.lambda1));
    let inputs = ThresholdInputs {
        v: t.v,
        c: t.c,
        rho: toy.rho(),
        lambda0,
        lambda1,
        sigma_eps: t.sigma_eps,
    };
    let curve = refinement_curve(&inputs, t.points).tag("analytic_bounds", &cp)?;
    ctx.run.write_with("refinement.csv", |w| curve.write_csv(w)).tag("io", &cp)?;
    ctx.run
        .write_json(
            "bounds.json",
            &json!({
                "rho": toy.rho(),
                "mpc": toy.mpc(),
                "x_star": policy.x_star(),
                "policy_iterations": policy.iterations,
                "lambda": lambda,
                "cov_y_dc": cov_dc,
                "cov_y_c": cov_c,
                "rho_set": rho_set,
                "omega_bound": omega.as_ref().ok(),
                "omega_bound_error": omega.as_ref().err().map(|e| e.to_string()),
                "threshold": inputs,
                "band_area": curve.band_area(),
                "excluded_share": curve.excluded_share(),
            }),
        )
        .tag("io", &cp)?;
    let streams = BTreeMap::from([("households".into(), ctx.seed)]);
    ctx.finish("bounds", vec![], streams)
}

fn read_theta_set(path: &Path) -> prefid_core::Result<Vec<PreferenceTheta>> {
    let mut rdr = csv::Reader::from_reader(File::open(path)?);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let th: PreferenceTheta = rec?;
        th.validate()?;
        out.push(th);
    }
    if out.is_empty() {
        return Err(Error::validation("theta set file has no rows"));
    }
    Ok(out)
}

pub fn premium(c: &Common) -> CliResult<()> {
    let mut ctx = Ctx::new(c, Command::Premium)?;
    let cp = ctx.config_path.clone();
    let panel = ctx.panel()?;
    let p = ctx.cfg.premium.clone().expect("validated");
    let thetas = match (&p.thetas, &p.theta_set) {
        (Some(t), _) => t.clone(),
        (None, Some(path)) => read_theta_set(&ctx.path(path)).tag("data", &cp)?,
        _ => unreachable!("validated"),
    };
    let mut summary = BTreeMap::new();
    for (mode, name) in [
        (PremiumMode::WithFrictions, "with_frictions"),
        (PremiumMode::Counterfactual, "counterfactual"),
    ] {
        let pi = premium_prediction(&thetas, &panel, mode).tag("asset_pricing", &cp)?;
        ctx.run.write_with(&format!("premium_{name}.csv"), |w| pi.write_csv(w)).tag("io", &cp)?;
        summary.insert(
            name,
            json!({ "lo": pi.lo, "hi": pi.hi, "observed": pi.observed, "excluded": pi.excluded }),
        );
    }
    ctx.run.write_json("premium.json", &summary).tag("io", &cp)?;
    for &asset in &p.distortion_assets {
        let band = distortion_band(&thetas, &panel, asset).tag("asset_pricing", &cp)?;
        ctx.run
            .write_with(&format!("distortion_band_{}.csv", asset.as_str()), |w| band.write_csv(w))
            .tag("io", &cp)?;
        let series = thetas
            .iter()
            .map(|th| distortions(th, &panel, asset))
            .collect::<prefid_core::Result<Vec<_>>>()
            .tag("asset_pricing", &cp)?;
        ctx.run
            .write_with(&format!("distortions_{}.csv", asset.as_str()), |w| write_distortions_csv(&series, w))
            .tag("io", &cp)?;
    }
    let rewrites = thetas
        .iter()
        .map(|th| bond_equity_rewrite(th, &panel))
        .collect::<prefid_core::Result<Vec<_>>>()
        .tag("asset_pricing", &cp)?;
    let max_abs = |f: fn(&prefid_core::asset_pricing::BondEquityRewrite) -> f64| {
        rewrites.iter().map(|r| f(r).abs()).fold(0.0, f64::max)
    };
    ctx.run
        .write_json(
            "rewrite.json",
            &json!({
                "max_bond_residual": max_abs(|r| r.bond_residual),
                "max_equity_residual": max_abs(|r| r.equity_residual),
                "mean_equity_tags": rewrites.iter().map(|r| r.mean_tag.label()).collect::<Vec<_>>(),
                "mean_mu_e_share": rewrites.iter().map(|r| r.mean_mu_e_share).collect::<Vec<_>>(),
                "mean_mu_g_share": rewrites.iter().map(|r| r.mean_mu_g_share).collect::<Vec<_>>(),
            }),
        )
        .tag("io", &cp)?;
    ctx.finish("premium", vec![], BTreeMap::new())
}

/// Collects `manifest.json` files in `dir` and its immediate subdirectories
/// into `report.md`, inlining small JSON summaries.
pub fn report(dir: &Path) -> CliResult<()> {
    let io = |e: std::io::Error| CliError {
        module: "report",
        config: None,
        source: Error::from(e),
    };
    let mut dirs = vec![dir.to_path_buf()];
    let mut subs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subs.sort();
    dirs.extend(subs);
    let mut text = String::from("# Run report\n");
    let mut found = 0;
    for d in dirs {
        let mf = d.join("manifest.json");
        if !mf.is_file() {
            continue;
        }
        found += 1;
        let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&mf).map_err(io)?)
            .map_err(|e| CliError {
                module: "report",
                config: None,
                source: Error::from(e),
            })?;
        text += &format!(
            "\n## {} ({})\n\nseed {}, config sha256 {}\n\n",
            manifest["command"].as_str().unwrap_or("?"),
            d.display(),
            manifest["seed"],
            manifest["config_sha256"].as_str().unwrap_or("?"),
        );
        if let Some(outputs) = manifest["outputs"].as_object() {
            for name in outputs.keys() {
                text += &format!("- {name}\n");
            }
            for name in outputs.keys().filter(|n| n.ends_with(".json")) {
                let body = std::fs::read_to_string(d.join(name)).map_err(io)?;
                if body.len() <= 20_000 {
                    text += &format!("\n### {name}\n\n```json\n{}```\n", body);
                }
            }
        }
    }
    if found == 0 {
        return Err(CliError {
            module: "report",
            config: None,
            source: Error::validation(format!("no manifest.json under {}", dir.display())),
        });
    }
    std::fs::write(dir.join("report.md"), text).map_err(io)?;
    Ok(())
}
