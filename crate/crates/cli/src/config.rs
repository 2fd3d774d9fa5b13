//! TOML experiment configuration. Sections mirror the library modules and
//! economically meaningful parameters have no defaults.

use std::path::{Path, PathBuf};

use prefid_core::analytic_bounds::ToyModel;
use prefid_core::estimator::{ParamId, ParamSpace, Weighting};
use prefid_core::ingest::IngestSchema;
use prefid_core::ks::{standard_transition, Durations, KSGrid, KSParams, SolverOptions};
use prefid_core::mixed_freq::{MixedFreqModel, MixedFreqParams, MleOptions, ObsNoise, SurveyWeighting};
use prefid_core::moments::{InstrumentSpec, MomentSystemConfig};
use prefid_core::{Error, PreferenceTheta, Result, ReturnKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub ks: Option<KsSection>,
    pub simulate: Option<SimulateSection>,
    pub data: Option<DataSection>,
    pub moments: Option<MomentsSection>,
    pub estimate: Option<EstimateSection>,
    pub infer: Option<InferSection>,
    pub filter_b: Option<FilterBSection>,
    pub bounds: Option<BoundsSection>,
    pub premium: Option<PremiumSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KsSection {
    pub beta: f64,
    pub omega: f64,
    pub alpha: f64,
    pub delta: f64,
    pub z_good: f64,
    pub z_bad: f64,
    pub nu: f64,
    pub l_bar: f64,
    pub u_good: f64,
    pub u_bad: f64,
    pub borrow_limit: f64,
    pub durations: Durations,
    /// Numerical grid; the benchmark grid when absent.
    pub grid: Option<KSGrid>,
    pub solver: Option<SolverOptions>,
}

impl KsSection {
    pub fn params(&self) -> KSParams {
        KSParams {
            beta: self.beta,
            omega: self.omega,
            alpha: self.alpha,
            delta: self.delta,
            z_good: self.z_good,
            z_bad: self.z_bad,
            nu: self.nu,
            l_bar: self.l_bar,
            u_good: self.u_good,
            u_bad: self.u_bad,
            transition: standard_transition(self.u_good, self.u_bad, self.durations),
            borrow_limit: self.borrow_limit,
        }
    }

    pub fn grid(&self) -> KSGrid {
        self.grid.clone().unwrap_or_else(|| KSGrid::benchmark(&self.params()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n_agents: usize,
    pub t_total: usize,
    pub t_burn: usize,
}

/// Input panel: either an exported panel CSV or a raw file plus schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub panel: Option<PathBuf>,
    pub raw: Option<PathBuf>,
    pub schema: Option<IngestSchema>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FreeParam {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsSection {
    pub returns: Vec<ReturnKind>,
    pub instruments: Vec<InstrumentSpec>,
    pub free: Vec<FreeParam>,
    pub fixed: PreferenceTheta,
    pub weighting: Weighting,
    pub level: f64,
}

impl MomentsSection {
    pub fn system(&self, margin: bool) -> MomentSystemConfig {
        MomentSystemConfig {
            use_extensive_margin: margin,
            ..MomentSystemConfig::euler(self.returns.clone(), self.instruments.clone())
        }
    }

    pub fn space(&self) -> Result<ParamSpace> {
        let free = self
            .free
            .iter()
            .map(|f| Ok((ParamId::parse(&f.name)?, f.lower, f.upper)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ParamSpace {
            free,
            fixed: self.fixed,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    /// Free parameters to profile, by name.
    pub profile: Vec<String>,
    pub grid_points: usize,
    pub n_starts: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferSection {
    pub n_draws: usize,
    pub n_chains: usize,
    pub thin_output: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterBSection {
    pub data: PathBuf,
    pub params: MixedFreqParams,
    pub noise: ObsNoise,
    pub weighting: SurveyWeighting,
    /// Maximize the likelihood from `params` before extracting.
    pub fit: bool,
    pub mle: Option<MleOptions>,
}

impl FilterBSection {
    pub fn model(&self) -> MixedFreqModel {
        MixedFreqModel {
            params: self.params,
            noise: self.noise,
            weighting: self.weighting,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSection {
    pub v: f64,
    pub c: f64,
    pub sigma_eps: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub toy: ToyModel,
    pub tol: f64,
    pub max_iter: usize,
    pub households: usize,
    pub periods: usize,
    pub burn: usize,
    pub threshold: ThresholdSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PremiumSection {
    /// CSV with columns omega, eta, h, beta (e.g. draws inside a confidence set).
    pub theta_set: Option<PathBuf>,
    pub thetas: Option<Vec<PreferenceTheta>>,
    pub distortion_assets: Vec<ReturnKind>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Estimate,
    Infer,
    FilterB,
    Bounds,
    Premium,
}

fn missing(section: &str) -> Error {
    Error::Config {
        key: section.into(),
        reason: "section is required by this command".into(),
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<(Config, String)> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Config = toml::from_str(&text).map_err(|e| Error::Config {
            key: path.display().to_string(),
            reason: e.message().to_string(),
        })?;
        Ok((cfg, text))
    }

    /// Checks every precondition the command relies on before any work starts.
    pub fn validate_for(&self, cmd: Command) -> Result<()> {
        match cmd {
            Command::Simulate => {
                let ks = self.ks.as_ref().ok_or_else(|| missing("ks"))?;
                ks.params().validate()?;
                ks.grid().validate(ks.borrow_limit)?;
                let s = self.simulate.as_ref().ok_or_else(|| missing("simulate"))?;
                if s.t_total <= s.t_burn || s.n_agents < 1000 {
                    return Err(Error::Config {
                        key: "simulate".into(),
                        reason: "need t_total > t_burn and n_agents >= 1000".into(),
                    });
                }
            }
            Command::Estimate | Command::Infer => {
                self.data_section()?;
                let m = self.moments.as_ref().ok_or_else(|| missing("moments"))?;
                m.system(false).validate()?;
                m.space()?.validate()?;
                if !(m.level > 0.0 && m.level < 1.0) {
                    return Err(Error::Config {
                        key: "moments.level".into(),
                        reason: "must lie in (0, 1)".into(),
                    });
                }
                if cmd == Command::Estimate {
                    let e = self.estimate.as_ref().ok_or_else(|| missing("estimate"))?;
                    let space = m.space()?;
                    for name in &e.profile {
                        let id = ParamId::parse(name)?;
                        if !space.free.iter().any(|f| f.0 == id) {
                            return Err(Error::Config {
                                key: "estimate.profile".into(),
                                reason: format!("`{name}` is not a free parameter"),
                            });
                        }
                    }
                    if e.grid_points < 2 || e.n_starts == 0 {
                        return Err(Error::Config {
                            key: "estimate".into(),
                            reason: "need grid_points >= 2 and n_starts >= 1".into(),
                        });
                    }
                } else {
                    let i = self.infer.as_ref().ok_or_else(|| missing("infer"))?;
                    if i.n_draws == 0 || i.n_chains == 0 || i.thin_output == 0 {
                        return Err(Error::Config {
                            key: "infer".into(),
                            reason: "n_draws, n_chains and thin_output must be positive".into(),
                        });
                    }
                }
            }
            Command::FilterB => {
                let f = self.filter_b.as_ref().ok_or_else(|| missing("filter_b"))?;
                f.model().validate()?;
            }
            Command::Bounds => {
                let b = self.bounds.as_ref().ok_or_else(|| missing("bounds"))?;
                b.toy.validate()?;
                let t = &b.threshold;
                if !(t.sigma_eps > 0.0 && t.points >= 2 && t.c > 0.0) {
                    return Err(Error::Config {
                        key: "bounds.threshold".into(),
                        reason: "need sigma_eps > 0, c > 0 and at least two points".into(),
                    });
                }
                if b.households == 0 || b.periods == 0 {
                    return Err(Error::Config {
                        key: "bounds".into(),
                        reason: "households and periods must be positive".into(),
                    });
                }
            }
            Command::Premium => {
                self.data_section()?;
                let p = self.premium.as_ref().ok_or_else(|| missing("premium"))?;
                if p.theta_set.is_none() == p.thetas.is_none() {
                    return Err(Error::Config {
                        key: "premium".into(),
                        reason: "give exactly one of theta_set and thetas".into(),
                    });
                }
                for th in p.thetas.iter().flatten() {
                    th.validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn data_section(&self) -> Result<&DataSection> {
        let d = self.data.as_ref().ok_or_else(|| missing("data"))?;
        match (&d.panel, &d.raw, &d.schema) {
            (Some(_), None, None) | (None, Some(_), Some(_)) => Ok(d),
            _ => Err(Error::Config {
                key: "data".into(),
                reason: "give either `panel`, or `raw` together with `schema`".into(),
            }),
        }
    }
}
