//! TOML run configuration. Every key is optional and overrides a base preset.
//!
//! ```toml
//! case = "table1-case1"
//!
//! [protocol]
//! name = "bb84"
//! method = "both"
//! p_z = 0.5
//! f_ec = 1.2
//!
//! [channel]
//! loss_db_per_km = 0.2
//! eta_d = 0.125
//! e_d = 0.01
//! p_dark = 1e-5
//!
//! [intensities]
//! mu = 0.5
//! nu1 = 0.02
//! nu2 = 0.001
//! mu_out = 1e-3
//!
//! [optimize]
//! enabled = true
//! step = 0.05
//!
//! [scan]
//! start_km = 0.0
//! stop_km = 100.0
//! step_km = 5.0
//!
//! [solver]
//! tol_rel = 2e-3
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::IntensitySet;
use crate::error::{Error, Result};
use crate::pipeline::{table1_case1, table1_case2, ChannelSpec, Method, RunConfig};
use crate::protocol::Protocol;

pub const CASE_NAMES: [&str; 2] = ["table1-case1", "table1-case2"];

/// Named parameter set.
pub fn preset(name: &str) -> Result<RunConfig> {
    match name.to_ascii_lowercase().as_str() {
        "table1-case1" | "case1" => Ok(table1_case1()),
        "table1-case2" | "case2" => Ok(table1_case2()),
        other => Err(Error::Config(format!("unknown case '{other}' (known: {})", CASE_NAMES.join(", ")))),
    }
}

/// Preset used when only a protocol is given.
pub fn default_for(protocol: Protocol) -> RunConfig {
    match protocol {
        Protocol::Bb84 => table1_case1(),
        Protocol::Mdi => table1_case2(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub name: Option<Protocol>,
    pub method: Option<Method>,
    pub p_z: Option<f64>,
    pub f_ec: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    pub loss_db_per_km: Option<f64>,
    pub eta_d: Option<f64>,
    pub e_d: Option<f64>,
    pub p_dark: Option<f64>,
}

impl ChannelSection {
    fn apply(&self, base: ChannelSpec) -> ChannelSpec {
        ChannelSpec {
            loss_db_per_km: self.loss_db_per_km.unwrap_or(base.loss_db_per_km),
            eta_d: self.eta_d.unwrap_or(base.eta_d),
            e_d: self.e_d.unwrap_or(base.e_d),
            p_dark: self.p_dark.unwrap_or(base.p_dark),
        }
    }

    fn from_spec(c: &ChannelSpec) -> Self {
        Self { loss_db_per_km: Some(c.loss_db_per_km), eta_d: Some(c.eta_d), e_d: Some(c.e_d), p_dark: Some(c.p_dark) }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensitySection {
    pub mu: Option<f64>,
    pub nu1: Option<f64>,
    pub nu2: Option<f64>,
    pub mu_out: Option<f64>,
    /// Bob's leak (MDI).
    pub mu_out_b: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    pub enabled: Option<bool>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub step: Option<f64>,
    pub refine_step: Option<f64>,
    pub refine_halfwidth: Option<f64>,
}

/// Either an explicit list or a `start..=stop` grid.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub distances_km: Option<Vec<f64>>,
    pub start_km: Option<f64>,
    pub stop_km: Option<f64>,
    pub step_km: Option<f64>,
}

impl ScanSection {
    fn distances(&self) -> Result<Option<Vec<f64>>> {
        if let Some(d) = &self.distances_km {
            if self.start_km.is_some() || self.stop_km.is_some() || self.step_km.is_some() {
                return Err(Error::Config("[scan] takes either distances_km or start_km/stop_km/step_km".into()));
            }
            return Ok(Some(d.clone()));
        }
        match (self.start_km, self.stop_km, self.step_km) {
            (None, None, None) => Ok(None),
            (Some(a), Some(b), Some(s)) => distance_grid(a, b, s).map(Some),
            _ => Err(Error::Config("[scan] needs all of start_km, stop_km and step_km".into())),
        }
    }
}

/// `start, start+step, …` up to and including `stop` (within rounding).
pub fn distance_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && start.is_finite() && stop.is_finite() && stop >= start) {
        return Err(Error::Validation(format!("invalid grid {start}:{stop}:{step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + step * i as f64).collect())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub eps: Option<f64>,
    pub tol_abs: Option<f64>,
    pub tol_rel: Option<f64>,
    pub max_iter: Option<usize>,
    pub line_search_evals: Option<usize>,
    pub sdp_tol: Option<f64>,
    pub sdp_max_iter: Option<usize>,
    pub decoy_cutoff: Option<usize>,
    pub phase_points: Option<usize>,
    pub include_vacuum_outcome: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub case: Option<String>,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub channel: ChannelSection,
    /// Bob's link (MDI). Without it, `[channel]` link keys apply to both
    /// parties while Bob keeps the preset misalignment.
    pub channel_b: Option<ChannelSection>,
    #[serde(default)]
    pub intensities: IntensitySection,
    #[serde(default)]
    pub optimize: OptimizeSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub solver: SolverSection,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Base preset: `case` if given, else the default for `[protocol] name`.
    pub fn base(&self) -> Result<RunConfig> {
        let base = match (&self.case, self.protocol.name) {
            (Some(case), proto) => {
                let c = preset(case)?;
                if let Some(p) = proto {
                    if p != c.protocol {
                        return Err(Error::Config(format!("case '{case}' is {} but protocol is {p}", c.protocol)));
                    }
                }
                c
            }
            (None, Some(p)) => default_for(p),
            (None, None) => return Err(Error::Config("config needs a case or a [protocol] name".into())),
        };
        Ok(base)
    }

    pub fn to_run_config(&self) -> Result<RunConfig> {
        let mut c = self.base()?;
        self.apply(&mut c)?;
        c.validate()?;
        Ok(c)
    }

    /// Overrides the fields that are set. Does not validate.
    pub fn apply(&self, c: &mut RunConfig) -> Result<()> {
        let p = &self.protocol;
        if let Some(m) = p.method {
            c.method = m;
        }
        if let Some(v) = p.p_z {
            c.p_z = v;
        }
        if let Some(v) = p.f_ec {
            c.f_ec = v;
        }

        c.channel = self.channel.apply(c.channel);
        if let Some(b) = &self.channel_b {
            c.channel_b = Some(b.apply(c.channel_b.unwrap_or(c.channel)));
        } else if let Some(b) = c.channel_b {
            // Link keys are shared; Bob keeps his own misalignment.
            c.channel_b = Some(ChannelSection { e_d: None, ..self.channel.clone() }.apply(b));
        }

        let i = &self.intensities;
        c.intensities = IntensitySet {
            mu_signal: i.mu.unwrap_or(c.intensities.mu_signal),
            nu1: i.nu1.unwrap_or(c.intensities.nu1),
            nu2: i.nu2.unwrap_or(c.intensities.nu2),
        };
        if let Some(v) = i.mu_out {
            c.mu_out = v;
        }
        if i.mu_out_b.is_some() {
            c.mu_out_b = i.mu_out_b;
        }

        let o = &self.optimize;
        if let Some(v) = o.enabled {
            c.optimize_mu = v;
        }
        let g = &mut c.mu_grid;
        g.start = o.start.unwrap_or(g.start);
        g.stop = o.stop.unwrap_or(g.stop);
        g.step = o.step.unwrap_or(g.step);
        g.refine_step = o.refine_step.unwrap_or(g.refine_step);
        g.refine_halfwidth = o.refine_halfwidth.unwrap_or(g.refine_halfwidth);

        if let Some(d) = self.scan.distances()? {
            c.distances = d;
        }

        let s = &self.solver;
        let so = &mut c.solver;
        so.eps = s.eps.unwrap_or(so.eps);
        so.tol_abs = s.tol_abs.unwrap_or(so.tol_abs);
        so.tol_rel = s.tol_rel.unwrap_or(so.tol_rel);
        so.max_iter = s.max_iter.unwrap_or(so.max_iter);
        so.line_search_evals = s.line_search_evals.unwrap_or(so.line_search_evals);
        so.sdp.tol = s.sdp_tol.unwrap_or(so.sdp.tol);
        so.sdp.max_iter = s.sdp_max_iter.unwrap_or(so.sdp.max_iter);
        c.decoy_cutoff = s.decoy_cutoff.unwrap_or(c.decoy_cutoff);
        c.phase_points = s.phase_points.unwrap_or(c.phase_points);
        c.include_vacuum_outcome = s.include_vacuum_outcome.unwrap_or(c.include_vacuum_outcome);
        Ok(())
    }

    /// Fully explicit file describing `c`.
    pub fn from_run_config(c: &RunConfig) -> Self {
        Self {
            case: None,
            protocol: ProtocolSection { name: Some(c.protocol), method: Some(c.method), p_z: Some(c.p_z), f_ec: Some(c.f_ec) },
            channel: ChannelSection::from_spec(&c.channel),
            channel_b: c.channel_b.as_ref().map(ChannelSection::from_spec),
            intensities: IntensitySection {
                mu: Some(c.intensities.mu_signal),
                nu1: Some(c.intensities.nu1),
                nu2: Some(c.intensities.nu2),
                mu_out: Some(c.mu_out),
                mu_out_b: c.mu_out_b,
            },
            optimize: OptimizeSection {
                enabled: Some(c.optimize_mu),
                start: Some(c.mu_grid.start),
                stop: Some(c.mu_grid.stop),
                step: Some(c.mu_grid.step),
                refine_step: Some(c.mu_grid.refine_step),
                refine_halfwidth: Some(c.mu_grid.refine_halfwidth),
            },
            scan: ScanSection { distances_km: Some(c.distances.clone()), ..Default::default() },
            solver: SolverSection {
                eps: Some(c.solver.eps),
                tol_abs: Some(c.solver.tol_abs),
                tol_rel: Some(c.solver.tol_rel),
                max_iter: Some(c.solver.max_iter),
                line_search_evals: Some(c.solver.line_search_evals),
                sdp_tol: Some(c.solver.sdp.tol),
                sdp_max_iter: Some(c.solver.sdp.max_iter),
                decoy_cutoff: Some(c.decoy_cutoff),
                phase_points: Some(c.phase_points),
                include_vacuum_outcome: Some(c.include_vacuum_outcome),
            },
        }
    }
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    ConfigFile::load(path)?.to_run_config()
}
