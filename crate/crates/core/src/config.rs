//! Run configuration files.
//!
//! Configs are TOML documents with INI-style sections:
//!
//! ```toml
//! analysis_n = 2          # dimension n used for the regime check
//! output = "out/run"      # output directory
//!
//! [grid]
//! dim = 2
//! extents = [1.0, 1.0]
//! cells = [64, 64]
//!
//! [diffusion]
//! delta = 1.0
//! m = 1.5
//! offset = 0.0            # optional, default 0
//! epsilon = 0.0           # optional, default 0
//!
//! [params]
//! chi = 5.0
//! xi = 1.0
//! mu = 1.0
//!
//! [controls]              # optional; every key has a default
//! t_end = 20.0
//! sample_every = 0.1
//! scheme = "linearly_implicit"
//!
//! [initial]               # optional; default gaussian_bump
//! preset = "gaussian_bump"
//! amplitude = 1.0
//! width = 0.15
//! mass = 2.0
//!
//! [monitor]               # optional; defaults depend on m
//! p_list = [2.0]
//! q_list = [2.0]
//! ```
//!
//! Unknown keys are rejected. Parse errors carry the line and column.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{validate_regime, DiffusionSpec, ModelParams};
use crate::monitor::MonitorConfig;
use crate::presets::Preset;
use crate::stepper::{DiffusionScheme, StepControls};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub analysis_n: u32,
    pub output: PathBuf,
    pub grid: Grid,
    pub diffusion: DiffusionSpec,
    pub params: ModelParams,
    pub controls: StepControls,
    pub initial: Preset,
    pub monitor: MonitorConfig,
    /// Non-fatal findings such as an out-of-regime exponent.
    #[serde(skip)]
    pub warnings: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "default_analysis_n")]
    analysis_n: u32,
    #[serde(default = "default_output")]
    output: PathBuf,
    grid: toml::Value,
    diffusion: toml::Value,
    params: toml::Value,
    #[serde(default)]
    controls: Option<RawControls>,
    #[serde(default)]
    initial: Option<toml::Value>,
    #[serde(default)]
    monitor: Option<RawMonitor>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControls {
    cfl_diff: Option<f64>,
    cfl_adv: Option<f64>,
    dt_max: Option<f64>,
    t_end: Option<f64>,
    sample_every: Option<f64>,
    blowup_threshold: Option<f64>,
    scheme: Option<DiffusionScheme>,
    store_snapshots: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMonitor {
    p_list: Option<Vec<f64>>,
    q_list: Option<Vec<f64>>,
    s_list: Option<Vec<f64>>,
    tolerance: Option<f64>,
    window_fraction: Option<f64>,
    growth_tolerance: Option<f64>,
    growing_factor: Option<f64>,
}

fn default_analysis_n() -> u32 {
    2
}

fn default_output() -> PathBuf {
    PathBuf::from("output")
}

/// Default end time when `[controls]` omits `t_end`.
pub const DEFAULT_T_END: f64 = 1.0;

fn section<T: serde::de::DeserializeOwned>(name: &str, v: toml::Value) -> Result<T> {
    v.try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("[{name}] {}", e.message())))
}

fn in_section<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Domain(msg) => Error::Config(format!("[{name}] {msg}")),
        other => other,
    })
}

/// Parses and validates a config, applying documented defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;

    if !(2..=4).contains(&raw.analysis_n) {
        return Err(Error::Config(format!(
            "analysis_n: must be 2, 3 or 4, got {}",
            raw.analysis_n
        )));
    }
    let grid: Grid = in_section("grid", section("grid", raw.grid))?;
    let diffusion: DiffusionSpec = section("diffusion", raw.diffusion)?;
    in_section("diffusion", diffusion.validate())?;
    let params: ModelParams = section("params", raw.params)?;
    in_section("params", params.validate())?;

    let mut controls = StepControls::new(DEFAULT_T_END);
    if let Some(c) = raw.controls {
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut controls.cfl_diff, c.cfl_diff);
        set(&mut controls.cfl_adv, c.cfl_adv);
        set(&mut controls.dt_max, c.dt_max);
        set(&mut controls.t_end, c.t_end);
        set(&mut controls.sample_every, c.sample_every);
        controls.blowup_threshold = c.blowup_threshold;
        if let Some(s) = c.scheme {
            controls.scheme = s;
        }
        if let Some(s) = c.store_snapshots {
            controls.store_snapshots = s;
        }
    }
    in_section("controls", controls.validate())?;

    let initial: Preset = match raw.initial {
        Some(v) => section("initial", v)?,
        None => Preset::default(),
    };
    in_section("initial", initial.validate())?;

    let mut monitor = MonitorConfig::default_for(diffusion.m);
    if let Some(m) = raw.monitor {
        match (m.p_list, m.q_list) {
            (Some(p), Some(q)) => {
                monitor.p_list = p;
                monitor.q_list = q;
            }
            (Some(p), None) => {
                monitor.q_list = vec![2.0; p.len()];
                monitor.p_list = p;
            }
            (None, Some(q)) => {
                if q.len() != monitor.p_list.len() {
                    return Err(Error::Config(
                        "[monitor] q_list given without p_list must match the default pair count"
                            .into(),
                    ));
                }
                monitor.q_list = q;
            }
            (None, None) => {}
        }
        if let Some(s) = m.s_list {
            monitor.s_list = s;
        }
        if let Some(t) = m.tolerance {
            monitor.tolerance = t;
        }
        if let Some(w) = m.window_fraction {
            monitor.window_fraction = w;
        }
        if let Some(g) = m.growth_tolerance {
            monitor.growth_tolerance = g;
        }
        if let Some(g) = m.growing_factor {
            monitor.growing_factor = g;
        }
    }
    in_section("monitor", monitor.validate())?;

    let mut warnings = Vec::new();
    let regime = validate_regime(&diffusion, raw.analysis_n);
    if !regime.within_theorem {
        warnings.push(format!(
            "m = {} is outside the boundedness regime m > {:.6} for n = {}",
            diffusion.m, regime.threshold, raw.analysis_n
        ));
    }

    Ok(RunConfig {
        analysis_n: raw.analysis_n,
        output: raw.output,
        grid,
        diffusion,
        params,
        controls,
        initial,
        monitor,
        warnings,
    })
}

impl RunConfig {
    /// Serializes every field, so `parse_config(&c.to_toml()?)` reproduces `c`.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        parse_config(&text)
    }
}
