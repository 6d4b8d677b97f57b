//! Run settings: command-line flags layered over an optional config file
//! layered over built-in defaults.
//!
//! The resolved [`RunConfig`] is written into every artifact. It has the
//! same shape as a config file, so an artifact's `run_config` can be saved
//! and passed back with `--config` to reproduce it.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use linflow_core::mapping::{BranchInput, ModelKind, DEFAULT_COND_THRESHOLD};
use linflow_core::regression::{BlrConfig, Engine, EngineConfig, OlsConfig, PlsConfig};
use linflow_core::evaluation::DEFAULT_MAPE_EPS;
use linflow_core::scenario::McConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum GenMode {
    Mc,
    Profiles,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    /// Present in configs copied out of an artifact; ignored on input.
    pub command: Option<String>,
    pub inputs: Option<BTreeMap<String, String>>,
    pub version: Option<String>,
    pub seed: Option<u64>,
    pub gen: GenFile,
    pub fit: FitFile,
    pub eval: EvalFile,
    pub surface: SurfaceFile,
    pub engines: EnginesFile,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenFile {
    pub mode: Option<GenMode>,
    pub n: Option<usize>,
    pub split: Option<[usize; 2]>,
    pub p_factor_range: Option<[f64; 2]>,
    pub q_ratio_range: Option<[f64; 2]>,
    pub v_setpoint_jitter: Option<f64>,
    pub profiles: Option<String>,
    pub amplitude: Option<f64>,
    pub noise_sigma: Option<f64>,
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitFile {
    pub kind: Option<ModelKind>,
    pub engine: Option<Engine>,
    pub branch_input: Option<BranchInput>,
    pub cond_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalFile {
    pub engines: Option<Vec<Engine>>,
    pub contrast: Option<bool>,
    pub mape_eps: Option<f64>,
    pub branch_input: Option<BranchInput>,
    pub cond_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceFile {
    pub p_range: Option<[f64; 2]>,
    pub q_range: Option<[f64; 2]>,
    pub grid: Option<usize>,
}

/// Per-engine settings. Anything left out keeps the engine default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnginesFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ols: Option<OlsConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pls: Option<PlsConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blr: Option<BlrConfig>,
}

impl EnginesFile {
    pub fn config(&self, engine: Engine) -> EngineConfig {
        match engine {
            Engine::Ols => EngineConfig::Ols(self.ols.clone().unwrap_or_default()),
            Engine::Pls => EngineConfig::Pls(self.pls.clone().unwrap_or_default()),
            Engine::Blr => EngineConfig::Blr(self.blr.clone().unwrap_or_default()),
        }
    }

    /// Only the engines in `used`, fully spelled out.
    pub fn resolved(&self, used: &[Engine]) -> EnginesFile {
        let mut out = EnginesFile::default();
        for e in used {
            match self.config(*e) {
                EngineConfig::Ols(c) => out.ols = Some(c),
                EngineConfig::Pls(c) => out.pls = Some(c),
                EngineConfig::Blr(c) => out.blr = Some(c),
            }
        }
        out
    }
}

pub fn read_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenSettings {
    pub mode: GenMode,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<[usize; 2]>,
    pub q_ratio_range: [f64; 2],
    pub v_setpoint_jitter: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_factor_range: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profiles: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

/// Flag values of `gen`; `None` means "not given".
#[derive(Debug, Clone, Default)]
pub struct GenFlags {
    pub mode: Option<GenMode>,
    pub n: Option<usize>,
    pub split: Option<[usize; 2]>,
    pub profiles: Option<String>,
    pub amplitude: Option<f64>,
    pub noise_sigma: Option<f64>,
}

pub fn resolve_gen(flags: &GenFlags, file: &GenFile) -> Result<GenSettings, CliError> {
    let mc = McConfig::default();
    let mode = flags.mode.or(file.mode).unwrap_or(GenMode::Mc);
    let split = flags.split.or(file.split);
    let n = flags
        .n
        .or(file.n)
        .or(split.map(|[a, b]| a + b))
        .unwrap_or(mc.n_samples);
    if n == 0 {
        return Err(CliError::usage("--n must be at least 1"));
    }
    if let Some([a, b]) = split {
        if a == 0 || b == 0 || a + b > n {
            return Err(CliError::usage(format!("--split {a},{b} does not fit in {n} snapshots")));
        }
    }
    let profiles = flags.profiles.clone().or(file.profiles.clone());
    let is_mc = mode == GenMode::Mc;
    Ok(GenSettings {
        mode,
        n,
        split,
        q_ratio_range: file.q_ratio_range.unwrap_or(mc.q_ratio_range),
        v_setpoint_jitter: file.v_setpoint_jitter.unwrap_or(mc.v_setpoint_jitter),
        p_factor_range: is_mc.then(|| file.p_factor_range.unwrap_or(mc.p_factor_range)),
        amplitude: (!is_mc && profiles.is_none()).then(|| flags.amplitude.or(file.amplitude).unwrap_or(0.15)),
        noise_sigma: (!is_mc).then(|| flags.noise_sigma.or(file.noise_sigma).unwrap_or(0.02)),
        scale: (!is_mc).then(|| file.scale.unwrap_or(1.0)),
        profiles: if is_mc { None } else { profiles },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSettings {
    pub kind: ModelKind,
    pub engine: Engine,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub branch_input: Option<BranchInput>,
    pub cond_threshold: f64,
}

pub fn resolve_fit(
    kind: Option<ModelKind>,
    engine: Option<Engine>,
    branch_input: Option<BranchInput>,
    file: &FitFile,
) -> FitSettings {
    let kind = kind.or(file.kind).unwrap_or(ModelKind::Forward);
    FitSettings {
        kind,
        engine: engine.or(file.engine).unwrap_or(Engine::Pls),
        branch_input: (kind == ModelKind::Branch).then(|| branch_input.or(file.branch_input).unwrap_or_default()),
        cond_threshold: file.cond_threshold.unwrap_or(DEFAULT_COND_THRESHOLD),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSettings {
    pub engines: Vec<Engine>,
    pub contrast: bool,
    pub mape_eps: f64,
    pub branch_input: BranchInput,
    pub cond_threshold: f64,
}

pub fn resolve_eval(
    engines: Option<Vec<Engine>>,
    contrast: bool,
    branch_input: Option<BranchInput>,
    file: &EvalFile,
) -> Result<EvalSettings, CliError> {
    let mut list = engines.or(file.engines.clone()).unwrap_or(vec![Engine::Ols, Engine::Pls, Engine::Blr]);
    let mut seen = Vec::new();
    list.retain(|e| {
        let fresh = !seen.contains(e);
        seen.push(*e);
        fresh
    });
    let mape_eps = file.mape_eps.unwrap_or(DEFAULT_MAPE_EPS);
    if !(mape_eps >= 0.0) {
        return Err(CliError::usage("mape_eps must be ≥ 0"));
    }
    Ok(EvalSettings {
        engines: list,
        contrast: contrast || file.contrast.unwrap_or(false),
        mape_eps,
        branch_input: branch_input.or(file.branch_input).unwrap_or_default(),
        cond_threshold: file.cond_threshold.unwrap_or(DEFAULT_COND_THRESHOLD),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurfaceSettings {
    pub p_range: [f64; 2],
    pub q_range: [f64; 2],
    pub grid: usize,
}

pub fn resolve_surface(
    p_range: Option<[f64; 2]>,
    q_range: Option<[f64; 2]>,
    grid: Option<usize>,
    file: &SurfaceFile,
) -> Result<SurfaceSettings, CliError> {
    let s = SurfaceSettings {
        p_range: p_range.or(file.p_range).unwrap_or([-1.0, 1.0]),
        q_range: q_range.or(file.q_range).unwrap_or([-0.5, 0.5]),
        grid: grid.or(file.grid).unwrap_or(21),
    };
    if s.grid < 2 {
        return Err(CliError::usage("--grid must be at least 2"));
    }
    for r in [s.p_range, s.q_range] {
        if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
            return Err(CliError::usage(format!("range {},{} must be finite and increasing", r[0], r[1])));
        }
    }
    Ok(s)
}

/// Everything a command ran with, as written into its artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gen: Option<GenSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surface: Option<SurfaceSettings>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub engines: Option<EnginesFile>,
}

impl RunConfig {
    pub fn new(command: &'static str, seed: u64) -> Self {
        RunConfig {
            command,
            inputs: BTreeMap::new(),
            seed,
            gen: None,
            fit: None,
            eval: None,
            surface: None,
            engines: None,
        }
    }

    pub fn input(mut self, key: &str, value: impl Into<String>) -> Self {
        self.inputs.insert(key.into(), value.into());
        self
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}
