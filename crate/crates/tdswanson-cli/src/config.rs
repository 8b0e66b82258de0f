use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};
use tdswanson::linalg;
use tdswanson::metric_flow::{FlowMode, FlowOptions, TimeGrid, ZPolicy};
use tdswanson::model::{CoefficientScenario, ComplexValue, ScenarioSpec};
use tdswanson::ode::Tolerances;

use crate::error::{CliError, CliResult};
use crate::range::RangeSpec;

pub const MIN_DIM: usize = 8;
pub const MAX_DIM: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Metric flow for complex coefficients, LR solve, observables.
    Complex,
    /// Metric flow for real coefficients, LR solve, observables.
    Real,
    /// Time-independent metric for constant complex coefficients.
    Static,
    /// Time-independent metric for constant real coefficients.
    StaticReal,
    /// η ≡ 1 for Hermitian coefficients.
    Identity,
}

impl Mode {
    pub fn is_static(self) -> bool {
        matches!(self, Mode::Static | Mode::StaticReal)
    }

    pub fn flow_mode(self) -> Option<FlowMode> {
        match self {
            Mode::Complex => Some(FlowMode::Complex),
            Mode::Real => Some(FlowMode::Real),
            Mode::Identity => Some(FlowMode::Identity),
            Mode::Static | Mode::StaticReal => None,
        }
    }
}

/// Scenario given as a path to a scenario file or inline.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ScenarioSource {
    Path(PathBuf),
    Inline(ScenarioSpec),
}

impl<'de> Deserialize<'de> for ScenarioSource {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        match serde_json::Value::deserialize(d)? {
            serde_json::Value::String(s) => Ok(ScenarioSource::Path(s.into())),
            v @ serde_json::Value::Object(_) => serde_path_to_error::deserialize(v)
                .map(ScenarioSource::Inline)
                .map_err(|e| D::Error::custom(format!("at `{}`: {}", e.path(), e.inner()))),
            _ => Err(D::Error::custom("expected a scenario file path or an inline scenario object")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditions {
    /// Φ0; required by the complex and real modes.
    #[serde(default)]
    pub phi: Option<f64>,
    /// φ0
    #[serde(default)]
    pub varphi: f64,
    /// r0; when absent the squeeze is matched to η(t0).
    #[serde(default)]
    pub r: Option<f64>,
    /// φ_s0; only read together with `r`.
    #[serde(default)]
    pub phi_s: Option<f64>,
    /// θ0
    #[serde(default)]
    pub theta: ComplexValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    ZAbs,
    Phi,
    Varphi,
    OmegaAbs,
    AlphaAbs,
    BetaAbs,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::ZAbs => "z_abs",
            SweepParam::Phi => "phi",
            SweepParam::Varphi => "varphi",
            SweepParam::OmegaAbs => "omega_abs",
            SweepParam::AlphaAbs => "alpha_abs",
            SweepParam::BetaAbs => "beta_abs",
        }
    }

    pub fn is_coefficient(self) -> bool {
        matches!(self, SweepParam::OmegaAbs | SweepParam::AlphaAbs | SweepParam::BetaAbs)
    }
}

impl FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| {
            format!("unknown sweep parameter `{s}`; expected one of z_abs, phi, varphi, omega_abs, alpha_abs, beta_abs")
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub range: RangeSpec,
}

fn default_dim() -> usize {
    40
}

fn default_levels() -> Vec<usize> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioSource,
    pub mode: Mode,
    /// |z| of the initial (or static) metric.
    #[serde(default)]
    pub z_abs: Option<f64>,
    #[serde(default)]
    pub initial: InitialConditions,
    /// Output grid of the time-dependent modes.
    #[serde(default)]
    pub grid: Option<TimeGrid>,
    /// Fock truncation of the operator checks.
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub z_policy: ZPolicy,
    /// LR levels n compared with direct propagation when verifying.
    #[serde(default = "default_levels")]
    pub levels: Vec<usize>,
    /// Relative to the config file.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub verify: bool,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

impl RunConfig {
    /// Parses a config; errors cite the offending JSON path.
    pub fn from_json_str(s: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("at `{path}`: {}", e.inner()))
        })
    }

    pub fn flow_options(&self) -> Option<FlowOptions> {
        Some(FlowOptions { mode: self.mode.flow_mode()?, policy: self.z_policy, tol: self.tolerances })
    }

    /// Checks that the fields the mode needs are present and in range;
    /// `swept` names a field a sweep will supply.
    pub fn validate(&self, swept: Option<SweepParam>) -> CliResult<()> {
        let cfg = |m: String| Err(CliError::Config(m));
        if !(MIN_DIM..=MAX_DIM).contains(&self.dim) {
            return cfg(format!("dim = {} outside [{MIN_DIM}, {MAX_DIM}]", self.dim));
        }
        let tol = &self.tolerances;
        if !(tol.rtol > 0.0 && tol.atol > 0.0 && tol.h_min > 0.0 && tol.max_steps > 0) {
            return cfg("tolerances must be positive".into());
        }
        let supplied = |p: SweepParam| swept == Some(p);
        if !supplied(SweepParam::ZAbs) {
            match self.z_abs {
                None if self.mode != Mode::Identity => return cfg(format!("mode {:?} needs `z_abs`", self.mode)),
                Some(z) if !(0.0..1.0).contains(&z) => return cfg(format!("z_abs = {z} outside [0, 1)")),
                Some(z) if self.mode.is_static() && z == 0.0 => {
                    return cfg("static modes need z_abs in (0, 1)".into());
                }
                _ => {}
            }
        }
        if self.initial.phi_s.is_some() && self.initial.r.is_none() {
            return cfg("`initial.phi_s` needs `initial.r`".into());
        }
        if let Some(r) = self.initial.r {
            if !(r >= 0.0 && r.is_finite()) {
                return cfg(format!("initial.r = {r} must be finite and non-negative"));
            }
        }
        match self.mode {
            Mode::Complex | Mode::Real => {
                if self.initial.phi.is_none() && !supplied(SweepParam::Phi) {
                    return cfg(format!("mode {:?} needs `initial.phi`", self.mode));
                }
            }
            Mode::Identity => {
                if self.z_abs.is_some_and(|z| z != 0.0) || self.initial.phi.is_some_and(|p| p != 0.0) {
                    return cfg("identity mode has η ≡ 1: z_abs and initial.phi must be absent or 0".into());
                }
            }
            Mode::Static | Mode::StaticReal => {}
        }
        if let Some(p) = swept {
            let ok = match self.mode {
                Mode::Static | Mode::StaticReal => matches!(p, SweepParam::ZAbs) || p.is_coefficient(),
                Mode::Complex | Mode::Real => true,
                Mode::Identity => p.is_coefficient(),
            };
            if !ok {
                return cfg(format!("parameter {} cannot be swept in mode {:?}", p.name(), self.mode));
            }
        }
        if self.mode.flow_mode().is_some() {
            let Some(g) = self.grid else {
                return cfg(format!("mode {:?} needs `grid`", self.mode));
            };
            TimeGrid::new(g.t0, g.t1, g.points).map_err(CliError::config)?;
            let interior = linalg::interior(self.dim);
            if self.levels.is_empty() {
                return cfg("`levels` must list at least one LR level".into());
            }
            if let Some(&n) = self.levels.iter().find(|&&n| n >= interior) {
                return cfg(format!("level {n} does not fit the interior block {interior} of dim {}", self.dim));
            }
        }
        Ok(())
    }
}

/// A parsed config with its scenario resolved.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub scenario: CoefficientScenario,
    /// Directory that relative paths in the config refer to.
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json_str(&text, &base_dir)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.to_string().trim_start_matches("config error: "))))
    }

    pub fn from_json_str(text: &str, base_dir: &Path) -> CliResult<Self> {
        let config = RunConfig::from_json_str(text)?;
        let scenario = match &config.scenario {
            ScenarioSource::Path(p) => CoefficientScenario::from_path(&base_dir.join(p)),
            ScenarioSource::Inline(spec) => CoefficientScenario::new(spec.clone()),
        }
        .map_err(|e| CliError::Config(format!("scenario: {e}")))?;
        Ok(LoadedConfig { config, scenario, base_dir: base_dir.to_path_buf() })
    }

    /// Output directory: the override, else `output_dir`, else `out` beside the config.
    pub fn output_dir(&self, over: Option<&Path>) -> PathBuf {
        match (over, &self.config.output_dir) {
            (Some(p), _) => p.to_path_buf(),
            (None, Some(p)) => self.base_dir.join(p),
            (None, None) => self.base_dir.join("out"),
        }
    }

    /// Checks the scenario against the mode at the times the run reads it.
    pub fn check_scenario(&self) -> CliResult<()> {
        let cfg = &self.config;
        let sc = &self.scenario;
        if cfg.mode.is_static() && !sc.is_time_independent() {
            return Err(CliError::Config("static modes need constant coefficients".into()));
        }
        let times = match (cfg.grid, cfg.mode.is_static()) {
            (Some(g), false) => {
                let (d0, d1) = sc.domain();
                if g.t0 < d0 || g.t1 > d1 {
                    return Err(CliError::Config(format!(
                        "grid [{}, {}] leaves the scenario domain [{d0}, {d1}]",
                        g.t0, g.t1
                    )));
                }
                TimeGrid::new(g.t0, g.t1, g.points).map_err(CliError::config)?.times()
            }
            _ => vec![sc.domain().0],
        };
        for t in times {
            let k = sc.coefficients(t).map_err(CliError::config)?;
            match cfg.mode {
                Mode::Real | Mode::StaticReal if !k.is_real(1e-12) => {
                    return Err(CliError::Config(format!("mode {:?} needs real ω, α, β; t = {t} gives {k:?}", cfg.mode)));
                }
                Mode::Identity if !k.is_hermitian(1e-12) => {
                    return Err(CliError::Config(format!(
                        "identity mode needs Hermitian coefficients (real ω, α = β*); t = {t} gives {k:?}"
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }
}
