//! TOML run configuration.
//!
//! Only `[grid]` (`nx`, `ny`), `[time]` (`t_final`, `steps`) and `model.eps`
//! are required; everything else has a default. Unknown keys are rejected.
//!
//! ```toml
//! mode = "solve"            # optional; must match the command-line mode
//! seed = 0
//!
//! [grid]
//! nx = 16
//! ny = 16
//! lx = 1.0
//! ly = 1.0
//!
//! [time]
//! t_final = 0.5
//! steps = 500
//!
//! [model]
//! eps = 0.5
//! nu = 1.0
//! delta_star = 0.1
//! c1 = 1.0
//! preset = "linear-g-sqrt-alpha"
//! m_eta = 1.0
//! m_theta = 1.0
//! m_u = 1.0
//! m_v = 1.0
//!
//! [constraint]
//! lower = -1.0              # or "unbounded"
//! upper = 1.0
//!
//! [initial]
//! eta = "random(1, 1.0)"
//! theta = "stripe(2)"
//!
//! [control]                 # forcing for solve, starting point for optimize
//! u = "zero"
//! v = "zero"
//!
//! [target]
//! source = "from-control"   # or "profile"
//! u = "constant(2.0)"       # used by from-control
//! v = "zero"
//! eta = "zero"              # used by profile
//! theta = "zero"
//!
//! [optimizer]
//! tol = 1e-10
//! rtol = 1e-5
//! max_iter = 200
//!
//! [solver]
//! cg_tol = 1e-10
//! cg_max_iter = 5000
//! scheme = "semi-implicit"  # default: implicit for optimize, semi-implicit otherwise
//!
//! [output]
//! dir = "out"
//! vtk_stride = 0            # 0 disables VTK snapshots
//!
//! [continuation]
//! ns = [1, 2, 4, 8]         # eps_n = eps_ref + 1/n
//! eps_ref = 0.5             # default: model.eps
//! truncations = [1.0, 2.0, 5.0, 20.0]
//! membership_tol = 1e-2
//! ```

use crate::control::{BoxConstraint, OptimizerOptions};
use crate::error::{KwcError, Result};
use crate::field::Grid2D;
use crate::linalg::CgOptions;
use crate::model::{MaterialFunctions, ModelParams, DEFAULT_PRESET};
use crate::profiles::Profile;
use crate::state::{SolverOptions, StateScheme, TimeGrid};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Solve,
    Optimize,
    EpsContinuation,
    ConstraintContinuation,
    Diagnostics,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Solve,
        Mode::Optimize,
        Mode::EpsContinuation,
        Mode::ConstraintContinuation,
        Mode::Diagnostics,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Optimize => "optimize",
            Mode::EpsContinuation => "eps-continuation",
            Mode::ConstraintContinuation => "constraint-continuation",
            Mode::Diagnostics => "diagnostics",
        }
    }

    /// Modes that run the state solver.
    pub fn needs_solver(&self) -> bool {
        !matches!(self, Mode::ConstraintContinuation)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = KwcError;
    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| KwcError::Config(format!("unknown mode '{s}'")))
    }
}

/// A scalar obstacle or `"unbounded"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Value(f64),
    Unbounded,
}

impl Serialize for Bound {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bound::Value(v) => s.serialize_f64(*v),
            Bound::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Bound::Value(v)),
            Raw::Int(v) => Ok(Bound::Value(v as f64)),
            Raw::Text(t) if t == "unbounded" => Ok(Bound::Unbounded),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"unbounded\", got \"{t}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "one")]
    pub lx: f64,
    #[serde(default = "one")]
    pub ly: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final: f64,
    pub steps: usize,
}

fn one() -> f64 {
    1.0
}

fn default_delta_star() -> f64 {
    0.1
}

fn default_preset() -> String {
    DEFAULT_PRESET.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub eps: f64,
    #[serde(default = "one")]
    pub nu: f64,
    #[serde(default = "default_delta_star")]
    pub delta_star: f64,
    #[serde(default = "one")]
    pub c1: f64,
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default = "one")]
    pub m_eta: f64,
    #[serde(default = "one")]
    pub m_theta: f64,
    #[serde(default = "one")]
    pub m_u: f64,
    #[serde(default = "one")]
    pub m_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintConfig {
    pub lower: Bound,
    pub upper: Bound,
}

impl Default for ConstraintConfig {
    fn default() -> Self {
        Self {
            lower: Bound::Unbounded,
            upper: Bound::Unbounded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairProfile {
    #[serde(default = "zero_profile")]
    pub eta: Profile,
    #[serde(default = "zero_profile")]
    pub theta: Profile,
}

impl Default for PairProfile {
    fn default() -> Self {
        Self {
            eta: Profile::Zero,
            theta: Profile::Zero,
        }
    }
}

fn zero_profile() -> Profile {
    Profile::Zero
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    #[serde(default = "zero_profile")]
    pub u: Profile,
    #[serde(default = "zero_profile")]
    pub v: Profile,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            u: Profile::Zero,
            v: Profile::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetSource {
    #[default]
    Profile,
    /// The state driven by the time-constant control `(u, v)` of this section.
    FromControl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    #[serde(default)]
    pub source: TargetSource,
    #[serde(default = "zero_profile")]
    pub eta: Profile,
    #[serde(default = "zero_profile")]
    pub theta: Profile,
    #[serde(default = "zero_profile")]
    pub u: Profile,
    #[serde(default = "zero_profile")]
    pub v: Profile,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self {
            source: TargetSource::Profile,
            eta: Profile::Zero,
            theta: Profile::Zero,
            u: Profile::Zero,
            v: Profile::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<StateScheme>,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            cg_tol: d.cg.tol,
            cg_max_iter: d.cg.max_iter,
            scheme: None,
            newton_tol: d.newton_tol,
            newton_max_iter: d.newton_max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub vtk_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            vtk_stride: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationConfig {
    pub ns: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_ref: Option<f64>,
    pub truncations: Vec<f64>,
    pub membership_tol: f64,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        Self {
            ns: vec![1, 2, 4, 8],
            eps_ref: None,
            truncations: vec![1.0, 2.0, 5.0, 20.0],
            membership_tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub seed: u64,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub constraint: ConstraintConfig,
    #[serde(default)]
    pub initial: PairProfile,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub target: TargetConfig,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub continuation: ContinuationConfig,
}

fn range_err(field: &str, allowed: &str, got: impl fmt::Display) -> KwcError {
    KwcError::Config(format!("{field} must be {allowed}, got {got}"))
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| KwcError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| KwcError::Config(e.to_string()))
    }

    pub fn mode(&self) -> Result<Mode> {
        self.mode
            .ok_or_else(|| KwcError::Config("mode is not set (config key or command line)".into()))
    }

    /// Range checks. Mode-dependent checks need `mode` to be set.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.nx < 3 || g.ny < 3 {
            return Err(range_err("grid.nx/grid.ny", ">= 3", format!("{}x{}", g.nx, g.ny)));
        }
        if !(g.lx.is_finite() && g.lx > 0.0 && g.ly.is_finite() && g.ly > 0.0) {
            return Err(range_err("grid.lx/grid.ly", "> 0", format!("{}x{}", g.lx, g.ly)));
        }
        if self.time.steps < 1 {
            return Err(range_err("time.steps", ">= 1", self.time.steps));
        }
        if !(self.time.t_final.is_finite() && self.time.t_final > 0.0) {
            return Err(range_err("time.t_final", "> 0", self.time.t_final));
        }
        let m = &self.model;
        if !(m.eps.is_finite() && m.eps >= 0.0) {
            return Err(range_err("model.eps", ">= 0", m.eps));
        }
        if let Some(mode) = self.mode {
            if mode.needs_solver() && m.eps <= 0.0 {
                return Err(KwcError::Config(format!(
                    "model.eps must be > 0 for solver modes (mode = {mode}), got {}",
                    m.eps
                )));
            }
        }
        if !(m.nu.is_finite() && m.nu > 0.0) {
            return Err(range_err("model.nu", "> 0", m.nu));
        }
        for (name, w) in [("model.m_eta", m.m_eta), ("model.m_theta", m.m_theta), ("model.m_u", m.m_u), ("model.m_v", m.m_v)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(range_err(name, ">= 0", w));
            }
        }
        if m.preset != DEFAULT_PRESET {
            return Err(range_err("model.preset", &format!("\"{DEFAULT_PRESET}\""), &m.preset));
        }
        self.params()?;
        self.constraint()?;
        let s = &self.solver;
        if !(s.cg_tol > 0.0 && s.cg_tol < 1.0) {
            return Err(range_err("solver.cg_tol", "in (0, 1)", s.cg_tol));
        }
        if s.cg_max_iter == 0 || s.newton_max_iter == 0 {
            return Err(range_err("solver.cg_max_iter/newton_max_iter", ">= 1", "0"));
        }
        if !(s.newton_tol > 0.0) {
            return Err(range_err("solver.newton_tol", "> 0", s.newton_tol));
        }
        self.optimizer
            .validate()
            .map_err(|e| KwcError::Config(format!("optimizer: {e}")))?;
        let c = &self.continuation;
        if c.ns.is_empty() || c.ns.contains(&0) || c.ns.windows(2).any(|w| w[1] <= w[0]) {
            return Err(range_err("continuation.ns", "a non-empty increasing list of integers >= 1", format!("{:?}", c.ns)));
        }
        if let Some(e) = c.eps_ref {
            if !(e.is_finite() && e >= 0.0) {
                return Err(range_err("continuation.eps_ref", ">= 0", e));
            }
        }
        if c.truncations.iter().any(|n| !(n.is_finite() && *n >= 0.0)) {
            return Err(range_err("continuation.truncations", "finite and >= 0", format!("{:?}", c.truncations)));
        }
        if !(c.membership_tol.is_finite() && c.membership_tol >= 0.0) {
            return Err(range_err("continuation.membership_tol", ">= 0", c.membership_tol));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.grid.nx, self.grid.ny, self.grid.lx, self.grid.ly)
    }

    pub fn time(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.time.t_final, self.time.steps)
    }

    pub fn params(&self) -> Result<ModelParams> {
        let m = &self.model;
        let mats = MaterialFunctions::linear_g_sqrt_alpha(m.delta_star, m.c1)?;
        ModelParams::new(m.nu, m.eps, mats)?.with_weights(m.m_eta, m.m_theta, m.m_u, m.m_v)
    }

    pub fn constraint(&self) -> Result<BoxConstraint> {
        let lo = match self.constraint.lower {
            Bound::Value(v) => v,
            Bound::Unbounded => f64::NEG_INFINITY,
        };
        let hi = match self.constraint.upper {
            Bound::Value(v) => v,
            Bound::Unbounded => f64::INFINITY,
        };
        BoxConstraint::scalar(lo, hi).map_err(|e| KwcError::Config(format!("constraint: {e}")))
    }

    pub fn solver_options(&self) -> Result<SolverOptions> {
        let default_scheme = match self.mode()? {
            Mode::Optimize => StateScheme::Implicit,
            _ => StateScheme::SemiImplicit,
        };
        Ok(SolverOptions {
            cg: CgOptions {
                tol: self.solver.cg_tol,
                max_iter: self.solver.cg_max_iter,
            },
            scheme: self.solver.scheme.unwrap_or(default_scheme),
            newton_tol: self.solver.newton_tol,
            newton_max_iter: self.solver.newton_max_iter,
        })
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| KwcError::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg = RunConfig::from_toml_str(&text)
        .map_err(|e| KwcError::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}
