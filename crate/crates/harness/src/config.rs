//! Experiment configuration, read from TOML.
//!
//! Every table rejects unknown keys. See `configs/example.toml` for the full
//! key set with defaults.

use herman_kluk::coherent::{QuadratureOptions, SiegelMatrix};
use herman_kluk::flow::{PhasePoint, DEFAULT_STEPS_PER_UNIT};
use herman_kluk::hamiltonians::{make_model, HamiltonianModel, ModelKind, ModelParams};
use herman_kluk::hk::{HKConfig, ThetaMode};
use herman_kluk::linalg::RMat;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Configuration problem, naming the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    fn new(key: &str, message: impl Into<String>) -> Self {
        ConfigError {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "`{}`: {}", self.key, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed for the optional quadrature-lattice jitter.
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub propagator: PropagatorSection,
    /// Second propagator for phase-invariance studies.
    #[serde(default)]
    pub comparison: Option<PropagatorSection>,
    pub time: TimeSection,
    #[serde(default)]
    pub ladder: Option<LadderSection>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub ehrenfest: EhrenfestSection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: String,
    #[serde(default = "one_usize")]
    pub dim: usize,
    #[serde(default = "one")]
    pub omega: f64,
    #[serde(default = "one")]
    pub strength: f64,
    /// Blocks of `½(Gq·q + 2Lq·p + Kp·p)`, row by row.
    #[serde(default)]
    pub g: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub l: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub k: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default)]
    pub q: Option<Vec<f64>>,
    #[serde(default)]
    pub p: Option<Vec<f64>>,
    /// `Γ = i·width·I`.
    #[serde(default = "one")]
    pub width: f64,
    pub hbar: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaChoice {
    Frozen,
    Constant,
    Thawed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropagatorSection {
    #[serde(default = "frozen")]
    pub theta_mode: ThetaChoice,
    /// Decomposition width, `Γ = i·gamma·I`.
    #[serde(default = "one")]
    pub gamma: f64,
    /// Synthesis width for `theta_mode = "constant"`, `Θ = i·theta·I`.
    #[serde(default)]
    pub theta: Option<f64>,
    #[serde(default = "default_spu")]
    pub steps_per_unit: usize,
}

impl Default for PropagatorSection {
    fn default() -> Self {
        PropagatorSection {
            theta_mode: ThetaChoice::Frozen,
            gamma: 1.0,
            theta: None,
            steps_per_unit: DEFAULT_STEPS_PER_UNIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub horizon: f64,
    /// Defaults to `[horizon]`.
    #[serde(default)]
    pub samples: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSection {
    pub hbar: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_coverage")]
    pub coverage_target: f64,
    /// Quadrature nodes per `√ħ` and axis.
    #[serde(default = "three")]
    pub density: usize,
    #[serde(default = "fifty")]
    pub max_half_width: f64,
    /// Random lattice shift drawn from the seed.
    #[serde(default)]
    pub jitter: bool,
    /// Position margin around the centre trajectory, in `√ħ`.
    #[serde(default = "twenty")]
    pub margin: f64,
    /// Momentum margin above the largest centre momentum, in `√ħ`.
    #[serde(default = "ten")]
    pub momentum_margin: f64,
    /// Manual position box; replaces the trajectory-based extent.
    #[serde(default)]
    pub q_lower: Option<Vec<f64>>,
    #[serde(default)]
    pub q_upper: Option<Vec<f64>>,
    /// Manual momentum cutoff per axis, before the momentum margin.
    #[serde(default)]
    pub p_max: Option<Vec<f64>>,
    /// Points per axis; defaults to the next power of two that resolves the
    /// momentum cutoff.
    #[serde(default)]
    pub points: Option<usize>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            coverage_target: default_coverage(),
            density: 3,
            max_half_width: 50.0,
            jitter: false,
            margin: 20.0,
            momentum_margin: 10.0,
            q_lower: None,
            q_upper: None,
            p_max: None,
            points: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    Auto,
    ExactQuadratic,
    SplitStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    #[serde(default = "auto")]
    pub solver: SolverChoice,
    /// Split-step steps per unit time.
    #[serde(default = "default_split_spu")]
    pub steps_per_unit: usize,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        ReferenceSection {
            solver: SolverChoice::Auto,
            steps_per_unit: default_split_spu(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EhrenfestSection {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "ten")]
    pub max_horizon: f64,
    #[serde(default = "quarter")]
    pub time_step: f64,
}

impl Default for EhrenfestSection {
    fn default() -> Self {
        EhrenfestSection {
            threshold: default_threshold(),
            max_horizon: 10.0,
            time_step: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelOperator {
    Hk,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default = "hk_operator")]
    pub operator: KernelOperator,
    /// Defaults to the time horizon.
    #[serde(default)]
    pub time: Option<f64>,
    /// Off-graph bin width in `√ħ`.
    #[serde(default = "one")]
    pub bin_width: f64,
    /// X lattice: `2m+1` nodes per axis around the initial point.
    #[serde(default = "one_usize")]
    pub x_half_count: usize,
    /// Spacing in `√ħ`.
    #[serde(default = "one")]
    pub x_spacing: f64,
    /// Y lattice around the flow image of the initial point.
    #[serde(default = "default_y_half")]
    pub y_half_count: usize,
    #[serde(default = "half")]
    pub y_spacing: f64,
    /// Off-graph distance, in `√ħ`, for the concentration figures.
    #[serde(default = "five")]
    pub far_distance: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection {
            operator: KernelOperator::Hk,
            time: None,
            bin_width: 1.0,
            x_half_count: 1,
            x_spacing: 1.0,
            y_half_count: default_y_half(),
            y_spacing: 0.5,
            far_distance: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
    /// Also write every HK state as a text dump.
    #[serde(default)]
    pub dump_waves: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_dir(),
            dump_waves: false,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn quarter() -> f64 {
    0.25
}
fn five() -> f64 {
    5.0
}
fn ten() -> f64 {
    10.0
}
fn twenty() -> f64 {
    20.0
}
fn fifty() -> f64 {
    50.0
}
fn one_usize() -> usize {
    1
}
fn three() -> usize {
    3
}
fn default_y_half() -> usize {
    24
}
fn default_spu() -> usize {
    DEFAULT_STEPS_PER_UNIT
}
fn default_split_spu() -> usize {
    2000
}
fn default_coverage() -> f64 {
    QuadratureOptions::default().coverage_target
}
fn default_threshold() -> f64 {
    0.1
}
fn default_dir() -> String {
    "out".into()
}
fn frozen() -> ThetaChoice {
    ThetaChoice::Frozen
}
fn auto() -> SolverChoice {
    SolverChoice::Auto
}
fn hk_operator() -> KernelOperator {
    KernelOperator::Hk
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        let key = message
            .strip_prefix("unknown field `")
            .and_then(|rest| rest.split('`').next())
            .unwrap_or("")
            .to_string();
        ConfigError { key, message }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::new(key, format!("must be positive and finite, got {v}")))
    }
}

fn matrix(key: &str, rows: &Option<Vec<Vec<f64>>>, d: usize) -> Result<Option<RMat>, ConfigError> {
    let Some(rows) = rows else { return Ok(None) };
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(ConfigError::new(key, format!("must be a {d}x{d} matrix")));
    }
    Ok(Some(RMat::from_fn(d, d, |i, j| rows[i][j])))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = self.model.dim;
        if d == 0 {
            return Err(ConfigError::new("model.dim", "must be at least 1"));
        }
        self.model_kind()?;
        self.build_model()?;
        for (key, v) in [("initial.q", &self.initial.q), ("initial.p", &self.initial.p)] {
            if v.as_ref().is_some_and(|v| v.len() != d) {
                return Err(ConfigError::new(key, format!("must have {d} entries")));
            }
        }
        positive("initial.width", self.initial.width)?;
        positive("initial.hbar", self.initial.hbar)?;
        self.check_propagator("propagator", &self.propagator)?;
        if let Some(c) = &self.comparison {
            self.check_propagator("comparison", c)?;
        }
        positive("time.horizon", self.time.horizon)?;
        for &s in self.sample_times().iter() {
            if !(0.0..=self.time.horizon).contains(&s) {
                return Err(ConfigError::new("time.samples", format!("{s} lies outside [0, horizon]")));
            }
        }
        if let Some(l) = &self.ladder {
            if l.hbar.len() < 3 {
                return Err(ConfigError::new("ladder.hbar", "at least 3 values are required"));
            }
            if l.hbar.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
                return Err(ConfigError::new("ladder.hbar", "values must be positive"));
            }
            if l.hbar.windows(2).any(|w| w[1] >= w[0]) {
                return Err(ConfigError::new("ladder.hbar", "values must be strictly decreasing"));
            }
        }
        let g = &self.grid;
        if !(g.coverage_target > 0.0 && g.coverage_target < 1.0) {
            return Err(ConfigError::new("grid.coverage_target", "must lie in (0, 1)"));
        }
        if g.density == 0 {
            return Err(ConfigError::new("grid.density", "must be at least 1"));
        }
        positive("grid.max_half_width", g.max_half_width)?;
        positive("grid.margin", g.margin)?;
        positive("grid.momentum_margin", g.momentum_margin)?;
        match (&g.q_lower, &g.q_upper) {
            (Some(lo), Some(hi)) => {
                if lo.len() != d || hi.len() != d || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                    return Err(ConfigError::new("grid.q_lower", format!("needs {d} entries, each below grid.q_upper")));
                }
            }
            (None, None) => {}
            _ => return Err(ConfigError::new("grid.q_upper", "q_lower and q_upper must be given together")),
        }
        if g.p_max.as_ref().is_some_and(|p| p.len() != d || p.iter().any(|v| !(*v >= 0.0))) {
            return Err(ConfigError::new("grid.p_max", format!("needs {d} nonnegative entries")));
        }
        if g.points.is_some_and(|n| n < 8) {
            return Err(ConfigError::new("grid.points", "must be at least 8"));
        }
        if self.reference.steps_per_unit == 0 {
            return Err(ConfigError::new("reference.steps_per_unit", "must be positive"));
        }
        if self.reference.solver == SolverChoice::ExactQuadratic && !self.build_model()?.is_quadratic() {
            return Err(ConfigError::new("reference.solver", "exact_quadratic needs a quadratic model"));
        }
        let e = &self.ehrenfest;
        positive("ehrenfest.threshold", e.threshold)?;
        positive("ehrenfest.max_horizon", e.max_horizon)?;
        positive("ehrenfest.time_step", e.time_step)?;
        let k = &self.kernel;
        if let Some(t) = k.time {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(ConfigError::new("kernel.time", "must be nonnegative"));
            }
        }
        positive("kernel.bin_width", k.bin_width)?;
        positive("kernel.x_spacing", k.x_spacing)?;
        positive("kernel.y_spacing", k.y_spacing)?;
        positive("kernel.far_distance", k.far_distance)?;
        Ok(())
    }

    fn check_propagator(&self, table: &str, p: &PropagatorSection) -> Result<(), ConfigError> {
        positive(&format!("{table}.gamma"), p.gamma)?;
        if p.steps_per_unit == 0 {
            return Err(ConfigError::new(&format!("{table}.steps_per_unit"), "must be positive"));
        }
        match (p.theta_mode, p.theta) {
            (ThetaChoice::Constant, None) => Err(ConfigError::new(
                &format!("{table}.theta"),
                "required when theta_mode = \"constant\"",
            )),
            (_, Some(t)) => positive(&format!("{table}.theta"), t),
            _ => Ok(()),
        }
    }

    pub fn model_kind(&self) -> Result<ModelKind, ConfigError> {
        self.model.kind.parse().map_err(|e: herman_kluk::Error| ConfigError::new("model.kind", e.to_string()))
    }

    pub fn build_model(&self) -> Result<HamiltonianModel, ConfigError> {
        let d = self.model.dim;
        let mut params = ModelParams::new(d);
        params.omega = self.model.omega;
        params.strength = self.model.strength;
        params.g = matrix("model.g", &self.model.g, d)?;
        params.l = matrix("model.l", &self.model.l, d)?;
        params.k = matrix("model.k", &self.model.k, d)?;
        make_model(self.model_kind()?, &params).map_err(|e| ConfigError::new("model", e.to_string()))
    }

    pub fn dim(&self) -> usize {
        self.model.dim
    }

    pub fn initial_point(&self) -> PhasePoint {
        let d = self.dim();
        PhasePoint::new(
            self.initial.q.clone().unwrap_or_else(|| vec![0.0; d]),
            self.initial.p.clone().unwrap_or_else(|| vec![0.0; d]),
        )
    }

    pub fn initial_width(&self) -> SiegelMatrix {
        SiegelMatrix::scaled_identity(self.dim(), self.initial.width).expect("validated width")
    }

    /// Sorted sample times.
    pub fn sample_times(&self) -> Vec<f64> {
        let mut t = self.time.samples.clone().unwrap_or_else(|| vec![self.time.horizon]);
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    pub fn ladder(&self) -> Option<&[f64]> {
        self.ladder.as_ref().map(|l| l.hbar.as_slice())
    }

    pub fn quadrature(&self, offset: Option<Vec<f64>>) -> QuadratureOptions {
        QuadratureOptions {
            coverage_target: self.grid.coverage_target,
            density: self.grid.density,
            max_half_width: self.grid.max_half_width,
            offset,
        }
    }

    /// Propagator settings for `section` with the given lattice shift.
    pub fn hk_config(&self, section: &PropagatorSection, offset: Option<Vec<f64>>) -> herman_kluk::Result<HKConfig> {
        let d = self.dim();
        let mode = match section.theta_mode {
            ThetaChoice::Frozen => ThetaMode::FrozenIdentity,
            ThetaChoice::Thawed => ThetaMode::Thawed,
            ThetaChoice::Constant => ThetaMode::Constant(SiegelMatrix::scaled_identity(d, section.theta.unwrap_or(1.0))?),
        };
        let gamma = SiegelMatrix::scaled_identity(d, section.gamma)?;
        Ok(HKConfig::new(mode, gamma, self.quadrature(offset))?.with_steps_per_unit(section.steps_per_unit))
    }
}
