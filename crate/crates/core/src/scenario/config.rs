//! Scenario documents: parsing, defaults and eager validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversary::{CostFn, CostSchedule, DpConfig, Dynamics, SurplusProcess};
use crate::game::{PayoffMatrix, Recognition, RecognitionCurve};
use crate::mass::{MassParams, MassState};
use crate::reference::ShiftProblem;

use super::table::Format;
use super::ScenarioError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub payoff_matrix: PayoffMatrix,
    #[serde(default)]
    pub recognition: RecognitionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dp: Option<DpSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<MassSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Evenly spaced values from `start` to `stop` inclusive, `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRange {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl SweepRange {
    pub fn new(start: f64, stop: f64, steps: usize) -> Self {
        Self { start, stop, steps }
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.steps;
        (0..=n)
            .map(|i| {
                if i == n {
                    self.stop
                } else {
                    self.start + (self.stop - self.start) * i as f64 / n as f64
                }
            })
            .collect()
    }

    fn validate(&self, what: &str) -> Result<(), ScenarioError> {
        if self.steps < 1 {
            return Err(invalid(what, "sweep ranges must have at least 1 step"));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(invalid(what, "sweep bounds must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TippingSpec {
    /// Standard deviation of the noise on `w`.
    pub sd: f64,
    #[serde(default = "default_tipping_samples")]
    pub samples: usize,
}

fn default_tipping_samples() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecognitionSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<RecognitionCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tipping: Option<TippingSpec>,
}

impl RecognitionSpec {
    /// Sweep values, or the single `w` when no sweep is given.
    pub fn w_values(&self) -> Option<Vec<f64>> {
        match (&self.sweep, self.w) {
            (Some(s), _) => Some(s.values()),
            (None, Some(w)) => Some(vec![w]),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Delta,
    Growth,
    Collapse,
    Maintenance,
}

impl Axis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Axis::Delta => "delta",
            Axis::Growth => "growth",
            Axis::Collapse => "collapse_cost",
            Axis::Maintenance => "maintenance_cost",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub param: Axis,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl AxisSpec {
    pub fn range(&self) -> SweepRange {
        SweepRange::new(self.start, self.stop, self.steps)
    }
}

/// Default regime-map sweep: 20 discount factors by 20 growth rates, each
/// with and without a unit maintenance cost.
pub fn default_regime_axes() -> Vec<AxisSpec> {
    vec![
        AxisSpec {
            param: Axis::Delta,
            start: 0.5,
            stop: 0.99,
            steps: 19,
        },
        AxisSpec {
            param: Axis::Growth,
            start: 0.0,
            stop: 0.5,
            steps: 19,
        },
        AxisSpec {
            param: Axis::Maintenance,
            start: 0.0,
            stop: 1.0,
            steps: 1,
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySpec {
    #[default]
    Greedy,
    AlwaysStop,
    NeverStop,
}

impl PolicySpec {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicySpec::Greedy => "greedy",
            PolicySpec::AlwaysStop => "always_stop",
            PolicySpec::NeverStop => "never_stop",
        }
    }
}

/// Solver settings other than the discount factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_floor: Option<f64>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_max_states")]
    pub max_states: usize,
}

fn default_tolerance() -> f64 {
    DpConfig::new(0.5).tolerance
}
fn default_max_iterations() -> usize {
    DpConfig::new(0.5).max_iterations
}
fn default_grid_points() -> usize {
    DpConfig::new(0.5).grid_points
}
fn default_max_states() -> usize {
    DpConfig::new(0.5).max_states
}

impl Default for SolverSpec {
    fn default() -> Self {
        let c = DpConfig::new(0.5);
        Self {
            tolerance: c.tolerance,
            max_iterations: c.max_iterations,
            r_cap: None,
            r_floor: None,
            grid_points: c.grid_points,
            max_states: c.max_states,
        }
    }
}

/// Growing processes without an explicit cap are truncated at
/// `R = P + DEFAULT_CAP_MULTIPLE (R_0 - P)`.
pub const DEFAULT_CAP_MULTIPLE: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpSpec {
    pub delta: f64,
    pub process: Dynamics,
    /// Initial cooperative payoff; defaults to the matrix's `R`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_r: Option<f64>,
    #[serde(default)]
    pub costs: CostSchedule,
    #[serde(default)]
    pub solver: SolverSpec,
    /// Regime-map axes; the default sweep is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<AxisSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub policy: PolicySpec,
}

impl DpSpec {
    pub fn surplus_process(&self, pd: &PayoffMatrix) -> SurplusProcess {
        SurplusProcess {
            dynamics: self.process.clone(),
            defection_payoff: pd.p,
            initial: self.initial_r.unwrap_or(pd.r),
        }
    }

    pub fn config(&self, pd: &PayoffMatrix) -> DpConfig {
        let r0 = self.initial_r.unwrap_or(pd.r);
        DpConfig {
            delta: self.delta,
            tolerance: self.solver.tolerance,
            max_iterations: self.solver.max_iterations,
            r_cap: Some(
                self.solver
                    .r_cap
                    .unwrap_or(pd.p + DEFAULT_CAP_MULTIPLE * (r0 - pd.p)),
            ),
            r_floor: self.solver.r_floor,
            grid_points: self.solver.grid_points,
            max_states: self.solver.max_states,
        }
    }

    pub fn axes(&self) -> Vec<AxisSpec> {
        self.sweep.clone().unwrap_or_else(default_regime_axes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomKappas {
    pub count: usize,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    pub problem: ShiftProblem,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappas: Option<Vec<f64>>,
    /// Extra shifts drawn uniformly from `[-max_abs, max_abs]` with the
    /// scenario seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomKappas>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MassSpec {
    pub params: MassParams,
    pub state: MassState,
    #[serde(default = "default_mass_steps")]
    pub steps: usize,
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
}

fn default_mass_steps() -> usize {
    50
}
fn default_perturbation() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        field: field.to_string(),
        message: message.into(),
    }
}

fn check<E: std::fmt::Display>(field: &str, r: Result<(), E>) -> Result<(), ScenarioError> {
    r.map_err(|e| invalid(field, e.to_string()))
}

impl Scenario {
    /// Checks every sub-configuration against its own invariants.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        check("payoff_matrix", self.payoff_matrix.validate())?;
        self.validate_recognition()?;
        if let Some(dp) = &self.dp {
            self.validate_dp(dp)?;
        }
        if let Some(r) = &self.reference {
            check("reference.problem", r.problem.validate())?;
            if let Some(k) = &r.kappas {
                if k.iter().any(|x| !x.is_finite()) {
                    return Err(invalid("reference.kappas", "kappa values must be finite"));
                }
            }
            if let Some(rk) = &r.random {
                if rk.count < 1 || !(rk.max_abs.is_finite() && rk.max_abs >= 0.0) {
                    return Err(invalid(
                        "reference.random",
                        "count >= 1 and finite max_abs >= 0 required",
                    ));
                }
            }
        }
        if let Some(m) = &self.mass {
            check("mass.params", m.params.validate())?;
            if ![m.state.x, m.state.forecast, m.state.reference]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(invalid("mass.state", "state values must be finite"));
            }
            if m.steps < 2 {
                return Err(invalid("mass.steps", "steps must be >= 2"));
            }
            if !(m.perturbation.is_finite() && m.perturbation != 0.0) {
                return Err(invalid("mass.perturbation", "perturbation must be finite and nonzero"));
            }
        }
        Ok(())
    }

    fn validate_recognition(&self) -> Result<(), ScenarioError> {
        let rec = &self.recognition;
        if let Some(w) = rec.w {
            check("recognition.w", Recognition::from_ratio(w).map(|_| ()))?;
        }
        if let Some(s) = &rec.sweep {
            s.validate("recognition.sweep")?;
            if s.start < 0.0 || s.stop < 0.0 {
                return Err(invalid("recognition.sweep", "recognition ratio w must be >= 0"));
            }
        }
        if let Some(c) = &rec.curve {
            check("recognition.curve", c.validate())?;
        }
        if let Some(t) = &rec.tipping {
            if !(t.sd.is_finite() && t.sd > 0.0) || t.samples == 0 {
                return Err(invalid(
                    "recognition.tipping",
                    "tipping noise needs sd > 0 and samples >= 1",
                ));
            }
        }
        Ok(())
    }

    fn validate_dp(&self, dp: &DpSpec) -> Result<(), ScenarioError> {
        let pd = &self.payoff_matrix;
        check("dp", dp.config(pd).validate())?;
        check("dp.process", dp.surplus_process(pd).validate())?;
        check("dp.costs", dp.costs.validate(None))?;
        if let Some(axes) = &dp.sweep {
            if axes.is_empty() || axes.len() > 4 {
                return Err(invalid("dp.sweep", "regime sweeps take 1 to 4 axes"));
            }
            for (i, a) in axes.iter().enumerate() {
                a.range().validate("dp.sweep")?;
                if axes[..i].iter().any(|b| b.param == a.param) {
                    return Err(invalid("dp.sweep", format!("axis {} appears twice", a.param.as_str())));
                }
            }
        }
        for a in dp.axes() {
            let vals = a.range().values();
            match a.param {
                Axis::Delta => {
                    if vals.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
                        return Err(invalid("dp.sweep", "discount factor must satisfy 0 < delta < 1"));
                    }
                }
                Axis::Growth => {
                    if !matches!(dp.process, Dynamics::Deterministic { .. }) {
                        return Err(invalid(
                            "dp.sweep",
                            "a growth axis requires a deterministic process",
                        ));
                    }
                    if vals.iter().any(|g| *g <= -1.0) {
                        return Err(invalid("dp.sweep", "growth rate must satisfy g > -1"));
                    }
                }
                Axis::Collapse | Axis::Maintenance => {
                    if vals.iter().any(|c| *c < 0.0) {
                        return Err(invalid("dp.sweep", "costs must be nonnegative"));
                    }
                    let current = match a.param {
                        Axis::Collapse => &dp.costs.collapse,
                        _ => &dp.costs.maintenance,
                    };
                    if !matches!(current, CostFn::Constant(_)) {
                        return Err(invalid(
                            "dp.sweep",
                            "a cost axis replaces a constant cost; tabulated costs cannot be swept",
                        ));
                    }
                }
            }
        }
        if dp.horizon == Some(0) {
            return Err(invalid("dp.horizon", "horizon must be >= 1"));
        }
        Ok(())
    }

    /// Canonical JSON used for hashing and round trips.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Hex SHA-256 of the compact canonical serialization.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&compact))
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text)
}
