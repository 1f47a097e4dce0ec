//! The adversary's stop/continue problem over a cooperative-surplus process.
//!
//! Stopping harvests the surplus `Φ = 2R - 2P` net of the collapse cost and
//! moves the game to an absorbing all-defect state worth nothing further.
//! Continuing pays the maintenance cost and keeps the option alive:
//!
//! ```text
//! V(R) = max{ (2R - 2P) - C_c,  δ E[V(R')] - C_m }
//! ```
//!
//! Growing processes are discretised on a grid in `Φ` that is capped at
//! `r_cap`; growth past the cap is clamped to it.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{self, Kernel, Mdp, MdpAction, MdpError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpError {
    #[error("invalid surplus process: {0}")]
    InvalidProcess(String),
    #[error("invalid cost schedule: {0}")]
    InvalidCosts(String),
    #[error("invalid DP configuration: {0}")]
    InvalidConfig(String),
    #[error("value iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
}

impl From<MdpError> for DpError {
    fn from(e: MdpError) -> Self {
        match e {
            MdpError::NonConvergence {
                iterations,
                residual,
            } => DpError::NonConvergence {
                iterations,
                residual,
            },
            MdpError::InvalidKernel(m) => DpError::InvalidProcess(m),
            MdpError::InvalidDiscount(d) => {
                DpError::InvalidConfig(format!("discount factor must satisfy 0 < delta < 1 (got {d})"))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shock {
    pub growth: f64,
    pub probability: f64,
}

/// How the cooperative surplus moves from one period to the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dynamics {
    /// `Φ' = (1 + growth) Φ`
    Deterministic { growth: f64 },
    /// `Φ' = (1 + g_k) Φ` with probability `p_k`.
    DiscreteShocks { shocks: Vec<Shock> },
    /// Finite chain over cooperative payoffs `R`.
    MarkovGrid {
        grid: Vec<f64>,
        transitions: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurplusProcess {
    pub dynamics: Dynamics,
    /// Defection payoff `P`.
    pub defection_payoff: f64,
    /// Initial cooperative payoff `R_0`.
    pub initial: f64,
}

impl SurplusProcess {
    pub fn validate(&self) -> Result<(), DpError> {
        let bad = |m: String| Err(DpError::InvalidProcess(m));
        let p = self.defection_payoff;
        if !(p.is_finite() && self.initial.is_finite()) {
            return bad("P and R_0 must be finite".into());
        }
        if self.initial <= p {
            return bad(format!(
                "cooperative payoff must exceed the defection payoff (R_0={} <= P={p})",
                self.initial
            ));
        }
        match &self.dynamics {
            Dynamics::Deterministic { growth } => {
                if !(growth.is_finite() && *growth > -1.0) {
                    return bad(format!("growth rate must satisfy g > -1 (got {growth})"));
                }
            }
            Dynamics::DiscreteShocks { shocks } => {
                if shocks.is_empty() {
                    return bad("shock support is empty".into());
                }
                let mut total = 0.0;
                for s in shocks {
                    if !(s.growth.is_finite() && s.growth > -1.0) {
                        return bad(format!("growth rate must satisfy g > -1 (got {})", s.growth));
                    }
                    if !(s.probability.is_finite() && s.probability >= 0.0) {
                        return bad(format!("shock probability {} is negative", s.probability));
                    }
                    total += s.probability;
                }
                if (total - 1.0).abs() > mdp::STOCHASTIC_SLACK {
                    return bad(format!("shock probabilities must sum to 1 (sum {total})"));
                }
            }
            Dynamics::MarkovGrid { grid, transitions } => {
                if grid.is_empty() {
                    return bad("grid is empty".into());
                }
                if grid.windows(2).any(|w| !(w[1] > w[0])) {
                    return bad("grid values must be strictly ascending".into());
                }
                if grid[0] <= p || grid.iter().any(|r| !r.is_finite()) {
                    return bad("every grid value must exceed the defection payoff".into());
                }
                if transitions.len() != grid.len()
                    || transitions.iter().any(|row| row.len() != grid.len())
                {
                    return bad("transition matrix must be square and match the grid".into());
                }
                mdp::check_kernel(&mdp::dense_to_kernel(transitions), grid.len())
                    .map_err(|e| DpError::InvalidProcess(e.to_string()))?;
                if transitions
                    .iter()
                    .flatten()
                    .any(|p| !(p.is_finite() && *p >= 0.0))
                {
                    return bad("transition probabilities must be nonnegative".into());
                }
                if !grid.iter().any(|r| (r - self.initial).abs() <= 1e-12) {
                    return bad(format!("initial payoff {} is not a grid value", self.initial));
                }
            }
        }
        Ok(())
    }

    /// Whether `E[R' | R] >= R` holds everywhere (cooperative learning).
    pub fn satisfies_cooperative_learning(&self) -> bool {
        match &self.dynamics {
            Dynamics::Deterministic { growth } => *growth >= 0.0,
            Dynamics::DiscreteShocks { shocks } => {
                shocks.iter().map(|s| s.probability * s.growth).sum::<f64>() >= -1e-12
            }
            Dynamics::MarkovGrid { grid, transitions } => {
                transitions.iter().zip(grid).all(|(row, r)| {
                    row.iter().zip(grid).map(|(p, rj)| p * rj).sum::<f64>() >= r - 1e-12
                })
            }
        }
    }

    fn has_growth(&self) -> bool {
        match &self.dynamics {
            Dynamics::Deterministic { growth } => *growth > 0.0,
            Dynamics::DiscreteShocks { shocks } => shocks.iter().any(|s| s.growth > 0.0),
            Dynamics::MarkovGrid { .. } => false,
        }
    }

    fn has_decline(&self) -> bool {
        match &self.dynamics {
            Dynamics::Deterministic { growth } => *growth < 0.0,
            Dynamics::DiscreteShocks { shocks } => shocks.iter().any(|s| s.growth < 0.0),
            Dynamics::MarkovGrid { .. } => false,
        }
    }

    /// Builds the finite state space and transition kernel.
    pub fn discretize(&self, config: &DpConfig) -> Result<SurplusGrid, DpError> {
        self.validate()?;
        config.validate()?;
        let p = self.defection_payoff;
        let phi0 = 2.0 * (self.initial - p);

        if let Dynamics::MarkovGrid { grid, transitions } = &self.dynamics {
            let phi = grid.iter().map(|r| 2.0 * (r - p)).collect();
            let initial = grid
                .iter()
                .position(|r| (r - self.initial).abs() <= 1e-12)
                .expect("validated");
            return Ok(SurplusGrid {
                r: grid.clone(),
                phi,
                defection_payoff: p,
                initial,
                kernel: mdp::dense_to_kernel(transitions),
                clamped: vec![false; grid.len()],
            });
        }

        let phi_cap = if self.has_growth() {
            let r_cap = config.r_cap.ok_or_else(|| {
                DpError::InvalidConfig("growing processes require r_cap".into())
            })?;
            if !(r_cap > self.initial) {
                return Err(DpError::InvalidConfig(format!(
                    "r_cap must exceed R_0 (r_cap={r_cap}, R_0={})",
                    self.initial
                )));
            }
            2.0 * (r_cap - p)
        } else {
            phi0
        };
        let phi_floor = if self.has_decline() {
            let r_floor = config
                .r_floor
                .unwrap_or(p + (self.initial - p) * DEFAULT_FLOOR_FRACTION);
            if !(r_floor > p && r_floor < self.initial) {
                return Err(DpError::InvalidConfig(format!(
                    "r_floor must lie strictly between P and R_0 (got {r_floor})"
                )));
            }
            2.0 * (r_floor - p)
        } else {
            phi0
        };

        let phi = match &self.dynamics {
            Dynamics::Deterministic { growth } => {
                let factor = 1.0 + growth;
                let bound = if *growth > 0.0 { phi_cap } else { phi_floor };
                let mut chain = vec![phi0];
                if *growth != 0.0 {
                    loop {
                        let last = *chain.last().unwrap();
                        let next = last * factor;
                        let beyond = if *growth > 0.0 { next >= bound } else { next <= bound };
                        if beyond {
                            chain.push(bound);
                            break;
                        }
                        chain.push(next);
                        if chain.len() > config.max_states {
                            return Err(DpError::InvalidConfig(format!(
                                "growth chain exceeds {} states; move r_cap/r_floor closer to R_0",
                                config.max_states
                            )));
                        }
                    }
                }
                if *growth < 0.0 {
                    chain.reverse();
                }
                chain
            }
            Dynamics::DiscreteShocks { .. } => {
                log_grid(phi_floor, phi_cap, phi0, config.grid_points)
            }
            Dynamics::MarkovGrid { .. } => unreachable!(),
        };

        let shocks: Vec<Shock> = match &self.dynamics {
            Dynamics::Deterministic { growth } => vec![Shock {
                growth: *growth,
                probability: 1.0,
            }],
            Dynamics::DiscreteShocks { shocks } => shocks.clone(),
            Dynamics::MarkovGrid { .. } => unreachable!(),
        };

        let mut kernel = Vec::with_capacity(phi.len());
        let mut clamped = Vec::with_capacity(phi.len());
        for &x in &phi {
            let mut row: Vec<(usize, f64)> = Vec::new();
            let mut hit_edge = false;
            for s in &shocks {
                if s.probability == 0.0 {
                    continue;
                }
                let (nodes, edge) = locate(&phi, x * (1.0 + s.growth));
                hit_edge |= edge;
                for (j, w) in nodes {
                    if w == 0.0 {
                        continue;
                    }
                    match row.iter_mut().find(|(k, _)| *k == j) {
                        Some(entry) => entry.1 += s.probability * w,
                        None => row.push((j, s.probability * w)),
                    }
                }
            }
            row.sort_by_key(|e| e.0);
            kernel.push(row);
            clamped.push(hit_edge);
        }
        let initial = phi.iter().position(|&x| x == phi0).expect("phi0 is a node");
        Ok(SurplusGrid {
            r: phi.iter().map(|x| p + x / 2.0).collect(),
            phi,
            defection_payoff: p,
            initial,
            kernel,
            clamped,
        })
    }
}

const DEFAULT_FLOOR_FRACTION: f64 = 1e-3;

/// `n` log-spaced nodes on `[lo, hi]` with the node nearest `anchor`
/// replaced by `anchor` itself.
fn log_grid(lo: f64, hi: f64, anchor: f64, n: usize) -> Vec<f64> {
    if lo == hi {
        return vec![anchor];
    }
    let n = n.max(2);
    let (a, b) = (lo.ln(), hi.ln());
    let mut nodes: Vec<f64> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect();
    nodes[0] = lo;
    nodes[n - 1] = hi;
    let nearest = nodes
        .iter()
        .enumerate()
        .min_by(|x, y| (x.1 - anchor).abs().total_cmp(&(y.1 - anchor).abs()))
        .map(|(i, _)| i)
        .unwrap();
    nodes[nearest] = anchor;
    nodes
}

/// Linear-interpolation weights of `x` on ascending `nodes`, clamped to the
/// end nodes. The flag reports whether clamping happened.
fn locate(nodes: &[f64], x: f64) -> ([(usize, f64); 2], bool) {
    let last = nodes.len() - 1;
    if x <= nodes[0] {
        return ([(0, 1.0), (0, 0.0)], x < nodes[0]);
    }
    if x >= nodes[last] {
        return ([(last, 1.0), (last, 0.0)], x > nodes[last]);
    }
    let hi = nodes.partition_point(|&v| v <= x);
    let lo = hi - 1;
    if nodes[lo] == x {
        return ([(lo, 1.0), (lo, 0.0)], false);
    }
    let w = (x - nodes[lo]) / (nodes[hi] - nodes[lo]);
    ([(lo, 1.0 - w), (hi, w)], false)
}

/// Discretised surplus process.
#[derive(Debug, Clone, PartialEq)]
pub struct SurplusGrid {
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
    pub defection_payoff: f64,
    pub initial: usize,
    pub kernel: Kernel,
    /// States with a successor clamped to the grid edge.
    pub clamped: Vec<bool>,
}

impl SurplusGrid {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn expected_next(&self, state: usize, values: &[f64]) -> f64 {
        self.kernel[state].iter().map(|&(j, p)| p * values[j]).sum()
    }
}

/// A cost that is constant, tabulated by period (last value held), or
/// tabulated by grid state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostFn {
    Constant(f64),
    ByPeriod { by_period: Vec<f64> },
    ByState { by_state: Vec<f64> },
}

impl Default for CostFn {
    fn default() -> Self {
        CostFn::Constant(0.0)
    }
}

impl CostFn {
    pub fn at(&self, t: usize, state: usize) -> f64 {
        match self {
            CostFn::Constant(c) => *c,
            CostFn::ByPeriod { by_period } => by_period[t.min(by_period.len() - 1)],
            CostFn::ByState { by_state } => by_state[state],
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            CostFn::Constant(c) => std::slice::from_ref(c),
            CostFn::ByPeriod { by_period } => by_period,
            CostFn::ByState { by_state } => by_state,
        }
    }

    /// Periods before the schedule becomes stationary.
    fn transient(&self) -> usize {
        match self {
            CostFn::ByPeriod { by_period } => by_period.len().saturating_sub(1),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CostSchedule {
    /// Collapse-induction cost `C_c`.
    #[serde(default)]
    pub collapse: CostFn,
    /// Fragility-maintenance cost `C_m`.
    #[serde(default)]
    pub maintenance: CostFn,
}

impl CostSchedule {
    pub fn constant(collapse: f64, maintenance: f64) -> Self {
        Self {
            collapse: CostFn::Constant(collapse),
            maintenance: CostFn::Constant(maintenance),
        }
    }

    pub fn validate(&self, n_states: Option<usize>) -> Result<(), DpError> {
        for (name, f) in [("C_c", &self.collapse), ("C_m", &self.maintenance)] {
            let vals = f.values();
            if vals.is_empty() {
                return Err(DpError::InvalidCosts(format!("{name} table is empty")));
            }
            if vals.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
                return Err(DpError::InvalidCosts(format!(
                    "{name} must be nonnegative everywhere"
                )));
            }
            if let (CostFn::ByState { by_state }, Some(n)) = (f, n_states) {
                if by_state.len() != n {
                    return Err(DpError::InvalidCosts(format!(
                        "{name} has {} state entries but the grid has {n} states",
                        by_state.len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn transient_periods(&self) -> usize {
        self.collapse.transient().max(self.maintenance.transient())
    }
}

fn default_tolerance() -> f64 {
    1e-9
}
fn default_max_iterations() -> usize {
    1_000_000
}
fn default_grid_points() -> usize {
    200
}
fn default_max_states() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub delta: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Upper truncation of `R` for growing processes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_cap: Option<f64>,
    /// Lower truncation of `R` for declining processes; defaults to
    /// `P + 0.001 (R_0 - P)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_floor: Option<f64>,
    /// Node count for shock processes.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_max_states")]
    pub max_states: usize,
}

impl DpConfig {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
            r_cap: None,
            r_floor: None,
            grid_points: default_grid_points(),
            max_states: default_max_states(),
        }
    }

    pub fn with_cap(mut self, r_cap: f64) -> Self {
        self.r_cap = Some(r_cap);
        self
    }

    pub fn validate(&self) -> Result<(), DpError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(DpError::InvalidConfig(format!(
                "discount factor must satisfy 0 < delta < 1 (got {})",
                self.delta
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(DpError::InvalidConfig("tolerance must be > 0".into()));
        }
        if self.max_iterations == 0 || self.grid_points < 2 || self.max_states == 0 {
            return Err(DpError::InvalidConfig(
                "max_iterations, max_states >= 1 and grid_points >= 2 required".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Stop,
    Continue,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Stop => "Stop",
            Decision::Continue => "Continue",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegimeLabel {
    ImmediateDestruction,
    RationalStagnation,
    InterventionAbandonment,
}

impl RegimeLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeLabel::ImmediateDestruction => "ImmediateDestruction",
            RegimeLabel::RationalStagnation => "RationalStagnation",
            RegimeLabel::InterventionAbandonment => "InterventionAbandonment",
        }
    }
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Values, greedy policy and regime diagnostics for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct StageValues {
    pub values: Vec<f64>,
    pub policy: Vec<Decision>,
    /// `δ E[V'] - (2R - 2P)`
    pub delta_diag: Vec<f64>,
    /// `C_m - C_c`
    pub cost_diff: Vec<f64>,
    pub regime: Vec<RegimeLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueSolution {
    pub grid: SurplusGrid,
    /// `stages[t]` for transient periods; the last entry is stationary and
    /// applies to every later period.
    pub stages: Vec<StageValues>,
    pub iterations: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
}

impl ValueSolution {
    pub fn stage(&self, t: usize) -> &StageValues {
        &self.stages[t.min(self.stages.len() - 1)]
    }

    /// Period-0 values.
    pub fn values(&self) -> &[f64] {
        &self.stages[0].values
    }

    pub fn policy(&self) -> &[Decision] {
        &self.stages[0].policy
    }

    pub fn initial_value(&self) -> f64 {
        self.values()[self.grid.initial]
    }

    pub fn initial_decision(&self) -> Decision {
        self.policy()[self.grid.initial]
    }
}

/// Harvest from inducing collapse now: `(2R - 2P) - C_c`.
pub fn stop_value(r: f64, p: f64, collapse_cost: f64) -> f64 {
    (2.0 * r - 2.0 * p) - collapse_cost
}

pub fn bellman_backup(
    values: &[f64],
    state: usize,
    grid: &SurplusGrid,
    costs: &CostSchedule,
    t: usize,
    delta: f64,
) -> f64 {
    let stop = stop_value(grid.r[state], grid.defection_payoff, costs.collapse.at(t, state));
    let cont = delta * grid.expected_next(state, values) - costs.maintenance.at(t, state);
    stop.max(cont)
}

/// Abandonment first (`|Δ| <= |ΔC|`), then stagnation (`Δ > ΔC`), otherwise
/// destruction.
pub fn classify_regime(delta_diag: f64, cost_diff: f64) -> RegimeLabel {
    if delta_diag.abs() <= cost_diff.abs() {
        RegimeLabel::InterventionAbandonment
    } else if delta_diag > cost_diff {
        RegimeLabel::RationalStagnation
    } else {
        RegimeLabel::ImmediateDestruction
    }
}

/// Sufficient condition for delaying collapse: `δ > 1 / (1 + g)`.
pub fn stagnation_sufficient(delta: f64, growth: f64) -> bool {
    delta > 1.0 / (1.0 + growth)
}

fn stopping_mdp(grid: &SurplusGrid, costs: &CostSchedule, t: usize) -> Result<Mdp, DpError> {
    let n = grid.len();
    let stop = MdpAction {
        reward: (0..n)
            .map(|s| stop_value(grid.r[s], grid.defection_payoff, costs.collapse.at(t, s)))
            .collect(),
        next: vec![Vec::new(); n],
    };
    let cont = MdpAction {
        reward: (0..n).map(|s| -costs.maintenance.at(t, s)).collect(),
        next: grid.kernel.clone(),
    };
    Ok(Mdp::new(vec![stop, cont])?)
}

fn stage_from(
    grid: &SurplusGrid,
    costs: &CostSchedule,
    t: usize,
    next_values: &[f64],
    delta: f64,
) -> StageValues {
    let n = grid.len();
    let mut stage = StageValues {
        values: Vec::with_capacity(n),
        policy: Vec::with_capacity(n),
        delta_diag: Vec::with_capacity(n),
        cost_diff: Vec::with_capacity(n),
        regime: Vec::with_capacity(n),
    };
    for s in 0..n {
        let cc = costs.collapse.at(t, s);
        let cm = costs.maintenance.at(t, s);
        let future = delta * grid.expected_next(s, next_values);
        let stop = stop_value(grid.r[s], grid.defection_payoff, cc);
        let cont = future - cm;
        let d = future - grid.phi[s];
        let dc = cm - cc;
        stage.values.push(stop.max(cont));
        stage.policy.push(if stop >= cont {
            Decision::Stop
        } else {
            Decision::Continue
        });
        stage.delta_diag.push(d);
        stage.cost_diff.push(dc);
        stage.regime.push(classify_regime(d, dc));
    }
    stage
}

/// Solves the stationary tail by value iteration started from the stop
/// values, then backs up through any period-dependent costs.
pub fn value_iteration(
    process: &SurplusProcess,
    costs: &CostSchedule,
    config: &DpConfig,
) -> Result<ValueSolution, DpError> {
    let grid = process.discretize(config)?;
    solve_on_grid(grid, costs, config)
}

pub fn solve_on_grid(
    grid: SurplusGrid,
    costs: &CostSchedule,
    config: &DpConfig,
) -> Result<ValueSolution, DpError> {
    config.validate()?;
    costs.validate(Some(grid.len()))?;
    let horizon = costs.transient_periods();
    let tail = stopping_mdp(&grid, costs, horizon)?;
    let init = tail.actions()[0].reward.clone();
    let sol = tail.solve(
        config.delta,
        config.tolerance,
        config.max_iterations,
        Some(init),
    )?;

    let mut stages = Vec::with_capacity(horizon + 1);
    let tail_stage = stage_from(&grid, costs, horizon, &sol.values, config.delta);
    let mut next = tail_stage.values.clone();
    stages.push(tail_stage);
    for t in (0..horizon).rev() {
        let stage = stage_from(&grid, costs, t, &next, config.delta);
        next = stage.values.clone();
        stages.push(stage);
    }
    stages.reverse();

    Ok(ValueSolution {
        grid,
        stages,
        iterations: sol.iterations,
        residual: sol.residual,
        residual_history: sol.residual_history,
    })
}

/// Exact `horizon`-period backward induction from terminal value zero.
///
/// Kept independent of the value-iteration path so the two can be compared.
pub fn finite_horizon_oracle(
    grid: &SurplusGrid,
    costs: &CostSchedule,
    delta: f64,
    horizon: usize,
) -> Vec<f64> {
    let n = grid.len();
    let p = grid.defection_payoff;
    let mut v = vec![0.0; n];
    for t in (0..horizon).rev() {
        let mut next = vec![0.0; n];
        for (s, out) in next.iter_mut().enumerate() {
            let mut ev = 0.0;
            for &(j, prob) in &grid.kernel[s] {
                ev += prob * v[j];
            }
            let stop = 2.0 * grid.r[s] - 2.0 * p - costs.collapse.at(t, s);
            let cont = delta * ev - costs.maintenance.at(t, s);
            *out = if stop >= cont { stop } else { cont };
        }
        v = next;
    }
    v
}

#[derive(Debug, Clone, Copy)]
pub enum PathPolicy<'a> {
    Greedy(&'a ValueSolution),
    AlwaysStop,
    NeverStop,
    StopAt(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathAction {
    Continue,
    Stop,
    Absorbed,
}

impl fmt::Display for PathAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PathAction::Continue => "Continue",
            PathAction::Stop => "Stop",
            PathAction::Absorbed => "Absorbed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathStep {
    pub t: usize,
    pub r: f64,
    pub phi: f64,
    pub action: PathAction,
    /// Adversary payoff in this period.
    pub stage_payoff: f64,
    /// Realised `u_A + u_B`: `2R` while cooperation survives, `2P` after collapse.
    pub objective_total: f64,
    pub discounted_cumulative: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<PathStep>,
    pub stop_time: Option<usize>,
    pub discounted_payoff: f64,
}

/// Samples one path on the discretised chain. Interpolation weights in the
/// kernel act as transition probabilities between neighbouring nodes.
pub fn simulate_path(
    grid: &SurplusGrid,
    costs: &CostSchedule,
    policy: PathPolicy<'_>,
    delta: f64,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory, DpError> {
    if horizon == 0 {
        return Err(DpError::InvalidConfig("horizon must be >= 1".into()));
    }
    costs.validate(Some(grid.len()))?;
    if let PathPolicy::Greedy(sol) = policy {
        if sol.grid.len() != grid.len() {
            return Err(DpError::InvalidConfig(
                "greedy policy was solved on a different grid".into(),
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = grid.initial;
    let mut stop_time = None;
    let mut total = 0.0;
    let mut discount = 1.0;
    let mut steps = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let action = if stop_time.is_some() {
            PathAction::Absorbed
        } else {
            let stop = match policy {
                PathPolicy::Greedy(sol) => sol.stage(t).policy[state] == Decision::Stop,
                PathPolicy::AlwaysStop => true,
                PathPolicy::NeverStop => false,
                PathPolicy::StopAt(k) => t >= k,
            };
            if stop {
                PathAction::Stop
            } else {
                PathAction::Continue
            }
        };
        let (payoff, objective) = match action {
            PathAction::Stop => {
                stop_time = Some(t);
                (
                    stop_value(grid.r[state], grid.defection_payoff, costs.collapse.at(t, state)),
                    2.0 * grid.defection_payoff,
                )
            }
            PathAction::Continue => (-costs.maintenance.at(t, state), 2.0 * grid.r[state]),
            PathAction::Absorbed => (0.0, 2.0 * grid.defection_payoff),
        };
        total += discount * payoff;
        steps.push(PathStep {
            t,
            r: grid.r[state],
            phi: grid.phi[state],
            action,
            stage_payoff: payoff,
            objective_total: objective,
            discounted_cumulative: total,
        });
        discount *= delta;
        state = sample_next(&grid.kernel[state], &mut rng, state);
    }
    Ok(Trajectory {
        steps,
        stop_time,
        discounted_payoff: total,
    })
}

fn sample_next(row: &[(usize, f64)], rng: &mut ChaCha8Rng, current: usize) -> usize {
    // one draw per period keeps streams aligned across policies
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(j, p) in row {
        acc += p;
        if u < acc {
            return j;
        }
    }
    row.last().map(|e| e.0).unwrap_or(current)
}
