//! Table-producing commands. Every command is a pure function of the
//! scenario (seed included), so repeated runs give identical tables.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adversary::{
    simulate_path, value_iteration, CostFn, Dynamics, PathPolicy,
};
use crate::game::{
    band, classify_phase, classify_phase_nonlinear, nash_equilibria, tipping_band_probability,
    PhaseLabel, Recognition, StrategyProfile,
};
use crate::mass::{simulate_mass, StabilityLabel};
use crate::reference::verify_shift_stability;

use super::config::{Axis, AxisSpec, PolicySpec, Scenario};
use super::table::{Cell, Metadata, ResultTable};
use super::ScenarioError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Band,
    PhaseSweep,
    RegimeMap,
    Simulate,
    MassSim,
    RefShiftCheck,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Band,
        Command::PhaseSweep,
        Command::RegimeMap,
        Command::Simulate,
        Command::MassSim,
        Command::RefShiftCheck,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Band => "band",
            Command::PhaseSweep => "phase-sweep",
            Command::RegimeMap => "regime-map",
            Command::Simulate => "simulate",
            Command::MassSim => "mass-sim",
            Command::RefShiftCheck => "ref-shift-check",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub table: ResultTable,
    /// Rows whose property check failed (only `ref-shift-check` sets this).
    pub failed_checks: usize,
    pub warnings: Vec<String>,
}

impl CommandOutput {
    fn plain(table: ResultTable) -> Self {
        Self {
            table,
            failed_checks: 0,
            warnings: Vec::new(),
        }
    }
}

pub fn run(command: Command, scenario: &Scenario) -> Result<CommandOutput, ScenarioError> {
    scenario.validate()?;
    match command {
        Command::Band => cmd_band(scenario).map(CommandOutput::plain),
        Command::PhaseSweep => cmd_phase_sweep(scenario).map(CommandOutput::plain),
        Command::RegimeMap => cmd_regime_map(scenario).map(CommandOutput::plain),
        Command::Simulate => cmd_simulate(scenario).map(CommandOutput::plain),
        Command::MassSim => cmd_mass_sim(scenario),
        Command::RefShiftCheck => cmd_ref_shift_check(scenario),
    }
}

fn metadata(command: Command, scenario: &Scenario) -> Metadata {
    Metadata::new(command.as_str(), &scenario.hash(), scenario.seed)
}

pub fn cmd_band(scenario: &Scenario) -> Result<ResultTable, ScenarioError> {
    let b = band(&scenario.payoff_matrix);
    let mut t = ResultTable::new(
        metadata(Command::Band, scenario),
        &["w_min", "w_max", "exists", "lhs", "rhs"],
    )?;
    t.push(vec![
        b.w_min.into(),
        b.w_max.into(),
        b.exists.into(),
        b.lhs.into(),
        b.rhs.into(),
    ])?;
    Ok(t)
}

fn profile_code(p: &StrategyProfile) -> String {
    format!("{:?}{:?}", p.a, p.b)
}

pub fn cmd_phase_sweep(scenario: &Scenario) -> Result<ResultTable, ScenarioError> {
    let pd = &scenario.payoff_matrix;
    let rec = &scenario.recognition;
    let ws = rec.w_values().ok_or(ScenarioError::Missing("recognition.sweep"))?;

    let mut columns = vec!["w", "phase", "oracle_phase", "equilibria", "agree"];
    if rec.curve.is_some() {
        columns.extend(["effective_w", "nonlinear_phase"]);
    }
    if rec.tipping.is_some() {
        columns.extend(["p_distrust", "p_fragile_band", "p_cooperation", "p_asymmetric_only"]);
    }
    let mut t = ResultTable::new(metadata(Command::PhaseSweep, scenario), &columns)?;
    let b = band(pd);
    t.set_extra("w_min", crate::scenario::format_real(b.w_min));
    t.set_extra("w_max", crate::scenario::format_real(b.w_max));
    t.set_extra("band_exists", b.exists);

    let rows: Vec<Result<Vec<Cell>, ScenarioError>> = ws
        .par_iter()
        .map(|&w| {
            let phase = classify_phase(pd, w);
            let eq = nash_equilibria(pd, &Recognition::from_ratio(w)?);
            let oracle = PhaseLabel::from_equilibria(&eq);
            let codes: Vec<String> = eq.iter().map(profile_code).collect();
            let mut row = vec![
                w.into(),
                phase.as_str().into(),
                oracle.as_str().into(),
                codes.join(";").into(),
                (phase == oracle).into(),
            ];
            if let Some(curve) = &rec.curve {
                row.push(curve.eval(w).into());
                row.push(classify_phase_nonlinear(pd, w, curve)?.as_str().into());
            }
            if let Some(tip) = &rec.tipping {
                let dist = tipping_band_probability(pd, w, tip.sd, tip.samples, scenario.seed)?;
                row.extend(PhaseLabel::ALL.iter().map(|l| Cell::from(dist.get(*l))));
            }
            Ok(row)
        })
        .collect();
    let mut mismatches = 0;
    for row in rows {
        let row = row?;
        if row[4] == Cell::Bool(false) {
            mismatches += 1;
        }
        t.push(row)?;
    }
    t.set_extra("oracle_mismatches", mismatches);
    Ok(t)
}

fn axis_value(axes: &[AxisSpec], values: &[f64], which: Axis) -> Option<f64> {
    axes.iter().position(|a| a.param == which).map(|i| values[i])
}

/// Row-major cartesian product, first axis outermost.
fn grid_points(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for vals in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                vals.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    out
}

pub fn cmd_regime_map(scenario: &Scenario) -> Result<ResultTable, ScenarioError> {
    let dp = scenario.dp.as_ref().ok_or(ScenarioError::Missing("dp"))?;
    let pd = &scenario.payoff_matrix;
    let axes = dp.axes();
    let values: Vec<Vec<f64>> = axes.iter().map(|a| a.range().values()).collect();
    let points = grid_points(&values);

    let mut columns: Vec<&str> = axes.iter().map(|a| a.param.as_str()).collect();
    columns.extend([
        "n_states",
        "delta_diag",
        "cost_diff",
        "regime",
        "value",
        "decision",
        "frontier",
    ]);
    let mut t = ResultTable::new(metadata(Command::RegimeMap, scenario), &columns)?;

    let rows: Vec<Result<Vec<Cell>, ScenarioError>> = points
        .par_iter()
        .map(|point| {
            let mut spec = dp.clone();
            if let Some(d) = axis_value(&axes, point, Axis::Delta) {
                spec.delta = d;
            }
            if let Some(g) = axis_value(&axes, point, Axis::Growth) {
                spec.process = Dynamics::Deterministic { growth: g };
            }
            if let Some(c) = axis_value(&axes, point, Axis::Collapse) {
                spec.costs.collapse = CostFn::Constant(c);
            }
            if let Some(c) = axis_value(&axes, point, Axis::Maintenance) {
                spec.costs.maintenance = CostFn::Constant(c);
            }
            let cell_name = || {
                axes.iter()
                    .zip(point)
                    .map(|(a, v)| format!("{}={}", a.param.as_str(), crate::scenario::format_real(*v)))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            let sol = value_iteration(&spec.surplus_process(pd), &spec.costs, &spec.config(pd))
                .map_err(|e| ScenarioError::InCell {
                    cell: cell_name(),
                    source: Box::new(e.into()),
                })?;
            let s0 = sol.grid.initial;
            let stage = sol.stage(0);
            let frontier = match spec.process {
                Dynamics::Deterministic { growth } => Cell::real(spec.delta * (1.0 + growth)),
                _ => Cell::Null,
            };
            let mut row: Vec<Cell> = point.iter().map(|v| Cell::from(*v)).collect();
            row.extend([
                sol.grid.len().into(),
                stage.delta_diag[s0].into(),
                stage.cost_diff[s0].into(),
                stage.regime[s0].as_str().into(),
                stage.values[s0].into(),
                stage.policy[s0].to_string().into(),
                frontier,
            ]);
            Ok(row)
        })
        .collect();
    for row in rows {
        t.push(row?)?;
    }
    Ok(t)
}

pub fn cmd_simulate(scenario: &Scenario) -> Result<ResultTable, ScenarioError> {
    let dp = scenario.dp.as_ref().ok_or(ScenarioError::Missing("dp"))?;
    let horizon = dp.horizon.ok_or(ScenarioError::Missing("dp.horizon"))?;
    let pd = &scenario.payoff_matrix;
    let process = dp.surplus_process(pd);
    let config = dp.config(pd);
    let solution;
    let policy = match dp.policy {
        PolicySpec::Greedy => {
            solution = value_iteration(&process, &dp.costs, &config)?;
            PathPolicy::Greedy(&solution)
        }
        PolicySpec::AlwaysStop => PathPolicy::AlwaysStop,
        PolicySpec::NeverStop => PathPolicy::NeverStop,
    };
    let grid = match policy {
        PathPolicy::Greedy(sol) => sol.grid.clone(),
        _ => process.discretize(&config)?,
    };
    let path = simulate_path(&grid, &dp.costs, policy, dp.delta, horizon, scenario.seed)?;

    let mut t = ResultTable::new(
        metadata(Command::Simulate, scenario),
        &[
            "t",
            "R",
            "phi",
            "action",
            "stage_payoff",
            "objective_total",
            "discounted_cumulative",
        ],
    )?;
    t.set_extra("policy", dp.policy.as_str());
    t.set_extra(
        "stop_time",
        path.stop_time.map_or("none".to_string(), |s| s.to_string()),
    );
    t.set_extra("discounted_payoff", crate::scenario::format_real(path.discounted_payoff));
    for s in &path.steps {
        t.push(vec![
            s.t.into(),
            s.r.into(),
            s.phi.into(),
            s.action.to_string().into(),
            s.stage_payoff.into(),
            s.objective_total.into(),
            s.discounted_cumulative.into(),
        ])?;
    }
    Ok(t)
}

pub fn cmd_mass_sim(scenario: &Scenario) -> Result<CommandOutput, ScenarioError> {
    let m = scenario.mass.as_ref().ok_or(ScenarioError::Missing("mass"))?;
    let run = simulate_mass(&m.state, &m.params, m.steps, m.perturbation)?;
    let mut t = ResultTable::new(
        metadata(Command::MassSim, scenario),
        &[
            "t", "x", "epsilon", "xi", "praise", "attack", "gain", "jacobian", "label",
        ],
    )?;
    let fmt = crate::scenario::format_real;
    t.set_extra("fixed_point", fmt(run.fixed_point));
    t.set_extra("gain", fmt(run.gain));
    t.set_extra("jacobian", fmt(run.jacobian));
    t.set_extra("analytic_label", run.analytic);
    t.set_extra("empirical_label", run.empirical);
    t.set_extra("empirical_rate", fmt(run.empirical_rate));

    let mut warnings = Vec::new();
    if run.analytic == StabilityLabel::Boundary || run.empirical == StabilityLabel::Boundary {
        warnings.push(format!(
            "|J| = {} is within tolerance of 1; local stability is not decided by the linearization",
            fmt(run.jacobian.abs())
        ));
    }
    if run.analytic != run.empirical {
        warnings.push(format!(
            "analytic label {} differs from simulated label {}",
            run.analytic, run.empirical
        ));
    }
    if !warnings.is_empty() {
        t.set_extra("warning", warnings.join("; "));
    }
    for r in &run.rows {
        t.push(vec![
            r.t.into(),
            r.x.into(),
            r.epsilon.into(),
            r.xi.into(),
            r.praise.into(),
            r.attack.into(),
            r.gain.into(),
            r.jacobian.into(),
            r.label.as_str().into(),
        ])?;
    }
    Ok(CommandOutput {
        table: t,
        failed_checks: 0,
        warnings,
    })
}

/// Listed shifts first, then any seeded random draws.
pub fn shift_kappas(scenario: &Scenario) -> Result<Vec<f64>, ScenarioError> {
    let r = scenario
        .reference
        .as_ref()
        .ok_or(ScenarioError::Missing("reference"))?;
    let mut kappas = r.kappas.clone().unwrap_or_default();
    if let Some(rk) = &r.random {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        for _ in 0..rk.count {
            let u: f64 = rng.random();
            kappas.push(rk.max_abs * (2.0 * u - 1.0));
        }
    }
    if kappas.is_empty() {
        return Err(ScenarioError::Missing("reference.kappas"));
    }
    Ok(kappas)
}

pub fn cmd_ref_shift_check(scenario: &Scenario) -> Result<CommandOutput, ScenarioError> {
    let r = scenario
        .reference
        .as_ref()
        .ok_or(ScenarioError::Missing("reference"))?;
    let kappas = shift_kappas(scenario)?;
    let checks: Vec<_> = kappas
        .par_iter()
        .map(|k| verify_shift_stability(&r.problem, *k))
        .collect();
    let mut t = ResultTable::new(
        metadata(Command::RefShiftCheck, scenario),
        &[
            "kappa",
            "gap_fixed_policy",
            "gap_optimal",
            "empirical_gap",
            "lipschitz",
            "bound",
            "holds",
        ],
    )?;
    let mut failed = 0;
    for c in checks {
        let c = c?;
        if !c.holds {
            failed += 1;
        }
        t.push(vec![
            c.kappa.into(),
            c.gap_fixed_policy.into(),
            c.gap_optimal.into(),
            c.empirical_gap.into(),
            c.lipschitz.into(),
            c.bound.into(),
            c.holds.into(),
        ])?;
    }
    t.set_extra("failed_checks", failed);
    let warnings = if failed > 0 {
        vec![format!("{failed} of {} shift checks exceeded the bound", kappas.len())]
    } else {
        Vec::new()
    };
    Ok(CommandOutput {
        table: t,
        failed_checks: failed,
        warnings,
    })
}
