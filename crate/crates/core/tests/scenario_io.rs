use std::path::{Path, PathBuf};
use std::process::Command as Proc;

use proptest::prelude::*;

use rational_adversary::adversary::CostSchedule;
use rational_adversary::game::band;
use rational_adversary::scenario::config::{Axis, AxisSpec, SweepRange};
use rational_adversary::scenario::{
    load_scenario, parse_scenario, run, Cell, Command, Format, ResultTable, Scenario,
    ScenarioError,
};

fn manifest() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn preset(name: &str) -> PathBuf {
    manifest().join("presets").join(name)
}

fn fixture(name: &str) -> PathBuf {
    manifest().join("tests/fixtures").join(name)
}

fn load(path: &Path) -> Scenario {
    load_scenario(path).unwrap()
}

fn table(cmd: Command, s: &Scenario) -> ResultTable {
    run(cmd, s).unwrap().table
}

fn texts<'a>(t: &'a ResultTable, col: &str) -> Vec<&'a str> {
    t.column_cells(col).unwrap().into_iter().map(|c| c.as_str().unwrap()).collect()
}

fn reals(t: &ResultTable, col: &str) -> Vec<f64> {
    t.column_cells(col).unwrap().into_iter().map(|c| c.as_f64().unwrap()).collect()
}

#[test]
fn presets_load_with_a_band() {
    for name in ["sns.json", "metagame.json"] {
        let s = load(&preset(name));
        assert!(band(&s.payoff_matrix).exists, "{name}");
        assert!(s.dp.is_some());
    }
}

#[test]
fn ordering_violation_is_named() {
    let err = load_scenario(fixture("bad_order.json")).unwrap_err();
    assert!(matches!(err, ScenarioError::Validation { .. }));
    assert!(err.to_string().contains("T > R > P > S"), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn malformed_json_reports_position() {
    match load_scenario(fixture("malformed.json")).unwrap_err() {
        ScenarioError::Parse { line, column, .. } => {
            assert_eq!(line, 3);
            assert!(column > 0);
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn seed_defaults_to_zero() {
    let s = parse_scenario(r#"{"name": "x", "payoff_matrix": {"T": 3, "R": 2, "P": 1, "S": 0}}"#).unwrap();
    assert_eq!(s.seed, 0);
}

#[test]
fn invariant_messages() {
    let base = r#"{"name": "x", "payoff_matrix": {"T": 5, "R": 4, "P": 2, "S": 0}, "#;
    let cases = [
        (r#""recognition": {"sweep": {"start": 0, "stop": 1, "steps": 0}}}"#, "sweep ranges must have at least 1 step"),
        (r#""recognition": {"w": -1}}"#, "recognition must satisfy a > 0 and b >= 0"),
        (r#""dp": {"delta": 1.0, "process": {"kind": "deterministic", "growth": 0}}}"#, "discount factor must satisfy 0 < delta < 1"),
        (r#""dp": {"delta": 0.9, "process": {"kind": "deterministic", "growth": -1.5}}}"#, "growth rate must satisfy g > -1"),
        (r#""dp": {"delta": 0.9, "process": {"kind": "discrete_shocks", "shocks": [{"growth": 0.1, "probability": 0.3}]}, "sweep": [{"param": "delta", "start": 0.5, "stop": 0.9, "steps": 2}]}}"#, "shock probabilities must sum to 1"),
        (r#""dp": {"delta": 0.9, "process": {"kind": "deterministic", "growth": 0}, "costs": {"collapse": -1}}}"#, "must be nonnegative everywhere"),
        (r#""dp": {"delta": 0.9, "process": {"kind": "discrete_shocks", "shocks": [{"growth": 0.1, "probability": 1}]}}}"#, "a growth axis requires a deterministic process"),
        (r#""dp": {"delta": 0.9, "process": {"kind": "deterministic", "growth": 0}, "horizon": 0}}"#, "horizon must be >= 1"),
        (r#""mass": {"params": {"eta": 1, "c_bar": 1, "kappa": 1, "rho": 0, "x_bar": 0}, "state": {"x": 0, "forecast": 0, "reference": 0}}}"#, "eta > 0 and rho > 0 required"),
        (r#""mass": {"params": {"eta": 1, "c_bar": 1, "kappa": -1, "rho": 1, "x_bar": 0}, "state": {"x": 0, "forecast": 0, "reference": 0}}}"#, "kappa >= 0 required"),
        (r#""mass": {"params": {"eta": 1, "c_bar": 1, "kappa": 1, "rho": 1, "x_bar": 0}, "state": {"x": 0, "forecast": 0, "reference": 0}, "steps": 1}}"#, "steps must be >= 2"),
    ];
    for (tail, msg) in cases {
        let err = parse_scenario(&format!("{base}{tail}")).unwrap_err();
        assert!(matches!(err, ScenarioError::Validation { .. }), "{tail}: {err}");
        assert!(err.to_string().contains(msg), "{tail}: {err}");
    }
}

#[test]
fn presets_and_fixtures_round_trip() {
    let mut paths = vec![preset("sns.json"), preset("metagame.json")];
    for f in ["mass_buzz.json", "mass_damping.json", "mass_boundary.json", "no_band.json", "regime_default.json"] {
        paths.push(fixture(f));
    }
    for p in paths {
        let s = load(&p);
        assert_eq!(parse_scenario(&s.to_json()).unwrap(), s, "{}", p.display());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edited_scenarios_round_trip(
        seed in any::<u64>(),
        s0 in -5.0..5.0f64,
        gaps in prop::array::uniform3(0.001..5.0f64),
        delta in 0.01..0.999f64,
        sweep in (0.0..2.0f64, 0.0..2.0f64, 1usize..50),
        costs in (0.0..5.0f64, 0.0..5.0f64),
    ) {
        let mut s = load(&preset("sns.json"));
        s.seed = seed;
        s.payoff_matrix.s = s0;
        s.payoff_matrix.p = s0 + gaps[0];
        s.payoff_matrix.r = s.payoff_matrix.p + gaps[1];
        s.payoff_matrix.t = s.payoff_matrix.r + gaps[2];
        s.recognition.sweep = Some(SweepRange::new(sweep.0, sweep.1, sweep.2));
        let dp = s.dp.as_mut().unwrap();
        dp.delta = delta;
        dp.initial_r = None;
        dp.solver.r_cap = None;
        dp.costs = CostSchedule::constant(costs.0, costs.1);
        dp.sweep = Some(vec![AxisSpec { param: Axis::Collapse, start: 0.0, stop: costs.0, steps: 3 }]);
        s.validate().unwrap();
        prop_assert_eq!(parse_scenario(&s.to_json()).unwrap(), s);
    }
}

#[test]
fn band_row() {
    let t = table(Command::Band, &load(&preset("sns.json")));
    assert_eq!(t.rows.len(), 1);
    let r = &t.rows[0];
    assert_eq!(r[0], Cell::Real(0.25));
    assert!((r[1].as_f64().unwrap() - 0.666667).abs() < 1e-6);
    assert_eq!(r[2], Cell::Bool(true));
    assert_eq!((r[3].as_f64(), r[4].as_f64()), (Some(3.0), Some(8.0)));

    let gone = table(Command::Band, &load(&fixture("no_band.json")));
    assert_eq!(gone.rows[0][2], Cell::Bool(false));
}

#[test]
fn phase_sweep_transitions() {
    let t = table(Command::PhaseSweep, &load(&preset("sns.json")));
    let ws = reals(&t, "w");
    assert_eq!(ws.len(), 21);
    let phases = texts(&t, "phase");
    assert_eq!(phases, texts(&t, "oracle_phase"));
    let first = |label: &str| ws[phases.iter().position(|p| *p == label).unwrap()];
    assert!((first("FragileBand") - 0.25).abs() < 1e-12);
    // 0.65 is the last grid value below w_max
    assert!((first("Cooperation") - 0.7).abs() < 1e-12);
    assert_eq!(phases[13], "FragileBand");
    assert_eq!(t.extra("oracle_mismatches"), Some("0"));
    let p_sum: f64 = ["p_distrust", "p_fragile_band", "p_cooperation", "p_asymmetric_only"]
        .iter()
        .map(|c| reals(&t, c)[7])
        .sum();
    assert!((p_sum - 1.0).abs() < 1e-12);

    let gone = table(Command::PhaseSweep, &load(&fixture("no_band.json")));
    let phases = texts(&gone, "phase");
    assert_eq!(phases.first(), Some(&"Distrust"));
    assert_eq!(phases.last(), Some(&"Cooperation"));
    assert!(phases.contains(&"AsymmetricOnly"));
    assert!(!phases.contains(&"FragileBand"));
    assert_eq!(phases, texts(&gone, "oracle_phase"));
}

#[test]
fn regime_frontier_tracks_growth_threshold() {
    let mut s = load(&fixture("regime_default.json"));
    s.dp.as_mut().unwrap().sweep = Some(vec![
        AxisSpec { param: Axis::Delta, start: 0.5, stop: 0.99, steps: 19 },
        AxisSpec { param: Axis::Growth, start: 0.0, stop: 0.5, steps: 19 },
    ]);
    let t = table(Command::RegimeMap, &s);
    let d = reals(&t, "delta");
    let g = reals(&t, "growth");
    let regime = texts(&t, "regime");
    let (dd, dg) = (0.49 / 19.0, 0.5 / 19.0);
    for i in 0..t.rows.len() {
        let stagnation = regime[i] == "RationalStagnation";
        let above = d[i] * (1.0 + g[i]) > 1.0;
        if stagnation != above {
            // mismatches may only occur within one cell of the frontier
            let near = ((d[i] + dd) * (1.0 + g[i] + dg) - 1.0) * ((d[i] - dd) * (1.0 + g[i] - dg) - 1.0) <= 0.0;
            assert!(near, "cell delta={} g={} labelled {}", d[i], g[i], regime[i]);
        }
        assert_ne!(regime[i], "InterventionAbandonment");
    }
}

#[test]
fn expensive_interventions_are_abandoned() {
    let mut s = load(&fixture("regime_default.json"));
    let dp = s.dp.as_mut().unwrap();
    dp.costs = CostSchedule::constant(10.0, 10.0);
    dp.sweep = Some(vec![
        AxisSpec { param: Axis::Delta, start: 0.5, stop: 0.99, steps: 9 },
        AxisSpec { param: Axis::Collapse, start: 5.0, stop: 10.0, steps: 2 },
        AxisSpec { param: Axis::Maintenance, start: 5.0, stop: 10.0, steps: 2 },
    ]);
    let t = table(Command::RegimeMap, &s);
    assert!(texts(&t, "regime").contains(&"InterventionAbandonment"));
}

#[test]
fn simulate_stop_rule_and_seed() {
    let mut s = load(&preset("sns.json"));
    s.dp.as_mut().unwrap().policy = rational_adversary::scenario::config::PolicySpec::AlwaysStop;
    let t = table(Command::Simulate, &s);
    let actions = texts(&t, "action");
    assert_eq!(actions[0], "Stop");
    assert!(actions[1..].iter().all(|a| *a == "Absorbed"));
    assert!(reals(&t, "stage_payoff")[1..].iter().all(|p| *p == 0.0));
    assert_eq!(t.extra("stop_time"), Some("0"));

    let s = load(&preset("metagame.json"));
    let a = table(Command::Simulate, &s).to_bytes(Format::Csv).unwrap();
    let b = table(Command::Simulate, &s).to_bytes(Format::Csv).unwrap();
    assert_eq!(a, b);
}

#[test]
fn mass_fixtures() {
    let buzz = table(Command::MassSim, &load(&fixture("mass_buzz.json")));
    assert_eq!(buzz.extra("analytic_label"), Some("Buzz"));
    assert_eq!(buzz.extra("empirical_label"), Some("Buzz"));
    assert_eq!(buzz.extra("warning"), None);

    let damp = table(Command::MassSim, &load(&fixture("mass_damping.json")));
    assert_eq!(damp.extra("analytic_label"), Some("Stable"));
    assert_eq!(damp.extra("empirical_label"), Some("Stable"));

    let out = run(Command::MassSim, &load(&fixture("mass_boundary.json"))).unwrap();
    assert_eq!(out.table.extra("analytic_label"), Some("Boundary"));
    assert!(out.table.extra("warning").is_some());
    assert!(!out.warnings.is_empty());
}

#[test]
fn shift_checks() {
    let mut s = load(&preset("sns.json"));
    let r = s.reference.as_mut().unwrap();
    r.problem.params = rational_adversary::reference::ReferenceParams::adversary(1.0);
    r.problem.delta = 0.9;
    r.kappas = Some(vec![0.0, 0.1]);
    r.random = Some(rational_adversary::scenario::config::RandomKappas { count: 10, max_abs: 2.0 });
    let out = run(Command::RefShiftCheck, &s).unwrap();
    let gaps = reals(&out.table, "empirical_gap");
    assert_eq!(gaps.len(), 12);
    assert_eq!(gaps[0], 0.0);
    assert!(gaps[1] <= 1.0 + 1e-9);
    assert_eq!(out.failed_checks, 0);
    assert!(out.table.column_cells("holds").unwrap().iter().all(|c| **c == Cell::Bool(true)));
}

fn radv(args: &[&str]) -> std::process::Output {
    Proc::new(env!("CARGO_BIN_EXE_radv")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let bad = fixture("bad_order.json");
    let out = radv(&["band", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("T > R > P > S"));

    let quiet = radv(&["band", "--scenario", bad.to_str().unwrap(), "--quiet"]);
    assert_eq!(quiet.status.code(), Some(1));
    assert!(quiet.stderr.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let mut s = load(&preset("sns.json"));
    s.dp.as_mut().unwrap().solver.max_iterations = 2;
    let path = dir.path().join("slow.json");
    std::fs::write(&path, s.to_json()).unwrap();
    let out = radv(&["regime-map", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid cell delta="));

    let out = radv(&["band", "--scenario", path.to_str().unwrap(), "--format", "xml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn cli_output_targets_and_formats() {
    let dir = tempfile::tempdir().unwrap();
    let sns = preset("sns.json");
    let stdout = radv(&["band", "--scenario", sns.to_str().unwrap(), "--seed", "9"]);
    assert!(stdout.status.success());
    let t = ResultTable::from_csv(&String::from_utf8(stdout.stdout).unwrap()).unwrap();
    assert_eq!(t.metadata.seed, 9);
    assert_eq!(t.columns, ["w_min", "w_max", "exists", "lhs", "rhs"]);

    // scenario output path, resolved against the output-directory variable
    let mut s = load(&sns);
    s.output.path = Some("nested/band.json".into());
    s.output.format = Format::Json;
    let scen = dir.path().join("s.json");
    std::fs::write(&scen, s.to_json()).unwrap();
    let out = Proc::new(env!("CARGO_BIN_EXE_radv"))
        .args(["band", "--scenario", scen.to_str().unwrap()])
        .env("RADV_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let written = std::fs::read_to_string(dir.path().join("nested/band.json")).unwrap();
    assert_eq!(ResultTable::from_json(&written).unwrap().rows.len(), 1);

    // --out wins over the scenario path
    let explicit = dir.path().join("explicit.csv");
    let out = radv(&["band", "--scenario", scen.to_str().unwrap(), "--out", explicit.to_str().unwrap(), "--format", "csv"]);
    assert!(out.status.success());
    assert!(std::fs::read_to_string(&explicit).unwrap().starts_with("# tool_version: radv"));
}

#[test]
fn json_output_matches_schema() {
    let schema: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(manifest().join("docs/result_table.schema.json")).unwrap(),
    )
    .unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let sns = load(&preset("sns.json"));
    for cmd in Command::ALL {
        let bytes = table(cmd, &sns).to_bytes(Format::Json).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        let errors: Vec<String> = validator.iter_errors(&v).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{}: {errors:?}", cmd.as_str());
    }
}

#[test]
fn scenario_files_match_schema() {
    let schema: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(manifest().join("docs/scenario.schema.json")).unwrap(),
    )
    .unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    for p in [preset("sns.json"), preset("metagame.json"), fixture("mass_buzz.json"), fixture("regime_default.json")] {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&v).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{}: {errors:?}", p.display());
    }
}

#[test]
fn csv_output_is_rectangular() {
    let sns = load(&preset("sns.json"));
    for cmd in Command::ALL {
        let text = String::from_utf8(table(cmd, &sns).to_bytes(Format::Csv).unwrap()).unwrap();
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        let body = body.join("\n");
        let mut reader = csv::ReaderBuilder::new().from_reader(body.as_bytes());
        let width = reader.headers().unwrap().len();
        for rec in reader.records() {
            assert_eq!(rec.unwrap().len(), width, "{}", cmd.as_str());
        }
    }
}
