//! Seeded random instances shared by the integration and acceptance tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rational_adversary::adversary::{
    CostFn, CostSchedule, DpConfig, Dynamics, Shock, SurplusProcess,
};
use rational_adversary::game::PayoffMatrix;
use rational_adversary::mass::{response_rates, MassParams, MassState};
use rational_adversary::reference::{LevelFn, ReferenceParams, ShapeFn, ShiftProblem};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rejection-sampled `T > R > P > S` with entries in `[-10, 10]`.
pub fn random_matrix(rng: &mut impl Rng) -> PayoffMatrix {
    loop {
        let mut v: [f64; 4] = std::array::from_fn(|_| rng.random_range(-10.0..10.0));
        v.sort_by(f64::total_cmp);
        if let Ok(pd) = PayoffMatrix::new(v[3], v[2], v[1], v[0]) {
            return pd;
        }
    }
}

fn chain_len(ratio: f64, growth: f64) -> f64 {
    (ratio.ln() / (1.0 + growth).ln()).abs()
}

pub struct DpInstance {
    pub process: SurplusProcess,
    pub costs: CostSchedule,
    pub config: DpConfig,
}

/// A process, cost schedule and discount factor whose grid has at most
/// `max_states` nodes.
pub fn random_dp_instance(rng: &mut impl Rng, max_states: usize) -> DpInstance {
    let p = rng.random_range(0.0..3.0);
    let r0 = p + rng.random_range(0.5..3.0);
    let delta = rng.random_range(0.5..0.97);
    let mut config = DpConfig::new(delta);
    config.tolerance = 1e-10;
    config.max_states = max_states;
    config.grid_points = rng.random_range(20..=max_states.min(200));

    let dynamics = match rng.random_range(0..3) {
        0 => loop {
            let g: f64 = rng.random_range(-0.3..0.4);
            let ratio = rng.random_range(2.0..20.0);
            if g.abs() < 1e-3 || chain_len(ratio, g) + 2.0 > max_states as f64 {
                continue;
            }
            if g > 0.0 {
                config.r_cap = Some(p + (r0 - p) * ratio);
            } else {
                config.r_floor = Some(p + (r0 - p) / ratio);
            }
            break Dynamics::Deterministic { growth: g };
        },
        1 => {
            let k = rng.random_range(2..=4);
            let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = weights.iter().sum();
            let mut shocks: Vec<Shock> = weights
                .iter()
                .map(|w| Shock {
                    growth: rng.random_range(-0.3..0.3),
                    probability: w / total,
                })
                .collect();
            let sum: f64 = shocks[..k - 1].iter().map(|s| s.probability).sum();
            shocks[k - 1].probability = 1.0 - sum;
            config.r_cap = Some(p + (r0 - p) * rng.random_range(2.0..10.0));
            Dynamics::DiscreteShocks { shocks }
        }
        _ => {
            let n = rng.random_range(2..=30.min(max_states));
            let mut grid: Vec<f64> = Vec::with_capacity(n);
            let mut r = p + rng.random_range(0.1..1.0);
            for _ in 0..n {
                grid.push(r);
                r += rng.random_range(0.05..1.0);
            }
            let transitions = (0..n)
                .map(|_| {
                    let w: Vec<f64> = (0..n)
                        .map(|_| if rng.random_bool(0.4) { rng.random_range(0.0..1.0) } else { 0.0 })
                        .collect();
                    let total: f64 = w.iter().sum();
                    if total == 0.0 {
                        let mut row = vec![0.0; n];
                        row[rng.random_range(0..n)] = 1.0;
                        row
                    } else {
                        let mut row: Vec<f64> = w.iter().map(|x| x / total).collect();
                        let last = row.iter().rposition(|x| *x > 0.0).unwrap();
                        let rest: f64 = row.iter().enumerate().filter(|(i, _)| *i != last).map(|(_, x)| x).sum();
                        row[last] = 1.0 - rest;
                        row
                    }
                })
                .collect();
            let start = grid[rng.random_range(0..n)];
            return DpInstance {
                process: SurplusProcess {
                    dynamics: Dynamics::MarkovGrid { grid, transitions },
                    defection_payoff: p,
                    initial: start,
                },
                costs: random_costs(rng),
                config,
            };
        }
    };
    DpInstance {
        process: SurplusProcess {
            dynamics,
            defection_payoff: p,
            initial: r0,
        },
        costs: random_costs(rng),
        config,
    }
}

fn random_cost(rng: &mut impl Rng, scale: f64) -> CostFn {
    if rng.random_bool(0.3) {
        let k = rng.random_range(1..=4);
        CostFn::ByPeriod {
            by_period: (0..k).map(|_| rng.random_range(0.0..scale)).collect(),
        }
    } else {
        CostFn::Constant(rng.random_range(0.0..scale))
    }
}

pub fn random_costs(rng: &mut impl Rng) -> CostSchedule {
    CostSchedule {
        collapse: random_cost(rng, 2.0),
        maintenance: random_cost(rng, 0.5),
    }
}

fn random_shape(rng: &mut impl Rng) -> ShapeFn {
    match rng.random_range(0..3) {
        0 => ShapeFn::Identity,
        1 => ShapeFn::Power {
            p: rng.random_range(1.0..2.5),
        },
        _ => ShapeFn::Saturating {
            scale: rng.random_range(0.5..3.0),
        },
    }
}

/// A shift problem satisfying the hypotheses of the reference-shift bound:
/// exogenous dynamics, nonnegative norm weights and a level term declared
/// bounded on every state.
pub fn random_shift_problem(rng: &mut impl Rng) -> ShiftProblem {
    let n = rng.random_range(2..=6);
    let states: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let forecasts: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let params = ReferenceParams {
        alpha: rng.random_range(-1.0..1.0),
        beta_plus: rng.random_range(-1.0..1.0),
        beta_minus: rng.random_range(-1.0..1.0),
        gamma_plus: rng.random_range(0.0..2.0),
        gamma_minus: rng.random_range(0.0..2.0),
        delta_weight: rng.random_range(-1.0..1.0),
        cost: rng.random_range(0.0..1.0),
        g1: random_shape(rng),
        g2: random_shape(rng),
        g3: random_shape(rng),
        h: LevelFn::Clamped {
            lower: -5.0,
            upper: 5.0,
        },
    };
    let actions = rng.random_range(1..=3);
    let transitions = (0..actions)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
                    let total: f64 = w.iter().sum();
                    let mut row: Vec<f64> = w.iter().map(|x| x / total).collect();
                    let rest: f64 = row[..n - 1].iter().sum();
                    row[n - 1] = 1.0 - rest;
                    row
                })
                .collect()
        })
        .collect();
    ShiftProblem {
        params,
        states,
        forecasts,
        transitions,
        reference: rng.random_range(-3.0..3.0),
        delta: rng.random_range(0.5..0.95),
        reference_dependent_dynamics: false,
    }
}

/// Mass parameters with a fixed point placed at a chosen `x`: draws
/// everything else, then solves for the baseline `x̄`.
pub fn mass_case_with_fixed_point(rng: &mut impl Rng) -> (MassParams, MassState) {
    let params = MassParams {
        eta: rng.random_range(0.5..4.0),
        c_bar: rng.random_range(-1.0..2.0),
        kappa: rng.random_range(0.1..4.0),
        rho: rng.random_range(0.05..3.5),
        x_bar: 0.0,
        beta_plus: rng.random_range(0.0..2.0),
        beta_minus: rng.random_range(0.0..2.0),
        gamma_plus: rng.random_range(0.0..2.0),
        gamma_minus: rng.random_range(0.0..2.0),
        g2: ShapeFn::Identity,
        g3: ShapeFn::Identity,
    };
    let state = MassState {
        x: rng.random_range(-2.0..2.0),
        forecast: rng.random_range(-2.0..2.0),
        reference: rng.random_range(-2.0..2.0),
    };
    let (pr, at) = response_rates(&params, state.epsilon(), state.xi());
    let x_bar = state.x - params.kappa * (pr - at) / params.rho;
    (MassParams { x_bar, ..params }, state)
}
