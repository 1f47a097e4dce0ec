//! Reference-dependent stage payoff built from three differences of an
//! observable state: change, surprise and norm deviation, with separate
//! weights for the positive and negative parts.
//!
//! ```text
//! U = α g1(Δx) + β⁺ g2(ε₊) + β⁻ g2(ε₋) + γ⁺ g3(ξ₊) + γ⁻ g3(ξ₋) + δ_w h(x) − c
//! ```
//!
//! Shifting the reference level moves only `ξ`, so when `g3` is Lipschitz
//! the discounted value of any policy moves by a bounded amount. The
//! [`verify_shift_stability`] check measures that movement on a finite
//! Markov model and compares it with the bound.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{self, Mdp, MdpAction, MdpError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefError {
    #[error("invalid shape function: {0}")]
    InvalidShape(String),
    #[error("invalid shift problem: {0}")]
    InvalidProblem(String),
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),
    #[error(transparent)]
    Solver(#[from] MdpError),
}

/// Shape nonlinearity with `g(0) = 0`. Negative arguments use the odd
/// extension `g(z) = -g(-z)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeFn {
    #[default]
    Identity,
    /// `z^p`, `p >= 1`
    Power { p: f64 },
    /// `s (1 - exp(-z / s))`
    Saturating { scale: f64 },
}

impl ShapeFn {
    pub fn validate(&self) -> Result<(), RefError> {
        match *self {
            ShapeFn::Identity => Ok(()),
            ShapeFn::Power { p } if p.is_finite() && p >= 1.0 => Ok(()),
            ShapeFn::Power { p } => Err(RefError::InvalidShape(format!(
                "power shape requires p >= 1 (got {p})"
            ))),
            ShapeFn::Saturating { scale } if scale.is_finite() && scale > 0.0 => Ok(()),
            ShapeFn::Saturating { scale } => Err(RefError::InvalidShape(format!(
                "saturating shape requires scale > 0 (got {scale})"
            ))),
        }
    }

    pub fn eval(&self, z: f64) -> f64 {
        let m = z.abs();
        let v = match *self {
            ShapeFn::Identity => m,
            ShapeFn::Power { p } => m.powf(p),
            ShapeFn::Saturating { scale } => -scale * (-m / scale).exp_m1(),
        };
        v.copysign(z)
    }

    /// Right derivative at `z >= 0`.
    pub fn derivative(&self, z: f64) -> f64 {
        match *self {
            ShapeFn::Identity => 1.0,
            ShapeFn::Power { p } => {
                if p == 1.0 {
                    1.0
                } else {
                    p * z.powf(p - 1.0)
                }
            }
            ShapeFn::Saturating { scale } => (-z / scale).exp(),
        }
    }

    /// Declared Lipschitz constant on `[0, bound]`.
    pub fn lipschitz(&self, bound: f64) -> f64 {
        match *self {
            ShapeFn::Identity | ShapeFn::Saturating { .. } => 1.0,
            ShapeFn::Power { p } => {
                if p == 1.0 {
                    1.0
                } else {
                    p * bound.max(0.0).powf(p - 1.0)
                }
            }
        }
    }
}

/// Bounded level term `h(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevelFn {
    #[default]
    Zero,
    /// `h(x) = x`, declared on `[lower, upper]`.
    Identity { lower: f64, upper: f64 },
    /// `h(x) = clamp(x, lower, upper)`
    Clamped { lower: f64, upper: f64 },
}

impl LevelFn {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            LevelFn::Zero => 0.0,
            LevelFn::Identity { .. } => x,
            LevelFn::Clamped { lower, upper } => x.clamp(lower, upper),
        }
    }

    pub fn validate(&self) -> Result<(), RefError> {
        match *self {
            LevelFn::Zero => Ok(()),
            LevelFn::Identity { lower, upper } | LevelFn::Clamped { lower, upper } => {
                if lower.is_finite() && upper.is_finite() && lower <= upper {
                    Ok(())
                } else {
                    Err(RefError::InvalidShape(
                        "level function needs finite bounds with lower <= upper".into(),
                    ))
                }
            }
        }
    }

    /// Whether `x` lies where `h` is declared bounded.
    pub fn covers(&self, x: f64) -> bool {
        match *self {
            LevelFn::Identity { lower, upper } => (lower..=upper).contains(&x),
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ReferenceParams {
    pub alpha: f64,
    pub beta_plus: f64,
    pub beta_minus: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    /// Weight on the level term; unrelated to the discount factor.
    pub delta_weight: f64,
    pub cost: f64,
    pub g1: ShapeFn,
    pub g2: ShapeFn,
    pub g3: ShapeFn,
    pub h: LevelFn,
}

impl ReferenceParams {
    /// The potential-loss adversary: `γ (x* - x)` below the reference.
    pub fn adversary(gamma: f64) -> Self {
        Self {
            gamma_plus: gamma,
            gamma_minus: gamma,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RefError> {
        let coeffs = [
            self.alpha,
            self.beta_plus,
            self.beta_minus,
            self.gamma_plus,
            self.gamma_minus,
            self.delta_weight,
            self.cost,
        ];
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(RefError::InvalidShape("coefficients must be finite".into()));
        }
        self.g1.validate()?;
        self.g2.validate()?;
        self.g3.validate()?;
        self.h.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: f64,
    pub x_prev: f64,
    pub forecast: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Differences {
    /// `x - x_prev`
    pub delta_x: f64,
    /// `x - forecast`
    pub epsilon: f64,
    /// `x - reference`
    pub xi: f64,
}

pub fn differences(obs: &Observation) -> Differences {
    Differences {
        delta_x: obs.x - obs.x_prev,
        epsilon: obs.x - obs.forecast,
        xi: obs.x - obs.reference,
    }
}

pub fn positive_part(z: f64) -> f64 {
    z.max(0.0)
}

pub fn negative_part(z: f64) -> f64 {
    (-z).max(0.0)
}

pub fn eval_reference_payoff(params: &ReferenceParams, obs: &Observation) -> f64 {
    let d = differences(obs);
    params.alpha * params.g1.eval(d.delta_x)
        + params.beta_plus * params.g2.eval(positive_part(d.epsilon))
        + params.beta_minus * params.g2.eval(negative_part(d.epsilon))
        + params.gamma_plus * params.g3.eval(positive_part(d.xi))
        + params.gamma_minus * params.g3.eval(negative_part(d.xi))
        + params.delta_weight * params.h.eval(obs.x)
        - params.cost
}

/// `max(γ⁺, γ⁻) L |κ| / (1 − δ)`
pub fn ref_shift_bound(gamma_plus: f64, gamma_minus: f64, lipschitz: f64, kappa: f64, delta: f64) -> f64 {
    gamma_plus.max(gamma_minus) * lipschitz * kappa.abs() / (1.0 - delta)
}

/// Finite Markov model whose stage payoff is the reference-dependent payoff
/// of the realised transition `i -> j`, observed with the forecast made at `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftProblem {
    pub params: ReferenceParams,
    /// Observable level of each state.
    pub states: Vec<f64>,
    /// Forecast of the next level issued from each state.
    pub forecasts: Vec<f64>,
    /// Row-stochastic matrix per action.
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub reference: f64,
    pub delta: f64,
    /// Set when dynamics or forecasts respond to the reference level.
    #[serde(default)]
    pub reference_dependent_dynamics: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftCheck {
    pub kappa: f64,
    /// Gap under the fixed policy "always take action 0".
    pub gap_fixed_policy: f64,
    /// Gap between the two optimal value functions.
    pub gap_optimal: f64,
    pub empirical_gap: f64,
    pub lipschitz: f64,
    pub bound: f64,
    pub holds: bool,
}

const SHIFT_TOLERANCE: f64 = 1e-12;
const SHIFT_MAX_ITERATIONS: usize = 10_000_000;
/// Numerical slack allowed on top of the analytic bound.
pub const SHIFT_SLACK: f64 = 1e-9;

impl ShiftProblem {
    pub fn validate(&self) -> Result<(), RefError> {
        let bad = |m: &str| Err(RefError::InvalidProblem(m.to_string()));
        self.params.validate()?;
        let n = self.states.len();
        if n == 0 {
            return bad("no states");
        }
        if self.forecasts.len() != n {
            return bad("one forecast per state is required");
        }
        if self.states.iter().chain(&self.forecasts).any(|v| !v.is_finite()) || !self.reference.is_finite() {
            return bad("states, forecasts and reference must be finite");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("discount factor must satisfy 0 < delta < 1");
        }
        if self.transitions.is_empty() {
            return bad("at least one action is required");
        }
        for m in &self.transitions {
            if m.len() != n || m.iter().any(|row| row.len() != n) {
                return bad("transition matrices must be n x n");
            }
            if m.iter().flatten().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return bad("transition probabilities must be nonnegative");
            }
            for row in m {
                if (row.iter().sum::<f64>() - 1.0).abs() > mdp::STOCHASTIC_SLACK {
                    return bad("transition rows must sum to 1");
                }
            }
        }
        Ok(())
    }

    fn check_hypotheses(&self, kappa: f64) -> Result<(), RefError> {
        if self.reference_dependent_dynamics {
            return Err(RefError::HypothesisViolation(
                "dynamics and forecasts must not depend on the reference level".into(),
            ));
        }
        if self.params.gamma_plus < 0.0 || self.params.gamma_minus < 0.0 {
            return Err(RefError::HypothesisViolation(
                "norm-deviation weights must be nonnegative".into(),
            ));
        }
        if !kappa.is_finite() {
            return Err(RefError::InvalidProblem("kappa must be finite".into()));
        }
        if let Some(x) = self.states.iter().find(|x| !self.params.h.covers(**x)) {
            return Err(RefError::HypothesisViolation(format!(
                "level function is not declared bounded at state {x}"
            )));
        }
        Ok(())
    }

    /// Largest `|ξ|` reached under either reference level.
    pub fn xi_bound(&self, kappa: f64) -> f64 {
        self.states
            .iter()
            .map(|x| (x - self.reference).abs().max((x - self.reference - kappa).abs()))
            .fold(0.0, f64::max)
    }

    fn mdp(&self, reference: f64) -> Result<Mdp, RefError> {
        let actions = self
            .transitions
            .iter()
            .map(|matrix| {
                let reward = matrix
                    .iter()
                    .enumerate()
                    .map(|(i, row)| {
                        row.iter()
                            .enumerate()
                            .filter(|(_, p)| **p != 0.0)
                            .map(|(j, p)| {
                                p * eval_reference_payoff(
                                    &self.params,
                                    &Observation {
                                        x: self.states[j],
                                        x_prev: self.states[i],
                                        forecast: self.forecasts[i],
                                        reference,
                                    },
                                )
                            })
                            .sum()
                    })
                    .collect();
                MdpAction {
                    reward,
                    next: mdp::dense_to_kernel(matrix),
                }
            })
            .collect();
        Ok(Mdp::new(actions)?)
    }
}

/// Solves the discounted problem at reference `x*` and `x* + κ`, both for
/// the fixed policy "action 0" and for the optimal policy, and compares the
/// largest value gap with the analytic bound.
pub fn verify_shift_stability(problem: &ShiftProblem, kappa: f64) -> Result<ShiftCheck, RefError> {
    problem.validate()?;
    problem.check_hypotheses(kappa)?;
    let base = problem.mdp(problem.reference)?;
    let shifted = problem.mdp(problem.reference + kappa)?;
    let solve = |m: &Mdp| m.solve(problem.delta, SHIFT_TOLERANCE, SHIFT_MAX_ITERATIONS, None);

    let fixed = vec![0; base.n_states()];
    let v0_fixed = solve(&base.restricted(&fixed))?.values;
    let vk_fixed = solve(&shifted.restricted(&fixed))?.values;
    let v0 = solve(&base)?.values;
    let vk = solve(&shifted)?.values;

    let gap_fixed_policy = mdp::sup_distance(&v0_fixed, &vk_fixed);
    let gap_optimal = mdp::sup_distance(&v0, &vk);
    let empirical_gap = gap_fixed_policy.max(gap_optimal);
    let lipschitz = problem.params.g3.lipschitz(problem.xi_bound(kappa));
    let bound = ref_shift_bound(
        problem.params.gamma_plus,
        problem.params.gamma_minus,
        lipschitz,
        kappa,
        problem.delta,
    );
    Ok(ShiftCheck {
        kappa,
        gap_fixed_policy,
        gap_optimal,
        empirical_gap,
        lipschitz,
        bound,
        holds: empirical_gap <= bound + SHIFT_SLACK,
    })
}
