//! Mean-field praise/attack dynamics and their local stability.
//!
//! Aggregate praise and attack rates are logistic in the positive and
//! negative parts of the surprise `ε = x − x̂` and norm deviation
//! `ξ = x − x*`. The observable moves by
//!
//! ```text
//! x' = x + κ (P − N) − ρ (x − x̄)
//! ```
//!
//! and its slope at a fixed point is `J = 1 + G − ρ`, with `G` the local
//! gain of the response term. Forecast and reference are held fixed.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reference::{negative_part, positive_part, ShapeFn};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MassError {
    #[error("invalid mass-dynamics parameters: {0}")]
    InvalidParams(String),
    #[error("no fixed point found after {iterations} iterations (last residual {residual:e})")]
    NoFixedPointFound { iterations: usize, residual: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassParams {
    /// Sensitivity `η`.
    pub eta: f64,
    /// Representative participation cost `c̄`.
    pub c_bar: f64,
    /// Diffusion gain `κ`.
    pub kappa: f64,
    /// Damping `ρ`.
    pub rho: f64,
    /// Baseline `x̄`.
    pub x_bar: f64,
    #[serde(default)]
    pub beta_plus: f64,
    #[serde(default)]
    pub beta_minus: f64,
    #[serde(default)]
    pub gamma_plus: f64,
    #[serde(default)]
    pub gamma_minus: f64,
    #[serde(default)]
    pub g2: ShapeFn,
    #[serde(default)]
    pub g3: ShapeFn,
}

impl MassParams {
    pub fn validate(&self) -> Result<(), MassError> {
        let bad = |m: &str| Err(MassError::InvalidParams(m.to_string()));
        let all = [
            self.eta,
            self.c_bar,
            self.kappa,
            self.rho,
            self.x_bar,
            self.beta_plus,
            self.beta_minus,
            self.gamma_plus,
            self.gamma_minus,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("parameters must be finite");
        }
        if !(self.eta > 0.0 && self.rho > 0.0) {
            return bad("eta > 0 and rho > 0 required");
        }
        if self.kappa < 0.0 {
            return bad("kappa >= 0 required");
        }
        if [self.beta_plus, self.beta_minus, self.gamma_plus, self.gamma_minus]
            .iter()
            .any(|w| *w < 0.0)
        {
            return bad("response weights must be nonnegative");
        }
        self.g2
            .validate()
            .and(self.g3.validate())
            .map_err(|e| MassError::InvalidParams(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassState {
    pub x: f64,
    pub forecast: f64,
    pub reference: f64,
}

impl MassState {
    pub fn epsilon(&self) -> f64 {
        self.x - self.forecast
    }

    pub fn xi(&self) -> f64 {
        self.x - self.reference
    }

    fn at(&self, x: f64) -> Self {
        Self { x, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StabilityLabel {
    Stable,
    Buzz,
    Backlash,
    Boundary,
}

impl StabilityLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            StabilityLabel::Stable => "Stable",
            StabilityLabel::Buzz => "Buzz",
            StabilityLabel::Backlash => "Backlash",
            StabilityLabel::Boundary => "Boundary",
        }
    }
}

impl fmt::Display for StabilityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn logistic_slope(z: f64) -> f64 {
    let s = logistic(z);
    s * (1.0 - s)
}

/// Logistic arguments `(s⁺, s⁻)` of the praise and attack rates.
pub fn signals(params: &MassParams, epsilon: f64, xi: f64) -> (f64, f64) {
    let plus = params.eta
        * (params.beta_plus * params.g2.eval(positive_part(epsilon))
            + params.gamma_plus * params.g3.eval(positive_part(xi)))
        - params.c_bar;
    let minus = params.eta
        * (params.beta_minus * params.g2.eval(negative_part(epsilon))
            + params.gamma_minus * params.g3.eval(negative_part(xi)))
        - params.c_bar;
    (plus, minus)
}

/// Praise rate `P` and attack rate `N`.
pub fn response_rates(params: &MassParams, epsilon: f64, xi: f64) -> (f64, f64) {
    let (plus, minus) = signals(params, epsilon, xi);
    (logistic(plus), logistic(minus))
}

pub fn step(state: &MassState, params: &MassParams) -> f64 {
    let (p, n) = response_rates(params, state.epsilon(), state.xi());
    state.x + params.kappa * (p - n) - params.rho * (state.x - params.x_bar)
}

/// Derivative of `κ (P − N)` with respect to `x`. A difference that is
/// exactly zero contributes nothing. Below the forecast or reference the
/// attack signal shrinks as `x` rises, so that side enters with a plus sign.
pub fn local_gain(params: &MassParams, epsilon: f64, xi: f64) -> f64 {
    let (plus, minus) = signals(params, epsilon, xi);
    let ind = |b: bool| if b { 1.0 } else { 0.0 };
    let up = params.beta_plus * params.g2.derivative(positive_part(epsilon)) * ind(epsilon > 0.0)
        + params.gamma_plus * params.g3.derivative(positive_part(xi)) * ind(xi > 0.0);
    let down = params.beta_minus * params.g2.derivative(negative_part(epsilon)) * ind(epsilon < 0.0)
        + params.gamma_minus * params.g3.derivative(negative_part(xi)) * ind(xi < 0.0);
    params.kappa
        * (logistic_slope(plus) * params.eta * up + logistic_slope(minus) * params.eta * down)
}

pub fn jacobian(gain: f64, rho: f64) -> f64 {
    1.0 + gain - rho
}

pub const DEFAULT_STABILITY_TOL: f64 = 1e-9;

pub fn classify_stability(j: f64, tol: f64) -> StabilityLabel {
    if j.abs() < 1.0 - tol {
        StabilityLabel::Stable
    } else if j > 1.0 + tol {
        StabilityLabel::Buzz
    } else if j < -1.0 - tol {
        StabilityLabel::Backlash
    } else {
        StabilityLabel::Boundary
    }
}

/// One row of a simulated trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassRow {
    pub t: usize,
    pub x: f64,
    pub epsilon: f64,
    pub xi: f64,
    pub praise: f64,
    pub attack: f64,
    pub gain: f64,
    pub jacobian: f64,
    pub label: StabilityLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassRun {
    pub fixed_point: f64,
    pub gain: f64,
    pub jacobian: f64,
    pub analytic: StabilityLabel,
    pub empirical: StabilityLabel,
    /// Per-step multiplier of the deviation from the fixed point.
    pub empirical_rate: f64,
    pub rows: Vec<MassRow>,
}

const FIXED_POINT_ITERATIONS: usize = 500;
const FIXED_POINT_TOL: f64 = 1e-13;

/// Root of the drift `κ(P − N) − ρ(x − x̄)` nearest in the Newton sense to
/// `state.x`. The drift is positive below `x̄ − κ/ρ` and negative above
/// `x̄ + κ/ρ`, so Newton steps are safeguarded by bisection on that bracket.
pub fn find_fixed_point(state: &MassState, params: &MassParams) -> Result<f64, MassError> {
    params.validate()?;
    let drift = |x: f64| step(&state.at(x), params) - x;
    let reach = params.kappa / params.rho + 1.0;
    let mut lo = params.x_bar - reach;
    let mut hi = params.x_bar + reach;
    let mut x = state.x.clamp(lo, hi);
    let mut f = drift(x);
    for _ in 0..FIXED_POINT_ITERATIONS {
        if f.abs() <= FIXED_POINT_TOL {
            return Ok(x);
        }
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let s = state.at(x);
        let slope = local_gain(params, s.epsilon(), s.xi()) - params.rho;
        let newton = x - f / slope;
        let next = if slope != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == x || hi - lo <= f64::EPSILON * x.abs().max(1.0) {
            return Ok(x);
        }
        x = next;
        f = drift(x);
    }
    if f.abs() <= FIXED_POINT_TOL {
        return Ok(x);
    }
    Err(MassError::NoFixedPointFound {
        iterations: FIXED_POINT_ITERATIONS,
        residual: f.abs(),
    })
}

/// Deviations beyond this multiple of the initial kick count as escaped.
const ESCAPE_FACTOR: f64 = 100.0;
/// Per-step deviation multipliers within this distance of 1 are inconclusive.
const RATE_BAND: f64 = 0.005;

/// Label from the deviations `d_t = x_t − x*`.
pub fn empirical_label(deviations: &[f64]) -> (StabilityLabel, f64) {
    let d0 = deviations[0].abs();
    let end = deviations
        .iter()
        .position(|d| d.abs() > ESCAPE_FACTOR * d0)
        .unwrap_or(deviations.len() - 1)
        .max(1);
    let window = &deviations[..=end];
    let last = window[end].abs();
    if last == 0.0 {
        return (StabilityLabel::Stable, 0.0);
    }
    let rate = (last / d0).powf(1.0 / end as f64);
    let label = if rate < 1.0 - RATE_BAND {
        StabilityLabel::Stable
    } else if rate > 1.0 + RATE_BAND {
        let same = window.windows(2).all(|w| w[0] * w[1] > 0.0);
        let alternating = window.windows(2).all(|w| w[0] * w[1] < 0.0);
        if same {
            StabilityLabel::Buzz
        } else if alternating {
            StabilityLabel::Backlash
        } else {
            StabilityLabel::Boundary
        }
    } else {
        StabilityLabel::Boundary
    };
    (label, rate)
}

/// Finds a fixed point near `state0.x`, kicks it by `perturbation` and
/// iterates `steps` times, labelling the deviation behaviour.
pub fn simulate_mass(
    state0: &MassState,
    params: &MassParams,
    steps: usize,
    perturbation: f64,
) -> Result<MassRun, MassError> {
    if steps < 2 {
        return Err(MassError::InvalidParams("steps must be >= 2".into()));
    }
    if !(perturbation.is_finite() && perturbation != 0.0) {
        return Err(MassError::InvalidParams("perturbation must be finite and nonzero".into()));
    }
    let fixed = find_fixed_point(state0, params)?;
    let at_fixed = state0.at(fixed);
    let gain = local_gain(params, at_fixed.epsilon(), at_fixed.xi());
    let j = jacobian(gain, params.rho);

    let mut rows = Vec::with_capacity(steps + 1);
    let mut deviations = Vec::with_capacity(steps + 1);
    let mut x = fixed + perturbation;
    for t in 0..=steps {
        let s = state0.at(x);
        let (praise, attack) = response_rates(params, s.epsilon(), s.xi());
        let g = local_gain(params, s.epsilon(), s.xi());
        let jt = jacobian(g, params.rho);
        rows.push(MassRow {
            t,
            x,
            epsilon: s.epsilon(),
            xi: s.xi(),
            praise,
            attack,
            gain: g,
            jacobian: jt,
            label: classify_stability(jt, DEFAULT_STABILITY_TOL),
        });
        deviations.push(x - fixed);
        x = step(&s, params);
    }
    let (empirical, empirical_rate) = empirical_label(&deviations);
    Ok(MassRun {
        fixed_point: fixed,
        gain,
        jacobian: j,
        analytic: classify_stability(j, DEFAULT_STABILITY_TOL),
        empirical,
        empirical_rate,
        rows,
    })
}
