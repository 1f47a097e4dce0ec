//! Static analysis of the recognition-transformed Prisoner's Dilemma.
//!
//! Players weigh their own objective payoff by `a` and the other player's by
//! `b`; only the ratio `w = b / a` matters for equilibrium structure. Both the
//! closed-form thresholds and a brute-force deviation check are provided, and
//! the latter is the oracle the former is tested against.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("payoff matrix must satisfy T > R > P > S (got T={t}, R={r}, P={p}, S={s})")]
    PayoffOrdering { t: f64, r: f64, p: f64, s: f64 },
    #[error("payoff matrix entries must be finite")]
    NonFinitePayoff,
    #[error("recognition must satisfy a > 0 and b >= 0 (got a={a}, b={b})")]
    InvalidRecognition { a: f64, b: f64 },
    #[error("recognition ratio w must be finite and w >= 0 (got {0})")]
    NegativeRatio(f64),
    #[error("invalid recognition curve: {0}")]
    InvalidCurve(String),
    #[error("tipping band requires w_sd > 0 and samples >= 1")]
    InvalidTipping,
}

/// Objective payoffs of the symmetric two-player Prisoner's Dilemma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "S")]
    pub s: f64,
}

impl PayoffMatrix {
    pub fn new(t: f64, r: f64, p: f64, s: f64) -> Result<Self, GameError> {
        let pd = Self { t, r, p, s };
        pd.validate()?;
        Ok(pd)
    }

    pub fn validate(&self) -> Result<(), GameError> {
        let Self { t, r, p, s } = *self;
        if ![t, r, p, s].iter().all(|v| v.is_finite()) {
            return Err(GameError::NonFinitePayoff);
        }
        if !(t > r && r > p && p > s) {
            return Err(GameError::PayoffOrdering { t, r, p, s });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    C,
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub a: Action,
    pub b: Action,
}

impl StrategyProfile {
    pub const CC: Self = Self::new(Action::C, Action::C);
    pub const CD: Self = Self::new(Action::C, Action::D);
    pub const DC: Self = Self::new(Action::D, Action::C);
    pub const DD: Self = Self::new(Action::D, Action::D);

    /// Every pure profile, ordered from most to least defection.
    pub const ALL: [Self; 4] = [Self::DD, Self::CD, Self::DC, Self::CC];

    pub const fn new(a: Action, b: Action) -> Self {
        Self { a, b }
    }

    fn with_a(self, a: Action) -> Self {
        Self { a, ..self }
    }

    fn with_b(self, b: Action) -> Self {
        Self { b, ..self }
    }
}

impl fmt::Display for StrategyProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?},{:?})", self.a, self.b)
    }
}

/// Psychological weights `(a, b)` on own and other payoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recognition {
    a: f64,
    b: f64,
}

impl Recognition {
    pub fn new(a: f64, b: f64) -> Result<Self, GameError> {
        if !(a.is_finite() && b.is_finite() && a > 0.0 && b >= 0.0) {
            return Err(GameError::InvalidRecognition { a, b });
        }
        Ok(Self { a, b })
    }

    /// Recognition with unit own-weight, so that `b == w`.
    pub fn from_ratio(w: f64) -> Result<Self, GameError> {
        Self::new(1.0, w)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn w(&self) -> f64 {
        self.b / self.a
    }
}

pub fn objective_payoffs(pd: &PayoffMatrix, profile: StrategyProfile) -> (f64, f64) {
    use Action::*;
    match (profile.a, profile.b) {
        (C, C) => (pd.r, pd.r),
        (D, D) => (pd.p, pd.p),
        (C, D) => (pd.s, pd.t),
        (D, C) => (pd.t, pd.s),
    }
}

pub fn transform_utilities(
    pd: &PayoffMatrix,
    rec: &Recognition,
    profile: StrategyProfile,
) -> (f64, f64) {
    let (ua, ub) = objective_payoffs(pd, profile);
    (rec.a * ua + rec.b * ub, rec.a * ub + rec.b * ua)
}

/// Potential loss `2R - (u_A + u_B)` evaluated on objective payoffs.
pub fn adversary_utility(pd: &PayoffMatrix, profile: StrategyProfile) -> f64 {
    let (ua, ub) = objective_payoffs(pd, profile);
    2.0 * pd.r - (ua + ub)
}

/// Thresholds of the dual-equilibrium band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FragileBand {
    pub w_min: f64,
    pub w_max: f64,
    pub exists: bool,
    /// `(T-R)(T-P)`
    pub lhs: f64,
    /// `(P-S)(R-S)`
    pub rhs: f64,
}

pub fn band(pd: &PayoffMatrix) -> FragileBand {
    let w_min = (pd.t - pd.r) / (pd.r - pd.s);
    let w_max = (pd.p - pd.s) / (pd.t - pd.p);
    let lhs = (pd.t - pd.r) * (pd.t - pd.p);
    let rhs = (pd.p - pd.s) * (pd.r - pd.s);
    FragileBand {
        w_min,
        w_max,
        exists: lhs <= rhs,
        lhs,
        rhs,
    }
}

/// Pure Nash equilibria of the transformed game by exhaustive deviation check.
///
/// A profile survives unless some player can strictly gain by switching.
pub fn nash_equilibria(pd: &PayoffMatrix, rec: &Recognition) -> Vec<StrategyProfile> {
    let flip = |x: Action| match x {
        Action::C => Action::D,
        Action::D => Action::C,
    };
    StrategyProfile::ALL
        .into_iter()
        .filter(|&profile| {
            let (ua, ub) = transform_utilities(pd, rec, profile);
            let (dev_a, _) = transform_utilities(pd, rec, profile.with_a(flip(profile.a)));
            let (_, dev_b) = transform_utilities(pd, rec, profile.with_b(flip(profile.b)));
            ua >= dev_a && ub >= dev_b
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhaseLabel {
    Distrust,
    FragileBand,
    Cooperation,
    AsymmetricOnly,
}

impl PhaseLabel {
    pub const ALL: [Self; 4] = [
        Self::Distrust,
        Self::FragileBand,
        Self::Cooperation,
        Self::AsymmetricOnly,
    ];

    /// Label implied by an equilibrium set, read off the symmetric profiles.
    pub fn from_equilibria(set: &[StrategyProfile]) -> Self {
        let cc = set.contains(&StrategyProfile::CC);
        let dd = set.contains(&StrategyProfile::DD);
        match (cc, dd) {
            (true, true) => Self::FragileBand,
            (true, false) => Self::Cooperation,
            (false, true) => Self::Distrust,
            (false, false) => Self::AsymmetricOnly,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Distrust => "Distrust",
            Self::FragileBand => "FragileBand",
            Self::Cooperation => "Cooperation",
            Self::AsymmetricOnly => "AsymmetricOnly",
        }
    }
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Closed-form phase for recognition ratio `w`. Thresholds are inclusive.
pub fn classify_phase(pd: &PayoffMatrix, w: f64) -> PhaseLabel {
    let FragileBand { w_min, w_max, .. } = band(pd);
    let cc = w >= w_min;
    let dd = w <= w_max;
    match (cc, dd) {
        (true, true) => PhaseLabel::FragileBand,
        (true, false) => PhaseLabel::Cooperation,
        (false, true) => PhaseLabel::Distrust,
        (false, false) => PhaseLabel::AsymmetricOnly,
    }
}

/// Monotone map `F` from `w` to effective recognition in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecognitionCurve {
    /// `min(w, 1)`
    LinearClamped,
    /// `1 - exp(-lambda w)`, concave.
    SaturatingExponential { lambda: f64 },
    /// Logistic centred at `w0`, rescaled so that `F(0) = 0`; convex below `w0`.
    LogisticShifted { k: f64, w0: f64 },
    /// Piecewise-linear through `(w, F)` knots; the first knot must be `(0, 0)`
    /// and the last value is held beyond the table.
    Tabulated { points: Vec<(f64, f64)> },
}

impl RecognitionCurve {
    const SAMPLE_MAX: f64 = 100.0;
    const SAMPLES: usize = 10_000;

    pub fn eval(&self, w: f64) -> f64 {
        match self {
            Self::LinearClamped => w.clamp(0.0, 1.0),
            Self::SaturatingExponential { lambda } => -(-lambda * w).exp_m1(),
            Self::LogisticShifted { k, w0 } => {
                let at0 = logistic(-k * w0);
                (logistic(k * (w - w0)) - at0) / (1.0 - at0)
            }
            Self::Tabulated { points } => interpolate_table(points, w),
        }
    }

    /// Checks parameters and then densely samples `[0, 100]` for `F(0) = 0`,
    /// monotonicity and range.
    pub fn validate(&self) -> Result<(), GameError> {
        let bad = |m: &str| Err(GameError::InvalidCurve(m.to_string()));
        match self {
            Self::LinearClamped => {}
            Self::SaturatingExponential { lambda } => {
                if !(lambda.is_finite() && *lambda > 0.0) {
                    return bad("saturating exponential requires lambda > 0");
                }
            }
            Self::LogisticShifted { k, w0 } => {
                if !(k.is_finite() && *k > 0.0 && w0.is_finite()) {
                    return bad("shifted logistic requires k > 0 and finite w0");
                }
                if logistic(-k * w0) >= 1.0 {
                    return bad("shifted logistic is flat at double precision");
                }
            }
            Self::Tabulated { points } => {
                if points.is_empty() || points[0] != (0.0, 0.0) {
                    return bad("tabulated curve must start at (0, 0)");
                }
                if points.windows(2).any(|p| !(p[1].0 > p[0].0)) {
                    return bad("tabulated knots must be strictly ascending in w");
                }
            }
        }
        if self.eval(0.0) != 0.0 {
            return bad("F(0) must equal 0");
        }
        let mut prev = 0.0;
        for i in 0..=Self::SAMPLES {
            let w = Self::SAMPLE_MAX * i as f64 / Self::SAMPLES as f64;
            let f = self.eval(w);
            if !(0.0..=1.0).contains(&f) {
                return Err(GameError::InvalidCurve(format!(
                    "F({w}) = {f} lies outside [0, 1]"
                )));
            }
            if f < prev {
                return Err(GameError::InvalidCurve(format!(
                    "F decreases near w = {w}"
                )));
            }
            prev = f;
        }
        Ok(())
    }
}

fn logistic(z: f64) -> f64 {
    crate::mass::logistic(z)
}

fn interpolate_table(points: &[(f64, f64)], w: f64) -> f64 {
    let last = points[points.len() - 1];
    if w >= last.0 {
        return last.1;
    }
    let i = points.partition_point(|p| p.0 <= w);
    if i == 0 {
        return points[0].1;
    }
    let (w0, f0) = points[i - 1];
    let (w1, f1) = points[i];
    f0 + (f1 - f0) * (w - w0) / (w1 - w0)
}

/// Phase with `F(w)` substituted for `w` against the linear thresholds.
pub fn classify_phase_nonlinear(
    pd: &PayoffMatrix,
    w: f64,
    curve: &RecognitionCurve,
) -> Result<PhaseLabel, GameError> {
    if !(w.is_finite() && w >= 0.0) {
        return Err(GameError::NegativeRatio(w));
    }
    curve.validate()?;
    Ok(classify_phase(pd, curve.eval(w)))
}

/// Profile minimising the objective total, with `(D,D)` preferred on ties.
pub fn min_total_payoff_profile(pd: &PayoffMatrix) -> (StrategyProfile, f64) {
    let total = |p| {
        let (a, b) = objective_payoffs(pd, p);
        a + b
    };
    let mut best = (StrategyProfile::DD, total(StrategyProfile::DD));
    for profile in StrategyProfile::ALL.into_iter().skip(1) {
        let t = total(profile);
        if t < best.1 {
            best = (profile, t);
        }
    }
    best
}

/// Monte Carlo phase probabilities under truncated-Normal noise on `w`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseDistribution {
    pub distrust: f64,
    pub fragile_band: f64,
    pub cooperation: f64,
    pub asymmetric_only: f64,
}

impl PhaseDistribution {
    pub fn get(&self, label: PhaseLabel) -> f64 {
        match label {
            PhaseLabel::Distrust => self.distrust,
            PhaseLabel::FragileBand => self.fragile_band,
            PhaseLabel::Cooperation => self.cooperation,
            PhaseLabel::AsymmetricOnly => self.asymmetric_only,
        }
    }

    pub fn total(&self) -> f64 {
        self.distrust + self.fragile_band + self.cooperation + self.asymmetric_only
    }
}

/// Samples `w ~ Normal(w_mean, w_sd)` conditioned on `w >= 0` by inverse CDF
/// and tallies the closed-form phase of each draw.
pub fn tipping_band_probability(
    pd: &PayoffMatrix,
    w_mean: f64,
    w_sd: f64,
    samples: usize,
    seed: u64,
) -> Result<PhaseDistribution, GameError> {
    if !(w_sd.is_finite() && w_sd > 0.0 && w_mean.is_finite()) || samples == 0 {
        return Err(GameError::InvalidTipping);
    }
    let normal = Normal::new(w_mean, w_sd).map_err(|_| GameError::InvalidTipping)?;
    let lower = normal.cdf(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [0usize; 4];
    for _ in 0..samples {
        let u: f64 = rng.random_range(lower..1.0);
        // inverse_cdf can return a hair below 0 at the truncation point
        let w = normal.inverse_cdf(u).max(0.0);
        let idx = match classify_phase(pd, w) {
            PhaseLabel::Distrust => 0,
            PhaseLabel::FragileBand => 1,
            PhaseLabel::Cooperation => 2,
            PhaseLabel::AsymmetricOnly => 3,
        };
        counts[idx] += 1;
    }
    let n = samples as f64;
    Ok(PhaseDistribution {
        distrust: counts[0] as f64 / n,
        fragile_band: counts[1] as f64 / n,
        cooperation: counts[2] as f64 / n,
        asymmetric_only: counts[3] as f64 / n,
    })
}
