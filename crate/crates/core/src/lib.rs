//! Game-theoretic toolkit for a rational adversary whose payoff is the
//! potential loss of a cooperative system.
//!
//! - [`game`]: equilibrium phases of the recognition-transformed Prisoner's
//!   Dilemma, the fragile cooperation band and the static adversary optimum.
//! - [`adversary`]: the stop/continue problem on a stochastic cooperative
//!   surplus, solved by value iteration, with regime diagnostics and
//!   trajectory simulation.
//! - [`reference`]: the reference-dependent difference payoff and the
//!   reference-shift stability check.
//! - [`mass`]: logistic praise/attack dynamics and local stability.
//! - [`scenario`]: JSON scenarios, result tables and the CLI commands.

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod game;
pub mod mass;
pub mod mdp;
pub mod reference;
pub mod scenario;
