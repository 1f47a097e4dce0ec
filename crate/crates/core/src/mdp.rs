//! Discounted finite-state MDP solved by Jacobi value iteration.
//!
//! An action whose successor row is empty terminates the process: its
//! reward is collected and no continuation value follows. The optimal
//! stopping problem is the two-action special case (stop, continue).

use thiserror::Error;

/// Sparse successor list `(state, probability)` per state.
pub type Kernel = Vec<Vec<(usize, f64)>>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("invalid transition kernel: {0}")]
    InvalidKernel(String),
    #[error("discount factor must lie in (0, 1), got {0}")]
    InvalidDiscount(f64),
    #[error("value iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpAction {
    pub reward: Vec<f64>,
    pub next: Kernel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    actions: Vec<MdpAction>,
    n_states: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpSolution {
    pub values: Vec<f64>,
    /// Greedy action per state; ties go to the lowest action index.
    pub policy: Vec<usize>,
    pub iterations: usize,
    pub residual: f64,
    /// Sup-norm change of every sweep, in order.
    pub residual_history: Vec<f64>,
}

/// Rows must be empty or sum to one within this slack.
pub const STOCHASTIC_SLACK: f64 = 1e-12;

pub fn check_kernel(kernel: &Kernel, n_states: usize) -> Result<(), MdpError> {
    if kernel.len() != n_states {
        return Err(MdpError::InvalidKernel(format!(
            "expected {n_states} rows, found {}",
            kernel.len()
        )));
    }
    for (i, row) in kernel.iter().enumerate() {
        if row.is_empty() {
            continue;
        }
        let mut total = 0.0;
        for &(j, p) in row {
            if j >= n_states {
                return Err(MdpError::InvalidKernel(format!(
                    "row {i} points at state {j} (only {n_states} states)"
                )));
            }
            if !(p.is_finite() && p >= 0.0) {
                return Err(MdpError::InvalidKernel(format!(
                    "row {i} has probability {p}"
                )));
            }
            total += p;
        }
        if (total - 1.0).abs() > STOCHASTIC_SLACK {
            return Err(MdpError::InvalidKernel(format!(
                "row {i} sums to {total}, not 1"
            )));
        }
    }
    Ok(())
}

/// Converts a dense row-stochastic matrix to a sparse kernel.
pub fn dense_to_kernel(matrix: &[Vec<f64>]) -> Kernel {
    matrix
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, p)| **p != 0.0)
                .map(|(j, p)| (j, *p))
                .collect()
        })
        .collect()
}

impl Mdp {
    pub fn new(actions: Vec<MdpAction>) -> Result<Self, MdpError> {
        let first = actions
            .first()
            .ok_or_else(|| MdpError::InvalidKernel("no actions".into()))?;
        let n_states = first.reward.len();
        for a in &actions {
            if a.reward.len() != n_states {
                return Err(MdpError::InvalidKernel(
                    "reward vectors differ in length".into(),
                ));
            }
            if a.reward.iter().any(|r| !r.is_finite()) {
                return Err(MdpError::InvalidKernel("non-finite reward".into()));
            }
            check_kernel(&a.next, n_states)?;
        }
        Ok(Self { actions, n_states })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn actions(&self) -> &[MdpAction] {
        &self.actions
    }

    /// Expected next-period value of taking `action` in `state`.
    pub fn expected_next(&self, action: usize, state: usize, values: &[f64]) -> f64 {
        self.actions[action].next[state]
            .iter()
            .map(|&(j, p)| p * values[j])
            .sum()
    }

    pub fn action_value(&self, action: usize, state: usize, values: &[f64], delta: f64) -> f64 {
        self.actions[action].reward[state] + delta * self.expected_next(action, state, values)
    }

    /// One-state Bellman backup; returns `(value, argmax)`.
    pub fn backup(&self, state: usize, values: &[f64], delta: f64) -> (f64, usize) {
        let mut best = (self.action_value(0, state, values, delta), 0);
        for a in 1..self.actions.len() {
            let q = self.action_value(a, state, values, delta);
            if q > best.0 {
                best = (q, a);
            }
        }
        best
    }

    pub fn sweep(&self, values: &[f64], delta: f64) -> (Vec<f64>, Vec<usize>) {
        (0..self.n_states)
            .map(|s| self.backup(s, values, delta))
            .unzip()
    }

    /// Iterates from `initial` (zeros when `None`) until the sup-norm change
    /// of a sweep drops below `tolerance`.
    pub fn solve(
        &self,
        delta: f64,
        tolerance: f64,
        max_iterations: usize,
        initial: Option<Vec<f64>>,
    ) -> Result<MdpSolution, MdpError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(MdpError::InvalidDiscount(delta));
        }
        let mut values = initial.unwrap_or_else(|| vec![0.0; self.n_states]);
        let mut history = Vec::new();
        let mut residual = f64::INFINITY;
        for it in 1..=max_iterations {
            let (next, _) = self.sweep(&values, delta);
            residual = sup_distance(&next, &values);
            history.push(residual);
            values = next;
            if residual < tolerance {
                let (_, policy) = self.sweep(&values, delta);
                return Ok(MdpSolution {
                    values,
                    policy,
                    iterations: it,
                    residual,
                    residual_history: history,
                });
            }
        }
        Err(MdpError::NonConvergence {
            iterations: max_iterations,
            residual,
        })
    }

    /// The single-action MDP that follows `policy`.
    pub fn restricted(&self, policy: &[usize]) -> Mdp {
        let reward = policy
            .iter()
            .enumerate()
            .map(|(s, &a)| self.actions[a].reward[s])
            .collect();
        let next = policy
            .iter()
            .enumerate()
            .map(|(s, &a)| self.actions[a].next[s].clone())
            .collect();
        Mdp {
            actions: vec![MdpAction { reward, next }],
            n_states: self.n_states,
        }
    }
}

pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> Mdp {
        // action 0: stop with reward; action 1: pay 0 and swap states
        Mdp::new(vec![
            MdpAction {
                reward: vec![1.0, 3.0],
                next: vec![vec![], vec![]],
            },
            MdpAction {
                reward: vec![0.0, 0.0],
                next: vec![vec![(1, 1.0)], vec![(0, 1.0)]],
            },
        ])
        .unwrap()
    }

    #[test]
    fn solves_small_stopping_problem() {
        let sol = two_state().solve(0.9, 1e-12, 10_000, None).unwrap();
        // state 0 waits one period for 3: 0.9 * 3 = 2.7 > 1
        assert!((sol.values[0] - 2.7).abs() < 1e-10);
        assert!((sol.values[1] - 3.0).abs() < 1e-10);
        assert_eq!(sol.policy, vec![1, 0]);
    }

    #[test]
    fn residuals_contract() {
        let sol = two_state().solve(0.5, 1e-14, 10_000, None).unwrap();
        for w in sol.residual_history.windows(2) {
            assert!(w[1] <= 0.5 * w[0] + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_kernels() {
        let bad = Mdp::new(vec![MdpAction {
            reward: vec![0.0, 0.0],
            next: vec![vec![(0, 0.5)], vec![(1, 1.0)]],
        }]);
        assert!(matches!(bad, Err(MdpError::InvalidKernel(_))));
        let out_of_range = Mdp::new(vec![MdpAction {
            reward: vec![0.0],
            next: vec![vec![(3, 1.0)]],
        }]);
        assert!(out_of_range.is_err());
    }

    #[test]
    fn reports_nonconvergence() {
        let slow = Mdp::new(vec![MdpAction {
            reward: vec![1.0],
            next: vec![vec![(0, 1.0)]],
        }])
        .unwrap();
        let err = slow.solve(0.99, 1e-15, 3, None).unwrap_err();
        assert!(matches!(err, MdpError::NonConvergence { iterations: 3, .. }));
        assert!(two_state().solve(1.0, 1e-9, 10, None).is_err());
    }

    #[test]
    fn restriction_evaluates_fixed_policy() {
        let m = two_state().restricted(&[0, 0]);
        let sol = m.solve(0.9, 1e-12, 100, None).unwrap();
        assert_eq!(sol.values, vec![1.0, 3.0]);
    }
}
