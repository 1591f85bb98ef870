//! Finite, fully observable MDPs with sparse transition rows.
//!
//! Several approximations reduce to solving one of these: the underlying
//! MDP of a POMDP, the grid MDP induced by a fixed interpolation table, and
//! the state-action-observation MDP behind the fast informed bound.

use crate::error::{Error, Result};

/// Reward and successor distribution for one state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpRow {
    pub reward: f64,
    pub next: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct FiniteMdp {
    num_states: usize,
    num_actions: usize,
    rows: Vec<MdpRow>,
    discount: f64,
}

#[derive(Debug, Clone)]
pub struct MdpSolution {
    pub values: Vec<f64>,
    /// State-major `q[s * num_actions + a]`.
    pub q: Vec<f64>,
    pub iters: usize,
    pub bellman_error: f64,
    pub converged: bool,
}

impl FiniteMdp {
    /// `rows[s * num_actions + a]` describes action `a` in state `s`.
    /// Row weights need not sum to one.
    pub fn from_rows(num_states: usize, num_actions: usize, rows: Vec<MdpRow>, discount: f64) -> Result<Self> {
        if rows.len() != num_states * num_actions {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: num_states * num_actions,
            });
        }
        if let Some(i) = rows
            .iter()
            .position(|r| !r.reward.is_finite() || r.next.iter().any(|&(t, p)| t >= num_states || !p.is_finite()))
        {
            return Err(Error::Validation(format!(
                "row for state {} action {} is malformed",
                i / num_actions,
                i % num_actions
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            rows,
            discount,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn row(&self, s: usize, a: usize) -> &MdpRow {
        &self.rows[s * self.num_actions + a]
    }

    /// Largest deviation of a row's total weight from one.
    pub fn max_row_defect(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.next.iter().map(|p| p.1).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `q(s,a) = r(s,a) + discount * sum_t P(t|s,a) v(t)`, state-major.
    pub fn q_values(&self, v: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.reward + self.discount * r.next.iter().map(|&(t, p)| p * v[t]).sum::<f64>())
            .collect()
    }

    /// One Bellman backup of `v`.
    pub fn backup(&self, v: &[f64]) -> Vec<f64> {
        self.q_values(v)
            .chunks(self.num_actions)
            .map(|q| q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    /// Value iteration until successive iterates differ by at most
    /// `epsilon` in the max norm.
    pub fn value_iteration(&self, init: Option<&[f64]>, epsilon: f64, max_iters: usize) -> MdpSolution {
        let mut v = init.map_or_else(|| vec![0.0; self.num_states], <[f64]>::to_vec);
        let mut err = f64::INFINITY;
        let mut iters = 0;
        while iters < max_iters {
            let next = self.backup(&v);
            err = next
                .iter()
                .zip(&v)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            v = next;
            iters += 1;
            if err <= epsilon {
                break;
            }
        }
        let q = self.q_values(&v);
        MdpSolution {
            values: v,
            q,
            iters,
            bellman_error: err,
            converged: err <= epsilon,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_series() {
        let m = FiniteMdp::from_rows(1, 1, vec![MdpRow { reward: 1.0, next: vec![(0, 1.0)] }], 0.9).unwrap();
        let sol = m.value_iteration(None, 1e-10, 10_000);
        assert!(sol.converged);
        assert!((sol.values[0] - 10.0).abs() < 1e-8);
        assert_eq!(m.max_row_defect(), 0.0);
    }

    #[test]
    fn picks_best_action() {
        let rows = vec![
            MdpRow { reward: 1.0, next: vec![(0, 1.0)] },
            MdpRow { reward: 0.0, next: vec![(1, 1.0)] },
            MdpRow { reward: 2.0, next: vec![(1, 1.0)] },
            MdpRow { reward: 2.0, next: vec![(1, 1.0)] },
        ];
        let m = FiniteMdp::from_rows(2, 2, rows, 0.5).unwrap();
        let sol = m.value_iteration(None, 1e-12, 1000);
        assert!((sol.values[1] - 4.0).abs() < 1e-9);
        assert!((sol.values[0] - 2.0).abs() < 1e-9);
    }
}
