//! Per-waveguide power allocation problem shared by both solvers.
//!
//! With every serving waveguide spending its full budget, inter-waveguide
//! interference no longer depends on the split, so each waveguide can be
//! solved on its own. Everything here is indexed by decoding position and
//! normalised by `a = P_t/M_k`: position `i` has rate
//! `log2(1 + p_i / (Σ_{j>i} p_j + c_i))` with `c_i = C_i / a`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelMatrix;
use crate::rates::{position_rates, DecodingPlan, PowerAllocation};
use crate::scenario::DerivedConstants;

/// Normalised SIC constants are capped here so that a user with a zero
/// channel stays finite (its rate is then effectively zero).
const MAX_INV_SNR: f64 = 1e300;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error("QoS infeasible: serving every user at R_min needs {required:.6} of the power budget")]
    InfeasibleQos { required: f64 },
    #[error("degenerate polyblock vertex (all components zero)")]
    DegenerateVertex,
    #[error("convex subproblem infeasible")]
    SubproblemInfeasible,
    #[error("waveguide serves no users")]
    EmptyWaveguide,
}

/// Power allocation for the users of one waveguide, in decoding order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveguideProblem {
    pub waveguide: usize,
    /// User indices in decoding order.
    pub users: Vec<usize>,
    /// `c_i = C_i / (P_t/M_k)` by decoding position.
    pub inv_snr: Vec<f64>,
    pub min_rate: f64,
}

impl WaveguideProblem {
    pub fn new(waveguide: usize, users: Vec<usize>, inv_snr: Vec<f64>, min_rate: f64) -> Result<Self, PowerError> {
        if users.is_empty() {
            return Err(PowerError::EmptyWaveguide);
        }
        assert_eq!(users.len(), inv_snr.len());
        let inv_snr = inv_snr.into_iter().map(|c| c.min(MAX_INV_SNR)).collect();
        Ok(Self { waveguide, users, inv_snr, min_rate })
    }

    /// Extracts waveguide `k`'s problem from a decoding plan.
    pub fn from_plan(
        plan: &DecodingPlan,
        ch: &ChannelMatrix,
        consts: &DerivedConstants,
        k: usize,
        min_rate: f64,
    ) -> Result<Self, PowerError> {
        let m_k = ch.active_count(k);
        if plan.order(k).is_empty() || m_k == 0 {
            return Err(PowerError::EmptyWaveguide);
        }
        let a = consts.tx_power / m_k as f64;
        let inv_snr = plan.constants_in_order(k).iter().map(|c| c / a).collect();
        Self::new(k, plan.order(k).to_vec(), inv_snr, min_rate)
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// The same problem without QoS constraints.
    pub fn without_qos(&self) -> Self {
        Self { min_rate: 0.0, ..self.clone() }
    }

    /// `γ_min = 2^{R_min} - 1`.
    pub fn gamma_min(&self) -> f64 {
        (self.min_rate * std::f64::consts::LN_2).exp_m1()
    }

    pub fn rates(&self, p: &[f64]) -> Vec<f64> {
        position_rates(&self.inv_snr, p)
    }

    /// Sum rate `f(p)`.
    pub fn objective(&self, p: &[f64]) -> f64 {
        self.rates(p).iter().sum()
    }

    /// Smallest total power that meets every QoS constraint, assigned
    /// backwards along the decoding order: `p_i = γ_min (Σ_{j>i} p_j + c_i)`.
    ///
    /// Any QoS-feasible point dominates this one component-wise.
    pub fn min_power(&self) -> Vec<f64> {
        let gamma = self.gamma_min();
        let mut p = vec![0.0; self.len()];
        let mut later = 0.0;
        for i in (0..self.len()).rev() {
            p[i] = gamma * (later + self.inv_snr[i]);
            later += p[i];
        }
        p
    }

    /// QoS slack in the linear form `p_i - γ_min (Σ_{j>i} p_j + c_i)`.
    pub fn qos_slack(&self, p: &[f64]) -> Vec<f64> {
        let gamma = self.gamma_min();
        let mut slack = vec![0.0; self.len()];
        let mut later = 0.0;
        for i in (0..self.len()).rev() {
            slack[i] = p[i] - gamma * (later + self.inv_snr[i]);
            later += p[i];
        }
        slack
    }

    /// `true` when `p` is in the simplex and meets QoS up to `tol`.
    pub fn is_feasible(&self, p: &[f64], tol: f64) -> bool {
        p.iter().all(|&x| x >= -tol)
            && p.iter().sum::<f64>() <= 1.0 + tol
            && self.qos_slack(p).iter().all(|&s| s >= -tol)
    }

    /// Writes `p` (decoding order) into a system-wide allocation.
    pub fn apply(&self, p: &[f64], pa: &mut PowerAllocation) {
        for (&n, &x) in self.users.iter().zip(p) {
            pa.set(n, x);
        }
    }
}

/// Result of either power allocation solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaSolution {
    /// Coefficients in decoding order.
    pub p: Vec<f64>,
    /// Sum rate at `p`, bits/s/Hz.
    pub value: f64,
    pub iterations: usize,
    /// `false` when the iteration cap stopped the solver.
    pub converged: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem() -> WaveguideProblem {
        WaveguideProblem::new(0, vec![4, 1, 7], vec![2e-3, 5e-4, 1e-4], 0.5).unwrap()
    }

    #[test]
    fn min_power_meets_qos_with_equality() {
        let pb = problem();
        let p = pb.min_power();
        for slack in pb.qos_slack(&p) {
            assert!(slack.abs() < 1e-15);
        }
        for r in pb.rates(&p) {
            assert!((r - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_matches_rate_formula() {
        let pb = problem();
        let p = [0.2, 0.3, 0.5];
        let expected =
            (1.0f64 + 0.2 / (0.8 + 2e-3)).log2() + (1.0f64 + 0.3 / (0.5 + 5e-4)).log2() + (1.0f64 + 0.5 / 1e-4).log2();
        assert!((pb.objective(&p) - expected).abs() < 1e-12);
    }

    #[test]
    fn feasibility_checks() {
        let pb = problem();
        assert!(pb.is_feasible(&[0.6, 0.3, 0.1], 1e-12));
        assert!(!pb.is_feasible(&[0.01, 0.01, 0.98], 1e-12));
        assert!(!pb.is_feasible(&[0.6, 0.3, 0.2], 1e-12));
        assert!(pb.without_qos().is_feasible(&[0.0, 0.0, 1.0], 0.0));
    }

    #[test]
    fn gamma_min_definition() {
        let pb = problem();
        assert!((pb.gamma_min() - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert_eq!(pb.without_qos().gamma_min(), 0.0);
    }

    #[test]
    fn empty_problem_rejected() {
        assert_eq!(WaveguideProblem::new(0, vec![], vec![], 0.1), Err(PowerError::EmptyWaveguide));
    }
}
