//! Successive convex approximation for one waveguide's power split.
//!
//! Slack variables `γ_i` (SINR) and `μ_i` (interference plus noise) turn the
//! sum rate into `Σ log2(1 + γ_i)` with the bilinear coupling `p_i ≥ γ_i μ_i`.
//! Each iteration replaces the coupling by its first-order expansion at the
//! current point and solves the resulting concave program over a polyhedron.
//! Everything is normalised by `a = P_t/M_k` as in [`crate::power`].

use serde::{Deserialize, Serialize};

use crate::barrier::{self, BarrierError, BarrierOptions, Polyhedron, SumLog1p};
use crate::power::{PaSolution, PowerError, WaveguideProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaOptions {
    /// Stop once successive values differ by at most this, bits/s/Hz.
    pub epsilon: f64,
    pub max_iter: usize,
    pub barrier: BarrierOptions,
}

impl Default for ScaOptions {
    fn default() -> Self {
        Self { epsilon: 1e-4, max_iter: 100, barrier: BarrierOptions::default() }
    }
}

/// One SCA point. `mu` has an entry per position; the last one is the
/// constant `c_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaIterate {
    pub p: Vec<f64>,
    pub gamma: Vec<f64>,
    pub mu: Vec<f64>,
    pub t: usize,
    /// True sum rate at `p`.
    pub value: f64,
}

impl ScaIterate {
    /// The point whose slacks meet their definitions with equality at `p`.
    pub fn tight(problem: &WaveguideProblem, p: &[f64], t: usize) -> Self {
        let n = problem.len();
        let mut mu = vec![0.0; n];
        let mut later = 0.0;
        for i in (0..n).rev() {
            mu[i] = later + problem.inv_snr[i];
            later += p[i];
        }
        let gamma = p.iter().zip(&mu).map(|(p, m)| p / m).collect();
        Self { p: p.to_vec(), gamma, mu, t, value: problem.objective(p) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaSolution {
    pub solution: PaSolution,
    /// Accepted iterates, starting from the initial point.
    pub trace: Vec<ScaIterate>,
}

/// Solves the linearised program at `iterate`.
///
/// Variables are laid out as `[p_0..p_{N-1}, γ_0..γ_{N-1}, μ_0..μ_{N-2}]`.
#[allow(clippy::needless_range_loop)]
pub fn convex_subproblem(
    problem: &WaveguideProblem,
    iterate: &ScaIterate,
    options: &BarrierOptions,
) -> Result<ScaIterate, PowerError> {
    let n = problem.len();
    let c = &problem.inv_snr;
    let gmin = problem.gamma_min();
    let (pi, gi, ui) = (|i: usize| i, |i: usize| n + i, |i: usize| 2 * n + i);
    let mut poly = Polyhedron::new(3 * n - 1);

    let all_p: Vec<(usize, f64)> = (0..n).map(|i| (pi(i), 1.0)).collect();
    poly.push(&all_p, 1.0);
    for i in 0..n {
        poly.push(&[(pi(i), -1.0)], 0.0);
        poly.push(&[(gi(i), -1.0)], 0.0);
        // γ_min (Σ_{j>i} p_j + c_i) ≤ p_i
        if gmin > 0.0 {
            let mut row: Vec<(usize, f64)> = ((i + 1)..n).map(|j| (pi(j), gmin)).collect();
            row.push((pi(i), -1.0));
            poly.push(&row, -gmin * c[i]);
        }
    }
    for i in 0..n - 1 {
        // Σ_{j>i} p_j + c_i ≤ μ_i ≤ 2(1 + c_i)
        let mut row: Vec<(usize, f64)> = ((i + 1)..n).map(|j| (pi(j), 1.0)).collect();
        row.push((ui(i), -1.0));
        poly.push(&row, -c[i]);
        poly.push(&[(ui(i), 1.0)], 2.0 * (1.0 + c[i]));
        // γ^t μ + μ^t γ - p ≤ μ^t γ^t
        let (g0, m0) = (iterate.gamma[i], iterate.mu[i]);
        poly.push(&[(ui(i), g0), (gi(i), m0), (pi(i), -1.0)], m0 * g0);
    }
    // c_N γ_N ≤ p_N
    poly.push(&[(gi(n - 1), c[n - 1]), (pi(n - 1), -1.0)], 0.0);

    let objective = SumLog1p { terms: (0..n).map(|i| (gi(i), 1.0)).collect() };
    let sol = barrier::maximize(&objective, &poly, None, options).map_err(|e| match e {
        BarrierError::Infeasible | BarrierError::NotConverged => PowerError::SubproblemInfeasible,
    })?;
    let p: Vec<f64> = sol.x[..n].iter().map(|x| x.max(0.0)).collect();
    let gamma = sol.x[n..2 * n].to_vec();
    let mut mu = sol.x[2 * n..].to_vec();
    mu.push(c[n - 1]);
    Ok(ScaIterate { value: problem.objective(&p), p, gamma, mu, t: iterate.t + 1 })
}

/// Runs SCA from the equal split.
///
/// If the first subproblem is infeasible, restarts from the minimum QoS power
/// profile with the leftover budget on the first-decoded user. Returns
/// [`PowerError::InfeasibleQos`] when even that exceeds the budget.
pub fn solve(problem: &WaveguideProblem, options: &ScaOptions) -> Result<ScaSolution, PowerError> {
    let n = problem.len();
    if n == 1 {
        let p = vec![1.0];
        let it = ScaIterate::tight(problem, &p, 0);
        let feasible = problem.is_feasible(&p, 0.0);
        if !feasible {
            return Err(PowerError::InfeasibleQos { required: problem.min_power()[0] });
        }
        return Ok(ScaSolution {
            solution: PaSolution { value: it.value, p, iterations: 0, converged: true },
            trace: vec![it],
        });
    }
    let p_min = problem.min_power();
    let required: f64 = p_min.iter().sum();
    if required > 1.0 {
        return Err(PowerError::InfeasibleQos { required });
    }

    let mut current = ScaIterate::tight(problem, &vec![1.0 / n as f64; n], 0);
    let mut trace = vec![current.clone()];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < options.max_iter {
        let candidate = match convex_subproblem(problem, &current, &options.barrier) {
            Ok(c) => c,
            Err(PowerError::SubproblemInfeasible) if iterations == 0 => {
                let mut p = p_min.clone();
                p[0] += 1.0 - required;
                current = ScaIterate::tight(problem, &p, 0);
                trace = vec![current.clone()];
                convex_subproblem(problem, &current, &options.barrier)?
            }
            Err(e) => return Err(e),
        };
        iterations += 1;
        let next = accept(problem, &current, &candidate.p, iterations);
        let delta = (next.value - current.value).abs();
        let moved = next.p != current.p;
        current = next;
        trace.push(current.clone());
        if delta <= options.epsilon || !moved {
            converged = true;
            break;
        }
    }
    Ok(ScaSolution {
        solution: PaSolution { p: current.p.clone(), value: current.value, iterations, converged },
        trace,
    })
}

/// Moves from `current` towards `target`, rescaled onto the full budget.
/// When `current` is feasible the step is halved until the true objective
/// does not decrease.
fn accept(problem: &WaveguideProblem, current: &ScaIterate, target: &[f64], t: usize) -> ScaIterate {
    let full = |p: &[f64]| -> Vec<f64> {
        let total: f64 = p.iter().sum();
        if total > 0.0 {
            p.iter().map(|x| x / total).collect()
        } else {
            p.to_vec()
        }
    };
    let candidate = ScaIterate::tight(problem, &full(target), t);
    if !problem.is_feasible(&current.p, 1e-12) || candidate.value >= current.value {
        return candidate;
    }
    let mut tau = 0.5;
    while tau > 1e-8 {
        let p: Vec<f64> = current.p.iter().zip(target).map(|(a, b)| a + tau * (b - a)).collect();
        let step = ScaIterate::tight(problem, &full(&p), t);
        if step.value >= current.value {
            return step;
        }
        tau *= 0.5;
    }
    ScaIterate { t, ..current.clone() }
}

/// Runs [`solve`], falling back to the QoS-free problem when QoS cannot be
/// met. The flag is `false` in the fallback case.
pub fn solve_or_relax(problem: &WaveguideProblem, options: &ScaOptions) -> Result<(ScaSolution, bool), PowerError> {
    match solve(problem, options) {
        Ok(s) => Ok((s, true)),
        Err(PowerError::InfeasibleQos { .. }) => solve(&problem.without_qos(), options).map(|s| (s, false)),
        Err(e) => Err(e),
    }
}
