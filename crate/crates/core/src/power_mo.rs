//! Globally optimal per-waveguide power allocation by polyblock outer
//! approximation.
//!
//! The objective is increasing in `p` once the SIC constants are
//! non-increasing along the decoding order (always true for `C = max` of the
//! later ratios). The search keeps a set of vertices whose boxes `[0, v]`
//! cover every feasible point not yet beaten by the incumbent. Each
//! iteration takes the vertex with the largest upper bound, projects it onto
//! the budget boundary `Σp = 1` along the ray from the origin, records the
//! projection if it meets QoS, and replaces the vertex with the `N_k`
//! vertices obtained by pulling one coordinate back to the projection.
//!
//! The QoS set is not upward closed in `p` (a later user's power hurts an
//! earlier user), so vertex bounds use the tail-sum form of the objective,
//! `f = log(S_1 + c_1) + Σ_{i≥2} log((S_i + c_i)/(S_i + c_{i-1})) - log c_N`
//! with `S_i = Σ_{j≥i} p_j`, which is increasing in every `S_i`. Inside a
//! box, `S_i` is capped by the budget, by the box's own tail sum, by
//! `v_{i-1} + S_i ≥ S_{i-1}` and by the QoS constraint of position `i-1`,
//! propagated until the caps settle.

use serde::{Deserialize, Serialize};
use std::f64::consts::LN_2;

use crate::power::{PaSolution, PowerError, WaveguideProblem};

/// Vertex components below this are treated as zero.
const COMPONENT_FLOOR: f64 = 1e-12;
/// Feasibility tolerance for projected points.
const FEASIBILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyblockOptions {
    /// Stop once the upper bound is within `epsilon` bits/s/Hz of the incumbent.
    pub epsilon: f64,
    pub max_iter: usize,
}

impl Default for PolyblockOptions {
    fn default() -> Self {
        Self { epsilon: 1e-3, max_iter: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertex {
    pub point: Vec<f64>,
    /// Upper bound on the objective over `[0, point]` ∩ feasible set.
    pub upper: f64,
}

/// Search state: the polyblock's vertices and the incumbent.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyblock {
    pub vertices: Vec<Vertex>,
    pub best_value: f64,
    pub best_point: Option<Vec<f64>>,
    pub iteration: usize,
}

impl Polyblock {
    /// Largest vertex bound, or the incumbent if no vertex is left.
    pub fn upper_bound(&self) -> f64 {
        self.vertices.iter().map(|v| v.upper).fold(self.best_value, f64::max)
    }
}

/// One line of the iteration trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyblockStep {
    pub iteration: usize,
    /// Upper bound of the vertex selected this iteration.
    pub upper: f64,
    /// Incumbent value before processing the vertex.
    pub lower: f64,
    pub vertex_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyblockSolution {
    pub solution: PaSolution,
    /// Final global upper bound.
    pub upper_bound: f64,
    pub trace: Vec<PolyblockStep>,
}

/// `φ(v) = ζ v` with `ζ = min(1, 1/Σv)`: where the ray through `v` leaves
/// the budget set `Σp ≤ 1`.
pub fn project(vertex: &[f64]) -> Result<Vec<f64>, PowerError> {
    let total: f64 = vertex.iter().sum();
    if total <= 0.0 {
        return Err(PowerError::DegenerateVertex);
    }
    let zeta = (1.0 / total).min(1.0);
    Ok(vertex.iter().map(|v| zeta * v).collect())
}

/// `ṽ_i = v - (v_i - φ_i) e_i` for every coordinate `i`.
pub fn split(vertex: &[f64], projection: &[f64]) -> Vec<Vec<f64>> {
    (0..vertex.len())
        .map(|i| {
            let mut child = vertex.to_vec();
            child[i] = projection[i];
            child
        })
        .collect()
}

fn dominated_by(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// Drops vertices whose bound cannot beat `best_value`, then any vertex
/// that lies component-wise below another retained vertex.
pub fn prune(vertices: Vec<Vertex>, best_value: f64) -> Vec<Vertex> {
    let live: Vec<Vertex> = vertices.into_iter().filter(|v| v.upper > best_value).collect();
    let mut kept: Vec<Vertex> = Vec::with_capacity(live.len());
    for (i, v) in live.iter().enumerate() {
        let covered = live
            .iter()
            .enumerate()
            .any(|(j, w)| j != i && dominated_by(&v.point, &w.point) && (v.point != w.point || j < i));
        if !covered {
            kept.push(v.clone());
        }
    }
    kept
}

/// Upper bound of the objective over `[0, v]` intersected with the budget
/// and QoS constraints; `-∞` when that intersection is empty.
pub fn vertex_upper_bound(problem: &WaveguideProblem, v: &[f64]) -> f64 {
    let n = problem.len();
    let c = &problem.inv_snr;
    let gamma = problem.gamma_min();
    let floor = problem.min_power();
    if v.iter().zip(&floor).any(|(x, lo)| *x < lo * (1.0 - 1e-12) - FEASIBILITY_TOL) {
        return f64::NEG_INFINITY;
    }
    let mut caps = vec![0.0; n];
    let mut tail: f64 = v.iter().sum();
    caps[0] = tail.min(1.0);
    for i in 1..n {
        tail -= v[i - 1];
        caps[i] = tail;
    }
    // Alternate forward and backward passes until the caps stop moving.
    for _ in 0..=2 * n {
        let before = caps.clone();
        for i in 1..n {
            let mut cap = caps[i].min(caps[i - 1]);
            if gamma > 0.0 {
                cap = cap.min(v[i - 1] / gamma - c[i - 1]).min((caps[i - 1] - gamma * c[i - 1]) / (1.0 + gamma));
            }
            caps[i] = cap;
        }
        for i in (1..n).rev() {
            caps[i - 1] = caps[i - 1].min(v[i - 1] + caps[i]);
        }
        if caps == before {
            break;
        }
    }
    if caps[n - 1] < gamma * c[n - 1] * (1.0 - 1e-12) - FEASIBILITY_TOL || caps.iter().any(|&s| s < 0.0) {
        return f64::NEG_INFINITY;
    }
    tail_sum_objective(c, &caps)
}

/// Objective written in tail sums `S_i = Σ_{j≥i} p_j`.
fn tail_sum_objective(c: &[f64], s: &[f64]) -> f64 {
    let n = c.len();
    // log(S_1 + c_1) - log c_N = log(1 + S_1/c_1) + log(c_1/c_N)
    let mut nats = (s[0] / c[0]).ln_1p() + (c[0] / c[n - 1]).ln();
    for i in 1..n {
        // log((S_i + c_i) / (S_i + c_{i-1})) without cancellation
        nats += ((c[i] - c[i - 1]) / (s[i] + c[i - 1])).ln_1p();
    }
    nats / LN_2
}

/// Solves one waveguide's power allocation to global optimality within
/// `options.epsilon`.
pub fn solve(problem: &WaveguideProblem, options: &PolyblockOptions) -> Result<PolyblockSolution, PowerError> {
    let floor = problem.min_power();
    let required: f64 = floor.iter().sum();
    if required > 1.0 + FEASIBILITY_TOL {
        return Err(PowerError::InfeasibleQos { required });
    }
    let start = vec![1.0; problem.len()];
    let mut block = Polyblock {
        vertices: vec![Vertex { upper: vertex_upper_bound(problem, &start), point: start }],
        best_value: f64::NEG_INFINITY,
        best_point: None,
        iteration: 0,
    };
    let mut trace = Vec::new();
    let mut converged = false;

    while let Some(idx) = select(&block.vertices) {
        let upper = block.vertices[idx].upper;
        trace.push(PolyblockStep {
            iteration: block.iteration,
            upper,
            lower: block.best_value,
            vertex_count: block.vertices.len(),
        });
        if upper - block.best_value <= options.epsilon {
            converged = true;
            break;
        }
        if block.iteration >= options.max_iter {
            break;
        }
        block.iteration += 1;

        let vertex = block.vertices.swap_remove(idx);
        let phi = project(&vertex.point)?;
        let improved = problem.is_feasible(&phi, FEASIBILITY_TOL) && {
            let value = problem.objective(&phi);
            if value > block.best_value {
                block.best_value = value;
                block.best_point = Some(phi.clone());
                true
            } else {
                false
            }
        };

        // φ = v means the box already sits inside the budget set: nothing
        // left to split, and the projection was the box's best point.
        if phi != vertex.point {
            for mut child in split(&vertex.point, &phi) {
                child.iter_mut().filter(|x| **x < COMPONENT_FLOOR).for_each(|x| *x = 0.0);
                if child.iter().all(|&x| x == 0.0) {
                    continue;
                }
                let upper = vertex_upper_bound(problem, &child);
                if upper <= block.best_value {
                    continue;
                }
                insert(&mut block.vertices, Vertex { point: child, upper });
            }
        }
        if improved {
            let best = block.best_value;
            block.vertices.retain(|v| v.upper > best);
        }
    }
    if block.vertices.is_empty() {
        converged = true;
    }

    let upper_bound = block.upper_bound();
    let p = block.best_point.clone().ok_or(PowerError::InfeasibleQos { required })?;
    Ok(PolyblockSolution {
        solution: PaSolution { value: block.best_value, p, iterations: block.iteration, converged },
        upper_bound,
        trace,
    })
}

/// Runs [`solve`], falling back to the QoS-free problem when QoS cannot be
/// met. The flag is `false` in the fallback case.
pub fn solve_or_relax(
    problem: &WaveguideProblem,
    options: &PolyblockOptions,
) -> Result<(PolyblockSolution, bool), PowerError> {
    match solve(problem, options) {
        Ok(s) => Ok((s, true)),
        Err(PowerError::InfeasibleQos { .. }) => solve(&problem.without_qos(), options).map(|s| (s, false)),
        Err(e) => Err(e),
    }
}

fn select(vertices: &[Vertex]) -> Option<usize> {
    vertices.iter().enumerate().max_by(|a, b| a.1.upper.total_cmp(&b.1.upper)).map(|(i, _)| i)
}

/// Adds `vertex` unless an existing vertex covers it; removes the vertices it
/// covers.
fn insert(vertices: &mut Vec<Vertex>, vertex: Vertex) {
    if vertices.iter().any(|w| dominated_by(&vertex.point, &w.point)) {
        return;
    }
    vertices.retain(|w| !dominated_by(&w.point, &vertex.point));
    vertices.push(vertex);
}
