//! Log-barrier Newton method for small concave maximisations over a
//! polyhedron `{x : A x ≤ b}`.
//!
//! Used for the convex subproblem inside the SCA power allocation, which has
//! at most `3N_k - 1` variables. A phase-I problem finds a strictly feasible
//! start when the caller has none.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarrierError {
    #[error("constraint set has no strictly feasible point")]
    Infeasible,
    #[error("Newton centering failed to converge")]
    NotConverged,
}

/// A twice-differentiable concave objective.
pub trait ConcaveObjective {
    /// Objective value; `-∞` outside the domain.
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], grad: &mut [f64]);
    /// Adds the (negative semidefinite) Hessian into `hess`.
    fn add_hessian(&self, x: &[f64], hess: &mut DMatrix<f64>);
}

/// `Σ_i w_i ln(1 + x_{index_i})`.
#[derive(Debug, Clone)]
pub struct SumLog1p {
    pub terms: Vec<(usize, f64)>,
}

impl ConcaveObjective for SumLog1p {
    fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, w)| if x[i] > -1.0 { w * x[i].ln_1p() } else { f64::NEG_INFINITY }).sum()
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        for &(i, w) in &self.terms {
            grad[i] += w / (1.0 + x[i]);
        }
    }

    fn add_hessian(&self, x: &[f64], hess: &mut DMatrix<f64>) {
        for &(i, w) in &self.terms {
            hess[(i, i)] -= w / ((1.0 + x[i]) * (1.0 + x[i]));
        }
    }
}

/// Linear objective `cᵀx`.
struct Linear(Vec<f64>);

impl ConcaveObjective for Linear {
    fn value(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    fn gradient(&self, _x: &[f64], grad: &mut [f64]) {
        grad.copy_from_slice(&self.0);
    }

    fn add_hessian(&self, _x: &[f64], _hess: &mut DMatrix<f64>) {}
}

/// Rows of `A x ≤ b`, built one constraint at a time.
#[derive(Debug, Clone, Default)]
pub struct Polyhedron {
    dim: usize,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl Polyhedron {
    pub fn new(dim: usize) -> Self {
        Self { dim, rows: Vec::new(), rhs: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Adds `Σ coef_j x_j ≤ rhs` from sparse `(index, coef)` pairs.
    pub fn push(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let mut row = vec![0.0; self.dim];
        for &(j, c) in terms {
            row[j] += c;
        }
        self.rows.push(row);
        self.rhs.push(rhs);
    }

    /// `b - A x` for every row.
    pub fn slacks(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().zip(&self.rhs).map(|(row, b)| b - row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>()).collect()
    }

    /// Largest constraint violation (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.slacks(x).into_iter().fold(0.0, |acc, s| acc.max(-s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierOptions {
    /// Target duality gap `m/t`.
    pub gap: f64,
    pub t0: f64,
    /// Barrier weight growth per outer step.
    pub growth: f64,
    pub max_newton: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self { gap: 1e-10, t0: 1.0, growth: 20.0, max_newton: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSolution {
    pub x: Vec<f64>,
    pub value: f64,
    /// Duality gap bound at exit.
    pub gap: f64,
    pub newton_steps: usize,
}

/// Maximises `objective` over `poly`, starting from `start` if it is
/// strictly feasible and from a phase-I point otherwise.
pub fn maximize(
    objective: &dyn ConcaveObjective,
    poly: &Polyhedron,
    start: Option<&[f64]>,
    options: &BarrierOptions,
) -> Result<BarrierSolution, BarrierError> {
    let mut x = match start {
        Some(s) if poly.slacks(s).iter().all(|&v| v > 0.0) && objective.value(s).is_finite() => s.to_vec(),
        _ => phase_one(poly, start, options)?,
    };
    let m = poly.len() as f64;
    let mut t = options.t0;
    let mut steps = 0;
    let mut gap = f64::INFINITY;
    loop {
        let mut trial = x.clone();
        match center(objective, poly, &mut trial, t, options.max_newton) {
            Ok(n) => {
                steps += n;
                x = trial;
                gap = m / t;
            }
            // Rounding stalls Newton at very large t; keep the last centre.
            Err(_) if gap.is_finite() => break,
            Err(e) => return Err(e),
        }
        if gap <= options.gap {
            break;
        }
        t *= options.growth;
    }
    Ok(BarrierSolution { value: objective.value(&x), gap, x, newton_steps: steps })
}

/// Finds a strictly feasible point by minimising the uniform violation `s`
/// in `A x - s ≤ b`.
fn phase_one(poly: &Polyhedron, start: Option<&[f64]>, options: &BarrierOptions) -> Result<Vec<f64>, BarrierError> {
    let n = poly.dim();
    let x0 = start.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let s0 = poly.max_violation(&x0).max(0.0) + 1.0;
    let mut lifted = Polyhedron::new(n + 1);
    for (row, &b) in poly.rows.iter().zip(&poly.rhs) {
        let mut terms: Vec<(usize, f64)> = row.iter().copied().enumerate().filter(|(_, a)| *a != 0.0).collect();
        terms.push((n, -1.0));
        lifted.push(&terms, b);
    }
    // Keeps the phase-I problem bounded.
    lifted.push(&[(n, -1.0)], 1.0);
    let mut y = x0;
    y.push(s0);
    let mut goal = vec![0.0; n + 1];
    goal[n] = -1.0;
    let objective = Linear(goal);
    let mut t = options.t0;
    for _ in 0..60 {
        if center(&objective, &lifted, &mut y, t, options.max_newton).is_err() {
            break;
        }
        if y[n] < 0.0 {
            y.truncate(n);
            if poly.slacks(&y).iter().all(|&v| v > 0.0) {
                return Ok(y);
            }
            y.push(-1e-12);
        }
        if lifted.len() as f64 / t < 1e-12 {
            break;
        }
        t *= options.growth;
    }
    Err(BarrierError::Infeasible)
}

/// Newton centering of `-t f(x) - Σ ln(b - A x)`; returns the step count.
fn center(
    objective: &dyn ConcaveObjective,
    poly: &Polyhedron,
    x: &mut Vec<f64>,
    t: f64,
    max_newton: usize,
) -> Result<usize, BarrierError> {
    let n = poly.dim();
    let merit = |x: &[f64]| -> f64 {
        let slacks = poly.slacks(x);
        if slacks.iter().any(|&s| s <= 0.0) {
            return f64::INFINITY;
        }
        let f = objective.value(x);
        if !f.is_finite() {
            return f64::INFINITY;
        }
        -t * f - slacks.iter().map(|s| s.ln()).sum::<f64>()
    };
    let mut grad_f = vec![0.0; n];
    for step in 0..max_newton {
        let slacks = poly.slacks(x);
        objective.gradient(x, &mut grad_f);
        let mut grad = DVector::from_iterator(n, grad_f.iter().map(|g| -t * g));
        let mut hess = DMatrix::zeros(n, n);
        objective.add_hessian(x, &mut hess);
        hess *= -t;
        for (row, s) in poly.rows.iter().zip(&slacks) {
            let inv = 1.0 / s;
            for i in 0..n {
                if row[i] == 0.0 {
                    continue;
                }
                grad[i] += row[i] * inv;
                for j in 0..n {
                    if row[j] != 0.0 {
                        hess[(i, j)] += row[i] * row[j] * inv * inv;
                    }
                }
            }
        }
        let dx = newton_direction(&hess, &grad).ok_or(BarrierError::NotConverged)?;
        let decrement = -grad.dot(&dx);
        if decrement / 2.0 <= 1e-11 {
            return Ok(step);
        }
        let current = merit(x);
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(xi, di)| xi + alpha * di).collect();
            let value = merit(&trial);
            if value <= current - 0.25 * alpha * decrement {
                if trial == *x {
                    return Ok(step);
                }
                *x = trial;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-14 {
                // No further progress possible at this precision.
                return Ok(step);
            }
        }
    }
    Err(BarrierError::NotConverged)
}

fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let rhs = -grad;
    if let Some(chol) = hess.clone().cholesky() {
        return Some(chol.solve(&rhs));
    }
    let scale = hess.diagonal().amax().max(1.0);
    let mut shifted = hess.clone();
    for i in 0..hess.nrows() {
        shifted[(i, i)] += 1e-12 * scale;
    }
    shifted.cholesky().map(|c| c.solve(&rhs)).or_else(|| hess.clone().lu().solve(&rhs))
}
