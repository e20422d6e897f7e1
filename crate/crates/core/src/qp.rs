//! Exact solver for the two-variable strictly convex QP
//!
//! ```text
//!     minimize    ½ qᵀ diag(h_u, h_θ) q + cᵀ q,     q = (u, θ)
//!     subject to  a_i · q <= b_i
//! ```
//!
//! The optimum of a strictly convex QP in the plane lies at the unconstrained
//! minimizer, at the projection onto one row, or at the intersection of two
//! rows. All `1 + n + n(n-1)/2` candidates are evaluated and the feasible one
//! with least objective is returned, so the solution is its own certificate.

use serde::{Deserialize, Serialize};

use crate::barriers::{ConstraintTag, LinearConstraint};

/// Feasibility tolerance on normalized rows.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpProblem {
    /// Hessian diagonal `(2 c', 2 ω)`.
    pub quad_diag: [f64; 2],
    /// Linear term `(v, 0)`.
    pub linear: [f64; 2],
    pub rows: Vec<LinearConstraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub u_star: f64,
    pub theta_star: f64,
    pub objective: f64,
    /// Rows held with equality, paired with their multipliers.
    pub active_set: Vec<(ConstraintTag, f64)>,
    pub status: QpStatus,
}

impl QpSolution {
    pub fn active_tags(&self) -> Vec<ConstraintTag> {
        self.active_set.iter().map(|(t, _)| *t).collect()
    }
}

impl QpProblem {
    pub fn new(quad_diag: [f64; 2], linear: [f64; 2], rows: Vec<LinearConstraint>) -> Self {
        Self {
            quad_diag,
            linear,
            rows,
        }
    }

    pub fn objective(&self, u: f64, theta: f64) -> f64 {
        0.5 * (self.quad_diag[0] * u * u + self.quad_diag[1] * theta * theta)
            + self.linear[0] * u
            + self.linear[1] * theta
    }

    pub fn gradient(&self, u: f64, theta: f64) -> [f64; 2] {
        [
            self.quad_diag[0] * u + self.linear[0],
            self.quad_diag[1] * theta + self.linear[1],
        ]
    }

    pub fn max_violation(&self, u: f64, theta: f64) -> f64 {
        self.rows
            .iter()
            .map(|r| r.normalized_violation(u, theta))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn feasible(&self, u: f64, theta: f64) -> bool {
        u.is_finite() && theta.is_finite() && self.rows.iter().all(|r| r.normalized_violation(u, theta) <= FEASIBILITY_TOL)
    }
}

struct Candidate {
    u: f64,
    theta: f64,
    objective: f64,
    active: Vec<(usize, f64)>,
}

/// Unconstrained minimizer.
fn free_minimizer(qp: &QpProblem) -> (f64, f64) {
    (-qp.linear[0] / qp.quad_diag[0], -qp.linear[1] / qp.quad_diag[1])
}

/// Minimizer on the line `a·q = b`, with its multiplier.
fn project_onto(qp: &QpProblem, row: &LinearConstraint) -> Option<(f64, f64, f64)> {
    let (u0, t0) = free_minimizer(qp);
    let (au, at) = (row.coeff_u, row.coeff_theta);
    let weight = au * au / qp.quad_diag[0] + at * at / qp.quad_diag[1];
    if weight <= 0.0 || !weight.is_finite() {
        return None;
    }
    let lambda = (au * u0 + at * t0 - row.bound) / weight;
    // axis-aligned rows land exactly on their boundary
    let u = if at == 0.0 { row.bound / au } else { u0 - lambda * au / qp.quad_diag[0] };
    let theta = if au == 0.0 { row.bound / at } else { t0 - lambda * at / qp.quad_diag[1] };
    Some((u, theta, lambda))
}

/// Intersection of two rows and the multipliers that make it stationary.
fn vertex(qp: &QpProblem, r1: &LinearConstraint, r2: &LinearConstraint) -> Option<(f64, f64, f64, f64)> {
    let det = r1.coeff_u * r2.coeff_theta - r1.coeff_theta * r2.coeff_u;
    let scale = (r1.coeff_u.abs() + r1.coeff_theta.abs()) * (r2.coeff_u.abs() + r2.coeff_theta.abs());
    if scale == 0.0 || det.abs() <= 1e-12 * scale {
        return None;
    }
    let u = (r1.bound * r2.coeff_theta - r1.coeff_theta * r2.bound) / det;
    let theta = (r1.coeff_u * r2.bound - r1.bound * r2.coeff_u) / det;
    // -grad = l1 a1 + l2 a2
    let g = qp.gradient(u, theta);
    let l1 = (-g[0] * r2.coeff_theta + g[1] * r2.coeff_u) / det;
    let l2 = (-r1.coeff_u * g[1] + r1.coeff_theta * g[0]) / det;
    Some((u, theta, l1, l2))
}

fn better(new: &Candidate, best: &Option<Candidate>, rows: &[LinearConstraint]) -> bool {
    let Some(best) = best else { return true };
    let tol = 1e-12 * best.objective.abs().max(1.0);
    if new.objective < best.objective - tol {
        return true;
    }
    if new.objective > best.objective + tol {
        return false;
    }
    // tie: fewer active rows, then lexicographic tags
    if new.active.len() != best.active.len() {
        return new.active.len() < best.active.len();
    }
    let key = |c: &Candidate| {
        let mut tags: Vec<ConstraintTag> = c.active.iter().map(|(i, _)| rows[*i].tag).collect();
        tags.sort();
        tags
    };
    key(new) < key(best)
}

/// Global optimum by active-set enumeration.
pub fn solve(qp: &QpProblem) -> QpSolution {
    assert!(
        qp.quad_diag[0] > 0.0 && qp.quad_diag[1] > 0.0,
        "QP Hessian must be positive definite"
    );
    let rows = &qp.rows;
    let mut best: Option<Candidate> = None;
    let consider = |c: Candidate, best: &mut Option<Candidate>| {
        if qp.feasible(c.u, c.theta) && better(&c, best, rows) {
            *best = Some(c);
        }
    };

    let (u0, t0) = free_minimizer(qp);
    consider(
        Candidate {
            u: u0,
            theta: t0,
            objective: qp.objective(u0, t0),
            active: Vec::new(),
        },
        &mut best,
    );
    for (i, row) in rows.iter().enumerate() {
        if let Some((u, theta, lambda)) = project_onto(qp, row) {
            if lambda >= 0.0 {
                consider(
                    Candidate {
                        u,
                        theta,
                        objective: qp.objective(u, theta),
                        active: vec![(i, lambda)],
                    },
                    &mut best,
                );
            }
        }
    }
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            if let Some((u, theta, li, lj)) = vertex(qp, &rows[i], &rows[j]) {
                consider(
                    Candidate {
                        u,
                        theta,
                        objective: qp.objective(u, theta),
                        active: vec![(i, li), (j, lj)],
                    },
                    &mut best,
                );
            }
        }
    }

    match best {
        Some(c) => QpSolution {
            u_star: c.u,
            theta_star: c.theta,
            objective: c.objective,
            active_set: c.active.iter().map(|(i, l)| (rows[*i].tag, *l)).collect(),
            status: QpStatus::Optimal,
        },
        None => {
            debug_assert!(!is_feasible(rows), "enumeration missed a feasible point");
            QpSolution {
                u_star: f64::NAN,
                theta_star: f64::NAN,
                objective: f64::INFINITY,
                active_set: Vec::new(),
                status: QpStatus::Infeasible,
            }
        }
    }
}

/// Feasibility of the polygon by Fourier–Motzkin elimination of `θ`.
pub fn is_feasible(rows: &[LinearConstraint]) -> bool {
    let tol = FEASIBILITY_TOL;
    let normalized: Vec<(f64, f64, f64)> = rows
        .iter()
        .map(|r| {
            let s = r.scale();
            (r.coeff_u / s, r.coeff_theta / s, r.bound / s)
        })
        .collect();
    // rows in u alone after eliminating θ: c u <= d
    let mut u_rows: Vec<(f64, f64)> = Vec::new();
    let (mut uppers, mut lowers) = (Vec::new(), Vec::new());
    for &(au, at, b) in &normalized {
        if at > 0.0 {
            uppers.push((au / at, b / at, at));
        } else if at < 0.0 {
            lowers.push((au / at, b / at, -at));
        } else {
            u_rows.push((au, b));
        }
    }
    // θ <= (b - au u)/at for uppers; θ >= (b - au u)/at for lowers
    for &(cu, cb, wu) in &uppers {
        for &(lu, lb, wl) in &lowers {
            // lb - lu u <= cb - cu u   =>   (cu - lu) u <= cb - lb
            let w = wu.min(wl);
            u_rows.push(((cu - lu) * w, (cb - lb) * w));
        }
    }
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (c, d) in u_rows {
        if c.abs() <= 1e-15 {
            if d < -tol {
                return false;
            }
        } else if c > 0.0 {
            hi = hi.min((d + tol) / c);
        } else {
            lo = lo.max((d + tol) / c);
        }
    }
    lo <= hi
}

/// Stationarity residual `‖∇f + Σ λ a‖∞`, relative to `max(1, ‖∇f‖∞)`,
/// together with the most negative multiplier.
pub fn kkt_residual(qp: &QpProblem, sol: &QpSolution) -> (f64, f64) {
    let g = qp.gradient(sol.u_star, sol.theta_star);
    let mut r = g;
    let mut min_lambda = 0.0f64;
    for (tag, lambda) in &sol.active_set {
        let row = qp
            .rows
            .iter()
            .find(|row| row.tag == *tag)
            .expect("active tag must name a row");
        r[0] += lambda * row.coeff_u;
        r[1] += lambda * row.coeff_theta;
        min_lambda = min_lambda.min(*lambda);
    }
    let scale = g[0].abs().max(g[1].abs()).max(1.0);
    (r[0].abs().max(r[1].abs()) / scale, min_lambda)
}
