//! Dual active-set method of Goldfarb and Idnani for strictly convex QPs.
//!
//! The active-set projections are recomputed densely at every step (Cholesky
//! of the Hessian once, a QR of the active normals per step); the programs
//! built here have at most a few dozen variables.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{QpError, QpProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub z: Vec<f64>,
    pub status: QpStatus,
    pub objective: f64,
    /// Largest `a·z - b` over all rows, clipped at zero.
    pub max_violation: f64,
    /// Infinity norm of `2Hz + q + Σ λ_i a_i`.
    pub stationarity_residual: f64,
    /// Row multipliers (non-zero only on the final active set).
    pub multipliers: Vec<f64>,
    /// For infeasible problems: `y ≥ 0` with `Σ y_i a_i = 0` and `Σ y_i b_i < 0`.
    pub certificate: Option<Vec<f64>>,
    pub iterations: usize,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            feas_tol: 1e-6,
            max_iter: 500,
        }
    }
}

struct Projection {
    /// Primal step direction.
    z: DVector<f64>,
    /// Change of the active multipliers per unit step.
    r: DVector<f64>,
    /// `n_p` lies in the span of the active normals.
    dependent: bool,
}

struct Workspace<'a> {
    /// Lower Cholesky factor of the Hessian `G = 2H`.
    l: DMatrix<f64>,
    normals: &'a [DVector<f64>],
}

impl Workspace<'_> {
    fn project(&self, active: &[usize], np: &DVector<f64>) -> Projection {
        let lsolve = |v: &DVector<f64>| self.l.solve_lower_triangular(v).expect("Cholesky factor is regular");
        let v = lsolve(np);
        if active.is_empty() {
            let z = self.l.tr_solve_lower_triangular(&v).expect("regular");
            return Projection {
                z,
                r: DVector::zeros(0),
                dependent: false,
            };
        }
        let n = v.len();
        let mut b = DMatrix::zeros(n, active.len());
        for (c, &k) in active.iter().enumerate() {
            b.set_column(c, &lsolve(&self.normals[k]));
        }
        let qr = b.clone().qr();
        let qtv = qr.q().transpose() * &v;
        let r = qr
            .r()
            .solve_upper_triangular(&qtv)
            .unwrap_or_else(|| DVector::zeros(active.len()));
        let resid = &v - b * &r;
        let dependent = resid.norm() <= 1e-9 * v.norm();
        let z = self.l.tr_solve_lower_triangular(&resid).expect("regular");
        Projection { z, r, dependent }
    }
}

/// Minimizes `zᵀHz + qᵀz` subject to `a_i·z ≤ b_i`.
pub fn solve_qp(problem: &QpProblem, options: SolverOptions) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let n = problem.dim();
    let m = problem.rows.len();
    let h = DMatrix::from_fn(n, n, |i, j| problem.h[i][j]);
    let g = &h * 2.0;
    let l = g.clone().cholesky().ok_or(QpError::NotPositiveDefinite)?.l();
    let c = DVector::from_column_slice(&problem.q);

    // normalized rows n_i·z ≥ e_i with n_i = -a_i/|a_i|
    let mut norms = vec![0.0; m];
    let mut normals = Vec::with_capacity(m);
    let mut e = vec![0.0; m];
    let mut usable = vec![true; m];
    for (i, row) in problem.rows.iter().enumerate() {
        let a = DVector::from_column_slice(&row.a);
        let na = a.norm();
        norms[i] = na;
        if na < 1e-14 {
            usable[i] = false;
            normals.push(DVector::zeros(n));
            if row.b < -options.feas_tol {
                let mut y = vec![0.0; m];
                y[i] = 1.0;
                return Ok(finish(problem, DVector::zeros(n), QpStatus::Infeasible, vec![0.0; m], Some(y), 0));
            }
            continue;
        }
        normals.push(-a / na);
        e[i] = -row.b / na;
    }
    let ws = Workspace { l, normals: &normals };

    let mut x = -ws.l.tr_solve_lower_triangular(&ws.l.solve_lower_triangular(&c).expect("regular")).expect("regular");
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let slack = |x: &DVector<f64>, i: usize| normals[i].dot(x) - e[i];
    let multipliers = |active: &[usize], u: &[f64]| {
        let mut lam = vec![0.0; m];
        for (&k, &uk) in active.iter().zip(u) {
            lam[k] = uk / norms[k];
        }
        lam
    };

    loop {
        // most violated constraint, normalized
        let mut p = None;
        let mut worst = 0.0;
        for i in 0..m {
            if !usable[i] || active.contains(&i) {
                continue;
            }
            let s = slack(&x, i);
            if s * norms[i] < -0.5 * options.feas_tol && s < worst {
                worst = s;
                p = Some(i);
            }
        }
        let Some(p) = p else {
            let lam = multipliers(&active, &u);
            return Ok(finish(problem, x, QpStatus::Optimal, lam, None, iterations));
        };

        let mut up = 0.0;
        loop {
            iterations += 1;
            if iterations > options.max_iter {
                let lam = multipliers(&active, &u);
                return Ok(finish(problem, x, QpStatus::IterationLimit, lam, None, iterations));
            }
            let proj = ws.project(&active, &normals[p]);
            // dual step bound
            let mut t1 = f64::INFINITY;
            let mut k_drop = None;
            for (j, &rj) in proj.r.iter().enumerate() {
                if rj > 1e-12 {
                    let t = u[j] / rj;
                    if t < t1 {
                        t1 = t;
                        k_drop = Some(j);
                    }
                }
            }
            let zn = proj.z.dot(&normals[p]);
            if proj.dependent || zn <= 0.0 {
                let Some(k) = k_drop else {
                    // n_p is a non-positive combination of the active normals
                    let mut y = vec![0.0; m];
                    y[p] = 1.0 / norms[p];
                    for (j, &k) in active.iter().enumerate() {
                        y[k] = (-proj.r[j]).max(0.0) / norms[k];
                    }
                    return Ok(finish(problem, x, QpStatus::Infeasible, vec![0.0; m], Some(y), iterations));
                };
                for (uj, rj) in u.iter_mut().zip(proj.r.iter()) {
                    *uj -= t1 * rj;
                }
                up += t1;
                active.remove(k);
                u.remove(k);
                continue;
            }
            let t2 = (-slack(&x, p) / zn).max(0.0);
            let t = t1.min(t2);
            x += &proj.z * t;
            for (uj, rj) in u.iter_mut().zip(proj.r.iter()) {
                *uj -= t * rj;
            }
            up += t;
            if t2 <= t1 {
                active.push(p);
                u.push(up);
                break;
            }
            let k = k_drop.unwrap();
            active.remove(k);
            u.remove(k);
        }
    }
}

fn finish(
    problem: &QpProblem,
    x: DVector<f64>,
    status: QpStatus,
    multipliers: Vec<f64>,
    certificate: Option<Vec<f64>>,
    iterations: usize,
) -> QpSolution {
    let z: Vec<f64> = x.iter().copied().collect();
    let n = z.len();
    let mut grad: Vec<f64> = (0..n)
        .map(|i| problem.q[i] + 2.0 * (0..n).map(|j| problem.h[i][j] * z[j]).sum::<f64>())
        .collect();
    for (row, lam) in problem.rows.iter().zip(&multipliers) {
        for (g, a) in grad.iter_mut().zip(&row.a) {
            *g += lam * a;
        }
    }
    QpSolution {
        objective: problem.objective(&z),
        max_violation: problem.max_violation(&z),
        stationarity_residual: grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs())),
        z,
        status,
        multipliers,
        certificate,
        iterations,
    }
}
