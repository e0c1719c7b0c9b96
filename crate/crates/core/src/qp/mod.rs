//! Per-step quadratic program: fixed-time CLF rows drive the centroid to a
//! waypoint and the swarm into a formation, CBF rows keep robots apart and
//! out of obstacles.
//!
//! Decision vector `z = [u_1x, u_1y, ..., u_rx, u_ry, δ₁, δ₂]`; objective
//! `zᵀHz + qᵀz`; every constraint is a row `a·z ≤ b`.

mod solver;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use solver::{solve_qp, QpSolution, QpStatus, SolverOptions};

use crate::geometry::{
    grad_h_formation, grad_h_separation, grad_h_waypoint, h_formation, h_separation, h_waypoint, Formation,
    ObstacleEllipse, SwarmState, Vec2,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("mu must be greater than 1 (got {0})")]
    InvalidMu(f64),
    #[error("T_ud must be positive (got {0})")]
    InvalidHorizon(f64),
    #[error("invalid QP configuration: {0}")]
    InvalidConfig(String),
    #[error("formation is for {formation} robots but the swarm has {swarm}")]
    FormationMismatch { formation: usize, swarm: usize },
    #[error("malformed QP: {0}")]
    Malformed(String),
    #[error("Hessian is not positive definite")]
    NotPositiveDefinite,
}

/// Fixed-time CLF gains derived from `mu` and the user-defined horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FxtParams {
    pub mu: f64,
    pub t_ud: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

pub fn fxt_params(mu: f64, t_ud: f64) -> Result<FxtParams, QpError> {
    if !(mu > 1.0) || !mu.is_finite() {
        return Err(QpError::InvalidMu(mu));
    }
    if !(t_ud > 0.0) || !t_ud.is_finite() {
        return Err(QpError::InvalidHorizon(t_ud));
    }
    let alpha = mu * PI / (2.0 * t_ud);
    Ok(FxtParams {
        mu,
        t_ud,
        alpha1: alpha,
        alpha2: alpha,
        gamma1: 1.0 + 1.0 / mu,
        gamma2: 1.0 - 1.0 / mu,
    })
}

/// `-α₁ max(0,h)^γ₁ - α₂ max(0,h)^γ₂`.
pub fn clf_rhs(h: f64, p: &FxtParams) -> f64 {
    let hp = h.max(0.0);
    if hp == 0.0 {
        return 0.0;
    }
    -p.alpha1 * hp.powf(p.gamma1) - p.alpha2 * hp.powf(p.gamma2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QpConfig {
    pub d_g: f64,
    pub d_f: f64,
    pub d_o: f64,
    pub u_max: f64,
    /// Hessian diagonal on the input entries.
    pub h_u: f64,
    pub h_delta1: f64,
    pub h_delta2: f64,
    /// Linear cost on δ₁.
    pub w_delta1: f64,
    pub delta2_max: f64,
    /// Adds half-plane CBF rows keeping every robot inside the grid.
    pub workspace_bounds: bool,
    /// Class-K gain of the workspace rows.
    pub boundary_gain: f64,
}

impl Default for QpConfig {
    fn default() -> Self {
        QpConfig {
            d_g: 0.10,
            d_f: 0.05,
            d_o: 0.30,
            u_max: 5.0,
            h_u: 1.0,
            h_delta1: 1.0,
            h_delta2: 1.0,
            w_delta1: 100.0,
            delta2_max: 10.0,
            workspace_bounds: false,
            boundary_gain: 5.0,
        }
    }
}

impl QpConfig {
    pub fn validate(&self) -> Result<(), QpError> {
        let named = [
            ("d_g", self.d_g),
            ("d_f", self.d_f),
            ("d_o", self.d_o),
            ("u_max", self.u_max),
            ("h_u", self.h_u),
            ("h_delta1", self.h_delta1),
            ("h_delta2", self.h_delta2),
            ("w_delta1", self.w_delta1),
            ("delta2_max", self.delta2_max),
            ("boundary_gain", self.boundary_gain),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(QpError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Origin of a constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RowTag {
    InputBound { robot: usize, axis: usize, upper: bool },
    ClfCentroid,
    ClfFormation { i: usize, j: usize },
    CbfSeparation { i: usize, j: usize },
    CbfObstacle { robot: usize, obstacle: usize },
    SlackBound { upper: bool },
    CbfBoundary { robot: usize, side: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpRow {
    pub a: Vec<f64>,
    pub b: f64,
    pub tag: RowTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpProblem {
    /// Dense row-major Hessian.
    pub h: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub rows: Vec<QpRow>,
}

impl QpProblem {
    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.dim();
        if n == 0 {
            return Err(QpError::Malformed("empty decision vector".into()));
        }
        if self.h.len() != n || self.h.iter().any(|r| r.len() != n) {
            return Err(QpError::Malformed("H must be square and match q".into()));
        }
        let finite = self.h.iter().flatten().chain(&self.q).all(|v| v.is_finite());
        if !finite {
            return Err(QpError::Malformed("non-finite objective".into()));
        }
        for (k, r) in self.rows.iter().enumerate() {
            if r.a.len() != n || !r.b.is_finite() || r.a.iter().any(|v| !v.is_finite()) {
                return Err(QpError::Malformed(format!("row {k} ({:?}) is malformed", r.tag)));
            }
        }
        Ok(())
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        let n = self.dim();
        let quad: f64 = (0..n).map(|i| z[i] * (0..n).map(|j| self.h[i][j] * z[j]).sum::<f64>()).sum();
        quad + self.q.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Largest `a·z - b`, clipped at zero.
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| r.a.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() - r.b)
            .fold(0.0, f64::max)
    }

    pub fn count_tag(&self, pred: impl Fn(&RowTag) -> bool) -> usize {
        self.rows.iter().filter(|r| pred(&r.tag)).count()
    }
}

/// Static geometry seen by the controller.
#[derive(Debug, Clone, Copy)]
pub struct QpScene<'a> {
    pub obstacles: &'a [ObstacleEllipse],
    /// `(min, max)` corners of the workspace; used when
    /// `QpConfig::workspace_bounds` is set.
    pub bounds: Option<(Vec2, Vec2)>,
}

/// Assembles the QP for moving the swarm from `state` towards waypoint `w`
/// in formation `f`.
pub fn build_qp(
    state: &SwarmState,
    w: Vec2,
    f: &Formation,
    scene: QpScene<'_>,
    cfg: &QpConfig,
    p: &FxtParams,
) -> Result<QpProblem, QpError> {
    cfg.validate()?;
    let r = state.len();
    if f.robots() != r {
        return Err(QpError::FormationMismatch {
            formation: f.robots(),
            swarm: r,
        });
    }
    let n = 2 * r + 2;
    let (d1, d2) = (2 * r, 2 * r + 1);
    let x = state.positions();
    let mut rows = Vec::new();
    let mut push = |a: Vec<f64>, b: f64, tag: RowTag| rows.push(QpRow { a, b, tag });
    let unit = |k: usize, s: f64| {
        let mut a = vec![0.0; n];
        a[k] = s;
        a
    };

    let ub = cfg.u_max / 2f64.sqrt();
    for robot in 0..r {
        for axis in 0..2 {
            push(unit(2 * robot + axis, 1.0), ub, RowTag::InputBound { robot, axis, upper: true });
            push(unit(2 * robot + axis, -1.0), ub, RowTag::InputBound { robot, axis, upper: false });
        }
    }

    let xc = state.centroid();
    let hw = h_waypoint(xc, w, cfg.d_g);
    let gw = grad_h_waypoint(xc, w);
    let mut a = vec![0.0; n];
    for robot in 0..r {
        a[2 * robot] = gw.x / r as f64;
        a[2 * robot + 1] = gw.y / r as f64;
    }
    a[d1] = -hw;
    push(a, clf_rhs(hw, p), RowTag::ClfCentroid);

    for ((i, j), fij) in f.pairs() {
        let xij = x[i] - x[j];
        let hf = h_formation(xij, fij, cfg.d_f);
        let g = grad_h_formation(xij, fij);
        let mut a = vec![0.0; n];
        a[2 * i] = g.x;
        a[2 * i + 1] = g.y;
        a[2 * j] = -g.x;
        a[2 * j + 1] = -g.y;
        a[d1] = -hf;
        push(a, clf_rhs(hf, p), RowTag::ClfFormation { i, j });
    }

    for i in 0..r {
        for j in i + 1..r {
            let xij = x[i] - x[j];
            let hd = h_separation(xij, cfg.d_o);
            let g = grad_h_separation(xij);
            let mut a = vec![0.0; n];
            a[2 * i] = -g.x;
            a[2 * i + 1] = -g.y;
            a[2 * j] = g.x;
            a[2 * j + 1] = g.y;
            a[d2] = -hd;
            push(a, 0.0, RowTag::CbfSeparation { i, j });
        }
    }

    for (robot, &xi) in x.iter().enumerate() {
        for (k, obs) in scene.obstacles.iter().enumerate() {
            let b = obs.barrier(xi);
            let g = obs.barrier_gradient(xi);
            let mut a = vec![0.0; n];
            a[2 * robot] = -g.x;
            a[2 * robot + 1] = -g.y;
            a[d2] = -b;
            push(a, 0.0, RowTag::CbfObstacle { robot, obstacle: k });
        }
    }

    push(unit(d2, -1.0), 0.0, RowTag::SlackBound { upper: false });
    push(unit(d2, 1.0), cfg.delta2_max, RowTag::SlackBound { upper: true });

    if let (true, Some((lo, hi))) = (cfg.workspace_bounds, scene.bounds) {
        let k = cfg.boundary_gain;
        for (robot, &xi) in x.iter().enumerate() {
            // sides: 0 = x min, 1 = x max, 2 = y min, 3 = y max
            push(unit(2 * robot, -1.0), k * (xi.x - lo.x), RowTag::CbfBoundary { robot, side: 0 });
            push(unit(2 * robot, 1.0), k * (hi.x - xi.x), RowTag::CbfBoundary { robot, side: 1 });
            push(unit(2 * robot + 1, -1.0), k * (xi.y - lo.y), RowTag::CbfBoundary { robot, side: 2 });
            push(unit(2 * robot + 1, 1.0), k * (hi.y - xi.y), RowTag::CbfBoundary { robot, side: 3 });
        }
    }

    let mut h = vec![vec![0.0; n]; n];
    for (k, row) in h.iter_mut().enumerate() {
        row[k] = if k < 2 * r { cfg.h_u } else if k == d1 { cfg.h_delta1 } else { cfg.h_delta2 };
    }
    let mut q = vec![0.0; n];
    q[d1] = cfg.w_delta1;
    Ok(QpProblem { h, q, rows })
}

/// Splits a solution vector into per-robot inputs and the two slacks.
pub fn split_solution(z: &[f64], robots: usize) -> (Vec<Vec2>, f64, f64) {
    let u = (0..robots).map(|i| Vec2::new(z[2 * i], z[2 * i + 1])).collect();
    (u, z[2 * robots], z[2 * robots + 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_dim(h: f64, q: f64, rows: Vec<(f64, f64)>) -> QpProblem {
        QpProblem {
            h: vec![vec![h]],
            q: vec![q],
            rows: rows
                .into_iter()
                .map(|(a, b)| QpRow {
                    a: vec![a],
                    b,
                    tag: RowTag::ClfCentroid,
                })
                .collect(),
        }
    }

    #[test]
    fn fxt_parameters() {
        let p = fxt_params(2.0, 4.0).unwrap();
        assert_relative_eq!(p.alpha1, PI / 4.0, epsilon = 1e-15);
        assert_relative_eq!(p.alpha2, 0.7854, epsilon = 1e-4);
        assert_eq!((p.gamma1, p.gamma2), (1.5, 0.5));
        let big = fxt_params(1e9, 4.0).unwrap();
        assert!((big.gamma1 - 1.0).abs() < 1e-8 && (big.gamma2 - 1.0).abs() < 1e-8);
        assert_eq!(fxt_params(1.0, 4.0), Err(QpError::InvalidMu(1.0)));
        assert!(fxt_params(2.0, 0.0).is_err());
    }

    #[test]
    fn clf_rhs_values() {
        let p = fxt_params(2.0, 4.0).unwrap();
        assert_eq!(clf_rhs(-3.0, &p), 0.0);
        assert_eq!(clf_rhs(0.0, &p), 0.0);
        assert_relative_eq!(clf_rhs(1.0, &p), -PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(clf_rhs(4.0, &p), -5.0 * PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn one_dimensional_active_bound() {
        // minimize z^2 s.t. z >= 1
        let s = solve_qp(&one_dim(1.0, 0.0, vec![(-1.0, -1.0)]), SolverOptions::default()).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert_relative_eq!(s.z[0], 1.0, epsilon = 1e-12);
        assert!(s.stationarity_residual < 1e-10);
    }

    #[test]
    fn unconstrained_minimum() {
        let n = 4;
        let mut h = vec![vec![0.0; n]; n];
        (0..n).for_each(|k| h[k][k] = 1.0);
        let mut q = vec![0.0; n];
        q[0] = -2.0;
        let s = solve_qp(&QpProblem { h, q, rows: vec![] }, SolverOptions::default()).unwrap();
        for (z, want) in s.z.iter().zip([1.0, 0.0, 0.0, 0.0]) {
            assert_relative_eq!(*z, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn contradictory_bounds_give_a_certificate() {
        // z <= -1 and z >= 1
        let p = one_dim(1.0, 0.0, vec![(1.0, -1.0), (-1.0, -1.0)]);
        let s = solve_qp(&p, SolverOptions::default()).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
        let y = s.certificate.unwrap();
        assert!(y.iter().all(|&v| v >= 0.0));
        let combo: f64 = y.iter().zip(&p.rows).map(|(y, r)| y * r.a[0]).sum();
        let rhs: f64 = y.iter().zip(&p.rows).map(|(y, r)| y * r.b).sum();
        assert!(combo.abs() < 1e-12 && rhs < 0.0);
        // zero row with a negative bound
        let s = solve_qp(&one_dim(1.0, 0.0, vec![(0.0, -1.0)]), SolverOptions::default()).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
    }

    #[test]
    fn row_count_and_stationary_feasibility() {
        let f = Formation::from_offsets("t", &[Vec2::new(0.0, 0.4), Vec2::new(-0.4, -0.2), Vec2::new(0.4, -0.2)])
            .unwrap();
        let w = Vec2::new(2.5, 2.5);
        let state = f.place_at(w);
        let obstacles = vec![
            ObstacleEllipse::axis_aligned(Vec2::new(0.5, 0.5), 0.3, 0.3).unwrap(),
            ObstacleEllipse::axis_aligned(Vec2::new(4.5, 0.5), 0.3, 0.3).unwrap(),
        ];
        let scene = QpScene {
            obstacles: &obstacles,
            bounds: None,
        };
        let cfg = QpConfig::default();
        let p = fxt_params(2.0, 4.0).unwrap();
        let qp = build_qp(&state, w, &f, scene, &cfg, &p).unwrap();
        assert_eq!(qp.dim(), 8);
        assert_eq!(qp.rows.len(), 27);
        let mut q = vec![0.0; 8];
        q[6] = 100.0;
        assert_eq!(qp.q, q);
        assert_eq!(qp.max_violation(&[0.0; 8]), 0.0);
        let with_bounds = QpConfig {
            workspace_bounds: true,
            ..cfg
        };
        let scene = QpScene {
            obstacles: &obstacles,
            bounds: Some((Vec2::ZERO, Vec2::new(5.0, 5.0))),
        };
        assert_eq!(build_qp(&state, w, &f, scene, &with_bounds, &p).unwrap().rows.len(), 27 + 12);
    }
}
