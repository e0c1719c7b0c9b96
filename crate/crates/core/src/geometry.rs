//! Planar swarm geometry: positions, formations and the scalar barrier /
//! Lyapunov functions the controller is built on.
//!
//! Every `h_*` function follows one sign rule: the *target* sets (waypoint and
//! formation balls) are sublevel sets `h <= 0`, the *safe* sets for separation
//! are superlevel sets `h >= 0`. The obstacle function keeps its textbook form
//! `1 - (x - eta)^T P (x - eta)`, which is positive inside the ellipse; the
//! safety barrier actually monitored and constrained is its negation, see
//! [`ObstacleEllipse::barrier`].

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("robot index {index} out of range for a swarm of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("displacement of robot {0} with itself is undefined")]
    SameIndex(usize),
    #[error("matrix is not symmetric positive-definite: {0:?}")]
    NotPositiveDefinite([[f64; 2]; 2]),
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("swarm needs at least two robots, got {0}")]
    TooFewRobots(usize),
    #[error("formation {id}: {reason}")]
    InvalidFormation { id: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

/// Row-major 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn diag(a: f64, b: f64) -> Self {
        Mat2([[a, 0.0], [0.0, b]])
    }

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        let m = &self.0;
        Vec2::new(m[0][0] * v.x + m[0][1] * v.y, m[1][0] * v.x + m[1][1] * v.y)
    }

    pub fn quad_form(&self, v: Vec2) -> f64 {
        v.dot(self.mul_vec(v))
    }

    /// Symmetric (to 1e-12 relative) with both leading minors positive.
    pub fn is_symmetric_positive_definite(&self) -> bool {
        let m = &self.0;
        if !m.iter().flatten().all(|v| v.is_finite()) {
            return false;
        }
        let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        if (m[0][1] - m[1][0]).abs() > 1e-12 * scale.max(1.0) {
            return false;
        }
        m[0][0] > 0.0 && m[0][0] * m[1][1] - m[0][1] * m[1][0] > 0.0
    }
}

impl From<[[f64; 2]; 2]> for Mat2 {
    fn from(a: [[f64; 2]; 2]) -> Self {
        Mat2(a)
    }
}

impl From<Mat2> for [[f64; 2]; 2] {
    fn from(m: Mat2) -> Self {
        m.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmState {
    positions: Vec<Vec2>,
}

impl SwarmState {
    pub fn new(positions: Vec<Vec2>) -> Result<Self, GeomError> {
        if positions.len() < 2 {
            return Err(GeomError::TooFewRobots(positions.len()));
        }
        if !positions.iter().all(|p| p.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        Ok(Self { positions })
    }

    pub fn positions(&self) -> &[Vec2] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn centroid(&self) -> Vec2 {
        centroid(self)
    }

    pub fn displacement(&self, i: usize, j: usize) -> Result<Vec2, GeomError> {
        displacement(self, i, j)
    }

    pub fn translated(&self, t: Vec2) -> SwarmState {
        SwarmState {
            positions: self.positions.iter().map(|&p| p + t).collect(),
        }
    }

    /// Forward-Euler step of the single-integrator swarm.
    pub fn integrate(&self, u: &ControlInput, dt: f64) -> SwarmState {
        assert_eq!(u.len(), self.len(), "control input size mismatch");
        SwarmState {
            positions: self
                .positions
                .iter()
                .zip(u.inputs())
                .map(|(&p, &v)| p + v * dt)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    inputs: Vec<Vec2>,
}

impl ControlInput {
    pub fn new(inputs: Vec<Vec2>) -> Self {
        Self { inputs }
    }

    pub fn zeros(r: usize) -> Self {
        Self {
            inputs: vec![Vec2::ZERO; r],
        }
    }

    pub fn inputs(&self) -> &[Vec2] {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

pub fn centroid(s: &SwarmState) -> Vec2 {
    let sum = s.positions.iter().fold(Vec2::ZERO, |acc, &p| acc + p);
    sum * (1.0 / s.len() as f64)
}

pub fn displacement(s: &SwarmState, i: usize, j: usize) -> Result<Vec2, GeomError> {
    let len = s.len();
    for index in [i, j] {
        if index >= len {
            return Err(GeomError::IndexOutOfRange { index, len });
        }
    }
    if i == j {
        return Err(GeomError::SameIndex(i));
    }
    Ok(s.positions[i] - s.positions[j])
}

/// A set of desired pairwise displacements `f_ij = x_i - x_j`, stored for
/// `i < j` only.
#[derive(Debug, Clone, PartialEq)]
pub struct Formation {
    id: String,
    robots: usize,
    displacements: BTreeMap<(usize, usize), Vec2>,
}

const REALIZABILITY_TOL: f64 = 1e-9;

impl Formation {
    /// Validates completeness (all `r(r-1)/2` pairs) and realizability
    /// (`f_ij = f_ik + f_kj`).
    pub fn new(
        id: impl Into<String>,
        robots: usize,
        pairs: impl IntoIterator<Item = ((usize, usize), Vec2)>,
    ) -> Result<Self, GeomError> {
        let id = id.into();
        let invalid = |reason: String| GeomError::InvalidFormation {
            id: id.clone(),
            reason,
        };
        if robots < 2 {
            return Err(GeomError::TooFewRobots(robots));
        }
        let mut displacements = BTreeMap::new();
        for ((i, j), d) in pairs {
            if i >= robots || j >= robots {
                return Err(invalid(format!("pair ({i}, {j}) out of range")));
            }
            if i == j {
                return Err(invalid(format!("pair ({i}, {j}) is degenerate")));
            }
            if !d.is_finite() {
                return Err(invalid(format!("pair ({i}, {j}) is not finite")));
            }
            let (key, value) = if i < j { ((i, j), d) } else { ((j, i), -d) };
            if displacements.insert(key, value).is_some() {
                return Err(invalid(format!("pair {key:?} given twice")));
            }
        }
        let expected = robots * (robots - 1) / 2;
        if displacements.len() != expected {
            return Err(invalid(format!(
                "expected {expected} pair displacements, got {}",
                displacements.len()
            )));
        }
        let f = Formation {
            id: id.clone(),
            robots,
            displacements,
        };
        for i in 0..robots {
            for j in (i + 1)..robots {
                for k in 0..robots {
                    if k == i || k == j {
                        continue;
                    }
                    let lhs = f.desired(i, j);
                    let rhs = f.desired(i, k) + f.desired(k, j);
                    if (lhs - rhs).norm() > REALIZABILITY_TOL * (1.0 + lhs.norm()) {
                        return Err(invalid(format!(
                            "f_{i}{j} != f_{i}{k} + f_{k}{j}; not realizable"
                        )));
                    }
                }
            }
        }
        Ok(f)
    }

    /// Builds a formation from per-robot offsets: `f_ij = o_i - o_j`.
    pub fn from_offsets(id: impl Into<String>, offsets: &[Vec2]) -> Result<Self, GeomError> {
        let r = offsets.len();
        let pairs = (0..r).flat_map(|i| ((i + 1)..r).map(move |j| (i, j)));
        Formation::new(
            id,
            r,
            pairs.map(|(i, j)| ((i, j), offsets[i] - offsets[j])).collect::<Vec<_>>(),
        )
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn robots(&self) -> usize {
        self.robots
    }

    /// Desired `x_i - x_j`; the `(j, i)` value is derived by negation.
    pub fn desired(&self, i: usize, j: usize) -> Vec2 {
        if i < j {
            self.displacements[&(i, j)]
        } else {
            -self.displacements[&(j, i)]
        }
    }

    pub fn pairs(&self) -> impl Iterator<Item = ((usize, usize), Vec2)> + '_ {
        self.displacements.iter().map(|(&k, &v)| (k, v))
    }

    /// Absolute positions realizing the formation with its centroid at the
    /// origin (robot 0 placed at `0`, robot `k` at `-f_0k`, then recentred).
    pub fn centered_offsets(&self) -> Vec<Vec2> {
        let raw: Vec<Vec2> = (0..self.robots)
            .map(|k| if k == 0 { Vec2::ZERO } else { -self.desired(0, k) })
            .collect();
        let c = raw.iter().fold(Vec2::ZERO, |a, &p| a + p) * (1.0 / self.robots as f64);
        raw.into_iter().map(|p| p - c).collect()
    }

    /// Swarm state with this exact formation and centroid `center`.
    pub fn place_at(&self, center: Vec2) -> SwarmState {
        SwarmState {
            positions: self.centered_offsets().into_iter().map(|o| o + center).collect(),
        }
    }
}

pub fn h_waypoint(x_c: Vec2, w: Vec2, d_g: f64) -> f64 {
    (x_c - w).norm_sq() - d_g * d_g
}

pub fn h_formation(x_ij: Vec2, f_ij: Vec2, d_f: f64) -> f64 {
    (x_ij - f_ij).norm_sq() - d_f * d_f
}

pub fn h_separation(x_ij: Vec2, d_o: f64) -> f64 {
    x_ij.norm_sq() - d_o * d_o
}

pub fn h_obstacle(x: Vec2, eta: Vec2, p: &Mat2) -> Result<f64, GeomError> {
    if !p.is_symmetric_positive_definite() {
        return Err(GeomError::NotPositiveDefinite(p.0));
    }
    Ok(1.0 - p.quad_form(x - eta))
}

pub fn grad_h_waypoint(x_c: Vec2, w: Vec2) -> Vec2 {
    (x_c - w) * 2.0
}

pub fn grad_h_formation(x_ij: Vec2, f_ij: Vec2) -> Vec2 {
    (x_ij - f_ij) * 2.0
}

pub fn grad_h_separation(x_ij: Vec2) -> Vec2 {
    x_ij * 2.0
}

/// `-2 (x - eta)^T P`; for symmetric `P` this is `-2 P (x - eta)`.
pub fn grad_h_obstacle(x: Vec2, eta: Vec2, p: &Mat2) -> Vec2 {
    let d = x - eta;
    let m = &p.0;
    // row vector d^T P
    Vec2::new(d.x * m[0][0] + d.y * m[1][0], d.x * m[0][1] + d.y * m[1][1]) * -2.0
}

/// Elliptic obstacle `{x : (x - eta)^T P (x - eta) <= 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEllipse", into = "RawEllipse")]
pub struct ObstacleEllipse {
    eta: Vec2,
    p: Mat2,
}

#[derive(Serialize, Deserialize)]
struct RawEllipse {
    eta: Vec2,
    #[serde(rename = "P")]
    p: Mat2,
}

impl TryFrom<RawEllipse> for ObstacleEllipse {
    type Error = GeomError;
    fn try_from(r: RawEllipse) -> Result<Self, GeomError> {
        ObstacleEllipse::new(r.eta, r.p)
    }
}

impl From<ObstacleEllipse> for RawEllipse {
    fn from(e: ObstacleEllipse) -> Self {
        RawEllipse { eta: e.eta, p: e.p }
    }
}

impl ObstacleEllipse {
    pub fn new(eta: Vec2, p: Mat2) -> Result<Self, GeomError> {
        if !eta.is_finite() {
            return Err(GeomError::NonFinite);
        }
        if !p.is_symmetric_positive_definite() {
            return Err(GeomError::NotPositiveDefinite(p.0));
        }
        Ok(Self { eta, p })
    }

    /// Axis-aligned ellipse with the given semi-axes.
    pub fn axis_aligned(eta: Vec2, semi_x: f64, semi_y: f64) -> Result<Self, GeomError> {
        Self::new(eta, Mat2::diag(1.0 / (semi_x * semi_x), 1.0 / (semi_y * semi_y)))
    }

    pub fn eta(&self) -> Vec2 {
        self.eta
    }

    pub fn p(&self) -> &Mat2 {
        &self.p
    }

    /// `h_O(x)`: positive strictly inside the ellipse.
    pub fn h(&self, x: Vec2) -> f64 {
        1.0 - self.p.quad_form(x - self.eta)
    }

    /// Safety barrier `-h_O(x)`: non-negative outside or on the ellipse.
    pub fn barrier(&self, x: Vec2) -> f64 {
        -self.h(x)
    }

    pub fn barrier_gradient(&self, x: Vec2) -> Vec2 {
        -grad_h_obstacle(x, self.eta, &self.p)
    }
}
