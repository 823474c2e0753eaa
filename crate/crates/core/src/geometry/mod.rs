//! Chart, lattice frame, metric, connection and fiber algebra.
//!
//! The flat symmetric connection is the trivial connection of the chart: the
//! coordinate frame is parallel, geodesics of the connection are straight
//! chart segments and the exponential map is `p + v`.

mod connection;
mod distance;
mod fiber;
mod metric;

pub use connection::{conformal_transport, exp_connection, parallel_transport, ExpResult};
pub use distance::{riemannian_distance, segment_length, DistanceOptions, DistanceResult};
pub use fiber::{
    dist2_to_o, dist2_to_so, dist_to_o, dist_to_so, fiber_norm, inv_sqrtm_spd, singular_values_g, sqrtm_spd,
    svd2, SingularValues, Svd2,
};
pub use metric::{MetricField, MetricJet};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field_expr::DomainError;

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

/// Scalar cross product `u ∧ v` of two plane vectors.
#[inline]
pub fn wedge(u: &Vec2, v: &Vec2) -> f64 {
    u.x * v.y - u.y * v.x
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum GeometryError {
    #[error("invalid chart rectangle [{x0}, {x1}] x [{y0}, {y1}]")]
    InvalidChart { x0: f64, x1: f64, y0: f64, y1: f64 },
    #[error("lattice frame must be linearly independent and positively oriented (a ∧ b = {wedge})")]
    BadFrame { wedge: f64 },
    #[error("metric is not positive definite at ({x}, {y}): smallest eigenvalue {min_eig}")]
    NotSpd { x: f64, y: f64, min_eig: f64 },
    #[error("matrix is not symmetric positive definite")]
    NotSpdMatrix,
    #[error("metric evaluation failed at ({x}, {y}): {source}")]
    Field { x: f64, y: f64, source: DomainError },
    #[error("segment from ({x}, {y}) leaves the domain")]
    OutsideDomain { x: f64, y: f64 },
    #[error("conformal factor must be positive, got {value} at ({x}, {y})")]
    NonPositiveFactor { x: f64, y: f64, value: f64 },
    #[error("quadrature needs at least {min} nodes, got {got}")]
    TooFewNodes { min: usize, got: usize },
}

/// Axis-aligned chart rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Chart {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Chart {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self, GeometryError> {
        let c = Chart { x0, x1, y0, y1 };
        c.validate()?;
        Ok(c)
    }

    pub fn unit_square() -> Self {
        Chart { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = [self.x0, self.x1, self.y0, self.y1].iter().all(|v| v.is_finite())
            && self.x0 < self.x1
            && self.y0 < self.y1;
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidChart { x0: self.x0, x1: self.x1, y0: self.y0, y1: self.y1 })
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    /// Closed-rectangle membership with an absolute slack `tol`.
    pub fn contains(&self, p: &Vec2, tol: f64) -> bool {
        p.x >= self.x0 - tol && p.x <= self.x1 + tol && p.y >= self.y0 - tol && p.y <= self.y1 + tol
    }
}

/// One of the three crystallographic axes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "b")]
    B,
    #[serde(rename = "c")]
    C,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::A, Axis::B, Axis::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::A => "a",
            Axis::B => "b",
            Axis::C => "c",
        }
    }
}

/// Constant lattice axes `a`, `b` in chart coordinates; `c = -a - b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FrameRepr", into = "FrameRepr")]
pub struct LatticeFrame {
    a: Vec2,
    b: Vec2,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRepr {
    a: [f64; 2],
    b: [f64; 2],
}

impl TryFrom<FrameRepr> for LatticeFrame {
    type Error = GeometryError;
    fn try_from(r: FrameRepr) -> Result<Self, Self::Error> {
        LatticeFrame::new(Vec2::new(r.a[0], r.a[1]), Vec2::new(r.b[0], r.b[1]))
    }
}

impl From<LatticeFrame> for FrameRepr {
    fn from(f: LatticeFrame) -> Self {
        FrameRepr { a: [f.a.x, f.a.y], b: [f.b.x, f.b.y] }
    }
}

impl LatticeFrame {
    pub fn new(a: Vec2, b: Vec2) -> Result<Self, GeometryError> {
        let w = wedge(&a, &b);
        let scale = a.norm() * b.norm();
        if !(w.is_finite() && w > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
            return Err(GeometryError::BadFrame { wedge: w });
        }
        Ok(LatticeFrame { a, b })
    }

    /// `a = (1, 0)`, `b = (-1/2, √3/2)`: unit axes at mutual angles 2π/3.
    pub fn hexagonal() -> Self {
        LatticeFrame {
            a: Vec2::new(1.0, 0.0),
            b: Vec2::new(-0.5, 0.75f64.sqrt()),
        }
    }

    pub fn a(&self) -> Vec2 {
        self.a
    }

    pub fn b(&self) -> Vec2 {
        self.b
    }

    pub fn c(&self) -> Vec2 {
        -self.a - self.b
    }

    pub fn axis(&self, ax: Axis) -> Vec2 {
        match ax {
            Axis::A => self.a,
            Axis::B => self.b,
            Axis::C => self.c(),
        }
    }

    /// Matrix with columns `a`, `b`.
    pub fn matrix(&self) -> Mat2 {
        Mat2::new(self.a.x, self.b.x, self.a.y, self.b.y)
    }

    /// `a ∧ b` in the chart (positive).
    pub fn wedge(&self) -> f64 {
        wedge(&self.a, &self.b)
    }
}

/// A linear map `A : T_pM → ℝ²` in chart coordinates, tagged with its base point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiberMap {
    pub p: Vec2,
    pub a: Mat2,
}

impl FiberMap {
    pub fn new(p: Vec2, a: Mat2) -> Self {
        FiberMap { p, a }
    }
}
