//! Fiber algebra in `T*M ⊗ ℝ²`: norms and distances to `O(g, e)` and `SO(g, e)`.
//!
//! A fiber map `A` is normalised to `B = A G^{-1/2}`, after which the metric is
//! Euclidean: `|A|_g = |B|_F` and `A ∈ SO(g, e)` iff `B ∈ SO(2)`.

use super::metric::min_eig_sym;
use super::{FiberMap, GeometryError, Mat2, MetricField};

/// Principal square root of a 2×2 SPD matrix in closed form.
pub fn sqrtm_spd(g: &Mat2) -> Result<Mat2, GeometryError> {
    if !(min_eig_sym(g) > 1e-12) || (g[(0, 1)] - g[(1, 0)]).abs() > 1e-12 * g.norm() {
        return Err(GeometryError::NotSpdMatrix);
    }
    let s = g.determinant().sqrt();
    let t = (g.trace() + 2.0 * s).sqrt();
    Ok((g + Mat2::identity() * s) / t)
}

/// `G^{-1/2}` for a 2×2 SPD matrix.
pub fn inv_sqrtm_spd(g: &Mat2) -> Result<Mat2, GeometryError> {
    let r = sqrtm_spd(g)?;
    let d = r.determinant();
    Ok(Mat2::new(r[(1, 1)], -r[(0, 1)], -r[(1, 0)], r[(0, 0)]) / d)
}

/// Singular values of a 2×2 matrix; `s2_signed` carries the sign of the determinant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Svd2 {
    pub s1: f64,
    pub s2_signed: f64,
}

impl Svd2 {
    pub fn s2(&self) -> f64 {
        self.s2_signed.abs()
    }
}

/// Closed-form signed singular values, no branching at `σ1 = σ2`.
pub fn svd2(b: &Mat2) -> Svd2 {
    let e = 0.5 * (b[(0, 0)] + b[(1, 1)]);
    let f = 0.5 * (b[(0, 0)] - b[(1, 1)]);
    let g = 0.5 * (b[(1, 0)] + b[(0, 1)]);
    let h = 0.5 * (b[(1, 0)] - b[(0, 1)]);
    let q = e.hypot(h);
    let r = f.hypot(g);
    Svd2 { s1: q + r, s2_signed: q - r }
}

/// `dist²(B, O(2))` for a Euclidean-normalised map.
pub fn dist2_to_o(b: &Mat2) -> f64 {
    let s = svd2(b);
    (s.s1 - 1.0).powi(2) + (s.s2() - 1.0).powi(2)
}

/// `dist²(B, SO(2))` for a Euclidean-normalised map.
pub fn dist2_to_so(b: &Mat2) -> f64 {
    let s = svd2(b);
    (s.s1 - 1.0).powi(2) + (s.s2_signed - 1.0).powi(2)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingularValues {
    pub s1: f64,
    pub s2: f64,
    /// Sign of `det A` (`-1`, `0` or `1`).
    pub det_sign: i8,
}

fn normalized(a: &FiberMap, g: &MetricField) -> Result<Mat2, GeometryError> {
    let gm = g.g(&a.p)?;
    Ok(a.a * inv_sqrtm_spd(&gm)?)
}

/// `|A|_g`, the Frobenius norm of `A G^{-1/2}`.
pub fn fiber_norm(a: &FiberMap, g: &MetricField) -> Result<f64, GeometryError> {
    Ok(normalized(a, g)?.norm())
}

pub fn singular_values_g(a: &FiberMap, g: &MetricField) -> Result<SingularValues, GeometryError> {
    let s = svd2(&normalized(a, g)?);
    let d = a.a.determinant();
    let det_sign = if d > 0.0 {
        1
    } else if d < 0.0 {
        -1
    } else {
        0
    };
    Ok(SingularValues { s1: s.s1, s2: s.s2(), det_sign })
}

pub fn dist_to_o(a: &FiberMap, g: &MetricField) -> Result<f64, GeometryError> {
    Ok(dist2_to_o(&normalized(a, g)?).sqrt())
}

pub fn dist_to_so(a: &FiberMap, g: &MetricField) -> Result<f64, GeometryError> {
    Ok(dist2_to_so(&normalized(a, g)?).sqrt())
}
