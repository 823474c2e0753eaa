//! Continuum side of the model: the piecewise-affine extension of a lattice
//! configuration, the densities `W_ε` and `W`, their integrals, and a
//! finite-element upper estimate of the quasiconvex envelope `QW`.
//!
//! Fiber maps are `2×2` chart matrices acting on chart tangent vectors, so
//! `A(a)` is `A * a` with `a` the chart coordinates of the axis.

mod qw;
mod symmetry;

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::energy::{EnergyError, Laws};
use crate::field_expr::ScalarFieldExpr;
use crate::geometry::{wedge, FiberMap, GeometryError, LatticeFrame, Mat2, MetricField, Vec2};
use crate::quadrature::GaussLegendre;
use crate::triangulation::{MeshError, TriangleMeasures, Triangulation};

pub use qw::{
    qw_upper_estimate, rigidity_lower_check, sample_fibers, DiscMesh, FiberSample, QwEstimate, QwOptions, RigidityReport,
    SampleSpec,
};
pub use symmetry::{conformal_symmetry_check, conformality_residual, SymmetryReport};

#[derive(Debug, Error)]
pub enum ContinuumError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("triangle {0} is degenerate")]
    DegenerateTriangle(usize),
    #[error("configuration has {got} values, mesh has {expected} vertices")]
    LengthMismatch { expected: usize, got: usize },
    #[error("point ({x}, {y}) cannot be reached by the extension")]
    Unreachable { x: f64, y: f64 },
    #[error("metric is not conformal to a constant metric (residual {residual:.3e})")]
    NotConformal { residual: f64 },
    #[error("disc mesh level must be at least 1")]
    BadLevel,
}

/// The extension `F_ε` of a lattice configuration.
///
/// Inside the mesh `F_ε` is affine on each triangle. Outside, lattice points
/// not in the mesh get the mean of their lattice neighbours in the mesh, and
/// the same affine rule applies on the lattice cell containing the point.
#[derive(Clone, Debug)]
pub struct DeformationField<'a> {
    pub tri: &'a Triangulation,
    pub values: Vec<Vec2>,
    /// `dF_ε` per triangle, constant on each.
    pub differential: Vec<Mat2>,
    lookup: HashMap<[i64; 2], usize>,
}

/// `ι_ε`: affine extension of `f` over every triangle.
pub fn affine_extend<'a>(tri: &'a Triangulation, f: &[Vec2]) -> Result<DeformationField<'a>, ContinuumError> {
    if f.len() != tri.n_vertices() {
        return Err(ContinuumError::LengthMismatch { expected: tri.n_vertices(), got: f.len() });
    }
    let differential = tri
        .triangles
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let [p, q, r] = t.v;
            let e = Mat2::from_columns(&[tri.vertices[q] - tri.vertices[p], tri.vertices[r] - tri.vertices[q]]);
            let d = Mat2::from_columns(&[f[q] - f[p], f[r] - f[q]]);
            let inv = e.try_inverse().filter(|_| e.determinant().abs() > 0.0).ok_or(ContinuumError::DegenerateTriangle(k))?;
            Ok(d * inv)
        })
        .collect::<Result<_, ContinuumError>>()?;
    let lookup = tri
        .lattice
        .as_ref()
        .map(|info| info.index.iter().enumerate().map(|(k, ij)| (*ij, k)).collect())
        .unwrap_or_default();
    Ok(DeformationField { tri, values: f.to_vec(), differential, lookup })
}

const NEIGHBOURS: [[i64; 2]; 6] = [[1, 0], [-1, 0], [0, 1], [0, -1], [1, 1], [-1, -1]];

impl DeformationField<'_> {
    fn lattice_value(&self, ij: [i64; 2]) -> Option<Vec2> {
        if let Some(&v) = self.lookup.get(&ij) {
            return Some(self.values[v]);
        }
        let near: Vec<Vec2> = NEIGHBOURS
            .iter()
            .filter_map(|d| self.lookup.get(&[ij[0] + d[0], ij[1] + d[1]]).map(|&v| self.values[v]))
            .collect();
        (!near.is_empty()).then(|| near.iter().sum::<Vec2>() / near.len() as f64)
    }

    /// `F_ε(x)`.
    pub fn eval(&self, x: &Vec2) -> Result<Vec2, ContinuumError> {
        if let Some((t, l)) = self.tri.locate(x) {
            let v = self.tri.triangles[t].v;
            return Ok(self.values[v[0]] * l[0] + self.values[v[1]] * l[1] + self.values[v[2]] * l[2]);
        }
        let unreachable = ContinuumError::Unreachable { x: x.x, y: x.y };
        let Some(info) = &self.tri.lattice else {
            return Err(unreachable);
        };
        let p_inv = info.frame.matrix().try_inverse().ok_or(ContinuumError::DegenerateTriangle(0))?;
        let uv = p_inv * (x - info.origin) / self.tri.epsilon;
        let (i, j) = (uv.x.floor() as i64, uv.y.floor() as i64);
        let (s, t) = (uv.x - i as f64, uv.y - j as f64);
        let (corners, w) = if s >= t {
            ([[i, j], [i + 1, j], [i + 1, j + 1]], [1.0 - s, s - t, t])
        } else {
            ([[i, j], [i + 1, j + 1], [i, j + 1]], [1.0 - t, s, t - s])
        };
        let mut out = Vec2::zeros();
        for (c, wk) in corners.iter().zip(w) {
            let v = self.lattice_value(*c).ok_or_else(|| ContinuumError::Unreachable { x: x.x, y: x.y })?;
            out += v * wk;
        }
        Ok(out)
    }
}

/// `det A = A(a) ∧ A(b) / ν(p)`, the determinant relative to `g` and the Euclidean target.
pub fn det_fiber(a: &FiberMap, g: &MetricField) -> Result<f64, GeometryError> {
    let f = g.frame();
    Ok(wedge(&(a.a * f.a()), &(a.a * f.b())) / g.nu(&a.p)?)
}

fn cofactor(a: &Mat2) -> Mat2 {
    Mat2::new(a[(1, 1)], -a[(1, 0)], -a[(0, 1)], a[(0, 0)])
}

/// A density with its geometric data frozen at one point or one triangle:
/// `Σ_u ρ^u Φ(|A u| / D^u) + Ψ(A(a) ∧ A(b) / ν)`.
#[derive(Clone, Copy, Debug)]
pub struct FrozenDensity<'a> {
    pub laws: &'a Laws,
    /// Chart coordinates of `a`, `b`, `c`.
    pub axes: [Vec2; 3],
    pub rho: [f64; 3],
    pub length: [f64; 3],
    pub nu: f64,
}

impl<'a> FrozenDensity<'a> {
    /// Limit density `W` at `p`: `ρ^u = |u|_g / Σ|·|_g`, `D^u = |u|_g`.
    pub fn limit(laws: &'a Laws, g: &MetricField, p: &Vec2) -> Result<Self, GeometryError> {
        let len = g.axis_norms(p)?;
        let sum: f64 = len.iter().sum();
        Ok(FrozenDensity {
            laws,
            axes: axes(g.frame()),
            rho: len.map(|l| l / sum),
            length: len,
            nu: g.nu(p)?,
        })
    }

    /// `W_ε` on triangle `t`, from the cached `ρ_ε`, `D_ε` and `ν_ε`.
    pub fn epsilon(laws: &'a Laws, frame: &LatticeFrame, measures: &TriangleMeasures, t: usize) -> Self {
        FrozenDensity { laws, axes: axes(frame), rho: measures.rho[t], length: measures.d[t], nu: measures.nu[t] }
    }

    pub fn value(&self, a: &Mat2) -> f64 {
        let mut w = 0.0;
        for k in 0..3 {
            w += self.rho[k] * self.laws.bond.phi((a * self.axes[k]).norm() / self.length[k]);
        }
        w + self.laws.volume.psi(self.volume_argument(a))
    }

    /// `A(a) ∧ A(b) / ν`.
    pub fn volume_argument(&self, a: &Mat2) -> f64 {
        wedge(&(a * self.axes[0]), &(a * self.axes[1])) / self.nu
    }

    /// Value and `∂W/∂A`. Where `A u = 0` the bond term's derivative is taken as zero.
    pub fn value_and_gradient(&self, a: &Mat2) -> (f64, Mat2) {
        let mut w = 0.0;
        let mut d = Mat2::zeros();
        for k in 0..3 {
            let u = self.axes[k];
            let au = a * u;
            let n = au.norm();
            let r = n / self.length[k];
            w += self.rho[k] * self.laws.bond.phi(r);
            if n > 0.0 {
                d += au * u.transpose() * (self.rho[k] * self.laws.bond.dphi(r) / (n * self.length[k]));
            }
        }
        let ab = wedge(&self.axes[0], &self.axes[1]);
        let s = a.determinant() * ab / self.nu;
        w += self.laws.volume.psi(s);
        d += cofactor(a) * (self.laws.volume.dpsi(s) * ab / self.nu);
        (w, d)
    }
}

fn axes(frame: &LatticeFrame) -> [Vec2; 3] {
    [frame.a(), frame.b(), frame.c()]
}

/// Metric and laws: evaluates `W` at any fiber.
#[derive(Clone, Debug)]
pub struct ContinuumDensity {
    pub g: MetricField,
    pub laws: Laws,
}

impl ContinuumDensity {
    pub fn new(g: MetricField, laws: Laws) -> Self {
        ContinuumDensity { g, laws }
    }

    pub fn at(&self, p: &Vec2) -> Result<FrozenDensity<'_>, GeometryError> {
        FrozenDensity::limit(&self.laws, &self.g, p)
    }
}

/// `W(A)` at the base point of `A`.
pub fn density_w(a: &FiberMap, density: &ContinuumDensity) -> Result<f64, GeometryError> {
    Ok(density.at(&a.p)?.value(&a.a))
}

/// `W_ε^Total(A)` on triangle `t`.
pub fn density_w_eps(a: &Mat2, laws: &Laws, frame: &LatticeFrame, measures: &TriangleMeasures, t: usize) -> f64 {
    FrozenDensity::epsilon(laws, frame, measures, t).value(a)
}

/// `∫_{M_ε} W_ε^Total(dF_ε) dVol_g = Σ_T μ(T) W_ε(dF_T)`, summed in triangle order.
pub fn integral_energy_eps(
    field: &DeformationField,
    frame: &LatticeFrame,
    measures: &TriangleMeasures,
    laws: &Laws,
) -> f64 {
    field
        .differential
        .iter()
        .enumerate()
        .map(|(t, a)| measures.mu[t] * density_w_eps(a, laws, frame, measures, t))
        .sum()
}

/// `Σ_T μ(T) W(dF_T)` with `W` frozen at each triangle's centroid.
pub fn integral_energy_limit(
    field: &DeformationField,
    density: &ContinuumDensity,
    measures: &TriangleMeasures,
) -> Result<f64, GeometryError> {
    let terms: Vec<f64> = (0..field.differential.len())
        .into_par_iter()
        .map(|t| Ok(measures.mu[t] * density.at(&field.tri.centroid(t))?.value(&field.differential[t])))
        .collect::<Result<_, GeometryError>>()?;
    Ok(terms.iter().sum())
}

/// A smooth map `F = (F_x, F_y)` of the chart variables.
#[derive(Clone, Debug)]
pub struct ExprMap {
    pub fx: ScalarFieldExpr,
    pub fy: ScalarFieldExpr,
}

impl ExprMap {
    pub fn new(fx: ScalarFieldExpr, fy: ScalarFieldExpr) -> Self {
        ExprMap { fx, fy }
    }

    pub fn value(&self, p: &Vec2) -> Result<Vec2, crate::DomainError> {
        Ok(Vec2::new(self.fx.eval(p.x, p.y)?, self.fy.eval(p.x, p.y)?))
    }

    /// Chart Jacobian `dF(p)`.
    pub fn jacobian(&self, p: &Vec2) -> Result<Mat2, crate::DomainError> {
        let (a, b) = self.fx.gradient(p.x, p.y)?;
        let (c, d) = self.fy.gradient(p.x, p.y)?;
        Ok(Mat2::new(a, b, c, d))
    }
}

/// `∫_M W(dF) dVol_g` over the whole chart rectangle by tensor Gauss–Legendre
/// quadrature (`order` points on each of `panels × panels` cells).
pub fn integral_energy_smooth(
    density: &ContinuumDensity,
    jacobian: impl Fn(&Vec2) -> Result<Mat2, ContinuumError> + Sync,
    order: usize,
    panels: usize,
) -> Result<f64, ContinuumError> {
    let c = density.g.chart();
    let gl = GaussLegendre::new(order);
    let (hx, hy) = (c.width() / panels as f64, c.height() / panels as f64);
    let rows: Vec<f64> = (0..panels)
        .into_par_iter()
        .map(|j| {
            let mut s = 0.0;
            for i in 0..panels {
                for (xi, wx) in gl.nodes.iter().zip(&gl.weights) {
                    for (yi, wy) in gl.nodes.iter().zip(&gl.weights) {
                        let p = Vec2::new(c.x0 + (i as f64 + xi) * hx, c.y0 + (j as f64 + yi) * hy);
                        let w = density.at(&p)?.value(&jacobian(&p)?);
                        s += wx * wy * w * density.g.sqrt_det(&p)?;
                    }
                }
            }
            Ok(s * hx * hy)
        })
        .collect::<Result<_, ContinuumError>>()?;
    Ok(rows.iter().sum())
}

/// Configuration sampled from a smooth map at the mesh vertices.
pub fn sample_map(
    tri: &Triangulation,
    f: impl Fn(&Vec2) -> Result<Vec2, ContinuumError>,
) -> Result<Vec<Vec2>, ContinuumError> {
    tri.vertices.iter().map(f).collect()
}

/// `max_T |W_ε(A_T) − W(A_T)| / (1 + |A_T|²)` over triangles, with `W`
/// frozen at the centroid and `|·|` the `g`-norm there.
pub fn uniform_closeness(
    tri: &Triangulation,
    measures: &TriangleMeasures,
    density: &ContinuumDensity,
    fibers: &[Mat2],
) -> Result<f64, GeometryError> {
    let frame = density.g.frame();
    let mut worst: f64 = 0.0;
    for (t, a) in fibers.iter().enumerate().take(tri.triangles.len()) {
        let c = tri.centroid(t);
        let w = density.at(&c)?.value(a);
        let we = density_w_eps(a, &density.laws, frame, measures, t);
        let n = crate::geometry::fiber_norm(&FiberMap::new(c, *a), &density.g)?;
        worst = worst.max((we - w).abs() / (1.0 + n * n));
    }
    Ok(worst)
}

/// Empirical coercivity and growth constants of `W` at `p`:
/// `min W/dist²(A, SO)` and `max W / (1 + |A|²)` over the given fibers.
pub fn fiber_constants(density: &ContinuumDensity, p: &Vec2, fibers: &[Mat2]) -> Result<(f64, f64), GeometryError> {
    let frozen = density.at(p)?;
    let mut alpha = f64::INFINITY;
    let mut growth: f64 = 0.0;
    for a in fibers {
        let fm = FiberMap::new(*p, *a);
        let w = frozen.value(a);
        let d2 = crate::geometry::dist_to_so(&fm, &density.g)?.powi(2);
        let n = crate::geometry::fiber_norm(&fm, &density.g)?;
        if d2 > 1e-12 {
            alpha = alpha.min(w / d2);
        }
        growth = growth.max(w / (1.0 + n * n));
    }
    Ok((alpha, growth))
}

#[cfg(test)]
mod tests;
