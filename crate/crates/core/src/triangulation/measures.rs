use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MeshError, Triangulation};
use crate::geometry::{riemannian_distance, DistanceOptions, GeometryError, Mat2, MetricField, Vec2};
use crate::quadrature::{GaussLegendre, TriangleRule};

/// How the closest-edge fractions `ρ_ε` are computed. Both freeze the metric
/// at the centroid when measuring point-to-edge distances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum RhoMethod {
    /// Exact regions: the three triangles joining the frozen-metric incenter to each side.
    Incenter,
    /// Stratified midpoint sampling with about `n` points.
    Sampled { n: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureOptions {
    pub rho: RhoMethod,
    pub distance: DistanceOptions,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        MeasureOptions { rho: RhoMethod::Incenter, distance: DistanceOptions::default() }
    }
}

/// Per-triangle and per-edge measures of a triangulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriangleMeasures {
    /// g-area `μ_ε(p, q, r)`.
    pub mu: Vec<f64>,
    /// `ν` at the centroid.
    pub nu: Vec<f64>,
    /// `(ρ^a, ρ^b, ρ^c)`.
    pub rho: Vec<[f64; 3]>,
    /// `(D^a, D^b, D^c)`.
    pub d: Vec<[f64; 3]>,
    /// `d(p, q)` per edge.
    pub edge_distance: Vec<f64>,
    /// `μ_ε(p, q)` per edge.
    pub mu_edge: Vec<f64>,
    /// Edges whose distance relaxation hit its iteration cap.
    pub distance_warnings: usize,
}

fn integrate_density(g: &MetricField, v: &[Vec2; 3], rule: &TriangleRule) -> Result<f64, GeometryError> {
    let mut err = None;
    let verts = v.map(|p| [p.x, p.y]);
    let total = rule.integrate(verts, |x, y| match g.sqrt_det(&Vec2::new(x, y)) {
        Ok(s) => s,
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(total),
    }
}

/// `μ_ε(p, q, r) = ∫_T sqrt(det G)` by the given triangle rule.
pub fn triangle_area(g: &MetricField, v: &[Vec2; 3], rule: &TriangleRule) -> Result<f64, GeometryError> {
    integrate_density(g, v, rule)
}

fn seg_dist2(gc: &Mat2, x: &Vec2, a: &Vec2, b: &Vec2) -> f64 {
    let e = b - a;
    let w = x - a;
    let t = (w.dot(&(gc * e)) / e.dot(&(gc * e))).clamp(0.0, 1.0);
    let r = w - e * t;
    r.dot(&(gc * r))
}

/// Relative g-areas `(ρ^a, ρ^b, ρ^c)` of the regions closest to the sides `pq`, `qr`, `rp`.
pub fn closest_edge_fractions(g: &MetricField, v: &[Vec2; 3], method: RhoMethod) -> Result<[f64; 3], GeometryError> {
    let c = (v[0] + v[1] + v[2]) / 3.0;
    let gc = g.g(&c)?;
    let len = |u: Vec2| u.dot(&(gc * u)).max(0.0).sqrt();
    match method {
        RhoMethod::Incenter => {
            let (la, lb, lc) = (len(v[1] - v[0]), len(v[2] - v[1]), len(v[0] - v[2]));
            // weights are the lengths of the opposite sides
            let inc = (v[0] * lb + v[1] * lc + v[2] * la) / (la + lb + lc);
            let rule = TriangleRule::degree6();
            let parts = [
                integrate_density(g, &[inc, v[0], v[1]], &rule)?,
                integrate_density(g, &[inc, v[1], v[2]], &rule)?,
                integrate_density(g, &[inc, v[2], v[0]], &rule)?,
            ];
            let s: f64 = parts.iter().sum();
            Ok(parts.map(|m| m / s))
        }
        RhoMethod::Sampled { n } => {
            let k = (n.max(1) as f64).sqrt().ceil() as usize;
            let kf = k as f64;
            let mut acc = [0.0; 3];
            let mut visit = |l1: f64, l2: f64| -> Result<(), GeometryError> {
                let x = v[0] + (v[1] - v[0]) * l1 + (v[2] - v[0]) * l2;
                let w = g.sqrt_det(&x)?;
                let d = [
                    seg_dist2(&gc, &x, &v[0], &v[1]),
                    seg_dist2(&gc, &x, &v[1], &v[2]),
                    seg_dist2(&gc, &x, &v[2], &v[0]),
                ];
                // points on a bisector are shared between the tied sides
                let m = d.iter().copied().fold(f64::INFINITY, f64::min);
                let tied: Vec<usize> = (0..3).filter(|&i| d[i] <= m * (1.0 + 1e-9) + 1e-300).collect();
                for &i in &tied {
                    acc[i] += w / tied.len() as f64;
                }
                Ok(())
            };
            for i in 0..k {
                for j in 0..k - i {
                    let (fi, fj) = (i as f64, j as f64);
                    visit((3.0 * fi + 1.0) / (3.0 * kf), (3.0 * fj + 1.0) / (3.0 * kf))?;
                    if i + j + 2 <= k {
                        visit((3.0 * fi + 2.0) / (3.0 * kf), (3.0 * fj + 2.0) / (3.0 * kf))?;
                    }
                }
            }
            let s: f64 = acc.iter().sum();
            Ok(acc.map(|m| m / s))
        }
    }
}

/// `(D^a, D^b, D^c)`: distances between consecutive vertices divided by `ε`.
pub fn rescaled_distances(
    g: &MetricField,
    v: &[Vec2; 3],
    epsilon: f64,
    opts: &DistanceOptions,
) -> Result<[f64; 3], GeometryError> {
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let (p, q) = (v[k], v[(k + 1) % 3]);
        *o = riemannian_distance(g, &p, &q, opts)?.distance / epsilon;
    }
    Ok(out)
}

/// `μ_ε(p, q)`: sum over incident triangles of `ρ^axis · μ`.
pub fn edge_weight(tri: &Triangulation, mu: &[f64], rho: &[[f64; 3]], edge: usize) -> Result<f64, MeshError> {
    let incident = &tri.edge_tris[edge];
    if incident.is_empty() {
        return Err(MeshError::DanglingEdge { edge });
    }
    Ok(incident
        .iter()
        .map(|&t| {
            let k = tri.tri_edges[t].iter().position(|&e| e == edge).expect("incidence is consistent");
            rho[t][k] * mu[t]
        })
        .sum())
}

/// Computes all measures. Triangles and edges are processed in parallel and
/// collected in index order, so results do not depend on the thread count.
pub fn compute_measures(
    tri: &Triangulation,
    g: &MetricField,
    opts: &MeasureOptions,
) -> Result<TriangleMeasures, MeshError> {
    let rule = TriangleRule::degree6();
    let per_tri: Vec<(f64, f64, [f64; 3])> = (0..tri.triangles.len())
        .into_par_iter()
        .map(|t| -> Result<_, GeometryError> {
            let v = tri.tri_points(t);
            let mu = triangle_area(g, &v, &rule)?;
            let nu = g.nu(&tri.centroid(t))?;
            let rho = closest_edge_fractions(g, &v, opts.rho)?;
            Ok((mu, nu, rho))
        })
        .collect::<Result<_, _>>()?;
    let dist: Vec<(f64, bool)> = tri
        .edges
        .par_iter()
        .map(|e| {
            let r = riemannian_distance(g, &tri.vertices[e.v[0]], &tri.vertices[e.v[1]], &opts.distance)?;
            Ok((r.distance, r.converged))
        })
        .collect::<Result<_, GeometryError>>()?;

    let mu: Vec<f64> = per_tri.iter().map(|x| x.0).collect();
    let nu: Vec<f64> = per_tri.iter().map(|x| x.1).collect();
    let rho: Vec<[f64; 3]> = per_tri.iter().map(|x| x.2).collect();
    let edge_distance: Vec<f64> = dist.iter().map(|x| x.0).collect();
    let distance_warnings = dist.iter().filter(|x| !x.1).count();
    let d = tri.tri_edges.iter().map(|te| te.map(|e| edge_distance[e] / tri.epsilon)).collect();
    let mu_edge = (0..tri.edges.len())
        .map(|e| edge_weight(tri, &mu, &rho, e))
        .collect::<Result<Vec<_>, _>>()?;

    let m = TriangleMeasures { mu, nu, rho, d, edge_distance, mu_edge, distance_warnings };
    let bad = m.mu.iter().chain(&m.nu).chain(&m.edge_distance).chain(&m.mu_edge).any(|v| !(*v > 0.0))
        || m.rho.iter().flatten().any(|v| !(*v > 0.0));
    if bad {
        return Err(MeshError::Invalid("non-positive measure".into()));
    }
    Ok(m)
}

/// `Vol_g(M) − Σ μ_ε(T)`, the g-area not covered by triangles.
pub fn coverage_defect(tri: &Triangulation, g: &MetricField, mu: &[f64]) -> Result<f64, GeometryError> {
    let c = g.chart();
    let rule = GaussLegendre::new(8);
    let mut err = None;
    let vol = rule.integrate_rect((c.x0, c.x1), (c.y0, c.y1), 16, |x, y| match g.sqrt_det(&Vec2::new(x, y)) {
        Ok(s) => s,
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    debug_assert_eq!(mu.len(), tri.triangles.len());
    Ok(vol - mu.iter().sum::<f64>())
}
