//! ε-scale hexagonal lattice triangulations and their measures.
//!
//! Triangles store their vertices in the order `(p, q, r)` used by the energy:
//! for `K⁺` triangles `q = p + εa`, `r = q + εb`; for `K⁻` triangles
//! `q = p − εa`, `r = q − εb`. With this order `(q − p) ∧ (r − q) = ε² a ∧ b`
//! for both classes.

mod measures;

pub use measures::{
    closest_edge_fractions, compute_measures, coverage_defect, edge_weight, rescaled_distances, triangle_area,
    MeasureOptions, RhoMethod, TriangleMeasures,
};

use std::collections::HashMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::geometry::{wedge, Axis, Chart, GeometryError, LatticeFrame, Vec2};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum MeshError {
    #[error("domain too small for epsilon = {epsilon}: no lattice triangle fits")]
    DomainTooSmall { epsilon: f64 },
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("edge {edge} has no incident triangle")]
    DanglingEdge { edge: usize },
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Plus => 1.0,
            Orientation::Minus => -1.0,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Orientation::Plus => "+",
            Orientation::Minus => "-",
        }
    }
}

/// An edge `(i, j)` with `x_j − x_i = ε u` for its axis `u`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub v: [usize; 2],
    pub axis: Axis,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triangle {
    /// `(p, q, r)`; sides `pq`, `qr`, `rp` run along `a`, `b`, `c`.
    pub v: [usize; 3],
    pub orient: Orientation,
}

/// How a mesh was generated; absent for meshes read from JSON.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeInfo {
    pub origin: Vec2,
    pub frame: LatticeFrame,
    /// Integer lattice coordinates `(i, j)` of each vertex.
    pub index: Vec<[i64; 2]>,
    /// Triangle by the lattice coordinates of its first vertex and orientation.
    pub tri_index: HashMap<([i64; 2], Orientation), usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Triangulation {
    pub epsilon: f64,
    pub vertices: Vec<Vec2>,
    pub edges: Vec<Edge>,
    pub triangles: Vec<Triangle>,
    /// Vertices with fewer than six neighbours.
    pub boundary: Vec<bool>,
    /// Edge indices of the `pq`, `qr`, `rp` sides of each triangle.
    pub tri_edges: Vec<[usize; 3]>,
    /// Incident triangles of each edge.
    pub edge_tris: Vec<Vec<usize>>,
    pub lattice: Option<LatticeInfo>,
}

/// Lattice placement options.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LatticeOptions {
    /// Lattice origin; defaults to the lower-left corner plus `(ε/2, ε/2)`.
    pub origin: Option<Vec2>,
}

fn point(o: &Vec2, frame: &LatticeFrame, eps: f64, i: i64, j: i64) -> Vec2 {
    o + (frame.a() * i as f64 + frame.b() * j as f64) * eps
}

/// Builds the maximal triangulation of `chart` by lattice triangles for the fixed origin.
pub fn build_lattice(chart: &Chart, frame: &LatticeFrame, epsilon: f64) -> Result<Triangulation, MeshError> {
    build_lattice_with(chart, frame, epsilon, &LatticeOptions::default())
}

pub fn build_lattice_with(
    chart: &Chart,
    frame: &LatticeFrame,
    epsilon: f64,
    opts: &LatticeOptions,
) -> Result<Triangulation, MeshError> {
    chart.validate()?;
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(MeshError::BadEpsilon(epsilon));
    }
    let o = opts
        .origin
        .unwrap_or_else(|| Vec2::new(chart.x0 + 0.5 * epsilon, chart.y0 + 0.5 * epsilon));
    let p_inv = frame.matrix().try_inverse().expect("frame is independent");

    // lattice-coordinate bounding box of the rectangle
    let (mut imin, mut imax, mut jmin, mut jmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for c in [(chart.x0, chart.y0), (chart.x1, chart.y0), (chart.x0, chart.y1), (chart.x1, chart.y1)] {
        let ij = p_inv * (Vec2::new(c.0, c.1) - o) / epsilon;
        imin = imin.min(ij.x);
        imax = imax.max(ij.x);
        jmin = jmin.min(ij.y);
        jmax = jmax.max(ij.y);
    }
    let cells = (imax - imin + 3.0) * (jmax - jmin + 3.0);
    if !(cells < 1e9) {
        return Err(MeshError::BadEpsilon(epsilon));
    }
    let (i0, i1) = (imin.floor() as i64 - 1, imax.ceil() as i64 + 1);
    let (j0, j1) = (jmin.floor() as i64 - 1, jmax.ceil() as i64 + 1);

    let tol = 1e-12 * (1.0 + chart.width().max(chart.height()));
    let inside = |i: i64, j: i64| chart.contains(&point(&o, frame, epsilon, i, j), tol);

    let mut raw: Vec<([[i64; 2]; 3], Orientation)> = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            let plus = [[i, j], [i + 1, j], [i + 1, j + 1]];
            let minus = [[i + 1, j], [i, j], [i, j - 1]];
            for (t, o) in [(plus, Orientation::Plus), (minus, Orientation::Minus)] {
                if t.iter().all(|v| inside(v[0], v[1])) {
                    raw.push((t, o));
                }
            }
        }
    }

    let mut index: Vec<[i64; 2]> = raw.iter().flat_map(|(t, _)| t.iter().copied()).collect();
    index.sort_by_key(|v| (v[1], v[0]));
    index.dedup();
    let lookup: HashMap<[i64; 2], usize> = index.iter().enumerate().map(|(k, v)| (*v, k)).collect();
    let vertices = index.iter().map(|v| point(&o, frame, epsilon, v[0], v[1])).collect();

    // canonical triangle order: by the lattice index of p, plus before minus
    raw.sort_by_key(|(t, o)| (t[0][1], t[0][0], *o == Orientation::Minus));
    let triangles: Vec<Triangle> = raw
        .iter()
        .map(|(t, orient)| Triangle { v: t.map(|v| lookup[&v]), orient: *orient })
        .collect();

    if triangles.is_empty() {
        return Err(MeshError::DomainTooSmall { epsilon });
    }
    let mut tri = Triangulation::assemble(epsilon, vertices, triangles)?;
    let tri_index = raw.iter().enumerate().map(|(t, (v, orient))| ((v[0], *orient), t)).collect();
    tri.lattice = Some(LatticeInfo { origin: o, frame: *frame, index, tri_index });
    Ok(tri)
}

impl Triangulation {
    /// Derives edges, adjacency and boundary flags from vertices and oriented triangles.
    pub fn assemble(epsilon: f64, vertices: Vec<Vec2>, triangles: Vec<Triangle>) -> Result<Self, MeshError> {
        let n = vertices.len();
        let mut edge_map: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_tris: Vec<Vec<usize>> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (t, tr) in triangles.iter().enumerate() {
            if tr.v.iter().any(|&v| v >= n) {
                return Err(MeshError::Invalid(format!("triangle {t} references a missing vertex")));
            }
            let mut te = [0; 3];
            for (k, axis) in Axis::ALL.into_iter().enumerate() {
                let (s, e) = (tr.v[k], tr.v[(k + 1) % 3]);
                // edges point along +axis: reversed for minus triangles
                let (i, j) = match tr.orient {
                    Orientation::Plus => (s, e),
                    Orientation::Minus => (e, s),
                };
                let key = (i.min(j), i.max(j));
                let id = *edge_map.entry(key).or_insert_with(|| {
                    edges.push(Edge { v: [i, j], axis });
                    edge_tris.push(Vec::new());
                    edges.len() - 1
                });
                if edges[id].axis != axis || edges[id].v != [i, j] {
                    return Err(MeshError::Invalid(format!("edge {i}-{j} used inconsistently by triangle {t}")));
                }
                edge_tris[id].push(t);
                te[k] = id;
            }
            tri_edges.push(te);
        }
        if let Some(e) = edge_tris.iter().position(|ts| ts.len() > 2) {
            return Err(MeshError::Invalid(format!("edge {e} has more than two incident triangles")));
        }
        let mut degree = vec![0usize; n];
        for e in &edges {
            degree[e.v[0]] += 1;
            degree[e.v[1]] += 1;
        }
        let boundary = degree.iter().map(|&d| d < 6).collect();
        Ok(Triangulation { epsilon, vertices, edges, triangles, boundary, tri_edges, edge_tris, lattice: None })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn tri_points(&self, t: usize) -> [Vec2; 3] {
        self.triangles[t].v.map(|v| self.vertices[v])
    }

    pub fn centroid(&self, t: usize) -> Vec2 {
        let [p, q, r] = self.tri_points(t);
        (p + q + r) / 3.0
    }

    /// Neighbour lists of each vertex.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.vertices.len()];
        for e in &self.edges {
            nb[e.v[0]].push(e.v[1]);
            nb[e.v[1]].push(e.v[0]);
        }
        nb
    }

    /// Total chart area of the triangles.
    pub fn chart_area(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [p, q, r] = self.tri_points(t);
                0.5 * wedge(&(q - p), &(r - q)).abs()
            })
            .sum()
    }

    /// Checks the structural invariants against the generating frame.
    pub fn check_invariants(&self, frame: &LatticeFrame) -> Result<(), String> {
        let eps = self.epsilon;
        let tol = 1e-12 * (1.0 + self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max));
        for (t, tr) in self.triangles.iter().enumerate() {
            let [p, q, r] = self.tri_points(t);
            let s = tr.orient.sign();
            for (got, want) in [(q - p, frame.a()), (r - q, frame.b()), (p - r, frame.c())] {
                if (got - want * (s * eps)).norm() > tol {
                    return Err(format!("triangle {t} violates the vertex-order convention"));
                }
            }
            if wedge(&(q - p), &(r - q)) <= 0.0 {
                return Err(format!("triangle {t} is not positively oriented"));
            }
        }
        let nb = self.neighbors();
        for (v, list) in nb.iter().enumerate() {
            if self.boundary[v] {
                continue;
            }
            let mut offsets: Vec<Vec2> = list.iter().map(|&w| (self.vertices[w] - self.vertices[v]) / eps).collect();
            for u in [frame.a(), frame.b(), frame.c()] {
                for sgn in [1.0, -1.0] {
                    let Some(k) = offsets.iter().position(|o| (o - u * sgn).norm() < 1e-9) else {
                        return Err(format!("interior vertex {v} lacks neighbour along {sgn}·{u:?}"));
                    };
                    offsets.swap_remove(k);
                }
            }
        }
        Ok(())
    }

    /// Triangle containing `x` with its barycentric coordinates, via the lattice
    /// structure when known and a scan otherwise; `None` outside the mesh.
    pub fn locate(&self, x: &Vec2) -> Option<(usize, [f64; 3])> {
        const SLACK: f64 = 1e-10;
        if let Some(info) = &self.lattice {
            let p_inv = info.frame.matrix().try_inverse()?;
            let uv = p_inv * (x - info.origin) / self.epsilon;
            let (i, j) = (uv.x.floor() as i64, uv.y.floor() as i64);
            for key in [([i, j], Orientation::Plus), ([i + 1, j + 1], Orientation::Minus)] {
                if let Some(&t) = info.tri_index.get(&key) {
                    let l = barycentric(&self.tri_points(t), x);
                    if l.iter().all(|&w| w >= -SLACK) {
                        return Some((t, l));
                    }
                }
            }
            return None;
        }
        (0..self.triangles.len()).find_map(|t| {
            let l = barycentric(&self.tri_points(t), x);
            l.iter().all(|&w| w >= -SLACK).then_some((t, l))
        })
    }
}

/// Barycentric coordinates of `x` with respect to triangle `v`.
pub fn barycentric(v: &[Vec2; 3], x: &Vec2) -> [f64; 3] {
    let d = wedge(&(v[1] - v[0]), &(v[2] - v[0]));
    let l1 = wedge(&(x - v[0]), &(v[2] - v[0])) / d;
    let l2 = wedge(&(v[1] - v[0]), &(x - v[0])) / d;
    [1.0 - l1 - l2, l1, l2]
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshDoc {
    epsilon: f64,
    vertices: Vec<[f64; 2]>,
    edges: Vec<(usize, usize, Axis)>,
    triangles: Vec<(usize, usize, usize, Orientation)>,
}

impl Serialize for Triangulation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        MeshDoc {
            epsilon: self.epsilon,
            vertices: self.vertices.iter().map(|v| [v.x, v.y]).collect(),
            edges: self.edges.iter().map(|e| (e.v[0], e.v[1], e.axis)).collect(),
            triangles: self.triangles.iter().map(|t| (t.v[0], t.v[1], t.v[2], t.orient)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Triangulation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = MeshDoc::deserialize(d)?;
        let vertices = doc.vertices.iter().map(|v| Vec2::new(v[0], v[1])).collect();
        let triangles = doc
            .triangles
            .iter()
            .map(|&(i, j, k, orient)| Triangle { v: [i, j, k], orient })
            .collect();
        let tri = Triangulation::assemble(doc.epsilon, vertices, triangles).map_err(D::Error::custom)?;
        let listed: Vec<(usize, usize, Axis)> = doc.edges;
        let derived: Vec<(usize, usize, Axis)> = tri.edges.iter().map(|e| (e.v[0], e.v[1], e.axis)).collect();
        if listed != derived {
            return Err(D::Error::custom("edge list does not match the triangles"));
        }
        Ok(tri)
    }
}

impl std::fmt::Display for Orientation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.symbol())
    }
}

#[cfg(test)]
mod tests;
