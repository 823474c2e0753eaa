//! Discrete bond and signed-volume energies of a lattice configuration.
//!
//! `E_bond(f) = Σ_e μ(e) Φ(|f(q) − f(p)| / d(p, q))` over edges and
//! `E_vol(f) = Σ_T μ(T) Ψ((f(q) − f(p)) ∧ (f(r) − f(q)) / (ε² ν(T)))` over
//! triangles, with the vertex order of [`Triangle`](crate::triangulation::Triangle).

mod laws;

use std::ops::Deref;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wedge, Vec2};
use crate::triangulation::{TriangleMeasures, Triangulation};

pub use laws::{
    validate_bond_law, validate_volume_law, BondLaw, Condition, GridSpec, LawReport, Laws, VolumeKind, VolumeLaw,
    Violation,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("configuration has {got} values, mesh has {expected} vertices")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite configuration value at vertex {vertex}")]
    NonFinite { vertex: usize },
    #[error("edge {edge} has non-positive cached distance {value}")]
    DegenerateEdge { edge: usize, value: f64 },
    #[error("triangle {triangle} has non-positive nu {value}")]
    InvalidMeasures { triangle: usize, value: f64 },
    #[error("measures do not match the mesh")]
    MeasureMismatch,
    #[error("edge {edge} has zero length under f; the gradient is undefined")]
    ZeroLengthEdge { edge: usize },
}

/// The map `f : V_ε → ℝ²`, indexed like the mesh vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct DiscreteConfiguration(pub Vec<Vec2>);

impl From<Vec<[f64; 2]>> for DiscreteConfiguration {
    fn from(v: Vec<[f64; 2]>) -> Self {
        DiscreteConfiguration(v.into_iter().map(|p| Vec2::new(p[0], p[1])).collect())
    }
}

impl From<DiscreteConfiguration> for Vec<[f64; 2]> {
    fn from(c: DiscreteConfiguration) -> Self {
        c.0.iter().map(|p| [p.x, p.y]).collect()
    }
}

impl Deref for DiscreteConfiguration {
    type Target = [Vec2];
    fn deref(&self) -> &[Vec2] {
        &self.0
    }
}

impl DiscreteConfiguration {
    /// The chart embedding `f(v) = v`.
    pub fn identity(tri: &Triangulation) -> Self {
        DiscreteConfiguration(tri.vertices.clone())
    }

    pub fn from_fn(tri: &Triangulation, f: impl FnMut(&Vec2) -> Vec2) -> Self {
        DiscreteConfiguration(tri.vertices.iter().map(f).collect())
    }

    pub fn from_flat(x: &[f64]) -> Self {
        DiscreteConfiguration(x.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.0.iter().flat_map(|p| [p.x, p.y]).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub bond: f64,
    pub volume: f64,
    pub total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_edge: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_triangle: Option<Vec<f64>>,
}

const CHUNK: usize = 512;

/// Sums `terms(i)` for `i in 0..n` in fixed-size chunks; the chunk sums are
/// added in index order, so the result is independent of the thread count.
fn chunked_sum(n: usize, term: impl Fn(usize) -> f64 + Sync) -> f64 {
    let chunks: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(n)).map(&term).sum())
        .collect();
    chunks.iter().sum()
}

#[derive(Clone, Copy, Debug)]
struct BondTerm {
    i: usize,
    j: usize,
    mu: f64,
    d: f64,
}

#[derive(Clone, Copy, Debug)]
struct VolumeTerm {
    v: [usize; 3],
    mu: f64,
    /// `1 / (ε² ν)`.
    scale: f64,
}

/// Energy of one mesh with cached measures, ready for repeated evaluation.
#[derive(Clone, Debug)]
pub struct EnergyModel {
    n_vertices: usize,
    bonds: Vec<BondTerm>,
    vols: Vec<VolumeTerm>,
    pub laws: Laws,
}

impl EnergyModel {
    pub fn new(tri: &Triangulation, measures: &TriangleMeasures, laws: Laws) -> Result<Self, EnergyError> {
        if measures.mu.len() != tri.triangles.len()
            || measures.nu.len() != tri.triangles.len()
            || measures.edge_distance.len() != tri.edges.len()
            || measures.mu_edge.len() != tri.edges.len()
        {
            return Err(EnergyError::MeasureMismatch);
        }
        let bonds = tri
            .edges
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let d = measures.edge_distance[k];
                if !(d > 0.0) {
                    return Err(EnergyError::DegenerateEdge { edge: k, value: d });
                }
                Ok(BondTerm { i: e.v[0], j: e.v[1], mu: measures.mu_edge[k], d })
            })
            .collect::<Result<_, _>>()?;
        let eps2 = tri.epsilon * tri.epsilon;
        let vols = tri
            .triangles
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let nu = measures.nu[k];
                if !(nu > 0.0) {
                    return Err(EnergyError::InvalidMeasures { triangle: k, value: nu });
                }
                Ok(VolumeTerm { v: t.v, mu: measures.mu[k], scale: 1.0 / (eps2 * nu) })
            })
            .collect::<Result<_, _>>()?;
        Ok(EnergyModel { n_vertices: tri.n_vertices(), bonds, vols, laws })
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    fn check(&self, f: &[Vec2]) -> Result<(), EnergyError> {
        if f.len() != self.n_vertices {
            return Err(EnergyError::LengthMismatch { expected: self.n_vertices, got: f.len() });
        }
        match f.iter().position(|p| !(p.x.is_finite() && p.y.is_finite())) {
            Some(vertex) => Err(EnergyError::NonFinite { vertex }),
            None => Ok(()),
        }
    }

    fn bond_term(&self, b: &BondTerm, f: &[Vec2]) -> f64 {
        b.mu * self.laws.bond.phi((f[b.j] - f[b.i]).norm() / b.d)
    }

    fn volume_ratio(t: &VolumeTerm, f: &[Vec2]) -> f64 {
        let [p, q, r] = t.v;
        wedge(&(f[q] - f[p]), &(f[r] - f[q])) * t.scale
    }

    fn volume_term(&self, t: &VolumeTerm, f: &[Vec2]) -> f64 {
        t.mu * self.laws.volume.psi(Self::volume_ratio(t, f))
    }

    pub fn bond_energy(&self, f: &[Vec2]) -> Result<f64, EnergyError> {
        self.check(f)?;
        Ok(chunked_sum(self.bonds.len(), |k| self.bond_term(&self.bonds[k], f)))
    }

    pub fn volume_energy(&self, f: &[Vec2]) -> Result<f64, EnergyError> {
        self.check(f)?;
        Ok(chunked_sum(self.vols.len(), |k| self.volume_term(&self.vols[k], f)))
    }

    pub fn total(&self, f: &[Vec2]) -> Result<f64, EnergyError> {
        Ok(self.bond_energy(f)? + self.volume_energy(f)?)
    }

    pub fn breakdown(&self, f: &[Vec2], detail: bool) -> Result<EnergyBreakdown, EnergyError> {
        let bond = self.bond_energy(f)?;
        let volume = self.volume_energy(f)?;
        let (per_edge, per_triangle) = if detail {
            (
                Some(self.bonds.par_iter().map(|b| self.bond_term(b, f)).collect()),
                Some(self.vols.par_iter().map(|t| self.volume_term(t, f)).collect()),
            )
        } else {
            (None, None)
        };
        Ok(EnergyBreakdown { bond, volume, total: bond + volume, per_edge, per_triangle })
    }

    /// `∂E/∂f(v)` for every vertex.
    pub fn gradient(&self, f: &[Vec2]) -> Result<Vec<Vec2>, EnergyError> {
        self.check(f)?;
        let mut g = vec![Vec2::zeros(); self.n_vertices];
        self.accumulate(f, &mut g)?;
        Ok(g)
    }

    /// Energy and gradient in one pass, on flat coordinates. Used as the
    /// optimizer objective: states where the gradient is undefined or the
    /// energy is not finite evaluate to `+∞`.
    pub fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let f: Vec<Vec2> = x.chunks_exact(2).map(|c| Vec2::new(c[0], c[1])).collect();
        let mut g = vec![Vec2::zeros(); self.n_vertices];
        let value = match self.accumulate(&f, &mut g) {
            Ok(v) => v,
            Err(_) => return f64::INFINITY,
        };
        for (k, v) in g.iter().enumerate() {
            grad[2 * k] = v.x;
            grad[2 * k + 1] = v.y;
        }
        if value.is_finite() {
            value
        } else {
            f64::INFINITY
        }
    }

    fn accumulate(&self, f: &[Vec2], g: &mut [Vec2]) -> Result<f64, EnergyError> {
        // per-term forces computed in parallel, scattered in index order
        let bond: Vec<(f64, Vec2)> = self
            .bonds
            .par_iter()
            .enumerate()
            .map(|(k, b)| {
                let w = f[b.j] - f[b.i];
                let len = w.norm();
                if len == 0.0 {
                    return Err(EnergyError::ZeroLengthEdge { edge: k });
                }
                let r = len / b.d;
                Ok((b.mu * self.laws.bond.phi(r), w * (b.mu * self.laws.bond.dphi(r) / (len * b.d))))
            })
            .collect::<Result<_, _>>()?;
        let vol: Vec<(f64, [Vec2; 3])> = self
            .vols
            .par_iter()
            .map(|t| {
                let [p, q, r] = t.v;
                let u = f[q] - f[p];
                let v = f[r] - f[q];
                let a = wedge(&u, &v) * t.scale;
                let c = t.mu * self.laws.volume.dpsi(a) * t.scale;
                // ∂(u∧v)/∂u = (v.y, −v.x), ∂(u∧v)/∂v = (−u.y, u.x)
                let du = Vec2::new(v.y, -v.x) * c;
                let dv = Vec2::new(-u.y, u.x) * c;
                (t.mu * self.laws.volume.psi(a), [-du, du - dv, dv])
            })
            .collect();
        let mut bond_sum = 0.0;
        for (chunk, terms) in bond.chunks(CHUNK).zip(self.bonds.chunks(CHUNK)) {
            bond_sum += chunk.iter().map(|t| t.0).sum::<f64>();
            for ((_, w), t) in chunk.iter().zip(terms) {
                g[t.j] += w;
                g[t.i] -= w;
            }
        }
        let mut vol_sum = 0.0;
        for (chunk, terms) in vol.chunks(CHUNK).zip(self.vols.chunks(CHUNK)) {
            vol_sum += chunk.iter().map(|t| t.0).sum::<f64>();
            for ((_, d), t) in chunk.iter().zip(terms) {
                for k in 0..3 {
                    g[t.v[k]] += d[k];
                }
            }
        }
        Ok(bond_sum + vol_sum)
    }
}

/// `E_bond(f)` with the bond law alone.
pub fn bond_energy(
    tri: &Triangulation,
    measures: &TriangleMeasures,
    law: &BondLaw,
    f: &[Vec2],
) -> Result<f64, EnergyError> {
    let laws = Laws { bond: law.clone(), volume: VolumeLaw::default() };
    EnergyModel::new(tri, measures, laws)?.bond_energy(f)
}

/// `E_vol(f)` with the volume law alone.
pub fn volume_energy(
    tri: &Triangulation,
    measures: &TriangleMeasures,
    law: &VolumeLaw,
    f: &[Vec2],
) -> Result<f64, EnergyError> {
    let laws = Laws { bond: BondLaw::hookean(), volume: *law };
    EnergyModel::new(tri, measures, laws)?.volume_energy(f)
}

pub fn total_energy(
    tri: &Triangulation,
    measures: &TriangleMeasures,
    laws: &Laws,
    f: &[Vec2],
) -> Result<EnergyBreakdown, EnergyError> {
    EnergyModel::new(tri, measures, laws.clone())?.breakdown(f, false)
}

pub fn energy_gradient(
    tri: &Triangulation,
    measures: &TriangleMeasures,
    laws: &Laws,
    f: &[Vec2],
) -> Result<Vec<Vec2>, EnergyError> {
    EnergyModel::new(tri, measures, laws.clone())?.gradient(f)
}
