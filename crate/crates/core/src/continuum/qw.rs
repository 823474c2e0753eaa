//! Upper estimate of `QW(A)` by minimizing the mean of `W(A + dφ)` over
//! piecewise-affine `φ` on a triangulated unit disc, vanishing on its boundary.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ContinuumDensity, ContinuumError, FrozenDensity};
use crate::geometry::{dist2_to_so, inv_sqrtm_spd, sqrtm_spd, wedge, FiberMap, Mat2, Vec2};
use crate::lbfgs::{self, LbfgsOptions};

/// Triangulated unit disc. Level 1 has 24 triangles (a centre, a ring of 6
/// nodes at radius 1/2 and 12 at radius 1); each level splits every
/// triangle into four. New boundary nodes stay on the polygon, so the
/// domain and the finite-element spaces are nested.
#[derive(Clone, Debug)]
pub struct DiscMesh {
    pub level: usize,
    pub vertices: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
    /// For each vertex created by refinement, its two parents.
    pub parents: Vec<Option<[usize; 2]>>,
}

impl DiscMesh {
    pub fn new(level: usize) -> Result<Self, ContinuumError> {
        if level == 0 {
            return Err(ContinuumError::BadLevel);
        }
        let mut m = Self::level_one();
        for _ in 1..level {
            m = m.refine();
        }
        Ok(m)
    }

    fn level_one() -> Self {
        let mut vertices = vec![Vec2::zeros()];
        for k in 0..6 {
            let t = k as f64 * PI / 3.0;
            vertices.push(Vec2::new(t.cos(), t.sin()) * 0.5);
        }
        for k in 0..12 {
            let t = k as f64 * PI / 6.0;
            vertices.push(Vec2::new(t.cos(), t.sin()));
        }
        let inner = |k: usize| 1 + k % 6;
        let outer = |k: usize| 7 + k % 12;
        let mut triangles = Vec::with_capacity(24);
        for k in 0..6 {
            triangles.push([0, inner(k), inner(k + 1)]);
            triangles.push([inner(k), outer(2 * k), outer(2 * k + 1)]);
            triangles.push([inner(k), outer(2 * k + 1), inner(k + 1)]);
            triangles.push([inner(k + 1), outer(2 * k + 1), outer(2 * k + 2)]);
        }
        let boundary = (0..vertices.len()).map(|v| v >= 7).collect();
        let parents = vec![None; vertices.len()];
        DiscMesh { level: 1, vertices, triangles, boundary, parents }
    }

    fn refine(&self) -> Self {
        let mut vertices = self.vertices.clone();
        let mut boundary = self.boundary.clone();
        let mut parents = vec![None; vertices.len()];
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for t in &self.triangles {
            let mut m = [0; 3];
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                m[k] = *mid.entry(key).or_insert_with(|| {
                    vertices.push((self.vertices[a] + self.vertices[b]) * 0.5);
                    boundary.push(count[&key] == 1);
                    parents.push(Some([a, b]));
                    vertices.len() - 1
                });
            }
            triangles.push([t[0], m[0], m[2]]);
            triangles.push([m[0], t[1], m[1]]);
            triangles.push([m[2], m[1], t[2]]);
            triangles.push([m[0], m[1], m[2]]);
        }
        DiscMesh { level: self.level + 1, vertices, triangles, boundary, parents }
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| self.tri_area(t)).sum()
    }

    fn tri_area(&self, t: &[usize; 3]) -> f64 {
        let v = t.map(|k| self.vertices[k]);
        0.5 * wedge(&(v[1] - v[0]), &(v[2] - v[0]))
    }

    /// Prolongs nodal values from the parent level (midpoints get the mean).
    fn prolong(&self, coarse: &[Vec2]) -> Vec<Vec2> {
        let mut out = coarse.to_vec();
        for p in &self.parents[coarse.len()..] {
            let [a, b] = p.expect("refined vertex has parents");
            out.push((out[a] + out[b]) * 0.5);
        }
        out
    }
}

/// Per-level data of the discrete minimization problem.
struct DiscProblem {
    mesh: DiscMesh,
    /// Area weight `|T| / |D|` and barycentric gradients per triangle.
    weight: Vec<f64>,
    grads: Vec<[Vec2; 3]>,
    free: Vec<usize>,
    slot: Vec<Option<usize>>,
}

impl DiscProblem {
    fn new(mesh: DiscMesh) -> Self {
        let total = mesh.area();
        let mut weight = Vec::with_capacity(mesh.triangles.len());
        let mut grads = Vec::with_capacity(mesh.triangles.len());
        for t in &mesh.triangles {
            let v = t.map(|k| mesh.vertices[k]);
            let twice = wedge(&(v[1] - v[0]), &(v[2] - v[0]));
            // ∇λ_k = J (v_{k+2} − v_{k+1}) / (2|T|), J the rotation by −π/2
            let g = [0, 1, 2].map(|k| {
                let e = v[(k + 2) % 3] - v[(k + 1) % 3];
                Vec2::new(e.y, -e.x) / twice
            });
            weight.push(0.5 * twice / total);
            grads.push(g);
        }
        let free: Vec<usize> = (0..mesh.vertices.len()).filter(|&v| !mesh.boundary[v]).collect();
        let mut slot = vec![None; mesh.vertices.len()];
        for (k, &v) in free.iter().enumerate() {
            slot[v] = Some(k);
        }
        DiscProblem { mesh, weight, grads, free, slot }
    }

    fn nodal(&self, x: &[f64]) -> Vec<Vec2> {
        let mut phi = vec![Vec2::zeros(); self.mesh.vertices.len()];
        for (k, &v) in self.free.iter().enumerate() {
            phi[v] = Vec2::new(x[2 * k], x[2 * k + 1]);
        }
        phi
    }

    fn unknowns(&self, phi: &[Vec2]) -> Vec<f64> {
        self.free.iter().flat_map(|&v| [phi[v].x, phi[v].y]).collect()
    }

    fn objective(&self, w: &FrozenDensity, a: &Mat2, x: &[f64], grad: &mut [f64]) -> f64 {
        let phi = self.nodal(x);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for (t, tri) in self.mesh.triangles.iter().enumerate() {
            let g = &self.grads[t];
            let mut dphi = Mat2::zeros();
            for k in 0..3 {
                dphi += phi[tri[k]] * g[k].transpose();
            }
            let (val, dw) = w.value_and_gradient(&(a + dphi));
            total += self.weight[t] * val;
            for k in 0..3 {
                if let Some(s) = self.slot[tri[k]] {
                    let d = dw * g[k] * self.weight[t];
                    grad[2 * s] += d.x;
                    grad[2 * s + 1] += d.y;
                }
            }
        }
        total
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QwOptions {
    /// Random starts at level 1, in addition to `φ = 0`.
    pub random_starts: usize,
    /// Best distinct level-1 minima refined through all finer levels.
    pub carry: usize,
    pub seed: u64,
    pub lbfgs: LbfgsOptions,
    /// Rotate `A` on the target side so that `A e₁` lies on the positive
    /// x-axis before solving, and round the result to a power-of-two grid
    /// about `2⁻⁴⁰ |A|` apart. `W` is invariant under the rotation, and the
    /// rounding makes `A` and `RA` reach the solver as the same matrix.
    pub canonicalize: bool,
}

impl Default for QwOptions {
    fn default() -> Self {
        QwOptions {
            random_starts: 8,
            carry: 1,
            seed: 0,
            lbfgs: LbfgsOptions { max_iters: 20_000, grad_tol: 1e-10, rel_tol: 1e-15, ..Default::default() },
            canonicalize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QwEstimate {
    /// Best value at the finest level.
    pub value: f64,
    /// `W(A)`, the `φ = 0` value.
    pub w: f64,
    /// Best value at each level `1..=level`.
    pub per_level: Vec<f64>,
    /// Runs that stopped without meeting a convergence test.
    pub warnings: usize,
}

fn canonical_rotation(a: &Mat2) -> Mat2 {
    let col = a.column(0);
    let n = col.norm();
    if n == 0.0 {
        return Mat2::identity();
    }
    let (c, s) = (col[0] / n, col[1] / n);
    Mat2::new(c, s, -s, c)
}

fn quantize(m: &Mat2) -> Mat2 {
    let n = m.norm();
    if !(n > 0.0 && n.is_finite()) {
        return *m;
    }
    let q = 2f64.powi(n.log2().floor() as i32 - 40);
    m.map(|v| (v / q).round() * q)
}

/// Upper estimate of `QW(A)` at levels `1..=level`, warm-starting each level
/// from the prolonged optimum of the previous one.
pub fn qw_upper_estimate(
    a: &FiberMap,
    density: &ContinuumDensity,
    level: usize,
    opts: &QwOptions,
) -> Result<QwEstimate, ContinuumError> {
    let frozen = density.at(&a.p)?;
    let m = if opts.canonicalize { quantize(&(canonical_rotation(&a.a) * a.a)) } else { a.a };
    let w = frozen.value(&m);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let scale = m.norm();

    let mut per_level = Vec::with_capacity(level);
    let mut warnings = 0;
    // nodal fields of the candidates carried to the next level
    let mut carried: Vec<Vec<Vec2>> = Vec::new();
    let mut mesh = DiscMesh::new(1)?;
    for l in 1..=level {
        if l > 1 {
            mesh = mesh.refine();
        }
        let problem = DiscProblem::new(mesh.clone());
        let n = 2 * problem.free.len();
        let starts: Vec<Vec<f64>> = if l == 1 {
            let mut v = vec![vec![0.0; n]];
            for _ in 0..opts.random_starts {
                let amp = 0.25 * scale.max(1e-3) * rng.gen_range(0.1..1.0);
                v.push((0..n).map(|_| amp * rng.gen_range(-1.0..1.0)).collect());
            }
            v
        } else {
            carried.iter().map(|c| problem.unknowns(&problem.mesh.prolong(c))).collect()
        };
        let mut results: Vec<(f64, Vec<f64>)> = Vec::with_capacity(starts.len());
        for x0 in starts {
            let r = lbfgs::minimize(|x, g| problem.objective(&frozen, &m, x, g), x0, &opts.lbfgs);
            if !r.termination.converged() {
                warnings += 1;
            }
            if r.f.is_finite() {
                results.push((r.f, r.x));
            }
        }
        if results.is_empty() {
            results.push((w, vec![0.0; n]));
        }
        results.sort_by(|a, b| a.0.total_cmp(&b.0));
        per_level.push(results[0].0);
        // keep distinct minima only; equal values from different starts are one candidate
        let mut keep: Vec<(f64, Vec<f64>)> = Vec::new();
        for r in results {
            let dup = keep.iter().any(|k| (k.0 - r.0).abs() <= 1e-12 * (1.0 + r.0.abs()));
            if !dup && keep.len() < opts.carry.max(1) {
                keep.push(r);
            }
        }
        carried = keep.iter().map(|k| problem.nodal(&k.1)).collect();
    }
    let value = *per_level.last().expect("level >= 1");
    Ok(QwEstimate { value, w, per_level, warnings })
}

/// How to draw fibers for the sandwich and rigidity checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSpec {
    pub count: usize,
    pub seed: u64,
    /// Fraction of samples drawn exactly from `SO(g, e)`.
    pub rotation_fraction: f64,
    /// Entries of the normalised map `A G^{-1/2}` are uniform in `[−r, r]`.
    pub entry_range: f64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        SampleSpec { count: 200, seed: 0, rotation_fraction: 0.2, entry_range: 1.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberSample {
    /// Chart matrix of `A`, row-major.
    pub a: [f64; 4],
    pub w: f64,
    pub qw: f64,
    pub dist2: f64,
    pub per_level: Vec<f64>,
    pub warnings: usize,
}

impl FiberSample {
    pub fn matrix(&self) -> Mat2 {
        Mat2::new(self.a[0], self.a[1], self.a[2], self.a[3])
    }
}

/// Draws fibers at `p`: a fraction from `SO(g, e)`, the rest random.
pub fn sample_fibers(density: &ContinuumDensity, p: &Vec2, spec: &SampleSpec) -> Result<Vec<Mat2>, ContinuumError> {
    let g = density.g.g(p)?;
    let half = sqrtm_spd(&g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_rot = (spec.count as f64 * spec.rotation_fraction).round() as usize;
    let r = spec.entry_range;
    Ok((0..spec.count)
        .map(|k| {
            let b = if k < n_rot {
                let t = rng.gen_range(-PI..PI);
                Mat2::new(t.cos(), -t.sin(), t.sin(), t.cos())
            } else {
                Mat2::from_fn(|_, _| rng.gen_range(-r..r))
            };
            b * half
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidityReport {
    pub level: usize,
    pub samples: Vec<FiberSample>,
    /// `min QW_est / dist²` per level, over samples with `dist² > min_dist2`.
    pub min_ratio: Vec<f64>,
    /// Samples with `dist² > min_dist2` whose estimate is below `zero_tol`.
    pub near_zero: usize,
    pub min_dist2: f64,
    pub zero_tol: f64,
}

/// Runs the estimator on sampled fibers (in parallel, deterministic per sample)
/// and reports the empirical rigidity constant.
pub fn rigidity_lower_check(
    density: &ContinuumDensity,
    p: &Vec2,
    spec: &SampleSpec,
    level: usize,
    opts: &QwOptions,
) -> Result<RigidityReport, ContinuumError> {
    let fibers = sample_fibers(density, p, spec)?;
    let inv_half = inv_sqrtm_spd(&density.g.g(p)?)?;
    let samples: Vec<FiberSample> = fibers
        .par_iter()
        .enumerate()
        .map(|(k, a)| {
            let o = QwOptions { seed: opts.seed.wrapping_add(k as u64), ..opts.clone() };
            let est = qw_upper_estimate(&FiberMap::new(*p, *a), density, level, &o)?;
            Ok(FiberSample {
                a: [a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]],
                w: est.w,
                qw: est.value,
                dist2: dist2_to_so(&(a * inv_half)),
                per_level: est.per_level,
                warnings: est.warnings,
            })
        })
        .collect::<Result<_, ContinuumError>>()?;
    let min_dist2 = 0.1;
    let zero_tol = 1e-6;
    let far: Vec<&FiberSample> = samples.iter().filter(|s| s.dist2 > min_dist2).collect();
    let min_ratio = (0..level)
        .map(|l| far.iter().map(|s| s.per_level[l] / s.dist2).fold(f64::INFINITY, f64::min))
        .collect();
    let near_zero = far.iter().filter(|s| s.qw < zero_tol).count();
    Ok(RigidityReport { level, samples, min_ratio, near_zero, min_dist2, zero_tol })
}
