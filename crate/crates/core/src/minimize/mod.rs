//! Minimization of the discrete energy over configurations, ε-sweeps with
//! warm starts, and recovery-sequence checks against `∫ W(dF)`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::continuum::{
    affine_extend, integral_energy_smooth, ContinuumDensity, ContinuumError, ExprMap,
};
use crate::energy::{DiscreteConfiguration, EnergyBreakdown, EnergyError, EnergyModel, Laws};
use crate::geometry::{GeometryError, Mat2, MetricField, Vec2};
use crate::lbfgs::{self, LbfgsOptions, Termination};
use crate::triangulation::{
    build_lattice_with, compute_measures, coverage_defect, LatticeOptions, MeasureOptions, MeshError, TriangleMeasures,
    Triangulation,
};

#[derive(Debug, Error)]
pub enum MinimizeError {
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Continuum(#[from] ContinuumError),
    #[error("invalid solver options: {0}")]
    Options(String),
    #[error("initial configuration: {0}")]
    Init(String),
    #[error("epsilon list must be strictly decreasing with at least {min} entries")]
    EpsList { min: usize },
    #[error("every start produced a non-finite energy")]
    AllStartsFailed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Absolute gradient tolerance; `None` means `1e-8 × (g-area of the mesh)`.
    pub grad_tol: Option<f64>,
    pub c1: f64,
    pub backtrack: f64,
    pub history: usize,
    pub multi_start: usize,
    pub seed: u64,
    /// Extra starts perturb the initial configuration by uniform noise of
    /// this amplitude times ε.
    pub start_noise: f64,
    /// Accepted steps without a relative decrease above `1e-14` before a
    /// start is reported as stalled at working precision. Zero disables it.
    pub stall_window: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 20_000,
            grad_tol: None,
            c1: 1e-4,
            backtrack: 0.5,
            history: 10,
            multi_start: 4,
            seed: 0,
            start_noise: 0.1,
            stall_window: 20,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), MinimizeError> {
        let bad = |m: &str| Err(MinimizeError::Options(m.into()));
        if self.grad_tol.is_some_and(|t| !(t > 0.0)) {
            return bad("grad_tol must be positive");
        }
        if self.multi_start == 0 {
            return bad("multi_start must be at least 1");
        }
        if !(self.c1 > 0.0 && self.c1 < 1.0) {
            return bad("c1 must lie in (0, 1)");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack must lie in (0, 1)");
        }
        if !(self.start_noise >= 0.0) {
            return bad("start_noise must be non-negative");
        }
        Ok(())
    }

    fn lbfgs(&self, area: f64) -> LbfgsOptions {
        LbfgsOptions {
            max_iters: self.max_iters,
            grad_tol: self.grad_tol.unwrap_or(1e-8 * area),
            rel_tol: 0.0,
            history: self.history,
            c1: self.c1,
            backtrack: self.backtrack,
            max_backtracks: 60,
            stall_window: self.stall_window,
            stall_rtol: 1e-14,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "InitRepr", into = "InitRepr")]
pub enum InitKind {
    ChartIdentity,
    Scaled { factor: f64 },
    Random { amplitude: f64, seed: u64 },
    Custom { values: Vec<[f64; 2]> },
}

// serde ignores unknown fields next to the tag of a unit variant
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum InitRepr {
    ChartIdentity {},
    Scaled { factor: f64 },
    Random { amplitude: f64, seed: u64 },
    Custom { values: Vec<[f64; 2]> },
}

impl From<InitRepr> for InitKind {
    fn from(r: InitRepr) -> Self {
        match r {
            InitRepr::ChartIdentity {} => InitKind::ChartIdentity,
            InitRepr::Scaled { factor } => InitKind::Scaled { factor },
            InitRepr::Random { amplitude, seed } => InitKind::Random { amplitude, seed },
            InitRepr::Custom { values } => InitKind::Custom { values },
        }
    }
}

impl From<InitKind> for InitRepr {
    fn from(k: InitKind) -> Self {
        match k {
            InitKind::ChartIdentity => InitRepr::ChartIdentity {},
            InitKind::Scaled { factor } => InitRepr::Scaled { factor },
            InitKind::Random { amplitude, seed } => InitRepr::Random { amplitude, seed },
            InitKind::Custom { values } => InitRepr::Custom { values },
        }
    }
}

/// Starting configuration of the given kind.
pub fn initial_configuration(tri: &Triangulation, kind: &InitKind) -> Result<DiscreteConfiguration, MinimizeError> {
    match kind {
        InitKind::ChartIdentity => Ok(DiscreteConfiguration::identity(tri)),
        InitKind::Scaled { factor } => Ok(DiscreteConfiguration::from_fn(tri, |p| p * *factor)),
        InitKind::Random { amplitude, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let a = *amplitude;
            Ok(DiscreteConfiguration::from_fn(tri, |p| {
                p + Vec2::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)) * a
            }))
        }
        InitKind::Custom { values } => {
            if values.len() != tri.n_vertices() {
                return Err(MinimizeError::Init(format!(
                    "custom configuration has {} values, mesh has {} vertices",
                    values.len(),
                    tri.n_vertices()
                )));
            }
            Ok(DiscreteConfiguration::from(values.clone()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub grad_tol: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    pub best_start: usize,
    pub starts: Vec<StartSummary>,
}

impl SolveDiagnostics {
    /// The best start ended without meeting the gradient tolerance.
    pub fn warning(&self) -> bool {
        !self.termination.converged()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub config: DiscreteConfiguration,
    pub energy: EnergyBreakdown,
    pub diagnostics: SolveDiagnostics,
}

/// Subtracts the vertex mean.
pub fn gauge_fix(f: &mut DiscreteConfiguration) {
    if f.is_empty() {
        return;
    }
    let mean = f.iter().sum::<Vec2>() / f.len() as f64;
    for p in f.0.iter_mut() {
        *p -= mean;
    }
}

/// Minimizes `E_ε` from `init` and from `multi_start − 1` perturbed copies;
/// returns the lowest-energy result with its mean removed.
pub fn minimize_config(
    tri: &Triangulation,
    measures: &TriangleMeasures,
    laws: &Laws,
    init: &DiscreteConfiguration,
    opts: &SolveOptions,
) -> Result<Solution, MinimizeError> {
    opts.validate()?;
    let model = EnergyModel::new(tri, measures, laws.clone())?;
    if init.len() != tri.n_vertices() {
        return Err(EnergyError::LengthMismatch { expected: tri.n_vertices(), got: init.len() }.into());
    }
    let area: f64 = measures.mu.iter().sum();
    let lo = opts.lbfgs(area);
    let x0 = init.to_flat();
    let runs: Vec<lbfgs::LbfgsResult> = (0..opts.multi_start)
        .into_par_iter()
        .map(|k| {
            let mut x = x0.clone();
            if k > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_mul(0x9e37_79b9).wrapping_add(k as u64));
                let amp = opts.start_noise * tri.epsilon;
                for v in x.iter_mut() {
                    *v += amp * rng.gen_range(-1.0..=1.0);
                }
            }
            lbfgs::minimize(|x, g| model.value_and_gradient(x, g), x, &lo)
        })
        .collect();
    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.f.is_finite())
        .min_by(|a, b| a.1.f.total_cmp(&b.1.f))
        .map(|(k, _)| k)
        .ok_or(MinimizeError::AllStartsFailed)?;
    let r = &runs[best];
    let mut config = DiscreteConfiguration::from_flat(&r.x);
    gauge_fix(&mut config);
    let energy = model.breakdown(&config, false)?;
    let diagnostics = SolveDiagnostics {
        grad_tol: lo.grad_tol,
        grad_norm: r.grad_norm,
        iterations: r.iterations,
        evaluations: r.evaluations,
        termination: r.termination,
        best_start: best,
        starts: runs
            .iter()
            .map(|r| StartSummary { energy: r.f, grad_norm: r.grad_norm, iterations: r.iterations, termination: r.termination })
            .collect(),
    };
    Ok(Solution { config, energy, diagnostics })
}

/// Rigid alignment of `f` onto `reference`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Procrustes {
    pub rotation: Mat2,
    pub translation: Vec2,
    /// `max_v |R f(v) + t − reference(v)|`.
    pub max_deviation: f64,
    pub rms: f64,
}

/// Least-squares rotation and translation taking `f` to `reference`.
pub fn procrustes(f: &[Vec2], reference: &[Vec2]) -> Procrustes {
    let n = f.len().max(1) as f64;
    let cf = f.iter().sum::<Vec2>() / n;
    let cr = reference.iter().sum::<Vec2>() / n;
    let (mut dot, mut cross) = (0.0, 0.0);
    for (p, q) in f.iter().zip(reference) {
        let (p, q) = (p - cf, q - cr);
        dot += p.dot(&q);
        cross += p.x * q.y - p.y * q.x;
    }
    let t = cross.atan2(dot);
    let rotation = Mat2::new(t.cos(), -t.sin(), t.sin(), t.cos());
    let translation = cr - rotation * cf;
    let dev: Vec<f64> = f.iter().zip(reference).map(|(p, q)| (rotation * p + translation - q).norm()).collect();
    Procrustes {
        rotation,
        translation,
        max_deviation: dev.iter().copied().fold(0.0, f64::max),
        rms: (dev.iter().map(|d| d * d).sum::<f64>() / n).sqrt(),
    }
}

/// Everything needed to build and solve the problem at any ε.
#[derive(Clone, Debug)]
pub struct Problem {
    pub g: MetricField,
    pub laws: Laws,
    pub measures: MeasureOptions,
    pub lattice: LatticeOptions,
    pub init: InitKind,
}

impl Problem {
    pub fn new(g: MetricField, laws: Laws) -> Self {
        Problem {
            g,
            laws,
            measures: MeasureOptions::default(),
            lattice: LatticeOptions::default(),
            init: InitKind::ChartIdentity,
        }
    }

    pub fn mesh(&self, eps: f64) -> Result<(Triangulation, TriangleMeasures), MinimizeError> {
        let tri = build_lattice_with(self.g.chart(), self.g.frame(), eps, &self.lattice)?;
        let m = compute_measures(&tri, &self.g, &self.measures)?;
        Ok((tri, m))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub n_vertices: usize,
    pub min_energy: f64,
    pub bond: f64,
    pub volume: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub defect: f64,
    pub seconds: f64,
    /// Energy of the warm start, when one was used.
    pub warm_start_energy: Option<f64>,
    pub distance_warnings: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Sorted by decreasing ε.
    pub entries: Vec<SweepEntry>,
    /// `|E_{k+1} − E_k| / |E_k|` between successive entries.
    pub relative_changes: Vec<f64>,
    pub options: SolveOptions,
}

impl SweepReport {
    pub fn warnings(&self) -> usize {
        self.entries.iter().filter(|e| !e.termination.converged()).count()
    }
}

fn check_eps_list(eps: &[f64], min: usize) -> Result<(), MinimizeError> {
    if eps.len() < min || eps.windows(2).any(|w| !(w[1] < w[0])) || eps.iter().any(|e| !(*e > 0.0)) {
        return Err(MinimizeError::EpsList { min });
    }
    Ok(())
}

/// Solves at each ε in turn. Finer meshes start from the coarse minimizer's
/// extension `F_ε` sampled at the new vertices.
pub fn epsilon_sweep(problem: &Problem, eps_list: &[f64], opts: &SolveOptions) -> Result<SweepReport, MinimizeError> {
    check_eps_list(eps_list, 3)?;
    opts.validate()?;
    let mut entries: Vec<SweepEntry> = Vec::with_capacity(eps_list.len());
    let mut previous: Option<(Triangulation, DiscreteConfiguration)> = None;
    for &eps in eps_list {
        let start = Instant::now();
        let (tri, m) = problem.mesh(eps)?;
        let (init, warm) = match &previous {
            Some((coarse, f)) => {
                let field = affine_extend(coarse, f)?;
                let init = DiscreteConfiguration(tri.vertices.iter().map(|v| field.eval(v)).collect::<Result<_, _>>()?);
                let e = EnergyModel::new(&tri, &m, problem.laws.clone())?.total(&init)?;
                (init, Some(e))
            }
            None => (initial_configuration(&tri, &problem.init)?, None),
        };
        let sol = minimize_config(&tri, &m, &problem.laws, &init, opts)?;
        let defect = coverage_defect(&tri, &problem.g, &m.mu)?;
        entries.push(SweepEntry {
            epsilon: eps,
            n_vertices: tri.n_vertices(),
            min_energy: sol.energy.total,
            bond: sol.energy.bond,
            volume: sol.energy.volume,
            grad_norm: sol.diagnostics.grad_norm,
            iterations: sol.diagnostics.iterations,
            termination: sol.diagnostics.termination,
            defect,
            seconds: start.elapsed().as_secs_f64(),
            warm_start_energy: warm,
            distance_warnings: m.distance_warnings,
        });
        previous = Some((tri, sol.config));
    }
    let relative_changes = entries
        .windows(2)
        .map(|w| (w[1].min_energy - w[0].min_energy).abs() / w[0].min_energy.abs())
        .collect();
    Ok(SweepReport { entries, relative_changes, options: opts.clone() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryEntry {
    pub epsilon: f64,
    /// `E_ε` of the map sampled at the lattice vertices.
    pub discrete: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// `∫_M W(dF) dVol_g`.
    pub continuum: f64,
    pub entries: Vec<RecoveryEntry>,
    /// Least-squares slope of `log error` against `log ε`.
    pub order: f64,
}

/// Energies of a smooth map sampled on each lattice, against `∫_M W(dF)`.
pub fn recovery_check(problem: &Problem, map: &ExprMap, eps_list: &[f64]) -> Result<RecoveryReport, MinimizeError> {
    check_eps_list(eps_list, 2)?;
    let density = ContinuumDensity::new(problem.g.clone(), problem.laws.clone());
    let field_err = |p: &Vec2, e: crate::DomainError| {
        ContinuumError::Geometry(GeometryError::Field { x: p.x, y: p.y, source: e })
    };
    let continuum = integral_energy_smooth(&density, |p| map.jacobian(p).map_err(|e| field_err(p, e)), 8, 32)?;
    let mut entries = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let (tri, m) = problem.mesh(eps)?;
        let f = tri.vertices.iter().map(|p| map.value(p).map_err(|e| field_err(p, e))).collect::<Result<Vec<_>, _>>()?;
        let discrete = EnergyModel::new(&tri, &m, problem.laws.clone())?.total(&f)?;
        entries.push(RecoveryEntry { epsilon: eps, discrete, error: (discrete - continuum).abs() });
    }
    let xs: Vec<f64> = entries.iter().map(|e| e.epsilon).collect();
    let ys: Vec<f64> = entries.iter().map(|e| e.error).collect();
    Ok(RecoveryReport { continuum, order: loglog_slope(&xs, &ys), entries })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}
