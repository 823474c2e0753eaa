//! The subcommands. Each returns whether its results carry a warning.

use std::fs;
use std::path::{Path, PathBuf};

use incompat_core::continuum::rigidity_lower_check;
use incompat_core::geometry::Vec2;
use incompat_core::lbfgs::Termination;
use incompat_core::minimize::{epsilon_sweep, initial_configuration, minimize_config, SolveDiagnostics, SolveOptions};
use incompat_core::triangulation::coverage_defect;
use incompat_core::validate::{parse_selector, run_suites, Mutation, ValidateOptions};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, Resolved};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Run(String),
    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },
}

impl CliError {
    fn run(e: impl ToString) -> Self {
        CliError::Run(e.to_string())
    }
}

/// `Ok(true)` when the command finished but flagged its results.
pub type Outcome = Result<bool, CliError>;

pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn new(dir: PathBuf) -> Self {
        Output { dir }
    }

    /// Creates the directory on first use, so failed commands leave nothing behind.
    fn path(&self, name: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.dir).map_err(|e| write_err(&self.dir, e))?;
        Ok(self.dir.join(name))
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name)?;
        let mut text = serde_json::to_string_pretty(value).map_err(|e| write_err(&path, e))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| write_err(&path, e))
    }

    pub fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let path = self.path(name)?;
        let mut w = csv::Writer::from_path(&path).map_err(|e| write_err(&path, e))?;
        for r in rows {
            w.serialize(r).map_err(|e| write_err(&path, e))?;
        }
        w.flush().map_err(|e| write_err(&path, e))
    }

    fn records(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let path = self.path(name)?;
        let mut w = csv::Writer::from_path(&path).map_err(|e| write_err(&path, e))?;
        w.write_record(header).map_err(|e| write_err(&path, e))?;
        for r in rows {
            w.write_record(r).map_err(|e| write_err(&path, e))?;
        }
        w.flush().map_err(|e| write_err(&path, e))
    }
}

/// Shortest round-trip form, in exponent notation for very small or large values.
fn num(v: &f64) -> String {
    format!("{v:?}")
}

fn write_err(path: &Path, e: impl ToString) -> CliError {
    CliError::Write { path: path.to_path_buf(), message: e.to_string() }
}

#[derive(Serialize)]
struct MeshSummary {
    epsilon: f64,
    n_vertices: usize,
    n_edges: usize,
    n_triangles: usize,
    n_boundary: usize,
    chart_area: f64,
    /// g-volume of the chart rectangle.
    volume: f64,
    covered: f64,
    defect: f64,
    defect_ratio: f64,
    distance_warnings: usize,
}

pub fn mesh(cfg: &Resolved, out: &Output) -> Outcome {
    let eps = cfg.epsilon()?;
    let (tri, m) = cfg.problem.mesh(eps).map_err(CliError::run)?;
    let defect = coverage_defect(&tri, &cfg.problem.g, &m.mu).map_err(CliError::run)?;
    let covered: f64 = m.mu.iter().sum();
    let volume = covered + defect;
    let summary = MeshSummary {
        epsilon: eps,
        n_vertices: tri.n_vertices(),
        n_edges: tri.edges.len(),
        n_triangles: tri.triangles.len(),
        n_boundary: tri.boundary.iter().filter(|b| **b).count(),
        chart_area: tri.chart_area(),
        volume,
        covered,
        defect,
        defect_ratio: defect / volume,
        distance_warnings: m.distance_warnings,
    };
    out.json("mesh.json", &tri)?;
    out.json("measures.json", &m)?;
    out.json("mesh_summary.json", &summary)?;
    println!(
        "epsilon {eps}: {} vertices, {} edges, {} triangles, coverage defect {:.3e} ({:.2}% of the volume)",
        summary.n_vertices,
        summary.n_edges,
        summary.n_triangles,
        defect,
        100.0 * summary.defect_ratio
    );
    Ok(m.distance_warnings > 0)
}

#[derive(Serialize)]
struct MinimizeReport {
    epsilon: f64,
    n_vertices: usize,
    min_energy: f64,
    bond: f64,
    volume: f64,
    distance_warnings: usize,
    options: SolveOptions,
    diagnostics: SolveDiagnostics,
}

pub fn minimize(cfg: &Resolved, out: &Output) -> Outcome {
    let eps = cfg.epsilon()?;
    let p = &cfg.problem;
    let (tri, m) = p.mesh(eps).map_err(CliError::run)?;
    let init = initial_configuration(&tri, &p.init).map_err(CliError::run)?;
    let sol = minimize_config(&tri, &m, &p.laws, &init, &cfg.config.solver).map_err(CliError::run)?;
    let warn = sol.diagnostics.warning() || m.distance_warnings > 0;
    let report = MinimizeReport {
        epsilon: eps,
        n_vertices: tri.n_vertices(),
        min_energy: sol.energy.total,
        bond: sol.energy.bond,
        volume: sol.energy.volume,
        distance_warnings: m.distance_warnings,
        options: cfg.config.solver.clone(),
        diagnostics: sol.diagnostics.clone(),
    };
    out.json("minimize.json", &report)?;
    out.json("configuration.json", &sol.config)?;
    println!(
        "epsilon {eps}: min energy {:.6e} (bond {:.6e}, volume {:.6e}), {:?} after {} iterations",
        report.min_energy, report.bond, report.volume, sol.diagnostics.termination, sol.diagnostics.iterations
    );
    if warn {
        eprintln!("warning: the solver did not converge or a distance computation hit its cap");
    }
    Ok(warn)
}

#[derive(Serialize)]
struct SweepRow {
    epsilon: f64,
    n_vertices: usize,
    min_energy: f64,
    bond: f64,
    volume: f64,
    grad_norm: f64,
    iterations: usize,
    termination: Termination,
    defect: f64,
    warm_start_energy: Option<f64>,
    distance_warnings: usize,
}

#[derive(Serialize)]
struct TimingRow {
    epsilon: f64,
    seconds: f64,
}

#[derive(Serialize)]
struct SweepJson<'a> {
    entries: &'a [SweepRow],
    relative_changes: &'a [f64],
    options: &'a SolveOptions,
}

pub fn sweep(cfg: &Resolved, out: &Output) -> Outcome {
    let eps = cfg.eps_list()?;
    let rep = epsilon_sweep(&cfg.problem, &eps, &cfg.config.solver).map_err(CliError::run)?;
    let rows: Vec<SweepRow> = rep
        .entries
        .iter()
        .map(|e| SweepRow {
            epsilon: e.epsilon,
            n_vertices: e.n_vertices,
            min_energy: e.min_energy,
            bond: e.bond,
            volume: e.volume,
            grad_norm: e.grad_norm,
            iterations: e.iterations,
            termination: e.termination,
            defect: e.defect,
            warm_start_energy: e.warm_start_energy,
            distance_warnings: e.distance_warnings,
        })
        .collect();
    // wall-clock times go to their own file so the reports stay byte-identical
    let timings: Vec<TimingRow> =
        rep.entries.iter().map(|e| TimingRow { epsilon: e.epsilon, seconds: e.seconds }).collect();
    out.csv("sweep.csv", &rows)?;
    out.csv("timings.csv", &timings)?;
    out.json("sweep.json", &SweepJson { entries: &rows, relative_changes: &rep.relative_changes, options: &rep.options })?;
    for r in &rows {
        println!("epsilon {}: min energy {:.6e}, {:?}", r.epsilon, r.min_energy, r.termination);
    }
    let warn = rep.warnings() > 0 || rows.iter().any(|r| r.distance_warnings > 0);
    if warn {
        eprintln!("warning: {} solve(s) did not converge", rep.warnings());
    }
    Ok(warn)
}

#[derive(Serialize)]
struct QwSummary {
    point: [f64; 2],
    level: usize,
    samples: usize,
    tol: f64,
    sandwich_violations: usize,
    solver_warnings: usize,
    min_ratio: Vec<f64>,
    near_zero: usize,
    min_dist2: f64,
    zero_tol: f64,
}

pub fn qw(cfg: &Resolved, out: &Output) -> Outcome {
    let spec = &cfg.config.qw;
    let p: Vec2 = cfg.qw_point();
    let rep = rigidity_lower_check(&cfg.density(), &p, &spec.samples, spec.level, &spec.options).map_err(CliError::run)?;
    let mut header: Vec<String> = ["a11", "a12", "a21", "a22", "w", "qw_est", "dist2"].map(String::from).to_vec();
    header.extend((1..=spec.level).map(|l| format!("qw_level{l}")));
    header.extend(["warnings", "flag"].map(String::from));
    let mut violations = 0;
    let rows: Vec<Vec<String>> = rep
        .samples
        .iter()
        .map(|s| {
            let bad = !(s.qw >= -spec.tol && s.qw <= s.w + spec.tol);
            violations += bad as usize;
            let mut r: Vec<String> = s.a.iter().map(num).collect();
            r.extend([s.w, s.qw, s.dist2].iter().map(num));
            r.extend(s.per_level.iter().map(num));
            r.push(s.warnings.to_string());
            r.push(if bad { "sandwich" } else { "" }.to_string());
            r
        })
        .collect();
    let warnings: usize = rep.samples.iter().map(|s| s.warnings).sum();
    let summary = QwSummary {
        point: [p.x, p.y],
        level: spec.level,
        samples: rep.samples.len(),
        tol: spec.tol,
        sandwich_violations: violations,
        solver_warnings: warnings,
        min_ratio: rep.min_ratio.clone(),
        near_zero: rep.near_zero,
        min_dist2: rep.min_dist2,
        zero_tol: rep.zero_tol,
    };
    out.records("qw.csv", &header, &rows)?;
    out.json("qw_summary.json", &summary)?;
    println!(
        "{} fibers at ({}, {}), level {}: {violations} sandwich violation(s), {warnings} solver warning(s)",
        summary.samples, p.x, p.y, spec.level
    );
    Ok(violations > 0 || warnings > 0)
}

#[derive(Serialize)]
struct CurvatureRow {
    x: f64,
    y: f64,
    k: f64,
}

#[derive(Serialize)]
struct CurvatureSummary {
    grid: usize,
    min: f64,
    max: f64,
    max_abs: f64,
    /// Midpoint-rule `∫ K dVol_g` over the chart.
    total: f64,
}

pub fn curvature(cfg: &Resolved, out: &Output) -> Outcome {
    let g = &cfg.problem.g;
    let c = g.chart();
    let n = cfg.config.curvature.grid;
    let cell = c.width() * c.height() / (n * n) as f64;
    let mut rows = Vec::with_capacity(n * n);
    let mut total = 0.0;
    for j in 0..n {
        for i in 0..n {
            let x = c.x0 + (i as f64 + 0.5) / n as f64 * c.width();
            let y = c.y0 + (j as f64 + 0.5) / n as f64 * c.height();
            let p = Vec2::new(x, y);
            let k = g.gauss_curvature(&p).map_err(CliError::run)?;
            total += k * g.sqrt_det(&p).map_err(CliError::run)? * cell;
            rows.push(CurvatureRow { x, y, k });
        }
    }
    let min = rows.iter().map(|r| r.k).fold(f64::INFINITY, f64::min);
    let max = rows.iter().map(|r| r.k).fold(f64::NEG_INFINITY, f64::max);
    let summary = CurvatureSummary { grid: n, min, max, max_abs: min.abs().max(max.abs()), total };
    out.csv("curvature.csv", &rows)?;
    out.json("curvature_summary.json", &summary)?;
    println!("Gauss curvature on a {n}x{n} grid: min {min:.6e}, max {max:.6e}, integral {total:.6e}");
    Ok(false)
}

pub struct ValidateArgs {
    pub selector: String,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub mutate: Option<String>,
}

pub fn validate(args: &ValidateArgs, out: &Output) -> Outcome {
    let suites = parse_selector(&args.selector).map_err(|e| ConfigError::field("suite", e))?;
    let mut opts = ValidateOptions::default();
    if let Some(t) = args.trials {
        if t == 0 {
            return Err(ConfigError::field("trials", "must be at least 1").into());
        }
        opts.trials = t;
    }
    if let Some(s) = args.seed {
        opts.seed = s;
    }
    if let Some(m) = &args.mutate {
        opts.mutation = Some(m.parse::<Mutation>().map_err(|e| ConfigError::field("mutate", e))?);
    }
    let report = run_suites(&suites, &opts);
    out.json("validate.json", &report)?;
    for s in &report.suites {
        let alias = s.suite.alias().map(|a| format!(" ({a})")).unwrap_or_default();
        println!(
            "{} {}{alias}: {} violation(s) in {} trial(s)",
            if s.passed { "PASS" } else { "FAIL" },
            s.suite,
            s.violations,
            s.trials
        );
        if let (false, Some(n)) = (s.passed, &s.note) {
            println!("  {n}");
        }
    }
    let failures = report.failures();
    println!("{} of {} suites passed", report.suites.len() - failures.len(), report.suites.len());
    Ok(!failures.is_empty())
}
