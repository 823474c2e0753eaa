//! Problem configuration: JSON schema, parsing and validation.

use std::path::{Path, PathBuf};

use incompat_core::continuum::{ContinuumDensity, QwOptions, SampleSpec};
use incompat_core::energy::{validate_bond_law, validate_volume_law, BondLaw, GridSpec, Laws, VolumeLaw};
use incompat_core::geometry::{Chart, LatticeFrame, Mat2, MetricField, Vec2};
use incompat_core::minimize::{InitKind, Problem, SolveOptions};
use incompat_core::{parse_field, ScalarFieldExpr};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// A configuration problem, reported with the JSON path of the offending field.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Field { path: String, message: String },
}

impl ConfigError {
    pub fn field(path: impl Into<String>, message: impl ToString) -> Self {
        ConfigError::Field { path: path.into(), message: message.to_string() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub version: u32,
    pub chart: Chart,
    #[serde(default = "LatticeFrame::hexagonal")]
    pub frame: LatticeFrame,
    pub metric: MetricSpec,
    #[serde(default)]
    pub laws: LawsSpec,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub eps_list: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default = "default_init")]
    pub init: InitKind,
    /// When set, replaces the seeds of the solver, the fiber sampler and the QW estimator.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub qw: QwSpec,
    #[serde(default)]
    pub curvature: CurvatureSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
}

fn default_init() -> InitKind {
    InitKind::ChartIdentity
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    // struct variants so that stray fields are rejected
    Euclidean {},
    /// `g = φ² G₀`, with `G₀` the identity unless given (row-major).
    Conformal {
        phi: String,
        #[serde(default)]
        g0: Option<[[f64; 2]; 2]>,
    },
    /// Frame coefficients `g(a, a)`, `g(b, b)`, `g(a, b)`.
    General { g_aa: String, g_bb: String, g_ab: String },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LawsSpec {
    pub bond: BondSpec,
    pub volume: VolumeSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BondSpec {
    Hookean {},
    /// `Φ(r)` as an expression in `x`.
    Custom { phi: String, alpha: f64, c: f64, l: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VolumeSpec {
    Huber { beta: f64, delta: f64 },
    Abs { beta: f64 },
}

impl Default for BondSpec {
    fn default() -> Self {
        BondSpec::Hookean {}
    }
}

impl Default for VolumeSpec {
    fn default() -> Self {
        VolumeSpec::Huber { beta: 1.0, delta: 1e-3 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QwSpec {
    /// Chart point of the fibers; the chart centre when absent.
    pub point: Option<[f64; 2]>,
    pub level: usize,
    /// Values below `−tol` or above `W + tol` are flagged.
    pub tol: f64,
    pub samples: SampleSpec,
    pub options: QwOptions,
}

impl Default for QwSpec {
    fn default() -> Self {
        QwSpec { point: None, level: 3, tol: 1e-9, samples: SampleSpec::default(), options: QwOptions::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvatureSpec {
    /// Cell-centred points per side.
    pub grid: usize,
}

impl Default for CurvatureSpec {
    fn default() -> Self {
        CurvatureSpec { grid: 32 }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Report directory, relative to the config file; `--out` overrides it.
    pub dir: Option<PathBuf>,
}

/// Command-line overrides applied after parsing.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub eps: Option<Vec<f64>>,
}

/// A validated configuration with its expressions compiled.
pub struct Resolved {
    pub config: ProblemConfig,
    pub problem: Problem,
    pub base_dir: PathBuf,
}

impl Resolved {
    pub fn density(&self) -> ContinuumDensity {
        ContinuumDensity::new(self.problem.g.clone(), self.problem.laws.clone())
    }

    /// The single ε for `mesh` and `minimize`.
    pub fn epsilon(&self) -> Result<f64, ConfigError> {
        match (&self.config.epsilon, &self.config.eps_list) {
            (Some(e), _) => Ok(*e),
            (None, Some(list)) if list.len() == 1 => Ok(list[0]),
            (None, Some(_)) => Err(ConfigError::field("epsilon", "this command takes a single epsilon")),
            (None, None) => Err(ConfigError::field("epsilon", "missing; set epsilon or pass --eps")),
        }
    }

    pub fn eps_list(&self) -> Result<Vec<f64>, ConfigError> {
        let list = self
            .config
            .eps_list
            .clone()
            .ok_or_else(|| ConfigError::field("eps_list", "missing; set eps_list or pass --eps"))?;
        if list.len() < 3 {
            return Err(ConfigError::field("eps_list", "a sweep needs at least three values"));
        }
        if list.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(ConfigError::field("eps_list", "values must be strictly decreasing"));
        }
        Ok(list)
    }

    pub fn qw_point(&self) -> Vec2 {
        match self.config.qw.point {
            Some(p) => Vec2::new(p[0], p[1]),
            None => self.config.chart.center(),
        }
    }
}

/// Reads and validates a configuration file.
pub fn load(path: &Path, overrides: &Overrides) -> Result<Resolved, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let config = parse(&text)?;
    resolve(config, overrides, base_dir)
}

/// Parses JSON text, reporting the path of the first offending field.
pub fn parse(text: &str) -> Result<ProblemConfig, ConfigError> {
    // the version is checked first so that old files get a clear message
    let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::field("(root)", e))?;
    match raw.get("version") {
        None => return Err(ConfigError::field("version", "missing schema version")),
        Some(v) if v.as_u64() != Some(SCHEMA_VERSION as u64) => {
            return Err(ConfigError::field("version", format!("unsupported version {v}; expected {SCHEMA_VERSION}")))
        }
        Some(_) => {}
    }
    serde_path_to_error::deserialize(raw).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::field(if path == "." { "(root)".into() } else { path }, e.into_inner())
    })
}

fn expr(path: &str, src: &str) -> Result<ScalarFieldExpr, ConfigError> {
    parse_field(src).map_err(|e| ConfigError::field(path, format!("{e} in `{src}`")))
}

fn mat(m: &[[f64; 2]; 2]) -> Mat2 {
    Mat2::new(m[0][0], m[0][1], m[1][0], m[1][1])
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::field(path, format!("must be positive and finite, got {v}")))
    }
}

/// Applies overrides, compiles expressions and checks every invariant.
pub fn resolve(mut config: ProblemConfig, overrides: &Overrides, base_dir: PathBuf) -> Result<Resolved, ConfigError> {
    if let Some(s) = overrides.seed {
        config.seed = Some(s);
    }
    if let Some(s) = config.seed {
        config.solver.seed = s;
        config.qw.samples.seed = s;
        config.qw.options.seed = s;
    }
    if let Some(eps) = &overrides.eps {
        if eps.len() == 1 {
            config.epsilon = Some(eps[0]);
            config.eps_list = None;
        } else {
            config.epsilon = None;
            config.eps_list = Some(eps.clone());
        }
    }

    config.chart.validate().map_err(|e| ConfigError::field("chart", e))?;
    let (chart, frame) = (config.chart, config.frame);
    let g = match &config.metric {
        MetricSpec::Euclidean {} => MetricField::euclidean(chart, frame),
        MetricSpec::Conformal { phi, g0 } => {
            let phi = expr("metric.phi", phi)?;
            match g0 {
                None => MetricField::conformal(chart, frame, phi),
                Some(m) => MetricField::conformal_with_base(chart, frame, phi, mat(m))
                    .map_err(|e| ConfigError::field("metric.g0", e))?,
            }
        }
        MetricSpec::General { g_aa, g_bb, g_ab } => MetricField::general(
            chart,
            frame,
            expr("metric.g_aa", g_aa)?,
            expr("metric.g_bb", g_bb)?,
            expr("metric.g_ab", g_ab)?,
        )
        .map_err(|e| ConfigError::field("metric", e))?,
    };
    g.check_spd_grid(64).map_err(|e| ConfigError::field("metric", e))?;

    let bond = match &config.laws.bond {
        BondSpec::Hookean {} => BondLaw::hookean(),
        BondSpec::Custom { phi, alpha, c, l } => {
            for (name, v) in [("alpha", alpha), ("c", c), ("l", l)] {
                positive(&format!("laws.bond.{name}"), *v)?;
            }
            let law = BondLaw::custom(expr("laws.bond.phi", phi)?, *alpha, *c, *l);
            let report = validate_bond_law(&law, &GridSpec::default());
            if !report.ok() {
                let v = &report.violations[0];
                return Err(ConfigError::field(
                    "laws.bond",
                    format!(
                        "{} sample(s) violate the declared constants; first: {:?} at {:?} ({} vs {})",
                        report.violation_count, v.condition, v.at, v.lhs, v.rhs
                    ),
                ));
            }
            law
        }
    };
    let volume = match config.laws.volume {
        VolumeSpec::Huber { beta, delta } => {
            positive("laws.volume.beta", beta)?;
            positive("laws.volume.delta", delta)?;
            VolumeLaw::huber(beta, delta)
        }
        VolumeSpec::Abs { beta } => {
            positive("laws.volume.beta", beta)?;
            VolumeLaw::abs(beta)
        }
    };
    let report = validate_volume_law(&volume, &GridSpec::default());
    if !report.ok() {
        return Err(ConfigError::field("laws.volume", "declared constants are violated"));
    }

    if let Some(e) = config.epsilon {
        positive("epsilon", e)?;
    }
    if let Some(list) = &config.eps_list {
        for (k, e) in list.iter().enumerate() {
            positive(&format!("eps_list[{k}]"), *e)?;
        }
    }
    config.solver.validate().map_err(|e| ConfigError::field("solver", e))?;
    if config.qw.level == 0 {
        return Err(ConfigError::field("qw.level", "must be at least 1"));
    }
    if !(config.qw.tol >= 0.0) {
        return Err(ConfigError::field("qw.tol", "must be non-negative"));
    }
    if let Some(p) = config.qw.point {
        if !chart.contains(&Vec2::new(p[0], p[1]), 0.0) {
            return Err(ConfigError::field("qw.point", "outside the chart"));
        }
    }
    let s = &config.qw.samples;
    if !(0.0..=1.0).contains(&s.rotation_fraction) {
        return Err(ConfigError::field("qw.samples.rotation_fraction", "must lie in [0, 1]"));
    }
    positive("qw.samples.entry_range", s.entry_range)?;
    if config.curvature.grid == 0 {
        return Err(ConfigError::field("curvature.grid", "must be at least 1"));
    }

    let mut problem = Problem::new(g, Laws { bond, volume });
    problem.init = config.init.clone();
    Ok(Resolved { config, problem, base_dir })
}
