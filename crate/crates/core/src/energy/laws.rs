use serde::{Deserialize, Serialize};

use crate::field_expr::{derivative, Expr, ScalarFieldExpr, Var};

#[derive(Clone, Debug)]
enum BondKind {
    Hookean,
    Custom { expr: ScalarFieldExpr, deriv: Expr },
}

/// Bond energy `Φ` of the relative elongation `r`, with its declared constants.
#[derive(Clone, Debug)]
pub struct BondLaw {
    kind: BondKind,
    /// Coercivity: `Φ(r) ≥ α (r − 1)²`.
    pub alpha: f64,
    /// Growth: `Φ(r) ≤ C (1 + r²)`.
    pub c: f64,
    /// Lipschitz: `|Φ(r) − Φ(s)| ≤ L (1 + |r| + |s|) |r − s|`.
    pub l: f64,
}

impl BondLaw {
    /// `Φ(r) = (r − 1)²`.
    pub fn hookean() -> Self {
        BondLaw { kind: BondKind::Hookean, alpha: 1.0, c: 1.0, l: 2.0 }
    }

    /// `Φ` given as an expression in `x` (standing for `r`).
    pub fn custom(expr: ScalarFieldExpr, alpha: f64, c: f64, l: f64) -> Self {
        let deriv = derivative(expr.ast(), Var::X);
        BondLaw { kind: BondKind::Custom { expr, deriv }, alpha, c, l }
    }

    pub fn name(&self) -> String {
        match &self.kind {
            BondKind::Hookean => "hookean".into(),
            BondKind::Custom { expr, .. } => format!("custom({expr})"),
        }
    }

    /// `Φ(r)`; NaN outside the expression's domain.
    pub fn phi(&self, r: f64) -> f64 {
        match &self.kind {
            BondKind::Hookean => (r - 1.0) * (r - 1.0),
            BondKind::Custom { expr, .. } => expr.eval(r, 0.0).unwrap_or(f64::NAN),
        }
    }

    pub fn dphi(&self, r: f64) -> f64 {
        match &self.kind {
            BondKind::Hookean => 2.0 * (r - 1.0),
            BondKind::Custom { deriv, .. } => deriv.eval(r, 0.0).unwrap_or(f64::NAN),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum VolumeKind {
    /// `Ψ(a) = β |a − 1|`.
    Abs,
    /// `Ψ(a) = β huber_δ(a − 1)`: quadratic for `|a − 1| ≤ δ`, linear beyond.
    Huber { delta: f64 },
}

/// Volumetric energy `Ψ` of the normalised signed area, with its declared constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VolumeLaw {
    pub kind: VolumeKind,
    pub beta: f64,
    /// Coercivity: `Ψ(a) > α sqrt|a|` for `a < 0`.
    pub alpha: f64,
    /// Growth: `Ψ(a) < C (1 + |a|)`.
    pub c: f64,
    /// Lipschitz: `|Ψ(a) − Ψ(b)| ≤ L |a − b|`.
    pub l: f64,
}

impl VolumeLaw {
    pub fn abs(beta: f64) -> Self {
        VolumeLaw { kind: VolumeKind::Abs, beta, alpha: 0.5 * beta, c: 2.0 * beta, l: beta }
    }

    pub fn huber(beta: f64, delta: f64) -> Self {
        VolumeLaw { kind: VolumeKind::Huber { delta }, beta, alpha: 0.5 * beta, c: 2.0 * beta, l: beta }
    }

    pub fn name(&self) -> String {
        match self.kind {
            VolumeKind::Abs => format!("abs(beta={})", self.beta),
            VolumeKind::Huber { delta } => format!("huber(beta={}, delta={delta})", self.beta),
        }
    }

    pub fn psi(&self, a: f64) -> f64 {
        let t = a - 1.0;
        match self.kind {
            VolumeKind::Abs => self.beta * t.abs(),
            VolumeKind::Huber { delta } => {
                if t.abs() <= delta {
                    self.beta * t * t / (2.0 * delta)
                } else {
                    self.beta * (t.abs() - 0.5 * delta)
                }
            }
        }
    }

    /// `Ψ'(a)`; for the kinked law the value at `a = 1` is 0.
    pub fn dpsi(&self, a: f64) -> f64 {
        let t = a - 1.0;
        match self.kind {
            VolumeKind::Abs => {
                if t == 0.0 {
                    0.0
                } else {
                    self.beta * t.signum()
                }
            }
            VolumeKind::Huber { delta } => {
                if t.abs() <= delta {
                    self.beta * t / delta
                } else {
                    self.beta * t.signum()
                }
            }
        }
    }
}

impl Default for VolumeLaw {
    fn default() -> Self {
        VolumeLaw::huber(1.0, 1e-3)
    }
}

#[derive(Clone, Debug)]
pub struct Laws {
    pub bond: BondLaw,
    pub volume: VolumeLaw,
}

impl Default for Laws {
    fn default() -> Self {
        Laws { bond: BondLaw::hookean(), volume: VolumeLaw::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    ZeroOnlyAtOne,
    Coercivity,
    Growth,
    Lipschitz,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: Condition,
    /// Sample point(s) where the condition failed.
    pub at: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawReport {
    pub law: String,
    pub samples: usize,
    pub violation_count: usize,
    /// The first violations found (at most `GridSpec::max_reported`).
    pub violations: Vec<Violation>,
}

impl LawReport {
    pub fn ok(&self) -> bool {
        self.violation_count == 0
    }
}

/// Sampling grid for [`validate_bond_law`] and [`validate_volume_law`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Log-spaced points per decade.
    pub per_decade: usize,
    pub min_abs: f64,
    pub max_abs: f64,
    pub max_reported: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { per_decade: 200, min_abs: 1e-3, max_abs: 1e3, max_reported: 50 }
    }
}

impl GridSpec {
    fn positive(&self) -> Vec<f64> {
        let (lo, hi) = (self.min_abs.log10(), self.max_abs.log10());
        let n = ((hi - lo) * self.per_decade as f64).ceil() as usize;
        let mut v: Vec<f64> = (0..=n).map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / n as f64)).collect();
        v.push(1.0);
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

struct Collector {
    spec: GridSpec,
    count: usize,
    list: Vec<Violation>,
}

impl Collector {
    fn check(&mut self, ok: bool, condition: Condition, at: &[f64], lhs: f64, rhs: f64) {
        if !ok {
            self.count += 1;
            if self.list.len() < self.spec.max_reported {
                self.list.push(Violation { condition, at: at.to_vec(), lhs, rhs });
            }
        }
    }
}

const SLACK: f64 = 1e-12;

/// Samples the four structural conditions of a bond law on `r ∈ [min_abs, max_abs]`.
pub fn validate_bond_law(law: &BondLaw, spec: &GridSpec) -> LawReport {
    let grid = spec.positive();
    let mut c = Collector { spec: *spec, count: 0, list: Vec::new() };
    let vals: Vec<f64> = grid.iter().map(|&r| law.phi(r)).collect();
    for (&r, &p) in grid.iter().zip(&vals) {
        let scale = SLACK * (1.0 + p.abs());
        if r == 1.0 {
            c.check(p.abs() <= SLACK, Condition::ZeroOnlyAtOne, &[r], p, 0.0);
        } else {
            c.check(p > 0.0, Condition::ZeroOnlyAtOne, &[r], p, 0.0);
        }
        let lo = law.alpha * (r - 1.0).powi(2);
        c.check(p >= lo - scale, Condition::Coercivity, &[r], p, lo);
        let hi = law.c * (1.0 + r * r);
        c.check(p <= hi + scale, Condition::Growth, &[r], p, hi);
    }
    // Lipschitz on neighbouring pairs and on a strided set of distant pairs
    let stride = (grid.len() / 40).max(1);
    for i in 0..grid.len() {
        let partners = std::iter::once(i + 1).chain((i + stride..grid.len()).step_by(stride));
        for j in partners.filter(|&j| j < grid.len()) {
            let (r, s) = (grid[i], grid[j]);
            let lhs = (vals[i] - vals[j]).abs();
            let rhs = law.l * (1.0 + r + s) * (r - s).abs();
            c.check(lhs <= rhs * (1.0 + SLACK) + SLACK, Condition::Lipschitz, &[r, s], lhs, rhs);
        }
    }
    LawReport { law: law.name(), samples: grid.len(), violation_count: c.count, violations: c.list }
}

/// Samples the four structural conditions of a volume law on `a ∈ [−max_abs, max_abs]`.
pub fn validate_volume_law(law: &VolumeLaw, spec: &GridSpec) -> LawReport {
    let pos = spec.positive();
    let mut grid: Vec<f64> = pos.iter().map(|v| -v).chain(std::iter::once(0.0)).chain(pos.iter().copied()).collect();
    // resolve the neighbourhood of the minimum
    grid.extend((-50..=50).map(|k| 1.0 + k as f64 * 1e-4));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut c = Collector { spec: *spec, count: 0, list: Vec::new() };
    let vals: Vec<f64> = grid.iter().map(|&a| law.psi(a)).collect();
    for (&a, &p) in grid.iter().zip(&vals) {
        if a == 1.0 {
            c.check(p.abs() <= SLACK, Condition::ZeroOnlyAtOne, &[a], p, 0.0);
        } else {
            c.check(p > 0.0, Condition::ZeroOnlyAtOne, &[a], p, 0.0);
        }
        if a < 0.0 {
            let lo = law.alpha * a.abs().sqrt();
            c.check(p > lo, Condition::Coercivity, &[a], p, lo);
        }
        let hi = law.c * (1.0 + a.abs());
        c.check(p < hi, Condition::Growth, &[a], p, hi);
    }
    let stride = (grid.len() / 40).max(1);
    for i in 0..grid.len() {
        let partners = std::iter::once(i + 1).chain((i + stride..grid.len()).step_by(stride));
        for j in partners.filter(|&j| j < grid.len()) {
            let (a, b) = (grid[i], grid[j]);
            let lhs = (vals[i] - vals[j]).abs();
            let rhs = law.l * (a - b).abs();
            c.check(lhs <= rhs * (1.0 + SLACK) + SLACK, Condition::Lipschitz, &[a, b], lhs, rhs);
        }
    }
    LawReport { law: law.name(), samples: grid.len(), violation_count: c.count, violations: c.list }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_expr::parse_field;

    #[test]
    fn hookean_satisfies_all_conditions() {
        let r = validate_bond_law(&BondLaw::hookean(), &GridSpec::default());
        assert!(r.ok(), "{:?}", r.violations);
    }

    #[test]
    fn abs_and_huber_volume_laws_pass() {
        for law in [VolumeLaw::abs(1.0), VolumeLaw::huber(1.0, 1e-3), VolumeLaw::abs(3.0)] {
            let r = validate_volume_law(&law, &GridSpec::default());
            assert!(r.ok(), "{}: {:?}", law.name(), r.violations);
        }
        // direct check of |a − 1| > sqrt|a| / 2 for a < 0
        for k in 1..10_000 {
            let a = -(k as f64) * 0.1;
            assert!((a - 1.0f64).abs() > 0.5 * a.abs().sqrt());
        }
    }

    #[test]
    fn hencky_violates_growth() {
        // sinh|log r| = |r − 1/r| / 2
        let law = BondLaw::custom(parse_field("sqrt((x - 1/x)^2)/2").unwrap(), 1.0, 1.0, 1.0);
        for r in [0.5, 2.0, 10.0] {
            assert!((law.phi(r) - (r as f64).ln().abs().sinh()).abs() < 1e-12);
        }
        let report = validate_bond_law(&law, &GridSpec::default());
        // |r − 1/r| / 2 grows like r/2 at infinity, within C(1 + r²); the
        // bound fails through the 1/(2r) blow-up at small r
        let growth: Vec<_> = report.violations.iter().filter(|v| v.condition == Condition::Growth).collect();
        assert!(!growth.is_empty());
        assert!(growth.iter().all(|v| v.at[0] < 1.0));
        assert!(growth.iter().any(|v| v.at[0] <= 1e-2));
    }

    #[test]
    fn understated_lipschitz_constant_is_caught() {
        let mut law = BondLaw::hookean();
        law.l = 1.0;
        let r = validate_bond_law(&law, &GridSpec::default());
        assert!(r.violations.iter().any(|v| v.condition == Condition::Lipschitz));
    }

    #[test]
    fn custom_law_derivative_is_symbolic() {
        let law = BondLaw::custom(parse_field("(x-1)^2 + (x-1)^4").unwrap(), 1.0, 10.0, 10.0);
        let r = 1.7;
        assert!((law.dphi(r) - (2.0 * 0.7 + 4.0 * 0.7f64.powi(3))).abs() < 1e-12);
    }

    #[test]
    fn huber_is_continuous_with_continuous_derivative() {
        let law = VolumeLaw::huber(2.0, 0.1);
        for a in [1.1, 0.9] {
            let (l, r) = (a - 1e-12, a + 1e-12);
            assert!((law.psi(l) - law.psi(r)).abs() < 1e-10);
            assert!((law.dpsi(l) - law.dpsi(r)).abs() < 1e-9);
        }
        assert_eq!(law.psi(1.0), 0.0);
        assert_eq!(law.dpsi(1.0), 0.0);
    }
}
