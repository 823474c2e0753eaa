use serde::{Deserialize, Serialize};

use super::{GeometryError, MetricField, Vec2};
use crate::lbfgs::{self, LbfgsOptions, Termination};
use crate::quadrature::GaussLegendre;

/// Length of the chart segment `p + t v`, `t ∈ [0, 1]`, by `n_quad`-point Gauss–Legendre.
pub fn segment_length(g: &MetricField, p: &Vec2, v: &Vec2, n_quad: usize) -> Result<f64, GeometryError> {
    if n_quad < 2 {
        return Err(GeometryError::TooFewNodes { min: 2, got: n_quad });
    }
    let chart = g.chart();
    let tol = 1e-12 * (1.0 + chart.width().max(chart.height()));
    // the rectangle is convex, so checking both ends suffices
    for end in [*p, p + v] {
        if !chart.contains(&end, tol) {
            return Err(GeometryError::OutsideDomain { x: p.x, y: p.y });
        }
    }
    let rule = GaussLegendre::new(n_quad);
    let mut total = 0.0;
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        let x = p + v * t;
        let gm = g.g(&x)?;
        total += w * v.dot(&(gm * v)).max(0.0).sqrt();
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceOptions {
    /// Polyline nodes including both endpoints.
    pub nodes: usize,
    /// Relative-decrease stopping tolerance of the relaxation.
    pub tol: f64,
    pub max_iters: usize,
    /// Gauss–Legendre nodes per polyline segment.
    pub quad_per_segment: usize,
    /// Return the straight-segment length without relaxation.
    pub fast: bool,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        DistanceOptions { nodes: 33, tol: 1e-10, max_iters: 500, quad_per_segment: 4, fast: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceResult {
    pub distance: f64,
    /// Length of the straight chart segment.
    pub straight: f64,
    pub iterations: usize,
    /// False when the relaxation hit its iteration cap.
    pub converged: bool,
}

/// Polyline length and its gradient with respect to the interior nodes.
struct Polyline<'a> {
    g: &'a MetricField,
    p: Vec2,
    q: Vec2,
    rule: GaussLegendre,
}

impl Polyline<'_> {
    fn node(&self, x: &[f64], k: usize, m: usize) -> Vec2 {
        if k == 0 {
            self.p
        } else if k == m - 1 {
            self.q
        } else {
            Vec2::new(x[2 * (k - 1)], x[2 * (k - 1) + 1])
        }
    }

    fn eval(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let m = x.len() / 2 + 2;
        let chart = self.g.chart();
        for k in 1..m - 1 {
            if !chart.contains(&self.node(x, k, m), 0.0) {
                return f64::INFINITY;
            }
        }
        grad.iter_mut().for_each(|v| *v = 0.0);
        let mut total = 0.0;
        for k in 0..m - 1 {
            let (a, b) = (self.node(x, k, m), self.node(x, k + 1, m));
            let v = b - a;
            let (mut ga, mut gb) = (Vec2::zeros(), Vec2::zeros());
            for (&t, &w) in self.rule.nodes.iter().zip(&self.rule.weights) {
                let Ok((gm, gx, gy)) = self.g.g_with_gradient(&(a + v * t)) else {
                    return f64::INFINITY;
                };
                let gv = gm * v;
                let s = v.dot(&gv).max(0.0).sqrt();
                total += w * s;
                if s > 0.0 {
                    let dq = Vec2::new(v.dot(&(gx * v)), v.dot(&(gy * v)));
                    ga += (gv * -2.0 + dq * (1.0 - t)) * (w / (2.0 * s));
                    gb += (gv * 2.0 + dq * t) * (w / (2.0 * s));
                }
            }
            if k > 0 {
                grad[2 * (k - 1)] += ga.x;
                grad[2 * (k - 1) + 1] += ga.y;
            }
            if k + 1 < m - 1 {
                grad[2 * k] += gb.x;
                grad[2 * k + 1] += gb.y;
            }
        }
        total
    }
}

/// Approximates the g-distance between `p` and `q` by relaxing a polyline
/// initialised on the straight chart segment.
pub fn riemannian_distance(
    g: &MetricField,
    p: &Vec2,
    q: &Vec2,
    opts: &DistanceOptions,
) -> Result<DistanceResult, GeometryError> {
    let m = opts.nodes.max(2);
    let straight = segment_length(g, p, &(q - p), opts.quad_per_segment.max(2) * (m - 1))?;
    if opts.fast || g.is_constant() || m == 2 || p == q {
        // constant metrics have straight geodesics
        return Ok(DistanceResult { distance: straight, straight, iterations: 0, converged: true });
    }
    let line = Polyline { g, p: *p, q: *q, rule: GaussLegendre::new(opts.quad_per_segment.max(2)) };
    let mut x0 = Vec::with_capacity(2 * (m - 2));
    for k in 1..m - 1 {
        let t = k as f64 / (m - 1) as f64;
        let node = p + (q - p) * t;
        x0.extend([node.x, node.y]);
    }
    let lopts = LbfgsOptions {
        max_iters: opts.max_iters,
        grad_tol: 0.0,
        rel_tol: opts.tol,
        ..LbfgsOptions::default()
    };
    let r = lbfgs::minimize(|x, gr| line.eval(x, gr), x0, &lopts);
    if r.termination == Termination::NonFiniteStart {
        return Err(GeometryError::OutsideDomain { x: p.x, y: p.y });
    }
    Ok(DistanceResult {
        distance: r.f.min(straight),
        straight,
        iterations: r.iterations,
        converged: r.termination != Termination::MaxIterations,
    })
}
