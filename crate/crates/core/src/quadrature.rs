//! Gauss–Legendre and symmetric triangle quadrature rules.

use std::f64::consts::PI;

/// Gauss–Legendre rule on `[0, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule, exact for polynomials of degree `2n - 1`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Newton iteration on P_n from the Chebyshev-like initial guess
            let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, 0.0);
                for j in 0..n {
                    let p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * j as f64 + 1.0) * z * p1 - j as f64 * p2) / (j as f64 + 1.0);
                }
                dp = nf * (z * p0 - p1) / (z * z - 1.0);
                let dz = p0 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            // map [-1, 1] -> [0, 1]
            nodes[i] = 0.5 * (1.0 - z);
            nodes[n - 1 - i] = 0.5 * (1.0 + z);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        GaussLegendre { nodes, weights }
    }

    /// Integrates `f` over `[0, 1]`.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(t))
            .sum()
    }

    /// Tensor-product rule over `[x0, x1] × [y0, y1]` split into
    /// `panels × panels` cells.
    pub fn integrate_rect(
        &self,
        (x0, x1): (f64, f64),
        (y0, y1): (f64, f64),
        panels: usize,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> f64 {
        let hx = (x1 - x0) / panels as f64;
        let hy = (y1 - y0) / panels as f64;
        let mut total = 0.0;
        for i in 0..panels {
            for j in 0..panels {
                let cx = x0 + i as f64 * hx;
                let cy = y0 + j as f64 * hy;
                for (tx, wx) in self.nodes.iter().zip(&self.weights) {
                    for (ty, wy) in self.nodes.iter().zip(&self.weights) {
                        total += wx * wy * f(cx + tx * hx, cy + ty * hy);
                    }
                }
            }
        }
        total * hx * hy
    }
}

/// Symmetric quadrature rule on a triangle in barycentric coordinates;
/// weights sum to one (multiply by the triangle area).
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// 12-point rule exact for polynomials of degree 6 (Dunavant).
    pub fn degree6() -> Self {
        let mut points = Vec::with_capacity(12);
        let mut weights = Vec::with_capacity(12);
        let mut orbit3 = |a: f64, b: f64, w: f64| {
            for p in [[a, b, b], [b, a, b], [b, b, a]] {
                points.push(p);
                weights.push(w);
            }
        };
        orbit3(0.501426509658179, 0.249286745170910, 0.116786275726379);
        orbit3(0.873821971016996, 0.063089014491502, 0.050844906370207);
        let (a, b, c, w) = (0.053145049844817, 0.310352451033784, 0.636502499121399, 0.082851075618374);
        for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
            points.push(p);
            weights.push(w);
        }
        TriangleRule { points, weights }
    }

    /// Centroid rule (degree 1).
    pub fn centroid() -> Self {
        TriangleRule {
            points: vec![[1.0 / 3.0; 3]],
            weights: vec![1.0],
        }
    }

    /// Integrates `f` over the chart triangle with vertices `v`.
    pub fn integrate(&self, v: [[f64; 2]; 3], mut f: impl FnMut(f64, f64) -> f64) -> f64 {
        let area = 0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1])).abs();
        let mut s = 0.0;
        for (l, w) in self.points.iter().zip(&self.weights) {
            let x = l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0];
            let y = l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1];
            s += w * f(x, y);
        }
        s * area
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exact_for_degree_2n_minus_1() {
        for n in 1..12 {
            let rule = GaussLegendre::new(n);
            let wsum: f64 = rule.weights.iter().sum();
            assert!((wsum - 1.0).abs() < 1e-14);
            for k in 0..(2 * n) {
                let got = rule.integrate(|t| t.powi(k as i32));
                let want = 1.0 / (k as f64 + 1.0);
                assert!((got - want).abs() < 1e-14, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn triangle_rule_exact_up_to_degree_6() {
        // oracle: ∫_T x^i y^j over the reference triangle = i! j! / (i + j + 2)!
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
        let rule = TriangleRule::degree6();
        let v = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        for i in 0..=6u32 {
            for j in 0..=(6 - i) {
                let got = rule.integrate(v, |x, y| x.powi(i as i32) * y.powi(j as i32));
                let want = fact(i) * fact(j) / fact(i + j + 2);
                assert!((got - want).abs() < 1e-14, "x^{i} y^{j}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn tensor_rect_integrates_smooth_function() {
        let rule = GaussLegendre::new(6);
        let got = rule.integrate_rect((0.0, 1.0), (0.0, 2.0), 4, |x, y| (x + y).exp());
        let want = (std::f64::consts::E - 1.0) * (2f64.exp() - 1.0);
        assert!((got - want).abs() < 1e-12);
    }
}
