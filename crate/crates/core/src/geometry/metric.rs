use nalgebra::Matrix3;

use super::{Chart, GeometryError, LatticeFrame, Mat2, Vec2};
use crate::field_expr::{BinOp, DomainError, Expr, FieldJet, ScalarFieldExpr};

/// Metric and its first and second chart derivatives at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricJet {
    pub g: Mat2,
    pub gx: Mat2,
    pub gy: Mat2,
    pub gxx: Mat2,
    pub gxy: Mat2,
    pub gyy: Mat2,
}

#[derive(Clone, Debug)]
enum Repr {
    Constant(Mat2),
    Conformal { phi: ScalarFieldExpr, jet: FieldJet, g0: Mat2 },
    General { jets: Box<[FieldJet; 3]> },
}

/// Riemannian metric on a chart rectangle, stored through its coefficients
/// `g_aa = g(a, a)`, `g_bb = g(b, b)`, `g_ab = g(a, b)` in the lattice frame.
#[derive(Clone, Debug)]
pub struct MetricField {
    chart: Chart,
    frame: LatticeFrame,
    coeffs: [ScalarFieldExpr; 3],
    repr: Repr,
    p_inv: Mat2,
}

fn at(p: &Vec2) -> impl Fn(DomainError) -> GeometryError + '_ {
    move |source| GeometryError::Field { x: p.x, y: p.y, source }
}

fn sym(a: f64, b: f64, c: f64) -> Mat2 {
    Mat2::new(a, c, c, b)
}

/// Smallest eigenvalue of a symmetric 2×2 matrix.
pub(crate) fn min_eig_sym(m: &Mat2) -> f64 {
    let t = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let d = (0.5 * (m[(0, 0)] - m[(1, 1)])).hypot(m[(0, 1)]);
    t - d
}

impl MetricField {
    fn from_repr(chart: Chart, frame: LatticeFrame, coeffs: [ScalarFieldExpr; 3], repr: Repr) -> Self {
        let p_inv = frame.matrix().try_inverse().expect("frame is independent");
        MetricField { chart, frame, coeffs, repr, p_inv }
    }

    fn constant_coeffs(frame: &LatticeFrame, g: &Mat2) -> [ScalarFieldExpr; 3] {
        let (a, b) = (frame.a(), frame.b());
        [
            ScalarFieldExpr::constant(a.dot(&(g * a))),
            ScalarFieldExpr::constant(b.dot(&(g * b))),
            ScalarFieldExpr::constant(a.dot(&(g * b))),
        ]
    }

    pub fn euclidean(chart: Chart, frame: LatticeFrame) -> Self {
        Self::constant(chart, frame, Mat2::identity()).expect("identity is SPD")
    }

    /// Constant metric given by its chart matrix.
    pub fn constant(chart: Chart, frame: LatticeFrame, g: Mat2) -> Result<Self, GeometryError> {
        let c = chart.center();
        if (g[(0, 1)] - g[(1, 0)]).abs() > 1e-14 * g.norm() || !(min_eig_sym(&g) > 1e-12) {
            return Err(GeometryError::NotSpd { x: c.x, y: c.y, min_eig: min_eig_sym(&g) });
        }
        let coeffs = Self::constant_coeffs(&frame, &g);
        Ok(Self::from_repr(chart, frame, coeffs, Repr::Constant(g)))
    }

    /// `g = φ² · I` in the chart.
    pub fn conformal(chart: Chart, frame: LatticeFrame, phi: ScalarFieldExpr) -> Self {
        Self::conformal_with_base(chart, frame, phi, Mat2::identity()).expect("identity is SPD")
    }

    /// `g = φ² · G₀` with `G₀` a constant chart matrix.
    pub fn conformal_with_base(
        chart: Chart,
        frame: LatticeFrame,
        phi: ScalarFieldExpr,
        g0: Mat2,
    ) -> Result<Self, GeometryError> {
        if !(min_eig_sym(&g0) > 1e-12) {
            let c = chart.center();
            return Err(GeometryError::NotSpd { x: c.x, y: c.y, min_eig: min_eig_sym(&g0) });
        }
        let base = Self::constant_coeffs(&frame, &g0);
        let phi2 = Expr::Bin(BinOp::Pow, Box::new(phi.ast().clone()), Box::new(Expr::Num(2.0)));
        let coeffs = base.map(|k| {
            let k = k.eval(0.0, 0.0).expect("constant");
            ScalarFieldExpr::from_ast(Expr::Bin(BinOp::Mul, Box::new(Expr::Num(k)), Box::new(phi2.clone())))
        });
        let jet = phi.jet();
        Ok(Self::from_repr(chart, frame, coeffs, Repr::Conformal { phi, jet, g0 }))
    }

    /// Metric from its frame coefficients `g_aa`, `g_bb`, `g_ab`.
    pub fn general(
        chart: Chart,
        frame: LatticeFrame,
        g_aa: ScalarFieldExpr,
        g_bb: ScalarFieldExpr,
        g_ab: ScalarFieldExpr,
    ) -> Result<Self, GeometryError> {
        let coeffs = [g_aa, g_bb, g_ab];
        if coeffs.iter().all(|c| c.ast().is_constant()) {
            let c = chart.center();
            let v: Vec<f64> = coeffs
                .iter()
                .map(|e| e.eval(c.x, c.y))
                .collect::<Result<_, _>>()
                .map_err(at(&c))?;
            let gf = sym(v[0], v[1], v[2]);
            let p_inv = frame.matrix().try_inverse().expect("frame is independent");
            let g = p_inv.transpose() * gf * p_inv;
            let g = 0.5 * (g + g.transpose());
            if !(min_eig_sym(&g) > 1e-12) {
                return Err(GeometryError::NotSpd { x: c.x, y: c.y, min_eig: min_eig_sym(&g) });
            }
            return Ok(Self::from_repr(chart, frame, coeffs, Repr::Constant(g)));
        }
        let jets = Box::new([coeffs[0].jet(), coeffs[1].jet(), coeffs[2].jet()]);
        Ok(Self::from_repr(chart, frame, coeffs, Repr::General { jets }))
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn frame(&self) -> &LatticeFrame {
        &self.frame
    }

    /// `(g_aa, g_bb, g_ab)` expressions.
    pub fn coefficients(&self) -> &[ScalarFieldExpr; 3] {
        &self.coeffs
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.repr, Repr::Constant(_))
    }

    /// Conformal factor `φ` and base matrix `G₀` when built as `φ² · G₀`.
    pub fn conformal_parts(&self) -> Option<(&ScalarFieldExpr, Mat2)> {
        match &self.repr {
            Repr::Conformal { phi, g0, .. } => Some((phi, *g0)),
            _ => None,
        }
    }

    fn to_chart(&self, gf: Mat2) -> Mat2 {
        self.p_inv.transpose() * gf * self.p_inv
    }

    /// Chart matrix `G(p)`.
    pub fn g(&self, p: &Vec2) -> Result<Mat2, GeometryError> {
        match &self.repr {
            Repr::Constant(g) => Ok(*g),
            Repr::Conformal { jet, g0, .. } => {
                let phi = jet.value(p.x, p.y).map_err(at(p))?;
                Ok(g0 * (phi * phi))
            }
            Repr::General { jets } => {
                let mut v = [0.0; 3];
                for (vi, j) in v.iter_mut().zip(jets.iter()) {
                    *vi = j.value(p.x, p.y).map_err(at(p))?;
                }
                Ok(self.to_chart(sym(v[0], v[1], v[2])))
            }
        }
    }

    /// `G(p)` together with `∂G/∂x`, `∂G/∂y`.
    pub fn g_with_gradient(&self, p: &Vec2) -> Result<(Mat2, Mat2, Mat2), GeometryError> {
        match &self.repr {
            Repr::Constant(g) => Ok((*g, Mat2::zeros(), Mat2::zeros())),
            Repr::Conformal { jet, g0, .. } => {
                let phi = jet.value(p.x, p.y).map_err(at(p))?;
                let (px, py) = jet.gradient(p.x, p.y).map_err(at(p))?;
                Ok((g0 * (phi * phi), g0 * (2.0 * phi * px), g0 * (2.0 * phi * py)))
            }
            Repr::General { jets } => {
                let mut v = [[0.0; 3]; 3];
                for (k, j) in jets.iter().enumerate() {
                    v[0][k] = j.value(p.x, p.y).map_err(at(p))?;
                    let (dx, dy) = j.gradient(p.x, p.y).map_err(at(p))?;
                    v[1][k] = dx;
                    v[2][k] = dy;
                }
                let m = v.map(|c| self.to_chart(sym(c[0], c[1], c[2])));
                Ok((m[0], m[1], m[2]))
            }
        }
    }

    /// Metric with first and second derivatives.
    pub fn jet(&self, p: &Vec2) -> Result<MetricJet, GeometryError> {
        match &self.repr {
            Repr::Constant(g) => {
                let z = Mat2::zeros();
                Ok(MetricJet { g: *g, gx: z, gy: z, gxx: z, gxy: z, gyy: z })
            }
            Repr::Conformal { jet, g0, .. } => {
                let f = jet.value(p.x, p.y).map_err(at(p))?;
                let (fx, fy) = jet.gradient(p.x, p.y).map_err(at(p))?;
                let h = jet.hessian(p.x, p.y).map_err(at(p))?;
                Ok(MetricJet {
                    g: g0 * (f * f),
                    gx: g0 * (2.0 * f * fx),
                    gy: g0 * (2.0 * f * fy),
                    gxx: g0 * (2.0 * (fx * fx + f * h[0][0])),
                    gxy: g0 * (2.0 * (fx * fy + f * h[0][1])),
                    gyy: g0 * (2.0 * (fy * fy + f * h[1][1])),
                })
            }
            Repr::General { jets } => {
                let mut v = [[0.0; 3]; 6];
                for (k, j) in jets.iter().enumerate() {
                    v[0][k] = j.value(p.x, p.y).map_err(at(p))?;
                    let (dx, dy) = j.gradient(p.x, p.y).map_err(at(p))?;
                    let h = j.hessian(p.x, p.y).map_err(at(p))?;
                    v[1][k] = dx;
                    v[2][k] = dy;
                    v[3][k] = h[0][0];
                    v[4][k] = h[0][1];
                    v[5][k] = h[1][1];
                }
                let m = v.map(|c| self.to_chart(sym(c[0], c[1], c[2])));
                Ok(MetricJet { g: m[0], gx: m[1], gy: m[2], gxx: m[3], gxy: m[4], gyy: m[5] })
            }
        }
    }

    /// Frame Gram matrix `[[g_aa, g_ab], [g_ab, g_bb]]` at `p`.
    pub fn frame_gram(&self, p: &Vec2) -> Result<Mat2, GeometryError> {
        let pm = self.frame.matrix();
        Ok(pm.transpose() * self.g(p)? * pm)
    }

    /// `sqrt(det G)`, the density of the Riemannian volume in the chart.
    pub fn sqrt_det(&self, p: &Vec2) -> Result<f64, GeometryError> {
        Ok(self.g(p)?.determinant().max(0.0).sqrt())
    }

    /// `ν(p) = |a ∧ b|_g`, the g-area of the parallelogram spanned by the axes.
    pub fn nu(&self, p: &Vec2) -> Result<f64, GeometryError> {
        Ok(self.frame.wedge() * self.sqrt_det(p)?)
    }

    /// `|v|_g` at `p`.
    pub fn norm(&self, p: &Vec2, v: &Vec2) -> Result<f64, GeometryError> {
        Ok(v.dot(&(self.g(p)? * v)).max(0.0).sqrt())
    }

    /// `(|a|_g, |b|_g, |c|_g)` at `p`.
    pub fn axis_norms(&self, p: &Vec2) -> Result<[f64; 3], GeometryError> {
        let g = self.g(p)?;
        let n = |v: Vec2| v.dot(&(g * v)).max(0.0).sqrt();
        Ok([n(self.frame.a()), n(self.frame.b()), n(self.frame.c())])
    }

    /// Checks that `G(p)` is symmetric positive definite.
    pub fn check_spd_at(&self, p: &Vec2) -> Result<Mat2, GeometryError> {
        let g = self.g(p)?;
        let m = min_eig_sym(&g);
        if !(m > 1e-12) || g.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NotSpd { x: p.x, y: p.y, min_eig: m });
        }
        Ok(g)
    }

    /// SPD check on an `n × n` grid of cell-centred points plus the corners.
    pub fn check_spd_grid(&self, n: usize) -> Result<(), GeometryError> {
        let c = &self.chart;
        for i in 0..n {
            for j in 0..n {
                let x = c.x0 + (i as f64 + 0.5) / n as f64 * c.width();
                let y = c.y0 + (j as f64 + 0.5) / n as f64 * c.height();
                self.check_spd_at(&Vec2::new(x, y))?;
            }
        }
        for p in [(c.x0, c.y0), (c.x1, c.y0), (c.x0, c.y1), (c.x1, c.y1)] {
            self.check_spd_at(&Vec2::new(p.0, p.1))?;
        }
        Ok(())
    }

    /// Gauss curvature at `p` by the Brioschi formula in chart coordinates.
    pub fn gauss_curvature(&self, p: &Vec2) -> Result<f64, GeometryError> {
        let j = self.jet(p)?;
        let (e, f, g) = (j.g[(0, 0)], j.g[(0, 1)], j.g[(1, 1)]);
        let det = e * g - f * f;
        if !(det > 1e-24) {
            return Err(GeometryError::NotSpd { x: p.x, y: p.y, min_eig: min_eig_sym(&j.g) });
        }
        let (e_u, e_v) = (j.gx[(0, 0)], j.gy[(0, 0)]);
        let (f_u, f_v) = (j.gx[(0, 1)], j.gy[(0, 1)]);
        let (g_u, g_v) = (j.gx[(1, 1)], j.gy[(1, 1)]);
        let e_vv = j.gyy[(0, 0)];
        let f_uv = j.gxy[(0, 1)];
        let g_uu = j.gxx[(1, 1)];
        let m1 = Matrix3::new(
            -0.5 * e_vv + f_uv - 0.5 * g_uu, 0.5 * e_u, f_u - 0.5 * e_v,
            f_v - 0.5 * g_u, e, f,
            0.5 * g_v, f, g,
        );
        let m2 = Matrix3::new(
            0.0, 0.5 * e_v, 0.5 * g_u,
            0.5 * e_v, e, f,
            0.5 * g_u, f, g,
        );
        Ok((m1.determinant() - m2.determinant()) / (det * det))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_expr::parse_field;

    fn conformal_gauss() -> MetricField {
        // φ = e^{λ}, λ = (x² + y²)/2, so g = e^{2λ} I
        MetricField::conformal(Chart::unit_square(), LatticeFrame::hexagonal(), parse_field("exp((x^2+y^2)/2)").unwrap())
    }

    #[test]
    fn euclidean_coefficients() {
        let m = MetricField::euclidean(Chart::unit_square(), LatticeFrame::hexagonal());
        let c = m.coefficients();
        assert!((c[0].eval(0.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((c[1].eval(0.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((c[2].eval(0.0, 0.0).unwrap() + 0.5).abs() < 1e-15);
        let nu = m.nu(&Vec2::new(0.3, 0.3)).unwrap();
        assert!((nu - 0.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn general_and_conformal_agree() {
        let frame = LatticeFrame::hexagonal();
        let conf = conformal_gauss();
        let [aa, bb, ab] = conf.coefficients().clone();
        let gen = MetricField::general(Chart::unit_square(), frame, aa, bb, ab).unwrap();
        for &(x, y) in &[(0.1, 0.2), (0.7, 0.4), (0.5, 0.9)] {
            let p = Vec2::new(x, y);
            let (j1, j2) = (conf.jet(&p).unwrap(), gen.jet(&p).unwrap());
            for (m1, m2) in [(j1.g, j2.g), (j1.gx, j2.gx), (j1.gy, j2.gy), (j1.gxx, j2.gxx), (j1.gxy, j2.gxy), (j1.gyy, j2.gyy)] {
                assert!((m1 - m2).norm() < 1e-12 * (1.0 + m1.norm()));
            }
        }
    }

    #[test]
    fn flat_metrics_have_zero_curvature() {
        let p = Vec2::new(0.4, 0.6);
        let e = MetricField::euclidean(Chart::unit_square(), LatticeFrame::hexagonal());
        assert_eq!(e.gauss_curvature(&p).unwrap(), 0.0);
        let c = MetricField::constant(Chart::unit_square(), LatticeFrame::hexagonal(), Mat2::identity() * 4.0).unwrap();
        assert_eq!(c.gauss_curvature(&p).unwrap(), 0.0);
        // a linear change of coordinates of the Euclidean metric, written as a general field
        let f = LatticeFrame::hexagonal();
        let g = MetricField::general(
            Chart::unit_square(),
            f,
            parse_field("2").unwrap(),
            parse_field("3").unwrap(),
            parse_field("0.5").unwrap(),
        )
        .unwrap();
        assert!(g.is_constant());
        assert_eq!(g.gauss_curvature(&p).unwrap(), 0.0);
    }

    #[test]
    fn brioschi_matches_conformal_closed_form() {
        // oracle: for g = e^{2λ} I, K = -e^{-2λ} Δλ; here Δλ = 2
        let m = conformal_gauss();
        for &(x, y) in &[(0.0, 0.0), (0.3, 0.8), (0.9, 0.1), (0.5, 0.5)] {
            let k = m.gauss_curvature(&Vec2::new(x, y)).unwrap();
            let lam: f64 = (x * x + y * y) / 2.0;
            let want = -2.0 * (-2.0 * lam).exp();
            assert!((k - want).abs() < 1e-12, "({x},{y}): {k} vs {want}");
        }
    }

    #[test]
    fn brioschi_matches_conformal_closed_form_general_path() {
        // non-diagonal chart representation of another conformal metric: λ = x y + x
        let frame = LatticeFrame::new(Vec2::new(1.0, 0.2), Vec2::new(-0.3, 1.1)).unwrap();
        let phi = parse_field("exp(x*y + x)").unwrap();
        let conf = MetricField::conformal(Chart::unit_square(), frame, phi);
        let [aa, bb, ab] = conf.coefficients().clone();
        let m = MetricField::general(Chart::unit_square(), frame, aa, bb, ab).unwrap();
        for &(x, y) in &[(0.2, 0.3), (0.6, 0.7)] {
            // Δλ = 0 for λ = x y + x
            let k = m.gauss_curvature(&Vec2::new(x, y)).unwrap();
            assert!(k.abs() < 1e-10, "{k}");
        }
        // λ = x²: Δλ = 2
        let conf = MetricField::conformal(Chart::unit_square(), frame, parse_field("exp(x^2)").unwrap());
        let [aa, bb, ab] = conf.coefficients().clone();
        let m = MetricField::general(Chart::unit_square(), frame, aa, bb, ab).unwrap();
        let (x, y) = (0.4, 0.1);
        let k = m.gauss_curvature(&Vec2::new(x, y)).unwrap();
        let want = -2.0 * (-2.0 * x * x as f64).exp();
        assert!((k - want).abs() < 1e-10, "{k} vs {want}");
    }

    #[test]
    fn non_spd_is_rejected() {
        let f = LatticeFrame::hexagonal();
        let bad = MetricField::general(
            Chart::unit_square(),
            f,
            parse_field("1").unwrap(),
            parse_field("1").unwrap(),
            parse_field("1.5").unwrap(),
        );
        assert!(matches!(bad, Err(GeometryError::NotSpd { .. })));
        let sign_change = MetricField::general(
            Chart::unit_square(),
            f,
            parse_field("x - 0.5").unwrap(),
            parse_field("1").unwrap(),
            parse_field("0").unwrap(),
        )
        .unwrap();
        assert!(sign_change.check_spd_grid(64).is_err());
    }
}
