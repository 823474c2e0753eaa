use super::{Chart, GeometryError, Vec2};
use crate::field_expr::ScalarFieldExpr;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpResult {
    pub point: Vec2,
    pub inside: bool,
}

/// Exponential map of the chart connection: `p + v`, flagged when it leaves `chart`.
pub fn exp_connection(chart: &Chart, p: &Vec2, v: &Vec2) -> ExpResult {
    let point = p + v;
    ExpResult { point, inside: chart.contains(&point, 0.0) }
}

/// Parallel transport of the chart connection (path independent, the identity).
pub fn parallel_transport(_p: &Vec2, _q: &Vec2, v: &Vec2) -> Vec2 {
    *v
}

/// Transport from `p` to `q` whose parallel frame is `(a/φ, b/φ)`: `v ↦ (φ(p)/φ(q)) v`.
pub fn conformal_transport(p: &Vec2, q: &Vec2, v: &Vec2, phi: &ScalarFieldExpr) -> Result<Vec2, GeometryError> {
    let eval = |x: &Vec2| -> Result<f64, GeometryError> {
        let value = phi
            .eval(x.x, x.y)
            .map_err(|source| GeometryError::Field { x: x.x, y: x.y, source })?;
        if !(value > 0.0) {
            return Err(GeometryError::NonPositiveFactor { x: x.x, y: x.y, value });
        }
        Ok(value)
    };
    Ok(v * (eval(p)? / eval(q)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_expr::parse_field;
    use crate::geometry::{LatticeFrame, Mat2, MetricField};
    use proptest::prelude::*;

    #[test]
    fn exp_examples() {
        let c = Chart::unit_square();
        let r = exp_connection(&c, &Vec2::new(0.2, 0.3), &Vec2::new(0.1, 0.0));
        assert_eq!(r.point, Vec2::new(0.2 + 0.1, 0.3));
        assert!(r.inside);
        assert_eq!(exp_connection(&c, &Vec2::zeros(), &Vec2::zeros()).point, Vec2::zeros());
        assert!(!exp_connection(&c, &Vec2::new(0.9, 0.5), &Vec2::new(0.2, 0.0)).inside);
    }

    #[test]
    fn parallel_transport_examples() {
        let (p, q) = (Vec2::zeros(), Vec2::new(1.0, 1.0));
        assert_eq!(parallel_transport(&p, &q, &Vec2::new(2.0, 3.0)), Vec2::new(2.0, 3.0));
        let f = LatticeFrame::hexagonal();
        assert_eq!(parallel_transport(&p, &q, &f.a()), f.a());
        assert_eq!(parallel_transport(&p, &q, &f.b()), f.b());
        let v = Vec2::new(-0.4, 1.7);
        assert_eq!(parallel_transport(&q, &p, &parallel_transport(&p, &q, &v)), v);
    }

    #[test]
    fn conformal_transport_examples() {
        let one = parse_field("1").unwrap();
        let v = Vec2::new(0.3, -0.2);
        assert_eq!(conformal_transport(&Vec2::zeros(), &Vec2::new(0.5, 0.5), &v, &one).unwrap(), v);

        // φ(p) = 2, φ(q) = 1
        let phi = parse_field("1 + x").unwrap();
        let (p, q) = (Vec2::new(1.0, 0.0), Vec2::new(0.0, 0.0));
        let out = conformal_transport(&p, &q, &Vec2::new(1.0, 0.0), &phi).unwrap();
        assert_eq!(out, Vec2::new(2.0, 0.0));
        // oracle: the frame a/φ is parallel, so transporting a(p)/φ(p) yields a(q)/φ(q)
        let a = LatticeFrame::hexagonal().a();
        let moved = conformal_transport(&p, &q, &(a / 2.0), &phi).unwrap();
        assert!((moved - a).norm() < 1e-15);
        let back = conformal_transport(&q, &p, &(a / 1.0), &phi).unwrap();
        assert!((back - a / 2.0).norm() < 1e-15);

        let bad = parse_field("x - 0.5").unwrap();
        assert!(matches!(
            conformal_transport(&Vec2::zeros(), &p, &v, &bad),
            Err(GeometryError::NonPositiveFactor { .. })
        ));
    }

    proptest! {
        #[test]
        fn exp_is_additive(p in prop::array::uniform2(-1.0f64..1.0), v in prop::array::uniform2(-1.0f64..1.0),
                           w in prop::array::uniform2(-1.0f64..1.0)) {
            let c = Chart::unit_square();
            let (p, v, w) = (Vec2::from(p), Vec2::from(v), Vec2::from(w));
            let lhs = exp_connection(&c, &exp_connection(&c, &p, &v).point, &w).point;
            let rhs = exp_connection(&c, &p, &(v + w)).point;
            // p + v + w versus p + (v + w): equal up to one rounding of the sum
            prop_assert!((lhs - rhs).norm() <= 4.0 * f64::EPSILON * (p.norm() + v.norm() + w.norm()));
        }

        #[test]
        fn conformal_transport_preserves_length(p in prop::array::uniform2(0.0f64..1.0),
                                                q in prop::array::uniform2(0.0f64..1.0),
                                                v in prop::array::uniform2(-1.0f64..1.0)) {
            // g = φ² G₀ with a non-identity G₀
            let phi = parse_field("exp((x^2+y^2)/2)").unwrap();
            let g0 = Mat2::new(2.0, 0.3, 0.3, 1.0);
            let m = MetricField::conformal_with_base(Chart::unit_square(), LatticeFrame::hexagonal(), phi.clone(), g0).unwrap();
            let (p, q, v) = (Vec2::from(p), Vec2::from(q), Vec2::from(v));
            prop_assume!(v.norm() > 1e-6);
            // v is based at q and carried to p
            let t = conformal_transport(&q, &p, &v, &phi).unwrap();
            let ratio = m.norm(&p, &t).unwrap() / m.norm(&q, &v).unwrap();
            prop_assert!((ratio - 1.0).abs() < 1e-13);
        }
    }
}
