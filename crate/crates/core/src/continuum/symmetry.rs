//! Symmetries of `W` for metrics conformal to a constant one.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ContinuumDensity, ContinuumError};
use crate::geometry::{conformal_transport, inv_sqrtm_spd, sqrtm_spd, Mat2, Vec2};

/// `max |Ĝ(x) − Ĝ(x₀)|_F` over an `n × n` grid, `Ĝ = G / sqrt(det G)`.
/// Zero exactly when `g = φ² G₀` with `G₀` constant.
pub fn conformality_residual(g: &crate::geometry::MetricField, n: usize) -> Result<f64, ContinuumError> {
    let c = g.chart();
    let shape = |p: &Vec2| -> Result<Mat2, ContinuumError> {
        let m = g.g(p)?;
        Ok(m / m.determinant().sqrt())
    };
    let base = shape(&c.center())?;
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in 0..n {
            let p = Vec2::new(
                c.x0 + c.width() * (i as f64 + 0.5) / n as f64,
                c.y0 + c.height() * (j as f64 + 0.5) / n as f64,
            );
            worst = worst.max((shape(&p)? - base).norm());
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    pub samples: usize,
    pub conformality_residual: f64,
    /// `max |W_q(A ∘ Π̃_q^p) − W_p(A)|`.
    pub transport_error: f64,
    /// `max |W_p(A ∘ R_{π/3}) − W_p(A)|`, when the axes are hexagonally symmetric.
    pub rotation_error: Option<f64>,
}

fn random_point(rng: &mut ChaCha8Rng, g: &crate::geometry::MetricField) -> Vec2 {
    let c = g.chart();
    Vec2::new(rng.gen_range(c.x0..c.x1), rng.gen_range(c.y0..c.y1))
}

/// Checks the material-connection identity and, when `|a|_g = |b|_g` with
/// angle `2π/3`, invariance under the `g`-rotation by `π/3`.
pub fn conformal_symmetry_check(
    density: &ContinuumDensity,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<SymmetryReport, ContinuumError> {
    let g = &density.g;
    let residual = conformality_residual(g, 16)?;
    let Some((phi, _)) = g.conformal_parts().filter(|_| residual <= tol) else {
        return Err(ContinuumError::NotConformal { residual });
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transport_error: f64 = 0.0;
    let mut rotation_error: Option<f64> = None;

    let p0 = g.chart().center();
    let gram = g.frame_gram(&p0)?;
    let (la, lb) = (gram[(0, 0)].sqrt(), gram[(1, 1)].sqrt());
    let cos = gram[(0, 1)] / (la * lb);
    let hexagonal = (la - lb).abs() <= 1e-12 * la && (cos + 0.5).abs() <= 1e-12;

    for _ in 0..samples {
        let p = random_point(&mut rng, g);
        let q = random_point(&mut rng, g);
        let a = Mat2::from_fn(|_, _| rng.gen_range(-2.0..2.0));
        let wp = density.at(&p)?;
        let w_a = wp.value(&a);
        // Π̃_q^p : T_qM → T_pM is scalar in the chart
        let s = conformal_transport(&q, &p, &Vec2::new(1.0, 0.0), phi)?.x;
        let wq = density.at(&q)?.value(&(a * s));
        transport_error = transport_error.max((wq - w_a).abs());

        if hexagonal {
            let gp = g.g(&p)?;
            let rot = Mat2::new((PI / 3.0).cos(), -(PI / 3.0).sin(), (PI / 3.0).sin(), (PI / 3.0).cos());
            let r = inv_sqrtm_spd(&gp)? * rot * sqrtm_spd(&gp)?;
            let e = (wp.value(&(a * r)) - w_a).abs();
            rotation_error = Some(rotation_error.unwrap_or(0.0).max(e));
        }
    }
    Ok(SymmetryReport { samples, conformality_residual: residual, transport_error, rotation_error })
}
