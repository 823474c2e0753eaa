//! Benchmark fixtures shared by the criterion targets.

use incompat_core::energy::Laws;
use incompat_core::geometry::{Chart, LatticeFrame, MetricField, Vec2};
use incompat_core::parse_field;

/// Conformal metric `exp(x² + y²) I` on the unit square with the hexagonal frame.
pub fn curved() -> MetricField {
    MetricField::conformal(
        Chart::unit_square(),
        LatticeFrame::hexagonal(),
        parse_field("exp((x^2 + y^2)/2)").expect("literal"),
    )
}

pub fn laws() -> Laws {
    Laws::default()
}

/// A fixed smooth deformation of the mesh vertices.
pub fn bent(vertices: &[Vec2]) -> Vec<Vec2> {
    vertices.iter().map(|v| Vec2::new(v.x + 0.1 * v.y.sin(), v.y + 0.05 * v.x * v.x)).collect()
}
