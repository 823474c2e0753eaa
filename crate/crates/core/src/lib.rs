//! Discrete incompatible elasticity on geodesic hexagonal lattices.
//!
//! A body is a rectangle of a planar chart carrying a Riemannian metric `g`.
//! The chart's coordinate frame plays the role of a flat symmetric connection,
//! and a constant frame `a, b, c = -a - b` defines the crystal axes. The crate
//! builds ε-scale lattices, evaluates bond and signed-volume energies,
//! minimizes them, and evaluates the continuum densities `W`, `W_ε` and an
//! upper estimate of the quasiconvex envelope `QW`.

pub mod continuum;
pub mod energy;
pub mod field_expr;
pub mod geometry;
pub mod lbfgs;
pub mod minimize;
pub mod quadrature;
pub mod triangulation;
pub mod validate;

pub use field_expr::{parse_field, DomainError, ExprError, ScalarFieldExpr};
