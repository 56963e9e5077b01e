//! Weighted diffeomorphism calculus on chart-based Riemannian manifolds.
//!
//! A manifold is described by an atlas of charts with explicit transition
//! maps, a metric per chart, named weights and named vector fields. On top of
//! that the crate evaluates Riemannian exponential and logarithm maps,
//! estimates the quantitative constants that control them, computes weighted
//! seminorms of vector fields, builds saturated weight sets, certifies when
//! `exp ∘ X` is a diffeomorphism and evaluates the local group operations.

pub mod calculus;
pub mod certificate;
pub mod engine;
pub mod error;
pub mod expr;
pub mod fd;
pub mod grid;
pub mod group;
pub mod linalg;
pub mod manifold;
pub mod oracle;
pub mod tabfile;
pub mod weights;

pub use certificate::{Certificate, Check, Relation};
pub use error::{Error, Result};
pub use expr::Expr;
pub use grid::{Region, Shape};
pub use linalg::Norm;
pub use manifold::{load_manifold, parse_manifold, Chart, ManifoldSpec, Transition};
