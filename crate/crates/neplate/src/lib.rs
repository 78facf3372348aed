//! Numerical toolkit for prescribed-metric ("non-Euclidean") thin-plate
//! elasticity.
//!
//! The library evaluates and minimizes the 3d plate energy whose density is
//! the squared distance of the deformation gradient to the rotated well
//! `SO(3)·A(x')` with `A = √g`, evaluates and minimizes the 2d bending
//! functional that arises in the vanishing-thickness limit, builds the
//! recovery deformations `u = y + x₃n + (x₃²/2)d` connecting the two, and
//! runs the scaling-law experiments that classify whether a 2d metric admits
//! a `W²,²` isometric immersion.
//!
//! All numerics are generic over the scalar type through [`scalar::Real`]
//! (`f32` or `f64`); the `*64` aliases below fix the double-precision
//! instantiation used by the command-line tools.

pub mod csvio;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod kirchhoff;
pub mod metric;
pub mod optim;
pub mod plate;
pub mod recovery;
pub mod rigidity;
pub mod sampling;
pub mod scalar;
pub mod wells;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision aliases for the main domain types.
pub type Rect64 = grid::Rect<f64>;
pub type Mesh64 = grid::Mesh2<f64>;
pub type Grid64 = grid::Grid3<f64>;
pub type MetricField64 = metric::MetricField<f64>;
pub type WellFrame64 = metric::WellFrame<f64>;
pub type Deformation64 = plate::DeformationField3D<f64>;
pub type Immersion64 = kirchhoff::ImmersionField2D<f64>;
