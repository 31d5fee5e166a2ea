//! Variable-density incompressible Navier–Stokes on a staggered grid with
//! Navier friction walls.

pub mod density;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod linsolve;
pub mod momentum;
pub mod operators;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type GridSpec64 = grid::GridSpec<f64>;
pub type ScalarField64 = grid::ScalarField<f64>;
pub type FaceField64 = grid::FaceField<f64>;
pub type VelocityField64 = grid::VelocityField<f64>;
pub type FluidState64 = momentum::FluidState<f64>;
pub type SimConfig64 = momentum::SimConfig<f64>;

pub type GridSpec32 = grid::GridSpec<f32>;
pub type ScalarField32 = grid::ScalarField<f32>;
pub type FaceField32 = grid::FaceField<f32>;
pub type VelocityField32 = grid::VelocityField<f32>;
pub type FluidState32 = momentum::FluidState<f32>;
pub type SimConfig32 = momentum::SimConfig<f32>;
