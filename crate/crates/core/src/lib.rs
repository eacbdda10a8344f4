//! Control synthesis for quadratic ODE systems
//! `ẋ + Ax + Γ(x,x) = Bu` tracked in the relaxation norm.
//!
//! The crate is organized around the synthesis pipeline:
//!
//! - [`model`] — the quadratic system, its nonlinearity, and the enlarged
//!   two-input right-hand side.
//! - [`subspace`] — small dense orthonormal-basis arithmetic.
//! - [`saturation`] — decomposition certificates `γ = ξ₀ − Σ f(ξᵢ)` and the
//!   saturation chain `E₀ = Range(B) ⊆ E₁ ⊆ …`.
//! - [`signal`] — time grids, square waves, tapering, the relaxation norm.
//! - [`integrator`] — fixed-step RK4 with blow-up detection.
//! - [`linear`] — the linear input-output map, its adjoint, and explicit
//!   kernel witnesses when `B` is not onto.
//! - [`synthesis`] — the constructive tracking-control synthesis.
//! - [`coupled`] — coupled systems, dynamic motion planning, and the
//!   Hölder-stability probe.

pub mod coupled;
pub mod error;
pub mod integrator;
pub mod linear;
pub mod model;
pub mod saturation;
pub mod signal;
pub mod subspace;
pub mod synthesis;

pub use error::CoreError;
pub use integrator::{resolve, simulate_closed_loop, Trajectory};
pub use model::QuadraticSystem;
pub use signal::{Signal, TimeGrid};
pub use subspace::SubspaceBasis;
