//! Spectral resolution of fourth-order operators L = D2 D1 with
//! D_i = -d^2/dx^2 + q_i(x) + h_i on the real line.

pub mod characteristic;
pub mod error;
pub mod green;
pub mod io;
pub mod linalg;
pub mod ode;
pub mod ode_core;
pub mod oracle;
pub mod pipeline;
pub mod problem;
pub mod quad;
pub mod spectrum;
pub mod transforms;
pub mod verify;
pub mod scalar;

pub use error::{Result, SpecError};
pub use problem::{OperatorSpec, Potential};

/// Root system in double precision.
pub type RootSystem = characteristic::RootSystem<f64>;
pub type RootSystemF32 = characteristic::RootSystem<f32>;
pub type DerivedConstants = problem::DerivedConstants<f64>;
pub type DerivedConstantsF32 = problem::DerivedConstants<f32>;
