//! Travel-time brachistochrones in stationary spacetimes.
//!
//! The crate integrates the brachistochrone equation for a stationary
//! Lorentzian metric with timelike Killing field `Y`, maps solutions to
//! geodesics of the conformal Riemannian metric `φ_k·g_R`, and checks the
//! second-order theory (Hessians, Jacobi fields, focal points, Morse indices)
//! numerically. A brute-force discrete minimiser serves as an independent oracle.

pub mod bvp;
pub mod cli;
pub mod curves;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod jacobi;
pub mod models;
pub mod ode;
pub mod oracle;
pub mod tolerances;
pub mod transform;
pub mod variation;

pub use error::{Error, Result};
pub use geometry::{Event, Matrix, SpacetimeModel, Tangent, Vector};
