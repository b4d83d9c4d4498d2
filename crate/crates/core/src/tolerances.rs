//! Numerical thresholds shared across modules.

/// Central finite-difference step for metric and connection derivatives.
pub const FD_STEP: f64 = 1e-5;

/// Default relative and absolute tolerance of the embedded Runge–Kutta pair.
pub const ODE_RTOL: f64 = 1e-10;
pub const ODE_ATOL: f64 = 1e-10;

/// Default number of grid intervals for sampled curves.
pub const GRID_N: usize = 400;

/// Conservation residual allowed on integrated brachistochrones (scaled by 1+kT or 1+T^2).
pub const TOL_CONSERVATION: f64 = 1e-8;

/// Horizontality threshold relative to the curve speed.
pub const TOL_HORIZONTAL: f64 = 1e-6;

/// Residual threshold for the shooting problem (g_R displacement to the observer orbit).
pub const TOL_BVP: f64 = 1e-10;

/// Relative eigenvalue threshold used when counting negative/null Hessian directions.
pub const EIG_REL: f64 = 1e-6;

/// Relative singular-value threshold for focal multiplicities.
pub const FOCAL_SVD_REL: f64 = 1e-5;

/// Relative singular-value threshold confirming a b-focal point from the brachistochrone side.
pub const BFOCAL_SVD_REL: f64 = 1e-4;

/// Killing antisymmetry tolerance relative to |v||w|.
pub const TOL_KILLING: f64 = 1e-6;

/// Tangent-space constraint tolerance (relative to the field scale).
pub const TOL_TANGENT: f64 = 1e-5;

/// Deduplication threshold in sup g_R distance for surveyed solutions.
pub const DEDUP_DISTANCE: f64 = 1e-4;

/// Node count used when comparing curves.
pub const COMPARE_N: usize = 200;
