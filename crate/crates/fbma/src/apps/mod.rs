//! Drivers for the applications: reconstruction and eigenvalue problems,
//! the hemispherical Minkowski problem, homogeneous transport cones, and the
//! integral identities of critical points.

pub mod cone;
pub mod minkowski;
pub mod reconstruct;
pub mod smooth;

pub use cone::{cone_exponent, ot_cone_lift, verify_lift, ConeLift, ConeLiftReport, LiftOptions};
pub use minkowski::{minkowski_solve, spherical_recenter, BarycenterConvention, CurvatureCheck, MinkowskiInstance, MinkowskiReport, Recentered};
pub use reconstruct::{identity_check, reconstruct, rescale_to_unit_lambda, IdentityMode, IdentityReport, Reconstruction};
