//! Convex geometry kernel: polytopes, ellipsoids, max-of-affine functions and
//! their cell complexes, and quadrature.

pub mod complex;
pub mod ellipsoid;
pub mod piecewise;
pub mod polytope;
pub mod quadrature;

pub use complex::{build_complex, Cell, CellComplex};
pub use ellipsoid::{john_containment_defect, john_ellipsoid, sample_directions, support_function, ConvexBody, Ellipsoid};
pub use piecewise::{activity_cells, h_barycenter, legendre_transform, negative_set, ActivityCell, PiecewiseAffineConvex};
pub use polytope::{dot, norm, polar_dual, Halfspace, Polytope};
pub use quadrature::{measure_integrate, IntegralOutcome, QuadratureGrid};
