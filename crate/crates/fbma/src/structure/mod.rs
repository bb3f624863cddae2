//! Nonlinearity data `(F, G)`, weighted domains `(P, h)` and their
//! structural checks.

pub mod classify;
pub mod domain;
pub mod pair;

pub use classify::{classify_structure, Classification, ClauseCheck, Property};
pub use domain::{doubling_check, vanishing_order_check, CurvatureSpec, Density, DoublingReport, VanishingOutcome, WeightedDomain};
pub use pair::{FSpec, GSpec, PairTag, StructuralPair};
