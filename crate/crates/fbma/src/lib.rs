//! Variational solver for free boundary Monge-Ampère equations
//!
//! ```text
//! det D²u = λ f(−u) / (g(u⋆) h(∇u)) χ{u<0},   ∇u(ℝⁿ) = P
//! ```
//!
//! The unknown is represented dually: slopes `p_i` sampled in `P` carry
//! intercepts `c_i`, so `u = max_i(⟨p_i,x⟩ − c_i)` and `v = u*` is the lower
//! convex envelope of the lifted nodes. The solver minimizes
//! `E_Λ(v) = −log I(u) + Λ J(v)` over intercepts.

pub mod apps;
pub mod cli;
pub mod convex_core;
pub mod error;
pub mod functionals;
pub mod normalize;
pub mod radial;
pub mod solver;
pub mod structure;

pub use error::{Error, Result};
