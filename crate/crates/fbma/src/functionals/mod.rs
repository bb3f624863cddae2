pub mod energy;
pub mod hessian;
pub mod landscape;

pub use energy::{
    energy_and_gradient, evaluate, functional_i, functional_j, j_from_quad, j_sums, lambda_of, Discretization, EnergyReport, Evaluation,
    JOutcome, JQuad, MassBalanceRow,
};
pub use hessian::energy_hessian;
pub use landscape::{ehat_landscape, Landscape, LandscapeSpec};
