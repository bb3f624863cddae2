//! Eigenvalue-type reconstruction of `Ω` from its gradient image, and the
//! integral identities satisfied by critical points.

use crate::convex_core::piecewise::{negative_set, PiecewiseAffineConvex};
use crate::convex_core::polytope::{norm, Polytope};
use crate::functionals::energy::EnergyReport;
use crate::solver::{minimize_energy, SolveConfig, SolveResult};
use crate::structure::domain::WeightedDomain;
use crate::structure::pair::{FSpec, GSpec, StructuralPair};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Solution of `det D²u = (−u)^k χ{u<0}`, `∇u(ℝⁿ) = P` with λ scaled to 1.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Reconstruction {
    pub result: SolveResult,
    /// λ of the raw minimizer.
    pub lambda_raw: f64,
    /// The rescaling `u ↦ a u(·/a)` applied.
    pub scale: f64,
    /// Rescaled and recentered so that `Ω` has barycenter 0.
    pub v: PiecewiseAffineConvex,
    pub omega: Polytope,
    pub lambda: f64,
}

impl Reconstruction {
    pub fn u(&self, x: &[f64]) -> f64 {
        self.v.primal(x)
    }
}

/// `u ↦ a u(·/a)` keeps `∇u(ℝⁿ)` and multiplies λ by `a^{−(n+k)}`; on the
/// dual side it multiplies every intercept by `a`.
pub fn rescale_to_unit_lambda(v: &PiecewiseAffineConvex, lambda: f64, k: f64) -> Result<(PiecewiseAffineConvex, f64)> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Numerical(format!("cannot rescale λ = {lambda}")));
    }
    let a = lambda.powf(1.0 / (v.dim() as f64 + k));
    let mut out = v.clone();
    for c in out.intercepts.iter_mut() {
        *c *= a;
    }
    Ok((out, a))
}

/// Translates `u` so that `{u < 0}` has barycenter 0.
pub fn recenter_omega(v: &PiecewiseAffineConvex) -> Result<(PiecewiseAffineConvex, Polytope)> {
    let omega = negative_set(v)?;
    let c = omega.centroid();
    let moved = v.shifted(&c, 0.0);
    let omega = negative_set(&moved)?;
    Ok((moved, omega))
}

pub fn reconstruct(p: &Polytope, k: f64, config: &SolveConfig) -> Result<Reconstruction> {
    if !(k >= 0.0) {
        return Err(Error::InvalidInput("exponent k must be nonnegative".into()));
    }
    let bary = p.centroid();
    if norm(&bary) > 1e-9 * p.diameter() {
        return Err(Error::Refused(format!(
            "P has barycenter {bary:?}; the reconstruction problem is solvable if and only if the barycenter is 0"
        )));
    }
    let w = WeightedDomain::uniform(p.clone())?;
    let result = minimize_energy(config, &StructuralPair::eigenvalue(k), &w)?;
    let lambda_raw = result.report.lambda.ok_or_else(|| Error::Numerical("λ undefined at the minimizer".into()))?;
    let (scaled, scale) = rescale_to_unit_lambda(&result.v, lambda_raw, k)?;
    let (v, omega) = recenter_omega(&scaled)?;
    let lambda = lambda_raw * scale.powf(-(p.dim as f64 + k));
    Ok(Reconstruction { result, lambda_raw, scale, v, omega, lambda })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentityMode {
    /// `Λ J(v) = n + deg F` for `F` and `G` homogeneous.
    Homogeneous,
    /// `I(v) = |Ω| H / (Λ|P| − H a)` for `F = (e^{as}−1)/a`, `G = s`.
    Exponential,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentityReport {
    pub mode: IdentityMode,
    pub expected: f64,
    pub actual: f64,
    pub relative: f64,
}

/// Checks the integral identity matching the pair at an evaluated solve.
pub fn identity_check(report: &EnergyReport, mode: IdentityMode, pair: &StructuralPair, w: &WeightedDomain) -> Result<IdentityReport> {
    let n = w.dim() as f64;
    let lam = report.big_lambda;
    let (expected, actual) = match mode {
        IdentityMode::Homogeneous => {
            let deg = pair.f.degree().ok_or_else(|| Error::InvalidInput("homogeneous identity needs F = s^{k}/k".into()))?;
            if !matches!(pair.g, GSpec::Linear | GSpec::NegPower { .. }) || pair.g_offset != 0.0 {
                return Err(Error::InvalidInput("homogeneous identity needs a homogeneous G".into()));
            }
            let j = report.j.ok_or_else(|| Error::Numerical("J diverges".into()))?;
            (n + deg, lam * j)
        }
        IdentityMode::Exponential => {
            let FSpec::Exponential { a } = pair.f else {
                return Err(Error::InvalidInput("exponential identity needs F = (e^{as}−1)/a".into()));
            };
            if !pair.is_linear_g() {
                return Err(Error::InvalidInput("exponential identity needs G = s".into()));
            }
            let h = report.mass;
            let denom = lam * w.polytope.volume() - h * a;
            if !(denom > 0.0) {
                return Err(Error::HypothesisViolation(format!("identity undefined: Λ|P| ≤ H a (Λ = {lam} too small)")));
            }
            (report.omega_volume * h / denom, report.i)
        }
    };
    Ok(IdentityReport { mode, expected, actual, relative: (actual - expected).abs() / expected.abs() })
}
