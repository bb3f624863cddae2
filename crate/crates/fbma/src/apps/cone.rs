//! Homogeneous optimal transport between a cone over `P` and a half-space.
//!
//! A solution `v` of the link equation on `P` lifts to
//! `φ(t y′, t) = (t v(y′))^{1+γ}` with `γ = (n+1+α)/(n+1+β)`, which solves
//! `φ_{n+1}^β det D²φ = C ρ^α` on the cone.

use super::smooth::{fd_derivatives, fit_quadratic};
use crate::convex_core::complex::CellComplex;
use crate::convex_core::piecewise::PiecewiseAffineConvex;
use crate::convex_core::polytope::Polytope;
use crate::solver::{minimize_energy, SolveConfig, SolveResult};
use crate::structure::domain::{Density, WeightedDomain};
use crate::structure::pair::StructuralPair;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub fn cone_exponent(n: usize, alpha: f64, beta: f64) -> f64 {
    (n as f64 + 1.0 + alpha) / (n as f64 + 1.0 + beta)
}

#[derive(Clone, Debug)]
pub struct ConeLift {
    pub v: PiecewiseAffineConvex,
    pub polytope: Polytope,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    complex: CellComplex,
}

impl ConeLift {
    pub fn new(v: PiecewiseAffineConvex, polytope: Polytope, alpha: f64, beta: f64) -> Result<Self> {
        let complex = v.complex()?;
        let gamma = cone_exponent(v.dim(), alpha, beta);
        Ok(Self { v, polytope, alpha, beta, gamma, complex })
    }

    pub fn degree(&self) -> f64 {
        1.0 + self.gamma
    }

    /// `φ(z)` for `z = (t y′, t)` with `t > 0` and `y′ ∈ P`.
    pub fn phi(&self, z: &[f64]) -> Option<f64> {
        let n = self.v.dim();
        let t = z[n];
        if !(t > 0.0) {
            return None;
        }
        let y: Vec<f64> = z[..n].iter().map(|c| c / t).collect();
        if !self.polytope.contains(&y, 1e-12) {
            return None;
        }
        Some((t * self.complex.dual_value(&y)).powf(1.0 + self.gamma))
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LiftOptions {
    pub samples: usize,
    pub seed: u64,
    /// Relative tolerance on `φ_{n+1}^β det D²φ / ρ^α` against its median.
    pub tol: f64,
    /// Sample `y′` only in `P` shrunk by this factor about its centroid.
    pub interior: f64,
    /// Half-width of the quadratic stencil for `v`, relative to `diam P`.
    pub fit_radius: f64,
}

impl Default for LiftOptions {
    fn default() -> Self {
        Self { samples: 200, seed: 0, tol: 0.05, interior: 0.7, fit_radius: 0.08 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConeLiftReport {
    pub gamma: f64,
    pub degree: f64,
    /// Worst `|φ(tz) − t^{1+γ}φ(z)| / |t^{1+γ}φ(z)|` over samples and `t`.
    pub homogeneity_error: f64,
    /// Median of `φ_{n+1}^β det D²φ / ρ^α`, the constant of the equation.
    pub constant: f64,
    /// Relative deviations from the constant at the samples.
    pub deviations: Vec<f64>,
    pub fraction_within_tol: f64,
    /// Fraction of samples with `φ_{n+1} > 0`.
    pub half_space_fraction: f64,
    pub samples: Vec<Vec<f64>>,
}

fn random_point(p: &Polytope, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = p.dim;
    let lo: Vec<f64> = (0..n).map(|d| p.vertices.iter().map(|v| v[d]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..n).map(|d| p.vertices.iter().map(|v| v[d]).fold(f64::NEG_INFINITY, f64::max)).collect();
    loop {
        let y: Vec<f64> = (0..n).map(|d| rng.gen_range(lo[d]..hi[d])).collect();
        if p.contains(&y, 0.0) {
            return y;
        }
    }
}

/// Checks homogeneity, the cone equation and the gradient image of a lift.
pub fn verify_lift(lift: &ConeLift, h: &dyn Fn(&[f64]) -> f64, opts: &LiftOptions) -> Result<ConeLiftReport> {
    let n = lift.v.dim();
    let p = &lift.polytope;
    let c = p.centroid();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let radius = opts.fit_radius * p.diameter();
    let k = if n == 1 { 80 } else { 16 };
    let (beta, alpha, deg) = (lift.beta, lift.alpha, lift.degree());

    let mut samples = Vec::new();
    let mut ratios = Vec::new();
    let mut homogeneity = 0.0f64;
    let mut upward = 0usize;
    for _ in 0..opts.samples {
        let y0 = random_point(p, &mut rng);
        let y: Vec<f64> = y0.iter().zip(&c).map(|(a, b)| b + opts.interior * (a - b)).collect();
        let t = rng.gen_range(0.5..2.0);
        let mut z: Vec<f64> = y.iter().map(|v| t * v).collect();
        z.push(t);
        let Some(phi_z) = lift.phi(&z) else { continue };
        for s in [0.5, 2.0, 3.0] {
            let zs: Vec<f64> = z.iter().map(|v| s * v).collect();
            if let Some(val) = lift.phi(&zs) {
                let want = s.powf(deg) * phi_z;
                homogeneity = homogeneity.max((val - want).abs() / want.abs().max(1e-300));
            }
        }
        let vfun = |q: &[f64]| p.contains(q, 1e-12).then(|| lift.complex.dual_value(q));
        let Some(fit) = fit_quadratic(&vfun, &y, radius, k) else { continue };
        let smooth_phi = |w: &[f64]| {
            let yy: Vec<f64> = w[..n].iter().map(|v| v / w[n]).collect();
            (w[n] * fit.eval(&yy)).powf(deg)
        };
        let (grad, hess) = fd_derivatives(&smooth_phi, &z, 1e-4 * t);
        let phi_last = grad[n];
        if phi_last > 0.0 {
            upward += 1;
        }
        let rho_alpha = if alpha == 0.0 { 1.0 } else { t.powf(alpha) * h(&y) };
        ratios.push(phi_last.max(0.0).powf(beta) * hess.determinant() / rho_alpha);
        samples.push(z);
    }
    if ratios.is_empty() {
        return Err(Error::Numerical("no interior sample admitted a stencil".into()));
    }
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let constant = sorted[sorted.len() / 2];
    let deviations: Vec<f64> = ratios.iter().map(|r| (r / constant - 1.0).abs()).collect();
    let ok = deviations.iter().filter(|d| **d <= opts.tol).count();
    Ok(ConeLiftReport {
        gamma: lift.gamma,
        degree: deg,
        homogeneity_error: homogeneity,
        constant,
        fraction_within_tol: ok as f64 / deviations.len() as f64,
        deviations,
        half_space_fraction: upward as f64 / samples.len() as f64,
        samples,
    })
}

/// Solves the link equation for `h ~ d^α` on `P` and lifts the result.
pub fn ot_cone_lift(p: &Polytope, alpha: f64, beta: f64, config: &SolveConfig, opts: &LiftOptions) -> Result<(ConeLift, SolveResult, ConeLiftReport)> {
    if !(alpha >= 0.0 && beta > alpha) {
        return Err(Error::Refused(format!("the cone lift needs β > α ≥ 0, got α = {alpha}, β = {beta}")));
    }
    if !p.contains(&vec![0.0; p.dim], -1e-12) {
        return Err(Error::HypothesisViolation("0 must be an interior point of P".into()));
    }
    let density = if alpha == 0.0 { Density::Uniform } else { Density::BoundaryPower { alpha } };
    let w = WeightedDomain::new(p.clone(), density)?;
    let pair = StructuralPair::transport(p.dim, alpha, beta);
    let result = minimize_energy(config, &pair, &w)?;
    let lift = ConeLift::new(result.v.clone(), p.clone(), alpha, beta)?;
    let report = verify_lift(&lift, &|y| w.h(y), opts)?;
    Ok((lift, result, report))
}
