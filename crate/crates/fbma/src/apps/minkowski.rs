//! Hemispherical Minkowski problem: a graph `Σ = graph(−u)` over `Ω` with
//! boundary on a hyperplane, Gauss image `s⁻¹(P)` and Gauss curvature
//! `K(s(ν_Σ))`.
//!
//! Slopes `y ∈ P` correspond to sphere points `s⁻¹(y) = (y, 1)/√(1+|y|²)`.
//! The solve uses `f ≡ g ≡ 1` and `h = 1/(K (1+|y|²)^{(n+2)/2})`.

use super::reconstruct::{recenter_omega, rescale_to_unit_lambda};
use super::smooth::fit_quadratic;
use crate::convex_core::piecewise::PiecewiseAffineConvex;
use crate::convex_core::polytope::{dot, norm, Polytope};
use crate::convex_core::quadrature::{compensated_sum, QuadratureGrid};
use crate::solver::{minimize_energy, SolveConfig, SolveResult};
use crate::structure::domain::{unrotate_slope, CurvatureSpec, Density, WeightedDomain};
use crate::structure::pair::StructuralPair;
use crate::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinkowskiInstance {
    pub polytope: Polytope,
    pub curvature: CurvatureSpec,
    /// Rotation of the sphere applied to the cap `s⁻¹(P)`; `polytope` is
    /// then the projection of the rotated cap.
    #[serde(default)]
    pub rotation: Option<Vec<Vec<f64>>>,
}

impl MinkowskiInstance {
    /// `K` at a slope of the (possibly rotated) instance.
    pub fn curvature_at(&self, y: &[f64]) -> f64 {
        match &self.rotation {
            None => self.curvature.eval(y),
            Some(r) => unrotate_slope(r, y).map_or(f64::NAN, |y0| self.curvature.eval(&y0)),
        }
    }

    pub fn density(&self) -> Density {
        Density::Curvature { curvature: self.curvature.clone(), rotation: self.rotation.clone() }
    }
}

/// Which weighted barycenter of the cap is driven to the north pole.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BarycenterConvention {
    /// Weight `K(ξ) ξ_{n+1}^{−2(n+2)} dσ`, i.e. `∫ y K (1+|y|²)^{(n+2)/2} dy = 0`.
    CurvatureWeighted,
    /// Weight `dσ/K`, i.e. the `h`-barycenter `∫ y h dy = 0` of the solve.
    Density,
}

pub fn sphere_point(y: &[f64]) -> Vec<f64> {
    let s = (1.0 + dot(y, y)).sqrt();
    y.iter().copied().chain(std::iter::once(1.0)).map(|c| c / s).collect()
}

pub fn project(x: &[f64]) -> Vec<f64> {
    let n = x.len() - 1;
    x[..n].iter().map(|c| c / x[n]).collect()
}

fn apply(r: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    r.iter().map(|row| dot(row, x)).collect()
}

/// Rotation taking the unit vector `a` to the north pole along the geodesic.
pub fn rotation_to_pole(a: &[f64]) -> Vec<Vec<f64>> {
    let m = a.len();
    let c = a[m - 1];
    let mut r = vec![vec![0.0; m]; m];
    for (i, row) in r.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    if c >= 1.0 - 1e-15 {
        return r;
    }
    // R = I + (b aᵀ − a bᵀ) + (b aᵀ − a bᵀ)² / (1 + c) with b = e_{n+1}.
    let b: Vec<f64> = (0..m).map(|i| if i == m - 1 { 1.0 } else { 0.0 }).collect();
    let k = DMatrix::from_fn(m, m, |i, j| b[i] * a[j] - a[i] * b[j]);
    let k2 = &k * &k;
    for i in 0..m {
        for j in 0..m {
            r[i][j] += k[(i, j)] + k2[(i, j)] / (1.0 + c);
        }
    }
    r
}

/// Largest geodesic distance between vertices of the cap `s⁻¹(P)`.
pub fn cap_diameter(p: &Polytope) -> f64 {
    let pts: Vec<Vec<f64>> = p.vertices.iter().map(|v| sphere_point(v)).collect();
    let mut d = 0.0f64;
    for i in 0..pts.len() {
        for j in 0..i {
            d = d.max(dot(&pts[i], &pts[j]).clamp(-1.0, 1.0).acos());
        }
    }
    d
}

/// `s(ξ_R)` where `ξ_R` is the weighted barycenter of the rotated cap `R s⁻¹(P)`.
pub fn rotated_barycenter(grid: &QuadratureGrid, r: &[Vec<f64>], convention: BarycenterConvention, n: usize) -> Vec<f64> {
    let mut acc = vec![Vec::with_capacity(grid.points.len()); n + 1];
    for ((y, w), k) in grid.points.iter().zip(&grid.weights).zip(&grid.density) {
        // dσ = (1+|y|²)^{−(n+1)/2} dy, and `density` holds K(y).
        let dsigma = w * (1.0 + dot(y, y)).powf(-0.5 * (n as f64 + 1.0));
        let xi = apply(r, &sphere_point(y));
        let weight = match convention {
            BarycenterConvention::CurvatureWeighted => k * xi[n].powi(-2 * (n as i32 + 2)),
            BarycenterConvention::Density => 1.0 / k,
        } * dsigma;
        for (d, a) in acc.iter_mut().enumerate() {
            a.push(xi[d] * weight);
        }
    }
    let total: Vec<f64> = acc.into_iter().map(compensated_sum).collect();
    project(&total)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Recentered {
    /// Cap point sent to the north pole, and its slope `s(η)`.
    pub eta: Vec<f64>,
    pub eta_slope: Vec<f64>,
    pub rotation: Vec<Vec<f64>>,
    /// `|b_η|` after the search.
    pub residual: f64,
    pub iterations: usize,
    pub instance: MinkowskiInstance,
}

/// Finds a rotation `R_η` of the cap after which the chosen barycenter sits
/// at the north pole: a grid over `P` followed by Newton steps on `s(η)`.
pub fn spherical_recenter(p: &Polytope, curvature: &CurvatureSpec, convention: BarycenterConvention, tol: f64) -> Result<Recentered> {
    let n = p.dim;
    let diam = cap_diameter(p);
    if !(diam < std::f64::consts::FRAC_PI_2) {
        return Err(Error::HypothesisViolation(format!("spherical diameter {diam:.4} of the cap is not below π/2")));
    }
    let grid = QuadratureGrid::over_polytope(p, 8, 3, &|y| curvature.eval(y))?;
    if grid.density.iter().any(|k| !(*k > 0.0)) {
        return Err(Error::InvalidInput("K must be positive on P".into()));
    }
    let b_of = |y: &[f64]| -> Vec<f64> { rotated_barycenter(&grid, &rotation_to_pole(&sphere_point(y)), convention, n) };

    let lo: Vec<f64> = (0..n).map(|d| p.vertices.iter().map(|v| v[d]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..n).map(|d| p.vertices.iter().map(|v| v[d]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let side = 21usize;
    let mut best = (f64::INFINITY, p.centroid());
    for idx in 0..side.pow(n as u32) {
        let mut rem = idx;
        let y: Vec<f64> = (0..n)
            .map(|d| {
                let t = (rem % side) as f64 / (side - 1) as f64;
                rem /= side;
                lo[d] + t * (hi[d] - lo[d])
            })
            .collect();
        if !p.contains(&y, 0.0) {
            continue;
        }
        let r = norm(&b_of(&y));
        if r < best.0 {
            best = (r, y);
        }
    }
    let (mut res, mut y) = best;
    let mut iterations = 0;
    while res > tol && iterations < 50 {
        iterations += 1;
        let b = b_of(&y);
        let e = 1e-7;
        let jac = DMatrix::from_fn(n, n, |i, j| {
            let mut yp = y.clone();
            yp[j] += e;
            (b_of(&yp)[i] - b[i]) / e
        });
        let Some(inv) = jac.try_inverse() else { break };
        let step = inv * nalgebra::DVector::from_column_slice(&b);
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-8 {
            let yn: Vec<f64> = y.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            let rn = norm(&b_of(&yn));
            if rn < res {
                y = yn;
                res = rn;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if res > tol {
        return Err(Error::Numerical(format!("recentering stalled at |b| = {res:.3e}")));
    }
    let eta = sphere_point(&y);
    let rotation = rotation_to_pole(&eta);
    let vertices: Vec<Vec<f64>> = p.vertices.iter().map(|v| project(&apply(&rotation, &sphere_point(v)))).collect();
    let polytope = Polytope::new(vertices)?;
    Ok(Recentered {
        eta,
        eta_slope: y,
        rotation: rotation.clone(),
        residual: res,
        iterations,
        instance: MinkowskiInstance { polytope, curvature: curvature.clone(), rotation: Some(rotation) },
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvatureSample {
    pub x: Vec<f64>,
    pub slope: Vec<f64>,
    pub k_sigma: f64,
    pub k_target: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MinkowskiReport {
    /// `∫ y K (1+|y|²)^{(n+2)/2} dy`, normalized by its mass.
    pub curvature_barycenter: Vec<f64>,
    /// `∫ y h dy / H`.
    pub density_barycenter: Vec<f64>,
    pub lambda_raw: f64,
    pub scale: f64,
    pub samples: Vec<CurvatureSample>,
    pub max_relative_error: f64,
    pub fraction_within_tol: f64,
    /// Smallest signed distance of a sampled gradient to `∂P`.
    pub gauss_image_margin: f64,
    /// Points `(x, −u(x))` of `Σ`.
    pub surface: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurvatureCheck {
    pub tol: f64,
    /// Sample points on a grid inside `Ω` shrunk by this factor.
    pub interior: f64,
    /// Stencil half-width relative to `diam Ω`.
    pub fit_radius: f64,
    pub grid: usize,
}

impl Default for CurvatureCheck {
    fn default() -> Self {
        Self { tol: 0.05, interior: 0.6, fit_radius: 0.2, grid: 9 }
    }
}

fn weighted_barycenter(p: &Polytope, weight: &dyn Fn(&[f64]) -> f64) -> Result<Vec<f64>> {
    crate::convex_core::piecewise::h_barycenter(p, weight, 8, 2)
}

/// Solves the instance, scales λ to 1 and measures the Gauss curvature of `Σ`.
pub fn minkowski_solve(inst: &MinkowskiInstance, config: &SolveConfig, check: &CurvatureCheck) -> Result<(SolveResult, PiecewiseAffineConvex, MinkowskiReport)> {
    let p = &inst.polytope;
    let n = p.dim;
    let nf = n as f64;
    let w = WeightedDomain::new(p.clone(), inst.density())?;
    let curvature_barycenter = weighted_barycenter(p, &|y| inst.curvature_at(y) * (1.0 + dot(y, y)).powf(0.5 * (nf + 2.0)))?;
    let density_barycenter = w.barycenter()?;
    let result = match minimize_energy(config, &StructuralPair::eigenvalue(0.0), &w) {
        Err(Error::Refused(m)) => {
            return Err(Error::Refused(format!(
                "{m}; h-barycenter {density_barycenter:?}, curvature-weighted barycenter {curvature_barycenter:?}"
            )))
        }
        r => r?,
    };
    let lambda_raw = result.report.lambda.ok_or_else(|| Error::Numerical("λ undefined".into()))?;
    let (scaled, scale) = rescale_to_unit_lambda(&result.v, lambda_raw, 0.0)?;
    let (v, omega) = recenter_omega(&scaled)?;

    let c = omega.centroid();
    let radius = check.fit_radius * omega.diameter();
    let k = if n == 1 { 80 } else { 16 };
    let ufun = |x: &[f64]| Some(v.primal(x));
    let lo: Vec<f64> = (0..n).map(|d| omega.vertices.iter().map(|q| q[d]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..n).map(|d| omega.vertices.iter().map(|q| q[d]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let mut samples = Vec::new();
    let mut surface = Vec::new();
    let side = check.grid.max(2);
    let fine = 4 * side;
    for idx in 0..fine.pow(n as u32) {
        let mut rem = idx;
        let x: Vec<f64> = (0..n)
            .map(|d| {
                let t = (rem % fine) as f64 / (fine - 1) as f64;
                rem /= fine;
                lo[d] + t * (hi[d] - lo[d])
            })
            .collect();
        if omega.contains(&x, 0.0) {
            let mut pt = x.clone();
            pt.push(-v.primal(&x));
            surface.push(pt);
        }
    }
    for idx in 0..side.pow(n as u32) {
        let mut rem = idx;
        let x: Vec<f64> = (0..n)
            .map(|d| {
                let t = (rem % side) as f64 / (side - 1) as f64;
                rem /= side;
                c[d] + check.interior * (lo[d] + t * (hi[d] - lo[d]) - c[d])
            })
            .collect();
        let shrunk: Vec<f64> = x.iter().zip(&c).map(|(a, b)| b + (a - b) / check.interior).collect();
        if !omega.contains(&shrunk, 0.0) {
            continue;
        }
        let Some(fit) = fit_quadratic(&ufun, &x, radius, k) else { continue };
        let g = fit.gradient.clone();
        let k_sigma = fit.hessian.determinant() / (1.0 + dot(&g, &g)).powf(0.5 * (nf + 2.0));
        samples.push(CurvatureSample { k_target: inst.curvature_at(&g), x, slope: g, k_sigma });
    }
    if samples.is_empty() {
        return Err(Error::Numerical("no interior curvature sample".into()));
    }
    let errs: Vec<f64> = samples.iter().map(|s| (s.k_sigma / s.k_target - 1.0).abs()).collect();
    let max_relative_error = errs.iter().fold(0.0f64, |m, e| m.max(*e));
    let fraction_within_tol = errs.iter().filter(|e| **e <= check.tol).count() as f64 / errs.len() as f64;
    let gauss_image_margin = samples.iter().map(|s| p.boundary_distance(&s.slope)).fold(f64::INFINITY, f64::min);
    Ok((
        result,
        v,
        MinkowskiReport {
            curvature_barycenter,
            density_barycenter,
            lambda_raw,
            scale,
            samples,
            max_relative_error,
            fraction_within_tol,
            gauss_image_margin,
            surface,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation_about_x(theta: f64) -> Vec<Vec<f64>> {
        let (s, c) = theta.sin_cos();
        vec![vec![1.0, 0.0, 0.0], vec![0.0, c, -s], vec![0.0, s, c]]
    }

    #[test]
    fn rotation_to_pole_is_orthogonal() {
        let a = sphere_point(&[0.3, -0.4]);
        let r = rotation_to_pole(&a);
        let img = apply(&r, &a);
        assert!(img[0].abs() < 1e-15 && img[1].abs() < 1e-15 && (img[2] - 1.0).abs() < 1e-15);
        let m = DMatrix::from_fn(3, 3, |i, j| r[i][j]);
        assert!((m.transpose() * &m - DMatrix::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn symmetric_cap_needs_no_rotation() {
        let p = Polytope::regular_polygon(12, 0.5, 0.0).unwrap();
        for conv in [BarycenterConvention::CurvatureWeighted, BarycenterConvention::Density] {
            let rc = spherical_recenter(&p, &CurvatureSpec::Constant { value: 1.0 }, conv, 1e-10).unwrap();
            assert!(norm(&rc.eta_slope) < 1e-8, "{:?}", rc.eta_slope);
        }
    }

    #[test]
    fn offset_cap_is_rotated_back() {
        // Cap of a regular polygon about the pole, tipped by 0.3 rad.
        let base = Polytope::regular_polygon(16, 0.4, 0.0).unwrap();
        let tip = rotation_about_x(0.3);
        let moved = Polytope::new(base.vertices.iter().map(|v| project(&apply(&tip, &sphere_point(v)))).collect()).unwrap();
        let center = apply(&tip, &[0.0, 0.0, 1.0]);
        for conv in [BarycenterConvention::CurvatureWeighted, BarycenterConvention::Density] {
            let rc = spherical_recenter(&moved, &CurvatureSpec::Constant { value: 1.0 }, conv, 1e-11).unwrap();
            let d: f64 = rc.eta.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(d < 1e-7, "{conv:?}: {:?} vs {center:?}", rc.eta);
            assert!(norm(&rc.instance.polytope.centroid()) < 1e-6);
        }
    }

    #[test]
    fn asymmetric_curvature_recenters() {
        let p = Polytope::cube(2, 0.4).unwrap();
        let k = CurvatureSpec::Bump { base: 1.0, amp: 2.0, width: 0.3, center: vec![0.2, 0.1] };
        let rc = spherical_recenter(&p, &k, BarycenterConvention::CurvatureWeighted, 1e-10).unwrap();
        assert!(rc.residual < 1e-6);
        // Dense-grid oracle: no grid point of P does better than the coarse
        // minimum by more than the Newton refinement explains.
        let grid = QuadratureGrid::over_polytope(&p, 8, 3, &|y| k.eval(y)).unwrap();
        let b = rotated_barycenter(&grid, &rc.rotation, BarycenterConvention::CurvatureWeighted, 2);
        assert!(norm(&b) < 1e-6);
        let rd = spherical_recenter(&p, &k, BarycenterConvention::Density, 1e-10).unwrap();
        let wd = WeightedDomain::new(rd.instance.polytope.clone(), rd.instance.density()).unwrap();
        assert!(norm(&wd.barycenter().unwrap()) < 1e-6, "{:?}", wd.barycenter());
    }

    #[test]
    fn wide_cap_is_rejected() {
        let p = Polytope::cube(2, 1.5).unwrap();
        assert!(matches!(
            spherical_recenter(&p, &CurvatureSpec::Constant { value: 1.0 }, BarycenterConvention::CurvatureWeighted, 1e-8),
            Err(Error::HypothesisViolation(_))
        ));
    }
}
