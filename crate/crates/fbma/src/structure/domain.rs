//! Weighted slope domains `(P, h)`: mass, vanishing order and doubling.

use crate::convex_core::polytope::{dot, norm, Polytope};
use crate::convex_core::quadrature::{compensated_sum, IntervalRule, QuadratureGrid};
use crate::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Curvature data for the prescribed-curvature density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurvatureSpec {
    Constant { value: f64 },
    /// `K(y) = base + amp · exp(−|y − center|²/width²)`.
    Bump { base: f64, amp: f64, width: f64, center: Vec<f64> },
}

impl CurvatureSpec {
    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            CurvatureSpec::Constant { value } => *value,
            CurvatureSpec::Bump { base, amp, width, center } => {
                let d2: f64 = y.iter().zip(center.iter().chain(std::iter::repeat(&0.0))).map(|(a, b)| (a - b).powi(2)).sum();
                base + amp * (-d2 / (width * width)).exp()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Density {
    Uniform,
    /// `h = d(y, ∂P)^α`.
    BoundaryPower { alpha: f64 },
    /// `h = 1 + ⟨b, y⟩`.
    Affine { slope: Vec<f64> },
    /// `h = 1 / (K(y) (1 + |y|²)^{(n+2)/2})`. With a rotation `R` of the
    /// sphere, `K` is read at `s(Rᵀ s⁻¹(y))`, the slope the point had before
    /// the cap was rotated.
    Curvature {
        curvature: CurvatureSpec,
        #[serde(default)]
        rotation: Option<Vec<Vec<f64>>>,
    },
}

/// `s(Rᵀ s⁻¹(y))`, where `s⁻¹(y) = (y, 1)/√(1+|y|²)` and `s` is the radial
/// projection back to the plane `{x_{n+1} = 1}`; `None` below the equator.
pub fn unrotate_slope(rotation: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let n = y.len();
    let scale = (1.0 + dot(y, y)).sqrt();
    let xi: Vec<f64> = y.iter().copied().chain(std::iter::once(1.0)).map(|c| c / scale).collect();
    let zeta: Vec<f64> = (0..=n).map(|j| (0..=n).map(|i| rotation[i][j] * xi[i]).sum()).collect();
    (zeta[n] > 0.0).then(|| zeta[..n].iter().map(|c| c / zeta[n]).collect())
}

impl Density {
    pub fn eval(&self, p: &Polytope, y: &[f64]) -> f64 {
        match self {
            Density::Uniform => 1.0,
            Density::BoundaryPower { alpha } => p.boundary_distance(y).max(0.0).powf(*alpha),
            Density::Affine { slope } => 1.0 + dot(slope, y),
            Density::Curvature { curvature, rotation } => {
                let n = y.len() as f64;
                let k = match rotation {
                    None => curvature.eval(y),
                    Some(r) => match unrotate_slope(r, y) {
                        Some(y0) => curvature.eval(&y0),
                        None => f64::NAN,
                    },
                };
                1.0 / (k * (1.0 + dot(y, y)).powf(0.5 * (n + 2.0)))
            }
        }
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, Density::Uniform)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VanishingCertificate {
    pub order: f64,
    /// Half-angle of the certifying cone.
    pub aperture: f64,
    pub constant: f64,
    pub delta: f64,
    pub boundary_points: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum VanishingOutcome {
    Certified(VanishingCertificate),
    Counterexample { point: Vec<f64>, boundary_point: Vec<f64>, log_slope: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightedDomain {
    pub polytope: Polytope,
    pub density: Density,
    pub mass: f64,
    pub vanishing: Option<VanishingCertificate>,
    pub doubling_estimate: Option<f64>,
}

impl WeightedDomain {
    pub fn new(polytope: Polytope, density: Density) -> Result<Self> {
        let grid = QuadratureGrid::over_polytope(&polytope, 8, 2, &|y| density.eval(&polytope, y))?;
        if grid.density.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
            return Err(Error::DegenerateDensity("density negative or non-finite on P".into()));
        }
        let mass = compensated_sum(grid.weights.iter().zip(&grid.density).map(|(w, h)| w * h));
        if !(mass > 1e-12 * polytope.volume()) {
            return Err(Error::DegenerateDensity(format!("total mass {mass}")));
        }
        Ok(Self { polytope, density, mass, vanishing: None, doubling_estimate: None })
    }

    pub fn uniform(polytope: Polytope) -> Result<Self> {
        Self::new(polytope, Density::Uniform)
    }

    pub fn dim(&self) -> usize {
        self.polytope.dim
    }

    pub fn h(&self, y: &[f64]) -> f64 {
        self.density.eval(&self.polytope, y)
    }

    /// `h` extended by zero outside `P̄`.
    pub fn h_extended(&self, y: &[f64]) -> f64 {
        if self.polytope.contains(y, 1e-14) {
            self.h(y)
        } else {
            0.0
        }
    }

    pub fn barycenter(&self) -> Result<Vec<f64>> {
        crate::convex_core::piecewise::h_barycenter(&self.polytope, &|y| self.h(y), 8, 2)
    }
}

/// Points spread along `∂P`.
pub fn boundary_samples(p: &Polytope, count: usize) -> Vec<Vec<f64>> {
    match p.dim {
        1 => vec![p.vertices[0].clone(), p.vertices[1].clone()],
        2 => {
            let m = p.vertices.len();
            let lens: Vec<f64> = (0..m)
                .map(|k| {
                    let a = &p.vertices[k];
                    let b = &p.vertices[(k + 1) % m];
                    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
                })
                .collect();
            let per: f64 = lens.iter().sum();
            (0..count)
                .map(|j| {
                    let mut t = per * j as f64 / count as f64;
                    let mut k = 0;
                    while t > lens[k] && k + 1 < m {
                        t -= lens[k];
                        k += 1;
                    }
                    let a = &p.vertices[k];
                    let b = &p.vertices[(k + 1) % m];
                    let s = (t / lens[k]).clamp(0.0, 1.0);
                    vec![a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
                })
                .collect()
        }
        _ => p.vertices.clone(),
    }
}

/// Checks `h ≥ C⁻¹ d(y, y₀)^{v_o}` in cones based at boundary points.
pub fn vanishing_order_check(w: &WeightedDomain, claimed: f64) -> Result<VanishingOutcome> {
    if !claimed.is_finite() || claimed < 0.0 {
        return Err(Error::InvalidInput("claimed vanishing order must be finite and ≥ 0".into()));
    }
    let p = &w.polytope;
    let c = p.centroid();
    let r = p.boundary_distance(&c);
    let mut min_ratio = f64::INFINITY;
    let mut aperture = f64::INFINITY;
    let mut delta = f64::INFINITY;
    let pts = boundary_samples(p, 64);
    for y0 in &pts {
        let axis: Vec<f64> = c.iter().zip(y0).map(|(a, b)| a - b).collect();
        let len = norm(&axis);
        let axis: Vec<f64> = axis.iter().map(|a| a / len).collect();
        // the cone over the inscribed ball at c fits inside P
        let theta = 0.9 * (r / len).min(1.0).asin();
        let reach = 0.5 * len;
        aperture = aperture.min(theta);
        delta = delta.min(reach);
        let dirs: Vec<Vec<f64>> = match p.dim {
            1 => vec![axis.clone()],
            _ => [-1.0, -0.5, 0.0, 0.5, 1.0]
                .iter()
                .map(|f| {
                    let a = f * theta;
                    vec![axis[0] * a.cos() - axis[1] * a.sin(), axis[0] * a.sin() + axis[1] * a.cos()]
                })
                .collect(),
        };
        for d in &dirs {
            let ts: Vec<f64> = (0..10).map(|k| reach * 10f64.powi(-k)).collect();
            let ratios: Vec<f64> = ts
                .iter()
                .map(|&t| {
                    let y: Vec<f64> = y0.iter().zip(d).map(|(a, b)| a + t * b).collect();
                    w.h(&y) / t.powf(claimed)
                })
                .collect();
            let last = ratios.len() - 1;
            if ratios.iter().any(|r| !(*r > 0.0)) {
                let k = ratios.iter().position(|r| !(*r > 0.0)).unwrap();
                let y: Vec<f64> = y0.iter().zip(d).map(|(a, b)| a + ts[k] * b).collect();
                return Ok(VanishingOutcome::Counterexample { point: y, boundary_point: y0.clone(), log_slope: f64::INFINITY });
            }
            let sl = (ratios[last - 3].ln() - ratios[last].ln()) / (ts[last - 3].ln() - ts[last].ln());
            if sl > 0.05 {
                let y: Vec<f64> = y0.iter().zip(d).map(|(a, b)| a + ts[last] * b).collect();
                return Ok(VanishingOutcome::Counterexample { point: y, boundary_point: y0.clone(), log_slope: sl });
            }
            min_ratio = min_ratio.min(ratios.iter().copied().fold(f64::INFINITY, f64::min));
        }
    }
    Ok(VanishingOutcome::Certified(VanishingCertificate {
        order: claimed,
        aperture,
        constant: 1.0 / min_ratio,
        delta,
        boundary_points: pts.len(),
    }))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DoublingReport {
    pub max_ratio: f64,
    pub worst_center: Vec<f64>,
    pub worst_axes: Vec<f64>,
    pub trials: usize,
}

/// `∫_{y₀+E} h` by polar quadrature on the unit ball pulled back through `E`.
fn ellipsoid_mass(w: &WeightedDomain, y0: &[f64], rot: f64, axes: &[f64]) -> f64 {
    let rule = IntervalRule::new(12);
    match w.dim() {
        1 => {
            let a = axes[0];
            let mut acc = 0.0;
            for half in [-1.0, 1.0] {
                // integrate over [0, a] in each direction, split for the kink at ∂P
                for seg in 0..8 {
                    let lo = a * seg as f64 / 8.0;
                    let hi = a * (seg + 1) as f64 / 8.0;
                    for (x, wt) in rule.x.iter().zip(&rule.w) {
                        let t = lo + x * (hi - lo);
                        acc += wt * (hi - lo) * w.h_extended(&[y0[0] + half * t]);
                    }
                }
            }
            acc
        }
        2 => {
            let (c, s) = (rot.cos(), rot.sin());
            let nth = 128;
            let mut acc = 0.0;
            for k in 0..nth {
                let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / nth as f64;
                let z = [th.cos(), th.sin()];
                for seg in 0..8 {
                    let lo = seg as f64 / 8.0;
                    let hi = (seg + 1) as f64 / 8.0;
                    for (x, wt) in rule.x.iter().zip(&rule.w) {
                        let rr = lo + x * (hi - lo);
                        let e = [axes[0] * rr * z[0], axes[1] * rr * z[1]];
                        let y = [y0[0] + c * e[0] - s * e[1], y0[1] + s * e[0] + c * e[1]];
                        acc += wt * (hi - lo) * rr * w.h_extended(&y);
                    }
                }
            }
            acc * 2.0 * std::f64::consts::PI / nth as f64 * axes[0] * axes[1]
        }
        n => return f64::from(n as u32) * f64::NAN,
    }
}

pub fn doubling_check(w: &WeightedDomain, trials: usize, seed: u64) -> Result<DoublingReport> {
    if trials == 0 {
        return Err(Error::InvalidInput("need at least one trial".into()));
    }
    let n = w.dim();
    if n > 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = &w.polytope;
    let lo: Vec<f64> = (0..n).map(|d| p.vertices.iter().map(|v| v[d]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..n).map(|d| p.vertices.iter().map(|v| v[d]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let diam = p.diameter();
    let mut report = DoublingReport { max_ratio: 0.0, worst_center: vec![], worst_axes: vec![], trials };
    for _ in 0..trials {
        let y0 = loop {
            let y: Vec<f64> = (0..n).map(|d| rng.gen_range(lo[d]..=hi[d])).collect();
            if p.contains(&y, 1e-12) {
                break y;
            }
        };
        let rot = rng.gen_range(0.0..std::f64::consts::PI);
        let axes: Vec<f64> = (0..n).map(|_| diam * rng.gen_range(0.02..1.0)).collect();
        let half: Vec<f64> = axes.iter().map(|a| 0.5 * a).collect();
        let num = ellipsoid_mass(w, &y0, rot, &axes);
        let den = ellipsoid_mass(w, &y0, rot, &half);
        if !(den > 0.0) {
            return Err(Error::DegenerateDensity(format!("zero mass in half ellipsoid at center {y0:?} with axes {half:?}")));
        }
        let ratio = num / den;
        if ratio > report.max_ratio {
            report.max_ratio = ratio;
            report.worst_center = y0;
            report.worst_axes = axes;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_density_has_order_zero() {
        let w = WeightedDomain::uniform(Polytope::cube(2, 1.0).unwrap()).unwrap();
        assert!((w.mass - 4.0).abs() < 1e-12);
        assert!(matches!(vanishing_order_check(&w, 0.0).unwrap(), VanishingOutcome::Certified(_)));
    }

    #[test]
    fn boundary_power_certified_at_alpha_only() {
        let alpha = 1.5;
        let w = WeightedDomain::new(Polytope::cube(2, 1.0).unwrap(), Density::BoundaryPower { alpha }).unwrap();
        assert!(matches!(vanishing_order_check(&w, alpha).unwrap(), VanishingOutcome::Certified(_)));
        match vanishing_order_check(&w, alpha / 2.0).unwrap() {
            VanishingOutcome::Counterexample { log_slope, .. } => assert!((log_slope - alpha / 2.0).abs() < 0.05),
            other => panic!("expected counterexample, got {other:?}"),
        }
    }

    #[test]
    fn doubling_ratio_inside_square_is_four() {
        let w = WeightedDomain::uniform(Polytope::cube(2, 10.0).unwrap()).unwrap();
        // small ellipsoids near the center stay inside
        let m1 = ellipsoid_mass(&w, &[0.0, 0.0], 0.3, &[1.0, 2.0]);
        let m2 = ellipsoid_mass(&w, &[0.0, 0.0], 0.3, &[0.5, 1.0]);
        assert!((m1 / m2 - 4.0).abs() < 1e-10);
        assert!((m1 - 2.0 * std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn doubling_ratio_at_corner_is_bounded() {
        let w = WeightedDomain::uniform(Polytope::cube(2, 1.0).unwrap()).unwrap();
        let r = doubling_check(&w, 20, 7).unwrap();
        assert!(r.max_ratio >= 2.0 && r.max_ratio < 4.0 * 4.0);
    }
}
