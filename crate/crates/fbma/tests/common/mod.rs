//! Generators and invariant checks shared by the property and acceptance suites.
#![allow(dead_code)]

use fbma::convex_core::{legendre_transform, PiecewiseAffineConvex, Polytope};
use fbma::functionals::{energy_and_gradient, Discretization, EnergyReport};
use fbma::normalize::{normalize_translation, NormalizeOptions};
use fbma::structure::{StructuralPair, WeightedDomain};

pub type Check = Result<(), String>;

pub fn interval() -> WeightedDomain {
    WeightedDomain::uniform(Polytope::interval(-1.0, 1.0).unwrap()).unwrap()
}

pub fn square() -> WeightedDomain {
    WeightedDomain::uniform(Polytope::cube(2, 1.0).unwrap()).unwrap()
}

pub fn nodes_1d(m: usize) -> Vec<Vec<f64>> {
    (0..m).map(|k| vec![-1.0 + 2.0 * k as f64 / (m - 1) as f64]).collect()
}

pub fn nodes_2d(m: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for i in 0..m {
        for j in 0..m {
            out.push(vec![-1.0 + 2.0 * i as f64 / (m - 1) as f64, -1.0 + 2.0 * j as f64 / (m - 1) as f64]);
        }
    }
    out
}

/// Positive convex data on the nodes: `base + ⟨tilt, p⟩ + curv |p|² + Σ w |p₀ − t|`.
#[derive(Clone, Debug)]
pub struct ConvexData {
    pub base: f64,
    pub tilt: [f64; 2],
    pub curv: f64,
    pub kinks: Vec<(f64, f64)>,
}

impl ConvexData {
    pub fn at(&self, p: &[f64]) -> f64 {
        let lin: f64 = p.iter().zip(&self.tilt).map(|(x, t)| x * t).sum();
        let sq: f64 = p.iter().map(|x| x * x).sum();
        let kinks: f64 = self.kinks.iter().map(|(w, t)| w * (p[0] - t).abs()).sum();
        self.base + lin + self.curv * sq + kinks
    }

    pub fn function(&self, nodes: Vec<Vec<f64>>) -> PiecewiseAffineConvex {
        let c = nodes.iter().map(|p| self.at(p)).collect();
        PiecewiseAffineConvex::new(nodes, c).unwrap()
    }

    /// `(v, W, n)` on the interval with `m` nodes, or the square with an `m×m` lattice.
    pub fn instance(&self, m: usize, two_d: bool) -> (PiecewiseAffineConvex, WeightedDomain, usize) {
        if two_d {
            (self.function(nodes_2d(m)), square(), 2)
        } else {
            (self.function(nodes_1d(m)), interval(), 1)
        }
    }
}

pub fn pair_catalog(n: usize) -> Vec<StructuralPair> {
    vec![
        StructuralPair::eigenvalue(0.0),
        StructuralPair::eigenvalue(1.0),
        StructuralPair::exponential(1.0),
        StructuralPair::transport(n, 0.0, 2.0),
    ]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The conjugate of `u` is the envelope on `P`; Fenchel-Young holds, with
/// equality at the maximizing node.
pub fn check_legendre(v: &PiecewiseAffineConvex, ys: &[Vec<f64>]) -> Check {
    let u_star = legendre_transform(v).map_err(|e| e.to_string())?;
    let cx = v.complex().map_err(|e| e.to_string())?;
    for y in ys {
        let env = cx.dual_value(y);
        if (u_star.primal(y) - env).abs() > 1e-12 * (1.0 + env.abs()) {
            return Err(format!("u* at {y:?}: {} vs envelope {env}", u_star.primal(y)));
        }
        let x: Vec<f64> = y.iter().map(|t| 0.7 * t).collect();
        let (ux, i) = v.primal_argmax(&x);
        if ux + env < dot(y, &x) - 1e-12 {
            return Err(format!("Fenchel-Young fails at x = {x:?}, y = {y:?}"));
        }
        let yi = &v.nodes[i];
        if (ux + cx.dual_value(yi) - dot(yi, &x)).abs() > 1e-12 {
            return Err(format!("Fenchel-Young equality fails at x = {x:?}"));
        }
    }
    Ok(())
}

/// Mass balance sums to one on both sides and `J` lies between the extremes of `v`.
pub fn check_report(r: &EnergyReport) -> Check {
    if (r.mu_sum - 1.0).abs() > 1e-10 || (r.nu_sum - 1.0).abs() > 1e-10 {
        return Err(format!("mass sums {} and {}", r.mu_sum, r.nu_sum));
    }
    let j = r.j.ok_or("J diverged")?;
    if !(r.vmin - 1e-12 <= j && j <= r.vmax + 1e-12) {
        return Err(format!("J = {j} outside [{}, {}]", r.vmin, r.vmax));
    }
    Ok(())
}

pub fn check_mass_and_mean(v: &PiecewiseAffineConvex, pair: &StructuralPair, w: &WeightedDomain, lam: f64) -> Check {
    check_report(&energy_and_gradient(v, pair, w, lam, Discretization::default()).map_err(|e| e.to_string())?)
}

pub fn check_normalization(v: &PiecewiseAffineConvex, pair: &StructuralPair, w: &WeightedDomain) -> Check {
    let opts = NormalizeOptions::default();
    let (_, res) = normalize_translation(v, pair, w, Discretization::default(), opts).map_err(|e| e.to_string())?;
    if res.residual > opts.tol * w.polytope.diameter() {
        return Err(format!("residual {} above tolerance", res.residual));
    }
    if res.j_after < res.j_before - 1e-12 {
        return Err(format!("J dropped from {} to {}", res.j_before, res.j_after));
    }
    Ok(())
}

/// Central differences of `E` in each intercept against the closed-form gradient,
/// relative to `‖∇E‖₁`. Every evaluation is also run through [`check_report`].
pub fn check_gradient(v: &PiecewiseAffineConvex, pair: &StructuralPair, w: &WeightedDomain, lam: f64) -> Check {
    let d = Discretization { order: 6, level: 0 };
    let eval = |v: &PiecewiseAffineConvex| -> Result<EnergyReport, String> {
        let r = energy_and_gradient(v, pair, w, lam, d).map_err(|e| e.to_string())?;
        check_report(&r)?;
        Ok(r)
    };
    let r = eval(v)?;
    let scale: f64 = r.gradient.iter().map(|g| g.abs()).sum();
    let h = 1e-6;
    for i in 0..v.len() {
        let mut a = v.clone();
        a.intercepts[i] += h;
        let mut b = v.clone();
        b.intercepts[i] -= h;
        let fd = (eval(&a)?.energy - eval(&b)?.energy) / (2.0 * h);
        if (fd - r.gradient[i]).abs() > 1e-4 * scale {
            return Err(format!("node {i}: finite difference {fd} vs gradient {}", r.gradient[i]));
        }
    }
    Ok(())
}

/// `E(½v₀ + ½v₁) ≤ ½E(v₀) + ½E(v₁) + 1e-6` on a shared 1-D node set, where
/// interpolants of convex data average exactly.
pub fn check_midpoint_convexity(d0: &ConvexData, d1: &ConvexData, m: usize, pair: &StructuralPair, lam: f64) -> Check {
    let nodes = nodes_1d(m);
    let v0 = d0.function(nodes.clone());
    let v1 = d1.function(nodes.clone());
    let mid = PiecewiseAffineConvex::new(nodes, v0.intercepts.iter().zip(&v1.intercepts).map(|(a, b)| 0.5 * (a + b)).collect()).unwrap();
    let w = interval();
    let e = |v: &PiecewiseAffineConvex| energy_and_gradient(v, pair, &w, lam, Discretization::default()).map(|r| r.energy).map_err(|e| e.to_string());
    let (e0, e1, em) = (e(&v0)?, e(&v1)?, e(&mid)?);
    if em > 0.5 * e0 + 0.5 * e1 + 1e-6 {
        return Err(format!("E(mid) = {em} above the chord of {e0} and {e1}"));
    }
    Ok(())
}
