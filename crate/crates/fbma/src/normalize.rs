//! Translation normalization into the class where `∫ g(v) y dy^h = 0`,
//! boundary-contact replacement and affine replacement toward a target.

use crate::convex_core::complex::CellComplex;
use crate::convex_core::ellipsoid::john_ellipsoid;
use crate::convex_core::piecewise::{negative_set, PiecewiseAffineConvex};
use crate::convex_core::polytope::dot;
use crate::convex_core::quadrature::compensated_sum;
use crate::functionals::energy::{i_sums, j_sums, Discretization, JQuad};
use crate::structure::{StructuralPair, WeightedDomain};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormalizationResult {
    /// `x*`, so the result is `v − ⟨x*, ·⟩`.
    pub shift: Vec<f64>,
    /// Additive constant (zero for a pure translation).
    pub t: f64,
    pub j_before: f64,
    pub j_after: f64,
    /// `‖∫ g(v − ⟨x*,y⟩) y dy^h‖ / H`.
    pub residual: f64,
    pub iterations: usize,
    /// `−u(x*)` for the original `u`: depth of `x*` inside `Ω`.
    pub depth: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct NormalizeOptions {
    /// Residual target relative to `diam P`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 100 }
    }
}

fn quad_mass(q: &JQuad) -> f64 {
    compensated_sum(q.points.iter().map(|p| p.wh))
}

fn mean_g(q: &JQuad, pair: &StructuralPair, c: &[f64], x: &[f64]) -> Option<f64> {
    let s = j_sums(q, pair, c, x, false, false);
    (!s.divergent).then(|| s.g_mass / quad_mass(q))
}

fn shifted_intercepts(v: &PiecewiseAffineConvex, x: &[f64], t: f64) -> Vec<f64> {
    v.nodes.iter().zip(&v.intercepts).map(|(p, c)| c + t - dot(x, p)).collect()
}

/// Center of the John ellipsoid of `Ω`; translating by it puts `Ω` in John position.
pub fn john_recenter(v: &PiecewiseAffineConvex) -> Result<(PiecewiseAffineConvex, Vec<f64>)> {
    let omega = negative_set(v)?;
    let e = john_ellipsoid(&omega)?;
    let x0 = e.center.clone();
    Ok((v.shifted(&x0, 0.0), x0))
}

/// Maximize `x ↦ ∫ G(v − ⟨x,y⟩) dy^h` over `Ω` by damped Newton ascent,
/// reusing a quadrature built for `v` (translations keep the triangulation).
pub fn normalize_with_quad(
    v: &PiecewiseAffineConvex,
    q: &JQuad,
    pair: &StructuralPair,
    w: &WeightedDomain,
    opts: NormalizeOptions,
) -> Result<(PiecewiseAffineConvex, NormalizationResult)> {
    let n = v.dim();
    let h = quad_mass(q);
    let diam = w.polytope.diameter();
    let zero = vec![0.0; n];
    let j_before = j_value(q, pair, &v.intercepts, &zero);

    if pair.is_linear_g() {
        let bary = w.barycenter()?;
        let off = bary.iter().map(|b| b * b).sum::<f64>().sqrt();
        if off > opts.tol * diam {
            return Err(Error::NormalizationFailure(format!(
                "G is linear and the h-barycenter of P is {off:.3e} away from 0; J has no interior critical point in x"
            )));
        }
        let (out, x0) = john_recenter(v)?;
        let depth = -v.primal(&x0);
        let j_after = j_value(q, pair, &out.intercepts, &zero);
        return Ok((out, NormalizationResult { shift: x0, t: 0.0, j_before, j_after, residual: off, iterations: 0, depth }));
    }

    let Some(mut phi) = mean_g(q, pair, &v.intercepts, &zero) else {
        return Err(Error::NormalizationFailure("J diverges at the starting point; v is not positive on P".into()));
    };
    let mut x = zero.clone();
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    for it in 0..=opts.max_iter {
        iterations = it;
        let s = j_sums(q, pair, &v.intercepts, &x, false, true);
        residual = s.moment.iter().map(|m| m * m).sum::<f64>().sqrt() / h;
        if residual <= opts.tol * diam || it == opts.max_iter {
            break;
        }
        let m = DVector::from_column_slice(&s.moment);
        let neg_hess = -DMatrix::from_row_slice(n, n, &s.second) / h;
        // ascent direction: Newton when the Hessian is negative definite
        let dir = match neg_hess.clone().cholesky() {
            Some(ch) => -ch.solve(&(m.clone() / h)),
            None => -m.clone() / s.gprime_mass.max(1e-300),
        };
        let slope = dir.dot(&m) / h;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, d)| a + step * d).collect();
            if let Some(val) = mean_g(q, pair, &v.intercepts, &trial) {
                if val >= phi - 1e-4 * step * slope {
                    x = trial;
                    phi = val;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let depth = -v.primal(&x);
    let scale = v.intercepts.iter().fold(0.0f64, |a, c| a.max(c.abs())).max(1e-300);
    if residual > opts.tol * diam * 1e3 || depth <= 1e-10 * scale {
        return Err(Error::NormalizationFailure(format!(
            "ascent stalled at depth {depth:.3e} inside Ω with residual {residual:.3e}"
        )));
    }
    let out = PiecewiseAffineConvex {
        nodes: v.nodes.clone(),
        intercepts: shifted_intercepts(v, &x, 0.0),
        canonical: v.canonical,
    };
    let j_after = j_value(q, pair, &out.intercepts, &zero);
    Ok((out, NormalizationResult { shift: x, t: 0.0, j_before, j_after, residual, iterations, depth }))
}

fn j_value(q: &JQuad, pair: &StructuralPair, c: &[f64], x: &[f64]) -> f64 {
    match mean_g(q, pair, c, x) {
        Some(m) => pair.g_inverse(m),
        None => pair.g_inverse(f64::NEG_INFINITY),
    }
}

pub fn normalize_translation(
    v: &PiecewiseAffineConvex,
    pair: &StructuralPair,
    w: &WeightedDomain,
    disc: Discretization,
    opts: NormalizeOptions,
) -> Result<(PiecewiseAffineConvex, NormalizationResult)> {
    let cx = v.complex()?;
    let q = JQuad::build(&cx, &v.nodes, w, disc);
    normalize_with_quad(v, &q, pair, w, opts)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplacementReport {
    pub i_before: f64,
    pub i_after: f64,
    pub j_before: f64,
    pub j_after: f64,
    /// `min over nodes of ṽ − φ_Ω`; non-negative up to rounding.
    pub support_gap: f64,
    /// Largest `|ṽ − φ_Ω|` over nodes on `∂P`.
    pub boundary_gap: f64,
}

/// Points carrying `u` on `Ω̄`: vertices of `Ω` (where `u = 0`) and vertices
/// of the cell complex inside `Ω`.
fn closure_support(v: &PiecewiseAffineConvex, cx: &CellComplex) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let omega = negative_set(v)?;
    let mut pts: Vec<Vec<f64>> = omega.vertices.clone();
    let mut vals = vec![0.0; pts.len()];
    for (x, ux) in cx.vertices.iter().zip(&cx.vertex_values) {
        if *ux < 0.0 {
            pts.push(x.clone());
            vals.push(*ux);
        }
    }
    Ok((pts, vals))
}

/// Replace `u` by its restriction to `Ω̄`, extended by `+∞`, and conjugate back.
pub fn boundary_contact_replacement(
    v: &PiecewiseAffineConvex,
    pair: &StructuralPair,
    w: &WeightedDomain,
    disc: Discretization,
) -> Result<(PiecewiseAffineConvex, ReplacementReport)> {
    let cx = v.complex()?;
    let (pts, vals) = closure_support(v, &cx)?;
    let omega = negative_set(v)?;
    let intercepts: Vec<f64> = v
        .nodes
        .iter()
        .map(|p| pts.iter().zip(&vals).map(|(x, ux)| dot(x, p) - ux).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let out = PiecewiseAffineConvex { nodes: v.nodes.clone(), intercepts, canonical: false };
    let out_cx = out.complex()?;

    let i_before = i_sums(&cx, &v.nodes, &v.intercepts, pair, disc.order).i;
    let i_after = i_sums(&out_cx, &out.nodes, &out.intercepts, pair, disc.order).i;
    let q0 = JQuad::build(&cx, &v.nodes, w, disc);
    let q1 = JQuad::build(&out_cx, &out.nodes, w, disc);
    let zero = vec![0.0; v.dim()];
    let j_before = j_value(&q0, pair, &v.intercepts, &zero);
    let j_after = j_value(&q1, pair, &out.intercepts, &zero);

    let mut support_gap = f64::INFINITY;
    let mut boundary_gap: f64 = 0.0;
    for (p, c) in out.nodes.iter().zip(&out.intercepts) {
        let phi = omega.support(p);
        support_gap = support_gap.min(c - phi);
        if w.polytope.gauge(p).map(|g| (g - 1.0).abs() < 1e-9).unwrap_or(false) {
            boundary_gap = boundary_gap.max((c - phi).abs());
        }
    }
    let scale = v.intercepts.iter().fold(1.0f64, |a, c| a.max(c.abs()));
    let tol = 1e-9 * scale;
    let report = ReplacementReport { i_before, i_after, j_before, j_after, support_gap, boundary_gap };
    if (i_after - i_before).abs() > 1e-9 * i_before.abs().max(1e-300)
        || j_after > j_before + tol
        || support_gap < -tol
        || boundary_gap > tol
    {
        return Err(Error::ReplacementInvalid(format!("{report:?}")));
    }
    Ok((out, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplacementTarget {
    J(f64),
    I(f64),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AffineReplacement {
    pub t: f64,
    pub shift: Vec<f64>,
    pub achieved: f64,
    pub bisection_steps: usize,
}

/// `ṽ = v̂ + t − ⟨x_t,·⟩` with `J(ṽ)` or `I(ṽ)` equal to the target.
pub fn affine_replacement(
    v: &PiecewiseAffineConvex,
    target: ReplacementTarget,
    pair: &StructuralPair,
    w: &WeightedDomain,
    disc: Discretization,
    rel_tol: f64,
) -> Result<(PiecewiseAffineConvex, AffineReplacement)> {
    let goal = match target {
        ReplacementTarget::J(l) | ReplacementTarget::I(l) => l,
    };
    if !(goal > 0.0) {
        return Err(Error::InvalidInput(format!("target must be positive, got {goal}")));
    }
    let cx = v.complex()?;
    let n = v.dim();
    let zero = vec![0.0; n];
    let q = JQuad::build(&cx, &v.nodes, w, disc);
    let vmin = v.intercepts.iter().zip(&cx.active).filter(|(_, a)| **a).map(|(c, _)| *c).fold(f64::INFINITY, f64::min);
    let scale = v.intercepts.iter().fold(1.0f64, |a, c| a.max(c.abs()));
    let floor = 1e-9 * scale;

    let lifted = |t: f64| PiecewiseAffineConvex { nodes: v.nodes.clone(), intercepts: shifted_intercepts(v, &zero, t), canonical: v.canonical };

    let eval: Box<dyn Fn(f64) -> Result<(f64, Vec<f64>)>> = match target {
        ReplacementTarget::I(_) => Box::new(|t: f64| {
            let c = shifted_intercepts(v, &zero, t);
            Ok((i_sums(&cx, &v.nodes, &c, pair, disc.order).i, zero.clone()))
        }),
        ReplacementTarget::J(_) if pair.is_linear_g() => Box::new(|t: f64| Ok((j_value(&q, pair, &v.intercepts, &zero) + t, zero.clone()))),
        ReplacementTarget::J(_) => Box::new(|t: f64| {
            let (nv, res) = normalize_with_quad(&lifted(t), &q, pair, w, NormalizeOptions::default())?;
            Ok((j_value(&q, pair, &nv.intercepts, &zero), res.shift))
        }),
    };

    let finish = |t: f64, shift: Vec<f64>, achieved: f64, steps: usize| -> Result<(PiecewiseAffineConvex, AffineReplacement)> {
        let out = PiecewiseAffineConvex { nodes: v.nodes.clone(), intercepts: shifted_intercepts(v, &shift, t), canonical: v.canonical };
        let pos = out.intercepts.iter().zip(&cx.active).filter(|(_, a)| **a).all(|(c, _)| *c > 0.0);
        if !pos {
            return Err(Error::TargetUnreachable(format!("target {goal} needs t = {t:.6e}, which makes ṽ non-positive on P")));
        }
        Ok((out, AffineReplacement { t, shift, achieved, bisection_steps: steps }))
    };

    if let (ReplacementTarget::J(_), true) = (target, pair.is_linear_g()) {
        let t = goal - j_value(&q, pair, &v.intercepts, &zero);
        return finish(t, zero.clone(), goal, 0);
    }

    // bracket: the lower end keeps the relevant quantity defined
    let mut lo = match target {
        ReplacementTarget::I(_) => cx.min_primal() + floor,
        ReplacementTarget::J(_) => -vmin + floor,
    };
    let (val0, shift0) = eval(0.0)?;
    if (val0 - goal).abs() <= rel_tol * goal {
        return finish(0.0, shift0, val0, 0);
    }
    let mut hi = if val0 < goal { scale.max(1.0) } else { 0.0 };
    let mut grow = 0;
    while eval(hi)?.0 < goal {
        lo = hi;
        hi = 2.0 * hi + scale;
        grow += 1;
        if grow > 60 {
            return Err(Error::TargetUnreachable(format!("no t below {hi:.3e} reaches {goal}")));
        }
    }
    let lo_val = eval(lo).map(|r| r.0).unwrap_or(0.0);
    if lo_val > goal {
        return Err(Error::TargetUnreachable(format!("target {goal} below the infimum {lo_val:.6e} over admissible t")));
    }
    let mut steps = 0;
    let mut best = eval(hi)?;
    let mut t = hi;
    while steps < 200 {
        steps += 1;
        let mid = 0.5 * (lo + hi);
        let r = eval(mid)?;
        if r.0 < goal {
            lo = mid;
        } else {
            hi = mid;
        }
        t = mid;
        best = r;
        if (best.0 - goal).abs() <= rel_tol * goal || hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            break;
        }
    }
    if (best.0 - goal).abs() > rel_tol * goal {
        return Err(Error::TargetUnreachable(format!("bisection stalled at {:.6e} for target {goal}", best.0)));
    }
    finish(t, best.1, best.0, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex_core::polytope::Polytope;
    use crate::functionals::functional_i;
    use crate::structure::{FSpec, GSpec};

    fn interval() -> WeightedDomain {
        WeightedDomain::uniform(Polytope::interval(-1.0, 1.0).unwrap()).unwrap()
    }

    fn inv_s() -> StructuralPair {
        StructuralPair::new(FSpec::Power { beta: 0.0 }, GSpec::NegPower { p: 1.0, coef: 1.0 }).unwrap()
    }

    fn grid_1d(m: usize) -> Vec<Vec<f64>> {
        (0..m).map(|k| vec![-1.0 + 2.0 * k as f64 / (m - 1) as f64]).collect()
    }

    #[test]
    fn even_function_stays_put() {
        let nodes = grid_1d(9);
        let c = nodes.iter().map(|p| 1.0 + p[0] * p[0]).collect();
        let v = PiecewiseAffineConvex::new(nodes, c).unwrap();
        let (_, r) = normalize_translation(&v, &inv_s(), &interval(), Discretization::default(), NormalizeOptions::default()).unwrap();
        assert!(r.shift[0].abs() < 1e-12, "{:?}", r.shift);
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
        let h = (b - a) / m as f64;
        let mut s = f(a) + f(b);
        for k in 1..m {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn tilted_line_matches_root_finding_oracle() {
        let s0 = 0.15;
        // nodes at the ends and an interior kink-free point
        let nodes = vec![vec![-1.0], vec![0.0], vec![1.0]];
        let c = nodes.iter().map(|p: &Vec<f64>| 2.0 + s0 * p[0]).collect();
        let v = PiecewiseAffineConvex::new(nodes, c).unwrap();
        let (_, r) = normalize_translation(&v, &inv_s(), &interval(), Discretization { order: 10, level: 2 }, NormalizeOptions::default()).unwrap();
        let psi = |x: f64| simpson(|y| y / (2.0 + y * s0 - x * y).powi(2), -1.0, 1.0, 2000);
        let (mut a, mut b) = (-1.0, 1.0);
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if psi(m) > 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        assert!((r.shift[0] - 0.5 * (a + b)).abs() < 1e-8, "{} vs {}", r.shift[0], 0.5 * (a + b));
    }

    #[test]
    fn normalization_is_idempotent_and_raises_g_of_j() {
        let nodes = grid_1d(7);
        let c = nodes.iter().map(|p| 1.0 + 0.7 * p[0] * p[0] + 0.3 * p[0]).collect();
        let v = PiecewiseAffineConvex::new(nodes, c).unwrap();
        let pr = StructuralPair::transport(1, 0.0, 2.0);
        let w = interval();
        let d = Discretization::default();
        let (v1, r1) = normalize_translation(&v, &pr, &w, d, NormalizeOptions::default()).unwrap();
        assert!(r1.j_after >= r1.j_before);
        assert!(r1.residual <= 1e-9 * 2.0);
        let (_, r2) = normalize_translation(&v1, &pr, &w, d, NormalizeOptions::default()).unwrap();
        assert!(r2.shift[0].abs() < 1e-9);
    }

    #[test]
    fn linear_g_refuses_off_center_density() {
        let w = WeightedDomain::uniform(Polytope::interval(-1.0, 2.0).unwrap()).unwrap();
        let v = PiecewiseAffineConvex::new(vec![vec![-1.0], vec![2.0]], vec![1.0, 1.0]).unwrap();
        let r = normalize_translation(&v, &StructuralPair::eigenvalue(0.0), &w, Discretization::default(), NormalizeOptions::default());
        assert!(matches!(r, Err(Error::NormalizationFailure(_))));
    }

    #[test]
    fn replacement_keeps_the_enemy_family() {
        // v = max{φ_P − C, −δ}* on P = [−1,1]: nodes at ±1 and 0
        let (delta, big_c) = (0.3, 2.0);
        let v = PiecewiseAffineConvex::new(vec![vec![-1.0], vec![0.0], vec![1.0]], vec![big_c, delta, big_c]).unwrap();
        let (out, rep) = boundary_contact_replacement(&v, &StructuralPair::eigenvalue(0.0), &interval(), Discretization::default()).unwrap();
        let omega = negative_set(&out).unwrap();
        assert!((omega.vertices[0][0] + big_c).abs() < 1e-12 && (omega.vertices[1][0] - big_c).abs() < 1e-12);
        assert!((rep.i_after - rep.i_before).abs() < 1e-12);
        for (a, b) in out.intercepts.iter().zip(&v.intercepts) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn replacement_matches_brute_force_conjugate() {
        let nodes = grid_1d(6);
        let c: Vec<f64> = vec![2.5, 0.9, 0.4, 0.5, 1.3, 3.0];
        let v = PiecewiseAffineConvex::new(nodes.clone(), c).unwrap();
        let pr = StructuralPair::eigenvalue(0.0);
        let (out, _) = boundary_contact_replacement(&v, &pr, &interval(), Discretization::default()).unwrap();
        let omega = negative_set(&v).unwrap();
        let (a, b) = (omega.vertices[0][0], omega.vertices[1][0]);
        for p in &nodes {
            let m = 20000;
            let brute = (0..=m)
                .map(|k| a + (b - a) * k as f64 / m as f64)
                .map(|x| x * p[0] - v.primal(&[x]).min(0.0))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((out.dual(p).unwrap() - brute).abs() < 1e-3, "{p:?}");
        }
        assert!((functional_i(&out, &pr, Discretization::default()).unwrap() - functional_i(&v, &pr, Discretization::default()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn affine_replacement_linear_g_is_one_step() {
        let v = PiecewiseAffineConvex::new(grid_1d(5), vec![1.0, 0.6, 0.5, 0.6, 1.0]).unwrap();
        let (out, r) = affine_replacement(&v, ReplacementTarget::J(2.0), &StructuralPair::eigenvalue(0.0), &interval(), Discretization::default(), 1e-10).unwrap();
        assert_eq!(r.bisection_steps, 0);
        let j = crate::functionals::functional_j(&out, &StructuralPair::eigenvalue(0.0), &interval(), Discretization::default()).unwrap().value();
        assert!((j - 2.0).abs() < 1e-12);
    }

    #[test]
    fn affine_replacement_h3_matches_sweep() {
        let v = PiecewiseAffineConvex::new(vec![vec![-1.0], vec![0.0], vec![1.0]], vec![2.0, 1.0, 2.0]).unwrap();
        let pr = StructuralPair::transport(1, 0.0, 2.0);
        let w = interval();
        let d = Discretization { order: 8, level: 1 };
        let (_, r) = affine_replacement(&v, ReplacementTarget::J(3.0), &pr, &w, d, 1e-10).unwrap();
        // dense sweep of J(v + t); v is even so normalization does nothing
        let jt = |t: f64| {
            let c: Vec<f64> = v.intercepts.iter().map(|c| c + t).collect();
            crate::functionals::functional_j(&PiecewiseAffineConvex::new(v.nodes.clone(), c).unwrap(), &pr, &w, d).unwrap().value()
        };
        let ts: Vec<f64> = (0..4001).map(|k| -0.99 + 5.0 * k as f64 / 4000.0).collect();
        let k = ts.iter().position(|&t| jt(t) >= 3.0).unwrap();
        assert!(r.t <= ts[k] + 1e-12 && r.t >= ts[k - 1] - 1e-12);
        let j_samples: Vec<f64> = ts.iter().step_by(200).map(|&t| jt(t)).collect();
        assert!(j_samples.windows(2).all(|p| p[1] >= p[0]));
    }

    #[test]
    fn affine_replacement_i_target() {
        let v = PiecewiseAffineConvex::new(grid_1d(5), vec![1.0, 0.6, 0.5, 0.6, 1.0]).unwrap();
        let pr = StructuralPair::eigenvalue(0.0);
        let (out, _) = affine_replacement(&v, ReplacementTarget::I(0.8), &pr, &interval(), Discretization::default(), 1e-10).unwrap();
        assert!((functional_i(&out, &pr, Discretization::default()).unwrap() - 0.8).abs() < 1e-9);
    }
}
