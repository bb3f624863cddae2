//! Second derivatives of `E_Λ` in the intercepts.
//!
//! Moving `c_j` slides the facet between `V_i` and `V_j` by `1/|p_i − p_j|`
//! per unit, so the `I` part is a facet integral of `f(−u)`; the `J` part is
//! exact for the fixed triangulation.

use crate::convex_core::complex::{clip_polygon, CellComplex};
use crate::convex_core::piecewise::PiecewiseAffineConvex;
use crate::convex_core::quadrature::{IntervalRule, TriangleRule};
use crate::functionals::energy::{i_sums, Evaluation, JQuad};
use crate::structure::StructuralPair;
use crate::Result;
use nalgebra::DMatrix;
use std::collections::BTreeSet;

/// Chord of a convex ring cut by the line `⟨a,x⟩ = b`.
fn chord(ring: &[[f64; 2]], a: [f64; 2], b: f64) -> Option<([f64; 2], [f64; 2])> {
    let mut hits = Vec::with_capacity(2);
    let m = ring.len();
    for k in 0..m {
        let (p, q) = (ring[k], ring[(k + 1) % m]);
        let (sp, sq) = (a[0] * p[0] + a[1] * p[1] - b, a[0] * q[0] + a[1] * q[1] - b);
        if (sp < 0.0) != (sq < 0.0) {
            let t = sp / (sp - sq);
            hits.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    (hits.len() >= 2).then(|| (hits[0], hits[1]))
}

fn seg_len(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}

/// Hessian of `I` itself.
fn hessian_i(cx: &CellComplex, nodes: &[Vec<f64>], c: &[f64], pair: &StructuralPair, order: usize) -> DMatrix<f64> {
    let n_nodes = c.len();
    let mut h = DMatrix::zeros(n_nodes, n_nodes);
    let f0 = pair.small_f(0.0);
    let mut edges = BTreeSet::new();
    for s in &cx.simplices {
        for a in 0..s.len() {
            for b in a + 1..s.len() {
                edges.insert((s[a].min(s[b]), s[a].max(s[b])));
            }
        }
    }
    match cx.dim {
        1 => {
            let rule = IntervalRule::new(order + 2);
            for &(i, j) in &edges {
                let (pi, pj) = (nodes[i][0], nodes[j][0]);
                let gap = (pj - pi).abs();
                if gap <= 0.0 {
                    continue;
                }
                let x = (c[j] - c[i]) / (pj - pi);
                let s = c[i] - pi * x;
                if s > 0.0 {
                    let a = pair.small_f(s) / gap;
                    h[(i, j)] += a;
                    h[(j, i)] += a;
                    h[(i, i)] -= a;
                    h[(j, j)] -= a;
                }
            }
            for (i, cell) in cx.cells.iter().enumerate() {
                if cell.vertices.is_empty() {
                    continue;
                }
                let (lo, hi) = (cell.vertices[0][0], cell.vertices[1][0]);
                let p = nodes[i][0];
                if p != 0.0 {
                    let xb = c[i] / p;
                    if xb > lo && xb < hi {
                        h[(i, i)] += f0 / p.abs();
                    }
                }
                let (mut a, mut b) = (lo, hi);
                if p > 0.0 {
                    b = b.min(c[i] / p);
                } else if p < 0.0 {
                    a = a.max(c[i] / p);
                } else if c[i] <= 0.0 {
                    continue;
                }
                if b > a {
                    let mut acc = 0.0;
                    for (t, w) in rule.x.iter().zip(&rule.w) {
                        let x = a + t * (b - a);
                        acc += w * (b - a) * pair.small_f_prime((c[i] - p * x).max(0.0));
                    }
                    h[(i, i)] += acc;
                }
            }
        }
        _ => {
            let line = IntervalRule::new(order.max(4));
            let tri = TriangleRule::new(order.max(4));
            let rings: Vec<Vec<[f64; 2]>> = cx.cells.iter().map(|cell| cell.vertices.iter().map(|v| [v[0], v[1]]).collect()).collect();
            let scale = cx.half_width.max(1.0) * (1.0 + c.iter().fold(0.0f64, |m, x| m.max(x.abs())));
            for &(i, j) in &edges {
                let ring = &rings[i];
                if ring.len() < 3 {
                    continue;
                }
                let d = [nodes[i][0] - nodes[j][0], nodes[i][1] - nodes[j][1]];
                let gap = (d[0] * d[0] + d[1] * d[1]).sqrt();
                let off = c[i] - c[j];
                let on = |x: [f64; 2]| (d[0] * x[0] + d[1] * x[1] - off).abs() <= 1e-9 * scale;
                let m = ring.len();
                let Some(k) = (0..m).find(|&k| on(ring[k]) && on(ring[(k + 1) % m])) else { continue };
                let (a, b) = (ring[k], ring[(k + 1) % m]);
                let p = [nodes[i][0], nodes[i][1]];
                let s_at = |x: [f64; 2]| c[i] - p[0] * x[0] - p[1] * x[1];
                // keep the part inside Ω, where s > 0
                let (sa, sb) = (s_at(a), s_at(b));
                let (a, b) = match (sa > 0.0, sb > 0.0) {
                    (true, true) => (a, b),
                    (false, false) => continue,
                    (true, false) => {
                        let t = sa / (sa - sb);
                        (a, [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])])
                    }
                    (false, true) => {
                        let t = sa / (sa - sb);
                        ([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])], b)
                    }
                };
                let len = seg_len(a, b);
                let mut acc = 0.0;
                for (t, w) in line.x.iter().zip(&line.w) {
                    let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                    acc += w * len * pair.small_f(s_at(x).max(0.0));
                }
                let val = acc / gap;
                h[(i, j)] += val;
                h[(j, i)] += val;
                h[(i, i)] -= val;
                h[(j, j)] -= val;
            }
            for (i, ring) in rings.iter().enumerate() {
                if ring.len() < 3 {
                    continue;
                }
                let p = [nodes[i][0], nodes[i][1]];
                let pn = (p[0] * p[0] + p[1] * p[1]).sqrt();
                if f0 != 0.0 && pn > 1e-14 {
                    if let Some((a, b)) = chord(ring, p, c[i]) {
                        h[(i, i)] += f0 * seg_len(a, b) / pn;
                    }
                }
                let poly = clip_polygon(ring, p, c[i]);
                if poly.len() < 3 {
                    continue;
                }
                let mut acc = 0.0;
                for k in 1..poly.len() - 1 {
                    for (x, w, _) in tri.on_triangle(poly[0], poly[k], poly[k + 1]) {
                        acc += w * pair.small_f_prime((c[i] - p[0] * x[0] - p[1] * x[1]).max(0.0));
                    }
                }
                h[(i, i)] += acc;
            }
        }
    }
    h
}

/// Hessian of `J` for the triangulation of `q`, with the gradient sums it needs.
fn hessian_j(q: &JQuad, pair: &StructuralPair, c: &[f64], j: f64) -> DMatrix<f64> {
    let n_nodes = c.len();
    let k = q.dim + 1;
    let mut phi2 = DMatrix::zeros(n_nodes, n_nodes);
    let mut phi1 = vec![0.0; n_nodes];
    let mut mass = 0.0;
    let zero = [0.0, 0.0];
    for pt in &q.points {
        let v = q.value(pt, c, &zero[..q.dim]);
        let (g, dg) = (pair.small_g(v), pair.small_g_prime(v));
        mass += pt.wh;
        for a in 0..k {
            phi1[pt.nodes[a]] += pt.wh * g * pt.bary[a];
            for b in 0..k {
                phi2[(pt.nodes[a], pt.nodes[b])] += pt.wh * dg * pt.bary[a] * pt.bary[b];
            }
        }
    }
    let gj = pair.small_g(j);
    let dgj = pair.small_g_prime(j);
    let mut h = phi2 / (mass * gj);
    for a in 0..n_nodes {
        if phi1[a] == 0.0 {
            continue;
        }
        for b in 0..n_nodes {
            h[(a, b)] -= dgj * phi1[a] * phi1[b] / (mass * mass * gj * gj * gj);
        }
    }
    h
}

/// `∂²E/∂c∂c` at an evaluated point; `None` when `J` diverged.
pub fn energy_hessian(v: &PiecewiseAffineConvex, ev: &Evaluation, pair: &StructuralPair, order: usize) -> Result<Option<DMatrix<f64>>> {
    let Some(j) = ev.report.j else { return Ok(None) };
    let cx = &ev.complex;
    let c = &v.intercepts;
    let is = i_sums(cx, &v.nodes, c, pair, order);
    let hi = hessian_i(cx, &v.nodes, c, pair, order);
    let m = nalgebra::DVector::from_column_slice(&is.cell_mass);
    let mut h = -hi / is.i + (&m * m.transpose()) / (is.i * is.i);
    h += hessian_j(&ev.jquad, pair, c, j) * ev.report.big_lambda;
    Ok(Some(h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex_core::polytope::Polytope;
    use crate::functionals::energy::{evaluate, Discretization};
    use crate::structure::WeightedDomain;

    fn fd_hessian_error(v: &PiecewiseAffineConvex, pr: &StructuralPair, w: &WeightedDomain) -> f64 {
        let d = Discretization { order: 8, level: 0 };
        let ev = evaluate(v, pr, w, 1.3, d).unwrap();
        let h = energy_hessian(v, &ev, pr, d.order).unwrap().unwrap();
        let mut worst: f64 = 0.0;
        let scale = h.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for k in 0..v.len() {
            let eps = 1e-6;
            let mut a = v.clone();
            a.intercepts[k] += eps;
            let mut b = v.clone();
            b.intercepts[k] -= eps;
            let ga = evaluate(&a, pr, w, 1.3, d).unwrap().report.gradient;
            let gb = evaluate(&b, pr, w, 1.3, d).unwrap().report.gradient;
            for r in 0..v.len() {
                let fd = (ga[r] - gb[r]) / (2.0 * eps);
                worst = worst.max((fd - h[(r, k)]).abs() / scale);
            }
        }
        worst
    }

    #[test]
    fn hessian_matches_gradient_differences_1d() {
        let w = WeightedDomain::uniform(Polytope::interval(-1.0, 1.0).unwrap()).unwrap();
        let nodes: Vec<Vec<f64>> = (0..6).map(|k| vec![-1.0 + 0.4 * k as f64]).collect();
        let c = nodes.iter().map(|p| 0.9 + 0.7 * p[0] * p[0] + 0.1 * p[0]).collect();
        let v = PiecewiseAffineConvex::new(nodes, c).unwrap();
        for pr in [StructuralPair::eigenvalue(0.0), StructuralPair::eigenvalue(1.0), StructuralPair::transport(1, 0.0, 2.0), StructuralPair::exponential(1.0)] {
            let e = fd_hessian_error(&v, &pr, &w);
            assert!(e < 1e-5, "{pr:?} {e}");
        }
    }

    #[test]
    fn hessian_matches_gradient_differences_2d() {
        let w = WeightedDomain::uniform(Polytope::cube(2, 1.0).unwrap()).unwrap();
        let mut nodes = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                nodes.push(vec![-1.0 + i as f64 * 2.0 / 3.0, -1.0 + j as f64 * 2.0 / 3.0]);
            }
        }
        let c = nodes.iter().enumerate().map(|(k, p)| 1.0 + 0.5 * (p[0] * p[0] + 1.3 * p[1] * p[1]) + 0.01 * (1.7 * k as f64).sin()).collect();
        let v = PiecewiseAffineConvex::new(nodes, c).unwrap();
        for pr in [StructuralPair::eigenvalue(0.0), StructuralPair::eigenvalue(1.0), StructuralPair::transport(2, 0.0, 1.0)] {
            let e = fd_hessian_error(&v, &pr, &w);
            assert!(e < 1e-5, "{pr:?} {e}");
        }
    }
}
