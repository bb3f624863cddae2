//! `I`, `J`, the energy `E_Λ = −log I + Λ J` and its intercept gradient.

use crate::convex_core::complex::{clip_polygon, CellComplex};
use crate::convex_core::piecewise::PiecewiseAffineConvex;
use crate::convex_core::polytope::polygon_area;
use crate::convex_core::quadrature::{IntervalRule, NeumaierSum, TriangleRule};
use crate::structure::{StructuralPair, WeightedDomain};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Quadrature resolution: Gauss points per direction and uniform
/// refinement level of each triangulation simplex.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    pub order: usize,
    pub level: usize,
}

impl Default for Discretization {
    fn default() -> Self {
        Self { order: 5, level: 0 }
    }
}

/// A sample of `P` inside one simplex of the regular triangulation.
#[derive(Clone, Copy, Debug)]
pub struct JPoint {
    pub y: [f64; 2],
    pub nodes: [usize; 3],
    pub bary: [f64; 3],
    /// Quadrature weight times `h(y)`.
    pub wh: f64,
}

/// Quadrature over `P` adapted to the triangulation, so `v` is affine on
/// every piece and `∂v/∂c_i` is the barycentric weight.
#[derive(Clone, Debug)]
pub struct JQuad {
    pub dim: usize,
    pub points: Vec<JPoint>,
    /// Hat-function samples for nodes sitting on the envelope without being
    /// vertices of the triangulation: `(node, point, φ_node)`.
    pub phantom: Vec<(usize, JPoint, f64)>,
    /// Triangulation vertices, where `v` attains its minimum over `P`.
    pub vertices: Vec<(usize, [f64; 2])>,
}

fn bary_2d(a: [f64; 2], b: [f64; 2], c: [f64; 2], y: [f64; 2]) -> [f64; 3] {
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((y[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (y[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (y[1] - a[1]) - (y[0] - a[0]) * (b[1] - a[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

fn split_triangle(t: [[f64; 2]; 3], level: usize) -> Vec<[[f64; 2]; 3]> {
    let mut cur = vec![t];
    for _ in 0..level {
        let mut next = Vec::with_capacity(cur.len() * 4);
        for [a, b, c] in cur {
            let m = |p: [f64; 2], q: [f64; 2]| [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            let (ab, bc, ca) = (m(a, b), m(b, c), m(c, a));
            next.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        cur = next;
    }
    cur
}

impl JQuad {
    pub fn build(cx: &CellComplex, nodes: &[Vec<f64>], w: &WeightedDomain, disc: Discretization) -> Self {
        let mut points = Vec::new();
        let mut phantom = Vec::new();
        match cx.dim {
            1 => {
                let rule = IntervalRule::new(disc.order);
                let pieces = 1usize << disc.level;
                for s in &cx.simplices {
                    let (a, b) = (nodes[s[0]][0], nodes[s[1]][0]);
                    let len = b - a;
                    if len <= 0.0 {
                        continue;
                    }
                    for k in 0..pieces {
                        let lo = a + len * k as f64 / pieces as f64;
                        let sub = len / pieces as f64;
                        for (x, wt) in rule.x.iter().zip(&rule.w) {
                            let y = lo + x * sub;
                            let t = (y - a) / len;
                            points.push(JPoint { y: [y, 0.0], nodes: [s[0], s[1], s[1]], bary: [1.0 - t, t, 0.0], wh: wt * sub * w.h(&[y]) });
                        }
                    }
                }
            }
            _ => {
                let rule = TriangleRule::new(disc.order);
                let p2 = |i: usize| [nodes[i][0], nodes[i][1]];
                for s in &cx.simplices {
                    let tri = [p2(s[0]), p2(s[1]), p2(s[2])];
                    for sub in split_triangle(tri, disc.level) {
                        for (y, wt, _) in rule.on_triangle(sub[0], sub[1], sub[2]) {
                            let bary = bary_2d(tri[0], tri[1], tri[2], y);
                            points.push(JPoint { y, nodes: [s[0], s[1], s[2]], bary, wh: wt * w.h(&y) });
                        }
                    }
                }
                // inactive nodes inside a simplex: hat function of the refined triangulation
                for (i, &act) in cx.active.iter().enumerate() {
                    if act {
                        continue;
                    }
                    let yi = p2(i);
                    let host = cx.simplices.iter().find(|s| {
                        let b = bary_2d(p2(s[0]), p2(s[1]), p2(s[2]), yi);
                        b.iter().all(|&l| l >= -1e-12)
                    });
                    let Some(s) = host else { continue };
                    let tri = [p2(s[0]), p2(s[1]), p2(s[2])];
                    for k in 0..3 {
                        let sub = [yi, tri[(k + 1) % 3], tri[(k + 2) % 3]];
                        if polygon_area(&sub) <= 1e-14 * polygon_area(&tri) {
                            continue;
                        }
                        for (y, wt, b) in rule.on_triangle(sub[0], sub[1], sub[2]) {
                            let bary = bary_2d(tri[0], tri[1], tri[2], y);
                            phantom.push((i, JPoint { y, nodes: [s[0], s[1], s[2]], bary, wh: wt * w.h(&y) }, b[0]));
                        }
                    }
                }
            }
        }
        let vertices = (0..nodes.len())
            .filter(|&i| cx.active[i])
            .map(|i| (i, [nodes[i][0], if cx.dim > 1 { nodes[i][1] } else { 0.0 }]))
            .collect();
        Self { dim: cx.dim, points, phantom, vertices }
    }

    #[inline]
    pub fn value(&self, pt: &JPoint, c: &[f64], shift: &[f64]) -> f64 {
        let k = self.dim + 1;
        let mut v = 0.0;
        for j in 0..k {
            v += pt.bary[j] * c[pt.nodes[j]];
        }
        for d in 0..self.dim {
            v -= shift[d] * pt.y[d];
        }
        v
    }
}

/// Sums needed for `J` and its derivatives at intercepts `c − ⟨x,p⟩`.
#[derive(Clone, Debug)]
pub struct JSums {
    pub divergent: bool,
    /// `∫ G(v) h`.
    pub g_mass: f64,
    /// `∫ g(v) h`.
    pub gprime_mass: f64,
    /// `∫ g(v) y h`.
    pub moment: Vec<f64>,
    /// `∫ g′(v) y yᵀ h`, row-major.
    pub second: Vec<f64>,
    /// `∫ g(v) φ_i h` per node.
    pub node_weights: Vec<f64>,
    pub vmin: f64,
}

pub fn j_sums(q: &JQuad, pair: &StructuralPair, c: &[f64], shift: &[f64], with_nodes: bool, with_second: bool) -> JSums {
    let n = q.dim;
    let singular = pair.singular_at_zero();
    let mut gm = NeumaierSum::new();
    let mut gp = NeumaierSum::new();
    let mut mom = vec![NeumaierSum::new(); n];
    let mut sec = vec![NeumaierSum::new(); n * n];
    let mut nodes = if with_nodes { vec![0.0; c.len()] } else { vec![] };
    let mut vmin = f64::INFINITY;
    let diverged = |nodes: Vec<f64>, vmin: f64| JSums {
        divergent: true,
        g_mass: f64::NEG_INFINITY,
        gprime_mass: f64::INFINITY,
        moment: vec![0.0; n],
        second: vec![0.0; n * n],
        node_weights: nodes,
        vmin,
    };
    if singular {
        // v is piecewise affine, so its minimum sits at a vertex; a zero there
        // is fatal exactly when the pole of G is not integrable in n dimensions
        let node_min = q
            .vertices
            .iter()
            .map(|(i, y)| c[*i] - (0..n).map(|d| shift[d] * y[d]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        if node_min < 0.0 || (node_min == 0.0 && !pair.pole_integrable(n)) {
            return diverged(nodes, node_min);
        }
    }
    for pt in &q.points {
        let v = q.value(pt, c, shift);
        vmin = vmin.min(v);
        if singular && !(v > 0.0) {
            return diverged(nodes, vmin);
        }
        let gv = pair.big_g(v);
        let dg = pair.small_g(v);
        if !gv.is_finite() {
            return diverged(nodes, vmin);
        }
        gm.add(pt.wh * gv);
        gp.add(pt.wh * dg);
        for d in 0..n {
            mom[d].add(pt.wh * dg * pt.y[d]);
        }
        if with_second {
            let d2 = pair.small_g_prime(v);
            for a in 0..n {
                for b in 0..n {
                    sec[a * n + b].add(pt.wh * d2 * pt.y[a] * pt.y[b]);
                }
            }
        }
        if with_nodes {
            for j in 0..=n {
                nodes[pt.nodes[j]] += pt.wh * dg * pt.bary[j];
            }
        }
    }
    if with_nodes {
        for (i, pt, phi) in &q.phantom {
            let v = q.value(pt, c, shift);
            if v > 0.0 || !singular {
                nodes[*i] += pt.wh * pair.small_g(v) * phi;
            }
        }
    }
    JSums {
        divergent: false,
        g_mass: gm.value(),
        gprime_mass: gp.value(),
        moment: mom.iter().map(|s| s.value()).collect(),
        second: sec.iter().map(|s| s.value()).collect(),
        node_weights: nodes,
        vmin,
    }
}

/// Sums needed for `I` over `Ω = {u < 0}`.
#[derive(Clone, Debug)]
pub struct ISums {
    pub i: f64,
    /// `∫_{V_i ∩ Ω} f(−u)` per node.
    pub cell_mass: Vec<f64>,
    pub omega_volume: f64,
}

pub fn i_sums(cx: &CellComplex, nodes: &[Vec<f64>], c: &[f64], pair: &StructuralPair, order: usize) -> ISums {
    let mut total = NeumaierSum::new();
    let mut vol = NeumaierSum::new();
    let mut cell_mass = vec![0.0; c.len()];
    match cx.dim {
        1 => {
            let rule = IntervalRule::new(order.max(4) + 2);
            for (i, cell) in cx.cells.iter().enumerate() {
                if cell.vertices.is_empty() {
                    continue;
                }
                let (mut lo, mut hi) = (cell.vertices[0][0], cell.vertices[1][0]);
                let p = nodes[i][0];
                // {p x < c}
                if p > 0.0 {
                    hi = hi.min(c[i] / p);
                } else if p < 0.0 {
                    lo = lo.max(c[i] / p);
                } else if c[i] <= 0.0 {
                    continue;
                }
                if hi <= lo {
                    continue;
                }
                let len = hi - lo;
                vol.add(len);
                let mut mi = NeumaierSum::new();
                for (x, wt) in rule.x.iter().zip(&rule.w) {
                    let xx = lo + x * len;
                    let s = (c[i] - p * xx).max(0.0);
                    total.add(wt * len * pair.big_f(s));
                    mi.add(wt * len * pair.small_f(s));
                }
                cell_mass[i] = mi.value();
            }
        }
        _ => {
            let rule = TriangleRule::new(order.max(4));
            for (i, cell) in cx.cells.iter().enumerate() {
                if cell.vertices.len() < 3 {
                    continue;
                }
                let ring: Vec<[f64; 2]> = cell.vertices.iter().map(|v| [v[0], v[1]]).collect();
                let p = [nodes[i][0], nodes[i][1]];
                let clipped = clip_polygon(&ring, p, c[i]);
                if clipped.len() < 3 {
                    continue;
                }
                vol.add(polygon_area(&clipped));
                let mut mi = NeumaierSum::new();
                for k in 1..clipped.len() - 1 {
                    for (x, wt, _) in rule.on_triangle(clipped[0], clipped[k], clipped[k + 1]) {
                        let s = (c[i] - p[0] * x[0] - p[1] * x[1]).max(0.0);
                        total.add(wt * pair.big_f(s));
                        mi.add(wt * pair.small_f(s));
                    }
                }
                cell_mass[i] = mi.value();
            }
        }
    }
    ISums { i: total.value(), cell_mass, omega_volume: vol.value() }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MassBalanceRow {
    pub node: usize,
    pub mu: f64,
    pub nu: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyReport {
    pub i: f64,
    /// `J`, or `None` when `∫ G(v)` diverged.
    pub j: Option<f64>,
    pub energy: f64,
    pub big_lambda: f64,
    pub lambda: Option<f64>,
    /// `∂E/∂c_i`; empty when `J` diverged.
    pub gradient: Vec<f64>,
    pub mass_balance: Vec<MassBalanceRow>,
    pub mu_sum: f64,
    pub nu_sum: f64,
    pub omega_volume: f64,
    pub mass: f64,
    pub g_at_j: f64,
    pub vmin: f64,
    pub vmax: f64,
    /// `Σ_i ∫_{V_i} f(−u) / I`: total of the `−log I` part of the gradient.
    pub i_part_total: f64,
    /// `Λ Σ_i ∂J/∂c_i`: total of the `ΛJ` part.
    pub j_part_total: f64,
    pub order: usize,
    pub level: usize,
}

impl EnergyReport {
    /// `Σ_i |μ_i − ν_i|` over all nodes.
    pub fn el_total(&self) -> f64 {
        self.mass_balance.iter().map(|r| r.residual).sum()
    }
}

/// Everything the solver needs at one set of intercepts.
pub struct Evaluation {
    pub complex: CellComplex,
    pub jquad: JQuad,
    pub report: EnergyReport,
}

pub fn evaluate(
    v: &PiecewiseAffineConvex,
    pair: &StructuralPair,
    w: &WeightedDomain,
    big_lambda: f64,
    disc: Discretization,
) -> Result<Evaluation> {
    let cx = v.complex()?;
    let q = JQuad::build(&cx, &v.nodes, w, disc);
    let report = report_from(&cx, &q, v, pair, w, big_lambda, disc)?;
    Ok(Evaluation { complex: cx, jquad: q, report })
}

pub fn report_from(
    cx: &CellComplex,
    q: &JQuad,
    v: &PiecewiseAffineConvex,
    pair: &StructuralPair,
    w: &WeightedDomain,
    big_lambda: f64,
    disc: Discretization,
) -> Result<EnergyReport> {
    let c = &v.intercepts;
    let is = i_sums(cx, &v.nodes, c, pair, disc.order);
    if !(is.i > 0.0) {
        return Err(Error::EmptyFreeBoundary(format!("I = {}", is.i)));
    }
    let zero = vec![0.0; cx.dim];
    let js = j_sums(q, pair, c, &zero, true, false);
    let vmin = c.iter().zip(&cx.active).filter(|(_, a)| **a).map(|(c, _)| *c).fold(f64::INFINITY, f64::min);
    let vmax = c.iter().zip(&cx.active).filter(|(_, a)| **a).map(|(c, _)| *c).fold(f64::NEG_INFINITY, f64::max);
    let mass = w.mass;
    let mu_total: f64 = is.cell_mass.iter().sum();
    if js.divergent {
        return Ok(EnergyReport {
            i: is.i,
            j: None,
            energy: f64::INFINITY,
            big_lambda,
            lambda: None,
            gradient: vec![],
            mass_balance: vec![],
            mu_sum: 1.0,
            nu_sum: f64::NAN,
            omega_volume: is.omega_volume,
            mass,
            g_at_j: f64::NAN,
            vmin,
            vmax,
            i_part_total: mu_total / is.i,
            j_part_total: f64::NAN,
            order: disc.order,
            level: disc.level,
        });
    }
    // the quadrature mass stands in for H so that Σν = 1 holds exactly
    let h_quad: f64 = compensated(q.points.iter().map(|p| p.wh));
    let mean_g = js.g_mass / h_quad;
    let j = pair.g_inverse(mean_g);
    let g_at_j = pair.small_g(j);
    let energy = -is.i.ln() + big_lambda * j;
    let mut gradient = Vec::with_capacity(c.len());
    let mut rows = Vec::with_capacity(c.len());
    for k in 0..c.len() {
        let d_i = is.cell_mass[k];
        let d_j = js.node_weights[k] / (g_at_j * h_quad);
        gradient.push(-d_i / is.i + big_lambda * d_j);
        let mu = if mu_total > 0.0 { d_i / mu_total } else { 0.0 };
        let nu = js.node_weights[k] / js.gprime_mass;
        rows.push(MassBalanceRow { node: k, mu, nu, residual: (mu - nu).abs() });
    }
    let active_nu: f64 = rows.iter().zip(&cx.active).filter(|(_, a)| **a).map(|(r, _)| r.nu).sum();
    let mu_sum = rows.iter().map(|r| r.mu).sum();
    Ok(EnergyReport {
        i: is.i,
        j: Some(j),
        energy,
        big_lambda,
        lambda: Some(g_at_j * mass / (big_lambda * is.i)),
        gradient,
        mass_balance: rows,
        mu_sum,
        nu_sum: active_nu,
        omega_volume: is.omega_volume,
        mass,
        g_at_j,
        vmin,
        vmax,
        i_part_total: mu_total / is.i,
        j_part_total: big_lambda * js.node_weights.iter().sum::<f64>() / (g_at_j * h_quad),
        order: disc.order,
        level: disc.level,
    })
}

fn compensated<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    crate::convex_core::quadrature::compensated_sum(it)
}

/// `I(u) = ∫_{u<0} F(−u) dx`.
pub fn functional_i(u: &PiecewiseAffineConvex, pair: &StructuralPair, disc: Discretization) -> Result<f64> {
    let cx = u.complex()?;
    let is = i_sums(&cx, &u.nodes, &u.intercepts, pair, disc.order);
    if !(is.omega_volume > 0.0) {
        return Err(Error::EmptyFreeBoundary("u ≥ 0 everywhere".into()));
    }
    Ok(is.i)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum JOutcome {
    Finite(f64),
    /// `∫ G(v)` is `−∞`; `J` is `G⁻¹(−∞)`.
    Divergent { limit: f64 },
}

impl JOutcome {
    pub fn value(&self) -> f64 {
        match *self {
            JOutcome::Finite(j) => j,
            JOutcome::Divergent { limit } => limit,
        }
    }
}

/// `J(v) = G⁻¹((1/H) ∫_P G(v) h dy)`.
pub fn functional_j(v: &PiecewiseAffineConvex, pair: &StructuralPair, w: &WeightedDomain, disc: Discretization) -> Result<JOutcome> {
    let cx = v.complex()?;
    let q = JQuad::build(&cx, &v.nodes, w, disc);
    Ok(j_from_quad(&q, pair, &v.intercepts, &vec![0.0; cx.dim]))
}

pub fn j_from_quad(q: &JQuad, pair: &StructuralPair, c: &[f64], shift: &[f64]) -> JOutcome {
    let js = j_sums(q, pair, c, shift, false, false);
    if js.divergent {
        return JOutcome::Divergent { limit: pair.g_inverse(f64::NEG_INFINITY) };
    }
    let h: f64 = compensated(q.points.iter().map(|p| p.wh));
    JOutcome::Finite(pair.g_inverse(js.g_mass / h))
}

pub fn energy_and_gradient(
    v: &PiecewiseAffineConvex,
    pair: &StructuralPair,
    w: &WeightedDomain,
    big_lambda: f64,
    disc: Discretization,
) -> Result<EnergyReport> {
    Ok(evaluate(v, pair, w, big_lambda, disc)?.report)
}

/// `λ = g(J) H / (Λ I)`.
pub fn lambda_of(report: &EnergyReport, w: &WeightedDomain) -> Option<f64> {
    report.j.map(|_| report.g_at_j * w.mass / (report.big_lambda * report.i))
}
