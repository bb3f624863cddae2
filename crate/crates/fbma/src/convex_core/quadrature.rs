//! Fixed-order quadrature on intervals and simplices.
//!
//! Every reduction goes through [`NeumaierSum`] in a fixed order, so results do
//! not depend on how callers schedule work.

use crate::convex_core::polytope::Polytope;
use crate::{Error, Result};
use serde::Serialize;
use std::f64::consts::PI;

/// Compensated accumulator (Neumaier variant of Kahan summation).
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = NeumaierSum::new();
    for x in it {
        acc.add(x);
    }
    acc.value()
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(m >= 1);
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(m, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(m, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[m - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(m: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=m {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if m == 0 {
        return (1.0, 0.0);
    }
    let d = m as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Rule on the reference interval [0,1]: (nodes, weights).
#[derive(Clone, Debug)]
pub struct IntervalRule {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl IntervalRule {
    pub fn new(order: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        Self {
            x: x.iter().map(|t| 0.5 * (t + 1.0)).collect(),
            w: w.iter().map(|t| 0.5 * t).collect(),
        }
    }
}

/// Collapsed (Duffy) Gauss rule on the reference triangle with vertices
/// (0,0),(1,0),(0,1): barycentric-free points and weights summing to 1/2.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub pts: Vec<[f64; 2]>,
    pub w: Vec<f64>,
}

impl TriangleRule {
    pub fn new(order: usize) -> Self {
        let r = IntervalRule::new(order);
        let mut pts = Vec::with_capacity(order * order);
        let mut w = Vec::with_capacity(order * order);
        for (i, &s) in r.x.iter().enumerate() {
            for (j, &t) in r.x.iter().enumerate() {
                pts.push([s * (1.0 - t), t]);
                w.push(r.w[i] * r.w[j] * (1.0 - t));
            }
        }
        Self { pts, w }
    }

    /// Map onto a physical triangle; returns (point, weight) pairs.
    pub fn on_triangle(&self, a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> impl Iterator<Item = ([f64; 2], f64, [f64; 3])> + '_ {
        let e1 = [b[0] - a[0], b[1] - a[1]];
        let e2 = [c[0] - a[0], c[1] - a[1]];
        let jac = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
        self.pts.iter().zip(self.w.iter()).map(move |(p, &w)| {
            let x = [a[0] + p[0] * e1[0] + p[1] * e2[0], a[1] + p[0] * e1[1] + p[1] * e2[1]];
            (x, w * jac, [1.0 - p[0] - p[1], p[0], p[1]])
        })
    }
}

/// Conical product rule on an n-simplex given by its n+1 vertices.
/// Returns (point, weight, barycentric coordinates).
pub fn simplex_rule(vertices: &[Vec<f64>], order: usize) -> Vec<(Vec<f64>, f64, Vec<f64>)> {
    let n = vertices.len() - 1;
    let r = IntervalRule::new(order);
    // reference simplex points via recursive collapse
    let mut refpts: Vec<(Vec<f64>, f64)> = vec![(vec![], 1.0)];
    for level in 0..n {
        let mut next = Vec::with_capacity(refpts.len() * order);
        // coordinate t_level with Jacobian (1-t)^{n-1-level}
        let power = (n - 1 - level) as i32;
        for (p, w) in &refpts {
            for (k, &t) in r.x.iter().enumerate() {
                let mut q = p.clone();
                q.push(t);
                next.push((q, w * r.w[k] * (1.0 - t).powi(power)));
            }
        }
        refpts = next;
    }
    let vol = simplex_volume(vertices);
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    refpts
        .into_iter()
        .map(|(t, w)| {
            // map cube coordinates t to barycentric coordinates
            let mut bary = vec![0.0; n + 1];
            let mut rem = 1.0;
            for k in 0..n {
                bary[k + 1] = rem * t[k];
                rem *= 1.0 - t[k];
            }
            // collapse ordering: bary[1..] built so that coordinate sum <= 1
            let s: f64 = bary[1..].iter().sum();
            bary[0] = 1.0 - s;
            let dim = vertices[0].len();
            let mut x = vec![0.0; dim];
            for (b, v) in bary.iter().zip(vertices) {
                for d in 0..dim {
                    x[d] += b * v[d];
                }
            }
            (x, w * vol * fact, bary)
        })
        .collect()
}

/// Unsigned volume of a simplex (any embedding dimension equal to n).
pub fn simplex_volume(vertices: &[Vec<f64>]) -> f64 {
    let n = vertices.len() - 1;
    if n == 0 {
        return 1.0;
    }
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| vertices[i + 1][j] - vertices[0][j]);
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    m.determinant().abs() / fact
}

/// Sample points with positive weights over a region, plus density values.
#[derive(Clone, Debug, Serialize)]
pub struct QuadratureGrid {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub density: Vec<f64>,
    pub level: usize,
}

impl QuadratureGrid {
    /// Grid over a polytope: simplex decomposition, each simplex split
    /// `2^level` times per edge, `order` Gauss points per direction.
    pub fn over_polytope(p: &Polytope, order: usize, level: usize, h: &dyn Fn(&[f64]) -> f64) -> Result<Self> {
        let simplices = p.simplex_decomposition()?;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for s in &simplices {
            for sub in refine_simplex(s, level) {
                for (x, w, _) in simplex_rule(&sub, order) {
                    points.push(x);
                    weights.push(w);
                }
            }
        }
        let density = points.iter().map(|x| h(x)).collect();
        Ok(Self { dim: p.dim, points, weights, density, level })
    }

    pub fn total_weight(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (0..self.dim).map(|d| format!("x{d}")).collect();
        header.push("weight".into());
        header.push("h".into());
        wr.write_record(&header).map_err(io_err)?;
        for i in 0..self.points.len() {
            let mut rec: Vec<String> = self.points[i].iter().map(|v| format!("{v:.17e}")).collect();
            rec.push(format!("{:.17e}", self.weights[i]));
            rec.push(format!("{:.17e}", self.density[i]));
            wr.write_record(&rec).map_err(io_err)?;
        }
        wr.flush().map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(())
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::Numerical(format!("csv: {e}"))
}

/// Split a simplex into 2^(n·level) congruent pieces (n ≤ 2) or
/// barycentric pieces for n = 3.
pub fn refine_simplex(s: &[Vec<f64>], level: usize) -> Vec<Vec<Vec<f64>>> {
    let mut cur = vec![s.to_vec()];
    for _ in 0..level {
        let mut next = Vec::new();
        for t in &cur {
            next.extend(split_once(t));
        }
        cur = next;
    }
    cur
}

fn mid(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

fn split_once(t: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
    match t.len() {
        2 => {
            let m = mid(&t[0], &t[1]);
            vec![vec![t[0].clone(), m.clone()], vec![m, t[1].clone()]]
        }
        3 => {
            let (a, b, c) = (&t[0], &t[1], &t[2]);
            let ab = mid(a, b);
            let bc = mid(b, c);
            let ca = mid(c, a);
            vec![
                vec![a.clone(), ab.clone(), ca.clone()],
                vec![ab.clone(), b.clone(), bc.clone()],
                vec![ca.clone(), bc.clone(), c.clone()],
                vec![ab, bc, ca],
            ]
        }
        _ => {
            // split along the longest edge
            let n = t.len();
            let mut best = (0, 1, -1.0);
            for i in 0..n {
                for j in i + 1..n {
                    let d: f64 = t[i].iter().zip(&t[j]).map(|(x, y)| (x - y) * (x - y)).sum();
                    if d > best.2 {
                        best = (i, j, d);
                    }
                }
            }
            let m = mid(&t[best.0], &t[best.1]);
            let mut s1 = t.to_vec();
            let mut s2 = t.to_vec();
            s1[best.0] = m.clone();
            s2[best.1] = m;
            vec![s1, s2]
        }
    }
}

/// Outcome of an integration that may encounter a singular integrand.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum IntegralOutcome {
    Finite(f64),
    /// The integrand fell below the floor; the integral is reported as −∞.
    Divergent { level: usize },
}

impl IntegralOutcome {
    pub fn value(&self) -> f64 {
        match self {
            IntegralOutcome::Finite(v) => *v,
            IntegralOutcome::Divergent { .. } => f64::NEG_INFINITY,
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, IntegralOutcome::Divergent { .. })
    }
}

/// Integrate `integrand · h` over a grid in fixed order.
pub fn measure_integrate(grid: &QuadratureGrid, integrand: &dyn Fn(&[f64]) -> f64, floor: f64) -> IntegralOutcome {
    let mut acc = NeumaierSum::new();
    for i in 0..grid.points.len() {
        let val = integrand(&grid.points[i]);
        if !(val >= floor) {
            return IntegralOutcome::Divergent { level: grid.level };
        }
        acc.add(grid.weights[i] * grid.density[i] * val);
    }
    IntegralOutcome::Finite(acc.value())
}

/// Integrate under successive refinement; reports divergence at the first
/// level where the integrand crosses the floor, else the finest value.
pub fn measure_integrate_refined(
    p: &Polytope,
    h: &dyn Fn(&[f64]) -> f64,
    integrand: &dyn Fn(&[f64]) -> f64,
    floor: f64,
    order: usize,
    max_level: usize,
) -> Result<IntegralOutcome> {
    let mut last = IntegralOutcome::Finite(0.0);
    for level in 0..=max_level {
        let grid = QuadratureGrid::over_polytope(p, order, level, h)?;
        last = measure_integrate(&grid, integrand, floor);
        if last.is_divergent() {
            return Ok(last);
        }
    }
    Ok(last)
}

/// Adaptive-free composite Gauss rule on [a,b] with geometric grading towards
/// the endpoints when `graded` is set (for weights vanishing or blowing up at
/// the boundary).
pub fn integrate_interval(a: f64, b: f64, f: &dyn Fn(f64) -> f64, order: usize, pieces: usize, graded: bool) -> f64 {
    let r = IntervalRule::new(order);
    let mut acc = NeumaierSum::new();
    let mut breaks = Vec::new();
    if graded {
        // geometric grading towards both ends, `pieces` layers per side
        let half = 0.5 * (b - a);
        let layers = pieces.max(2) as i32;
        breaks.push(a);
        for k in (0..layers).rev() {
            breaks.push(a + half * 0.5f64.powi(k));
        }
        for k in 1..layers {
            breaks.push(b - half * 0.5f64.powi(k));
        }
        breaks.push(b);
    } else {
        for k in 0..=pieces {
            breaks.push(a + (b - a) * k as f64 / pieces as f64);
        }
    }
    for win in breaks.windows(2) {
        let (lo, hi) = (win[0], win[1]);
        let len = hi - lo;
        if len <= 0.0 {
            continue;
        }
        for (x, w) in r.x.iter().zip(&r.w) {
            acc.add(w * len * f(lo + x * len));
        }
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(5);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn triangle_rule_weights_sum_to_half() {
        let t = TriangleRule::new(4);
        let s: f64 = t.w.iter().sum();
        assert!((s - 0.5).abs() < 1e-15);
        // ∫ x² y over reference triangle = 1/60
        let s: f64 = t.pts.iter().zip(&t.w).map(|(p, w)| w * p[0] * p[0] * p[1]).sum();
        assert!((s - 1.0 / 60.0).abs() < 1e-15);
    }

    #[test]
    fn simplex_rule_on_tetrahedron() {
        let v = vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let r = simplex_rule(&v, 3);
        let vol: f64 = r.iter().map(|(_, w, _)| w).sum();
        assert!((vol - 1.0 / 6.0).abs() < 1e-14);
        // ∫ x dV = 1/24
        let m: f64 = r.iter().map(|(x, w, _)| w * x[0]).sum();
        assert!((m - 1.0 / 24.0).abs() < 1e-14);
    }

    #[test]
    fn unit_interval_measure() {
        let p = Polytope::interval(-1.0, 1.0).unwrap();
        let g = QuadratureGrid::over_polytope(&p, 4, 0, &|_| 1.0).unwrap();
        let v = measure_integrate(&g, &|_| 1.0, f64::NEG_INFINITY);
        assert!((v.value() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn inverse_square_integral() {
        // ∫_{[-1,1]} −(1+|y|)^{-2} dy = −1
        let p = Polytope::interval(-1.0, 1.0).unwrap();
        let out = measure_integrate_refined(&p, &|_| 1.0, &|y| -(1.0 + y[0].abs()).powi(-2), -1e12, 8, 3).unwrap();
        assert!((out.value() + 1.0).abs() < 1e-8);
    }

    #[test]
    fn singular_integrand_reports_divergence() {
        let p = Polytope::interval(-1.0, 1.0).unwrap();
        let out = measure_integrate_refined(&p, &|_| 1.0, &|y| -(y[0].abs()).powi(-3), -1e8, 4, 12).unwrap();
        assert!(out.is_divergent());
    }

    #[test]
    fn compensated_sum_is_order_stable() {
        let xs: Vec<f64> = (0..1000).map(|k| 1.0 / (k as f64 + 1.0)).collect();
        let a = compensated_sum(xs.iter().copied());
        let b = compensated_sum(xs.iter().rev().copied());
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn graded_interval_handles_endpoint_singularity() {
        // ∫_0^1 s^{-1/2} ds = 2
        let v = integrate_interval(0.0, 1.0, &|s| s.powf(-0.5), 12, 40, true);
        assert!((v - 2.0).abs() < 1e-6, "{v}");
    }
}
