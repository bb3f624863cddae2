//! Ellipsoids and the maximal-volume inscribed (John) ellipsoid of a polytope.

use crate::convex_core::polytope::{dot, Halfspace, Polytope};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// `{center + Σ_k t_k L_k a_k : |t| ≤ 1}` with orthonormal axes `a_k` and
/// ascending semi-axes `L_1 ≤ … ≤ L_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: Vec<f64>,
    pub axes: Vec<Vec<f64>>,
    pub lengths: Vec<f64>,
}

impl Ellipsoid {
    pub fn ball(center: Vec<f64>, r: f64) -> Self {
        let n = center.len();
        let axes = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
        Self { center, axes, lengths: vec![r; n] }
    }

    /// Build from a symmetric positive definite shape matrix.
    pub fn from_shape(center: Vec<f64>, m: &DMatrix<f64>) -> Result<Self> {
        let n = center.len();
        let eig = m.clone().symmetric_eigen();
        let mut pairs: Vec<(f64, Vec<f64>)> = (0..n)
            .map(|k| (eig.eigenvalues[k], (0..n).map(|i| eig.eigenvectors[(i, k)]).collect()))
            .collect();
        if pairs.iter().any(|p| !(p.0 > 0.0)) {
            return Err(Error::Domain("shape matrix is not positive definite".into()));
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(Self {
            center,
            lengths: pairs.iter().map(|p| p.0).collect(),
            axes: pairs.into_iter().map(|p| p.1).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn shape(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (a, l) in self.axes.iter().zip(&self.lengths) {
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] += l * a[i] * a[j];
                }
            }
        }
        m
    }

    pub fn support(&self, x: &[f64]) -> f64 {
        let s: f64 = self.axes.iter().zip(&self.lengths).map(|(a, l)| (l * dot(a, x)).powi(2)).sum();
        dot(&self.center, x) + s.sqrt()
    }

    pub fn scaled_about_center(&self, s: f64) -> Self {
        Self { center: self.center.clone(), axes: self.axes.clone(), lengths: self.lengths.iter().map(|l| l * s).collect() }
    }

    pub fn volume(&self) -> f64 {
        let n = self.dim() as f64;
        let unit = std::f64::consts::PI.powf(n / 2.0) / gamma_half_plus_one(self.dim());
        unit * self.lengths.iter().product::<f64>()
    }

    /// Orthonormality defect of the axis rows.
    pub fn axis_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.axes.iter().enumerate() {
            for (j, b) in self.axes.iter().enumerate() {
                let t = if i == j { 1.0 } else { 0.0 };
                d = d.max((dot(a, b) - t).abs());
            }
        }
        d
    }
}

fn gamma_half_plus_one(n: usize) -> f64 {
    // Γ(n/2 + 1)
    if n % 2 == 0 {
        (1..=n / 2).map(|k| k as f64).product()
    } else {
        let mut g = std::f64::consts::PI.sqrt() / 2.0; // Γ(3/2)
        let mut x = 1.5;
        while x < n as f64 / 2.0 + 1.0 - 1e-9 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

/// Support function of a polytope or ellipsoid.
pub enum ConvexBody<'a> {
    Polytope(&'a Polytope),
    Ellipsoid(&'a Ellipsoid),
}

pub fn support_function(k: ConvexBody<'_>, x: &[f64]) -> Result<f64> {
    match k {
        ConvexBody::Polytope(p) => {
            if p.vertices.is_empty() {
                return Err(Error::InvalidInput("empty vertex list".into()));
            }
            Ok(p.support(x))
        }
        ConvexBody::Ellipsoid(e) => Ok(e.support(x)),
    }
}

struct Barrier<'a> {
    n: usize,
    facets: &'a [Halfspace],
}

impl Barrier<'_> {
    fn nvar(&self) -> usize {
        self.n + self.n * (self.n + 1) / 2
    }

    fn unpack(&self, th: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let d = DVector::from_column_slice(&th[..n]);
        let mut m = DMatrix::zeros(n, n);
        let mut k = n;
        for i in 0..n {
            for j in i..n {
                m[(i, j)] = th[k];
                m[(j, i)] = th[k];
                k += 1;
            }
        }
        (d, m)
    }

    fn slacks(&self, th: &[f64]) -> Option<(Vec<f64>, Vec<DVector<f64>>, DMatrix<f64>)> {
        let (d, m) = self.unpack(th);
        m.clone().cholesky()?;
        let mut s = Vec::with_capacity(self.facets.len());
        let mut ws = Vec::with_capacity(self.facets.len());
        for h in self.facets {
            let a = DVector::from_column_slice(&h.normal);
            let w = &m * &a;
            let sj = h.offset - a.dot(&d) - w.norm();
            if !(sj > 0.0) {
                return None;
            }
            s.push(sj);
            ws.push(w);
        }
        Some((s, ws, m))
    }

    fn value(&self, th: &[f64], mu: f64) -> Option<f64> {
        let (s, _, m) = self.slacks(th)?;
        let ld = m.cholesky()?.l().diagonal().iter().map(|x| 2.0 * x.ln()).sum::<f64>();
        Some(ld + mu * s.iter().map(|x| x.ln()).sum::<f64>())
    }

    fn basis(&self) -> Vec<DMatrix<f64>> {
        let n = self.n;
        let mut out = Vec::new();
        for p in 0..n {
            for q in p..n {
                let mut b = DMatrix::zeros(n, n);
                b[(p, q)] = 1.0;
                b[(q, p)] = 1.0;
                out.push(b);
            }
        }
        out
    }

    /// Analytic gradient and Hessian of the barrier objective.
    fn derivatives(&self, th: &[f64], mu: f64, basis: &[DMatrix<f64>]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let n = self.n;
        let nv = self.nvar();
        let (s, ws, m) = self.slacks(th)?;
        let minv = m.try_inverse()?;
        let mut g = DVector::zeros(nv);
        let mut hess = DMatrix::zeros(nv, nv);
        for (q, bq) in basis.iter().enumerate() {
            let mq = &minv * bq;
            g[n + q] += mq.trace();
            for (r, br) in basis.iter().enumerate() {
                hess[(n + q, n + r)] -= (&mq * (&minv * br)).trace();
            }
        }
        for (j, h) in self.facets.iter().enumerate() {
            let a = DVector::from_column_slice(&h.normal);
            let w = &ws[j];
            let r = w.norm().max(1e-300);
            let t: Vec<DVector<f64>> = basis.iter().map(|b| b * &a).collect();
            let mut ds = DVector::zeros(nv);
            for i in 0..n {
                ds[i] = -a[i];
            }
            for (q, tq) in t.iter().enumerate() {
                ds[n + q] = -w.dot(tq) / r;
            }
            g += &ds * (mu / s[j]);
            hess -= &ds * ds.transpose() * (mu / (s[j] * s[j]));
            for (q, tq) in t.iter().enumerate() {
                for (rr, tr) in t.iter().enumerate() {
                    let d2 = (tq.dot(tr) - w.dot(tq) * w.dot(tr) / (r * r)) / r;
                    hess[(n + q, n + rr)] -= mu * d2 / s[j];
                }
            }
        }
        Some((g, hess))
    }
}

/// Maximal-volume ellipsoid inscribed in a full-dimensional polytope,
/// computed by a log-barrier Newton path.
pub fn john_ellipsoid(omega: &Polytope) -> Result<Ellipsoid> {
    let n = omega.dim;
    if omega.vertices.len() < n + 1 || omega.volume() <= 1e-14 {
        return Err(Error::Domain("degenerate body has no inscribed ellipsoid".into()));
    }
    if n == 1 {
        let lo = omega.vertices[0][0];
        let hi = omega.vertices[1][0];
        return Ok(Ellipsoid::ball(vec![0.5 * (lo + hi)], 0.5 * (hi - lo)));
    }
    let facets = omega.facets();
    let bar = Barrier { n, facets: &facets };
    let basis = bar.basis();
    let c = omega.centroid();
    let r = omega.boundary_distance(&c);
    if !(r > 0.0) {
        return Err(Error::Domain("degenerate body has no inscribed ellipsoid".into()));
    }
    let mut th = vec![0.0; bar.nvar()];
    th[..n].copy_from_slice(&c);
    let mut k = n;
    for i in 0..n {
        for j in i..n {
            th[k] = if i == j { 0.5 * r } else { 0.0 };
            k += 1;
        }
    }
    let mut mu = 1.0;
    while mu > 1e-16 {
        for _ in 0..200 {
            let (g, hess) = bar.derivatives(&th, mu, &basis).ok_or_else(|| Error::Numerical("barrier left feasible set".into()))?;
            let neg = -0.5 * (&hess + hess.transpose());
            let dx = match neg.cholesky() {
                Some(ch) => ch.solve(&g),
                None => g.clone() * 1e-3,
            };
            let dec = g.dot(&dx);
            if !(dec > 1e-24) {
                break;
            }
            let f0 = bar.value(&th, mu).unwrap_or(f64::NEG_INFINITY);
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..80 {
                let cand: Vec<f64> = th.iter().zip(dx.iter()).map(|(a, b)| a + t * b).collect();
                if let Some(f1) = bar.value(&cand, mu) {
                    if f1 >= f0 + 1e-4 * t * dec {
                        th = cand;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved || dec < 1e-22 {
                break;
            }
        }
        mu *= 0.1;
    }
    let (d, m) = bar.unpack(&th);
    Ellipsoid::from_shape(d.iter().copied().collect(), &m)
}

/// Largest violation of `x₀+E ⊆ Ω ⊆ x₀+nE` over unit directions.
pub fn john_containment_defect(omega: &Polytope, e: &Ellipsoid, directions: &[Vec<f64>]) -> f64 {
    let n = omega.dim as f64;
    let big = e.scaled_about_center(n);
    let mut worst: f64 = 0.0;
    for x in directions {
        let so = omega.support(x);
        worst = worst.max(e.support(x) - so);
        worst = worst.max(so - big.support(x));
    }
    worst
}

/// Deterministic spread of unit directions (Fibonacci lattice in 3-D).
pub fn sample_directions(n: usize, count: usize) -> Vec<Vec<f64>> {
    match n {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * k as f64;
                    let mut v = vec![r * t.cos(), r * t.sin(), z];
                    v.resize(n, 0.0);
                    v
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gives_unit_disc() {
        let sq = Polytope::cube(2, 1.0).unwrap();
        let e = john_ellipsoid(&sq).unwrap();
        assert!(e.center.iter().all(|c| c.abs() < 1e-7));
        for l in &e.lengths {
            assert!((l - 1.0).abs() < 1e-7, "{l}");
        }
        assert!(e.axis_defect() < 1e-12);
    }

    #[test]
    fn regular_polygon_approximates_disc() {
        let p = Polytope::regular_polygon(64, 1.0, 0.0).unwrap();
        let e = john_ellipsoid(&p).unwrap();
        let inr = (std::f64::consts::PI / 64.0).cos();
        for l in &e.lengths {
            assert!((l - inr).abs() < 1e-6);
        }
    }

    #[test]
    fn containment_with_factor_n() {
        let tri = Polytope::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let e = john_ellipsoid(&tri).unwrap();
        let dirs = sample_directions(2, 256);
        assert!(john_containment_defect(&tri, &e, &dirs) < 1e-8);
    }

    #[test]
    fn degenerate_body_rejected() {
        let seg = Polytope::new(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0]]);
        assert!(seg.is_err());
    }

    #[test]
    fn ellipsoid_support() {
        let e = Ellipsoid::ball(vec![0.0, 0.0], 1.0);
        assert!((support_function(ConvexBody::Ellipsoid(&e), &[3.0, 4.0]).unwrap() - 5.0).abs() < 1e-15);
    }
}
