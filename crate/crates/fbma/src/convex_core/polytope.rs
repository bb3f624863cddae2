//! Convex polytopes in V-representation with lazily derived facets.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

const GEOM_EPS: f64 = 1e-12;

/// Closed half-space `⟨normal, x⟩ ≤ offset` with a unit normal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    pub dim: usize,
    /// Extreme points; counter-clockwise in 2-D, `[lo, hi]` in 1-D.
    pub vertices: Vec<Vec<f64>>,
    #[serde(default)]
    pub inner_radius: Option<f64>,
    #[serde(default)]
    pub outer_radius: Option<f64>,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

impl Polytope {
    /// Build from a point cloud; keeps only extreme points.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("empty vertex list".into()));
        }
        let dim = points[0].len();
        if dim == 0 || points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("inconsistent or non-finite vertex coordinates".into()));
        }
        let vertices = match dim {
            1 => {
                let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
                let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
                if hi - lo <= GEOM_EPS {
                    return Err(Error::Domain("interval has zero length".into()));
                }
                vec![vec![lo], vec![hi]]
            }
            2 => {
                let pts: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
                let hull = convex_hull_2d(&pts);
                if hull.len() < 3 || polygon_area(&hull) <= GEOM_EPS {
                    return Err(Error::Domain("points do not span the plane".into()));
                }
                hull.into_iter().map(|p| p.to_vec()).collect()
            }
            _ => {
                let mut pts = points.clone();
                dedup_points(&mut pts);
                let facets = facets_bruteforce(&pts)?;
                pts.retain(|p| {
                    let active = facets.iter().filter(|h| (dot(&h.normal, p) - h.offset).abs() < 1e-9).count();
                    active >= dim
                });
                pts
            }
        };
        Ok(Self { dim, vertices, inner_radius: None, outer_radius: None })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![vec![lo], vec![hi]])
    }

    /// Axis-aligned cube `[-r, r]^n`.
    pub fn cube(n: usize, r: f64) -> Result<Self> {
        let mut pts = Vec::with_capacity(1 << n);
        for mask in 0..(1usize << n) {
            pts.push((0..n).map(|d| if mask >> d & 1 == 1 { r } else { -r }).collect());
        }
        Self::new(pts)
    }

    /// Regular m-gon with circumradius `r`, first vertex at angle `phase`.
    pub fn regular_polygon(m: usize, r: f64, phase: f64) -> Result<Self> {
        if m < 3 {
            return Err(Error::InvalidInput("polygon needs at least 3 vertices".into()));
        }
        let pts = (0..m)
            .map(|k| {
                let t = phase + 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                vec![r * t.cos(), r * t.sin()]
            })
            .collect();
        Self::new(pts)
    }

    /// Cross-polytope `conv{±r e_i}`.
    pub fn cross_polytope(n: usize, r: f64) -> Result<Self> {
        let mut pts = Vec::new();
        for d in 0..n {
            for s in [-1.0, 1.0] {
                let mut p = vec![0.0; n];
                p[d] = s * r;
                pts.push(p);
            }
        }
        Self::new(pts)
    }

    pub fn with_cached_radii(mut self) -> Result<Self> {
        self.inner_radius = Some(self.inner_radius_about_origin()?);
        self.outer_radius = Some(self.outer_radius_about_origin());
        Ok(self)
    }

    pub fn support(&self, x: &[f64]) -> f64 {
        self.vertices.iter().map(|v| dot(v, x)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn facets(&self) -> Vec<Halfspace> {
        match self.dim {
            1 => vec![
                Halfspace { normal: vec![-1.0], offset: -self.vertices[0][0] },
                Halfspace { normal: vec![1.0], offset: self.vertices[1][0] },
            ],
            2 => {
                let m = self.vertices.len();
                (0..m)
                    .map(|k| {
                        let a = &self.vertices[k];
                        let b = &self.vertices[(k + 1) % m];
                        let e = [b[0] - a[0], b[1] - a[1]];
                        let len = (e[0] * e[0] + e[1] * e[1]).sqrt();
                        let nrm = vec![e[1] / len, -e[0] / len];
                        let off = dot(&nrm, a);
                        Halfspace { normal: nrm, offset: off }
                    })
                    .collect()
            }
            _ => facets_bruteforce(&self.vertices).unwrap_or_default(),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.facets().iter().all(|h| dot(&h.normal, x) <= h.offset + tol)
    }

    /// Signed distance to the boundary, positive inside.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        self.facets().iter().map(|h| h.offset - dot(&h.normal, x)).fold(f64::INFINITY, f64::min)
    }

    /// `dist(0, ∂P)` when the origin is interior.
    pub fn inner_radius_about_origin(&self) -> Result<f64> {
        let r = self.boundary_distance(&vec![0.0; self.dim]);
        if r <= GEOM_EPS {
            return Err(Error::Domain("origin is not interior to the polytope".into()));
        }
        Ok(r)
    }

    pub fn outer_radius_about_origin(&self) -> f64 {
        self.vertices.iter().map(|v| norm(v)).fold(0.0, f64::max)
    }

    /// Minkowski gauge `‖y‖_P = inf{t > 0 : y ∈ tP}`; equals `φ_{P°}(y)`.
    pub fn gauge(&self, y: &[f64]) -> Result<f64> {
        let facets = self.facets();
        let mut g: f64 = 0.0;
        for h in &facets {
            if h.offset <= GEOM_EPS {
                return Err(Error::Domain("origin is not interior to the polytope".into()));
            }
            g = g.max(dot(&h.normal, y) / h.offset);
        }
        Ok(g)
    }

    pub fn volume(&self) -> f64 {
        match self.dim {
            1 => self.vertices[1][0] - self.vertices[0][0],
            2 => {
                let pts: Vec<[f64; 2]> = self.vertices.iter().map(|p| [p[0], p[1]]).collect();
                polygon_area(&pts)
            }
            _ => self
                .simplex_decomposition()
                .map(|s| s.iter().map(|t| crate::convex_core::quadrature::simplex_volume(t)).sum())
                .unwrap_or(0.0),
        }
    }

    pub fn centroid(&self) -> Vec<f64> {
        match self.dim {
            1 => vec![0.5 * (self.vertices[0][0] + self.vertices[1][0])],
            _ => {
                let simplices = self.simplex_decomposition().unwrap_or_default();
                let mut c = vec![0.0; self.dim];
                let mut tot = 0.0;
                for s in &simplices {
                    let v = crate::convex_core::quadrature::simplex_volume(s);
                    for d in 0..self.dim {
                        c[d] += v * s.iter().map(|p| p[d]).sum::<f64>() / s.len() as f64;
                    }
                    tot += v;
                }
                c.iter().map(|x| x / tot).collect()
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for a in &self.vertices {
            for b in &self.vertices {
                d = d.max(norm(&sub(a, b)));
            }
        }
        d
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.vertices.iter().map(|v| v.iter().map(|x| x * s).collect()).collect())
    }

    pub fn translated(&self, t: &[f64]) -> Result<Self> {
        Self::new(self.vertices.iter().map(|v| v.iter().zip(t).map(|(x, y)| x + y).collect()).collect())
    }

    /// Decomposition into simplices (each a list of n+1 points).
    pub fn simplex_decomposition(&self) -> Result<Vec<Vec<Vec<f64>>>> {
        match self.dim {
            1 => Ok(vec![self.vertices.clone()]),
            2 => {
                let m = self.vertices.len();
                Ok((1..m - 1)
                    .map(|k| vec![self.vertices[0].clone(), self.vertices[k].clone(), self.vertices[k + 1].clone()])
                    .collect())
            }
            3 => {
                let c = {
                    let mut c = vec![0.0; 3];
                    for v in &self.vertices {
                        for d in 0..3 {
                            c[d] += v[d] / self.vertices.len() as f64;
                        }
                    }
                    c
                };
                let mut out = Vec::new();
                for h in self.facets() {
                    let on: Vec<Vec<f64>> = self
                        .vertices
                        .iter()
                        .filter(|v| (dot(&h.normal, v) - h.offset).abs() < 1e-9)
                        .cloned()
                        .collect();
                    let ordered = order_planar_polygon(&on, &h.normal);
                    for k in 1..ordered.len() - 1 {
                        out.push(vec![c.clone(), ordered[0].clone(), ordered[k].clone(), ordered[k + 1].clone()]);
                    }
                }
                Ok(out)
            }
            n => Err(Error::UnsupportedDimension(n)),
        }
    }
}

/// `P° = {x : ⟨x, v⟩ ≤ 1 for all vertices v}`.
pub fn polar_dual(p: &Polytope) -> Result<Polytope> {
    let facets = p.facets();
    if facets.is_empty() {
        return Err(Error::Domain("polytope has no facets".into()));
    }
    let mut pts = Vec::with_capacity(facets.len());
    for h in &facets {
        if h.offset <= GEOM_EPS {
            return Err(Error::Domain("origin is not interior to the polytope".into()));
        }
        pts.push(h.normal.iter().map(|a| a / h.offset).collect());
    }
    Polytope::new(pts)
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
pub fn convex_hull_2d(pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p: Vec<[f64; 2]> = pts.to_vec();
    p.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap().then(a[1].partial_cmp(&b[1]).unwrap()));
    p.dedup_by(|a, b| (a[0] - b[0]).abs() < GEOM_EPS && (a[1] - b[1]).abs() < GEOM_EPS);
    if p.len() < 3 {
        return p;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let scale = p.iter().map(|q| q[0].abs().max(q[1].abs())).fold(1.0, f64::max);
    let tol = 1e-14 * scale * scale;
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], q) <= tol {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], q) <= tol {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

pub fn polygon_area(pts: &[[f64; 2]]) -> f64 {
    let m = pts.len();
    let mut s = 0.0;
    for k in 0..m {
        let a = pts[k];
        let b = pts[(k + 1) % m];
        s += a[0] * b[1] - a[1] * b[0];
    }
    0.5 * s.abs()
}

fn dedup_points(pts: &mut Vec<Vec<f64>>) {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for p in pts.iter() {
        if !out.iter().any(|q| norm(&sub(p, q)) < GEOM_EPS) {
            out.push(p.clone());
        }
    }
    *pts = out;
}

/// Facets by enumerating n-subsets; adequate for the small vertex counts of
/// analytic queries in n ≥ 3.
fn facets_bruteforce(pts: &[Vec<f64>]) -> Result<Vec<Halfspace>> {
    let n = pts[0].len();
    let m = pts.len();
    if m < n + 1 {
        return Err(Error::Domain("too few points to span space".into()));
    }
    let mut out: Vec<Halfspace> = Vec::new();
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        // hyperplane through pts[idx]
        let base = &pts[idx[0]];
        let rows: Vec<Vec<f64>> = idx[1..].iter().map(|&i| sub(&pts[i], base)).collect();
        if let Some(nrm) = null_vector(&rows, n) {
            let off = dot(&nrm, base);
            let sides: Vec<f64> = pts.iter().map(|p| dot(&nrm, p) - off).collect();
            let maxs = sides.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mins = sides.iter().cloned().fold(f64::INFINITY, f64::min);
            let cand = if maxs <= 1e-9 {
                Some(Halfspace { normal: nrm, offset: off })
            } else if mins >= -1e-9 {
                Some(Halfspace { normal: nrm.iter().map(|x| -x).collect(), offset: -off })
            } else {
                None
            };
            if let Some(h) = cand {
                if !out.iter().any(|g| norm(&sub(&g.normal, &h.normal)) < 1e-9 && (g.offset - h.offset).abs() < 1e-9) {
                    out.push(h);
                }
            }
        }
        // next combination
        let mut k = n;
        loop {
            if k == 0 {
                if out.len() < n + 1 {
                    return Err(Error::Domain("points do not span space".into()));
                }
                return Ok(out);
            }
            k -= 1;
            if idx[k] < m - n + k {
                idx[k] += 1;
                for j in k + 1..n {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Unit vector orthogonal to the n−1 given rows, if they are independent.
fn null_vector(rows: &[Vec<f64>], n: usize) -> Option<Vec<f64>> {
    let mut a = nalgebra::DMatrix::zeros(n, n);
    for (i, r) in rows.iter().enumerate() {
        for j in 0..n {
            a[(i, j)] = r[j];
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t?;
    let sv = &svd.singular_values;
    let (imin, smin) = sv.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let second = sv.iter().enumerate().filter(|(i, _)| *i != imin).map(|(_, &s)| s).fold(f64::INFINITY, f64::min);
    if smax == 0.0 || second < 1e-10 * smax {
        return None;
    }
    let _ = smin;
    let v: Vec<f64> = (0..n).map(|j| vt[(imin, j)]).collect();
    let l = norm(&v);
    Some(v.iter().map(|x| x / l).collect())
}

/// Order coplanar points of a 3-D facet counter-clockwise around `normal`.
fn order_planar_polygon(pts: &[Vec<f64>], normal: &[f64]) -> Vec<Vec<f64>> {
    let c: Vec<f64> = (0..3).map(|d| pts.iter().map(|p| p[d]).sum::<f64>() / pts.len() as f64).collect();
    let e1 = {
        let d = sub(&pts[0], &c);
        let l = norm(&d);
        d.iter().map(|x| x / l).collect::<Vec<_>>()
    };
    let e2 = vec![
        normal[1] * e1[2] - normal[2] * e1[1],
        normal[2] * e1[0] - normal[0] * e1[2],
        normal[0] * e1[1] - normal[1] * e1[0],
    ];
    let mut with_angle: Vec<(f64, Vec<f64>)> = pts
        .iter()
        .map(|p| {
            let d = sub(p, &c);
            (dot(&d, &e2).atan2(dot(&d, &e1)), p.clone())
        })
        .collect();
    with_angle.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    with_angle.into_iter().map(|x| x.1).collect()
}
