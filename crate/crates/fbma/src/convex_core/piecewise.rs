//! Convex functions carried by slope nodes and intercepts.

use crate::convex_core::complex::{build_complex, clip_polygon, CellComplex};
use crate::convex_core::polytope::{dot, Polytope};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Merge tolerance for coincident slope nodes.
pub const NODE_MERGE_TOL: f64 = 1e-12;

/// `u(x) = max_i(⟨p_i,x⟩ − c_i)`; its conjugate `v` is the lower convex
/// envelope of the lifted nodes `(p_i, c_i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseAffineConvex {
    pub nodes: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    /// Set when every intercept equals the envelope value at its node.
    pub canonical: bool,
}

impl PiecewiseAffineConvex {
    pub fn new(nodes: Vec<Vec<f64>>, intercepts: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != intercepts.len() {
            return Err(Error::InvalidInput("node and intercept counts differ or are zero".into()));
        }
        let n = nodes[0].len();
        if n == 0 || nodes.iter().any(|p| p.len() != n || p.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidInput("inconsistent node coordinates".into()));
        }
        if intercepts.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite intercept".into()));
        }
        let mut kept: Vec<Vec<f64>> = Vec::with_capacity(nodes.len());
        let mut vals: Vec<f64> = Vec::with_capacity(nodes.len());
        for (p, c) in nodes.into_iter().zip(intercepts) {
            match kept.iter().position(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= NODE_MERGE_TOL)) {
                Some(k) => vals[k] = vals[k].min(c),
                None => {
                    kept.push(p);
                    vals.push(c);
                }
            }
        }
        if kept.len() < n + 1 {
            return Err(Error::InvalidInput(format!("need at least {} distinct nodes", n + 1)));
        }
        Ok(Self { nodes: kept, intercepts: vals, canonical: false })
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].len()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn primal(&self, x: &[f64]) -> f64 {
        self.primal_argmax(x).0
    }

    /// Value and maximizing piece; ties go to the lowest index.
    pub fn primal_argmax(&self, x: &[f64]) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, (p, c)) in self.nodes.iter().zip(&self.intercepts).enumerate() {
            let val = dot(p, x) - c;
            if val > best.0 {
                best = (val, i);
            }
        }
        best
    }

    /// `v + t − ⟨x₀,·⟩`, i.e. `u(· + x₀) − t`.
    pub fn shifted(&self, x0: &[f64], t: f64) -> Self {
        let intercepts = self.nodes.iter().zip(&self.intercepts).map(|(p, c)| c + t - dot(x0, p)).collect();
        Self { nodes: self.nodes.clone(), intercepts, canonical: self.canonical }
    }

    pub fn complex(&self) -> Result<CellComplex> {
        build_complex(&self.nodes, &self.intercepts)
    }

    /// Lower every intercept to the envelope value at its node.
    pub fn canonicalize(&mut self) -> Result<CellComplex> {
        let cx = self.complex()?;
        for i in 0..self.len() {
            if !cx.active[i] {
                let env = cx.dual_value(&self.nodes[i]);
                if env < self.intercepts[i] {
                    self.intercepts[i] = env;
                }
            }
        }
        self.canonical = true;
        Ok(cx)
    }

    /// Envelope `v` at a point of `conv{p_i}`.
    pub fn dual(&self, y: &[f64]) -> Result<f64> {
        Ok(self.complex()?.dual_value(y))
    }
}

/// Conjugate of the primal function restricted to the bounding box of its
/// complex. The result's nodes are the cell points `x_k` with intercepts
/// `u(x_k)`, so its own primal is `v` on `conv{p_i}`.
pub fn legendre_transform(v: &PiecewiseAffineConvex) -> Result<PiecewiseAffineConvex> {
    let cx = v.complex()?;
    let pts = cx.cell_points();
    let vals: Vec<f64> = pts.iter().map(|x| v.primal(x)).collect();
    let mut out = PiecewiseAffineConvex::new(pts, vals)?;
    out.canonical = true;
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ActivityCell {
    pub node: usize,
    pub region: Vec<Vec<f64>>,
    pub volume: f64,
}

/// Activity cells `V_i = {x : piece i attains the max}` inside `[−B,B]ⁿ`.
pub fn activity_cells(u: &PiecewiseAffineConvex, half_width: Option<f64>) -> Result<Vec<ActivityCell>> {
    let b = half_width.ok_or_else(|| Error::InvalidInput("unbounded cells need a bounding box".into()))?;
    let cx = u.complex()?;
    if b > cx.half_width {
        return Err(Error::InvalidInput(format!("box half-width {b} exceeds the computed complex extent {}", cx.half_width)));
    }
    let n = u.dim();
    let mut out = Vec::new();
    for (i, cell) in cx.cells.iter().enumerate() {
        if !cx.active[i] && cell.volume <= 0.0 {
            continue;
        }
        let region: Vec<Vec<f64>> = if n == 1 {
            let lo = cell.vertices[0][0].max(-b);
            let hi = cell.vertices[1][0].min(b);
            if hi <= lo {
                continue;
            }
            vec![vec![lo], vec![hi]]
        } else {
            let mut ring: Vec<[f64; 2]> = cell.vertices.iter().map(|p| [p[0], p[1]]).collect();
            for (a, off) in [([1.0, 0.0], b), ([-1.0, 0.0], b), ([0.0, 1.0], b), ([0.0, -1.0], b)] {
                ring = clip_polygon(&ring, a, off);
            }
            if ring.len() < 3 {
                continue;
            }
            ring.iter().map(|p| vec![p[0], p[1]]).collect()
        };
        let volume = if n == 1 {
            region[1][0] - region[0][0]
        } else {
            let ring: Vec<[f64; 2]> = region.iter().map(|p| [p[0], p[1]]).collect();
            crate::convex_core::polytope::polygon_area(&ring)
        };
        out.push(ActivityCell { node: i, region, volume });
    }
    Ok(out)
}

/// The free-boundary domain `Ω = {u < 0}` as a polytope.
pub fn negative_set(u: &PiecewiseAffineConvex) -> Result<Polytope> {
    let n = u.dim();
    let empty = || Error::EmptyFreeBoundary("u ≥ 0 everywhere".into());
    match n {
        1 => {
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for (p, c) in u.nodes.iter().zip(&u.intercepts) {
                let p = p[0];
                if p > 0.0 {
                    hi = hi.min(c / p);
                } else if p < 0.0 {
                    lo = lo.max(c / p);
                } else if *c <= 0.0 {
                    return Err(empty());
                }
            }
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidInput("negative set is unbounded".into()));
            }
            if hi - lo <= 1e-14 * (1.0 + hi.abs() + lo.abs()) {
                return Err(empty());
            }
            Polytope::interval(lo, hi)
        }
        2 => {
            let cx = u.complex()?;
            let b = cx.half_width;
            let mut ring = vec![[-b, -b], [b, -b], [b, b], [-b, b]];
            for (p, c) in u.nodes.iter().zip(&u.intercepts) {
                ring = clip_polygon(&ring, [p[0], p[1]], *c);
                if ring.len() < 3 {
                    return Err(empty());
                }
            }
            let area = crate::convex_core::polytope::polygon_area(&ring);
            if area <= 1e-14 * b * b {
                return Err(empty());
            }
            Polytope::new(ring.iter().map(|p| vec![p[0], p[1]]).collect()).map_err(|_| empty())
        }
        d => Err(Error::UnsupportedDimension(d)),
    }
}

/// `(1/H) ∫_P y h(y) dy` by simplex quadrature.
pub fn h_barycenter(p: &Polytope, h: &dyn Fn(&[f64]) -> f64, order: usize, level: usize) -> Result<Vec<f64>> {
    let grid = crate::convex_core::quadrature::QuadratureGrid::over_polytope(p, order, level, h)?;
    let mass = crate::convex_core::quadrature::compensated_sum(grid.weights.iter().zip(&grid.density).map(|(w, d)| w * d));
    if !(mass > 1e-300) {
        return Err(Error::DegenerateDensity(format!("total mass {mass}")));
    }
    Ok((0..p.dim)
        .map(|d| {
            crate::convex_core::quadrature::compensated_sum(
                grid.points.iter().zip(grid.weights.iter().zip(&grid.density)).map(|(y, (w, h))| y[d] * w * h),
            ) / mass
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_merge_to_min_intercept() {
        let v = PiecewiseAffineConvex::new(vec![vec![-1.0], vec![1.0], vec![1.0 + 1e-13]], vec![0.0, 2.0, 1.0]).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.intercepts[1], 1.0);
        let cells = activity_cells(&v, Some(10.0)).unwrap();
        assert_eq!(cells.len(), 2);
    }

    #[test]
    fn negative_set_of_abs_minus_one() {
        let u = PiecewiseAffineConvex::new(vec![vec![-1.0], vec![1.0]], vec![1.0, 1.0]).unwrap();
        let om = negative_set(&u).unwrap();
        assert_eq!(om.vertices, vec![vec![-1.0], vec![1.0]]);
    }

    #[test]
    fn positive_function_has_empty_free_boundary() {
        let u = PiecewiseAffineConvex::new(vec![vec![-1.0], vec![1.0]], vec![-1.0, -1.0]).unwrap();
        assert!(matches!(negative_set(&u), Err(Error::EmptyFreeBoundary(_))));
    }

    #[test]
    fn enemy_family_negative_set_is_scaled_polar() {
        // v = max(φ_P − C, −δ) sampled at P's vertices and the origin
        let (cc, dd) = (0.7, 0.2);
        let nodes = vec![vec![0.0, 0.0], vec![1.0, -1.0], vec![1.0, 1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]];
        let c = vec![dd, cc, cc, cc, cc];
        let u = PiecewiseAffineConvex::new(nodes, c).unwrap();
        let om = negative_set(&u).unwrap();
        let polar = crate::convex_core::polytope::polar_dual(&Polytope::cube(2, 1.0).unwrap()).unwrap().scaled(cc).unwrap();
        assert!((om.volume() - polar.volume()).abs() < 1e-12);
        for v in &polar.vertices {
            assert!(om.contains(v, 1e-12));
        }
    }

    #[test]
    fn barycenter_of_linear_density() {
        let p = Polytope::interval(-1.0, 1.0).unwrap();
        let b = h_barycenter(&p, &|y| 1.0 + y[0], 6, 0).unwrap();
        assert!((b[0] - 1.0 / 3.0).abs() < 1e-14);
        let p = Polytope::interval(0.0, 2.0).unwrap();
        assert!((h_barycenter(&p, &|_| 1.0, 4, 0).unwrap()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_density_is_degenerate() {
        let p = Polytope::interval(0.0, 2.0).unwrap();
        assert!(matches!(h_barycenter(&p, &|_| 0.0, 4, 0), Err(Error::DegenerateDensity(_))));
    }
}
