//! Cell complex of a max-of-affine function: activity cells in `x`-space and
//! the dual regular triangulation of the slope nodes.

use crate::convex_core::polytope::{dot, polygon_area};
use crate::{Error, Result};
use std::collections::BTreeMap;

/// One activity cell, clipped to the bounding box. In 1-D the vertices are
/// `[lo], [hi]`; in 2-D a counter-clockwise polygon.
#[derive(Clone, Debug, Default)]
pub struct Cell {
    pub vertices: Vec<Vec<f64>>,
    pub volume: f64,
}

#[derive(Clone, Debug)]
pub struct CellComplex {
    pub dim: usize,
    /// Half-width of the bounding box `[−B, B]ⁿ`.
    pub half_width: f64,
    pub cells: Vec<Cell>,
    /// Interior vertices of the complex (where n+1 or more pieces meet).
    pub vertices: Vec<Vec<f64>>,
    pub vertex_values: Vec<f64>,
    /// Regular triangulation of the nodes, as node-index simplices.
    pub simplices: Vec<Vec<usize>>,
    pub active: Vec<bool>,
    pub hull_volume: f64,
}

impl CellComplex {
    /// Envelope value `v(y) = max_k ⟨x_k, y⟩ − u(x_k)`, exact on `conv{p_i}`.
    pub fn dual_value(&self, y: &[f64]) -> f64 {
        self.vertices
            .iter()
            .zip(&self.vertex_values)
            .map(|(x, ux)| dot(x, y) - ux)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_primal(&self) -> f64 {
        self.vertex_values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Distinct points of all clipped cells, box corners included.
    pub fn cell_points(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        let tol = 1e-12 * self.half_width.max(1.0);
        for c in &self.cells {
            for v in &c.vertices {
                if !out.iter().any(|w| w.iter().zip(v).all(|(a, b)| (a - b).abs() <= tol)) {
                    out.push(v.clone());
                }
            }
        }
        out
    }

    pub fn total_cell_volume(&self) -> f64 {
        crate::convex_core::quadrature::compensated_sum(self.cells.iter().map(|c| c.volume))
    }
}

fn primal(nodes: &[Vec<f64>], c: &[f64], x: &[f64]) -> f64 {
    nodes.iter().zip(c).map(|(p, ci)| dot(p, x) - ci).fold(f64::NEG_INFINITY, f64::max)
}

fn initial_half_width(nodes: &[Vec<f64>], c: &[f64]) -> f64 {
    let cmax = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let n = nodes[0].len();
    let centroid: Vec<f64> = (0..n).map(|d| nodes.iter().map(|p| p[d]).sum::<f64>() / nodes.len() as f64).collect();
    let spread = nodes.iter().map(|p| p.iter().zip(&centroid).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()).fold(0.0, f64::max);
    4.0 * (cmax + 1.0) / (0.1 * spread).max(1e-6)
}

pub fn build_complex(nodes: &[Vec<f64>], c: &[f64]) -> Result<CellComplex> {
    if nodes.is_empty() || nodes.len() != c.len() {
        return Err(Error::InvalidInput("node and intercept counts differ".into()));
    }
    match nodes[0].len() {
        1 => build_1d(nodes, c),
        2 => build_2d(nodes, c),
        n => Err(Error::UnsupportedDimension(n)),
    }
}

fn build_1d(nodes: &[Vec<f64>], c: &[f64]) -> Result<CellComplex> {
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&a, &b| nodes[a][0].partial_cmp(&nodes[b][0]).unwrap().then(a.cmp(&b)));
    let scale = 1.0 + c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // lower hull keeping collinear nodes
    let mut hull: Vec<usize> = Vec::new();
    for &i in &order {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (nodes[b][0] - nodes[a][0]) * (c[i] - c[a]) - (c[b] - c[a]) * (nodes[i][0] - nodes[a][0]);
            let span = (nodes[i][0] - nodes[a][0]).abs();
            if cross < -1e-13 * scale * span {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    if hull.len() < 2 {
        return Err(Error::InvalidInput("need at least two distinct slopes".into()));
    }
    let breaks: Vec<f64> = hull.windows(2).map(|w| (c[w[1]] - c[w[0]]) / (nodes[w[1]][0] - nodes[w[0]][0])).collect();
    let bmax = breaks.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let half_width = initial_half_width(nodes, c).max(2.0 * bmax + 1.0);
    let mut cells = vec![Cell::default(); nodes.len()];
    let mut active = vec![false; nodes.len()];
    for (k, &i) in hull.iter().enumerate() {
        let lo = if k == 0 { -half_width } else { breaks[k - 1] };
        let hi = if k + 1 == hull.len() { half_width } else { breaks[k] };
        let hi = hi.max(lo);
        cells[i] = Cell { vertices: vec![vec![lo], vec![hi]], volume: hi - lo };
        active[i] = true;
    }
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    for &b in &breaks {
        if vertices.last().map_or(true, |l: &Vec<f64>| (l[0] - b).abs() > 1e-14 * (1.0 + b.abs())) {
            vertices.push(vec![b]);
        }
    }
    let vertex_values = vertices.iter().map(|x| primal(nodes, c, x)).collect();
    let simplices = hull.windows(2).map(|w| vec![w[0], w[1]]).collect();
    let hull_volume = nodes[*order.last().unwrap()][0] - nodes[order[0]][0];
    Ok(CellComplex { dim: 1, half_width, cells, vertices, vertex_values, simplices, active, hull_volume })
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Edge {
    Box,
    Node(usize),
}

/// Clip a polygon (vertex k carries the tag of edge k→k+1) by `⟨a,x⟩ ≤ b`.
fn clip(poly: &[([f64; 2], Edge)], a: [f64; 2], b: f64, tag: Edge) -> Vec<([f64; 2], Edge)> {
    let m = poly.len();
    let mut out = Vec::with_capacity(m + 1);
    for k in 0..m {
        let (p, t) = poly[k];
        let (q, _) = poly[(k + 1) % m];
        let sp = a[0] * p[0] + a[1] * p[1] - b;
        let sq = a[0] * q[0] + a[1] * q[1] - b;
        let inside_p = sp <= 0.0;
        let inside_q = sq <= 0.0;
        if inside_p {
            out.push((p, t));
            if !inside_q {
                let s = sp / (sp - sq);
                out.push(([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])], tag));
            }
        } else if inside_q {
            let s = sp / (sp - sq);
            out.push(([p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])], t));
        }
    }
    out
}

/// Clip a plain polygon by a half-plane; used for `V_i ∩ {u < 0}` and `Ω`.
pub fn clip_polygon(poly: &[[f64; 2]], a: [f64; 2], b: f64) -> Vec<[f64; 2]> {
    let tagged: Vec<([f64; 2], Edge)> = poly.iter().map(|p| (*p, Edge::Box)).collect();
    clip(&tagged, a, b, Edge::Box).into_iter().map(|(p, _)| p).collect()
}

fn cells_2d(nodes: &[Vec<f64>], c: &[f64], half_width: f64) -> Vec<Vec<([f64; 2], Edge)>> {
    use rayon::prelude::*;
    let b = half_width;
    (0..nodes.len())
        .into_par_iter()
        .map(|i| {
            let pi = [nodes[i][0], nodes[i][1]];
            let mut others: Vec<usize> = (0..nodes.len()).filter(|&j| j != i).collect();
            let d2 = |j: usize| (nodes[j][0] - pi[0]).powi(2) + (nodes[j][1] - pi[1]).powi(2);
            others.sort_by(|&x, &y| d2(x).partial_cmp(&d2(y)).unwrap().then(x.cmp(&y)));
            let mut poly = vec![([-b, -b], Edge::Box), ([b, -b], Edge::Box), ([b, b], Edge::Box), ([-b, b], Edge::Box)];
            for j in others {
                let a = [nodes[j][0] - pi[0], nodes[j][1] - pi[1]];
                let rhs = c[j] - c[i];
                if poly.iter().all(|(p, _)| a[0] * p[0] + a[1] * p[1] <= rhs) {
                    continue;
                }
                poly = clip(&poly, a, rhs, Edge::Node(j));
                if poly.len() < 3 {
                    poly.clear();
                    break;
                }
            }
            poly
        })
        .collect()
}

fn hull_indices(points: &[[f64; 2]], idx: &[usize]) -> Vec<usize> {
    let mut s: Vec<usize> = idx.to_vec();
    s.sort_by(|&a, &b| {
        points[a][0].partial_cmp(&points[b][0]).unwrap().then(points[a][1].partial_cmp(&points[b][1]).unwrap()).then(a.cmp(&b))
    });
    if s.len() < 3 {
        return s;
    }
    let cross = |o: usize, a: usize, b: usize| {
        (points[a][0] - points[o][0]) * (points[b][1] - points[o][1]) - (points[a][1] - points[o][1]) * (points[b][0] - points[o][0])
    };
    let mut lower: Vec<usize> = Vec::new();
    for &p in &s {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 1e-14 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<usize> = Vec::new();
    for &p in s.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 1e-14 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn build_2d(nodes: &[Vec<f64>], c: &[f64]) -> Result<CellComplex> {
    let pts: Vec<[f64; 2]> = nodes.iter().map(|p| [p[0], p[1]]).collect();
    let all: Vec<usize> = (0..nodes.len()).collect();
    let hull = hull_indices(&pts, &all);
    let hull_pts: Vec<[f64; 2]> = hull.iter().map(|&i| pts[i]).collect();
    let hull_volume = polygon_area(&hull_pts);
    if hull.len() < 3 || hull_volume <= 1e-14 {
        return Err(Error::InvalidInput("slope nodes do not span the plane".into()));
    }
    let pmax = pts.iter().map(|p| (p[0] * p[0] + p[1] * p[1]).sqrt()).fold(0.0, f64::max);
    let cmax = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut half_width = initial_half_width(nodes, c);
    let mut last_err = String::new();
    for _ in 0..40 {
        let polys = cells_2d(nodes, c, half_width);
        // interior complex vertices: both adjacent edges come from nodes
        let scale = 1.0 + cmax + half_width * pmax;
        let tol = 1e-10 * scale;
        let mut raw: Vec<[f64; 2]> = Vec::new();
        for poly in &polys {
            let m = poly.len();
            for k in 0..m {
                let prev = poly[(k + m - 1) % m].1;
                if matches!(prev, Edge::Node(_)) && matches!(poly[k].1, Edge::Node(_)) {
                    raw.push(poly[k].0);
                }
            }
        }
        let mut facets: BTreeMap<Vec<usize>, [f64; 2]> = BTreeMap::new();
        for x in &raw {
            let xv = [x[0], x[1]];
            let ux = primal(nodes, c, &xv);
            let set: Vec<usize> = (0..nodes.len()).filter(|&m| (dot(&nodes[m], &xv) - c[m] - ux).abs() < tol).collect();
            if set.len() >= 3 {
                facets.entry(set).or_insert(*x);
            }
        }
        // drop node sets strictly contained in another one
        let keys: Vec<Vec<usize>> = facets.keys().cloned().collect();
        let maximal: Vec<Vec<usize>> = keys
            .iter()
            .filter(|k| !keys.iter().any(|o| o.len() > k.len() && k.iter().all(|i| o.binary_search(i).is_ok())))
            .cloned()
            .collect();
        let mut simplices = Vec::new();
        let mut area = 0.0;
        let mut vertices = Vec::new();
        for set in &maximal {
            let ring = hull_indices(&pts, set);
            if ring.len() < 3 {
                continue;
            }
            let start = (0..ring.len()).min_by_key(|&k| ring[k]).unwrap();
            let r: Vec<usize> = (0..ring.len()).map(|k| ring[(start + k) % ring.len()]).collect();
            for k in 1..r.len() - 1 {
                let tri = [pts[r[0]], pts[r[k]], pts[r[k + 1]]];
                area += polygon_area(&tri);
                simplices.push(vec![r[0], r[k], r[k + 1]]);
            }
            let x = facets[set];
            vertices.push(vec![x[0], x[1]]);
        }
        let rel = (area - hull_volume).abs() / hull_volume;
        if rel < 1e-8 {
            let mut active = vec![false; nodes.len()];
            for s in &simplices {
                for &i in s {
                    active[i] = true;
                }
            }
            let cells = polys
                .iter()
                .map(|poly| {
                    if poly.len() < 3 {
                        return Cell::default();
                    }
                    let ring: Vec<[f64; 2]> = poly.iter().map(|(p, _)| *p).collect();
                    Cell { volume: polygon_area(&ring), vertices: ring.iter().map(|p| vec![p[0], p[1]]).collect() }
                })
                .collect();
            let vertex_values = vertices.iter().map(|x| primal(nodes, c, x)).collect();
            return Ok(CellComplex { dim: 2, half_width, cells, vertices, vertex_values, simplices, active, hull_volume });
        }
        last_err = format!("triangulation covers {area} of hull area {hull_volume}");
        half_width *= 2.0;
    }
    Err(Error::Numerical(format!("regular triangulation incomplete: {last_err}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_nodes_split_line_at_zero() {
        let cx = build_complex(&[vec![-1.0], vec![1.0]], &[0.0, 0.0]).unwrap();
        assert_eq!(cx.cells[0].vertices[1][0], 0.0);
        assert_eq!(cx.cells[1].vertices[0][0], 0.0);
    }

    #[test]
    fn three_nodes_middle_cell() {
        let d = 0.3;
        let cx = build_complex(&[vec![-1.0], vec![0.0], vec![1.0]], &[0.0, -d, 0.0]).unwrap();
        assert!((cx.cells[1].vertices[0][0] + d).abs() < 1e-15);
        assert!((cx.cells[1].vertices[1][0] - d).abs() < 1e-15);
        assert_eq!(cx.simplices.len(), 2);
    }

    #[test]
    fn square_with_center_lifted_by_paraboloid() {
        let nodes = vec![vec![-1.0, -1.0], vec![1.0, -1.0], vec![1.0, 1.0], vec![-1.0, 1.0], vec![0.1, 0.05]];
        let c: Vec<f64> = nodes.iter().map(|p| 0.5 * dot(p, p)).collect();
        let cx = build_complex(&nodes, &c).unwrap();
        assert_eq!(cx.simplices.len(), 4);
        let box_area = (2.0 * cx.half_width).powi(2);
        assert!((cx.total_cell_volume() - box_area).abs() < 1e-8 * box_area);
        assert!(cx.active.iter().all(|&a| a));
    }

    #[test]
    fn node_above_envelope_is_inactive() {
        let nodes = vec![vec![-1.0, -1.0], vec![1.0, -1.0], vec![1.0, 1.0], vec![-1.0, 1.0], vec![0.0, 0.0]];
        let c = vec![1.0, 1.0, 1.0, 1.0, 5.0];
        let cx = build_complex(&nodes, &c).unwrap();
        assert!(!cx.active[4]);
        assert_eq!(cx.simplices.len(), 2);
        assert!((cx.dual_value(&[0.0, 0.0]) - 1.0).abs() < 1e-12);
    }
}
