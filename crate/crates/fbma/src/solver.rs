//! Minimization of the discrete energy over intercepts, with Euler-Lagrange
//! and optimal-transport certificates for the result.

use crate::convex_core::complex::{clip_polygon, CellComplex};
use crate::convex_core::piecewise::{negative_set, PiecewiseAffineConvex};
use crate::convex_core::polytope::{dot, norm, polygon_area, Polytope};
use crate::convex_core::quadrature::{IntervalRule, NeumaierSum, TriangleRule};
use crate::functionals::energy::{evaluate, Discretization, EnergyReport, Evaluation, JQuad};
use crate::functionals::hessian::energy_hessian;
use nalgebra::{DMatrix, DVector};
use crate::normalize::{
    affine_replacement, boundary_contact_replacement, john_recenter, normalize_with_quad, NormalizationResult, NormalizeOptions,
    ReplacementTarget,
};
use crate::structure::{classify_structure, Property, StructuralPair, WeightedDomain};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Boundary nodes along `∂P` plus a triangular lattice inside.
    Lattice,
    /// Vertices of `P` plus uniform random interior points.
    Random,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub big_lambda: f64,
    pub nodes: usize,
    pub placement: Placement,
    pub max_iter: usize,
    /// On `‖∇E‖₁` relative to the sum of the magnitudes of its two parts.
    pub grad_tol: f64,
    /// On `Σ_i |μ_i − ν_i|`.
    pub mass_tol: f64,
    /// Normalization residual, relative to `diam P`.
    pub norm_tol: f64,
    pub armijo: f64,
    pub shrink: f64,
    pub memory: usize,
    /// Boundary-contact replacement (and memory reset) every this many iterations.
    pub replace_every: usize,
    pub starts: usize,
    pub seed: u64,
    /// Decreasing Λ values solved in turn after `big_lambda`, warm-started.
    pub continuation: Vec<f64>,
    pub discretization: Discretization,
    /// Diverged once `diam Ω / inf_P v` grows by this factor over its start.
    pub blowup: f64,
    pub init_delta: f64,
    pub init_c: f64,
    pub init_curvature: f64,
    /// Larger node counts re-solved from scratch by every start; a start whose
    /// `diam Ω` or `v(0)` still moves by more than `refine_tol` (relative)
    /// between the two finest levels is reported as diverged.
    pub refinement: Vec<usize>,
    pub refine_tol: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            big_lambda: 1.0,
            nodes: 64,
            placement: Placement::Lattice,
            max_iter: 2000,
            grad_tol: 1e-7,
            mass_tol: 1e-6,
            norm_tol: 1e-9,
            armijo: 1e-4,
            shrink: 0.5,
            memory: 10,
            replace_every: 50,
            starts: 1,
            seed: 0,
            continuation: vec![],
            discretization: Discretization::default(),
            blowup: 1e4,
            init_delta: 1.0,
            init_c: 1.0,
            init_curvature: 0.5,
            refinement: vec![],
            refine_tol: 0.05,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.big_lambda > 0.0) || self.continuation.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::InvalidInput("Λ must be positive".into()));
        }
        if self.nodes < n + 1 {
            return Err(Error::InvalidInput(format!("need at least {} nodes", n + 1)));
        }
        let positive = [self.grad_tol, self.mass_tol, self.norm_tol, self.armijo, self.blowup, self.init_delta, self.init_c];
        if positive.iter().any(|t| !(*t > 0.0)) || !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidInput("tolerances and step parameters must be positive, shrink in (0,1)".into()));
        }
        if self.refinement.iter().any(|&m| m < n + 1) || !(self.refine_tol > 0.0) {
            return Err(Error::InvalidInput("refinement levels need at least n+1 nodes and a positive tolerance".into()));
        }
        if self.starts == 0 || self.memory == 0 || self.max_iter == 0 {
            return Err(Error::InvalidInput("starts, memory and max_iter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    DivergedDiam,
    NormalizationFailure,
    MaxIter,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub energy: f64,
    pub grad_rel: f64,
    pub diam_omega: f64,
    pub v_at_zero: f64,
    pub inf_v: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StartSummary {
    pub start: usize,
    pub status: SolveStatus,
    pub energy: f64,
    pub iterations: usize,
    pub message: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveResult {
    pub v: PiecewiseAffineConvex,
    pub omega: Polytope,
    pub report: EnergyReport,
    pub normalization: Option<NormalizationResult>,
    pub history: Vec<HistoryRow>,
    pub status: SolveStatus,
    pub message: String,
    pub property: Property,
    pub starts: Vec<StartSummary>,
    /// `(Λ, status)` for every stage of the continuation.
    pub continuation: Vec<(f64, SolveStatus)>,
    /// Last Λ of the schedule that converged.
    pub last_converged_lambda: Option<f64>,
    /// Smallest `inf_P v / v(0)` seen along the accepted iterates.
    pub min_inf_ratio: f64,
    pub grad_rel: f64,
}

/// Node sample of `P` with roughly `count` points.
pub fn place_nodes(p: &Polytope, count: usize, rule: Placement, seed: u64) -> Result<Vec<Vec<f64>>> {
    match p.dim {
        1 => {
            let (lo, hi) = (p.vertices[0][0], p.vertices[1][0]);
            let m = count.max(2);
            Ok((0..m).map(|k| vec![lo + (hi - lo) * k as f64 / (m - 1) as f64]).collect())
        }
        2 => match rule {
            Placement::Lattice => Ok(lattice_nodes(p, count)),
            Placement::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut out = p.vertices.clone();
                let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
                for v in &p.vertices {
                    for d in 0..2 {
                        lo[d] = lo[d].min(v[d]);
                        hi[d] = hi[d].max(v[d]);
                    }
                }
                while out.len() < count {
                    let y = vec![rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
                    if p.contains(&y, -1e-9) {
                        out.push(y);
                    }
                }
                Ok(out)
            }
        },
        d => Err(Error::UnsupportedDimension(d)),
    }
}

fn lattice_at(p: &Polytope, s: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let m = p.vertices.len();
    for k in 0..m {
        let (a, b) = (&p.vertices[k], &p.vertices[(k + 1) % m]);
        let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        let pieces = (len / s).round().max(1.0) as usize;
        for j in 0..pieces {
            let t = j as f64 / pieces as f64;
            out.push(vec![a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    let r = p.outer_radius_about_origin() + s;
    let rows = (r / (s * 0.75f64.sqrt())).ceil() as i64;
    let cols = (r / s).ceil() as i64 + 1;
    for i in -rows..=rows {
        let y = i as f64 * s * 0.75f64.sqrt();
        let off = if i.rem_euclid(2) == 1 { 0.5 * s } else { 0.0 };
        for j in -cols..=cols {
            let x = j as f64 * s + off;
            let pt = vec![x, y];
            if p.contains(&pt, 0.0) && p.boundary_distance(&pt) > 0.5 * s {
                out.push(pt);
            }
        }
    }
    out
}

fn lattice_nodes(p: &Polytope, count: usize) -> Vec<Vec<f64>> {
    let area = p.volume();
    let mut s = (area / (count as f64 * 0.75f64.sqrt())).sqrt();
    let mut best = lattice_at(p, s);
    for _ in 0..40 {
        let len = best.len() as f64;
        if (len - count as f64).abs() <= 0.02 * count as f64 {
            break;
        }
        s *= (len / count as f64).sqrt().clamp(0.8, 1.25);
        best = lattice_at(p, s);
    }
    best
}

/// `δ + (C − δ)·gauge_P(p) + κ|p|²/2`: the enemy-family start, made strictly convex.
pub fn initial_intercepts(p: &Polytope, nodes: &[Vec<f64>], delta: f64, c: f64, curvature: f64) -> Result<Vec<f64>> {
    nodes
        .iter()
        .map(|y| Ok(delta + (c - delta) * p.gauge(y)? + 0.5 * curvature * dot(y, y)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    /// `G` linear, barycenter zero: translation invariant, recenter in John position.
    Linear,
    /// Translation normalization inside every evaluation.
    Normalize,
}

#[derive(Clone)]
struct Problem<'a> {
    pair: &'a StructuralPair,
    w: &'a WeightedDomain,
    lam: f64,
    disc: Discretization,
    nodes: Vec<Vec<f64>>,
    mode: Mode,
    norm_opts: NormalizeOptions,
}

struct Point {
    v: PiecewiseAffineConvex,
    eval: Evaluation,
    norm: Option<NormalizationResult>,
    grad_rel: f64,
}

impl Point {
    fn energy(&self) -> f64 {
        self.eval.report.energy
    }
    fn grad(&self) -> &[f64] {
        &self.eval.report.gradient
    }
}

impl<'a> Problem<'a> {
    fn point(&self, c: Vec<f64>) -> Result<Point> {
        let mut v = PiecewiseAffineConvex { nodes: self.nodes.clone(), intercepts: c, canonical: false };
        let cx = v.canonicalize()?;
        let (v, norm) = match self.mode {
            Mode::Linear => (v, None),
            Mode::Normalize => {
                let q = JQuad::build(&cx, &v.nodes, self.w, self.disc);
                let (nv, nr) = normalize_with_quad(&v, &q, self.pair, self.w, self.norm_opts)?;
                (nv, Some(nr))
            }
        };
        let eval = evaluate(&v, self.pair, self.w, self.lam, self.disc)?;
        if eval.report.j.is_none() {
            return Err(Error::Numerical("J diverged".into()));
        }
        let grad_rel = gradient_relative(&eval.report);
        Ok(Point { v, eval, norm, grad_rel })
    }
}

/// `‖∇E‖₁ / (‖∂(−log I)‖₁ + ‖Λ ∂J‖₁)`.
fn gradient_relative(r: &EnergyReport) -> f64 {
    let num: f64 = r.gradient.iter().map(|g| g.abs()).sum();
    num / (r.i_part_total + r.j_part_total).max(1e-300)
}

fn omega_diameter(v: &PiecewiseAffineConvex) -> f64 {
    negative_set(v).map(|o| o.diameter()).unwrap_or(f64::NAN)
}

fn history_row(it: usize, p: &Point) -> HistoryRow {
    let r = &p.eval.report;
    HistoryRow {
        iteration: it,
        energy: r.energy,
        grad_rel: p.grad_rel,
        diam_omega: omega_diameter(&p.v),
        v_at_zero: -p.eval.complex.min_primal(),
        inf_v: r.vmin,
    }
}

fn converged(p: &Point, cfg: &SolveConfig, diam_p: f64) -> bool {
    let r = &p.eval.report;
    p.grad_rel <= cfg.grad_tol && r.el_total() <= cfg.mass_tol && p.norm.as_ref().map_or(true, |n| n.residual <= cfg.norm_tol * diam_p * 1e3)
}

struct Outcome {
    point: Option<Point>,
    history: Vec<HistoryRow>,
    status: SolveStatus,
    message: String,
    min_inf_ratio: f64,
}

fn lbfgs_direction(g: &[f64], mem: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y, rho) in mem.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = mem.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|x| -x).collect()
}

/// Damped Newton step on the reduced energy. With translation normalization
/// the reduced energy is `max_x E(c − ⟨x,p⟩)`, whose Hessian is the Schur
/// complement of the translation block.
fn newton_direction(prob: &Problem, p: &Point) -> Option<Vec<f64>> {
    let mut h = energy_hessian(&p.v, &p.eval, prob.pair, prob.disc.order).ok()??;
    let n_nodes = h.nrows();
    let dim = p.v.dim();
    if prob.mode == Mode::Normalize {
        let pm = DMatrix::from_fn(n_nodes, dim, |i, d| prob.nodes[i][d]);
        let hp = &h * &pm;
        let s = pm.transpose() * &hp;
        if let Some(ch) = (-&s).cholesky() {
            let corr = &hp * ch.solve(&hp.transpose());
            h += corr;
        }
    }
    let h = (&h + h.transpose()) * 0.5;
    let active = &p.eval.complex.active;
    let diag: Vec<f64> = (0..n_nodes).filter(|&i| active[i]).map(|i| h[(i, i)].abs()).collect();
    let scale = diag.iter().sum::<f64>() / diag.len().max(1) as f64;
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let mut base = h;
    for i in 0..n_nodes {
        if !active[i] || base[(i, i)].abs() < 1e-12 * scale {
            for j in 0..n_nodes {
                base[(i, j)] = 0.0;
                base[(j, i)] = 0.0;
            }
            base[(i, i)] = scale;
        }
    }
    let g = DVector::from_column_slice(p.grad());
    for tau in [1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2, 1.0] {
        let mut m = base.clone();
        for i in 0..n_nodes {
            m[(i, i)] += tau * scale;
        }
        if let Some(ch) = m.cholesky() {
            let d = -ch.solve(&g);
            if d.iter().all(|x| x.is_finite()) {
                return Some(d.iter().copied().collect());
            }
        }
    }
    None
}

/// Compares a converged solve with its re-solve on a finer node set. A
/// genuine solution is mesh-stable; a degenerating minimizing sequence keeps
/// drifting by a fixed fraction per level.
fn refinement_verdict(coarse: &Outcome, mut fine: Outcome, tol: f64) -> Outcome {
    if fine.status != SolveStatus::Converged {
        return fine;
    }
    let (Some(a), Some(b)) = (coarse.history.last(), fine.history.last()) else { return fine };
    let rel = |x: f64, y: f64| (y - x).abs() / x.abs().max(y.abs()).max(1e-300);
    let (dd, dv) = (rel(a.diam_omega, b.diam_omega), rel(a.v_at_zero, b.v_at_zero));
    if dd > tol || dv > tol {
        fine.status = SolveStatus::DivergedDiam;
        fine.message = format!(
            "not mesh-stable: diam Ω {:.4} -> {:.4}, v(0) {:.4} -> {:.4} between {} and {} nodes",
            a.diam_omega,
            b.diam_omega,
            a.v_at_zero,
            b.v_at_zero,
            coarse.point.as_ref().map_or(0, |p| p.v.nodes.len()),
            fine.point.as_ref().map_or(0, |p| p.v.nodes.len())
        );
    }
    fine
}

fn ratio(p: &Point) -> f64 {
    let d = omega_diameter(&p.v);
    d / p.eval.report.vmin.max(1e-300)
}

fn run_single(prob: &Problem, cfg: &SolveConfig, c0: Vec<f64>, diam_p: f64) -> Outcome {
    let fail = |status, message: String| Outcome { point: None, history: vec![], status, message, min_inf_ratio: f64::NAN };
    let mut cur = match prob.point(c0) {
        Ok(p) => p,
        Err(Error::NormalizationFailure(m)) => return fail(SolveStatus::NormalizationFailure, m),
        Err(e) => return fail(SolveStatus::NormalizationFailure, format!("initial point rejected: {e}")),
    };
    let ratio0 = ratio(&cur);
    let mut history = vec![history_row(0, &cur)];
    let mut min_inf_ratio = cur.eval.report.vmin / (-cur.eval.complex.min_primal());
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut norm_failures = 0usize;
    let mut status = SolveStatus::MaxIter;
    let mut message = String::new();

    for it in 1..=cfg.max_iter {
        if converged(&cur, cfg, diam_p) {
            status = SolveStatus::Converged;
            break;
        }
        let g = cur.grad().to_vec();
        let mut candidates: Vec<(Vec<f64>, f64)> = Vec::with_capacity(2);
        if let Some(d) = newton_direction(prob, &cur) {
            if dot(&g, &d) < 0.0 {
                candidates.push((d, 1.0));
            }
        }
        let mut d = lbfgs_direction(&g, &mem);
        if !(dot(&g, &d) < 0.0) {
            mem.clear();
            d = g.iter().map(|x| -x).collect();
        }
        let first_step = if mem.is_empty() {
            let gmax = g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let cmax = cur.v.intercepts.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            0.05 * cmax.max(1e-3) / gmax.max(1e-300)
        } else {
            1.0
        };
        candidates.push((d, first_step));
        let mut next = None;
        let mut saw_norm_failure = false;
        'dirs: for (d, mut step) in candidates {
            let slope = dot(&g, &d);
            for _ in 0..50 {
                let c: Vec<f64> = cur.v.intercepts.iter().zip(&d).map(|(c, di)| c + step * di).collect();
                match prob.point(c) {
                    Ok(p) if p.energy() <= cur.energy() + cfg.armijo * step * slope => {
                        next = Some(p);
                        break 'dirs;
                    }
                    Err(Error::NormalizationFailure(_)) => saw_norm_failure = true,
                    _ => {}
                }
                step *= cfg.shrink;
            }
        }
        let Some(mut p) = next else {
            if saw_norm_failure {
                norm_failures += 1;
            }
            if !mem.is_empty() {
                mem.clear();
                continue;
            }
            if cur.grad_rel <= 10.0 * cfg.grad_tol {
                status = SolveStatus::Converged;
                message = "line search exhausted at the gradient tolerance".into();
            } else if saw_norm_failure {
                status = SolveStatus::NormalizationFailure;
                message = format!("no admissible descent step: normalization fails along the steepest direction (grad_rel {:.3e})", cur.grad_rel);
            } else {
                message = format!("line search exhausted at grad_rel {:.3e}", cur.grad_rel);
            }
            break;
        };
        let _ = norm_failures;
        if cfg.replace_every > 0 && it % cfg.replace_every == 0 {
            if let Some(q) = periodic_replacement(prob, &p) {
                p = q;
            }
            mem.clear();
        } else {
            let s: Vec<f64> = p.v.intercepts.iter().zip(&cur.v.intercepts).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = p.grad().iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * norm(&s) * norm(&y) {
                mem.push_back((s, y, 1.0 / sy));
                if mem.len() > cfg.memory {
                    mem.pop_front();
                }
            }
        }
        cur = p;
        let row = history_row(it, &cur);
        min_inf_ratio = min_inf_ratio.min(row.inf_v / row.v_at_zero);
        history.push(row);
        let r = ratio(&cur);
        if !(r.is_finite()) || r > cfg.blowup * ratio0 {
            status = SolveStatus::DivergedDiam;
            message = format!("diam Ω / inf_P v grew from {ratio0:.3e} to {r:.3e}");
            break;
        }
    }
    if status == SolveStatus::MaxIter && message.is_empty() {
        if converged(&cur, cfg, diam_p) {
            status = SolveStatus::Converged;
        } else {
            message = format!("iteration budget spent at grad_rel {:.3e}", cur.grad_rel);
        }
    }
    Outcome { point: Some(cur), history, status, message, min_inf_ratio }
}

/// Boundary-contact replacement, then recentering or renormalization; kept
/// only when it does not raise the energy.
fn periodic_replacement(prob: &Problem, p: &Point) -> Option<Point> {
    let (rv, _) = boundary_contact_replacement(&p.v, prob.pair, prob.w, prob.disc).ok()?;
    let rv = match prob.mode {
        Mode::Linear => john_recenter(&rv).ok()?.0,
        Mode::Normalize => rv,
    };
    let q = prob.point(rv.intercepts).ok()?;
    (q.energy() <= p.energy() + 1e-12 * p.energy().abs().max(1.0)).then_some(q)
}

fn check_preconditions(pair: &StructuralPair, w: &WeightedDomain, cfg: &SolveConfig) -> Result<(Mode, Property)> {
    let n = w.dim();
    if n > 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    cfg.validate(n)?;
    let property = classify_structure(pair, n)?.property;
    if pair.is_linear_g() {
        let bary = w.barycenter()?;
        let off = norm(&bary);
        if off > 1e-9 * w.polytope.diameter() {
            return Err(Error::Refused(format!(
                "G is linear and P has h-barycenter {bary:?}; a solution exists if and only if the h-barycenter is 0"
            )));
        }
        Ok((Mode::Linear, property))
    } else {
        Ok((Mode::Normalize, property))
    }
}

fn solve_stage(pair: &StructuralPair, w: &WeightedDomain, cfg: &SolveConfig, lam: f64, nodes: &[Vec<f64>], warm: Option<&[f64]>, mode: Mode) -> (Vec<StartSummary>, Option<(Outcome, usize)>) {
    let prob = Problem {
        pair,
        w,
        lam,
        disc: cfg.discretization,
        nodes: nodes.to_vec(),
        mode,
        norm_opts: NormalizeOptions { tol: cfg.norm_tol, max_iter: 100 },
    };
    let diam_p = w.polytope.diameter();
    let scalings: Vec<(f64, f64)> = (0..cfg.starts)
        .map(|s| {
            let (mut delta, mut big_c) = (cfg.init_delta, cfg.init_c);
            if s > 0 {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(s as u64));
                delta *= rng.gen_range(-0.7f64..0.7).exp();
                big_c *= rng.gen_range(-0.7f64..0.7).exp();
            }
            (delta, big_c)
        })
        .collect();
    let init = |nodes: &[Vec<f64>], (delta, big_c): (f64, f64)| {
        initial_intercepts(&w.polytope, nodes, delta, big_c, cfg.init_curvature).unwrap_or_else(|_| vec![1.0; nodes.len()])
    };
    let outcomes: Vec<Outcome> = match warm {
        Some(c) => vec![run_single(&prob, cfg, c.to_vec(), diam_p)],
        None if cfg.refinement.is_empty() => scalings.into_par_iter().map(|sc| run_single(&prob, cfg, init(nodes, sc), diam_p)).collect(),
        None => scalings
            .into_par_iter()
            .map(|sc| {
                let mut out = run_single(&prob, cfg, init(nodes, sc), diam_p);
                for &count in &cfg.refinement {
                    if out.status != SolveStatus::Converged {
                        break;
                    }
                    let Ok(finer) = place_nodes(&w.polytope, count, cfg.placement, cfg.seed) else { break };
                    let fine_prob = Problem { nodes: finer.clone(), ..prob.clone() };
                    let next = run_single(&fine_prob, cfg, init(&finer, sc), diam_p);
                    out = refinement_verdict(&out, next, cfg.refine_tol);
                }
                out
            })
            .collect(),
    };
    let summaries = outcomes
        .iter()
        .enumerate()
        .map(|(k, o)| StartSummary {
            start: k,
            status: o.status,
            energy: o.point.as_ref().map_or(f64::NAN, |p| p.energy()),
            iterations: o.history.len().saturating_sub(1),
            message: o.message.clone(),
        })
        .collect();
    let rank = |o: &Outcome| (o.status != SolveStatus::Converged, o.point.as_ref().map_or(f64::INFINITY, |p| p.energy()));
    let best = outcomes
        .into_iter()
        .enumerate()
        .filter(|(_, o)| o.point.is_some())
        .min_by(|(_, a), (_, b)| rank(a).partial_cmp(&rank(b)).unwrap_or(std::cmp::Ordering::Equal));
    (summaries, best.map(|(k, o)| (o, k)))
}

pub fn minimize_energy(config: &SolveConfig, pair: &StructuralPair, w: &WeightedDomain) -> Result<SolveResult> {
    let nodes = place_nodes(&w.polytope, config.nodes, config.placement, config.seed)?;
    minimize_with_nodes(config, pair, w, nodes)
}

pub fn minimize_with_nodes(config: &SolveConfig, pair: &StructuralPair, w: &WeightedDomain, nodes: Vec<Vec<f64>>) -> Result<SolveResult> {
    let (mode, property) = check_preconditions(pair, w, config)?;
    let mut schedule = vec![config.big_lambda];
    schedule.extend(config.continuation.iter().copied());

    let mut continuation = Vec::new();
    let mut last_converged = None;
    let mut kept: Option<(Outcome, Vec<StartSummary>, f64)> = None;
    let mut warm: Option<Vec<f64>> = None;
    for (stage, &lam) in schedule.iter().enumerate() {
        let (summaries, best) = solve_stage(pair, w, config, lam, &nodes, warm.as_deref(), mode);
        let Some((outcome, _)) = best else {
            let status = summaries.first().map_or(SolveStatus::NormalizationFailure, |s| s.status);
            continuation.push((lam, status));
            if stage == 0 {
                let msg = summaries.iter().map(|s| s.message.clone()).collect::<Vec<_>>().join("; ");
                return Err(Error::NormalizationFailure(format!("no start produced an admissible iterate: {msg}")));
            }
            break;
        };
        continuation.push((lam, outcome.status));
        let ok = outcome.status == SolveStatus::Converged;
        if ok {
            last_converged = Some(lam);
            warm = outcome.point.as_ref().map(|p| p.v.intercepts.clone());
        }
        if stage == 0 || ok {
            kept = Some((outcome, summaries, lam));
        }
        if !ok {
            break;
        }
    }
    let (outcome, starts, _) = kept.expect("first stage always kept");
    let mut point = outcome.point.expect("kept outcome has a point");
    if mode == Mode::Linear {
        if let Ok((rv, _)) = john_recenter(&point.v) {
            let prob = Problem {
                pair,
                w,
                lam: point.eval.report.big_lambda,
                disc: config.discretization,
                nodes: point.v.nodes.clone(),
                mode,
                norm_opts: NormalizeOptions::default(),
            };
            if let Ok(p) = prob.point(rv.intercepts) {
                point = p;
            }
        }
    }
    let omega = negative_set(&point.v)?;
    Ok(SolveResult {
        v: point.v,
        omega,
        report: point.eval.report,
        normalization: point.norm,
        history: outcome.history,
        status: outcome.status,
        message: outcome.message,
        property,
        starts,
        continuation,
        last_converged_lambda: last_converged,
        min_inf_ratio: outcome.min_inf_ratio,
        grad_rel: point.grad_rel,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ElResidual {
    pub per_node: Vec<f64>,
    pub total: f64,
    pub mu_sum: f64,
    pub nu_sum: f64,
    /// Inactive nodes carrying `ν_i` above tolerance: `∇u(ℝⁿ) ≠ P` there.
    pub boundary_violations: Vec<usize>,
}

pub fn el_residual(result: &SolveResult, pair: &StructuralPair, w: &WeightedDomain, disc: Discretization, tol: f64) -> Result<ElResidual> {
    el_residual_of(&result.v, pair, w, result.report.big_lambda, disc, tol)
}

pub fn el_residual_of(v: &PiecewiseAffineConvex, pair: &StructuralPair, w: &WeightedDomain, lam: f64, disc: Discretization, tol: f64) -> Result<ElResidual> {
    let ev = evaluate(v, pair, w, lam, disc)?;
    let r = &ev.report;
    if r.j.is_none() {
        return Err(Error::Numerical("J diverged at the supplied function".into()));
    }
    let per_node: Vec<f64> = r.mass_balance.iter().map(|m| m.residual).collect();
    let boundary_violations = r
        .mass_balance
        .iter()
        .filter(|m| !ev.complex.active[m.node] && m.nu > tol)
        .map(|m| m.node)
        .collect();
    Ok(ElResidual {
        total: per_node.iter().sum(),
        per_node,
        mu_sum: r.mu_sum,
        nu_sum: r.mass_balance.iter().map(|m| m.nu).sum(),
        boundary_violations,
    })
}

/// `∫_Ω φ(x, −u(x)) dx` cell by cell.
fn omega_integral(cx: &CellComplex, nodes: &[Vec<f64>], c: &[f64], order: usize, phi: &dyn Fn(&[f64], f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; c.len()];
    match cx.dim {
        1 => {
            let rule = IntervalRule::new(order + 2);
            for (i, cell) in cx.cells.iter().enumerate() {
                if cell.vertices.is_empty() {
                    continue;
                }
                let (mut lo, mut hi) = (cell.vertices[0][0], cell.vertices[1][0]);
                let p = nodes[i][0];
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
                let mut acc = NeumaierSum::new();
                for (t, wt) in rule.x.iter().zip(&rule.w) {
                    let x = lo + t * (hi - lo);
                    acc.add(wt * (hi - lo) * phi(&[x], (c[i] - p * x).max(0.0)));
                }
                out[i] = acc.value();
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
                let poly = clip_polygon(&ring, p, c[i]);
                if poly.len() < 3 || polygon_area(&poly) <= 0.0 {
                    continue;
                }
                let mut acc = NeumaierSum::new();
                for k in 1..poly.len() - 1 {
                    for (x, wt, _) in rule.on_triangle(poly[0], poly[k], poly[k + 1]) {
                        acc.add(wt * phi(&x, (c[i] - p[0] * x[0] - p[1] * x[1]).max(0.0)));
                    }
                }
                out[i] = acc.value();
            }
        }
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OtCheck {
    pub worst_margin: f64,
    pub margins: Vec<f64>,
    pub skipped: usize,
    /// `∫ u dμ + ∫ v dν` at the solution.
    pub lhs: f64,
}

/// Kantorovich duality at the solution: for candidate pairs `(v̂*, v̂)`,
/// `∫ u dμ + ∫ v dν ≤ ∫ v̂* dμ + ∫ v̂ dν`, where `μ ∝ f(−u) dx` on `Ω` and
/// `ν = Σ ν_i δ_{p_i}` is the node lumping of `g(v) dy^h`.
pub fn ot_optimality_check(result: &SolveResult, trials: usize, pair: &StructuralPair, w: &WeightedDomain, disc: Discretization, seed: u64) -> Result<OtCheck> {
    let v = &result.v;
    let ev = evaluate(v, pair, w, result.report.big_lambda, disc)?;
    let cx = &ev.complex;
    let c = &v.intercepts;
    let masses = omega_integral(cx, &v.nodes, c, disc.order, &|_, s| pair.small_f(s));
    let total_mass: f64 = masses.iter().sum();
    let nus: Vec<f64> = ev.report.mass_balance.iter().map(|m| m.nu).collect();
    let u_mu: f64 = omega_integral(cx, &v.nodes, c, disc.order, &|_, s| -s * pair.small_f(s)).iter().sum::<f64>() / total_mass;
    let v_nu: f64 = nus.iter().zip(c).map(|(n, c)| n * c).sum();
    let lhs = u_mu + v_nu;

    let target = if pair.is_linear_g() { ReplacementTarget::I(ev.report.i) } else { ReplacementTarget::J(ev.report.j.unwrap_or(1.0)) };
    let scale = c.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut margins = Vec::with_capacity(trials + 1);
    let mut skipped = 0;
    for trial in 0..=trials {
        let cand_c: Vec<f64> = if trial == 0 {
            c.clone()
        } else {
            let amp = 0.05 * scale * rng.gen_range(0.1..1.0);
            c.iter().map(|ci| ci + amp * rng.gen_range(-1.0..1.0)).collect()
        };
        let mut cand = PiecewiseAffineConvex { nodes: v.nodes.clone(), intercepts: cand_c, canonical: false };
        if cand.canonicalize().is_err() {
            skipped += 1;
            continue;
        }
        let cand = if trial == 0 {
            cand
        } else {
            match affine_replacement(&cand, target, pair, w, disc, 1e-10) {
                Ok((r, _)) => r,
                Err(_) => {
                    skipped += 1;
                    continue;
                }
            }
        };
        let hat_u = |x: &[f64]| cand.primal(x);
        let u_hat_mu: f64 = omega_integral(cx, &v.nodes, c, disc.order, &|x, s| hat_u(x) * pair.small_f(s)).iter().sum::<f64>() / total_mass;
        let cand_cx = match cand.complex() {
            Ok(k) => k,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        let v_hat_nu: f64 = nus.iter().zip(&v.nodes).map(|(n, p)| n * cand_cx.dual_value(p)).sum();
        margins.push(u_hat_mu + v_hat_nu - lhs);
    }
    let worst_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(OtCheck { worst_margin, margins, skipped, lhs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval() -> WeightedDomain {
        WeightedDomain::uniform(Polytope::interval(-1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn lattice_hits_requested_count() {
        let p = Polytope::regular_polygon(48, 1.0, 0.0).unwrap();
        let nodes = place_nodes(&p, 200, Placement::Lattice, 0).unwrap();
        assert!((nodes.len() as f64 - 200.0).abs() <= 12.0, "{}", nodes.len());
        assert!(nodes.iter().all(|y| p.contains(y, 1e-12)));
    }

    #[test]
    fn reconstruction_1d_converges_to_parabola() {
        let cfg = SolveConfig { big_lambda: 3.0, nodes: 41, ..Default::default() };
        let res = minimize_energy(&cfg, &StructuralPair::eigenvalue(0.0), &interval()).unwrap();
        assert_eq!(res.status, SolveStatus::Converged, "{}", res.message);
        let (a, b) = (res.omega.vertices[0][0], res.omega.vertices[1][0]);
        assert!((a + 1.0).abs() < 1e-2 && (b - 1.0).abs() < 1e-2, "{a} {b}");
        for k in 0..=50 {
            let x = -1.0 + 2.0 * k as f64 / 50.0;
            assert!((res.v.primal(&[x]).min(0.0) - (x * x - 1.0) / 2.0).abs() < 1e-2);
        }
        let hist: Vec<f64> = res.history.iter().map(|h| h.energy).collect();
        assert!(hist.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn off_center_linear_g_is_refused() {
        let w = WeightedDomain::uniform(Polytope::interval(-1.0, 2.0).unwrap()).unwrap();
        let r = minimize_energy(&SolveConfig::default(), &StructuralPair::eigenvalue(0.0), &w);
        assert!(matches!(r, Err(Error::Refused(_))));
    }
}
