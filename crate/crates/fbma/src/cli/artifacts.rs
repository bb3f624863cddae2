//! CSV and SVG writers for run outputs. Numbers are written with Rust's
//! shortest round-trip formatting, so identical runs give identical files.

use crate::convex_core::piecewise::{negative_set, PiecewiseAffineConvex};
use crate::convex_core::polytope::Polytope;
use crate::solver::SolveResult;
use crate::{Error, Result};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Clone, Debug, Serialize)]
pub struct OutputEntry {
    pub name: String,
    pub path: String,
    pub kind: String,
}

/// Collects the files of one run, relative to the output directory.
pub struct Outputs<'a> {
    pub dir: &'a Path,
    pub entries: Vec<OutputEntry>,
}

fn io_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Numerical(format!("writing output: {e}"))
}

impl<'a> Outputs<'a> {
    pub fn new(dir: &'a Path) -> Self {
        Self { dir, entries: Vec::new() }
    }

    fn push(&mut self, name: &str, file: &str, kind: &str) {
        self.entries.push(OutputEntry { name: name.into(), path: file.into(), kind: kind.into() });
    }

    pub fn csv(&mut self, name: &str, file: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut w = csv::Writer::from_path(self.dir.join(file)).map_err(io_err)?;
        w.write_record(header).map_err(io_err)?;
        for row in rows {
            w.write_record(&row).map_err(io_err)?;
        }
        w.flush().map_err(io_err)?;
        self.push(name, file, "csv");
        Ok(())
    }

    pub fn text(&mut self, name: &str, file: &str, kind: &str, body: &str) -> Result<()> {
        std::fs::write(self.dir.join(file), body).map_err(io_err)?;
        self.push(name, file, kind);
        Ok(())
    }

    /// Registers a file some other writer already produced.
    pub fn external(&mut self, name: &str, file: &str, kind: &str) {
        self.push(name, file, kind);
    }

    /// Nodes with intercepts, per-node mass balance, `Ω` vertices, history and a plot.
    pub fn solve_result(&mut self, result: &SolveResult, v: &PiecewiseAffineConvex, omega: &Polytope) -> Result<()> {
        let n = v.dim();
        let mut header: Vec<String> = (1..=n).map(|d| format!("p{d}")).collect();
        header.insert(0, "node".into());
        header.push("intercept".into());
        self.csv(
            "nodes",
            "nodes.csv",
            &header,
            v.nodes.iter().zip(&v.intercepts).enumerate().map(|(i, (p, c))| {
                let mut row = vec![i.to_string()];
                row.extend(p.iter().map(f64::to_string));
                row.push(c.to_string());
                row
            }),
        )?;
        self.csv(
            "mass_balance",
            "mass_balance.csv",
            &cols(&["node", "mu", "nu", "residual"]),
            result.report.mass_balance.iter().map(|r| vec![r.node.to_string(), r.mu.to_string(), r.nu.to_string(), r.residual.to_string()]),
        )?;
        let header: Vec<String> = (1..=n).map(|d| format!("x{d}")).collect();
        self.csv("omega", "omega.csv", &header, omega.vertices.iter().map(|x| x.iter().map(f64::to_string).collect()))?;
        self.csv(
            "history",
            "history.csv",
            &cols(&["iteration", "energy", "grad_rel", "diam_omega", "v_at_zero", "inf_v"]),
            result.history.iter().map(|h| {
                vec![
                    h.iteration.to_string(),
                    h.energy.to_string(),
                    h.grad_rel.to_string(),
                    h.diam_omega.to_string(),
                    h.v_at_zero.to_string(),
                    h.inf_v.to_string(),
                ]
            }),
        )?;
        self.text("plot", "solution.svg", "svg", &solution_svg(v, omega)?)
    }

    /// `u` sampled on Ω: a line of 201 points in 1-D, a 41×41 grid in 2-D.
    pub fn u_samples(&mut self, v: &PiecewiseAffineConvex, omega: &Polytope) -> Result<()> {
        let n = v.dim();
        let (lo, hi) = bounds(omega);
        let m: usize = if n == 1 { 201 } else { 41 };
        let mut rows = Vec::new();
        for idx in 0..m.pow(n as u32) {
            let mut rem = idx;
            let x: Vec<f64> = (0..n)
                .map(|d| {
                    let t = (rem % m) as f64 / (m - 1) as f64;
                    rem /= m;
                    lo[d] + t * (hi[d] - lo[d])
                })
                .collect();
            let mut row: Vec<String> = x.iter().map(f64::to_string).collect();
            row.push(v.primal(&x).min(0.0).to_string());
            rows.push(row);
        }
        let mut header: Vec<String> = (1..=n).map(|d| format!("x{d}")).collect();
        header.push("u".into());
        self.csv("u_profile", "u_profile.csv", &header, rows)
    }
}

pub fn cols(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn bounds(p: &Polytope) -> (Vec<f64>, Vec<f64>) {
    let n = p.dim;
    let lo = (0..n).map(|d| p.vertices.iter().map(|v| v[d]).fold(f64::INFINITY, f64::min)).collect();
    let hi = (0..n).map(|d| p.vertices.iter().map(|v| v[d]).fold(f64::NEG_INFINITY, f64::max)).collect();
    (lo, hi)
}

const SIZE: f64 = 400.0;
const MARGIN: f64 = 20.0;

/// 1-D: graph of `u` over a padded `Ω`. 2-D: `Ω` and five level sets of `u`.
pub fn solution_svg(v: &PiecewiseAffineConvex, omega: &Polytope) -> Result<String> {
    let (lo, hi) = bounds(omega);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#);
    let _ = writeln!(s, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let inner = SIZE - 2.0 * MARGIN;
    match v.dim() {
        1 => {
            let pad = 0.1 * (hi[0] - lo[0]);
            let (a, b) = (lo[0] - pad, hi[0] + pad);
            let xs: Vec<f64> = (0..=200).map(|i| a + (b - a) * i as f64 / 200.0).collect();
            let us: Vec<f64> = xs.iter().map(|x| v.primal(&[*x])).collect();
            let umin = us.iter().copied().fold(f64::INFINITY, f64::min).min(-1e-12);
            let umax = us.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0);
            let px = |x: f64| MARGIN + inner * (x - a) / (b - a);
            let py = |u: f64| MARGIN + inner * (umax - u) / (umax - umin);
            let _ = writeln!(s, r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray"/>"#, px(a), py(0.0), px(b), py(0.0));
            let pts: Vec<String> = xs.iter().zip(&us).map(|(x, u)| format!("{:.3},{:.3}", px(*x), py(*u))).collect();
            let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="black"/>"#, pts.join(" "));
        }
        2 => {
            let pad = 0.05 * (hi[0] - lo[0]).max(hi[1] - lo[1]);
            let span = (hi[0] - lo[0]).max(hi[1] - lo[1]) + 2.0 * pad;
            let (x0, y0) = (lo[0] - pad, lo[1] - pad);
            let map = |p: &[f64]| format!("{:.3},{:.3}", MARGIN + inner * (p[0] - x0) / span, MARGIN + inner * (1.0 - (p[1] - y0) / span));
            let poly = |p: &Polytope| p.vertices.iter().map(|q| map(q)).collect::<Vec<_>>().join(" ");
            let _ = writeln!(s, r#"<polygon points="{}" fill="none" stroke="black" stroke-width="1.5"/>"#, poly(omega));
            let umin = v.complex()?.min_primal();
            for k in 1..=5 {
                let t = umin * (1.0 - k as f64 / 6.0);
                if let Ok(level) = negative_set(&v.shifted(&[0.0, 0.0], t)) {
                    let _ = writeln!(s, r#"<polygon points="{}" fill="none" stroke="steelblue"/>"#, poly(&level));
                }
            }
        }
        d => return Err(Error::UnsupportedDimension(d)),
    }
    s.push_str("</svg>\n");
    Ok(s)
}
