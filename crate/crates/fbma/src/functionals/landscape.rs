//! Diagnostic lower-bound landscape `Ê(x, D)` over `x = inf_P v` and the
//! major John axis `D`, built from the clause-wise lower bounds on `G(J)`
//! with `|Ω|` replaced by `x^{n−1} D`.

use crate::convex_core::quadrature::integrate_interval;
use crate::structure::{classify_structure, StructuralPair};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClauseFamily {
    /// Pick from the behaviour of `G` at infinity.
    Auto,
    /// `G → +∞`: clauses (i)–(iii).
    Unbounded,
    /// `G` bounded above by 0: clauses (iv)–(vi).
    Bounded,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandscapeSpec {
    pub family: ClauseFamily,
    pub n: usize,
    pub big_lambda: f64,
    /// Pole order of `−G` at 0 minus n; estimated from the pair when unset.
    pub nu: Option<f64>,
    /// Stand-in for the universal constant `C > 1` of the bounds.
    pub constant: f64,
    /// Cells with `x > window · D` are masked.
    pub window: f64,
    pub rho_minus: f64,
    pub rho_plus: f64,
    pub x_range: (f64, f64),
    pub d_range: (f64, f64),
    pub nx: usize,
    pub nd: usize,
}

impl Default for LandscapeSpec {
    fn default() -> Self {
        Self {
            family: ClauseFamily::Auto,
            n: 4,
            big_lambda: 1.0,
            nu: None,
            constant: 1.0,
            window: 1.0,
            rho_minus: 1.0,
            rho_plus: 1.0,
            x_range: (0.1, 1000.0),
            d_range: (0.1, 10000.0),
            nx: 200,
            nd: 200,
        }
    }
}

impl LandscapeSpec {
    pub fn epsilon2(&self) -> f64 {
        self.rho_minus / (2.0 * (self.n as f64).powf(1.5) * self.rho_plus)
    }

    fn validate(&self) -> Result<()> {
        let e2 = self.epsilon2();
        if !(e2 > 0.0 && e2 < 1.0) {
            return Err(Error::InvalidInput(format!("epsilon2 = {e2} outside (0,1)")));
        }
        if self.n == 0 || self.nx < 2 || self.nd < 2 {
            return Err(Error::InvalidInput("landscape needs n ≥ 1 and a grid of at least 2×2".into()));
        }
        let ok = |r: (f64, f64)| r.0 > 0.0 && r.1 > r.0;
        if !ok(self.x_range) || !ok(self.d_range) {
            return Err(Error::InvalidInput("log-grid ranges must be positive and increasing".into()));
        }
        if !(self.constant > 0.0 && self.window > 0.0 && self.big_lambda >= 0.0) {
            return Err(Error::InvalidInput("constants must be positive and Λ ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Component {
    pub size: usize,
    pub bounded: bool,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LevelCount {
    pub level: f64,
    pub bounded: usize,
    pub touching: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Landscape {
    pub xs: Vec<f64>,
    pub ds: Vec<f64>,
    /// `values[i][j] = Ê(xs[i], ds[j])`, NaN where masked.
    pub values: Vec<Vec<f64>>,
    pub family: ClauseFamily,
    pub nu: f64,
}

fn logspace(r: (f64, f64), m: usize) -> Vec<f64> {
    let (a, b) = (r.0.ln(), r.1.ln());
    (0..m).map(|k| (a + (b - a) * k as f64 / (m - 1) as f64).exp()).collect()
}

/// `∫_a^∞ G(s) s^{n−1} ds`, finite when `−G` decays faster than `s^{−n}`.
fn tail_integral(pair: &StructuralPair, a: f64, n: usize) -> f64 {
    let f = |t: f64| {
        let s = t.exp();
        pair.big_g(s) * s.powi(n as i32)
    };
    let lo = a.ln();
    integrate_interval(lo, lo + 80.0, &f, 12, 160, false)
}

pub fn ehat_landscape(spec: &LandscapeSpec, pair: &StructuralPair) -> Result<Landscape> {
    spec.validate()?;
    let family = match spec.family {
        ClauseFamily::Auto if pair.g.at_infinity().is_finite() => ClauseFamily::Bounded,
        ClauseFamily::Auto => ClauseFamily::Unbounded,
        f => f,
    };
    let nu = match spec.nu {
        Some(v) => v,
        None => classify_structure(pair, spec.n)?.exponents.nu.unwrap_or(0.0).max(0.0),
    };
    let n = spec.n;
    let nf = n as f64;
    let c = spec.constant;
    let e2 = spec.epsilon2();
    let xs = logspace(spec.x_range, spec.nx);
    let ds = logspace(spec.d_range, spec.nd);
    let near_zero = |x: f64| if nu > 0.0 { x.powf(-nu) } else { x.ln().abs() + 1.0 };
    let bounded_const = if family == ClauseFamily::Bounded { tail_integral(pair, 1.0, n) } else { 0.0 };

    let values: Vec<Vec<f64>> = xs
        .par_iter()
        .map(|&x| {
            let tail_x = if family == ClauseFamily::Bounded && x > 1.0 { tail_integral(pair, x / nf.powf(1.5), n) } else { 0.0 };
            ds.iter()
                .map(|&d| {
                    if x > spec.window * d {
                        return f64::NAN;
                    }
                    let omega = x.powi(n as i32 - 1) * d;
                    let bracket = match family {
                        ClauseFamily::Unbounded => {
                            let far = pair.big_g(nf * spec.rho_plus * e2 * d).max(0.0) / c;
                            if e2 * x <= 1.0 {
                                c * pair.big_g(e2 * x) * x.powi(n as i32) / omega - c / omega * near_zero(x) + far
                            } else {
                                pair.big_g(e2 * x) * x.powi(n as i32) / omega / c + far
                            }
                        }
                        _ => {
                            if x <= 1.0 {
                                c * pair.big_g(x) * x.powi(n as i32) / omega - c / omega * near_zero(x) + c / d * bounded_const
                            } else {
                                c * pair.big_g(x) * x.powi(n as i32) / omega + c / (d * x.powi(n as i32 - 1)) * tail_x
                            }
                        }
                    };
                    let j = pair.g_inverse(bracket);
                    if !j.is_finite() || !(j > 0.0) {
                        return f64::NAN;
                    }
                    let mass = pair.f.ln(x) + (nf - 1.0) * x.ln() + d.ln();
                    -mass + spec.big_lambda * j
                })
                .collect()
        })
        .collect();
    Ok(Landscape { xs, ds, values, family, nu })
}

impl Landscape {
    /// Connected components of `{Ê ≤ level}` under 4-neighbour adjacency;
    /// a component is bounded unless it reaches the edge of the grid.
    pub fn components(&self, level: f64) -> Vec<Component> {
        let (m, k) = (self.xs.len(), self.ds.len());
        let inside = |i: usize, j: usize| self.values[i][j] <= level;
        let mut seen = vec![vec![false; k]; m];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for i0 in 0..m {
            for j0 in 0..k {
                if seen[i0][j0] || !inside(i0, j0) {
                    continue;
                }
                seen[i0][j0] = true;
                stack.push((i0, j0));
                let (mut size, mut edge) = (0, false);
                while let Some((i, j)) = stack.pop() {
                    size += 1;
                    edge |= i == 0 || j == 0 || i + 1 == m || j + 1 == k;
                    let nbrs = [(i.wrapping_sub(1), j), (i + 1, j), (i, j.wrapping_sub(1)), (i, j + 1)];
                    for (a, b) in nbrs {
                        if a < m && b < k && !seen[a][b] && inside(a, b) {
                            seen[a][b] = true;
                            stack.push((a, b));
                        }
                    }
                }
                out.push(Component { size, bounded: !edge });
            }
        }
        out
    }

    pub fn count_at(&self, level: f64) -> LevelCount {
        let comps = self.components(level);
        let bounded = comps.iter().filter(|c| c.bounded).count();
        LevelCount { level, bounded, touching: comps.len() - bounded }
    }

    pub fn finite_range(&self) -> Option<(f64, f64)> {
        let vals = self.values.iter().flatten().filter(|v| v.is_finite());
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        (lo <= hi).then_some((lo, hi))
    }

    /// Component counts at the 1%, 2%, …, 99% quantiles of the finite values.
    pub fn scan_levels(&self) -> Vec<LevelCount> {
        let mut vals: Vec<f64> = self.values.iter().flatten().copied().filter(|v| v.is_finite()).collect();
        if vals.is_empty() {
            return vec![];
        }
        vals.sort_by(f64::total_cmp);
        (1..100)
            .map(|q| {
                let pos = q as f64 / 100.0 * (vals.len() - 1) as f64;
                let (lo, t) = (pos.floor() as usize, pos.fract());
                let level = if lo + 1 < vals.len() { vals[lo] * (1.0 - t) + vals[lo + 1] * t } else { vals[lo] };
                self.count_at(level)
            })
            .collect()
    }

    /// First scanned level with exactly one bounded and one edge-touching component.
    pub fn two_component_level(&self) -> Option<LevelCount> {
        self.scan_levels().into_iter().find(|c| c.bounded == 1 && c.touching == 1)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "D", "ehat"]).map_err(|e| Error::InvalidInput(e.to_string()))?;
        for (i, x) in self.xs.iter().enumerate() {
            for (j, d) in self.ds.iter().enumerate() {
                wr.write_record([x.to_string(), d.to_string(), self.values[i][j].to_string()])
                    .map_err(|e| Error::InvalidInput(e.to_string()))?;
            }
        }
        wr.flush().map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(())
    }

    /// Heat map with `x` horizontal and `D` vertical (both logarithmic), the
    /// boundary of `{Ê ≤ level}` drawn in white.
    pub fn write_svg<W: Write>(&self, mut w: W, level: Option<f64>) -> Result<()> {
        let io = |e: std::io::Error| Error::InvalidInput(e.to_string());
        let (m, k) = (self.xs.len(), self.ds.len());
        let cell = 3.0;
        let (width, height) = (m as f64 * cell, k as f64 * cell);
        let (lo, hi) = self.finite_range().unwrap_or((0.0, 1.0));
        writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#).map_err(io)?;
        writeln!(w, r##"<rect width="{width}" height="{height}" fill="#202020"/>"##).map_err(io)?;
        for i in 0..m {
            for j in 0..k {
                let v = self.values[i][j];
                if !v.is_finite() {
                    continue;
                }
                let t = ((v - lo) / (hi - lo).max(1e-300)).clamp(0.0, 1.0).powf(0.5);
                let (r, g, b) = ((68.0 + 185.0 * t) as u8, (1.0 + 230.0 * t) as u8, (84.0 - 50.0 * t) as u8);
                let (px, py) = (i as f64 * cell, height - (j + 1) as f64 * cell);
                writeln!(w, r#"<rect x="{px}" y="{py}" width="{cell}" height="{cell}" fill="rgb({r},{g},{b})"/>"#).map_err(io)?;
            }
        }
        if let Some(a) = level {
            let inside = |i: usize, j: usize| self.values[i][j] <= a;
            let mut path = String::new();
            for i in 0..m {
                for j in 0..k {
                    if !inside(i, j) {
                        continue;
                    }
                    let (x0, x1) = (i as f64 * cell, (i + 1) as f64 * cell);
                    let (y0, y1) = (height - (j + 1) as f64 * cell, height - j as f64 * cell);
                    if i == 0 || !inside(i - 1, j) {
                        path.push_str(&format!("M{x0} {y0}V{y1}"));
                    }
                    if i + 1 == m || !inside(i + 1, j) {
                        path.push_str(&format!("M{x1} {y0}V{y1}"));
                    }
                    if j == 0 || !inside(i, j - 1) {
                        path.push_str(&format!("M{x0} {y1}H{x1}"));
                    }
                    if j + 1 == k || !inside(i, j + 1) {
                        path.push_str(&format!("M{x0} {y0}H{x1}"));
                    }
                }
            }
            writeln!(w, r#"<path d="{path}" stroke="white" stroke-width="1" fill="none"/>"#).map_err(io)?;
        }
        writeln!(w, "</svg>").map_err(io)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_pair_has_two_components() {
        let pair = StructuralPair::two_component(4);
        let land = ehat_landscape(&LandscapeSpec::default(), &pair).unwrap();
        assert_eq!(land.family, ClauseFamily::Unbounded);
        assert!((land.nu - 5.0).abs() < 0.05, "nu {}", land.nu);
        assert!(land.two_component_level().is_some());
    }

    #[test]
    fn zero_lambda_is_unbounded_at_every_level() {
        let pair = StructuralPair::two_component(4);
        let spec = LandscapeSpec { big_lambda: 0.0, nx: 60, nd: 60, ..Default::default() };
        let land = ehat_landscape(&spec, &pair).unwrap();
        for c in land.scan_levels() {
            assert!(c.touching >= 1, "level {} has no unbounded part", c.level);
        }
    }

    #[test]
    fn flood_fill_counts_blocks() {
        let mut values = vec![vec![5.0; 6]; 6];
        values[2][2] = 0.0;
        values[2][3] = 0.0;
        values[0][5] = 0.0;
        let land = Landscape { xs: vec![1.0; 6], ds: vec![1.0; 6], values, family: ClauseFamily::Auto, nu: 0.0 };
        let comps = land.components(1.0);
        assert_eq!(comps.len(), 2);
        assert_eq!(land.count_at(1.0).bounded, 1);
        assert_eq!(land.count_at(1.0).touching, 1);
    }
}
