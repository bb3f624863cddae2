//! Radially symmetric reductions of the Monge-Ampère equation.
//!
//! For `u(x) = u(|x|)` the determinant is `u_rr (u_r/r)^{n−1}`. Shooting
//! starts at the center from `u(0) = −m`, `u′(0) = 0` with a series step,
//! then continues in `σ = √(u+m)` while the slope is moderate and in `u`
//! itself (with `q = 1/u_r`) afterwards, so the boundary `u = 0` is hit
//! exactly and infinite boundary slopes stay regular.

use crate::structure::domain::CurvatureSpec;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Right-hand side of `u_rr (u_r/r)^{n−1} = λ · form`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RadialForm {
    /// `(−u)^k`.
    Eigenvalue { k: f64 },
    /// `(r u_r − u)^{n+2}`.
    Hemisphere,
    /// `K(u_r) (1 + u_r²)^{(n+2)/2}`.
    Gauss { curvature: CurvatureSpec },
    /// Dual equation `det D²v = λ v^{−(n+2)}` on the unit ball.
    DualLegendre,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialProblem {
    pub n: usize,
    pub form: RadialForm,
    /// Boundary slope `u′(R)`, the radius of the ball `P`; `None` means unbounded.
    #[serde(default)]
    pub rho: Option<f64>,
    /// Fixed λ (default 1). Giving both λ and `radius` drops the slope
    /// condition, which must then be unbounded.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Fixed free-boundary radius; λ then becomes an unknown.
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
}

fn default_rtol() -> f64 {
    1e-11
}

impl RadialProblem {
    pub fn new(n: usize, form: RadialForm, rho: Option<f64>) -> Self {
        Self { n, form, rho, lambda: None, radius: None, rtol: default_rtol() }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("radial dimension must be at least 1".into()));
        }
        if self.rho.is_some_and(|r| !(r > 0.0)) || self.radius.is_some_and(|r| !(r > 0.0)) || self.lambda.is_some_and(|l| !(l > 0.0)) {
            return Err(Error::InvalidInput("slope bound, radius and λ must be positive".into()));
        }
        if !(self.rtol > 0.0) {
            return Err(Error::InvalidInput("rtol must be positive".into()));
        }
        if let RadialForm::Eigenvalue { k } = self.form {
            if !(k >= 0.0) {
                return Err(Error::InvalidInput("eigenvalue exponent must be nonnegative".into()));
            }
        }
        Ok(())
    }

    fn target_q(&self) -> f64 {
        self.rho.map_or(0.0, |r| 1.0 / r)
    }
}

/// Right-hand side evaluated at `(r, u, u_r)`, without λ.
pub fn radial_rhs(form: &RadialForm, n: usize, r: f64, u: f64, ur: f64) -> f64 {
    let nf = n as f64;
    match form {
        RadialForm::Eigenvalue { k } => (-u).max(0.0).powf(*k),
        RadialForm::Hemisphere => (r * ur - u).powi(n as i32 + 2),
        RadialForm::Gauss { curvature } => curvature_at(curvature, n, ur) * (1.0 + ur * ur).powf(0.5 * (nf + 2.0)),
        RadialForm::DualLegendre => u.powi(-(n as i32 + 2)),
    }
}

fn curvature_at(k: &CurvatureSpec, n: usize, slope: f64) -> f64 {
    let mut y = vec![0.0; n];
    y[0] = slope;
    k.eval(&y)
}

/// One accepted step of a DOPRI5 integration, with the state at its end.
type Observer<'a, const D: usize> = dyn FnMut(f64, &[f64; D]) -> bool + 'a;

/// Dormand–Prince 5(4) with FSAL and standard step control. The observer
/// sees every accepted step and may stop the integration by returning `true`.
pub fn dopri5<const D: usize>(
    f: &dyn Fn(f64, &[f64; D]) -> [f64; D],
    t0: f64,
    y0: [f64; D],
    t1: f64,
    rtol: f64,
    max_step: f64,
    observer: &mut Observer<'_, D>,
) -> Result<(f64, [f64; D])> {
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] = [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

    let span = t1 - t0;
    if span == 0.0 {
        return Ok((t0, y0));
    }
    let dir = span.signum();
    let atol = rtol * 1e-2;
    let (mut t, mut y) = (t0, y0);
    let mut k0 = f(t, &y);
    let mut h = dir * (span.abs() * 1e-3).min(max_step);
    for _ in 0..1_000_000 {
        if (t1 - t) * dir <= 0.0 {
            return Ok((t, y));
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        let mut k = [[0.0; D]; 7];
        k[0] = k0;
        for s in 1..7 {
            let mut ys = y;
            for (d, yd) in ys.iter_mut().enumerate() {
                *yd += h * (0..s).map(|j| A[s][j] * k[j][d]).sum::<f64>();
            }
            k[s] = f(t + C[s] * h, &ys);
        }
        let mut ynew = y;
        for (d, yd) in ynew.iter_mut().enumerate() {
            *yd += h * (0..6).map(|j| A[6][j] * k[j][d]).sum::<f64>();
        }
        let mut err = 0.0f64;
        for d in 0..D {
            let e = h * (0..7).map(|j| E[j] * k[j][d]).sum::<f64>();
            let sc = atol + rtol * y[d].abs().max(ynew[d].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() || ynew.iter().any(|v| !v.is_finite()) {
            h *= 0.25;
            if h.abs() < 1e-14 * t.abs().max(span.abs()) {
                return Err(Error::Numerical(format!("integration blew up at t = {t:.6e}")));
            }
            continue;
        }
        if err <= 1.0 {
            t += h;
            y = ynew;
            k0 = k[6];
            if observer(t, &y) {
                return Ok((t, y));
            }
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = dir * (h.abs() * factor).min(max_step);
        if h.abs() < 1e-15 * t.abs().max(1e-300) {
            return Err(Error::Numerical(format!("step size underflow at t = {t:.6e}")));
        }
    }
    Err(Error::Numerical("step budget exhausted".into()))
}

/// Samples `(r, u, u_r, u_rr)` along a radial profile.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub r: f64,
    pub u: f64,
    pub ur: f64,
    pub urr: f64,
}

struct Shot {
    radius: f64,
    q_end: f64,
    profile: Vec<ProfilePoint>,
}

/// Integrates from the center with `u(0) = −m` up to `u = 0`.
fn shoot(prob: &RadialProblem, m: f64, lam: f64, keep: bool) -> Result<Shot> {
    let n = prob.n;
    let nf = n as f64;
    let form = &prob.form;
    let rhs0 = lam * radial_rhs(form, n, 0.0, -m, 0.0);
    if !(rhs0 > 0.0) || !rhs0.is_finite() {
        return Err(Error::Numerical(format!("right-hand side {rhs0} at the center is not positive")));
    }
    let c = rhs0.powf(1.0 / nf);
    let urr = |r: f64, u: f64, ur: f64| -> f64 {
        let rhs = lam * radial_rhs(form, n, r, u, ur);
        if n == 1 {
            rhs
        } else {
            rhs * (r / ur).powi(n as i32 - 1)
        }
    };
    let mut profile = Vec::new();
    if keep {
        profile.push(ProfilePoint { r: 0.0, u: -m, ur: 0.0, urr: c });
    }

    // Phase 1 in σ = √(u+m) with state (r, u_r): both vanish linearly in σ.
    let sigma_end = m.sqrt();
    let s0 = 1e-7 * sigma_end;
    let r0 = s0 * (2.0 / c).sqrt();
    let phase1 = |s: f64, y: &[f64; 2]| -> [f64; 2] {
        let (r, p) = (y[0], y[1]);
        let u = s * s - m;
        [2.0 * s / p, 2.0 * s / p * urr(r, u, p)]
    };
    let max_step = sigma_end / 64.0;
    let switch = |s: f64, y: &[f64; 2], out: &mut Vec<ProfilePoint>| -> bool {
        if keep {
            let u = s * s - m;
            out.push(ProfilePoint { r: y[0], u, ur: y[1], urr: urr(y[0], u, y[1]) });
        }
        y[1] >= 1.0
    };
    let mut buf = Vec::new();
    let (s1, y1) = dopri5(&phase1, s0, [r0, c * r0], sigma_end, prob.rtol, max_step, &mut |s, y| switch(s, y, &mut buf))?;
    profile.extend(buf);
    let u1 = s1 * s1 - m;
    if u1 >= 0.0 {
        return Ok(Shot { radius: y1[0], q_end: 1.0 / y1[1], profile });
    }

    // Phase 2 in u with state (r, q = 1/u_r), regular through vertical slopes.
    let phase2 = |u: f64, y: &[f64; 2]| -> [f64; 2] {
        let (r, q) = (y[0], y[1]);
        let rn = r.powi(n as i32 - 1);
        let dq = match form {
            RadialForm::Eigenvalue { k } => -(-u).max(0.0).powf(*k) * rn * q.powi(n as i32 + 2),
            RadialForm::Hemisphere => -rn * (r - u * q).powi(n as i32 + 2),
            RadialForm::Gauss { curvature } => {
                let slope = if q == 0.0 { f64::INFINITY } else { 1.0 / q };
                -curvature_at(curvature, n, slope) * rn * (q * q + 1.0).powf(0.5 * (nf + 2.0))
            }
            RadialForm::DualLegendre => -u.powi(-(n as i32 + 2)) * rn * q.powi(n as i32 + 2),
        };
        [q, lam * dq]
    };
    let mut buf = Vec::new();
    let (_, y2) = dopri5(&phase2, u1, [y1[0], 1.0 / y1[1]], 0.0, prob.rtol, -u1 / 64.0, &mut |u, y| {
        if keep {
            let ur = 1.0 / y[1];
            buf.push(ProfilePoint { r: y[0], u, ur, urr: if ur.is_finite() { urr(y[0], u, ur) } else { f64::INFINITY } });
        }
        false
    })?;
    profile.extend(buf);
    Ok(Shot { radius: y2[0], q_end: y2[1], profile })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialSolution {
    pub n: usize,
    pub lambda: f64,
    /// `−u(0)`.
    pub m: f64,
    /// Free-boundary radius.
    pub radius: f64,
    pub profile: Vec<ProfilePoint>,
    pub shooting_iterations: usize,
    /// Largest relative residual of `(u_rⁿ)′ = n r^{n−1} λ·rhs` at interval midpoints.
    pub ode_residual: f64,
}

impl RadialSolution {
    /// `u(r)` by quintic Hermite interpolation; `0` outside the free boundary.
    pub fn u_at(&self, r: f64) -> f64 {
        self.hermite(r).0
    }

    /// `(u, u_r, u_rr)` at `r`.
    pub fn hermite(&self, r: f64) -> (f64, f64, f64) {
        let pts = &self.profile;
        if r >= self.radius {
            return (0.0, f64::NAN, f64::NAN);
        }
        let j = pts.partition_point(|p| p.r <= r).clamp(1, pts.len() - 1);
        let (a, b) = (&pts[j - 1], &pts[j]);
        quintic(a, b, r)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Numerical(e.to_string()))?;
        w.write_record(["r", "u", "u_r"]).map_err(|e| Error::Numerical(e.to_string()))?;
        for p in &self.profile {
            w.write_record([p.r.to_string(), p.u.to_string(), p.ur.to_string()]).map_err(|e| Error::Numerical(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::Numerical(e.to_string()))
    }
}

/// Quintic Hermite interpolant through value, first and second derivative.
fn quintic(a: &ProfilePoint, b: &ProfilePoint, r: f64) -> (f64, f64, f64) {
    let h = b.r - a.r;
    if !(h > 0.0) || !b.urr.is_finite() || !b.ur.is_finite() {
        let t = if h > 0.0 { (r - a.r) / h } else { 0.0 };
        return (a.u + t * (b.u - a.u), a.ur, a.urr);
    }
    let t = (r - a.r) / h;
    let (y0, d0, s0) = (a.u, a.ur * h, a.urr * h * h);
    let (y1, d1, s1) = (b.u, b.ur * h, b.urr * h * h);
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h2 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
    let h3 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h5 = 0.5 * (t3 - 2.0 * t4 + t5);
    let dh0 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
    let dh1 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
    let dh2 = 0.5 * (2.0 * t - 9.0 * t2 + 12.0 * t3 - 5.0 * t4);
    let dh3 = 30.0 * t2 - 60.0 * t3 + 30.0 * t4;
    let dh4 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
    let dh5 = 0.5 * (3.0 * t2 - 8.0 * t3 + 5.0 * t4);
    let ddh0 = -60.0 * t + 180.0 * t2 - 120.0 * t3;
    let ddh1 = -36.0 * t + 96.0 * t2 - 60.0 * t3;
    let ddh2 = 0.5 * (2.0 - 18.0 * t + 36.0 * t2 - 20.0 * t3);
    let ddh3 = 60.0 * t - 180.0 * t2 + 120.0 * t3;
    let ddh4 = -24.0 * t + 84.0 * t2 - 60.0 * t3;
    let ddh5 = 0.5 * (6.0 * t - 24.0 * t2 + 20.0 * t3);
    let u = y0 * h0 + d0 * h1 + s0 * h2 + y1 * h3 + d1 * h4 + s1 * h5;
    let du = (y0 * dh0 + d0 * dh1 + s0 * dh2 + y1 * dh3 + d1 * dh4 + s1 * dh5) / h;
    let ddu = (y0 * ddh0 + d0 * ddh1 + s0 * ddh2 + y1 * ddh3 + d1 * ddh4 + s1 * ddh5) / (h * h);
    (u, du, ddu)
}

fn ode_residual(prob: &RadialProblem, sol: &RadialSolution) -> f64 {
    let n = prob.n;
    let mut worst = 0.0f64;
    for w in sol.profile.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.r <= 0.0 || !b.urr.is_finite() || !b.ur.is_finite() || b.r - a.r <= 0.0 {
            continue;
        }
        let r = 0.5 * (a.r + b.r);
        let (u, ur, urr) = quintic(a, b, r);
        let lhs = urr * (ur / r).powi(n as i32 - 1);
        let rhs = sol.lambda * radial_rhs(&prob.form, n, r, u, ur);
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(1e-300));
    }
    worst
}

/// Residual of the shooting target at `(m, λ)`.
fn miss(prob: &RadialProblem, m: f64, lam: f64) -> Option<(f64, f64)> {
    let shot = shoot(prob, m, lam, false).ok()?;
    Some((shot.radius, shot.q_end - prob.target_q()))
}

/// Finds `m` zeroing `target` at fixed λ: bracket on a log grid, then
/// secant-Newton steps safeguarded by bisection.
fn shoot_m(prob: &RadialProblem, lam: f64, target: Target) -> Result<(f64, usize)> {
    let miss = |m: f64, lam: f64| -> Option<f64> {
        let (r, q) = miss(prob, m, lam)?;
        Some(match target {
            Target::Slope => q,
            Target::Radius(want) => r / want - 1.0,
        })
    };
    let grid: Vec<f64> = (0..=80).map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 80.0)).collect();
    let vals: Vec<Option<f64>> = grid.iter().map(|&m| miss(m, lam)).collect();
    let mut bracket = None;
    for i in 0..grid.len() - 1 {
        if let (Some(a), Some(b)) = (vals[i], vals[i + 1]) {
            if a == 0.0 {
                return Ok((grid[i], 0));
            }
            if a * b < 0.0 {
                bracket = Some((grid[i], a, grid[i + 1], b));
                break;
            }
        }
    }
    let Some((mut lo, mut flo, mut hi, mut fhi)) = bracket else {
        return Err(Error::NoRadialSolution(format!(
            "boundary target is never met for m in [1e-4, 1e4] at λ = {lam}"
        )));
    };
    let mut m = 0.5 * (lo + hi);
    for it in 1..=200 {
        let Some(fm) = miss(m, lam) else {
            return Err(Error::Numerical(format!("shot failed at m = {m}")));
        };
        if fm == 0.0 || (hi - lo) <= 1e-14 * hi {
            return Ok((m, it));
        }
        if fm * flo < 0.0 {
            hi = m;
            fhi = fm;
        } else {
            lo = m;
            flo = fm;
        }
        let dm = 1e-7 * m;
        let newton = miss(m + dm, lam).map(|f2| m - fm * dm / (f2 - fm));
        let candidate = newton.filter(|c| *c > lo && *c < hi && c.is_finite());
        let next = candidate.unwrap_or_else(|| {
            let secant = lo - flo * (hi - lo) / (fhi - flo);
            if secant > lo && secant < hi { 0.5 * (secant + 0.5 * (lo + hi)) } else { 0.5 * (lo + hi) }
        });
        if (next - m).abs() <= 1e-14 * m {
            return Ok((next, it));
        }
        m = next;
    }
    Ok((m, 200))
}

#[derive(Clone, Copy)]
enum Target {
    /// `u′(R) = ρ`.
    Slope,
    /// `R` given; the slope is left free.
    Radius(f64),
}

/// Shoots for the radial solution with the boundary data of the problem.
pub fn radial_solve(prob: &RadialProblem) -> Result<RadialSolution> {
    prob.validate()?;
    if prob.form == RadialForm::DualLegendre {
        // Boundary condition v⋆ = 0 at r = 1; the probe decides solvability.
        let grid: Vec<f64> = (0..=40).map(|i| 10f64.powf(-3.0 + 5.0 * i as f64 / 40.0)).collect();
        let rows = dual_radial_probe(prob.n, prob.lambda.unwrap_or(1.0), &grid)?;
        let hit = rows.iter().any(|r| r.v_star.is_finite() && r.v_star >= 0.0);
        return Err(Error::NoRadialSolution(if hit {
            "dual boundary value reaches 0 but the profile is not recovered by this solver".into()
        } else {
            format!(
                "v⋆(1) < 0 for every v(0) in [1e-3, 1e2]; it tends to 0 only as v(0) → 0 (v⋆(1) = {:.3e} at v(0) = {:.1e})",
                rows[0].v_star, rows[0].m
            )
        }));
    }
    let (lam, m, iters) = match (prob.radius, prob.lambda) {
        (None, lam) => {
            let lam = lam.unwrap_or(1.0);
            let (m, it) = shoot_m(prob, lam, Target::Slope)?;
            (lam, m, it)
        }
        (Some(r), Some(lam)) => {
            if prob.rho.is_some() {
                return Err(Error::InvalidInput("fixing radius, λ and the boundary slope overdetermines the shot".into()));
            }
            let (m, it) = shoot_m(prob, lam, Target::Radius(r))?;
            (lam, m, it)
        }
        (Some(target), None) => {
            let (m0, it0) = shoot_m(prob, 1.0, Target::Slope)?;
            newton_m_lambda(prob, target, m0, 1.0).map(|(m, l, it)| (l, m, it + it0))?
        }
    };
    let shot = shoot(prob, m, lam, true)?;
    let mut sol = RadialSolution { n: prob.n, lambda: lam, m, radius: shot.radius, profile: shot.profile, shooting_iterations: iters, ode_residual: 0.0 };
    sol.ode_residual = ode_residual(prob, &sol);
    Ok(sol)
}

/// Newton on `(log m, log λ)` matching `R` and `u′(R)` simultaneously.
fn newton_m_lambda(prob: &RadialProblem, target: f64, m0: f64, l0: f64) -> Result<(f64, f64, usize)> {
    let resid = |x: [f64; 2]| -> Option<[f64; 2]> {
        let (r, q) = miss(prob, x[0].exp(), x[1].exp())?;
        Some([r / target - 1.0, q])
    };
    let mut x = [m0.ln(), l0.ln()];
    let Some(mut f) = resid(x) else { return Err(Error::Numerical("initial shot failed".into())) };
    for it in 1..=60 {
        let nf = f[0].hypot(f[1]);
        if nf < 1e-12 {
            return Ok((x[0].exp(), x[1].exp(), it));
        }
        let e = 1e-7;
        let mut jac = [[0.0; 2]; 2];
        for j in 0..2 {
            let mut xp = x;
            xp[j] += e;
            let fp = resid(xp).ok_or_else(|| Error::Numerical("jacobian shot failed".into()))?;
            jac[0][j] = (fp[0] - f[0]) / e;
            jac[1][j] = (fp[1] - f[1]) / e;
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det.abs() < 1e-300 {
            return Err(Error::NoRadialSolution("singular shooting jacobian in (m, λ)".into()));
        }
        let dx = [-(jac[1][1] * f[0] - jac[0][1] * f[1]) / det, -(-jac[1][0] * f[0] + jac[0][0] * f[1]) / det];
        let mut t = 1.0;
        loop {
            let xn = [x[0] + t * dx[0], x[1] + t * dx[1]];
            if let Some(fn_) = resid(xn) {
                if fn_[0].hypot(fn_[1]) < nf || t < 1e-6 {
                    x = xn;
                    f = fn_;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-6 {
                return Err(Error::NoRadialSolution("shooting Newton stalled".into()));
            }
        }
    }
    Err(Error::NoRadialSolution("shooting Newton did not converge".into()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HemisphereReport {
    pub a: f64,
    pub n: usize,
    pub max_residual: f64,
    /// `(r, |LHS − RHS|)`.
    pub points: Vec<(f64, f64)>,
}

/// Plugs `u = −a√(1−r²)` into `u_rr (u_r/r)^{n−1} = (r u_r − u)^{n+2}`.
pub fn hemisphere_residual(a: f64, n: usize, grid: &[f64]) -> Result<HemisphereReport> {
    if !(a > 0.0) || n == 0 {
        return Err(Error::InvalidInput("need a > 0 and n ≥ 1".into()));
    }
    if grid.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
        return Err(Error::InvalidInput("radii must lie in (0, 1)".into()));
    }
    let points: Vec<(f64, f64)> = grid
        .iter()
        .map(|&r| {
            let s = (1.0 - r * r).sqrt();
            let u = -a * s;
            let ur = a * r / s;
            let urr = a / (s * s * s);
            let lhs = urr * (ur / r).powi(n as i32 - 1);
            let rhs = (r * ur - u).powi(n as i32 + 2);
            (r, (lhs - rhs).abs())
        })
        .collect();
    let max_residual = points.iter().fold(0.0f64, |m, p| m.max(p.1));
    Ok(HemisphereReport { a, n, max_residual, points })
}

/// `|aⁿ − a^{n+2}| (1−r²)^{−(n+2)/2}`.
pub fn hemisphere_closed_form(a: f64, n: usize, r: f64) -> f64 {
    (a.powi(n as i32) - a.powi(n as i32 + 2)).abs() * (1.0 - r * r).powf(-0.5 * (n as f64 + 2.0))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProbeRow {
    /// `v(0)`.
    pub m: f64,
    /// `v′(1) − v(1)`, the boundary value of the conjugate; NaN after blow-up.
    pub v_star: f64,
    pub blew_up: bool,
}

/// Integrates the radial form of `det D²v = λ v^{−(n+2)}` from `v(0) = m`,
/// `v′(0) = 0` to `r = 1` for each `m`.
pub fn dual_radial_probe(n: usize, lambda: f64, m_grid: &[f64]) -> Result<Vec<ProbeRow>> {
    if n == 0 || !(lambda > 0.0) || m_grid.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::InvalidInput("need n ≥ 1, λ > 0 and positive v(0) values".into()));
    }
    let nf = n as f64;
    let ni = n as i32;
    Ok(m_grid
        .iter()
        .map(|&m| {
            // State (v, w = v_rⁿ): w′ = n r^{n−1} λ v^{−(n+2)}.
            let f = |r: f64, y: &[f64; 2]| -> [f64; 2] { [y[1].max(0.0).powf(1.0 / nf), nf * r.powi(ni - 1) * lambda * y[0].powi(-(ni + 2))] };
            let c = (lambda * m.powi(-(ni + 2))).powf(1.0 / nf);
            let r0 = 1e-6;
            let y0 = [m + 0.5 * c * r0 * r0, (c * r0).powi(ni)];
            match dopri5(&f, r0, y0, 1.0, 1e-12, 1e-2, &mut |_, _| false) {
                Ok((_, y)) if y.iter().all(|v| v.is_finite()) => {
                    let vr = y[1].max(0.0).powf(1.0 / nf);
                    ProbeRow { m, v_star: vr - y[0], blew_up: false }
                }
                _ => ProbeRow { m, v_star: f64::NAN, blew_up: true },
            }
        })
        .collect())
}

/// True when `v⋆(1)` increases towards 0 as `v(0)` decreases and stays negative.
pub fn probe_trend_to_zero(rows: &[ProbeRow]) -> bool {
    let mut sorted: Vec<&ProbeRow> = rows.iter().filter(|r| !r.blew_up).collect();
    sorted.sort_by(|a, b| b.m.total_cmp(&a.m));
    sorted.len() >= 2 && sorted.iter().all(|r| r.v_star < 0.0) && sorted.windows(2).all(|w| w[1].v_star > w[0].v_star)
}

pub fn write_probe_csv(rows: &[ProbeRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Numerical(e.to_string()))?;
    w.write_record(["m", "v_star_1"]).map_err(|e| Error::Numerical(e.to_string()))?;
    for r in rows {
        w.write_record([r.m.to_string(), r.v_star.to_string()]).map_err(|e| Error::Numerical(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Numerical(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    /// Fixed-step RK4 in `r` on `(u, w = u_rⁿ)` with `u′ = w^{1/n}`, `w′ = n r^{n−1} λ (−u)^k`.
    fn rk4_eigen(n: usize, k: f64, lam: f64, m: f64, steps_per_unit: usize) -> (f64, f64) {
        let nf = n as f64;
        let f = |r: f64, y: [f64; 2]| [y[1].max(0.0).powf(1.0 / nf), nf * r.powi(n as i32 - 1) * lam * (-y[0]).max(0.0).powf(k)];
        let c = (lam * m.powf(k)).powf(1.0 / nf);
        let r0 = 1e-4;
        let (mut r, mut y) = (r0, [-m + 0.5 * c * r0 * r0, (c * r0).powi(n as i32)]);
        let h = 1.0 / steps_per_unit as f64;
        loop {
            let k1 = f(r, y);
            let k2 = f(r + h / 2.0, [y[0] + h / 2.0 * k1[0], y[1] + h / 2.0 * k1[1]]);
            let k3 = f(r + h / 2.0, [y[0] + h / 2.0 * k2[0], y[1] + h / 2.0 * k2[1]]);
            let k4 = f(r + h, [y[0] + h * k3[0], y[1] + h * k3[1]]);
            let yn = [y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]), y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])];
            if yn[0] >= 0.0 {
                // Linear root on u, slope from the end state.
                let t = -y[0] / (yn[0] - y[0]);
                let rr = r + t * h;
                let w = y[1] + t * (yn[1] - y[1]);
                return (rr, w.powf(1.0 / nf));
            }
            r += h;
            y = yn;
        }
    }

    /// Bisection shoot on `m` with the RK4 integrator for slope target 1.
    fn rk4_shoot(n: usize, k: f64, steps: usize) -> (f64, f64) {
        let (mut lo, mut hi) = (1e-3, 1e3);
        let slope = |m: f64| rk4_eigen(n, k, 1.0, m, steps).1 - 1.0;
        let flo = slope(lo);
        for _ in 0..100 {
            let mid = (lo * hi).sqrt();
            if slope(mid) * flo > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let m = (lo * hi).sqrt();
        (m, rk4_eigen(n, k, 1.0, m, steps).0)
    }

    #[test]
    fn cosine_eigenfunction() {
        let sol = radial_solve(&RadialProblem::new(1, RadialForm::Eigenvalue { k: 1.0 }, Some(1.0))).unwrap();
        assert!((sol.m - 1.0).abs() < 1e-8, "m = {}", sol.m);
        assert!((sol.radius - FRAC_PI_2).abs() < 1e-8);
        for r in [0.1, 0.5, 1.0, 1.4] {
            assert!((sol.u_at(r) + r.cos()).abs() < 1e-8);
        }
        assert!(sol.ode_residual < 1e-6, "{}", sol.ode_residual);
    }

    #[test]
    fn hemisphere_is_recovered_without_slope_bound() {
        for n in 1..=3 {
            let mut prob = RadialProblem::new(n, RadialForm::Hemisphere, None);
            // Without a slope bound every m gives a vertical-slope profile of
            // radius m^{−1/n}; the unit radius picks a = 1.
            let free = radial_solve(&prob);
            assert!(free.is_ok());
            prob.lambda = Some(1.0);
            prob.radius = Some(1.0);
            let sol = radial_solve(&prob).unwrap();
            assert!((sol.m - 1.0).abs() < 1e-7, "n {n}: m {}", sol.m);
            assert!((sol.radius - 1.0).abs() < 1e-7);
            for r in [0.2, 0.6, 0.9] {
                assert!((sol.u_at(r) + (1.0 - r * r).sqrt()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn quadratic_k0_profile() {
        // det D²u = 1 radially: u = (r² − R²)/2 with u′(R) = R = ρ.
        let sol = radial_solve(&RadialProblem::new(2, RadialForm::Eigenvalue { k: 0.0 }, Some(1.0))).unwrap();
        assert!((sol.radius - 1.0).abs() < 1e-9 && (sol.m - 0.5).abs() < 1e-9);
    }

    #[test]
    fn matches_fixed_step_oracle() {
        let sol = radial_solve(&RadialProblem::new(2, RadialForm::Eigenvalue { k: 2.0 }, Some(1.0))).unwrap();
        let (m, r) = rk4_shoot(2, 2.0, 20000);
        assert!((sol.m - m).abs() < 1e-6, "{} vs {m}", sol.m);
        assert!((sol.radius - r).abs() < 1e-6, "{} vs {r}", sol.radius);
        assert!((sol.lambda - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fixed_radius_solves_for_lambda() {
        // Rescaling ũ(x) = a u(x/a) keeps ρ and multiplies λ by a^{−(n+k)}.
        let base = radial_solve(&RadialProblem::new(2, RadialForm::Eigenvalue { k: 1.0 }, Some(1.0))).unwrap();
        let mut prob = RadialProblem::new(2, RadialForm::Eigenvalue { k: 1.0 }, Some(1.0));
        prob.radius = Some(1.0);
        let sol = radial_solve(&prob).unwrap();
        let a = 1.0 / base.radius;
        assert!((sol.lambda - a.powi(-3)).abs() < 1e-6 * sol.lambda, "{} vs {}", sol.lambda, a.powi(-3));
        assert!((sol.m - a * base.m).abs() < 1e-6);
    }

    #[test]
    fn hemisphere_identity() {
        let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        for n in 1..=4 {
            assert!(hemisphere_residual(1.0, n, &grid).unwrap().max_residual < 1e-12);
            let rep = hemisphere_residual(2.0, n, &grid).unwrap();
            for (r, res) in rep.points {
                let exact = hemisphere_closed_form(2.0, n, r);
                assert!((res - exact).abs() <= 1e-10 * exact);
            }
        }
        let near: Vec<f64> = [0.9, 0.99, 0.999].iter().map(|a| hemisphere_residual(*a, 2, &grid).unwrap().max_residual).collect();
        assert!(near[0] > near[1] && near[1] > near[2]);
    }

    #[test]
    fn dual_probe_trend() {
        // n = 1: v = √(m² + λ r²/m²), so v⋆(1) = −m²/v(1).
        let grid = [2.0, 1.0, 0.5, 0.25, 0.1, 0.05];
        let rows = dual_radial_probe(1, 1.0, &grid).unwrap();
        for row in &rows {
            let v1 = (row.m * row.m + 1.0 / (row.m * row.m)).sqrt();
            assert!((row.v_star + row.m * row.m / v1).abs() < 1e-8, "{row:?}");
        }
        assert!(probe_trend_to_zero(&rows));
        assert!(rows[0].v_star < -1.0);
        let err = radial_solve(&RadialProblem::new(1, RadialForm::DualLegendre, Some(1.0))).unwrap_err();
        assert!(matches!(err, Error::NoRadialSolution(_)));
    }

    #[test]
    fn gauss_constant_curvature_is_a_sphere_cap() {
        // K ≡ 1: graph of −u is a unit sphere piece; slope bound ρ gives R = ρ/√(1+ρ²).
        let prob = RadialProblem::new(2, RadialForm::Gauss { curvature: CurvatureSpec::Constant { value: 1.0 } }, Some(1.0));
        let sol = radial_solve(&prob).unwrap();
        let r_exp = 1.0 / 2f64.sqrt();
        assert!((sol.radius - r_exp).abs() < 1e-8, "{}", sol.radius);
        let m_exp = 1.0 - (1.0 - r_exp * r_exp).sqrt();
        assert!((sol.m - m_exp).abs() < 1e-8);
    }
}
