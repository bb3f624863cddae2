//! The nonlinearity `(F, G)` and its derivatives.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Catalog of `F` with `F(0) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FSpec {
    /// `F = s^{1+β}/(1+β)`, so `f = s^β`.
    Power { beta: f64 },
    /// `F = (e^{as} − 1)/a`, so `f = e^{as}`.
    Exponential { a: f64 },
}

/// Catalog of `G`; only differences of `G` matter to `J`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GSpec {
    /// `G = s`.
    Linear,
    /// `G = −coef · s^{−p}`.
    NegPower { p: f64, coef: f64 },
    /// `G = −coef · s^{−p} + s`.
    NegPowerPlusLinear { p: f64, coef: f64 },
    /// `G = log s`.
    Log,
    /// `G = −s^{−p}` for `s ≤ 1` blended into `log s` above.
    LogBlend { p: f64 },
    /// Monotone cubic through `(s_k, G_k)` with linear tails.
    Spline { knots: Vec<f64>, values: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairTag {
    Power,
    Exponential,
    LogBlend,
    CustomSpline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructuralPair {
    pub f: FSpec,
    pub g: GSpec,
    /// Constant added to `G`; `J` must not depend on it.
    #[serde(default)]
    pub g_offset: f64,
}

impl FSpec {
    pub fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match *self {
            FSpec::Power { beta } => s.powf(1.0 + beta) / (1.0 + beta),
            FSpec::Exponential { a } => (a * s).exp_m1() / a,
        }
    }

    pub fn deriv(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match *self {
            FSpec::Power { beta } => {
                if beta == 0.0 {
                    1.0
                } else {
                    s.powf(beta)
                }
            }
            FSpec::Exponential { a } => (a * s).exp(),
        }
    }

    /// `f′(s)`; infinite at 0 when `0 < β < 1`.
    pub fn second_deriv(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        match *self {
            FSpec::Power { beta } => {
                if beta == 0.0 {
                    0.0
                } else {
                    beta * s.powf(beta - 1.0)
                }
            }
            FSpec::Exponential { a } => a * (a * s).exp(),
        }
    }

    /// `log F(s)` without overflow for large `s`.
    pub fn ln(&self, s: f64) -> f64 {
        match *self {
            FSpec::Power { beta } => (1.0 + beta) * s.ln() - (1.0 + beta).ln(),
            FSpec::Exponential { a } => {
                let x = a * s;
                if x > 30.0 {
                    x + (-(-x).exp()).ln_1p() - a.ln()
                } else {
                    (x.exp_m1() / a).ln()
                }
            }
        }
    }

    /// Homogeneity degree of `F` when it has one.
    pub fn degree(&self) -> Option<f64> {
        match *self {
            FSpec::Power { beta } => Some(1.0 + beta),
            FSpec::Exponential { .. } => None,
        }
    }
}

/// Fritsch–Carlson slopes for a monotone cubic Hermite interpolant.
fn monotone_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let m = x.len();
    let d: Vec<f64> = (0..m - 1).map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k])).collect();
    let mut t = vec![0.0; m];
    t[0] = d[0];
    t[m - 1] = d[m - 2];
    for k in 1..m - 1 {
        t[k] = if d[k - 1] * d[k] <= 0.0 { 0.0 } else { 0.5 * (d[k - 1] + d[k]) };
    }
    for k in 0..m - 1 {
        if d[k] == 0.0 {
            t[k] = 0.0;
            t[k + 1] = 0.0;
            continue;
        }
        let a = t[k] / d[k];
        let b = t[k + 1] / d[k];
        let r = a * a + b * b;
        if r > 9.0 {
            let s = 3.0 / r.sqrt();
            t[k] = s * a * d[k];
            t[k + 1] = s * b * d[k];
        }
    }
    t
}

fn spline_eval(x: &[f64], y: &[f64], s: f64, order: usize) -> f64 {
    let m = x.len();
    let t = monotone_slopes(x, y);
    if s <= x[0] {
        return [y[0] + t[0] * (s - x[0]), t[0], 0.0][order];
    }
    if s >= x[m - 1] {
        return [y[m - 1] + t[m - 1] * (s - x[m - 1]), t[m - 1], 0.0][order];
    }
    let k = x.partition_point(|&xi| xi <= s).min(m - 1) - 1;
    let h = x[k + 1] - x[k];
    let u = (s - x[k]) / h;
    let (y0, y1, m0, m1) = (y[k], y[k + 1], t[k] * h, t[k + 1] * h);
    match order {
        0 => {
            let h00 = 2.0 * u.powi(3) - 3.0 * u * u + 1.0;
            let h10 = u.powi(3) - 2.0 * u * u + u;
            let h01 = -2.0 * u.powi(3) + 3.0 * u * u;
            let h11 = u.powi(3) - u * u;
            h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1
        }
        1 => {
            let d00 = 6.0 * u * u - 6.0 * u;
            let d10 = 3.0 * u * u - 4.0 * u + 1.0;
            let d01 = -6.0 * u * u + 6.0 * u;
            let d11 = 3.0 * u * u - 2.0 * u;
            (d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1) / h
        }
        _ => {
            let d00 = 12.0 * u - 6.0;
            let d10 = 6.0 * u - 4.0;
            let d01 = -12.0 * u + 6.0;
            let d11 = 6.0 * u - 2.0;
            (d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1) / (h * h)
        }
    }
}

impl GSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            GSpec::NegPower { p, coef } | GSpec::NegPowerPlusLinear { p, coef } => {
                if !(*p > 0.0 && *coef > 0.0) {
                    return Err(Error::InvalidPair("power and coefficient of G must be positive".into()));
                }
            }
            GSpec::LogBlend { p } => {
                if !(*p > 0.0) {
                    return Err(Error::InvalidPair("blend exponent must be positive".into()));
                }
            }
            GSpec::Spline { knots, values } => {
                if knots.len() < 2 || knots.len() != values.len() {
                    return Err(Error::InvalidPair("spline needs matching knots and values".into()));
                }
                if knots.windows(2).any(|w| !(w[1] > w[0])) || knots[0] <= 0.0 {
                    return Err(Error::InvalidPair("spline knots must be positive and increasing".into()));
                }
                if values.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidPair("non-monotone G spline".into()));
                }
            }
            GSpec::Linear | GSpec::Log => {}
        }
        Ok(())
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self {
            GSpec::Linear => s,
            GSpec::NegPower { p, coef } => -coef * s.powf(-p),
            GSpec::NegPowerPlusLinear { p, coef } => -coef * s.powf(-p) + s,
            GSpec::Log => s.ln(),
            GSpec::LogBlend { p } => {
                if s <= 1.0 {
                    // −s^{−p} + 1, continuous with slope p at 1
                    1.0 - s.powf(-p)
                } else {
                    p * s.ln()
                }
            }
            GSpec::Spline { knots, values } => spline_eval(knots, values, s, 0),
        }
    }

    pub fn deriv(&self, s: f64) -> f64 {
        match self {
            GSpec::Linear => 1.0,
            GSpec::NegPower { p, coef } => coef * p * s.powf(-p - 1.0),
            GSpec::NegPowerPlusLinear { p, coef } => coef * p * s.powf(-p - 1.0) + 1.0,
            GSpec::Log => 1.0 / s,
            GSpec::LogBlend { p } => {
                if s <= 1.0 {
                    p * s.powf(-p - 1.0)
                } else {
                    p / s
                }
            }
            GSpec::Spline { knots, values } => spline_eval(knots, values, s, 1),
        }
    }

    pub fn second_deriv(&self, s: f64) -> f64 {
        match self {
            GSpec::Linear => 0.0,
            GSpec::NegPower { p, coef } | GSpec::NegPowerPlusLinear { p, coef } => -coef * p * (p + 1.0) * s.powf(-p - 2.0),
            GSpec::Log => -1.0 / (s * s),
            GSpec::LogBlend { p } => {
                if s <= 1.0 {
                    -p * (p + 1.0) * s.powf(-p - 2.0)
                } else {
                    -p / (s * s)
                }
            }
            GSpec::Spline { knots, values } => spline_eval(knots, values, s, 2),
        }
    }

    /// Value as `s → 0⁺` (−∞ for singular forms).
    pub fn at_zero(&self) -> f64 {
        match self {
            GSpec::Linear => 0.0,
            GSpec::Spline { .. } => self.eval(0.0),
            _ => f64::NEG_INFINITY,
        }
    }

    /// Supremum of `G` on `(0, ∞)`.
    pub fn at_infinity(&self) -> f64 {
        match self {
            GSpec::NegPower { .. } => 0.0,
            _ => f64::INFINITY,
        }
    }

    /// `G⁻¹(y)`; values below the range map to 0, above to +∞.
    pub fn inverse(&self, y: f64) -> f64 {
        if y.is_nan() {
            return f64::NAN;
        }
        if y <= self.at_zero() {
            return 0.0;
        }
        if y >= self.at_infinity() {
            return f64::INFINITY;
        }
        match self {
            GSpec::Linear => y,
            GSpec::NegPower { p, coef } => (-y / coef).powf(-1.0 / p),
            GSpec::Log => y.exp(),
            GSpec::LogBlend { p } => {
                if y <= 0.0 {
                    (1.0 - y).powf(-1.0 / p)
                } else {
                    (y / p).exp()
                }
            }
            _ => self.inverse_by_bisection(y),
        }
    }

    fn inverse_by_bisection(&self, y: f64) -> f64 {
        // bracket in log s, then safeguarded Newton
        let mut lo = -1.0f64;
        let mut hi = 1.0f64;
        while self.eval(lo.exp()) > y && lo > -700.0 {
            lo *= 2.0;
        }
        while self.eval(hi.exp()) < y && hi < 700.0 {
            hi *= 2.0;
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let s = x.exp();
            let r = self.eval(s) - y;
            if r > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.deriv(s) * s;
            let mut nx = x - r / d;
            if !(nx > lo && nx < hi) || !nx.is_finite() {
                nx = 0.5 * (lo + hi);
            }
            if (nx - x).abs() <= 1e-16 * (1.0 + x.abs()) {
                x = nx;
                break;
            }
            x = nx;
        }
        x.exp()
    }
}

impl StructuralPair {
    pub fn new(f: FSpec, g: GSpec) -> Result<Self> {
        g.validate()?;
        match f {
            FSpec::Power { beta } if !(beta >= 0.0) => return Err(Error::InvalidPair("F exponent must be ≥ 0".into())),
            FSpec::Exponential { a } if !(a > 0.0) => return Err(Error::InvalidPair("exponential rate must be positive".into())),
            _ => {}
        }
        Ok(Self { f, g, g_offset: 0.0 })
    }

    /// Reconstruction/eigenvalue pair `F = s^{k+1}/(k+1)`, `G = s`.
    pub fn eigenvalue(k: f64) -> Self {
        Self { f: FSpec::Power { beta: k }, g: GSpec::Linear, g_offset: 0.0 }
    }

    /// `F = (e^{as} − 1)/a`, `G = s`.
    pub fn exponential(a: f64) -> Self {
        Self { f: FSpec::Exponential { a }, g: GSpec::Linear, g_offset: 0.0 }
    }

    /// The homogeneous optimal-transport pair in dimension `n`.
    pub fn transport(n: usize, alpha: f64, beta: f64) -> Self {
        let p = n as f64 + 1.0 + alpha;
        Self { f: FSpec::Power { beta }, g: GSpec::NegPower { p, coef: 1.0 / p }, g_offset: 0.0 }
    }

    /// `F = s`, `G = −s^{−(n+1)}`.
    pub fn non_example(n: usize) -> Self {
        Self { f: FSpec::Power { beta: 0.0 }, g: GSpec::NegPower { p: n as f64 + 1.0, coef: 1.0 }, g_offset: 0.0 }
    }

    /// `F = ½s²`, `G = −s^{−(n+5)} + s`.
    pub fn two_component(n: usize) -> Self {
        Self { f: FSpec::Power { beta: 1.0 }, g: GSpec::NegPowerPlusLinear { p: n as f64 + 5.0, coef: 1.0 }, g_offset: 0.0 }
    }

    pub fn tag(&self) -> PairTag {
        match (&self.f, &self.g) {
            (_, GSpec::Spline { .. }) => PairTag::CustomSpline,
            (_, GSpec::LogBlend { .. }) | (_, GSpec::Log) => PairTag::LogBlend,
            (FSpec::Exponential { .. }, _) => PairTag::Exponential,
            _ => PairTag::Power,
        }
    }

    pub fn big_f(&self, s: f64) -> f64 {
        self.f.eval(s)
    }

    pub fn small_f(&self, s: f64) -> f64 {
        self.f.deriv(s)
    }

    pub fn small_f_prime(&self, s: f64) -> f64 {
        self.f.second_deriv(s)
    }

    pub fn big_g(&self, s: f64) -> f64 {
        self.g.eval(s) + self.g_offset
    }

    pub fn small_g(&self, s: f64) -> f64 {
        self.g.deriv(s)
    }

    pub fn small_g_prime(&self, s: f64) -> f64 {
        self.g.second_deriv(s)
    }

    pub fn g_inverse(&self, y: f64) -> f64 {
        self.g.inverse(y - self.g_offset)
    }

    /// Whether `G(0⁺) = −∞`.
    pub fn singular_at_zero(&self) -> bool {
        self.g.at_zero() == f64::NEG_INFINITY
    }

    /// Whether `∫ G(|y|)` converges near `y = 0` in dimension `n`.
    pub fn pole_integrable(&self, n: usize) -> bool {
        match self.g {
            GSpec::NegPower { p, .. } | GSpec::NegPowerPlusLinear { p, .. } | GSpec::LogBlend { p } => p < n as f64,
            _ => true,
        }
    }

    pub fn is_linear_g(&self) -> bool {
        matches!(self.g, GSpec::Linear)
    }

    /// Exponential rate `a` when `F` is exponential.
    pub fn rate(&self) -> Option<f64> {
        match self.f {
            FSpec::Exponential { a } => Some(a),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> Vec<StructuralPair> {
        vec![
            StructuralPair::eigenvalue(0.0),
            StructuralPair::eigenvalue(1.0),
            StructuralPair::exponential(1.0),
            StructuralPair::transport(1, 0.0, 2.0),
            StructuralPair::non_example(2),
            StructuralPair::two_component(4),
            StructuralPair::new(FSpec::Power { beta: 2.0 }, GSpec::Log).unwrap(),
            StructuralPair::new(FSpec::Power { beta: 2.0 }, GSpec::LogBlend { p: 2.0 }).unwrap(),
            StructuralPair::new(FSpec::Power { beta: 1.0 }, GSpec::Spline { knots: vec![0.5, 1.0, 2.0, 4.0], values: vec![-2.0, 0.0, 1.0, 1.5] }).unwrap(),
        ]
    }

    #[test]
    fn derivatives_match_central_differences() {
        for pair in catalog() {
            for k in -20..=20 {
                let s = 10f64.powf(k as f64 / 10.0);
                let h = 1e-6 * s;
                let fd = (pair.big_f(s + h) - pair.big_f(s - h)) / (2.0 * h);
                assert!((fd - pair.small_f(s)).abs() <= 1e-6 * pair.small_f(s).abs().max(1e-12), "{pair:?} f at {s}");
                let gd = (pair.big_g(s + h) - pair.big_g(s - h)) / (2.0 * h);
                assert!((gd - pair.small_g(s)).abs() <= 1e-6 * pair.small_g(s).abs().max(1e-12), "{pair:?} g at {s}");
            }
        }
    }

    #[test]
    fn inverse_round_trips() {
        for pair in catalog() {
            for k in -30..=30 {
                let s = 10f64.powf(k as f64 / 10.0);
                let back = pair.g_inverse(pair.big_g(s));
                assert!((back - s).abs() <= 1e-10 * s, "{pair:?} at {s}: {back}");
            }
        }
    }

    #[test]
    fn exponential_log_does_not_overflow() {
        let f = FSpec::Exponential { a: 1.0 };
        assert!((f.ln(1e8) - 1e8).abs() < 1e-6);
        assert!((f.ln(1.0) - (std::f64::consts::E - 1.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn non_monotone_spline_rejected() {
        let g = GSpec::Spline { knots: vec![1.0, 2.0, 3.0], values: vec![0.0, 1.0, 0.5] };
        assert!(matches!(StructuralPair::new(FSpec::Power { beta: 0.0 }, g), Err(Error::InvalidPair(_))));
    }
}
