//! Local quadratic least-squares stencils for second derivatives of
//! piecewise-affine data.
//!
//! A discrete solution is affine on each cell, so plain finite differences
//! see kinks. Fitting a quadratic to dense samples over a window several
//! cells wide averages the kinks out; the one-sided bias of a max of
//! tangent planes is nearly constant across the window and drops out of
//! the Hessian.

use nalgebra::{DMatrix, DVector};

/// Value, gradient and Hessian of a quadratic model about `center`.
#[derive(Clone, Debug)]
pub struct QuadraticFit {
    pub center: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

impl QuadraticFit {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let dv = DVector::from_column_slice(&d);
        self.value + self.gradient.iter().zip(&d).map(|(g, e)| g * e).sum::<f64>() + 0.5 * dv.dot(&(&self.hessian * &dv))
    }
}

/// Fits `f` on a `(2k+1)^n` grid of half-width `radius` about `center`,
/// with weights `(1 − |d|²/r²)⁴` on the inscribed ball. Points where `f`
/// returns `None` are skipped.
pub fn fit_quadratic(f: &dyn Fn(&[f64]) -> Option<f64>, center: &[f64], radius: f64, k: usize) -> Option<QuadraticFit> {
    let n = center.len();
    let terms = 1 + n + n * (n + 1) / 2;
    let side = 2 * k + 1;
    let total = side.pow(n as u32);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs = Vec::new();
    let mut weights = Vec::new();
    for idx in 0..total {
        let mut rem = idx;
        let mut d = vec![0.0; n];
        for dd in d.iter_mut() {
            *dd = radius * ((rem % side) as f64 - k as f64) / k.max(1) as f64;
            rem /= side;
        }
        let r2: f64 = d.iter().map(|x| x * x).sum::<f64>() / (radius * radius);
        if r2 >= 1.0 {
            continue;
        }
        let x: Vec<f64> = center.iter().zip(&d).map(|(c, e)| c + e).collect();
        let Some(val) = f(&x) else { continue };
        let mut row = Vec::with_capacity(terms);
        row.push(1.0);
        row.extend_from_slice(&d);
        for i in 0..n {
            for j in i..n {
                row.push(if i == j { 0.5 * d[i] * d[i] } else { d[i] * d[j] });
            }
        }
        rows.push(row);
        rhs.push(val);
        weights.push((1.0 - r2).powi(4));
    }
    if rows.len() < 2 * terms {
        return None;
    }
    let a = DMatrix::from_fn(rows.len(), terms, |i, j| rows[i][j] * weights[i].sqrt());
    let b = DVector::from_iterator(rows.len(), rhs.iter().zip(&weights).map(|(v, w)| v * w.sqrt()));
    let coef = a.svd(true, true).solve(&b, 1e-12).ok()?;
    let mut hessian = DMatrix::zeros(n, n);
    let mut t = 1 + n;
    for i in 0..n {
        for j in i..n {
            hessian[(i, j)] = coef[t];
            hessian[(j, i)] = coef[t];
            t += 1;
        }
    }
    Some(QuadraticFit { center: center.to_vec(), value: coef[0], gradient: coef.rows(1, n).iter().copied().collect(), hessian })
}

/// Central finite-difference gradient and Hessian of a smooth function.
pub fn fd_derivatives(f: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64) -> (Vec<f64>, DMatrix<f64>) {
    let n = x.len();
    let at = |shifts: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(i, s) in shifts {
            y[i] += s;
        }
        f(&y)
    };
    let f0 = f(x);
    let mut grad = vec![0.0; n];
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let (fp, fm) = (at(&[(i, step)]), at(&[(i, -step)]));
        grad[i] = (fp - fm) / (2.0 * step);
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (step * step);
        for j in 0..i {
            let v = (at(&[(i, step), (j, step)]) - at(&[(i, step), (j, -step)]) - at(&[(i, -step), (j, step)]) + at(&[(i, -step), (j, -step)])) / (4.0 * step * step);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    (grad, hess)
}
