//! Small numerical building blocks shared by the solvers: half-integer gamma
//! values, sphere volumes, Gauss–Legendre rules, tridiagonal solves, cubic
//! splines and scalar root bracketing.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Γ(k/2) for a positive integer `k`, by the half-integer recursion.
pub fn gamma_half(k: u32) -> f64 {
    assert!(k > 0, "gamma_half needs a positive argument");
    let (mut value, mut arg2) = if k.is_multiple_of(2) { (1.0, 2) } else { (PI.sqrt(), 1) };
    while arg2 < k {
        value *= arg2 as f64 / 2.0;
        arg2 += 2;
    }
    value
}

/// Volume of the unit sphere S^k ⊂ ℝ^{k+1}.
pub fn sphere_volume(k: usize) -> f64 {
    const CACHED: [f64; 9] = [
        2.0,
        2.0 * PI,
        4.0 * PI,
        2.0 * PI * PI,
        8.0 * PI * PI / 3.0,
        PI * PI * PI,
        16.0 * PI * PI * PI / 15.0,
        PI * PI * PI * PI / 3.0,
        32.0 * PI * PI * PI * PI / 105.0,
    ];
    if k < CACHED.len() {
        return CACHED[k];
    }
    2.0 * PI.powf((k as f64 + 1.0) / 2.0) / gamma_half(k as u32 + 1)
}

/// Gauss–Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre(order: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(order > 0);
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let n = order as f64;
    for i in 0..order.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if order == 1 { x } else { p1 };
            let pm1 = if order == 1 { 1.0 } else { p0 };
            dp = n * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[order - 1 - i] = x;
        weights[i] = w;
        weights[order - 1 - i] = w;
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    for (x, w) in nodes.iter_mut().zip(weights.iter_mut()) {
        *x = mid + half * *x;
        *w *= half;
    }
    (nodes, weights)
}

/// Solves a tridiagonal system in place (Thomas algorithm).
///
/// `lower[i]` multiplies `x[i-1]` in row `i`, `upper[i]` multiplies `x[i+1]`.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom.abs() < 1e-300 {
        return Err(Error::Singular("zero pivot in tridiagonal solve".into()));
    }
    c[0] = if n > 1 { upper[0] / denom } else { 0.0 };
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom.abs() < 1e-300 {
            return Err(Error::Singular(format!("zero pivot at row {i}")));
        }
        c[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Natural-free cubic spline on a uniform grid with not-a-knot style end
/// conditions replaced by clamped end slopes from one-sided differences.
#[derive(Debug, Clone)]
pub struct UniformSpline {
    x0: f64,
    step: f64,
    values: Vec<f64>,
    second: Vec<f64>,
}

impl UniformSpline {
    pub fn new(x0: f64, step: f64, values: Vec<f64>) -> Self {
        let n = values.len();
        assert!(n >= 4, "spline needs at least four samples");
        let h = step;
        // end slopes from third-order one-sided differences
        let d0 = (-11.0 * values[0] + 18.0 * values[1] - 9.0 * values[2] + 2.0 * values[3]) / (6.0 * h);
        let dn = (11.0 * values[n - 1] - 18.0 * values[n - 2] + 9.0 * values[n - 3] - 2.0 * values[n - 4]) / (6.0 * h);
        let mut lower = vec![h / 6.0; n];
        let mut diag = vec![2.0 * h / 3.0; n];
        let mut upper = vec![h / 6.0; n];
        let mut rhs = vec![0.0; n];
        diag[0] = h / 3.0;
        diag[n - 1] = h / 3.0;
        lower[0] = 0.0;
        upper[n - 1] = 0.0;
        rhs[0] = (values[1] - values[0]) / h - d0;
        rhs[n - 1] = dn - (values[n - 1] - values[n - 2]) / h;
        for i in 1..n - 1 {
            rhs[i] = (values[i + 1] - 2.0 * values[i] + values[i - 1]) / h;
        }
        let second = solve_tridiagonal(&lower, &diag, &upper, &rhs).expect("spline system is diagonally dominant");
        Self { x0, step, values, second }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let t = ((x - self.x0) / self.step).clamp(0.0, (n - 1) as f64);
        let i = (t.floor() as usize).min(n - 2);
        let a = t - i as f64;
        let b = 1.0 - a;
        let h2 = self.step * self.step;
        b * self.values[i]
            + a * self.values[i + 1]
            + ((b * b * b - b) * self.second[i] + (a * a * a - a) * self.second[i + 1]) * h2 / 6.0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let n = self.values.len();
        let t = ((x - self.x0) / self.step).clamp(0.0, (n - 1) as f64);
        let i = (t.floor() as usize).min(n - 2);
        let a = t - i as f64;
        let b = 1.0 - a;
        let h = self.step;
        (self.values[i + 1] - self.values[i]) / h
            + h / 6.0 * (-(3.0 * b * b - 1.0) * self.second[i] + (3.0 * a * a - 1.0) * self.second[i + 1])
    }
}

/// Bisection for a sign change of `f` on `[a, b]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Convergence(format!("no sign change on [{a}, {b}]")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm == 0.0 || (b - a).abs() < tol {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Ordinary least squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Anderson mixing for the fixed-point map `x ↦ x + f(x)`: the next iterate
/// combines the last `depth` steps with the coefficients that minimise the
/// linearised residual.
pub struct Anderson {
    depth: usize,
    xs: Vec<Vec<f64>>,
    fs: Vec<Vec<f64>>,
}

impl Anderson {
    pub fn new(depth: usize) -> Self {
        Self { depth, xs: Vec::new(), fs: Vec::new() }
    }

    /// Records the pair `(x, f(x))` and returns the next iterate.
    pub fn step(&mut self, x: Vec<f64>, f: Vec<f64>) -> Vec<f64> {
        let plain: Vec<f64> = x.iter().zip(&f).map(|(a, b)| a + b).collect();
        self.xs.push(x);
        self.fs.push(f);
        if self.xs.len() > self.depth + 1 {
            self.xs.remove(0);
            self.fs.remove(0);
        }
        let k = self.xs.len() - 1;
        if k == 0 {
            return plain;
        }
        let len = plain.len();
        let df = DMatrix::from_fn(len, k, |r, c| self.fs[c + 1][r] - self.fs[c][r]);
        let dx = DMatrix::from_fn(len, k, |r, c| self.xs[c + 1][r] - self.xs[c][r]);
        let rhs = DVector::from_column_slice(&self.fs[k]);
        let Ok(gamma) = df.clone().svd(true, true).solve(&rhs, 1e-12 * rhs.norm().max(1e-300)) else {
            return plain;
        };
        let shift = (dx + df) * gamma;
        plain.iter().zip(shift.iter()).map(|(p, s)| p - s).collect()
    }
}
