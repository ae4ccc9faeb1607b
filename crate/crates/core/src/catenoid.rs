//! The `n`-catenoid `X₀(s, θ) = (φ(s) θ, ψ(s))` and a finite-difference mean
//! curvature evaluator for sampled immersions.
//!
//! The profile solves `φ'' = φ + (n-2) φ^{3-2n}`, `ψ' = φ^{2-n}` with
//! `φ(0) = 1`, `φ'(0) = 0`, `ψ(0) = 0`, integrated by classical RK4 on
//! `[0, s_max]` and continued to negative `s` by parity. Values between nodes
//! come from quintic Hermite interpolation using derivatives supplied by the
//! ODE itself.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::numerics::{bisect, linear_fit};

/// Largest RK4 step used for the profile.
pub const MAX_STEP: f64 = 5e-4;

#[derive(Debug, Clone)]
pub struct CatenoidProfile {
    n: usize,
    step: f64,
    phi: Vec<f64>,
    dphi: Vec<f64>,
    psi: Vec<f64>,
    c_inf: f64,
    c_inf_error: f64,
}

/// Profile values at one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub phi: f64,
    pub dphi: f64,
    pub ddphi: f64,
    pub psi: f64,
    pub dpsi: f64,
}

fn rhs(n: usize, y: [f64; 3]) -> [f64; 3] {
    let nf = n as f64;
    let (phi, dphi) = (y[0], y[1]);
    [dphi, phi + (nf - 2.0) * phi.powf(3.0 - 2.0 * nf), phi.powf(2.0 - nf)]
}

impl CatenoidProfile {
    /// Integrates the profile on `[0, s_max]`; `tol` bounds the declared error
    /// of the `c∞` tail estimate.
    pub fn solve(n: usize, s_max: f64, tol: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimensions(format!("catenoid needs n >= 2, got {n}")));
        }
        if !(s_max >= 5.0) || !s_max.is_finite() {
            return Err(Error::InvalidParameter(format!("s_max must be at least 5, got {s_max}")));
        }
        let steps = (s_max / MAX_STEP).ceil() as usize;
        let h = s_max / steps as f64;
        let mut phi = Vec::with_capacity(steps + 1);
        let mut dphi = Vec::with_capacity(steps + 1);
        let mut psi = Vec::with_capacity(steps + 1);
        let mut y = [1.0, 0.0, 0.0];
        phi.push(y[0]);
        dphi.push(y[1]);
        psi.push(y[2]);
        for _ in 0..steps {
            let k1 = rhs(n, y);
            let k2 = rhs(n, add(y, k1, 0.5 * h));
            let k3 = rhs(n, add(y, k2, 0.5 * h));
            let k4 = rhs(n, add(y, k3, h));
            for i in 0..3 {
                y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::Convergence("profile integration produced non-finite values".into()));
            }
            phi.push(y[0]);
            dphi.push(y[1]);
            psi.push(y[2]);
        }
        let (c_inf, c_inf_error) = if n == 2 {
            (f64::INFINITY, 0.0)
        } else {
            // beyond s_max, φ grows like e^s up to a relative O(φ^{2-2n}) error
            let end = *phi.last().unwrap();
            let tail = end.powf(2.0 - n as f64) / (n as f64 - 2.0);
            (psi.last().unwrap() + tail, tail * end.powf(2.0 - 2.0 * n as f64))
        };
        if c_inf_error > tol {
            return Err(Error::Convergence(format!(
                "c_inf tail error {c_inf_error:.2e} exceeds tolerance {tol:.2e}; increase s_max"
            )));
        }
        Ok(Self { n, step: h, phi, dphi, psi, c_inf, c_inf_error })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn s_max(&self) -> f64 {
        self.step * (self.phi.len() - 1) as f64
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// `lim_{s→∞} ψ(s)`.
    pub fn c_inf(&self) -> f64 {
        self.c_inf
    }

    pub fn c_inf_error(&self) -> f64 {
        self.c_inf_error
    }

    /// Tabulated nodes `(s, φ, φ', ψ)` on `[0, s_max]`.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        (0..self.phi.len()).map(move |i| (i as f64 * self.step, self.phi[i], self.dphi[i], self.psi[i]))
    }

    fn ddphi_of(&self, phi: f64) -> f64 {
        let nf = self.n as f64;
        phi + (nf - 2.0) * phi.powf(3.0 - 2.0 * nf)
    }

    /// Profile values at `s`, using evenness of `φ` and oddness of `ψ`.
    pub fn at(&self, s: f64) -> Result<ProfilePoint> {
        let s_max = self.s_max();
        if !(s.abs() <= s_max * (1.0 + 1e-14)) {
            return Err(Error::OutOfRange { value: s, min: -s_max, max: s_max });
        }
        let sign = if s < 0.0 { -1.0 } else { 1.0 };
        let t = s.abs() / self.step;
        let i = (t.floor() as usize).min(self.phi.len() - 2);
        let u = t - i as f64;
        let h = self.step;
        let nf = self.n as f64;
        let (p0, p1) = (self.phi[i], self.phi[i + 1]);
        let (d0, d1) = (self.dphi[i], self.dphi[i + 1]);
        let (a0, a1) = (self.ddphi_of(p0), self.ddphi_of(p1));
        let phi = hermite5(u, h, [p0, d0, a0], [p1, d1, a1]);
        // φ''' = φ' + (n-2)(3-2n) φ^{2-2n} φ'
        let j0 = d0 * (1.0 + (nf - 2.0) * (3.0 - 2.0 * nf) * p0.powf(2.0 - 2.0 * nf));
        let j1 = d1 * (1.0 + (nf - 2.0) * (3.0 - 2.0 * nf) * p1.powf(2.0 - 2.0 * nf));
        let dphi = hermite5(u, h, [d0, a0, j0], [d1, a1, j1]);
        let q0 = p0.powf(2.0 - nf);
        let q1 = p1.powf(2.0 - nf);
        let r0 = (2.0 - nf) * p0.powf(1.0 - nf) * d0;
        let r1 = (2.0 - nf) * p1.powf(1.0 - nf) * d1;
        let psi = hermite5(u, h, [self.psi[i], q0, r0], [self.psi[i + 1], q1, r1]);
        Ok(ProfilePoint {
            phi,
            dphi: sign * dphi,
            ddphi: self.ddphi_of(phi),
            psi: sign * psi,
            dpsi: phi.powf(2.0 - nf),
        })
    }

    /// `X₀(s, θ) = (φ(s) θ, ψ(s))`.
    pub fn immersion_point(&self, s: f64, theta: &[f64]) -> Result<Vec<f64>> {
        let p = self.at(s)?;
        let mut x: Vec<f64> = theta.iter().map(|t| p.phi * t).collect();
        x.push(p.psi);
        Ok(x)
    }

    /// `N₀ = φ^{-1} (ψ' θ, -φ')`.
    pub fn unit_normal(&self, s: f64, theta: &[f64]) -> Result<Vec<f64>> {
        let p = self.at(s)?;
        let mut v: Vec<f64> = theta.iter().map(|t| p.dpsi * t / p.phi).collect();
        v.push(-p.dphi / p.phi);
        Ok(v)
    }

    /// Largest relative violation of `(φ')² + φ^{4-2n} = φ²` over the nodes.
    pub fn energy_defect(&self) -> f64 {
        let nf = self.n as f64;
        self.phi
            .iter()
            .zip(&self.dphi)
            .map(|(p, d)| ((d * d + p.powf(4.0 - 2.0 * nf) - p * p) / (p * p)).abs())
            .fold(0.0, f64::max)
    }

    /// The surface of revolution `(εφ(s) cos t, εφ(s) sin t, εψ(s))`,
    /// `|s| ≤ s_max`: the section of the scaled catenoid by any 3-space
    /// containing the axis. Faces are oriented by `N₀`.
    pub fn section_mesh(&self, eps: f64, s_max: f64, rings: usize, segments: usize) -> Result<Mesh> {
        if rings < 2 || segments < 3 {
            return Err(Error::InvalidParameter(format!("need rings >= 2 and segments >= 3, got {rings}, {segments}")));
        }
        let mut points = Vec::with_capacity(rings * (segments + 1));
        for i in 0..rings {
            let p = self.at(-s_max + 2.0 * s_max * i as f64 / (rings - 1) as f64)?;
            for j in 0..=segments {
                let t = 2.0 * std::f64::consts::PI * (j % segments) as f64 / segments as f64;
                points.push([eps * p.phi * t.cos(), eps * p.phi * t.sin(), eps * p.psi]);
            }
        }
        let mut mesh = Mesh::grid(rings, segments + 1, points).mapped(|p| p, true);
        mesh.weld(1e-12 * eps);
        Ok(mesh)
    }

    /// Solves `ε φ(s_ε) = ρ` for `s_ε ≥ 0`.
    pub fn neck_truncation(&self, eps: f64, rho: f64) -> Result<f64> {
        if !(eps > 0.0) || eps > rho {
            return Err(Error::InvalidParameter(format!("need 0 < eps <= rho, got eps = {eps}, rho = {rho}")));
        }
        if eps == rho {
            return Ok(0.0);
        }
        let target = rho / eps;
        let s_max = self.s_max();
        if *self.phi.last().unwrap() < target {
            return Err(Error::OutOfRange { value: target, min: 1.0, max: *self.phi.last().unwrap() });
        }
        bisect(|s| self.at(s).map(|p| p.phi - target).unwrap_or(f64::NAN), 0.0, s_max, 1e-15)
    }

    /// Fits the upper end, written as a graph `u(r)` over `r = φ`, to
    /// `c∞ - a r^{2-n} - b r^{4-3n}` and estimates the decay exponent of the
    /// remainder after the `r^{2-n}` term.
    pub fn end_expansion(&self) -> Result<EndExpansion> {
        if self.n < 3 {
            return Err(Error::InvalidDimensions("end expansion needs n >= 3".into()));
        }
        let nf = self.n as f64;
        let r_end = *self.phi.last().unwrap();
        if r_end < 25.0 {
            return Err(Error::InsufficientRange(format!("profile reaches r = {r_end:.2}, need 25")));
        }
        let samples = |lo: f64, hi: f64| -> Vec<(f64, f64)> {
            self.nodes()
                .filter(|(_, p, _, _)| *p >= lo && *p <= hi)
                .map(|(_, p, _, q)| (p, self.c_inf - q))
                .collect()
        };
        let far = samples(10.0, 25.0);
        let x: Vec<f64> = far.iter().map(|(r, _)| r.powf(2.0 - 2.0 * nf)).collect();
        let y: Vec<f64> = far.iter().map(|(r, d)| d * r.powf(nf - 2.0)).collect();
        let (b, a) = linear_fit(&x, &y);
        // remainder exponent from a window where it is well above roundoff
        let lo = (12.0 / nf).max(2.0);
        let near = samples(lo, 2.0 * lo);
        let lx: Vec<f64> = near.iter().map(|(r, _)| r.ln()).collect();
        let ly: Vec<f64> = near.iter().map(|(r, d)| (d - a * r.powf(2.0 - nf)).abs().ln()).collect();
        let (exponent, _) = linear_fit(&lx, &ly);
        Ok(EndExpansion { c_inf: self.c_inf, a, b, remainder_exponent: exponent })
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EndExpansion {
    pub c_inf: f64,
    pub a: f64,
    pub b: f64,
    pub remainder_exponent: f64,
}

fn add(y: [f64; 3], k: [f64; 3], h: f64) -> [f64; 3] {
    [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2]]
}

/// Quintic Hermite interpolant on `[0, h]` from value, first and second
/// derivative at both ends; `u ∈ [0, 1]` is the normalised position.
fn hermite5(u: f64, h: f64, left: [f64; 3], right: [f64; 3]) -> f64 {
    let u2 = u * u;
    let u3 = u2 * u;
    let u4 = u3 * u;
    let u5 = u4 * u;
    let h00 = 1.0 - 10.0 * u3 + 15.0 * u4 - 6.0 * u5;
    let h10 = u - 6.0 * u3 + 8.0 * u4 - 3.0 * u5;
    let h20 = 0.5 * (u2 - 3.0 * u3 + 3.0 * u4 - u5);
    let h01 = 10.0 * u3 - 15.0 * u4 + 6.0 * u5;
    let h11 = -4.0 * u3 + 7.0 * u4 - 3.0 * u5;
    let h21 = 0.5 * (u3 - 2.0 * u4 + u5);
    h00 * left[0] + h * h10 * left[1] + h * h * h20 * left[2] + h01 * right[0] + h * h11 * right[1]
        + h * h * h21 * right[2]
}

/// Mean curvature `H = tr(g⁻¹ II) / k` of a `k`-dimensional immersion in
/// `ℝ^{k+1}` at one node, from second-order central differences.
///
/// `point(offset)` returns the immersion at the grid node displaced by the
/// integer `offset ∈ {-1, 0, 1}^k` (at most two nonzero entries are
/// requested). The unit normal is the component of `reference_normal`
/// orthogonal to the tangent space, so the sign of `H` follows the reference.
pub fn mean_curvature_stencil<F>(point: F, steps: &[f64], reference_normal: &[f64]) -> Result<f64>
where
    F: Fn(&[i32]) -> Vec<f64>,
{
    let k = steps.len();
    let d = reference_normal.len();
    let mut offset = vec![0i32; k];
    let center = point(&offset);
    let mut first = Vec::with_capacity(k);
    let mut second = vec![vec![0.0; d]; k * k];
    for i in 0..k {
        offset[i] = 1;
        let p = point(&offset);
        offset[i] = -1;
        let q = point(&offset);
        offset[i] = 0;
        first.push((0..d).map(|c| (p[c] - q[c]) / (2.0 * steps[i])).collect::<Vec<f64>>());
        second[i * k + i] = (0..d).map(|c| (p[c] - 2.0 * center[c] + q[c]) / (steps[i] * steps[i])).collect();
    }
    for i in 0..k {
        for j in i + 1..k {
            let mut corner = |a: i32, b: i32| {
                offset[i] = a;
                offset[j] = b;
                let v = point(&offset);
                offset[i] = 0;
                offset[j] = 0;
                v
            };
            let pp = corner(1, 1);
            let pm = corner(1, -1);
            let mp = corner(-1, 1);
            let mm = corner(-1, -1);
            let v: Vec<f64> = (0..d).map(|c| (pp[c] - pm[c] - mp[c] + mm[c]) / (4.0 * steps[i] * steps[j])).collect();
            second[i * k + j] = v.clone();
            second[j * k + i] = v;
        }
    }
    curvature_from_derivatives(&first, &second, reference_normal)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `H = tr(g⁻¹ II) / k` from tangent vectors `∂ᵢX` and second derivatives
/// `∂ᵢ∂ⱼX` (row-major `k × k`).
pub fn curvature_from_derivatives(first: &[Vec<f64>], second: &[Vec<f64>], reference_normal: &[f64]) -> Result<f64> {
    let k = first.len();
    let g = nalgebra::DMatrix::from_fn(k, k, |i, j| dot(&first[i], &first[j]));
    let det = g.determinant();
    if !(det > 0.0) {
        return Err(Error::Geometry(format!("degenerate metric (det g = {det:e})")));
    }
    let ginv = g.try_inverse().ok_or_else(|| Error::Geometry("metric not invertible".into()))?;
    // normal: reference minus its tangential part
    let tn = nalgebra::DVector::from_fn(k, |i, _| dot(&first[i], reference_normal));
    let coeff = &ginv * tn;
    let mut normal = reference_normal.to_vec();
    for i in 0..k {
        for (c, v) in normal.iter_mut().enumerate() {
            *v -= coeff[i] * first[i][c];
        }
    }
    let len = dot(&normal, &normal).sqrt();
    if !(len > 1e-12) {
        return Err(Error::Geometry("reference normal is tangent to the immersion".into()));
    }
    let mut trace = 0.0;
    for i in 0..k {
        for j in 0..k {
            trace += ginv[(i, j)] * dot(&second[i * k + j], &normal) / len;
        }
    }
    Ok(trace / k as f64)
}

/// Sampled immersion on a structured grid with one ghost layer on every side.
#[derive(Debug, Clone)]
pub struct ImmersionPatch {
    /// Node counts per axis, ghosts included; the last axis varies fastest.
    pub shape: Vec<usize>,
    pub steps: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub normals: Vec<Vec<f64>>,
}

impl ImmersionPatch {
    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (i, s)| acc * s + i)
    }

    pub fn interior_shape(&self) -> Vec<usize> {
        self.shape.iter().map(|s| s - 2).collect()
    }
}

/// Mean curvature at every interior node of a patch (row-major over the
/// interior, last axis fastest).
pub fn mean_curvature_immersion(patch: &ImmersionPatch) -> Result<Vec<f64>> {
    let k = patch.shape.len();
    if patch.steps.len() != k || patch.shape.iter().any(|&s| s < 3) {
        return Err(Error::InvalidDimensions("patch needs at least one interior node per axis".into()));
    }
    let total: usize = patch.shape.iter().product();
    if patch.points.len() != total || patch.normals.len() != total {
        return Err(Error::NodeCountMismatch { expected: total, got: patch.points.len().min(patch.normals.len()) });
    }
    let interior = patch.interior_shape();
    let count: usize = interior.iter().product();
    let mut out = Vec::with_capacity(count);
    let mut idx = vec![0usize; k];
    for flat in 0..count {
        let mut rest = flat;
        for a in (0..k).rev() {
            idx[a] = rest % interior[a] + 1;
            rest /= interior[a];
        }
        let center = patch.flat(&idx);
        let h = mean_curvature_stencil(
            |off| {
                let shifted: Vec<usize> = idx.iter().zip(off).map(|(i, o)| (*i as i64 + *o as i64) as usize).collect();
                patch.points[patch.flat(&shifted)].clone()
            },
            &patch.steps,
            &patch.normals[center],
        )?;
        out.push(h);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn profile(n: usize) -> CatenoidProfile {
        CatenoidProfile::solve(n, 8.0, 1e-8).unwrap()
    }

    /// Adaptive Simpson quadrature, used as an independent oracle.
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth > 40 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth + 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth + 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 0)
    }

    #[test]
    fn initial_values() {
        for n in 2..6 {
            let p = profile(n).at(0.0).unwrap();
            assert_eq!((p.phi, p.dphi, p.psi), (1.0, 0.0, 0.0));
        }
    }

    #[test]
    fn closed_form_n3() {
        let p = profile(3);
        for (s, phi, _, _) in p.nodes() {
            let exact = (2.0 * s).cosh().sqrt();
            assert!(((phi - exact) / exact).abs() < 1e-10, "s = {s}");
        }
    }

    #[test]
    fn power_identity_all_n() {
        for n in 3..6 {
            let p = profile(n);
            let nf = n as f64;
            for (s, phi, _, _) in p.nodes() {
                let c = ((nf - 1.0) * s).cosh();
                assert!((phi.powf(nf - 1.0) - c).abs() <= 1e-8 * c, "n = {n}, s = {s}");
            }
        }
    }

    #[test]
    fn energy_and_psi_derivative() {
        for n in 2..6 {
            let p = profile(n);
            assert!(p.energy_defect() < 1e-10, "n = {n}: {}", p.energy_defect());
            for s in [0.3, 1.7, 4.4, -2.2] {
                let pt = p.at(s).unwrap();
                assert!((pt.dpsi * pt.phi.powi(n as i32 - 2) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn c_inf_matches_quadrature_n3() {
        let p = profile(3);
        let f = |t: f64| (2.0 * t).cosh().powf(-0.5);
        // tail past 30 is below 1e-13
        let oracle = adaptive_simpson(&f, 0.0, 30.0, 1e-14);
        assert!((p.c_inf() - oracle).abs() < 1e-8, "{} vs {oracle}", p.c_inf());
    }

    #[test]
    fn parity_between_nodes() {
        let p = profile(4);
        for s in [0.1234, 2.71, 5.5] {
            let (a, b) = (p.at(s).unwrap(), p.at(-s).unwrap());
            assert_eq!(a.phi, b.phi);
            assert_eq!(a.psi, -b.psi);
            assert_eq!(a.dphi, -b.dphi);
        }
        assert!(matches!(p.at(9.0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn neck_circle_and_normal() {
        let p = profile(3);
        let theta = [0.6, 0.0, 0.8];
        assert_eq!(p.immersion_point(0.0, &theta).unwrap(), vec![0.6, 0.0, 0.8, 0.0]);
        let nrm = p.unit_normal(0.0, &theta).unwrap();
        assert!(nrm.iter().zip([0.6, 0.0, 0.8, 0.0]).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn top_height_approaches_c_inf() {
        let p = profile(3);
        let z = p.immersion_point(8.0, &[1.0, 0.0, 0.0]).unwrap()[3];
        // remaining tail is about φ(8)^{-1}
        assert!((p.c_inf() - z - p.at(8.0).unwrap().phi.recip()).abs() < 1e-10);
    }

    #[test]
    fn neck_truncation_examples() {
        let p = profile(3);
        assert_eq!(p.neck_truncation(0.3, 0.3).unwrap(), 0.0);
        let rho = 0.5;
        let eps = rho / 2f64.cosh().sqrt();
        let s = p.neck_truncation(eps, rho).unwrap();
        assert!((s - 1.0).abs() < 1e-11);
        assert!((eps * p.at(s).unwrap().phi - rho).abs() < 1e-12);
        assert!(p.neck_truncation(0.6, 0.5).is_err());
        let shifted: Vec<f64> =
            [1e-2, 1e-3].iter().map(|&e| p.neck_truncation(e, rho).unwrap() + f64::ln(e)).collect();
        assert!((shifted[0] - shifted[1]).abs() < 1e-3);
    }

    #[test]
    fn section_mesh_is_an_outward_annulus() {
        let p = profile(3);
        let mesh = p.section_mesh(0.5, 2.0, 21, 32).unwrap();
        assert_eq!(mesh.vertices.len(), 21 * 32);
        assert!(mesh.is_manifold());
        assert_eq!(mesh.boundary_loops(), 2);
        // face normal at the waist on the positive x axis points away from the axis
        let f = mesh.faces.iter().find(|f| f.iter().all(|v| mesh.vertices[*v][0] > 0.45 && mesh.vertices[*v][2].abs() < 0.2)).unwrap();
        let (a, b, c) = (mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
        let (u, v) = ([b[0] - a[0], b[1] - a[1], b[2] - a[2]], [c[0] - a[0], c[1] - a[1], c[2] - a[2]]);
        assert!(u[1] * v[2] - u[2] * v[1] > 0.0);
    }

    #[test]
    fn end_expansion_coefficients() {
        for n in 3..6 {
            let fit = profile(n).end_expansion().unwrap();
            let nf = n as f64;
            assert!((fit.a * (nf - 2.0) - 1.0).abs() < 1e-2, "n = {n}: a = {}", fit.a);
            let expected = 4.0 - 3.0 * nf;
            assert!(((fit.remainder_exponent - expected) / expected).abs() < 0.1, "n = {n}: {}", fit.remainder_exponent);
        }
    }

    fn sphere_patch(radius: f64, h: f64) -> ImmersionPatch {
        let (a0, b0) = (1.0, 0.4);
        let mut points = Vec::new();
        let mut normals = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                let (a, b) = (a0 + (i as f64 - 2.0) * h, b0 + (j as f64 - 2.0) * h);
                let x = [a.sin() * b.cos(), a.sin() * b.sin(), a.cos()];
                normals.push(x.iter().map(|v| -v).collect());
                points.push(x.iter().map(|v| radius * v).collect());
            }
        }
        ImmersionPatch { shape: vec![5, 5], steps: vec![h, h], points, normals }
    }

    #[test]
    fn sphere_curvature_second_order() {
        let r = 2.0;
        let err = |h: f64| (mean_curvature_immersion(&sphere_patch(r, h)).unwrap()[4] - 1.0 / r).abs();
        let (e1, e2) = (err(0.04), err(0.02));
        assert!(e1 < 1e-2);
        let order = (e1 / e2).log2();
        assert!((order - 2.0).abs() < 0.3, "order {order}");
    }

    #[test]
    fn plane_is_exactly_flat() {
        let mut points = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                points.push(vec![i as f64 * 0.1, j as f64 * 0.1, 0.0]);
            }
        }
        let patch = ImmersionPatch { shape: vec![4, 4], steps: vec![0.1, 0.1], points, normals: vec![vec![0.0, 0.0, 1.0]; 16] };
        assert!(mean_curvature_immersion(&patch).unwrap().iter().all(|h| *h == 0.0));
    }

    #[test]
    fn degenerate_metric_is_reported() {
        let patch = ImmersionPatch {
            shape: vec![3, 3],
            steps: vec![0.1, 0.1],
            points: vec![vec![0.0, 0.0, 0.0]; 9],
            normals: vec![vec![0.0, 0.0, 1.0]; 9],
        };
        assert!(matches!(mean_curvature_immersion(&patch), Err(Error::Geometry(_))));
    }

    #[test]
    fn catenoid_patch_is_minimal() {
        let p = profile(3);
        let err = |h: f64| {
            let (s0, a0, b0) = (0.7, 1.1, 0.3);
            let theta = |a: f64, b: f64| [a.sin() * b.cos(), a.sin() * b.sin(), a.cos()];
            mean_curvature_stencil(
                |o| {
                    let t = theta(a0 + o[1] as f64 * h, b0 + o[2] as f64 * h);
                    p.immersion_point(s0 + o[0] as f64 * h, &t).unwrap()
                },
                &[h, h, h],
                &p.unit_normal(s0, &theta(a0, b0)).unwrap(),
            )
            .unwrap()
            .abs()
        };
        let (e1, e2) = (err(0.02), err(0.01));
        assert!(e1 < 1e-3, "{e1}");
        assert!(e2 < e1 / 3.0, "{e1} {e2}");
    }

    proptest! {
        #[test]
        fn normal_is_unit_and_orthogonal(s in -7.5f64..7.5, a in 0.1f64..3.0, b in 0.0f64..6.2) {
            let p = profile(3);
            let theta = [a.sin() * b.cos(), a.sin() * b.sin(), a.cos()];
            let nrm = p.unit_normal(s, &theta).unwrap();
            prop_assert!((dot(&nrm, &nrm) - 1.0).abs() < 1e-12);
            let pt = p.at(s).unwrap();
            let mut ds: Vec<f64> = theta.iter().map(|t| pt.dphi * t).collect();
            ds.push(pt.dpsi);
            prop_assert!(dot(&nrm, &ds).abs() < 1e-12);
            let mut dtheta = vec![-a.sin() * b.sin() * pt.phi, a.sin() * b.cos() * pt.phi, 0.0];
            dtheta.push(0.0);
            prop_assert!(dot(&nrm, &dtheta).abs() < 1e-12);
        }
    }
}
