//! Minimal necks close to a rescaled `n`-catenoid.
//!
//! Normal perturbations of `εX₀` are written as
//! `X_w = εX₀ + w φ^{(2-n)/2} N_ε` with `w` expanded in invariant sphere modes,
//! `w(s, θ) = Σ_j w_j(s) e_j(θ)`. In this gauge the linearised mean curvature
//! operator becomes
//!
//! `ℒ = ∂²_s + Δ_{S^{n-1}} - ((n-2)/2)² + n(3n-2)/4 · φ^{2-2n}`,
//!
//! which acts mode by mode. Fields are even in `s` and are stored on a
//! uniform grid over `[0, S]`.
//!
//! The nonlinear problem is never expanded symbolically: the residual of a
//! candidate `w` is the finite-difference mean curvature of `X_w`, rescaled so
//! that its linear part is `ℒw`, and the fixed point iteration is
//! `v ← v - 𝒢(R(w̃ + v))`.

use rayon::prelude::*;
use serde::Serialize;

use crate::catenoid::{mean_curvature_stencil, CatenoidProfile};
use crate::error::{Error, Result};
use crate::numerics::{bisect, solve_tridiagonal, UniformSpline};
use crate::sphere::{indicial_root, InvariantSphereBasis};

/// `n(3n-2)/4 · φ^{2-2n}`.
pub fn potential(n: usize, phi: f64) -> f64 {
    let nf = n as f64;
    nf * (3.0 * nf - 2.0) / 4.0 * phi.powf(2.0 - 2.0 * nf)
}

fn mode_shift(n: usize, lambda: f64) -> f64 {
    let a = (n as f64 - 2.0) / 2.0;
    lambda + a * a
}

/// Applies the mode-`λ` part of `ℒ` to samples on the uniform grid
/// `s_start + i·ds`; returns values at the interior nodes only.
pub fn apply_l_samples(profile: &CatenoidProfile, lambda: f64, s_start: f64, ds: f64, values: &[f64]) -> Result<Vec<f64>> {
    let n = profile.n();
    let shift = mode_shift(n, lambda);
    (1..values.len() - 1)
        .map(|i| {
            let s = s_start + i as f64 * ds;
            let phi = profile.at(s)?.phi;
            let d2 = (values[i + 1] - 2.0 * values[i] + values[i - 1]) / (ds * ds);
            Ok(d2 - shift * values[i] + potential(n, phi) * values[i])
        })
        .collect()
}

/// `Ψ^{0,-} = ∂_s(φ^{(n-2)/2})`, odd in `s`.
pub fn jacobi_minus(profile: &CatenoidProfile, s: f64) -> Result<f64> {
    let nf = profile.n() as f64;
    let p = profile.at(s)?;
    Ok((nf - 2.0) / 2.0 * p.phi.powf((nf - 4.0) / 2.0) * p.dphi)
}

/// `Ψ^{0,+} = φ^{(n-4)/2}(φ ∂_sψ - ψ ∂_sφ)`, even in `s`.
pub fn jacobi_plus(profile: &CatenoidProfile, s: f64) -> Result<f64> {
    let nf = profile.n() as f64;
    let p = profile.at(s)?;
    Ok(p.phi.powf((nf - 4.0) / 2.0) * (p.phi * p.dpsi - p.psi * p.dphi))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct JacobiZero {
    pub s0: f64,
    /// `false` when no sign change was found on the tabulated range.
    pub found: bool,
}

/// Largest zero of `Ψ^{0,+}` on `[0, s_max]`.
pub fn largest_jacobi_zero(profile: &CatenoidProfile) -> JacobiZero {
    let f = |s: f64| jacobi_plus(profile, s).unwrap_or(f64::NAN);
    let s_max = profile.s_max();
    let steps = (s_max / 1e-2).ceil() as usize;
    let h = s_max / steps as f64;
    for i in (0..steps).rev() {
        let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
        if f(a).signum() != f(b).signum() {
            if let Ok(s0) = bisect(f, a, b, 1e-12) {
                return JacobiZero { s0, found: true };
            }
        }
    }
    JacobiZero { s0: 0.0, found: false }
}

/// Even field `Σ_j w_j(s) e_j(θ)` tabulated on `s_i = i·step`, `i = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeckField {
    pub n: usize,
    pub step: f64,
    pub eigenvalues: Vec<f64>,
    /// `coeffs[j][i] = w_j(s_i)`.
    pub coeffs: Vec<Vec<f64>>,
}

impl NeckField {
    pub fn zeros(n: usize, eigenvalues: Vec<f64>, length: f64, step_max: f64) -> Self {
        let nodes = (length / step_max).ceil().max(4.0) as usize;
        let step = length / nodes as f64;
        let coeffs = vec![vec![0.0; nodes + 1]; eigenvalues.len()];
        Self { n, step, eigenvalues, coeffs }
    }

    /// Tabulates `f(j, s)` on the grid of `self`.
    pub fn from_fn<F: Fn(usize, f64) -> f64>(&self, f: F) -> Self {
        let mut out = self.clone();
        for (j, row) in out.coeffs.iter_mut().enumerate() {
            for (i, v) in row.iter_mut().enumerate() {
                *v = f(j, i as f64 * self.step);
            }
        }
        out
    }

    pub fn nodes(&self) -> usize {
        self.coeffs.first().map_or(0, |c| c.len())
    }

    pub fn length(&self) -> f64 {
        self.step * (self.nodes() - 1) as f64
    }

    pub fn modes(&self) -> usize {
        self.coeffs.len()
    }

    /// `ℒw`, using the even reflection at `s = 0` and a one-sided stencil at
    /// the far end.
    pub fn apply_l(&self, profile: &CatenoidProfile) -> Result<NeckField> {
        let n = self.n;
        let h2 = self.step * self.step;
        let last = self.nodes() - 1;
        let phis: Vec<f64> = (0..=last).map(|i| profile.at(i as f64 * self.step).map(|p| p.phi)).collect::<Result<_>>()?;
        let mut out = self.clone();
        for (j, w) in self.coeffs.iter().enumerate() {
            let shift = mode_shift(n, self.eigenvalues[j]);
            for i in 0..=last {
                let d2 = if i == 0 {
                    2.0 * (w[1] - w[0]) / h2
                } else if i == last {
                    (2.0 * w[i] - 5.0 * w[i - 1] + 4.0 * w[i - 2] - w[i - 3]) / h2
                } else {
                    (w[i + 1] - 2.0 * w[i] + w[i - 1]) / h2
                };
                out.coeffs[j][i] = d2 - shift * w[i] + potential(n, phis[i]) * w[i];
            }
        }
        Ok(out)
    }

    /// Discrete weighted norm `sup_s φ^{-δ} Σ_j (|w_j| + |∂w_j| + h|∂²w_j|)`.
    pub fn weighted_norm(&self, profile: &CatenoidProfile, delta: f64) -> f64 {
        let h = self.step;
        let last = self.nodes() - 1;
        let mut sup = 0.0f64;
        for i in 0..=last {
            let phi = profile.at(i as f64 * h).map(|p| p.phi).unwrap_or(f64::INFINITY);
            let mut acc = 0.0;
            for w in &self.coeffs {
                let (d1, d2) = if i == 0 {
                    (0.0, 2.0 * (w[1] - w[0]) / (h * h))
                } else if i == last {
                    (
                        (3.0 * w[i] - 4.0 * w[i - 1] + w[i - 2]) / (2.0 * h),
                        (2.0 * w[i] - 5.0 * w[i - 1] + 4.0 * w[i - 2] - w[i - 3]) / (h * h),
                    )
                } else {
                    ((w[i + 1] - w[i - 1]) / (2.0 * h), (w[i + 1] - 2.0 * w[i] + w[i - 1]) / (h * h))
                };
                acc += w[i].abs() + d1.abs() + h * d2.abs();
            }
            sup = sup.max(phi.powf(-delta) * acc);
        }
        sup
    }

    pub fn sub(&self, other: &NeckField) -> NeckField {
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x -= y;
            }
        }
        out
    }
}

/// Checks `δ ∈ ((2-n)/2, (n-2)/2)`.
pub fn check_delta(n: usize, delta: f64) -> Result<()> {
    let bound = (n as f64 - 2.0) / 2.0;
    if !(delta > -bound && delta < bound) {
        return Err(Error::InvalidParameter(format!("delta = {delta} must lie in ({}, {bound})", -bound)));
    }
    Ok(())
}

/// Solves `ℒw = f` on `(-S, S)` with `w(±S) = 0` for even `f`, where `S` is
/// the length of the grid of `f`. The value of `f` at `S` is ignored.
pub fn green_solve(profile: &CatenoidProfile, f: &NeckField) -> Result<NeckField> {
    let zero = largest_jacobi_zero(profile);
    let s = f.length();
    if zero.found && s <= zero.s0 {
        return Err(Error::InjectivityDomain { s, s0: zero.s0 });
    }
    let n = f.n;
    let h2 = f.step * f.step;
    let m = f.nodes() - 1;
    let pot: Vec<f64> = (0..m).map(|i| profile.at(i as f64 * f.step).map(|p| potential(n, p.phi))).collect::<Result<_>>()?;
    let mut out = f.clone();
    for (j, rhs) in f.coeffs.iter().enumerate() {
        let shift = mode_shift(n, f.eigenvalues[j]);
        let mut lower = vec![1.0 / h2; m];
        let mut upper = vec![1.0 / h2; m];
        let diag: Vec<f64> = (0..m).map(|i| -2.0 / h2 - shift + pot[i]).collect();
        // even reflection: w_{-1} = w_1
        upper[0] = 2.0 / h2;
        lower[0] = 0.0;
        let sol = solve_tridiagonal(&lower, &diag, &upper, &rhs[..m])?;
        out.coeffs[j][..m].copy_from_slice(&sol);
        out.coeffs[j][m] = 0.0;
    }
    Ok(out)
}

/// `𝒫(g)(s, θ) = Σ_j g_j e^{-γ_j s} e_j(θ)` tabulated on `[0, s_max]`.
pub fn poisson_extend(n: usize, g: &[f64], eigenvalues: &[f64], s_max: f64, step_max: f64) -> NeckField {
    let base = NeckField::zeros(n, eigenvalues.to_vec(), s_max, step_max);
    base.from_fn(|j, s| g[j] * (-indicial_root(n, eigenvalues[j]) * s).exp())
}

/// `w̃ = 𝒫(g)(s_ε - s) + 𝒫(g)(s_ε + s)` with `g = φ^{(n-2)/2}(s_ε) h`.
#[derive(Debug, Clone)]
pub struct TildeW {
    pub g: Vec<f64>,
    pub gammas: Vec<f64>,
    pub s_eps: f64,
}

impl TildeW {
    pub fn new(profile: &CatenoidProfile, eigenvalues: &[f64], h: &[f64], s_eps: f64) -> Result<Self> {
        let n = profile.n();
        let scale = profile.at(s_eps)?.phi.powf((n as f64 - 2.0) / 2.0);
        Ok(Self {
            g: h.iter().map(|v| v * scale).collect(),
            gammas: eigenvalues.iter().map(|&l| indicial_root(n, l)).collect(),
            s_eps,
        })
    }

    pub fn value(&self, j: usize, s: f64) -> f64 {
        let (g, a) = (self.g[j], self.gammas[j]);
        g * ((-a * (self.s_eps - s)).exp() + (-a * (self.s_eps + s)).exp())
    }

    pub fn derivative(&self, j: usize, s: f64) -> f64 {
        let (g, a) = (self.g[j], self.gammas[j]);
        g * a * ((-a * (self.s_eps - s)).exp() - (-a * (self.s_eps + s)).exp())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NeckParams {
    /// Largest grid step in `s`.
    pub ds_max: f64,
    /// Step of the tangent chart on the sphere used by the curvature stencil.
    pub chart_step: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Radius factor of the admissible ball `‖h‖ ≤ κ ε^{n-1}`.
    pub kappa: f64,
    pub delta: f64,
    /// Number of previous iterates mixed by Anderson acceleration; `0`
    /// keeps the plain fixed-point iteration.
    pub anderson_depth: usize,
}

impl Default for NeckParams {
    fn default() -> Self {
        Self { ds_max: 1e-2, chart_step: 1e-2, tol: 1e-10, max_iter: 50, kappa: 20.0, delta: 0.0, anderson_depth: 5 }
    }
}

/// Odd blend `ξ_ε`: `-φ'/φ` in the middle, `∓1` near `±s_ε`, joined by a `C³`
/// septic step on `|s| ∈ [s_ε - 2β, s_ε - β]` with `β = min(1, s_ε/4)`.
/// Continuity of the third derivative keeps centred second differences of
/// `X_w` second-order accurate across the joins.
#[derive(Debug, Clone, Copy)]
pub struct NormalBlend {
    pub s_eps: f64,
    pub width: f64,
}

impl NormalBlend {
    pub fn new(s_eps: f64) -> Self {
        Self { s_eps, width: (s_eps / 4.0).min(1.0) }
    }

    pub fn xi(&self, s: f64, phi: f64, dphi: f64) -> f64 {
        let a = s.abs();
        let start = self.s_eps - 2.0 * self.width;
        let t = ((a - start) / self.width).clamp(0.0, 1.0);
        let b = t.powi(4) * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t * t * t);
        let inner = -dphi.abs() / phi;
        s.signum() * ((1.0 - b) * inner - b)
    }
}

/// Builds an orthonormal basis of `θ^⊥`.
pub fn tangent_frame(theta: &[f64]) -> Vec<Vec<f64>> {
    let n = theta.len();
    let mut candidates: Vec<(f64, Vec<f64>)> = (0..n)
        .map(|k| {
            let mut v: Vec<f64> = (0..n).map(|i| if i == k { 1.0 } else { 0.0 } - theta[k] * theta[i]).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            (norm, v)
        })
        .collect();
    // drop the coordinate direction closest to θ
    let worst = (0..n).min_by(|&a, &b| candidates[a].0.partial_cmp(&candidates[b].0).unwrap()).unwrap();
    candidates.remove(worst);
    let mut frame: Vec<Vec<f64>> = Vec::new();
    for (_, mut v) in candidates {
        for u in &frame {
            let c: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= c * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        frame.push(v);
    }
    frame
}

/// Point of the unit sphere at `θ + Σ_i t_i e_i`, renormalised, for the
/// frame `e` of [`tangent_frame`].
pub fn sphere_chart(theta: &[f64], frame: &[Vec<f64>], t: &[f64]) -> Vec<f64> {
    let mut x = theta.to_vec();
    for (ti, e) in t.iter().zip(frame) {
        for (xi, ei) in x.iter_mut().zip(e) {
            *xi += ti * ei;
        }
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= norm);
    x
}

/// Sphere points and mode values for every chart offset in `{-1,0,1}^{n-1}`
/// with at most two nonzero entries, around one quadrature node.
struct ChartStencil {
    /// indexed by the base-3 code of the offset; `None` for unused offsets
    points: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

fn offset_code(offset: &[i32]) -> usize {
    offset.iter().fold(0, |acc, o| acc * 3 + (o + 1) as usize)
}

impl ChartStencil {
    fn new(basis: &InvariantSphereBasis, theta: &[f64], step: f64) -> Self {
        let frame = tangent_frame(theta);
        let k = frame.len();
        let total = 3usize.pow(k as u32);
        let mut points = vec![None; total];
        for code in 0..total {
            let mut offset = vec![0i32; k];
            let mut rest = code;
            for a in (0..k).rev() {
                offset[a] = (rest % 3) as i32 - 1;
                rest /= 3;
            }
            if offset.iter().filter(|o| **o != 0).count() > 2 {
                continue;
            }
            let mut x = theta.to_vec();
            for (o, t) in offset.iter().zip(&frame) {
                for (xi, ti) in x.iter_mut().zip(t) {
                    *xi += step * *o as f64 * ti;
                }
            }
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= norm);
            let values = basis.modes.iter().map(|m| m.eval(&x)).collect();
            points[code] = Some((x, values));
        }
        Self { points }
    }

    fn get(&self, offset: &[i32]) -> &(Vec<f64>, Vec<f64>) {
        self.points[offset_code(offset)].as_ref().expect("offset within stencil")
    }
}

/// Profile data at one grid node, signed for negative `s`.
#[derive(Debug, Clone, Copy)]
struct NodeGeometry {
    phi: f64,
    psi: f64,
    xi: f64,
}

/// The neck problem for fixed `(n, m)`, profile and sphere basis.
pub struct NeckSolver<'a> {
    pub profile: &'a CatenoidProfile,
    pub basis: &'a InvariantSphereBasis,
    pub params: NeckParams,
    charts: Vec<ChartStencil>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NeckReport {
    pub eps: f64,
    pub rho: f64,
    pub s_eps: f64,
    pub s0: f64,
    pub h_norm: f64,
    pub iterations: usize,
    /// `‖v_{k+1} - v_k‖_δ` for each iteration.
    pub history: Vec<f64>,
    /// Largest ratio of successive differences after the first step.
    pub contraction: f64,
    pub v_norm: f64,
    pub w_tilde_norm: f64,
    /// Largest rescaled curvature residual `|R(w)|` over the grid.
    pub residual: f64,
}

/// `C_ε(h)`: the solved neck together with its upper-end graph.
pub struct NeckSolution<'a> {
    solver: &'a NeckSolver<'a>,
    pub eps: f64,
    pub rho: f64,
    pub s_eps: f64,
    pub h: Vec<f64>,
    pub tilde: TildeW,
    pub v: NeckField,
    pub blend: NormalBlend,
    pub report: NeckReport,
    splines: Vec<UniformSpline>,
}

/// Values and `ρ ∂_r` derivatives of the sphere-mode coefficients of
/// `V_{ε,h}` at `r = ρ`.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryTrace {
    pub value: Vec<f64>,
    pub radial: Vec<f64>,
}

impl<'a> NeckSolver<'a> {
    pub fn new(profile: &'a CatenoidProfile, basis: &'a InvariantSphereBasis, params: NeckParams) -> Result<Self> {
        if profile.n() != basis.n {
            return Err(Error::InvalidDimensions("profile and basis dimensions differ".into()));
        }
        check_delta(profile.n(), params.delta)?;
        let charts = basis.nodes().iter().map(|t| ChartStencil::new(basis, t, params.chart_step)).collect();
        Ok(Self { profile, basis, params, charts })
    }

    pub fn n(&self) -> usize {
        self.profile.n()
    }

    fn node_geometry(&self, blend: &NormalBlend, s: f64) -> Result<NodeGeometry> {
        let p = self.profile.at(s)?;
        Ok(NodeGeometry { phi: p.phi, psi: p.psi, xi: blend.xi(s, p.phi, p.dphi) })
    }

    /// Point of `X_w` from the scalar `w` at one `(s, θ)`.
    fn immersion(&self, eps: f64, geo: &NodeGeometry, w: f64, theta: &[f64]) -> Vec<f64> {
        let nf = self.n() as f64;
        let amp = w * geo.phi.powf((2.0 - nf) / 2.0);
        let radial = eps * geo.phi + amp * (1.0 - geo.xi * geo.xi).max(0.0).sqrt();
        let mut x: Vec<f64> = theta.iter().map(|t| radial * t).collect();
        x.push(eps * geo.psi + amp * geo.xi);
        x
    }

    /// Rescaled curvature residual `nε²φ^{(n+2)/2}(H(X_w) - H(εX₀))` at all
    /// nodes `0..N` (excluding `s = S`), projected onto the sphere modes.
    fn residual(&self, eps: f64, w: &NeckField, geo: &[NodeGeometry]) -> Result<NeckField> {
        let n = self.n();
        let nf = n as f64;
        let last = w.nodes() - 1;
        let steps: Vec<f64> = std::iter::once(w.step).chain(std::iter::repeat_n(self.params.chart_step, n - 1)).collect();
        let rows: Vec<Result<Vec<f64>>> = (0..last)
            .into_par_iter()
            .map(|i| {
                let mut samples = Vec::with_capacity(self.charts.len());
                for (q, chart) in self.charts.iter().enumerate() {
                    let theta = &self.basis.nodes()[q];
                    let node = |k: i64| -> (NodeGeometry, usize) {
                        let idx = k.unsigned_abs() as usize;
                        let mut g = geo[idx];
                        if k < 0 {
                            g.psi = -g.psi;
                            g.xi = -g.xi;
                        }
                        (g, idx)
                    };
                    let point = |off: &[i32], with_w: bool| {
                        let (g, idx) = node(i as i64 + off[0] as i64);
                        let (th, vals) = chart.get(&off[1..]);
                        let value = if with_w {
                            w.coeffs.iter().zip(vals).map(|(c, e)| c[idx] * e).sum()
                        } else {
                            0.0
                        };
                        self.immersion(eps, &g, value, th)
                    };
                    let g0 = geo[i];
                    let reference = {
                        let mut v: Vec<f64> = theta.iter().map(|t| (1.0 - g0.xi * g0.xi).max(0.0).sqrt() * t).collect();
                        v.push(g0.xi);
                        v
                    };
                    let h_w = mean_curvature_stencil(|o| point(o, true), &steps, &reference)?;
                    let h_0 = mean_curvature_stencil(|o| point(o, false), &steps, &reference)?;
                    samples.push(nf * eps * eps * g0.phi.powf((nf + 2.0) / 2.0) * (h_w - h_0));
                }
                self.basis.project(&samples)
            })
            .collect();
        let mut out = w.clone();
        for (i, row) in rows.into_iter().enumerate() {
            let row = row?;
            for (j, v) in row.into_iter().enumerate() {
                out.coeffs[j][i] = v;
            }
        }
        for c in out.coeffs.iter_mut() {
            c[last] = 0.0;
        }
        Ok(out)
    }

    /// Solves for the minimal neck with boundary data `h`.
    pub fn solve(&'a self, h: &[f64], eps: f64, rho: f64) -> Result<NeckSolution<'a>> {
        self.solve_from(h, eps, rho, None)
    }

    /// As [`NeckSolver::solve`], starting the iteration from `initial` when
    /// it lives on the same grid.
    pub fn solve_from(&'a self, h: &[f64], eps: f64, rho: f64, initial: Option<&NeckField>) -> Result<NeckSolution<'a>> {
        let n = self.n();
        if h.len() != self.basis.len() {
            return Err(Error::NodeCountMismatch { expected: self.basis.len(), got: h.len() });
        }
        if !(eps > 0.0 && eps < rho) {
            return Err(Error::InvalidParameter(format!("need 0 < eps < rho, got eps = {eps}, rho = {rho}")));
        }
        let h_norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = self.params.kappa * eps.powi(n as i32 - 1);
        if h_norm > bound {
            return Err(Error::InputSize { norm: h_norm, bound });
        }
        let s_eps = self.profile.neck_truncation(eps, rho)?;
        let zero = largest_jacobi_zero(self.profile);
        if zero.found && s_eps <= zero.s0 {
            return Err(Error::InjectivityDomain { s: s_eps, s0: zero.s0 });
        }
        let blend = NormalBlend::new(s_eps);
        let eigenvalues = self.basis.eigenvalues();
        let tilde = TildeW::new(self.profile, &eigenvalues, h, s_eps)?;
        let mut v = NeckField::zeros(n, eigenvalues, s_eps, self.params.ds_max);
        if let Some(init) = initial {
            if init.nodes() == v.nodes() && init.modes() == v.modes() && (init.step - v.step).abs() < 1e-15 {
                v = init.clone();
            }
        }
        let tilde_field = v.from_fn(|j, s| tilde.value(j, s));
        let geo: Vec<NodeGeometry> =
            (0..v.nodes()).map(|i| self.node_geometry(&blend, i as f64 * v.step)).collect::<Result<_>>()?;
        let delta = self.params.delta;
        let mut history = Vec::new();
        let mut residual_max = 0.0;
        let mut converged = false;
        let mut mixer = crate::numerics::Anderson::new(self.params.anderson_depth);
        for _ in 0..self.params.max_iter {
            let w = add_fields(&tilde_field, &v);
            let r = self.residual(eps, &w, &geo)?;
            residual_max = r.coeffs.iter().flat_map(|c| c.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
            let correction = green_solve(self.profile, &r)?;
            let diff = correction.weighted_norm(self.profile, delta);
            history.push(diff);
            let x: Vec<f64> = v.coeffs.iter().flatten().copied().collect();
            let f: Vec<f64> = correction.coeffs.iter().flatten().map(|c| -c).collect();
            let next = mixer.step(x, f);
            let len = v.nodes();
            for (j, row) in v.coeffs.iter_mut().enumerate() {
                row.copy_from_slice(&next[j * len..(j + 1) * len]);
            }
            if !diff.is_finite() {
                return Err(Error::Divergence("non-finite neck iterate".into()));
            }
            let k = history.len();
            if k >= 4 && history[k - 1] > history[k - 2] && history[k - 2] > history[k - 3] && history[k - 3] > history[k - 4] {
                return Err(Error::Divergence(format!("neck iterates not contracting: {history:?}")));
            }
            if diff < self.params.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence(format!(
                "neck iteration stalled after {} steps (last difference {:.3e})",
                history.len(),
                history.last().copied().unwrap_or(f64::NAN)
            )));
        }
        let contraction = history.windows(2).skip(1).map(|w| w[1] / w[0]).fold(0.0, f64::max);
        let splines = v
            .coeffs
            .iter()
            .map(|c| {
                let mut mirrored: Vec<f64> = c.iter().skip(1).rev().copied().collect();
                mirrored.extend_from_slice(c);
                UniformSpline::new(-v.length(), v.step, mirrored)
            })
            .collect();
        let report = NeckReport {
            eps,
            rho,
            s_eps,
            s0: zero.s0,
            h_norm,
            iterations: history.len(),
            contraction,
            v_norm: v.weighted_norm(self.profile, delta),
            w_tilde_norm: tilde_field.weighted_norm(self.profile, (n as f64 - 2.0) / 2.0),
            history,
            residual: residual_max,
        };
        Ok(NeckSolution { solver: self, eps, rho, s_eps, h: h.to_vec(), tilde, v, blend, report, splines })
    }

    /// `‖V_{ε,h₂} - V_{ε,h₁}‖ / ‖h₂ - h₁‖` over the annulus `ρ/2 ≤ r ≤ ρ`.
    pub fn lipschitz_probe(&'a self, h1: &[f64], h2: &[f64], eps: f64, rho: f64) -> Result<f64> {
        let dh = h1.iter().zip(h2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dh == 0.0 {
            return Ok(0.0);
        }
        let a = self.solve(h1, eps, rho)?.annulus_profile()?;
        let b = self.solve(h2, eps, rho)?.annulus_profile()?;
        Ok(annulus_norm(&a.sub(&b), rho) / dh)
    }
}

fn add_fields(a: &NeckField, b: &NeckField) -> NeckField {
    let mut out = a.clone();
    for (x, y) in out.coeffs.iter_mut().zip(&b.coeffs) {
        for (p, q) in x.iter_mut().zip(y) {
            *p += q;
        }
    }
    out
}

/// Sphere-mode coefficients of `V_{ε,h}` sampled at radii across the annulus.
#[derive(Debug, Clone, Serialize)]
pub struct AnnulusProfile {
    pub radii: Vec<f64>,
    /// `values[k][j]` is the coefficient of mode `j` at `radii[k]`.
    pub values: Vec<Vec<f64>>,
    pub boundary: BoundaryTrace,
}

impl AnnulusProfile {
    pub fn sub(&self, other: &AnnulusProfile) -> AnnulusProfile {
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
        AnnulusProfile {
            radii: self.radii.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| diff(a, b)).collect(),
            boundary: BoundaryTrace {
                value: diff(&self.boundary.value, &other.boundary.value),
                radial: diff(&self.boundary.radial, &other.boundary.radial),
            },
        }
    }
}

/// `max_r ‖V(r)‖ + ‖ρ∂_rV(ρ)‖` in coefficient norms.
pub fn annulus_norm(p: &AnnulusProfile, _rho: f64) -> f64 {
    let l2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    p.values.iter().map(|v| l2(v)).fold(0.0, f64::max) + l2(&p.boundary.radial)
}

impl<'a> NeckSolution<'a> {
    pub fn solver(&self) -> &NeckSolver<'a> {
        self.solver
    }

    /// `w(s, θ) = w̃ + v` at an arbitrary parameter with `|s| ≤ s_ε`.
    pub fn w(&self, s: f64, theta: &[f64]) -> f64 {
        self.solver
            .basis
            .modes
            .iter()
            .enumerate()
            .map(|(j, m)| (self.tilde.value(j, s.abs()) + self.splines[j].eval(s)) * m.eval(theta))
            .sum()
    }

    /// Point of the neck `X_w(s, θ)` in `ℝ^{n+1}`.
    pub fn point(&self, s: f64, theta: &[f64]) -> Result<Vec<f64>> {
        let geo = self.solver.node_geometry(&self.blend, s)?;
        Ok(self.solver.immersion(self.eps, &geo, self.w(s, theta), theta))
    }

    /// The interpolating normal field `N_ε(s, θ)`.
    pub fn blend_normal(&self, s: f64, theta: &[f64]) -> Result<Vec<f64>> {
        let geo = self.solver.node_geometry(&self.blend, s)?;
        let mut v: Vec<f64> = theta.iter().map(|t| (1.0 - geo.xi * geo.xi).max(0.0).sqrt() * t).collect();
        v.push(geo.xi);
        Ok(v)
    }

    /// Harmonic extension of `h` into the ball of radius `ρ`, at one point.
    pub fn harmonic_extension(&self, r: f64, theta: &[f64]) -> f64 {
        self.solver
            .basis
            .modes
            .iter()
            .zip(&self.h)
            .map(|(m, c)| c * (r / self.rho).powi(m.degree as i32) * m.eval(theta))
            .sum()
    }

    /// Height of the upper end over `r θ` (graph inversion of `r = |horizontal part|`).
    pub fn height_at(&self, r: f64, theta: &[f64]) -> Result<f64> {
        let radial = |s: f64| -> f64 {
            let p = self.point(s, theta).expect("s within the neck");
            p[..p.len() - 1].iter().map(|x| x * x).sum::<f64>().sqrt() - r
        };
        let end = radial(self.s_eps);
        let s = if end.abs() <= 1e-13 * r.max(1.0) { self.s_eps } else { bisect(radial, 0.0, self.s_eps, 1e-13)? };
        Ok(*self.point(s, theta)?.last().unwrap())
    }

    /// Coefficients of `V_{ε,h} = εc∞ - W_h - z` at radius `r`.
    pub fn v_coefficients(&self, r: f64) -> Result<Vec<f64>> {
        if r < self.eps * 1.01 || r > self.rho * (1.0 + 1e-12) {
            return Err(Error::OutOfRange { value: r, min: self.eps, max: self.rho });
        }
        let c = self.eps * self.solver.profile.c_inf();
        let samples = self
            .solver
            .basis
            .nodes()
            .iter()
            .map(|t| Ok(c - self.harmonic_extension(r, t) - self.height_at(r, t)?))
            .collect::<Result<Vec<f64>>>()?;
        self.solver.basis.project(&samples)
    }

    /// `V_{ε,h}` and `ρ∂_r V_{ε,h}` at `r = ρ`, where `N_ε` is vertical and the
    /// end is an exact graph over `r = εφ(s)`.
    pub fn boundary_trace(&self) -> Result<BoundaryTrace> {
        let n = self.solver.n() as f64;
        let p = self.solver.profile.at(self.s_eps)?;
        let basis = self.solver.basis;
        let last = self.v.nodes() - 1;
        let step = self.v.step;
        let c = self.eps * self.solver.profile.c_inf();
        let scale = p.phi.powf((2.0 - n) / 2.0);
        let dscale = (2.0 - n) / 2.0 * p.phi.powf(-n / 2.0) * p.dphi;
        let mut value = Vec::with_capacity(basis.len());
        let mut radial = Vec::with_capacity(basis.len());
        let e0 = crate::numerics::sphere_volume(basis.n - 1).sqrt();
        for (j, mode) in basis.modes.iter().enumerate() {
            let vj = &self.v.coeffs[j];
            let w = self.tilde.value(j, self.s_eps) + vj[last];
            let dw = self.tilde.derivative(j, self.s_eps) + (3.0 * vj[last] - 4.0 * vj[last - 1] + vj[last - 2]) / (2.0 * step);
            // z = εψ - w φ^{(2-n)/2} on the end where ξ = -1
            let mut z = -w * scale;
            let mut dz = -(dw * scale + w * dscale);
            if j == 0 {
                z += self.eps * p.psi * e0;
                dz += self.eps * p.dpsi * e0;
            }
            let const_part = if j == 0 { c * e0 } else { 0.0 };
            value.push(const_part - self.h[j] - z);
            // ρ ∂_r = ρ (∂_s) / (ε φ')
            radial.push(-(mode.degree as f64) * self.h[j] - self.rho * dz / (self.eps * p.dphi));
        }
        Ok(BoundaryTrace { value, radial })
    }

    /// Flux of the vertical Killing field through the cycle `s = const`,
    /// `∫ ⟨η, e_{n+1}⟩` with `η` the unit conormal pointing to larger `s`.
    pub fn vertical_flux(&self, s: f64) -> Result<f64> {
        let basis = self.solver.basis;
        let k = basis.n - 1;
        let eta = 1e-5;
        let mut total = 0.0;
        for (theta, w) in basis.nodes().iter().zip(&basis.quadrature.weights) {
            let frame = tangent_frame(theta);
            let mut tangents = Vec::with_capacity(k);
            for i in 0..k {
                let mut t = vec![0.0; k];
                t[i] = eta;
                let p = self.point(s, &sphere_chart(theta, &frame, &t))?;
                t[i] = -eta;
                let q = self.point(s, &sphere_chart(theta, &frame, &t))?;
                tangents.push(p.iter().zip(&q).map(|(a, b)| (a - b) / (2.0 * eta)).collect::<Vec<f64>>());
            }
            let up = self.point(s + eta, theta)?;
            let down = self.point(s - eta, theta)?;
            let xs: Vec<f64> = up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * eta)).collect();
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let g = nalgebra::DMatrix::from_fn(k, k, |i, j| dot(&tangents[i], &tangents[j]));
            let jac = g.determinant().sqrt();
            let ginv = g.try_inverse().ok_or_else(|| Error::Geometry("degenerate cycle".into()))?;
            let mut conormal = xs.clone();
            for i in 0..k {
                for j in 0..k {
                    let c = ginv[(i, j)] * dot(&xs, &tangents[j]);
                    conormal.iter_mut().zip(&tangents[i]).for_each(|(a, b)| *a -= c * b);
                }
            }
            let len = dot(&conormal, &conormal).sqrt();
            total += w * jac * conormal.last().unwrap() / len;
        }
        Ok(total)
    }

    /// Mean curvature of the neck at `(s, θ)` by centred differences with
    /// parameter step `eta` in `s` and in a tangent chart of the sphere.
    pub fn mean_curvature(&self, s: f64, theta: &[f64], eta: f64) -> Result<f64> {
        let k = self.solver.basis.n - 1;
        let frame = tangent_frame(theta);
        let steps = vec![eta; k + 1];
        let reference = self.blend_normal(s, theta)?;
        let failure = std::cell::RefCell::new(None);
        let h = mean_curvature_stencil(
            |o| {
                let t: Vec<f64> = o[1..].iter().map(|v| *v as f64 * eta).collect();
                match self.point(s + o[0] as f64 * eta, &sphere_chart(theta, &frame, &t)) {
                    Ok(p) => p,
                    Err(e) => {
                        *failure.borrow_mut() = Some(e);
                        vec![0.0; k + 2]
                    }
                }
            },
            &steps,
            &reference,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        h
    }

    /// Largest `|g X(s, θ) - X(s, gθ)|` over the coordinate sign flips `g`
    /// of `ℝ^n` and `z ↦ -z` (paired with `s ↦ -s`), on a sample of points.
    pub fn symmetry_defect(&self) -> Result<f64> {
        let n = self.solver.basis.n;
        let mut worst = 0.0f64;
        for (q, theta) in self.solver.basis.nodes().iter().enumerate().step_by(7) {
            let s = self.s_eps * ((q % 5) as f64 + 0.5) / 5.0;
            let x = self.point(s, theta)?;
            for axis in 0..=n {
                let (y, mut gx) = if axis == n {
                    (self.point(-s, theta)?, x.clone())
                } else {
                    let mut t = theta.clone();
                    t[axis] = -t[axis];
                    (self.point(s, &t)?, x.clone())
                };
                gx[axis] = -gx[axis];
                worst = worst.max(y.iter().zip(&gx).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            }
        }
        Ok(worst)
    }

    /// Samples `V_{ε,h}` over `ρ/2 ≤ r ≤ ρ`.
    pub fn annulus_profile(&self) -> Result<AnnulusProfile> {
        let lo = (0.5 * self.rho).max(1.05 * self.eps);
        let radii: Vec<f64> = (0..=8).map(|k| lo + (self.rho - lo) * k as f64 / 8.0).collect();
        let values = radii.iter().map(|&r| self.v_coefficients(r)).collect::<Result<_>>()?;
        Ok(AnnulusProfile { radii, values, boundary: self.boundary_trace()? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::sphere_volume;

    fn profile(n: usize) -> CatenoidProfile {
        CatenoidProfile::solve(n, 8.0, 1e-8).unwrap()
    }

    #[test]
    fn jacobi_fields_are_annihilated() {
        for n in 3..6 {
            let p = profile(n);
            let delta = (n as f64 - 2.0) / 2.0;
            let residual = |ds: f64| {
                let count = (10.0 / ds).round() as usize;
                let mut worst = 0.0f64;
                for field in [jacobi_minus, jacobi_plus] {
                    let vals: Vec<f64> = (0..=count).map(|i| field(&p, -5.0 + i as f64 * ds).unwrap()).collect();
                    let out = apply_l_samples(&p, 0.0, -5.0, ds, &vals).unwrap();
                    for (i, r) in out.iter().enumerate() {
                        let phi = p.at(-5.0 + (i + 1) as f64 * ds).unwrap().phi;
                        worst = worst.max(r.abs() * phi.powf(-delta));
                    }
                }
                worst
            };
            let (r1, r2) = (residual(5e-4), residual(2.5e-4));
            if n == 3 {
                assert!(r2 < 1e-6, "n = {n}: {r2}");
            }
            assert!(((r1 / r2).log2() - 2.0).abs() < 0.3, "n = {n}: {r1} {r2}");
        }
    }

    #[test]
    fn largest_zero_is_simple() {
        let p = profile(3);
        let z = largest_jacobi_zero(&p);
        assert!(z.found && z.s0 > 0.0);
        let a = jacobi_plus(&p, z.s0 - 1e-3).unwrap();
        let b = jacobi_plus(&p, z.s0 + 1e-3).unwrap();
        assert!(a * b < 0.0);
        // dense independent scan past s0
        let mut s = z.s0 + 1e-3;
        while s < 8.0 {
            assert!(jacobi_plus(&p, s).unwrap() < 0.0);
            s += 1e-3;
        }
    }

    fn field(n: usize, len: f64, step: f64, modes: usize) -> NeckField {
        let basis = InvariantSphereBasis::build(n, 2.min(n - 1), 6).unwrap();
        NeckField::zeros(n, basis.eigenvalues()[..modes].to_vec(), len, step)
    }

    #[test]
    fn green_recovers_manufactured_solution() {
        let p = profile(3);
        let base = field(3, 6.0, 1e-2, 4);
        let len = base.length();
        let exact = base.from_fn(|j, s| (1.0 + j as f64) * (len * len - s * s) * (-0.3 * s).exp());
        let f = exact.apply_l(&p).unwrap();
        let w = green_solve(&p, &f).unwrap();
        let err = w.sub(&exact).coeffs.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-9, "{err}");
        let zero = green_solve(&p, &base).unwrap();
        assert!(zero.coeffs.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn green_rejects_short_domains() {
        let p = profile(3);
        let z = largest_jacobi_zero(&p);
        let f = field(3, 0.9 * z.s0, 1e-2, 2);
        assert!(matches!(green_solve(&p, &f), Err(Error::InjectivityDomain { .. })));
    }

    #[test]
    fn green_norm_ratio_is_uniform_in_length() {
        let p = profile(3);
        let ratios: Vec<f64> = [4.0, 6.0, 8.0 - 1e-9]
            .iter()
            .map(|&len| {
                let f = field(3, len, 1e-2, 4).from_fn(|j, s| (-(s - 1.0).powi(2)).exp() / (1.0 + j as f64));
                green_solve(&p, &f).unwrap().weighted_norm(&p, 0.0) / f.weighted_norm(&p, 0.0)
            })
            .collect();
        let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), r| (a.min(*r), b.max(*r)));
        assert!(hi / lo < 2.0, "{ratios:?}");
    }

    #[test]
    fn poisson_decay_rates() {
        let basis = InvariantSphereBasis::build(3, 2, 6).unwrap();
        let g = vec![1.0; basis.len()];
        let w = poisson_extend(3, &g, &basis.eigenvalues(), 8.0, 1e-2);
        assert!(w.coeffs.iter().all(|c| c[0] == 1.0));
        for (j, c) in w.coeffs.iter().enumerate() {
            let (i2, i6) = ((2.0 / w.step).round() as usize, (6.0 / w.step).round() as usize);
            let rate = (c[i6].ln() - c[i2].ln()) / (i6 - i2) as f64 / w.step;
            let gamma = basis.modes[j].indicial_root();
            assert!((rate + gamma).abs() < 1e-2 * gamma);
        }
        assert!((basis.modes[0].indicial_root() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tilde_w_matches_formula_and_vanishes_for_zero_data() {
        let p = profile(3);
        let basis = InvariantSphereBasis::build(3, 2, 4).unwrap();
        let eig = basis.eigenvalues();
        let mut h = vec![0.0; basis.len()];
        let t = TildeW::new(&p, &eig, &h, 2.0).unwrap();
        assert!((0..basis.len()).all(|j| t.value(j, 0.7) == 0.0));
        h[2] = 1e-3;
        let t = TildeW::new(&p, &eig, &h, 2.0).unwrap();
        let g = p.at(2.0).unwrap().phi.sqrt() * 1e-3;
        let gamma = indicial_root(3, eig[2]);
        let expected = g * ((-gamma * (2.0 - 0.7)).exp() + (-gamma * 2.7).exp());
        assert!((t.value(2, 0.7) - expected).abs() < 1e-15);
    }

    #[test]
    fn blend_is_odd_and_matches_normal_inside() {
        let p = profile(3);
        let b = NormalBlend::new(2.5);
        for s in [0.3, 1.0, 2.2, 2.45] {
            let q = p.at(s).unwrap();
            assert_eq!(b.xi(s, q.phi, q.dphi), -b.xi(-s, q.phi, q.dphi));
        }
        let q = p.at(0.4).unwrap();
        assert_eq!(b.xi(0.4, q.phi, q.dphi), -q.dphi / q.phi);
        let q = p.at(2.4).unwrap();
        assert_eq!(b.xi(2.4, q.phi, q.dphi), -1.0);
    }

    #[test]
    fn zero_data_gives_rescaled_catenoid() {
        let p = profile(3);
        let basis = InvariantSphereBasis::build(3, 2, 4).unwrap();
        let solver = NeckSolver::new(&p, &basis, NeckParams::default()).unwrap();
        let eps = 0.05;
        let rho = 0.443;
        let sol = solver.solve(&vec![0.0; basis.len()], eps, rho).unwrap();
        assert!(sol.v.coeffs.iter().flatten().all(|v| *v == 0.0));
        let e0 = 1.0 / sphere_volume(2).sqrt();
        for r in [0.25, 0.35, rho] {
            let v = sol.v_coefficients(r).unwrap()[0] * e0;
            let lead = eps * eps / r;
            assert!((v / lead - 1.0).abs() < 0.05, "r = {r}: {v} vs {lead}");
        }
    }

    #[test]
    fn perturbed_neck_converges_and_is_lipschitz() {
        let p = profile(3);
        let basis = InvariantSphereBasis::build(3, 2, 4).unwrap();
        let solver = NeckSolver::new(&p, &basis, NeckParams::default()).unwrap();
        let rho = 0.443;
        let mut h1 = vec![0.0; basis.len()];
        let mut h2 = h1.clone();
        h1[1] = 0.2;
        h2[1] = 0.2;
        h2[3] = -0.1;
        let ratio = |eps: f64| {
            let scale = eps * eps;
            let a: Vec<f64> = h1.iter().map(|v| v * scale).collect();
            let b: Vec<f64> = h2.iter().map(|v| v * scale).collect();
            solver.lipschitz_probe(&a, &b, eps, rho).unwrap()
        };
        let (big, small) = (ratio(0.1), ratio(0.05));
        assert!(small < 1.0 && big < 1.0);
        assert!(big / small >= 1.5, "{big} {small}");
        assert_eq!(solver.lipschitz_probe(&h1, &h1, 0.1, rho).unwrap(), 0.0);
        let sol = solver.solve(&h2.iter().map(|v| v * 0.01).collect::<Vec<_>>(), 0.1, rho).unwrap();
        let hist = &sol.report.history;
        assert!(hist.windows(2).skip(1).all(|w| w[1] <= 0.5 * w[0] + 1e-12), "{hist:?}");
    }

    #[test]
    fn oversized_data_is_rejected() {
        let p = profile(3);
        let basis = InvariantSphereBasis::build(3, 2, 2).unwrap();
        let solver = NeckSolver::new(&p, &basis, NeckParams::default()).unwrap();
        let h = vec![1.0; basis.len()];
        assert!(matches!(solver.solve(&h, 0.1, 0.443), Err(Error::InputSize { .. })));
    }

    #[test]
    fn delta_range_follows_dimension() {
        assert!(check_delta(3, 0.0).is_ok());
        assert!(check_delta(3, 0.5).is_err());
        assert!(check_delta(4, -0.9).is_ok());
    }

    #[test]
    fn catenoid_flux_and_perturbed_conservation() {
        let p = profile(3);
        let basis = InvariantSphereBasis::build(3, 2, 4).unwrap();
        let solver = NeckSolver::new(&p, &basis, NeckParams::default()).unwrap();
        let (eps, rho) = (0.08, 0.443);
        let flat = solver.solve(&vec![0.0; basis.len()], eps, rho).unwrap();
        let expected = eps * eps * sphere_volume(2);
        assert!((flat.vertical_flux(0.0).unwrap() / expected - 1.0).abs() < 1e-6);
        let mut h = vec![0.0; basis.len()];
        h[0] = 0.5 * eps * eps;
        h[1] = 0.2 * eps * eps;
        let sol = solver.solve(&h, eps, rho).unwrap();
        let f0 = sol.vertical_flux(0.0).unwrap();
        let f1 = sol.vertical_flux(0.5 * sol.s_eps).unwrap();
        assert!(((f1 - f0) / f0).abs() < 1e-3, "{f0} {f1}");
        assert!(sol.symmetry_defect().unwrap() < 1e-12);
        // the converged neck is minimal up to discretisation error
        let theta = &basis.nodes()[5];
        let h_mid = sol.mean_curvature(0.3, theta, 1e-3).unwrap();
        assert!(h_mid.abs() * eps < 1e-3, "{h_mid}");
    }
}
