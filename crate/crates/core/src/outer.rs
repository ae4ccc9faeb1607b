//! Exterior problem on `(ℝ^{n-m} × T^m) \ B_ρ` for graphs invariant under
//! the sign reflections.
//!
//! Invariance reduces the domain to `r₁ = |x₁| ∈ [0, R₁]` times the positive
//! half-cell of a rectangular torus. The Laplacian becomes
//! `∂²_{r₁} + (k-1)/r₁ ∂_{r₁} + Δ_{x₂}` with `k = n - m`, the symmetry planes
//! carry even reflections, the sphere is cut sharply with Shortley–Weller
//! stencils and the far face gets a condition chosen by the dimension of the
//! deficiency space: a Robin condition when `m ≤ n-3`, otherwise a closure of
//! the `x₂`-averaged mode that admits the `|x₁|` or `log |x₁|` tail but not a
//! constant.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{gauss_legendre, solve_tridiagonal};
use crate::sphere::InvariantSphereBasis;
use crate::torus::Lattice;

/// Condition imposed on the face `r₁ = R₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum FarEnd {
    /// `∂_{r₁}u = (ν/r₁) u`, for `m ≤ n-3`.
    Robin { nu: f64 },
    /// Mean mode `ū = a r₁`, for `m = n-1`.
    Linear,
    /// Mean mode `ū = a log r₁`, for `m = n-2`.
    Logarithmic,
}

impl FarEnd {
    pub fn for_dimensions(n: usize, m: usize, nu: f64) -> Self {
        if m + 1 == n {
            FarEnd::Linear
        } else if m + 2 == n {
            FarEnd::Logarithmic
        } else {
            FarEnd::Robin { nu }
        }
    }
}

/// Admissible weight interval for `ν`.
pub fn nu_range(n: usize, m: usize) -> (f64, f64) {
    if m + 1 == n {
        (f64::NEG_INFINITY, 0.0)
    } else if m + 2 == n {
        (-2.0, 0.0)
    } else {
        (2.0 + m as f64 - n as f64, 0.0)
    }
}

/// Growth of the deficiency element `ζ_m`: `r₁`, `log r₁` or nothing.
pub fn zeta(n: usize, m: usize, r1: f64) -> f64 {
    if m + 1 == n {
        r1
    } else if m + 2 == n {
        r1.ln()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OuterParams {
    pub rho: f64,
    /// Length `R₁` of the truncated `r₁` range.
    pub r_max: f64,
    /// Target grid spacing; each axis is rounded to fit its length.
    pub step: f64,
    pub nu: f64,
    /// Relative residual for the linear solves.
    pub tol: f64,
    pub max_linear_iter: usize,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub kappa: f64,
}

impl OuterParams {
    /// Defaults: `ρ` a quarter of the smallest half-period, spacing `ρ/8`,
    /// `R₁ = 8ρ` when `m = n-1` and `40ρ` otherwise, `ν` mid-range.
    pub fn defaults(lattice: &Lattice, n: usize) -> Result<Self> {
        let sides = lattice.sides().ok_or_else(|| Error::Symmetry("outer grid needs a rectangular lattice".into()))?;
        let m = lattice.dim();
        let min_side = sides.iter().cloned().fold(f64::INFINITY, f64::min);
        let rho = min_side / 8.0;
        let r_max = if m + 1 == n { 8.0 * rho } else { 40.0 * rho };
        let (lo, hi) = nu_range(n, m);
        let nu = if lo.is_finite() { 0.5 * (lo + hi) } else { -1.0 };
        Ok(Self {
            rho,
            r_max,
            step: rho / 8.0,
            nu,
            tol: 1e-11,
            max_linear_iter: 20_000,
            picard_tol: 1e-14,
            picard_max: 40,
            kappa: 20.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeKind {
    Inside,
    Unknown,
    Far,
}

/// Compressed sparse rows.
#[derive(Debug, Clone)]
struct Csr {
    ptr: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    fn mul(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.ptr[r]..self.ptr[r + 1] {
                acc += self.val[k] * x[self.col[k]];
            }
            *out = acc;
        }
    }
}

#[derive(Debug, Clone)]
struct SphereLink {
    row: usize,
    coeff: f64,
    /// Basis values at the point where the stencil arm meets the sphere.
    modes: Vec<f64>,
}

enum Arm {
    Node(usize, f64),
    Sphere(f64, Vec<f64>),
    Far(f64),
}

/// Reduced grid with the assembled discrete Laplacian.
#[derive(Debug, Clone)]
pub struct OuterGrid {
    pub n: usize,
    pub m: usize,
    pub rho: f64,
    pub r_max: f64,
    /// Full periods `a_l` of the rectangular lattice.
    pub sides: Vec<f64>,
    pub steps: Vec<f64>,
    /// Nodes per axis, endpoints included.
    pub counts: Vec<usize>,
    pub far: FarEnd,
    strides: Vec<usize>,
    kind: Vec<NodeKind>,
    unknown_of: Vec<usize>,
    node_of: Vec<usize>,
    matrix: Csr,
    diag: Vec<f64>,
    sphere_links: Vec<SphereLink>,
    far_links: Vec<(usize, f64)>,
    multigrid: Option<Box<Multigrid>>,
}

fn sphere_point(n: usize, m: usize, x: &[f64]) -> Vec<f64> {
    let k = n - m;
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut p = vec![0.0; n];
    p[0] = x[0] / norm;
    for l in 0..m {
        p[k + l] = x[1 + l] / norm;
    }
    p
}

impl OuterGrid {
    pub fn new(basis: &InvariantSphereBasis, sides: &[f64], params: &OuterParams) -> Result<Self> {
        let (n, m) = (basis.n, basis.m);
        if sides.len() != m {
            return Err(Error::InvalidDimensions(format!("lattice has {} sides, basis expects m = {m}", sides.len())));
        }
        let rho = params.rho;
        let min_half = sides.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0;
        if !(rho > 0.0 && rho < min_half) {
            return Err(Error::InvalidParameter(format!("need 0 < rho < {min_half}, got {rho}")));
        }
        if params.r_max <= 2.0 * rho || params.step <= 0.0 || params.step > rho / 2.0 {
            return Err(Error::InvalidParameter("need r_max > 2 rho and 0 < step <= rho/2".into()));
        }
        let far = FarEnd::for_dimensions(n, m, params.nu);
        if far == FarEnd::Logarithmic && params.r_max <= 1.0 {
            return Err(Error::InvalidParameter("log tail needs r_max > 1".into()));
        }
        let lengths: Vec<f64> = std::iter::once(params.r_max).chain(sides.iter().map(|a| a / 2.0)).collect();
        let counts: Vec<usize> = lengths.iter().map(|l| (l / params.step).round().max(2.0) as usize + 1).collect();
        let mut grid = Self::build(basis, sides, params, counts)?;
        grid.multigrid = Multigrid::new(basis, &grid, params)?.map(Box::new);
        Ok(grid)
    }

    fn build(basis: &InvariantSphereBasis, sides: &[f64], params: &OuterParams, counts: Vec<usize>) -> Result<Self> {
        let (n, m) = (basis.n, basis.m);
        let rho = params.rho;
        let far = FarEnd::for_dimensions(n, m, params.nu);
        let lengths: Vec<f64> = std::iter::once(params.r_max).chain(sides.iter().map(|a| a / 2.0)).collect();
        let steps: Vec<f64> = lengths.iter().zip(&counts).map(|(l, c)| l / (*c as f64 - 1.0)).collect();
        let mut strides = vec![1usize; m + 1];
        for d in (0..m).rev() {
            strides[d] = strides[d + 1] * counts[d + 1];
        }
        let total = strides[0] * counts[0];
        let tiny = 1e-6 * steps.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut grid = Self {
            n,
            m,
            rho,
            r_max: params.r_max,
            sides: sides.to_vec(),
            steps,
            counts,
            far,
            strides,
            kind: Vec::with_capacity(total),
            unknown_of: vec![usize::MAX; total],
            node_of: Vec::new(),
            matrix: Csr { ptr: vec![0], col: Vec::new(), val: Vec::new() },
            diag: Vec::new(),
            sphere_links: Vec::new(),
            far_links: Vec::new(),
            multigrid: None,
        };
        for p in 0..total {
            let idx = grid.index(p);
            let x = grid.coords(&idx);
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let kind = if r < rho + tiny {
                NodeKind::Inside
            } else if idx[0] + 1 == grid.counts[0] && far != (FarEnd::Robin { nu: params.nu }) {
                NodeKind::Far
            } else {
                NodeKind::Unknown
            };
            if kind == NodeKind::Unknown {
                grid.unknown_of[p] = grid.node_of.len();
                grid.node_of.push(p);
            }
            grid.kind.push(kind);
        }
        grid.assemble(basis);
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.m + 1
    }

    pub fn len(&self) -> usize {
        self.kind.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kind.is_empty()
    }

    pub fn unknowns(&self) -> usize {
        self.node_of.len()
    }

    pub fn index(&self, p: usize) -> Vec<usize> {
        let mut rest = p;
        self.strides
            .iter()
            .map(|s| {
                let i = rest / s;
                rest %= s;
                i
            })
            .collect()
    }

    pub fn node(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coords(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().zip(&self.steps).map(|(i, h)| *i as f64 * h).collect()
    }

    /// Whether node `p` carries a value (outside the ball).
    pub fn is_exterior(&self, p: usize) -> bool {
        self.kind[p] != NodeKind::Inside
    }

    /// Maps a signed index along axis `d` back into the grid by the even
    /// reflections; `None` past the far face.
    fn reflect(&self, d: usize, j: i64) -> Option<usize> {
        let last = self.counts[d] as i64 - 1;
        let mut j = j.abs();
        if d == 0 {
            return (j <= last).then_some(j as usize);
        }
        let period = 2 * last;
        j %= period;
        if j > last {
            j = period - j;
        }
        Some(j as usize)
    }

    fn arm(&self, basis: &InvariantSphereBasis, idx: &[usize], d: usize, sigma: i64) -> Arm {
        let h = self.steps[d];
        let j = idx[d] as i64 + sigma;
        let mapped = self.reflect(d, j).expect("arms stay inside the reduced box");
        let mut nidx = idx.to_vec();
        nidx[d] = mapped;
        let q = self.node(&nidx);
        match self.kind[q] {
            NodeKind::Unknown => Arm::Node(q, h),
            NodeKind::Far => Arm::Far(h),
            NodeKind::Inside => {
                let x = self.coords(idx);
                let rest: f64 = x.iter().enumerate().filter(|(e, _)| *e != d).map(|(_, v)| v * v).sum();
                let disc = (self.rho * self.rho - rest).max(0.0).sqrt();
                let s = sigma as f64;
                let t = [s * (disc - x[d]), s * (-disc - x[d])]
                    .into_iter()
                    .filter(|t| *t > 0.0)
                    .fold(f64::INFINITY, f64::min)
                    .min(h);
                let mut y = x.clone();
                y[d] += s * t;
                let theta = sphere_point(self.n, self.m, &y);
                Arm::Sphere(t, basis.modes.iter().map(|mode| mode.eval(&theta)).collect())
            }
        }
    }

    fn assemble(&mut self, basis: &InvariantSphereBasis) {
        let k = (self.n - self.m) as f64;
        let mut ptr = vec![0usize];
        let mut col = Vec::new();
        let mut val = Vec::new();
        let mut diag = Vec::with_capacity(self.node_of.len());
        let mut sphere_links = Vec::new();
        let mut far_links = Vec::new();
        for (row, &p) in self.node_of.iter().enumerate() {
            let idx = self.index(p);
            let x = self.coords(&idx);
            let mut entries: Vec<(usize, f64)> = Vec::new();
            let mut center = 0.0;
            let mut push = |arm: &Arm, w: f64, entries: &mut Vec<(usize, f64)>| match arm {
                Arm::Node(q, _) => entries.push((self.unknown_of[*q], w)),
                Arm::Far(_) => far_links.push((row, w)),
                Arm::Sphere(_, modes) => sphere_links.push(SphereLink { row, coeff: w, modes: modes.clone() }),
            };
            for d in 0..=self.m {
                let h = self.steps[d];
                let last = self.counts[d] - 1;
                if d == 0 && idx[0] == last {
                    // Robin face: ghost u_{N+1} = u_{N-1} + 2h(ν/R)u_N
                    let FarEnd::Robin { nu } = self.far else { unreachable!("far nodes are not unknowns") };
                    let minus = self.arm(basis, &idx, 0, -1);
                    push(&minus, 2.0 / (h * h), &mut entries);
                    center += (2.0 * h * nu / self.r_max - 2.0) / (h * h) + (k - 1.0) * nu / (self.r_max * self.r_max);
                    continue;
                }
                let minus = self.arm(basis, &idx, d, -1);
                let plus = self.arm(basis, &idx, d, 1);
                let dist = |a: &Arm| match a {
                    Arm::Node(_, t) | Arm::Far(t) | Arm::Sphere(t, _) => *t,
                };
                let (hm, hp) = (dist(&minus), dist(&plus));
                let scale = if d == 0 && idx[0] == 0 { k } else { 1.0 };
                let wm = scale * 2.0 / (hm * (hm + hp));
                let wp = scale * 2.0 / (hp * (hm + hp));
                let mut wc = -scale * 2.0 / (hm * hp);
                let (mut fm, mut fp) = (0.0, 0.0);
                if d == 0 && idx[0] > 0 && k > 1.0 {
                    let c = (k - 1.0) / x[0];
                    fm = -c * hp / (hm * (hm + hp));
                    fp = c * hm / (hp * (hm + hp));
                    wc += c * (hp - hm) / (hm * hp);
                }
                push(&minus, wm + fm, &mut entries);
                push(&plus, wp + fp, &mut entries);
                center += wc;
            }
            entries.push((row, center));
            entries.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
            for (c, v) in entries {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += v,
                    _ => merged.push((c, v)),
                }
            }
            let dval = merged.iter().find(|e| e.0 == row).map(|e| e.1).unwrap_or(0.0);
            diag.push(dval);
            for (c, v) in merged {
                col.push(c);
                val.push(v);
            }
            ptr.push(col.len());
        }
        self.matrix = Csr { ptr, col, val };
        self.diag = diag;
        self.sphere_links = sphere_links;
        self.far_links = far_links;
    }

    /// Solves `L_h u = f` on the unknowns for sphere data `data` (mode
    /// coefficients) and far-face value `far_value`; returns node values with
    /// `NaN` inside the ball.
    pub fn solve(&self, source: &[f64], data: &[f64], far_value: f64, params: &OuterParams) -> Result<Vec<f64>> {
        if source.len() != self.unknowns() {
            return Err(Error::NodeCountMismatch { expected: self.unknowns(), got: source.len() });
        }
        let mut rhs = source.to_vec();
        for link in &self.sphere_links {
            let value: f64 = link.modes.iter().zip(data).map(|(e, c)| e * c).sum();
            rhs[link.row] -= link.coeff * value;
        }
        for (row, w) in &self.far_links {
            rhs[*row] -= w * far_value;
        }
        let x = match &self.multigrid {
            Some(mg) => bicgstab(&self.matrix, |r| mg.vcycle(0, r), &rhs, params.tol, params.max_linear_iter)?,
            None => {
                let inv: Vec<f64> = self.diag.iter().map(|d| 1.0 / d).collect();
                bicgstab(&self.matrix, |r| r.iter().zip(&inv).map(|(a, b)| a * b).collect(), &rhs, params.tol, params.max_linear_iter)?
            }
        };
        let mut out = vec![f64::NAN; self.len()];
        for (p, kind) in self.kind.iter().enumerate() {
            match kind {
                NodeKind::Unknown => out[p] = x[self.unknown_of[p]],
                NodeKind::Far => out[p] = far_value,
                NodeKind::Inside => {}
            }
        }
        Ok(out)
    }

    /// Applies the discrete operator to node values, at the unknowns.
    pub fn apply(&self, values: &[f64], data: &[f64], far_value: f64) -> Vec<f64> {
        let x: Vec<f64> = self.node_of.iter().map(|p| values[*p]).collect();
        let mut y = vec![0.0; x.len()];
        self.matrix.mul(&x, &mut y);
        for link in &self.sphere_links {
            let value: f64 = link.modes.iter().zip(data).map(|(e, c)| e * c).sum();
            y[link.row] += link.coeff * value;
        }
        for (row, w) in &self.far_links {
            y[*row] += w * far_value;
        }
        y
    }

    /// Node values gathered at the unknowns.
    pub fn restrict(&self, values: &[f64]) -> Vec<f64> {
        self.node_of.iter().map(|p| values[*p]).collect()
    }

    /// `x₂`-averages of node values for every `r₁` slice that misses the
    /// ball (`NaN` otherwise), by the trapezoidal rule on the half-cell.
    pub fn mean_profile(&self, values: &[f64]) -> Vec<f64> {
        let inner = self.strides[0];
        (0..self.counts[0])
            .map(|i| {
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for off in 0..inner {
                    let p = i * inner + off;
                    let idx = self.index(p);
                    let w: f64 = (1..=self.m).map(|d| if idx[d] == 0 || idx[d] + 1 == self.counts[d] { 0.5 } else { 1.0 }).product();
                    acc += w * values[p];
                    wsum += w;
                }
                acc / wsum
            })
            .collect()
    }

    fn radial_nodes(&self) -> Vec<f64> {
        (0..self.counts[0]).map(|i| i as f64 * self.steps[0]).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Right-preconditioned BiCGSTAB.
fn bicgstab<P: Fn(&[f64]) -> Vec<f64>>(a: &Csr, precond: P, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    for _ in 0..max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(Error::Singular("BiCGSTAB breakdown".into()));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let y = precond(&p);
        a.mul(&y, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if dot(&s, &s).sqrt() <= tol * bnorm {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(x);
        }
        let z = precond(&s);
        a.mul(&z, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        let rn = dot(&r, &r).sqrt();
        if !rn.is_finite() {
            return Err(Error::Divergence("non-finite residual in linear solve".into()));
        }
        if rn <= tol * bnorm {
            return Ok(x);
        }
    }
    Err(Error::Convergence(format!("linear solve did not reach {tol:.1e} in {max_iter} iterations")))
}

/// Geometric V-cycle over re-discretised coarser grids, used as the
/// preconditioner of the fine solve. Level 0 is the fine grid.
#[derive(Debug, Clone)]
struct Multigrid {
    matrices: Vec<(Csr, Vec<f64>)>,
    /// `prolong[l][f]`: coarse unknowns of level `l+1` feeding unknown `f` of level `l`.
    prolong: Vec<Vec<Vec<(usize, f64)>>>,
    coarse: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    dim: usize,
}

impl Multigrid {
    const MAX_COARSE: usize = 3000;

    fn new(basis: &InvariantSphereBasis, fine: &OuterGrid, params: &OuterParams) -> Result<Option<Self>> {
        let mut grids: Vec<OuterGrid> = Vec::new();
        let mut prolong = Vec::new();
        let mut counts = fine.counts.clone();
        let mut step = fine.steps.iter().cloned().fold(0.0, f64::max);
        loop {
            let current = grids.last().unwrap_or(fine);
            if current.unknowns() <= Self::MAX_COARSE {
                break;
            }
            if counts.iter().any(|c| (c - 1) % 2 != 0 || c - 1 < 4) || 2.0 * step > params.rho / 2.0 {
                break;
            }
            counts = counts.iter().map(|c| (c - 1) / 2 + 1).collect();
            step *= 2.0;
            let coarse = OuterGrid::build(basis, &fine.sides, params, counts.clone())?;
            prolong.push(Self::prolongation(current, &coarse));
            grids.push(coarse);
        }
        let Some(last) = grids.last() else { return Ok(None) };
        if last.unknowns() > 4 * Self::MAX_COARSE {
            return Ok(None);
        }
        let nc = last.unknowns();
        let mut dense = DMatrix::<f64>::zeros(nc, nc);
        for r in 0..nc {
            for k in last.matrix.ptr[r]..last.matrix.ptr[r + 1] {
                dense[(r, last.matrix.col[k])] += last.matrix.val[k];
            }
        }
        let coarse = dense.lu();
        let matrices = std::iter::once((fine.matrix.clone(), fine.diag.clone()))
            .chain(grids.iter().map(|g| (g.matrix.clone(), g.diag.clone())))
            .collect();
        Ok(Some(Self { matrices, prolong, coarse, dim: fine.dim() }))
    }

    fn prolongation(fine: &OuterGrid, coarse: &OuterGrid) -> Vec<Vec<(usize, f64)>> {
        fine.node_of
            .iter()
            .map(|&p| {
                let idx = fine.index(p);
                let mut entries: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 1.0)];
                for i in &idx {
                    let choices: Vec<(usize, f64)> =
                        if i % 2 == 0 { vec![(i / 2, 1.0)] } else { vec![(i / 2, 0.5), (i / 2 + 1, 0.5)] };
                    entries = entries
                        .iter()
                        .flat_map(|(pre, w)| {
                            choices.iter().map(move |(c, cw)| {
                                let mut v = pre.clone();
                                v.push(*c);
                                (v, w * cw)
                            })
                        })
                        .collect();
                }
                entries
                    .into_iter()
                    .filter_map(|(cidx, w)| {
                        let q = coarse.node(&cidx);
                        (coarse.kind[q] == NodeKind::Unknown).then(|| (coarse.unknown_of[q], w))
                    })
                    .collect()
            })
            .collect()
    }

    fn smooth(&self, level: usize, b: &[f64], x: &mut [f64], forward: bool) {
        let (a, diag) = &self.matrices[level];
        let n = b.len();
        let mut sweep = |r: usize| {
            let mut acc = b[r];
            for k in a.ptr[r]..a.ptr[r + 1] {
                let c = a.col[k];
                if c != r {
                    acc -= a.val[k] * x[c];
                }
            }
            x[r] = acc / diag[r];
        };
        if forward {
            (0..n).for_each(&mut sweep);
        } else {
            (0..n).rev().for_each(&mut sweep);
        }
    }

    fn vcycle(&self, level: usize, b: &[f64]) -> Vec<f64> {
        if level + 1 == self.matrices.len() {
            let rhs = DVector::from_column_slice(b);
            return self.coarse.solve(&rhs).map(|v| v.as_slice().to_vec()).unwrap_or_else(|| b.to_vec());
        }
        let mut x = vec![0.0; b.len()];
        for _ in 0..2 {
            self.smooth(level, b, &mut x, true);
        }
        let (a, _) = &self.matrices[level];
        let mut ax = vec![0.0; b.len()];
        a.mul(&x, &mut ax);
        let nc = self.matrices[level + 1].1.len();
        let mut rc = vec![0.0; nc];
        let scale = 0.5f64.powi(self.dim as i32);
        for (f, entries) in self.prolong[level].iter().enumerate() {
            let r = b[f] - ax[f];
            for (c, w) in entries {
                rc[*c] += scale * w * r;
            }
        }
        let ec = self.vcycle(level + 1, &rc);
        for (f, entries) in self.prolong[level].iter().enumerate() {
            for (c, w) in entries {
                x[f] += w * ec[*c];
            }
        }
        for _ in 0..2 {
            self.smooth(level, b, &mut x, false);
        }
        x
    }
}

/// A grid function on the exterior domain together with its sphere data.
#[derive(Debug, Clone)]
pub struct OuterField {
    pub values: Vec<f64>,
    /// Dirichlet data on `∂B_ρ` as mode coefficients.
    pub data: Vec<f64>,
    pub far_value: f64,
}

impl OuterField {
    fn combine(&self, a: f64, other: &OuterField, b: f64) -> OuterField {
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect::<Vec<f64>>();
        OuterField {
            values: mix(&self.values, &other.values),
            data: mix(&self.data, &other.data),
            far_value: a * self.far_value + b * other.far_value,
        }
    }

    /// Largest absolute value at exterior nodes.
    pub fn sup(&self) -> f64 {
        self.values.iter().filter(|v| v.is_finite()).fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Value, gradient and Hessian at a point from a local weighted least-squares cubic.
#[derive(Debug, Clone)]
pub struct LocalFit {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
}

/// Windowed fit of the averaged tail `ū ≈ a ζ_m(r₁) + b`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TailFit {
    pub a: f64,
    pub b: f64,
    pub a_windows: [f64; 2],
    pub b_windows: [f64; 2],
}

/// Exterior solver with the precomputed harmonic extensions of the basis
/// modes and the discrete Dirichlet-to-Neumann matrix.
#[derive(Debug, Clone)]
pub struct OuterSolver<'a> {
    pub basis: &'a InvariantSphereBasis,
    pub grid: OuterGrid,
    pub params: OuterParams,
    unit_far: Option<OuterField>,
    harmonic: Vec<OuterField>,
    dtn: DMatrix<f64>,
}

impl<'a> OuterSolver<'a> {
    pub fn new(basis: &'a InvariantSphereBasis, lattice: &Lattice, params: OuterParams) -> Result<Self> {
        if lattice.dim() != basis.m {
            return Err(Error::InvalidDimensions("lattice dimension differs from m".into()));
        }
        let sides = lattice.sides().ok_or_else(|| Error::Symmetry("outer grid needs a rectangular lattice".into()))?;
        let (lo, hi) = nu_range(basis.n, basis.m);
        if !(params.nu > lo && params.nu < hi) {
            return Err(Error::InvalidParameter(format!("nu = {} outside ({lo}, {hi})", params.nu)));
        }
        let grid = OuterGrid::new(basis, &sides, &params)?;
        let mut solver =
            Self { basis, grid, params, unit_far: None, harmonic: Vec::new(), dtn: DMatrix::zeros(basis.len(), basis.len()) };
        if solver.grid.far != (FarEnd::Robin { nu: solver.params.nu }) {
            let zeros = vec![0.0; solver.grid.unknowns()];
            let data = vec![0.0; basis.len()];
            let values = solver.grid.solve(&zeros, &data, 1.0, &solver.params)?;
            solver.unit_far = Some(OuterField { values, data, far_value: 1.0 });
        }
        let harmonic: Vec<Result<OuterField>> = (0..basis.len())
            .into_par_iter()
            .map(|j| {
                let mut data = vec![0.0; basis.len()];
                data[j] = 1.0;
                solver.solve_exterior(&vec![0.0; solver.grid.unknowns()], &data)
            })
            .collect();
        solver.harmonic = harmonic.into_iter().collect::<Result<_>>()?;
        for j in 0..basis.len() {
            let col = solver.radial_trace(&solver.harmonic[j])?;
            for (k, v) in col.into_iter().enumerate() {
                solver.dtn[(k, j)] = v;
            }
        }
        Ok(solver)
    }

    pub fn n(&self) -> usize {
        self.basis.n
    }

    pub fn m(&self) -> usize {
        self.basis.m
    }

    /// Discrete Dirichlet-to-Neumann matrix `B[k][j] = ⟨ρ∂_r Ŵ_{e_j}, e_k⟩`.
    pub fn dtn(&self) -> &DMatrix<f64> {
        &self.dtn
    }

    /// Solves `Δu = f` with `u = data` on the sphere and the far condition.
    pub fn solve_exterior(&self, source: &[f64], data: &[f64]) -> Result<OuterField> {
        if data.len() != self.basis.len() {
            return Err(Error::NodeCountMismatch { expected: self.basis.len(), got: data.len() });
        }
        let values = self.grid.solve(source, data, 0.0, &self.params)?;
        let base = OuterField { values, data: data.to_vec(), far_value: 0.0 };
        let Some(unit) = &self.unit_far else { return Ok(base) };
        let kappa = match self.grid.far {
            FarEnd::Linear => self.grid.r_max,
            FarEnd::Logarithmic => self.grid.r_max * self.grid.r_max.ln(),
            FarEnd::Robin { .. } => unreachable!(),
        };
        let slope = |f: &OuterField| {
            let mean = self.grid.mean_profile(&f.values);
            let h = self.grid.steps[0];
            let k = mean.len() - 1;
            (3.0 * mean[k] - 4.0 * mean[k - 1] + mean[k - 2]) / (2.0 * h)
        };
        let (s0, s1) = (slope(&base), slope(unit));
        let denom = 1.0 - kappa * s1;
        if denom.abs() < 1e-12 {
            return Err(Error::Singular("far-face closure is degenerate".into()));
        }
        let far = kappa * s0 / denom;
        Ok(base.combine(1.0, unit, far))
    }

    /// Harmonic extension `Ŵ_g` of sphere data `g` (mode coefficients).
    pub fn harmonic_extension(&self, g: &[f64]) -> Result<OuterField> {
        if g.len() != self.basis.len() {
            return Err(Error::NodeCountMismatch { expected: self.basis.len(), got: g.len() });
        }
        let mut out = OuterField {
            values: vec![0.0; self.grid.len()],
            data: vec![0.0; g.len()],
            far_value: 0.0,
        };
        for (c, w) in g.iter().zip(&self.harmonic) {
            out = out.combine(1.0, w, *c);
        }
        Ok(out)
    }

    /// Weighted cubic least-squares fit of a field around `x` (reduced coordinates),
    /// using exterior nodes and sphere data at the radial projections of
    /// nearby interior nodes.
    pub fn local_fit(&self, field: &OuterField, x: &[f64]) -> Result<LocalFit> {
        let g = &self.grid;
        let dim = g.dim();
        let base: Vec<i64> = x.iter().zip(&g.steps).map(|(v, h)| (v / h).round() as i64).collect();
        let hmin = g.steps.iter().cloned().fold(f64::INFINITY, f64::min);
        let nterms = poly_row(&vec![0.0; dim]).len();
        let mut ata = DMatrix::<f64>::zeros(nterms, nterms);
        let mut atb = DVector::<f64>::zeros(nterms);
        let mut count = 0usize;
        let mut add = |y: &[f64], value: f64, ata: &mut DMatrix<f64>, atb: &mut DVector<f64>| {
            let rel: Vec<f64> = y.iter().zip(x).map(|(a, b)| (a - b) / hmin).collect();
            let d2: f64 = rel.iter().map(|v| v * v).sum();
            let w = 1.0 / (1.0 + d2 * d2);
            let row = poly_row(&rel);
            for a in 0..nterms {
                atb[a] += w * row[a] * value;
                for b in 0..nterms {
                    ata[(a, b)] += w * row[a] * row[b];
                }
            }
            count += 1;
        };
        let mut off = vec![-2i64; dim];
        loop {
            let mut idx = Vec::with_capacity(dim);
            let mut y = Vec::with_capacity(dim);
            let mut ok = true;
            for d in 0..dim {
                let j = base[d] + off[d];
                y.push(j as f64 * g.steps[d]);
                match g.reflect(d, j) {
                    Some(i) => idx.push(i),
                    None => ok = false,
                }
            }
            if ok {
                let p = g.node(&idx);
                match g.kind[p] {
                    NodeKind::Inside => {
                        let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if r > 1e-12 {
                            let proj: Vec<f64> = y.iter().map(|v| v * g.rho / r).collect();
                            let theta = sphere_point(g.n, g.m, &proj);
                            let value = self.basis.eval(&field.data, &theta);
                            add(&proj, value, &mut ata, &mut atb);
                        }
                    }
                    _ => add(&y, field.values[p], &mut ata, &mut atb),
                }
            }
            let mut d = 0;
            while d < dim {
                off[d] += 1;
                if off[d] <= 2 {
                    break;
                }
                off[d] = -2;
                d += 1;
            }
            if d == dim {
                break;
            }
        }
        if count < nterms {
            return Err(Error::Geometry("too few points for a local fit".into()));
        }
        let coef = ata.lu().solve(&atb).ok_or_else(|| Error::Singular("local fit normal equations".into()))?;
        let mut gradient = vec![0.0; dim];
        let mut hessian = vec![vec![0.0; dim]; dim];
        for d in 0..dim {
            gradient[d] = coef[1 + d] / hmin;
        }
        let mut t = 1 + dim;
        for a in 0..dim {
            for b in a..dim {
                let v = coef[t] / (hmin * hmin);
                if a == b {
                    hessian[a][a] = 2.0 * v;
                } else {
                    hessian[a][b] = v;
                    hessian[b][a] = v;
                }
                t += 1;
            }
        }
        Ok(LocalFit { value: coef[0], gradient, hessian })
    }

    /// Reduced coordinates of `r θ` for a point `θ` of the quotient sphere.
    pub fn reduced_point(&self, r: f64, theta: &[f64]) -> Vec<f64> {
        let k = self.n() - self.m();
        let r1 = theta[..k].iter().map(|v| v * v).sum::<f64>().sqrt();
        std::iter::once(r * r1).chain(theta[k..].iter().map(|v| r * v)).collect()
    }

    /// Mode coefficients of `ρ∂_r u` on the sphere.
    pub fn radial_trace(&self, field: &OuterField) -> Result<Vec<f64>> {
        let samples = self
            .basis
            .nodes()
            .iter()
            .map(|t| {
                let x = self.reduced_point(self.grid.rho, t);
                let fit = self.local_fit(field, &x)?;
                Ok(fit.gradient.iter().zip(&x).map(|(g, y)| g * y).sum())
            })
            .collect::<Result<Vec<f64>>>()?;
        self.basis.project(&samples)
    }

    /// Mode coefficients of a field on the sphere of radius `r ≥ ρ`.
    pub fn coefficients_at(&self, field: &OuterField, r: f64) -> Result<Vec<f64>> {
        let samples = self
            .basis
            .nodes()
            .iter()
            .map(|t| Ok(self.local_fit(field, &self.reduced_point(r, t))?.value))
            .collect::<Result<Vec<f64>>>()?;
        self.basis.project(&samples)
    }

    /// `(a, b)` of `ū ≈ a ζ_m + b` on `[0.6R₁, 0.8R₁]` and `[0.8R₁, R₁]`.
    pub fn tail_fit(&self, field: &OuterField) -> Result<TailFit> {
        let (n, m) = (self.n(), self.m());
        let mean = self.grid.mean_profile(&field.values);
        let r = self.grid.radial_nodes();
        let rmax = self.grid.r_max;
        let window = |lo: f64, hi: f64| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = r
                .iter()
                .zip(&mean)
                .filter(|(x, _)| **x >= lo - 1e-12 && **x <= hi + 1e-12)
                .map(|(x, y)| (zeta(n, m, *x), *y))
                .unzip();
            if m + 2 < n {
                (0.0, ys.iter().sum::<f64>() / ys.len() as f64)
            } else {
                crate::numerics::linear_fit(&xs, &ys)
            }
        };
        let (a1, b1) = window(0.6 * rmax, 0.8 * rmax);
        let (a2, b2) = window(0.8 * rmax, rmax);
        let fit = TailFit { a: a2, b: b2, a_windows: [a1, a2], b_windows: [b1, b2] };
        if m + 2 >= n {
            let scale = field.sup().max(1e-300);
            let da = (a1 - a2).abs();
            let db = (b1 - b2).abs();
            if da > 0.01 * a2.abs().max(1e-6 * scale) || db > 0.01 * (b2.abs() + a2.abs() * zeta(n, m, rmax)).max(1e-6 * scale) {
                return Err(Error::TailTooShort(da.max(db)));
            }
        }
        Ok(fit)
    }

    /// `∇²u(∇u, ∇u) / (1 + |∇u|²)` at the unknowns.
    pub fn graph_nonlinearity(&self, field: &OuterField) -> Result<Vec<f64>> {
        let g = &self.grid;
        let dim = g.dim();
        let out: Vec<Result<f64>> = g
            .node_of
            .par_iter()
            .map(|&p| {
                let idx = g.index(p);
                let (grad, hess) = match self.central_derivatives(field, &idx) {
                    Some(d) => d,
                    None => {
                        let fit = self.local_fit(field, &g.coords(&idx))?;
                        (fit.gradient, fit.hessian)
                    }
                };
                let mut quad = 0.0;
                for a in 0..dim {
                    for b in 0..dim {
                        quad += hess[a][b] * grad[a] * grad[b];
                    }
                }
                let norm2: f64 = grad.iter().map(|v| v * v).sum();
                Ok(quad / (1.0 + norm2))
            })
            .collect();
        out.into_iter().collect()
    }

    /// Centred first and second differences when the full `3^{m+1}` stencil
    /// stays outside the ball and inside the box.
    fn central_derivatives(&self, field: &OuterField, idx: &[usize]) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
        let g = &self.grid;
        let dim = g.dim();
        if idx[0] + 1 >= g.counts[0] {
            return None;
        }
        let value = |off: &[i64]| -> Option<f64> {
            let mut j = Vec::with_capacity(dim);
            for d in 0..dim {
                j.push(g.reflect(d, idx[d] as i64 + off[d])?);
            }
            let p = g.node(&j);
            g.is_exterior(p).then(|| field.values[p])
        };
        let mut off = vec![0i64; dim];
        let u0 = value(&off)?;
        let mut grad = vec![0.0; dim];
        let mut hess = vec![vec![0.0; dim]; dim];
        for a in 0..dim {
            off[a] = 1;
            let up = value(&off)?;
            off[a] = -1;
            let um = value(&off)?;
            off[a] = 0;
            let h = g.steps[a];
            grad[a] = (up - um) / (2.0 * h);
            hess[a][a] = (up - 2.0 * u0 + um) / (h * h);
            for b in a + 1..dim {
                let mut mixed = 0.0;
                for (sa, sb, sign) in [(1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)] {
                    off[a] = sa;
                    off[b] = sb;
                    mixed += sign * value(&off)?;
                }
                off[a] = 0;
                off[b] = 0;
                let v = mixed / (4.0 * g.steps[a] * g.steps[b]);
                hess[a][b] = v;
                hess[b][a] = v;
            }
        }
        Some((grad, hess))
    }

    /// Minimal graph `u = -Ŵ_g - V̂_g` over the exterior domain with
    /// `u = -g` on the sphere, by Picard iteration on `Δu = N(u)`.
    pub fn solve_graph(&self, g: &[f64], eps: f64) -> Result<OuterSolution> {
        let n = self.n();
        let g_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = self.params.kappa * eps.powi(n as i32 - 1);
        if g_norm > bound {
            return Err(Error::InputSize { norm: g_norm, bound });
        }
        let w = self.harmonic_extension(g)?;
        self.picard(&w, None)
    }

    /// As [`OuterSolver::solve_graph`], with the Picard iteration started
    /// from a previous correction `V̂`.
    pub fn solve_graph_from(&self, g: &[f64], eps: f64, start: Option<&OuterField>) -> Result<OuterSolution> {
        let n = self.n();
        let g_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = self.params.kappa * eps.powi(n as i32 - 1);
        if g_norm > bound {
            return Err(Error::InputSize { norm: g_norm, bound });
        }
        let w = self.harmonic_extension(g)?;
        self.picard(&w, start)
    }

    fn picard(&self, w: &OuterField, start: Option<&OuterField>) -> Result<OuterSolution> {
        let zero_data = vec![0.0; self.basis.len()];
        let mut v = match start {
            Some(s) => s.clone(),
            None => OuterField {
                values: w.values.iter().map(|x| if x.is_finite() { 0.0 } else { f64::NAN }).collect(),
                data: zero_data.clone(),
                far_value: 0.0,
            },
        };
        let mut history = Vec::new();
        let mut converged = false;
        for _ in 0..self.params.picard_max {
            let u = w.combine(-1.0, &v, -1.0);
            let nonlin = self.graph_nonlinearity(&u)?;
            // Δ(-Ŵ - V̂) = N(u)  ⇒  ΔV̂ = -N(u)
            let source: Vec<f64> = nonlin.iter().map(|x| -x).collect();
            let next = self.solve_exterior(&source, &zero_data)?;
            let diff = next
                .values
                .iter()
                .zip(&v.values)
                .filter(|(a, _)| a.is_finite())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            v = next;
            history.push(diff);
            if !diff.is_finite() {
                return Err(Error::Divergence("non-finite outer iterate".into()));
            }
            let k = history.len();
            if k >= 4 && history[k - 1] > history[k - 2] && history[k - 2] > history[k - 3] && history[k - 3] > history[k - 4] {
                return Err(Error::Divergence(format!("outer Picard iterates not contracting: {history:?}")));
            }
            if diff <= self.params.picard_tol * (1.0 + w.sup()) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence(format!("outer Picard iteration stalled: {history:?}")));
        }
        let u = w.combine(-1.0, &v, -1.0);
        let nonlin = self.graph_nonlinearity(&u)?;
        let lap = self.grid.apply(&u.values, &u.data, u.far_value);
        let residual = lap.iter().zip(&nonlin).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let tail = self.tail_fit(&u)?;
        Ok(OuterSolution { u, harmonic: w.clone(), correction: v, tail, picard_history: history, residual })
    }

    /// Flux `∫ ∂_ν u / √(1+|∇u|²)` of the graph through the wall
    /// `|x₁| = r₁` at grid slice `i`, over the whole torus cell.
    pub fn wall_flux(&self, field: &OuterField, i: usize) -> Result<f64> {
        let g = &self.grid;
        if i == 0 || i + 1 >= g.counts[0] {
            return Err(Error::OutOfRange { value: i as f64, min: 1.0, max: (g.counts[0] - 2) as f64 });
        }
        let k = self.n() - self.m();
        let r1 = i as f64 * g.steps[0];
        if r1 <= g.rho {
            return Err(Error::OutOfRange { value: r1, min: g.rho, max: g.r_max });
        }
        let inner = g.strides[0];
        let mut acc = 0.0;
        for off in 0..inner {
            let p = i * inner + off;
            let idx = g.index(p);
            let (grad, _) =
                self.central_derivatives(field, &idx).ok_or_else(|| Error::Geometry("wall stencil leaves the grid".into()))?;
            let norm2: f64 = grad.iter().map(|v| v * v).sum();
            let w: f64 = (1..=self.m()).map(|d| if idx[d] == 0 || idx[d] + 1 == g.counts[d] { 0.5 } else { 1.0 } * g.steps[d]).product();
            acc += w * grad[0] / (1.0 + norm2).sqrt();
        }
        let shell = crate::numerics::sphere_volume(k - 1) * r1.powi(k as i32 - 1);
        Ok(acc * shell * 2f64.powi(self.m() as i32))
    }

    /// Piecewise tricubic (in general `(m+1)`-cubic) Lagrange interpolation
    /// on the cell containing `x`; `None` when the stencil meets the ball or
    /// leaves the box.
    pub fn cubic_value(&self, field: &OuterField, x: &[f64]) -> Option<f64> {
        let g = &self.grid;
        let dim = g.dim();
        let mut bases = Vec::with_capacity(dim);
        let mut weights = Vec::with_capacity(dim);
        for d in 0..dim {
            let t = x[d] / g.steps[d];
            let cell = t.floor() as i64;
            let f = t - cell as f64;
            bases.push(cell - 1);
            let nodes = [-1.0, 0.0, 1.0, 2.0];
            let w: Vec<f64> = (0..4)
                .map(|a| {
                    (0..4).filter(|b| *b != a).map(|b| (f - nodes[b]) / (nodes[a] - nodes[b])).product::<f64>()
                })
                .collect();
            weights.push(w);
        }
        let mut total = 0.0;
        let count = 4usize.pow(dim as u32);
        let mut idx = vec![0usize; dim];
        for code in 0..count {
            let mut rest = code;
            let mut w = 1.0;
            for d in (0..dim).rev() {
                let a = rest % 4;
                rest /= 4;
                idx[d] = g.reflect(d, bases[d] + a as i64)?;
                w *= weights[d][a];
            }
            let p = g.node(&idx);
            if !g.is_exterior(p) {
                return None;
            }
            total += w * field.values[p];
        }
        Some(total)
    }

    /// Mean curvature of the graph `x ↦ (x, u(x))` at the Cartesian point
    /// with reduced coordinates `x`, by centred differences of step `eta`
    /// applied to [`OuterSolver::cubic_value`]; sign relative to `+e_z`.
    pub fn graph_mean_curvature(&self, field: &OuterField, x: &[f64], eta: f64) -> Option<f64> {
        let (n, m) = (self.n(), self.m());
        let k = n - m;
        let mut base = vec![0.0; n];
        base[0] = x[0];
        base[k..].copy_from_slice(&x[1..]);
        let missing = std::cell::Cell::new(false);
        let point = |o: &[i32]| -> Vec<f64> {
            let y: Vec<f64> = base.iter().zip(o).map(|(b, oi)| b + eta * *oi as f64).collect();
            let r1 = y[..k].iter().map(|v| v * v).sum::<f64>().sqrt();
            let reduced: Vec<f64> = std::iter::once(r1).chain(y[k..].iter().copied()).collect();
            let z = self.cubic_value(field, &reduced).unwrap_or_else(|| {
                missing.set(true);
                0.0
            });
            let mut p = y;
            p.push(z);
            p
        };
        let mut up = vec![0.0; n + 1];
        up[n] = 1.0;
        let h = crate::catenoid::mean_curvature_stencil(point, &vec![eta; n], &up).ok()?;
        (!missing.get()).then_some(h)
    }

    /// `V̂_g` sampled on `ρ ≤ r ≤ 2ρ` together with its radial trace.
    pub fn annulus_profile(&self, sol: &OuterSolution) -> Result<OuterAnnulus> {
        let rho = self.grid.rho;
        let radii: Vec<f64> = (0..9).map(|i| rho * (1.0 + i as f64 / 8.0)).collect();
        let values = radii.iter().map(|r| self.coefficients_at(&sol.correction, *r)).collect::<Result<Vec<_>>>()?;
        let radial = self.radial_trace(&sol.correction)?;
        Ok(OuterAnnulus { radii, values, radial })
    }

    /// `‖V̂_{g₂} - V̂_{g₁}‖ / ‖g₂ - g₁‖` over `ρ ≤ r ≤ 2ρ`.
    pub fn lipschitz_probe(&self, g1: &[f64], g2: &[f64], eps: f64) -> Result<f64> {
        let dg = g1.iter().zip(g2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dg == 0.0 {
            return Ok(0.0);
        }
        let a = self.annulus_profile(&self.solve_graph(g1, eps)?)?;
        let b = self.annulus_profile(&self.solve_graph(g2, eps)?)?;
        Ok(a.sub(&b).norm() / dg)
    }
}

fn poly_row(y: &[f64]) -> Vec<f64> {
    let dim = y.len();
    let mut row = Vec::with_capacity(1 + dim + dim * (dim + 1) / 2);
    row.push(1.0);
    row.extend_from_slice(y);
    for a in 0..dim {
        for b in a..dim {
            row.push(y[a] * y[b]);
        }
    }
    for a in 0..dim {
        for b in a..dim {
            for c in b..dim {
                row.push(y[a] * y[b] * y[c]);
            }
        }
    }
    row
}

#[derive(Debug, Clone)]
pub struct OuterSolution {
    /// The graph function `u` (height relative to `εc∞`).
    pub u: OuterField,
    /// `Ŵ_g`.
    pub harmonic: OuterField,
    /// `V̂_g`, vanishing on the sphere.
    pub correction: OuterField,
    pub tail: TailFit,
    pub picard_history: Vec<f64>,
    /// `max |Δ_h u - N_h(u)|` at the unknowns.
    pub residual: f64,
}

/// Sphere-mode coefficients of `V̂_g` across `ρ ≤ r ≤ 2ρ`.
#[derive(Debug, Clone, Serialize)]
pub struct OuterAnnulus {
    pub radii: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub radial: Vec<f64>,
}

impl OuterAnnulus {
    pub fn sub(&self, other: &OuterAnnulus) -> OuterAnnulus {
        let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
        OuterAnnulus {
            radii: self.radii.clone(),
            values: self.values.iter().zip(&other.values).map(|(a, b)| diff(a, b)).collect(),
            radial: diff(&self.radial, &other.radial),
        }
    }

    /// `max_r ‖V̂(r)‖ + ‖ρ∂_rV̂(ρ)‖` in coefficient norms.
    pub fn norm(&self) -> f64 {
        let l2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.values.iter().map(|v| l2(v)).fold(0.0, f64::max) + l2(&self.radial)
    }
}

/// Harmonic extension of sphere data into the ball: `Σ h_j (r/ρ)^{ℓ_j} e_j(θ)`.
pub fn ball_harmonic_extension(basis: &InvariantSphereBasis, h: &[f64], rho: f64, r: f64, theta: &[f64]) -> f64 {
    basis.modes.iter().zip(h).map(|(mode, c)| c * (r / rho).powi(mode.degree as i32) * mode.eval(theta)).sum()
}

/// Mean-mode radial problem `w'' + (k-1)/r w' = f` on `[0, R]` with
/// `w'(0) = 0` and the far condition matching the `r^{2-k}` (or `r`) tail,
/// by second-order finite differences on `N+1` nodes.
pub fn radial_mean_mode(k: usize, f: impl Fn(f64) -> f64, r_max: f64, intervals: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if k == 2 {
        return Err(Error::InvalidDimensions("the radial formula needs n - m != 2".into()));
    }
    let kf = k as f64;
    let h = r_max / intervals as f64;
    let nodes = intervals + 1;
    let r: Vec<f64> = (0..nodes).map(|i| i as f64 * h).collect();
    let mut lower = vec![0.0; nodes];
    let mut diag = vec![0.0; nodes];
    let mut upper = vec![0.0; nodes];
    let rhs: Vec<f64> = r.iter().map(|x| f(*x)).collect();
    // r = 0: k w'' = f with an even ghost
    diag[0] = -2.0 * kf / (h * h);
    upper[0] = 2.0 * kf / (h * h);
    for i in 1..intervals {
        let c = (kf - 1.0) / r[i];
        lower[i] = 1.0 / (h * h) - c / (2.0 * h);
        diag[i] = -2.0 / (h * h);
        upper[i] = 1.0 / (h * h) + c / (2.0 * h);
    }
    // far node: w' = (2-k)/R w, through a ghost
    let beta = (2.0 - kf) / r_max;
    let c = (kf - 1.0) / r_max;
    lower[intervals] = 2.0 / (h * h);
    diag[intervals] = -2.0 / (h * h) + 2.0 * beta / h + c * beta;
    let w = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    Ok((r, w))
}

/// `F r^{2-k}/(2-k) + ∫_r^∞ ζ^{1-k} ∫_ζ^∞ t^{k-1} f(t) dt dζ` with
/// `F = ∫_0^∞ t^{k-1} f`, by Gauss–Legendre panels on `[0, cutoff]`.
pub fn radial_formula(k: usize, f: impl Fn(f64) -> f64, r: f64, cutoff: f64) -> f64 {
    let kf = k as f64;
    let panels = 200;
    let integrate = |a: f64, b: f64, g: &dyn Fn(f64) -> f64| -> f64 {
        if b <= a {
            return 0.0;
        }
        let width = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let (x, w) = gauss_legendre(12, a + p as f64 * width, a + (p + 1) as f64 * width);
                x.iter().zip(&w).map(|(x, w)| w * g(*x)).sum::<f64>()
            })
            .sum()
    };
    let total = integrate(0.0, cutoff, &|t| t.powf(kf - 1.0) * f(t));
    // ∫_r^∞ ζ^{1-k} ∫_ζ^∞ t^{k-1} f dt dζ = ∫_r^∞ t^{k-1} f(t) G(r, t) dt,
    // G(r, t) = ∫_r^t ζ^{1-k} dζ
    let kernel = |t: f64| if k == 1 { t - r } else { (t.powf(2.0 - kf) - r.powf(2.0 - kf)) / (2.0 - kf) };
    let tail = integrate(r, cutoff, &|t| t.powf(kf - 1.0) * f(t) * kernel(t));
    total * r.powf(2.0 - kf) / (2.0 - kf) + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::Lattice;

    fn square(n: usize) -> (InvariantSphereBasis, Lattice) {
        let basis = InvariantSphereBasis::build(n, 2, 4).unwrap();
        let lattice = Lattice::rectangular(&[1.0, 1.0]).unwrap().normalize_volume();
        (basis, lattice)
    }

    fn params(lattice: &Lattice, n: usize, step_factor: f64) -> OuterParams {
        let mut p = OuterParams::defaults(lattice, n).unwrap();
        p.step = p.rho / step_factor;
        p
    }

    #[test]
    fn zero_data_gives_zero_graph() {
        let (basis, lattice) = square(3);
        let solver = OuterSolver::new(&basis, &lattice, params(&lattice, 3, 4.0)).unwrap();
        let sol = solver.solve_graph(&vec![0.0; basis.len()], 0.1).unwrap();
        assert_eq!(sol.u.sup(), 0.0);
        assert_eq!((sol.tail.a, sol.tail.b), (0.0, 0.0));
    }

    #[test]
    fn affine_functions_have_zero_nonlinearity() {
        let (basis, lattice) = square(3);
        let solver = OuterSolver::new(&basis, &lattice, params(&lattice, 3, 4.0)).unwrap();
        let g = &solver.grid;
        // affine in r₁ only: the reflections keep it affine on the reduced box
        let values: Vec<f64> = (0..g.len())
            .map(|p| if g.is_exterior(p) { 0.3 + 0.7 * g.coords(&g.index(p))[0] } else { f64::NAN })
            .collect();
        let field = OuterField { values, data: vec![0.0; basis.len()], far_value: 0.0 };
        let idxs: Vec<usize> = (0..g.len())
            .filter(|p| g.is_exterior(*p) && g.index(*p)[0] > 0 && g.index(*p)[0] + 1 < g.counts[0])
            .collect();
        let q = solver.graph_nonlinearity(&field).unwrap();
        let mut worst = 0.0f64;
        for p in idxs {
            let idx = g.index(p);
            if solver.central_derivatives(&field, &idx).is_some() {
                worst = worst.max(q[g.unknown_of[p]].abs());
            }
        }
        assert!(worst <= 1e-12, "{worst}");
    }

    #[test]
    fn nonlinearity_matches_the_laplacian_of_a_minimal_graph() {
        // Scherk's first surface a·u = log(cos a y₁ / cos a x₁), constant in y₂
        let (basis, lattice) = square(3);
        let solver = OuterSolver::new(&basis, &lattice, params(&lattice, 3, 4.0)).unwrap();
        let g = &solver.grid;
        let a = 0.3;
        let u = |x: &[f64]| ((a * x[1]).cos() / (a * x[0]).cos()).ln() / a;
        let lap = |x: &[f64]| a * ((a * x[0]).cos().powi(-2) - (a * x[1]).cos().powi(-2));
        let values: Vec<f64> =
            (0..g.len()).map(|p| if g.is_exterior(p) { u(&g.coords(&g.index(p))) } else { f64::NAN }).collect();
        let field = OuterField { values, data: vec![0.0; basis.len()], far_value: 0.0 };
        let q = solver.graph_nonlinearity(&field).unwrap();
        let (mut worst, mut scale) = (0.0f64, 0.0f64);
        for p in 0..g.len() {
            let idx = g.index(p);
            let inner = idx.iter().zip(&g.counts).all(|(i, c)| *i > 0 && i + 1 < *c);
            if g.is_exterior(p) && inner && solver.central_derivatives(&field, &idx).is_some() {
                let exact = lap(&g.coords(&idx));
                worst = worst.max((q[g.unknown_of[p]] - exact).abs());
                scale = scale.max(exact.abs());
            }
        }
        assert!(scale > 0.1);
        assert!(worst < 0.02 * scale, "{worst} vs {scale}");
    }

    #[test]
    fn positive_data_obeys_maximum_principle() {
        let (basis, lattice) = square(3);
        let solver = OuterSolver::new(&basis, &lattice, params(&lattice, 3, 4.0)).unwrap();
        let mut data = vec![0.0; basis.len()];
        data[0] = 2.0;
        data[1] = 0.3;
        let field = solver.harmonic_extension(&data).unwrap();
        // the slope is negative, so u tends to -∞ and is bounded by its sphere data
        assert!(solver.tail_fit(&field).unwrap().a < 0.0);
        let hi = basis.synthesize(&data).unwrap().into_iter().fold(f64::NEG_INFINITY, f64::max);
        let top = field.values.iter().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        assert!(top <= hi * (1.0 + 1e-3), "{top} > {hi}");
    }

    #[test]
    fn linearity_of_exterior_solve() {
        let (basis, lattice) = square(3);
        let solver = OuterSolver::new(&basis, &lattice, params(&lattice, 3, 4.0)).unwrap();
        let a: Vec<f64> = (0..basis.len()).map(|j| 0.1 * (j as f64 + 1.0)).collect();
        let b: Vec<f64> = (0..basis.len()).map(|j| (j as f64).sin()).collect();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 3.0 * y).collect();
        let src = vec![0.0; solver.grid.unknowns()];
        let ua = solver.solve_exterior(&src, &a).unwrap();
        let ub = solver.solve_exterior(&src, &b).unwrap();
        let us = solver.solve_exterior(&src, &sum).unwrap();
        let scale = us.sup();
        for ((s, x), y) in us.values.iter().zip(&ua.values).zip(&ub.values) {
            if s.is_finite() {
                assert!((s - 2.0 * x + 3.0 * y).abs() < 1e-8 * scale);
            }
        }
    }

    #[test]
    fn linear_tail_for_codimension_one_torus() {
        let (basis, lattice) = square(3);
        let solver = OuterSolver::new(&basis, &lattice, params(&lattice, 3, 4.0)).unwrap();
        let mut data = vec![0.0; basis.len()];
        data[0] = 1.0;
        let field = solver.harmonic_extension(&data).unwrap();
        let tail = solver.tail_fit(&field).unwrap();
        // positive data and no constant at infinity: the graph dips
        assert!(tail.a < 0.0);
        assert!((tail.a_windows[0] - tail.a_windows[1]).abs() <= 0.01 * tail.a.abs());
        // no constant part in the tail
        assert!(tail.b.abs() < 1e-3 * tail.a.abs() * solver.grid.r_max, "{tail:?}");
    }

    #[test]
    fn dirichlet_to_neumann_converges_at_least_second_order() {
        let (basis, lattice) = square(3);
        let mut data = vec![0.0; basis.len()];
        data[0] = 1.0;
        data[1] = 0.5;
        let trace = |f: f64| {
            let solver = OuterSolver::new(&basis, &lattice, params(&lattice, 3, f)).unwrap();
            solver.radial_trace(&solver.harmonic_extension(&data).unwrap()).unwrap()
        };
        let (t1, t2, t3) = (trace(4.0), trace(8.0), trace(16.0));
        let e12 = (t1[0] - t2[0]).abs();
        let e23 = (t2[0] - t3[0]).abs();
        let order = (e12 / e23).log2();
        assert!(order > 1.7, "order {order} ({e12:e}, {e23:e})");
    }

    #[test]
    fn robin_case_decays() {
        let basis = InvariantSphereBasis::build(4, 1, 2).unwrap();
        let lattice = Lattice::rectangular(&[1.0]).unwrap().normalize_volume();
        let mut p = OuterParams::defaults(&lattice, 4).unwrap();
        p.r_max = 12.0 * p.rho;
        p.step = p.rho / 6.0;
        let solver = OuterSolver::new(&basis, &lattice, p).unwrap();
        let mut data = vec![0.0; basis.len()];
        data[0] = 1.0;
        let field = solver.harmonic_extension(&data).unwrap();
        let mean = solver.grid.mean_profile(&field.values);
        let e0 = crate::numerics::sphere_volume(3).sqrt();
        assert!(mean.last().unwrap().abs() < 0.3 * e0);
        let finite = field.values.iter().filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(lo >= -1e-9 && hi <= e0 * (1.0 + 1e-6), "{lo} {hi}");
    }

    #[test]
    fn ball_extension_of_modes() {
        let basis = InvariantSphereBasis::build(3, 2, 4).unwrap();
        let rho = 0.4;
        let theta = &basis.nodes()[3];
        for (j, mode) in basis.modes.iter().enumerate() {
            let mut h = vec![0.0; basis.len()];
            h[j] = 1.0;
            let at = |r: f64| ball_harmonic_extension(&basis, &h, rho, r, theta);
            assert!((at(rho) - mode.eval(theta)).abs() < 1e-13);
            let d = 1e-5;
            let fd = rho * (at(rho + d) - at(rho - d)) / (2.0 * d);
            assert!((fd - mode.degree as f64 * mode.eval(theta)).abs() < 1e-7);
        }
    }

    #[test]
    fn barrier_identity_converges_at_second_order() {
        // Δ|x₁|^ν = ν(ν + n - m - 2)|x₁|^{ν-2} in ℝ^{n-m}; n = 4, m = 1
        let k = 3.0;
        let nu = -0.5;
        let err = |h: f64| {
            let mut worst = 0.0f64;
            for i in 1..=20 {
                let r = 0.5 + 0.075 * i as f64;
                let f = |x: f64| x.powf(nu);
                let lap = (f(r + h) - 2.0 * f(r) + f(r - h)) / (h * h) + (k - 1.0) / r * (f(r + h) - f(r - h)) / (2.0 * h);
                worst = worst.max((lap - nu * (nu + k - 2.0) * r.powf(nu - 2.0)).abs());
            }
            worst
        };
        let order = (err(0.02) / err(0.01)).log2();
        assert!((order - 2.0).abs() < 0.3, "{order}");
    }

    #[test]
    fn radial_mean_mode_matches_quadrature() {
        let f = |t: f64| (-t * t).exp();
        for k in [1usize, 3] {
            let (r, w) = radial_mean_mode(k, f, 12.0, 48_000).unwrap();
            for i in (0..r.len()).step_by(4000).skip(1) {
                let exact = radial_formula(k, f, r[i], 12.0);
                assert!((w[i] - exact).abs() < 1e-6 * exact.abs().max(1.0), "k={k} r={} {} {}", r[i], w[i], exact);
            }
        }
    }
}
