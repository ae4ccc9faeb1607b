//! Spherical harmonics on `S^{n-1}` that are invariant under
//! `O(n-m) × {sign reflections of ℝ^m}`.
//!
//! Harmonics are kept as homogeneous polynomials in `n` variables. Invariant
//! polynomials of degree `ℓ` are spanned by `|x₁|^{2a} ∏ x₂ₖ^{2bₖ}`; each of
//! them is projected onto its harmonic part and the results are
//! orthonormalised with exact monomial integrals. Sampling, analysis and
//! synthesis use a product Gauss–Legendre rule on the quotient
//! `{x₁ = cos α · e, x₂ = sin α · η, η ≥ 0}`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{gamma_half, gauss_legendre, sphere_volume};

/// Homogeneous polynomial as a sparse map exponent → coefficient.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Polynomial {
    dim: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl Polynomial {
    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: BTreeMap::new() }
    }

    pub fn monomial(exponents: Vec<u32>, coeff: f64) -> Self {
        let mut p = Self::zero(exponents.len());
        p.add_term(exponents, coeff);
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &f64)> {
        self.terms.iter()
    }

    fn add_term(&mut self, exponents: Vec<u32>, coeff: f64) {
        if coeff == 0.0 {
            return;
        }
        let entry = self.terms.entry(exponents).or_insert(0.0);
        *entry += coeff;
    }

    pub fn add(&self, other: &Polynomial, scale: f64) -> Polynomial {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), scale * c);
        }
        out.prune();
        out
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial { dim: self.dim, terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect() }
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = Polynomial::zero(self.dim);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out.prune();
        out
    }

    /// Multiplies by `|x|²`.
    pub fn mul_norm_sq(&self) -> Polynomial {
        let mut out = Polynomial::zero(self.dim);
        for (e, c) in &self.terms {
            for i in 0..self.dim {
                let mut f = e.clone();
                f[i] += 2;
                out.add_term(f, *c);
            }
        }
        out
    }

    pub fn laplacian(&self) -> Polynomial {
        let mut out = Polynomial::zero(self.dim);
        for (e, c) in &self.terms {
            for i in 0..self.dim {
                if e[i] >= 2 {
                    let mut f = e.clone();
                    f[i] -= 2;
                    out.add_term(f, c * (e[i] * (e[i] - 1)) as f64);
                }
            }
        }
        out.prune();
        out
    }

    fn prune(&mut self) {
        let scale = self.terms.values().fold(0.0f64, |m, c| m.max(c.abs()));
        self.terms.retain(|_, c| c.abs() > 1e-14 * scale);
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(x).map(|(&k, &xi)| xi.powi(k as i32)).product::<f64>())
            .sum()
    }

    /// Exact integral over the unit sphere `S^{dim-1}`.
    pub fn sphere_integral(&self) -> f64 {
        self.terms.iter().map(|(e, c)| c * monomial_sphere_integral(e)).sum()
    }
}

/// `∫_{S^{n-1}} x^α dσ = 2 ∏Γ((αᵢ+1)/2) / Γ((|α|+n)/2)` for even `α`, else 0.
pub fn monomial_sphere_integral(alpha: &[u32]) -> f64 {
    if alpha.iter().any(|a| a % 2 == 1) {
        return 0.0;
    }
    let n = alpha.len() as u32;
    let total: u32 = alpha.iter().sum();
    2.0 * alpha.iter().map(|&a| gamma_half(a + 1)).product::<f64>() / gamma_half(total + n)
}

/// Harmonic component of a homogeneous polynomial of degree `ell`:
/// `Σₖ (-1)^k |x|^{2k} Δ^k p / (2^k k! ∏_{i=1}^k (n+2ℓ-2-2i))`.
pub fn harmonic_projection(p: &Polynomial, ell: u32) -> Polynomial {
    let n = p.dim() as f64;
    let mut out = p.clone();
    let mut lap = p.clone();
    let mut coeff = 1.0;
    for k in 1..=ell / 2 {
        lap = lap.laplacian();
        if lap.is_zero() {
            break;
        }
        coeff *= -1.0 / (2.0 * k as f64 * (n + 2.0 * ell as f64 - 2.0 - 2.0 * k as f64));
        let mut term = lap.clone();
        for _ in 0..k {
            term = term.mul_norm_sq();
        }
        out = out.add(&term, coeff);
    }
    out
}

/// `γ = sqrt(((n-2)/2)² + λ)`.
pub fn indicial_root(n: usize, lambda: f64) -> f64 {
    let a = (n as f64 - 2.0) / 2.0;
    (a * a + lambda).sqrt()
}

#[derive(Debug, Clone)]
pub struct SphereMode {
    pub index: usize,
    pub degree: u32,
    pub eigenvalue: f64,
    pub polynomial: Polynomial,
}

impl SphereMode {
    /// Value at a point of the unit sphere.
    pub fn eval(&self, theta: &[f64]) -> f64 {
        self.polynomial.eval(theta)
    }

    pub fn indicial_root(&self) -> f64 {
        indicial_root(self.polynomial.dim(), self.eigenvalue)
    }
}

/// Product Gauss–Legendre rule on the quotient of `S^{n-1}`. Weights already
/// include the size of each orbit, so they sum to `vol(S^{n-1})`.
#[derive(Debug, Clone)]
pub struct QuotientQuadrature {
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl QuotientQuadrature {
    pub fn new(n: usize, m: usize, order: usize) -> Self {
        let k = n - m;
        let (alpha, wa) = gauss_legendre(order, 0.0, std::f64::consts::FRAC_PI_2);
        let (eta, weta) = orthant_rule(m, order);
        let mut nodes = Vec::with_capacity(alpha.len() * eta.len());
        let mut weights = Vec::with_capacity(alpha.len() * eta.len());
        let orbit = sphere_volume(k - 1) * 2f64.powi(m as i32);
        for (a, w) in alpha.iter().zip(&wa) {
            let (ca, sa) = (a.cos(), a.sin());
            let radial = ca.powi(k as i32 - 1) * sa.powi(m as i32 - 1) * w * orbit;
            for (e, we) in eta.iter().zip(&weta) {
                let mut x = vec![0.0; n];
                x[0] = ca;
                for (l, el) in e.iter().enumerate() {
                    x[k + l] = sa * el;
                }
                nodes.push(x);
                weights.push(radial * we);
            }
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// Rule on `S^{m-1} ∩ {η ≥ 0}` by hyperspherical angles in `[0, π/2]`; the
/// weights integrate over that orthant only.
fn orthant_rule(m: usize, order: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    if m == 1 {
        return (vec![vec![1.0]], vec![1.0]);
    }
    let (beta, wb) = gauss_legendre(order, 0.0, std::f64::consts::FRAC_PI_2);
    let (inner, winner) = orthant_rule(m - 1, order);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (b, w) in beta.iter().zip(&wb) {
        let (cb, sb) = (b.cos(), b.sin());
        for (e, we) in inner.iter().zip(&winner) {
            let mut x = Vec::with_capacity(m);
            x.push(cb);
            x.extend(e.iter().map(|v| sb * v));
            nodes.push(x);
            weights.push(w * sb.powi(m as i32 - 2) * we);
        }
    }
    (nodes, weights)
}

#[derive(Debug, Clone)]
pub struct InvariantSphereBasis {
    pub n: usize,
    pub m: usize,
    pub l_max: u32,
    pub modes: Vec<SphereMode>,
    pub quadrature: QuotientQuadrature,
    /// `values[j][q] = e_j(node_q)`.
    values: Vec<Vec<f64>>,
}

/// Serializable summary of a basis.
#[derive(Debug, Clone, Serialize)]
pub struct BasisReport {
    pub n: usize,
    pub m: usize,
    pub l_max: u32,
    pub degrees: Vec<u32>,
    pub eigenvalues: Vec<f64>,
    pub indicial_roots: Vec<f64>,
    pub quadrature_nodes: usize,
}

/// Invariant generating monomials of degree `2d`: `|x₁|^{2a} ∏ x₂ₖ^{2bₖ}`.
fn invariant_generators(n: usize, m: usize, d: u32) -> Vec<Polynomial> {
    let k = n - m;
    let mut r1_sq = Polynomial::zero(n);
    for i in 0..k {
        let mut e = vec![0; n];
        e[i] = 2;
        r1_sq.add_term(e, 1.0);
    }
    let mut out = Vec::new();
    let mut parts = vec![0u32; m + 1];
    compositions(d, &mut parts, 0, &mut |parts| {
        let mut e = vec![0; n];
        for l in 0..m {
            e[k + l] = 2 * parts[l + 1];
        }
        let mut p = Polynomial::monomial(e, 1.0);
        for _ in 0..parts[0] {
            p = p.mul(&r1_sq);
        }
        out.push(p);
    });
    out
}

fn compositions(rest: u32, parts: &mut Vec<u32>, pos: usize, visit: &mut dyn FnMut(&[u32])) {
    if pos + 1 == parts.len() {
        parts[pos] = rest;
        visit(parts);
        return;
    }
    for v in (0..=rest).rev() {
        parts[pos] = v;
        compositions(rest - v, parts, pos + 1, visit);
    }
}

impl InvariantSphereBasis {
    pub fn build(n: usize, m: usize, l_max: u32) -> Result<Self> {
        if n < 2 || m < 1 || m > n - 1 {
            return Err(Error::InvalidDimensions(format!("need n >= 2 and 1 <= m <= n-1, got n = {n}, m = {m}")));
        }
        let mut modes: Vec<SphereMode> = Vec::new();
        for ell in (0..=l_max).step_by(2) {
            let mut accepted: Vec<Polynomial> = Vec::new();
            for g in invariant_generators(n, m, ell / 2) {
                let mut h = harmonic_projection(&g, ell);
                for q in &accepted {
                    let c = h.mul(q).sphere_integral();
                    h = h.add(q, -c);
                }
                let norm_sq = h.mul(&h).sphere_integral();
                let scale_sq = g.mul(&g).sphere_integral();
                if norm_sq > 1e-20 * scale_sq.max(1e-300) {
                    // second pass keeps orthogonality at roundoff level
                    let mut h = h.scale(1.0 / norm_sq.sqrt());
                    for q in &accepted {
                        let c = h.mul(q).sphere_integral();
                        h = h.add(q, -c);
                    }
                    let norm = h.mul(&h).sphere_integral().sqrt();
                    accepted.push(h.scale(1.0 / norm));
                }
            }
            for p in accepted {
                let ellf = ell as f64;
                modes.push(SphereMode {
                    index: modes.len(),
                    degree: ell,
                    eigenvalue: ellf * (ellf + n as f64 - 2.0),
                    polynomial: p,
                });
            }
        }
        let order = l_max as usize + n + 8;
        let quadrature = QuotientQuadrature::new(n, m, order);
        let values = modes
            .iter()
            .map(|mode| quadrature.nodes.iter().map(|x| mode.eval(x)).collect())
            .collect();
        Ok(Self { n, m, l_max, modes, quadrature, values })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.eigenvalue).collect()
    }

    pub fn indicial_roots(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.indicial_root()).collect()
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.quadrature.nodes
    }

    /// Values of mode `j` on the quadrature nodes.
    pub fn mode_values(&self, j: usize) -> &[f64] {
        &self.values[j]
    }

    /// Coefficients `g_j = ∫ f e_j` of node samples.
    pub fn project(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.quadrature.len() {
            return Err(Error::NodeCountMismatch { expected: self.quadrature.len(), got: samples.len() });
        }
        Ok(self
            .values
            .iter()
            .map(|e| e.iter().zip(samples).zip(&self.quadrature.weights).map(|((e, f), w)| e * f * w).sum())
            .collect())
    }

    /// Node samples of `Σ_j c_j e_j`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() != self.modes.len() {
            return Err(Error::NodeCountMismatch { expected: self.modes.len(), got: coeffs.len() });
        }
        let mut out = vec![0.0; self.quadrature.len()];
        for (e, c) in self.values.iter().zip(coeffs) {
            for (o, v) in out.iter_mut().zip(e) {
                *o += c * v;
            }
        }
        Ok(out)
    }

    /// `Σ_j c_j e_j(θ)` at an arbitrary point of the sphere.
    pub fn eval(&self, coeffs: &[f64], theta: &[f64]) -> f64 {
        self.modes.iter().zip(coeffs).map(|(m, c)| c * m.eval(theta)).sum()
    }

    pub fn report(&self) -> BasisReport {
        BasisReport {
            n: self.n,
            m: self.m,
            l_max: self.l_max,
            degrees: self.modes.iter().map(|m| m.degree).collect(),
            eigenvalues: self.eigenvalues(),
            indicial_roots: self.indicial_roots(),
            quadrature_nodes: self.quadrature.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn gram(basis: &InvariantSphereBasis) -> DMatrix<f64> {
        let k = basis.len();
        DMatrix::from_fn(k, k, |i, j| {
            basis.quadrature.integrate(
                &basis.mode_values(i).iter().zip(basis.mode_values(j)).map(|(a, b)| a * b).collect::<Vec<_>>(),
            )
        })
    }

    #[test]
    fn monomial_integrals() {
        let pi = std::f64::consts::PI;
        assert!((monomial_sphere_integral(&[0, 0, 0]) - 4.0 * pi).abs() < 1e-14);
        assert!((monomial_sphere_integral(&[2, 0, 0]) - 4.0 * pi / 3.0).abs() < 1e-14);
        assert!((monomial_sphere_integral(&[2, 2, 0]) - 4.0 * pi / 15.0).abs() < 1e-14);
        assert_eq!(monomial_sphere_integral(&[1, 2, 0]), 0.0);
    }

    #[test]
    fn projection_is_harmonic() {
        for n in 2..6 {
            let mut e = vec![0; n];
            e[0] = 4;
            e[n - 1] = 2;
            let p = Polynomial::monomial(e, 1.0);
            let h = harmonic_projection(&p, 6);
            let lap = h.laplacian();
            let size: f64 = lap.terms().map(|(_, c)| c.abs()).sum();
            assert!(size < 1e-10, "n = {n}: {size}");
        }
    }

    #[test]
    fn mode_counts_n3_m2() {
        let b = InvariantSphereBasis::build(3, 2, 6).unwrap();
        assert_eq!(b.report().degrees, vec![0, 2, 2, 4, 4, 4, 6, 6, 6, 6]);
    }

    #[test]
    fn constant_mode_and_no_degree_one() {
        for (n, m) in [(3, 1), (3, 2), (4, 1), (4, 2), (4, 3), (5, 2)] {
            let b = InvariantSphereBasis::build(n, m, 4).unwrap();
            let c = 1.0 / sphere_volume(n - 1).sqrt();
            assert!(b.mode_values(0).iter().all(|v| (v - c).abs() < 1e-13));
            assert!(b.modes.iter().all(|m| m.degree != 1));
        }
    }

    #[test]
    fn invalid_dimensions_are_rejected() {
        assert!(matches!(InvariantSphereBasis::build(3, 3, 4), Err(Error::InvalidDimensions(_))));
        assert!(matches!(InvariantSphereBasis::build(3, 0, 4), Err(Error::InvalidDimensions(_))));
    }

    #[test]
    fn quadrature_gram_is_identity() {
        for (n, m) in [(3, 1), (3, 2), (4, 1), (4, 2), (4, 3), (5, 3)] {
            let b = InvariantSphereBasis::build(n, m, 6).unwrap();
            let g = gram(&b);
            let err = (g - DMatrix::identity(b.len(), b.len())).amax();
            assert!(err < 1e-10, "(n, m) = ({n}, {m}): {err}");
            let total: f64 = b.quadrature.weights.iter().sum();
            assert!((total - sphere_volume(n - 1)).abs() < 1e-12);
        }
    }

    #[test]
    fn indicial_roots_examples() {
        assert_eq!(indicial_root(4, 0.0), 1.0);
        assert_eq!(indicial_root(2, 0.0), 0.0);
        assert!((indicial_root(3, 6.0) - 2.5).abs() < 1e-15);
    }

    /// Brute-force count of reflection-invariant degree-2 harmonics in ℝ³:
    /// average a basis of the five-dimensional space over all eight sign
    /// flips and take the rank.
    #[test]
    fn degree_two_count_matches_group_average() {
        let harmonics: [fn(&[f64]) -> f64; 5] = [
            |x| x[0] * x[1],
            |x| x[0] * x[2],
            |x| x[1] * x[2],
            |x| x[0] * x[0] - x[1] * x[1],
            |x| x[0] * x[0] - x[2] * x[2],
        ];
        let probes: Vec<[f64; 3]> = (0..12)
            .map(|i| {
                let t = 0.37 + i as f64 * 0.91;
                
                [t.cos() * (2.0 * t).sin(), t.sin() * (2.0 * t).sin(), (2.0 * t).cos()]
            })
            .collect();
        let rows: Vec<Vec<f64>> = harmonics
            .iter()
            .map(|h| {
                probes
                    .iter()
                    .map(|x| {
                        let mut acc = 0.0;
                        for flip in 0..8u32 {
                            let y: Vec<f64> = (0..3).map(|k| if flip >> k & 1 == 1 { -x[k] } else { x[k] }).collect();
                            acc += h(&y);
                        }
                        acc / 8.0
                    })
                    .collect()
            })
            .collect();
        let mat = DMatrix::from_fn(5, probes.len(), |i, j| rows[i][j]);
        let rank = mat.svd(false, false).singular_values.iter().filter(|s| **s > 1e-10).count();
        let b = InvariantSphereBasis::build(3, 2, 2).unwrap();
        assert_eq!(b.modes.iter().filter(|m| m.degree == 2).count(), rank);
    }

    /// Eigenvalue of the degree-2 modes recovered by a Cartesian stencil on the
    /// zero-homogeneous extension, compared with the closed form.
    #[test]
    fn laplace_beltrami_stencil_converges() {
        let b = InvariantSphereBasis::build(3, 2, 4).unwrap();
        let x0 = [0.48f64, 0.6, 0.64];
        let norm = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
        let x0: Vec<f64> = x0.iter().map(|v| v / norm).collect();
        for mode in b.modes.iter().skip(1) {
            let f = |x: &[f64]| {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let y: Vec<f64> = x.iter().map(|v| v / r).collect();
                mode.eval(&y)
            };
            let residual = |h: f64| {
                let mut lap = 0.0;
                for i in 0..3 {
                    let mut p = x0.clone();
                    let mut q = x0.clone();
                    p[i] += h;
                    q[i] -= h;
                    lap += (f(&p) - 2.0 * f(&x0) + f(&q)) / (h * h);
                }
                (lap + mode.eigenvalue * f(&x0)).abs()
            };
            let (r1, r2) = (residual(2e-2), residual(1e-2));
            let order = (r1 / r2).log2();
            assert!((order - 2.0).abs() < 0.3, "degree {}: order {order}", mode.degree);
        }
    }

    #[test]
    fn projection_of_combination() {
        let b = InvariantSphereBasis::build(3, 2, 6).unwrap();
        let j = 4;
        let samples: Vec<f64> =
            b.mode_values(0).iter().zip(b.mode_values(j)).map(|(a, c)| 2.0 * a + 3.0 * c).collect();
        let c = b.project(&samples).unwrap();
        for (k, v) in c.iter().enumerate() {
            let expected = if k == 0 { 2.0 } else if k == j { 3.0 } else { 0.0 };
            assert!((v - expected).abs() < 1e-8);
        }
        let zero = b.project(&vec![0.0; b.quadrature.len()]).unwrap();
        assert!(zero.iter().all(|v| *v == 0.0));
        assert!(matches!(b.project(&[1.0]), Err(Error::NodeCountMismatch { .. })));
    }

    proptest! {
        #[test]
        fn modes_are_group_invariant(a in 0.0f64..6.3, b in 0.0f64..3.1, flips in 0u32..16, rot in 0.0f64..6.3) {
            let basis = InvariantSphereBasis::build(4, 2, 6).unwrap();
            let x = [b.sin() * a.cos(), b.sin() * a.sin(), b.cos() * 0.6, b.cos() * 0.8];
            // rotation in the x₁ block and sign flips in the x₂ block
            let y = [
                rot.cos() * x[0] - rot.sin() * x[1],
                rot.sin() * x[0] + rot.cos() * x[1],
                if flips & 1 == 1 { -x[2] } else { x[2] },
                if flips & 2 == 2 { -x[3] } else { x[3] },
            ];
            for mode in &basis.modes {
                prop_assert!((mode.eval(&x) - mode.eval(&y)).abs() < 1e-10);
            }
        }

        #[test]
        fn synthesis_round_trip(coeffs in proptest::collection::vec(-3.0f64..3.0, 10)) {
            let basis = InvariantSphereBasis::build(3, 2, 6).unwrap();
            let samples = basis.synthesize(&coeffs).unwrap();
            let back = basis.project(&samples).unwrap();
            for (a, b) in coeffs.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-8);
            }
        }
    }
}
