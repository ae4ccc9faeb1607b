//! Flat tori `ℝ^m / Aℤ^m` and their Laplace spectrum restricted to functions
//! that are even under every coordinate reflection.
//!
//! A torus is stored through its generator matrix `A` (columns are the
//! generators). Only lattices that are mapped to themselves by every sign
//! diagonal `D` admit the symmetric construction; such lattices are checked by
//! [`Lattice::is_sign_symmetric`]. For those lattices every reflection-even
//! eigenfunction is a product of cosines `∏ cos(2π ξ_l x_l)` with `ξ` a dual
//! lattice vector with non-negative components.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::sphere_volume;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    generators: DMatrix<f64>,
    normalized: bool,
}

impl Lattice {
    /// Builds a lattice from its generator matrix (columns are generators).
    pub fn new(generators: DMatrix<f64>) -> Result<Self> {
        if !generators.is_square() || generators.nrows() == 0 {
            return Err(Error::InvalidLattice("generator matrix must be square and non-empty".into()));
        }
        let det = generators.determinant();
        if !det.is_finite() || det.abs() < 1e-14 {
            return Err(Error::InvalidLattice(format!("singular generator matrix (det = {det:e})")));
        }
        Ok(Self { generators, normalized: false })
    }

    /// Builds a lattice from a row-major matrix, as written in configuration files.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidLattice("lattice rows must form a square matrix".into()));
        }
        Self::new(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
    }

    pub fn rectangular(sides: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(sides)))
    }

    pub fn dim(&self) -> usize {
        self.generators.nrows()
    }

    pub fn generators(&self) -> &DMatrix<f64> {
        &self.generators
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// `vol(T^m) = |det A|`.
    pub fn volume(&self) -> f64 {
        self.generators.determinant().abs()
    }

    /// Rescales the lattice so that `vol(T^m) = vol(S^m)`.
    pub fn normalize_volume(&self) -> Lattice {
        let m = self.dim();
        let target = sphere_volume(m);
        let scale = (target / self.volume()).powf(1.0 / m as f64);
        Lattice { generators: &self.generators * scale, normalized: true }
    }

    /// Whether `A` is diagonal up to roundoff.
    pub fn is_rectangular(&self) -> bool {
        let m = self.dim();
        let scale = self.generators.amax();
        (0..m).all(|i| (0..m).all(|j| i == j || self.generators[(i, j)].abs() <= 1e-14 * scale))
    }

    /// Diagonal of `A` for rectangular lattices.
    pub fn sides(&self) -> Option<Vec<f64>> {
        self.is_rectangular().then(|| (0..self.dim()).map(|i| self.generators[(i, i)].abs()).collect())
    }

    /// Checks `D·A·ℤ^m = A·ℤ^m` for every sign diagonal `D`: equivalently
    /// `A⁻¹ D A` is unimodular for each single-sign generator `D`.
    pub fn is_sign_symmetric(&self) -> bool {
        let m = self.dim();
        let inv = match self.generators.clone().try_inverse() {
            Some(inv) => inv,
            None => return false,
        };
        (0..m).all(|k| {
            let mut d = DMatrix::<f64>::identity(m, m);
            d[(k, k)] = -1.0;
            let t = &inv * d * &self.generators;
            let integral = t.iter().all(|v| (v - v.round()).abs() < 1e-9);
            integral && (t.determinant().abs() - 1.0).abs() < 1e-9
        })
    }

    /// Sorts the diagonal of a rectangular lattice in increasing order; this
    /// is the only isometry canonicalisation performed.
    pub fn canonical(&self) -> Lattice {
        match self.sides() {
            Some(mut sides) => {
                sides.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut out = Lattice::rectangular(&sides).expect("sorted sides stay non-singular");
                out.normalized = self.normalized;
                out
            }
            None => self.clone(),
        }
    }

    /// All reflection-even eigenmodes with eigenvalue at most `mu_max`.
    pub fn invariant_spectrum(&self, mu_max: f64) -> Result<TorusSpectrum> {
        if !self.is_sign_symmetric() {
            return Err(Error::Symmetry("some sign diagonal does not preserve Aℤ^m".into()));
        }
        if !(mu_max > 0.0) {
            return Err(Error::InvalidParameter("mu_max must be positive".into()));
        }
        let m = self.dim();
        let inv_t = self.generators.clone().try_inverse().expect("checked non-singular").transpose();
        // ξ = A^{-T} k  ⇒  k = A^T ξ, |k_i| ≤ |col_i(A)|·|ξ|
        let xi_max = (mu_max / (4.0 * PI * PI)).sqrt();
        let bounds: Vec<i64> = (0..m)
            .map(|i| (self.generators.column(i).norm() * xi_max).ceil() as i64 + 1)
            .collect();
        let vol = self.volume();
        let mut modes = Vec::new();
        let mut k = vec![0i64; m];
        for (i, b) in bounds.iter().enumerate() {
            k[i] = -b;
        }
        loop {
            let kv = nalgebra::DVector::from_iterator(m, k.iter().map(|&v| v as f64));
            let xi = &inv_t * kv;
            // one representative per reflection orbit: non-negative components
            if xi.iter().all(|&c| c >= -1e-12) {
                let mu = 4.0 * PI * PI * xi.norm_squared();
                if mu <= mu_max * (1.0 + 1e-12) {
                    let nonzero = xi.iter().filter(|c| c.abs() > 1e-12).count();
                    modes.push(TorusMode {
                        index: 0,
                        wavevector: k.clone(),
                        dual: xi.iter().map(|c| c.max(0.0)).collect(),
                        eigenvalue: mu,
                        amplitude: (2f64.powi(nonzero as i32) / vol).sqrt(),
                    });
                }
            }
            // odometer increment
            let mut pos = 0;
            loop {
                if pos == m {
                    modes.sort_by(|a, b| {
                        a.eigenvalue
                            .partial_cmp(&b.eigenvalue)
                            .unwrap()
                            .then_with(|| a.wavevector.cmp(&b.wavevector))
                    });
                    for (i, mode) in modes.iter_mut().enumerate() {
                        mode.index = i;
                    }
                    return Ok(TorusSpectrum { lattice: self.clone(), modes });
                }
                k[pos] += 1;
                if k[pos] > bounds[pos] {
                    k[pos] = -bounds[pos];
                    pos += 1;
                } else {
                    break;
                }
            }
        }
    }
}

/// A reflection-even, L²-normalised Laplace eigenfunction on the torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusMode {
    pub index: usize,
    /// Integer coordinates of the dual vector, `ξ = A^{-T} k`.
    pub wavevector: Vec<i64>,
    pub dual: Vec<f64>,
    /// `μ = 4π²|ξ|²`.
    pub eigenvalue: f64,
    pub amplitude: f64,
}

impl TorusMode {
    /// Value at `x` (any representative; the mode is periodic and even).
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.amplitude
            * self
                .dual
                .iter()
                .zip(x)
                .map(|(xi, x)| (2.0 * PI * xi * x).cos())
                .product::<f64>()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TorusSpectrum {
    pub lattice: Lattice,
    pub modes: Vec<TorusMode>,
}

impl TorusSpectrum {
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.eigenvalue).collect()
    }
}

/// Evaluates a torus mode at `x`.
pub fn eval_torus_mode(mode: &TorusMode, _lattice: &Lattice, x: &[f64]) -> f64 {
    mode.eval(x)
}

/// Smallest `μ_max` that yields at least `count` invariant modes, used for the
/// default spectral cutoff.
pub fn default_mu_max(lattice: &Lattice, count: usize) -> Result<f64> {
    let mut mu = 1.0;
    loop {
        let spec = lattice.invariant_spectrum(mu)?;
        if spec.modes.len() >= count {
            return Ok(mu);
        }
        mu *= 1.5;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(a: &[f64]) -> Lattice {
        Lattice::rectangular(a).unwrap()
    }

    #[test]
    fn volumes() {
        assert!((diag(&[1.0, 1.0]).volume() - 1.0).abs() < 1e-15);
        assert!((diag(&[2.0, 3.0]).volume() - 6.0).abs() < 1e-14);
        let shear = Lattice::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert!((shear.volume() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_lattice_is_rejected() {
        let err = Lattice::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap_err();
        assert!(matches!(err, Error::InvalidLattice(_)));
    }

    #[test]
    fn normalization_examples() {
        let circle = diag(&[1.0]).normalize_volume();
        assert!((circle.generators()[(0, 0)] - 2.0 * PI).abs() < 1e-12);
        let square = diag(&[1.0, 1.0]).normalize_volume();
        assert!((square.generators()[(0, 0)] - 2.0 * PI.sqrt()).abs() < 1e-12);
        let already = diag(&[2.0 * PI.sqrt(), 2.0 * PI.sqrt()]).normalize_volume();
        assert!((already.generators()[(1, 1)] - 2.0 * PI.sqrt()).abs() < 1e-12);
        assert!(already.is_normalized());
    }

    #[test]
    fn normalize_is_idempotent() {
        let l = Lattice::from_rows(&[vec![1.3, 0.2], vec![0.0, 0.7]]).unwrap().normalize_volume();
        let ll = l.normalize_volume();
        assert!((l.generators() - ll.generators()).amax() < 1e-12);
        assert!((l.volume() - sphere_volume(2)).abs() < 1e-12 * sphere_volume(2));
    }

    #[test]
    fn circle_spectrum() {
        let t = diag(&[2.0 * PI]);
        let s = t.invariant_spectrum(0.5).unwrap();
        assert_eq!(s.modes.len(), 1);
        assert!((s.modes[0].eval(&[0.3]) - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-15);
        let s = t.invariant_spectrum(1.5).unwrap();
        assert_eq!(s.eigenvalues().len(), 2);
        assert!((s.modes[1].eigenvalue - 1.0).abs() < 1e-12);
        assert!((s.modes[1].eval(&[0.0]) - 1.0 / PI.sqrt()).abs() < 1e-14);
        assert!((s.modes[1].eval(&[1.1]) - (1.1f64).cos() / PI.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn oblique_lattice_is_rejected_for_spectrum() {
        let oblique = Lattice::from_rows(&[vec![1.0, 0.3], vec![0.0, 1.0]]).unwrap();
        assert!(!oblique.is_sign_symmetric());
        assert!(matches!(oblique.invariant_spectrum(10.0), Err(Error::Symmetry(_))));
        // centred rectangular lattice is compatible
        let centred = Lattice::from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        assert!(centred.is_sign_symmetric());
    }

    #[test]
    fn modes_are_normalized_on_the_cell() {
        let l = diag(&[1.7, 2.9]);
        let spec = l.invariant_spectrum(40.0).unwrap();
        let n = 200;
        for mode in &spec.modes {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let x = [1.7 * (i as f64 + 0.5) / n as f64, 2.9 * (j as f64 + 0.5) / n as f64];
                    acc += mode.eval(&x).powi(2);
                }
            }
            acc *= l.volume() / (n * n) as f64;
            assert!((acc - 1.0).abs() < 1e-10, "mode {:?}: {acc}", mode.wavevector);
        }
    }

    #[test]
    fn centred_lattice_modes_are_normalized() {
        let l = Lattice::from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let spec = l.invariant_spectrum(120.0).unwrap();
        // integrate over the fundamental cell A[0,1]^2 with the pull-back
        let n = 240;
        for mode in &spec.modes {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let (u, v) = ((i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64);
                    let x = [u + v, u - v];
                    acc += mode.eval(&x).powi(2);
                }
            }
            acc *= l.volume() / (n * n) as f64;
            assert!((acc - 1.0).abs() < 1e-9, "mode {:?}: {acc}", mode.wavevector);
        }
    }

    #[test]
    fn spectrum_is_sorted_and_reflection_even() {
        let l = diag(&[1.0, 2.5, 0.8]).normalize_volume();
        let spec = l.invariant_spectrum(60.0).unwrap();
        assert!(spec.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
        let x = [0.31, -0.7, 0.2];
        for mode in &spec.modes {
            let v = mode.eval(&x);
            for flip in 0..8u32 {
                let y: Vec<f64> = (0..3).map(|k| if flip >> k & 1 == 1 { -x[k] } else { x[k] }).collect();
                assert_eq!(mode.eval(&y), v);
            }
        }
    }

    #[test]
    fn rectangular_count_matches_brute_force() {
        let sides = [1.3, 2.2];
        let l = diag(&sides);
        for mu_max in [5.0, 30.0, 111.0] {
            let mut count = 0;
            for k1 in 0..100i64 {
                for k2 in 0..100i64 {
                    let mu = 4.0 * PI * PI * ((k1 as f64 / sides[0]).powi(2) + (k2 as f64 / sides[1]).powi(2));
                    if mu <= mu_max {
                        count += 1;
                    }
                }
            }
            assert_eq!(l.invariant_spectrum(mu_max).unwrap().modes.len(), count);
        }
    }

    #[test]
    fn default_cutoff_gives_twelve_modes() {
        let l = diag(&[1.0, 1.0]).normalize_volume();
        let mu = default_mu_max(&l, 12).unwrap();
        assert!(l.invariant_spectrum(mu).unwrap().modes.len() >= 12);
    }

    #[test]
    fn canonical_sorts_sides() {
        let l = diag(&[3.0, 1.0]).canonical();
        assert_eq!(l.sides().unwrap(), vec![1.0, 3.0]);
    }
}
