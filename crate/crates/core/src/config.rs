//! Run configuration read from TOML, with defaults and validation that
//! names each offending field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gluing::GluingParams;
use crate::neck::NeckParams;
use crate::numerics::sphere_volume;
use crate::outer::{nu_range, OuterParams};
use crate::torus::{default_mu_max, Lattice};

/// A fully resolved configuration. Writing it back to TOML and parsing the
/// result yields the same value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub m: usize,
    /// Row-major generator matrix; its columns generate the lattice.
    pub lattice: Vec<Vec<f64>>,
    pub eps: f64,
    pub rho: f64,
    pub delta: f64,
    pub nu: f64,
    pub l_max: u32,
    pub mu_max: f64,
    pub neck_step: f64,
    pub chart_step: f64,
    pub outer_step: f64,
    pub r_max: f64,
    pub neck_tol: f64,
    pub outer_tol: f64,
    pub match_tol: f64,
    pub max_iter: usize,
    pub kappa: f64,
    pub threads: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

/// The file as written: everything but `n` may be omitted.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    n: Option<usize>,
    m: Option<usize>,
    lattice: Option<Vec<Vec<f64>>>,
    lattice_diag: Option<Vec<f64>>,
    eps: Option<f64>,
    rho: Option<f64>,
    delta: Option<f64>,
    nu: Option<f64>,
    l_max: Option<u32>,
    mu_max: Option<f64>,
    neck_step: Option<f64>,
    chart_step: Option<f64>,
    outer_step: Option<f64>,
    r_max: Option<f64>,
    neck_tol: Option<f64>,
    outer_tol: Option<f64>,
    match_tol: Option<f64>,
    max_iter: Option<usize>,
    kappa: Option<f64>,
    threads: Option<usize>,
    mesh: Option<PathBuf>,
    report: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.message().to_string()]))?;
        Self::resolve(raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// The configuration for a given `(n, ε)` with all defaults.
    pub fn with_defaults(n: usize, eps: f64) -> Result<Self> {
        Self::resolve(RawConfig { n: Some(n), eps: Some(eps), ..RawConfig::default() })
    }

    fn resolve(raw: RawConfig) -> Result<Self> {
        let mut errors = Vec::new();
        let Some(n) = raw.n else {
            return Err(Error::Config(vec!["n: missing".into()]));
        };
        if n < 3 {
            errors.push(format!("n: must be at least 3, got {n}"));
        }
        let rows = match (&raw.lattice, &raw.lattice_diag) {
            (Some(_), Some(_)) => {
                errors.push("lattice: give either lattice or lattice_diag, not both".into());
                None
            }
            (Some(rows), None) => Some(rows.clone()),
            (None, Some(diag)) => Some(
                (0..diag.len()).map(|i| (0..diag.len()).map(|j| if i == j { diag[i] } else { 0.0 }).collect()).collect(),
            ),
            (None, None) => None,
        };
        let m = raw.m.or(rows.as_ref().map(|r| r.len())).unwrap_or(n.saturating_sub(1));
        if m < 1 || m + 1 > n {
            errors.push(format!("m: must satisfy 1 <= m <= n - 1, got m = {m}, n = {n}"));
        }
        let lattice = match rows {
            Some(rows) => {
                if rows.len() != m {
                    errors.push(format!("lattice: expected {m} rows, got {}", rows.len()));
                    None
                } else {
                    match Lattice::from_rows(&rows) {
                        Ok(l) if l.is_sign_symmetric() => Some(l),
                        Ok(_) => {
                            errors.push("lattice: not invariant under coordinate sign changes".into());
                            None
                        }
                        Err(e) => {
                            errors.push(format!("lattice: {e}"));
                            None
                        }
                    }
                }
            }
            None if m >= 1 => Lattice::rectangular(&vec![1.0; m]).ok().map(|l| l.normalize_volume()),
            None => None,
        };
        let Some(lattice) = lattice.filter(|_| errors.is_empty()) else {
            return Err(Error::Config(errors));
        };
        let outer = if lattice.is_rectangular() { OuterParams::defaults(&lattice, n).ok() } else { None };
        let min_side = (0..m).map(|i| lattice.generators().column(i).norm()).fold(f64::INFINITY, f64::min);
        let rho = raw.rho.unwrap_or_else(|| outer.as_ref().map_or(min_side / 8.0, |o| o.rho));
        let eps = raw.eps.unwrap_or(0.1);
        if !(eps > 0.0) {
            errors.push(format!("eps: must be positive, got {eps}"));
        }
        if !(eps < rho) {
            errors.push(format!("eps must be < rho (eps = {eps}, rho = {rho})"));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            errors.push(format!("rho: must lie in (0, 1], got {rho}"));
        }
        if 2.0 * rho >= min_side {
            errors.push(format!("rho: the ball must fit in the cell, need 2 rho < {min_side}"));
        }
        let delta = raw.delta.unwrap_or(0.0);
        let bound = (n as f64 - 2.0) / 2.0;
        if !(delta > -bound && delta < bound) {
            errors.push(format!("delta: must lie in ({}, {bound}), got {delta}", -bound));
        }
        let (lo, hi) = nu_range(n, m);
        let nu = raw.nu.unwrap_or_else(|| outer.as_ref().map_or(-1.0, |o| o.nu));
        if !(nu > lo && nu < hi) {
            if m + 1 == n {
                errors.push(format!("nu: must be < 0 when m = n - 1, got {nu}"));
            } else {
                errors.push(format!("nu: must lie in ({lo}, {hi}), got {nu}"));
            }
        }
        let mu_max = match raw.mu_max {
            Some(v) => v,
            None => default_mu_max(&lattice, 8)?,
        };
        let neck = NeckParams::default();
        let positive = |name: &str, v: f64, errors: &mut Vec<String>| {
            if !(v > 0.0 && v.is_finite()) {
                errors.push(format!("{name}: must be positive, got {v}"));
            }
        };
        let neck_step = raw.neck_step.unwrap_or(neck.ds_max);
        let chart_step = raw.chart_step.unwrap_or(neck.chart_step);
        let outer_step = raw.outer_step.unwrap_or(rho / 8.0);
        let r_max = raw.r_max.unwrap_or_else(|| outer.as_ref().map_or(8.0 * rho, |o| o.r_max / o.rho * rho));
        let neck_tol = raw.neck_tol.unwrap_or(1e-12);
        let outer_tol = raw.outer_tol.unwrap_or(1e-11);
        let match_tol = raw.match_tol.unwrap_or(1e-9);
        let kappa = raw.kappa.unwrap_or(neck.kappa);
        for (name, v) in [
            ("mu_max", mu_max),
            ("neck_step", neck_step),
            ("chart_step", chart_step),
            ("outer_step", outer_step),
            ("neck_tol", neck_tol),
            ("outer_tol", outer_tol),
            ("match_tol", match_tol),
            ("kappa", kappa),
        ] {
            positive(name, v, &mut errors);
        }
        if !(r_max > 2.0 * rho) {
            errors.push(format!("r_max: must exceed 2 rho, got {r_max}"));
        }
        let threads = raw.threads.unwrap_or(1);
        if threads == 0 {
            errors.push("threads: must be at least 1".into());
        }
        if !errors.is_empty() {
            return Err(Error::Config(errors));
        }
        let g = lattice.generators();
        Ok(Self {
            n,
            m,
            lattice: (0..m).map(|i| (0..m).map(|j| g[(i, j)]).collect()).collect(),
            eps,
            rho,
            delta,
            nu,
            l_max: raw.l_max.unwrap_or(6),
            mu_max,
            neck_step,
            chart_step,
            outer_step,
            r_max,
            neck_tol,
            outer_tol,
            match_tol,
            max_iter: raw.max_iter.unwrap_or(60),
            kappa,
            threads,
            mesh: raw.mesh,
            report: raw.report,
        })
    }

    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::from_rows(&self.lattice)
    }

    pub fn neck_params(&self) -> NeckParams {
        NeckParams {
            ds_max: self.neck_step,
            chart_step: self.chart_step,
            tol: self.neck_tol,
            kappa: self.kappa,
            delta: self.delta,
            ..NeckParams::default()
        }
    }

    pub fn outer_params(&self) -> Result<OuterParams> {
        let lattice = self.lattice()?;
        let mut p = OuterParams::defaults(&lattice, self.n)?;
        p.rho = self.rho;
        p.r_max = self.r_max;
        p.step = self.outer_step;
        p.nu = self.nu;
        p.tol = self.outer_tol;
        p.kappa = self.kappa;
        Ok(p)
    }

    pub fn gluing_params(&self) -> Result<GluingParams> {
        let lattice = self.lattice()?;
        let mut p = GluingParams::defaults(&lattice, self.n)?;
        p.l_max = self.l_max;
        p.neck = self.neck_params();
        p.outer = self.outer_params()?;
        p.match_tol = self.match_tol;
        p.max_iter = self.max_iter;
        Ok(p)
    }

    /// `ε^{n-1} vol(S^{n-1})`, the waist flux of the unperturbed neck.
    pub fn catenoid_flux(&self) -> f64 {
        self.eps.powi(self.n as i32 - 1) * sphere_volume(self.n - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let c = RunConfig::parse("n = 3\nm = 2\neps = 0.1\n").unwrap();
        assert_eq!(c.m, 2);
        let side = 2.0 * std::f64::consts::PI.sqrt();
        assert!((c.lattice[0][0] - side).abs() < 1e-12 && c.lattice[0][1] == 0.0);
        assert!((c.rho - side / 8.0).abs() < 1e-12);
        assert!(c.nu < 0.0);
        assert_eq!(c.threads, 1);
    }

    #[test]
    fn eps_must_be_below_rho() {
        let err = RunConfig::parse("n = 3\nm = 2\neps = 0.5\nrho = 0.4\n").unwrap_err();
        assert!(err.to_string().contains("eps must be < rho"), "{err}");
    }

    #[test]
    fn positive_nu_rejected_in_codimension_one() {
        let err = RunConfig::parse("n = 3\nm = 2\neps = 0.1\nnu = 0.5\n").unwrap_err();
        assert!(err.to_string().contains("nu: must be < 0"), "{err}");
    }

    #[test]
    fn errors_are_aggregated_per_field() {
        let Error::Config(list) = RunConfig::parse("n = 3\nm = 2\neps = 0.1\ndelta = 2.0\nthreads = 0\n").unwrap_err() else {
            panic!("expected a configuration error");
        };
        assert_eq!(list.len(), 2, "{list:?}");
        assert!(list[0].starts_with("delta") && list[1].starts_with("threads"));
    }

    #[test]
    fn diagonal_and_full_lattice_forms_agree() {
        let a = RunConfig::parse("n = 3\neps = 0.1\nlattice_diag = [3.0, 4.0]\n").unwrap();
        let b = RunConfig::parse("n = 3\neps = 0.1\nlattice = [[3.0, 0.0], [0.0, 4.0]]\n").unwrap();
        assert_eq!(a, b);
        assert!(RunConfig::parse("n = 3\neps = 0.1\nlattice = [[1.0, 0.3], [0.0, 1.0]]\n").is_err());
        assert!(RunConfig::parse("n = 3\neps = 0.1\nbogus = 1\n").is_err());
    }

    #[test]
    fn written_config_parses_back_unchanged() {
        let mut c = RunConfig::parse("n = 4\nm = 2\neps = 0.05\n").unwrap();
        c.mesh = Some("out.obj".into());
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }
}
