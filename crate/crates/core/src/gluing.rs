//! Matching the solved neck to the solved outer graph across the sphere
//! `|x| = ρ`, and everything measured on the glued surface: end data,
//! balancing fluxes, curvature residuals and a symmetric section mesh.
//!
//! The neck over the ball is `z = εc∞ - W_h - V_h` and the outer graph is
//! `z = εc∞ - Ŵ_g - V̂_g`. Continuity of height forces `g = h + V_h(ρ)`;
//! continuity of `ρ∂_r z` then reads `(D - B) h = B V_h(ρ) + ρ∂_rV̂_g - ρ∂_rV_h`
//! with `D = diag(ℓ_j)` and `B` the discrete Dirichlet-to-Neumann matrix of
//! the exterior problem. Both sides are iterated to a joint fixed point.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::catenoid::CatenoidProfile;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::neck::{NeckField, NeckParams, NeckSolution, NeckSolver};
use crate::numerics::{sphere_volume, Anderson};
use crate::outer::{OuterField, OuterParams, OuterSolution, OuterSolver};
use crate::sphere::InvariantSphereBasis;
use crate::torus::Lattice;

#[derive(Debug, Clone, Serialize)]
pub struct GluingParams {
    pub l_max: u32,
    pub neck: NeckParams,
    pub outer: OuterParams,
    /// Length of the catenoid profile; must exceed `s_ε` for every `ε` used.
    pub profile_s_max: f64,
    pub profile_tol: f64,
    /// Stop when both mismatches fall below `match_tol · ε`.
    pub match_tol: f64,
    pub max_iter: usize,
    /// Anderson mixing depth for the `(g, h)` iteration.
    pub anderson_depth: usize,
}

impl GluingParams {
    pub fn defaults(lattice: &Lattice, n: usize) -> Result<Self> {
        let neck = NeckParams { tol: 1e-12, ..NeckParams::default() };
        Ok(Self {
            l_max: 6,
            neck,
            outer: OuterParams::defaults(lattice, n)?,
            profile_s_max: 8.0,
            profile_tol: 1e-10,
            match_tol: 1e-9,
            max_iter: 60,
            anderson_depth: 5,
        })
    }
}

/// Owns the data shared by every `ε`: lattice, sphere basis and profile.
pub struct GluingProblem {
    pub n: usize,
    pub lattice: Lattice,
    pub basis: InvariantSphereBasis,
    pub profile: CatenoidProfile,
    pub params: GluingParams,
}

impl GluingProblem {
    pub fn new(n: usize, lattice: Lattice, params: GluingParams) -> Result<Self> {
        let m = lattice.dim();
        if m + 1 > n {
            return Err(Error::InvalidDimensions(format!("need m < n, got n = {n}, m = {m}")));
        }
        if !lattice.is_sign_symmetric() {
            return Err(Error::Symmetry("lattice is not invariant under coordinate sign changes".into()));
        }
        let basis = InvariantSphereBasis::build(n, m, params.l_max)?;
        let profile = CatenoidProfile::solve(n, params.profile_s_max, params.profile_tol)?;
        Ok(Self { n, lattice, basis, profile, params })
    }

    pub fn m(&self) -> usize {
        self.lattice.dim()
    }

    pub fn neck_solver(&self) -> Result<NeckSolver<'_>> {
        NeckSolver::new(&self.profile, &self.basis, self.params.neck)
    }

    /// Builds the exterior grid and its Dirichlet-to-Neumann matrix; the
    /// costly step, shared by all `ε`.
    pub fn outer_solver(&self) -> Result<OuterSolver<'_>> {
        OuterSolver::new(&self.basis, &self.lattice, self.params.outer.clone())
    }
}

/// Iteration record of the boundary matching.
#[derive(Debug, Clone, Serialize)]
pub struct Contraction {
    pub iterations: usize,
    /// `‖(g, h)_{k+1} - (g, h)_k‖` per iteration.
    pub steps: Vec<f64>,
    /// Largest ratio of successive steps.
    pub factor: f64,
    pub g_norm: f64,
    pub h_norm: f64,
    /// `κ ε^{n-1}`, the admissible radius for both boundary data.
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Mismatch {
    /// `‖g - h - V_h(ρ)‖` in mode coefficients.
    pub dirichlet: f64,
    /// `‖∂_r z_outer - ∂_r z_neck‖` on `|x| = ρ` in mode coefficients.
    pub neumann: f64,
}

/// The neck and outer graph at a matched pair `(g, h)`.
pub struct Matched<'a> {
    pub eps: f64,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub neck: NeckSolution<'a>,
    pub outer: OuterSolution,
    pub mismatch: Mismatch,
    pub contraction: Contraction,
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Runs the matching iteration from `(g, h) = 0` until both mismatches are
/// below `match_tol · ε`.
pub fn match_boundary<'a>(
    neck: &'a NeckSolver<'a>,
    outer: &OuterSolver,
    eps: f64,
    match_tol: f64,
    max_iter: usize,
    depth: usize,
) -> Result<Matched<'a>> {
    let basis = neck.basis;
    let len = basis.len();
    let rho = outer.grid.rho;
    let n = neck.n();
    let b = outer.dtn();
    let d = DMatrix::from_diagonal(&DVector::from_iterator(len, basis.modes.iter().map(|m| m.degree as f64)));
    let u_lu = (&d - b).lu();
    if u_lu.determinant().abs() < 1e-14 {
        return Err(Error::Singular("D - B is singular".into()));
    }
    let bound = neck.params.kappa.min(outer.params.kappa) * eps.powi(n as i32 - 1);
    let mut g = vec![0.0; len];
    let mut h = vec![0.0; len];
    let mut v_prev: Option<NeckField> = None;
    let mut c_prev: Option<OuterField> = None;
    let mut steps: Vec<f64> = Vec::new();
    let mut mixer = Anderson::new(depth);
    for iteration in 0..=max_iter {
        let nsol = neck.solve_from(&h, eps, rho, v_prev.as_ref())?;
        let osol = outer.solve_graph_from(&g, eps, c_prev.as_ref())?;
        let trace = nsol.boundary_trace()?;
        let dv_hat = outer.radial_trace(&osol.correction)?;
        let gv = DVector::from_column_slice(&g);
        let hv = DVector::from_column_slice(&h);
        let bg = b * &gv;
        let dh = &d * &hv;
        let dirichlet = l2(&(0..len).map(|j| g[j] - h[j] - trace.value[j]).collect::<Vec<_>>());
        let neumann = l2(&(0..len).map(|j| (bg[j] + dv_hat[j] - dh[j] - trace.radial[j]) / rho).collect::<Vec<_>>());
        if !(dirichlet.is_finite() && neumann.is_finite()) {
            return Err(Error::Divergence("non-finite matching mismatch".into()));
        }
        if dirichlet.max(neumann) <= match_tol * eps {
            let factor = steps.windows(2).skip(1).map(|w| w[1] / w[0]).fold(0.0, f64::max);
            let contraction = Contraction { iterations: iteration, steps, factor, g_norm: l2(&g), h_norm: l2(&h), bound };
            return Ok(Matched {
                eps,
                g,
                h,
                neck: nsol,
                outer: osol,
                mismatch: Mismatch { dirichlet, neumann },
                contraction,
            });
        }
        if iteration == max_iter {
            break;
        }
        let vb = DVector::from_column_slice(&trace.value);
        let bv = b * &vb;
        let rhs = DVector::from_iterator(len, (0..len).map(|j| bv[j] + dv_hat[j] - trace.radial[j]));
        let h_new = u_lu.solve(&rhs).ok_or_else(|| Error::Singular("D - B is singular".into()))?;
        let h_new: Vec<f64> = h_new.iter().copied().collect();
        let g_new: Vec<f64> = h_new.iter().zip(&trace.value).map(|(a, v)| a + v).collect();
        let x: Vec<f64> = g.iter().chain(&h).copied().collect();
        let f: Vec<f64> = g_new.iter().chain(&h_new).zip(&x).map(|(a, b)| a - b).collect();
        let mixed = mixer.step(x, f);
        let (g_new, h_new) = (mixed[..len].to_vec(), mixed[len..].to_vec());
        let step = l2(&g_new.iter().zip(&g).map(|(a, b)| a - b).collect::<Vec<_>>())
            + l2(&h_new.iter().zip(&h).map(|(a, b)| a - b).collect::<Vec<_>>());
        steps.push(step);
        let k = steps.len();
        if k >= 4 && steps[k - 1] > steps[k - 2] && steps[k - 2] > steps[k - 3] && steps[k - 3] > steps[k - 4] {
            return Err(Error::Divergence(format!("matching steps growing: {steps:?}")));
        }
        if l2(&g_new).max(l2(&h_new)) > bound {
            return Err(Error::Divergence(format!("boundary data left the ball of radius {bound:.3e}")));
        }
        g = g_new;
        h = h_new;
        v_prev = Some(nsol.v);
        c_prev = Some(osol.correction);
    }
    Err(Error::Convergence(format!("matching did not converge in {max_iter} iterations: {steps:?}")))
}

/// Fluxes of the vertical direction through cycles at several heights.
#[derive(Debug, Clone, Serialize)]
pub struct Balancing {
    pub eps: f64,
    /// Where each flux was taken: neck parameter `s` or wall position `r₁`.
    pub locations: Vec<String>,
    pub fluxes: Vec<f64>,
    /// Largest `|F_i - F_0| / |F_0|`.
    pub spread: f64,
    /// `c_ε / ε^{n-1}`.
    pub slope_ratio: f64,
    /// `ε^{n-1} vol(S^{n-1}) / (2 vol(T^m) ε^{n-1})`, the ratio predicted by
    /// flux conservation between the waist and the two walls.
    pub predicted_ratio: f64,
    /// `|2 vol(T) c_ε - F_0| / F_0`.
    pub identity_defect: f64,
    /// Waist flux of the unperturbed neck divided by `ε^{n-1} vol(S^{n-1})`.
    pub catenoid_control: f64,
}

/// Sup-norm interface gaps measured pointwise on the sphere nodes.
#[derive(Debug, Clone, Serialize)]
pub struct InterfaceGap {
    pub c0: f64,
    pub c1: f64,
}

/// Mean-curvature samples at parameter points fixed independently of the
/// discretisation.
#[derive(Debug, Clone, Serialize)]
pub struct CurvatureResidual {
    pub neck: f64,
    pub outer: f64,
    pub neck_samples: usize,
    pub outer_samples: usize,
}

impl CurvatureResidual {
    pub fn max(&self) -> f64 {
        self.neck.max(self.outer)
    }
}

impl<'a> Matched<'a> {
    /// Slope `c_ε` of the mean end profile.
    pub fn c_eps(&self) -> f64 {
        self.outer.tail.a
    }

    /// Asymptotic height `d_ε = εc∞ + b`.
    pub fn d_eps(&self) -> f64 {
        self.eps * self.neck.solver().profile.c_inf() + self.outer.tail.b
    }

    /// Pointwise gaps of height and radial slope between the two pieces.
    pub fn interface_gap(&self, outer: &OuterSolver) -> Result<InterfaceGap> {
        let basis = self.neck.solver().basis;
        let rho = self.neck.rho;
        let c = self.eps * self.neck.solver().profile.c_inf();
        let trace = self.neck.boundary_trace()?;
        let dv_hat = outer.radial_trace(&self.outer.correction)?;
        let bg = outer.dtn() * DVector::from_column_slice(&self.g);
        let outer_slope: Vec<f64> = (0..basis.len()).map(|j| -(bg[j] + dv_hat[j]) / rho).collect();
        let neck_slope: Vec<f64> =
            basis.modes.iter().enumerate().map(|(j, m)| -(m.degree as f64 * self.h[j] + trace.radial[j]) / rho).collect();
        let so = basis.synthesize(&outer_slope)?;
        let sn = basis.synthesize(&neck_slope)?;
        let go = basis.synthesize(&self.g)?;
        let mut c0 = 0.0f64;
        for (q, theta) in basis.nodes().iter().enumerate() {
            let zn = self.neck.height_at(rho, theta)?;
            c0 = c0.max((zn - (c - go[q])).abs());
        }
        let c1 = so.iter().zip(&sn).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Ok(InterfaceGap { c0, c1 })
    }

    /// Flux table: neck cycles at `s = 0` and `s_ε/2`, outer walls near
    /// `0.5R₁` and `0.9R₁`, plus the flux of the unperturbed neck.
    pub fn balancing(&self, outer: &OuterSolver, volume: f64) -> Result<Balancing> {
        let solver = self.neck.solver();
        let n = solver.n();
        let m = outer.m();
        if m + 1 != n {
            return Err(Error::InvalidDimensions("balancing needs m = n - 1".into()));
        }
        let scale = self.eps.powi(n as i32 - 1);
        let sphere = sphere_volume(n - 1);
        let mut locations = Vec::new();
        let mut fluxes = Vec::new();
        for s in [0.0, 0.5 * self.neck.s_eps] {
            locations.push(format!("neck s = {s:.6}"));
            fluxes.push(self.neck.vertical_flux(s)?);
        }
        let cells = outer.grid.counts[0];
        for frac in [0.5, 0.9] {
            let i = ((frac * (cells - 1) as f64).round() as usize).clamp(1, cells - 2);
            locations.push(format!("wall r1 = {:.6}", i as f64 * outer.grid.steps[0]));
            fluxes.push(outer.wall_flux(&self.outer.u, i)?);
        }
        let f0 = fluxes[0];
        let spread = fluxes.iter().map(|f| (f - f0).abs() / f0.abs()).fold(0.0, f64::max);
        let unperturbed = solver.solve(&vec![0.0; solver.basis.len()], self.eps, self.neck.rho)?;
        let control = unperturbed.vertical_flux(0.0)? / (scale * sphere);
        let c = self.c_eps();
        Ok(Balancing {
            eps: self.eps,
            locations,
            fluxes,
            spread,
            slope_ratio: c / scale,
            predicted_ratio: sphere / (2.0 * volume),
            identity_defect: (2.0 * volume * c - f0).abs() / f0.abs(),
            catenoid_control: control,
        })
    }

    /// Mean curvature at fixed samples: neck points `s = s_ε (j + ½)/8`
    /// over a subset of sphere nodes (step `neck_eta`), and outer points on
    /// the lattice `(i + ⅓) ρ/4` away from the ball and the far face (step
    /// `outer_eta`).
    pub fn curvature_residual(&self, outer: &OuterSolver, neck_eta: f64, outer_eta: f64) -> Result<CurvatureResidual> {
        let basis = self.neck.solver().basis;
        let mut neck_max = 0.0f64;
        let mut neck_samples = 0;
        for j in 0..8 {
            let s = self.neck.s_eps * (j as f64 + 0.5) / 8.0;
            for theta in basis.nodes().iter().step_by(9) {
                neck_max = neck_max.max(self.neck.mean_curvature(s, theta, neck_eta)?.abs());
                neck_samples += 1;
            }
        }
        let grid = &outer.grid;
        let rho = grid.rho;
        let spacing = rho / 4.0;
        let dim = grid.dim();
        let limits: Vec<f64> =
            (0..dim).map(|d| if d == 0 { 0.8 * grid.r_max } else { 0.5 * grid.sides[d - 1] }).collect();
        let counts: Vec<usize> = limits.iter().map(|l| (l / spacing - 1.0 / 3.0).floor() as usize + 1).collect();
        let mut outer_max = 0.0f64;
        let mut outer_samples = 0;
        let mut idx = vec![0usize; dim];
        'points: loop {
            let x: Vec<f64> = idx.iter().map(|i| (*i as f64 + 1.0 / 3.0) * spacing).collect();
            let r = l2(&x);
            if r >= 1.5 * rho && x.iter().zip(&limits).all(|(a, l)| *a < *l) {
                if let Some(hc) = outer.graph_mean_curvature(&self.outer.u, &x, outer_eta) {
                    outer_max = outer_max.max(hc.abs());
                    outer_samples += 1;
                }
            }
            let mut d = 0;
            loop {
                if d == dim {
                    break 'points;
                }
                idx[d] += 1;
                if idx[d] < counts[d] {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
        Ok(CurvatureResidual { neck: neck_max, outer: outer_max, neck_samples, outer_samples })
    }

    /// Section of the glued surface by the 3-space spanned by the first
    /// `ℝ^{n-m}` axis, the first torus axis and the height, over one torus
    /// cell `|x₁| ≤ R₁`, `|y₁| ≤ a₁/2`. Built on the quadrant `x₁, y₁ ≥ 0`,
    /// `z ≥ 0` and completed by reflections.
    pub fn section_mesh(&self, outer: &OuterSolver, angular: usize, radial: usize) -> Result<Mesh> {
        let solver = self.neck.solver();
        let n = solver.n();
        let k = n - outer.m();
        let grid = &outer.grid;
        let (r_far, half) = (grid.r_max, 0.5 * grid.sides[0]);
        let c = self.eps * solver.profile.c_inf();
        let theta_at = |t: f64| {
            let mut th = vec![0.0; n];
            th[0] = t.cos();
            th[k] = t.sin();
            th
        };
        let ts: Vec<f64> = (0..=angular).map(|j| 0.5 * std::f64::consts::PI * j as f64 / angular as f64).collect();

        // neck rows s = 0 .. s_ε
        let mut pts = Vec::with_capacity((radial + 1) * (angular + 1));
        for i in 0..=radial {
            let s = self.neck.s_eps * i as f64 / radial as f64;
            for t in &ts {
                let p = self.neck.point(s, &theta_at(*t))?;
                pts.push([p[0], p[k], p[n]]);
            }
        }
        let neck_rim: Vec<[f64; 3]> = pts[radial * (angular + 1)..].to_vec();
        let mut quadrant = Mesh::grid(radial + 1, angular + 1, pts);

        // outer patch: inner ring at the neck rim, outer ring on the box faces
        let first = r_far;
        let total = r_far + half;
        let corner = ((first / total) * angular as f64).round() as usize;
        let far_point = |j: usize| -> [f64; 2] {
            if j <= corner {
                let f = if corner == 0 { 1.0 } else { j as f64 / corner as f64 };
                [r_far, f * half]
            } else {
                let f = (j - corner) as f64 / (angular - corner) as f64;
                [r_far * (1.0 - f), half]
            }
        };
        let mut pts = Vec::with_capacity((radial + 1) * (angular + 1));
        for i in 0..=radial {
            let q = (i as f64 / radial as f64).powf(1.5);
            for (j, t) in ts.iter().enumerate() {
                if i == 0 {
                    pts.push(neck_rim[j]);
                    continue;
                }
                let inner = [self.neck.rho * t.cos(), self.neck.rho * t.sin()];
                let outer_pt = far_point(j);
                let x = [inner[0] + q * (outer_pt[0] - inner[0]), inner[1] + q * (outer_pt[1] - inner[1])];
                let mut reduced = vec![0.0; grid.dim()];
                reduced[0] = x[0];
                reduced[1] = x[1];
                let u = outer.local_fit(&self.outer.u, &reduced)?.value;
                pts.push([x[0], x[1], c + u]);
            }
        }
        quadrant.append(&Mesh::grid(radial + 1, angular + 1, pts));
        quadrant.weld(1e-12);

        let mut half_x = quadrant.clone();
        half_x.append(&quadrant.reflected(0));
        let mut cell = half_x.clone();
        cell.append(&half_x.reflected(1));
        let mut full = cell.clone();
        full.append(&cell.reflected(2));
        full.weld(1e-9);
        Ok(full)
    }

    /// Largest defect of the section mesh under its reflections and the
    /// period translation, together with the neck's own symmetry defect.
    pub fn symmetry_defect(&self, mesh: &Mesh, period: f64) -> Result<f64> {
        let mut worst = self.neck.symmetry_defect()?;
        for axis in 0..3 {
            worst = worst.max(mesh.symmetry_defect(|mut p| {
                p[axis] = -p[axis];
                p
            }));
        }
        let half = 0.5 * period;
        let lo = mesh.vertices_on(1, -half, 1e-9);
        let hi = mesh.vertices_on(1, half, 1e-9);
        if lo.len() != hi.len() {
            return Err(Error::Symmetry("period faces carry different vertex counts".into()));
        }
        let shifted = Mesh { vertices: hi.clone(), faces: Vec::new() };
        for p in &lo {
            let q = [p[0], p[1] + period, p[2]];
            let d = shifted.vertices.iter().map(|r| l2(&[r[0] - q[0], r[1] - q[1], r[2] - q[2]])).fold(f64::INFINITY, f64::min);
            worst = worst.max(d);
        }
        Ok(worst)
    }
}

/// Machine-readable summary of one glued surface.
#[derive(Debug, Clone, Serialize)]
pub struct GlueReport {
    pub c_eps: f64,
    pub d_eps: f64,
    pub residuals: Residuals,
    pub contraction: Contraction,
    pub balancing: Option<Balancing>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Residuals {
    pub eps: f64,
    pub dirichlet: f64,
    pub neumann: f64,
    pub interface: InterfaceGap,
    pub neck_equation: f64,
    pub outer_equation: f64,
    pub mean_curvature: CurvatureResidual,
    pub symmetry: f64,
    pub boundary_edges_off_faces: usize,
}

/// Boundary edges of the section mesh that do not lie on the box faces
/// `|x₁| = R₁` or `|y₁| = a₁/2`; zero for a watertight cell.
pub fn stray_boundary_edges(mesh: &Mesh, r_far: f64, half: f64) -> usize {
    mesh.boundary_edges()
        .iter()
        .filter(|(a, b)| {
            let (p, q) = (mesh.vertices[*a], mesh.vertices[*b]);
            let on = |axis: usize, v: f64| (p[axis].abs() - v).abs() < 1e-9 && (q[axis].abs() - v).abs() < 1e-9;
            !(on(0, r_far) || on(1, half))
        })
        .count()
}

/// Runs the matching for one `ε` and collects the report and section mesh.
pub fn glue(problem: &GluingProblem, neck: &NeckSolver<'_>, outer: &OuterSolver, eps: f64) -> Result<(GlueReport, Mesh)> {
    let p = &problem.params;
    let matched = match_boundary(neck, outer, eps, p.match_tol, p.max_iter, p.anderson_depth)?;
    report(problem, outer, &matched)
}

/// Report and section mesh of a matched surface.
pub fn report(problem: &GluingProblem, outer: &OuterSolver, matched: &Matched<'_>) -> Result<(GlueReport, Mesh)> {
    let grid = &outer.grid;
    let mesh = matched.section_mesh(outer, 24, 24)?;
    let symmetry = matched.symmetry_defect(&mesh, grid.sides[0])?;
    let hmin = grid.steps.iter().cloned().fold(f64::INFINITY, f64::min);
    let residuals = Residuals {
        eps: matched.eps,
        dirichlet: matched.mismatch.dirichlet,
        neumann: matched.mismatch.neumann,
        interface: matched.interface_gap(outer)?,
        neck_equation: matched.neck.report.residual,
        outer_equation: matched.outer.residual,
        mean_curvature: matched.curvature_residual(outer, 1e-3, hmin / 8.0)?,
        symmetry,
        boundary_edges_off_faces: stray_boundary_edges(&mesh, grid.r_max, 0.5 * grid.sides[0]),
    };
    let balancing = if problem.m() + 1 == problem.n { Some(matched.balancing(outer, problem.lattice.volume())?) } else { None };
    Ok((
        GlueReport {
            c_eps: matched.c_eps(),
            d_eps: matched.d_eps(),
            residuals,
            contraction: matched.contraction.clone(),
            balancing,
        },
        mesh,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem() -> GluingProblem {
        let lattice = Lattice::rectangular(&[1.0, 1.0]).unwrap().normalize_volume();
        let mut params = GluingParams::defaults(&lattice, 3).unwrap();
        params.l_max = 4;
        params.neck.ds_max = 2e-2;
        params.neck.chart_step = 2e-2;
        GluingProblem::new(3, lattice, params).unwrap()
    }

    #[test]
    fn matching_converges_and_mesh_is_closed_up_to_the_cell_faces() {
        let problem = problem();
        let neck = problem.neck_solver().unwrap();
        let outer = problem.outer_solver().unwrap();
        let eps = 0.1;
        let matched = match_boundary(&neck, &outer, eps, 1e-9, 60, 5).unwrap();
        assert!(matched.mismatch.dirichlet <= 1e-9 * eps);
        assert!(matched.mismatch.neumann <= 1e-9 * eps);
        assert!(matched.contraction.g_norm <= matched.contraction.bound);
        let gap = matched.interface_gap(&outer).unwrap();
        assert!(gap.c0 < 1e-8, "{gap:?}");
        let (report, mesh) = report(&problem, &outer, &matched).unwrap();
        assert!(mesh.is_manifold());
        assert_eq!(report.residuals.boundary_edges_off_faces, 0);
        assert!(report.residuals.symmetry < 1e-10, "{}", report.residuals.symmetry);
        let bal = report.balancing.unwrap();
        assert!(bal.slope_ratio > 0.0);
        assert!((bal.catenoid_control - 1.0).abs() < 1e-2, "{bal:?}");
    }
}
