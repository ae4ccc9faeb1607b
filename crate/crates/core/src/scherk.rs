//! Classical singly periodic Scherk surfaces in ℝ³ as the zero set of
//! `F_ε = cos²ε cosh(x₁/cos ε) - sin²ε cosh(z/sin ε) - cos x₂`, with closed-form
//! derivatives. Used as exact ground truth for the curvature machinery and
//! for the blow-down and blow-up limits.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::numerics::{bisect, linear_fit};

/// A smooth function on ℝ³ with analytic first and second derivatives.
pub trait Implicit {
    fn value(&self, p: [f64; 3]) -> f64;
    fn gradient(&self, p: [f64; 3]) -> [f64; 3];
    fn hessian(&self, p: [f64; 3]) -> [[f64; 3]; 3];
}

/// `div(∇F/|∇F|)` at `p`, the mean curvature (sum of principal curvatures)
/// of the level set through `p` with respect to `∇F/|∇F|`.
pub fn level_set_mean_curvature<F: Implicit>(f: &F, p: [f64; 3]) -> Result<f64> {
    let g = f.gradient(p);
    let h = f.hessian(p);
    let g2: f64 = g.iter().map(|v| v * v).sum();
    let norm = g2.sqrt();
    if norm < 1e-12 {
        return Err(Error::Geometry(format!("critical point of F at {p:?}")));
    }
    let trace = h[0][0] + h[1][1] + h[2][2];
    let mut hgg = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            hgg += g[i] * h[i][j] * g[j];
        }
    }
    Ok((trace * g2 - hgg) / (g2 * norm))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Scherk {
    pub eps: f64,
}

impl Scherk {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < std::f64::consts::FRAC_PI_2) {
            return Err(Error::OutOfRange { value: eps, min: 0.0, max: std::f64::consts::FRAC_PI_2 });
        }
        Ok(Self { eps })
    }

    fn cs(&self) -> (f64, f64) {
        (self.eps.cos(), self.eps.sin())
    }

    /// The nonnegative height over `(x₁, x₂)`, or `None` where the surface
    /// has no point above it.
    pub fn solve_z(&self, x1: f64, x2: f64) -> Option<f64> {
        let (c, s) = self.cs();
        let arg = (c * c * (x1 / c).cosh() - x2.cos()) / (s * s);
        (arg >= 1.0 - 1e-14).then(|| s * arg.max(1.0).acosh())
    }

    /// Zero-set samples `(x₁, x₂, ±z)` on a `count × count` grid over
    /// `[-half_width, half_width] × [-π, π)`, skipping empty columns.
    pub fn samples(&self, count: usize, half_width: f64) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(2 * count * count);
        for i in 0..count {
            let x1 = -half_width + 2.0 * half_width * (i as f64 + 0.5) / count as f64;
            for j in 0..count {
                let x2 = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / count as f64;
                if let Some(z) = self.solve_z(x1, x2) {
                    out.push([x1, x2, z]);
                    out.push([x1, x2, -z]);
                }
            }
        }
        out
    }

    /// Largest `|div(∇F/|∇F|)|` over the given points.
    pub fn max_curvature_residual(&self, points: &[[f64; 3]]) -> Result<f64> {
        points.iter().try_fold(0.0f64, |m, p| Ok(m.max(level_set_mean_curvature(self, *p)?.abs())))
    }

    /// Least-squares fit `z ≈ slope·x₁ + offset` of the upper sheet on
    /// `x₁ ∈ [lo, hi]`, averaged over `x₂`.
    pub fn blow_down_fit(&self, lo: f64, hi: f64, count: usize) -> Result<BlowDown> {
        if lo < 10.0 || hi <= lo {
            return Err(Error::InsufficientRange(format!("blow-down fit needs 10 <= lo < hi, got [{lo}, {hi}]")));
        }
        let mut xs = Vec::new();
        let mut zs = Vec::new();
        for i in 0..count {
            let x1 = lo + (hi - lo) * i as f64 / (count - 1) as f64;
            for x2 in [0.0, 0.5 * std::f64::consts::PI, std::f64::consts::PI] {
                let z = self.solve_z(x1, x2).ok_or_else(|| Error::Geometry(format!("no height at x1 = {x1}")))?;
                xs.push(x1);
                zs.push(z);
            }
        }
        let (slope, offset) = linear_fit(&xs, &zs);
        let residual = xs.iter().zip(&zs).map(|(x, z)| (z - slope * x - offset).abs()).fold(0.0, f64::max);
        Ok(BlowDown { slope, offset, residual })
    }

    /// `z - (tan ε |x₁| - 2 sin ε log tan ε)` at `x₂ = 0`.
    pub fn end_deviation(&self, x1: f64) -> Option<f64> {
        let (t, s) = (self.eps.tan(), self.eps.sin());
        self.solve_z(x1, 0.0).map(|z| z - (t * x1.abs() - 2.0 * s * t.ln()))
    }

    /// Largest `|x̃₁² + x̃₂² - cosh² z̃|` for points of the rescaled surface
    /// `x̃ = x / (2 sin ε)` with `|z̃| ≤ z_max`, sampled along rays.
    pub fn blow_up_defect(&self, z_max: f64, rays: usize, heights: usize) -> Result<f64> {
        let scale = 2.0 * self.eps.sin();
        let mut worst = 0.0f64;
        for k in 0..heights {
            let zt = -z_max + 2.0 * z_max * k as f64 / (heights - 1) as f64;
            let target = zt.cosh();
            for a in 0..rays {
                let alpha = 0.5 * std::f64::consts::PI * a as f64 / (rays - 1) as f64;
                let f = |r: f64| self.value([scale * r * alpha.cos(), scale * r * alpha.sin(), scale * zt]);
                let r = bisect(f, 0.5 * target, 2.0 * target, 1e-14)?;
                worst = worst.max((r * r - target * target).abs());
            }
        }
        Ok(worst)
    }

    /// Triangulation of the zero set over `|x₁| ≤ half_width`,
    /// `x₂ ∈ [-π, π]`, `|z| ≤ half_height` by marching tetrahedra on a
    /// `cells`-per-axis grid over `z ≥ 0`, completed by the reflection
    /// `z ↦ -z`; vertices lie on the surface to bisection accuracy and
    /// triangles are oriented along `∇F`.
    pub fn mesh(&self, half_width: f64, half_height: f64, cells: usize) -> Mesh {
        let upper = self.upper_mesh(half_width, half_height, cells);
        let mut mesh = upper.clone();
        mesh.append(&upper.reflected(2));
        mesh.weld(1e-12);
        mesh
    }

    fn upper_mesh(&self, half_width: f64, half_height: f64, cells: usize) -> Mesh {
        let pi = std::f64::consts::PI;
        let lo = [-half_width, -pi, 0.0];
        let step = [2.0 * half_width / cells as f64, 2.0 * pi / cells as f64, half_height / cells as f64];
        let nodes = cells + 1;
        let node_point = |i: usize, j: usize, k: usize| {
            [lo[0] + i as f64 * step[0], lo[1] + j as f64 * step[1], lo[2] + k as f64 * step[2]]
        };
        let id = |i: usize, j: usize, k: usize| (i * nodes + j) * nodes + k;
        let mut values = vec![0.0; nodes * nodes * nodes];
        for i in 0..nodes {
            for j in 0..nodes {
                for k in 0..nodes {
                    values[id(i, j, k)] = self.value(node_point(i, j, k));
                }
            }
        }
        // six tetrahedra around the main diagonal of each cube
        const TETS: [[usize; 4]; 6] =
            [[0, 1, 3, 7], [0, 3, 2, 7], [0, 2, 6, 7], [0, 6, 4, 7], [0, 4, 5, 7], [0, 5, 1, 7]];
        let mut mesh = Mesh::default();
        let mut edge_vertex: HashMap<(usize, usize), usize> = HashMap::new();
        for i in 0..cells {
            for j in 0..cells {
                for k in 0..cells {
                    let corner = |c: usize| (i + (c >> 2 & 1), j + (c >> 1 & 1), k + (c & 1));
                    for tet in TETS {
                        let ids: Vec<usize> = tet
                            .iter()
                            .map(|c| {
                                let (a, b, d) = corner(*c);
                                id(a, b, d)
                            })
                            .collect();
                        let pts: Vec<[f64; 3]> = tet
                            .iter()
                            .map(|c| {
                                let (a, b, d) = corner(*c);
                                node_point(a, b, d)
                            })
                            .collect();
                        let inside: Vec<bool> = ids.iter().map(|p| values[*p] < 0.0).collect();
                        let count = inside.iter().filter(|b| **b).count();
                        if count == 0 || count == 4 {
                            continue;
                        }
                        let mut crossing = |a: usize, b: usize| -> usize {
                            let key = (ids[a].min(ids[b]), ids[a].max(ids[b]));
                            *edge_vertex.entry(key).or_insert_with(|| {
                                let (pa, pb) = (pts[a], pts[b]);
                                let along = |t: f64| [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1]), pa[2] + t * (pb[2] - pa[2])];
                                let t = bisect(|t| self.value(along(t)), 0.0, 1.0, 1e-14).unwrap_or(0.5);
                                mesh.vertices.push(along(t));
                                mesh.vertices.len() - 1
                            })
                        };
                        let (ins, outs): (Vec<usize>, Vec<usize>) = (0..4).partition(|v| inside[*v]);
                        let polygon: Vec<usize> = match (ins.len(), outs.len()) {
                            (1, 3) => outs.iter().map(|o| crossing(ins[0], *o)).collect(),
                            (3, 1) => ins.iter().map(|o| crossing(*o, outs[0])).collect(),
                            _ => vec![
                                crossing(ins[0], outs[0]),
                                crossing(ins[0], outs[1]),
                                crossing(ins[1], outs[1]),
                                crossing(ins[1], outs[0]),
                            ],
                        };
                        let mut tris = vec![[polygon[0], polygon[1], polygon[2]]];
                        if polygon.len() == 4 {
                            tris.push([polygon[0], polygon[2], polygon[3]]);
                        }
                        for mut t in tris {
                            let [a, b, c] = t.map(|v| mesh.vertices[v]);
                            let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
                            let w = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
                            let nrm = [u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0]];
                            let area2 = nrm.iter().map(|v| v * v).sum::<f64>();
                            if area2 < 1e-30 {
                                continue;
                            }
                            let centre = [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0, (a[2] + b[2] + c[2]) / 3.0];
                            let g = self.gradient(centre);
                            if nrm[0] * g[0] + nrm[1] * g[1] + nrm[2] * g[2] < 0.0 {
                                t.swap(1, 2);
                            }
                            mesh.faces.push(t.to_vec());
                        }
                    }
                }
            }
        }
        mesh
    }
}

impl Implicit for Scherk {
    fn value(&self, p: [f64; 3]) -> f64 {
        let (c, s) = self.cs();
        c * c * (p[0] / c).cosh() - s * s * (p[2] / s).cosh() - p[1].cos()
    }

    fn gradient(&self, p: [f64; 3]) -> [f64; 3] {
        let (c, s) = self.cs();
        [c * (p[0] / c).sinh(), p[1].sin(), -s * (p[2] / s).sinh()]
    }

    fn hessian(&self, p: [f64; 3]) -> [[f64; 3]; 3] {
        let (c, s) = self.cs();
        [[(p[0] / c).cosh(), 0.0, 0.0], [0.0, p[1].cos(), 0.0], [0.0, 0.0, -(p[2] / s).cosh()]]
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BlowDown {
    pub slope: f64,
    pub offset: f64,
    /// Largest deviation of the samples from the fitted line.
    pub residual: f64,
}

/// Summary written by the `scherk3d` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct ScherkReport {
    pub eps: f64,
    pub samples: usize,
    pub max_curvature_residual: f64,
    pub blow_down: BlowDown,
    pub expected_slope: f64,
    pub expected_offset: f64,
    pub mesh_vertices: usize,
    pub mesh_faces: usize,
}

pub fn report(eps: f64, mesh: &Mesh) -> Result<ScherkReport> {
    let s = Scherk::new(eps)?;
    let samples = s.samples(100, 3.0);
    Ok(ScherkReport {
        eps,
        samples: samples.len(),
        max_curvature_residual: s.max_curvature_residual(&samples)?,
        blow_down: s.blow_down_fit(20.0, 30.0, 41)?,
        expected_slope: eps.tan(),
        expected_offset: -2.0 * eps.sin() * eps.tan().ln(),
        mesh_vertices: mesh.vertices.len(),
        mesh_faces: mesh.faces.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct Sphere(f64);

    impl Implicit for Sphere {
        fn value(&self, p: [f64; 3]) -> f64 {
            p[0] * p[0] + p[1] * p[1] + p[2] * p[2] - self.0 * self.0
        }
        fn gradient(&self, p: [f64; 3]) -> [f64; 3] {
            [2.0 * p[0], 2.0 * p[1], 2.0 * p[2]]
        }
        fn hessian(&self, _: [f64; 3]) -> [[f64; 3]; 3] {
            [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]]
        }
    }

    struct Plane;

    impl Implicit for Plane {
        fn value(&self, p: [f64; 3]) -> f64 {
            p[2]
        }
        fn gradient(&self, _: [f64; 3]) -> [f64; 3] {
            [0.0, 0.0, 1.0]
        }
        fn hessian(&self, _: [f64; 3]) -> [[f64; 3]; 3] {
            [[0.0; 3]; 3]
        }
    }

    #[test]
    fn reference_level_sets() {
        assert_eq!(level_set_mean_curvature(&Plane, [0.3, -1.0, 0.0]).unwrap(), 0.0);
        let r = 1.7;
        let p = [r * 0.6, r * 0.8, 0.0];
        assert!((level_set_mean_curvature(&Sphere(r), p).unwrap() - 2.0 / r).abs() < 1e-10);
    }

    #[test]
    fn diagonal_case_gives_cone_over_x1() {
        let s = Scherk::new(std::f64::consts::FRAC_PI_4).unwrap();
        for x1 in [-2.0, -0.3, 0.7, 3.0] {
            let z = s.solve_z(x1, std::f64::consts::FRAC_PI_2).unwrap();
            assert!((z - f64::abs(x1)).abs() < 1e-10, "{x1} {z}");
        }
        // acosh has a square-root singularity at 1, so rounding is amplified
        assert!(s.solve_z(0.0, std::f64::consts::FRAC_PI_2).unwrap() < 1e-7);
    }

    #[test]
    fn no_height_where_the_surface_is_absent() {
        let s = Scherk::new(0.3).unwrap();
        assert!(s.solve_z(0.0, 0.0).is_none());
    }

    #[test]
    fn derivatives_match_central_differences() {
        let s = Scherk::new(0.7).unwrap();
        let p = [0.4, 1.1, -0.3];
        let h = 1e-5;
        let g = s.gradient(p);
        let hess = s.hessian(p);
        for i in 0..3 {
            let mut a = p;
            let mut b = p;
            a[i] += h;
            b[i] -= h;
            assert!(((s.value(a) - s.value(b)) / (2.0 * h) - g[i]).abs() < 1e-8);
            let ga = s.gradient(a);
            let gb = s.gradient(b);
            for j in 0..3 {
                assert!(((ga[j] - gb[j]) / (2.0 * h) - hess[i][j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn blow_down_matches_planar_ends() {
        for eps in [0.3, 0.7] {
            let fit = Scherk::new(eps).unwrap().blow_down_fit(20.0, 30.0, 41).unwrap();
            assert!((fit.slope - eps.tan()).abs() < 1e-6);
            assert!((fit.offset + 2.0 * eps.sin() * eps.tan().ln()).abs() < 1e-4);
        }
        assert!(Scherk::new(0.3).unwrap().blow_down_fit(2.0, 5.0, 5).is_err());
    }

    #[test]
    fn end_deviation_decays_exponentially() {
        let s = Scherk::new(0.5).unwrap();
        let xs: Vec<f64> = (0..9).map(|i| 2.0 + i as f64).collect();
        let logs: Vec<f64> = xs.iter().map(|x| s.end_deviation(*x).unwrap().abs().ln()).collect();
        let (rate, _) = linear_fit(&xs, &logs);
        assert!(rate < -0.5, "{rate}");
    }

    #[test]
    fn blow_up_approaches_catenoid_quadratically() {
        let d: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|e| Scherk::new(*e).unwrap().blow_up_defect(1.0, 9, 9).unwrap()).collect();
        for w in d.windows(2) {
            let ratio = w[1] / w[0];
            assert!((0.18..=0.32).contains(&ratio), "{d:?}");
        }
    }

    #[test]
    fn sheets_flatten_away_from_the_axis() {
        let heights: Vec<f64> = [0.2, 0.05, 0.0125]
            .iter()
            .map(|e| {
                let s = Scherk::new(*e).unwrap();
                [(1.0, 0.5), (2.0, 2.0), (0.5, 3.0)].iter().map(|(a, b)| s.solve_z(*a, *b).unwrap()).fold(0.0, f64::max)
            })
            .collect();
        assert!(heights[2] < heights[1] && heights[1] < heights[0] && heights[2] < 0.2 * heights[0], "{heights:?}");
    }

    #[test]
    fn mesh_is_a_manifold_with_periodic_boundary() {
        let s = Scherk::new(0.6).unwrap();
        let mesh = s.mesh(3.0, 3.0, 24);
        assert!(!mesh.is_empty());
        assert!(mesh.is_manifold());
        for p in &mesh.vertices {
            assert!(s.value(*p).abs() < 1e-10);
        }
        let pi = std::f64::consts::PI;
        for (a, b) in mesh.boundary_edges() {
            let (p, q) = (mesh.vertices[a], mesh.vertices[b]);
            let on = |axis: usize, v: f64| (p[axis].abs() - v).abs() < 1e-9 && (q[axis].abs() - v).abs() < 1e-9;
            assert!(on(0, 3.0) || on(1, pi) || on(2, 3.0), "{p:?} {q:?}");
        }
        assert!(mesh.symmetry_defect(|p| [p[0], p[1], -p[2]]) < 1e-10);
    }

    proptest! {
        #[test]
        fn zero_set_is_minimal(eps in 0.1f64..1.4, x1 in -3.0f64..3.0, x2 in -3.1f64..3.1) {
            let s = Scherk::new(eps).unwrap();
            if let Some(z) = s.solve_z(x1, x2) {
                let p = [x1, x2, z];
                prop_assert!(s.value(p).abs() < 1e-10 * (1.0 + (x1 / eps.cos()).cosh()));
                if s.gradient(p).iter().map(|v| v * v).sum::<f64>() > 1e-6 {
                    prop_assert!(level_set_mean_curvature(&s, p).unwrap().abs() < 1e-8);
                }
            }
        }

        #[test]
        fn function_is_even_and_periodic(eps in 0.1f64..1.4, x1 in -3.0f64..3.0, x2 in -3.0f64..3.0, z in -2.0f64..2.0) {
            let s = Scherk::new(eps).unwrap();
            let f = s.value([x1, x2, z]);
            prop_assert_eq!(f, s.value([-x1, x2, z]));
            prop_assert_eq!(f, s.value([x1, -x2, z]));
            prop_assert_eq!(f, s.value([x1, x2, -z]));
            prop_assert!((f - s.value([x1, x2 + 2.0 * std::f64::consts::PI, z])).abs() < 1e-12);
        }
    }
}
