//! Polygonal surface meshes in ℝ³ with OBJ input/output, vertex welding and
//! symmetry checks.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Vertices in ℝ³ (height last) and polygonal faces, counter-clockwise
/// seen from the side the normal points to.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<Vec<usize>>,
}

fn key(p: &[f64; 3], tol: f64) -> [i64; 3] {
    [(p[0] / tol).round() as i64, (p[1] / tol).round() as i64, (p[2] / tol).round() as i64]
}

impl Mesh {
    /// Structured quad patch from a row-major `rows × cols` point array.
    pub fn grid(rows: usize, cols: usize, points: Vec<[f64; 3]>) -> Self {
        assert_eq!(points.len(), rows * cols);
        let mut faces = Vec::with_capacity((rows - 1) * (cols - 1));
        for i in 0..rows - 1 {
            for j in 0..cols - 1 {
                let a = i * cols + j;
                faces.push(vec![a, a + cols, a + cols + 1, a + 1]);
            }
        }
        Self { vertices: points, faces }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() || self.faces.is_empty()
    }

    /// Appends another mesh.
    pub fn append(&mut self, other: &Mesh) {
        let offset = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.faces.extend(other.faces.iter().map(|f| f.iter().map(|v| v + offset).collect()));
    }

    /// Image under `p ↦ map(p)`, flipping face orientation when `reverse`.
    pub fn mapped<F: Fn([f64; 3]) -> [f64; 3]>(&self, map: F, reverse: bool) -> Mesh {
        Mesh {
            vertices: self.vertices.iter().map(|p| map(*p)).collect(),
            faces: self
                .faces
                .iter()
                .map(|f| if reverse { f.iter().rev().copied().collect() } else { f.clone() })
                .collect(),
        }
    }

    /// Mirror image in the coordinate plane `axis = 0`.
    pub fn reflected(&self, axis: usize) -> Mesh {
        self.mapped(
            |mut p| {
                p[axis] = -p[axis];
                p
            },
            true,
        )
    }

    /// Merges vertices that agree after rounding to `tol` and drops faces
    /// that collapse.
    pub fn weld(&mut self, tol: f64) {
        let mut index: HashMap<[i64; 3], usize> = HashMap::new();
        let mut remap = Vec::with_capacity(self.vertices.len());
        let mut kept = Vec::new();
        for p in &self.vertices {
            let k = key(p, tol);
            let id = *index.entry(k).or_insert_with(|| {
                kept.push(*p);
                kept.len() - 1
            });
            remap.push(id);
        }
        self.vertices = kept;
        self.faces = self
            .faces
            .iter()
            .filter_map(|f| {
                let mut g: Vec<usize> = Vec::with_capacity(f.len());
                for v in f {
                    let id = remap[*v];
                    if g.last() != Some(&id) && g.first() != Some(&id) {
                        g.push(id);
                    }
                }
                (g.len() >= 3).then_some(g)
            })
            .collect();
    }

    fn edge_counts(&self) -> HashMap<(usize, usize), usize> {
        let mut counts = HashMap::new();
        for f in &self.faces {
            for i in 0..f.len() {
                let (a, b) = (f[i], f[(i + 1) % f.len()]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Edges used by exactly one face.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<_> = self.edge_counts().into_iter().filter(|(_, c)| *c == 1).map(|(e, _)| e).collect();
        edges.sort_unstable();
        edges
    }

    /// No edge is shared by more than two faces.
    pub fn is_manifold(&self) -> bool {
        self.edge_counts().values().all(|c| *c <= 2)
    }

    /// Largest distance from the image of a vertex to the nearest vertex.
    pub fn symmetry_defect<F: Fn([f64; 3]) -> [f64; 3]>(&self, map: F) -> f64 {
        let cell = 1e-6;
        let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in self.vertices.iter().enumerate() {
            buckets.entry(key(p, cell)).or_default().push(i);
        }
        let mut worst = 0.0f64;
        for p in &self.vertices {
            let q = map(*p);
            let k = key(&q, cell);
            let mut best = f64::INFINITY;
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(list) = buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                            for v in list {
                                let r = &self.vertices[*v];
                                let d = ((r[0] - q[0]).powi(2) + (r[1] - q[1]).powi(2) + (r[2] - q[2]).powi(2)).sqrt();
                                best = best.min(d);
                            }
                        }
                    }
                }
            }
            worst = worst.max(best);
        }
        worst
    }

    /// Vertices lying on the plane `axis = value` (within `tol`).
    pub fn vertices_on(&self, axis: usize, value: f64, tol: f64) -> Vec<[f64; 3]> {
        self.vertices.iter().filter(|p| (p[axis] - value).abs() <= tol).copied().collect()
    }

    pub fn to_obj(&self) -> String {
        let mut out = String::with_capacity(64 * (self.vertices.len() + self.faces.len()));
        for p in &self.vertices {
            let _ = writeln!(out, "v {:.17e} {:.17e} {:.17e}", p[0], p[1], p[2]);
        }
        for f in &self.faces {
            out.push('f');
            for v in f {
                let _ = write!(out, " {}", v + 1);
            }
            out.push('\n');
        }
        out
    }

    /// Writes an ASCII OBJ file; empty meshes are rejected before touching
    /// the file system.
    pub fn write_obj(&self, path: &Path) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptySurface);
        }
        std::fs::write(path, self.to_obj())?;
        Ok(())
    }

    pub fn parse_obj(text: &str) -> Result<Mesh> {
        let mut mesh = Mesh::default();
        for (line_no, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let coords: Vec<f64> = parts
                        .map(|t| t.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::InvalidParameter(format!("line {}: {e}", line_no + 1)))?;
                    if coords.len() < 3 {
                        return Err(Error::InvalidParameter(format!("line {}: vertex needs 3 coordinates", line_no + 1)));
                    }
                    mesh.vertices.push([coords[0], coords[1], coords[2]]);
                }
                Some("f") => {
                    let face: Vec<usize> = parts
                        .map(|t| t.split('/').next().unwrap_or("").parse::<usize>().map(|v| v - 1))
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|e| Error::InvalidParameter(format!("line {}: {e}", line_no + 1)))?;
                    mesh.faces.push(face);
                }
                _ => {}
            }
        }
        Ok(mesh)
    }

    pub fn read_obj(path: &Path) -> Result<Mesh> {
        Self::parse_obj(&std::fs::read_to_string(path)?)
    }

    /// Number of distinct closed loops formed by the boundary edges.
    pub fn boundary_loops(&self) -> usize {
        let edges = self.boundary_edges();
        let mut adjacency: HashMap<usize, Vec<usize>> = HashMap::new();
        for (a, b) in &edges {
            adjacency.entry(*a).or_default().push(*b);
            adjacency.entry(*b).or_default().push(*a);
        }
        let mut seen = HashSet::new();
        let mut loops = 0;
        for start in adjacency.keys() {
            if seen.contains(start) {
                continue;
            }
            loops += 1;
            let mut stack = vec![*start];
            while let Some(v) = stack.pop() {
                if seen.insert(v) {
                    stack.extend(adjacency[&v].iter().copied());
                }
            }
        }
        loops
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cylinder(rows: usize, cols: usize) -> Mesh {
        let mut pts = Vec::new();
        for i in 0..rows {
            for j in 0..cols {
                let t = 2.0 * std::f64::consts::PI * j as f64 / (cols - 1) as f64;
                pts.push([t.cos(), t.sin(), i as f64 / (rows - 1) as f64]);
            }
        }
        let mut m = Mesh::grid(rows, cols, pts);
        m.weld(1e-9);
        m
    }

    #[test]
    fn welded_cylinder_has_two_boundary_loops() {
        let m = cylinder(5, 17);
        assert_eq!(m.vertices.len(), 5 * 16);
        assert!(m.is_manifold());
        assert_eq!(m.boundary_loops(), 2);
    }

    #[test]
    fn obj_round_trip_preserves_mesh() {
        let m = cylinder(4, 9);
        let back = Mesh::parse_obj(&m.to_obj()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn empty_mesh_is_not_written() {
        let dir = std::env::temp_dir().join("scherk-empty-mesh.obj");
        let _ = std::fs::remove_file(&dir);
        assert!(matches!(Mesh::default().write_obj(&dir), Err(Error::EmptySurface)));
        assert!(!dir.exists());
    }

    #[test]
    fn reflection_symmetry_is_detected() {
        let mut m = cylinder(3, 9);
        assert!(m.symmetry_defect(|p| [-p[0], p[1], p[2]]) < 1e-12);
        m.vertices[0][0] += 1e-3;
        assert!(m.symmetry_defect(|p| [-p[0], p[1], p[2]]) > 1e-4);
    }
}
