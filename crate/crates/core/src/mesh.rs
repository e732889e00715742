//! Triangulations of `[-1, 1]²` aligned with the four quadrant subdomains,
//! refined by newest-vertex bisection.
//!
//! Every triangle is stored counterclockwise as `(v0, v1, v2)` where `v0` is
//! its newest vertex. The refinement edge is therefore always local edge 0,
//! the edge `(v1, v2)` opposite `v0`. Local edge `i` is opposite vertex `i`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Vec2;

/// Quadrant label of a point: 1 = (+,+), 2 = (−,+), 3 = (−,−), 4 = (+,−).
pub fn quadrant(p: Vec2) -> u8 {
    match (p.x >= 0.0, p.y >= 0.0) {
        (true, true) => 1,
        (false, true) => 2,
        (false, false) => 3,
        (true, false) => 4,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    pub v: [usize; 3],
    pub label: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    /// Endpoints with `v[0] < v[1]`; the global tangent points from `v[0]` to `v[1]`.
    pub v: [usize; 2],
    /// Incident `(triangle, local edge)` pairs; the second is absent on ∂Ω.
    pub tris: [Option<(usize, usize)>; 2],
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.tris[1].is_none()
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Vec2>,
    pub triangles: Vec<Triangle>,
    pub edges: Vec<Edge>,
    /// Global edge index of each local edge.
    pub tri_edges: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub vertices: [Vec2; 3],
    pub area: f64,
    /// Outward unit normal of each local edge.
    pub normals: [Vec2; 3],
    pub lengths: [f64; 3],
    /// Longest edge.
    pub diameter: f64,
}

impl ElementGeometry {
    pub fn from_vertices(vertices: [Vec2; 3]) -> Self {
        let [a, b, c] = vertices;
        let area = 0.5 * (b - a).cross(c - a);
        let mut normals = [Vec2::ZERO; 3];
        let mut lengths = [0.0; 3];
        for i in 0..3 {
            let t = vertices[(i + 2) % 3] - vertices[(i + 1) % 3];
            lengths[i] = t.norm();
            normals[i] = Vec2::new(t.y, -t.x) * (1.0 / lengths[i]);
        }
        let diameter = lengths.iter().copied().fold(0.0, f64::max);
        Self { vertices, area, normals, lengths, diameter }
    }

    pub fn point(&self, lam: [f64; 3]) -> Vec2 {
        self.vertices[0] * lam[0] + self.vertices[1] * lam[1] + self.vertices[2] * lam[2]
    }

    /// Gradient of the barycentric coordinate `λ_i`.
    pub fn grad_lambda(&self, i: usize) -> Vec2 {
        self.normals[i] * (-self.lengths[i] / (2.0 * self.area))
    }

    /// Smallest interior angle in radians.
    pub fn min_angle(&self) -> f64 {
        (0..3)
            .map(|i| {
                let p = self.vertices[i];
                let u = self.vertices[(i + 1) % 3] - p;
                let w = self.vertices[(i + 2) % 3] - p;
                u.cross(w).atan2(u.dot(w))
            })
            .fold(f64::INFINITY, f64::min)
    }
}

impl Mesh {
    /// Builds the edge structure from vertices and counterclockwise triangles.
    pub fn from_parts(vertices: Vec<Vec2>, triangles: Vec<Triangle>) -> Self {
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut edges: Vec<Edge> = Vec::with_capacity(triangles.len() * 3 / 2 + 8);
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (k, t) in triangles.iter().enumerate() {
            let mut te = [0; 3];
            for (i, slot) in te.iter_mut().enumerate() {
                let a = t.v[(i + 1) % 3];
                let b = t.v[(i + 2) % 3];
                let key = (a.min(b), a.max(b));
                let e = *lookup.entry(key).or_insert_with(|| {
                    edges.push(Edge { v: [key.0, key.1], tris: [None, None] });
                    edges.len() - 1
                });
                let edge = &mut edges[e];
                if edge.tris[0].is_none() {
                    edge.tris[0] = Some((k, i));
                } else {
                    edge.tris[1] = Some((k, i));
                }
                *slot = e;
            }
            tri_edges.push(te);
        }
        Self { vertices, triangles, edges, tri_edges }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn geometry(&self, k: usize) -> ElementGeometry {
        let t = &self.triangles[k];
        ElementGeometry::from_vertices([self.vertices[t.v[0]], self.vertices[t.v[1]], self.vertices[t.v[2]]])
    }

    pub fn try_geometry(&self, k: usize) -> Result<ElementGeometry> {
        if k >= self.triangles.len() {
            return Err(Error::TriangleIndex(k));
        }
        Ok(self.geometry(k))
    }

    pub fn centroid(&self, k: usize) -> Vec2 {
        let t = &self.triangles[k];
        (self.vertices[t.v[0]] + self.vertices[t.v[1]] + self.vertices[t.v[2]]) * (1.0 / 3.0)
    }

    /// Global index of the refinement edge of triangle `k`.
    pub fn refinement_edge(&self, k: usize) -> usize {
        self.tri_edges[k][0]
    }

    /// Orientation sign of local edge `i` of triangle `k`: `+1` if the outward
    /// normal agrees with the global edge normal.
    pub fn edge_sign(&self, k: usize, i: usize) -> f64 {
        let t = &self.triangles[k];
        if t.v[(i + 1) % 3] < t.v[(i + 2) % 3] {
            1.0
        } else {
            -1.0
        }
    }

    /// Local index of the vertex sitting at the origin, if any.
    pub fn origin_corner(&self, k: usize) -> Option<usize> {
        self.triangles[k].v.iter().position(|&v| self.vertices[v].norm() < 1e-14)
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        let p = self.vertices[v];
        on_boundary(p)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|k| self.geometry(k).area).sum()
    }

    pub fn min_angle(&self) -> f64 {
        (0..self.num_triangles()).map(|k| self.geometry(k).min_angle()).fold(f64::INFINITY, f64::min)
    }

    pub fn max_diameter(&self) -> f64 {
        (0..self.num_triangles()).map(|k| self.geometry(k).diameter).fold(0.0, f64::max)
    }

    /// Newest-vertex bisection of the marked triangles plus the conforming closure.
    pub fn bisect(&self, marked: &[usize]) -> Result<Mesh> {
        let nt = self.num_triangles();
        if let Some(&bad) = marked.iter().find(|&&k| k >= nt) {
            return Err(Error::TriangleIndex(bad));
        }
        if marked.is_empty() {
            return Ok(self.clone());
        }
        let mut edge_marked = vec![false; self.num_edges()];
        for &k in marked {
            edge_marked[self.refinement_edge(k)] = true;
        }
        // closure: a triangle with any marked edge must also split its refinement edge
        let max_sweeps = nt + 2;
        let mut sweeps = 0;
        loop {
            let mut changed = false;
            for k in 0..nt {
                let te = self.tri_edges[k];
                if !edge_marked[te[0]] && (edge_marked[te[1]] || edge_marked[te[2]]) {
                    edge_marked[te[0]] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            sweeps += 1;
            if sweeps > max_sweeps {
                return Err(Error::ClosureDepth(sweeps));
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        for (e, edge) in self.edges.iter().enumerate() {
            if edge_marked[e] {
                let m = (vertices[edge.v[0]] + vertices[edge.v[1]]) * 0.5;
                vertices.push(m);
                midpoints.insert((edge.v[0], edge.v[1]), vertices.len() - 1);
            }
        }

        let mut triangles = Vec::with_capacity(nt + 2 * midpoints.len());
        for t in &self.triangles {
            split(*t, &midpoints, &mut triangles, 0)?;
        }
        Ok(Mesh::from_parts(vertices, triangles))
    }

    /// Bisects every triangle once.
    pub fn refine_uniform(&self) -> Result<Mesh> {
        let all: Vec<usize> = (0..self.num_triangles()).collect();
        self.bisect(&all)
    }

    /// Checks orientation, edge incidence, conformity and subdomain alignment.
    pub fn audit(&self) -> std::result::Result<(), String> {
        for k in 0..self.num_triangles() {
            let g = self.geometry(k);
            if g.area <= 0.0 {
                return Err(format!("triangle {k} has non-positive area {}", g.area));
            }
            let c = self.centroid(k);
            if quadrant(c) != self.triangles[k].label {
                return Err(format!("triangle {k} labelled {} but centroid in quadrant {}", self.triangles[k].label, quadrant(c)));
            }
            // alignment: no vertex strictly on the other side of an axis
            let t = &self.triangles[k];
            for &v in &t.v {
                let p = self.vertices[v];
                if p.x * c.x < -1e-14 || p.y * c.y < -1e-14 {
                    return Err(format!("triangle {k} straddles an interface"));
                }
            }
        }
        let mut count = vec![0usize; self.num_edges()];
        for te in &self.tri_edges {
            for &e in te {
                count[e] += 1;
            }
        }
        for (e, edge) in self.edges.iter().enumerate() {
            let on_bdry = on_boundary(self.vertices[edge.v[0]])
                && on_boundary(self.vertices[edge.v[1]])
                && same_side(self.vertices[edge.v[0]], self.vertices[edge.v[1]]);
            match (count[e], on_bdry) {
                (1, true) | (2, false) => {}
                (c, b) => return Err(format!("edge {e} has {c} incident triangles (boundary: {b})")),
            }
        }
        let area = self.total_area();
        if (area - 4.0).abs() > 1e-10 {
            return Err(format!("total area {area} differs from 4"));
        }
        Ok(())
    }

    /// Plain-text export: vertex count, `x y` lines, triangle count, `v0 v1 v2 label` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{}", self.num_vertices()).unwrap();
        for p in &self.vertices {
            writeln!(s, "{:.17e} {:.17e}", p.x, p.y).unwrap();
        }
        writeln!(s, "{}", self.num_triangles()).unwrap();
        for t in &self.triangles {
            writeln!(s, "{} {} {} {}", t.v[0], t.v[1], t.v[2], t.label).unwrap();
        }
        s
    }

    /// Reads the plain-text format written by [`Mesh::to_text`].
    pub fn from_text(text: &str) -> Result<Mesh> {
        let bad = |what: &str| Error::Config(format!("malformed mesh text: {what}"));
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let nv: usize = lines.next().and_then(|l| l.parse().ok()).ok_or_else(|| bad("vertex count"))?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = lines.next().ok_or_else(|| bad("vertex line"))?;
            let xy: Vec<f64> = line.split_whitespace().filter_map(|s| s.parse().ok()).collect();
            if xy.len() != 2 {
                return Err(bad(line));
            }
            vertices.push(Vec2::new(xy[0], xy[1]));
        }
        let nt: usize = lines.next().and_then(|l| l.parse().ok()).ok_or_else(|| bad("triangle count"))?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let line = lines.next().ok_or_else(|| bad("triangle line"))?;
            let ids: Vec<usize> = line.split_whitespace().filter_map(|s| s.parse().ok()).collect();
            if ids.len() != 4 || ids[..3].iter().any(|&v| v >= nv) {
                return Err(bad(line));
            }
            triangles.push(Triangle { v: [ids[0], ids[1], ids[2]], label: ids[3] as u8 });
        }
        Ok(Mesh::from_parts(vertices, triangles))
    }

    pub fn write_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Legacy VTK unstructured grid with the subdomain label and optional
    /// per-cell data.
    pub fn write_vtk(&self, path: &Path, cell_data: &[(&str, &[f64])]) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "# vtk DataFile Version 3.0")?;
        writeln!(f, "amfem mesh")?;
        writeln!(f, "ASCII")?;
        writeln!(f, "DATASET UNSTRUCTURED_GRID")?;
        writeln!(f, "POINTS {} double", self.num_vertices())?;
        for p in &self.vertices {
            writeln!(f, "{} {} 0", p.x, p.y)?;
        }
        let nt = self.num_triangles();
        writeln!(f, "CELLS {} {}", nt, 4 * nt)?;
        for t in &self.triangles {
            writeln!(f, "3 {} {} {}", t.v[0], t.v[1], t.v[2])?;
        }
        writeln!(f, "CELL_TYPES {nt}")?;
        for _ in 0..nt {
            writeln!(f, "5")?;
        }
        writeln!(f, "CELL_DATA {nt}")?;
        writeln!(f, "SCALARS label int 1")?;
        writeln!(f, "LOOKUP_TABLE default")?;
        for t in &self.triangles {
            writeln!(f, "{}", t.label)?;
        }
        for (name, values) in cell_data {
            writeln!(f, "SCALARS {name} double 1")?;
            writeln!(f, "LOOKUP_TABLE default")?;
            for v in values.iter() {
                writeln!(f, "{v:e}")?;
            }
        }
        Ok(())
    }
}

fn on_boundary(p: Vec2) -> bool {
    (p.x.abs() - 1.0).abs() < 1e-12 || (p.y.abs() - 1.0).abs() < 1e-12
}

fn same_side(p: Vec2, q: Vec2) -> bool {
    let side = |a: f64, b: f64| (a.abs() - 1.0).abs() < 1e-12 && (b.abs() - 1.0).abs() < 1e-12 && a * b > 0.0;
    side(p.x, q.x) || side(p.y, q.y)
}

fn split(t: Triangle, midpoints: &HashMap<(usize, usize), usize>, out: &mut Vec<Triangle>, depth: usize) -> Result<()> {
    const MAX_DEPTH: usize = 8;
    if depth > MAX_DEPTH {
        return Err(Error::ClosureDepth(depth));
    }
    let [v0, v1, v2] = t.v;
    match midpoints.get(&(v1.min(v2), v1.max(v2))) {
        Some(&m) => {
            split(Triangle { v: [m, v0, v1], label: t.label }, midpoints, out, depth + 1)?;
            split(Triangle { v: [m, v2, v0], label: t.label }, midpoints, out, depth + 1)
        }
        None => {
            out.push(t);
            Ok(())
        }
    }
}

/// Uniform grid of `2n × 2n` squares on `[-1, 1]²`, each cut along a diagonal
/// into two right triangles. Diagonals point toward the origin in every
/// quadrant, so the pattern is symmetric under the axis reflections.
pub fn build_structured_mesh(n: usize) -> Result<Mesh> {
    if n == 0 || n % 2 == 1 {
        return Err(Error::OddMeshSize(n));
    }
    let m = 2 * n;
    let h = 1.0 / n as f64;
    let idx = |i: usize, j: usize| j * (m + 1) + i;
    let mut vertices = Vec::with_capacity((m + 1) * (m + 1));
    for j in 0..=m {
        for i in 0..=m {
            vertices.push(Vec2::new(-1.0 + i as f64 * h, -1.0 + j as f64 * h));
        }
    }
    let mut triangles = Vec::with_capacity(2 * m * m);
    for j in 0..m {
        for i in 0..m {
            let (p00, p10, p01, p11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            let center = Vec2::new(-1.0 + (i as f64 + 0.5) * h, -1.0 + (j as f64 + 0.5) * h);
            let label = quadrant(center);
            // newest vertex = right-angle corner, so the diagonal is the refinement edge
            let pair = if label == 1 || label == 3 {
                [[p10, p11, p00], [p01, p00, p11]]
            } else {
                [[p00, p10, p01], [p11, p01, p10]]
            };
            for v in pair {
                triangles.push(Triangle { v, label });
            }
        }
    }
    Ok(Mesh::from_parts(vertices, triangles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn structured_n2_counts() {
        let m = build_structured_mesh(2).unwrap();
        assert_eq!(m.num_triangles(), 32);
        assert_eq!(m.num_vertices(), 25);
        assert_eq!(m.num_edges(), 56);
        for label in 1..=4u8 {
            assert_eq!(m.triangles.iter().filter(|t| t.label == label).count(), 8);
        }
        for k in 0..m.num_triangles() {
            let c = m.centroid(k);
            assert!(c.x.abs() > 1e-12 && c.y.abs() > 1e-12);
            assert_eq!(quadrant(c), m.triangles[k].label);
        }
        m.audit().unwrap();
    }

    #[test]
    fn structured_n4_area() {
        let m = build_structured_mesh(4).unwrap();
        assert_eq!(m.num_triangles(), 128);
        assert!((m.total_area() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn odd_n_rejected() {
        assert!(matches!(build_structured_mesh(3), Err(Error::OddMeshSize(3))));
        assert!(build_structured_mesh(0).is_err());
    }

    #[test]
    fn initial_refinement_edge_is_longest() {
        let m = build_structured_mesh(4).unwrap();
        for k in 0..m.num_triangles() {
            let g = m.geometry(k);
            assert_eq!(g.lengths[0], g.diameter);
        }
    }

    #[test]
    fn reference_triangle_geometry() {
        let g = ElementGeometry::from_vertices([Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)]);
        assert!((g.area - 0.5).abs() < 1e-15);
        assert!((g.diameter - 2f64.sqrt()).abs() < 1e-15);
        let mut closure = Vec2::ZERO;
        for i in 0..3 {
            assert!((g.normals[i].norm() - 1.0).abs() < 1e-14);
            let mid = (g.vertices[(i + 1) % 3] + g.vertices[(i + 2) % 3]) * 0.5;
            assert!(g.normals[i].dot(g.vertices[i] - mid) < 0.0);
            closure += g.normals[i] * g.lengths[i];
        }
        assert!(closure.norm() < 1e-13);
    }

    #[test]
    fn gradients_of_barycentrics_sum_to_zero() {
        let g = ElementGeometry::from_vertices([Vec2::new(0.1, 0.2), Vec2::new(0.9, 0.3), Vec2::new(0.4, 1.1)]);
        let s = g.grad_lambda(0) + g.grad_lambda(1) + g.grad_lambda(2);
        assert!(s.norm() < 1e-13);
        // λ_1 is 1 at vertex 1 and 0 at vertex 0
        let d = g.grad_lambda(1).dot(g.vertices[1] - g.vertices[0]);
        assert!((d - 1.0).abs() < 1e-13);
    }

    #[test]
    fn empty_marking_keeps_mesh() {
        let m = build_structured_mesh(2).unwrap();
        let r = m.bisect(&[]).unwrap();
        assert_eq!(r.triangles, m.triangles);
        assert_eq!(r.vertices, m.vertices);
    }

    #[test]
    fn single_mark_gives_conforming_mesh() {
        let m = build_structured_mesh(2).unwrap();
        let r = m.bisect(&[5]).unwrap();
        r.audit().unwrap();
        assert!(r.num_triangles() >= m.num_triangles() + 1);
        assert!((r.total_area() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_passes_double_the_count() {
        let mut m = build_structured_mesh(2).unwrap();
        for pass in 1..=3 {
            m = m.refine_uniform().unwrap();
            m.audit().unwrap();
            assert_eq!(m.num_triangles(), 32 << pass);
        }
        assert_eq!(m.num_triangles(), 256);
    }

    #[test]
    fn bad_index_rejected() {
        let m = build_structured_mesh(2).unwrap();
        assert!(matches!(m.bisect(&[32]), Err(Error::TriangleIndex(32))));
    }

    #[test]
    fn text_roundtrip() {
        let m = build_structured_mesh(2).unwrap().bisect(&[0, 7]).unwrap();
        let back = Mesh::from_text(&m.to_text()).unwrap();
        assert_eq!(back.triangles, m.triangles);
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(back.num_edges(), m.num_edges());
    }

    #[test]
    fn vtk_export_writes_cells() {
        let m = build_structured_mesh(2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.vtk");
        let eta = vec![1.0; m.num_triangles()];
        m.write_vtk(&path, &[("eta", &eta)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("CELLS 32 128"));
        assert!(text.contains("SCALARS eta double 1"));
    }

    #[test]
    fn random_adaptive_runs_keep_shape_regularity() {
        let base = build_structured_mesh(2).unwrap();
        let initial = base.min_angle();
        for seed in 0..10u64 {
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let mut m = base.clone();
            for _ in 0..12 {
                let nt = m.num_triangles();
                let count = 1 + nt / 10;
                let marked: Vec<usize> = (0..count).map(|_| rng.random_range(0..nt)).collect();
                m = m.bisect(&marked).unwrap();
                m.audit().unwrap();
            }
            assert!(m.min_angle() >= 0.4 * initial);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn refinement_preserves_invariants(seeds in prop::collection::vec(0usize..10_000, 1..6)) {
            let mut m = build_structured_mesh(2).unwrap();
            for s in seeds {
                let nt = m.num_triangles();
                m = m.bisect(&[s % nt, (s / 7) % nt]).unwrap();
                prop_assert!(m.audit().is_ok());
                prop_assert!((m.total_area() - 4.0).abs() < 1e-10);
                for k in 0..m.num_triangles() {
                    prop_assert_eq!(quadrant(m.centroid(k)), m.triangles[k].label);
                }
            }
        }
    }
}
