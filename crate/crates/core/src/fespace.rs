//! Finite element spaces: row-wise RT₀ and BDM₁ for the stress, continuous
//! vector P₁ and P₂ for the velocity.
//!
//! H(div) degrees of freedom live on edges. The global functionals use the
//! global edge orientation (tangent from the lower to the higher vertex index,
//! normal `(t_y, −t_x)`):
//!
//! * moment 0: the mean normal flux `|e|⁻¹ ∫_e τ·n`,
//! * moment 1 (BDM₁ only): `3|e|⁻¹ ∫_e τ·n (2s − 1)` with `s ∈ [0, 1]` along the tangent.
//!
//! Local basis functions follow the local edge orientation; flipping it changes
//! the sign of moment 0 and leaves moment 1 unchanged, so only moment 0 carries
//! an orientation sign.
//!
//! Tensor DOFs are numbered `row · n_scalar + scalar_dof`, vector DOFs
//! `component · n_scalar + scalar_dof`. Local numbering follows the same
//! pattern.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::mesh::{ElementGeometry, Mesh};
use crate::quadrature::{gauss_legendre, graded_rule, quadrature, singular_line_rule, LineRule, QuadratureRule};
use crate::tensor::{Tensor2, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    RT0Tensor,
    BDM1Tensor,
    P1Vector,
    P2Vector,
}

impl Family {
    pub fn is_tensor(self) -> bool {
        matches!(self, Family::RT0Tensor | Family::BDM1Tensor)
    }

    /// Number of scalar (per row / per component) basis functions on a triangle.
    pub fn scalar_local(self) -> usize {
        match self {
            Family::RT0Tensor | Family::P1Vector => 3,
            Family::BDM1Tensor | Family::P2Vector => 6,
        }
    }

    pub fn n_local(self) -> usize {
        2 * self.scalar_local()
    }

    /// Polynomial degree of the basis functions.
    pub fn degree(self) -> usize {
        match self {
            Family::RT0Tensor | Family::P1Vector | Family::BDM1Tensor => 1,
            Family::P2Vector => 2,
        }
    }
}

/// Piecewise-constant viscosity, one value per quadrant label 1..=4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viscosity {
    pub values: [f64; 4],
}

impl Viscosity {
    pub fn new(values: [f64; 4]) -> Result<Self> {
        if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Config(format!("viscosities must be positive, got {values:?}")));
        }
        Ok(Self { values })
    }

    pub fn uniform(nu: f64) -> Self {
        Self { values: [nu; 4] }
    }

    /// `ν₁ = ν₃ = nu1`, `ν₂ = ν₄ = 1`.
    pub fn checkerboard(nu1: f64) -> Self {
        Self { values: [nu1, 1.0, nu1, 1.0] }
    }

    pub fn get(&self, label: u8) -> f64 {
        self.values[(label - 1) as usize]
    }

    pub fn on(&self, mesh: &Mesh, k: usize) -> f64 {
        self.get(mesh.triangles[k].label)
    }
}

#[derive(Debug, Clone)]
pub struct DofMap {
    pub family: Family,
    pub n_dofs: usize,
    /// DOFs per row (tensor) or per component (vector).
    pub n_scalar: usize,
    pub n_local: usize,
    dofs: Vec<usize>,
    signs: Vec<f64>,
    /// Boundary flags per global DOF; always false for H(div) families.
    pub boundary: Vec<bool>,
    /// Coefficients of the identity tensor (tensor families only).
    pub identity: Option<Vec<f64>>,
    pub n_triangles: usize,
}

impl DofMap {
    pub fn local_dofs(&self, k: usize) -> &[usize] {
        &self.dofs[k * self.n_local..(k + 1) * self.n_local]
    }

    pub fn local_signs(&self, k: usize) -> &[f64] {
        &self.signs[k * self.n_local..(k + 1) * self.n_local]
    }

    /// Element coefficients in the local basis.
    pub fn gather(&self, k: usize, coeffs: &[f64]) -> Vec<f64> {
        self.local_dofs(k).iter().zip(self.local_signs(k)).map(|(&g, &s)| s * coeffs[g]).collect()
    }

    pub fn check(&self, mesh: &Mesh) -> Result<()> {
        if self.n_triangles != mesh.num_triangles() {
            return Err(Error::MapMismatch(format!(
                "{:?} map built for {} triangles, mesh has {}",
                self.family,
                self.n_triangles,
                mesh.num_triangles()
            )));
        }
        Ok(())
    }
}

pub fn build_dof_map(mesh: &Mesh, family: Family) -> DofMap {
    let nt = mesh.num_triangles();
    let nsl = family.scalar_local();
    let n_local = family.n_local();
    let n_scalar = match family {
        Family::RT0Tensor => mesh.num_edges(),
        Family::BDM1Tensor => 2 * mesh.num_edges(),
        Family::P1Vector => mesh.num_vertices(),
        Family::P2Vector => mesh.num_vertices() + mesh.num_edges(),
    };
    let mut dofs = Vec::with_capacity(nt * n_local);
    let mut signs = Vec::with_capacity(nt * n_local);
    for k in 0..nt {
        let te = mesh.tri_edges[k];
        let tv = mesh.triangles[k].v;
        let mut sd = vec![0usize; nsl];
        let mut ss = vec![1.0; nsl];
        match family {
            Family::RT0Tensor => {
                for i in 0..3 {
                    sd[i] = te[i];
                    ss[i] = mesh.edge_sign(k, i);
                }
            }
            Family::BDM1Tensor => {
                for i in 0..3 {
                    sd[2 * i] = 2 * te[i];
                    ss[2 * i] = mesh.edge_sign(k, i);
                    sd[2 * i + 1] = 2 * te[i] + 1;
                }
            }
            Family::P1Vector => sd.copy_from_slice(&tv),
            Family::P2Vector => {
                sd[..3].copy_from_slice(&tv);
                for i in 0..3 {
                    sd[3 + i] = mesh.num_vertices() + te[i];
                }
            }
        }
        for r in 0..2 {
            for j in 0..nsl {
                dofs.push(r * n_scalar + sd[j]);
                signs.push(ss[j]);
            }
        }
    }
    let n_dofs = 2 * n_scalar;
    let mut boundary = vec![false; n_dofs];
    if !family.is_tensor() {
        let mut mark = |s: usize| {
            boundary[s] = true;
            boundary[n_scalar + s] = true;
        };
        for v in 0..mesh.num_vertices() {
            if mesh.is_boundary_vertex(v) {
                mark(v);
            }
        }
        if family == Family::P2Vector {
            for (e, edge) in mesh.edges.iter().enumerate() {
                if edge.is_boundary() {
                    mark(mesh.num_vertices() + e);
                }
            }
        }
    }
    let mut map = DofMap {
        family,
        n_dofs,
        n_scalar,
        n_local,
        dofs,
        signs,
        boundary,
        identity: None,
        n_triangles: nt,
    };
    if family.is_tensor() {
        map.identity = Some(interpolate_hdiv(|_| Tensor2::IDENTITY, mesh, &map, None));
    }
    map
}

/// Scalar-vector H(div) basis function: value and divergence.
#[derive(Debug, Clone, Copy)]
pub struct HdivValue {
    pub value: Vec2,
    pub div: f64,
}

/// Scalar Lagrange basis function: value and gradient.
#[derive(Debug, Clone, Copy)]
pub struct LagrangeValue {
    pub value: f64,
    pub grad: Vec2,
}

fn rot(g: Vec2) -> Vec2 {
    Vec2::new(g.y, -g.x)
}

/// Local scalar-vector RT₀ or BDM₁ basis at barycentric point `lam`.
///
/// For edge `i` with endpoints `a = i+1`, `b = i+2` (mod 3):
/// `φ_i = |e_i|(λ_a R∇λ_b − λ_b R∇λ_a)` and, for BDM₁,
/// `ψ_i = −|e_i|(λ_a R∇λ_b + λ_b R∇λ_a)`, where `R(x, y) = (y, −x)`.
pub fn hdiv_basis(family: Family, geom: &ElementGeometry, lam: [f64; 3]) -> Vec<HdivValue> {
    let g = [geom.grad_lambda(0), geom.grad_lambda(1), geom.grad_lambda(2)];
    let mut out = Vec::with_capacity(family.scalar_local());
    for i in 0..3 {
        let (a, b) = ((i + 1) % 3, (i + 2) % 3);
        let len = geom.lengths[i];
        let (ra, rb) = (rot(g[a]), rot(g[b]));
        let rt = HdivValue {
            value: (rb * lam[a] - ra * lam[b]) * len,
            div: 2.0 * len * g[a].dot(rb),
        };
        out.push(rt);
        if family == Family::BDM1Tensor {
            out.push(HdivValue { value: (rb * lam[a] + ra * lam[b]) * (-len), div: 0.0 });
        }
    }
    out
}

/// Local scalar Lagrange basis: P₁ vertex functions, or P₂ vertex functions
/// followed by the edge bubbles `4λ_aλ_b` (edge `i` opposite vertex `i`).
pub fn lagrange_basis(family: Family, geom: &ElementGeometry, lam: [f64; 3]) -> Vec<LagrangeValue> {
    let g = [geom.grad_lambda(0), geom.grad_lambda(1), geom.grad_lambda(2)];
    match family {
        Family::P1Vector => (0..3).map(|i| LagrangeValue { value: lam[i], grad: g[i] }).collect(),
        Family::P2Vector => {
            let mut out = Vec::with_capacity(6);
            for i in 0..3 {
                out.push(LagrangeValue {
                    value: lam[i] * (2.0 * lam[i] - 1.0),
                    grad: g[i] * (4.0 * lam[i] - 1.0),
                });
            }
            for i in 0..3 {
                let (a, b) = ((i + 1) % 3, (i + 2) % 3);
                out.push(LagrangeValue {
                    value: 4.0 * lam[a] * lam[b],
                    grad: (g[b] * lam[a] + g[a] * lam[b]) * 4.0,
                });
            }
            out
        }
        _ => panic!("{family:?} is not a Lagrange family"),
    }
}

/// Full local basis of a family, expanded over tensor rows or vector components.
#[derive(Debug, Clone)]
pub enum BasisValues {
    /// `(τ, div τ)` per local DOF.
    Tensor(Vec<(Tensor2, Vec2)>),
    /// `(v, ∇v)` per local DOF; row `i` of `∇v` is the gradient of `v_i`.
    Vector(Vec<(Vec2, Tensor2)>),
}

pub fn eval_basis(family: Family, geom: &ElementGeometry, lam: [f64; 3]) -> BasisValues {
    if family.is_tensor() {
        let s = hdiv_basis(family, geom, lam);
        let mut out = Vec::with_capacity(2 * s.len());
        for r in 0..2 {
            for h in &s {
                out.push((Tensor2::with_row(r, h.value), Vec2::unit(r) * h.div));
            }
        }
        BasisValues::Tensor(out)
    } else {
        let s = lagrange_basis(family, geom, lam);
        let mut out = Vec::with_capacity(2 * s.len());
        for c in 0..2 {
            for l in &s {
                out.push((Vec2::unit(c) * l.value, Tensor2::with_row(c, l.grad)));
            }
        }
        BasisValues::Vector(out)
    }
}

/// Value and divergence of a discrete tensor field on triangle `k`.
pub fn eval_tensor(map: &DofMap, k: usize, coeffs: &[f64], geom: &ElementGeometry, lam: [f64; 3]) -> (Tensor2, Vec2) {
    let s = hdiv_basis(map.family, geom, lam);
    let ns = s.len();
    let dofs = map.local_dofs(k);
    let signs = map.local_signs(k);
    let mut rows = [Vec2::ZERO; 2];
    let mut div = [0.0; 2];
    for r in 0..2 {
        for (j, h) in s.iter().enumerate() {
            let c = signs[r * ns + j] * coeffs[dofs[r * ns + j]];
            rows[r] += h.value * c;
            div[r] += h.div * c;
        }
    }
    (Tensor2::from_rows(rows[0], rows[1]), Vec2::new(div[0], div[1]))
}

/// Value and gradient of a discrete vector field on triangle `k`.
pub fn eval_vector(map: &DofMap, k: usize, coeffs: &[f64], geom: &ElementGeometry, lam: [f64; 3]) -> (Vec2, Tensor2) {
    let s = lagrange_basis(map.family, geom, lam);
    let ns = s.len();
    let dofs = map.local_dofs(k);
    let mut val = [0.0; 2];
    let mut grad = [Vec2::ZERO; 2];
    for c in 0..2 {
        for (j, l) in s.iter().enumerate() {
            let a = coeffs[dofs[c * ns + j]];
            val[c] += l.value * a;
            grad[c] += l.grad * a;
        }
    }
    (Vec2::new(val[0], val[1]), Tensor2::from_rows(grad[0], grad[1]))
}

/// Quadrature for triangle `k`; triangles with a vertex at the origin get a
/// graded rule when a singularity exponent is given.
pub fn element_rule<'a>(mesh: &Mesh, k: usize, base: &'a QuadratureRule, singular: Option<f64>) -> Cow<'a, QuadratureRule> {
    match (singular, mesh.origin_corner(k)) {
        (Some(alpha), Some(c)) => Cow::Owned(graded_rule(base, c, alpha, 5)),
        _ => Cow::Borrowed(base),
    }
}

const EDGE_POINTS: usize = 4;
const NEAR_EDGE_POINTS: usize = 24;

/// Rule on the global edge `e` in the parameter `s ∈ [0, 1]` running from
/// `v[0]` to `v[1]`, refined toward an endpoint at the origin and of high
/// order on edges passing close to it.
fn edge_rule(mesh: &Mesh, e: usize, singular: Option<f64>) -> LineRule {
    let [a, b] = mesh.edges[e].v;
    let at_origin = |v: usize| mesh.vertices[v].norm() < 1e-14;
    match singular {
        Some(alpha) if at_origin(a) || at_origin(b) => {
            let r = singular_line_rule(4 * EDGE_POINTS, alpha);
            if at_origin(a) {
                r
            } else {
                LineRule {
                    points: r.points.iter().map(|s| 1.0 - s).collect(),
                    weights: r.weights,
                }
            }
        }
        Some(_) => {
            let (p, q) = (mesh.vertices[a], mesh.vertices[b]);
            gauss_legendre(near_edge_points(segment_distance(p, q) / (q - p).norm()))
        }
        None => gauss_legendre(EDGE_POINTS),
    }
}

/// Gauss order reaching double precision for a point singularity at relative
/// distance `ratio` from the segment (Bernstein ellipse bound).
fn near_edge_points(ratio: f64) -> usize {
    let a = 2.0 * ratio + 1.0;
    let rho = a + (a * a - 1.0).sqrt();
    ((17.0 / (2.0 * rho.log10())).ceil() as usize).clamp(EDGE_POINTS, NEAR_EDGE_POINTS)
}

/// Distance from the origin to the segment `[p, q]`.
fn segment_distance(p: Vec2, q: Vec2) -> f64 {
    let d = q - p;
    let t = (-p.dot(d) / d.norm_sq()).clamp(0.0, 1.0);
    (p + d * t).norm()
}

/// Canonical RT₀ / BDM₁ interpolation of a tensor field, row by row, from
/// the edge moments of its normal trace.
///
/// `singular` is the exponent `α` of a field behaving like `r^(α−1)` at the
/// origin; edges ending at the origin then use a substituted rule.
pub fn interpolate_hdiv(field: impl Fn(Vec2) -> Tensor2, mesh: &Mesh, map: &DofMap, singular: Option<f64>) -> Vec<f64> {
    assert!(map.family.is_tensor());
    let bdm = map.family == Family::BDM1Tensor;
    let mut coeffs = vec![0.0; map.n_dofs];
    for (e, edge) in mesh.edges.iter().enumerate() {
        let p = mesh.vertices[edge.v[0]];
        let q = mesh.vertices[edge.v[1]];
        let t = q - p;
        let n = Vec2::new(t.y, -t.x) * (1.0 / t.norm());
        let mut m0 = [0.0; 2];
        let mut m1 = [0.0; 2];
        for (s, w) in edge_rule(mesh, e, singular).iter() {
            let flux = field(p + t * s).apply(n);
            for r in 0..2 {
                m0[r] += w * flux.component(r);
                m1[r] += 3.0 * w * flux.component(r) * (2.0 * s - 1.0);
            }
        }
        for r in 0..2 {
            if bdm {
                coeffs[r * map.n_scalar + 2 * e] = m0[r];
                coeffs[r * map.n_scalar + 2 * e + 1] = m1[r];
            } else {
                coeffs[r * map.n_scalar + e] = m0[r];
            }
        }
    }
    coeffs
}

/// Nodal interpolation into P₁ / P₂ (values at vertices and edge midpoints).
pub fn interpolate_lagrange(field: impl Fn(Vec2) -> Vec2, mesh: &Mesh, map: &DofMap) -> Vec<f64> {
    assert!(!map.family.is_tensor());
    let mut coeffs = vec![0.0; map.n_dofs];
    let mut set = |s: usize, v: Vec2| {
        coeffs[s] = v.x;
        coeffs[map.n_scalar + s] = v.y;
    };
    for (v, p) in mesh.vertices.iter().enumerate() {
        set(v, field(*p));
    }
    if map.family == Family::P2Vector {
        for (e, edge) in mesh.edges.iter().enumerate() {
            let m = (mesh.vertices[edge.v[0]] + mesh.vertices[edge.v[1]]) * 0.5;
            set(mesh.num_vertices() + e, field(m));
        }
    }
    coeffs
}

/// `Σ_K ∫_K ν⁻¹ tr(τ_h)`.
pub fn weighted_trace(coeffs: &[f64], map: &DofMap, mesh: &Mesh, nu: &Viscosity) -> f64 {
    let rule = quadrature(2).expect("degree 2 rule");
    (0..mesh.num_triangles())
        .map(|k| {
            let geom = mesh.geometry(k);
            let s: f64 = rule.iter().map(|(lam, w)| w * eval_tensor(map, k, coeffs, &geom, lam).0.trace()).sum();
            s * geom.area / nu.on(mesh, k)
        })
        .sum()
}

/// `Σ_K |K| / ν_K`.
pub fn weighted_area(mesh: &Mesh, nu: &Viscosity) -> f64 {
    (0..mesh.num_triangles()).map(|k| mesh.geometry(k).area / nu.on(mesh, k)).sum()
}

/// Returns `τ − φ I` with `φ = (tr τ, ν⁻¹) / (2 (1, ν⁻¹))`, so that the result
/// has zero ν⁻¹-weighted trace. The divergence is unchanged.
pub fn trace_correction(coeffs: &[f64], map: &DofMap, mesh: &Mesh, nu: &Viscosity) -> Vec<f64> {
    let identity = map.identity.as_ref().expect("trace correction needs a tensor family");
    let phi = weighted_trace(coeffs, map, mesh, nu) / (2.0 * weighted_area(mesh, nu));
    coeffs.iter().zip(identity).map(|(c, i)| c - phi * i).collect()
}

/// Scalar P₁/P₂ mass matrix.
fn scalar_mass(mesh: &Mesh, map: &DofMap) -> SparseMatrix {
    let rule = quadrature(4).expect("degree 4 rule");
    let ns = map.family.scalar_local();
    let mut m = SparseMatrix::new(map.n_scalar);
    for k in 0..mesh.num_triangles() {
        let geom = mesh.geometry(k);
        let dofs = &map.local_dofs(k)[..ns];
        let mut local = vec![0.0; ns * ns];
        for (lam, w) in rule.iter() {
            let b = lagrange_basis(map.family, &geom, lam);
            for i in 0..ns {
                for j in 0..ns {
                    local[i * ns + j] += w * geom.area * b[i].value * b[j].value;
                }
            }
        }
        for i in 0..ns {
            for j in 0..ns {
                m.push(dofs[i], dofs[j], local[i * ns + j]);
            }
        }
    }
    m
}

/// L² projection of a vector field onto the unconstrained P₁ / P₂ space.
pub fn l2_project(field: impl Fn(Vec2) -> Vec2, mesh: &Mesh, map: &DofMap, singular: Option<f64>) -> Result<Vec<f64>> {
    map.check(mesh)?;
    assert!(!map.family.is_tensor());
    let base = quadrature(10)?;
    let ns = map.family.scalar_local();
    let mut rhs = [vec![0.0; map.n_scalar], vec![0.0; map.n_scalar]];
    for k in 0..mesh.num_triangles() {
        let geom = mesh.geometry(k);
        let dofs = &map.local_dofs(k)[..ns];
        let rule = element_rule(mesh, k, &base, singular);
        for (lam, w) in rule.iter() {
            let f = field(geom.point(lam));
            let b = lagrange_basis(map.family, &geom, lam);
            for i in 0..ns {
                let c = w * geom.area * b[i].value;
                rhs[0][dofs[i]] += c * f.x;
                rhs[1][dofs[i]] += c * f.y;
            }
        }
    }
    let mass = scalar_mass(mesh, map);
    let x = mass.solve(&rhs[0])?;
    let y = mass.solve(&rhs[1])?;
    Ok(x.into_iter().chain(y).collect())
}

/// Largest jump of the normal component of a discrete tensor field across
/// interior edges, sampled at Gauss points.
pub fn normal_jump(coeffs: &[f64], map: &DofMap, mesh: &Mesh) -> f64 {
    let rule = gauss_legendre(EDGE_POINTS);
    let mut worst: f64 = 0.0;
    for edge in &mesh.edges {
        let (Some((k1, _)), Some((k2, _))) = (edge.tris[0], edge.tris[1]) else {
            continue;
        };
        let p = mesh.vertices[edge.v[0]];
        let q = mesh.vertices[edge.v[1]];
        let t = q - p;
        let n = Vec2::new(t.y, -t.x);
        for (s, _) in rule.iter() {
            let x = p + t * s;
            let g1 = mesh.geometry(k1);
            let g2 = mesh.geometry(k2);
            let v1 = eval_tensor(map, k1, coeffs, &g1, barycentric(&g1, x)).0.apply(n);
            let v2 = eval_tensor(map, k2, coeffs, &g2, barycentric(&g2, x)).0.apply(n);
            worst = worst.max((v1 - v2).norm());
        }
    }
    worst
}

/// Barycentric coordinates of `x` with respect to the triangle.
pub fn barycentric(geom: &ElementGeometry, x: Vec2) -> [f64; 3] {
    let mut lam = [0.0; 3];
    for (i, l) in lam.iter_mut().enumerate() {
        let a = geom.vertices[(i + 1) % 3];
        let b = geom.vertices[(i + 2) % 3];
        *l = 0.5 * (b - a).cross(x - a) / geom.area;
    }
    lam
}
