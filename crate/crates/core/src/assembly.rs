//! Global system for the augmented mixed problem.
//!
//! For trial `(χ, w)` and test `(τ, v)` the element contribution is
//!
//! ```text
//! B_θ = (ν⁻¹𝒜χ − ε(w), 𝒜τ − νε(v)) − (∇·w, tr τ) + 2(χ, ε(v)) + (θν⁻¹∇·χ, ∇·τ)
//! F_θ = 2(f, v) − (θν⁻¹f, ∇·τ)
//! ```
//!
//! The symmetric variant replaces `v` by `−v` in both. Unknowns are ordered
//! `[σ | free velocity DOFs | multiplier]`; the last row enforces
//! `∫ ν⁻¹ tr σ_h = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::ExactFields;
use crate::fespace::{build_dof_map, eval_basis, BasisValues, DofMap, Family, Viscosity};
use crate::linalg::SparseMatrix;
use crate::mesh::{ElementGeometry, Mesh};
use crate::quadrature::{quadrature, QuadratureRule};
use crate::tensor::{dev, sym_part, Tensor2, Vec2};

pub const ASSEMBLY_DEGREE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThetaMode {
    /// `θ = 1`
    Constant1,
    /// `θ|_K = h_K²`
    MeshSquared,
}

impl ThetaMode {
    pub fn value(self, geom: &ElementGeometry) -> f64 {
        match self {
            ThetaMode::Constant1 => 1.0,
            ThetaMode::MeshSquared => geom.diameter * geom.diameter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    NonSymmetric,
    Symmetric,
}

impl Variant {
    fn test_sign(self) -> f64 {
        match self {
            Variant::NonSymmetric => 1.0,
            Variant::Symmetric => -1.0,
        }
    }
}

/// Stress and velocity space pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Spaces {
    /// RT₀ × P₁
    Rt0P1,
    /// BDM₁ × P₂
    Bdm1P2,
}

impl Spaces {
    pub fn families(self) -> (Family, Family) {
        match self {
            Spaces::Rt0P1 => (Family::RT0Tensor, Family::P1Vector),
            Spaces::Bdm1P2 => (Family::BDM1Tensor, Family::P2Vector),
        }
    }

    pub fn from_families(sigma: Family, u: Family) -> Result<Self> {
        match (sigma, u) {
            (Family::RT0Tensor, Family::P1Vector) => Ok(Spaces::Rt0P1),
            (Family::BDM1Tensor, Family::P2Vector) => Ok(Spaces::Bdm1P2),
            other => Err(Error::SpacePair(format!("{other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Maps {
    pub spaces: Spaces,
    pub sigma: DofMap,
    pub u: DofMap,
}

pub fn build_maps(mesh: &Mesh, spaces: Spaces) -> Maps {
    let (fs, fu) = spaces.families();
    Maps { spaces, sigma: build_dof_map(mesh, fs), u: build_dof_map(mesh, fu) }
}

/// Values of a stress/velocity pair at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PointValues {
    pub sigma: Tensor2,
    pub div_sigma: Vec2,
    pub u: Vec2,
    pub grad_u: Tensor2,
}

/// Integrand of the non-symmetric form `B_θ(trial, test)`.
pub fn bilinear_density(trial: &PointValues, test: &PointValues, nu: f64, theta: f64) -> f64 {
    let a_chi = dev(trial.sigma);
    let a_tau = dev(test.sigma);
    let eps_w = sym_part(trial.grad_u);
    let eps_v = sym_part(test.grad_u);
    (a_chi * (1.0 / nu) - eps_w).ddot(&(a_tau - eps_v * nu)) - trial.grad_u.trace() * test.sigma.trace()
        + 2.0 * trial.sigma.ddot(&eps_v)
        + theta / nu * trial.div_sigma.dot(test.div_sigma)
}

/// Integrand of `F_θ(test)`.
pub fn rhs_density(f: Vec2, test: &PointValues, nu: f64, theta: f64) -> f64 {
    2.0 * f.dot(test.u) - theta / nu * f.dot(test.div_sigma)
}

/// Energy-norm integrand `|ν^½ε(v)|² + |ν^-½𝒜τ|² + θν⁻¹|∇·τ|²`.
pub fn energy_density(x: &PointValues, nu: f64, theta: f64) -> f64 {
    nu * sym_part(x.grad_u).norm_sq() + dev(x.sigma).norm_sq() / nu + theta / nu * x.div_sigma.norm_sq()
}

/// Full-norm integrand `ν|∇v|² + ν/θ |v|² + ν⁻¹|τ|² + θν⁻¹|∇·τ|²`.
pub fn full_density(x: &PointValues, nu: f64, theta: f64) -> f64 {
    nu * x.grad_u.norm_sq() + nu / theta * x.u.norm_sq() + x.sigma.norm_sq() / nu + theta / nu * x.div_sigma.norm_sq()
}

/// Local basis of the pair, expanded as `PointValues` per local DOF
/// (stress DOFs first).
pub fn pair_basis(spaces: Spaces, geom: &ElementGeometry, lam: [f64; 3]) -> Vec<PointValues> {
    let (fs, fu) = spaces.families();
    let mut out = Vec::with_capacity(fs.n_local() + fu.n_local());
    if let BasisValues::Tensor(t) = eval_basis(fs, geom, lam) {
        out.extend(t.into_iter().map(|(sigma, div_sigma)| PointValues { sigma, div_sigma, ..Default::default() }));
    }
    if let BasisValues::Vector(v) = eval_basis(fu, geom, lam) {
        out.extend(v.into_iter().map(|(u, grad_u)| PointValues { u, grad_u, ..Default::default() }));
    }
    out
}

/// Dense element block, row-major with rows = test and columns = trial, both
/// ordered `[local σ | local u]`.
#[derive(Debug, Clone)]
pub struct LocalBlock {
    pub n_sigma: usize,
    pub n_u: usize,
    pub a: Vec<f64>,
}

impl LocalBlock {
    pub fn size(&self) -> usize {
        self.n_sigma + self.n_u
    }

    pub fn get(&self, test: usize, trial: usize) -> f64 {
        self.a[test * self.size() + trial]
    }
}

fn local_matrix_with(rule: &QuadratureRule, geom: &ElementGeometry, nu: f64, theta: f64, spaces: Spaces, variant: Variant) -> LocalBlock {
    let (fs, fu) = spaces.families();
    let (ns, nu_loc) = (fs.n_local(), fu.n_local());
    let n = ns + nu_loc;
    let mut a = vec![0.0; n * n];
    for (lam, w) in rule.iter() {
        let b = pair_basis(spaces, geom, lam);
        let wk = w * geom.area;
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] += wk * bilinear_density(&b[j], &b[i], nu, theta);
            }
        }
    }
    let sign = variant.test_sign();
    if sign < 0.0 {
        for v in &mut a[ns * n..] {
            *v = -*v;
        }
    }
    LocalBlock { n_sigma: ns, n_u: nu_loc, a }
}

/// Element matrix of `B_θ` (or its symmetric variant) with the degree-6 rule.
pub fn local_matrix(geom: &ElementGeometry, nu: f64, theta: f64, spaces: Spaces, variant: Variant) -> LocalBlock {
    let rule = quadrature(ASSEMBLY_DEGREE).expect("assembly rule");
    local_matrix_with(&rule, geom, nu, theta, spaces, variant)
}

fn local_rhs(rule: &QuadratureRule, geom: &ElementGeometry, nu: f64, theta: f64, spaces: Spaces, variant: Variant, f: &dyn Fn(Vec2) -> Vec2) -> Vec<f64> {
    let (fs, _) = spaces.families();
    let ns = fs.n_local();
    let mut out = Vec::new();
    for (lam, w) in rule.iter() {
        let b = pair_basis(spaces, geom, lam);
        if out.is_empty() {
            out = vec![0.0; b.len()];
        }
        let fx = f(geom.point(lam));
        for (i, t) in b.iter().enumerate() {
            out[i] += w * geom.area * rhs_density(fx, t, nu, theta);
        }
    }
    let sign = variant.test_sign();
    for v in &mut out[ns..] {
        *v *= sign;
    }
    out
}

/// Problem description for [`assemble`].
pub struct ProblemData<'a> {
    pub nu: Viscosity,
    pub f: &'a (dyn Fn(Vec2) -> Vec2 + Sync),
    pub g: &'a (dyn Fn(Vec2) -> Vec2 + Sync),
    pub variant: Variant,
    pub theta: ThetaMode,
    pub spaces: Spaces,
}

impl<'a> ProblemData<'a> {
    /// Source and boundary data taken from an exact solution.
    pub fn from_exact<E: ExactFields>(exact: &'a E, f: &'a (dyn Fn(Vec2) -> Vec2 + Sync), g: &'a (dyn Fn(Vec2) -> Vec2 + Sync), variant: Variant, theta: ThetaMode, spaces: Spaces) -> Self {
        Self { nu: exact.viscosity(), f, g, variant, theta, spaces }
    }
}

#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
    /// Same system with `q = θν⁻¹∇·σ_h|_K` (two rows per triangle)
    /// appended after the multiplier. Used by [`solve`].
    pub augmented: SparseMatrix,
    /// Multiplier-row entries of the largest triangle, with a matching
    /// scale, used to regularize the bordered solve.
    pub local_trace: (Vec<(usize, f64)>, f64),
    pub n_sigma: usize,
    pub n_u: usize,
    /// Position of each velocity DOF among the unknowns, `None` when eliminated.
    pub u_free: Vec<Option<usize>>,
    /// Full velocity vector holding the Dirichlet values (zero at free DOFs).
    pub u_dirichlet: Vec<f64>,
    pub multiplier_index: usize,
}

impl LinearSystem {
    pub fn dim(&self) -> usize {
        self.matrix.n
    }

    pub fn write_matrix_market(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.matrix.to_matrix_market())?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteSolution {
    pub sigma: Vec<f64>,
    pub u: Vec<f64>,
    pub multiplier: f64,
    pub residual: f64,
}

/// Per-element `∫_K tr(τ_j)` for the local stress basis.
fn local_trace_row(geom: &ElementGeometry, family: Family) -> Vec<f64> {
    let rule = quadrature(2).expect("degree 2 rule");
    let mut out = vec![0.0; family.n_local()];
    for (lam, w) in rule.iter() {
        if let BasisValues::Tensor(t) = eval_basis(family, geom, lam) {
            for (o, (tau, _)) in out.iter_mut().zip(t) {
                *o += w * geom.area * tau.trace();
            }
        }
    }
    out
}

/// Divergence of each local stress basis function at the centroid.
fn local_divergence(geom: &ElementGeometry, family: Family) -> Vec<Vec2> {
    match eval_basis(family, geom, [1.0 / 3.0; 3]) {
        BasisValues::Tensor(t) => t.into_iter().map(|(_, d)| d).collect(),
        BasisValues::Vector(_) => Vec::new(),
    }
}

pub fn assemble(mesh: &Mesh, maps: &Maps, data: &ProblemData) -> Result<LinearSystem> {
    if maps.spaces != data.spaces {
        return Err(Error::MapMismatch(format!("maps for {:?}, data for {:?}", maps.spaces, data.spaces)));
    }
    maps.sigma.check(mesh)?;
    maps.u.check(mesh)?;
    let n_sigma = maps.sigma.n_dofs;
    let n_u = maps.u.n_dofs;
    let mut u_free = vec![None; n_u];
    let mut next = n_sigma;
    for (d, slot) in u_free.iter_mut().enumerate() {
        if !maps.u.boundary[d] {
            *slot = Some(next);
            next += 1;
        }
    }
    let multiplier_index = next;
    let dim = next + 1;
    let nodal = crate::fespace::interpolate_lagrange(data.g, mesh, &maps.u);
    let u_dirichlet: Vec<f64> = nodal.iter().enumerate().map(|(d, &v)| if maps.u.boundary[d] { v } else { 0.0 }).collect();

    let rule = quadrature(ASSEMBLY_DEGREE)?;
    let n_tri = mesh.num_triangles();
    let mut matrix = SparseMatrix::new(dim);
    let mut augmented = SparseMatrix::new(dim + 2 * n_tri);
    let mut rhs = vec![0.0; dim];
    let mut local_trace = (Vec::new(), 0.0);
    let mut largest = 0.0;
    for k in 0..n_tri {
        let geom = mesh.geometry(k);
        let nu = data.nu.on(mesh, k);
        let theta = data.theta.value(&geom);
        let block = local_matrix_with(&rule, &geom, nu, 0.0, data.spaces, data.variant);
        let f_loc = local_rhs(&rule, &geom, nu, theta, data.spaces, data.variant, data.f);
        let ns = block.n_sigma;
        // global positions (None = Dirichlet), signs, and Dirichlet values
        let mut pos = Vec::with_capacity(block.size());
        let mut sgn = Vec::with_capacity(block.size());
        let mut fixed = Vec::with_capacity(block.size());
        for (&d, &s) in maps.sigma.local_dofs(k).iter().zip(maps.sigma.local_signs(k)) {
            pos.push(Some(d));
            sgn.push(s);
            fixed.push(0.0);
        }
        for &d in maps.u.local_dofs(k) {
            pos.push(u_free[d]);
            sgn.push(1.0);
            fixed.push(u_dirichlet[d]);
        }
        for i in 0..block.size() {
            let Some(gi) = pos[i] else { continue };
            rhs[gi] += sgn[i] * f_loc[i];
            for j in 0..block.size() {
                let v = sgn[i] * sgn[j] * block.get(i, j);
                match pos[j] {
                    Some(gj) => {
                        matrix.push(gi, gj, v);
                        augmented.push(gi, gj, v);
                    }
                    None => rhs[gi] -= v * fixed[j],
                }
            }
        }
        // divergence of both stress spaces is constant per element
        let weight = theta * geom.area / nu;
        let div = local_divergence(&geom, maps.sigma.family);
        for i in 0..ns {
            let gi = pos[i].expect("stress dofs are free");
            for j in 0..ns {
                let v = sgn[i] * sgn[j] * weight * div[i].dot(div[j]);
                matrix.push(gi, pos[j].expect("stress dofs are free"), v);
            }
            for (r, d) in [div[i].x, div[i].y].into_iter().enumerate() {
                if d != 0.0 {
                    let q = dim + 2 * k + r;
                    augmented.push(gi, q, sgn[i] * d * geom.area);
                    augmented.push(q, gi, sgn[i] * d * geom.area);
                }
            }
        }
        for r in 0..2 {
            augmented.push(dim + 2 * k + r, dim + 2 * k + r, -geom.area * geom.area / weight);
        }
        let tr = local_trace_row(&geom, maps.sigma.family);
        if geom.area > largest {
            largest = geom.area;
            local_trace = ((0..ns).map(|i| (pos[i].expect("stress dofs are free"), sgn[i] * tr[i] / nu)).collect(), nu / geom.area);
        }
        for (i, t) in tr.iter().enumerate().take(ns) {
            let gi = pos[i].expect("stress dofs are free");
            let v = sgn[i] * t / nu;
            matrix.push(multiplier_index, gi, v);
            matrix.push(gi, multiplier_index, v);
            augmented.push(multiplier_index, gi, v);
            augmented.push(gi, multiplier_index, v);
        }
    }
    Ok(LinearSystem { matrix, rhs, augmented, local_trace, n_sigma, n_u, u_free, u_dirichlet, multiplier_index })
}

pub fn solve(system: &LinearSystem) -> Result<DiscreteSolution> {
    let mut b = system.rhs.clone();
    b.resize(system.augmented.n, 0.0);
    let (w, gamma) = &system.local_trace;
    let x = match system.augmented.solve_bordered(system.multiplier_index, w, *gamma, &b) {
        Ok(x) if system.augmented.relative_residual(&x, &b) <= 1e-10 => x,
        _ => system.augmented.solve(&b)?,
    };
    let residual = system.augmented.relative_residual(&x, &b);
    if residual > 1e-8 {
        return Err(Error::Solver(format!("relative residual {residual:.3e}")));
    }
    let sigma = x[..system.n_sigma].to_vec();
    let u = system
        .u_free
        .iter()
        .zip(&system.u_dirichlet)
        .map(|(slot, &g)| slot.map_or(g, |i| x[i]))
        .collect();
    Ok(DiscreteSolution { sigma, u, multiplier: x[system.multiplier_index], residual })
}

/// Assembles and solves in one step.
pub fn solve_problem(mesh: &Mesh, maps: &Maps, data: &ProblemData) -> Result<DiscreteSolution> {
    solve(&assemble(mesh, maps, data)?)
}

/// `Σ_K (local test)ᵀ A_K (local trial)` for global coefficient vectors.
pub fn bilinear_form(mesh: &Mesh, maps: &Maps, nu: &Viscosity, theta: ThetaMode, variant: Variant, trial: (&[f64], &[f64]), test: (&[f64], &[f64])) -> f64 {
    let rule = quadrature(ASSEMBLY_DEGREE).expect("assembly rule");
    let mut total = 0.0;
    for k in 0..mesh.num_triangles() {
        let geom = mesh.geometry(k);
        let block = local_matrix_with(&rule, &geom, nu.on(mesh, k), theta.value(&geom), maps.spaces, variant);
        let x: Vec<f64> = maps.sigma.gather(k, trial.0).into_iter().chain(maps.u.gather(k, trial.1)).collect();
        let y: Vec<f64> = maps.sigma.gather(k, test.0).into_iter().chain(maps.u.gather(k, test.1)).collect();
        for i in 0..block.size() {
            for j in 0..block.size() {
                total += y[i] * block.get(i, j) * x[j];
            }
        }
    }
    total
}

/// Discrete pair values at a point of triangle `k`.
pub fn pair_values(maps: &Maps, k: usize, sigma: &[f64], u: &[f64], geom: &ElementGeometry, lam: [f64; 3]) -> PointValues {
    let (s, ds) = crate::fespace::eval_tensor(&maps.sigma, k, sigma, geom, lam);
    let (v, gv) = crate::fespace::eval_vector(&maps.u, k, u, geom, lam);
    PointValues { sigma: s, div_sigma: ds, u: v, grad_u: gv }
}

/// Squared energy and full norms of a discrete pair.
pub fn pair_norms_sq(mesh: &Mesh, maps: &Maps, nu: &Viscosity, theta: ThetaMode, sigma: &[f64], u: &[f64]) -> (f64, f64) {
    let rule = quadrature(ASSEMBLY_DEGREE).expect("assembly rule");
    let mut eg = 0.0;
    let mut full = 0.0;
    for k in 0..mesh.num_triangles() {
        let geom = mesh.geometry(k);
        let (nk, th) = (nu.on(mesh, k), theta.value(&geom));
        for (lam, w) in rule.iter() {
            let x = pair_values(maps, k, sigma, u, &geom, lam);
            eg += w * geom.area * energy_density(&x, nk, th);
            full += w * geom.area * full_density(&x, nk, th);
        }
    }
    (eg, full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{Fields, RigidRotation};
    use crate::fespace::{eval_tensor, weighted_trace};
    use crate::mesh::build_structured_mesh;
    use rand::{Rng, SeedableRng};

    fn reference() -> ElementGeometry {
        ElementGeometry::from_vertices([Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)])
    }

    fn skewed() -> ElementGeometry {
        ElementGeometry::from_vertices([Vec2::new(0.1, 0.05), Vec2::new(0.7, 0.2), Vec2::new(0.25, 0.6)])
    }

    /// B_θ written term by term in its ultra-weak form with
    /// `b(τ, v) = −(ε(v), τ)`, evaluated by an independent dense rule.
    fn seven_term(x: &PointValues, y: &PointValues, nu: f64, theta: f64) -> f64 {
        let b = |tau: Tensor2, grad_v: Tensor2| -sym_part(grad_v).ddot(&tau);
        dev(x.sigma).ddot(&y.sigma) / nu + 2.0 * b(y.sigma, x.grad_u) - 2.0 * b(x.sigma, y.grad_u) - dev(x.sigma).ddot(&sym_part(y.grad_u))
            + dev(y.sigma).ddot(&sym_part(x.grad_u))
            + nu * sym_part(x.grad_u).ddot(&sym_part(y.grad_u))
            + theta / nu * x.div_sigma.dot(y.div_sigma)
    }

    #[test]
    fn local_block_matches_seven_term_oracle() {
        let dense = quadrature(12).unwrap();
        for spaces in [Spaces::Rt0P1, Spaces::Bdm1P2] {
            for &(nu, theta) in &[(1.0, 1.0), (160.3, 0.01), (0.2, 3.0)] {
                let g = skewed();
                let block = local_matrix(&g, nu, theta, spaces, Variant::NonSymmetric);
                let n = block.size();
                let mut oracle = vec![0.0; n * n];
                for (lam, w) in dense.iter() {
                    let b = pair_basis(spaces, &g, lam);
                    for i in 0..n {
                        for j in 0..n {
                            oracle[i * n + j] += w * g.area * seven_term(&b[j], &b[i], nu, theta);
                        }
                    }
                }
                let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (a, o) in block.a.iter().zip(&oracle) {
                    assert!((a - o).abs() <= 1e-12 * scale, "{spaces:?} ν={nu}: {a} vs {o}");
                }
            }
        }
    }

    #[test]
    fn local_quadratic_form_is_the_energy() {
        let g = reference();
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let rule = quadrature(ASSEMBLY_DEGREE).unwrap();
        for spaces in [Spaces::Rt0P1, Spaces::Bdm1P2] {
            let block = local_matrix(&g, 1.0, 1.0, spaces, Variant::NonSymmetric);
            let n = block.size();
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let quad: f64 = (0..n).map(|i| (0..n).map(|j| c[i] * block.get(i, j) * c[j]).sum::<f64>()).sum();
            let mut energy = 0.0;
            for (lam, w) in rule.iter() {
                let b = pair_basis(spaces, &g, lam);
                let mut x = PointValues::default();
                for (ci, bi) in c.iter().zip(&b) {
                    x.sigma += bi.sigma * *ci;
                    x.div_sigma += bi.div_sigma * *ci;
                    x.u += bi.u * *ci;
                    x.grad_u += bi.grad_u * *ci;
                }
                energy += w * g.area * energy_density(&x, 1.0, 1.0);
            }
            assert!((quad - energy).abs() <= 1e-12 * energy.abs().max(1.0), "{quad} vs {energy}");
        }
    }

    #[test]
    fn symmetric_block_flips_velocity_test_rows() {
        let g = skewed();
        for spaces in [Spaces::Rt0P1, Spaces::Bdm1P2] {
            let a = local_matrix(&g, 7.0, 0.3, spaces, Variant::NonSymmetric);
            let s = local_matrix(&g, 7.0, 0.3, spaces, Variant::Symmetric);
            let n = a.size();
            let scale = a.a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..n {
                let sign = if i < a.n_sigma { 1.0 } else { -1.0 };
                for j in 0..n {
                    assert_eq!(s.get(i, j), sign * a.get(i, j));
                    assert!((s.get(i, j) - s.get(j, i)).abs() <= 1e-13 * scale);
                }
            }
        }
    }

    #[test]
    fn homogeneous_data_gives_zero_solution() {
        let mesh = build_structured_mesh(2).unwrap();
        for spaces in [Spaces::Rt0P1, Spaces::Bdm1P2] {
            let maps = build_maps(&mesh, spaces);
            let zero = |_: Vec2| Vec2::ZERO;
            let data = ProblemData {
                nu: Viscosity::checkerboard(5.0),
                f: &zero,
                g: &zero,
                variant: Variant::NonSymmetric,
                theta: ThetaMode::Constant1,
                spaces,
            };
            let sol = solve_problem(&mesh, &maps, &data).unwrap();
            assert!(sol.sigma.iter().chain(&sol.u).all(|v| *v == 0.0));
            assert_eq!(sol.multiplier, 0.0);
        }
    }

    #[test]
    fn system_dimension_on_n2() {
        let mesh = build_structured_mesh(2).unwrap();
        let maps = build_maps(&mesh, Spaces::Rt0P1);
        let zero = |_: Vec2| Vec2::ZERO;
        let data = ProblemData {
            nu: Viscosity::checkerboard(160.33743602),
            f: &zero,
            g: &zero,
            variant: Variant::NonSymmetric,
            theta: ThetaMode::Constant1,
            spaces: Spaces::Rt0P1,
        };
        let sys = assemble(&mesh, &maps, &data).unwrap();
        assert_eq!(sys.dim(), 112 + (50 - 2 * 16) + 1);
        assert_eq!(sys.dim(), 131);
    }

    #[test]
    fn mismatched_maps_are_rejected() {
        let mesh = build_structured_mesh(2).unwrap();
        let other = build_structured_mesh(4).unwrap();
        let maps = build_maps(&other, Spaces::Rt0P1);
        let zero = |_: Vec2| Vec2::ZERO;
        let mut data = ProblemData {
            nu: Viscosity::uniform(1.0),
            f: &zero,
            g: &zero,
            variant: Variant::NonSymmetric,
            theta: ThetaMode::Constant1,
            spaces: Spaces::Rt0P1,
        };
        assert!(matches!(assemble(&mesh, &maps, &data), Err(Error::MapMismatch(_))));
        data.spaces = Spaces::Bdm1P2;
        assert!(assemble(&other, &maps, &data).is_err());
    }

    #[test]
    fn rigid_rotation_is_reproduced() {
        let mesh = build_structured_mesh(2).unwrap().bisect(&[0, 13, 22]).unwrap();
        let exact = RigidRotation { nu: Viscosity::checkerboard(30.0) };
        let f = |p: Vec2| exact.source(p);
        let g = |p: Vec2| exact.velocity(p);
        for spaces in [Spaces::Rt0P1, Spaces::Bdm1P2] {
            let maps = build_maps(&mesh, spaces);
            let data = ProblemData::from_exact(&exact, &f, &g, Variant::Symmetric, ThetaMode::MeshSquared, spaces);
            let sol = solve_problem(&mesh, &maps, &data).unwrap();
            assert!(sol.sigma.iter().all(|v| v.abs() < 1e-10));
            let nodal = crate::fespace::interpolate_lagrange(g, &mesh, &maps.u);
            assert!(sol.u.iter().zip(&nodal).all(|(a, b)| (a - b).abs() < 1e-10));
            assert!(sol.multiplier.abs() < 1e-10);
        }
    }

    /// `u = curl(x²y²)`, `p = x + y`, uniform viscosity; `f` is linear, so the
    /// assembly rule integrates every term exactly.
    struct PolyCase {
        nu: f64,
    }

    impl ExactFields for PolyCase {
        fn viscosity(&self) -> Viscosity {
            Viscosity::uniform(self.nu)
        }

        fn fields(&self, q: Vec2) -> Fields {
            let (x, y) = (q.x, q.y);
            let grad_u = Tensor2::new(4.0 * x * y, 2.0 * x * x, -2.0 * y * y, -4.0 * x * y);
            let p = x + y;
            Fields { u: Vec2::new(2.0 * x * x * y, -2.0 * x * y * y), grad_u, p, sigma: sym_part(grad_u) * self.nu - Tensor2::IDENTITY * p }
        }

        fn source(&self, q: Vec2) -> Vec2 {
            Vec2::new(1.0 - 2.0 * self.nu * q.y, 1.0 + 2.0 * self.nu * q.x)
        }
    }

    /// `B_θ((σ, u) − (σ_h, u_h), basis_i)` for every free test function.
    fn galerkin_residual(mesh: &Mesh, maps: &Maps, exact: &PolyCase, theta: ThetaMode, sol: &DiscreteSolution) -> (f64, f64) {
        let rule = quadrature(12).unwrap();
        let mut res_sigma = vec![0.0; maps.sigma.n_dofs];
        let mut res_u = vec![0.0; maps.u.n_dofs];
        let mut scale: f64 = 0.0;
        let nu = exact.viscosity();
        for k in 0..mesh.num_triangles() {
            let geom = mesh.geometry(k);
            let (nk, th) = (nu.on(mesh, k), theta.value(&geom));
            for (lam, w) in rule.iter() {
                let p = geom.point(lam);
                let fx = exact.fields(p);
                let div = -exact.source(p);
                let ex = PointValues { sigma: fx.sigma, div_sigma: div, u: fx.u, grad_u: fx.grad_u };
                let h = pair_values(maps, k, &sol.sigma, &sol.u, &geom, lam);
                let err = PointValues {
                    sigma: ex.sigma - h.sigma,
                    div_sigma: ex.div_sigma - h.div_sigma,
                    u: ex.u - h.u,
                    grad_u: ex.grad_u - h.grad_u,
                };
                let b = pair_basis(maps.spaces, &geom, lam);
                let ns = maps.sigma.n_local;
                for (i, bi) in b.iter().enumerate() {
                    let r = w * geom.area * bilinear_density(&err, bi, nk, th);
                    let rs = w * geom.area * bilinear_density(&ex, bi, nk, th).abs();
                    scale = scale.max(rs);
                    if i < ns {
                        res_sigma[maps.sigma.local_dofs(k)[i]] += maps.sigma.local_signs(k)[i] * r;
                    } else {
                        res_u[maps.u.local_dofs(k)[i - ns]] += r;
                    }
                }
            }
        }
        let worst_sigma = res_sigma.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let worst_u = res_u.iter().enumerate().filter(|(d, _)| !maps.u.boundary[*d]).fold(0.0f64, |m, (_, v)| m.max(v.abs()));
        (worst_sigma.max(worst_u), scale)
    }

    #[test]
    fn error_equation_holds_for_polynomial_case() {
        let mesh = build_structured_mesh(4).unwrap();
        let exact = PolyCase { nu: 3.0 };
        let f = |p: Vec2| exact.source(p);
        let g = |p: Vec2| exact.velocity(p);
        for spaces in [Spaces::Rt0P1, Spaces::Bdm1P2] {
            for theta in [ThetaMode::Constant1, ThetaMode::MeshSquared] {
                let maps = build_maps(&mesh, spaces);
                let data = ProblemData::from_exact(&exact, &f, &g, Variant::NonSymmetric, theta, spaces);
                let sol = solve_problem(&mesh, &maps, &data).unwrap();
                let (res, scale) = galerkin_residual(&mesh, &maps, &exact, theta, &sol);
                assert!(res <= 1e-9 * scale.max(1.0), "{spaces:?} {theta:?}: {res} (scale {scale})");
            }
        }
    }

    #[test]
    fn weighted_trace_constraint_is_active() {
        let mesh = build_structured_mesh(4).unwrap();
        let nu = Viscosity::checkerboard(29.3);
        // boundary data with nonzero net flux forces a nonzero multiplier
        let g = |p: Vec2| Vec2::new(p.x * p.x + 0.3, p.y);
        let zero = |_: Vec2| Vec2::ZERO;
        let maps = build_maps(&mesh, Spaces::Rt0P1);
        let data = ProblemData { nu, f: &zero, g: &g, variant: Variant::NonSymmetric, theta: ThetaMode::Constant1, spaces: Spaces::Rt0P1 };
        let sol = solve_problem(&mesh, &maps, &data).unwrap();
        assert!(weighted_trace(&sol.sigma, &maps.sigma, &mesh, &nu).abs() <= 1e-10);
        assert!(sol.residual <= 1e-10);
        let (t, _) = eval_tensor(&maps.sigma, 0, &sol.sigma, &mesh.geometry(0), [1.0 / 3.0; 3]);
        assert!(t.is_finite());
    }

    #[test]
    fn matrix_market_dump() {
        let mesh = build_structured_mesh(2).unwrap();
        let maps = build_maps(&mesh, Spaces::Rt0P1);
        let zero = |_: Vec2| Vec2::ZERO;
        let data = ProblemData { nu: Viscosity::uniform(1.0), f: &zero, g: &zero, variant: Variant::Symmetric, theta: ThetaMode::Constant1, spaces: Spaces::Rt0P1 };
        let sys = assemble(&mesh, &maps, &data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.mtx");
        sys.write_matrix_market(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("131 131 "));
    }
}
