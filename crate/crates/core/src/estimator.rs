//! Least-squares functional estimator, bulk marking and error norms.
//!
//! The local indicator is
//!
//! ```text
//! η_K² = ‖ν^½ ε(u_h) − ν^-½ 𝒜σ_h‖²_K + ‖θ^½ ν^-½ (∇·σ_h + f)‖²_K
//! ```
//!
//! which vanishes at the exact solution since `𝒜σ = ν ε(u)` and `∇·σ = −f`.

use serde::Serialize;

use crate::assembly::{energy_density, full_density, pair_values, DiscreteSolution, Maps, PointValues, ThetaMode};
use crate::error::Result;
use crate::exact::ExactFields;
use crate::fespace::{element_rule, interpolate_hdiv, l2_project, trace_correction, Viscosity};
use crate::mesh::{build_structured_mesh, Mesh};
use crate::quadrature::quadrature;
use crate::tensor::{dev, sym_part, Vec2};

pub const ESTIMATE_DEGREE: usize = 6;
pub const ERROR_DEGREE: usize = 10;

/// Per-element indicators `η_K` (not squared).
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub indicators: Vec<f64>,
}

impl Estimate {
    pub fn global(&self) -> f64 {
        self.indicators.iter().map(|e| e * e).sum::<f64>().sqrt()
    }
}

pub fn estimate(mesh: &Mesh, maps: &Maps, nu: &Viscosity, theta: ThetaMode, solution: &DiscreteSolution, f: &dyn Fn(Vec2) -> Vec2) -> Estimate {
    let rule = quadrature(ESTIMATE_DEGREE).expect("estimator rule");
    let indicators = (0..mesh.num_triangles())
        .map(|k| {
            let geom = mesh.geometry(k);
            let (nk, th) = (nu.on(mesh, k), theta.value(&geom));
            let mut s = 0.0;
            for (lam, w) in rule.iter() {
                let x = pair_values(maps, k, &solution.sigma, &solution.u, &geom, lam);
                let constitutive = sym_part(x.grad_u) * nk.sqrt() - dev(x.sigma) * (1.0 / nk.sqrt());
                let balance = x.div_sigma + f(geom.point(lam));
                s += w * (constitutive.norm_sq() + th / nk * balance.norm_sq());
            }
            (s * geom.area).max(0.0).sqrt()
        })
        .collect();
    Estimate { indicators }
}

/// Smallest set of elements whose squared indicators carry at least
/// `fraction` of the total, taken greedily from the largest (ties by index).
pub fn dorfler_mark(est: &Estimate, fraction: f64) -> Vec<usize> {
    assert!(fraction > 0.0 && fraction < 1.0, "marking fraction must lie in (0, 1)");
    let sq: Vec<f64> = est.indicators.iter().map(|e| e * e).collect();
    let total: f64 = sq.iter().sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..sq.len()).collect();
    order.sort_by(|&a, &b| sq[b].total_cmp(&sq[a]).then(a.cmp(&b)));
    let target = fraction * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for k in order {
        if acc >= target {
            break;
        }
        acc += sq[k];
        marked.push(k);
    }
    marked
}

/// Integrates a density of the pointwise difference between the exact
/// fields and a discrete pair over every element.
fn error_integral(mesh: &Mesh, maps: &Maps, theta: ThetaMode, sigma: &[f64], u: &[f64], exact: &impl ExactFields, density: fn(&PointValues, f64, f64) -> f64) -> f64 {
    let base = quadrature(ERROR_DEGREE).expect("error rule");
    let nu = exact.viscosity();
    let singular = exact.singular_exponent();
    let mut total = 0.0;
    for k in 0..mesh.num_triangles() {
        let geom = mesh.geometry(k);
        let (nk, th) = (nu.on(mesh, k), theta.value(&geom));
        let rule = element_rule(mesh, k, &base, singular);
        let mut s = 0.0;
        for (lam, w) in rule.iter() {
            let p = geom.point(lam);
            let ex = exact.fields(p);
            let h = pair_values(maps, k, sigma, u, &geom, lam);
            let diff = PointValues {
                sigma: ex.sigma - h.sigma,
                div_sigma: -exact.source(p) - h.div_sigma,
                u: ex.u - h.u,
                grad_u: ex.grad_u - h.grad_u,
            };
            s += w * density(&diff, nk, th);
        }
        total += s * geom.area;
    }
    total.max(0.0).sqrt()
}

/// `|||(σ − σ_h, u − u_h)|||_eg`.
pub fn energy_error(mesh: &Mesh, maps: &Maps, theta: ThetaMode, solution: &DiscreteSolution, exact: &impl ExactFields) -> f64 {
    error_integral(mesh, maps, theta, &solution.sigma, &solution.u, exact, energy_density)
}

/// `|||(σ − σ_h, u − u_h)|||_full`.
pub fn full_error(mesh: &Mesh, maps: &Maps, theta: ThetaMode, solution: &DiscreteSolution, exact: &impl ExactFields) -> f64 {
    error_integral(mesh, maps, theta, &solution.sigma, &solution.u, exact, full_density)
}

/// Energy norm of the exact pair on the mesh's `θ`.
pub fn exact_energy_norm(mesh: &Mesh, maps: &Maps, theta: ThetaMode, exact: &impl ExactFields) -> f64 {
    let zero_s = vec![0.0; maps.sigma.n_dofs];
    let zero_u = vec![0.0; maps.u.n_dofs];
    error_integral(mesh, maps, theta, &zero_s, &zero_u, exact, energy_density)
}

/// `φ` such that `σ − φI` has zero ν⁻¹-weighted trace over the square.
pub fn trace_shift(exact: &impl ExactFields) -> f64 {
    let mesh = build_structured_mesh(8).expect("even mesh size");
    let base = quadrature(ERROR_DEGREE).expect("error rule");
    let nu = exact.viscosity();
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..mesh.num_triangles() {
        let geom = mesh.geometry(k);
        let nk = nu.on(&mesh, k);
        let rule = element_rule(&mesh, k, &base, exact.singular_exponent());
        let s: f64 = rule.iter().map(|(lam, w)| w * exact.fields(geom.point(lam)).sigma.trace()).sum();
        num += s * geom.area / nk;
        den += geom.area / nk;
    }
    num / (2.0 * den)
}

/// Interpolant of the exact pair: trace-corrected canonical H(div)
/// interpolant for the stress and L² projection for the velocity.
pub fn interpolant(mesh: &Mesh, maps: &Maps, exact: &impl ExactFields) -> Result<DiscreteSolution> {
    let nu = exact.viscosity();
    let singular = exact.singular_exponent();
    let raw = interpolate_hdiv(|p| exact.fields(p).sigma, mesh, &maps.sigma, singular);
    let sigma = trace_correction(&raw, &maps.sigma, mesh, &nu);
    let u = l2_project(|p| exact.velocity(p), mesh, &maps.u, singular)?;
    Ok(DiscreteSolution { sigma, u, multiplier: 0.0, residual: 0.0 })
}

/// Full-norm error of [`interpolant`]. The exact stress should carry zero
/// ν⁻¹-weighted trace (see [`trace_shift`]).
pub fn interpolation_error(mesh: &Mesh, maps: &Maps, theta: ThetaMode, exact: &impl ExactFields) -> Result<f64> {
    let i = interpolant(mesh, maps, exact)?;
    Ok(full_error(mesh, maps, theta, &i, exact))
}

/// One row of an adaptive or uniform study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorReport {
    pub k: usize,
    pub n: usize,
    pub dofs: usize,
    pub eta: f64,
    pub energy_err: f64,
    pub interp_full_err: f64,
    pub rel_err: f64,
    pub ind_err: f64,
    pub eff_index: f64,
}

pub const CSV_HEADER: &str = "k,n,dofs,eta,energy_err,interp_full_err,rel_err,ind_err,eff_index";

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else if a == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Derived ratios: `rel = err / |||exact|||`, `ind = err / interp`, `eff = err / η`.
pub fn indices(k: usize, n: usize, dofs: usize, eta: f64, energy_err: f64, interp_full_err: f64, exact_norm: f64) -> ErrorReport {
    ErrorReport {
        k,
        n,
        dofs,
        eta,
        energy_err,
        interp_full_err,
        rel_err: ratio(energy_err, exact_norm),
        ind_err: ratio(energy_err, interp_full_err),
        eff_index: ratio(energy_err, eta),
    }
}

impl ErrorReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}",
            self.k, self.n, self.dofs, self.eta, self.energy_err, self.interp_full_err, self.rel_err, self.ind_err, self.eff_index
        )
    }
}

pub fn to_csv(rows: &[ErrorReport]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}
