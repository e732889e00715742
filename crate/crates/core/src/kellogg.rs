//! Kellogg-type singular solutions of the Stokes interface problem.
//!
//! On quadrant `Ω_i` the velocity is the Neuber form `u = ∇(x·B) − 2B` of a
//! harmonic vector potential
//!
//! ```text
//! B₁ = r^α (a_i sin αϑ + b_i cos αϑ),   B₂ = r^α (c_i sin αϑ + d_i cos αϑ)
//! ```
//!
//! with pressure `p = ν_i ∇·B`. Continuity of `u` and of `σn` across the four
//! half-axes gives sixteen equations in `ν₁` and the coefficients, normalized
//! by `ν₂ = ν₄ = 1`, `ν₁ = ν₃` and `d₄ = 1`.
//!
//! Writing `w₁ = b − i a`, `w₂ = d − i c` and `z = x + i y`, each component is
//! `B_k = Re(w_k z^α)`, which gives every derivative in closed form.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{ExactFields, Fields};
use crate::fespace::Viscosity;
use crate::tensor::{sym_part, Tensor2, Vec2};

/// Coefficients of the singular solution. `coeffs[i] = [a, b, c, d]` for
/// quadrant `i + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KelloggData {
    pub alpha: f64,
    pub nu1: f64,
    pub coeffs: [[f64; 4]; 4],
}

/// Tabulated reference data: `α`, `ν₁`, and `[a, b, c, d]` per quadrant.
pub const TABLES: [KelloggData; 5] = [
    KelloggData {
        alpha: 0.13,
        nu1: 160.3374,
        coeffs: [
            [0.0132, 0.3067, -0.0482, -0.2740],
            [-2.0673, 0.5604, 1.2592, -0.5447],
            [-0.1340, -0.2763, 0.1530, 0.2323],
            [1.6747, -1.3353, -0.9393, 1.0],
        ],
    },
    KelloggData {
        alpha: 0.2,
        nu1: 67.1849,
        coeffs: [
            [0.0134, 0.2523, -0.0657, -0.2527],
            [-0.8757, 0.3244, 0.9149, -0.5713],
            [-0.1591, -0.1963, 0.2017, 0.1658],
            [0.5178, -0.7772, -0.4044, 1.0],
        ],
    },
    KelloggData {
        alpha: 0.3,
        nu1: 29.3162,
        coeffs: [
            [0.0179, 0.2853, -0.1169, -0.3016],
            [-0.5390, 0.2564, 0.7106, -0.7233],
            [-0.2414, -0.1532, 0.3127, 0.0827],
            [0.1094, -0.5867, 0.1675, 1.0],
        ],
    },
    KelloggData {
        alpha: 0.4,
        nu1: 16.0517,
        coeffs: [
            [0.0434, 0.5249, -0.2808, -0.5181],
            [-0.7143, 0.4998, 0.6608, -1.2022],
            [-0.5126, -0.1209, 0.5795, -0.1070],
            [-0.2546, -0.8338, 0.9392, 1.0],
        ],
    },
    KelloggData {
        alpha: 0.5,
        nu1: 9.8990,
        coeffs: [
            [0.2364, 2.2978, -1.4918, -2.0518],
            [-2.2978, 2.3401, 1.0, -4.5437],
            [-2.2978, 0.2364, 2.0518, -1.4918],
            [-2.3401, -2.2978, 4.5437, 1.0],
        ],
    },
];

/// Reference data set `1..=5` (`α` = 0.13, 0.2, 0.3, 0.4, 0.5).
pub fn table(id: usize) -> Result<KelloggData> {
    TABLES
        .get(id.wrapping_sub(1))
        .copied()
        .ok_or_else(|| Error::Config(format!("data set must be 1..=5, got {id}")))
}

impl KelloggData {
    pub fn nu(&self, i: usize) -> f64 {
        if i % 2 == 1 {
            self.nu1
        } else {
            1.0
        }
    }

    pub fn viscosity(&self) -> Viscosity {
        Viscosity::checkerboard(self.nu1)
    }

    /// `[ν₁, a₁, b₁, c₁, d₁, …, c₄]`; `d₄` is fixed.
    fn unknowns(&self) -> DVector<f64> {
        let mut x = DVector::zeros(16);
        x[0] = self.nu1;
        for k in 0..15 {
            x[k + 1] = self.coeffs[k / 4][k % 4];
        }
        x
    }

    fn from_unknowns(alpha: f64, x: &DVector<f64>, d4: f64) -> Self {
        let mut coeffs = [[0.0; 4]; 4];
        for k in 0..15 {
            coeffs[k / 4][k % 4] = x[k + 1];
        }
        coeffs[3][3] = d4;
        Self { alpha, nu1: x[0], coeffs }
    }

    /// Rows `i = 1..4`, columns `a, b, c, d`.
    pub fn format_table(&self) -> String {
        let mut s = format!("alpha = {:.4}, nu1 = nu3 = {:.4}, nu2 = nu4 = 1\n", self.alpha, self.nu1);
        s.push_str(&format!("{:>3} {:>10} {:>10} {:>10} {:>10}\n", "i", "a_i", "b_i", "c_i", "d_i"));
        for (i, row) in self.coeffs.iter().enumerate() {
            s.push_str(&format!("{:>3} {:>10.4} {:>10.4} {:>10.4} {:>10.4}\n", i + 1, row[0], row[1], row[2], row[3]));
        }
        s
    }
}

/// The sixteen interface equations: continuity of `u₁`, `u₂` on the four
/// half-axes, then continuity of the normal stress.
pub fn kellogg_residual(data: &KelloggData) -> [f64; 16] {
    let al = data.alpha;
    let [[a1, b1, c1, d1], [a2, b2, c2, d2], [a3, b3, c3, d3], [a4, b4, c4, d4]] = data.coeffs;
    let (n1, n2, n3, n4) = (data.nu1, 1.0, data.nu1, 1.0);
    let (sh, ch) = (FRAC_PI_2 * al).sin_cos();
    let (sq, cq) = (PI * al).sin_cos();
    let (st, ct) = (1.5 * PI * al).sin_cos();
    let (sw, cw) = (2.0 * PI * al).sin_cos();
    [
        -(al * (c1 - c2) + (b1 - b2)) * ch + (al * (d1 - d2) - (a1 - a2)) * sh,
        (a2 - a3) * sq + (b2 - b3) * cq,
        -(al * (c3 - c4) + (b3 - b4)) * ct + (al * (d3 - d4) - (a3 - a4)) * st,
        a4 * sw + b4 * cw - b1,
        (c1 - c2) * sh + (d1 - d2) * ch,
        (al * (a2 - a3) - (d2 - d3)) * cq - (al * (b2 - b3) + (c2 - c3)) * sq,
        (c3 - c4) * st + (d3 - d4) * ct,
        (al * a4 - d4) * cw - (al * b4 + c4) * sw - (al * a1 - d1),
        n1 * ((al * c1 + b1) * sh + (al * d1 - a1) * ch) - n2 * ((al * c2 + b2) * sh + (al * d2 - a2) * ch),
        n2 * (a2 * cq - b2 * sq) - n3 * (a3 * cq - b3 * sq),
        n3 * ((al * c3 + b3) * st + (al * d3 - a3) * ct) - n4 * ((al * c4 + b4) * st + (al * d4 - a4) * ct),
        n4 * (a4 * cw - b4 * sw) - n1 * a1,
        n1 * (c1 * ch - d1 * sh) - n2 * (c2 * ch - d2 * sh),
        n2 * ((al * a2 - d2) * sq + (al * b2 + c2) * cq) - n3 * ((al * a3 - d3) * sq + (al * b3 + c3) * cq),
        n3 * (c3 * ct - d3 * st) - n4 * (c4 * ct - d4 * st),
        n4 * ((al * a4 - d4) * sw + (al * b4 + c4) * cw) - n1 * (al * b1 + c1),
    ]
}

/// Residual with the stress-continuity rows divided by the larger viscosity,
/// so both halves are measured on the scale of the coefficients.
pub fn scaled_residual(data: &KelloggData) -> [f64; 16] {
    let mut r = kellogg_residual(data);
    let s = data.nu1.abs().max(1.0);
    for v in &mut r[8..] {
        *v /= s;
    }
    r
}

/// Largest absolute entry.
pub fn max_abs(r: &[f64]) -> f64 {
    r.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_starts: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 100, max_starts: 200, seed: 20240607 }
    }
}

/// Damped Newton with minimum-norm (pseudo-inverse) steps and a central
/// finite-difference Jacobian. Returns the final iterate and its residual.
fn newton(alpha: f64, x0: DVector<f64>, opts: &SolveOptions) -> (DVector<f64>, f64) {
    let f = |x: &DVector<f64>| DVector::from_column_slice(&kellogg_residual(&KelloggData::from_unknowns(alpha, x, 1.0)));
    let mut x = x0;
    let mut fx = f(&x);
    for _ in 0..opts.max_iter {
        if max_abs(fx.as_slice()) <= 1e-3 * opts.tol {
            break;
        }
        let mut jac = DMatrix::zeros(16, 16);
        for k in 0..16 {
            let h = 1e-7 * x[k].abs().max(1.0);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            jac.set_column(k, &((f(&xp) - f(&xm)) / (2.0 * h)));
        }
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        let Ok(dx) = svd.solve(&(-&fx), 1e-10 * smax) else { break };
        let norm0 = fx.norm();
        let mut t = 1.0;
        let mut accepted = false;
        while t >= 1e-4 {
            let trial = &x + &dx * t;
            let ft = f(&trial);
            if ft.norm() < (1.0 - 1e-4 * t) * norm0 {
                x = trial;
                fx = ft;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || !x.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    let r = max_abs(fx.as_slice());
    (x, r)
}

/// Coefficient-to-residual matrix for fixed `α` and `ν₁` (the system is
/// linear in the coefficients).
fn coefficient_matrix(alpha: f64, nu1: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(16, 16);
    for k in 0..16 {
        let mut coeffs = [[0.0; 4]; 4];
        coeffs[k / 4][k % 4] = 1.0;
        let r = kellogg_residual(&KelloggData { alpha, nu1, coeffs });
        m.set_column(k, &DVector::from_column_slice(&r));
    }
    m
}

/// Within the null space of the coefficient matrix at the converged `ν₁`,
/// picks the coefficients with `d₄ = 1` closest (in the Euclidean norm) to
/// `seed`. Returns `None` when the null space is one-dimensional.
fn project_to_seed(sol: &KelloggData, seed: &KelloggData) -> Option<KelloggData> {
    let m = coefficient_matrix(sol.alpha, sol.nu1);
    let svd = m.svd(false, true);
    let v_t = svd.v_t.as_ref()?;
    let smax = svd.singular_values.max();
    let null: Vec<usize> = (0..16).filter(|&k| svd.singular_values[k] <= 1e-9 * smax).collect();
    if null.len() < 2 {
        return None;
    }
    let basis = DMatrix::from_fn(16, null.len(), |r, c| v_t[(null[c], r)]);
    let c0 = DVector::from_fn(16, |k, _| seed.coeffs[k / 4][k % 4]);
    let y0 = basis.transpose() * &c0;
    let e = basis.row(15).transpose();
    let denom = e.norm_squared();
    if denom < 1e-14 {
        return None;
    }
    let y = &y0 + &e * ((1.0 - e.dot(&y0)) / denom);
    let c = &basis * y;
    let mut coeffs = [[0.0; 4]; 4];
    for k in 0..16 {
        coeffs[k / 4][k % 4] = c[k];
    }
    coeffs[3][3] = 1.0;
    Some(KelloggData { alpha: sol.alpha, nu1: sol.nu1, coeffs })
}

/// Solves the interface system for `α ∈ (0, 1)`.
///
/// With an initial guess, Newton runs from it and the result is moved along
/// the solution family to the member nearest the guess. Without one, random
/// Gaussian starts are tried until one converges with `ν₁ > 1`.
pub fn solve_kellogg(alpha: f64, init: Option<&KelloggData>) -> Result<KelloggData> {
    solve_kellogg_with(alpha, init, &SolveOptions::default())
}

pub fn solve_kellogg_with(alpha: f64, init: Option<&KelloggData>, opts: &SolveOptions) -> Result<KelloggData> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let accept = |x: &DVector<f64>, r: f64| r <= opts.tol && x[0] > 1.0 && x.iter().all(|v| v.is_finite());
    let mut best = f64::INFINITY;
    if let Some(seed) = init {
        let (x, r) = newton(alpha, seed.with_alpha(alpha).unknowns(), opts);
        best = best.min(r);
        if accept(&x, r) {
            let sol = KelloggData::from_unknowns(alpha, &x, 1.0);
            if let Some(p) = project_to_seed(&sol, seed) {
                if max_abs(&kellogg_residual(&p)) <= opts.tol {
                    return Ok(p);
                }
            }
            return Ok(sol);
        }
    }
    let mut rng = rand::rngs::StdRng::seed_from_u64(opts.seed);
    let normal = Normal::<f64>::new(0.0, 1.0).expect("unit normal");
    for _ in 0..opts.max_starts {
        let mut x = DVector::from_fn(16, |_, _| normal.sample(&mut rng));
        x[0] = (3.0 + 1.5 * normal.sample(&mut rng)).exp().max(1.5);
        let (x, r) = newton(alpha, x, opts);
        best = best.min(r);
        if accept(&x, r) {
            return Ok(KelloggData::from_unknowns(alpha, &x, 1.0));
        }
    }
    Err(Error::NoConvergence { best_residual: best })
}

impl KelloggData {
    fn with_alpha(&self, alpha: f64) -> Self {
        Self { alpha, ..*self }
    }
}

/// Polar angle in `[0, 2π)`.
fn polar_angle(p: Vec2) -> f64 {
    let t = p.y.atan2(p.x);
    if t < 0.0 {
        t + 2.0 * PI
    } else {
        t
    }
}

/// Quadrant from the polar angle: `Ω₁ = [0, π/2)`, …, `Ω₄ = [3π/2, 2π)`.
pub fn quadrant_of(p: Vec2) -> usize {
    ((polar_angle(p) / FRAC_PI_2).floor() as usize).min(3) + 1
}

/// Singular exact solution built from solved coefficients.
#[derive(Debug, Clone, Copy)]
pub struct ExactSolution {
    pub data: KelloggData,
}

/// Potential components and their derivatives up to second order.
struct Potential {
    b: [f64; 2],
    bx: [f64; 2],
    by: [f64; 2],
    bxx: [f64; 2],
    bxy: [f64; 2],
}

impl ExactSolution {
    pub fn new(data: KelloggData) -> Self {
        Self { data }
    }

    fn potential(&self, i: usize, r: f64, theta: f64) -> Potential {
        let al = self.data.alpha;
        let [a, b, c, d] = self.data.coeffs[i - 1];
        // Re(w z^β) and Re(i w z^β) for z = r e^{iϑ}
        let re = |wr: f64, wi: f64, beta: f64| {
            let (s, co) = (beta * theta).sin_cos();
            let m = r.powf(beta);
            (m * (wr * co - wi * s), m * (-wr * s - wi * co))
        };
        let mut p = Potential { b: [0.0; 2], bx: [0.0; 2], by: [0.0; 2], bxx: [0.0; 2], bxy: [0.0; 2] };
        for (k, (wr, wi)) in [(b, -a), (d, -c)].into_iter().enumerate() {
            p.b[k] = re(wr, wi, al).0;
            let (x1, y1) = re(wr, wi, al - 1.0);
            p.bx[k] = al * x1;
            p.by[k] = al * y1;
            let (x2, y2) = re(wr, wi, al - 2.0);
            p.bxx[k] = al * (al - 1.0) * x2;
            p.bxy[k] = al * (al - 1.0) * y2;
        }
        p
    }

    /// Harmonic potential `(B₁, B₂)` on quadrant `i`.
    pub fn potential_in(&self, i: usize, q: Vec2) -> Result<(f64, f64)> {
        let (r, theta) = self.branch(i, q)?;
        let p = self.potential(i, r, theta);
        Ok((p.b[0], p.b[1]))
    }

    /// Polar coordinates with the angle on quadrant `i`'s branch; the
    /// positive x-axis is `0` for quadrant 1 and `2π` for quadrant 4.
    fn branch(&self, i: usize, q: Vec2) -> Result<(f64, f64)> {
        let r = q.norm();
        if r == 0.0 {
            return Err(Error::SingularPoint);
        }
        let mut theta = polar_angle(q);
        if i == 4 && theta < FRAC_PI_2 {
            theta += 2.0 * PI;
        } else if i == 1 && theta > 3.0 * FRAC_PI_2 {
            theta -= 2.0 * PI;
        }
        Ok((r, theta))
    }

    /// Fields using the formulas of quadrant `i`, regardless of where `q` lies.
    pub fn eval_in(&self, i: usize, q: Vec2) -> Result<Fields> {
        let (r, theta) = self.branch(i, q)?;
        let pot = self.potential(i, r, theta);
        let (x, y) = (q.x, q.y);
        let [b1, b2] = pot.b;
        let [b1x, b2x] = pot.bx;
        let [b1y, b2y] = pot.by;
        let [b1xx, b2xx] = pot.bxx;
        let [b1xy, b2xy] = pot.bxy;
        let u = Vec2::new(x * b1x + y * b2x - b1, x * b1y + y * b2y - b2);
        let du1dx = x * b1xx + y * b2xx;
        let du1dy = x * b1xy + b2x + y * b2xy - b1y;
        let du2dx = b1y + x * b1xy + y * b2xy - b2x;
        let grad_u = Tensor2::new(du1dx, du1dy, du2dx, -du1dx);
        let nu = self.data.nu(i);
        let p = nu * (b1x + b2y);
        let sigma = sym_part(grad_u) * nu - Tensor2::IDENTITY * p;
        Ok(Fields { u, grad_u, p, sigma })
    }

    /// Fields at `q ≠ 0`, on the quadrant containing `q`.
    pub fn eval_exact(&self, q: Vec2) -> Result<Fields> {
        self.eval_in(quadrant_of(q), q)
    }

    /// Largest relative jump of `u` and `σn` across the four interface rays
    /// at the given radii, from one-sided evaluations.
    pub fn check_jumps(&self, radii: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 1..=4 {
            let angle = j as f64 * FRAC_PI_2;
            let n = Vec2::new(-angle.sin(), angle.cos());
            let (below, above) = (j, j % 4 + 1);
            for &r in radii {
                let q = Vec2::new(r * angle.cos(), r * angle.sin());
                let (Ok(lo), Ok(hi)) = (self.eval_in(below, q), self.eval_in(above, q)) else { continue };
                let ju = (lo.u - hi.u).norm() / (lo.u.norm() + hi.u.norm()).max(f64::MIN_POSITIVE);
                let js = (lo.sigma.apply(n) - hi.sigma.apply(n)).norm() / (lo.sigma.norm() + hi.sigma.norm()).max(f64::MIN_POSITIVE);
                worst = worst.max(ju).max(js);
            }
        }
        worst
    }
}

impl ExactFields for ExactSolution {
    fn viscosity(&self) -> Viscosity {
        self.data.viscosity()
    }

    /// At the origin only the velocity (zero) is meaningful; the other
    /// fields are returned as zero.
    fn fields(&self, p: Vec2) -> Fields {
        self.eval_exact(p).unwrap_or(Fields { u: Vec2::ZERO, grad_u: Tensor2::ZERO, p: 0.0, sigma: Tensor2::ZERO })
    }

    fn source(&self, _: Vec2) -> Vec2 {
        Vec2::ZERO
    }

    fn singular_exponent(&self) -> Option<f64> {
        Some(self.data.alpha)
    }
}
