//! Quadrature on the reference triangle and on edges.
//!
//! Triangle rules are given in barycentric coordinates with weights normalized
//! to sum to one, so `∫_K f ≈ |K| Σ w_q f(x_q)`. Low degrees use the classical
//! fully symmetric rules; from degree 6 upward a collapsed (conical) product of
//! Gauss–Legendre rules is used, which has positive weights and interior nodes.

use crate::error::{Error, Result};

/// Gauss–Legendre rule on `[0, 1]`; weights sum to one.
#[derive(Debug, Clone)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LineRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// `n`-point Gauss–Legendre rule mapped to `[0, 1]`.
pub fn gauss_legendre(n: usize) -> LineRule {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one point");
    let mut points = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // three-term recurrence for P_n and its derivative
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1,1] -> [0,1]; weights halve so they sum to one
        points[i] = 0.5 * (1.0 - x);
        points[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    LineRule { points, weights }
}

/// Rule on `[0, 1]` for integrands behaving like `t^(γ-1)` at `t = 0` with
/// `γ = exponent`. The substitution `t = w^(1/γ)` removes the singularity.
pub fn singular_line_rule(n: usize, exponent: f64) -> LineRule {
    let beta = (1.0 / exponent.clamp(0.05, 1.0)).max(1.0);
    let base = gauss_legendre(n);
    let (points, weights) = base
        .iter()
        .map(|(w, wt)| (w.powf(beta), wt * beta * w.powf(beta - 1.0)))
        .unzip();
    LineRule { points, weights }
}

/// Quadrature rule on the reference triangle.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// Barycentric coordinates of the nodes.
    pub points: Vec<[f64; 3]>,
    /// Weights normalized to the reference area (they sum to one).
    pub weights: Vec<f64>,
    /// Total degree of polynomials integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 3], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

pub const MAX_DEGREE: usize = 12;

/// Symmetric rule exact to at least `degree` on the reference triangle.
pub fn quadrature(degree: usize) -> Result<QuadratureRule> {
    let (points, weights, exact) = match degree {
        1 => (vec![[1.0 / 3.0; 3]], vec![1.0], 1),
        2 => {
            let a = 2.0 / 3.0;
            let b = 1.0 / 6.0;
            (orbit3(a, b), vec![1.0 / 3.0; 3], 2)
        }
        3 | 4 => {
            let mut p = orbit3(0.108_103_018_168_070, 0.445_948_490_915_965);
            p.extend(orbit3(0.816_847_572_980_459, 0.091_576_213_509_771));
            let mut w = vec![0.223_381_589_678_011; 3];
            w.extend([0.109_951_743_655_322; 3]);
            (p, w, 4)
        }
        5 => {
            let mut p = vec![[1.0 / 3.0; 3]];
            p.extend(orbit3(0.059_715_871_789_770, 0.470_142_064_105_115));
            p.extend(orbit3(0.797_426_985_353_087, 0.101_286_507_323_456));
            let mut w = vec![0.225];
            w.extend([0.132_394_152_788_506; 3]);
            w.extend([0.125_939_180_544_827; 3]);
            (p, w, 5)
        }
        6..=MAX_DEGREE => {
            let (p, w) = collapsed_product((degree + 3) / 2);
            (p, w, degree)
        }
        _ => return Err(Error::UnsupportedQuadratureDegree(degree)),
    };
    Ok(QuadratureRule { points, weights, degree: exact })
}

/// The three permutations of `(a, b, b)`.
fn orbit3(a: f64, b: f64) -> Vec<[f64; 3]> {
    vec![[a, b, b], [b, a, b], [b, b, a]]
}

/// Conical product rule: `x = s`, `y = (1 - s) t` on the unit right triangle.
fn collapsed_product(n: usize) -> (Vec<[f64; 3]>, Vec<f64>) {
    let g = gauss_legendre(n);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (s, ws) in g.iter() {
        for (t, wt) in g.iter() {
            let x = s;
            let y = (1.0 - s) * t;
            points.push([1.0 - x - y, x, y]);
            // Jacobian (1 - s), normalized by the reference area 1/2
            weights.push(2.0 * ws * wt * (1.0 - s));
        }
    }
    (points, weights)
}

/// Rule for a triangle whose local vertex `corner` carries an integrable
/// singularity of strength `exponent` (integrand ~ r^(2·exponent - 2)).
///
/// The triangle is graded geometrically toward the corner (ratio 1/2, `levels`
/// times); the three outer children of each level use `base`, and the final
/// corner cell uses a Duffy map with a power substitution in the radial
/// direction.
pub fn graded_rule(base: &QuadratureRule, corner: usize, exponent: f64, levels: usize) -> QuadratureRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let mut s = [0.0; 3];
    s[corner] = 1.0;
    let mut a = [0.0; 3];
    a[(corner + 1) % 3] = 1.0;
    let mut b = [0.0; 3];
    b[(corner + 2) % 3] = 1.0;
    let mut scale = 1.0;
    for _ in 0..levels {
        let msa = mid(s, a);
        let msb = mid(s, b);
        let mab = mid(a, b);
        scale *= 0.25;
        for tri in [[msa, a, mab], [msb, mab, b], [msa, mab, msb]] {
            push_mapped(base, &tri, scale, &mut points, &mut weights);
        }
        a = msa;
        b = msb;
    }
    // Duffy map from the corner with radial substitution
    let n = base.degree / 2 + 3;
    let radial = singular_line_rule(n, 2.0 * exponent.clamp(0.05, 1.0));
    let angular = gauss_legendre(n);
    for (r, wr) in radial.iter() {
        for (t, wt) in angular.iter() {
            let mut p = [0.0; 3];
            for k in 0..3 {
                p[k] = s[k] + r * ((1.0 - t) * (a[k] - s[k]) + t * (b[k] - s[k]));
            }
            points.push(p);
            weights.push(scale * 2.0 * wr * wt * r);
        }
    }
    QuadratureRule { points, weights, degree: base.degree }
}

fn mid(p: [f64; 3], q: [f64; 3]) -> [f64; 3] {
    [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]), 0.5 * (p[2] + q[2])]
}

fn push_mapped(base: &QuadratureRule, tri: &[[f64; 3]; 3], scale: f64, points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>) {
    for (lam, w) in base.iter() {
        let mut p = [0.0; 3];
        for (k, pk) in p.iter_mut().enumerate() {
            *pk = lam[0] * tri[0][k] + lam[1] * tri[1][k] + lam[2] * tri[2][k];
        }
        points.push(p);
        weights.push(w * scale);
    }
}
