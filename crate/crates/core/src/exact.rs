//! Reference solutions with known stress and velocity.

use std::f64::consts::PI;

use crate::fespace::Viscosity;
use crate::tensor::{sym_part, Tensor2, Vec2};

/// Exact fields at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fields {
    pub u: Vec2,
    pub grad_u: Tensor2,
    pub p: f64,
    pub sigma: Tensor2,
}

/// A Stokes interface solution on `[-1, 1]²` with `σ = ν ε(u) − p I`,
/// `−div σ = f` and `u = g` on the boundary.
pub trait ExactFields: Sync {
    fn viscosity(&self) -> Viscosity;

    fn fields(&self, p: Vec2) -> Fields;

    fn source(&self, p: Vec2) -> Vec2;

    fn velocity(&self, p: Vec2) -> Vec2 {
        self.fields(p).u
    }

    /// Exponent `α` of an `r^α` singularity of `u` at the origin.
    fn singular_exponent(&self) -> Option<f64> {
        None
    }

    /// Whether the solution lies in the lowest-order discrete spaces.
    fn representable(&self) -> bool {
        false
    }
}

/// Shifts the stress by a multiple of the identity (equivalently the
/// pressure by a constant).
#[derive(Debug, Clone, Copy)]
pub struct Shifted<E> {
    pub inner: E,
    pub shift: f64,
}

impl<E: ExactFields> ExactFields for Shifted<E> {
    fn viscosity(&self) -> Viscosity {
        self.inner.viscosity()
    }

    fn fields(&self, p: Vec2) -> Fields {
        let mut f = self.inner.fields(p);
        f.sigma -= Tensor2::IDENTITY * self.shift;
        f.p += self.shift;
        f
    }

    fn source(&self, p: Vec2) -> Vec2 {
        self.inner.source(p)
    }

    fn velocity(&self, p: Vec2) -> Vec2 {
        self.inner.velocity(p)
    }

    fn singular_exponent(&self) -> Option<f64> {
        self.inner.singular_exponent()
    }

    fn representable(&self) -> bool {
        self.inner.representable()
    }
}

fn s0(t: f64) -> f64 {
    (PI * t).sin().powi(3)
}

fn s1(t: f64) -> f64 {
    let (s, c) = (PI * t).sin_cos();
    3.0 * PI * s * s * c
}

fn s2(t: f64) -> f64 {
    let s = (PI * t).sin();
    3.0 * PI * PI * s * (2.0 - 3.0 * s * s)
}

fn s3(t: f64) -> f64 {
    let (s, c) = (PI * t).sin_cos();
    3.0 * PI.powi(3) * c * (2.0 - 9.0 * s * s)
}

/// Smooth divergence-free flow `u = curl ψ`, `ψ = sin³(πx) sin³(πy)`, with
/// pressure `cos(πx) cos(πy)`. Both `u` and `ε(u)` vanish on the axes, so the
/// stress has continuous normal traces for any piecewise-constant viscosity.
#[derive(Debug, Clone, Copy)]
pub struct SmoothCase {
    pub nu: Viscosity,
}

impl ExactFields for SmoothCase {
    fn viscosity(&self) -> Viscosity {
        self.nu
    }

    fn fields(&self, q: Vec2) -> Fields {
        let (x, y) = (q.x, q.y);
        let u = Vec2::new(s0(x) * s1(y), -s1(x) * s0(y));
        let grad_u = Tensor2::new(s1(x) * s1(y), s0(x) * s2(y), -s2(x) * s0(y), -s1(x) * s1(y));
        let p = (PI * x).cos() * (PI * y).cos();
        let nu = self.nu.get(crate::mesh::quadrant(q));
        let sigma = sym_part(grad_u) * nu - Tensor2::IDENTITY * p;
        Fields { u, grad_u, p, sigma }
    }

    fn source(&self, q: Vec2) -> Vec2 {
        let (x, y) = (q.x, q.y);
        let nu = self.nu.get(crate::mesh::quadrant(q));
        let lap = Vec2::new(s2(x) * s1(y) + s0(x) * s3(y), -s3(x) * s0(y) - s1(x) * s2(y));
        let grad_p = Vec2::new(-PI * (PI * x).sin() * (PI * y).cos(), -PI * (PI * x).cos() * (PI * y).sin());
        grad_p - lap * (0.5 * nu)
    }
}

/// Rigid rotation `u = (y, −x)` with `σ = 0` and `f = 0`.
#[derive(Debug, Clone, Copy)]
pub struct RigidRotation {
    pub nu: Viscosity,
}

impl ExactFields for RigidRotation {
    fn viscosity(&self) -> Viscosity {
        self.nu
    }

    fn fields(&self, q: Vec2) -> Fields {
        Fields {
            u: Vec2::new(q.y, -q.x),
            grad_u: Tensor2::new(0.0, 1.0, -1.0, 0.0),
            p: 0.0,
            sigma: Tensor2::ZERO,
        }
    }

    fn source(&self, _: Vec2) -> Vec2 {
        Vec2::ZERO
    }

    fn representable(&self) -> bool {
        true
    }
}
