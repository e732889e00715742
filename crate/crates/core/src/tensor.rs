//! Small fixed-size algebra for the planar problem: 2-vectors and 2×2 tensors.
//!
//! Tensors are stored row-major. The divergence of a tensor field acts row-wise,
//! so `(div τ)_i = div(τ_i)` where `τ_i` is the i-th row.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    /// 2D cross product (z-component of the 3D cross product).
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn component(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            _ => panic!("Vec2 component index {i} out of range"),
        }
    }

    pub fn unit(i: usize) -> Self {
        match i {
            0 => Vec2::new(1.0, 0.0),
            1 => Vec2::new(0.0, 1.0),
            _ => panic!("Vec2 unit index {i} out of range"),
        }
    }

    pub fn from_array(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }

    pub fn to_array(self) -> [f64; 2] {
        [self.x, self.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

/// A 2×2 tensor `[[t11, t12], [t21, t22]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tensor2 {
    pub t11: f64,
    pub t12: f64,
    pub t21: f64,
    pub t22: f64,
}

impl Tensor2 {
    pub const ZERO: Tensor2 = Tensor2::new(0.0, 0.0, 0.0, 0.0);
    pub const IDENTITY: Tensor2 = Tensor2::new(1.0, 0.0, 0.0, 1.0);

    pub const fn new(t11: f64, t12: f64, t21: f64, t22: f64) -> Self {
        Self { t11, t12, t21, t22 }
    }

    pub fn from_rows(r0: Vec2, r1: Vec2) -> Self {
        Self::new(r0.x, r0.y, r1.x, r1.y)
    }

    /// Tensor whose row `i` is `v` and whose other row is zero.
    pub fn with_row(i: usize, v: Vec2) -> Self {
        match i {
            0 => Self::from_rows(v, Vec2::ZERO),
            1 => Self::from_rows(Vec2::ZERO, v),
            _ => panic!("Tensor2 row index {i} out of range"),
        }
    }

    pub fn row(&self, i: usize) -> Vec2 {
        match i {
            0 => Vec2::new(self.t11, self.t12),
            1 => Vec2::new(self.t21, self.t22),
            _ => panic!("Tensor2 row index {i} out of range"),
        }
    }

    pub fn trace(&self) -> f64 {
        self.t11 + self.t22
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.t11, self.t21, self.t12, self.t22)
    }

    /// Frobenius pairing `σ : τ`.
    pub fn ddot(&self, o: &Tensor2) -> f64 {
        self.t11 * o.t11 + self.t12 * o.t12 + self.t21 * o.t21 + self.t22 * o.t22
    }

    pub fn norm_sq(&self) -> f64 {
        self.ddot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Tensor applied to a vector: `(τ n)_i = τ_i · n`, the row-wise normal trace.
    pub fn apply(&self, n: Vec2) -> Vec2 {
        Vec2::new(self.t11 * n.x + self.t12 * n.y, self.t21 * n.x + self.t22 * n.y)
    }

    pub fn is_finite(&self) -> bool {
        self.t11.is_finite() && self.t12.is_finite() && self.t21.is_finite() && self.t22.is_finite()
    }
}

impl Add for Tensor2 {
    type Output = Tensor2;
    fn add(self, o: Tensor2) -> Tensor2 {
        Tensor2::new(self.t11 + o.t11, self.t12 + o.t12, self.t21 + o.t21, self.t22 + o.t22)
    }
}

impl Sub for Tensor2 {
    type Output = Tensor2;
    fn sub(self, o: Tensor2) -> Tensor2 {
        Tensor2::new(self.t11 - o.t11, self.t12 - o.t12, self.t21 - o.t21, self.t22 - o.t22)
    }
}

impl Neg for Tensor2 {
    type Output = Tensor2;
    fn neg(self) -> Tensor2 {
        self * -1.0
    }
}

impl Mul<f64> for Tensor2 {
    type Output = Tensor2;
    fn mul(self, s: f64) -> Tensor2 {
        Tensor2::new(self.t11 * s, self.t12 * s, self.t21 * s, self.t22 * s)
    }
}

impl Mul<Tensor2> for f64 {
    type Output = Tensor2;
    fn mul(self, t: Tensor2) -> Tensor2 {
        t * self
    }
}

impl AddAssign for Tensor2 {
    fn add_assign(&mut self, o: Tensor2) {
        *self = *self + o;
    }
}

impl SubAssign for Tensor2 {
    fn sub_assign(&mut self, o: Tensor2) {
        *self = *self - o;
    }
}

/// Deviatoric part: `t - tr(t)/2 I`.
pub fn dev(t: Tensor2) -> Tensor2 {
    let half_tr = 0.5 * t.trace();
    Tensor2::new(t.t11 - half_tr, t.t12, t.t21, t.t22 - half_tr)
}

/// Symmetric part `(g + gᵗ)/2`; applied to a velocity gradient this is the strain.
pub fn sym_part(g: Tensor2) -> Tensor2 {
    let off = 0.5 * (g.t12 + g.t21);
    Tensor2::new(g.t11, off, off, g.t22)
}

/// Skew part `(g - gᵗ)/2`.
pub fn skew_part(g: Tensor2) -> Tensor2 {
    let off = 0.5 * (g.t12 - g.t21);
    Tensor2::new(0.0, off, -off, 0.0)
}

/// Outer product `a ⊗ b`, i.e. the tensor with entries `a_i b_j`.
pub fn outer(a: Vec2, b: Vec2) -> Tensor2 {
    Tensor2::new(a.x * b.x, a.x * b.y, a.y * b.x, a.y * b.y)
}
