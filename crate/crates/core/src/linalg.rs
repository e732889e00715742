//! Sparse matrices in triplet form and a direct LU solve.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Square sparse matrix accumulated as `(row, col, value)` triplets;
/// duplicates are summed.
#[derive(Debug, Clone, Default)]
pub struct SparseMatrix {
    pub n: usize,
    pub triplets: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(n: usize) -> Self {
        Self { n, triplets: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self { n, triplets: (0..n).map(|i| (i, i, 1.0)).collect() }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        if v != 0.0 {
            self.triplets.push((i, j, v));
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(i, j, v) in &self.triplets {
            y[i] += v * x[j];
        }
        y
    }

    /// Dense copy, for small checks.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n]; self.n];
        for &(i, j, v) in &self.triplets {
            a[i][j] += v;
        }
        a
    }

    /// Row and column scalings `r`, `c` such that `diag(r) A diag(c)` has
    /// entries of magnitude at most one with a unit entry in every row and column.
    fn equilibrate(&self) -> (Vec<f64>, Vec<f64>) {
        let mut r = vec![0.0f64; self.n];
        for &(i, _, v) in &self.triplets {
            r[i] = r[i].max(v.abs());
        }
        let r: Vec<f64> = r.into_iter().map(|m| if m > 0.0 { 1.0 / m } else { 1.0 }).collect();
        let mut c = vec![0.0f64; self.n];
        for &(i, j, v) in &self.triplets {
            c[j] = c[j].max((r[i] * v).abs());
        }
        let c = c.into_iter().map(|m| if m > 0.0 { 1.0 / m } else { 1.0 }).collect();
        (r, c)
    }

    fn factor(&self) -> Result<Factor> {
        let (rs, cs) = self.equilibrate();
        let trips: Vec<Triplet<usize, usize, f64>> = self.triplets.iter().map(|&(i, j, v)| Triplet::new(i, j, rs[i] * v * cs[j])).collect();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &trips)
            .map_err(|e| Error::Solver(format!("{e:?}")))?;
        let lu = a.sp_lu().map_err(|e| Error::Solver(format!("factorization failed: {e:?}")))?;
        Ok(Factor { lu, rs, cs })
    }

    /// Sparse LU factorization (after equilibration) and solve.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        self.check_rhs(rhs)?;
        if self.n == 0 {
            return Ok(Vec::new());
        }
        let f = self.factor()?;
        self.refine(rhs, |r| Ok(f.apply(r)))
    }

    /// Solve for a matrix whose row and column `border` are dense.
    ///
    /// The LU is computed for the matrix with that row and column replaced
    /// by the identity and `γwwᵀ` added, where the sparse `w` removes the
    /// kernel left behind by dropping the border. The exact inverse follows
    /// from a rank-3 Woodbury update.
    pub fn solve_bordered(&self, border: usize, w: &[(usize, f64)], gamma: f64, rhs: &[f64]) -> Result<Vec<f64>> {
        self.check_rhs(rhs)?;
        let n = self.n;
        let mut base = SparseMatrix::new(n);
        let mut row = vec![0.0; n];
        let mut col = vec![0.0; n];
        for &(i, j, v) in &self.triplets {
            if i == border {
                row[j] += v;
            } else if j == border {
                col[i] += v;
            } else {
                base.push(i, j, v);
            }
        }
        base.push(border, border, 1.0);
        for &(i, a) in w {
            for &(j, b) in w {
                base.push(i, j, gamma * a * b);
            }
        }
        let f = base.factor()?;
        // self = base + Σ u_k v_kᵀ
        let mut e = vec![0.0; n];
        e[border] = 1.0;
        let mut wv = vec![0.0; n];
        for &(i, a) in w {
            wv[i] += a;
        }
        let mut row_minus = row.clone();
        row_minus[border] -= 1.0;
        let us = [e.clone(), col, wv.clone()];
        let vs = [row_minus, e, wv.iter().map(|x| -gamma * x).collect::<Vec<_>>()];
        let z: Vec<Vec<f64>> = us.iter().map(|u| f.apply(u)).collect();
        let mut cap = Matrix3::<f64>::identity();
        for a in 0..3 {
            for b in 0..3 {
                cap[(a, b)] += dot(&vs[a], &z[b]);
            }
        }
        let cap = cap.lu();
        if cap.determinant().abs() < 1e-14 {
            return Err(Error::Solver("singular bordered system".into()));
        }
        self.refine(rhs, |r| {
            let y = f.apply(r);
            let t = Vector3::from_fn(|a, _| dot(&vs[a], &y));
            let c = cap.solve(&t).ok_or_else(|| Error::Solver("singular capacitance matrix".into()))?;
            Ok((0..n).map(|i| y[i] - (0..3).map(|b| z[b][i] * c[b]).sum::<f64>()).collect())
        })
    }

    fn check_rhs(&self, rhs: &[f64]) -> Result<()> {
        if rhs.len() != self.n {
            return Err(Error::Solver(format!("rhs length {} for a {}x{} matrix", rhs.len(), self.n, self.n)));
        }
        Ok(())
    }

    /// Iterative refinement with an approximate inverse, keeping only steps
    /// that reduce the residual.
    fn refine(&self, rhs: &[f64], apply: impl Fn(&[f64]) -> Result<Vec<f64>>) -> Result<Vec<f64>> {
        let mut x = apply(rhs)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("singular matrix (non-finite solution)".into()));
        }
        let nb = norm(rhs);
        let mut best = norm(&self.residual(&x, rhs));
        for _ in 0..8 {
            if best <= 1e-14 * nb {
                break;
            }
            let r = self.residual(&x, rhs);
            let trial: Vec<f64> = x.iter().zip(apply(&r)?).map(|(a, d)| a + d).collect();
            let rn = norm(&self.residual(&trial, rhs));
            if !(rn < best) {
                break;
            }
            x = trial;
            best = rn;
        }
        Ok(x)
    }

    /// `b − Ax` accumulated in double-double arithmetic.
    fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut hi = b.to_vec();
        let mut lo = vec![0.0; self.n];
        for &(i, j, v) in &self.triplets {
            let p = -v * x[j];
            let pe = (-v).mul_add(x[j], -p);
            let s = hi[i] + p;
            let bb = s - hi[i];
            let se = (hi[i] - (s - bb)) + (p - bb);
            hi[i] = s;
            lo[i] += se + pe;
        }
        hi.iter().zip(&lo).map(|(h, l)| h + l).collect()
    }

    /// `‖Ax − b‖ / ‖b‖`, or `‖Ax‖` when `b = 0`.
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let ax = self.matvec(x);
        let r = ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let nb = norm(b);
        if nb > 0.0 {
            r / nb
        } else {
            r
        }
    }

    /// MatrixMarket coordinate format (1-based indices, duplicates summed).
    pub fn to_matrix_market(&self) -> String {
        use std::collections::BTreeMap;
        use std::fmt::Write;
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(i, j, v) in &self.triplets {
            *merged.entry((j, i)).or_insert(0.0) += v;
        }
        let mut s = String::from("%%MatrixMarket matrix coordinate real general\n");
        writeln!(s, "{} {} {}", self.n, self.n, merged.len()).unwrap();
        for ((j, i), v) in merged {
            writeln!(s, "{} {} {:.17e}", i + 1, j + 1, v).unwrap();
        }
        s
    }
}

struct Factor {
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    rs: Vec<f64>,
    cs: Vec<f64>,
}

impl Factor {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let b = Col::<f64>::from_fn(r.len(), |i| self.rs[i] * r[i]);
        let x = self.lu.solve(&b);
        (0..r.len()).map(|i| self.cs[i] * x[i]).collect()
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
