//! 2×2 complex matrices and a dense complex solver.

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use faer::linalg::solvers::Solve;
use faer::Mat;

use crate::C64;

/// A 2×2 complex matrix stored row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct M2(pub [[C64; 2]; 2]);

impl M2 {
    pub const ZERO: M2 = M2([[C64 { re: 0.0, im: 0.0 }; 2]; 2]);

    pub const IDENTITY: M2 = M2([
        [C64 { re: 1.0, im: 0.0 }, C64 { re: 0.0, im: 0.0 }],
        [C64 { re: 0.0, im: 0.0 }, C64 { re: 1.0, im: 0.0 }],
    ]);

    #[inline]
    pub fn new(a: C64, b: C64, c: C64, d: C64) -> M2 {
        M2([[a, b], [c, d]])
    }

    /// `[[1, 0], [x, 1]]`
    #[inline]
    pub fn lower(x: C64) -> M2 {
        M2::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), x, C64::new(1.0, 0.0))
    }

    /// `[[1, x], [0, 1]]`
    #[inline]
    pub fn upper(x: C64) -> M2 {
        M2::new(C64::new(1.0, 0.0), x, C64::new(0.0, 0.0), C64::new(1.0, 0.0))
    }

    #[inline]
    pub fn diag(a: C64, d: C64) -> M2 {
        M2::new(a, C64::new(0.0, 0.0), C64::new(0.0, 0.0), d)
    }

    #[inline]
    pub fn det(&self) -> C64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn inv(&self) -> M2 {
        let d = self.det();
        M2::new(self.0[1][1] / d, -self.0[0][1] / d, -self.0[1][0] / d, self.0[0][0] / d)
    }

    /// Entrywise complex conjugate.
    pub fn conj(&self) -> M2 {
        M2::new(
            self.0[0][0].conj(),
            self.0[0][1].conj(),
            self.0[1][0].conj(),
            self.0[1][1].conj(),
        )
    }

    pub fn scale(&self, s: C64) -> M2 {
        M2::new(self.0[0][0] * s, self.0[0][1] * s, self.0[1][0] * s, self.0[1][1] * s)
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Conjugation `sigma3 · self · sigma3`.
    pub fn sigma3_conj(&self) -> M2 {
        M2::new(self.0[0][0], -self.0[0][1], -self.0[1][0], self.0[1][1])
    }

    /// `diag(d, 1/d) · self · diag(1/d, d)`, i.e. `d^{sigma3} self d^{-sigma3}`.
    pub fn conj_by_diag(&self, d: C64) -> M2 {
        M2::new(self.0[0][0], self.0[0][1] * d * d, self.0[1][0] / (d * d), self.0[1][1])
    }
}

impl Index<(usize, usize)> for M2 {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.0[i][j]
    }
}

impl IndexMut<(usize, usize)> for M2 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.0[i][j]
    }
}

impl Mul for M2 {
    type Output = M2;
    fn mul(self, o: M2) -> M2 {
        let a = &self.0;
        let b = &o.0;
        M2([
            [a[0][0] * b[0][0] + a[0][1] * b[1][0], a[0][0] * b[0][1] + a[0][1] * b[1][1]],
            [a[1][0] * b[0][0] + a[1][1] * b[1][0], a[1][0] * b[0][1] + a[1][1] * b[1][1]],
        ])
    }
}

impl Mul<C64> for M2 {
    type Output = M2;
    fn mul(self, s: C64) -> M2 {
        self.scale(s)
    }
}

impl Mul<f64> for M2 {
    type Output = M2;
    fn mul(self, s: f64) -> M2 {
        self.scale(C64::new(s, 0.0))
    }
}

impl Add for M2 {
    type Output = M2;
    fn add(self, o: M2) -> M2 {
        let mut r = self;
        for i in 0..2 {
            for j in 0..2 {
                r.0[i][j] += o.0[i][j];
            }
        }
        r
    }
}

impl Sub for M2 {
    type Output = M2;
    fn sub(self, o: M2) -> M2 {
        let mut r = self;
        for i in 0..2 {
            for j in 0..2 {
                r.0[i][j] -= o.0[i][j];
            }
        }
        r
    }
}

impl Neg for M2 {
    type Output = M2;
    fn neg(self) -> M2 {
        self.scale(C64::new(-1.0, 0.0))
    }
}

/// Result of a dense LU solve.
pub struct DenseSolve {
    /// Solution columns, one per right-hand side.
    pub x: Vec<Vec<C64>>,
    /// Ratio of smallest to largest pivot modulus of the LU factor.
    pub pivot_ratio: f64,
}

/// Solves `A X = B` for a dense complex matrix given in row-major order.
pub fn solve_dense(n: usize, a: &[C64], rhs: &[Vec<C64>]) -> DenseSolve {
    assert_eq!(a.len(), n * n);
    let m = Mat::<C64>::from_fn(n, n, |i, j| a[i * n + j]);
    let b = Mat::<C64>::from_fn(n, rhs.len(), |i, j| rhs[j][i]);
    let lu = m.partial_piv_lu();
    let u = lu.U();
    let mut pmin = f64::INFINITY;
    let mut pmax = 0.0f64;
    for i in 0..n {
        let p = u[(i, i)].norm();
        pmin = pmin.min(p);
        pmax = pmax.max(p);
    }
    let sol = lu.solve(&b);
    let x = (0..rhs.len())
        .map(|j| (0..n).map(|i| sol[(i, j)]).collect())
        .collect();
    DenseSolve {
        x,
        pivot_ratio: if pmax > 0.0 { pmin / pmax } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c64;

    #[test]
    fn inverse_roundtrip() {
        let m = M2::new(c64(1.0, 2.0), c64(0.5, -1.0), c64(-0.3, 0.1), c64(2.0, 0.0));
        let p = m * m.inv();
        assert!((p - M2::IDENTITY).max_abs() < 1e-14);
    }

    #[test]
    fn triangular_factors_have_unit_det() {
        let x = c64(3.0, -4.0);
        assert!((M2::lower(x).det() - 1.0).norm() < 1e-15);
        assert!((M2::upper(x).det() - 1.0).norm() < 1e-15);
    }

    #[test]
    fn dense_solve_small() {
        let a = vec![c64(2.0, 0.0), c64(1.0, 1.0), c64(0.0, -1.0), c64(3.0, 0.0)];
        let b = vec![vec![c64(1.0, 0.0), c64(0.0, 2.0)]];
        let s = solve_dense(2, &a, &b);
        let x = &s.x[0];
        let r0 = a[0] * x[0] + a[1] * x[1] - b[0][0];
        let r1 = a[2] * x[0] + a[3] * x[1] - b[0][1];
        assert!(r0.norm() < 1e-14 && r1.norm() < 1e-14);
        assert!(s.pivot_ratio > 0.1);
    }
}
