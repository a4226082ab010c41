//! Cauchy transforms of Legendre expansions on straight panels.
//!
//! On a panel parametrized by `xi in [-1, 1]`,
//! `int P_n(s) / (s - xi) ds = -2 Q_n(xi)`, so the Cauchy transform of a
//! Legendre series reduces to Legendre functions of the second kind.

use crate::C64;

/// `Q_0..Q_{n-1}` at a complex point off `[-1, 1]`.
pub fn legendre_q_complex(n: usize, z: C64) -> Vec<C64> {
    let rho = (z + (z * z - 1.0).sqrt()).norm();
    let rho = rho.max(1.0 / rho);
    let q0 = 0.5 * ((z + 1.0).ln() - (z - 1.0).ln());
    if n == 0 {
        return Vec::new();
    }
    if rho < 1.5 || n <= 2 {
        let mut q = vec![C64::new(0.0, 0.0); n];
        q[0] = q0;
        if n > 1 {
            q[1] = z * q0 - 1.0;
        }
        for k in 1..n.saturating_sub(1) {
            let kf = k as f64;
            q[k + 1] = ((2.0 * kf + 1.0) * z * q[k] - kf * q[k - 1]) / (kf + 1.0);
        }
        return q;
    }
    // Miller's backward recurrence, normalised by the exact Q_0.
    let extra = (40.0 / rho.ln()).ceil() as usize;
    let top = n + extra;
    let mut qk1 = C64::new(0.0, 0.0);
    let mut qk = C64::new(1.0, 0.0);
    let mut out = vec![C64::new(0.0, 0.0); n];
    for k in (1..=top).rev() {
        let kf = k as f64;
        let qm = ((2.0 * kf + 1.0) * z * qk - (kf + 1.0) * qk1) / kf;
        qk1 = qk;
        qk = qm;
        if k - 1 < n {
            out[k - 1] = qm;
        }
        let s = qk.norm();
        if s > 1e200 {
            qk /= s;
            qk1 /= s;
            for v in out.iter_mut() {
                *v /= s;
            }
        }
    }
    let scale = q0 / out[0];
    for v in out.iter_mut() {
        *v *= scale;
    }
    out
}

/// Ferrers functions `Q_0..Q_{n-1}` on `(-1, 1)`.
pub fn legendre_q_real(n: usize, x: f64) -> Vec<f64> {
    let mut q = vec![0.0; n];
    if n == 0 {
        return q;
    }
    q[0] = 0.5 * ((1.0 + x) / (1.0 - x)).ln();
    if n > 1 {
        q[1] = x * q[0] - 1.0;
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        q[k + 1] = ((2.0 * kf + 1.0) * x * q[k] - kf * q[k - 1]) / (kf + 1.0);
    }
    q
}

/// Escape radius of the Bernstein ellipse through `z`.
pub fn bernstein_rho(z: C64) -> f64 {
    let r = (z + (z * z - 1.0).sqrt()).norm();
    r.max(1.0 / r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::gauss_legendre;

    fn q_by_quadrature(n: usize, z: C64) -> C64 {
        // Q_n(z) = 1/2 int P_n(t) / (z - t) dt, resolved with many nodes.
        let (x, w) = gauss_legendre(400);
        x.iter()
            .zip(&w)
            .map(|(&t, &wt)| {
                let p = crate::quad::legendre_table(n + 1, t)[n];
                0.5 * wt * p / (z - t)
            })
            .sum()
    }

    #[test]
    fn complex_q_matches_quadrature_in_all_regimes() {
        for z in [C64::new(0.3, 0.4), C64::new(1.8, 0.5), C64::new(-3.0, 2.0), C64::new(0.0, 6.0)] {
            let q = legendre_q_complex(12, z);
            for n in [0, 3, 7, 11] {
                let r = q_by_quadrature(n, z);
                assert!((q[n] - r).norm() < 1e-11, "z={z} n={n}: {} vs {}", q[n], r);
            }
        }
    }

    #[test]
    fn ferrers_is_average_of_boundary_values() {
        let x = 0.37;
        let qr = legendre_q_real(6, x);
        let up = legendre_q_complex(6, C64::new(x, 1e-12));
        let dn = legendre_q_complex(6, C64::new(x, -1e-12));
        for n in 0..6 {
            let avg = 0.5 * (up[n] + dn[n]);
            assert!((avg.re - qr[n]).abs() < 1e-9 && avg.im.abs() < 1e-9);
        }
    }
}
