//! Finite-difference weights on arbitrary stencils (Fornberg's recursion).

/// Weights for derivatives `0..=m` at `x0` from samples at `xs`.
///
/// Row `d` of the result holds the weights of the `d`-th derivative.
pub fn fornberg(x0: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    assert!(n > m, "stencil too small for derivative order");
    let mut c = vec![vec![0.0; n]; m + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// One-sided weights at the left end of a uniform grid with spacing `h`,
/// using `npts` samples, for derivative `d`.
pub fn left_one_sided(d: usize, npts: usize, h: f64) -> Vec<f64> {
    let xs: Vec<f64> = (0..npts).map(|j| j as f64 * h).collect();
    fornberg(0.0, &xs, d).swap_remove(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_second_derivative() {
        let w = fornberg(0.0, &[-1.0, 0.0, 1.0], 2);
        assert_eq!(w[2], vec![1.0, -2.0, 1.0]);
        assert!((w[1][0] + 0.5).abs() < 1e-15 && (w[1][2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn one_sided_exact_on_polynomials() {
        // 5 points reproduce derivatives of quartics exactly.
        let h = 0.1;
        let p = |x: f64| 1.0 + 2.0 * x - x * x + 0.5 * x.powi(3) + 0.25 * x.powi(4);
        let w1 = left_one_sided(1, 5, h);
        let w2 = left_one_sided(2, 5, h);
        let s1: f64 = w1.iter().enumerate().map(|(j, w)| w * p(j as f64 * h)).sum();
        let s2: f64 = w2.iter().enumerate().map(|(j, w)| w * p(j as f64 * h)).sum();
        assert!((s1 - 2.0).abs() < 1e-10);
        assert!((s2 + 2.0).abs() < 1e-9);
    }
}
