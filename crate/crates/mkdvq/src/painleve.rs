//! Painlevé II through its Riemann–Hilbert problem.
//!
//! `m(y, z)` jumps across six rays `arg z = pi/6 + (n-1) pi/3`, oriented
//! outward, by `m+ = m- e^{-i theta ad s3} S_n` with
//! `theta = y z + 4 z^3 / 3`, `S_n` lower triangular with entry `s_n` for
//! odd `n` and upper triangular for even `n`, and `s_{n+3} = -s_n`. Then
//! `m = I + (1/2z) [[*, u], [u, *]] + O(z^-2)` with `u'' = y u + 2 u^3`.
//!
//! An independent check integrates that ODE from one anchor value
//! computed by the RH solve.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ode::{dopri5, OdeError, OdeOptions};
use crate::rh_core::{graded_breaks, solve_rh, truncate_ray, Contour, ContourSegment, JumpFn, JumpSpec, RhError};
use crate::{cis, C64, I, M2};

#[derive(Debug, Error)]
pub enum PainleveError {
    #[error(transparent)]
    Rh(#[from] RhError),
    #[error("|u| exceeded {guard} near y = {y}")]
    BlowUp { y: f64, guard: f64 },
    #[error("ODE integration failed: {0}")]
    Ode(OdeError),
    #[error("ODE oracle needs s in iR with |s| < 1")]
    NotAblowitzSegur,
    #[error("no s3 solves the cyclic relation (1 + s1 s2 = 0)")]
    NoCompletion,
}

/// Stokes multipliers `(s1, s2, s3)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesTriple {
    pub s1: C64,
    pub s2: C64,
    pub s3: C64,
}

impl StokesTriple {
    pub fn new(s1: C64, s2: C64, s3: C64) -> Self {
        StokesTriple { s1, s2, s3 }
    }

    /// `s3` from `s1 - s2 + s3 + s1 s2 s3 = 0`.
    pub fn complete(s1: C64, s2: C64) -> Result<Self, PainleveError> {
        let den = 1.0 + s1 * s2;
        if den.norm() < 1e-14 {
            return Err(PainleveError::NoCompletion);
        }
        Ok(StokesTriple { s1, s2, s3: (s2 - s1) / den })
    }

    pub fn cyclic_residual(&self) -> f64 {
        (self.s1 - self.s2 + self.s3 + self.s1 * self.s2 * self.s3).norm()
    }

    /// `s3 = conj(s1)` and `s2` real: the solution is real on the real line.
    pub fn is_real(&self) -> bool {
        (self.s3 - self.s1.conj()).norm() <= 1e-14 * (1.0 + self.s1.norm()) && self.s2.im.abs() <= 1e-14
    }

    /// `s_n` for `n = 1..=6`.
    pub fn s(&self, n: usize) -> C64 {
        match n {
            1 => self.s1,
            2 => self.s2,
            3 => self.s3,
            4..=6 => -self.s(n - 3),
            _ => panic!("Stokes index {n} out of range"),
        }
    }

    /// Ablowitz–Segur family: `(s, 0, -s)` with `s` imaginary, `|s| < 1`.
    pub fn is_ablowitz_segur(&self) -> bool {
        self.s2.norm() == 0.0
            && (self.s3 + self.s1).norm() <= 1e-15
            && self.s1.re.abs() <= 1e-15
            && self.s1.norm() < 1.0
    }
}

/// `(s, 0, -s)`.
pub fn stokes_from_s(s: C64) -> StokesTriple {
    StokesTriple { s1: s, s2: C64::new(0.0, 0.0), s3: -s }
}

/// `theta = y z + 4 z^3 / 3`.
#[inline]
pub fn theta(y: f64, z: C64) -> C64 {
    y * z + z * z * z * (4.0 / 3.0)
}

/// Jump on ray `n` (outward orientation).
pub fn ray_jump(stokes: &StokesTriple, n: usize, y: f64, z: C64) -> M2 {
    let s = stokes.s(n);
    let e = (2.0 * I * theta(y, z)).exp();
    if n % 2 == 1 {
        M2::lower(s * e)
    } else {
        M2::upper(s / e)
    }
}

/// Discretisation controls shared by the Painlevé-type solves.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct RayGrid {
    /// Gauss–Legendre nodes per panel.
    pub n: usize,
    /// Largest panel length.
    pub hmax: f64,
    /// Smallest panel at a junction.
    pub hmin: f64,
    pub ratio: f64,
}

impl Default for RayGrid {
    fn default() -> Self {
        RayGrid { n: 16, hmax: 0.5, hmin: 0.05, ratio: 2.0 }
    }
}

impl RayGrid {
    pub fn with_n(n: usize) -> Self {
        RayGrid { n, ..RayGrid::default() }
    }

    fn breaks(&self, len: f64, refine: (bool, bool)) -> Vec<f64> {
        graded_breaks(len, refine, self.hmin.min(len / 4.0), self.ratio, self.hmax)
    }
}

fn ray_segment(base: C64, angle: f64, jump: &dyn Fn(C64) -> M2, tol: f64, grid: &RayGrid) -> Result<ContourSegment, RhError> {
    let dir = cis(angle);
    let len = truncate_ray(jump, base, dir, 1.0, tol)?;
    Ok(ContourSegment::ray(base, angle, len, 1).with_breaks(grid.breaks(len, (true, false))))
}

/// Six-ray contour and jumps; rays with `s_n = 0` are dropped.
pub fn painleve_problem(stokes: &StokesTriple, y: f64, grid: &RayGrid, tol: f64) -> Result<(Contour, JumpSpec), RhError> {
    let mut segs = Vec::new();
    let mut jumps: Vec<JumpFn> = Vec::new();
    for n in 1..=6 {
        if stokes.s(n).norm() == 0.0 {
            continue;
        }
        let st = *stokes;
        let f: JumpFn = Arc::new(move |z| ray_jump(&st, n, y, z));
        let angle = PI / 6.0 + (n as f64 - 1.0) * PI / 3.0;
        segs.push(ray_segment(C64::new(0.0, 0.0), angle, &*f, tol * 1e-2, grid)?);
        jumps.push(f);
    }
    Ok((Contour::new(segs, vec![C64::new(0.0, 0.0)]), JumpSpec::new(jumps)))
}

/// `u(y)` and `u'(y)` from one solve: with `m = I + m1/z + m2/z^2 + ...`,
/// `u = 2 m1_12` and `u' = 4i (m1_12 m1_22 - m2_12)`.
pub fn solve_painleve_rh_full(
    stokes: &StokesTriple,
    y: f64,
    grid: &RayGrid,
    tol: f64,
) -> Result<(C64, C64, f64), PainleveError> {
    if stokes.s1.norm() + stokes.s2.norm() + stokes.s3.norm() == 0.0 {
        return Ok((C64::new(0.0, 0.0), C64::new(0.0, 0.0), 0.0));
    }
    let (c, j) = painleve_problem(stokes, y, grid, tol)?;
    let sol = solve_rh(&c, &j, grid.n, (tol * 1e3).max(1e-7))?;
    let m1 = sol.first_moment();
    let m2 = sol.second_moment();
    let u = 2.0 * m1.0[0][1];
    let du = 4.0 * I * (m1.0[0][1] * m1.0[1][1] - m2.0[0][1]);
    Ok((u, du, sol.residual))
}

/// `u^P(y)` with an error estimate from a coarser solve.
pub fn solve_painleve_rh(stokes: &StokesTriple, y: f64, n: usize, tol: f64) -> Result<(C64, f64), PainleveError> {
    let fine = RayGrid::with_n(n);
    let (u, _, res) = solve_painleve_rh_full(stokes, y, &fine, tol)?;
    if u.norm() == 0.0 && res == 0.0 {
        return Ok((u, 0.0));
    }
    let coarse = RayGrid::with_n((n * 3 / 4).max(4));
    let (uc, _, _) = solve_painleve_rh_full(stokes, y, &coarse, tol)?;
    Ok((u, (u - uc).norm().max(res)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rh,
    Ode,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Rh => "rh",
            Method::Ode => "ode",
        }
    }
}

/// Anchor data for the ODE evaluator.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Anchor {
    pub y: f64,
    pub u: f64,
    pub du: f64,
    /// `|u_ode - u_rh|` at the secondary anchor.
    pub check: f64,
}

/// Evaluator for `u^P(y)` on the real line.
#[derive(Clone, Debug)]
pub struct PainleveSolution {
    pub stokes: StokesTriple,
    pub method: Method,
    pub n: usize,
    pub tol: f64,
    pub anchor: Option<Anchor>,
    pub guard: f64,
}

impl PainleveSolution {
    /// Per-point RH evaluation.
    pub fn rh(stokes: StokesTriple, n: usize, tol: f64) -> Self {
        PainleveSolution { stokes, method: Method::Rh, n, tol, anchor: None, guard: 1e3 }
    }

    /// `(u(y), error estimate)`.
    pub fn eval(&self, y: f64) -> Result<(C64, f64), PainleveError> {
        match (self.method, self.anchor) {
            (Method::Rh, _) | (Method::Ode, None) => solve_painleve_rh(&self.stokes, y, self.n, self.tol),
            (Method::Ode, Some(a)) => {
                let (u, _) = integrate_p2(a.y, a.u, a.du, y, self.tol, self.guard)?;
                Ok((C64::new(u, 0.0), a.check + self.tol))
            }
        }
    }

    /// Evaluates on a grid, in parallel for the RH method.
    pub fn tabulate(&self, ys: &[f64]) -> Result<Vec<(f64, C64, f64)>, PainleveError> {
        use rayon::prelude::*;
        ys.par_iter().map(|&y| self.eval(y).map(|(u, e)| (y, u, e))).collect()
    }

    /// Writes `y, uP_re, uP_im, err_est, method`.
    pub fn write_csv(&self, path: &Path, rows: &[(f64, C64, f64)]) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["y", "uP_re", "uP_im", "err_est", "method"])?;
        for (y, u, e) in rows {
            w.write_record([
                format!("{y:.17e}"),
                format!("{:.17e}", u.re),
                format!("{:.17e}", u.im),
                format!("{e:.6e}"),
                self.method.tag().to_string(),
            ])?;
        }
        w.flush()
    }
}

/// Integrates `u'' = y u + 2 u^3` from `(y0, u0, du0)` to `y1`.
pub fn integrate_p2(y0: f64, u0: f64, du0: f64, y1: f64, tol: f64, guard: f64) -> Result<(f64, f64), PainleveError> {
    if y0 == y1 {
        return Ok((u0, du0));
    }
    let opts = OdeOptions { rtol: tol.min(1e-10), atol: tol.min(1e-10) * 1e-4, guard, ..OdeOptions::default() };
    let out = dopri5(
        |y, v, dv| {
            dv[0] = v[1];
            dv[1] = y * v[0] + 2.0 * v[0] * v[0] * v[0];
        },
        y0,
        &[u0, du0],
        y1,
        &opts,
    )
    .map_err(|e| match e {
        OdeError::BlowUp { t, guard } => PainleveError::BlowUp { y: t, guard },
        other => PainleveError::Ode(other),
    })?;
    Ok((out[0], out[1]))
}

/// ODE evaluator anchored by one RH solve at `y_match`, with a second RH
/// solve at `y_match + 1` recorded as a consistency check.
pub fn ode_oracle(stokes: &StokesTriple, y_match: f64, n: usize, tol: f64) -> Result<PainleveSolution, PainleveError> {
    if !stokes.is_ablowitz_segur() {
        return Err(PainleveError::NotAblowitzSegur);
    }
    let mut sol = PainleveSolution { stokes: *stokes, method: Method::Ode, n, tol, anchor: None, guard: 1e3 };
    if stokes.s1.norm() == 0.0 {
        sol.anchor = Some(Anchor { y: y_match, u: 0.0, du: 0.0, check: 0.0 });
        return Ok(sol);
    }
    let grid = RayGrid::with_n(n);
    let (u, du, _) = solve_painleve_rh_full(stokes, y_match, &grid, tol)?;
    let y2 = y_match + 1.0;
    let (u2, _, _) = solve_painleve_rh_full(stokes, y2, &grid, tol)?;
    let (u2_ode, _) = integrate_p2(y_match, u.re, du.re, y2, tol, 1e3)?;
    sol.anchor = Some(Anchor { y: y_match, u: u.re, du: du.re, check: (u2_ode - u2.re).abs() });
    Ok(sol)
}

/// Convenience wrapper returning values of the anchored ODE on a grid.
pub fn ode_oracle_values(
    stokes: &StokesTriple,
    y_grid: &[f64],
    y_match: f64,
    tol: f64,
) -> Result<Vec<f64>, PainleveError> {
    let sol = ode_oracle(stokes, y_match, RayGrid::default().n, tol)?;
    let a = sol.anchor.unwrap();
    // March through the sorted grid from the anchor downward.
    let mut order: Vec<usize> = (0..y_grid.len()).collect();
    order.sort_by(|&i, &j| y_grid[j].partial_cmp(&y_grid[i]).unwrap());
    let mut out = vec![0.0; y_grid.len()];
    let (mut y, mut u, mut du) = (a.y, a.u, a.du);
    for i in order {
        let (u1, du1) = integrate_p2(y, u, du, y_grid[i], tol, sol.guard)?;
        y = y_grid[i];
        u = u1;
        du = du1;
        out[i] = u;
    }
    Ok(out)
}

/// Model problem on the contour `z0 Z`: rays from `z0` at `pi/6` (out) and
/// `-pi/6` (in), rays from `-z0` at `5pi/6` (in) and `-5pi/6` (out), and the
/// segment `[-z0, z0]`.
pub fn model_z_problem(s: C64, y: f64, z0: f64, grid: &RayGrid, tol: f64) -> Result<(Contour, JumpSpec), RhError> {
    let e = move |z: C64| (2.0 * I * theta(y, z)).exp();
    let z1: JumpFn = Arc::new(move |z| M2::lower(s * e(z)));
    let z2: JumpFn = Arc::new(move |z| M2::upper(-s / e(z)));
    let z3: JumpFn = Arc::new(move |z| {
        let ez = e(z);
        M2::upper(s / ez) * M2::lower(s * ez)
    });
    let thr = tol * 1e-2;
    let zp = C64::new(z0, 0.0);
    let mut segs = Vec::new();
    let mut jumps = Vec::new();
    for (base, angle, f, orient) in [
        (zp, PI / 6.0, &z1, 1),
        (-zp, 5.0 * PI / 6.0, &z1, -1),
        (zp, -PI / 6.0, &z2, -1),
        (-zp, -5.0 * PI / 6.0, &z2, 1),
    ] {
        let seg = ray_segment(base, angle, &**f, thr, grid)?.with_orient(orient);
        segs.push(seg);
        jumps.push(f.clone());
    }
    let mid = ContourSegment::finite(-zp, zp);
    let len = mid.len;
    segs.push(mid.with_breaks(grid.breaks(len, (true, true))));
    jumps.push(z3);
    Ok((Contour::new(segs, vec![zp, -zp]), JumpSpec::new(jumps)))
}

/// `|2 M1_12(m^Z) - u^P(y; s, 0, -s)|`.
pub fn model_mz_check(s: C64, y: f64, z0: f64, n: usize) -> Result<f64, PainleveError> {
    let tol = 1e-12;
    if s.norm() == 0.0 {
        return Ok(0.0);
    }
    let grid = RayGrid::with_n(n);
    let (c, j) = model_z_problem(s, y, z0, &grid, tol)?;
    let sol = solve_rh(&c, &j, n, (tol * 1e3).max(1e-7))?;
    let uz = 2.0 * sol.first_moment().0[0][1];
    let (up, _, _) = solve_painleve_rh_full(&stokes_from_s(s), y, &grid, tol)?;
    Ok((uz - up).norm())
}

/// Least-squares amplitude `c` in `u ~ c Ai(y)` over `ys`, for the record.
pub fn airy_amplitude(sol: &PainleveSolution, ys: &[f64]) -> Result<f64, PainleveError> {
    let mut num = 0.0;
    let mut den = 0.0;
    for &y in ys {
        let (u, _) = sol.eval(y)?;
        let a = crate::special::airy_ai(y).0;
        num += u.re * a;
        den += a * a;
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stokes_examples() {
        let z = stokes_from_s(C64::new(0.0, 0.0));
        assert_eq!(z.cyclic_residual(), 0.0);
        let t = stokes_from_s(C64::new(0.0, 0.5));
        assert!(t.is_real() && t.is_ablowitz_segur());
        assert_eq!(t.s3, C64::new(0.0, -0.5));
        let c = StokesTriple::complete(C64::new(1.0, 0.0), C64::new(2.0, 0.0)).unwrap();
        assert!((c.s3 - C64::new(1.0 / 3.0, 0.0)).norm() < 1e-15);
        assert!(StokesTriple::complete(C64::new(1.0, 0.0), C64::new(-1.0, 0.0)).is_err());
    }

    #[test]
    fn cyclic_product_is_identity() {
        let st = StokesTriple::complete(C64::new(0.3, 0.2), C64::new(-0.1, 0.4)).unwrap();
        let mut p = M2::IDENTITY;
        for n in 1..=6 {
            let s = st.s(n);
            p = p * if n % 2 == 1 { M2::lower(s) } else { M2::upper(s) };
        }
        assert!((p - M2::IDENTITY).max_abs() < 1e-14);
    }

    #[test]
    fn zero_stokes_data_gives_zero() {
        let (u, e) = solve_painleve_rh(&stokes_from_s(C64::new(0.0, 0.0)), 1.3, 12, 1e-12).unwrap();
        assert_eq!((u, e), (C64::new(0.0, 0.0), 0.0));
    }

    #[test]
    fn real_and_odd_in_s() {
        let s = C64::new(0.0, 0.3);
        for y in [-2.0, 0.0, 2.0] {
            let (u, _) = solve_painleve_rh(&stokes_from_s(s), y, 16, 1e-12).unwrap();
            let (v, _) = solve_painleve_rh(&stokes_from_s(-s), y, 16, 1e-12).unwrap();
            assert!(u.im.abs() < 1e-8, "y={y} u={u}");
            assert!((u + v).norm() < 1e-6);
            assert!(u.re.abs() > 1e-3);
        }
    }

    #[test]
    fn derivative_from_moments_matches_differences() {
        let st = stokes_from_s(C64::new(0.0, 0.5));
        let g = RayGrid::default();
        let y = 0.7;
        let h = 1e-3;
        let (_, du, _) = solve_painleve_rh_full(&st, y, &g, 1e-12).unwrap();
        let (up, _, _) = solve_painleve_rh_full(&st, y + h, &g, 1e-12).unwrap();
        let (um, _, _) = solve_painleve_rh_full(&st, y - h, &g, 1e-12).unwrap();
        let fd = (up - um) / (2.0 * h);
        assert!((du - fd).norm() < 1e-6, "{du} vs {fd}");
    }

    #[test]
    fn solution_satisfies_painleve_ii() {
        // Second difference of RH values against y u + 2 u^3.
        let st = stokes_from_s(C64::new(0.0, 0.6));
        let g = RayGrid::default();
        let y = -1.0;
        let h = 0.01;
        let u = |y| solve_painleve_rh_full(&st, y, &g, 1e-12).unwrap().0.re;
        let (u0, up, um) = (u(y), u(y + h), u(y - h));
        let d2 = (up - 2.0 * u0 + um) / (h * h);
        assert!((d2 - (y * u0 + 2.0 * u0.powi(3))).abs() < 1e-5);
    }

    #[test]
    fn decays_in_the_airy_regime() {
        let st = stokes_from_s(C64::new(0.0, 0.3));
        let sol = PainleveSolution::rh(st, 16, 1e-12);
        let vals: Vec<f64> = [4.0, 5.0, 6.0, 7.0, 8.0].iter().map(|&y| sol.eval(y).unwrap().0.re.abs()).collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn ode_oracle_for_zero_is_zero() {
        let v = ode_oracle_values(&stokes_from_s(C64::new(0.0, 0.0)), &[-3.0, 0.0, 3.0], 8.0, 1e-10).unwrap();
        assert!(v.iter().all(|x| *x == 0.0));
    }

    proptest! {
        #[test]
        fn completion_satisfies_cyclic_relation(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, d in -2.0f64..2.0) {
            let s1 = C64::new(a, b);
            let s2 = C64::new(c, d);
            prop_assume!((1.0 + s1 * s2).norm() > 0.1);
            let st = StokesTriple::complete(s1, s2).unwrap();
            prop_assert!(st.cyclic_residual() <= 1e-12);
        }
    }
}
