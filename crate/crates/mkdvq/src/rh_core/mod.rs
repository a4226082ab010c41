//! Oriented contours, jump matrices and a collocation solver for 2×2
//! Riemann–Hilbert problems normalised to the identity at infinity.
//!
//! A problem `m+ = m- v` on a contour made of straight segments and
//! truncated rays is solved through the singular integral equation
//! `mu = I + C-(mu w)`, `w = v - I`. Each segment is split into panels
//! carrying Gauss–Legendre nodes; the Cauchy operator applied to the
//! panelwise Legendre interpolant is evaluated exactly through Legendre
//! functions of the second kind.
//!
//! Orientation convention: the `+` side of a segment is on the left of
//! its direction of travel. The real axis is traversed left to right.

pub mod builders;
pub mod cauchy;
pub mod delta;

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::solve_dense;
use crate::quad::{gauss_legendre, legendre_table, QuadError};
use crate::{c64, C64, I, M2};

use cauchy::{bernstein_rho, legendre_q_complex, legendre_q_real};

#[derive(Debug, Error)]
pub enum RhError {
    #[error("collocation matrix is numerically singular (pivot ratio {0:e})")]
    SingularSystem(f64),
    #[error("jump residual {residual:e} exceeds tolerance {tol:e}")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error("recovered potential has imaginary part {0:e}")]
    NonRealRecovery(f64),
    #[error("ray jump did not decay below tolerance within length {0}")]
    TruncationFailure(f64),
    #[error("node {0} lies outside the analyticity strip of half-width {1}")]
    StripTooNarrow(C64, f64),
    #[error("non-finite jump matrix at {0}")]
    NonFiniteJump(C64),
    #[error("quadrature failure: {0}")]
    Quadrature(#[from] QuadError),
    #[error("invalid contour: {0}")]
    InvalidContour(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Segment,
    Ray,
}

/// A straight piece `base + s dir`, `0 <= s <= len`, traversed in the
/// direction of increasing `s` when `orient = 1` and reversed otherwise.
#[derive(Clone, Debug, Serialize)]
pub struct ContourSegment {
    pub kind: SegmentKind,
    pub base: C64,
    pub dir: C64,
    pub len: f64,
    pub orient: i8,
    /// Panel breakpoints in the arclength parameter, `0` and `len` included.
    #[serde(skip)]
    pub breaks: Vec<f64>,
}

impl ContourSegment {
    /// Segment from `a` to `b`, oriented from `a` to `b`, one panel.
    pub fn finite(a: C64, b: C64) -> Self {
        let d = b - a;
        let len = d.norm();
        ContourSegment { kind: SegmentKind::Segment, base: a, dir: d / len, len, orient: 1, breaks: vec![0.0, len] }
    }

    /// Ray from `base` at angle `theta`, truncated at `len`.
    pub fn ray(base: C64, theta: f64, len: f64, orient: i8) -> Self {
        ContourSegment {
            kind: SegmentKind::Ray,
            base,
            dir: crate::cis(theta),
            len,
            orient,
            breaks: vec![0.0, len],
        }
    }

    pub fn with_orient(mut self, orient: i8) -> Self {
        self.orient = orient;
        self
    }

    pub fn with_breaks(mut self, breaks: Vec<f64>) -> Self {
        self.breaks = breaks;
        self
    }

    #[inline]
    pub fn point(&self, s: f64) -> C64 {
        self.base + self.dir * s
    }

    pub fn end(&self) -> C64 {
        self.point(self.len)
    }
}

/// Graded panel breakpoints on `[0, len]`.
///
/// Panels shrink geometrically by `ratio` toward each end flagged in
/// `refine` until they reach `hmin`; elsewhere they are at most `hmax`.
pub fn graded_breaks(len: f64, refine: (bool, bool), hmin: f64, ratio: f64, hmax: f64) -> Vec<f64> {
    assert!(len > 0.0 && hmin > 0.0 && ratio > 1.0 && hmax > 0.0);
    let mut pts = vec![0.0, len];
    let ladder = |pts: &mut Vec<f64>, from_left: bool| {
        let mut h = hmin;
        let mut s = 0.0;
        while s + h < 0.5 * len && h < hmax {
            s += h;
            pts.push(if from_left { s } else { len - s });
            h *= ratio;
        }
    };
    if refine.0 {
        ladder(&mut pts, true);
    }
    if refine.1 {
        ladder(&mut pts, false);
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Fill gaps wider than hmax uniformly.
    let mut out = vec![pts[0]];
    for w in pts.windows(2) {
        let gap = w[1] - w[0];
        if gap <= 0.0 {
            continue;
        }
        let m = (gap / hmax).ceil().max(1.0) as usize;
        for j in 1..=m {
            out.push(w[0] + gap * j as f64 / m as f64);
        }
    }
    out
}

/// An oriented contour built from straight segments.
#[derive(Clone, Debug, Serialize)]
pub struct Contour {
    pub segments: Vec<ContourSegment>,
    /// Declared self-intersection points.
    pub junctions: Vec<C64>,
}

impl Contour {
    pub fn new(segments: Vec<ContourSegment>, junctions: Vec<C64>) -> Self {
        Contour { segments, junctions }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("contour serialisation")
    }

    /// Checks that the segment set is mapped to itself, with orientation
    /// reversed, by `k -> -conj(k)`.
    pub fn is_reflection_symmetric(&self, tol: f64) -> bool {
        self.segments.iter().all(|s| {
            let a = -s.base.conj();
            let d = -s.dir.conj();
            self.segments.iter().any(|t| {
                let same_dir = (t.base - a).norm() < tol && (t.dir - d).norm() < tol && (t.len - s.len).abs() < tol;
                let reversed = (t.end() - a).norm() < tol
                    && (t.dir + d).norm() < tol
                    && (t.len - s.len).abs() < tol;
                // Image traversed in the opposite sense from `s`.
                (same_dir && t.orient == -s.orient) || (reversed && t.orient == s.orient)
            })
        })
    }
}

/// Jump matrix evaluator on one segment.
pub type JumpFn = Arc<dyn Fn(C64) -> M2 + Send + Sync>;

/// Per-segment jump matrices for a [`Contour`].
#[derive(Clone)]
pub struct JumpSpec {
    pub jumps: Vec<JumpFn>,
    /// Half-width of the strip where the underlying data are analytic.
    pub strip_radius: f64,
}

impl JumpSpec {
    pub fn new(jumps: Vec<JumpFn>) -> Self {
        JumpSpec { jumps, strip_radius: f64::INFINITY }
    }
}

/// Panel geometry used by the collocation grid.
#[derive(Clone, Debug)]
pub struct Panel {
    pub segment: usize,
    pub center: C64,
    /// `dir * half_length`.
    pub hdir: C64,
    pub orient: f64,
    pub first: usize,
}

/// Discrete solution of a Riemann–Hilbert problem.
#[derive(Clone, Debug)]
pub struct RhSolution {
    pub n: usize,
    pub panels: Vec<Panel>,
    pub nodes: Vec<C64>,
    /// Oriented quadrature weights `o * dir * h * omega_j`.
    pub dz: Vec<C64>,
    pub mu: Vec<M2>,
    pub w: Vec<M2>,
    pub pivot_ratio: f64,
    pub residual: f64,
    /// `sum_q |m+ - m- v|(c_q) |panel q|`, insensitive to the local
    /// singularities at junctions.
    pub residual_l1: f64,
    ref_x: Vec<f64>,
    ref_w: Vec<f64>,
    coef: Vec<Vec<f64>>,
}

struct Grid {
    panels: Vec<Panel>,
    nodes: Vec<C64>,
    dz: Vec<C64>,
}

fn build_grid(contour: &Contour, x: &[f64], wq: &[f64]) -> Result<Grid, RhError> {
    let n = x.len();
    let mut panels = Vec::new();
    let mut nodes = Vec::new();
    let mut dz = Vec::new();
    for (si, seg) in contour.segments.iter().enumerate() {
        if !(seg.len > 0.0) || seg.breaks.len() < 2 {
            return Err(RhError::InvalidContour(format!("segment {si} has no panels")));
        }
        let o = f64::from(seg.orient);
        for b in seg.breaks.windows(2) {
            let h = 0.5 * (b[1] - b[0]);
            if !(h > 0.0) {
                return Err(RhError::InvalidContour(format!("segment {si} has a degenerate panel")));
            }
            let center = seg.point(0.5 * (b[0] + b[1]));
            let hdir = seg.dir * h;
            panels.push(Panel { segment: si, center, hdir, orient: o, first: nodes.len() });
            for j in 0..n {
                nodes.push(center + hdir * x[j]);
                dz.push(hdir * (o * wq[j]));
            }
        }
    }
    Ok(Grid { panels, nodes, dz })
}

/// `c[m][j] = omega_j P_m(x_j) (2m+1)/2`: values to Legendre coefficients.
fn coefficient_matrix(x: &[f64], w: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; n];
    for j in 0..n {
        let p = legendre_table(n, x[j]);
        for m in 0..n {
            c[m][j] = w[j] * p[m] * (2.0 * m as f64 + 1.0) / 2.0;
        }
    }
    c
}

/// Row of the Cauchy operator from one panel to a point:
/// `C[f](z) = sum_j out[j] f_j`. `own` selects the minus boundary value at
/// the local abscissa `own.unwrap()`.
fn panel_row(p: &Panel, z: C64, own: Option<f64>, side: f64, xs: &[f64], ws: &[f64], coef: &[Vec<f64>], out: &mut [C64]) {
    let n = xs.len();
    let o = p.orient;
    // -(o / (pi i)) = o i / pi
    let pref = c64(0.0, o / PI);
    match own {
        Some(xl) => {
            let qf = legendre_q_real(n, xl);
            let pl = legendre_table(n, xl);
            // boundary value on the `side` (+1 plus, -1 minus)
            let q: Vec<C64> = (0..n).map(|m| c64(qf[m], -side * o * 0.5 * PI * pl[m])).collect();
            for j in 0..n {
                let mut s = C64::new(0.0, 0.0);
                for m in 0..n {
                    s += q[m] * coef[m][j];
                }
                out[j] = pref * s;
            }
        }
        None => {
            let zeta = (z - p.center) / p.hdir;
            if bernstein_rho(zeta) > 4.0 {
                let f = c64(0.0, -o / (2.0 * PI));
                for j in 0..n {
                    out[j] = f * ws[j] / (xs[j] - zeta);
                }
            } else {
                let q = legendre_q_complex(n, zeta);
                for j in 0..n {
                    let mut s = C64::new(0.0, 0.0);
                    for m in 0..n {
                        s += q[m] * coef[m][j];
                    }
                    out[j] = pref * s;
                }
            }
        }
    }
}

/// Solves `m+ = m- v` on `contour` with `n` Gauss–Legendre nodes per panel.
///
/// Returns [`RhError::ResidualTooLarge`] when the jump residual measured at
/// the panel midpoints exceeds `tol`.
pub fn solve_rh(contour: &Contour, jump: &JumpSpec, n: usize, tol: f64) -> Result<RhSolution, RhError> {
    let sol = solve_rh_unchecked(contour, jump, n)?;
    if sol.residual > tol {
        return Err(RhError::ResidualTooLarge { residual: sol.residual, tol });
    }
    Ok(sol)
}

/// As [`solve_rh`] without the residual acceptance test.
pub fn solve_rh_unchecked(contour: &Contour, jump: &JumpSpec, n: usize) -> Result<RhSolution, RhError> {
    assert!(n >= 2, "need at least two nodes per panel");
    if contour.segments.len() != jump.jumps.len() {
        return Err(RhError::InvalidContour("segment and jump counts differ".into()));
    }
    let (xs, ws) = gauss_legendre(n);
    let coef = coefficient_matrix(&xs, &ws);
    let grid = build_grid(contour, &xs, &ws)?;
    let nn = grid.nodes.len();
    let mut w = Vec::with_capacity(nn);
    for p in &grid.panels {
        let jf = &jump.jumps[p.segment];
        for j in 0..n {
            let z = grid.nodes[p.first + j];
            let v = jf(z);
            if !v.0.iter().flatten().all(|c| c.re.is_finite() && c.im.is_finite()) {
                return Err(RhError::NonFiniteJump(z));
            }
            w.push(v - M2::IDENTITY);
        }
    }

    // Skip panels whose jump is numerically the identity.
    let active: Vec<bool> = grid
        .panels
        .iter()
        .map(|p| (0..n).any(|j| w[p.first + j].max_abs() > 0.0))
        .collect();

    // K[i][j]: minus boundary value of the Cauchy operator.
    let k_rows: Vec<Vec<C64>> = (0..nn)
        .into_par_iter()
        .map(|i| {
            let z = grid.nodes[i];
            let pi = i / n;
            let mut row = vec![C64::new(0.0, 0.0); nn];
            for (q, p) in grid.panels.iter().enumerate() {
                if !active[q] {
                    continue;
                }
                let own = if q == pi { Some(xs[i - p.first]) } else { None };
                panel_row(p, z, own, -1.0, &xs, &ws, &coef, &mut row[p.first..p.first + n]);
            }
            row
        })
        .collect();

    // Unknowns ordered (node, column); rows of mu decouple and share A.
    let dim = 2 * nn;
    let mut a = vec![C64::new(0.0, 0.0); dim * dim];
    a.par_chunks_mut(2 * dim).enumerate().for_each(|(i, rows)| {
        let kr = &k_rows[i];
        for c in 0..2 {
            let r = &mut rows[c * dim..(c + 1) * dim];
            r[2 * i + c] += 1.0;
            for j in 0..nn {
                let kij = kr[j];
                if kij.re == 0.0 && kij.im == 0.0 {
                    continue;
                }
                for d in 0..2 {
                    r[2 * j + d] -= kij * w[j].0[d][c];
                }
            }
        }
    });
    drop(k_rows);
    let mut rhs = vec![vec![C64::new(0.0, 0.0); dim]; 2];
    for i in 0..nn {
        rhs[0][2 * i] = C64::new(1.0, 0.0);
        rhs[1][2 * i + 1] = C64::new(1.0, 0.0);
    }
    let sol = solve_dense(dim, &a, &rhs);
    drop(a);
    if !(sol.pivot_ratio > 1e-14) || sol.x.iter().flatten().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(RhError::SingularSystem(sol.pivot_ratio));
    }
    let mu: Vec<M2> = (0..nn)
        .map(|i| {
            M2::new(sol.x[0][2 * i], sol.x[0][2 * i + 1], sol.x[1][2 * i], sol.x[1][2 * i + 1])
        })
        .collect();
    let mut out = RhSolution {
        n,
        panels: grid.panels,
        nodes: grid.nodes,
        dz: grid.dz,
        mu,
        w,
        pivot_ratio: sol.pivot_ratio,
        residual: 0.0,
        residual_l1: 0.0,
        ref_x: xs,
        ref_w: ws,
        coef,
    };
    let prof = out.residual_profile(jump);
    out.residual = prof.iter().fold(0.0, |m, r| m.max(*r));
    out.residual_l1 = prof.iter().zip(&out.panels).map(|(r, p)| r * 2.0 * p.hdir.norm()).sum();
    Ok(out)
}

impl RhSolution {
    fn f(&self, i: usize) -> M2 {
        self.mu[i] * self.w[i]
    }

    /// `m(z) = I + C(mu w)(z)` for `z` off the contour.
    pub fn eval(&self, z: C64) -> M2 {
        self.eval_inner(z, None)
    }

    /// Boundary value from the `side` (+1 or -1) at local abscissa `xl` of
    /// panel `panel`.
    pub fn boundary_value(&self, panel: usize, xl: f64, side: f64) -> M2 {
        self.eval_inner(self.panels[panel].center + self.panels[panel].hdir * xl, Some((panel, xl, side)))
    }

    fn eval_inner(&self, z: C64, own: Option<(usize, f64, f64)>) -> M2 {
        let n = self.n;
        let mut row = vec![C64::new(0.0, 0.0); n];
        let mut m = M2::IDENTITY;
        for (q, p) in self.panels.iter().enumerate() {
            if (0..n).all(|j| self.w[p.first + j].max_abs() == 0.0) {
                continue;
            }
            let (o, side) = match own {
                Some((pp, xl, side)) if pp == q => (Some(xl), side),
                _ => (None, 0.0),
            };
            panel_row(p, z, o, side, &self.ref_x, &self.ref_w, &self.coef, &mut row);
            for j in 0..n {
                m = m + self.f(p.first + j) * row[j];
            }
        }
        m
    }

    /// Maximum of `|m+ - m- v|` at the panel midpoints.
    pub fn jump_residual(&self, jump: &JumpSpec) -> f64 {
        self.residual_profile(jump).into_iter().fold(0.0, f64::max)
    }

    /// `|m+ - m- v|` at each panel midpoint.
    pub fn residual_profile(&self, jump: &JumpSpec) -> Vec<f64> {
        (0..self.panels.len())
            .into_par_iter()
            .map(|q| {
                let p = &self.panels[q];
                let z = p.center;
                let v = (jump.jumps[p.segment])(z);
                let mp = self.boundary_value(q, 0.0, 1.0);
                let mm = self.boundary_value(q, 0.0, -1.0);
                (mp - mm * v).max_abs()
            })
            .collect()
    }

    /// `M1 = lim z (m(z) - I) = -(1/2 pi i) int mu w dz`.
    pub fn first_moment(&self) -> M2 {
        let mut s = M2::ZERO;
        for i in 0..self.nodes.len() {
            s = s + self.f(i) * self.dz[i];
        }
        s * (-1.0 / (2.0 * PI * I))
    }

    /// Coefficient of `z^-2` in `m(z)`: `-(1/2 pi i) int mu w s ds`.
    pub fn second_moment(&self) -> M2 {
        let mut s = M2::ZERO;
        for i in 0..self.nodes.len() {
            s = s + self.f(i) * (self.dz[i] * self.nodes[i]);
        }
        s * (-1.0 / (2.0 * PI * I))
    }

    /// Writes `segment_id, node_re, node_im, mu11_re, ..., mu22_im`.
    pub fn write_mu_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            f,
            "segment_id,node_re,node_im,mu11_re,mu11_im,mu12_re,mu12_im,mu21_re,mu21_im,mu22_re,mu22_im"
        )?;
        for p in &self.panels {
            for j in 0..self.n {
                let i = p.first + j;
                let z = self.nodes[i];
                let m = &self.mu[i].0;
                writeln!(
                    f,
                    "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                    p.segment, z.re, z.im, m[0][0].re, m[0][0].im, m[0][1].re, m[0][1].im, m[1][0].re,
                    m[1][0].im, m[1][1].re, m[1][1].im
                )?;
            }
        }
        f.flush()
    }
}

/// Free function form of [`RhSolution::first_moment`].
pub fn first_moment(sol: &RhSolution) -> M2 {
    sol.first_moment()
}

/// `u = -2i M1[1,2]`, required to be real within `tol`.
pub fn extract_u(sol: &RhSolution, tol: f64) -> Result<f64, RhError> {
    recover_real(-2.0 * I * sol.first_moment().0[0][1], tol)
}

pub(crate) fn recover_real(u: C64, tol: f64) -> Result<f64, RhError> {
    if u.im.abs() > tol {
        return Err(RhError::NonRealRecovery(u.im));
    }
    Ok(u.re)
}

/// Length along `base + s dir` after which `|v(z) - I|` stays below `thr`,
/// scanning in steps of `scale / 8` up to `50 scale`.
pub fn truncate_ray(v: &dyn Fn(C64) -> M2, base: C64, dir: C64, scale: f64, thr: f64) -> Result<f64, RhError> {
    let steps = 400;
    let mut last_big = None;
    for j in 0..=steps {
        let s = scale * 50.0 * j as f64 / steps as f64;
        let w = (v(base + dir * s) - M2::IDENTITY).max_abs();
        if !(w < thr) {
            last_big = Some(j);
        }
    }
    match last_big {
        Some(j) if j >= steps - 1 => Err(RhError::TruncationFailure(50.0 * scale)),
        Some(j) => Ok(scale * 50.0 * (j + 1) as f64 / steps as f64),
        None => Ok(scale / 8.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;

    fn one_segment(a: C64, b: C64, npan: usize) -> Contour {
        let mut s = ContourSegment::finite(a, b);
        s.breaks = (0..=npan).map(|j| s.len * j as f64 / npan as f64).collect();
        Contour::new(vec![s], vec![])
    }

    #[test]
    fn identity_jump_gives_identity() {
        let c = one_segment(c64(-1.0, 0.0), c64(1.0, 0.5), 3);
        let j = JumpSpec::new(vec![Arc::new(|_| M2::IDENTITY)]);
        let s = solve_rh(&c, &j, 8, 1e-12).unwrap();
        assert!((s.eval(c64(0.3, 2.0)) - M2::IDENTITY).max_abs() == 0.0);
        assert!(s.first_moment().max_abs() == 0.0);
    }

    #[test]
    fn upper_triangular_jump_is_a_cauchy_transform() {
        // m12 = (1/2 pi i) int f(s)/(s-z) ds, M1_12 = -(1/2 pi i) int f ds.
        let a = c64(-1.0, -0.2);
        let b = c64(1.5, 0.7);
        let f = |z: C64| (z * z * 0.3).exp() * 0.4;
        let c = one_segment(a, b, 4);
        let j = JumpSpec::new(vec![Arc::new(move |z| M2::upper(f(z)))]);
        let s = solve_rh(&c, &j, 16, 1e-10).unwrap();
        let d = b - a;
        for z in [c64(0.2, 1.0), c64(-2.0, -0.5), c64(0.5, 0.1)] {
            let oracle = integrate(|t| f(a + d * t) * d / (a + d * t - z), 0.0, 1.0, 1e-15, 1e-14).unwrap()
                / (2.0 * PI * I);
            let m = s.eval(z);
            assert!((m.0[0][1] - oracle).norm() < 1e-8 * oracle.norm().max(1e-3), "z={z}");
            assert!((m.0[0][0] - 1.0).norm() < 1e-13 && m.0[1][0].norm() < 1e-13);
        }
        let total = integrate(|t| f(a + d * t) * d, 0.0, 1.0, 1e-15, 1e-14).unwrap();
        let m1 = -total / (2.0 * PI * I);
        assert!((s.first_moment().0[0][1] - m1).norm() < 1e-12);
    }

    #[test]
    fn graded_breaks_are_monotone_and_cover() {
        let b = graded_breaks(3.0, (true, true), 1e-6, 2.5, 0.4);
        assert_eq!(b[0], 0.0);
        assert!((b[b.len() - 1] - 3.0).abs() < 1e-15);
        assert!(b.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 0.4 + 1e-12));
        assert!((b[1] - 1e-6).abs() < 1e-18);
    }
}
