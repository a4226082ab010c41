//! Contours and jumps for the mKdV problem at a point `(x, t)`.
//!
//! The phase is `t Phi = 8 i t k^3 - 2 i k x`, `theta = e^{t Phi}`, and
//! `r*(k) = conj(r(conj k))`. On the real line
//!
//! ```text
//! J = [[1, -r* / theta], [r theta, 1 - r r*]]
//!   = upper(-r4 / theta) diag(1/(1 - r r*), 1 - r r*) lower(r1 theta)
//! ```
//!
//! with `r1 = r/(1 - r r*)`, `r4 = r*/(1 - r r*)`. The deformed problems
//! conjugate by `delta^{s3}` and move the triangular factors onto rays
//! where they decay. Only data analytic in a strip around the real axis
//! can be deformed, and the ray jumps of `h` are supported on the
//! undeformed contour only.

use std::f64::consts::{FRAC_PI_4, PI};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::spectral::ReflectionData;
use crate::{c64, cis, C64, I, M2};

use super::delta::{ConjugationDelta, DeltaVariant};
use super::{
    graded_breaks, recover_real, solve_rh, solve_rh_unchecked, SegmentKind, truncate_ray, Contour, ContourSegment, JumpFn, JumpSpec, RhError,
    RhSolution,
};

/// Discretisation controls for the builders.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct BuildOptions {
    /// Gauss–Legendre nodes per panel.
    pub n: usize,
    /// Jumps are truncated where `|v - I|` drops below this.
    pub trunc_tol: f64,
    /// Largest panel, relative to the natural length scale.
    pub hmax: f64,
    /// Smallest graded panel at a junction, relative to the scale.
    pub hmin: f64,
    pub ratio: f64,
    /// Largest phase change across one panel, in radians per node.
    pub phase_per_node: f64,
    /// Residual accepted by the solver.
    pub tol: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            n: 16,
            trunc_tol: 1e-14,
            hmax: 0.5,
            hmin: 1e-5,
            ratio: 4.0,
            phase_per_node: 0.5,
            tol: 1e-8,
        }
    }
}

/// `t Phi(zeta, k) = 8 i t k^3 - 2 i k x`.
#[inline]
pub fn t_phi(x: f64, t: f64, k: C64) -> C64 {
    I * (8.0 * t * k * k * k - 2.0 * x * k)
}

/// `|d(t Phi)/dk|` plus the variation scale of Gaussian-type data.
fn local_rate(x: f64, t: f64, k: C64) -> f64 {
    (t * (24.0 * k * k) - 2.0 * x).norm() + 2.0 * k.norm() + 1.0
}

/// Graded breaks refined by the local oscillation rate.
fn panel_breaks(
    seg: &ContourSegment,
    refine: (bool, bool),
    scale: f64,
    opts: &BuildOptions,
    rate: &dyn Fn(C64) -> f64,
) -> Vec<f64> {
    let len = seg.len;
    let hmin = (opts.hmin * scale).min(len / 8.0);
    let base = graded_breaks(len, refine, hmin, opts.ratio, opts.hmax * scale);
    let per_panel = opts.phase_per_node * opts.n as f64;
    let mut out = vec![base[0]];
    for w in base.windows(2) {
        let (a, b) = (w[0], w[1]);
        let f = [a, 0.5 * (a + b), b].iter().map(|&s| rate(seg.point(s))).fold(0.0, f64::max);
        let m = (f * (b - a) / per_panel).ceil().max(1.0) as usize;
        for j in 1..=m {
            out.push(a + (b - a) * j as f64 / m as f64);
        }
    }
    out
}

fn check_strip(contour: &Contour, strip: f64) -> Result<(), RhError> {
    for s in &contour.segments {
        for p in [s.base, s.end()] {
            if 1.2 * p.im.abs() > strip {
                return Err(RhError::StripTooNarrow(p, strip));
            }
        }
    }
    Ok(())
}

/// Winding number of `1 - r r*` along a closed polygon.
pub fn winding_of_one_minus_rr(refl: &ReflectionData, poly: &[C64]) -> i64 {
    let f = |k: C64| 1.0 - refl.r(k) * refl.r_star(k);
    let mut total = 0.0;
    let mut prev = f(poly[0]);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let m = 2000;
        for j in 1..=m {
            let cur = f(a + (b - a) * (j as f64 / m as f64));
            total += (cur / prev).arg();
            prev = cur;
        }
    }
    (total / (2.0 * PI)).round() as i64
}

fn check_lens(refl: &ReflectionData, base: C64, end: C64) -> Result<(), RhError> {
    let poly = [base, c64(end.re, 0.0), end];
    let w = winding_of_one_minus_rr(refl, &poly);
    if w != 0 {
        return Err(RhError::InvalidContour(format!(
            "1 - r r* vanishes in the lens between {base} and {end} (winding {w})"
        )));
    }
    Ok(())
}

/// Length along `base + s dir`, `0 <= s <= len`, beyond which
/// `|v - I| < thr`.
fn truncate_edge(v: &dyn Fn(C64) -> M2, base: C64, dir: C64, len: f64, thr: f64) -> f64 {
    let m = 400;
    let last = (0..=m).rev().find(|&j| !((v(base + dir * (len * j as f64 / m as f64)) - M2::IDENTITY).max_abs() < thr));
    match last {
        Some(j) if j < m => len * (j + 1) as f64 / m as f64,
        Some(_) => len,
        None => len / m as f64,
    }
}

/// Half-length of the real interval outside which `|r| < thr`.
fn real_cutoff(refl: &ReflectionData, thr: f64) -> Result<f64, RhError> {
    let top = 4.0 * refl.support.max(1.0);
    let m = 8000;
    let mut last = None;
    for j in 0..=m {
        let k = top * j as f64 / m as f64;
        if refl.r_real(k).norm().max(refl.r_real(-k).norm()) >= thr {
            last = Some(j);
        }
    }
    match last {
        Some(j) if j == m => Err(RhError::TruncationFailure(top)),
        Some(j) => Ok(top * (j + 1) as f64 / m as f64),
        None => Ok(0.0),
    }
}

/// Undeformed problem on the real line, plus the `h` rays through the
/// origin when `h` is present.
pub fn build_sigma_problem(
    refl: &ReflectionData,
    x: f64,
    t: f64,
    opts: &BuildOptions,
) -> Result<(Contour, JumpSpec), RhError> {
    assert!(x >= 0.0 && t >= 0.0, "x and t must be non-negative");
    let thr = opts.trunc_tol;
    let kmax = real_cutoff(refl, thr)?;
    let rl = refl.clone();
    let real_jump: JumpFn = Arc::new(move |k: C64| {
        let th = t_phi(x, t, k).exp();
        M2::lower(rl.r(k) * th) * M2::upper(-rl.r_star(k) / th)
    });
    let rate = |k: C64| local_rate(x, t, k);
    // Where |r| is small the oscillation needs less resolution: the
    // polynomial error on a panel scales like |r| (phase/4)^n / n!.
    let inv_n = 1.0 / opts.n as f64;
    let real_rate = |k: C64| local_rate(x, t, k) * refl.r(k).norm().powf(inv_n).clamp(0.25, 1.0);
    let mut segs = Vec::new();
    let mut jumps = Vec::new();
    let mut junctions = Vec::new();
    if refl.has_h() {
        let rh = refl.clone();
        let d1: JumpFn = Arc::new(move |k: C64| M2::lower(rh.h(k) * t_phi(x, t, k).exp()));
        let rh = refl.clone();
        let d4: JumpFn = Arc::new(move |k: C64| M2::upper(rh.h_star(k) / t_phi(x, t, k).exp()));
        let origin = C64::new(0.0, 0.0);
        for (angle, f, orient) in [
            (-2.0 * PI / 3.0, &d1, 1i8),
            (-PI / 3.0, &d1, -1),
            (PI / 3.0, &d4, -1),
            (2.0 * PI / 3.0, &d4, 1),
        ] {
            let len = truncate_ray(&**f, origin, cis(angle), 1.0, thr)?;
            let mut s = ContourSegment::ray(origin, angle, len, orient);
            s.breaks = panel_breaks(&s, (true, false), 1.0, opts, &rate);
            segs.push(s);
            jumps.push(f.clone());
        }
        junctions.push(origin);
        if kmax > 0.0 {
            for (a, b) in [(-kmax, 0.0), (0.0, kmax)] {
                let mut s = ContourSegment::finite(c64(a, 0.0), c64(b, 0.0));
                s.breaks = panel_breaks(&s, (b == 0.0, a == 0.0), 1.0, opts, &real_rate);
                segs.push(s);
                jumps.push(real_jump.clone());
            }
        }
    } else if kmax > 0.0 {
        let mut s = ContourSegment::finite(c64(-kmax, 0.0), c64(kmax, 0.0));
        s.breaks = panel_breaks(&s, (false, false), 1.0, opts, &real_rate);
        segs.push(s);
        jumps.push(real_jump);
    }
    Ok((Contour::new(segs, junctions), JumpSpec::new(jumps)))
}

fn require_no_h(refl: &ReflectionData) -> Result<(), RhError> {
    if refl.has_h() {
        return Err(RhError::InvalidContour("deformed contours support h = 0 only".into()));
    }
    Ok(())
}

fn require_nonzero_time(x: f64, t: f64) {
    assert!(x > 0.0 && t > 0.0, "deformed problems need x > 0 and t > 0");
}

/// Deformed problem in the similarity sector: four rays from `+-k0` at
/// angles `+-pi/4`, `+-3pi/4` carrying the outer factors, and the diamond
/// with vertices `+-k0`, `+-i k0` carrying the inner factors.
pub fn build_similarity_problem(
    refl: &ReflectionData,
    x: f64,
    t: f64,
    delta: &ConjugationDelta,
    opts: &BuildOptions,
) -> Result<(Contour, JumpSpec), RhError> {
    require_nonzero_time(x, t);
    require_no_h(refl)?;
    let k0 = (x / t / 12.0).sqrt();
    match delta.variant {
        DeltaVariant::Similarity { k0: dk } if (dk - k0).abs() <= 1e-12 * k0 => {}
        _ => return Err(RhError::InvalidContour("delta built for a different k0".into())),
    }
    let thr = opts.trunc_tol;
    let scale = (1.0 / (t * k0).sqrt()).min(k0);
    let mk = |f: Box<dyn Fn(C64) -> M2 + Send + Sync>| -> JumpFn { Arc::from(f) };
    let (r, d) = (refl.clone(), delta.clone());
    let b_l = mk(Box::new(move |k| {
        let dl = d.delta(k).unwrap_or(C64::new(f64::NAN, 0.0));
        M2::lower(r.r1(k) * t_phi(x, t, k).exp() / (dl * dl))
    }));
    let (r, d) = (refl.clone(), delta.clone());
    let b_u = mk(Box::new(move |k| {
        let dl = d.delta(k).unwrap_or(C64::new(f64::NAN, 0.0));
        M2::upper(r.r4(k) / t_phi(x, t, k).exp() * dl * dl)
    }));
    let (r, d) = (refl.clone(), delta.clone());
    let bi_u = mk(Box::new(move |k| {
        let dl = d.delta(k).unwrap_or(C64::new(f64::NAN, 0.0));
        M2::upper(-r.r_star(k) / t_phi(x, t, k).exp() * dl * dl)
    }));
    let (r, d) = (refl.clone(), delta.clone());
    let bi_l = mk(Box::new(move |k| {
        let dl = d.delta(k).unwrap_or(C64::new(f64::NAN, 0.0));
        M2::lower(-r.r(k) * t_phi(x, t, k).exp() / (dl * dl))
    }));

    // Truncation is decided with delta replaced by 1, which changes the
    // jump by a bounded factor only.
    let (r1, r2) = (refl.clone(), refl.clone());
    let probe_l = move |k: C64| M2::lower(r1.r1(k) * t_phi(x, t, k).exp());
    let probe_u = move |k: C64| M2::upper(r2.r4(k) / t_phi(x, t, k).exp());

    let rate = |k: C64| local_rate(x, t, k);
    let kp = c64(k0, 0.0);
    let diag = 2f64.sqrt() * k0;
    let mut segs = Vec::new();
    let mut jumps = Vec::new();
    // (base, angle, jump, orient, is_ray)
    let layout: [(C64, f64, &JumpFn, i8, bool); 8] = [
        (kp, FRAC_PI_4, &b_l, 1, true),
        (kp, -FRAC_PI_4, &b_u, -1, true),
        (kp, 3.0 * FRAC_PI_4, &bi_u, -1, false),
        (kp, -3.0 * FRAC_PI_4, &bi_l, 1, false),
        (-kp, 3.0 * FRAC_PI_4, &b_l, -1, true),
        (-kp, -3.0 * FRAC_PI_4, &b_u, 1, true),
        (-kp, FRAC_PI_4, &bi_u, 1, false),
        (-kp, -FRAC_PI_4, &bi_l, -1, false),
    ];
    for (base, angle, f, orient, is_ray) in layout {
        let lower = is_ray == (angle.sin() > 0.0);
        let probe: &dyn Fn(C64) -> M2 = if lower { &probe_l } else { &probe_u };
        let seg = if is_ray {
            let len = truncate_ray(probe, base, cis(angle), scale, thr)?;
            let s = ContourSegment::ray(base, angle, len, orient);
            check_lens(refl, s.base, s.end())?;
            s
        } else {
            // Diamond edges stop where their jump is negligible.
            let len = truncate_edge(probe, base, cis(angle), diag, thr);
            let mut s = ContourSegment::finite(base, base + cis(angle) * len);
            s.orient = orient;
            s
        };
        let refine = if is_ray || seg.len < diag { (true, false) } else { (true, true) };
        let br = panel_breaks(&seg, refine, scale, opts, &rate);
        segs.push(seg.with_breaks(br));
        jumps.push(f.clone());
    }
    let mut junctions = vec![kp, -kp];
    if segs.iter().any(|s| s.kind == SegmentKind::Segment && s.len >= diag * (1.0 - 1e-12)) {
        junctions.extend([c64(0.0, k0), c64(0.0, -k0)]);
    }
    let contour = Contour::new(segs, junctions);
    check_strip(&contour, refl.strip_radius)?;
    let mut js = JumpSpec::new(jumps);
    js.strip_radius = refl.strip_radius;
    Ok((contour, js))
}

/// Deformed problem in the self-similar sector, conjugated by
/// `e^{-i pi/4 s3}`: rays from `k0` at `pi/6` (out) and `-pi/6` (in), from
/// `-k0` at `5pi/6` (in) and `-5pi/6` (out), and the segment `[-k0, k0]`.
/// The potential is `u = 2 M1_12`.
pub fn build_selfsimilar_problem(
    refl: &ReflectionData,
    x: f64,
    t: f64,
    delta: &ConjugationDelta,
    opts: &BuildOptions,
) -> Result<(Contour, JumpSpec), RhError> {
    require_nonzero_time(x, t);
    require_no_h(refl)?;
    if delta.variant != DeltaVariant::SelfSimilar {
        return Err(RhError::InvalidContour("self-similar problem needs the self-similar delta".into()));
    }
    let k0 = (x / t / 12.0).sqrt();
    let scale = (3.0 * t).cbrt().recip();
    let thr = opts.trunc_tol;
    let (r, d) = (refl.clone(), delta.clone());
    let y1: JumpFn = Arc::new(move |k| {
        let dl = d.delta(k).unwrap_or(C64::new(f64::NAN, 0.0));
        M2::lower(I * r.r1(k) * t_phi(x, t, k).exp() / (dl * dl))
    });
    let (r, d) = (refl.clone(), delta.clone());
    let y2: JumpFn = Arc::new(move |k| {
        let dl = d.delta(k).unwrap_or(C64::new(f64::NAN, 0.0));
        M2::upper(-I * r.r4(k) / t_phi(x, t, k).exp() * dl * dl)
    });
    let (r, d) = (refl.clone(), delta.clone());
    let y3: JumpFn = Arc::new(move |k| {
        let nan = C64::new(f64::NAN, 0.0);
        let dp = d.delta_boundary(k.re, 1.0).unwrap_or(nan);
        let dm = d.delta_boundary(k.re, -1.0).unwrap_or(nan);
        let th = t_phi(x, t, k).exp();
        M2::upper(I * r.r4(k) / th * dm * dm) * M2::lower(I * r.r1(k) * th / (dp * dp))
    });
    let (r1, r2) = (refl.clone(), refl.clone());
    let probe_l = move |k: C64| M2::lower(r1.r1(k) * t_phi(x, t, k).exp());
    let probe_u = move |k: C64| M2::upper(r2.r4(k) / t_phi(x, t, k).exp());
    let rate = |k: C64| local_rate(x, t, k);
    let kp = c64(k0, 0.0);
    let mut segs = Vec::new();
    let mut jumps = Vec::new();
    for (base, angle, f, orient) in [
        (kp, PI / 6.0, &y1, 1i8),
        (-kp, 5.0 * PI / 6.0, &y1, -1),
        (kp, -PI / 6.0, &y2, -1),
        (-kp, -5.0 * PI / 6.0, &y2, 1),
    ] {
        let probe: &dyn Fn(C64) -> M2 = if angle.sin() > 0.0 { &probe_l } else { &probe_u };
        let len = truncate_ray(probe, base, cis(angle), scale, thr)?;
        let s = ContourSegment::ray(base, angle, len, orient);
        check_lens(refl, s.base, s.end())?;
        let br = panel_breaks(&s, (true, false), scale, &BuildOptions { hmin: opts.hmin.max(0.05), ..*opts }, &rate);
        segs.push(s.with_breaks(br));
        jumps.push(f.clone());
    }
    let mid = ContourSegment::finite(-kp, kp);
    let br = panel_breaks(&mid, (true, true), scale, &BuildOptions { hmin: opts.hmin.max(0.05), ..*opts }, &rate);
    segs.push(mid.with_breaks(br));
    jumps.push(y3);
    let contour = Contour::new(segs, vec![kp, -kp]);
    check_strip(&contour, refl.strip_radius)?;
    let mut js = JumpSpec::new(jumps);
    js.strip_radius = refl.strip_radius;
    Ok((contour, js))
}

/// Entries of the two factors of the `[-k0, k0]` jump at `k = 0`:
/// `(i r4(0) delta_-(0)^2, i r1(0) delta_+(0)^-2)`. Both equal
/// `s = i r(0)` when `r(0)` is real.
pub fn selfsimilar_factors_at_zero(refl: &ReflectionData, delta: &ConjugationDelta) -> Result<(C64, C64), RhError> {
    let z = C64::new(0.0, 0.0);
    let dp = delta.delta_boundary(0.0, 1.0)?;
    let dm = delta.delta_boundary(0.0, -1.0)?;
    Ok((I * refl.r4(z) * dm * dm, I * refl.r1(z) / (dp * dp)))
}

/// `u = -2i M1_12` for the undeformed and similarity problems.
pub fn u_from_similarity(sol: &RhSolution, tol: f64) -> Result<f64, RhError> {
    recover_real(-2.0 * I * sol.first_moment().0[0][1], tol)
}

/// `u = 2 M1_12` for the self-similar problem.
pub fn u_from_selfsimilar(sol: &RhSolution, tol: f64) -> Result<f64, RhError> {
    recover_real(2.0 * sol.first_moment().0[0][1], tol)
}

/// Solves the undeformed problem and returns `u(x, t)`.
pub fn solve_sigma_u(refl: &ReflectionData, x: f64, t: f64, opts: &BuildOptions) -> Result<f64, RhError> {
    let (c, j) = build_sigma_problem(refl, x, t, opts)?;
    if c.segments.is_empty() {
        return Ok(0.0);
    }
    let sol = solve_rh(&c, &j, opts.n, opts.tol)?;
    u_from_similarity(&sol, opts.tol.sqrt())
}

/// Solves and accepts on the length-weighted residual, since the pointwise
/// one saturates next to the `|k - k0|^{i nu}` singularities at junctions.
fn solve_deformed(c: &Contour, j: &JumpSpec, opts: &BuildOptions) -> Result<RhSolution, RhError> {
    let sol = solve_rh_unchecked(c, j, opts.n)?;
    if !(sol.residual_l1 <= opts.tol) {
        return Err(RhError::ResidualTooLarge { residual: sol.residual_l1, tol: opts.tol });
    }
    Ok(sol)
}

/// Solves the deformed similarity problem and returns `u(x, t)`.
pub fn solve_similarity_u(refl: &ReflectionData, x: f64, t: f64, opts: &BuildOptions) -> Result<f64, RhError> {
    if refl.is_zero() {
        return Ok(0.0);
    }
    let k0 = (x / t / 12.0).sqrt();
    let delta = super::delta::build_delta(refl, DeltaVariant::Similarity { k0 }, 1e-13)?;
    let (c, j) = build_similarity_problem(refl, x, t, &delta, opts)?;
    let sol = solve_deformed(&c, &j, opts)?;
    u_from_similarity(&sol, opts.tol.sqrt())
}

/// Solves the deformed self-similar problem and returns `u(x, t)`.
pub fn solve_selfsimilar_u(refl: &ReflectionData, x: f64, t: f64, opts: &BuildOptions) -> Result<f64, RhError> {
    if refl.is_zero() {
        return Ok(0.0);
    }
    let delta = super::delta::build_delta(refl, DeltaVariant::SelfSimilar, 1e-13)?;
    let (c, j) = build_selfsimilar_problem(refl, x, t, &delta, opts)?;
    let sol = solve_deformed(&c, &j, opts)?;
    u_from_selfsimilar(&sol, opts.tol.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rh_core::delta::build_delta;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn zero_reflection_gives_no_jump() {
        let z = ReflectionData::zero();
        let (c, _) = build_sigma_problem(&z, 3.0, 1.0, &BuildOptions::default()).unwrap();
        assert!(c.segments.is_empty());
        assert_eq!(solve_sigma_u(&z, 3.0, 1.0, &BuildOptions::default()).unwrap(), 0.0);
        assert_eq!(solve_similarity_u(&z, 3.0, 1.0, &BuildOptions::default()).unwrap(), 0.0);
    }

    #[test]
    fn real_line_jump_matches_formula() {
        let refl = ReflectionData::gaussian(0.1, 0.8, 1.0);
        let (_, j) = build_sigma_problem(&refl, 1.0, 1.0, &BuildOptions::default()).unwrap();
        let mut g = rng();
        for _ in 0..10 {
            let x = g.random_range(0.0..5.0);
            let t = g.random_range(0.0..2.0);
            let k = g.random_range(-3.0..3.0);
            let (_, j) = build_sigma_problem(&refl, x, t, &BuildOptions::default()).unwrap();
            let v = (j.jumps[0])(c64(k, 0.0));
            let r = refl.r_real(k);
            let e = C64::from_polar(1.0, 8.0 * t * k * k * k - 2.0 * k * x);
            assert!((v.0[1][0] - r * e).norm() < 1e-14);
            assert!((v.0[0][1] + r.conj() / e).norm() < 1e-14);
            assert!((v.0[1][1] - (1.0 - r.norm_sqr())).norm() < 1e-14);
            assert!((v.det() - 1.0).norm() < 1e-14);
        }
        let _ = j;
    }

    #[test]
    fn real_part_of_phase_on_the_cross() {
        // On k = k0 + u e^{i pi/4}: Re Phi = -4u^2 (6 k0 + sqrt(2) u).
        let mut g = rng();
        for _ in 0..20 {
            let k0: f64 = g.random_range(0.2..2.0);
            let u: f64 = g.random_range(0.0..3.0);
            let zeta = 12.0 * k0 * k0;
            let k = k0 + u * cis(FRAC_PI_4);
            let re = t_phi(zeta, 1.0, k).re;
            let expect = -4.0 * u * u * (6.0 * k0 + 2f64.sqrt() * u);
            assert!((re - expect).abs() < 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn cubic_decay_on_the_selfsimilar_ray() {
        // Re Phi <= -8 |k - k0|^3 on the ray from k0 at angle pi/6.
        let mut g = rng();
        for _ in 0..50 {
            let k0: f64 = g.random_range(0.01..1.0);
            let u: f64 = g.random_range(0.0..3.0);
            let zeta = 12.0 * k0 * k0;
            let k = k0 + u * cis(PI / 6.0);
            assert!(t_phi(zeta, 1.0, k).re <= -8.0 * u.powi(3) + 1e-12);
        }
    }

    #[test]
    fn deformed_contour_is_symmetric() {
        let refl = ReflectionData::gaussian(0.0, 1.359, 1.0);
        let (x, t) = (12.0 * 5.0, 5.0);
        let delta = build_delta(&refl, DeltaVariant::Similarity { k0: 1.0 }, 1e-12).unwrap();
        let (c, _) = build_similarity_problem(&refl, x, t, &delta, &BuildOptions::default()).unwrap();
        assert_eq!(c.segments.len(), 8);
        assert!(c.is_reflection_symmetric(1e-12));
    }

    #[test]
    fn selfsimilar_factors_equal_s() {
        let refl = ReflectionData::gaussian_even(-0.4, 1.0);
        let delta = build_delta(&refl, DeltaVariant::SelfSimilar, 1e-13).unwrap();
        let (up, lo) = selfsimilar_factors_at_zero(&refl, &delta).unwrap();
        let s = I * refl.r_real(0.0);
        assert!((up - s).norm() < 1e-8 && (lo - s).norm() < 1e-8, "{up} {lo} {s}");
    }

    #[test]
    fn narrow_strip_is_rejected() {
        let refl = ReflectionData::rational_odd(0.5);
        let delta = build_delta(&refl, DeltaVariant::Similarity { k0: 1.0 }, 1e-12).unwrap();
        let r = build_similarity_problem(&refl, 12.0 * 0.2, 0.2, &delta, &BuildOptions::default());
        assert!(matches!(r, Err(RhError::StripTooNarrow(..))));
    }

    fn max_jump_det_defect(c: &Contour, j: &JumpSpec, frac: f64) -> f64 {
        c.segments
            .iter()
            .zip(&j.jumps)
            .map(|(seg, f)| (f(seg.point(frac * seg.len)).det() - 1.0).norm())
            .fold(0.0, f64::max)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn jumps_are_unimodular(x in 0.1f64..10.0, t in 0.05f64..2.0, frac in 0.0f64..1.0, c1 in 0.2f64..1.3) {
            let opts = BuildOptions::default();
            let refl = ReflectionData::gaussian(0.0, c1, 1.0);
            let (c, j) = build_sigma_problem(&refl, x, t, &opts).unwrap();
            prop_assert!(max_jump_det_defect(&c, &j, frac) < 1e-12);
            let (c, j) = build_sigma_problem(&ReflectionData::rational_odd(2.0), x, t, &opts).unwrap();
            prop_assert!(max_jump_det_defect(&c, &j, frac) < 1e-12);
            let k0 = (x / t / 12.0).sqrt();
            let delta = build_delta(&refl, DeltaVariant::Similarity { k0 }, 1e-12).unwrap();
            if let Ok((c, j)) = build_similarity_problem(&refl, x, t, &delta, &opts) {
                prop_assert!(max_jump_det_defect(&c, &j, frac) < 1e-10);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(6))]

        #[test]
        fn solution_has_reflection_symmetry(x in 0.5f64..4.0, t in 0.0f64..0.2, zr in -2.0f64..2.0, zi in 0.3f64..2.0) {
            let opts = BuildOptions::default();
            let refl = ReflectionData::gaussian(0.1, 0.9, 1.0);
            let (c, j) = build_sigma_problem(&refl, x, t, &opts).unwrap();
            let sol = crate::rh_core::solve_rh_unchecked(&c, &j, opts.n).unwrap();
            let z = c64(zr, zi);
            let (a, b) = (sol.eval(z), sol.eval(-z.conj()).conj());
            prop_assert!((a.det() - 1.0).norm() < 1e-10);
            for i in 0..2 {
                for k in 0..2 {
                    prop_assert!((a.0[i][k] - b.0[i][k]).norm() < 1e-10);
                }
            }
        }
    }
}
