//! Acceptance suite. Each test prints one `PASS`/`FAIL` line to the raw
//! stderr handle, so the lines show up even when output is captured, then
//! asserts the same condition.

use std::f64::consts::{E, PI};
use std::io::Write;
use std::time::Instant;

use mkdvq::asymptotics::{beta, fit_decay_exponent, similarity_params};
use mkdvq::cli::{default_k_samples, run_verify_pipeline, run_verify_selfsimilar, run_verify_similarity};
use mkdvq::mkdv_sim::{manufactured, SimConfig, SimState, DEFAULT_H};
use mkdvq::painleve::{
    model_mz_check, ode_oracle_values, painleve_problem, stokes_from_s, PainleveSolution, RayGrid, StokesTriple,
};
use mkdvq::rh_core::builders::{
    build_selfsimilar_problem, build_sigma_problem, build_similarity_problem, solve_sigma_u, solve_similarity_u,
    BuildOptions,
};
use mkdvq::rh_core::delta::{build_delta, DeltaVariant};
use mkdvq::rh_core::{solve_rh_unchecked, Contour, JumpSpec, RhSolution};
use mkdvq::spectral::{FnSpec, ReflectionData};
use mkdvq::{c64, cis, C64};
use rand::{RngExt, SeedableRng};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("acceptance [{id}] {name}: {} | {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn painleve_rh_agrees_with_anchored_ode() {
    let t0 = Instant::now();
    let ys: Vec<f64> = (0..21).map(|j| -3.0 + 0.3 * j as f64).collect();
    let stokes = stokes_from_s(c64(0.0, 0.3));
    let rh = PainleveSolution::rh(stokes, RayGrid::default().n, 1e-12).tabulate(&ys).unwrap();
    let ode = ode_oracle_values(&stokes, &ys, 3.0, 1e-12).unwrap();
    let err = rh.iter().zip(&ode).map(|((_, u, _), v)| (u.re - v).abs().max(u.im.abs())).fold(0.0, f64::max);
    let zero = stokes_from_s(c64(0.0, 0.0));
    let z_rh = PainleveSolution::rh(zero, RayGrid::default().n, 1e-12).tabulate(&ys).unwrap();
    let z_ode = ode_oracle_values(&zero, &ys, 3.0, 1e-12).unwrap();
    let zmax = z_rh.iter().map(|r| r.1.norm()).chain(z_ode.iter().map(|v| v.abs())).fold(0.0, f64::max);
    let secs = t0.elapsed().as_secs_f64();
    let pass = err <= 1e-6 && zmax <= f64::EPSILON && secs <= 120.0;
    report(
        1,
        "Painleve RH vs anchored ODE, s = 0.3i",
        pass,
        &format!("max err {err:.3e} (<= 1e-6), s = 0 gives max |u| {zmax:.1e}, {secs:.1} s (<= 120 s)"),
    );
    assert!(pass);
}

#[test]
fn model_problem_matches_painleve() {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for y in [-1.0, 0.0, 1.0] {
        for z0 in [0.5, 1.0, 2.0] {
            worst = worst.max(model_mz_check(c64(0.0, 0.3), y, z0, RayGrid::default().n).unwrap());
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    let pass = worst <= 1e-5 && secs <= 120.0;
    report(
        2,
        "model problem on z0 Z vs Painleve RH",
        pass,
        &format!("max |u_Z - u_P| {worst:.3e} (<= 1e-5), {secs:.1} s (<= 120 s)"),
    );
    assert!(pass);
}

#[test]
fn similarity_sector_rate() {
    let t0 = Instant::now();
    // |r(1)| = 1/2.
    let refl = ReflectionData::gaussian(0.0, 0.5 * E, 1.0);
    let rep = run_verify_similarity(&refl, 12.0, &[50.0, 100.0, 200.0, 400.0], 4, &BuildOptions::default()).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let slope = rep.slope.unwrap();
    let pass = slope <= -0.25 && secs <= 600.0;
    let errs: Vec<String> = rep.err.iter().map(|e| format!("{e:.2e}")).collect();
    report(
        3,
        "similarity-sector rate at zeta = 12",
        pass,
        &format!(
            "slope {slope:.3} (<= -0.25), scaled errors [{}], envelope slope over one phase period {:.3}, {secs:.1} s",
            errs.join(", "),
            rep.envelope_slope.unwrap_or(f64::NAN)
        ),
    );
    assert!(pass);
}

#[test]
fn deformation_is_exact() {
    let t0 = Instant::now();
    let refl = ReflectionData::gaussian(0.0, 2.0, 1.0);
    let k0: f64 = 2.0;
    let opts = BuildOptions::default();
    let mut worst: f64 = 0.0;
    for tau in [5.0, 10.0, 20.0, 50.0] {
        let t = tau / (12.0 * k0.powi(3));
        let x = 12.0 * k0 * k0 * t;
        let a = solve_sigma_u(&refl, x, t, &opts).unwrap();
        let b = solve_similarity_u(&refl, x, t, &opts).unwrap();
        worst = worst.max((a - b).abs());
    }
    let pass = worst <= 1e-6;
    report(
        4,
        "undeformed vs deformed u, tau in {5, 10, 20, 50}",
        pass,
        &format!("max difference {worst:.3e} (<= 1e-6), {:.1} s", t0.elapsed().as_secs_f64()),
    );
    assert!(pass);
}

#[test]
fn selfsimilar_rate() {
    let t0 = Instant::now();
    let refl = ReflectionData::gaussian_even(-0.4, 1.0);
    let ts: Vec<f64> = [2.0, 2.5, 3.0, 3.5, 4.0].iter().map(|e| 10f64.powf(*e)).collect();
    let rep = run_verify_selfsimilar(&refl, 1.0, &ts, &BuildOptions::default(), RayGrid::default().n).unwrap();
    let pairs: Vec<(f64, f64)> = ts.iter().copied().zip(rep.err.iter().copied()).collect();
    let exponent = fit_decay_exponent(&pairs).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let pass = (exponent + 2.0 / 3.0).abs() <= 0.15 && secs <= 600.0;
    report(
        5,
        "self-similar rate at x t^(-1/3) = 1, r(0) = -0.4",
        pass,
        &format!("exponent {exponent:.3} (-2/3 +- 0.15), {secs:.1} s (<= 600 s)"),
    );
    assert!(pass);
}

#[test]
fn global_relation_pipeline() {
    let t0 = Instant::now();
    let sim = SimConfig {
        u0: FnSpec::Gaussian { amp: 0.1, center: 4.0, width: 1.0 },
        g0: FnSpec::Expr { expr: "0.1*(t/4)^4*exp(4-t)".into() },
        g1: FnSpec::Zero,
        x_max: 60.0,
        t_final: 20.0,
        h: 0.1,
        cfl: 0.5,
        record_every: 0.05,
        sponge: 300.0,
    };
    let rep = run_verify_pipeline(&sim, &default_k_samples(), 1e-10).unwrap();
    report(
        6,
        "simulation -> spectral functions -> global relation and r(0)",
        rep.pass,
        &format!(
            "budget {:.2e} = 10 (sim err {:.2e} + quad tol {:.0e}); residual over closed D1 {:.3e}, \
             off the real axis {:.3e}; |r(0)| {:.3e}; {:.1} s",
            rep.budget,
            rep.sim_error,
            rep.quad_tol,
            rep.global_relation_residual,
            rep.interior_residual,
            rep.r0_abs,
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(rep.pass);
}

/// Distance from `z` to the contour, measured to panel end points and
/// centres.
fn distance_to_contour(sol: &RhSolution, z: C64) -> f64 {
    sol.panels
        .iter()
        .flat_map(|p| [p.center - p.hdir, p.center, p.center + p.hdir])
        .map(|w| (w - z).norm())
        .fold(f64::INFINITY, f64::min)
}

/// `(max |det m - 1|, max |m(k) - conj(m(-conj k))|)` at random probes
/// kept at least `gap` away from the contour. `frame` maps the solved
/// function back to the mKdV normalisation before the symmetry test.
fn probe(sol: &RhSolution, radius: f64, gap: f64, seed: u64, symmetric: bool, frame: C64) -> (f64, f64) {
    let mut g = rng(seed);
    let (mut det, mut sym, mut n) = (0.0f64, 0.0f64, 0);
    while n < 20 {
        let z = c64(g.random_range(-radius..radius), g.random_range(-radius..radius));
        let zr = -z.conj();
        if distance_to_contour(sol, z) < gap || distance_to_contour(sol, zr) < gap {
            continue;
        }
        let m = sol.eval(z);
        det = det.max((m.det() - 1.0).norm());
        if symmetric {
            let m = m.conj_by_diag(frame);
            let mr = sol.eval(zr).conj_by_diag(frame).conj();
            for i in 0..2 {
                for j in 0..2 {
                    sym = sym.max((m.0[i][j] - mr.0[i][j]).norm());
                }
            }
        }
        n += 1;
    }
    (det, sym)
}

fn solved(c: &Contour, j: &JumpSpec, n: usize) -> RhSolution {
    solve_rh_unchecked(c, j, n).unwrap()
}

#[test]
fn invariant_suite() {
    let t0 = Instant::now();
    let opts = BuildOptions::default();
    let mut det: f64 = 0.0;
    let mut sym: f64 = 0.0;

    let refl = ReflectionData::gaussian(0.0, 2.0, 1.0);
    let (c, j) = build_sigma_problem(&refl, 12.0 * 4.0 * 0.1, 0.1, &opts).unwrap();
    let (d, s) = probe(&solved(&c, &j, opts.n), 3.0, 0.2, 1, true, C64::new(1.0, 0.0));
    det = det.max(d);
    sym = sym.max(s);

    let refl = ReflectionData::gaussian(0.0, 0.5 * E, 1.0);
    let (x, t) = (12.0 * 2.0, 2.0);
    let delta = build_delta(&refl, DeltaVariant::Similarity { k0: 1.0 }, 1e-13).unwrap();
    let (c, j) = build_similarity_problem(&refl, x, t, &delta, &opts).unwrap();
    let (d, s) = probe(&solved(&c, &j, opts.n), 2.0, 0.2, 2, true, C64::new(1.0, 0.0));
    det = det.max(d);
    sym = sym.max(s);

    let refl = ReflectionData::gaussian_even(-0.4, 1.0);
    let t = 100.0f64;
    let delta = build_delta(&refl, DeltaVariant::SelfSimilar, 1e-13).unwrap();
    let (c, j) = build_selfsimilar_problem(&refl, t.cbrt(), t, &delta, &opts).unwrap();
    // Solved in the Painleve normalisation e^{-i pi sigma3/4} m e^{i pi sigma3/4}.
    let (d, s) = probe(&solved(&c, &j, opts.n), 1.0, 0.05, 3, true, cis(PI / 4.0));
    det = det.max(d);
    sym = sym.max(s);

    let grid = RayGrid::default();
    let (c, j) = painleve_problem(&stokes_from_s(c64(0.0, 0.3)), 0.5, &grid, 1e-12).unwrap();
    let (d, _) = probe(&solved(&c, &j, grid.n), 3.0, 0.2, 4, false, C64::new(1.0, 0.0));
    det = det.max(d);

    // delta(k) delta(-k) = 1 off the real line.
    let mut g = rng(5);
    let refl = ReflectionData::gaussian(0.0, 0.5 * E, 1.0);
    let delta = build_delta(&refl, DeltaVariant::Similarity { k0: 1.0 }, 1e-13).unwrap();
    let mut dd: f64 = 0.0;
    for _ in 0..100 {
        let mut im: f64 = g.random_range(-2.0..2.0);
        if im.abs() < 0.05 {
            im = 0.05f64.copysign(im);
        }
        let k = c64(g.random_range(-3.0..3.0), im);
        dd = dd.max((delta.delta(k).unwrap() * delta.delta(-k).unwrap() - 1.0).norm());
    }

    // |beta| = sqrt(nu).
    let mut bb: f64 = 0.0;
    for _ in 0..50 {
        let r = ReflectionData::gaussian(g.random_range(-0.3..0.3), g.random_range(-1.0..1.0), g.random_range(0.5..2.0));
        let t: f64 = g.random_range(1.0..100.0);
        let x = g.random_range(0.5..30.0) * t;
        let p = similarity_params(&r, x, t).unwrap();
        bb = bb.max((beta(&p, t).norm() - p.nu.sqrt()).abs());
    }

    // Stokes cyclic relation.
    let mut cyc: f64 = 0.0;
    let mut n = 0;
    while n < 50 {
        let s1 = c64(g.random_range(-2.0..2.0), g.random_range(-2.0..2.0));
        let s2 = c64(g.random_range(-2.0..2.0), g.random_range(-2.0..2.0));
        if (1.0 + s1 * s2).norm() < 0.1 {
            continue;
        }
        cyc = cyc.max(StokesTriple::complete(s1, s2).unwrap().cyclic_residual());
        cyc = cyc.max(stokes_from_s(s1).cyclic_residual());
        n += 1;
    }

    // psi is continuous at +-k0.
    let mut psi: f64 = 0.0;
    for _ in 0..20 {
        let k0: f64 = g.random_range(0.2..2.0);
        let d = build_delta(&refl, DeltaVariant::Similarity { k0 }, 1e-13).unwrap();
        for s in [k0, -k0] {
            let (a, b) = (s * (1.0 - 1e-15), s * (1.0 + 1e-15));
            psi = psi.max((d.psi(a) - d.psi(b)).abs());
        }
    }

    let secs = t0.elapsed().as_secs_f64();
    let pass = det <= 1e-8 && sym <= 1e-8 && dd <= 1e-10 && bb <= 1e-12 && cyc <= 1e-12 && psi <= 1e-12 && secs < 60.0;
    report(
        7,
        "invariants",
        pass,
        &format!(
            "det m - 1 {det:.1e} (<= 1e-8), m(k) - conj m(-conj k) {sym:.1e} (<= 1e-8), delta(k) delta(-k) - 1 {dd:.1e} \
             (<= 1e-10), |beta| - sqrt(nu) {bb:.1e} (<= 1e-12), cyclic {cyc:.1e} (<= 1e-12), psi jump {psi:.1e} \
             (<= 1e-12), {secs:.1} s (< 60 s)"
        ),
    );
    assert!(pass);
}

#[test]
fn pde_fixture() {
    let t0 = Instant::now();
    let t_end = 1.0;
    let hs = [0.2, 0.1, 0.05];
    let errs: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let mut s = manufactured::state(h, 300.0);
            let dt = 0.5 * h.powi(3);
            s.run(t_end, dt, 0.0).unwrap();
            manufactured::max_error(&s)
        })
        .collect();
    let order = (errs[1] / errs[2]).log2();
    let first = (errs[0] / errs[1]).log2();

    let length = 20.0;
    let h = DEFAULT_H;
    let n = (length / h).round() as usize;
    let mut p = SimState::periodic(&|x| 0.3 * (-(x - 10.0) * (x - 10.0)).exp() + 0.1 * (PI * x / 5.0).sin(), n, length);
    let m0 = p.mass();
    let span = 5.0;
    let dt = 0.5 * p.h.powi(3);
    p.run(span, dt, 0.0).unwrap();
    let drift = (p.mass() - m0).abs() / span;

    let pass = order >= 1.8 && drift <= 1e-6;
    report(
        8,
        "PDE fixture",
        pass,
        &format!(
            "manufactured order {order:.2} (>= 1.8; coarser pair {first:.2}), errors [{:.2e}, {:.2e}, {:.2e}], \
             periodic mass drift {drift:.1e} per unit time (<= 1e-6), {:.1} s",
            errs[0],
            errs[1],
            errs[2],
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}
