//! Complex log-gamma and an Airy function evaluator.

use std::f64::consts::PI;

use crate::ode::{dopri5, OdeOptions};
use crate::C64;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(z)` by the Lanczos approximation, with reflection for
/// `Re z < 1/2`. Only `exp` of the result is branch independent.
pub fn ln_gamma(z: C64) -> C64 {
    if z.re < 0.5 {
        // Gamma(z) Gamma(1-z) = pi / sin(pi z)
        let s = (z * PI).sin();
        return C64::new(PI.ln(), 0.0) - s.ln() - ln_gamma(C64::new(1.0, 0.0) - z);
    }
    let z = z - 1.0;
    let mut a = C64::new(LANCZOS[0], 0.0);
    let t = z + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += *c / (z + i as f64);
    }
    C64::new(0.5 * (2.0 * PI).ln(), 0.0) + (z + 0.5) * t.ln() - t + a.ln()
}

/// `Gamma(z)`.
pub fn gamma(z: C64) -> C64 {
    ln_gamma(z).exp()
}

/// `arg Gamma(i nu)` in `(-pi, pi]`.
pub fn arg_gamma_imag(nu: f64) -> f64 {
    let g = gamma(C64::new(0.0, nu));
    g.im.atan2(g.re)
}

/// Airy function `Ai` and its derivative.
///
/// Uses the asymptotic expansion for `x >= 8` and integrates `w'' = x w`
/// downward from `x = 8` otherwise, which is the stable direction for the
/// recessive solution.
pub fn airy_ai(x: f64) -> (f64, f64) {
    const X0: f64 = 8.0;
    if x >= X0 {
        return airy_ai_asymptotic(x);
    }
    let (a0, d0) = airy_ai_asymptotic(X0);
    let opts = OdeOptions {
        rtol: 1e-13,
        atol: 1e-300,
        ..OdeOptions::default()
    };
    let y = dopri5(
        |t, y, dy| {
            dy[0] = y[1];
            dy[1] = t * y[0];
        },
        X0,
        &[a0, d0],
        x,
        &opts,
    )
    .expect("Airy ODE integration");
    (y[0], y[1])
}

fn airy_ai_asymptotic(x: f64) -> (f64, f64) {
    let zeta = 2.0 / 3.0 * x.powf(1.5);
    // u_k and v_k coefficients of the standard expansions.
    let mut u = 1.0;
    let mut su = 1.0;
    let mut sv = 1.0;
    let mut sign = -1.0;
    for k in 1..20 {
        let kf = k as f64;
        u *= (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0)
            / ((2.0 * kf - 1.0) * 216.0 * kf);
        let v = -u * (6.0 * kf + 1.0) / (6.0 * kf - 1.0);
        let tu = sign * u / zeta.powi(k);
        let tv = sign * v / zeta.powi(k);
        if tu.abs() < 1e-17 && tv.abs() < 1e-17 {
            break;
        }
        su += tu;
        sv += tv;
        sign = -sign;
    }
    let e = (-zeta).exp();
    let ai = e / (2.0 * PI.sqrt() * x.powf(0.25)) * su;
    let aip = -x.powf(0.25) * e / (2.0 * PI.sqrt()) * sv;
    (ai, aip)
}

/// Maclaurin series of `Ai`, accurate for moderate `|x|`.
pub fn airy_ai_maclaurin(x: f64) -> f64 {
    const C1: f64 = 0.355_028_053_887_817_239_260;
    const C2: f64 = 0.258_819_403_792_806_798_405;
    let x3 = x * x * x;
    let mut f = 1.0;
    let mut g = x;
    let mut tf = 1.0;
    let mut tg = x;
    for k in 1..200 {
        let kf = k as f64;
        tf *= x3 / ((3.0 * kf - 1.0) * (3.0 * kf));
        tg *= x3 / ((3.0 * kf) * (3.0 * kf + 1.0));
        f += tf;
        g += tg;
        if tf.abs() < 1e-18 * f.abs().max(1.0) && tg.abs() < 1e-18 * g.abs().max(1.0) {
            break;
        }
    }
    C1 * f - C2 * g
}
