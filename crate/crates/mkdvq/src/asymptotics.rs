//! Closed-form long-time predictions.
//!
//! Similarity sector, with `zeta = x/t`, `k0 = sqrt(zeta/12)`,
//! `tau = 12 t k0^3`:
//!
//! ```text
//! u ~ -(1/sqrt(t k0)) sqrt(nu/3) cos(16 t k0^3 - nu ln(192 t k0^3) + phi)
//! nu  = -ln(1 - |r(k0)|^2) / (2 pi)
//! phi = pi/4 + arg Gamma(i nu) - arg r(k0) + (1/pi) PV int psi(s)/(s - k0) ds
//! ```
//!
//! Self-similar sector: `u ~ u_P(-x/(3t)^(1/3); s, 0, -s) / (3t)^(1/3)` with
//! `s = i r(0)`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::painleve::{stokes_from_s, PainleveError, PainleveSolution};
use crate::quad::{integrate_with_breaks, QuadError};
use crate::special::arg_gamma_imag;
use crate::spectral::ReflectionData;
use crate::{C64, I};

#[derive(Debug, Error)]
pub enum AsymptoticsError {
    #[error("pole {pole} outside (-{trunc}, {trunc})")]
    PoleOutsideRange { pole: f64, trunc: f64 },
    #[error("quadrature failed: {0}")]
    Quadrature(#[from] QuadError),
    #[error("Gamma evaluation failed at i*{0}")]
    GammaEvaluationFailure(f64),
    #[error("tau = {tau} below the sector threshold {tau_min}")]
    SectorViolation { tau: f64, tau_min: f64 },
    #[error("x/t^(1/3) = {ratio} outside (0, {n_max})")]
    SelfSimilarSectorViolation { ratio: f64, n_max: f64 },
    #[error("need at least 4 pairs spanning a decade with positive errors")]
    InsufficientData,
    #[error("x and t must be positive")]
    InvalidPoint,
    #[error(transparent)]
    Painleve(#[from] PainleveError),
}

/// `PV int_{-trunc}^{trunc} f(s)/(s - pole) ds` by subtracting `f(pole)`.
pub fn pv_cauchy(f: &dyn Fn(f64) -> f64, pole: f64, trunc: f64, tol: f64) -> Result<f64, AsymptoticsError> {
    pv_cauchy_with_breaks(f, pole, trunc, tol, &[])
}

/// As [`pv_cauchy`] with extra quadrature breakpoints where `f` has kinks.
pub fn pv_cauchy_with_breaks(
    f: &dyn Fn(f64) -> f64,
    pole: f64,
    trunc: f64,
    tol: f64,
    breaks: &[f64],
) -> Result<f64, AsymptoticsError> {
    if !(pole.abs() < trunc) {
        return Err(AsymptoticsError::PoleOutsideRange { pole, trunc });
    }
    let fp = f(pole);
    let mut b: Vec<f64> = breaks.iter().copied().filter(|x| x.abs() < trunc).collect();
    b.extend([-trunc, pole, trunc]);
    let v = integrate_with_breaks(
        |s| {
            let d = s - pole;
            if d == 0.0 {
                C64::new(0.0, 0.0)
            } else {
                C64::new((f(s) - fp) / d, 0.0)
            }
        },
        &b,
        tol,
        tol,
    )?;
    Ok(v.re + fp * ((trunc - pole) / (trunc + pole)).ln())
}

/// Derived quantities of the similarity sector at one `(x, t)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct SimilarityParams {
    pub x: f64,
    pub t: f64,
    pub zeta: f64,
    pub k0: f64,
    pub tau: f64,
    pub nu: f64,
    pub phi: f64,
    /// `q(zeta)` as `(re, im)`.
    pub q: C64,
    pub eps: f64,
    pub rho: f64,
    /// `Phi(zeta, 0) = -16 i k0^3`.
    pub phi0: C64,
    /// `PV int psi(s)/(s - k0) ds`.
    pub pv: f64,
}

/// Default truncation for the PV integral.
fn pv_trunc(refl: &ReflectionData, k0: f64) -> f64 {
    refl.support.max(8.0).max(4.0 * k0)
}

pub fn similarity_params(refl: &ReflectionData, x: f64, t: f64) -> Result<SimilarityParams, AsymptoticsError> {
    if !(x > 0.0 && t > 0.0) {
        return Err(AsymptoticsError::InvalidPoint);
    }
    let zeta = x / t;
    let k0 = (zeta / 12.0).sqrt();
    let tau = 12.0 * t * k0.powi(3);
    let r0 = refl.r_real(k0);
    let psi0 = (-r0.norm_sqr()).ln_1p();
    let nu = -psi0 / (2.0 * PI);
    let psi = |s: f64| if s.abs() > k0 { refl.psi(s) } else { psi0 };
    let trunc = pv_trunc(refl, k0);
    let pv = pv_cauchy_with_breaks(&psi, k0, trunc, 1e-13, &[-k0])?;
    let ag = if nu > 0.0 { arg_gamma_imag(nu) } else { 0.0 };
    if !ag.is_finite() {
        return Err(AsymptoticsError::GammaEvaluationFailure(nu));
    }
    let arg_r = r0.im.atan2(r0.re);
    let phi = PI / 4.0 + ag - arg_r + pv / PI;
    let q = (C64::new(0.0, -pv / PI)).exp()
        * r0
        * (2.0 * I * nu * (2.0 * 48f64.sqrt() * k0.powf(1.5)).ln()).exp();
    let eps = k0 / 2.0;
    Ok(SimilarityParams {
        x,
        t,
        zeta,
        k0,
        tau,
        nu,
        phi,
        q,
        eps,
        rho: eps * (48.0 * k0).sqrt(),
        phi0: C64::new(0.0, -16.0 * k0.powi(3)),
        pv,
    })
}

/// Errors with [`AsymptoticsError::SectorViolation`] when `tau < tau_min`.
pub fn check_similarity_sector(p: &SimilarityParams, tau_min: f64) -> Result<(), AsymptoticsError> {
    if p.tau < tau_min {
        return Err(AsymptoticsError::SectorViolation { tau: p.tau, tau_min });
    }
    Ok(())
}

/// `beta(zeta, t) = sqrt(nu) e^{i(pi/4 - arg q + arg Gamma(i nu))} e^{-t Phi0} t^{-i nu}`.
pub fn beta(p: &SimilarityParams, t: f64) -> C64 {
    if p.nu == 0.0 {
        return C64::new(0.0, 0.0);
    }
    let arg_q = p.q.im.atan2(p.q.re);
    let ph = PI / 4.0 - arg_q + arg_gamma_imag(p.nu);
    p.nu.sqrt() * C64::from_polar(1.0, ph) * (-t * p.phi0).exp() * C64::from_polar(1.0, -p.nu * t.ln())
}

/// Leading similarity-sector term `-u_a(x,t)/sqrt(t k0)`.
pub fn u_similarity_from(p: &SimilarityParams) -> f64 {
    if p.nu == 0.0 {
        return 0.0;
    }
    let t = p.t;
    let c = 16.0 * t * p.k0.powi(3);
    let ua = (p.nu / 3.0).sqrt() * (c - p.nu * (192.0 * t * p.k0.powi(3)).ln() + p.phi).cos();
    -ua / (t * p.k0).sqrt()
}

pub fn u_similarity(refl: &ReflectionData, x: f64, t: f64) -> Result<f64, AsymptoticsError> {
    Ok(u_similarity_from(&similarity_params(refl, x, t)?))
}

/// Self-similar sector data at one `(x, t)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct SelfSimilarParams {
    pub y: f64,
    pub s: C64,
}

pub fn selfsimilar_params(refl: &ReflectionData, x: f64, t: f64) -> SelfSimilarParams {
    SelfSimilarParams { y: -x / (3.0 * t).cbrt(), s: I * refl.r_real(0.0) }
}

/// Errors unless `0 < x t^{-1/3} < n_max`.
pub fn check_selfsimilar_sector(x: f64, t: f64, n_max: f64) -> Result<(), AsymptoticsError> {
    let ratio = x / t.cbrt();
    if !(ratio > 0.0 && ratio < n_max) {
        return Err(AsymptoticsError::SelfSimilarSectorViolation { ratio, n_max });
    }
    Ok(())
}

/// `u_P(-x/(3t)^(1/3); s, 0, -s) / (3t)^(1/3)` with `s = i r(0)`; `pw` must
/// carry that Stokes data.
pub fn u_selfsimilar(refl: &ReflectionData, x: f64, t: f64, pw: &PainleveSolution) -> Result<f64, AsymptoticsError> {
    let p = selfsimilar_params(refl, x, t);
    let expect = stokes_from_s(p.s);
    assert!(
        (pw.stokes.s1 - expect.s1).norm() < 1e-12 && (pw.stokes.s3 - expect.s3).norm() < 1e-12,
        "Painlevé solution built for different Stokes data"
    );
    if p.s.norm() == 0.0 {
        return Ok(0.0);
    }
    let (u, _) = pw.eval(p.y)?;
    Ok(u.re / (3.0 * t).cbrt())
}

/// Least-squares slope of `ln error` against `ln scale`; needs at least 4
/// pairs with scales spanning a decade.
pub fn fit_decay_exponent(pairs: &[(f64, f64)]) -> Result<f64, AsymptoticsError> {
    let lo = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
    if !(hi / lo >= 10.0 * (1.0 - 1e-12)) {
        return Err(AsymptoticsError::InsufficientData);
    }
    fit_slope(pairs)
}

/// As [`fit_decay_exponent`] without the span requirement.
pub fn fit_slope(pairs: &[(f64, f64)]) -> Result<f64, AsymptoticsError> {
    if pairs.len() < 4 || pairs.iter().any(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return Err(AsymptoticsError::InsufficientData);
    }
    let x: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    Ok(crate::spectral::linear_fit(&x, &y).0)
}

/// One row of a prediction table.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PredictionRow {
    pub x: f64,
    pub t: f64,
    pub zeta: f64,
    pub k0: f64,
    pub tau: f64,
    pub nu: f64,
    pub phi: f64,
    pub u_asymptotic: f64,
}

impl From<&SimilarityParams> for PredictionRow {
    fn from(p: &SimilarityParams) -> Self {
        PredictionRow {
            x: p.x,
            t: p.t,
            zeta: p.zeta,
            k0: p.k0,
            tau: p.tau,
            nu: p.nu,
            phi: p.phi,
            u_asymptotic: u_similarity_from(p),
        }
    }
}

pub fn write_prediction_csv(path: &Path, rows: &[PredictionRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

/// JSON summary of a rate experiment.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RateSummary {
    pub scale_name: String,
    pub scales: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: Option<f64>,
}

pub fn write_summary_json(path: &Path, s: &RateSummary) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(serde_json::to_string_pretty(s).expect("summary").as_bytes())?;
    f.write_all(b"\n")
}
