//! Spectral functions of half-line data.
//!
//! `X(0,k)` and `T(0,k)` solve the x- and t-parts of the Lax pair with
//! `X -> I` as `x -> infinity` and `T -> I` as `t -> infinity`:
//!
//! ```text
//! X_x = ik[s3, X] + U X,        U = [[0, u0], [u0, 0]]
//! T_t = -4ik^3[s3, T] + V T,    V built from g0, g1, g2
//! X(0,k) = [[conj a(conj k), b(k)], [conj b(conj k), a(k)]]
//! T(0,k) = [[conj A(conj k), B(k)], [conj B(conj k), A(k)]]
//! ```
//!
//! Both systems are integrated from the truncation point toward zero after
//! removing the oscillatory part of the linear term; the neglected tail
//! enters through the first Neumann iterate of the Volterra equation.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ode::{dopri5, OdeError, OdeOptions};
use crate::quad::{integrate, QuadError};
use crate::{c64, C64, I, M2};

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("tail of {0} does not decay")]
    NonDecayingTail(String),
    #[error("integration failed: {0}")]
    StepFailure(#[from] OdeError),
    #[error("tail quadrature failed: {0}")]
    Quadrature(#[from] QuadError),
    #[error("|a(k)| below tolerance at k = {0}")]
    ZeroOfA(C64),
    #[error("|d(k)| below tolerance at k = {0}")]
    ZeroOfD(C64),
    #[error("sup |r| = {0} is not below 1")]
    ReflectionTooLarge(f64),
    #[error("sample k = {0} lies outside the closed domain D1")]
    DomainViolation(C64),
    #[error("invalid data: {0}")]
    InvalidData(String),
}

/// JSON description of a real function of one variable.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FnSpec {
    Zero,
    /// Expression in the variable `x` (initial datum) or `t` (boundary).
    Expr { expr: String },
    Gaussian { amp: f64, center: f64, width: f64 },
    /// Samples on an increasing grid, interpolated by local cubics.
    Samples { grid: Vec<f64>, values: Vec<f64> },
}

/// Model for a sampled function beyond its last sample.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TailModel {
    /// `amp * exp(-rate * x)`
    Exponential { amp: f64, rate: f64 },
    /// `amp * x^(-power)`
    Polynomial { amp: f64, power: f64 },
    Zero,
}

impl TailModel {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TailModel::Exponential { amp, rate } => amp * (-rate * x).exp(),
            TailModel::Polynomial { amp, power } => amp * x.powf(-power),
            TailModel::Zero => 0.0,
        }
    }

    fn decays(&self) -> bool {
        match *self {
            TailModel::Exponential { amp, rate } => amp == 0.0 || rate > 0.0,
            TailModel::Polynomial { amp, power } => amp == 0.0 || power > 1.0,
            TailModel::Zero => true,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum TailKind {
    #[default]
    Exponential,
    Polynomial,
}

thread_local! {
    static MEVAL_CTX: meval::Context<'static> = meval::Context::new();
}

/// A compiled real function with its tail behaviour.
#[derive(Clone, Debug)]
pub struct RealFn {
    spec: FnSpec,
    var: &'static str,
    expr: Option<meval::Expr>,
    pub tail: TailModel,
    /// End of the sampled range (samples only).
    pub last: f64,
}

impl RealFn {
    pub fn compile(spec: FnSpec, var: &'static str, tail_kind: TailKind) -> Result<RealFn, SpectralError> {
        let mut f = RealFn { spec: spec.clone(), var, expr: None, tail: TailModel::Zero, last: f64::INFINITY };
        match &spec {
            FnSpec::Expr { expr } => {
                let e: meval::Expr = expr
                    .parse()
                    .map_err(|e| SpectralError::InvalidData(format!("{expr}: {e}")))?;
                // Probe once so unknown names fail early.
                MEVAL_CTX
                    .with(|c| e.eval_with_context(((var, 0.0), c)))
                    .map_err(|e| SpectralError::InvalidData(format!("{expr}: {e}")))?;
                f.expr = Some(e);
            }
            FnSpec::Samples { grid, values } => {
                if grid.len() != values.len() || grid.len() < 4 {
                    return Err(SpectralError::InvalidData("samples need >= 4 matching points".into()));
                }
                if grid.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(SpectralError::InvalidData("sample grid must increase".into()));
                }
                f.last = *grid.last().unwrap();
                f.tail = fit_tail(grid, values, tail_kind);
            }
            FnSpec::Gaussian { width, .. } if !(*width > 0.0) => {
                return Err(SpectralError::InvalidData("gaussian width must be positive".into()));
            }
            _ => {}
        }
        Ok(f)
    }

    pub fn zero() -> RealFn {
        RealFn { spec: FnSpec::Zero, var: "x", expr: None, tail: TailModel::Zero, last: f64::INFINITY }
    }

    pub fn spec(&self) -> &FnSpec {
        &self.spec
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.spec, FnSpec::Zero)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.spec {
            FnSpec::Zero => 0.0,
            FnSpec::Expr { .. } => {
                let e = self.expr.as_ref().unwrap();
                MEVAL_CTX.with(|c| e.eval_with_context(((self.var, x), c))).unwrap_or(f64::NAN)
            }
            FnSpec::Gaussian { amp, center, width } => amp * (-((x - center) / width).powi(2)).exp(),
            FnSpec::Samples { grid, values } => {
                if x > self.last {
                    self.tail.eval(x)
                } else {
                    local_cubic(grid, values, x)
                }
            }
        }
    }

    /// Point beyond which the function is below `eps` (searching up to
    /// `cap`), used to bound tail integrals.
    fn extent(&self, from: f64, eps: f64, cap: f64) -> f64 {
        match &self.spec {
            FnSpec::Zero => from,
            FnSpec::Samples { .. } => match self.tail {
                TailModel::Zero => self.last.max(from),
                TailModel::Exponential { amp, rate } => {
                    let e = (amp.abs() / eps).ln().max(0.0) / rate;
                    e.max(from).min(cap)
                }
                TailModel::Polynomial { amp, power } => {
                    (amp.abs() / eps).powf(1.0 / power).max(from).min(cap)
                }
            },
            _ => {
                let mut x = from.max(1.0);
                while x < cap {
                    let probe = (0..8).map(|j| self.eval(x * (1.0 + j as f64 / 8.0)).abs()).fold(0.0, f64::max);
                    if probe < eps {
                        return x;
                    }
                    x *= 1.5;
                }
                cap
            }
        }
    }
}

fn local_cubic(grid: &[f64], values: &[f64], x: f64) -> f64 {
    let n = grid.len();
    let i = grid.partition_point(|&g| g <= x).clamp(2, n - 2);
    let idx = [i - 2, i - 1, i, i + 1];
    let mut s = 0.0;
    for &a in &idx {
        let mut l = 1.0;
        for &b in &idx {
            if a != b {
                l *= (x - grid[b]) / (grid[a] - grid[b]);
            }
        }
        s += l * values[a];
    }
    s
}

/// Least-squares tail fit over the last tenth of the samples.
fn fit_tail(grid: &[f64], values: &[f64], kind: TailKind) -> TailModel {
    let n = grid.len();
    let start = n - (n / 10).max(4);
    let pts: Vec<(f64, f64)> = (start..n)
        .filter(|&j| values[j] != 0.0 && grid[j] > 0.0)
        .map(|j| (grid[j], values[j]))
        .collect();
    if pts.len() < 3 {
        return TailModel::Zero;
    }
    let sign = pts.last().unwrap().1.signum();
    if pts.iter().any(|p| p.1.signum() != sign) {
        // Oscillating or sign-changing tail: treat the remainder as zero.
        return TailModel::Zero;
    }
    let xs: Vec<f64> = pts
        .iter()
        .map(|p| match kind {
            TailKind::Exponential => p.0,
            TailKind::Polynomial => p.0.ln(),
        })
        .collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.abs().ln()).collect();
    let (slope, icpt) = linear_fit(&xs, &ys);
    match kind {
        TailKind::Exponential => TailModel::Exponential { amp: sign * icpt.exp(), rate: -slope },
        TailKind::Polynomial => TailModel::Polynomial { amp: sign * icpt.exp(), power: -slope },
    }
}

pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// JSON form of [`HalfLineData`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HalfLineSpec {
    pub u0: FnSpec,
    #[serde(default = "zero_spec")]
    pub g0: FnSpec,
    #[serde(default = "zero_spec")]
    pub g1: FnSpec,
    #[serde(default = "zero_spec")]
    pub g2: FnSpec,
    pub x_max: f64,
    pub t_max: f64,
    #[serde(default)]
    pub tail: TailKind,
}

fn zero_spec() -> FnSpec {
    FnSpec::Zero
}

/// Initial datum and boundary traces on truncated domains.
#[derive(Clone, Debug)]
pub struct HalfLineData {
    pub u0: RealFn,
    pub g0: RealFn,
    pub g1: RealFn,
    pub g2: RealFn,
    pub x_max: f64,
    pub t_max: f64,
}

impl HalfLineData {
    pub fn from_spec(spec: &HalfLineSpec) -> Result<HalfLineData, SpectralError> {
        if !(spec.x_max > 0.0 && spec.t_max >= 0.0) {
            return Err(SpectralError::InvalidData("x_max must be positive and t_max non-negative".into()));
        }
        let d = HalfLineData {
            u0: RealFn::compile(spec.u0.clone(), "x", spec.tail)?,
            g0: RealFn::compile(spec.g0.clone(), "t", spec.tail)?,
            g1: RealFn::compile(spec.g1.clone(), "t", spec.tail)?,
            g2: RealFn::compile(spec.g2.clone(), "t", spec.tail)?,
            x_max: spec.x_max,
            t_max: spec.t_max,
        };
        for (name, f) in [("u0", &d.u0), ("g0", &d.g0), ("g1", &d.g1), ("g2", &d.g2)] {
            if !f.tail.decays() {
                return Err(SpectralError::NonDecayingTail(name.into()));
            }
        }
        Ok(d)
    }

    pub fn from_json(text: &str) -> Result<HalfLineData, SpectralError> {
        let spec: HalfLineSpec =
            serde_json::from_str(text).map_err(|e| SpectralError::InvalidData(e.to_string()))?;
        HalfLineData::from_spec(&spec)
    }

    /// Initial data only, zero boundary traces.
    pub fn initial_only(u0: FnSpec, x_max: f64) -> Result<HalfLineData, SpectralError> {
        HalfLineData::from_spec(&HalfLineSpec {
            u0,
            g0: FnSpec::Zero,
            g1: FnSpec::Zero,
            g2: FnSpec::Zero,
            x_max,
            t_max: 0.0,
            tail: TailKind::Exponential,
        })
    }

    /// `|u0(0) - g0(0)|`.
    pub fn corner_mismatch(&self) -> f64 {
        if self.g0.is_zero() && self.g1.is_zero() && self.g2.is_zero() {
            return 0.0;
        }
        (self.u0.eval(0.0) - self.g0.eval(0.0)).abs()
    }

    fn v_matrix(&self, t: f64, k: C64) -> M2 {
        let g0 = self.g0.eval(t);
        let g1 = self.g1.eval(t);
        let g2 = self.g2.eval(t);
        let k2 = k * k;
        let c = -2.0 * g0 * g0 * g0 + g2;
        M2::new(
            -2.0 * I * g0 * g0 * k,
            -4.0 * g0 * k2 + 2.0 * I * g1 * k + c,
            -4.0 * g0 * k2 - 2.0 * I * g1 * k + c,
            2.0 * I * g0 * g0 * k,
        )
    }

    fn has_boundary(&self) -> bool {
        !(self.g0.is_zero() && self.g1.is_zero() && self.g2.is_zero())
    }
}

fn pack(m: &M2, y: &mut [f64]) {
    for (n, z) in m.0.iter().flatten().enumerate() {
        y[2 * n] = z.re;
        y[2 * n + 1] = z.im;
    }
}

fn unpack(y: &[f64]) -> M2 {
    M2::new(c64(y[0], y[1]), c64(y[2], y[3]), c64(y[4], y[5]), c64(y[6], y[7]))
}

fn ode_opts(tol: f64) -> OdeOptions {
    OdeOptions { rtol: tol, atol: tol * 1e-2, ..OdeOptions::default() }
}

/// Tail integral `int_L^inf f(s) e^{c (s-L)} ds`, set to zero when the
/// exponential grows. Growth below round-off over `[L, end]` counts as
/// oscillation, so points on the boundary rays of `D1` are treated alike.
///
/// Oscillatory integrands are summed one period per panel up to `end`; the
/// rest is closed by two terms of integration by parts, or by a local power
/// law when the oscillation is too slow for that.
fn tail_integral(f: &dyn Fn(f64) -> C64, l: f64, end: f64, c: C64, tol: f64) -> Result<C64, QuadError> {
    if c.re * (end - l) > 1e-9 || end <= l {
        return Ok(C64::new(0.0, 0.0));
    }
    let g = |s: f64| f(s) * (c * (s - l)).exp();
    let period = if c.im != 0.0 { 2.0 * PI / c.im.abs() } else { f64::INFINITY };
    let mut b = vec![l];
    if (end - l) / period > 4.0 {
        let np = ((end - l) / period).ceil().min(200_000.0);
        let step = (end - l) / np;
        b.extend((1..=np as usize).map(|j| l + j as f64 * step));
    } else {
        let mut x = l.max(1e-3);
        while x * 2.0 < end {
            x *= 2.0;
            if x > l {
                b.push(x);
            }
        }
        b.push(end);
    }
    let n = (b.len() - 1) as f64;
    let mut sum = C64::new(0.0, 0.0);
    for w in b.windows(2) {
        let scale = f(w[0]).norm() * (w[1] - w[0]);
        sum += integrate(&g, w[0], w[1], (tol * 1e-3 / n).max(1e-15 * scale), tol)?;
    }
    // Remainder beyond `end`.
    let fe = f(end);
    if fe.norm() == 0.0 || c.re < 0.0 && (c.re * (end - l)) < -40.0 {
        return Ok(sum);
    }
    let ph = (c * (end - l)).exp();
    if c.norm() * end > 20.0 {
        let e = 1e-4 * end;
        let df = (f(end + e) - f(end - e)) / (2.0 * e);
        sum += ph * (-fe / c + df / (c * c));
    } else {
        let q = -(f(end).norm() / f(0.5 * end).norm()).ln() / 2f64.ln();
        if q > 1.0 {
            sum += ph * fe * end / (q - 1.0);
        }
    }
    Ok(sum)
}

/// `X(0,k)` for the initial datum.
pub fn integrate_x_system(data: &HalfLineData, k: C64, tol: f64) -> Result<M2, SpectralError> {
    assert!(tol > 0.0);
    let u = &data.u0;
    if u.is_zero() {
        return Ok(M2::IDENTITY);
    }
    let l = data.x_max;
    // First Neumann iterate of the tail beyond x_max.
    let end = u.extent(l, 1e-18, 1e4 * l.max(1.0));
    let f = |s: f64| C64::new(u.eval(s), 0.0);
    let t12 = -tail_integral(&f, l, end, -2.0 * I * k, tol)?;
    let t21 = -tail_integral(&f, l, end, 2.0 * I * k, tol)?;
    let (kr, ki) = (k.re, k.im);
    let ph = C64::from_polar(1.0, -2.0 * kr * l);
    let y0 = M2::new(C64::new(1.0, 0.0), t12 * ph, t21 / ph, C64::new(1.0, 0.0));
    let mut y = [0.0; 8];
    pack(&y0, &mut y);
    let rhs = |x: f64, y: &[f64], dy: &mut [f64]| {
        let m = unpack(y);
        let uu = u.eval(x);
        let e = C64::from_polar(1.0, -2.0 * kr * x);
        let g12 = e * uu;
        let g21 = e.conj() * uu;
        let d = M2::new(
            g12 * m.0[1][0],
            -2.0 * ki * m.0[0][1] + g12 * m.0[1][1],
            2.0 * ki * m.0[1][0] + g21 * m.0[0][0],
            g21 * m.0[0][1],
        );
        pack(&d, dy);
    };
    let out = dopri5(rhs, l, &y, 0.0, &ode_opts(tol))?;
    Ok(unpack(&out))
}

/// `T(0,k)` for the boundary traces.
pub fn integrate_t_system(data: &HalfLineData, k: C64, tol: f64) -> Result<M2, SpectralError> {
    assert!(tol > 0.0);
    if !data.has_boundary() {
        return Ok(M2::IDENTITY);
    }
    let l = data.t_max;
    let cap = 1e4 * l.max(1.0);
    let end = [&data.g0, &data.g1, &data.g2]
        .iter()
        .map(|g| g.extent(l, 1e-18, cap))
        .fold(l, f64::max);
    let omega = 4.0 * k * k * k;
    let w8 = 8.0 * I * k * k * k;
    let mut tail = M2::ZERO;
    for (i, j, c) in [(0usize, 0usize, C64::new(0.0, 0.0)), (1, 1, C64::new(0.0, 0.0)), (0, 1, w8), (1, 0, -w8)] {
        let f = |s: f64| data.v_matrix(s, k).0[i][j];
        tail.0[i][j] = -tail_integral(&f, l, end, c, tol)?;
    }
    let mut z0 = M2::IDENTITY + tail;
    let ph = C64::from_polar(1.0, 2.0 * omega.re * l);
    z0.0[0][1] *= ph;
    z0.0[1][0] /= ph;
    let mut y = [0.0; 8];
    pack(&z0, &mut y);
    let (wr, wi) = (omega.re, omega.im);
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let m = unpack(y);
        let v = data.v_matrix(t, k);
        let e = C64::from_polar(1.0, 2.0 * wr * t);
        let g = M2::new(v.0[0][0], v.0[0][1] * e, v.0[1][0] / e, v.0[1][1]);
        let mut d = g * m;
        d.0[0][1] += 2.0 * wi * m.0[0][1];
        d.0[1][0] -= 2.0 * wi * m.0[1][0];
        pack(&d, dy);
    };
    let out = dopri5(rhs, l, &y, 0.0, &ode_opts(tol))?;
    Ok(unpack(&out))
}

/// Values of the spectral functions at one point.
#[derive(Clone, Copy, Debug)]
pub struct SpectralValues {
    pub k: C64,
    pub x: M2,
    pub t: M2,
}

impl SpectralValues {
    pub fn a(&self) -> C64 {
        self.x.0[1][1]
    }
    pub fn b(&self) -> C64 {
        self.x.0[0][1]
    }
    pub fn big_a(&self) -> C64 {
        self.t.0[1][1]
    }
    pub fn big_b(&self) -> C64 {
        self.t.0[0][1]
    }
    /// `d = a conj(A(conj k)) - b conj(B(conj k))`.
    pub fn d(&self) -> C64 {
        self.x.0[1][1] * self.t.0[0][0] - self.x.0[0][1] * self.t.0[1][0]
    }
    /// `h = -conj(B(conj k)) / (a d)`.
    pub fn h(&self) -> C64 {
        -self.t.0[1][0] / (self.a() * self.d())
    }
    /// `r = conj(b(conj k)) / a + h` (real `k`).
    pub fn r(&self) -> C64 {
        self.x.0[1][0] / self.a() + self.h()
    }
    /// `A b - B a`.
    pub fn global_relation(&self) -> C64 {
        self.big_a() * self.b() - self.big_b() * self.a()
    }
}

/// Spectral functions of a data set, evaluated on demand.
#[derive(Clone, Debug)]
pub struct SpectralFunctions {
    pub data: HalfLineData,
    pub tol: f64,
}

impl SpectralFunctions {
    pub fn new(data: HalfLineData, tol: f64) -> Self {
        SpectralFunctions { data, tol }
    }

    pub fn at(&self, k: C64) -> Result<SpectralValues, SpectralError> {
        Ok(SpectralValues {
            k,
            x: integrate_x_system(&self.data, k, self.tol)?,
            t: integrate_t_system(&self.data, k, self.tol)?,
        })
    }

    pub fn a(&self, k: C64) -> Result<C64, SpectralError> {
        Ok(integrate_x_system(&self.data, k, self.tol)?.0[1][1])
    }
    pub fn b(&self, k: C64) -> Result<C64, SpectralError> {
        Ok(integrate_x_system(&self.data, k, self.tol)?.0[0][1])
    }
    pub fn big_a(&self, k: C64) -> Result<C64, SpectralError> {
        Ok(integrate_t_system(&self.data, k, self.tol)?.0[1][1])
    }
    pub fn big_b(&self, k: C64) -> Result<C64, SpectralError> {
        Ok(integrate_t_system(&self.data, k, self.tol)?.0[0][1])
    }
    pub fn d(&self, k: C64) -> Result<C64, SpectralError> {
        Ok(self.at(k)?.d())
    }
}

/// Whether `k` lies in the closure of `D1 = {Im k < 0, Im k^3 > 0}`.
pub fn in_closed_d1(k: C64, tol: f64) -> bool {
    k.im <= tol && (k * k * k).im >= -tol * (1.0 + k.norm_sqr())
}

/// `max |A(k) b(k) - B(k) a(k)|` over samples in the closure of `D1`.
pub fn global_relation_residual(sf: &SpectralFunctions, k_samples: &[C64]) -> Result<f64, SpectralError> {
    if let Some(&k) = k_samples.iter().find(|k| !in_closed_d1(**k, 1e-12)) {
        return Err(SpectralError::DomainViolation(k));
    }
    let vals: Result<Vec<f64>, SpectralError> =
        k_samples.par_iter().map(|&k| Ok(sf.at(k)?.global_relation().norm())).collect();
    Ok(vals?.into_iter().fold(0.0, f64::max))
}

/// Sampling grid for tabulated reflection data.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KGrid {
    /// `n` Chebyshev points of the second kind on `[-half_width, half_width]`.
    Chebyshev { n: usize, half_width: f64 },
    Points { k: Vec<f64> },
}

impl Default for KGrid {
    fn default() -> Self {
        KGrid::Chebyshev { n: 2048, half_width: 8.0 }
    }
}

impl KGrid {
    pub fn points(&self) -> Vec<f64> {
        match self {
            KGrid::Chebyshev { n, half_width } => {
                let m = (*n).max(2) - 1;
                (0..=m).map(|j| -half_width * (PI * j as f64 / m as f64).cos()).collect()
            }
            KGrid::Points { k } => k.clone(),
        }
    }
}

pub type CFn = Arc<dyn Fn(C64) -> C64 + Send + Sync>;

/// Reflection data `r` and `h` with admissibility metadata.
///
/// `r` is evaluated through its analytic continuation off the real axis
/// where one is available (`strip_radius > 0`).
#[derive(Clone)]
pub struct ReflectionData {
    pub name: String,
    r: CFn,
    h: Option<CFn>,
    /// Half-width of the strip about the real axis where `r` is analytic.
    pub strip_radius: f64,
    /// Largest `|r|` on the sampling grid.
    pub sup_r: f64,
    /// `|r(k)|` is negligible for `|k| > support`.
    pub support: f64,
}

impl std::fmt::Debug for ReflectionData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReflectionData")
            .field("name", &self.name)
            .field("strip_radius", &self.strip_radius)
            .field("sup_r", &self.sup_r)
            .field("support", &self.support)
            .finish()
    }
}

impl ReflectionData {
    /// Wraps an evaluator; `sup_r` is measured on `[-support, support]`.
    pub fn new(name: &str, r: CFn, h: Option<CFn>, strip_radius: f64, support: f64) -> Self {
        let sup_r = (0..=4000)
            .map(|j| r(C64::new(-support + 2.0 * support * j as f64 / 4000.0, 0.0)).norm())
            .fold(0.0, f64::max);
        ReflectionData { name: name.into(), r, h, strip_radius, sup_r, support }
    }

    pub fn zero() -> Self {
        ReflectionData::new("zero", Arc::new(|_| C64::new(0.0, 0.0)), None, f64::INFINITY, 1.0)
    }

    pub fn is_zero(&self) -> bool {
        self.sup_r == 0.0 && self.h.is_none()
    }

    pub fn r(&self, k: C64) -> C64 {
        (self.r)(k)
    }

    pub fn r_real(&self, k: f64) -> C64 {
        (self.r)(C64::new(k, 0.0))
    }

    /// `conj(r(conj k))`, the continuation of `conj r` off the axis.
    pub fn r_star(&self, k: C64) -> C64 {
        (self.r)(k.conj()).conj()
    }

    pub fn h(&self, k: C64) -> C64 {
        self.h.as_ref().map_or(C64::new(0.0, 0.0), |h| h(k))
    }

    pub fn h_star(&self, k: C64) -> C64 {
        self.h(k.conj()).conj()
    }

    pub fn has_h(&self) -> bool {
        self.h.is_some()
    }

    /// `r / (1 - r r*)`.
    pub fn r1(&self, k: C64) -> C64 {
        let r = self.r(k);
        r / (1.0 - r * self.r_star(k))
    }

    /// `r* / (1 - r r*)`.
    pub fn r4(&self, k: C64) -> C64 {
        let rs = self.r_star(k);
        rs / (1.0 - self.r(k) * rs)
    }

    /// `ln(1 - |r(s)|^2)` on the real axis.
    pub fn psi(&self, s: f64) -> f64 {
        (-self.r_real(s).norm_sqr()).ln_1p()
    }

    /// Checks `sup |r| < 1` and `r(k) = conj(r(-k))` on a grid.
    pub fn check_admissible(&self, tol: f64) -> Result<(), SpectralError> {
        if !(self.sup_r < 1.0) {
            return Err(SpectralError::ReflectionTooLarge(self.sup_r));
        }
        let asym = self.symmetry_defect(200);
        if asym > tol {
            return Err(SpectralError::InvalidData(format!("symmetry defect {asym:e}")));
        }
        Ok(())
    }

    /// `max |r(k) - conj(r(-k))|` on a symmetric real grid.
    pub fn symmetry_defect(&self, n: usize) -> f64 {
        (0..=n)
            .map(|j| {
                let k = self.support * j as f64 / n as f64;
                (self.r_real(k) - self.r_real(-k).conj()).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `r(k) = (c0 + i c1 k/w) e^{-(k/w)^2}` with real `c0`, `c1`; entire.
    pub fn gaussian(c0: f64, c1: f64, w: f64) -> Self {
        let r: CFn = Arc::new(move |k: C64| {
            let q = k / w;
            (C64::new(c0, 0.0) + I * c1 * q) * (-q * q).exp()
        });
        let support = w * (40.0f64 + (c0.abs() + c1.abs() + 1.0).ln()).sqrt() * 1.1;
        ReflectionData::new(&format!("gaussian(c0={c0},c1={c1},w={w})"), r, None, f64::INFINITY, support)
    }

    /// `r(k) = gamma (1 - i beta k) e^{-k^2}`, so `r(0) = gamma`; entire.
    pub fn gaussian_even(gamma: f64, beta: f64) -> Self {
        let r: CFn = Arc::new(move |k: C64| gamma * (1.0 - I * beta * k) * (-k * k).exp());
        let support = (40.0f64 + (gamma.abs() * (1.0 + beta.abs()) + 1.0).ln()).sqrt() * 1.1 + 1.0;
        ReflectionData::new(&format!("gaussian_even(gamma={gamma},beta={beta})"), r, None, f64::INFINITY, support)
    }

    /// `r(k) = i gamma k e^{-k^2} / (1 + k^2)`; analytic for `|Im k| < 1`.
    pub fn rational_odd(gamma: f64) -> Self {
        let r: CFn = Arc::new(move |k: C64| I * gamma * k * (-k * k).exp() / (1.0 + k * k));
        ReflectionData::new(&format!("rational_odd(gamma={gamma})"), r, None, 1.0, 7.0)
    }

    /// `r(k) = gamma e^{-k^2} / (1 + i k)`; analytic for `|Im k| < 1`.
    pub fn rational_even(gamma: f64) -> Self {
        let r: CFn = Arc::new(move |k: C64| gamma * (-k * k).exp() / (1.0 + I * k));
        ReflectionData::new(&format!("rational_even(gamma={gamma})"), r, None, 1.0, 7.0)
    }

    /// Tabulated values on a grid; not continued off the axis.
    pub fn tabulated(name: &str, grid: &KGrid, r: Vec<C64>, h: Vec<C64>) -> Self {
        let k = grid.points();
        let support = k.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cheb = matches!(grid, KGrid::Chebyshev { .. });
        let hz = h.iter().all(|v| v.norm() == 0.0);
        let rt = Arc::new(Table { k: k.clone(), v: r, cheb });
        let ht = Arc::new(Table { k, v: h, cheb });
        let rf: CFn = Arc::new(move |z: C64| rt.eval(z.re));
        let hf: Option<CFn> = if hz { None } else { Some(Arc::new(move |z: C64| ht.eval(z.re))) };
        ReflectionData::new(name, rf, hf, 0.0, support)
    }

    /// Writes `k_re, k_im, r_re, r_im, h_re, h_im` at real grid points.
    pub fn write_csv(&self, path: &Path, k: &[f64]) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "k_re,k_im,r_re,r_im,h_re,h_im")?;
        for &kk in k {
            let z = C64::new(kk, 0.0);
            let r = self.r(z);
            let h = self.h(z);
            writeln!(f, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", kk, 0.0, r.re, r.im, h.re, h.im)?;
        }
        f.flush()
    }
}

struct Table {
    k: Vec<f64>,
    v: Vec<C64>,
    cheb: bool,
}

impl Table {
    fn eval(&self, x: f64) -> C64 {
        let n = self.k.len();
        if x < self.k[0] || x > self.k[n - 1] {
            return C64::new(0.0, 0.0);
        }
        if self.cheb {
            // Barycentric formula for Chebyshev points of the second kind.
            let mut num = C64::new(0.0, 0.0);
            let mut den = 0.0;
            for j in 0..n {
                let d = x - self.k[j];
                if d == 0.0 {
                    return self.v[j];
                }
                let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n - 1 {
                    w *= 0.5;
                }
                num += self.v[j] * (w / d);
                den += w / d;
            }
            num / den
        } else {
            let re: Vec<f64> = self.v.iter().map(|z| z.re).collect();
            let im: Vec<f64> = self.v.iter().map(|z| z.im).collect();
            C64::new(local_cubic(&self.k, &re, x), local_cubic(&self.k, &im, x))
        }
    }
}

/// Samples `r` and `h` from the data on a real grid.
pub fn build_reflection(data: &HalfLineData, grid: &KGrid, tol: f64) -> Result<ReflectionData, SpectralError> {
    let sf = SpectralFunctions::new(data.clone(), tol);
    let pts = grid.points();
    let vals: Result<Vec<(C64, C64)>, SpectralError> = pts
        .par_iter()
        .map(|&k| {
            let z = C64::new(k, 0.0);
            let v = sf.at(z)?;
            if v.a().norm() < tol {
                return Err(SpectralError::ZeroOfA(z));
            }
            if v.d().norm() < tol {
                return Err(SpectralError::ZeroOfD(z));
            }
            Ok((v.r(), v.h()))
        })
        .collect();
    let (r, h): (Vec<C64>, Vec<C64>) = vals?.into_iter().unzip();
    let sup = r.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    if !(sup < 1.0) {
        return Err(SpectralError::ReflectionTooLarge(sup));
    }
    let mut out = ReflectionData::tabulated("data", grid, r, h);
    out.sup_r = sup;
    if data.has_boundary() {
        // Off the real line h comes from the spectral functions directly.
        let table = out.h.clone();
        let sf = Arc::new(sf);
        out.h = Some(Arc::new(move |k: C64| {
            if k.im == 0.0 {
                table.as_ref().map_or(C64::new(0.0, 0.0), |h| h(k))
            } else {
                sf.at(k).map(|v| v.h()).unwrap_or(C64::new(f64::NAN, 0.0))
            }
        }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;

    fn exp_data(eps: f64) -> HalfLineData {
        HalfLineData::initial_only(FnSpec::Expr { expr: format!("{eps}*exp(-x)") }, 40.0).unwrap()
    }

    #[test]
    fn zero_potential_gives_identity() {
        let d = HalfLineData::initial_only(FnSpec::Zero, 10.0).unwrap();
        let x = integrate_x_system(&d, c64(0.7, -0.2), 1e-10).unwrap();
        assert_eq!(x, M2::IDENTITY);
    }

    #[test]
    fn b_at_zero_matches_neumann_series() {
        // At k = 0 the first Neumann iterate gives b(0) = -eps int e^{-x} = -eps;
        // the full series sums to -sinh(eps).
        let eps = 1e-3;
        let x = integrate_x_system(&exp_data(eps), C64::new(0.0, 0.0), 1e-12).unwrap();
        let b = x.0[0][1];
        assert!(((b.re + eps) / eps).abs() < 1e-5);
        assert!((b.re + eps.sinh()).abs() < 1e-14);
        assert!(b.im.abs() < 1e-15);
    }

    #[test]
    fn first_iterate_at_nonzero_k() {
        // b(k) ~ -int u e^{-2ikx} dx at first order in eps.
        let eps = 1e-4;
        let k = 0.8;
        let x = integrate_x_system(&exp_data(eps), C64::new(k, 0.0), 1e-12).unwrap();
        let born = -integrate(|s| C64::from_polar(eps * (-s).exp(), -2.0 * k * s), 0.0, 60.0, 1e-18, 1e-13).unwrap();
        assert!((x.0[0][1] - born).norm() < 1e-3 * born.norm());
    }

    #[test]
    fn x_symmetry_and_unit_determinant() {
        let d = HalfLineData::initial_only(FnSpec::Gaussian { amp: 0.3, center: 1.0, width: 1.0 }, 12.0).unwrap();
        for k in [0.3, 1.1, 2.5] {
            let a = integrate_x_system(&d, c64(k, 0.0), 1e-11).unwrap();
            let b = integrate_x_system(&d, c64(-k, 0.0), 1e-11).unwrap();
            assert!((a - b.conj()).max_abs() < 1e-9);
            assert!((a.det() - 1.0).norm() < 1e-9);
        }
    }

    #[test]
    fn boundary_at_zero_is_hyperbolic_rotation() {
        // At k = 0, V = (g2 - 2 g0^3) sigma1, so B(0) = -sinh(int (g2 - 2 g0^3)).
        let spec = HalfLineSpec {
            u0: FnSpec::Zero,
            g0: FnSpec::Expr { expr: "0.2*exp(-t)".into() },
            g1: FnSpec::Zero,
            g2: FnSpec::Expr { expr: "0.1*exp(-2*t)".into() },
            x_max: 1.0,
            t_max: 30.0,
            tail: TailKind::Exponential,
        };
        let d = HalfLineData::from_spec(&spec).unwrap();
        let t = integrate_t_system(&d, C64::new(0.0, 0.0), 1e-12).unwrap();
        let m = 0.05 - 2.0 * 0.008 / 3.0;
        assert!((t.0[0][1].re + f64::sinh(m)).abs() < 1e-11);
    }

    #[test]
    fn pure_initial_data_has_zero_h() {
        let d = HalfLineData::initial_only(FnSpec::Gaussian { amp: 0.2, center: 0.5, width: 1.0 }, 12.0).unwrap();
        let sf = SpectralFunctions::new(d, 1e-10);
        let v = sf.at(c64(0.4, 0.0)).unwrap();
        assert!(v.h().norm() < 1e-14);
        assert!((v.r() - v.x.0[1][0] / v.a()).norm() < 1e-15);
    }

    #[test]
    fn tail_fit_recovers_exponential() {
        let grid: Vec<f64> = (0..200).map(|j| j as f64 * 0.1).collect();
        let values: Vec<f64> = grid.iter().map(|t| 0.3 * (-0.7 * t).exp()).collect();
        match fit_tail(&grid, &values, TailKind::Exponential) {
            TailModel::Exponential { amp, rate } => {
                assert!((amp - 0.3).abs() < 1e-10 && (rate - 0.7).abs() < 1e-10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn presets_are_symmetric() {
        for r in [
            ReflectionData::gaussian(0.0, 1.359, 1.0),
            ReflectionData::gaussian_even(-0.4, 1.0),
            ReflectionData::rational_odd(0.8),
            ReflectionData::rational_even(0.5),
        ] {
            assert!(r.symmetry_defect(100) < 1e-15, "{}", r.name);
            assert!(r.sup_r < 1.0);
            assert!(r.r_real(0.0).im.abs() < 1e-16);
        }
    }

    #[test]
    fn json_roundtrip() {
        let text = r#"{"u0":{"kind":"gaussian","amp":0.1,"center":0.0,"width":1.0},
                       "g0":{"kind":"expr","expr":"0.1*exp(-t^2)"},
                       "x_max":12,"t_max":10}"#;
        let d = HalfLineData::from_json(text).unwrap();
        assert!(d.corner_mismatch() < 1e-15);
        assert!(d.g1.is_zero());
    }
}
