//! Finite-difference solver for `u_t + 6 u^2 u_x - u_xxx = 0` on `[0, X]`.
//!
//! Method of lines in flux form, `u_t = -D0 (2 u^3 - D2 u)`, with centered
//! differences and classical RK4 in time. On a periodic grid the sum of
//! `D0 F` telescopes, so the discrete mass is conserved to round-off.
//!
//! The half-line problem takes `u(0, t) = g0(t)` and `u_x(0, t) = g1(t)`.
//! Dirichlet data alone leave the scheme unstable, since `u_t = u_xxx` on
//! `x > 0` needs two conditions at the left end. The ghost value is
//! `u_{-1} = u_1 - 2h g1 - (h^3/3) u_xxx(0)` with `u_xxx(0)` taken from the
//! equation, `g0' + 6 g0^2 g1` (minus any forcing). The right end is a
//! quadratic sponge over the last 15% of the domain with `u = 0` beyond.
//! The sponge has to be strong (default peak rate 300): waves that reach the
//! wall come back as grid-scale modes, whose numerical group velocity is
//! negative and of size `4/h^2`, and they pollute the boundary traces.
//! Recorded traces `u_x(0, t)` and `u_xx(0, t)` are read off the field with
//! one-sided fourth-order stencils.

use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fd::left_one_sided;
use crate::spectral::{FnSpec, HalfLineSpec, RealFn, SpectralError, TailKind};

/// Stability constant for RK4 applied to the 5-point `u_xxx` stencil:
/// `|lambda| <= 2.6 / h^3` against the imaginary-axis limit `2 sqrt 2`.
pub const CFL_LIMIT: f64 = 1.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("dt = {dt:e} exceeds the limit {limit:e} (c h^3)")]
    CflViolation { dt: f64, limit: f64 },
    #[error("non-finite value at t = {t}")]
    NaNDetected { t: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SourceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// JSON job description for a half-line run.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub u0: FnSpec,
    #[serde(default = "zero_spec")]
    pub g0: FnSpec,
    #[serde(default = "zero_spec")]
    pub g1: FnSpec,
    pub x_max: f64,
    pub t_final: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    /// Time step as a multiple of `h^3`.
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Trace sampling interval; zero records every step.
    #[serde(default = "default_record")]
    pub record_every: f64,
    /// Peak sponge damping rate.
    #[serde(default = "default_sponge")]
    pub sponge: f64,
}

fn zero_spec() -> FnSpec {
    FnSpec::Zero
}
/// Default grid spacing.
pub const DEFAULT_H: f64 = 0.1;

fn default_h() -> f64 {
    DEFAULT_H
}
fn default_cfl() -> f64 {
    0.5
}
fn default_record() -> f64 {
    0.05
}
fn default_sponge() -> f64 {
    300.0
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.into()));
        if !(self.x_max > 0.0 && self.h > 0.0 && self.h < self.x_max / 16.0) {
            return bad("need x_max > 0 and 0 < h < x_max / 16");
        }
        if !(self.t_final >= 0.0) {
            return bad("t_final must be non-negative");
        }
        if !(self.cfl > 0.0 && self.cfl <= CFL_LIMIT) {
            return bad("cfl must lie in (0, 1]");
        }
        if !(self.record_every >= 0.0 && self.sponge >= 0.0) {
            return bad("record_every and sponge must be non-negative");
        }
        if self.sponge * self.dt() > 2.5 {
            return bad("sponge * dt must stay below 2.5 for RK4 stability");
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.cfl * self.h.powi(3)
    }
}

/// Boundary traces sampled in time.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Traces {
    pub t: Vec<f64>,
    pub g0: Vec<f64>,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
}

impl Traces {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), SimError> {
        let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
        w.write_record(["t", "g0", "g1", "g2"]).map_err(csv_io)?;
        for i in 0..self.t.len() {
            w.write_record(&[fmt(self.t[i]), fmt(self.g0[i]), fmt(self.g1[i]), fmt(self.g2[i])])
                .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Largest difference of `g1`, `g2` against a run on another grid,
    /// compared at the common sample times.
    pub fn max_difference(&self, other: &Traces) -> f64 {
        let mut d: f64 = 0.0;
        for (i, t) in self.t.iter().enumerate() {
            if let Some(j) = other.t.iter().position(|s| (s - t).abs() < 1e-9) {
                d = d.max((self.g1[i] - other.g1[j]).abs()).max((self.g2[i] - other.g2[j]).abs());
            }
        }
        d
    }

    /// Quarter-plane data set with these traces and the given initial datum.
    pub fn to_half_line(&self, u0: FnSpec, x_max: f64) -> HalfLineSpec {
        let s = |v: &Vec<f64>| FnSpec::Samples { grid: self.t.clone(), values: v.clone() };
        HalfLineSpec {
            u0,
            g0: s(&self.g0),
            g1: s(&self.g1),
            g2: s(&self.g2),
            x_max,
            t_max: *self.t.last().unwrap_or(&0.0),
            tail: TailKind::Polynomial,
        }
    }
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

#[derive(Clone)]
enum Geometry {
    HalfLine { g0: ScalarFn, g1: ScalarFn, sponge: Vec<f64> },
    Periodic,
}

/// Grid, solution and recorded traces.
#[derive(Clone)]
pub struct SimState {
    pub h: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub t: f64,
    pub traces: Traces,
    pub record: bool,
    geom: Geometry,
    forcing: Option<SourceFn>,
    w1: Vec<f64>,
    w2: Vec<f64>,
    // scratch
    ext: Vec<f64>,
    flux: Vec<f64>,
}

impl std::fmt::Debug for SimState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimState")
            .field("h", &self.h)
            .field("n", &self.u.len())
            .field("t", &self.t)
            .field("periodic", &matches!(self.geom, Geometry::Periodic))
            .finish()
    }
}

/// Quadratic ramp from 0 at `(1 - frac) X` to `strength` at `X`.
pub fn sponge_profile(x: &[f64], x_max: f64, frac: f64, strength: f64) -> Vec<f64> {
    let start = (1.0 - frac) * x_max;
    x.iter()
        .map(|&xi| if xi <= start { 0.0 } else { strength * ((xi - start) / (frac * x_max)).powi(2) })
        .collect()
}

impl SimState {
    /// Half-line grid `x_j = j h`, `j = 0..=N`, with `u(X) = 0`.
    pub fn half_line(u0: &dyn Fn(f64) -> f64, g0: ScalarFn, g1: ScalarFn, x_max: f64, h: f64, sponge: f64) -> Self {
        let n = (x_max / h).round() as usize;
        let h = x_max / n as f64;
        let x: Vec<f64> = (0..=n).map(|j| j as f64 * h).collect();
        let mut u: Vec<f64> = x.iter().map(|&xi| u0(xi)).collect();
        u[0] = g0(0.0);
        u[n] = 0.0;
        let sp = sponge_profile(&x, x_max, 0.15, sponge);
        let mut s = SimState::blank(h, x, u, Geometry::HalfLine { g0, g1, sponge: sp });
        s.push_traces();
        s
    }

    pub fn from_config(cfg: &SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let u0 = RealFn::compile(cfg.u0.clone(), "x", TailKind::Exponential)?;
        let g0 = RealFn::compile(cfg.g0.clone(), "t", TailKind::Exponential)?;
        let g1 = RealFn::compile(cfg.g1.clone(), "t", TailKind::Exponential)?;
        let g0: ScalarFn = Arc::new(move |t| g0.eval(t));
        let g1: ScalarFn = Arc::new(move |t| g1.eval(t));
        Ok(SimState::half_line(&|x| u0.eval(x), g0, g1, cfg.x_max, cfg.h, cfg.sponge))
    }

    /// Periodic grid of `n` points on `[0, length)`.
    pub fn periodic(u0: &dyn Fn(f64) -> f64, n: usize, length: f64) -> Self {
        let h = length / n as f64;
        let x: Vec<f64> = (0..n).map(|j| j as f64 * h).collect();
        let u = x.iter().map(|&xi| u0(xi)).collect();
        let mut s = SimState::blank(h, x, u, Geometry::Periodic);
        s.record = false;
        s
    }

    fn blank(h: f64, x: Vec<f64>, u: Vec<f64>, geom: Geometry) -> Self {
        let n = u.len();
        SimState {
            h,
            x,
            u,
            t: 0.0,
            traces: Traces::default(),
            record: true,
            geom,
            forcing: None,
            w1: left_one_sided(1, 5, h),
            w2: left_one_sided(2, 6, h),
            ext: vec![0.0; n + 4],
            flux: vec![0.0; n + 2],
        }
    }

    /// Adds a source term `f(x, t)` to the right-hand side.
    pub fn with_forcing(mut self, f: SourceFn) -> Self {
        self.forcing = Some(f);
        self
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.geom, Geometry::Periodic)
    }

    /// Largest stable step `c h^3`.
    pub fn dt_limit(&self) -> f64 {
        CFL_LIMIT * self.h.powi(3)
    }

    /// `h sum u_j` (trapezoid on the half line).
    pub fn mass(&self) -> f64 {
        let s: f64 = self.u.iter().sum();
        match self.geom {
            Geometry::Periodic => self.h * s,
            Geometry::HalfLine { .. } => self.h * (s - 0.5 * (self.u[0] + self.u[self.u.len() - 1])),
        }
    }

    fn boundary_value(&self, t: f64) -> f64 {
        match &self.geom {
            Geometry::HalfLine { g0, .. } => g0(t),
            Geometry::Periodic => 0.0,
        }
    }

    /// `du/dt` at time `t` for the field `u`.
    fn rhs(&mut self, t: f64, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        let h = self.h;
        let ext = &mut self.ext;
        // ext[j + 2] = u_j, with two ghosts on each side.
        ext[2..n + 2].copy_from_slice(u);
        match self.geom {
            Geometry::Periodic => {
                ext[0] = u[n - 2];
                ext[1] = u[n - 1];
                ext[n + 2] = u[0];
                ext[n + 3] = u[1];
            }
            Geometry::HalfLine { ref g0, ref g1, .. } => {
                let (a, b) = (g0(t), g1(t));
                let e = 1e-4 * (1.0 + t);
                let mut uxxx = (g0(t + e) - g0((t - e).max(0.0))) / (t + e - (t - e).max(0.0)) + 6.0 * a * a * b;
                if let Some(f) = &self.forcing {
                    uxxx -= f(0.0, t);
                }
                ext[1] = u[1] - 2.0 * h * b - h * h * h / 3.0 * uxxx;
                ext[0] = 0.0;
                ext[n + 2] = 0.0;
                ext[n + 3] = 0.0;
            }
        }
        // flux[j + 1] = F_j for j = -1..=n.
        let ih2 = 1.0 / (h * h);
        let flux = &mut self.flux;
        for j in 0..n + 2 {
            let v = ext[j + 1];
            flux[j] = 2.0 * v * v * v - (ext[j + 2] - 2.0 * v + ext[j]) * ih2;
        }
        let i2h = 0.5 / h;
        for j in 0..n {
            out[j] = -(flux[j + 2] - flux[j]) * i2h;
        }
        if let Geometry::HalfLine { sponge, .. } = &self.geom {
            for j in 0..n {
                out[j] -= sponge[j] * u[j];
            }
        }
        if let Some(f) = &self.forcing {
            for j in 0..n {
                out[j] += f(self.x[j], t);
            }
        }
        if let Geometry::HalfLine { .. } = self.geom {
            out[0] = 0.0;
            out[n - 1] = 0.0;
        }
    }

    fn pin(&self, u: &mut [f64], t: f64) {
        if let Geometry::HalfLine { .. } = self.geom {
            u[0] = self.boundary_value(t);
            let n = u.len();
            u[n - 1] = 0.0;
        }
    }

    /// One RK4 step of size `dt`.
    pub fn step(&mut self, dt: f64) -> Result<(), SimError> {
        let limit = self.dt_limit();
        if !(dt > 0.0 && dt <= limit * (1.0 + 1e-12)) {
            return Err(SimError::CflViolation { dt, limit });
        }
        let n = self.u.len();
        let t = self.t;
        let u = std::mem::take(&mut self.u);
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut k3 = vec![0.0; n];
        let mut k4 = vec![0.0; n];
        let mut tmp = vec![0.0; n];

        self.rhs(t, &u, &mut k1);
        for j in 0..n {
            tmp[j] = u[j] + 0.5 * dt * k1[j];
        }
        self.pin(&mut tmp, t + 0.5 * dt);
        self.rhs(t + 0.5 * dt, &tmp, &mut k2);
        for j in 0..n {
            tmp[j] = u[j] + 0.5 * dt * k2[j];
        }
        self.pin(&mut tmp, t + 0.5 * dt);
        self.rhs(t + 0.5 * dt, &tmp, &mut k3);
        for j in 0..n {
            tmp[j] = u[j] + dt * k3[j];
        }
        self.pin(&mut tmp, t + dt);
        self.rhs(t + dt, &tmp, &mut k4);

        let mut next = u;
        for j in 0..n {
            next[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        self.t = t + dt;
        self.pin(&mut next, self.t);
        self.u = next;
        if self.u.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NaNDetected { t: self.t });
        }
        Ok(())
    }

    /// Steps to `t_end` with steps no larger than `dt`, recording traces
    /// every `record_every` (every step when zero).
    pub fn run(&mut self, t_end: f64, dt: f64, record_every: f64) -> Result<(), SimError> {
        if t_end <= self.t {
            return Ok(());
        }
        let nsteps = ((t_end - self.t) / dt).ceil().max(1.0) as usize;
        let dt = (t_end - self.t) / nsteps as f64;
        let stride = if record_every > 0.0 { (record_every / dt).round().max(1.0) as usize } else { 1 };
        for i in 1..=nsteps {
            self.step(dt)?;
            if i == nsteps {
                self.t = t_end;
            }
            if self.record && (i % stride == 0 || i == nsteps) {
                self.push_traces();
            }
        }
        Ok(())
    }

    fn push_traces(&mut self) {
        if self.is_periodic() {
            return;
        }
        let (g0, g1, g2) = self.current_traces();
        if self.traces.t.last() == Some(&self.t) {
            return;
        }
        self.traces.t.push(self.t);
        self.traces.g0.push(g0);
        self.traces.g1.push(g1);
        self.traces.g2.push(g2);
    }

    /// `(u, u_x, u_xx)` at `x = 0` from the current field.
    pub fn current_traces(&self) -> (f64, f64, f64) {
        let d1: f64 = self.w1.iter().zip(&self.u).map(|(w, u)| w * u).sum();
        let d2: f64 = self.w2.iter().zip(&self.u).map(|(w, u)| w * u).sum();
        (self.u[0], d1, d2)
    }

    pub fn extract_traces(&self) -> Traces {
        self.traces.clone()
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<(), SimError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "x,u")?;
        for (x, u) in self.x.iter().zip(&self.u) {
            writeln!(f, "{},{}", fmt(*x), fmt(*u))?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Runs a configured half-line job to `t_final`.
pub fn simulate(cfg: &SimConfig) -> Result<SimState, SimError> {
    let mut s = SimState::from_config(cfg)?;
    s.run(cfg.t_final, cfg.dt(), cfg.record_every)?;
    Ok(s)
}

/// Manufactured solution `e^{-t} sech(x - 1)` and its derivatives.
pub mod manufactured {
    use super::{sponge_profile, ScalarFn, SimState};
    use std::sync::Arc;

    /// `(u, u_x, u_xx, u_xxx)` at `(x, t)`.
    pub fn exact(x: f64, t: f64) -> [f64; 4] {
        let s = 1.0 / (x - 1.0).cosh();
        let th = (x - 1.0).tanh();
        let e = (-t).exp();
        let u = e * s;
        let ux = -e * s * th;
        let uxx = e * s * (th * th - s * s);
        let uxxx = e * s * th * (5.0 * s * s - th * th);
        [u, ux, uxx, uxxx]
    }

    /// Source making `exact` solve `u_t + 6 u^2 u_x - u_xxx = f`.
    pub fn forcing(x: f64, t: f64) -> f64 {
        let [u, ux, _, uxxx] = exact(x, t);
        -u + 6.0 * u * u * ux - uxxx
    }

    /// Forced half-line run on `[0, 20]` with exact boundary data; the
    /// sponge term is compensated in the source.
    pub fn state(h: f64, sponge: f64) -> SimState {
        let g0: ScalarFn = Arc::new(|t| exact(0.0, t)[0]);
        let g1: ScalarFn = Arc::new(|t| exact(0.0, t)[1]);
        let x_max = 20.0;
        let s = SimState::half_line(&|x| exact(x, 0.0)[0], g0, g1, x_max, h, sponge);
        let sig = move |x: f64| sponge_profile(&[x], x_max, 0.15, sponge)[0];
        s.with_forcing(Arc::new(move |x, t| forcing(x, t) + sig(x) * exact(x, t)[0]))
    }

    /// Max error against `exact` at the current time.
    pub fn max_error(s: &SimState) -> f64 {
        s.x.iter().zip(&s.u).map(|(x, u)| (u - exact(*x, s.t)[0]).abs()).fold(0.0, f64::max)
    }
}
