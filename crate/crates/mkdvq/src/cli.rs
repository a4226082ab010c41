//! Job runner behind the `mkdvq` binary.
//!
//! A job is a JSON file. Every command reads the sections it needs and
//! writes CSV tables, JSON reports and gnuplot scripts into the output
//! directory. File contents depend only on the configuration.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asymptotics::{
    check_selfsimilar_sector, fit_slope, similarity_params, u_selfsimilar, u_similarity_from, write_prediction_csv,
    AsymptoticsError, PredictionRow,
};
use crate::mkdv_sim::{simulate, SimConfig, SimError};
use crate::painleve::{ode_oracle, stokes_from_s, PainleveError, PainleveSolution, RayGrid};
use crate::rh_core::builders::{solve_selfsimilar_u, solve_sigma_u, solve_similarity_u, BuildOptions};
use crate::rh_core::RhError;
use crate::spectral::{
    build_reflection, global_relation_residual, HalfLineData, HalfLineSpec, KGrid, ReflectionData, SpectralError,
    SpectralFunctions,
};
use crate::{cis, C64, I};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Spectral,
    Rhsolve,
    Asymptote,
    Painleve,
    Simulate,
    Verify,
}

#[derive(Debug, Parser)]
#[command(name = "mkdvq", version, about = "Quarter-plane mKdV: spectral data, RH solves, asymptotics")]
pub struct Args {
    #[arg(value_enum)]
    pub command: Command,
    /// Job configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "MKDVQ_THREADS")]
    pub threads: Option<usize>,
    /// Tolerance; overrides the config.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("missing report {0}")]
    MissingReport(PathBuf),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MissingReport(_) => 2,
            _ => 1,
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::InvalidData(_) | SpectralError::NonDecayingTail(_) | SpectralError::DomainViolation(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) | SimError::CflViolation { .. } => CliError::Config(e.to_string()),
            SimError::Io(e) => CliError::Io(e),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<RhError> for CliError {
    fn from(e: RhError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<PainleveError> for CliError {
    fn from(e: PainleveError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<AsymptoticsError> for CliError {
    fn from(e: AsymptoticsError) -> Self {
        match e {
            AsymptoticsError::SectorViolation { .. }
            | AsymptoticsError::SelfSimilarSectorViolation { .. }
            | AsymptoticsError::InvalidPoint => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

/// Synthetic reflection presets, or data-driven reflection.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReflectionSpec {
    Zero,
    /// `(c0 + i c1 k/w) e^{-(k/w)^2}`
    Gaussian { c0: f64, c1: f64, w: f64 },
    /// `gamma (1 - i beta k) e^{-k^2}`
    GaussianEven { gamma: f64, beta: f64 },
    /// `i gamma k e^{-k^2} / (1 + k^2)`
    RationalOdd { gamma: f64 },
    /// `gamma e^{-k^2} (1 - i k) / (1 + k^2)`
    RationalEven { gamma: f64 },
    /// Sampled from the job's `data` on `k_grid`.
    FromData,
}

/// Inline half-line data or a path to a JSON file holding it.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSource {
    Path(PathBuf),
    Inline(HalfLineSpec),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct XtPoint {
    pub x: f64,
    pub t: f64,
}

/// Tensor grid of `x` and `t` values.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct XtGrid {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SectorParams {
    /// Self-similar sector is `0 < x t^{-1/3} < n_max`.
    #[serde(default = "default_n_max")]
    pub n_max: f64,
    /// Smallest `tau` treated as the similarity sector.
    #[serde(default = "default_tau_min")]
    pub tau_min: f64,
}

fn default_n_max() -> f64 {
    4.0
}

fn default_tau_min() -> f64 {
    5.0
}

impl Default for SectorParams {
    fn default() -> Self {
        SectorParams { n_max: default_n_max(), tau_min: default_tau_min() }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum RhMethod {
    /// Pick the contour from the sector of each point.
    #[default]
    Auto,
    Sigma,
    Similarity,
    Selfsimilar,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RhJob {
    #[serde(default)]
    pub method: RhMethod,
    #[serde(default)]
    pub options: Option<BuildOptions>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum PainleveMethod {
    Rh,
    Ode,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PainleveJob {
    /// `s = s_re + i s_im`; Stokes data `(s, 0, -s)`.
    pub s: [f64; 2],
    pub y: Vec<f64>,
    #[serde(default = "default_pmethod")]
    pub method: PainleveMethod,
    #[serde(default = "default_pn")]
    pub n: usize,
    /// Anchor for the ODE method.
    #[serde(default = "default_ymatch")]
    pub y_match: f64,
}

fn default_pmethod() -> PainleveMethod {
    PainleveMethod::Rh
}

fn default_pn() -> usize {
    RayGrid::default().n
}

fn default_ymatch() -> f64 {
    3.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum VerifyJob {
    /// `tau` ladder at fixed `zeta = x/t`.
    Similarity {
        zeta: f64,
        tau: Vec<f64>,
        /// Extra samples across one phase period per `tau` for the error
        /// envelope; 0 disables.
        #[serde(default)]
        window: usize,
    },
    /// `t` ladder at fixed `x t^{-1/3}`.
    Selfsimilar { ratio: f64, t: Vec<f64> },
    /// Simulation, traces, spectral functions, global relation and `r(0)`.
    Pipeline {
        simulation: SimConfig,
        /// Sample points `[re, im]` in the closure of D1.
        #[serde(default)]
        k_samples: Option<Vec<[f64; 2]>>,
    },
}

/// A job file.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    /// Must agree with the command line when present.
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub reflection: Option<ReflectionSpec>,
    #[serde(default)]
    pub data: Option<DataSource>,
    #[serde(default)]
    pub k_grid: Option<KGrid>,
    #[serde(default)]
    pub points: Vec<XtPoint>,
    #[serde(default)]
    pub grid: Option<XtGrid>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub sector: SectorParams,
    #[serde(default)]
    pub rh: RhJob,
    #[serde(default)]
    pub painleve: Option<PainleveJob>,
    #[serde(default)]
    pub simulation: Option<SimConfig>,
    #[serde(default)]
    pub verify: Option<VerifyJob>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Directory of the config file, for relative paths.
    #[serde(skip)]
    pub base: PathBuf,
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl JobConfig {
    pub fn load(path: &Path) -> Result<JobConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let mut cfg: JobConfig = serde_json::from_str(&text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn validate(&self, command: Command) -> Result<(), CliError> {
        if let Some(c) = self.command {
            if c != command {
                return Err(cfg_err(format!("config is for {c:?}, not {command:?}")));
            }
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(cfg_err("tol must be positive"));
            }
        }
        if !(self.sector.n_max > 0.0 && self.sector.tau_min > 0.0) {
            return Err(cfg_err("sector parameters must be positive"));
        }
        if let Some(g) = &self.grid {
            if g.x.is_empty() || g.t.is_empty() {
                return Err(cfg_err("grid must be nonempty"));
            }
        }
        if let Some(KGrid::Points { k }) = &self.k_grid {
            if k.is_empty() {
                return Err(cfg_err("k_grid must be nonempty"));
            }
        }
        if let Some(KGrid::Chebyshev { n, half_width }) = &self.k_grid {
            if *n < 2 || !(*half_width > 0.0) {
                return Err(cfg_err("k_grid needs n >= 2 and a positive half_width"));
            }
        }
        match command {
            Command::Rhsolve | Command::Asymptote => {
                if self.xt_points().is_empty() {
                    return Err(cfg_err("no (x, t) points: give `points` or `grid`"));
                }
                if self.reflection.is_none() {
                    return Err(cfg_err("`reflection` is required"));
                }
            }
            Command::Spectral => {
                if self.data.is_none() {
                    return Err(cfg_err("`data` is required"));
                }
            }
            Command::Painleve => {
                let p = self.painleve.as_ref().ok_or_else(|| cfg_err("`painleve` section is required"))?;
                if p.y.is_empty() {
                    return Err(cfg_err("painleve y grid must be nonempty"));
                }
                if p.n < 2 {
                    return Err(cfg_err("painleve n must be at least 2"));
                }
            }
            Command::Simulate => {
                let s = self.simulation.as_ref().ok_or_else(|| cfg_err("`simulation` section is required"))?;
                s.validate()?;
            }
            Command::Verify => match self.verify.as_ref().ok_or_else(|| cfg_err("`verify` section is required"))? {
                VerifyJob::Similarity { zeta, tau, .. } => {
                    if tau.is_empty() || !(*zeta > 0.0) || tau.iter().any(|v| !(*v > 0.0)) {
                        return Err(cfg_err("similarity verify needs zeta > 0 and a nonempty positive tau ladder"));
                    }
                    if self.reflection.is_none() {
                        return Err(cfg_err("`reflection` is required"));
                    }
                }
                VerifyJob::Selfsimilar { ratio, t } => {
                    if t.is_empty() || !(*ratio > 0.0) || t.iter().any(|v| !(*v > 0.0)) {
                        return Err(cfg_err("selfsimilar verify needs ratio > 0 and a nonempty positive t ladder"));
                    }
                    if self.reflection.is_none() {
                        return Err(cfg_err("`reflection` is required"));
                    }
                }
                VerifyJob::Pipeline { simulation, k_samples } => {
                    simulation.validate()?;
                    if let Some(ks) = k_samples {
                        if ks.is_empty() {
                            return Err(cfg_err("k_samples must be nonempty"));
                        }
                    }
                }
            },
        }
        Ok(())
    }

    /// Explicit points followed by the tensor grid, `t` outermost.
    pub fn xt_points(&self) -> Vec<XtPoint> {
        let mut v = self.points.clone();
        if let Some(g) = &self.grid {
            for &t in &g.t {
                for &x in &g.x {
                    v.push(XtPoint { x, t });
                }
            }
        }
        v
    }

    fn half_line(&self) -> Result<HalfLineData, CliError> {
        match self.data.as_ref().ok_or_else(|| cfg_err("`data` is required"))? {
            DataSource::Inline(spec) => Ok(HalfLineData::from_spec(spec)?),
            DataSource::Path(p) => {
                let p = self.base.join(p);
                let text = std::fs::read_to_string(&p).map_err(|e| cfg_err(format!("{}: {e}", p.display())))?;
                Ok(HalfLineData::from_json(&text)?)
            }
        }
    }

    pub fn reflection_data(&self, tol: f64) -> Result<ReflectionData, CliError> {
        let spec = self.reflection.as_ref().ok_or_else(|| cfg_err("`reflection` is required"))?;
        let r = match *spec {
            ReflectionSpec::Zero => ReflectionData::zero(),
            ReflectionSpec::Gaussian { c0, c1, w } => {
                if !(w > 0.0) {
                    return Err(cfg_err("gaussian width must be positive"));
                }
                ReflectionData::gaussian(c0, c1, w)
            }
            ReflectionSpec::GaussianEven { gamma, beta } => ReflectionData::gaussian_even(gamma, beta),
            ReflectionSpec::RationalOdd { gamma } => ReflectionData::rational_odd(gamma),
            ReflectionSpec::RationalEven { gamma } => ReflectionData::rational_even(gamma),
            ReflectionSpec::FromData => {
                let grid = self.k_grid.clone().unwrap_or_default();
                build_reflection(&self.half_line()?, &grid, tol)?
            }
        };
        r.check_admissible(1e-10).map_err(|e| cfg_err(e.to_string()))?;
        Ok(r)
    }
}

/// Rate experiment report.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RateReport {
    pub kind: String,
    /// Name of the ladder variable stored in `tau`.
    pub scale_name: String,
    pub tau: Vec<f64>,
    pub u_num: Vec<f64>,
    pub u_asym: Vec<f64>,
    pub err: Vec<f64>,
    pub slope: Option<f64>,
    /// Sup of the error over one phase period, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_err: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_slope: Option<f64>,
    pub target: String,
    pub pass: bool,
}

/// Outcome of the simulation-to-spectral pipeline.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PipelineReport {
    pub sim_error: f64,
    pub quad_tol: f64,
    pub budget: f64,
    pub k_samples: Vec<[f64; 2]>,
    pub residuals: Vec<f64>,
    pub global_relation_residual: f64,
    /// Largest residual over samples off the real axis.
    pub interior_residual: f64,
    pub r0_abs: f64,
    pub pass: bool,
}

fn fit_or_none(scales: &[f64], errs: &[f64]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = scales.iter().copied().zip(errs.iter().copied()).collect();
    fit_slope(&pairs).ok()
}

/// Similarity-sector rate at fixed `zeta`: `sqrt(t k0) |u_num - u_asym|`
/// against `tau`. FAIL when the slope exceeds `-0.2`.
pub fn run_verify_similarity(
    refl: &ReflectionData,
    zeta: f64,
    taus: &[f64],
    window: usize,
    opts: &BuildOptions,
) -> Result<RateReport, CliError> {
    let k0 = (zeta / 12.0).sqrt();
    let point = |tau: f64, shift: f64| -> Result<(f64, f64, f64), CliError> {
        let t = tau / (12.0 * k0.powi(3));
        let x = zeta * t * (1.0 + shift);
        let p = similarity_params(refl, x, t)?;
        let un = solve_similarity_u(refl, x, t, opts)?;
        let ua = u_similarity_from(&p);
        Ok((un, ua, (t * p.k0).sqrt() * (un - ua).abs()))
    };
    let rows: Result<Vec<_>, CliError> = taus.par_iter().map(|&tau| point(tau, 0.0)).collect();
    let rows = rows?;
    let err: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let slope = fit_or_none(taus, &err);
    let (envelope_err, envelope_slope) = if window > 0 {
        // The phase grows like 2 tau per unit relative change of x.
        let jobs: Vec<(usize, f64)> = (0..taus.len())
            .flat_map(|i| (1..=window).map(move |j| (i, j as f64 * PI / (window as f64 * taus[i]))))
            .collect();
        let extra: Result<Vec<(usize, f64)>, CliError> =
            jobs.par_iter().map(|&(i, s)| point(taus[i], s).map(|r| (i, r.2))).collect();
        let mut env = err.clone();
        for (i, e) in extra? {
            env[i] = env[i].max(e);
        }
        let s = fit_or_none(taus, &env);
        (Some(env), s)
    } else {
        (None, None)
    };
    let zero = err.iter().all(|e| *e == 0.0);
    Ok(RateReport {
        kind: "similarity".into(),
        scale_name: "tau".into(),
        tau: taus.to_vec(),
        u_num: rows.iter().map(|r| r.0).collect(),
        u_asym: rows.iter().map(|r| r.1).collect(),
        err,
        slope,
        envelope_err,
        envelope_slope,
        target: "slope <= -0.2".into(),
        pass: zero || slope.is_some_and(|s| s <= -0.2),
    })
}

/// Self-similar rate at fixed `x t^{-1/3}`. Passes when the fitted exponent
/// lies within `0.15` of `-2/3`. With `r(0) = 0` the prediction vanishes and
/// the same band is applied to `|u_num|` from above.
pub fn run_verify_selfsimilar(
    refl: &ReflectionData,
    ratio: f64,
    ts: &[f64],
    opts: &BuildOptions,
    pn: usize,
) -> Result<RateReport, CliError> {
    let s = I * refl.r_real(0.0);
    let pw = PainleveSolution::rh(stokes_from_s(s), pn, 1e-12);
    let rows: Result<Vec<(f64, f64)>, CliError> = ts
        .par_iter()
        .map(|&t| {
            let x = ratio * t.cbrt();
            let un = solve_selfsimilar_u(refl, x, t, opts)?;
            let ua = u_selfsimilar(refl, x, t, &pw)?;
            Ok((un, ua))
        })
        .collect();
    let rows = rows?;
    let err: Vec<f64> = rows.iter().map(|r| (r.0 - r.1).abs()).collect();
    let slope = fit_or_none(ts, &err);
    let target = -2.0 / 3.0;
    let zero = err.iter().all(|e| *e == 0.0);
    let pass = if s.norm() == 0.0 {
        zero || slope.is_some_and(|v| v <= target + 0.15)
    } else {
        slope.is_some_and(|v| (v - target).abs() <= 0.15)
    };
    Ok(RateReport {
        kind: "selfsimilar".into(),
        scale_name: "t".into(),
        tau: ts.to_vec(),
        u_num: rows.iter().map(|r| r.0).collect(),
        u_asym: rows.iter().map(|r| r.1).collect(),
        err,
        slope,
        envelope_err: None,
        envelope_slope: None,
        target: "|slope + 2/3| <= 0.15".into(),
        pass,
    })
}

/// Default global-relation samples: the real axis and two rays inside D1.
pub fn default_k_samples() -> Vec<[f64; 2]> {
    let mut v = vec![[0.0, 0.0], [0.5, 0.0], [-0.5, 0.0], [1.0, 0.0]];
    for r in [0.5, 1.0] {
        for a in [-PI / 3.0, -2.0 * PI / 3.0] {
            let k = r * cis(a);
            v.push([k.re, k.im]);
        }
    }
    v
}

/// Runs the simulation at `h` and `h/2`, feeds the finer traces to the
/// spectral functions and checks the global relation and `r(0)` against
/// `10 (simulation error + quadrature tolerance)`.
pub fn run_verify_pipeline(sim: &SimConfig, k_samples: &[[f64; 2]], quad_tol: f64) -> Result<PipelineReport, CliError> {
    sim.validate()?;
    let fine_cfg = SimConfig { h: sim.h / 2.0, ..sim.clone() };
    let (coarse, fine) = rayon::join(|| simulate(sim), || simulate(&fine_cfg));
    let (coarse, fine) = (coarse?.extract_traces(), fine?.extract_traces());
    let sim_error = coarse.max_difference(&fine);
    let spec = fine.to_half_line(sim.u0.clone(), sim.x_max);
    let sf = SpectralFunctions::new(HalfLineData::from_spec(&spec)?, quad_tol);
    let ks: Vec<C64> = k_samples.iter().map(|k| C64::new(k[0], k[1])).collect();
    global_relation_residual(&sf, &ks)?;
    let residuals: Result<Vec<f64>, SpectralError> =
        ks.par_iter().map(|&k| Ok(sf.at(k)?.global_relation().norm())).collect();
    let residuals = residuals?;
    let interior_residual =
        ks.iter().zip(&residuals).filter(|(k, _)| k.im < 0.0).map(|(_, r)| *r).fold(0.0, f64::max);
    let grr = residuals.iter().copied().fold(0.0, f64::max);
    let r0_abs = sf.at(C64::new(0.0, 0.0))?.r().norm();
    let budget = 10.0 * (sim_error + quad_tol);
    Ok(PipelineReport {
        sim_error,
        quad_tol,
        budget,
        k_samples: k_samples.to_vec(),
        residuals,
        global_relation_residual: grr,
        interior_residual,
        r0_abs,
        pass: grr <= budget && r0_abs <= budget,
    })
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Numerical(e.to_string()))?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Writes `<stem>.csv` and `<stem>.gp` next to each rate report. Scripts
/// render to PNG when run through gnuplot; nothing is launched here.
pub fn emit_plots(reports: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for path in reports {
        if !path.is_file() {
            return Err(CliError::MissingReport(path.clone()));
        }
        let text = std::fs::read_to_string(path)?;
        let rep: RateReport = serde_json::from_str(&text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report").to_string();
        let dir = path.parent().unwrap_or(Path::new("."));
        let csv_path = dir.join(format!("{stem}.csv"));
        let mut w = csv::Writer::from_path(&csv_path).map_err(|e| CliError::Io(e.into()))?;
        let env = rep.envelope_err.clone();
        let mut header = vec![rep.scale_name.clone(), "err".into(), "u_num".into(), "u_asym".into()];
        if env.is_some() {
            header.push("envelope_err".into());
        }
        w.write_record(&header).map_err(|e| CliError::Io(e.into()))?;
        for i in 0..rep.tau.len() {
            let mut row = vec![
                format!("{:.17e}", rep.tau[i]),
                format!("{:.17e}", rep.err[i]),
                format!("{:.17e}", rep.u_num[i]),
                format!("{:.17e}", rep.u_asym[i]),
            ];
            if let Some(e) = &env {
                row.push(format!("{:.17e}", e[i]));
            }
            w.write_record(&row).map_err(|e| CliError::Io(e.into()))?;
        }
        w.flush()?;
        let slope = rep.slope.map_or("n/a".to_string(), |s| format!("{s:.4}"));
        let status = if rep.pass { "PASS" } else { "FAIL" };
        let mut gp = format!(
            "set terminal pngcairo size 800,600\n\
             set output '{stem}.png'\n\
             set datafile separator ','\n\
             set logscale xy\n\
             set xlabel '{scale}'\n\
             set ylabel 'error'\n\
             set key top right\n\
             set title '{kind}: fitted slope {slope} ({status}, {target})'\n\
             plot '{stem}.csv' skip 1 using 1:2 with linespoints title 'error'",
            scale = rep.scale_name,
            kind = rep.kind,
            target = rep.target,
        );
        if env.is_some() {
            gp.push_str(&format!(", \\\n     '{stem}.csv' skip 1 using 1:5 with linespoints title 'envelope'"));
        }
        gp.push('\n');
        let gp_path = dir.join(format!("{stem}.gp"));
        std::fs::write(&gp_path, gp)?;
        out.push(csv_path);
        out.push(gp_path);
    }
    Ok(out)
}

fn default_tol(command: Command) -> f64 {
    match command {
        Command::Painleve => 1e-12,
        Command::Spectral => 1e-10,
        _ => 1e-8,
    }
}

/// Which contour a point is solved on under [`RhMethod::Auto`].
fn pick_method(refl: &ReflectionData, p: XtPoint, sector: &SectorParams) -> RhMethod {
    if refl.strip_radius == 0.0 || refl.has_h() || p.x <= 0.0 || p.t <= 0.0 {
        return RhMethod::Sigma;
    }
    if check_selfsimilar_sector(p.x, p.t, sector.n_max).is_ok() {
        return RhMethod::Selfsimilar;
    }
    let k0 = (p.x / p.t / 12.0).sqrt();
    if 12.0 * p.t * k0.powi(3) >= sector.tau_min {
        RhMethod::Similarity
    } else {
        RhMethod::Sigma
    }
}

fn method_tag(m: RhMethod) -> &'static str {
    match m {
        RhMethod::Auto => "auto",
        RhMethod::Sigma => "sigma",
        RhMethod::Similarity => "similarity",
        RhMethod::Selfsimilar => "selfsimilar",
    }
}

/// Runs one job, writing into `out`. Returns the files written.
pub fn run(command: Command, cfg: &JobConfig, out: &Path, tol_override: Option<f64>) -> Result<Vec<PathBuf>, CliError> {
    if let Some(t) = tol_override {
        if !(t > 0.0) {
            return Err(cfg_err("--tol must be positive"));
        }
    }
    cfg.validate(command)?;
    let tol = tol_override.or(cfg.tol).unwrap_or(default_tol(command));
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    match command {
        Command::Spectral => {
            let data = cfg.half_line()?;
            let grid = cfg.k_grid.clone().unwrap_or_default();
            let refl = build_reflection(&data, &grid, tol)?;
            let p = out.join("reflection.csv");
            refl.write_csv(&p, &grid.points())?;
            written.push(p);
            let sf = SpectralFunctions::new(data, tol);
            let ks = default_k_samples();
            let cs: Vec<C64> = ks.iter().map(|k| C64::new(k[0], k[1])).collect();
            let res = global_relation_residual(&sf, &cs)?;
            let r0 = sf.at(C64::new(0.0, 0.0))?.r();
            let p = out.join("spectral.json");
            write_json(
                &p,
                &serde_json::json!({
                    "sup_r": refl.sup_r,
                    "r0": [r0.re, r0.im],
                    "global_relation_samples": ks,
                    "global_relation_residual": res,
                }),
            )?;
            written.push(p);
        }
        Command::Rhsolve => {
            let refl = cfg.reflection_data(1e-10)?;
            let opts = BuildOptions { tol, ..cfg.rh.options.unwrap_or_default() };
            let pts = cfg.xt_points();
            let rows: Result<Vec<(XtPoint, RhMethod, f64)>, CliError> = pts
                .par_iter()
                .map(|&p| {
                    let m = match cfg.rh.method {
                        RhMethod::Auto => pick_method(&refl, p, &cfg.sector),
                        m => m,
                    };
                    let u = match m {
                        RhMethod::Selfsimilar => solve_selfsimilar_u(&refl, p.x, p.t, &opts)?,
                        RhMethod::Similarity => solve_similarity_u(&refl, p.x, p.t, &opts)?,
                        _ => solve_sigma_u(&refl, p.x, p.t, &opts)?,
                    };
                    Ok((p, m, u))
                })
                .collect();
            let rows = rows?;
            let p = out.join("rhsolve.csv");
            let mut w = csv::Writer::from_path(&p).map_err(|e| CliError::Io(e.into()))?;
            w.write_record(["x", "t", "u", "method"]).map_err(|e| CliError::Io(e.into()))?;
            for (pt, m, u) in rows {
                w.write_record([format!("{:.17e}", pt.x), format!("{:.17e}", pt.t), format!("{u:.17e}"), method_tag(m).into()])
                    .map_err(|e| CliError::Io(e.into()))?;
            }
            w.flush()?;
            written.push(p);
        }
        Command::Asymptote => {
            let refl = cfg.reflection_data(1e-10)?;
            let s = I * refl.r_real(0.0);
            let pw = PainleveSolution::rh(stokes_from_s(s), RayGrid::default().n, tol.min(1e-10));
            let mut sim_rows = Vec::new();
            let mut ss_rows = Vec::new();
            for p in cfg.xt_points() {
                if check_selfsimilar_sector(p.x, p.t, cfg.sector.n_max).is_ok() {
                    ss_rows.push(p);
                } else {
                    let sp = similarity_params(&refl, p.x, p.t)?;
                    crate::asymptotics::check_similarity_sector(&sp, cfg.sector.tau_min)?;
                    sim_rows.push(PredictionRow::from(&sp));
                }
            }
            if !sim_rows.is_empty() {
                let p = out.join("similarity.csv");
                write_prediction_csv(&p, &sim_rows)?;
                written.push(p);
            }
            if !ss_rows.is_empty() {
                let vals: Result<Vec<f64>, CliError> =
                    ss_rows.par_iter().map(|p| Ok(u_selfsimilar(&refl, p.x, p.t, &pw)?)).collect();
                let vals = vals?;
                let p = out.join("selfsimilar.csv");
                let mut w = csv::Writer::from_path(&p).map_err(|e| CliError::Io(e.into()))?;
                w.write_record(["x", "t", "y", "u_selfsimilar"]).map_err(|e| CliError::Io(e.into()))?;
                for (pt, u) in ss_rows.iter().zip(vals) {
                    let y = -pt.x / (3.0 * pt.t).cbrt();
                    w.write_record([
                        format!("{:.17e}", pt.x),
                        format!("{:.17e}", pt.t),
                        format!("{y:.17e}"),
                        format!("{u:.17e}"),
                    ])
                    .map_err(|e| CliError::Io(e.into()))?;
                }
                w.flush()?;
                written.push(p);
            }
        }
        Command::Painleve => {
            let job = cfg.painleve.as_ref().expect("validated");
            let stokes = stokes_from_s(C64::new(job.s[0], job.s[1]));
            let sol = match job.method {
                PainleveMethod::Rh => PainleveSolution::rh(stokes, job.n, tol),
                PainleveMethod::Ode => ode_oracle(&stokes, job.y_match, job.n, tol)?,
            };
            let rows = sol.tabulate(&job.y)?;
            let p = out.join("painleve.csv");
            sol.write_csv(&p, &rows)?;
            written.push(p);
        }
        Command::Simulate => {
            let sim = cfg.simulation.as_ref().expect("validated");
            let state = simulate(sim)?;
            let p = out.join("traces.csv");
            state.extract_traces().write_csv(&p)?;
            written.push(p);
            let p = out.join("snapshot.csv");
            state.write_snapshot(&p)?;
            written.push(p);
        }
        Command::Verify => match cfg.verify.as_ref().expect("validated") {
            VerifyJob::Similarity { zeta, tau, window } => {
                let refl = cfg.reflection_data(1e-10)?;
                let opts = BuildOptions { tol, ..cfg.rh.options.unwrap_or_default() };
                let rep = run_verify_similarity(&refl, *zeta, tau, *window, &opts)?;
                written.extend(finish_rate_report(out, "verify_similarity", &rep)?);
            }
            VerifyJob::Selfsimilar { ratio, t } => {
                let refl = cfg.reflection_data(1e-10)?;
                let opts = BuildOptions { tol, ..cfg.rh.options.unwrap_or_default() };
                let rep = run_verify_selfsimilar(&refl, *ratio, t, &opts, RayGrid::default().n)?;
                written.extend(finish_rate_report(out, "verify_selfsimilar", &rep)?);
            }
            VerifyJob::Pipeline { simulation, k_samples } => {
                let ks = k_samples.clone().unwrap_or_else(default_k_samples);
                let rep = run_verify_pipeline(simulation, &ks, tol.min(1e-10))?;
                let p = out.join("verify_pipeline.json");
                write_json(&p, &rep)?;
                written.push(p);
                if !rep.pass {
                    return Err(CliError::Verification(format!(
                        "global relation residual {:.3e}, |r(0)| {:.3e}, budget {:.3e}",
                        rep.global_relation_residual, rep.r0_abs, rep.budget
                    )));
                }
            }
        },
    }
    Ok(written)
}

fn finish_rate_report(out: &Path, stem: &str, rep: &RateReport) -> Result<Vec<PathBuf>, CliError> {
    let p = out.join(format!("{stem}.json"));
    write_json(&p, rep)?;
    let mut files = vec![p.clone()];
    files.extend(emit_plots(&[p])?);
    if !rep.pass {
        return Err(CliError::Verification(format!(
            "{} slope {} violates {}",
            rep.kind,
            rep.slope.map_or("n/a".into(), |s| format!("{s:.4}")),
            rep.target
        )));
    }
    Ok(files)
}

/// Parses arguments, sizes the thread pool and runs the job.
pub fn main_with(args: Args) -> Result<Vec<PathBuf>, CliError> {
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(cfg_err("thread count must be positive"));
        }
        // A second initialisation in the same process is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = JobConfig::load(&args.config)?;
    let out = args.out.clone().or_else(|| cfg.out.as_ref().map(|o| cfg.base.join(o))).unwrap_or_else(|| "out".into());
    run(args.command, &cfg, &out, args.tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> JobConfig {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn empty_grid_is_a_config_error() {
        let cfg = parse(r#"{"reflection":{"kind":"zero"},"grid":{"x":[],"t":[1.0]}}"#);
        let e = cfg.validate(Command::Rhsolve).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<JobConfig>(r#"{"bogus":1}"#).is_err());
    }

    #[test]
    fn command_mismatch_is_rejected() {
        let cfg = parse(r#"{"command":"spectral","data":{"u0":{"kind":"zero"},"x_max":1.0,"t_max":0.0}}"#);
        assert!(cfg.validate(Command::Spectral).is_ok());
        assert_eq!(cfg.validate(Command::Simulate).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn grid_points_are_ordered_t_outermost() {
        let cfg = parse(r#"{"points":[{"x":9.0,"t":9.0}],"grid":{"x":[1.0,2.0],"t":[3.0,4.0]}}"#);
        let p: Vec<(f64, f64)> = cfg.xt_points().iter().map(|p| (p.x, p.t)).collect();
        assert_eq!(p, vec![(9.0, 9.0), (1.0, 3.0), (2.0, 3.0), (1.0, 4.0), (2.0, 4.0)]);
    }

    #[test]
    fn zero_reflection_verifies_trivially() {
        let r = ReflectionData::zero();
        let rep = run_verify_similarity(&r, 12.0, &[50.0, 100.0], 0, &BuildOptions::default()).unwrap();
        assert!(rep.pass && rep.err.iter().all(|e| *e == 0.0));
        let rep = run_verify_selfsimilar(&r, 1.0, &[100.0, 1000.0], &BuildOptions::default(), 16).unwrap();
        assert!(rep.pass && rep.u_num.iter().chain(&rep.u_asym).all(|v| *v == 0.0));
    }

    #[test]
    fn auto_method_follows_the_sectors() {
        let r = ReflectionData::gaussian(0.0, 1.0, 1.0);
        let s = SectorParams::default();
        assert_eq!(pick_method(&r, XtPoint { x: 10.0, t: 1000.0 }, &s), RhMethod::Selfsimilar);
        assert_eq!(pick_method(&r, XtPoint { x: 120.0, t: 10.0 }, &s), RhMethod::Similarity);
        assert_eq!(pick_method(&r, XtPoint { x: 5.0, t: 1.0 }, &s), RhMethod::Sigma);
    }

    #[test]
    fn empty_report_list_writes_nothing() {
        assert!(emit_plots(&[]).unwrap().is_empty());
        assert!(matches!(emit_plots(&[PathBuf::from("/nonexistent/r.json")]), Err(CliError::MissingReport(_))));
    }

    #[test]
    fn default_samples_lie_in_closed_d1() {
        for k in default_k_samples() {
            assert!(crate::spectral::in_closed_d1(C64::new(k[0], k[1]), 1e-12));
        }
    }
}
