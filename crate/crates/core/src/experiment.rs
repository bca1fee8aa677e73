//! Experiment configuration, `δ`-sweeps, rate fits and output files.
//!
//! A config is flat TOML with dotted keys (`grid.n = 256`, `sweep.delta_list
//! = [0.2, 0.1]`, ...). Every sweep entry runs on its own rayon task; records
//! come back in configuration order so outputs are deterministic.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc::Sender;
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data;
use crate::error::{Error, Result};
use crate::field::SpectralField;
use crate::grid::BoxGrid;
use crate::integrator::{drive, Schedule};
use crate::norms::{sobolev_norm, sup_norm, time_lebesgue_norm};
use crate::params::PhysicalParams;
use crate::qg::{init_from_data, invert_pv, QGState, QuasiGeostrophic};
use crate::snapshot;
use crate::solver2d::{cfl_step, max_speed, solve_intermediate, Intermediate, SolverConfig, State2D};
use crate::solver3d::{ForcingContext, Perturbed};
use crate::strichartz::{fit_scaling, probe_grid, strichartz_ratio, DispersionProbe};
use crate::wave::{potential_vorticity, EigenSystem2D, EigenSystem3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Qg2dConvergence,
    FastwaveDecay,
    Dispersion3d,
    StrichartzProbe,
    SingleRun,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Qg2dConvergence => "qg2d_convergence",
            ExperimentKind::FastwaveDecay => "fastwave_decay",
            ExperimentKind::Dispersion3d => "dispersion3d",
            ExperimentKind::StrichartzProbe => "strichartz_probe",
            ExperimentKind::SingleRun => "single_run",
        }
    }
}

/// Shape of the 2D initial data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    /// Seeded bumps with slow and fast content.
    Localized,
    /// The slow projection of the localized data.
    Geostrophic,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    /// Time exponent of every `L^q(0,T; ·)` norm.
    #[serde(default = "default_q")]
    pub q: f64,
    /// Sobolev index `m'` of the slow-part diagnostics.
    #[serde(default = "default_sobolev")]
    pub sobolev_index: f64,
    /// Accepted range of fitted exponents, when the sweep has one.
    #[serde(default)]
    pub exponent_band: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub box_length: f64,
    /// Vertical points of 3D runs (default `n`).
    #[serde(default)]
    pub n3: Option<usize>,
    /// Vertical box length of 3D runs (default `box_length`).
    #[serde(default)]
    pub height: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub gamma: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub delta_list: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub t_final: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Diagnostic sample intervals on `[0, T]`.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default = "default_data_kind")]
    pub kind: DataKind,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    /// Bump centres lie within this distance of the box centre.
    #[serde(default)]
    pub spread: f64,
    /// Amplitude of the 3D perturbation.
    #[serde(default = "default_amplitude")]
    pub perturbation_amplitude: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            kind: default_data_kind(),
            amplitude: default_amplitude(),
            width: default_width(),
            spread: 0.0,
            perturbation_amplitude: default_amplitude(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    #[serde(default = "default_k_list")]
    pub k_list: Vec<i32>,
    /// Points per axis of the probe grids.
    #[serde(default = "default_probe_n")]
    pub n: usize,
    #[serde(default = "default_probe_samples")]
    pub samples: usize,
    /// Space exponent, 2 or infinity.
    #[serde(default = "default_probe_r")]
    pub r: f64,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection {
            k_list: default_k_list(),
            n: default_probe_n(),
            samples: default_probe_samples(),
            r: default_probe_r(),
        }
    }
}

fn default_q() -> f64 {
    4.0
}
fn default_sobolev() -> f64 {
    2.0
}
fn default_dt() -> f64 {
    1e-2
}
fn default_cfl() -> f64 {
    0.5
}
fn default_samples() -> usize {
    40
}
fn default_data_kind() -> DataKind {
    DataKind::Localized
}
fn default_amplitude() -> f64 {
    0.5
}
fn default_width() -> f64 {
    1.5
}
fn default_k_list() -> Vec<i32> {
    (0..=4).collect()
}
fn default_probe_n() -> usize {
    256
}
fn default_probe_samples() -> usize {
    256
}
fn default_probe_r() -> f64 {
    f64::INFINITY
}

/// A whole experiment description.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub experiment: ExperimentSection,
    pub grid: GridSection,
    pub params: ParamsSection,
    pub sweep: SweepSection,
    pub time: TimeSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub probe: ProbeSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let deltas = &self.sweep.delta_list;
        if deltas.is_empty() {
            return bad("sweep.delta_list is empty".into());
        }
        if deltas.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return bad(format!("sweep.delta_list must hold positive reals, got {deltas:?}"));
        }
        if deltas.windows(2).any(|w| w[1] >= w[0]) {
            return bad(format!("sweep.delta_list must be strictly decreasing, got {deltas:?}"));
        }
        if !(self.time.t_final > 0.0) || !(self.time.dt > 0.0) || !(self.time.cfl > 0.0) {
            return bad("time.t_final, time.dt and time.cfl must be positive".into());
        }
        if self.time.samples < 2 {
            return bad("time.samples must be at least 2".into());
        }
        if !(self.params.gamma > 1.0) || !(self.params.nu > 0.0) {
            return bad("params need gamma > 1 and nu > 0".into());
        }
        if !(self.experiment.q >= 1.0) {
            return bad(format!("experiment.q = {} must be at least 1", self.experiment.q));
        }
        if let Some([lo, hi]) = self.experiment.exponent_band {
            if !(lo <= hi) {
                return bad(format!("experiment.exponent_band [{lo}, {hi}] is empty"));
            }
        }
        if !(self.probe.r == 2.0 || self.probe.r == f64::INFINITY) {
            return bad(format!("probe.r = {} must be 2 or inf", self.probe.r));
        }
        if self.data.width <= 0.0 || self.data.spread < 0.0 {
            return bad("data.width must be positive and data.spread nonnegative".into());
        }
        self.grid_2d()?;
        if self.experiment.kind == ExperimentKind::Dispersion3d {
            self.grid_3d()?;
        }
        Ok(())
    }

    pub fn grid_2d(&self) -> Result<BoxGrid> {
        BoxGrid::square(self.grid.n, self.grid.box_length)
    }

    pub fn grid_3d(&self) -> Result<BoxGrid> {
        let n3 = self.grid.n3.unwrap_or(self.grid.n);
        let h = self.grid.height.unwrap_or(self.grid.box_length);
        BoxGrid::new(
            &[self.grid.n, self.grid.n, n3],
            &[self.grid.box_length, self.grid.box_length, h],
        )
    }

    pub fn params_for(&self, delta: f64) -> Result<PhysicalParams> {
        PhysicalParams::new(self.params.gamma, delta, self.params.nu)
    }

    /// Whether a fitted exponent lies in the configured band.
    pub fn in_band(&self, exponent: f64) -> Option<bool> {
        self.experiment
            .exponent_band
            .map(|[lo, hi]| (lo..=hi).contains(&exponent))
    }

    /// Flat `key=value` description written next to the CSV.
    pub fn metadata(&self) -> Vec<(String, String)> {
        let list = |v: &[f64]| v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",");
        let mut out = vec![
            ("experiment.kind", self.experiment.kind.name().to_string()),
            ("experiment.q", self.experiment.q.to_string()),
            ("experiment.sobolev_index", self.experiment.sobolev_index.to_string()),
            (
                "experiment.exponent_band",
                self.experiment
                    .exponent_band
                    .map_or_else(|| "none".to_string(), |b| list(&b)),
            ),
            ("grid.n", self.grid.n.to_string()),
            ("grid.box_length", self.grid.box_length.to_string()),
            ("params.gamma", self.params.gamma.to_string()),
            ("params.nu", self.params.nu.to_string()),
            ("sweep.delta_list", list(&self.sweep.delta_list)),
            ("time.t_final", self.time.t_final.to_string()),
            ("time.dt", self.time.dt.to_string()),
            ("time.cfl", self.time.cfl.to_string()),
            ("time.samples", self.time.samples.to_string()),
            ("data.kind", format!("{:?}", self.data.kind).to_lowercase()),
            ("data.amplitude", self.data.amplitude.to_string()),
            ("data.width", self.data.width.to_string()),
            ("data.spread", self.data.spread.to_string()),
            ("seed", self.seed.to_string()),
        ];
        if self.experiment.kind == ExperimentKind::Dispersion3d {
            out.push(("grid.n3", self.grid.n3.unwrap_or(self.grid.n).to_string()));
            out.push(("grid.height", self.grid.height.unwrap_or(self.grid.box_length).to_string()));
            out.push(("data.perturbation_amplitude", self.data.perturbation_amplitude.to_string()));
        }
        if self.experiment.kind == ExperimentKind::StrichartzProbe {
            let ks = self.probe.k_list.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",");
            out.push(("probe.k_list", ks));
            out.push(("probe.n", self.probe.n.to_string()));
            out.push(("probe.samples", self.probe.samples.to_string()));
            out.push(("probe.r", self.probe.r.to_string()));
        }
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

/// One measured norm of one sweep entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub experiment: String,
    pub delta: f64,
    pub norm_name: String,
    pub value: f64,
    /// Fitted `δ`-exponent of the series this record belongs to.
    pub exponent: Option<f64>,
    pub residual: Option<f64>,
    pub grid_n: usize,
    pub box_l: f64,
    pub seed: u64,
}

impl SweepRecord {
    fn new(config: &ExperimentConfig, delta: f64, norm_name: String, value: f64) -> Self {
        SweepRecord {
            experiment: config.experiment.kind.name().to_string(),
            delta,
            norm_name,
            value,
            exponent: None,
            residual: None,
            grid_n: config.grid.n,
            box_l: config.grid.box_length,
            seed: config.seed,
        }
    }
}

/// Sweep progress, one message per diagnostic sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub delta: f64,
    pub step: usize,
    pub steps: usize,
}

fn report(progress: &Option<Sender<Progress>>, delta: f64, step: usize, steps: usize) {
    if let Some(tx) = progress {
        // a dropped consumer only loses progress lines
        let _ = tx.send(Progress { delta, step, steps });
    }
}

/// Group records by `(experiment, norm_name)`, fit `value ≈ C δ^p` on
/// every series with at least three positive values, and store `p` and the
/// fit residual on each member. Other series get no exponent.
pub fn fit_records(records: &mut [SweepRecord]) {
    let mut series: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        series
            .entry((r.experiment.clone(), r.norm_name.clone()))
            .or_default()
            .push(i);
    }
    for members in series.values() {
        let samples: Vec<(f64, f64)> = members.iter().map(|&i| (records[i].delta, records[i].value)).collect();
        let fit = fit_scaling(&samples).ok();
        for &i in members {
            records[i].exponent = fit.as_ref().map(|f| f.exponent);
            records[i].residual = fit.as_ref().map(|f| f.residual);
        }
    }
}

/// The fitted exponent of one series, if any.
pub fn series_exponent(records: &[SweepRecord], norm_name: &str) -> Option<f64> {
    records
        .iter()
        .find(|r| r.norm_name == norm_name)
        .and_then(|r| r.exponent)
}

/// Values of one series in sweep order.
pub fn series_values(records: &[SweepRecord], norm_name: &str) -> Vec<(f64, f64)> {
    records
        .iter()
        .filter(|r| r.norm_name == norm_name)
        .map(|r| (r.delta, r.value))
        .collect()
}

fn index_label(m: f64) -> String {
    if m.fract() == 0.0 {
        format!("{}", m as i64)
    } else {
        format!("{m}")
    }
}

pub fn slow_error_name(m: f64) -> String {
    format!("sup_H{}(a_S-b_L)", index_label(m))
}

pub fn velocity_error_name(m: f64) -> String {
    format!("sup_H{}(w_S-u_L,w3-u3_L)", index_label(m - 1.0))
}

pub fn fast_norm_name(q: f64) -> String {
    format!("L{}_Linf(W_F)", index_label(q))
}

pub fn pv_error_name(m: f64) -> String {
    format!("sup_H{}(pv_error)", index_label(m - 2.0))
}

pub fn perturbation_norm_name(q: f64) -> String {
    format!("L{}_Linf(theta,v)", index_label(q))
}

/// 2D initial data `(a, w1, w2, w3)` described by the config.
pub fn initial_data_2d(config: &ExperimentConfig, grid: &BoxGrid) -> Result<SpectralField> {
    let d = &config.data;
    let w = data::localized_2d_spread(grid, d.amplitude, d.width, d.spread, config.seed);
    match d.kind {
        DataKind::Localized => Ok(w),
        DataKind::Geostrophic => {
            let (a, wh) = slow_part(&w, config.params.nu);
            SpectralField::stack(&[&a, &wh, &w.select(&[3])])
        }
        DataKind::Zero => Ok(SpectralField::zeros(*grid, 4)),
    }
}

/// `(a^S, w^S_h)`: inverting the PV of `W` gives its slow projection.
pub fn slow_part(w: &SpectralField, nu: f64) -> (SpectralField, SpectralField) {
    invert_pv(&potential_vorticity(w, nu), nu)
}

/// `W^F = (a, w_h) - (a^S, w^S_h)`.
pub fn fast_part(w: &SpectralField, nu: f64) -> SpectralField {
    let (a, wh) = slow_part(w, nu);
    let slow = SpectralField::stack(&[&a, &wh]).expect("same grid");
    w.select(&[0, 1, 2]).sub(&slow)
}

/// The PV error functional at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvError {
    /// `‖ϖ‖_{H^{m-2}}`.
    pub norm: f64,
    /// `‖w^S_h - u^L_h‖_{H^{m-1}} / ‖ϖ‖_{H^{m-2}}`, zero when `ϖ = 0`.
    pub ratio: f64,
}

/// `ϖ = (curl w^S - ν a^S) - (curl u^L - ν b^L)` measured in `H^{m-2}`,
/// with the ratio that the reconstruction bound controls.
pub fn pv_error_diag(two_d: &State2D, qg: &QGState, nu: f64, m: f64) -> Result<PvError> {
    if two_d.grid() != qg.fields.grid() {
        return Err(Error::GridMismatch("2D and QG states live on different grids".into()));
    }
    if (two_d.time - qg.time).abs() > 1e-9 * (1.0 + two_d.time.abs()) {
        return Err(Error::InvalidArgument(format!(
            "2D state at t = {} and QG state at t = {} do not match",
            two_d.time, qg.time
        )));
    }
    let pv = potential_vorticity(&two_d.fields, nu).sub(&qg.q());
    let norm = sobolev_norm(&pv, m - 2.0);
    let (_, ws) = slow_part(&two_d.fields, nu);
    let (_, uh) = qg.diagnostics(nu);
    let num = sobolev_norm(&ws.sub(&uh), m - 1.0);
    let ratio = if norm > 0.0 { num / norm } else { 0.0 };
    Ok(PvError { norm, ratio })
}

/// `sup_η |η| (1+|η|²)^{1/2} / (ν²+|η|²)` over the lattice: the multiplier
/// norm taking `ϖ` in `H^{m-2}` to `w^S - u^L` in `H^{m-1}`.
pub fn reconstruction_bound(grid: &BoxGrid, nu: f64) -> f64 {
    grid.wavevectors()
        .iter()
        .map(|k| {
            let e2 = k.norm_sq();
            e2.sqrt() * (1.0 + e2).sqrt() / (nu * nu + e2)
        })
        .fold(0.0, f64::max)
}

/// Slow-part errors and fast-part size of one 2D state.
struct Sample2D {
    fast_sup: f64,
    slow_error: f64,
    velocity_error: f64,
    pv_error: f64,
}

fn sample_2d(f: &SpectralField, limit: Option<&SpectralField>, nu: f64, m: f64) -> Sample2D {
    let (a_s, w_s) = slow_part(f, nu);
    let slow = SpectralField::stack(&[&a_s, &w_s]).expect("same grid");
    let fast_sup = sup_norm(&f.select(&[0, 1, 2]).sub(&slow), 1);
    let Some(lim) = limit else {
        return Sample2D {
            fast_sup,
            slow_error: 0.0,
            velocity_error: 0.0,
            pv_error: 0.0,
        };
    };
    let q = lim.select(&[0]);
    let (b, uh) = invert_pv(&q, nu);
    let dw = SpectralField::stack(&[&w_s.sub(&uh), &f.select(&[3]).sub(&lim.select(&[1]))]).expect("same grid");
    let pv = potential_vorticity(f, nu).sub(&q);
    Sample2D {
        fast_sup,
        slow_error: sobolev_norm(&a_s.sub(&b), m),
        velocity_error: sobolev_norm(&dw, m - 1.0),
        pv_error: sobolev_norm(&pv, m - 2.0),
    }
}

fn check_cfl(f: &SpectralField, first: usize, dt: f64, dx: f64, t: f64) -> Result<()> {
    let cfl = dt * max_speed(f, first) / dx;
    if cfl > 1.0 {
        return Err(Error::CflViolation { time: t, cfl });
    }
    Ok(())
}

/// Limit solution sampled at every diagnostic time of `schedule`.
fn qg_samples(w0: &SpectralField, nu: f64, schedule: &Schedule) -> Result<Vec<SpectralField>> {
    let init = init_from_data(&w0.select(&[0]), &w0.select(&[1, 2]), &w0.select(&[3]), nu)?;
    let sys = QuasiGeostrophic { nu };
    let dx = w0.grid().min_spacing();
    let mut out = Vec::with_capacity(schedule.steps / schedule.stride + 1);
    drive(&sys, &init.fields, 0.0, schedule, |step, t, f| {
        if step % schedule.stride == 0 {
            check_cfl(&invert_pv(f, nu).1, 0, schedule.dt, dx, t)?;
            out.push(f.clone());
        }
        Ok(())
    })?;
    Ok(out)
}

/// Run every sweep entry, keeping finished entries when one fails.
fn sweep<F>(config: &ExperimentConfig, entry: F) -> Result<Vec<SweepRecord>>
where
    F: Fn(f64) -> Result<Vec<SweepRecord>> + Sync,
{
    let results: Vec<Result<Vec<SweepRecord>>> = config.sweep.delta_list.par_iter().map(|&d| entry(d)).collect();
    let mut records = Vec::new();
    let mut failure = None;
    for r in results {
        match r {
            Ok(mut recs) => records.append(&mut recs),
            Err(e) if failure.is_none() => failure = Some(e),
            Err(e) => warn!("further sweep failure: {e}"),
        }
    }
    fit_records(&mut records);
    match failure {
        None => Ok(records),
        Some(source) => Err(Error::SweepAborted {
            partial: records,
            source: Box::new(source),
        }),
    }
}

fn require(config: &ExperimentConfig, kinds: &[ExperimentKind]) -> Result<()> {
    if kinds.contains(&config.experiment.kind) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "experiment.kind {} does not match this driver",
            config.experiment.kind.name()
        )))
    }
}

fn sweep_2d(config: &ExperimentConfig, with_limit: bool, progress: Option<Sender<Progress>>) -> Result<Vec<SweepRecord>> {
    let grid = config.grid_2d()?;
    let nu = config.params.nu;
    let (q, m) = (config.experiment.q, config.experiment.sobolev_index);
    let w0 = initial_data_2d(config, &grid)?;
    let dt = cfl_step(&w0, 1, config.time.dt, config.time.cfl);
    let schedule = Schedule::sampled(config.time.t_final, dt, config.time.samples)?;
    let limit = if with_limit {
        Some(qg_samples(&w0, nu, &schedule)?)
    } else {
        None
    };
    let eig = Arc::new(EigenSystem2D::new(&grid, nu)?);
    let dx = grid.min_spacing();
    let t_sample = schedule.snapshot_dt();
    let progress = progress.map(std::sync::Mutex::new);
    sweep(config, |delta| {
        let tx = progress.as_ref().map(|m| m.lock().expect("progress sender").clone());
        let sys = Intermediate::with_eigensystem(eig.clone(), config.params_for(delta)?)?;
        let mut samples = Vec::with_capacity(config.time.samples + 1);
        drive(&sys, &w0, 0.0, &schedule, |step, t, f| {
            if step % schedule.stride != 0 {
                return Ok(());
            }
            check_cfl(f, 1, schedule.dt, dx, t)?;
            let lim = limit.as_ref().map(|l| &l[step / schedule.stride]);
            samples.push(sample_2d(f, lim, nu, m));
            report(&tx, delta, step, schedule.steps);
            Ok(())
        })?;
        let fast: Vec<f64> = samples.iter().map(|s| s.fast_sup).collect();
        let fast_norm = time_lebesgue_norm(&fast, t_sample, q)?;
        let mut out = vec![SweepRecord::new(config, delta, fast_norm_name(q), fast_norm)];
        if with_limit {
            let sup = |g: fn(&Sample2D) -> f64| samples.iter().map(g).fold(0.0, f64::max);
            let pv_sup = sup(|s| s.pv_error);
            out.push(SweepRecord::new(config, delta, slow_error_name(m), sup(|s| s.slow_error)));
            out.push(SweepRecord::new(config, delta, velocity_error_name(m), sup(|s| s.velocity_error)));
            out.push(SweepRecord::new(config, delta, pv_error_name(m), pv_sup));
            let forcing = time_lebesgue_norm(&fast, t_sample, 1.0)?;
            let base = samples[0].pv_error + forcing;
            let c = if pv_sup > base && base > 0.0 {
                (pv_sup / base).ln() / config.time.t_final
            } else {
                0.0
            };
            info!(
                "delta {delta}: sup pv error {pv_sup:.3e} <= ({:.3e} + {forcing:.3e}) exp({c:.3} T)",
                samples[0].pv_error
            );
        }
        Ok(out)
    })
}

/// Intermediate and limit systems from the same data for every `δ`:
/// sup-in-time `H^{m'}` error of `a^S - b^L`, `H^{m'-1}` error of
/// `(w^S - u^L, w3 - u3^L)`, `L^q(0,T; L^∞)` of `W^F` and the PV error, all
/// from the same samples, with fitted `δ`-exponents.
pub fn run_qg_convergence(config: &ExperimentConfig, progress: Option<Sender<Progress>>) -> Result<Vec<SweepRecord>> {
    require(config, &[ExperimentKind::Qg2dConvergence])?;
    sweep_2d(config, true, progress)
}

/// Only the `L^q(0,T; L^∞)` norm of `W^F`, without the limit system.
pub fn run_fastwave_decay(config: &ExperimentConfig, progress: Option<Sender<Progress>>) -> Result<Vec<SweepRecord>> {
    require(config, &[ExperimentKind::FastwaveDecay])?;
    sweep_2d(config, false, progress)
}

/// 2D intermediate run on the horizontal lattice, then the forced 3D
/// perturbation; records `L^q(0,T; L^∞)` of `(ϑ, v)` per `δ`.
pub fn run_dispersion3d(config: &ExperimentConfig, progress: Option<Sender<Progress>>) -> Result<Vec<SweepRecord>> {
    require(config, &[ExperimentKind::Dispersion3d])?;
    let grid3 = config.grid_3d()?;
    let gh = grid3.horizontal()?;
    let nu = config.params.nu;
    let q = config.experiment.q;
    let w0 = State2D::new(initial_data_2d(config, &gh)?, 0.0)?;
    let v0 = data::localized_3d(
        &grid3,
        config.data.perturbation_amplitude,
        config.data.width,
        config.seed.wrapping_add(1),
    );
    let schedule = Schedule::sampled(config.time.t_final, config.time.dt, config.time.samples)?;
    let eig2 = Arc::new(EigenSystem2D::new(&gh, nu)?);
    let eig3 = Arc::new(EigenSystem3D::new(&grid3, nu)?);
    let dx = grid3.min_spacing();
    let progress = progress.map(std::sync::Mutex::new);
    sweep(config, |delta| {
        let tx = progress.as_ref().map(|m| m.lock().expect("progress sender").clone());
        let params = config.params_for(delta)?;
        let sys2 = Intermediate::with_eigensystem(eig2.clone(), params)?;
        let config2 = SolverConfig {
            dt: schedule.dt / 4.0,
            t_final: config.time.t_final,
            snapshot_stride: 1,
            cfl: f64::INFINITY,
            ..SolverConfig::default()
        };
        let run2 = solve_intermediate(&sys2, &w0, &config2)?;
        let ctx = Arc::new(ForcingContext::from_run(&sys2, &run2, &grid3)?);
        drop(run2);
        let sys3 = Perturbed::with_eigensystem(eig3.clone(), params, ctx.clone())?;
        let mut values = Vec::with_capacity(config.time.samples + 1);
        drive(&sys3, &v0, 0.0, &schedule, |step, t, f| {
            if step % schedule.stride != 0 {
                return Ok(());
            }
            let bg = ctx.at(t)?;
            let speed = max_speed(f, 1) + max_speed(&bg, 1);
            if schedule.dt * speed / dx > 1.0 {
                return Err(Error::CflViolation {
                    time: t,
                    cfl: schedule.dt * speed / dx,
                });
            }
            values.push(sup_norm(f, 1));
            report(&tx, delta, step, schedule.steps);
            Ok(())
        })?;
        let norm = time_lebesgue_norm(&values, schedule.snapshot_dt(), q)?;
        Ok(vec![SweepRecord::new(config, delta, perturbation_norm_name(q), norm)])
    })
}

/// Strichartz ratios at `(experiment.q, probe.r)` for every `k` in
/// `probe.k_list` and every `δ`.
pub fn run_strichartz_probe(config: &ExperimentConfig, progress: Option<Sender<Progress>>) -> Result<Vec<SweepRecord>> {
    require(config, &[ExperimentKind::StrichartzProbe])?;
    let (q, r) = (config.experiment.q, config.probe.r);
    let ks = config.probe.k_list.clone();
    let progress = progress.map(std::sync::Mutex::new);
    sweep(config, |delta| {
        let tx = progress.as_ref().map(|m| m.lock().expect("progress sender").clone());
        let params = config.params_for(delta)?;
        let mut out = Vec::with_capacity(ks.len());
        for (i, &k) in ks.iter().enumerate() {
            let grid = probe_grid(k, config.probe.n)?;
            let probe = DispersionProbe::new(k, params, &grid, None)?;
            let rec = strichartz_ratio(&probe, q, r, config.probe.samples)?;
            let name = format!("ratio_k{k}_q{}_r{}", index_label(q), if r.is_infinite() { "inf".into() } else { index_label(r) });
            let mut record = SweepRecord::new(config, delta, name, rec.ratio);
            record.grid_n = config.probe.n;
            record.box_l = grid.length(0);
            out.push(record);
            report(&tx, delta, i + 1, ks.len());
        }
        Ok(out)
    })
}

/// One intermediate run at the first `δ` of the sweep. Records the
/// sup-in-time `H^{m'}` norm of `W` and `L^q(0,T; L^∞)` of `W^F`; the
/// final state is saved as `single_run_final.snap` in the output directory.
pub fn run_single(config: &ExperimentConfig, progress: Option<Sender<Progress>>) -> Result<Vec<SweepRecord>> {
    require(config, &[ExperimentKind::SingleRun])?;
    let grid = config.grid_2d()?;
    let nu = config.params.nu;
    let delta = config.sweep.delta_list[0];
    let (q, m) = (config.experiment.q, config.experiment.sobolev_index);
    let w0 = initial_data_2d(config, &grid)?;
    let dt = cfl_step(&w0, 1, config.time.dt, config.time.cfl);
    let schedule = Schedule::sampled(config.time.t_final, dt, config.time.samples)?;
    let sys = Intermediate::new(&grid, config.params_for(delta)?)?;
    let dx = grid.min_spacing();
    let mut fast = Vec::new();
    let mut sup: f64 = 0.0;
    let last = drive(&sys, &w0, 0.0, &schedule, |step, t, f| {
        if step % schedule.stride == 0 {
            check_cfl(f, 1, schedule.dt, dx, t)?;
            fast.push(sup_norm(&fast_part(f, nu), 1));
            sup = sup.max(sobolev_norm(f, m));
            report(&progress, delta, step, schedule.steps);
        }
        Ok(())
    })?;
    fs::create_dir_all(&config.output.dir)?;
    snapshot::save(&config.output.dir.join("single_run_final.snap"), &last)?;
    Ok(vec![
        SweepRecord::new(config, delta, format!("sup_H{}(W)", index_label(m)), sup),
        SweepRecord::new(config, delta, fast_norm_name(q), time_lebesgue_norm(&fast, schedule.snapshot_dt(), q)?),
    ])
}

/// Dispatch on `experiment.kind`.
pub fn run_experiment(config: &ExperimentConfig, progress: Option<Sender<Progress>>) -> Result<Vec<SweepRecord>> {
    match config.experiment.kind {
        ExperimentKind::Qg2dConvergence => run_qg_convergence(config, progress),
        ExperimentKind::FastwaveDecay => run_fastwave_decay(config, progress),
        ExperimentKind::Dispersion3d => run_dispersion3d(config, progress),
        ExperimentKind::StrichartzProbe => run_strichartz_probe(config, progress),
        ExperimentKind::SingleRun => run_single(config, progress),
    }
}

/// Run and write outputs; a failed sweep still writes its finished entries
/// before the error is returned.
pub fn execute(config: &ExperimentConfig, progress: Option<Sender<Progress>>) -> Result<(Vec<SweepRecord>, Vec<PathBuf>)> {
    match run_experiment(config, progress) {
        Ok(records) => {
            let files = emit_outputs(&records, config)?;
            Ok((records, files))
        }
        Err(Error::SweepAborted { partial, source }) => {
            emit_outputs(&partial, config)?;
            Err(Error::SweepAborted { partial, source })
        }
        Err(e) => Err(e),
    }
}

pub const CSV_HEADER: [&str; 9] = [
    "experiment",
    "delta",
    "norm_name",
    "value",
    "exponent",
    "residual",
    "grid_n",
    "box_l",
    "seed",
];

fn slug(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

/// Records in output order: by experiment and norm, then `δ` descending.
pub fn sorted_records(records: &[SweepRecord]) -> Vec<SweepRecord> {
    let mut out = records.to_vec();
    out.sort_by(|a, b| {
        (&a.experiment, &a.norm_name)
            .cmp(&(&b.experiment, &b.norm_name))
            .then(b.delta.total_cmp(&a.delta))
    });
    out
}

pub fn write_csv<W: Write>(out: W, records: &[SweepRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in sorted_records(records) {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<SweepRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|rec| rec.map_err(Error::from)).collect()
}

/// Write `<kind>.csv`, `<kind>.meta` and one two-column `.dat` file per
/// series into `output.dir`. Returns the written paths.
pub fn emit_outputs(records: &[SweepRecord], config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let dir = &config.output.dir;
    fs::create_dir_all(dir)?;
    let kind = config.experiment.kind.name();
    let csv_path = dir.join(format!("{kind}.csv"));
    write_csv(fs::File::create(&csv_path)?, records)?;
    let meta_path = dir.join(format!("{kind}.meta"));
    snapshot::write_metadata(&meta_path, &config.metadata())?;
    let mut files = vec![csv_path, meta_path];

    let sorted = sorted_records(records);
    let mut series: BTreeMap<(String, String), Vec<&SweepRecord>> = BTreeMap::new();
    for r in &sorted {
        series.entry((r.experiment.clone(), r.norm_name.clone())).or_default().push(r);
    }
    for ((exp, norm), rows) in series {
        let path = dir.join(format!("{}_{}.dat", slug(&exp), slug(&norm)));
        let mut f = std::io::BufWriter::new(fs::File::create(&path)?);
        writeln!(f, "# {exp} {norm}")?;
        if let (Some(p), Some(res)) = (rows[0].exponent, rows[0].residual) {
            writeln!(f, "# exponent {p} residual {res}")?;
        }
        writeln!(f, "# delta value")?;
        for r in rows {
            writeln!(f, "{} {}", r.delta, r.value)?;
        }
        f.flush()?;
        files.push(path);
    }
    Ok(files)
}
