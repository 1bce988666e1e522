//! Drift and diffusion of a scalar coarse variable, and the effective
//! potential `G = beta*Phi` reconstructed from them.
//!
//! Both estimators reduce to conditional moments of forward increments:
//! `mu = <dX>/lag` and `D = Var(dX)/(2 lag)`. The optional linear-fit mode
//! regresses the moments on several lags and uses the slopes instead.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_sim::{FieldState, Integrator, ModelParams, NoiseSpec};
use crate::observables::{wrap_angle, Observer};
use crate::rng::{stream, SimRng};

/// Lags used by [`LagMode::LinearFit`].
pub const FIT_LAGS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagMode {
    /// Moments at the single lag `dt_est`.
    #[default]
    Single,
    /// Slopes of the moments over [`FIT_LAGS`].
    LinearFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationWindow {
    pub burst_duration: f64,
    pub dt_est: f64,
    /// Healing time discarded before increments are measured.
    pub discard: f64,
    pub lag_mode: LagMode,
}

impl Default for EstimationWindow {
    fn default() -> Self {
        Self {
            burst_duration: 14.0,
            dt_est: 2.0,
            discard: 2.0,
            lag_mode: LagMode::Single,
        }
    }
}

impl EstimationWindow {
    pub fn validate(&self) -> Result<()> {
        if !(self.discard >= 0.0 && self.discard < self.burst_duration) {
            return Err(Error::param(
                "discard",
                format!("need 0 <= discard < burst_duration, got {}", self.discard),
            ));
        }
        let room = self.burst_duration - self.discard;
        if !(self.dt_est > 0.0 && self.dt_est <= room + 1e-12) {
            return Err(Error::param(
                "dt_est",
                format!("need 0 < dt_est <= {room}, got {}", self.dt_est),
            ));
        }
        if self.lag_mode == LagMode::LinearFit && FIT_LAGS[3] > room + 1e-12 {
            return Err(Error::param(
                "lag_mode",
                format!("linear fit needs {} time units after discard", FIT_LAGS[3]),
            ));
        }
        Ok(())
    }

    pub fn lags(&self) -> Vec<f64> {
        match self.lag_mode {
            LagMode::Single => vec![self.dt_est],
            LagMode::LinearFit => FIT_LAGS.to_vec(),
        }
    }

    /// Weights turning per-lag increments into a drift estimate. A single
    /// lag divides by the lag; the fit mode uses ordinary least-squares slope
    /// weights (with intercept).
    fn slope_weights(&self) -> Vec<f64> {
        let lags = self.lags();
        if lags.len() == 1 {
            return vec![1.0 / lags[0]];
        }
        let mean = lags.iter().sum::<f64>() / lags.len() as f64;
        let sxx: f64 = lags.iter().map(|l| (l - mean).powi(2)).sum();
        lags.iter().map(|l| (l - mean) / sxx).collect()
    }

    /// Time after the window start up to which a trajectory must be tracked.
    pub fn max_lag(&self) -> f64 {
        self.lags().into_iter().fold(0.0, f64::max)
    }
}

/// How increments of the coarse variable are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coordinate {
    /// Angles: increments are wrapped into `(-pi, pi]`.
    #[default]
    Circular,
    Linear,
}

impl Coordinate {
    pub fn diff(self, to: f64, from: f64) -> f64 {
        match self {
            Coordinate::Circular => wrap_angle(to - from),
            Coordinate::Linear => to - from,
        }
    }

    pub fn distance(self, a: f64, b: f64) -> f64 {
        self.diff(a, b).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub mu: f64,
    pub mu_se: f64,
    pub d: f64,
    pub d_se: f64,
    pub n: usize,
    /// Set when the raw diffusion estimate was negative and clipped to zero.
    pub d_clipped: bool,
}

/// Conditional moments from per-sample increment vectors (one entry per lag).
///
/// With slope weights `w_L`, the drift is the ensemble mean of
/// `sum_L w_L dX(L)` and the diffusion is half the same functional applied to
/// the per-lag sample variances. Standard errors come from the spread of the
/// per-sample contributions.
pub fn increment_moments(
    samples: &[Vec<f64>],
    window: &EstimationWindow,
) -> Result<MomentEstimate> {
    let weights = window.slope_weights();
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} increment samples")));
    }
    let nl = weights.len();
    if let Some(bad) = samples.iter().find(|s| s.len() != nl) {
        return Err(Error::DimensionMismatch {
            expected: nl,
            got: bad.len(),
        });
    }
    let nf = n as f64;
    let lag_means: Vec<f64> = (0..nl)
        .map(|l| samples.iter().map(|s| s[l]).sum::<f64>() / nf)
        .collect();

    let drift_terms: Vec<f64> = samples
        .iter()
        .map(|s| weights.iter().zip(s).map(|(w, x)| w * x).sum())
        .collect();
    let bessel = nf / (nf - 1.0);
    let diff_terms: Vec<f64> = samples
        .iter()
        .map(|s| {
            let q: f64 = (0..nl)
                .map(|l| weights[l] * (s[l] - lag_means[l]).powi(2))
                .sum();
            0.5 * bessel * q
        })
        .collect();

    let (mu, mu_sd) = mean_sd(&drift_terms);
    let (d_raw, d_sd) = mean_sd(&diff_terms);
    let d_clipped = d_raw < 0.0;
    Ok(MomentEstimate {
        mu,
        mu_se: mu_sd / nf.sqrt(),
        d: d_raw.max(0.0),
        d_se: d_sd / nf.sqrt(),
        n,
        d_clipped,
    })
}

/// Two-pass mean and sample standard deviation.
pub(crate) fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationMethod {
    Database,
    Burst,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftDiffusionPoint {
    /// Nominal grid value.
    pub v: f64,
    /// Mean value of the coarse variable at the start of the measured
    /// increments (differs from `v` within the bin or after healing).
    pub v_start: f64,
    pub estimate: MomentEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftDiffusionCurve {
    /// Estimated points, sorted by `v`.
    pub points: Vec<DriftDiffusionPoint>,
    /// Grid values that could not be estimated (empty or thin bins).
    pub missing: Vec<f64>,
    pub method: EstimationMethod,
}

impl DriftDiffusionCurve {
    pub fn v_grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.v).collect()
    }

    pub fn mu(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.estimate.mu).collect()
    }

    pub fn d(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.estimate.d).collect()
    }

    /// Linear interpolation of `D` at `v` (clamped to the grid ends).
    pub fn d_at(&self, v: f64) -> Option<f64> {
        interpolate(&self.v_grid(), &self.d(), v)
    }

    pub fn point_near(&self, v: f64) -> Option<&DriftDiffusionPoint> {
        self.points
            .iter()
            .min_by(|a, b| (a.v - v).abs().total_cmp(&(b.v - v).abs()))
    }
}

pub(crate) fn interpolate(x: &[f64], y: &[f64], at: f64) -> Option<f64> {
    if x.is_empty() {
        return None;
    }
    if at <= x[0] {
        return Some(y[0]);
    }
    if at >= x[x.len() - 1] {
        return Some(y[y.len() - 1]);
    }
    let k = x.partition_point(|&v| v <= at);
    let (x0, x1, y0, y1) = (x[k - 1], x[k], y[k - 1], y[k]);
    Some(y0 + (y1 - y0) * (at - x0) / (x1 - x0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatabaseConfig {
    pub window: EstimationWindow,
    /// Half-width of the occurrence bin around each grid value.
    pub h_bin: f64,
    /// Minimum number of occurrences for a grid value to be estimated.
    pub n_min: usize,
    /// Minimum time between accepted occurrences in the same bin; `None`
    /// uses the burst duration.
    pub min_separation: Option<f64>,
    pub coordinate: Coordinate,
}

impl Default for DatabaseConfig {
    fn default() -> Self {
        Self {
            window: EstimationWindow::default(),
            h_bin: 0.01,
            n_min: 20,
            min_separation: None,
            coordinate: Coordinate::Circular,
        }
    }
}

/// Estimates drift and diffusion from a uniformly sampled series by
/// collecting, for each grid value, the forward increments that follow its
/// occurrences.
pub fn estimate_database(
    series: &[f64],
    sample_dt: f64,
    v_grid: &[f64],
    cfg: &DatabaseConfig,
) -> Result<DriftDiffusionCurve> {
    cfg.window.validate()?;
    if !(sample_dt > 0.0) {
        return Err(Error::param("sample_dt", "must be positive"));
    }
    if !(cfg.h_bin > 0.0) {
        return Err(Error::param("h_bin", "must be positive"));
    }
    let lag_steps: Vec<usize> = cfg
        .window
        .lags()
        .iter()
        .map(|&l| crate::field_sim::steps_for("dt_est", l, sample_dt))
        .collect::<Result<_>>()?;
    if lag_steps.contains(&0) {
        return Err(Error::param(
            "dt_est",
            "lag shorter than the sampling interval",
        ));
    }
    let max_lag = *lag_steps.iter().max().unwrap();
    let sep = cfg.min_separation.unwrap_or(cfg.window.burst_duration);
    let sep_steps = ((sep / sample_dt).round() as usize).max(1);

    let mut order: Vec<usize> = (0..v_grid.len()).collect();
    order.sort_by(|&a, &b| v_grid[a].total_cmp(&v_grid[b]));

    let mut points = Vec::new();
    let mut missing = Vec::new();
    for &g in &order {
        let v0 = v_grid[g];
        let mut samples = Vec::new();
        let mut starts = Vec::new();
        let mut next_allowed = 0usize;
        let mut t = 0usize;
        while t + max_lag < series.len() {
            if t >= next_allowed && cfg.coordinate.distance(series[t], v0) <= cfg.h_bin {
                samples.push(
                    lag_steps
                        .iter()
                        .map(|&l| cfg.coordinate.diff(series[t + l], series[t]))
                        .collect::<Vec<f64>>(),
                );
                starts.push(cfg.coordinate.diff(series[t], v0));
                next_allowed = t + sep_steps;
            }
            t += 1;
        }
        if samples.len() < cfg.n_min.max(2) {
            missing.push(v0);
            continue;
        }
        let estimate = increment_moments(&samples, &cfg.window)?;
        let v_start = v0 + starts.iter().sum::<f64>() / starts.len() as f64;
        points.push(DriftDiffusionPoint {
            v: v0,
            v_start,
            estimate,
        });
    }
    Ok(DriftDiffusionCurve {
        points,
        missing,
        method: EstimationMethod::Database,
    })
}

/// Maps full states to a scalar coarse coordinate.
pub trait Restrictor: Sync {
    fn restrict(&self, state: &FieldState) -> Result<f64>;
    fn coordinate(&self) -> Coordinate;
}

impl Restrictor for Observer {
    fn restrict(&self, state: &FieldState) -> Result<f64> {
        Ok(self.coarse_v(state)?.value())
    }

    fn coordinate(&self) -> Coordinate {
        Coordinate::Circular
    }
}

/// Builds full states consistent with a prescribed coarse value.
pub trait Lifter: Sync {
    fn lift(&self, target: f64) -> Result<FieldState>;
    /// Allowed mismatch between the target and the restriction of a lift.
    fn tolerance(&self) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurstConfig {
    pub n_bursts: usize,
    pub window: EstimationWindow,
    pub dt: f64,
    pub seed: u64,
}

impl Default for BurstConfig {
    fn default() -> Self {
        Self {
            n_bursts: 4000,
            window: EstimationWindow::default(),
            dt: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurstEstimate {
    pub point: DriftDiffusionPoint,
    /// Bursts dropped because the integration blew up.
    pub dropped: usize,
}

/// Ensemble of short simulations started from the lifted state of `target`,
/// each with a fresh noise realization drawn from stream
/// `(cfg.seed, [stream_id, burst])`.
///
/// Each burst is simulated for `discard + max lag`; the remainder of the
/// nominal burst duration would not enter the estimate.
#[allow(clippy::too_many_arguments)]
pub fn estimate_burst(
    target: f64,
    params: &ModelParams,
    spec: &NoiseSpec,
    lifter: &dyn Lifter,
    restrictor: &dyn Restrictor,
    cfg: &BurstConfig,
    stream_id: u64,
) -> Result<BurstEstimate> {
    cfg.window.validate()?;
    if cfg.n_bursts < 2 {
        return Err(Error::param("n_bursts", "need at least 2 bursts"));
    }
    let lifted = lifter.lift(target)?;
    let achieved = restrictor.restrict(&lifted)?;
    let miss = restrictor.coordinate().distance(achieved, target);
    if miss > lifter.tolerance() {
        return Err(Error::LiftFailed(format!(
            "lifted state restricts to {achieved}, target {target} (miss {miss:e})"
        )));
    }
    let probe = Integrator::new(params, spec, cfg.dt)?;
    let discard_steps = probe.steps_for("discard", cfg.window.discard)?;
    let lag_steps: Vec<usize> = cfg
        .window
        .lags()
        .iter()
        .map(|&l| probe.steps_for("dt_est", l))
        .collect::<Result<_>>()?;

    burst_ensemble(
        target,
        cfg.n_bursts,
        &cfg.window,
        restrictor.coordinate(),
        cfg.seed,
        stream_id,
        |rng| run_burst(&lifted, &probe, discard_steps, &lag_steps, restrictor, rng),
    )
}

/// Runs `n_bursts` independent bursts and aggregates their increments.
///
/// `run` receives the burst's own generator (stream `(seed, [stream_id, b])`)
/// and returns the coarse value at the start of the measurement window with
/// the increments at each lag of `window`, or `None` for a dropped burst.
/// Results are collected in burst order, so the estimate does not depend on
/// scheduling.
#[allow(clippy::too_many_arguments)]
pub fn burst_ensemble<F>(
    target: f64,
    n_bursts: usize,
    window: &EstimationWindow,
    coordinate: Coordinate,
    seed: u64,
    stream_id: u64,
    run: F,
) -> Result<BurstEstimate>
where
    F: Fn(&mut SimRng) -> Result<Option<(f64, Vec<f64>)>> + Sync,
{
    let runs: Vec<Option<(f64, Vec<f64>)>> = (0..n_bursts)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, &[stream_id, b as u64]);
            run(&mut rng)
        })
        .collect::<Result<_>>()?;

    let dropped = runs.iter().filter(|r| r.is_none()).count();
    let (starts, samples): (Vec<f64>, Vec<Vec<f64>>) = runs.into_iter().flatten().unzip();
    let estimate = increment_moments(&samples, window)?;
    let offset = starts
        .iter()
        .map(|&s| coordinate.diff(s, target))
        .sum::<f64>()
        / starts.len() as f64;
    Ok(BurstEstimate {
        point: DriftDiffusionPoint {
            v: target,
            v_start: target + offset,
            estimate,
        },
        dropped,
    })
}

/// One burst: returns the coarse value after healing and the increments at
/// each lag, or `None` when the integration blew up.
fn run_burst<R: Rng>(
    lifted: &FieldState,
    template: &Integrator,
    discard_steps: usize,
    lag_steps: &[usize],
    restrictor: &dyn Restrictor,
    rng: &mut R,
) -> Result<Option<(f64, Vec<f64>)>> {
    let mut integ = template.clone();
    let mut state = lifted.clone();
    let mut ns = integ.fresh_noise(rng);
    let coord = restrictor.coordinate();
    let mut sorted: Vec<(usize, usize)> = lag_steps.iter().copied().enumerate().collect();
    sorted.sort_by_key(|&(_, s)| s);

    match integ.advance(&mut state, &mut ns, discard_steps, rng) {
        Ok(()) => {}
        Err(Error::IntegrationBlowup { .. }) => return Ok(None),
        Err(e) => return Err(e),
    }
    let start = restrictor.restrict(&state)?;
    let mut incs = vec![0.0; lag_steps.len()];
    let mut done = 0;
    for (slot, steps) in sorted {
        match integ.advance(&mut state, &mut ns, steps - done, rng) {
            Ok(()) => {}
            Err(Error::IntegrationBlowup { .. }) => return Ok(None),
            Err(e) => return Err(e),
        }
        done = steps;
        incs[slot] = coord.diff(restrictor.restrict(&state)?, start);
    }
    Ok(Some((start, incs)))
}

/// Burst estimates over a grid of targets, each target on its own stream.
pub fn estimate_burst_curve(
    grid: &[f64],
    params: &ModelParams,
    spec: &NoiseSpec,
    lifter: &dyn Lifter,
    restrictor: &dyn Restrictor,
    cfg: &BurstConfig,
) -> Result<(DriftDiffusionCurve, usize)> {
    let mut points = Vec::with_capacity(grid.len());
    let mut dropped = 0;
    for (g, &v) in grid.iter().enumerate() {
        let est = estimate_burst(v, params, spec, lifter, restrictor, cfg, g as u64)?;
        dropped += est.dropped;
        points.push(est.point);
    }
    points.sort_by(|a, b| a.v.total_cmp(&b.v));
    Ok((
        DriftDiffusionCurve {
            points,
            missing: Vec::new(),
            method: EstimationMethod::Burst,
        },
        dropped,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialMethod {
    Histogram,
    FpIntegral,
}

impl PotentialMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            PotentialMethod::Histogram => "histogram",
            PotentialMethod::FpIntegral => "fp_integral",
        }
    }
}

/// Effective potential `G = beta*Phi`, shifted so that its minimum is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialCurve {
    pub v: Vec<f64>,
    pub g: Vec<f64>,
    pub method: PotentialMethod,
    /// Grid positions without data (empty histogram bins).
    pub flagged: Vec<f64>,
}

impl PotentialCurve {
    /// Builds a curve from raw values, shifting them so the minimum is zero.
    pub fn normalized(
        v: Vec<f64>,
        mut g: Vec<f64>,
        method: PotentialMethod,
        flagged: Vec<f64>,
    ) -> Self {
        let min = g.iter().copied().fold(f64::INFINITY, f64::min);
        g.iter_mut().for_each(|x| *x -= min);
        Self {
            v,
            g,
            method,
            flagged,
        }
    }

    pub fn at(&self, v: f64) -> Option<f64> {
        interpolate(&self.v, &self.g, v)
    }
}

/// `G(V) = -int mu/D dV + ln D(V)` by the trapezoid rule on the curve's grid.
pub fn potential_fp_integral(curve: &DriftDiffusionCurve) -> Result<PotentialCurve> {
    if curve.points.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} drift/diffusion points",
            curve.points.len()
        )));
    }
    for p in &curve.points {
        if !(p.estimate.d > 0.0) {
            return Err(Error::NonpositiveDiffusion {
                v: p.v,
                value: p.estimate.d,
            });
        }
    }
    let v = curve.v_grid();
    let ratio: Vec<f64> = curve
        .points
        .iter()
        .map(|p| p.estimate.mu / p.estimate.d)
        .collect();
    let mut integral = vec![0.0; v.len()];
    for k in 1..v.len() {
        integral[k] = integral[k - 1] + 0.5 * (ratio[k] + ratio[k - 1]) * (v[k] - v[k - 1]);
    }
    let g = curve
        .points
        .iter()
        .zip(&integral)
        .map(|(p, i)| -i + p.estimate.d.ln())
        .collect();
    Ok(PotentialCurve::normalized(
        v,
        g,
        PotentialMethod::FpIntegral,
        Vec::new(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBins {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl HistogramBins {
    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.count as f64
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.width()
    }
}

pub const MIN_HISTOGRAM_SAMPLES: usize = 10_000;

/// `G = -ln(density)` from a histogram of stationary samples.
pub fn potential_histogram(samples: &[f64], bins: &HistogramBins) -> Result<PotentialCurve> {
    if samples.len() < MIN_HISTOGRAM_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} samples, need {MIN_HISTOGRAM_SAMPLES}",
            samples.len()
        )));
    }
    if !(bins.hi > bins.lo) || bins.count == 0 {
        return Err(Error::param("bins", "need hi > lo and at least one bin"));
    }
    let mut counts = vec![0usize; bins.count];
    let w = bins.width();
    for &s in samples {
        let k = ((s - bins.lo) / w).floor();
        if k >= 0.0 && (k as usize) < bins.count {
            counts[k as usize] += 1;
        }
    }
    let norm = samples.len() as f64 * w;
    let mut v = Vec::new();
    let mut g = Vec::new();
    let mut flagged = Vec::new();
    for (k, &c) in counts.iter().enumerate() {
        if c == 0 {
            flagged.push(bins.center(k));
        } else {
            v.push(bins.center(k));
            g.push(-(c as f64 / norm).ln());
        }
    }
    if v.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} nonempty bins",
            v.len()
        )));
    }
    Ok(PotentialCurve::normalized(
        v,
        g,
        PotentialMethod::Histogram,
        flagged,
    ))
}

/// Histogram density (per unit length) at the bin centers.
pub fn histogram_density(samples: &[f64], bins: &HistogramBins) -> Vec<f64> {
    let mut counts = vec![0usize; bins.count];
    let w = bins.width();
    for &s in samples {
        let k = ((s - bins.lo) / w).floor();
        if k >= 0.0 && (k as usize) < bins.count {
            counts[k as usize] += 1;
        }
    }
    counts
        .iter()
        .map(|&c| c as f64 / (samples.len() as f64 * w))
        .collect()
}
