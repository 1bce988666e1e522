//! Switching times: Kramers' estimate from the reconstructed potential and
//! direction flips counted in long runs.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bifurcation::{fit_cubic, fit_diffusion, MuSample, SweepParameter};
use crate::error::{Error, Result};
use crate::field_sim::{ModelParams, NoiseSpec};
use crate::langevin::{
    estimate_burst_curve, potential_fp_integral, BurstConfig, DriftDiffusionCurve,
    DriftDiffusionPoint, EstimationMethod, MomentEstimate, PotentialCurve,
};
use crate::lifting_v::{make_reference, ReferenceConfig};
use crate::linalg::polyfit;
use crate::observables::Observer;

/// Grid points on each side of a stationary point used by the local fits.
pub const DEFAULT_HALF_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WellSide {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellGeometry {
    pub side: WellSide,
    pub v_min: f64,
    pub g_min: f64,
    /// Potential at `V = 0`.
    pub g_barrier: f64,
    pub curvature_min: f64,
    pub curvature_barrier: f64,
    /// `[D(0) + D(v_min)] / 2`.
    pub d_bar: f64,
}

impl WellGeometry {
    pub fn delta_g(&self) -> f64 {
        self.g_barrier - self.g_min
    }
}

/// Quadratic fit over `half` points either side of index `k`:
/// returns (vertex or `at`, value there, second derivative).
fn local_quadratic(
    v: &[f64],
    g: &[f64],
    k: usize,
    half: usize,
    at: Option<f64>,
) -> Result<(f64, f64, f64)> {
    let lo = k.saturating_sub(half);
    let hi = (k + half + 1).min(v.len());
    if hi - lo < 3 {
        return Err(Error::InsufficientData(format!(
            "{} points around v = {}",
            hi - lo,
            v[k]
        )));
    }
    // centre the abscissa for conditioning
    let x0 = v[k];
    let x: Vec<f64> = v[lo..hi].iter().map(|x| x - x0).collect();
    let f = polyfit(&x, &g[lo..hi], 2)?;
    let (c0, c1, c2) = (f.coef[0], f.coef[1], f.coef[2]);
    let curvature = 2.0 * c2;
    let pos = match at {
        Some(a) => a - x0,
        None if c2 != 0.0 => {
            let vertex = -c1 / (2.0 * c2);
            // keep the vertex inside the fitted window
            vertex.clamp(x[0], x[x.len() - 1])
        }
        None => 0.0,
    };
    Ok((x0 + pos, c0 + pos * (c1 + pos * c2), curvature))
}

/// Geometry of one well of a double-welled potential with its barrier at 0.
pub fn well_geometry(
    potential: &PotentialCurve,
    dd: &DriftDiffusionCurve,
    side: WellSide,
    half_window: usize,
) -> Result<WellGeometry> {
    let (v, g) = (&potential.v, &potential.g);
    if v.len() < 2 * half_window + 3 {
        return Err(Error::InsufficientData(format!(
            "{} potential points",
            v.len()
        )));
    }
    let k0 = (0..v.len())
        .min_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
        .expect("non-empty");
    let range: Vec<usize> = match side {
        WellSide::Left => (0..k0).collect(),
        WellSide::Right => (k0 + 1..v.len()).collect(),
    };
    let kmin = range
        .iter()
        .copied()
        .min_by(|&a, &b| g[a].total_cmp(&g[b]))
        .ok_or_else(|| Error::NoBarrier(format!("no grid points on the {side:?} side")))?;
    if g[kmin] >= g[k0] {
        return Err(Error::NoBarrier(format!(
            "{side:?} side never drops below the value at 0"
        )));
    }
    if kmin == 0 || kmin == v.len() - 1 {
        return Err(Error::NoBarrier(format!(
            "{side:?} minimum sits on the grid edge (v = {})",
            v[kmin]
        )));
    }
    let (_, g_barrier, curvature_barrier) = local_quadratic(v, g, k0, half_window, Some(0.0))?;
    let (v_min, g_min, curvature_min) = local_quadratic(v, g, kmin, half_window, None)?;
    if !(curvature_barrier < 0.0) {
        return Err(Error::NoBarrier(format!(
            "curvature at 0 is {curvature_barrier:e}, not a maximum"
        )));
    }
    if !(curvature_min > 0.0) || g_barrier < g_min {
        return Err(Error::NoBarrier(format!(
            "no {side:?} minimum (curvature {curvature_min:e}, depth {})",
            g_barrier - g_min
        )));
    }
    let d0 = dd.d_at(0.0);
    let dm = dd.d_at(v_min);
    let d_bar = match (d0, dm) {
        (Some(a), Some(b)) => 0.5 * (a + b),
        _ => {
            return Err(Error::InsufficientData(
                "empty drift/diffusion curve".into(),
            ))
        }
    };
    Ok(WellGeometry {
        side,
        v_min,
        g_min,
        g_barrier,
        curvature_min,
        curvature_barrier,
        d_bar,
    })
}

/// `tau = 2 pi exp(dG) / (D_bar sqrt(-G''(v_min) G''(0)))`.
pub fn kramers_time(geom: &WellGeometry) -> Result<f64> {
    let prod = -geom.curvature_min * geom.curvature_barrier;
    if !(prod > 0.0) {
        return Err(Error::NoBarrier(format!(
            "curvature product {prod:e} is not positive"
        )));
    }
    if !(geom.d_bar > 0.0) {
        return Err(Error::NonpositiveDiffusion {
            v: geom.v_min,
            value: geom.d_bar,
        });
    }
    Ok(2.0 * PI * geom.delta_g().exp() / (geom.d_bar * prod.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KramersEstimate {
    pub left: WellGeometry,
    pub right: WellGeometry,
    pub tau_left: f64,
    pub tau_right: f64,
}

impl KramersEstimate {
    /// Mean time between direction flips when the two wells alternate.
    pub fn tau(&self) -> f64 {
        0.5 * (self.tau_left + self.tau_right)
    }

    pub fn v_min(&self) -> f64 {
        0.5 * (self.right.v_min - self.left.v_min)
    }

    pub fn delta_g(&self) -> f64 {
        0.5 * (self.left.delta_g() + self.right.delta_g())
    }

    pub fn d_bar(&self) -> f64 {
        0.5 * (self.left.d_bar + self.right.d_bar)
    }

    pub fn curvature_min(&self) -> f64 {
        0.5 * (self.left.curvature_min + self.right.curvature_min)
    }

    pub fn curvature_barrier(&self) -> f64 {
        0.5 * (self.left.curvature_barrier + self.right.curvature_barrier)
    }
}

pub fn kramers_estimate(
    potential: &PotentialCurve,
    dd: &DriftDiffusionCurve,
    half_window: usize,
) -> Result<KramersEstimate> {
    let left = well_geometry(potential, dd, WellSide::Left, half_window)?;
    let right = well_geometry(potential, dd, WellSide::Right, half_window)?;
    Ok(KramersEstimate {
        tau_left: kramers_time(&left)?,
        tau_right: kramers_time(&right)?,
        left,
        right,
    })
}

/// Replaces noisy grid estimates by a weighted cubic for the drift and a
/// quadratic for the diffusion, evaluated on a grid of spacing `step` over
/// the original range.
pub fn smooth_curve(
    curve: &DriftDiffusionCurve,
    symmetric_mode: bool,
    step: f64,
) -> Result<DriftDiffusionCurve> {
    if !(step > 0.0) {
        return Err(Error::param("step", "must be positive"));
    }
    let mu: Vec<MuSample> = curve.points.iter().map(MuSample::from).collect();
    let cubic = fit_cubic(&mu, symmetric_mode)?;
    let d = fit_diffusion(&curve.points, symmetric_mode)?;
    let (lo, hi) = match (curve.points.first(), curve.points.last()) {
        (Some(a), Some(b)) => (a.v, b.v),
        _ => return Err(Error::InsufficientData("empty curve".into())),
    };
    let n = ((hi - lo) / step).round() as usize;
    let points = (0..=n)
        .map(|k| {
            let v = lo + (hi - lo) * k as f64 / n.max(1) as f64;
            DriftDiffusionPoint {
                v,
                v_start: v,
                estimate: MomentEstimate {
                    mu: cubic.eval(v),
                    mu_se: 0.0,
                    d: d[0] + v * (d[1] + v * d[2]),
                    d_se: 0.0,
                    n: 0,
                    d_clipped: false,
                },
            }
        })
        .collect();
    Ok(DriftDiffusionCurve {
        points,
        missing: Vec::new(),
        method: curve.method,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchRecord {
    /// Times of the direction flips.
    pub switch_times: Vec<f64>,
    /// Intervals between consecutive flips.
    pub waiting: Vec<f64>,
    pub threshold: f64,
    pub warning: Option<String>,
}

impl SwitchRecord {
    pub fn mean_waiting(&self) -> Option<f64> {
        (!self.waiting.is_empty())
            .then(|| self.waiting.iter().sum::<f64>() / self.waiting.len() as f64)
    }

    /// Coefficient of variation of the waiting times.
    pub fn cv(&self) -> Option<f64> {
        let n = self.waiting.len();
        if n < 2 {
            return None;
        }
        let m = self.mean_waiting()?;
        let var = self.waiting.iter().map(|w| (w - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        Some(var.sqrt() / m)
    }
}

pub const DEFAULT_HYSTERESIS: f64 = 0.5;

/// Two-state hysteresis automaton on a series sampled every `sample_dt`
/// starting at `t0`: the state becomes "right" when `V > theta` and "left"
/// when `V < -theta`, with `theta = fraction * v_min_magnitude`.
pub fn detect_switches(
    v_series: &[f64],
    t0: f64,
    sample_dt: f64,
    v_min_magnitude: f64,
    hysteresis_fraction: f64,
) -> Result<SwitchRecord> {
    if !(v_min_magnitude > 0.0) {
        return Err(Error::param("v_min_magnitude", "must be positive"));
    }
    if !(hysteresis_fraction > 0.0 && hysteresis_fraction <= 1.0) {
        return Err(Error::param("hysteresis_fraction", "must lie in (0, 1]"));
    }
    if !(sample_dt > 0.0) {
        return Err(Error::param("sample_dt", "must be positive"));
    }
    let theta = hysteresis_fraction * v_min_magnitude;
    let mut state: Option<bool> = None;
    let mut switch_times = Vec::new();
    for (k, &v) in v_series.iter().enumerate() {
        let next = if v > theta {
            Some(true)
        } else if v < -theta {
            Some(false)
        } else {
            state
        };
        if let (Some(a), Some(b)) = (state, next) {
            if a != b {
                switch_times.push(t0 + k as f64 * sample_dt);
            }
        }
        state = next;
    }
    let waiting: Vec<f64> = switch_times.windows(2).map(|w| w[1] - w[0]).collect();
    let warning = (switch_times.len() < 2).then(|| {
        format!(
            "{} direction flips; no waiting times (threshold {theta})",
            switch_times.len()
        )
    });
    Ok(SwitchRecord {
        switch_times,
        waiting,
        threshold: theta,
        warning,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TauConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// V values at which drift and diffusion are burst-estimated.
    pub v_grid: Vec<f64>,
    pub burst: BurstConfig,
    pub reference: ReferenceConfig,
    /// Spacing of the grid on which the smoothed potential is evaluated.
    pub smooth_step: f64,
    pub half_window: usize,
}

impl Default for TauConfig {
    fn default() -> Self {
        Self {
            parameter: SweepParameter::Adaptation,
            values: Vec::new(),
            v_grid: (-12..=12).map(|k| k as f64 / 40.0).collect(),
            burst: BurstConfig::default(),
            reference: ReferenceConfig::default(),
            smooth_step: 0.002,
            half_window: DEFAULT_HALF_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TauPoint {
    pub param: f64,
    pub curve: Option<DriftDiffusionCurve>,
    pub kramers: Option<KramersEstimate>,
    pub error: Option<String>,
}

/// Kramers estimate from burst-estimated drift and diffusion at one set of
/// parameters (fresh reference bump, smoothed potential).
pub fn kramers_from_bursts(
    params: &ModelParams,
    spec: &NoiseSpec,
    cfg: &TauConfig,
    seed: u64,
) -> Result<(DriftDiffusionCurve, KramersEstimate)> {
    let reference = make_reference(params, &cfg.reference)?;
    let obs = Observer::new(params.nodes);
    let burst = BurstConfig { seed, ..cfg.burst };
    let (curve, _) = estimate_burst_curve(&cfg.v_grid, params, spec, &reference, &obs, &burst)?;
    let smooth = smooth_curve(&curve, false, cfg.smooth_step)?;
    let potential = potential_fp_integral(&smooth)?;
    let k = kramers_estimate(&potential, &smooth, cfg.half_window)?;
    Ok((curve, k))
}

/// Kramers time per parameter value; single-well points are flagged.
pub fn tau_curve(params: &ModelParams, spec: &NoiseSpec, cfg: &TauConfig) -> Result<Vec<TauPoint>> {
    if cfg.values.is_empty() {
        return Err(Error::param("tau.values", "empty parameter grid"));
    }
    let mut out = Vec::with_capacity(cfg.values.len());
    for (g, &value) in cfg.values.iter().enumerate() {
        let (p, s) = cfg.parameter.apply(params, spec, value)?;
        // distinct grid points get disjoint seed families
        let seed = cfg.burst.seed.wrapping_add((g as u64) << 40);
        out.push(match kramers_from_bursts(&p, &s, cfg, seed) {
            Ok((curve, k)) => TauPoint {
                param: value,
                curve: Some(curve),
                kramers: Some(k),
                error: None,
            },
            Err(e) => TauPoint {
                param: value,
                curve: None,
                kramers: None,
                error: Some(e.to_string()),
            },
        });
    }
    Ok(out)
}

/// Curve with constant `D` and the given drift, for building oracles.
pub fn curve_from_fn(
    v: &[f64],
    mu: impl Fn(f64) -> f64,
    d: impl Fn(f64) -> f64,
) -> DriftDiffusionCurve {
    DriftDiffusionCurve {
        points: v
            .iter()
            .map(|&x| DriftDiffusionPoint {
                v: x,
                v_start: x,
                estimate: MomentEstimate {
                    mu: mu(x),
                    mu_se: 0.0,
                    d: d(x),
                    d_se: 0.0,
                    n: 0,
                    d_clipped: false,
                },
            })
            .collect(),
        missing: Vec::new(),
        method: EstimationMethod::Burst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::langevin::PotentialMethod;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn grid(lo: f64, hi: f64, h: f64) -> Vec<f64> {
        let n = ((hi - lo) / h).round() as usize;
        (0..=n).map(|k| lo + k as f64 * h).collect()
    }

    fn potential(v: &[f64], g: impl Fn(f64) -> f64) -> PotentialCurve {
        PotentialCurve::normalized(
            v.to_vec(),
            v.iter().map(|&x| g(x)).collect(),
            PotentialMethod::FpIntegral,
            Vec::new(),
        )
    }

    #[test]
    fn quartic_geometry_matches_closed_form() {
        let v = grid(-0.5, 0.5, 0.001);
        let pot = potential(&v, |x| 50.0 * (x * x - 0.04).powi(2));
        let dd = curve_from_fn(&v, |_| 0.0, |_| 1e-3);
        for side in [WellSide::Left, WellSide::Right] {
            let w = well_geometry(&pot, &dd, side, DEFAULT_HALF_WINDOW).unwrap();
            let sign = if side == WellSide::Left { -1.0 } else { 1.0 };
            assert_abs_diff_eq!(w.v_min, sign * 0.2, epsilon = 1e-4);
            assert!(
                (w.curvature_min / 16.0 - 1.0).abs() < 0.01,
                "{}",
                w.curvature_min
            );
            assert!(
                (w.curvature_barrier / -8.0 - 1.0).abs() < 0.01,
                "{}",
                w.curvature_barrier
            );
            assert_abs_diff_eq!(w.delta_g(), 50.0 * 0.04f64.powi(2), epsilon = 1e-4);
            assert_abs_diff_eq!(w.d_bar, 1e-3, epsilon = 1e-15);
        }
    }

    #[test]
    fn symmetric_potential_gives_mirror_wells() {
        let v = grid(-0.5, 0.5, 0.01);
        let pot = potential(&v, |x| 50.0 * (x * x - 0.04).powi(2));
        let dd = curve_from_fn(&v, |_| 0.0, |_| 1e-3);
        let k = kramers_estimate(&pot, &dd, DEFAULT_HALF_WINDOW).unwrap();
        assert!((k.left.v_min + k.right.v_min).abs() <= 0.01);
        assert_abs_diff_eq!(k.tau_left, k.tau_right, epsilon = 1e-9 * k.tau_left);
    }

    #[test]
    fn single_well_has_no_barrier() {
        let v = grid(-0.5, 0.5, 0.01);
        let pot = potential(&v, |x| 10.0 * x * x);
        let dd = curve_from_fn(&v, |_| 0.0, |_| 1e-3);
        assert!(matches!(
            well_geometry(&pot, &dd, WellSide::Right, DEFAULT_HALF_WINDOW),
            Err(Error::NoBarrier(_))
        ));
    }

    fn quartic_geom(h: f64, vs: f64, d_bar: f64) -> WellGeometry {
        WellGeometry {
            side: WellSide::Right,
            v_min: vs,
            g_min: 0.0,
            g_barrier: h,
            curvature_min: 8.0 * h / (vs * vs),
            curvature_barrier: -4.0 * h / (vs * vs),
            d_bar,
        }
    }

    #[test]
    fn kramers_quartic_closed_form() {
        let (h, vs, d) = (2.0f64, 0.3f64, 1e-3);
        let tau = kramers_time(&quartic_geom(h, vs, d)).unwrap();
        let expect = PI * vs * vs * h.exp() / (2.0 * 2f64.sqrt() * h * d);
        assert_abs_diff_eq!(tau, expect, epsilon = 1e-9 * expect);
        assert!((tau - 369.3).abs() < 0.5, "{tau}");
    }

    #[test]
    fn doubling_diffusion_halves_tau() {
        let t1 = kramers_time(&quartic_geom(2.0, 0.3, 1e-3)).unwrap();
        let t2 = kramers_time(&quartic_geom(2.0, 0.3, 2e-3)).unwrap();
        assert_abs_diff_eq!(t1 / t2, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn nonpositive_curvature_product_is_rejected() {
        let mut g = quartic_geom(2.0, 0.3, 1e-3);
        g.curvature_barrier = 1.0;
        assert!(kramers_time(&g).is_err());
    }

    /// Mean first-passage time from `a` to `b > a` for `dV = -D G' dt +
    /// sqrt(2D) dW` with reflection far to the left, by nested quadrature.
    fn mfpt(g: impl Fn(f64) -> f64, d: f64, a: f64, b: f64) -> f64 {
        let h = 1e-4;
        let lo = -1.0;
        let n = ((b - lo) / h) as usize;
        let mut inner = 0.0;
        let mut total = 0.0;
        for k in 0..n {
            let y = lo + (k as f64 + 0.5) * h;
            inner += (-g(y)).exp() * h;
            if y > a {
                total += g(y).exp() * inner * h;
            }
        }
        total / d
    }

    #[test]
    fn kramers_agrees_with_quadrature_first_passage() {
        // finite-barrier corrections are O(1/h); h = 2 is off by about 25%
        let (h, vs, d) = (6.0f64, 0.3f64, 1e-3);
        let g = |v: f64| h * ((v / vs).powi(2) - 1.0).powi(2);
        let tau = kramers_time(&quartic_geom(h, vs, d)).unwrap();
        let t = mfpt(g, d, -vs, vs);
        assert!((tau / t - 1.0).abs() < 0.2, "kramers {tau} vs mfpt {t}");
    }

    #[test]
    fn kramers_agrees_with_monte_carlo_switching() {
        let (h, vs, d) = (2.0f64, 0.3f64, 1e-3);
        let force = |v: f64| -d * h * 4.0 * ((v / vs).powi(2) - 1.0) * v / (vs * vs);
        let dt = 0.05;
        let steps = 4_000_000;
        let mut rng = stream(23, &[]);
        let mut v = -vs;
        let mut series = Vec::with_capacity(steps / 10);
        let amp = (2.0 * d * dt).sqrt();
        for k in 0..steps {
            v += force(v) * dt + amp * rng.sample::<f64, _>(StandardNormal);
            if k % 10 == 0 {
                series.push(v);
            }
        }
        let rec = detect_switches(&series, 0.0, 10.0 * dt, vs, DEFAULT_HYSTERESIS).unwrap();
        let tau = kramers_time(&quartic_geom(h, vs, d)).unwrap();
        let emp = rec.mean_waiting().unwrap();
        assert!(rec.waiting.len() > 300, "{} waits", rec.waiting.len());
        assert!(
            (tau / emp - 1.0).abs() < 0.2,
            "kramers {tau} vs empirical {emp}"
        );
        let cv = rec.cv().unwrap();
        assert!((0.7..=1.3).contains(&cv), "cv {cv}");
    }

    #[test]
    fn square_wave_waiting_times() {
        let theta = 0.1;
        let series: Vec<f64> = (0..1000)
            .map(|k| {
                if (k / 100) % 2 == 0 {
                    2.0 * theta
                } else {
                    -2.0 * theta
                }
            })
            .collect();
        let rec = detect_switches(&series, 0.0, 1.0, theta / 0.5, 0.5).unwrap();
        assert_eq!(rec.switch_times.len(), 9);
        assert_eq!(rec.waiting.len(), 8);
        assert!(rec.waiting.iter().all(|&w| (w - 100.0).abs() < 1e-12));
        assert!(rec.warning.is_none());
    }

    #[test]
    fn small_noise_never_switches() {
        let mut rng = stream(1, &[]);
        let series: Vec<f64> = (0..10_000)
            .map(|_| 1e-3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let rec = detect_switches(&series, 0.0, 1.0, 0.2, 0.5).unwrap();
        assert!(rec.switch_times.is_empty());
        assert!(rec.waiting.is_empty());
        assert!(rec.warning.is_some());
    }

    #[test]
    fn chatter_inside_band_is_not_counted() {
        let series = [0.3, 0.05, -0.05, 0.05, -0.05, 0.3, -0.3];
        let rec = detect_switches(&series, 10.0, 2.0, 0.2, 0.5).unwrap();
        assert_eq!(rec.switch_times, vec![22.0]);
    }

    #[test]
    fn smoothing_recovers_cubic_drift() {
        let v = grid(-0.3, 0.3, 0.05);
        let curve = curve_from_fn(
            &v,
            |x| 0.003 * x - 0.12 * x.powi(3),
            |x| 2e-5 + 1e-5 * x * x,
        );
        let s = smooth_curve(&curve, false, 0.001).unwrap();
        assert_eq!(s.points.len(), 601);
        for p in s.points.iter().step_by(37) {
            assert_abs_diff_eq!(
                p.estimate.mu,
                0.003 * p.v - 0.12 * p.v.powi(3),
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(p.estimate.d, 2e-5 + 1e-5 * p.v * p.v, epsilon = 1e-15);
        }
    }

    proptest! {
        #[test]
        fn switch_detection_is_mirror_invariant(seed in 0u64..1000) {
            let mut rng = stream(seed, &[]);
            let mut v = 0.0;
            let series: Vec<f64> = (0..2000).map(|_| { v = 0.98 * v + 0.05 * rng.sample::<f64, _>(StandardNormal); v }).collect();
            let mirrored: Vec<f64> = series.iter().map(|x| -x).collect();
            let a = detect_switches(&series, 0.0, 1.0, 0.2, 0.5).unwrap();
            let b = detect_switches(&mirrored, 0.0, 1.0, 0.2, 0.5).unwrap();
            prop_assert_eq!(a.waiting, b.waiting);
            prop_assert_eq!(a.switch_times, b.switch_times);
        }
    }
}
