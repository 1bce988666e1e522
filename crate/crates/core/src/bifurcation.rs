//! Zeros of the effective drift as parameters vary.
//!
//! The drift is sampled by burst estimation at a few design values of V,
//! a cubic is fitted through the samples, and its real roots are classified
//! by the sign of the slope.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_sim::{ModelParams, NoiseSpec};
use crate::langevin::{estimate_burst, BurstConfig, DriftDiffusionCurve, DriftDiffusionPoint};
use crate::lifting_v::{make_reference, ReferenceBump, ReferenceConfig};
use crate::linalg::{polyfit, weighted_lstsq};
use crate::observables::Observer;

/// Roots closer than this are merged.
const ROOT_MERGE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuSample {
    pub v: f64,
    pub mu: f64,
    /// Standard error; non-positive values mean "unknown" and give unit weight.
    pub se: f64,
}

impl From<&DriftDiffusionPoint> for MuSample {
    fn from(p: &DriftDiffusionPoint) -> Self {
        Self {
            v: p.v,
            mu: p.estimate.mu,
            se: p.estimate.mu_se,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicDrift {
    /// `mu(V) = c[0] + c[1] V + c[2] V^2 + c[3] V^3`.
    pub c: [f64; 4],
    pub se: [f64; 4],
    /// Weighted residual sum of squares.
    pub residual: f64,
    pub symmetric_mode: bool,
}

impl CubicDrift {
    pub fn from_coefficients(c: [f64; 4]) -> Self {
        Self {
            c,
            se: [0.0; 4],
            residual: 0.0,
            symmetric_mode: false,
        }
    }

    pub fn eval(&self, v: f64) -> f64 {
        let c = &self.c;
        c[0] + v * (c[1] + v * (c[2] + v * c[3]))
    }

    pub fn slope(&self, v: f64) -> f64 {
        let c = &self.c;
        c[1] + v * (2.0 * c[2] + 3.0 * v * c[3])
    }
}

/// Weighted least-squares cubic through drift samples. In symmetric mode only
/// the odd coefficients are fitted, so two distinct `|V|` values suffice.
pub fn fit_cubic(samples: &[MuSample], symmetric_mode: bool) -> Result<CubicDrift> {
    if samples
        .iter()
        .any(|s| !(s.v.is_finite() && s.mu.is_finite()))
    {
        return Err(Error::param("samples", "non-finite drift sample"));
    }
    let use_weights = samples.iter().all(|s| s.se > 0.0 && s.se.is_finite());
    let w: Vec<f64> = samples
        .iter()
        .map(|s| {
            if use_weights {
                1.0 / (s.se * s.se)
            } else {
                1.0
            }
        })
        .collect();
    let y: Vec<f64> = samples.iter().map(|s| s.mu).collect();
    let powers: &[i32] = if symmetric_mode {
        &[1, 3]
    } else {
        &[0, 1, 2, 3]
    };
    let rows: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| powers.iter().map(|&k| s.v.powi(k)).collect())
        .collect();
    let fit = weighted_lstsq(&rows, &y, &w)?;
    let (mut c, mut se) = ([0.0; 4], [0.0; 4]);
    for (j, &k) in powers.iter().enumerate() {
        c[k as usize] = fit.coef[j];
        se[k as usize] = fit.se(j);
    }
    Ok(CubicDrift {
        c,
        se,
        residual: fit.rss,
        symmetric_mode,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
}

impl Stability {
    pub fn from_slope(slope: f64) -> Self {
        if slope < 0.0 {
            Stability::Stable
        } else {
            Stability::Unstable
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPoint {
    pub param: f64,
    pub root: f64,
    pub stability: Stability,
    pub slope: f64,
}

/// Real roots of a polynomial (coefficients in increasing degree, at most
/// cubic) inside `(lo, hi)`, by bisection on its monotone pieces.
fn poly_roots(c: [f64; 4], lo: f64, hi: f64) -> Vec<f64> {
    let f = |v: f64| c[0] + v * (c[1] + v * (c[2] + v * c[3]));
    // critical points: 3 c3 v^2 + 2 c2 v + c1 = 0
    let (qa, qb, qc) = (3.0 * c[3], 2.0 * c[2], c[1]);
    let mut cuts = vec![lo];
    if qa != 0.0 {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc > 0.0 {
            let sq = disc.sqrt();
            // numerically stable pair
            let q = -0.5 * (qb + qb.signum() * sq);
            let mut crit = vec![q / qa];
            if q != 0.0 {
                crit.push(qc / q);
            }
            crit.sort_by(f64::total_cmp);
            cuts.extend(crit.into_iter().filter(|&x| x > lo && x < hi));
        }
    } else if qb != 0.0 {
        let x = -qc / qb;
        if x > lo && x < hi {
            cuts.push(x);
        }
    }
    cuts.push(hi);

    let mut roots: Vec<f64> = Vec::new();
    for w in cuts.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let (fa, fb) = (f(a), f(b));
        if fa == 0.0 {
            roots.push(a);
            continue;
        }
        if fa * fb > 0.0 || fb == 0.0 {
            continue;
        }
        let sa = fa.signum();
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if f(m).signum() == sa {
                a = m;
            } else {
                b = m;
            }
        }
        roots.push(0.5 * (a + b));
    }
    roots.retain(|&r| r > lo && r < hi);
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() < ROOT_MERGE);
    // a zero polynomial has no isolated roots
    if c.iter().all(|&x| x == 0.0) {
        roots.clear();
    }
    roots
}

/// All real roots of the fitted drift in `(-pi, pi)` with their stability.
pub fn cubic_zeros(cubic: &CubicDrift, param: f64) -> Vec<BranchPoint> {
    poly_roots(cubic.c, -PI, PI)
        .into_iter()
        .map(|root| {
            let slope = cubic.slope(root);
            BranchPoint {
                param,
                root,
                stability: Stability::from_slope(slope),
                slope,
            }
        })
        .collect()
}

/// Extrema of the potential reconstructed from a cubic drift and a diffusion
/// fitted as `d[0] + d[1] V + d[2] V^2`: the zeros of `mu - D'`. Minima of
/// the potential are reported as stable.
pub fn potential_extrema(cubic: &CubicDrift, d: [f64; 3], param: f64) -> Vec<BranchPoint> {
    let c = [
        cubic.c[0] - d[1],
        cubic.c[1] - 2.0 * d[2],
        cubic.c[2],
        cubic.c[3],
    ];
    poly_roots(c, -PI, PI)
        .into_iter()
        .map(|root| {
            let slope = c[1] + root * (2.0 * c[2] + 3.0 * root * c[3]);
            BranchPoint {
                param,
                root,
                stability: Stability::from_slope(slope),
                slope,
            }
        })
        .collect()
}

/// Quadratic fit of the diffusion samples (even part only in symmetric mode).
pub fn fit_diffusion(points: &[DriftDiffusionPoint], symmetric_mode: bool) -> Result<[f64; 3]> {
    let v: Vec<f64> = points.iter().map(|p| p.v).collect();
    let d: Vec<f64> = points.iter().map(|p| p.estimate.d).collect();
    if symmetric_mode {
        let v2: Vec<f64> = v.iter().map(|x| x * x).collect();
        let f = polyfit(&v2, &d, 1)?;
        return Ok([f.coef[0], 0.0, f.coef[1]]);
    }
    let f = polyfit(&v, &d, 2)?;
    Ok([f.coef[0], f.coef[1], f.coef[2]])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Adaptation strength `A`.
    #[serde(rename = "a")]
    Adaptation,
    /// Noise intensity (`eta`, or `epsilon` for coloured noise).
    Eta,
    /// Correlation time of coloured noise.
    Lambda,
}

impl SweepParameter {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParameter::Adaptation => "a",
            SweepParameter::Eta => "eta",
            SweepParameter::Lambda => "lambda",
        }
    }

    /// Model and noise with this parameter set to `value`.
    pub fn apply(
        self,
        params: &ModelParams,
        spec: &NoiseSpec,
        value: f64,
    ) -> Result<(ModelParams, NoiseSpec)> {
        let (p, s) = match self {
            SweepParameter::Adaptation => (params.clone().with_adaptation(value), *spec),
            SweepParameter::Eta => (params.clone(), spec.with_intensity(value)),
            SweepParameter::Lambda => match *spec {
                NoiseSpec::Coloured { epsilon, .. } => {
                    (params.clone(), NoiseSpec::coloured(epsilon, value))
                }
                NoiseSpec::White { .. } => {
                    return Err(Error::param(
                        "sweep.parameter",
                        "lambda sweeps need coloured noise",
                    ))
                }
            },
        };
        p.validate()?;
        s.validate()?;
        Ok((p, s))
    }
}

pub const DEFAULT_DESIGN: [f64; 4] = [-0.15, -0.05, 0.05, 0.15];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// V values at which the drift is estimated. In symmetric mode only the
    /// positive ones are used.
    pub design: Vec<f64>,
    pub symmetric_mode: bool,
    pub burst: BurstConfig,
    pub reference: ReferenceConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            parameter: SweepParameter::Adaptation,
            values: Vec::new(),
            design: DEFAULT_DESIGN.to_vec(),
            symmetric_mode: false,
            burst: BurstConfig {
                n_bursts: 10_000,
                ..BurstConfig::default()
            },
            reference: ReferenceConfig::default(),
        }
    }
}

impl SweepConfig {
    fn design_points(&self) -> Vec<f64> {
        if self.symmetric_mode {
            self.design.iter().copied().filter(|&v| v > 0.0).collect()
        } else {
            self.design.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub param: f64,
    pub samples: Vec<DriftDiffusionPoint>,
    pub cubic: Option<CubicDrift>,
    pub roots: Vec<BranchPoint>,
    /// Extrema of the reconstructed potential (zeros of `mu - D'`).
    pub extrema: Vec<BranchPoint>,
    /// Why this grid point produced no fit.
    pub error: Option<String>,
}

/// Drift samples and fitted roots at one parameter value. The reference bump
/// is built from the deterministic system at that parameter value.
pub fn sweep_point(
    params: &ModelParams,
    spec: &NoiseSpec,
    cfg: &SweepConfig,
    reference: &ReferenceBump,
    param: f64,
    grid_index: u64,
) -> Result<SweepPoint> {
    let design = cfg.design_points();
    let needed = if cfg.symmetric_mode { 2 } else { 4 };
    if design.len() < needed {
        return Err(Error::param(
            "sweep.design",
            format!(
                "need at least {needed} usable design points, got {}",
                design.len()
            ),
        ));
    }
    let obs = Observer::new(params.nodes);
    let mut samples = Vec::with_capacity(design.len());
    for (j, &v) in design.iter().enumerate() {
        // stream (seed, [grid << 32 | design, burst]) is injective in (grid, design, burst)
        let stream_id = (grid_index << 32) | j as u64;
        let est = estimate_burst(v, params, spec, reference, &obs, &cfg.burst, stream_id)?;
        samples.push(est.point);
    }
    let mu: Vec<MuSample> = samples.iter().map(MuSample::from).collect();
    let cubic = fit_cubic(&mu, cfg.symmetric_mode)?;
    let roots = cubic_zeros(&cubic, param);
    let extrema = match fit_diffusion(&samples, cfg.symmetric_mode) {
        Ok(d) => potential_extrema(&cubic, d, param),
        Err(_) => Vec::new(),
    };
    Ok(SweepPoint {
        param,
        samples,
        cubic: Some(cubic),
        roots,
        extrema,
        error: None,
    })
}

/// Runs [`sweep_point`] over every parameter value. Failures at a grid point
/// are recorded on that point; configuration errors abort the sweep.
pub fn sweep(params: &ModelParams, spec: &NoiseSpec, cfg: &SweepConfig) -> Result<Vec<SweepPoint>> {
    if cfg.values.is_empty() {
        return Err(Error::param("sweep.values", "empty parameter grid"));
    }
    cfg.burst.window.validate()?;
    let mut out = Vec::with_capacity(cfg.values.len());
    let mut cached: Option<(ModelParams, ReferenceBump)> = None;
    for (g, &value) in cfg.values.iter().enumerate() {
        let (p, s) = cfg.parameter.apply(params, spec, value)?;
        let reference = match &cached {
            Some((cp, r)) if *cp == p => Ok(r.clone()),
            _ => make_reference(&p, &cfg.reference)
                .inspect(|r| cached = Some((p.clone(), r.clone()))),
        };
        let point = reference.and_then(|r| sweep_point(&p, &s, cfg, &r, value, g as u64));
        out.push(point.unwrap_or_else(|e| SweepPoint {
            param: value,
            samples: Vec::new(),
            cubic: None,
            roots: Vec::new(),
            extrema: Vec::new(),
            error: Some(e.to_string()),
        }));
    }
    Ok(out)
}

/// Cubic fit of a full drift curve (e.g. from the database estimator).
pub fn fit_curve(curve: &DriftDiffusionCurve, symmetric_mode: bool) -> Result<CubicDrift> {
    let mu: Vec<MuSample> = curve.points.iter().map(MuSample::from).collect();
    fit_cubic(&mu, symmetric_mode)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchforkFit {
    /// Onset estimate `a0`.
    pub onset: f64,
    pub a2: f64,
    pub r_squared: f64,
    /// Number of outer-branch points used.
    pub n: usize,
}

/// Least-squares fit of `param = a0 + a2 V^2` to the outer (nonzero stable)
/// roots of every grid point with three roots.
pub fn fit_pitchfork(points: &[SweepPoint]) -> Result<PitchforkFit> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for p in points.iter().filter(|p| p.roots.len() == 3) {
        for r in [p.roots[0], p.roots[2]] {
            x.push(r.root * r.root);
            y.push(p.param);
        }
    }
    fit_pitchfork_pairs(&x, &y)
}

/// Same fit from explicit `(param, outer root)` pairs.
pub fn fit_pitchfork_roots(pairs: &[(f64, f64)]) -> Result<PitchforkFit> {
    let x: Vec<f64> = pairs.iter().map(|p| p.1 * p.1).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    fit_pitchfork_pairs(&x, &y)
}

fn fit_pitchfork_pairs(v2: &[f64], param: &[f64]) -> Result<PitchforkFit> {
    if v2.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "pitchfork fit needs at least 4 outer-branch points, got {}",
            v2.len()
        )));
    }
    let f = polyfit(v2, param, 1)?;
    let mean = param.iter().sum::<f64>() / param.len() as f64;
    let tss: f64 = param.iter().map(|p| (p - mean).powi(2)).sum();
    let r_squared = if tss > 0.0 { 1.0 - f.rss / tss } else { 1.0 };
    Ok(PitchforkFit {
        onset: f.coef[0],
        a2: f.coef[1],
        r_squared,
        n: v2.len(),
    })
}
