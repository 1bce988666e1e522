//! Lifting from a target `Phi_2` to a full state by simulated annealing on
//! the Nyström restriction, and burst estimation in `Phi_2`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dmap::{preprocess_one, DiffusionMapModel, Snapshot};
use crate::error::{Error, Result};
use crate::field_sim::{FieldState, Integrator, ModelParams, NoiseSpec};
use crate::langevin::{estimate_burst, BurstConfig, BurstEstimate, Coordinate, Lifter, Restrictor};
use crate::observables::Observer;
use crate::rng::{stream, SimRng};

/// Number of Fourier modes (0..FOURIER_MODES) in a proposal field.
pub const FOURIER_MODES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SAConfig {
    pub lambda_obj: f64,
    pub t_init: f64,
    pub cooling: f64,
    pub steps_per_epoch: usize,
    /// Standard deviation of each Fourier coefficient of a proposal, in
    /// normalized snapshot units.
    pub move_scale: f64,
    pub max_epochs: usize,
    pub success_tol: f64,
}

impl Default for SAConfig {
    fn default() -> Self {
        Self {
            lambda_obj: 1.0,
            t_init: 1e-3,
            cooling: 0.95,
            steps_per_epoch: 20,
            move_scale: 5e-3,
            max_epochs: 200,
            success_tol: 1e-4,
        }
    }
}

impl SAConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &'static str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive, got {x}")))
            }
        };
        pos("sa.lambda_obj", self.lambda_obj)?;
        pos("sa.t_init", self.t_init)?;
        pos("sa.move_scale", self.move_scale)?;
        pos("sa.success_tol", self.success_tol)?;
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(Error::param(
                "sa.cooling",
                format!("must lie in (0, 1), got {}", self.cooling),
            ));
        }
        if self.steps_per_epoch == 0 {
            return Err(Error::param("sa.steps_per_epoch", "must be at least 1"));
        }
        Ok(())
    }

    /// Largest `|Phi_2 - target|` counted as success.
    pub fn phi2_tolerance(&self) -> f64 {
        (self.success_tol / self.lambda_obj).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftResult {
    /// Physical-units state (normalization undone with the seed's scales).
    pub state: FieldState,
    /// The same state as a normalized, aligned snapshot.
    pub snapshot: Snapshot,
    pub target: f64,
    pub achieved_phi2: f64,
    pub objective: f64,
    pub iterations: usize,
    pub accepted: usize,
    pub success: bool,
    /// Dataset index of the starting point.
    pub seed_index: usize,
    /// Best objective at the end of each epoch.
    pub trace: Vec<f64>,
}

impl LiftResult {
    /// Turns an unsuccessful search into an error.
    pub fn require_success(self) -> Result<Self> {
        if self.success {
            Ok(self)
        } else {
            Err(Error::LiftFailed(format!(
                "annealing stopped at objective {:e} (Phi_2 = {}, target {}) after {} iterations",
                self.objective, self.achieved_phi2, self.target, self.iterations
            )))
        }
    }
}

/// Random circular field `sum_{m < 8} c_m cos(m x) + s_m sin(m x)`.
fn smooth_field<R: Rng>(nodes: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    let coef: Vec<(f64, f64)> = (0..FOURIER_MODES)
        .map(|_| {
            (
                scale * rng.sample::<f64, _>(StandardNormal),
                scale * rng.sample::<f64, _>(StandardNormal),
            )
        })
        .collect();
    (0..nodes)
        .map(|i| {
            let x = 2.0 * PI * i as f64 / nodes as f64;
            coef.iter()
                .enumerate()
                .map(|(m, (c, s))| {
                    let (sn, cs) = (m as f64 * x).sin_cos();
                    c * cs + s * sn
                })
                .sum()
        })
        .collect()
}

/// Phi_2 of a candidate snapshot, or None when it cannot be restricted.
fn phi2_of(model: &DiffusionMapModel, snap: &Snapshot) -> Option<f64> {
    model
        .restrict_state(&snap.to_state())
        .ok()
        .map(|r| r.phi2())
}

pub fn lift_phi2<R: Rng>(
    target: f64,
    model: &DiffusionMapModel,
    sa: &SAConfig,
    rng: &mut R,
) -> Result<LiftResult> {
    sa.validate()?;
    if model.k < 1 {
        return Err(Error::param(
            "dmap.k",
            "need at least one nontrivial coordinate",
        ));
    }
    let (lo, hi) = model.phi2_range();
    if !(target >= lo && target <= hi) {
        return Err(Error::param(
            "target",
            format!("Phi_2 = {target} outside the dataset range [{lo}, {hi}]"),
        ));
    }
    let obj = |p: f64| sa.lambda_obj * (p - target).powi(2);
    let seed_index = model.nearest_phi2(target);
    let mut current = model.snapshot(seed_index);
    let mut cur_phi = phi2_of(model, &current).ok_or_else(|| {
        Error::LiftFailed(format!("dataset point {seed_index} does not restrict"))
    })?;
    let mut cur_obj = obj(cur_phi);
    let (mut best, mut best_phi, mut best_obj) = (current.clone(), cur_phi, cur_obj);
    let mut temp = sa.t_init;
    let mut iterations = 0;
    let mut accepted = 0;
    let mut trace = vec![best_obj];
    let m = current.nodes();

    'anneal: for _ in 0..sa.max_epochs {
        if best_obj <= sa.success_tol {
            break;
        }
        for _ in 0..sa.steps_per_epoch {
            iterations += 1;
            let du = smooth_field(m, sa.move_scale, rng);
            let da = smooth_field(m, sa.move_scale, rng);
            let mut trial = current.clone();
            for i in 0..m {
                trial.data[i] += du[i];
                trial.data[m + i] += da[i];
            }
            let Some(p) = phi2_of(model, &trial) else {
                continue;
            };
            let o = obj(p);
            let accept = o <= cur_obj || rng.random::<f64>() < (-(o - cur_obj) / temp).exp();
            if accept {
                accepted += 1;
                current = trial;
                cur_phi = p;
                cur_obj = o;
                if cur_obj < best_obj {
                    best = current.clone();
                    best_phi = cur_phi;
                    best_obj = cur_obj;
                    if best_obj <= sa.success_tol {
                        trace.push(best_obj);
                        break 'anneal;
                    }
                }
            }
        }
        trace.push(best_obj);
        temp *= sa.cooling;
    }

    // renormalize so the u-part maximum is 1 again
    let state = best.to_state();
    let snapshot = preprocess_one(&state, &model.reference_u, model.alignment)?;
    Ok(LiftResult {
        state,
        snapshot,
        target,
        achieved_phi2: best_phi,
        objective: best_obj,
        iterations,
        accepted,
        success: best_obj <= sa.success_tol,
        seed_index,
        trace,
    })
}

impl Restrictor for DiffusionMapModel {
    fn restrict(&self, state: &FieldState) -> Result<f64> {
        Ok(self.restrict_state(state)?.phi2())
    }

    fn coordinate(&self) -> Coordinate {
        Coordinate::Linear
    }
}

/// `Lifter` in `Phi_2`: each target gets its own annealing stream.
pub struct Phi2Lifter<'a> {
    pub model: &'a DiffusionMapModel,
    pub sa: SAConfig,
    pub seed: u64,
}

impl Phi2Lifter<'_> {
    pub fn lift_result(&self, target: f64) -> Result<LiftResult> {
        let mut rng: SimRng = stream(self.seed, &[target.to_bits()]);
        lift_phi2(target, self.model, &self.sa, &mut rng)
    }
}

impl Lifter for Phi2Lifter<'_> {
    fn lift(&self, target: f64) -> Result<FieldState> {
        Ok(self.lift_result(target)?.require_success()?.state)
    }

    fn tolerance(&self) -> f64 {
        self.sa.phi2_tolerance()
    }
}

/// Drift and diffusion in `Phi_2` at `target`: one lift, then bursts from
/// the lifted state with fresh noise, restricted through the model.
pub fn estimate_mu_d_phi2(
    target: f64,
    model: &DiffusionMapModel,
    params: &ModelParams,
    spec: &NoiseSpec,
    sa: &SAConfig,
    burst: &BurstConfig,
) -> Result<BurstEstimate> {
    let lifter = Phi2Lifter {
        model,
        sa: *sa,
        seed: burst.seed,
    };
    estimate_burst(target, params, spec, &lifter, model, burst, 0)
}

/// Settings for a long run restricted to `Phi_2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Phi2SeriesConfig {
    pub duration: f64,
    pub sample_dt: f64,
    pub transient: f64,
    pub dt: f64,
    /// Only restrict samples whose V could place `Phi_2` in this interval
    /// (and the samples that follow them within `horizon`); others are NaN.
    pub focus: Option<(f64, f64)>,
    pub horizon: f64,
}

impl Default for Phi2SeriesConfig {
    fn default() -> Self {
        Self {
            duration: 100_000.0,
            sample_dt: 0.5,
            transient: 200.0,
            dt: 0.05,
            focus: None,
            horizon: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phi2Series {
    /// NaN where the sample was skipped or could not be restricted.
    pub phi2: Vec<f64>,
    pub v: Vec<f64>,
    pub sample_dt: f64,
    pub restricted: usize,
    pub failures: usize,
}

/// V interval covering the dataset points with `Phi_2` in `[lo, hi]`,
/// widened by half its width plus `0.01` on each side.
pub fn v_band(model: &DiffusionMapModel, lo: f64, hi: f64) -> Option<(f64, f64)> {
    let (vlo, vhi) = (0..model.len())
        .filter(|&i| (lo..=hi).contains(&model.phi[[i, 1]]) && model.v[i].is_finite())
        .map(|i| model.v[i])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if vlo > vhi {
        return None;
    }
    let pad = 0.5 * (vhi - vlo) + 0.01;
    Some((vlo - pad, vhi + pad))
}

/// Simulates from a travelling seed and restricts the samples to `Phi_2`.
pub fn phi2_series(
    model: &DiffusionMapModel,
    params: &ModelParams,
    spec: &NoiseSpec,
    cfg: &Phi2SeriesConfig,
    seed: u64,
) -> Result<Phi2Series> {
    let mut integ = Integrator::new(params, spec, cfg.dt)?;
    let mut rng: SimRng = stream(seed, &[]);
    let mut ns = integ.fresh_noise(&mut rng);
    let mut state = FieldState::travelling_seed(params, true);
    let burn = integ.steps_for("transient", cfg.transient)?;
    integ.advance(&mut state, &mut ns, burn, &mut rng)?;
    let band = match cfg.focus {
        Some((lo, hi)) => Some(v_band(model, lo, hi).ok_or_else(|| {
            Error::InsufficientData(format!("no dataset points with Phi_2 in [{lo}, {hi}]"))
        })?),
        None => None,
    };
    let horizon = (cfg.horizon / cfg.sample_dt).ceil() as usize;
    let obs = Observer::new(params.nodes);
    let mut out = Phi2Series {
        phi2: Vec::new(),
        v: Vec::new(),
        sample_dt: cfg.sample_dt,
        restricted: 0,
        failures: 0,
    };
    // samples left to restrict after the last in-band V
    let mut pending = 0usize;
    integ.run_sampled(
        &mut state,
        &mut ns,
        cfg.duration,
        cfg.sample_dt,
        &mut rng,
        |_, st| {
            let v = obs.coarse_v(st).map(|c| c.value()).unwrap_or(f64::NAN);
            let wanted = match band {
                None => true,
                Some((lo, hi)) => {
                    if (lo..=hi).contains(&v) {
                        pending = horizon + 1;
                    }
                    let w = pending > 0;
                    pending = pending.saturating_sub(1);
                    w
                }
            };
            let phi = if wanted {
                out.restricted += 1;
                match model.restrict_state(st) {
                    Ok(r) => r.phi2(),
                    Err(_) => {
                        out.failures += 1;
                        f64::NAN
                    }
                }
            } else {
                f64::NAN
            };
            out.phi2.push(phi);
            out.v.push(v);
        },
    )?;
    if out.failures > 0 {
        log::warn!(
            "{} of {} samples could not be restricted",
            out.failures,
            out.restricted
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmap::{build_model, Alignment, SigmaPolicy};
    use approx::assert_abs_diff_eq;
    use std::sync::OnceLock;

    fn model() -> &'static (DiffusionMapModel, ModelParams) {
        static M: OnceLock<(DiffusionMapModel, ModelParams)> = OnceLock::new();
        M.get_or_init(|| {
            let p = ModelParams::default();
            let spec = NoiseSpec::white(1e-4);
            let mut integ = Integrator::new(&p, &spec, 0.05).unwrap();
            let mut rng = stream(11, &[]);
            let mut ns = integ.fresh_noise(&mut rng);
            let mut s = FieldState::travelling_seed(&p, true);
            integ.advance(&mut s, &mut ns, 4000, &mut rng).unwrap();
            let mut states = Vec::new();
            integ
                .run_sampled(&mut s, &mut ns, 4000.0, 8.0, &mut rng, |_, st| {
                    states.push(st.clone())
                })
                .unwrap();
            (
                build_model(&states, SigmaPolicy::default(), 3, 4000, Alignment::Node).unwrap(),
                p,
            )
        })
    }

    #[test]
    fn dataset_target_succeeds_immediately() {
        let (m, _) = model();
        let target = m.phi[[37, 1]];
        let r = lift_phi2(target, m, &SAConfig::default(), &mut stream(1, &[])).unwrap();
        assert!(r.success);
        assert_eq!(r.iterations, 0);
        assert!(r.objective < 1e-16);
    }

    #[test]
    fn midpoint_and_interior_targets() {
        let (m, _) = model();
        let sa = SAConfig::default();
        for target in [0.0, -0.5] {
            let r = lift_phi2(target, m, &sa, &mut stream(2, &[])).unwrap();
            assert!(r.success, "{target}: objective {}", r.objective);
            assert!((r.achieved_phi2 - target).abs() <= sa.phi2_tolerance());
            assert_abs_diff_eq!(
                r.objective,
                sa.lambda_obj * (r.achieved_phi2 - target).powi(2),
                epsilon = 1e-15
            );
            // restriction of the returned state matches
            let back = m.restrict_state(&r.state).unwrap().phi2();
            assert!((back - target).abs() <= sa.phi2_tolerance());
            let u = r.snapshot.u();
            assert_abs_diff_eq!(
                u.iter().copied().fold(f64::MIN, f64::max),
                1.0,
                epsilon = 1e-15
            );
            assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn annealing_refines_a_tight_tolerance() {
        let (m, _) = model();
        let sa = SAConfig {
            success_tol: 1e-12,
            ..SAConfig::default()
        };
        let r = lift_phi2(-0.5, m, &sa, &mut stream(3, &[])).unwrap();
        assert!(r.iterations > 0);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.trace.last().unwrap() <= r.trace.first().unwrap());
        if !r.success {
            assert!(r.require_success().is_err());
        }
    }

    #[test]
    fn lifted_state_is_dynamically_plausible() {
        let (m, p) = model();
        let r = lift_phi2(-0.5, m, &SAConfig::default(), &mut stream(4, &[])).unwrap();
        let obs = Observer::new(p.nodes);
        let amp_ref: f64 = (0..m.len())
            .step_by(10)
            .map(|i| obs.peaks(&m.snapshot(i).to_state()).unwrap().0.amplitude)
            .sum::<f64>()
            / (0..m.len()).step_by(10).count() as f64;
        let spec = NoiseSpec::white(1e-4);
        let mut integ = Integrator::new(p, &spec, 0.05).unwrap();
        let mut rng = stream(5, &[]);
        let mut ns = integ.fresh_noise(&mut rng);
        let mut s = r.state.clone();
        integ.advance(&mut s, &mut ns, 40, &mut rng).unwrap();
        let amp = obs.peaks(&s).unwrap().0.amplitude;
        assert!((amp / amp_ref - 1.0).abs() < 0.1, "{amp} vs {amp_ref}");
    }

    #[test]
    fn out_of_range_target_is_rejected() {
        let (m, _) = model();
        let (_, hi) = m.phi2_range();
        assert!(lift_phi2(hi + 1.0, m, &SAConfig::default(), &mut stream(1, &[])).is_err());
    }

    #[test]
    fn invalid_schedule_is_rejected() {
        let bad = SAConfig {
            cooling: 1.0,
            ..SAConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn smooth_field_is_band_limited() {
        let f = smooth_field(64, 1.0, &mut stream(8, &[]));
        let p = crate::lifting_v::fourier_shift(&f, 0.0);
        for (a, b) in f.iter().zip(&p) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        // no energy above mode 7
        let c: f64 = f
            .iter()
            .enumerate()
            .map(|(i, x)| x * (2.0 * PI * 9.0 * i as f64 / 64.0).cos())
            .sum();
        assert!(c.abs() < 1e-9);
    }

    #[test]
    fn focused_series_matches_full_series_where_restricted() {
        let (m, p) = model();
        let spec = NoiseSpec::white(1e-4);
        let base = Phi2SeriesConfig {
            duration: 400.0,
            ..Phi2SeriesConfig::default()
        };
        let full = phi2_series(m, p, &spec, &base, 9).unwrap();
        let focused = phi2_series(
            m,
            p,
            &spec,
            &Phi2SeriesConfig {
                focus: Some((-0.6, -0.4)),
                ..base
            },
            9,
        )
        .unwrap();
        assert_eq!(full.restricted, full.phi2.len());
        assert!(focused.restricted < full.restricted);
        let horizon = 8;
        for t in 0..full.phi2.len() {
            if focused.phi2[t].is_finite() {
                assert_eq!(focused.phi2[t], full.phi2[t]);
            }
            // every in-bin sample and its lag partners are restricted
            if (full.phi2[t] + 0.5).abs() <= 0.1 {
                for l in 0..=horizon.min(full.phi2.len() - 1 - t) {
                    assert!(focused.phi2[t + l].is_finite(), "t = {t}, lag {l}");
                }
            }
        }
    }
}
