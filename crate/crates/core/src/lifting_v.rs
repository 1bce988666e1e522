//! Lifting for the coarse variable V: full states with a prescribed phase
//! lag between the activity and adaptation peaks.
//!
//! A converged deterministic travelling bump serves as the template. The
//! activity profile is kept and the adaptation profile is translated by a
//! (generally fractional) amount using trigonometric interpolation, which
//! moves its first-harmonic phase exactly.

use std::cell::RefCell;
use std::f64::consts::PI;

use rand::SeedableRng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field_sim::{FieldState, Integrator, ModelParams, NoiseSpec, NoiseState};
use crate::langevin::Lifter;
use crate::observables::{unwrap_angles, wrap_angle, Observer};
use crate::rng::SimRng;

/// Tolerance of the lift-restrict identity.
pub const LIFT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Minimum deterministic integration time before convergence is checked.
    pub t_ref: f64,
    /// Give up after this much integration time.
    pub max_time: f64,
    pub dt: f64,
    /// Relative tolerance on the speed over two consecutive check windows.
    pub speed_rtol: f64,
    /// Speeds below this (rad per time unit) count as a stationary bump.
    pub stationary_speed: f64,
    pub check_window: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            t_ref: 500.0,
            max_time: 20_000.0,
            dt: 0.05,
            speed_rtol: 0.01,
            stationary_speed: 1e-5,
            check_window: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBump {
    pub state: FieldState,
    pub v_ref: f64,
    /// Peak speed of the converged bump (rad per time unit).
    pub speed: f64,
    /// First-harmonic amplitude of the activity profile.
    pub amplitude: f64,
    pub params: ModelParams,
}

impl ReferenceBump {
    /// Wraps an existing converged state.
    pub fn from_state(state: FieldState, params: &ModelParams) -> Result<Self> {
        state.check_nodes(params.nodes)?;
        let obs = Observer::new(params.nodes);
        let (pu, pa) = obs.peaks(&state)?;
        Ok(Self {
            v_ref: wrap_angle(pu.angle - pa.angle),
            amplitude: pu.amplitude,
            speed: f64::NAN,
            state,
            params: params.clone(),
        })
    }

    pub fn reflected(&self) -> Self {
        Self {
            state: self.state.reflected(),
            v_ref: -self.v_ref,
            speed: -self.speed,
            amplitude: self.amplitude,
            params: self.params.clone(),
        }
    }
}

/// Runs the noise-free system from a rightward travelling seed until the
/// bump speed is constant, and keeps the final profiles.
pub fn make_reference(params: &ModelParams, cfg: &ReferenceConfig) -> Result<ReferenceBump> {
    let spec = NoiseSpec::white(0.0);
    let mut integ = Integrator::new(params, &spec, cfg.dt)?;
    let obs = Observer::new(params.nodes);
    let mut state = FieldState::travelling_seed(params, true);
    // noise-free: the generator is never drawn from
    let mut rng = SimRng::seed_from_u64(0);
    let mut ns = NoiseState::new(&spec, params.nodes, &mut rng);

    let no_bump = |e: Error| match e {
        Error::DegenerateProfile { .. } => Error::ReferenceNotConverged(format!("no bump: {e}")),
        other => other,
    };

    let burn = integ.steps_for("t_ref", cfg.t_ref)?;
    let window = integ.steps_for("check_window", cfg.check_window)?;
    integ.advance(&mut state, &mut ns, burn, &mut rng)?;
    let mut t = cfg.t_ref;
    loop {
        let mut peaks = vec![obs.peaks(&state).map_err(no_bump)?.0.angle];
        for _ in 0..2 {
            integ.advance(&mut state, &mut ns, window, &mut rng)?;
            peaks.push(obs.peaks(&state).map_err(no_bump)?.0.angle);
        }
        t += 2.0 * cfg.check_window;
        let path = unwrap_angles(&peaks);
        let s1 = (path[1] - path[0]) / cfg.check_window;
        let s2 = (path[2] - path[1]) / cfg.check_window;
        let stationary = s1.abs().max(s2.abs()) < cfg.stationary_speed;
        let steady = (s1 - s2).abs() <= cfg.speed_rtol * s1.abs().max(s2.abs());
        if stationary || steady {
            let mut r = ReferenceBump::from_state(state, params).map_err(no_bump)?;
            r.speed = s2;
            return Ok(r);
        }
        if t >= cfg.max_time {
            return Err(Error::ReferenceNotConverged(format!(
                "speed still drifting after {t} time units ({s1:e} vs {s2:e})"
            )));
        }
    }
}

/// Translates a periodic profile by `delta` radians, `out(x) = p(x - delta)`,
/// using trigonometric interpolation (exact for integer-node shifts and
/// band-limited profiles). For even lengths the Nyquist term is kept as a
/// pure cosine.
pub fn fourier_shift(p: &[f64], delta: f64) -> Vec<f64> {
    let m = p.len();
    if m == 0 {
        return Vec::new();
    }
    thread_local! {
        static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    }
    let (fwd, inv) = PLANNER.with(|pl| {
        let mut pl = pl.borrow_mut();
        (pl.plan_fft_forward(m), pl.plan_fft_inverse(m))
    });
    let mut buf: Vec<Complex<f64>> = p.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fwd.process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        // signed frequency; the Nyquist bin takes either sign since only
        // the real part is kept
        let f = if k <= m / 2 {
            k as f64
        } else {
            k as f64 - m as f64
        };
        *c *= Complex::from_polar(1.0 / m as f64, -f * delta);
    }
    inv.process(&mut buf);
    buf.iter().map(|c| c.re).collect()
}

/// State whose coarse V equals `v0`: the reference activity with the
/// reference adaptation translated by `wrap(v_ref - v0)`.
pub fn lift_v(v0: f64, reference: &ReferenceBump) -> Result<FieldState> {
    if !(v0.abs() < PI / 2.0) {
        return Err(Error::param("v0", format!("need |v0| < pi/2, got {v0}")));
    }
    let delta = wrap_angle(reference.v_ref - v0);
    let state = FieldState {
        u: reference.state.u.clone(),
        a: if delta == 0.0 {
            reference.state.a.clone()
        } else {
            fourier_shift(&reference.state.a, delta)
        },
    };
    let achieved = Observer::new(state.nodes()).coarse_v(&state)?.value();
    if wrap_angle(achieved - v0).abs() > LIFT_TOL {
        return Err(Error::LiftFailed(format!(
            "lifted state has V = {achieved}, wanted {v0}"
        )));
    }
    Ok(state)
}

impl Lifter for ReferenceBump {
    fn lift(&self, target: f64) -> Result<FieldState> {
        lift_v(target, self)
    }

    fn tolerance(&self) -> f64 {
        LIFT_TOL
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_sim::shift_profile;
    use crate::observables::coarse_v;
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn reference() -> &'static ReferenceBump {
        static REF: OnceLock<ReferenceBump> = OnceLock::new();
        REF.get_or_init(|| {
            make_reference(&ModelParams::default(), &ReferenceConfig::default()).unwrap()
        })
    }

    #[test]
    fn integer_fourier_shift_matches_circular_shift() {
        for m in [16usize, 17] {
            let p: Vec<f64> = (0..m).map(|j| ((j * j) % 7) as f64 - 1.5).collect();
            for k in [-3isize, 1, 5] {
                let out = fourier_shift(&p, 2.0 * PI * k as f64 / m as f64);
                let expect = shift_profile(&p, k);
                for j in 0..m {
                    assert_abs_diff_eq!(out[j], expect[j], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn fractional_shift_of_band_limited_profile_is_exact() {
        let m = 64;
        let x: Vec<f64> = (0..m).map(|j| 2.0 * PI * j as f64 / m as f64).collect();
        let p: Vec<f64> = x
            .iter()
            .map(|t| 1.0 + t.cos() + 0.3 * (3.0 * t).sin())
            .collect();
        let d = 0.123;
        let out = fourier_shift(&p, d);
        for j in 0..m {
            let t = x[j] - d;
            assert_abs_diff_eq!(
                out[j],
                1.0 + t.cos() + 0.3 * (3.0 * t).sin(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn reference_travels_with_positive_v() {
        let r = reference();
        assert!(r.v_ref > 0.05, "v_ref = {}", r.v_ref);
        assert!(r.speed > 0.0);
        assert_abs_diff_eq!(
            coarse_v(&r.state).unwrap().value(),
            r.v_ref,
            epsilon = 1e-12
        );
    }

    #[test]
    fn reflected_reference_has_opposite_v() {
        let r = reference().reflected();
        assert_abs_diff_eq!(
            coarse_v(&r.state).unwrap().value(),
            -reference().v_ref,
            epsilon = 1e-12
        );
    }

    #[test]
    fn weak_adaptation_gives_stationary_reference() {
        let p = ModelParams::default().with_adaptation(0.10);
        let r = make_reference(&p, &ReferenceConfig::default()).unwrap();
        assert!(r.v_ref.abs() < 1e-4, "v_ref = {}", r.v_ref);
    }

    #[test]
    fn lifting_at_reference_value_is_identity() {
        let r = reference();
        assert_eq!(lift_v(r.v_ref, r).unwrap(), r.state);
    }

    #[test]
    fn lifting_to_zero_aligns_peaks() {
        let r = reference();
        let s = lift_v(0.0, r).unwrap();
        let obs = Observer::new(s.nodes());
        let (pu, pa) = obs.peaks(&s).unwrap();
        assert_abs_diff_eq!(wrap_angle(pu.angle - pa.angle), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            coarse_v(&lift_v(0.15, r).unwrap()).unwrap().value(),
            0.15,
            epsilon = LIFT_TOL
        );
    }

    #[test]
    fn lift_rejects_large_targets() {
        assert!(lift_v(2.0, reference()).is_err());
    }

    #[test]
    fn lifted_state_heals_to_reference_amplitude() {
        let r = reference();
        let p = &r.params;
        let spec = NoiseSpec::white(1e-4);
        let obs = Observer::new(p.nodes);
        for v0 in [-0.2, 0.0, 0.1] {
            let mut s = lift_v(v0, r).unwrap();
            let mut integ = Integrator::new(p, &spec, 0.05).unwrap();
            let mut rng = stream(3, &[]);
            let mut ns = integ.fresh_noise(&mut rng);
            integ.advance(&mut s, &mut ns, 40, &mut rng).unwrap();
            let amp = obs.peaks(&s).unwrap().0.amplitude;
            assert!(
                (amp / r.amplitude - 1.0).abs() < 0.05,
                "v0 = {v0}: {amp} vs {}",
                r.amplitude
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn lift_restrict_identity(v0 in -0.3f64..0.3) {
            let s = lift_v(v0, reference()).unwrap();
            prop_assert!((coarse_v(&s).unwrap().value() - v0).abs() <= LIFT_TOL);
        }
    }
}
