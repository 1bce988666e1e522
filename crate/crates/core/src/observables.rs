//! Peak positions and the coarse variable `V = c_u - c_a`.
//!
//! A profile's peak is the phase of its first circular harmonic, i.e. the
//! shift `c` for which `sum_i sin(x_i - c) w_i = 0` with a positive cosine
//! projection.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field_sim::{FieldState, Grid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakPhase {
    /// Peak location in `(-pi, pi]`.
    pub angle: f64,
    /// Magnitude of the first circular harmonic.
    pub amplitude: f64,
}

/// Wrapped phase difference between the peaks of `u` and `a`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct CoarseV(pub f64);

impl CoarseV {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Wraps `theta` into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut r = theta.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    // rem_euclid can return exactly 2*pi for tiny negative inputs
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

pub fn amplitude_tolerance(nodes: usize) -> f64 {
    1e-8 * nodes as f64
}

pub fn peak_phase(profile: &[f64], grid: &Grid) -> Result<PeakPhase> {
    if profile.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            got: profile.len(),
        });
    }
    let (mut s, mut c) = (0.0, 0.0);
    for i in 0..profile.len() {
        s += grid.sin[i] * profile[i];
        c += grid.cos[i] * profile[i];
    }
    let amplitude = s.hypot(c);
    let tolerance = amplitude_tolerance(profile.len());
    if !(amplitude >= tolerance) {
        return Err(Error::DegenerateProfile {
            amplitude,
            tolerance,
        });
    }
    Ok(PeakPhase {
        angle: wrap_angle(s.atan2(c)),
        amplitude,
    })
}

/// Reusable evaluator holding the grid tables.
#[derive(Debug, Clone)]
pub struct Observer {
    grid: Grid,
}

impl Observer {
    pub fn new(nodes: usize) -> Self {
        Self {
            grid: Grid::new(nodes),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn peaks(&self, state: &FieldState) -> Result<(PeakPhase, PeakPhase)> {
        Ok((
            peak_phase(&state.u, &self.grid)?,
            peak_phase(&state.a, &self.grid)?,
        ))
    }

    pub fn coarse_v(&self, state: &FieldState) -> Result<CoarseV> {
        let (pu, pa) = self.peaks(state)?;
        Ok(CoarseV(wrap_angle(pu.angle - pa.angle)))
    }
}

pub fn coarse_v(state: &FieldState) -> Result<CoarseV> {
    if state.u.len() != state.a.len() {
        return Err(Error::DimensionMismatch {
            expected: state.u.len(),
            got: state.a.len(),
        });
    }
    Observer::new(state.nodes()).coarse_v(state)
}

/// Unwraps a sequence of circular angles into a continuous path.
pub fn unwrap_angles(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len());
    let mut acc = 0.0;
    let mut prev: Option<f64> = None;
    for &a in angles {
        match prev {
            None => acc = a,
            Some(p) => acc += wrap_angle(a - p),
        }
        out.push(acc);
        prev = Some(a);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field_sim::shift_profile;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(0.0), 0.0);
        assert_abs_diff_eq!(wrap_angle(PI + 0.1), -PI + 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-7.0 * PI), PI, epsilon = 1e-12);
        assert_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-12);
    }

    #[test]
    fn cosine_profile_peak() {
        let g = Grid::new(100);
        let w: Vec<f64> = g.x.iter().map(|x| (x - 0.3).cos()).collect();
        let p = peak_phase(&w, &g).unwrap();
        assert_abs_diff_eq!(p.angle, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(p.amplitude, 50.0, epsilon = 1e-10);
    }

    #[test]
    fn constant_offset_is_ignored() {
        let g = Grid::new(100);
        let w: Vec<f64> = g.x.iter().map(|x| 2.0 + (x + PI / 2.0).cos()).collect();
        assert_abs_diff_eq!(
            peak_phase(&w, &g).unwrap().angle,
            -PI / 2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn flat_profile_is_degenerate() {
        let g = Grid::new(100);
        assert!(matches!(
            peak_phase(&vec![1.0; 100], &g),
            Err(Error::DegenerateProfile { .. })
        ));
    }

    #[test]
    fn shifted_adaptation_gives_grid_multiple() {
        let m = 100;
        let g = Grid::new(m);
        let u: Vec<f64> = g.cos.iter().map(|c| c.max(0.0)).collect();
        for k in [-3isize, 1, 5] {
            let a = shift_profile(&u, -k);
            let s = FieldState::new(u.clone(), a).unwrap();
            let v = coarse_v(&s).unwrap().value();
            assert_abs_diff_eq!(v, 2.0 * PI * k as f64 / m as f64, epsilon = 1e-12);
        }
        let s = FieldState::new(u.clone(), u).unwrap();
        assert_eq!(coarse_v(&s).unwrap().value(), 0.0);
    }

    #[test]
    fn wrap_of_peak_difference() {
        assert_abs_diff_eq!(wrap_angle(3.0 - -3.0), 6.0 - 2.0 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(6.0 - 2.0 * PI, -0.283_185, epsilon = 1e-6);
        let g = Grid::new(64);
        let u: Vec<f64> = g.x.iter().map(|x| (x - 3.0).cos()).collect();
        let a: Vec<f64> = g.x.iter().map(|x| (x + 3.0).cos()).collect();
        let v = coarse_v(&FieldState::new(u, a).unwrap()).unwrap().value();
        assert_abs_diff_eq!(v, 6.0 - 2.0 * PI, epsilon = 1e-12);
    }

    #[test]
    fn unwrap_follows_continuous_path() {
        let path: Vec<f64> = (0..50).map(|k| 0.3 * k as f64).collect();
        let wrapped: Vec<f64> = path.iter().map(|&t| wrap_angle(t)).collect();
        for (a, b) in unwrap_angles(&wrapped).iter().zip(path.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    proptest! {
        #[test]
        fn wrap_is_periodic_and_in_range(t in -100.0f64..100.0) {
            let w = wrap_angle(t);
            prop_assert!(w > -PI && w <= PI);
            prop_assert!((wrap_angle(t + 2.0 * PI) - w).abs() < 1e-9
                || (wrap_angle(t + 2.0 * PI) - w).abs() > 2.0 * PI - 1e-9);
        }

        #[test]
        fn peak_phase_is_shift_covariant(c in -3.0f64..3.0, k in -50isize..50, width in 0.3f64..1.5) {
            let m = 100;
            let g = Grid::new(m);
            let w: Vec<f64> = g.x.iter().map(|x| (-(wrap_angle(x - c) / width).powi(2)).exp()).collect();
            let p0 = peak_phase(&w, &g).unwrap().angle;
            let p1 = peak_phase(&shift_profile(&w, k), &g).unwrap().angle;
            let expect = wrap_angle(p0 + 2.0 * PI * k as f64 / m as f64);
            prop_assert!(wrap_angle(p1 - expect).abs() < 1e-10);
        }

        #[test]
        fn v_invariant_under_joint_shift(k in -50isize..50, lag in -5isize..5) {
            let m = 100;
            let g = Grid::new(m);
            let u: Vec<f64> = g.cos.iter().map(|c| c.max(0.0)).collect();
            let a = shift_profile(&u, lag).iter().map(|v| 0.17 * v).collect();
            let s = FieldState::new(u, a).unwrap();
            let v0 = coarse_v(&s).unwrap().value();
            let v1 = coarse_v(&s.shifted(k)).unwrap().value();
            prop_assert!((v0 - v1).abs() < 1e-10);
        }
    }
}
