//! Spatially discretized stochastic neural field with linear adaptation.
//!
//! The state is a pair of profiles `(u, a)` on a periodic grid of `M` nodes,
//! `x_i = -pi + 2*pi*i/M`. Activity relaxes towards the coupled firing-rate
//! input; adaptation follows activity with time constant `tau_a`:
//!
//! ```text
//! du_i/dt  = -u_i + (2 pi / M) sum_j J_ij f(I + u_j - a_k) + noise_i
//! da_i/dt  = (A u_i - a_i) / tau_a
//! J_ij     = J0 + J1 cos(2 pi |i - j| / M)
//! f(x)     = (1 + tanh(gain x)) / 2
//! ```
//!
//! with `k = j` or `k = i` depending on [`KernelArgMode`].

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which node's adaptation enters the firing-rate argument inside the coupling sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelArgMode {
    /// `f(I + u_j - a_j)`: the presynaptic node's own adaptation.
    #[default]
    AdaptationAtSource,
    /// `f(I + u_j - a_i)`: the postsynaptic node's adaptation.
    AdaptationAtTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Number of grid nodes `M`.
    #[serde(alias = "M")]
    pub nodes: usize,
    /// Adaptation strength `A`.
    #[serde(alias = "A")]
    pub adaptation: f64,
    /// Background current `I`.
    #[serde(alias = "I")]
    pub current: f64,
    /// Adaptation time constant.
    #[serde(alias = "tau")]
    pub tau_a: f64,
    pub j0: f64,
    pub j1: f64,
    /// Steepness of the firing-rate sigmoid.
    pub gain: f64,
    pub kernel_arg_mode: KernelArgMode,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            nodes: 100,
            adaptation: 0.17,
            current: -0.1,
            tau_a: 5.0,
            j0: 0.05,
            j1: 0.24,
            gain: 10.0,
            kernel_arg_mode: KernelArgMode::AdaptationAtSource,
        }
    }
}

impl ModelParams {
    pub fn with_adaptation(mut self, adaptation: f64) -> Self {
        self.adaptation = adaptation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < 4 {
            return Err(Error::param(
                "nodes",
                format!("need at least 4, got {}", self.nodes),
            ));
        }
        if !(self.tau_a > 0.0 && self.tau_a.is_finite()) {
            return Err(Error::param(
                "tau_a",
                format!("must be positive, got {}", self.tau_a),
            ));
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(Error::param(
                "gain",
                format!("must be positive, got {}", self.gain),
            ));
        }
        for (name, v) in [
            ("adaptation", self.adaptation),
            ("current", self.current),
            ("j0", self.j0),
            ("j1", self.j1),
        ] {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        Ok(())
    }

    /// Coupling kernel `J(x) = J0 + J1 cos x`.
    pub fn kernel(&self, x: f64) -> f64 {
        self.j0 + self.j1 * x.cos()
    }

    /// Firing rate `(1 + tanh(gain x)) / 2`.
    pub fn rate(&self, x: f64) -> f64 {
        0.5 * (1.0 + (self.gain * x).tanh())
    }
}

/// Firing rate with the default steepness of 10.
pub fn firing_rate(x: f64) -> f64 {
    0.5 * (1.0 + (10.0 * x).tanh())
}

/// Dense `M x M` coupling matrix, row-major.
pub fn coupling_matrix(params: &ModelParams) -> Vec<f64> {
    let m = params.nodes;
    let mut j = vec![0.0; m * m];
    for r in 0..m {
        for c in 0..m {
            let d = r.abs_diff(c) as f64;
            j[r * m + c] = params.kernel(2.0 * PI * d / m as f64);
        }
    }
    j
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    /// Independent white noise per node, `<xi_i(t) xi_j(s)> = 2 eta delta_ij delta(t - s)`.
    White { eta: f64 },
    /// Independent Ornstein-Uhlenbeck forcing per node with stationary
    /// variance `2 epsilon` and correlation time `lambda`.
    Coloured { epsilon: f64, lambda: f64 },
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::White { eta: 1e-4 }
    }
}

impl NoiseSpec {
    pub fn white(eta: f64) -> Self {
        NoiseSpec::White { eta }
    }

    pub fn coloured(epsilon: f64, lambda: f64) -> Self {
        NoiseSpec::Coloured { epsilon, lambda }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::White { eta } => {
                if !(eta >= 0.0 && eta.is_finite()) {
                    return Err(Error::param(
                        "noise.eta",
                        format!("must be >= 0, got {eta}"),
                    ));
                }
            }
            NoiseSpec::Coloured { epsilon, lambda } => {
                if !(epsilon >= 0.0 && epsilon.is_finite()) {
                    return Err(Error::param(
                        "noise.epsilon",
                        format!("must be >= 0, got {epsilon}"),
                    ));
                }
                if !(lambda > 0.0 && lambda.is_finite()) {
                    return Err(Error::param(
                        "noise.lambda",
                        format!("must be positive, got {lambda}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Noise of the same kind with its intensity replaced.
    pub fn with_intensity(self, intensity: f64) -> Self {
        match self {
            NoiseSpec::White { .. } => NoiseSpec::White { eta: intensity },
            NoiseSpec::Coloured { lambda, .. } => NoiseSpec::Coloured {
                epsilon: intensity,
                lambda,
            },
        }
    }
}

/// Node positions and their first-harmonic tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub x: Vec<f64>,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl Grid {
    pub fn new(nodes: usize) -> Self {
        let x: Vec<f64> = (0..nodes)
            .map(|i| -PI + 2.0 * PI * i as f64 / nodes as f64)
            .collect();
        let cos = x.iter().map(|v| v.cos()).collect();
        let sin = x.iter().map(|v| v.sin()).collect();
        Self { x, cos, sin }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub u: Vec<f64>,
    pub a: Vec<f64>,
}

impl FieldState {
    pub fn new(u: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        if u.len() != a.len() {
            return Err(Error::DimensionMismatch {
                expected: u.len(),
                got: a.len(),
            });
        }
        Ok(Self { u, a })
    }

    pub fn zeros(nodes: usize) -> Self {
        Self {
            u: vec![0.0; nodes],
            a: vec![0.0; nodes],
        }
    }

    /// Travelling-bump seed: `u = max(cos x, 0)`, `a = A u`.
    pub fn bump_seed(params: &ModelParams) -> Self {
        let grid = Grid::new(params.nodes);
        let u: Vec<f64> = grid.cos.iter().map(|c| c.max(0.0)).collect();
        let a = u.iter().map(|v| params.adaptation * v).collect();
        Self { u, a }
    }

    /// Bump seed with the adaptation lagging one node behind the activity,
    /// which selects the direction of travel (`rightward` = increasing x).
    pub fn travelling_seed(params: &ModelParams, rightward: bool) -> Self {
        let mut s = Self::bump_seed(params);
        s.a = shift_profile(&s.a, if rightward { -1 } else { 1 });
        s
    }

    pub fn nodes(&self) -> usize {
        self.u.len()
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.a.iter()).all(|v| v.is_finite())
    }

    /// Circular shift by `k` nodes: `out[(i + k) mod M] = self[i]`.
    pub fn shifted(&self, k: isize) -> Self {
        Self {
            u: shift_profile(&self.u, k),
            a: shift_profile(&self.a, k),
        }
    }

    /// Mirror image under `x -> -x`.
    pub fn reflected(&self) -> Self {
        Self {
            u: reflect_profile(&self.u),
            a: reflect_profile(&self.a),
        }
    }

    pub fn check_nodes(&self, nodes: usize) -> Result<()> {
        for len in [self.u.len(), self.a.len()] {
            if len != nodes {
                return Err(Error::DimensionMismatch {
                    expected: nodes,
                    got: len,
                });
            }
        }
        Ok(())
    }
}

pub fn shift_profile(p: &[f64], k: isize) -> Vec<f64> {
    let m = p.len();
    if m == 0 {
        return Vec::new();
    }
    let k = k.rem_euclid(m as isize) as usize;
    let mut out = vec![0.0; m];
    for (i, &v) in p.iter().enumerate() {
        out[(i + k) % m] = v;
    }
    out
}

/// `x_i -> -x_i` maps node `i` to node `(M - i) mod M` on the grid.
pub fn reflect_profile(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    (0..m).map(|i| p[(m - i) % m]).collect()
}

/// Right-hand side of the deterministic part of the field equations.
pub fn drift_field(state: &FieldState, params: &ModelParams) -> Result<(Vec<f64>, Vec<f64>)> {
    params.validate()?;
    state.check_nodes(params.nodes)?;
    let kernel = CouplingOperator::new(params);
    let mut du = vec![0.0; params.nodes];
    let mut da = vec![0.0; params.nodes];
    kernel.evaluate(params, state, &mut du, &mut da);
    Ok((du, da))
}

/// Evaluates the coupling sum. For the source-adaptation reading the cosine
/// kernel separates into three first-harmonic sums, which is exact and O(M);
/// the target-adaptation reading needs the dense matrix.
#[derive(Debug, Clone)]
struct CouplingOperator {
    grid: Grid,
    dense: Option<Vec<f64>>,
    rates: Vec<f64>,
}

impl CouplingOperator {
    fn new(params: &ModelParams) -> Self {
        let dense = match params.kernel_arg_mode {
            KernelArgMode::AdaptationAtSource => None,
            KernelArgMode::AdaptationAtTarget => Some(coupling_matrix(params)),
        };
        Self {
            grid: Grid::new(params.nodes),
            dense,
            rates: vec![0.0; params.nodes],
        }
    }

    fn evaluate(&self, params: &ModelParams, s: &FieldState, du: &mut [f64], da: &mut [f64]) {
        let m = params.nodes;
        let h = 2.0 * PI / m as f64;
        let g = &self.grid;
        match &self.dense {
            None => {
                let (mut s0, mut sc, mut ss) = (0.0, 0.0, 0.0);
                for j in 0..m {
                    let f = params.rate(params.current + s.u[j] - s.a[j]);
                    s0 += f;
                    sc += g.cos[j] * f;
                    ss += g.sin[j] * f;
                }
                let (c0, cc, cs) = (h * params.j0 * s0, h * params.j1 * sc, h * params.j1 * ss);
                for i in 0..m {
                    du[i] = -s.u[i] + c0 + cc * g.cos[i] + cs * g.sin[i];
                }
            }
            Some(jm) => {
                for i in 0..m {
                    let row = &jm[i * m..(i + 1) * m];
                    let mut acc = 0.0;
                    for j in 0..m {
                        acc += row[j] * params.rate(params.current + s.u[j] - s.a[i]);
                    }
                    du[i] = -s.u[i] + h * acc;
                }
            }
        }
        for i in 0..m {
            da[i] = (params.adaptation * s.u[i] - s.a[i]) / params.tau_a;
        }
    }

    /// Source-mode path writing into the cached rate buffer; used by the
    /// integrator so steady stepping allocates nothing.
    fn evaluate_cached(
        &mut self,
        params: &ModelParams,
        s: &FieldState,
        du: &mut [f64],
        da: &mut [f64],
    ) {
        if self.dense.is_some() {
            self.evaluate(params, s, du, da);
            return;
        }
        let m = params.nodes;
        let h = 2.0 * PI / m as f64;
        for j in 0..m {
            self.rates[j] = params.rate(params.current + s.u[j] - s.a[j]);
        }
        let g = &self.grid;
        let (mut s0, mut sc, mut ss) = (0.0, 0.0, 0.0);
        for j in 0..m {
            let f = self.rates[j];
            s0 += f;
            sc += g.cos[j] * f;
            ss += g.sin[j] * f;
        }
        let (c0, cc, cs) = (h * params.j0 * s0, h * params.j1 * sc, h * params.j1 * ss);
        for i in 0..m {
            du[i] = -s.u[i] + c0 + cc * g.cos[i] + cs * g.sin[i];
            da[i] = (params.adaptation * s.u[i] - s.a[i]) / params.tau_a;
        }
    }
}

/// Per-node stochastic forcing. For white noise the values are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseState {
    pub values: Vec<f64>,
}

impl NoiseState {
    /// Fresh state: zeros for white noise, stationary `N(0, 2 epsilon)` draws
    /// for coloured noise.
    pub fn new<R: Rng + ?Sized>(spec: &NoiseSpec, nodes: usize, rng: &mut R) -> Self {
        let values = match *spec {
            NoiseSpec::White { .. } => vec![0.0; nodes],
            NoiseSpec::Coloured { epsilon, .. } => {
                let sd = (2.0 * epsilon).sqrt();
                (0..nodes)
                    .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
        };
        Self { values }
    }

    /// Advances the forcing over `dt` and writes the additive increment to
    /// the activity equation into `increment`.
    ///
    /// White: `sqrt(2 eta dt) N(0,1)`. Coloured: exact OU transition
    /// `v' = v e^{-dt/lambda} + sqrt(2 eps (1 - e^{-2 dt/lambda})) N(0,1)`,
    /// increment `v' dt`.
    pub fn advance<R: Rng + ?Sized>(
        &mut self,
        spec: &NoiseSpec,
        dt: f64,
        rng: &mut R,
        increment: &mut [f64],
    ) {
        match *spec {
            NoiseSpec::White { eta } => {
                if eta == 0.0 {
                    increment.iter_mut().for_each(|v| *v = 0.0);
                    return;
                }
                let sd = (2.0 * eta * dt).sqrt();
                for v in increment.iter_mut() {
                    *v = sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
            NoiseSpec::Coloured { epsilon, lambda } => {
                let decay = (-dt / lambda).exp();
                let sd = (2.0 * epsilon * (1.0 - decay * decay)).sqrt();
                for (v, inc) in self.values.iter_mut().zip(increment.iter_mut()) {
                    *v = *v * decay + sd * rng.sample::<f64, _>(StandardNormal);
                    *inc = *v * dt;
                }
            }
        }
    }
}

/// One noise update, returning the forcing increment and the advanced state.
pub fn noise_step<R: Rng + ?Sized>(
    ns: &NoiseState,
    spec: &NoiseSpec,
    dt: f64,
    rng: &mut R,
) -> (Vec<f64>, NoiseState) {
    let mut next = ns.clone();
    let mut inc = vec![0.0; ns.values.len()];
    next.advance(spec, dt, rng, &mut inc);
    (inc, next)
}

/// Euler-Maruyama stepper with reusable scratch buffers.
#[derive(Debug, Clone)]
pub struct Integrator {
    params: ModelParams,
    noise: NoiseSpec,
    dt: f64,
    op: CouplingOperator,
    du: Vec<f64>,
    da: Vec<f64>,
    inc: Vec<f64>,
    elapsed: f64,
}

impl Integrator {
    pub fn new(params: &ModelParams, noise: &NoiseSpec, dt: f64) -> Result<Self> {
        params.validate()?;
        noise.validate()?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive, got {dt}")));
        }
        let m = params.nodes;
        Ok(Self {
            params: params.clone(),
            noise: *noise,
            dt,
            op: CouplingOperator::new(params),
            du: vec![0.0; m],
            da: vec![0.0; m],
            inc: vec![0.0; m],
            elapsed: 0.0,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn fresh_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> NoiseState {
        NoiseState::new(&self.noise, self.params.nodes, rng)
    }

    /// Advances `state` and `ns` by one step in place.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        state: &mut FieldState,
        ns: &mut NoiseState,
        rng: &mut R,
    ) -> Result<()> {
        let dt = self.dt;
        self.op
            .evaluate_cached(&self.params, state, &mut self.du, &mut self.da);
        ns.advance(&self.noise, dt, rng, &mut self.inc);
        let mut check = 0.0;
        for i in 0..state.u.len() {
            state.u[i] += dt * self.du[i] + self.inc[i];
            state.a[i] += dt * self.da[i];
            check += state.u[i] + state.a[i];
        }
        self.elapsed += dt;
        if check.is_finite() {
            Ok(())
        } else {
            Err(Error::IntegrationBlowup { time: self.elapsed })
        }
    }

    pub fn advance<R: Rng + ?Sized>(
        &mut self,
        state: &mut FieldState,
        ns: &mut NoiseState,
        steps: usize,
        rng: &mut R,
    ) -> Result<()> {
        for _ in 0..steps {
            self.step(state, ns, rng)?;
        }
        Ok(())
    }

    /// Number of whole steps spanning `span`; errors unless `span` is an
    /// integer multiple of `dt` (to relative precision 1e-9).
    pub fn steps_for(&self, name: &'static str, span: f64) -> Result<usize> {
        steps_for(name, span, self.dt)
    }

    /// Integrates for `duration`, calling `observe(t, state)` at `t = 0` and
    /// every `sample_interval` thereafter.
    pub fn run_sampled<R, F>(
        &mut self,
        state: &mut FieldState,
        ns: &mut NoiseState,
        duration: f64,
        sample_interval: f64,
        rng: &mut R,
        mut observe: F,
    ) -> Result<()>
    where
        R: Rng + ?Sized,
        F: FnMut(f64, &FieldState),
    {
        let total = steps_for("duration", duration, self.dt)?;
        observe(0.0, state);
        if total == 0 {
            return Ok(());
        }
        let per_sample = steps_for("sample_interval", sample_interval, self.dt)?;
        if per_sample == 0 {
            return Err(Error::param("sample_interval", "must be at least dt"));
        }
        let mut done = 0;
        while done < total {
            let n = per_sample.min(total - done);
            self.advance(state, ns, n, rng)?;
            done += n;
            if n == per_sample {
                observe(done as f64 * self.dt, state);
            }
        }
        Ok(())
    }
}

pub(crate) fn steps_for(name: &'static str, span: f64, dt: f64) -> Result<usize> {
    if !(span >= 0.0 && span.is_finite()) {
        return Err(Error::param(name, format!("must be >= 0, got {span}")));
    }
    let n = (span / dt).round();
    if (n * dt - span).abs() > 1e-9 * span.max(dt) {
        return Err(Error::param(
            name,
            format!("{span} is not a whole number of steps of dt = {dt}"),
        ));
    }
    Ok(n as usize)
}

/// Single Euler-Maruyama step returning new state and noise state.
pub fn step_em<R: Rng + ?Sized>(
    state: &FieldState,
    ns: &NoiseState,
    params: &ModelParams,
    spec: &NoiseSpec,
    dt: f64,
    rng: &mut R,
) -> Result<(FieldState, NoiseState)> {
    state.check_nodes(params.nodes)?;
    let mut integ = Integrator::new(params, spec, dt)?;
    let mut s = state.clone();
    let mut n = ns.clone();
    integ.step(&mut s, &mut n, rng)?;
    Ok((s, n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub snapshots: Vec<FieldState>,
    /// Optional scalar series aligned with `times` (typically the coarse V).
    pub observable: Option<Vec<f64>>,
    pub final_state: FieldState,
    pub final_noise: NoiseState,
}

/// Integrates from `initial` and records snapshots every `sample_interval`.
/// The coloured-noise forcing is drawn from its stationary law at t = 0.
#[allow(clippy::too_many_arguments)]
pub fn simulate<R: Rng + ?Sized>(
    initial: &FieldState,
    params: &ModelParams,
    spec: &NoiseSpec,
    duration: f64,
    sample_interval: f64,
    dt: f64,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    initial.check_nodes(params.nodes)?;
    if duration > 0.0 && !(sample_interval >= dt && duration >= sample_interval) {
        return Err(Error::param(
            "sample_interval",
            format!(
                "need duration >= sample_interval >= dt, got {duration}, {sample_interval}, {dt}"
            ),
        ));
    }
    let mut integ = Integrator::new(params, spec, dt)?;
    let mut state = initial.clone();
    let mut ns = integ.fresh_noise(rng);
    let mut times = Vec::new();
    let mut snapshots = Vec::new();
    integ.run_sampled(
        &mut state,
        &mut ns,
        duration,
        sample_interval,
        rng,
        |t, s| {
            times.push(t);
            snapshots.push(s.clone());
        },
    )?;
    Ok(TrajectoryRecord {
        times,
        snapshots,
        observable: None,
        final_state: state,
        final_noise: ns,
    })
}
