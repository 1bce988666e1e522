use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use bumpfield::bifurcation::{fit_pitchfork, sweep, SweepParameter};
use bumpfield::dmap::{simulate_model, spearman, DiffusionMapModel};
use bumpfield::dmap_lift::{estimate_mu_d_phi2, phi2_series, Phi2Lifter, Phi2SeriesConfig};
use bumpfield::field_sim::{FieldState, Integrator, ModelParams, NoiseSpec};
use bumpfield::io;
use bumpfield::kramers::{detect_switches, kramers_from_bursts, tau_curve, TauPoint};
use bumpfield::langevin::{
    estimate_burst_curve, estimate_database, potential_fp_integral, potential_histogram,
    DriftDiffusionPoint, EstimationMethod,
};
use bumpfield::lifting_v::make_reference;
use bumpfield::observables::{wrap_angle, Observer};
use bumpfield::rng::stream;
use rand::Rng;
use serde_json::json;

use crate::config::{rename_keys, InitialCondition, RunConfig};

/// Seed of an independent sub-run, derived from the base seed and a tag.
fn sub_seed(seed: u64, tag: u64) -> u64 {
    stream(seed, &[u64::MAX, tag]).random()
}

const SEED_LONG_RUN: u64 = 0;
const SEED_DMAP: u64 = 1;
const SEED_PHI2_SERIES: u64 = 2;

pub struct Run {
    pub cfg: RunConfig,
    pub params: ModelParams,
    pub spec: NoiseSpec,
    pub out: PathBuf,
}

impl Run {
    /// Validates the config, creates the output directory and echoes the
    /// resolved config into it.
    pub fn prepare(mut cfg: RunConfig) -> Result<Self> {
        cfg.resolve();
        cfg.validate()?;
        let out = cfg.output.clone();
        std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        std::fs::write(out.join("config.toml"), cfg.to_toml()?)?;
        Ok(Self {
            params: cfg.params(),
            spec: cfg.noise,
            out,
            cfg,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json(&self, name: &str, value: &serde_json::Value) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        std::fs::write(self.path(name), text)?;
        Ok(())
    }

    fn initial_state(&self) -> FieldState {
        match self.cfg.simulate.initial {
            InitialCondition::TravellingRight => FieldState::travelling_seed(&self.params, true),
            InitialCondition::TravellingLeft => FieldState::travelling_seed(&self.params, false),
            InitialCondition::Bump => FieldState::bump_seed(&self.params),
        }
    }

    /// Runs the long simulation (after the transient) and hands every sample
    /// to `observe`.
    fn long_run(&self, mut observe: impl FnMut(f64, &FieldState) -> Result<()>) -> Result<()> {
        let cfg = &self.cfg;
        let mut integ = Integrator::new(&self.params, &self.spec, cfg.dt).map_err(rename_keys)?;
        let mut rng = stream(sub_seed(cfg.seed, SEED_LONG_RUN), &[]);
        let mut ns = integ.fresh_noise(&mut rng);
        let mut state = self.initial_state();
        let warm = integ
            .steps_for("transient", cfg.transient)
            .map_err(rename_keys)?;
        integ.advance(&mut state, &mut ns, warm, &mut rng)?;
        let mut failed = None;
        integ
            .run_sampled(
                &mut state,
                &mut ns,
                cfg.duration,
                cfg.sample_interval,
                &mut rng,
                |t, s| {
                    if failed.is_none() {
                        if let Err(e) = observe(t, s) {
                            failed = Some(e);
                        }
                    }
                },
            )
            .map_err(rename_keys)?;
        match failed {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Coarse V of every sample of the long run.
    fn v_series(&self) -> Result<Vec<f64>> {
        let obs = Observer::new(self.params.nodes);
        let mut v = Vec::new();
        self.long_run(|_, s| {
            v.push(obs.coarse_v(s)?.value());
            Ok(())
        })?;
        Ok(v)
    }
}

pub fn simulate(ctx: &Run) -> Result<()> {
    let obs = Observer::new(ctx.params.nodes);
    let keep = ctx.cfg.simulate.trajectory;
    let mut snapshots = Vec::new();
    let mut rows = Vec::new();
    ctx.long_run(|t, s| {
        let (pu, pa) = obs.peaks(s)?;
        rows.push([t, pu.angle, pa.angle, wrap_angle(pu.angle - pa.angle)]);
        if keep {
            snapshots.push((t, s.clone()));
        }
        Ok(())
    })?;
    if keep {
        io::write_snapshots(&ctx.path("trajectory.csv"), &snapshots)?;
    }
    io::write_v_series(&ctx.path("v_series.csv"), &rows)?;
    log::info!("simulate: {} samples", rows.len());
    Ok(())
}

pub fn estimate(ctx: &Run) -> Result<()> {
    let sec = &ctx.cfg.estimate;
    let curve = match sec.method {
        EstimationMethod::Database => {
            let v = ctx.v_series()?;
            estimate_database(&v, ctx.cfg.sample_interval, &sec.v_grid, &sec.database)
                .map_err(rename_keys)?
        }
        EstimationMethod::Burst => {
            let reference = make_reference(&ctx.params, &sec.reference).map_err(rename_keys)?;
            let obs = Observer::new(ctx.params.nodes);
            let (curve, dropped) = estimate_burst_curve(
                &sec.v_grid,
                &ctx.params,
                &ctx.spec,
                &reference,
                &obs,
                &sec.burst,
            )
            .map_err(rename_keys)?;
            if dropped > 0 {
                log::warn!("estimate: {dropped} bursts dropped after blowup");
            }
            curve
        }
    };
    io::write_drift_diffusion(&ctx.path("drift_diffusion.csv"), &curve)?;
    if !curve.missing.is_empty() {
        log::warn!("estimate: no estimate at {:?}", curve.missing);
    }
    Ok(())
}

pub fn potential(ctx: &Run) -> Result<()> {
    let sec = &ctx.cfg.potential;
    let v = ctx.v_series()?;
    let hist = potential_histogram(&v, &sec.bins).map_err(rename_keys)?;
    let curve = estimate_database(&v, ctx.cfg.sample_interval, &sec.v_grid, &sec.database)
        .map_err(rename_keys)?;
    let fp = potential_fp_integral(&curve)?;
    io::write_drift_diffusion(&ctx.path("drift_diffusion.csv"), &curve)?;
    io::write_potentials(&ctx.path("potential.csv"), &[&hist, &fp])?;
    Ok(())
}

pub fn bifurcate(ctx: &Run) -> Result<()> {
    let sec = &ctx.cfg.bifurcate;
    let points = sweep(&ctx.params, &ctx.spec, sec).map_err(|e| match e {
        bumpfield::Error::InvalidParameter { name, reason } => {
            let key = name.strip_prefix("sweep.").unwrap_or(name);
            anyhow::anyhow!("invalid parameter `bifurcate.{key}`: {reason}")
        }
        other => other.into(),
    })?;
    io::write_branches(&ctx.path("branch.csv"), &points)?;
    io::write_extrema(&ctx.path("extrema.csv"), &points)?;
    let failures: Vec<(f64, String)> = points
        .iter()
        .filter_map(|p| p.error.clone().map(|e| (p.param, e)))
        .collect();
    io::write_failures(&ctx.path("failures.csv"), &failures)?;
    let fit = fit_pitchfork(&points).ok();
    ctx.write_json(
        "bifurcate.json",
        &json!({
            "parameter": sec.parameter.as_str(),
            "roots_per_point": points.iter().map(|p| json!([p.param, p.roots.len()])).collect::<Vec<_>>(),
            "pitchfork": fit.map(|f| json!({
                "onset": f.onset, "a2": f.a2, "r_squared": f.r_squared, "n": f.n,
            })),
        }),
    )?;
    if !failures.is_empty() {
        bail!(
            "{} of {} grid points failed (see failures.csv)",
            failures.len(),
            points.len()
        );
    }
    Ok(())
}

fn base_value(parameter: SweepParameter, params: &ModelParams, spec: &NoiseSpec) -> f64 {
    match (parameter, spec) {
        (SweepParameter::Adaptation, _) => params.adaptation,
        (SweepParameter::Eta, NoiseSpec::White { eta }) => *eta,
        (SweepParameter::Eta, NoiseSpec::Coloured { epsilon, .. }) => *epsilon,
        (SweepParameter::Lambda, NoiseSpec::Coloured { lambda, .. }) => *lambda,
        (SweepParameter::Lambda, NoiseSpec::White { .. }) => f64::NAN,
    }
}

pub fn switching(ctx: &Run) -> Result<()> {
    let sec = &ctx.cfg.switching;
    let kcfg = &sec.kramers;
    let base = kramers_from_bursts(&ctx.params, &ctx.spec, kcfg, kcfg.burst.seed);
    let mut table = vec![match &base {
        Ok((curve, k)) => TauPoint {
            param: base_value(kcfg.parameter, &ctx.params, &ctx.spec),
            curve: Some(curve.clone()),
            kramers: Some(*k),
            error: None,
        },
        Err(e) => TauPoint {
            param: base_value(kcfg.parameter, &ctx.params, &ctx.spec),
            curve: None,
            kramers: None,
            error: Some(e.to_string()),
        },
    }];
    if !kcfg.values.is_empty() {
        table.extend(tau_curve(&ctx.params, &ctx.spec, kcfg).map_err(rename_keys)?);
    }
    io::write_kramers(&ctx.path("kramers.csv"), &table)?;

    let threshold = match (sec.v_threshold, &base) {
        (Some(v), _) => v,
        (None, Ok((_, k))) => k.v_min().abs(),
        (None, Err(e)) => {
            bail!("no Kramers well position ({e}); set `switching.v_threshold` to detect flips")
        }
    };
    let v = ctx.v_series()?;
    let rec = detect_switches(&v, 0.0, ctx.cfg.sample_interval, threshold, sec.hysteresis)
        .map_err(|e| match e {
            bumpfield::Error::InvalidParameter { name, reason } => {
                let key = match name {
                    "hysteresis_fraction" => "switching.hysteresis",
                    _ => "switching.v_threshold",
                };
                anyhow::anyhow!("invalid parameter `{key}`: {reason}")
            }
            other => other.into(),
        })?;
    io::write_waiting_times(&ctx.path("waiting_times.csv"), &rec)?;
    let tau = base.as_ref().ok().map(|(_, k)| k.tau());
    let mean = rec.mean_waiting();
    ctx.write_json(
        "switching.json",
        &json!({
            "switches": rec.switch_times.len(),
            "mean_waiting": mean,
            "cv": rec.cv(),
            "threshold": rec.threshold,
            "warning": rec.warning,
            "tau_kramers": tau,
            "ratio": tau.zip(mean).map(|(t, m)| t / m),
            "kramers_error": base.as_ref().err().map(|e| e.to_string()),
        }),
    )?;
    if let Some(w) = &rec.warning {
        log::warn!("switching: {w}");
    }
    if let Err(e) = base {
        bail!("Kramers estimate failed at the base parameters: {e}");
    }
    let failed: Vec<_> = table.iter().filter(|p| p.error.is_some()).collect();
    if !failed.is_empty() {
        bail!("{} tau points failed (see kramers.csv)", failed.len());
    }
    Ok(())
}

fn build_dmap(ctx: &Run) -> Result<DiffusionMapModel> {
    let cfg = &ctx.cfg;
    simulate_model(
        &ctx.params,
        &ctx.spec,
        cfg.dt,
        &cfg.dmap,
        sub_seed(cfg.seed, SEED_DMAP),
    )
    .map_err(|e| match e {
        bumpfield::Error::InvalidParameter { name, reason } => {
            let key = name.strip_prefix("dmap.").unwrap_or(name);
            anyhow::anyhow!("invalid parameter `dmap.{key}`: {reason}")
        }
        other => other.into(),
    })
}

pub fn dmap(ctx: &Run) -> Result<()> {
    let model = build_dmap(ctx)?;
    io::save_model(&ctx.path("dmap_model"), &model)?;
    io::write_dmap_coordinates(&ctx.path("coordinates.csv"), &model)?;
    let (x, v): (Vec<f64>, Vec<f64>) = (0..model.len())
        .filter(|&i| model.v[i].is_finite())
        .map(|i| (model.phi[[i, 1]], model.v[i]))
        .unzip();
    ctx.write_json(
        "dmap.json",
        &json!({
            "n": model.len(),
            "sigma": model.sigma,
            "eigenvalues": model.eigenvalues.to_vec(),
            "spearman_phi2_v": spearman(&x, &v),
        }),
    )?;
    Ok(())
}

fn point_json(p: &DriftDiffusionPoint) -> serde_json::Value {
    json!({
        "v_start": p.v_start,
        "mu": p.estimate.mu,
        "mu_se": p.estimate.mu_se,
        "d": p.estimate.d,
        "d_se": p.estimate.d_se,
        "n": p.estimate.n,
    })
}

pub fn lift(ctx: &Run) -> Result<()> {
    let sec = &ctx.cfg.lift;
    let model = match &sec.model {
        Some(dir) => io::load_model(dir).with_context(|| format!("loading {}", dir.display()))?,
        None => build_dmap(ctx)?,
    };
    sec.sa.validate().map_err(|e| match e {
        bumpfield::Error::InvalidParameter { name, reason } => {
            let key = name.strip_prefix("sa.").unwrap_or(name);
            anyhow::anyhow!("invalid parameter `lift.sa.{key}`: {reason}")
        }
        other => other.into(),
    })?;
    let lifter = Phi2Lifter {
        model: &model,
        sa: sec.sa,
        seed: ctx.cfg.seed,
    };
    let res = lifter.lift_result(sec.target)?;
    io::write_snapshots(&ctx.path("lifted.csv"), &[(0.0, res.state.clone())])?;

    let lifted = if sec.estimate && res.success {
        let est = estimate_mu_d_phi2(
            sec.target,
            &model,
            &ctx.params,
            &ctx.spec,
            &sec.sa,
            &sec.burst,
        )?;
        Some(point_json(&est.point))
    } else {
        None
    };
    let database = if sec.database_duration > 0.0 {
        let (lo, hi) = (
            sec.target - sec.database.h_bin,
            sec.target + sec.database.h_bin,
        );
        let scfg = Phi2SeriesConfig {
            duration: sec.database_duration,
            sample_dt: ctx.cfg.sample_interval,
            transient: ctx.cfg.transient,
            dt: ctx.cfg.dt,
            focus: Some((lo, hi)),
            ..Phi2SeriesConfig::default()
        };
        let series = phi2_series(
            &model,
            &ctx.params,
            &ctx.spec,
            &scfg,
            sub_seed(ctx.cfg.seed, SEED_PHI2_SERIES),
        )?;
        let curve = estimate_database(&series.phi2, series.sample_dt, &[sec.target], &sec.database)
            .map_err(rename_keys)?;
        curve.points.first().map(point_json)
    } else {
        None
    };
    ctx.write_json(
        "lift.json",
        &json!({
            "target": res.target,
            "achieved_phi2": res.achieved_phi2,
            "objective": res.objective,
            "success": res.success,
            "iterations": res.iterations,
            "accepted": res.accepted,
            "seed_index": res.seed_index,
            "trace": res.trace,
            "lifting": lifted,
            "database": database,
        }),
    )?;
    if !res.success {
        bail!(
            "lift to Phi_2 = {} failed: reached {} (objective {:e})",
            res.target,
            res.achieved_phi2,
            res.objective
        );
    }
    Ok(())
}
