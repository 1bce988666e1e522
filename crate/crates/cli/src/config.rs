//! Run configuration: one TOML file with top-level model keys and one table
//! per subcommand. Every key has a default, unknown keys are rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use bumpfield::bifurcation::SweepConfig;
use bumpfield::dmap::DmapConfig;
use bumpfield::dmap_lift::SAConfig;
use bumpfield::field_sim::{KernelArgMode, ModelParams, NoiseSpec};
use bumpfield::kramers::TauConfig;
use bumpfield::langevin::{BurstConfig, DatabaseConfig, EstimationMethod, HistogramBins};
use bumpfield::lifting_v::ReferenceConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "M")]
    pub nodes: usize,
    #[serde(rename = "A")]
    pub adaptation: f64,
    #[serde(rename = "I")]
    pub current: f64,
    pub tau: f64,
    pub j0: f64,
    pub j1: f64,
    pub gain: f64,
    pub kernel_arg_mode: KernelArgMode,
    pub dt: f64,
    /// Length of the long run used by simulate, estimate, potential and
    /// switching.
    pub duration: f64,
    pub sample_interval: f64,
    /// Integration time discarded before a long run is recorded.
    pub transient: f64,
    pub seed: u64,
    pub output: PathBuf,
    /// Worker threads for burst ensembles; 0 uses every core.
    pub workers: usize,
    pub noise: NoiseSpec,
    pub simulate: SimulateSection,
    pub estimate: EstimateSection,
    pub potential: PotentialSection,
    pub bifurcate: SweepConfig,
    pub switching: SwitchingSection,
    pub dmap: DmapConfig,
    pub lift: LiftSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = ModelParams::default();
        Self {
            nodes: p.nodes,
            adaptation: p.adaptation,
            current: p.current,
            tau: p.tau_a,
            j0: p.j0,
            j1: p.j1,
            gain: p.gain,
            kernel_arg_mode: p.kernel_arg_mode,
            dt: 0.05,
            duration: 10_000.0,
            sample_interval: 0.5,
            transient: 200.0,
            seed: 1,
            output: PathBuf::from("out"),
            workers: 0,
            noise: NoiseSpec::default(),
            simulate: SimulateSection::default(),
            estimate: EstimateSection::default(),
            potential: PotentialSection::default(),
            bifurcate: SweepConfig::default(),
            switching: SwitchingSection::default(),
            dmap: DmapConfig::default(),
            lift: LiftSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialCondition {
    #[default]
    TravellingRight,
    TravellingLeft,
    Bump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub initial: InitialCondition,
    /// Write the full u/a snapshots; disable for long runs.
    pub trajectory: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            initial: InitialCondition::default(),
            trajectory: true,
        }
    }
}

pub fn default_v_grid() -> Vec<f64> {
    (-12..=12).map(|k| k as f64 / 40.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    pub method: EstimationMethod,
    pub v_grid: Vec<f64>,
    pub database: DatabaseConfig,
    pub burst: BurstConfig,
    pub reference: ReferenceConfig,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self {
            method: EstimationMethod::Database,
            v_grid: default_v_grid(),
            database: DatabaseConfig::default(),
            burst: BurstConfig::default(),
            reference: ReferenceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSection {
    pub bins: HistogramBins,
    pub v_grid: Vec<f64>,
    /// Uses every sampled occurrence by default (`min_separation = 0.5`).
    pub database: DatabaseConfig,
}

impl Default for PotentialSection {
    fn default() -> Self {
        Self {
            bins: HistogramBins {
                lo: -0.35,
                hi: 0.35,
                count: 70,
            },
            v_grid: default_v_grid(),
            database: DatabaseConfig {
                min_separation: Some(0.5),
                ..DatabaseConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwitchingSection {
    /// Fraction of the well position a run must cross to count as a flip.
    pub hysteresis: f64,
    /// Well position used for flip detection; taken from the Kramers
    /// estimate when absent.
    pub v_threshold: Option<f64>,
    /// Kramers estimate at the base parameters, plus a tau table over
    /// `kramers.values` when that is nonempty.
    pub kramers: TauConfig,
}

impl Default for SwitchingSection {
    fn default() -> Self {
        Self {
            hysteresis: bumpfield::kramers::DEFAULT_HYSTERESIS,
            v_threshold: None,
            kramers: TauConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiftSection {
    pub target: f64,
    /// Saved diffusion-map model directory; built from `[dmap]` when absent.
    pub model: Option<PathBuf>,
    pub sa: SAConfig,
    /// Estimate mu and D at the target by bursts from the lifted state.
    pub estimate: bool,
    pub burst: BurstConfig,
    /// Length of a run restricted to Phi_2 for a database comparison;
    /// 0 skips it.
    pub database_duration: f64,
    pub database: DatabaseConfig,
}

impl Default for LiftSection {
    fn default() -> Self {
        Self {
            target: -0.5,
            model: None,
            sa: SAConfig::default(),
            estimate: false,
            burst: BurstConfig::default(),
            database_duration: 0.0,
            database: DatabaseConfig {
                h_bin: 0.05,
                coordinate: bumpfield::langevin::Coordinate::Linear,
                ..DatabaseConfig::default()
            },
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            nodes: self.nodes,
            adaptation: self.adaptation,
            current: self.current,
            tau_a: self.tau,
            j0: self.j0,
            j1: self.j1,
            gain: self.gain,
            kernel_arg_mode: self.kernel_arg_mode,
        }
    }

    /// Applies the top-level seed and step to every nested section so the
    /// echoed config shows what actually ran.
    pub fn resolve(&mut self) {
        let seed = self.seed;
        let dt = self.dt;
        for b in [
            &mut self.estimate.burst,
            &mut self.bifurcate.burst,
            &mut self.switching.kramers.burst,
            &mut self.lift.burst,
        ] {
            b.seed = seed;
            b.dt = dt;
        }
        for r in [
            &mut self.estimate.reference,
            &mut self.bifurcate.reference,
            &mut self.switching.kramers.reference,
        ] {
            r.dt = dt;
        }
    }

    /// Checks shared by every subcommand.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.params().validate().map_err(rename_keys)?;
        self.noise.validate().map_err(rename_keys)?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            bail!("invalid parameter `dt`: must be positive, got {}", self.dt);
        }
        for (key, v) in [("duration", self.duration), ("transient", self.transient)] {
            if !(v >= 0.0 && v.is_finite()) {
                bail!("invalid parameter `{key}`: must be >= 0, got {v}");
            }
        }
        if !(self.sample_interval >= self.dt) {
            bail!(
                "invalid parameter `sample_interval`: must be at least dt = {}, got {}",
                self.dt,
                self.sample_interval
            );
        }
        if self.seed > i64::MAX as u64 {
            bail!("invalid parameter `seed`: must be at most {}", i64::MAX);
        }
        Ok(())
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// Maps library parameter names onto the config keys that set them.
pub fn config_key(name: &str) -> &str {
    match name {
        "nodes" => "M",
        "adaptation" => "A",
        "current" => "I",
        "tau_a" => "tau",
        "eta" => "noise.eta",
        "epsilon" => "noise.epsilon",
        "lambda" => "noise.lambda",
        other => other,
    }
}

pub fn rename_keys(e: bumpfield::Error) -> anyhow::Error {
    match e {
        bumpfield::Error::InvalidParameter { name, reason } => {
            anyhow::anyhow!("invalid parameter `{}`: {reason}", config_key(name))
        }
        other => other.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.resolve();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn short_keys_set_model_params() {
        let cfg = RunConfig::parse("M = 64\nA = 0.2\nI = -0.05\ntau = 4.0\n[noise]\nvariant = \"coloured\"\nepsilon = 1e-4\nlambda = 10.0\n").unwrap();
        let p = cfg.params();
        assert_eq!(
            (p.nodes, p.adaptation, p.current, p.tau_a),
            (64, 0.2, -0.05, 4.0)
        );
        assert_eq!(cfg.noise, NoiseSpec::coloured(1e-4, 10.0));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse("[dmap]\nsigmaa = 1.0\n").unwrap_err();
        assert!(format!("{err:#}").contains("sigmaa"), "{err:#}");
    }

    #[test]
    fn example_configs_are_valid() {
        for text in [
            include_str!("../../../configs/long_run.toml"),
            include_str!("../../../configs/a_sweep.toml"),
            include_str!("../../../configs/eta_sweep.toml"),
            include_str!("../../../configs/coloured.toml"),
            include_str!("../../../configs/phi2_lift.toml"),
        ] {
            let mut cfg = RunConfig::parse(text).unwrap();
            cfg.resolve();
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn validation_names_config_key() {
        let cfg = RunConfig::parse("tau = -1.0").unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("`tau`"), "{err}");
        let cfg = RunConfig::parse("sample_interval = 0.01").unwrap();
        assert!(cfg
            .validate()
            .unwrap_err()
            .to_string()
            .contains("sample_interval"));
    }
}
