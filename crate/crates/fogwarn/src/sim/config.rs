//! Run configuration: a TOML document with scenario, channel, algorithm,
//! thresholds and output sections.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use crate::channel::{self, ChannelConfig, LatencyModel};
use crate::error::{Error, Result};
use crate::fog::{Algorithm, FogConfig, LatencyEstimator};
use crate::stable::StableParams;
use crate::trajectory::{
    extract_scenario, load_trajectories, synth_scenario, Scenario, SynthSpec, TrajectoryFormat,
    TrajectoryPoint, VehicleId,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    /// Master seed; no implicit entropy anywhere.
    pub seed: u64,
    pub algorithm: AlgorithmSection,
    pub scenario: ScenarioSection,
    pub channel: ChannelSection,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlgorithmSection {
    pub name: Algorithm,
    #[serde(default)]
    pub latency_estimator: LatencyEstimator,
}

/// Scenario source: exactly one of a trajectory file (plus extraction
/// parameters), an inline generator spec, or a generator spec file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScenarioSection {
    pub file: Option<PathBuf>,
    pub synth: Option<SynthSpec>,
    pub synth_file: Option<PathBuf>,
    /// Seed for the generator's own randomness (vehicle speeds); independent
    /// of the run seed so geometry stays fixed across repetitions.
    pub synth_seed: Option<u64>,
    // Extraction parameters, used with `file`.
    pub fog_x: Option<f64>,
    pub fog_y: Option<f64>,
    pub comm_range: Option<f64>,
    pub t_start: Option<f64>,
    pub duration: Option<f64>,
    pub slot_period: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ChannelSection {
    /// Named preset (`fog_dsrc` or `cloud_lte`); `latency` overrides it.
    pub preset: Option<String>,
    pub latency: Option<LatencyModel>,
    #[serde(default)]
    pub loss_rate: f64,
    /// Defaults to the scenario's communication range.
    pub comm_range: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Leave-rule distance margin, meters.
    pub tau: f64,
    /// Loss-rule slack beyond one slot, seconds.
    pub gamma: f64,
    /// Headway threshold, seconds.
    pub headway: f64,
    /// Same-point distance, meters.
    pub d_col: f64,
    /// Prediction horizon, seconds.
    pub predict_horizon: f64,
    /// Event-matching tolerance; defaults to the prediction horizon.
    pub time_tolerance: Option<f64>,
    /// Latency law the fog node assumes when calibrating; defaults to the
    /// channel's stable parameters.
    pub latency_params: Option<StableParams>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            tau: 10.0,
            gamma: 0.2,
            headway: 1.0,
            d_col: 2.0,
            predict_horizon: 5.0,
            time_tolerance: None,
            latency_params: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let sources = [
            self.scenario.file.is_some(),
            self.scenario.synth.is_some(),
            self.scenario.synth_file.is_some(),
        ];
        if sources.iter().filter(|&&s| s).count() != 1 {
            return Err(Error::Config(
                "scenario needs exactly one of: file, synth, synth_file".into(),
            ));
        }
        for path in [self.scenario.file.as_deref(), self.scenario.synth_file.as_deref()]
            .into_iter()
            .flatten()
        {
            if !path.exists() {
                return Err(Error::Config(format!("scenario source {} not found", path.display())));
            }
        }
        if self.scenario.file.is_some() {
            for (name, v) in [
                ("fog_x", self.scenario.fog_x),
                ("fog_y", self.scenario.fog_y),
                ("comm_range", self.scenario.comm_range),
                ("t_start", self.scenario.t_start),
                ("duration", self.scenario.duration),
                ("slot_period", self.scenario.slot_period),
            ] {
                if v.is_none() {
                    return Err(Error::Config(format!(
                        "scenario.{name} is required with scenario.file"
                    )));
                }
            }
        }
        if self.channel.preset.is_none() && self.channel.latency.is_none() {
            return Err(Error::Config("channel needs a preset or an explicit latency model".into()));
        }
        if !(0.0..=1.0).contains(&self.channel.loss_rate) {
            return Err(Error::Config("channel.loss_rate outside [0,1]".into()));
        }
        let t = &self.thresholds;
        if t.tau < 0.0
            || t.gamma < 0.0
            || t.headway <= 0.0
            || t.d_col <= 0.0
            || t.predict_horizon <= 0.0
        {
            return Err(Error::Config("invalid thresholds".into()));
        }
        Ok(())
    }

    /// Build the scenario from its configured source.
    pub fn build_scenario(&self) -> Result<Scenario> {
        if let Some(path) = &self.scenario.file {
            let file = fs::File::open(path)
                .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
            let store: BTreeMap<VehicleId, Vec<TrajectoryPoint>> =
                load_trajectories(BufReader::new(file), TrajectoryFormat::Canonical)?;
            return extract_scenario(
                &store,
                (self.scenario.fog_x.unwrap(), self.scenario.fog_y.unwrap()),
                self.scenario.comm_range.unwrap(),
                self.scenario.t_start.unwrap(),
                self.scenario.duration.unwrap(),
                self.scenario.slot_period.unwrap(),
            );
        }
        let spec = if let Some(spec) = &self.scenario.synth {
            spec.clone()
        } else {
            let path = self.scenario.synth_file.as_ref().unwrap();
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: bad generator spec: {e}", path.display())))?
        };
        let seed = self.scenario.synth_seed.unwrap_or(self.seed);
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        synth_scenario(&spec, &mut rng)
    }

    /// Resolve the channel section against the scenario.
    pub fn build_channel_config(&self, scenario: &Scenario) -> Result<ChannelConfig> {
        let mut cfg = match (&self.channel.latency, &self.channel.preset) {
            (Some(model), _) => ChannelConfig {
                latency_model: model.clone(),
                loss_rate: 0.0,
                comm_range: scenario.comm_range,
            },
            (None, Some(name)) => channel::preset(name)?,
            (None, None) => unreachable!("validated"),
        };
        cfg.loss_rate = self.channel.loss_rate;
        cfg.comm_range = self.channel.comm_range.unwrap_or(scenario.comm_range);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolve the fog-node configuration against scenario and channel.
    pub fn build_fog_config(
        &self,
        scenario: &Scenario,
        channel_cfg: &ChannelConfig,
    ) -> Result<FogConfig> {
        let latency_params = match (self.thresholds.latency_params, &channel_cfg.latency_model) {
            (Some(p), _) => p,
            (None, LatencyModel::Stable { params }) => *params,
            (None, LatencyModel::Trace { .. }) => {
                return Err(Error::Config(
                    "thresholds.latency_params is required with a trace latency model".into(),
                ))
            }
        };
        let cfg = FogConfig {
            tau: self.thresholds.tau,
            gamma: self.thresholds.gamma,
            headway: self.thresholds.headway,
            d_col: self.thresholds.d_col,
            predict_horizon: self.thresholds.predict_horizon,
            slot_period: scenario.slot_period,
            latency_params,
            latency_estimator: self.algorithm.latency_estimator,
            fog_location: scenario.fog_location,
            comm_range: channel_cfg.comm_range,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn time_tolerance(&self) -> f64 {
        self.thresholds.time_tolerance.unwrap_or(self.thresholds.predict_horizon)
    }
}

/// Convenience constructor used by tests and the sweep driver.
pub fn synth_run_config(
    seed: u64,
    algorithm: Algorithm,
    spec: SynthSpec,
    preset: &str,
    loss_rate: f64,
) -> RunConfig {
    RunConfig {
        seed,
        algorithm: AlgorithmSection { name: algorithm, latency_estimator: LatencyEstimator::Random },
        scenario: ScenarioSection {
            synth: Some(spec),
            synth_seed: Some(0),
            ..Default::default()
        },
        channel: ChannelSection {
            preset: Some(preset.to_string()),
            latency: None,
            loss_rate,
            comm_range: None,
        },
        thresholds: Thresholds::default(),
        output: OutputSection::default(),
    }
}
