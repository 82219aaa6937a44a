//! End-to-end experiment harness: configuration, the plant–network–controller
//! loop, metrics and file output.

mod config;
pub mod loopshape;
mod metrics;
mod sim;
mod trace;

use std::f64::consts::PI;
use std::path::PathBuf;

use thiserror::Error;

use crate::afhc::ControllerConfig;
use crate::netchan::ChannelConfig;
use crate::plant::PendulumParams;

pub use config::{parse_config, parse_config_with_base, ConfigOverrides, CONFIG_KEYS};
pub use metrics::{compute_metrics, Metrics};
pub use sim::{run_experiment, ExperimentOutcome};
pub use trace::{read_trace, write_trace, write_trace_to, SimulationTrace, TraceRow, TRACE_HEADER};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("line {line}: {key}: {message}")]
    Config {
        /// 1-based line of the offending entry; 0 when the value came from a
        /// default or preset.
        line: usize,
        key: String,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed trace: {0}")]
    Trace(String),
    #[error("empty trace")]
    EmptyTrace,
    #[error("{0}")]
    Setup(String),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

/// `x_d(t) = amplitude · sin(frequency · t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineReference {
    /// rad
    pub amplitude: f64,
    /// rad/s
    pub frequency: f64,
}

impl SineReference {
    /// `(x_d, ẋ_d, …, x_d⁽ⁿ⁾)`.
    pub fn derivatives(&self, t: f64, n: usize) -> Vec<f64> {
        let phase = self.frequency * t;
        (0..=n)
            .map(|k| {
                let scale = self.amplitude * self.frequency.powi(k as i32);
                match k % 4 {
                    0 => scale * phase.sin(),
                    1 => scale * phase.cos(),
                    2 => -scale * phase.sin(),
                    _ => -scale * phase.cos(),
                }
            })
            .collect()
    }
}

/// `d(t) = d0 · sin(omega_d · t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceConfig {
    pub d0: f64,
    pub omega_d: f64,
}

/// Membership grid and initial consequents shared by `f̂` and `ĝ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzySettings {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
    pub width_scale: f64,
    pub theta_f_init: f64,
    pub theta_g_init: f64,
}

impl Default for FuzzySettings {
    fn default() -> Self {
        Self {
            lo: vec![-PI / 6.0, -1.0],
            hi: vec![PI / 6.0, 1.0],
            counts: vec![5, 5],
            width_scale: 1.0,
            theta_f_init: 0.0,
            theta_g_init: 1.0,
        }
    }
}

/// Named configurations shipped with the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// No delay, no loss.
    Nominal,
    /// Actuator channel with 20 ms delay and 10 % loss.
    Networked,
    /// Actuator channel with 50 ms delay and 20 % loss. No guarantees.
    Stress,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Nominal, Preset::Networked, Preset::Stress];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Nominal => "nominal",
            Preset::Networked => "networked",
            Preset::Stress => "stress",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "nominal" => Ok(Preset::Nominal),
            "networked" => Ok(Preset::Networked),
            "stress" => Ok(Preset::Stress),
            other => Err(format!(
                "unknown preset `{other}` (expected nominal, networked or stress)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// s
    pub duration: f64,
    /// s
    pub dt: f64,
    pub reference: SineReference,
    pub plant: PendulumParams,
    pub initial_state: Vec<f64>,
    pub disturbance: DisturbanceConfig,
    pub sensor_channel: ChannelConfig,
    pub actuator_channel: ChannelConfig,
    pub controller: ControllerConfig,
    pub fuzzy: FuzzySettings,
    /// Replace `f̂`, `ĝ` by the true pendulum functions (no adaptation).
    pub ideal_model: bool,
    pub seed: u64,
}

/// Offset between the sensor and actuator channel generator seeds.
const ACTUATOR_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let dt = 1e-3;
        let mut cfg = Self {
            duration: 30.0,
            dt,
            reference: SineReference {
                amplitude: PI / 30.0,
                frequency: 1.0,
            },
            plant: PendulumParams::default(),
            initial_state: vec![0.0, 0.0],
            disturbance: DisturbanceConfig {
                d0: 0.1,
                omega_d: 2.0,
            },
            sensor_channel: ChannelConfig {
                sample_period: dt,
                ..Default::default()
            },
            actuator_channel: ChannelConfig {
                sample_period: dt,
                ..Default::default()
            },
            controller: ControllerConfig::default(),
            fuzzy: FuzzySettings::default(),
            ideal_model: false,
            seed: 0,
        };
        match preset {
            Preset::Nominal => {}
            Preset::Networked => {
                cfg.actuator_channel.delay = 0.02;
                cfg.actuator_channel.drop_prob = 0.1;
            }
            Preset::Stress => {
                cfg.actuator_channel.delay = 0.05;
                cfg.actuator_channel.drop_prob = 0.2;
            }
        }
        cfg.controller.filter_alpha = cfg.default_filter_alpha();
        cfg.set_seed(0);
        cfg
    }

    /// 0.2 when either channel delays, 1.0 (no filtering) otherwise.
    pub fn default_filter_alpha(&self) -> f64 {
        if self.sensor_channel.delay > 0.0 || self.actuator_channel.delay > 0.0 {
            0.2
        } else {
            1.0
        }
    }

    /// Sets the master seed and derives both channel generator seeds from it.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.sensor_channel.seed = seed;
        self.actuator_channel.seed = seed.wrapping_add(ACTUATOR_SEED_OFFSET);
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(Preset::Nominal)
    }
}
