//! Simulated network link between two loop components.
//!
//! A [`Channel`] carries samples across a constant transport delay and
//! drops each one independently with a fixed probability. The receiving side
//! always sees the most recent sample that has arrived (hold-last-sample), or
//! the configured initial value before anything has arrived.
//!
//! Time is kept on an integer tick grid of the simulation step so that a
//! delay of `k·dt` shifts the signal by exactly `k` steps.
//!
//! Drop decisions come from ChaCha8 seeded with [`ChannelConfig::seed`]; one
//! uniform draw is consumed per push regardless of the drop probability.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("drop_prob must lie in [0, 1), got {0}")]
    DropProbability(f64),
    #[error("{name} = {value} s is not a non-negative multiple of dt = {dt} s")]
    NotMultipleOfStep {
        name: &'static str,
        value: f64,
        dt: f64,
    },
    #[error("sample_period must be positive, got {0}")]
    SamplePeriod(f64),
    #[error("simulation step must be positive, got {0}")]
    Step(f64),
    #[error("push at t = {t} does not follow previous push at t = {previous}")]
    NonMonotone { t: f64, previous: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    /// Transport delay τ in seconds.
    pub delay: f64,
    pub drop_prob: f64,
    /// Seconds between transmitted samples.
    pub sample_period: f64,
    pub seed: u64,
    /// Receiver output before the first delivery.
    pub initial_value: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            delay: 0.0,
            drop_prob: 0.0,
            sample_period: 1e-3,
            seed: 0,
            initial_value: 0.0,
        }
    }
}

impl ChannelConfig {
    /// Checks the configuration against the simulation step `dt` and returns
    /// `(delay_ticks, sample_ticks)`.
    pub fn validate(&self, dt: f64) -> Result<(u64, u64), ChannelError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ChannelError::Step(dt));
        }
        if !(0.0..1.0).contains(&self.drop_prob) {
            return Err(ChannelError::DropProbability(self.drop_prob));
        }
        if !(self.sample_period > 0.0) {
            return Err(ChannelError::SamplePeriod(self.sample_period));
        }
        let delay_ticks = ticks_of("delay", self.delay, dt)?;
        let sample_ticks = ticks_of("sample_period", self.sample_period, dt)?;
        if sample_ticks == 0 {
            return Err(ChannelError::SamplePeriod(self.sample_period));
        }
        Ok((delay_ticks, sample_ticks))
    }
}

fn ticks_of(name: &'static str, value: f64, dt: f64) -> Result<u64, ChannelError> {
    let ratio = value / dt;
    let rounded = ratio.round();
    if !(value >= 0.0) || !ratio.is_finite() || (ratio - rounded).abs() > 1e-9 * rounded.max(1.0) {
        return Err(ChannelError::NotMultipleOfStep { name, value, dt });
    }
    Ok(rounded as u64)
}

/// One transmitted sample as recorded in the channel log.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedSample<T = f64> {
    pub send_time: f64,
    pub value: T,
    pub dropped: bool,
}

impl<T> TimedSample<T> {
    /// Arrival time, or `None` if the sample was dropped.
    pub fn delivery_time(&self, delay: f64) -> Option<f64> {
        (!self.dropped).then_some(self.send_time + delay)
    }
}

/// Values that can be written into a channel log CSV field.
pub trait Payload: Clone {
    fn write_field(&self, out: &mut String);
}

impl Payload for f64 {
    fn write_field(&self, out: &mut String) {
        let _ = write!(out, "{self:.9e}");
    }
}

/// Vector payloads are written space-separated inside one field.
impl Payload for Vec<f64> {
    fn write_field(&self, out: &mut String) {
        for (i, v) in self.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v:.9e}");
        }
    }
}

/// Header of the channel event log CSV.
pub const CHANNEL_LOG_HEADER: &str = "send_time,value,dropped,delivery_time";

#[derive(Debug, Clone)]
pub struct Channel<T = f64> {
    config: ChannelConfig,
    dt: f64,
    delay_ticks: u64,
    sample_ticks: u64,
    rng: ChaCha8Rng,
    in_flight: VecDeque<(u64, T)>,
    held: T,
    last_push: Option<u64>,
    log: Vec<TimedSample<T>>,
}

impl Channel<f64> {
    /// Scalar channel starting from `config.initial_value`.
    pub fn scalar(config: ChannelConfig, dt: f64) -> Result<Self, ChannelError> {
        let initial = config.initial_value;
        Self::new(config, dt, initial)
    }
}

impl<T: Clone> Channel<T> {
    pub fn new(config: ChannelConfig, dt: f64, initial: T) -> Result<Self, ChannelError> {
        let (delay_ticks, sample_ticks) = config.validate(dt)?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            config,
            dt,
            delay_ticks,
            sample_ticks,
            rng,
            in_flight: VecDeque::new(),
            held: initial,
            last_push: None,
            log: Vec::new(),
        })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn delay_ticks(&self) -> u64 {
        self.delay_ticks
    }

    fn tick(&self, t: f64) -> u64 {
        (t / self.dt + 1e-6).floor().max(0.0) as u64
    }

    /// Whether the sender transmits at time `t` (every `sample_period`).
    pub fn is_sample_instant(&self, t: f64) -> bool {
        let r = t / self.dt;
        let k = r.round();
        (r - k).abs() <= 1e-6 && (k as u64).is_multiple_of(self.sample_ticks)
    }

    /// Transmits `value` at time `t`. The sample is lost with probability
    /// `drop_prob`; otherwise it becomes visible at `t + delay`.
    pub fn push(&mut self, t: f64, value: T) -> Result<TimedSample<T>, ChannelError> {
        let tick = self.tick(t);
        if !(t >= 0.0) {
            return Err(ChannelError::NonMonotone {
                t,
                previous: f64::NAN,
            });
        }
        if let Some(prev) = self.last_push {
            if tick <= prev {
                return Err(ChannelError::NonMonotone {
                    t,
                    previous: prev as f64 * self.dt,
                });
            }
        }
        self.last_push = Some(tick);
        let dropped = self.rng.random::<f64>() < self.config.drop_prob;
        if !dropped {
            self.in_flight
                .push_back((tick + self.delay_ticks, value.clone()));
        }
        let sample = TimedSample {
            send_time: t,
            value,
            dropped,
        };
        self.log.push(sample.clone());
        Ok(sample)
    }

    /// Receiver view at time `t`: the latest delivered sample, else the
    /// initial value. Calls are expected with nondecreasing `t`; a sample
    /// already delivered is never taken back.
    pub fn output(&mut self, t: f64) -> &T {
        let now = self.tick(t);
        while let Some((due, _)) = self.in_flight.front() {
            if *due > now {
                break;
            }
            let (_, value) = self.in_flight.pop_front().expect("front exists");
            self.held = value;
        }
        &self.held
    }

    pub fn log(&self) -> &[TimedSample<T>] {
        &self.log
    }

    pub fn drop_count(&self) -> usize {
        self.log.iter().filter(|s| s.dropped).count()
    }
}

impl<T: Payload> Channel<T> {
    /// Writes the event log as CSV with [`CHANNEL_LOG_HEADER`]. Dropped
    /// samples have an empty `delivery_time`.
    pub fn write_log<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CHANNEL_LOG_HEADER}")?;
        let delay = self.delay_ticks as f64 * self.dt;
        let mut line = String::new();
        for s in &self.log {
            line.clear();
            let _ = write!(line, "{:.9e},", s.send_time);
            s.value.write_field(&mut line);
            let _ = write!(line, ",{},", u8::from(s.dropped));
            if let Some(d) = s.delivery_time(delay) {
                let _ = write!(line, "{d:.9e}");
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}
