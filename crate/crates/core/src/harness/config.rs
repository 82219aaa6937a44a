//! Flat `key = value` configuration documents.
//!
//! `#` starts a comment that runs to the end of the line. Lists are
//! comma-separated. Keys not present keep the value of the base preset
//! (`nominal` unless the document sets `preset` or the caller overrides it).

use std::collections::HashMap;

use nalgebra::DMatrix;

use super::{ExperimentConfig, HarnessError, Preset};
use crate::afhc::ControlError;
use crate::fuzzy::MembershipGrid;
use crate::netchan::ChannelError;

/// Every accepted key with a short description.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("preset", "base preset: nominal | networked | stress"),
    ("duration", "simulated horizon, s"),
    ("dt", "integration and control step, s"),
    ("seed", "master seed for the channel drop generators"),
    ("reference.amplitude", "sine reference amplitude, rad"),
    ("reference.frequency", "sine reference frequency, rad/s"),
    ("plant.cart_mass", "kg"),
    ("plant.pole_mass", "kg"),
    ("plant.half_length", "m"),
    ("plant.gravity", "m/s^2"),
    ("plant.x0", "initial (angle, rate), list"),
    ("disturbance.d0", "disturbance amplitude"),
    ("disturbance.omega_d", "disturbance frequency, rad/s"),
    ("sensor_channel.delay", "s, multiple of dt"),
    ("sensor_channel.drop_prob", "[0, 1)"),
    (
        "sensor_channel.sample_period",
        "s, multiple of dt (default dt)",
    ),
    ("actuator_channel.delay", "s, multiple of dt"),
    ("actuator_channel.drop_prob", "[0, 1)"),
    (
        "actuator_channel.sample_period",
        "s, multiple of dt (default dt)",
    ),
    (
        "actuator_channel.initial_value",
        "actuator output before first delivery",
    ),
    (
        "controller.k",
        "feedback gains k1, ..., kn (Hurwitz companion)",
    ),
    ("controller.q", "Q, row-major n*n list"),
    (
        "controller.r",
        "H-infinity attenuation weight (inf disables u_a)",
    ),
    ("controller.gamma_f", "adaptation rate for f-hat"),
    ("controller.gamma_g", "adaptation rate for g-hat"),
    ("controller.g_min", "projection floor for g-hat"),
    ("controller.u_max", "actuator saturation, N"),
    (
        "controller.filter_alpha",
        "error smoothing in (0, 1] (default 0.2 with delay, else 1)",
    ),
    (
        "controller.ideal_model",
        "use the true f, g instead of fuzzy estimates",
    ),
    ("fuzzy.lo", "grid lower corner, list"),
    ("fuzzy.hi", "grid upper corner, list"),
    ("fuzzy.counts", "memberships per dimension, list"),
    ("fuzzy.width_scale", "width as a multiple of center spacing"),
    ("fuzzy.theta_f_init", "initial f-hat consequents"),
    ("fuzzy.theta_g_init", "initial g-hat consequents"),
];

/// Values that take precedence over both the preset and the document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub duration: Option<f64>,
}

struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

fn err(line: usize, key: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        line,
        key: key.to_string(),
        message: message.into(),
    }
}

fn parse_f64(e: &Entry) -> Result<f64, HarnessError> {
    e.value
        .parse::<f64>()
        .map_err(|_| err(e.line, e.key, format!("`{}` is not a number", e.value)))
}

fn parse_list(e: &Entry) -> Result<Vec<f64>, HarnessError> {
    e.value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| err(e.line, e.key, format!("`{}` is not a number", s.trim())))
        })
        .collect()
}

fn parse_counts(e: &Entry) -> Result<Vec<usize>, HarnessError> {
    e.value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| err(e.line, e.key, format!("`{}` is not a count", s.trim())))
        })
        .collect()
}

fn parse_bool(e: &Entry) -> Result<bool, HarnessError> {
    match e.value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(err(e.line, e.key, format!("`{other}` is not a boolean"))),
    }
}

/// Parses a document on top of the `nominal` preset.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, HarnessError> {
    parse_config_with_base(text, &ConfigOverrides::default())
}

pub fn parse_config_with_base(
    text: &str,
    overrides: &ConfigOverrides,
) -> Result<ExperimentConfig, HarnessError> {
    let mut entries: Vec<Entry> = Vec::new();
    let mut lines_by_key: HashMap<&str, usize> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(err(line, content, "expected `key = value`"));
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(err(line, "", "missing key"));
        }
        if !CONFIG_KEYS.iter().any(|(k, _)| *k == key) {
            return Err(err(line, key, "unknown key"));
        }
        if let Some(first) = lines_by_key.insert(key, line) {
            return Err(err(
                line,
                key,
                format!("duplicate key (first set on line {first})"),
            ));
        }
        entries.push(Entry { line, key, value });
    }

    let mut base = Preset::Nominal;
    if let Some(e) = entries.iter().find(|e| e.key == "preset") {
        base = e.value.parse().map_err(|m: String| err(e.line, e.key, m))?;
    }
    if let Some(p) = overrides.preset {
        base = p;
    }
    let mut cfg = ExperimentConfig::preset(base);

    let mut q_values: Option<(usize, Vec<f64>)> = None;
    for e in &entries {
        match e.key {
            "preset" => {}
            "duration" => cfg.duration = parse_f64(e)?,
            "dt" => cfg.dt = parse_f64(e)?,
            "seed" => {
                cfg.seed = e
                    .value
                    .parse()
                    .map_err(|_| err(e.line, e.key, format!("`{}` is not a u64", e.value)))?
            }
            "reference.amplitude" => cfg.reference.amplitude = parse_f64(e)?,
            "reference.frequency" => cfg.reference.frequency = parse_f64(e)?,
            "plant.cart_mass" => cfg.plant.cart_mass = parse_f64(e)?,
            "plant.pole_mass" => cfg.plant.pole_mass = parse_f64(e)?,
            "plant.half_length" => cfg.plant.half_length = parse_f64(e)?,
            "plant.gravity" => cfg.plant.gravity = parse_f64(e)?,
            "plant.x0" => cfg.initial_state = parse_list(e)?,
            "disturbance.d0" => cfg.disturbance.d0 = parse_f64(e)?,
            "disturbance.omega_d" => cfg.disturbance.omega_d = parse_f64(e)?,
            "sensor_channel.delay" => cfg.sensor_channel.delay = parse_f64(e)?,
            "sensor_channel.drop_prob" => cfg.sensor_channel.drop_prob = parse_f64(e)?,
            "sensor_channel.sample_period" => cfg.sensor_channel.sample_period = parse_f64(e)?,
            "actuator_channel.delay" => cfg.actuator_channel.delay = parse_f64(e)?,
            "actuator_channel.drop_prob" => cfg.actuator_channel.drop_prob = parse_f64(e)?,
            "actuator_channel.sample_period" => cfg.actuator_channel.sample_period = parse_f64(e)?,
            "actuator_channel.initial_value" => cfg.actuator_channel.initial_value = parse_f64(e)?,
            "controller.k" => cfg.controller.k = parse_list(e)?,
            "controller.q" => q_values = Some((e.line, parse_list(e)?)),
            "controller.r" => cfg.controller.r = parse_f64(e)?,
            "controller.gamma_f" => cfg.controller.gamma_f = parse_f64(e)?,
            "controller.gamma_g" => cfg.controller.gamma_g = parse_f64(e)?,
            "controller.g_min" => cfg.controller.g_min = parse_f64(e)?,
            "controller.u_max" => cfg.controller.u_max = parse_f64(e)?,
            "controller.filter_alpha" => cfg.controller.filter_alpha = parse_f64(e)?,
            "controller.ideal_model" => cfg.ideal_model = parse_bool(e)?,
            "fuzzy.lo" => cfg.fuzzy.lo = parse_list(e)?,
            "fuzzy.hi" => cfg.fuzzy.hi = parse_list(e)?,
            "fuzzy.counts" => cfg.fuzzy.counts = parse_counts(e)?,
            "fuzzy.width_scale" => cfg.fuzzy.width_scale = parse_f64(e)?,
            "fuzzy.theta_f_init" => cfg.fuzzy.theta_f_init = parse_f64(e)?,
            "fuzzy.theta_g_init" => cfg.fuzzy.theta_g_init = parse_f64(e)?,
            other => unreachable!("key {other} accepted but not handled"),
        }
    }

    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(duration) = overrides.duration {
        cfg.duration = duration;
    }

    let n = cfg.controller.k.len();
    match q_values {
        Some((line, q)) => {
            if q.len() != n * n {
                return Err(err(
                    line,
                    "controller.q",
                    format!(
                        "expected {} entries for a {n}x{n} matrix, got {}",
                        n * n,
                        q.len()
                    ),
                ));
            }
            cfg.controller.q = DMatrix::from_row_slice(n, n, &q);
        }
        None if cfg.controller.q.nrows() != n => cfg.controller.q = DMatrix::identity(n, n),
        None => {}
    }
    if !lines_by_key.contains_key("sensor_channel.sample_period") {
        cfg.sensor_channel.sample_period = cfg.dt;
    }
    if !lines_by_key.contains_key("actuator_channel.sample_period") {
        cfg.actuator_channel.sample_period = cfg.dt;
    }
    if !lines_by_key.contains_key("controller.filter_alpha") {
        cfg.controller.filter_alpha = cfg.default_filter_alpha();
    }
    cfg.set_seed(cfg.seed);

    let line_of = |key: &str| lines_by_key.get(key).copied().unwrap_or(0);
    validate(&cfg, &line_of)?;
    Ok(cfg)
}

/// Checks every invariant of a config. `line_of` maps keys to source lines
/// for error messages.
pub(crate) fn validate(
    cfg: &ExperimentConfig,
    line_of: &dyn Fn(&str) -> usize,
) -> Result<(), HarnessError> {
    let fail = |key: &str, message: String| err(line_of(key), key, message);

    if !(cfg.duration > 0.0 && cfg.duration.is_finite()) {
        return Err(fail(
            "duration",
            format!("must be positive, got {}", cfg.duration),
        ));
    }
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(fail("dt", format!("must be positive, got {}", cfg.dt)));
    }
    if cfg.duration / cfg.dt > 1e7 {
        return Err(fail("duration", "duration / dt exceeds 1e7 steps".into()));
    }
    if !(cfg.reference.amplitude >= 0.0 && cfg.reference.amplitude.is_finite()) {
        return Err(fail(
            "reference.amplitude",
            "must be finite and non-negative".into(),
        ));
    }
    if !cfg.reference.frequency.is_finite() {
        return Err(fail("reference.frequency", "must be finite".into()));
    }
    if let Err(m) = cfg.plant.validate() {
        let key = ["cart_mass", "pole_mass", "half_length", "gravity"]
            .into_iter()
            .find(|k| m.starts_with(k))
            .map(|k| format!("plant.{k}"))
            .unwrap_or_else(|| "plant".into());
        return Err(fail(&key, m));
    }
    if cfg.initial_state.len() != 2 || cfg.initial_state.iter().any(|v| !v.is_finite()) {
        return Err(fail(
            "plant.x0",
            "needs two finite entries (angle, rate)".into(),
        ));
    }
    if !(cfg.disturbance.d0.is_finite() && cfg.disturbance.omega_d.is_finite()) {
        return Err(fail("disturbance.d0", "must be finite".into()));
    }

    for (prefix, ch) in [
        ("sensor_channel", &cfg.sensor_channel),
        ("actuator_channel", &cfg.actuator_channel),
    ] {
        if let Err(e) = ch.validate(cfg.dt) {
            let field = match &e {
                ChannelError::DropProbability(_) => "drop_prob",
                ChannelError::NotMultipleOfStep { name, .. } => name,
                ChannelError::SamplePeriod(_) => "sample_period",
                _ => "delay",
            };
            return Err(fail(&format!("{prefix}.{field}"), e.to_string()));
        }
    }

    if cfg.controller.k.len() != 2 {
        return Err(fail(
            "controller.k",
            format!(
                "the pendulum has order 2, got {} gains",
                cfg.controller.k.len()
            ),
        ));
    }
    if let Err(e) = cfg.controller.validate() {
        let key = match &e {
            ControlError::NotHurwitz(_) => "controller.k".to_string(),
            ControlError::NotPositiveDefinite | ControlError::Dimension(_) => {
                "controller.q".to_string()
            }
            ControlError::Parameter { name, .. } => format!("controller.{name}"),
            _ => "controller".to_string(),
        };
        let message = match &e {
            ControlError::NotHurwitz(_) => "companion matrix is not Hurwitz".to_string(),
            other => other.to_string(),
        };
        return Err(fail(&key, message));
    }

    let fz = &cfg.fuzzy;
    if fz.lo.len() != 2 || fz.hi.len() != 2 || fz.counts.len() != 2 {
        return Err(fail("fuzzy.lo", "grid needs exactly two dimensions".into()));
    }
    if let Err(e) = MembershipGrid::over_box(&fz.lo, &fz.hi, &fz.counts, fz.width_scale) {
        let key = if fz.counts.contains(&0) {
            "fuzzy.counts"
        } else if !(fz.width_scale > 0.0) {
            "fuzzy.width_scale"
        } else {
            "fuzzy.hi"
        };
        return Err(fail(key, e.to_string()));
    }
    if !(fz.theta_f_init.is_finite() && fz.theta_g_init.is_finite()) {
        return Err(fail("fuzzy.theta_g_init", "must be finite".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_err(text: &str) -> (usize, String, String) {
        match parse_config(text) {
            Err(HarnessError::Config { line, key, message }) => (line, key, message),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_document_is_nominal() {
        assert_eq!(
            parse_config("").unwrap(),
            ExperimentConfig::preset(Preset::Nominal)
        );
        assert_eq!(
            parse_config("# only a comment\n\n   \n").unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn single_override() {
        let cfg = parse_config("actuator_channel.delay = 0.02").unwrap();
        let mut expected = ExperimentConfig::default();
        expected.actuator_channel.delay = 0.02;
        // a nonzero delay switches the default error filter on
        expected.controller.filter_alpha = 0.2;
        assert_eq!(cfg, expected);
    }

    #[test]
    fn non_hurwitz_gains_rejected() {
        let (line, key, message) = config_err("dt = 0.001\ncontroller.k = 1, -2\n");
        assert_eq!(line, 2);
        assert_eq!(key, "controller.k");
        assert!(message.contains("Hurwitz"));
    }

    #[test]
    fn unknown_and_malformed() {
        assert_eq!(config_err("foo = 1").1, "foo");
        let (line, key, _) = config_err("\n\nduration = abc");
        assert_eq!((line, key.as_str()), (3, "duration"));
        assert_eq!(config_err("duration").0, 1);
        let (line, _, message) = config_err("dt = 0.001\ndt = 0.002");
        assert_eq!(line, 2);
        assert!(message.contains("duplicate"));
        assert_eq!(
            config_err("controller.ideal_model = maybe").1,
            "controller.ideal_model"
        );
    }

    #[test]
    fn invariant_violations_name_key_and_line() {
        assert_eq!(config_err("duration = -1").1, "duration");
        let (line, key, _) = config_err("dt = 0.001\nactuator_channel.delay = 0.0015");
        assert_eq!((line, key.as_str()), (2, "actuator_channel.delay"));
        assert_eq!(
            config_err("sensor_channel.drop_prob = 1").1,
            "sensor_channel.drop_prob"
        );
        assert_eq!(config_err("controller.q = 1, 0, 0, -1").1, "controller.q");
        assert_eq!(config_err("controller.q = 1, 0, 0").1, "controller.q");
        assert_eq!(config_err("controller.gamma_f = 0").1, "controller.gamma_f");
        assert_eq!(config_err("plant.pole_mass = 0").1, "plant.pole_mass");
        assert_eq!(config_err("plant.x0 = 1").1, "plant.x0");
        assert_eq!(config_err("fuzzy.counts = 0, 3").1, "fuzzy.counts");
        assert_eq!(config_err("duration = 1e5\ndt = 1e-3").1, "duration");
    }

    #[test]
    fn preset_key_and_overrides() {
        let cfg = parse_config("preset = networked\nseed = 7").unwrap();
        assert_eq!(cfg.actuator_channel.drop_prob, 0.1);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.sensor_channel.seed, 7);

        let over = ConfigOverrides {
            preset: Some(Preset::Stress),
            seed: Some(99),
            duration: Some(5.0),
        };
        let cfg = parse_config_with_base("preset = networked\nseed = 7", &over).unwrap();
        assert_eq!(cfg.actuator_channel.delay, 0.05);
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.duration, 5.0);
    }

    #[test]
    fn sample_period_tracks_dt() {
        let cfg = parse_config("dt = 0.002").unwrap();
        assert_eq!(cfg.actuator_channel.sample_period, 0.002);
        let cfg = parse_config("dt = 0.002\nactuator_channel.sample_period = 0.01").unwrap();
        assert_eq!(cfg.actuator_channel.sample_period, 0.01);
        assert_eq!(cfg.sensor_channel.sample_period, 0.002);
    }

    #[test]
    fn full_document() {
        let text = "\
            # pendulum run\n\
            duration = 10      # seconds\n\
            controller.k = 4, 4\n\
            controller.q = 2, 0, 0, 1\n\
            controller.r = inf\n\
            controller.filter_alpha = 0.5\n\
            fuzzy.counts = 3, 7\n\
            plant.x0 = 0.05, 0\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.duration, 10.0);
        assert_eq!(cfg.controller.k, vec![4.0, 4.0]);
        assert_eq!(cfg.controller.q[(0, 0)], 2.0);
        assert!(cfg.controller.r.is_infinite());
        assert_eq!(cfg.controller.filter_alpha, 0.5);
        assert_eq!(cfg.fuzzy.counts, vec![3, 7]);
        assert_eq!(cfg.initial_state, vec![0.05, 0.0]);
    }

    #[test]
    fn every_documented_key_is_accepted() {
        // Values chosen to be valid for each key in isolation.
        let sample = |key: &str| match key {
            "preset" => "nominal",
            "seed" => "3",
            "plant.x0" => "0, 0",
            "controller.k" => "1, 2",
            "controller.q" => "1, 0, 0, 1",
            "controller.ideal_model" => "false",
            "fuzzy.lo" => "-0.5, -1",
            "fuzzy.hi" => "0.5, 1",
            "fuzzy.counts" => "5, 5",
            "duration" => "2",
            "dt" => "0.001",
            "sensor_channel.drop_prob" | "actuator_channel.drop_prob" => "0.1",
            k if k.ends_with("delay") || k.ends_with("sample_period") => "0.001",
            "controller.filter_alpha" => "0.5",
            "reference.amplitude" => "0.1",
            _ => "1.5",
        };
        for (key, _) in CONFIG_KEYS {
            let text = format!("{key} = {}", sample(key));
            assert!(
                parse_config(&text).is_ok(),
                "{text}: {:?}",
                parse_config(&text)
            );
        }
    }
}
