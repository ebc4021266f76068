//! Seeded synthetic event logs whose outcome is decided by control flow.
//!
//! Each case is a random walk over activities `a0, a1, ...`. With some
//! probability a `SIGNAL` event is inserted at a uniform position inside a
//! fixed window; the ground-truth label is whether the signal occurs,
//! replaced by a fair coin flip with probability `noise`.

use std::path::Path;

use chrono::{Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::{AttributeKind, AttributeSchema, AttributeValue, Event, EventLog, RoleColumns, SchemaConfig, Scope, Trace};
use crate::labeling::{write_labels, Labels};

pub const SIGNAL_ACTIVITY: &str = "SIGNAL";

const CHANNELS: [&str; 3] = ["branch", "phone", "web"];
const RESOURCES: [&str; 5] = ["r0", "r1", "r2", "r3", "r4"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticParams {
    pub n_traces: usize,
    pub alphabet_size: usize,
    /// Inclusive bounds on the number of events per case, signal included.
    pub min_len: usize,
    pub max_len: usize,
    pub signal_probability: f64,
    /// Inclusive 1-based positions where the signal may be placed.
    pub signal_window: (usize, usize),
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            n_traces: 1000,
            alphabet_size: 6,
            min_len: 8,
            max_len: 20,
            signal_probability: 0.5,
            signal_window: (3, 6),
            noise: 0.1,
            seed: 1,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.signal_window;
        let problems = [
            (self.n_traces == 0, "n_traces must be positive"),
            (self.alphabet_size == 0, "alphabet_size must be positive"),
            (self.min_len == 0 || self.min_len > self.max_len, "need 1 <= min_len <= max_len"),
            (lo == 0 || lo > hi, "need 1 <= signal window start <= end"),
            (hi > self.min_len, "signal window must end within min_len"),
            (!(0.0..=1.0).contains(&self.signal_probability), "signal_probability outside [0, 1]"),
            (!(0.0..=1.0).contains(&self.noise), "noise outside [0, 1]"),
        ];
        match problems.iter().find(|(bad, _)| *bad) {
            Some((_, msg)) => Err(Error::InvalidConfig((*msg).to_owned())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticLog {
    pub log: EventLog,
    /// Noisy ground-truth labels.
    pub labels: Labels,
    /// Whether each case contains the signal, before noise.
    pub signal: Labels,
    pub schema: SchemaConfig,
}

pub fn synthetic_schema_config() -> SchemaConfig {
    SchemaConfig {
        case_id: "case_id".into(),
        activity: "activity".into(),
        timestamp: "timestamp".into(),
        static_attributes: vec!["channel".into(), "amount".into()],
        dynamic: vec!["resource".into(), "cost".into()],
        ..Default::default()
    }
}

pub fn generate_synthetic(params: &SyntheticParams) -> Result<SyntheticLog> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let base = Utc.with_ymd_and_hms(2020, 1, 6, 8, 0, 0).unwrap();
    let width = (params.n_traces.max(1) as f64).log10().ceil().max(1.0) as usize;
    let mut traces = Vec::with_capacity(params.n_traces);
    let mut labels = Labels::new();
    let mut signal = Labels::new();

    for i in 0..params.n_traces {
        let case = format!("case{i:0width$}");
        let len = rng.gen_range(params.min_len..=params.max_len);
        let has_signal = rng.gen_bool(params.signal_probability);
        let signal_pos = rng.gen_range(params.signal_window.0..=params.signal_window.1);
        let channel = CHANNELS[rng.gen_range(0..CHANNELS.len())];
        let amount = (rng.gen_range(100.0..10_000.0f64) * 100.0).round() / 100.0;

        let mut ts = base + Duration::minutes(30 * i as i64 + rng.gen_range(0..30));
        let mut current = rng.gen_range(0..params.alphabet_size);
        let mut events = Vec::with_capacity(len);
        for pos in 1..=len {
            let activity = if has_signal && pos == signal_pos {
                SIGNAL_ACTIVITY.to_owned()
            } else {
                // Mostly step to the next activity, sometimes jump.
                current = if rng.gen_bool(0.7) {
                    (current + 1) % params.alphabet_size
                } else {
                    rng.gen_range(0..params.alphabet_size)
                };
                format!("a{current}")
            };
            let resource = RESOURCES[rng.gen_range(0..RESOURCES.len())];
            let cost = (rng.gen_range(1.0..500.0f64) * 100.0).round() / 100.0;
            events.push(
                Event::new(activity, &case, ts)
                    .with("channel", AttributeValue::Categorical(channel.into()))
                    .with("amount", AttributeValue::Numeric(amount))
                    .with("resource", AttributeValue::Categorical(resource.into()))
                    .with("cost", AttributeValue::Numeric(cost)),
            );
            ts += Duration::minutes(rng.gen_range(1..=120));
        }
        let noisy = rng.gen_bool(params.noise);
        let coin = rng.gen_bool(0.5);
        labels.insert(case.clone(), if noisy { coin } else { has_signal });
        signal.insert(case.clone(), has_signal);
        traces.push(Trace::new(case, events)?);
    }

    let schema = synthetic_schema_config();
    let attributes = vec![
        attribute("channel", Scope::Case, AttributeKind::Categorical),
        attribute("amount", Scope::Case, AttributeKind::Numeric),
        attribute("resource", Scope::Event, AttributeKind::Categorical),
        attribute("cost", Scope::Event, AttributeKind::Numeric),
    ];
    let roles = RoleColumns {
        case_id: schema.case_id.clone(),
        activity: schema.activity.clone(),
        timestamp: schema.timestamp.clone(),
    };
    Ok(SyntheticLog {
        log: EventLog::new(traces, attributes, roles)?,
        labels,
        signal,
        schema,
    })
}

fn attribute(name: &str, scope: Scope, kind: AttributeKind) -> AttributeSchema {
    AttributeSchema {
        name: name.into(),
        scope,
        kind,
        levels: Vec::new(),
    }
}

/// Writes `log.csv`, `schema.toml` and `labels.csv` into `dir`.
pub fn write_synthetic(synth: &SyntheticLog, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| {
        let path = dir.join(name);
        std::fs::File::create(&path)
            .map(std::io::BufWriter::new)
            .map_err(|e| Error::io(path, e))
    };
    synth.log.write_csv(create("log.csv")?)?;
    write_labels(&synth.labels, create("labels.csv")?)?;
    let path = dir.join("schema.toml");
    std::fs::write(&path, synth.schema.to_toml_string()).map_err(|e| Error::io(path, e))?;
    Ok(())
}
