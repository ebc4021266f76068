//! Event logs: parsing, schema inference and derived attributes.
//!
//! An [`EventLog`] is a set of completed [`Trace`]s. Every event carries its
//! activity, case id, timestamp and a payload of typed attribute values. The
//! [`AttributeSchema`] list records, per payload column, whether it is a
//! static case attribute or a dynamic event attribute and whether it is
//! categorical or numeric.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, NaiveDate, NaiveDateTime, SecondsFormat, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reserved categorical level for a missing value.
pub const MISSING_LEVEL: &str = "⊥";

/// Names of the intra-case time attributes added by [`derive_time_features`].
pub const TIME_FEATURES: [&str; 6] = [
    "month",
    "weekday",
    "hour",
    "elapsed_prev",
    "elapsed_start",
    "position",
];

/// Name of the inter-case attribute added by [`derive_open_cases`].
pub const OPEN_CASES: &str = "open_cases";

pub type Timestamp = DateTime<Utc>;

#[derive(Debug, Clone, PartialEq)]
pub enum AttributeValue {
    Categorical(String),
    Numeric(f64),
    Missing,
}

impl AttributeValue {
    pub fn as_numeric(&self) -> Option<f64> {
        match self {
            AttributeValue::Numeric(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&str> {
        match self {
            AttributeValue::Categorical(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Case,
    Event,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Categorical,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    pub scope: Scope,
    pub kind: AttributeKind,
    /// Sorted, duplicate-free observed levels; empty for numeric attributes.
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub activity: String,
    pub case_id: String,
    pub timestamp: Timestamp,
    pub payload: BTreeMap<String, AttributeValue>,
}

impl Event {
    pub fn new(activity: impl Into<String>, case_id: impl Into<String>, timestamp: Timestamp) -> Self {
        Event {
            activity: activity.into(),
            case_id: case_id.into(),
            timestamp,
            payload: BTreeMap::new(),
        }
    }

    pub fn with(mut self, name: impl Into<String>, value: AttributeValue) -> Self {
        self.payload.insert(name.into(), value);
        self
    }

    pub fn value(&self, name: &str) -> &AttributeValue {
        self.payload.get(name).unwrap_or(&AttributeValue::Missing)
    }
}

/// Events of one case, ordered by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    case_id: String,
    events: Vec<Event>,
}

impl Trace {
    pub fn new(case_id: impl Into<String>, events: Vec<Event>) -> Result<Self> {
        let case_id = case_id.into();
        if events.is_empty() {
            return Err(Error::SchemaMismatch(format!("trace `{case_id}` has no events")));
        }
        for e in &events {
            if e.case_id != case_id {
                return Err(Error::SchemaMismatch(format!(
                    "event of case `{}` inside trace `{case_id}`",
                    e.case_id
                )));
            }
            if e.activity.is_empty() {
                return Err(Error::SchemaMismatch(format!("empty activity in trace `{case_id}`")));
            }
        }
        if events.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
            return Err(Error::SchemaMismatch(format!(
                "timestamps decrease within trace `{case_id}`"
            )));
        }
        if case_id.is_empty() {
            return Err(Error::SchemaMismatch("empty case id".into()));
        }
        Ok(Trace { case_id, events })
    }

    pub fn case_id(&self) -> &str {
        &self.case_id
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn activities(&self) -> impl Iterator<Item = &str> {
        self.events.iter().map(|e| e.activity.as_str())
    }

    pub fn start(&self) -> Timestamp {
        self.events[0].timestamp
    }

    pub fn end(&self) -> Timestamp {
        self.events[self.events.len() - 1].timestamp
    }

    /// Keeps the first `len` events. Returns `None` when nothing would remain.
    pub fn truncated(&self, len: usize) -> Option<Trace> {
        if len == 0 {
            return None;
        }
        Some(Trace {
            case_id: self.case_id.clone(),
            events: self.events[..len.min(self.events.len())].to_vec(),
        })
    }

    pub(crate) fn events_mut(&mut self) -> &mut [Event] {
        &mut self.events
    }
}

/// Column roles of the source CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleColumns {
    pub case_id: String,
    pub activity: String,
    pub timestamp: String,
}

/// Sidecar declaring which CSV columns play which role.
///
/// ```toml
/// case_id = "case"
/// activity = "activity"
/// timestamp = "time"
/// static = ["age", "gender"]
/// dynamic = ["amountPaid", "department"]
/// ignore = ["comment"]
///
/// [kinds]
/// gender = "categorical"
/// ```
///
/// Columns not mentioned are ignored. `kinds` overrides the inferred kind.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub case_id: String,
    pub activity: String,
    pub timestamp: String,
    #[serde(rename = "static", default)]
    pub static_attributes: Vec<String>,
    #[serde(default)]
    pub dynamic: Vec<String>,
    #[serde(default)]
    pub ignore: Vec<String>,
    #[serde(default)]
    pub kinds: BTreeMap<String, AttributeKind>,
}

impl SchemaConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SchemaConfig =
            toml::from_str(text).map_err(|e| Error::SchemaConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema config is always serializable")
    }

    fn validate(&self) -> Result<()> {
        for (role, col) in [
            ("case_id", &self.case_id),
            ("activity", &self.activity),
            ("timestamp", &self.timestamp),
        ] {
            if col.is_empty() {
                return Err(Error::SchemaConfig(format!("`{role}` column name is empty")));
            }
        }
        let mut seen = BTreeSet::new();
        let roles = [&self.case_id, &self.activity, &self.timestamp];
        for name in roles.into_iter().chain(&self.static_attributes).chain(&self.dynamic) {
            if !seen.insert(name.as_str()) {
                return Err(Error::SchemaConfig(format!("column `{name}` declared twice")));
            }
        }
        Ok(())
    }

    fn attribute_columns(&self) -> impl Iterator<Item = (&str, Scope)> {
        self.static_attributes
            .iter()
            .map(|c| (c.as_str(), Scope::Case))
            .chain(self.dynamic.iter().map(|c| (c.as_str(), Scope::Event)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    traces: Vec<Trace>,
    schema: Vec<AttributeSchema>,
    activity_alphabet: Vec<String>,
    roles: RoleColumns,
}

impl EventLog {
    /// Builds a log from already-grouped traces. Categorical levels and the
    /// activity alphabet are recomputed from the data.
    pub fn new(traces: Vec<Trace>, schema: Vec<AttributeSchema>, roles: RoleColumns) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for t in &traces {
            if !ids.insert(t.case_id.as_str()) {
                return Err(Error::SchemaMismatch(format!("duplicate case id `{}`", t.case_id)));
            }
        }
        let mut log = EventLog {
            traces,
            schema,
            activity_alphabet: Vec::new(),
            roles,
        };
        log.refresh();
        Ok(log)
    }

    pub fn traces(&self) -> &[Trace] {
        &self.traces
    }

    pub fn schema(&self) -> &[AttributeSchema] {
        &self.schema
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeSchema> {
        self.schema.iter().find(|a| a.name == name)
    }

    pub fn activity_alphabet(&self) -> &[String] {
        &self.activity_alphabet
    }

    pub fn roles(&self) -> &RoleColumns {
        &self.roles
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.traces.iter().map(Trace::len).sum()
    }

    pub fn trace(&self, case_id: &str) -> Option<&Trace> {
        self.traces.iter().find(|t| t.case_id == case_id)
    }

    /// Same schema, different traces. Levels and alphabet are recomputed.
    pub fn with_traces(&self, traces: Vec<Trace>) -> Result<Self> {
        EventLog::new(traces, self.schema.clone(), self.roles.clone())
    }

    /// A schema config that re-parses this log's canonical CSV identically.
    pub fn schema_config(&self) -> SchemaConfig {
        let pick = |scope| {
            self.schema
                .iter()
                .filter(|a| a.scope == scope)
                .map(|a| a.name.clone())
                .collect::<Vec<_>>()
        };
        SchemaConfig {
            case_id: self.roles.case_id.clone(),
            activity: self.roles.activity.clone(),
            timestamp: self.roles.timestamp.clone(),
            static_attributes: pick(Scope::Case),
            dynamic: pick(Scope::Event),
            ignore: Vec::new(),
            kinds: self.schema.iter().map(|a| (a.name.clone(), a.kind)).collect(),
        }
    }

    fn refresh(&mut self) {
        let alphabet: BTreeSet<&str> = self.traces.iter().flat_map(|t| t.activities()).collect();
        self.activity_alphabet = alphabet.into_iter().map(str::to_owned).collect();
        for attr in &mut self.schema {
            attr.levels = match attr.kind {
                AttributeKind::Numeric => Vec::new(),
                AttributeKind::Categorical => {
                    let levels: BTreeSet<&str> = self
                        .traces
                        .iter()
                        .flat_map(|t| t.events.iter())
                        .filter_map(|e| e.value(&attr.name).as_categorical())
                        .collect();
                    levels.into_iter().map(str::to_owned).collect()
                }
            };
        }
    }

    fn ensure_numeric_attribute(&mut self, name: &str) {
        match self.schema.iter_mut().find(|a| a.name == name) {
            Some(attr) => {
                attr.scope = Scope::Event;
                attr.kind = AttributeKind::Numeric;
                attr.levels.clear();
            }
            None => self.schema.push(AttributeSchema {
                name: name.to_owned(),
                scope: Scope::Event,
                kind: AttributeKind::Numeric,
                levels: Vec::new(),
            }),
        }
    }

    /// Writes the canonical CSV: role columns, then schema attributes in order.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec![
            self.roles.case_id.as_str(),
            self.roles.activity.as_str(),
            self.roles.timestamp.as_str(),
        ];
        header.extend(self.schema.iter().map(|a| a.name.as_str()));
        w.write_record(&header)?;
        for trace in &self.traces {
            for e in &trace.events {
                let mut row = vec![e.case_id.clone(), e.activity.clone(), format_timestamp(e.timestamp)];
                for attr in &self.schema {
                    row.push(match e.value(&attr.name) {
                        AttributeValue::Numeric(v) => v.to_string(),
                        AttributeValue::Categorical(s) if s == MISSING_LEVEL => String::new(),
                        AttributeValue::Categorical(s) => s.clone(),
                        AttributeValue::Missing => String::new(),
                    });
                }
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv sink>", e))?;
        Ok(())
    }
}

pub fn format_timestamp(ts: Timestamp) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// Parses ISO-8601 timestamps. Naive times are taken as UTC.
pub fn parse_timestamp(text: &str) -> Option<Timestamp> {
    let text = text.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        return Some(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(text, fmt) {
            return Some(naive.and_utc());
        }
    }
    NaiveDate::parse_from_str(text, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|n| n.and_utc())
}

fn parse_number(text: &str) -> Option<f64> {
    text.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses a CSV event log, inferring attribute kinds from the data.
pub fn parse_event_log<R: Read>(csv_stream: R, config: &SchemaConfig) -> Result<EventLog> {
    parse_with_kinds(csv_stream, config, &BTreeMap::new())
}

/// Parses a CSV event log whose attribute kinds are dictated by a known
/// schema (used at prediction time so that inference cannot drift).
pub fn parse_event_log_with_schema<R: Read>(
    csv_stream: R,
    config: &SchemaConfig,
    schema: &[AttributeSchema],
) -> Result<EventLog> {
    let kinds = schema.iter().map(|a| (a.name.clone(), a.kind)).collect();
    parse_with_kinds(csv_stream, config, &kinds)
}

struct RawRow {
    line: usize,
    case_id: String,
    activity: String,
    timestamp: Timestamp,
    cells: Vec<String>,
}

fn parse_with_kinds<R: Read>(
    csv_stream: R,
    config: &SchemaConfig,
    forced: &BTreeMap<String, AttributeKind>,
) -> Result<EventLog> {
    config.validate()?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(csv_stream);
    let header = reader.headers()?.clone();
    let column = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_owned()))
    };
    let case_col = column(&config.case_id)?;
    let act_col = column(&config.activity)?;
    let ts_col = column(&config.timestamp)?;
    let attrs: Vec<(String, Scope, usize)> = config
        .attribute_columns()
        .map(|(name, scope)| Ok((name.to_owned(), scope, column(name)?)))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(rows.len() + 2, |p| p.line() as usize);
        let field = |i: usize| record.get(i).unwrap_or("").trim().to_owned();
        let case_id = field(case_col);
        let activity = field(act_col);
        if case_id.is_empty() || activity.is_empty() {
            return Err(Error::InvalidRow {
                row: line,
                message: "empty case id or activity".into(),
            });
        }
        let raw_ts = field(ts_col);
        let timestamp = parse_timestamp(&raw_ts).ok_or(Error::TimestampParse {
            row: line,
            value: raw_ts,
        })?;
        rows.push(RawRow {
            line,
            case_id,
            activity,
            timestamp,
            cells: attrs.iter().map(|(_, _, i)| field(*i)).collect(),
        });
    }

    let mut schema = Vec::with_capacity(attrs.len());
    for (j, (name, scope, _)) in attrs.iter().enumerate() {
        let inferred = {
            let mut present = rows.iter().map(|r| r.cells[j].as_str()).filter(|c| !c.is_empty()).peekable();
            if present.peek().is_some() && present.all(|c| parse_number(c).is_some()) {
                AttributeKind::Numeric
            } else {
                AttributeKind::Categorical
            }
        };
        let kind = forced
            .get(name)
            .or_else(|| config.kinds.get(name))
            .copied()
            .unwrap_or(inferred);
        schema.push(AttributeSchema {
            name: name.clone(),
            scope: *scope,
            kind,
            levels: Vec::new(),
        });
    }

    // Group by case id in order of first appearance, then stable-sort by time.
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Event>> = HashMap::new();
    for row in rows {
        let mut event = Event::new(row.activity, row.case_id.clone(), row.timestamp);
        for (attr, cell) in schema.iter().zip(row.cells) {
            let value = match attr.kind {
                _ if cell.is_empty() && attr.kind == AttributeKind::Categorical => {
                    AttributeValue::Categorical(MISSING_LEVEL.to_owned())
                }
                _ if cell.is_empty() => AttributeValue::Missing,
                AttributeKind::Numeric => match parse_number(&cell) {
                    Some(v) => AttributeValue::Numeric(v),
                    None => {
                        return Err(Error::InvalidRow {
                            row: row.line,
                            message: format!("`{}` is not numeric for attribute `{}`", cell, attr.name),
                        })
                    }
                },
                AttributeKind::Categorical => AttributeValue::Categorical(cell),
            };
            event.payload.insert(attr.name.clone(), value);
        }
        groups
            .entry(row.case_id)
            .or_insert_with_key(|k| {
                order.push(k.clone());
                Vec::new()
            })
            .push(event);
    }

    let mut traces = Vec::with_capacity(order.len());
    for case_id in order {
        let mut events = groups.remove(&case_id).unwrap_or_default();
        events.sort_by_key(|e| e.timestamp);
        for attr in schema.iter().filter(|a| a.scope == Scope::Case) {
            let first = events[0].value(&attr.name);
            if events.iter().any(|e| e.value(&attr.name) != first) {
                return Err(Error::InconsistentCaseAttribute {
                    case_id,
                    attribute: attr.name.clone(),
                });
            }
        }
        traces.push(Trace::new(case_id, events)?);
    }

    EventLog::new(
        traces,
        schema,
        RoleColumns {
            case_id: config.case_id.clone(),
            activity: config.activity.clone(),
            timestamp: config.timestamp.clone(),
        },
    )
}

fn seconds_between(later: Timestamp, earlier: Timestamp) -> f64 {
    (later - earlier).num_milliseconds() as f64 / 1000.0
}

/// Adds month, weekday (0 = Monday), hour, seconds since the previous event,
/// seconds since case start and 1-based position to every event.
pub fn derive_time_features(log: &EventLog) -> EventLog {
    let mut out = log.clone();
    for name in TIME_FEATURES {
        out.ensure_numeric_attribute(name);
    }
    for trace in &mut out.traces {
        add_time_features(trace);
    }
    out
}

/// Per-trace form of [`derive_time_features`]; every feature depends only on
/// the events up to and including the current one, so this also applies to
/// running cases.
pub fn derive_trace_time_features(trace: &Trace) -> Trace {
    let mut out = trace.clone();
    add_time_features(&mut out);
    out
}

fn add_time_features(trace: &mut Trace) {
    let start = trace.start();
    let mut prev = start;
    for (i, e) in trace.events_mut().iter_mut().enumerate() {
        let ts = e.timestamp;
        let values = [
            ts.month() as f64,
            ts.weekday().num_days_from_monday() as f64,
            ts.hour() as f64,
            seconds_between(ts, prev),
            seconds_between(ts, start),
            (i + 1) as f64,
        ];
        for (name, v) in TIME_FEATURES.iter().zip(values) {
            e.payload.insert((*name).to_owned(), AttributeValue::Numeric(v));
        }
        prev = ts;
    }
}

/// Adds the number of cases open at each event's timestamp (the case itself
/// included).
pub fn derive_open_cases(log: &EventLog) -> EventLog {
    let mut starts: Vec<Timestamp> = log.traces.iter().map(Trace::start).collect();
    let mut ends: Vec<Timestamp> = log.traces.iter().map(Trace::end).collect();
    starts.sort_unstable();
    ends.sort_unstable();
    let mut out = log.clone();
    out.ensure_numeric_attribute(OPEN_CASES);
    for trace in &mut out.traces {
        for e in trace.events_mut() {
            let t = e.timestamp;
            let started = starts.partition_point(|s| *s <= t);
            let finished = ends.partition_point(|s| *s < t);
            e.payload
                .insert(OPEN_CASES.to_owned(), AttributeValue::Numeric((started - finished) as f64));
        }
    }
    out
}
