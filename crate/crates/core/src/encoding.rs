//! Sequence encodings: prefixes to fixed-width numeric vectors.
//!
//! Every encoded vector is the static block (case attributes) followed by an
//! event block whose layout depends on the [`EncodingKind`]:
//!
//! | kind        | numeric event attribute     | categorical event attribute |
//! |-------------|-----------------------------|-----------------------------|
//! | last state  | value of the last event     | one-hot of the last event   |
//! | aggregation | min, max, mean, sum, std    | per-level frequency         |
//! | index(L)    | value at each position      | one-hot at each position    |
//!
//! The activity is always the first event attribute and keeps every level
//! seen in training.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::{AttributeKind, AttributeSchema, AttributeValue, Event, Scope, MISSING_LEVEL};
use crate::prefixing::{PrefixInstance, PrefixLog};

/// Catch-all level for values dropped by the level filter or unseen in training.
pub const OTHER_LEVEL: &str = "OTHER";

/// Descriptor source name of the activity attribute.
pub const ACTIVITY: &str = "activity";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelFilterParams {
    pub min_count: usize,
    pub top_fraction: f64,
}

impl Default for LevelFilterParams {
    fn default() -> Self {
        LevelFilterParams {
            min_count: 10,
            top_fraction: 1.0,
        }
    }
}

/// One attribute as seen by the encoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedAttribute {
    pub name: String,
    pub kind: AttributeKind,
    /// Sorted levels, optionally followed by [`OTHER_LEVEL`].
    pub levels: Vec<String>,
}

impl EncodedAttribute {
    pub fn numeric(name: impl Into<String>) -> Self {
        EncodedAttribute {
            name: name.into(),
            kind: AttributeKind::Numeric,
            levels: Vec::new(),
        }
    }

    /// Sorts `levels`; `with_other` appends the catch-all level.
    pub fn categorical<I, S>(name: impl Into<String>, levels: I, with_other: bool) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut levels: Vec<String> = levels.into_iter().map(Into::into).filter(|l| l != OTHER_LEVEL).collect();
        levels.sort();
        levels.dedup();
        if with_other {
            levels.push(OTHER_LEVEL.to_owned());
        }
        EncodedAttribute {
            name: name.into(),
            kind: AttributeKind::Categorical,
            levels,
        }
    }

    fn has_other(&self) -> bool {
        self.levels.last().is_some_and(|l| l == OTHER_LEVEL)
    }

    fn sorted_levels(&self) -> &[String] {
        if self.has_other() {
            &self.levels[..self.levels.len() - 1]
        } else {
            &self.levels
        }
    }

    /// One-hot slot of `value`; unknown values fall back to OTHER when present.
    pub fn slot(&self, value: &str) -> Option<usize> {
        match self.sorted_levels().binary_search_by(|l| l.as_str().cmp(value)) {
            Ok(i) => Some(i),
            Err(_) if self.has_other() => Some(self.levels.len() - 1),
            Err(_) => None,
        }
    }

    fn width(&self) -> usize {
        match self.kind {
            AttributeKind::Numeric => 1,
            AttributeKind::Categorical => self.levels.len(),
        }
    }
}

/// Schema after level filtering: what the encoders are allowed to see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredSchema {
    pub activities: EncodedAttribute,
    pub case_attributes: Vec<EncodedAttribute>,
    pub event_attributes: Vec<EncodedAttribute>,
}

impl FilteredSchema {
    /// Event attributes including the leading activity.
    pub fn dynamic(&self) -> impl Iterator<Item = &EncodedAttribute> {
        std::iter::once(&self.activities).chain(&self.event_attributes)
    }

    pub fn alphabet(&self) -> &[String] {
        &self.activities.levels
    }
}

/// Level filter fitted on training prefixes.
///
/// Levels are counted once per distinct event covered by the prefix log
/// (the longest prefix of every case). For every categorical attribute but
/// the activity, levels seen fewer than `min_count` times are dropped, the
/// `top_fraction` most frequent survivors are kept, and OTHER is appended.
pub fn fit_level_filter(prefixes: &PrefixLog, schema: &[AttributeSchema], params: LevelFilterParams) -> FilteredSchema {
    let mut longest: BTreeMap<&str, &PrefixInstance> = BTreeMap::new();
    for p in &prefixes.instances {
        let slot = longest.entry(p.case_id()).or_insert(p);
        if p.length() > slot.length() {
            *slot = p;
        }
    }
    let events: Vec<&Event> = longest.values().flat_map(|p| p.events()).collect();

    let mut activities: Vec<&str> = events.iter().map(|e| e.activity.as_str()).collect();
    activities.sort_unstable();
    activities.dedup();

    let mut case_attributes = Vec::new();
    let mut event_attributes = Vec::new();
    for attr in schema {
        let encoded = match attr.kind {
            AttributeKind::Numeric => EncodedAttribute::numeric(&attr.name),
            AttributeKind::Categorical => {
                let mut counts: HashMap<&str, usize> = HashMap::new();
                for e in &events {
                    let level = match e.value(&attr.name) {
                        AttributeValue::Categorical(s) => s.as_str(),
                        _ => MISSING_LEVEL,
                    };
                    *counts.entry(level).or_default() += 1;
                }
                EncodedAttribute::categorical(&attr.name, select_levels(counts, params), true)
            }
        };
        match attr.scope {
            Scope::Case => case_attributes.push(encoded),
            Scope::Event => event_attributes.push(encoded),
        }
    }
    FilteredSchema {
        activities: EncodedAttribute::categorical(ACTIVITY, activities, false),
        case_attributes,
        event_attributes,
    }
}

fn select_levels(counts: HashMap<&str, usize>, params: LevelFilterParams) -> Vec<String> {
    let mut frequent: Vec<(&str, usize)> = counts.into_iter().filter(|(_, c)| *c >= params.min_count).collect();
    frequent.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let keep = (params.top_fraction * frequent.len() as f64).ceil() as usize;
    frequent.truncate(keep);
    frequent.into_iter().map(|(l, _)| l.to_owned()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingKind {
    Static,
    LastState,
    Aggregation,
    /// Index encoding over prefixes of exactly this length.
    Index(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extractor {
    AsIs,
    OneHot(String),
    Freq(String),
    Occurs(String),
    Min,
    Max,
    Mean,
    Sum,
    Std,
    /// 1-based event position; `None` for the numeric value itself.
    Index(usize, Option<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub attribute: String,
    pub extractor: Extractor,
}

/// Fitted encoder layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FeatureSpaceFile", into = "FeatureSpaceFile")]
pub struct FeatureSpace {
    kind: EncodingKind,
    /// Aggregation uses 0/1 occurrence flags instead of counts.
    boolean_agg: bool,
    schema: FilteredSchema,
}

#[derive(Serialize, Deserialize)]
struct FeatureSpaceFile {
    kind: EncodingKind,
    boolean_agg: bool,
    schema: FilteredSchema,
    descriptors: Vec<FeatureDescriptor>,
}

impl From<FeatureSpace> for FeatureSpaceFile {
    fn from(space: FeatureSpace) -> Self {
        let descriptors = space.descriptors();
        FeatureSpaceFile {
            kind: space.kind,
            boolean_agg: space.boolean_agg,
            schema: space.schema,
            descriptors,
        }
    }
}

impl TryFrom<FeatureSpaceFile> for FeatureSpace {
    type Error = String;

    fn try_from(file: FeatureSpaceFile) -> Result<Self, String> {
        let space = FeatureSpace {
            kind: file.kind,
            boolean_agg: file.boolean_agg,
            schema: file.schema,
        };
        if space.descriptors() != file.descriptors {
            return Err("feature descriptors do not match the stored schema".into());
        }
        Ok(space)
    }
}

impl FeatureSpace {
    pub fn new(kind: EncodingKind, schema: FilteredSchema) -> Self {
        FeatureSpace {
            kind,
            boolean_agg: false,
            schema,
        }
    }

    pub fn with_boolean_aggregation(mut self, on: bool) -> Self {
        self.boolean_agg = on;
        self
    }

    pub fn kind(&self) -> EncodingKind {
        self.kind
    }

    pub fn schema(&self) -> &FilteredSchema {
        &self.schema
    }

    pub fn static_width(&self) -> usize {
        self.schema.case_attributes.iter().map(EncodedAttribute::width).sum()
    }

    /// Width of one event under last-state or index encoding.
    pub fn event_width(&self) -> usize {
        self.schema.dynamic().map(EncodedAttribute::width).sum()
    }

    pub fn aggregation_width(&self) -> usize {
        self.schema
            .dynamic()
            .map(|a| match a.kind {
                AttributeKind::Numeric => 5,
                AttributeKind::Categorical => a.levels.len(),
            })
            .sum()
    }

    pub fn width(&self) -> usize {
        self.static_width()
            + match self.kind {
                EncodingKind::Static => 0,
                EncodingKind::LastState => self.event_width(),
                EncodingKind::Aggregation => self.aggregation_width(),
                EncodingKind::Index(len) => len * self.event_width(),
            }
    }

    pub fn descriptors(&self) -> Vec<FeatureDescriptor> {
        let mut out = Vec::with_capacity(self.width());
        let mut push = |attribute: &str, extractor| {
            out.push(FeatureDescriptor {
                attribute: attribute.to_owned(),
                extractor,
            })
        };
        let snapshot = |attr: &EncodedAttribute, push: &mut dyn FnMut(&str, Extractor)| match attr.kind {
            AttributeKind::Numeric => push(&attr.name, Extractor::AsIs),
            AttributeKind::Categorical => {
                for l in &attr.levels {
                    push(&attr.name, Extractor::OneHot(l.clone()));
                }
            }
        };
        for attr in &self.schema.case_attributes {
            snapshot(attr, &mut push);
        }
        match self.kind {
            EncodingKind::Static => {}
            EncodingKind::LastState => {
                for attr in self.schema.dynamic() {
                    snapshot(attr, &mut push);
                }
            }
            EncodingKind::Aggregation => {
                for attr in self.schema.dynamic() {
                    match attr.kind {
                        AttributeKind::Numeric => {
                            for ex in [Extractor::Min, Extractor::Max, Extractor::Mean, Extractor::Sum, Extractor::Std] {
                                push(&attr.name, ex);
                            }
                        }
                        AttributeKind::Categorical => {
                            for l in &attr.levels {
                                let ex = if self.boolean_agg {
                                    Extractor::Occurs(l.clone())
                                } else {
                                    Extractor::Freq(l.clone())
                                };
                                push(&attr.name, ex);
                            }
                        }
                    }
                }
            }
            EncodingKind::Index(len) => {
                for i in 1..=len {
                    for attr in self.schema.dynamic() {
                        match attr.kind {
                            AttributeKind::Numeric => push(&attr.name, Extractor::Index(i, None)),
                            AttributeKind::Categorical => {
                                for l in &attr.levels {
                                    push(&attr.name, Extractor::Index(i, Some(l.clone())));
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Full method vector: static block followed by the event block.
    pub fn encode(&self, prefix: &PrefixInstance) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.width());
        self.encode_into(prefix, &mut out)?;
        Ok(out)
    }

    pub fn encode_into(&self, prefix: &PrefixInstance, out: &mut Vec<f64>) -> Result<()> {
        let start = out.len();
        encode_static(prefix, &self.schema, out)?;
        match self.kind {
            EncodingKind::Static => {}
            EncodingKind::LastState => encode_last_state(prefix, &self.schema, out)?,
            EncodingKind::Aggregation => encode_aggregation(prefix, &self.schema, self.boolean_agg, out)?,
            EncodingKind::Index(len) => encode_index(prefix, &self.schema, len, out)?,
        }
        debug_assert_eq!(out.len() - start, self.width());
        Ok(())
    }

    pub fn encode_all(&self, prefixes: &[PrefixInstance]) -> Result<FeatureMatrix> {
        let width = self.width();
        let mut values = Vec::with_capacity(width * prefixes.len());
        let mut row_meta = Vec::with_capacity(prefixes.len());
        for p in prefixes {
            self.encode_into(p, &mut values)?;
            row_meta.push(RowMeta {
                case_id: p.case_id().to_owned(),
                length: p.length(),
                label: p.label,
            });
        }
        Ok(FeatureMatrix {
            width,
            values,
            row_meta,
        })
    }
}

fn numeric_value(attr: &EncodedAttribute, event: &Event) -> Result<Option<f64>> {
    match event.value(&attr.name) {
        AttributeValue::Numeric(v) => Ok(Some(*v)),
        AttributeValue::Missing => Ok(None),
        AttributeValue::Categorical(s) => Err(Error::SchemaMismatch(format!(
            "attribute `{}` is numeric but got `{s}`",
            attr.name
        ))),
    }
}

fn categorical_value<'e>(attr: &EncodedAttribute, event: &'e Event) -> Result<&'e str> {
    match event.value(&attr.name) {
        AttributeValue::Categorical(s) => Ok(s),
        AttributeValue::Missing => Ok(MISSING_LEVEL),
        AttributeValue::Numeric(v) => Err(Error::SchemaMismatch(format!(
            "attribute `{}` is categorical but got number {v}",
            attr.name
        ))),
    }
}

fn one_hot(attr: &EncodedAttribute, value: &str, out: &mut Vec<f64>) {
    let base = out.len();
    out.resize(base + attr.levels.len(), 0.0);
    if let Some(i) = attr.slot(value) {
        out[base + i] = 1.0;
    }
}

/// Snapshot of one event: activity one-hot, then the event attributes.
fn encode_event(event: &Event, schema: &FilteredSchema, out: &mut Vec<f64>) -> Result<()> {
    one_hot(&schema.activities, &event.activity, out);
    for attr in &schema.event_attributes {
        match attr.kind {
            AttributeKind::Numeric => out.push(numeric_value(attr, event)?.unwrap_or(0.0)),
            AttributeKind::Categorical => one_hot(attr, categorical_value(attr, event)?, out),
        }
    }
    Ok(())
}

/// Case attributes of the prefix: numeric as-is, categorical one-hot.
pub fn encode_static(prefix: &PrefixInstance, schema: &FilteredSchema, out: &mut Vec<f64>) -> Result<()> {
    let first = &prefix.events()[0];
    for attr in &schema.case_attributes {
        match attr.kind {
            AttributeKind::Numeric => out.push(numeric_value(attr, first)?.unwrap_or(0.0)),
            AttributeKind::Categorical => one_hot(attr, categorical_value(attr, first)?, out),
        }
    }
    Ok(())
}

pub fn encode_last_state(prefix: &PrefixInstance, schema: &FilteredSchema, out: &mut Vec<f64>) -> Result<()> {
    encode_event(prefix.last_event(), schema, out)
}

/// Counts (or occurrence flags) per categorical level; min, max, mean, sum
/// and population std per numeric attribute over its non-missing values.
pub fn encode_aggregation(
    prefix: &PrefixInstance,
    schema: &FilteredSchema,
    boolean: bool,
    out: &mut Vec<f64>,
) -> Result<()> {
    let events = prefix.events();
    let base = out.len();
    out.resize(base + schema.activities.levels.len(), 0.0);
    for e in events {
        if let Some(i) = schema.activities.slot(&e.activity) {
            out[base + i] += 1.0;
        }
    }
    if boolean {
        out[base..].iter_mut().for_each(|v| *v = v.min(1.0));
    }
    for attr in &schema.event_attributes {
        match attr.kind {
            AttributeKind::Categorical => {
                let base = out.len();
                out.resize(base + attr.levels.len(), 0.0);
                for e in events {
                    if let Some(i) = attr.slot(categorical_value(attr, e)?) {
                        out[base + i] += 1.0;
                    }
                }
                if boolean {
                    out[base..].iter_mut().for_each(|v| *v = v.min(1.0));
                }
            }
            AttributeKind::Numeric => {
                let mut values = Vec::with_capacity(events.len());
                for e in events {
                    if let Some(v) = numeric_value(attr, e)? {
                        values.push(v);
                    }
                }
                out.extend_from_slice(&summary_stats(&values));
            }
        }
    }
    Ok(())
}

/// `[min, max, mean, sum, std]`, all zero for an empty slice.
fn summary_stats(values: &[f64]) -> [f64; 5] {
    if values.is_empty() {
        return [0.0; 5];
    }
    let n = values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().sum();
    let mean = sum / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    [min, max, mean, sum, var.sqrt()]
}

pub fn encode_index(prefix: &PrefixInstance, schema: &FilteredSchema, len: usize, out: &mut Vec<f64>) -> Result<()> {
    if prefix.length() != len {
        return Err(Error::LengthMismatch {
            expected: len,
            actual: prefix.length(),
        });
    }
    for e in prefix.events() {
        encode_event(e, schema, out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMeta {
    pub case_id: String,
    pub length: usize,
    pub label: bool,
}

/// Dense row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub width: usize,
    pub values: Vec<f64>,
    pub row_meta: Vec<RowMeta>,
}

impl FeatureMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == width), "ragged rows");
        FeatureMatrix {
            width,
            values: rows.concat(),
            row_meta: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        if self.width == 0 {
            self.row_meta.len()
        } else {
            self.values.len() / self.width
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn labels(&self) -> Vec<bool> {
        self.row_meta.iter().map(|m| m.label).collect()
    }
}

/// Per-column mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn fit_standardizer(matrix: &FeatureMatrix) -> Standardizer {
    let n = matrix.rows();
    let w = matrix.width;
    let mut mean = vec![0.0; w];
    let mut std = vec![0.0; w];
    if n == 0 {
        return Standardizer { mean, std };
    }
    for i in 0..n {
        for (m, x) in mean.iter_mut().zip(matrix.row(i)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    for i in 0..n {
        for ((s, m), x) in std.iter_mut().zip(&mean).zip(matrix.row(i)) {
            *s += (x - m) * (x - m);
        }
    }
    std.iter_mut().for_each(|s| *s = (*s / n as f64).sqrt());
    Standardizer { mean, std }
}

impl Standardizer {
    pub fn transform_row(&self, row: &mut [f64]) {
        for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = if *s > 0.0 { (*x - m) / s } else { 0.0 };
        }
    }
}

pub fn apply_standardizer(matrix: &FeatureMatrix, params: &Standardizer) -> FeatureMatrix {
    let mut out = matrix.clone();
    if out.width > 0 {
        for row in out.values.chunks_mut(out.width) {
            params.transform_row(row);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::Trace;
    use chrono::{TimeZone, Utc};

    fn schema() -> FilteredSchema {
        FilteredSchema {
            activities: EncodedAttribute::categorical(ACTIVITY, ["a", "b", "c"], false),
            case_attributes: vec![
                EncodedAttribute::numeric("age"),
                EncodedAttribute::categorical("gender", ["female", "male"], false),
            ],
            event_attributes: vec![
                EncodedAttribute::numeric("amountPaid"),
                EncodedAttribute::categorical("department", ["lab", "ward"], true),
            ],
        }
    }

    fn prefix(acts: &[(&str, Option<f64>, &str)], gender: &str) -> PrefixInstance {
        let t0 = Utc.with_ymd_and_hms(2017, 1, 2, 10, 30, 0).unwrap();
        let events = acts
            .iter()
            .enumerate()
            .map(|(i, (a, paid, dept))| {
                Event::new(*a, "1", t0 + chrono::Duration::minutes(i as i64))
                    .with("age", AttributeValue::Numeric(33.0))
                    .with("gender", AttributeValue::Categorical(gender.into()))
                    .with("amountPaid", paid.map_or(AttributeValue::Missing, AttributeValue::Numeric))
                    .with("department", AttributeValue::Categorical((*dept).into()))
            })
            .collect();
        PrefixInstance::whole(Trace::new("1", events).unwrap(), true)
    }

    #[test]
    fn static_block() {
        let p = prefix(&[("a", Some(10.0), "lab")], "female");
        let mut out = Vec::new();
        encode_static(&p, &schema(), &mut out).unwrap();
        assert_eq!(out, [33.0, 1.0, 0.0]);
    }

    #[test]
    fn unseen_level_uses_other() {
        let p = prefix(&[("a", Some(10.0), "radiology")], "female");
        let mut out = Vec::new();
        encode_last_state(&p, &schema(), &mut out).unwrap();
        // activity a,b,c | amountPaid | lab, ward, OTHER
        assert_eq!(out, [1.0, 0.0, 0.0, 10.0, 0.0, 0.0, 1.0]);
        let p = prefix(&[("a", Some(10.0), "lab")], "unknown");
        let mut out = Vec::new();
        encode_static(&p, &schema(), &mut out).unwrap();
        assert_eq!(out, [33.0, 0.0, 0.0]);
    }

    #[test]
    fn aggregation_counts_and_stats() {
        let p = prefix(&[("a", Some(10.0), "lab"), ("b", None, "lab"), ("a", Some(15.0), "ward")], "male");
        let mut out = Vec::new();
        encode_aggregation(&p, &schema(), false, &mut out).unwrap();
        assert_eq!(out, [2.0, 1.0, 0.0, 10.0, 15.0, 12.5, 25.0, 2.5, 2.0, 1.0, 0.0]);
        out.clear();
        encode_aggregation(&p, &schema(), true, &mut out).unwrap();
        assert_eq!(&out[..3], [1.0, 1.0, 0.0]);
    }

    #[test]
    fn aggregation_all_missing_numeric_is_zero() {
        let p = prefix(&[("a", None, "lab"), ("b", None, "lab")], "male");
        let mut out = Vec::new();
        encode_aggregation(&p, &schema(), false, &mut out).unwrap();
        assert_eq!(&out[3..8], [0.0; 5]);
    }

    #[test]
    fn index_layout_and_mismatch() {
        let p = prefix(&[("a", Some(1.0), "lab"), ("b", Some(2.0), "ward")], "male");
        let mut out = Vec::new();
        encode_index(&p, &schema(), 2, &mut out).unwrap();
        assert_eq!(out, [1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 2.0, 0.0, 1.0, 0.0]);
        assert!(matches!(
            encode_index(&p, &schema(), 3, &mut Vec::new()),
            Err(Error::LengthMismatch { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn index_of_one_equals_last_state() {
        let p = prefix(&[("c", Some(4.0), "ward")], "male");
        let a = FeatureSpace::new(EncodingKind::Index(1), schema()).encode(&p).unwrap();
        let b = FeatureSpace::new(EncodingKind::LastState, schema()).encode(&p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn widths_match_descriptors() {
        for kind in [EncodingKind::Static, EncodingKind::LastState, EncodingKind::Aggregation, EncodingKind::Index(3)] {
            let space = FeatureSpace::new(kind, schema());
            assert_eq!(space.descriptors().len(), space.width(), "{kind:?}");
        }
        let space = FeatureSpace::new(EncodingKind::Index(3), schema());
        assert_eq!(space.width(), space.static_width() + 3 * space.event_width());
    }

    #[test]
    fn type_mismatch_is_reported() {
        let t0 = Utc.with_ymd_and_hms(2017, 1, 2, 10, 30, 0).unwrap();
        let e = Event::new("a", "1", t0).with("amountPaid", AttributeValue::Categorical("lots".into()));
        let p = PrefixInstance::whole(Trace::new("1", vec![e]).unwrap(), false);
        assert!(matches!(
            encode_last_state(&p, &schema(), &mut Vec::new()),
            Err(Error::SchemaMismatch(_))
        ));
    }

    #[test]
    fn level_selection() {
        let counts: HashMap<&str, usize> = [("A", 50), ("B", 9)].into();
        assert_eq!(select_levels(counts, LevelFilterParams::default()), ["A"]);
        let counts: HashMap<&str, usize> = [("A", 30), ("B", 20), ("C", 15), ("D", 12)].into();
        let params = LevelFilterParams {
            min_count: 10,
            top_fraction: 0.5,
        };
        assert_eq!(select_levels(counts, params), ["A", "B"]);
        let counts: HashMap<&str, usize> = [("B", 12), ("A", 12), ("C", 12)].into();
        let params = LevelFilterParams {
            min_count: 1,
            top_fraction: 0.5,
        };
        assert_eq!(select_levels(counts, params), ["A", "B"]);
    }

    #[test]
    fn standardizer() {
        let m = FeatureMatrix::from_rows(&[vec![0.0, 5.0], vec![2.0, 5.0]]);
        let s = fit_standardizer(&m);
        assert_eq!(s.mean, [1.0, 5.0]);
        assert_eq!(s.std, [1.0, 0.0]);
        let t = apply_standardizer(&m, &s);
        assert_eq!(t.values, [-1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn feature_space_serde_checks_descriptors() {
        let space = FeatureSpace::new(EncodingKind::Aggregation, schema());
        let json = serde_json::to_string(&space).unwrap();
        let back: FeatureSpace = serde_json::from_str(&json).unwrap();
        assert_eq!(back, space);
        let tampered = json.replacen("\"Min\"", "\"Max\"", 1).replacen("\"min\"", "\"max\"", 1);
        assert!(serde_json::from_str::<FeatureSpace>(&tampered).is_err());
    }
}
