//! Outcome labels for completed traces and trace cutting.

mod ltl;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use ltl::{eval_ltl, eval_on_activities, LtlFormula};

use crate::error::{Error, Result};
use crate::event_log::{EventLog, Trace};

/// Binary outcome per case id (`true` = class 1).
pub type Labels = BTreeMap<String, bool>;

/// Returns `true` (class 1) iff the trace violates `formula`.
pub fn label_ltl_violation(trace: &Trace, formula: &LtlFormula) -> bool {
    let activities: Vec<&str> = trace.activities().collect();
    !formula.truth_table(&activities)[0]
}

/// Longest prefix of `trace` that contains none of `activities`.
pub fn cut_before_first(trace: &Trace, activities: &BTreeSet<String>) -> Result<Trace> {
    let keep = trace
        .events()
        .iter()
        .position(|e| activities.contains(&e.activity))
        .unwrap_or(trace.len());
    trace
        .truncated(keep)
        .ok_or_else(|| Error::EmptyResult(trace.case_id().to_owned()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationThreshold {
    Seconds(f64),
    Median,
}

pub fn case_duration_seconds(trace: &Trace) -> f64 {
    (trace.end() - trace.start()).num_milliseconds() as f64 / 1000.0
}

/// Lower median of the case durations of `log`, in seconds.
pub fn median_duration(log: &EventLog) -> f64 {
    let mut d: Vec<f64> = log.traces().iter().map(case_duration_seconds).collect();
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    d[(d.len() - 1) / 2]
}

/// Labels a case slow (class 1) iff its duration strictly exceeds the threshold.
pub fn label_duration(log: &EventLog, threshold: DurationThreshold) -> Labels {
    let limit = match threshold {
        DurationThreshold::Seconds(s) => s,
        DurationThreshold::Median => median_duration(log),
    };
    log.traces()
        .iter()
        .map(|t| (t.case_id().to_owned(), case_duration_seconds(t) > limit))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum LabelRule {
    LtlViolation(LtlFormula),
    DurationSlow(DurationThreshold),
    /// Class 1 iff any of the activities occurs in the trace.
    ActivityPresence(BTreeSet<String>),
    /// Labels supplied from outside, e.g. a ground-truth file.
    Precomputed(Labels),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labeling {
    pub rule: LabelRule,
    pub cut_activities: BTreeSet<String>,
}

impl Labeling {
    pub fn new(rule: LabelRule) -> Self {
        Labeling {
            rule,
            cut_activities: BTreeSet::new(),
        }
    }

    pub fn with_cut<I, S>(mut self, activities: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.cut_activities = activities.into_iter().map(Into::into).collect();
        self
    }

    /// Fixes a median duration threshold to its value on `reference`.
    pub fn resolved(&self, reference: &EventLog) -> Labeling {
        match &self.rule {
            LabelRule::DurationSlow(DurationThreshold::Median) => Labeling {
                rule: LabelRule::DurationSlow(DurationThreshold::Seconds(median_duration(reference))),
                cut_activities: self.cut_activities.clone(),
            },
            _ => self.clone(),
        }
    }

    /// Labels every trace of the (uncut) log.
    pub fn labels(&self, log: &EventLog) -> Result<Labels> {
        match &self.rule {
            LabelRule::LtlViolation(f) => Ok(log
                .traces()
                .iter()
                .map(|t| (t.case_id().to_owned(), label_ltl_violation(t, f)))
                .collect()),
            LabelRule::DurationSlow(threshold) => Ok(label_duration(log, *threshold)),
            LabelRule::ActivityPresence(acts) => Ok(log
                .traces()
                .iter()
                .map(|t| (t.case_id().to_owned(), t.activities().any(|a| acts.contains(a))))
                .collect()),
            LabelRule::Precomputed(map) => log
                .traces()
                .iter()
                .map(|t| {
                    map.get(t.case_id())
                        .map(|l| (t.case_id().to_owned(), *l))
                        .ok_or_else(|| Error::MissingLabel(t.case_id().to_owned()))
                })
                .collect(),
        }
    }

    /// Labels the complete traces, then cuts them before the first
    /// outcome-revealing activity. Traces that would become empty are dropped.
    pub fn apply(&self, log: &EventLog) -> Result<(EventLog, Labels)> {
        let labels = self.labels(log)?;
        if self.cut_activities.is_empty() {
            return Ok((log.clone(), labels));
        }
        let mut kept = Vec::with_capacity(log.len());
        let mut kept_labels = Labels::new();
        for trace in log.traces() {
            match cut_before_first(trace, &self.cut_activities) {
                Ok(cut) => {
                    kept_labels.insert(cut.case_id().to_owned(), labels[trace.case_id()]);
                    kept.push(cut);
                }
                Err(Error::EmptyResult(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok((log.with_traces(kept)?, kept_labels))
    }
}

/// Labeling as written in run files.
///
/// ```toml
/// [labeling]
/// kind = "ltl_violation"
/// formula = 'F("tumor marker CA-19.9") || F("ca-125 using meia")'
/// cut = ["tumor marker CA-19.9", "ca-125 using meia"]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelingSpec {
    LtlViolation {
        formula: String,
        #[serde(default)]
        cut: Vec<String>,
    },
    DurationSlow {
        /// Seconds, or absent for the median duration.
        #[serde(default)]
        threshold: Option<f64>,
        #[serde(default)]
        cut: Vec<String>,
    },
    ActivityPresence {
        activities: Vec<String>,
        #[serde(default)]
        cut: Vec<String>,
    },
    /// CSV with `case_id,label` rows.
    LabelFile {
        path: String,
    },
}

impl LabelingSpec {
    /// `base` resolves relative label file paths.
    pub fn build(&self, base: &std::path::Path) -> Result<Labeling> {
        Ok(match self {
            LabelingSpec::LtlViolation { formula, cut } => {
                Labeling::new(LabelRule::LtlViolation(LtlFormula::parse(formula)?)).with_cut(cut.clone())
            }
            LabelingSpec::DurationSlow { threshold, cut } => Labeling::new(LabelRule::DurationSlow(
                threshold.map_or(DurationThreshold::Median, DurationThreshold::Seconds),
            ))
            .with_cut(cut.clone()),
            LabelingSpec::ActivityPresence { activities, cut } => {
                Labeling::new(LabelRule::ActivityPresence(activities.iter().cloned().collect()))
                    .with_cut(cut.clone())
            }
            LabelingSpec::LabelFile { path } => {
                let path = base.join(path);
                let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
                Labeling::new(LabelRule::Precomputed(read_labels(file)?))
            }
        })
    }
}

/// Reads `case_id,label` CSV rows (header required, label 0/1).
pub fn read_labels<R: std::io::Read>(source: R) -> Result<Labels> {
    let mut reader = csv::Reader::from_reader(source);
    let mut labels = Labels::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let case = record.get(0).unwrap_or("").trim().to_owned();
        let label = match record.get(1).map(str::trim) {
            Some("1") => true,
            Some("0") => false,
            other => {
                return Err(Error::InvalidRow {
                    row: i + 2,
                    message: format!("label must be 0 or 1, got {other:?}"),
                })
            }
        };
        labels.insert(case, label);
    }
    Ok(labels)
}

pub fn write_labels<W: std::io::Write>(labels: &Labels, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["case_id", "label"])?;
    for (case, label) in labels {
        w.write_record([case.as_str(), if *label { "1" } else { "0" }])?;
    }
    w.flush().map_err(|e| Error::io("<labels sink>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::{Event, RoleColumns};
    use chrono::{TimeZone, Utc};

    fn trace(case: &str, acts: &[&str], step_secs: i64) -> Trace {
        let t0 = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let events = acts
            .iter()
            .enumerate()
            .map(|(i, a)| Event::new(*a, case, t0 + chrono::Duration::seconds(step_secs * i as i64)))
            .collect();
        Trace::new(case, events).unwrap()
    }

    fn roles() -> RoleColumns {
        RoleColumns {
            case_id: "case".into(),
            activity: "activity".into(),
            timestamp: "time".into(),
        }
    }

    #[test]
    fn bpic2011_1_rule() {
        let f = LtlFormula::parse(r#"F("tumor marker CA-19.9") || F("ca-125 using meia")"#).unwrap();
        let hit = trace("1", &["x", "ca-125 using meia", "y"], 1);
        let miss = trace("2", &["x", "y"], 1);
        assert!(!label_ltl_violation(&hit, &f));
        assert!(label_ltl_violation(&miss, &f));
    }

    #[test]
    fn bpic2015_rule_violated_without_follow_up() {
        let f = LtlFormula::parse(r#"G("send confirmation receipt" -> F("retrieve missing data"))"#).unwrap();
        let t = trace("1", &["send confirmation receipt"], 1);
        assert!(label_ltl_violation(&t, &f));
        let ok = trace("2", &["send confirmation receipt", "retrieve missing data"], 1);
        assert!(!label_ltl_violation(&ok, &f));
    }

    #[test]
    fn cutting() {
        let cut: BTreeSet<String> = ["X".to_owned()].into();
        let t = trace("1", &["a", "b", "X", "c"], 1);
        assert_eq!(cut_before_first(&t, &cut).unwrap().activities().collect::<Vec<_>>(), ["a", "b"]);
        let t = trace("1", &["a", "b"], 1);
        assert_eq!(cut_before_first(&t, &cut).unwrap(), t);
        let t = trace("1", &["X", "a"], 1);
        assert!(matches!(cut_before_first(&t, &cut), Err(Error::EmptyResult(_))));
    }

    #[test]
    fn duration_labels() {
        let single = EventLog::new(vec![trace("1", &["a"], 1), trace("2", &["a"], 1)], vec![], roles()).unwrap();
        assert!(label_duration(&single, DurationThreshold::Median).values().all(|l| !l));

        // Durations 10, 20, 30, 40 seconds.
        let log = EventLog::new(
            (1..=4).map(|i| trace(&i.to_string(), &["a", "b"], 10 * i)).collect(),
            vec![],
            roles(),
        )
        .unwrap();
        let labels = label_duration(&log, DurationThreshold::Median);
        assert_eq!(labels.values().copied().collect::<Vec<_>>(), [false, false, true, true]);
        let labels = label_duration(&log, DurationThreshold::Seconds(30.0));
        assert!(!labels["3"]);
        assert!(labels["4"]);
    }

    #[test]
    fn apply_drops_emptied_traces() {
        let log = EventLog::new(
            vec![trace("1", &["a", "X"], 1), trace("2", &["X", "a"], 1), trace("3", &["a"], 1)],
            vec![],
            roles(),
        )
        .unwrap();
        let labeling = Labeling::new(LabelRule::ActivityPresence(["X".to_owned()].into())).with_cut(["X"]);
        let (cut, labels) = labeling.apply(&log).unwrap();
        assert_eq!(cut.len(), 2);
        assert!(labels["1"]);
        assert!(!labels["3"]);
        assert!(!labels.contains_key("2"));
        assert!(cut.activity_alphabet().iter().all(|a| a != "X"));
    }

    #[test]
    fn median_resolution_uses_reference() {
        let log = EventLog::new(
            (1..=4).map(|i| trace(&i.to_string(), &["a", "b"], 10 * i)).collect(),
            vec![],
            roles(),
        )
        .unwrap();
        let resolved = Labeling::new(LabelRule::DurationSlow(DurationThreshold::Median)).resolved(&log);
        assert_eq!(resolved.rule, LabelRule::DurationSlow(DurationThreshold::Seconds(20.0)));
    }

    #[test]
    fn label_file_round_trip() {
        let labels: Labels = [("a".to_owned(), true), ("b".to_owned(), false)].into();
        let mut buf = Vec::new();
        write_labels(&labels, &mut buf).unwrap();
        assert_eq!(read_labels(buf.as_slice()).unwrap(), labels);
        assert!(read_labels("case_id,label\nx,2\n".as_bytes()).is_err());
    }
}
