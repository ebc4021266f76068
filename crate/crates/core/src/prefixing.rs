//! Labeled prefix logs with length and gap filtering.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::{Event, EventLog, Trace};
use crate::labeling::Labels;

/// The first `length` events of a completed trace, with the trace's label.
#[derive(Debug, Clone)]
pub struct PrefixInstance {
    source: Arc<Trace>,
    length: usize,
    pub label: bool,
}

impl PrefixInstance {
    pub fn new(source: Arc<Trace>, length: usize, label: bool) -> Self {
        assert!(
            (1..=source.len()).contains(&length),
            "prefix length {length} outside 1..={}",
            source.len()
        );
        PrefixInstance { source, length, label }
    }

    /// The whole trace as a prefix of itself (used for running cases).
    pub fn whole(trace: Trace, label: bool) -> Self {
        let length = trace.len();
        PrefixInstance::new(Arc::new(trace), length, label)
    }

    pub fn case_id(&self) -> &str {
        self.source.case_id()
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn source_length(&self) -> usize {
        self.source.len()
    }

    pub fn events(&self) -> &[Event] {
        &self.source.events()[..self.length]
    }

    pub fn last_event(&self) -> &Event {
        &self.source.events()[self.length - 1]
    }

    pub fn source(&self) -> &Arc<Trace> {
        &self.source
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixParams {
    pub min_len: usize,
    pub max_len: usize,
    pub gap: usize,
}

impl Default for PrefixParams {
    fn default() -> Self {
        PrefixParams {
            min_len: 1,
            max_len: usize::MAX,
            gap: 1,
        }
    }
}

impl PrefixParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_len == 0 || self.max_len < self.min_len || self.gap == 0 {
            return Err(Error::InvalidConfig(format!(
                "prefix params need max_len >= min_len >= 1 and gap >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Retained prefix lengths for a trace of `trace_len` events.
    pub fn lengths(&self, trace_len: usize) -> impl Iterator<Item = usize> {
        let upper = self.max_len.min(trace_len);
        (self.min_len..=upper).step_by(self.gap)
    }
}

#[derive(Debug, Clone)]
pub struct PrefixLog {
    pub instances: Vec<PrefixInstance>,
    pub params: PrefixParams,
}

impl PrefixLog {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.instances.iter().filter(|p| p.label).count()
    }

    pub fn positive_ratio(&self) -> f64 {
        if self.instances.is_empty() {
            return 0.0;
        }
        self.positives() as f64 / self.instances.len() as f64
    }

    pub fn has_both_classes(&self) -> bool {
        let pos = self.positives();
        pos > 0 && pos < self.instances.len()
    }

    pub fn lengths(&self) -> BTreeSet<usize> {
        self.instances.iter().map(PrefixInstance::length).collect()
    }

    pub fn case_ids(&self) -> BTreeSet<&str> {
        self.instances.iter().map(PrefixInstance::case_id).collect()
    }

    pub fn filter(&self, keep: impl Fn(&PrefixInstance) -> bool) -> PrefixLog {
        PrefixLog {
            instances: self.instances.iter().filter(|p| keep(p)).cloned().collect(),
            params: self.params,
        }
    }
}

/// Emits one prefix per retained length of every trace.
pub fn build_prefix_log(log: &EventLog, labels: &Labels, params: PrefixParams) -> Result<PrefixLog> {
    params.validate()?;
    let mut instances = Vec::new();
    for trace in log.traces() {
        let label = *labels
            .get(trace.case_id())
            .ok_or_else(|| Error::MissingLabel(trace.case_id().to_owned()))?;
        let shared = Arc::new(trace.clone());
        for l in params.lengths(trace.len()) {
            instances.push(PrefixInstance::new(Arc::clone(&shared), l, label));
        }
    }
    Ok(PrefixLog { instances, params })
}

/// Smallest prefix length by which `quantile` of the minority-class traces
/// have finished, capped at `hard_cap`.
pub fn compute_max_eval_length(log: &EventLog, labels: &Labels, quantile: f64, hard_cap: usize) -> Result<usize> {
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for trace in log.traces() {
        let label = *labels
            .get(trace.case_id())
            .ok_or_else(|| Error::MissingLabel(trace.case_id().to_owned()))?;
        by_class[label as usize].push(trace.len());
    }
    if by_class[0].is_empty() || by_class[1].is_empty() {
        return Err(Error::SingleClass);
    }
    let minority = if by_class[0].len() < by_class[1].len() { 0 } else { 1 };
    let lengths = &mut by_class[minority];
    lengths.sort_unstable();
    let needed = ((quantile * lengths.len() as f64).ceil() as usize).clamp(1, lengths.len());
    Ok(lengths[needed - 1].min(hard_cap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_log::RoleColumns;
    use chrono::{TimeZone, Utc};

    fn log_with_lengths(lengths: &[usize]) -> EventLog {
        let t0 = Utc.with_ymd_and_hms(2021, 3, 1, 8, 0, 0).unwrap();
        let traces = lengths
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let case = format!("c{i}");
                let events = (0..n)
                    .map(|j| Event::new(format!("a{}", j % 3), &case, t0 + chrono::Duration::minutes(j as i64)))
                    .collect();
                Trace::new(case, events).unwrap()
            })
            .collect();
        let roles = RoleColumns {
            case_id: "case".into(),
            activity: "activity".into(),
            timestamp: "time".into(),
        };
        EventLog::new(traces, vec![], roles).unwrap()
    }

    fn labels_for(log: &EventLog, f: impl Fn(usize) -> bool) -> Labels {
        log.traces().iter().enumerate().map(|(i, t)| (t.case_id().to_owned(), f(i))).collect()
    }

    #[test]
    fn gap_five_lengths() {
        let log = log_with_lengths(&[80]);
        let labels = labels_for(&log, |_| true);
        let params = PrefixParams {
            min_len: 1,
            max_len: 40,
            gap: 5,
        };
        let prefixes = build_prefix_log(&log, &labels, params).unwrap();
        let lengths: Vec<_> = prefixes.lengths().into_iter().collect();
        assert_eq!(lengths, [1, 6, 11, 16, 21, 26, 31, 36]);
    }

    #[test]
    fn full_prefix_log_includes_whole_trace() {
        let log = log_with_lengths(&[5]);
        let prefixes = build_prefix_log(&log, &labels_for(&log, |_| false), PrefixParams::default()).unwrap();
        assert_eq!(prefixes.lengths().into_iter().collect::<Vec<_>>(), [1, 2, 3, 4, 5]);
    }

    #[test]
    fn missing_label() {
        let log = log_with_lengths(&[2, 3]);
        let mut labels = labels_for(&log, |_| true);
        labels.remove("c1");
        assert!(matches!(
            build_prefix_log(&log, &labels, PrefixParams::default()),
            Err(Error::MissingLabel(c)) if c == "c1"
        ));
    }

    #[test]
    fn invalid_params() {
        let log = log_with_lengths(&[2]);
        let labels = labels_for(&log, |_| true);
        for params in [
            PrefixParams { min_len: 0, max_len: 4, gap: 1 },
            PrefixParams { min_len: 3, max_len: 2, gap: 1 },
            PrefixParams { min_len: 1, max_len: 2, gap: 0 },
        ] {
            assert!(build_prefix_log(&log, &labels, params).is_err());
        }
    }

    #[test]
    fn max_eval_length_quantile() {
        // Minority (class 1): lengths {2,2,3,10}; majority has 5 traces.
        let log = log_with_lengths(&[2, 2, 3, 10, 4, 4, 4, 4, 4]);
        let labels = labels_for(&log, |i| i < 4);
        assert_eq!(compute_max_eval_length(&log, &labels, 0.9, 40).unwrap(), 10);
        assert_eq!(compute_max_eval_length(&log, &labels, 0.9, 5).unwrap(), 5);

        let log = log_with_lengths(&[7, 7, 9, 9, 9]);
        let labels = labels_for(&log, |i| i < 2);
        assert_eq!(compute_max_eval_length(&log, &labels, 0.9, 40).unwrap(), 7);

        let labels = labels_for(&log, |_| true);
        assert!(matches!(compute_max_eval_length(&log, &labels, 0.9, 40), Err(Error::SingleClass)));
    }

    #[test]
    fn minority_tie_goes_to_positive_class() {
        let log = log_with_lengths(&[3, 8]);
        let labels = labels_for(&log, |i| i == 1);
        assert_eq!(compute_max_eval_length(&log, &labels, 1.0, 40).unwrap(), 8);
    }
}
