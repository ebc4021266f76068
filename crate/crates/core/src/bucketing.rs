//! Trace bucketing: which classifier handles which prefix.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_log::{Event, Trace};
use crate::prefixing::{PrefixInstance, PrefixLog};

/// Activity frequencies of `events`, in alphabet order.
pub fn control_flow_vector(events: &[Event], alphabet: &[String]) -> Vec<f64> {
    let mut v = vec![0.0; alphabet.len()];
    for e in events {
        if let Ok(i) = alphabet.binary_search(&e.activity) {
            v[i] += 1.0;
        }
    }
    v
}

/// Directly-follows graph without frequencies.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dfg {
    pub nodes: BTreeSet<String>,
    pub edges: BTreeSet<(String, String)>,
}

pub fn build_dfg<'a>(traces: impl IntoIterator<Item = &'a Trace>) -> Dfg {
    let mut dfg = Dfg::default();
    for trace in traces {
        for e in trace.events() {
            if !dfg.nodes.contains(&e.activity) {
                dfg.nodes.insert(e.activity.clone());
            }
        }
        for pair in trace.events().windows(2) {
            dfg.edges.insert((pair[0].activity.clone(), pair[1].activity.clone()));
        }
    }
    dfg
}

impl Dfg {
    pub fn to_dot(&self) -> String {
        let quote = |s: &str| format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""));
        let mut out = String::from("digraph dfg {\n");
        for n in &self.nodes {
            let _ = writeln!(out, "  {};", quote(n));
        }
        for (a, b) in &self.edges {
            let _ = writeln!(out, "  {} -> {};", quote(a), quote(b));
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum BucketingMethod {
    Single,
    PrefixLength,
    State,
    Cluster { k: usize },
    Knn { k: usize },
}

impl BucketingMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BucketingMethod::Single => "single",
            BucketingMethod::PrefixLength => "prefix",
            BucketingMethod::State => "state",
            BucketingMethod::Cluster { .. } => "cluster",
            BucketingMethod::Knn { .. } => "knn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketKey {
    Single,
    Length(usize),
    State(String),
    Cluster(usize),
    /// Running prefix whose state was never seen in training.
    Unknown,
}

impl fmt::Display for BucketKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BucketKey::Single => write!(f, "single"),
            BucketKey::Length(l) => write!(f, "length={l}"),
            BucketKey::State(s) => write!(f, "state={s}"),
            BucketKey::Cluster(c) => write!(f, "cluster={c}"),
            BucketKey::Unknown => write!(f, "unknown"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum BucketerState {
    Single,
    PrefixLength,
    State {
        dfg: Dfg,
    },
    Cluster {
        alphabet: Vec<String>,
        centroids: Vec<Vec<f64>>,
    },
    Knn {
        alphabet: Vec<String>,
        vectors: Vec<Vec<f64>>,
        k: usize,
    },
}

/// Fits the bucketer on training prefixes. `alphabet` must be sorted.
pub fn fit_bucketer(method: BucketingMethod, prefixes: &PrefixLog, alphabet: &[String], seed: u64) -> Result<BucketerState> {
    Ok(match method {
        BucketingMethod::Single => BucketerState::Single,
        BucketingMethod::PrefixLength => BucketerState::PrefixLength,
        BucketingMethod::State => {
            let mut seen = BTreeSet::new();
            let traces = prefixes
                .instances
                .iter()
                .filter(|p| seen.insert(p.case_id().to_owned()))
                .map(|p| p.source().as_ref());
            BucketerState::State { dfg: build_dfg(traces) }
        }
        BucketingMethod::Cluster { k } => {
            let vectors: Vec<Vec<f64>> = prefixes
                .instances
                .iter()
                .map(|p| control_flow_vector(p.events(), alphabet))
                .collect();
            let fit = fit_kmeans(&vectors, k, seed, KMeansParams::default())?;
            BucketerState::Cluster {
                alphabet: alphabet.to_vec(),
                centroids: fit.centroids,
            }
        }
        BucketingMethod::Knn { k } => {
            if k > prefixes.len() {
                return Err(Error::KTooLarge {
                    k,
                    stored: prefixes.len(),
                });
            }
            BucketerState::Knn {
                alphabet: alphabet.to_vec(),
                vectors: prefixes
                    .instances
                    .iter()
                    .map(|p| control_flow_vector(p.events(), alphabet))
                    .collect(),
                k,
            }
        }
    })
}

/// Bucket of a (training or running) prefix. KNN keeps one shared pool.
pub fn assign_bucket(state: &BucketerState, prefix: &PrefixInstance) -> BucketKey {
    match state {
        BucketerState::Single | BucketerState::Knn { .. } => BucketKey::Single,
        BucketerState::PrefixLength => BucketKey::Length(prefix.length()),
        BucketerState::State { dfg } => {
            let last = &prefix.last_event().activity;
            if dfg.nodes.contains(last) {
                BucketKey::State(last.clone())
            } else {
                BucketKey::Unknown
            }
        }
        BucketerState::Cluster { alphabet, centroids } => {
            let v = control_flow_vector(prefix.events(), alphabet);
            BucketKey::Cluster(nearest(&v, centroids).0)
        }
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the closest centroid; ties go to the lowest index.
fn nearest(v: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(v, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            max_iter: 300,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances to the assigned centroids.
    pub inertia: f64,
    pub iterations: usize,
}

/// Lloyd's algorithm with k-means++ seeding.
pub fn fit_kmeans(vectors: &[Vec<f64>], k: usize, seed: u64, params: KMeansParams) -> Result<KMeansFit> {
    if k == 0 || vectors.len() < k {
        return Err(Error::InsufficientPoints {
            k,
            points: vectors.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(vectors, k, &mut rng);
    let dim = vectors[0].len();
    let mut assignments = vec![0; vectors.len()];
    let mut iterations = 0;

    for _ in 0..params.max_iter {
        iterations += 1;
        let mut dists = vec![0.0; vectors.len()];
        for (i, v) in vectors.iter().enumerate() {
            let (c, d) = nearest(v, &centroids);
            assignments[i] = c;
            dists[i] = d;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &c) in vectors.iter().zip(&assignments) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(v) {
                *s += x;
            }
        }
        let mut updated = Vec::with_capacity(k);
        let mut taken = BTreeSet::new();
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed with the point worst served by its current centroid.
                let far = (0..vectors.len())
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                taken.insert(far);
                dists[far] = 0.0;
                updated.push(vectors[far].clone());
            } else {
                updated.push(sums[c].iter().map(|s| s / counts[c] as f64).collect());
            }
        }
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| squared_distance(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        if shift < params.tol {
            break;
        }
    }

    let mut inertia = 0.0;
    for (i, v) in vectors.iter().enumerate() {
        let (c, d) = nearest(v, &centroids);
        assignments[i] = c;
        inertia += d;
    }
    Ok(KMeansFit {
        centroids,
        assignments,
        inertia,
        iterations,
    })
}

fn kmeans_plus_plus(vectors: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![vectors[rng.gen_range(0..vectors.len())].clone()];
    let mut d2: Vec<f64> = vectors.iter().map(|v| squared_distance(v, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = vectors.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if *d > 0.0 && target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            // Guard against rounding landing on an already-covered point.
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|d| *d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.gen_range(0..vectors.len())
        };
        let c = vectors[pick].clone();
        for (d, v) in d2.iter_mut().zip(vectors) {
            *d = d.min(squared_distance(v, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Indices of the `k` stored vectors closest to `query`; ties keep insertion order.
pub fn knn_select(stored: &[Vec<f64>], query: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > stored.len() {
        return Err(Error::KTooLarge {
            k,
            stored: stored.len(),
        });
    }
    let mut scored: Vec<(f64, usize)> = stored
        .iter()
        .enumerate()
        .map(|(i, v)| (squared_distance(v, query), i))
        .collect();
    if k < scored.len() {
        scored.select_nth_unstable_by(k, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored.truncate(k);
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().map(|(_, i)| i).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn trace(case: &str, acts: &[&str]) -> Trace {
        let t0 = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let events = acts
            .iter()
            .enumerate()
            .map(|(i, a)| Event::new(*a, case, t0 + chrono::Duration::seconds(i as i64)))
            .collect();
        Trace::new(case, events).unwrap()
    }

    fn alphabet(s: &[&str]) -> Vec<String> {
        s.iter().map(|a| a.to_string()).collect()
    }

    #[test]
    fn control_flow_counts() {
        let t = trace("1", &["a", "a"]);
        assert_eq!(control_flow_vector(t.events(), &alphabet(&["a", "b"])), [2.0, 0.0]);
    }

    #[test]
    fn dfg_edges() {
        let dfg = build_dfg(&[trace("1", &["a", "b"]), trace("2", &["a", "c"])]);
        let edges: Vec<_> = dfg.edges.iter().map(|(a, b)| format!("{a}{b}")).collect();
        assert_eq!(edges, ["ab", "ac"]);
        let dfg = build_dfg(&[trace("1", &["a", "a"])]);
        assert!(dfg.edges.contains(&("a".into(), "a".into())));
        assert!(dfg.to_dot().contains("\"a\" -> \"a\";"));
    }

    #[test]
    fn state_assignment() {
        let t = trace("1", &["a", "b", "c"]);
        let state = BucketerState::State {
            dfg: build_dfg([&t]),
        };
        let p = PrefixInstance::whole(t.clone(), false);
        assert_eq!(assign_bucket(&state, &p), BucketKey::State("c".into()));
        let unseen = PrefixInstance::whole(trace("2", &["z"]), false);
        assert_eq!(assign_bucket(&state, &unseen), BucketKey::Unknown);
        assert_eq!(assign_bucket(&BucketerState::Single, &p), BucketKey::Single);
        assert_eq!(assign_bucket(&BucketerState::PrefixLength, &p), BucketKey::Length(3));
    }

    #[test]
    fn nearest_centroid() {
        let centroids = vec![vec![0.0, 0.0], vec![10.0, 10.0]];
        assert_eq!(nearest(&[1.0, 1.0], &centroids).0, 0);
        assert_eq!(nearest(&[5.0, 5.0], &centroids).0, 0);
    }

    #[test]
    fn kmeans_separated_duplicates() {
        let pts = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![9.0, 9.0], vec![9.0, 9.0]];
        let fit = fit_kmeans(&pts, 2, 7, KMeansParams::default()).unwrap();
        let mut c = fit.centroids.clone();
        c.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(c, [vec![0.0, 0.0], vec![9.0, 9.0]]);
        assert_eq!(fit.inertia, 0.0);
    }

    #[test]
    fn kmeans_k_equals_points() {
        let pts = vec![vec![0.0], vec![3.0], vec![7.0], vec![20.0]];
        for seed in 0..10 {
            let fit = fit_kmeans(&pts, 4, seed, KMeansParams::default()).unwrap();
            assert_eq!(fit.inertia, 0.0);
        }
        assert!(matches!(
            fit_kmeans(&pts, 5, 0, KMeansParams::default()),
            Err(Error::InsufficientPoints { k: 5, points: 4 })
        ));
    }

    #[test]
    fn kmeans_more_clusters_than_distinct_points() {
        let pts = vec![vec![1.0], vec![1.0], vec![1.0]];
        let fit = fit_kmeans(&pts, 2, 3, KMeansParams::default()).unwrap();
        assert_eq!(fit.centroids.len(), 2);
        assert_eq!(fit.inertia, 0.0);
    }

    #[test]
    fn knn_basics() {
        let stored = vec![vec![0.0], vec![5.0], vec![1.0], vec![1.0]];
        assert_eq!(knn_select(&stored, &[5.0], 1).unwrap(), [1]);
        assert_eq!(knn_select(&stored, &[1.0], 2).unwrap(), [2, 3]);
        assert_eq!(knn_select(&stored, &[0.0], 4).unwrap(), [0, 2, 3, 1]);
        assert!(matches!(knn_select(&stored, &[0.0], 5), Err(Error::KTooLarge { .. })));
    }
}
