use chrono::{Duration, TimeZone, Utc};
use ppm_core::bucketing::{build_dfg, fit_kmeans, knn_select, KMeansParams};
use ppm_core::event_log::{derive_open_cases, Event, EventLog, RoleColumns, Trace, OPEN_CASES};
use ppm_core::labeling::Labels;
use ppm_core::prefixing::{build_prefix_log, PrefixParams};
use proptest::prelude::*;

fn roles() -> RoleColumns {
    RoleColumns {
        case_id: "case".into(),
        activity: "activity".into(),
        timestamp: "time".into(),
    }
}

fn traces() -> impl Strategy<Value = Vec<Vec<(u8, i64)>>> {
    // Per trace: (activity index, minutes after previous event).
    prop::collection::vec(prop::collection::vec((0u8..4, 0i64..90), 1..10), 1..15)
}

fn log_of(spec: &[Vec<(u8, i64)>]) -> EventLog {
    let t0 = Utc.with_ymd_and_hms(2021, 3, 1, 0, 0, 0).unwrap();
    let list = spec
        .iter()
        .enumerate()
        .map(|(i, events)| {
            let case = format!("k{i:03}");
            let mut ts = t0 + Duration::minutes(i as i64 * 17);
            let evs = events
                .iter()
                .map(|&(a, step)| {
                    ts += Duration::minutes(step);
                    Event::new(format!("act{a}"), &case, ts)
                })
                .collect();
            Trace::new(case, evs).unwrap()
        })
        .collect();
    EventLog::new(list, vec![], roles()).unwrap()
}

fn points() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..4).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-50i32..50, d), 1..60))
        .prop_map(|v| v.into_iter().map(|r| r.into_iter().map(f64::from).collect()).collect())
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

proptest! {
    #[test]
    fn dfg_matches_pair_scan(spec in traces()) {
        let log = log_of(&spec);
        let dfg = build_dfg(log.traces());
        let mut edges = std::collections::BTreeSet::new();
        let mut nodes = std::collections::BTreeSet::new();
        for t in log.traces() {
            let acts: Vec<&str> = t.activities().collect();
            for i in 0..acts.len() {
                nodes.insert(acts[i].to_owned());
                if i + 1 < acts.len() {
                    edges.insert((acts[i].to_owned(), acts[i + 1].to_owned()));
                }
            }
        }
        prop_assert_eq!(dfg.edges, edges);
        prop_assert_eq!(dfg.nodes, nodes);
    }

    #[test]
    fn open_cases_match_brute_force(spec in traces()) {
        let log = log_of(&spec);
        let out = derive_open_cases(&log);
        for t in out.traces() {
            for e in t.events() {
                let expected = log
                    .traces()
                    .iter()
                    .filter(|o| o.start() <= e.timestamp && e.timestamp <= o.end())
                    .count() as f64;
                prop_assert_eq!(e.value(OPEN_CASES).as_numeric(), Some(expected));
            }
        }
    }

    #[test]
    fn prefix_counts_and_slices(spec in traces(), min_len in 1usize..4, span in 0usize..6, gap in 1usize..4) {
        let log = log_of(&spec);
        let labels: Labels = log.traces().iter().map(|t| (t.case_id().to_owned(), t.len() % 2 == 0)).collect();
        let params = PrefixParams { min_len, max_len: min_len + span, gap };
        let prefixes = build_prefix_log(&log, &labels, params).unwrap();
        let expected: usize = log
            .traces()
            .iter()
            .map(|t| (min_len..=params.max_len.min(t.len())).step_by(gap).count())
            .sum();
        prop_assert_eq!(prefixes.len(), expected);
        for p in &prefixes.instances {
            let source = log.trace(p.case_id()).unwrap();
            prop_assert_eq!(p.events(), &source.events()[..p.length()]);
            prop_assert!((p.length() - min_len) % gap == 0);
            prop_assert_eq!(p.label, labels[p.case_id()]);
        }
    }

    #[test]
    fn knn_matches_full_sort(stored in points(), k_frac in 0.0f64..=1.0) {
        let query = stored[0].iter().map(|v| v + 0.5).collect::<Vec<_>>();
        let k = ((k_frac * stored.len() as f64) as usize).max(1);
        let mut order: Vec<usize> = (0..stored.len()).collect();
        order.sort_by(|&a, &b| sq(&stored[a], &query).total_cmp(&sq(&stored[b], &query)).then(a.cmp(&b)));
        order.truncate(k);
        prop_assert_eq!(knn_select(&stored, &query, k).unwrap(), order);
        prop_assert!(knn_select(&stored, &query, stored.len() + 1).is_err());
    }

    #[test]
    fn kmeans_assigns_nearest_centroid(pts in points(), k in 1usize..5, seed in any::<u64>()) {
        prop_assume!(pts.len() >= k);
        let fit = fit_kmeans(&pts, k, seed, KMeansParams::default()).unwrap();
        prop_assert_eq!(fit.centroids.len(), k);
        let mut inertia = 0.0;
        for (p, &a) in pts.iter().zip(&fit.assignments) {
            let own = sq(p, &fit.centroids[a]);
            for c in &fit.centroids {
                prop_assert!(own <= sq(p, c) + 1e-9);
            }
            inertia += own;
        }
        prop_assert!((inertia - fit.inertia).abs() <= 1e-6 * (1.0 + inertia));
    }
}
