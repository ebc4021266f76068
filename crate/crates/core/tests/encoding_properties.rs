use std::sync::Arc;

use ppm_core::encoding::{fit_level_filter, EncodingKind, FeatureSpace, LevelFilterParams};
use ppm_core::event_log::{derive_time_features, Trace};
use ppm_core::prefixing::{build_prefix_log, PrefixInstance, PrefixParams};
use ppm_core::synthetic::{generate_synthetic, SyntheticParams};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn encodings_have_declared_width(seed in any::<u64>(), min_count in 1usize..20, boolean in any::<bool>()) {
        let synth = generate_synthetic(&SyntheticParams { n_traces: 40, seed, ..Default::default() }).unwrap();
        let log = derive_time_features(&synth.log);
        let prefixes = build_prefix_log(&log, &synth.labels, PrefixParams { min_len: 1, max_len: 6, gap: 1 }).unwrap();
        let schema = fit_level_filter(&prefixes, log.schema(), LevelFilterParams { min_count, top_fraction: 1.0 });
        let static_space = FeatureSpace::new(EncodingKind::Static, schema.clone());
        for kind in [EncodingKind::Static, EncodingKind::LastState, EncodingKind::Aggregation, EncodingKind::Index(4)] {
            let space = FeatureSpace::new(kind, schema.clone()).with_boolean_aggregation(boolean);
            prop_assert_eq!(space.descriptors().len(), space.width());
            for p in prefixes.instances.iter().filter(|p| !matches!(kind, EncodingKind::Index(l) if l != p.length())) {
                let row = space.encode(p).unwrap();
                prop_assert_eq!(row.len(), space.width());
                prop_assert!(row.iter().all(|v| v.is_finite()));
                // The static block does not depend on the prefix length.
                let whole = PrefixInstance::new(Arc::clone(p.source()), p.source_length(), p.label);
                prop_assert_eq!(&row[..space.static_width()], &static_space.encode(&whole).unwrap()[..]);
            }
        }
    }

    #[test]
    fn aggregation_ignores_event_order(seed in any::<u64>(), shift in 1usize..5) {
        let synth = generate_synthetic(&SyntheticParams { n_traces: 30, seed, ..Default::default() }).unwrap();
        let log = synth.log;
        let prefixes = build_prefix_log(&log, &synth.labels, PrefixParams::default()).unwrap();
        let schema = fit_level_filter(&prefixes, log.schema(), LevelFilterParams { min_count: 1, top_fraction: 1.0 });
        let space = FeatureSpace::new(EncodingKind::Aggregation, schema);
        for t in log.traces() {
            let mut events = t.events().to_vec();
            let timestamps: Vec<_> = events.iter().map(|e| e.timestamp).collect();
            let n = events.len();
            events.rotate_left(shift % n);
            for (e, ts) in events.iter_mut().zip(timestamps) {
                e.timestamp = ts;
            }
            let rotated = Trace::new(t.case_id(), events).unwrap();
            let a = space.encode(&PrefixInstance::whole(t.clone(), false)).unwrap();
            let b = space.encode(&PrefixInstance::whole(rotated, false)).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
            }
        }
    }
}
