use ppm_core::event_log::{format_timestamp, parse_event_log, parse_timestamp};
use ppm_core::labeling::{read_labels, write_labels};
use ppm_core::synthetic::{generate_synthetic, SyntheticParams};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn csv_round_trip(seed in any::<u64>()) {
        let synth = generate_synthetic(&SyntheticParams { n_traces: 25, seed, ..Default::default() }).unwrap();
        let mut csv = Vec::new();
        synth.log.write_csv(&mut csv).unwrap();
        let back = parse_event_log(csv.as_slice(), &synth.schema).unwrap();
        prop_assert_eq!(back.traces(), synth.log.traces());
        prop_assert_eq!(back.schema(), synth.log.schema());

        let mut labels = Vec::new();
        write_labels(&synth.labels, &mut labels).unwrap();
        prop_assert_eq!(read_labels(labels.as_slice()).unwrap(), synth.labels);
    }

    #[test]
    fn timestamp_round_trip(secs in 0i64..4_000_000_000) {
        let ts = chrono::DateTime::from_timestamp(secs, 0).unwrap();
        prop_assert_eq!(parse_timestamp(&format_timestamp(ts)), Some(ts));
    }
}
