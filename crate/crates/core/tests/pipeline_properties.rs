use std::collections::BTreeSet;

use chrono::{Duration, TimeZone, Utc};
use ppm_core::bucketing::BucketingMethod;
use ppm_core::classifiers::search::assign_folds;
use ppm_core::classifiers::{random_search_cv, ClassifierSpec, FoldGrouping, SearchSpace};
use ppm_core::error::Error;
use ppm_core::evaluation::roc_auc;
use ppm_core::event_log::{Event, EventLog, RoleColumns, Trace};
use ppm_core::labeling::Labels;
use ppm_core::pipeline::{
    load_model, predict_online, predict_prefix, save_model, train_on_labeled, valid_methods, PipelineConfig,
    SequenceEncoding,
};
use ppm_core::prefixing::{build_prefix_log, PrefixInstance, PrefixParams};
use ppm_core::synthetic::{generate_synthetic, SyntheticParams};

fn synthetic(n: usize, noise: f64, seed: u64) -> (EventLog, Labels) {
    let s = generate_synthetic(&SyntheticParams {
        n_traces: n,
        noise,
        seed,
        ..Default::default()
    })
    .unwrap();
    (s.log, s.labels)
}

fn roles() -> RoleColumns {
    RoleColumns {
        case_id: "case".into(),
        activity: "activity".into(),
        timestamp: "time".into(),
    }
}

fn log_of(cases: &[(&str, &[&str])]) -> EventLog {
    let t0 = Utc.with_ymd_and_hms(2022, 5, 1, 0, 0, 0).unwrap();
    let traces = cases
        .iter()
        .enumerate()
        .map(|(i, (case, acts))| {
            let events = acts
                .iter()
                .enumerate()
                .map(|(j, a)| Event::new(*a, *case, t0 + Duration::minutes(i as i64 * 60 + j as i64)))
                .collect();
            Trace::new(*case, events).unwrap()
        })
        .collect();
    EventLog::new(traces, vec![], roles()).unwrap()
}

/// Scores every prefix of the model's own training data.
fn training_scores(cfg: &PipelineConfig, log: &EventLog, labels: &Labels) -> (Vec<f64>, Vec<bool>) {
    let model = train_on_labeled(log, labels, cfg).unwrap();
    let prepared = model.prepare_log(log);
    let prefixes = build_prefix_log(&prepared, labels, cfg.prefix).unwrap();
    let scores = prefixes
        .instances
        .iter()
        .map(|p| predict_prefix(&model, p).unwrap())
        .collect();
    (scores, prefixes.instances.iter().map(|p| p.label).collect())
}

#[test]
fn deep_tree_separates_decided_prefixes() {
    let (log, labels) = synthetic(150, 0.0, 4);
    let mut cfg = PipelineConfig::new(BucketingMethod::Single, SequenceEncoding::Agg, ClassifierSpec::Dtree { max_depth: 40 });
    // From length 6 on the signal window has closed, so labels are decided.
    cfg.prefix = PrefixParams { min_len: 6, max_len: 12, gap: 1 };
    let (scores, y) = training_scores(&cfg, &log, &labels);
    assert_eq!(roc_auc(&scores, &y).unwrap(), 1.0);
}

#[test]
fn every_method_scores_its_training_prefixes() {
    let (log, labels) = synthetic(120, 0.1, 8);
    for (bucketing, encoding) in valid_methods() {
        let bucketing = match bucketing {
            BucketingMethod::Cluster { .. } => BucketingMethod::Cluster { k: 3 },
            BucketingMethod::Knn { .. } => BucketingMethod::Knn { k: 15 },
            other => other,
        };
        let mut cfg = PipelineConfig::new(bucketing, encoding, ClassifierSpec::Logit { c: 1.0 });
        cfg.prefix.max_len = 8;
        let (scores, _) = training_scores(&cfg, &log, &labels);
        assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)), "{}", cfg.method_name());
    }
}

#[test]
fn untrained_length_gets_global_ratio() {
    let (log, labels) = synthetic(100, 0.1, 2);
    let mut cfg = PipelineConfig::new(BucketingMethod::PrefixLength, SequenceEncoding::Index, ClassifierSpec::Dtree { max_depth: 4 });
    cfg.prefix.max_len = 5;
    let model = train_on_labeled(&log, &labels, &cfg).unwrap();
    let long = log.traces().iter().find(|t| t.len() >= 9).unwrap();
    let score = predict_online(&model, &long.truncated(9).unwrap()).unwrap();
    assert_eq!(score, model.global_ratio);
    let prefixes = build_prefix_log(&log, &labels, cfg.prefix).unwrap();
    assert!((model.global_ratio - prefixes.positive_ratio()).abs() < 1e-12);
}

#[test]
fn knn_with_unanimous_neighbours_is_certain() {
    let mut cases: Vec<(String, Vec<&str>)> = Vec::new();
    for i in 0..20 {
        cases.push((format!("p{i:02}"), vec!["a", "a", "a"]));
        cases.push((format!("n{i:02}"), vec!["b", "b", "b"]));
    }
    let borrowed: Vec<(&str, &[&str])> = cases.iter().map(|(c, a)| (c.as_str(), a.as_slice())).collect();
    let log = log_of(&borrowed);
    let labels: Labels = cases.iter().map(|(c, _)| (c.clone(), c.starts_with('p'))).collect();
    let cfg = PipelineConfig::new(BucketingMethod::Knn { k: 10 }, SequenceEncoding::Agg, ClassifierSpec::Logit { c: 1.0 });
    let model = train_on_labeled(&log, &labels, &cfg).unwrap();
    let query = log.trace("p03").unwrap().truncated(2).unwrap();
    assert_eq!(predict_online(&model, &query).unwrap(), 1.0);
    let query = log.trace("n03").unwrap().truncated(2).unwrap();
    assert_eq!(predict_online(&model, &query).unwrap(), 0.0);
}

#[test]
fn model_file_round_trip() {
    let (log, labels) = synthetic(120, 0.1, 6);
    for bucketing in [BucketingMethod::State, BucketingMethod::Cluster { k: 4 }, BucketingMethod::Knn { k: 20 }] {
        let cfg = PipelineConfig::new(bucketing, SequenceEncoding::Agg, ClassifierSpec::Rforest { n_estimators: 10, max_features: 0.5 });
        let model = train_on_labeled(&log, &labels, &cfg).unwrap();
        let mut bytes = Vec::new();
        save_model(&model, &mut bytes).unwrap();
        let loaded = load_model(bytes.as_slice()).unwrap();
        assert_eq!(loaded, model);

        let prepared = model.prepare_log(&log);
        let prefixes = build_prefix_log(&prepared, &labels, PrefixParams::default()).unwrap();
        for p in prefixes.instances.iter().take(100) {
            assert_eq!(predict_prefix(&model, p).unwrap(), predict_prefix(&loaded, p).unwrap());
        }

        let truncated = &bytes[..bytes.len() / 2];
        assert!(matches!(load_model(truncated), Err(Error::Corrupt(_))));
        assert!(matches!(load_model(&b"not a model"[..]), Err(Error::Corrupt(_))));
        let text = String::from_utf8(bytes).unwrap().replacen("{\"version\":1,", "{\"version\":2,", 1);
        assert!(matches!(
            load_model(text.as_bytes()),
            Err(Error::VersionMismatch { found: 2, expected: 1 })
        ));
    }
}

#[test]
fn prediction_ignores_label_field() {
    let (log, labels) = synthetic(80, 0.1, 3);
    let cfg = PipelineConfig::new(BucketingMethod::State, SequenceEncoding::Laststate, ClassifierSpec::Dtree { max_depth: 5 });
    let model = train_on_labeled(&log, &labels, &cfg).unwrap();
    let prepared = model.prepare_log(&log);
    let t = std::sync::Arc::new(prepared.traces()[0].clone());
    let a = predict_prefix(&model, &PrefixInstance::new(t.clone(), 3, true)).unwrap();
    let b = predict_prefix(&model, &PrefixInstance::new(t, 3, false)).unwrap();
    assert_eq!(a, b);
}

/// Label is true when exactly one of `x` and `y` occurs.
fn xor_log() -> (EventLog, Labels) {
    let variants: [(&[&str], bool); 4] = [
        (&["s", "x", "e"], true),
        (&["s", "y", "e"], true),
        (&["s", "x", "y", "e"], false),
        (&["s", "e"], false),
    ];
    let mut cases = Vec::new();
    for i in 0..40 {
        let (acts, label) = variants[i % 4];
        cases.push((format!("c{i:02}"), acts, label));
    }
    let borrowed: Vec<(&str, &[&str])> = cases.iter().map(|(c, a, _)| (c.as_str(), *a)).collect();
    let labels = cases.iter().map(|(c, _, l)| (c.clone(), *l)).collect();
    (log_of(&borrowed), labels)
}

fn xor_search(n_trials: usize, seed: u64) -> ppm_core::classifiers::SearchOutcome {
    let (log, labels) = xor_log();
    let mut template = PipelineConfig::new(BucketingMethod::Single, SequenceEncoding::Agg, ClassifierSpec::Dtree { max_depth: 1 });
    template.time_features = false;
    template.min_bucket_size = 1;
    template.level_filter.min_count = 1;
    // Only complete traces carry the final label pattern.
    template.prefix = PrefixParams { min_len: 2, max_len: 4, gap: 1 };
    let prefixes = build_prefix_log(&log, &labels, template.prefix).unwrap();
    let prefixes = prefixes.filter(|p| p.length() == p.source_length());
    let space = SearchSpace {
        dtree_max_depth: (1, 2),
        ..Default::default()
    };
    random_search_cv(&prefixes, log.schema(), &template, &space, n_trials, 4, FoldGrouping::Case, seed).unwrap()
}

#[test]
fn search_prefers_depth_two_on_xor() {
    let outcome = xor_search(8, 11);
    let depths: BTreeSet<_> = outcome
        .trials
        .iter()
        .map(|t| match t.config.classifier {
            ClassifierSpec::Dtree { max_depth } => max_depth,
            _ => unreachable!(),
        })
        .collect();
    assert_eq!(depths, BTreeSet::from([1, 2]));
    assert_eq!(outcome.best.classifier, ClassifierSpec::Dtree { max_depth: 2 });
}

#[test]
fn search_is_deterministic_and_single_trial_wins() {
    let a = xor_search(5, 3);
    let b = xor_search(5, 3);
    assert_eq!(a, b);
    let one = xor_search(1, 3);
    assert_eq!(one.trials.len(), 1);
    assert_eq!(one.best, one.trials[0].config);
}

#[test]
fn case_grouped_folds_keep_cases_together() {
    let (log, labels) = synthetic(60, 0.1, 1);
    let prefixes = build_prefix_log(&log, &labels, PrefixParams::default()).unwrap();
    let folds = assign_folds(&prefixes, 3, FoldGrouping::Case, 5);
    let mut fold_of = std::collections::BTreeMap::new();
    for (p, &f) in prefixes.instances.iter().zip(&folds) {
        assert_eq!(*fold_of.entry(p.case_id()).or_insert(f), f);
    }
    let used: BTreeSet<usize> = folds.iter().copied().collect();
    assert_eq!(used, BTreeSet::from([0, 1, 2]));
}

#[test]
fn pure_noise_labels_are_unpredictable() {
    let mut aucs = Vec::new();
    for seed in 1..=4 {
        let (log, labels) = synthetic(400, 1.0, seed);
        let (train, test) = ppm_core::evaluation::temporal_split(&log, 0.8).unwrap();
        let mut cfg = PipelineConfig::new(BucketingMethod::Single, SequenceEncoding::Agg, ClassifierSpec::Rforest { n_estimators: 20, max_features: 0.5 });
        cfg.prefix.max_len = 10;
        let train_labels: Labels = train.traces().iter().map(|t| (t.case_id().to_owned(), labels[t.case_id()])).collect();
        let model = train_on_labeled(&train, &train_labels, &cfg).unwrap();
        let rows = ppm_core::evaluation::auc_by_prefix_length(&model, &test, &labels, 10).unwrap();
        aucs.push(ppm_core::evaluation::overall_weighted_auc(&rows).unwrap());
    }
    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
    assert!((mean - 0.5).abs() <= 0.1, "mean AUC {mean} over {aucs:?}");
}
