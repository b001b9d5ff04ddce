//! Ingestion, dataset and boosting invariants on synthetic matches.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tactica_core::dominance::{MotionParams, PlayerId};
use tactica_core::features::{build_dataset, column_names, FeatureParams, FeatureTable, PassSample};
use tactica_core::gbdt::{predict_proba, stratified_folds, train_gbdt, train_rows, GbdtHyperParams};
use tactica_core::geometry::{PitchSpec, WeightParams};
use tactica_core::ingest::{
    load_match, load_match_with, segment_attack_sequences, write_events, write_tracking, EventKind, MatchEvent,
    Outcome, TeamId,
};
use tactica_core::synth::{synthesize_match, SynthConfig};
use tactica_core::Error;

fn coarse() -> PitchSpec {
    PitchSpec::new(105.0, 68.0, 1.0).unwrap()
}

fn synth(passes: usize, seed: u64) -> tactica_core::synth::SynthMatch {
    let cfg = SynthConfig {
        passes,
        ..SynthConfig::default()
    };
    synthesize_match(&cfg, seed, &coarse(), &MotionParams::default(), &WeightParams::default()).unwrap()
}

fn random_table(rng: &mut ChaCha8Rng, n: usize, m: usize) -> FeatureTable {
    let samples = (0..n)
        .map(|i| {
            // Coarse values so ties occur and the tie order matters.
            let values: Vec<f64> = (0..m).map(|_| (rng.random_range(0.0..20.0f64)).round()).collect();
            let z = 0.3 * values[0] - 0.2 * values[1 % m] + rng.random_range(-2.0..2.0);
            PassSample {
                event_id: i.to_string(),
                label: u8::from(z > 1.0),
                selected: vec![],
                imputed: vec![false; m],
                values,
            }
        })
        .collect();
    FeatureTable {
        columns: (0..m).map(|j| format!("c{j}")).collect(),
        samples,
    }
}

#[test]
fn written_match_loads_back_identically() {
    let m = synth(40, 3);
    let dir = tempfile::tempdir().unwrap();
    let paths = m.write(dir.path()).unwrap();
    let first = load_match(&paths[0], &paths[1]).unwrap();
    assert_eq!(first.frames.len(), 40);
    assert_eq!(first.events, m.events);
    let t2 = dir.path().join("t2.jsonl");
    let e2 = dir.path().join("e2.jsonl");
    write_tracking(&t2, &first.frames).unwrap();
    write_events(&e2, &first.events).unwrap();
    let second = load_match(&t2, &e2).unwrap();
    assert_eq!(second.frames, first.frames);
    assert_eq!(second.events, first.events);
    assert_eq!(std::fs::read(&paths[0]).unwrap(), std::fs::read(&t2).unwrap());
}

#[test]
fn minimal_file_and_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("t.jsonl");
    let e = dir.path().join("e.jsonl");
    let players = |xs: usize| {
        (0..xs)
            .map(|i| {
                format!(
                    r#"{{"id":{},"team":"{}","x":{},"y":0.0,"vx":0.0,"vy":0.0}}"#,
                    i + 1,
                    if i < 11 { "A" } else { "B" },
                    -40.0 + 3.0 * i as f64
                )
            })
            .collect::<Vec<_>>()
            .join(",")
    };
    let line = |frame: i64, n: usize| {
        format!(
            r#"{{"frame":{frame},"time":{},"ball":{{"x":0.0,"y":0.0,"vx":0.0,"vy":0.0}},"players":[{}]}}"#,
            frame as f64 / 25.0,
            players(n)
        )
    };
    std::fs::write(&t, format!("{}\n{}\n", line(0, 22), line(1, 22))).unwrap();
    std::fs::write(&e, "").unwrap();
    let m = load_match(&t, &e).unwrap();
    assert_eq!(m.frames.len(), 2);
    assert!(m.warnings.is_empty(), "{:?}", m.warnings);

    std::fs::write(&t, format!("{}\n{}\n", line(0, 22), line(1, 21))).unwrap();
    let m = load_match(&t, &e).unwrap();
    assert!(m.warnings.iter().any(|w| w.contains("missing player")));

    std::fs::write(&t, format!("{}\n{}\n", line(5, 22), line(3, 22))).unwrap();
    let err = load_match(&t, &e).unwrap_err().to_string();
    assert!(err.contains('5') && err.contains('3'), "{err}");

    std::fs::write(&t, format!("{}\n{{\"frame\": oops}}\n", line(0, 22))).unwrap();
    match load_match(&t, &e).unwrap_err() {
        Error::Schema { line, .. } => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn sequences_cover_every_pass_once() {
    let m = synth(200, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // Reassign teams at random so possession changes often.
    let events: Vec<MatchEvent> = m
        .events
        .iter()
        .map(|e| {
            let mut e = e.clone();
            if rng.random::<f64>() < 0.3 {
                e.team = TeamId::new("B");
            }
            if rng.random::<f64>() < 0.05 {
                e.kind = EventKind::FreeKick;
            }
            e
        })
        .collect();
    let seg = segment_attack_sequences(&events, &m.frames).unwrap();
    for e in events.iter().filter(|e| e.kind == EventKind::Pass) {
        let kept = seg.sequences.iter().filter(|s| s.event_ids.contains(&e.event_id)).count();
        let dropped = seg.dropped.iter().filter(|d| d.sequence.event_ids.contains(&e.event_id)).count();
        assert_eq!(kept + dropped, 1, "event {}", e.event_id);
    }
    for team in ["A", "B"] {
        let mut spans: Vec<(i64, i64)> = seg
            .sequences
            .iter()
            .filter(|s| s.team_id.0 == team)
            .map(|s| (s.start_frame, s.end_frame))
            .collect();
        spans.sort();
        for w in spans.windows(2) {
            assert!(w[0].1 < w[1].0, "overlap {:?}", w);
        }
        assert!(spans.iter().all(|(a, b)| a <= b));
    }
}

#[test]
fn dataset_is_finite_with_5n_columns() {
    let m = synth(150, 12);
    let dir = tempfile::tempdir().unwrap();
    let paths = m.write(dir.path()).unwrap();
    let loaded = load_match_with(&paths[0], &paths[1], &coarse()).unwrap();
    for n in [1, 3, 5] {
        let params = FeatureParams {
            n,
            ..FeatureParams::default()
        };
        let (table, medians) = build_dataset(
            std::slice::from_ref(&loaded),
            &params,
            &coarse(),
            &MotionParams::default(),
            &WeightParams::default(),
        )
        .unwrap();
        assert_eq!(table.columns, column_names(n));
        assert_eq!(medians.len(), 5 * n);
        assert_eq!(table.len(), 150);
        assert!(table.samples.iter().all(|s| s.values.len() == 5 * n && s.values.iter().all(|v| v.is_finite())));
        // The passer never appears among the selected receivers.
        assert!(table.samples.iter().all(|s| !s.selected.contains(&PlayerId(1))));
    }
    // Ten candidates at most: an all-padding column has no median.
    let wide = FeatureParams {
        n: 12,
        ..FeatureParams::default()
    };
    let err = build_dataset(
        std::slice::from_ref(&loaded),
        &wide,
        &coarse(),
        &MotionParams::default(),
        &WeightParams::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Data(_)), "{err}");
    // Rank-1 receiver under dist_ball ranking is the generator's receiver.
    let params = FeatureParams {
        n: 1,
        ..FeatureParams::default()
    };
    let (table, _) = build_dataset(&[loaded], &params, &coarse(), &MotionParams::default(), &WeightParams::default()).unwrap();
    for (s, g) in table.samples.iter().zip(&m.ground_truth) {
        assert_eq!(s.selected[0], PlayerId(g.receiver));
        assert_eq!(s.values[2], g.dist_ball);
    }
}

#[test]
fn boosting_loss_nonincreasing_and_margins_additive() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let table = random_table(&mut rng, 400, 5);
    let hp = GbdtHyperParams {
        n_trees: 60,
        max_depth: 4,
        learning_rate: 0.3,
        ..GbdtHyperParams::default()
    };
    let model = train_gbdt(&table, &hp).unwrap();
    assert_eq!(model.training_logloss.len(), 60);
    for w in model.training_logloss.windows(2) {
        assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
    }
    for s in table.samples.iter().take(50) {
        for t in 1..=model.trees.len() {
            let step = model.margin_with(&s.values, t) - model.margin_with(&s.values, t - 1);
            assert!((step - model.trees[t - 1].predict(&s.values)).abs() < 1e-9);
        }
        let p = predict_proba(&model, &s.values).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }
    let extreme = predict_proba(&model, &[1e12, -1e12, 0.0, 0.0, 0.0]).unwrap();
    assert!(extreme > 0.0 && extreme < 1.0);
}

#[test]
fn row_order_does_not_change_trees() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let table = random_table(&mut rng, 300, 4);
    let hp = GbdtHyperParams {
        n_trees: 25,
        max_depth: 3,
        ..GbdtHyperParams::default()
    };
    let a = train_gbdt(&table, &hp).unwrap();
    for _ in 0..3 {
        let mut shuffled = table.clone();
        shuffled.samples.shuffle(&mut rng);
        let b = train_gbdt(&shuffled, &hp).unwrap();
        assert_eq!(a.trees, b.trees);
        assert_eq!(a.base_score, b.base_score);
    }
}

#[test]
fn monotone_feature_transform_keeps_decision_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let table = random_table(&mut rng, 300, 4);
    let hp = GbdtHyperParams {
        n_trees: 20,
        max_depth: 3,
        ..GbdtHyperParams::default()
    };
    let rows = table.rows();
    let labels = table.labels();
    let base = train_rows(&rows, &labels, &table.columns, vec![0.0; 4], &hp).unwrap();
    let transformed: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| vec![r[0].exp(), 3.0 * r[1] - 7.0, r[2].powi(3), (r[3] + 1.0).ln()])
        .collect();
    let other = train_rows(&transformed, &labels, &table.columns, vec![0.0; 4], &hp).unwrap();
    for (r, t) in rows.iter().zip(&transformed) {
        for (ta, tb) in base.trees.iter().zip(&other.trees) {
            assert_eq!(ta.decision_path(r), tb.decision_path(t));
        }
        assert!((base.margin_with(r, 20) - other.margin_with(t, 20)).abs() < 1e-12);
    }
}

#[test]
fn folds_keep_class_ratio() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let labels: Vec<u8> = (0..997).map(|_| u8::from(rng.random::<f64>() < 0.21)).collect();
    let k = 5;
    let folds = stratified_folds(&labels, k, 11).unwrap();
    assert_eq!(folds, stratified_folds(&labels, k, 11).unwrap());
    for class in [0u8, 1] {
        let total = labels.iter().filter(|&&l| l == class).count();
        for f in 0..k {
            let c = labels.iter().zip(&folds).filter(|(l, g)| **l == class && **g == f).count();
            let ideal = total as f64 / k as f64;
            assert!((c as f64 - ideal).abs() <= 1.0, "class {class} fold {f}: {c} vs {ideal}");
        }
    }
}

#[test]
fn synthetic_success_rate_matches_rule() {
    let m = synth(2000, 77);
    assert!((m.success_rate() - m.mean_probability()).abs() <= 0.03);
    let outcomes = m.events.iter().filter(|e| e.outcome == Some(Outcome::Failure)).count();
    assert!(outcomes > 0 && outcomes < 2000);
}
