//! Checks against the bundled mini corpus and its hand-enumerated oracle
//! (`fixtures/mini_corpus/expected.json`): ingestion counts, statistics,
//! the co-occurrence edge list, and gold entity derivation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::Value;

use todshift_core::corpus::{
    corpus_stats, ingest, read_snapshot, write_empty_layout, write_snapshot, IngestConfig,
    MultiDomainPolicy,
};
use todshift_core::graph::{build_graph, GraphConfig};
use todshift_core::Domain;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/mini_corpus")
}

fn expected() -> Value {
    let text = std::fs::read_to_string(fixture_dir().join("expected.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn ingest_matches_hand_enumerated_counts() {
    let corpus = ingest(&fixture_dir(), &IngestConfig::default()).unwrap();
    let exp = expected();
    assert_eq!(
        corpus.train.pair_count() as u64,
        exp["pair_counts"]["train"].as_u64().unwrap()
    );
    assert_eq!(
        corpus.validation.pair_count() as u64,
        exp["pair_counts"]["validation"].as_u64().unwrap()
    );
    assert_eq!(
        corpus.test.pair_count() as u64,
        exp["pair_counts"]["test"].as_u64().unwrap()
    );
    assert_eq!(
        corpus.entities.len() as u64,
        exp["entities"].as_u64().unwrap()
    );
    let ids: Vec<&str> = corpus.entities.iter().map(|e| e.id.as_str()).collect();
    let expected_ids: Vec<&str> = exp["entity_ids"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    let mut sorted_ids = ids.clone();
    sorted_ids.sort();
    let mut sorted_expected = expected_ids.clone();
    sorted_expected.sort();
    assert_eq!(sorted_ids, sorted_expected);
    assert!(corpus.quarantine.is_empty());
}

#[test]
fn pair_count_equals_independent_recount_of_system_turns() {
    let corpus = ingest(&fixture_dir(), &IngestConfig::default()).unwrap();
    for split in [&corpus.train, &corpus.validation, &corpus.test] {
        let recount: usize = split.dialogs.iter().map(|d| d.turns.len()).sum();
        assert_eq!(split.pair_count(), recount);
    }
}

#[test]
fn stats_match_hand_computed_means() {
    let corpus = ingest(&fixture_dir(), &IngestConfig::default()).unwrap();
    let report = corpus_stats(&corpus);
    let exp = expected();
    for (domain, key) in [
        (Domain::Hotel, "hotel"),
        (Domain::Restaurant, "restaurant"),
        (Domain::Attraction, "attraction"),
    ] {
        let stats = &report.domains[&domain];
        assert_eq!(
            stats.mean_structured_slot_values,
            exp["mean_structured"][key].as_f64().unwrap(),
            "structured means for {key}"
        );
        assert_eq!(
            stats.mean_faqs,
            exp["mean_faqs"][key].as_f64().unwrap(),
            "faq means for {key}"
        );
    }
}

#[test]
fn graph_matches_hand_enumerated_edge_list() {
    let corpus = ingest(&fixture_dir(), &IngestConfig::default()).unwrap();
    let (graph, index) = build_graph(&corpus.train, &corpus.entities, &GraphConfig::default());
    let exp = expected();

    assert_eq!(
        graph.vertex_count() as u64,
        exp["vertices"].as_u64().unwrap()
    );
    for row in exp["vertex_table"].as_array().unwrap() {
        let row = row.as_array().unwrap();
        let idx = row[0].as_u64().unwrap() as usize;
        let v = &graph.vertices[idx];
        assert_eq!(v.entity_id, row[1].as_str().unwrap(), "vertex {idx}");
        assert_eq!(v.slot_type, row[2].as_str().unwrap(), "vertex {idx}");
        assert_eq!(v.canonical, row[3].as_str().unwrap(), "vertex {idx}");
    }

    let got: Vec<(u64, u64, u64)> = graph
        .edges
        .iter()
        .map(|e| (e.i as u64, e.j as u64, e.weight as u64))
        .collect();
    let want: Vec<(u64, u64, u64)> = exp["edges"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            let e = e.as_array().unwrap();
            (
                e[0].as_u64().unwrap(),
                e[1].as_u64().unwrap(),
                e[2].as_u64().unwrap(),
            )
        })
        .collect();
    assert_eq!(got, want);
    let total: u64 = graph.edges.iter().map(|e| e.weight as u64).sum();
    assert_eq!(total, exp["total_edge_weight"].as_u64().unwrap());

    // every edge is witnessed by at least one utterance mentioning both ends
    for e in &graph.edges {
        let witnessed = index.utterances.iter().any(|u| {
            let has = |v: u32| u.mentions.iter().any(|m| m.vertex == v as usize);
            has(e.i) && has(e.j)
        });
        assert!(witnessed, "edge ({}, {}) lacks a witness", e.i, e.j);
    }
}

#[test]
fn gold_entities_match_constraint_matcher_oracle() {
    let corpus = ingest(&fixture_dir(), &IngestConfig::default()).unwrap();
    let exp = expected();
    let mut by_dialog: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for split in [&corpus.train, &corpus.validation, &corpus.test] {
        for d in &split.dialogs {
            by_dialog.insert(d.id.as_str(), d.gold_entities.clone());
            for turn in &d.turns {
                assert!(
                    !turn.gold_entities.is_empty(),
                    "turn without gold in {}",
                    d.id
                );
            }
        }
    }
    for (dialog_id, golds) in exp["gold_entities"].as_object().unwrap() {
        let want: Vec<&str> = golds
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap())
            .collect();
        assert_eq!(
            by_dialog[dialog_id.as_str()],
            want,
            "gold entities of {dialog_id}"
        );
    }
}

#[test]
fn removing_a_dialog_never_adds_edges() {
    let corpus = ingest(&fixture_dir(), &IngestConfig::default()).unwrap();
    let (full, _) = build_graph(&corpus.train, &corpus.entities, &GraphConfig::default());
    let full_weights: BTreeMap<(u32, u32), u32> =
        full.edges.iter().map(|e| ((e.i, e.j), e.weight)).collect();
    for drop in 0..corpus.train.dialogs.len() {
        let mut reduced = corpus.train.clone();
        reduced.dialogs.remove(drop);
        let (graph, _) = build_graph(&reduced, &corpus.entities, &GraphConfig::default());
        for e in &graph.edges {
            let original = full_weights.get(&(e.i, e.j)).copied().unwrap_or(0);
            assert!(
                e.weight <= original,
                "dropping dialog {drop} raised edge ({}, {})",
                e.i,
                e.j
            );
        }
    }
}

#[test]
fn ingest_is_deterministic_and_snapshots_roundtrip() {
    let a = ingest(&fixture_dir(), &IngestConfig::default()).unwrap();
    let b = ingest(&fixture_dir(), &IngestConfig::default()).unwrap();
    assert_eq!(a, b);

    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    write_snapshot(&a, dir1.path()).unwrap();
    write_snapshot(&b, dir2.path()).unwrap();
    for file in [
        "entities.json",
        "train.json",
        "validation.json",
        "test.json",
        "manifest.json",
    ] {
        assert_eq!(
            std::fs::read(dir1.path().join(file)).unwrap(),
            std::fs::read(dir2.path().join(file)).unwrap(),
            "{file} differs between identical ingests"
        );
    }
    let back = read_snapshot(dir1.path()).unwrap();
    assert_eq!(back, a);
}

#[test]
fn empty_corpus_yields_empty_splits() {
    let dir = tempfile::tempdir().unwrap();
    write_empty_layout(dir.path()).unwrap();
    let corpus = ingest(dir.path(), &IngestConfig::default()).unwrap();
    assert_eq!(corpus.entities.len(), 0);
    assert_eq!(corpus.train.pair_count(), 0);
    assert_eq!(corpus.validation.pair_count(), 0);
    assert_eq!(corpus.test.pair_count(), 0);
    assert_eq!(corpus.train.dialogs.len(), 0);
}

#[test]
fn malformed_file_reports_locus() {
    let dir = tempfile::tempdir().unwrap();
    write_empty_layout(dir.path()).unwrap();
    std::fs::write(dir.path().join("data.json"), "{ not json").unwrap();
    let err = ingest(dir.path(), &IngestConfig::default()).unwrap_err();
    let message = err.to_string();
    assert!(message.contains("data.json"), "{message}");
    assert!(message.contains(":1:"), "missing line locus: {message}");
}

#[test]
fn unknown_entity_reference_is_quarantined() {
    let dir = tempfile::tempdir().unwrap();
    write_empty_layout(dir.path()).unwrap();
    std::fs::copy(
        fixture_dir().join("restaurant_db.json"),
        dir.path().join("restaurant_db.json"),
    )
    .unwrap();
    let data = serde_json::json!({
        "bad0001": {
            "goal": {"restaurant": {"info": {"name": "phantom place"}}},
            "log": [
                {"text": "book me phantom place", "metadata": {}},
                {"text": "done.", "metadata": {"restaurant": {"semi": {"name": "phantom place"}}}}
            ]
        },
        "good01": {
            "goal": {"restaurant": {"info": {"cuisine": "turkish"}}},
            "log": [
                {"text": "a turkish place please", "metadata": {}},
                {"text": "meze bar fits.", "metadata": {"restaurant": {"semi": {"name": "meze bar"}}}}
            ]
        }
    });
    std::fs::write(
        dir.path().join("data.json"),
        serde_json::to_string_pretty(&data).unwrap(),
    )
    .unwrap();
    let corpus = ingest(dir.path(), &IngestConfig::default()).unwrap();
    assert_eq!(corpus.quarantine.len(), 1);
    assert_eq!(corpus.quarantine[0].dialog_id, "bad0001");
    assert!(corpus.quarantine[0].reason.contains("phantom place"));
    // the healthy dialog survives with its gold entity resolved
    assert_eq!(corpus.train.dialogs.len(), 1);
    assert_eq!(
        corpus.train.dialogs[0].turns[0].gold_entities,
        vec!["restaurant-1"]
    );
}

#[test]
fn multi_domain_policy_controls_foreign_domain_dialogs() {
    let dir = tempfile::tempdir().unwrap();
    write_empty_layout(dir.path()).unwrap();
    std::fs::copy(
        fixture_dir().join("hotel_db.json"),
        dir.path().join("hotel_db.json"),
    )
    .unwrap();
    let data = serde_json::json!({
        "mix001": {
            "goal": {"hotel": {"info": {"price": "cheap"}}, "taxi": {"info": {"arriveBy": "5pm"}}},
            "log": [
                {"text": "cheap hotel and a taxi", "metadata": {}},
                {"text": "alpha lodge is cheap.", "metadata": {
                    "hotel": {"semi": {"price": "cheap"}},
                    "taxi": {"semi": {"arriveBy": "5pm"}}
                }}
            ]
        },
        "taxi01": {
            "goal": {"taxi": {"info": {"arriveBy": "5pm"}}},
            "log": [
                {"text": "just a taxi", "metadata": {}},
                {"text": "booked.", "metadata": {"taxi": {"semi": {"arriveBy": "5pm"}}}}
            ]
        }
    });
    std::fs::write(
        dir.path().join("data.json"),
        serde_json::to_string_pretty(&data).unwrap(),
    )
    .unwrap();

    // default policy keeps the mixed dialog, dropping the taxi knowledge link
    let corpus = ingest(dir.path(), &IngestConfig::default()).unwrap();
    assert_eq!(corpus.train.dialogs.len(), 1);
    let dialog = &corpus.train.dialogs[0];
    assert_eq!(dialog.id, "mix001");
    assert_eq!(dialog.domains.len(), 1);
    assert!(dialog.turns[0].belief.keys().all(|d| *d == Domain::Hotel));
    // the pure-taxi dialog has no supported domain, so it is quarantined
    assert_eq!(corpus.quarantine.len(), 1);
    assert_eq!(corpus.quarantine[0].dialog_id, "taxi01");

    // strict policy drops the mixed dialog too
    let strict = IngestConfig {
        multi_domain: MultiDomainPolicy::Strict,
    };
    let corpus = ingest(dir.path(), &strict).unwrap();
    assert_eq!(corpus.train.dialogs.len(), 0);
    assert_eq!(corpus.quarantine.len(), 2);
}
