//! Python bindings: a `Snapshot` handle over a corpus directory plus
//! standalone functions for the max-cut solver, BLEU, slot P/R/F1 and
//! success@k. Build with `cargo build --release -p todshift-py`; the cdylib
//! imports as `todshift_py` (see python/smoke_test.py).

use std::collections::HashSet;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use todshift_core::corpus::{corpus_stats, ingest, read_snapshot, write_snapshot, IngestConfig};
use todshift_core::graph::{CooccurGraph, Edge};
use todshift_core::maxcut::{brute_force_maxcut, maxcut_pipeline, SolverConfig};
use todshift_core::pipeline::{run_pipeline, RunConfig};
use todshift_core::redistribute::RedistributionMode;
use todshift_core::retrieval::index_entities;
use todshift_core::serializer::{
    emit_training_set, examples_to_jsonl, serialize_entity, ContextConfig, MixConfig,
};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// An immutable corpus snapshot (original or emitted variant).
#[pyclass]
struct Snapshot {
    corpus: todshift_core::Corpus,
}

#[pymethods]
impl Snapshot {
    /// Ingest a raw corpus directory (data.json, *_db.json, knowledge.json).
    #[staticmethod]
    fn ingest(corpus_dir: PathBuf) -> PyResult<Snapshot> {
        let corpus = ingest(&corpus_dir, &IngestConfig::default()).map_err(err)?;
        Ok(Snapshot { corpus })
    }

    /// Load a canonical snapshot directory.
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Snapshot> {
        let corpus = read_snapshot(&dir).map_err(err)?;
        Ok(Snapshot { corpus })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        write_snapshot(&self.corpus, &dir).map_err(err)
    }

    /// "none", "hybrid" or "unstructured".
    #[getter]
    fn variant(&self) -> String {
        self.corpus.variant.clone()
    }

    /// (train, validation, test) context-response pair counts.
    fn pair_counts(&self) -> (usize, usize, usize) {
        (
            self.corpus.train.pair_count(),
            self.corpus.validation.pair_count(),
            self.corpus.test.pair_count(),
        )
    }

    fn entity_ids(&self) -> Vec<String> {
        self.corpus.entities.iter().map(|e| e.id.clone()).collect()
    }

    /// The statistics report as a JSON string.
    fn stats_json(&self) -> String {
        serde_json::to_string_pretty(&corpus_stats(&self.corpus)).expect("serializable")
    }

    /// Token-stream serialization of one entity.
    fn serialize_entity(&self, entity_id: &str) -> PyResult<String> {
        let entity = self
            .corpus
            .entity(entity_id)
            .ok_or_else(|| err(format!("no entity {entity_id}")))?;
        Ok(serialize_entity(entity).encode())
    }

    /// BM25 ranking of all entities for a query string.
    fn rank(&self, query: &str) -> Vec<(String, f64)> {
        index_entities(&self.corpus.entities).score(query).entries
    }

    /// Emit the mixed training set as JSONL; returns the example count.
    #[pyo3(signature = (out_path, seed = 0))]
    fn emit_training_jsonl(&self, out_path: PathBuf, seed: u64) -> PyResult<usize> {
        let (examples, _) = emit_training_set(
            &self.corpus,
            &self.corpus.train,
            &MixConfig::default(),
            &ContextConfig::default(),
            seed,
        )
        .map_err(err)?;
        std::fs::write(&out_path, examples_to_jsonl(&examples))
            .map_err(|e| err(format!("{}: {e}", out_path.display())))?;
        Ok(examples.len())
    }
}

fn graph_from_edges(n: usize, edges: Vec<(u32, u32, u32)>) -> CooccurGraph {
    CooccurGraph::synthetic(
        n,
        edges
            .into_iter()
            .map(|(i, j, weight)| Edge { i, j, weight })
            .collect(),
    )
}

/// Max-cut via the low-rank relaxation pipeline. Returns (side, cut_value,
/// relaxation_objective).
#[pyfunction]
#[pyo3(signature = (n, edges, seed = 0, weighted = false))]
fn max_cut(
    n: usize,
    edges: Vec<(u32, u32, u32)>,
    seed: u64,
    weighted: bool,
) -> PyResult<(Vec<u8>, f64, f64)> {
    let graph = graph_from_edges(n, edges);
    let config = SolverConfig {
        seed,
        weighted,
        ..SolverConfig::default()
    };
    let cut = maxcut_pipeline(&graph, &config).map_err(err)?;
    Ok((cut.side, cut.cut_value, cut.sdp_objective))
}

/// Exact max-cut by enumeration (at most 24 vertices).
#[pyfunction]
#[pyo3(signature = (n, edges, weighted = false))]
fn brute_force_max_cut(
    n: usize,
    edges: Vec<(u32, u32, u32)>,
    weighted: bool,
) -> PyResult<(Vec<u8>, f64)> {
    let graph = graph_from_edges(n, edges);
    let cut = brute_force_maxcut(&graph, weighted).map_err(err)?;
    Ok((cut.side, cut.cut_value))
}

/// Corpus-level BLEU in [0, 100].
#[pyfunction]
#[pyo3(signature = (hypotheses, references, max_n = 4))]
fn bleu(hypotheses: Vec<String>, references: Vec<String>, max_n: usize) -> PyResult<f64> {
    if hypotheses.len() != references.len() {
        return Err(err("hypotheses and references differ in length"));
    }
    let hyps: Vec<&str> = hypotheses.iter().map(|s| s.as_str()).collect();
    let refs: Vec<&str> = references.iter().map(|s| s.as_str()).collect();
    Ok(todshift_core::metrics::bleu(&hyps, &refs, max_n))
}

/// Micro-averaged slot (precision, recall, F1), each in [0, 100].
#[pyfunction]
fn slot_prf(
    predicted: Vec<Vec<(String, String)>>,
    gold: Vec<Vec<(String, String)>>,
) -> PyResult<(f64, f64, f64)> {
    if predicted.len() != gold.len() {
        return Err(err("predicted and gold differ in length"));
    }
    let to_sets = |rows: Vec<Vec<(String, String)>>| {
        rows.into_iter()
            .map(|row| row.into_iter().collect())
            .collect::<Vec<todshift_core::metrics::SlotMatchSet>>()
    };
    Ok(todshift_core::metrics::slot_prf(
        &to_sets(predicted),
        &to_sets(gold),
    ))
}

/// success@k over (ranked id list, gold id set) pairs.
#[pyfunction]
fn success_at_k(rankings: Vec<Vec<String>>, golds: Vec<Vec<String>>, k: usize) -> PyResult<f64> {
    if rankings.len() != golds.len() {
        return Err(err("rankings and golds differ in length"));
    }
    let rankings: Vec<todshift_core::retrieval::Ranking> = rankings
        .into_iter()
        .map(|ids| todshift_core::retrieval::Ranking {
            entries: ids.into_iter().map(|id| (id, 0.0)).collect(),
        })
        .collect();
    let golds: Vec<HashSet<String>> = golds.into_iter().map(|g| g.into_iter().collect()).collect();
    Ok(todshift_core::retrieval::success_at_k(&rankings, &golds, k))
}

/// Canonical text form used for matching everywhere.
#[pyfunction]
fn canonicalize(text: &str) -> String {
    todshift_core::normalize::canonicalize(text)
}

/// Run the full pipeline; returns the run manifest as a JSON string.
#[pyfunction]
#[pyo3(signature = (input_dir, output_dir, variant = "hybrid", seed = 0, weighted_cut = false))]
fn pipeline(
    input_dir: PathBuf,
    output_dir: PathBuf,
    variant: &str,
    seed: u64,
    weighted_cut: bool,
) -> PyResult<String> {
    let mut config = RunConfig::new(input_dir, output_dir);
    config.variant = RedistributionMode::parse(variant)
        .ok_or_else(|| err(format!("unknown variant {variant:?}")))?;
    config.seed = seed;
    config.weighted_cut = weighted_cut;
    let outcome = run_pipeline(&config).map_err(err)?;
    Ok(serde_json::to_string_pretty(&outcome.manifest).expect("serializable"))
}

#[pymodule]
fn todshift_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Snapshot>()?;
    m.add_function(wrap_pyfunction!(max_cut, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_max_cut, m)?)?;
    m.add_function(wrap_pyfunction!(bleu, m)?)?;
    m.add_function(wrap_pyfunction!(slot_prf, m)?)?;
    m.add_function(wrap_pyfunction!(success_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(canonicalize, m)?)?;
    m.add_function(wrap_pyfunction!(pipeline, m)?)?;
    Ok(())
}
