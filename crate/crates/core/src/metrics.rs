//! Response evaluation: corpus-level BLEU and slot-value precision, recall
//! and F1. Slot detection reuses the mention matcher, restricted to slot
//! types that were originally in the structured knowledge source, so scores
//! are comparable across corpus variants regardless of where values live
//! now.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Domain, SlotValue};
use crate::error::{Error, Result};
use crate::mention::{find_mentions, MatcherConfig, ValueTable};
use crate::normalize::canonical_tokens;
use crate::retrieval::{success_at_k, Ranking};

/// One scored record: a hypothesis against its gold reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub context_id: String,
    pub hypothesis: String,
    pub reference: String,
    pub selected_entity_id: Option<String>,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u32> {
    let mut counts: HashMap<&[String], u32> = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU in [0, 100]: uniform weights over n-gram orders 1..=
/// max_n, clipped matches, brevity penalty, and +1 smoothing applied to a
/// higher-order precision only when it has zero matches. Tokenization is
/// canonical normalization plus whitespace split, so the score is
/// case-insensitive.
pub fn bleu(hypotheses: &[&str], references: &[&str], max_n: usize) -> f64 {
    assert_eq!(hypotheses.len(), references.len());
    if hypotheses.is_empty() || max_n == 0 {
        return 0.0;
    }
    let mut matches = vec![0u64; max_n];
    let mut totals = vec![0u64; max_n];
    let mut hyp_len = 0u64;
    let mut ref_len = 0u64;
    for (hyp, reference) in hypotheses.iter().zip(references) {
        let hyp_tokens = canonical_tokens(hyp);
        let ref_tokens = canonical_tokens(reference);
        hyp_len += hyp_tokens.len() as u64;
        ref_len += ref_tokens.len() as u64;
        for n in 1..=max_n {
            let hyp_ngrams = ngram_counts(&hyp_tokens, n);
            let ref_ngrams = ngram_counts(&ref_tokens, n);
            for (gram, count) in &hyp_ngrams {
                totals[n - 1] += *count as u64;
                if let Some(ref_count) = ref_ngrams.get(gram) {
                    matches[n - 1] += (*count).min(*ref_count) as u64;
                }
            }
        }
    }
    if hyp_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 0..max_n {
        let (m, t) = (matches[n], totals[n]);
        let p = if n == 0 {
            if m == 0 {
                return 0.0;
            }
            m as f64 / t as f64
        } else if m == 0 {
            (m + 1) as f64 / (t + 1) as f64
        } else {
            m as f64 / t as f64
        };
        log_sum += p.ln();
    }
    let brevity = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    100.0 * brevity * (log_sum / max_n as f64).exp()
}

/// (slot_type, canonical value) pairs detected in a response.
pub type SlotMatchSet = BTreeSet<(String, String)>;

/// The value universe slot matching runs against: the original structured
/// slot values (moves included), optionally restricted to one entity, always
/// restricted to originally-structured slot types.
pub struct SlotCandidates {
    values: Vec<SlotValue>,
    table: ValueTable,
}

impl SlotCandidates {
    pub fn build(
        original_values: &[SlotValue],
        allowed_types: &BTreeMap<Domain, BTreeSet<String>>,
        entity_id: Option<&str>,
        matcher: &MatcherConfig,
    ) -> SlotCandidates {
        let values: Vec<SlotValue> = original_values
            .iter()
            .filter(|v| {
                allowed_types
                    .get(&v.domain)
                    .map(|set| set.contains(&v.slot_type))
                    .unwrap_or(false)
            })
            .filter(|v| entity_id.map(|id| v.entity_id == id).unwrap_or(true))
            .cloned()
            .collect();
        let table = ValueTable::build(&values, matcher);
        SlotCandidates { values, table }
    }
}

/// Detect slot values in a response by boundary-aligned canonical matching,
/// with the matcher's usual length and stop-value suppression.
pub fn extract_slot_matches(response: &str, candidates: &SlotCandidates) -> SlotMatchSet {
    let (_, mentions) = find_mentions(response, &candidates.table);
    mentions
        .iter()
        .map(|m| {
            let v = &candidates.values[m.vertex];
            (v.slot_type.clone(), v.canonical.clone())
        })
        .collect()
}

/// Micro-averaged precision, recall and F1 in [0, 100]. Empty denominators
/// contribute nothing; F1 is 0 whenever either side is 0.
pub fn slot_prf(predicted: &[SlotMatchSet], gold: &[SlotMatchSet]) -> (f64, f64, f64) {
    assert_eq!(predicted.len(), gold.len());
    let mut tp = 0usize;
    let mut pred_total = 0usize;
    let mut gold_total = 0usize;
    for (p, g) in predicted.iter().zip(gold) {
        tp += p.intersection(g).count();
        pred_total += p.len();
        gold_total += g.len();
    }
    let precision = if pred_total == 0 {
        0.0
    } else {
        100.0 * tp as f64 / pred_total as f64
    };
    let recall = if gold_total == 0 {
        0.0
    } else {
        100.0 * tp as f64 / gold_total as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub matcher: MatcherConfig,
    /// Restrict predicted-slot detection to the record's selected entity
    /// when the prediction names one.
    pub entity_scoped_predictions: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            matcher: MatcherConfig::default(),
            entity_scoped_predictions: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub bleu_1: f64,
    pub bleu_4: f64,
    pub slot_precision: f64,
    pub slot_recall: f64,
    pub slot_f1: f64,
    pub success_at_1: Option<f64>,
    pub success_at_5: Option<f64>,
    pub records: usize,
    /// Detection policy notes.
    pub metadata: BTreeMap<String, String>,
}

impl MetricsReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{:>10} {:>10} {:>8} {:>8} {:>8} {:>10} {:>10}",
            "Bleu-1", "Bleu-4", "prec.", "recall", "F1", "success@1", "success@5"
        )
        .unwrap();
        let opt = |v: Option<f64>| match v {
            Some(x) => format!("{:.2}", 100.0 * x),
            None => "-".to_string(),
        };
        writeln!(
            out,
            "{:>10.2} {:>10.2} {:>8.2} {:>8.2} {:>8.2} {:>10} {:>10}",
            self.bleu_1,
            self.bleu_4,
            self.slot_precision,
            self.slot_recall,
            self.slot_f1,
            opt(self.success_at_1),
            opt(self.success_at_5),
        )
        .unwrap();
        out
    }
}

/// Evaluate a run against a corpus variant: BLEU over hypotheses vs gold
/// responses, slot P/R/F1 from matcher-detected slot sets, and success@k
/// when rankings are supplied. Gold slot sets derive from the reference text
/// and the originally-structured value universe, never from the hypotheses.
pub fn evaluate_records(
    records: &[EvalRecord],
    corpus: &Corpus,
    rankings: Option<&BTreeMap<String, Ranking>>,
    config: &MetricsConfig,
) -> MetricsReport {
    let original_values = corpus.original_slot_values();
    let allowed = corpus.originally_structured_types();
    let registry_candidates =
        SlotCandidates::build(&original_values, &allowed, None, &config.matcher);

    let hyps: Vec<&str> = records.iter().map(|r| r.hypothesis.as_str()).collect();
    let refs: Vec<&str> = records.iter().map(|r| r.reference.as_str()).collect();
    let bleu_1 = bleu(&hyps, &refs, 1);
    let bleu_4 = bleu(&hyps, &refs, 4);

    let pairs: Vec<(SlotMatchSet, SlotMatchSet)> = records
        .par_iter()
        .map(|r| {
            let gold = extract_slot_matches(&r.reference, &registry_candidates);
            let pred = match (&r.selected_entity_id, config.entity_scoped_predictions) {
                (Some(id), true) => {
                    let scoped = SlotCandidates::build(
                        &original_values,
                        &allowed,
                        Some(id.as_str()),
                        &config.matcher,
                    );
                    extract_slot_matches(&r.hypothesis, &scoped)
                }
                _ => extract_slot_matches(&r.hypothesis, &registry_candidates),
            };
            (pred, gold)
        })
        .collect();
    let predicted: Vec<SlotMatchSet> = pairs.iter().map(|(p, _)| p.clone()).collect();
    let gold: Vec<SlotMatchSet> = pairs.iter().map(|(_, g)| g.clone()).collect();
    let (precision, recall, f1) = slot_prf(&predicted, &gold);

    let (success_at_1_v, success_at_5_v) = match rankings {
        Some(rankings) => {
            let mut ordered: Vec<&Ranking> = Vec::new();
            let mut golds: Vec<HashSet<String>> = Vec::new();
            let gold_by_context = gold_entities_by_context(corpus);
            for (context_id, ranking) in rankings {
                if let Some(g) = gold_by_context.get(context_id) {
                    if !g.is_empty() {
                        ordered.push(ranking);
                        golds.push(g.clone());
                    }
                }
            }
            let owned: Vec<Ranking> = ordered.into_iter().cloned().collect();
            (
                Some(success_at_k(&owned, &golds, 1)),
                Some(success_at_k(&owned, &golds, 5)),
            )
        }
        None => (None, None),
    };

    let mut metadata = BTreeMap::new();
    metadata.insert(
        "gold_slot_sets".to_string(),
        "matches of originally-structured values inside the reference response".to_string(),
    );
    metadata.insert(
        "bleu_smoothing".to_string(),
        "+1 on higher-order precisions with zero matches; corpus-level aggregation".to_string(),
    );
    MetricsReport {
        bleu_1,
        bleu_4,
        slot_precision: precision,
        slot_recall: recall,
        slot_f1: f1,
        success_at_1: success_at_1_v,
        success_at_5: success_at_5_v,
        records: records.len(),
        metadata,
    }
}

/// Gold entity sets of the test split, keyed by context id
/// (`dialog_id:turn_index`).
pub fn gold_entities_by_context(corpus: &Corpus) -> BTreeMap<String, HashSet<String>> {
    let mut out = BTreeMap::new();
    for dialog in &corpus.test.dialogs {
        for (t, turn) in dialog.turns.iter().enumerate() {
            out.insert(
                format!("{}:{}", dialog.id, t),
                turn.gold_entities.iter().cloned().collect(),
            );
        }
    }
    out
}

/// One prediction-file line: `{"context_id": ..., "hypothesis": ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionLine {
    pub context_id: String,
    pub hypothesis: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_entity_id: Option<String>,
}

/// Load predictions and pair them with the test-split references. Every test
/// context must have a prediction; extra predictions are an error as well.
pub fn evaluate_run(
    predictions_path: &Path,
    corpus: &Corpus,
    rankings: Option<&BTreeMap<String, Ranking>>,
    config: &MetricsConfig,
) -> Result<MetricsReport> {
    let text =
        std::fs::read_to_string(predictions_path).map_err(|e| Error::io(predictions_path, e))?;
    let mut by_context: BTreeMap<String, PredictionLine> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: PredictionLine = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: predictions_path.to_path_buf(),
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        by_context.insert(parsed.context_id.clone(), parsed);
    }
    let mut records = Vec::new();
    for dialog in &corpus.test.dialogs {
        for (t, turn) in dialog.turns.iter().enumerate() {
            let context_id = format!("{}:{}", dialog.id, t);
            let prediction = by_context.remove(&context_id).ok_or_else(|| {
                Error::Evaluation(format!("missing prediction for context {context_id}"))
            })?;
            records.push(EvalRecord {
                context_id,
                hypothesis: prediction.hypothesis,
                reference: turn.system.clone(),
                selected_entity_id: prediction.selected_entity_id,
            });
        }
    }
    if let Some((extra, _)) = by_context.iter().next() {
        return Err(Error::Evaluation(format!(
            "prediction for unknown context {extra}"
        )));
    }
    Ok(evaluate_records(&records, corpus, rankings, config))
}
