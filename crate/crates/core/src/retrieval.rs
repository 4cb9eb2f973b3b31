//! Okapi BM25 entity-retrieval baseline. Each entity document is its
//! serialized token stream with the special tokens stripped, tokenized by
//! canonical normalization and whitespace splitting. Rankings are full and
//! deterministic: score descending, entity id ascending on ties.
//!
//! Scoring, with N documents, df(t) document frequencies, tf(t,d) term
//! frequencies, |d| document length and avgdl the mean length:
//!
//! ```text
//! idf(t)      = ln(1 + (N - df + 0.5) / (df + 0.5))
//! score(q, d) = Σ_{t in q} idf(t) · tf·(k1+1) / (tf + k1·(1 - b + b·|d|/avgdl))
//! ```
//!
//! The sum runs over the query tokens as given, duplicates included.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::Entity;
use crate::normalize::canonical_tokens;
use crate::serializer::serialize_entity;

pub const DEFAULT_K1: f64 = 1.5;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, Clone)]
struct DocEntry {
    entity_id: String,
    term_freq: HashMap<String, u32>,
    len: usize,
}

/// Immutable BM25 index over the entity registry.
#[derive(Debug, Clone)]
pub struct EntityIndex {
    docs: Vec<DocEntry>,
    doc_freq: HashMap<String, u32>,
    avgdl: f64,
    pub k1: f64,
    pub b: f64,
}

/// Full ranking of all indexed entities for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// (entity_id, score), score descending, id ascending on ties.
    pub entries: Vec<(String, f64)>,
}

impl Ranking {
    pub fn top_k(&self, k: usize) -> impl Iterator<Item = &str> {
        self.entries.iter().take(k).map(|(id, _)| id.as_str())
    }
}

/// Build the index from entity documents.
pub fn index_entities(entities: &[Entity]) -> EntityIndex {
    index_documents(
        entities
            .iter()
            .map(|e| (e.id.clone(), serialize_entity(e).strip_special())),
    )
}

/// Build the index from raw (id, text) documents; used by tests with
/// hand-scored fixtures.
pub fn index_documents(docs: impl IntoIterator<Item = (String, String)>) -> EntityIndex {
    let mut entries: Vec<DocEntry> = Vec::new();
    let mut doc_freq: HashMap<String, u32> = HashMap::new();
    for (entity_id, text) in docs {
        let tokens = canonical_tokens(&text);
        let mut term_freq: HashMap<String, u32> = HashMap::new();
        for t in &tokens {
            *term_freq.entry(t.clone()).or_insert(0) += 1;
        }
        for term in term_freq.keys() {
            *doc_freq.entry(term.clone()).or_insert(0) += 1;
        }
        entries.push(DocEntry {
            entity_id,
            len: tokens.len(),
            term_freq,
        });
    }
    entries.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
    let avgdl = if entries.is_empty() {
        0.0
    } else {
        entries.iter().map(|d| d.len as f64).sum::<f64>() / entries.len() as f64
    };
    EntityIndex {
        docs: entries,
        doc_freq,
        avgdl,
        k1: DEFAULT_K1,
        b: DEFAULT_B,
    }
}

impl EntityIndex {
    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn document_frequency(&self, term: &str) -> u32 {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.document_frequency(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Score a raw query string against every document.
    pub fn score(&self, query: &str) -> Ranking {
        let terms = canonical_tokens(query);
        let mut entries: Vec<(String, f64)> = self
            .docs
            .iter()
            .map(|doc| {
                let mut score = 0.0;
                for term in &terms {
                    let tf = doc.term_freq.get(term).copied().unwrap_or(0) as f64;
                    if tf == 0.0 {
                        continue;
                    }
                    let norm = if self.avgdl > 0.0 {
                        1.0 - self.b + self.b * doc.len as f64 / self.avgdl
                    } else {
                        1.0
                    };
                    score += self.idf(term) * tf * (self.k1 + 1.0) / (tf + self.k1 * norm);
                }
                (doc.entity_id.clone(), score)
            })
            .collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ranking { entries }
    }
}

/// Query text for a context: every utterance joined (the default), or the
/// last user utterance only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    #[default]
    FullContext,
    LastUserTurn,
}

pub fn context_query(utterances: &[&str], mode: QueryMode) -> String {
    match mode {
        QueryMode::FullContext => utterances.join(" "),
        QueryMode::LastUserTurn => utterances.last().copied().unwrap_or("").to_string(),
    }
}

/// success@k: the fraction of contexts whose top-k entities contain a gold
/// entity. Contexts with an empty gold set are not counted.
pub fn success_at_k(rankings: &[Ranking], golds: &[HashSet<String>], k: usize) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for (ranking, gold) in rankings.iter().zip(golds) {
        if gold.is_empty() {
            continue;
        }
        total += 1;
        if ranking.top_k(k).any(|id| gold.contains(id)) {
            hits += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// TSV export: context_id, rank, entity_id, score.
pub fn rankings_to_tsv(rankings: &BTreeMap<String, Ranking>) -> String {
    let mut out = String::new();
    for (context_id, ranking) in rankings {
        for (rank, (entity_id, score)) in ranking.entries.iter().enumerate() {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                context_id,
                rank + 1,
                entity_id,
                score
            )
            .unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_index() -> EntityIndex {
        index_documents([
            (
                "e1".to_string(),
                "turkish restaurant centre cheap".to_string(),
            ),
            ("e2".to_string(), "italian restaurant south".to_string()),
            ("e3".to_string(), "museum centre free".to_string()),
        ])
    }

    #[test]
    fn hand_computed_bm25_scores() {
        // N = 3, avgdl = 10/3, k1 = 1.5, b = 0.75, all tf = 1.
        // idf(turkish)    = ln(1 + 2.5/1.5) = ln(8/3)
        // idf(restaurant) = idf(centre) = ln(1 + 1.5/2.5) = ln(8/5)
        // e1 (len 4): denom = 1 + 1.5·(0.25 + 0.75·1.2)  = 2.725
        // e2, e3 (len 3): denom = 1 + 1.5·(0.25 + 0.75·0.9) = 2.3875
        let index = fixture_index();
        let ranking = index.score("turkish restaurant centre");
        let f1 = 2.5 / 2.725;
        let f2 = 2.5 / 2.3875;
        let expected_e1 = ((8.0f64 / 3.0).ln() + 2.0 * (8.0f64 / 5.0).ln()) * f1;
        let expected_e2 = (8.0f64 / 5.0).ln() * f2;
        let expected_e3 = (8.0f64 / 5.0).ln() * f2;
        assert_eq!(ranking.entries[0].0, "e1");
        assert!((ranking.entries[0].1 - expected_e1).abs() < 1e-9);
        // e2 and e3 tie exactly; id order breaks the tie
        assert_eq!(ranking.entries[1].0, "e2");
        assert_eq!(ranking.entries[2].0, "e3");
        assert!((ranking.entries[1].1 - expected_e2).abs() < 1e-9);
        assert!((ranking.entries[2].1 - expected_e3).abs() < 1e-9);
        assert_eq!(ranking.entries[1].1, ranking.entries[2].1);
    }

    #[test]
    fn unindexed_query_scores_zero_in_id_order() {
        let index = fixture_index();
        let ranking = index.score("zzz qqq");
        assert!(ranking.entries.iter().all(|(_, s)| *s == 0.0));
        let ids: Vec<&str> = ranking.entries.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, vec!["e1", "e2", "e3"]);
    }

    #[test]
    fn duplicate_documents_tie_and_break_by_id() {
        let index = index_documents([
            ("b".to_string(), "same text here".to_string()),
            ("a".to_string(), "same text here".to_string()),
        ]);
        let ranking = index.score("same text");
        assert_eq!(ranking.entries[0].0, "a");
        assert_eq!(ranking.entries[0].1, ranking.entries[1].1);
    }

    #[test]
    fn empty_index_returns_empty_ranking() {
        let index = index_documents(std::iter::empty());
        assert_eq!(index.doc_count(), 0);
        assert!(index.score("anything").entries.is_empty());
    }

    #[test]
    fn df_bounded_by_doc_count() {
        let index = fixture_index();
        assert!(index.document_frequency("restaurant") <= index.doc_count() as u32);
        assert_eq!(index.document_frequency("restaurant"), 2);
    }

    #[test]
    fn success_at_k_monotone_and_saturating() {
        let index = fixture_index();
        let rankings = vec![index.score("museum centre")];
        let golds = vec![HashSet::from(["e3".to_string()])];
        let mut prev = 0.0;
        for k in 1..=3 {
            let s = success_at_k(&rankings, &golds, k);
            assert!(s >= prev);
            prev = s;
        }
        assert_eq!(success_at_k(&rankings, &golds, 3), 1.0);
        // gold at a lower rank: success@1 = 0, success@large = 1
        let rankings = vec![index.score("turkish restaurant")];
        let golds = vec![HashSet::from(["e2".to_string()])];
        assert_eq!(success_at_k(&rankings, &golds, 1), 0.0);
        assert_eq!(success_at_k(&rankings, &golds, 3), 1.0);
    }

    #[test]
    fn removing_non_gold_entities_gives_perfect_success_at_1() {
        let index = index_documents([("gold".to_string(), "turkish food".to_string())]);
        let rankings = vec![index.score("anything at all")];
        let golds = vec![HashSet::from(["gold".to_string()])];
        assert_eq!(success_at_k(&rankings, &golds, 1), 1.0);
    }

    #[test]
    fn query_modes() {
        let utterances = ["first turn", "second turn", "third turn"];
        assert_eq!(
            context_query(&utterances, QueryMode::FullContext),
            "first turn second turn third turn"
        );
        assert_eq!(
            context_query(&utterances, QueryMode::LastUserTurn),
            "third turn"
        );
    }
}
