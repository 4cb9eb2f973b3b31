//! Slot-value mention matching inside utterances. A vertex is mentioned when
//! its canonical value occurs as a token-boundary-aligned substring of the
//! canonical utterance. The same matcher drives co-occurrence edges and
//! slot-value detection in the metrics, so both share one notion of "the
//! value appears in this text".

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::SlotValue;
use crate::normalize::canonicalize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatcherConfig {
    /// Values shorter than this (in chars) never match.
    pub min_value_len: usize,
    /// Values on this list never match (canonical forms).
    pub stop_values: Vec<String>,
    /// Alias hook: alias text → canonical value it stands for. Ships empty;
    /// paraphrase matching is out of scope by default.
    pub aliases: BTreeMap<String, String>,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            min_value_len: 3,
            stop_values: vec!["yes".to_string(), "no".to_string()],
            aliases: BTreeMap::new(),
        }
    }
}

/// One match: vertex index plus the byte span in the canonical utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub vertex: usize,
    pub start: usize,
    pub end: usize,
}

/// Mentions of one utterance, tagged with where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMentions {
    pub dialog_id: String,
    /// Pair index within the dialog.
    pub turn_index: usize,
    /// true if this is the user utterance of the pair.
    pub is_user: bool,
    pub canonical_text: String,
    pub mentions: Vec<Mention>,
}

/// Per-utterance mention lists for the whole training split; the audit trail
/// that witnesses every co-occurrence edge.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MentionIndex {
    pub utterances: Vec<UtteranceMentions>,
}

impl MentionIndex {
    /// Number of utterances in which each vertex appears at least once.
    pub fn mention_counts(&self, vertex_count: usize) -> Vec<usize> {
        let mut counts = vec![0usize; vertex_count];
        for utt in &self.utterances {
            let mut seen = std::collections::BTreeSet::new();
            for m in &utt.mentions {
                if seen.insert(m.vertex) {
                    counts[m.vertex] += 1;
                }
            }
        }
        counts
    }
}

/// Matching patterns grouped by canonical value so each distinct string is
/// scanned once per utterance.
pub struct ValueTable {
    /// (pattern, vertex indices it mentions when found)
    patterns: Vec<(String, Vec<usize>)>,
}

impl ValueTable {
    pub fn build(vertices: &[SlotValue], config: &MatcherConfig) -> ValueTable {
        let mut by_value: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, v) in vertices.iter().enumerate() {
            if v.canonical.chars().count() < config.min_value_len {
                continue;
            }
            if config.stop_values.iter().any(|s| s == &v.canonical) {
                continue;
            }
            by_value.entry(v.canonical.clone()).or_default().push(i);
        }
        let mut patterns: Vec<(String, Vec<usize>)> = by_value
            .iter()
            .map(|(v, idx)| (v.clone(), idx.clone()))
            .collect();
        // Alias hook: map alias text onto the vertices of its target value.
        for (alias, target) in &config.aliases {
            let alias = canonicalize(alias);
            let target = canonicalize(target);
            if alias.chars().count() < config.min_value_len {
                continue;
            }
            if let Some(idx) = by_value.get(&target) {
                patterns.push((alias, idx.clone()));
            }
        }
        patterns.sort();
        patterns.dedup();
        ValueTable { patterns }
    }
}

fn boundary_ok(text: &str, start: usize, end: usize) -> bool {
    let before_ok = text[..start]
        .chars()
        .next_back()
        .map(|c| !c.is_alphanumeric())
        .unwrap_or(true);
    let after_ok = text[end..]
        .chars()
        .next()
        .map(|c| !c.is_alphanumeric())
        .unwrap_or(true);
    before_ok && after_ok
}

/// All token-boundary-aligned matches of table values in an utterance. The
/// utterance is canonicalized internally; spans refer to the canonical text.
pub fn find_mentions(utterance: &str, table: &ValueTable) -> (String, Vec<Mention>) {
    let canonical = canonicalize(utterance);
    let mut mentions = Vec::new();
    for (pattern, vertices) in &table.patterns {
        for (start, m) in canonical.match_indices(pattern.as_str()) {
            let end = start + m.len();
            if boundary_ok(&canonical, start, end) {
                for &vertex in vertices {
                    mentions.push(Mention { vertex, start, end });
                }
            }
        }
    }
    mentions.sort_by_key(|m| (m.vertex, m.start));
    mentions.dedup();
    (canonical, mentions)
}
