//! Corpus statistics: per-domain entity counts, mean structured slot-values
//! per entity, mean FAQs per entity, per-slot-type distributions and
//! per-split context-response counts. Serializable as JSON and printable as a
//! plain-text table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Corpus, Domain, SplitName};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotTypeStats {
    /// Entities with at least one structured value of this slot type.
    pub entities_structured: usize,
    /// Structured values of this slot type across entities.
    pub values_structured: usize,
    /// Values of this slot type moved to the unstructured source (variants).
    pub values_moved: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainStats {
    pub entities: usize,
    pub mean_structured_slot_values: f64,
    pub mean_faqs: f64,
    pub slot_types: BTreeMap<String, SlotTypeStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub variant: String,
    /// split → context-response pair count.
    pub pair_counts: BTreeMap<String, usize>,
    pub total_entities: usize,
    pub domains: BTreeMap<Domain, DomainStats>,
}

/// Compute the report for one corpus (original snapshot or emitted variant).
pub fn corpus_stats(corpus: &Corpus) -> StatsReport {
    let mut domains: BTreeMap<Domain, DomainStats> = BTreeMap::new();
    for domain in Domain::ALL {
        let entities: Vec<_> = corpus
            .entities
            .iter()
            .filter(|e| e.domain == domain)
            .collect();
        let n = entities.len();
        let total_values: usize = entities.iter().map(|e| e.structured_value_count()).sum();
        let total_faqs: usize = entities.iter().map(|e| e.faqs.len()).sum();
        let mut slot_types: BTreeMap<String, SlotTypeStats> = BTreeMap::new();
        for e in &entities {
            for (slot, values) in &e.structured_slots {
                let s = slot_types.entry(slot.clone()).or_insert(SlotTypeStats {
                    entities_structured: 0,
                    values_structured: 0,
                    values_moved: 0,
                });
                s.entities_structured += 1;
                s.values_structured += values.len();
            }
        }
        for mv in &corpus.moves {
            if let Some(e) = corpus.entity(&mv.entity_id) {
                if e.domain == domain {
                    slot_types
                        .entry(mv.slot_type.clone())
                        .or_insert(SlotTypeStats {
                            entities_structured: 0,
                            values_structured: 0,
                            values_moved: 0,
                        })
                        .values_moved += 1;
                }
            }
        }
        domains.insert(
            domain,
            DomainStats {
                entities: n,
                mean_structured_slot_values: if n == 0 {
                    0.0
                } else {
                    total_values as f64 / n as f64
                },
                mean_faqs: if n == 0 {
                    0.0
                } else {
                    total_faqs as f64 / n as f64
                },
                slot_types,
            },
        );
    }
    StatsReport {
        variant: corpus.variant.clone(),
        pair_counts: SplitName::ALL
            .iter()
            .map(|n| (n.to_string(), corpus.split(*n).pair_count()))
            .collect(),
        total_entities: corpus.entities.len(),
        domains,
    }
}

impl StatsReport {
    /// Plain-text table, one domain per row.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("variant: {}\n", self.variant));
        out.push_str(&format!(
            "context-response pairs: train {} / validation {} / test {}\n",
            self.pair_counts.get("train").copied().unwrap_or(0),
            self.pair_counts.get("validation").copied().unwrap_or(0),
            self.pair_counts.get("test").copied().unwrap_or(0),
        ));
        out.push_str(&format!("entities: {}\n", self.total_entities));
        out.push_str(&format!(
            "{:<12} {:>9} {:>18} {:>12}\n",
            "domain", "entities", "mean slot-values", "mean FAQs"
        ));
        for (domain, stats) in &self.domains {
            out.push_str(&format!(
                "{:<12} {:>9} {:>18.2} {:>12.2}\n",
                domain.to_string(),
                stats.entities,
                stats.mean_structured_slot_values,
                stats.mean_faqs
            ));
        }
        out
    }
}
