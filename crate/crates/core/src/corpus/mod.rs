//! Data model for the dialog corpus and its two knowledge sources: a
//! structured KB (per-entity slot→value records) and an unstructured source
//! (per-entity FAQ documents). The model is immutable after ingestion and
//! safe to share across threads.

mod ingest;
mod snapshot;
mod stats;

pub use ingest::{
    ingest, matching_entities, write_empty_layout, IngestConfig, MultiDomainPolicy, QuarantineEntry,
};
pub use snapshot::{read_snapshot, write_snapshot, SnapshotManifest};
pub use stats::{corpus_stats, DomainStats, SlotTypeStats, StatsReport};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::normalize::canonicalize;

/// The three knowledge-bearing domains. Dialogs touching only other domains
/// are dropped at ingestion because no knowledge is attached to them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Hotel,
    Restaurant,
    Attraction,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Hotel, Domain::Restaurant, Domain::Attraction];

    pub fn as_str(&self) -> &'static str {
        match self {
            Domain::Hotel => "hotel",
            Domain::Restaurant => "restaurant",
            Domain::Attraction => "attraction",
        }
    }

    pub fn parse(s: &str) -> Option<Domain> {
        match s {
            "hotel" => Some(Domain::Hotel),
            "restaurant" => Some(Domain::Restaurant),
            "attraction" => Some(Domain::Attraction),
            _ => None,
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which knowledge source a value currently lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnowledgeSource {
    Structured,
    Unstructured,
}

/// One concrete slot value of one entity. `value` keeps the surface form
/// (trimmed, whitespace collapsed); `canonical` is the matching key shared
/// with the mention matcher and the metrics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotValue {
    pub entity_id: String,
    pub domain: Domain,
    pub slot_type: String,
    pub value: String,
    pub canonical: String,
    pub source: KnowledgeSource,
}

/// A surface value plus its canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueEntry {
    pub surface: String,
    pub canonical: String,
}

impl ValueEntry {
    pub fn new(surface: &str) -> ValueEntry {
        let surface = crate::normalize::collapse_whitespace(surface);
        let canonical = canonicalize(&surface);
        ValueEntry { surface, canonical }
    }
}

/// One FAQ document: a question/answer pair attached to an entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Faq {
    pub question: String,
    pub answer: String,
}

/// An entity with both knowledge sides. The name is kept in both sources in
/// every emitted variant: it is a structured slot and it anchors the
/// unstructured record, so redistribution never touches it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub domain: Domain,
    pub name: String,
    /// slot type → values, in KB order. Always contains the "name" slot.
    pub structured_slots: BTreeMap<String, Vec<ValueEntry>>,
    pub faqs: Vec<Faq>,
}

impl Entity {
    pub fn canonical_name(&self) -> String {
        canonicalize(&self.name)
    }

    /// All structured slot values of this entity as `SlotValue` records,
    /// one per (slot_type, value) pair, in (slot, value) order.
    pub fn slot_values(&self) -> Vec<SlotValue> {
        let mut out = Vec::new();
        for (slot_type, values) in &self.structured_slots {
            for v in values {
                out.push(SlotValue {
                    entity_id: self.id.clone(),
                    domain: self.domain,
                    slot_type: slot_type.clone(),
                    value: v.surface.clone(),
                    canonical: v.canonical.clone(),
                    source: KnowledgeSource::Structured,
                });
            }
        }
        out
    }

    /// Count of structured slot values, the name slot included.
    pub fn structured_value_count(&self) -> usize {
        self.structured_slots.values().map(|v| v.len()).sum()
    }
}

/// One context-response pair: the user utterance that ends the context plus
/// the gold system response, with the belief-state constraints active at this
/// turn and the entities that exactly match them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub user: String,
    pub system: String,
    /// Active constraints at this turn: domain → slot → required value.
    pub belief: BTreeMap<Domain, BTreeMap<String, String>>,
    /// Entities matching all constraints of some active domain (positives).
    pub gold_entities: Vec<String>,
}

/// A dialog restricted to the knowledge-bearing domains. Turns alternate
/// user/system beginning with user; a context is any prefix ending in a user
/// utterance, so there is exactly one context per stored turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialog {
    pub id: String,
    pub domains: BTreeSet<Domain>,
    /// Final belief state per domain (from corpus annotations when present).
    pub goal_constraints: BTreeMap<Domain, BTreeMap<String, String>>,
    pub turns: Vec<Turn>,
    /// Union of per-turn gold entities.
    pub gold_entities: Vec<String>,
}

impl Dialog {
    /// Context utterances for the pair at `turn_index`: all user/system turns
    /// before it, then the user utterance of the pair itself.
    pub fn context(&self, turn_index: usize) -> Vec<(ContextRole, &str)> {
        let mut ctx = Vec::new();
        for t in &self.turns[..turn_index] {
            ctx.push((ContextRole::User, t.user.as_str()));
            ctx.push((ContextRole::System, t.system.as_str()));
        }
        ctx.push((ContextRole::User, self.turns[turn_index].user.as_str()));
        ctx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContextRole {
    User,
    System,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::Validation, SplitName::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<SplitName> {
        match s {
            "train" => Some(SplitName::Train),
            "validation" | "val" | "dev" => Some(SplitName::Validation),
            "test" => Some(SplitName::Test),
            _ => None,
        }
    }
}

impl std::fmt::Display for SplitName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One corpus split. The entity registry is shared across splits and lives on
/// [`Corpus`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub name: SplitName,
    pub dialogs: Vec<Dialog>,
}

impl CorpusSplit {
    /// Context-response pair count: the number of system turns.
    pub fn pair_count(&self) -> usize {
        self.dialogs.iter().map(|d| d.turns.len()).sum()
    }
}

/// A record of a slot value moved from the structured to the unstructured
/// source, kept in the snapshot manifest so downstream consumers can
/// reconstruct where information originally lived.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub entity_id: String,
    pub slot_type: String,
    /// Canonical value.
    pub value: String,
    pub template_id: String,
    pub rng_seed: u64,
}

/// The full corpus: three splits plus a shared entity registry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub entities: Vec<Entity>,
    pub train: CorpusSplit,
    pub validation: CorpusSplit,
    pub test: CorpusSplit,
    /// "none" for an ingested snapshot, "hybrid"/"unstructured" for variants.
    pub variant: String,
    /// Moves applied to produce this variant (empty for "none").
    pub moves: Vec<MoveRecord>,
    /// Dialogs dropped at ingestion with the reason.
    pub quarantine: Vec<QuarantineEntry>,
}

impl Corpus {
    pub fn split(&self, name: SplitName) -> &CorpusSplit {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entities.iter().find(|e| e.id == id)
    }

    /// The set of slot types that were originally in the structured source,
    /// per domain: current structured slots plus any recorded moves.
    pub fn originally_structured_types(&self) -> BTreeMap<Domain, BTreeSet<String>> {
        let mut map: BTreeMap<Domain, BTreeSet<String>> = BTreeMap::new();
        for e in &self.entities {
            let set = map.entry(e.domain).or_default();
            for slot in e.structured_slots.keys() {
                set.insert(slot.clone());
            }
        }
        for mv in &self.moves {
            if let Some(e) = self.entity(&mv.entity_id) {
                map.entry(e.domain)
                    .or_default()
                    .insert(mv.slot_type.clone());
            }
        }
        map
    }

    /// The original structured slot-value universe: current structured values
    /// plus recorded moves. Identical across all variants of one corpus.
    pub fn original_slot_values(&self) -> Vec<SlotValue> {
        let mut out: Vec<SlotValue> = Vec::new();
        for e in &self.entities {
            out.extend(e.slot_values());
        }
        for mv in &self.moves {
            if let Some(e) = self.entity(&mv.entity_id) {
                out.push(SlotValue {
                    entity_id: mv.entity_id.clone(),
                    domain: e.domain,
                    slot_type: mv.slot_type.clone(),
                    value: mv.value.clone(),
                    canonical: mv.value.clone(),
                    source: KnowledgeSource::Unstructured,
                });
            }
        }
        out.sort_by(|a, b| {
            (&a.entity_id, &a.slot_type, &a.canonical).cmp(&(
                &b.entity_id,
                &b.slot_type,
                &b.canonical,
            ))
        });
        out
    }
}
