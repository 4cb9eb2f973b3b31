//! Applying a cut to the corpus: slot-values on the moving side are removed
//! from the structured source and re-emitted as template-rendered FAQ pairs
//! on the owning entity. Dialog text is never modified; the change is purely
//! in where knowledge lives.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Entity, Faq, MoveRecord};
use crate::error::{Error, Result};
use crate::graph::CooccurGraph;
use crate::maxcut::CutResult;
use crate::mention::MentionIndex;
use crate::normalize::canonicalize;
use crate::seed;

/// One question/answer template for a slot type. Placeholders: `${entity
/// name}` and `${<slot_type>}`. The answer template must contain the slot
/// placeholder so the rendered answer carries the value verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplatePair {
    pub question: String,
    pub answer: String,
}

impl TemplatePair {
    pub fn render(&self, slot_type: &str, entity_name: &str, value: &str) -> (String, String) {
        let name_ph = "${entity name}";
        let value_ph = format!("${{{slot_type}}}");
        let sub = |template: &str| {
            template
                .replace(name_ph, entity_name)
                .replace(&value_ph, value)
        };
        (sub(&self.question), sub(&self.answer))
    }
}

/// Templates keyed by slot type, loadable from JSON. The bundled default set
/// covers the common hotel/restaurant/attraction slot types.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TemplateSet {
    pub by_slot_type: BTreeMap<String, Vec<TemplatePair>>,
}

impl TemplateSet {
    /// The template file shipped with the toolkit.
    pub fn builtin() -> TemplateSet {
        serde_json::from_str(include_str!("../fixtures/templates.json"))
            .expect("bundled templates parse")
    }

    pub fn from_path(path: &Path) -> Result<TemplateSet> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let set: TemplateSet =
            serde_json::from_slice(&bytes).map_err(|e| Error::parse(path, &e))?;
        set.validate()?;
        Ok(set)
    }

    /// Every answer template must embed its slot placeholder.
    pub fn validate(&self) -> Result<()> {
        for (slot_type, pairs) in &self.by_slot_type {
            if pairs.is_empty() {
                return Err(Error::MissingTemplate(slot_type.clone()));
            }
            for p in pairs {
                let ph = format!("${{{slot_type}}}");
                if !p.answer.contains(&ph) {
                    return Err(Error::TemplateLostValue {
                        slot_type: slot_type.clone(),
                        value: ph,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, slot_type: &str) -> Option<&[TemplatePair]> {
        self.by_slot_type.get(slot_type).map(|v| v.as_slice())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RedistributionMode {
    /// Move the cut side selected to affect the most training utterances.
    #[default]
    Hybrid,
    /// Move every non-name slot value.
    Unstructured,
    /// Move nothing.
    None,
}

impl RedistributionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RedistributionMode::Hybrid => "hybrid",
            RedistributionMode::Unstructured => "unstructured",
            RedistributionMode::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<RedistributionMode> {
        match s {
            "hybrid" => Some(RedistributionMode::Hybrid),
            "unstructured" | "unstructured_all" => Some(RedistributionMode::Unstructured),
            "none" => Some(RedistributionMode::None),
            _ => None,
        }
    }
}

/// A planned move. `template_id` and `rng_seed` are filled when the plan is
/// applied; the seed is derived from the move identity so template choice is
/// independent of iteration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedMove {
    pub entity_id: String,
    pub slot_type: String,
    /// Canonical value.
    pub value: String,
    pub template_id: Option<String>,
    pub rng_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanMetadata {
    /// Which cut side was moved (hybrid mode).
    pub moved_side: Option<u8>,
    /// Training utterances touching at least one moved vertex.
    pub affected_utterances_moved: usize,
    /// Training utterances touching at least one kept vertex.
    pub affected_utterances_kept: usize,
    pub policy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedistributionPlan {
    pub mode: RedistributionMode,
    pub moves: Vec<PlannedMove>,
    pub metadata: PlanMetadata,
}

impl RedistributionPlan {
    pub fn empty(mode: RedistributionMode) -> RedistributionPlan {
        RedistributionPlan {
            mode,
            moves: Vec::new(),
            metadata: PlanMetadata::default(),
        }
    }
}

fn utterances_touching(index: &MentionIndex, on_side: &[bool]) -> usize {
    index
        .utterances
        .iter()
        .filter(|u| u.mentions.iter().any(|m| on_side[m.vertex]))
        .count()
}

/// Derive the move list from a cut. In hybrid mode the moved side is the one
/// whose movement affects more training utterances (ties go to side 1);
/// vertices never mentioned in training stay structured, since moving them
/// changes no dialog. In unstructured mode every vertex moves.
pub fn plan_from_cut(
    cut: &CutResult,
    graph: &CooccurGraph,
    mode: RedistributionMode,
    mentions: &MentionIndex,
    entities: &[Entity],
) -> Result<RedistributionPlan> {
    if cut.side.len() != graph.vertex_count() {
        return Err(Error::CutSizeMismatch {
            cut: cut.side.len(),
            graph: graph.vertex_count(),
        });
    }
    let known: BTreeSet<&str> = entities.iter().map(|e| e.id.as_str()).collect();

    let mut plan = RedistributionPlan::empty(mode);
    let moving: Vec<usize> = match mode {
        RedistributionMode::None => Vec::new(),
        RedistributionMode::Unstructured => (0..graph.vertex_count()).collect(),
        RedistributionMode::Hybrid => {
            let side1: Vec<bool> = cut.side.iter().map(|&s| s == 1).collect();
            let side0: Vec<bool> = cut.side.iter().map(|&s| s == 0).collect();
            let touched1 = utterances_touching(mentions, &side1);
            let touched0 = utterances_touching(mentions, &side0);
            let moved_side: u8 = if touched1 >= touched0 { 1 } else { 0 };
            plan.metadata.moved_side = Some(moved_side);
            plan.metadata.affected_utterances_moved =
                if moved_side == 1 { touched1 } else { touched0 };
            plan.metadata.affected_utterances_kept =
                if moved_side == 1 { touched0 } else { touched1 };
            plan.metadata.policy =
                "move the side affecting more training utterances; ties to side 1; degree-0 vertices stay structured"
                    .to_string();
            (0..graph.vertex_count())
                .filter(|&v| cut.side[v] == moved_side && graph.degree(v) > 0)
                .collect()
        }
    };

    for v in moving {
        let vertex = &graph.vertices[v];
        if !known.contains(vertex.entity_id.as_str()) {
            return Err(Error::UnknownVertex {
                entity_id: vertex.entity_id.clone(),
                slot_type: vertex.slot_type.clone(),
                value: vertex.canonical.clone(),
            });
        }
        if vertex.slot_type == "name" {
            continue; // the name is kept in both sources, always
        }
        plan.moves.push(PlannedMove {
            entity_id: vertex.entity_id.clone(),
            slot_type: vertex.slot_type.clone(),
            value: vertex.canonical.clone(),
            template_id: None,
            rng_seed: None,
        });
    }
    plan.moves.sort_by(|a, b| {
        (&a.entity_id, &a.slot_type, &a.value).cmp(&(&b.entity_id, &b.slot_type, &b.value))
    });
    plan.moves.dedup();
    Ok(plan)
}

/// Apply a plan to a corpus, producing the variant corpus plus the resolved
/// plan (template choices recorded per move). Fails before any mutation when
/// a moved slot type has no template.
pub fn apply_plan(
    corpus: &Corpus,
    plan: &RedistributionPlan,
    templates: &TemplateSet,
    base_seed: u64,
) -> Result<(Corpus, RedistributionPlan)> {
    templates.validate()?;
    for mv in &plan.moves {
        if templates.get(&mv.slot_type).is_none() {
            return Err(Error::MissingTemplate(mv.slot_type.clone()));
        }
    }

    let mut entities: Vec<Entity> = corpus.entities.clone();
    let mut by_id: BTreeMap<String, usize> = BTreeMap::new();
    for (i, e) in entities.iter().enumerate() {
        by_id.insert(e.id.clone(), i);
    }

    let mut resolved = plan.clone();
    let mut move_records: Vec<MoveRecord> = Vec::new();
    for mv in resolved.moves.iter_mut() {
        let &idx = by_id
            .get(&mv.entity_id)
            .ok_or_else(|| Error::UnknownVertex {
                entity_id: mv.entity_id.clone(),
                slot_type: mv.slot_type.clone(),
                value: mv.value.clone(),
            })?;
        let entity = &mut entities[idx];
        let values = entity
            .structured_slots
            .get_mut(&mv.slot_type)
            .ok_or_else(|| Error::UnknownVertex {
                entity_id: mv.entity_id.clone(),
                slot_type: mv.slot_type.clone(),
                value: mv.value.clone(),
            })?;
        let pos = values
            .iter()
            .position(|v| v.canonical == mv.value)
            .ok_or_else(|| Error::UnknownVertex {
                entity_id: mv.entity_id.clone(),
                slot_type: mv.slot_type.clone(),
                value: mv.value.clone(),
            })?;
        values.remove(pos);
        if values.is_empty() {
            entity.structured_slots.remove(&mv.slot_type);
        }

        // Template choice: uniform over the slot type's templates, seeded by
        // the move identity.
        let move_seed = seed::derive(
            base_seed,
            &format!("move/{}/{}/{}", mv.entity_id, mv.slot_type, mv.value),
        );
        let pairs = templates.get(&mv.slot_type).unwrap();
        let choice = (move_seed % pairs.len() as u64) as usize;
        let template = &pairs[choice];
        let name = entity.canonical_name();
        let (question, answer) = template.render(&mv.slot_type, &name, &mv.value);
        if !canonicalize(&answer).contains(&mv.value) {
            return Err(Error::TemplateLostValue {
                slot_type: mv.slot_type.clone(),
                value: mv.value.clone(),
            });
        }
        entity.faqs.push(Faq { question, answer });

        let template_id = format!("{}#{}", mv.slot_type, choice);
        mv.template_id = Some(template_id.clone());
        mv.rng_seed = Some(move_seed);
        move_records.push(MoveRecord {
            entity_id: mv.entity_id.clone(),
            slot_type: mv.slot_type.clone(),
            value: mv.value.clone(),
            template_id,
            rng_seed: move_seed,
        });
    }

    let mut variant = corpus.clone();
    variant.entities = entities;
    variant.variant = plan.mode.as_str().to_string();
    variant.moves = move_records;
    Ok((variant, resolved))
}

/// A slot value present in the original corpus but recoverable from neither
/// the variant's structured slots nor its FAQ answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Loss {
    pub entity_id: String,
    pub slot_type: String,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreservationReport {
    pub losses: Vec<Loss>,
    pub checked_values: usize,
}

impl PreservationReport {
    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }
}

fn contains_boundary_aligned(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    for (start, m) in haystack.match_indices(needle) {
        let end = start + m.len();
        let before_ok = haystack[..start]
            .chars()
            .next_back()
            .map(|c| !c.is_alphanumeric())
            .unwrap_or(true);
        let after_ok = haystack[end..]
            .chars()
            .next()
            .map(|c| !c.is_alphanumeric())
            .unwrap_or(true);
        if before_ok && after_ok {
            return true;
        }
    }
    false
}

/// Check that no structured slot value of the original corpus was lost: each
/// must be present in the variant's structured slots or readable from an FAQ
/// answer of the same entity.
pub fn verify_information_preservation(original: &Corpus, variant: &Corpus) -> PreservationReport {
    let mut report = PreservationReport::default();
    for orig_entity in &original.entities {
        let var_entity = variant.entity(&orig_entity.id);
        let faq_answers: Vec<String> = var_entity
            .map(|e| e.faqs.iter().map(|f| canonicalize(&f.answer)).collect())
            .unwrap_or_default();
        for (slot_type, values) in &orig_entity.structured_slots {
            for value in values {
                report.checked_values += 1;
                let in_structured = var_entity
                    .and_then(|e| e.structured_slots.get(slot_type))
                    .map(|vs| vs.iter().any(|v| v.canonical == value.canonical))
                    .unwrap_or(false);
                let in_faq = faq_answers
                    .iter()
                    .any(|a| contains_boundary_aligned(a, &value.canonical));
                if !in_structured && !in_faq {
                    report.losses.push(Loss {
                        entity_id: orig_entity.id.clone(),
                        slot_type: slot_type.clone(),
                        value: value.canonical.clone(),
                    });
                }
            }
        }
    }
    report
}
