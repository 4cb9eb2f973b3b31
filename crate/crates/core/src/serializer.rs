//! Special-token linearization of entities and dialog contexts, and emission
//! of mixed retrieval/generation training examples.
//!
//! The textual encoding writes each special token as a literal like
//! `<struct>` and separates segments with single spaces; plain-text segments
//! are whitespace-collapsed and may not contain a special literal, which
//! makes the encoding lossless.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ContextRole, Corpus, CorpusSplit, Domain, Entity};
use crate::error::{Error, Result};
use crate::normalize::{canonicalize, collapse_whitespace};
use crate::seed;

/// The closed special-token vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpecialToken {
    Struct,
    Unstruct,
    Slot,
    Val,
    Doc,
    User,
    Resp,
    Entity,
    EntityRetrievalTask,
    ResponseTask,
    Relevant,
    Irrelevant,
}

impl SpecialToken {
    pub const ALL: [SpecialToken; 12] = [
        SpecialToken::Struct,
        SpecialToken::Unstruct,
        SpecialToken::Slot,
        SpecialToken::Val,
        SpecialToken::Doc,
        SpecialToken::User,
        SpecialToken::Resp,
        SpecialToken::Entity,
        SpecialToken::EntityRetrievalTask,
        SpecialToken::ResponseTask,
        SpecialToken::Relevant,
        SpecialToken::Irrelevant,
    ];

    pub fn literal(&self) -> &'static str {
        match self {
            SpecialToken::Struct => "<struct>",
            SpecialToken::Unstruct => "<unstruct>",
            SpecialToken::Slot => "<slot>",
            SpecialToken::Val => "<val>",
            SpecialToken::Doc => "<doc>",
            SpecialToken::User => "<u>",
            SpecialToken::Resp => "<r>",
            SpecialToken::Entity => "<entity>",
            SpecialToken::EntityRetrievalTask => "<entity_retrieval_task>",
            SpecialToken::ResponseTask => "<response_task>",
            SpecialToken::Relevant => "<relevant>",
            SpecialToken::Irrelevant => "<irrelevant>",
        }
    }

    pub fn from_literal(s: &str) -> Option<SpecialToken> {
        SpecialToken::ALL.into_iter().find(|t| t.literal() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    Special(SpecialToken),
    Text(String),
}

/// An ordered sequence of special tokens and plain text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    segments: Vec<Segment>,
}

impl TokenStream {
    pub fn new() -> TokenStream {
        TokenStream::default()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn push_special(&mut self, token: SpecialToken) {
        self.segments.push(Segment::Special(token));
    }

    /// Append plain text. Whitespace is collapsed; empty text is dropped; a
    /// special literal inside the text is rejected so the encoding stays
    /// lossless.
    pub fn push_text(&mut self, text: &str) -> Result<()> {
        let text = collapse_whitespace(text);
        if text.is_empty() {
            return Ok(());
        }
        for word in text.split(' ') {
            if SpecialToken::from_literal(word).is_some() {
                return Err(Error::TokenStream(format!(
                    "plain text contains the special literal {word}"
                )));
            }
        }
        // merge consecutive text segments so parse(encode(s)) == s
        if let Some(Segment::Text(prev)) = self.segments.last_mut() {
            prev.push(' ');
            prev.push_str(&text);
        } else {
            self.segments.push(Segment::Text(text));
        }
        Ok(())
    }

    /// The documented textual encoding: segments joined by single spaces.
    pub fn encode(&self) -> String {
        let mut out = String::new();
        for (i, seg) in self.segments.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            match seg {
                Segment::Special(t) => out.push_str(t.literal()),
                Segment::Text(s) => out.push_str(s),
            }
        }
        out
    }

    /// Parse the textual encoding back into a stream.
    pub fn parse(encoded: &str) -> Result<TokenStream> {
        let mut stream = TokenStream::new();
        for word in encoded.split_whitespace() {
            if let Some(token) = SpecialToken::from_literal(word) {
                stream.push_special(token);
            } else {
                stream.push_text(word)?;
            }
        }
        Ok(stream)
    }

    /// Plain text with the special tokens removed (for bag-of-words
    /// consumers such as the retrieval index).
    pub fn strip_special(&self) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            if let Segment::Text(s) = seg {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(s);
            }
        }
        out
    }

    /// Whitespace-token count of the encoding.
    pub fn token_count(&self) -> usize {
        self.segments
            .iter()
            .map(|seg| match seg {
                Segment::Special(_) => 1,
                Segment::Text(s) => s.split(' ').count(),
            })
            .sum()
    }
}

/// Linearize an entity: `<struct>` then `<slot> type <val> value` per slot
/// value (name first, remaining slot types in lexicographic order, values in
/// stored order), then `<unstruct>` and one `<doc>` per FAQ. Slot values are
/// rendered canonically; FAQ text keeps its surface form.
pub fn serialize_entity(entity: &Entity) -> TokenStream {
    let mut stream = TokenStream::new();
    stream.push_special(SpecialToken::Struct);
    let mut slots: Vec<&String> = entity.structured_slots.keys().collect();
    slots.sort_by_key(|s| (s.as_str() != "name", s.as_str()));
    for slot in slots {
        for value in &entity.structured_slots[slot] {
            stream.push_special(SpecialToken::Slot);
            stream.push_text(slot).expect("slot type is plain text");
            stream.push_special(SpecialToken::Val);
            stream
                .push_text(&value.canonical)
                .expect("canonical value is plain text");
        }
    }
    stream.push_special(SpecialToken::Unstruct);
    for faq in &entity.faqs {
        stream.push_special(SpecialToken::Doc);
        let _ = stream.push_text(&faq.question);
        let _ = stream.push_text(&faq.answer);
    }
    stream
}

/// Context serialization options. The budget counts whitespace tokens of the
/// whole encoded input; when over budget the oldest turns are dropped first,
/// pairwise, and the entity block is never truncated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextConfig {
    pub token_budget: usize,
}

impl Default for ContextConfig {
    fn default() -> Self {
        ContextConfig { token_budget: 512 }
    }
}

fn build_task_input(
    task_token: SpecialToken,
    context: &[(ContextRole, &str)],
    entity: &Entity,
    config: &ContextConfig,
) -> TokenStream {
    let entity_block = serialize_entity(entity);
    // fixed cost: task token + <entity> + entity block
    let fixed = 2 + entity_block.token_count();

    // turn texts, canonicalized, oldest first
    let turns: Vec<(SpecialToken, String)> = context
        .iter()
        .map(|(role, text)| {
            let token = match role {
                ContextRole::User => SpecialToken::User,
                ContextRole::System => SpecialToken::Resp,
            };
            (token, canonicalize(text))
        })
        .collect();

    // keep a suffix of the turns within the budget; the final user turn is
    // always kept
    let cost = |t: &(SpecialToken, String)| 1 + t.1.split(' ').filter(|w| !w.is_empty()).count();
    let mut start = 0;
    if !turns.is_empty() {
        let mut total: usize = fixed + turns.iter().map(cost).sum::<usize>();
        while start + 1 < turns.len() && total > config.token_budget {
            total -= cost(&turns[start]);
            start += 1;
        }
    }

    let mut stream = TokenStream::new();
    stream.push_special(task_token);
    for (token, text) in &turns[start..] {
        stream.push_special(*token);
        let _ = stream.push_text(text);
    }
    stream.push_special(SpecialToken::Entity);
    for seg in entity_block.segments {
        match seg {
            Segment::Special(t) => stream.push_special(t),
            Segment::Text(s) => stream.push_text(&s).expect("already validated"),
        }
    }
    stream
}

/// `<entity_retrieval_task> <u> u_1 <r> r_1 ... <u> u_n <entity> [e]`.
pub fn build_retrieval_input(
    context: &[(ContextRole, &str)],
    entity: &Entity,
    config: &ContextConfig,
) -> TokenStream {
    build_task_input(SpecialToken::EntityRetrievalTask, context, entity, config)
}

/// `<response_task> <u> u_1 <r> r_1 ... <u> u_n <entity> [e]`.
pub fn build_generation_input(
    context: &[(ContextRole, &str)],
    entity: &Entity,
    config: &ContextConfig,
) -> TokenStream {
    build_task_input(SpecialToken::ResponseTask, context, entity, config)
}

/// Batch composition. `alpha` is the fraction of retrieval examples per
/// batch; positives + negatives must equal alpha·batch_size and the rest of
/// the batch is generation examples.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixConfig {
    pub alpha: f64,
    pub batch_size: usize,
    pub positives_per_batch: usize,
    pub negatives_per_batch: usize,
}

impl Default for MixConfig {
    fn default() -> Self {
        MixConfig {
            alpha: 0.5,
            batch_size: 8,
            positives_per_batch: 2,
            negatives_per_batch: 2,
        }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::MixConfig(format!(
                "alpha {} outside [0,1]",
                self.alpha
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::MixConfig("batch_size must be positive".into()));
        }
        let retrieval = self.positives_per_batch + self.negatives_per_batch;
        let expected = self.alpha * self.batch_size as f64;
        if (retrieval as f64 - expected).abs() > 1e-9 {
            return Err(Error::MixConfig(format!(
                "positives ({}) + negatives ({}) must equal alpha*batch_size = {}",
                self.positives_per_batch, self.negatives_per_batch, expected
            )));
        }
        Ok(())
    }

    pub fn generation_per_batch(&self) -> usize {
        self.batch_size - self.positives_per_batch - self.negatives_per_batch
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    EntityRetrieval,
    ResponseGeneration,
}

/// One emitted example, serializable as a JSONL record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub id: String,
    pub task: TaskKind,
    pub input: String,
    pub target: String,
    pub dialog_id: String,
    pub turn_index: usize,
    pub entity_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub index: usize,
    pub dialog_id: String,
    pub turn_index: usize,
    pub example_ids: Vec<String>,
}

/// The batch manifest written next to the JSONL file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmitManifest {
    pub batches: Vec<Batch>,
    /// Contexts without a gold entity, skipped from emission.
    pub skipped_contexts: Vec<String>,
    pub mix: MixConfig,
    pub seed: u64,
    pub context: ContextConfig,
    /// Sampling policy notes recorded for provenance.
    pub policy: String,
}

fn sample_without_replacement<'a, T>(
    pool: &'a [T],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<&'a T> {
    if pool.is_empty() || count == 0 {
        return Vec::new();
    }
    if pool.len() >= count {
        let mut idx: Vec<usize> = (0..pool.len()).collect();
        idx.shuffle(rng);
        idx.truncate(count);
        idx.into_iter().map(|i| &pool[i]).collect()
    } else {
        (0..count)
            .map(|_| &pool[rng.random_range(0..pool.len())])
            .collect()
    }
}

/// Emit one batch per context of the split: `positives_per_batch` gold
/// entities labelled `<relevant>`, `negatives_per_batch` non-matching
/// entities labelled `<irrelevant>` (same-domain when available), and
/// generation examples pairing the context with a gold entity and targeting
/// the gold response. Contexts without a gold entity are skipped and listed
/// in the manifest. Fully deterministic for a fixed seed.
pub fn emit_training_set(
    corpus: &Corpus,
    split: &CorpusSplit,
    mix: &MixConfig,
    context_config: &ContextConfig,
    base_seed: u64,
) -> Result<(Vec<TrainingExample>, EmitManifest)> {
    mix.validate()?;
    let mut examples = Vec::new();
    let mut batches = Vec::new();
    let mut skipped = Vec::new();

    let by_id: BTreeMap<&str, &Entity> =
        corpus.entities.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut by_domain: BTreeMap<Domain, Vec<&Entity>> = BTreeMap::new();
    for e in &corpus.entities {
        by_domain.entry(e.domain).or_default().push(e);
    }

    for dialog in &split.dialogs {
        for (t, turn) in dialog.turns.iter().enumerate() {
            let context_id = format!("{}:{}", dialog.id, t);
            let gold: Vec<&Entity> = turn
                .gold_entities
                .iter()
                .filter_map(|id| by_id.get(id.as_str()).copied())
                .collect();
            if gold.is_empty() {
                skipped.push(context_id);
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(
                base_seed,
                &format!("emit/{}/{}", dialog.id, t),
            ));
            let context = dialog.context(t);

            // negatives from the active domains when available, else any
            // non-gold entity
            let gold_ids: Vec<&str> = gold.iter().map(|e| e.id.as_str()).collect();
            let active_domains: Vec<Domain> = turn.belief.keys().copied().collect();
            let mut negative_pool: Vec<&Entity> = Vec::new();
            for d in &active_domains {
                if let Some(list) = by_domain.get(d) {
                    negative_pool.extend(
                        list.iter()
                            .filter(|e| !gold_ids.contains(&e.id.as_str()))
                            .copied(),
                    );
                }
            }
            if negative_pool.is_empty() {
                negative_pool = corpus
                    .entities
                    .iter()
                    .filter(|e| !gold_ids.contains(&e.id.as_str()))
                    .collect();
            }

            let positives = sample_without_replacement(&gold, mix.positives_per_batch, &mut rng);
            let negatives =
                sample_without_replacement(&negative_pool, mix.negatives_per_batch, &mut rng);

            let mut batch = Batch {
                index: batches.len(),
                dialog_id: dialog.id.clone(),
                turn_index: t,
                example_ids: Vec::new(),
            };
            let push = |examples: &mut Vec<TrainingExample>,
                        batch: &mut Batch,
                        kind: &str,
                        n: usize,
                        task: TaskKind,
                        input: TokenStream,
                        target: String,
                        entity_id: &str| {
                let id = format!("{}:{}:{}:{}", dialog.id, t, kind, n);
                batch.example_ids.push(id.clone());
                examples.push(TrainingExample {
                    id,
                    task,
                    input: input.encode(),
                    target,
                    dialog_id: dialog.id.clone(),
                    turn_index: t,
                    entity_id: entity_id.to_string(),
                });
            };

            for (n, e) in positives.iter().enumerate() {
                let input = build_retrieval_input(&context, e, context_config);
                push(
                    &mut examples,
                    &mut batch,
                    "pos",
                    n,
                    TaskKind::EntityRetrieval,
                    input,
                    SpecialToken::Relevant.literal().to_string(),
                    &e.id,
                );
            }
            for (n, e) in negatives.iter().enumerate() {
                let input = build_retrieval_input(&context, e, context_config);
                push(
                    &mut examples,
                    &mut batch,
                    "neg",
                    n,
                    TaskKind::EntityRetrieval,
                    input,
                    SpecialToken::Irrelevant.literal().to_string(),
                    &e.id,
                );
            }
            for n in 0..mix.generation_per_batch() {
                let e = gold[rng.random_range(0..gold.len())];
                let input = build_generation_input(&context, e, context_config);
                push(
                    &mut examples,
                    &mut batch,
                    "gen",
                    n,
                    TaskKind::ResponseGeneration,
                    input,
                    collapse_whitespace(&turn.system),
                    &e.id,
                );
            }
            batches.push(batch);
        }
    }

    let manifest = EmitManifest {
        batches,
        skipped_contexts: skipped,
        mix: mix.clone(),
        seed: base_seed,
        context: context_config.clone(),
        policy: "positives/negatives sampled uniformly without replacement when the pool allows; \
                 negatives drawn from the active domains when available"
            .to_string(),
    };
    Ok((examples, manifest))
}

/// JSONL encoding of the examples, one record per line.
pub fn examples_to_jsonl(examples: &[TrainingExample]) -> String {
    let mut out = String::new();
    for e in examples {
        writeln!(out, "{}", serde_json::to_string(e).expect("serializable")).unwrap();
    }
    out
}

/// Recover (task, turn texts, entity id block present) from an encoded
/// input; used by round-trip checks.
pub fn parse_task_input(encoded: &str) -> Result<(TaskKind, Vec<String>, TokenStream)> {
    let stream = TokenStream::parse(encoded)?;
    let mut segments = stream.segments().iter();
    let task = match segments.next() {
        Some(Segment::Special(SpecialToken::EntityRetrievalTask)) => TaskKind::EntityRetrieval,
        Some(Segment::Special(SpecialToken::ResponseTask)) => TaskKind::ResponseGeneration,
        other => {
            return Err(Error::TokenStream(format!(
                "input does not begin with a task token: {other:?}"
            )))
        }
    };
    let mut turns = Vec::new();
    let mut entity_stream = TokenStream::new();
    let mut in_entity = false;
    let mut pending_turn = false;
    for seg in stream.segments() {
        match seg {
            Segment::Special(SpecialToken::Entity) if !in_entity => {
                in_entity = true;
            }
            Segment::Special(SpecialToken::User) | Segment::Special(SpecialToken::Resp)
                if !in_entity =>
            {
                pending_turn = true;
            }
            Segment::Text(s) if !in_entity && pending_turn => {
                turns.push(s.clone());
                pending_turn = false;
            }
            Segment::Special(t) if in_entity => entity_stream.push_special(*t),
            Segment::Text(s) if in_entity => entity_stream.push_text(s)?,
            _ => {}
        }
    }
    Ok((task, turns, entity_stream))
}
