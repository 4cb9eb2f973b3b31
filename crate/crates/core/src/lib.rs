//! Corpus engineering toolkit for task-oriented dialog with hybrid knowledge
//! sources (a structured KB plus per-entity FAQ documents).
//!
//! The toolkit ingests a MultiWOZ-style dialog corpus, builds a co-occurrence
//! graph over structured slot-values mentioned in training utterances, solves
//! max-cut on that graph with a low-rank relaxation, and moves one partition
//! of slot-values into template-generated FAQ pairs. Around that core it
//! provides entity/context serialization into special-token streams, a BM25
//! entity-retrieval baseline with success@k, and response evaluation metrics
//! (corpus BLEU, slot-value precision/recall/F1).

pub mod corpus;
pub mod error;
pub mod graph;
pub mod maxcut;
pub mod mention;
pub mod metrics;
pub mod normalize;
pub mod pipeline;
pub mod redistribute;
pub mod retrieval;
pub mod seed;
pub mod serializer;

pub use corpus::{Corpus, CorpusSplit, Dialog, Domain, Entity, SlotValue, SplitName, Turn};
pub use error::{Error, Result};
pub use graph::{CooccurGraph, Edge, UtteranceScope};
pub use maxcut::{CutResult, SolverConfig};
pub use mention::{MatcherConfig, Mention, MentionIndex};
pub use redistribute::{RedistributionMode, RedistributionPlan, TemplatePair, TemplateSet};
pub use serializer::{MixConfig, SpecialToken, TokenStream};
