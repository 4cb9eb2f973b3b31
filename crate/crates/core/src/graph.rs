//! Undirected co-occurrence graph over structured slot-values. Vertices are
//! the non-name structured slot-values of all entities; an edge connects two
//! vertices whenever their values occur together in a training-split
//! utterance, weighted by the number of such utterances.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusSplit, Domain, Entity, KnowledgeSource, SlotValue};
use crate::error::{Error, Result};
use crate::mention::{find_mentions, MatcherConfig, MentionIndex, UtteranceMentions, ValueTable};

/// Which utterances contribute co-occurrence edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtteranceScope {
    #[default]
    Both,
    UserOnly,
    SystemOnly,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GraphConfig {
    pub matcher: MatcherConfig,
    pub scope: UtteranceScope,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub i: u32,
    pub j: u32,
    /// Co-occurrence count.
    pub weight: u32,
}

#[derive(Debug, Clone)]
pub struct CooccurGraph {
    pub vertices: Vec<SlotValue>,
    /// Sorted, i < j, at most one edge per pair.
    pub edges: Vec<Edge>,
    /// adjacency[v] = (neighbor, weight), sorted by neighbor.
    adjacency: Vec<Vec<(u32, u32)>>,
}

impl CooccurGraph {
    pub fn new(vertices: Vec<SlotValue>, mut edges: Vec<Edge>) -> CooccurGraph {
        for e in edges.iter_mut() {
            if e.i > e.j {
                std::mem::swap(&mut e.i, &mut e.j);
            }
        }
        edges.retain(|e| e.i != e.j);
        edges.sort_by_key(|e| (e.i, e.j));
        edges.dedup_by(|b, a| {
            if a.i == b.i && a.j == b.j {
                a.weight += b.weight;
                true
            } else {
                false
            }
        });
        let mut adjacency = vec![Vec::new(); vertices.len()];
        for e in &edges {
            adjacency[e.i as usize].push((e.j, e.weight));
            adjacency[e.j as usize].push((e.i, e.weight));
        }
        for list in adjacency.iter_mut() {
            list.sort();
        }
        CooccurGraph {
            vertices,
            edges,
            adjacency,
        }
    }

    /// A graph with placeholder vertex payloads, for imported edge lists and
    /// synthetic test instances.
    pub fn synthetic(n: usize, edges: Vec<Edge>) -> CooccurGraph {
        let vertices = (0..n)
            .map(|i| SlotValue {
                entity_id: format!("synthetic-{i}"),
                domain: Domain::Hotel,
                slot_type: "value".to_string(),
                value: format!("v{i}"),
                canonical: format!("v{i}"),
                source: KnowledgeSource::Structured,
            })
            .collect();
        CooccurGraph::new(vertices, edges)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn neighbors(&self, v: usize) -> &[(u32, u32)] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn total_weight(&self, weighted: bool) -> f64 {
        self.edges
            .iter()
            .map(|e| if weighted { e.weight as f64 } else { 1.0 })
            .sum()
    }
}

/// The vertex set: every structured slot-value of every entity except the
/// name slot, in (entity, slot, value) order.
pub fn movable_vertices(entities: &[Entity]) -> Vec<SlotValue> {
    let mut out = Vec::new();
    for e in entities {
        for sv in e.slot_values() {
            if sv.slot_type != "name" {
                out.push(sv);
            }
        }
    }
    out
}

fn scope_keeps(scope: UtteranceScope, is_user: bool) -> bool {
    match scope {
        UtteranceScope::Both => true,
        UtteranceScope::UserOnly => is_user,
        UtteranceScope::SystemOnly => !is_user,
    }
}

/// Build the graph from training-split utterances. Also returns the mention
/// index that witnesses every edge. Mention finding is parallel per
/// utterance; the merge is order-deterministic, so results do not depend on
/// the worker count.
pub fn build_graph(
    train: &CorpusSplit,
    entities: &[Entity],
    config: &GraphConfig,
) -> (CooccurGraph, MentionIndex) {
    let vertices = movable_vertices(entities);
    let table = ValueTable::build(&vertices, &config.matcher);

    let mut jobs: Vec<(String, usize, bool, &str)> = Vec::new();
    for dialog in &train.dialogs {
        for (t, turn) in dialog.turns.iter().enumerate() {
            if scope_keeps(config.scope, true) {
                jobs.push((dialog.id.clone(), t, true, turn.user.as_str()));
            }
            if scope_keeps(config.scope, false) {
                jobs.push((dialog.id.clone(), t, false, turn.system.as_str()));
            }
        }
    }

    let utterances: Vec<UtteranceMentions> = jobs
        .par_iter()
        .map(|(dialog_id, turn_index, is_user, text)| {
            let (canonical_text, mentions) = find_mentions(text, &table);
            UtteranceMentions {
                dialog_id: dialog_id.clone(),
                turn_index: *turn_index,
                is_user: *is_user,
                canonical_text,
                mentions,
            }
        })
        .collect();

    let mut counts: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for utt in &utterances {
        let mut matched: Vec<u32> = utt.mentions.iter().map(|m| m.vertex as u32).collect();
        matched.sort();
        matched.dedup();
        for a in 0..matched.len() {
            for b in (a + 1)..matched.len() {
                *counts.entry((matched[a], matched[b])).or_insert(0) += 1;
            }
        }
    }
    let edges = counts
        .into_iter()
        .map(|((i, j), weight)| Edge { i, j, weight })
        .collect();

    (
        CooccurGraph::new(vertices, edges),
        MentionIndex { utterances },
    )
}

/// Write the edge-list format: a vertex table then `i j w` lines.
pub fn write_edge_list(graph: &CooccurGraph, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "todshift-graph 1").unwrap();
    writeln!(out, "vertices {}", graph.vertices.len()).unwrap();
    for (i, v) in graph.vertices.iter().enumerate() {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            i, v.entity_id, v.domain, v.slot_type, v.canonical
        )
        .unwrap();
    }
    writeln!(out, "edges {}", graph.edges.len()).unwrap();
    for e in &graph.edges {
        writeln!(out, "{} {} {}", e.i, e.j, e.weight).unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read the edge-list format back.
pub fn read_edge_list(path: &Path) -> Result<CooccurGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: &str| Error::GraphFormat {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    if header != "todshift-graph 1" {
        return Err(bad("unrecognized header"));
    }
    let n: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("vertices "))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("missing vertex count"))?;
    let mut vertices = Vec::with_capacity(n);
    for _ in 0..n {
        let line = lines.next().ok_or_else(|| bad("truncated vertex table"))?;
        let mut parts = line.split('\t');
        let _idx = parts.next();
        let entity_id = parts.next().ok_or_else(|| bad("bad vertex line"))?;
        let domain = parts
            .next()
            .and_then(Domain::parse)
            .ok_or_else(|| bad("bad vertex domain"))?;
        let slot_type = parts.next().ok_or_else(|| bad("bad vertex line"))?;
        let value = parts.next().ok_or_else(|| bad("bad vertex line"))?;
        vertices.push(SlotValue {
            entity_id: entity_id.to_string(),
            domain,
            slot_type: slot_type.to_string(),
            value: value.to_string(),
            canonical: value.to_string(),
            source: KnowledgeSource::Structured,
        });
    }
    let m: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("edges "))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("missing edge count"))?;
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let line = lines.next().ok_or_else(|| bad("truncated edge list"))?;
        let nums: Vec<&str> = line.split_whitespace().collect();
        if nums.len() != 3 {
            return Err(bad("edge line must be `i j w`"));
        }
        let parse = |s: &str| s.parse::<u32>().map_err(|_| bad("non-integer edge field"));
        edges.push(Edge {
            i: parse(nums[0])?,
            j: parse(nums[1])?,
            weight: parse(nums[2])?,
        });
    }
    Ok(CooccurGraph::new(vertices, edges))
}
