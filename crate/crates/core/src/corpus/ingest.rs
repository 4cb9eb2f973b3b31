//! Corpus ingestion from the MultiWOZ 2.1 layout with DSTC9-style FAQ
//! documents. Expected files under the corpus directory:
//!
//! - `data.json` — all dialogs keyed by id, each `{"goal": {...}, "log":
//!   [{"text": ..., "metadata": {...}}, ...]}` with turns alternating
//!   user/system starting with the user; system turns carry the belief state
//!   under `metadata.<domain>.semi`.
//! - `valListFile.txt`, `testListFile.txt` — dialog ids of the validation and
//!   test splits, one per line; everything else is train.
//! - `hotel_db.json`, `restaurant_db.json`, `attraction_db.json` — arrays of
//!   entity records (slot → value; values may be strings, numbers, booleans
//!   or arrays of strings).
//! - `knowledge.json` — `{domain: {key: {"name": ..., "docs": {id: {"title":
//!   ..., "body": ...}}}}}`; FAQ docs are attached to entities by canonical
//!   name within the domain.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Corpus, CorpusSplit, Dialog, Domain, Entity, Faq, SplitName, Turn, ValueEntry};
use crate::error::{Error, Result};
use crate::normalize::{canonicalize, collapse_whitespace};

/// How to treat dialogs that touch a domain outside the supported three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiDomainPolicy {
    /// Keep the dialog, drop knowledge links of the foreign domains.
    #[default]
    KeepSupported,
    /// Drop any dialog touching a foreign domain.
    Strict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestConfig {
    pub multi_domain: MultiDomainPolicy,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            multi_domain: MultiDomainPolicy::KeepSupported,
        }
    }
}

/// A dialog dropped at ingestion, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuarantineEntry {
    pub dialog_id: String,
    pub reason: String,
}

fn read_json(path: &Path) -> Result<Value> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::parse(path, &e))
}

fn read_id_list(path: &Path) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty())
        .map(|l| l.to_string())
        .collect())
}

/// Turn a KB field into surface values. Unknown markers and nested objects
/// are skipped.
fn field_values(v: &Value) -> Vec<String> {
    match v {
        Value::String(s) => {
            let s = collapse_whitespace(s);
            if s.is_empty() || s == "?" {
                vec![]
            } else {
                vec![s]
            }
        }
        Value::Number(n) => vec![n.to_string()],
        Value::Bool(b) => vec![if *b { "yes" } else { "no" }.to_string()],
        Value::Array(items) => items.iter().flat_map(field_values).collect(),
        _ => vec![],
    }
}

fn ingest_db_file(path: &Path, domain: Domain, entities: &mut Vec<Entity>) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let value = read_json(path)?;
    let records = value.as_array().ok_or_else(|| {
        Error::Layout(format!(
            "{}: expected a JSON array of entity records",
            path.display()
        ))
    })?;
    for rec in records {
        let Some(obj) = rec.as_object() else { continue };
        let Some(name) = obj.get("name").and_then(|v| v.as_str()) else {
            continue;
        };
        let name = collapse_whitespace(name);
        if name.is_empty() {
            continue;
        }
        let mut slots: BTreeMap<String, Vec<ValueEntry>> = BTreeMap::new();
        slots.insert("name".to_string(), vec![ValueEntry::new(&name)]);
        for (key, raw) in obj {
            if key == "name" || key == "id" || key == "location" {
                continue;
            }
            let mut seen: BTreeSet<String> = BTreeSet::new();
            for surface in field_values(raw) {
                let entry = ValueEntry::new(&surface);
                if entry.canonical.is_empty() || !seen.insert(entry.canonical.clone()) {
                    continue;
                }
                slots.entry(key.clone()).or_default().push(entry);
            }
        }
        entities.push(Entity {
            id: String::new(), // assigned after dedup
            domain,
            name,
            structured_slots: slots,
            faqs: Vec::new(),
        });
    }
    Ok(())
}

fn attach_faqs(path: &Path, entities: &mut [Entity]) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let value = read_json(path)?;
    let Some(domains) = value.as_object() else {
        return Ok(());
    };
    // canonical name -> entity index, per domain
    let mut by_name: HashMap<(Domain, String), usize> = HashMap::new();
    for (i, e) in entities.iter().enumerate() {
        by_name.insert((e.domain, e.canonical_name()), i);
    }
    for (domain_name, entries) in domains {
        let Some(domain) = Domain::parse(domain_name) else {
            continue;
        };
        let Some(entries) = entries.as_object() else {
            continue;
        };
        for entry in entries.values() {
            let Some(name) = entry.get("name").and_then(|v| v.as_str()) else {
                continue;
            };
            let Some(&idx) = by_name.get(&(domain, canonicalize(name))) else {
                continue;
            };
            let mut docs: Vec<(String, Faq)> = Vec::new();
            match entry.get("docs") {
                Some(Value::Object(map)) => {
                    for (doc_id, doc) in map {
                        if let Some(faq) = doc_to_faq(doc) {
                            docs.push((doc_id.clone(), faq));
                        }
                    }
                    // numeric doc ids sort numerically, others lexically
                    docs.sort_by(|a, b| match (a.0.parse::<u64>(), b.0.parse::<u64>()) {
                        (Ok(x), Ok(y)) => x.cmp(&y),
                        _ => a.0.cmp(&b.0),
                    });
                }
                Some(Value::Array(items)) => {
                    for (i, doc) in items.iter().enumerate() {
                        if let Some(faq) = doc_to_faq(doc) {
                            docs.push((i.to_string(), faq));
                        }
                    }
                }
                _ => {}
            }
            entities[idx].faqs.extend(docs.into_iter().map(|(_, f)| f));
        }
    }
    Ok(())
}

fn doc_to_faq(doc: &Value) -> Option<Faq> {
    let title = doc.get("title").and_then(|v| v.as_str())?;
    let body = doc.get("body").and_then(|v| v.as_str())?;
    Some(Faq {
        question: collapse_whitespace(title),
        answer: collapse_whitespace(body),
    })
}

/// Belief state of one system turn: domain → slot → value, with unknown
/// markers skipped.
fn parse_belief(metadata: &Value) -> BTreeMap<Domain, BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let Some(obj) = metadata.as_object() else {
        return out;
    };
    for (domain_name, block) in obj {
        let Some(domain) = Domain::parse(domain_name) else {
            continue;
        };
        let Some(semi) = block.get("semi").and_then(|v| v.as_object()) else {
            continue;
        };
        let mut slots = BTreeMap::new();
        for (slot, v) in semi {
            let Some(raw) = v.as_str() else { continue };
            let canon = canonicalize(raw);
            if canon.is_empty()
                || canon == "not mentioned"
                || canon == "dontcare"
                || canon == "none"
            {
                continue;
            }
            slots.insert(slot.clone(), canon);
        }
        if !slots.is_empty() {
            out.insert(domain, slots);
        }
    }
    out
}

/// Domains a dialog touches, according to its goal block and belief states.
fn dialog_domains(goal: Option<&Value>, log: &[Value]) -> BTreeSet<String> {
    let mut names = BTreeSet::new();
    if let Some(goal) = goal.and_then(|g| g.as_object()) {
        for (name, block) in goal {
            if matches!(name.as_str(), "message" | "topic") {
                continue;
            }
            let non_empty = match block {
                Value::Object(o) => !o.is_empty(),
                Value::Null => false,
                Value::Array(a) => !a.is_empty(),
                _ => true,
            };
            if non_empty {
                names.insert(name.clone());
            }
        }
    }
    for entry in log {
        if let Some(meta) = entry.get("metadata").and_then(|m| m.as_object()) {
            for (name, block) in meta {
                let has_semi = block
                    .get("semi")
                    .and_then(|s| s.as_object())
                    .map(|s| {
                        s.values().any(|v| {
                            v.as_str()
                                .map(|s| {
                                    let c = canonicalize(s);
                                    !c.is_empty()
                                        && c != "not mentioned"
                                        && c != "dontcare"
                                        && c != "none"
                                })
                                .unwrap_or(false)
                        })
                    })
                    .unwrap_or(false);
                if has_semi {
                    names.insert(name.clone());
                }
            }
        }
    }
    names
}

/// Entities of `domain` whose slots satisfy every constraint, canonically.
/// A constraint on a slot the entity lacks fails the match.
pub fn matching_entities<'a>(
    entities: &'a [Entity],
    domain: Domain,
    constraints: &BTreeMap<String, String>,
) -> Vec<&'a Entity> {
    entities
        .iter()
        .filter(|e| e.domain == domain)
        .filter(|e| {
            constraints.iter().all(|(slot, want)| {
                e.structured_slots
                    .get(slot)
                    .map(|values| values.iter().any(|v| &v.canonical == want))
                    .unwrap_or(false)
            })
        })
        .collect()
}

/// Ingest a corpus directory into the in-memory model. Deterministic:
/// identical input bytes yield an identical model.
pub fn ingest(corpus_dir: &Path, config: &IngestConfig) -> Result<Corpus> {
    let dir = corpus_dir;
    let mut entities: Vec<Entity> = Vec::new();
    ingest_db_file(&dir.join("hotel_db.json"), Domain::Hotel, &mut entities)?;
    ingest_db_file(
        &dir.join("restaurant_db.json"),
        Domain::Restaurant,
        &mut entities,
    )?;
    ingest_db_file(
        &dir.join("attraction_db.json"),
        Domain::Attraction,
        &mut entities,
    )?;

    // Deduplicate by (domain, canonical name), keep first occurrence, then
    // assign ids in (domain, name) order.
    let mut seen: HashSet<(Domain, String)> = HashSet::new();
    entities.retain(|e| seen.insert((e.domain, e.canonical_name())));
    entities.sort_by(|a, b| (a.domain, a.canonical_name()).cmp(&(b.domain, b.canonical_name())));
    let mut per_domain: BTreeMap<Domain, usize> = BTreeMap::new();
    for e in entities.iter_mut() {
        let n = per_domain.entry(e.domain).or_insert(0);
        e.id = format!("{}-{}", e.domain, n);
        *n += 1;
    }

    attach_faqs(&dir.join("knowledge.json"), &mut entities)?;

    let data_path = dir.join("data.json");
    let data = read_json(&data_path)?;
    let dialogs_raw = data.as_object().ok_or_else(|| {
        Error::Layout(format!(
            "{}: expected an object keyed by dialog id",
            data_path.display()
        ))
    })?;

    let val_ids = read_id_list(&dir.join("valListFile.txt")).unwrap_or_default();
    let test_ids = read_id_list(&dir.join("testListFile.txt")).unwrap_or_default();

    let mut splits: BTreeMap<SplitName, Vec<Dialog>> = BTreeMap::new();
    for name in SplitName::ALL {
        splits.insert(name, Vec::new());
    }
    let mut quarantine: Vec<QuarantineEntry> = Vec::new();

    // Sorted dialog ids for a deterministic model regardless of file order.
    let mut ids: Vec<&String> = dialogs_raw.keys().collect();
    ids.sort();

    for id in ids {
        let raw = &dialogs_raw[id];
        let log = raw
            .get("log")
            .and_then(|l| l.as_array())
            .cloned()
            .unwrap_or_default();
        let domain_names = dialog_domains(raw.get("goal"), &log);
        let supported: BTreeSet<Domain> = domain_names
            .iter()
            .filter_map(|n| Domain::parse(n))
            .collect();
        if supported.is_empty() {
            quarantine.push(QuarantineEntry {
                dialog_id: id.clone(),
                reason: "no supported domain".to_string(),
            });
            continue;
        }
        let foreign: Vec<&String> = domain_names
            .iter()
            .filter(|n| Domain::parse(n).is_none())
            .collect();
        if config.multi_domain == MultiDomainPolicy::Strict && !foreign.is_empty() {
            quarantine.push(QuarantineEntry {
                dialog_id: id.clone(),
                reason: format!(
                    "foreign domain(s): {}",
                    foreign
                        .iter()
                        .map(|s| s.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            });
            continue;
        }

        // Pair up alternating user/system turns; a trailing unanswered user
        // utterance is dropped.
        let mut turns: Vec<Turn> = Vec::new();
        let mut unknown_reference: Option<String> = None;
        let mut k = 0;
        while k + 1 < log.len() {
            let user = log[k].get("text").and_then(|t| t.as_str()).unwrap_or("");
            let system = log[k + 1]
                .get("text")
                .and_then(|t| t.as_str())
                .unwrap_or("");
            let belief_all = log[k + 1]
                .get("metadata")
                .map(parse_belief)
                .unwrap_or_default();
            // Foreign-domain links are dropped here: only supported domains
            // survive into the stored belief.
            let belief: BTreeMap<Domain, BTreeMap<String, String>> = belief_all
                .into_iter()
                .filter(|(d, _)| supported.contains(d))
                .collect();

            let mut gold: BTreeSet<String> = BTreeSet::new();
            for (domain, constraints) in &belief {
                // An explicit name constraint naming an unknown entity is a
                // dangling reference; the dialog is quarantined.
                if let Some(want) = constraints.get("name") {
                    let known = entities
                        .iter()
                        .any(|e| e.domain == *domain && &e.canonical_name() == want);
                    if !known {
                        unknown_reference = Some(format!("unknown {} entity \"{}\"", domain, want));
                    }
                }
                for e in matching_entities(&entities, *domain, constraints) {
                    gold.insert(e.id.clone());
                }
            }
            turns.push(Turn {
                user: collapse_whitespace(user),
                system: collapse_whitespace(system),
                belief,
                gold_entities: gold.into_iter().collect(),
            });
            k += 2;
        }

        if let Some(reason) = unknown_reference {
            quarantine.push(QuarantineEntry {
                dialog_id: id.clone(),
                reason,
            });
            continue;
        }

        let goal_constraints = turns.last().map(|t| t.belief.clone()).unwrap_or_default();
        let mut gold_union: BTreeSet<String> = BTreeSet::new();
        for t in &turns {
            gold_union.extend(t.gold_entities.iter().cloned());
        }

        let dialog = Dialog {
            id: id.clone(),
            domains: supported,
            goal_constraints,
            turns,
            gold_entities: gold_union.into_iter().collect(),
        };
        let split = if test_ids.contains(id) {
            SplitName::Test
        } else if val_ids.contains(id) {
            SplitName::Validation
        } else {
            SplitName::Train
        };
        splits.get_mut(&split).unwrap().push(dialog);
    }

    Ok(Corpus {
        entities,
        train: CorpusSplit {
            name: SplitName::Train,
            dialogs: splits.remove(&SplitName::Train).unwrap(),
        },
        validation: CorpusSplit {
            name: SplitName::Validation,
            dialogs: splits.remove(&SplitName::Validation).unwrap(),
        },
        test: CorpusSplit {
            name: SplitName::Test,
            dialogs: splits.remove(&SplitName::Test).unwrap(),
        },
        variant: "none".to_string(),
        moves: Vec::new(),
        quarantine,
    })
}

/// Convenience used by tests and the empty-corpus path.
pub fn write_empty_layout(dir: &Path) -> Result<()> {
    let write = |name: &str, body: &str| -> Result<()> {
        fs::write(dir.join(name), body).map_err(|e| Error::io(dir.join(name), e))
    };
    write("data.json", "{}")?;
    write("valListFile.txt", "")?;
    write("testListFile.txt", "")?;
    write("hotel_db.json", "[]")?;
    write("restaurant_db.json", "[]")?;
    write("attraction_db.json", "[]")?;
    write("knowledge.json", "{}")?;
    Ok(())
}
