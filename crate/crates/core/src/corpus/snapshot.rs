//! Canonical corpus snapshot: one JSON file per split plus `entities.json`
//! and a `manifest.json` with provenance (variant, moves, quarantine,
//! counts). Every pipeline stage reads and writes this layout, so all
//! downstream tools are variant-agnostic. Writing is deterministic: the same
//! in-memory corpus always produces identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusSplit, Dialog, Entity, MoveRecord, QuarantineEntry, SplitName};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub layout_version: u32,
    pub variant: String,
    pub entity_count: usize,
    /// split → context-response pair count
    pub pair_counts: BTreeMap<String, usize>,
    pub moves: Vec<MoveRecord>,
    pub quarantine: Vec<QuarantineEntry>,
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    name: SplitName,
    dialogs: Vec<Dialog>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::parse(path, &e))
}

/// Write a corpus snapshot directory, creating it if needed.
pub fn write_snapshot(corpus: &Corpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("entities.json"), &corpus.entities)?;
    for name in SplitName::ALL {
        let split = corpus.split(name);
        write_json(
            &dir.join(format!("{name}.json")),
            &SplitFile {
                name,
                dialogs: split.dialogs.clone(),
            },
        )?;
    }
    let manifest = SnapshotManifest {
        layout_version: 1,
        variant: corpus.variant.clone(),
        entity_count: corpus.entities.len(),
        pair_counts: SplitName::ALL
            .iter()
            .map(|n| (n.to_string(), corpus.split(*n).pair_count()))
            .collect(),
        moves: corpus.moves.clone(),
        quarantine: corpus.quarantine.clone(),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

/// Read a snapshot directory back into the in-memory model. Round-trips
/// [`write_snapshot`] exactly.
pub fn read_snapshot(dir: &Path) -> Result<Corpus> {
    let entities: Vec<Entity> = read_json_file(&dir.join("entities.json"))?;
    let mut splits: BTreeMap<SplitName, CorpusSplit> = BTreeMap::new();
    for name in SplitName::ALL {
        let file: SplitFile = read_json_file(&dir.join(format!("{name}.json")))?;
        if file.name != name {
            return Err(Error::Layout(format!(
                "{}: split file claims to be {}",
                dir.join(format!("{name}.json")).display(),
                file.name
            )));
        }
        splits.insert(
            name,
            CorpusSplit {
                name,
                dialogs: file.dialogs,
            },
        );
    }
    let manifest: SnapshotManifest = read_json_file(&dir.join("manifest.json"))?;
    Ok(Corpus {
        entities,
        train: splits.remove(&SplitName::Train).unwrap(),
        validation: splits.remove(&SplitName::Validation).unwrap(),
        test: splits.remove(&SplitName::Test).unwrap(),
        variant: manifest.variant,
        moves: manifest.moves,
        quarantine: manifest.quarantine,
    })
}
