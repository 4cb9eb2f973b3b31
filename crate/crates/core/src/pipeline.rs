//! End-to-end pipeline: ingest → graph → maxcut → redistribute → stats, run
//! from one config and one seed. Every stage seed derives from the top-level
//! seed and the stage name, so a whole run is reproducible from a single
//! flag. Outputs are written under one directory with a run manifest and a
//! stage log; failed runs move their partial outputs to `failed/`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{
    corpus_stats, ingest, read_snapshot, write_snapshot, Corpus, IngestConfig, StatsReport,
};
use crate::error::{Error, Result};
use crate::graph::{build_graph, write_edge_list, CooccurGraph, GraphConfig, UtteranceScope};
use crate::maxcut::{cut_value, maxcut_pipeline, CutResult, SolverConfig};
use crate::redistribute::{
    apply_plan, plan_from_cut, verify_information_preservation, RedistributionMode,
    RedistributionPlan, TemplateSet,
};
use crate::seed;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub input_dir: PathBuf,
    /// Where outputs go. Not serialized: the manifest already lives in this
    /// directory, and recording it would make otherwise identical runs
    /// compare unequal.
    #[serde(default, skip_serializing)]
    pub output_dir: PathBuf,
    /// Templates file; the bundled defaults when absent.
    pub templates_file: Option<PathBuf>,
    pub variant: RedistributionMode,
    pub seed: u64,
    /// Worker cap. Execution detail only: it never changes outputs, so it is
    /// not recorded in the run manifest.
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    pub weighted_cut: bool,
    pub ingest: IngestConfig,
    pub graph: GraphConfig,
    pub solver: SolverConfig,
}

impl RunConfig {
    pub fn new(input_dir: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> RunConfig {
        RunConfig {
            input_dir: input_dir.into(),
            output_dir: output_dir.into(),
            templates_file: None,
            variant: RedistributionMode::Hybrid,
            seed: 0,
            threads: None,
            weighted_cut: false,
            ingest: IngestConfig::default(),
            graph: GraphConfig::default(),
            solver: SolverConfig::default(),
        }
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        seed::derive(self.seed, stage)
    }
}

/// Per-scope edge counts recorded because the contribution of user vs system
/// utterances is a reporting question, not a fixed answer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphDiagnostics {
    pub vertices: usize,
    pub edges_both: usize,
    pub edges_user_only: usize,
    pub edges_system_only: usize,
    pub total_weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub stage_seeds: Vec<(String, u64)>,
    pub graph: Option<GraphDiagnostics>,
    pub cut: Option<CutResult>,
    pub moves_applied: usize,
    pub preservation_losses: usize,
    pub stats_original: Option<StatsReport>,
    pub stats_variant: Option<StatsReport>,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub manifest: RunManifest,
    pub snapshot_dir: PathBuf,
    pub variant_dir: Option<PathBuf>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::parse(path, &e))
}

/// Load a cut result from disk.
pub fn read_cut(path: &Path) -> Result<CutResult> {
    read_json(path)
}

pub fn write_cut(path: &Path, cut: &CutResult) -> Result<()> {
    write_json(path, cut)
}

pub fn read_plan(path: &Path) -> Result<RedistributionPlan> {
    read_json(path)
}

struct StageLog {
    path: PathBuf,
    lines: Vec<String>,
}

impl StageLog {
    fn new(path: PathBuf) -> StageLog {
        StageLog {
            path,
            lines: Vec::new(),
        }
    }

    fn record(&mut self, stage: &str, message: &str) -> Result<()> {
        self.lines.push(format!("{stage}: {message}"));
        fs::write(&self.path, self.lines.join("\n") + "\n").map_err(|e| Error::io(&self.path, e))
    }
}

fn run_stages(config: &RunConfig, log: &mut StageLog) -> Result<PipelineOutcome> {
    let out = &config.output_dir;

    // ingest
    let corpus = ingest(&config.input_dir, &config.ingest)?;
    let snapshot_dir = out.join("snapshot");
    write_snapshot(&corpus, &snapshot_dir)?;
    log.record(
        "ingest",
        &format!(
            "{} entities, pairs {}/{}/{}, {} quarantined",
            corpus.entities.len(),
            corpus.train.pair_count(),
            corpus.validation.pair_count(),
            corpus.test.pair_count(),
            corpus.quarantine.len()
        ),
    )?;
    let stats_original = corpus_stats(&corpus);
    write_json(&out.join("stats_snapshot.json"), &stats_original)?;

    let mut manifest = RunManifest {
        config: config.clone(),
        stage_seeds: ["graph", "maxcut", "redistribute"]
            .iter()
            .map(|s| (s.to_string(), config.stage_seed(s)))
            .collect(),
        graph: None,
        cut: None,
        moves_applied: 0,
        preservation_losses: 0,
        stats_original: Some(stats_original.clone()),
        stats_variant: None,
    };

    if config.variant == RedistributionMode::None {
        write_json(&out.join("run_manifest.json"), &manifest)?;
        log.record("pipeline", "variant none requested; snapshot only")?;
        return Ok(PipelineOutcome {
            manifest,
            snapshot_dir,
            variant_dir: None,
        });
    }

    // graph
    let (graph, mentions) = build_graph(&corpus.train, &corpus.entities, &config.graph);
    write_edge_list(&graph, &out.join("graph.edges"))?;
    let diag = graph_diagnostics(&corpus, &config.graph, &graph);
    log.record(
        "graph",
        &format!(
            "{} vertices, {} edges (user-only {}, system-only {})",
            diag.vertices, diag.edges_both, diag.edges_user_only, diag.edges_system_only
        ),
    )?;
    manifest.graph = Some(diag);

    // maxcut
    let solver = SolverConfig {
        weighted: config.weighted_cut,
        seed: config.stage_seed("maxcut"),
        ..config.solver.clone()
    };
    let cut = maxcut_pipeline(&graph, &solver)?;
    let recount = cut_value(&graph, &cut.side, solver.weighted);
    if recount != cut.cut_value {
        return Err(Error::Stage {
            stage: "maxcut".into(),
            message: format!("stored cut {} but recount {}", cut.cut_value, recount),
        });
    }
    write_cut(&out.join("cut.json"), &cut)?;
    log.record(
        "maxcut",
        &format!(
            "cut {} of {} (relaxation {:.4}, {} iterations{})",
            cut.cut_value,
            graph.total_weight(solver.weighted),
            cut.sdp_objective,
            cut.iterations,
            if cut.used_fallback {
                ", greedy fallback"
            } else {
                ""
            }
        ),
    )?;
    manifest.cut = Some(cut.clone());

    // redistribute
    let templates = match &config.templates_file {
        Some(path) => TemplateSet::from_path(path)?,
        None => TemplateSet::builtin(),
    };
    let plan = plan_from_cut(&cut, &graph, config.variant, &mentions, &corpus.entities)?;
    let (variant, resolved_plan) = apply_plan(
        &corpus,
        &plan,
        &templates,
        config.stage_seed("redistribute"),
    )?;
    let variant_dir = out.join(config.variant.as_str());
    write_snapshot(&variant, &variant_dir)?;
    write_json(&out.join("redistribution_plan.json"), &resolved_plan)?;
    manifest.moves_applied = resolved_plan.moves.len();

    let report = verify_information_preservation(&corpus, &variant);
    manifest.preservation_losses = report.losses.len();
    write_json(&out.join("preservation_report.json"), &report)?;
    if !report.is_empty() {
        return Err(Error::Stage {
            stage: "redistribute".into(),
            message: format!("{} slot values lost", report.losses.len()),
        });
    }
    // the emitted variant must survive a snapshot round-trip
    let reread = read_snapshot(&variant_dir)?;
    if reread != variant {
        return Err(Error::Stage {
            stage: "redistribute".into(),
            message: "variant snapshot does not round-trip".into(),
        });
    }
    log.record(
        "redistribute",
        &format!(
            "{} moves applied, preservation clean",
            resolved_plan.moves.len()
        ),
    )?;

    // stats
    let stats_variant = corpus_stats(&variant);
    write_json(&out.join("stats_variant.json"), &stats_variant)?;
    fs::write(out.join("stats_variant.txt"), stats_variant.to_table())
        .map_err(|e| Error::io(out.join("stats_variant.txt"), e))?;
    manifest.stats_variant = Some(stats_variant);
    log.record("stats", "written")?;

    write_json(&out.join("run_manifest.json"), &manifest)?;
    Ok(PipelineOutcome {
        manifest,
        snapshot_dir,
        variant_dir: Some(variant_dir),
    })
}

fn graph_diagnostics(
    corpus: &Corpus,
    config: &GraphConfig,
    graph_both: &CooccurGraph,
) -> GraphDiagnostics {
    let count_for = |scope: UtteranceScope| {
        let mut cfg = config.clone();
        cfg.scope = scope;
        let (g, _) = build_graph(&corpus.train, &corpus.entities, &cfg);
        g.edges.len()
    };
    GraphDiagnostics {
        vertices: graph_both.vertex_count(),
        edges_both: graph_both.edges.len(),
        edges_user_only: count_for(UtteranceScope::UserOnly),
        edges_system_only: count_for(UtteranceScope::SystemOnly),
        total_weight: graph_both.total_weight(false),
    }
}

/// Run the full pipeline. On failure the partial outputs move to
/// `output_dir/failed/` and the error is returned.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineOutcome> {
    fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
    let mut log = StageLog::new(config.output_dir.join("stages.log"));

    let run = |config: &RunConfig, log: &mut StageLog| -> Result<PipelineOutcome> {
        match config.threads {
            Some(n) if n > 0 => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Stage {
                        stage: "setup".into(),
                        message: e.to_string(),
                    })?;
                pool.install(|| run_stages(config, log))
            }
            _ => run_stages(config, log),
        }
    };

    match run(config, &mut log) {
        Ok(outcome) => Ok(outcome),
        Err(e) => {
            let _ = log.record("pipeline", &format!("FAILED: {e}"));
            let _ = quarantine_outputs(&config.output_dir);
            Err(e)
        }
    }
}

fn quarantine_outputs(out: &Path) -> std::io::Result<()> {
    let failed = out.join("failed");
    fs::create_dir_all(&failed)?;
    for entry in fs::read_dir(out)? {
        let entry = entry?;
        if entry.file_name() == "failed" {
            continue;
        }
        let target = failed.join(entry.file_name());
        let _ = fs::rename(entry.path(), target);
    }
    Ok(())
}

/// Compare two directory trees byte for byte. Used by determinism checks.
pub fn trees_identical(a: &Path, b: &Path) -> std::io::Result<bool> {
    let mut entries_a = list_files(a)?;
    let mut entries_b = list_files(b)?;
    entries_a.sort();
    entries_b.sort();
    if entries_a != entries_b {
        return Ok(false);
    }
    for rel in &entries_a {
        if fs::read(a.join(rel))? != fs::read(b.join(rel))? {
            return Ok(false);
        }
    }
    Ok(true)
}

fn list_files(root: &Path) -> std::io::Result<Vec<PathBuf>> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let path = entry.path();
            if path.is_dir() {
                walk(&path, root, out)?;
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out)?;
    Ok(out)
}
