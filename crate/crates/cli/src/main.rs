//! `todshift` — corpus engineering for task-oriented dialog with hybrid
//! knowledge sources. Subcommands mirror the pipeline stages; `pipeline`
//! runs them end to end from one seed.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use todshift_core::corpus::{corpus_stats, ingest, read_snapshot, write_snapshot, IngestConfig};
use todshift_core::graph::{
    build_graph, read_edge_list, write_edge_list, GraphConfig, UtteranceScope,
};
use todshift_core::maxcut::{maxcut_pipeline, SolverConfig};
use todshift_core::metrics::{evaluate_run, MetricsConfig};
use todshift_core::pipeline::{read_cut, run_pipeline, write_cut, RunConfig};
use todshift_core::redistribute::{
    apply_plan, plan_from_cut, verify_information_preservation, RedistributionMode, TemplateSet,
};
use todshift_core::retrieval::{
    context_query, index_entities, rankings_to_tsv, success_at_k, QueryMode, Ranking,
};
use todshift_core::serializer::{
    emit_training_set, examples_to_jsonl, serialize_entity, ContextConfig, MixConfig,
};

#[derive(Parser)]
#[command(name = "todshift", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Top-level seed; every stage derives its own seed from it.
    #[arg(long, global = true, env = "TODSHIFT_SEED", default_value_t = 0)]
    seed: u64,

    /// Worker thread cap (0 = library default).
    #[arg(long, global = true, env = "TODSHIFT_THREADS", default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct SnapshotArg {
    /// Corpus snapshot directory.
    #[arg(long)]
    snapshot: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Read a raw corpus directory and write a canonical snapshot.
    Ingest {
        /// Raw corpus directory (data.json, *_db.json, knowledge.json, ...).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Drop dialogs touching unsupported domains entirely.
        #[arg(long)]
        strict_domains: bool,
    },
    /// Report corpus statistics as a table (and optionally JSON).
    Stats {
        #[command(flatten)]
        snapshot: SnapshotArg,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the slot-value co-occurrence graph from the training split.
    Graph {
        #[command(flatten)]
        snapshot: SnapshotArg,
        #[arg(long)]
        out: PathBuf,
        /// Which utterances contribute edges.
        #[arg(long, default_value = "both", value_parser = parse_scope)]
        scope: UtteranceScope,
    },
    /// Solve max-cut on an exported graph.
    Maxcut {
        /// Edge-list file from `graph`.
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use co-occurrence counts as edge weights.
        #[arg(long, env = "TODSHIFT_WEIGHTED_CUT")]
        weighted_cut: bool,
        /// Rounding trials.
        #[arg(long, default_value_t = 64)]
        trials: usize,
        /// Factor rank (default: ceil(sqrt(2n)) capped at 32).
        #[arg(long)]
        rank: Option<usize>,
    },
    /// Apply a cut (or move everything) and emit a corpus variant.
    Redistribute {
        #[command(flatten)]
        snapshot: SnapshotArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "hybrid", value_parser = parse_variant, env = "TODSHIFT_VARIANT")]
        variant: RedistributionMode,
        /// Cut file from `maxcut`; required for the hybrid variant.
        #[arg(long)]
        cut: Option<PathBuf>,
        /// Graph file the cut refers to; required with --cut.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Templates JSON (bundled defaults when omitted).
        #[arg(long)]
        templates: Option<PathBuf>,
    },
    /// Print the token-stream serialization of entities.
    Serialize {
        #[command(flatten)]
        snapshot: SnapshotArg,
        /// Entity id; all entities when omitted.
        #[arg(long)]
        entity: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the mixed retrieval/generation training set as JSONL.
    EmitTrain {
        #[command(flatten)]
        snapshot: SnapshotArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 8)]
        batch_size: usize,
        #[arg(long, default_value_t = 2)]
        positives: usize,
        #[arg(long, default_value_t = 2)]
        negatives: usize,
    },
    /// Rank entities per test context with BM25 and report success@k.
    Retrieve {
        #[command(flatten)]
        snapshot: SnapshotArg,
        /// Write rankings as TSV here.
        #[arg(long)]
        out: PathBuf,
        /// Query from the full context or the last user turn.
        #[arg(long, default_value = "full_context", value_parser = parse_query_mode)]
        query: QueryMode,
    },
    /// Score a prediction file against the test split.
    Evaluate {
        #[command(flatten)]
        snapshot: SnapshotArg,
        /// JSONL predictions: {"context_id", "hypothesis"} per line.
        #[arg(long)]
        predictions: PathBuf,
        /// Optional rankings TSV from `retrieve` for success@k columns.
        #[arg(long)]
        rankings: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run ingest, graph, maxcut, redistribute and stats end to end.
    Pipeline {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "hybrid", value_parser = parse_variant, env = "TODSHIFT_VARIANT")]
        variant: RedistributionMode,
        #[arg(long, env = "TODSHIFT_WEIGHTED_CUT")]
        weighted_cut: bool,
        #[arg(long)]
        templates: Option<PathBuf>,
        /// JSON run config; explicit flags override its fields.
        #[arg(long, env = "TODSHIFT_CONFIG")]
        config: Option<PathBuf>,
    },
}

fn parse_variant(s: &str) -> Result<RedistributionMode, String> {
    RedistributionMode::parse(s).ok_or_else(|| format!("unknown variant {s:?}"))
}

fn parse_scope(s: &str) -> Result<UtteranceScope, String> {
    match s {
        "both" => Ok(UtteranceScope::Both),
        "user" => Ok(UtteranceScope::UserOnly),
        "system" => Ok(UtteranceScope::SystemOnly),
        _ => Err(format!("unknown scope {s:?} (both|user|system)")),
    }
}

fn parse_query_mode(s: &str) -> Result<QueryMode, String> {
    match s {
        "full_context" => Ok(QueryMode::FullContext),
        "last_user_turn" => Ok(QueryMode::LastUserTurn),
        _ => Err(format!("unknown query mode {s:?}")),
    }
}

fn write_json_pretty<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .ok();
    }
    match cli.command {
        Command::Ingest {
            input,
            out,
            strict_domains,
        } => {
            let config = IngestConfig {
                multi_domain: if strict_domains {
                    todshift_core::corpus::MultiDomainPolicy::Strict
                } else {
                    todshift_core::corpus::MultiDomainPolicy::KeepSupported
                },
            };
            let corpus = ingest(&input, &config)?;
            write_snapshot(&corpus, &out)?;
            for q in &corpus.quarantine {
                eprintln!("quarantined {}: {}", q.dialog_id, q.reason);
            }
            println!(
                "ingested {} entities; context-response pairs {}/{}/{}",
                corpus.entities.len(),
                corpus.train.pair_count(),
                corpus.validation.pair_count(),
                corpus.test.pair_count()
            );
        }
        Command::Stats { snapshot, out } => {
            let corpus = read_snapshot(&snapshot.snapshot)?;
            let report = corpus_stats(&corpus);
            print!("{}", report.to_table());
            if let Some(path) = out {
                write_json_pretty(&path, &report)?;
            }
        }
        Command::Graph {
            snapshot,
            out,
            scope,
        } => {
            let corpus = read_snapshot(&snapshot.snapshot)?;
            let config = GraphConfig {
                scope,
                ..GraphConfig::default()
            };
            let (graph, _) = build_graph(&corpus.train, &corpus.entities, &config);
            write_edge_list(&graph, &out)?;
            println!(
                "{} vertices, {} edges, total weight {}",
                graph.vertex_count(),
                graph.edges.len(),
                graph.total_weight(true)
            );
        }
        Command::Maxcut {
            graph,
            out,
            weighted_cut,
            trials,
            rank,
        } => {
            let graph = read_edge_list(&graph)?;
            let config = SolverConfig {
                rank,
                rounding_trials: trials,
                weighted: weighted_cut,
                seed: todshift_core::seed::derive(cli.seed, "maxcut"),
                ..SolverConfig::default()
            };
            let cut = maxcut_pipeline(&graph, &config)?;
            write_cut(&out, &cut)?;
            println!(
                "cut {} of {} (relaxation {:.4})",
                cut.cut_value,
                graph.total_weight(weighted_cut),
                cut.sdp_objective
            );
        }
        Command::Redistribute {
            snapshot,
            out,
            variant,
            cut,
            graph,
            templates,
        } => {
            let corpus = read_snapshot(&snapshot.snapshot)?;
            let templates = match templates {
                Some(path) => TemplateSet::from_path(&path)?,
                None => TemplateSet::builtin(),
            };
            let plan = match variant {
                RedistributionMode::Hybrid => {
                    let (Some(cut_path), Some(graph_path)) = (cut, graph) else {
                        bail!("--variant hybrid requires --cut and --graph");
                    };
                    let cut = read_cut(&cut_path)?;
                    let graph = read_edge_list(&graph_path)?;
                    // rebuild mentions for the affected-utterance policy
                    let (check, mentions) =
                        build_graph(&corpus.train, &corpus.entities, &GraphConfig::default());
                    if check.vertex_count() != graph.vertex_count() {
                        bail!(
                            "graph file has {} vertices but the snapshot yields {}",
                            graph.vertex_count(),
                            check.vertex_count()
                        );
                    }
                    plan_from_cut(&cut, &graph, variant, &mentions, &corpus.entities)?
                }
                _ => {
                    let (graph, mentions) =
                        build_graph(&corpus.train, &corpus.entities, &GraphConfig::default());
                    let empty_cut = todshift_core::maxcut::CutResult {
                        side: vec![0; graph.vertex_count()],
                        cut_value: 0.0,
                        sdp_objective: 0.0,
                        iterations: 0,
                        seed: cli.seed,
                        weighted: false,
                        used_fallback: false,
                    };
                    plan_from_cut(&empty_cut, &graph, variant, &mentions, &corpus.entities)?
                }
            };
            let (variant_corpus, resolved) = apply_plan(
                &corpus,
                &plan,
                &templates,
                todshift_core::seed::derive(cli.seed, "redistribute"),
            )?;
            let report = verify_information_preservation(&corpus, &variant_corpus);
            if !report.is_empty() {
                bail!("information lost for {} slot values", report.losses.len());
            }
            write_snapshot(&variant_corpus, &out)?;
            write_json_pretty(&out.join("redistribution_plan.json"), &resolved)?;
            println!(
                "applied {} moves into {}",
                resolved.moves.len(),
                out.display()
            );
        }
        Command::Serialize {
            snapshot,
            entity,
            out,
        } => {
            let corpus = read_snapshot(&snapshot.snapshot)?;
            let mut lines = String::new();
            match entity {
                Some(id) => {
                    let e = corpus
                        .entity(&id)
                        .with_context(|| format!("no entity {id}"))?;
                    lines.push_str(&serialize_entity(e).encode());
                    lines.push('\n');
                }
                None => {
                    for e in &corpus.entities {
                        lines.push_str(&serialize_entity(e).encode());
                        lines.push('\n');
                    }
                }
            }
            match out {
                Some(path) => fs::write(&path, lines)?,
                None => print!("{lines}"),
            }
        }
        Command::EmitTrain {
            snapshot,
            out,
            alpha,
            batch_size,
            positives,
            negatives,
        } => {
            let corpus = read_snapshot(&snapshot.snapshot)?;
            let mix = MixConfig {
                alpha,
                batch_size,
                positives_per_batch: positives,
                negatives_per_batch: negatives,
            };
            let (examples, manifest) = emit_training_set(
                &corpus,
                &corpus.train,
                &mix,
                &ContextConfig::default(),
                todshift_core::seed::derive(cli.seed, "emit-train"),
            )?;
            fs::write(&out, examples_to_jsonl(&examples))?;
            let manifest_path = out.with_extension("batches.json");
            write_json_pretty(&manifest_path, &manifest)?;
            for skipped in &manifest.skipped_contexts {
                eprintln!("skipped context without gold entity: {skipped}");
            }
            println!(
                "{} examples in {} batches -> {} (+ {})",
                examples.len(),
                manifest.batches.len(),
                out.display(),
                manifest_path.display()
            );
        }
        Command::Retrieve {
            snapshot,
            out,
            query,
        } => {
            let corpus = read_snapshot(&snapshot.snapshot)?;
            let index = index_entities(&corpus.entities);
            let mut rankings: BTreeMap<String, Ranking> = BTreeMap::new();
            let mut ordered: Vec<Ranking> = Vec::new();
            let mut golds: Vec<HashSet<String>> = Vec::new();
            for dialog in &corpus.test.dialogs {
                for (t, turn) in dialog.turns.iter().enumerate() {
                    if turn.gold_entities.is_empty() {
                        continue;
                    }
                    let context = dialog.context(t);
                    let texts: Vec<&str> = context.iter().map(|(_, s)| *s).collect();
                    let ranking = index.score(&context_query(&texts, query));
                    rankings.insert(format!("{}:{}", dialog.id, t), ranking.clone());
                    ordered.push(ranking);
                    golds.push(turn.gold_entities.iter().cloned().collect());
                }
            }
            fs::write(&out, rankings_to_tsv(&rankings))?;
            println!(
                "contexts {}  success@1 {:.4}  success@5 {:.4}",
                ordered.len(),
                success_at_k(&ordered, &golds, 1),
                success_at_k(&ordered, &golds, 5)
            );
        }
        Command::Evaluate {
            snapshot,
            predictions,
            rankings,
            out,
        } => {
            let corpus = read_snapshot(&snapshot.snapshot)?;
            let rankings = match rankings {
                Some(path) => Some(load_rankings_tsv(&path)?),
                None => None,
            };
            let report = evaluate_run(
                &predictions,
                &corpus,
                rankings.as_ref(),
                &MetricsConfig::default(),
            )?;
            print!("{}", report.to_table());
            if let Some(path) = out {
                write_json_pretty(&path, &report)?;
            }
        }
        Command::Pipeline {
            input,
            out,
            variant,
            weighted_cut,
            templates,
            config,
        } => {
            let mut run = match config {
                Some(path) => {
                    let bytes =
                        fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_slice::<RunConfig>(&bytes)
                        .with_context(|| format!("parsing {}", path.display()))?
                }
                None => RunConfig::new(&input, &out),
            };
            run.input_dir = input;
            run.output_dir = out;
            run.variant = variant;
            run.weighted_cut = weighted_cut;
            run.seed = cli.seed;
            if cli.threads > 0 {
                run.threads = Some(cli.threads);
            }
            if templates.is_some() {
                run.templates_file = templates;
            }
            let outcome = run_pipeline(&run)?;
            println!(
                "pipeline done: {} moves, outputs in {}",
                outcome.manifest.moves_applied,
                run.output_dir.display()
            );
        }
    }
    Ok(())
}

fn load_rankings_tsv(path: &Path) -> Result<BTreeMap<String, Ranking>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out: BTreeMap<String, Vec<(usize, String, f64)>> = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 4 {
            bail!(
                "{}:{}: expected 4 tab-separated fields",
                path.display(),
                n + 1
            );
        }
        let rank: usize = parts[1].parse().context("rank column")?;
        let score: f64 = parts[3].parse().context("score column")?;
        out.entry(parts[0].to_string())
            .or_default()
            .push((rank, parts[2].to_string(), score));
    }
    Ok(out
        .into_iter()
        .map(|(context, mut rows)| {
            rows.sort_by_key(|(rank, _, _)| *rank);
            (
                context,
                Ranking {
                    entries: rows.into_iter().map(|(_, id, score)| (id, score)).collect(),
                },
            )
        })
        .collect())
}
