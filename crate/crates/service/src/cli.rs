//! The `claimtriage` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use claimtriage::classifier::{self, FeatureSpec, LogisticModel, TrainConfig};
use claimtriage::clock::{Clock, SystemClock};
use claimtriage::embed::{EmbeddingIndex, EmbeddingProvider, HashingEmbedder};
use claimtriage::llm::{
    provider_from_env, score_facet, CompletionProvider, FacetDefinition, MockProvider, ScoringOptions,
};
use claimtriage::rank::{rank, ScoringMode, WeightProfile};
use claimtriage::stats::{friedman, pairwise_wilcoxon, RepeatedMeasures};
use claimtriage::store::{split_corpus, CorpusSplit};
use claimtriage::telemetry::EventLog;
use claimtriage::{ClaimStore, FacetKey, ScoreMap};
use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::ServiceConfig;
use crate::engine::{Engine, EngineParts};
use crate::error::ServiceError;

/// Facet score maps as stored on disk: facet key -> claim id -> probability.
pub type ScoreFile = BTreeMap<FacetKey, ScoreMap>;

#[derive(Debug, Parser)]
#[command(name = "claimtriage", version, about = "Claim prioritization toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a JSONL claim file and write a clean store.
    Ingest {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split labeled claims into train and test ids.
    Split {
        #[arg(long)]
        store: PathBuf,
        /// train:test, e.g. 2:1
        #[arg(long, default_value = "2:1", value_parser = parse_ratio)]
        ratio: (u32, u32),
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train facet classifiers; writes `<facet>.json` per model.
    Train {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Facets to train (default: every preset).
        #[arg(long = "facet")]
        facets: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Append hashed character n-gram embeddings of this dimension.
        #[arg(long)]
        hashing_dim: Option<usize>,
    },
    /// Score the corpus with trained models and/or a custom LLM facet.
    Score {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long, requires = "context")]
        facet_name: Option<String>,
        #[arg(long)]
        context: Option<String>,
        /// Mock provider rules instead of the environment-configured provider.
        #[arg(long)]
        mock_rules: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        concurrency: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Append-only event log; replayed on start.
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        mock_rules: Option<PathBuf>,
        /// Score preset facets missing from the scores file at this value.
        #[arg(long)]
        fill_missing: Option<f64>,
    },
    /// Rank the corpus once with a weight profile file.
    Rank {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        /// JSON object of facet -> weight.
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        query: Option<String>,
        #[arg(long, default_value = "squared")]
        mode: ScoringMode,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Friedman and pairwise Wilcoxon tests on a CSV matrix.
    Analyze {
        matrix: PathBuf,
        #[arg(long)]
        pairwise: bool,
    },
    /// Draw a uniform random subset of a store.
    Sample {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_ratio(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once(':').ok_or("expected train:test")?;
    let a: u32 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: u32 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if a == 0 || b == 0 {
        return Err("both parts must be positive".into());
    }
    Ok((a, b))
}

pub fn main_with(args: impl IntoIterator<Item = OsString>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let stdout = io::stdout();
    match run(cli.command, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(command: Command, out: &mut dyn Write) -> Result<(), ServiceError> {
    match command {
        Command::Ingest { input, out: path } => {
            let mut store = ClaimStore::new();
            let report = store.ingest_jsonl(BufReader::new(File::open(input)?))?;
            for err in &report.errors {
                eprintln!("skipped {err}");
            }
            store.save(&path)?;
            writeln!(
                out,
                "{}",
                json!({ "accepted": report.accepted, "rejected": report.errors.len() })
            )?;
        }
        Command::Split {
            store,
            ratio,
            seed,
            out: path,
        } => {
            let store = ClaimStore::load(store)?;
            let split = split_corpus(&store, ratio, seed)?;
            std::fs::write(&path, serde_json::to_string_pretty(&split)?)?;
            writeln!(
                out,
                "{}",
                json!({ "train": split.train_ids.len(), "test": split.test_ids.len() })
            )?;
        }
        Command::Train {
            store,
            split,
            out_dir,
            facets,
            seed,
            hashing_dim,
        } => {
            let store = ClaimStore::load(store)?;
            let split: CorpusSplit = serde_json::from_reader(BufReader::new(File::open(split)?))?;
            let embedder = hashing_dim.map(|d| Arc::new(HashingEmbedder::new(d)) as Arc<dyn EmbeddingProvider>);
            let config = TrainConfig {
                spec: FeatureSpec {
                    use_embeddings: embedder.is_some(),
                    ..FeatureSpec::default()
                },
                seed,
                embedder,
                ..TrainConfig::default()
            };
            let facets: Vec<FacetKey> = if facets.is_empty() {
                FacetKey::all_presets().to_vec()
            } else {
                facets.iter().map(|f| FacetKey::from(f.as_str())).collect()
            };
            std::fs::create_dir_all(&out_dir)?;
            let mut trained = 0;
            for facet in facets {
                match classifier::train(&facet, &store, &split, &config) {
                    Ok(model) => {
                        model.save(out_dir.join(format!("{facet}.json")))?;
                        writeln!(out, "{}", json!({ "facet": facet, "report": model.train_report() }))?;
                        trained += 1;
                    }
                    Err(e) => eprintln!("{facet}: {e}"),
                }
            }
            if trained == 0 {
                return Err(ServiceError::Config("no facet could be trained".into()));
            }
        }
        Command::Score {
            store,
            models,
            facet_name,
            context,
            mock_rules,
            concurrency,
            out: path,
        } => {
            let store = ClaimStore::load(store)?;
            let mut scores = ScoreFile::new();
            if let Some(dir) = models {
                for facet in FacetKey::all_presets() {
                    let file = dir.join(format!("{facet}.json"));
                    if file.exists() {
                        let model = load_model(&file)?;
                        scores.insert(facet, model.score_corpus(&store));
                    }
                }
            }
            if let (Some(name), Some(context)) = (facet_name, context) {
                let provider = completion_provider(mock_rules.as_deref())?;
                let facet = FacetDefinition::custom(&name, &context, SystemClock.now_ms())?;
                let options = ScoringOptions {
                    concurrency_limit: concurrency,
                    ..ScoringOptions::default()
                };
                let result = score_facet(&facet, &store, provider.as_ref(), &options, &|p| {
                    if p.done == p.total || p.done % 100 == 0 {
                        eprintln!("{}: {}/{}", facet.key, p.done, p.total);
                    }
                })?;
                for f in &result.flagged {
                    eprintln!("flagged {}: {:?}", f.claim_id, f.reason);
                }
                scores.insert(facet.key, result.scores);
            }
            if scores.is_empty() {
                return Err(ServiceError::Config(
                    "nothing to score: pass --models and/or --facet-name".into(),
                ));
            }
            std::fs::write(&path, serde_json::to_string(&scores)?)?;
            writeln!(
                out,
                "{}",
                json!({ "facets": scores.keys().collect::<Vec<_>>(), "claims": store.len() })
            )?;
        }
        Command::Serve {
            store,
            scores,
            config,
            bind,
            events,
            mock_rules,
            fill_missing,
        } => {
            let store = ClaimStore::load(store)?;
            let mut presets = load_scores(&scores)?;
            if let Some(p) = fill_missing {
                for facet in FacetKey::all_presets() {
                    presets
                        .entry(facet)
                        .or_insert_with(|| store.ids().map(|id| (id.to_string(), p)).collect());
                }
            }
            let config = config.map(ServiceConfig::load).transpose()?.unwrap_or_default();
            let clock: Arc<dyn Clock> = Arc::new(SystemClock);
            let events = match events {
                Some(path) => EventLog::open(path, Arc::clone(&clock))?,
                None => EventLog::in_memory(Arc::clone(&clock)),
            };
            let engine = Engine::new(EngineParts {
                store,
                presets,
                embedder: Arc::new(HashingEmbedder::default()),
                provider: completion_provider(mock_rules.as_deref())?,
                config,
                clock,
                events,
            })?;
            crate::serve(Arc::new(engine), &bind)?;
        }
        Command::Rank {
            store,
            scores,
            profile,
            query,
            mode,
            limit,
        } => {
            let store = ClaimStore::load(store)?;
            let mut maps = load_scores(&scores)?;
            let profile: WeightProfile = serde_json::from_reader(BufReader::new(File::open(profile)?))?;
            if profile.get(&FacetKey::query_similarity()).is_some() {
                let embedder = HashingEmbedder::default();
                let index = EmbeddingIndex::build(&store, &embedder)?;
                let q = index.query_similarity_scores(&embedder, query.as_deref().unwrap_or(""))?;
                maps.insert(FacetKey::query_similarity(), q);
            }
            let ranked = rank(store.ids(), &maps, &profile, mode)?;
            for (i, e) in ranked.entries.iter().take(limit.unwrap_or(usize::MAX)).enumerate() {
                writeln!(
                    out,
                    "{}",
                    json!({ "rank": i + 1, "claim_id": e.claim_id, "score": e.score })
                )?;
            }
        }
        Command::Analyze { matrix, pairwise } => {
            let rm = RepeatedMeasures::from_csv(File::open(matrix)?)?;
            let f = friedman(&rm);
            writeln!(
                out,
                "{}",
                json!({ "test": "friedman", "conditions": rm.labels(), "result": f })
            )?;
            if pairwise {
                for p in pairwise_wilcoxon(&rm) {
                    writeln!(
                        out,
                        "{}",
                        json!({ "test": "wilcoxon", "a": p.a, "b": p.b, "result": p.result })
                    )?;
                }
            }
        }
        Command::Sample {
            store,
            n,
            seed,
            out: path,
        } => {
            let store = ClaimStore::load(store)?;
            let sample = store.sample(n, seed);
            sample.save(&path)?;
            writeln!(out, "{}", json!({ "sampled": sample.len(), "from": store.len() }))?;
        }
    }
    Ok(())
}

pub fn load_scores(path: &Path) -> Result<ScoreFile, ServiceError> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Loads a model, rebuilding the hashing embedder it was trained with.
fn load_model(path: &Path) -> Result<LogisticModel, ServiceError> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let embedder = value["embedding"]["dim"]
        .as_u64()
        .map(|dim| Arc::new(HashingEmbedder::new(dim as usize)) as Arc<dyn EmbeddingProvider>);
    Ok(LogisticModel::from_json(&text, embedder)?)
}

fn completion_provider(mock_rules: Option<&Path>) -> Result<Arc<dyn CompletionProvider>, ServiceError> {
    Ok(match mock_rules {
        Some(path) => Arc::new(MockProvider::load(path)?),
        None => provider_from_env()?,
    })
}
