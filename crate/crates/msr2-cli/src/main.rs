//! `msr2` command line: index corpora, query sources, trace rollouts, train
//! the toy policy, and evaluate prediction files.

mod config;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::AppConfig;
use msr2_core::clients::mock::ScriptedGenerator;
use msr2_core::clients::{Generator, GeneratorCaps, RemoteGenerator};
use msr2_core::grpo::toy_env::{uniform_policy_baseline, ToyEnv};
use msr2_core::grpo::{train_toy, GrpoConfig, KlEstimator, ToyTrainConfig};
use msr2_core::retrieval::{
    build_source, load_registry, read_corpus_jsonl, save_registry, GraphParams, HashEmbedder,
    IndexStrategy, SourceConfig, SourceRegistry,
};
use msr2_core::reward::IntervalTable;
use msr2_core::rollout::{run_rollout, write_traces, RolloutConfig, Terminal};
use msr2_core::tag_protocol::SearchAction;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "msr2", version, about = "Reasoning rollouts with routable multi-source retrieval")]
struct Cli {
    /// Config file (TOML). Flags override environment variables, which
    /// override the file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for index builds, mock rollouts, and toy training.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker-thread cap. Current commands run single-threaded.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build (or replace) one source index inside a registry directory.
    Index(IndexArgs),
    /// Query a registry, routing by source tag.
    Search(SearchArgs),
    /// Run rollouts for facts from a file and dump trajectory traces.
    Rollout(RolloutArgs),
    /// Train the toy routing policy with GRPO and archive the learning curve.
    TrainToy(TrainToyArgs),
    /// Compute accuracy and macro precision/recall/F1 over a prediction file.
    Eval(EvalArgs),
}

fn parse_strategy(s: &str) -> Result<IndexStrategy, String> {
    s.parse()
}

fn parse_alias(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(tag, source)| (tag.to_string(), source.to_string()))
        .ok_or_else(|| format!("expected TAG=SOURCE, got {s:?}"))
}

#[derive(Args)]
struct IndexArgs {
    /// Corpus file: one JSON record per line (doc_id, text, metadata).
    #[arg(long)]
    corpus: PathBuf,
    /// Source id to create or replace.
    #[arg(long)]
    source: PathBuf,
    #[arg(long, value_parser = parse_strategy)]
    strategy: IndexStrategy,
    /// Registry directory (created on first use).
    #[arg(long)]
    registry: PathBuf,
    /// Embedding dimension for dense strategies (defaults from config).
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Default source of a newly created registry (defaults to this source).
    #[arg(long)]
    default_source: Option<String>,
    /// Tag aliases (TAG=SOURCE), repeatable; merged with config aliases.
    #[arg(long, value_parser = parse_alias)]
    alias: Vec<(String, String)>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    registry: PathBuf,
    #[arg(long)]
    query: String,
    /// Source tag to route by; omitted queries go to the default source.
    #[arg(long)]
    source: Option<String>,
    #[arg(short, long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    k: u64,
}

#[derive(Args)]
struct RolloutArgs {
    /// One fact per line.
    #[arg(long)]
    fact_file: PathBuf,
    #[arg(long)]
    registry: PathBuf,
    /// `mock` (replays --script) or a generator endpoint URL.
    #[arg(long)]
    generator: String,
    /// JSON array of turn texts for the mock generator.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainToyArgs {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    lambda_r: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Run directory for config, metrics, checkpoint, and seeds.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Prediction CSV: case_id,gold_months,pred_months (NA = unparsable).
    #[arg(long)]
    pred: PathBuf,
    /// Interval table JSON; the built-in ten-class table when omitted.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Summary JSON path (defaults to <pred>.summary.json).
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(error) = run(cli) {
        eprintln!("error: {error:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = AppConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(config.seed);
    match cli.command {
        Command::Index(args) => cmd_index(args, &config, seed),
        Command::Search(args) => cmd_search(args, &config),
        Command::Rollout(args) => cmd_rollout(args, &config),
        Command::TrainToy(args) => cmd_train_toy(args, &config, seed),
        Command::Eval(args) => cmd_eval(args, &config),
    }
}

fn registry_embed_dim(registry_dir: &Path) -> Result<Option<usize>> {
    let manifest = registry_dir.join("registry.json");
    if !manifest.exists() {
        return Ok(None);
    }
    let bytes = std::fs::read(&manifest)?;
    let value: serde_json::Value = serde_json::from_slice(&bytes)
        .with_context(|| format!("invalid registry manifest {}", manifest.display()))?;
    Ok(value.get("embed_dim").and_then(|v| v.as_u64()).map(|v| v as usize))
}

fn open_registry(registry_dir: &Path, fallback_dim: usize) -> Result<SourceRegistry> {
    let dim = registry_embed_dim(registry_dir)?.unwrap_or(fallback_dim);
    let embedder = Arc::new(HashEmbedder::new(dim));
    load_registry(registry_dir, embedder)
        .with_context(|| format!("loading registry {}", registry_dir.display()))
}

fn cmd_index(args: IndexArgs, config: &AppConfig, seed: Option<u64>) -> Result<()> {
    let source_id = args
        .source
        .to_str()
        .ok_or_else(|| anyhow!("source id must be valid UTF-8"))?
        .to_string();
    let records = read_corpus_jsonl(&args.corpus)
        .with_context(|| format!("reading corpus {}", args.corpus.display()))?;
    let record_count = records.len();

    let existing_dim = registry_embed_dim(&args.registry)?;
    let embed_dim = match (args.embed_dim, existing_dim) {
        (Some(flag), Some(existing)) if flag != existing => {
            bail!("--embed-dim {flag} conflicts with registry embed_dim {existing}")
        }
        (Some(flag), _) => flag,
        (None, Some(existing)) => existing,
        (None, None) => config.retrieval.embed_dim,
    };

    let mut source_config = SourceConfig::new(source_id.clone(), args.strategy, embed_dim);
    if let Some(seed) = seed {
        source_config.graph = GraphParams {
            seed,
            ..GraphParams::default()
        };
    }
    let embedder = Arc::new(HashEmbedder::new(embed_dim));
    let source = build_source(source_config, records, embedder.as_ref())?;
    let term_count = source.lexical_index().map(|ix| ix.term_count());

    let registry = if existing_dim.is_some() {
        let registry = open_registry(&args.registry, embed_dim)?;
        registry.replace_source(source);
        registry
    } else {
        let default_source = args.default_source.unwrap_or_else(|| source_id.clone());
        let mut builder = SourceRegistry::builder(default_source, embedder);
        for (tag, target) in config.aliases.iter() {
            if target == &source_id {
                builder = builder.alias(tag, target);
            }
        }
        for (tag, target) in &args.alias {
            builder = builder.alias(tag, target);
        }
        builder.source(source).build()?
    };
    save_registry(&registry, &args.registry)?;

    match term_count {
        Some(terms) => println!("indexed source={source_id} records={record_count} terms={terms}"),
        None => println!("indexed source={source_id} records={record_count}"),
    }
    Ok(())
}

fn cmd_search(args: SearchArgs, config: &AppConfig) -> Result<()> {
    let registry = open_registry(&args.registry, config.retrieval.embed_dim)?;
    let action = SearchAction {
        query: args.query.clone(),
        source_tag: args.source.map(|t| t.to_ascii_lowercase()),
    };
    let decision = registry.route(&action);
    if decision.unknown_tag {
        eprintln!(
            "warning: unknown source tag, falling back to default source {:?}",
            decision.source_id
        );
    }
    let hits = registry.top_k(&decision.source_id, &action.query, args.k as usize)?;
    for hit in &hits {
        println!(
            "{}\t{}\t{}\t{}\t{}",
            hit.rank, hit.score, hit.source_id, hit.doc_id, hit.text
        );
    }
    Ok(())
}

fn cmd_rollout(args: RolloutArgs, config: &AppConfig) -> Result<()> {
    let registry = open_registry(&args.registry, config.retrieval.embed_dim)?;
    let rollout_config = RolloutConfig {
        budget_b: args.budget.unwrap_or(config.rollout.budget),
        top_k: args.top_k.unwrap_or(config.rollout.top_k),
        ..RolloutConfig::default()
    };

    let facts: Vec<String> = std::fs::read_to_string(&args.fact_file)
        .with_context(|| format!("reading facts {}", args.fact_file.display()))?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if facts.is_empty() {
        bail!("fact file {} has no facts", args.fact_file.display());
    }

    let script: Option<Vec<String>> = match &args.script {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading script {}", path.display()))?;
            Some(serde_json::from_str(&text).context("script must be a JSON array of strings")?)
        }
        None => None,
    };

    let endpoint = if args.generator == "mock" {
        None
    } else {
        Some(args.generator.clone())
    };
    let endpoint = endpoint.or_else(|| {
        (args.generator == "endpoint")
            .then(|| config.clients.generator_url.clone())
            .flatten()
    });

    let mut trajectories = Vec::with_capacity(facts.len());
    for (idx, fact) in facts.iter().enumerate() {
        let generator: Box<dyn Generator> = match (&endpoint, &script) {
            (Some(url), _) => Box::new(RemoteGenerator::new(url, GeneratorCaps::default())),
            (None, Some(turns)) => Box::new(ScriptedGenerator::new(turns.clone())),
            (None, None) => bail!("--generator mock requires --script"),
        };
        let trajectory = run_rollout(fact, generator.as_ref(), &registry, &rollout_config)?;
        println!(
            "fact={idx} terminal={} budget_used={} searches={} warnings={}",
            match trajectory.terminal {
                Terminal::Answered => "answered",
                Terminal::BudgetExhausted => "budget-exhausted",
            },
            trajectory.budget_used,
            trajectory.search_count,
            trajectory.route_warnings
        );
        trajectories.push(trajectory);
    }
    write_traces(&args.out, &trajectories)?;
    println!("wrote {} trace(s) to {}", trajectories.len(), args.out.display());
    Ok(())
}

fn cmd_train_toy(args: TrainToyArgs, config: &AppConfig, seed: Option<u64>) -> Result<()> {
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating run directory {}", args.out.display()))?;

    let train_config = ToyTrainConfig {
        steps: args.steps.unwrap_or(config.train.steps),
        lambda_r: args.lambda_r.unwrap_or(config.train.lambda_r),
        seed: seed.unwrap_or(7),
        learning_rate: args.learning_rate.unwrap_or(config.train.learning_rate),
        grpo: GrpoConfig {
            group_size: args.group_size.unwrap_or(config.train.group_size),
            eps_clip: config.train.eps_clip,
            beta_kl: config.train.beta_kl,
            kl_estimator: KlEstimator::Exact,
            ..GrpoConfig::default()
        },
    };
    if !(0.0..=1.0).contains(&train_config.lambda_r) {
        bail!("--lambda-r must lie in [0, 1]");
    }

    let env = ToyEnv::with_lambda(train_config.lambda_r);
    let registry = env.build_registry()?;

    let baseline = uniform_policy_baseline(&env, &registry, 1_000, train_config.seed ^ 0xBA5E)?;
    println!("uniform baseline mean_reward={baseline:.4}");

    let mut policy = env.fresh_policy();
    let curve = if train_config.steps > 0 {
        train_toy(&env, &mut policy, &registry, &train_config)?
    } else {
        Default::default()
    };

    std::fs::write(
        args.out.join("config.json"),
        serde_json::to_vec_pretty(&train_config)?,
    )?;
    std::fs::write(
        args.out.join("seeds.txt"),
        format!("train_seed={}\nbaseline_seed={}\n", train_config.seed, train_config.seed ^ 0xBA5E),
    )?;
    curve.write_csv(&args.out.join("metrics.csv"))?;
    policy.save(&args.out.join("policy.json"))?;

    let window = 20;
    let summary = serde_json::json!({
        "baseline_mean_reward": baseline,
        "steps": train_config.steps,
        "final_trailing_mean_reward": curve.final_trailing_mean(window),
        "reached_0_9_at_step": curve.first_step_reaching(0.9, window),
        "trailing_window": window,
    });
    std::fs::write(args.out.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;

    if train_config.steps > 0 {
        println!(
            "trained steps={} final_trailing_mean_reward={:.4} reached_0.9_at={:?}",
            train_config.steps,
            curve.final_trailing_mean(window),
            curve.first_step_reaching(0.9, window)
        );
    } else {
        println!("baseline metrics only (steps=0)");
    }
    println!("run artifacts in {}", args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs, config: &AppConfig) -> Result<()> {
    let table = match args.table.as_ref().or(config.retrieval.interval_table.as_ref()) {
        Some(path) => IntervalTable::load(path)
            .with_context(|| format!("loading interval table {}", path.display()))?,
        None => IntervalTable::default(),
    };
    let records = msr2_core::eval::read_predictions(&args.pred)
        .with_context(|| format!("reading predictions {}", args.pred.display()))?;
    let summary = msr2_core::eval::summarize(&records, &table)?;

    println!("records   {}", summary.records);
    println!("accuracy  {:.4}", summary.accuracy);
    println!("macro_p   {:.4}", summary.macro_precision);
    println!("macro_r   {:.4}", summary.macro_recall);
    println!("macro_f   {:.4}", summary.macro_f1);

    let summary_path = args.summary.unwrap_or_else(|| {
        let mut path = args.pred.clone();
        path.set_extension("summary.json");
        path
    });
    std::fs::write(&summary_path, serde_json::to_vec_pretty(&summary)?)?;
    println!("summary written to {}", summary_path.display());
    Ok(())
}
