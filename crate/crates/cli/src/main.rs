use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use pgrank::data::{
    build_eval_candidates, build_training_candidates, generate_distractors, generate_synthetic,
    split_queries, CandidatePool, Corpus, Stage1, SyntheticConfig, VectorSet, DISTRACTORS_FILE,
};
use pgrank::eval::{
    eval_first_stage, eval_second_stage, parse_metric_list, rerank_pool, Evaluation,
};
use pgrank::parallel::Executor;
use pgrank::plackett_luce::sample_gumbel;
use pgrank::rng;
use pgrank::scoring::ScorerParams;
use pgrank::trainer::{train, TrainConfig, CONFIG_KEYS};
use pgrank::verify::run_checks;

const EXIT_USAGE: u8 = 1;
const EXIT_CONTRACT: u8 = 2;
const EXIT_VERIFY: u8 = 3;

#[derive(Parser)]
#[command(
    name = "pgrank",
    version,
    about = "Train and evaluate Plackett-Luce ranking policies"
)]
struct Cli {
    /// Master seed; all randomness derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-query work (1 = sequential, 0 = all cores).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus (queries, docs, qrels, optional distractors).
    GenerateData(GenerateArgs),
    /// Build training or evaluation candidate pools.
    BuildPools(PoolArgs),
    /// Train a scorer with policy gradients.
    Train(TrainArgs),
    /// Evaluate a checkpoint by reranking pools or retrieving from the collection.
    Evaluate(EvaluateArgs),
    /// Rerank a candidate pool and write a TREC run file.
    Rerank(RerankArgs),
    /// Print rankings sampled from the policy for one query.
    Sample(SampleArgs),
    /// Run gradient, sampler and estimator self-checks.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 100)]
    queries: usize,
    /// Documents generated per query, relevant ones included.
    #[arg(long, default_value_t = 100)]
    docs_per_query: usize,
    #[arg(long, default_value_t = 5)]
    relevant: usize,
    #[arg(long, default_value_t = SyntheticConfig::default().noise_scale)]
    noise: f64,
    /// Grade relevant documents 3/2/1 instead of 1.
    #[arg(long)]
    graded: bool,
    /// Unjudged extra documents written to a separate file.
    #[arg(long, default_value_t = 0)]
    distractors: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolKind {
    Train,
    Eval,
}

#[derive(Args)]
struct PoolArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = PoolKind::Eval)]
    kind: PoolKind,
    #[arg(long, default_value_t = 100)]
    pool_size: usize,
    /// First-stage model; raw feature dot product when omitted.
    #[arg(long)]
    stage1: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Training pools; validation queries are carved out of them.
    #[arg(long)]
    pools: PathBuf,
    /// Pools for the validation queries (defaults to --pools).
    #[arg(long)]
    val_pools: Option<PathBuf>,
    /// Output directory for the model, log and effective config.
    #[arg(long)]
    out: PathBuf,
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable. Takes precedence over --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Warm-start checkpoint; random initialization when omitted.
    #[arg(long)]
    init: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stage {
    First,
    Second,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_enum, default_value_t = Stage::Second)]
    stage: Stage,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Evaluation pools. Required for --stage second; restricts the queries for --stage first.
    #[arg(long)]
    pools: Option<PathBuf>,
    /// Comma-separated metrics, e.g. ndcg@1,3,10,mrr,map.
    #[arg(long, default_value = "ndcg@10,mrr,map")]
    metrics: String,
    /// Documents retrieved per query for --stage first.
    #[arg(long, default_value_t = 1000)]
    top_k: usize,
    /// Add the corpus distractor file to the collection for --stage first.
    #[arg(long)]
    with_distractors: bool,
    #[arg(long)]
    run_out: Option<PathBuf>,
    #[arg(long)]
    per_query_out: Option<PathBuf>,
}

#[derive(Args)]
struct RerankArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    pools: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "pgrank")]
    tag: String,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    pools: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    query: String,
    #[arg(long, default_value_t = 5)]
    count: usize,
    #[arg(long, default_value_t = TrainConfig::default().temperature)]
    temperature: f64,
    /// Documents printed per sampled ranking.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args)]
struct VerifyArgs {
    /// Write per-coordinate estimator statistics here.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

fn config_help() -> String {
    let defaults = TrainConfig::default();
    let mut s =
        String::from("Training config keys (file or --set KEY=VALUE; flags > file > defaults):\n");
    for (key, help) in CONFIG_KEYS {
        s.push_str(&format!(
            "  {key:<20} default {:<10} {help}\n",
            defaults.get(key).unwrap()
        ));
    }
    s
}

enum Failure {
    Contract(pgrank::Error),
    Verify,
}

impl From<pgrank::Error> for Failure {
    fn from(e: pgrank::Error) -> Self {
        Failure::Contract(e)
    }
}

type CliResult = Result<(), Failure>;

fn contract(msg: String) -> Failure {
    Failure::Contract(pgrank::Error::Contract(msg))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| contract(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| contract(format!("{}: {e}", path.display())))
}

fn executor(threads: usize) -> Executor {
    Executor::threads(threads)
}

fn generate(args: GenerateArgs, seed: u64) -> CliResult {
    let config = SyntheticConfig {
        dim: args.dim,
        num_queries: args.queries,
        docs_per_query_pool: args.docs_per_query,
        relevant_per_query: args.relevant,
        noise_scale: args.noise,
        graded: args.graded,
        seed,
    };
    let corpus = generate_synthetic(&config)?;
    corpus.write_dir(&args.out)?;
    if args.distractors > 0 {
        generate_distractors(args.dim, args.distractors, seed)?
            .write(&args.out.join(DISTRACTORS_FILE))?;
    }
    println!(
        "wrote {} queries, {} documents, {} distractors to {}",
        corpus.queries.len(),
        corpus.docs.len(),
        args.distractors,
        args.out.display()
    );
    Ok(())
}

fn build_pools(args: PoolArgs, exec: &Executor) -> CliResult {
    let corpus = Corpus::read_dir(&args.data)?;
    let stage1 = match &args.stage1 {
        Some(p) => Stage1::Model(ScorerParams::load(p)?),
        None => Stage1::RawDot,
    };
    let pool = match args.kind {
        PoolKind::Train => build_training_candidates(&corpus, &stage1, args.pool_size, exec)?,
        PoolKind::Eval => build_eval_candidates(&corpus, &stage1, args.pool_size, exec)?,
    };
    pool.write(&args.out)?;
    println!(
        "wrote pools for {} queries to {}",
        pool.len(),
        args.out.display()
    );
    Ok(())
}

fn train_command(args: TrainArgs, seed: Option<u64>, exec: &Executor) -> CliResult {
    let mut config = TrainConfig::default();
    if let Some(path) = &args.config {
        config.apply_file(path)?;
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| contract(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        config.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config.validate()?;

    let corpus = Corpus::read_dir(&args.data)?;
    let pools = CandidatePool::read(&args.pools)?;
    let val_pools = match &args.val_pools {
        Some(p) => CandidatePool::read(p)?,
        None => pools.clone(),
    };
    let ids: Vec<String> = pools.query_ids().map(str::to_string).collect();
    let (train_ids, val_ids) = split_queries(&ids, config.val_fraction, config.seed)?;
    let train_sets = pools
        .subset(train_ids.iter().map(String::as_str))
        .candidate_sets(&corpus)?;
    let val_sets = val_pools
        .subset(val_ids.iter().map(String::as_str))
        .candidate_sets(&corpus)?;

    let init = match &args.init {
        Some(p) => {
            let params = ScorerParams::load(p)?;
            if params.architecture().input_dim != corpus.dim() {
                return Err(contract(format!(
                    "{}: checkpoint input dimension {} does not match corpus dimension {}",
                    p.display(),
                    params.architecture().input_dim,
                    corpus.dim()
                )));
            }
            params
        }
        None => ScorerParams::init(config.architecture(corpus.dim()), config.seed)?,
    };

    fs::create_dir_all(&args.out).map_err(|e| contract(format!("{}: {e}", args.out.display())))?;
    let outcome = train(init, &train_sets, &val_sets, &config, exec, Some(&args.out))?;
    outcome.params.save(&args.out.join("model.txt"))?;
    write_text(&args.out.join("train_log.tsv"), &outcome.log_tsv())?;
    write_text(&args.out.join("config.txt"), &config.to_text())?;
    write_text(
        &args.out.join("validation_queries.txt"),
        &(val_ids.join("\n") + "\n"),
    )?;

    println!(
        "trained on {} queries, validated on {} ({} parameters)",
        train_sets.len(),
        val_sets.len(),
        outcome.params.num_params()
    );
    println!("epoch\ttrain_utility\tval_sort_ndcg@10\tval_stochastic_ndcg@10");
    for row in &outcome.log {
        let full = row.to_tsv_row();
        // wall-clock time stays in the log file so the report is reproducible
        let cols: Vec<&str> = full.split('\t').take(4).collect();
        println!("{}", cols.join("\t"));
    }
    println!("model written to {}", args.out.join("model.txt").display());
    Ok(())
}

fn report(
    evaluation: &Evaluation,
    run_out: Option<&Path>,
    per_query_out: Option<&Path>,
) -> CliResult {
    print!("{}", evaluation.table.aggregate_tsv());
    if let Some(p) = run_out {
        evaluation.run.write(p)?;
    }
    if let Some(p) = per_query_out {
        write_text(p, &evaluation.table.per_query_tsv())?;
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs, exec: &Executor) -> CliResult {
    let metrics = parse_metric_list(&args.metrics)?;
    let mut corpus = Corpus::read_dir(&args.data)?;
    let params = ScorerParams::load(&args.checkpoint)?;
    let pools = args.pools.as_deref().map(CandidatePool::read).transpose()?;
    let evaluation = match args.stage {
        Stage::Second => {
            let pools =
                pools.ok_or_else(|| contract("--stage second requires --pools".to_string()))?;
            eval_second_stage(&params, &corpus, &pools, &metrics, exec)?
        }
        Stage::First => {
            if args.with_distractors {
                let extra = VectorSet::read(&args.data.join(DISTRACTORS_FILE))?;
                corpus = corpus.with_extra_docs(&extra)?;
            }
            let ids: Vec<String> = match &pools {
                Some(p) => p.query_ids().map(str::to_string).collect(),
                None => corpus.queries.ids().to_vec(),
            };
            eval_first_stage(&params, &corpus, &ids, &metrics, args.top_k, exec)?
        }
    };
    report(
        &evaluation,
        args.run_out.as_deref(),
        args.per_query_out.as_deref(),
    )
}

fn rerank(args: RerankArgs, exec: &Executor) -> CliResult {
    let corpus = Corpus::read_dir(&args.data)?;
    let pools = CandidatePool::read(&args.pools)?;
    let params = ScorerParams::load(&args.checkpoint)?;
    let run = rerank_pool(&params, &corpus, &pools, &args.tag, exec)?;
    run.write(&args.out)?;
    println!(
        "reranked {} queries into {}",
        run.lists.len(),
        args.out.display()
    );
    Ok(())
}

fn sample(args: SampleArgs, seed: u64) -> CliResult {
    let corpus = Corpus::read_dir(&args.data)?;
    let pools = CandidatePool::read(&args.pools)?;
    let params = ScorerParams::load(&args.checkpoint)?;
    let cs = pools.candidate_set(&corpus, &args.query)?;
    let scores = params.forward_candidates(&cs.query, &cs.docs)?.scores;
    let mut r = rng::stream(seed, &[0x5A3_91E]);
    for i in 0..args.count {
        let ranking = sample_gumbel(&scores, args.temperature, &mut r)?;
        let docs: Vec<&str> = ranking
            .order()
            .iter()
            .take(args.top)
            .map(|&d| cs.doc_ids[d].as_str())
            .collect();
        println!("{}\t{}", i + 1, docs.join(" "));
    }
    Ok(())
}

fn verify(args: VerifyArgs, seed: u64, exec: &Executor) -> CliResult {
    let report = run_checks(seed, exec)?;
    print!("{}", report.to_text());
    if let Some(p) = &args.diagnostics {
        write_text(p, &report.diagnostics_tsv())?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}

fn run(cli: Cli) -> CliResult {
    let exec = executor(cli.threads);
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::GenerateData(a) => generate(a, seed),
        Command::BuildPools(a) => build_pools(a, &exec),
        Command::Train(a) => train_command(a, cli.seed, &exec),
        Command::Evaluate(a) => evaluate(a, &exec),
        Command::Rerank(a) => rerank(a, &exec),
        Command::Sample(a) => sample(a, seed),
        Command::Verify(a) => verify(a, seed, &exec),
    }
}

fn main() -> ExitCode {
    let help = config_help();
    let command = Cli::command()
        .after_help(help.clone())
        .mut_subcommand("train", |c| c.after_help(help));
    let cli = match command
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m))
    {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Contract(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONTRACT)
        }
        Err(Failure::Verify) => {
            eprintln!("error: verification failed");
            ExitCode::from(EXIT_VERIFY)
        }
    }
}
