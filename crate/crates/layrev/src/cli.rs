//! `layrev` command line. Exit codes: 0 ok, 1 usage, 2 data error, 3 backend error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use layrev_core::backend::{EchoReviser, HeuristicConfig, HeuristicReviser, ReviserBackend};
use layrev_core::layout::parse_layout_code;
use layrev_core::metrics::{EmbedConfig, FidConfig};
use layrev_core::orchestrator::{evaluate_run, run_chain, run_chain_with_human, ChainConfig, ChainReport};
use layrev_core::prompt::ModelSetup;
use layrev_core::render::render;
use layrev_core::sampler::{expand_corpus, SamplerConfig, Strategy};
use layrev_core::seed::derive_seed;
use layrev_core::trajectory::{stage_profile, synthesize_corpus, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{load_classes, load_synth_config, Classes};
use crate::corpus::{load_corpus, read_jsonl, write_corpus, write_jsonl};
use crate::image::encode_png;
use crate::remote::{RemoteConfig, RemoteReviser};
use crate::service::{serve, AppState, BackendMap, ServiceConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "layrev", version, about = "Layout revision corpus tools, revision chains and session service")]
pub struct Cli {
    /// Tab-separated class file (`id<TAB>NAME<TAB>#rrggbb`); defaults to the built-in classes.
    #[arg(long, global = true)]
    pub classes: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus generation and analysis.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Expand a corpus into training examples.
    Sample(SampleArgs),
    /// Run revision chains over a corpus.
    Chain(ChainArgs),
    /// Per-round FID, identical rate and ROUGE-L of chain reports.
    Eval(EvalArgs),
    /// Render layouts to PNG.
    Render(RenderArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Generate a synthetic revision corpus.
    Synth(SynthArgs),
    /// Stage-bucket FID profile against the final states.
    StageFid(StageFidArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output JSONL; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// TOML generator settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StageFidArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub buckets: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Direct,
    DirectSi,
    HopJti,
    HopQuant,
    Single,
    Multi,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Direct => Strategy::Direct,
            StrategyArg::DirectSi => Strategy::DirectSi,
            StrategyArg::HopJti => Strategy::HopJti,
            StrategyArg::HopQuant => Strategy::HopQuant,
            StrategyArg::Single => Strategy::Single,
            StrategyArg::Multi => Strategy::Multi,
        }
    }
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub buckets: usize,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendArg {
    Heuristic,
    Echo,
    Remote,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SetupArg {
    Direct,
    Hop,
    Single,
    Multi,
}

impl From<SetupArg> for ModelSetup {
    fn from(s: SetupArg) -> Self {
        match s {
            SetupArg::Direct => ModelSetup::Direct,
            SetupArg::Hop => ModelSetup::Hop,
            SetupArg::Single => ModelSetup::SingleRevision,
            SetupArg::Multi => ModelSetup::MultiRevision,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum HumanArg {
    /// Self-revision only.
    None,
    /// The final state as the round-1 human edit.
    Final,
    /// A uniformly drawn intermediate state as the round-1 human edit.
    Intermediate,
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    #[arg(long, value_enum, default_value = "heuristic")]
    pub backend: BackendArg,
    #[arg(long, value_enum, default_value = "single")]
    pub setup: SetupArg,
    #[arg(long, default_value_t = 3)]
    pub rounds: usize,
    #[arg(long, default_value_t = 0.0)]
    pub temp: f64,
    #[arg(long, default_value_t = 400)]
    pub max_tokens: usize,
    #[arg(long, value_enum, default_value = "none")]
    pub human: HumanArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Only the first N trajectories.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub jobs: usize,
    #[arg(long)]
    pub fix_typos: bool,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output JSONL of chain reports; stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub reports: PathBuf,
    /// Corpus whose final states are the reference population.
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub fid_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StageArg {
    All,
    Initial,
    Final,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// A corpus (`.jsonl`) or a single design-code file.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub scale: u32,
    #[arg(long, value_enum, default_value = "all")]
    pub stage: StageArg,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "LAYREV_DATA_DIR", default_value = "layrev-data")]
    pub data_dir: PathBuf,
    #[arg(long, env = "LAYREV_CORPUS_DIR")]
    pub corpus_dir: Option<PathBuf>,
    #[arg(long, env = "LAYREV_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: String,
    /// Idle time after which a session expires.
    #[arg(long, default_value_t = 7 * 24 * 3600)]
    pub ttl_secs: u64,
    #[arg(long, default_value_t = 1)]
    pub scale: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| data(format!("{}: {e}", p.display())))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    })
}

fn backend(kind: BackendArg, classes: &Classes, seed: u64) -> Result<Arc<dyn ReviserBackend>, CliError> {
    Ok(match kind {
        BackendArg::Heuristic => {
            Arc::new(HeuristicReviser::new(classes.registry.clone(), HeuristicConfig { seed, ..Default::default() }))
        }
        BackendArg::Echo => Arc::new(EchoReviser::new(classes.registry.clone())),
        BackendArg::Remote => {
            let cfg = RemoteConfig::from_env().map_err(|e| CliError::Usage(e.to_string()))?;
            Arc::new(RemoteReviser::new(cfg, classes.clone()).map_err(|e| CliError::Usage(e.to_string()))?)
        }
    })
}

fn synth(args: SynthArgs, classes: &Classes) -> Result<(), CliError> {
    let cfg = load_synth_config(args.config.as_deref()).map_err(data)?;
    let corpus = synthesize_corpus(args.n, args.seed, &cfg, &classes.registry).map_err(data)?;
    write_corpus(output(args.out.as_deref())?, &corpus).map_err(data)
}

fn stage_fid(args: StageFidArgs, classes: &Classes) -> Result<(), CliError> {
    let corpus = load_corpus(&args.input, &classes.registry, Split::Train).map_err(data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let profile = stage_profile(
        &corpus,
        args.buckets,
        &mut rng,
        &classes.registry,
        &EmbedConfig::default(),
        &FidConfig::default(),
    )
    .map_err(data)?;
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    w.write_record(["bucket", "samples", "fid"]).map_err(data)?;
    for (b, (fid, n)) in profile.bucket_fids.iter().zip(&profile.sample_counts).enumerate() {
        w.write_record([b.to_string(), n.to_string(), format!("{fid:.6}")]).map_err(data)?;
    }
    w.flush().map_err(data)
}

fn sample(args: SampleArgs, classes: &Classes) -> Result<(), CliError> {
    let corpus = load_corpus(&args.input, &classes.registry, Split::Train).map_err(data)?;
    let cfg = SamplerConfig {
        strategy: args.strategy.into(),
        repeats: args.repeats,
        seed: args.seed,
        bucket_count: args.buckets,
        ..SamplerConfig::default()
    };
    let examples = expand_corpus(&corpus, &cfg).map_err(data)?;
    write_jsonl(output(args.out.as_deref())?, &examples).map_err(data)
}

fn chain(args: ChainArgs, classes: &Classes) -> Result<(), CliError> {
    if args.rounds == 0 {
        return Err(CliError::Usage("--rounds must be at least 1".into()));
    }
    let corpus = load_corpus(&args.input, &classes.registry, Split::Test).map_err(data)?;
    let reviser = backend(args.backend, classes, args.seed)?;
    let cfg = ChainConfig {
        rounds: args.rounds,
        setup: args.setup.into(),
        temperature: args.temp,
        max_tokens: args.max_tokens,
        fix_typos: args.fix_typos,
        ..ChainConfig::default()
    };
    cfg.prompt_options().decoding.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let trajs = &corpus.trajectories()[..args.limit.unwrap_or(usize::MAX).min(corpus.len())];
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs.max(1)).build().map_err(data)?;
    let results: Vec<Result<ChainReport, _>> = pool.install(|| {
        trajs
            .par_iter()
            .enumerate()
            .map(|(t, traj)| {
                let n = traj.last_index();
                let human = match args.human {
                    HumanArg::None => None,
                    HumanArg::Final => Some(traj.final_state()),
                    HumanArg::Intermediate => {
                        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(args.seed, t as u64, 0));
                        let i = if n >= 2 { rng.random_range(1..n) } else { n };
                        traj.state(i)
                    }
                };
                let run = match human {
                    Some(h) => run_chain_with_human(reviser.as_ref(), &traj.prompt, traj.initial(), h, &cfg),
                    None => run_chain(reviser.as_ref(), &traj.prompt, traj.initial(), &cfg),
                };
                run.map(|mut r| {
                    r.trajectory_id = Some(traj.id.clone());
                    r.state.id = traj.id.clone();
                    r
                })
                .map_err(|mut abort| {
                    abort.partial.trajectory_id = Some(traj.id.clone());
                    abort
                })
            })
            .collect()
    });
    let mut reports = Vec::with_capacity(results.len());
    let mut failure = None;
    for r in results {
        match r {
            Ok(report) => reports.push(report),
            Err(abort) => {
                failure.get_or_insert_with(|| format!("{}: {abort}", abort.partial.trajectory_id.as_deref().unwrap_or("?")));
                reports.push(*abort.partial);
            }
        }
    }
    write_jsonl(output(args.report.as_deref())?, &reports).map_err(data)?;
    match failure {
        Some(msg) => Err(CliError::Backend(msg)),
        None => Ok(()),
    }
}

fn eval(args: EvalArgs, classes: &Classes) -> Result<(), CliError> {
    let file = File::open(&args.reports).map_err(|e| data(format!("{}: {e}", args.reports.display())))?;
    let reports: Vec<ChainReport> = read_jsonl(BufReader::new(file)).map_err(data)?;
    let reference = load_corpus(&args.reference, &classes.registry, Split::Test).map_err(data)?.finals();
    let fid_cfg = FidConfig { sample_size: args.fid_samples, ..FidConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let rows = evaluate_run(&reports, &reference, &classes.registry, &EmbedConfig::default(), &fid_cfg, &mut rng)
        .map_err(data)?;
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record(["round", "sessions", "fid", "mean_term", "trace_term", "identical_rate", "rouge_l", "low_sample"])
        .map_err(data)?;
    for r in rows {
        w.write_record([
            r.round.to_string(),
            r.sessions.to_string(),
            format!("{:.6}", r.fid.score),
            format!("{:.6}", r.fid.mean_term),
            format!("{:.6}", r.fid.trace_term),
            format!("{:.2}", r.identical_rate),
            format!("{:.2}", r.mean_rouge_l),
            r.fid.low_sample.to_string(),
        ])
        .map_err(data)?;
    }
    w.flush().map_err(data)
}

fn write_png(path: &Path, doc: &layrev_core::layout::LayoutDoc, classes: &Classes, scale: u32) -> Result<(), CliError> {
    let bitmap = render(doc, &classes.legend, scale).map_err(data)?;
    let bytes = encode_png(&bitmap).map_err(data)?;
    std::fs::write(path, bytes).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn render_cmd(args: RenderArgs, classes: &Classes) -> Result<(), CliError> {
    std::fs::create_dir_all(&args.out_dir).map_err(data)?;
    if args.input.extension().is_some_and(|e| e == "jsonl") {
        let corpus = load_corpus(&args.input, &classes.registry, Split::Test).map_err(data)?;
        for t in corpus.trajectories() {
            let dir = args.out_dir.join(&t.id);
            std::fs::create_dir_all(&dir).map_err(data)?;
            let n = t.last_index();
            let picks: Vec<usize> = match args.stage {
                StageArg::All => (0..=n).collect(),
                StageArg::Initial => vec![0],
                StageArg::Final => vec![n],
            };
            for i in picks {
                write_png(&dir.join(format!("{i:03}.png")), &t.states()[i], classes, args.scale)?;
            }
        }
        Ok(())
    } else {
        let text = std::fs::read_to_string(&args.input).map_err(|e| data(format!("{}: {e}", args.input.display())))?;
        let doc = parse_layout_code(&text, &classes.registry).map_err(data)?;
        let stem = args.input.file_stem().and_then(|s| s.to_str()).unwrap_or("layout");
        write_png(&args.out_dir.join(format!("{stem}.png")), &doc, classes, args.scale)
    }
}

fn serve_cmd(args: ServeArgs, classes: &Classes) -> Result<(), CliError> {
    let mut backends = BackendMap::new();
    backends.insert("heuristic".into(), backend(BackendArg::Heuristic, classes, args.seed)?);
    backends.insert("echo".into(), backend(BackendArg::Echo, classes, args.seed)?);
    if std::env::var_os(crate::remote::ENV_URL).is_some() {
        backends.insert("remote".into(), backend(BackendArg::Remote, classes, args.seed)?);
    }
    let cfg = ServiceConfig {
        data_dir: args.data_dir,
        corpus_dir: args.corpus_dir,
        ttl: Duration::from_secs(args.ttl_secs),
        render_scale: args.scale,
        classes: classes.clone(),
        backends,
    };
    let app = AppState::new(cfg).map_err(data)?;
    let rt = tokio::runtime::Runtime::new().map_err(data)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.listen).await.map_err(|e| CliError::Usage(format!("{}: {e}", args.listen)))?;
        tracing::info!(addr = %args.listen, "serving");
        serve(listener, app, Duration::from_secs(60)).await.map_err(data)
    })
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let classes = load_classes(cli.classes.as_deref()).map_err(|e| CliError::Usage(e.to_string()))?;
    match cli.command {
        Command::Corpus(CorpusCommand::Synth(a)) => synth(a, &classes),
        Command::Corpus(CorpusCommand::StageFid(a)) => stage_fid(a, &classes),
        Command::Sample(a) => sample(a, &classes),
        Command::Chain(a) => chain(a, &classes),
        Command::Eval(a) => eval(a, &classes),
        Command::Render(a) => render_cmd(a, &classes),
        Command::Serve(a) => serve_cmd(a, &classes),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("layrev: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .try_init();
    main_with(std::env::args_os())
}
