//! The `synapseroute` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use synapseroute_core::ait::scenario_presets;
use synapseroute_core::bootstrap::{DEFAULT_CONFIDENCE, DEFAULT_ITERATIONS};
use synapseroute_core::classifier::TrainConfig;
use synapseroute_core::domain::{LabeledQuestion, ModeKind, QuestionRecord, Source};
use synapseroute_core::evaluate::{evaluate_modes, EvalOptions, EvalReport, ModeLogRecord};
use synapseroute_core::label::LabelingStats;
use synapseroute_core::sim::{sim_from_distribution, SimProfile};
use synapseroute_core::split::stratified_sample;

use crate::backend::{infer, ChatBackend, HttpBackend, SimBackend};
use crate::config::{EmbeddingProvider, Settings, SimulatorSettings};
use crate::gateway::{serve, RouterService, TelemetryRecord, TelemetrySink};
use crate::jsonl::{existing_ids, read_json, read_jsonl, read_jsonl_lenient, write_json, write_jsonl, JsonlAppender};
use crate::labeler::{run_labeling_pipeline, LabelOptions};
use crate::training::{load_model, save_model, train_router, TrainOptions};

pub const SIM_QUESTIONS_FILE: &str = "questions.jsonl";
pub const SIM_PROFILE_FILE: &str = "profile.json";

#[derive(Debug, Parser)]
#[command(name = "synapseroute", version, about = "Route queries between thinking and non-thinking modes")]
pub struct Cli {
    /// Settings file (TOML, or JSON by extension).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Emit logs as JSON lines.
    #[arg(long, global = true)]
    pub json_logs: bool,
    /// Seed for stochastic steps; a random seed is drawn and logged if omitted.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Standardize a raw dataset file into question records.
    Ingest(IngestArgs),
    /// Draw a source-stratified sample of question records.
    Sample(SampleArgs),
    /// Generate a synthetic corpus and its simulator profile.
    Simulate(SimulateArgs),
    /// Probe questions in both modes and label them.
    Label(LabelArgs),
    /// Train the router on labeled questions.
    Train(TrainArgs),
    /// Run questions through one mode (or the router) and log the outcomes.
    Replay(ReplayArgs),
    /// Compare per-question logs of the three modes.
    Eval(EvalArgs),
    /// Start the routing gateway.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub source: Source,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: usize,
    /// Fractions of non-thinking-only, thinking-only and fail questions.
    #[arg(long, value_delimiter = ',', default_value = "0.5775,0.3474,0.0751")]
    pub dist: Vec<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Backend and embedding overrides shared by several subcommands.
#[derive(Debug, Args, Default)]
pub struct BackendArgs {
    /// Use the simulator corpus in this directory instead of an HTTP backend.
    #[arg(long)]
    pub sim: Option<PathBuf>,
    #[arg(long)]
    pub backend_url: Option<String>,
    #[arg(long)]
    pub embed_provider: Option<EmbeddingProvider>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub embed_cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub questions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Skip questions already present in `--out`.
    #[arg(long)]
    pub resume: bool,
    #[arg(long, default_value_t = 4)]
    pub parallelism: usize,
    /// Write labeling statistics here.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub labeled: PathBuf,
    /// Model artifact path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub l2: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// Write the training report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the held-out test questions here.
    #[arg(long)]
    pub test_out: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub questions: PathBuf,
    /// `thinking`, `non_thinking` or `dynamic`.
    #[arg(long)]
    pub mode: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Router model for `dynamic`; defaults to the configured model path.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub parallelism: usize,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub non_thinking: PathBuf,
    #[arg(long)]
    pub thinking: PathBuf,
    /// Per-question log or gateway telemetry of the routed run.
    #[arg(long)]
    pub dynamic: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ITERATIONS)]
    pub iterations: usize,
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
    pub confidence: f64,
    /// JSON report path; printed to stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a flat CSV table.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub telemetry: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

fn init_logging(json: bool) {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let builder = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr);
    let _ = if json { builder.json().try_init() } else { builder.try_init() };
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        tracing::info!(seed = s, "no --seed given, drew one");
        s
    })
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().context("starting async runtime")
}

/// Parses `argv` and runs the command. Exit code 0 on success, 1 on usage
/// errors and 2 on runtime failures.
pub fn run<I, T>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    init_logging(cli.json_logs);
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = error_chain(&e);
            tracing::error!("{msg}");
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Joins the cause chain, skipping causes a parent message already quotes.
fn error_chain(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

pub fn execute(cli: Cli) -> Result<()> {
    let mut settings = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Sample(a) => sample(a, resolve_seed(cli.seed)),
        Command::Simulate(a) => simulate(a, resolve_seed(cli.seed)),
        Command::Label(a) => {
            apply_backend_args(&mut settings, &a.backend)?;
            runtime()?.block_on(label(a, &settings))
        }
        Command::Train(a) => {
            apply_backend_args(&mut settings, &a.backend)?;
            let seed = resolve_seed(cli.seed);
            runtime()?.block_on(train(a, &settings, seed))
        }
        Command::Replay(a) => {
            apply_backend_args(&mut settings, &a.backend)?;
            runtime()?.block_on(replay(a, &settings))
        }
        Command::Eval(a) => eval(a, resolve_seed(cli.seed)),
        Command::Serve(a) => {
            apply_backend_args(&mut settings, &a.backend)?;
            if let Some(m) = &a.model {
                settings.gateway.model_path = m.clone();
            }
            if let Some(t) = a.threshold {
                settings.gateway.threshold_override = Some(t);
            }
            if let Some(p) = &a.telemetry {
                settings.gateway.telemetry_path = p.clone();
            }
            let mut listen = settings.gateway.listen.clone();
            if a.host.is_some() || a.port.is_some() {
                let (host, port) = listen.rsplit_once(':').unwrap_or(("127.0.0.1", "8080"));
                let host = a.host.clone().unwrap_or_else(|| host.to_string());
                let port = a.port.map_or_else(|| port.to_string(), |p| p.to_string());
                listen = format!("{host}:{port}");
            }
            settings.gateway.listen = listen;
            settings.validate()?;
            runtime()?.block_on(serve_gateway(&settings))
        }
    }
}

fn apply_backend_args(settings: &mut Settings, args: &BackendArgs) -> Result<()> {
    if let Some(dir) = &args.sim {
        settings.gateway.simulator =
            Some(SimulatorSettings { questions: dir.join(SIM_QUESTIONS_FILE), profile: dir.join(SIM_PROFILE_FILE) });
    }
    if let Some(u) = &args.backend_url {
        settings.backend.endpoint_url = u.clone();
    }
    if let Some(p) = args.embed_provider {
        settings.embedding.provider = p;
    }
    if let Some(d) = args.embed_dim {
        settings.embedding.dim = d;
    }
    if let Some(c) = &args.embed_cache {
        settings.embedding.cache_path = Some(c.clone());
    }
    settings.validate()?;
    Ok(())
}

fn build_backend(settings: &Settings) -> Result<Arc<dyn ChatBackend>> {
    match &settings.gateway.simulator {
        Some(sim) => {
            let questions: Vec<QuestionRecord> = read_jsonl(&sim.questions)?;
            let profile: SimProfile = read_json(&sim.profile)?;
            Ok(Arc::new(SimBackend::new(&questions, profile)))
        }
        None => Ok(Arc::new(HttpBackend::new(settings.backend.clone())?)),
    }
}

fn ingest(a: IngestArgs) -> Result<()> {
    let report = crate::ingest::ingest_file(a.source, &a.input)?;
    for e in &report.rejected {
        tracing::warn!(error = %e, "rejected record");
    }
    write_jsonl(&a.out, &report.records)?;
    tracing::info!(kept = report.records.len(), rejected = report.rejected.len(), out = %a.out.display(), "ingested");
    Ok(())
}

fn sample(a: SampleArgs, seed: u64) -> Result<()> {
    let questions: Vec<QuestionRecord> = read_jsonl(&a.input)?;
    let picked = stratified_sample(questions, |q| q.source, a.n, seed)?;
    write_jsonl(&a.out, &picked)?;
    tracing::info!(n = picked.len(), seed, "sampled");
    Ok(())
}

fn simulate(a: SimulateArgs, seed: u64) -> Result<()> {
    if a.dist.len() != 3 {
        bail!("--dist takes three comma-separated fractions, got {}", a.dist.len());
    }
    let corpus = sim_from_distribution(a.n, a.dist[0], a.dist[1], a.dist[2], seed)?;
    write_jsonl(&a.out.join(SIM_QUESTIONS_FILE), &corpus.questions)?;
    write_json(&a.out.join(SIM_PROFILE_FILE), &corpus.profile)?;
    tracing::info!(n = a.n, seed, classes = ?corpus.class_counts(), "simulated corpus written");
    Ok(())
}

async fn label(a: LabelArgs, settings: &Settings) -> Result<()> {
    let mut questions: Vec<QuestionRecord> = read_jsonl(&a.questions)?;
    let mut sink = if a.resume {
        // Rewrite what parses so a torn final line does not poison appends.
        let kept: Vec<LabeledQuestion> = read_jsonl_lenient(&a.out)?;
        write_jsonl(&a.out, &kept)?;
        let done = existing_ids(&a.out, "id")?;
        questions.retain(|q| !done.contains(&q.id));
        tracing::info!(already = done.len(), remaining = questions.len(), "resuming");
        JsonlAppender::open(&a.out)?
    } else {
        JsonlAppender::create(&a.out)?
    };
    let backend = build_backend(settings)?;
    let options = LabelOptions { parallelism: a.parallelism, ..Default::default() };
    let run = run_labeling_pipeline(&questions, backend.as_ref(), &settings.backend, options, Some(&mut sink)).await?;
    for (id, e) in &run.skipped {
        tracing::warn!(question = %id, error = %e, "skipped");
    }
    let all: Vec<LabeledQuestion> = read_jsonl(&a.out)?;
    let stats = LabelingStats::compute(&all);
    tracing::info!(total = stats.total, thinking = stats.counts.thinking, non_thinking = stats.counts.non_thinking, fail = stats.counts.fail, "labeled");
    if let Some(p) = &a.stats {
        write_json(p, &stats)?;
    }
    Ok(())
}

async fn train(a: TrainArgs, settings: &Settings, seed: u64) -> Result<()> {
    let labeled: Vec<LabeledQuestion> = read_jsonl(&a.labeled)?;
    let embedder = settings.embedding.build()?;
    let options = TrainOptions {
        config: TrainConfig { l2_lambda: a.l2, max_iters: a.max_iters, seed, ..Default::default() },
        max_in_flight: settings.embedding.max_in_flight,
        ..Default::default()
    };
    options.config.validate()?;
    let out = train_router(labeled, &embedder, &options).await?;
    save_model(&out.model, &a.out)?;
    if let Some(p) = &a.report {
        write_json(p, &out.report)?;
    }
    if let Some(p) = &a.test_out {
        let test: Vec<&QuestionRecord> = out.test.iter().map(|l| &l.question).collect();
        write_jsonl(p, &test)?;
    }
    tracing::info!(threshold = out.model.threshold, test = ?out.report.test, out = %a.out.display(), "trained");
    Ok(())
}

async fn replay(a: ReplayArgs, settings: &Settings) -> Result<()> {
    use futures::{StreamExt, TryStreamExt};

    let questions: Vec<QuestionRecord> = read_jsonl(&a.questions)?;
    let backend = build_backend(settings)?;
    let logs: Vec<ModeLogRecord> = if a.mode == "dynamic" {
        let model = load_model(a.model.as_deref().unwrap_or(&settings.gateway.model_path))?;
        let embedder = Arc::new(settings.embedding.build()?);
        let service = RouterService::new(model, embedder, backend, settings.backend.clone())
            .with_threshold_override(settings.gateway.threshold_override)?
            .with_fallback_mode(settings.gateway.fallback_mode);
        let service = &service;
        futures::stream::iter(questions.iter().map(|q| async move {
            let routed = service.route_question(q).await?;
            Ok::<_, anyhow::Error>(ModeLogRecord::from_outcome(q.id.clone(), Some(q.gold), &routed.outcome))
        }))
        .buffered(a.parallelism.max(1))
        .try_collect()
        .await?
    } else {
        let mode: ModeKind = a.mode.parse()?;
        let backend = backend.as_ref();
        futures::stream::iter(questions.iter().map(|q| async move {
            let outcome = infer(backend, q, mode, &settings.backend).await?;
            Ok::<_, anyhow::Error>(ModeLogRecord::from_outcome(q.id.clone(), Some(q.gold), &outcome))
        }))
        .buffered(a.parallelism.max(1))
        .try_collect()
        .await?
    };
    write_jsonl(&a.out, &logs)?;
    tracing::info!(n = logs.len(), mode = %a.mode, "replayed");
    Ok(())
}

/// Reads a per-question log, accepting gateway telemetry lines as well.
pub fn read_mode_log(path: &Path) -> Result<Vec<ModeLogRecord>> {
    let rows: Vec<Value> = read_jsonl(path)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, v)| {
            let parsed = if v.get("chosen_mode").is_some() {
                serde_json::from_value::<TelemetryRecord>(v).map(|t| t.to_mode_log())
            } else {
                serde_json::from_value::<ModeLogRecord>(v)
            };
            parsed.with_context(|| format!("{}: line {}", path.display(), i + 1))
        })
        .collect()
}

pub fn eval_csv(report: &EvalReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "mode",
        "scenario",
        "ait_mean",
        "ci_low",
        "ci_high",
        "margin",
        "accuracy",
        "macro_f1",
        "weighted_f1",
        "mean_tokens",
        "mean_latency_ms",
        "thinking_share",
    ])?;
    for m in &report.modes {
        for s in &m.ait {
            w.write_record([
                m.name.clone(),
                s.scenario.name.clone(),
                s.ait.mean.to_string(),
                s.ait.ci_low.to_string(),
                s.ait.ci_high.to_string(),
                s.ait.margin.to_string(),
                m.metrics.accuracy.to_string(),
                m.metrics.macro_f1.to_string(),
                m.metrics.weighted_f1.to_string(),
                m.mean_tokens.to_string(),
                m.mean_latency_ms.to_string(),
                m.thinking_share.to_string(),
            ])?;
        }
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn eval(a: EvalArgs, seed: u64) -> Result<()> {
    let nt = read_mode_log(&a.non_thinking)?;
    let t = read_mode_log(&a.thinking)?;
    let d = read_mode_log(&a.dynamic)?;
    let options = EvalOptions { iterations: a.iterations, confidence: a.confidence, seed, scenarios: scenario_presets() };
    let report = evaluate_modes(&nt, &t, &d, &options)?;
    match &a.out {
        Some(p) => write_json(p, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    if let Some(p) = &a.csv {
        std::fs::write(p, eval_csv(&report)?).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

async fn serve_gateway(settings: &Settings) -> Result<()> {
    let model = load_model(&settings.gateway.model_path)?;
    let embedder = Arc::new(settings.embedding.build()?);
    if model.dim != embedder.dim() {
        bail!("model has dimension {} but the embedder produces {}", model.dim, embedder.dim());
    }
    let backend = build_backend(settings)?;
    let service = RouterService::new(model, embedder, backend, settings.backend.clone())
        .with_threshold_override(settings.gateway.threshold_override)?
        .with_fallback_mode(settings.gateway.fallback_mode)
        .with_telemetry(TelemetrySink::open(&settings.gateway.telemetry_path)?);
    let listener = tokio::net::TcpListener::bind(&settings.gateway.listen)
        .await
        .with_context(|| format!("binding {}", settings.gateway.listen))?;
    tracing::info!(addr = %listener.local_addr()?, threshold = service.threshold(), "gateway listening");
    let service = Arc::new(service);
    serve(listener, service.clone(), async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    if let Some(t) = service.telemetry() {
        t.flush()?;
    }
    Ok(())
}
