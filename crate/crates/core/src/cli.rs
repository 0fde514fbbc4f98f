//! Command-line entry point.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::datasets::{attach_option_sets, load_dataset, Label, Observation, TaskKind};
use crate::evaluation::{
    aggregate, evaluate_all, format_ratio, read_records, write_aggregate_csv, write_aggregate_json, write_plot_data,
    write_records, AggregateReport, SkipReason, VerdictRecord,
};
use crate::extraction::{extract_label, extract_paragraph, extract_word_list};
use crate::inference::{
    GenerationParams, InferenceClient, ModelProfile, Protocol, ResponseCache, RetryPolicy, DEFAULT_PARALLELISM,
};
use crate::mockmodel::{BotKind, KeywordBot, MockServer, Script};
use crate::prompts::{template_catalog, ExplanationKind, MaskToken, PromptConfig};

#[derive(Debug, Parser)]
#[command(name = "faithcheck", version, about = "Self-consistency faithfulness checks for LLM self-explanations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a dataset against a model endpoint.
    Run(Box<RunArgs>),
    /// Recompute aggregates from a verdict records file.
    Report(ReportArgs),
    /// Extract a label, paragraph or word list from a response on stdin.
    Parse(ParseArgs),
    /// Print every prompt template with placeholders.
    DumpTemplates(DumpArgs),
    /// Serve a scripted or synthetic model over HTTP.
    MockServe(MockArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variations {
    /// Objective persona, [REDACTED] mask, explicit target.
    Default,
    /// Six configurations per explanation kind.
    All,
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<String>,
    /// Dataset in JSON-lines ingestion format.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Evaluate only the first N observations.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Comma-separated: counterfactual, feature-attribution, redaction.
    #[arg(long, value_delimiter = ',')]
    pub explanations: Option<Vec<String>>,
    #[arg(long, value_enum)]
    pub variations: Option<Variations>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// chat-completions or raw-generate.
    #[arg(long)]
    pub protocol: Option<String>,
    /// Overrides the model family's system prompt; pass "" for none.
    #[arg(long)]
    pub system_prompt: Option<String>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Disable the response cache.
    #[arg(long)]
    pub no_cache: bool,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub top_k: Option<u32>,
    #[arg(long)]
    pub repetition_penalty: Option<f64>,
    #[arg(long)]
    pub max_new_tokens: Option<u32>,
    /// Samples per prompt; sample i uses seed + i.
    #[arg(long)]
    pub samples: Option<u32>,
    #[arg(long)]
    pub retries: Option<u32>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Seed for building multi-choice option sets.
    #[arg(long)]
    pub option_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// records.jsonl written by `run`.
    pub records: PathBuf,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ParseTarget {
    Label,
    Paragraph,
    Words,
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    #[arg(long = "as", value_enum, default_value = "label")]
    pub target: ParseTarget,
    #[arg(long, default_value = "sentiment")]
    pub task: String,
    /// Comma-separated answer options for multi-choice labels.
    #[arg(long, value_delimiter = ',')]
    pub options: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    /// Print plain text instead of JSON.
    #[arg(long)]
    pub text: bool,
}

#[derive(Debug, Args)]
pub struct MockArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Script JSON file.
    #[arg(long, conflicts_with = "bot")]
    pub script: Option<PathBuf>,
    /// Synthetic sentiment bot: faithful, stubborn or oblivious.
    #[arg(long)]
    pub bot: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub generation: GenerationSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: Option<PathBuf>,
    pub task: Option<String>,
    pub limit: Option<usize>,
    pub option_seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub endpoint: Option<String>,
    pub name: Option<String>,
    pub protocol: Option<String>,
    pub system_prompt: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSection {
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub repetition_penalty: Option<f64>,
    pub top_k: Option<u32>,
    pub seed: Option<u64>,
    pub max_new_tokens: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub explanations: Option<Vec<String>>,
    pub variations: Option<Variations>,
    pub parallelism: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub samples: Option<u32>,
    pub retries: Option<u32>,
    pub timeout_secs: Option<u64>,
}

/// A fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub task: TaskKind,
    pub data: PathBuf,
    pub limit: Option<usize>,
    pub option_seed: u64,
    pub profile: ModelProfile,
    pub params: GenerationParams,
    pub kinds: Vec<(ExplanationKind, Vec<PromptConfig>)>,
    pub parallelism: usize,
    pub cache_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub samples: u32,
    pub retry: RetryPolicy,
    pub timeout: Duration,
}

/// Merges the config file (if any) with flags; flags win.
pub fn resolve_plan(args: &RunArgs) -> Result<RunPlan> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let task_name = args.task.clone().or(file.dataset.task).ok_or_else(|| anyhow!("no task given (use --task)"))?;
    let task: TaskKind = task_name.parse().map_err(|e: String| anyhow!(e))?;
    let data = args.data.clone().or(file.dataset.path).ok_or_else(|| anyhow!("no dataset given (use --data)"))?;

    let endpoint = args.endpoint.clone().or(file.model.endpoint).ok_or_else(|| anyhow!("no endpoint given (use --endpoint)"))?;
    let model = args.model.clone().or(file.model.name).unwrap_or_else(|| "default".to_string());
    let protocol: Protocol = match args.protocol.clone().or(file.model.protocol) {
        Some(p) => p.parse().map_err(|e: String| anyhow!(e))?,
        None => Protocol::default(),
    };
    let mut profile = ModelProfile::for_model(endpoint, model).with_protocol(protocol);
    if let Some(system) = args.system_prompt.clone().or(file.model.system_prompt) {
        profile.system_prompt = (!system.is_empty()).then_some(system);
    }

    let g = file.generation;
    let d = GenerationParams::default();
    let params = GenerationParams {
        temperature: args.temperature.or(g.temperature).unwrap_or(d.temperature),
        top_p: args.top_p.or(g.top_p).unwrap_or(d.top_p),
        repetition_penalty: args.repetition_penalty.or(g.repetition_penalty).unwrap_or(d.repetition_penalty),
        top_k: args.top_k.or(g.top_k).unwrap_or(d.top_k),
        seed: args.seed.or(g.seed).unwrap_or(d.seed),
        max_new_tokens: args.max_new_tokens.or(g.max_new_tokens).unwrap_or(d.max_new_tokens),
    };
    params.validate().map_err(|e| anyhow!("invalid generation parameters: {e}"))?;

    let r = file.run;
    let names = args
        .explanations
        .clone()
        .or(r.explanations)
        .unwrap_or_else(|| ExplanationKind::ALL.iter().map(|k| k.as_str().to_string()).collect());
    let variations = args.variations.or(r.variations).unwrap_or(Variations::Default);
    let mut kinds: Vec<(ExplanationKind, Vec<PromptConfig>)> = Vec::new();
    for name in names {
        let kind: ExplanationKind = name.parse().map_err(|e: String| anyhow!(e))?;
        if kinds.iter().any(|(k, _)| *k == kind) {
            continue;
        }
        let configs = match variations {
            Variations::Default => vec![PromptConfig::default()],
            Variations::All => PromptConfig::variations(kind),
        };
        if kind.is_masking() && configs.iter().any(|c| c.mask_token == MaskToken::None) {
            bail!("{kind} explanations need a mask token");
        }
        kinds.push((kind, configs));
    }
    if kinds.is_empty() {
        bail!("no explanation kinds selected");
    }

    let parallelism = args.parallelism.or(r.parallelism).unwrap_or(DEFAULT_PARALLELISM);
    if parallelism == 0 {
        bail!("parallelism must be at least 1");
    }
    let samples = args.samples.or(r.samples).unwrap_or(1);
    if samples == 0 {
        bail!("samples must be at least 1");
    }
    let cache_dir = if args.no_cache {
        None
    } else {
        Some(args.cache_dir.clone().or(r.cache_dir).unwrap_or_else(|| PathBuf::from(".faithcheck-cache")))
    };
    let mut retry = RetryPolicy::default();
    if let Some(n) = args.retries.or(r.retries) {
        retry.max_retries = n;
    }
    Ok(RunPlan {
        task,
        data,
        limit: args.limit.or(file.dataset.limit),
        option_seed: args.option_seed.or(file.dataset.option_seed).unwrap_or(0),
        profile,
        params,
        kinds,
        parallelism,
        cache_dir,
        output_dir: args.output_dir.clone().or(r.output_dir).unwrap_or_else(|| PathBuf::from("faithcheck-out")),
        samples,
        retry,
        timeout: Duration::from_secs(args.timeout_secs.or(r.timeout_secs).unwrap_or(300)),
    })
}

/// Loads observations, attaching option sets drawn from the whole split
/// before any limit is applied.
pub fn load_observations(plan: &RunPlan) -> Result<Vec<Observation>> {
    let mut observations = load_dataset(&plan.data, plan.task, None)
        .with_context(|| format!("cannot load dataset {}", plan.data.display()))?;
    attach_option_sets(&mut observations, plan.option_seed)?;
    if let Some(limit) = plan.limit {
        observations.truncate(limit);
    }
    Ok(observations)
}

pub fn build_client(plan: &RunPlan) -> Result<InferenceClient> {
    let mut client = InferenceClient::new(plan.profile.clone())
        .with_parallelism(plan.parallelism)
        .with_retry(plan.retry)
        .with_timeout(plan.timeout);
    if let Some(dir) = &plan.cache_dir {
        let cache = ResponseCache::open(dir).with_context(|| format!("cannot open cache dir {}", dir.display()))?;
        client = client.with_cache(cache);
    }
    Ok(client)
}

pub fn write_artifacts(dir: &Path, records: Option<&[VerdictRecord]>, report: &AggregateReport) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    if let Some(records) = records {
        write_records(&dir.join("records.jsonl"), records)?;
    }
    write_aggregate_json(&dir.join("aggregate.json"), report)?;
    write_aggregate_csv(&dir.join("aggregate.csv"), report)?;
    write_plot_data(&dir.join("plot_data.csv"), report)?;
    Ok(())
}

pub fn summary_table(report: &AggregateReport) -> String {
    let mut rows = vec![[
        "task".to_string(),
        "model".to_string(),
        "kind".to_string(),
        "config".to_string(),
        "accuracy".to_string(),
        "faithfulness".to_string(),
        "skipped".to_string(),
    ]];
    for (k, s) in &report.groups {
        let acc = s.accuracy();
        let faith = s.faithfulness();
        rows.push([
            k.task.to_string(),
            k.model.clone(),
            k.kind.to_string(),
            k.config.clone(),
            format!("{} ({}/{})", format_ratio(&acc), acc.numerator, acc.denominator),
            format!("{} ({}/{})", format_ratio(&faith), faith.numerator, faith.denominator),
            s.skipped.values().sum::<u64>().to_string(),
        ]);
    }
    let widths: Vec<usize> = (0..7).map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0)).collect();
    rows.iter()
        .map(|r| {
            r.iter().zip(&widths).map(|(cell, w)| format!("{cell:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Executes a run and writes its artifacts. Returns the records.
pub async fn run(args: &RunArgs) -> Result<Vec<VerdictRecord>> {
    let plan = resolve_plan(args)?;
    let observations = load_observations(&plan)?;
    let client = build_client(&plan)?;
    tracing::info!(observations = observations.len(), endpoint = %plan.profile.endpoint, "starting run");
    let records =
        evaluate_all(&client, plan.params, &observations, &plan.kinds, plan.samples, plan.parallelism.saturating_mul(4)).await;
    tracing::info!(network_calls = client.network_calls(), "run finished");
    let report = aggregate(&records);
    write_artifacts(&plan.output_dir, Some(&records), &report)?;
    println!("{}", summary_table(&report));
    if !records.is_empty() && records.iter().all(|r| r.skip_reason == Some(SkipReason::InferenceError)) {
        let first = records.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        bail!("every request failed; is the endpoint {} reachable? first error: {first}", plan.profile.endpoint);
    }
    Ok(records)
}

pub fn report(args: &ReportArgs) -> Result<AggregateReport> {
    let records = read_records(&args.records)?;
    let report = aggregate(&records);
    let dir = match &args.output_dir {
        Some(d) => d.clone(),
        None => args.records.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    write_artifacts(&dir, None, &report)?;
    println!("{}", summary_table(&report));
    Ok(report)
}

pub fn parse(args: &ParseArgs, input: &str) -> Result<String> {
    let value = match args.target {
        ParseTarget::Paragraph => serde_json::to_value(extract_paragraph(input))?,
        ParseTarget::Words => serde_json::to_value(extract_word_list(input))?,
        ParseTarget::Label => {
            let task: TaskKind = args.task.parse().map_err(|e: String| anyhow!(e))?;
            let obs = match task {
                TaskKind::Sentiment => Observation::sentiment("stdin", "", Label::Unknown),
                TaskKind::Nli => Observation::nli("stdin", "", "", Label::Unknown),
                TaskKind::QaMultichoice => {
                    let options = args.options.clone().ok_or_else(|| anyhow!("multi-choice labels need --options"))?;
                    Observation::multichoice("stdin", "", "", Some(options), "")
                }
            };
            serde_json::to_value(extract_label(input, &obs))?
        }
    };
    Ok(serde_json::to_string_pretty(&value)?)
}

pub fn dump_templates(args: &DumpArgs) -> Result<String> {
    let catalog = template_catalog();
    if !args.text {
        return Ok(serde_json::to_string_pretty(&catalog)?);
    }
    let mut out = String::new();
    for e in catalog {
        let mut title = format!("## {} / {} / {}", e.task, e.prompt, e.persona.as_str());
        if let Some(m) = e.mask_token {
            title.push_str(&format!(" / {}", m.as_str()));
        }
        if let Some(t) = e.cf_target {
            title.push_str(&format!(" / {}", t.as_str()));
        }
        out.push_str(&format!("{title}\n{}\n\n", e.text));
    }
    Ok(out)
}

pub async fn mock_serve(args: &MockArgs) -> Result<()> {
    let server = match (&args.script, &args.bot) {
        (Some(path), _) => MockServer::start(Script::load(path)?, args.port).await,
        (None, Some(bot)) => {
            let kind: BotKind = bot.parse().map_err(|e: String| anyhow!(e))?;
            MockServer::start(KeywordBot::new(kind), args.port).await
        }
        (None, None) => bail!("mock-serve needs --script or --bot"),
    }
    .with_context(|| format!("cannot bind port {}", args.port))?;
    eprintln!("mock model listening on {}", server.url());
    server.wait().await;
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub async fn main_with(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Run(args) => run(&args).await.map(|_| ()),
        Command::Report(args) => report(&args).map(|_| ()),
        Command::Parse(args) => {
            let mut input = String::new();
            std::io::stdin().read_to_string(&mut input).map_err(anyhow::Error::from).and_then(|_| parse(&args, &input)).map(|s| println!("{s}"))
        }
        Command::DumpTemplates(args) => dump_templates(&args).map(|s| print!("{s}")),
        Command::MockServe(args) => mock_serve(&args).await,
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

