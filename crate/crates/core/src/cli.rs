//! The `tvr` command line: generate, score, evaluate, train-toy and
//! compare-rewards.
//!
//! Every command writes its primary output atomically to `--out` and a
//! manifest beside it (`<out>.manifest.json`) holding the effective
//! configuration. Passing that manifest back as `--config` reproduces the
//! output byte for byte.
//!
//! Exit codes: 0 on success, 2 on invalid input, generation spec, variant or a
//! `--strict` violation, 3 on I/O failure.

use crate::config::{ConfigError, RunConfig};
use crate::datagen::{generate_dataset, read_dataset, DatasetError, TvrInstance};
use crate::grpo::{compare_variants, run_training};
use crate::io::{to_jsonl, write_atomic, write_json_pretty};
use crate::metrics::{aggregate, evaluate_sample};
use crate::protocol::parse_response;
use crate::reward::{score_response, MatchTier, RewardVariant, ScoreRecord};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "tvr",
    version,
    about = "Transformation reasoning rewards, metrics and toy GRPO"
)]
pub struct Cli {
    /// Seed for generation and training (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML config, or a manifest from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Primary output path.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset as JSONL.
    Generate(GenerateArgs),
    /// Score responses with the rule-based reward.
    Score(ScoreArgs),
    /// Compute evaluation metrics for responses.
    Evaluate(EvaluateArgs),
    /// Train the toy policy under one reward variant.
    TrainToy(TrainArgs),
    /// Paired-seed comparison of reward variants.
    CompareRewards(CompareArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub min_objects: Option<usize>,
    #[arg(long)]
    pub max_objects: Option<usize>,
    /// Fraction of instances with a left or right final view.
    #[arg(long)]
    pub view_mix: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// JSONL of {"id", "text"}.
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long)]
    pub variant: Option<String>,
    /// Fail when response and dataset ids do not match one to one.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub responses: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Train on the first N instances only.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated variant names.
    #[arg(long)]
    pub variants: Option<String>,
    /// Number of paired seeds.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Exact-answer rate that counts as a hit.
    #[arg(long)]
    pub target: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
    #[error("strict mode: {0}")]
    Strict(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) | CliError::Strict(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            ConfigError::Parse(_) => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

/// Reproducibility record written next to every primary output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub created_unix: u64,
    pub format: Format,
    pub inputs: BTreeMap<String, String>,
    pub output: String,
    pub config: RunConfig,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

#[derive(Debug, Deserialize)]
struct ResponseLine {
    id: String,
    text: String,
}

/// Reads a responses JSONL file into an id-keyed map.
pub fn read_responses(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: ResponseLine = serde_json::from_str(line)
            .map_err(|e| CliError::Invalid(format!("{} line {}: {e}", path.display(), i + 1)))?;
        if out.insert(r.id.clone(), r.text).is_some() {
            return Err(CliError::Invalid(format!(
                "{} line {}: duplicate response id `{}`",
                path.display(),
                i + 1,
                r.id
            )));
        }
    }
    Ok(out)
}

fn parse_variant(name: &str) -> Result<RewardVariant, CliError> {
    name.parse()
        .map_err(|e: crate::reward::RewardError| CliError::Invalid(e.to_string()))
}

struct Ctx {
    cfg: RunConfig,
    format: Format,
    out: PathBuf,
    inputs: BTreeMap<String, String>,
}

impl Ctx {
    fn finish(&self, command: &str, body: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.out, body).map_err(io_err(&self.out))?;
        let manifest = Manifest {
            tool: "tvr".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            format: self.format,
            inputs: self.inputs.clone(),
            output: self.out.display().to_string(),
            config: self.cfg.clone(),
        };
        let path = manifest_path(&self.out);
        write_json_pretty(&path, &manifest).map_err(io_err(&path))?;
        log::info!("wrote {} and {}", self.out.display(), path.display());
        Ok(())
    }

    fn dataset(&self, path: &Path) -> Result<Vec<TvrInstance>, CliError> {
        Ok(read_dataset(path, &self.cfg.vocab)?)
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.generate.seed = seed;
        cfg.grpo.seed = seed;
    }
    let format = cli.format.unwrap_or(Format::Json);
    let default_out = |json: &str, csv: &str| {
        PathBuf::from(match format {
            Format::Json => json,
            Format::Csv => csv,
        })
    };
    let out = cli.out.clone();
    let mut ctx = Ctx {
        cfg,
        format,
        out: PathBuf::new(),
        inputs: BTreeMap::new(),
    };
    match cli.command {
        Command::Generate(a) => {
            ctx.out = out.unwrap_or_else(|| "dataset.jsonl".into());
            cmd_generate(&mut ctx, a)
        }
        Command::Score(a) => {
            ctx.out = out.unwrap_or_else(|| default_out("scores.jsonl", "scores.csv"));
            cmd_score(&mut ctx, a)
        }
        Command::Evaluate(a) => {
            ctx.out = out.unwrap_or_else(|| default_out("report.json", "report.csv"));
            cmd_evaluate(&mut ctx, a)
        }
        Command::TrainToy(a) => {
            ctx.out = out.unwrap_or_else(|| default_out("trace.json", "trace.csv"));
            cmd_train_toy(&mut ctx, a)
        }
        Command::CompareRewards(a) => {
            ctx.out = out.unwrap_or_else(|| default_out("comparison.json", "comparison.csv"));
            cmd_compare_rewards(&mut ctx, a)
        }
    }
}

fn cmd_generate(ctx: &mut Ctx, a: GenerateArgs) -> Result<(), CliError> {
    let g = &mut ctx.cfg.generate;
    if let Some(c) = a.count {
        g.count = c;
    }
    if let Some(lo) = a.min_objects {
        g.object_count_range.0 = lo;
    }
    if let Some(hi) = a.max_objects {
        g.object_count_range.1 = hi;
    }
    if let Some(m) = a.view_mix {
        g.view_mix = m;
    }
    let data = generate_dataset(&ctx.cfg.gen_spec()).map_err(|e| match e {
        DatasetError::Io(_) => CliError::Io(e.to_string()),
        other => CliError::Invalid(other.to_string()),
    })?;
    ctx.finish("generate", to_jsonl(&data).as_bytes())?;

    let mut histogram = [0usize; 4];
    for inst in &data {
        histogram[inst.n_hat() - 1] += 1;
    }
    println!("{} instances", data.len());
    for (k, count) in histogram.iter().enumerate() {
        println!("  length {}: {count}", k + 1);
    }
    Ok(())
}

fn tier_name(t: Option<MatchTier>) -> &'static str {
    match t {
        Some(MatchTier::Full) => "full",
        Some(MatchTier::IndexAttr) => "index_attr",
        Some(MatchTier::Index) => "index",
        None => "none",
    }
}

pub fn scores_to_csv(records: &[ScoreRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "sample_id",
        "r_format",
        "r_pos",
        "r_pun",
        "r_acc",
        "r_total",
        "n",
        "n_hat",
        "n_mis",
        "tiers",
    ])
    .expect("in-memory write");
    for r in records {
        let tiers: Vec<&str> = r.tiers.iter().map(|t| tier_name(*t)).collect();
        w.write_record([
            r.sample_id.clone(),
            r.r_format.to_string(),
            r.r_pos.to_string(),
            r.r_pun.to_string(),
            r.r_acc.to_string(),
            r.r_total.to_string(),
            r.n.to_string(),
            r.n_hat.to_string(),
            r.n_mis.to_string(),
            tiers.join("|"),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn cmd_score(ctx: &mut Ctx, a: ScoreArgs) -> Result<(), CliError> {
    if let Some(v) = &a.variant {
        ctx.cfg.reward = ctx.cfg.reward.with_variant(parse_variant(v)?);
    }
    ctx.cfg
        .reward
        .validate()
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    ctx.inputs
        .insert("data".into(), a.data.display().to_string());
    ctx.inputs
        .insert("responses".into(), a.responses.display().to_string());
    let data = ctx.dataset(&a.data)?;
    let responses = read_responses(&a.responses)?;

    let cfg = &ctx.cfg;
    let records: Vec<ScoreRecord> = data
        .par_iter()
        .map(|inst| {
            let text = responses
                .get(&inst.sample_id)
                .map(String::as_str)
                .unwrap_or("");
            let parsed = parse_response(text, &cfg.vocab);
            score_response(&parsed, inst, &cfg.reward, &cfg.vocab)
                .map(|b| ScoreRecord::new(inst.sample_id.clone(), &b))
                .map_err(|e| CliError::Invalid(format!("{}: {e}", inst.sample_id)))
        })
        .collect::<Result<_, _>>()?;

    let ids: BTreeSet<&str> = data.iter().map(|i| i.sample_id.as_str()).collect();
    let missing = data
        .iter()
        .filter(|i| !responses.contains_key(&i.sample_id))
        .count();
    let mut extra: Vec<&str> = responses
        .keys()
        .map(String::as_str)
        .filter(|id| !ids.contains(id))
        .collect();
    extra.sort_unstable();
    if missing > 0 {
        log::warn!("{missing} instances have no response and were scored as empty");
    }
    if !extra.is_empty() {
        log::warn!("{} responses match no instance", extra.len());
    }

    let body = match ctx.format {
        Format::Json => to_jsonl(&records),
        Format::Csv => scores_to_csv(&records),
    };
    ctx.finish("score", body.as_bytes())?;
    let mean = records.iter().map(|r| r.r_total).sum::<f64>() / records.len().max(1) as f64;
    println!("{} records, mean r_total {mean:.4}", records.len());

    if a.strict && (missing > 0 || !extra.is_empty()) {
        return Err(CliError::Strict(format!(
            "{missing} instances without a response, {} responses without an instance",
            extra.len()
        )));
    }
    Ok(())
}

fn cmd_evaluate(ctx: &mut Ctx, a: EvaluateArgs) -> Result<(), CliError> {
    ctx.inputs
        .insert("data".into(), a.data.display().to_string());
    ctx.inputs
        .insert("responses".into(), a.responses.display().to_string());
    let data = ctx.dataset(&a.data)?;
    let responses = read_responses(&a.responses)?;
    let vocab = &ctx.cfg.vocab;
    let outcomes: Vec<_> = data
        .par_iter()
        .filter_map(|inst| {
            let text = responses.get(&inst.sample_id)?;
            Some(evaluate_sample(inst, &parse_response(text, vocab), vocab))
        })
        .collect();
    if outcomes.is_empty() {
        return Err(CliError::Invalid(
            "no response id matches a dataset id".into(),
        ));
    }
    let report = aggregate(&outcomes).map_err(|e| CliError::Invalid(e.to_string()))?;
    let body = match ctx.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
            s.push('\n');
            s
        }
        Format::Csv => report.to_csv(),
    };
    ctx.finish("evaluate", body.as_bytes())?;
    print!("{}", report.to_csv());
    Ok(())
}

fn cmd_train_toy(ctx: &mut Ctx, a: TrainArgs) -> Result<(), CliError> {
    if let Some(v) = &a.variant {
        ctx.cfg.reward = ctx.cfg.reward.with_variant(parse_variant(v)?);
    }
    if let Some(n) = a.iterations {
        ctx.cfg.grpo.iterations = n;
    }
    if a.limit.is_some() {
        ctx.cfg.train.limit = a.limit;
    }
    ctx.inputs
        .insert("data".into(), a.data.display().to_string());
    let mut data = ctx.dataset(&a.data)?;
    if let Some(n) = ctx.cfg.train.limit {
        data.truncate(n);
    }
    let cfg = &ctx.cfg;
    let trace = run_training(&data, &cfg.reward, &cfg.grpo, &cfg.vocab)
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    let body = match ctx.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&trace).expect("trace serializes");
            s.push('\n');
            s
        }
        Format::Csv => trace.to_csv(),
    };
    ctx.finish("train-toy", body.as_bytes())?;
    let last = trace.final_row();
    println!(
        "{} after {} iterations: exact rate {:.4}, mean reward {:.4}, mean length {:.3}",
        trace.variant, last.iteration, last.exact_rate, last.mean_reward, last.mean_pred_len
    );
    Ok(())
}

fn cmd_compare_rewards(ctx: &mut Ctx, a: CompareArgs) -> Result<(), CliError> {
    if let Some(list) = &a.variants {
        ctx.cfg.compare.variants = list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(parse_variant)
            .collect::<Result<_, _>>()?;
    }
    if let Some(n) = a.seeds {
        ctx.cfg.compare.seeds = n;
    }
    if let Some(n) = a.iterations {
        ctx.cfg.grpo.iterations = n;
    }
    if let Some(t) = a.target {
        ctx.cfg.compare.target_exact_rate = t;
    }
    ctx.inputs
        .insert("data".into(), a.data.display().to_string());
    let data = ctx.dataset(&a.data)?;
    let cfg = &ctx.cfg;
    if cfg.compare.variants.is_empty() || cfg.compare.seeds == 0 {
        return Err(CliError::Invalid(
            "need at least one variant and one seed".into(),
        ));
    }
    let seeds: Vec<u64> = (0..cfg.compare.seeds as u64)
        .map(|i| cfg.grpo.seed + i)
        .collect();
    let cmp = compare_variants(
        &data,
        &cfg.compare.variants,
        &cfg.grpo,
        &seeds,
        cfg.compare.target_exact_rate,
        &cfg.vocab,
    )
    .map_err(|e| CliError::Invalid(e.to_string()))?;
    let body = match ctx.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&cmp).expect("comparison serializes");
            s.push('\n');
            s
        }
        Format::Csv => cmp.to_csv(),
    };
    ctx.finish("compare-rewards", body.as_bytes())?;
    print!("{}", cmp.to_csv());
    Ok(())
}

/// Initializes logging from `TVR_LOG` (error, warn, info, debug).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("TVR_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}
