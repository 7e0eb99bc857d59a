//! Batch driver for the unconventionality pipeline.
//!
//! Each subcommand reads file artifacts and writes a directory of new ones
//! plus a `manifest.json`, so stages can be rerun independently. Failures
//! surface as a [`CliError`], printed by the binary as one JSON object on
//! stderr with a stable code and exit status.

use std::fmt;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use unconv_core::cooccur::{build_cumulative, CooccurError};
use unconv_core::corpus::{filter_scoreable, parse_corpus, write_corpus, write_error_report, CorpusError, CorpusFilter, PatentApplication};
use unconv_core::metrics::{assignment_observations, lost_value_report, over_assignment_report, reassignment_report, MetricsError};
use unconv_core::nullmodel::{NullModelError, ZSnapshot};
use unconv_core::scoring::{read_scores, score_corpus, write_scores, Aggregation, ScoringError, SnapshotSet, TimingPolicy};
use unconv_core::stats::StatsError;
use unconv_core::synth::{synth_corpus, SynthError, SynthParams};

pub mod analysis;
pub mod config;
pub mod manifest;

use config::{require_exists, GenderSettings, RunConfig};
use manifest::{ArtifactWriter, Manifest};

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const SCORES_FILE: &str = "scores.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    Usage,
    ConfigInvalid,
    InputInvalid,
    SnapshotMissing,
    NullModelFailed,
    AnalysisFailed,
    IoError,
    Internal,
}

impl ErrorCode {
    pub fn exit_status(self) -> i32 {
        match self {
            ErrorCode::SnapshotMissing => 2,
            ErrorCode::ConfigInvalid => 3,
            ErrorCode::InputInvalid => 4,
            ErrorCode::NullModelFailed => 5,
            ErrorCode::AnalysisFailed => 6,
            ErrorCode::IoError => 7,
            ErrorCode::Usage => 64,
            ErrorCode::Internal => 70,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Usage => "USAGE",
            ErrorCode::ConfigInvalid => "CONFIG_INVALID",
            ErrorCode::InputInvalid => "INPUT_INVALID",
            ErrorCode::SnapshotMissing => "SNAPSHOT_MISSING",
            ErrorCode::NullModelFailed => "NULL_MODEL_FAILED",
            ErrorCode::AnalysisFailed => "ANALYSIS_FAILED",
            ErrorCode::IoError => "IO_ERROR",
            ErrorCode::Internal => "INTERNAL",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
#[error("{code}: {message}")]
pub struct CliError {
    pub code: ErrorCode,
    pub message: String,
}

impl CliError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new(ErrorCode::IoError, format!("{}: {e}", path.display()))
    }

    pub fn config(message: String) -> Self {
        Self::new(ErrorCode::ConfigInvalid, message)
    }

    pub fn input(message: String) -> Self {
        Self::new(ErrorCode::InputInvalid, message)
    }

    pub fn analysis(message: String) -> Self {
        Self::new(ErrorCode::AnalysisFailed, message)
    }

    pub fn internal(message: String) -> Self {
        Self::new(ErrorCode::Internal, message)
    }

    pub fn exit_status(&self) -> i32 {
        self.code.exit_status()
    }

    pub fn to_json(&self) -> String {
        json!({
            "error": {
                "code": self.code.as_str(),
                "exit_status": self.exit_status(),
                "message": self.message,
            }
        })
        .to_string()
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<CooccurError> for CliError {
    fn from(e: CooccurError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<NullModelError> for CliError {
    fn from(e: NullModelError) -> Self {
        match e {
            NullModelError::Io(_) | NullModelError::Snapshot(_) | NullModelError::Csv(_) | NullModelError::Json(_) => {
                CliError::input(e.to_string())
            }
            _ => CliError::new(ErrorCode::NullModelFailed, e.to_string()),
        }
    }
}

impl From<ScoringError> for CliError {
    fn from(e: ScoringError) -> Self {
        match e {
            ScoringError::SnapshotMissing(_) => CliError::new(ErrorCode::SnapshotMissing, e.to_string()),
            _ => CliError::input(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Rate { .. } => CliError::config(e.to_string()),
            _ => CliError::analysis(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::analysis(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::config(e.to_string())
    }
}

/// Inclusive `A:B` year range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct YearRange {
    pub first: i32,
    pub last: i32,
}

impl FromStr for YearRange {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once(':').ok_or_else(|| format!("expected A:B, got {s:?}"))?;
        let first: i32 = a.trim().parse().map_err(|_| format!("bad year {a:?}"))?;
        let last: i32 = b.trim().parse().map_err(|_| format!("bad year {b:?}"))?;
        if first > last {
            return Err(format!("empty year range {s:?}"));
        }
        Ok(YearRange { first, last })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Formula {
    LostValue,
    ReassignmentGain,
    OverAssignment,
}

#[derive(Debug, Parser)]
#[command(name = "unconv", version, about = "Network-based patent unconventionality pipeline")]
pub struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Record the wall-clock time in each manifest.
    #[arg(long, global = true)]
    pub timestamp: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a JSON-Lines corpus and write the accepted records.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Abort on the first rejected line.
        #[arg(long)]
        strict: bool,
    },
    /// Build cumulative networks and null-model z-score snapshots.
    Network {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        years: YearRange,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the configured null-model seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Score applications against the snapshots.
    Score {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        snapshots: Option<PathBuf>,
        #[arg(long)]
        agg: Option<Aggregation>,
        #[arg(long)]
        timing: Option<TimingPolicy>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named recipe from the config (`all` runs every recipe).
    Analyze {
        #[arg(long)]
        recipe: String,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a counterfactual estimator from a parameter file.
    Estimate {
        #[arg(long, value_enum)]
        formula: Formula,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with planted effects.
    Synth {
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Context {
    config: Option<RunConfig>,
    config_bytes: Option<Vec<u8>>,
    timestamp: bool,
}

impl Context {
    fn writer(&self, dir: &Path, command: &str, seed: Option<u64>, params: serde_json::Value) -> Result<ArtifactWriter, CliError> {
        ArtifactWriter::new(dir, command, self.config_bytes.as_deref(), seed, params)
    }

    fn output_dir(&self, flag: Option<PathBuf>, sub: &str) -> Result<PathBuf, CliError> {
        flag.or_else(|| self.config.as_ref()?.output_dir.as_ref().map(|d| d.join(sub)))
            .ok_or_else(|| CliError::config("no --out given and no output_dir configured".into()))
    }

    fn input(&self, flag: Option<PathBuf>, pick: fn(&RunConfig) -> Option<&PathBuf>, what: &str) -> Result<PathBuf, CliError> {
        let p = flag
            .or_else(|| self.config.as_ref().and_then(pick).cloned())
            .ok_or_else(|| CliError::config(format!("no {what} path given")))?;
        require_exists(&p)?;
        Ok(p)
    }

    fn gender(&self) -> GenderSettings {
        self.config.as_ref().map(|c| c.gender.clone()).unwrap_or_default()
    }

    fn seed(&self) -> Option<u64> {
        self.config.as_ref().map(|c| c.master_seed)
    }

    /// Country and subclass-count settings for network building; the year
    /// window is not applied here.
    fn network_filter(&self) -> CorpusFilter {
        let mut f = self.scoring_filter();
        f.min_year = i32::MIN;
        f.max_year = i32::MAX;
        f
    }

    fn scoring_filter(&self) -> CorpusFilter {
        self.config
            .as_ref()
            .and_then(|c| c.filter.clone())
            .unwrap_or_else(|| CorpusFilter::new(i32::MIN, i32::MAX).expect("valid filter"))
    }
}

/// Outcome of a successful command, printed as JSON on stdout.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub command: &'static str,
    pub out: Option<PathBuf>,
    pub manifest: Option<Manifest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<serde_json::Value>,
}

/// Parses arguments, printing help and version the usual way and every
/// other parse failure as a `USAGE` error.
pub fn parse_args<I, T>(args: I) -> Result<Cli, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            e.exit();
        }
        _ => CliError::new(ErrorCode::Usage, e.to_string().trim_end().to_string()),
    })
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    let (config, config_bytes) = match &cli.config {
        Some(p) => {
            let (c, b) = RunConfig::load(p)?;
            (Some(c), Some(b))
        }
        None => (None, None),
    };
    let ctx = Context {
        config,
        config_bytes,
        timestamp: cli.timestamp,
    };
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::internal(e.to_string()))?;
    pool.install(|| dispatch(cli.command, &ctx))
}

fn dispatch(command: Command, ctx: &Context) -> Result<Outcome, CliError> {
    match command {
        Command::Ingest { input, out, strict } => ingest(ctx, &input, &out, strict),
        Command::Network {
            corpus,
            years,
            out,
            seed,
            replicates,
        } => network(ctx, corpus, years, out, seed, replicates),
        Command::Score {
            corpus,
            snapshots,
            agg,
            timing,
            out,
        } => score(ctx, corpus, snapshots, agg, timing, out),
        Command::Analyze {
            recipe,
            corpus,
            scores,
            out,
        } => analyze(ctx, &recipe, corpus, scores, out),
        Command::Estimate { formula, params, out } => estimate(ctx, formula, &params, out),
        Command::Synth { params, seed, out } => synth(ctx, params, seed, out),
    }
}

fn done(command: &'static str, w: ArtifactWriter, ctx: &Context, report: Option<serde_json::Value>) -> Result<Outcome, CliError> {
    let out = w.dir().to_path_buf();
    let manifest = w.finish(ctx.timestamp)?;
    Ok(Outcome {
        command,
        out: Some(out),
        manifest: Some(manifest),
        report,
    })
}

/// Reads `DIR/corpus.jsonl` (or the file itself), rejecting any bad line.
pub fn load_corpus(path: &Path) -> Result<Vec<PatentApplication>, CliError> {
    let file = if path.is_dir() { path.join(CORPUS_FILE) } else { path.to_path_buf() };
    let f = fs::File::open(&file).map_err(|e| CliError::io(&file, e))?;
    let (records, _) = parse_corpus(BufReader::new(f), true)?;
    Ok(records)
}

fn corpus_bytes(records: &[PatentApplication]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_corpus(&mut buf, records)?;
    Ok(buf)
}

fn ingest(ctx: &Context, input: &Path, out: &Path, strict: bool) -> Result<Outcome, CliError> {
    let f = fs::File::open(input).map_err(|e| CliError::io(input, e))?;
    let (records, errors) = parse_corpus(BufReader::new(f), strict)?;
    let mut w = ctx.writer(out, "ingest", ctx.seed(), json!({ "strict": strict }))?;
    w.write(CORPUS_FILE, &corpus_bytes(&records)?)?;
    let mut report = Vec::new();
    write_error_report(&mut report, &errors)?;
    w.write("errors.csv", &report)?;
    let summary = json!({ "accepted": records.len(), "rejected": errors.len() });
    w.write_json("summary.json", &summary)?;
    done("ingest", w, ctx, Some(summary))
}

fn network(
    ctx: &Context,
    corpus: Option<PathBuf>,
    years: YearRange,
    out: Option<PathBuf>,
    seed: Option<u64>,
    replicates: Option<usize>,
) -> Result<Outcome, CliError> {
    let corpus = ctx.input(corpus, |c| c.input.corpus.as_ref(), "corpus")?;
    let out = ctx.output_dir(out, "snapshots")?;
    let seed = seed
        .or_else(|| ctx.config.as_ref().map(RunConfig::null_seed))
        .ok_or_else(|| CliError::config("network needs --seed or a config with master_seed".into()))?;
    let replicates = replicates
        .or_else(|| ctx.config.as_ref().map(|c| c.null_model.replicates))
        .unwrap_or(config::DEFAULT_REPLICATES);

    let records = filter_scoreable(&load_corpus(&corpus)?, &ctx.network_filter());
    let networks = build_cumulative(&records, years.first, years.last)?;
    let params = json!({ "years": years, "replicates": replicates, "null_seed": seed });
    let mut w = ctx.writer(&out, "network", Some(seed), params)?;
    let mut undefined = Vec::new();
    for net in &networks {
        let mut buf = Vec::new();
        net.save(&mut buf)?;
        w.write(&format!("network_{}.csv", net.year_t), &buf)?;
        let snap = ZSnapshot::compute(net, replicates, seed)?;
        let mut buf = Vec::new();
        snap.save(&mut buf)?;
        w.write(&snapshot_file(net.year_t), &buf)?;
        undefined.push(json!({ "year": net.year_t, "pairs": snap.pairs.len(), "undefined_z": snap.undefined_count() }));
    }
    let summary = json!({ "snapshots": undefined });
    w.write_json("summary.json", &summary)?;
    done("network", w, ctx, Some(summary))
}

pub fn snapshot_file(year: i32) -> String {
    format!("zscores_{year}.csv")
}

/// Loads every `zscores_<year>.csv` in `dir`.
pub fn load_snapshots(dir: &Path) -> Result<SnapshotSet, CliError> {
    let mut set = SnapshotSet::new();
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .and_then(|n| n.strip_prefix("zscores_")?.strip_suffix(".csv")?.parse::<i32>().ok())
                .is_some()
        })
        .collect();
    paths.sort();
    for p in paths {
        let f = fs::File::open(&p).map_err(|e| CliError::io(&p, e))?;
        set.insert(ZSnapshot::load(BufReader::new(f))?);
    }
    Ok(set)
}

fn score(
    ctx: &Context,
    corpus: Option<PathBuf>,
    snapshots: Option<PathBuf>,
    agg: Option<Aggregation>,
    timing: Option<TimingPolicy>,
    out: Option<PathBuf>,
) -> Result<Outcome, CliError> {
    let corpus = ctx.input(corpus, |c| c.input.corpus.as_ref(), "corpus")?;
    let snapshots = ctx.input(snapshots, |c| c.input.snapshots.as_ref(), "snapshots")?;
    let out = ctx.output_dir(out, "scores")?;
    let settings = ctx.config.as_ref().map(|c| c.scoring.clone()).unwrap_or_default();
    let agg = agg.unwrap_or(settings.aggregation);
    let timing = timing.unwrap_or(settings.timing);

    let records = filter_scoreable(&load_corpus(&corpus)?, &ctx.scoring_filter());
    let set = load_snapshots(&snapshots)?;
    let scores = score_corpus(&records, &set, timing, agg)?;
    let mut w = ctx.writer(&out, "score", ctx.seed(), json!({ "aggregation": agg, "timing": timing }))?;
    let mut buf = Vec::new();
    write_scores(&mut buf, &scores)?;
    w.write(SCORES_FILE, &buf)?;
    let summary = json!({
        "scored": scores.len(),
        "undefined": scores.iter().filter(|s| s.l.is_none()).count(),
        "excluded_pairs": scores.iter().map(|s| s.n_excluded_pairs).sum::<usize>(),
    });
    w.write_json("summary.json", &summary)?;
    done("score", w, ctx, Some(summary))
}

fn analyze(
    ctx: &Context,
    recipe: &str,
    corpus: Option<PathBuf>,
    scores: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<Outcome, CliError> {
    let cfg = ctx
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("analyze needs --config".into()))?;
    let recipes: Vec<_> = if recipe == "all" {
        cfg.recipes.iter().collect()
    } else {
        vec![cfg.recipe(recipe)?]
    };
    let corpus = ctx.input(corpus, |c| c.input.corpus.as_ref(), "corpus")?;
    let scores = ctx.input(scores, |c| c.input.scores.as_ref(), "scores")?;
    let scores = if scores.is_dir() { scores.join(SCORES_FILE) } else { scores };
    let out = ctx.output_dir(out, "analysis")?;

    let records = load_corpus(&corpus)?;
    let f = fs::File::open(&scores).map_err(|e| CliError::io(&scores, e))?;
    let scores = read_scores(BufReader::new(f))?;
    let gender = ctx.gender();
    let dict = gender.load_dict()?;
    let frame = analysis::analysis_frame(&records, &scores, &dict, &gender)?;

    let mut w = ctx.writer(&out, "analyze", ctx.seed(), json!({ "recipe": recipe }))?;
    for r in recipes {
        analysis::run_recipe(r, &frame, &records, &dict, &gender, &mut w)?;
    }
    done("analyze", w, ctx, None)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LostValueParams {
    n_apps: u64,
    rate_men: f64,
    rate_women: f64,
    per_patent_value: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReassignmentParams {
    rate_high: f64,
    rate_low: f64,
    reassigned_fraction: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OverAssignmentParams {
    /// Corpus directory or file; relative to the parameter file.
    corpus: PathBuf,
}

/// JSON when the extension says so, TOML otherwise.
fn read_params<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn estimate(ctx: &Context, formula: Formula, params: &Path, out: Option<PathBuf>) -> Result<Outcome, CliError> {
    let report = match formula {
        Formula::LostValue => {
            let p: LostValueParams = read_params(params)?;
            lost_value_report(p.n_apps, p.rate_men, p.rate_women, p.per_patent_value)?
        }
        Formula::ReassignmentGain => {
            let p: ReassignmentParams = read_params(params)?;
            reassignment_report(p.rate_high, p.rate_low, p.reassigned_fraction)?
        }
        Formula::OverAssignment => {
            let p: OverAssignmentParams = read_params(params)?;
            let corpus = if p.corpus.is_relative() {
                params.parent().unwrap_or(Path::new(".")).join(p.corpus)
            } else {
                p.corpus
            };
            require_exists(&corpus)?;
            let gender = ctx.gender();
            let dict = gender.load_dict()?;
            let obs = assignment_observations(&load_corpus(&corpus)?, &dict, gender.threshold);
            over_assignment_report(&obs)?
        }
    };
    let value = serde_json::to_value(&report).map_err(|e| CliError::internal(e.to_string()))?;
    let name = serde_json::to_value(formula).expect("serializable");
    let name = name.as_str().expect("string");
    let out = match out {
        Some(o) => Some(o),
        None => ctx.output_dir(None, &format!("estimates/{name}")).ok(),
    };
    let Some(out) = out else {
        return Ok(Outcome {
            command: "estimate",
            out: None,
            manifest: None,
            report: Some(value),
        });
    };
    let param_bytes = fs::read(params).map_err(|e| CliError::io(params, e))?;
    let mut w = ctx.writer(
        &out,
        "estimate",
        ctx.seed(),
        json!({ "formula": formula, "params_sha256": manifest::sha256_hex(&param_bytes) }),
    )?;
    w.write_json(&format!("estimate_{name}.json"), &report)?;
    done("estimate", w, ctx, Some(value))
}

fn synth(ctx: &Context, params: Option<PathBuf>, seed: Option<u64>, out: Option<PathBuf>) -> Result<Outcome, CliError> {
    let p: SynthParams = match &params {
        Some(path) => read_params(path)?,
        None => SynthParams::default(),
    };
    let seed = seed
        .or(ctx.seed())
        .ok_or_else(|| CliError::config("synth needs --seed or a config with master_seed".into()))?;
    let out = ctx.output_dir(out, "synth")?;
    let corpus = synth_corpus(&p, seed)?;
    let mut w = ctx.writer(&out, "synth", Some(seed), json!({ "params": p, "seed": seed }))?;
    w.write(CORPUS_FILE, &corpus_bytes(&corpus.records)?)?;
    let mut latent = String::from("app_id,latent_u\n");
    for (r, u) in corpus.records.iter().zip(&corpus.latent_u) {
        latent.push_str(&format!("{},{}\n", r.app_id, u));
    }
    w.write("latent.csv", latent.as_bytes())?;
    let summary = json!({ "records": corpus.records.len() });
    done("synth", w, ctx, Some(summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn year_range_parsing() {
        assert_eq!("2001:2003".parse::<YearRange>().unwrap(), YearRange { first: 2001, last: 2003 });
        assert!("2003:2001".parse::<YearRange>().is_err());
        assert!("2001".parse::<YearRange>().is_err());
        assert!("a:b".parse::<YearRange>().is_err());
    }

    #[test]
    fn exit_statuses() {
        assert_eq!(ErrorCode::SnapshotMissing.exit_status(), 2);
        let e: CliError = ScoringError::SnapshotMissing(2001).into();
        assert_eq!(e.code, ErrorCode::SnapshotMissing);
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["error"]["code"], "SNAPSHOT_MISSING");
        assert_eq!(v["error"]["exit_status"], 2);
    }

    #[test]
    fn usage_errors_are_structured() {
        let e = parse_args(["unconv", "score", "--agg", "max"]).unwrap_err();
        assert_eq!(e.code, ErrorCode::Usage);
        let e = parse_args(["unconv", "network", "--years", "2003:2001"]).unwrap_err();
        assert_eq!(e.code, ErrorCode::Usage);
    }

    #[test]
    fn parses_spec_flags() {
        let cli = parse_args([
            "unconv", "--threads", "4", "score", "--corpus", "c", "--snapshots", "s", "--agg", "median", "--timing", "same",
        ])
        .unwrap();
        assert_eq!(cli.threads, Some(4));
        match cli.command {
            Command::Score { agg, timing, .. } => {
                assert_eq!(agg, Some(Aggregation::Median));
                assert_eq!(timing, Some(TimingPolicy::Same));
            }
            other => panic!("{other:?}"),
        }
        let cli = parse_args(["unconv", "analyze", "--recipe", "r", "--config", "x.toml"]).unwrap();
        assert_eq!(cli.config.as_deref(), Some(Path::new("x.toml")));
        let cli = parse_args(["unconv", "estimate", "--formula", "reassignment_gain", "--params", "p.toml"]).unwrap();
        assert!(matches!(cli.command, Command::Estimate { formula: Formula::ReassignmentGain, .. }));
    }
}
