//! Command-line entry point. Every stage reads and writes files so any
//! step can be rerun or inspected on its own; `pipeline` chains the same
//! stage functions.
//!
//! Exit codes: 0 success, 1 input error (including usage), 2 endpoint failure.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{
    fit_lda, fit_logistic, Classifier, LogisticHyper, ModelDocument, NativeModel, Prediction,
    Standardizer,
};
use crate::chat::{extract_participant_text, parse_document, CleanTranscript};
use crate::corpus::{load_manifest, resolve, split, validate, Corpus, Label, Split, SplitPolicy};
use crate::cue::{analyze, cue_coverage, tokenize, Analysis, CueLexicon, FEATURE_NAMES};
use crate::eval::{confuse, metrics, render_csv, render_report, ConfusionMatrix, Metrics};
use crate::gateway::{
    classify_all, CompletionRecord, EndpointConfig, GatewayError, HttpTransport, MockRule,
    MockServer, MockServerOptions, MockTransport, Transport,
};
use crate::io::{read_jsonl, write_atomic, write_jsonl};
use crate::prompt::{
    build_prompt, select_exemplars, Exemplar, PromptBundle, PromptMode, TemplateSet,
};
use crate::synth::{generate, SynthConfig};

pub const DEFAULT_SEED: u64 = 1;
const VERSION: &str = env!("CARGO_PKG_VERSION");
const MODULES: [&str; 9] = [
    "chat_parser",
    "cue_analyzer",
    "prompt_compiler",
    "corpus_manager",
    "synth_generator",
    "baseline_models",
    "llm_gateway",
    "evaluator",
    "cli",
];

#[derive(Debug, Parser)]
#[command(
    name = "cuescreen",
    version,
    about = "Cue-coverage screening of picture-description transcripts"
)]
struct Cli {
    /// Where to write the run manifest (default: next to the output).
    #[arg(long, global = true)]
    run_manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// CHAT files (a .cha file, a directory, or a manifest) to transcripts JSONL
    Parse(ParseArgs),
    /// Transcripts JSONL to cue reports and features JSONL
    Analyze(AnalyzeArgs),
    /// Assign train/test splits to a manifest
    Split(SplitArgs),
    /// Build prompt bundles for the test split
    Prompt(PromptArgs),
    /// Send bundles to an endpoint and collect predictions
    Classify(ClassifyArgs),
    /// Fit a native model on the train split and predict the test split
    Baseline(BaselineArgs),
    /// Generate a synthetic corpus with a ground-truth log
    Synth(SynthArgs),
    /// Score predictions against a split manifest
    Eval(EvalArgs),
    /// Run every stage against a manifest
    Pipeline(PipelineArgs),
    /// Serve the mock endpoint over HTTP
    MockServer(MockServerArgs),
}

#[derive(Debug, Args, Serialize)]
struct ParseArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value = "PAR")]
    speaker: String,
}

#[derive(Debug, Args, Serialize)]
struct AnalyzeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Lexicon file (one comma-separated `lemma,variant,...` line per entry)
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Split TSV path (default: output with a .tsv extension)
    #[arg(long)]
    tsv: Option<PathBuf>,
    /// `TRAIN:TEST[:strat|nostrat]`; default keeps the 108:48 proportion
    #[arg(long)]
    split_policy: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct PromptArgs {
    /// Transcripts JSONL
    #[arg(long)]
    input: PathBuf,
    /// Manifest with splits assigned
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_parser = parse_mode)]
    mode: PromptMode,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Template directory (default: built-in templates)
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum EndpointKind {
    Mock,
    External,
}

#[derive(Debug, Args, Serialize)]
struct EndpointArgs {
    #[arg(long, value_enum, default_value_t = EndpointKind::Mock)]
    endpoint: EndpointKind,
    #[arg(long, default_value = "http://127.0.0.1:8080/v1")]
    base_url: String,
    #[arg(long, default_value = "mock")]
    model: String,
    /// Environment variable holding the API key
    #[arg(long)]
    api_key_env: Option<String>,
    /// Mock decision threshold on cue proportion
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    #[arg(long, default_value_t = 3)]
    max_retries: u32,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    #[arg(long, default_value_t = 512)]
    max_output_tokens: u32,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
}

impl EndpointArgs {
    fn config(&self) -> EndpointConfig {
        EndpointConfig {
            base_url: self.base_url.clone(),
            model_name: self.model.clone(),
            api_key_env: self.api_key_env.clone(),
            timeout_secs: self.timeout,
            max_retries: self.max_retries,
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
            max_in_flight: self.max_in_flight,
            ..Default::default()
        }
    }

    fn transport(&self) -> Result<Box<dyn Transport>, CliError> {
        match self.endpoint {
            EndpointKind::Mock => Ok(Box::new(MockTransport::new(MockRule::with_threshold(
                self.threshold,
            )))),
            EndpointKind::External => Ok(Box::new(
                HttpTransport::new(&self.config()).map_err(CliError::from)?,
            )),
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct ClassifyArgs {
    /// Bundles JSONL
    #[arg(long)]
    input: PathBuf,
    /// Predictions JSONL
    #[arg(long)]
    output: PathBuf,
    /// Completion log (default: output with a .completions.jsonl suffix)
    #[arg(long)]
    completions: Option<PathBuf>,
    #[command(flatten)]
    endpoint: EndpointArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum BaselineKind {
    Lda,
    Logistic,
}

#[derive(Debug, Args, Serialize)]
struct BaselineArgs {
    /// Analysis JSONL
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Predictions JSONL for the test split
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = BaselineKind::Lda)]
    kind: BaselineKind,
    /// Save the fitted model document here
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Predict with a saved model instead of fitting
    #[arg(long, conflicts_with = "model_out")]
    model_in: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    l2: f64,
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    /// Participants per class
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0.35)]
    p_cue_ad: f64,
    #[arg(long, default_value_t = 0.80)]
    p_cue_non_ad: f64,
    #[arg(long, default_value_t = 1.5)]
    disfluency_ad: f64,
    #[arg(long, default_value_t = 0.5)]
    disfluency_non_ad: f64,
    #[arg(long, default_value_t = 60)]
    mean_tokens: usize,
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    /// Predictions as `NAME=PATH` (or `PATH`, named by file stem); repeatable
    #[arg(long, required = true)]
    input: Vec<String>,
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for metrics.json, report.txt and report.csv
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct PipelineArgs {
    /// Corpus manifest JSONL
    #[arg(long)]
    input: PathBuf,
    /// Output directory
    #[arg(long)]
    output: PathBuf,
    /// Prompt modes to run; repeatable (default: all three)
    #[arg(long, value_parser = parse_mode)]
    mode: Vec<PromptMode>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Re-split even if the manifest already has splits
    #[arg(long)]
    split_policy: Option<String>,
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value = "PAR")]
    speaker: String,
    #[arg(long, value_enum, default_value_t = BaselineKind::Lda)]
    baseline: BaselineKind,
    #[command(flatten)]
    endpoint: EndpointArgs,
}

#[derive(Debug, Args, Serialize)]
struct MockServerArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Require `Authorization: Bearer $VAR` on every request
    #[arg(long)]
    require_key_env: Option<String>,
}

fn parse_mode(s: &str) -> Result<PromptMode, String> {
    s.parse()
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Endpoint(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Endpoint(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Endpoint(m) => m,
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::MalformedBundle | GatewayError::Config(_) => {
                CliError::Input(e.to_string())
            }
            other => CliError::Endpoint(other.to_string()),
        }
    }
}

fn fail<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Input(format!("{context}: {e}"))
}

/// One `prompt` output record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleRecord {
    pub participant_id: String,
    pub template_version: String,
    pub bundle: PromptBundle,
}

/// One row of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

#[derive(Debug, Serialize)]
struct Timing {
    started_at: String,
    finished_at: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    latency_ms: BTreeMap<String, u64>,
}

/// Everything needed to rerun a command. Only `timing` varies between
/// identical runs.
#[derive(Debug, Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    subcommand: String,
    config: serde_json::Value,
    seed: Option<u64>,
    template_version: Option<String>,
    template_fingerprint: Option<String>,
    lexicon_fingerprint: Option<String>,
    module_versions: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    timing: Timing,
}

#[derive(Default)]
struct Outcome {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    seed: Option<u64>,
    templates: Option<TemplateSet>,
    lexicon: Option<CueLexicon>,
    latency_ms: BTreeMap<String, u64>,
}

impl Outcome {
    fn absorb(&mut self, other: Outcome) {
        self.inputs.extend(other.inputs);
        self.outputs.extend(other.outputs);
        self.seed = self.seed.or(other.seed);
        if self.templates.is_none() {
            self.templates = other.templates;
        }
        if self.lexicon.is_none() {
            self.lexicon = other.lexicon;
        }
        self.latency_ms.extend(other.latency_ms);
    }
}

fn sha256_file(path: &Path) -> Option<String> {
    std::fs::read(path)
        .ok()
        .map(|b| hex::encode(Sha256::digest(b)))
}

fn lexicon_fingerprint(lex: &CueLexicon) -> String {
    hex::encode(Sha256::digest(lex.to_text().as_bytes()))
}

/// Runs the command line `argv` (program name first) and returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let started_at = chrono::Utc::now().to_rfc3339();
    let result = run(&cli.command);
    match result {
        Ok(outcome) => {
            let Some(path) = cli
                .run_manifest
                .clone()
                .or_else(|| default_manifest_path(&cli.command))
            else {
                return 0;
            };
            let manifest = RunManifest {
                tool: "cuescreen",
                version: VERSION,
                subcommand: subcommand_name(&cli.command).to_string(),
                config: serde_json::to_value(&cli.command).expect("args serialize"),
                seed: outcome.seed,
                template_version: outcome.templates.as_ref().map(|t| t.version.clone()),
                template_fingerprint: outcome.templates.as_ref().map(TemplateSet::fingerprint),
                lexicon_fingerprint: outcome.lexicon.as_ref().map(lexicon_fingerprint),
                module_versions: MODULES
                    .iter()
                    .map(|m| (m.to_string(), VERSION.to_string()))
                    .chain([(
                        "model_format".to_string(),
                        crate::baseline::MODEL_FORMAT_VERSION.to_string(),
                    )])
                    .collect(),
                inputs: outcome
                    .inputs
                    .iter()
                    .filter_map(|p| Some((p.display().to_string(), sha256_file(p)?)))
                    .collect(),
                outputs: outcome
                    .outputs
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect(),
                timing: Timing {
                    started_at,
                    finished_at: chrono::Utc::now().to_rfc3339(),
                    latency_ms: outcome.latency_ms,
                },
            };
            let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
            if let Err(e) = write_atomic(&path, text.as_bytes()) {
                eprintln!("error: cannot write run manifest {}: {e}", path.display());
                return 1;
            }
            0
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

fn subcommand_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Parse(_) => "parse",
        Command::Analyze(_) => "analyze",
        Command::Split(_) => "split",
        Command::Prompt(_) => "prompt",
        Command::Classify(_) => "classify",
        Command::Baseline(_) => "baseline",
        Command::Synth(_) => "synth",
        Command::Eval(_) => "eval",
        Command::Pipeline(_) => "pipeline",
        Command::MockServer(_) => "mock-server",
    }
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn default_manifest_path(cmd: &Command) -> Option<PathBuf> {
    let file = |p: &PathBuf| Some(sidecar(p, ".run.json"));
    let dir = |p: &PathBuf| Some(p.join("run_manifest.json"));
    match cmd {
        Command::Parse(a) => file(&a.output),
        Command::Analyze(a) => file(&a.output),
        Command::Split(a) => file(&a.output),
        Command::Prompt(a) => file(&a.output),
        Command::Classify(a) => file(&a.output),
        Command::Baseline(a) => file(&a.output),
        Command::Synth(a) => dir(&a.output),
        Command::Eval(a) => dir(&a.output),
        Command::Pipeline(a) => dir(&a.output),
        Command::MockServer(_) => None,
    }
}

fn run(cmd: &Command) -> Result<Outcome, CliError> {
    match cmd {
        Command::Parse(a) => stage_parse(&a.input, &a.output, &a.speaker),
        Command::Analyze(a) => stage_analyze(&a.input, &a.output, a.lexicon.as_deref()),
        Command::Split(a) => {
            let tsv = a
                .tsv
                .clone()
                .unwrap_or_else(|| a.output.with_extension("tsv"));
            stage_split(
                &a.input,
                &a.output,
                &tsv,
                a.split_policy.as_deref(),
                a.seed,
                true,
            )
        }
        Command::Prompt(a) => stage_prompt(
            &a.input,
            &a.manifest,
            &a.output,
            a.mode,
            a.seed,
            a.templates.as_deref(),
            a.lexicon.as_deref(),
        ),
        Command::Classify(a) => {
            let completions = a
                .completions
                .clone()
                .unwrap_or_else(|| a.output.with_extension("completions.jsonl"));
            stage_classify(&a.input, &a.output, &completions, &a.endpoint)
        }
        Command::Baseline(a) => stage_baseline(a),
        Command::Synth(a) => stage_synth(a),
        Command::Eval(a) => {
            let inputs = a.input.iter().map(|s| named_input(s)).collect::<Vec<_>>();
            stage_eval(&inputs, &a.manifest, &a.output)
        }
        Command::Pipeline(a) => run_pipeline(a),
        Command::MockServer(a) => serve_mock(a),
    }
}

fn named_input(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(spec);
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| spec.to_string());
            (name, p)
        }
    }
}

fn load_lexicon(path: Option<&Path>) -> Result<CueLexicon, CliError> {
    match path {
        Some(p) => CueLexicon::load(p).map_err(fail("lexicon")),
        None => Ok(CueLexicon::builtin()),
    }
}

fn load_templates(path: Option<&Path>) -> Result<TemplateSet, CliError> {
    let t = match path {
        Some(p) => TemplateSet::load(p).map_err(fail("templates"))?,
        None => TemplateSet::builtin(),
    };
    t.validate().map_err(fail("templates"))?;
    Ok(t)
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    read_jsonl(path).map_err(|e| CliError::Input(e.to_string()))
}

fn write_records<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    write_jsonl(path, items).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes())
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// (participant id, .cha path) pairs for a manifest, directory or single file.
fn cha_sources(input: &Path) -> Result<Vec<(String, PathBuf)>, CliError> {
    let stem = |p: &Path| {
        p.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    if input.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(input)
            .map_err(fail(&input.display().to_string()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "cha"))
            .collect();
        files.sort();
        return Ok(files.into_iter().map(|p| (stem(&p), p)).collect());
    }
    if input.extension().is_some_and(|x| x == "cha") {
        return Ok(vec![(stem(input), input.to_path_buf())]);
    }
    let corpus = load_manifest(input).map_err(|e| CliError::Input(e.to_string()))?;
    let base = input.parent().unwrap_or(Path::new("."));
    Ok(corpus
        .records
        .iter()
        .map(|r| (r.participant_id.clone(), resolve(base, &r.transcript_path)))
        .collect())
}

fn stage_parse(input: &Path, output: &Path, speaker: &str) -> Result<Outcome, CliError> {
    let sources = cha_sources(input)?;
    let transcripts: Vec<CleanTranscript> = sources
        .par_iter()
        .map(|(id, path)| {
            let raw = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let doc = parse_document(id, &raw)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            extract_participant_text(&doc, speaker)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
        })
        .collect::<Result<_, _>>()?;
    write_records(output, &transcripts)?;
    let mut inputs = vec![input.to_path_buf()];
    if !input.is_dir() {
        inputs.extend(sources.into_iter().map(|(_, p)| p).filter(|p| p != input));
    }
    Ok(Outcome {
        inputs,
        outputs: vec![output.to_path_buf()],
        ..Default::default()
    })
}

fn stage_analyze(input: &Path, output: &Path, lexicon: Option<&Path>) -> Result<Outcome, CliError> {
    let lex = load_lexicon(lexicon)?;
    let transcripts: Vec<CleanTranscript> = read_records(input)?;
    let analyses: Vec<Analysis> = transcripts.par_iter().map(|t| analyze(t, &lex)).collect();
    write_records(output, &analyses)?;
    Ok(Outcome {
        inputs: vec![input.to_path_buf()],
        outputs: vec![output.to_path_buf()],
        lexicon: Some(lex),
        ..Default::default()
    })
}

fn stage_split(
    input: &Path,
    output: &Path,
    tsv: &Path,
    policy: Option<&str>,
    seed: u64,
    force: bool,
) -> Result<Outcome, CliError> {
    let corpus = load_manifest(input).map_err(|e| CliError::Input(e.to_string()))?;
    let already = corpus.records.iter().all(|r| r.split != Split::Unassigned);
    let assigned = if already && !force && policy.is_none() {
        corpus
    } else {
        let policy = match policy {
            Some(p) => SplitPolicy::parse(p, seed),
            None => Ok(SplitPolicy::proportional(corpus.len(), seed)),
        }
        .map_err(|e| CliError::Input(e.to_string()))?;
        split(&corpus, &policy).map_err(|e| CliError::Input(e.to_string()))?
    };
    let report = validate(&assigned, input.parent());
    eprintln!("{}", report.summary());
    for f in &report.findings {
        eprintln!("warning: {f}");
    }
    write_text(output, &assigned.to_jsonl())?;
    write_text(tsv, &assigned.split_tsv())?;
    Ok(Outcome {
        inputs: vec![input.to_path_buf()],
        outputs: vec![output.to_path_buf(), tsv.to_path_buf()],
        seed: Some(seed),
        ..Default::default()
    })
}

fn load_split_manifest(path: &Path) -> Result<Corpus, CliError> {
    let corpus = load_manifest(path).map_err(|e| CliError::Input(e.to_string()))?;
    if corpus.in_split(Split::Test).next().is_none() {
        return Err(CliError::Input(format!(
            "{}: no participant is in the test split; run `split` first",
            path.display()
        )));
    }
    Ok(corpus)
}

fn stage_prompt(
    input: &Path,
    manifest: &Path,
    output: &Path,
    mode: PromptMode,
    seed: u64,
    templates: Option<&Path>,
    lexicon: Option<&Path>,
) -> Result<Outcome, CliError> {
    let templates = load_templates(templates)?;
    let lex = load_lexicon(lexicon)?;
    let corpus = load_split_manifest(manifest)?;
    let transcripts: Vec<CleanTranscript> = read_records(input)?;
    let by_id: HashMap<&str, &CleanTranscript> = transcripts
        .iter()
        .map(|t| (t.participant_id.as_str(), t))
        .collect();
    let lookup = |id: &str| {
        by_id
            .get(id)
            .copied()
            .ok_or_else(|| CliError::Input(format!("no transcript for participant {id:?}")))
    };
    let exemplars = if mode == PromptMode::FewShot {
        let pool = corpus
            .in_split(Split::Train)
            .map(|r| {
                Ok(Exemplar {
                    transcript: lookup(&r.participant_id)?.clone(),
                    label: r.label,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        select_exemplars(&pool, seed)
    } else {
        Vec::new()
    };
    let mut records = Vec::new();
    for r in corpus.in_split(Split::Test) {
        let t = lookup(&r.participant_id)?;
        let report = cue_coverage(&tokenize(&t.text), &lex);
        let bundle = build_prompt(mode, t, Some(&report), &exemplars, &templates)
            .map_err(|e| CliError::Input(format!("{}: {e}", r.participant_id)))?;
        records.push(BundleRecord {
            participant_id: r.participant_id.clone(),
            template_version: templates.version.clone(),
            bundle,
        });
    }
    records.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
    write_records(output, &records)?;
    Ok(Outcome {
        inputs: vec![input.to_path_buf(), manifest.to_path_buf()],
        outputs: vec![output.to_path_buf()],
        seed: Some(seed),
        templates: Some(templates),
        lexicon: Some(lex),
        ..Default::default()
    })
}

fn stage_classify(
    input: &Path,
    output: &Path,
    completions: &Path,
    endpoint: &EndpointArgs,
) -> Result<Outcome, CliError> {
    let records: Vec<BundleRecord> = read_records(input)?;
    let cfg = endpoint.config();
    let transport = endpoint.transport()?;
    let items: Vec<(String, PromptBundle)> = records
        .into_iter()
        .map(|r| (r.participant_id, r.bundle))
        .collect();
    let results = classify_all(&items, &cfg, transport.as_ref())?;
    let mut latency_ms = BTreeMap::new();
    let mut predictions = Vec::with_capacity(results.len());
    let mut log: Vec<CompletionRecord> = Vec::with_capacity(results.len());
    for (p, mut rec) in results {
        if let Some(ms) = rec.latency_ms.take() {
            latency_ms.insert(format!("{}:{}", input.display(), rec.participant_id), ms);
        }
        predictions.push(p);
        log.push(rec);
    }
    write_records(output, &predictions)?;
    write_records(completions, &log)?;
    Ok(Outcome {
        inputs: vec![input.to_path_buf()],
        outputs: vec![output.to_path_buf(), completions.to_path_buf()],
        latency_ms,
        ..Default::default()
    })
}

fn rows_for<'a>(
    analyses: &'a HashMap<&str, &Analysis>,
    corpus: &Corpus,
    split: Split,
) -> Result<Vec<(&'a Analysis, Label)>, CliError> {
    corpus
        .in_split(split)
        .map(|r| {
            analyses
                .get(r.participant_id.as_str())
                .map(|a| (*a, r.label))
                .ok_or_else(|| {
                    CliError::Input(format!(
                        "no analysis for participant {:?}",
                        r.participant_id
                    ))
                })
        })
        .collect()
}

fn stage_baseline(a: &BaselineArgs) -> Result<Outcome, CliError> {
    let corpus = load_split_manifest(&a.manifest)?;
    let analyses: Vec<Analysis> = read_records(&a.input)?;
    let by_id: HashMap<&str, &Analysis> = analyses
        .iter()
        .map(|x| (x.participant_id.as_str(), x))
        .collect();
    let names: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let mut inputs = vec![a.input.clone(), a.manifest.clone()];
    let mut outputs = vec![a.output.clone()];

    let (model, standardizer) = match &a.model_in {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(fail(&path.display().to_string()))?;
            let doc: ModelDocument =
                serde_json::from_str(&text).map_err(fail(&path.display().to_string()))?;
            let standardizer = doc.standardizer.clone();
            let model = NativeModel::from_document(doc, &names).map_err(fail("model"))?;
            inputs.push(path.clone());
            (model, standardizer)
        }
        None => {
            let train = rows_for(&by_id, &corpus, Split::Train)?;
            let raw: Vec<Vec<f64>> = train.iter().map(|(x, _)| x.features.to_vec()).collect();
            let labels: Vec<Label> = train.iter().map(|(_, l)| *l).collect();
            let standardizer = Standardizer::fit(&raw);
            let x: Vec<Vec<f64>> = raw.iter().map(|r| standardizer.apply(r)).collect();
            let model = match a.kind {
                BaselineKind::Lda => {
                    NativeModel::Lda(fit_lda(&x, &labels, &names).map_err(fail("lda"))?)
                }
                BaselineKind::Logistic => {
                    let hyper = LogisticHyper {
                        lr: a.lr,
                        epochs: a.epochs,
                        l2: a.l2,
                    };
                    NativeModel::Logistic(
                        fit_logistic(&x, &labels, &names, hyper).map_err(fail("logistic"))?,
                    )
                }
            };
            if let Some(out) = &a.model_out {
                let doc = model.to_document(Some(standardizer.clone()));
                let text = serde_json::to_string_pretty(&doc).expect("model serializes") + "\n";
                write_text(out, &text)?;
                outputs.push(out.clone());
            }
            (model, Some(standardizer))
        }
    };

    let mut predictions: Vec<Prediction> = rows_for(&by_id, &corpus, Split::Test)?
        .into_iter()
        .map(|(x, _)| {
            let raw = x.features.to_vec();
            let row = match &standardizer {
                Some(s) => s.apply(&raw),
                None => raw,
            };
            model
                .predict(&x.participant_id, &row)
                .map_err(fail("predict"))
        })
        .collect::<Result<_, _>>()?;
    predictions.sort_by(|p, q| p.participant_id.cmp(&q.participant_id));
    write_records(&a.output, &predictions)?;
    Ok(Outcome {
        inputs,
        outputs,
        ..Default::default()
    })
}

fn stage_synth(a: &SynthArgs) -> Result<Outcome, CliError> {
    let lex = load_lexicon(a.lexicon.as_deref())?;
    let cfg = SynthConfig {
        n_per_class: a.n,
        p_cue_ad: a.p_cue_ad,
        p_cue_non_ad: a.p_cue_non_ad,
        disfluency_rate_ad: a.disfluency_ad,
        disfluency_rate_non_ad: a.disfluency_non_ad,
        mean_tokens: a.mean_tokens,
        seed: a.seed,
    };
    let corpus = generate(&cfg, &lex).map_err(fail("synth"))?;
    corpus.write_to(&a.output).map_err(fail("synth"))?;
    Ok(Outcome {
        outputs: vec![
            a.output.join(crate::synth::MANIFEST_FILE),
            a.output.join(crate::synth::TRUTH_FILE),
        ],
        seed: Some(a.seed),
        lexicon: Some(lex),
        ..Default::default()
    })
}

fn stage_eval(
    inputs: &[(String, PathBuf)],
    manifest: &Path,
    output: &Path,
) -> Result<Outcome, CliError> {
    let corpus = load_split_manifest(manifest)?;
    let mut rows = Vec::new();
    for (name, path) in inputs {
        let preds: Vec<Prediction> = read_records(path)?;
        let cm = confuse(&preds, &corpus).map_err(fail(&path.display().to_string()))?;
        let m = metrics(&cm).map_err(fail(&path.display().to_string()))?;
        rows.push(MetricsRow {
            method: name.clone(),
            confusion: cm,
            metrics: m,
        });
    }
    let table: Vec<(String, Metrics)> =
        rows.iter().map(|r| (r.method.clone(), r.metrics)).collect();
    let order: Vec<&str> = inputs.iter().map(|(n, _)| n.as_str()).collect();
    let report = render_report(&table, Some(&order));
    print!("{report}");
    let json = serde_json::to_string_pretty(&rows).expect("metrics serialize") + "\n";
    let files = [
        (output.join("metrics.json"), json),
        (output.join("report.txt"), report),
        (output.join("report.csv"), render_csv(&table)),
    ];
    for (p, text) in &files {
        write_text(p, text)?;
    }
    let mut used: Vec<PathBuf> = inputs.iter().map(|(_, p)| p.clone()).collect();
    used.push(manifest.to_path_buf());
    Ok(Outcome {
        inputs: used,
        outputs: files.into_iter().map(|(p, _)| p).collect(),
        ..Default::default()
    })
}

/// Output file names used by `pipeline`, relative to its output directory.
pub mod layout {
    pub const TRANSCRIPTS: &str = "transcripts.jsonl";
    pub const ANALYSIS: &str = "analysis.jsonl";
    pub const SPLIT_MANIFEST: &str = "split_manifest.jsonl";
    pub const SPLIT_TSV: &str = "split.tsv";
    pub const BASELINE_MODEL: &str = "baseline_model.json";
    pub const BASELINE_PREDICTIONS: &str = "predictions_baseline.jsonl";
    pub const RUN_MANIFEST: &str = "run_manifest.json";

    pub fn bundles(mode: &str) -> String {
        format!("bundles_{mode}.jsonl")
    }

    pub fn predictions(mode: &str) -> String {
        format!("predictions_{mode}.jsonl")
    }

    pub fn completions(mode: &str) -> String {
        format!("completions_{mode}.jsonl")
    }
}

fn run_pipeline(a: &PipelineArgs) -> Result<Outcome, CliError> {
    let out = &a.output;
    std::fs::create_dir_all(out).map_err(fail(&out.display().to_string()))?;
    let modes = if a.mode.is_empty() {
        vec![PromptMode::ZeroShot, PromptMode::FewShot, PromptMode::Cot]
    } else {
        a.mode.clone()
    };
    let transcripts = out.join(layout::TRANSCRIPTS);
    let analysis = out.join(layout::ANALYSIS);
    let split_manifest = out.join(layout::SPLIT_MANIFEST);

    let mut outcome = stage_parse(&a.input, &transcripts, &a.speaker)?;
    outcome.absorb(stage_analyze(
        &transcripts,
        &analysis,
        a.lexicon.as_deref(),
    )?);
    outcome.absorb(stage_split(
        &a.input,
        &split_manifest,
        &out.join(layout::SPLIT_TSV),
        a.split_policy.as_deref(),
        a.seed,
        false,
    )?);
    let baseline_preds = out.join(layout::BASELINE_PREDICTIONS);
    outcome.absorb(stage_baseline(&BaselineArgs {
        input: analysis.clone(),
        manifest: split_manifest.clone(),
        output: baseline_preds.clone(),
        kind: a.baseline,
        model_out: Some(out.join(layout::BASELINE_MODEL)),
        model_in: None,
        lr: LogisticHyper::default().lr,
        epochs: LogisticHyper::default().epochs,
        l2: LogisticHyper::default().l2,
    })?);
    let mut eval_inputs = vec![("Baseline".to_string(), baseline_preds)];
    for mode in modes {
        let bundles = out.join(layout::bundles(mode.as_str()));
        let preds = out.join(layout::predictions(mode.as_str()));
        outcome.absorb(stage_prompt(
            &transcripts,
            &split_manifest,
            &bundles,
            mode,
            a.seed,
            a.templates.as_deref(),
            a.lexicon.as_deref(),
        )?);
        outcome.absorb(stage_classify(
            &bundles,
            &preds,
            &out.join(layout::completions(mode.as_str())),
            &a.endpoint,
        )?);
        eval_inputs.push((mode.display_name().to_string(), preds));
    }
    outcome.absorb(stage_eval(&eval_inputs, &split_manifest, out)?);
    // only the original input files belong in the run manifest's input list
    let produced: Vec<PathBuf> = outcome.outputs.clone();
    outcome.inputs.retain(|p| !produced.contains(p));
    outcome.inputs.sort();
    outcome.inputs.dedup();
    outcome.seed = Some(a.seed);
    Ok(outcome)
}

fn serve_mock(a: &MockServerArgs) -> Result<Outcome, CliError> {
    let required_key = match &a.require_key_env {
        Some(var) => Some(
            std::env::var(var)
                .map_err(|_| CliError::Input(format!("environment variable {var} is not set")))?,
        ),
        None => None,
    };
    let server = MockServer::start(
        a.port,
        MockServerOptions {
            rule: MockRule::with_threshold(a.threshold),
            required_key,
            ..Default::default()
        },
    )
    .map_err(|e| CliError::Input(e.to_string()))?;
    eprintln!("mock endpoint listening on {}", server.base_url());
    server.wait();
    Ok(Outcome::default())
}
