//! The `hlm` command-line tool.
//!
//! Every subcommand resolves its options from three layers: built-in
//! defaults, then an optional `--config` JSON object, then flags given on
//! the command line. Commands that write files also write a run manifest
//! (`<output>.manifest.json`) recording the resolved options, seeds and
//! SHA-256 digests of inputs and outputs. Errors are printed to stderr as a
//! single JSON object and yield a nonzero exit code.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::autodiff::AdamConfig;
use crate::cells::CELL_EQUATIONS;
use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::corpus::synth::GrammarConfig;
use crate::corpus::{
    filter_functions, load_corpus, parse_line, save_corpus, select_top_scored, split_corpus, synth_generate, CorpusError,
    SplitRatios, Vocab, DEFAULT_MAX_NODES, DEFAULT_MIN_NODES,
};
use crate::eval::{evaluate, EvalReport, ReportTable};
use crate::model::{ModelError, ModelKind};
use crate::train::{train_with, TrainConfig, TrainError};
use crate::tree::{Ast, NodeId};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Json { .. } => "schema",
            CliError::Corpus(_) => "corpus",
            CliError::Model(_) => "model",
            CliError::Train(_) => "train",
            CliError::Checkpoint(_) => "checkpoint",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "hlm", version, about = "Hierarchical language model for AST code completion")]
struct Cli {
    /// JSON object of option values; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Where to write the run manifest (default: next to the main output).
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter, select, split and index a corpus of AST JSONL files.
    Prepare(PrepareArgs),
    /// Generate a synthetic corpus from a grammar.
    Synth(SynthArgs),
    /// Train a model and write its best checkpoint.
    Train(TrainArgs),
    /// Evaluate checkpoints on a test set.
    Eval(EvalArgs),
    /// Rank candidate tokens for the next node of a partial tree.
    Complete(CompleteArgs),
    /// Merge evaluation reports into one table.
    Report(ReportArgs),
}

// Flag structs serialize only the flags actually given, so they can be
// layered over defaults and config values.

#[derive(Debug, Args, Serialize)]
struct PrepareArgs {
    /// A JSONL file or a directory of `*.jsonl` files.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    /// Combined corpus path; split, vocabulary and manifest files go next to it.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Smallest function kept, in nodes (inclusive).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    min: Option<usize>,
    /// Largest function kept, in nodes (inclusive).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max: Option<usize>,
    /// Train, validation and test shares, e.g. `60,15,25`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<String>,
    /// Split seed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// How many of the rarest training tokens map to UNK (1 to 3).
    #[arg(long = "unk-k")]
    #[serde(skip_serializing_if = "Option::is_none")]
    unk_k: Option<usize>,
    /// Keep the highest-scoring source files within this many bytes.
    #[arg(long = "byte-budget")]
    #[serde(skip_serializing_if = "Option::is_none")]
    byte_budget: Option<usize>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
struct PrepareOptions {
    input: Option<PathBuf>,
    out: Option<PathBuf>,
    min: usize,
    max: usize,
    split: String,
    seed: u64,
    unk_k: usize,
    byte_budget: Option<usize>,
}

impl Default for PrepareOptions {
    fn default() -> Self {
        PrepareOptions {
            input: None,
            out: None,
            min: DEFAULT_MIN_NODES,
            max: DEFAULT_MAX_NODES,
            split: "60,15,25".to_string(),
            seed: 0,
            unk_k: crate::corpus::DEFAULT_UNK_K,
            byte_budget: None,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct SynthArgs {
    /// Output JSONL path.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Number of functions to generate.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    count: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Smallest function, in nodes.
    #[arg(long = "min-nodes")]
    #[serde(skip_serializing_if = "Option::is_none")]
    min_nodes: Option<usize>,
    /// Largest function, in nodes.
    #[arg(long = "max-nodes")]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_nodes: Option<usize>,
    /// Fraction of identifier leaves replaced by fresh names.
    #[arg(long = "rename-fraction")]
    #[serde(skip_serializing_if = "Option::is_none")]
    rename_fraction: Option<f64>,
    /// Grammar JSON; defaults to the built-in Java-like grammar.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grammar: Option<PathBuf>,
    /// Project name recorded in each tree's metadata.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    project: Option<String>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
struct SynthOptions {
    out: Option<PathBuf>,
    count: usize,
    seed: u64,
    min_nodes: Option<usize>,
    max_nodes: Option<usize>,
    rename_fraction: f64,
    grammar: Option<PathBuf>,
    project: Option<String>,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            out: None,
            count: 300,
            seed: 0,
            min_nodes: None,
            max_nodes: None,
            rename_fraction: 0.0,
            grammar: None,
            project: None,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// One of rnn, lstm, hlm.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<ModelKind>,
    /// A JSONL corpus, split and indexed on the fly.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    corpus: Option<PathBuf>,
    /// The `--out` path given to `prepare`; its split and vocabulary are used.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    prepared: Option<PathBuf>,
    /// Checkpoint path; defaults to `<model>.ckpt`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// Per-epoch JSONL log; defaults to `<out>.log.jsonl`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    log: Option<PathBuf>,
    /// Hidden and embedding size.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    d: Option<usize>,
    /// Initialization and shuffle seed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Adam learning rate.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    lr: Option<f64>,
    /// Upper bound on training epochs.
    #[arg(long = "max-epochs")]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_epochs: Option<usize>,
    /// Validation drops tolerated before stopping.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    patience: Option<usize>,
    /// Validate every this many epochs.
    #[arg(long = "eval-every")]
    #[serde(skip_serializing_if = "Option::is_none")]
    eval_every: Option<usize>,
    /// Reshuffle training trees each epoch.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    shuffle: Option<bool>,
    /// Threads used for validation.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    workers: Option<usize>,
    /// Split shares for `--corpus`, e.g. `60,15,25`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<String>,
    /// Split seed for `--corpus`.
    #[arg(long = "split-seed")]
    #[serde(skip_serializing_if = "Option::is_none")]
    split_seed: Option<u64>,
    /// UNK cutoff for `--corpus` (1 to 3).
    #[arg(long = "unk-k")]
    #[serde(skip_serializing_if = "Option::is_none")]
    unk_k: Option<usize>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
struct TrainOptions {
    model: ModelKind,
    corpus: Option<PathBuf>,
    prepared: Option<PathBuf>,
    out: Option<PathBuf>,
    log: Option<PathBuf>,
    d: usize,
    seed: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    max_epochs: usize,
    patience: usize,
    eval_every: usize,
    shuffle: bool,
    workers: usize,
    split: String,
    split_seed: Option<u64>,
    unk_k: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainOptions {
            model: t.model,
            corpus: None,
            prepared: None,
            out: None,
            log: None,
            d: t.dim,
            seed: t.seed,
            lr: t.adam.lr,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            eps: t.adam.eps,
            max_epochs: t.max_epochs,
            patience: t.patience,
            eval_every: t.eval_every,
            shuffle: t.shuffle,
            workers: t.workers,
            split: "60,15,25".to_string(),
            split_seed: None,
            unk_k: crate::corpus::DEFAULT_UNK_K,
        }
    }
}

impl TrainOptions {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            model: self.model,
            dim: self.d,
            seed: self.seed,
            adam: AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps },
            max_epochs: self.max_epochs,
            patience: self.patience,
            eval_every: self.eval_every,
            shuffle: self.shuffle,
            workers: self.workers,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    /// Comma-separated kinds; checkpoints are read from `<checkpoint-dir>/<kind>.ckpt`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    models: Option<String>,
    /// Directory searched by `--models`.
    #[arg(long = "checkpoint-dir")]
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint_dir: Option<PathBuf>,
    /// Explicit checkpoint files; may be repeated.
    #[arg(long = "checkpoint")]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    checkpoints: Vec<PathBuf>,
    /// Test JSONL, encoded with each checkpoint's vocabulary.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    test: Option<PathBuf>,
    /// The `--out` path given to `prepare`; its test split is used.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    prepared: Option<PathBuf>,
    /// Dataset label for the DS column.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<String>,
    /// Evaluation threads.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    workers: Option<usize>,
    /// Also write the report table as JSON.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    json: Option<PathBuf>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
struct EvalOptions {
    models: Option<String>,
    checkpoint_dir: PathBuf,
    checkpoints: Vec<PathBuf>,
    test: Option<PathBuf>,
    prepared: Option<PathBuf>,
    dataset: Option<String>,
    workers: usize,
    json: Option<PathBuf>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            models: None,
            checkpoint_dir: PathBuf::from("."),
            checkpoints: Vec::new(),
            test: None,
            prepared: None,
            dataset: None,
            workers: 1,
            json: None,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct CompleteArgs {
    /// Checkpoint with an embedded vocabulary.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    checkpoint: Option<PathBuf>,
    /// JSONL file whose first line is the partial tree.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    prefix: Option<PathBuf>,
    /// Parent of the node to complete; defaults to the last node.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    parent: Option<usize>,
    /// Number of candidates.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
struct CompleteOptions {
    checkpoint: Option<PathBuf>,
    prefix: Option<PathBuf>,
    parent: Option<usize>,
    k: usize,
}

impl Default for CompleteOptions {
    fn default() -> Self {
        CompleteOptions { checkpoint: None, prefix: None, parent: None, k: 10 }
    }
}

#[derive(Debug, Args, Serialize)]
struct ReportArgs {
    /// Report JSON files written by `eval --json`.
    #[arg(long = "input")]
    #[serde(skip_serializing_if = "Vec::is_empty")]
    inputs: Vec<PathBuf>,
    /// Also write the merged table as JSON.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    json: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
struct ReportOptions {
    inputs: Vec<PathBuf>,
    json: Option<PathBuf>,
}

/// Provenance of one command invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub options: Value,
    pub equations: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl RunManifest {
    fn new(command: &str, options: &impl Serialize) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            options: serde_json::to_value(options).expect("options serialize"),
            equations: CELL_EQUATIONS.to_string(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            details: None,
        }
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    fn write(&self, path: &Path) -> Result<()> {
        write_file(path, format!("{}\n", serde_json::to_string_pretty(self).expect("manifest serializes")))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(read_file(path)?)))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })
        }
        _ => Ok(()),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes).map_err(|source| CliError::Json { path: path.display().to_string(), source })
}

/// `dir/corpus.jsonl` + `train.jsonl` -> `dir/corpus.train.jsonl`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Layers defaults, the config file and explicit flags, in that order.
fn resolve<O, A>(config: Option<&Path>, flags: &A) -> Result<O>
where
    O: Default + Serialize + DeserializeOwned,
    A: Serialize,
{
    let mut merged = serde_json::to_value(O::default()).expect("defaults serialize");
    let mut overlay = |layer: Value, origin: &str| -> Result<()> {
        let Value::Object(fields) = layer else {
            return Err(CliError::Usage(format!("{origin} must be a JSON object")));
        };
        let target = merged.as_object_mut().expect("options are objects");
        for (k, v) in fields {
            target.insert(k, v);
        }
        Ok(())
    };
    if let Some(path) = config {
        overlay(read_json(path)?, &path.display().to_string())?;
    }
    overlay(serde_json::to_value(flags).expect("flags serialize"), "flags")?;
    serde_json::from_value(merged).map_err(|e| CliError::Usage(format!("invalid options: {e}")))
}

fn require<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value.as_ref().ok_or_else(|| CliError::Usage(format!("missing required option --{flag}")))
}

/// Parses `60,15,25` or `0.6,0.15,0.25`.
pub fn parse_ratios(text: &str) -> Result<SplitRatios> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("invalid split `{text}`")))?;
    let [a, b, c] = parts[..] else {
        return Err(CliError::Usage(format!("split `{text}` needs three parts")));
    };
    let sum = a + b + c;
    if !(sum > 0.0) {
        return Err(CliError::Usage(format!("split `{text}` has no positive share")));
    }
    let scale = if (sum - 100.0).abs() < 1e-6 { 100.0 } else { 1.0 };
    Ok([a / scale, b / scale, c / scale])
}

fn jsonl_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_dir() {
        let entries = fs::read_dir(input).map_err(|source| CliError::Io { path: input.display().to_string(), source })?;
        let mut files = Vec::new();
        for e in entries {
            let p = e.map_err(|source| CliError::Io { path: input.display().to_string(), source })?.path();
            if p.extension().is_some_and(|x| x == "jsonl") {
                files.push(p);
            }
        }
        files.sort();
        Ok(files)
    } else {
        Ok(vec![input.to_path_buf()])
    }
}

/// Splits `trees` by `ratios`/`seed` and builds the vocabulary from train.
fn split_and_index(trees: Vec<Ast>, ratios: SplitRatios, seed: u64, unk_k: usize) -> Result<(crate::corpus::CorpusSplit, Vocab)> {
    let split = split_corpus(trees, ratios, seed)?;
    let vocab = Vocab::build(&split.train, unk_k)?;
    Ok((split, vocab))
}

fn cmd_prepare(opts: &PrepareOptions, manifest_path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let input = require(&opts.input, "input")?;
    let target = require(&opts.out, "out")?;
    let ratios = parse_ratios(&opts.split)?;
    let mut manifest = RunManifest::new("prepare", opts);

    let mut files = Vec::new();
    for path in jsonl_inputs(input)? {
        manifest.input(&path)?;
        let trees = filter_functions(load_corpus(&path)?, opts.min, opts.max);
        // Group per source file when metadata names one.
        let mut groups: BTreeMap<String, Vec<Ast>> = BTreeMap::new();
        let mut order = Vec::new();
        for t in trees {
            let key = t.meta.as_ref().and_then(|m| m.file.clone()).unwrap_or_else(|| path.display().to_string());
            if !groups.contains_key(&key) {
                order.push(key.clone());
            }
            groups.entry(key).or_default().push(t);
        }
        for key in order {
            let trees = groups.remove(&key).expect("key recorded");
            files.push((key, trees));
        }
    }
    let selected: Vec<Ast> = match opts.byte_budget {
        Some(budget) => select_top_scored(&files, budget).into_iter().flat_map(|(_, t)| t.iter().cloned()).collect(),
        None => files.into_iter().flat_map(|(_, t)| t).collect(),
    };
    if selected.is_empty() {
        return Err(CorpusError::EmptyCorpus.into());
    }
    ensure_parent(target)?;
    save_corpus(target, &selected)?;
    let (split, vocab) = split_and_index(selected, ratios, opts.seed, opts.unk_k)?;
    let paths = [
        (sibling(target, "train.jsonl"), &split.train),
        (sibling(target, "valid.jsonl"), &split.valid),
        (sibling(target, "test.jsonl"), &split.test),
    ];
    for (p, trees) in &paths {
        save_corpus(p, trees)?;
    }
    let vocab_path = sibling(target, "vocab.json");
    write_file(&vocab_path, serde_json::to_string(&vocab).expect("vocab serializes"))?;

    manifest.output(target)?;
    for (p, _) in &paths {
        manifest.output(p)?;
    }
    manifest.output(&vocab_path)?;
    manifest.details = Some(json!({
        "split": split.manifest,
        "filter": { "min_nodes": opts.min, "max_nodes": opts.max, "inclusive": true },
        "vocab": { "size": vocab.len(), "unk_k": vocab.unk_k(), "dropped": vocab.dropped() },
    }));
    let mpath = manifest_path.map(Path::to_path_buf).unwrap_or_else(|| sibling(target, "manifest.json"));
    manifest.write(&mpath)?;
    let [a, b, c] = split.manifest.sizes;
    writeln!(out, "prepared {} trees (train {a}, valid {b}, test {c}), vocabulary {}", a + b + c, vocab.len())
        .map_err(stdout_error)?;
    Ok(())
}

fn grammar_for(opts: &SynthOptions) -> Result<GrammarConfig> {
    let mut g = match &opts.grammar {
        Some(path) => read_json(path)?,
        None => GrammarConfig::java_like(),
    };
    g = g.with_seed(opts.seed).with_rename_fraction(opts.rename_fraction);
    let (min, max) = (opts.min_nodes.unwrap_or(g.min_nodes), opts.max_nodes.unwrap_or(g.max_nodes));
    g = g.with_bounds(min, max);
    if opts.project.is_some() {
        g.project = opts.project.clone();
    }
    Ok(g)
}

fn cmd_synth(opts: &SynthOptions, manifest_path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let target = require(&opts.out, "out")?;
    let grammar = grammar_for(opts)?;
    let trees = synth_generate(&grammar, opts.count)?;
    ensure_parent(target)?;
    save_corpus(target, &trees)?;
    let mut manifest = RunManifest::new("synth", opts);
    if let Some(g) = &opts.grammar {
        manifest.input(g)?;
    }
    manifest.output(target)?;
    manifest.details = Some(json!({ "grammar": grammar }));
    manifest.write(&manifest_path.map(Path::to_path_buf).unwrap_or_else(|| sibling(target, "manifest.json")))?;
    writeln!(out, "generated {} trees", trees.len()).map_err(stdout_error)?;
    Ok(())
}

fn cmd_train(opts: &TrainOptions, manifest_path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let config = opts.config();
    let mut manifest = RunManifest::new("train", opts);
    let (train_set, valid_set, vocab) = match (&opts.corpus, &opts.prepared) {
        (Some(_), Some(_)) => return Err(CliError::Usage("give either --corpus or --prepared".to_string())),
        (None, None) => return Err(CliError::Usage("missing required option --corpus or --prepared".to_string())),
        (Some(corpus), None) => {
            manifest.input(corpus)?;
            let split_seed = opts.split_seed.unwrap_or(opts.seed);
            let (split, vocab) = split_and_index(load_corpus(corpus)?, parse_ratios(&opts.split)?, split_seed, opts.unk_k)?;
            manifest.details = Some(json!({ "split": split.manifest }));
            (split.train, split.valid, vocab)
        }
        (None, Some(prefix)) => {
            let (tp, vp, vocp) = (sibling(prefix, "train.jsonl"), sibling(prefix, "valid.jsonl"), sibling(prefix, "vocab.json"));
            for p in [&tp, &vp, &vocp] {
                manifest.input(p)?;
            }
            let text = String::from_utf8_lossy(&read_file(&vocp)?).into_owned();
            let vocab = Vocab::from_json(&text).map_err(|source| CliError::Json { path: vocp.display().to_string(), source })?;
            (load_corpus(&tp)?, load_corpus(&vp)?, vocab)
        }
    };
    let encode = |ts: &[Ast]| ts.iter().map(|t| vocab.encode_tree(t)).collect::<Vec<_>>();
    let (train_enc, valid_enc) = (encode(&train_set), encode(&valid_set));
    if valid_enc.is_empty() {
        return Err(TrainError::EmptySplit("validation").into());
    }

    let target = opts.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.ckpt", opts.model.name())));
    let log_path = opts.log.clone().unwrap_or_else(|| sibling(&target, "log.jsonl"));
    let mut log_lines = String::new();
    let workers = config.workers;
    let outcome = train_with(
        &train_enc,
        vocab.len(),
        &config,
        |m| Ok(crate::eval::evaluate_tally(m, &valid_enc, workers)?.accuracy(0)),
        |entry| {
            log_lines.push_str(&serde_json::to_string(entry).expect("log entry serializes"));
            log_lines.push('\n');
        },
    )?;
    ensure_parent(&target)?;
    Checkpoint { model: outcome.model, vocab: Some(vocab) }.save(&target)?;
    write_file(&log_path, &log_lines)?;
    manifest.output(&target)?;
    manifest.output(&log_path)?;
    let mut details = manifest.details.take().unwrap_or_else(|| json!({}));
    details["best_epoch"] = json!(outcome.best_epoch);
    details["best_valid_top1"] = json!(outcome.best_valid_top1);
    details["stopped_early"] = json!(outcome.stopped_early);
    manifest.details = Some(details);
    manifest.write(&manifest_path.map(Path::to_path_buf).unwrap_or_else(|| sibling(&target, "manifest.json")))?;
    writeln!(
        out,
        "trained {} for {} epochs; best epoch {} with validation top-1 {:.2}%",
        opts.model,
        outcome.log.len(),
        outcome.best_epoch,
        outcome.best_valid_top1
    )
    .map_err(stdout_error)?;
    Ok(())
}

fn cmd_eval(opts: &EvalOptions, manifest_path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let mut checkpoints = opts.checkpoints.clone();
    if let Some(models) = &opts.models {
        for name in models.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let kind: ModelKind = name.parse()?;
            checkpoints.push(opts.checkpoint_dir.join(format!("{}.ckpt", kind.name())));
        }
    }
    if checkpoints.is_empty() {
        return Err(CliError::Usage("missing --models or --checkpoint".to_string()));
    }
    let test_path = match (&opts.test, &opts.prepared) {
        (Some(t), None) => t.clone(),
        (None, Some(p)) => sibling(p, "test.jsonl"),
        _ => return Err(CliError::Usage("give exactly one of --test or --prepared".to_string())),
    };
    let dataset = opts.dataset.clone().unwrap_or_else(|| {
        let p = opts.prepared.as_ref().unwrap_or(&test_path);
        p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    });
    let mut manifest = RunManifest::new("eval", opts);
    manifest.input(&test_path)?;
    let test = load_corpus(&test_path)?;
    let mut reports = Vec::new();
    for path in &checkpoints {
        manifest.input(path)?;
        let ck = Checkpoint::load(path)?;
        let vocab = ck.vocab.as_ref().ok_or_else(|| CliError::Usage(format!("{} has no vocabulary", path.display())))?;
        let encoded: Vec<_> = test.iter().map(|t| vocab.encode_tree(t)).collect();
        reports.push(evaluate(&ck.model, &encoded, &dataset, opts.workers)?);
    }
    let table = ReportTable::new(reports);
    write!(out, "{}", table.render()).map_err(stdout_error)?;
    if let Some(json_path) = &opts.json {
        write_file(json_path, table.to_json())?;
        manifest.output(json_path)?;
    }
    let mpath = manifest_path.map(Path::to_path_buf).or_else(|| opts.json.as_ref().map(|j| sibling(j, "manifest.json")));
    if let Some(m) = mpath {
        manifest.write(&m)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct CompletionOutput {
    position: usize,
    parent: usize,
    candidates: Vec<CandidateOutput>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CandidateOutput {
    token: String,
    prob: f64,
}

fn cmd_complete(opts: &CompleteOptions, manifest_path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let ck_path = require(&opts.checkpoint, "checkpoint")?;
    let prefix_path = require(&opts.prefix, "prefix")?;
    let ck = Checkpoint::load(ck_path)?;
    let vocab = ck.vocab.as_ref().ok_or_else(|| CliError::Usage(format!("{} has no vocabulary", ck_path.display())))?;
    let text = String::from_utf8_lossy(&read_file(prefix_path)?).into_owned();
    let line = text.lines().next().ok_or(CorpusError::EmptyFile)?;
    let prefix = parse_line(line, 1)?;
    let parent = NodeId(opts.parent.unwrap_or(prefix.len() - 1));
    let candidates = ck.model.complete(&vocab.encode_tree(&prefix), parent, opts.k)?;
    let output = CompletionOutput {
        position: prefix.len(),
        parent: parent.0,
        candidates: candidates
            .into_iter()
            .map(|c| CandidateOutput { token: vocab.decode(c.id).to_string(), prob: c.prob })
            .collect(),
    };
    writeln!(out, "{}", serde_json::to_string(&output).expect("output serializes")).map_err(stdout_error)?;
    if let Some(m) = manifest_path {
        let mut manifest = RunManifest::new("complete", opts);
        manifest.input(ck_path)?;
        manifest.input(prefix_path)?;
        manifest.write(m)?;
    }
    Ok(())
}

fn cmd_report(opts: &ReportOptions, manifest_path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    if opts.inputs.is_empty() {
        return Err(CliError::Usage("missing required option --input".to_string()));
    }
    let mut rows: Vec<EvalReport> = Vec::new();
    let mut manifest = RunManifest::new("report", opts);
    for p in &opts.inputs {
        manifest.input(p)?;
        let table: ReportTable = read_json(p)?;
        rows.extend(table.rows);
    }
    let table = ReportTable::new(rows);
    write!(out, "{}", table.render()).map_err(stdout_error)?;
    if let Some(j) = &opts.json {
        write_file(j, table.to_json())?;
        manifest.output(j)?;
    }
    let mpath = manifest_path.map(Path::to_path_buf).or_else(|| opts.json.as_ref().map(|j| sibling(j, "manifest.json")));
    if let Some(m) = mpath {
        manifest.write(&m)?;
    }
    Ok(())
}

fn stdout_error(source: io::Error) -> CliError {
    CliError::Io { path: "<stdout>".to_string(), source }
}

/// Runs the tool with `args` (including the program name), writing normal
/// output to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            write!(out, "{e}").map_err(stdout_error)?;
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.render().to_string().trim_end().to_string())),
    };
    let config = cli.config.as_deref();
    let manifest = cli.manifest.as_deref();
    match &cli.command {
        Command::Prepare(a) => cmd_prepare(&resolve(config, a)?, manifest, out),
        Command::Synth(a) => cmd_synth(&resolve(config, a)?, manifest, out),
        Command::Train(a) => cmd_train(&resolve(config, a)?, manifest, out),
        Command::Eval(a) => cmd_eval(&resolve(config, a)?, manifest, out),
        Command::Complete(a) => cmd_complete(&resolve(config, a)?, manifest, out),
        Command::Report(a) => cmd_report(&resolve(config, a)?, manifest, out),
    }
}

/// Process entry point: runs, reports errors as JSON on stderr, and returns
/// the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match run(args, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
