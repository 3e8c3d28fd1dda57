//! The `kbert` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. Data goes to
//! standard output (or `--out`), diagnostics to standard error.
//!
//! Settings resolve as built-in default < `KBERT_SEED` (seed only) <
//! `--config` file < command-line flag. A config file holds `key = value`
//! lines; keys are the long flag names with `-` or `_`, `#` starts a comment.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::data::{load_classification, load_conll, LabelSet};
use crate::error::Error;
use crate::inject::{render_injection, DumpFormat};
use crate::kg::{load_kg, KnowledgeGraph};
use crate::model::{HeadKind, KBert};
use crate::persistence::{self, Checkpoint};
use crate::pipeline::{Pipeline, Switches};
use crate::probe::{run_ablation, Cell, ProbeSettings, ProbeVariant};
use crate::tokenizer::{build_vocab, TokenizeMode, Tokenizer, Vocabulary};
use crate::train::{evaluate, prepare_classification, prepare_tagging, train, PreparedExample, TrainConfig};
use crate::transformer::ModelConfig;

pub const SEED_ENV: &str = "KBERT_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "kbert",
    version,
    about = "Knowledge-graph injection, training and inspection",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Knowledge-graph utilities.
    Kg {
        #[command(subcommand)]
        command: KgCommand,
    },
    /// Print the sentence tree of one input: tokens, positions, visible matrix.
    Inject(InjectArgs),
    /// Fine-tune a model and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Print the attention weights of one head for one input.
    Trace(TraceArgs),
    /// Checkpoint utilities.
    Ckpt {
        #[command(subcommand)]
        command: CkptCommand,
    },
    /// Generate the synthetic probe and run the ablation grid.
    Probe(ProbeArgs),
}

#[derive(Debug, Subcommand)]
pub enum KgCommand {
    /// Triple, entity and dropped-line counts as JSON.
    Stats {
        /// Triple file (TSV: head, relation, tail).
        path: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum CkptCommand {
    /// Print the header and tensor inventory.
    Inspect {
        /// Checkpoint file.
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Tsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Classify,
    Tag,
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Task as ValueEnum>::from_str(s, false)
    }
}

#[derive(Debug, Args)]
pub struct SwitchArgs {
    /// Skip knowledge lookup and injection.
    #[arg(long)]
    pub no_kg: bool,
    /// Let every token see every other token.
    #[arg(long)]
    pub no_visible_matrix: bool,
    /// Use hard (emission order) positions instead of soft positions.
    #[arg(long)]
    pub hard_positions: bool,
}

#[derive(Debug, Args)]
pub struct InjectArgs {
    /// Triple file.
    #[arg(long)]
    pub kg: PathBuf,
    /// Input sentence.
    #[arg(long)]
    pub text: String,
    /// Optional second sentence, joined with [SEP].
    #[arg(long)]
    pub text_b: Option<String>,
    /// Vocabulary file (one token per line); built from the text and graph when absent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Tokenization mode.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<TokenizeMode>,
    /// Longest flattened sequence.
    #[arg(long)]
    pub max_seq_len: Option<usize>,
    /// Output format.
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training data (classification TSV or CoNLL for --task tag).
    #[arg(long)]
    pub train: PathBuf,
    /// Development data, scored after every epoch.
    #[arg(long)]
    pub dev: PathBuf,
    /// Triple file.
    #[arg(long)]
    pub kg: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Head type.
    #[arg(long, value_enum)]
    pub task: Option<Task>,
    /// Vocabulary file; built from the training data and graph when absent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Tokenization mode.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<TokenizeMode>,
    /// Write per-epoch JSON lines here instead of standard output.
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
    /// key=value settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Random seed (falls back to KBERT_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Examples per update.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Passes over the training data.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Encoder blocks.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Attention heads per block.
    #[arg(long)]
    pub heads: Option<usize>,
    /// Hidden size.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Feed-forward inner size.
    #[arg(long)]
    pub ff: Option<usize>,
    /// Longest flattened sequence.
    #[arg(long)]
    pub max_seq_len: Option<usize>,
    /// Embedding dropout rate.
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Train only the task head.
    #[arg(long)]
    pub freeze_encoder: bool,
    #[command(flatten)]
    pub switches: SwitchArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint file.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Dataset to score (format follows the checkpoint's head).
    #[arg(long)]
    pub data: PathBuf,
    /// Triple file.
    #[arg(long)]
    pub kg: PathBuf,
    /// key=value settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub switches: SwitchArgs,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    /// Checkpoint file.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Triple file.
    #[arg(long)]
    pub kg: PathBuf,
    /// Input sentence.
    #[arg(long)]
    pub text: String,
    /// Block to trace, 1-based.
    #[arg(long, default_value_t = 1)]
    pub layer: usize,
    /// Head to trace, 1-based.
    #[arg(long, default_value_t = 1)]
    pub head: usize,
    /// Output format.
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub switches: SwitchArgs,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// First seed; seeds run consecutively (falls back to KBERT_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of seeds.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Training sentences per seed.
    #[arg(long)]
    pub train_size: Option<usize>,
    /// Test sentences per seed.
    #[arg(long)]
    pub test_size: Option<usize>,
    /// Passes over the training data.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Report format; defaults to csv for a .csv --out, json otherwise.
    #[arg(long, value_enum)]
    pub format: Option<ReportFormat>,
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<TokenizeMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Runtime(e) => write!(f, "{e}"),
        }
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

/// `key=value` settings with the environment seed fallback.
#[derive(Debug, Default)]
struct Settings {
    values: HashMap<String, String>,
    source: String,
}

impl Settings {
    fn load(path: Option<&Path>) -> Outcome<Self> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Failure::Runtime(Error::io(path, e)))?;
        let mut values = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Failure::Usage(format!(
                    "{}:{}: expected key=value",
                    path.display(),
                    n + 1
                )));
            };
            values.insert(k.trim().replace('-', "_"), v.trim().to_string());
        }
        Ok(Settings {
            values,
            source: path.display().to_string(),
        })
    }

    fn file_value<T: FromStr>(&self, key: &str) -> Outcome<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Failure::Usage(format!("{}: invalid value `{v}` for `{key}`", self.source))),
        }
    }

    fn resolve<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Outcome<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        Ok(self.file_value(key)?.unwrap_or(default))
    }

    fn flag(&self, key: &str, flag: bool) -> Outcome<bool> {
        Ok(flag || self.file_value(key)?.unwrap_or(false))
    }

    fn seed(&self, flag: Option<u64>) -> Outcome<u64> {
        let env = match std::env::var(SEED_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| Failure::Usage(format!("{SEED_ENV}: invalid seed `{v}`")))?,
            ),
            Err(_) => None,
        };
        self.resolve("seed", flag, env.unwrap_or(0))
    }

    fn switches(&self, args: &SwitchArgs) -> Outcome<Switches> {
        Ok(Switches {
            use_kg: !self.flag("no_kg", args.no_kg)?,
            use_visible_matrix: !self.flag("no_visible_matrix", args.no_visible_matrix)?,
            use_soft_position: !self.flag("hard_positions", args.hard_positions)?,
        })
    }
}

fn emit(out: Option<&Path>, data: &str, stdout: &mut dyn Write) -> Outcome {
    match out {
        Some(path) => fs::write(path, data).map_err(|e| Failure::Runtime(Error::io(path, e))),
        None => stdout
            .write_all(data.as_bytes())
            .map_err(|e| Failure::Runtime(Error::Stream(e))),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Vocabulary over `texts` plus every relation and tail in `kg`.
fn vocab_for(texts: &[String], kg: &KnowledgeGraph, mode: TokenizeMode) -> crate::Result<Vocabulary> {
    let mut corpus: Vec<&str> = texts.iter().map(String::as_str).collect();
    for t in kg.triples() {
        corpus.push(&t.relation);
        corpus.push(&t.tail);
    }
    build_vocab(&corpus, 1, mode)
}

fn cmd_kg_stats(path: &Path, stdout: &mut dyn Write) -> Outcome {
    let kg = load_kg(path)?;
    emit(None, &to_json(&kg.stats()), stdout)
}

fn cmd_inject(args: &InjectArgs, stdout: &mut dyn Write) -> Outcome {
    let settings = Settings::load(args.config.as_deref())?;
    let mode = settings.resolve("mode", args.mode, TokenizeMode::Whitespace)?;
    let max_seq_len = settings.resolve("max_seq_len", args.max_seq_len, 64)?;
    let kg = load_kg(&args.kg)?;
    let vocab = match &args.vocab {
        Some(p) => Vocabulary::load(p)?,
        None => {
            let mut texts = vec![args.text.clone()];
            texts.extend(args.text_b.clone());
            vocab_for(&texts, &kg, mode)?
        }
    };
    let tokenizer = Tokenizer::new(vocab, mode);
    let pipeline = Pipeline::new(&tokenizer, &kg, max_seq_len);
    let enc = pipeline.encode_text(&args.text, args.text_b.as_deref())?;
    let format = match args.format {
        Format::Json => DumpFormat::Json,
        Format::Tsv => DumpFormat::Tsv,
    };
    emit(
        args.out.as_deref(),
        &render_injection(&enc.flat, &enc.matrix, format),
        stdout,
    )
}

enum Dataset {
    Classify(Vec<crate::data::ClassRecord>),
    Tag(Vec<crate::data::TagRecord>),
}

impl Dataset {
    fn load(path: &Path, task: Task) -> crate::Result<Self> {
        Ok(match task {
            Task::Classify => Dataset::Classify(load_classification(path)?),
            Task::Tag => Dataset::Tag(load_conll(path)?),
        })
    }

    fn texts(&self, mode: TokenizeMode) -> Vec<String> {
        match self {
            Dataset::Classify(r) => r
                .iter()
                .flat_map(|r| std::iter::once(r.text.clone()).chain(r.pair.clone()))
                .collect(),
            Dataset::Tag(r) => r.iter().map(|r| mode.join(&r.tokens)).collect(),
        }
    }

    fn labels(&self) -> Vec<String> {
        match self {
            Dataset::Classify(r) => r.iter().map(|r| r.label.clone()).collect(),
            Dataset::Tag(r) => r.iter().flat_map(|r| r.tags.clone()).collect(),
        }
    }

    fn prepare(&self, pipeline: &Pipeline<'_>, labels: &LabelSet) -> crate::Result<Vec<PreparedExample>> {
        match self {
            Dataset::Classify(r) => prepare_classification(pipeline, r, labels),
            Dataset::Tag(r) => prepare_tagging(pipeline, r, labels),
        }
    }
}

fn cmd_train(args: &TrainArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Outcome {
    let s = Settings::load(args.config.as_deref())?;
    let task = s.resolve("task", args.task, Task::Classify)?;
    let mode = s.resolve("mode", args.mode, TokenizeMode::Whitespace)?;
    let desk = ModelConfig::desk(0);
    let mut config = ModelConfig {
        vocab_size: 0,
        layers: s.resolve("layers", args.layers, desk.layers)?,
        heads: s.resolve("heads", args.heads, desk.heads)?,
        hidden: s.resolve("hidden", args.hidden, desk.hidden)?,
        ff: s.resolve("ff", args.ff, desk.ff)?,
        max_seq_len: s.resolve("max_seq_len", args.max_seq_len, desk.max_seq_len)?,
        dropout: s.resolve("dropout", args.dropout, desk.dropout)?,
        mask_after_scale: s.file_value("mask_after_scale")?.unwrap_or(false),
    };
    let defaults = TrainConfig::default();
    let train_config = TrainConfig {
        learning_rate: s.resolve("lr", args.lr, defaults.learning_rate)?,
        batch_size: s.resolve("batch_size", args.batch_size, defaults.batch_size)?,
        epochs: s.resolve("epochs", args.epochs, defaults.epochs)?,
        seed: s.seed(args.seed)?,
        switches: s.switches(&args.switches)?,
        freeze_encoder: s.flag("freeze_encoder", args.freeze_encoder)?,
    };
    train_config.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let kg = load_kg(&args.kg)?;
    let train_data = Dataset::load(&args.train, task)?;
    let dev_data = Dataset::load(&args.dev, task)?;
    let vocab = match &args.vocab {
        Some(p) => Vocabulary::load(p)?,
        None => vocab_for(&train_data.texts(mode), &kg, mode)?,
    };
    config.vocab_size = vocab.len();
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let tokenizer = Tokenizer::new(vocab, mode);
    let labels = LabelSet::new(train_data.labels().into_iter().chain(dev_data.labels()));
    let pipeline = Pipeline::new(&tokenizer, &kg, config.max_seq_len).with_switches(train_config.switches);
    let train_set = train_data.prepare(&pipeline, &labels)?;
    let dev_set = dev_data.prepare(&pipeline, &labels)?;
    let kind = match task {
        Task::Classify => HeadKind::Classify,
        Task::Tag => HeadKind::Tag,
    };
    let mut net = KBert::new(config, kind, labels.len(), train_config.seed)?;
    let _ = writeln!(
        stderr,
        "training on {} examples, {} labels, {} parameters",
        train_set.len(),
        labels.len(),
        crate::layers::Parameters::param_count(&net)
    );
    let report = train(&mut net, &train_set, &dev_set, &labels, &train_config)?;
    emit(args.metrics_out.as_deref(), &report.json_lines(), stdout)?;
    persistence::save(&Checkpoint::new(net, tokenizer, labels)?, &args.out)?;
    let _ = writeln!(stderr, "wrote {}", args.out.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs, stdout: &mut dyn Write) -> Outcome {
    let s = Settings::load(args.config.as_deref())?;
    let switches = s.switches(&args.switches)?;
    let ckpt = persistence::load(&args.ckpt)?;
    let kg = load_kg(&args.kg)?;
    let task = match ckpt.net.head.kind {
        HeadKind::Classify => Task::Classify,
        HeadKind::Tag => Task::Tag,
    };
    let data = Dataset::load(&args.data, task)?;
    let pipeline = Pipeline::new(&ckpt.tokenizer, &kg, ckpt.net.config().max_seq_len).with_switches(switches);
    let examples = data.prepare(&pipeline, &ckpt.labels)?;
    let metrics = evaluate(&ckpt.net, &examples, &ckpt.labels)?;
    emit(args.out.as_deref(), &to_json(&metrics), stdout)
}

#[derive(Serialize)]
struct Trace<'a> {
    layer: usize,
    head: usize,
    tokens: Vec<&'a str>,
    weights: Vec<&'a [f64]>,
}

fn cmd_trace(args: &TraceArgs, stdout: &mut dyn Write) -> Outcome {
    let ckpt = persistence::load(&args.ckpt)?;
    let config = *ckpt.net.config();
    if args.layer == 0 || args.layer > config.layers {
        return Err(Failure::Usage(format!("--layer must be in 1..={}", config.layers)));
    }
    if args.head == 0 || args.head > config.heads {
        return Err(Failure::Usage(format!("--head must be in 1..={}", config.heads)));
    }
    let kg = load_kg(&args.kg)?;
    let switches = Settings::default().switches(&args.switches)?;
    let pipeline = Pipeline::new(&ckpt.tokenizer, &kg, config.max_seq_len).with_switches(switches);
    let enc = pipeline.encode_text(&args.text, None)?;
    let states = ckpt.net.model.encode(&enc.input)?;
    let scores = states
        .scores(args.layer, args.head - 1)
        .expect("layer and head checked");
    let tokens: Vec<&str> = enc.flat.tokens.iter().map(|t| t.token.surface.as_str()).collect();
    let text = match args.format {
        Format::Json => to_json(&Trace {
            layer: args.layer,
            head: args.head,
            tokens: tokens.clone(),
            weights: (0..scores.rows()).map(|i| scores.row(i)).collect(),
        }),
        Format::Tsv => {
            let mut s = format!("token\t{}\n", tokens.join("\t"));
            for (i, t) in tokens.iter().enumerate() {
                let row: Vec<String> = scores.row(i).iter().map(|p| format!("{p:.6}")).collect();
                s.push_str(&format!("{t}\t{}\n", row.join("\t")));
            }
            s
        }
    };
    emit(args.out.as_deref(), &text, stdout)
}

fn cmd_ckpt_inspect(path: &Path, stdout: &mut dyn Write) -> Outcome {
    let info = persistence::inspect(path)?;
    emit(None, &info.to_string(), stdout)
}

fn cmd_probe(args: &ProbeArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Outcome {
    let s = Settings::load(args.config.as_deref())?;
    let first = s.seed(args.seed)?;
    let count = s.resolve("seeds", args.seeds, 5)?;
    let defaults = ProbeSettings::default();
    let settings = ProbeSettings {
        train_size: s.resolve("train_size", args.train_size, defaults.train_size)?,
        test_size: s.resolve("test_size", args.test_size, defaults.test_size)?,
        epochs: s.resolve("epochs", args.epochs, defaults.epochs)?,
        ..defaults
    };
    if settings.train_size + settings.test_size < 100 || settings.train_size == 0 || settings.test_size == 0 {
        return Err(Failure::Usage(
            "probe needs non-empty splits totalling at least 100".into(),
        ));
    }
    let format = args.format.unwrap_or(match &args.out {
        Some(p) if p.extension().is_some_and(|e| e == "csv") => ReportFormat::Csv,
        _ => ReportFormat::Json,
    });
    let seeds: Vec<u64> = (first..first + count).collect();
    let _ = writeln!(
        stderr,
        "probe: seeds {seeds:?}, {} train / {} test",
        settings.train_size, settings.test_size
    );
    let report = run_ablation(
        &seeds,
        &[ProbeVariant::Knowledge, ProbeVariant::Misleading],
        &Cell::ALL,
        &settings,
    )?;
    let text = match format {
        ReportFormat::Json => report.to_json(),
        ReportFormat::Csv => report.to_csv(),
    };
    emit(args.out.as_deref(), &text, stdout)
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Outcome {
    match &cli.command {
        Command::Kg {
            command: KgCommand::Stats { path },
        } => cmd_kg_stats(path, stdout),
        Command::Inject(a) => cmd_inject(a, stdout),
        Command::Train(a) => cmd_train(a, stdout, stderr),
        Command::Eval(a) => cmd_eval(a, stdout),
        Command::Trace(a) => cmd_trace(a, stdout),
        Command::Ckpt {
            command: CkptCommand::Inspect { path },
        } => cmd_ckpt_inspect(path, stdout),
        Command::Probe(a) => cmd_probe(a, stdout, stderr),
    }
}

/// Runs one command line (`args[0]` is the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    1
                }
            };
        }
    };
    match dispatch(&cli, stdout, stderr) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(stderr, "error: {m}");
            1
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            2
        }
    }
}
