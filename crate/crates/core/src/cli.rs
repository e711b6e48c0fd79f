//! The `domain-sieve` command line: one subcommand per pipeline stage.
//!
//! Every flag can also be given in a `key = value` file passed with
//! `--config`; flags on the command line win. Each run writes its resolved
//! settings next to its output as a `.run.conf` file, which is itself a valid
//! config file, so any artifact can be regenerated from its own metadata.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use log::info;

use crate::classifier::{self, store, ClassifierConfig, ClassifierModel, EncoderKind, OptimizerKind, TrainConfig};
use crate::corpus::{build_vocabulary, corpus_stats, encode_corpus, read_lines, Corpus, EncodeOptions, Vocabulary};
use crate::error::Error;
use crate::eval::{self, compare_methods, generate_synthetic, read_report_tsv, EvalConfig, Method, SyntheticSpec};
use crate::ngram::{self, cache, KnModel};
use crate::nn::{AdadeltaConfig, AdamConfig};
use crate::semisup::{self, ClassifierScorer};
use crate::xent::{self, PoolModelData};

pub const THREADS_ENV: &str = "DOMAIN_SIEVE_THREADS";

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\nformats: vocab v1, kn-lm arpa v1, kn-lm cache DSKNLM01, params DSPARAM1, classifier v1, semisup v1, eval v1"
);

#[derive(Debug, Parser)]
#[command(name = "domain-sieve", version, long_version = LONG_VERSION, about = "In-domain data selection")]
pub struct Cli {
    /// Read flags from a `key = value` file; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads [default: $DOMAIN_SIEVE_THREADS, else 1].
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a vocabulary from text files.
    #[command(args_override_self = true)]
    Vocab(VocabArgs),
    /// Train a Kneser-Ney language model.
    #[command(name = "lm-train", args_override_self = true)]
    LmTrain(LmTrainArgs),
    /// Per-sentence cross-entropy under a language model.
    #[command(name = "lm-score", args_override_self = true)]
    LmScore(LmScoreArgs),
    /// Write a model as ARPA text.
    #[command(name = "lm-arpa-export", args_override_self = true)]
    LmArpaExport(ConvertArgs),
    /// Read an ARPA file into a binary model.
    #[command(name = "lm-arpa-import", args_override_self = true)]
    LmArpaImport(ConvertArgs),
    /// Rank a pool by cross-entropy difference.
    #[command(name = "select-xent", args_override_self = true)]
    SelectXent(SelectXentArgs),
    /// Uniform random selection from a pool.
    #[command(name = "select-random", args_override_self = true)]
    SelectRandom(SelectRandomArgs),
    /// Train an in-domain/out-of-domain classifier.
    #[command(name = "clf-train", args_override_self = true)]
    ClfTrain(ClfTrainArgs),
    /// Self-training selection with a neural classifier.
    #[command(name = "select-semisup", args_override_self = true)]
    SelectSemisup(SelectSemisupArgs),
    /// Generate a synthetic two-domain data set.
    #[command(name = "synth-gen", args_override_self = true)]
    SynthGen(SynthArgs),
    /// Compare selection methods on synthetic data.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Summarize an evaluation report.
    #[command(args_override_self = true)]
    Report(ReportArgs),
}

impl Command {
    pub const NAMES: [&'static str; 12] = [
        "vocab",
        "lm-train",
        "lm-score",
        "lm-arpa-export",
        "lm-arpa-import",
        "select-xent",
        "select-random",
        "clf-train",
        "select-semisup",
        "synth-gen",
        "eval",
        "report",
    ];
}

#[derive(Debug, Args)]
pub struct VocabOptions {
    #[arg(long, default_value_t = 1)]
    pub min_count: u64,
    /// Upper bound on vocabulary size, specials included.
    #[arg(long)]
    pub max_size: Option<usize>,
    #[arg(long)]
    pub lowercase: bool,
    /// Skip sentences with more tokens than this.
    #[arg(long)]
    pub max_tokens: Option<usize>,
}

impl VocabOptions {
    fn encode_options(&self) -> EncodeOptions {
        EncodeOptions {
            max_tokens: self.max_tokens,
        }
    }

    fn build<S: AsRef<str>>(&self, lines: impl IntoIterator<Item = S>) -> crate::Result<Vocabulary> {
        build_vocabulary(lines, self.min_count, self.max_size.unwrap_or(usize::MAX), self.lowercase)
    }
}

#[derive(Debug, Args)]
pub struct VocabArgs {
    /// Text files, one sentence per line.
    #[arg(long, required = true, value_delimiter = ',')]
    pub input: Vec<PathBuf>,
    #[command(flatten)]
    pub vocab: VocabOptions,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct LmTrainArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    /// Binary model file.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct LmScoreArgs {
    /// Binary or ARPA model (detected from the file contents).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Scores TSV: source index, cross-entropy in nats per token, method.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoolData {
    Full,
    Matched,
}

#[derive(Debug, Args)]
pub struct SelectXentArgs {
    #[arg(long)]
    pub in_domain: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    /// Pretrained in-domain model; requires --lm-pool.
    #[arg(long, requires = "lm_pool")]
    pub lm_in: Option<PathBuf>,
    #[arg(long, requires = "lm_in")]
    pub lm_pool: Option<PathBuf>,
    #[arg(long, default_value_t = 3, conflicts_with = "lm_in")]
    pub order: usize,
    #[arg(long, value_enum, default_value_t = PoolData::Full, conflicts_with = "lm_in")]
    pub pool_data: PoolData,
    #[command(flatten)]
    pub vocab: VocabOptions,
    /// Sentences to keep [default: the whole pool].
    #[arg(long)]
    pub n: Option<usize>,
    /// Also write nested selections of step, 2*step, ...
    #[arg(long)]
    pub step: Option<usize>,
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectRandomArgs {
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerName {
    Adam,
    Adadelta,
}

/// Classifier architecture and training schedule; unset values use the
/// encoder's defaults.
#[derive(Debug, Args)]
pub struct ClassifierOptions {
    #[arg(long, value_enum, default_value_t = EncoderArg::Cnn)]
    pub encoder: EncoderArg,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    #[arg(long)]
    pub feature_maps: Option<usize>,
    #[arg(long)]
    pub lstm_units: Option<usize>,
    /// Hidden layer sizes, comma separated; "none" for no hidden layer.
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerName>,
    /// Adam step size.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    /// word2vec text file to initialize embeddings from.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EncoderArg {
    Cnn,
    Blstm,
}

impl From<EncoderArg> for EncoderKind {
    fn from(e: EncoderArg) -> Self {
        match e {
            EncoderArg::Cnn => EncoderKind::Cnn,
            EncoderArg::Blstm => EncoderKind::Blstm,
        }
    }
}

impl ClassifierOptions {
    fn configs(&self, seed: u64) -> Result<(ClassifierConfig, TrainConfig), CliError> {
        let kind: EncoderKind = self.encoder.into();
        let mut model = ClassifierConfig::new(kind);
        if let Some(v) = self.embed_dim {
            model.embed_dim = v;
        }
        if let Some(v) = &self.widths {
            model.cnn_widths = v.clone();
        }
        if let Some(v) = self.feature_maps {
            model.cnn_feature_maps = v;
        }
        if let Some(v) = self.lstm_units {
            model.lstm_units = v;
        }
        if let Some(v) = &self.hidden {
            model.hidden = parse_hidden(v)?;
        }
        if let Some(v) = self.max_len {
            model.max_len = v;
        }
        model.validate().map_err(|e| CliError::Usage(e.to_string()))?;

        let mut train = TrainConfig::for_encoder(kind, seed);
        let optimizer = self.optimizer.unwrap_or(match train.optimizer {
            OptimizerKind::Adam(_) => OptimizerName::Adam,
            OptimizerKind::Adadelta(_) => OptimizerName::Adadelta,
        });
        train.optimizer = match (optimizer, self.lr) {
            (OptimizerName::Adadelta, Some(_)) => {
                return Err(CliError::Usage("--lr only applies to --optimizer adam".into()))
            }
            (OptimizerName::Adadelta, None) => OptimizerKind::Adadelta(AdadeltaConfig::default()),
            (OptimizerName::Adam, lr) => OptimizerKind::Adam(AdamConfig {
                lr: lr.unwrap_or(AdamConfig::default().lr),
                ..AdamConfig::default()
            }),
        };
        if let Some(v) = self.batch_size {
            train.batch_size = v;
        }
        if let Some(v) = self.max_epochs {
            train.max_epochs = v;
        }
        if let Some(v) = self.patience {
            train.patience = v;
        }
        if let Some(v) = self.dropout {
            train.dropout = v;
        }
        if let Some(v) = self.validation_fraction {
            train.validation_fraction = v;
        }
        Ok((model, train))
    }
}

fn parse_hidden(text: &str) -> Result<Vec<usize>, CliError> {
    if text.trim() == "none" {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| CliError::Usage(format!("bad --hidden value {text:?}"))))
        .collect()
}

#[derive(Debug, Args)]
pub struct ClfTrainArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    /// In-domain sentences (class 1).
    #[arg(long)]
    pub positives: PathBuf,
    /// Out-of-domain sentences (class 0).
    #[arg(long)]
    pub negatives: PathBuf,
    #[command(flatten)]
    pub classifier: ClassifierOptions,
    /// Parameter file; a manifest is written beside it.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelectSemisupArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub in_domain: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    /// Sentences moved to each side per iteration.
    #[arg(long, default_value_t = 500)]
    pub r: usize,
    #[command(flatten)]
    pub classifier: ClassifierOptions,
    /// Start every iteration from the previous model.
    #[arg(long)]
    pub warm_start: bool,
    /// Rank the pool with the final model instead of the iteration order.
    #[arg(long)]
    pub rescore_final: bool,
    /// Resume from and update this checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SpecOptions {
    #[arg(long, default_value_t = 2000)]
    pub in_domain_size: usize,
    #[arg(long, default_value_t = 20000)]
    pub pool_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub planted_fraction: f64,
    #[arg(long, default_value_t = 1000)]
    pub heldout_size: usize,
}

impl SpecOptions {
    fn spec(&self, seed: u64) -> Result<SyntheticSpec, CliError> {
        let spec = SyntheticSpec {
            in_domain_size: self.in_domain_size,
            pool_size: self.pool_size,
            planted_fraction: self.planted_fraction,
            heldout_size: self.heldout_size,
            seed,
            ..SyntheticSpec::default()
        };
        spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub spec: SpecOptions,
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Small classifiers with short schedules.
    Desk,
    /// Full-size classifiers.
    Full,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub spec: SpecOptions,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    pub preset: Preset,
    /// Seeds as a list and/or ranges, e.g. 1-20 or 1,3,5.
    #[arg(long, default_value = "1")]
    pub seeds: String,
    #[arg(long, value_delimiter = ',', default_value = "random,xent,cnn,blstm")]
    pub methods: Vec<String>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub rescore_final: bool,
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// report.tsv written by `eval`.
    #[arg(long)]
    pub input: PathBuf,
    /// Write the summary here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; exit status 2.
    Usage(String),
    /// Failure while running; exit status 1.
    Runtime(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(Error::Io(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    /// The one-line error report printed on stderr.
    pub fn line(&self) -> String {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage", m.clone()),
            CliError::Runtime(e) => (e.kind(), e.to_string()),
        };
        let msg = msg.split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error: kind={kind} msg={msg}")
    }
}

fn parse_config_file(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{}:{}: expected key = value", path.display(), n + 1)))?;
        entries.push((k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(entries)
}

/// Locates `--config` and the subcommand in raw arguments.
fn scan(argv: &[OsString]) -> (Option<PathBuf>, Option<usize>) {
    let mut config = None;
    let mut sub = None;
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].to_string_lossy();
        if a == "--" {
            break;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else if a == "--config" {
            config = argv.get(i + 1).map(PathBuf::from);
            i += 1;
        } else if (a == "--threads" || a == "--seed") && sub.is_none() {
            i += 1;
        } else if sub.is_none() && Command::NAMES.contains(&a.as_ref()) {
            sub = Some(i);
        }
        i += 1;
    }
    (config, sub)
}

/// Turns config entries into flags placed right after the subcommand, so
/// anything on the real command line comes later and overrides them.
fn config_flags(
    sub: &clap::Command,
    entries: &[(String, String)],
) -> Result<Vec<OsString>, CliError> {
    let mut out = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            return Err(CliError::Usage("config files cannot include other config files".into()));
        }
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| CliError::Usage(format!("unknown config key {key:?} for {}", sub.get_name())))?;
        if arg.get_action().takes_values() {
            out.push(OsString::from(format!("--{key}")));
            out.push(OsString::from(value));
        } else if matches!(arg.get_action(), clap::ArgAction::Count) {
            let n: usize = value
                .parse()
                .map_err(|_| CliError::Usage(format!("config key {key} expects a count")))?;
            out.extend((0..n).map(|_| OsString::from(format!("--{key}"))));
        } else {
            match value.as_str() {
                "true" => out.push(OsString::from(format!("--{key}"))),
                "false" => {}
                _ => return Err(CliError::Usage(format!("config key {key} expects true or false"))),
            }
        }
    }
    Ok(out)
}

/// Resolved settings of one run as `key = value` lines.
fn run_config_text(command: &clap::Command, sub_name: &str, matches: &ArgMatches) -> String {
    let sub_cmd = command.find_subcommand(sub_name).expect("known subcommand");
    let sub_matches = matches.subcommand_matches(sub_name).expect("parsed subcommand");
    let mut text = format!("# domain-sieve {} {}\n", env!("CARGO_PKG_VERSION"), sub_name);
    let globals = command.get_arguments().filter(|a| a.is_global_set());
    for arg in sub_cmd.get_arguments().chain(globals) {
        let id = arg.get_id().as_str();
        let Some(long) = arg.get_long() else { continue };
        if matches!(long, "config" | "help" | "version" | "verbose" | "threads") {
            continue;
        }
        let Some(values) = sub_matches.get_raw(id) else { continue };
        let values: Vec<String> = values.map(|v| v.to_string_lossy().into_owned()).collect();
        text.push_str(&format!("{} = {}\n", long, values.join(",")));
    }
    text
}

/// Parses arguments (merging any config file) and runs the subcommand.
pub fn run<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let command = Cli::command();
    let (config, sub) = scan(&argv);
    if let (Some(path), Some(at)) = (&config, sub) {
        let entries = parse_config_file(path)?;
        let name = argv[at].to_string_lossy().into_owned();
        let sub_cmd = command.find_subcommand(&name).expect("scanned name is a subcommand");
        let sub_cmd = sub_cmd.clone().args(command.get_arguments().filter(|a| a.is_global_set()).cloned());
        let extra = config_flags(&sub_cmd, &entries)?;
        argv.splice(at + 1..at + 1, extra);
    }

    let matches = match command.clone().try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                print!("{e}");
                return Ok(());
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            return Err(CliError::Usage(first));
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::Usage(e.to_string()))?;
    init_logging(cli.verbose);
    init_threads(cli.threads)?;
    let sub_name = matches.subcommand_name().expect("subcommand is required").to_string();
    let mut run_conf = run_config_text(&command, &sub_name, &matches);
    let threads = resolved_threads(cli.threads)?;
    run_conf.push_str(&format!("threads = {threads}\n"));
    dispatch(cli, &run_conf)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn resolved_threads(flag: Option<usize>) -> Result<usize, CliError> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("{THREADS_ENV}={v:?} is not a thread count")))?,
            Err(_) => 1,
        },
    };
    if n == 0 {
        return Err(CliError::Usage("thread count must be >= 1".into()));
    }
    Ok(n)
}

fn init_threads(flag: Option<usize>) -> Result<(), CliError> {
    let n = resolved_threads(flag)?;
    // A second call in the same process (tests) keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn write_run_conf(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)?;
    Ok(())
}

fn beside(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn encode_file(name: &str, path: &Path, vocab: &Vocabulary) -> Result<(Vec<String>, Corpus), CliError> {
    let lines = read_lines(path)?;
    let corpus = encode_corpus(name, &lines, vocab, EncodeOptions::default());
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus.into());
    }
    Ok((lines, corpus))
}

/// Loads a binary model or, failing the magic check, an ARPA file.
fn load_lm(path: &Path) -> Result<KnModel, CliError> {
    let head = fs::read(path)?;
    if head.starts_with(cache::MAGIC) {
        Ok(cache::from_bytes(&head)?)
    } else {
        let text = String::from_utf8(head)
            .map_err(|_| Error::Format(format!("{} is neither a binary model nor ARPA text", path.display())))?;
        Ok(ngram::parse_arpa(&text, &path.display().to_string())?)
    }
}

fn meta_lines(run_conf: &str) -> Vec<String> {
    run_conf.lines().filter(|l| !l.starts_with('#')).map(str::to_string).collect()
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn dispatch(cli: Cli, run_conf: &str) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Vocab(a) => {
            let mut lines = Vec::new();
            for p in &a.input {
                lines.extend(read_lines(p)?);
            }
            let vocab = a.vocab.build(&lines)?;
            vocab.write_tsv(&a.output)?;
            let corpus = encode_corpus("input", &lines, &vocab, a.vocab.encode_options());
            let (s, w, v) = corpus_stats(&corpus);
            println!("sentences\t{s}\ntokens\t{w}\ntypes\t{v}\nvocabulary\t{}", vocab.size());
            write_run_conf(&beside(&a.output, ".run.conf"), run_conf)
        }
        Command::LmTrain(a) => {
            let vocab = Arc::new(Vocabulary::read_tsv(&a.vocab)?);
            let (_, corpus) = encode_file("train", &a.input, &vocab)?;
            let mut model = KnModel::train(&corpus, vocab, a.order)?;
            for w in model.warnings() {
                log::warn!("{w}");
            }
            model.set_meta(meta_lines(run_conf));
            cache::save(&model, &a.output)?;
            write_run_conf(&beside(&a.output, ".run.conf"), run_conf)
        }
        Command::LmScore(a) => {
            let model = load_lm(&a.model)?;
            let (_, corpus) = encode_file("score", &a.input, model.vocab())?;
            let scores: Vec<xent::ScoredSentence> = corpus
                .sentences()
                .iter()
                .zip(model.score_corpus(&corpus))
                .map(|(s, h)| xent::ScoredSentence {
                    source_index: s.source_index,
                    score: h,
                    method: "lm".into(),
                })
                .collect();
            xent::write_scores_tsv(&a.output, &meta_lines(run_conf), &scores)?;
            println!("perplexity\t{}", model.corpus_perplexity(&corpus));
            write_run_conf(&beside(&a.output, ".run.conf"), run_conf)
        }
        Command::LmArpaExport(a) => {
            let model = load_lm(&a.input)?;
            ngram::export_arpa(&model, &a.output)?;
            write_run_conf(&beside(&a.output, ".run.conf"), run_conf)
        }
        Command::LmArpaImport(a) => {
            let model = ngram::import_arpa(&a.input)?;
            cache::save(&model, &a.output)?;
            write_run_conf(&beside(&a.output, ".run.conf"), run_conf)
        }
        Command::SelectXent(a) => select_xent(a, seed, run_conf),
        Command::SelectRandom(a) => {
            let lines = read_lines(&a.pool)?;
            let vocab = build_vocabulary(&lines, 1, usize::MAX, false)?;
            let pool = encode_corpus("pool", &lines, &vocab, EncodeOptions::default());
            let n = a.n.unwrap_or(pool.len());
            let picks = eval::select_random(&pool, n, seed)?;
            ensure_dir(&a.output_dir)?;
            xent::write_selection(a.output_dir.join("selection.txt"), &picks)?;
            xent::write_selected_text(a.output_dir.join("selection.text"), &lines, &picks)?;
            write_run_conf(&a.output_dir.join("run.conf"), run_conf)
        }
        Command::ClfTrain(a) => {
            let (mconf, tconf) = a.classifier.configs(seed)?;
            let vocab = Vocabulary::read_tsv(&a.vocab)?;
            let (_, pos) = encode_file("positives", &a.positives, &vocab)?;
            let (_, neg) = encode_file("negatives", &a.negatives, &vocab)?;
            let mut model = ClassifierModel::new(mconf, vocab.size(), seed)?;
            if let Some(path) = &a.classifier.embeddings {
                let report = classifier::load_pretrained_embeddings(&mut model, &vocab, path)?;
                info!("embeddings: {} of {} vocabulary entries matched", report.matched, vocab.size());
            }
            let history = classifier::train(&mut model, &pos, &neg, &tconf)?;
            println!("epoch\ttrain_loss\tvalidation_loss\tvalidation_accuracy");
            for e in &history.epochs {
                println!(
                    "{}\t{}\t{}\t{}",
                    e.epoch,
                    e.train_loss,
                    e.validation_loss.map_or("-".into(), |v| v.to_string()),
                    e.validation_accuracy.map_or("-".into(), |v| v.to_string())
                );
            }
            println!("best_epoch\t{}", history.best_epoch);
            store::save(&model, &vocab, &a.output)?;
            write_run_conf(&beside(&a.output, ".run.conf"), run_conf)
        }
        Command::SelectSemisup(a) => select_semisup(a, seed, run_conf),
        Command::SynthGen(a) => {
            let data = generate_synthetic(&a.spec.spec(seed)?)?;
            data.write_dir(&a.output_dir)?;
            write_run_conf(&a.output_dir.join("run.conf"), run_conf)
        }
        Command::Eval(a) => {
            let spec = a.spec.spec(seed)?;
            let mut config = match a.preset {
                Preset::Desk => EvalConfig::desk(&spec),
                Preset::Full => EvalConfig::full(&spec),
            };
            config.methods = a
                .methods
                .iter()
                .map(|m| m.parse::<Method>().map_err(|e| CliError::Usage(e.to_string())))
                .collect::<Result<_, _>>()?;
            if let Some(r) = a.r {
                if r == 0 {
                    return Err(CliError::Usage("--r must be >= 1".into()));
                }
                config.r = r;
                config.size_grid = (1..=(spec.pool_size - spec.in_domain_size) / 2 / r).map(|i| i * r).collect();
            }
            config.rescore_final = a.rescore_final;
            let seeds = parse_seeds(&a.seeds)?;
            let report = compare_methods(&spec, &config, &seeds)?;
            report.write_dir(&a.output_dir)?;
            print!("{}", report.summary());
            write_run_conf(&a.output_dir.join("run.conf"), run_conf)
        }
        Command::Report(a) => {
            let report = read_report_tsv(&a.input)?;
            let summary = report.summary();
            match &a.output {
                Some(p) => fs::write(p, summary)?,
                None => std::io::stdout().write_all(summary.as_bytes())?,
            }
            Ok(())
        }
    }
}

/// `1-20`, `1,3,5` or a mix of both.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Usage(format!("bad --seeds value {text:?}"));
    let mut seeds = BTreeSet::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad())?;
                let b: u64 = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => {
                seeds.insert(part.parse().map_err(|_| bad())?);
            }
        }
    }
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds.into_iter().collect())
}

fn select_xent(a: SelectXentArgs, seed: u64, run_conf: &str) -> Result<(), CliError> {
    let in_lines = read_lines(&a.in_domain)?;
    let pool_lines = read_lines(&a.pool)?;
    let models = match (&a.lm_in, &a.lm_pool) {
        (Some(i), Some(p)) => xent::XentModels {
            in_domain: load_lm(i)?,
            pool: load_lm(p)?,
        },
        _ => {
            let vocab = Arc::new(xent::shared_vocabulary(
                &in_lines,
                &pool_lines,
                a.vocab.min_count,
                a.vocab.max_size.unwrap_or(usize::MAX),
                a.vocab.lowercase,
            )?);
            let in_corpus = encode_corpus("in-domain", &in_lines, &vocab, a.vocab.encode_options());
            let pool_corpus = encode_corpus("pool", &pool_lines, &vocab, a.vocab.encode_options());
            let pool_data = match a.pool_data {
                PoolData::Full => PoolModelData::Full,
                PoolData::Matched => PoolModelData::SizeMatched { seed },
            };
            xent::train_xent_models(&in_corpus, &pool_corpus, vocab, a.order, pool_data)?
        }
    };
    let pool = encode_corpus("pool", &pool_lines, models.in_domain.vocab(), a.vocab.encode_options());
    let ranking = xent::rank(xent::score_xent_diff(&models.in_domain, &models.pool, &pool)?, true);
    let n = a.n.unwrap_or(ranking.len());
    let picks = xent::select_top(&ranking, n)?;
    ensure_dir(&a.output_dir)?;
    xent::write_scores_tsv(a.output_dir.join("scores.tsv"), &meta_lines(run_conf), ranking.items())?;
    xent::write_selection(a.output_dir.join("selection.txt"), &picks)?;
    xent::write_selected_text(a.output_dir.join("selection.text"), &pool_lines, &picks)?;
    if let Some(step) = a.step {
        let dir = a.output_dir.join("sweep");
        ensure_dir(&dir)?;
        for (size, sel) in xent::size_sweep(&ranking, step)? {
            xent::write_selection(dir.join(format!("{size}.txt")), &sel)?;
        }
    }
    write_run_conf(&a.output_dir.join("run.conf"), run_conf)
}

fn select_semisup(a: SelectSemisupArgs, seed: u64, run_conf: &str) -> Result<(), CliError> {
    if a.r == 0 {
        return Err(CliError::Usage("--r must be >= 1".into()));
    }
    if a.classifier.embeddings.is_some() {
        return Err(CliError::Usage("--embeddings is only supported by clf-train".into()));
    }
    let (mconf, tconf) = a.classifier.configs(seed)?;
    let vocab = Vocabulary::read_tsv(&a.vocab)?;
    let (_, in_domain) = encode_file("in-domain", &a.in_domain, &vocab)?;
    let (pool_lines, pool) = encode_file("pool", &a.pool, &vocab)?;
    let mut scorer = ClassifierScorer::new(mconf, tconf, vocab.size());
    scorer.warm_start = a.warm_start;
    let state = match &a.checkpoint {
        Some(p) if p.exists() => {
            let state = semisup::load_checkpoint(p, &pool)?;
            info!("resuming at iteration {}", state.iteration());
            state
        }
        _ => semisup::init_state(&in_domain, &pool, a.r, seed)?,
    };
    let state = semisup::resume(state, &in_domain, &pool, &mut scorer, a.checkpoint.as_deref())?;
    ensure_dir(&a.output_dir)?;
    semisup::write_emitted_tsv(&state, a.output_dir.join("emitted.tsv"))?;
    let order = if a.rescore_final {
        let model = scorer
            .last_model()
            .ok_or_else(|| Error::InvalidArgument("no model was trained in this run".into()))?;
        let ranking = semisup::rescore_final(model, &pool, "semisup")?;
        xent::write_scores_tsv(a.output_dir.join("scores.tsv"), &meta_lines(run_conf), ranking.items())?;
        ranking.order()
    } else {
        semisup::selection_prefix(&state, state.positives().len())?
    };
    let n = a.n.unwrap_or(order.len()).min(order.len());
    xent::write_selection(a.output_dir.join("selection.txt"), &order[..n])?;
    xent::write_selected_text(a.output_dir.join("selection.text"), &pool_lines, &order[..n])?;
    if let Some(model) = scorer.last_model() {
        store::save(model, &vocab, a.output_dir.join("model.params"))?;
    }
    write_run_conf(&a.output_dir.join("run.conf"), run_conf)
}

/// Entry point for the binary: runs and maps the outcome to an exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match run(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.exit_code()
        }
    }
}
