//! Command-line front end.
//!
//! Every value flag can also come from a TOML file passed with `--config`
//! (keys are the long flag names); flags win over the file, the file wins
//! over built-in defaults.

use std::fmt;
use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use growformer_core::expansion::{
    grow, random_eval_batch, stack_order, verify_on_batches, verify_preservation, Sampling, SourceTargetPair,
    Strategy, VerifyOptions,
};
use growformer_core::training::{
    evaluate_corpus, steps_to_threshold, two_stage_train, Corpus, LossLog, LossRecord, TrainSchedule,
    DEFAULT_MASK_RATIO,
};
use growformer_core::transformer::{attention_maps, Batch};
use growformer_core::{ModelConfig, ParamSet, Variant};

use crate::backend::ParallelBackend;
use crate::checkpoint;
use crate::corpus::CorpusSpec;
use crate::output::{self, ExpansionReport, LossCsv, SummaryRow};

pub const MODEL_FILE: &str = "model.grwf";
pub const LOSS_FILE: &str = "loss.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const ATTENTION_FILE: &str = "attention.csv";

/// Failure classes, mapped to exit codes 2 and 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Usage(String),
    Failure(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Failure(m) => write!(f, "error: {m}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

fn usage(m: impl fmt::Display) -> CliError {
    CliError::Usage(m.to_string())
}

fn failure(m: impl fmt::Display) -> CliError {
    CliError::Failure(m.to_string())
}

/// Model-level errors caused by bad flag combinations count as usage errors.
fn model_err(e: growformer_core::Error) -> CliError {
    use growformer_core::Error as E;
    match e {
        E::InvalidConfig(_)
        | E::IncompatibleGeometry(_)
        | E::NoUpperLayer
        | E::InvalidSchedule(_)
        | E::InvalidMaskRatio(_)
        | E::VocabMismatch(..)
        | E::SequenceTooLong { .. }
        | E::CorpusTooShort(_)
        | E::WrongVariant { .. } => CliError::Usage(e.to_string()),
        other => CliError::Failure(other.to_string()),
    }
}

#[derive(Parser, Debug)]
#[command(name = "growformer", version, about = "Grow small trained transformers into larger ones")]
pub struct Cli {
    /// TOML file with default values for any long flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model from random initialization.
    Pretrain(PretrainArgs),
    /// Grow a checkpoint to a larger shape.
    Expand(ExpandArgs),
    /// Compare two checkpoints' logits and losses.
    Verify(VerifyArgs),
    /// Train the target from several initializations and compare convergence.
    Compare(CompareArgs),
    /// Write per-layer, per-head attention matrices.
    DumpAttention(DumpArgs),
}

#[derive(Args, Debug, Default, Clone)]
pub struct TrainArgs {
    /// `markov`, `markov:<tokens>`, `file:<path>` or a path.
    #[arg(long)]
    pub corpus: Option<String>,
    #[arg(long)]
    pub corpus_seed: Option<u64>,
    /// Total optimizer steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub mask_ratio: Option<f32>,
    /// Train sampled sub-models for the first `--eb` epochs.
    #[arg(long)]
    pub two_stage: bool,
    #[arg(long)]
    pub eb: Option<usize>,
    #[arg(long)]
    pub lb: Option<usize>,
    /// Flush loss.csv every N steps.
    #[arg(long)]
    pub flush_every: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct PretrainArgs {
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub ffn: Option<usize>,
    #[arg(long)]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub max_seq: Option<usize>,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default, Clone)]
pub struct TargetArgs {
    #[arg(long)]
    pub target_layers: Option<usize>,
    #[arg(long)]
    pub target_hidden: Option<usize>,
    #[arg(long)]
    pub target_heads: Option<usize>,
    #[arg(long)]
    pub target_ffn: Option<usize>,
    /// `random` (default) or `cyclic` tail sampling for the mappings.
    #[arg(long)]
    pub mapping: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct ExpandArgs {
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[command(flatten)]
    pub target: TargetArgs,
    /// scratch | directcopy | fpi | aki
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fail (exit 1) if the FPI width stage misses this logit gap.
    #[arg(long)]
    pub tol: Option<f32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct VerifyArgs {
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f32>,
    #[arg(long)]
    pub inputs: Option<usize>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write report.txt here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct CompareArgs {
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[command(flatten)]
    pub target: TargetArgs,
    /// Comma-separated, e.g. `scratch,directcopy,fpi,aki,aki+two-stage`.
    #[arg(long)]
    pub strategies: Option<String>,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Loss threshold; defaults to scratch's final windowed loss.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Moving-average window for the threshold test.
    #[arg(long)]
    pub window: Option<usize>,
    /// Keep training after the threshold is crossed.
    #[arg(long)]
    pub full_budget: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct DumpArgs {
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Comma-separated token ids.
    #[arg(long)]
    pub ids: Option<String>,
    /// Byte-level text (byte vocabulary models).
    #[arg(long)]
    pub text: Option<String>,
    /// Sample the input from a corpus instead.
    #[arg(long)]
    pub corpus: Option<String>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Values from `--config`, consulted when a flag is absent.
#[derive(Default, Debug)]
pub struct FileConfig {
    table: toml::Table,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let table = text.parse().map_err(|e| usage(format!("{}: {e}", path.display())))?;
        Ok(Self { table })
    }

    fn raw(&self, key: &str) -> Option<String> {
        let v = self.table.get(key).or_else(|| self.table.get(&key.replace('-', "_")))?;
        Some(match v {
            toml::Value::String(s) => s.clone(),
            other => other.to_string(),
        })
    }

    /// Flag value, else the file's, else `None`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.raw(key)
            .map(|s| s.parse::<T>().map_err(|e| usage(format!("config key {key}: {e}"))))
            .transpose()
    }

    fn flag(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        Ok(flag || self.pick::<bool>(None, key)?.unwrap_or(false))
    }

    fn path(&self, flag: Option<PathBuf>, key: &str) -> Result<Option<PathBuf>, CliError> {
        self.pick(flag, key)
    }

    fn required_path(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf, CliError> {
        self.path(flag, key)?.ok_or_else(|| usage(format!("--{key} is required")))
    }
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Runs a parsed command. `Ok(1)` means a verification or threshold check
/// failed.
pub fn run(cli: Cli) -> Result<u8, CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Pretrain(a) => cmd_pretrain(&a, &file),
        Command::Expand(a) => cmd_expand(&a, &file),
        Command::Verify(a) => cmd_verify(&a, &file),
        Command::Compare(a) => cmd_compare(&a, &file),
        Command::DumpAttention(a) => cmd_dump_attention(&a, &file),
    }
}

fn out_dir(file: &FileConfig, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = file.required_path(flag, "out")?;
    fs::create_dir_all(&dir).map_err(|e| failure(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| failure(format!("{}: {e}", path.display())))
}

fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ParamSet), CliError> {
    checkpoint::load(path).map_err(|e| match e {
        checkpoint::CheckpointError::Io { .. } => failure(e),
        other => failure(format!("{}: {other}", path.display())),
    })
}

fn save_checkpoint(path: &Path, c: &ModelConfig, p: &ParamSet) -> Result<(), CliError> {
    checkpoint::save(c, p, path).map_err(|e| match e {
        checkpoint::CheckpointError::Io { .. } => failure(e),
        other => failure(format!("{}: {other}", path.display())),
    })
}

fn backend() -> Result<ParallelBackend, CliError> {
    ParallelBackend::from_env().map_err(failure)
}

/// Training settings after merging flags, file and defaults.
#[derive(Clone, Debug)]
struct TrainSettings {
    corpus: CorpusSpec,
    corpus_seed: u64,
    schedule: TrainSchedule,
    flush_every: usize,
}

fn train_settings(a: &TrainArgs, file: &FileConfig, max_seq: usize, layers: usize) -> Result<TrainSettings, CliError> {
    let corpus: String = file
        .pick(a.corpus.clone(), "corpus")?
        .ok_or_else(|| usage("--corpus is required"))?;
    let corpus: CorpusSpec = corpus.parse().map_err(usage)?;
    let steps = file.pick(a.steps, "steps")?.unwrap_or(1000);
    let epochs = file.pick(a.epochs, "epochs")?.unwrap_or(10).clamp(1, steps.max(1));
    let two_stage = file.flag(a.two_stage, "two-stage")?;
    let eb = file.pick(a.eb, "eb")?.unwrap_or(2);
    let lb = file.pick(a.lb, "lb")?.unwrap_or(1);
    let schedule = TrainSchedule {
        peak_lr: file.pick(a.lr, "lr")?.unwrap_or(1e-3),
        warmup_steps: file.pick(a.warmup, "warmup")?.unwrap_or(100),
        epochs,
        steps_per_epoch: 1,
        submodel_epochs: if two_stage { eb } else { 0 },
        layer_step: if two_stage { lb } else { 1 },
        batch_size: file.pick(a.batch, "batch")?.unwrap_or(32),
        seq_len: file.pick(a.seq_len, "seq-len")?.unwrap_or(32.min(max_seq)),
        mask_ratio: file.pick(a.mask_ratio, "mask-ratio")?.unwrap_or(DEFAULT_MASK_RATIO),
        ..Default::default()
    }
    .with_total_steps(steps);
    schedule.validate(layers).map_err(model_err)?;
    Ok(TrainSettings {
        corpus,
        corpus_seed: file.pick(a.corpus_seed, "corpus-seed")?.unwrap_or(0),
        schedule,
        flush_every: file.pick(a.flush_every, "flush-every")?.unwrap_or(100),
    })
}

/// Trains with `loss.csv` streamed to `csv_path`. `stop` sees every record.
fn train_logged(
    config: &ModelConfig,
    params: ParamSet,
    schedule: &TrainSchedule,
    corpus: &Corpus,
    csv_path: &Path,
    flush_every: usize,
    mut stop: impl FnMut(&LossRecord) -> bool,
) -> Result<(ParamSet, LossLog), CliError> {
    let mut csv = LossCsv::create(csv_path, flush_every).map_err(|e| failure(format!("{}: {e}", csv_path.display())))?;
    let mut io_err = None;
    let outcome = two_stage_train(config, params, schedule, corpus, backend()?, |r, _| {
        if let Err(e) = csv.write(r) {
            io_err = Some(e);
            return ControlFlow::Break(());
        }
        if stop(r) {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    csv.flush().map_err(|e| failure(format!("{}: {e}", csv_path.display())))?;
    if let Some(e) = io_err {
        return Err(failure(format!("{}: {e}", csv_path.display())));
    }
    let outcome = outcome.map_err(|e| match e {
        growformer_core::Error::NonFiniteLoss { step } => failure(format!(
            "loss became non-finite at step {step}; try a lower --lr (records up to the failure are in {})",
            csv_path.display()
        )),
        other => model_err(other),
    })?;
    Ok((outcome.params, outcome.log))
}

pub fn cmd_pretrain(a: &PretrainArgs, file: &FileConfig) -> Result<u8, CliError> {
    let variant: Variant = file
        .pick::<String>(a.variant.clone(), "variant")?
        .unwrap_or_else(|| "post-ln-encoder".into())
        .parse()
        .map_err(model_err)?;
    let layers = file.pick(a.layers, "layers")?.unwrap_or(2);
    let hidden = file.pick(a.hidden, "hidden")?.unwrap_or(64);
    let heads = file.pick(a.heads, "heads")?.unwrap_or(4);
    let max_seq = file.pick(a.max_seq, "max-seq")?.unwrap_or(32);
    if heads == 0 || hidden % heads != 0 {
        return Err(usage(format!("--hidden {hidden} is not divisible by --heads {heads}")));
    }
    let settings = train_settings(&a.train, file, max_seq, layers)?;
    let vocab = match settings.corpus {
        CorpusSpec::File(_) => growformer_core::training::BYTE_VOCAB,
        CorpusSpec::Markov { .. } => file.pick(a.vocab, "vocab")?.unwrap_or(64),
    };
    let mut config = ModelConfig::new(variant, layers, heads, hidden / heads, vocab, max_seq);
    if let Some(f) = file.pick(a.ffn, "ffn")? {
        config = config.with_ffn_dim(f);
    }
    config.validate().map_err(model_err)?;
    let seed = file.pick(a.seed, "seed")?.unwrap_or(0);
    let out = out_dir(file, a.out.clone())?;
    let corpus = settings.corpus.load(vocab, settings.corpus_seed).map_err(usage)?;
    let params = growformer_core::expansion::rand_init(&config, seed).map_err(model_err)?;
    let schedule = TrainSchedule { seed, ..settings.schedule };
    let (params, log) = train_logged(&config, params, &schedule, &corpus, &out.join(LOSS_FILE), settings.flush_every, |_| false)?;
    save_checkpoint(&out.join(MODEL_FILE), &config, &params)?;
    let first = log.records().first().map(|r| r.loss).unwrap_or(f64::NAN);
    let window = (log.len() / 10).max(1);
    println!(
        "trained {} steps: loss {first:.4} -> {:.4} (last {window} steps)",
        log.len(),
        log.final_average(window).unwrap_or(f64::NAN)
    );
    Ok(0)
}

/// Source config widened and deepened per the target flags.
fn target_config(source: &ModelConfig, t: &TargetArgs, file: &FileConfig) -> Result<(ModelConfig, Sampling), CliError> {
    let layers = file.pick(t.target_layers, "target-layers")?.unwrap_or(source.layers);
    let hidden = file.pick(t.target_hidden, "target-hidden")?;
    let heads = file.pick(t.target_heads, "target-heads")?;
    let dk = source.head_dim;
    let heads = match (hidden, heads) {
        (None, None) => source.heads,
        (None, Some(h)) => h,
        (Some(d), h) => {
            if d % dk != 0 {
                return Err(usage(format!(
                    "--target-hidden {d} is not a multiple of the source head dimension {dk}"
                )));
            }
            if let Some(h) = h {
                if h * dk != d {
                    return Err(usage(format!("--target-hidden {d} != --target-heads {h} x head dim {dk}")));
                }
            }
            d / dk
        }
    };
    if heads < source.heads {
        return Err(usage(format!("target heads {heads} < source heads {}", source.heads)));
    }
    let mut config = source.widened_to_heads(heads).with_layers(layers);
    if let Some(f) = file.pick(t.target_ffn, "target-ffn")? {
        config = config.with_ffn_dim(f);
    }
    let sampling = file
        .pick::<String>(t.mapping.clone(), "mapping")?
        .map(|s| s.parse::<Sampling>())
        .transpose()
        .map_err(model_err)?
        .unwrap_or_default();
    Ok((config, sampling))
}

fn verify_opts(seed: u64, tol: f32) -> VerifyOptions {
    VerifyOptions {
        n_inputs: 100,
        seq_len: 16,
        seed,
        tol,
    }
}

pub fn cmd_expand(a: &ExpandArgs, file: &FileConfig) -> Result<u8, CliError> {
    let source_path = file.required_path(a.source.clone(), "source")?;
    let strategy: Strategy = file
        .pick::<String>(a.strategy.clone(), "strategy")?
        .unwrap_or_else(|| "fpi".into())
        .parse()
        .map_err(model_err)?;
    let seed = file.pick(a.seed, "seed")?.unwrap_or(0);
    let tol = file.pick(a.tol, "tol")?;
    let (sc, sp) = load_checkpoint(&source_path)?;
    let (tc, sampling) = target_config(&sc, &a.target, file)?;
    let out = out_dir(file, a.out.clone())?;
    let pair = SourceTargetPair::new(&sc, &sp, &tc).map_err(model_err)?;
    let grown = grow(&pair, strategy, sampling, seed).map_err(model_err)?;
    let check_tol = tol.unwrap_or(1e-4);
    let width_gap = match &grown.widened {
        Some(w) => Some(verify_preservation(&sc, &sp, &pair.widened_config(), w, &verify_opts(seed, check_tol)).map_err(model_err)?),
        None => None,
    };
    let final_gap = verify_preservation(&sc, &sp, &tc, &grown.params, &verify_opts(seed, check_tol)).map_err(model_err)?;
    save_checkpoint(&out.join(MODEL_FILE), &tc, &grown.params)?;
    let order = grown.widened.as_ref().map(|_| stack_order(sc.layers, tc.layers)).transpose().map_err(model_err)?;
    let report = ExpansionReport {
        strategy: strategy.as_str(),
        seed,
        source: &sc,
        target: &tc,
        plan: grown.plan.as_ref(),
        layer_order: order.as_deref(),
        width_gap: width_gap.as_ref(),
        final_gap: Some(&final_gap),
    }
    .render();
    write_text(&out.join(REPORT_FILE), &report)?;
    print!("{report}");
    if let (Some(_), Strategy::Fpi, Some(g)) = (tol, strategy, &width_gap) {
        if !g.passed {
            eprintln!("width-stage logit gap {:e} exceeds --tol {check_tol:e}", g.max_logit_gap);
            return Ok(1);
        }
    }
    Ok(0)
}

pub fn cmd_verify(a: &VerifyArgs, file: &FileConfig) -> Result<u8, CliError> {
    let (sc, sp) = load_checkpoint(&file.required_path(a.source.clone(), "source")?)?;
    let (tc, tp) = load_checkpoint(&file.required_path(a.target.clone(), "target")?)?;
    let opts = VerifyOptions {
        n_inputs: file.pick(a.inputs, "inputs")?.unwrap_or(100),
        seq_len: file.pick(a.seq_len, "seq-len")?.unwrap_or(16),
        seed: file.pick(a.seed, "seed")?.unwrap_or(0),
        tol: file.pick(a.tol, "tol")?.unwrap_or(1e-4),
    };
    if sc.variant != tc.variant {
        return Err(usage("source and target variants differ"));
    }
    let r = verify_preservation(&sc, &sp, &tc, &tp, &opts).map_err(model_err)?;
    let text = format!(
        "max_logit_gap {:e}\nsource_loss {}\ntarget_loss {}\nloss_gap {:e}\ntol {:e}\n{}\n",
        r.max_logit_gap,
        r.source_loss,
        r.target_loss,
        r.loss_gap(),
        opts.tol,
        if r.passed { "PASS" } else { "FAIL" }
    );
    print!("{text}");
    if let Some(dir) = file.path(a.out.clone(), "out")? {
        let dir = out_dir(file, Some(dir))?;
        write_text(&dir.join(REPORT_FILE), &text)?;
    }
    Ok(if r.passed { 0 } else { 1 })
}

/// One entry of `--strategies`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunStrategy {
    pub strategy: Strategy,
    pub two_stage: bool,
}

impl RunStrategy {
    pub fn name(&self) -> String {
        let base = self.strategy.as_str();
        if self.two_stage {
            format!("{base}+two-stage")
        } else {
            base.to_string()
        }
    }
}

impl FromStr for RunStrategy {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let s = s.trim();
        let (base, two_stage) = match s.strip_suffix("+two-stage") {
            Some(b) => (b, true),
            None => (s, false),
        };
        Ok(Self {
            strategy: base.parse().map_err(model_err)?,
            two_stage,
        })
    }
}

pub fn cmd_compare(a: &CompareArgs, file: &FileConfig) -> Result<u8, CliError> {
    let (sc, sp) = load_checkpoint(&file.required_path(a.source.clone(), "source")?)?;
    let (tc, sampling) = target_config(&sc, &a.target, file)?;
    let two_stage_flag = file.flag(a.train.two_stage, "two-stage")?;
    let mut strategies: Vec<RunStrategy> = file
        .pick::<String>(a.strategies.clone(), "strategies")?
        .unwrap_or_else(|| "scratch,directcopy,fpi,aki".into())
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_, _>>()?;
    let aki_two = RunStrategy {
        strategy: Strategy::Aki,
        two_stage: true,
    };
    if two_stage_flag && !strategies.contains(&aki_two) {
        strategies.push(aki_two);
    }
    // scratch first: its final loss sets the default threshold
    strategies.sort_by_key(|s| s.strategy != Strategy::Rand || s.two_stage);
    let threshold_flag = file.pick(a.threshold, "threshold")?;
    if threshold_flag.is_none() && strategies.first().map(|s| s.strategy) != Some(Strategy::Rand) {
        return Err(usage("without --threshold the strategy list must include scratch"));
    }
    let window = file.pick(a.window, "window")?.unwrap_or(100).max(1);
    let full_budget = file.flag(a.full_budget, "full-budget")?;
    let seed = file.pick(a.seed, "seed")?.unwrap_or(0);
    let base_args = TrainArgs {
        two_stage: false,
        ..a.train.clone()
    };
    let settings = train_settings(&base_args, file, tc.max_seq, tc.layers)?;
    let out = out_dir(file, a.out.clone())?;
    let pair = SourceTargetPair::new(&sc, &sp, &tc).map_err(model_err)?;
    let corpus = settings.corpus.load(tc.vocab, settings.corpus_seed).map_err(usage)?;
    if corpus.vocab != tc.vocab {
        return Err(usage(format!("corpus vocabulary {} != model vocabulary {}", corpus.vocab, tc.vocab)));
    }
    let eb = file.pick(a.train.eb, "eb")?.unwrap_or(2);
    let lb = file.pick(a.train.lb, "lb")?.unwrap_or(1);
    let s = &settings.schedule;

    let mut threshold = threshold_flag;
    let mut rows: Vec<SummaryRow> = Vec::new();
    let mut logs: Vec<(String, LossLog)> = Vec::new();
    for rs in &strategies {
        let name = rs.name();
        let dir = out.join(&name);
        fs::create_dir_all(&dir).map_err(|e| failure(format!("{}: {e}", dir.display())))?;
        let grown = grow(&pair, rs.strategy, sampling, seed).map_err(model_err)?;
        let schedule = TrainSchedule {
            seed,
            submodel_epochs: if rs.two_stage { eb } else { 0 },
            layer_step: if rs.two_stage { lb } else { 1 },
            ..*s
        };
        schedule.validate(tc.layers).map_err(model_err)?;
        let init_eval =
            evaluate_corpus(&tc, &grown.params, &corpus, 8, s.batch_size, s.seq_len, s.mask_ratio, seed ^ 0xE7A1)
                .map_err(model_err)?;
        let mut recent: std::collections::VecDeque<f64> = Default::default();
        let thr = threshold;
        let stop = |r: &LossRecord| {
            recent.push_back(r.loss);
            if recent.len() > window {
                recent.pop_front();
            }
            match thr {
                Some(t) if !full_budget && recent.len() == window => recent.iter().sum::<f64>() / window as f64 <= t,
                _ => false,
            }
        };
        let (params, log) = train_logged(&tc, grown.params, &schedule, &corpus, &dir.join(LOSS_FILE), settings.flush_every, stop)?;
        save_checkpoint(&dir.join(MODEL_FILE), &tc, &params)?;
        if threshold.is_none() {
            threshold = log.final_average(window);
        }
        rows.push(SummaryRow {
            strategy: name.clone(),
            init_eval_loss: init_eval,
            final_loss: log.final_average(window).unwrap_or(f64::NAN),
            steps_run: log.len(),
            steps_to_threshold: None,
            flops_to_threshold: None,
            savings_pct: None,
        });
        logs.push((name, log));
        eprintln!("{}: {} steps", rows.last().expect("row").strategy, rows.last().expect("row").steps_run);
    }
    let thr = threshold.expect("threshold set by scratch or flag");
    let scratch_steps = logs
        .iter()
        .zip(&strategies)
        .find(|(_, rs)| rs.strategy == Strategy::Rand && !rs.two_stage)
        .and_then(|((_, log), _)| steps_to_threshold(log, thr, window));
    for (row, (_, log)) in rows.iter_mut().zip(&logs) {
        row.steps_to_threshold = steps_to_threshold(log, thr, window);
        row.flops_to_threshold = row
            .steps_to_threshold
            .and_then(|st| log.records().iter().find(|r| r.step == st).map(|r| r.flops));
        row.savings_pct = match (row.steps_to_threshold, scratch_steps) {
            (Some(st), Some(sc)) => Some(100.0 * (1.0 - st as f64 / sc as f64)),
            _ => None,
        };
    }
    output::write_summary_csv(&out.join(SUMMARY_FILE), &rows, thr).map_err(failure)?;
    println!("threshold {thr:.4} (window {window})");
    for r in &rows {
        println!(
            "{:<20} init {:.4} steps_to_threshold {:>6} savings {}",
            r.strategy,
            r.init_eval_loss,
            r.steps_to_threshold.map(|s| s.to_string()).unwrap_or_else(|| "inf".into()),
            r.savings_pct.map(|s| format!("{s:.1}%")).unwrap_or_else(|| "n/a".into())
        );
    }
    Ok(0)
}

pub fn cmd_dump_attention(a: &DumpArgs, file: &FileConfig) -> Result<u8, CliError> {
    let (config, params) = load_checkpoint(&file.required_path(a.source.clone(), "source")?)?;
    let seed = file.pick(a.seed, "seed")?.unwrap_or(0);
    let ids: Vec<u32> = if let Some(ids) = file.pick::<String>(a.ids.clone(), "ids")? {
        ids.split(',')
            .map(|t| t.trim().parse::<u32>().map_err(|e| usage(format!("--ids: {e}"))))
            .collect::<Result<_, _>>()?
    } else if let Some(text) = file.pick::<String>(a.text.clone(), "text")? {
        Corpus::from_bytes(text.as_bytes()).tokens
    } else if let Some(spec) = file.pick::<String>(a.corpus.clone(), "corpus")? {
        let spec: CorpusSpec = spec.parse().map_err(usage)?;
        let corpus = spec.load(config.vocab, seed).map_err(usage)?;
        let len = file.pick(a.seq_len, "seq-len")?.unwrap_or(16).min(config.max_seq);
        let mut rng = growformer_core::SeededRng::new(seed);
        corpus.sample_windows(1, len, &mut rng).map_err(model_err)?[0].to_vec()
    } else {
        let len = file.pick(a.seq_len, "seq-len")?.unwrap_or(16).min(config.max_seq);
        random_eval_batch(&config, 1, len, seed).map_err(model_err)?.sequence(0).ids.to_vec()
    };
    if ids.is_empty() {
        return Err(usage("empty input"));
    }
    let n = ids.len();
    let batch = Batch::unlabeled(1, n, ids).map_err(model_err)?;
    let maps = attention_maps(&config, &params, &batch).map_err(model_err)?;
    let out = out_dir(file, a.out.clone())?;
    output::write_attention_csv(&out.join(ATTENTION_FILE), &maps).map_err(failure)?;
    println!("{} maps of {n}x{n} written", maps.len());
    Ok(0)
}

/// Verification on caller-supplied batches (used by tests and tooling).
pub fn verify_batches(
    sc: &ModelConfig,
    sp: &ParamSet,
    tc: &ModelConfig,
    tp: &ParamSet,
    batches: &[Batch],
    tol: f32,
) -> Result<growformer_core::expansion::PreservationReport, CliError> {
    verify_on_batches(sc, sp, tc, tp, batches, tol).map_err(model_err)
}
