//! Command-line workflow: synthesize, train, evaluate, calibrate, analyse.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{self, AblationReport, AnalysisError, GroupBy};
use crate::audio::AudioError;
use crate::config::{self, ConfigError, KeyValues};
use crate::corpus::{self, Checkpoint, CorpusError, Manifest, Split, SyntheticSpec};
use crate::metrics::{self, MetricsError, ThresholdSearch, ThresholdSet};
use crate::model::{ModelConfig, ModelError, ModelKind};
use crate::tensor::TensorError;
use crate::training::{self, Dataset, TrainConfig, TrainError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "speechgrade", version, about = "Attention-fusion scoring of spoken responses")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Worker threads for evaluation and analysis.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus (manifest and WAV files).
    Synth(SynthArgs),
    /// Train a model on the train split and write a checkpoint.
    Train(TrainArgs),
    /// Report QWK and MSE of a checkpoint on one split.
    Eval(EvalArgs),
    /// Fit grade thresholds on the validation split.
    Calibrate(CalibrateArgs),
    /// Replace audio with white noise and compare QWK.
    AblateNoise(AblateNoiseArgs),
    /// Replace audio with files from a directory and compare QWK.
    AblateSwap(AblateSwapArgs),
    /// Text and audio attention shares, grouped.
    AttnSplit(AttnSplitArgs),
    /// Per-position attention weights for one response.
    AttnTrace(AttnTraceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Lines,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
    classes: u32,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    per_class: u32,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "P1")]
    prompt: String,
    /// Whether the audio carries grade signal.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    audio_informative: bool,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    text_informative: bool,
    #[arg(long)]
    audio_noise: Option<f64>,
    #[arg(long)]
    text_noise: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// Layer widths from the model description.
    Full,
    /// Narrow layers for CPU-scale runs.
    Desk,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    model: ModelKind,
    /// Flat key=value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Training report path (JSON lines); defaults to `<out>.report.jsonl`.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    prompt: Option<String>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long)]
    thresholds: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Threshold file; defaults to `<ckpt>.thresholds`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct AblateNoiseArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct AblateSwapArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Directory of `<id>.wav` replacement files.
    #[arg(long)]
    replacements: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct AttnSplitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_parser = parse_group)]
    by: GroupBy,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Debug, Args)]
struct AttnTraceArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    id: String,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse()
}

fn parse_group(s: &str) -> Result<GroupBy, String> {
    s.parse()
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

fn numeric_tensor(e: &TensorError) -> bool {
    matches!(e, TensorError::NonFinite { .. })
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let code = match &e {
            CorpusError::Config(_) => EXIT_USAGE,
            CorpusError::Model(ModelError::Tensor(t)) if numeric_tensor(t) => EXIT_NUMERIC,
            _ => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let code = match &e {
            TrainError::NonFinite(_) => EXIT_NUMERIC,
            TrainError::Tensor(t) | TrainError::Model(ModelError::Tensor(t)) if numeric_tensor(t) => EXIT_NUMERIC,
            TrainError::Audio(AudioError::Numeric { .. }) => EXIT_NUMERIC,
            TrainError::Config(_) => EXIT_USAGE,
            TrainError::Corpus(c) => return CorpusError::Degenerate(c.to_string()).into(),
            _ => EXIT_DATA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Train(t) => t.into(),
            other => Self::data(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        Self::data(e.to_string())
    }
}

fn log_filter(verbose: u8) -> &'static str {
    match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    }
}

/// Parses arguments, runs the subcommand, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(log_filter(cli.verbose)))
        .format_timestamp(None)
        .try_init();
    training::set_eval_threads(cli.threads);
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Calibrate(a) => calibrate(a),
        Command::AblateNoise(a) => ablate_noise(a),
        Command::AblateSwap(a) => ablate_swap(a),
        Command::AttnSplit(a) => attn_split(a),
        Command::AttnTrace(a) => attn_trace(a),
    };
    match result {
        Ok(out) => {
            print!("{out}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn seed_or_default(seed: Option<u64>, what: &str) -> u64 {
    let s = seed.unwrap_or(0);
    if seed.is_none() {
        eprintln!("{what} seed not given; using {s}");
    }
    s
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| x.to_string())
}

fn fmt3(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:.3}"))
}

fn synth(a: SynthArgs) -> Result<String, CliError> {
    let mut spec = SyntheticSpec {
        classes: a.classes as usize,
        per_class: a.per_class as usize,
        seed: seed_or_default(a.seed, "synth"),
        prompt: a.prompt,
        audio_informative: a.audio_informative,
        text_informative: a.text_informative,
        ..SyntheticSpec::default()
    };
    if let Some(n) = a.audio_noise {
        spec.audio_noise = n;
    }
    if let Some(n) = a.text_noise {
        spec.text_noise = n;
    }
    fs::create_dir_all(&a.out).map_err(|e| CliError::data(format!("{}: {e}", a.out.display())))?;
    let path = corpus::generate_synthetic_corpus(&spec, &a.out)?;
    Ok(format!(
        "wrote {} records to {}\n",
        spec.classes * spec.per_class,
        path.display()
    ))
}

const TRAIN_KEYS: &[&str] = &[
    "preset",
    "lr",
    "batch_size",
    "max_epochs",
    "patience",
    "dropout",
    "seed",
    "split_seed",
    "max_tokens",
    "embeddings",
    "freeze_embeddings",
    "prompt",
];

/// Preset, then config file, then flags.
fn build_train_config(a: &TrainArgs) -> Result<(TrainConfig, Option<String>), CliError> {
    let kv = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            KeyValues::parse(&text)?
        }
        None => KeyValues::default(),
    };
    let known: Vec<&str> = TRAIN_KEYS
        .iter()
        .chain(config::MODEL_KEYS)
        .chain(config::FRONTEND_KEYS)
        .copied()
        .collect();
    kv.reject_unknown(&known)?;
    let preset = match (a.preset, kv.raw("preset")) {
        (Some(p), _) => p,
        (None, Some("desk")) => Preset::Desk,
        (None, Some("full")) | (None, None) => Preset::Full,
        (None, Some(other)) => return Err(CliError::usage(format!("unknown preset {other:?}; use full or desk"))),
    };
    let mut c = TrainConfig {
        model: match preset {
            Preset::Full => ModelConfig::default(),
            Preset::Desk => ModelConfig::desk(),
        },
        ..TrainConfig::default()
    };
    kv.read("lr", &mut c.learning_rate)?;
    kv.read("batch_size", &mut c.batch_size)?;
    kv.read("max_epochs", &mut c.max_epochs)?;
    kv.read("patience", &mut c.patience)?;
    kv.read("dropout", &mut c.dropout)?;
    kv.read("seed", &mut c.seed)?;
    kv.read("split_seed", &mut c.split_seed)?;
    kv.read("freeze_embeddings", &mut c.freeze_embeddings)?;
    c.max_tokens = kv.get("max_tokens")?;
    c.embeddings = kv.raw("embeddings").map(PathBuf::from);
    config::read_model_config(&kv, &mut c.model)?;
    config::read_frontend_config(&kv, &mut c.frontend)?;

    let seed_given = a.seed.is_some() || kv.raw("seed").is_some();
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if !seed_given {
        eprintln!("train seed not given; using {}", c.seed);
    }
    if let Some(v) = a.split_seed {
        c.split_seed = v;
    }
    if let Some(v) = a.lr {
        c.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = a.max_epochs {
        c.max_epochs = v;
    }
    if let Some(v) = a.patience {
        c.patience = v;
    }
    if let Some(v) = a.dropout {
        c.dropout = v;
    }
    if let Some(v) = &a.embeddings {
        c.embeddings = Some(v.clone());
    }
    c.validate(a.model).map_err(|e| CliError::usage(e.to_string()))?;
    let prompt = a.prompt.clone().or_else(|| kv.raw("prompt").map(str::to_string));
    Ok((c, prompt))
}

fn load_prompt(manifest: &Manifest, prompt: Option<&str>) -> Result<String, CliError> {
    match prompt {
        Some(p) if manifest.scale(p).is_some() => Ok(p.to_string()),
        Some(p) => Err(CliError::data(format!("prompt {p:?} is not declared in the manifest"))),
        None => Ok(manifest.sole_prompt()?.to_string()),
    }
}

fn train(a: TrainArgs) -> Result<String, CliError> {
    let (config, prompt) = build_train_config(&a)?;
    let manifest = corpus::load_manifest(&a.manifest)?;
    let prompt = load_prompt(&manifest, prompt.as_deref())?;
    let splits = corpus::resolve_splits(&manifest.records_for(&prompt), config.split_seed)?;
    let train_set = Dataset::load(&manifest, &prompt, &splits.train)?;
    let val_set = Dataset::load(&manifest, &prompt, &splits.val)?;
    let (ck, report) = training::train(a.model, &train_set, &val_set, &config)?;
    ck.save(&a.out)?;
    let report_path = a.report.unwrap_or_else(|| with_suffix(&a.out, ".report.jsonl"));
    fs::write(&report_path, report.to_json_lines())
        .map_err(|e| CliError::data(format!("{}: {e}", report_path.display())))?;
    let sel = report.selected();
    Ok(format!(
        "selected epoch {} of {} (val loss {:.5}, val QWK {})\ncheckpoint {}\nreport {}\n",
        report.selected_epoch,
        report.epochs.len(),
        sel.val_loss,
        fmt3(sel.val_qwk),
        a.out.display(),
        report_path.display()
    ))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Checkpoint, manifest, and the checkpoint's prompt, loaded and cross-checked.
fn open(d: &DataArgs) -> Result<(Checkpoint, Manifest), CliError> {
    let ck = Checkpoint::load(&d.ckpt)?;
    let manifest = corpus::load_manifest(&d.manifest)?;
    match manifest.scale(&ck.prompt) {
        Some(s) if *s == ck.scale => Ok((ck, manifest)),
        Some(s) => Err(CliError::data(format!(
            "manifest grades {:?} do not match checkpoint scale {:?}",
            s.labels(),
            ck.scale.labels()
        ))),
        None => Err(CliError::data(format!("manifest has no prompt {:?}", ck.prompt))),
    }
}

fn split_dataset(ck: &Checkpoint, manifest: &Manifest, split: SplitArg) -> Result<Dataset, CliError> {
    let records = manifest.records_for(&ck.prompt);
    let chosen = match split {
        SplitArg::All => records,
        other => {
            let splits = corpus::resolve_splits(&records, ck.split_seed)?;
            let which = match other {
                SplitArg::Train => Split::Train,
                SplitArg::Val => Split::Val,
                _ => Split::Test,
            };
            splits.get(which).to_vec()
        }
    };
    Ok(Dataset::load(manifest, &ck.prompt, &chosen)?)
}

pub fn read_thresholds(path: &Path) -> Result<ThresholdSet, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let cuts = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| CliError::data(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ThresholdSet::new(cuts)?)
}

pub fn format_thresholds(t: &ThresholdSet) -> String {
    t.cuts().iter().map(|c| format!("{c}\n")).collect()
}

fn eval(a: EvalArgs) -> Result<String, CliError> {
    let (ck, manifest) = open(&a.data)?;
    let thresholds = a.thresholds.as_deref().map(read_thresholds).transpose()?;
    let data = split_dataset(&ck, &manifest, a.split)?;
    let plain = training::evaluate(&ck, &data, None)?;
    let tuned = thresholds
        .as_ref()
        .map(|t| training::evaluate(&ck, &data, Some(t)))
        .transpose()?;
    let mut out = String::new();
    match a.format {
        Format::Lines => {
            let _ = writeln!(out, "responses {}", plain.predictions.len());
            let _ = writeln!(out, "qwk {}", fmt_opt(plain.qwk));
            let _ = writeln!(out, "mse {}", plain.mse);
            let _ = writeln!(out, "mse_rounded {}", plain.mse_rounded);
            if let Some(t) = &tuned {
                let _ = writeln!(out, "qwk_thresholds {}", fmt_opt(t.qwk));
                let _ = writeln!(out, "mse_rounded_thresholds {}", t.mse_rounded);
            }
        }
        Format::Text => {
            let _ = writeln!(out, "{} responses from {} split", plain.predictions.len(), format!("{:?}", a.split).to_lowercase());
            let _ = writeln!(out, "QWK {}  MSE {:.3}", fmt3(plain.qwk), plain.mse);
            if let Some(t) = &tuned {
                let _ = writeln!(out, "with thresholds: QWK {}  MSE(rounded) {:.3}", fmt3(t.qwk), t.mse_rounded);
            }
        }
    }
    Ok(out)
}

fn calibrate(a: CalibrateArgs) -> Result<String, CliError> {
    let (ck, manifest) = open(&a.data)?;
    if !(a.step > 0.0 && a.step < 1.0) {
        return Err(CliError::usage(format!("step {} outside (0, 1)", a.step)));
    }
    let data = split_dataset(&ck, &manifest, SplitArg::Val)?;
    let plain = training::evaluate(&ck, &data, None)?;
    let before = plain.qwk.ok_or_else(|| CliError::data(MetricsError::UndefinedKappa.to_string()))?;
    let search = ThresholdSearch {
        step: a.step,
        ..ThresholdSearch::default()
    };
    let (cuts, after) = metrics::optimize_thresholds(&plain.raw_scores(), &plain.human_grades(), ck.scale.len(), search)?;
    let path = a.out.unwrap_or_else(|| with_suffix(&a.data.ckpt, ".thresholds"));
    fs::write(&path, format_thresholds(&cuts)).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(match a.format {
        Format::Lines => format!("val_qwk_before {before}\nval_qwk_after {after}\n"),
        Format::Text => format!(
            "validation QWK {before:.3} -> {after:.3}\nthresholds {}\nwritten to {}\n",
            cuts.cuts().iter().map(|c| format!("{c:.2}")).collect::<Vec<_>>().join(" "),
            path.display()
        ),
    })
}

fn ablation_output(name: &str, r: &AblationReport, format: Format) -> String {
    let drop = r.drop();
    let mut out = String::new();
    match format {
        Format::Lines => {
            for (label, pair) in [("original", &r.original), (name, &r.ablated), ("drop", &drop)] {
                let _ = writeln!(out, "{label}_without_to {}", fmt_opt(pair.without_to));
                let _ = writeln!(out, "{label}_with_to {}", fmt_opt(pair.with_to));
            }
            let _ = writeln!(out, "skipped {}", r.skipped.len());
        }
        Format::Text => {
            let _ = writeln!(out, "{:<12} {:>10} {:>10}", "condition", "without TO", "with TO");
            for (label, pair) in [("original", &r.original), (name, &r.ablated), ("drop", &drop)] {
                let _ = writeln!(out, "{label:<12} {:>10} {:>10}", fmt3(pair.without_to), fmt3(pair.with_to));
            }
            if !r.skipped.is_empty() {
                let _ = writeln!(out, "skipped {} responses: {}", r.skipped.len(), r.skipped.join(" "));
            }
        }
    }
    out
}

fn ablate_noise(a: AblateNoiseArgs) -> Result<String, CliError> {
    let seed = seed_or_default(a.seed, "noise");
    let (ck, manifest) = open(&a.data)?;
    let test = split_dataset(&ck, &manifest, SplitArg::Test)?;
    let val = split_dataset(&ck, &manifest, SplitArg::Val)?;
    let report = analysis::ablate_white_noise(&ck, &test, &val, seed)?;
    Ok(ablation_output("noise", &report, a.format))
}

fn ablate_swap(a: AblateSwapArgs) -> Result<String, CliError> {
    let (ck, manifest) = open(&a.data)?;
    if !a.replacements.is_dir() {
        return Err(CliError::data(format!("{} is not a directory", a.replacements.display())));
    }
    let test = split_dataset(&ck, &manifest, SplitArg::Test)?;
    let val = split_dataset(&ck, &manifest, SplitArg::Val)?;
    let report = analysis::ablate_swapped_audio(&ck, &test, &val, &a.replacements)?;
    Ok(ablation_output("swapped", &report, a.format))
}

fn attn_split(a: AttnSplitArgs) -> Result<String, CliError> {
    let (ck, manifest) = open(&a.data)?;
    let data = split_dataset(&ck, &manifest, a.split)?;
    let rows = analysis::attention_split_report(&ck, &data, a.by)?;
    let mut out = String::new();
    match a.format {
        Format::Lines => {
            for r in &rows {
                let _ = writeln!(out, "{}", serde_json::to_string(r).expect("serializable"));
            }
        }
        Format::Text => {
            let _ = writeln!(out, "{:<12} {:>9} {:>8} {:>8}", "group", "responses", "TA%", "AA%");
            for r in &rows {
                let _ = writeln!(out, "{:<12} {:>9} {:>8.2} {:>8.2}", r.group, r.responses, r.text_pct, r.audio_pct);
            }
        }
    }
    Ok(out)
}

fn attn_trace(a: AttnTraceArgs) -> Result<String, CliError> {
    let (ck, manifest) = open(&a.data)?;
    let record = manifest
        .records
        .iter()
        .find(|r| r.id == a.id)
        .ok_or_else(|| CliError::data(format!("no response with id {:?}", a.id)))?;
    if record.prompt != ck.prompt {
        return Err(CliError::data(format!(
            "response {} answers prompt {:?}, checkpoint is for {:?}",
            a.id, record.prompt, ck.prompt
        )));
    }
    let data = Dataset::load(&manifest, &ck.prompt, std::slice::from_ref(record))?;
    let rows = analysis::export_attention_trace(&ck, &data.responses[0])?;
    let text: String = rows
        .iter()
        .map(|r| serde_json::to_string(r).expect("serializable") + "\n")
        .collect();
    match a.out {
        Some(path) => {
            fs::write(&path, &text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            Ok(format!("wrote {} positions to {}\n", rows.len(), path.display()))
        }
        None => Ok(text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(run(["speechgrade", "synth", "--classes", "1", "--per-class", "2", "--out", "x"]), EXIT_USAGE);
        assert_eq!(run(["speechgrade", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["speechgrade", "--help"]), EXIT_OK);
    }

    #[test]
    fn model_kind_error_lists_valid_kinds() {
        let err = Cli::try_parse_from(["speechgrade", "train", "--manifest", "m", "--model", "X", "--out", "o"]).unwrap_err();
        assert!(err.to_string().contains("A, T, MMAF"), "{err}");
    }

    #[test]
    fn threshold_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t");
        let t = ThresholdSet::new(vec![0.37, 1.61]).unwrap();
        fs::write(&path, format_thresholds(&t)).unwrap();
        assert_eq!(read_thresholds(&path).unwrap(), t);
        fs::write(&path, "1.5\n0.5\n").unwrap();
        assert!(read_thresholds(&path).is_err());
    }
}
