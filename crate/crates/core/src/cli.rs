//! Command-line front end.
//!
//! Every command resolves its settings as defaults < `--config` file <
//! explicit flags, writes the result to `run_config.json` in its output
//! directory before doing any work, and can be rerun from that file.
//!
//! Exit codes: 0 success, 1 other failure, 2 usage or configuration error,
//! 3 I/O or malformed data, 4 training divergence, 5 missing checkpoint.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::datasets::{self, Dataset, DatasetKind, Split};
use crate::error::Error;
use crate::eval::{
    evaluate_suite, export_report, label_budget_study, run_iat_experiment, sweep_rank_dim, write_raw_csv,
    ExperimentOutput, MetricReport, ReportFormat, ReportKeys, RunSpec, SuiteConfig,
};
use crate::exec::{with_jobs, Exec};
use crate::iat::{train_iat, IatConfig, IatVariant};
use crate::interp::InterpolationKind;
use crate::metrics::Metric;
use crate::models::{
    load_checkpoint, save_checkpoint, train, AnyModel, Checkpoint, GvaeConfig, ModelSpec, TrainConfig, TrainOutcome,
    VaeConfig,
};
use crate::ndkernel::{ParamStore, Tensor};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DIVERGED: i32 = 4;
pub const EXIT_MISSING_CHECKPOINT: i32 = 5;

#[derive(Parser, Debug)]
#[command(name = "latentgeo", version, about = "Quantitative evaluation of VAE latent-space interpolation")]
pub struct Cli {
    /// Worker threads; outputs are identical for every value.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Fallback for every seed not given otherwise.
    #[arg(long, global = true, env = "LATENTGEO_SEED")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    GenData(GenDataArgs),
    /// Train a model (optionally with interpolation-aware training).
    Train(TrainArgs),
    /// Evaluate a checkpoint with one interpolation algorithm.
    Eval(EvalArgs),
    /// Evaluate a checkpoint with several interpolation algorithms.
    Compare(EvalArgs),
    /// Latent-dimension / rank grid, or an IAT-variant table with `--variants`.
    Sweep(SweepArgs),
    /// Alias of `train --iat <variant>`.
    Iat(TrainArgs),
    /// Interpolation-aware training under growing labeled budgets.
    LabelStudy(LabelStudyArgs),
    /// Merge report files and print them as a table.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindArg {
    Image,
    Graph,
}

/// Flags shared by every command that reads a `--config` file.
#[derive(Args, Debug, Clone, Serialize)]
pub struct ConfigArg {
    /// JSON settings file (for example a previous run's run_config.json).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GenDataArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArg,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<KindArg>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long = "data-seed")]
    #[serde(skip_serializing_if = "Option::is_none", rename = "seed")]
    pub data_seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objects: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angles: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stamps: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attach_exponent: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenDataConfig {
    pub kind: KindArg,
    pub out: PathBuf,
    pub seed: u64,
    pub objects: usize,
    pub angles: usize,
    pub size: usize,
    pub nodes: usize,
    pub stamps: usize,
    pub attach_exponent: f64,
}

/// Model and optimiser flags.
#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct ModelArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latent_dim: Option<usize>,
    /// Rank of the factored mean head (image model only).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gcn_hidden: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_x: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iters: Option<usize>,
    /// Seed for initialisation and training noise.
    #[arg(long = "model-seed")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub latent_dim: usize,
    pub rank: Option<usize>,
    pub hidden: usize,
    pub gcn_hidden: usize,
    pub sigma_x: f64,
    pub lr: f64,
    pub batch: usize,
    pub iters: usize,
    pub model_seed: u64,
}

impl ModelSettings {
    fn defaults(kind: DatasetKind, data: &Dataset, iat: bool, seed: u64) -> Self {
        let sample_side = data.sequences[0].samples[0].x.shape()[0];
        match kind {
            DatasetKind::Image => Self {
                latent_dim: 32,
                rank: None,
                hidden: 256,
                gcn_hidden: 32,
                sigma_x: 1.0,
                lr: 5e-4,
                batch: 40,
                iters: if iat { 8000 } else { 4000 },
                model_seed: seed,
            },
            DatasetKind::Graph => Self {
                latent_dim: 16,
                rank: None,
                hidden: 256,
                gcn_hidden: 32.min(sample_side.max(1)),
                sigma_x: 1.0,
                lr: GRAPH_LR,
                batch: 10,
                iters: if iat { 5000 } else { 3000 },
                model_seed: seed,
            },
        }
    }

    pub fn spec(&self, data: &Dataset) -> ModelSpec {
        let side = data.sequences[0].samples[0].x.shape()[0];
        match data.kind {
            DatasetKind::Image => ModelSpec::Vae(VaeConfig {
                side,
                hidden: self.hidden,
                latent_dim: self.latent_dim,
                rank: self.rank,
                sigma_x: self.sigma_x,
            }),
            DatasetKind::Graph => ModelSpec::Gvae(GvaeConfig {
                nodes: side,
                gcn_hidden: self.gcn_hidden,
                latent_dim: self.latent_dim,
            }),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch: self.batch,
            iters: self.iters,
            seed: self.model_seed,
        }
    }
}

/// Default learning rate of the graph model, chosen on the validation split.
pub const GRAPH_LR: f64 = 5e-3;

#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct IatArgs {
    /// Interpolation-aware training variant.
    #[arg(long = "iat", alias = "variant")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iat: Option<IatVariant>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_iat: Option<f64>,
    /// Interpolation algorithm used inside the IAT loss.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interp: Option<InterpolationKind>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triplet_batch: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labeled_budget: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pretrain_iters: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IatSettings {
    pub iat: Option<IatVariant>,
    pub lambda_iat: f64,
    pub interp: InterpolationKind,
    pub triplet_batch: usize,
    pub labeled_budget: Option<usize>,
    pub pretrain_iters: usize,
}

impl IatSettings {
    fn defaults(kind: DatasetKind) -> Self {
        Self {
            iat: None,
            lambda_iat: if kind == DatasetKind::Image { 1.0 } else { 5.0 },
            interp: default_kind(kind),
            triplet_batch: 20,
            labeled_budget: None,
            pretrain_iters: 0,
        }
    }

    fn config(&self, variant: IatVariant) -> IatConfig {
        IatConfig {
            variant,
            kind: self.interp,
            lambda_iat: self.lambda_iat,
            triplet_batch: self.triplet_batch,
            labeled_budget: self.labeled_budget,
            pretrain_iters: self.pretrain_iters,
        }
    }
}

/// Normalised interpolation for images, slerp for graphs.
pub fn default_kind(kind: DatasetKind) -> InterpolationKind {
    match kind {
        DatasetKind::Image => InterpolationKind::Norm,
        DatasetKind::Graph => InterpolationKind::Slerp,
    }
}

#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct EvalFlags {
    /// Number of evaluation triplets.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triplets: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub triplets: usize,
    pub eval_seed: u64,
}

impl EvalSettings {
    fn suite(&self) -> SuiteConfig {
        SuiteConfig {
            n_triplets: self.triplets,
            seed: self.eval_seed,
            split: Split::Test,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArg,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub iat: IatArgs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRunConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    #[serde(flatten)]
    pub model: ModelSettings,
    #[serde(flatten)]
    pub iat: IatSettings,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArg,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Interpolation algorithms, comma separated.
    #[arg(long, alias = "kind", value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kinds: Option<Vec<InterpolationKind>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub eval: EvalFlags,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRunConfig {
    pub checkpoint: PathBuf,
    pub data: PathBuf,
    pub out: PathBuf,
    pub kinds: Vec<InterpolationKind>,
    #[serde(flatten)]
    pub eval: EvalSettings,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArg,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranks: Option<Vec<usize>>,
    /// IAT variants (`none` is the unsupervised baseline); switches to the IAT table.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variants: Option<Vec<VariantArg>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kinds: Option<Vec<InterpolationKind>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub iat: IatArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub eval: EvalFlags,
}

/// An IAT variant or the unsupervised baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct VariantArg(pub Option<IatVariant>);

impl std::str::FromStr for VariantArg {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        if s == "none" {
            Ok(Self(None))
        } else {
            s.parse().map(|v| Self(Some(v)))
        }
    }
}

impl TryFrom<String> for VariantArg {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

impl From<VariantArg> for String {
    fn from(v: VariantArg) -> String {
        v.to_string()
    }
}

impl fmt::Display for VariantArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0.map_or("none", |v| v.as_str()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRunConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    pub variants: Vec<VariantArg>,
    pub kinds: Vec<InterpolationKind>,
    #[serde(flatten)]
    pub model: ModelSettings,
    #[serde(flatten)]
    pub iat: IatSettings,
    #[serde(flatten)]
    pub eval: EvalSettings,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct LabelStudyArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArg,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budgets: Option<Vec<usize>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub iat: IatArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub eval: EvalFlags,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelStudyRunConfig {
    pub data: PathBuf,
    pub out: PathBuf,
    pub budgets: Vec<usize>,
    #[serde(flatten)]
    pub model: ModelSettings,
    #[serde(flatten)]
    pub iat: IatSettings,
    #[serde(flatten)]
    pub eval: EvalSettings,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ReportArgs {
    #[command(flatten)]
    #[serde(skip)]
    pub cfg: ConfigArg,
    /// Report files (.csv or .json) to merge.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<PathBuf>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRunConfig {
    pub inputs: Vec<PathBuf>,
    pub out: PathBuf,
}

/// Raised when `--checkpoint` names a file that does not exist.
#[derive(Debug)]
pub struct MissingCheckpoint(pub PathBuf);

impl fmt::Display for MissingCheckpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "checkpoint {} does not exist", self.0.display())
    }
}

impl std::error::Error for MissingCheckpoint {}

/// Exit code for a failed command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<MissingCheckpoint>().is_some() {
        return EXIT_MISSING_CHECKPOINT;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => EXIT_USAGE,
        Some(Error::Io(_) | Error::Data(_)) => EXIT_IO,
        Some(Error::Diverged { .. }) => EXIT_DIVERGED,
        Some(Error::Triplet { source, .. }) if matches!(**source, Error::Io(_)) => EXIT_IO,
        Some(_) => EXIT_FAILURE,
        None if err.downcast_ref::<std::io::Error>().is_some() => EXIT_IO,
        None => EXIT_FAILURE,
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    let jobs = cli.jobs.max(1);
    with_jobs(jobs, || {
        let exec = Exec::from_jobs(jobs);
        let seed = cli.seed.unwrap_or(0);
        match &cli.command {
            Command::GenData(a) => cmd_gen_data(a, seed, exec),
            Command::Train(a) => cmd_train(a, seed, false),
            Command::Iat(a) => cmd_train(a, seed, true),
            Command::Eval(a) => cmd_eval(a, seed, exec, false),
            Command::Compare(a) => cmd_eval(a, seed, exec, true),
            Command::Sweep(a) => cmd_sweep(a, seed, exec),
            Command::LabelStudy(a) => cmd_label_study(a, seed, exec),
            Command::Report(a) => cmd_report(a),
        }
    })
}

/// `defaults`, overridden key by key by the config file, then by the flags.
fn resolve<T: DeserializeOwned + Serialize>(
    defaults: &T,
    config: Option<&Path>,
    flags: &impl Serialize,
) -> anyhow::Result<T> {
    let mut merged: Map<String, Value> = match serde_json::to_value(defaults)? {
        Value::Object(m) => m,
        _ => unreachable!("settings serialize to objects"),
    };
    if let Some(path) = config {
        let text = std::fs::read(path).map_err(Error::from).with_context(|| format!("reading {}", path.display()))?;
        match serde_json::from_slice::<Value>(&text).map_err(Error::from)? {
            Value::Object(m) => merged.extend(m),
            _ => return Err(Error::Config(format!("{} is not a JSON object", path.display())).into()),
        }
    }
    if let Value::Object(m) = serde_json::to_value(flags)? {
        merged.extend(m);
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| Error::Config(format!("settings: {e}")).into())
}

/// Reads just enough of a config file to find a value needed before defaults exist.
fn peek_config(config: Option<&Path>, key: &str) -> anyhow::Result<Option<Value>> {
    let Some(path) = config else { return Ok(None) };
    let text = std::fs::read(path).map_err(Error::from).with_context(|| format!("reading {}", path.display()))?;
    let v: Value = serde_json::from_slice(&text).map_err(Error::from)?;
    Ok(v.get(key).cloned())
}

fn required_path(flag: &Option<PathBuf>, config: Option<&Path>, key: &str) -> anyhow::Result<PathBuf> {
    if let Some(p) = flag {
        return Ok(p.clone());
    }
    match peek_config(config, key)? {
        Some(Value::String(s)) => Ok(PathBuf::from(s)),
        _ => Err(Error::Config(format!("--{key} is required")).into()),
    }
}

fn load_data(path: &Path) -> anyhow::Result<Dataset> {
    datasets::load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

/// Fresh `<root>/<command>-<timestamp>[-k]` directory.
fn run_dir(root: &Path, command: &str) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(root).map_err(Error::from)?;
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S").to_string();
    for k in 0.. {
        let name = if k == 0 { format!("{command}-{stamp}") } else { format!("{command}-{stamp}-{k}") };
        let dir = root.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::from(e).into()),
        }
    }
    unreachable!()
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(Error::from).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn cmd_gen_data(a: &GenDataArgs, seed: u64, exec: Exec) -> anyhow::Result<()> {
    let config = a.cfg.config.as_deref();
    let kind: KindArg = match (a.kind, peek_config(config, "kind")?) {
        (Some(k), _) => k,
        (None, Some(v)) => serde_json::from_value(v).map_err(|e| Error::Config(format!("kind: {e}")))?,
        (None, None) => return Err(Error::Config("--kind is required".into()).into()),
    };
    let defaults = GenDataConfig {
        kind,
        out: PathBuf::from(match kind {
            KindArg::Image => "data/image",
            KindArg::Graph => "data/graph",
        }),
        seed,
        objects: 20,
        angles: 60,
        size: 32,
        nodes: 120,
        stamps: 50,
        attach_exponent: 1.0,
    };
    let c: GenDataConfig = resolve(&defaults, config, a)?;
    std::fs::create_dir_all(&c.out).map_err(Error::from)?;
    write_json(&c.out.join("run_config.json"), &c)?;
    let data = match c.kind {
        KindArg::Image => datasets::generate_image_dataset(c.objects, c.angles, c.size, c.seed, exec)?,
        KindArg::Graph => datasets::generate_citation_graph(c.nodes, c.stamps, c.seed, c.attach_exponent)?,
    };
    datasets::save_dataset(&c.out, &data)?;
    let count = |s| data.split_samples(s).len();
    println!(
        "wrote {} dataset to {}: {} sequences, {} samples (train {}, val {}, test {})",
        match c.kind {
            KindArg::Image => "image",
            KindArg::Graph => "graph",
        },
        c.out.display(),
        data.sequences.len(),
        data.len(),
        count(Split::Train),
        count(Split::Val),
        count(Split::Test)
    );
    Ok(())
}

fn write_loss_csv(path: &Path, trace: &[f64]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    w.write_record(["iteration", "loss"]).map_err(Error::from)?;
    for (i, l) in trace.iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()]).map_err(Error::from)?;
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

fn cmd_train(a: &TrainArgs, seed: u64, require_iat: bool) -> anyhow::Result<()> {
    let config = a.cfg.config.as_deref();
    let data_path = required_path(&a.data, config, "data")?;
    let data = load_data(&data_path)?;
    let wants_iat = a.iat.iat.is_some() || matches!(peek_config(config, "iat")?, Some(Value::String(_)));
    let defaults = TrainRunConfig {
        data: data_path,
        out: PathBuf::from("runs"),
        model: ModelSettings::defaults(data.kind, &data, wants_iat, seed),
        iat: IatSettings::defaults(data.kind),
    };
    let c: TrainRunConfig = resolve(&defaults, config, a)?;
    if require_iat && c.iat.iat.is_none() {
        return Err(Error::Config("iat needs --variant".into()).into());
    }
    let dir = run_dir(&c.out, if require_iat { "iat" } else { "train" })?;
    write_json(&dir.join("run_config.json"), &c)?;

    let spec = c.model.spec(&data);
    let tc = c.model.train_config();
    let mut model = AnyModel::new(spec, c.model.model_seed)?;
    let result = match c.iat.iat {
        None => {
            let xs: Vec<&Tensor> = data.split_samples(Split::Train).into_iter().map(|s| &s.x).collect();
            train(&mut model, &xs, &tc).map(|o| (o.trace, ParamStore::new()))
        }
        Some(v) => train_iat(&mut model, &data, &tc, &c.iat.config(v)).map(|o| (o.trace, o.interp)),
    };
    let (trace, interp) = match result {
        Ok(r) => r,
        Err(e) => {
            if let Error::Diverged { trace, .. } = &e {
                write_loss_csv(&dir.join("loss.csv"), trace)?;
            }
            return Err(e.into());
        }
    };
    write_loss_csv(&dir.join("loss.csv"), &trace)?;
    // Where the run was written is not part of the model.
    let mut provenance = serde_json::to_value(&c)?;
    if let Value::Object(m) = &mut provenance {
        m.remove("out");
    }
    let ck = Checkpoint::new(
        model,
        interp,
        c.model.model_seed,
        provenance,
        c.iat.iat.map(|v| c.iat.config(v).info()),
    );
    save_checkpoint(&dir.join("checkpoint.lgck"), &ck)?;
    let head_tail = TrainOutcome { trace: trace.clone() }.head_tail_means(0.1);
    println!("run directory: {}", dir.display());
    println!("iterations: {}", trace.len());
    if let Some((h, t)) = head_tail {
        println!("loss: first 10% mean {h:.6}, last 10% mean {t:.6}");
    }
    if let Some(r) = c.model.rank {
        let ratio = crate::eval::rank_ratio(&ck.model, &data, r)?;
        println!("rank check: sigma_{}/sigma_1 = {ratio:.3e}", r + 1);
    }
    Ok(())
}

fn print_reports(reports: &[MetricReport]) {
    let metrics: Vec<Metric> = Metric::ALL
        .into_iter()
        .filter(|m| reports.iter().any(|r| r.summary(*m).is_some()))
        .collect();
    let mut header = format!("{:<11} {:<8} {:<11} {:<6}", "algorithm", "setting", "variant", "budget");
    for m in &metrics {
        header.push_str(&format!(" {:>20}", m.name()));
    }
    println!("{header}");
    for r in reports {
        let mut line = format!(
            "{:<11} {:<8} {:<11} {:<6}",
            r.keys.algorithm, r.keys.setting, r.keys.variant, r.keys.budget
        );
        for m in &metrics {
            match r.summary(*m) {
                Some(s) => line.push_str(&format!(" {:>11.5} ±{:<8.1e}", s.mean, s.se)),
                None => line.push_str(&format!(" {:>20}", "")),
            }
        }
        println!("{line}");
    }
}

fn write_reports(dir: &Path, reports: &[MetricReport]) -> anyhow::Result<()> {
    for f in [ReportFormat::Csv, ReportFormat::Json] {
        export_report(reports, &dir.join(format!("report.{}", f.extension())), f)?;
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs, seed: u64, exec: Exec, compare: bool) -> anyhow::Result<()> {
    let config = a.cfg.config.as_deref();
    let ck_path = required_path(&a.checkpoint, config, "checkpoint")?;
    if !ck_path.is_file() {
        return Err(MissingCheckpoint(ck_path).into());
    }
    let ck = load_checkpoint(&ck_path).with_context(|| format!("loading checkpoint {}", ck_path.display()))?;
    let data_path = required_path(&a.data, config, "data")?;
    let data = load_data(&data_path)?;
    let default_kinds = if compare {
        InterpolationKind::ALL.to_vec()
    } else {
        vec![ck.manifest.iat.as_ref().map_or(default_kind(data.kind), |i| i.kind)]
    };
    let defaults = EvalRunConfig {
        checkpoint: ck_path,
        data: data_path,
        out: PathBuf::from("runs"),
        kinds: default_kinds,
        eval: EvalSettings {
            triplets: 2000,
            eval_seed: seed,
        },
    };
    let c: EvalRunConfig = resolve(&defaults, config, a)?;
    let dir = run_dir(&c.out, if compare { "compare" } else { "eval" })?;
    write_json(&dir.join("run_config.json"), &c)?;

    if ck.model.is_graph() != (data.kind == DatasetKind::Graph) {
        return Err(Error::Config("checkpoint and dataset are of different kinds".into()).into());
    }
    let keys = ReportKeys {
        algorithm: String::new(),
        setting: "base".into(),
        variant: ck.manifest.iat.as_ref().map_or("none".into(), |i| i.variant.to_string()),
        budget: ck
            .manifest
            .iat
            .as_ref()
            .and_then(|i| i.labeled_budget)
            .map_or("all".into(), |b| b.to_string()),
    };
    let mlp = (!ck.extra.is_empty()).then_some(&ck.extra);
    let out = evaluate_suite(&ck.model, &data, &c.kinds, &c.eval.suite(), mlp, &keys, exec)?;
    write_reports(&dir, &out.reports)?;
    write_raw_csv(&out.raw, &dir.join("raw.csv"))?;
    println!("run directory: {}", dir.display());
    println!("triplets: {} ({})", c.eval.triplets, out.reports[0].sampling.as_str());
    print_reports(&out.reports);
    Ok(())
}

fn write_experiment(dir: &Path, out: &ExperimentOutput) -> anyhow::Result<()> {
    write_json(&dir.join("cells.json"), &out.cells)?;
    let raw_dir = dir.join("raw");
    std::fs::create_dir_all(&raw_dir).map_err(Error::from)?;
    for (cell, raw) in out.cells.iter().zip(&out.raw) {
        if let Some(raw) = raw {
            let name = format!("{}_{}_{}.csv", cell.keys.setting, cell.keys.variant, cell.keys.budget);
            write_raw_csv(&raw.raw, &raw_dir.join(name))?;
        }
    }
    if !out.reports.is_empty() {
        write_reports(dir, &out.reports)?;
    }
    println!("run directory: {}", dir.display());
    for cell in out.cells.iter().filter(|c| c.error.is_some()) {
        println!(
            "cell {}/{}/{} failed: {}",
            cell.keys.setting,
            cell.keys.variant,
            cell.keys.budget,
            cell.error.as_deref().unwrap_or_default()
        );
    }
    for cell in &out.cells {
        if let Some(r) = cell.rank_ratio {
            println!("cell {}: sigma ratio {r:.3e}", cell.keys.setting);
        }
    }
    print_reports(&out.reports);
    Ok(())
}

fn run_spec(model: &ModelSettings, eval: &EvalSettings, data: &Dataset) -> RunSpec {
    RunSpec {
        model: model.spec(data),
        model_seed: model.model_seed,
        train: model.train_config(),
        eval: eval.suite(),
    }
}

fn cmd_sweep(a: &SweepArgs, seed: u64, exec: Exec) -> anyhow::Result<()> {
    let config = a.cfg.config.as_deref();
    let data_path = required_path(&a.data, config, "data")?;
    let data = load_data(&data_path)?;
    let iat_table = a.variants.is_some() || matches!(peek_config(config, "variants")?, Some(Value::Array(v)) if !v.is_empty());
    let defaults = SweepRunConfig {
        data: data_path,
        out: PathBuf::from("runs"),
        dims: Vec::new(),
        ranks: Vec::new(),
        variants: Vec::new(),
        kinds: vec![default_kind(data.kind)],
        model: ModelSettings::defaults(data.kind, &data, iat_table, seed),
        iat: IatSettings::defaults(data.kind),
        eval: EvalSettings {
            triplets: 2000,
            eval_seed: seed,
        },
    };
    let c: SweepRunConfig = resolve(&defaults, config, a)?;
    if c.variants.is_empty() && c.dims.is_empty() && c.ranks.is_empty() {
        bail!(Error::Config("sweep needs --dims/--ranks or --variants".into()));
    }
    let dir = run_dir(&c.out, "sweep")?;
    write_json(&dir.join("run_config.json"), &c)?;
    let spec = run_spec(&c.model, &c.eval, &data);
    let out = if c.variants.is_empty() {
        sweep_rank_dim(&data, &spec, &c.dims, &c.ranks, &c.kinds, exec)?
    } else {
        let variants: Vec<Option<IatVariant>> = c.variants.iter().map(|v| v.0).collect();
        run_iat_experiment(&data, &spec, &variants, &c.iat.config(IatVariant::MlpDecode), exec)?
    };
    write_experiment(&dir, &out)
}

fn cmd_label_study(a: &LabelStudyArgs, seed: u64, exec: Exec) -> anyhow::Result<()> {
    let config = a.cfg.config.as_deref();
    let data_path = required_path(&a.data, config, "data")?;
    let data = load_data(&data_path)?;
    let defaults = LabelStudyRunConfig {
        data: data_path,
        out: PathBuf::from("runs"),
        budgets: vec![3, 5, 10, 15, 25],
        model: ModelSettings::defaults(data.kind, &data, true, seed),
        iat: IatSettings::defaults(data.kind),
        eval: EvalSettings {
            triplets: 2000,
            eval_seed: seed,
        },
    };
    let c: LabelStudyRunConfig = resolve(&defaults, config, a)?;
    let dir = run_dir(&c.out, "label-study")?;
    write_json(&dir.join("run_config.json"), &c)?;
    let spec = run_spec(&c.model, &c.eval, &data);
    let out = label_budget_study(&data, &spec, &c.budgets, &c.iat.config(IatVariant::MlpDecode), exec)?;
    write_experiment(&dir, &out)
}

fn cmd_report(a: &ReportArgs) -> anyhow::Result<()> {
    let config = a.cfg.config.as_deref();
    let defaults = ReportRunConfig {
        inputs: Vec::new(),
        out: PathBuf::from("runs"),
    };
    let c: ReportRunConfig = resolve(&defaults, config, a)?;
    if c.inputs.is_empty() {
        bail!(Error::Config("report needs --inputs".into()));
    }
    let dir = run_dir(&c.out, "report")?;
    write_json(&dir.join("run_config.json"), &c)?;
    let mut reports = Vec::new();
    for path in &c.inputs {
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => ReportFormat::Csv,
            Some("json") => ReportFormat::Json,
            _ => bail!(Error::Config(format!("{}: expected a .csv or .json report", path.display()))),
        };
        reports.extend(
            crate::eval::load_report(path, format).with_context(|| format!("reading {}", path.display()))?,
        );
    }
    write_reports(&dir, &reports)?;
    println!("run directory: {}", dir.display());
    print_reports(&reports);
    Ok(())
}
