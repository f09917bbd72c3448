//! Command implementations behind the `dcrgan` binary.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dcrgan::dataset::{self, SynthConfig, ZslDataset};
use dcrgan::eval::{export_representations, EvalMode, EvalReport};
use dcrgan::gan::GanMode;
use dcrgan::pipeline::{
    evaluate, train_gan_stage, train_metric_stage, train_srn_stage, PipelineConfig, Stage, Store, TrainedModels,
    Variant,
};
use dcrgan::{DataError, Error};

pub use config::{DataSource, Overrides, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{0}")]
    Trend(String),
}

impl CliError {
    /// 2 usage, 3 data, 4 numeric failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(Error::Config(_)) => 2,
            CliError::Data(_) | CliError::Core(Error::Data(_)) => 3,
            CliError::Core(Error::Numeric(_)) => 4,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) | CliError::Core(Error::Config(_)) => "usage",
            CliError::Data(_) | CliError::Core(Error::Data(_)) => "data",
            CliError::Core(Error::Numeric(_)) => "numeric",
            CliError::Core(Error::Stage { .. }) => "stage",
            CliError::Core(Error::Io { .. }) => "io",
            CliError::Core(Error::Checkpoint { .. }) => "checkpoint",
            CliError::Trend(_) => "trend",
            CliError::Core(_) => "internal",
        }
    }

    /// `error: <kind>: <message>` on one line.
    pub fn line(&self) -> String {
        let msg: String = self.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error: {}: {msg}", self.kind())
    }
}

#[derive(Debug, Parser)]
#[command(name = "dcrgan", version, about = "Zero-shot learning by feature synthesis in a searched representation space")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset (CSV files plus manifest) to a directory.
    SynthData(SynthArgs),
    /// Train the metric network, the rectifying network and the generator.
    Train(TrainArgs),
    /// Score trained models on the ZSL or GZSL protocol.
    Eval(EvalArgs),
    /// Run every ablation variant and print one CSV row each.
    Ablate(AblateArgs),
    /// Export searched representations, synthesized features and 2-D PCA projections.
    ExportReps(ExportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 12)]
    pub num_seen: usize,
    #[arg(long, default_value_t = 4)]
    pub num_unseen: usize,
    #[arg(long, default_value_t = 50)]
    pub instances_per_class: usize,
    #[arg(long, default_value_t = 32)]
    pub d_v: usize,
    #[arg(long, default_value_t = 12)]
    pub d_a: usize,
    /// Standard deviation of the per-instance visual noise.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    /// Fraction of available unseen class pairs that share a visual prototype.
    #[arg(long, default_value_t = 0.0)]
    pub unseen_overlap: f64,
    #[arg(long, default_value_t = 0.2)]
    pub seen_test_fraction: f64,
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Hyperparameter preset applied before the file: `full` (default) or `desk`.
    #[arg(long)]
    pub preset: Option<String>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Seed for every random draw of the run. Required here or in the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dataset manifest; without it a synthetic dataset is generated from `synth_*` keys.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Root directory for checkpoints, logs and reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            config_file: self.config.clone(),
            preset: self.preset.clone(),
            sets: self.sets.clone(),
            seed: self.seed,
            data: self.data.clone(),
            out: self.out.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// `mn`, `srn`, `gan` or `all`. Later stages need the earlier checkpoints.
    #[arg(long, default_value = "all")]
    pub stage: String,
    /// Variant whose generator objective is trained.
    #[arg(long, default_value = "C5")]
    pub variant: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// `zsl` or `gzsl`.
    #[arg(long, default_value = "gzsl")]
    pub mode: String,
    #[arg(long, default_value = "C5")]
    pub variant: String,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Also check that the median H of C-5 is at least that of C-1.
    #[arg(long)]
    pub trend: bool,
    /// Number of consecutive seeds, starting at the run seed, for the trend check.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value = "C5")]
    pub variant: String,
    /// Synthesized features written per class.
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    /// Output directory; defaults to `<out>/export`.
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<W: Write>(args: &[String], out: &mut W) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            write!(out, "{e}").map_err(io_err)?;
            return Ok(());
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").to_string();
            return Err(CliError::Usage(first.trim_start_matches("error: ").to_string()));
        }
    };
    match cli.command {
        Command::SynthData(a) => cmd_synth_data(&a, out),
        Command::Train(a) => {
            let rc = RunConfig::resolve(&a.run.overrides())?;
            let stage = match a.stage.as_str() {
                "all" => None,
                s => Some(Stage::parse(s).ok_or_else(|| CliError::Usage(format!("unknown stage {s:?}")))?),
            };
            cmd_train(&rc, stage, parse_variant(&a.variant)?, out)
        }
        Command::Eval(a) => {
            let rc = RunConfig::resolve(&a.run.overrides())?;
            let mode = EvalMode::parse(&a.mode)
                .ok_or_else(|| CliError::Usage(format!("unknown mode {:?}; expected zsl or gzsl", a.mode)))?;
            let report = cmd_eval(&rc, mode, parse_variant(&a.variant)?)?;
            write!(out, "{report}{}\n{}\n", dcrgan::eval::CSV_HEADER, report.csv_row()).map_err(io_err)?;
            Ok(())
        }
        Command::Ablate(a) => {
            let rc = RunConfig::resolve(&a.run.overrides())?;
            cmd_ablate(&rc, a.trend, a.seeds.max(1), out)
        }
        Command::ExportReps(a) => {
            let rc = RunConfig::resolve(&a.run.overrides())?;
            let dir = a.dir.clone().unwrap_or_else(|| rc.out.join("export"));
            for p in cmd_export(&rc, parse_variant(&a.variant)?, a.per_class, &dir)? {
                writeln!(out, "{}", p.display()).map_err(io_err)?;
            }
            Ok(())
        }
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Core(Error::Invalid(format!("cannot write output: {e}")))
}

fn parse_variant(s: &str) -> Result<Variant, CliError> {
    Variant::parse(s).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn cmd_synth_data<W: Write>(a: &SynthArgs, out: &mut W) -> Result<(), CliError> {
    let cfg = SynthConfig {
        num_seen: a.num_seen,
        num_unseen: a.num_unseen,
        instances_per_class: a.instances_per_class,
        d_v: a.d_v,
        d_a: a.d_a,
        visual_noise_sigma: a.noise,
        unseen_overlap: a.unseen_overlap,
        seen_test_fraction: a.seen_test_fraction,
        seed: a.seed,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let ds = dataset::synth_generate(&cfg)?;
    let manifest = dataset::save(&ds, &a.out)?;
    writeln!(out, "{}", manifest.display()).map_err(io_err)?;
    Ok(())
}

/// Loads or generates the dataset a run refers to.
pub fn load_dataset(rc: &RunConfig) -> Result<ZslDataset, CliError> {
    match &rc.data {
        DataSource::Manifest(p) => Ok(dataset::load(p)?),
        DataSource::Synth { config, seed } => Ok(dataset::synth_generate(&SynthConfig {
            seed: seed.unwrap_or(rc.pipeline.seed),
            ..config.clone()
        })?),
    }
}

fn store(rc: &RunConfig) -> Store {
    Store::new(&rc.out)
}

/// Store rooted at `<out>/data-<digest>` so checkpoints of different datasets never mix.
pub fn run_store(rc: &RunConfig, ds: &ZslDataset) -> Store {
    Store::new(store(rc).root().join(format!("data-{}", &ds.digest()[..16])))
}

/// Trains (or reuses) the requested stages in order, writing checkpoints and logs.
pub fn cmd_train<W: Write>(rc: &RunConfig, only: Option<Stage>, variant: Variant, out: &mut W) -> Result<(), CliError> {
    let ds = load_dataset(rc)?;
    let st = run_store(rc, &ds);
    let cfg = &rc.pipeline;
    let mode = variant.gan_mode();
    let wanted = |s: Stage| only.is_none_or(|o| o == s);
    if wanted(Stage::Mn) {
        let (m, log) = train_metric_stage(&ds, cfg)?;
        let dir = st.save_mn(cfg, &m, &log)?;
        writeln!(out, "mn {}", dir.display()).map_err(io_err)?;
    }
    if wanted(Stage::Srn) {
        let m = st.load_mn(cfg, &ds)?;
        let (r, log) = train_srn_stage(&ds, &m, cfg)?;
        let dir = st.save_srn(cfg, &r, &log)?;
        writeln!(out, "srn {}", dir.display()).map_err(io_err)?;
    }
    if wanted(Stage::Gan) {
        st.load_mn(cfg, &ds)?;
        let r = st.load_srn(cfg, &ds)?;
        let (gan, log) = train_gan_stage(&ds, &r, cfg, mode)?;
        let dir = st.save_gan(cfg, &gan, &log)?;
        writeln!(out, "gan {}", dir.display()).map_err(io_err)?;
    }
    Ok(())
}

/// Loads every checkpoint of a run.
pub fn load_models(st: &Store, cfg: &PipelineConfig, ds: &ZslDataset, mode: GanMode) -> Result<TrainedModels, CliError> {
    Ok(TrainedModels {
        m: st.load_mn(cfg, ds)?,
        r: st.load_srn(cfg, ds)?,
        gan: st.load_gan(cfg, mode, ds)?,
    })
}

/// Loads the stages that exist and trains the rest.
fn ensure_models(st: &Store, cfg: &PipelineConfig, ds: &ZslDataset, mode: GanMode) -> Result<TrainedModels, CliError> {
    if !st.has(cfg, Stage::Mn, mode) {
        let (m, log) = train_metric_stage(ds, cfg)?;
        st.save_mn(cfg, &m, &log)?;
    }
    let m = st.load_mn(cfg, ds)?;
    if !st.has(cfg, Stage::Srn, mode) {
        let (r, log) = train_srn_stage(ds, &m, cfg)?;
        st.save_srn(cfg, &r, &log)?;
    }
    let r = st.load_srn(cfg, ds)?;
    if !st.has(cfg, Stage::Gan, mode) {
        let (gan, log) = train_gan_stage(ds, &r, cfg, mode)?;
        st.save_gan(cfg, &gan, &log)?;
    }
    load_models(st, cfg, ds, mode)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::Core(Error::Invalid(format!("{}: {e}", parent.display()))))?;
    }
    fs::write(path, text).map_err(|e| CliError::Core(Error::Invalid(format!("{}: {e}", path.display()))))
}

/// Evaluates saved checkpoints and writes `eval-<mode>-<variant>.csv` next to them.
pub fn cmd_eval(rc: &RunConfig, mode: EvalMode, variant: Variant) -> Result<EvalReport, CliError> {
    let ds = load_dataset(rc)?;
    let st = run_store(rc, &ds);
    let models = load_models(&st, &rc.pipeline, &ds, variant.gan_mode())?;
    let (report, _) = evaluate(&ds, &models, variant, mode, &rc.pipeline)?;
    let dir = st.stage_dir(&rc.pipeline, Stage::Gan, variant.gan_mode());
    let stem = format!("eval-{}-{}", mode.name(), variant.name());
    write_file(&dir.join(format!("{stem}.csv")), &EvalReport::to_csv(std::slice::from_ref(&report)))?;
    write_file(&dir.join(format!("{stem}-per-class.csv")), &report.per_class_csv())?;
    Ok(report)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// All seven variants in the GZSL setting for each seed; optionally checks the C-5 ≥ C-1 trend.
pub fn cmd_ablate<W: Write>(rc: &RunConfig, trend: bool, seeds: u64, out: &mut W) -> Result<(), CliError> {
    let mut all = Vec::new();
    writeln!(out, "{}", dcrgan::eval::CSV_HEADER).map_err(io_err)?;
    for k in 0..seeds {
        let mut rc_k = rc.clone();
        rc_k.pipeline.seed = rc.pipeline.seed + k;
        let ds = load_dataset(&rc_k)?;
        let st = run_store(&rc_k, &ds);
        let mut rows = Vec::new();
        for v in Variant::ALL {
            let models = ensure_models(&st, &rc_k.pipeline, &ds, v.gan_mode())?;
            let (report, _) = evaluate(&ds, &models, v, EvalMode::Gzsl, &rc_k.pipeline)?;
            writeln!(out, "{}", report.csv_row()).map_err(io_err)?;
            rows.push(report);
        }
        write_file(&st.root().join("ablation.csv"), &EvalReport::to_csv(&rows))?;
        all.extend(rows);
    }
    if trend {
        let h_of = |name: &str| -> Vec<f64> {
            all.iter()
                .filter(|r| r.variant == name)
                .filter_map(|r| r.ush().map(|t| t.2))
                .collect()
        };
        let (c5, c1) = (median(h_of("C-5")), median(h_of("C-1")));
        writeln!(out, "trend median H: C-5 {c5:.4}  C-1 {c1:.4}").map_err(io_err)?;
        if c5 < c1 {
            return Err(CliError::Trend(format!(
                "median H of C-5 ({c5:.4}) is below C-1 ({c1:.4}) over {seeds} seeds"
            )));
        }
    }
    Ok(())
}

/// Writes representation and feature exports from saved checkpoints.
pub fn cmd_export(rc: &RunConfig, variant: Variant, per_class: usize, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let ds = load_dataset(rc)?;
    let st = run_store(rc, &ds);
    let cfg = &rc.pipeline;
    let m = st.load_mn(cfg, &ds)?;
    let r = st.load_srn(cfg, &ds)?;
    let gan = if st.has(cfg, Stage::Gan, variant.gan_mode()) {
        Some(st.load_gan(cfg, variant.gan_mode(), &ds)?)
    } else {
        None
    };
    Ok(export_representations(
        &m,
        &r,
        &ds,
        gan.as_ref(),
        per_class,
        dir,
        dcrgan::seed::derive(cfg.seed, "export"),
    )?)
}
