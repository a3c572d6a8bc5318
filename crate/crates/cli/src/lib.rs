//! `imprint` command-line front end: dataset generation, training, transfer,
//! calibration, prediction, uniqueness sweeps and feature extraction, each
//! writing a manifest that `imprint rerun` can replay.

pub mod config;
pub mod manifest;
pub mod svg;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use imprint_core::constitutive::MaterialKind;
use imprint_core::mfnn::{self, CommitteePredictor, MemberSetting, TargetSet, TransferModel};
use imprint_core::neural::{self, Mlp, NeuralError, TrainConfig};
use imprint_core::profile::{self, HeightMap, StripMode};
use imprint_core::surrogate::{self, Dataset, ExperimentEmulator, ExperimentNoise, Fidelity, SimSetting, SurrogateError};
use imprint_core::uniqueness::{self, ActiveConfig, FeatureSubset, ForwardModel, SiblingConfig};

use manifest::{FileHash, Manifest};

pub const TOOL: &str = concat!("imprint ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("missing or unreadable input: {0}")]
    MissingInput(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    /// Process exit code: 2 usage, 3 missing input, 4 numeric failure.
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::MissingInput(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Failure(_) => 1,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::MissingInput(format!("{}: not found", path.display()))
        } else {
            CliError::Failure(format!("{}: {e}", path.display()))
        }
    }
}

impl From<NeuralError> for CliError {
    fn from(e: NeuralError) -> Self {
        match e {
            NeuralError::Config(m) => CliError::Usage(m),
            NeuralError::Io(e) => CliError::Failure(e.to_string()),
            NeuralError::Version { .. } | NeuralError::Format(_) => CliError::MissingInput(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<SurrogateError> for CliError {
    fn from(e: SurrogateError) -> Self {
        match e {
            SurrogateError::Parse { .. } => CliError::MissingInput(e.to_string()),
            SurrogateError::Fidelity { .. } => CliError::Usage(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<mfnn::MfnnError> for CliError {
    fn from(e: mfnn::MfnnError) -> Self {
        match e {
            mfnn::MfnnError::Input(m) => CliError::Usage(m),
            mfnn::MfnnError::Neural(n) => n.into(),
            mfnn::MfnnError::Surrogate(s) => s.into(),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<uniqueness::UniquenessError> for CliError {
    fn from(e: uniqueness::UniquenessError) -> Self {
        match e {
            uniqueness::UniquenessError::UnknownSubset(_) | uniqueness::UniquenessError::Input(_) => {
                CliError::Usage(e.to_string())
            }
            uniqueness::UniquenessError::Neural(n) => n.into(),
            uniqueness::UniquenessError::Surrogate(s) => s.into(),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "imprint", version, about = "Inverse identification of plastic properties from indentation imprints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a simulated or emulated-experiment dataset.
    Gen(GenArgs),
    /// Train the low-fidelity inverse model.
    Train(TrainArgs),
    /// Train a transfer head on high-fidelity (and optionally experimental) data.
    Transfer(TransferArgs),
    /// Grid scan, committee members and committee fit on calibration materials.
    Calibrate(CalibrateArgs),
    /// Predict stress-strain curves with a fitted committee.
    Predict(PredictArgs),
    /// Non-unique-ratio curves over feature subsets.
    Uniqueness(UniquenessArgs),
    /// Extract pile-up features from height-map files.
    Features(FeaturesArgs),
    /// Re-run a command from its manifest and compare outputs.
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Serialize)]
struct GenArgs {
    /// lo, hi or exp.
    #[arg(long)]
    fidelity: String,
    /// A material kind, or a mix such as `ludwik:2000,hollomon:1000`.
    #[arg(long, default_value = "ludwik")]
    kind: String,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = surrogate::DEFAULT_NU)]
    nu: f64,
    #[arg(long, default_value_t = surrogate::DEFAULT_MU)]
    mu: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Experimental materials.
    #[arg(long)]
    materials: Option<usize>,
    #[arg(long, default_value_t = 8)]
    replicates: usize,
    /// Directory for binary height maps of 3D and experimental records.
    #[arg(long)]
    emit_maps: Option<PathBuf>,
    #[arg(long, default_value = "axes")]
    strips: String,
    #[arg(long, default_value_t = 100.0)]
    p_max: f64,
    #[arg(long, default_value_t = 64)]
    grid_n: usize,
    /// Disable roughness and hardness scatter of emulated experiments.
    #[arg(long)]
    no_noise: bool,
}

#[derive(Args, Debug, Serialize)]
struct TrainOpts {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    #[arg(long, default_value_t = 200)]
    patience: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
}

impl TrainOpts {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch_size: self.batch,
            max_epochs: self.epochs,
            patience: self.patience,
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// ludwik or pointwise.
    #[arg(long, default_value = "ludwik")]
    targets: String,
    /// Held-out records (default: one eighth).
    #[arg(long)]
    val: Option<usize>,
    #[command(flatten)]
    train: TrainOpts,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct TransferArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    exp: Option<PathBuf>,
    /// High-fidelity validation records.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Train the head on features alone.
    #[arg(long)]
    no_y1: bool,
    #[arg(long, default_value = "ludwik")]
    targets: String,
    #[command(flatten)]
    train: TrainOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct CalibrateArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    exp: PathBuf,
    #[arg(long, default_value_t = 3)]
    materials: usize,
    #[arg(long, default_value_t = 4)]
    replicates: usize,
    #[arg(long, default_value_t = 50)]
    hi_count: usize,
    #[arg(long, default_value = "ludwik")]
    targets: String,
    #[arg(long, default_value = "axes")]
    strips: String,
    #[command(flatten)]
    train: TrainOpts,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct PredictArgs {
    #[arg(long)]
    committee: Option<PathBuf>,
    #[arg(long)]
    exp: PathBuf,
    /// Also report the materials used for calibration.
    #[arg(long)]
    include_calibration: bool,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct UniquenessArgs {
    /// Comma-separated subset labels.
    #[arg(long)]
    subsets: String,
    #[arg(long, default_value_t = 5)]
    grid: usize,
    #[arg(long, default_value = "0.01,0.02,0.03,0.04,0.05,0.06,0.07,0.08,0.09,0.10")]
    thresholds: String,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    seed_count: usize,
    #[arg(long, default_value_t = 50)]
    batch_add: usize,
    #[arg(long, default_value_t = 4000)]
    budget: usize,
    #[arg(long, default_value_t = 0.02)]
    target_mape: f64,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    #[arg(long, default_value_t = 300)]
    refine_epochs: usize,
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    #[arg(long, default_value_t = 0.01)]
    stop_ratio: f64,
    /// Pre-trained forward model; trained and saved next to the output otherwise.
    #[arg(long)]
    forward: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct FeaturesArgs {
    /// Map file or directory of map files.
    #[arg(long)]
    map: PathBuf,
    /// Hardness appended to the pile-up features.
    #[arg(long)]
    hardness: Option<f64>,
    #[arg(long, default_value = "axes")]
    strips: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct RerunArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Write the reproduced outputs here instead of over the originals.
    #[arg(long)]
    into: Option<PathBuf>,
}

/// Runs one invocation (`args[0]` is the program name) and returns the exit code.
pub fn run(args: &[String]) -> i32 {
    match execute(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("imprint: {e}");
            e.code()
        }
    }
}

pub fn execute(args: &[String]) -> Result<(), CliError> {
    let mut args = args.to_vec();
    if let Some(path) = config::take_config_flag(&mut args)? {
        let p = PathBuf::from(&path);
        let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        args = config::merge(&args, &config::parse(&text)?);
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(CliError::Usage(e.to_string().trim_end().to_string()));
        }
    };
    let effective: Vec<String> = args.iter().skip(1).cloned().collect();
    match cli.command {
        Command::Gen(a) => cmd_gen(&a, effective),
        Command::Train(a) => cmd_train(&a, effective),
        Command::Transfer(a) => cmd_transfer(&a, effective),
        Command::Calibrate(a) => cmd_calibrate(&a, effective),
        Command::Predict(a) => cmd_predict(&a, effective),
        Command::Uniqueness(a) => cmd_uniqueness(&a, effective),
        Command::Features(a) => cmd_features(&a, effective),
        Command::Rerun(a) => cmd_rerun(&a),
    }
}

/// Writes through a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// Sibling of `out` with its extension replaced by `suffix`.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::MissingInput(format!("{}: not found", path.display())))
    }
}

fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    require_file(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(Dataset::from_jsonl(&text)?)
}

fn read_model(path: &Path) -> Result<Mlp, CliError> {
    require_file(path)?;
    Ok(neural::load_model(path)?)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    require_file(path)?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::MissingInput(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn parse_strips(s: &str) -> Result<StripMode, CliError> {
    s.parse().map_err(|e: profile::ProfileError| CliError::Usage(e.to_string()))
}

fn parse_targets(s: &str) -> Result<TargetSet, CliError> {
    s.parse().map_err(|e: mfnn::MfnnError| CliError::Usage(e.to_string()))
}

fn parse_kinds(kind: &str, count: Option<usize>) -> Result<Vec<(MaterialKind, usize)>, CliError> {
    let mut out = Vec::new();
    for part in kind.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, n) = match part.split_once(':') {
            Some((k, n)) => (
                k,
                n.parse::<usize>()
                    .map_err(|_| CliError::Usage(format!("bad count in '{part}'")))?,
            ),
            None => (
                part,
                count.ok_or_else(|| CliError::Usage("--count is required for a single --kind".into()))?,
            ),
        };
        let k: MaterialKind = name.parse().map_err(|_| CliError::Usage(format!("unknown material kind '{name}'")))?;
        if n == 0 {
            return Err(CliError::Usage("counts must be at least 1".into()));
        }
        out.push((k, n));
    }
    if out.is_empty() {
        return Err(CliError::Usage("--kind lists no materials".into()));
    }
    Ok(out)
}

struct Recorder {
    command: &'static str,
    args: Vec<String>,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    fn new(command: &'static str, args: Vec<String>, seed: Option<u64>) -> Self {
        Self {
            command,
            args,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    fn write(&mut self, p: &Path, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(p, bytes)?;
        self.outputs.push(p.to_path_buf());
        Ok(())
    }

    fn finish(self, primary: &Path, options: &impl Serialize) -> Result<(), CliError> {
        let hashes = |v: &[PathBuf]| v.iter().map(|p| manifest::hash_entry(p)).collect::<Result<Vec<FileHash>, _>>();
        let m = Manifest {
            version: manifest::MANIFEST_VERSION,
            tool: TOOL.to_string(),
            command: self.command.to_string(),
            args: self.args,
            seed: self.seed,
            inputs: hashes(&self.inputs)?,
            outputs: hashes(&self.outputs)?,
            options: serde_json::to_value(options).expect("options serialize"),
        };
        write_atomic(&manifest::path_for(primary), to_json(&m).as_bytes())
    }
}

fn cmd_gen(a: &GenArgs, args: Vec<String>) -> Result<(), CliError> {
    let fidelity: Fidelity = a.fidelity.parse().map_err(|_| CliError::Usage(format!("unknown fidelity '{}'", a.fidelity)))?;
    let strips = parse_strips(&a.strips)?;
    if !(0.2..=0.4).contains(&a.nu) || !(0.05..=0.25).contains(&a.mu) {
        return Err(CliError::Usage(format!("(nu, mu) = ({}, {}) outside [0.2, 0.4] x [0.05, 0.25]", a.nu, a.mu)));
    }
    if !(a.p_max > 0.0) || a.grid_n < 16 {
        return Err(CliError::Usage("--p-max must be positive and --grid-n at least 16".into()));
    }
    let mut rec = Recorder::new("gen", args, Some(a.seed));
    let mut maps: Vec<(String, HeightMap)> = Vec::new();
    let ds = match fidelity {
        Fidelity::Exp => {
            let materials = a
                .materials
                .ok_or_else(|| CliError::Usage("--materials is required for --fidelity exp".into()))?;
            if materials == 0 || a.replicates == 0 {
                return Err(CliError::Usage("--materials and --replicates must be at least 1".into()));
            }
            let kind: MaterialKind = a
                .kind
                .parse()
                .map_err(|_| CliError::Usage(format!("experiments take a single material kind, got '{}'", a.kind)))?;
            let emulator = ExperimentEmulator {
                p_max: a.p_max,
                grid_n: a.grid_n,
                noise: if a.no_noise { ExperimentNoise::NONE } else { ExperimentNoise::default() },
                ..Default::default()
            };
            let (ds, m) = surrogate::gen_experiments(kind, materials, a.replicates, a.seed, &emulator, strips)?;
            if a.emit_maps.is_some() {
                maps = ds.records.iter().zip(m).map(|(r, m)| (format!("record_{:05}.impr", r.id), m)).collect();
            }
            ds
        }
        Fidelity::Lo2d | Fidelity::Hi3d => {
            let kinds = parse_kinds(&a.kind, a.count)?;
            let setting = SimSetting {
                nu: a.nu,
                mu: a.mu,
                fidelity,
                p_max: a.p_max,
                grid_n: a.grid_n,
            };
            let ds = surrogate::gen_dataset(&kinds, &setting, a.seed, strips)?;
            if a.emit_maps.is_some() {
                if fidelity == Fidelity::Lo2d {
                    return Err(CliError::Usage("--emit-maps needs --fidelity hi or exp".into()));
                }
                for r in &ds.records {
                    maps.push((format!("record_{:05}.impr", r.id), surrogate::record_map(r, &setting)?));
                }
            }
            ds
        }
    };
    if ds.skipped > 0 {
        log::info!("{} draws rejected by the surrogate and redrawn", ds.skipped);
    }
    rec.write(&a.out, ds.to_jsonl().as_bytes())?;
    if let Some(dir) = &a.emit_maps {
        for (name, m) in &maps {
            rec.write(&dir.join(name), &m.to_bytes())?;
        }
    }
    log::info!("wrote {} records to {}", ds.len(), a.out.display());
    rec.finish(&a.out, a)
}

fn model_meta(m: &mut Mlp, seed: u64, data: &Path) -> Result<(), CliError> {
    m.meta = neural::ModelMeta {
        created: TOOL.to_string(),
        seed,
        dataset_hash: manifest::sha256_file(data)?,
    };
    Ok(())
}

fn history_csv(h: &neural::History) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,train_mape,val_mape\n");
    for e in &h.epochs {
        s.push_str(&format!("{},{},{},{},{}\n", e.epoch, e.train_loss, e.val_loss, e.train_mape, e.val_mape));
    }
    s
}

fn per_target_csv(names: &[String], mape: &[f64]) -> String {
    let mut s = String::from("target,val_mape\n");
    for (n, v) in names.iter().zip(mape) {
        s.push_str(&format!("{n},{v}\n"));
    }
    s
}

fn cmd_train(a: &TrainArgs, args: Vec<String>) -> Result<(), CliError> {
    let set = parse_targets(&a.targets)?;
    let ds = read_dataset(&a.data)?;
    let n_val = a.val.unwrap_or(ds.len() / 8);
    let mut rec = Recorder::new("train", args, Some(a.train.seed));
    rec.input(&a.data);
    let mut trained = mfnn::train_base(&ds, set, n_val, &a.train.config())?;
    model_meta(&mut trained.mlp, a.train.seed, &a.data)?;
    rec.write(&a.out, trained.mlp.to_json().as_bytes())?;
    rec.write(&sibling(&a.out, "history.csv"), history_csv(&trained.history).as_bytes())?;
    rec.write(&sibling(&a.out, "metrics.csv"), per_target_csv(&set.names(), &trained.val_mape).as_bytes())?;
    if let Some(svg) = &a.svg {
        let pts = |f: fn(&neural::EpochStats) -> f64| {
            trained.history.epochs.iter().map(|e| (e.epoch as f64, f(e))).collect::<Vec<_>>()
        };
        let chart = svg::line_chart(
            "Training history",
            "epoch",
            "MAPE",
            &[svg::Series::line("train", pts(|e| e.train_mape)), svg::Series::line("validation", pts(|e| e.val_mape))],
        );
        rec.write(svg, chart.as_bytes())?;
    }
    for (n, v) in set.names().iter().zip(&trained.val_mape) {
        log::info!("val MAPE {n}: {:.4}", v);
    }
    rec.finish(&a.out, a)
}

fn cmd_transfer(a: &TransferArgs, args: Vec<String>) -> Result<(), CliError> {
    let set = parse_targets(&a.targets)?;
    let base = read_model(&a.base)?;
    let hi = read_dataset(&a.data)?;
    let mut rec = Recorder::new("transfer", args, Some(a.train.seed));
    rec.input(&a.base);
    rec.input(&a.data);
    let exp = match &a.exp {
        Some(p) => {
            rec.input(p);
            Some(read_dataset(p)?)
        }
        None => None,
    };
    let val = match &a.val {
        Some(p) => {
            rec.input(p);
            Some(read_dataset(p)?)
        }
        None => None,
    };
    let report = mfnn::transfer_hi(
        if a.no_y1 { None } else { Some(&base) },
        &hi,
        exp.as_ref(),
        val.as_ref(),
        set,
        &a.train.config(),
    )?;
    let mut model = report.model.clone();
    model_meta(&mut model.head, a.train.seed, &a.data)?;
    rec.write(&a.out, to_json(&model).as_bytes())?;
    rec.write(&sibling(&a.out, "history.csv"), history_csv(&report.history).as_bytes())?;
    rec.write(&sibling(&a.out, "metrics.csv"), per_target_csv(&set.names(), &report.val_mape).as_bytes())?;
    log::info!("transfer head mean val MAPE {:.4}", report.mean_val_mape());
    rec.finish(&a.out, a)
}

/// Committee file: member models by relative path plus the fitted weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommitteeFile {
    pub version: u32,
    pub target_set: TargetSet,
    pub base: String,
    pub sim_only: String,
    pub members: Vec<String>,
    pub settings: Vec<MemberSetting>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub a1: f64,
    pub a2: f64,
    pub member_logits: Vec<f64>,
    pub member_weights: Vec<f64>,
    pub fit_loss: f64,
    pub calibration_materials: Vec<usize>,
    pub replicates: usize,
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn cmd_calibrate(a: &CalibrateArgs, args: Vec<String>) -> Result<(), CliError> {
    let set = parse_targets(&a.targets)?;
    let strips = parse_strips(&a.strips)?;
    if a.materials == 0 || a.materials > 3 || a.replicates == 0 || a.replicates > 8 {
        return Err(CliError::Usage("--materials must be 1-3 and --replicates 1-8".into()));
    }
    let base = read_model(&a.base)?;
    let exp = read_dataset(&a.exp)?;
    let mut rec = Recorder::new("calibrate", args, Some(a.train.seed));
    rec.input(&a.base);
    rec.input(&a.exp);
    let kind = exp
        .records
        .first()
        .map(|r| r.spec.kind())
        .ok_or_else(|| CliError::Usage("experimental dataset is empty".into()))?;
    let cfg = mfnn::CalibrationConfig {
        target_set: set,
        calibration_materials: a.materials,
        replicates: a.replicates,
        hi_count: a.hi_count,
        hi_kinds: vec![(kind, a.hi_count)],
        strips,
        head: a.train.config(),
        seed: a.train.seed,
    };
    let outcome = mfnn::calibrate(&base, &exp, &cfg)?;
    let cp = &outcome.committee;
    let base_path = sibling(&a.out, "base.json");
    let sim_path = sibling(&a.out, "sim_only.json");
    rec.write(&base_path, cp.base.to_json().as_bytes())?;
    rec.write(&sim_path, to_json(&cp.sim_only).as_bytes())?;
    let mut members = Vec::new();
    for (k, m) in cp.members.iter().enumerate() {
        let p = sibling(&a.out, &format!("member{k}.json"));
        rec.write(&p, to_json(m).as_bytes())?;
        members.push(file_name(&p));
    }
    let mut cal_ids: Vec<usize> = outcome.calibration.records.iter().filter_map(|r| r.material).collect();
    cal_ids.dedup();
    let file = CommitteeFile {
        version: 1,
        target_set: set,
        base: file_name(&base_path),
        sim_only: file_name(&sim_path),
        members,
        settings: cp.settings.clone(),
        alpha1: cp.alpha1(),
        alpha2: cp.alpha2(),
        a1: cp.a1,
        a2: cp.a2,
        member_logits: cp.member_logits.clone(),
        member_weights: cp.member_weights(),
        fit_loss: cp.fit_loss,
        calibration_materials: cal_ids,
        replicates: a.replicates,
    };
    rec.write(&a.out, to_json(&file).as_bytes())?;
    let mut scan = String::from("rank,nu,mu,score\n");
    for (i, s) in outcome.scan.iter().enumerate() {
        scan.push_str(&format!("{},{},{},{}\n", i + 1, s.nu, s.mu, s.score));
    }
    rec.write(&sibling(&a.out, "scan.csv"), scan.as_bytes())?;
    log::info!(
        "committee alpha1 {:.3}, alpha2 {:.3}, members {:?}",
        cp.alpha1(),
        cp.alpha2(),
        cp.settings
    );
    rec.finish(&a.out, a)
}

/// Loads a committee file and the member models it references.
pub fn load_committee(path: &Path) -> Result<(CommitteePredictor, CommitteeFile), CliError> {
    let file: CommitteeFile = read_json(path)?;
    let dir = path.parent().unwrap_or(Path::new(""));
    let base = read_model(&dir.join(&file.base))?;
    let sim_only: TransferModel = read_json(&dir.join(&file.sim_only))?;
    let members = file
        .members
        .iter()
        .map(|m| read_json::<TransferModel>(&dir.join(m)))
        .collect::<Result<Vec<_>, _>>()?;
    let cp = CommitteePredictor {
        target_set: file.target_set,
        base,
        sim_only,
        members,
        settings: file.settings.clone(),
        a1: file.a1,
        a2: file.a2,
        member_logits: file.member_logits.clone(),
        fit_loss: file.fit_loss,
    };
    Ok((cp, file))
}

fn cmd_predict(a: &PredictArgs, args: Vec<String>) -> Result<(), CliError> {
    let cpath = a
        .committee
        .as_ref()
        .ok_or_else(|| CliError::MissingInput("--committee file is required".into()))?;
    let (cp, file) = load_committee(cpath)?;
    let exp = read_dataset(&a.exp)?;
    let mut rec = Recorder::new("predict", args, None);
    rec.input(cpath);
    rec.input(&a.exp);
    let records: Vec<_> = exp
        .records
        .iter()
        .filter(|r| a.include_calibration || !file.calibration_materials.contains(&r.material.unwrap_or(r.id)))
        .cloned()
        .collect();
    if records.is_empty() {
        return Err(CliError::Usage("no records left to predict".into()));
    }
    let mut detail = String::from("material,strain,true_stress,predicted_stress,relative_error\n");
    let mut summary = String::from("material,replicates,mean_relative_error\n");
    let errors = mfnn::evaluate_materials(&cp, &records)?;
    let mut overlay = Vec::new();
    for me in &errors {
        let reps: Vec<_> = records.iter().filter(|r| r.material.unwrap_or(r.id) == me.material).collect();
        let curves = reps
            .iter()
            .map(|r| cp.predict_curve(&r.features))
            .collect::<Result<Vec<_>, _>>()?;
        let tables = curves
            .iter()
            .map(|c| mfnn::stress_table(&reps[0].spec, c))
            .collect::<Result<Vec<_>, _>>()?;
        let n = tables.len() as f64;
        let mut mean_curve = Vec::new();
        for i in 0..tables[0].len() {
            let (e, t) = (tables[0][i].0, tables[0][i].1);
            let p = tables.iter().map(|tb| tb[i].2).sum::<f64>() / n;
            let err = tables.iter().map(|tb| tb[i].3).sum::<f64>() / n;
            detail.push_str(&format!("{},{e},{t},{p},{err}\n", me.material));
            mean_curve.push((e, t, p, err));
        }
        summary.push_str(&format!("{},{},{}\n", me.material, me.replicates, me.error));
        if overlay.len() < 8 {
            overlay.push(svg::Series::line(
                format!("m{} true", me.material),
                mean_curve.iter().map(|r| (r.0, r.1)).collect(),
            ));
            let mut s = svg::Series::line(
                format!("m{} predicted", me.material),
                mean_curve.iter().map(|r| (r.0, r.2)).collect(),
            );
            s.dashed = true;
            s.errors = Some(mean_curve.iter().map(|r| r.3 * r.1).collect());
            overlay.push(s);
        }
    }
    let avg = errors.iter().map(|e| e.error).sum::<f64>() / errors.len() as f64;
    summary.push_str(&format!("average,{},{avg}\n", errors.len()));
    rec.write(&a.out, detail.as_bytes())?;
    rec.write(&sibling(&a.out, "summary.csv"), summary.as_bytes())?;
    if let Some(svg) = &a.svg {
        rec.write(svg, svg::line_chart("Predicted vs true stress", "strain", "stress (GPa)", &overlay).as_bytes())?;
    }
    log::info!("mean relative stress error {avg:.4} over {} materials", errors.len());
    rec.finish(&a.out, a)
}

fn parse_thresholds(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| CliError::Usage(format!("bad threshold '{t}'"))))
        .collect()
}

fn cmd_uniqueness(a: &UniquenessArgs, args: Vec<String>) -> Result<(), CliError> {
    let subsets = a
        .subsets
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(FeatureSubset::parse)
        .collect::<Result<Vec<_>, _>>()?;
    if subsets.is_empty() {
        return Err(CliError::Usage("--subsets lists no feature subsets".into()));
    }
    let thresholds = parse_thresholds(&a.thresholds)?;
    if thresholds.is_empty() || a.grid == 0 {
        return Err(CliError::Usage("need at least one threshold and a positive grid".into()));
    }
    let mut rec = Recorder::new("uniqueness", args, Some(a.seed));
    let fm: ForwardModel = match &a.forward {
        Some(p) => {
            rec.input(p);
            read_json(p)?
        }
        None => {
            let seed_data = surrogate::gen_dataset(
                &[(MaterialKind::Ludwik, a.seed_count)],
                &SimSetting::default(),
                a.seed,
                StripMode::Axes,
            )?;
            let cfg = ActiveConfig {
                batch_add: a.batch_add,
                target_mape: a.target_mape,
                budget: a.budget,
                seed: a.seed,
                initial: TrainConfig {
                    max_epochs: a.epochs,
                    seed: a.seed,
                    ..Default::default()
                },
                refine: TrainConfig {
                    max_epochs: a.refine_epochs,
                    patience: 100,
                    seed: a.seed,
                    ..Default::default()
                },
                val_fraction: 0.1,
            };
            let fm = uniqueness::train_forward_active(&seed_data, &cfg)?;
            rec.write(&sibling(&a.out, "forward.json"), to_json(&fm).as_bytes())?;
            fm
        }
    };
    let scfg = SiblingConfig {
        stop_ratio: a.stop_ratio,
        restarts: a.restarts,
        seed: a.seed,
        ..Default::default()
    };
    let mut curves = Vec::new();
    for s in &subsets {
        log::info!("sweeping {} grid materials for {}", a.grid.pow(4), s.label);
        curves.push(uniqueness::nonunique_curve(&fm, s, a.grid, &thresholds, &scfg)?);
    }
    rec.write(&a.out, uniqueness::curves_to_csv(&curves).as_bytes())?;
    if let Some(svg) = &a.svg {
        let series: Vec<_> = curves.iter().map(|c| svg::Series::line(c.label.clone(), c.points.clone())).collect();
        rec.write(
            svg,
            svg::line_chart("Non-unique ratio", "distinguishing ratio", "non-unique ratio", &series).as_bytes(),
        )?;
    }
    rec.finish(&a.out, a)
}

/// Reads a binary map, or CSV when the magic bytes are absent.
pub fn read_map(path: &Path) -> Result<HeightMap, String> {
    let bytes = std::fs::read(path).map_err(|e| e.to_string())?;
    if bytes.starts_with(b"IMPR") || path.extension().is_some_and(|e| e == "impr") {
        HeightMap::from_bytes(&bytes).map_err(|e| e.to_string())
    } else {
        let text = String::from_utf8(bytes).map_err(|_| "not a height-map file".to_string())?;
        HeightMap::from_csv(&text).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Serialize)]
struct FeatureEntry {
    file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    names: Option<Vec<&'static str>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn cmd_features(a: &FeaturesArgs, args: Vec<String>) -> Result<(), CliError> {
    let strips = parse_strips(&a.strips)?;
    let mut files: Vec<PathBuf> = if a.map.is_dir() {
        std::fs::read_dir(&a.map)
            .map_err(|e| CliError::io(&a.map, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect()
    } else {
        require_file(&a.map)?;
        vec![a.map.clone()]
    };
    files.sort();
    let mut rec = Recorder::new("features", args, None);
    let mut entries = Vec::new();
    for f in &files {
        rec.input(f);
        let result = read_map(f).and_then(|m| {
            let curve = profile::strip_average_with(&m, strips).map_err(|e| e.to_string())?;
            let pf = profile::extract_pileup_features(&curve).map_err(|e| e.to_string())?;
            let mut v = pf.to_array().to_vec();
            let mut names = profile::PILEUP_FEATURE_NAMES.to_vec();
            if let Some(h) = a.hardness {
                v.push(h);
                names.push(profile::HARDNESS_NAME);
            }
            Ok((names, v))
        });
        entries.push(match result {
            Ok((names, v)) => FeatureEntry {
                file: f.display().to_string(),
                names: Some(names),
                features: Some(v),
                error: None,
            },
            Err(e) => {
                log::warn!("{}: {e}", f.display());
                FeatureEntry {
                    file: f.display().to_string(),
                    names: None,
                    features: None,
                    error: Some(e),
                }
            }
        });
    }
    rec.write(&a.out, to_json(&entries).as_bytes())?;
    let failed = entries.iter().filter(|e| e.error.is_some()).count();
    rec.finish(&a.out, a)?;
    if failed == entries.len() {
        return Err(CliError::MissingInput(format!("no readable height maps among {} file(s)", entries.len())));
    }
    Ok(())
}

const OUTPUT_FLAGS: [&str; 3] = ["--out", "--emit-maps", "--svg"];

/// Where a recorded output lands when the outputs are redirected to `into`.
fn redirect(path: &Path, flag_values: &[PathBuf], into: &Path) -> PathBuf {
    for f in flag_values {
        if let Ok(rest) = path.strip_prefix(f) {
            let base = into.join(file_name(f));
            return if rest.as_os_str().is_empty() { base } else { base.join(rest) };
        }
    }
    for f in flag_values {
        if path.parent() == f.parent() {
            return into.join(file_name(path));
        }
    }
    into.join(file_name(path))
}

fn cmd_rerun(a: &RerunArgs) -> Result<(), CliError> {
    let m = Manifest::read(&a.manifest)?;
    for inp in &m.inputs {
        let p = PathBuf::from(&inp.path);
        let h = manifest::sha256_file(&p)?;
        if h != inp.sha256 {
            return Err(CliError::MissingInput(format!("{}: content changed since the recorded run", inp.path)));
        }
    }
    let mut args = m.args.clone();
    let mut flag_values = Vec::new();
    if let Some(into) = &a.into {
        for i in 0..args.len().saturating_sub(1) {
            if OUTPUT_FLAGS.contains(&args[i].as_str()) {
                let orig = PathBuf::from(&args[i + 1]);
                args[i + 1] = into.join(file_name(&orig)).display().to_string();
                flag_values.push(orig);
            }
        }
    }
    let mut full = vec!["imprint".to_string()];
    full.extend(args);
    execute(&full)?;
    let mut mismatched = Vec::new();
    for out in &m.outputs {
        let orig = PathBuf::from(&out.path);
        let now = match &a.into {
            Some(into) => redirect(&orig, &flag_values, into),
            None => orig,
        };
        let h = manifest::sha256_file(&now)?;
        let same = h == out.sha256;
        println!("{} {}", if same { "identical" } else { "DIFFERS" }, now.display());
        if !same {
            mismatched.push(now.display().to_string());
        }
    }
    if mismatched.is_empty() {
        println!("rerun reproduced {} output(s) bit-exactly", m.outputs.len());
        Ok(())
    } else {
        Err(CliError::Numeric(format!("outputs differ from the manifest: {}", mismatched.join(", "))))
    }
}
