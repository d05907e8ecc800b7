//! Command-line front end: argument parsing, config resolution and the subcommands.

mod config;

pub use config::{derive_seed, RunConfig, SubSeeds, SUB_SEED_NAMES};

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::eval::{
    evaluate_baseline, evaluate_model, format_text_table, render_pose_svg, run_ablation, AblationSetup, BaselineKind,
    EvalError, HorizonTable, Projection, Variant, CSV_HEADER,
};
use crate::gradcheck::{gradient_check, small_config, TOLERANCE};
use crate::motion::{
    generate_synthetic, load_mocap_csv, window_dataset, write_mocap_csv, MocapFile, MotionError, MotionSequence,
    SampleWindow, SynthParams,
};
use crate::network::{load_checkpoint, predict, save_checkpoint, FusionMode, NetworkError};
use crate::training::{train, TrainError};

pub const RUN_CONFIG_FILE: &str = "run_config.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<MotionError> for CliError {
    fn from(e: MotionError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::Config(_) => CliError::Usage(e.to_string()),
            NetworkError::Tensor(crate::tensor::TensorError::NonFinite { .. }) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            TrainError::Config(_) => CliError::Usage(e.to_string()),
            TrainError::Network(n) => n.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Network(n) => n.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "trajfuse",
    version,
    about = "Two-stream trajectory-space human motion prediction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Flat dotted-key JSON config; flags override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; init, shuffle, dropout and synth seeds derive from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Observed frames per window
    #[arg(long)]
    pub t_in: Option<usize>,
    /// Predicted frames per window
    #[arg(long)]
    pub t_out: Option<usize>,
    /// TST depth: 6, 11, 16 or 21.
    #[arg(long)]
    pub depth: Option<usize>,
    /// Hidden channel width.
    #[arg(long)]
    pub hidden: Option<usize>,
    /// p-only, v-only, addition, naive-concat or temporal-fusion.
    #[arg(long)]
    pub fusion: Option<FusionMode>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Optimizer steps
    #[arg(long)]
    pub steps: Option<usize>,
    /// Windows per minibatch
    #[arg(long)]
    pub batch: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct WindowArgs {
    /// Frames between consecutive window starts.
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct HorizonArgs {
    /// Comma-separated horizons in milliseconds.
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<f64>>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic periodic motion as mocap CSV.
    Synth {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        joints: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        fps: Option<f64>,
        #[arg(long)]
        sequences: Option<usize>,
    },
    /// Train a model on windows cut from a mocap CSV.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        window: WindowArgs,
        /// Training mocap CSV.
        #[arg(long = "train", value_name = "CSV")]
        data: Option<PathBuf>,
    },
    /// Predict the frames following each sequence of a mocap CSV.
    Predict {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        input: Option<PathBuf>,
    },
    /// Score a checkpoint and the baselines per horizon.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        horizons: HorizonArgs,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Evaluation mocap CSV.
        #[arg(long = "eval", value_name = "CSV")]
        data: Option<PathBuf>,
    },
    /// Train and score depth and fusion variants on identical data.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        horizons: HorizonArgs,
        /// Comma-separated variant labels (tst-6, tst-11, ..., temporal-fusion).
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
        /// Training mocap CSV; a synthetic benchmark is generated when omitted.
        #[arg(long = "train", value_name = "CSV")]
        train_data: Option<PathBuf>,
        /// Evaluation mocap CSV; required with --train.
        #[arg(long = "eval", value_name = "CSV")]
        eval_data: Option<PathBuf>,
    },
    /// Compare tape gradients with central finite differences on a small model.
    Gradcheck {
        #[command(flatten)]
        common: CommonArgs,
        /// Entries checked per parameter group.
        #[arg(long, conflicts_with = "all")]
        samples: Option<usize>,
        /// Check every parameter entry; entries whose step crosses an activation corner are reported as kinks.
        #[arg(long)]
        all: bool,
    },
    /// Draw poses of one sequence (and optionally a prediction) as SVG.
    Render {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_name = "CSV")]
        input: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        prediction: Option<PathBuf>,
        /// Sequence id; defaults to the first sequence.
        #[arg(long)]
        sequence: Option<String>,
        /// Comma-separated frame indices.
        #[arg(long, value_delimiter = ',')]
        frames: Option<Vec<usize>>,
        /// xy, xz or zy.
        #[arg(long)]
        projection: Option<String>,
    },
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

impl ModelArgs {
    fn apply(self, cfg: &mut RunConfig) {
        set(&mut cfg.model.t_in, self.t_in);
        set(&mut cfg.model.t_out, self.t_out);
        set(&mut cfg.model.depth, self.depth);
        set(&mut cfg.model.hidden, self.hidden);
        set(&mut cfg.model.fusion, self.fusion);
    }
}

impl TrainArgs {
    fn apply(self, cfg: &mut RunConfig) {
        set(&mut cfg.train.steps, self.steps);
        set(&mut cfg.train.batch, self.batch);
        set(&mut cfg.train.lr, self.lr);
    }
}

/// Parses `argv` (program name first) and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn base_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.reseed(seed);
    }
    Ok(cfg)
}

fn require(path: &Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    path.clone()
        .ok_or_else(|| CliError::Usage(format!("missing {flag} (flag or config key)")))
}

fn load_data(path: &Path) -> Result<MocapFile, CliError> {
    load_mocap_csv(path).map_err(|e| match e {
        MotionError::Io { .. } => CliError::Data(format!("cannot read dataset: {e}")),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}

/// Every window of every sequence long enough; shorter sequences are skipped with a warning.
fn windows_of(file: &MocapFile, cfg: &RunConfig, label: &Path) -> Result<Vec<SampleWindow>, CliError> {
    let mut out = Vec::new();
    for seq in &file.sequences {
        match window_dataset(seq, cfg.model.t_in, cfg.model.t_out, cfg.data.stride) {
            Ok(w) => out.extend(w),
            Err(MotionError::TooShort(msg)) => log::warn!("skipping: {msg}"),
            Err(e) => return Err(e.into()),
        }
    }
    if out.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no sequence has the {} frames a window needs",
            label.display(),
            cfg.model.t_in + cfg.model.t_out
        )));
    }
    Ok(out)
}

fn resolve_joints(cfg: &mut RunConfig, data_joints: usize) -> Result<usize, CliError> {
    match cfg.model.joints {
        Some(j) if j != data_joints => Err(CliError::Data(format!(
            "config expects {j} joints, data has {data_joints}"
        ))),
        _ => {
            cfg.model.joints = Some(data_joints);
            Ok(data_joints)
        }
    }
}

/// Output directory plus a guard that no output overwrites an input.
struct Outputs {
    dir: PathBuf,
    inputs: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path, inputs: &[&Path]) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Data(format!("cannot create output directory {}: {e}", dir.display())))?;
        let dir = dir
            .canonicalize()
            .map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
        let inputs = inputs.iter().filter_map(|p| p.canonicalize().ok()).collect();
        Ok(Self { dir, inputs })
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.path(name)?;
        std::fs::write(&path, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    fn path(&self, name: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        if self.inputs.contains(&path) {
            return Err(CliError::Usage(format!(
                "refusing to overwrite input file {}",
                path.display()
            )));
        }
        Ok(path)
    }

    fn write_config(&self, cfg: &RunConfig) -> Result<(), CliError> {
        self.write(RUN_CONFIG_FILE, cfg.to_json_string()).map(|_| ())
    }
}

fn table_csv(tables: &[HorizonTable]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for t in tables {
        t.csv_rows(&mut out);
    }
    out
}

fn text_table(horizons: &[f64], tables: &[HorizonTable]) -> String {
    let rows: Vec<(String, Option<Vec<f64>>)> = tables
        .iter()
        .map(|t| (t.label.clone(), Some(t.rows.iter().map(|r| r.mpjpe_mm).collect())))
        .collect();
    format_text_table(horizons, &rows)
}

fn synth_sequences(cfg: &RunConfig, first: usize, count: usize) -> Result<Vec<MotionSequence>, CliError> {
    let base = cfg.seed_of("synth");
    (first..first + count)
        .map(|i| {
            let p = SynthParams::periodic(
                cfg.synth.joints,
                cfg.synth.frames,
                cfg.synth.fps,
                base.wrapping_add(i as u64),
            );
            generate_synthetic(&p).map_err(CliError::from)
        })
        .collect()
}

fn synth_file(cfg: &RunConfig, first: usize, count: usize) -> Result<MocapFile, CliError> {
    Ok(MocapFile {
        skeleton: SynthParams::periodic(cfg.synth.joints, 1, cfg.synth.fps, 0).skeleton(),
        fps: cfg.synth.fps,
        sequences: synth_sequences(cfg, first, count)?,
    })
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth {
            common,
            joints,
            frames,
            fps,
            sequences,
        } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.synth.joints, joints);
            set(&mut cfg.synth.frames, frames);
            set(&mut cfg.synth.fps, fps);
            set(&mut cfg.synth.sequences, sequences);
            cfg.resolve_seeds();
            if cfg.synth.sequences == 0 {
                return Err(CliError::Usage("need at least one sequence".into()));
            }
            let out = Outputs::new(&common.out, &[])?;
            out.write_config(&cfg)?;
            let file = synth_file(&cfg, 0, cfg.synth.sequences)?;
            let path = out.write("synth.csv", write_mocap_csv(&file.skeleton, &file.sequences)?)?;
            println!("wrote {} sequences to {}", file.sequences.len(), path.display());
            Ok(())
        }
        Command::Train {
            common,
            model,
            train: targs,
            window,
            data,
        } => {
            let mut cfg = base_config(&common)?;
            model.apply(&mut cfg);
            targs.apply(&mut cfg);
            set(&mut cfg.data.stride, window.stride);
            set_opt(&mut cfg.data.train, data);
            cfg.resolve_seeds();
            let data_path = require(&cfg.data.train, "--train")?;
            let mut tcfg = cfg.train_config()?;
            let file = load_data(&data_path)?;
            let joints = resolve_joints(&mut cfg, file.skeleton.joint_count())?;
            let windows = windows_of(&file, &cfg, &data_path)?;
            let model_cfg = cfg.model_config(joints);
            let out = Outputs::new(&common.out, &[&data_path])?;
            let ckpt = out.path("model.ckpt")?;
            if tcfg.checkpoint_every.is_some() {
                tcfg.checkpoint_path = Some(ckpt.clone());
            }
            out.write_config(&cfg)?;
            log::info!("training on {} windows for {} steps", windows.len(), tcfg.steps);
            let outcome = train(&model_cfg, &windows, &tcfg)?;
            save_checkpoint(&outcome.params, &ckpt)?;
            out.write("train_log.csv", outcome.log.to_csv())?;
            out.write("loss_trace.csv", outcome.log.loss_trace_csv())?;
            let last = outcome.log.records.last().map(|r| r.loss).unwrap_or(f64::NAN);
            println!("trained {} steps, final loss {last:e}", outcome.log.records.len());
            let horizons = horizons_within(&cfg.eval.horizons, file.fps, cfg.model.t_out);
            if !horizons.is_empty() {
                let fit = evaluate_model("model (train windows)", &outcome.params, &windows, &horizons, file.fps)?;
                let zero = evaluate_baseline(BaselineKind::ZeroVelocity, &windows, &horizons, file.fps)?;
                print!("{}", text_table(&horizons, &[fit, zero]));
            }
            println!("checkpoint: {}", ckpt.display());
            Ok(())
        }
        Command::Predict {
            common,
            checkpoint,
            input,
        } => {
            let mut cfg = base_config(&common)?;
            set_opt(&mut cfg.data.checkpoint, checkpoint);
            set_opt(&mut cfg.data.input, input);
            cfg.resolve_seeds();
            let ckpt_path = require(&cfg.data.checkpoint, "--checkpoint")?;
            let input_path = require(&cfg.data.input, "--input")?;
            let params = load_checkpoint(&ckpt_path)?;
            let file = load_data(&input_path)?;
            let m = &params.config;
            if file.skeleton.joint_count() != m.joints {
                return Err(CliError::Data(format!(
                    "{}: {} joints, checkpoint expects {}",
                    input_path.display(),
                    file.skeleton.joint_count(),
                    m.joints
                )));
            }
            let mut predicted = Vec::with_capacity(file.sequences.len());
            for seq in &file.sequences {
                let f = seq.frame_count();
                if f < m.t_in {
                    return Err(CliError::Data(format!(
                        "sequence '{}' has {f} frames, the model observes {}",
                        seq.id, m.t_in
                    )));
                }
                let fused = predict(&params, &seq.slice(f - m.t_in, m.t_in)?)?.fused;
                predicted.push(MotionSequence::new(seq.id.clone(), fused, seq.fps())?);
            }
            let out = Outputs::new(&common.out, &[&ckpt_path, &input_path])?;
            out.write_config(&cfg)?;
            let path = out.write("predictions.csv", write_mocap_csv(&file.skeleton, &predicted)?)?;
            println!("wrote {} predicted sequences to {}", predicted.len(), path.display());
            Ok(())
        }
        Command::Eval {
            common,
            window,
            horizons,
            checkpoint,
            data,
        } => {
            let mut cfg = base_config(&common)?;
            set(&mut cfg.data.stride, window.stride);
            set(&mut cfg.eval.horizons, horizons.horizons);
            set_opt(&mut cfg.data.checkpoint, checkpoint);
            set_opt(&mut cfg.data.eval, data);
            cfg.resolve_seeds();
            let ckpt_path = require(&cfg.data.checkpoint, "--checkpoint")?;
            let data_path = require(&cfg.data.eval, "--eval")?;
            let params = load_checkpoint(&ckpt_path)?;
            let m = params.config.clone();
            cfg.model.t_in = m.t_in;
            cfg.model.t_out = m.t_out;
            cfg.model.hidden = m.hidden;
            cfg.model.depth = m.depth;
            cfg.model.fusion = m.fusion;
            let file = load_data(&data_path)?;
            resolve_joints(&mut cfg, file.skeleton.joint_count())?;
            if m.joints != file.skeleton.joint_count() {
                return Err(CliError::Data(format!(
                    "{}: {} joints, checkpoint expects {}",
                    data_path.display(),
                    file.skeleton.joint_count(),
                    m.joints
                )));
            }
            let windows = windows_of(&file, &cfg, &data_path)?;
            let h = &cfg.eval.horizons;
            let tables = vec![
                evaluate_model("model", &params, &windows, h, file.fps)?,
                evaluate_baseline(BaselineKind::ZeroVelocity, &windows, h, file.fps)?,
                evaluate_baseline(BaselineKind::ConstantVelocity, &windows, h, file.fps)?,
            ];
            let out = Outputs::new(&common.out, &[&ckpt_path, &data_path])?;
            out.write_config(&cfg)?;
            out.write("eval.csv", table_csv(&tables))?;
            print!("{}", text_table(h, &tables));
            println!("{} windows", windows.len());
            Ok(())
        }
        Command::Ablate {
            common,
            model,
            train: targs,
            window,
            horizons,
            variants,
            train_data,
            eval_data,
        } => {
            let mut cfg = base_config(&common)?;
            model.apply(&mut cfg);
            targs.apply(&mut cfg);
            set(&mut cfg.data.stride, window.stride);
            set(&mut cfg.eval.horizons, horizons.horizons);
            set(&mut cfg.eval.variants, variants);
            set_opt(&mut cfg.data.train, train_data);
            set_opt(&mut cfg.data.eval, eval_data);
            cfg.resolve_seeds();
            let variants = cfg
                .eval
                .variants
                .iter()
                .map(|v| v.parse::<Variant>().map_err(|e| CliError::Usage(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            let (train_file, eval_file, inputs) = match (&cfg.data.train, &cfg.data.eval) {
                (Some(t), Some(e)) => (load_data(t)?, load_data(e)?, vec![t.clone(), e.clone()]),
                (None, None) => (
                    synth_file(&cfg, 0, cfg.synth.sequences)?,
                    synth_file(&cfg, cfg.synth.sequences, cfg.synth.eval_sequences)?,
                    Vec::new(),
                ),
                _ => return Err(CliError::Usage("--train and --eval must be given together".into())),
            };
            if train_file.skeleton.joint_count() != eval_file.skeleton.joint_count() {
                return Err(CliError::Data(
                    "training and evaluation data differ in joint count".into(),
                ));
            }
            let joints = resolve_joints(&mut cfg, train_file.skeleton.joint_count())?;
            let train_windows = windows_of(&train_file, &cfg, Path::new("training data"))?;
            let eval_windows = windows_of(&eval_file, &cfg, Path::new("evaluation data"))?;
            let setup = AblationSetup {
                model: cfg.model_config(joints),
                train: cfg.train_config()?,
                horizons_ms: cfg.eval.horizons.clone(),
                fps: eval_file.fps,
            };
            let input_refs: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
            let out = Outputs::new(&common.out, &input_refs)?;
            out.write_config(&cfg)?;
            let report = run_ablation(&train_windows, &eval_windows, &variants, &setup)?;
            out.write("ablation.csv", report.to_csv())?;
            let text = report.to_text();
            out.write("ablation.txt", &text)?;
            print!("{text}");
            Ok(())
        }
        Command::Gradcheck { common, samples, all } => {
            let mut cfg = base_config(&common)?;
            if all {
                cfg.gradcheck.samples = None;
            }
            set_opt(&mut cfg.gradcheck.samples, samples);
            cfg.resolve_seeds();
            let out = Outputs::new(&common.out, &[])?;
            out.write_config(&cfg)?;
            let model = small_config(cfg.seed_of("init"));
            let report = gradient_check(&model, cfg.seed_of("synth"), cfg.gradcheck.samples)?;
            for g in &report.groups {
                println!(
                    "{:<20} {:>6} entries  max relative error {:.3e}  kinks {}",
                    g.group, g.checked, g.max_rel_error, g.kinks
                );
            }
            let worst = report.max_rel_error();
            println!("max relative error: {worst:.3e}");
            if worst < TOLERANCE {
                Ok(())
            } else {
                Err(CliError::Numeric(format!(
                    "gradient check failed: {worst:.3e} >= {TOLERANCE:e}"
                )))
            }
        }
        Command::Render {
            common,
            input,
            prediction,
            sequence,
            frames,
            projection,
        } => {
            let mut cfg = base_config(&common)?;
            set_opt(&mut cfg.data.input, input);
            set_opt(&mut cfg.data.prediction, prediction);
            set_opt(&mut cfg.render.sequence, sequence);
            set(&mut cfg.render.frames, frames);
            set(&mut cfg.render.projection, projection);
            cfg.resolve_seeds();
            let projection: Projection = cfg
                .render
                .projection
                .parse()
                .map_err(|e: EvalError| CliError::Usage(e.to_string()))?;
            let input_path = require(&cfg.data.input, "--input")?;
            let truth_file = load_data(&input_path)?;
            let pick = |file: &MocapFile, path: &Path| -> Result<MotionSequence, CliError> {
                let found = match &cfg.render.sequence {
                    Some(id) => file.sequences.iter().find(|s| &s.id == id),
                    None => file.sequences.first(),
                };
                found.cloned().ok_or_else(|| {
                    CliError::Data(format!(
                        "{}: sequence '{}' not found",
                        path.display(),
                        cfg.render.sequence.as_deref().unwrap_or("")
                    ))
                })
            };
            let truth = pick(&truth_file, &input_path)?;
            let pred = match &cfg.data.prediction {
                Some(p) => Some(pick(&load_data(p)?, p)?),
                None => None,
            };
            let mut inputs: Vec<&Path> = vec![&input_path];
            if let Some(p) = &cfg.data.prediction {
                inputs.push(p);
            }
            let out = Outputs::new(&common.out, &inputs)?;
            out.write_config(&cfg)?;
            let path = out.path("pose.svg")?;
            render_pose_svg(
                &truth,
                pred.as_ref(),
                &truth_file.skeleton,
                &cfg.render.frames,
                projection,
                &path,
            )?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

/// The horizons that fall inside the predicted window at `fps`.
fn horizons_within(horizons: &[f64], fps: f64, t_out: usize) -> Vec<f64> {
    horizons
        .iter()
        .copied()
        .filter(|&h| crate::eval::horizons_to_frames(&[h], fps, t_out).is_ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 1);
        assert_eq!(CliError::Data(String::new()).exit_code(), 2);
        assert_eq!(CliError::Numeric(String::new()).exit_code(), 3);
        let e: CliError = TrainError::NonFinite { step: 3 }.into();
        assert_eq!(e.exit_code(), 3);
        let e: CliError = TrainError::EmptyDataset.into();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(main_with_args(["trajfuse"]), 1);
        assert_eq!(main_with_args(["trajfuse", "fly"]), 1);
        assert_eq!(main_with_args(["trajfuse", "gradcheck", "--bogus"]), 1);
        assert_eq!(main_with_args(["trajfuse", "--help"]), 0);
    }

    #[test]
    fn horizons_filtered_to_window() {
        assert_eq!(
            horizons_within(&[80.0, 160.0, 320.0, 400.0, 1000.0], 25.0, 10),
            vec![80.0, 160.0, 320.0, 400.0]
        );
    }
}
