//! The `deltagate` command line: `gen-data`, `train`, `eval`, `ablate` and
//! `selfcheck`.
//!
//! Exit codes: 0 on success, 1 when a check fails, 2 on usage, input or I/O
//! errors.

mod manifest;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use manifest::{protocol_line, sha256_hex, DatasetInfo, FoldResult, RunManifest, SplitInfo, ToolInfo};

use crate::data::{encode_dataset, generate_synthetic, zscore_per_channel, EegDataset, FoldPlan, Preset, Protocol};
use crate::error::{invalid, Result};
use crate::experiment::{ablation_configs, run_ablation, run_cv, AblationAxis};
use crate::metrics::{confusion, report, MetricsReport};
use crate::model::{encode_params, load_params, load_params_for, ModelConfig, PointwiseGroups, Variant};
use crate::optim::{evaluate, AdamWConfig, TrainConfig};
use crate::rng::DEFAULT_SEED;
use crate::selfcheck::{run_selfcheck, Mutation};

#[derive(Parser, Debug)]
#[command(name = "deltagate", version, about = "EEG fatigue classification with bidirectional temporal differences")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic EEG dataset and its meta sidecar.
    GenData(GenDataArgs),
    /// Cross-validate a model and write a manifest, logs and parameters.
    Train(TrainArgs),
    /// Evaluate saved parameters on a dataset.
    Eval(EvalArgs),
    /// Cross-validate a grid of configurations along one axis.
    Ablate(AblateArgs),
    /// Run the built-in verification suite.
    Selfcheck(SelfcheckArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long, default_value = "seedvig-like")]
    preset: String,
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long)]
    samples_per_subject: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    timesteps: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    rate: Option<f32>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    shift: Option<f64>,
    /// Flat `key = value` file merged under the command-line flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct CommonArgs {
    /// Dataset file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, value_enum, default_value_t = ProtocolArg::Intra)]
    protocol: ProtocolArg,
    /// Flat `key = value` file merged under the command-line flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads across folds and ablation cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Standardize every channel of every sample before training.
    #[arg(long)]
    zscore: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ProtocolArg {
    Intra,
    Inter,
}

impl From<ProtocolArg> for Protocol {
    fn from(p: ProtocolArg) -> Self {
        match p {
            ProtocolArg::Intra => Protocol::Intra,
            ProtocolArg::Inter => Protocol::Inter,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    #[arg(long, default_value = "full")]
    variant: String,
    /// Per-channel feature depth D.
    #[arg(long, default_value_t = ModelConfig::DEFAULT_HIDDEN_DEPTH)]
    depth: usize,
    #[arg(long, default_value_t = ModelConfig::DEFAULT_KERNEL)]
    kernel: usize,
    #[arg(long, default_value_t = 1)]
    step: usize,
    #[arg(long, default_value_t = ModelConfig::DEFAULT_MLP_HIDDEN)]
    mlp_hidden: usize,
    #[arg(long, default_value_t = 0.25)]
    dropout_conv: f64,
    #[arg(long, default_value_t = 0.5)]
    dropout_mlp: f64,
    #[arg(long, default_value = "per_channel")]
    pointwise: String,
}

impl ModelArgs {
    fn config(&self, data: &EegDataset) -> Result<ModelConfig> {
        let mut c = ModelConfig::new(data.n_channels, data.n_timesteps, data.n_classes);
        c.variant = Variant::parse(&self.variant)?;
        c.hidden_depth = self.depth;
        c.kernel_size = self.kernel;
        c.delta_step = self.step;
        c.mlp_hidden = self.mlp_hidden;
        c.dropout_conv = self.dropout_conv;
        c.dropout_mlp = self.dropout_mlp;
        c.pointwise_groups = PointwiseGroups::parse(&self.pointwise)?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0.01)]
    weight_decay: f64,
    #[arg(long)]
    no_shuffle: bool,
}

impl RunArgs {
    fn config(&self, seed: u64) -> Result<TrainConfig> {
        let run = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed,
            shuffle: !self.no_shuffle,
            optimizer: AdamWConfig { lr: self.lr, weight_decay: self.weight_decay, ..AdamWConfig::default() },
        };
        run.validate()?;
        Ok(run)
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    run: RunArgs,
    /// Validate the configuration and print the fold plan without training.
    #[arg(long)]
    dry_run: bool,
    /// Rerun exactly the configuration recorded in a manifest.
    #[arg(long)]
    from_manifest: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Json,
    Table,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Parameter file to evaluate.
    #[arg(long)]
    params: PathBuf,
    /// Manifest of the run that produced the parameters. Selects that run's
    /// split and checks the parameter file against its model.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Fold whose test set is evaluated (with `--manifest`).
    #[arg(long, default_value_t = 0)]
    fold: usize,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_parser = ["module", "kernel", "step"])]
    axis: String,
    /// Comma-separated grid; the axis default when omitted.
    #[arg(long, value_delimiter = ',')]
    values: Vec<String>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum MutationArg {
    GeluConstant,
}

#[derive(Args, Debug)]
struct SelfcheckArgs {
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Apply a deliberate defect; the suite should then fail.
    #[arg(long, value_enum)]
    mutate: Option<MutationArg>,
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Entry point of the `deltagate` binary.
pub fn main() -> ExitCode {
    run(std::env::args_os().collect())
}

/// Parse `args` (program name first) and run the command.
pub fn run(args: Vec<OsString>) -> ExitCode {
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::GenData(a) => gen_data(&a).map(|_| true),
        Command::Train(a) => train_cmd(&a).map(|_| true),
        Command::Eval(a) => eval_cmd(&a).map(|_| true),
        Command::Ablate(a) => ablate_cmd(&a).map(|_| true),
        Command::Selfcheck(a) => selfcheck_cmd(&a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Insert the entries of a `--config` file right after the subcommand so
/// that flags given on the command line, which come later, win.
fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let strings: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strings.iter().enumerate() {
        if a == "--config" {
            path = strings.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = fs::read_to_string(&path).map_err(|e| invalid(format!("cannot read config {path}: {e}")))?;
    let mut extra = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| invalid(format!("{path}:{}: expected key = value", n + 1)))?;
        let flag = format!("--{}", key.trim().replace('_', "-"));
        match value.trim() {
            "true" => extra.push(flag),
            "false" => {}
            v => extra.extend([flag, v.to_string()]),
        }
    }
    let mut merged = args;
    let at = 2.min(merged.len());
    merged.splice(at..at, extra.into_iter().map(OsString::from));
    Ok(merged)
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let mut spec = Preset::parse(&a.preset)?.spec(a.seed);
    let set = |dst: &mut usize, v: Option<usize>| *dst = v.unwrap_or(*dst);
    set(&mut spec.n_subjects, a.subjects);
    set(&mut spec.samples_per_subject, a.samples_per_subject);
    set(&mut spec.n_channels, a.channels);
    set(&mut spec.n_timesteps, a.timesteps);
    set(&mut spec.n_classes, a.classes);
    spec.sampling_rate_hz = a.rate.unwrap_or(spec.sampling_rate_hz);
    spec.class_separation = a.separation.unwrap_or(spec.class_separation);
    spec.subject_shift = a.shift.unwrap_or(spec.subject_shift);
    let ds = generate_synthetic(&spec)?;
    let bytes = encode_dataset(&ds);
    write(&a.out, &bytes)?;
    let meta = serde_json::json!({
        "tool": ToolInfo::current(),
        "generator": "synthetic",
        "preset": a.preset,
        "spec": spec,
        "sha256": sha256_hex(&bytes),
    });
    let meta_path = a.out.with_extension("meta.json");
    write(&meta_path, (serde_json::to_string_pretty(&meta)? + "\n").as_bytes())?;
    println!(
        "wrote {}: {} samples, {} subjects, {} channels x {} timesteps, {} classes, {} Hz",
        a.out.display(),
        ds.len(),
        ds.subjects().len(),
        ds.n_channels,
        ds.n_timesteps,
        ds.n_classes,
        ds.sampling_rate_hz
    );
    Ok(())
}

struct LoadedData {
    data: EegDataset,
    info: DatasetInfo,
}

fn load_data(path: &Path, zscore: bool) -> Result<LoadedData> {
    let bytes = fs::read(path).map_err(|e| invalid(format!("cannot read dataset {}: {e}", path.display())))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let raw = crate::data::decode_dataset(&bytes, &name)?;
    raw.validate()?;
    let (data, _) = zscore_per_channel(&raw, zscore);
    let info = DatasetInfo {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
        n_samples: data.len(),
        n_channels: data.n_channels,
        n_timesteps: data.n_timesteps,
        n_classes: data.n_classes,
        n_subjects: data.subjects().len(),
        zscore,
    };
    Ok(LoadedData { data, info })
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| invalid(format!("--{flag} is required")))
}

fn print_plan(plan: &FoldPlan) {
    for (i, f) in plan.folds.iter().enumerate() {
        println!("fold {i}: train {} val {} test {}", f.train.len(), f.val.len(), f.test.len());
    }
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let (loaded, model, run, split_protocol, folds) = match &a.from_manifest {
        Some(path) => {
            let m = RunManifest::load(path)?;
            let data_path = a.common.data.clone().unwrap_or_else(|| PathBuf::from(&m.dataset.path));
            let loaded = load_data(&data_path, m.dataset.zscore)?;
            if loaded.info.sha256 != m.dataset.sha256 {
                return Err(invalid(format!("dataset {} does not match the manifest checksum", data_path.display())));
            }
            (loaded, m.model, m.training, m.split.protocol, m.split.folds)
        }
        None => {
            let loaded = load_data(required(&a.common.data, "data")?, a.common.zscore)?;
            let model = a.model.config(&loaded.data)?;
            let run = a.run.config(a.common.seed)?;
            (loaded, model, run, a.common.protocol.into(), a.common.folds)
        }
    };
    let plan = FoldPlan::make(split_protocol, &loaded.data, folds, run.seed)?;
    println!("{} protocol={}", protocol_line(&run, folds), split_protocol.name());
    if a.dry_run {
        print_plan(&plan);
        return Ok(());
    }
    let out = required(&a.common.out, "out")?;
    fs::create_dir_all(out)?;
    let cv = run_cv(&loaded.data, &model, &run, &plan, a.common.jobs)?;
    let mut results = Vec::new();
    for (i, f) in cv.folds.iter().enumerate() {
        let log_file = format!("fold{i}.log.jsonl");
        let params_file = format!("fold{i}.params.dgnw");
        let params_bytes = encode_params(&f.params);
        write(&out.join(&log_file), f.log.to_jsonl().as_bytes())?;
        write(&out.join(&params_file), &params_bytes)?;
        println!(
            "fold {i}: epoch {} val {:.4} test acc {:.4} f1 {:.4}",
            f.log.selected_epoch,
            f.log.best_val_acc(),
            f.metrics.accuracy,
            f.metrics.macro_f1
        );
        results.push(FoldResult {
            fold: i,
            selected_epoch: f.log.selected_epoch,
            best_val_acc: f.log.best_val_acc(),
            test: f.metrics.clone(),
            log_file,
            params_file,
            params_sha256: sha256_hex(&params_bytes),
        });
    }
    let manifest = RunManifest {
        tool: ToolInfo::current(),
        protocol_line: protocol_line(&run, folds),
        dataset: loaded.info,
        model,
        training: run.clone(),
        split: SplitInfo {
            protocol: split_protocol,
            folds,
            seed: run.seed,
            sizes: plan.folds.iter().map(|f| [f.train.len(), f.val.len(), f.test.len()]).collect(),
        },
        folds: results,
        summary: cv.summary,
    };
    write(&out.join("manifest.json"), manifest.to_json().as_bytes())?;
    println!("acc | prec | rec | f1: {}", manifest.summary.table_row());
    Ok(())
}

fn metrics_table(m: &MetricsReport) -> String {
    let mut s = format!(
        "accuracy {:.4}\nmacro precision {:.4}\nmacro recall {:.4}\nmacro f1 {:.4}\n",
        m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1
    );
    for (c, pc) in m.per_class.iter().enumerate() {
        s += &format!("class {c}: precision {:.4} recall {:.4} f1 {:.4}\n", pc.precision, pc.recall, pc.f1);
    }
    s
}

fn eval_cmd(a: &EvalArgs) -> Result<()> {
    if !a.params.exists() {
        return Err(invalid(format!("parameter file {} not found", a.params.display())));
    }
    let (params, loaded, indices) = match &a.manifest {
        Some(path) => {
            let m = RunManifest::load(path)?;
            let data_path = a.common.data.clone().unwrap_or_else(|| PathBuf::from(&m.dataset.path));
            let loaded = load_data(&data_path, m.dataset.zscore)?;
            let params = load_params_for(&a.params, &m.model)?;
            let plan = FoldPlan::make(m.split.protocol, &loaded.data, m.split.folds, m.split.seed)?;
            let fold = plan.folds.get(a.fold).ok_or_else(|| invalid(format!("fold {} out of range", a.fold)))?;
            let indices = fold.test.clone();
            (params, loaded, indices)
        }
        None => {
            let loaded = load_data(required(&a.common.data, "data")?, a.common.zscore)?;
            let params = load_params(&a.params)?;
            let c = params.config();
            if (c.n_channels, c.n_timesteps, c.n_classes) != (loaded.data.n_channels, loaded.data.n_timesteps, loaded.data.n_classes) {
                return Err(invalid(format!(
                    "parameters expect {}x{} inputs with {} classes, dataset has {}x{} with {}",
                    c.n_channels, c.n_timesteps, c.n_classes, loaded.data.n_channels, loaded.data.n_timesteps, loaded.data.n_classes
                )));
            }
            let all = (0..loaded.data.len()).collect();
            (params, loaded, all)
        }
    };
    let ev = evaluate(&params, &loaded.data, &indices)?;
    let m = report(&confusion(&ev.labels, &ev.predictions, loaded.data.n_classes)?)?;
    let json = serde_json::to_string_pretty(&m)? + "\n";
    match a.format {
        Format::Json => print!("{json}"),
        Format::Table => print!("{}", metrics_table(&m)),
    }
    if let Some(out) = &a.common.out {
        write(out, json.as_bytes())?;
    }
    Ok(())
}

fn ablate_cmd(a: &AblateArgs) -> Result<()> {
    let loaded = load_data(required(&a.common.data, "data")?, a.common.zscore)?;
    let base = a.model.config(&loaded.data)?;
    let run = a.run.config(a.common.seed)?;
    let axis = AblationAxis::parse(&a.axis)?;
    let values = if a.values.is_empty() { axis.default_values() } else { a.values.clone() };
    let cells = ablation_configs(&base, axis, &values)?;
    let protocol: Protocol = a.common.protocol.into();
    let plan = FoldPlan::make(protocol, &loaded.data, a.common.folds, run.seed)?;
    println!("{} protocol={} axis={}", protocol_line(&run, a.common.folds), protocol.name(), axis.name());
    let results = run_ablation(&loaded.data, &cells, &run, &plan, a.common.jobs)?;
    let width = results.iter().map(|(v, _)| v.len()).max().unwrap_or(0).max(5);
    println!("{:width$} | acc | prec | rec | f1", axis.name());
    for (value, cv) in &results {
        println!("{value:width$} | {}", cv.summary.table_row());
    }
    if let Some(out) = &a.common.out {
        let cells: Vec<_> = results
            .iter()
            .zip(&cells)
            .map(|((value, cv), (_, model))| serde_json::json!({ "value": value, "model": model, "summary": cv.summary }))
            .collect();
        let doc = serde_json::json!({
            "tool": ToolInfo::current(),
            "protocol_line": protocol_line(&run, a.common.folds),
            "dataset": loaded.info,
            "training": run,
            "split": { "protocol": protocol, "folds": a.common.folds, "seed": run.seed },
            "axis": axis.name(),
            "cells": cells,
        });
        write(out, (serde_json::to_string_pretty(&doc)? + "\n").as_bytes())?;
    }
    Ok(())
}

fn selfcheck_cmd(a: &SelfcheckArgs) -> Result<bool> {
    let mutation = a.mutate.map(|MutationArg::GeluConstant| Mutation::GeluConstant);
    let report = run_selfcheck(a.seed, mutation)?;
    for c in &report.checks {
        let verdict = if c.passed { "pass" } else { "FAIL" };
        println!("{verdict} {:<44} {:.3e} (limit {:.0e})", c.name, c.value, c.threshold);
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failed", report.checks.len());
    Ok(failed == 0)
}
