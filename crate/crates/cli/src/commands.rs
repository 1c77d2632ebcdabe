//! Subcommand implementations. Every command is a pure function of the
//! configuration and the files it reads, so reruns are byte-identical.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use wus_core::corpus::{
    build_partitions, read_manifest, write_manifest, write_synthetic_sources, ExampleRecipe, Partition, SourceLibrary,
};
use wus_core::evalkit::{
    evaluate, write_breakdown_csv, write_curve_csv, write_latency_csv, EvalReport, OperatingPoint,
};
use wus_core::models::{io as model_io, ModelParams};
use wus_core::quant::{export_weights, FixedPointModel, Footprint};
use wus_core::training::History;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::layout::{model_tag, with_suffix, WorkDir};
use crate::pipeline::{prepare, score, sequences, train_level, Prepared};

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?))
}

fn work(cfg: &RunConfig) -> Result<WorkDir, CliError> {
    let w = WorkDir::new(&cfg.paths.work_dir);
    w.create()?;
    Ok(w)
}

fn library(cfg: &RunConfig) -> Result<SourceLibrary, CliError> {
    cfg.validate_sources()?;
    Ok(SourceLibrary::load(&cfg.paths.noise_dir, &cfg.paths.speech_dir, &cfg.features.detector)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionSummary {
    pub examples: usize,
    pub speech: usize,
    pub hours: f64,
    pub noises: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SynthSummary {
    pub seed: u64,
    pub train: PartitionSummary,
    pub val: PartitionSummary,
    pub test: PartitionSummary,
}

fn summarize(rs: &[ExampleRecipe]) -> PartitionSummary {
    let mut noises = BTreeMap::new();
    for r in rs {
        *noises.entry(r.noise.clone()).or_insert(0) += 1;
    }
    PartitionSummary {
        examples: rs.len(),
        speech: rs.iter().filter(|r| r.is_speech()).count(),
        hours: rs.iter().map(|r| r.duration_secs()).sum::<f64>() / 3600.0,
        noises,
    }
}

/// Builds the three manifests. With `synthetic_sources`, missing source
/// directories are first filled with generated material.
pub fn cmd_synth(cfg: &RunConfig, synthetic_sources: bool) -> Result<SynthSummary, CliError> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    if synthetic_sources && !(cfg.paths.noise_dir.is_dir() && cfg.paths.speech_dir.is_dir()) {
        let s = write_synthetic_sources(&cfg.paths.noise_dir, &cfg.paths.speech_dir, &cfg.sources)?;
        log::info!("wrote {} noises and {} utterances of {} phrases", s.noises.len(), s.utterances, s.phrases);
    }
    let lib = library(cfg)?;
    let parts = build_partitions(&cfg.corpus, &lib, seed)?;
    let w = work(cfg)?;
    for p in [Partition::Train, Partition::Val, Partition::Test] {
        write_manifest(&w.manifest(p), parts.get(p))?;
    }
    let summary =
        SynthSummary { seed, train: summarize(&parts.train), val: summarize(&parts.val), test: summarize(&parts.test) };
    let mut out = create(&w.manifests().join("summary.json"))?;
    writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
    out.flush()?;
    Ok(summary)
}

fn load_manifest(path: &Path) -> Result<Vec<ExampleRecipe>, CliError> {
    if !path.is_file() {
        return Err(CliError::Data(format!("manifest {} not found (run `wus synth` first)", path.display())));
    }
    let rs = read_manifest(path)?;
    if rs.is_empty() {
        return Err(CliError::Data(format!("manifest {} is empty", path.display())));
    }
    Ok(rs)
}

/// Featurised partitions of the work directory's manifests.
pub fn load_partition(cfg: &RunConfig, lib: &SourceLibrary, p: Partition) -> Result<Vec<Prepared>, CliError> {
    let w = WorkDir::new(&cfg.paths.work_dir);
    prepare(&load_manifest(&w.manifest(p))?, lib, &cfg.features, cfg.jobs())
}

fn load_checkpoint(path: &Path) -> Result<ModelParams, CliError> {
    if !path.is_file() {
        return Err(CliError::Data(format!("missing prerequisite checkpoint {}", path.display())));
    }
    Ok(model_io::load(path)?)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub params: ModelParams,
    pub history: Option<History>,
}

/// Saves a trained level and its log under the fixed layout.
pub fn save_level(
    cfg: &RunConfig,
    level: u8,
    params: &ModelParams,
    history: Option<&History>,
) -> Result<PathBuf, CliError> {
    let w = work(cfg)?;
    let path = w.checkpoint(cfg, level);
    model_io::save(params, &path)?;
    if let Some(h) = history {
        h.write_csv(&w.train_log(cfg, level))?;
    }
    Ok(path)
}

/// Trains (levels 0 and 1) or freezes (level 2) one quantization level.
/// Levels above 0 start from the previous level's checkpoint.
pub fn cmd_train(cfg: &RunConfig, level: u8) -> Result<TrainOutcome, CliError> {
    cfg.validate()?;
    if level > 2 {
        return Err(CliError::Usage(format!("quantization level {level} does not exist (0, 1 or 2)")));
    }
    let w = WorkDir::new(&cfg.paths.work_dir);
    let previous = match level {
        0 => None,
        _ => Some(load_checkpoint(&w.checkpoint(cfg, level - 1))?),
    };
    let (train, val) = if level == 2 {
        (Vec::new(), Vec::new())
    } else {
        let lib = library(cfg)?;
        (
            sequences(&load_partition(cfg, &lib, Partition::Train)?),
            sequences(&load_partition(cfg, &lib, Partition::Val)?),
        )
    };
    let (params, history) = train_level(cfg, level, previous.as_ref(), &train, &val)?;
    let checkpoint = save_level(cfg, level, &params, history.as_ref())?;
    Ok(TrainOutcome { checkpoint, params, history })
}

/// Writes `<stem>.json`, `.curve.csv`, `.breakdown.csv` and `.latency.csv`.
pub fn write_report(report: &EvalReport, stem: &Path) -> Result<(), CliError> {
    if let Some(dir) = stem.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut json = create(&with_suffix(stem, ".json"))?;
    writeln!(json, "{}", report.to_json()?)?;
    json.flush()?;
    write_curve_csv(create(&with_suffix(stem, ".curve.csv"))?, &report.error_curve)?;
    write_breakdown_csv(create(&with_suffix(stem, ".breakdown.csv"))?, &[report])?;
    write_latency_csv(create(&with_suffix(stem, ".latency.csv"))?, &report.latency)?;
    Ok(())
}

pub fn evaluate_params(
    cfg: &RunConfig,
    name: &str,
    params: &ModelParams,
    test: &[Prepared],
) -> Result<EvalReport, CliError> {
    let scored = score(params, test, cfg.jobs())?;
    Ok(evaluate(name, &scored, &cfg.eval.grid, cfg.eval.target_ntr)?)
}

/// Evaluates a checkpoint (default: the configured model at `level`) on a
/// manifest (default: the test manifest).
pub fn cmd_eval(
    cfg: &RunConfig,
    level: u8,
    checkpoint: Option<&Path>,
    manifest: Option<&Path>,
) -> Result<EvalReport, CliError> {
    cfg.validate()?;
    let w = work(cfg)?;
    let ckpt = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| w.checkpoint(cfg, level));
    let params = load_checkpoint(&ckpt)?;
    let manifest = manifest.map(Path::to_path_buf).unwrap_or_else(|| w.manifest(Partition::Test));
    let recipes = load_manifest(&manifest)?;
    let lib = library(cfg)?;
    let test = prepare(&recipes, &lib, &cfg.features, cfg.jobs())?;
    let name = ckpt.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    let report = evaluate_params(cfg, &name, &params, &test)?;
    write_report(&report, &w.report_stem(&name))?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub label: String,
    pub bits: Option<u32>,
    pub operating: OperatingPoint,
}

/// Error curves of the float model and of k-bit versions fine-tuned from
/// it, written to `reports/sweep/`.
pub fn cmd_sweep(cfg: &RunConfig, bits: &[u32]) -> Result<Vec<SweepRow>, CliError> {
    cfg.validate()?;
    if bits.is_empty() {
        return Err(CliError::Usage("sweep needs at least one bit width".into()));
    }
    let w = work(cfg)?;
    let float = load_checkpoint(&w.checkpoint(cfg, 0))?;
    let lib = library(cfg)?;
    let train = sequences(&load_partition(cfg, &lib, Partition::Train)?);
    let val = sequences(&load_partition(cfg, &lib, Partition::Val)?);
    let test = load_partition(cfg, &lib, Partition::Test)?;
    let dir = w.reports().join("sweep");
    let mut rows = Vec::new();
    let label = format!("{}-float", model_tag(cfg, 0));
    let report = evaluate_params(cfg, &label, &float, &test)?;
    write_report(&report, &dir.join(&label))?;
    rows.push(SweepRow { label, bits: None, operating: report.operating });
    for &k in bits {
        let kcfg = RunConfig { quant: crate::config::QuantSection { bits: k, ..cfg.quant.clone() }, ..cfg.clone() };
        kcfg.validate()?;
        let (l1, h) = train_level(&kcfg, 1, Some(&float), &train, &val)?;
        save_level(&kcfg, 1, &l1, h.as_ref())?;
        let (l2, _) = train_level(&kcfg, 2, Some(&l1), &train, &val)?;
        save_level(&kcfg, 2, &l2, None)?;
        let label = model_tag(&kcfg, 2);
        let report = evaluate_params(&kcfg, &label, &l2, &test)?;
        write_report(&report, &dir.join(&label))?;
        rows.push(SweepRow { label, bits: Some(k), operating: report.operating });
    }
    let mut out = create(&dir.join("summary.csv"))?;
    writeln!(out, "label,bits,threshold,ntr,ftr,unreachable")?;
    for r in &rows {
        let o = &r.operating;
        let bits = r.bits.map(|b| b.to_string()).unwrap_or_default();
        writeln!(out, "{},{bits},{},{},{},{}", r.label, o.threshold, o.ntr, o.ftr, o.unreachable)?;
    }
    out.flush()?;
    Ok(rows)
}

/// Exports a level-2 recurrent checkpoint as packed k-bit weights.
pub fn cmd_export(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<Footprint, CliError> {
    cfg.validate()?;
    let w = work(cfg)?;
    let ckpt = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| w.checkpoint(cfg, 2));
    let params = load_checkpoint(&ckpt)?;
    if params.quant.level != 2 {
        return Err(CliError::Data(format!(
            "{} is a level-{} checkpoint; export needs level 2",
            ckpt.display(),
            params.quant.level
        )));
    }
    let model = FixedPointModel::from_params(&params)?;
    let stem = ckpt.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    let (_, fp) = export_weights(&model, &w.exports().join(format!("{stem}.wusw")))?;
    Ok(fp)
}
