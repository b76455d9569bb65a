//! Train / evaluate / sweep drivers over a run directory.
//!
//! A run directory holds `config.txt` (the config echo), one
//! `member_{i}.uapc` checkpoint per predictor member, `predictor.json`
//! (kind, member files, temperatures, MC settings) and `train_log.json`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{load_cifar_files, synth_dataset, ChannelStats, CifarVariant, Dataset, Split};
use crate::error::{Error, Result};
use crate::harness::checkpoint::{read_checkpoint, write_checkpoint};
use crate::harness::config::{DataSource, RunConfig};
use crate::harness::report::{MetricsReport, Scores};
use crate::metrics::EvalBatch;
use crate::model::PerceiverConfig;
use crate::rng;
use crate::schedule::LrSchedule;
use crate::strategies::{
    deep_ensemble_train, fast_train, snapshot_train, swa_train, train_single, McSettings, Predictor, PredictorKind,
    TrainRunLog, TrainSetup,
};

const DATA_STREAM: u64 = 100;
const STRATEGY_STREAM: u64 = 200;

/// Train and test splits described by a config.
pub fn load_data(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let (train, test) = match cfg.dataset {
        DataSource::Synth => {
            let spec = cfg.synth_spec();
            (
                synth_dataset(
                    rng::derive_seed(cfg.seed, DATA_STREAM),
                    cfg.synth_train,
                    &spec,
                    Split::Train,
                )?,
                synth_dataset(
                    rng::derive_seed(cfg.seed, DATA_STREAM + 1),
                    cfg.synth_test,
                    &spec,
                    Split::Test,
                )?,
            )
        }
        DataSource::Cifar(variant) => {
            let dir = &cfg.data_dir;
            let (train_files, test_file): (Vec<PathBuf>, PathBuf) = match variant {
                CifarVariant::Cifar10 => (
                    (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect(),
                    dir.join("test_batch.bin"),
                ),
                CifarVariant::Cifar100 => (vec![dir.join("train.bin")], dir.join("test.bin")),
            };
            let refs: Vec<&Path> = train_files.iter().map(PathBuf::as_path).collect();
            (
                load_cifar_files(&refs, variant, Split::Train)?,
                load_cifar_files(&[test_file.as_path()], variant, Split::Test)?,
            )
        }
    };
    let train = limit(train, cfg.train_limit)?;
    let test = limit(test, cfg.test_limit)?;
    if cfg.normalize {
        let stats = ChannelStats::from_dataset(&train);
        return Ok((train.standardized(&stats)?, test.standardized(&stats)?));
    }
    Ok((train, test))
}

fn limit(data: Dataset, n: usize) -> Result<Dataset> {
    if n == 0 || n >= data.len() {
        return Ok(data);
    }
    let split = data.split;
    data.select(&(0..n).collect::<Vec<_>>(), split)
}

fn model_config(cfg: &RunConfig, data: &Dataset) -> PerceiverConfig {
    let (h, w, c) = data.resolution();
    cfg.model(h, w, c, data.num_classes)
}

fn setup(cfg: &RunConfig, data: &Dataset) -> TrainSetup {
    TrainSetup {
        model: model_config(cfg, data),
        optimizer: cfg.optimizer(),
        batch_size: cfg.batch_size,
    }
}

fn strategy_seed(cfg: &RunConfig, idx: u64) -> u64 {
    rng::derive_seed(cfg.seed, STRATEGY_STREAM + idx)
}

fn mc_settings(cfg: &RunConfig) -> McSettings {
    McSettings {
        delta: cfg.mc_delta,
        samples: cfg.mc_samples,
        seed: strategy_seed(cfg, 3),
    }
}

/// Named trajectory logs of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseLog {
    pub phase: String,
    pub log: TrainRunLog,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub predictor: Predictor,
    pub logs: Vec<PhaseLog>,
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PredictorManifest {
    kind: PredictorKind,
    members: Vec<String>,
    temperatures: Option<Vec<f64>>,
    mc: Option<McSettings>,
}

fn phase(name: impl Into<String>, log: TrainRunLog) -> PhaseLog {
    PhaseLog {
        phase: name.into(),
        log,
    }
}

/// Trains the configured strategy (without touching the disk).
pub fn train_predictor(cfg: &RunConfig, train: &Dataset) -> Result<(Predictor, Vec<PhaseLog>)> {
    cfg.validate()?;
    let setup = setup(cfg, train);
    let model = setup.model.clone();
    let base = || LrSchedule::constant(cfg.lr, cfg.steps);
    match cfg.strategy {
        PredictorKind::Single => {
            let (p, log) = train_single(&setup, cfg.seed, train, &base()?, None)?;
            Ok((Predictor::single(model, p)?, vec![phase("train", log)]))
        }
        PredictorKind::McDropout => {
            let (p, log) = train_single(&setup, cfg.seed, train, &base()?, Some(cfg.mc_delta))?;
            let pred = Predictor::new(PredictorKind::McDropout, model, vec![p], None, Some(mc_settings(cfg)))?;
            Ok((pred, vec![phase("train", log)]))
        }
        PredictorKind::DeepEnsemble => {
            let calib_seed = rng::derive_seed(cfg.seed, DATA_STREAM + 2);
            let (fit, calib) = if cfg.calibration_fraction > 0.0 {
                let (f, c) = train.split_calibration(cfg.calibration_fraction, calib_seed)?;
                (f, Some(c))
            } else {
                (train.clone(), None)
            };
            let (pred, logs) = deep_ensemble_train(&setup, cfg.members, cfg.seed, &fit, calib.as_ref(), &base()?)?;
            let logs = logs
                .into_iter()
                .enumerate()
                .map(|(m, l)| phase(format!("member{m}"), l))
                .collect();
            Ok((pred, logs))
        }
        PredictorKind::Swa => {
            let (w, pre) = train_single(&setup, cfg.seed, train, &base()?, None)?;
            let schedule = LrSchedule::swa_linear(cfg.swa_alpha1, cfg.swa_alpha2, cfg.swa_steps, cfg.swa_c)?;
            let (pred, log) = swa_train(&setup, &w, train, &schedule, strategy_seed(cfg, 0))?;
            Ok((pred, vec![phase("pretrain", pre), phase("swa", log)]))
        }
        PredictorKind::Snapshot => {
            let schedule = LrSchedule::snapshot_cosine(cfg.lr, cfg.steps, cfg.snapshot_cycles)?;
            let (pred, log) = snapshot_train(&setup, cfg.seed, train, &schedule)?;
            let keep = if cfg.snapshot_keep == 0 {
                pred.len()
            } else {
                cfg.snapshot_keep
            };
            Ok((pred.last(keep)?, vec![phase("snapshot", log)]))
        }
        PredictorKind::Fast => {
            let (w, pre) = train_single(&setup, cfg.seed, train, &base()?, None)?;
            let schedule = LrSchedule::fast_cyclic(
                cfg.fast_alpha1,
                cfg.fast_alpha2,
                cfg.fast_cycles * cfg.fast_steps_per_cycle,
                cfg.fast_cycles,
            )?;
            let (pred, log) = fast_train(&setup, &w, train, &schedule, strategy_seed(cfg, 1))?;
            Ok((pred, vec![phase("pretrain", pre), phase("fast", log)]))
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

/// Trains the configured strategy and writes the run directory
/// `cfg.out_dir`.
pub fn run_train(cfg: &RunConfig) -> Result<TrainOutput> {
    let (train, _) = load_data(cfg)?;
    let (predictor, logs) = train_predictor(cfg, &train)?;
    let dir = cfg.out_dir.clone();
    save_predictor(cfg, &predictor, &dir)?;
    let log_json = serde_json::to_string_pretty(&logs).map_err(|e| Error::Format(format!("train log: {e}")))?;
    write_text(&dir.join("train_log.json"), &log_json)?;
    Ok(TrainOutput { predictor, logs, dir })
}

pub fn save_predictor(cfg: &RunConfig, predictor: &Predictor, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let echo = cfg.echo();
    write_text(&dir.join("config.txt"), &echo)?;
    let mut files = Vec::with_capacity(predictor.len());
    for (i, m) in predictor.members.iter().enumerate() {
        let name = format!("member_{i}.uapc");
        write_checkpoint(&dir.join(&name), &echo, m)?;
        files.push(name);
    }
    let manifest = PredictorManifest {
        kind: predictor.kind,
        members: files,
        temperatures: predictor.temperatures.clone(),
        mc: predictor.mc,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    write_text(&dir.join("predictor.json"), &json)
}

/// Model-defining keys that a checkpoint must share with the evaluating
/// config.
const MODEL_KEYS: &[&str] = &[
    "dataset",
    "synth_resolution",
    "synth_classes",
    "latent_count",
    "latent_dim",
    "byte_dim",
    "num_bands",
    "max_frequency",
    "depth_repeats",
    "tower_layers",
    "heads",
    "pos_encoding",
    "share_tower_weights",
    "share_cross_weights",
];

fn check_echo(cfg: &RunConfig, echo: &str, file: &Path) -> Result<()> {
    let saved = RunConfig::parse(echo)
        .map_err(|e| Error::Compatibility(format!("{}: unreadable config echo: {e}", file.display())))?;
    for key in MODEL_KEYS {
        let (a, b) = (saved.get(key)?, cfg.get(key)?);
        if a != b {
            return Err(Error::Compatibility(format!(
                "{}: checkpoint has {key} = {a}, config has {key} = {b}",
                file.display()
            )));
        }
    }
    Ok(())
}

/// Loads the predictor of a run directory, checking every checkpoint
/// against `cfg` and the model built for `data`.
pub fn load_predictor(cfg: &RunConfig, dir: &Path, data: &Dataset) -> Result<Predictor> {
    let manifest: PredictorManifest = serde_json::from_str(&read_text(&dir.join("predictor.json"))?)
        .map_err(|e| Error::Format(format!("predictor.json: {e}")))?;
    let model = model_config(cfg, data);
    let mut members = Vec::with_capacity(manifest.members.len());
    for name in &manifest.members {
        let path = dir.join(name);
        let ck = read_checkpoint(&path)?;
        check_echo(cfg, &ck.config_echo, &path)?;
        crate::model::layout::check_params(&model, &ck.params)
            .map_err(|e| Error::Compatibility(format!("{}: {e}", path.display())))?;
        members.push(ck.params);
    }
    let mut mc = manifest.mc;
    if let Some(m) = mc.as_mut() {
        m.delta = cfg.mc_delta;
        m.samples = cfg.mc_samples;
    }
    Predictor::new(manifest.kind, model, members, manifest.temperatures, mc)
}

/// Scores `predictor` on `test`.
pub fn evaluate_predictor(cfg: &RunConfig, predictor: &Predictor, test: &Dataset) -> Result<MetricsReport> {
    let start = Instant::now();
    let probs = predictor.predict(test.images())?;
    let batch = EvalBatch::new(probs, test.labels().to_vec())?;
    let s = Scores::of(&batch)?;
    let report = MetricsReport {
        variant: predictor.kind.to_string(),
        ensemble_size: predictor.len(),
        seed: cfg.seed,
        accuracy: s.accuracy,
        nll: s.nll,
        ece: s.ece,
        brier: s.brier,
        temperatures: predictor.temperatures.clone().unwrap_or_default(),
        mc_delta: predictor.mc.map(|m| m.delta),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        config_echo: cfg.echo(),
    };
    report.check_finite()?;
    Ok(report)
}

/// Loads the run directory `dir` and scores it on the configured test split.
pub fn run_evaluate(cfg: &RunConfig, dir: &Path) -> Result<MetricsReport> {
    let (_, test) = load_data(cfg)?;
    let predictor = load_predictor(cfg, dir, &test)?;
    evaluate_predictor(cfg, &predictor, &test)
}

/// Reports for the ensembles made of the first 1, 2, ..., M members.
pub fn sweep_ensemble(cfg: &RunConfig, dir: &Path) -> Result<Vec<MetricsReport>> {
    let (_, test) = load_data(cfg)?;
    let predictor = load_predictor(cfg, dir, &test)?;
    (1..=predictor.len())
        .map(|k| evaluate_predictor(cfg, &predictor.first(k)?, &test))
        .collect()
}
