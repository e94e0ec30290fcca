//! The training loop: scheduled optimization, per-epoch validation, early
//! stopping and best-checkpoint selection.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{
    compute_stats, scan_dataset, AugConfig, Dataset, Preprocess, Split, Stats, DEFAULT_BATCH_SIZE,
};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::metrics::{argmax, evaluate, EvalReport};
use crate::model::{
    load_checkpoint, preset_by_name, save_checkpoint, CheckpointMeta, ModelGraph, ModelSpec,
};
use crate::nn::softmax_cross_entropy;
use crate::optim::{LrSchedule, Optimizer, OptimizerConfig};
use crate::rng::{purpose, Rng};

pub const HISTORY_FILE: &str = "history.csv";
pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const HISTORY_HEADER: &str = "epoch,lr,train_loss,train_acc,val_loss,val_acc,seconds";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Preset name, used unless `model_spec` is given.
    pub model: String,
    pub model_spec: Option<ModelSpec>,
    pub optimizer: OptimizerConfig,
    pub schedule: LrSchedule,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Dataset root holding `train/` and `valid/`.
    pub data: PathBuf,
    pub out: PathBuf,
    pub resize: usize,
    pub crop: usize,
    /// Normalization statistics. Falls back to `stats_file`, then to
    /// statistics of the training split.
    pub stats: Option<Stats>,
    pub stats_file: Option<PathBuf>,
    /// Apply `augmentation` to training samples.
    pub augment: bool,
    pub augmentation: AugConfig,
    /// Keep decoded, cropped images in memory across epochs.
    pub preload: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: "proposed".into(),
            model_spec: None,
            optimizer: OptimizerConfig::default(),
            schedule: LrSchedule::default(),
            batch_size: DEFAULT_BATCH_SIZE,
            max_epochs: 150,
            patience: 20,
            seed: 0,
            data: PathBuf::new(),
            out: PathBuf::from("runs/default"),
            resize: 256,
            crop: 224,
            stats: None,
            stats_file: None,
            augment: true,
            augmentation: AugConfig::default(),
            preload: false,
        }
    }
}

impl TrainConfig {
    pub fn model_spec(&self) -> Result<ModelSpec> {
        let spec = match &self.model_spec {
            Some(s) => s.clone(),
            None => preset_by_name(&self.model)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be at least 1")));
            }
        }
        if self.data.as_os_str().is_empty() {
            return Err(Error::config("no dataset root given (`data`)"));
        }
        self.optimizer.validate()?;
        self.schedule.validate()?;
        self.augmentation.validate()?;
        if self.crop == 0 || self.crop > self.resize {
            return Err(Error::config(format!(
                "crop {} must be positive and at most resize {}",
                self.crop, self.resize
            )));
        }
        let spec = self.model_spec()?;
        if spec.input != [3, self.crop, self.crop] {
            return Err(Error::config(format!(
                "model input {:?} does not match crop size {}",
                spec.input, self.crop
            )));
        }
        Ok(())
    }
}

/// Stopping rule on validation accuracy with strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    epochs: usize,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub is_new_best: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            best_epoch: 0,
            epochs: 0,
            stale: 0,
        }
    }

    pub fn update(&mut self, val_accuracy: f64) -> StopDecision {
        self.epochs += 1;
        let is_new_best = self.best.is_none_or(|b| val_accuracy > b);
        if is_new_best {
            self.best = Some(val_accuracy);
            self.best_epoch = self.epochs;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        StopDecision {
            is_new_best,
            stop: self.stale >= self.patience,
        }
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// 1-based epoch of the best value, 0 before any update.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub seconds: f64,
}

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.3}",
            self.epoch, self.lr, self.train_loss, self.train_acc, self.val_loss, self.val_acc, self.seconds
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{HISTORY_HEADER}\n");
        for r in &self.records {
            let _ = writeln!(s, "{}", r.csv_row());
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(HISTORY_HEADER) {
            return Err(Error::data(format!("history header must be `{HISTORY_HEADER}`")));
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = || Error::data(format!("history line {}: malformed row {line:?}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad());
            }
            let num = |k: usize| f[k].trim().parse::<f64>().map_err(|_| bad());
            records.push(EpochRecord {
                epoch: f[0].trim().parse().map_err(|_| bad())?,
                lr: num(1)?,
                train_loss: num(2)?,
                train_acc: num(3)?,
                val_loss: num(4)?,
                val_acc: num(5)?,
                seconds: num(6)?,
            });
        }
        Ok(Self { records })
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.records
            .iter()
            .fold(None, |best: Option<&EpochRecord>, r| match best {
                Some(b) if r.val_acc <= b.val_acc => Some(b),
                _ => Some(r),
            })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: History,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub stopped_early: bool,
    pub checkpoint: PathBuf,
    /// Validation report of the best checkpoint.
    pub report: EvalReport,
}

/// History writer that appends to `<out>/history.csv.partial` and renames
/// it into place on [`Self::finish`]. Dropping it unfinished removes the
/// partial file.
struct HistoryLog {
    partial: PathBuf,
    target: PathBuf,
    file: Option<BufWriter<File>>,
}

impl HistoryLog {
    fn create(dir: &Path) -> Result<Self> {
        let target = dir.join(HISTORY_FILE);
        let partial = dir.join(format!("{HISTORY_FILE}.partial"));
        let file = File::create(&partial).map_err(|e| Error::io(&partial, e))?;
        let mut log = Self {
            partial,
            target,
            file: Some(BufWriter::new(file)),
        };
        log.line(HISTORY_HEADER)?;
        Ok(log)
    }

    fn line(&mut self, text: &str) -> Result<()> {
        let f = self.file.as_mut().expect("history log open");
        writeln!(f, "{text}")
            .and_then(|_| f.flush())
            .map_err(|e| Error::io(&self.partial, e))
    }

    fn finish(mut self) -> Result<()> {
        let f = self.file.take().expect("history log open");
        f.into_inner()
            .map_err(|e| Error::io(&self.partial, e.into_error()))?
            .sync_all()
            .map_err(|e| Error::io(&self.partial, e))?;
        fs::rename(&self.partial, &self.target).map_err(|e| Error::io(&self.target, e))
    }
}

impl Drop for HistoryLog {
    fn drop(&mut self) {
        if self.file.take().is_some() {
            let _ = fs::remove_file(&self.partial);
        }
    }
}

/// Resolves the dataset and statistics named by `cfg`, then trains.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let manifest = scan_dataset(&cfg.data)?;
    for w in &manifest.warnings {
        log::warn!("{w}");
    }
    for split in Split::ALL {
        if manifest.split_len(split) == 0 {
            return Err(Error::data(format!(
                "the {split} split under {} has no images",
                cfg.data.display()
            )));
        }
    }
    let stats = match (cfg.stats, &cfg.stats_file) {
        (Some(s), _) => s,
        (None, Some(path)) => Stats::load(path)?,
        (None, None) => compute_stats(&manifest, Split::Train, cfg.resize, cfg.crop)?,
    };
    let preprocess = Preprocess::new(cfg.resize, cfg.crop, stats);
    let augment = cfg.augment.then(|| cfg.augmentation.clone());
    let mut train_set = Dataset::new(manifest.split(Split::Train), preprocess.clone(), augment)?;
    let mut val_set = Dataset::new(manifest.split(Split::Valid), preprocess, None)?;
    if cfg.preload {
        train_set.preload()?;
        val_set.preload()?;
    }
    train_on(cfg, &train_set, &val_set)
}

/// Trains on prepared datasets and writes history, checkpoint and reports
/// into `cfg.out`.
pub fn train_on(cfg: &TrainConfig, train_set: &Dataset, val_set: &Dataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::data("training and validation splits must be non-empty"));
    }
    let spec = cfg.model_spec()?;
    let mut graph = ModelGraph::<f32>::new(&spec, cfg.seed)?;
    let mut optimizer = Optimizer::new(cfg.optimizer.clone())?;
    let root = Rng::new(cfg.seed);

    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let ckpt_path = cfg.out.join(CHECKPOINT_FILE);
    let mut log = HistoryLog::create(&cfg.out)?;
    let mut history = History::default();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let lr = cfg.schedule.lr_at_epoch(epoch);
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        let plan = crate::data::batch_plan(train_set.len(), cfg.batch_size, true, &root, epoch)?;
        let mut diverged = None;
        for (bi, indices) in plan.iter().enumerate() {
            let batch = train_set.batch(indices, &root, epoch)?;
            let step_rng = root.child(&[purpose::DROPOUT, epoch as u64, bi as u64]);
            let logits = graph.forward_train(&batch.inputs, &step_rng)?;
            let (loss, dlogits) = softmax_cross_entropy(&logits, &batch.labels)?;
            let n = batch.labels.len();
            loss_sum += loss * n as f64;
            seen += n;
            correct += logits
                .data()
                .chunks(spec.classes)
                .zip(&batch.labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
            if !loss.is_finite() {
                diverged = Some(format!("non-finite training loss in batch {}", bi + 1));
                break;
            }
            let grads = graph.backward(&dlogits)?;
            optimizer.step(&mut graph.params_mut(), &grads, lr)?;
        }
        let train_loss = loss_sum / seen as f64;
        let train_acc = correct as f64 / seen as f64;

        let (val_loss, val_acc) = if diverged.is_some() {
            (f64::NAN, f64::NAN)
        } else {
            let rep = evaluate(&graph, val_set, cfg.batch_size)?;
            if !rep.loss.is_finite() {
                diverged = Some("non-finite validation loss".into());
            }
            (rep.loss, rep.accuracy)
        };
        let record = EpochRecord {
            epoch,
            lr,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
            seconds: started.elapsed().as_secs_f64(),
        };
        log.line(&record.csv_row())?;
        history.records.push(record);

        if let Some(detail) = diverged {
            log.finish()?;
            return Err(Error::Divergence { epoch, detail });
        }

        let decision = stopper.update(val_acc);
        if decision.is_new_best {
            let meta = CheckpointMeta {
                epoch,
                best_val_accuracy: val_acc,
                seed: cfg.seed,
                preprocess: Some(train_set.preprocess().clone()),
                ..CheckpointMeta::default()
            };
            save_checkpoint(&graph, &meta, &ckpt_path)?;
        }
        log::info!(
            "epoch {epoch:>3}  lr {lr:.0e}  train loss {train_loss:.4} acc {train_acc:.4}  \
             val loss {val_loss:.4} acc {val_acc:.4}{}",
            if decision.is_new_best { "  *" } else { "" }
        );
        if decision.stop {
            stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    log.finish()?;

    let (best, _) = load_checkpoint(&ckpt_path)?;
    let report = evaluate(&best, val_set, cfg.batch_size)?;
    write_atomic(&cfg.out.join(REPORT_TEXT_FILE), report.to_text().as_bytes())?;
    write_atomic(&cfg.out.join(REPORT_JSON_FILE), report.to_json().as_bytes())?;

    Ok(TrainOutcome {
        history,
        best_epoch: stopper.best_epoch(),
        best_val_accuracy: stopper.best().unwrap_or(0.0),
        stopped_early,
        checkpoint: ckpt_path,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(seq: &[f64], patience: usize) -> (usize, usize) {
        let mut s = EarlyStopping::new(patience);
        for (i, &a) in seq.iter().enumerate() {
            if s.update(a).stop {
                return (i + 1, s.best_epoch());
            }
        }
        (seq.len(), s.best_epoch())
    }

    #[test]
    fn plateau_with_patience_three() {
        assert_eq!(run(&[0.5, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6], 3), (5, 2));
    }

    #[test]
    fn first_update_is_best_and_ties_do_not_count() {
        let mut s = EarlyStopping::new(5);
        assert!(s.update(0.0).is_new_best);
        assert!(!s.update(0.0).is_new_best);
        assert!(s.update(0.1).is_new_best);
    }

    #[test]
    fn patience_one_stops_immediately() {
        assert_eq!(run(&[0.3, 0.4, 0.35, 0.9], 1), (3, 2));
    }

    #[test]
    fn history_csv_round_trip() {
        let h = History {
            records: vec![
                EpochRecord {
                    epoch: 1,
                    lr: 1e-3,
                    train_loss: 2.25,
                    train_acc: 0.125,
                    val_loss: 2.5,
                    val_acc: 0.25,
                    seconds: 1.5,
                },
                EpochRecord {
                    epoch: 2,
                    lr: 1e-4,
                    train_loss: 1.0,
                    train_acc: 0.5,
                    val_loss: 1.25,
                    val_acc: 0.5,
                    seconds: 1.25,
                },
            ],
        };
        let text = h.to_csv();
        assert!(text.starts_with(HISTORY_HEADER));
        assert_eq!(History::from_csv(&text).unwrap(), h);
        assert_eq!(h.best().unwrap().epoch, 2);
        assert!(History::from_csv("epoch,lr\n1,2\n").is_err());
    }

    #[test]
    fn config_defaults_and_strict_keys() {
        let c: TrainConfig = toml::from_str("data = \"x\"\n[optimizer]\nkind = \"adam\"\n").unwrap();
        assert_eq!(c.batch_size, 32);
        assert_eq!(c.max_epochs, 150);
        assert_eq!(c.patience, 20);
        c.validate().unwrap();
        let err = toml::from_str::<TrainConfig>("lerning_rate = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("lerning_rate"));
        let bad = TrainConfig {
            data: "x".into(),
            patience: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let mismatch = TrainConfig {
            data: "x".into(),
            model: "tiny".into(),
            ..TrainConfig::default()
        };
        assert!(mismatch.validate().is_err());
    }
}
