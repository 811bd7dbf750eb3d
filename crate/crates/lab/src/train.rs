//! The training loop and its metrics table.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sla_core::optim::sgd_step;
use sla_core::{checkpoint, Image, ObjectiveKind, OptimizerConfig, Parameter, SlaModel, TransformationSet};

use crate::config::TrainConfig;
use crate::data::Dataset;
use crate::error::{LabError, Result};
use crate::eval::{self, InferenceMode};

pub const METRICS_HEADER: &str =
    "iteration,lr,loss_total,loss_cls,loss_ss,loss_kl,loss_ce_u,acc_train,acc_si,acc_ag,acc_sd,seconds";

/// One evaluation point. Absent values become empty CSV cells.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    /// Number of optimizer steps taken so far.
    pub iteration: usize,
    /// Learning rate of the last step.
    pub lr: f64,
    pub loss_total: f64,
    pub loss_cls: f64,
    pub loss_ss: Option<f64>,
    pub loss_kl: Option<f64>,
    pub loss_ce_u: Option<f64>,
    pub acc_train: f64,
    pub acc_si: Option<f64>,
    pub acc_ag: Option<f64>,
    pub acc_sd: Option<f64>,
    pub seconds: Option<f64>,
}

impl MetricsRow {
    pub fn accuracy(&self, mode: InferenceMode) -> Option<f64> {
        match mode {
            InferenceMode::Si => self.acc_si,
            InferenceMode::Ag => self.acc_ag,
            InferenceMode::Sd => self.acc_sd,
        }
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.lr,
            self.loss_total,
            self.loss_cls,
            opt(self.loss_ss),
            opt(self.loss_kl),
            opt(self.loss_ce_u),
            self.acc_train,
            opt(self.acc_si),
            opt(self.acc_ag),
            opt(self.acc_sd),
            opt(self.seconds),
        )
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    writeln!(out, "{METRICS_HEADER}").unwrap();
    for r in rows {
        writeln!(out, "{}", r.to_csv()).unwrap();
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Fill the `seconds` column. Off by default so that repeated runs
    /// produce identical files.
    pub timing: bool,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: SlaModel,
    pub transforms: TransformationSet,
    pub metrics: Vec<MetricsRow>,
}

impl TrainOutcome {
    pub fn final_metrics(&self) -> &MetricsRow {
        self.metrics.last().expect("at least one evaluation")
    }

    /// Writes `metrics.csv` and `model.ckpt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
        let csv = dir.join("metrics.csv");
        std::fs::write(&csv, metrics_csv(&self.metrics)).map_err(|e| LabError::io(&csv, e))?;
        let ckpt = dir.join("model.ckpt");
        std::fs::write(&ckpt, checkpoint::encode(&self.model)?).map_err(|e| LabError::io(&ckpt, e))
    }
}

/// Modes evaluated during training for each objective.
pub fn eval_modes(objective: ObjectiveKind) -> Vec<InferenceMode> {
    match objective {
        ObjectiveKind::Baseline | ObjectiveKind::Da | ObjectiveKind::Mt => vec![InferenceMode::Si],
        ObjectiveKind::Sla => vec![InferenceMode::Si, InferenceMode::Ag],
        ObjectiveKind::SlaSd { .. } => vec![InferenceMode::Si, InferenceMode::Ag, InferenceMode::Sd],
    }
}

/// Seeded epoch-wise shuffling; a partial tail is dropped and the order is
/// redrawn.
struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    fn new(n: usize, batch: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self {
            order,
            cursor: 0,
            batch: batch.min(n),
            rng,
        }
    }

    fn next(&mut self) -> &[usize] {
        if self.cursor + self.batch > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let s = &self.order[self.cursor..self.cursor + self.batch];
        self.cursor += self.batch;
        s
    }
}

/// Loads the data named by `cfg` and trains.
pub fn run_training(cfg: &TrainConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train = cfg.load_train()?;
    let test = cfg.load_test()?;
    train_on(cfg, &train, &test, opts)
}

/// Trains on already loaded data. Deterministic for a fixed config.
pub fn train_on(cfg: &TrainConfig, train: &Dataset, test: &Dataset, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate()?;
    let first = train
        .images
        .first()
        .ok_or_else(|| LabError::Consistency("training set is empty".into()))?;
    if train.n_classes != cfg.n_classes() || test.n_classes != cfg.n_classes() {
        return Err(LabError::Consistency(format!(
            "config expects {} classes, data has {} (train) and {} (test)",
            cfg.n_classes(),
            train.n_classes,
            test.n_classes
        )));
    }
    let objective = cfg.objective();
    let set = cfg.transformation_set()?;
    let spec = cfg.model_spec(first.dims())?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = SlaModel::new(&spec, &mut init_rng)?;
    let mut params = model
        .parameters()
        .into_iter()
        .map(Parameter::new)
        .collect::<sla_core::Result<Vec<_>>>()?;
    let opt = OptimizerConfig::from(&cfg.optimizer);
    let modes = eval_modes(objective);
    let mut sampler = BatchSampler::new(train.len(), cfg.batch_size, cfg.seed);
    let started = Instant::now();
    let mut metrics = Vec::new();

    for it in 0..cfg.total_iterations {
        let idx = sampler.next();
        let batch: Vec<(&Image, usize)> = idx.iter().map(|&i| (&train.images[i], train.labels[i])).collect();
        let loss = objective.loss(&model, &batch, &set)?;
        let total = loss.total_value();
        if !total.is_finite() {
            return Err(LabError::Consistency(format!("loss diverged to {total} at iteration {it}")));
        }
        loss.total.backward()?;
        let lr = opt.learning_rate_at(it, cfg.total_iterations);
        sgd_step(&mut params, &opt, it, cfg.total_iterations)?;

        let done = it + 1;
        if done % cfg.eval_every == 0 || done == cfg.total_iterations {
            let acc = |ds: &Dataset, mode| -> Result<f64> {
                Ok(eval::accuracy(&eval::predict(&model, &ds.images, &set, mode)?, &ds.labels))
            };
            let test_acc = |mode| -> Result<Option<f64>> {
                if modes.contains(&mode) {
                    acc(test, mode).map(Some)
                } else {
                    Ok(None)
                }
            };
            metrics.push(MetricsRow {
                iteration: done,
                lr,
                loss_total: total,
                loss_cls: loss.classification,
                loss_ss: loss.self_supervision,
                loss_kl: loss.distill_kl,
                loss_ce_u: loss.distill_ce,
                acc_train: acc(train, InferenceMode::Si)?,
                acc_si: test_acc(InferenceMode::Si)?,
                acc_ag: test_acc(InferenceMode::Ag)?,
                acc_sd: test_acc(InferenceMode::Sd)?,
                seconds: opts.timing.then(|| started.elapsed().as_secs_f64()),
            });
        }
    }
    Ok(TrainOutcome {
        model,
        transforms: set,
        metrics,
    })
}
