//! Independently trained models averaged at the logit level.

use crate::config::TrainConfig;
use crate::data::Dataset;
use crate::error::{LabError, Result};
use crate::eval::{self, InferenceMode};
use crate::train::{train_on, TrainOptions, TrainOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleReport {
    pub seeds: Vec<u64>,
    pub member_accuracies: Vec<f64>,
    pub ensemble_accuracy: f64,
}

impl EnsembleReport {
    pub fn mean_member_accuracy(&self) -> f64 {
        self.member_accuracies.iter().sum::<f64>() / self.member_accuracies.len() as f64
    }
}

/// `k` copies of `base` with seeds `base.seed, base.seed + 1, …`.
pub fn seeded_configs(base: &TrainConfig, k: usize) -> Vec<TrainConfig> {
    (0..k as u64)
        .map(|i| TrainConfig {
            seed: base.seed + i,
            ..base.clone()
        })
        .collect()
}

/// Trains one model per config and scores the mean of their single-inference
/// logits on `test`. Configs may differ only in their seed.
pub fn run_ensemble(cfgs: &[TrainConfig], train: &Dataset, test: &Dataset) -> Result<EnsembleReport> {
    let first = cfgs
        .first()
        .ok_or_else(|| LabError::Config("ensemble needs at least one member".into()))?;
    for c in cfgs {
        if (TrainConfig { seed: first.seed, ..c.clone() }) != *first {
            return Err(LabError::Config("ensemble members may differ only in seed".into()));
        }
    }
    let outcomes: Vec<TrainOutcome> = cfgs
        .iter()
        .map(|c| train_on(c, train, test, &TrainOptions::default()))
        .collect::<Result<_>>()?;
    let models: Vec<_> = outcomes.iter().map(|o| &o.model).collect();
    report(cfgs.iter().map(|c| c.seed).collect(), &models, test)
}

/// Scores already trained members.
pub fn report(seeds: Vec<u64>, models: &[&sla_core::SlaModel], test: &Dataset) -> Result<EnsembleReport> {
    let member_accuracies = models
        .iter()
        .map(|m| {
            Ok(eval::evaluate(m, test, &[], &[InferenceMode::Si])?[0].1)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleReport {
        seeds,
        member_accuracies,
        ensemble_accuracy: eval::ensemble_accuracy(models, test)?,
    })
}
