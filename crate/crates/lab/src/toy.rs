//! Linear classifiers on raw pixels of two digits, upright or rotated.
//!
//! Every mode trains a bias-free linear softmax classifier directly on the
//! flattened pixels:
//!
//! * `upright`: two classes on the original images, tested on upright
//!   test digits;
//! * `rotated_shared_label`: two classes on all four rotations of every
//!   image (the augmentation loss), tested on all four rotations of the test
//!   digits;
//! * `rotated_sla`: eight joint classes on all four rotations, tested with
//!   aggregated inference, which itself looks at all four rotations.

use std::fmt;
use std::str::FromStr;

use sla_core::{Image, TransformationSet};

use crate::config::{BackboneConfig, DatasetConfig, ObjectiveConfig, OptimizerSettings, TrainConfig, TransformConfig, CONFIG_VERSION};
use crate::data::{select_classes, Dataset};
use crate::error::{LabError, Result};
use crate::eval::{self, InferenceMode};
use crate::train::{train_on, TrainOptions};

pub const TOY_CSV_HEADER: &str = "pair_a,pair_b,mode,iterations,batch_size,seed,test_examples,test_error";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyMode {
    Upright,
    RotatedSharedLabel,
    RotatedSla,
}

impl ToyMode {
    pub fn name(self) -> &'static str {
        match self {
            ToyMode::Upright => "upright",
            ToyMode::RotatedSharedLabel => "rotated_shared_label",
            ToyMode::RotatedSla => "rotated_sla",
        }
    }
}

impl fmt::Display for ToyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ToyMode {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upright" => Ok(ToyMode::Upright),
            "rotated_shared_label" => Ok(ToyMode::RotatedSharedLabel),
            "rotated_sla" => Ok(ToyMode::RotatedSla),
            other => Err(LabError::Config(format!("unknown toy mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToySettings {
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerSettings,
}

impl Default for ToySettings {
    fn default() -> Self {
        Self {
            iterations: 5000,
            batch_size: 32,
            seed: 0,
            optimizer: OptimizerSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyResult {
    pub pair: (usize, usize),
    pub mode: ToyMode,
    pub settings: ToySettings,
    pub test_examples: usize,
    pub test_error: f64,
}

impl ToyResult {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.pair.0,
            self.pair.1,
            self.mode,
            self.settings.iterations,
            self.settings.batch_size,
            self.settings.seed,
            self.test_examples,
            self.test_error
        )
    }
}

/// The run configuration behind a toy mode.
pub fn toy_config(pair: (usize, usize), mode: ToyMode, settings: &ToySettings) -> TrainConfig {
    let (transforms, objective) = match mode {
        ToyMode::Upright => (TransformConfig::Identity, ObjectiveConfig::Baseline),
        ToyMode::RotatedSharedLabel => (TransformConfig::Rotation { quarter_turns: None }, ObjectiveConfig::Da),
        ToyMode::RotatedSla => (TransformConfig::Rotation { quarter_turns: None }, ObjectiveConfig::Sla),
    };
    TrainConfig {
        version: CONFIG_VERSION,
        dataset: DatasetConfig {
            name: "mnist".into(),
            dir: None,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            classes: Some(vec![pair.0, pair.1]),
            per_class: None,
            subsample_seed: 0,
        },
        backbone: BackboneConfig::Linear { projection: None },
        transforms,
        objective,
        optimizer: settings.optimizer.clone(),
        total_iterations: settings.iterations,
        batch_size: settings.batch_size,
        eval_every: settings.iterations,
        seed: settings.seed,
    }
}

/// Runs one toy mode on full ten-class train and test splits.
pub fn toy_experiment(
    train: &Dataset,
    test: &Dataset,
    pair: (usize, usize),
    mode: ToyMode,
    settings: &ToySettings,
) -> Result<ToyResult> {
    if pair.0 == pair.1 || pair.0 >= 10 || pair.1 >= 10 {
        return Err(LabError::Config(format!(
            "toy pair must be two distinct digits, got {pair:?}"
        )));
    }
    let cfg = toy_config(pair, mode, settings);
    let train = select_classes(train, &[pair.0, pair.1])?;
    let test = select_classes(test, &[pair.0, pair.1])?;
    let outcome = train_on(&cfg, &train, &test, &TrainOptions::default())?;
    let model = &outcome.model;

    let (images, labels, inference): (Vec<Image>, Vec<usize>, _) = match mode {
        ToyMode::Upright => (test.images.clone(), test.labels.clone(), InferenceMode::Si),
        ToyMode::RotatedSharedLabel => {
            let rot = TransformationSet::rotations();
            let mut images = Vec::with_capacity(test.len() * rot.len());
            let mut labels = Vec::with_capacity(images.capacity());
            for (x, y) in test.pairs() {
                for t in rot.iter() {
                    images.push(t.apply(x)?);
                    labels.push(y);
                }
            }
            (images, labels, InferenceMode::Si)
        }
        ToyMode::RotatedSla => (test.images.clone(), test.labels.clone(), InferenceMode::Ag),
    };
    let predictions = eval::predict(model, &images, &outcome.transforms, inference)?;
    Ok(ToyResult {
        pair,
        mode,
        settings: settings.clone(),
        test_examples: labels.len(),
        test_error: 1.0 - eval::accuracy(&predictions, &labels),
    })
}
