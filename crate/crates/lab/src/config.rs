//! Versioned JSON run configuration.
//!
//! ```json
//! {
//!   "version": 1,
//!   "dataset": { "name": "mnist", "per_class": 100, "subsample_seed": 0 },
//!   "backbone": { "kind": "mlp", "hidden": [128] },
//!   "transforms": { "kind": "rotation" },
//!   "objective": { "kind": "sla_sd", "beta": 1 },
//!   "optimizer": { "learning_rate": 0.1, "momentum": 0.9, "weight_decay": 0.0001,
//!                  "decay_milestones": [0.5, 0.75], "decay_factor": 0.1 },
//!   "total_iterations": 1000,
//!   "batch_size": 32,
//!   "eval_every": 500,
//!   "seed": 0
//! }
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sla_core::{BackboneKind, ModelSpec, ObjectiveKind, OptimizerConfig, TransformationSet};

use crate::data::{self, Dataset, SubsampleSpec};
use crate::error::{LabError, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub version: u32,
    pub dataset: DatasetConfig,
    pub backbone: BackboneConfig,
    pub transforms: TransformConfig,
    pub objective: ObjectiveConfig,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    pub total_iterations: usize,
    pub batch_size: usize,
    pub eval_every: usize,
    pub seed: u64,
}

/// Where the data comes from. With no explicit paths the files are looked up
/// in `dir`, then `$SLA_DATA_DIR`, then `data/mnist`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_images: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_class: Option<usize>,
    #[serde(default)]
    pub subsample_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackboneConfig {
    Linear {
        #[serde(default)]
        projection: Option<usize>,
    },
    Mlp {
        hidden: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformConfig {
    Identity,
    /// Quarter turns to use; all four when absent.
    Rotation {
        #[serde(default)]
        quarter_turns: Option<Vec<usize>>,
    },
    /// Channel orders such as `"GBR"`; all six when absent.
    Colorperm {
        #[serde(default)]
        perms: Option<Vec<String>>,
    },
    Product {
        #[serde(default)]
        quarter_turns: Option<Vec<usize>>,
        #[serde(default)]
        perms: Option<Vec<String>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveConfig {
    Baseline,
    Da,
    Mt,
    Sla,
    SlaSd { beta: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub decay_milestones: Vec<f64>,
    pub decay_factor: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerConfig::default().into()
    }
}

impl From<OptimizerConfig> for OptimizerSettings {
    fn from(c: OptimizerConfig) -> Self {
        Self {
            learning_rate: c.learning_rate,
            momentum: c.momentum,
            weight_decay: c.weight_decay,
            decay_milestones: c.decay_milestones,
            decay_factor: c.decay_factor,
        }
    }
}

impl From<&OptimizerSettings> for OptimizerConfig {
    fn from(s: &OptimizerSettings) -> Self {
        Self {
            learning_rate: s.learning_rate,
            momentum: s.momentum,
            weight_decay: s.weight_decay,
            decay_milestones: s.decay_milestones.clone(),
            decay_factor: s.decay_factor,
        }
    }
}

impl From<&BackboneConfig> for BackboneKind {
    fn from(b: &BackboneConfig) -> Self {
        match b {
            BackboneConfig::Linear { projection } => BackboneKind::Linear {
                projection: *projection,
            },
            BackboneConfig::Mlp { hidden } => BackboneKind::Mlp { hidden: hidden.clone() },
        }
    }
}

impl From<ObjectiveConfig> for ObjectiveKind {
    fn from(o: ObjectiveConfig) -> Self {
        match o {
            ObjectiveConfig::Baseline => ObjectiveKind::Baseline,
            ObjectiveConfig::Da => ObjectiveKind::Da,
            ObjectiveConfig::Mt => ObjectiveKind::Mt,
            ObjectiveConfig::Sla => ObjectiveKind::Sla,
            ObjectiveConfig::SlaSd { beta } => ObjectiveKind::SlaSd { beta },
        }
    }
}

impl TransformConfig {
    pub fn build(&self) -> Result<TransformationSet> {
        let rotations = |turns: &Option<Vec<usize>>| match turns {
            Some(t) => TransformationSet::rotation_subset(t),
            None => Ok(TransformationSet::rotations()),
        };
        let perms = |names: &Option<Vec<String>>| match names {
            Some(n) => TransformationSet::color_perm_subset(&n.iter().map(String::as_str).collect::<Vec<_>>()),
            None => Ok(TransformationSet::color_perms()),
        };
        Ok(match self {
            TransformConfig::Identity => TransformationSet::identity(),
            TransformConfig::Rotation { quarter_turns } => rotations(quarter_turns)?,
            TransformConfig::Colorperm { perms: p } => perms(p)?,
            TransformConfig::Product { quarter_turns, perms: p } => {
                TransformationSet::product(&rotations(quarter_turns)?, &perms(p)?)?
            }
        })
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            LabError::Config(msg) => LabError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn objective(&self) -> ObjectiveKind {
        self.objective.into()
    }

    /// The transformations a run trains with. `Baseline` always uses the
    /// identity alone.
    pub fn transformation_set(&self) -> Result<TransformationSet> {
        match self.objective {
            ObjectiveConfig::Baseline => Ok(TransformationSet::identity()),
            _ => self.transforms.build(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.dataset.classes.as_ref().map_or(10, Vec::len)
    }

    pub fn model_spec(&self, input_dims: [usize; 3]) -> Result<ModelSpec> {
        let spec = ModelSpec {
            backbone: (&self.backbone).into(),
            input_dims,
            n_classes: self.n_classes(),
            n_transforms: self.transformation_set()?.len(),
            heads: self.objective().heads(),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks everything that can be checked without touching the data.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(LabError::Config(format!(
                "unsupported config version {}, expected {CONFIG_VERSION}",
                self.version
            )));
        }
        if self.dataset.name != "mnist" {
            return Err(LabError::Config(format!("unknown dataset {:?}", self.dataset.name)));
        }
        if self.batch_size == 0 || self.total_iterations == 0 || self.eval_every == 0 {
            return Err(LabError::Config(
                "batch_size, total_iterations and eval_every must be at least 1".into(),
            ));
        }
        if self.dataset.per_class == Some(0) {
            return Err(LabError::Config("per_class must be at least 1".into()));
        }
        self.objective().validate()?;
        OptimizerConfig::from(&self.optimizer).validate()?;
        let set = self.transformation_set()?;
        if matches!(self.objective, ObjectiveConfig::SlaSd { .. }) && set.len() < 2 {
            return Err(LabError::Config(
                "self-distillation needs at least two transformations".into(),
            ));
        }
        if set.iter().any(|t| t.kind.parts().1.is_some()) {
            return Err(LabError::Config(
                "channel permutations need 3-channel images; MNIST has one channel".into(),
            ));
        }
        self.model_spec([28, 28, 1])?;
        Ok(())
    }

    fn split_paths(&self, train: bool) -> (PathBuf, PathBuf) {
        let d = &self.dataset;
        let (img, lab) = if train {
            (&d.train_images, &d.train_labels)
        } else {
            (&d.test_images, &d.test_labels)
        };
        let dir = d.dir.clone().unwrap_or_else(data::data_dir);
        let (di, dl) = data::mnist_paths(&dir, train);
        (img.clone().unwrap_or(di), lab.clone().unwrap_or(dl))
    }

    /// The training split after the class filter and per-class subsampling.
    pub fn load_train(&self) -> Result<Dataset> {
        let (i, l) = self.split_paths(true);
        let mut ds = self.filter(data::load_mnist_idx(&i, &l)?)?;
        if let Some(n) = self.dataset.per_class {
            ds = data::subsample_per_class(
                &ds,
                SubsampleSpec {
                    per_class: n,
                    seed: self.dataset.subsample_seed,
                },
            )?;
        }
        ds.name = "mnist-train".into();
        Ok(ds)
    }

    /// The full test split after the class filter.
    pub fn load_test(&self) -> Result<Dataset> {
        let (i, l) = self.split_paths(false);
        let mut ds = self.filter(data::load_mnist_idx(&i, &l)?)?;
        ds.name = "mnist-test".into();
        Ok(ds)
    }

    fn filter(&self, ds: Dataset) -> Result<Dataset> {
        match &self.dataset.classes {
            Some(c) => data::select_classes(&ds, c),
            None => Ok(ds),
        }
    }
}
