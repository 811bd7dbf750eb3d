//! Top-1 accuracy under single, aggregated, and self-distilled inference.

use std::fmt;
use std::str::FromStr;

use sla_core::objective::{aggregate_logits_batch, mean_logits};
use sla_core::{argmax, Image, SlaModel, Tensor, Transformation};

use crate::data::Dataset;
use crate::error::{LabError, Result};

/// Images per forward batch during evaluation. Results do not depend on it.
pub const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InferenceMode {
    /// One forward of the untransformed image through the identity column
    /// of the joint head, or through `u` for models without one.
    Si,
    /// Conditional logits averaged over every transformation.
    Ag,
    /// One forward through the distilled head `u` of a joint model.
    Sd,
}

impl InferenceMode {
    pub fn name(self) -> &'static str {
        match self {
            InferenceMode::Si => "si",
            InferenceMode::Ag => "ag",
            InferenceMode::Sd => "sd",
        }
    }

    /// Whether `model` carries the heads this mode reads.
    pub fn check(self, model: &SlaModel) -> Result<()> {
        let ok = match self {
            InferenceMode::Si => true,
            InferenceMode::Ag => model.joint().is_some(),
            InferenceMode::Sd => model.joint().is_some() && model.primary().is_some(),
        };
        if ok {
            Ok(())
        } else {
            Err(LabError::Config(format!(
                "inference mode {} is not supported by this model",
                self.name()
            )))
        }
    }

    /// The modes a model supports, in `si, ag, sd` order.
    pub fn supported(model: &SlaModel) -> Vec<InferenceMode> {
        [InferenceMode::Si, InferenceMode::Ag, InferenceMode::Sd]
            .into_iter()
            .filter(|m| m.check(model).is_ok())
            .collect()
    }
}

impl fmt::Display for InferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InferenceMode {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "si" => Ok(InferenceMode::Si),
            "ag" => Ok(InferenceMode::Ag),
            "sd" => Ok(InferenceMode::Sd),
            other => Err(LabError::Config(format!("unknown inference mode {other:?}"))),
        }
    }
}

/// `[B×N]` logits for a chunk of images.
pub fn logits(model: &SlaModel, images: &[Image], set: &[Transformation], mode: InferenceMode) -> Result<Tensor> {
    mode.check(model)?;
    Ok(match mode {
        InferenceMode::Si => model.single_logits(&model.embed_batch(images)?)?,
        InferenceMode::Ag => aggregate_logits_batch(model, images, set)?,
        InferenceMode::Sd => model.primary_logits(&model.embed_batch(images)?)?,
    })
}

/// Predicted class of every image.
pub fn predict(model: &SlaModel, images: &[Image], set: &[Transformation], mode: InferenceMode) -> Result<Vec<usize>> {
    let n = model.n_classes();
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_CHUNK) {
        let l = logits(model, chunk, set, mode)?.to_vec();
        out.extend(l.chunks(n).map(|row| argmax(row).expect("non-empty row")));
    }
    Ok(out)
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

/// Accuracy per requested mode, in request order.
pub fn evaluate(
    model: &SlaModel,
    ds: &Dataset,
    set: &[Transformation],
    modes: &[InferenceMode],
) -> Result<Vec<(InferenceMode, f64)>> {
    for m in modes {
        m.check(model)?;
    }
    modes
        .iter()
        .map(|&m| Ok((m, accuracy(&predict(model, &ds.images, set, m)?, &ds.labels))))
        .collect()
}

/// Accuracy of the mean single-inference logits of several models.
pub fn ensemble_accuracy(models: &[&SlaModel], ds: &Dataset) -> Result<f64> {
    let first = models
        .first()
        .ok_or_else(|| LabError::Config("ensemble needs at least one model".into()))?;
    let n = first.n_classes();
    if let Some(m) = models.iter().find(|m| m.n_classes() != n) {
        return Err(LabError::Consistency(format!(
            "ensemble members disagree on class count: {n} vs {}",
            m.n_classes()
        )));
    }
    let mut preds = Vec::with_capacity(ds.len());
    for chunk in ds.images.chunks(EVAL_CHUNK) {
        let per_model: Vec<Vec<f64>> = models
            .iter()
            .map(|m| Ok(m.single_logits(&m.embed_batch(chunk)?)?.to_vec()))
            .collect::<Result<_>>()?;
        let mean = mean_logits(&per_model)?;
        preds.extend(mean.chunks(n).map(|row| argmax(row).expect("non-empty row")));
    }
    Ok(accuracy(&preds, &ds.labels))
}
