//! Self-supervised label augmentation on a small reverse-mode autodiff engine.
//!
//! A classifier over `N` classes is trained on `M` transformed copies of every
//! input, each copy labelled with the joint label `(class, transform)`. At test
//! time the per-transform conditional logits are averaged (aggregated
//! inference), and an auxiliary head can be distilled from that aggregate so a
//! single forward pass recovers most of its accuracy.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, datasets, and the
//! experiment driver live in the `sla-lab` crate.
//!
//! Modules:
//! * [`tensor`]: dense `f64` tensors with reverse-mode gradients.
//! * [`optim`]: SGD with heavy-ball momentum, coupled weight decay, and a
//!   milestone learning-rate schedule.
//! * [`transform`]: quarter-turn rotations, channel permutations, their
//!   products, and joint-label batch expansion.
//! * [`model`]: backbones and the joint, primary, and self-supervised heads.
//! * [`objective`]: the augmentation, multi-task, joint-label, and
//!   self-distillation losses plus aggregated inference.
//! * [`checkpoint`]: a versioned binary container for model parameters.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod checkpoint;
mod error;
pub mod model;
pub mod objective;
pub mod optim;
pub mod tensor;
pub mod transform;

pub use error::{Error, Result};
pub use model::{Backbone, BackboneKind, HeadSet, JointHead, ModelSpec, SlaModel};
pub use objective::{LossBreakdown, ObjectiveKind};
pub use optim::{OptimizerConfig, Parameter};
pub use tensor::Tensor;
pub use transform::{Image, TransformKind, Transformation, TransformationSet};

/// Index of the largest value; ties go to the lowest index.
///
/// Returns `None` for an empty slice.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}
