//! Numerical check of how the joint-label loss relates to the augmentation
//! and multi-task losses when the joint head is built from `u` and `v`.
//!
//! With `w_ij = u_i + v_j` the joint softmax factorizes into the class and
//! transformation softmaxes, so the joint loss equals the multi-task loss.
//! With `w_ij = u_i` every class's mass is split evenly over its `M` joint
//! labels, so the joint loss equals the augmentation loss plus `ln M`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sla_core::objective::{loss_da, loss_mt, loss_sla};
use sla_core::{BackboneKind, HeadSet, Image, ModelSpec, SlaModel, TransformationSet};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionCase {
    pub embed_dim: usize,
    pub n_classes: usize,
    pub n_transforms: usize,
    pub batch: usize,
    /// `loss_sla(w_ij = u_i) − loss_da`.
    pub da_gap: f64,
    /// `loss_sla(w_ij = u_i + v_j) − loss_mt`.
    pub mt_gap: f64,
}

impl ReductionCase {
    /// `|da_gap − ln M|`.
    pub fn da_gap_after_offset(&self) -> f64 {
        (self.da_gap - (self.n_transforms as f64).ln()).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReductionReport {
    pub cases: Vec<ReductionCase>,
}

impl ReductionReport {
    pub fn max_da_gap(&self) -> f64 {
        self.cases.iter().map(|c| c.da_gap.abs()).fold(0.0, f64::max)
    }

    pub fn max_da_gap_after_offset(&self) -> f64 {
        self.cases.iter().map(ReductionCase::da_gap_after_offset).fold(0.0, f64::max)
    }

    pub fn max_mt_gap(&self) -> f64 {
        self.cases.iter().map(|c| c.mt_gap.abs()).fold(0.0, f64::max)
    }
}

/// Builds `w` from `u` and optionally `v` in place.
fn write_joint(model: &SlaModel, with_v: bool) -> Result<()> {
    let (n, m, d) = (model.n_classes(), model.n_transforms(), model.embed_dim());
    let u = model.require_primary()?.to_vec();
    let v = model.require_selfsup()?.to_vec();
    let mut w = vec![0.0; n * m * d];
    for i in 0..n {
        for j in 0..m {
            for k in 0..d {
                w[(i * m + j) * d + k] = u[i * d + k] + if with_v { v[j * d + k] } else { 0.0 };
            }
        }
    }
    model.require_joint()?.weight.set_values(&w)?;
    Ok(())
}

/// Runs `count` random tiny cases: `D ≤ 8`, `N ≤ 3`, `M ≤ 4`, batch `≤ 4`.
pub fn reduction_check(count: usize, seed: u64) -> Result<ReductionReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(count);
    for _ in 0..count {
        let d = rng.random_range(1..=8);
        let n = rng.random_range(1..=3);
        let m = rng.random_range(1..=4);
        let b = rng.random_range(1..=4);
        let set = TransformationSet::rotation_subset(&(0..m).collect::<Vec<_>>())?;
        let spec = ModelSpec {
            backbone: BackboneKind::Mlp { hidden: vec![d] },
            input_dims: [3, 3, 1],
            n_classes: n,
            n_transforms: m,
            heads: HeadSet {
                joint: true,
                primary: true,
                selfsup: true,
            },
        };
        let model = SlaModel::new(&spec, &mut rng)?;
        let images: Vec<Image> = (0..b)
            .map(|_| Image::new(3, 3, 1, (0..9).map(|_| rng.random()).collect()))
            .collect::<sla_core::Result<_>>()?;
        let batch: Vec<(&Image, usize)> = images.iter().map(|x| (x, rng.random_range(0..n))).collect();

        write_joint(&model, false)?;
        let da_gap = loss_sla(&model, &batch, &set)?.total_value() - loss_da(&model, &batch, &set)?.total_value();
        write_joint(&model, true)?;
        let mt_gap = loss_sla(&model, &batch, &set)?.total_value() - loss_mt(&model, &batch, &set)?.total_value();
        cases.push(ReductionCase {
            embed_dim: d,
            n_classes: n,
            n_transforms: m,
            batch: b,
            da_gap,
            mt_gap,
        });
    }
    Ok(ReductionReport { cases })
}
