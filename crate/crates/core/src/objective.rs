//! Training objectives and aggregated inference.
//!
//! All losses take a batch of `(image, class)` pairs and a list of
//! transformations. Every image is pushed through every transformation, so a
//! batch of `B` originals costs `B·M` backbone forwards, laid out input-major:
//! row `b·M + p` holds image `b` under the `p`-th listed transformation. The
//! joint label and the self-supervised label of that row use the
//! transformation's `index`, not its position, so any subset or reordering of
//! a set keeps its pairing with the joint head's columns.
//!
//! Averaging over rows equals averaging over transformations and then over the
//! batch, which is the `1/M` sum inside each objective.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{HeadSet, SlaModel};
use crate::tensor::{softmax, Tensor};
use crate::transform::{Image, Transformation};

/// The training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    /// Identity transform only, primary head `u`.
    Baseline,
    /// Label-preserving augmentation with head `u`.
    Da,
    /// Head `u` on the class plus head `v` on the transformation.
    Mt,
    /// Joint-label classification with head `w`.
    Sla,
    /// `Sla` plus distillation of the aggregated prediction into `u`;
    /// `beta` weights the student's own cross-entropy and must be 0 or 1.
    SlaSd { beta: u8 },
}

impl ObjectiveKind {
    pub fn heads(self) -> HeadSet {
        match self {
            ObjectiveKind::Baseline | ObjectiveKind::Da => HeadSet {
                primary: true,
                ..HeadSet::default()
            },
            ObjectiveKind::Mt => HeadSet {
                primary: true,
                selfsup: true,
                ..HeadSet::default()
            },
            ObjectiveKind::Sla => HeadSet {
                joint: true,
                ..HeadSet::default()
            },
            ObjectiveKind::SlaSd { .. } => HeadSet {
                joint: true,
                primary: true,
                ..HeadSet::default()
            },
        }
    }

    pub fn validate(self) -> Result<()> {
        match self {
            ObjectiveKind::SlaSd { beta } if beta > 1 => Err(Error::Contract(format!(
                "self-distillation beta must be 0 or 1, got {beta}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Baseline => "baseline",
            ObjectiveKind::Da => "da",
            ObjectiveKind::Mt => "mt",
            ObjectiveKind::Sla => "sla",
            ObjectiveKind::SlaSd { .. } => "sla_sd",
        }
    }

    /// Dispatches to the matching loss. `Baseline` uses only the identity.
    pub fn loss(
        self,
        model: &SlaModel,
        batch: &[(&Image, usize)],
        transforms: &[Transformation],
    ) -> Result<LossBreakdown> {
        self.validate()?;
        match self {
            ObjectiveKind::Baseline => loss_da(model, batch, &transforms[..1.min(transforms.len())]),
            ObjectiveKind::Da => loss_da(model, batch, transforms),
            ObjectiveKind::Mt => loss_mt(model, batch, transforms),
            ObjectiveKind::Sla => loss_sla(model, batch, transforms),
            ObjectiveKind::SlaSd { beta } => loss_sla_sd(model, batch, transforms, beta),
        }
    }
}

/// A differentiable total plus its unweighted parts.
///
/// `total = classification + self_supervision + distill_kl + beta·distill_ce`,
/// with absent parts counting as zero.
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub total: Tensor,
    /// Cross-entropy of the class (DA, MT) or joint (SLA) classifier.
    pub classification: f64,
    pub self_supervision: Option<f64>,
    pub distill_kl: Option<f64>,
    pub distill_ce: Option<f64>,
    pub beta: Option<f64>,
}

impl LossBreakdown {
    fn classification_only(total: Tensor) -> Result<Self> {
        let classification = total.item()?;
        Ok(Self {
            total,
            classification,
            self_supervision: None,
            distill_kl: None,
            distill_ce: None,
            beta: None,
        })
    }

    pub fn total_value(&self) -> f64 {
        self.total.item().unwrap_or(f64::NAN)
    }

    /// The weighted sum of the parts, recomputed from the scalars.
    pub fn weighted_sum(&self) -> f64 {
        self.classification
            + self.self_supervision.unwrap_or(0.0)
            + self.distill_kl.unwrap_or(0.0)
            + self.beta.unwrap_or(0.0) * self.distill_ce.unwrap_or(0.0)
    }
}

/// Embeddings of every image under every transformation.
struct Expanded {
    /// `[B·M' × D]`, input-major.
    z: Tensor,
    /// Class of each row.
    classes: Vec<usize>,
    /// Transformation index of each row.
    indices: Vec<usize>,
}

fn check_transforms(model: &SlaModel, transforms: &[Transformation]) -> Result<()> {
    if transforms.is_empty() {
        return Err(Error::Contract("at least one transformation is required".into()));
    }
    let m = model.n_transforms();
    if let Some(t) = transforms.iter().find(|t| t.index >= m) {
        return Err(Error::Index {
            what: "transformation",
            index: t.index,
            len: m,
        });
    }
    Ok(())
}

fn check_labels(model: &SlaModel, batch: &[(&Image, usize)]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let n = model.n_classes();
    match batch.iter().enumerate().find(|(_, (_, y))| *y >= n) {
        Some((row, (_, y))) => Err(Error::Label {
            row,
            label: *y,
            classes: n,
        }),
        None => Ok(()),
    }
}

fn expand(model: &SlaModel, batch: &[(&Image, usize)], transforms: &[Transformation]) -> Result<Expanded> {
    check_transforms(model, transforms)?;
    check_labels(model, batch)?;
    let mut images = Vec::with_capacity(batch.len() * transforms.len());
    let mut classes = Vec::with_capacity(images.capacity());
    let mut indices = Vec::with_capacity(images.capacity());
    for (x, y) in batch {
        for t in transforms {
            images.push(t.apply(x)?);
            classes.push(*y);
            indices.push(t.index);
        }
    }
    let z = model.embed_batch(images.iter())?;
    Ok(Expanded { z, classes, indices })
}

/// Label-preserving augmentation: mean cross-entropy of `σ(z̃_j; u)` against
/// the original class over all transformed copies.
pub fn loss_da(model: &SlaModel, batch: &[(&Image, usize)], transforms: &[Transformation]) -> Result<LossBreakdown> {
    model.require_primary()?;
    let e = expand(model, batch, transforms)?;
    let total = model.primary_logits(&e.z)?.cross_entropy(&e.classes)?;
    LossBreakdown::classification_only(total)
}

/// Multi-task: the augmentation loss plus cross-entropy of `σ(z̃_j; v)`
/// against the transformation index.
pub fn loss_mt(model: &SlaModel, batch: &[(&Image, usize)], transforms: &[Transformation]) -> Result<LossBreakdown> {
    model.require_primary()?;
    model.require_selfsup()?;
    let e = expand(model, batch, transforms)?;
    let cls = model.primary_logits(&e.z)?.cross_entropy(&e.classes)?;
    let ss = model.selfsup_logits(&e.z)?.cross_entropy(&e.indices)?;
    let total = cls.add(&ss)?;
    Ok(LossBreakdown {
        classification: cls.item()?,
        self_supervision: Some(ss.item()?),
        distill_kl: None,
        distill_ce: None,
        beta: None,
        total,
    })
}

fn joint_labels(model: &SlaModel, e: &Expanded) -> Vec<usize> {
    let m = model.n_transforms();
    e.classes.iter().zip(&e.indices).map(|(y, j)| y * m + j).collect()
}

/// Joint-label objective: mean cross-entropy over `N·M` joint logits with
/// label `y·M + j`.
pub fn loss_sla(model: &SlaModel, batch: &[(&Image, usize)], transforms: &[Transformation]) -> Result<LossBreakdown> {
    let joint = model.require_joint()?;
    let e = expand(model, batch, transforms)?;
    let total = joint.logits(&e.z)?.cross_entropy(&joint_labels(model, &e))?;
    LossBreakdown::classification_only(total)
}

/// Averages conditional logits over transformations.
///
/// `logits` is `[B·M' × N·M]` in input-major order; the result is `[B×N]` with
/// `s[b, i] = (1/M') Σ_p logits[b·M' + p, i·M + index_p]`.
fn average_conditionals(model: &SlaModel, logits: &Tensor, transforms: &[Transformation]) -> Result<Tensor> {
    let joint = model.require_joint()?;
    let mp = transforms.len();
    let b = logits.shape()[0] / mp;
    let mut sum: Option<Tensor> = None;
    for (p, t) in transforms.iter().enumerate() {
        let rows: Vec<usize> = (0..b).map(|r| r * mp + p).collect();
        let part = logits.gather_rows(&rows)?.gather_cols(&joint.column(t.index)?)?;
        sum = Some(match sum {
            None => part,
            Some(s) => s.add(&part)?,
        });
    }
    let sum = sum.expect("transforms checked non-empty");
    Ok(sum.scale(1.0 / mp as f64))
}

/// Aggregated logits `[B×N]` for a batch of test images.
pub fn aggregate_logits_batch<'a>(
    model: &SlaModel,
    images: impl IntoIterator<Item = &'a Image>,
    transforms: &[Transformation],
) -> Result<Tensor> {
    check_transforms(model, transforms)?;
    let joint = model.require_joint()?;
    let mut expanded = Vec::new();
    for x in images {
        for t in transforms {
            expanded.push(t.apply(x)?);
        }
    }
    let z = model.embed_batch(expanded.iter())?;
    average_conditionals(model, &joint.logits(&z)?, transforms)
}

/// Aggregated logits `s` with `s_i = (1/M) Σ_j w_ij·z̃_j`, where `z̃_j` embeds
/// `t_j(x)`. Softmax of `s` is the aggregated prediction.
pub fn aggregate_logits(model: &SlaModel, x: &Image, transforms: &[Transformation]) -> Result<Tensor> {
    let s = aggregate_logits_batch(model, core::iter::once(x), transforms)?;
    s.reshape(&[model.n_classes()])
}

/// Row-wise softmax of `[B×N]` logits as a constant tensor.
pub fn softmax_rows(logits: &Tensor) -> Result<Tensor> {
    let n = *logits.shape().last().unwrap_or(&1);
    let values = logits.values();
    let mut out = Vec::with_capacity(values.len());
    for row in values.chunks(n) {
        out.extend(softmax(row));
    }
    drop(values);
    Tensor::new(logits.shape(), out)
}

/// The distillation terms for student logits `[B×N]` and a constant teacher
/// distribution: `(KL(teacher ‖ σ(student)), CE(σ(student), y))`.
pub fn distillation_terms(student: &Tensor, teacher: &Tensor, labels: &[usize]) -> Result<(Tensor, Tensor)> {
    let kl = student.kl_divergence(teacher)?;
    let ce = student.cross_entropy(labels)?;
    Ok((kl, ce))
}

/// Joint-label objective plus self-distillation of the aggregated prediction
/// into `σ(z; u)`, where `z` embeds the untransformed image.
///
/// The teacher `P_aggregated` is computed from the same forwards as the joint
/// loss and then detached, so it contributes no gradient. The identity
/// transformation must come first.
pub fn loss_sla_sd(
    model: &SlaModel,
    batch: &[(&Image, usize)],
    transforms: &[Transformation],
    beta: u8,
) -> Result<LossBreakdown> {
    ObjectiveKind::SlaSd { beta }.validate()?;
    let joint = model.require_joint()?;
    model.require_primary()?;
    check_transforms(model, transforms)?;
    if !transforms[0].kind.is_identity() {
        return Err(Error::Contract(
            "self-distillation needs the identity as the first transformation".into(),
        ));
    }
    let e = expand(model, batch, transforms)?;
    let logits = joint.logits(&e.z)?;
    let sla = logits.cross_entropy(&joint_labels(model, &e))?;

    let teacher = softmax_rows(&average_conditionals(model, &logits.detach(), transforms)?)?;
    let mp = transforms.len();
    let identity_rows: Vec<usize> = (0..batch.len()).map(|b| b * mp).collect();
    let student = model.primary_logits(&e.z.gather_rows(&identity_rows)?)?;
    let labels: Vec<usize> = batch.iter().map(|(_, y)| *y).collect();
    let (kl, ce) = distillation_terms(&student, &teacher, &labels)?;

    let beta = f64::from(beta);
    let total = sla.add(&kl)?.add(&ce.scale(beta))?;
    Ok(LossBreakdown {
        classification: sla.item()?,
        self_supervision: None,
        distill_kl: Some(kl.item()?),
        distill_ce: Some(ce.item()?),
        beta: Some(beta),
        total,
    })
}

/// Element-wise mean of logit vectors.
pub fn mean_logits(logits: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = logits
        .first()
        .ok_or_else(|| Error::Contract("ensemble needs at least one member".into()))?;
    let n = first.len();
    let mut out = alloc::vec![0.0; n];
    for l in logits {
        if l.len() != n {
            return Err(Error::Shape {
                op: "ensemble",
                lhs: alloc::vec![n],
                rhs: alloc::vec![l.len()],
            });
        }
        for (o, v) in out.iter_mut().zip(l) {
            *o += v;
        }
    }
    let k = logits.len() as f64;
    out.iter_mut().for_each(|o| *o /= k);
    Ok(out)
}

/// Mean single-inference logits of independently trained models. Argmax ties
/// in the result go to the lowest class index (see [`crate::argmax`]).
pub fn ensemble_logits(models: &[&SlaModel], x: &Image) -> Result<Vec<f64>> {
    let mut all = Vec::with_capacity(models.len());
    for (k, model) in models.iter().enumerate() {
        if let Some(first) = models.first() {
            if model.n_classes() != first.n_classes() {
                return Err(Error::Contract(format!(
                    "ensemble member {k} has {} classes, member 0 has {}",
                    model.n_classes(),
                    first.n_classes()
                )));
            }
        }
        let z = model.embed_batch(core::iter::once(x))?;
        all.push(model.single_logits(&z)?.to_vec());
    }
    mean_logits(&all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BackboneKind, ModelSpec};
    use crate::transform::TransformationSet;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Straight-loop reference implementations that read parameter values
    /// directly and share no code with the tensor graph.
    mod oracle {
        use super::*;

        pub fn lse(v: &[f64]) -> f64 {
            let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            m + libm::log(v.iter().map(|x| libm::exp(x - m)).sum::<f64>())
        }

        pub fn embed(model: &SlaModel, x: &Image) -> Vec<f64> {
            let mut h = x.pixels().to_vec();
            let relu = matches!(model.backbone().kind(), BackboneKind::Mlp { .. });
            for layer in model.backbone().layers() {
                let w = layer.weight.to_vec();
                let b = layer.bias.to_vec();
                let out = b.len();
                let mut next = b.clone();
                for (o, nv) in next.iter_mut().enumerate() {
                    for (i, hv) in h.iter().enumerate() {
                        *nv += hv * w[i * out + o];
                    }
                    if relu && *nv < 0.0 {
                        *nv = 0.0;
                    }
                }
                h = next;
            }
            h
        }

        pub fn rows_dot(w: &[f64], d: usize, z: &[f64]) -> Vec<f64> {
            w.chunks(d).map(|r| r.iter().zip(z).map(|(a, b)| a * b).sum()).collect()
        }

        fn ce(logits: &[f64], y: usize) -> f64 {
            lse(logits) - logits[y]
        }

        pub fn da(model: &SlaModel, batch: &[(&Image, usize)], set: &[Transformation]) -> f64 {
            let u = model.primary().unwrap().to_vec();
            let d = model.embed_dim();
            let mut acc = 0.0;
            for t in set {
                let mut per_t = 0.0;
                for (x, y) in batch {
                    let z = embed(model, &t.apply(x).unwrap());
                    per_t += ce(&rows_dot(&u, d, &z), *y);
                }
                acc += per_t / batch.len() as f64;
            }
            acc / set.len() as f64
        }

        pub fn mt(model: &SlaModel, batch: &[(&Image, usize)], set: &[Transformation]) -> (f64, f64) {
            let u = model.primary().unwrap().to_vec();
            let v = model.selfsup().unwrap().to_vec();
            let d = model.embed_dim();
            let (mut cls, mut ss) = (0.0, 0.0);
            for (x, y) in batch {
                for t in set {
                    let z = embed(model, &t.apply(x).unwrap());
                    cls += ce(&rows_dot(&u, d, &z), *y);
                    ss += ce(&rows_dot(&v, d, &z), t.index);
                }
            }
            let n = (batch.len() * set.len()) as f64;
            (cls / n, ss / n)
        }

        pub fn sla(model: &SlaModel, batch: &[(&Image, usize)], set: &[Transformation]) -> f64 {
            let w = model.joint().unwrap().weight.to_vec();
            let (d, m) = (model.embed_dim(), model.n_transforms());
            let mut acc = 0.0;
            for (x, y) in batch {
                for t in set {
                    let z = embed(model, &t.apply(x).unwrap());
                    acc += ce(&rows_dot(&w, d, &z), y * m + t.index);
                }
            }
            acc / (batch.len() * set.len()) as f64
        }

        pub fn aggregate(model: &SlaModel, x: &Image, set: &[Transformation]) -> Vec<f64> {
            let w = model.joint().unwrap().weight.to_vec();
            let (d, n, m) = (model.embed_dim(), model.n_classes(), model.n_transforms());
            let mut s = vec![0.0; n];
            for t in set {
                let z = embed(model, &t.apply(x).unwrap());
                let all = rows_dot(&w, d, &z);
                for i in 0..n {
                    s[i] += all[i * m + t.index];
                }
            }
            s.iter().map(|v| v / set.len() as f64).collect()
        }

        /// (KL, CE) of the `u` student against the aggregated teacher.
        pub fn distill(model: &SlaModel, batch: &[(&Image, usize)], set: &[Transformation]) -> (f64, f64) {
            let u = model.primary().unwrap().to_vec();
            let d = model.embed_dim();
            let (mut kl, mut cross) = (0.0, 0.0);
            for (x, y) in batch {
                let s = aggregate(model, x, set);
                let ls = lse(&s);
                let p: Vec<f64> = s.iter().map(|v| libm::exp(v - ls)).collect();
                let student = rows_dot(&u, d, &embed(model, x));
                let lq = lse(&student);
                for (pi, qi) in p.iter().zip(&student) {
                    if *pi > 0.0 {
                        kl += pi * (libm::log(*pi) - (qi - lq));
                    }
                }
                cross += ce(&student, *y);
            }
            (kl / batch.len() as f64, cross / batch.len() as f64)
        }
    }

    fn tiny_spec(n: usize, m: usize, heads: HeadSet, backbone: BackboneKind) -> ModelSpec {
        ModelSpec {
            backbone,
            input_dims: [3, 3, 1],
            n_classes: n,
            n_transforms: m,
            heads,
        }
    }

    fn all_heads() -> HeadSet {
        HeadSet {
            joint: true,
            primary: true,
            selfsup: true,
        }
    }

    fn random_batch(rng: &mut ChaCha8Rng, b: usize, n: usize) -> Vec<(Image, usize)> {
        (0..b)
            .map(|_| {
                let px = (0..9).map(|_| rng.random::<f64>()).collect();
                (Image::new(3, 3, 1, px).unwrap(), rng.random_range(0..n))
            })
            .collect()
    }

    fn refs(batch: &[(Image, usize)]) -> Vec<(&Image, usize)> {
        batch.iter().map(|(x, y)| (x, *y)).collect()
    }

    fn mlp() -> BackboneKind {
        BackboneKind::Mlp { hidden: vec![6] }
    }

    #[test]
    fn da_with_identity_is_plain_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let model = SlaModel::new(&tiny_spec(3, 1, all_heads(), mlp()), &mut rng).unwrap();
        let batch = random_batch(&mut rng, 4, 3);
        let b = refs(&batch);
        let set = TransformationSet::identity();
        let da = loss_da(&model, &b, &set).unwrap().total_value();
        let z = model.embed_batch(batch.iter().map(|(x, _)| x)).unwrap();
        let labels: Vec<usize> = batch.iter().map(|(_, y)| *y).collect();
        let ce = model.primary_logits(&z).unwrap().cross_entropy(&labels).unwrap().item().unwrap();
        assert_eq!(da, ce);
    }

    #[test]
    fn uniform_heads_give_log_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let batch = random_batch(&mut rng, 3, 10);
        let b = refs(&batch);
        let set = TransformationSet::rotations();
        let model = SlaModel::zeroed(&tiny_spec(10, 4, all_heads(), mlp())).unwrap();
        let da = loss_da(&model, &b, &set).unwrap();
        assert!((da.total_value() - libm::log(10.0)).abs() < 1e-12);
        let mt = loss_mt(&model, &b, &set).unwrap();
        assert!((mt.total_value() - libm::log(10.0) - libm::log(4.0)).abs() < 1e-12);
        let sla = loss_sla(&model, &b, &set).unwrap();
        assert!((sla.total_value() - libm::log(40.0)).abs() < 1e-12);
    }

    #[test]
    fn mt_single_transform_has_zero_selfsup() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let model = SlaModel::new(&tiny_spec(3, 1, all_heads(), mlp()), &mut rng).unwrap();
        let batch = random_batch(&mut rng, 2, 3);
        let mt = loss_mt(&model, &refs(&batch), &TransformationSet::identity()).unwrap();
        assert_eq!(mt.self_supervision, Some(0.0));
        let da = loss_da(&model, &refs(&batch), &TransformationSet::identity()).unwrap();
        assert_eq!(mt.classification, da.total_value());
    }

    #[test]
    fn losses_match_scalar_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let set = TransformationSet::rotations();
        for _ in 0..5 {
            let model = SlaModel::new(&tiny_spec(3, 4, all_heads(), mlp()), &mut rng).unwrap();
            let batch = random_batch(&mut rng, 3, 3);
            let b = refs(&batch);
            let da = loss_da(&model, &b, &set).unwrap().total_value();
            assert!((da - oracle::da(&model, &b, &set)).abs() < 1e-12);
            let mt = loss_mt(&model, &b, &set).unwrap();
            let (cls, ss) = oracle::mt(&model, &b, &set);
            assert!((mt.classification - cls).abs() < 1e-12);
            assert!((mt.self_supervision.unwrap() - ss).abs() < 1e-12);
            assert!((mt.total_value() - mt.weighted_sum()).abs() < 1e-12);
            let sla = loss_sla(&model, &b, &set).unwrap().total_value();
            assert!((sla - oracle::sla(&model, &b, &set)).abs() < 1e-12);
        }
    }

    #[test]
    fn aggregate_matches_oracle_and_degenerates() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let set = TransformationSet::rotations();
        let model = SlaModel::new(&tiny_spec(3, 4, all_heads(), mlp()), &mut rng).unwrap();
        let batch = random_batch(&mut rng, 1, 3);
        let x = &batch[0].0;
        let s = aggregate_logits(&model, x, &set).unwrap().to_vec();
        let expected = oracle::aggregate(&model, x, &set);
        for (a, b) in s.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }

        // reordering keeps the (embedding, column) pairing
        let mut shuffled: Vec<Transformation> = set.to_vec();
        shuffled.reverse();
        shuffled.swap(0, 1);
        let s2 = aggregate_logits(&model, x, &shuffled).unwrap().to_vec();
        for (a, b) in s.iter().zip(&s2) {
            assert!((a - b).abs() < 1e-12);
        }

        // one transformation: exactly the identity conditional logits
        let one = set.truncated(1).unwrap();
        let s1 = aggregate_logits(&model, x, &one).unwrap().to_vec();
        let z = model.embed(x).unwrap();
        let cond = model.joint().unwrap().conditional_logits(&z, 0).unwrap().to_vec();
        assert_eq!(s1, cond);
    }

    #[test]
    fn reductions_to_da_and_mt() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let set = TransformationSet::rotations();
        let (n, m) = (3, 4);
        let model = SlaModel::new(&tiny_spec(n, m, all_heads(), mlp()), &mut rng).unwrap();
        let batch = random_batch(&mut rng, 4, n);
        let b = refs(&batch);
        let d = model.embed_dim();
        let u = model.primary().unwrap().to_vec();
        let v = model.selfsup().unwrap().to_vec();
        let joint = &model.joint().unwrap().weight;

        let mut w = vec![0.0; n * m * d];
        for i in 0..n {
            for j in 0..m {
                w[(i * m + j) * d..(i * m + j + 1) * d].copy_from_slice(&u[i * d..(i + 1) * d]);
            }
        }
        joint.set_values(&w).unwrap();
        let sla = loss_sla(&model, &b, &set).unwrap().total_value();
        let da = loss_da(&model, &b, &set).unwrap().total_value();
        // copied rows split each class's mass evenly over M joint labels
        assert!((sla - da - libm::log(m as f64)).abs() < 1e-9);

        for i in 0..n {
            for j in 0..m {
                for k in 0..d {
                    w[(i * m + j) * d + k] = u[i * d + k] + v[j * d + k];
                }
            }
        }
        joint.set_values(&w).unwrap();
        let sla = loss_sla(&model, &b, &set).unwrap().total_value();
        let mt = loss_mt(&model, &b, &set).unwrap().total_value();
        assert!((sla - mt).abs() < 1e-9);
    }

    #[test]
    fn self_distillation_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let set = TransformationSet::rotations();
        let heads = ObjectiveKind::SlaSd { beta: 1 }.heads();
        for _ in 0..3 {
            let model = SlaModel::new(&tiny_spec(3, 4, heads, mlp()), &mut rng).unwrap();
            let batch = random_batch(&mut rng, 3, 3);
            let b = refs(&batch);
            let sd = loss_sla_sd(&model, &b, &set, 1).unwrap();
            let sla = oracle::sla(&model, &b, &set);
            let (kl, ce) = oracle::distill(&model, &b, &set);
            assert!((sd.total_value() - (sla + kl + ce)).abs() < 1e-9);
            assert!((sd.classification - sla).abs() < 1e-12);
            assert!((sd.distill_kl.unwrap() - kl).abs() < 1e-12);
            assert!((sd.distill_ce.unwrap() - ce).abs() < 1e-12);
            assert!((sd.total_value() - sd.weighted_sum()).abs() < 1e-12);
        }
    }

    #[test]
    fn matched_student_has_zero_kl() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let set = TransformationSet::rotations();
        let heads = ObjectiveKind::SlaSd { beta: 0 }.heads();
        let model = SlaModel::new(&tiny_spec(3, 4, heads, BackboneKind::pass_through()), &mut rng).unwrap();
        let batch = random_batch(&mut rng, 1, 3);
        let x = &batch[0].0;
        // u_i = s_i · z / |z|² makes u_i·z = s_i exactly (up to rounding).
        let s = aggregate_logits(&model, x, &set).unwrap().to_vec();
        let z = x.pixels().to_vec();
        let zz: f64 = z.iter().map(|v| v * v).sum();
        let u: Vec<f64> = s.iter().flat_map(|si| z.iter().map(move |zk| si * zk / zz)).collect();
        model.primary().unwrap().set_values(&u).unwrap();
        let sd = loss_sla_sd(&model, &refs(&batch), &set, 0).unwrap();
        let sla = loss_sla(&model, &refs(&batch), &set).unwrap();
        assert!(sd.distill_kl.unwrap().abs() < 1e-12);
        assert!((sd.total_value() - sla.total_value()).abs() < 1e-9);
    }

    #[test]
    fn teacher_path_carries_no_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let set = TransformationSet::rotations();
        let heads = ObjectiveKind::SlaSd { beta: 1 }.heads();
        let model = SlaModel::new(&tiny_spec(3, 4, heads, BackboneKind::pass_through()), &mut rng).unwrap();
        let batch = random_batch(&mut rng, 2, 3);
        let b = refs(&batch);
        let w = &model.joint().unwrap().weight;

        loss_sla(&model, &b, &set).unwrap().total.backward().unwrap();
        let sla_grad = w.grad().unwrap();
        w.zero_grad();
        model.primary().unwrap().zero_grad();

        let sd = loss_sla_sd(&model, &b, &set, 1).unwrap();
        assert!(sd.distill_kl.unwrap() > 0.0);
        sd.total.backward().unwrap();
        // w reaches the distillation terms only through the detached teacher,
        // so its gradient is the joint loss gradient alone.
        assert_eq!(w.grad().unwrap(), sla_grad);
        assert!(model.primary().unwrap().grad().unwrap().iter().any(|g| *g != 0.0));
    }

    #[test]
    fn self_distillation_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let heads = ObjectiveKind::SlaSd { beta: 1 }.heads();
        let model = SlaModel::new(&tiny_spec(3, 4, heads, mlp()), &mut rng).unwrap();
        let batch = random_batch(&mut rng, 2, 3);
        let set = TransformationSet::rotations();
        assert!(loss_sla_sd(&model, &refs(&batch), &set, 2).is_err());
        let rotated_first: Vec<Transformation> = set.iter().rev().cloned().collect();
        assert!(loss_sla_sd(&model, &refs(&batch), &rotated_first, 1).is_err());
        // missing heads
        assert!(loss_mt(&model, &refs(&batch), &set).is_err());
    }

    #[test]
    fn label_and_index_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let model = SlaModel::new(&tiny_spec(3, 2, all_heads(), mlp()), &mut rng).unwrap();
        let batch = random_batch(&mut rng, 2, 3);
        let mut b = refs(&batch);
        b[1].1 = 3;
        assert_eq!(
            loss_sla(&model, &b, &TransformationSet::identity()).unwrap_err(),
            Error::Label {
                row: 1,
                label: 3,
                classes: 3
            }
        );
        let set = TransformationSet::rotations();
        assert!(matches!(
            loss_sla(&model, &refs(&batch), &set),
            Err(Error::Index { .. })
        ));
    }

    #[test]
    fn ensemble_means() {
        assert_eq!(mean_logits(&[vec![1.0, 3.0], vec![3.0, 1.0]]).unwrap(), vec![2.0, 2.0]);
        assert_eq!(crate::argmax(&[2.0, 2.0]), Some(0));
        assert!(mean_logits(&[]).is_err());
        assert!(mean_logits(&[vec![1.0], vec![1.0, 2.0]]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let model = SlaModel::new(&tiny_spec(3, 4, ObjectiveKind::Sla.heads(), mlp()), &mut rng).unwrap();
        let batch = random_batch(&mut rng, 1, 3);
        let x = &batch[0].0;
        let solo = model.joint().unwrap().conditional_logits(&model.embed(x).unwrap(), 0).unwrap().to_vec();
        assert_eq!(ensemble_logits(&[&model], x).unwrap(), solo);

        let other = SlaModel::new(&tiny_spec(2, 4, ObjectiveKind::Sla.heads(), mlp()), &mut rng).unwrap();
        assert!(ensemble_logits(&[&model, &other], x).is_err());
    }

    #[test]
    fn objective_heads_and_dispatch() {
        assert!(ObjectiveKind::SlaSd { beta: 2 }.validate().is_err());
        assert_eq!(ObjectiveKind::Mt.heads().selfsup, true);
        assert_eq!(ObjectiveKind::Sla.heads().primary, false);
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let model = SlaModel::new(&tiny_spec(3, 4, ObjectiveKind::Da.heads(), mlp()), &mut rng).unwrap();
        let batch = random_batch(&mut rng, 2, 3);
        let set = TransformationSet::rotations();
        let base = ObjectiveKind::Baseline.loss(&model, &refs(&batch), &set).unwrap();
        let id = loss_da(&model, &refs(&batch), &TransformationSet::identity()).unwrap();
        assert_eq!(base.total_value(), id.total_value());
    }
}
