//! Backbones and classifier heads.
//!
//! A backbone maps a flattened image (`d = H·W·C` values) to an embedding `z`
//! of size `D`. Three bias-free heads read that embedding:
//!
//! * the joint head `w`, an `(N·M)×D` matrix whose row `i·M + j` scores class
//!   `i` under transformation `j`;
//! * the primary head `u` (`N×D`), used for plain classification and as the
//!   self-distillation student;
//! * the self-supervised head `v` (`M×D`), which predicts the transformation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::transform::Image;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackboneKind {
    /// Linear map of the raw pixels. `None` passes the flattened pixels through
    /// unchanged (`D = d`); `Some(dim)` learns an affine projection to `dim`.
    Linear { projection: Option<usize> },
    /// Affine layers of the given widths, each followed by ReLU.
    Mlp { hidden: Vec<usize> },
}

impl BackboneKind {
    pub fn pass_through() -> Self {
        BackboneKind::Linear { projection: None }
    }

    fn widths(&self) -> &[usize] {
        match self {
            BackboneKind::Linear { projection: None } => &[],
            BackboneKind::Linear {
                projection: Some(dim),
            } => core::slice::from_ref(dim),
            BackboneKind::Mlp { hidden } => hidden,
        }
    }
}

/// Which heads a model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HeadSet {
    pub joint: bool,
    pub primary: bool,
    pub selfsup: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub backbone: BackboneKind,
    /// `[height, width, channels]` of the inputs.
    pub input_dims: [usize; 3],
    pub n_classes: usize,
    pub n_transforms: usize,
    pub heads: HeadSet,
}

impl ModelSpec {
    pub fn input_len(&self) -> usize {
        self.input_dims.iter().product()
    }

    pub fn embed_dim(&self) -> usize {
        self.backbone
            .widths()
            .last()
            .copied()
            .unwrap_or_else(|| self.input_len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dims.contains(&0) {
            return Err(Error::Contract(format!(
                "input dimensions must be positive, got {:?}",
                self.input_dims
            )));
        }
        if self.n_classes == 0 || self.n_transforms == 0 {
            return Err(Error::Contract(
                "class and transformation counts must be positive".into(),
            ));
        }
        if self.backbone.widths().contains(&0) {
            return Err(Error::Contract("layer widths must be positive".into()));
        }
        if !(self.heads.joint || self.heads.primary) {
            return Err(Error::Contract(
                "a model needs a joint or a primary head".into(),
            ));
        }
        Ok(())
    }
}

/// Affine layer `x·W + b` with `W` stored `[in×out]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.weight)?.add_row(&self.bias)
    }
}

/// `values` drawn uniformly from `[-1/√fan_in, 1/√fan_in)`.
fn uniform_init<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], fan_in: usize) -> Result<Tensor> {
    let bound = 1.0 / libm::sqrt(fan_in as f64);
    let n = shape.iter().product();
    let values = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::parameter(shape, values)
}

fn zeros_param(shape: &[usize]) -> Result<Tensor> {
    Tensor::parameter(shape, vec![0.0; shape.iter().product()])
}

#[derive(Debug, Clone)]
pub struct Backbone {
    kind: BackboneKind,
    input_len: usize,
    layers: Vec<Dense>,
    relu: bool,
}

impl Backbone {
    fn build(
        kind: &BackboneKind,
        input_len: usize,
        mut make: impl FnMut(&[usize], usize) -> Result<Tensor>,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut fan_in = input_len;
        for &width in kind.widths() {
            let weight = make(&[fan_in, width], fan_in)?;
            let bias = make(&[width], fan_in)?;
            layers.push(Dense { weight, bias });
            fan_in = width;
        }
        Ok(Self {
            kind: kind.clone(),
            input_len,
            layers,
            relu: matches!(kind, BackboneKind::Mlp { .. }),
        })
    }

    pub fn new<R: Rng + ?Sized>(kind: &BackboneKind, input_len: usize, rng: &mut R) -> Result<Self> {
        Self::build(kind, input_len, |shape, fan_in| uniform_init(rng, shape, fan_in))
    }

    pub fn zeroed(kind: &BackboneKind, input_len: usize) -> Result<Self> {
        Self::build(kind, input_len, |shape, _| zeros_param(shape))
    }

    pub fn kind(&self) -> &BackboneKind {
        &self.kind
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn embed_dim(&self) -> usize {
        self.layers
            .last()
            .map_or(self.input_len, |l| l.weight.shape()[1])
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// `[B×d]` inputs to `[B×D]` embeddings.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape().len() != 2 || x.shape()[1] != self.input_len {
            return Err(Error::Shape {
                op: "embed",
                lhs: x.shape().to_vec(),
                rhs: vec![self.input_len],
            });
        }
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h)?;
            if self.relu {
                h = h.relu();
            }
        }
        Ok(h)
    }

    pub fn embed(&self, x: &Image) -> Result<Tensor> {
        let flat = Tensor::new(&[1, x.pixels().len()], x.pixels().to_vec())?;
        let z = self.forward(&flat)?;
        let d = self.embed_dim();
        z.reshape(&[d])
    }

    fn parameters(&self) -> impl Iterator<Item = (String, &Tensor)> {
        self.layers.iter().enumerate().flat_map(|(i, l)| {
            [
                (format!("backbone.{i}.weight"), &l.weight),
                (format!("backbone.{i}.bias"), &l.bias),
            ]
        })
    }
}

/// Joint classifier over `N·M` labels.
#[derive(Debug, Clone)]
pub struct JointHead {
    /// `[N·M × D]`; row `i·M + j` is the classifier for `(i, j)`.
    pub weight: Tensor,
    pub n_classes: usize,
    pub n_transforms: usize,
}

impl JointHead {
    /// `[B×D]` embeddings to `[B × N·M]` joint logits.
    pub fn logits(&self, z: &Tensor) -> Result<Tensor> {
        z.matmul(&self.weight.transpose()?)
    }

    /// Joint logits of one embedding, shaped `[N×M]`.
    pub fn joint_logits(&self, z: &Tensor) -> Result<Tensor> {
        let row = z.reshape(&[1, z.len()])?;
        self.logits(&row)?.reshape(&[self.n_classes, self.n_transforms])
    }

    /// Column indices `i·M + j` for every class `i`.
    pub fn column(&self, j: usize) -> Result<Vec<usize>> {
        if j >= self.n_transforms {
            return Err(Error::Index {
                what: "transformation",
                index: j,
                len: self.n_transforms,
            });
        }
        Ok((0..self.n_classes).map(|i| i * self.n_transforms + j).collect())
    }

    /// Conditional logits `w_ij·z` over classes for transformation `j`.
    pub fn conditional_logits(&self, z: &Tensor, j: usize) -> Result<Tensor> {
        let cols = self.column(j)?;
        let row = z.reshape(&[1, z.len()])?;
        self.logits(&row)?.gather_cols(&cols)?.reshape(&[self.n_classes])
    }
}

/// Backbone plus heads, with a counter of embedded images.
#[derive(Debug)]
pub struct SlaModel {
    spec: ModelSpec,
    backbone: Backbone,
    joint: Option<JointHead>,
    primary: Option<Tensor>,
    selfsup: Option<Tensor>,
    forwards: Cell<u64>,
}

impl SlaModel {
    fn assemble(
        spec: &ModelSpec,
        backbone: Backbone,
        mut make: impl FnMut(&[usize], usize) -> Result<Tensor>,
    ) -> Result<Self> {
        let d = backbone.embed_dim();
        let (n, m) = (spec.n_classes, spec.n_transforms);
        let joint = if spec.heads.joint {
            Some(JointHead {
                weight: make(&[n * m, d], d)?,
                n_classes: n,
                n_transforms: m,
            })
        } else {
            None
        };
        let primary = if spec.heads.primary {
            Some(make(&[n, d], d)?)
        } else {
            None
        };
        let selfsup = if spec.heads.selfsup {
            Some(make(&[m, d], d)?)
        } else {
            None
        };
        Ok(Self {
            spec: spec.clone(),
            backbone,
            joint,
            primary,
            selfsup,
            forwards: Cell::new(0),
        })
    }

    /// Randomly initialised model. Backbone layers draw first, then `w`, `u`, `v`.
    pub fn new<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let backbone = Backbone::new(&spec.backbone, spec.input_len(), rng)?;
        Self::assemble(spec, backbone, |shape, fan_in| uniform_init(rng, shape, fan_in))
    }

    /// All parameters zero.
    pub fn zeroed(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let backbone = Backbone::zeroed(&spec.backbone, spec.input_len())?;
        Self::assemble(spec, backbone, |shape, _| zeros_param(shape))
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    pub fn n_transforms(&self) -> usize {
        self.spec.n_transforms
    }

    pub fn embed_dim(&self) -> usize {
        self.backbone.embed_dim()
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    pub fn joint(&self) -> Option<&JointHead> {
        self.joint.as_ref()
    }

    pub fn primary(&self) -> Option<&Tensor> {
        self.primary.as_ref()
    }

    pub fn selfsup(&self) -> Option<&Tensor> {
        self.selfsup.as_ref()
    }

    pub fn require_joint(&self) -> Result<&JointHead> {
        self.joint
            .as_ref()
            .ok_or_else(|| Error::Contract("model has no joint head".into()))
    }

    pub fn require_primary(&self) -> Result<&Tensor> {
        self.primary
            .as_ref()
            .ok_or_else(|| Error::Contract("model has no primary head".into()))
    }

    pub fn require_selfsup(&self) -> Result<&Tensor> {
        self.selfsup
            .as_ref()
            .ok_or_else(|| Error::Contract("model has no self-supervised head".into()))
    }

    /// Named parameters in a fixed order: backbone layers, then `w`, `u`, `v`.
    pub fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self
            .backbone
            .parameters()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        if let Some(j) = &self.joint {
            out.push(("joint.weight".into(), j.weight.clone()));
        }
        if let Some(u) = &self.primary {
            out.push(("primary.weight".into(), u.clone()));
        }
        if let Some(v) = &self.selfsup {
            out.push(("selfsup.weight".into(), v.clone()));
        }
        out
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(Tensor::len).sum()
    }

    /// Number of images pushed through the backbone so far.
    pub fn forward_count(&self) -> u64 {
        self.forwards.get()
    }

    pub fn reset_forward_count(&self) {
        self.forwards.set(0);
    }

    /// Stacks images into a `[B×d]` constant, checking their dimensions.
    pub fn stack_images<'a>(&self, images: impl IntoIterator<Item = &'a Image>) -> Result<Tensor> {
        let mut rows = 0;
        let mut data = Vec::new();
        for x in images {
            if x.dims() != self.spec.input_dims {
                return Err(Error::Shape {
                    op: "embed",
                    lhs: x.dims().to_vec(),
                    rhs: self.spec.input_dims.to_vec(),
                });
            }
            data.extend_from_slice(x.pixels());
            rows += 1;
        }
        Tensor::new(&[rows, self.spec.input_len()], data)
    }

    /// Embeddings `[B×D]` of a stacked batch `[B×d]`.
    pub fn embed_rows(&self, x: &Tensor) -> Result<Tensor> {
        let z = self.backbone.forward(x)?;
        self.forwards.set(self.forwards.get() + x.shape()[0] as u64);
        Ok(z)
    }

    pub fn embed_batch<'a>(&self, images: impl IntoIterator<Item = &'a Image>) -> Result<Tensor> {
        let x = self.stack_images(images)?;
        self.embed_rows(&x)
    }

    /// Embedding `[D]` of one image.
    pub fn embed(&self, x: &Image) -> Result<Tensor> {
        let z = self.embed_batch(core::iter::once(x))?;
        z.reshape(&[self.embed_dim()])
    }

    /// `z·uᵀ` for `[B×D]` embeddings.
    pub fn primary_logits(&self, z: &Tensor) -> Result<Tensor> {
        z.matmul(&self.require_primary()?.transpose()?)
    }

    /// `z·vᵀ` for `[B×D]` embeddings.
    pub fn selfsup_logits(&self, z: &Tensor) -> Result<Tensor> {
        z.matmul(&self.require_selfsup()?.transpose()?)
    }

    /// Single-inference logits `[B×N]` from one forward per image: the
    /// identity column of the joint head when present, otherwise `u`.
    pub fn single_logits(&self, z: &Tensor) -> Result<Tensor> {
        match &self.joint {
            Some(joint) => joint.logits(z)?.gather_cols(&joint.column(0)?),
            None => self.primary_logits(z),
        }
    }
}
