//! Input transformations: quarter-turn rotations, channel permutations, and
//! their products, plus batch expansion into joint labels.
//!
//! Images are stored height-major, then width, then channel (`HWC`). A
//! rotation by `k` quarter turns is counter-clockwise. A channel permutation
//! `perm` fills output channel `c` from input channel `perm[c]`. A composed
//! transform rotates first and permutes channels second.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl Image {
    /// Pixels are expected in `[0, 1]` for loaded data; only the buffer length
    /// and finiteness are checked here.
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 || pixels.len() != height * width * channels {
            return Err(Error::Shape {
                op: "image",
                lhs: vec![height, width, channels],
                rhs: vec![pixels.len()],
            });
        }
        if let Some(index) = pixels.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite { op: "image", index });
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `[height, width, channels]`
    pub fn dims(&self) -> [usize; 3] {
        [self.height, self.width, self.channels]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.pixels[(row * self.width + col) * self.channels + channel]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransformKind {
    /// Counter-clockwise rotation by `k` quarter turns, `k < 4`.
    Rotation(u8),
    /// Output channel `c` reads input channel `perm[c]`.
    ChannelPerm(Vec<usize>),
    /// Rotation followed by a channel permutation.
    Composed { quarter_turns: u8, perm: Vec<usize> },
}

/// Channel names used for three-channel permutations.
const CHANNEL_NAMES: [char; 3] = ['R', 'G', 'B'];

/// Parses a permutation written as channel letters, e.g. `"GBR"` → `[1, 2, 0]`.
pub fn perm_from_name(name: &str) -> Result<Vec<usize>> {
    let perm: Vec<usize> = name
        .chars()
        .map(|ch| {
            CHANNEL_NAMES
                .iter()
                .position(|&c| c == ch.to_ascii_uppercase())
                .ok_or_else(|| Error::Contract(format!("unknown channel letter {ch:?} in {name:?}")))
        })
        .collect::<Result<_>>()?;
    if perm.len() != CHANNEL_NAMES.len() || !is_permutation(&perm) {
        return Err(Error::Contract(format!("{name:?} is not a permutation of RGB")));
    }
    Ok(perm)
}

fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}

fn is_identity_perm(perm: &[usize]) -> bool {
    perm.iter().enumerate().all(|(i, &p)| i == p)
}

impl TransformKind {
    pub fn identity() -> Self {
        TransformKind::Rotation(0)
    }

    pub fn rotation(quarter_turns: usize) -> Self {
        TransformKind::Rotation((quarter_turns % 4) as u8)
    }

    pub fn channel_perm(perm: Vec<usize>) -> Result<Self> {
        if perm.is_empty() || !is_permutation(&perm) {
            return Err(Error::Contract(format!("{perm:?} is not a permutation")));
        }
        Ok(TransformKind::ChannelPerm(perm))
    }

    /// Builds the simplest kind for a rotation and optional permutation:
    /// identity permutations are dropped, and so is a zero rotation when a
    /// non-trivial permutation is present.
    pub fn compose_parts(quarter_turns: usize, perm: Option<Vec<usize>>) -> Self {
        let k = (quarter_turns % 4) as u8;
        match perm {
            Some(p) if !is_identity_perm(&p) => {
                if k == 0 {
                    TransformKind::ChannelPerm(p)
                } else {
                    TransformKind::Composed {
                        quarter_turns: k,
                        perm: p,
                    }
                }
            }
            _ => TransformKind::Rotation(k),
        }
    }

    /// Quarter turns and the permutation, with identity permutations as `None`.
    pub fn parts(&self) -> (u8, Option<&[usize]>) {
        let (k, perm) = match self {
            TransformKind::Rotation(k) => (*k % 4, None),
            TransformKind::ChannelPerm(p) => (0, Some(p.as_slice())),
            TransformKind::Composed {
                quarter_turns,
                perm,
            } => (*quarter_turns % 4, Some(perm.as_slice())),
        };
        (k, perm.filter(|p| !is_identity_perm(p)))
    }

    /// True when both describe the same pixel map.
    pub fn same_map(&self, other: &TransformKind) -> bool {
        self.parts() == other.parts()
    }

    pub fn is_identity(&self) -> bool {
        self.parts() == (0, None)
    }

    /// `self` followed by `next`.
    ///
    /// Rotations act on positions and permutations on channels, so the two
    /// parts compose independently.
    pub fn then(&self, next: &TransformKind) -> Result<TransformKind> {
        let (k1, p1) = self.parts();
        let (k2, p2) = next.parts();
        let perm = match (p1, p2) {
            (None, None) => None,
            (Some(p), None) | (None, Some(p)) => Some(p.to_vec()),
            (Some(a), Some(b)) => {
                if a.len() != b.len() {
                    return Err(Error::Shape {
                        op: "compose",
                        lhs: vec![a.len()],
                        rhs: vec![b.len()],
                    });
                }
                // out[c] = mid[b[c]] = in[a[b[c]]]
                Some(b.iter().map(|&c| a[c]).collect())
            }
        };
        Ok(Self::compose_parts(k1 as usize + k2 as usize, perm))
    }

    pub fn inverse(&self) -> TransformKind {
        let (k, perm) = self.parts();
        let inv = perm.map(|p| {
            let mut inv = vec![0; p.len()];
            for (c, &src) in p.iter().enumerate() {
                inv[src] = c;
            }
            inv
        });
        Self::compose_parts((4 - k as usize) % 4, inv)
    }

    /// Short label such as `identity`, `rot90`, `GBR`, or `rot180+BRG`.
    pub fn name(&self) -> String {
        let (k, perm) = self.parts();
        let perm_name = |p: &[usize]| -> String {
            if p.len() == CHANNEL_NAMES.len() {
                p.iter().map(|&c| CHANNEL_NAMES[c]).collect()
            } else {
                format!("{p:?}")
            }
        };
        match (k, perm) {
            (0, None) => "identity".into(),
            (k, None) => format!("rot{}", 90 * k as usize),
            (0, Some(p)) => perm_name(p),
            (k, Some(p)) => format!("rot{}+{}", 90 * k as usize, perm_name(p)),
        }
    }

    pub fn apply(&self, x: &Image) -> Result<Image> {
        let (k, perm) = match self {
            TransformKind::Rotation(k) => (*k % 4, None),
            TransformKind::ChannelPerm(p) => (0, Some(p.as_slice())),
            TransformKind::Composed {
                quarter_turns,
                perm,
            } => (*quarter_turns % 4, Some(perm.as_slice())),
        };
        if k != 0 && x.height != x.width {
            return Err(Error::Shape {
                op: "rotate",
                lhs: vec![x.height, x.width],
                rhs: vec![x.width, x.height],
            });
        }
        if let Some(p) = perm {
            if p.len() != x.channels {
                return Err(Error::Shape {
                    op: "channel_perm",
                    lhs: vec![x.channels],
                    rhs: vec![p.len()],
                });
            }
        }
        let rotated = rotate(x, k);
        Ok(match perm {
            Some(p) if !is_identity_perm(p) => permute_channels(&rotated, p),
            _ => rotated,
        })
    }
}

fn rotate(x: &Image, k: u8) -> Image {
    if k == 0 {
        return x.clone();
    }
    let n = x.height;
    let c = x.channels;
    let mut out = vec![0.0; x.pixels.len()];
    for r in 0..n {
        for col in 0..n {
            let (sr, sc) = match k {
                1 => (col, n - 1 - r),
                2 => (n - 1 - r, n - 1 - col),
                _ => (n - 1 - col, r),
            };
            let dst = (r * n + col) * c;
            let src = (sr * n + sc) * c;
            out[dst..dst + c].copy_from_slice(&x.pixels[src..src + c]);
        }
    }
    Image {
        pixels: out,
        ..*x
    }
}

fn permute_channels(x: &Image, perm: &[usize]) -> Image {
    let c = x.channels;
    let mut out = vec![0.0; x.pixels.len()];
    for (dst, src) in out.chunks_mut(c).zip(x.pixels.chunks(c)) {
        for (ch, &from) in perm.iter().enumerate() {
            dst[ch] = src[from];
        }
    }
    Image {
        pixels: out,
        ..*x
    }
}

/// A transformation together with its column `index` in the joint head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transformation {
    pub kind: TransformKind,
    pub index: usize,
}

impl Transformation {
    pub fn apply(&self, x: &Image) -> Result<Image> {
        self.kind.apply(x)
    }
}

/// An ordered list of distinct transformations, identity first, where element
/// `j` carries index `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformationSet {
    transforms: Vec<Transformation>,
}

impl Deref for TransformationSet {
    type Target = [Transformation];

    fn deref(&self) -> &[Transformation] {
        &self.transforms
    }
}

impl TransformationSet {
    /// Fails unless the first kind is the identity and all kinds are distinct maps.
    pub fn from_kinds(kinds: Vec<TransformKind>) -> Result<Self> {
        match kinds.first() {
            Some(k) if k.is_identity() => {}
            _ => {
                return Err(Error::Contract(
                    "a transformation set must start with the identity".into(),
                ))
            }
        }
        for (i, a) in kinds.iter().enumerate() {
            if let Some(b) = kinds[..i].iter().find(|b| b.same_map(a)) {
                return Err(Error::Contract(format!(
                    "duplicate transformation {} in set",
                    b.name()
                )));
            }
        }
        Ok(Self {
            transforms: kinds
                .into_iter()
                .enumerate()
                .map(|(index, kind)| Transformation { kind, index })
                .collect(),
        })
    }

    /// `{identity}`, i.e. `M = 1`.
    pub fn identity() -> Self {
        Self::from_kinds(vec![TransformKind::identity()]).expect("identity set is valid")
    }

    /// `[0°, 90°, 180°, 270°]`.
    pub fn rotations() -> Self {
        Self::rotation_subset(&[0, 1, 2, 3]).expect("full rotation set is valid")
    }

    /// Rotations by the listed quarter-turn counts, in the listed order.
    pub fn rotation_subset(quarter_turns: &[usize]) -> Result<Self> {
        Self::from_kinds(quarter_turns.iter().map(|&k| TransformKind::rotation(k)).collect())
    }

    /// All six permutations of three channels:
    /// `[RGB, RBG, GRB, GBR, BRG, BGR]`.
    pub fn color_perms() -> Self {
        Self::color_perm_subset(&["RGB", "RBG", "GRB", "GBR", "BRG", "BGR"])
            .expect("full permutation set is valid")
    }

    /// Channel permutations given by name, e.g. `["RGB", "GBR", "BRG"]`.
    pub fn color_perm_subset(names: &[&str]) -> Result<Self> {
        let kinds = names
            .iter()
            .map(|n| perm_from_name(n).map(TransformKind::ChannelPerm))
            .collect::<Result<Vec<_>>>()?;
        Self::from_kinds(kinds)
    }

    /// `{t_c ∘ t_r}` over both sets, rotation-major.
    pub fn product(rotations: &TransformationSet, perms: &TransformationSet) -> Result<Self> {
        let mut kinds = Vec::with_capacity(rotations.len() * perms.len());
        for r in rotations.iter() {
            for c in perms.iter() {
                kinds.push(r.kind.then(&c.kind)?);
            }
        }
        Self::from_kinds(kinds)
    }

    /// The first `m` transformations, indices unchanged.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.transforms.len() {
            return Err(Error::Index {
                what: "truncation length",
                index: m,
                len: self.transforms.len() + 1,
            });
        }
        Ok(Self {
            transforms: self.transforms[..m].to_vec(),
        })
    }

    pub fn names(&self) -> Vec<String> {
        self.transforms.iter().map(|t| t.kind.name()).collect()
    }
}

/// Joint label of class `y` under transform `j` out of `m`.
pub fn joint_label(y: usize, j: usize, m: usize) -> usize {
    y * m + j
}

/// Inverse of [`joint_label`]: `(class, transform)`.
pub fn split_joint_label(joint: usize, m: usize) -> (usize, usize) {
    (joint / m, joint % m)
}

/// Every input under every transform, input-major, with joint labels
/// `y·M + j` where `M = transforms.len()`.
pub fn expand_batch(
    batch: &[(Image, usize)],
    transforms: &[Transformation],
    n_classes: usize,
) -> Result<Vec<(Image, usize)>> {
    let m = transforms.len();
    if let Some(t) = transforms.iter().find(|t| t.index >= m) {
        return Err(Error::Index {
            what: "transformation",
            index: t.index,
            len: m,
        });
    }
    if let Some((row, (_, y))) = batch.iter().enumerate().find(|(_, (_, y))| *y >= n_classes) {
        return Err(Error::Label {
            row,
            label: *y,
            classes: n_classes,
        });
    }
    let mut out = Vec::with_capacity(batch.len() * m);
    for (x, y) in batch {
        for t in transforms {
            out.push((t.apply(x)?, joint_label(*y, t.index, m)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(n: usize, v: &[f64]) -> Image {
        Image::new(n, n, 1, v.to_vec()).unwrap()
    }

    fn ramp(h: usize, w: usize, c: usize) -> Image {
        Image::new(h, w, c, (0..h * w * c).map(|i| i as f64).collect()).unwrap()
    }

    /// Quarter turn computed straight from coordinates: the pixel at (r, c)
    /// moves to (n-1-c, r) under a counter-clockwise turn.
    fn ccw_oracle(x: &Image) -> Image {
        let n = x.height();
        let ch = x.channels();
        let mut out = vec![0.0; x.pixels().len()];
        for r in 0..n {
            for c in 0..n {
                let (nr, nc) = (n - 1 - c, r);
                for k in 0..ch {
                    out[(nr * n + nc) * ch + k] = x.get(r, c, k);
                }
            }
        }
        Image::new(n, n, ch, out).unwrap()
    }

    #[test]
    fn quarter_turn_on_two_by_two() {
        let (a, b, c, d) = (1.0, 2.0, 3.0, 4.0);
        let out = TransformKind::rotation(1).apply(&gray(2, &[a, b, c, d])).unwrap();
        assert_eq!(out.pixels(), &[b, d, a, c]);
    }

    #[test]
    fn rotations_match_coordinate_oracle() {
        let x = ramp(5, 5, 2);
        let mut expected = x.clone();
        for k in 0..4 {
            assert_eq!(TransformKind::rotation(k).apply(&x).unwrap(), expected);
            expected = ccw_oracle(&expected);
        }
        assert_eq!(expected, x);
    }

    #[test]
    fn identity_leaves_image() {
        let x = ramp(3, 3, 3);
        assert_eq!(TransformKind::identity().apply(&x).unwrap(), x);
        let set = TransformationSet::color_perms();
        assert_eq!(set[0].apply(&x).unwrap(), x);
    }

    #[test]
    fn swap_red_green() {
        let px = Image::new(1, 1, 3, vec![0.1, 0.2, 0.3]).unwrap();
        let out = TransformKind::channel_perm(vec![1, 0, 2]).unwrap().apply(&px).unwrap();
        assert_eq!(out.pixels(), &[0.2, 0.1, 0.3]);
    }

    #[test]
    fn shape_errors() {
        let wide = ramp(2, 3, 1);
        assert!(matches!(
            TransformKind::rotation(1).apply(&wide),
            Err(Error::Shape { op: "rotate", .. })
        ));
        assert!(TransformKind::rotation(0).apply(&wide).is_ok());
        let gray = ramp(2, 2, 1);
        let perm = TransformKind::channel_perm(vec![1, 2, 0]).unwrap();
        assert!(matches!(
            perm.apply(&gray),
            Err(Error::Shape {
                op: "channel_perm",
                ..
            })
        ));
        let composed = TransformKind::compose_parts(1, Some(vec![1, 2, 0]));
        assert!(composed.apply(&gray).is_err());
        assert!(Image::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Image::new(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn composed_rotates_then_permutes() {
        let x = ramp(3, 3, 3);
        let rot = TransformKind::rotation(3);
        let perm = TransformKind::channel_perm(perm_from_name("BRG").unwrap()).unwrap();
        let composed = rot.then(&perm).unwrap();
        assert!(matches!(composed, TransformKind::Composed { .. }));
        let expected = perm.apply(&rot.apply(&x).unwrap()).unwrap();
        assert_eq!(composed.apply(&x).unwrap(), expected);
    }

    #[test]
    fn rotation_set_layout() {
        let set = TransformationSet::rotations();
        assert_eq!(set.len(), 4);
        assert!(set[0].kind.is_identity());
        assert_eq!(set.names(), ["identity", "rot90", "rot180", "rot270"]);
        let twice = set[1].kind.then(&set[1].kind).unwrap();
        assert!(twice.same_map(&set[2].kind));
        for (j, t) in set.iter().enumerate() {
            assert_eq!(t.index, j);
        }
    }

    #[test]
    fn rotation_composition_table() {
        let x = ramp(4, 4, 1);
        for a in 0..4 {
            for b in 0..4 {
                let ra = TransformKind::rotation(a);
                let rb = TransformKind::rotation(b);
                let seq = rb.apply(&ra.apply(&x).unwrap()).unwrap();
                let direct = TransformKind::rotation((a + b) % 4).apply(&x).unwrap();
                assert_eq!(seq, direct);
                assert_eq!(ra.then(&rb).unwrap(), TransformKind::rotation(a + b));
            }
        }
    }

    #[test]
    fn color_perm_set_is_s3() {
        let set = TransformationSet::color_perms();
        assert_eq!(set.len(), 6);
        assert_eq!(set.names(), ["identity", "RBG", "GRB", "GBR", "BRG", "BGR"]);
        let x = ramp(2, 2, 3);
        for a in set.iter() {
            let mut has_inverse = false;
            for b in set.iter() {
                let ab = a.kind.then(&b.kind).unwrap();
                let closed = set.iter().filter(|c| c.kind.same_map(&ab)).count();
                assert_eq!(closed, 1, "{} then {}", a.kind.name(), b.kind.name());
                let pixels = b.apply(&a.apply(&x).unwrap()).unwrap();
                assert_eq!(ab.apply(&x).unwrap(), pixels);
                has_inverse |= ab.is_identity();
            }
            assert!(has_inverse);
            assert!(a.kind.then(&a.kind.inverse()).unwrap().is_identity());
        }
    }

    #[test]
    fn product_sizes() {
        let rot = TransformationSet::rotations();
        let three = TransformationSet::color_perm_subset(&["RGB", "GBR", "BRG"]).unwrap();
        let p12 = TransformationSet::product(&rot, &three).unwrap();
        assert_eq!(p12.len(), 12);
        assert!(p12[0].kind.is_identity());
        // rotation-major
        assert_eq!(p12[1].kind.name(), "GBR");
        assert_eq!(p12[3].kind.name(), "rot90");
        let p24 = TransformationSet::product(&rot, &TransformationSet::color_perms()).unwrap();
        assert_eq!(p24.len(), 24);

        let rgb_only = TransformationSet::color_perm_subset(&["RGB"]).unwrap();
        assert_eq!(TransformationSet::product(&rot, &rgb_only).unwrap(), rot);
    }

    #[test]
    fn set_validation() {
        assert!(TransformationSet::rotation_subset(&[1, 0]).is_err());
        assert!(TransformationSet::rotation_subset(&[0, 2, 2]).is_err());
        assert!(TransformationSet::rotation_subset(&[0, 4]).is_err());
        assert!(TransformationSet::color_perm_subset(&["RGB", "RGX"]).is_err());
        assert!(TransformationSet::color_perm_subset(&["RGB", "RRG"]).is_err());
        let half = TransformationSet::rotation_subset(&[0, 2]).unwrap();
        assert_eq!(half.len(), 2);
        let t = TransformationSet::rotations().truncated(1).unwrap();
        assert_eq!(t, TransformationSet::identity());
        assert!(TransformationSet::rotations().truncated(0).is_err());
    }

    #[test]
    fn expand_batch_layout() {
        assert_eq!(joint_label(3, 2, 4), 14);
        assert_eq!(split_joint_label(14, 4), (3, 2));
        let set = TransformationSet::rotations();
        let x0 = ramp(3, 3, 1);
        let x1 = gray(3, &[9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        let out = expand_batch(&[(x0.clone(), 1), (x1.clone(), 9)], &set, 10).unwrap();
        assert_eq!(out.len(), 8);
        assert_eq!(out[0].0, x0);
        assert_eq!(out[4].0, x1);
        let labels: Vec<usize> = out.iter().map(|(_, l)| *l).collect();
        assert_eq!(labels, [4, 5, 6, 7, 36, 37, 38, 39]);
        assert_eq!(out[6].0, set[2].apply(&x1).unwrap());

        let err = expand_batch(&[(x0, 10)], &set, 10).unwrap_err();
        assert_eq!(
            err,
            Error::Label {
                row: 0,
                label: 10,
                classes: 10
            }
        );
    }

    proptest! {
        #[test]
        fn rotations_compose_mod_four(n in 1usize..6, c in 1usize..4, a in 0usize..4, b in 0usize..4, seed in any::<u64>()) {
            let mut s = seed;
            let px: Vec<f64> = (0..n * n * c).map(|_| { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); (s >> 11) as f64 / (1u64 << 53) as f64 }).collect();
            let x = Image::new(n, n, c, px).unwrap();
            let seq = TransformKind::rotation(b).apply(&TransformKind::rotation(a).apply(&x).unwrap()).unwrap();
            prop_assert_eq!(seq, TransformKind::rotation(a + b).apply(&x).unwrap());
        }

        #[test]
        fn transforms_permute_pixels(n in 1usize..5, j in 0usize..24, seed in any::<u64>()) {
            let mut s = seed;
            let px: Vec<f64> = (0..n * n * 3).map(|_| { s = s.wrapping_mul(6364136223846793005).wrapping_add(1); ((s >> 40) % 7) as f64 }).collect();
            let x = Image::new(n, n, 3, px).unwrap();
            let set = TransformationSet::product(&TransformationSet::rotations(), &TransformationSet::color_perms()).unwrap();
            let y = set[j].apply(&x).unwrap();
            let mut a = x.pixels().to_vec();
            let mut b = y.pixels().to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn joint_labels_round_trip(y in 0usize..100, m in 1usize..25, j_raw in 0usize..25) {
            let j = j_raw % m;
            prop_assert_eq!(split_joint_label(joint_label(y, j, m), m), (y, j));
        }
    }
}
