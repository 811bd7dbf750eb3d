//! Binary model snapshots.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    b"SLACKPT\0"
//! version  u32
//! dims     3 × u32   height, width, channels
//! classes  u32
//! xforms   u32
//! backbone u8 kind (0 linear, 1 mlp), u32 width count, widths as u32
//! heads    u8 bit set (1 joint, 2 primary, 4 selfsup)
//! tensors  u32 count, then per tensor: u32 name length, name bytes,
//!          u64 value count, values as f64
//! ```
//!
//! Tensors appear in [`SlaModel::named_parameters`] order; decoding checks
//! every name and length against a freshly built model of the stored spec.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::{BackboneKind, HeadSet, ModelSpec, SlaModel};

pub const MAGIC: &[u8; 8] = b"SLACKPT\0";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode(model: &SlaModel) -> Result<Vec<u8>> {
    let spec = model.spec();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in spec.input_dims {
        put_u32(&mut out, d)?;
    }
    put_u32(&mut out, spec.n_classes)?;
    put_u32(&mut out, spec.n_transforms)?;
    let (kind, widths): (u8, Vec<usize>) = match &spec.backbone {
        BackboneKind::Linear { projection } => (0, projection.iter().copied().collect()),
        BackboneKind::Mlp { hidden } => (1, hidden.clone()),
    };
    out.push(kind);
    put_u32(&mut out, widths.len())?;
    for w in widths {
        put_u32(&mut out, w)?;
    }
    let h = spec.heads;
    out.push(u8::from(h.joint) | u8::from(h.primary) << 1 | u8::from(h.selfsup) << 2);
    let params = model.named_parameters();
    put_u32(&mut out, params.len())?;
    for (name, t) in params {
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
        for v in t.values().iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated while reading {what} at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let mut a = [0u8; 8];
        a.copy_from_slice(self.take(8, what)?);
        Ok(u64::from_le_bytes(a))
    }
}

pub fn decode(bytes: &[u8]) -> Result<SlaModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let input_dims = [r.u32("height")?, r.u32("width")?, r.u32("channels")?];
    let n_classes = r.u32("class count")?;
    let n_transforms = r.u32("transformation count")?;
    let kind = r.u8("backbone kind")?;
    let n_widths = r.u32("width count")?;
    if n_widths > 64 {
        return Err(Error::Format(format!("implausible layer count {n_widths}")));
    }
    let widths = (0..n_widths).map(|_| r.u32("width")).collect::<Result<Vec<_>>>()?;
    let backbone = match (kind, widths.as_slice()) {
        (0, []) => BackboneKind::Linear { projection: None },
        (0, [d]) => BackboneKind::Linear { projection: Some(*d) },
        (1, _) => BackboneKind::Mlp { hidden: widths },
        _ => return Err(Error::Format(format!("bad backbone kind {kind} with {n_widths} widths"))),
    };
    let flags = r.u8("head flags")?;
    if flags > 7 {
        return Err(Error::Format(format!("bad head flags {flags:#x}")));
    }
    let heads = HeadSet {
        joint: flags & 1 != 0,
        primary: flags & 2 != 0,
        selfsup: flags & 4 != 0,
    };
    let spec = ModelSpec {
        backbone,
        input_dims,
        n_classes,
        n_transforms,
        heads,
    };
    spec.validate().map_err(|e| Error::Format(format!("{e}")))?;
    let model = SlaModel::zeroed(&spec)?;
    let expected = model.named_parameters();
    let count = r.u32("tensor count")?;
    if count != expected.len() {
        return Err(Error::Format(format!(
            "expected {} tensors, found {count}",
            expected.len()
        )));
    }
    for (name, t) in expected {
        let len = r.u32("name length")?;
        let got = String::from_utf8(r.take(len, "name")?.to_vec())
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        if got != name {
            return Err(Error::Format(format!("expected tensor {name}, found {got}")));
        }
        let n = r.u64("value count")?;
        if n != t.len() as u64 {
            return Err(Error::Format(format!("{name} holds {n} values, expected {}", t.len())));
        }
        let raw = r.take(t.len() * 8, "values")?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect();
        t.set_values(&values)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(model)
}
