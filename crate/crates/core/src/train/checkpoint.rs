//! Binary checkpoint format.
//!
//! Layout: magic bytes `DASM`, format version as 4-byte little-endian
//! unsigned, then repeated records — name length (4-byte LE), UTF-8 name,
//! rank (4-byte LE), dims (4-byte LE each), raw 32-bit LE float payload —
//! and a trailing 4-byte record count for integrity.
//!
//! The first record, `meta.stack`, carries the construction metadata needed
//! to rebuild the architecture before filling weights. Batch-norm running
//! statistics are stored alongside parameters under their layer names.

use crate::error::{Error, Result};
use crate::model::{Component, ModelStack, StackConfig, Variant};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

const MAGIC: &[u8; 4] = b"DASM";
const VERSION: u32 = 1;
const META_KEY: &str = "meta.stack";

fn push_record(buf: &mut Vec<u8>, name: &str, dims: &[usize], values: &[f32]) {
    buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes the stack. The write is atomic: a temp file is renamed over
/// the destination only after the full payload is flushed.
pub fn save_checkpoint(stack: &ModelStack, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let meta = stack.meta();
    let mut count = 0u32;
    push_record(&mut buf, META_KEY, &[meta.len()], &meta);
    count += 1;
    for (name, tensor) in stack.named_params() {
        push_record(&mut buf, &name, tensor.shape(), tensor.data());
        count += 1;
    }
    for (name, stats) in stack.named_running_stats() {
        push_record(&mut buf, &name, &[stats.len()], stats);
        count += 1;
    }
    buf.extend_from_slice(&count.to_le_bytes());

    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&buf)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Checkpoint(format!(
                "truncated file: wanted {n} bytes, {} remain",
                self.remaining()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let b = self.take(4 * n)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

type Records = BTreeMap<String, (Vec<usize>, Vec<f32>)>;

fn parse_records(bytes: &[u8], source: &Path) -> Result<Records> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4).map_err(|_| {
        Error::Checkpoint(format!("{}: file too short for magic", source.display()))
    })?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: bad magic {magic:?}",
            source.display()
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: unsupported format version {version} (expected {VERSION})",
            source.display()
        )));
    }
    let mut records = Records::new();
    let mut count = 0u32;
    while r.remaining() > 4 {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("record name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        let numel: usize = dims.iter().product();
        let values = r.f32s(numel)?;
        if records.insert(name.clone(), (dims, values)).is_some() {
            return Err(Error::Checkpoint(format!("duplicate record '{name}'")));
        }
        count += 1;
    }
    if r.remaining() != 4 {
        return Err(Error::Checkpoint(format!(
            "{}: truncated trailer",
            source.display()
        )));
    }
    let declared = r.u32()?;
    if declared != count {
        return Err(Error::Checkpoint(format!(
            "{}: trailer declares {declared} records, found {count}",
            source.display()
        )));
    }
    Ok(records)
}

/// Rebuilds a stack from a checkpoint. Parsing and validation complete
/// before any stack is constructed — a corrupt file yields no partial model.
pub fn load_checkpoint(path: &Path) -> Result<ModelStack> {
    let bytes = std::fs::read(path)?;
    let records = parse_records(&bytes, path)?;
    let (meta_dims, meta) = records
        .get(META_KEY)
        .ok_or_else(|| Error::Checkpoint(format!("{}: missing {META_KEY}", path.display())))?;
    if meta_dims.as_slice() != [7] || meta.len() != 7 {
        return Err(Error::Checkpoint(format!(
            "{}: malformed {META_KEY} record",
            path.display()
        )));
    }
    let cfg = StackConfig {
        variant: Variant::from_code(meta[0])?,
        input_h: meta[1] as usize,
        input_w: meta[2] as usize,
        num_classes: meta[3] as usize,
        width: meta[4] as usize,
        dropout_p: meta[5],
        hidden: meta[6] as usize,
        backbone: crate::model::BackboneSpec::SmallCnn,
        seed: 0,
    };
    let mut stack = ModelStack::build(&cfg)?;
    let mut consumed_prefixes = vec![META_KEY.to_string()];
    for name in ["texture", "color", "backbone", "classifier"] {
        if let Some(comp) = stack.component_mut(name) {
            comp.load_records(&records)?;
            consumed_prefixes.push(format!("{name}."));
        }
    }
    for key in records.keys() {
        let known = consumed_prefixes
            .iter()
            .any(|p| key == p || key.starts_with(p));
        if !known {
            return Err(Error::Checkpoint(format!(
                "{}: unexpected record '{key}' for a {} stack",
                path.display(),
                stack.variant.as_str()
            )));
        }
    }
    Ok(stack)
}

/// Copies one component's records out of a donor checkpoint into `comp`
/// (used to slot a previously trained backbone under a fresh stack).
pub(crate) fn adopt_component_weights(comp: &mut Component, path: &Path) -> Result<()> {
    let bytes = std::fs::read(path)?;
    let records = parse_records(&bytes, path)?;
    let prefix = format!("{}.", comp.name);
    if !records.keys().any(|k| k.starts_with(&prefix)) {
        return Err(Error::Checkpoint(format!(
            "{}: no '{}' records to adopt",
            path.display(),
            comp.name
        )));
    }
    comp.load_records(&records)
}
