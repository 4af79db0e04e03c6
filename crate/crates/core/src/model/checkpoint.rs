//! AMCW checkpoints: every stored tensor by name, then a key=value text block.
//!
//! ```text
//! "AMCW" u16 version u32 tensor_count
//! tensor_count × (u16 name length, UTF-8 name, u8 rank, rank × u32 dim, f32 data)
//! u32 metadata length, UTF-8 `key=value` lines
//! ```

use std::fs;
use std::path::Path;

use super::{AmcModel, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AMCW";
pub const CHECKPOINT_VERSION: u16 = 1;
const FORMAT: &str = "AMCW checkpoint";

/// Non-tensor contents of a checkpoint.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub classes: Vec<String>,
    /// Free-form training summary, written as `train.<key>` entries.
    pub summary: Vec<(String, String)>,
}

fn metadata_text(config: &ModelConfig, meta: &Checkpoint) -> Result<String> {
    let mut out = String::new();
    let mut line = |k: &str, v: &str| -> Result<()> {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(Error::invalid(format!("metadata entry `{k}` cannot be encoded")));
        }
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
        Ok(())
    };
    for (k, v) in config.to_pairs() {
        line(&format!("config.{k}"), &v)?;
    }
    for (i, c) in meta.classes.iter().enumerate() {
        line(&format!("class.{i}"), c)?;
    }
    for (k, v) in &meta.summary {
        line(&format!("train.{k}"), v)?;
    }
    Ok(out)
}

pub fn save_checkpoint(path: &Path, model: &AmcModel<f32>, meta: &Checkpoint) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(model.store.len() as u32).to_le_bytes());
    for (_, p) in model.store.iter() {
        let name = p.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        let shape = p.value.shape();
        buf.push(shape.len() as u8);
        for &d in shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let text = metadata_text(&model.config, meta)?;
    buf.extend_from_slice(&(text.len() as u32).to_le_bytes());
    buf.extend_from_slice(text.as_bytes());
    fs::write(path, buf).map_err(Error::at_path(path))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated {
                what: format!("{FORMAT} ({what})"),
                expected: (self.pos + n) as u64,
                actual: self.bytes.len() as u64,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

fn malformed(detail: impl Into<String>) -> Error {
    Error::Malformed {
        format: FORMAT,
        detail: detail.into(),
    }
}

/// Rebuilds the model described by the checkpoint and fills in every tensor.
pub fn load_checkpoint(path: &Path) -> Result<(AmcModel<f32>, Checkpoint)> {
    let bytes = fs::read(path).map_err(Error::at_path(path))?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4, "magic").ok() != Some(&CHECKPOINT_MAGIC[..]) {
        return Err(Error::BadMagic { format: FORMAT });
    }
    let version = c.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            format: FORMAT,
            found: version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let count = c.u32("tensor count")?;
    let mut tensors = Vec::with_capacity(count as usize);
    for k in 0..count {
        let what = format!("tensor {k}");
        let len = c.u16(&what)? as usize;
        let name = std::str::from_utf8(c.take(len, &what)?)
            .map_err(|_| malformed(format!("tensor {k} name is not UTF-8")))?
            .to_string();
        let rank = c.u8(&what)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32(&what)? as usize);
        }
        let numel: usize = shape.iter().product();
        let data: Vec<f32> = c
            .take(4 * numel, &what)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        let tensor = Tensor::new(&shape, data).map_err(|e| malformed(format!("tensor `{name}`: {e}")))?;
        tensors.push((name, tensor));
    }
    let len = c.u32("metadata length")? as usize;
    let text = std::str::from_utf8(c.take(len, "metadata")?).map_err(|_| malformed("metadata is not UTF-8"))?;
    if c.pos != bytes.len() {
        return Err(malformed(format!("{} trailing bytes", bytes.len() - c.pos)));
    }

    let mut config_pairs = Vec::new();
    let mut classes = Vec::new();
    let mut summary = Vec::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| malformed(format!("bad metadata line `{line}`")))?;
        if let Some(k) = k.strip_prefix("config.") {
            config_pairs.push((k, v));
        } else if let Some(i) = k.strip_prefix("class.") {
            let i: usize = i.parse().map_err(|_| malformed(format!("bad class key `{k}`")))?;
            if i != classes.len() {
                return Err(malformed("class entries out of order"));
            }
            classes.push(v.to_string());
        } else if let Some(k) = k.strip_prefix("train.") {
            summary.push((k.to_string(), v.to_string()));
        }
    }
    let config = ModelConfig::from_pairs(config_pairs)?;
    let mut model = AmcModel::<f32>::new(config, 0)?;
    if tensors.len() != model.store.len() {
        return Err(malformed(format!(
            "checkpoint holds {} tensors, the configured model has {}",
            tensors.len(),
            model.store.len()
        )));
    }
    for (name, tensor) in tensors {
        let id = model
            .store
            .id(&name)
            .ok_or_else(|| malformed(format!("unknown tensor `{name}`")))?;
        let slot = &mut model.store.get_mut(id).value;
        if slot.shape() != tensor.shape() {
            return Err(malformed(format!(
                "tensor `{name}` has shape {:?}, expected {:?}",
                tensor.shape(),
                slot.shape()
            )));
        }
        *slot = tensor;
    }
    Ok((model, Checkpoint { classes, summary }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_restores_every_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.amcw");
        let mut model = AmcModel::<f32>::new(ModelConfig::new(32, 4), 7).unwrap();
        // Give the buffers non-default values.
        for p in model.store.iter_mut() {
            if p.name.ends_with("running_mean") {
                p.value.fill(0.25);
            }
        }
        let meta = Checkpoint {
            classes: vec!["BPSK".into(), "QPSK".into(), "8PSK".into(), "GFSK".into()],
            summary: vec![("epochs".into(), "3".into())],
        };
        save_checkpoint(&path, &model, &meta).unwrap();
        let (back, back_meta) = load_checkpoint(&path).unwrap();
        assert_eq!(back_meta, meta);
        assert_eq!(back.config, model.config);
        for ((_, a), (_, b)) in model.store.iter().zip(back.store.iter()) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.amcw");
        fs::write(&path, b"NOPE\x01\x00").unwrap();
        assert!(matches!(load_checkpoint(&path).unwrap_err(), Error::BadMagic { .. }));
        let model = AmcModel::<f32>::new(ModelConfig::new(16, 3), 0).unwrap();
        save_checkpoint(&path, &model, &Checkpoint::default()).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_checkpoint(&path).unwrap_err(), Error::Truncated { .. }));
    }
}
