use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Real;

use super::config::ModelConfig;
use super::network::BiMambaClassifier;

/// First bytes of every checkpoint file.
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CLDCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// JSON header that precedes the parameter blobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub config: ModelConfig,
    pub seed: u64,
    pub dtype: String,
    pub tensors: Vec<TensorEntry>,
}

/// Writes `magic ‖ u64 LE header length ‖ JSON header ‖ f32 LE blobs`, the
/// blobs in parameter declaration order.
pub fn save_checkpoint<T: Real, W: Write>(model: &BiMambaClassifier<T>, out: W) -> Result<()> {
    let header = CheckpointHeader {
        format_version: CHECKPOINT_VERSION,
        config: model.cfg.clone(),
        seed: model.cfg.seed,
        dtype: "f32le".into(),
        tensors: model
            .params
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(out);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for (_, t) in model.params.iter() {
        for &v in t.data() {
            w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_checkpoint_file<T: Real>(model: &BiMambaClassifier<T>, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    save_checkpoint(model, f)
}

/// Reads a checkpoint written by [`save_checkpoint`]. Names, shapes and
/// total length must match the architecture in the header exactly.
pub fn load_checkpoint<T: Real, R: Read>(input: R) -> Result<BiMambaClassifier<T>> {
    let mut r = BufReader::new(input);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Corruption("checkpoint shorter than its magic".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Corruption("not a checkpoint (bad magic)".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|_| Error::Corruption("truncated checkpoint header length".into()))?;
    let len = usize::try_from(u64::from_le_bytes(len))
        .map_err(|_| Error::Corruption("checkpoint header length overflows".into()))?;
    if len > 64 << 20 {
        return Err(Error::Corruption(format!("implausible checkpoint header length {len}")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)
        .map_err(|_| Error::Corruption("truncated checkpoint header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&json)?;
    if header.format_version != CHECKPOINT_VERSION || header.dtype != "f32le" {
        return Err(Error::Corruption(format!(
            "unsupported checkpoint version {} / dtype {}",
            header.format_version, header.dtype
        )));
    }
    let mut model = BiMambaClassifier::<T>::init(&header.config)?;
    if header.tensors.len() != model.params.len() {
        return Err(Error::Corruption(format!(
            "checkpoint lists {} tensors, architecture has {}",
            header.tensors.len(),
            model.params.len()
        )));
    }
    let ids: Vec<_> = model.params.ids().collect();
    for (entry, id) in header.tensors.iter().zip(ids) {
        if entry.name != model.params.name(id) || entry.shape != model.params.get(id).shape() {
            return Err(Error::Corruption(format!(
                "tensor {} {:?} does not match architecture {} {:?}",
                entry.name,
                entry.shape,
                model.params.name(id),
                model.params.get(id).shape()
            )));
        }
        let t = model.params.get_mut(id);
        let mut buf = vec![0u8; t.len() * 4];
        r.read_exact(&mut buf)
            .map_err(|_| Error::Corruption(format!("truncated blob for {}", entry.name)))?;
        for (dst, c) in t.data_mut().iter_mut().zip(buf.chunks_exact(4)) {
            *dst = T::lit(f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Corruption("trailing bytes after checkpoint blobs".into()));
    }
    Ok(model)
}

pub fn load_checkpoint_file<T: Real>(path: &Path) -> Result<BiMambaClassifier<T>> {
    let f = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    load_checkpoint(f)
}
