//! Checkpoint persistence: magic bytes, format version, a JSON header
//! with the config and tensor manifest, then raw little-endian f64
//! payloads. Round trips are bit-exact.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LabelSpace;
use crate::encoders::EmbeddingTable;
use crate::model::ModelConfig;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"MTLC";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unsupported checkpoint format version {0} (supported: {FORMAT_VERSION})")]
    Version(u32),
    #[error("malformed checkpoint: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainMeta {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub seed: u64,
}

/// In-memory checkpoint: config snapshot, label spaces, token maps, and
/// named parameter tensors.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub spaces: Vec<LabelSpace>,
    pub vocabs: BTreeMap<String, BTreeMap<String, usize>>,
    pub tensors: BTreeMap<String, Tensor>,
    pub meta: TrainMeta,
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    requires_grad: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    spaces: Vec<LabelSpace>,
    vocabs: BTreeMap<String, BTreeMap<String, usize>>,
    tensors: Vec<TensorInfo>,
    meta: TrainMeta,
}

pub fn write_checkpoint<W: Write>(checkpoint: &Checkpoint, mut writer: W) -> Result<()> {
    let mut infos = Vec::with_capacity(checkpoint.tensors.len());
    let mut offset = 0usize;
    for (name, tensor) in &checkpoint.tensors {
        infos.push(TensorInfo {
            name: name.clone(),
            shape: tensor.shape.clone(),
            offset,
            requires_grad: tensor.requires_grad,
        });
        offset += tensor.len();
    }
    let header = Header {
        config: checkpoint.config.clone(),
        spaces: checkpoint.spaces.clone(),
        vocabs: checkpoint.vocabs.clone(),
        tensors: infos,
        meta: checkpoint.meta.clone(),
    };
    let header_bytes =
        serde_json::to_vec(&header).map_err(|e| CheckpointError::Format(e.to_string()))?;
    writer.write_all(MAGIC)?;
    writer.write_all(&FORMAT_VERSION.to_le_bytes())?;
    writer.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    writer.write_all(&header_bytes)?;
    for tensor in checkpoint.tensors.values() {
        for v in &tensor.data {
            writer.write_all(&v.to_le_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut reader: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 4];
    reader
        .read_exact(&mut magic)
        .map_err(|_| CheckpointError::Format("truncated before magic".to_string()))?;
    if &magic != MAGIC {
        return Err(CheckpointError::Format("bad magic bytes".to_string()));
    }
    let mut word = [0u8; 4];
    reader
        .read_exact(&mut word)
        .map_err(|_| CheckpointError::Format("truncated before version".to_string()))?;
    let version = u32::from_le_bytes(word);
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let mut len_bytes = [0u8; 8];
    reader
        .read_exact(&mut len_bytes)
        .map_err(|_| CheckpointError::Format("truncated before header".to_string()))?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    reader
        .read_exact(&mut header_bytes)
        .map_err(|_| CheckpointError::Format("truncated header".to_string()))?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| CheckpointError::Format(e.to_string()))?;
    let mut tensors = BTreeMap::new();
    let mut expected_offset = 0usize;
    for info in &header.tensors {
        if info.offset != expected_offset {
            return Err(CheckpointError::Format(format!(
                "tensor '{}' at offset {}, expected {}",
                info.name, info.offset, expected_offset
            )));
        }
        let n: usize = info.shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            reader
                .read_exact(&mut buf)
                .map_err(|_| CheckpointError::Format("truncated payload".to_string()))?;
            data.push(f64::from_le_bytes(buf));
        }
        let mut tensor = Tensor::new(info.shape.clone(), data)
            .map_err(|e| CheckpointError::Format(e.to_string()))?;
        tensor.requires_grad = info.requires_grad;
        tensors.insert(info.name.clone(), tensor);
        expected_offset += n;
    }
    let mut trailer = [0u8; 1];
    if reader.read(&mut trailer)? != 0 {
        return Err(CheckpointError::Format("trailing bytes".to_string()));
    }
    Ok(Checkpoint {
        config: header.config,
        spaces: header.spaces,
        vocabs: header.vocabs,
        tensors,
        meta: header.meta,
    })
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    write_checkpoint(checkpoint, File::create(path)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(File::open(path)?)
}

impl Checkpoint {
    /// Embedding archive: the checkpoint format restricted to one named
    /// tensor plus the token map.
    pub fn from_embedding(table: &EmbeddingTable, config: &ModelConfig, seed: u64) -> Checkpoint {
        let mut vocabs = BTreeMap::new();
        vocabs.insert("main".to_string(), table.index.clone());
        let mut tensors = BTreeMap::new();
        tensors.insert("embed".to_string(), table.matrix.clone());
        Checkpoint {
            config: config.clone(),
            spaces: Vec::new(),
            vocabs,
            tensors,
            meta: TrainMeta {
                epochs_run: 0,
                best_epoch: 0,
                best_val_loss: 0.0,
                seed,
            },
        }
    }

    pub fn into_embedding(mut self) -> Result<EmbeddingTable> {
        let matrix = self
            .tensors
            .remove("embed")
            .ok_or_else(|| CheckpointError::Format("no 'embed' tensor".to_string()))?;
        let index = self
            .vocabs
            .remove("main")
            .ok_or_else(|| CheckpointError::Format("no token map".to_string()))?;
        let dim = matrix.shape[1];
        Ok(EmbeddingTable { dim, matrix, index })
    }
}
