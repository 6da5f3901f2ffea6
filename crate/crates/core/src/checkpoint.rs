//! Binary parameter snapshots.
//!
//! Layout: one line of JSON header terminated by `\n`, followed by every
//! parameter's values as little-endian `f64` in declaration order. Loading
//! rebuilds the architecture from the header and checks every name and
//! shape, so a round trip is bit-exact.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cells::CELL_EQUATIONS;
use crate::corpus::Vocab;
use crate::model::{Model, ModelError, ModelKind};

pub const FORMAT: &str = "hlm-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("missing header line")]
    MissingHeader,
    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("unsupported checkpoint {format} v{version}")]
    Unsupported { format: String, version: u32 },
    #[error("equation version `{found}` does not match `{expected}`")]
    Equations { found: String, expected: &'static str },
    #[error("parameter layout mismatch at `{0}`")]
    Layout(String),
    #[error("expected {expected} bytes of parameters, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub kind: ModelKind,
    pub vocab_size: usize,
    pub dim: usize,
    pub seed: u64,
    pub equations: String,
    pub params: Vec<ParamSpec>,
    #[serde(default)]
    pub vocab: Option<Vocab>,
}

/// A model plus, optionally, the vocabulary it was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab: Option<Vocab>,
}

impl Checkpoint {
    pub fn header(&self) -> Header {
        let m = &self.model;
        Header {
            format: FORMAT.to_string(),
            version: VERSION,
            kind: m.kind,
            vocab_size: m.vocab_size,
            dim: m.dim,
            seed: m.seed,
            equations: CELL_EQUATIONS.to_string(),
            params: m
                .params()
                .iter()
                .map(|(_, p)| ParamSpec { name: p.name.clone(), rows: p.tensor.rows, cols: p.tensor.cols })
                .collect(),
            vocab: self.vocab.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(&self.header()).expect("header serializes");
        out.push(b'\n');
        out.reserve(self.model.params().num_scalars() * 8);
        for (_, p) in self.model.params().iter() {
            for x in &p.tensor.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
        let nl = bytes.iter().position(|&b| b == b'\n').ok_or(CheckpointError::MissingHeader)?;
        let header: Header = serde_json::from_slice(&bytes[..nl])?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(CheckpointError::Unsupported { format: header.format, version: header.version });
        }
        if header.equations != CELL_EQUATIONS {
            return Err(CheckpointError::Equations { found: header.equations, expected: CELL_EQUATIONS });
        }
        let mut model = Model::new(header.kind, header.vocab_size, header.dim, header.seed)?;
        let body = &bytes[nl + 1..];
        let expected = model.params().num_scalars() * 8;
        if body.len() != expected {
            return Err(CheckpointError::Truncated { expected, found: body.len() });
        }
        if header.params.len() != model.params().len() {
            return Err(CheckpointError::Layout("parameter count".to_string()));
        }
        let mut chunks = body.chunks_exact(8);
        for ((_, p), spec) in model.params_mut().iter_mut().zip(&header.params) {
            if p.name != spec.name || p.tensor.rows != spec.rows || p.tensor.cols != spec.cols {
                return Err(CheckpointError::Layout(spec.name.clone()));
            }
            for x in p.tensor.data.iter_mut() {
                let chunk = chunks.next().expect("length checked");
                *x = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            }
        }
        Ok(Checkpoint { model, vocab: header.vocab })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
        let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }
}
