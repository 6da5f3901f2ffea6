//! A trainable model of any supported kind behind one interface.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Gradients, ParamStore, ShapeError, Tape, Var};
use crate::baselines::{sequence_loss, sequence_predictions, SequenceParams};
use crate::cells::ParamInit;
use crate::corpus::{EncodedTree, Token};
use crate::decoder::{hlm_predictions, tree_loss, HlmParams, Prediction};
use crate::tree::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rnn,
    Lstm,
    Hlm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Rnn, ModelKind::Lstm, ModelKind::Hlm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rnn => "rnn",
            ModelKind::Lstm => "lstm",
            ModelKind::Hlm => "hlm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name().to_uppercase())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rnn" => Ok(ModelKind::Rnn),
            "lstm" => Ok(ModelKind::Lstm),
            "hlm" => Ok(ModelKind::Hlm),
            _ => Err(ModelError::UnknownKind(s.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown model kind `{0}` (expected rnn, lstm or hlm)")]
    UnknownKind(String),
    #[error("vocabulary size must be at least 2, got {0}")]
    VocabTooSmall(usize),
    #[error("dimension must be at least 1")]
    ZeroDim,
    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: usize, vocab_size: usize },
    #[error("invalid prefix: {0}")]
    InvalidPrefix(String),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Hlm(HlmParams),
    Sequence(SequenceParams),
}

/// Kind, shape, seed and parameter values.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub vocab_size: usize,
    pub dim: usize,
    pub seed: u64,
    params: ParamStore,
    arch: Architecture,
}

/// A ranked completion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: usize,
    pub prob: f64,
}

impl Model {
    /// Freshly initialized parameters; identical for identical arguments.
    pub fn new(kind: ModelKind, vocab_size: usize, dim: usize, seed: u64) -> Result<Model, ModelError> {
        if vocab_size < 2 {
            return Err(ModelError::VocabTooSmall(vocab_size));
        }
        if dim == 0 {
            return Err(ModelError::ZeroDim);
        }
        let mut params = ParamStore::new();
        let mut init = ParamInit::new(&mut params, seed);
        let arch = match kind {
            ModelKind::Hlm => Architecture::Hlm(HlmParams::init(&mut init, vocab_size, dim)),
            ModelKind::Lstm => Architecture::Sequence(SequenceParams::init_lstm(&mut init, vocab_size, dim)),
            ModelKind::Rnn => Architecture::Sequence(SequenceParams::init_rnn(&mut init, vocab_size, dim)),
        };
        Ok(Model { kind, vocab_size, dim, seed, params, arch })
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn hlm(&self) -> Option<&HlmParams> {
        match &self.arch {
            Architecture::Hlm(p) => Some(p),
            Architecture::Sequence(_) => None,
        }
    }

    pub fn sequence(&self) -> Option<&SequenceParams> {
        match &self.arch {
            Architecture::Sequence(p) => Some(p),
            Architecture::Hlm(_) => None,
        }
    }

    fn check_tokens(&self, tree: &EncodedTree) -> Result<(), ModelError> {
        match tree.flatten().into_iter().find(|t| t.id >= self.vocab_size) {
            Some(t) => Err(ModelError::TokenOutOfRange { id: t.id, vocab_size: self.vocab_size }),
            None => Ok(()),
        }
    }

    /// Records the summed per-node loss of `tree` on `tape`.
    pub fn loss_on(&self, tape: &mut Tape<'_>, tree: &EncodedTree) -> Result<Var, ShapeError> {
        match &self.arch {
            Architecture::Hlm(p) => tree_loss(tape, p, tree),
            Architecture::Sequence(p) => sequence_loss(tape, p, tree),
        }
    }

    pub fn loss_and_gradients(&self, tree: &EncodedTree) -> Result<(f64, Gradients), ModelError> {
        self.check_tokens(tree)?;
        let mut tape = Tape::new(&self.params);
        let loss = self.loss_on(&mut tape, tree)?;
        Ok((tape.scalar(loss), tape.backward(loss)))
    }

    /// One prediction per node, in pre-order.
    pub fn predictions(&self, tree: &EncodedTree) -> Result<Vec<Prediction>, ModelError> {
        self.check_tokens(tree)?;
        Ok(match &self.arch {
            Architecture::Hlm(p) => hlm_predictions(&self.params, p, tree)?,
            Architecture::Sequence(p) => sequence_predictions(&self.params, p, tree)?,
        })
    }

    /// The `k` most likely tokens for a new last child of `parent`.
    ///
    /// `parent` must be on the rightmost path of `prefix`, so that the new
    /// node is the next pre-order position. Ties go to the smaller id.
    pub fn complete(&self, prefix: &EncodedTree, parent: NodeId, k: usize) -> Result<Vec<Candidate>, ModelError> {
        if parent.0 >= prefix.len() {
            return Err(ModelError::InvalidPrefix(format!("parent {parent} is not a node of the prefix")));
        }
        // The placeholder token never influences its own prediction.
        let extended = prefix
            .with_appended_child(parent, Token { id: 0, oov: true })
            .ok_or_else(|| ModelError::InvalidPrefix(format!("node {parent} is not on the rightmost path")))?;
        let last = self.predictions(&extended)?.pop().expect("extended tree is non-empty");
        Ok(last.top_k(k).into_iter().map(|id| Candidate { id, prob: last.probs[id] }).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::Tree;

    fn tree() -> EncodedTree {
        Tree::from_parent_links([(1, None), (2, Some(0)), (3, Some(1)), (1, Some(0))].map(|(t, p)| (Token::known(t), p))).unwrap()
    }

    #[test]
    fn kinds_parse() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("gru".parse::<ModelKind>().is_err());
    }

    #[test]
    fn construction_checks() {
        assert!(matches!(Model::new(ModelKind::Hlm, 1, 4, 0), Err(ModelError::VocabTooSmall(1))));
        assert!(matches!(Model::new(ModelKind::Rnn, 4, 0, 0), Err(ModelError::ZeroDim)));
        assert_eq!(Model::new(ModelKind::Lstm, 4, 3, 5).unwrap(), Model::new(ModelKind::Lstm, 4, 3, 5).unwrap());
    }

    #[test]
    fn completion_prefix_property() {
        for kind in ModelKind::ALL {
            let m = Model::new(kind, 6, 4, 1).unwrap();
            let all = m.complete(&tree(), NodeId(3), 6).unwrap();
            let mut ids: Vec<usize> = all.iter().map(|c| c.id).collect();
            ids.sort();
            assert_eq!(ids, (0..6).collect::<Vec<_>>());
            for k in 1..6 {
                assert_eq!(m.complete(&tree(), NodeId(3), k).unwrap(), all[..k]);
            }
            assert!(matches!(m.complete(&tree(), NodeId(2), 3), Err(ModelError::InvalidPrefix(_))));
            assert!(matches!(m.complete(&tree(), NodeId(9), 3), Err(ModelError::InvalidPrefix(_))));
        }
    }

    #[test]
    fn out_of_range_tokens_rejected() {
        let m = Model::new(ModelKind::Hlm, 3, 2, 0).unwrap();
        assert!(matches!(m.predictions(&tree()), Err(ModelError::TokenOutOfRange { id: 3, .. })));
    }
}
