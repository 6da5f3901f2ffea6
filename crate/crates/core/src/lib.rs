//! Hierarchical language model (HLM) for token-level code completion over
//! abstract syntax trees.
//!
//! The model walks each tree in pre-order and predicts every node from the
//! state carried along its first-child/next-sibling path. First-child steps
//! use a standard LSTM; next-sibling steps use a two-dimensional LSTM that
//! also consumes a bottom-up BiLSTM encoding of the sibling's subtree.
//! Flattened-sequence LSTM and RNN baselines share the same training and
//! evaluation pipeline.
//!
//! Module map:
//!
//! - [`tree`]: ordered trees, traversals, decoding paths.
//! - [`corpus`]: JSONL ingestion, filters, splits, vocabulary, synthetic data.
//! - [`autodiff`]: tape-based reverse mode, Adam, gradient checking.
//! - [`cells`]: LSTM, 2D-LSTM and RNN steps plus parameter initialization.
//! - [`encoder`]: hierarchical subtree encoding.
//! - [`decoder`]: HLM transition states, predictions and loss.
//! - [`baselines`]: sequential next-token models.
//! - [`model`]: the trainable model wrapper and completion queries.
//! - [`train`], [`eval`]: training loop with early stopping, metrics, reports.
//! - [`checkpoint`]: binary parameter snapshots.
//! - [`cli`]: the `hlm` command-line tool.

pub mod autodiff;
pub mod baselines;
pub mod cells;
pub mod checkpoint;
pub mod cli;
pub mod corpus;
pub mod decoder;
pub mod encoder;
pub mod eval;
pub mod model;
pub mod train;
pub mod tree;
