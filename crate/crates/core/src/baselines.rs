//! Sequential next-token models over the pre-order token sequence.
//!
//! Position `i` is predicted from the state after reading tokens `0..i`;
//! the first token is predicted from the zero state.

use crate::autodiff::{softmax, ParamId, ParamStore, ShapeError, Tape, Var};
use crate::cells::{lstm_step, rnn_step, LstmWeights, ParamInit, RnnWeights, StatePair};
use crate::corpus::EncodedTree;
use crate::decoder::{output_logits, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceCell {
    Lstm(LstmWeights),
    Rnn(RnnWeights),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceParams {
    pub vocab_size: usize,
    pub dim: usize,
    pub embedding: ParamId,
    pub cell: SequenceCell,
    pub output: ParamId,
}

impl SequenceParams {
    pub fn init_lstm(init: &mut ParamInit<'_>, vocab_size: usize, d: usize) -> Self {
        let embedding = init.xavier("embedding", vocab_size, d);
        let cell = SequenceCell::Lstm(init.lstm("lstm", d, d));
        let output = init.xavier("output", vocab_size, d);
        SequenceParams { vocab_size, dim: d, embedding, cell, output }
    }

    pub fn init_rnn(init: &mut ParamInit<'_>, vocab_size: usize, d: usize) -> Self {
        let embedding = init.xavier("embedding", vocab_size, d);
        let cell = SequenceCell::Rnn(init.rnn("rnn", d, d));
        let output = init.xavier("output", vocab_size, d);
        SequenceParams { vocab_size, dim: d, embedding, cell, output }
    }
}

/// The hidden vector used to predict each position of `tokens`.
pub fn sequence_hidden(tape: &mut Tape<'_>, params: &SequenceParams, tokens: &[usize]) -> Result<Vec<Var>, ShapeError> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut state = StatePair::zeros_on(tape, params.dim);
    for (i, &tok) in tokens.iter().enumerate() {
        out.push(state.h);
        if i + 1 == tokens.len() {
            break;
        }
        let tau = tape.embedding_lookup(params.embedding, tok)?;
        state = match params.cell {
            SequenceCell::Lstm(w) => lstm_step(tape, &w, tau, state)?,
            SequenceCell::Rnn(w) => {
                let h = rnn_step(tape, &w, tau, state.h)?;
                StatePair { cell: state.cell, h }
            }
        };
    }
    Ok(out)
}

fn token_ids(tree: &EncodedTree) -> Vec<usize> {
    tree.flatten().iter().map(|t| t.id).collect()
}

/// Summed negative log-likelihood of the flattened tree.
pub fn sequence_loss(tape: &mut Tape<'_>, params: &SequenceParams, tree: &EncodedTree) -> Result<Var, ShapeError> {
    let ids = token_ids(tree);
    let hidden = sequence_hidden(tape, params, &ids)?;
    let mut terms = Vec::with_capacity(ids.len());
    for (h, &id) in hidden.into_iter().zip(&ids) {
        let logits = output_logits(tape, params.output, h)?;
        terms.push(tape.softmax_cross_entropy(logits, id)?);
    }
    tape.sum(&terms)
}

/// One distribution per position of `tokens`.
pub fn sequence_probabilities(
    store: &ParamStore,
    params: &SequenceParams,
    tokens: &[usize],
) -> Result<Vec<Vec<f64>>, ShapeError> {
    let mut tape = Tape::new(store);
    let hidden = sequence_hidden(&mut tape, params, tokens)?;
    hidden
        .into_iter()
        .map(|h| {
            let logits = output_logits(&mut tape, params.output, h)?;
            Ok(softmax(tape.value(logits)))
        })
        .collect()
}

pub fn sequence_predictions(
    store: &ParamStore,
    params: &SequenceParams,
    tree: &EncodedTree,
) -> Result<Vec<Prediction>, ShapeError> {
    let probs = sequence_probabilities(store, params, &token_ids(tree))?;
    Ok(tree.node_ids().zip(probs).map(|(id, p)| Prediction::new(id, p, *tree.token(id))).collect())
}
