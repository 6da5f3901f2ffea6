//! Hierarchical decoding over first-child/next-sibling transitions.
//!
//! Each node receives exactly one incoming state:
//!
//! - the root: the fixed default state `(0, 0)`;
//! - a first child of `s`: `LSTM(tau_s, state_s)`;
//! - a next sibling of `s`: `2DLSTM(tau_s, descendants(s), state_s)`.
//!
//! The token distribution at a node is `softmax(V h)` of its incoming state.
//! States are computed in one pre-order pass; [`replay_state`] recomputes a
//! single node from its decoding path and serves as the reference.

use crate::autodiff::{softmax, ParamId, ParamStore, ShapeError, Tape, Var};
use crate::cells::{lstm_step, twod_lstm_step, LstmWeights, ParamInit, StatePair, TwoDLstmWeights};
use crate::corpus::{EncodedTree, Token};
use crate::encoder::{encode_subtree, EncoderParams, EncodingTable};
use crate::tree::{NodeId, Transition, TransitionKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HlmParams {
    pub vocab_size: usize,
    pub dim: usize,
    /// Token embeddings `tau`, shared by decoder and encoder.
    pub embedding: ParamId,
    pub first_child: LstmWeights,
    pub next_sibling: TwoDLstmWeights,
    /// Output projection `V`, `v x d`.
    pub output: ParamId,
    pub encoder: EncoderParams,
}

impl HlmParams {
    pub fn init(init: &mut ParamInit<'_>, vocab_size: usize, d: usize) -> Self {
        let embedding = init.xavier("embedding", vocab_size, d);
        let first_child = init.lstm("decoder.first_child", d, d);
        let next_sibling = init.twod_lstm("decoder.next_sibling", d, d);
        let output = init.xavier("output", vocab_size, d);
        let encoder = EncoderParams::init(init, vocab_size, d);
        HlmParams { vocab_size, dim: d, embedding, first_child, next_sibling, output, encoder }
    }

    /// Parameters used only by the decoder transitions.
    pub fn decoder_ids(&self) -> Vec<ParamId> {
        vec![self.first_child.w, self.first_child.b, self.next_sibling.w, self.next_sibling.b]
    }
}

/// Incoming state of every node, indexed by node id.
#[derive(Debug, Clone)]
pub struct TransitionStates {
    states: Vec<StatePair>,
}

impl TransitionStates {
    pub fn get(&self, node: NodeId) -> StatePair {
        self.states[node.0]
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &StatePair> {
        self.states.iter()
    }
}

pub fn default_state(tape: &mut Tape<'_>, d: usize) -> StatePair {
    StatePair::zeros_on(tape, d)
}

/// Descendants encoding of `node`, encoding its subtree first if needed.
pub fn descendants(
    tape: &mut Tape<'_>,
    params: &HlmParams,
    tree: &EncodedTree,
    node: NodeId,
    table: &mut EncodingTable,
) -> Result<StatePair, ShapeError> {
    if let Some(des) = table.descendants(node) {
        return Ok(des);
    }
    encode_subtree(tape, &params.encoder, params.embedding, tree, node, table)?;
    Ok(table.descendants(node).expect("subtree encoded"))
}

/// Applies one non-initial transition to the state of its source.
fn transition_step(
    tape: &mut Tape<'_>,
    params: &HlmParams,
    tree: &EncodedTree,
    table: &mut EncodingTable,
    transition: Transition,
    prev: StatePair,
) -> Result<StatePair, ShapeError> {
    let source = transition.source.expect("non-initial transitions have a source");
    let tau = tape.embedding_lookup(params.embedding, tree.token(source).id)?;
    match transition.kind {
        TransitionKind::Initial => unreachable!("initial transitions carry the default state"),
        TransitionKind::FirstChild => lstm_step(tape, &params.first_child, tau, prev),
        TransitionKind::NextSibling => {
            let des = descendants(tape, params, tree, source, table)?;
            twod_lstm_step(tape, &params.next_sibling, tau, des, prev)
        }
    }
}

/// All incoming states in one pre-order pass.
pub fn hlm_states(
    tape: &mut Tape<'_>,
    params: &HlmParams,
    tree: &EncodedTree,
    table: &mut EncodingTable,
) -> Result<TransitionStates, ShapeError> {
    let mut states = Vec::with_capacity(tree.len());
    for id in tree.node_ids() {
        let t = tree.incoming(id);
        let state = match t.source {
            None => default_state(tape, params.dim),
            Some(src) => transition_step(tape, params, tree, table, t, states[src.0])?,
        };
        states.push(state);
    }
    Ok(TransitionStates { states })
}

/// Recomputes the incoming state of `target` by walking its decoding path
/// from the default state.
pub fn replay_state(
    tape: &mut Tape<'_>,
    params: &HlmParams,
    tree: &EncodedTree,
    table: &mut EncodingTable,
    target: NodeId,
) -> Result<StatePair, ShapeError> {
    let path = tree.decoding_path(target).map_err(|e| ShapeError::Invalid { op: "replay_state", reason: e.to_string() })?;
    let mut state = default_state(tape, params.dim);
    for &t in &path.transitions[1..] {
        state = transition_step(tape, params, tree, table, t, state)?;
    }
    Ok(state)
}

/// `V h` as a `v x 1` column.
pub fn output_logits(tape: &mut Tape<'_>, output: ParamId, h: Var) -> Result<Var, ShapeError> {
    let v = tape.param(output);
    tape.matmul(v, h)
}

/// Token distribution `softmax(V h)`.
pub fn predict(tape: &mut Tape<'_>, output: ParamId, state: StatePair) -> Result<Vec<f64>, ShapeError> {
    let logits = output_logits(tape, output, state.h)?;
    Ok(softmax(tape.value(logits)))
}

/// Sum over every node, root included, of the negative log-probability of
/// its token.
pub fn tree_loss(tape: &mut Tape<'_>, params: &HlmParams, tree: &EncodedTree) -> Result<Var, ShapeError> {
    let mut table = EncodingTable::new(tree.len());
    let states = hlm_states(tape, params, tree, &mut table)?;
    let mut terms = Vec::with_capacity(tree.len());
    for id in tree.node_ids() {
        let logits = output_logits(tape, params.output, states.get(id).h)?;
        terms.push(tape.softmax_cross_entropy(logits, tree.token(id).id)?);
    }
    tape.sum(&terms)
}

/// Per-node predictions for a whole tree.
pub fn hlm_predictions(store: &ParamStore, params: &HlmParams, tree: &EncodedTree) -> Result<Vec<Prediction>, ShapeError> {
    let mut tape = Tape::new(store);
    let mut table = EncodingTable::new(tree.len());
    let states = hlm_states(&mut tape, params, tree, &mut table)?;
    tree.node_ids()
        .map(|id| {
            let probs = predict(&mut tape, params.output, states.get(id))?;
            Ok(Prediction::new(id, probs, *tree.token(id)))
        })
        .collect()
}

/// A distribution over the vocabulary for one node, scored against the
/// node's actual token.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub target: NodeId,
    pub probs: Vec<f64>,
    /// 1-based rank of the oracle id; ties go to the smaller id.
    pub rank: usize,
    pub oov: bool,
}

impl Prediction {
    pub fn new(target: NodeId, probs: Vec<f64>, oracle: Token) -> Self {
        let rank = rank_of(&probs, oracle.id);
        Prediction { target, probs, rank, oov: oracle.oov }
    }

    pub fn top_k(&self, k: usize) -> Vec<usize> {
        top_k(&self.probs, k)
    }
}

/// 1-based position of `id` when ids are sorted by descending probability,
/// then ascending id.
pub fn rank_of(probs: &[f64], id: usize) -> usize {
    let p = probs[id];
    1 + probs.iter().enumerate().filter(|&(j, &q)| q > p || (q == p && j < id)).count()
}

/// The `min(k, len)` most probable ids, ties by ascending id.
pub fn top_k(probs: &[f64], k: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..probs.len()).collect();
    ids.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    ids.truncate(k);
    ids
}
