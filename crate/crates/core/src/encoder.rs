//! Bottom-up encoding of subtrees into `(cell, h)` pairs.
//!
//! Every node gets a subtree encoding and a descendants encoding:
//!
//! - leaf: the subtree encoding is a pair of trainable rows indexed by the
//!   token; descendants are a single shared trainable "empty" pair.
//! - one child `c`: subtree = `LSTM(tau, enc(c))`, descendants = `enc(c)`.
//! - children `s1..sk`, `k >= 2`: a forward LSTM starts from `enc(s1)` and
//!   reads `h(s2)..h(sk)`, giving `f1`; a backward LSTM starts from `enc(sk)`
//!   and reads `h(s(k-1))..h(s1)`, giving `f2`. Subtree =
//!   `2DLSTM(tau, f1, f2)`, descendants = `combine(f1, f2)`.
//!
//! The combiner is
//!
//! ```text
//! [i, j, f1g, f2g, o] = split(W3 [h_f1; h_f2] + b3)
//! l1 = tanh(i) * sigmoid(j)
//! l2 = l1 + cell_f1 * sigmoid(f1g)
//! l3 = l2 + cell_f2 * sigmoid(f2g)
//! cell_des = tanh(l3)
//! h_des = cell_des * sigmoid(o)
//! ```

use crate::autodiff::{ParamId, ShapeError, Tape};
use crate::cells::{affine, lstm_step, twod_lstm_step, LstmWeights, ParamInit, StatePair, TwoDLstmWeights};
use crate::corpus::EncodedTree;
use crate::tree::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CombinerWeights {
    /// `5d x 2d`.
    pub w: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

/// Encoder-only parameters; the token embedding is shared with the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderParams {
    pub leaf_cell: ParamId,
    pub leaf_h: ParamId,
    pub empty_cell: ParamId,
    pub empty_h: ParamId,
    pub single_child: LstmWeights,
    pub forward: LstmWeights,
    pub backward: LstmWeights,
    pub root: TwoDLstmWeights,
    pub combiner: CombinerWeights,
}

impl EncoderParams {
    pub fn init(init: &mut ParamInit<'_>, vocab_size: usize, d: usize) -> Self {
        let leaf_cell = init.xavier("encoder.leaf_cell", vocab_size, d);
        let leaf_h = init.xavier("encoder.leaf_h", vocab_size, d);
        let empty_cell = init.zeros("encoder.empty_descendants.cell", d, 1);
        let empty_h = init.zeros("encoder.empty_descendants.h", d, 1);
        let single_child = init.lstm("encoder.single_child", d, d);
        let forward = init.lstm("encoder.forward", d, d);
        let backward = init.lstm("encoder.backward", d, d);
        let root = init.twod_lstm("encoder.root", d, d);
        let combiner = CombinerWeights {
            w: init.xavier("encoder.combiner.w", 5 * d, 2 * d),
            b: init.zeros("encoder.combiner.b", 5 * d, 1),
            hidden: d,
        };
        EncoderParams { leaf_cell, leaf_h, empty_cell, empty_h, single_child, forward, backward, root, combiner }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.leaf_cell, self.leaf_h, self.empty_cell, self.empty_h];
        for l in [self.single_child, self.forward, self.backward] {
            ids.extend([l.w, l.b]);
        }
        ids.extend([self.root.w, self.root.b, self.combiner.w, self.combiner.b]);
        ids
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EncoderStats {
    pub visits: usize,
    pub forward_steps: usize,
    pub backward_steps: usize,
}

/// Per-node subtree and descendants encodings on a tape.
#[derive(Debug, Clone)]
pub struct EncodingTable {
    subtree: Vec<Option<StatePair>>,
    descendants: Vec<Option<StatePair>>,
    pub stats: EncoderStats,
}

impl EncodingTable {
    pub fn new(len: usize) -> Self {
        EncodingTable { subtree: vec![None; len], descendants: vec![None; len], stats: EncoderStats::default() }
    }

    pub fn subtree(&self, node: NodeId) -> Option<StatePair> {
        self.subtree[node.0]
    }

    pub fn descendants(&self, node: NodeId) -> Option<StatePair> {
        self.descendants[node.0]
    }

    pub fn is_complete(&self) -> bool {
        self.subtree.iter().all(Option::is_some) && self.descendants.iter().all(Option::is_some)
    }
}

pub fn encode_leaf(tape: &mut Tape<'_>, params: &EncoderParams, token_id: usize) -> Result<StatePair, ShapeError> {
    Ok(StatePair { cell: tape.embedding_lookup(params.leaf_cell, token_id)?, h: tape.embedding_lookup(params.leaf_h, token_id)? })
}

pub fn combine(tape: &mut Tape<'_>, weights: &CombinerWeights, f1: StatePair, f2: StatePair) -> Result<StatePair, ShapeError> {
    let x = tape.concat_rows(&[f1.h, f2.h])?;
    let z = affine(tape, weights.w, weights.b, x)?;
    let g = tape.split_rows(z, 5)?;
    let ti = tape.tanh(g[0]);
    let sj = tape.sigmoid(g[1]);
    let l1 = tape.mul(ti, sj)?;
    let sf1 = tape.sigmoid(g[2]);
    let keep1 = tape.mul(f1.cell, sf1)?;
    let l2 = tape.add(l1, keep1)?;
    let sf2 = tape.sigmoid(g[3]);
    let keep2 = tape.mul(f2.cell, sf2)?;
    let l3 = tape.add(l2, keep2)?;
    let cell = tape.tanh(l3);
    let so = tape.sigmoid(g[4]);
    let h = tape.mul(cell, so)?;
    Ok(StatePair { cell, h })
}

/// Encodes one node whose children are already in `table`.
fn encode_node(
    tape: &mut Tape<'_>,
    params: &EncoderParams,
    embedding: ParamId,
    tree: &EncodedTree,
    node: NodeId,
    table: &mut EncodingTable,
) -> Result<(), ShapeError> {
    let child_state = |table: &EncodingTable, c: NodeId| table.subtree(c).expect("children are encoded first");
    let token = tree.token(node).id;
    let (subtree, descendants) = match tree.children(node) {
        [] => {
            let empty = StatePair { cell: tape.param(params.empty_cell), h: tape.param(params.empty_h) };
            (encode_leaf(tape, params, token)?, empty)
        }
        [only] => {
            let c = child_state(table, *only);
            let tau = tape.embedding_lookup(embedding, token)?;
            (lstm_step(tape, &params.single_child, tau, c)?, c)
        }
        children => {
            let states: Vec<StatePair> = children.iter().map(|&c| child_state(table, c)).collect();
            let mut f1 = states[0];
            for s in &states[1..] {
                f1 = lstm_step(tape, &params.forward, s.h, f1)?;
                table.stats.forward_steps += 1;
            }
            let mut f2 = *states.last().expect("at least two children");
            for s in states[..states.len() - 1].iter().rev() {
                f2 = lstm_step(tape, &params.backward, s.h, f2)?;
                table.stats.backward_steps += 1;
            }
            let tau = tape.embedding_lookup(embedding, token)?;
            let subtree = twod_lstm_step(tape, &params.root, tau, f1, f2)?;
            (subtree, combine(tape, &params.combiner, f1, f2)?)
        }
    };
    table.subtree[node.0] = Some(subtree);
    table.descendants[node.0] = Some(descendants);
    table.stats.visits += 1;
    Ok(())
}

/// Encodes the subtree rooted at `node` in post-order, filling `table` for
/// every node in it, and returns the subtree encoding of `node`.
pub fn encode_subtree(
    tape: &mut Tape<'_>,
    params: &EncoderParams,
    embedding: ParamId,
    tree: &EncodedTree,
    node: NodeId,
    table: &mut EncodingTable,
) -> Result<StatePair, ShapeError> {
    for n in tree.postorder_from(node) {
        // Post-order: an encoded node implies an encoded subtree.
        if table.subtree(n).is_some() {
            continue;
        }
        encode_node(tape, params, embedding, tree, n, table)?;
    }
    Ok(table.subtree(node).expect("just encoded"))
}

/// Encodes every node of `tree`.
pub fn encode_tree(
    tape: &mut Tape<'_>,
    params: &EncoderParams,
    embedding: ParamId,
    tree: &EncodedTree,
) -> Result<EncodingTable, ShapeError> {
    let mut table = EncodingTable::new(tree.len());
    encode_subtree(tape, params, embedding, tree, tree.root(), &mut table)?;
    Ok(table)
}
