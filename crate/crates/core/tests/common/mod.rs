//! Independent reference implementations on plain `Vec<f64>`, written
//! straight from the cell and encoder equations without the tape.

#![allow(dead_code)]

use hlm::autodiff::{ParamId, ParamStore, Tensor};
use hlm::cells::{LstmWeights, ParamInit, TwoDLstmWeights};
use hlm::corpus::{EncodedTree, Token};
use hlm::decoder::HlmParams;
use hlm::encoder::CombinerWeights;
use hlm::tree::{Ast, NodeId, Tree};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Vector = Vec<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub cell: Vector,
    pub h: Vector,
}

impl Pair {
    pub fn zeros(d: usize) -> Pair {
        Pair { cell: vec![0.0; d], h: vec![0.0; d] }
    }
}

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `W [parts...] + b`, reading `W` entry by entry.
fn affine(store: &ParamStore, w: ParamId, b: ParamId, parts: &[&[f64]]) -> Vector {
    let (w, b) = (store.get(w), store.get(b));
    let x: Vec<f64> = parts.iter().flat_map(|p| p.iter().copied()).collect();
    assert_eq!(w.cols, x.len());
    (0..w.rows).map(|r| (0..w.cols).map(|c| w.get(r, c) * x[c]).sum::<f64>() + b.get(r, 0)).collect()
}

fn gate(z: &[f64], d: usize, k: usize) -> &[f64] {
    &z[k * d..(k + 1) * d]
}

pub fn lstm(store: &ParamStore, w: &LstmWeights, x: &[f64], prev: &Pair) -> Pair {
    let d = w.hidden;
    let z = affine(store, w.w, w.b, &[x, &prev.h]);
    let (i, f, o, g) = (gate(&z, d, 0), gate(&z, d, 1), gate(&z, d, 2), gate(&z, d, 3));
    let cell: Vector = (0..d).map(|k| sigmoid(f[k]) * prev.cell[k] + sigmoid(i[k]) * g[k].tanh()).collect();
    let h = (0..d).map(|k| sigmoid(o[k]) * cell[k].tanh()).collect();
    Pair { cell, h }
}

pub fn twod(store: &ParamStore, w: &TwoDLstmWeights, x: &[f64], a: &Pair, b: &Pair) -> Pair {
    let d = w.hidden;
    let z = affine(store, w.w, w.b, &[x, &a.h, &b.h]);
    let cell: Vector = (0..d)
        .map(|k| {
            gate(&z, d, 0)[k].tanh() * sigmoid(gate(&z, d, 1)[k])
                + a.cell[k] * sigmoid(gate(&z, d, 2)[k])
                + b.cell[k] * sigmoid(gate(&z, d, 3)[k])
        })
        .collect();
    let h = (0..d).map(|k| cell[k].tanh() * sigmoid(gate(&z, d, 4)[k])).collect();
    Pair { cell, h }
}

/// The six combiner equations, one line each.
pub fn combiner(store: &ParamStore, w: &CombinerWeights, f1: &Pair, f2: &Pair) -> Pair {
    let d = w.hidden;
    let z = affine(store, w.w, w.b, &[&f1.h, &f2.h]);
    let (i, j, g1, g2, o) = (gate(&z, d, 0), gate(&z, d, 1), gate(&z, d, 2), gate(&z, d, 3), gate(&z, d, 4));
    let l1: Vector = (0..d).map(|k| i[k].tanh() * sigmoid(j[k])).collect();
    let l2: Vector = (0..d).map(|k| l1[k] + f1.cell[k] * sigmoid(g1[k])).collect();
    let l3: Vector = (0..d).map(|k| l2[k] + f2.cell[k] * sigmoid(g2[k])).collect();
    let cell: Vector = l3.iter().map(|x| x.tanh()).collect();
    let h = (0..d).map(|k| cell[k] * sigmoid(o[k])).collect();
    Pair { cell, h }
}

fn row(store: &ParamStore, table: ParamId, r: usize) -> Vector {
    store.get(table).row(r).to_vec()
}

/// Recursive encoder: returns (subtree encoding, descendants encoding).
pub fn encode(store: &ParamStore, p: &HlmParams, tree: &EncodedTree, node: NodeId) -> (Pair, Pair) {
    let e = &p.encoder;
    let tok = tree.token(node).id;
    let children = tree.children(node);
    match children.len() {
        0 => {
            let leaf = Pair { cell: row(store, e.leaf_cell, tok), h: row(store, e.leaf_h, tok) };
            let empty = Pair { cell: store.get(e.empty_cell).data.clone(), h: store.get(e.empty_h).data.clone() };
            (leaf, empty)
        }
        1 => {
            let (c, _) = encode(store, p, tree, children[0]);
            let tau = row(store, p.embedding, tok);
            (lstm(store, &e.single_child, &tau, &c), c)
        }
        k => {
            let subs: Vec<Pair> = children.iter().map(|&c| encode(store, p, tree, c).0).collect();
            let mut f1 = subs[0].clone();
            for s in &subs[1..] {
                f1 = lstm(store, &e.forward, &s.h, &f1);
            }
            let mut f2 = subs[k - 1].clone();
            for s in subs[..k - 1].iter().rev() {
                f2 = lstm(store, &e.backward, &s.h, &f2);
            }
            let tau = row(store, p.embedding, tok);
            (twod(store, &e.root, &tau, &f1, &f2), combiner(store, &e.combiner, &f1, &f2))
        }
    }
}

/// Incoming state of `node`, defined recursively through its parent or
/// previous sibling.
pub fn decode_state(store: &ParamStore, p: &HlmParams, tree: &EncodedTree, node: NodeId) -> Pair {
    let Some(parent) = tree.parent(node) else {
        return Pair::zeros(p.dim);
    };
    let siblings = tree.children(parent);
    let pos = siblings.iter().position(|&s| s == node).unwrap();
    if pos == 0 {
        let tau = row(store, p.embedding, tree.token(parent).id);
        lstm(store, &p.first_child, &tau, &decode_state(store, p, tree, parent))
    } else {
        let prev = siblings[pos - 1];
        let tau = row(store, p.embedding, tree.token(prev).id);
        let (_, des) = encode(store, p, tree, prev);
        twod(store, &p.next_sibling, &tau, &des, &decode_state(store, p, tree, prev))
    }
}

pub fn softmax(v: &[f64]) -> Vector {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

pub fn output_probs(store: &ParamStore, output: ParamId, h: &[f64]) -> Vector {
    let v = store.get(output);
    let logits: Vec<f64> = (0..v.rows).map(|r| (0..v.cols).map(|c| v.get(r, c) * h[c]).sum()).collect();
    softmax(&logits)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn pair_diff(a: &Pair, b: &Pair) -> f64 {
    max_abs_diff(&a.cell, &b.cell).max(max_abs_diff(&a.h, &b.h))
}

/// Random parent links: node `i > 0` attaches to a uniformly chosen earlier
/// node, so shapes range from chains to bushes.
pub fn random_links(r: &mut impl Rng, n: usize) -> Vec<Option<usize>> {
    (0..n).map(|i| if i == 0 { None } else { Some(r.random_range(0..i)) }).collect()
}

pub fn random_tree(r: &mut impl Rng, n: usize, vocab: usize) -> EncodedTree {
    let links = random_links(r, n);
    Tree::from_parent_links(links.into_iter().map(|p| (Token::known(r.random_range(0..vocab)), p))).unwrap()
}

pub fn random_ast(r: &mut impl Rng, n: usize, alphabet: usize) -> Ast {
    let links = random_links(r, n);
    Ast::build(links.into_iter().map(|p| (format!("t{}", r.random_range(0..alphabet)), p))).unwrap()
}

/// Overwrites every parameter with uniform noise in `[-scale, scale]`, so
/// biases and the empty-descendants pair are exercised too.
pub fn randomize(store: &mut ParamStore, seed: u64, scale: f64) {
    let mut r = rng(seed);
    for (_, p) in store.iter_mut() {
        for x in p.tensor.data.iter_mut() {
            *x = r.random_range(-scale..=scale);
        }
    }
}

pub fn hlm_setup(v: usize, d: usize, seed: u64) -> (ParamStore, HlmParams) {
    let mut store = ParamStore::new();
    let p = HlmParams::init(&mut ParamInit::new(&mut store, seed), v, d);
    randomize(&mut store, seed ^ 0xABCD, 0.5);
    (store, p)
}

pub fn column(r: &mut impl Rng, d: usize, scale: f64) -> Tensor {
    Tensor::column((0..d).map(|_| r.random_range(-scale..=scale)).collect())
}
