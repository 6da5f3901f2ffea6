mod common;

use std::collections::HashSet;

use common::*;
use hlm::autodiff::Tape;
use hlm::cells::{lstm_step, twod_lstm_step, ParamInit, StatePair};
use hlm::corpus::synth::GrammarConfig;
use hlm::corpus::{synth_generate, EncodedTree, Token, Vocab};
use hlm::decoder::{hlm_states, Prediction};
use hlm::encoder::{encode_subtree, encode_tree, EncodingTable};
use hlm::eval::{evaluate, EvalReport, Tally};
use hlm::model::{Model, ModelKind};
use hlm::train::{train_with, TrainConfig, Trainer};
use hlm::tree::{NodeId, TransitionKind, Tree};
use proptest::prelude::*;
use rand::Rng;

fn tree_strategy(max_nodes: usize, vocab: usize) -> impl Strategy<Value = EncodedTree> {
    (1..=max_nodes, any::<u64>()).prop_map(move |(n, seed)| random_tree(&mut rng(seed), n, vocab))
}

fn kind_strategy() -> impl Strategy<Value = ModelKind> {
    prop_oneof![Just(ModelKind::Rnn), Just(ModelKind::Lstm), Just(ModelKind::Hlm)]
}

fn random_model(kind: ModelKind, v: usize, d: usize, seed: u64) -> Model {
    let mut m = Model::new(kind, v, d, seed).unwrap();
    randomize(m.params_mut(), seed ^ 0x55, 0.6);
    m
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn decoding_paths_cover_fcns_edges(tree in tree_strategy(40, 4)) {
        let edges: HashSet<_> = tree.fcns_edges().into_iter().collect();
        let mut seen = HashSet::new();
        for id in tree.node_ids() {
            let path = tree.decoding_path(id).unwrap();
            prop_assert_eq!(path.transitions[0].kind, TransitionKind::Initial);
            prop_assert_eq!(path.target(), id);
            for w in path.transitions.windows(2) {
                prop_assert_eq!(Some(w[0].target), w[1].source);
            }
            let bfs = tree.fcns_bfs_path(id);
            prop_assert_eq!(Some(&path), bfs.as_ref());
            for t in &path.transitions {
                prop_assert!(edges.contains(t));
                seen.insert(*t);
            }
        }
        prop_assert_eq!(seen, edges);
    }

    #[test]
    fn traversals_are_permutations(tree in tree_strategy(40, 4)) {
        for order in [tree.preorder(), tree.postorder()] {
            let mut ids: Vec<usize> = order.iter().map(|n| n.0).collect();
            ids.sort_unstable();
            prop_assert_eq!(ids, (0..tree.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn transition_counts(tree in tree_strategy(60, 4)) {
        let count = |k| tree.fcns_edges().iter().filter(|e| e.kind == k).count();
        let parents = tree.node_ids().filter(|&n| !tree.is_leaf(n)).count();
        let later_siblings: usize = tree.node_ids().map(|n| tree.children(n).len().saturating_sub(1)).sum();
        prop_assert_eq!(count(TransitionKind::Initial), 1);
        prop_assert_eq!(count(TransitionKind::FirstChild), parents);
        prop_assert_eq!(count(TransitionKind::NextSibling), later_siblings);
        prop_assert_eq!(1 + parents + later_siblings, tree.len());
    }

    #[test]
    fn predictions_are_distributions(kind in kind_strategy(), tree in tree_strategy(40, 6), seed in 0u64..1000) {
        let preds = random_model(kind, 6, 4, seed).predictions(&tree).unwrap();
        prop_assert_eq!(preds.len(), tree.len());
        for (p, id) in preds.iter().zip(tree.node_ids()) {
            prop_assert_eq!(p.target, id);
            prop_assert!((p.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.probs.iter().all(|q| q.is_finite() && *q >= 0.0));
            prop_assert!(p.rank >= 1 && p.rank <= 6);
        }
    }

    #[test]
    fn predictions_ignore_later_tokens(
        kind in kind_strategy(),
        tree in tree_strategy(40, 6),
        seed in 0u64..1000,
        cut in 0usize..40,
        noise in any::<u64>(),
    ) {
        let cut = cut % tree.len();
        let mut r = rng(noise);
        let changed = tree.map(|id, t| if id.0 > cut { Token::known(r.random_range(0..6)) } else { *t });
        let model = random_model(kind, 6, 4, seed);
        let (a, b) = (model.predictions(&tree).unwrap(), model.predictions(&changed).unwrap());
        for i in 0..=cut {
            prop_assert_eq!(&a[i].probs, &b[i].probs);
        }
    }

    #[test]
    fn states_are_bounded(tree in tree_strategy(40, 5), seed in 0u64..1000) {
        let (store, p) = hlm_setup(5, 4, seed);
        let mut tape = Tape::new(&store);
        let mut table = EncodingTable::new(tree.len());
        let states = hlm_states(&mut tape, &p, &tree, &mut table).unwrap();
        for s in states.iter() {
            let v = s.values(&tape);
            prop_assert!(v.h.iter().all(|x| x.abs() < 1.0) && v.cell.iter().all(|x| x.is_finite()));
        }
        let table = encode_tree(&mut tape, &p.encoder, p.embedding, &tree).unwrap();
        for id in tree.node_ids().filter(|&n| !tree.is_leaf(n)) {
            let v = table.subtree(id).unwrap().values(&tape);
            prop_assert!(v.h.iter().all(|x| x.abs() < 1.0));
        }
    }

    #[test]
    fn cell_outputs_are_bounded(seed in any::<u64>(), scale in 0.1f64..5.0) {
        let d = 3;
        let mut store = hlm::autodiff::ParamStore::new();
        let mut init = ParamInit::new(&mut store, seed);
        let (l, t) = (init.lstm("l", d, d), init.twod_lstm("t", d, d));
        randomize(&mut store, seed, scale);
        let mut r = rng(seed);
        let mut tape = Tape::new(&store);
        let mut col = |tape: &mut Tape<'_>| tape.constant(column(&mut r, d, scale));
        let x = col(&mut tape);
        let a = StatePair { cell: col(&mut tape), h: col(&mut tape) };
        let b = StatePair { cell: col(&mut tape), h: col(&mut tape) };
        for s in [lstm_step(&mut tape, &l, x, a).unwrap(), twod_lstm_step(&mut tape, &t, x, a, b).unwrap()] {
            prop_assert!(s.values(&tape).h.iter().all(|h| h.abs() < 1.0));
        }
    }

    #[test]
    fn subtree_encoding_is_local(tree in tree_strategy(40, 5), node in 0usize..40, noise in any::<u64>()) {
        let node = NodeId(node % tree.len());
        let (store, p) = hlm_setup(5, 4, 3);
        let mut r = rng(noise);
        let changed = tree.map(|id, t| if tree.is_descendant_or_self(id, node) { *t } else { Token::known(r.random_range(0..5)) });
        let encode = |t: &EncodedTree| {
            let mut tape = Tape::new(&store);
            let mut table = EncodingTable::new(t.len());
            let s = encode_subtree(&mut tape, &p.encoder, p.embedding, t, node, &mut table).unwrap();
            (s.values(&tape), table.stats.visits)
        };
        let (a, visits) = encode(&tree);
        prop_assert_eq!(visits, tree.subtree_size(node));
        prop_assert_eq!(a, encode(&changed).0);
    }

    #[test]
    fn vocab_unk_is_not_more_common_than_top_token(seed in any::<u64>(), unk_k in 1usize..=3, rename in 0.0f64..0.5) {
        let grammar = GrammarConfig::java_like().with_bounds(20, 120).with_seed(seed).with_rename_fraction(rename);
        let trees = synth_generate(&grammar, 6).unwrap();
        let vocab = Vocab::build(&trees, unk_k).unwrap();
        let unk = trees.iter().flat_map(|t| vocab.encode_tree(t).flatten().into_iter().copied().collect::<Vec<_>>()).filter(|t| t.oov).count();
        prop_assert_eq!(unk as u64, vocab.frequency(vocab.unk_id()));
        prop_assert!(vocab.frequency(vocab.unk_id()) <= vocab.frequency(1));
    }

    #[test]
    fn metrics_are_monotone(ranks in prop::collection::vec((1usize..=15, any::<bool>()), 1..60)) {
        let v = 15;
        let preds: Vec<Prediction> = ranks
            .iter()
            .map(|&(rank, oov)| {
                let probs = (0..v).map(|j| (v - j) as f64 / 120.0).collect();
                Prediction::new(NodeId(0), probs, Token { id: rank - 1, oov })
            })
            .collect();
        let r = EvalReport::from_tally("p", ModelKind::Hlm, &Tally::of(&preds));
        prop_assert!(0.0 <= r.top1 && r.top1 <= r.top3 && r.top3 <= r.top6 && r.top6 <= r.top10 && r.top10 <= 100.0);
        prop_assert!(r.top1 / 100.0 <= r.mrr + 1e-12 && r.mrr <= 1.0);
    }

    #[test]
    fn early_stopping_keeps_the_best(scores in prop::collection::vec(0u8..5, 1..8), patience in 1usize..3) {
        let tree = random_tree(&mut rng(1), 4, 3);
        let config = TrainConfig { dim: 2, max_epochs: scores.len(), patience, ..TrainConfig::default() };
        let mut seen = Vec::new();
        let out = train_with(std::slice::from_ref(&tree), 3, &config, |_| {
            let s = f64::from(scores[seen.len()]);
            seen.push(s);
            Ok(s)
        }, |_| {}).unwrap();
        let best = seen.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(out.best_valid_top1, best);
        prop_assert_eq!(out.best_epoch, 1 + seen.iter().position(|&s| s == best).unwrap());
    }
}

#[test]
fn gradients_agree_up_to_roundoff() {
    // Bound absolute error by the tolerance plus the finite-difference noise
    // floor, so coordinates with tiny derivatives still count.
    for kind in ModelKind::ALL {
        for seed in 0..4 {
            let tree = random_tree(&mut rng(seed + 50), 8, 5);
            let m = random_model(kind, 5, 4, seed);
            for c in hlm::autodiff::gradient_pairs(m.params(), |t| m.loss_on(t, &tree).unwrap(), 1e-5) {
                let bound = 1e-4 * (c.analytic.abs() + c.numeric.abs()) + 1e-9;
                assert!((c.analytic - c.numeric).abs() <= bound, "{kind} seed {seed}: {c:?}");
            }
        }
    }
}

#[test]
fn k2_encoding_takes_one_step_each_way() {
    let tree = Tree::from_parent_links([(1, None), (2, Some(0)), (3, Some(0))].map(|(t, p)| (Token::known(t), p))).unwrap();
    let (store, p) = hlm_setup(4, 3, 0);
    let mut tape = Tape::new(&store);
    let table = encode_tree(&mut tape, &p.encoder, p.embedding, &tree).unwrap();
    assert_eq!((table.stats.forward_steps, table.stats.backward_steps, table.stats.visits), (1, 1, 3));
}

#[test]
fn single_example_loss_mostly_decreases() {
    let tree = random_tree(&mut rng(12), 30, 6);
    for kind in ModelKind::ALL {
        let mut trainer = Trainer::new(Model::new(kind, 6, 8, 1).unwrap(), Default::default());
        let losses: Vec<f64> = (0..50).map(|_| trainer.step(&tree).unwrap()).collect();
        let ups = losses.windows(2).filter(|w| w[1] > w[0]).count();
        assert!(ups * 100 <= 5 * (losses.len() - 1), "{kind}: {ups} increases");
        assert!(losses[49] < losses[0]);
    }
}

#[test]
fn training_is_bit_identical_for_a_seed() {
    let trees: Vec<EncodedTree> = (0..4).map(|i| random_tree(&mut rng(i), 12, 5)).collect();
    for kind in ModelKind::ALL {
        let config = TrainConfig { model: kind, dim: 4, seed: 9, max_epochs: 3, ..TrainConfig::default() };
        let run = || train_with(&trees, 5, &config, |m| Ok(evaluate(m, &trees[..2], "v", 1).unwrap().top1), |_| {}).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.model, b.model);
        assert_eq!(a.log, b.log);
    }
}

#[test]
fn evaluate_is_pure() {
    let trees: Vec<EncodedTree> = (0..6).map(|i| random_tree(&mut rng(i), 20, 7)).collect();
    let model = random_model(ModelKind::Hlm, 7, 4, 2);
    let first = evaluate(&model, &trees, "x", 1).unwrap();
    assert_eq!(first, evaluate(&model, &trees, "x", 1).unwrap());
    assert_eq!(first, evaluate(&model, &trees, "x", 4).unwrap());
}
