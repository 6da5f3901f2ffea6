//! Trains a small model, saves it, reloads it and suggests the next node
//! for a partial method body.

use hlm::checkpoint::Checkpoint;
use hlm::corpus::synth::GrammarConfig;
use hlm::corpus::{synth_generate, Vocab};
use hlm::model::ModelKind;
use hlm::train::{train, TrainConfig};
use hlm::tree::{Ast, NodeId};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trees = synth_generate(&GrammarConfig::java_like().with_bounds(100, 200).with_seed(5), 80)?;
    let vocab = Vocab::build(&trees[..60], 2)?;
    let encoded: Vec<_> = trees.iter().map(|t| vocab.encode_tree(t)).collect();
    let config = TrainConfig { model: ModelKind::Hlm, dim: 32, seed: 5, max_epochs: 6, patience: 2, ..TrainConfig::default() };
    let model = train(&encoded[..60], &encoded[60..70], vocab.len(), &config)?.model;

    let path = std::env::temp_dir().join("hlm-complete-example.ckpt");
    Checkpoint { model, vocab: Some(vocab) }.save(&path)?;
    let Checkpoint { model, vocab } = Checkpoint::load(&path)?;
    let vocab = vocab.expect("saved with vocabulary");

    // The first few nodes of a generated method, cut after its sixth node.
    let source = &trees[75];
    let keep = 6.min(source.len());
    let prefix = Ast::build((0..keep).map(|i| {
        let id = NodeId(i);
        (source.token(id).clone(), source.parent(id).map(NodeId::index))
    }))?;
    let parent = *prefix.rightmost_path().last().expect("non-empty");
    println!("prefix: {:?}", prefix.flatten());
    for c in model.complete(&vocab.encode_tree(&prefix), parent, 5)? {
        println!("{:>24}  {:.3}", vocab.decode(c.id), c.prob);
    }
    std::fs::remove_file(&path)?;
    Ok(())
}
