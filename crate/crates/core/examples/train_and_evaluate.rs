//! Trains the tree model on a synthetic corpus and reports top-k accuracy
//! on the held-out split.

use hlm::corpus::synth::GrammarConfig;
use hlm::corpus::{split_indices, synth_generate, EncodedTree, Vocab, DEFAULT_RATIOS};
use hlm::eval::{evaluate, ReportTable};
use hlm::model::ModelKind;
use hlm::train::{train_with, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let trees = synth_generate(&GrammarConfig::java_like().with_bounds(100, 200).with_seed(3), 60)?;
    let [tr, va, te] = split_indices(trees.len(), DEFAULT_RATIOS, 3)?;
    let vocab = Vocab::build(tr.iter().map(|&i| &trees[i]), 3)?;
    let encode = |idx: &[usize]| -> Vec<EncodedTree> { idx.iter().map(|&i| vocab.encode_tree(&trees[i])).collect() };
    let (train, valid, test) = (encode(&tr), encode(&va), encode(&te));

    let config = TrainConfig { model: ModelKind::Hlm, dim: 32, seed: 3, max_epochs: 8, patience: 2, ..TrainConfig::default() };
    let outcome = train_with(
        &train,
        vocab.len(),
        &config,
        |m| Ok(evaluate(m, &valid, "valid", 1).map_err(hlm::train::TrainError::from)?.top1),
        |log| {
            println!(
                "epoch {}: loss/node {:.3}, valid top-1 {:.2}%",
                log.epoch,
                log.mean_train_loss,
                log.valid_top1.unwrap_or(f64::NAN)
            )
        },
    )?;
    println!("best epoch {} (valid top-1 {:.2}%)", outcome.best_epoch, outcome.best_valid_top1);

    let report = evaluate(&outcome.model, &test, "SYN", 1)?;
    print!("{}", ReportTable::new(vec![report]).render());
    Ok(())
}
