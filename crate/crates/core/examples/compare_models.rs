//! Trains all three models on clean code and tests them on code whose
//! identifiers were partly renamed.

use hlm::corpus::synth::GrammarConfig;
use hlm::corpus::{split_indices, synth_generate, EncodedTree, Vocab, DEFAULT_RATIOS};
use hlm::eval::{evaluate, ReportTable};
use hlm::model::ModelKind;
use hlm::train::{train, TrainConfig};
use hlm::tree::Ast;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = 1;
    let grammar = GrammarConfig::java_like().with_bounds(100, 300).with_seed(seed);
    let clean = synth_generate(&grammar, 120)?;
    let renamed = synth_generate(&grammar.clone().with_rename_fraction(0.3), 120)?;
    let [tr, va, te] = split_indices(clean.len(), DEFAULT_RATIOS, seed)?;
    let vocab = Vocab::build(tr.iter().map(|&i| &clean[i]), 3)?;
    let encode = |idx: &[usize], src: &[Ast]| -> Vec<EncodedTree> { idx.iter().map(|&i| vocab.encode_tree(&src[i])).collect() };
    let (train_set, valid_set) = (encode(&tr, &clean), encode(&va, &clean));
    let (clean_test, renamed_test) = (encode(&te, &clean), encode(&te, &renamed));

    let mut rows = Vec::new();
    for kind in ModelKind::ALL {
        let config = TrainConfig { model: kind, dim: 32, seed, max_epochs: 6, ..TrainConfig::default() };
        let model = train(&train_set, &valid_set, vocab.len(), &config)?.model;
        rows.push(evaluate(&model, &clean_test, "clean", 1)?);
        rows.push(evaluate(&model, &renamed_test, "renamed", 1)?);
    }
    print!("{}", ReportTable::new(rows).render());
    Ok(())
}
