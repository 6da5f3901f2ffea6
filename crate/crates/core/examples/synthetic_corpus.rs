//! Generates a small Java-like corpus, splits it, and shows how renaming
//! identifiers turns test tokens into out-of-vocabulary ones.

use hlm::corpus::synth::GrammarConfig;
use hlm::corpus::{split_indices, synth_generate, to_line, Vocab, DEFAULT_RATIOS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grammar = GrammarConfig::java_like().with_bounds(100, 300).with_seed(7);
    let clean = synth_generate(&grammar, 40)?;
    let renamed = synth_generate(&grammar.clone().with_rename_fraction(0.3), 40)?;

    let [train, valid, test] = split_indices(clean.len(), DEFAULT_RATIOS, 7)?;
    println!("split: {} train, {} valid, {} test", train.len(), valid.len(), test.len());

    let vocab = Vocab::build(train.iter().map(|&i| &clean[i]), 3)?;
    println!("vocabulary: {} tokens, dropped {:?}", vocab.len(), vocab.dropped());

    for (name, trees) in [("clean", &clean), ("renamed", &renamed)] {
        let (mut nodes, mut oov) = (0, 0);
        for &i in &test {
            let encoded = vocab.encode_tree(&trees[i]);
            nodes += encoded.len();
            oov += encoded.flatten().iter().filter(|t| t.oov).count();
        }
        println!("{name:>8} test: {nodes} nodes, {:.1}% out of vocabulary", 100.0 * oov as f64 / nodes as f64);
    }

    let first = to_line(&clean[0]);
    println!("first tree as JSONL ({} bytes): {}...", first.len(), &first[..first.len().min(100)]);
    Ok(())
}
