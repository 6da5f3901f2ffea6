use rand::RngCore;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::tree::Ast;

/// Train, validation and test fractions.
pub type SplitRatios = [f64; 3];

pub const DEFAULT_RATIOS: SplitRatios = [0.60, 0.15, 0.25];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: SplitRatios,
    pub sizes: [usize; 3],
    pub shuffle: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<Ast>,
    pub valid: Vec<Ast>,
    pub test: Vec<Ast>,
    pub manifest: SplitManifest,
}

const SHUFFLE_ALGORITHM: &str = "xoshiro256++ seeded via splitmix64(seed); \
    fisher-yates from the last index down, j = next_u64() % (i + 1); \
    train = round(n * r0), valid = min(round(n * r1), n - train), test = rest";

fn check_ratios(ratios: SplitRatios) -> Result<(), CorpusError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(*r >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios(ratios));
    }
    Ok(())
}

/// A seeded Fisher-Yates permutation of `0..n`: xoshiro256++ seeded with
/// `seed` (state expanded by splitmix64), swapping positions `i` and
/// `next_u64() % (i + 1)` for `i` from `n - 1` down to `1`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    for i in (1..n).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    order
}

/// Shuffled index lists for a corpus of `n` trees.
///
/// [`permutation`]`(n, seed)` is cut into contiguous
/// train, validation and test blocks of `round(n * r0)`,
/// `round(n * r1)` (capped by what remains) and the remainder.
pub fn split_indices(n: usize, ratios: SplitRatios, seed: u64) -> Result<[Vec<usize>; 3], CorpusError> {
    check_ratios(ratios)?;
    let mut order = permutation(n, seed);
    let train = ((n as f64 * ratios[0]).round() as usize).min(n);
    let valid = ((n as f64 * ratios[1]).round() as usize).min(n - train);
    let test = order.split_off(train + valid);
    let valid_idx = order.split_off(train);
    Ok([order, valid_idx, test])
}

pub fn split_corpus(trees: Vec<Ast>, ratios: SplitRatios, seed: u64) -> Result<CorpusSplit, CorpusError> {
    let [train_idx, valid_idx, test_idx] = split_indices(trees.len(), ratios, seed)?;
    let mut slots: Vec<Option<Ast>> = trees.into_iter().map(Some).collect();
    let mut take =
        |idx: &[usize]| -> Vec<Ast> { idx.iter().map(|&i| slots[i].take().expect("indices form a permutation")).collect() };
    let (train, valid, test) = (take(&train_idx), take(&valid_idx), take(&test_idx));
    let manifest =
        SplitManifest { seed, ratios, sizes: [train.len(), valid.len(), test.len()], shuffle: SHUFFLE_ALGORITHM.to_string() };
    Ok(CorpusSplit { train, valid, test, manifest })
}
