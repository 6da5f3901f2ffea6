use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::tree::{Ast, Tree};

/// Placeholder for tokens missing from the vocabulary. Always id 0.
pub const UNK: &str = "<unk>";

pub const DEFAULT_UNK_K: usize = 3;

/// A vocabulary id plus whether the original token was out of vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Token {
    pub id: usize,
    pub oov: bool,
}

impl Token {
    pub fn known(id: usize) -> Self {
        Token { id, oov: false }
    }
}

pub type EncodedTree = Tree<Token>;

/// Token table built from training trees.
///
/// The `unk_k` rarest distinct tokens (ties broken lexicographically) are
/// left out and map to [`UNK`]. Remaining tokens get ids `1..` ordered by
/// descending frequency, then lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabRepr")]
pub struct Vocab {
    tokens: Vec<String>,
    /// Training-set frequency per id; the UNK entry sums the dropped tokens.
    frequencies: Vec<u64>,
    unk_k: usize,
    dropped: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

/// Serialized form; the lookup index is rebuilt on load.
#[derive(Deserialize)]
struct VocabRepr {
    tokens: Vec<String>,
    frequencies: Vec<u64>,
    unk_k: usize,
    dropped: Vec<String>,
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Self {
        let mut v =
            Vocab { tokens: r.tokens, frequencies: r.frequencies, unk_k: r.unk_k, dropped: r.dropped, index: HashMap::new() };
        v.reindex();
        v
    }
}

impl Vocab {
    pub fn build<'a, I>(train: I, unk_k: usize) -> Result<Vocab, CorpusError>
    where
        I: IntoIterator<Item = &'a Ast>,
    {
        if !(1..=3).contains(&unk_k) {
            return Err(CorpusError::BadUnkK(unk_k));
        }
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        let mut any = false;
        for tree in train {
            any = true;
            for tok in tree.flatten() {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        if !any {
            return Err(CorpusError::EmptyCorpus);
        }

        // BTreeMap iteration is lexicographic, and the sort is stable.
        let mut by_rarity: Vec<(&str, u64)> = counts.into_iter().collect();
        by_rarity.sort_by_key(|&(_, c)| c);
        // Keep at least one real token next to UNK.
        let k = unk_k.min(by_rarity.len().saturating_sub(1));
        let dropped: Vec<(&str, u64)> = by_rarity.drain(..k).collect();

        let mut kept = by_rarity;
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut tokens = vec![UNK.to_string()];
        let mut frequencies = vec![dropped.iter().map(|d| d.1).sum()];
        for (tok, c) in kept {
            tokens.push(tok.to_string());
            frequencies.push(c);
        }
        let mut vocab = Vocab {
            tokens,
            frequencies,
            unk_k,
            dropped: dropped.into_iter().map(|(t, _)| t.to_string()).collect(),
            index: HashMap::new(),
        };
        vocab.reindex();
        Ok(vocab)
    }

    fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().skip(1).map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn from_json(text: &str) -> Result<Vocab, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn unk_id(&self) -> usize {
        0
    }

    pub fn unk_k(&self) -> usize {
        self.unk_k
    }

    /// Tokens mapped to UNK when the table was built.
    pub fn dropped(&self) -> &[String] {
        &self.dropped
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn frequency(&self, id: usize) -> u64 {
        self.frequencies[id]
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn decode(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn encode(&self, token: &str) -> Token {
        match self.id(token) {
            Some(id) => Token::known(id),
            None => Token { id: self.unk_id(), oov: true },
        }
    }

    pub fn encode_tree(&self, tree: &Ast) -> EncodedTree {
        tree.map(|_, tok| self.encode(tok))
    }
}
