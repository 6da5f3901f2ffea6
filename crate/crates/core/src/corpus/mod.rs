//! Corpus ingestion and preparation: the JSONL tree format, size filters,
//! file scoring, seeded train/valid/test splits, vocabulary construction
//! and a grammar-driven synthetic generator.
//!
//! # JSONL format
//!
//! One tree per line:
//!
//! ```text
//! {"tokens":["if",">","a","b"],"parents":[-1,0,1,1]}
//! {"tokens":["f"],"parents":[-1],"meta":{"file":"A.java","project":"demo"}}
//! ```
//!
//! `tokens` lists node tokens in pre-order, `parents` gives each node's
//! parent as a pre-order index (`-1` for the root), and the optional `meta`
//! object records provenance. Children keep the order in which they appear
//! among nodes sharing a parent.

mod split;
pub mod synth;
mod vocab;

pub use split::{permutation, split_corpus, split_indices, CorpusSplit, SplitManifest, SplitRatios, DEFAULT_RATIOS};
pub use synth::{synth_generate, GrammarConfig};
pub use vocab::{EncodedTree, Token, Vocab, DEFAULT_UNK_K, UNK};

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{Ast, TreeError, TreeMeta};

pub const DEFAULT_MIN_NODES: usize = 100;
pub const DEFAULT_MAX_NODES: usize = 10_000;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: invalid tree: {reason}")]
    InvalidTree { line: usize, reason: String },
    #[error("cannot score a file with no functions")]
    EmptyFile,
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("split ratios {0:?} must be non-negative and sum to 1")]
    BadRatios([f64; 3]),
    #[error("unk_k must be between 1 and 3, got {0}")]
    BadUnkK(usize),
    #[error("grammar cannot produce the requested trees: {0}")]
    GrammarUnsatisfiable(String),
    #[error("invalid grammar: {0}")]
    GrammarInvalid(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Serialize, Deserialize)]
struct AstRecord {
    tokens: Vec<String>,
    parents: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<TreeMeta>,
}

/// Parses one JSONL line. `line` is 1-based and only used in errors.
pub fn parse_line(text: &str, line: usize) -> Result<Ast, CorpusError> {
    let record: AstRecord = serde_json::from_str(text).map_err(|e| CorpusError::Parse { line, message: e.to_string() })?;
    if record.tokens.len() != record.parents.len() {
        return Err(CorpusError::InvalidTree {
            line,
            reason: format!("{} tokens but {} parents", record.tokens.len(), record.parents.len()),
        });
    }
    let mut links = Vec::with_capacity(record.tokens.len());
    for (i, (tok, &p)) in record.tokens.into_iter().zip(&record.parents).enumerate() {
        let parent = match p {
            -1 => None,
            p if p >= 0 => Some(p as usize),
            p => {
                return Err(CorpusError::InvalidTree { line, reason: format!("entry {i} has parent {p}") });
            }
        };
        links.push((tok, parent));
    }
    let mut ast = Ast::build(links).map_err(|e: TreeError| CorpusError::InvalidTree { line, reason: e.to_string() })?;
    ast.meta = record.meta;
    Ok(ast)
}

/// Canonical single-line encoding of a tree (no trailing newline).
pub fn to_line(ast: &Ast) -> String {
    let record = AstRecord {
        tokens: ast.flatten().into_iter().cloned().collect(),
        parents: ast.parent_indices().into_iter().map(|p| p.map_or(-1, |p| p as i64)).collect(),
        meta: ast.meta.clone(),
    };
    serde_json::to_string(&record).expect("string fields always serialize")
}

/// Reads every non-blank line of a JSONL corpus file.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Ast>, CorpusError> {
    let path = path.as_ref();
    let io = |source| CorpusError::Io { path: path.display().to_string(), source };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut trees = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        trees.push(parse_line(&line, i + 1)?);
    }
    Ok(trees)
}

pub fn save_corpus(path: impl AsRef<Path>, trees: &[Ast]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let io = |source| CorpusError::Io { path: path.display().to_string(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for t in trees {
        writeln!(out, "{}", to_line(t)).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Keeps trees whose node count lies in `[min_nodes, max_nodes]`.
pub fn filter_functions(trees: Vec<Ast>, min_nodes: usize, max_nodes: usize) -> Vec<Ast> {
    trees.into_iter().filter(|t| (min_nodes..=max_nodes).contains(&t.len())).collect()
}

/// Mean number of nodes per function in one source file.
pub fn score_file(functions: &[Ast]) -> Result<f64, CorpusError> {
    if functions.is_empty() {
        return Err(CorpusError::EmptyFile);
    }
    let total: usize = functions.iter().map(|t| t.len()).sum();
    Ok(total as f64 / functions.len() as f64)
}

/// Picks files in descending score order (ties by name) until their
/// serialized size reaches `byte_budget`. Files that cannot be scored are
/// skipped.
pub fn select_top_scored<'a>(files: &'a [(String, Vec<Ast>)], byte_budget: usize) -> Vec<&'a (String, Vec<Ast>)> {
    let mut scored: Vec<(f64, &(String, Vec<Ast>))> =
        files.iter().filter_map(|f| score_file(&f.1).ok().map(|s| (s, f))).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1 .0.cmp(&b.1 .0)));
    let mut used = 0;
    let mut picked = Vec::new();
    for (_, file) in scored {
        if used >= byte_budget {
            break;
        }
        used += file.1.iter().map(|t| to_line(t).len() + 1).sum::<usize>();
        picked.push(file);
    }
    picked
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize) -> Ast {
        Ast::build((0..n).map(|i| (format!("t{}", i % 7), i.checked_sub(1)))).unwrap()
    }

    #[test]
    fn single_line() {
        let t = parse_line(r#"{"tokens":["if"],"parents":[-1]}"#, 1).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.token(t.root()), "if");
    }

    #[test]
    fn cycle_is_invalid() {
        let err = parse_line(r#"{"tokens":["a","b","c"],"parents":[-1,2,1]}"#, 4).unwrap_err();
        assert!(matches!(err, CorpusError::InvalidTree { line: 4, .. }), "{err}");
    }

    #[test]
    fn malformed_lines() {
        assert!(matches!(parse_line("{nope", 2), Err(CorpusError::Parse { line: 2, .. })));
        assert!(matches!(parse_line(r#"{"tokens":["a"],"parents":[-1,0]}"#, 1), Err(CorpusError::InvalidTree { .. })));
        assert!(matches!(parse_line(r#"{"tokens":["a","b"],"parents":[-1,-3]}"#, 1), Err(CorpusError::InvalidTree { .. })));
    }

    #[test]
    fn fig1_round_trip() {
        let line = r#"{"tokens":["if",">","a","b","=","a","+","b","5"],"parents":[-1,0,1,1,0,4,4,6,6]}"#;
        let t = parse_line(line, 1).unwrap();
        assert_eq!(to_line(&t), line);
        let with_meta = r#"{"tokens":["f"],"parents":[-1],"meta":{"file":"A.java","project":"p"}}"#;
        assert_eq!(to_line(&parse_line(with_meta, 1).unwrap()), with_meta);
    }

    #[test]
    fn file_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let text = "{\"tokens\":[\"if\",\">\",\"a\"],\"parents\":[-1,0,1]}\n{\"tokens\":[\"x\"],\"parents\":[-1]}\n";
        std::fs::write(&path, text).unwrap();
        let trees = load_corpus(&path).unwrap();
        let out = dir.path().join("d.jsonl");
        save_corpus(&out, &trees).unwrap();
        assert_eq!(std::fs::read_to_string(out).unwrap(), text);
    }

    #[test]
    fn filter_bounds_are_inclusive() {
        let kept = filter_functions(vec![chain(99), chain(100), chain(10_000), chain(10_001)], 100, 10_000);
        let sizes: Vec<_> = kept.iter().map(|t| t.len()).collect();
        assert_eq!(sizes, vec![100, 10_000]);
    }

    #[test]
    fn scoring() {
        assert_eq!(score_file(&[chain(150)]).unwrap(), 150.0);
        assert_eq!(score_file(&[chain(100), chain(200)]).unwrap(), 150.0);
        assert!(matches!(score_file(&[]), Err(CorpusError::EmptyFile)));
    }

    #[test]
    fn top_scored_selection_prefers_long_functions() {
        let files =
            vec![("a".to_string(), vec![chain(3)]), ("b".to_string(), vec![chain(9), chain(7)]), ("c".to_string(), vec![])];
        let picked = select_top_scored(&files, 1);
        assert_eq!(picked.len(), 1);
        assert_eq!(picked[0].0, "b");
        assert_eq!(select_top_scored(&files, usize::MAX).len(), 2);
    }
}
