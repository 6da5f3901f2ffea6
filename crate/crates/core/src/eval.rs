//! Top-k accuracy and mean reciprocal rank, micro-averaged over nodes.
//!
//! A node counts as a top-k hit when its token is in vocabulary and ranks
//! within the first `k`. Out-of-vocabulary nodes stay in the denominator,
//! never hit, and contribute a reciprocal rank of zero.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::EncodedTree;
use crate::decoder::Prediction;
use crate::model::{Model, ModelError, ModelKind};

pub const CUTOFFS: [usize; 4] = [1, 3, 6, 10];
pub const REPORT_SCHEMA: &str = "hlm-report/v1";

/// Raw counts; merging is exact except for the reciprocal-rank sum, which
/// is always merged in tree order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub nodes: usize,
    pub oov: usize,
    pub hits: [usize; 4],
    pub reciprocal_sum: f64,
}

impl Tally {
    pub fn record(&mut self, rank: usize, oov: bool) {
        self.nodes += 1;
        if oov {
            self.oov += 1;
            return;
        }
        for (h, &k) in self.hits.iter_mut().zip(&CUTOFFS) {
            if rank <= k {
                *h += 1;
            }
        }
        self.reciprocal_sum += 1.0 / rank as f64;
    }

    pub fn merge(&mut self, other: &Tally) {
        self.nodes += other.nodes;
        self.oov += other.oov;
        for (a, b) in self.hits.iter_mut().zip(&other.hits) {
            *a += b;
        }
        self.reciprocal_sum += other.reciprocal_sum;
    }

    pub fn of(predictions: &[Prediction]) -> Tally {
        let mut t = Tally::default();
        for p in predictions {
            t.record(p.rank, p.oov);
        }
        t
    }

    /// Percentage of nodes hit within `CUTOFFS[i]`.
    pub fn accuracy(&self, i: usize) -> f64 {
        if self.nodes == 0 {
            0.0
        } else {
            100.0 * self.hits[i] as f64 / self.nodes as f64
        }
    }

    pub fn mrr(&self) -> f64 {
        if self.nodes == 0 {
            0.0
        } else {
            self.reciprocal_sum / self.nodes as f64
        }
    }
}

/// How the numbers in a report were computed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalManifest {
    pub averaging: String,
    pub root_predicted: bool,
    pub oov_policy: String,
    pub tie_break: String,
}

impl Default for EvalManifest {
    fn default() -> Self {
        EvalManifest {
            averaging: "micro over nodes".to_string(),
            root_predicted: true,
            oov_policy: "counted, never a hit, reciprocal rank 0".to_string(),
            tie_break: "ascending token id".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub model: ModelKind,
    pub top1: f64,
    pub top3: f64,
    pub top6: f64,
    pub top10: f64,
    pub mrr: f64,
    pub nodes: usize,
    pub oov: usize,
    pub manifest: EvalManifest,
}

impl EvalReport {
    pub fn from_tally(dataset: impl Into<String>, model: ModelKind, t: &Tally) -> Self {
        EvalReport {
            dataset: dataset.into(),
            model,
            top1: t.accuracy(0),
            top3: t.accuracy(1),
            top6: t.accuracy(2),
            top10: t.accuracy(3),
            mrr: t.mrr(),
            nodes: t.nodes,
            oov: t.oov,
            manifest: EvalManifest::default(),
        }
    }
}

/// Node-level tally over `trees`, spread across `workers` threads.
///
/// Per-tree tallies are merged in input order, so the result does not
/// depend on `workers`.
pub fn evaluate_tally(model: &Model, trees: &[EncodedTree], workers: usize) -> Result<Tally, ModelError> {
    let per_tree = |t: &EncodedTree| model.predictions(t).map(|p| Tally::of(&p));
    let tallies: Vec<Tally> = if workers <= 1 {
        trees.iter().map(per_tree).collect::<Result<_, _>>()?
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(|| trees.par_iter().map(per_tree).collect::<Result<_, _>>())?,
            Err(_) => trees.iter().map(per_tree).collect::<Result<_, _>>()?,
        }
    };
    let mut total = Tally::default();
    for t in &tallies {
        total.merge(t);
    }
    Ok(total)
}

pub fn evaluate(model: &Model, trees: &[EncodedTree], dataset: &str, workers: usize) -> Result<EvalReport, ModelError> {
    Ok(EvalReport::from_tally(dataset, model.kind, &evaluate_tally(model, trees, workers)?))
}

/// Reports grouped by dataset (first appearance order), then RNN, LSTM, HLM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub schema: String,
    pub rows: Vec<EvalReport>,
}

impl ReportTable {
    pub fn new(mut rows: Vec<EvalReport>) -> Self {
        let mut datasets: Vec<String> = Vec::new();
        for r in &rows {
            if !datasets.contains(&r.dataset) {
                datasets.push(r.dataset.clone());
            }
        }
        rows.sort_by_key(|r| (datasets.iter().position(|d| *d == r.dataset), r.model));
        ReportTable { schema: REPORT_SCHEMA.to_string(), rows }
    }

    pub fn render(&self) -> String {
        let ds_width = self.rows.iter().map(|r| r.dataset.len()).max().unwrap_or(0).max(2);
        let mut out = format!(
            "{:<ds_width$}  {:<4}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}\n",
            "DS", "MD", "top1", "top3", "top6", "top10", "mrr"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<ds_width$}  {:<4}  {:>6.2}  {:>6.2}  {:>6.2}  {:>6.2}  {:>6.4}",
                r.dataset,
                r.model.to_string(),
                r.top1,
                r.top3,
                r.top6,
                r.top10,
                r.mrr
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<ReportTable, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tally(ranks: &[(usize, bool)]) -> Tally {
        let mut t = Tally::default();
        for &(r, o) in ranks {
            t.record(r, o);
        }
        t
    }

    #[test]
    fn hand_computed_ranks() {
        let r = EvalReport::from_tally("d", ModelKind::Hlm, &tally(&[(1, false), (3, false), (11, false)]));
        assert!((r.top1 - 100.0 / 3.0).abs() < 1e-12);
        assert!((r.top3 - 200.0 / 3.0).abs() < 1e-12);
        assert!((r.top10 - 200.0 / 3.0).abs() < 1e-12);
        assert!((r.mrr - (1.0 + 1.0 / 3.0 + 1.0 / 11.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn all_oov_scores_zero() {
        let r = EvalReport::from_tally("d", ModelKind::Lstm, &tally(&[(1, true), (1, true)]));
        assert_eq!((r.top1, r.top10, r.mrr, r.oov), (0.0, 0.0, 0.0, 2));
    }

    #[test]
    fn perfect_predictor() {
        let r = EvalReport::from_tally("d", ModelKind::Rnn, &tally(&[(1, false); 5]));
        assert_eq!((r.top1, r.mrr), (100.0, 1.0));
    }

    #[test]
    fn table_order_and_round_trip() {
        let mk = |ds: &str, m| EvalReport::from_tally(ds, m, &tally(&[(2, false)]));
        let t = ReportTable::new(vec![
            mk("b", ModelKind::Hlm),
            mk("a", ModelKind::Hlm),
            mk("b", ModelKind::Rnn),
            mk("b", ModelKind::Lstm),
        ]);
        let order: Vec<(&str, ModelKind)> = t.rows.iter().map(|r| (r.dataset.as_str(), r.model)).collect();
        assert_eq!(order, vec![("b", ModelKind::Rnn), ("b", ModelKind::Lstm), ("b", ModelKind::Hlm), ("a", ModelKind::Hlm)]);
        let back = ReportTable::from_json(&t.to_json()).unwrap();
        assert_eq!(back.render(), t.render());
        assert_eq!(t.render().lines().count(), 5);
    }
}
