//! Ranking metrics, the rule-based ranker, grid sweeps and result tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{to_examples, CandidateSet, Dialog};
use crate::error::{Error, Result};
use crate::simulator::OracleBot;

/// Anything that scores the full candidate set for every bot turn.
pub trait Ranker: Sync {
    fn name(&self) -> String;

    /// One score vector over all candidates per bot turn of the dialog.
    fn score_dialog(&self, dialog: &Dialog) -> Result<Vec<Vec<f64>>>;
}

/// Zero-based rank of the gold candidate. Higher scores come first; equal
/// scores are ordered by candidate index.
pub fn gold_rank(scores: &[f64], gold: usize) -> usize {
    let g = scores[gold];
    scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s > g || (s == g && j < gold))
        .count()
}

/// Candidate indices from best to worst under the same total order.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Gold ranks of every example, grouped by dialog.
pub fn dialog_ranks(ranker: &dyn Ranker, dialogs: &[Dialog], candidates: &CandidateSet) -> Result<Vec<Vec<usize>>> {
    crate::parallel::try_map(dialogs, |d| {
        let scores = ranker.score_dialog(d)?;
        let examples = to_examples(d);
        if scores.len() != examples.len() {
            return Err(Error::InvalidInput(format!(
                "{} returned {} score vectors for {} examples",
                ranker.name(),
                scores.len(),
                examples.len()
            )));
        }
        examples
            .iter()
            .zip(&scores)
            .map(|(ex, s)| Ok(gold_rank(s, candidates.gold_index(ex.gold)?)))
            .collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_response: f64,
    pub per_dialog: f64,
    pub top_k: Option<f64>,
    pub k: usize,
    pub n_examples: usize,
    pub n_dialogs: usize,
}

pub fn metrics_from_ranks(ranks: &[Vec<usize>], k: usize) -> Metrics {
    let n_examples: usize = ranks.iter().map(Vec::len).sum();
    let hits: usize = ranks.iter().flatten().filter(|&&r| r == 0).count();
    let top: usize = ranks.iter().flatten().filter(|&&r| r < k).count();
    let perfect = ranks.iter().filter(|d| d.iter().all(|&r| r == 0)).count();
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Metrics {
        per_response: frac(hits, n_examples),
        per_dialog: frac(perfect, ranks.len()),
        top_k: (k > 1).then(|| frac(top, n_examples)),
        k,
        n_examples,
        n_dialogs: ranks.len(),
    }
}

pub fn evaluate(ranker: &dyn Ranker, dialogs: &[Dialog], candidates: &CandidateSet, k: usize) -> Result<Metrics> {
    Ok(metrics_from_ranks(&dialog_ranks(ranker, dialogs, candidates)?, k))
}

pub fn per_response_accuracy(ranker: &dyn Ranker, dialogs: &[Dialog], candidates: &CandidateSet) -> Result<f64> {
    Ok(evaluate(ranker, dialogs, candidates, 1)?.per_response)
}

pub fn per_dialog_accuracy(ranker: &dyn Ranker, dialogs: &[Dialog], candidates: &CandidateSet) -> Result<f64> {
    Ok(evaluate(ranker, dialogs, candidates, 1)?.per_dialog)
}

pub fn top_k_accuracy(ranker: &dyn Ranker, dialogs: &[Dialog], candidates: &CandidateSet, k: usize) -> Result<f64> {
    let m = evaluate(ranker, dialogs, candidates, k)?;
    Ok(m.top_k.unwrap_or(m.per_response))
}

/// The rule-based system as a ranker: score 1 for its answer, 0 elsewhere.
pub struct OracleRanker<'a> {
    pub bot: &'a OracleBot,
    pub candidates: &'a CandidateSet,
}

impl Ranker for OracleRanker<'_> {
    fn name(&self) -> String {
        "rule_based".into()
    }

    fn score_dialog(&self, dialog: &Dialog) -> Result<Vec<Vec<f64>>> {
        to_examples(dialog)
            .iter()
            .map(|ex| {
                let answer = self.bot.respond(ex.history)?;
                let mut s = vec![0.0; self.candidates.len()];
                if let Some(j) = self.candidates.index_of(&answer) {
                    s[j] = 1.0;
                }
                Ok(s)
            })
            .collect()
    }
}

/// One point of a hyperparameter grid. Fields a model does not use are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lr: f64,
    pub margin: f64,
    pub dim: usize,
    pub negatives: usize,
    pub hops: usize,
    pub use_history: bool,
}

impl GridPoint {
    fn preference_key(&self) -> (usize, usize, f64) {
        (self.dim, self.hops, self.lr)
    }
}

/// Best settings per task for supervised embeddings.
pub const EMBEDDING_TABLE: [GridPoint; 5] = [
    GridPoint { lr: 0.01, margin: 0.01, dim: 32, negatives: 100, hops: 0, use_history: true },
    GridPoint { lr: 0.01, margin: 0.01, dim: 128, negatives: 100, hops: 0, use_history: false },
    GridPoint { lr: 0.01, margin: 0.1, dim: 128, negatives: 1000, hops: 0, use_history: false },
    GridPoint { lr: 0.001, margin: 0.1, dim: 128, negatives: 1000, hops: 0, use_history: false },
    GridPoint { lr: 0.01, margin: 0.01, dim: 32, negatives: 100, hops: 0, use_history: true },
];

/// Best settings per task for memory networks (the margin column is unused).
pub const MEMNN_TABLE: [GridPoint; 5] = [
    GridPoint { lr: 0.01, margin: 0.1, dim: 128, negatives: 100, hops: 1, use_history: true },
    GridPoint { lr: 0.01, margin: 0.1, dim: 32, negatives: 100, hops: 1, use_history: true },
    GridPoint { lr: 0.01, margin: 0.1, dim: 32, negatives: 100, hops: 3, use_history: true },
    GridPoint { lr: 0.01, margin: 0.1, dim: 128, negatives: 100, hops: 2, use_history: true },
    GridPoint { lr: 0.01, margin: 0.1, dim: 32, negatives: 100, hops: 3, use_history: true },
];

/// Settings used for dialog-state-tracking style data.
pub const MEMNN_DSTC_ROW: GridPoint = GridPoint { lr: 0.01, margin: 0.1, dim: 128, negatives: 100, hops: 4, use_history: true };
pub const EMBEDDING_DSTC_ROW: GridPoint = GridPoint { lr: 0.001, margin: 0.01, dim: 128, negatives: 100, hops: 0, use_history: false };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    RuleBased,
    TfIdf,
    NearestNeighbor,
    Embeddings,
    MemNN,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::RuleBased => "rule_based",
            ModelKind::TfIdf => "tfidf",
            ModelKind::NearestNeighbor => "nearest_neighbor",
            ModelKind::Embeddings => "embeddings",
            ModelKind::MemNN => "memnn",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        [
            ModelKind::RuleBased,
            ModelKind::TfIdf,
            ModelKind::NearestNeighbor,
            ModelKind::Embeddings,
            ModelKind::MemNN,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }

    pub fn is_learned(self) -> bool {
        matches!(self, ModelKind::Embeddings | ModelKind::MemNN)
    }
}

/// The shipped grid for a learned model: the task's own table row first, then
/// the other table rows (including the dialog-state-tracking row) and a few
/// neighboring values.
pub fn default_grid(kind: ModelKind, task: u8) -> Vec<GridPoint> {
    let mut grid = Vec::new();
    let mut push = |p: GridPoint| {
        if !grid.contains(&p) {
            grid.push(p);
        }
    };
    let own = (1..=5).contains(&task).then(|| task as usize - 1);
    match kind {
        ModelKind::Embeddings => {
            if let Some(i) = own {
                push(EMBEDDING_TABLE[i]);
            }
            for row in EMBEDDING_TABLE.iter().chain([&EMBEDDING_DSTC_ROW]) {
                push(*row);
            }
            for lr in [0.01, 0.001] {
                for dim in [32, 128] {
                    for use_history in [true, false] {
                        push(GridPoint { lr, margin: 0.01, dim, negatives: 100, hops: 0, use_history });
                    }
                }
            }
        }
        ModelKind::MemNN => {
            if let Some(i) = own {
                push(MEMNN_TABLE[i]);
            }
            for row in MEMNN_TABLE.iter().chain([&MEMNN_DSTC_ROW]) {
                push(*row);
            }
            for dim in [32, 128] {
                for hops in 1..=3 {
                    push(GridPoint { lr: 0.01, margin: 0.1, dim, negatives: 100, hops, use_history: true });
                }
            }
        }
        _ => {}
    }
    grid
}

#[derive(Debug, Clone)]
pub struct SweepOutcome<M> {
    pub best: GridPoint,
    pub best_score: f64,
    pub model: M,
    /// Validation per-response accuracy of every grid point, in grid order.
    pub scores: Vec<(GridPoint, f64)>,
}

/// Trains every grid point and keeps the one with the best validation score.
/// Ties prefer smaller dimension, then fewer hops, then lower learning rate.
pub fn sweep<M, F>(grid: &[GridPoint], mut train_and_validate: F) -> Result<SweepOutcome<M>>
where
    F: FnMut(&GridPoint) -> Result<(M, f64)>,
{
    let mut best: Option<(GridPoint, f64, M)> = None;
    let mut scores = Vec::with_capacity(grid.len());
    for p in grid {
        let (model, score) = train_and_validate(p)?;
        scores.push((*p, score));
        let better = match &best {
            None => true,
            Some((bp, bs, _)) => {
                score > *bs
                    || (score == *bs && p.preference_key().partial_cmp(&bp.preference_key()) == Some(std::cmp::Ordering::Less))
            }
        };
        if better {
            best = Some((*p, score, model));
        }
    }
    let (best, best_score, model) = best.ok_or_else(|| Error::InvalidInput("empty hyperparameter grid".into()))?;
    Ok(SweepOutcome {
        best,
        best_score,
        model,
        scores,
    })
}

/// Short stable hash of a configuration description.
pub fn fingerprint(config: &str) -> String {
    let d = Sha256::digest(config.as_bytes());
    d[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// One line of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task: String,
    pub model: String,
    pub variant: String,
    pub split: String,
    pub per_response: f64,
    pub per_dialog: f64,
    pub top_k: Option<f64>,
    pub seed: u64,
    pub wall_time_s: f64,
    pub fingerprint: String,
}

pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?)
}

/// Markdown table: one line per (task, split), one column per model variant,
/// cells `per-response (per-dialog)` in percent.
pub fn markdown(rows: &[ResultRow]) -> String {
    let mut columns: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), BTreeMap<String, String>> = BTreeMap::new();
    for r in rows {
        let col = if r.variant.is_empty() {
            r.model.clone()
        } else {
            format!("{} [{}]", r.model, r.variant)
        };
        if !columns.contains(&col) {
            columns.push(col.clone());
        }
        cells
            .entry((r.task.clone(), r.split.clone()))
            .or_default()
            .insert(col, format!("{:.1} ({:.1})", 100.0 * r.per_response, 100.0 * r.per_dialog));
    }
    let mut out = String::new();
    let _ = writeln!(out, "| task | split | {} |", columns.join(" | "));
    let _ = writeln!(out, "|---|---|{}", "---|".repeat(columns.len()));
    for ((task, split), row) in &cells {
        let vals: Vec<&str> = columns.iter().map(|c| row.get(c).map_or("", String::as_str)).collect();
        let _ = writeln!(out, "| {task} | {split} | {} |", vals.join(" | "));
    }
    out
}
