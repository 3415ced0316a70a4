//! Pieces shared by the two learned models: negative sampling, training
//! curves and validation.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::features::EncodedDialog;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub val_per_response: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch of the returned snapshot (0 = initialization).
    pub best_epoch: usize,
    pub best_val: Option<f64>,
}

impl TrainLog {
    pub fn write_csv(&self, path: &std::path::Path) -> crate::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.epochs {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `n` distinct candidate indices other than `gold`, drawn uniformly out of
/// `num_candidates`. Returns every other candidate when `n` is too large.
pub fn sample_negatives<R: Rng + ?Sized>(rng: &mut R, num_candidates: usize, gold: usize, n: usize) -> Vec<usize> {
    let pool = num_candidates.saturating_sub(1);
    let shift = |i: usize| if i >= gold { i + 1 } else { i };
    if n >= pool {
        return (0..pool).map(shift).collect();
    }
    sample(rng, pool, n).into_iter().map(shift).collect()
}

/// (dialog, example) index pairs of a corpus.
pub fn example_ids(dialogs: &[EncodedDialog]) -> Vec<(usize, usize)> {
    dialogs
        .iter()
        .enumerate()
        .flat_map(|(i, d)| (0..d.examples.len()).map(move |j| (i, j)))
        .collect()
}

/// Whether validation runs after `epoch` (1-based).
pub fn is_eval_epoch(epoch: usize, eval_every: usize, epochs: usize) -> bool {
    epoch == epochs || (eval_every > 0 && epoch % eval_every == 0)
}

/// Fraction of examples whose gold candidate wins under `scores`.
pub fn accuracy<F>(dialogs: &[EncodedDialog], scores: F) -> f64
where
    F: Fn(&EncodedDialog, usize) -> Vec<f64> + Sync + Send,
{
    let per_dialog: Vec<(usize, usize)> = crate::parallel::map(dialogs, |d| {
        let hits = (0..d.examples.len())
            .filter(|&j| crate::eval::gold_rank(&scores(d, j), d.examples[j].gold) == 0)
            .count();
        (hits, d.examples.len())
    });
    let (hits, n) = per_dialog.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}
