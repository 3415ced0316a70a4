//! Supervised bag-of-embeddings scorer `f(x, y) = (A x) · (B y)` trained
//! with a margin ranking loss against sampled negative candidates.

use std::borrow::Cow;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Dialog;
use crate::dense::{add_bag, all_finite, clip_factor, dot, embed, embed_all, uniform_init, SparseGrad};
use crate::error::{Error, Result};
use crate::eval::{GridPoint, Ranker};
use crate::features::{BagOfWords, EncodedCandidates, EncodedDialog, EncodedExample, FeatureConfig, Resources, TypeSet};
use crate::training::{accuracy, example_ids, is_eval_epoch, sample_negatives, EpochRecord, TrainLog};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingHp {
    pub lr: f64,
    pub margin: f64,
    pub dim: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Share one matrix between inputs and candidates.
    pub tied: bool,
    /// Validate every this many epochs (the last epoch is always validated).
    pub eval_every: usize,
    pub init_scale: f64,
    /// Rescale any step whose gradient norm exceeds this value.
    pub max_grad_norm: Option<f64>,
}

impl Default for EmbeddingHp {
    fn default() -> Self {
        EmbeddingHp {
            lr: 0.01,
            margin: 0.01,
            dim: 32,
            negatives: 100,
            epochs: 100,
            seed: 0,
            tied: false,
            eval_every: 1,
            init_scale: 0.01,
            max_grad_norm: Some(1.0),
        }
    }
}

impl EmbeddingHp {
    pub fn from_grid(p: &GridPoint) -> EmbeddingHp {
        EmbeddingHp {
            lr: p.lr,
            margin: p.margin,
            dim: p.dim,
            negatives: p.negatives,
            ..EmbeddingHp::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.dim == 0 {
            return bad("embedding dimension must be at least 1");
        }
        if self.negatives == 0 {
            return bad("at least one negative candidate is required");
        }
        if !(self.margin > 0.0) {
            return bad("margin must be positive");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

/// Input and candidate embedding matrices, one row per vocabulary token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub a: Array2<f64>,
    /// `None` when tied to `a`.
    pub b: Option<Array2<f64>>,
    pub cfg: FeatureConfig,
    pub vocab_hash: String,
}

struct Hinge {
    loss: f64,
    ax: Array1<f64>,
    /// Sum over active negatives of `B ȳ − B y`.
    diff: Array1<f64>,
    active: Vec<usize>,
}

impl EmbeddingModel {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        vocab_size: usize,
        dim: usize,
        tied: bool,
        scale: f64,
        cfg: FeatureConfig,
        vocab_hash: String,
    ) -> EmbeddingModel {
        let a = uniform_init(rng, vocab_size, dim, scale);
        let b = (!tied).then(|| uniform_init(rng, vocab_size, dim, scale));
        EmbeddingModel { a, b, cfg, vocab_hash }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn vocab_size(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_tied(&self) -> bool {
        self.b.is_none()
    }

    /// Candidate-side matrix.
    pub fn b(&self) -> &Array2<f64> {
        self.b.as_ref().unwrap_or(&self.a)
    }

    pub fn score(&self, x: &BagOfWords, y: &BagOfWords) -> f64 {
        dot(&embed(&self.a, x).view(), &embed(self.b(), y).view())
    }

    fn hinge(&self, x: &BagOfWords, y: &BagOfWords, negatives: &[&BagOfWords], margin: f64) -> Hinge {
        let ax = embed(&self.a, x);
        let by = embed(self.b(), y);
        let pos = dot(&ax.view(), &by.view());
        let mut diff = Array1::zeros(self.dim());
        let mut loss = 0.0;
        let mut active = Vec::new();
        for (k, n) in negatives.iter().enumerate() {
            let bn = embed(self.b(), n);
            let l = margin - pos + dot(&ax.view(), &bn.view());
            if l > 0.0 {
                loss += l;
                active.push(k);
                diff += &bn;
                diff -= &by;
            }
        }
        Hinge { loss, ax, diff, active }
    }

    /// `Σ_ȳ max(0, m − f(x, y) + f(x, ȳ))`.
    pub fn loss(&self, x: &BagOfWords, y: &BagOfWords, negatives: &[&BagOfWords], margin: f64) -> f64 {
        self.hinge(x, y, negatives, margin).loss
    }

    /// Loss and its gradient with respect to `a` and `b` (`None` when tied,
    /// in which case everything is folded into the first matrix).
    pub fn gradient(
        &self,
        x: &BagOfWords,
        y: &BagOfWords,
        negatives: &[&BagOfWords],
        margin: f64,
    ) -> (f64, Array2<f64>, Option<Array2<f64>>) {
        let h = self.hinge(x, y, negatives, margin);
        let mut ga = Array2::zeros(self.a.raw_dim());
        let mut gb = self.b.as_ref().map(|b| Array2::zeros(b.raw_dim()));
        let g = sparse_gradient(&h, x, y, negatives, gb.is_none());
        match gb.as_mut() {
            Some(gb) => g.apply(&mut [&mut ga, gb], 1.0),
            None => g.apply(&mut [&mut ga], 1.0),
        }
        (h.loss, ga, gb)
    }

    /// One SGD step on a single example; returns the loss before the step.
    fn sgd_step(&mut self, x: &BagOfWords, y: &BagOfWords, negatives: &[&BagOfWords], hp: &EmbeddingHp) -> f64 {
        let h = self.hinge(x, y, negatives, hp.margin);
        if !h.active.is_empty() {
            let g = sparse_gradient(&h, x, y, negatives, self.b.is_none());
            let step = -hp.lr * clip_factor(g.norm_sq(), hp.max_grad_norm);
            match self.b.as_mut() {
                Some(b) => g.apply(&mut [&mut self.a, b], step),
                None => g.apply(&mut [&mut self.a], step),
            }
        }
        h.loss
    }

    /// Ranker over the full candidate set.
    pub fn ranker<'a>(&'a self, res: &'a Resources) -> EmbeddingRanker<'a> {
        let cands = res.encoder(self.cfg).candidates(&res.candidates);
        EmbeddingRanker::new(self, res, Cow::Owned(cands))
    }
}

fn sparse_gradient(h: &Hinge, x: &BagOfWords, y: &BagOfWords, negatives: &[&BagOfWords], tied: bool) -> SparseGrad {
    let mut g = SparseGrad::default();
    let b = if tied { 0 } else { 1 };
    g.add_bag(0, x, &h.diff.view(), 1.0);
    g.add_bag(b, y, &h.ax.view(), -(h.active.len() as f64));
    for &k in &h.active {
        g.add_bag(b, negatives[k], &h.ax.view(), 1.0);
    }
    g
}

/// Candidate bag with the type tokens of its match types.
pub(crate) fn typed_bag<'b>(bag: &'b BagOfWords, types: TypeSet, res: &Resources) -> Cow<'b, BagOfWords> {
    if types.is_empty() {
        return Cow::Borrowed(bag);
    }
    let mut b = bag.clone();
    for t in types.iter() {
        b.add(res.vocab.type_id(t), 1);
    }
    Cow::Owned(b)
}

/// Scores every candidate with precomputed candidate embeddings.
pub struct EmbeddingRanker<'a> {
    model: &'a EmbeddingModel,
    res: &'a Resources,
    cands: Cow<'a, EncodedCandidates>,
    cand_emb: Array2<f64>,
    type_emb: Vec<Array1<f64>>,
}

impl<'a> EmbeddingRanker<'a> {
    fn new(model: &'a EmbeddingModel, res: &'a Resources, cands: Cow<'a, EncodedCandidates>) -> Self {
        let cand_emb = embed_all(model.b(), &cands.bags);
        let type_emb = crate::kb::EntityType::ALL
            .iter()
            .map(|&t| model.b().row(res.vocab.type_id(t) as usize).to_owned())
            .collect();
        EmbeddingRanker {
            model,
            res,
            cands,
            cand_emb,
            type_emb,
        }
    }

    pub fn scores(&self, d: &EncodedDialog, ex: &EncodedExample) -> Vec<f64> {
        let cfg = &self.model.cfg;
        let ax = embed(&self.model.a, &d.flat_input(ex, cfg));
        let mut s = self.cand_emb.dot(&ax).to_vec();
        if cfg.match_type {
            let tdot: Vec<f64> = self.type_emb.iter().map(|t| dot(&t.view(), &ax.view())).collect();
            for (j, types) in self.cands.match_types(&ex.context_entities, cfg.match_type_no_history) {
                s[j as usize] += types.iter().map(|t| tdot[t.index()]).sum::<f64>();
            }
        }
        s
    }
}

impl Ranker for EmbeddingRanker<'_> {
    fn name(&self) -> String {
        let mut n = "embeddings".to_string();
        if self.model.cfg.match_type {
            n.push_str("+type");
        }
        n
    }

    fn score_dialog(&self, dialog: &Dialog) -> Result<Vec<Vec<f64>>> {
        let d = self.res.encoder(self.model.cfg).dialog(dialog, &self.res.candidates)?;
        Ok(d.examples.iter().map(|ex| self.scores(&d, ex)).collect())
    }
}

/// Trains on encoded dialogs (encoded with `cfg`) and returns the snapshot with
/// the best validation per-response accuracy.
pub fn train(
    train: &[EncodedDialog],
    val: &[EncodedDialog],
    cands: &EncodedCandidates,
    res: &Resources,
    cfg: FeatureConfig,
    hp: &EmbeddingHp,
) -> Result<(EmbeddingModel, TrainLog)> {
    hp.validate()?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut model = EmbeddingModel::new(
        &mut rng,
        res.vocab.len(),
        hp.dim,
        hp.tied,
        hp.init_scale,
        cfg,
        res.vocab.hash(),
    );
    let mut ids = example_ids(train);
    let inputs: Vec<Vec<BagOfWords>> = train
        .iter()
        .map(|d| d.examples.iter().map(|ex| d.flat_input(ex, &cfg)).collect())
        .collect();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, EmbeddingModel)> = None;
    let validate = |m: &EmbeddingModel| {
        let r = EmbeddingRanker::new(m, res, Cow::Borrowed(cands));
        accuracy(val, |d, j| r.scores(d, &d.examples[j]))
    };
    for epoch in 1..=hp.epochs {
        ids.shuffle(&mut rng);
        let mut total = 0.0;
        for (n, &(i, j)) in ids.iter().enumerate() {
            let ex = &train[i].examples[j];
            let types = if cfg.match_type {
                cands.match_types_dense(&ex.context_entities, cfg.match_type_no_history)
            } else {
                Vec::new()
            };
            let bag_of = |k: usize| typed_bag(&cands.bags[k], types.get(k).copied().unwrap_or_default(), res);
            let negs: Vec<Cow<BagOfWords>> = sample_negatives(&mut rng, cands.len(), ex.gold, hp.negatives)
                .into_iter()
                .map(bag_of)
                .collect();
            let neg_refs: Vec<&BagOfWords> = negs.iter().map(|c| c.as_ref()).collect();
            let loss = model.sgd_step(&inputs[i][j], &bag_of(ex.gold), &neg_refs, hp);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, example: n, loss });
            }
            total += loss;
        }
        if !all_finite(&model.a) || model.b.as_ref().is_some_and(|b| !all_finite(b)) {
            return Err(Error::NonFiniteLoss { epoch, example: ids.len(), loss: f64::NAN });
        }
        let mut rec = EpochRecord {
            epoch,
            mean_loss: total / ids.len().max(1) as f64,
            val_per_response: None,
        };
        if !val.is_empty() && is_eval_epoch(epoch, hp.eval_every, hp.epochs) {
            let acc = validate(&model);
            rec.val_per_response = Some(acc);
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, model.clone()));
                log.best_epoch = epoch;
                log.best_val = Some(acc);
            }
        }
        log.epochs.push(rec);
    }
    match best {
        Some((_, m)) => Ok((m, log)),
        None => {
            log.best_epoch = hp.epochs;
            Ok((model, log))
        }
    }
}

/// Encodes raw dialogs with `cfg` and trains.
pub fn fit(
    train_dialogs: &[Dialog],
    val_dialogs: &[Dialog],
    res: &Resources,
    cfg: FeatureConfig,
    hp: &EmbeddingHp,
) -> Result<(EmbeddingModel, TrainLog)> {
    let enc = res.encoder(cfg);
    let tr = enc.dialogs(train_dialogs, &res.candidates)?;
    let va = enc.dialogs(val_dialogs, &res.candidates)?;
    let cands = enc.candidates(&res.candidates);
    train(&tr, &va, &cands, res, cfg, hp)
}

/// Input embedding of a bag; exposed for inspection tools.
pub fn input_embedding(model: &EmbeddingModel, bag: &BagOfWords) -> Array1<f64> {
    let mut out = Array1::zeros(model.dim());
    add_bag(&mut out.view_mut(), &model.a, bag, 1.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_model(v: usize) -> EmbeddingModel {
        EmbeddingModel {
            a: Array2::eye(v),
            b: None,
            cfg: FeatureConfig::default(),
            vocab_hash: String::new(),
        }
    }

    #[test]
    fn identity_embeddings_give_bag_dot_product() {
        let m = identity_model(3);
        let x = BagOfWords::from_ids([0, 2]);
        let y = BagOfWords::from_ids([0, 1]);
        assert_eq!(m.score(&x, &y), 1.0);
        assert_eq!(m.score(&BagOfWords::new(), &y), 0.0);
        let x2 = BagOfWords::from_ids([0, 0, 2, 2]);
        assert_eq!(m.score(&x2, &y), 2.0 * m.score(&x, &y));
    }

    #[test]
    fn hinge_is_zero_when_margins_hold() {
        let m = identity_model(3);
        let x = BagOfWords::from_ids([0]);
        let y = BagOfWords::from_ids([0]);
        let n = BagOfWords::from_ids([1]);
        assert_eq!(m.loss(&x, &y, &[&n], 0.5), 0.0);
        assert_eq!(m.loss(&x, &y, &[&n], 1.5), 0.5);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let res = crate::fixtures::toy().1;
        let hp = EmbeddingHp {
            epochs: 0,
            dim: 4,
            negatives: 2,
            ..EmbeddingHp::default()
        };
        let (m, log) = fit(&[], &[], &res, FeatureConfig::default(), &hp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
        let init = EmbeddingModel::new(&mut rng, res.vocab.len(), 4, false, 0.01, FeatureConfig::default(), res.vocab.hash());
        assert_eq!(m, init);
        assert!(log.epochs.is_empty());
    }
}
