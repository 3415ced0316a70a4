//! End-to-end memory network: multi-hop attention over the dialog history,
//! then a softmax over candidate responses.

use std::borrow::Cow;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Dialog;
use crate::dense::{all_finite, clip_factor, dot, embed, embed_all, softmax, uniform_init, SparseGrad};
use crate::embeddings::typed_bag;
use crate::error::{Error, Result};
use crate::eval::{GridPoint, Ranker};
use crate::features::{BagOfWords, EncodedCandidates, EncodedDialog, EncodedExample, FeatureConfig, Resources, TypeSet};
use crate::kb::EntityType;
use crate::training::{accuracy, example_ids, is_eval_epoch, sample_negatives, EpochRecord, TrainLog};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemHp {
    pub lr: f64,
    pub dim: usize,
    pub hops: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Normalize over the whole candidate set instead of gold + negatives.
    pub full_softmax: bool,
    pub eval_every: usize,
    pub init_scale: f64,
    /// Rescale any step whose gradient norm exceeds this value.
    pub max_grad_norm: Option<f64>,
    /// Start R at the identity plus the uniform noise instead of the noise alone.
    pub identity_r: bool,
}

impl Default for MemHp {
    fn default() -> Self {
        MemHp {
            lr: 0.01,
            dim: 128,
            hops: 1,
            negatives: 100,
            epochs: 100,
            seed: 0,
            full_softmax: true,
            eval_every: 1,
            init_scale: 0.1,
            max_grad_norm: Some(10.0),
            identity_r: true,
        }
    }
}

impl MemHp {
    /// Table settings; the margin column has no role under cross-entropy.
    pub fn from_grid(p: &GridPoint) -> MemHp {
        MemHp {
            lr: p.lr,
            dim: p.dim,
            hops: p.hops,
            negatives: p.negatives,
            ..MemHp::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.dim == 0 {
            return bad("embedding dimension must be at least 1");
        }
        if self.negatives == 0 && !self.full_softmax {
            return bad("at least one negative candidate is required");
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

/// Attention over memory slots, one probability vector per hop.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub hops: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemNN {
    /// Memory and query embedding, one row per token.
    pub a: Array2<f64>,
    /// Hop transform, `o = R Σ p_i m_i`.
    pub r: Array2<f64>,
    /// Candidate embedding, one row per token.
    pub w: Array2<f64>,
    pub hops: usize,
    pub cfg: FeatureConfig,
    pub vocab_hash: String,
}

/// Gradients of one example, same shapes as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MemGradients {
    pub a: Array2<f64>,
    pub r: Array2<f64>,
    pub w: Array2<f64>,
}

/// One attention read: `p = softmax(q·m_i)`, `q' = R Σ p_i m_i + q`. Empty
/// memory leaves `q` unchanged.
pub fn hop(q: &Array1<f64>, memory: &[Array1<f64>], r: &Array2<f64>) -> (Vec<f64>, Array1<f64>) {
    let (p, o) = read(q, memory);
    if memory.is_empty() {
        return (p, q.clone());
    }
    (p, r.dot(&o) + q)
}

fn read(q: &Array1<f64>, memory: &[Array1<f64>]) -> (Vec<f64>, Array1<f64>) {
    let mut o = Array1::zeros(q.len());
    if memory.is_empty() {
        return (Vec::new(), o);
    }
    let s: Vec<f64> = memory.iter().map(|m| dot(&q.view(), &m.view())).collect();
    let p = softmax(&s);
    for (pi, m) in p.iter().zip(memory) {
        o.scaled_add(*pi, m);
    }
    (p, o)
}

/// Intermediate values of a forward pass, kept for backpropagation.
struct Pass {
    memory: Vec<Array1<f64>>,
    /// `q_1 … q_{N+1}`.
    qs: Vec<Array1<f64>>,
    ps: Vec<Vec<f64>>,
    /// Unrotated readouts `Σ p_i m_i` per hop.
    os: Vec<Array1<f64>>,
}

impl MemNN {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        vocab_size: usize,
        dim: usize,
        hops: usize,
        scale: f64,
        cfg: FeatureConfig,
        vocab_hash: String,
    ) -> MemNN {
        let a = uniform_init(rng, vocab_size, dim, scale);
        let r = uniform_init(rng, dim, dim, scale);
        let w = uniform_init(rng, vocab_size, dim, scale);
        MemNN {
            a,
            r,
            w,
            hops,
            cfg,
            vocab_hash,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn vocab_size(&self) -> usize {
        self.a.nrows()
    }

    /// Memory vectors `A Φ(slot)` and query `A Φ(input)`.
    pub fn encode(&self, memory: &[BagOfWords], query: &BagOfWords) -> (Vec<Array1<f64>>, Array1<f64>) {
        (memory.iter().map(|b| embed(&self.a, b)).collect(), embed(&self.a, query))
    }

    fn pass(&self, memory: &[BagOfWords], query: &BagOfWords) -> Pass {
        let (memory, q) = self.encode(memory, query);
        let mut qs = vec![q];
        let mut ps = Vec::with_capacity(self.hops);
        let mut os = Vec::with_capacity(self.hops);
        for _ in 0..self.hops {
            let q = qs.last().expect("q_1 is always present");
            let (p, o) = read(q, &memory);
            let next = if memory.is_empty() { q.clone() } else { self.r.dot(&o) + q };
            ps.push(p);
            os.push(o);
            qs.push(next);
        }
        Pass { memory, qs, ps, os }
    }

    /// Final controller state `q_{N+1}` and the attention of every hop.
    pub fn forward(&self, memory: &[BagOfWords], query: &BagOfWords) -> (Array1<f64>, AttentionTrace) {
        let pass = self.pass(memory, query);
        let q = pass.qs.last().cloned().expect("q_1 is always present");
        (q, AttentionTrace { hops: pass.ps })
    }

    /// Softmax over `q_{N+1} · W Φ(y)` for the given candidate bags.
    pub fn probabilities(&self, memory: &[BagOfWords], query: &BagOfWords, candidates: &[&BagOfWords]) -> Vec<f64> {
        let (q, _) = self.forward(memory, query);
        softmax(&self.logits(&q, candidates))
    }

    fn logits(&self, q: &Array1<f64>, candidates: &[&BagOfWords]) -> Vec<f64> {
        candidates
            .iter()
            .map(|c| dot(&q.view(), &embed(&self.w, c).view()))
            .collect()
    }

    /// Cross-entropy `−log p(gold)` with the softmax over `candidates`.
    pub fn loss(&self, memory: &[BagOfWords], query: &BagOfWords, candidates: &[&BagOfWords], gold: usize) -> f64 {
        let (q, _) = self.forward(memory, query);
        cross_entropy(&self.logits(&q, candidates), gold).0
    }

    pub fn gradient(
        &self,
        memory: &[BagOfWords],
        query: &BagOfWords,
        candidates: &[&BagOfWords],
        gold: usize,
    ) -> (f64, MemGradients) {
        let mut g = MemGradients {
            a: Array2::zeros(self.a.raw_dim()),
            r: Array2::zeros(self.r.raw_dim()),
            w: Array2::zeros(self.w.raw_dim()),
        };
        let delta = self.delta(memory, query, candidates, gold);
        delta.rows(memory, query, candidates).apply(&mut [&mut g.a, &mut g.w], 1.0);
        g.r.assign(&delta.dr);
        (delta.loss, g)
    }

    fn sgd_step(&mut self, memory: &[BagOfWords], query: &BagOfWords, candidates: &[&BagOfWords], gold: usize, hp: &MemHp) -> f64 {
        let delta = self.delta(memory, query, candidates, gold);
        let rows = delta.rows(memory, query, candidates);
        let norm_sq = rows.norm_sq() + delta.dr.iter().map(|v| v * v).sum::<f64>();
        let step = -hp.lr * clip_factor(norm_sq, hp.max_grad_norm);
        rows.apply(&mut [&mut self.a, &mut self.w], step);
        self.r.scaled_add(step, &delta.dr);
        delta.loss
    }

    /// Backpropagation of one example's loss down to the embedded vectors.
    fn delta(&self, memory: &[BagOfWords], query: &BagOfWords, candidates: &[&BagOfWords], gold: usize) -> Delta {
        let d = self.dim();
        let pass = self.pass(memory, query);
        let q_final = pass.qs.last().cloned().expect("q_1 is always present");
        let c_emb: Vec<Array1<f64>> = candidates.iter().map(|c| embed(&self.w, c)).collect();
        let z: Vec<f64> = c_emb.iter().map(|c| dot(&q_final.view(), &c.view())).collect();
        let (loss, mut dz) = cross_entropy(&z, gold);
        dz[gold] -= 1.0;

        let mut dq = Array1::zeros(d);
        for (c, g) in c_emb.iter().zip(&dz) {
            dq.scaled_add(*g, c);
        }
        let (dr, dq, dm) = self.backprop_memory(&pass, dq);
        Delta {
            loss,
            q_final,
            dz,
            dr,
            dq,
            dm,
        }
    }

    /// From the gradient at `q_{N+1}` down to R, `q_1` and every memory vector.
    fn backprop_memory(&self, pass: &Pass, mut dq: Array1<f64>) -> (Array2<f64>, Array1<f64>, Vec<Array1<f64>>) {
        let d = self.dim();
        let mut dr = Array2::zeros((d, d));
        let mut dm: Vec<Array1<f64>> = vec![Array1::zeros(d); pass.memory.len()];
        if pass.memory.is_empty() {
            return (dr, dq, dm);
        }
        for h in (0..self.hops).rev() {
            let (p, q, o) = (&pass.ps[h], &pass.qs[h], &pass.os[h]);
            for a in 0..d {
                dr.row_mut(a).scaled_add(dq[a], o);
            }
            let d_o = self.r.t().dot(&dq);
            let dp: Vec<f64> = pass.memory.iter().map(|m| dot(&m.view(), &d_o.view())).collect();
            let mean: f64 = p.iter().zip(&dp).map(|(pi, di)| pi * di).sum();
            let mut dq_prev = dq.clone();
            for (i, m) in pass.memory.iter().enumerate() {
                let ds = p[i] * (dp[i] - mean);
                dm[i].scaled_add(p[i], &d_o);
                dm[i].scaled_add(ds, q);
                dq_prev.scaled_add(ds, m);
            }
            dq = dq_prev;
        }
        (dr, dq, dm)
    }

    /// SGD step with the softmax over every candidate. `cand_emb` caches
    /// `W Φ(y)` for the untyped candidate bags and is updated along with W;
    /// `typed` lists candidates that carry type tokens, whose rows in W are
    /// `type_rows`.
    #[allow(clippy::too_many_arguments)]
    fn full_step(
        &mut self,
        cand_emb: &mut Array2<f64>,
        cands: &EncodedCandidates,
        typed: &[(u32, TypeSet)],
        type_rows: &[u32],
        memory: &[BagOfWords],
        query: &BagOfWords,
        gold: usize,
        hp: &MemHp,
    ) -> f64 {
        let pass = self.pass(memory, query);
        let q = pass.qs.last().cloned().expect("q_1 is always present");
        let tdot: Vec<f64> = type_rows.iter().map(|&t| dot(&self.w.row(t as usize), &q.view())).collect();
        let mut z = cand_emb.dot(&q).to_vec();
        for (j, ts) in typed {
            z[*j as usize] += ts.iter().map(|t| tdot[t.index()]).sum::<f64>();
        }
        let (loss, mut dz) = cross_entropy(&z, gold);
        dz[gold] -= 1.0;

        // Gradient of W row t is s_t q with s_t = Σ_c count_c(t) dz_c.
        let mut s = vec![0.0; self.vocab_size()];
        for (bag, g) in cands.bags.iter().zip(&dz) {
            for (id, c) in bag.iter() {
                s[id as usize] += c as f64 * g;
            }
        }
        let mut dq = Array1::zeros(q.len());
        for (row, g) in cand_emb.outer_iter().zip(&dz) {
            dq.scaled_add(*g, &row);
        }
        let mut s_type = vec![0.0; type_rows.len()];
        for (j, ts) in typed {
            for t in ts.iter() {
                s_type[t.index()] += dz[*j as usize];
            }
        }
        for (k, &t) in type_rows.iter().enumerate() {
            dq.scaled_add(s_type[k], &self.w.row(t as usize));
        }
        // Candidate embeddings move by u_c q with u_c = Σ_t count_c(t) s_t,
        // computed before type tokens join s since they are not in the cache.
        let u: Vec<f64> = cands
            .bags
            .iter()
            .map(|bag| bag.iter().map(|(id, c)| c as f64 * s[id as usize]).sum())
            .collect();
        for (k, &t) in type_rows.iter().enumerate() {
            s[t as usize] += s_type[k];
        }

        let (dr, dq, dm) = self.backprop_memory(&pass, dq);
        let mut rows = SparseGrad::default();
        rows.add_bag(0, query, &dq.view(), 1.0);
        for (bag, d) in memory.iter().zip(&dm) {
            rows.add_bag(0, bag, &d.view(), 1.0);
        }
        let q_sq = q.dot(&q);
        let norm_sq = rows.norm_sq() + dr.iter().map(|v| v * v).sum::<f64>() + s.iter().map(|v| v * v * q_sq).sum::<f64>();
        let step = -hp.lr * clip_factor(norm_sq, hp.max_grad_norm);
        rows.apply(&mut [&mut self.a], step);
        self.r.scaled_add(step, &dr);
        for (t, st) in s.iter().enumerate() {
            if *st != 0.0 {
                self.w.row_mut(t).scaled_add(step * st, &q);
            }
        }
        for (c, uc) in u.iter().enumerate() {
            if *uc != 0.0 {
                cand_emb.row_mut(c).scaled_add(step * uc, &q);
            }
        }
        loss
    }

    pub fn ranker<'a>(&'a self, res: &'a Resources) -> MemRanker<'a> {
        let cands = res.encoder(self.cfg).candidates(&res.candidates);
        MemRanker::new(self, res, Cow::Owned(cands))
    }
}

/// Gradient of one example's loss with respect to the embedded vectors and R.
struct Delta {
    loss: f64,
    q_final: Array1<f64>,
    /// Loss gradient of each candidate logit.
    dz: Vec<f64>,
    dr: Array2<f64>,
    /// Gradient at `q_1`.
    dq: Array1<f64>,
    /// Gradient at each memory vector.
    dm: Vec<Array1<f64>>,
}

impl Delta {
    /// Row gradients of A (matrix 0) and W (matrix 1).
    fn rows(&self, memory: &[BagOfWords], query: &BagOfWords, candidates: &[&BagOfWords]) -> SparseGrad {
        let mut g = SparseGrad::default();
        for (c, dz) in candidates.iter().zip(&self.dz) {
            g.add_bag(1, c, &self.q_final.view(), *dz);
        }
        g.add_bag(0, query, &self.dq.view(), 1.0);
        for (bag, d) in memory.iter().zip(&self.dm) {
            g.add_bag(0, bag, &d.view(), 1.0);
        }
        g
    }
}

/// Loss `−log softmax(z)[gold]` and the softmax itself.
fn cross_entropy(z: &[f64], gold: usize) -> (f64, Vec<f64>) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    (log_sum - z[gold], softmax(z))
}

/// Scores the full candidate set and exposes the attention trace.
pub struct MemRanker<'a> {
    model: &'a MemNN,
    res: &'a Resources,
    cands: Cow<'a, EncodedCandidates>,
    cand_emb: Array2<f64>,
    type_emb: Vec<Array1<f64>>,
}

impl<'a> MemRanker<'a> {
    fn new(model: &'a MemNN, res: &'a Resources, cands: Cow<'a, EncodedCandidates>) -> Self {
        let cand_emb = embed_all(&model.w, &cands.bags);
        let type_emb = EntityType::ALL
            .iter()
            .map(|&t| model.w.row(res.vocab.type_id(t) as usize).to_owned())
            .collect();
        MemRanker {
            model,
            res,
            cands,
            cand_emb,
            type_emb,
        }
    }

    pub fn scores_with_trace(&self, d: &EncodedDialog, ex: &EncodedExample) -> (Vec<f64>, AttentionTrace) {
        let cfg = &self.model.cfg;
        let memory = if cfg.use_history {
            d.memory(ex, &self.res.vocab, cfg)
        } else {
            Vec::new()
        };
        let (q, trace) = self.model.forward(&memory, &ex.input);
        let mut s = self.cand_emb.dot(&q).to_vec();
        if cfg.match_type {
            let tdot: Vec<f64> = self.type_emb.iter().map(|t| dot(&t.view(), &q.view())).collect();
            for (j, types) in self.cands.match_types(&ex.context_entities, cfg.match_type_no_history) {
                s[j as usize] += types.iter().map(|t| tdot[t.index()]).sum::<f64>();
            }
        }
        (s, trace)
    }

    pub fn scores(&self, d: &EncodedDialog, ex: &EncodedExample) -> Vec<f64> {
        self.scores_with_trace(d, ex).0
    }

    /// Scores and attention for the last bot turn position of a raw history.
    pub fn score_history(&self, dialog: &Dialog) -> Result<Vec<(Vec<f64>, AttentionTrace)>> {
        let d = self.res.encoder(self.model.cfg).dialog(dialog, &self.res.candidates)?;
        Ok(d.examples.iter().map(|ex| self.scores_with_trace(&d, ex)).collect())
    }
}

impl Ranker for MemRanker<'_> {
    fn name(&self) -> String {
        let mut n = "memnn".to_string();
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

/// Trains on dialogs encoded with `cfg`; returns the best-validation snapshot.
pub fn train(
    train: &[EncodedDialog],
    val: &[EncodedDialog],
    cands: &EncodedCandidates,
    res: &Resources,
    cfg: FeatureConfig,
    hp: &MemHp,
) -> Result<(MemNN, TrainLog)> {
    hp.validate()?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut model = MemNN::new(
        &mut rng,
        res.vocab.len(),
        hp.dim,
        hp.hops,
        hp.init_scale,
        cfg,
        res.vocab.hash(),
    );
    if hp.identity_r {
        model.r += &Array2::eye(hp.dim);
    }
    let type_rows: Vec<u32> = EntityType::ALL.iter().map(|&t| res.vocab.type_id(t)).collect();
    let mut ids = example_ids(train);
    let mut log = TrainLog::default();
    let mut best: Option<(f64, MemNN)> = None;
    for epoch in 1..=hp.epochs {
        ids.shuffle(&mut rng);
        let mut cand_emb = if hp.full_softmax { embed_all(&model.w, &cands.bags) } else { Array2::zeros((0, 0)) };
        let mut total = 0.0;
        for (n, &(i, j)) in ids.iter().enumerate() {
            let d = &train[i];
            let ex = &d.examples[j];
            let memory = if cfg.use_history {
                d.memory(ex, &res.vocab, &cfg)
            } else {
                Vec::new()
            };
            let loss = if hp.full_softmax {
                let typed = if cfg.match_type {
                    cands.match_types(&ex.context_entities, cfg.match_type_no_history)
                } else {
                    Vec::new()
                };
                model.full_step(&mut cand_emb, cands, &typed, &type_rows, &memory, &ex.input, ex.gold, hp)
            } else {
                let types = if cfg.match_type {
                    cands.match_types_dense(&ex.context_entities, cfg.match_type_no_history)
                } else {
                    Vec::new()
                };
                let mut support = vec![ex.gold];
                support.extend(sample_negatives(&mut rng, cands.len(), ex.gold, hp.negatives));
                let bags: Vec<Cow<BagOfWords>> = support
                    .into_iter()
                    .map(|k| typed_bag(&cands.bags[k], types.get(k).copied().unwrap_or_default(), res))
                    .collect();
                let refs: Vec<&BagOfWords> = bags.iter().map(|c| c.as_ref()).collect();
                model.sgd_step(&memory, &ex.input, &refs, 0, hp)
            };
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, example: n, loss });
            }
            total += loss;
        }
        if !all_finite(&model.a) || !all_finite(&model.r) || !all_finite(&model.w) {
            return Err(Error::NonFiniteLoss { epoch, example: ids.len(), loss: f64::NAN });
        }
        let mut rec = EpochRecord {
            epoch,
            mean_loss: total / ids.len().max(1) as f64,
            val_per_response: None,
        };
        if !val.is_empty() && is_eval_epoch(epoch, hp.eval_every, hp.epochs) {
            let r = MemRanker::new(&model, res, Cow::Borrowed(cands));
            let acc = accuracy(val, |d, j| r.scores(d, &d.examples[j]));
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
    hp: &MemHp,
) -> Result<(MemNN, TrainLog)> {
    let enc = res.encoder(cfg);
    let tr = enc.dialogs(train_dialogs, &res.candidates)?;
    let va = enc.dialogs(val_dialogs, &res.candidates)?;
    let cands = enc.candidates(&res.candidates);
    train(&tr, &va, &cands, res, cfg, hp)
}
