//! Oracles shared by the integration suites and the acceptance run.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use restobench::benchmark::Benchmark;
use restobench::corpus::{to_examples, Turn};
use restobench::embeddings::EmbeddingModel;
use restobench::features::{context_words, match_types, BagOfWords, FeatureConfig, Resources, TypeSet};
use restobench::kb::EntityType;
use restobench::memnn::MemNN;
use restobench::simulator::{SplitName, TASKS};

pub const FD_EPS: f64 = 1e-6;
pub const FD_TOL: f64 = 1e-4;

/// Central difference of `f` with respect to every entry of the matrix picked
/// by `pick`.
pub fn numeric<M: Clone>(model: &M, pick: impl Fn(&mut M) -> &mut Array2<f64>, f: impl Fn(&M) -> f64) -> Array2<f64> {
    let mut probe = model.clone();
    let shape = pick(&mut probe).raw_dim();
    let mut g = Array2::zeros(shape);
    for ((r, c), out) in g.indexed_iter_mut() {
        let orig = pick(&mut probe)[[r, c]];
        pick(&mut probe)[[r, c]] = orig + FD_EPS;
        let up = f(&probe);
        pick(&mut probe)[[r, c]] = orig - FD_EPS;
        let down = f(&probe);
        pick(&mut probe)[[r, c]] = orig;
        *out = (up - down) / (2.0 * FD_EPS);
    }
    g
}

pub fn rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = (a - b).mapv(|v| v * v).sum().sqrt();
    let scale = a.mapv(|v| v * v).sum().sqrt() + b.mapv(|v| v * v).sum().sqrt();
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}

pub fn random_bag(rng: &mut ChaCha8Rng, v: usize, max_len: usize) -> BagOfWords {
    let n = rng.random_range(1..=max_len);
    BagOfWords::from_ids((0..n).map(|_| rng.random_range(0..v as u32)))
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((r, c), || rng.random_range(-0.5..0.5))
}

/// Worst relative gradient error of the ranking model on one random tiny
/// instance (V ≤ 20, d ≤ 4).
pub fn embedding_grad_error(seed: u64, tied: bool) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = rng.random_range(4..=20);
    let d = rng.random_range(1..=4);
    let model = EmbeddingModel {
        a: random_matrix(&mut rng, v, d),
        b: (!tied).then(|| random_matrix(&mut rng, v, d)),
        cfg: FeatureConfig::default(),
        vocab_hash: String::new(),
    };
    let x = random_bag(&mut rng, v, 4);
    let y = random_bag(&mut rng, v, 4);
    let negs: Vec<BagOfWords> = (0..rng.random_range(1..=3)).map(|_| random_bag(&mut rng, v, 4)).collect();
    let refs: Vec<&BagOfWords> = negs.iter().collect();
    // A large margin keeps every hinge term active, away from its kink.
    let margin = 50.0;
    let (_, ga, gb) = model.gradient(&x, &y, &refs, margin);
    let loss = |m: &EmbeddingModel| m.loss(&x, &y, &refs, margin);
    let mut worst = rel_err(&ga, &numeric(&model, |m| &mut m.a, loss));
    if let Some(gb) = gb {
        worst = worst.max(rel_err(&gb, &numeric(&model, |m| m.b.as_mut().unwrap(), loss)));
    }
    worst
}

/// Worst relative gradient error over A, R and W of the memory network on
/// one random tiny instance.
pub fn memnn_grad_error(seed: u64, hops: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = rng.random_range(4..=20);
    let d = rng.random_range(1..=4);
    let mut model = MemNN::new(&mut rng, v, d, hops, 0.5, FeatureConfig::default(), String::new());
    model.r = random_matrix(&mut rng, d, d);
    let memory: Vec<BagOfWords> = (0..rng.random_range(0..=4)).map(|_| random_bag(&mut rng, v, 3)).collect();
    let query = random_bag(&mut rng, v, 3);
    // Distinct candidates, as in a real candidate set.
    let n_cands = rng.random_range(2..=5);
    let mut cands: Vec<BagOfWords> = Vec::new();
    while cands.len() < n_cands {
        let c = random_bag(&mut rng, v, 3);
        if !cands.contains(&c) {
            cands.push(c);
        }
    }
    let refs: Vec<&BagOfWords> = cands.iter().collect();
    let gold = rng.random_range(0..cands.len());
    let (_, g) = model.gradient(&memory, &query, &refs, gold);
    let loss = |m: &MemNN| m.loss(&memory, &query, &refs, gold);
    let ea = rel_err(&g.a, &numeric(&model, |m| &mut m.a, loss));
    let er = rel_err(&g.r, &numeric(&model, |m| &mut m.r, loss));
    let ew = rel_err(&g.w, &numeric(&model, |m| &mut m.w, loss));
    ea.max(er).max(ew)
}

/// Entity word → type, read straight off the fact triples of both KBs.
pub fn fact_types(bench: &Benchmark) -> HashMap<String, EntityType> {
    let mut m = HashMap::new();
    for kb in [&bench.kb, &bench.kb_oov] {
        for f in kb.facts() {
            m.insert(f.value.clone(), f.relation.entity_type());
        }
    }
    m
}

/// The three conditions taken literally: a KB entity of the type, in the
/// candidate, and in the context (the last one waived on request).
pub fn brute_force_types(
    candidate: &str,
    context: &HashSet<String>,
    types: &HashMap<String, EntityType>,
    no_history: bool,
) -> TypeSet {
    let mut set = TypeSet::default();
    for ty in EntityType::ALL {
        let hit = candidate
            .split_whitespace()
            .any(|w| types.get(w) == Some(&ty) && (no_history || context.contains(w)));
        if hit {
            set.insert(ty);
        }
    }
    set
}

pub fn whitespace_context(input: &str, memory: &[Turn], use_history: bool) -> HashSet<String> {
    let mut words: HashSet<String> = input.split_whitespace().map(str::to_string).collect();
    if use_history {
        for t in memory {
            words.extend(t.text.split_whitespace().map(str::to_string));
        }
    }
    words
}

#[derive(Debug, Default)]
pub struct MatchTrials {
    pub pairs: usize,
    pub mismatches: usize,
    /// Pairs whose expected type set was non-empty.
    pub typed: usize,
}

/// Compares both match-type paths (text and id space) with the brute-force
/// check on `n` random (candidate, context) pairs.
pub fn match_type_trials(bench: &Benchmark, res: &Resources, n: usize, seed: u64) -> MatchTrials {
    let types = fact_types(bench);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let splits = [SplitName::Train, SplitName::Test, SplitName::TestOov];
    let encoded_cands = res.encoder(FeatureConfig::default()).candidates(&res.candidates);
    let mut out = MatchTrials::default();
    for _ in 0..n {
        let task = *TASKS.choose(&mut rng).unwrap();
        let split = *splits.choose(&mut rng).unwrap();
        let dialog = bench.dialogs(task, split).unwrap().choose(&mut rng).unwrap();
        let examples = to_examples(dialog);
        let k = rng.random_range(0..examples.len());
        let ex = examples[k];
        let candidate = if rng.random_bool(0.5) {
            ex.gold.to_string()
        } else {
            res.candidates.get(rng.random_range(0..res.candidates.len())).to_string()
        };
        let use_history = rng.random_bool(0.7);
        let oracle_ctx = whitespace_context(ex.input, ex.memory(), use_history);
        let ctx = context_words(ex.input, ex.memory(), use_history);
        let mut ok = true;
        for no_history in [false, true] {
            let expected = brute_force_types(&candidate, &oracle_ctx, &types, no_history);
            let got = match_types(&candidate, &ctx, &res.index, no_history);
            ok &= got == expected && got.len() <= 7;
        }
        let cfg = FeatureConfig { use_history, ..Default::default() };
        let enc = res.encoder(cfg);
        let encoded = enc.dialog(dialog, &res.candidates).unwrap();
        let j = res.candidates.index_of(&candidate).unwrap();
        let dense = encoded_cands.match_types_dense(&encoded.examples[k].context_entities, false);
        let expected = brute_force_types(&candidate, &oracle_ctx, &types, false);
        ok &= dense[j] == expected;
        out.pairs += 1;
        out.mismatches += usize::from(!ok);
        out.typed += usize::from(!expected.is_empty());
    }
    out
}
