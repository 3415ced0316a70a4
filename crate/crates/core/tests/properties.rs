//! Invariants over bags, match typing, metrics, normalization and the file
//! formats, checked against brute-force recomputations.

use std::collections::HashSet;
use std::sync::OnceLock;

mod common;

use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use restobench::benchmark::Benchmark;
use restobench::corpus::{format_dialogs, parse_dialogs, Dialog, Turn};
use restobench::dense::softmax;
use restobench::eval::metrics_from_ranks;
use restobench::features::{encode_memory, match_types, phi, BagOfWords, FeatureConfig, Resources, TypeSet};
use restobench::memnn::MemNN;
use restobench::simulator::{SplitName, SplitSizes, TASKS};

struct Fixture {
    bench: Benchmark,
    res: Resources,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let sizes = SplitSizes { train: 60, val: 20, test: 20 };
        let bench = Benchmark::generate(&TASKS, sizes, 11).unwrap();
        let res = bench.resources(false).unwrap();
        Fixture { bench, res }
    })
}

#[test]
fn match_types_agree_with_a_scan_of_the_kb_facts() {
    let f = fixture();
    let t = common::match_type_trials(&f.bench, &f.res, 1000, 3);
    assert_eq!(t.mismatches, 0);
    assert!(t.typed > 100, "only {} pairs exercised a type token", t.typed);
}

#[test]
fn match_typing_is_monotone_in_the_context() {
    let f = fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let words: Vec<String> = common::fact_types(&f.bench).into_keys().collect();
    for _ in 0..300 {
        let cand = f.res.candidates.get(rng.random_range(0..f.res.candidates.len()));
        let mut ctx: HashSet<String> = HashSet::new();
        let mut prev = TypeSet::default();
        for _ in 0..10 {
            ctx.insert(words.choose(&mut rng).unwrap().clone());
            let now = match_types(cand, &ctx, &f.res.index, false);
            assert_eq!(now.union(prev), now, "enlarging the context removed a type");
            prev = now;
        }
    }
}

#[test]
fn generated_dialogs_survive_the_text_format() {
    let f = fixture();
    for task in TASKS {
        for split in SplitName::ALL {
            let dialogs = f.bench.dialogs(task, split).unwrap();
            let text = format_dialogs(dialogs).unwrap();
            let back = parse_dialogs(&text, "mem".as_ref()).unwrap();
            assert_eq!(back, dialogs, "task {task} {split:?}");
        }
    }
}

#[test]
fn benchmark_directory_round_trips() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    f.bench.write(dir.path()).unwrap();
    let back = Benchmark::read(dir.path()).unwrap();
    assert_eq!(back.kb, f.bench.kb);
    assert_eq!(back.kb_oov, f.bench.kb_oov);
    assert_eq!(back.candidates, f.bench.candidates);
    for (a, b) in back.tasks.iter().zip(&f.bench.tasks) {
        for s in SplitName::ALL {
            assert_eq!(a.split(s).dialogs, b.split(s).dialogs);
        }
    }
    assert_eq!(back.vocabulary(false), f.bench.vocabulary(false));
}

#[test]
fn memory_encoding_reduces_to_phi_without_extra_features() {
    let f = fixture();
    let plain = FeatureConfig { time_features: false, speaker_features: false, ..Default::default() };
    for d in f.bench.dialogs(5, SplitName::Train).unwrap().iter().take(10) {
        let full = encode_memory(&d.turns, &f.res.vocab, &FeatureConfig::default());
        let bare = encode_memory(&d.turns, &f.res.vocab, &plain);
        assert_eq!(full.len(), d.turns.len());
        for ((t, a), b) in d.turns.iter().zip(&full).zip(&bare) {
            assert_eq!(*b, phi(&t.text, &f.res.vocab));
            assert_eq!(a.total(), b.total() + 2);
        }
    }
}

fn text_strategy() -> impl Strategy<Value = String> {
    "[a-z_'0-9]{1,8}( [a-z_'0-9:]{1,8}){0,6}"
}

/// Dialogs in the shape the format can hold: user/bot pairs with optional
/// runs of API-result facts in between.
fn dialog_strategy() -> impl Strategy<Value = Dialog> {
    let block = (text_strategy(), text_strategy(), prop::collection::vec(text_strategy(), 0..3));
    prop::collection::vec(block, 1..6).prop_map(|blocks| {
        let mut turns = Vec::new();
        for (u, b, facts) in blocks {
            turns.push(Turn::user(u));
            turns.push(Turn::bot(b));
            turns.extend(facts.into_iter().map(Turn::api_result));
        }
        Dialog::new(turns)
    })
}

fn bag_strategy() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..12, 0..20)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn arbitrary_dialogs_round_trip(dialogs in prop::collection::vec(dialog_strategy(), 1..5)) {
        let text = format_dialogs(&dialogs).unwrap();
        let back = parse_dialogs(&text, "mem".as_ref()).unwrap();
        prop_assert_eq!(back, dialogs);
    }

    #[test]
    fn bags_count_and_intersect_like_multisets(a in bag_strategy(), b in bag_strategy()) {
        let ba = BagOfWords::from_ids(a.iter().copied());
        let bb = BagOfWords::from_ids(b.iter().copied());
        let mut overlap = 0;
        for id in 0..12u32 {
            let ca = a.iter().filter(|&&x| x == id).count() as u32;
            let cb = b.iter().filter(|&&x| x == id).count() as u32;
            prop_assert_eq!(ba.count(id), ca);
            overlap += ca.min(cb);
        }
        prop_assert_eq!(ba.overlap(&bb), overlap);
        prop_assert_eq!(ba.total() as usize, a.len());
        prop_assert!(ba.iter().all(|(_, c)| c >= 1));
        let ids: Vec<u32> = ba.iter().map(|(i, _)| i).collect();
        prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn softmax_sums_to_one(z in prop::collection::vec(-700.0f64..700.0, 1..50)) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn attention_is_a_distribution_at_every_hop(seed in any::<u64>(), hops in 1usize..=4, slots in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = MemNN::new(&mut rng, 30, 6, hops, 2.0, FeatureConfig::default(), String::new());
        let memory: Vec<BagOfWords> = (0..slots)
            .map(|_| BagOfWords::from_ids((0..rng.random_range(1..5)).map(|_| rng.random_range(0..30u32))))
            .collect();
        let query = BagOfWords::from_ids([rng.random_range(0..30u32)]);
        let (_, trace) = model.forward(&memory, &query);
        prop_assert_eq!(trace.hops.len(), hops);
        for p in &trace.hops {
            prop_assert_eq!(p.len(), slots);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        let cands: Vec<BagOfWords> = (0..5).map(|i| BagOfWords::from_ids([i])).collect();
        let refs: Vec<&BagOfWords> = cands.iter().collect();
        let probs = model.probabilities(&memory, &query, &refs);
        prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn dialog_accuracy_never_exceeds_response_accuracy(
        ranks in prop::collection::vec(prop::collection::vec(0usize..6, 1..8), 1..30),
        seed in any::<u64>(),
    ) {
        let m = metrics_from_ranks(&ranks, 1);
        // Perfect dialogs contribute at least their shortest length in hits.
        let min_len = ranks.iter().map(Vec::len).min().unwrap() as f64;
        let bound = m.per_response * m.n_examples as f64 / (m.n_dialogs as f64 * min_len);
        prop_assert!(m.per_dialog <= bound + 1e-12);
        let len = ranks[0].len();
        let equal: Vec<Vec<usize>> = ranks.iter().map(|d| d.iter().cycle().take(len).copied().collect()).collect();
        let e = metrics_from_ranks(&equal, 1);
        prop_assert!(e.per_dialog <= e.per_response + 1e-12);
        let mut prev = m.per_response;
        for k in 2..=7 {
            let top = metrics_from_ranks(&ranks, k).top_k.unwrap();
            prop_assert!(top + 1e-12 >= prev);
            prev = top;
        }
        prop_assert_eq!(prev, 1.0);

        let mut shuffled = ranks.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let s = metrics_from_ranks(&shuffled, 3);
        let o = metrics_from_ranks(&ranks, 3);
        prop_assert!((s.per_response - o.per_response).abs() < 1e-12);
        prop_assert!((s.per_dialog - o.per_dialog).abs() < 1e-12);
        prop_assert_eq!(s.top_k, o.top_k);
    }
}
