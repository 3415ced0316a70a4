use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use restobench::corpus::{to_examples, Dialog, TurnKind};
use restobench::kb::{default_split, generate_kb, KnowledgeBase, Relation};
use restobench::simulator::{corpus_stats, gen_task, OracleBot, PatternSet, TASKS};

fn kbs() -> (KnowledgeBase, KnowledgeBase) {
    let ((c, l), (oc, ol)) = default_split();
    (generate_kb(&c, &l, 1).unwrap(), generate_kb(&oc, &ol, 2).unwrap())
}

fn sample(task: u8, kb: &KnowledgeBase, n: usize, seed: u64) -> Vec<Dialog> {
    let p = PatternSet::default_set();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| gen_task(task, &mut rng, kb, &p).unwrap().dialog).collect()
}

#[test]
fn oracle_replays_every_bot_turn() {
    let (plain, oov) = kbs();
    let bot = OracleBot::new(PatternSet::default_set(), &[&plain, &oov]).unwrap();
    for task in TASKS {
        for (kb, seed) in [(&plain, 1), (&oov, 2)] {
            for d in sample(task, kb, 1000, seed) {
                d.validate().unwrap();
                for ex in to_examples(&d) {
                    assert_eq!(bot.respond(ex.history).unwrap(), ex.gold, "task {task}");
                }
            }
        }
    }
}

#[test]
fn utterance_counts_are_close_to_the_reference_statistics() {
    let (plain, _) = kbs();
    let reference = [12.0, 17.0, 43.0, 15.0, 55.0];
    for task in TASKS {
        let stats = corpus_stats(&sample(task, &plain, 1000, 3));
        let r = reference[task as usize - 1];
        assert!(
            (stats.utterances - r).abs() <= 0.3 * r,
            "task {task}: {} utterances vs {r}",
            stats.utterances
        );
    }
    let t1 = corpus_stats(&sample(1, &plain, 1000, 4));
    assert!((t1.utterances - 12.0).abs() <= 2.0);
    // Four fixed bot turns plus one question per unrevealed field: 6 on average.
    assert!((t1.bot_utterances - 6.0).abs() <= 0.2, "{}", t1.bot_utterances);
}

#[test]
fn api_calls_match_and_entities_stay_in_their_kb() {
    let (plain, oov) = kbs();
    let plain_words: HashSet<String> = plain.facts().map(|f| f.value).collect();
    let oov_words: HashSet<String> = oov.facts().map(|f| f.value).collect();
    for task in TASKS {
        for d in sample(task, &oov, 200, 9) {
            for t in &d.turns {
                for w in t.text.split_whitespace() {
                    assert!(!plain_words.contains(w) || oov_words.contains(w), "{w} leaked into OOV dialog");
                }
                if t.kind == TurnKind::ApiResult {
                    let f = restobench::kb::Fact::parse(&t.text).unwrap();
                    if f.relation == Relation::Phone {
                        assert!(oov.restaurant(&f.subject).is_some());
                    }
                }
            }
        }
    }
}
