use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::generate::{gen_task, Generated};
use super::patterns::PatternSet;
use crate::corpus::{Dialog, SILENCE};
use crate::corpus::TurnKind;
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;

pub const TASKS: [u8; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SplitName {
    Train,
    Val,
    Test,
    TestOov,
}

impl SplitName {
    pub const ALL: [SplitName; 4] = [SplitName::Train, SplitName::Val, SplitName::Test, SplitName::TestOov];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "trn",
            SplitName::Val => "dev",
            SplitName::Test => "tst",
            SplitName::TestOov => "tst-OOV",
        }
    }

    pub fn parse(s: &str) -> Option<SplitName> {
        match s {
            "train" => Some(SplitName::Train),
            "val" | "valid" => Some(SplitName::Val),
            "test" => Some(SplitName::Test),
            "test_oov" | "test-oov" | "oov" => Some(SplitName::TestOov),
            _ => SplitName::ALL.into_iter().find(|x| x.as_str() == s),
        }
    }
}

/// File name of a split, e.g. `task3-tst-OOV.txt`.
pub fn split_file_name(task: u8, split: SplitName) -> String {
    format!("task{task}-{}.txt", split.as_str())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes {
            train: 1000,
            val: 1000,
            test: 1000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub dialogs: Vec<Dialog>,
    pub signatures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskData {
    pub task: u8,
    pub train: Split,
    pub val: Split,
    pub test: Split,
    pub test_oov: Split,
}

impl TaskData {
    pub fn split(&self, s: SplitName) -> &Split {
        match s {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
            SplitName::TestOov => &self.test_oov,
        }
    }
}

/// Seed of an independent generator for one (task, split) pair.
pub fn split_seed(seed: u64, task: u8, split: SplitName) -> u64 {
    let tag = (task as u64) << 8 | split as u64;
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tag.wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

fn fill(
    task: u8,
    kb: &KnowledgeBase,
    patterns: &PatternSet,
    n: usize,
    rng: &mut ChaCha8Rng,
    forbidden: &HashSet<String>,
    split: SplitName,
) -> Result<Split> {
    let mut out = Split::default();
    let limit = 200 * n + 1000;
    let mut attempts = 0;
    while out.dialogs.len() < n {
        if attempts == limit {
            return Err(Error::InsufficientScenarios {
                split: format!("task{task}-{}", split.as_str()),
                needed: n,
                attempts,
            });
        }
        attempts += 1;
        let Generated { dialog, signature, .. } = gen_task(task, rng, kb, patterns)?;
        if !forbidden.contains(&signature) {
            out.dialogs.push(dialog);
            out.signatures.push(signature);
        }
    }
    Ok(out)
}

/// Generates train, validation and test splits from the plain KB and the OOV
/// test split from the other KB. Scenarios never repeat across splits.
pub fn gen_dataset(
    task: u8,
    kb_plain: &KnowledgeBase,
    kb_oov: &KnowledgeBase,
    sizes: SplitSizes,
    seed: u64,
    patterns: &PatternSet,
) -> Result<TaskData> {
    if !TASKS.contains(&task) {
        return Err(Error::InvalidInput(format!("task must be 1-5, got {task}")));
    }
    let rng = |s| ChaCha8Rng::seed_from_u64(split_seed(seed, task, s));
    let mut seen = HashSet::new();
    let train = fill(task, kb_plain, patterns, sizes.train, &mut rng(SplitName::Train), &seen, SplitName::Train)?;
    seen.extend(train.signatures.iter().cloned());
    let val = fill(task, kb_plain, patterns, sizes.val, &mut rng(SplitName::Val), &seen, SplitName::Val)?;
    seen.extend(val.signatures.iter().cloned());
    let test = fill(task, kb_plain, patterns, sizes.test, &mut rng(SplitName::Test), &seen, SplitName::Test)?;
    let test_oov = fill(task, kb_oov, patterns, sizes.test, &mut rng(SplitName::TestOov), &seen, SplitName::TestOov)?;
    Ok(TaskData {
        task,
        train,
        val,
        test,
        test_oov,
    })
}

/// Average per-dialog counts, in the spirit of the dataset statistics table.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CorpusStats {
    pub dialogs: usize,
    /// Every line of the dialog: user and bot turns, silences and API results.
    pub utterances: f64,
    /// User turns other than silences.
    pub user_utterances: f64,
    pub bot_utterances: f64,
    pub api_results: f64,
}

pub fn corpus_stats(dialogs: &[Dialog]) -> CorpusStats {
    let n = dialogs.len().max(1) as f64;
    let mut s = CorpusStats {
        dialogs: dialogs.len(),
        ..Default::default()
    };
    for d in dialogs {
        for t in &d.turns {
            s.utterances += 1.0;
            match t.kind {
                TurnKind::ApiResult => s.api_results += 1.0,
                _ if t.is_bot() => s.bot_utterances += 1.0,
                _ if t.text != SILENCE => s.user_utterances += 1.0,
                _ => {}
            }
        }
    }
    s.utterances /= n;
    s.user_utterances /= n;
    s.bot_utterances /= n;
    s.api_results /= n;
    s
}
