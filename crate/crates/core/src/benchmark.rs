//! A complete regenerated benchmark: both knowledge bases, the task splits and
//! the shared candidate set, with directory read/write.

use std::path::Path;

use crate::corpus::{read_dialogs, write_dialogs, CandidateSet, Dialog, Vocabulary};
use crate::error::{Error, Result};
use crate::features::Resources;
use crate::kb::{default_split, generate_kb, EntityIndex, KnowledgeBase};
use crate::simulator::{gen_dataset, split_file_name, OracleBot, PatternSet, Split, SplitName, SplitSizes, TaskData};

pub const KB_FILE: &str = "kb.txt";
pub const KB_OOV_FILE: &str = "kb-oov.txt";
pub const CANDIDATES_FILE: &str = "candidates.txt";

#[derive(Debug, Clone)]
pub struct Benchmark {
    pub kb: KnowledgeBase,
    pub kb_oov: KnowledgeBase,
    /// Loaded tasks in increasing task order.
    pub tasks: Vec<TaskData>,
    pub candidates: CandidateSet,
}

fn kb_seeds(seed: u64) -> (u64, u64) {
    let s = seed.wrapping_mul(0xD6E8_FEB8_6659_FD93);
    (s ^ 0x1, s ^ 0x2)
}

impl Benchmark {
    /// Generates both KBs from the default cuisine/location split and the
    /// requested tasks.
    pub fn generate(tasks: &[u8], sizes: SplitSizes, seed: u64) -> Result<Benchmark> {
        let ((c, l), (oc, ol)) = default_split();
        let (s1, s2) = kb_seeds(seed);
        let kb = generate_kb(&c, &l, s1)?;
        let kb_oov = generate_kb(&oc, &ol, s2)?;
        let patterns = PatternSet::default_set();
        let mut sorted = tasks.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let data = sorted
            .iter()
            .map(|&t| gen_dataset(t, &kb, &kb_oov, sizes, seed, &patterns))
            .collect::<Result<Vec<_>>>()?;
        Ok(Benchmark::from_parts(kb, kb_oov, data))
    }

    pub fn from_parts(kb: KnowledgeBase, kb_oov: KnowledgeBase, tasks: Vec<TaskData>) -> Benchmark {
        let candidates = CandidateSet::build(
            tasks
                .iter()
                .flat_map(|t| SplitName::ALL.map(|s| t.split(s).dialogs.as_slice())),
        );
        Benchmark {
            kb,
            kb_oov,
            tasks,
            candidates,
        }
    }

    pub fn task(&self, task: u8) -> Result<&TaskData> {
        self.tasks
            .iter()
            .find(|t| t.task == task)
            .ok_or_else(|| Error::InvalidInput(format!("task {task} is not part of this benchmark")))
    }

    pub fn dialogs(&self, task: u8, split: SplitName) -> Result<&[Dialog]> {
        Ok(&self.task(task)?.split(split).dialogs)
    }

    /// Model vocabulary: every split except the OOV test splits, so that OOV
    /// entities stay unknown to the learned models.
    pub fn vocabulary(&self, bigrams: bool) -> Vocabulary {
        Vocabulary::from_dialogs(
            self.tasks.iter().flat_map(|t| {
                [SplitName::Train, SplitName::Val, SplitName::Test].map(|s| t.split(s).dialogs.as_slice())
            }),
            bigrams,
        )
    }

    /// Vocabulary of the whole corpus, OOV splits included.
    pub fn corpus_vocabulary(&self) -> Vocabulary {
        Vocabulary::from_dialogs(
            self.tasks
                .iter()
                .flat_map(|t| SplitName::ALL.map(|s| t.split(s).dialogs.as_slice())),
            false,
        )
    }

    pub fn entity_index(&self) -> Result<EntityIndex> {
        EntityIndex::new(&[&self.kb, &self.kb_oov])
    }

    pub fn resources(&self, bigrams: bool) -> Result<Resources> {
        Ok(Resources::new(self.candidates.clone(), self.vocabulary(bigrams), self.entity_index()?))
    }

    pub fn oracle(&self) -> Result<OracleBot> {
        OracleBot::new(PatternSet::default_set(), &[&self.kb, &self.kb_oov])
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.kb.write(&dir.join(KB_FILE))?;
        self.kb_oov.write(&dir.join(KB_OOV_FILE))?;
        self.candidates.write(&dir.join(CANDIDATES_FILE))?;
        for t in &self.tasks {
            for s in SplitName::ALL {
                write_dialogs(&dir.join(split_file_name(t.task, s)), &t.split(s).dialogs)?;
            }
        }
        Ok(())
    }

    /// Reads every task whose four split files are present. The candidate set
    /// is rebuilt from the dialogs.
    pub fn read(dir: &Path) -> Result<Benchmark> {
        let kb = KnowledgeBase::read(&dir.join(KB_FILE))?;
        let kb_oov = KnowledgeBase::read(&dir.join(KB_OOV_FILE))?;
        let mut tasks = Vec::new();
        for task in crate::simulator::TASKS {
            if !dir.join(split_file_name(task, SplitName::Train)).exists() {
                continue;
            }
            let load = |s| -> Result<Split> {
                Ok(Split {
                    dialogs: read_dialogs(&dir.join(split_file_name(task, s)))?,
                    signatures: Vec::new(),
                })
            };
            tasks.push(TaskData {
                task,
                train: load(SplitName::Train)?,
                val: load(SplitName::Val)?,
                test: load(SplitName::Test)?,
                test_oov: load(SplitName::TestOov)?,
            });
        }
        if tasks.is_empty() {
            return Err(Error::InvalidInput(format!("no task files found in {}", dir.display())));
        }
        Ok(Benchmark::from_parts(kb, kb_oov, tasks))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oov_entities_are_outside_the_model_vocabulary() {
        let sizes = SplitSizes { train: 20, val: 20, test: 20 };
        let b = Benchmark::generate(&[1], sizes, 3).unwrap();
        let v = b.vocabulary(false);
        let oov_cuisines = b.kb_oov.values(crate::kb::EntityType::Cuisine);
        assert!(oov_cuisines.iter().all(|c| v.word_id(c).is_none()));
        assert!(b.corpus_vocabulary().len() > v.len());
        for t in &b.tasks {
            for s in SplitName::ALL {
                for d in &t.split(s).dialogs {
                    for ex in crate::corpus::to_examples(d) {
                        assert!(b.candidates.index_of(ex.gold).is_some());
                    }
                }
            }
        }
    }
}
