use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use super::dialog::Dialog;
use crate::error::{Error, Result};

/// Every distinct bot utterance and API call, in lexicographic order.
///
/// The order doubles as the tie-break for every ranker.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidateSet {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl CandidateSet {
    pub fn from_strings<I, S>(strings: I) -> CandidateSet
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = strings.into_iter().map(Into::into).collect();
        let items: Vec<String> = set.into_iter().collect();
        let index = items.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        CandidateSet { items, index }
    }

    pub fn build<'a, I>(corpora: I) -> CandidateSet
    where
        I: IntoIterator<Item = &'a [Dialog]>,
    {
        let mut bot = Vec::new();
        for corpus in corpora {
            for dialog in corpus {
                bot.extend(dialog.turns.iter().filter(|t| t.is_bot()).map(|t| t.text.clone()));
            }
        }
        CandidateSet::from_strings(bot)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &str {
        &self.items[i]
    }

    pub fn index_of(&self, text: &str) -> Option<usize> {
        self.index.get(text).copied()
    }

    pub fn gold_index(&self, text: &str) -> Result<usize> {
        self.index_of(text)
            .ok_or_else(|| Error::GoldNotInCandidates(text.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(String::as_str)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.items.join("\n");
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<CandidateSet> {
        let text = fs::read_to_string(path)?;
        Ok(CandidateSet::from_strings(
            text.lines().filter(|l| !l.trim().is_empty()),
        ))
    }
}
