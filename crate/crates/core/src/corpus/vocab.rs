use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::dialog::{Dialog, Speaker};
use super::tokenize::tokenize;
use crate::error::{Error, Result};
use crate::kb::EntityType;

/// Number of distinct time-feature tokens; later memory slots share the last one.
pub const TIME_FEATURES: usize = 1000;

/// Reserved tokens contain `:`, which the tokenizer always splits off, so they
/// can never coincide with a corpus token.
fn type_token(ty: EntityType) -> String {
    format!("type:{}", ty.as_str())
}

fn speaker_token(s: Speaker) -> &'static str {
    match s {
        Speaker::User => "speaker:user",
        Speaker::Bot => "speaker:bot",
    }
}

fn time_token(i: usize) -> String {
    format!("time:{i}")
}

const NUM_RESERVED: usize = 7 + 2 + TIME_FEATURES;

/// Token → index map. Corpus tokens (sorted, plus bigrams when enabled) come
/// first, then the reserved type, speaker and time tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
    num_words: usize,
    bigrams: bool,
}

pub fn bigram(a: &str, b: &str) -> String {
    format!("{a} {b}")
}

impl Vocabulary {
    pub fn build<'a, I>(texts: I, bigrams: bool) -> Vocabulary
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut words = BTreeSet::new();
        for text in texts {
            let toks = tokenize(text);
            if bigrams {
                for w in toks.windows(2) {
                    words.insert(bigram(&w[0], &w[1]));
                }
            }
            words.extend(toks);
        }
        Vocabulary::from_words(words.into_iter().collect(), bigrams)
    }

    /// Vocabulary over every turn of the given dialogs.
    pub fn from_dialogs<'a, I>(corpora: I, bigrams: bool) -> Vocabulary
    where
        I: IntoIterator<Item = &'a [Dialog]>,
    {
        let texts = corpora
            .into_iter()
            .flat_map(|c| c.iter())
            .flat_map(|d| d.turns.iter().map(|t| t.text.as_str()));
        Vocabulary::build(texts, bigrams)
    }

    fn from_words(words: Vec<String>, bigrams: bool) -> Vocabulary {
        let num_words = words.len();
        let mut tokens = words;
        tokens.extend(EntityType::ALL.iter().map(|&t| type_token(t)));
        tokens.push(speaker_token(Speaker::User).to_string());
        tokens.push(speaker_token(Speaker::Bot).to_string());
        tokens.extend((1..=TIME_FEATURES).map(time_token));
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            tokens,
            index,
            num_words,
            bigrams,
        }
    }

    /// Total size V including reserved tokens.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of corpus tokens (unigrams and bigrams), excluding reserved ones.
    pub fn num_words(&self) -> usize {
        self.num_words
    }

    pub fn uses_bigrams(&self) -> bool {
        self.bigrams
    }

    /// Index of a corpus token; reserved tokens are not reachable this way.
    pub fn word_id(&self, token: &str) -> Option<u32> {
        self.index
            .get(token)
            .copied()
            .filter(|&i| (i as usize) < self.num_words)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn type_id(&self, ty: EntityType) -> u32 {
        (self.num_words + ty.index()) as u32
    }

    pub fn speaker_id(&self, s: Speaker) -> u32 {
        let offset = match s {
            Speaker::User => 0,
            Speaker::Bot => 1,
        };
        (self.num_words + 7 + offset) as u32
    }

    /// Time token for 1-based memory position `i`, clamped to the last token.
    pub fn time_id(&self, i: usize) -> u32 {
        let i = i.clamp(1, TIME_FEATURES);
        (self.num_words + 9 + i - 1) as u32
    }

    /// Stable fingerprint of the token list, stored in checkpoints.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(if self.bigrams { b"bigrams\n" as &[u8] } else { b"unigrams\n" });
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        text.push_str(if self.bigrams { "#bigrams\t1\n" } else { "#bigrams\t0\n" });
        for (i, t) in self.tokens.iter().enumerate() {
            text.push_str(&format!("{t}\t{i}\n"));
        }
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Vocabulary> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().enumerate();
        let bigrams = match lines.next() {
            Some((_, "#bigrams\t1")) => true,
            Some((_, "#bigrams\t0")) => false,
            _ => return Err(Error::parse(path, 1, "missing `#bigrams` header")),
        };
        let mut tokens = Vec::new();
        for (n, line) in lines {
            let (tok, idx) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse(path, n + 1, "expected `token<TAB>index`"))?;
            if idx.parse::<usize>().ok() != Some(tokens.len()) {
                return Err(Error::parse(path, n + 1, "indices must be consecutive from 0"));
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() < NUM_RESERVED {
            return Err(Error::parse(path, 1, "file lacks the reserved tokens"));
        }
        let num_words = tokens.len() - NUM_RESERVED;
        let vocab = Vocabulary::from_words(tokens[..num_words].to_vec(), bigrams);
        if vocab.tokens != tokens {
            return Err(Error::parse(path, num_words + 2, "reserved tokens are malformed"));
        }
        Ok(vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_tokens_are_disjoint_from_words() {
        let v = Vocabulary::build(["time : 1 type cuisine", "speaker user"], false);
        assert_eq!(v.len(), v.num_words() + NUM_RESERVED);
        assert!(v.word_id("time").is_some());
        assert!(v.word_id("time:1").is_none());
        assert_ne!(v.time_id(1), v.word_id("time").unwrap());
        assert_eq!(v.time_id(5000), v.time_id(TIME_FEATURES));
        assert_eq!(v.token(v.type_id(EntityType::Phone)), "type:phone");
    }

    #[test]
    fn bigrams_enlarge_vocabulary() {
        let texts = ["may i have a table", "i love indian food"];
        let uni = Vocabulary::build(texts, false);
        let bi = Vocabulary::build(texts, true);
        assert!(bi.len() > uni.len());
        assert!(bi.word_id("indian food").is_some());
        assert_ne!(uni.hash(), bi.hash());
    }

    #[test]
    fn file_round_trip_and_bijection() {
        let v = Vocabulary::build(["hello world", "i'm on it"], true);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.tsv");
        v.write(&p).unwrap();
        let back = Vocabulary::read(&p).unwrap();
        assert_eq!(back, v);
        for i in 0..v.len() as u32 {
            assert_eq!(v.index[v.token(i)], i);
        }
    }
}
