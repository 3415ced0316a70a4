//! Input representations: bags of words, memory features, TF-IDF weights and
//! match-type tokens.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{bigram, tokenize, CandidateSet, Dialog, Speaker, Turn, Vocabulary};
use crate::error::{Error, Result};
use crate::kb::{EntityIndex, EntityType};

/// Sparse token counts, sorted by token id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BagOfWords {
    entries: Vec<(u32, u32)>,
}

impl BagOfWords {
    pub fn new() -> BagOfWords {
        BagOfWords::default()
    }

    pub fn from_ids<I: IntoIterator<Item = u32>>(ids: I) -> BagOfWords {
        let mut ids: Vec<u32> = ids.into_iter().collect();
        ids.sort_unstable();
        let mut entries: Vec<(u32, u32)> = Vec::new();
        for id in ids {
            match entries.last_mut() {
                Some((last, c)) if *last == id => *c += 1,
                _ => entries.push((id, 1)),
            }
        }
        BagOfWords { entries }
    }

    pub fn add(&mut self, id: u32, count: u32) {
        if count == 0 {
            return;
        }
        match self.entries.binary_search_by_key(&id, |e| e.0) {
            Ok(i) => self.entries[i].1 += count,
            Err(i) => self.entries.insert(i, (id, count)),
        }
    }

    pub fn extend(&mut self, other: &BagOfWords) {
        for &(id, c) in &other.entries {
            self.add(id, c);
        }
    }

    pub fn count(&self, id: u32) -> u32 {
        self.entries
            .binary_search_by_key(&id, |e| e.0)
            .map_or(0, |i| self.entries[i].1)
    }

    pub fn contains(&self, id: u32) -> bool {
        self.count(id) > 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.entries.iter().copied()
    }

    /// Number of distinct tokens.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> u32 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// Size of the multiset intersection.
    pub fn overlap(&self, other: &BagOfWords) -> u32 {
        let (mut i, mut j, mut n) = (0, 0, 0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += a[i].1.min(b[j].1);
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Use the dialog history, not only the last user utterance.
    pub use_history: bool,
    pub time_features: bool,
    pub speaker_features: bool,
    pub match_type: bool,
    /// Type a candidate entity even when it does not occur in the context.
    pub match_type_no_history: bool,
    pub bigrams: bool,
    /// Number memory slots from the most recent one instead of from the start.
    pub recency_time: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            use_history: true,
            time_features: true,
            speaker_features: true,
            match_type: false,
            match_type_no_history: false,
            bigrams: false,
            recency_time: false,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.match_type_no_history && !self.match_type {
            return Err(Error::InvalidInput("match_type_no_history requires match_type".into()));
        }
        Ok(())
    }

    /// Time token position of memory slot `i` (0-based) out of `len` slots.
    pub fn time_position(&self, i: usize, len: usize) -> usize {
        if self.recency_time {
            len - i
        } else {
            i + 1
        }
    }
}

/// Token counts of the in-vocabulary tokens of `text` (and its bigrams when
/// the vocabulary has them).
pub fn phi(text: &str, vocab: &Vocabulary) -> BagOfWords {
    let toks = tokenize(text);
    let mut ids: Vec<u32> = toks.iter().filter_map(|t| vocab.word_id(t)).collect();
    if vocab.uses_bigrams() {
        ids.extend(toks.windows(2).filter_map(|w| vocab.word_id(&bigram(&w[0], &w[1]))));
    }
    BagOfWords::from_ids(ids)
}

/// One bag per memory slot with time and speaker tokens as configured.
pub fn encode_memory(history: &[Turn], vocab: &Vocabulary, cfg: &FeatureConfig) -> Vec<BagOfWords> {
    history
        .iter()
        .enumerate()
        .map(|(i, turn)| {
            let mut bag = phi(&turn.text, vocab);
            if cfg.time_features {
                bag.add(vocab.time_id(cfg.time_position(i, history.len())), 1);
            }
            if cfg.speaker_features {
                bag.add(vocab.speaker_id(turn.speaker), 1);
            }
            bag
        })
        .collect()
}

/// A set of entity types as a 7-bit mask.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct TypeSet(pub u8);

impl TypeSet {
    pub fn insert(&mut self, ty: EntityType) {
        self.0 |= 1 << ty.index();
    }

    pub fn contains(self, ty: EntityType) -> bool {
        self.0 & (1 << ty.index()) != 0
    }

    pub fn union(self, other: TypeSet) -> TypeSet {
        TypeSet(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = EntityType> {
        EntityType::ALL.into_iter().filter(move |&t| self.contains(t))
    }
}

/// Entity types of the words that are KB entities, occur in the candidate,
/// and (unless `no_history`) occur in the context.
pub fn match_types(candidate: &str, context: &HashSet<String>, index: &EntityIndex, no_history: bool) -> TypeSet {
    let mut set = TypeSet::default();
    for w in tokenize(candidate) {
        if let Some(ty) = index.entity_type_of(&w) {
            if no_history || context.contains(&w) {
                set.insert(ty);
            }
        }
    }
    set
}

/// Adds one type token per matched entity type to a candidate bag.
pub fn match_type_augment(
    candidate_bag: &BagOfWords,
    candidate: &str,
    context: &HashSet<String>,
    index: &EntityIndex,
    cfg: &FeatureConfig,
    vocab: &Vocabulary,
) -> BagOfWords {
    let mut bag = candidate_bag.clone();
    if cfg.match_type {
        for ty in match_types(candidate, context, index, cfg.match_type_no_history).iter() {
            bag.add(vocab.type_id(ty), 1);
        }
    }
    bag
}

/// The words a match-type context is built from.
pub fn context_words(input: &str, memory: &[Turn], use_history: bool) -> HashSet<String> {
    let mut words: HashSet<String> = tokenize(input).into_iter().collect();
    if use_history {
        for t in memory {
            words.extend(tokenize(&t.text));
        }
    }
    words
}

fn entity_ids(text: &str, index: &EntityIndex) -> Vec<u32> {
    let mut ids: Vec<u32> = tokenize(text).iter().filter_map(|w| index.id_of(w)).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Candidate bags plus an entity → candidates index for fast match typing.
#[derive(Debug, Clone)]
pub struct EncodedCandidates {
    pub bags: Vec<BagOfWords>,
    /// Every entity type present in each candidate.
    pub all_types: Vec<TypeSet>,
    by_entity: HashMap<u32, Vec<(u32, EntityType)>>,
}

impl EncodedCandidates {
    pub fn new(candidates: &CandidateSet, vocab: &Vocabulary, index: &EntityIndex) -> EncodedCandidates {
        let mut bags = Vec::with_capacity(candidates.len());
        let mut all_types = Vec::with_capacity(candidates.len());
        let mut by_entity: HashMap<u32, Vec<(u32, EntityType)>> = HashMap::new();
        for (j, text) in candidates.iter().enumerate() {
            bags.push(phi(text, vocab));
            let mut set = TypeSet::default();
            for id in entity_ids(text, index) {
                let ty = index.type_of_id(id);
                set.insert(ty);
                by_entity.entry(id).or_default().push((j as u32, ty));
            }
            all_types.push(set);
        }
        EncodedCandidates {
            bags,
            all_types,
            by_entity,
        }
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    /// Match types of every candidate that gains at least one type token.
    pub fn match_types(&self, context_entities: &[u32], no_history: bool) -> Vec<(u32, TypeSet)> {
        if no_history {
            return self
                .all_types
                .iter()
                .enumerate()
                .filter(|(_, t)| !t.is_empty())
                .map(|(j, &t)| (j as u32, t))
                .collect();
        }
        let mut acc: HashMap<u32, TypeSet> = HashMap::new();
        for id in context_entities {
            for &(j, ty) in self.by_entity.get(id).map_or(&[][..], Vec::as_slice) {
                acc.entry(j).or_default().insert(ty);
            }
        }
        let mut out: Vec<(u32, TypeSet)> = acc.into_iter().collect();
        out.sort_unstable_by_key(|e| e.0);
        out
    }

    /// Dense per-candidate match types.
    pub fn match_types_dense(&self, context_entities: &[u32], no_history: bool) -> Vec<TypeSet> {
        let mut dense = vec![TypeSet::default(); self.len()];
        for (j, t) in self.match_types(context_entities, no_history) {
            dense[j as usize] = t;
        }
        dense
    }
}

/// One prediction point in id space.
#[derive(Debug, Clone)]
pub struct EncodedExample {
    /// Number of dialog turns in memory (a prefix of the dialog).
    pub mem_len: usize,
    pub input: BagOfWords,
    /// Sorted entity ids of the match-type context.
    pub context_entities: Vec<u32>,
    pub gold: usize,
}

/// A dialog with per-turn bags computed once and shared by its examples.
#[derive(Debug, Clone)]
pub struct EncodedDialog {
    pub turns: Vec<(BagOfWords, Speaker)>,
    pub examples: Vec<EncodedExample>,
}

impl EncodedDialog {
    /// Memory bags of an example with time and speaker tokens, as
    /// [`encode_memory`] would produce them.
    pub fn memory(&self, ex: &EncodedExample, vocab: &Vocabulary, cfg: &FeatureConfig) -> Vec<BagOfWords> {
        (0..ex.mem_len).map(|i| self.slot(i, ex.mem_len, vocab, cfg)).collect()
    }

    pub fn slot(&self, i: usize, mem_len: usize, vocab: &Vocabulary, cfg: &FeatureConfig) -> BagOfWords {
        let (bag, speaker) = &self.turns[i];
        let mut bag = bag.clone();
        if cfg.time_features {
            bag.add(vocab.time_id(cfg.time_position(i, mem_len)), 1);
        }
        if cfg.speaker_features {
            bag.add(vocab.speaker_id(*speaker), 1);
        }
        bag
    }

    /// Input bag, concatenated with the memory turns when `use_history` is set.
    pub fn flat_input(&self, ex: &EncodedExample, cfg: &FeatureConfig) -> BagOfWords {
        let mut bag = ex.input.clone();
        if cfg.use_history {
            for (b, _) in &self.turns[..ex.mem_len] {
                bag.extend(b);
            }
        }
        bag
    }

    pub fn num_examples(&self) -> usize {
        self.examples.len()
    }
}

/// Turns dialogs into id-space examples for one vocabulary and feature setup.
#[derive(Debug, Clone)]
pub struct Encoder<'a> {
    pub vocab: &'a Vocabulary,
    pub index: &'a EntityIndex,
    pub cfg: FeatureConfig,
}

impl<'a> Encoder<'a> {
    pub fn new(vocab: &'a Vocabulary, index: &'a EntityIndex, cfg: FeatureConfig) -> Encoder<'a> {
        Encoder { vocab, index, cfg }
    }

    pub fn dialog(&self, dialog: &Dialog, candidates: &CandidateSet) -> Result<EncodedDialog> {
        let turns: Vec<(BagOfWords, Speaker)> = dialog
            .turns
            .iter()
            .map(|t| (phi(&t.text, self.vocab), t.speaker))
            .collect();
        let turn_entities: Vec<Vec<u32>> = dialog.turns.iter().map(|t| entity_ids(&t.text, self.index)).collect();
        let mut examples = Vec::new();
        for ex in crate::corpus::to_examples(dialog) {
            let mem_len = ex.memory().len();
            let mut context = entity_ids(ex.input, self.index);
            if self.cfg.use_history {
                for ids in &turn_entities[..mem_len] {
                    context.extend(ids);
                }
                context.sort_unstable();
                context.dedup();
            }
            examples.push(EncodedExample {
                mem_len,
                input: phi(ex.input, self.vocab),
                context_entities: context,
                gold: candidates.gold_index(ex.gold)?,
            });
        }
        Ok(EncodedDialog { turns, examples })
    }

    pub fn dialogs(&self, dialogs: &[Dialog], candidates: &CandidateSet) -> Result<Vec<EncodedDialog>> {
        crate::parallel::try_map(dialogs, |d| self.dialog(d, candidates))
    }

    pub fn candidates(&self, candidates: &CandidateSet) -> EncodedCandidates {
        EncodedCandidates::new(candidates, self.vocab, self.index)
    }
}

/// Everything a model needs besides its parameters: the candidate set, the
/// vocabulary and the KB entity index.
#[derive(Debug, Clone)]
pub struct Resources {
    pub candidates: CandidateSet,
    pub vocab: Vocabulary,
    pub index: EntityIndex,
}

impl Resources {
    pub fn new(candidates: CandidateSet, vocab: Vocabulary, index: EntityIndex) -> Resources {
        Resources {
            candidates,
            vocab,
            index,
        }
    }

    pub fn encoder(&self, cfg: FeatureConfig) -> Encoder<'_> {
        Encoder::new(&self.vocab, &self.index, cfg)
    }
}

/// Inverse document frequencies over training utterances.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfTable {
    idf: Vec<f64>,
    docs: usize,
}

impl IdfTable {
    /// `ln(N / df)`; tokens that occur in no document get weight 0.
    pub fn fit<'b, I>(docs: I, vocab_size: usize) -> IdfTable
    where
        I: IntoIterator<Item = &'b BagOfWords>,
    {
        let mut df = vec![0usize; vocab_size];
        let mut n = 0;
        for d in docs {
            n += 1;
            for (id, _) in d.iter() {
                df[id as usize] += 1;
            }
        }
        let idf = df
            .iter()
            .map(|&f| if f == 0 { 0.0 } else { (n as f64 / f as f64).ln() })
            .collect();
        IdfTable { idf, docs: n }
    }

    /// Table in which every token weighs 1.
    pub fn uniform(vocab_size: usize) -> IdfTable {
        IdfTable {
            idf: vec![1.0; vocab_size],
            docs: 0,
        }
    }

    pub fn idf(&self, id: u32) -> f64 {
        self.idf.get(id as usize).copied().unwrap_or(0.0)
    }

    pub fn num_docs(&self) -> usize {
        self.docs
    }

    pub fn weight(&self, bag: &BagOfWords) -> Vec<(u32, f64)> {
        bag.iter().map(|(id, c)| (id, c as f64 * self.idf(id))).collect()
    }
}

pub fn norm(v: &[(u32, f64)]) -> f64 {
    v.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt()
}

pub fn sparse_dot(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    s
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[(u32, f64)], b: &[(u32, f64)]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        sparse_dot(a, b) / (na * nb)
    }
}
