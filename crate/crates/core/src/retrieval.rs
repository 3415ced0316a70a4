//! Non-learned baselines: TF-IDF match and nearest neighbor.

use std::collections::HashMap;

use crate::corpus::{to_examples, Dialog};
use crate::error::{Error, Result};
use crate::eval::Ranker;
use crate::features::{
    cosine, phi, BagOfWords, EncodedCandidates, EncodedDialog, FeatureConfig, IdfTable, Resources, TypeSet,
};

/// Ranks candidates by TF-IDF weighted cosine similarity with the input.
pub struct TfIdfRanker<'a> {
    res: &'a Resources,
    cfg: FeatureConfig,
    idf: IdfTable,
    cands: EncodedCandidates,
    sq_norms: Vec<f64>,
    postings: HashMap<u32, Vec<(u32, f64)>>,
}

fn type_bag(types: TypeSet, res: &Resources) -> BagOfWords {
    BagOfWords::from_ids(types.iter().map(|t| res.vocab.type_id(t)))
}

impl<'a> TfIdfRanker<'a> {
    /// Fits IDF weights on the training utterances. With match types on, each
    /// document also carries the type tokens of the entities it mentions.
    pub fn fit(train: &[Dialog], res: &'a Resources, cfg: FeatureConfig) -> Result<TfIdfRanker<'a>> {
        cfg.validate()?;
        let enc = res.encoder(cfg);
        let docs: Vec<BagOfWords> = train
            .iter()
            .flat_map(|d| d.turns.iter())
            .map(|t| {
                let mut bag = phi(&t.text, &res.vocab);
                if cfg.match_type {
                    bag.extend(&type_bag(entity_types(&t.text, res), res));
                }
                bag
            })
            .collect();
        let idf = IdfTable::fit(&docs, res.vocab.len());
        Ok(TfIdfRanker::with_idf(res, cfg, idf, enc.candidates(&res.candidates)))
    }

    pub fn with_idf(res: &'a Resources, cfg: FeatureConfig, idf: IdfTable, cands: EncodedCandidates) -> Self {
        let weighted: Vec<Vec<(u32, f64)>> = cands.bags.iter().map(|b| idf.weight(b)).collect();
        let sq_norms = weighted.iter().map(|w| w.iter().map(|e| e.1 * e.1).sum()).collect();
        let mut postings: HashMap<u32, Vec<(u32, f64)>> = HashMap::new();
        for (j, w) in weighted.iter().enumerate() {
            for &(id, v) in w {
                if v != 0.0 {
                    postings.entry(id).or_default().push((j as u32, v));
                }
            }
        }
        TfIdfRanker {
            res,
            cfg,
            idf,
            cands,
            sq_norms,
            postings,
        }
    }

    pub fn idf(&self) -> &IdfTable {
        &self.idf
    }

    fn input_bag(&self, d: &EncodedDialog, ex: &crate::features::EncodedExample) -> BagOfWords {
        let mut bag = d.flat_input(ex, &self.cfg);
        if self.cfg.match_type {
            let mut types = TypeSet::default();
            for &id in &ex.context_entities {
                types.insert(self.res.index.type_of_id(id));
            }
            bag.extend(&type_bag(types, self.res));
        }
        bag
    }

    /// Cosine score of every candidate for one encoded example.
    pub fn scores(&self, d: &EncodedDialog, ex: &crate::features::EncodedExample) -> Vec<f64> {
        let input = self.idf.weight(&self.input_bag(d, ex));
        let in_norm = crate::features::norm(&input);
        let mut dots = vec![0.0; self.cands.len()];
        for &(id, w) in &input {
            if let Some(list) = self.postings.get(&id) {
                for &(j, v) in list {
                    dots[j as usize] += w * v;
                }
            }
        }
        let mut sq = self.sq_norms.clone();
        if self.cfg.match_type {
            let in_weight: HashMap<u32, f64> = input.iter().copied().collect();
            for (j, types) in self.cands.match_types(&ex.context_entities, self.cfg.match_type_no_history) {
                for t in types.iter() {
                    let id = self.res.vocab.type_id(t);
                    let w = self.idf.idf(id);
                    dots[j as usize] += in_weight.get(&id).copied().unwrap_or(0.0) * w;
                    sq[j as usize] += w * w;
                }
            }
        }
        dots.iter()
            .zip(&sq)
            .map(|(&dot, &s)| if in_norm == 0.0 || s == 0.0 { 0.0 } else { dot / (in_norm * s.sqrt()) })
            .collect()
    }

    /// Straightforward cosine of one candidate, for checking [`Self::scores`].
    pub fn score_one(&self, d: &EncodedDialog, ex: &crate::features::EncodedExample, j: usize) -> f64 {
        let input = self.idf.weight(&self.input_bag(d, ex));
        let mut bag = self.cands.bags[j].clone();
        if self.cfg.match_type {
            let types = self.cands.match_types_dense(&ex.context_entities, self.cfg.match_type_no_history)[j];
            bag.extend(&type_bag(types, self.res));
        }
        cosine(&input, &self.idf.weight(&bag))
    }
}

fn entity_types(text: &str, res: &Resources) -> TypeSet {
    let mut t = TypeSet::default();
    for w in crate::corpus::tokenize(text) {
        if let Some(ty) = res.index.entity_type_of(&w) {
            t.insert(ty);
        }
    }
    t
}

impl Ranker for TfIdfRanker<'_> {
    fn name(&self) -> String {
        let mut n = "tfidf".to_string();
        if self.cfg.match_type {
            n.push_str("+type");
        }
        n
    }

    fn score_dialog(&self, dialog: &Dialog) -> Result<Vec<Vec<f64>>> {
        let d = self.res.encoder(self.cfg).dialog(dialog, &self.res.candidates)?;
        Ok(d.examples.iter().map(|ex| self.scores(&d, ex)).collect())
    }
}

/// Training (utterance, response) pairs grouped by utterance.
#[derive(Debug, Clone)]
pub struct NeighborStore {
    /// Distinct training input utterances, in first-appearance order.
    pub utterances: Vec<BagOfWords>,
    /// Responses seen after each utterance with their counts, most frequent
    /// first (ties by candidate order).
    pub responses: Vec<Vec<(usize, u32)>>,
    postings: HashMap<u32, Vec<(u32, u32)>>,
}

impl NeighborStore {
    pub fn build(train: &[Dialog], res: &Resources) -> Result<NeighborStore> {
        let mut key_of: HashMap<String, usize> = HashMap::new();
        let mut utterances = Vec::new();
        let mut counts: Vec<HashMap<usize, u32>> = Vec::new();
        for d in train {
            for ex in to_examples(d) {
                let gold = res.candidates.gold_index(ex.gold)?;
                let k = *key_of.entry(ex.input.to_string()).or_insert_with(|| {
                    utterances.push(phi(ex.input, &res.vocab));
                    counts.push(HashMap::new());
                    utterances.len() - 1
                });
                *counts[k].entry(gold).or_insert(0) += 1;
            }
        }
        if utterances.is_empty() {
            return Err(Error::InvalidInput("nearest neighbor needs at least one training pair".into()));
        }
        let responses = counts
            .into_iter()
            .map(|m| {
                let mut v: Vec<(usize, u32)> = m.into_iter().collect();
                v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
                v
            })
            .collect();
        Ok(NeighborStore::from_parts(utterances, responses))
    }

    pub fn from_parts(utterances: Vec<BagOfWords>, responses: Vec<Vec<(usize, u32)>>) -> NeighborStore {
        let mut postings: HashMap<u32, Vec<(u32, u32)>> = HashMap::new();
        for (k, bag) in utterances.iter().enumerate() {
            for (id, c) in bag.iter() {
                postings.entry(id).or_default().push((k as u32, c));
            }
        }
        NeighborStore {
            utterances,
            responses,
            postings,
        }
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Index of the stored utterance with the largest multiset overlap; the
    /// earliest one wins ties.
    pub fn nearest(&self, input: &BagOfWords) -> Result<usize> {
        if self.is_empty() {
            return Err(Error::InvalidInput("empty neighbor store".into()));
        }
        let mut overlap = vec![0u32; self.len()];
        for (id, c) in input.iter() {
            for &(k, ck) in self.postings.get(&id).map_or(&[][..], Vec::as_slice) {
                overlap[k as usize] += c.min(ck);
            }
        }
        let mut best = 0;
        for (k, &o) in overlap.iter().enumerate() {
            if o > overlap[best] {
                best = k;
            }
        }
        Ok(best)
    }

    /// Candidate scores: co-occurrence counts of the nearest utterance's
    /// responses, 0 for every other candidate.
    pub fn scores(&self, input: &BagOfWords, num_candidates: usize) -> Result<Vec<f64>> {
        let k = self.nearest(input)?;
        let mut s = vec![0.0; num_candidates];
        for &(j, c) in &self.responses[k] {
            s[j] = c as f64;
        }
        Ok(s)
    }
}

pub struct NearestNeighborRanker<'a> {
    res: &'a Resources,
    store: NeighborStore,
}

impl<'a> NearestNeighborRanker<'a> {
    pub fn fit(train: &[Dialog], res: &'a Resources) -> Result<NearestNeighborRanker<'a>> {
        Ok(NearestNeighborRanker {
            res,
            store: NeighborStore::build(train, res)?,
        })
    }

    pub fn store(&self) -> &NeighborStore {
        &self.store
    }
}

impl Ranker for NearestNeighborRanker<'_> {
    fn name(&self) -> String {
        "nearest_neighbor".into()
    }

    fn score_dialog(&self, dialog: &Dialog) -> Result<Vec<Vec<f64>>> {
        to_examples(dialog)
            .iter()
            .map(|ex| self.store.scores(&phi(ex.input, &self.res.vocab), self.res.candidates.len()))
            .collect()
    }
}
