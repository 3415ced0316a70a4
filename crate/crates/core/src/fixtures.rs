//! Small hand-written corpora for unit tests.

use crate::corpus::{CandidateSet, Dialog, Turn, Vocabulary};
use crate::features::Resources;
use crate::kb::EntityIndex;

pub fn toy() -> (Vec<Dialog>, Resources) {
    let d = |pairs: &[(&str, &str)]| Dialog::new(pairs.iter().flat_map(|(u, b)| [Turn::user(*u), Turn::bot(*b)]).collect());
    let train = vec![
        d(&[("hello there", "hi how can i help"), ("book a table", "i'm on it")]),
        d(&[("hello there", "hi how can i help"), ("cheap food", "any preference on cuisine")]),
        d(&[("hello there", "good morning"), ("book a table", "i'm on it")]),
    ];
    let cands = CandidateSet::build([train.as_slice()]);
    let vocab = Vocabulary::from_dialogs([train.as_slice()], false);
    (train, Resources::new(cands, vocab, EntityIndex::default()))
}
