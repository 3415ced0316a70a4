//! Dialog data: turns, the text file format, examples, candidates, vocabularies.

mod candidates;
mod dialog;
mod examples;
mod format;
mod tokenize;
mod vocab;

pub use candidates::CandidateSet;
pub use dialog::{Dialog, Speaker, Turn, TurnKind, SILENCE};
pub use examples::{to_examples, Example};
pub use format::{format_dialogs, parse_dialogs, read_dialogs, write_dialogs};
pub use tokenize::tokenize;
pub use vocab::{bigram, Vocabulary, TIME_FEATURES};
