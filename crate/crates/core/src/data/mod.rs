//! Data pipeline: SQuAD2.0-format ingestion, wordpiece tokenization, and
//! windowed model features with span labels and character offset maps.

mod features;
mod squad;
mod tokenize;
mod vocab;

pub use features::{build_features, make_batch, write_features_jsonl, Batch, Feature};
pub use squad::{load_squad, GoldAnswer, SquadExample};
pub use tokenize::{pre_split, wordpiece_tokenize};
pub use vocab::Vocab;

/// Slice a string by character (not byte) offsets.
pub(crate) fn char_slice(s: &str, lo: usize, hi: usize) -> String {
    s.chars().skip(lo).take(hi.saturating_sub(lo)).collect()
}
