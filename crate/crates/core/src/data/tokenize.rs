//! Wordpiece tokenization: whitespace pre-split with punctuation broken out
//! as single characters, then greedy longest-match-first subword segmentation.

use super::vocab::{lower_chars, Vocab};

/// A whitespace/punctuation-level word with its character span in the
/// original text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

/// Split into words on whitespace; punctuation characters become single-char
/// words. Spans are character offsets into the original text.
pub fn pre_split(text: &str) -> Vec<Word> {
    let mut words = Vec::new();
    let mut current = String::new();
    let mut start = 0usize;
    let flush = |words: &mut Vec<Word>, current: &mut String, start: usize, end: usize| {
        if !current.is_empty() {
            words.push(Word {
                text: std::mem::take(current),
                char_start: start,
                char_end: end,
            });
        }
    };
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            flush(&mut words, &mut current, start, i);
        } else if is_punctuation(c) {
            flush(&mut words, &mut current, start, i);
            words.push(Word {
                text: c.to_string(),
                char_start: i,
                char_end: i + 1,
            });
        } else {
            if current.is_empty() {
                start = i;
            }
            current.push(c);
        }
    }
    let n = text.chars().count();
    flush(&mut words, &mut current, start, n);
    words
}

fn is_punctuation(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Tokenize into subword pieces, returning the pieces and one character span
/// per piece into the original text. Continuation pieces carry a `##` prefix;
/// their spans exclude it. A word that cannot be fully segmented becomes a
/// single `[UNK]` spanning the whole word. Total: never fails.
pub fn wordpiece_tokenize(text: &str, vocab: &Vocab) -> (Vec<String>, Vec<(usize, usize)>) {
    let mut pieces = Vec::new();
    let mut spans = Vec::new();
    for word in pre_split(text) {
        match segment_word(&word.text, vocab) {
            Some(parts) => {
                for (piece, lo, hi) in parts {
                    pieces.push(piece);
                    spans.push((word.char_start + lo, word.char_start + hi));
                }
            }
            None => {
                pieces.push(super::vocab::UNK.to_string());
                spans.push((word.char_start, word.char_end));
            }
        }
    }
    (pieces, spans)
}

/// Greedy longest-match-first segmentation of one word (matched lowercase).
/// Returns piece strings with word-relative char ranges, or `None` if the
/// word cannot be covered.
fn segment_word(word: &str, vocab: &Vocab) -> Option<Vec<(String, usize, usize)>> {
    let chars: Vec<char> = lower_chars(word).chars().collect();
    if chars.is_empty() {
        return Some(Vec::new());
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let mut end = chars.len();
        let mut matched = None;
        while start < end {
            let body: String = chars[start..end].iter().collect();
            let candidate = if start == 0 { body } else { format!("##{body}") };
            if vocab.id(&candidate).is_some() {
                matched = Some((candidate, start, end));
                break;
            }
            end -= 1;
        }
        match matched {
            Some((piece, lo, hi)) => {
                out.push((piece, lo, hi));
                start = hi;
            }
            None => return None,
        }
    }
    Some(out)
}
