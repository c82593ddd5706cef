//! Subword vocabulary with dense ids and the four special tokens.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

use super::tokenize::pre_split;

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

/// Ordered list of subword strings; continuation pieces carry a `##` prefix.
/// Ids are dense `0..len`, so a token's id is its position.
#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    lookup: HashMap<String, usize>,
    pad_id: usize,
    unk_id: usize,
    cls_id: usize,
    sep_id: usize,
}

impl Vocab {
    pub fn new(tokens: Vec<String>) -> Result<Vocab> {
        let mut lookup = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if lookup.insert(t.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate vocab token `{t}`")));
            }
        }
        let special = |name: &str| -> Result<usize> {
            lookup
                .get(name)
                .copied()
                .ok_or_else(|| Error::Config(format!("vocab is missing special token {name}")))
        };
        Ok(Vocab {
            pad_id: special(PAD)?,
            unk_id: special(UNK)?,
            cls_id: special(CLS)?,
            sep_id: special(SEP)?,
            tokens,
            lookup,
        })
    }

    /// Build a toy vocabulary from a corpus: the four specials, the `top_k`
    /// most frequent whole words, then every seen character as a standalone
    /// piece and as a `##` continuation piece (so any word decomposes without
    /// falling back to `[UNK]`).
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, top_k: usize) -> Result<Vocab> {
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut chars: Vec<char> = Vec::new();
        for text in texts {
            for word in pre_split(text) {
                let lower = lower_chars(&word.text);
                for c in lower.chars() {
                    if !chars.contains(&c) {
                        chars.push(c);
                    }
                }
                *counts.entry(lower).or_insert(0) += 1;
            }
        }
        let mut by_freq: Vec<(String, u64)> = counts.into_iter().collect();
        by_freq.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        chars.sort_unstable();

        let mut tokens: Vec<String> = vec![
            PAD.to_string(),
            UNK.to_string(),
            CLS.to_string(),
            SEP.to_string(),
        ];
        let mut seen: std::collections::HashSet<String> = tokens.iter().cloned().collect();
        for (word, _) in by_freq.into_iter().take(top_k) {
            if seen.insert(word.clone()) {
                tokens.push(word);
            }
        }
        for c in chars {
            let single = c.to_string();
            if seen.insert(single.clone()) {
                tokens.push(single);
            }
            let cont = format!("##{c}");
            if seen.insert(cont.clone()) {
                tokens.push(cont);
            }
        }
        Vocab::new(tokens)
    }

    /// One token per line; the line number is the id.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Vocab> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Vocab::new(text.lines().map(str::to_string).collect())
    }

    pub fn to_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.tokens.join("\n"))
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.lookup.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn pad_id(&self) -> usize {
        self.pad_id
    }

    pub fn unk_id(&self) -> usize {
        self.unk_id
    }

    pub fn cls_id(&self) -> usize {
        self.cls_id
    }

    pub fn sep_id(&self) -> usize {
        self.sep_id
    }
}

/// Per-character lowercasing that preserves the character count, keeping
/// offset bookkeeping exact.
pub(crate) fn lower_chars(s: &str) -> String {
    s.chars()
        .map(|c| c.to_lowercase().next().unwrap_or(c))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_dense_and_round_trip() {
        let v = Vocab::build(["the cat sat on the mat"], 4).unwrap();
        for id in 0..v.len() {
            let tok = v.token(id).unwrap();
            assert_eq!(v.id(tok), Some(id));
        }
        assert_eq!(v.id(PAD), Some(0));
        assert_eq!(v.id(UNK), Some(1));
        assert_eq!(v.id(CLS), Some(2));
        assert_eq!(v.id(SEP), Some(3));
    }

    #[test]
    fn build_includes_top_words_and_char_pieces() {
        let v = Vocab::build(["aa bb aa cc"], 1).unwrap();
        assert!(v.id("aa").is_some(), "most frequent word kept");
        assert!(v.id("bb").is_none(), "beyond top_k");
        for piece in ["a", "b", "c", "##a", "##b", "##c"] {
            assert!(v.id(piece).is_some(), "missing {piece}");
        }
    }

    #[test]
    fn duplicate_token_is_rejected() {
        let toks = vec![
            PAD.into(),
            UNK.into(),
            CLS.into(),
            SEP.into(),
            "x".to_string(),
            "x".to_string(),
        ];
        assert!(Vocab::new(toks).is_err());
    }

    #[test]
    fn missing_special_is_rejected() {
        let toks = vec![PAD.into(), UNK.into(), CLS.into()];
        assert!(Vocab::new(toks).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = Vocab::build(["alpha beta gamma"], 8).unwrap();
        v.to_file(&path).unwrap();
        let w = Vocab::from_file(&path).unwrap();
        assert_eq!(v.len(), w.len());
        for id in 0..v.len() {
            assert_eq!(v.token(id), w.token(id));
        }
    }
}
