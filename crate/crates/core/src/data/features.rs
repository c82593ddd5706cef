//! Windowed model features: `[CLS] question [SEP] passage-window [SEP]`.
//!
//! Token indices are 0-based with `[CLS]` at position 0; the null span label
//! is `(0, 0)`, which is what the no-answer score reads (start and end logit
//! of the `[CLS]` position).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::squad::SquadExample;
use super::tokenize::wordpiece_tokenize;
use super::vocab::Vocab;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Feature {
    pub qid: String,
    /// Which passage window of the question this is.
    pub window_index: usize,
    pub input_ids: Vec<usize>,
    /// 0 for `[CLS]` + question + first `[SEP]`, 1 for passage + final `[SEP]`.
    pub type_ids: Vec<usize>,
    pub attention_mask: Vec<u8>,
    /// Index of the first passage token within `input_ids`.
    pub passage_offset: usize,
    /// Number of passage tokens in this window.
    pub passage_len: usize,
    /// Character span into the original passage, one per passage token.
    pub offset_map: Vec<(usize, usize)>,
    /// First passage token index (within the whole tokenized passage) covered
    /// by this window.
    pub window_start: usize,
    /// (start, end) token indices into `input_ids`; `(0, 0)` marks no answer
    /// in this window.
    pub span_label: (usize, usize),
    /// 1 when this window carries no answer.
    pub ans_label: u8,
}

/// Tokenize and window one example. A passage longer than the window budget
/// is split into overlapping windows advanced by `doc_stride`; a window that
/// does not contain the gold span is labeled unanswerable.
pub fn build_features(
    ex: &SquadExample,
    vocab: &Vocab,
    max_len: usize,
    doc_stride: usize,
) -> Result<Vec<Feature>> {
    let fail = |reason: String| Error::FeatureBuild {
        qid: ex.qid.clone(),
        reason,
    };

    let (q_pieces, _) = wordpiece_tokenize(&ex.question, vocab);
    let (p_pieces, p_spans) = wordpiece_tokenize(&ex.passage, vocab);
    let q_len = q_pieces.len();
    if q_len + 4 > max_len {
        return Err(fail(format!(
            "question of {q_len} pieces exceeds max_len {max_len} budget"
        )));
    }
    let capacity = max_len - q_len - 3;
    if p_pieces.len() > capacity && (doc_stride == 0 || doc_stride >= capacity) {
        return Err(fail(format!(
            "doc_stride {doc_stride} must be in 1..{capacity} (window capacity)"
        )));
    }

    let piece_id = |piece: &str| vocab.id(piece).unwrap_or(vocab.unk_id());
    let q_ids: Vec<usize> = q_pieces.iter().map(|p| piece_id(p)).collect();

    // gold span in passage-token coordinates, from the first gold answer
    let gold_tokens: Option<(usize, usize)> = if ex.is_impossible {
        None
    } else {
        match ex.gold_answers.first() {
            None => None,
            Some(gold) => {
                let gold_start = gold.char_start;
                let gold_end = gold_start + gold.text.chars().count();
                let ts = p_spans
                    .iter()
                    .position(|&(lo, hi)| lo <= gold_start && gold_start < hi)
                    .ok_or_else(|| fail(format!("gold offset {gold_start} not covered")))?;
                let te = p_spans
                    .iter()
                    .position(|&(lo, hi)| lo < gold_end && gold_end <= hi)
                    .ok_or_else(|| fail(format!("gold end {gold_end} not covered")))?;
                Some((ts, te))
            }
        }
    };

    // window starts: advance by doc_stride until the window reaches the end
    let mut starts = vec![0usize];
    while starts.last().unwrap() + capacity < p_pieces.len() {
        starts.push(starts.last().unwrap() + doc_stride);
    }

    let passage_offset = q_len + 2;
    let mut features = Vec::with_capacity(starts.len());
    for (window_index, &start) in starts.iter().enumerate() {
        let end = (start + capacity).min(p_pieces.len());
        let window_len = end - start;

        let mut input_ids = Vec::with_capacity(window_len + q_len + 3);
        input_ids.push(vocab.cls_id());
        input_ids.extend_from_slice(&q_ids);
        input_ids.push(vocab.sep_id());
        input_ids.extend(p_pieces[start..end].iter().map(|p| piece_id(p)));
        input_ids.push(vocab.sep_id());

        let mut type_ids = vec![0usize; q_len + 2];
        type_ids.extend(std::iter::repeat(1).take(window_len + 1));

        let (span_label, ans_label) = match gold_tokens {
            Some((ts, te)) if ts >= start && te < end => (
                (passage_offset + ts - start, passage_offset + te - start),
                0,
            ),
            _ => ((0, 0), 1),
        };

        features.push(Feature {
            qid: ex.qid.clone(),
            window_index,
            attention_mask: vec![1; input_ids.len()],
            input_ids,
            type_ids,
            passage_offset,
            passage_len: window_len,
            offset_map: p_spans[start..end].to_vec(),
            window_start: start,
            span_label,
            ans_label,
        });
    }
    Ok(features)
}

/// Rectangular arrays for a group of features, padded to the longest row.
#[derive(Debug, Clone)]
pub struct Batch {
    pub qids: Vec<String>,
    pub input_ids: Vec<Vec<usize>>,
    pub type_ids: Vec<Vec<usize>>,
    pub attention_mask: Vec<Vec<u8>>,
    pub span_labels: Vec<(usize, usize)>,
    pub ans_labels: Vec<u8>,
    pub width: usize,
}

/// Pad every row to the batch maximum with `pad_id` and mask 0.
pub fn make_batch(features: &[Feature], pad_id: usize) -> Result<Batch> {
    if features.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let width = features.iter().map(|f| f.input_ids.len()).max().unwrap();
    let mut batch = Batch {
        qids: Vec::with_capacity(features.len()),
        input_ids: Vec::with_capacity(features.len()),
        type_ids: Vec::with_capacity(features.len()),
        attention_mask: Vec::with_capacity(features.len()),
        span_labels: Vec::with_capacity(features.len()),
        ans_labels: Vec::with_capacity(features.len()),
        width,
    };
    for f in features {
        let mut ids = f.input_ids.clone();
        let mut types = f.type_ids.clone();
        let mut mask = f.attention_mask.clone();
        ids.resize(width, pad_id);
        types.resize(width, 0);
        mask.resize(width, 0);
        batch.qids.push(f.qid.clone());
        batch.input_ids.push(ids);
        batch.type_ids.push(types);
        batch.attention_mask.push(mask);
        batch.span_labels.push(f.span_label);
        batch.ans_labels.push(f.ans_label);
    }
    Ok(batch)
}

/// Dump features as JSON lines, one per line.
pub fn write_features_jsonl(path: impl AsRef<Path>, features: &[Feature]) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?,
    );
    for f in features {
        let line = serde_json::to_string(f).expect("feature serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}
