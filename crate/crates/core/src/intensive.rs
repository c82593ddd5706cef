//! Intensive reading module: span prediction over the passage, an internal
//! front verifier trained jointly with the span head, optional question-aware
//! matching layers, and the threshold-based answerable verification scores.
//!
//! Span scores work on pre-softmax logits throughout: the no-answer score is
//! `s[0] + e[0]` (the `[CLS]` position) and the has-answer score is the best
//! `s[k] + e[l]` over valid passage spans, so their difference is
//! scale-meaningful for the rear verification fusion.

use std::collections::BTreeMap;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{multi_head_attention, AttentionWeights, Encoder, EncoderConfig, Mode};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const LN_EPS: f64 = 1e-5;
const PAD_BIAS: f64 = -1e30;

/// Default cap on answer length in tokens; unbounded spans admit degenerate
/// answers.
pub const DEFAULT_MAX_ANSWER_LEN: usize = 30;

/// How many scored spans the per-question dump keeps.
pub const DEFAULT_N_BEST: usize = 20;

/// Loss family for the internal front verifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IfvVariant {
    /// Two-logit softmax cross entropy.
    Ce,
    /// Single sigmoid output with binary cross entropy.
    Be,
    /// Single linear output with squared error.
    Mse,
}

impl std::str::FromStr for IfvVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<IfvVariant> {
        match s.to_ascii_lowercase().as_str() {
            "ce" => Ok(IfvVariant::Ce),
            "be" => Ok(IfvVariant::Be),
            "mse" => Ok(IfvVariant::Mse),
            other => Err(Error::Config(format!("unknown I-FV variant `{other}`"))),
        }
    }
}

/// Question-aware matching selection. Off by default; the extra layers exist
/// for the matching-interaction ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchingKind {
    None,
    Ca,
    Ma,
}

impl std::str::FromStr for MatchingKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<MatchingKind> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(MatchingKind::None),
            "ca" => Ok(MatchingKind::Ca),
            "ma" => Ok(MatchingKind::Ma),
            other => Err(Error::Config(format!("unknown matching kind `{other}`"))),
        }
    }
}

/// Per-position start/end logits; padded positions carry `-inf`.
#[derive(Debug, Clone)]
pub struct SpanLogits {
    pub s: Vec<f64>,
    pub e: Vec<f64>,
}

/// The threshold-verification score bundle. `score_diff` is the final
/// no-answer score of this module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TavScores {
    pub score_has: f64,
    pub score_null: f64,
    pub score_diff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSpan {
    pub span: (usize, usize),
    pub score: f64,
}

/// Scores plus the winning span and an n-best list, all in input-token
/// coordinates of one window.
#[derive(Debug, Clone)]
pub struct SpanPrediction {
    pub scores: TavScores,
    pub best_span: (usize, usize),
    pub n_best: Vec<ScoredSpan>,
}

/// Which positions may start or end an answer span, and how long a span may
/// run. Only passage tokens qualify; `[CLS]`/`[SEP]`/question/padding do not.
#[derive(Debug, Clone)]
pub struct SpanCandidates {
    pub valid: Vec<bool>,
    pub max_answer_len: usize,
}

impl SpanCandidates {
    /// Candidates for a feature window: exactly the passage-token positions.
    pub fn for_window(
        seq_len: usize,
        passage_offset: usize,
        passage_len: usize,
        max_answer_len: usize,
    ) -> SpanCandidates {
        let mut valid = vec![false; seq_len];
        for v in valid
            .iter_mut()
            .skip(passage_offset)
            .take(passage_len.min(seq_len.saturating_sub(passage_offset)))
        {
            *v = true;
        }
        SpanCandidates {
            valid,
            max_answer_len,
        }
    }
}

enum IfvHead {
    Ce { w: Tensor, b: Tensor },
    Be { w: Tensor, b: Tensor },
    Mse { w: Tensor, b: Tensor },
}

enum MatchingLayer {
    None,
    /// One multi-head attention layer with queries from the full sequence and
    /// keys/values from the question rows, with the encoder's residual +
    /// layer-norm template.
    Ca {
        attn: AttentionWeights,
        ln_gamma: Tensor,
        ln_beta: Tensor,
    },
    /// Bilinear matching over question positions: row-stochastic weights over
    /// the question, output is the weighted sum of question vectors.
    Ma { w: Tensor, b: Tensor },
}

pub struct IntensiveReader {
    pub encoder: Encoder,
    matching: MatchingLayer,
    /// (hidden, 2) span head: column 0 start logits, column 1 end logits.
    pub span_w: Tensor,
    pub span_b: Tensor,
    ifv: IfvHead,
    variant: IfvVariant,
    matching_kind: MatchingKind,
}

impl IntensiveReader {
    pub fn init(
        config: EncoderConfig,
        variant: IfvVariant,
        matching_kind: MatchingKind,
        rng: &mut ChaCha8Rng,
    ) -> Result<IntensiveReader> {
        let d = config.hidden_dim;
        let encoder = Encoder::init(config, rng)?;
        let span_w = Tensor::randn(&[d, 2], 0.02, rng);
        let span_b = Tensor::parameter(&[2], vec![0.0; 2]);
        let ifv = match variant {
            IfvVariant::Ce => IfvHead::Ce {
                w: Tensor::randn(&[d, 2], 0.02, rng),
                b: Tensor::parameter(&[2], vec![0.0; 2]),
            },
            IfvVariant::Be => IfvHead::Be {
                w: Tensor::randn(&[d, 1], 0.02, rng),
                b: Tensor::parameter(&[1], vec![0.0]),
            },
            IfvVariant::Mse => IfvHead::Mse {
                w: Tensor::randn(&[d, 1], 0.02, rng),
                b: Tensor::parameter(&[1], vec![0.0]),
            },
        };
        let matching = match matching_kind {
            MatchingKind::None => MatchingLayer::None,
            MatchingKind::Ca => MatchingLayer::Ca {
                attn: AttentionWeights::init(d, rng),
                ln_gamma: Tensor::parameter(&[d], vec![1.0; d]),
                ln_beta: Tensor::parameter(&[d], vec![0.0; d]),
            },
            MatchingKind::Ma => MatchingLayer::Ma {
                w: Tensor::randn(&[d, d], 0.02, rng),
                b: Tensor::parameter(&[d], vec![0.0; d]),
            },
        };
        Ok(IntensiveReader {
            encoder,
            matching,
            span_w,
            span_b,
            ifv,
            variant,
            matching_kind,
        })
    }

    pub fn ifv_variant(&self) -> IfvVariant {
        self.variant
    }

    pub fn matching_kind(&self) -> MatchingKind {
        self.matching_kind
    }

    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = self.encoder.named_params("encoder");
        out.push(("span.w".into(), self.span_w.clone()));
        out.push(("span.b".into(), self.span_b.clone()));
        match &self.ifv {
            IfvHead::Ce { w, b } | IfvHead::Be { w, b } | IfvHead::Mse { w, b } => {
                out.push(("ifv.w".into(), w.clone()));
                out.push(("ifv.b".into(), b.clone()));
            }
        }
        match &self.matching {
            MatchingLayer::None => {}
            MatchingLayer::Ca {
                attn,
                ln_gamma,
                ln_beta,
            } => {
                attn.named_params("matching.ca", &mut out);
                out.push(("matching.ca.ln.gamma".into(), ln_gamma.clone()));
                out.push(("matching.ca.ln.beta".into(), ln_beta.clone()));
            }
            MatchingLayer::Ma { w, b } => {
                out.push(("matching.ma.w".into(), w.clone()));
                out.push(("matching.ma.b".into(), b.clone()));
            }
        }
        out
    }

    /// Encode, apply the optional matching layer, and compute span logits.
    pub fn forward(
        &self,
        input_ids: &[usize],
        type_ids: &[usize],
        attention_mask: &[u8],
        mode: &mut Mode,
    ) -> Result<IntensiveForward> {
        let h = self
            .encoder
            .encode(input_ids, type_ids, attention_mask, mode)?;
        let h_prime = match &self.matching {
            MatchingLayer::None => h,
            MatchingLayer::Ca {
                attn,
                ln_gamma,
                ln_beta,
            } => {
                let (h_q, _) = split_question_passage(&h, type_ids, attention_mask)?;
                let out = cross_attention_core(&h, &h_q, attn, self.encoder.config.num_heads, mode)?;
                let out = mode.apply_dropout(out);
                h.add(&out)?.layer_norm(ln_gamma, ln_beta, LN_EPS)?
            }
            MatchingLayer::Ma { w, b } => {
                let (h_q, _) = split_question_passage(&h, type_ids, attention_mask)?;
                matching_attention(&h, &h_q, w, b)?
            }
        };
        let span = span_forward(&h_prime, &self.span_w, &self.span_b)?;
        let (s_masked, e_masked) = mask_span_columns(&span, attention_mask)?;
        Ok(IntensiveForward {
            h_prime,
            s_masked,
            e_masked,
        })
    }

    /// Internal front verification loss on the pooled first row of `H'`.
    pub fn ifv_loss(&self, fwd: &IntensiveForward, y: u8) -> Result<Tensor> {
        if y > 1 {
            return Err(Error::Label(format!("answerability target {y} not in {{0, 1}}")));
        }
        let h1 = fwd.h_prime.slice_rows(0, 1)?;
        match &self.ifv {
            IfvHead::Ce { w, b } => {
                let logits = h1.matmul(w)?.add_row(b)?;
                logits.cross_entropy_logits(y as usize)
            }
            IfvHead::Be { w, b } => {
                let z = h1.matmul(w)?.add_row(b)?;
                z.bce_with_logits(y as f64)
            }
            IfvHead::Mse { w, b } => {
                let z = h1.matmul(w)?.add_row(b)?;
                let target = Tensor::constant(&[1, 1], vec![y as f64]);
                let diff = z.sub(&target)?;
                Ok(diff.mul(&diff)?.sum())
            }
        }
    }
}

/// Forward products of one sequence: the matched representation and the
/// padding-masked start/end logit columns.
pub struct IntensiveForward {
    pub h_prime: Tensor,
    /// (n, 1) start logits with padded positions pushed to -1e30.
    pub s_masked: Tensor,
    /// (n, 1) end logits, same masking.
    pub e_masked: Tensor,
}

impl IntensiveForward {
    /// Extract plain span logits, with padded positions at `-inf`.
    pub fn span_logits(&self, attention_mask: &[u8]) -> SpanLogits {
        let to_vec = |t: &Tensor| -> Vec<f64> {
            t.to_vec()
                .iter()
                .zip(attention_mask)
                .map(|(&v, &m)| if m == 1 { v } else { f64::NEG_INFINITY })
                .collect()
        };
        SpanLogits {
            s: to_vec(&self.s_masked),
            e: to_vec(&self.e_masked),
        }
    }
}

/// Split the hidden states into question rows and passage rows by type id,
/// dropping `[CLS]`, both `[SEP]`s, and padding.
pub fn split_question_passage(
    h: &Tensor,
    type_ids: &[usize],
    attention_mask: &[u8],
) -> Result<(Tensor, Tensor)> {
    let (n, _) = h.check_2d("split_question_passage")?;
    if type_ids.len() != n || attention_mask.len() != n {
        return Err(Error::shape(
            "split_question_passage",
            format!("{n} rows vs {} type ids", type_ids.len()),
        ));
    }
    let seg0: Vec<usize> = (0..n)
        .filter(|&i| attention_mask[i] == 1 && type_ids[i] == 0)
        .collect();
    let seg1: Vec<usize> = (0..n)
        .filter(|&i| attention_mask[i] == 1 && type_ids[i] == 1)
        .collect();
    // seg0 is [CLS] + question + [SEP]; seg1 is passage + [SEP]
    if seg0.len() < 3 {
        return Err(Error::shape(
            "split_question_passage",
            "empty question segment",
        ));
    }
    if seg1.len() < 2 {
        return Err(Error::shape(
            "split_question_passage",
            "empty passage segment",
        ));
    }
    let q_idx = &seg0[1..seg0.len() - 1];
    let p_idx = &seg1[..seg1.len() - 1];
    Ok((h.gather_rows(q_idx)?, h.gather_rows(p_idx)?))
}

/// The attention core of the cross-attention matching layer: queries from the
/// full sequence, keys and values from the question representation.
pub fn cross_attention_core(
    h: &Tensor,
    h_q: &Tensor,
    weights: &AttentionWeights,
    num_heads: usize,
    mode: &mut Mode,
) -> Result<Tensor> {
    multi_head_attention(h, h_q, None, weights, num_heads, mode)
}

/// Bilinear matching attention: `M = softmax(H (W H_Q^T + b)^T)` row-wise
/// over question positions, `H' = M H_Q`.
pub fn matching_attention(h: &Tensor, h_q: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (_, d) = h.check_2d("matching_attention")?;
    let (_, dq) = h_q.check_2d("matching_attention")?;
    if d != dq {
        return Err(Error::shape(
            "matching_attention",
            format!("hidden dims differ: {d} vs {dq}"),
        ));
    }
    // transformed question vectors: row j is W q_j + b
    let t = h_q.matmul(&w.transpose()?)?.add_row(b)?;
    let scores = h.matmul(&t.transpose()?)?;
    let m = scores.softmax();
    m.matmul(h_q)
}

/// Per-position affine map to (start, end) logits.
pub fn span_forward(h_prime: &Tensor, span_w: &Tensor, span_b: &Tensor) -> Result<Tensor> {
    h_prime.matmul(span_w)?.add_row(span_b)
}

/// Split the (n, 2) span logits into start/end columns and push padded
/// positions to -1e30 so they drop out of the loss softmax.
pub fn mask_span_columns(span: &Tensor, attention_mask: &[u8]) -> Result<(Tensor, Tensor)> {
    let (n, two) = span.check_2d("mask_span_columns")?;
    if two != 2 {
        return Err(Error::shape(
            "mask_span_columns",
            format!("expected (n, 2) span logits, got width {two}"),
        ));
    }
    if attention_mask.len() != n {
        return Err(Error::shape(
            "mask_span_columns",
            format!("{n} positions vs {} mask entries", attention_mask.len()),
        ));
    }
    let bias: Vec<f64> = attention_mask
        .iter()
        .map(|&m| if m == 1 { 0.0 } else { PAD_BIAS })
        .collect();
    let bias = Tensor::constant(&[n, 1], bias);
    let s = span.slice_cols(0, 1)?.add(&bias)?;
    let e = span.slice_cols(1, 2)?.add(&bias)?;
    Ok((s, e))
}

/// Cross entropy of the start and end positions over the unmasked sequence.
/// Unanswerable rows target the `[CLS]` position (0, 0).
pub fn span_loss(
    s_masked: &Tensor,
    e_masked: &Tensor,
    label: (usize, usize),
    attention_mask: &[u8],
) -> Result<Tensor> {
    let n = attention_mask.len();
    let (ys, ye) = label;
    for y in [ys, ye] {
        if y >= n || attention_mask[y] == 0 {
            return Err(Error::Label(format!(
                "span label {y} outside the unmasked range"
            )));
        }
    }
    if ys > ye {
        return Err(Error::Label(format!("span label start {ys} > end {ye}")));
    }
    s_masked
        .cross_entropy_logits(ys)?
        .add(&e_masked.cross_entropy_logits(ye)?)
}

/// Weighted sum of the span loss and the verification loss.
pub fn joint_loss(l_span: &Tensor, l_ans: &Tensor, alpha1: f64, alpha2: f64) -> Result<Tensor> {
    if alpha1 < 0.0 || alpha2 < 0.0 {
        return Err(Error::Config(format!(
            "loss weights must be nonnegative, got ({alpha1}, {alpha2})"
        )));
    }
    l_span.scale(alpha1).add(&l_ans.scale(alpha2))
}

/// Threshold-verification scores for one window: the no-answer score
/// `s[0] + e[0]`, the best valid span score, their difference, and the n-best
/// list. Tie-breaking is smallest start then smallest end.
pub fn tav_scores(
    qid: &str,
    logits: &SpanLogits,
    candidates: &SpanCandidates,
    n_best: usize,
) -> Result<SpanPrediction> {
    let n = logits.s.len();
    if logits.e.len() != n || candidates.valid.len() != n {
        return Err(Error::Scoring {
            qid: qid.to_string(),
            reason: format!(
                "mismatched lengths: s {} e {} valid {}",
                n,
                logits.e.len(),
                candidates.valid.len()
            ),
        });
    }
    if n < 2 {
        return Err(Error::Scoring {
            qid: qid.to_string(),
            reason: "sequence too short for span scoring".into(),
        });
    }
    let score_null = logits.s[0] + logits.e[0];

    let mut all: Vec<ScoredSpan> = Vec::new();
    let mut best: Option<ScoredSpan> = None;
    for k in 1..n {
        if !candidates.valid[k] {
            continue;
        }
        let last = (k + candidates.max_answer_len - 1).min(n - 1);
        for l in k..=last {
            if !candidates.valid[l] {
                continue;
            }
            let score = logits.s[k] + logits.e[l];
            let cand = ScoredSpan { span: (k, l), score };
            if best.as_ref().map_or(true, |b| score > b.score) {
                best = Some(cand);
            }
            all.push(cand);
        }
    }
    let best = best.ok_or_else(|| Error::Scoring {
        qid: qid.to_string(),
        reason: "no valid span positions".into(),
    })?;
    all.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.span.cmp(&b.span))
    });
    all.truncate(n_best);

    let score_has = best.score;
    Ok(SpanPrediction {
        scores: TavScores {
            score_has,
            score_null,
            score_diff: score_null - score_has,
        },
        best_span: best.span,
        n_best: all,
    })
}

/// Per-question dump entry: `qid -> {score_diff, best_span, n_best}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntensiveDumpEntry {
    pub score_diff: f64,
    pub best_span: (usize, usize),
    pub n_best: Vec<ScoredSpan>,
}

pub fn write_intensive_dump(
    path: impl AsRef<Path>,
    entries: &BTreeMap<String, IntensiveDumpEntry>,
) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(entries).expect("dump serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
#[path = "intensive_tests.rs"]
mod tests;
