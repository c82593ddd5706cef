//! Sketchy reading module: a binary answerability judgment from the pooled
//! `[CLS]` representation (external front verification). Emits
//! `score_ext = logit_na - logit_ans` from the pre-softmax logits, which is
//! what the rear verification fuses.

use std::collections::BTreeMap;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::encoder::{Encoder, EncoderConfig, Mode};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Answerability label convention used everywhere: 1 means unanswerable.
pub const LABEL_UNANSWERABLE: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfvOutput {
    pub logit_ans: f64,
    pub logit_na: f64,
    pub score_ext: f64,
}

pub struct SketchyReader {
    pub encoder: Encoder,
    /// (hidden, 2) affine head; column 0 scores answerable, column 1
    /// unanswerable, matching the label convention.
    pub head_w: Tensor,
    pub head_b: Tensor,
}

impl SketchyReader {
    pub fn init(config: EncoderConfig, rng: &mut ChaCha8Rng) -> Result<SketchyReader> {
        let d = config.hidden_dim;
        let encoder = Encoder::init(config, rng)?;
        Ok(SketchyReader {
            encoder,
            head_w: Tensor::randn(&[d, 2], 0.02, rng),
            head_b: Tensor::parameter(&[2], vec![0.0; 2]),
        })
    }

    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = self.encoder.named_params("encoder");
        out.push(("efv.w".into(), self.head_w.clone()));
        out.push(("efv.b".into(), self.head_b.clone()));
        out
    }

    /// Classification logits (1, 2) from the `[CLS]` row of `h`.
    pub fn efv_forward(&self, h: &Tensor) -> Result<Tensor> {
        if h.rows() == 0 {
            return Err(Error::shape("efv_forward", "empty sequence"));
        }
        h.slice_rows(0, 1)?.matmul(&self.head_w)?.add_row(&self.head_b)
    }

    /// Encode and score one sequence.
    pub fn forward(
        &self,
        input_ids: &[usize],
        type_ids: &[usize],
        attention_mask: &[u8],
        mode: &mut Mode,
    ) -> Result<Tensor> {
        let h = self.encoder.encode(input_ids, type_ids, attention_mask, mode)?;
        self.efv_forward(&h)
    }
}

/// Read the verdict out of a logits tensor.
pub fn efv_output(logits: &Tensor) -> EfvOutput {
    let v = logits.to_vec();
    EfvOutput {
        logit_ans: v[0],
        logit_na: v[1],
        score_ext: v[1] - v[0],
    }
}

/// Two-class cross entropy over the answerability logits, averaged over the
/// batch. `y = 1` marks unanswerable.
pub fn efv_loss(logits: &[Tensor], targets: &[u8]) -> Result<Tensor> {
    if logits.len() != targets.len() {
        return Err(Error::Alignment(format!(
            "{} logit rows vs {} targets",
            logits.len(),
            targets.len()
        )));
    }
    let mut losses = Vec::with_capacity(logits.len());
    for (l, &y) in logits.iter().zip(targets) {
        if y > 1 {
            return Err(Error::Label(format!("answerability target {y} not in {{0, 1}}")));
        }
        losses.push(l.cross_entropy_logits(y as usize)?);
    }
    Tensor::mean_scalars(&losses)
}

/// Dump `qid -> score_ext`, one entry per question.
pub fn write_score_ext(path: impl AsRef<Path>, scores: &BTreeMap<String, f64>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(scores).expect("score map serializes");
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}
