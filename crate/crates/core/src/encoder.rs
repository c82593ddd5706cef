//! Token ids to contextual representations: summed embeddings through a
//! stack of post-layer-norm transformer layers. The sketchy and intensive
//! readers each own an independent instance.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use crate::tensor::Mode;

const LN_EPS: f64 = 1e-5;
const MASK_BIAS: f64 = -1e30;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_positions: usize,
    pub dropout_rate: f64,
}

impl EncoderConfig {
    /// Desk-scale defaults; the full-size counterpart is out of reach here.
    pub fn desk_scale(vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            vocab_size,
            hidden_dim: 64,
            num_layers: 2,
            num_heads: 4,
            ffn_dim: 256,
            max_positions: 64,
            dropout_rate: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.num_heads == 0 {
            return Err(Error::Config("hidden_dim and num_heads must be positive".into()));
        }
        if self.hidden_dim % self.num_heads != 0 {
            return Err(Error::Config(format!(
                "hidden_dim {} not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Query/key/value/output projections of one attention block.
pub struct AttentionWeights {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
}

impl AttentionWeights {
    pub fn init(hidden: usize, rng: &mut ChaCha8Rng) -> AttentionWeights {
        AttentionWeights {
            wq: Tensor::randn(&[hidden, hidden], INIT_STD, rng),
            bq: Tensor::parameter(&[hidden], vec![0.0; hidden]),
            wk: Tensor::randn(&[hidden, hidden], INIT_STD, rng),
            bk: Tensor::parameter(&[hidden], vec![0.0; hidden]),
            wv: Tensor::randn(&[hidden, hidden], INIT_STD, rng),
            bv: Tensor::parameter(&[hidden], vec![0.0; hidden]),
            wo: Tensor::randn(&[hidden, hidden], INIT_STD, rng),
            bo: Tensor::parameter(&[hidden], vec![0.0; hidden]),
        }
    }

    pub fn named_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        for (name, t) in [
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("bk", &self.bk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
        ] {
            out.push((format!("{prefix}.{name}"), t.clone()));
        }
    }
}

pub struct LayerWeights {
    pub attn: AttentionWeights,
    pub ln1_gamma: Tensor,
    pub ln1_beta: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub ln2_gamma: Tensor,
    pub ln2_beta: Tensor,
}

impl LayerWeights {
    fn init(cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> LayerWeights {
        let d = cfg.hidden_dim;
        let f = cfg.ffn_dim;
        LayerWeights {
            attn: AttentionWeights::init(d, rng),
            ln1_gamma: Tensor::parameter(&[d], vec![1.0; d]),
            ln1_beta: Tensor::parameter(&[d], vec![0.0; d]),
            w1: Tensor::randn(&[d, f], INIT_STD, rng),
            b1: Tensor::parameter(&[f], vec![0.0; f]),
            w2: Tensor::randn(&[f, d], INIT_STD, rng),
            b2: Tensor::parameter(&[d], vec![0.0; d]),
            ln2_gamma: Tensor::parameter(&[d], vec![1.0; d]),
            ln2_beta: Tensor::parameter(&[d], vec![0.0; d]),
        }
    }

    fn named_params(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        self.attn.named_params(&format!("{prefix}.attn"), out);
        for (name, t) in [
            ("ln1.gamma", &self.ln1_gamma),
            ("ln1.beta", &self.ln1_beta),
            ("ffn.w1", &self.w1),
            ("ffn.b1", &self.b1),
            ("ffn.w2", &self.w2),
            ("ffn.b2", &self.b2),
            ("ln2.gamma", &self.ln2_gamma),
            ("ln2.beta", &self.ln2_beta),
        ] {
            out.push((format!("{prefix}.{name}"), t.clone()));
        }
    }
}

/// Embedding tables plus per-layer transformer parameters.
pub struct EncoderWeights {
    pub token_emb: Tensor,
    pub pos_emb: Tensor,
    pub type_emb: Tensor,
    pub emb_ln_gamma: Tensor,
    pub emb_ln_beta: Tensor,
    pub layers: Vec<LayerWeights>,
}

pub struct Encoder {
    pub config: EncoderConfig,
    pub weights: EncoderWeights,
}

impl Encoder {
    pub fn init(config: EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Encoder> {
        config.validate()?;
        let d = config.hidden_dim;
        let weights = EncoderWeights {
            token_emb: Tensor::randn(&[config.vocab_size, d], INIT_STD, rng),
            pos_emb: Tensor::randn(&[config.max_positions, d], INIT_STD, rng),
            type_emb: Tensor::randn(&[2, d], INIT_STD, rng),
            emb_ln_gamma: Tensor::parameter(&[d], vec![1.0; d]),
            emb_ln_beta: Tensor::parameter(&[d], vec![0.0; d]),
            layers: (0..config.num_layers)
                .map(|_| LayerWeights::init(&config, rng))
                .collect(),
        };
        Ok(Encoder { config, weights })
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        let w = &self.weights;
        for (name, t) in [
            ("token_emb", &w.token_emb),
            ("pos_emb", &w.pos_emb),
            ("type_emb", &w.type_emb),
            ("emb_ln.gamma", &w.emb_ln_gamma),
            ("emb_ln.beta", &w.emb_ln_beta),
        ] {
            out.push((format!("{prefix}.{name}"), t.clone()));
        }
        for (i, layer) in w.layers.iter().enumerate() {
            layer.named_params(&format!("{prefix}.layer{i}"), &mut out);
        }
        out
    }

    /// Token + position + type embedding sum, before norm and dropout.
    pub fn embed_sum(&self, input_ids: &[usize], type_ids: &[usize]) -> Result<Tensor> {
        if input_ids.len() != type_ids.len() {
            return Err(Error::shape(
                "embed",
                format!("{} ids vs {} type ids", input_ids.len(), type_ids.len()),
            ));
        }
        if input_ids.len() > self.config.max_positions {
            return Err(Error::index(
                "position table",
                format!(
                    "sequence of {} exceeds max_positions {}",
                    input_ids.len(),
                    self.config.max_positions
                ),
            ));
        }
        if let Some(&bad) = input_ids.iter().find(|&&i| i >= self.config.vocab_size) {
            return Err(Error::index(
                "token table",
                format!("id {bad} outside vocab of {}", self.config.vocab_size),
            ));
        }
        if let Some(&bad) = type_ids.iter().find(|&&t| t >= 2) {
            return Err(Error::index("type table", format!("type id {bad} > 1")));
        }
        let positions: Vec<usize> = (0..input_ids.len()).collect();
        let tok = self.weights.token_emb.gather_rows(input_ids)?;
        let pos = self.weights.pos_emb.gather_rows(&positions)?;
        let typ = self.weights.type_emb.gather_rows(type_ids)?;
        tok.add(&pos)?.add(&typ)
    }

    /// Embedding sublayer: summed tables, then layer norm and dropout.
    pub fn embed(&self, input_ids: &[usize], type_ids: &[usize], mode: &mut Mode) -> Result<Tensor> {
        let e = self.embed_sum(input_ids, type_ids)?;
        let e = e.layer_norm(&self.weights.emb_ln_gamma, &self.weights.emb_ln_beta, LN_EPS)?;
        Ok(mode.apply_dropout(e))
    }

    /// Full stack: embedding, then attention + feed-forward sublayers with
    /// residual connections and post-layer-norm.
    pub fn encode(
        &self,
        input_ids: &[usize],
        type_ids: &[usize],
        attention_mask: &[u8],
        mode: &mut Mode,
    ) -> Result<Tensor> {
        if attention_mask.len() != input_ids.len() {
            return Err(Error::shape(
                "encode",
                format!(
                    "{} mask entries vs {} ids",
                    attention_mask.len(),
                    input_ids.len()
                ),
            ));
        }
        let mut h = self.embed(input_ids, type_ids, mode)?;
        let mask_bias = key_mask_bias(attention_mask, attention_mask.len());
        for layer in &self.weights.layers {
            let attn_out = multi_head_attention(
                &h,
                &h,
                Some(&mask_bias),
                &layer.attn,
                self.config.num_heads,
                mode,
            )?;
            let attn_out = mode.apply_dropout(attn_out);
            h = h
                .add(&attn_out)?
                .layer_norm(&layer.ln1_gamma, &layer.ln1_beta, LN_EPS)?;
            let ffn = h
                .matmul(&layer.w1)?
                .add_row(&layer.b1)?
                .gelu()
                .matmul(&layer.w2)?
                .add_row(&layer.b2)?;
            let ffn = mode.apply_dropout(ffn);
            h = h
                .add(&ffn)?
                .layer_norm(&layer.ln2_gamma, &layer.ln2_beta, LN_EPS)?;
        }
        Ok(h)
    }
}

/// Additive attention bias over keys: 0 where the key is valid, a large
/// negative constant where it is padding. Shape (n_queries, n_keys).
pub fn key_mask_bias(key_mask: &[u8], n_queries: usize) -> Tensor {
    let m = key_mask.len();
    let mut data = vec![0.0; n_queries * m];
    for row in data.chunks_mut(m) {
        for (v, &keep) in row.iter_mut().zip(key_mask) {
            if keep == 0 {
                *v = MASK_BIAS;
            }
        }
    }
    Tensor::constant(&[n_queries, m], data)
}

/// Scaled dot-product multi-head attention. Queries come from `q_input`,
/// keys and values from `kv_input`; the encoder passes the same tensor for
/// both, the question-aware cross attention passes different ones.
pub fn multi_head_attention(
    q_input: &Tensor,
    kv_input: &Tensor,
    key_bias: Option<&Tensor>,
    weights: &AttentionWeights,
    num_heads: usize,
    mode: &mut Mode,
) -> Result<Tensor> {
    let (_, d) = q_input.check_2d("multi_head_attention")?;
    let (_, d2) = kv_input.check_2d("multi_head_attention")?;
    if d != d2 {
        return Err(Error::shape(
            "multi_head_attention",
            format!("query dim {d} vs key/value dim {d2}"),
        ));
    }
    if num_heads == 0 || d % num_heads != 0 {
        return Err(Error::Config(format!(
            "hidden dim {d} not divisible by {num_heads} heads"
        )));
    }
    let dh = d / num_heads;
    let scale = 1.0 / (dh as f64).sqrt();

    let q = q_input.matmul(&weights.wq)?.add_row(&weights.bq)?;
    let k = kv_input.matmul(&weights.wk)?.add_row(&weights.bk)?;
    let v = kv_input.matmul(&weights.wv)?.add_row(&weights.bv)?;

    let mut heads = Vec::with_capacity(num_heads);
    for h in 0..num_heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = q.slice_cols(lo, hi)?;
        let kh = k.slice_cols(lo, hi)?;
        let vh = v.slice_cols(lo, hi)?;
        let mut scores = qh.matmul(&kh.transpose()?)?.scale(scale);
        if let Some(bias) = key_bias {
            scores = scores.add(bias)?;
        }
        let probs = mode.apply_dropout(scores.softmax());
        heads.push(probs.matmul(&vh)?);
    }
    Tensor::concat_cols(&heads)?
        .matmul(&weights.wo)?
        .add_row(&weights.bo)
}

#[cfg(test)]
#[path = "encoder_tests.rs"]
mod tests;
