//! Optimization loop: one job trains one reading module on one dataset with
//! a seeded shuffle order and seeded dropout, so a (config, seed) pair pins
//! the loss trace bit for bit.

mod adam;

pub use adam::{lr_schedule, Adam};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{build_features, make_batch, Feature, SquadExample, Vocab};
use crate::encoder::{EncoderConfig, Mode};
use crate::error::{Error, Result};
use crate::intensive::{joint_loss, span_loss, IfvVariant, IntensiveReader, MatchingKind};
use crate::model::{ModuleKind, ReaderModel};
use crate::sketchy::{efv_loss, SketchyReader};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub module: ModuleKind,
    pub learning_rate: f64,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub ifv_variant: IfvVariant,
    pub alpha1: f64,
    pub alpha2: f64,
    pub matching: MatchingKind,
    pub max_len: usize,
    pub doc_stride: usize,
}

impl TrainConfig {
    /// Desk-scale defaults. The published full-scale recipe (lr around 2e-5,
    /// two epochs, batch 32-48) assumes a large pre-trained encoder; a tiny
    /// encoder trained from scratch needs a larger rate and more epochs.
    pub fn desk_scale(module: ModuleKind, seed: u64) -> TrainConfig {
        TrainConfig {
            module,
            learning_rate: 1e-3,
            warmup_ratio: 0.1,
            weight_decay: 0.01,
            batch_size: 16,
            max_epochs: 200,
            seed,
            ifv_variant: IfvVariant::Ce,
            alpha1: 0.5,
            alpha2: 0.5,
            matching: MatchingKind::None,
            max_len: 64,
            doc_stride: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return Err(Error::Config(format!(
                "warmup_ratio {} outside [0, 1)",
                self.warmup_ratio
            )));
        }
        if self.learning_rate < 0.0 {
            return Err(Error::Config("negative learning rate".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size and max_epochs must be positive".into()));
        }
        if self.alpha1 < 0.0 || self.alpha2 < 0.0 {
            return Err(Error::Config("loss weights must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Build the module this config trains, seeded from the config.
pub fn init_model(config: &TrainConfig, encoder: EncoderConfig) -> Result<ReaderModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    Ok(match config.module {
        ModuleKind::Sketchy => ReaderModel::Sketchy(SketchyReader::init(encoder, &mut rng)?),
        ModuleKind::Intensive => ReaderModel::Intensive(IntensiveReader::init(
            encoder,
            config.ifv_variant,
            config.matching,
            &mut rng,
        )?),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Mean batch loss per optimization step.
    pub losses: Vec<f64>,
    pub steps: usize,
    pub epochs: usize,
}

/// Train the model in place and return the per-step loss trace.
pub fn train(
    config: &TrainConfig,
    examples: &[SquadExample],
    vocab: &Vocab,
    model: &ReaderModel,
) -> Result<TrainTrace> {
    config.validate()?;
    if examples.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let mut features: Vec<Feature> = Vec::new();
    for ex in examples {
        features.extend(build_features(ex, vocab, config.max_len, config.doc_stride)?);
    }

    let params = model.named_params();
    let mut opt = Adam::new(&params, config.weight_decay);
    let steps_per_epoch = features.len().div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.max_epochs;
    let dropout = model.encoder_config().dropout_rate;

    // one stream drives shuffling and dropout; consumption order is fixed
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7261_6e64);
    let mut trace = Vec::with_capacity(total_steps);
    let mut step = 0usize;

    for _epoch in 0..config.max_epochs {
        let mut order: Vec<usize> = (0..features.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch_features: Vec<Feature> =
                chunk.iter().map(|&i| features[i].clone()).collect();
            let batch = make_batch(&batch_features, vocab.pad_id())?;

            for (_, p) in &params {
                p.zero_grad();
            }
            let loss = batch_loss(config, model, &batch, dropout, &mut rng)?;
            let loss_value = loss.item();
            if !loss_value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    step,
                    qids: batch.qids.clone(),
                });
            }
            loss.backward();
            let lr = lr_schedule(step, total_steps, config.warmup_ratio, config.learning_rate)?;
            opt.step(&params, lr);
            trace.push(loss_value);
            step += 1;
        }
    }
    Ok(TrainTrace {
        losses: trace,
        steps: step,
        epochs: config.max_epochs,
    })
}

fn batch_loss(
    config: &TrainConfig,
    model: &ReaderModel,
    batch: &crate::data::Batch,
    dropout: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    let mut mode = Mode::Train { rng, rate: dropout };
    match model {
        ReaderModel::Sketchy(reader) => {
            let mut logits = Vec::with_capacity(batch.qids.len());
            for r in 0..batch.qids.len() {
                logits.push(reader.forward(
                    &batch.input_ids[r],
                    &batch.type_ids[r],
                    &batch.attention_mask[r],
                    &mut mode,
                )?);
            }
            efv_loss(&logits, &batch.ans_labels)
        }
        ReaderModel::Intensive(reader) => {
            let mut span_losses = Vec::with_capacity(batch.qids.len());
            let mut ans_losses = Vec::with_capacity(batch.qids.len());
            for r in 0..batch.qids.len() {
                let fwd = reader.forward(
                    &batch.input_ids[r],
                    &batch.type_ids[r],
                    &batch.attention_mask[r],
                    &mut mode,
                )?;
                span_losses.push(span_loss(
                    &fwd.s_masked,
                    &fwd.e_masked,
                    batch.span_labels[r],
                    &batch.attention_mask[r],
                )?);
                if config.alpha2 > 0.0 {
                    ans_losses.push(reader.ifv_loss(&fwd, batch.ans_labels[r])?);
                }
            }
            let l_span = Tensor::mean_scalars(&span_losses)?;
            if config.alpha2 > 0.0 {
                let l_ans = Tensor::mean_scalars(&ans_losses)?;
                joint_loss(&l_span, &l_ans, config.alpha1, config.alpha2)
            } else {
                Ok(l_span.scale(config.alpha1))
            }
        }
    }
}
