//! Adam with decoupled weight decay, plus the warmup/decay schedule.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment state per parameter, addressed by position in the
/// parameter list.
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
    weight_decay: f64,
}

impl Adam {
    pub fn new(params: &[(String, Tensor)], weight_decay: f64) -> Adam {
        Adam {
            m: params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect(),
            v: params.iter().map(|(_, p)| vec![0.0; p.numel()]).collect(),
            t: 0,
            weight_decay,
        }
    }

    /// One update from the accumulated gradients. Parameters without a
    /// gradient this step are left untouched. Decay is decoupled: it scales
    /// the weight directly rather than flowing through the moments.
    pub fn step(&mut self, params: &[(String, Tensor)], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for (i, (_, p)) in params.iter().enumerate() {
            let Some(grad) = p.grad() else { continue };
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for j in 0..grad.len() {
                m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * grad[j];
                v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * grad[j] * grad[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                let theta = p.get_flat(j);
                let update = m_hat / (v_hat.sqrt() + ADAM_EPS) + self.weight_decay * theta;
                p.set_flat(j, theta - lr * update);
            }
        }
    }
}

/// Linear warmup from 0 to `base_lr` over the first `warmup_ratio` of
/// training, then linear decay to 0 at `total_steps`.
pub fn lr_schedule(step: usize, total_steps: usize, warmup_ratio: f64, base_lr: f64) -> Result<f64> {
    if step > total_steps {
        return Err(Error::Config(format!(
            "schedule step {step} beyond total {total_steps}"
        )));
    }
    if total_steps == 0 {
        return Ok(0.0);
    }
    let warmup_steps = warmup_ratio * total_steps as f64;
    let s = step as f64;
    if s < warmup_steps {
        Ok(base_lr * s / warmup_steps)
    } else {
        let rest = total_steps as f64 - warmup_steps;
        if rest <= 0.0 {
            Ok(base_lr)
        } else {
            Ok(base_lr * (total_steps as f64 - s) / rest)
        }
    }
}
