//! Central finite-difference gradient checker.

use super::Tensor;
use crate::error::{Error, Result};

/// Compare analytic gradients of a scalar-valued computation against central
/// finite differences and return the worst relative error,
/// `|analytic - numeric| / max(1, |numeric|)`, over every component of every
/// parameter.
///
/// `f` must rebuild the computation from the parameters' current data each
/// call, and must be free of fresh randomness (run dropout-free).
pub fn grad_check<F>(f: F, params: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn() -> Result<Tensor>,
{
    for p in params {
        p.zero_grad();
    }
    let loss = f()?;
    let loss_value = loss.item();
    if !loss_value.is_finite() {
        return Err(Error::Config(format!(
            "gradient check aborted: non-finite loss {loss_value}"
        )));
    }
    loss.backward();
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    let mut max_rel: f64 = 0.0;
    for (pi, p) in params.iter().enumerate() {
        for j in 0..p.numel() {
            let orig = p.get_flat(j);
            p.set_flat(j, orig + h);
            let fp = f()?.item();
            p.set_flat(j, orig - h);
            let fm = f()?.item();
            p.set_flat(j, orig);
            if !fp.is_finite() || !fm.is_finite() {
                return Err(Error::Config(format!(
                    "gradient check aborted: non-finite loss near parameter {pi}[{j}]"
                )));
            }
            let numeric = (fp - fm) / (2.0 * h);
            let rel = (analytic[pi][j] - numeric).abs() / numeric.abs().max(1.0);
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}
