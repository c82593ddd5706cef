//! Differentiable primitives.
//!
//! Backward closures capture copies of whatever forward values they need, so
//! they never hold borrows of the graph while accumulating into parents.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{linalg, Tensor};
use crate::error::{Error, Result};

impl Tensor {
    /// Elementwise sum of same-shape tensors.
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        self.check_same_shape(rhs, "add")?;
        let data: Vec<f64> = self
            .data()
            .iter()
            .zip(rhs.data().iter())
            .map(|(a, b)| a + b)
            .collect();
        let out = Tensor::from_op(self.shape(), data, &[self, rhs]);
        if out.needs_grad() {
            let (a, b) = (self.clone(), rhs.clone());
            out.set_backward(move |g| {
                a.accumulate_grad(g);
                b.accumulate_grad(g);
            });
        }
        Ok(out)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        self.check_same_shape(rhs, "sub")?;
        let data: Vec<f64> = self
            .data()
            .iter()
            .zip(rhs.data().iter())
            .map(|(a, b)| a - b)
            .collect();
        let out = Tensor::from_op(self.shape(), data, &[self, rhs]);
        if out.needs_grad() {
            let (a, b) = (self.clone(), rhs.clone());
            out.set_backward(move |g| {
                a.accumulate_grad(g);
                let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                b.accumulate_grad(&neg);
            });
        }
        Ok(out)
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        self.check_same_shape(rhs, "mul")?;
        let a_data = self.to_vec();
        let b_data = rhs.to_vec();
        let data: Vec<f64> = a_data.iter().zip(&b_data).map(|(a, b)| a * b).collect();
        let out = Tensor::from_op(self.shape(), data, &[self, rhs]);
        if out.needs_grad() {
            let (a, b) = (self.clone(), rhs.clone());
            out.set_backward(move |g| {
                let ga: Vec<f64> = g.iter().zip(&b_data).map(|(g, b)| g * b).collect();
                let gb: Vec<f64> = g.iter().zip(&a_data).map(|(g, a)| g * a).collect();
                a.accumulate_grad(&ga);
                b.accumulate_grad(&gb);
            });
        }
        Ok(out)
    }

    /// Multiply every element by a constant.
    pub fn scale(&self, c: f64) -> Tensor {
        let data: Vec<f64> = self.data().iter().map(|a| a * c).collect();
        let out = Tensor::from_op(self.shape(), data, &[self]);
        if out.needs_grad() {
            let a = self.clone();
            out.set_backward(move |g| {
                let ga: Vec<f64> = g.iter().map(|x| x * c).collect();
                a.accumulate_grad(&ga);
            });
        }
        out
    }

    /// 2-d matrix product.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (n, k) = self.check_2d("matmul")?;
        let (k2, m) = rhs.check_2d("matmul")?;
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("inner dims differ: ({n},{k}) @ ({k2},{m})"),
            ));
        }
        let a_data = self.to_vec();
        let b_data = rhs.to_vec();
        let data = linalg::mm(&a_data, n, k, &b_data, m);
        let out = Tensor::from_op(vec![n, m], data, &[self, rhs]);
        if out.needs_grad() {
            let (a, b) = (self.clone(), rhs.clone());
            out.set_backward(move |g| {
                // dA = dC @ B^T, dB = A^T @ dC
                let ga = linalg::mm_nt(g, n, m, &b_data, k);
                let gb = linalg::mm_tn(&a_data, n, k, g, m);
                a.accumulate_grad(&ga);
                b.accumulate_grad(&gb);
            });
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (n, m) = self.check_2d("transpose")?;
        let data = linalg::transpose(&self.data(), n, m);
        let out = Tensor::from_op(vec![m, n], data, &[self]);
        if out.needs_grad() {
            let a = self.clone();
            out.set_backward(move |g| {
                a.accumulate_grad(&linalg::transpose(g, m, n));
            });
        }
        Ok(out)
    }

    /// Broadcast-add a length-d bias to every row of an (n, d) matrix.
    pub fn add_row(&self, bias: &Tensor) -> Result<Tensor> {
        let (n, d) = self.check_2d("add_row")?;
        if bias.numel() != d {
            return Err(Error::shape(
                "add_row",
                format!("bias length {} vs row width {d}", bias.numel()),
            ));
        }
        let b_data = bias.to_vec();
        let mut data = self.to_vec();
        for row in data.chunks_mut(d) {
            for (x, b) in row.iter_mut().zip(&b_data) {
                *x += b;
            }
        }
        let out = Tensor::from_op(vec![n, d], data, &[self, bias]);
        if out.needs_grad() {
            let (a, b) = (self.clone(), bias.clone());
            out.set_backward(move |g| {
                a.accumulate_grad(g);
                let mut gb = vec![0.0; d];
                for row in g.chunks(d) {
                    for (s, x) in gb.iter_mut().zip(row) {
                        *s += x;
                    }
                }
                b.accumulate_grad(&gb);
            });
        }
        Ok(out)
    }

    /// Column slice `[lo, hi)` of an (n, d) matrix.
    pub fn slice_cols(&self, lo: usize, hi: usize) -> Result<Tensor> {
        let (n, d) = self.check_2d("slice_cols")?;
        if lo >= hi || hi > d {
            return Err(Error::index(
                "slice_cols",
                format!("range {lo}..{hi} outside width {d}"),
            ));
        }
        let w = hi - lo;
        let src = self.data();
        let mut data = Vec::with_capacity(n * w);
        for i in 0..n {
            data.extend_from_slice(&src[i * d + lo..i * d + hi]);
        }
        drop(src);
        let out = Tensor::from_op(vec![n, w], data, &[self]);
        if out.needs_grad() {
            let a = self.clone();
            out.set_backward(move |g| {
                let mut ga = vec![0.0; n * d];
                for i in 0..n {
                    ga[i * d + lo..i * d + hi].copy_from_slice(&g[i * w..(i + 1) * w]);
                }
                a.accumulate_grad(&ga);
            });
        }
        Ok(out)
    }

    /// Row slice `[lo, hi)` of an (n, d) matrix.
    pub fn slice_rows(&self, lo: usize, hi: usize) -> Result<Tensor> {
        let (n, d) = self.check_2d("slice_rows")?;
        if lo >= hi || hi > n {
            return Err(Error::index(
                "slice_rows",
                format!("range {lo}..{hi} outside {n} rows"),
            ));
        }
        let data = self.data()[lo * d..hi * d].to_vec();
        let out = Tensor::from_op(vec![hi - lo, d], data, &[self]);
        if out.needs_grad() {
            let a = self.clone();
            out.set_backward(move |g| {
                let mut ga = vec![0.0; n * d];
                ga[lo * d..hi * d].copy_from_slice(g);
                a.accumulate_grad(&ga);
            });
        }
        Ok(out)
    }

    /// Gather rows of a (v, d) table by index; duplicates accumulate in the
    /// backward scatter-add. This is the embedding lookup.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let (v, d) = self.check_2d("gather_rows")?;
        for &i in indices {
            if i >= v {
                return Err(Error::index(
                    "gather_rows",
                    format!("row id {i} outside table of {v} rows"),
                ));
            }
        }
        let src = self.data();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        drop(src);
        let idx = indices.to_vec();
        let out = Tensor::from_op(vec![indices.len(), d], data, &[self]);
        if out.needs_grad() {
            let a = self.clone();
            out.set_backward(move |g| {
                let mut ga = vec![0.0; v * d];
                for (r, &i) in idx.iter().enumerate() {
                    for (s, x) in ga[i * d..(i + 1) * d].iter_mut().zip(&g[r * d..(r + 1) * d]) {
                        *s += x;
                    }
                }
                a.accumulate_grad(&ga);
            });
        }
        Ok(out)
    }

    /// Concatenate same-height matrices side by side.
    pub fn concat_cols(parts: &[Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::shape("concat_cols", "no operands"));
        }
        let (n, _) = parts[0].check_2d("concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (pn, pd) = p.check_2d("concat_cols")?;
            if pn != n {
                return Err(Error::shape(
                    "concat_cols",
                    format!("row counts differ: {n} vs {pn}"),
                ));
            }
            widths.push(pd);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; n * total];
        let mut off = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let src = p.data();
            for i in 0..n {
                data[i * total + off..i * total + off + w]
                    .copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            off += w;
        }
        let refs: Vec<&Tensor> = parts.iter().collect();
        let out = Tensor::from_op(vec![n, total], data, &refs);
        if out.needs_grad() {
            let parts: Vec<Tensor> = parts.to_vec();
            out.set_backward(move |g| {
                let mut off = 0;
                for (p, w) in parts.iter().map(|p| (p, p.cols())) {
                    let mut gp = vec![0.0; n * w];
                    for i in 0..n {
                        gp[i * w..(i + 1) * w]
                            .copy_from_slice(&g[i * total + off..i * total + off + w]);
                    }
                    p.accumulate_grad(&gp);
                    off += w;
                }
            });
        }
        Ok(out)
    }

    /// GELU activation (tanh form).
    pub fn gelu(&self) -> Tensor {
        const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
        const A: f64 = 0.044_715;
        let x_data = self.to_vec();
        let data: Vec<f64> = x_data
            .iter()
            .map(|&x| 0.5 * x * (1.0 + (C * (x + A * x * x * x)).tanh()))
            .collect();
        let out = Tensor::from_op(self.shape(), data, &[self]);
        if out.needs_grad() {
            let a = self.clone();
            out.set_backward(move |g| {
                let ga: Vec<f64> = g
                    .iter()
                    .zip(&x_data)
                    .map(|(&g, &x)| {
                        let u = C * (x + A * x * x * x);
                        let t = u.tanh();
                        let sech2 = 1.0 - t * t;
                        g * (0.5 * (1.0 + t) + 0.5 * x * sech2 * C * (1.0 + 3.0 * A * x * x))
                    })
                    .collect();
                a.accumulate_grad(&ga);
            });
        }
        out
    }

    /// Row-wise layer normalization with affine parameters.
    ///
    /// Zero-variance rows normalize to 0 (the epsilon keeps the denominator
    /// finite), so padded all-equal rows stay well defined.
    pub fn layer_norm(&self, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
        let (n, d) = self.check_2d("layer_norm")?;
        if gamma.numel() != d || beta.numel() != d {
            return Err(Error::shape(
                "layer_norm",
                format!(
                    "affine lengths {}/{} vs width {d}",
                    gamma.numel(),
                    beta.numel()
                ),
            ));
        }
        let x = self.to_vec();
        let g_data = gamma.to_vec();
        let b_data = beta.to_vec();
        let mut norm = vec![0.0; n * d]; // x-hat, kept for backward
        let mut inv_std = vec![0.0; n];
        let mut data = vec![0.0; n * d];
        for i in 0..n {
            let row = &x[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let r = 1.0 / (var + eps).sqrt();
            inv_std[i] = r;
            for j in 0..d {
                let xh = (row[j] - mean) * r;
                norm[i * d + j] = xh;
                data[i * d + j] = g_data[j] * xh + b_data[j];
            }
        }
        let out = Tensor::from_op(vec![n, d], data, &[self, gamma, beta]);
        if out.needs_grad() {
            let (a, gm, bt) = (self.clone(), gamma.clone(), beta.clone());
            out.set_backward(move |g| {
                let mut ga = vec![0.0; n * d];
                let mut ggamma = vec![0.0; d];
                let mut gbeta = vec![0.0; d];
                for i in 0..n {
                    let go = &g[i * d..(i + 1) * d];
                    let xh = &norm[i * d..(i + 1) * d];
                    let r = inv_std[i];
                    // d x-hat
                    let dxh: Vec<f64> = go.iter().zip(&g_data).map(|(g, w)| g * w).collect();
                    let mean_dxh = dxh.iter().sum::<f64>() / d as f64;
                    let mean_dxh_xh =
                        dxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for j in 0..d {
                        ga[i * d + j] = r * (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh);
                        ggamma[j] += go[j] * xh[j];
                        gbeta[j] += go[j];
                    }
                }
                a.accumulate_grad(&ga);
                gm.accumulate_grad(&ggamma);
                bt.accumulate_grad(&gbeta);
            });
        }
        Ok(out)
    }

    /// Inverted dropout with an explicit seeded generator. Training-only:
    /// callers skip it entirely at evaluation time.
    pub fn dropout(&self, rate: f64, rng: &mut ChaCha8Rng) -> Tensor {
        if rate <= 0.0 {
            return self.clone();
        }
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..self.numel())
            .map(|_| {
                if rng.gen::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let data: Vec<f64> = self.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::from_op(self.shape(), data, &[self]);
        if out.needs_grad() {
            let a = self.clone();
            out.set_backward(move |g| {
                let ga: Vec<f64> = g.iter().zip(&mask).map(|(g, m)| g * m).collect();
                a.accumulate_grad(&ga);
            });
        }
        out
    }

    /// Softmax along the last axis, computed with max-subtraction.
    pub fn softmax(&self) -> Tensor {
        let d = self.cols();
        let n = self.numel() / d;
        let src = self.to_vec();
        let mut data = vec![0.0; n * d];
        for i in 0..n {
            let row = &src[i * d..(i + 1) * d];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..d {
                let e = (row[j] - mx).exp();
                data[i * d + j] = e;
                sum += e;
            }
            for v in &mut data[i * d..(i + 1) * d] {
                *v /= sum;
            }
        }
        let y_data = data.clone();
        let out = Tensor::from_op(self.shape(), data, &[self]);
        if out.needs_grad() {
            let a = self.clone();
            out.set_backward(move |g| {
                let mut ga = vec![0.0; n * d];
                for i in 0..n {
                    let y = &y_data[i * d..(i + 1) * d];
                    let go = &g[i * d..(i + 1) * d];
                    let dot: f64 = y.iter().zip(go).map(|(y, g)| y * g).sum();
                    for j in 0..d {
                        ga[i * d + j] = y[j] * (go[j] - dot);
                    }
                }
                a.accumulate_grad(&ga);
            });
        }
        out
    }

    /// Negative log softmax probability of `target` over the flattened
    /// logits. Gradient is `softmax(logits) - onehot(target)`.
    pub fn cross_entropy_logits(&self, target: usize) -> Result<Tensor> {
        let k = self.numel();
        if target >= k {
            return Err(Error::index(
                "cross_entropy_logits",
                format!("target {target} outside {k} classes"),
            ));
        }
        let logits = self.to_vec();
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|&v| (v - mx).exp()).sum();
        let log_z = mx + sum.ln();
        let loss = log_z - logits[target];
        let out = Tensor::from_op(vec![1], vec![loss], &[self]);
        if out.needs_grad() {
            let a = self.clone();
            out.set_backward(move |g| {
                let scale = g[0];
                let ga: Vec<f64> = logits
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let p = (v - log_z).exp();
                        scale * (p - if j == target { 1.0 } else { 0.0 })
                    })
                    .collect();
                a.accumulate_grad(&ga);
            });
        }
        Ok(out)
    }

    /// Binary cross entropy on a single pre-sigmoid logit, in the
    /// numerically stable log1p form. Gradient is `sigmoid(z) - y`.
    pub fn bce_with_logits(&self, y: f64) -> Result<Tensor> {
        if self.numel() != 1 {
            return Err(Error::shape(
                "bce_with_logits",
                format!("expected a single logit, got {} values", self.numel()),
            ));
        }
        let z = self.get_flat(0);
        let loss = z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        let out = Tensor::from_op(vec![1], vec![loss], &[self]);
        if out.needs_grad() {
            let a = self.clone();
            out.set_backward(move |g| {
                let sig = 1.0 / (1.0 + (-z).exp());
                a.accumulate_grad(&[g[0] * (sig - y)]);
            });
        }
        Ok(out)
    }

    /// Sum of all elements.
    pub fn sum(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        let n = self.numel();
        let out = Tensor::from_op(vec![1], vec![s], &[self]);
        if out.needs_grad() {
            let a = self.clone();
            out.set_backward(move |g| {
                a.accumulate_grad(&vec![g[0]; n]);
            });
        }
        out
    }

    /// Mean of all elements.
    pub fn mean(&self) -> Tensor {
        let n = self.numel();
        self.sum().scale(1.0 / n as f64)
    }

    /// Mean of a list of scalar tensors (batch-loss reduction).
    pub fn mean_scalars(parts: &[Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut acc = parts[0].clone();
        for p in &parts[1..] {
            acc = acc.add(p)?;
        }
        Ok(acc.scale(1.0 / parts.len() as f64))
    }
}

/// Dropout generator wrapper: `None` at evaluation time, seeded at training
/// time. Keeps call sites from sprinkling `if train` everywhere.
pub enum Mode<'a> {
    Eval,
    Train { rng: &'a mut ChaCha8Rng, rate: f64 },
}

impl Mode<'_> {
    pub fn apply_dropout(&mut self, t: Tensor) -> Tensor {
        match self {
            Mode::Eval => t,
            Mode::Train { rng, rate } => t.dropout(*rate, rng),
        }
    }
}
