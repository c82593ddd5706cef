use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{grad_check, Tensor};

const FD_H: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_param(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::parameter(shape, data)
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!(
            (x - y).abs() <= tol,
            "element {i}: {x} vs {y} (tol {tol})"
        );
    }
}

#[test]
fn matmul_identity_returns_operand() {
    let eye = Tensor::constant(&[3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    let a = Tensor::constant(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let c = eye.matmul(&a).unwrap();
    assert_close(&c.to_vec(), &a.to_vec(), 0.0);
}

#[test]
fn matmul_shape_mismatch_is_error() {
    let a = Tensor::constant(&[2, 3], vec![0.0; 6]);
    let b = Tensor::constant(&[2, 2], vec![0.0; 4]);
    let err = a.matmul(&b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("matmul"), "message should name the op: {msg}");
}

#[test]
fn matmul_backward_matches_finite_differences() {
    let mut r = rng(7);
    let a = rand_param(&[4, 3], &mut r);
    let b = rand_param(&[3, 2], &mut r);
    let f = || {
        // weight the entries so the gradient is not uniform
        let w = Tensor::constant(&[4, 2], (0..8).map(|i| 0.3 + 0.1 * i as f64).collect());
        a.matmul(&b)?.mul(&w)?.gelu().sum().pipe_ok()
    };
    let err = grad_check(f, &[a.clone(), b.clone()], FD_H).unwrap();
    assert!(err <= FD_TOL, "matmul rel err {err}");
}

// small helper so closures above can end in a Result
trait PipeOk: Sized {
    fn pipe_ok(self) -> crate::error::Result<Self> {
        Ok(self)
    }
}
impl PipeOk for Tensor {}

#[test]
fn elementwise_backward_matches_finite_differences() {
    let mut r = rng(11);
    let a = rand_param(&[3, 4], &mut r);
    let b = rand_param(&[3, 4], &mut r);
    let f = || {
        let t = a.add(&b)?.mul(&a)?.sub(&b.scale(0.5))?;
        Ok(t.gelu().sum())
    };
    let err = grad_check(f, &[a.clone(), b.clone()], FD_H).unwrap();
    assert!(err <= FD_TOL, "elementwise rel err {err}");
}

#[test]
fn slicing_and_concat_backward_matches_finite_differences() {
    let mut r = rng(13);
    let a = rand_param(&[4, 6], &mut r);
    let f = || {
        let left = a.slice_cols(0, 2)?;
        let right = a.slice_cols(2, 6)?.slice_cols(1, 3)?;
        let top = Tensor::concat_cols(&[left, right])?.slice_rows(1, 3)?;
        Ok(top.gelu().sum())
    };
    let err = grad_check(f, &[a.clone()], FD_H).unwrap();
    assert!(err <= FD_TOL, "slice/concat rel err {err}");
}

#[test]
fn gather_rows_backward_accumulates_duplicates() {
    let table = Tensor::parameter(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let out = table.gather_rows(&[1, 1, 0]).unwrap();
    assert_close(&out.to_vec(), &[3.0, 4.0, 3.0, 4.0, 1.0, 2.0], 0.0);
    out.sum().backward();
    // row 1 picked twice, row 0 once, row 2 never
    assert_close(&table.grad().unwrap(), &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0], 0.0);
}

#[test]
fn gather_rows_out_of_range_is_error() {
    let table = Tensor::parameter(&[3, 2], vec![0.0; 6]);
    assert!(table.gather_rows(&[0, 3]).is_err());
}

#[test]
fn gather_and_norm_backward_matches_finite_differences() {
    let mut r = rng(17);
    let table = rand_param(&[5, 4], &mut r);
    let gamma = rand_param(&[4], &mut r);
    let beta = rand_param(&[4], &mut r);
    let f = || {
        let x = table.gather_rows(&[4, 0, 2])?;
        let y = x.layer_norm(&gamma, &beta, 1e-5)?;
        Ok(y.gelu().sum())
    };
    let err = grad_check(f, &[table.clone(), gamma.clone(), beta.clone()], FD_H).unwrap();
    assert!(err <= FD_TOL, "gather/layer_norm rel err {err}");
}

#[test]
fn layer_norm_constant_row_is_zero_before_affine() {
    let x = Tensor::constant(&[1, 4], vec![2.5; 4]);
    let gamma = Tensor::constant(&[4], vec![1.0; 4]);
    let beta = Tensor::constant(&[4], vec![0.0; 4]);
    let y = x.layer_norm(&gamma, &beta, 1e-5).unwrap();
    assert_close(&y.to_vec(), &[0.0; 4], 0.0);
}

#[test]
fn softmax_uniform_logits_give_uniform_probabilities() {
    let x = Tensor::constant(&[1, 3], vec![0.0, 0.0, 0.0]);
    let y = x.softmax();
    assert_close(&y.to_vec(), &[1.0 / 3.0; 3], 1e-15);
}

#[test]
fn softmax_matches_direct_summation_oracle() {
    // independent high-precision evaluation without max-subtraction
    let logits = [1.0f64, 2.0, 3.0];
    let exps: Vec<f64> = logits.iter().map(|v| v.exp()).collect();
    let z: f64 = exps.iter().sum();
    let expected: Vec<f64> = exps.iter().map(|e| e / z).collect();

    let y = Tensor::constant(&[1, 3], logits.to_vec()).softmax();
    assert_close(&y.to_vec(), &expected, 1e-12);
}

#[test]
fn softmax_backward_matches_finite_differences() {
    let mut r = rng(19);
    let a = rand_param(&[3, 5], &mut r);
    let f = || {
        let w = Tensor::constant(&[3, 5], (0..15).map(|i| (i as f64) * 0.1).collect());
        a.softmax().mul(&w)?.sum().pipe_ok()
    };
    let err = grad_check(f, &[a.clone()], FD_H).unwrap();
    assert!(err <= FD_TOL, "softmax rel err {err}");
}

#[test]
fn cross_entropy_uniform_two_class_is_ln2() {
    let logits = Tensor::constant(&[2], vec![0.0, 0.0]);
    let loss = logits.cross_entropy_logits(0).unwrap();
    assert!((loss.item() - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn cross_entropy_saturates_to_zero_on_large_margin() {
    let logits = Tensor::constant(&[3], vec![60.0, 0.0, 0.0]);
    let loss = logits.cross_entropy_logits(0).unwrap();
    assert!(loss.item() < 1e-15, "loss {}", loss.item());
}

#[test]
fn cross_entropy_matches_log_sum_exp_oracle() {
    let mut r = rng(23);
    let z: Vec<f64> = (0..5).map(|_| r.gen_range(-2.0..2.0)).collect();
    let target = 3;
    // independent direct evaluation
    let expected = z.iter().map(|v| v.exp()).sum::<f64>().ln() - z[target];

    let loss = Tensor::constant(&[5], z).cross_entropy_logits(target).unwrap();
    assert!((loss.item() - expected).abs() < 1e-12);
}

#[test]
fn cross_entropy_gradient_is_softmax_minus_onehot() {
    let z = vec![0.2, -0.4, 1.1];
    let logits = Tensor::parameter(&[3], z.clone());
    logits.cross_entropy_logits(1).unwrap().backward();
    let exps: Vec<f64> = z.iter().map(|v| v.exp()).collect();
    let s: f64 = exps.iter().sum();
    let expected: Vec<f64> = exps
        .iter()
        .enumerate()
        .map(|(j, e)| e / s - if j == 1 { 1.0 } else { 0.0 })
        .collect();
    assert_close(&logits.grad().unwrap(), &expected, 1e-12);
}

#[test]
fn cross_entropy_target_out_of_range_is_error() {
    let logits = Tensor::constant(&[3], vec![0.0; 3]);
    assert!(logits.cross_entropy_logits(3).is_err());
}

#[test]
fn bce_with_logits_at_zero_is_ln2() {
    let z = Tensor::constant(&[1], vec![0.0]);
    let loss = z.bce_with_logits(1.0).unwrap();
    assert!((loss.item() - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn bce_backward_matches_finite_differences() {
    let z = Tensor::parameter(&[1], vec![0.37]);
    let f = || z.bce_with_logits(1.0);
    let err = grad_check(f, &[z.clone()], FD_H).unwrap();
    assert!(err <= FD_TOL, "bce rel err {err}");
}

#[test]
fn dropout_is_inverted_and_seeded() {
    let x = Tensor::constant(&[1, 1000], vec![1.0; 1000]);
    let a = x.dropout(0.25, &mut rng(5)).to_vec();
    let b = x.dropout(0.25, &mut rng(5)).to_vec();
    assert_close(&a, &b, 0.0); // same seed, same mask
    let kept = a.iter().filter(|v| **v > 0.0).count();
    assert!((600..=900).contains(&kept));
    for v in &a {
        assert!(*v == 0.0 || (*v - 1.0 / 0.75).abs() < 1e-12);
    }
}

#[test]
fn grad_check_linear_least_squares_is_tight() {
    // f(w) = ||X w - y||^2 with a closed-form gradient; the checker itself
    // should agree to far better than the pipeline tolerance.
    let x = Tensor::constant(&[3, 2], vec![1.0, 0.5, -0.3, 1.2, 0.8, -0.7]);
    let y = Tensor::constant(&[3, 1], vec![0.4, -0.2, 0.9]);
    let w = Tensor::parameter(&[2, 1], vec![0.1, -0.6]);
    let f = || {
        let resid = x.matmul(&w)?.sub(&y)?;
        resid.mul(&resid)?.sum().pipe_ok()
    };
    let err = grad_check(f, &[w.clone()], FD_H).unwrap();
    assert!(err <= 1e-7, "least-squares rel err {err}");

    // cross-check the analytic gradient against the closed form 2 X^T (Xw - y)
    w.zero_grad();
    let loss = f().unwrap();
    loss.backward();
    let xw: Vec<f64> = vec![
        1.0 * 0.1 + 0.5 * -0.6,
        -0.3 * 0.1 + 1.2 * -0.6,
        0.8 * 0.1 + -0.7 * -0.6,
    ];
    let r: Vec<f64> = vec![xw[0] - 0.4, xw[1] + 0.2, xw[2] - 0.9];
    let closed = vec![
        2.0 * (1.0 * r[0] + -0.3 * r[1] + 0.8 * r[2]),
        2.0 * (0.5 * r[0] + 1.2 * r[1] + -0.7 * r[2]),
    ];
    assert_close(&w.grad().unwrap(), &closed, 1e-12);
}

#[test]
fn grad_check_constant_parameter_has_zero_gradient() {
    let used = Tensor::parameter(&[2], vec![0.3, -0.2]);
    let unused = Tensor::parameter(&[2], vec![1.0, 1.0]);
    let f = || Ok(used.gelu().sum());
    used.zero_grad();
    unused.zero_grad();
    let loss = f().unwrap();
    loss.backward();
    assert!(unused.grad().is_none());
    let err = grad_check(f, &[used.clone(), unused.clone()], FD_H).unwrap();
    assert!(err <= FD_TOL);
}

#[test]
fn grad_check_aborts_on_non_finite_loss() {
    let p = Tensor::parameter(&[1], vec![f64::INFINITY]);
    let f = || Ok(p.sum());
    assert!(grad_check(f, &[p.clone()], FD_H).is_err());
}

#[test]
fn repeated_operand_accumulates_both_paths() {
    // d/dx sum(x + x) = 2
    let x = Tensor::parameter(&[3], vec![1.0, 2.0, 3.0]);
    x.add(&x).unwrap().sum().backward();
    assert_close(&x.grad().unwrap(), &[2.0; 3], 0.0);
}

#[test]
fn forward_values_are_bit_identical_across_runs() {
    let run = || {
        let mut r = rng(42);
        let a = Tensor::randn(&[4, 4], 0.5, &mut r);
        let b = Tensor::randn(&[4, 4], 0.5, &mut r);
        let g = Tensor::constant(&[4], vec![1.0; 4]);
        let z = Tensor::constant(&[4], vec![0.0; 4]);
        a.matmul(&b)
            .unwrap()
            .gelu()
            .layer_norm(&g, &z, 1e-5)
            .unwrap()
            .softmax()
            .to_vec()
    };
    let (x, y) = (run(), run());
    for (a, b) in x.iter().zip(&y) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

proptest! {
    #[test]
    fn softmax_rows_are_probability_vectors(
        vals in proptest::collection::vec(-30.0f64..30.0, 2..24),
    ) {
        let n = vals.len();
        let y = Tensor::constant(&[1, n], vals).softmax().to_vec();
        let sum: f64 = y.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-6);
        for v in &y {
            prop_assert!(*v > 0.0 && *v < 1.0 + 1e-12);
        }
    }

    #[test]
    fn softmax_is_shift_invariant(
        vals in proptest::collection::vec(-10.0f64..10.0, 2..16),
        c in -50.0f64..50.0,
    ) {
        let n = vals.len();
        let base = Tensor::constant(&[1, n], vals.clone()).softmax().to_vec();
        let shifted: Vec<f64> = vals.iter().map(|v| v + c).collect();
        let moved = Tensor::constant(&[1, n], shifted).softmax().to_vec();
        for (a, b) in base.iter().zip(&moved) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn primitive_chain_passes_gradient_check(seed in 0u64..64) {
        let mut r = rng(seed);
        let a = rand_param(&[3, 3], &mut r);
        let bias = rand_param(&[3], &mut r);
        let f = || {
            let t = a.matmul(&a)?.add_row(&bias)?.gelu().softmax();
            Ok(t.mean())
        };
        let err = grad_check(f, &[a.clone(), bias.clone()], FD_H).unwrap();
        prop_assert!(err <= FD_TOL, "rel err {err}");
    }
}
