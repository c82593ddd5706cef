use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::{
    key_mask_bias, multi_head_attention, AttentionWeights, Encoder, EncoderConfig, Mode,
};
use crate::tensor::{grad_check, Tensor};

fn tiny_config() -> EncoderConfig {
    EncoderConfig {
        vocab_size: 12,
        hidden_dim: 8,
        num_layers: 2,
        num_heads: 2,
        ffn_dim: 16,
        max_positions: 10,
        dropout_rate: 0.0,
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn zero_tables_sum_to_zero_before_norm() {
    let mut enc = Encoder::init(tiny_config(), &mut rng(1)).unwrap();
    for t in [
        &enc.weights.token_emb,
        &enc.weights.pos_emb,
        &enc.weights.type_emb,
    ] {
        t.set_data(&vec![0.0; t.numel()]);
    }
    enc.weights.layers.clear();
    let e = enc.embed_sum(&[1, 2, 3], &[0, 0, 1]).unwrap();
    assert!(e.to_vec().iter().all(|&v| v == 0.0));
}

#[test]
fn same_token_at_two_positions_differs_by_position_embedding() {
    let enc = Encoder::init(tiny_config(), &mut rng(2)).unwrap();
    let e = enc.embed_sum(&[5, 5], &[0, 0]).unwrap();
    let d = enc.config.hidden_dim;
    let rows = e.to_vec();
    let pos = enc.weights.pos_emb.to_vec();
    for j in 0..d {
        let diff = rows[d + j] - rows[j];
        let pos_delta = pos[d + j] - pos[j];
        assert!((diff - pos_delta).abs() < 1e-12);
    }
}

#[test]
fn one_dimensional_tables_sum_by_hand() {
    let cfg = EncoderConfig {
        vocab_size: 3,
        hidden_dim: 1,
        num_layers: 0,
        num_heads: 1,
        ffn_dim: 1,
        max_positions: 4,
        dropout_rate: 0.0,
    };
    let enc = {
        let e = Encoder::init(cfg, &mut rng(3)).unwrap();
        e.weights.token_emb.set_data(&[0.1, 0.2, 0.3]);
        e.weights.pos_emb.set_data(&[1.0, 2.0, 3.0, 4.0]);
        e.weights.type_emb.set_data(&[10.0, 20.0]);
        e
    };
    let e = enc.embed_sum(&[2, 0], &[0, 1]).unwrap();
    // hand arithmetic: 0.3+1.0+10.0, 0.1+2.0+20.0
    assert_eq!(e.to_vec(), vec![11.3, 22.1]);
}

#[test]
fn out_of_range_ids_name_the_table() {
    let enc = Encoder::init(tiny_config(), &mut rng(4)).unwrap();
    let err = enc.embed_sum(&[99], &[0]).unwrap_err();
    assert!(err.to_string().contains("token table"), "{err}");
    let err = enc.embed_sum(&[1], &[2]).unwrap_err();
    assert!(err.to_string().contains("type table"), "{err}");
}

#[test]
fn single_position_single_head_returns_projected_value() {
    // softmax over one key is 1, so attention reduces to the value path
    let d = 4;
    let w = AttentionWeights::init(d, &mut rng(5));
    let x = Tensor::constant(&[1, d], vec![0.3, -0.2, 0.8, 0.1]);
    let out = multi_head_attention(&x, &x, None, &w, 1, &mut Mode::Eval).unwrap();

    let v = x.matmul(&w.wv).unwrap().add_row(&w.bv).unwrap();
    let expected = v.matmul(&w.wo).unwrap().add_row(&w.bo).unwrap();
    for (a, b) in out.to_vec().iter().zip(expected.to_vec()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn constant_values_pass_through_any_attention_pattern() {
    // rows of the attention matrix sum to 1, so identical value rows are
    // preserved no matter what the scores are
    let d = 6;
    let w = AttentionWeights::init(d, &mut rng(6));
    let row: Vec<f64> = vec![0.4, -0.1, 0.2, 0.9, -0.5, 0.05];
    let mut data = Vec::new();
    for _ in 0..5 {
        data.extend_from_slice(&row);
    }
    let kv = Tensor::constant(&[5, d], data);
    let q = Tensor::randn(&[3, d], 0.5, &mut rng(7));
    let out = multi_head_attention(&q, &kv, None, &w, 2, &mut Mode::Eval).unwrap();

    let one = Tensor::constant(&[1, d], row);
    let v = one.matmul(&w.wv).unwrap().add_row(&w.bv).unwrap();
    let expected = v.matmul(&w.wo).unwrap().add_row(&w.bo).unwrap().to_vec();
    for out_row in out.to_vec().chunks(d) {
        for (a, b) in out_row.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn two_token_single_head_matches_hand_trace() {
    // d = 2, one head, no biases, hand-computable weights
    
    let w = AttentionWeights {
        wq: Tensor::parameter(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]),
        bq: Tensor::parameter(&[2], vec![0.0; 2]),
        wk: Tensor::parameter(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]),
        bk: Tensor::parameter(&[2], vec![0.0; 2]),
        wv: Tensor::parameter(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]),
        bv: Tensor::parameter(&[2], vec![0.0; 2]),
        wo: Tensor::parameter(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]),
        bo: Tensor::parameter(&[2], vec![0.0; 2]),
    };
    let x = Tensor::constant(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
    let out = multi_head_attention(&x, &x, None, &w, 1, &mut Mode::Eval).unwrap();

    // scores/sqrt(2): row0 = [1,0]/r2, row1 = [0,1]/r2 where r2 = sqrt(2)
    let r2 = 2.0f64.sqrt();
    let e = (1.0 / r2).exp();
    let z = 1.0; // exp(0 / sqrt(2))
    let p_big = e / (e + z);
    let p_small = z / (e + z);
    let expected = [p_big, p_small, p_small, p_big];
    for (a, b) in out.to_vec().iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn zero_layers_returns_embedding_output() {
    let mut cfg = tiny_config();
    cfg.num_layers = 0;
    let enc = Encoder::init(cfg, &mut rng(8)).unwrap();
    let ids = [1, 2, 3, 4];
    let types = [0, 0, 1, 1];
    let mask = [1, 1, 1, 1];
    let h = enc.encode(&ids, &types, &mask, &mut Mode::Eval).unwrap();
    let e = enc.embed(&ids, &types, &mut Mode::Eval).unwrap();
    assert_eq!(h.to_vec(), e.to_vec());
}

#[test]
fn encode_preserves_sequence_shape() {
    let enc = Encoder::init(tiny_config(), &mut rng(9)).unwrap();
    for n in [1usize, 3, 7] {
        let ids: Vec<usize> = (0..n).map(|i| i % 12).collect();
        let types = vec![0; n];
        let mask = vec![1; n];
        let h = enc.encode(&ids, &types, &mask, &mut Mode::Eval).unwrap();
        assert_eq!(h.shape(), vec![n, 8]);
    }
}

#[test]
fn padded_token_content_cannot_leak_into_unmasked_positions() {
    let enc = Encoder::init(tiny_config(), &mut rng(10)).unwrap();
    let types = [0, 0, 1, 1, 0, 0];
    let mask = [1, 1, 1, 1, 0, 0];
    let a = enc
        .encode(&[1, 2, 3, 4, 5, 6], &types, &mask, &mut Mode::Eval)
        .unwrap();
    let b = enc
        .encode(&[1, 2, 3, 4, 9, 11], &types, &mask, &mut Mode::Eval)
        .unwrap();
    let d = enc.config.hidden_dim;
    let (av, bv) = (a.to_vec(), b.to_vec());
    for i in 0..4 {
        for j in 0..d {
            assert_eq!(
                av[i * d + j].to_bits(),
                bv[i * d + j].to_bits(),
                "unmasked position {i} changed"
            );
        }
    }
}

#[test]
fn two_layer_encoder_passes_gradient_check() {
    let cfg = EncoderConfig {
        vocab_size: 6,
        hidden_dim: 4,
        num_layers: 2,
        num_heads: 2,
        ffn_dim: 8,
        max_positions: 6,
        dropout_rate: 0.0,
    };
    let enc = Encoder::init(cfg, &mut rng(11)).unwrap();
    let params: Vec<Tensor> = enc.named_params("enc").into_iter().map(|(_, t)| t).collect();
    let ids = [0usize, 3, 5, 1];
    let types = [0usize, 0, 1, 1];
    let mask = [1u8, 1, 1, 0];
    let f = || {
        let h = enc.encode(&ids, &types, &mask, &mut Mode::Eval)?;
        Ok(h.gelu().mean())
    };
    let err = grad_check(f, &params, 1e-5).unwrap();
    assert!(err <= 1e-4, "encoder grad rel err {err}");
}

#[test]
fn mask_bias_marks_padded_keys() {
    let bias = key_mask_bias(&[1, 0, 1], 2);
    let v = bias.to_vec();
    assert_eq!(v.len(), 6);
    assert_eq!(v[0], 0.0);
    assert!(v[1] < -1e29);
    assert_eq!(v[2], 0.0);
}

#[test]
fn indivisible_heads_are_a_config_error() {
    let mut cfg = tiny_config();
    cfg.num_heads = 3;
    assert!(Encoder::init(cfg, &mut rng(12)).is_err());
}
