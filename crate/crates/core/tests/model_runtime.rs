// SPDX-License-Identifier: MIT OR Apache-2.0

use compscore::model::{
    init_random_model, init_random_model_with_tokenizer, Activation, ModelBundle, ModelConfig,
    ModelError, NormKind, Positional, TokenizerVocab,
};
use proptest::prelude::*;

/// Independent f64 reimplementation of the forward pass, written directly
/// from the architecture definition.
fn oracle_logits(b: &ModelBundle, ids: &[u32]) -> Vec<Vec<f64>> {
    let c = &b.config;
    let d = c.d_model;
    let f = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<f64>>();
    let lin = |w: &[f32], x: &[f64], rows: usize| -> Vec<f64> {
        let cols = x.len();
        (0..rows).map(|r| (0..cols).map(|k| w[r * cols + k] as f64 * x[k]).sum()).collect()
    };
    let norm = |x: &[f64], w: &[f32]| -> Vec<f64> {
        let n = x.len() as f64;
        match c.norm {
            NormKind::Rmsnorm => {
                let rms = (x.iter().map(|v| v * v).sum::<f64>() / n + 1e-5).sqrt();
                x.iter().zip(w).map(|(v, &g)| v / rms * g as f64).collect()
            }
            NormKind::Layernorm => {
                let mu = x.iter().sum::<f64>() / n;
                let var = x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
                x.iter().zip(w).map(|(v, &g)| (v - mu) / (var + 1e-5).sqrt() * g as f64).collect()
            }
        }
    };
    let rope = |v: &mut Vec<f64>, t: usize| {
        let hd = c.head_dim();
        for h in 0..c.n_heads {
            for j in (0..hd).step_by(2) {
                let theta = t as f64 * (c.rope_theta as f64).powf(-(j as f64) / hd as f64);
                let (a, bb) = (v[h * hd + j], v[h * hd + j + 1]);
                v[h * hd + j] = a * theta.cos() - bb * theta.sin();
                v[h * hd + j + 1] = a * theta.sin() + bb * theta.cos();
            }
        }
    };
    let mut xs: Vec<Vec<f64>> = ids
        .iter()
        .enumerate()
        .map(|(t, &id)| {
            let mut e = f(&b.embed[id as usize * d..(id as usize + 1) * d]);
            if let Some(p) = &b.pos_embed {
                for k in 0..d {
                    e[k] += p[t * d + k] as f64;
                }
            }
            e
        })
        .collect();
    for blk in &b.blocks {
        let a: Vec<Vec<f64>> = xs.iter().map(|x| norm(x, &blk.norm1)).collect();
        let mut q: Vec<Vec<f64>> = a.iter().map(|x| lin(&blk.wq, x, d)).collect();
        let mut k: Vec<Vec<f64>> = a.iter().map(|x| lin(&blk.wk, x, d)).collect();
        let v: Vec<Vec<f64>> = a.iter().map(|x| lin(&blk.wv, x, d)).collect();
        if c.positional == Positional::Rotary {
            for t in 0..ids.len() {
                rope(&mut q[t], t);
                rope(&mut k[t], t);
            }
        }
        let hd = c.head_dim();
        let mut next = Vec::new();
        for t in 0..ids.len() {
            let mut att = vec![0.0; d];
            for h in 0..c.n_heads {
                let r = h * hd..(h + 1) * hd;
                let s: Vec<f64> = (0..=t)
                    .map(|u| {
                        q[t][r.clone()].iter().zip(&k[u][r.clone()]).map(|(x, y)| x * y).sum::<f64>()
                            / (hd as f64).sqrt()
                    })
                    .collect();
                let z: f64 = s.iter().map(|v| v.exp()).sum();
                for u in 0..=t {
                    for j in r.clone() {
                        att[j] += s[u].exp() / z * v[u][j];
                    }
                }
            }
            let o = lin(&blk.wo, &att, d);
            let h: Vec<f64> = xs[t].iter().zip(&o).map(|(x, y)| x + y).collect();
            let fin = norm(&h, &blk.norm2);
            let up = lin(&blk.ffn.up, &fin, c.d_ff);
            let m: Vec<f64> = match c.activation {
                Activation::Relu => up.iter().map(|v| v.max(0.0)).collect(),
                Activation::Gelu => up
                    .iter()
                    .map(|&v| {
                        0.5 * v * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (v + 0.044715 * v.powi(3))).tanh())
                    })
                    .collect(),
                Activation::SiluGlu => {
                    let g = lin(blk.ffn.gate.as_ref().unwrap(), &fin, c.d_ff);
                    g.iter().zip(&up).map(|(g, u)| g / (1.0 + (-g).exp()) * u).collect()
                }
            };
            let out = lin(&blk.ffn.down, &m, d);
            next.push(h.iter().zip(&out).map(|(x, y)| x + y).collect());
        }
        xs = next;
    }
    xs.iter().map(|x| lin(&b.lm_head, &norm(x, &b.final_norm), c.vocab_size)).collect()
}

fn config(activation: Activation, norm: NormKind, positional: Positional) -> ModelConfig {
    ModelConfig {
        vocab_size: 270,
        d_model: 8,
        n_layers: 1,
        n_heads: 2,
        d_ff: 12,
        activation,
        norm,
        rope_theta: 10_000.0,
        positional,
        max_seq_len: 16,
        tie_embeddings: false,
    }
}

#[test]
fn logits_match_dense_oracle_for_every_architecture_variant() {
    let ids = [3u32, 260, 17, 269, 4, 4];
    for activation in [Activation::Relu, Activation::Gelu, Activation::SiluGlu] {
        for norm in [NormKind::Rmsnorm, NormKind::Layernorm] {
            for positional in [Positional::Rotary, Positional::LearnedAbsolute] {
                let mut bundle = init_random_model(config(activation, norm, positional), 11).unwrap();
                // hand-scaled weights so that nonlinearities leave their linear regime
                for blk in &mut bundle.blocks {
                    for w in [&mut blk.wq, &mut blk.wk, &mut blk.wv, &mut blk.ffn.up, &mut blk.ffn.down] {
                        w.iter_mut().for_each(|v| *v *= 40.0);
                    }
                    if let Some(g) = &mut blk.ffn.gate {
                        g.iter_mut().for_each(|v| *v *= 40.0);
                    }
                    blk.norm2.iter_mut().enumerate().for_each(|(i, v)| *v = 0.5 + i as f32 * 0.25);
                }
                bundle.lm_head.iter_mut().for_each(|v| *v *= 30.0);
                let trace = bundle.forward_with_trace(&ids).unwrap();
                let oracle = oracle_logits(&bundle, &ids);
                for (t, row) in oracle.iter().enumerate() {
                    for (a, b) in trace.logits(t).iter().zip(row) {
                        assert!(
                            (*a as f64 - b).abs() < 1e-5,
                            "{activation:?}/{norm:?}/{positional:?} pos {t}: {a} vs {b}"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn earlier_positions_ignore_future_tokens() {
    let mut cfg = ModelConfig::toy(300, 16, 3, 32);
    cfg.max_seq_len = 12;
    let bundle = init_random_model(cfg, 5).unwrap();
    let a = [1u32, 2, 3, 4, 5, 6];
    let b = [1u32, 2, 3, 299, 0, 42];
    let ta = bundle.forward_with_trace(&a).unwrap();
    let tb = bundle.forward_with_trace(&b).unwrap();
    for t in 0..3 {
        assert_eq!(ta.logits(t), tb.logits(t));
        for l in 0..3 {
            assert_eq!(ta.activations(l, t), tb.activations(l, t));
            assert_eq!(ta.hidden_state(l, t), tb.hidden_state(l, t));
        }
    }
    assert_ne!(ta.logits(3), tb.logits(3));
}

#[test]
fn relu_block_with_orthogonal_input_is_silent() {
    let bundle = init_random_model(config(Activation::Relu, NormKind::Rmsnorm, Positional::Rotary), 2).unwrap();
    let mut ffn = bundle.blocks[0].ffn.clone();
    // keys only read the first half of the residual stream
    for row in ffn.up.chunks_exact_mut(ffn.d_model) {
        row[4..].iter_mut().for_each(|v| *v = 0.0);
    }
    let x = [0.0, 0.0, 0.0, 0.0, 1.0, -2.0, 0.5, 3.0];
    let (m, out) = ffn.forward(&x);
    assert!(m.iter().all(|&v| v == 0.0));
    assert!(out.iter().all(|&v| v == 0.0));
}

#[test]
fn ffn_output_is_weighted_sum_of_value_vectors() {
    let mut cfg = config(Activation::SiluGlu, NormKind::Rmsnorm, Positional::Rotary);
    cfg.n_layers = 2;
    let bundle = init_random_model(cfg, 9).unwrap();
    let trace = bundle.forward_with_trace(&[5, 6, 7]).unwrap();
    for l in 0..2 {
        let ffn = &bundle.blocks[l].ffn;
        for t in 0..3 {
            let m = trace.activations(l, t);
            let mut sum = vec![0.0f64; ffn.d_model];
            for (i, &mi) in m.iter().enumerate() {
                for (s, v) in sum.iter_mut().zip(ffn.value_vector(i)) {
                    *s += mi as f64 * v as f64;
                }
            }
            for (a, b) in trace.ffn_output(l, t).iter().zip(&sum) {
                assert!((*a as f64 - b).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn rejects_long_sequences_and_unknown_ids() {
    let bundle = init_random_model(config(Activation::Relu, NormKind::Rmsnorm, Positional::Rotary), 1).unwrap();
    assert!(matches!(
        bundle.forward_with_trace(&[1; 17]),
        Err(ModelError::SequenceTooLong { len: 17, max: 16 })
    ));
    assert!(matches!(
        bundle.forward_with_trace(&[1, 270]),
        Err(ModelError::UnknownToken { id: 270, position: 1 })
    ));
}

#[test]
fn trace_is_identical_across_thread_counts() {
    let bundle = init_random_model(ModelConfig::toy(300, 32, 2, 64), 3).unwrap();
    let ids: Vec<u32> = (0..40).map(|i| (i * 37 % 300) as u32).collect();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| bundle.forward_with_trace(&ids).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn tokenizer_drives_the_model() {
    let vocab = TokenizerVocab::from_corpus("the little prince saw the planet", 10).unwrap();
    let cfg = ModelConfig::toy(300, 16, 1, 16);
    let bundle = init_random_model_with_tokenizer(cfg, vocab, 0).unwrap();
    let ids = bundle.encode("the little prince");
    assert_eq!(ids.len(), 3);
    assert_eq!(bundle.tokenizer.decode(&ids), "the little prince");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn traced_vectors_have_declared_lengths(
        heads in 1usize..4, head_dim in 1usize..4, d_ff in 1usize..20, n_layers in 1usize..3,
        len in 1usize..6, glu in any::<bool>(), seed in 0u64..1000,
    ) {
        let mut cfg = ModelConfig::toy(260, heads * head_dim * 2, n_layers, d_ff);
        cfg.n_heads = heads;
        if glu { cfg.activation = Activation::SiluGlu; }
        let bundle = init_random_model(cfg.clone(), seed).unwrap();
        let ids: Vec<u32> = (0..len as u32).map(|i| (i * 31 + seed as u32) % 260).collect();
        let trace = bundle.forward_with_trace(&ids).unwrap();
        prop_assert!(trace.all_finite());
        for l in 0..n_layers {
            for t in 0..len {
                prop_assert_eq!(trace.activations(l, t).len(), d_ff);
                prop_assert_eq!(trace.ffn_output(l, t).len(), cfg.d_model);
                prop_assert_eq!(trace.hidden_state(l, t).len(), cfg.d_model);
            }
        }
        prop_assert_eq!(trace.logits(len - 1).len(), 260);
    }
}
