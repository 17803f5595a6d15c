mod common;

use attngeom::attention::{AttentionTensor, TransformerConfig, TransformerParams};
use attngeom::codec::{decode_mlp, decode_transformer, encode_mlp, encode_transformer};
use attngeom::geometry::{count_regions_1d_exact, count_regions_patterns, id_epsilon, zaslavsky_bound, RowPolicy};
use attngeom::mlp::{BiasMode, MlpParams};
use attngeom::numkit::{Matrix, Rng};
use attngeom::traces::{id_profile, parse_trace, write_trace, TraceManifest};
use num_bigint::BigUint;
use proptest::prelude::*;

use common::{naive_mha_row, rel_diff, small_bound};

fn layer_cfg(d_model: usize, d_head: usize, heads: usize) -> TransformerConfig {
    TransformerConfig {
        d_model,
        d_head,
        n_hidden: 6,
        heads,
        scale_logits: false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trace_of_attention_maps_matches_direct_id(
        seed in any::<u64>(),
        layers in 1usize..4,
        heads in 1usize..4,
        n in 1usize..9,
        eps in 0.0f64..0.9,
    ) {
        let mut rng = Rng::seed_from(seed);
        let cfg = layer_cfg(6, 3, heads);
        let mut tensors = Vec::new();
        for _ in 0..layers {
            let p: TransformerParams<f64> = TransformerParams::init(&mut rng, &cfg).unwrap();
            let x = rng.normal_matrix(n, 6, 0.0, 1.5).unwrap();
            tensors.push(p.attn_map(&x).unwrap().cast::<f32>());
        }
        let manifest = TraceManifest { model: "layer".into(), layers, heads, seq_len: n };
        let mut bytes = Vec::new();
        write_trace(&mut bytes, &manifest, &tensors).unwrap();
        let trace = parse_trace(&bytes).unwrap();
        let series = id_profile(&trace, eps, RowPolicy::Last).unwrap();
        for (l, t) in tensors.iter().enumerate() {
            let direct = id_epsilon(t, eps, n - 1).unwrap().aggregate;
            prop_assert_eq!(series.values[l], direct as f64);
        }
    }

    #[test]
    fn sampled_patterns_never_exceed_bound(
        seed in any::<u64>(),
        d_in in 1usize..4,
        n_hidden in 1usize..12,
        zero in any::<bool>(),
    ) {
        let mut rng = Rng::seed_from(seed);
        let mode = if zero { BiasMode::Zero } else { BiasMode::Standard };
        let p: MlpParams<f64> = MlpParams::init(&mut rng, d_in, n_hidden, 1, mode).unwrap();
        let x = rng.normal_matrix(2000, d_in, 0.0, 4.0).unwrap();
        let seen = count_regions_patterns(&p, &x).unwrap().count;
        let bound = zaslavsky_bound(n_hidden as u64, d_in as u64);
        prop_assert!(BigUint::from(seen) <= bound);
        prop_assert_eq!(bound, BigUint::from(small_bound(n_hidden as u64, d_in as u64)));
    }

    #[test]
    fn exact_1d_count_dominates_sampled_patterns(seed in any::<u64>(), n_hidden in 1usize..40) {
        let mut rng = Rng::seed_from(seed);
        let p: MlpParams<f64> = MlpParams::init(&mut rng, 1, n_hidden, 1, BiasMode::Standard).unwrap();
        let xs: Vec<f64> = (0..4001).map(|k| -3.0 + 6.0 * k as f64 / 4000.0).collect();
        let grid = Matrix::col_vector(&xs);
        let sampled = count_regions_patterns(&p, &grid).unwrap().count;
        let exact = count_regions_1d_exact(&p, -3.0, 3.0).unwrap().count;
        prop_assert!(sampled <= exact);
        prop_assert!(exact <= n_hidden + 1);
    }

    #[test]
    fn codec_preserves_network_outputs(seed in any::<u64>(), heads in 1usize..4, n in 1usize..6) {
        let mut rng = Rng::seed_from(seed);
        let p: TransformerParams<f64> = TransformerParams::init(&mut rng, &layer_cfg(4, 2, heads)).unwrap();
        let q = decode_transformer::<f64>(&encode_transformer(&p)).unwrap();
        let x = rng.normal_matrix(n, 4, 0.0, 1.0).unwrap();
        prop_assert_eq!(p.layer_forward(&x).unwrap().y, q.layer_forward(&x).unwrap().y);

        let m: MlpParams<f64> = MlpParams::init(&mut rng, 3, 7, 2, BiasMode::Standard).unwrap();
        let back = decode_mlp::<f64>(&encode_mlp(&m)).unwrap();
        let xm = rng.normal_matrix(n, 3, 0.0, 1.0).unwrap();
        prop_assert_eq!(m.forward(&xm).unwrap(), back.forward(&xm).unwrap());
    }

    #[test]
    fn head_summands_are_convex_combinations(seed in any::<u64>(), heads in 1usize..4, n in 1usize..7) {
        let mut rng = Rng::seed_from(seed);
        let p: TransformerParams<f64> = TransformerParams::init(&mut rng, &layer_cfg(5, 3, heads)).unwrap();
        let x = rng.normal_matrix(n, 5, 0.0, 1.0).unwrap();
        let i = n - 1;
        let parts = p.minkowski_reconstruct(&x, i).unwrap();
        for h in 0..heads {
            let support = p.head_support_points(h, &x, i).unwrap();
            // each coordinate of the summand lies within the support's range
            for c in 0..5 {
                let col: Vec<f64> = support.iter_rows().map(|r| r[c]).collect();
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let v = parts[(h, c)];
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
            let single = p.head_forward(h, &x).unwrap().matmul(&p.heads[h].o).unwrap();
            prop_assert!(rel_diff(parts.row(h), single.row(i)) < 1e-12);
        }
        prop_assert!(rel_diff(&parts.col_sums(), &naive_mha_row(&p, &x, i)) < 1e-12);
    }

    #[test]
    fn f32_layer_tracks_f64(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = Rng::seed_from(seed);
        let p: TransformerParams<f64> = TransformerParams::init(&mut rng, &layer_cfg(4, 2, 2)).unwrap();
        let p32 = decode_transformer::<f32>(&encode_transformer(&p)).unwrap();
        let x = rng.normal_matrix::<f64>(n, 4, 0.0, 1.0).unwrap();
        let y = p.layer_forward(&x).unwrap().y;
        let y32 = p32.layer_forward(&x.cast::<f32>()).unwrap().y.cast::<f64>();
        prop_assert!(rel_diff(y.as_slice(), y32.as_slice()) < 1e-4);
    }
}

#[test]
fn attention_tensor_accepts_f32_softmax_rows() {
    let mut rng = Rng::seed_from(3);
    let logits = rng.normal_matrix::<f32>(64, 64, 0.0, 3.0).unwrap();
    let m = attngeom::numkit::softmax_causal(&logits).unwrap();
    assert!(AttentionTensor::new(vec![m]).is_ok());
}
