mod common;

use common::{finite_difference_errors, micro_model, random_feats};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xferbench::model::{
    encode_batch, transfer_encoder, EncoderConfig, ParameterSet, DECODER_PREFIX, ENCODER_PREFIX,
};
use xferbench::probing::downsample_labels;
use xferbench::text::EOS;

fn gradient_case(dropout: f64) {
    let model = micro_model(5, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = model.init_params(&mut rng);
    let feats = vec![
        random_feats(&mut rng, 4, 3),
        random_feats(&mut rng, 4, 3),
        random_feats(&mut rng, 3, 3),
    ];
    let targets = vec![vec![4, 4, EOS], vec![4, EOS], vec![EOS]];
    let errors = finite_difference_errors(&model, &params, &feats, &targets, dropout, 1e-6);
    let trainable = (0..params.len())
        .filter(|&i| params.is_trainable(i))
        .count();
    assert_eq!(errors.len(), trainable);
    for (name, err) in errors {
        assert!(err < 1e-4, "{name}: relative error {err:e}");
    }
}

#[test]
fn gradients_match_central_differences() {
    gradient_case(0.0);
}

#[test]
fn gradients_match_with_fixed_dropout_masks() {
    gradient_case(0.3);
}

#[test]
fn transfer_copies_encoder_only() {
    let asr = micro_model(9, 4);
    let ast = micro_model(7, 4);
    let src = asr.init_params(&mut ChaCha8Rng::seed_from_u64(1));
    let dst = ast.init_params(&mut ChaCha8Rng::seed_from_u64(2));
    let out = transfer_encoder(&src, &dst).unwrap();
    for (name, value) in out.iter() {
        if name.starts_with(ENCODER_PREFIX) {
            assert_eq!(value, src.get(name).unwrap(), "{name}");
        } else {
            assert!(name.starts_with(DECODER_PREFIX));
            assert_eq!(value, dst.get(name).unwrap(), "{name}");
        }
    }
}

#[test]
fn transfer_rejects_encoder_shape_mismatch() {
    let a = micro_model(5, 4).init_params(&mut ChaCha8Rng::seed_from_u64(1));
    let b = micro_model(5, 6).init_params(&mut ChaCha8Rng::seed_from_u64(1));
    assert!(transfer_encoder(&a, &b).is_err());
    assert!(transfer_encoder(&ParameterSet::new(), &b).is_err());
}

fn stride_config(k: usize) -> EncoderConfig {
    EncoderConfig {
        input_dim: 2,
        n_cnn_layers: k,
        cnn_stride_time: 2,
        cnn_channels: 2,
        cnn_kernel_time: 3,
        n_rnn_layers: 1,
        rnn_hidden: 2,
        bidirectional: true,
    }
}

#[test]
fn label_downsampling_tracks_encoder_length() {
    for k in 0..=2 {
        let cfg = stride_config(k);
        let model = xferbench::model::Seq2Seq::new(
            cfg.clone(),
            xferbench::model::DecoderConfig::with_vocab(5),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let params = model.init_params(&mut rng);
        for t in 1..64 {
            let feats = random_feats(&mut rng, t, 2);
            let enc = encode_batch(&[feats.view()], &params, &cfg, false)
                .unwrap()
                .pop()
                .unwrap();
            let labels: Vec<usize> = (0..t).collect();
            let down = downsample_labels(&labels, k);
            assert_eq!(down.len(), enc.len(), "T={t} k={k}");
            assert_eq!(down.len(), cfg.output_len(t));
        }
    }
}

#[test]
fn label_downsampling_example() {
    let labels: Vec<char> = "aaaaaaann".chars().collect();
    let once: String = downsample_labels(&labels, 1).into_iter().collect();
    let twice: String = downsample_labels(&labels, 2).into_iter().collect();
    assert_eq!(once, "aaaan");
    assert_eq!(twice, "aan");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn batched_encoding_matches_single(lens in prop::collection::vec(1usize..20, 1..4), seed in 0u64..1000) {
        let model = micro_model(5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = model.init_params(&mut rng);
        let feats: Vec<_> = lens.iter().map(|&t| random_feats(&mut rng, t, 3)).collect();
        let views: Vec<_> = feats.iter().map(|f| f.view()).collect();
        let together = encode_batch(&views, &params, &model.encoder, true).unwrap();
        for (f, joint) in feats.iter().zip(&together) {
            let alone = encode_batch(&[f.view()], &params, &model.encoder, true).unwrap().pop().unwrap();
            prop_assert_eq!(alone.len(), joint.len());
            for (a, b) in alone.states.iter().zip(joint.states.iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
