use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xferbench::audio::{
    accumulate_stats, apply_cmvn, compute_mfcc, perturbed_id, speed_perturb, FeatureSequence,
    Waveform,
};

fn noise(seconds: f64, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * 16_000.0) as usize;
    Waveform::new(
        (0..n).map(|_| rng.random_range(-0.5f32..0.5)).collect(),
        16_000,
        "u",
        "s",
    )
    .unwrap()
}

#[test]
fn one_second_gives_98_frames() {
    let f = compute_mfcc(&noise(1.0, 1), 0.025, 0.010, 13).unwrap();
    assert_eq!((f.num_frames(), f.dim()), (98, 13));
    assert_eq!(f, compute_mfcc(&noise(1.0, 1), 0.025, 0.010, 13).unwrap());
}

#[test]
fn perturbed_copies_get_suffixed_ids() {
    let w = speed_perturb(&noise(0.5, 2), 0.9).unwrap();
    assert_eq!(w.utt_id, perturbed_id("u", 0.9));
    assert_eq!(w.speaker_id, "s-sp0.9");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn perturbation_scales_duration(factor in 0.5f64..2.0, seed in 0u64..100) {
        let w = noise(0.4, seed);
        let p = speed_perturb(&w, factor).unwrap();
        prop_assert!((p.duration() / w.duration() - 1.0 / factor).abs() < 0.01);
    }

    #[test]
    fn cmvn_keeps_shape_and_centres_speakers(lens in prop::collection::vec(3usize..30, 2..6), seed in 0u64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feats: Vec<FeatureSequence> = lens
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let off = 3.0 * (i % 2) as f32;
                let m = Array2::from_shape_fn((t, 4), |_| off + rng.random_range(-2.0f32..2.0));
                FeatureSequence::new(m, 0.01, format!("u{i}"), format!("s{}", i % 2)).unwrap()
            })
            .collect();
        let stats = accumulate_stats(feats.iter()).unwrap();
        let (out, _) = apply_cmvn(&feats, &stats).unwrap();
        for (a, b) in feats.iter().zip(&out) {
            prop_assert_eq!(a.frames.dim(), b.frames.dim());
        }
        for spk in ["s0", "s1"] {
            let rows: Vec<_> = out.iter().filter(|f| f.speaker_id == spk).flat_map(|f| f.frames.rows().into_iter().map(|r| r.to_owned())).collect();
            for k in 0..4 {
                let mean = rows.iter().map(|r| r[k] as f64).sum::<f64>() / rows.len() as f64;
                let var = rows.iter().map(|r| (r[k] as f64 - mean).powi(2)).sum::<f64>() / rows.len() as f64;
                prop_assert!(mean.abs() < 1e-4);
                prop_assert!((var - 1.0).abs() < 1e-3);
            }
        }
    }
}
