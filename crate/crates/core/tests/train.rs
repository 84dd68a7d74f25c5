mod common;

use common::{asr_data, small_model};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xferbench::model::{round_to_storage, ParameterSet};
use xferbench::train::*;
use xferbench::workbench::SynthSpec;
use xferbench::Error;

fn config() -> TrainConfig {
    TrainConfig {
        batch_size: 4,
        max_epochs: 3,
        rand_word_start_epoch: 1,
        seed: 42,
        ..Default::default()
    }
}

fn setup() -> (common::AsrData, xferbench::model::Seq2Seq, ParameterSet) {
    let data = asr_data(&SynthSpec::language_a(10, 3));
    let model = small_model(13, data.vocab.len(), 6);
    let params = model.init_params(&mut ChaCha8Rng::seed_from_u64(8));
    (data, model, params)
}

fn run_epochs(
    model: &xferbench::model::Seq2Seq,
    data: &[Example],
    state: &mut TrainState,
    cfg: &TrainConfig,
    n: usize,
) {
    for _ in 0..n {
        train_epoch(model, data, state, cfg).unwrap();
        state.schedule.epoch += 1;
    }
}

#[test]
fn same_seed_same_parameters() {
    let (data, model, params) = setup();
    let cfg = config();
    let mut a = TrainState::new(params.clone(), &cfg);
    let mut b = TrainState::new(params, &cfg);
    run_epochs(&model, &data.examples, &mut a, &cfg, 2);
    run_epochs(&model, &data.examples, &mut b, &cfg, 2);
    assert_eq!(a.params, b.params);
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let (data, model, params) = setup();
    let cfg = config();
    let mut straight = TrainState::new(params.clone(), &cfg);
    run_epochs(&model, &data.examples, &mut straight, &cfg, 3);

    let dir = tempfile::tempdir().unwrap();
    let mut first = TrainState::new(params, &cfg);
    run_epochs(&model, &data.examples, &mut first, &cfg, 1);
    save_checkpoint(dir.path(), &Checkpoint::from_state(&model, &cfg, &first)).unwrap();
    drop(first);
    let mut resumed = load_checkpoint_for(dir.path(), &model)
        .unwrap()
        .into_state();
    run_epochs(&model, &data.examples, &mut resumed, &cfg, 2);

    assert_eq!(straight.params, resumed.params);
    assert_eq!(straight.schedule, resumed.schedule);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let (data, model, params) = setup();
    let cfg = config();
    let mut state = TrainState::new(params, &cfg);
    run_epochs(&model, &data.examples, &mut state, &cfg, 1);
    let dir = tempfile::tempdir().unwrap();
    let mut ck = Checkpoint::from_state(&model, &cfg, &state);
    ck.info.insert("task".into(), "asr".into());
    save_checkpoint(dir.path(), &ck).unwrap();
    let back = load_checkpoint(dir.path()).unwrap();
    assert_eq!(back.params, ck.params);
    assert_eq!(back.model, model);
    assert_eq!(back.info, ck.info);
    let (m0, m1) = (
        &ck.optimizer.as_ref().unwrap().m,
        &back.optimizer.as_ref().unwrap().m,
    );
    assert_eq!(m0, m1);
    for v in back.params.values() {
        let mut r = v.clone();
        round_to_storage(&mut r);
        assert_eq!(&r, v);
    }
}

#[test]
fn checkpoint_rejects_other_model_and_corruption() {
    let (_, model, params) = setup();
    let cfg = config();
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(
        dir.path(),
        &Checkpoint::from_state(&model, &cfg, &TrainState::new(params, &cfg)),
    )
    .unwrap();
    let other = small_model(13, model.decoder.vocab_size + 1, 6);
    assert!(matches!(
        load_checkpoint_for(dir.path(), &other),
        Err(Error::ConfigMismatch(_))
    ));

    let victim = std::fs::read_dir(dir.path().join("params"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let bytes = std::fs::read(&victim).unwrap();
    std::fs::write(&victim, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(
        load_checkpoint(dir.path()),
        Err(Error::CorruptParameter { .. })
    ));
}

#[test]
fn zero_learning_rate_leaves_trainables_unchanged() {
    let (data, model, params) = setup();
    let cfg = TrainConfig {
        lr_init: f64::MIN_POSITIVE,
        ..config()
    };
    let mut state = TrainState::new(params.clone(), &cfg);
    state.schedule.lr = 0.0;
    run_epochs(&model, &data.examples, &mut state, &cfg, 1);
    for i in 0..params.len() {
        if params.is_trainable(i) {
            assert_eq!(
                params.values()[i],
                state.params.values()[i],
                "{}",
                params.name(i)
            );
        }
    }
}

#[test]
fn weight_decay_shrinks_norm_without_data_gradient() {
    let (_, _, mut params) = setup();
    let mut adam = Adam::new(&params);
    let zeros: Vec<_> = params.values().iter().map(|v| v.mapv(|_| 0.0)).collect();
    let norm = |p: &ParameterSet| {
        (0..p.len())
            .filter(|&i| p.is_trainable(i))
            .map(|i| p.values()[i].iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
    };
    let mut prev = norm(&params);
    for _ in 0..5 {
        adam.update(&mut params, &zeros, 0.1, 1e-2).unwrap();
        let n = norm(&params);
        assert!(n < prev);
        prev = n;
    }
}

#[test]
fn schedule_examples() {
    let cfg = TrainConfig::default();
    let mut s = ScheduleState::new(&cfg);
    s = update_lr(&s, 10.0, &cfg);
    assert_eq!(s.best_dev_score, Some(10.0));
    let down = update_lr(&s, 9.0, &cfg);
    assert_eq!(down.lr, cfg.lr_init * 0.5);
    assert_eq!(down.best_dev_score, Some(10.0));
    let up = update_lr(&s, 11.0, &cfg);
    assert_eq!(up.lr, cfg.lr_init);
    assert_eq!(up.best_dev_score, Some(11.0));
    assert_eq!(up.evals_since_improvement, 0);

    let patient = TrainConfig {
        patience: 2,
        ..TrainConfig::default()
    };
    let once = update_lr(
        &update_lr(&ScheduleState::new(&patient), 10.0, &patient),
        9.0,
        &patient,
    );
    assert_eq!(once.lr, patient.lr_init);
    assert_eq!(update_lr(&once, 8.0, &patient).lr, patient.lr_init * 0.5);
}

#[test]
fn training_loop_reduces_loss() {
    let (data, model, params) = setup();
    let cfg = TrainConfig {
        max_epochs: 6,
        dropout: 0.0,
        sample_pred_prob: 0.0,
        lr_init: 0.01,
        patience: 100,
        ..config()
    };
    let dev = DevSet {
        examples: &data.examples,
        references: &data.references,
        vocab: &data.vocab,
    };
    let mut state = TrainState::new(params, &cfg);
    let history = train_loop(&model, &data.examples, &dev, &mut state, &cfg, |_, _| {
        Ok(true)
    })
    .unwrap();
    assert_eq!(history.len(), 6);
    assert!(history.last().unwrap().train_loss < history[0].train_loss);
    assert!(history.iter().all(|r| r.train_loss.is_finite()));
}

proptest::proptest! {
    #[test]
    fn learning_rate_never_increases(scores in proptest::collection::vec(0.0f64..30.0, 1..40), patience in 1usize..4) {
        let cfg = TrainConfig { patience, ..TrainConfig::default() };
        let mut s = ScheduleState::new(&cfg);
        for x in scores {
            let next = update_lr(&s, x, &cfg);
            proptest::prop_assert!(next.lr <= s.lr);
            s = next;
        }
    }
}
