use dualse::datasets::synthesize_subspaces;
use dualse::model::{AutoEncoderParams, Hyperparams, Layer};
use dualse::trainer::{encode_checkpoint, finetune, load_checkpoint, pretrain, save_checkpoint, CHECKPOINT_VERSION};
use dualse::{DataSet, Error, Matrix, ModelState, TrainConfig};

fn quiet(pretrain_epochs: usize, finetune_epochs: usize) -> TrainConfig {
    TrainConfig {
        pretrain_epochs,
        finetune_epochs,
        log_every: 0,
        ..TrainConfig::default()
    }
}

fn synthetic(seed: u64) -> (DataSet, ModelState) {
    let data = synthesize_subspaces(4, 3, 20, 10, 0.01, seed).unwrap();
    let state = ModelState::init(&[20, 16], data.n(), seed).unwrap();
    (data, state)
}

#[test]
fn near_identity_autoencoder_overfits() {
    let x = Matrix::from_fn(4, 6, |i, j| ((i * 5 + j * 3) % 7) as f64 / 7.0);
    let data = DataSet::unlabeled(x);
    let mut state = ModelState::init(&[4, 4], 6, 1).unwrap();
    let near = |s: f64| {
        let w = Matrix::from_fn(4, 4, |i, j| {
            f64::from(u8::from(i == j)) + s * ((i * 4 + j) as f64 - 7.5) / 8.0
        });
        Layer::new(w, vec![0.0; 4]).unwrap()
    };
    state.ae = AutoEncoderParams::new(vec![near(0.05)], vec![near(-0.03)]).unwrap();
    let cfg = TrainConfig {
        lr: 1e-2,
        ..quiet(200, 0)
    };
    let history = pretrain(&mut state, &data, &cfg).unwrap();
    let best = history.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(best <= 1e-6, "best reconstruction loss {best:e}");
}

#[test]
fn zero_epochs_leave_state_unchanged() {
    let (data, mut state) = synthetic(0);
    let before = state.clone();
    assert!(pretrain(&mut state, &data, &quiet(0, 0)).unwrap().is_empty());
    assert!(finetune(&mut state, &data, &quiet(0, 0)).unwrap().is_empty());
    assert_eq!(state, before);
}

#[test]
fn training_is_bitwise_reproducible() {
    let run = || {
        let (data, mut state) = synthetic(3);
        let p = pretrain(&mut state, &data, &quiet(20, 20)).unwrap();
        let f = finetune(&mut state, &data, &quiet(20, 20)).unwrap();
        (p, f, encode_checkpoint(&state))
    };
    let (a, b) = (run(), run());
    assert_eq!(
        a.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(a.1, b.1);
    assert_eq!(a.2, b.2);
}

#[test]
fn structure_gradient_is_zero_without_structure_terms() {
    let (data, mut state) = synthetic(1);
    let cfg = TrainConfig {
        hyperparams: Hyperparams {
            lambda1: 0.0,
            lambda2: 0.0,
            ..Hyperparams::default()
        },
        ..quiet(0, 15)
    };
    let before = state.c_s.clone();
    for r in finetune(&mut state, &data, &cfg).unwrap() {
        assert_eq!(r.c_s_grad_norm, 0.0);
    }
    assert_eq!(state.c_s, before);
}

#[test]
fn finetune_loss_decreases_at_small_lr() {
    for seed in 0..3 {
        let (data, mut state) = synthetic(seed);
        pretrain(&mut state, &data, &quiet(200, 10)).unwrap();
        let h = finetune(&mut state, &data, &quiet(200, 10)).unwrap();
        for w in h.windows(2) {
            assert!(
                w[1].total < w[0].total,
                "seed {seed}: {} then {}",
                w[0].total,
                w[1].total
            );
        }
    }
}

#[test]
fn larger_gamma_never_raises_converged_self_expression_error() {
    for seed in 0..3 {
        let se_a = |gamma: f64| {
            let (data, mut state) = synthetic(seed);
            let cfg = TrainConfig {
                hyperparams: Hyperparams {
                    gamma,
                    ..Hyperparams::default()
                },
                ..quiet(300, 300)
            };
            pretrain(&mut state, &data, &cfg).unwrap();
            finetune(&mut state, &data, &cfg).unwrap().last().unwrap().terms.se_a
        };
        let (low, high) = (se_a(1.0), se_a(10.0));
        assert!(high <= low, "seed {seed}: se_a {low} at gamma 1, {high} at gamma 10");
    }
}

#[test]
fn divergence_reports_stage_and_epoch() {
    let data = DataSet::unlabeled(Matrix::from_fn(3, 4, |_, _| 1e300));
    let mut state = ModelState::init(&[3, 2], 4, 0).unwrap();
    match pretrain(&mut state, &data, &quiet(5, 0)) {
        Err(Error::Divergence { stage, epoch, value }) => {
            assert_eq!((stage, epoch), ("pretrain", 0));
            assert!(!value.is_finite());
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn checkpoint_files_round_trip_and_reject_damage() {
    let dir = tempfile::tempdir().unwrap();
    let (data, mut state) = synthetic(5);
    pretrain(&mut state, &data, &quiet(3, 0)).unwrap();
    let path = dir.path().join("model.bin");
    save_checkpoint(&state, &path).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), state);

    let bytes = std::fs::read(&path).unwrap();
    let cut = dir.path().join("cut.bin");
    std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(load_checkpoint(&cut), Err(Error::Checksum(_))));

    let mut v999 = bytes[..bytes.len() - 4].to_vec();
    v999[8..12].copy_from_slice(&999u32.to_le_bytes());
    let crc = crc32fast::hash(&v999);
    v999.extend_from_slice(&crc.to_le_bytes());
    let old = dir.path().join("v999.bin");
    std::fs::write(&old, v999).unwrap();
    assert!(matches!(
        load_checkpoint(&old),
        Err(Error::Version {
            found: 999,
            expected: CHECKPOINT_VERSION
        })
    ));
    assert!(matches!(
        load_checkpoint(dir.path().join("missing.bin")),
        Err(Error::Io(_))
    ));
}
