use std::path::Path;

use super::*;
use crate::data::{synthesize_smmnist, Split, SynthConfig};

fn data(split: Split, n: usize, seed: u64) -> VideoDataset {
    let cfg = SynthConfig { num_videos: n, seq_len: 8, canvas: 16, digit_size: 8, speed: 1.5, seed, split, ..SynthConfig::default() };
    synthesize_smmnist(&cfg).unwrap().0
}

fn tiny(dir: &Path) -> TrainConfig {
    let mut c = TrainConfig {
        batch_size: 4,
        epochs: 2,
        patience: 0,
        context: 3,
        train_len: 6,
        predict_len: 4,
        val_videos: 3,
        val_k: 2,
        disc_base_width: 2,
        disc_hidden: 4,
        checkpoint_dir: dir.to_path_buf(),
        ..TrainConfig::default()
    };
    c.apply_overrides(&[
        "levels=2",
        "base_width=2",
        "feature_dim=8",
        "g=3",
        "hidden=8",
        "predictor_layers=1",
        "latent_hidden=8",
        "var_hidden=4",
    ])
    .unwrap();
    c
}

fn sets() -> (VideoDataset, VideoDataset) {
    (data(Split::Train, 6, 1), data(Split::Val, 3, 2))
}

#[test]
fn config_round_trips_and_validates() {
    let c = TrainConfig::default();
    let mut back = TrainConfig::default();
    back.set("seed", "99").unwrap();
    back.apply_text(&c.to_kv_string(), Path::new("x")).unwrap();
    assert_eq!(back, c);
    assert_eq!(TrainConfig::key_docs().len(), c.entries().len());
    assert!(matches!(back.set("bogus", "1"), Err(NuqError::Config { .. })));
    for (key, value) in [("lr", "0"), ("F", "0"), ("eta1", "-1"), ("train_len", "5"), ("beta_s", "0")] {
        let mut bad = TrainConfig::default();
        bad.set(key, value).unwrap();
        match bad.validate() {
            Err(NuqError::Config { field, .. }) => assert_eq!(field, key),
            other => panic!("{key}={value}: {other:?}"),
        }
    }
    let mut gan = TrainConfig { gan: true, k: 16, ..TrainConfig::default() };
    assert!(gan.validate().is_err());
    gan.k = 3;
    gan.validate().unwrap();
}

#[test]
fn runs_are_bitwise_deterministic() {
    let (train, val) = sets();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = train_run(&tiny(a.path()), &train, &val).unwrap();
    let rb = train_run(&tiny(b.path()), &train, &val).unwrap();
    assert_eq!(ra.log.steps.len(), 4);
    let bits = |r: &TrainOutcome| r.log.loss_trace().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&ra), bits(&rb));
    assert_eq!(ra.model.store.fingerprint(&[]).unwrap(), rb.model.store.fingerprint(&[]).unwrap());
    for s in &ra.log.steps {
        let v = &s.loss;
        assert!((v.recompose(1e-4, 1e-3, 0.0) - v.total).abs() < 1e-5 * v.total.abs());
    }
    let text = fs::read_to_string(a.path().join("run_log.csv")).unwrap();
    assert!(text.contains("# variant=nuq\n") && text.contains(RUN_LOG_HEADER));
    assert_eq!(text.lines().filter(|l| l.starts_with("step,")).count(), 4);
    assert_eq!(text.lines().filter(|l| l.starts_with("epoch,")).count(), 2);
}

#[test]
fn inert_adversarial_term_leaves_the_trajectory_unchanged() {
    let (train, val) = sets();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let plain = train_run(&tiny(a.path()), &train, &val).unwrap();
    let cfg = TrainConfig { gan: true, gamma: 0.0, ..tiny(b.path()) };
    let gan = train_run(&cfg, &train, &val).unwrap();
    assert_eq!(gan.isolation_checks, 4);
    assert!(gan.log.steps.iter().all(|s| s.disc_loss.is_some_and(f64::is_finite)));
    assert_eq!(plain.model.store.fingerprint(&[]).unwrap(), gan.model.store.fingerprint(&[]).unwrap());
    let totals = |r: &TrainOutcome| r.log.steps.iter().map(|s| s.loss.total - 0.0 * s.loss.adv).collect::<Vec<_>>();
    assert_eq!(totals(&plain), totals(&gan));
}

#[test]
fn variants_produce_different_logs() {
    let (train, val) = sets();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let nuq = train_run(&TrainConfig { epochs: 1, ..tiny(a.path()) }, &train, &val).unwrap();
    let fixed = train_run(&TrainConfig { epochs: 1, variant: Variant::Fixed, ..tiny(b.path()) }, &train, &val).unwrap();
    assert_ne!(nuq.log.loss_trace(), fixed.log.loss_trace());
    assert!(fixed.log.steps.iter().all(|s| s.loss.neg_log_precision == 0.0 && s.loss.kl_hyper == 0.0));
}

#[test]
fn resume_continues_the_uninterrupted_run() {
    let (train, val) = sets();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let full = train_run(&TrainConfig { epochs: 5, ..tiny(a.path()) }, &train, &val).unwrap();
    for name in ["epoch_0001.ckpt", "epoch_0005.ckpt", "best.ckpt", "last.ckpt"] {
        assert!(a.path().join(name).exists(), "{name}");
    }
    train_run(&TrainConfig { epochs: 3, ..tiny(b.path()) }, &train, &val).unwrap();
    let cfg = TrainConfig { epochs: 5, ..tiny(b.path()) };
    let resumed = resume(&b.path().join(LAST_CHECKPOINT), &cfg, &train, &val).unwrap();
    assert_eq!(resumed.epochs_completed, 5);
    assert_eq!(resumed.log.epochs.iter().map(|e| e.epoch).collect::<Vec<_>>(), vec![4, 5]);
    let (x, y) = (full.log.last_epoch().unwrap(), resumed.log.last_epoch().unwrap());
    assert!((x.val_ssim - y.val_ssim).abs() < 1e-4);
    assert!((x.val_psnr - y.val_psnr).abs() < 1e-4);
    assert_eq!(full.log.steps[6..].iter().map(|s| s.loss.total).collect::<Vec<_>>(), resumed.log.loss_trace());
    assert_eq!(resumed.log.steps[0].step, 7);
    let text = fs::read_to_string(b.path().join("run_log.csv")).unwrap();
    assert_eq!(text.matches(RUN_LOG_HEADER).count(), 1);
    assert!(text.contains("# resumed from"));

    let (model, loaded) = load_model(&a.path().join(LAST_CHECKPOINT)).unwrap();
    assert_eq!(model.store.fingerprint(&[]).unwrap(), full.model.store.fingerprint(&[]).unwrap());
    assert_eq!((loaded.model.height, loaded.model.g), (16, 3));
}

#[test]
fn resume_refuses_mismatched_config() {
    let (train, val) = sets();
    let dir = tempfile::tempdir().unwrap();
    train_run(&TrainConfig { epochs: 1, ..tiny(dir.path()) }, &train, &val).unwrap();
    let mut cfg = tiny(dir.path());
    cfg.model.g = 4;
    cfg.lr = 0.01;
    match resume(&dir.path().join(LAST_CHECKPOINT), &cfg, &train, &val) {
        Err(NuqError::Incompatible(diffs)) => {
            assert_eq!(diffs.len(), 2, "{diffs:?}");
            assert!(diffs.iter().any(|d| d.starts_with("cfg.g:")));
            assert!(diffs.iter().any(|d| d.starts_with("cfg.lr:")));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn gan_resume_requires_the_discriminator() {
    let (train, val) = sets();
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig { gan: true, epochs: 1, ..tiny(dir.path()) };
    train_run(&cfg, &train, &val).unwrap();
    let path = dir.path().join(LAST_CHECKPOINT);
    let mut ck = Checkpoint::load(&path).unwrap();
    ck.blobs.retain(|k, _| !k.starts_with("disc/"));
    ck.save(&path).unwrap();
    match resume(&path, &TrainConfig { epochs: 2, ..cfg }, &train, &val) {
        Err(NuqError::Incompatible(d)) => assert!(d[0].contains("`disc/`"), "{d:?}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn zero_epochs_only_validates() {
    let (train, val) = sets();
    let dir = tempfile::tempdir().unwrap();
    let out = train_run(&TrainConfig { epochs: 0, ..tiny(dir.path()) }, &train, &val).unwrap();
    assert_eq!(out.log.epochs.len(), 1);
    assert_eq!(out.log.epochs[0].epoch, 0);
    assert!(out.log.epochs[0].val_ssim.is_finite());
    assert!(out.last_checkpoint.is_none());
    assert!(!dir.path().join(LAST_CHECKPOINT).exists());
}

#[test]
fn patience_stops_a_stalled_run() {
    let (train, val) = sets();
    let dir = tempfile::tempdir().unwrap();
    // A vanishing learning rate leaves validation SSIM flat.
    let cfg = TrainConfig { epochs: 10, patience: 2, lr: 1e-30, ..tiny(dir.path()) };
    let out = train_run(&cfg, &train, &val).unwrap();
    assert!(out.converged);
    assert_eq!(out.epochs_completed, 3);
    assert_eq!(out.best.unwrap().1, 1);
}

#[test]
fn divergence_aborts_with_a_diagnostic_dump() {
    let (train, val) = sets();
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig { epochs: 3, lr: 1e30, clip: 0.0, ..tiny(dir.path()) };
    let err = train_run(&cfg, &train, &val).unwrap_err();
    assert!(matches!(err, NuqError::Numerical(_)), "{err:?}");
    assert!(err.to_string().contains(DIAGNOSTIC_FILE), "{err}");
    let dump = fs::read_to_string(dir.path().join(DIAGNOSTIC_FILE)).unwrap();
    assert!(dump.contains("reason=") && dump.contains("last_good_checkpoint="));
}

#[test]
fn mismatched_frame_sizes_are_rejected() {
    let (train, _) = sets();
    let mut val = data(Split::Val, 2, 3);
    val.height = 32;
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(train_run(&tiny(dir.path()), &train, &val), Err(NuqError::Config { .. })));
}
