use coda4dgs_core::render::{render, RasterSettings};
use coda4dgs_core::synth::*;
use coda4dgs_core::train::checkpoint::{decode_checkpoint, encode_checkpoint};
use coda4dgs_core::train::*;
use coda4dgs_core::Error;

fn small_data(objects: bool) -> Dataset {
    let mut s = SceneSpec::emergent();
    s.frames = 8;
    s.width = 24;
    s.height = 24;
    s.camera.focal = 30.0;
    s.background.blobs = 60;
    s.objects[0].blobs = 15;
    s.objects[1].blobs = 12;
    if !objects {
        s.objects.clear();
    }
    generate_dataset(&s).unwrap()
}

fn small_config(total: u64, stat: u64) -> TrainingConfig {
    TrainingConfig {
        total_steps: total,
        static_phase_steps: stat,
        hexplane_resolutions: vec![6],
        hexplane_channels: 4,
        latent_hidden: 16,
        latent_dim: 16,
        head_hidden: 8,
        dcn_hidden: 16,
        embed_dim: 8,
        prune_interval: 10,
        ..TrainingConfig::default()
    }
}

#[test]
fn config_text_round_trips() {
    let c = small_config(77, 30);
    assert_eq!(TrainingConfig::parse(&c.to_text()).unwrap(), c);
}

#[test]
fn config_defaults_and_errors() {
    let c = TrainingConfig::parse("total_steps = 1000\n").unwrap();
    assert_eq!(c.static_phase_steps, 400);
    assert_eq!(c.lr_start, 1.6e-3);
    assert_eq!(c.lr_end, 1.6e-4);
    assert!(matches!(TrainingConfig::parse("learning_rate = 1\n"), Err(Error::Config(_))));
    assert!(matches!(TrainingConfig::parse("lr_start = 1e-4\nlr_end = 1e-3\n"), Err(Error::Config(_))));
    assert!(matches!(TrainingConfig::parse("total_steps = 10\nstatic_phase_steps = 11\n"), Err(Error::Config(_))));
    assert!(matches!(TrainingConfig::parse("embed_dim = 7\n"), Err(Error::Config(_))));
}

#[test]
fn zero_steps_leaves_initialization_untouched() {
    let data = small_data(true);
    let cfg = small_config(0, 0);
    let mut tr = Trainer::new(cfg.clone(), &data, Split::Reconstruction).unwrap();
    tr.run().unwrap();
    let fresh = Model::new(initial_scene(&cfg, &data).unwrap(), initial_motion(&cfg, &data).unwrap());
    assert_eq!(tr.model, fresh);
    assert!(tr.log.is_empty());
}

#[test]
fn dcn_toggle_does_not_affect_static_phase() {
    let data = small_data(true);
    let on = small_config(30, 12);
    let off = TrainingConfig { dcn_enabled: false, ..on.clone() };
    let mut a = Trainer::new(on, &data, Split::Reconstruction).unwrap();
    let mut b = Trainer::new(off, &data, Split::Reconstruction).unwrap();
    for _ in 0..12 {
        assert_eq!(a.step().unwrap(), b.step().unwrap());
    }
    assert_eq!(a.model.scene, b.model.scene);
    a.run().unwrap();
    b.run().unwrap();
    assert_ne!(a.model.scene, b.model.scene);
}

#[test]
fn first_dynamic_render_equals_last_static_render() {
    let data = small_data(true);
    let mut tr = Trainer::new(small_config(20, 8), &data, Split::Reconstruction).unwrap();
    while tr.in_static_phase() {
        tr.step().unwrap();
    }
    let fbg = data.feature_background();
    for f in &data.frames {
        let (canonical, _) = render(&tr.model.scene, &f.camera, data.spec.sky, fbg, &RasterSettings::default()).unwrap();
        let moved = tr.model.render(f.t, &f.camera, data.spec.sky, fbg, &RasterSettings::default()).unwrap();
        assert_eq!(canonical, moved);
    }
}

#[test]
fn training_is_deterministic_and_logs_every_step() {
    let data = small_data(true);
    let run = || {
        let mut tr = Trainer::new(small_config(25, 10), &data, Split::Nvs).unwrap();
        tr.run().unwrap();
        tr.log_text()
    };
    let a = run();
    assert_eq!(a, run());
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], LOG_HEADER);
    assert_eq!(lines.len(), 26);
    assert!(lines[1].starts_with("0,0.0016,"));
}

#[test]
fn nvs_training_never_draws_held_out_frames() {
    let mut s = SceneSpec::emergent();
    s.width = 12;
    s.height = 12;
    s.background.blobs = 10;
    let data = generate_dataset(&s).unwrap();
    let tr = Trainer::new(small_config(10, 5), &data, Split::Nvs).unwrap();
    for step in 0..500 {
        assert_ne!(tr.frame_for_step(step) % 10, 0);
    }
}

#[test]
fn checkpoint_round_trip_resumes_identically() {
    let data = small_data(true);
    let cfg = small_config(30, 10);
    let mut tr = Trainer::new(cfg.clone(), &data, Split::Reconstruction).unwrap();
    for _ in 0..15 {
        tr.step().unwrap();
    }
    let ck = tr.checkpoint();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");
    save_checkpoint(&ck, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, ck);
    let mut resumed = Trainer::resume(back.config, &data, Split::Reconstruction, back.model, back.optimizer, back.step).unwrap();
    for _ in 0..5 {
        assert_eq!(tr.step().unwrap(), resumed.step().unwrap());
    }
    assert_eq!(tr.model, resumed.model);
}

#[test]
fn checkpoint_errors() {
    let data = small_data(false);
    let cfg = small_config(4, 2);
    let mut tr = Trainer::new(cfg.clone(), &data, Split::Reconstruction).unwrap();
    tr.run().unwrap();
    let ck = tr.checkpoint();
    let bytes = encode_checkpoint(&ck);
    assert!(matches!(decode_checkpoint(&bytes[..bytes.len() / 2]), Err(Error::Format { .. })));
    let mut flipped = bytes.clone();
    let k = bytes.len() - 100;
    flipped[k] ^= 0x40;
    assert!(matches!(decode_checkpoint(&flipped), Err(Error::Checksum { .. })));
    let mut wrong_version = bytes.clone();
    wrong_version[4] = 9;
    assert!(matches!(decode_checkpoint(&wrong_version), Err(Error::Version { found: 9, .. })));
    assert!(matches!(ck.ensure_feature_dim(4), Err(Error::ConfigConflict(_))));
    let other = TrainingConfig { feature_dim: 4, ..cfg };
    let r = Trainer::resume(other, &data, Split::Reconstruction, ck.model, ck.optimizer, ck.step);
    assert!(matches!(r, Err(Error::ConfigConflict(_))));
}

#[test]
fn feature_width_mismatch_with_dataset_is_a_conflict() {
    let data = small_data(false);
    let cfg = TrainingConfig { feature_dim: 5, ..small_config(2, 1) };
    assert!(matches!(Trainer::new(cfg, &data, Split::Reconstruction), Err(Error::ConfigConflict(_))));
}

#[test]
fn non_finite_loss_names_the_term() {
    let data = small_data(false);
    let mut tr = Trainer::new(small_config(5, 2), &data, Split::Reconstruction).unwrap();
    tr.model.scene.features.iter_mut().for_each(|v| *v = f64::NAN);
    match tr.step() {
        Err(Error::Diverged { step: 0, term }) => assert_eq!(term, "feature"),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn pruning_drops_transparent_gaussians_and_their_moments() {
    let data = small_data(false);
    let mut tr = Trainer::new(small_config(10, 10), &data, Split::Reconstruction).unwrap();
    let n = tr.model.scene.len();
    for i in 0..5 {
        tr.model.scene.opacity_logits[i] = -20.0;
    }
    tr.run().unwrap();
    assert_eq!(tr.model.scene.len(), n - 5);
    assert_eq!(tr.model.field_ids.len(), n - 5);
    assert_eq!(tr.optimizer.scene[0].first_moment.len(), (n - 5) * 3);
    assert_eq!(tr.optimizer.scene[4].first_moment.len(), (n - 5) * 48);
}

#[test]
fn ground_truth_scores_sentinel_psnr_and_unit_ssim() {
    let data = small_data(true);
    for f in &data.frames {
        let m = frame_metrics(&f.rgb, f).unwrap();
        assert_eq!(m.psnr, 99.0);
        assert!((m.ssim - 1.0).abs() < 1e-12);
        assert_eq!(m.psnr_dynamic, f.mask.iter().any(|&v| v > 0).then_some(99.0));
    }
}

#[test]
fn nvs_evaluation_covers_held_out_frames_only() {
    let mut s = SceneSpec::emergent();
    s.width = 16;
    s.height = 16;
    s.background.blobs = 20;
    let data = generate_dataset(&s).unwrap();
    let cfg = small_config(0, 0);
    let model = Model::new(initial_scene(&cfg, &data).unwrap(), initial_motion(&cfg, &data).unwrap());
    let report = evaluate(&model, &data, Split::Nvs, &RasterSettings::default()).unwrap();
    let frames: Vec<usize> = report.frames.iter().map(|f| f.frame).collect();
    assert_eq!(frames, vec![0, 10, 20]);
    assert_eq!(report.to_csv().lines().count(), 4);
}

#[test]
fn masked_metrics_ignore_unmasked_pixels() {
    let data = small_data(true);
    let f = &data.frames[6];
    let mut pred = f.rgb.clone();
    let mut dynamic = Vec::new();
    for (p, &m) in f.mask.iter().enumerate() {
        dynamic.push(m > 0);
        if m == 0 {
            pred.data[p * 3] = 1.0 - pred.data[p * 3];
        }
    }
    assert_eq!(masked_psnr(&pred, &f.rgb, &dynamic), Some(99.0));
    assert_eq!(masked_psnr(&pred, &f.rgb, &vec![false; dynamic.len()]), None);
    assert!(frame_metrics(&pred, f).unwrap().psnr < 40.0);
}

#[test]
fn static_phase_loss_trend_is_non_increasing() {
    let mut s = SceneSpec::static_scene(150);
    s.width = 24;
    s.height = 24;
    s.camera.focal = 30.0;
    let data = generate_dataset(&s).unwrap();
    let mut tr = Trainer::new(small_config(800, 800), &data, Split::Reconstruction).unwrap();
    tr.run().unwrap();
    // EMA with a 100-step window may exceed its running minimum by at most 5%
    let alpha = 2.0 / 101.0;
    let mut ema = tr.log[0].report.total;
    let mut low = ema;
    let mut worst: f64 = 1.0;
    for row in &tr.log[1..] {
        ema = alpha * row.report.total + (1.0 - alpha) * ema;
        low = low.min(ema);
        worst = worst.max(ema / low);
    }
    assert!(worst <= 1.05, "EMA rose {:.1}% above its minimum", 100.0 * (worst - 1.0));
    assert!(ema < 0.5 * tr.log[0].report.total);
}
