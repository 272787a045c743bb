//! Optimizer update semantics, schedule shape and augmentation pairing.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rganet_tensor::{Gradients, ParamStore, Tensor4};
use rganet_testkit as tk;
use rganet_training::{
    augment, lr_at, mixup_with_lambda, optimizer_step, AugmentConfig, OptimHyper, OptimizerState,
    PairedSample, ScheduleConfig,
};

fn scalar_store(v: f32) -> ParamStore<f32> {
    let mut s = ParamStore::new();
    s.insert("theta", Tensor4::scalar(v), vec![]).unwrap();
    s
}

#[test]
fn decay_only_step_matches_hand_value() {
    let mut store = scalar_store(1.0);
    let mut state = OptimizerState::new(&store);
    let hyper = OptimHyper {
        weight_decay: 0.01,
        ..OptimHyper::default()
    };
    let grads = Gradients::zeros(1); // zero gradient
    optimizer_step(&mut store, &grads, &mut state, &hyper, 0.1);
    let theta = store.get(0).value.data()[0];
    assert!((theta - 0.999).abs() <= 1e-7, "theta {theta}");
    assert!(state.m[0].data()[0] == 0.0 && state.v[0].data()[0] == 0.0);
}

#[test]
fn first_step_magnitude_is_learning_rate() {
    let mut store = scalar_store(0.0);
    let mut state = OptimizerState::new(&store);
    let hyper = OptimHyper {
        weight_decay: 0.0,
        ..OptimHyper::default()
    };
    let mut grads = Gradients::zeros(1);
    grads.accumulate(0, &Tensor4::scalar(0.5));
    optimizer_step(&mut store, &grads, &mut state, &hyper, 1e-3);
    let theta = store.get(0).value.data()[0] as f64;
    assert!((theta + 1e-3).abs() <= 1e-6 * 1e-3 + 1e-9, "theta {theta}");
}

#[test]
fn two_steps_match_reference_trace() {
    // Independent f64 re-execution of the update rule.
    let (b1, b2, eps, wd, lr) = (0.9, 0.999, 1e-8, 0.004, 0.05);
    let grads_seq = [0.3_f64, -0.7];
    let mut theta_ref = 0.8_f64;
    let (mut m, mut v) = (0.0_f64, 0.0);
    for (t, g) in grads_seq.iter().enumerate() {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t as i32 + 1));
        let v_hat = v / (1.0 - b2.powi(t as i32 + 1));
        theta_ref = theta_ref - lr * wd * theta_ref - lr * m_hat / (v_hat.sqrt() + eps);
    }

    let mut store = scalar_store(0.8);
    let mut state = OptimizerState::new(&store);
    let hyper = OptimHyper {
        beta1: b1,
        beta2: b2,
        eps,
        weight_decay: wd,
    };
    for g in grads_seq {
        let mut grads = Gradients::zeros(1);
        grads.accumulate(0, &Tensor4::scalar(g as f32));
        optimizer_step(&mut store, &grads, &mut state, &hyper, lr);
    }
    let theta = store.get(0).value.data()[0] as f64;
    assert!((theta - theta_ref).abs() <= 1e-6, "{theta} vs {theta_ref}");
}

#[test]
fn zero_grad_zero_decay_is_identity() {
    let mut rng = tk::rng(110);
    let mut store = ParamStore::<f32>::new();
    store
        .insert(
            "w",
            tk::rand_tensor(&mut rng, (1, 1, 4, 4), -1.0, 1.0),
            vec![4, 4],
        )
        .unwrap();
    let before = store.get(0).value.clone();
    let mut state = OptimizerState::new(&store);
    let hyper = OptimHyper {
        weight_decay: 0.0,
        ..OptimHyper::default()
    };
    optimizer_step(&mut store, &Gradients::zeros(1), &mut state, &hyper, 0.1);
    assert_eq!(store.get(0).value, before);
}

#[test]
fn schedule_hits_the_stated_anchors() {
    let s = ScheduleConfig {
        eta_max: 2e-4,
        eta_min: 1e-6,
        total_steps: 2000,
        warmup_steps: 500,
    };
    s.validate().unwrap();
    assert_eq!(lr_at(500, &s), 2e-4, "end of warmup is the base rate");
    assert!((lr_at(2000, &s) - 1e-6).abs() <= 1e-18);
    let halfway = 500 + (2000 - 500) / 2;
    assert!((lr_at(halfway, &s) - (2e-4 + 1e-6) / 2.0).abs() <= 1e-12);

    // continuous and non-increasing after warmup
    let mut prev = lr_at(500, &s);
    for step in 501..=2000 {
        let cur = lr_at(step, &s);
        assert!(cur <= prev + 1e-15);
        assert!((prev - cur).abs() < 1e-6, "no jumps");
        prev = cur;
    }
}

fn sample_pair(seed: u64, h: usize, w: usize) -> PairedSample {
    let mut rng = tk::rng(seed);
    PairedSample {
        input: tk::rand_tensor(&mut rng, (1, 3, h, w), 0.0, 1.0),
        target: tk::rand_tensor(&mut rng, (1, 3, h, w), 0.0, 1.0),
        id: format!("s{seed}"),
    }
}

#[test]
fn flip_and_rotation_are_involutions() {
    let s = sample_pair(111, 8, 8);
    let f2 = rganet_training::augment::hflip(&rganet_training::augment::hflip(&s.input));
    assert_eq!(f2, s.input);
    let mut r = s.input.clone();
    for _ in 0..4 {
        r = rganet_training::augment::rot90(&r, 1);
    }
    assert_eq!(r, s.input);
    assert_eq!(rganet_training::augment::rot90(&s.input, 0), s.input);
}

#[test]
fn mixup_endpoint_returns_first_sample() {
    let a = sample_pair(112, 8, 8);
    let b = sample_pair(113, 8, 8);
    let m = mixup_with_lambda(&a, &b, 1.0).unwrap();
    assert_eq!(m.input, a.input);
    assert_eq!(m.target, a.target);
}

#[test]
fn augmentation_preserves_pairing() {
    // Flips and rotations are shared position bijections, so the set of
    // positions where input == target is carried along exactly: with a
    // full-size crop the equality count is invariant.
    let mut s = sample_pair(114, 12, 12);
    for i in (0..s.input.numel()).step_by(7) {
        let v = s.input.data()[i];
        s.target.data_mut()[i] = v;
    }
    let count = |p: &PairedSample| {
        p.input
            .data()
            .iter()
            .zip(p.target.data())
            .filter(|(a, b)| a == b)
            .count()
    };
    let before = count(&s);
    let cfg = AugmentConfig {
        crop_size: 12,
        flip_prob: 1.0,
        rotate: true,
        ..AugmentConfig::default()
    };
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    for _ in 0..10 {
        let out = augment(&s, &cfg, &mut rng).unwrap();
        assert_eq!(out.input.dims(), (1, 3, 12, 12));
        assert_eq!(count(&out), before, "pairing mask must survive transforms");
    }
}

#[test]
fn crop_larger_than_image_errors() {
    let s = sample_pair(115, 8, 8);
    let cfg = AugmentConfig {
        crop_size: 16,
        ..AugmentConfig::default()
    };
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    assert!(augment(&s, &cfg, &mut rng).is_err());
}
