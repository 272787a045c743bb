//! Synthetic smoke semantics and dataset ingestion.

use rganet_cli::{
    apply_smoke, dataset, generate_clean_image, synth_smoke, value_noise, SmokeParams,
};
use rganet_tensor::Tensor4;
use rganet_testkit as tk;

#[test]
fn zero_beta_is_identity() {
    let clean = generate_clean_image(1, 16, 16);
    let p = SmokeParams {
        beta: 1e-12,
        ..SmokeParams::default()
    };
    let smoky = synth_smoke(&clean, &p).unwrap();
    assert!(tk::max_abs_diff(&clean, &smoky) <= 1e-6);
}

#[test]
fn huge_beta_saturates_to_airlight() {
    let clean = generate_clean_image(2, 16, 16);
    let p = SmokeParams {
        beta: 1e6,
        airlight: [0.8, 0.9, 1.0],
        ..SmokeParams::default()
    };
    // density is positive almost everywhere; force it strictly positive by
    // compositing directly over a known field
    let density = vec![0.5; 16 * 16];
    let smoky = apply_smoke(&clean, &density, p.beta, p.airlight);
    for c in 0..3 {
        for &v in smoky.plane(0, c) {
            assert!((v as f64 - p.airlight[c]).abs() <= 1e-6);
        }
    }
}

#[test]
fn single_pixel_composite_closed_form() {
    let clean = Tensor4::<f32>::zeros(1, 3, 1, 1);
    let smoky = apply_smoke(&clean, &[0.5], 2.0, [1.0, 1.0, 1.0]);
    let want = 1.0 - (-1.0_f64).exp(); // 0.63212...
    for c in 0..3 {
        assert!((smoky.at(0, c, 0, 0) as f64 - want).abs() <= 1e-6);
    }
}

#[test]
fn synth_smoke_is_deterministic_and_in_range() {
    let clean = generate_clean_image(3, 24, 24);
    let p = SmokeParams {
        seed: 77,
        ..SmokeParams::default()
    };
    let a = synth_smoke(&clean, &p).unwrap();
    let b = synth_smoke(&clean, &p).unwrap();
    assert_eq!(a, b);
    assert!(a.data().iter().all(|&v| (0.0..=1.0).contains(&v)));

    let c = synth_smoke(
        &clean,
        &SmokeParams {
            seed: 78,
            ..SmokeParams::default()
        },
    )
    .unwrap();
    assert_ne!(a, c);
}

#[test]
fn smoke_is_monotone_in_beta_toward_airlight() {
    // With A = 1 and clean <= 1, each pixel is non-decreasing in beta.
    let clean = generate_clean_image(4, 12, 12);
    let density: Vec<f64> = value_noise(12, 12, 4, 4, 0.5, &mut {
        use rand::SeedableRng;
        rand_chacha::ChaCha20Rng::seed_from_u64(5)
    });
    let mut prev = apply_smoke(&clean, &density, 0.1, [1.0, 1.0, 1.0]);
    for beta in [0.3, 0.8, 1.5, 3.0, 8.0] {
        let cur = apply_smoke(&clean, &density, beta, [1.0, 1.0, 1.0]);
        for (p, c) in prev.data().iter().zip(cur.data()) {
            assert!(c >= p, "pixel decreased when beta rose");
        }
        prev = cur;
    }
}

#[test]
fn value_noise_is_in_unit_range() {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(6);
    let field = value_noise(33, 17, 4, 4, 0.5, &mut rng);
    assert_eq!(field.len(), 33 * 17);
    assert!(field.iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn png_round_trip_is_exact_up_to_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let img = generate_clean_image(7, 20, 14);
    let path = dir.path().join("img.png");
    dataset::save_png(&path, &img).unwrap();
    let back = dataset::load_png(&path).unwrap();
    assert_eq!(back.dims(), img.dims());
    for (&a, &b) in img.data().iter().zip(back.data()) {
        let quantized = (a.clamp(0.0, 1.0) * 255.0).round() / 255.0;
        assert_eq!(b, quantized, "quantization must be v/255 exactly");
    }
}

#[test]
fn dataset_pairing_rules() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::create_dir_all(root.join("input")).unwrap();
    std::fs::create_dir_all(root.join("target")).unwrap();

    // empty directories: empty list
    assert!(dataset::load_dataset(root).unwrap().is_empty());

    let img = generate_clean_image(8, 12, 12);
    for stem in ["a", "b", "c"] {
        dataset::save_png(&root.join("input").join(format!("{stem}.png")), &img).unwrap();
        dataset::save_png(&root.join("target").join(format!("{stem}.png")), &img).unwrap();
    }
    let ds = dataset::load_dataset(root).unwrap();
    assert_eq!(ds.len(), 3);
    let ids: Vec<&str> = ds.iter().map(|s| s.id.as_str()).collect();
    assert_eq!(ids, ["a", "b", "c"], "lexicographic by stem");

    // orphan input file -> pairing error naming the stem
    dataset::save_png(&root.join("input").join("zz_orphan.png"), &img).unwrap();
    match dataset::load_dataset(root) {
        Err(dataset::DataError::Pairing { stem }) => assert_eq!(stem, "zz_orphan"),
        other => panic!("expected pairing error, got {other:?}"),
    }

    // undecodable png -> decode error naming the path
    std::fs::remove_file(root.join("input").join("zz_orphan.png")).unwrap();
    std::fs::write(root.join("input").join("a.png"), b"not a png").unwrap();
    match dataset::load_dataset(root) {
        Err(dataset::DataError::Decode { path, .. }) => {
            assert!(path.ends_with("input/a.png"))
        }
        other => panic!("expected decode error, got {other:?}"),
    }
}
