//! End-to-end behavior of the `rganet` binary's cheap subcommands.

use std::path::Path;
use std::process::Command;

use rganet_cli::{dataset, generate_clean_image};
use rganet_network::{init_params, param_count, save_checkpoint, ModelConfig};

fn rganet() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rganet"))
}

fn write_clean_images(dir: &Path, n: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for i in 0..n {
        let img = generate_clean_image(1000 + i as u64, 16, 16);
        dataset::save_png(&dir.join(format!("img{i:02}.png")), &img).unwrap();
    }
}

#[test]
fn unknown_subcommand_and_flags_exit_2() {
    let st = rganet().arg("frobnicate").output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    let st = rganet().args(["inspect", "--bogus-flag"]).output().unwrap();
    assert_eq!(st.status.code(), Some(2));
    let st = rganet()
        .args(["ablate", "--case", "no_everything", "--data", "x", "--out", "y"])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(2), "unknown ablation case is usage");
}

#[test]
fn runtime_failure_exits_1() {
    let st = rganet()
        .args(["infer", "--checkpoint", "/nonexistent.rgan", "--data", "/nowhere", "--out", "/tmp/x"])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(1));
}

#[test]
fn inspect_prints_the_audited_parameter_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("toy.json");
    std::fs::write(&cfg_path, r#"{"model": {}}"#).unwrap();
    let out = rganet()
        .args(["inspect", "--config"])
        .arg(&cfg_path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(
        text.contains("parameters: 730894"),
        "inspect output: {text}"
    );
    assert_eq!(param_count(&ModelConfig::toy()), 730_894);
}

#[test]
fn synth_writes_a_loadable_paired_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let clean = dir.path().join("clean");
    let out = dir.path().join("dataset");
    write_clean_images(&clean, 3);
    let st = rganet()
        .args(["synth", "--seed", "9", "--data"])
        .arg(&clean)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let ds = dataset::load_dataset(&out).unwrap();
    assert_eq!(ds.len(), 3);
    for s in &ds {
        assert_eq!(s.input.dims(), s.target.dims());
        // smoke must actually change the image
        assert_ne!(s.input, s.target);
    }

    // deterministic per seed
    let out2 = dir.path().join("dataset2");
    rganet()
        .args(["synth", "--seed", "9", "--data"])
        .arg(&clean)
        .arg("--out")
        .arg(&out2)
        .status()
        .unwrap();
    let ds2 = dataset::load_dataset(&out2).unwrap();
    for (a, b) in ds.iter().zip(ds2.iter()) {
        assert_eq!(a.input, b.input);
    }
}

#[test]
fn infer_with_identity_checkpoint_reproduces_inputs() {
    let dir = tempfile::tempdir().unwrap();
    // zero head + global residual: the untrained network is the identity
    let cfg = ModelConfig::toy();
    let store = init_params::<f32>(&cfg, 5).unwrap();
    let ckpt = dir.path().join("identity.rgan");
    save_checkpoint(&ckpt, &cfg, &store, &[]).unwrap();

    let input_dir = dir.path().join("in");
    write_clean_images(&input_dir, 2);
    let out_dir = dir.path().join("restored");
    let st = rganet()
        .args(["infer", "--checkpoint"])
        .arg(&ckpt)
        .arg("--data")
        .arg(&input_dir)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    for (stem, path) in dataset::list_pngs(&input_dir).unwrap() {
        let orig = dataset::load_png(&path).unwrap();
        let restored = dataset::load_png(&out_dir.join(format!("{stem}.png"))).unwrap();
        assert_eq!(orig, restored, "{stem} must round-trip bit-identically");
    }
}

#[test]
fn eval_of_identical_dirs_reports_perfect_scores() {
    let dir = tempfile::tempdir().unwrap();
    let imgs = dir.path().join("imgs");
    write_clean_images(&imgs, 2);
    let json_path = dir.path().join("metrics.json");
    let st = rganet()
        .arg("eval")
        .arg(&imgs)
        .arg(&imgs)
        .arg("--out")
        .arg(&json_path)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(rep["psnr"].as_f64().unwrap(), 100.0);
    assert!((rep["ssim"].as_f64().unwrap() - 1.0).abs() <= 1e-6);
    assert_eq!(rep["mae"].as_f64().unwrap(), 0.0);
    assert_eq!(rep["ciede2000"].as_f64().unwrap(), 0.0);
    assert_eq!(rep["per_image"].as_array().unwrap().len(), 2);
}
