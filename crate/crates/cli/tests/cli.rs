use std::path::Path;
use std::process::{Command, Output};

use clickmat_core::io::{encode_uncertainty_map, read_alpha, write_alpha, write_image};
use clickmat_core::{AlphaMatte, Image, UncertaintyMap};
use clickmat_nn::{MattingConfig, RefinerConfig};
use clickmat_train::TrainConfig;

fn clickmat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clickmat")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = clickmat(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const DATASET: &str = "height = 32\nwidth = 32\n[train]\nforegrounds = 2\nbackgrounds = 1\n[test]\nforegrounds = 1\nbackgrounds = 1\n";

fn tiny_train_config() -> String {
    TrainConfig {
        epochs_matting: 1,
        epochs_uncertainty: 1,
        epochs_refine: 1,
        batch_size: 2,
        crop: 32,
        refine_patch: 16,
        model: MattingConfig {
            base_width: 4,
            ..MattingConfig::default()
        },
        refiner: RefinerConfig {
            base_width: 4,
            ..RefinerConfig::default()
        },
        ..TrainConfig::default()
    }
    .to_toml()
}

#[test]
fn exit_codes_follow_usage_and_runtime_errors() {
    assert_eq!(clickmat(&["--help"]).status.code(), Some(0));
    assert_eq!(clickmat(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(clickmat(&["eval", "--pred", "a", "--gt", "b", "--bogus"]).status.code(), Some(2));
    assert_eq!(clickmat(&["infer", "--image", "x.png"]).status.code(), Some(2));
    let out = clickmat(&["infer", "--model", "/nonexistent", "--image", "x.png", "--out", "y.png"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn synth_train_infer_refine_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("data.toml"), DATASET).unwrap();
    std::fs::write(root.join("train.toml"), tiny_train_config()).unwrap();

    for name in ["d1", "d2"] {
        ok(&["synth-data", "--config", p(&root.join("data.toml")), "--seed", "4", "--out", p(&root.join(name))]);
    }
    let manifest = |d: &str| std::fs::read(root.join(d).join("manifest.jsonl")).unwrap();
    assert_eq!(manifest("d1"), manifest("d2"));
    assert_eq!(String::from_utf8(manifest("d1")).unwrap().lines().count(), 3);

    for name in ["m1", "m2"] {
        ok(&[
            "train", "--data", p(&root.join("d1")), "--out", p(&root.join(name)),
            "--config", p(&root.join("train.toml")), "--seed", "7",
        ]);
    }
    for file in ["matting.safetensors", "uncertainty.safetensors", "refiner.safetensors"] {
        let a = std::fs::read(root.join("m1").join(file)).unwrap();
        assert_eq!(a, std::fs::read(root.join("m2").join(file)).unwrap(), "{file}");
    }

    let image = root.join("d1/composite").read_dir().unwrap().next().unwrap().unwrap().path();
    std::fs::write(root.join("empty.json"), "[]").unwrap();
    let model = root.join("m1/uncertainty.safetensors");
    ok(&[
        "infer", "--model", p(&model), "--image", p(&image), "--clicks", p(&root.join("empty.json")),
        "--out", p(&root.join("matte.png")), "--sigma-out", p(&root.join("matte.sigma")),
    ]);
    assert_eq!(read_alpha(&root.join("matte.png")).unwrap().shape(), (32, 32));
    assert!(root.join("matte.sigma").exists());

    std::fs::write(root.join("clicks.json"), r#"[{"row":3,"col":4,"polarity":"bg","i":0}]"#).unwrap();
    let out = ok(&[
        "refine", "--model", p(&model), "--refiner", p(&root.join("m1/refiner.safetensors")),
        "--image", p(&image), "--clicks", p(&root.join("clicks.json")), "--k", "2", "--patch-size", "16",
        "--out", p(&root.join("refined.png")), "--patches-out", p(&root.join("patches.json")), "--json",
    ]);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["patches"].as_array().unwrap().len() <= 2);
    assert_eq!(read_alpha(&root.join("refined.png")).unwrap().shape(), (32, 32));

    // clicks outside the image are a runtime error
    std::fs::write(root.join("far.json"), r#"[{"row":300,"col":4,"polarity":"fg","i":0}]"#).unwrap();
    let out = clickmat(&[
        "infer", "--model", p(&model), "--image", p(&image), "--clicks", p(&root.join("far.json")),
        "--out", p(&root.join("x.png")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_of_identical_directories_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    std::fs::create_dir_all(&pred).unwrap();
    std::fs::create_dir_all(&gt).unwrap();
    for i in 0..3 {
        let data: Vec<f32> = (0..24 * 24).map(|k| ((k * (i + 3)) % 17) as f32 / 16.0).collect();
        let alpha = AlphaMatte::new(24, 24, data).unwrap();
        write_alpha(&pred.join(format!("{i}.png")), &alpha).unwrap();
        write_alpha(&gt.join(format!("{i}.png")), &alpha).unwrap();
    }
    let report = dir.path().join("report.json");
    let out = ok(&["eval", "--pred", p(&pred), "--gt", p(&gt), "--out", p(&report), "--json"]);
    let scopes: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(scopes, serde_json::from_slice::<serde_json::Value>(&std::fs::read(&report).unwrap()).unwrap());
    for scope in scopes.as_array().unwrap() {
        assert_eq!(scope["images"].as_array().unwrap().len(), 3);
        for name in ["sad", "mse", "grad", "conn"] {
            assert_eq!(scope["mean"]["values"][name].as_f64(), Some(0.0), "{name}");
        }
    }
    let out = ok(&["eval", "--pred", p(&pred), "--gt", p(&gt), "--metrics", "sad", "--scope", "full"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("id,scope,pixels,sad,sad_scaled,sad_per_kpx"));
    assert_eq!(clickmat(&["eval", "--pred", p(&pred), "--gt", p(&gt), "--metrics", "nope"]).status.code(), Some(1));
}

#[test]
fn sparsify_reproduces_the_four_pixel_curve() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    // squared errors proportional to [4, 1, 9, 0] with uncertainty [2, 1, 3, 0.5]
    let gt = AlphaMatte::new(2, 2, vec![0.0; 4]).unwrap();
    let pred = AlphaMatte::new(2, 2, vec![0.2, 0.1, 0.3, 0.0]).unwrap();
    let sigma = UncertaintyMap::new(2, 2, vec![2.0, 1.0, 3.0, 0.5]).unwrap();
    write_alpha(&root.join("pred.png"), &pred).unwrap();
    write_alpha(&root.join("gt.png"), &gt).unwrap();
    std::fs::write(root.join("s.sigma"), encode_uncertainty_map(&sigma)).unwrap();
    let csv = root.join("curve.csv");
    ok(&[
        "sparsify", "--pred", p(&root.join("pred.png")), "--gt", p(&root.join("gt.png")),
        "--sigma", p(&root.join("s.sigma")), "--fractions", "0,0.25,0.5", "--out", p(&csv),
    ]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    let q = |v: f64| (v * 65535.0).round() / 65535.0;
    let sq = [q(0.2).powi(2), q(0.1).powi(2), q(0.3).powi(2), 0.0];
    let expected = [
        (sq[0] + sq[1] + sq[2] + sq[3]) / 4.0,
        (sq[0] + sq[1] + sq[3]) / 3.0,
        (sq[1] + sq[3]) / 2.0,
    ];
    assert_eq!(rows.len(), 3);
    for (row, want) in rows.iter().zip(expected) {
        assert!((row[1] - want).abs() < 1e-7 && (row[2] - want).abs() < 1e-7, "{row:?} vs {want}");
    }
    let out = ok(&[
        "sparsify", "--pred", p(&root.join("pred.png")), "--gt", p(&root.join("gt.png")),
        "--sigma", p(&root.join("s.sigma")), "--fractions", "0,0.25", "--out", p(&csv), "--json",
    ]);
    let curve: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(curve["fractions"].as_array().unwrap().len(), 2);
    let fail = clickmat(&[
        "sparsify", "--pred", p(&root.join("pred.png")), "--gt", p(&root.join("gt.png")),
        "--sigma", p(&root.join("s.sigma")), "--fractions", "0,1", "--out", p(&csv),
    ]);
    assert_eq!(fail.status.code(), Some(1));
}

#[test]
fn written_image_files_are_readable_by_infer() {
    // a plain 8-bit RGB PNG from another tool decodes fine
    let dir = tempfile::tempdir().unwrap();
    let img = Image::filled(8, 8, [0.5, 0.2, 0.9]);
    write_image(&dir.path().join("a.png"), &img).unwrap();
    assert_eq!(clickmat_core::io::read_image(&dir.path().join("a.png")).unwrap().shape(), (8, 8));
}
