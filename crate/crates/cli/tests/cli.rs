use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 5
[model]
resolution = 16
pyramid_levels = 3
base_channels = 4
max_channels = 8
spade_hidden = 4
code_dim = 4
[discriminator]
scales = 2
channels = [4, 8]
[train]
iterations = 4
batch_size = 2
checkpoint_every = 0
[data]
identities = 3
frames_per_identity = 3
held_out = 1
resolution = 16
seed = 11
"#;

fn facewarp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facewarp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = facewarp(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    dir
}

#[test]
fn gen_data_is_reproducible() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["-c", "tiny.toml", "gen-data", "--out", "a"]);
    ok(d, &["-c", "tiny.toml", "gen-data", "--out", "b"]);
    for f in ["manifest.json", "id000/frame000.png", "id002/frame002.png"] {
        assert_eq!(std::fs::read(d.join("a").join(f)).unwrap(), std::fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    ok(d, &["-c", "tiny.toml", "--set", "data.seed=12", "gen-data", "--out", "c"]);
    assert_ne!(std::fs::read(d.join("a/manifest.json")).unwrap(), std::fs::read(d.join("c/manifest.json")).unwrap());
}

#[test]
fn train_animate_edit_eval() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["-c", "tiny.toml", "gen-data", "--out", "data"]);
    ok(d, &["-c", "tiny.toml", "--set", "model.guidance=\"combined\"", "train", "--data", "data", "--out", "run"]);
    let log = std::fs::read_to_string(d.join("run/metrics.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 4);
    let ck = "run/checkpoint.fwa";

    ok(d, &["animate", "--checkpoint", ck, "--data", "data", "--source-frame", "2:0", "--driving-frame", "2:1", "--driving-frame", "0:2", "--mode", "cross", "--out", "anim"]);
    for f in ["frame_000.png", "frame_001.png", "displacement_001.png", "params_001.json"] {
        assert!(d.join("anim").join(f).exists(), "{f}");
    }

    ok(d, &["edit", "--checkpoint", ck, "--data", "data", "--source-frame", "2:0", "--sweep", "jaw=0:0.3:3", "--out", "edit"]);
    assert!(d.join("edit/frame_002.png").exists());

    let report = ok(d, &["eval", "--checkpoint", ck, "--data", "data"]);
    assert!(report.contains("protocol = \"same\"") && report.contains("l1 = ") && report.contains("ssim = "), "{report}");
    let cross = ok(d, &["eval", "--checkpoint", ck, "--data", "data", "--protocol", "cross"]);
    assert!(cross.contains("apd = ") && !cross.contains("l1 = "), "{cross}");
    let gt = ok(d, &["-c", "tiny.toml", "eval", "--baseline", "ground-truth"]);
    assert!(gt.contains("l1 = 0.000000"), "{gt}");
}

#[test]
fn render_guidance_writes_tensor_and_preview() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["-c", "tiny.toml", "gen-data", "--out", "data"]);
    for kind in ["geom-disp", "neural-codes", "nmfc"] {
        ok(d, &["render-guidance", "--data", "data", "--source-frame", "0:0", "--driving-frame", "0:1", "--kind", kind, "--size", "24", "--out", kind]);
        let img = image::open(d.join(format!("{kind}.png"))).unwrap();
        assert_eq!((img.width(), img.height()), (24, 24));
        let ar = facewarp::archive::Archive::load(&d.join(format!("{kind}.fwa"))).unwrap();
        assert_eq!(ar.f32("image").unwrap().0[1..], [24, 24]);
    }
    // Parameter files work too.
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("data/manifest.json")).unwrap()).unwrap();
    let p = &m["identities"][0]["frames"][0]["params"];
    std::fs::write(d.join("p.json"), p.to_string()).unwrap();
    ok(d, &["render-guidance", "--source-params", "p.json", "--driving-params", "p.json", "--kind", "geom-disp", "--out", "zero"]);
    let ar = facewarp::archive::Archive::load(&d.join("zero.fwa")).unwrap();
    assert!(ar.f32("image").unwrap().1.iter().all(|&v| v == 0.0));
}

#[test]
fn bad_input_exits_nonzero() {
    let dir = setup();
    let d = dir.path();
    let bad = facewarp(d, &["-c", "tiny.toml", "--set", "train.batch_size=0", "gen-data", "--out", "x"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("batch_size"));
    let unknown = facewarp(d, &["--set", "model.nonsense=1", "gen-data", "--out", "x"]);
    assert_eq!(unknown.status.code(), Some(1));
    let missing = facewarp(d, &["eval", "--checkpoint", "nope.fwa"]);
    assert_eq!(missing.status.code(), Some(1));
    let usage = facewarp(d, &["train"]);
    assert!(!usage.status.success());
}
