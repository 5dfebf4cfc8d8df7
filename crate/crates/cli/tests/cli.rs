use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
[data]
train_worlds = 2
eval_worlds = 1

[synth]
dims = [40, 40, 20]
objects = [2, 4]
tube_length = [15, 40]
seed = 7
"#;

fn ffn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ffn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn kv(path: &Path, key: &str) -> String {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing"))
        .to_string()
}

fn synth(dir: &TempDir) -> (String, String) {
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    let data = dir.path().join("data");
    let out = ffn(&["synth", "--config", cfg.to_str().unwrap(), "--out", data.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    (cfg.to_str().unwrap().to_string(), data.to_str().unwrap().to_string())
}

#[test]
fn synth_writes_both_splits() {
    let dir = TempDir::new().unwrap();
    let (_, data) = synth(&dir);
    let data = Path::new(&data);
    for w in ["train/world_000", "train/world_001", "eval/world_000"] {
        for f in ["image.raw", "image.raw.hdr", "labels.raw", "labels.raw.hdr", "skeletons.txt"] {
            assert!(data.join(w).join(f).is_file(), "{w}/{f}");
        }
    }
    assert!(!data.join("train/world_002").exists());
    assert!(data.join("config.toml").is_file());
}

#[test]
fn oracle_round_trip_is_perfect() {
    let dir = TempDir::new().unwrap();
    let (_, data) = synth(&dir);
    let world = Path::new(&data).join("eval/world_000");
    let seg = dir.path().join("seg");
    let out = ffn(&[
        "infer",
        "--image",
        world.join("image.raw").to_str().unwrap(),
        "--oracle",
        world.join("labels.raw").to_str().unwrap(),
        "--out",
        seg.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(seg.join("run.log").is_file());
    let report = dir.path().join("report.txt");
    let out = ffn(&[
        "eval",
        "--segmentation",
        seg.join("segmentation.raw").to_str().unwrap(),
        "--skeletons",
        world.join("skeletons.txt").to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(kv(&report, "edge_accuracy"), "100.0000");
    assert_eq!(kv(&report, "merged"), "0");
}

#[test]
fn eval_perfect_fixture() {
    let dir = TempDir::new().unwrap();
    let labels = dir.path().join("labels.raw");
    // Two parallel rods along x, labelled 1 and 2, on a 6x4x1 grid.
    let payload: Vec<u8> = (0..24u32)
        .map(|i| match i / 6 {
            1 => 1u32,
            2 => 2,
            _ => 0,
        })
        .flat_map(u32::to_le_bytes)
        .collect();
    fs::write(&labels, payload).unwrap();
    fs::write(
        dir.path().join("labels.raw.hdr"),
        "ffn-volume 1\ndims 6 4 1\ndtype u32\norder x-fastest\nrange labels\n",
    )
    .unwrap();
    let skel = dir.path().join("skeletons.txt");
    fs::write(
        &skel,
        "skeleton 1\nnode 0 0 1 0\nnode 1 3 1 0\nnode 2 5 1 0\nedge 0 1\nedge 1 2\nend\n\
         skeleton 2\nnode 0 0 2 0\nnode 1 5 2 0\nedge 0 1\nend\n",
    )
    .unwrap();
    let report = dir.path().join("report.txt");
    let out = ffn(&[
        "eval",
        "--segmentation",
        labels.to_str().unwrap(),
        "--skeletons",
        skel.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(kv(&report, "total_edges"), "3");
    assert_eq!(kv(&report, "edge_accuracy"), "100.0000");
    for key in ["merged_pct", "split_pct", "omitted_adjusted_pct", "omitted_raw_pct"] {
        assert_eq!(kv(&report, key), "0.0000", "{key}");
    }
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("100.0%"), "{table}");
}

#[test]
fn inconsistent_example_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[training]\nfov = [17, 17, 9]\ndelta = [4, 4, 2]\nexample = [25, 25, 12]\n").unwrap();
    let out_dir = dir.path().join("run");
    let out = ffn(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        dir.path().join("nowhere").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("example"));
    assert!(!out_dir.exists());
}

#[test]
fn bad_flags_are_config_errors() {
    let out = ffn(&["seeds", "--image", "x.raw", "--t-move", "0.3"]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("t_move"));
    let out = ffn(&["seeds", "--image", "x.raw", "--fov", "17,17"]);
    assert_eq!(code(&out), 2);
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("typo.toml");
    fs::write(&cfg, "[seeds]\nsobel_threshold = 0.1\n[training]\nchanels = 4\n").unwrap();
    let out = ffn(&["seeds", "--image", "x.raw", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("chanels"), "{}", stderr(&out));
}

#[test]
fn missing_and_malformed_inputs() {
    let dir = TempDir::new().unwrap();
    let img = dir.path().join("missing.raw");
    let out = ffn(&["seeds", "--image", img.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("missing.raw"));

    let img = dir.path().join("short.raw");
    fs::write(&img, [0u8; 7]).unwrap();
    fs::write(
        dir.path().join("short.raw.hdr"),
        "ffn-volume 1\ndims 2 2 2\ndtype u8\norder x-fastest\nrange byte\n",
    )
    .unwrap();
    let out = ffn(&["seeds", "--image", img.to_str().unwrap()]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn seeds_lists_points() {
    let dir = TempDir::new().unwrap();
    let (cfg, data) = synth(&dir);
    let img = Path::new(&data).join("train/world_000/image.raw");
    let out = ffn(&["seeds", "--config", &cfg, "--image", img.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 2);
    for line in text.lines() {
        assert_eq!(line.split_whitespace().count(), 4, "{line}");
    }
}

#[test]
fn printed_config_reproduces_outputs() {
    let dir = TempDir::new().unwrap();
    let (cfg, data) = synth(&dir);
    let printed = Path::new(&data).join("config.toml");
    let again = dir.path().join("again");
    let out = ffn(&["synth", "--config", printed.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["train/world_001/image.raw", "eval/world_000/labels.raw", "eval/world_000/skeletons.txt", "config.toml"] {
        assert_eq!(fs::read(Path::new(&data).join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
    // Every command echoes the resolved config.
    let out = ffn(&["seeds", "--config", &cfg, "--image", "nope.raw"]);
    assert!(stderr(&out).contains("[training]"));
    assert!(stderr(&out).contains("example = [49, 49, 25]"));
}

#[test]
fn tiny_training_run_then_infer() {
    let dir = TempDir::new().unwrap();
    let (cfg, data) = synth(&dir);
    let mut text = fs::read_to_string(&cfg).unwrap();
    text.push_str(
        "\n[training]\nfov = [9, 9, 5]\ndelta = [2, 2, 1]\nchannels = 4\nmodules = 1\n\
         max_steps = 12\ncheckpoint_interval = 5\nlearning_rate = 0.00001\n",
    );
    fs::write(&cfg, text).unwrap();
    let run = dir.path().join("run");
    let out = ffn(&["train", "--config", &cfg, "--data", &data, "--out", run.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["checkpoint_000005.ffn", "checkpoint_000010.ffn", "checkpoint_000012.ffn", "best.ffn", "config.toml"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let metrics = fs::read_to_string(run.join("metrics.log")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    assert!(metrics.starts_with("step=5 "));

    let world = Path::new(&data).join("eval/world_000");
    let seg = dir.path().join("seg");
    let args = |ckpt: &Path| {
        vec![
            "infer".to_string(),
            "--config".into(),
            cfg.clone(),
            "--image".into(),
            world.join("image.raw").to_str().unwrap().into(),
            "--checkpoint".into(),
            ckpt.to_str().unwrap().into(),
            "--out".into(),
            seg.to_str().unwrap().into(),
        ]
    };
    let a = args(&run.join("best.ffn"));
    let out = ffn(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(seg.join("segmentation.raw").is_file());

    // A checkpoint used with a config of a different FoV is refused.
    let out = ffn(&[
        "infer",
        "--image",
        world.join("image.raw").to_str().unwrap(),
        "--checkpoint",
        run.join("best.ffn").to_str().unwrap(),
        "--out",
        seg.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}
