//! End-to-end CLI checks: synth -> train -> eval -> compare -> grid-mute on
//! a miniature configuration, exercising the on-disk formats and exit codes.

use std::fs;
use std::path::Path;
use std::process::Command;

fn avoss() -> Command {
    Command::new(env!("CARGO_BIN_EXE_avoss"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let config = serde_json::json!({
        "model": {
            "window_len": 64,
            "hop": 32,
            "d_in": 16,
            "d_v": 8,
            "d_a": 8,
            "d_av": 16,
            "num_blocks": 1,
            "tcn_layers_per_block": 2,
            "tcn_channels": 16,
            "use_attention": true,
            "lip_dim": 8,
        },
        "mix": {
            "window_s": 0.5,
            "off_duration_range_s": [0.2, 0.4],
            "seed": 7,
        },
        "train": {
            "epochs_max": 2,
            "batch_size": 4,
            "seed": 7,
        },
        "data": {
            "dir": "data",
            "split_sizes": [6, 3, 3],
            "speakers_per_split": 8,
            "noises_per_split": 4,
        },
        "run_dir": "runs/proposed",
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn full_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let workdir = dir.path();
    write_config(workdir);

    // synth
    let out = avoss()
        .args(["--workdir"])
        .arg(workdir)
        .args(["synth", "--config", "config.json"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "synth failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for split in ["train", "val", "test"] {
        assert!(workdir.join("data").join(split).join("index.json").exists());
    }

    // Disjoint speaker pools across splits.
    let read_speakers = |split: &str| -> Vec<String> {
        let text =
            fs::read_to_string(workdir.join("data").join(split).join("index.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["samples"]
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|s| {
                [
                    s["on_speaker"].as_str().unwrap().to_string(),
                    s["off_speaker"].as_str().unwrap().to_string(),
                ]
            })
            .collect()
    };
    let train_speakers = read_speakers("train");
    let test_speakers = read_speakers("test");
    for s in &test_speakers {
        assert!(
            !train_speakers.contains(s),
            "speaker {s} appears in both train and test"
        );
    }

    // train: proposed + the two baseline halves
    for (extra, run_dir) in [
        (vec![], "runs/proposed"),
        (vec!["--baseline", "visual", "--run-dir", "runs/visual"], "runs/visual"),
        (
            vec!["--baseline", "voiceprint", "--run-dir", "runs/voiceprint"],
            "runs/voiceprint",
        ),
    ] {
        let mut cmd = avoss();
        cmd.args(["--workdir"])
            .arg(workdir)
            .args(["train", "--config", "config.json"])
            .args(&extra);
        let out = cmd.output().unwrap();
        assert!(
            out.status.success(),
            "train {extra:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let rd = workdir.join(run_dir);
        assert!(rd.join("best.ckpt").exists());
        assert!(rd.join("metrics.csv").exists());
        assert!(rd.join("report.json").exists());
        assert!(rd.join("config.json").exists());
    }

    // eval with JSON output
    let out = avoss()
        .args(["--workdir"])
        .arg(workdir)
        .args(["eval", "--run", "runs/proposed", "--split", "test", "--json"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "eval failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("eval --json must emit valid JSON");
    assert_eq!(report["n"], 3);
    assert!(report["mean_si_sdri_db"].is_number());
    assert!(report["per_condition"]["noise"]["n"].is_number());
    assert!(workdir.join("runs/proposed/eval_test.json").exists());

    // eval table form
    let out = avoss()
        .args(["--workdir"])
        .arg(workdir)
        .args(["eval", "--run", "runs/proposed", "--split", "test"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("SI-SDRi"));
    assert!(table.contains("#Params"));

    // compare
    let out = avoss()
        .args(["--workdir"])
        .arg(workdir)
        .args([
            "compare",
            "--proposed",
            "runs/proposed",
            "--visual",
            "runs/visual",
            "--voiceprint",
            "runs/voiceprint",
            "--data",
            "data",
            "--split",
            "test",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "compare failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("baseline (mix outputs)"));
    assert!(table.contains("proposed"));
    assert!(workdir.join("runs/proposed/compare_test.json").exists());

    // grid-mute over a small grid with one invalid cell
    let out = avoss()
        .args(["--workdir"])
        .arg(workdir)
        .args([
            "grid-mute",
            "--config",
            "config.json",
            "--p-on",
            "0,0.8",
            "--p-off",
            "0,0.8",
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "grid-mute failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(workdir.join("runs/proposed/grid_mute.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5, "header + 4 cells");
    assert!(csv.contains("invalid"));
}

#[test]
fn synth_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let workdir = dir.path();
    write_config(workdir);
    let run = |out: &str| {
        let status = avoss()
            .args(["--workdir"])
            .arg(workdir)
            .args(["synth", "--config", "config.json", "--out", out])
            .status()
            .unwrap();
        assert!(status.success());
    };
    run("data_a");
    run("data_b");
    for split in ["train", "val", "test"] {
        let a = fs::read(workdir.join("data_a").join(split).join("index.json")).unwrap();
        let b = fs::read(workdir.join("data_b").join(split).join("index.json")).unwrap();
        assert_eq!(a, b, "{split} index differs");
    }
    let a = fs::read(workdir.join("data_a/train/samples/000000/mix.wav")).unwrap();
    let b = fs::read(workdir.join("data_b/train/samples/000000/mix.wav")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exit_codes_match_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let workdir = dir.path();

    // 2: config error (unknown key).
    fs::write(workdir.join("bad.json"), r#"{"bogus_key": 1}"#).unwrap();
    let out = avoss()
        .args(["--workdir"])
        .arg(workdir)
        .args(["synth", "--config", "bad.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // 2: missing config file.
    let out = avoss()
        .args(["--workdir"])
        .arg(workdir)
        .args(["train", "--config", "nope.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // 3: data error (missing checkpoint).
    fs::create_dir_all(workdir.join("empty_run")).unwrap();
    let out = avoss()
        .args(["--workdir"])
        .arg(workdir)
        .args(["eval", "--run", "empty_run"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("best.ckpt"));
}
