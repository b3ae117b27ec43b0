use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn xlbeam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xlbeam"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL: &str = r#"
seed = 7
[array]
num_antennas = 16
[dataset]
samples = 60
[net]
conv_channels = [4, 8]
hidden = [16, 16, 8]
[train]
epochs = 2
batch_size = 16
[experiment]
snr_grid_db = [5.0]
trials = 8
schemes = [{ kind = "original" }, { kind = "improved", k = 2, l = 2 }, { kind = "sweep" }]
"#;

#[test]
fn missing_config_is_a_usage_error() {
    let out = xlbeam(&["gen-dataset"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--config"), "{}", stderr(&out));
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[codebook]\nnum_ringz = 3\n");
    let out = xlbeam(&[
        "export-codebook",
        "--config",
        &cfg,
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("num_ringz"), "{}", stderr(&out));
}

#[test]
fn desk_preset_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[array]\nnum_antennas = 16\n[codebook]\nnum_rings = 2\nwide_factor = 2\n[dataset]\nsamples = 5\n",
    );
    let out_dir = dir.path().join("o");
    let out = xlbeam(&[
        "export-codebook",
        "--config",
        &cfg,
        "--desk-scale",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let resolved = fs::read_to_string(out_dir.join("config.resolved.toml")).unwrap();
    let table: toml::Table = resolved.parse().unwrap();
    assert_eq!(table["array"]["num_antennas"].as_integer(), Some(64));
    assert_eq!(table["codebook"]["num_rings"].as_integer(), Some(5));
    assert_eq!(table["codebook"]["wide_factor"].as_integer(), Some(4));
    assert_eq!(table["dataset"]["samples"].as_integer(), Some(20_000));
    assert!(String::from_utf8_lossy(&out.stdout).contains("polar 320 codewords, wide 16, narrow 64"));
    for f in ["polar.xlcb", "wide.xlcb", "narrow.xlcb"] {
        assert!(out_dir.join(f).exists());
    }
}

#[test]
fn paper_scale_improved_trial_tests_148_beams() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[experiment]\nsnr_grid_db = [10.0]\ntrials = 2\nschemes = [{ kind = \"improved\", k = 10, l = 2 }]\n",
    );
    let out_dir = dir.path().join("o");
    let out = xlbeam(&[
        "run-experiment",
        "--config",
        &cfg,
        "--paper-scale",
        "--heads",
        "uniform",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let trials = fs::read_to_string(out_dir.join("trials.csv")).unwrap();
    let mut lines = trials.lines();
    assert_eq!(lines.next(), Some("scheme,snr_db,trial,G_N,rate,eff_rate,beams,seed"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert_eq!(row.split(',').nth(6), Some("148"), "{row}");
    }
}

#[test]
fn full_pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let o = out_dir.to_str().unwrap();
        for cmd in [
            vec!["gen-dataset", "--config", &cfg, "--out-dir", o],
            vec!["train", "--config", &cfg, "--out-dir", o],
            vec!["eval-heads", "--config", &cfg, "--out-dir", o, "--split", "val"],
            vec!["run-experiment", "--config", &cfg, "--out-dir", o],
            vec!["sweep-baseline", "--config", &cfg, "--out-dir", o],
        ] {
            let out = xlbeam(&cmd);
            assert!(out.status.success(), "{cmd:?}: {}", stderr(&out));
        }
        out_dir
    };
    let (a, b) = (run("a"), run("b"));
    for f in [
        "dataset.xlds",
        "labels.csv",
        "direction.xlnn",
        "distance.xlnn",
        "history.csv",
        "trials.csv",
        "summary.csv",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
    assert!(a.join("baseline").join("summary.csv").exists());
}

#[test]
fn seed_flag_changes_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let gen = |seed: &str, name: &str| {
        let out_dir = dir.path().join(name);
        let out = xlbeam(&[
            "gen-dataset",
            "--config",
            &cfg,
            "--seed",
            seed,
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        fs::read(out_dir.join("dataset.xlds")).unwrap()
    };
    assert_ne!(gen("1", "s1"), gen("2", "s2"));
}

#[test]
fn experiment_without_models_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = xlbeam(&[
        "run-experiment",
        "--config",
        &cfg,
        "--out-dir",
        dir.path().join("empty").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("run `train` first"), "{}", stderr(&out));
}

#[test]
fn shipped_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (name, expected) in [
        ("desk.toml", "polar 320 codewords"),
        ("n512.toml", "polar 2560 codewords"),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = root.join(name);
        let out = xlbeam(&[
            "export-codebook",
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{name}: {}", stderr(&out));
        assert!(String::from_utf8_lossy(&out.stdout).contains(expected), "{name}");
    }
}
