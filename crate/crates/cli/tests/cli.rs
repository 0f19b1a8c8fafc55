//! End-to-end runs of the `pdae` subcommands on a tiny configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use pdae_cli::checkpoint::Checkpoint;
use pdae_cli::commands::cmd_train;
use pdae_cli::config::{load_config, Scale};
use pdae_cli::data::{read_dataset, read_matrix_csv};
use tempfile::TempDir;

const TINY: &str = r#"
[data]
n_per_domain = 64
n_test = 48

[model]
hidden = [8]

[train]
batch_size = 32
epochs = 3

[experiment]
seeds = [3]
"#;

fn write_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("tiny.toml");
    fs::write(&path, format!("{TINY}{extra}")).unwrap();
    path
}

fn pdae(args: &[&str]) -> i32 {
    let mut full = vec!["pdae"];
    full.extend_from_slice(args);
    pdae_cli::run(full)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generates the tiny dataset and trains on it; returns (data dir, checkpoint).
fn trained(tmp: &TempDir) -> (PathBuf, PathBuf) {
    let cfg = write_config(tmp.path(), "");
    let data = tmp.path().join("data");
    let ckpt = tmp.path().join("model.json");
    assert_eq!(pdae(&["generate", "--config", s(&cfg), "--quiet", "--out", s(&data)]), 0);
    assert_eq!(
        pdae(&["train", "--config", s(&cfg), "--quiet", "--data", s(&data), "--out", s(&ckpt)]),
        0
    );
    (data, ckpt)
}

#[test]
fn generate_writes_every_domain_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(pdae(&["generate", "--config", s(&cfg), "--quiet", "--out", s(out)]), 0);
    }
    let mut names = vec!["labels.json".to_string()];
    names.extend((0..4).map(|e| format!("domain_{e}.csv")));
    for name in &names {
        let first = fs::read(a.join(name)).unwrap();
        assert_eq!(first, fs::read(b.join(name)).unwrap(), "{name} differs between runs");
    }
    assert!(a.join("manifest.json").exists());

    let domains = read_dataset(&a).unwrap();
    assert_eq!(domains.len(), 4);
    assert!(domains.iter().all(|d| d.len() == 64 && d.x.cols() == 2));

    let other = tmp.path().join("c");
    assert_eq!(pdae(&["generate", "--config", s(&cfg), "--seed", "4", "--quiet", "--out", s(&other)]), 0);
    assert_ne!(fs::read(a.join("domain_1.csv")).unwrap(), fs::read(other.join("domain_1.csv")).unwrap());
}

#[test]
fn appended_noise_dimensions_widen_the_observations() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "");
    let text = fs::read_to_string(&cfg).unwrap().replace("n_test = 48", "n_test = 48\nnoise_dims = 8\nnoise_std = 0.5");
    fs::write(&cfg, text).unwrap();
    let out = tmp.path().join("noisy");
    assert_eq!(pdae(&["generate", "--config", s(&cfg), "--quiet", "--out", s(&out)]), 0);
    let (header, _) = read_matrix_csv(&out.join("domain_0.csv")).unwrap();
    assert_eq!(header.iter().filter(|h| h.starts_with('x')).count(), 10);
    assert!(read_dataset(&out).unwrap().iter().all(|d| d.x.cols() == 10));
}

#[test]
fn checkpoints_round_trip_exactly() {
    let tmp = TempDir::new().unwrap();
    let (data, ckpt) = trained(&tmp);
    let loaded = Checkpoint::load(&ckpt).unwrap();
    assert_eq!(loaded.history.len(), 3);

    // the in-memory model and the reloaded one agree bit for bit
    let cfg = load_config(Some(&write_config(tmp.path(), "")), Scale::Desk, None).unwrap();
    let fresh = cmd_train(&cfg, &data, &tmp.path().join("again.json"), true).unwrap();
    assert_eq!(fresh.model().unwrap(), loaded.model().unwrap());
    assert_eq!(fresh.history(), loaded.history());
    assert_eq!(fs::read(&ckpt).unwrap(), fs::read(tmp.path().join("again.json")).unwrap());

    let resaved = tmp.path().join("resaved.json");
    loaded.save(&resaved).unwrap();
    assert_eq!(Checkpoint::load(&resaved).unwrap(), loaded);
}

#[test]
fn training_without_a_label_index_names_the_file() {
    let tmp = TempDir::new().unwrap();
    let (data, _) = trained(&tmp);
    fs::remove_file(data.join("labels.json")).unwrap();
    let err = read_dataset(&data).unwrap_err();
    assert!(err.to_string().contains("labels.json"), "{err}");
    let cfg = write_config(tmp.path(), "");
    let code = pdae(&["train", "--config", s(&cfg), "--quiet", "--data", s(&data), "--out", s(&tmp.path().join("m.json"))]);
    assert_eq!(code, 3);
}

#[test]
fn predict_honours_weights_size_and_seed() {
    let tmp = TempDir::new().unwrap();
    let (data, ckpt) = trained(&tmp);
    let out = |name: &str| tmp.path().join(name);
    let run = |weights: &str, seed: &str, file: &Path| {
        pdae(&[
            "predict", "--checkpoint", s(&ckpt), "--data", s(&data), "--label", "-0.5,1,0.25",
            "--weights", weights, "--samples", "100", "--seed", seed, "--out", s(file),
        ])
    };
    assert_eq!(run("uniform", "1", &out("p1.csv")), 0);
    assert_eq!(run("uniform", "1", &out("p2.csv")), 0);
    assert_eq!(run("uniform", "2", &out("p3.csv")), 0);
    assert_eq!(fs::read(out("p1.csv")).unwrap(), fs::read(out("p2.csv")).unwrap());
    assert_ne!(fs::read(out("p1.csv")).unwrap(), fs::read(out("p3.csv")).unwrap());
    let (header, m) = read_matrix_csv(&out("p1.csv")).unwrap();
    assert_eq!(header, ["x1", "x2"]);
    assert_eq!(m.rows(), 100);

    // control-only and its explicit one-hot spelling draw the same sample
    assert_eq!(run("control", "5", &out("c1.csv")), 0);
    assert_eq!(run("1,0,0,0", "5", &out("c2.csv")), 0);
    assert_eq!(fs::read(out("c1.csv")).unwrap(), fs::read(out("c2.csv")).unwrap());

    assert_eq!(run("0.5,0.5", "1", &out("bad.csv")), 1);
    assert_eq!(run("0,0,0,0", "1", &out("bad.csv")), 1);
    assert_eq!(run("a,b,c,d", "1", &out("bad.csv")), 1);
    assert!(!out("bad.csv").exists());
}

#[test]
fn evaluate_writes_rows_and_summary() {
    let tmp = TempDir::new().unwrap();
    let (data, ckpt) = trained(&tmp);
    let cfg = write_config(tmp.path(), "");
    let out = tmp.path().join("eval");
    let code = pdae(&[
        "evaluate", "--config", s(&cfg), "--quiet", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&out),
    ]);
    assert_eq!(code, 0);
    let rows = fs::read_to_string(out.join("rows.csv")).unwrap();
    // header plus 5 methods on 21 cases
    assert_eq!(rows.lines().count(), 1 + 5 * 21);
    assert!(out.join("summary.csv").exists() && out.join("manifest.json").exists());
}

#[test]
fn unknown_config_keys_are_rejected_by_name() {
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[train]\nepochz = 3\n").unwrap();
    let err = load_config(Some(&bad), Scale::Desk, None).unwrap_err().to_string();
    assert!(err.contains("epochz"), "{err}");
    assert_eq!(pdae(&["generate", "--config", s(&bad), "--out", s(&tmp.path().join("x"))]), 1);
}

#[test]
fn verify_theory_passes_and_writes_its_table() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("theory");
    assert_eq!(pdae(&["verify-theory", "--out", s(&out)]), 0);
    let table = fs::read_to_string(out.join("theory.csv")).unwrap();
    assert!(table.lines().count() > 1);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_pdae");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code().unwrap();
    assert_eq!(status(&["--help"]), 0);
    assert_eq!(status(&["--version"]), 0);
    assert_eq!(status(&[]), 1);
    assert_eq!(status(&["frobnicate"]), 1);
    assert_eq!(status(&["generate"]), 1);
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.toml");
    assert_eq!(status(&["generate", "--config", s(&missing), "--out", s(tmp.path())]), 3);
}
