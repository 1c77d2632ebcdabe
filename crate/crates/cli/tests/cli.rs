//! End-to-end runs of the `wus` binary on a tiny synthetic corpus.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;
use wus_core::corpus::{write_synthetic_sources, SourceConfig};
use wus_core::models::io as model_io;

struct Sources {
    _dir: TempDir,
    noise: PathBuf,
    speech: PathBuf,
}

fn sources() -> &'static Sources {
    static S: OnceLock<Sources> = OnceLock::new();
    S.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let noise = dir.path().join("noise");
        let speech = dir.path().join("speech");
        let cfg = SourceConfig { utterances_per_phrase: 5, noise_secs: 12.0, noise_variants: 1, seed: 7 };
        write_synthetic_sources(&noise, &speech, &cfg).unwrap();
        Sources { _dir: dir, noise, speech }
    })
}

const TINY: &str = r#"
seed = 11
jobs = 2

[corpus]
train_count = 24
val_count = 8
test_count = 16
min_noise_secs = 10.0

[train]
max_epochs = 2
patience = 2
batch_size = 8
"#;

/// A work directory with the tiny config written into it.
fn workspace() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let s = sources();
    let cfg = format!(
        "{TINY}\n[paths]\nnoise_dir = {:?}\nspeech_dir = {:?}\nwork_dir = {:?}\n",
        s.noise,
        s.speech,
        dir.path().join("work")
    );
    let path = dir.path().join("run.toml");
    std::fs::write(&path, cfg).unwrap();
    (dir, path)
}

fn wus(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wus"))
        .arg("--config")
        .arg(config)
        .args(args)
        .env_remove("WUS_WORK_DIR")
        .output()
        .unwrap()
}

fn ok(config: &Path, args: &[&str]) -> String {
    let out = wus(config, args);
    assert!(out.status.success(), "wus {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(config: &Path, args: &[&str]) -> i32 {
    wus(config, args).status.code().unwrap()
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn synth_writes_identical_manifests_for_one_seed() {
    let (a, ca) = workspace();
    let (b, cb) = workspace();
    ok(&ca, &["synth"]);
    ok(&cb, &["synth"]);
    for f in ["train.csv", "val.csv", "test.csv", "summary.json"] {
        let pa = a.path().join("work/manifests").join(f);
        assert_eq!(read(&pa), read(b.path().join("work/manifests").join(f)), "{f}");
    }
    let (c, cc) = workspace();
    ok(&cc, &["synth", "--seed", "12"]);
    assert_ne!(read(a.path().join("work/manifests/train.csv")), read(c.path().join("work/manifests/train.csv")));
}

#[test]
fn exit_codes_separate_usage_from_data() {
    let (dir, cfg) = workspace();
    assert_eq!(code(&cfg, &["synth", "--noise-dir", dir.path().join("absent").to_str().unwrap()]), 3);
    assert_eq!(code(&cfg, &["train", "--kind", "lstm"]), 2);
    assert_eq!(code(&cfg, &["train", "--level", "3"]), 2);
    assert_eq!(code(&cfg, &["synth", "--no-such-flag"]), 2);
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "sede = 1\n").unwrap();
    assert_eq!(code(&bad, &["synth"]), 2);
    // no seed anywhere
    std::fs::write(&bad, "[model]\nkind = \"gru\"\n").unwrap();
    assert_eq!(code(&bad, &["synth"]), 2);
}

#[test]
fn env_var_overrides_file_and_flag_overrides_env() {
    let (dir, cfg) = workspace();
    let env_dir = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_wus"))
        .args(["--config", cfg.to_str().unwrap(), "config"])
        .env("WUS_WORK_DIR", &env_dir)
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&out.stdout).contains(env_dir.to_str().unwrap()));
    let flag_dir = dir.path().join("from-flag");
    let out = Command::new(env!("CARGO_BIN_EXE_wus"))
        .args(["--config", cfg.to_str().unwrap(), "config", "--work-dir", flag_dir.to_str().unwrap()])
        .env("WUS_WORK_DIR", &env_dir)
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains(flag_dir.to_str().unwrap()) && !text.contains(env_dir.to_str().unwrap()));
}

#[test]
fn levels_train_in_order_and_export_needs_level_two() {
    let (dir, cfg) = workspace();
    let work = dir.path().join("work");
    ok(&cfg, &["synth"]);
    let mgu = ["--kind", "mgu"];
    fn with<'a>(mgu: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
        mgu.iter().chain(extra).copied().collect()
    }
    assert_eq!(code(&cfg, &with(&mgu, &["train", "--level", "1"])), 3, "level 1 before level 0");
    ok(&cfg, &with(&mgu, &["train"]));
    assert_eq!(code(&cfg, &with(&mgu, &["train", "--level", "2"])), 3, "level 2 before level 1");
    let l0 = work.join("checkpoints/mgu16-max_pool-L0.wusm");
    assert_eq!(code(&cfg, &with(&mgu, &["export", "--checkpoint", l0.to_str().unwrap()])), 3);
    ok(&cfg, &with(&mgu, &["quantize"]));
    ok(&cfg, &with(&mgu, &["quantize", "--level", "2"]));
    let l1 = model_io::load(&work.join("checkpoints/mgu16-max_pool-k4-L1.wusm")).unwrap();
    let l2 = model_io::load(&work.join("checkpoints/mgu16-max_pool-k4-L2.wusm")).unwrap();
    assert_eq!((l1.quant.level, l2.quant.level), (1, 2));
    assert_eq!(l1.matrices, l2.matrices);
    assert_eq!(l1.effective(), l2.effective());
    let msg = ok(&cfg, &with(&mgu, &["export"]));
    assert!(msg.contains("536 bytes") && msg.contains("0.52 kB"), "{msg}");
    let fp: serde_json::Value =
        serde_json::from_slice(&read(work.join("exports/mgu16-max_pool-k4-L2.wusw.footprint.json"))).unwrap();
    assert_eq!(fp["payload_bytes"], 536);
    assert!(work.join("exports/mgu16-max_pool-k4-L2.wusw").is_file());
    assert!(work.join("exports/mgu16-max_pool-k4-L2.wusw.hex").is_file());
}

#[test]
fn tanh_export_is_272_bytes() {
    let (_dir, cfg) = workspace();
    ok(&cfg, &["synth"]);
    for args in [&["train"][..], &["quantize"], &["quantize", "--level", "2"]] {
        let mut a = vec!["--kind", "tanh", "--max-epochs", "1"];
        a.extend_from_slice(args);
        ok(&cfg, &a);
    }
    let msg = ok(&cfg, &["--kind", "tanh", "export"]);
    assert!(msg.contains("544 weights") && msg.contains("272 bytes"), "{msg}");
}

#[test]
fn eval_reports_are_reproducible_and_complete() {
    let (dir, cfg) = workspace();
    let work = dir.path().join("work");
    ok(&cfg, &["synth"]);
    ok(&cfg, &["train"]);
    ok(&cfg, &["eval"]);
    let stem = work.join("reports/gru16-max_pool-L0");
    let suffixes = [".json", ".curve.csv", ".breakdown.csv", ".latency.csv"];
    let first: Vec<Vec<u8>> = suffixes.iter().map(|s| read(format!("{}{s}", stem.display()))).collect();
    ok(&cfg, &["eval"]);
    for (s, bytes) in suffixes.iter().zip(&first) {
        assert_eq!(&read(format!("{}{s}", stem.display())), bytes, "{s}");
    }
    let curve = String::from_utf8(first[1].clone()).unwrap();
    assert_eq!(curve.lines().count(), 513, "header plus 512 grid points");
    let breakdown = String::from_utf8(first[2].clone()).unwrap();
    assert!(breakdown.lines().last().unwrap().starts_with("Overall"));

    let empty = dir.path().join("empty.csv");
    let header = String::from_utf8(read(work.join("manifests/test.csv"))).unwrap();
    std::fs::write(&empty, format!("{}\n", header.lines().next().unwrap())).unwrap();
    assert_eq!(code(&cfg, &["eval", "--manifest", empty.to_str().unwrap()]), 3);

    // a checkpoint built for a different feature dimension
    let gru = work.join("checkpoints/gru16-max_pool-L0.wusm");
    let mut p = model_io::load(&gru).unwrap();
    p.input_dim += 1;
    for m in &mut p.matrices {
        if m.latent.cols == 17 {
            m.latent = wus_core::models::Matrix::zeros(m.latent.rows, 18);
        }
    }
    let odd = dir.path().join("odd.wusm");
    model_io::save(&p, &odd).unwrap();
    assert_eq!(code(&cfg, &["eval", "--checkpoint", odd.to_str().unwrap()]), 3);
}

#[test]
fn sweep_writes_one_curve_per_width() {
    let (dir, cfg) = workspace();
    let work = dir.path().join("work");
    ok(&cfg, &["synth"]);
    ok(&cfg, &["--kind", "mgu", "train"]);
    ok(&cfg, &["--kind", "mgu", "--max-epochs", "1", "sweep", "--widths", "3,4,5,6"]);
    let sweep = work.join("reports/sweep");
    assert!(sweep.join("mgu16-max_pool-float.curve.csv").is_file());
    for k in 3..=6 {
        assert!(sweep.join(format!("mgu16-max_pool-k{k}.curve.csv")).is_file(), "k={k}");
    }
    let summary = String::from_utf8(read(sweep.join("summary.csv"))).unwrap();
    assert_eq!(summary.lines().count(), 6);
}
