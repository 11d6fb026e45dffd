use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn deltagate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deltagate")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = deltagate(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn code(args: &[&str]) -> i32 {
    deltagate(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small dataset: 5 subjects x 12 samples of 4 x 64.
fn small_data(dir: &Path) -> PathBuf {
    let path = dir.join("small.eegd");
    ok(&["gen-data", "--out", s(&path), "--subjects", "5", "--samples-per-subject", "12", "--channels", "4", "--timesteps", "64"]);
    path
}

const TINY_MODEL: [&str; 8] = ["--depth", "2", "--mlp-hidden", "16", "--epochs", "2", "--batch-size", "16"];

#[test]
fn gen_data_presets_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.eegd");
    let b = dir.path().join("b.eegd");
    let line = ok(&["gen-data", "--preset", "seedvig-like", "--out", s(&a), "--subjects", "2", "--samples-per-subject", "3"]);
    assert!(line.contains("6 samples") && line.contains("17 channels x 1600 timesteps") && line.contains("3 classes") && line.contains("200 Hz"), "{line}");
    ok(&["gen-data", "--preset", "seedvig-like", "--out", s(&b), "--subjects", "2", "--samples-per-subject", "3"]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let meta: Value = serde_json::from_slice(&fs::read(dir.path().join("a.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["preset"], "seedvig-like");
    assert_eq!(meta["spec"]["n_channels"], 17);

    let c = dir.path().join("c.eegd");
    let line = ok(&["gen-data", "--preset", "sadt-like", "--out", s(&c), "--subjects", "2", "--samples-per-subject", "2"]);
    assert!(line.contains("30 channels x 384 timesteps") && line.contains("2 classes") && line.contains("128 Hz"), "{line}");

    assert_eq!(code(&["gen-data", "--preset", "nope", "--out", s(&c)]), 2);
    let blocked = dir.path().join("file");
    fs::write(&blocked, b"").unwrap();
    assert_eq!(code(&["gen-data", "--out", s(&blocked.join("x.eegd")), "--subjects", "1", "--samples-per-subject", "3"]), 2);
}

#[test]
fn dry_run_prints_plan_and_protocol_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d885.eegd");
    ok(&["gen-data", "--out", s(&data), "--subjects", "1", "--samples-per-subject", "885", "--channels", "2", "--timesteps", "8"]);
    let out = ok(&["train", "--data", s(&data), "--dry-run"]);
    assert!(out.starts_with("epochs=200 batch=32 lr=0.0001 seed=2026 folds=5"), "{out}");
    for i in 0..5 {
        assert!(out.contains(&format!("fold {i}: train 531 val 177 test 177")), "{out}");
    }
    // A single subject cannot be split across subjects.
    assert_eq!(code(&["train", "--data", s(&data), "--dry-run", "--protocol", "inter"]), 2);
}

#[test]
fn usage_and_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&[]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["train", "--data", s(&dir.path().join("missing.eegd")), "--dry-run"]), 2);
    assert_eq!(code(&["train", "--dry-run"]), 2);
    let data = small_data(dir.path());
    assert_eq!(code(&["train", "--data", s(&data), "--dry-run", "--kernel", "4"]), 2);
    assert_eq!(code(&["train", "--data", s(&data), "--dry-run", "--protocol", "sideways"]), 2);
    assert_eq!(code(&["ablate", "--data", s(&data), "--axis", "kernel", "--values", "3,4"]), 2);
    assert_eq!(code(&["ablate", "--data", s(&data), "--axis", "module", "--values", "everything"]), 2);
    assert_eq!(code(&["eval", "--data", s(&data), "--params", s(&dir.path().join("none.dgnw"))]), 2);
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "epochs\n").unwrap();
    assert_eq!(code(&["train", "--data", s(&data), "--dry-run", "--config", s(&cfg)]), 2);
    assert_eq!(code(&["--version"]), 0);
}

#[test]
fn config_file_sits_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# shared settings\nepochs = 9\nbatch_size = 8\nseed = 4\n").unwrap();
    let out = ok(&["train", "--config", s(&cfg), "--data", s(&data), "--dry-run", "--seed", "5"]);
    assert!(out.starts_with("epochs=9 batch=8 lr=0.0001 seed=5 folds=5"), "{out}");
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn train_is_byte_reproducible_and_eval_matches_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let run = dir.path().join("run");
    let mut args = vec!["train", "--data", s(&data), "--out", s(&run), "--protocol", "inter"];
    args.extend(TINY_MODEL);
    ok(&args);
    let first = snapshot(&run);
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names.len(), 11, "{names:?}");
    assert!(names.contains(&"manifest.json") && names.contains(&"fold4.log.jsonl") && names.contains(&"fold4.params.dgnw"));
    ok(&args);
    assert_eq!(snapshot(&run), first);

    let manifest: Value = serde_json::from_slice(&fs::read(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["protocol_line"], "epochs=2 batch=16 lr=0.0001 seed=2026 folds=5");
    assert_eq!(manifest["split"]["protocol"], "inter");
    assert_eq!(manifest["folds"].as_array().unwrap().len(), 5);
    for key in ["acc", "prec", "rec", "f1"] {
        assert!(manifest["summary"][key]["std"].is_number());
    }

    for fold in 0..5 {
        let params = run.join(format!("fold{fold}.params.dgnw"));
        let out = dir.path().join(format!("eval{fold}.json"));
        let fold_s = fold.to_string();
        let printed = ok(&[
            "eval", "--params", s(&params), "--manifest", s(&run.join("manifest.json")), "--fold", &fold_s, "--format", "json",
            "--out", s(&out),
        ]);
        let got: Value = serde_json::from_str(&printed).unwrap();
        assert_eq!(got, manifest["folds"][fold]["test"], "fold {fold}");
        assert_eq!(serde_json::from_slice::<Value>(&fs::read(&out).unwrap()).unwrap(), got);
        let table = ok(&["eval", "--params", s(&params), "--manifest", s(&run.join("manifest.json")), "--fold", &fold_s]);
        let acc = got["acc"].as_f64().unwrap();
        assert!(table.starts_with(&format!("accuracy {acc:.4}\n")), "{table}");
    }

    // Rerunning from the manifest reproduces the run.
    let again = dir.path().join("again");
    ok(&["train", "--from-manifest", s(&run.join("manifest.json")), "--out", s(&again)]);
    assert_eq!(snapshot(&again), first);

    // Parameters from a different architecture do not match the manifest.
    let other = dir.path().join("other");
    let mut args = vec!["train", "--data", s(&data), "--out", s(&other), "--folds", "2", "--kernel", "3"];
    args.extend(TINY_MODEL);
    ok(&args);
    assert_eq!(
        code(&["eval", "--params", s(&other.join("fold0.params.dgnw")), "--manifest", s(&run.join("manifest.json"))]),
        2
    );
    // Without a manifest every sample is evaluated.
    let all: Value = serde_json::from_str(&ok(&["eval", "--data", s(&data), "--params", s(&other.join("fold0.params.dgnw")), "--format", "json"])).unwrap();
    assert!(all["acc"].as_f64().unwrap() >= 0.0);
}

#[test]
fn ablate_module_axis_prints_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let out = dir.path().join("ablate.json");
    let mut args = vec!["ablate", "--data", s(&data), "--axis", "module", "--folds", "2", "--out", s(&out)];
    args.extend(TINY_MODEL);
    let table = ok(&args);
    for v in ["mlp_only", "delta_mlp", "gtc_mlp", "full"] {
        assert!(table.lines().any(|l| l.starts_with(v)), "{table}");
    }
    let doc: Value = serde_json::from_slice(&fs::read(&out).unwrap()).unwrap();
    assert_eq!(doc["axis"], "module");
    assert_eq!(doc["cells"].as_array().unwrap().len(), 4);

    let mut args = vec!["ablate", "--data", s(&data), "--axis", "step", "--values", "1,2,3", "--folds", "2"];
    args.extend(TINY_MODEL);
    assert_eq!(ok(&args).lines().filter(|l| l.contains(" | ")).count(), 4);
}

#[test]
fn selfcheck_passes_and_catches_the_gelu_mutant() {
    let o = deltagate(&["selfcheck"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.contains("pass grad gelu") && text.contains("pass grad tiny model end-to-end"), "{text}");
    assert!(text.contains(", 0 failed"));

    let o = deltagate(&["selfcheck", "--mutate", "gelu-constant"]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(1), "{text}");
    assert!(text.contains("FAIL grad gelu"), "{text}");
    assert!(text.contains(", 1 failed"));
}
