//! CI smoke suite: every registered experiment runs end to end on a small
//! budget, the CLI contract (exit codes, list output) holds, and reruns are
//! byte-identical.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hmlab")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hmlab-smoke-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn list_prints_the_full_registry() {
    let out = Command::new(bin()).arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "lattice-audit",
        "wos-validate",
        "green-check",
        "pole-swap",
        "bourgain",
        "bharnack",
        "ainfty",
        "bad-cubes",
        "key-lemma",
        "corona",
        "packing",
        "riesz-norm",
        "full-pipeline",
    ] {
        assert!(text.contains(name), "registry is missing {name}");
    }
    // stable across invocations
    let again = Command::new(bin()).arg("list").output().unwrap();
    assert_eq!(text, String::from_utf8(again.stdout).unwrap());
}

#[test]
fn every_registered_experiment_runs_on_a_small_budget() {
    let dir = temp_dir("all");
    // (experiment, extra config body) — budgets chosen for CI speed
    let cases: Vec<(&str, String)> = hmlab_cli::experiments::registry()
        .iter()
        .map(|(name, _)| {
            let extra = match *name {
                "corona" | "packing" => {
                    "[measure]\nkind = \"segment-plus-cluster\"\natoms = 300\ncluster_atoms = 60\n[stopping]\ntau = 0.35\n"
                        .to_string()
                }
                "bourgain" => "n_poles = 4\n[measure]\nkind = \"square-boundary\"\natoms = 400\n".to_string(),
                "riesz-norm" => "norm_sizes = [50, 100]\n".to_string(),
                "lattice-audit" => "[measure]\nkind = \"segment\"\natoms = 200\n".to_string(),
                _ => String::new(),
            };
            (*name, extra)
        })
        .collect();
    for (name, extra) in cases {
        let cfg = write_config(
            &dir,
            &format!("{name}.toml"),
            &format!("experiment = \"{name}\"\nseed = 3\nwalks = 4000\n{extra}"),
        );
        let out = Command::new(bin())
            .args(["run", "--config", cfg.to_str().unwrap(), "--out"])
            .arg(dir.join(name))
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{name} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let summary = dir.join(name).join(format!("{name}-summary.json"));
        assert!(summary.exists(), "{name} wrote no summary");
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
        assert!(parsed.is_object());
    }
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn config_errors_exit_with_code_3() {
    let dir = temp_dir("badcfg");
    // out-of-range eta per the validation rules
    let cfg = write_config(
        &dir,
        "bad.toml",
        "experiment = \"corona\"\n[stopping]\neta = 0.5\n",
    );
    let out = Command::new(bin())
        .args(["run", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));

    // unknown key
    let cfg2 = write_config(&dir, "bad2.toml", "experiment = \"corona\"\nnope = 1\n");
    let out2 = Command::new(bin())
        .args(["run", "--config", cfg2.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out2.status.code(), Some(3));

    // missing file
    let out3 = Command::new(bin())
        .args(["run", "--config", dir.join("absent.toml").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out3.status.code(), Some(3));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn precondition_failures_exit_with_code_2() {
    let dir = temp_dir("precond");
    // poles on top of the boundary ball violate the admissibility check
    let cfg = write_config(
        &dir,
        "swap.toml",
        "experiment = \"pole-swap\"\nseed = 1\nwalks = 500\npole = [0.95, 0.0]\n",
    );
    let out = Command::new(bin())
        .args(["run", "--config", cfg.to_str().unwrap(), "--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    // no partial outputs
    assert!(!dir.join("out").join("pole-swap-summary.json").exists());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn seed_override_changes_reports_and_reruns_are_identical() {
    let dir = temp_dir("seeds");
    let cfg = write_config(
        &dir,
        "w.toml",
        "experiment = \"wos-validate\"\nseed = 1\nwalks = 2000\n",
    );
    let run = |out: &Path, seed: &str| {
        let st = Command::new(bin())
            .args(["run", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out"])
            .arg(out)
            .output()
            .unwrap();
        assert!(st.status.success());
        std::fs::read(out.join("wos-validate-summary.json")).unwrap()
    };
    let a = run(&dir.join("a"), "5");
    let b = run(&dir.join("b"), "5");
    let c = run(&dir.join("c"), "6");
    assert_eq!(a, b, "same seed must give byte-identical reports");
    assert_ne!(a, c, "different seeds must differ");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn bundled_configs_parse_and_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) == Some("toml") {
            hmlab_cli::config::ExperimentConfig::load(path.to_str().unwrap())
                .unwrap_or_else(|e| panic!("{path:?}: {e}"));
            count += 1;
        }
    }
    assert_eq!(count, 13, "one bundled config per registered experiment");
}

#[test]
fn thread_cap_env_is_validated() {
    let dir = temp_dir("threads");
    let cfg = write_config(
        &dir,
        "w.toml",
        "experiment = \"wos-validate\"\nseed = 1\nwalks = 100\n",
    );
    let ok = Command::new(bin())
        .env("HMLAB_THREADS", "4")
        .args(["run", "--config", cfg.to_str().unwrap(), "--out"])
        .arg(dir.join("ok"))
        .output()
        .unwrap();
    assert!(ok.status.success());
    let bad = Command::new(bin())
        .env("HMLAB_THREADS", "zero")
        .args(["run", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(3));
    let _ = std::fs::remove_dir_all(&dir);
}
