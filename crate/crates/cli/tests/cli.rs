use std::fs;
use std::path::Path;
use std::process::Command;

use mckean_cli::{Experiment, ExperimentConfig};

fn mckean(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_mckean")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

const SMALL_SWEEP: &str = "\
[simulation]
particles = 16
paths = 6
delta_log2 = [-5, -4, -3]

[reference]
delta_log2 = -7

[batch]
betas = [1.0, 0.5]
sizes = [4]
";

#[test]
fn csv_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.toml", SMALL_SWEEP);
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        let (code, _, err) = mckean(&["rbm-sweep", "--config", &cfg, "--threads", threads, "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
        outputs.push(fs::read(out.join("rbm_sweep.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn converge_csv_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[simulation]\nparticles = 16\npaths = 5\ndelta_log2 = [-4, -3]\n[reference]\ndelta_log2 = -6\ncheck_scheme = \"truncated-em\"\n";
    let cfg = write_config(dir.path(), "c.toml", text);
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        mckean(&["converge", "--config", &cfg, "--threads", threads, "--out", out.to_str().unwrap()]);
        outputs.push(fs::read(out.join("convergence.csv")).unwrap());
        outputs.push(fs::read(out.join("moments.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[2]);
    assert_eq!(outputs[1], outputs[3]);
}

#[test]
fn seed_flag_changes_results_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.toml", SMALL_SWEEP);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    mckean(&["rbm-sweep", "--config", &cfg, "--seed", "5", "--out", a.to_str().unwrap()]);
    mckean(&["rbm-sweep", "--config", &cfg, "--seed", "6", "--out", b.to_str().unwrap()]);
    let a = fs::read_to_string(a.join("rbm_sweep.csv")).unwrap();
    let b = fs::read_to_string(b.join("rbm_sweep.csv")).unwrap();
    assert!(a.contains("# seed: 5"));
    assert!(a.contains("# config-sha256: "));
    assert_ne!(a, b);
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[simulation]\nparticels = 4\n");
    let (code, _, err) = mckean(&["converge", "--config", &cfg]);
    assert_eq!(code, 2);
    assert!(err.contains("particels"), "{err}");

    let cfg = write_config(dir.path(), "bad2.toml", "[simulation]\nparticles = 1\n");
    let (code, _, err) = mckean(&["converge", "--config", &cfg]);
    assert_eq!(code, 2);
    assert!(err.contains("particles"), "{err}");

    let (code, _, _) = mckean(&["converge", "--config", "/nonexistent/x.toml"]);
    assert_eq!(code, 2);
}

#[test]
fn failed_criterion_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[simulation]\nparticles = 8\npaths = 3\ndelta_log2 = [-4, -3]\n[reference]\ndelta_log2 = -6\n[criteria]\nslope_min = 50.0\n";
    let cfg = write_config(dir.path(), "c.toml", text);
    let out = dir.path().join("o");
    let (code, stdout, _) = mckean(&["converge", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 3);
    assert!(stdout.contains("FAIL convergence-slope"), "{stdout}");
    assert!(out.join("summary.csv").exists());
}

#[test]
fn divergence_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    // Without truncation the superlinear drift overflows at a coarse step.
    let text = "[model]\nx0 = 40.0\n[truncation]\nenabled = false\n[simulation]\nhorizon = 4.0\nparticles = 8\npaths = 4\ndelta_log2 = [-1]\n[reference]\nscheme = \"tamed-em\"\ndelta_log2 = -3\n";
    let cfg = write_config(dir.path(), "d.toml", text);
    let out = dir.path().join("o");
    let (code, stdout, err) = mckean(&["converge", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 4, "{stdout}{err}");
}

#[test]
fn validate_defaults_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let (code, stdout, _) = mckean(&["validate", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}");
    assert!(stdout.contains("PASS all-identities"));
    let csv = fs::read_to_string(out.join("validation.csv")).unwrap();
    assert!(csv.contains("partition-count"));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let name = text
            .lines()
            .find_map(|l| l.strip_prefix("experiment = "))
            .unwrap()
            .trim_matches('"')
            .to_string();
        let experiment = match name.as_str() {
            "converge" => Experiment::Converge,
            "rbm-sweep" => Experiment::RbmSweep,
            "timing" => Experiment::Timing,
            "validate" => Experiment::Validate,
            "chaos" => Experiment::Chaos,
            other => panic!("{other}"),
        };
        ExperimentConfig::from_toml(&text, experiment).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 5);
}
