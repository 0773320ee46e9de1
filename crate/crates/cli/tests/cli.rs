//! End-to-end tests of the binary: exit codes, output determinism, and the
//! provenance headers. Each test drives the compiled executable directly.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL_DISCRETE: &str = "\
[geometry]
kind = layered
length = 8.0
points = 16

[medium]
rho = 1.0
omega0 = 1.0
alpha = 0.3, 0.7

[reservoir]
kind = discrete
omegas = 1.5 2.5
beta_1 = 0.2
beta_2 = 0.1

[run]
seed = 11
t_max = 6.0
samples = 12
initial = random
";

const SMALL_VACUUM: &str = "\
[geometry]
kind = layered
length = 8.0
points = 16

[medium]
rho = 1.0
omega0 = 1.0
alpha = 0.4

[reservoir]
kind = none
";

fn run_cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polariton"))
        .args(args)
        .output()
        .expect("binary should launch")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.ini");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process should not be signalled")
}

#[test]
fn evolve_is_byte_identical_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_DISCRETE);
    for sub in ["a", "b"] {
        let out_dir = dir.path().join(sub);
        let out = run_cli(&[
            "evolve",
            "--config",
            &cfg,
            "--out",
            out_dir.to_str().unwrap(),
            "--no-timestamp",
        ]);
        assert_eq!(
            exit_code(&out),
            0,
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for name in ["fields_t.csv", "energy.csv"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn seed_flag_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_DISCRETE);
    let mut outputs = Vec::new();
    for (sub, seed) in [("s1", "11"), ("s2", "99")] {
        let out_dir = dir.path().join(sub);
        let out = run_cli(&[
            "evolve",
            "--config",
            &cfg,
            "--out",
            out_dir.to_str().unwrap(),
            "--seed",
            seed,
            "--no-timestamp",
        ]);
        assert_eq!(exit_code(&out), 0);
        outputs.push(fs::read(out_dir.join("fields_t.csv")).unwrap());
    }
    assert_ne!(
        outputs[0], outputs[1],
        "different seeds must change the run"
    );
}

#[test]
fn outputs_carry_provenance_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_VACUUM);
    let out_dir = dir.path().join("out");
    let out = run_cli(&[
        "modes",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&out),
        0,
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(out_dir.join("modes.csv")).unwrap();
    assert!(text.starts_with("# tool: polariton "), "{text}");
    assert!(text.contains("# config-sha256: "), "{text}");
    assert!(
        text.contains("# generated-unix: "),
        "timestamp expected by default\n{text}"
    );
    let no_ts_dir = dir.path().join("nots");
    let out = run_cli(&[
        "modes",
        "--config",
        &cfg,
        "--out",
        no_ts_dir.to_str().unwrap(),
        "--no-timestamp",
    ]);
    assert_eq!(exit_code(&out), 0);
    let text = fs::read_to_string(no_ts_dir.join("modes.csv")).unwrap();
    assert!(!text.contains("# generated-unix"), "{text}");
}

#[test]
fn verify_passes_and_fails_by_tolerance_scale() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_VACUUM);
    let ok_dir = dir.path().join("ok");
    let out = run_cli(&[
        "verify",
        "--config",
        &cfg,
        "--out",
        ok_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&out),
        0,
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ok_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["all_pass"], serde_json::Value::Bool(true));

    // Shrinking every tolerance far below machine precision must flip the
    // verdict and the exit code.
    let bad_dir = dir.path().join("bad");
    let out = run_cli(&[
        "verify",
        "--config",
        &cfg,
        "--out",
        bad_dir.to_str().unwrap(),
        "--tolerance-scale",
        "1e-30",
    ]);
    assert_eq!(
        exit_code(&out),
        1,
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(bad_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["all_pass"], serde_json::Value::Bool(false));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    // Missing file.
    let out = run_cli(&[
        "modes",
        "--config",
        dir.path().join("nope.ini").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);

    // Malformed syntax.
    let cfg = dir.path().join("broken.ini");
    fs::write(&cfg, "[geometry]\nkind layered\n").unwrap();
    let out = run_cli(&[
        "modes",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("configuration error"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // Schema violation: two-layer profile with three values.
    let cfg = dir.path().join("schema.ini");
    fs::write(
        &cfg,
        SMALL_VACUUM.replace("alpha = 0.4", "alpha = 0.4, 0.5, 0.6"),
    )
    .unwrap();
    let out = run_cli(&[
        "modes",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn numerical_errors_exit_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    // A continuum bath truncated in the middle of its support: the smearing
    // routine rejects the discretization instead of silently clipping it.
    let cfg = dir.path().join("truncated.ini");
    fs::write(
        &cfg,
        "\
[geometry]
kind = layered
length = 8.0
points = 16

[medium]
rho = 1.0
omega0 = 1.0
alpha = 0.5

[reservoir]
kind = continuum
family = gaussian
omega_c = 2.0
amplitude = 0.6
omega_max = 3.0

[run]
n_smear = 64
branch = 1
omega_min = 0.5
omega_max = 2.0
omega_samples = 3
",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run_cli(&[
        "continuum",
        "--config",
        &cfg.to_string_lossy(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        exit_code(&out),
        3,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("numerical error"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
