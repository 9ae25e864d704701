//! End-to-end checks of the command-line binary: exit codes, report files,
//! configuration layering, and byte-level determinism.

use std::path::PathBuf;
use std::process::{Command, Output};

use courantlab::report::{AxiomsReport, RunReport};

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_courantlab"));
    cmd.args(args).env_remove("COURANTLAB_REPORT_DIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary spawns")
}

fn scratch_dir(test: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("courantlab-cli-it").join(test);
    std::fs::create_dir_all(&dir).expect("scratch dir");
    dir
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn list_names_every_scenario() {
    let out = run(&["list"], &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout_of(&out);
    for name in [
        "circle-symplectic",
        "scaling-complex",
        "circle-dual-pair",
        "quaternion-triple",
        "quaternion-bihermitian",
        "twisted-translation",
        "twisted-translation-vector",
        "twisted-translation-form",
    ] {
        assert!(text.contains(name), "missing {name} in:\n{text}");
    }
}

#[test]
fn unknown_scenario_exits_with_code_two() {
    let out = run(&["run", "not-a-scenario"], &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("not-a-scenario"), "stderr: {err}");
}

#[test]
fn missing_scenario_argument_exits_with_code_two() {
    let out = run(&["run"], &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_a_parsable_report() {
    let dir = scratch_dir("parsable");
    let path = dir.join("report.json");
    let out = run(
        &[
            "run",
            "twisted-translation",
            "--samples",
            "2",
            "--seed",
            "3",
            "--report",
            path.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).expect("report written");
    let report: RunReport = serde_json::from_str(&text).expect("report parses");
    assert_eq!(report.schema_version, 1);
    assert_eq!(report.scenario, "twisted-translation");
    assert_eq!(report.samples, 2);
    assert_eq!(report.points.len(), 2);
    assert!(report.pass);
}

#[test]
fn reports_are_byte_identical_for_a_fixed_seed() {
    let dir = scratch_dir("determinism");
    let a = dir.join("a.json");
    let b = dir.join("b.json");
    let c = dir.join("c.json");
    for (path, seed) in [(&a, "9"), (&b, "9"), (&c, "10")] {
        let out = run(
            &[
                "run",
                "circle-symplectic",
                "--samples",
                "3",
                "--seed",
                seed,
                "--jobs",
                "2",
                "--report",
                path.to_str().unwrap(),
            ],
            &[],
        );
        assert_eq!(out.status.code(), Some(0));
    }
    let bytes_a = std::fs::read(&a).unwrap();
    let bytes_b = std::fs::read(&b).unwrap();
    let bytes_c = std::fs::read(&c).unwrap();
    assert_eq!(bytes_a, bytes_b, "same seed must reproduce the same report");
    assert_ne!(bytes_a, bytes_c, "a different seed must sample different points");
}

#[test]
fn report_dir_environment_is_honored() {
    let dir = scratch_dir("envdir");
    let out = run(
        &["run", "twisted-translation-vector", "--samples", "2"],
        &[("COURANTLAB_REPORT_DIR", dir.to_str().unwrap())],
    );
    assert_eq!(out.status.code(), Some(0));
    let path = dir.join("twisted-translation-vector.json");
    let report: RunReport =
        serde_json::from_str(&std::fs::read_to_string(&path).expect("report in env dir"))
            .expect("parses");
    assert!(report.pass);
}

#[test]
fn config_file_sets_defaults_and_flags_override() {
    let dir = scratch_dir("config");
    let cfg = dir.join("lab.toml");
    std::fs::write(&cfg, "samples = 2\nseed = 21\n[tolerances]\nresidual_tol = 1e-7\n").unwrap();

    let from_file = dir.join("from_file.json");
    let out = run(
        &[
            "run",
            "twisted-translation-form",
            "--config",
            cfg.to_str().unwrap(),
            "--report",
            from_file.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let report: RunReport =
        serde_json::from_str(&std::fs::read_to_string(&from_file).unwrap()).unwrap();
    assert_eq!(report.samples, 2);
    assert_eq!(report.seed, 21);
    assert_eq!(report.tolerances.residual_tol, 1e-7);

    let overridden = dir.join("overridden.json");
    let out = run(
        &[
            "run",
            "twisted-translation-form",
            "--config",
            cfg.to_str().unwrap(),
            "--samples",
            "3",
            "--report",
            overridden.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(0));
    let report: RunReport =
        serde_json::from_str(&std::fs::read_to_string(&overridden).unwrap()).unwrap();
    assert_eq!(report.samples, 3, "flag must beat the config file");
    assert_eq!(report.seed, 21, "unset flag keeps the file value");
}

#[test]
fn malformed_config_exits_with_code_two() {
    let dir = scratch_dir("badconfig");
    let cfg = dir.join("bad.toml");
    std::fs::write(&cfg, "samples = \"many\"\n").unwrap();
    let out = run(
        &["run", "twisted-translation", "--config", cfg.to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn axioms_subcommand_writes_a_report() {
    let dir = scratch_dir("axioms");
    let path = dir.join("axioms.json");
    let out = run(
        &["axioms", "--samples", "4", "--seed", "7", "--report", path.to_str().unwrap()],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let report: AxiomsReport =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(report.pass);
    assert!(report.control_jacobi > 1e-3);
    assert_eq!(report.dim, 4);
}

#[test]
fn report_flag_rejects_running_all_scenarios() {
    let out = run(&["run", "--all", "--report", "/tmp/x.json"], &[]);
    assert_eq!(out.status.code(), Some(2));
}
