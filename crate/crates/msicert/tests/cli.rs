use std::path::Path;
use std::process::{Command, Output};

fn msicert(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_msicert"));
    cmd.current_dir(dir).args(args);
    for var in ["MSICERT_CONFIG", "MSICERT_SEED", "MSICERT_OUT", "MSICERT_MARGIN", "MSICERT_H_MAX", "MSICERT_TOL", "MSICERT_JOBS"] {
        cmd.env_remove(var);
    }
    cmd.envs(env.iter().copied());
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn certified_h(path: &Path) -> f64 {
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    doc["h"].as_f64().unwrap()
}

#[test]
fn model_based_certificate_verifies_and_tampering_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let out = msicert(dir.path(), &["analyze", "--model-based", "--out", "model"], &[]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let cert = dir.path().join("model/certificate.json");
    let h = certified_h(&cert);
    assert!((1.61..=1.63).contains(&h), "{h}");

    let out = msicert(dir.path(), &["verify", cert.to_str().unwrap()], &[]);
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).lines().any(|l| l == "PASS"));

    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&cert).unwrap()).unwrap();
    doc["h"] = serde_json::json!(2.5);
    let forged = dir.path().join("forged.json");
    std::fs::write(&forged, doc.to_string()).unwrap();
    let out = msicert(dir.path(), &["verify", forged.to_str().unwrap()], &[]);
    assert_eq!(code(&out), 1, "{}", stdout(&out));
    assert!(stdout(&out).lines().any(|l| l == "FAIL"));
}

#[test]
fn missing_certificate_is_partial() {
    let dir = tempfile::tempdir().unwrap();
    let out = msicert(dir.path(), &["analyze", "--gain", "0,0", "--d-bar", "0.01", "--out", "zero"], &[]);
    assert_eq!(code(&out), 2, "{}{}", stdout(&out), stderr(&out));
    assert!(!dir.path().join("zero/certificate.json").exists());
}

#[test]
fn invalid_inputs_are_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let out = msicert(dir.path(), &["analyze", "--config", "absent.json"], &[]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("absent.json"), "{}", stderr(&out));

    std::fs::write(dir.path().join("typo.json"), r#"{"noise_level": [0.1]}"#).unwrap();
    let out = msicert(dir.path(), &["analyze", "--config", "typo.json"], &[]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("noise_level"), "{}", stderr(&out));

    let out = msicert(dir.path(), &["analyze", "--model-based", "--tol=-1"], &[]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));

    let out = msicert(dir.path(), &["analyze", "--gain", "1,2,3"], &[]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));

    let out = msicert(dir.path(), &["verify", "nowhere.json"], &[]);
    assert_eq!(code(&out), 1);
}

#[test]
fn environment_overrides_defaults_and_flags_override_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = msicert(dir.path(), &["analyze", "--model-based"], &[("MSICERT_H_MAX", "1.0"), ("MSICERT_OUT", "env")]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let h = certified_h(&dir.path().join("env/certificate.json"));
    assert!(h <= 1.0 && h > 0.9, "{h}");

    let out = msicert(
        dir.path(),
        &["analyze", "--model-based", "--h-max", "1.2", "--out", "flag"],
        &[("MSICERT_H_MAX", "1.0"), ("MSICERT_OUT", "env2")],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(!dir.path().join("env2").exists());
    let h = certified_h(&dir.path().join("flag/certificate.json"));
    assert!(h <= 1.2 && h > 1.0, "{h}");
}

fn without_runtime(csv: &str) -> Vec<String> {
    let mut rows = csv.lines();
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    let skip = header.iter().position(|c| *c == "runtime_s").expect("runtime column");
    csv.lines()
        .map(|line| {
            line.split(',')
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, v)| v)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect()
}

#[test]
fn sweep_is_reproducible_up_to_runtime() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("small.json"),
        r#"{"noise_levels": [0.1], "seeds": [1, 2], "schedule": {"max_outer_iters": 3}}"#,
    )
    .unwrap();
    let mut tables = Vec::new();
    for (out_dir, jobs) in [("run1", "1"), ("run2", "2")] {
        let out = msicert(
            dir.path(),
            &["reproduce-example", "--config", "small.json", "--out", out_dir, "--jobs", jobs],
            &[],
        );
        assert!([0, 2].contains(&code(&out)), "{}{}", stdout(&out), stderr(&out));
        let read = |name: &str| std::fs::read_to_string(dir.path().join(out_dir).join(name)).unwrap();
        tables.push((without_runtime(&read("analysis.csv")), without_runtime(&read("design.csv"))));
    }
    assert_eq!(tables[0], tables[1]);
    assert_eq!(tables[0].0.len(), 3);
}

#[test]
fn usage_errors_are_fatal_and_help_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&msicert(dir.path(), &["no-such-command"], &[])), 1);
    assert_eq!(code(&msicert(dir.path(), &["analyze", "--tol", "-1"], &[])), 1);
    assert_eq!(code(&msicert(dir.path(), &["--help"], &[])), 0);
}
