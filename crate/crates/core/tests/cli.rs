use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn globinv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_globinv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run(job: &str, dir: &Path) -> Output {
    let path = dir.join("job.json");
    fs::write(&path, job).unwrap();
    let out = dir.join("out");
    globinv(&["run", path.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().next().expect("stderr line")).unwrap()
}

#[test]
fn identity_certificate_job() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        r#"{"map":"identity_2","command":"certify","parameters":{"x0":[0,0],"r":1}}"#,
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let r = report(dir.path());
    assert_eq!(r["schema_version"], "1");
    assert!((r["result"]["rho"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    // defaults are materialized
    assert_eq!(r["parameters"]["verification"]["solve"]["lift"]["rel_tol"], 1e-10);
    assert_eq!(r["parameters"]["grid_size"], 4096);

    let csv = fs::read_to_string(dir.path().join("out/rho_curve.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("r,rho"));
    for line in lines {
        let (r, rho) = line.split_once(',').unwrap();
        let (r, rho): (f64, f64) = (r.parse().unwrap(), rho.parse().unwrap());
        assert!((r - rho).abs() < 1e-12);
    }
}

#[test]
fn out_of_range_solve_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        r#"{"map":"arctan1d","command":"solve","parameters":{"y":[2],"seed_point":[0]}}"#,
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"]["code"], 3);
    let r = report(dir.path());
    assert!(r["result"]["solution"].is_null());
    let status = &r["result"]["outcome"]["Lift"]["status"];
    assert!(status.get("Singular").is_some() || status.get("Escaped").is_some(), "{status}");
    assert!(dir.path().join("out/traj_0.csv").exists());
}

#[test]
fn unknown_map_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(r#"{"map":"unknown","command":"solve"}"#, dir.path());
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["error"]["kind"], "unknown_map");
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for job in [
        r#"{"map":"identity_2","command":"certify","extra":true}"#,
        r#"{"map":"identity_2","command":"certify","parameters":{"radius":1}}"#,
        r#"{"map":"identity_2","command":"launch"}"#,
        r#"{"map":"identity_2","command":"solve","parameters":{}}"#,
        r#"{"map":"parabola_sub","command":"solve","parameters":{"y":[1],"strategy":"Wazewski"}}"#,
        "not json",
    ] {
        let out = run(job, dir.path());
        assert_eq!(out.status.code(), Some(2), "{job}");
        assert_eq!(stderr_json(&out)["error"]["code"], 2);
    }
    let out = globinv(&["run", "/nonexistent/job.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn arctan_eta_column_matches_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        r#"{"map":"arctan1d","command":"indicators","parameters":{"x0":[0],"r_max":3,"grid_size":300}}"#,
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("out/eta_profile.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let (rho, eta) = line.split_once(',').unwrap();
        let (rho, eta): (f64, f64) = (rho.parse().unwrap(), eta.parse().unwrap());
        assert!((eta - 1.0 / (1.0 + rho * rho)).abs() < 1e-12);
        rows += 1;
    }
    assert_eq!(rows, 301);
}

#[test]
fn job_without_trajectories_writes_no_traj_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        r#"{"map":"complex_exp","command":"fibre","parameters":{"y":[1,0],
            "mode":{"Multistart":{"seeds":[[0,0],[0.1,6.0]]}}}}"#,
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let names: Vec<String> = fs::read_dir(dir.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, vec!["report.json".to_string()]);
    assert_eq!(report(dir.path())["result"]["points"].as_array().unwrap().len(), 2);
}

#[test]
fn star_and_diagnose_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        r#"{"map":"arctan1d","command":"star","parameters":{"directions":2,"t_budget":3}}"#,
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("out/star_reach.csv")).unwrap();
    assert!(csv.starts_with("d_1,reach,reason\n"));
    assert_eq!(csv.lines().count(), 3);

    let out = run(r#"{"map":"identity_2","command":"diagnose"}"#, dir.path());
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("C10") && stdout.contains("Holds"));
    let entries = report(dir.path())["result"]["entries"].as_array().unwrap().clone();
    assert_eq!(entries.len(), 7);
}

#[test]
fn reruns_are_identical_apart_from_timestamp() {
    let job = r#"{"map":"monotone1d","command":"certify","seed":5,
        "parameters":{"x0":[0.3],"r":2,"mode":"sampled","samples":16,"grid_size":50}}"#;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(run(job, a.path()).status.code(), Some(0));
    assert_eq!(run(job, b.path()).status.code(), Some(0));
    let strip = |d: &Path| {
        let mut v = report(d);
        v.as_object_mut().unwrap().remove("timestamp");
        v
    };
    assert_eq!(strip(a.path()), strip(b.path()));
    assert_eq!(report(a.path())["result"]["certified"], false);
}

#[test]
fn list_maps() {
    let out = globinv(&["list-maps"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for name in ["identity_<n>", "arctan1d", "complex_exp", "parabola_sub"] {
        assert!(text.lines().any(|l| l == name), "{name}");
    }
}
