use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn repgeo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_repgeo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn writes_csv_with_seed_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "{}");
    let out = dir.path().join("out");
    let run = repgeo(&[
        "laplace",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let csv = fs::read_to_string(out.join("laplace.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("log_z_theta,log_z_naive,log_z_invariant,naive_shift"));
    assert!(header.ends_with(",seed,config_hash"));
    let row = lines.next().unwrap();
    assert!(row.contains(",7,"));
    assert!(lines.next().is_none());
}

#[test]
fn stdout_json_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"flow": {"step_sizes": [0.1, 0.05]}}"#);
    let run = repgeo(&["flow", "--config", &config, "--format", "json"]);
    assert!(run.status.success());
    let doc = String::from_utf8(run.stdout).unwrap();
    assert!(doc.starts_with('{') && doc.ends_with("}\n"));
    assert!(doc.contains("\"experiment\": \"flow\""));

    let out = dir.path().join("plots");
    let run = repgeo(&[
        "flow",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "--plot",
    ]);
    assert!(run.status.success());
    assert!(fs::read_to_string(out.join("flow.svg"))
        .unwrap()
        .starts_with("<svg"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"seed": 3}"#);
    let a = repgeo(&["density", "--config", &config]);
    let b = repgeo(&["density", "--config", &config]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), r#"{"flow": {"integrator": "rk5"}}"#);
    let run = repgeo(&["flow", "--config", &bad]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("flow.integrator"));

    assert_eq!(repgeo(&["warp", "--config", &bad]).status.code(), Some(2));

    let missing = dir.path().join("absent.json");
    let run = repgeo(&["flow", "--config", missing.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&run.stderr).contains("absent.json"));

    // The origin is a saddle of the Dinh loss, so the Laplace Hessian is indefinite.
    let singular = write_config(
        dir.path(),
        r#"{"loss": {"kind": "dinh"}, "point": [0, 0], "chart": {"kind": "identity"}}"#,
    );
    let run = repgeo(&["laplace", "--config", &singular]);
    assert_eq!(
        run.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );

    let blocked = dir.path().join("file");
    fs::write(&blocked, "").unwrap();
    let ok = write_config(dir.path(), "{}");
    let run = repgeo(&[
        "laplace",
        "--config",
        &ok,
        "--out",
        blocked.join("sub").to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(4));
}
