use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_bnvar");

const CONFIG: &str = r#"[domain]
shape = "box"
dimension = 3
resolution = 9

[boundary]
kind = "constant"
value = 1.0

[sweep]
lambda = [0.5, 1.5]
mu = [0.0, 0.01]
searches = ["nplus", "nminus", "mu_star"]

[output]
dir = "out"
"#;

fn bnvar(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env("BNVAR_THREADS", "2")
        .output()
        .expect("spawn bnvar")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_in(dir: &Path, config: &str) -> Output {
    fs::write(dir.join("cfg.toml"), config).unwrap();
    bnvar(&["run", "cfg.toml"], dir)
}

#[test]
fn run_report_certify_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let o = run_in(dir, CONFIG);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.join("out");
    for f in ["run.json", "sweep.csv", "existence.csv", "branch.csv", "config.toml"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 5);
    assert!(sweep.contains("nonexistence"));
    assert!(out.join("cells/cell_0002/nonexistence.json").is_file());

    let o = bnvar(&["report", "out"], dir);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("cells: 4"));
    for f in ["heatmap.csv", "branches.csv", "mu_star.csv", "barycenters.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }

    // cell 1 is (0.5 lambda1, 0.01): record 0 on N+, record 1 on N-
    let o = bnvar(&["certify", "out/cells/cell_0001/record_1.json"], dir);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("energy gap"));
    assert!(stdout(&o).contains("overall: PASS"));

    let o = bnvar(
        &[
            "fibering-profile",
            "cfg.toml",
            "--ray",
            "out/cells/cell_0001/record_1.field",
            "--mu",
            "0.01",
            "--samples",
            "11",
        ],
        dir,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,T,dT,d2T"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0][0], 0.0);
    // T'(0) = -(pairing) < 0 for mu > 0
    assert!(rows[0][2] < 0.0);
}

#[test]
fn corrupted_record_fails_certification() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let config = CONFIG
        .replace("lambda = [0.5, 1.5]", "lambda = 0.5")
        .replace("mu = [0.0, 0.01]", "mu = 0.01");
    assert!(run_in(dir, &config).status.success());
    let field = dir.join("out/cells/cell_0000/record_1.field");
    let text = fs::read_to_string(&field).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let scaled: Vec<String> = lines
        .flat_map(|l| {
            l.split_whitespace()
                .map(|x| (1.1 * x.parse::<f64>().unwrap()).to_string())
                .collect::<Vec<_>>()
        })
        .collect();
    fs::write(&field, format!("{header}\n{}\n", scaled.join("\n"))).unwrap();
    let o = bnvar(&["certify", "out/cells/cell_0000/record_1.json"], dir);
    assert_eq!(o.status.code(), Some(1), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("FAIL         pde residual"));
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_in(a.path(), CONFIG).status.success());
    assert!(run_in(b.path(), CONFIG).status.success());
    for f in [
        "run.json",
        "sweep.csv",
        "existence.csv",
        "branch.csv",
        "cells/cell_0001/record_1.json",
        "cells/cell_0001/record_1.field",
    ] {
        let x = fs::read(a.path().join("out").join(f)).unwrap();
        let y = fs::read(b.path().join("out").join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn config_errors_name_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = CONFIG.replace(
        "searches = [\"nplus\", \"nminus\", \"mu_star\"]",
        "searches = [\"nplus\", \"sideways\"]",
    );
    let o = run_in(tmp.path(), &bad);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cfg.toml:13:"), "{}", stderr(&o));
    assert!(stderr(&o).contains("sideways"));

    let bad = CONFIG.replace("resolution = 9", "resolution = nine");
    let o = run_in(tmp.path(), &bad);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cfg.toml:4:"), "{}", stderr(&o));
}

#[test]
fn thread_count_is_validated() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("cfg.toml"), CONFIG).unwrap();
    let o = Command::new(BIN)
        .args(["run", "cfg.toml"])
        .current_dir(tmp.path())
        .env("BNVAR_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("BNVAR_THREADS"));
}

#[test]
fn report_on_missing_run_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bnvar(&["report", "."], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("run.json"));
}
