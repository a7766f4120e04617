use std::path::Path;
use std::process::{Command, Output};

fn penflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_penflow"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write(path: &Path, text: &str) -> String {
    std::fs::write(path, text).unwrap();
    path.display().to_string()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn converge_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir.path().join("c.cfg"),
        "scenario = converge\nbase_g = 4\nt_final = 0.1\n",
    );
    let out = dir.path().join("out");
    let o = penflow(&["converge", "--levels", "2", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(read(&out.join("convergence.csv"))).unwrap();
    let lines: Vec<_> = table.lines().collect();
    assert!(lines[0].starts_with("g,h,dt,member,l2_error"));
    // two levels, two members each
    assert_eq!(lines.len(), 5);
    assert!(out.join("config.resolved").exists());
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(penflow(&["bogus"]).status.code(), Some(2));
    // seed is not a rotors key
    let o = penflow(&["rotors", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not used by scenario rotors"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = write(&dir.path().join("bad.cfg"), "scenario = montecarlo\ndt = -1\n");
    let o = penflow(&["montecarlo", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let o = penflow(&["cylinder", "--config", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cylinder_runs_are_deterministic_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        &dir.path().join("cyl.cfg"),
        "scenario = cylinder\nt_final = 0.01\ncfl_constant = 0\n",
    );
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = penflow(&[
            "cylinder", "--config", &cfg, "--omega", "10", "--members", "4", "--seed", "42", "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a");
    let b = run("b");
    for f in ["stats.csv", "normalized_std.csv", "summary.txt"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f} differs between runs");
    }
    let resolved = |dir: &Path| {
        let text = String::from_utf8(read(&dir.join("config.resolved"))).unwrap();
        text.lines().filter(|l| !l.starts_with("out =")).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(resolved(&a), resolved(&b));

    // the resolved config alone reproduces the run
    let c = dir.path().join("c");
    let o = penflow(&[
        "cylinder",
        "--config",
        a.join("config.resolved").to_str().unwrap(),
        "--out",
        c.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&a.join("stats.csv")), read(&c.join("stats.csv")));
    assert_eq!(read(&a.join("normalized_std.csv")), read(&c.join("normalized_std.csv")));
}

#[test]
fn version_flag_reports_build() {
    let o = penflow(&["--version"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("penflow 0.1.0"));
}
