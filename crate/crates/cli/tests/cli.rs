use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_filtered-fock"))
}

fn scenario(name: &str) -> String {
    format!("{}/../../scenarios/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn tables_subcommand_prints_layout() {
    let out = bin().args(["ito-table", "--calculus", "boson"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("dA1dA2"));
    assert!(text.contains("dT"));
    let out = bin().args(["ito-table", "--calculus", "mfree:2"]).output().unwrap();
    assert!(String::from_utf8(out.stdout).unwrap().contains("IP0"));
    let out = bin().args(["ito-table", "--calculus", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn broken_unitarity_exits_one_and_names_the_condition() {
    let out = bin()
        .args(["run", &scenario("broken_unitarity.scn"), "--report", "json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("U:ii"), "stderr should name the failing condition: {err}");
}

#[test]
fn parse_error_exits_two() {
    let dir = std::env::temp_dir().join("ffk_cli_test");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("bad.scn");
    std::fs::write(&path, "grid T=1 cells=4 colors=2 nmax=2 h0=1\nbogus line\n").unwrap();
    let out = bin().args(["run", path.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("E001"));
}

#[test]
fn check_unitarity_filter_runs_subset() {
    let out = bin()
        .args(["check-unitarity", &scenario("broken_unitarity.scn")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
