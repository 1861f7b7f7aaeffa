use std::path::Path;
use std::process::{Command, Output};

fn fracdiff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracdiff"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn manifest(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn kernel_rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        let out = fracdiff(&["kernel", "--out", dir.to_str().unwrap(), "--sigma", "0.7"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["phi.csv", "psi.csv"] {
        let x = std::fs::read(a.join(name)).unwrap();
        let y = std::fs::read(b.join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between runs");
    }
    assert_eq!(manifest(&a)["pass"], serde_json::Value::Bool(true));
}

#[test]
fn invalid_configuration_exits_with_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("x");
    let o = out_dir.to_str().unwrap();
    for extra in [
        vec!["--sigma", "2.0"],
        vec!["--n", "100"],
        vec!["--set", "grid.bogus=1"],
        vec!["--set", "nonlinearity.name=nonsense"],
        vec!["--set", "tolerances.newton=-1"],
    ] {
        let mut args = vec!["solve", "--out", o];
        args.extend(extra.iter().copied());
        let out = fracdiff(&args);
        assert_eq!(out.status.code(), Some(2), "args {extra:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("config"));
    }
}

#[test]
fn config_file_and_overrides_compose() {
    let tmp = tempfile::tempdir().unwrap();
    let ini = tmp.path().join("run.ini");
    std::fs::write(&ini, "[params]\nsigma = 1.2\n\n[grid]\nn = 128\nlength = 16\n").unwrap();
    let dir = tmp.path().join("out");
    let out = fracdiff(&[
        "linear",
        "--config",
        ini.to_str().unwrap(),
        "--set",
        "grid.n=64",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let echoed = std::fs::read_to_string(dir.join("config.ini")).unwrap();
    assert!(echoed.contains("sigma = 1.2") || echoed.contains("sigma=1.2"), "{echoed}");
    assert!(echoed.contains("n = 64") || echoed.contains("n=64"), "{echoed}");
}

#[test]
fn solve_then_analyze_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let solve_dir = tmp.path().join("solve");
    let analyze_dir = tmp.path().join("analyze");
    let common = [
        "--n",
        "256",
        "--set",
        "nonlinearity.name=power",
        "--set",
        "nonlinearity.m=2",
    ];
    let mut args = vec!["solve", "--out", solve_dir.to_str().unwrap()];
    args.extend(common);
    args.extend(["--set", "time.t_final=2", "--set", "time.steps=100"]);
    let out = fracdiff(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&solve_dir);
    let artifacts = m["artifacts"].as_array().unwrap();
    assert!(artifacts.iter().all(|a| a["sha256"].as_str().map_or(false, |s| s.len() == 64)));

    let input = format!("analyze.input={}", solve_dir.display());
    let mut args = vec!["analyze", "--out", analyze_dir.to_str().unwrap(), "--set", &input];
    args.extend(common);
    let out = fracdiff(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["analysis.json", "holder.csv", "envelope.csv", "manifest.json"] {
        assert!(analyze_dir.join(name).exists(), "missing {name}");
    }
}
