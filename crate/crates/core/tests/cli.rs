use std::fs;
use std::path::Path;
use std::process::Command;

use projected_milstein::cli::{parse_config, Block};
use projected_milstein::Error;

const BIN: &str = env!("CARGO_BIN_EXE_rps-sim");

const CONVERGE: &str = r#"{
    "command": "converge",
    "problem": {"label": "benchmark"},
    "period": 2,
    "seed": 5,
    "converge": {
        "schemes": ["PMM", "PEM"],
        "ladder": [0.125, 0.0625, 0.03125],
        "h_ref": 0.0078125,
        "reference": "finest_pmm",
        "t0": -2,
        "t_end": 0,
        "xi": [0.5],
        "samples": 64
    }
}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn run(args: &[&str], threads_env: Option<&str>) -> (i32, String, String) {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("RPS_SIM_THREADS");
    if let Some(t) = threads_env {
        cmd.env("RPS_SIM_THREADS", t);
    }
    let out = cmd.output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn converge_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", CONVERGE);
    let out = dir.path().join("out");
    let (code, stdout, _) = run(&["--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(code, 0);
    assert!(stdout.contains("PMM slope"));
    for f in ["errors.csv", "slope.csv", "errors.svg", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let errors = fs::read_to_string(out.join("errors.csv")).unwrap();
    let mut lines = errors.lines();
    assert_eq!(lines.next(), Some("scheme,h,e_h,stderr,failures"));
    assert_eq!(lines.count(), 6);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["status"], "ok");
}

#[test]
fn csv_is_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", CONVERGE);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    assert_eq!(run(&["--config", &cfg, "--out", a.to_str().unwrap(), "--threads", "1"], None).0, 0);
    assert_eq!(run(&["--config", &cfg, "--out", b.to_str().unwrap()], Some("8")).0, 0);
    assert_eq!(run(&["--config", &cfg, "--out", c.to_str().unwrap(), "--threads", "3"], None).0, 0);
    for f in ["errors.csv", "slope.csv"] {
        let x = fs::read(a.join(f)).unwrap();
        assert_eq!(x, fs::read(b.join(f)).unwrap(), "{f}");
        assert_eq!(x, fs::read(c.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", CONVERGE);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&["--config", &cfg, "--out", a.to_str().unwrap()], None);
    run(&["--config", &cfg, "--out", b.to_str().unwrap(), "--seed", "6"], None);
    assert_ne!(fs::read(a.join("errors.csv")).unwrap(), fs::read(b.join("errors.csv")).unwrap());
    let manifest = fs::read_to_string(b.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 6"));
}

#[test]
fn usage_and_config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = run(&["--config", "/nonexistent/config.json", "--out", "x"], None);
    assert_eq!(code, 1);
    let (code, _, _) = run(&["--bogus"], None);
    assert_eq!(code, 1);
    let bad = CONVERGE.replace(r#""seed": 5,"#, r#""seed": 5, "stepsize_h": 0.1,"#).replace(r#""samples": 64"#, r#""samples": 1"#);
    let cfg = write_config(dir.path(), "bad.json", &bad);
    let (code, _, stderr) = run(&["--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()], None);
    assert_eq!(code, 1);
    assert!(stderr.contains("stepsize_h: unknown key"), "{stderr}");
    assert!(stderr.contains("converge.samples"), "{stderr}");
    let cfg = write_config(dir.path(), "noout.json", CONVERGE);
    assert_eq!(run(&["--config", &cfg], None).0, 1);
}

#[test]
fn mass_blow_up_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "command": "simulate",
        "problem": {"label": "benchmark"},
        "period": 2,
        "seed": 1,
        "scheme": {"kind": "EM", "h": 0.5},
        "simulate": {"t0": -8, "t_end": 0, "xi": [8], "samples": 4}
    }"#;
    let cfg = write_config(dir.path(), "em.json", text);
    let out = dir.path().join("o");
    let (code, _, stderr) = run(&["--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(code, 2, "{stderr}");
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("experiment failed"));
}

#[test]
fn validate_reports_constants() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "command": "validate",
        "problem": {"label": "benchmark"},
        "period": 2,
        "seed": 3,
        "scheme": {"kind": "PMM", "h": 0.01},
        "validate": {"samples": 2000}
    }"#;
    let cfg = write_config(dir.path(), "v.json", text);
    let (code, stdout, _) = run(&["--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()], None);
    assert_eq!(code, 0);
    for key in ["K1_hat", "K2_hat", "beta_f", "beta_L", "admissible h window"] {
        assert!(stdout.contains(key), "{key}: {stdout}");
    }
}

#[test]
fn every_command_produces_its_tables() {
    let dir = tempfile::tempdir().unwrap();
    let base = r#""problem": {"label": "benchmark"}, "period": 2, "seed": 2, "scheme": {"kind": "PMM", "h": 0.01}"#;
    let cases = [
        ("simulate", r#""simulate": {"t0": -1, "t_end": 0, "xi": [0.5], "samples": 3}"#, "simulate.csv", "sample,t,x1"),
        ("pullback", r#""pullback": {"k_list": [1, 2], "window": [0, 2], "xi_list": [[0.5]], "samples": 4}"#, "pullback.csv", "k,t,value_mean,value_var"),
        ("periodicity", r#""periodicity": {"depth_k": 2, "window": [0, 2], "shift_count": 1, "xi": [0.5], "samples": 4}"#, "periodicity.csv", "t,original,shifted,residual"),
        ("coupling", r#""coupling": {"t0": -2, "t_end": 0, "xi": [0.8], "eta": [-0.5], "samples": 4, "bound_pairs": 100}"#, "coupling.csv", "t,msq_diff"),
    ];
    for (command, block, file, header) in cases {
        let text = format!(r#"{{"command": "{command}", {base}, {block}}}"#);
        let cfg = write_config(dir.path(), &format!("{command}.json"), &text);
        let out = dir.path().join(command);
        let (code, _, stderr) = run(&["--config", &cfg, "--out", out.to_str().unwrap()], None);
        assert_eq!(code, 0, "{command}: {stderr}");
        let csv = fs::read_to_string(out.join(file)).unwrap();
        assert_eq!(csv.lines().next(), Some(header), "{command}");
        assert!(out.join("manifest.json").exists());
        assert!(fs::read_dir(&out).unwrap().any(|e| e.unwrap().path().extension().is_some_and(|x| x == "svg")));
    }
}

#[test]
fn parse_config_examples() {
    let c = parse_config(CONVERGE).unwrap();
    match c.block {
        Block::Converge(b) => assert_eq!(b.ladder.len(), 3),
        other => panic!("{other:?}"),
    }
    let misaligned = r#"{"command": "pullback", "problem": {"label": "benchmark"}, "period": 2, "seed": 1,
        "scheme": {"kind": "PMM", "h": 0.3},
        "pullback": {"k_list": [1], "window": [0, 0.6], "xi_list": [[0.5]], "samples": 1}}"#;
    match parse_config(misaligned) {
        Err(Error::Invalid(v)) => assert!(v.iter().any(|m| m.contains('2') && m.contains("0.3")), "{v:?}"),
        other => panic!("{other:?}"),
    }
    let exact_on_benchmark = CONVERGE.replace("finest_pmm", "exact");
    assert!(matches!(parse_config(&exact_on_benchmark), Err(Error::Invalid(_))));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 6);
}
