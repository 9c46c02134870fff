use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tfluct(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tfluct"))
        .args(args)
        .env("TFLUCT_OUT", out)
        .output()
        .expect("spawn tfluct")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "command = \"simulate\"\nn = 32\nb_n = 4\nstatistic = \"omega\"\np = 2\nreplicates = 150\nmaster_seed = 9\n").unwrap();
    let o = tfluct(&["simulate", "-c", cfg.to_str().unwrap(), "--b-n", "8"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let written = fs::read_to_string(dir.path().join("simulate.config.toml")).unwrap();
    assert!(written.contains("b_n = 8"));
    assert!(written.contains("master_seed = 9"));
}

#[test]
fn output_defaults_to_env_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = tfluct(&["partitions", "--p", "2", "--q", "2"], dir.path());
    assert!(o.status.success());
    let v = json(&dir.path().join("partitions.json"));
    assert!(v["records"].as_array().is_some_and(|r| !r.is_empty()));
}

#[test]
fn written_config_reproduces_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["simulate", "--n", "48", "--b-n", "6", "--entry", "rademacher", "--p", "3", "--replicates", "120", "--master-seed", "4"];
    assert!(tfluct(&args, a.path()).status.success());
    let cfg = a.path().join("simulate.config.toml");
    assert!(tfluct(&["simulate", "-c", cfg.to_str().unwrap(), "--output", b.path().to_str().unwrap()], b.path()).status.success());
    let csv_a = fs::read_to_string(a.path().join("simulate_omega_3.csv")).unwrap();
    let csv_b = fs::read_to_string(b.path().join("simulate_omega_3.csv")).unwrap();
    let body = |s: &str| s.lines().filter(|l| !l.starts_with('#')).map(str::to_owned).collect::<Vec<_>>();
    assert_eq!(body(&csv_a), body(&csv_b));
    assert_eq!(body(&csv_a)[0], "replicate_index,value");
    assert_eq!(body(&csv_a).len(), 121);
    let (ja, jb) = (json(&a.path().join("simulate.json")), json(&b.path().join("simulate.json")));
    assert_eq!(ja["config_hash"], jb["config_hash"]);
    assert_eq!(ja["records"], jb["records"]);
}

#[test]
fn failed_comparison_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["compare", "--n", "64", "--b-n", "8", "--b", "0.125", "--p", "2", "--replicates", "200", "--threshold", "0"];
    let o = tfluct(&args, dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&dir.path().join("compare.json"))["passed"], false);
}

#[test]
fn invalid_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "n = 16\nbogus = 1\n").unwrap();
    assert_eq!(tfluct(&["simulate", "-c", cfg.to_str().unwrap()], dir.path()).status.code(), Some(2));
    assert_eq!(tfluct(&["simulate", "--n", "8", "--b-n", "8"], dir.path()).status.code(), Some(2));
}

#[test]
fn oracle_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = tfluct(&["oracle-check", "--n", "9", "--b-n", "3", "--p", "6", "--replicates", "100"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(json(&dir.path().join("oracle-check.json"))["passed"], true);
}
