use std::fs;
use std::process::{Command, Output};

fn unirate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unirate")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_and_version() {
    let o = unirate(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    for sub in ["simulate", "vsum", "ssum", "regress", "beta", "localtime", "experiment", "check"] {
        assert!(stdout(&o).contains(sub), "help lacks {sub}");
    }
    let o = unirate(&["experiment", "--help"]);
    assert!(stdout(&o).contains("--n-max") && stdout(&o).contains("--config"));
    let o = unirate(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("unirate "));
}

#[test]
fn experiment_preset_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let args = ["experiment", "--preset", "T2.3-upper", "--n-max", "4096", "--replicates", "50", "--seed", "7", "--out"];
    let o = unirate(&[&args[..], &[out.to_str().unwrap()]].concat());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,replicate,statistic,value"));
    assert_eq!(lines.count(), 50 * 3);

    // Byte-identical on re-run, whatever the thread count.
    let out2 = dir.path().join("r2.csv");
    let o = unirate(&[&args[..], &[out2.to_str().unwrap(), "--threads", "1"]].concat());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(fs::read(&out).unwrap(), fs::read(&out2).unwrap());
}

#[test]
fn experiment_json_summary() {
    let o = unirate(&["experiment", "--preset", "T3.1", "--n-grid", "256,512,1024", "--replicates", "50", "--seed", "3", "--json"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["per_n"].as_array().unwrap().len(), 3);
    assert!(v["fit"]["slope"].is_number());
    assert_eq!(v["statistic"], "nw_sup_error");
}

#[test]
fn experiment_config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "# smoke\npreset = E2-tar\nn_grid = 128,256\nreplicates = 3\nseed = 11\n").unwrap();
    let o = unirate(&["experiment", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 1 + 6);
    assert!(!stderr(&o).contains("seed:"), "seed came from the file");

    let o = unirate(&["experiment", "--config", cfg.to_str().unwrap(), "--replicates", "2"]);
    assert_eq!(stdout(&o).lines().count(), 1 + 4);

    fs::write(&cfg, "preset = E2-tar\nbogus_key = 1\n").unwrap();
    let o = unirate(&["experiment", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bogus-key"));
}

#[test]
fn experiment_rejects_failed_assumption() {
    let base = ["experiment", "--preset", "T2.1-rw", "--p", "2", "--n-grid", "128", "--replicates", "1", "--seed", "1"];
    let o = unirate(&base);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("moment-rate"));
    let o = unirate(&[&base[..], &["--override-checks"]].concat());
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("overridden"));
}

#[test]
fn check_reports_moment_rate_failure() {
    let o = unirate(&["check", "--bandwidth-gamma", "0.2", "--profile", "random-walk", "--p", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("[FAIL] moment-rate"));
    let o = unirate(&["check", "--bandwidth-gamma", "0.2", "--profile", "random-walk", "--p", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = unirate(&["check", "--p", "4", "--process", "arch", "--a1", "1", "--a2", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("[PASS] contraction"));
}

#[test]
fn simulate_validation_and_output() {
    let o = unirate(&["simulate", "--process", "tar", "--a1", "1.5", "--a2", "0.2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("contraction"));

    let o = unirate(&["simulate", "--n", "5", "--errors", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("t,x,u"));
    assert_eq!(text.lines().count(), 6);
    assert_eq!(text, stdout(&unirate(&["simulate", "--n", "5", "--errors", "--seed", "4"])));

    let o = unirate(&["simulate", "--n", "50"]);
    assert!(stderr(&o).contains("seed: "));

    let o = unirate(&["simulate", "--process", "split-chain", "--n", "100", "--seed", "2", "--json"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["x"].as_array().unwrap().len(), 100);
    assert!(v["regenerations"].is_array());
}

#[test]
fn usage_errors() {
    assert_eq!(unirate(&["simulate", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(unirate(&["vsum", "--h", "0.1", "--bandwidth-gamma", "0.3"]).status.code(), Some(2));
    assert_eq!(unirate(&["vsum", "--kernel", "box"]).status.code(), Some(2));
    assert_eq!(unirate(&["simulate", "--process", "random-walk", "--rho", "0.5"]).status.code(), Some(2));
    assert_eq!(unirate(&["beta", "--process", "tar"]).status.code(), Some(2));
    assert_eq!(unirate(&["localtime", "--replicates", "5"]).status.code(), Some(1));
}

#[test]
fn sums_smoke() {
    let o = unirate(&["vsum", "--n", "2000", "--seed", "3", "--range", "fixed:2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("x,v"));
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap() >= 0.0));

    let o = unirate(&["vsum", "--n", "20000", "--seed", "3", "--range", "power:1", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["inf"], 0.0);
    assert!(v["inf_reciprocal_ratio"].is_null());

    let o = unirate(&["ssum", "--n", "2000", "--seed", "3", "--process", "mixing-ar", "--volatility", "sine:1:0.5", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["sup_ratio"].as_f64().unwrap() > 0.0);
}

#[test]
fn regress_beta_localtime_smoke() {
    let o = unirate(&["regress", "--n", "3000", "--seed", "5", "--range", "sqrt:0.1", "--decompose"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("y,m_hat,m,denominator,defined,theta1,theta2"));

    let o = unirate(&["beta", "--process", "split-chain", "--n", "100000", "--seed", "1", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["beta_hat"].as_f64().unwrap() - 1.0).abs() < 0.1);

    let o = unirate(&["localtime", "--n", "2000", "--replicates", "100", "--seed", "9", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v["ks_p_value"].as_f64().unwrap() > 0.0);
}
