use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const FREE_PROFILE: &str = r#"
[experiment]
kind = "profile"

[potential]
family = "free"

[time]
value = 10
"#;

const DIMER_CERTIFICATE: &str = r#"
[experiment]
kind = "certificate"
seed = 11

[potential]
family = "dimer"
coupling = 0.5

[time]
value = 100

[analysis]
alpha = 0
c = 10
intervals = [[0.48, 0.52]]
p = [1, 2]
"#;

const FIBONACCI_BETA: &str = r#"
[experiment]
kind = "beta"

[potential]
family = "fibonacci"
coupling = 1

[time]
start = 5
stop = 40
count = 6

[analysis]
p = [1, 2]
"#;

fn transportlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transportlab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    transportlab(&args)
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> =
        fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    names
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn free_profile_routes_agree() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(&write_config(tmp.path(), FREE_PROFILE), &out, &["--verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut reader = csv::Reader::from_path(out.join("profile.csv")).unwrap();
    assert_eq!(reader.headers().unwrap(), vec!["n", "a_resolvent", "a_quadrature"]);
    let mut total = 0.0;
    let mut seen_origin = false;
    for rec in reader.records() {
        let rec = rec.unwrap();
        let n: i64 = rec[0].parse().unwrap();
        let res: f64 = rec[1].parse().unwrap();
        let quad: f64 = rec[2].parse().unwrap();
        assert!((res - quad).abs() < 1e-6, "n = {n}: {res} vs {quad}");
        if n == 0 {
            seen_origin = true;
            assert!((res - quad).abs() < 1e-3);
        }
        total += res;
    }
    assert!(seen_origin);
    assert!((total - 1.0).abs() < 1e-8);
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(out.join("run_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["guard"]["passed"], true);
    assert_eq!(meta["runner"]["verify"], true);
    assert!(meta["derived"]["oracles"][0]["distance_time-quadrature"].as_f64().unwrap() < 1e-6);
    assert_eq!(listing(&out), vec!["moments.csv", "profile.csv", "run_meta.json"]);
}

#[test]
fn dimer_certificate_passes() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(&write_config(tmp.path(), DIMER_CERTIFICATE), &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cert: serde_json::Value = serde_json::from_slice(&fs::read(out.join("certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["verdict"], "pass");
    assert_eq!(cert["certificate"]["passed"], true);
}

#[test]
fn malformed_config_only_writes_error_report() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(&write_config(tmp.path(), "[experiment]\nkind = \"profile\n"), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(listing(&out), vec!["config_errors.txt"]);
    let report = fs::read_to_string(out.join("config_errors.txt")).unwrap();
    assert!(report.contains("line 2"), "{report}");
}

#[test]
fn out_of_range_theta_names_key_and_line() {
    let tmp = TempDir::new().unwrap();
    let text = "[experiment]\nkind = \"profile\"\n[potential]\nfamily = \"sturmian\"\ntheta = 1.5\ncoupling = 1\n[time]\nvalue = 5\n";
    let config = write_config(tmp.path(), text);
    let o = transportlab(&["validate", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 5") && err.contains("potential.theta"), "{err}");
    let out = tmp.path().join("out");
    assert_eq!(run(&config, &out, &[]).status.code(), Some(2));
    assert_eq!(listing(&out), vec!["config_errors.txt"]);
}

#[test]
fn unknown_key_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let text = format!("{FREE_PROFILE}\n[box]\nhalfwidth = 40\n");
    let o = transportlab(&["validate", write_config(tmp.path(), &text).to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("box.halfwidth"), "{}", stderr(&o));
}

#[test]
fn validate_accepts_good_config() {
    let tmp = TempDir::new().unwrap();
    let o = transportlab(&["validate", write_config(tmp.path(), DIMER_CERTIFICATE).to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("certificate"));
}

#[test]
fn zero_jobs_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let o = run(&write_config(tmp.path(), FREE_PROFILE), &out, &["--jobs", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(listing(&out), vec!["config_errors.txt"]);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), FIBONACCI_BETA);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(run(&config, &a, &["--jobs", "1"]).status.code(), Some(0));
    assert_eq!(run(&config, &b, &["--jobs", "3"]).status.code(), Some(0));
    for name in ["moments.csv", "exponents.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn run_meta_replays_the_run() {
    let tmp = TempDir::new().unwrap();
    let first = tmp.path().join("first");
    assert_eq!(run(&write_config(tmp.path(), FIBONACCI_BETA), &first, &[]).status.code(), Some(0));
    let meta_path = first.join("run_meta.json");
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(&meta_path).unwrap()).unwrap();
    assert_eq!(meta["config"]["experiment"]["kind"], "beta");
    assert!(meta["versions"]["transportlab"].is_string());
    assert_eq!(meta["outputs"], serde_json::json!(["moments.csv", "exponents.json"]));

    let second = tmp.path().join("second");
    let o = run(&meta_path, &second, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["moments.csv", "exponents.json"] {
        assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(second.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn band_scan_writes_table() {
    let tmp = TempDir::new().unwrap();
    let text = "[experiment]\nkind = \"band_scan\"\n[potential]\nfamily = \"fibonacci\"\ncoupling = 2\n\
                [analysis]\nk_min = 3\nk_max = 8\ndelta = 0.05\n";
    let out = tmp.path().join("out");
    let o = run(&write_config(tmp.path(), text), &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv::Reader::from_path(out.join("bands.csv")).unwrap().records().count();
    // q_k = F_k zeros per level: 3 + 5 + 8 + 13 + 21 + 34
    assert_eq!(rows, 84);
    let ex: serde_json::Value = serde_json::from_slice(&fs::read(out.join("exponents.json")).unwrap()).unwrap();
    let upper = ex["upper_exponent"].as_f64().unwrap();
    assert!(upper > 0.0 && upper < 1.0, "{upper}");
}

#[test]
fn leakage_guard_exits_three() {
    let tmp = TempDir::new().unwrap();
    let text =
        "[experiment]\nkind = \"moments\"\n[potential]\nfamily = \"free\"\n[time]\nstart = 5\nstop = 50\ncount = 6\n\
                [box]\nhalf_width = 20\n";
    let out = tmp.path().join("out");
    let o = run(&write_config(tmp.path(), text), &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("leakage"));
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(out.join("run_meta.json")).unwrap()).unwrap();
    assert_eq!(meta["guard"]["passed"], false);
}
