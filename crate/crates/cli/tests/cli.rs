use std::path::PathBuf;
use std::process::{Command, Output};

fn data(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_haarlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

#[test]
fn counterexample_row_has_lower_bound_five() {
    let o = run(&["counterexample", "--eps", "0.01"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    assert_eq!(&rows[0][5], "5");
    let a2: f64 = rows[0][1].parse().unwrap();
    // (2 - e)(1 - e + e^2) at e = 1/100
    assert!((a2 - 1.970299).abs() < 1e-12);
}

#[test]
fn sweep_norm_column_increases() {
    let o = run(&["counterexample", "--eps", "0.1,0.01,0.001,0.0001"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let norms: Vec<f64> = rdr.records().map(|r| r.unwrap()[4].parse().unwrap()).collect();
    assert_eq!(norms.len(), 4);
    assert!(norms.windows(2).all(|p| p[0] < p[1]));
}

#[test]
fn counterexample_json_goes_to_out() {
    let dir = std::env::temp_dir().join(format!("haarlab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out = dir.join("ce.json");
    let o = run(&["counterexample", "--eps", "1/10", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["instances"][0]["all_hold"], true);
    assert_eq!(v["instances"][0]["h1_norm"], 1.0);
}

#[test]
fn epsilon_outside_range_is_an_error() {
    let o = run(&["counterexample", "--eps", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn zero_budget_is_rejected() {
    let o = run(&["scan", "--tree", &data("tree.json"), "--seed", "1", "--budget", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
}

#[test]
fn missing_file_is_reported() {
    let o = run(&["a2", "--tree", "/nonexistent/tree.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("file not found"));
}

#[test]
fn a2_is_exact_on_sample_tree() {
    let o = run(&["a2", "--tree", &data("tree.json"), "--weight", &data("weight.json")]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    // atom B: <w> = 17/8, <u> = 19/24
    assert_eq!(v["exact"], "323/192");
    assert_eq!(v["witness"], "B");
}

#[test]
fn float_and_rational_a2_agree() {
    let args = ["a2", "--tree", &data("tree.json"), "--weight", &data("weight.json")];
    let r = json(&run(&args));
    let f = json(&run(&[&args[..], &["--backend", "float"]].concat()));
    let (a, b) = (r["a2"].as_f64().unwrap(), f["a2"].as_f64().unwrap());
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn checking_commands_pass_on_sample_data() {
    let tree = data("tree.json");
    let weight = data("weight.json");
    let sigma = data("sigma.json");
    for cmd in ["norm", "carleson", "outer", "sigma4", "scan"] {
        let o = run(&[cmd, "--tree", &tree, "--weight", &weight, "--sigma", &sigma, "--budget", "200"]);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let _ = json(&o);
    }
}

#[test]
fn t1_accepts_bundle_and_separate_files() {
    let o = run(&["t1", "--bundle", &data("bundle.json")]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["paraproducts"]["residual"], 0.0);
    let o = run(&[
        "t1",
        "--tree",
        &data("tree.json"),
        "--sigma",
        &data("sigma.json"),
        "--mu1",
        &data("mu1.json"),
        "--mu2",
        &data("mu2.json"),
    ]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn reports_are_byte_identical() {
    let args = ["outer", "--tree", &data("tree.json"), "--weight", &data("weight.json"), "--seed", "7"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
    let args = ["scan", "--tree", &data("tree.json"), "--seed", "3", "--budget", "100"];
    assert_eq!(run(&args).stdout, run(&args).stdout);
}

#[test]
fn bellman_csv_has_one_row_per_region() {
    let dir = std::env::temp_dir().join(format!("haarlab-bell-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let csv_path = dir.join("b.csv");
    let o = run(&["bellman", "--q", "1,4", "--budget", "500", "--csv", csv_path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 5);
}

#[test]
fn quick_suite_passes() {
    let o = run(&["suite", "--quick", "--criteria", "1,6,10"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["criteria"].as_array().unwrap().len(), 3);
}

#[test]
fn bad_thread_count_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_haarlab"))
        .args(["counterexample"])
        .env("HAARLAB_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
