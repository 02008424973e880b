use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_metastable"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// Value of `quantity` in a `quantity,value` CSV table.
fn lookup(csv: &str, quantity: &str) -> f64 {
    csv.lines()
        .find_map(|l| l.strip_prefix(&format!("{quantity},")))
        .unwrap_or_else(|| panic!("{quantity} missing"))
        .parse()
        .unwrap()
}

#[test]
fn qsd_of_a_single_state_well() {
    let input = data("two_state.json");
    let out = run(&["qsd", "--input", input.to_str().unwrap()]);
    assert!(out.status.success());
    let text = stdout(&out);
    // R = {a} is a single state: phi* = p(a,b) and mu* = delta_a.
    assert!((lookup(&text, "phiStar") - 0.2).abs() < 1e-15);
    assert!(text.contains("\na,1.0000000000000000e0,1.0000000000000000e0,"));
}

#[test]
fn capacity_with_infinite_rates_is_the_edge_conductance() {
    let input = data("two_state.json");
    let out = run(&[
        "capacity",
        "--input",
        input.to_str().unwrap(),
        "--kappa",
        "inf",
        "--lambda",
        "inf",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    let row = text.lines().find(|l| l.starts_with("inf,inf,")).unwrap();
    let value: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    // mu(a) = 0.6 by detailed balance, so c(a,b) = 0.6 * 0.2.
    assert!((value - 0.12).abs() < 1e-14);
}

#[test]
fn bounds_report_on_two_wells_holds() {
    let input = data("two_well8.json");
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "bounds-report",
        "--input",
        input.to_str().unwrap(),
        "--kappa",
        "0.01",
        "--kappa",
        "0.1",
        "--lambda",
        "0.01,0.1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = fs::read_to_string(dir.path().join("bounds.csv")).unwrap();
    let mut applicable = 0;
    for line in table.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols[2] == "true" {
            applicable += 1;
            assert_eq!(cols[6], "holds", "{line}");
        }
    }
    assert!(applicable > 20);
    let summary = fs::read_to_string(dir.path().join("boundsSummary.csv")).unwrap();
    assert_eq!(lookup(&summary, "violations"), 0.0);
}

fn simulate_into(dir: &Path, workers: &str) -> Vec<u8> {
    let input = data("two_well8.json");
    let out = run(&[
        "simulate-exit",
        "--input",
        input.to_str().unwrap(),
        "--samples",
        "400",
        "--seed",
        "42",
        "--workers",
        workers,
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    fs::read(dir.join("samples.csv")).unwrap()
}

#[test]
fn same_seed_gives_identical_samples() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let first = simulate_into(a.path(), "1");
    let second = simulate_into(b.path(), "1");
    let parallel = simulate_into(c.path(), "4");
    assert_eq!(first, second);
    assert_eq!(first, parallel);
    let text = String::from_utf8(first).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "seed,tau,T,transitionTime,endState"
    );
    assert_eq!(text.lines().count(), 401);
}

#[test]
fn transition_samples_are_reproducible() {
    let input = data("two_well8.json");
    let args = [
        "simulate-transition",
        "--input",
        input.to_str().unwrap(),
        "--lambda",
        "0.5",
        "--samples",
        "200",
        "--seed",
        "9",
    ];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
    let text = stdout(&first);
    let sample = text
        .lines()
        .skip_while(|l| *l != "seed,tau,T,transitionTime,endState")
        .nth(1)
        .unwrap();
    let cols: Vec<&str> = sample.split(',').collect();
    let tau: f64 = cols[1].parse().unwrap();
    let transition: f64 = cols[3].parse().unwrap();
    assert!(transition > 0.0 && transition <= tau);
}

#[test]
fn magnetization_chain_round_trips_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model");
    let again = dir.path().join("again");
    let out = run(&[
        "model-cw",
        "--N",
        "40",
        "--beta",
        "1.5",
        "--h",
        "0.05",
        "--mag",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let chain = model.join("chain.json");
    let out = run(&[
        "qsd",
        "--input",
        chain.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    for table in ["qsd.csv", "qsdMeasure.csv"] {
        assert_eq!(
            fs::read(model.join(table)).unwrap(),
            fs::read(again.join(table)).unwrap(),
            "{table}"
        );
    }
}

#[test]
fn json_output_parses() {
    let input = data("two_state.json");
    let out = run(&[
        "qsd",
        "--input",
        input.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = v["qsd"].as_array().unwrap();
    let phi = rows.iter().find(|r| r["quantity"] == "phiStar").unwrap();
    assert!((phi["value"].as_f64().unwrap() - 0.2).abs() < 1e-15);
}

#[test]
fn usage_errors_exit_with_two() {
    let input = data("two_well8.json");
    let path = input.to_str().unwrap();
    let missing_seed = run(&["simulate-exit", "--input", path, "--samples", "10"]);
    assert_eq!(missing_seed.status.code(), Some(2));
    let unsorted = run(&["capacity", "--input", path, "--kappa", "0.5,0.1"]);
    assert_eq!(unsorted.status.code(), Some(2));
    let nonpositive = run(&["soft-sweep", "--input", path, "--lambda", "0"]);
    assert_eq!(nonpositive.status.code(), Some(2));
    let unknown = run(&["frobnicate"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn data_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(&[
        "qsd",
        "--input",
        dir.path().join("absent.json").to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(3));
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"states":["a","b"],"edges":[{"from":"a","to":"b","p":0.7},{"from":"a","to":"a","p":0.7}]}"#).unwrap();
    let out = run(&["validate", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let unknown_state = run(&[
        "qsd",
        "--input",
        data("two_state.json").to_str().unwrap(),
        "--R",
        "zzz",
    ]);
    assert_eq!(unknown_state.status.code(), Some(3));
}

#[test]
fn wasp_model_dumps_a_loadable_chain() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "model-wasp",
        "--ra",
        "1",
        "--rt",
        "0.5",
        "--rw",
        "0.5",
        "--n",
        "4",
        "--alpha",
        "0.16",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let chain = dir.path().join("chain.json");
    let out = run(&["validate", "--input", chain.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(lookup(&stdout(&out), "states"), 183.0);
}
