use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn deepsoh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepsoh")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SHORT: &str = r#"
[campaign]
max_cycles = 3
rpt_every = 2

[[step]]
mode = "discharge"
current = "C/2"
until = ["voltage <= 3.0"]

[[step]]
mode = "charge"
current = "C/2"
until = ["voltage >= 4.2"]

[[step]]
mode = "cv"
voltage = 4.2
until = ["current <= C/20"]

[[step]]
mode = "rest"
until = ["time >= 30min"]
"#;

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let protocol = dir.path().join("p.toml");
    std::fs::write(&protocol, SHORT).unwrap();
    let config = repo("configs/demo.toml");
    let mut hashes = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let o = deepsoh(&[
            "simulate",
            "--config",
            config.to_str().unwrap(),
            "--protocol",
            protocol.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        let mut names: Vec<_> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, ["manifest.json", "summary.json", "trajectory.csv"]);
        let manifest = json(&out.join("manifest.json"));
        let listed: Vec<_> = manifest["outputs"].as_array().unwrap().iter().map(|f| f["path"].clone()).collect();
        assert_eq!(listed, ["trajectory.csv", "summary.json"]);
        hashes.push(manifest["outputs"].clone());
        let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5);
    }
    assert_eq!(hashes[0], hashes[1]);
    assert_eq!(
        std::fs::read(dir.path().join("a/trajectory.csv")).unwrap(),
        std::fs::read(dir.path().join("b/trajectory.csv")).unwrap()
    );
}

#[test]
fn cv_without_current_termination_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let protocol = dir.path().join("p.toml");
    std::fs::write(&protocol, SHORT.replace("until = [\"current <= C/20\"]", "until = [\"voltage >= 4.3\"]")).unwrap();
    let o = deepsoh(&["simulate", "--protocol", protocol.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("step 3"), "{}", stderr(&o));
}

#[test]
fn syntax_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(&config, "alpha = 0.5\nshells = twenty\n").unwrap();
    let o = deepsoh(&["rpt", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn rpt_of_pristine_and_aged_states() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pristine");
    let o = deepsoh(&["rpt", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&out.join("rpt.json"));
    for key in ["capacity_pos", "capacity_neg", "x_100", "y_100"] {
        let (a, b) = (r["esoh"][key].as_f64().unwrap(), r["esoh_from_state"][key].as_f64().unwrap());
        assert!(((a - b) / b).abs() < 5e-3, "{key}: {a} vs {b}");
    }
    assert_eq!(r["esoh_from_state"]["capacity_pos"].as_f64().unwrap(), 4.52);
    assert!(std::fs::read_to_string(out.join("pseudo_ocv.csv")).unwrap().starts_with("capacity_ah,voltage_v\n"));

    // Age a cell, then measure it.
    let protocol = dir.path().join("p.toml");
    std::fs::write(&protocol, SHORT).unwrap();
    let state = dir.path().join("state.json");
    let o = deepsoh(&[
        "simulate",
        "--protocol",
        protocol.to_str().unwrap(),
        "--out",
        dir.path().join("sim").to_str().unwrap(),
        "--save-state",
        state.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("aged");
    let o = deepsoh(&["rpt", "--state", state.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&out.join("rpt.json"));
    let s = json(&state);
    let a = r["esoh"]["capacity_neg"].as_f64().unwrap();
    let b = s["state"]["deep"]["capacity_neg"].as_f64().unwrap();
    assert!(((a - b) / b).abs() < 5e-3, "{a} vs {b}");
    assert!(r["expansion_m"].as_f64().unwrap() > 0.0);
}

#[test]
fn missing_ocp_table_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(&config, "neg_ocp = \"no_such_table.txt\"\n").unwrap();
    let o = deepsoh(&["rpt", "--config", config.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no_such_table.txt"));
}

#[test]
fn identify_with_and_without_expansion() {
    let y = repo("configs/measurement.json");
    let o = deepsoh(&["identify", "--with-expansion", y.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["kind"], "unique");
    assert!(v["state"]["delta_sei"].as_f64().unwrap() > 0.0);

    let o = deepsoh(&["identify", "--without-expansion", y.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["kind"], "family");
    assert_eq!(v["segment"]["start"]["delta_pl"], 0.0);
    assert_eq!(v["segment"]["end"]["delta_sei"], 0.0);
}

#[test]
fn infeasible_vector_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let y = dir.path().join("y.json");
    std::fs::write(
        &y,
        r#"{"capacity_pos": 4.4, "capacity_neg": 5.3, "lli": 0.2, "resistance": 0.001, "expansion": 1e-6}"#,
    )
    .unwrap();
    let o = deepsoh(&["identify", y.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("infeasible"));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["kind"], "infeasible");
}

#[test]
fn ambiguity_demo_member_counts() {
    let dir = tempfile::tempdir().unwrap();
    let o = deepsoh(&["ambiguity-demo", "-n", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);

    let protocol = dir.path().join("p.toml");
    std::fs::write(&protocol, SHORT).unwrap();
    let out = dir.path().join("one");
    let o = deepsoh(&[
        "ambiguity-demo",
        "-n",
        "1",
        "--protocol",
        protocol.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(out.join("member_1.csv").exists() && !out.join("member_2.csv").exists());
    assert_eq!(json(&out.join("report.json"))["members"].as_array().unwrap().len(), 1);
}

#[test]
fn default_ambiguity_demo_gives_distinct_lives() {
    let dir = tempfile::tempdir().unwrap();
    let o = deepsoh(&["ambiguity-demo", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = json(&dir.path().join("report.json"));
    let mut ruls: Vec<u64> = r["members"].as_array().unwrap().iter().map(|m| m["rul_cycles"].as_u64().unwrap()).collect();
    ruls.dedup();
    assert_eq!(ruls.len(), 3);
    assert_eq!(r["checks"]["ruls_diverge"], true);
}
