use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use benders_lab::experiment::{self, read_summary};
use benders_lab::instance::Instance;

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_benders-lab"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn generate_validate_solve_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = bin(
        &[
            "generate",
            "--family",
            "smcf",
            "--scenarios",
            "8",
            "--seed",
            "2",
            "--correlation",
            "0.3",
            "--out",
            "i.json",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = bin(&["validate", "--instance", "i.json"], d);
    assert_eq!(stdout(&o).trim(), "ok");

    let mut objectives = Vec::new();
    for m in ["de", "adaptive"] {
        let out = format!("run-{m}");
        let o = bin(
            &[
                "solve",
                "--instance",
                "i.json",
                "--method",
                m,
                "--out",
                &out,
            ],
            d,
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let rows = read_summary(&d.join(&out).join("summary.csv")).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].status, "optimal");
        objectives.push(rows[0].objective);
        let trace = fs::read_to_string(d.join(&out).join(format!("trace_{m}.csv"))).unwrap();
        assert!(trace.starts_with("elapsed_seconds,z_L,z_U,gap,partition_size,cumulative_cuts\n"));
        let echo = Instance::load(&d.join(&out).join("instance.json")).unwrap();
        assert_eq!(echo, Instance::load(&d.join("i.json")).unwrap());
    }
    assert!((objectives[0] - objectives[1]).abs() <= 1e-6 * (1.0 + objectives[0].abs()));
}

#[test]
fn validate_names_the_offending_field() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(bin(
        &[
            "generate",
            "--family",
            "flcvar",
            "--scenarios",
            "4",
            "--seed",
            "1",
            "--out",
            "f.json"
        ],
        d
    )
    .status
    .success());
    let mut v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("f.json")).unwrap()).unwrap();
    v["capacity"][2] = (-5.0).into();
    fs::write(d.join("cap.json"), v.to_string()).unwrap();
    let o = bin(&["validate", "--instance", "cap.json"], d);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("capacity[2]"), "{}", stderr(&o));

    let mut v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("f.json")).unwrap()).unwrap();
    v["scenarios"][0]["probability"] = 0.9.into();
    fs::write(d.join("prob.json"), v.to_string()).unwrap();
    let o = bin(&["validate", "--instance", "prob.json"], d);
    assert!(!o.status.success());
    assert!(
        stderr(&o).contains("probabilities must sum to 1"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn empty_method_list_fails_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("c.json"),
        r#"{"instances":[{"generate":{"family":"cpp","scenarios":3,"seed":0}}],"methods":[],"output_dir":"out"}"#,
    )
    .unwrap();
    let o = bin(&["compare", "--config", "c.json"], d);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("methods"));
    assert!(!d.join("out").exists());
}

#[test]
fn compare_is_deterministic_apart_from_timing() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = r#"{
        "instances": [
            {"generate": {"family": "cpp", "scenarios": 12, "seed": 5}},
            {"generate": {"family": "flcvar", "scenarios": 6, "seed": 2}, "reference_objective": 100.0}
        ],
        "methods": ["de", "gapm", "single", "multi", "adaptive", "adaptive-single"],
        "output_dir": "out"
    }"#;
    fs::write(d.join("c.json"), config).unwrap();
    let mut runs = Vec::new();
    for _ in 0..2 {
        let cfg = experiment::ExperimentConfig::load(&d.join("c.json")).unwrap();
        let mut rows = experiment::run_experiment(&cfg).unwrap();
        for r in &mut rows {
            r.wall_seconds = 0.0;
        }
        runs.push(rows);
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0].len(), 12);
    assert!(runs[0].iter().all(|r| r.status == "optimal"));
    for name in ["cpp-s12-seed5", "flcvar-s6-seed2"] {
        assert!(d.join("out").join(name).join("trace_adaptive.csv").exists());
        assert!(d.join("out").join(name).join("instance.json").exists());
    }
    assert_eq!(read_summary(&d.join("out/summary.csv")).unwrap().len(), 12);
}

#[test]
fn method_failures_are_recorded_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Recourse y = 1 − x with y ≥ 0 and x ≥ 2: no first-stage decision works.
    let inst = r#"{
        "family": "generic",
        "n_first_stage": 1, "n_recourse_rows": 1, "n_recourse_vars": 1,
        "first_stage_cost": [1.0],
        "first_stage_lower": [2.0], "first_stage_upper": [3.0],
        "recourse_matrix": [[1.0]], "recourse_cost": [1.0],
        "recourse_lower": [0.0], "recourse_upper": [null],
        "scenarios": [{"probability": 1.0, "technology": [[1.0]], "rhs": [1.0]}],
        "theta_lb": 0.0
    }"#;
    fs::write(d.join("g.json"), inst).unwrap();
    fs::write(
        d.join("c.json"),
        r#"{"instances":[{"path":"g.json"}],"methods":["de","multi","adaptive"],"output_dir":"out"}"#,
    )
    .unwrap();
    let o = bin(&["compare", "--config", "c.json"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = read_summary(&d.join("out/summary.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(
        rows.iter()
            .all(|r| r.status == "infeasible" || r.status == "error"),
        "{rows:?}"
    );
}

#[test]
fn thread_cap_from_environment() {
    // Only this test touches the variable.
    std::env::set_var(experiment::THREADS_ENV, "2");
    assert_eq!(experiment::effective_threads(8), 2);
    assert_eq!(experiment::effective_threads(1), 1);
    std::env::remove_var(experiment::THREADS_ENV);
    assert_eq!(experiment::effective_threads(8), 8);
}
