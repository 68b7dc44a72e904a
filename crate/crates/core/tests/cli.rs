use std::path::Path;
use std::process::{Command, Output};

use fracnodal::experiments::{parse_report, sidecar_path, CSV_HEADER};
use fracnodal::{Field, Grid, ModelParams, PotentialSpec, ProblemConfig};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fracnodal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, cfg: &ProblemConfig) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

fn small() -> ModelParams {
    ModelParams {
        grid_points: 64,
        half_width: 8.0,
        ..ModelParams::default()
    }
}

#[test]
fn validate_accepts_defaults() {
    let out = run(&["validate"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn validate_rejects_constant_potential() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ProblemConfig::from_parts(&ModelParams::default(), &PotentialSpec::constant(1.0));
    let path = write_config(dir.path(), "constant.json", &cfg);
    assert_eq!(run(&["validate", "--config", &path]).status.code(), Some(2));
}

#[test]
fn validate_rejects_supercritical_exponent() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ProblemConfig::default();
    cfg.s = 0.25;
    let path = write_config(dir.path(), "p.json", &cfg);
    assert_eq!(run(&["validate", "--config", &path]).status.code(), Some(2));
}

#[test]
fn missing_config_is_an_io_error() {
    let out = run(&["solve-ground", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ProblemConfig::from_parts(&small(), &PotentialSpec::harmonic(1.0));
    let path = write_config(dir.path(), "small.json", &cfg);
    let out = run(&["solve-nodal", "--config", &path, "--max-iters", "3"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn solve_ground_writes_field_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mp = small();
    let cfg = ProblemConfig::from_parts(&mp, &PotentialSpec::harmonic(1.0));
    let path = write_config(dir.path(), "small.json", &cfg);
    let field = dir.path().join("u.txt");
    let trace = dir.path().join("trace.txt");
    let out = run(&[
        "solve-ground",
        "--config",
        &path,
        "--out",
        field.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["residual_inf"].as_f64().unwrap() <= 1e-8);

    let text = std::fs::read_to_string(&field).unwrap();
    let first = text.lines().next().unwrap();
    let cols: Vec<&str> = first.split_whitespace().collect();
    assert_eq!(cols.len(), 2);
    assert!(cols[1].contains('e'));
    let grid = Grid::new(mp.dim, mp.grid_points, mp.half_width).unwrap();
    let u = Field::parse_dump(grid.into(), &text).unwrap();
    assert!(u.values().iter().all(|&x| x >= -1e-12));

    let trace_text = std::fs::read_to_string(&trace).unwrap();
    assert!(trace_text.lines().count() > 0);
    assert!(trace_text.lines().all(|l| l.split_whitespace().count() == 3));
}

#[test]
fn doubling_writes_report_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ProblemConfig::from_parts(&small(), &PotentialSpec::harmonic(1.0));
    let path = write_config(dir.path(), "small.json", &cfg);
    let csv = dir.path().join("doubling.csv");
    let out = run(&["doubling", "--config", &path, "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(
        CSV_HEADER,
        "b,c_nod,c_ground,ratio,margin,iters_nodal,iters_ground,dist_to_limit"
    );
    let rows = parse_report(&csv).unwrap();
    assert_eq!(rows.len(), 1);
    let r = &rows[0].record;
    assert!(r.c_nod > 2.0 * r.c_ground);
    assert!(rows[0].dist_to_limit.is_none());

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(sidecar_path(&csv)).unwrap()).unwrap();
    assert!(meta.is_object());
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ProblemConfig::from_parts(&small(), &PotentialSpec::harmonic(1.0));
    let path = write_config(dir.path(), "small.json", &cfg);
    let out = run(&["solve-ground", "--config", &path, "--out", "/nonexistent/dir/u.txt"]);
    assert_eq!(out.status.code(), Some(4));
}
