//! End-to-end runs of the `scherk` binary.

use std::path::Path;
use std::process::Command;

use scherk::config::RunConfig;
use scherk::gluing::{glue, GluingProblem};
use scherk::mesh::Mesh;

fn scherk(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_scherk")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn catenoid_mesh_round_trips_through_obj() {
    let dir = tempfile::tempdir().unwrap();
    let obj = dir.path().join("catenoid.obj");
    let json = dir.path().join("catenoid.json");
    let out = scherk(&["catenoid", "--n", "3", "--eps", "0.5", "--rings", "21", "--segments", "24", "--mesh", path(&obj), "--report", path(&json)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mesh = Mesh::read_obj(&obj).unwrap();
    assert_eq!(mesh.vertices.len(), 21 * 24);
    assert!(mesh.is_manifold());
    assert_eq!(mesh.boundary_loops(), 2);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report["mesh_vertices"], 21 * 24);
}

#[test]
fn invalid_configuration_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "n = 3\nm = 2\neps = 0.5\nrho = 0.4\n").unwrap();
    let out = scherk(&["glue", "--config", path(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eps must be < rho"));
}

#[test]
fn oversized_boundary_data_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("neck.toml");
    std::fs::write(&cfg, "n = 3\neps = 0.1\nl_max = 4\n").unwrap();
    let out = scherk(&["neck", "--config", path(&cfg), "--h", "100"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn glue_report_has_the_documented_keys_and_reproduces_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("glue.toml");
    let json = dir.path().join("glue.json");
    let obj = dir.path().join("glue.obj");
    let text = "n = 3\nlattice_diag = [3.5449077018110318, 3.5449077018110318]\neps = 0.1\nl_max = 4\nneck_step = 0.02\nchart_step = 0.02\n";
    std::fs::write(&cfg, text).unwrap();
    let out = scherk(&["glue", "--config", path(&cfg), "--report", path(&json), "--mesh", path(&obj)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let mut keys: Vec<&str> = report.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["balancing", "c_eps", "contraction", "d_eps", "residuals"]);
    let config = RunConfig::parse(text).unwrap();
    let problem = GluingProblem::new(3, config.lattice().unwrap(), config.gluing_params().unwrap()).unwrap();
    let (direct, _) = glue(&problem, &problem.neck_solver().unwrap(), &problem.outer_solver().unwrap(), 0.1).unwrap();
    assert_eq!(report["c_eps"].as_f64().unwrap().to_bits(), direct.c_eps.to_bits());
    assert!(Mesh::read_obj(&obj).unwrap().is_manifold());
}
