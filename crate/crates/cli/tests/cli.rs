use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pseudosolid::mesh::mesh_disk;
use pseudosolid::mesh::vtk::VtkData;
use pseudosolid_cli::svg::{contour_segments, Plot};

const BASE: &str = r#"
gamma = -1.0
grid_size = 5
h = 0.2

[domain]
x_min = -2.5
x_max = 2.5
y_min = -2.5
y_max = 2.5

[target]
kind = "circle"
radius = 1.7632228343518455
"#;

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("pseudosolid-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pseudosolid"))
        .args(args)
        .env_remove("PSEUDOSOLID_H")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn contour_of_linear_field() {
    let mesh = mesh_disk(1.0, 0.15, 10_000).unwrap();
    let f: Vec<f64> = mesh.nodes.iter().map(|p| p[0] + 0.5 * p[1]).collect();
    let segs = contour_segments(&mesh, &f, 0.3);
    assert!(segs.len() > 10);
    for seg in &segs {
        for p in seg {
            assert!((p[0] + 0.5 * p[1] - 0.3).abs() < 1e-12);
        }
    }
    assert!(contour_segments(&mesh, &f, 5.0).is_empty());

    let mut plot = Plot::covering(&mesh.nodes, 300.0);
    plot.shade_triangles(&mesh, &f, -1.0, 1.0);
    plot.segments(&segs, "red", 1.0);
    let svg = plot.to_svg();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn validation_errors_exit_1() {
    let dir = scratch("validation");
    assert_eq!(cli(&["optimize"]).status.code(), Some(1));
    let bad = write_config(&dir, &BASE.replace("gamma = -1.0", "gamma = 1.0").replace("h = 0.2", "h = -1.0"));
    let out = cli(&["solve-state", "--config", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gamma") && err.contains("h must be positive"), "{err}");
    let big = write_config(&dir, &BASE.replace("grid_size = 5", "grid_size = 10"));
    assert_eq!(cli(&["grad-check", "--config", s(&big)]).status.code(), Some(1));
}

#[test]
fn grad_check_reports_table() {
    let dir = scratch("grad");
    let cfg = write_config(&dir, &format!("eta = 0.1\n{BASE}"));
    let out = cli(&["grad-check", "--config", s(&cfg), "--out", s(&dir), "--seed", "3"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("newton"));
    let rows = fs::read_to_string(dir.join("grad_check.csv")).unwrap();
    assert_eq!(rows.lines().count(), 6);
}

#[test]
fn solve_state_outputs() {
    let dir = scratch("solve");
    let cfg = write_config(&dir, &BASE.replace("h = 0.2", "h = 0.1").replace("grid_size = 5", "grid_size = 20"));
    let out = cli(&["solve-state", "--config", s(&cfg), "--out", s(&dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let c = 1.7632228343518455;
    let csv = fs::read_to_string(dir.join("boundary.csv")).unwrap();
    let radii: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(radii.len() > 50);
    for r in &radii {
        assert!((r - c).abs() / c <= 0.01, "radius {r}");
    }

    let text = fs::read_to_string(dir.join("state.vtk")).unwrap();
    let vtk = VtkData::parse(&text).unwrap();
    assert_eq!(vtk.to_unstructured_grid(), text);
    let h = vtk.point_scalar("H").unwrap();
    assert!(h.iter().all(|v| (0.0..=1.0).contains(v)));

    let log = fs::read_to_string(dir.join("newton.csv")).unwrap();
    assert!(log.starts_with("iter,r1,r2,r3,halvings"));

    // emitters are deterministic
    let again = scratch("solve-again");
    assert_eq!(cli(&["solve-state", "--config", s(&cfg), "--out", s(&again)]).status.code(), Some(0));
    for f in ["state.vtk", "boundary.csv", "newton.csv"] {
        assert_eq!(fs::read(dir.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn zero_design_is_flagged() {
    let dir = scratch("zero");
    let cfg = write_config(&dir, BASE);
    let alpha = dir.join("zero.txt");
    fs::write(&alpha, "0 0 0 0 0\n".repeat(5)).unwrap();
    let out = cli(&["solve-state", "--config", s(&cfg), "--out", s(&dir), "--alpha", s(&alpha)]);
    let log = fs::read_to_string(dir.join("solve.log")).unwrap();
    assert!(log.contains("DEGENERATE"), "{log}");
    assert!(dir.join("newton.csv").exists());
    assert!(matches!(out.status.code(), Some(0) | Some(2)));
}

#[test]
fn verify_analytic_writes_both_meshes() {
    let dir = scratch("analytic");
    let cfg = write_config(&dir, &BASE.replace("h = 0.2", "h = 0.3").replace("grid_size = 5", "grid_size = 20"));
    let out = cli(&["verify-analytic", "--config", s(&cfg), "--out", s(&dir)]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(matches!(out.status.code(), Some(0) | Some(3)), "{text}");
    assert!(text.contains("C(R, gamma) = 1.76322283435"), "{text}");
    assert!(text.contains("observed order"));
    assert_eq!(fs::read_to_string(dir.join("analytic.csv")).unwrap().lines().count(), 3);
}

#[test]
fn env_override_applies() {
    let dir = scratch("env");
    let cfg = write_config(&dir, BASE);
    let out = Command::new(env!("CARGO_BIN_EXE_pseudosolid"))
        .args(["grad-check", "--config", s(&cfg), "--out", s(&dir)])
        .env("PSEUDOSOLID_GRID_SIZE", "12")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid_size <= 8"));
}
