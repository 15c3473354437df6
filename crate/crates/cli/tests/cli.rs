use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_reflector-ot");

const ANTIPODAL: &str = r#"
[mesh]
n = 4

[target]
kind = "uniform_cap"
axis = [0.0, 0.0, 1.0]
halfangle = 0.7853981633974483

[raytrace]
rays = 200000

[raytrace.grid]
mode = "sphere"
axis = [0.0, 0.0, 1.0]
max_polar = 0.7853981633974483
n_polar = 8
n_azimuth = 8
"#;

const BUMP: &str = r#"
[mesh]
n = 4

[solver]
tau = 0.3
max_iter = 3
stop_mode = "max_iter_only"

[target]
kind = "smooth_bump"
axis = [0.0, 0.0, 1.0]
halfangle = 0.7853981633974483
width = 0.3
base = 1.0
peak = 4.0
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn run_in(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn malformed_config_exits_3_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = write_config(dir.path(), "bad.toml", &format!("{ANTIPODAL}\n[solver]\nstep_size = 0.5\n"));
    let o = run_in("solve", &bad, &out, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("step_size"), "{}", stderr(&o));
    assert!(!out.exists());

    let broken = write_config(dir.path(), "broken.toml", "[mesh\nn = 4");
    assert_eq!(run_in("solve", &broken, &out, &[]).status.code(), Some(3));
    let missing = dir.path().join("nope.toml");
    assert_eq!(run_in("solve", &missing, &out, &[]).status.code(), Some(3));
    let invalid = write_config(dir.path(), "invalid.toml", &ANTIPODAL.replace("n = 4", "n = 0"));
    assert_eq!(run_in("solve", &invalid, &out, &[]).status.code(), Some(3));
    assert!(!out.exists());
}

fn obj_vertices(path: &Path) -> Vec<[f64; 3]> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.strip_prefix("v "))
        .map(|l| {
            let v: Vec<f64> = l.split_whitespace().map(|t| t.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect()
}

#[test]
fn trivial_solve_writes_a_constant_radius_surface() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "a.toml", ANTIPODAL);
    let o = run_in("solve", &cfg, &out, &["--threads", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["u_h.vtk", "surface.obj", "convergence.csv", "timings.csv", "solution.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }

    let verts = obj_vertices(&out.join("surface.obj"));
    let r0 = (verts[0][0].powi(2) + verts[0][1].powi(2) + verts[0][2].powi(2)).sqrt();
    for v in &verts {
        let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        assert!((r - r0).abs() < 1e-10, "{r} vs {r0}");
    }

    let artifact: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("solution.json")).unwrap()).unwrap();
    let iterations = artifact["report"]["iterations"].as_u64().unwrap() as usize;
    assert!(iterations <= 2);
    let csv = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "k,residual,theta,dual_value,min_det,negative_fraction");
    assert_eq!(lines.len(), iterations + 2);

    let vtk = std::fs::read_to_string(out.join("u_h.vtk")).unwrap();
    let n_dofs = artifact["u"].as_array().unwrap().len();
    assert_eq!(verts.len(), n_dofs);
    assert!(vtk.contains(&format!("POINTS {n_dofs} double")));
    let hash = artifact["config_hash"].as_str().unwrap();
    assert!(vtk.lines().nth(1).unwrap().contains(hash));
}

#[test]
fn convergence_logs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "b.toml", BUMP);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(run_in("solve", &cfg, &a, &[]).status.success());
    assert!(run_in("solve", &cfg, &b, &[]).status.success());
    let ca = std::fs::read(a.join("convergence.csv")).unwrap();
    assert_eq!(ca, std::fs::read(b.join("convergence.csv")).unwrap());
    assert_eq!(String::from_utf8(ca).unwrap().lines().count(), 3 + 2);
    assert_eq!(
        std::fs::read(a.join("surface.obj")).unwrap(),
        std::fs::read(b.join("surface.obj")).unwrap()
    );
}

#[test]
fn single_size_study_matches_solve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "b.toml", BUMP);
    let (solve, study) = (dir.path().join("solve"), dir.path().join("study"));
    assert!(run_in("solve", &cfg, &solve, &[]).status.success());
    let o = run_in("study", &cfg, &study, &["--n", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(solve.join("convergence.csv")).unwrap(),
        std::fs::read(study.join("n4").join("convergence.csv")).unwrap()
    );
    let errors = std::fs::read_to_string(study.join("errors.csv")).unwrap();
    assert_eq!(errors.lines().next().unwrap(), "n,h,final_residual,iterations");
    assert_eq!(errors.lines().count(), 2);
}

#[test]
fn study_with_exact_solution_tabulates_errors() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
[mesh]
n = 4

[solver]
cost_sign = 1
max_iter = 2
stop_mode = "max_iter_only"
initial = "plane_reflector"

[target]
kind = "cap_indicator"
axis = [0.0, -0.3826834323650898, 0.9238795325112867]
halfangle = 0.7853981633974483

[exact_solution]
kind = "plane_reflector"
direction = [0.0, -0.3826834323650898, 0.9238795325112867]

[study]
n = [3, 6]
"#;
    let cfg = write_config(dir.path(), "e.toml", text);
    let out = dir.path().join("out");
    let o = run_in("study", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let errors = std::fs::read_to_string(out.join("errors.csv")).unwrap();
    let lines: Vec<&str> = errors.lines().collect();
    assert_eq!(lines[0], "n,h,l2_error,h1_error,final_residual,iterations");
    let l2: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(l2.len(), 2);
    assert!(l2[1] < l2[0], "{l2:?}");
    assert!(out.join("n3").join("solution.json").is_file());
    assert!(out.join("n6").join("solution.json").is_file());
}

#[test]
fn raytrace_needs_an_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", ANTIPODAL);
    let out = dir.path().join("out");
    let o = run_in("raytrace", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let o = run_in("raytrace", &cfg, &out, &["--artifact", "/nonexistent/solution.json"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn trivial_raytrace_gives_a_flat_image() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", ANTIPODAL);
    let out = dir.path().join("out");
    assert!(run_in("solve", &cfg, &out, &[]).status.success());
    let o = run_in("raytrace", &cfg, &out, &["--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["image.pgm", "image.csv", "error.pgm", "metrics.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    let (inside, missed) = (m["in_grid_fraction"].as_f64().unwrap(), m["miss_fraction"].as_f64().unwrap());
    assert_eq!(inside + missed, 1.0);
    assert!(inside > 0.999);
    assert!(m["l1"].as_f64().unwrap() < 0.05, "{m}");
    assert_eq!(m["seed"].as_u64(), Some(3));

    let pgm = std::fs::read_to_string(out.join("image.pgm")).unwrap();
    assert!(pgm.starts_with("P2\n"));
    assert!(pgm.contains("\n8 8\n65535\n"));
    let csv = std::fs::read_to_string(out.join("image.csv")).unwrap();
    assert_eq!(csv.lines().count(), 65);
}

#[test]
fn reference_grid_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", ANTIPODAL);
    let out = dir.path().join("out");
    assert!(run_in("solve", &cfg, &out, &[]).status.success());
    assert!(run_in("raytrace", &cfg, &out, &[]).status.success());
    std::fs::copy(out.join("image.csv"), dir.path().join("ref.csv")).unwrap();

    let same = write_config(
        dir.path(),
        "same.toml",
        &ANTIPODAL.replace("rays = 200000", "rays = 200000\nreference = \"ref.csv\""),
    );
    let o = run_in("raytrace", &same, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));

    let finer = write_config(
        dir.path(),
        "finer.toml",
        &ANTIPODAL
            .replace("rays = 200000", "rays = 200000\nreference = \"ref.csv\"")
            .replace("n_polar = 8", "n_polar = 16"),
    );
    let o = run_in("raytrace", &finer, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("grid mismatch"), "{}", stderr(&o));
}

#[test]
fn thread_count_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", ANTIPODAL);
    let out = dir.path().join("out");
    let o = Command::new(BIN)
        .args(["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env("REFLECTOR_OT_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let o = Command::new(BIN)
        .args(["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env("REFLECTOR_OT_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
}
