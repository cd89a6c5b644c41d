//! End-to-end runs of the `bdie` binary.

use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn bdie(dir: &Path, body: &str, args: &[&str]) -> Output {
    let cfg = write_config(dir, body);
    Command::new(env!("CARGO_BIN_EXE_bdie"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(str::to_owned).collect();
    let mut rows = vec![header];
    for rec in r.records() {
        rows.push(rec.unwrap().iter().map(str::to_owned).collect());
    }
    rows
}

fn column(rows: &[Vec<String>], name: &str) -> usize {
    rows[0].iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

const CUBE: &str = r#"
coefficient = "exp_x3"
[domain]
kind = "cube"
refinement = 2
[problem]
exact = "x1_squared"
"#;

#[test]
fn manufactured_cube_solve_reports_errors() {
    let dir = TempDir::new().unwrap();
    let out = bdie(dir.path(), CUBE, &["solve"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.path().join("out/summary.csv"));
    assert_eq!(rows.len(), 2);
    for name in ["u_l2_relative", "u_max_error", "psi_l2_error", "phi_l2_error", "condition_estimate"] {
        let v: f64 = rows[1][column(&rows, name)].parse().unwrap();
        assert!(v.is_finite() && v > 0.0, "{name} = {v}");
    }
    assert_eq!(rows[1][column(&rows, "n_total")], "26");
    assert_eq!(rows[1][column(&rows, "residual_tolerance")], "1e-8");
    for f in ["solution_u.csv", "solution_psi.csv", "solution_phi.csv"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PASS"), "{stdout}");
}

#[test]
fn unknown_preset_is_a_configuration_error() {
    let dir = TempDir::new().unwrap();
    let out = bdie(dir.path(), &CUBE.replace("exp_x3", "cubic"), &["solve"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("`coefficient`") && stderr.contains("cubic"), "{stderr}");
}

#[test]
fn missing_config_is_a_configuration_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_bdie")).arg("solve").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_data_gives_zero_solution() {
    let dir = TempDir::new().unwrap();
    let body = CUBE.replace("exact = \"x1_squared\"", "phi0 = 0.0\npsi0 = 0.0");
    let out = bdie(dir.path(), &body, &["solve"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = read_csv(&dir.path().join("out/summary.csv"));
    for name in ["u_max_abs", "psi_max_abs", "phi_max_abs"] {
        assert_eq!(rows[1][column(&rows, name)].parse::<f64>().unwrap(), 0.0);
    }
    assert_eq!(rows[1][column(&rows, "u_l2_relative")], "");
}

#[test]
fn raw_data_of_wrong_length_is_rejected() {
    let dir = TempDir::new().unwrap();
    let body = CUBE.replace("exact = \"x1_squared\"", "phi0 = [1.0, 2.0]");
    let out = bdie(dir.path(), &body, &["solve"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("problem.phi0"));
}

#[test]
fn pure_neumann_problem_is_rejected() {
    let dir = TempDir::new().unwrap();
    let body = CUBE.replace("refinement = 2", "refinement = 2\npartition = \"all_neumann\"");
    let out = bdie(dir.path(), &body, &["solve"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("domain.partition"));
}

#[test]
fn unconverged_solver_is_a_numeric_failure() {
    let dir = TempDir::new().unwrap();
    let body = format!("{CUBE}[solver]\nkind = \"gmres\"\nmax_iter = 2\n");
    let out = bdie(dir.path(), &body, &["solve"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    let rows = read_csv(&dir.path().join("out/summary.csv"));
    assert_eq!(rows[1][column(&rows, "pass")], "false");
}

#[test]
fn gmres_solver_matches_lu_errors() {
    let dir = TempDir::new().unwrap();
    let lu = bdie(dir.path(), CUBE, &["solve"]);
    assert_eq!(lu.status.code(), Some(0));
    let a = read_csv(&dir.path().join("out/summary.csv"));
    let body = format!("{CUBE}[solver]\nkind = \"gmres\"\ntol = 1e-12\n");
    let gm = bdie(dir.path(), &body, &["solve"]);
    assert_eq!(gm.status.code(), Some(0));
    let b = read_csv(&dir.path().join("out/summary.csv"));
    let c = column(&a, "u_l2_relative");
    let (x, y): (f64, f64) = (a[1][c].parse().unwrap(), b[1][c].parse().unwrap());
    assert!((x - y).abs() < 1e-8 * x);
    assert_eq!(b[1][column(&b, "solver")], "gmres");
}

#[test]
fn output_is_deterministic() {
    let d1 = TempDir::new().unwrap();
    let d2 = TempDir::new().unwrap();
    let body = format!("{CUBE}[output]\nsystem_dump = true\nmesh_dump = true\n");
    bdie(d1.path(), &body, &["solve"]);
    bdie(d2.path(), &body, &["solve"]);
    for f in ["summary.csv", "solution_u.csv", "solution_psi.csv", "solution_phi.csv", "system.txt", "mesh.txt"] {
        let a = std::fs::read(d1.path().join("out").join(f)).unwrap();
        let b = std::fs::read(d2.path().join("out").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn jumps_suite_passes_on_the_sphere() {
    let dir = TempDir::new().unwrap();
    let body = r#"
coefficient = "linear_half_x3"
[domain]
kind = "sphere_boundary"
refinement = 3
"#;
    let out = bdie(dir.path(), body, &["verify", "--suite", "jumps"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let rows = read_csv(&dir.path().join("out/verify_jumps.csv"));
    assert_eq!(rows[0], ["suite", "check", "value", "tolerance", "pass"]);
    assert_eq!(rows.len(), 5);
    assert!(rows[1..].iter().all(|r| r[4] == "true" && r[3] == "5e-2"));
}

#[test]
fn reduction_suite_passes_for_unit_coefficient() {
    let dir = TempDir::new().unwrap();
    let body = CUBE.replace("exp_x3", "constant_one");
    let out = bdie(dir.path(), &body, &["verify", "--suite", "reduction"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let rows = read_csv(&dir.path().join("out/verify_reduction.csv"));
    let checks: Vec<&str> = rows[1..].iter().map(|r| r[1].as_str()).collect();
    assert_eq!(checks, ["remainder_blocks", "full_vs_reduced"]);
    let out = bdie(dir.path(), CUBE, &["verify", "--suite", "reduction"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn green_and_relation_suites_pass() {
    let dir = TempDir::new().unwrap();
    let body = CUBE.replace("refinement = 2", "refinement = 4");
    for suite in ["green", "relations"] {
        let out = bdie(dir.path(), &body, &["verify", "--suite", suite]);
        assert_eq!(out.status.code(), Some(0), "{suite}: {}", String::from_utf8_lossy(&out.stdout));
    }
    let rows = read_csv(&dir.path().join("out/verify_relations.csv"));
    assert_eq!(rows.len(), 3);
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = bdie(dir.path(), CUBE, &["verify", "--suite", "everything"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn convergence_table_has_level_and_order_rows() {
    let dir = TempDir::new().unwrap();
    let out = bdie(dir.path(), CUBE, &["convergence", "--levels", "2,4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let rows = read_csv(&dir.path().join("out/convergence.csv"));
    let kinds: Vec<&str> = rows[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(kinds, ["level", "level", "order"]);
    let order: f64 = rows[3][column(&rows, "order_u_l2")].parse().unwrap();
    assert!(order >= 0.8);
    assert_eq!(rows[3][column(&rows, "order_tolerance")], "8e-1");
}

#[test]
fn single_level_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = bdie(dir.path(), CUBE, &["convergence", "--levels", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn harmonic_problem_with_unit_coefficient_converges() {
    let dir = TempDir::new().unwrap();
    let body = CUBE.replace("exp_x3", "constant_one").replace("x1_squared", "saddle");
    let out = bdie(dir.path(), &body, &["convergence", "--levels", "2,4,8"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let rows = read_csv(&dir.path().join("out/convergence.csv"));
    let c = column(&rows, "order_u_l2");
    for r in rows.iter().filter(|r| r[0] == "order") {
        assert!(r[c].parse::<f64>().unwrap() >= 0.8, "{r:?}");
    }
}

#[test]
fn sphere_needs_constant_coefficient_to_solve() {
    let dir = TempDir::new().unwrap();
    let body = r#"
coefficient = "exp_x3"
[domain]
kind = "sphere_boundary"
refinement = 2
[problem]
exact = "x3"
"#;
    assert_eq!(bdie(dir.path(), body, &["solve"]).status.code(), Some(2));
    let out = bdie(dir.path(), &body.replace("exp_x3", "constant_one"), &["solve"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = read_csv(&dir.path().join("out/summary.csv"));
    assert_eq!(rows[1][column(&rows, "n_u")], "0");
    assert!(rows[1][column(&rows, "psi_l2_error")].parse::<f64>().unwrap() < 1e-3);
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        bdie_cli::config::RunConfig::from_toml(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 4);
}
