//! The `solve`, `verify` and `convergence` subcommands.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use bdie_core::bdie::{self, BdieSystem, BoundaryData, ErrorNorms, LaplaceBie, SolutionTriple, SolveReport};
use bdie_core::verify::{self, Check};
use bdie_core::{io, linalg, BoundaryPart, DomainMesh, PotentialEvaluator, VertexClass, VolumeDensity};

use crate::config::{Problem, RunConfig};
use crate::table::{num, opt, Table};
use crate::{Cli, CliError, Command, Suite};

pub fn dispatch(cli: &Cli) -> Result<bool, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("--config", "a configuration file is required"))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Command::Convergence { levels } = &cli.command {
        if levels.len() < 2 {
            return Err(CliError::config("--levels", "at least two levels are required"));
        }
    }
    std::fs::create_dir_all(&cfg.output.dir)?;
    match &cli.command {
        Command::Solve => cmd_solve(&cfg),
        Command::Verify { suite } => cmd_verify(&cfg, *suite),
        Command::Convergence { levels } => cmd_convergence(&cfg, levels),
    }
}

/// A solved configuration at one refinement.
pub struct SolveRun {
    pub mesh: DomainMesh,
    pub solution: SolutionTriple,
    pub data: BoundaryData,
    pub report: SolveReport,
    pub condition: f64,
    /// Unknown counts `(u, ψ, φ)`.
    pub dofs: (usize, usize, usize),
    pub errors: Option<ErrorNorms>,
    /// Present when the system dump was requested.
    pub system: Option<(linalg::DenseMatrix, Vec<f64>)>,
}

fn boundary_data(mesh: &DomainMesh, problem: &Problem) -> Result<(BoundaryData, Option<VolumeDensity>), CliError> {
    match problem {
        Problem::Manufactured(p) => {
            let q = p.clone();
            let f = mesh.has_volume().then(|| VolumeDensity::field(move |x| q.source_f(x)));
            Ok((BoundaryData::from_problem(mesh, p), f))
        }
        Problem::Raw { phi0, psi0, source } => {
            let nd = (0..mesh.vertices.len())
                .filter(|&v| matches!(mesh.vertex_class[v], VertexClass::BoundaryDirichlet | VertexClass::Interface))
                .count();
            let nn = mesh.triangles_in(BoundaryPart::Neumann).count();
            let phi0 = phi0.expand("problem.phi0", nd)?;
            let psi0 = psi0.expand("problem.psi0", nn)?;
            let data = bdie::extend_boundary_data(&phi0, &psi0, mesh).map_err(CliError::from_core_config)?;
            let f = (*source != 0.0).then(|| VolumeDensity::constant(*source));
            if f.is_some() && !mesh.has_volume() {
                return Err(CliError::config("problem.source", "a boundary-only domain has no volume source"));
            }
            Ok((data, f))
        }
    }
}

/// Assembles and solves at `level` (the configured refinement when `None`).
pub fn solve_once(cfg: &RunConfig, level: Option<usize>) -> Result<SolveRun, CliError> {
    let mesh = cfg.mesh(level)?;
    if mesh.triangles_in(BoundaryPart::Dirichlet).next().is_none() {
        return Err(CliError::config(
            "domain.partition",
            "the mixed problem needs a non-empty Dirichlet part (u is otherwise fixed only up to a constant)",
        ));
    }
    let a = cfg.coefficient_field()?;
    let problem = cfg.problem()?;
    let ev = PotentialEvaluator::new(&mesh, &a, cfg.quad_options()?)?;
    let (data, f) = boundary_data(&mesh, &problem)?;
    let keep = cfg.output.system_dump;
    let (solution, report, condition, dofs, system) = if mesh.has_volume() {
        let sys = BdieSystem::assemble(&ev, data.clone(), f.as_ref())?;
        let (sol, report) = sys.solve(&mesh, cfg.solver_kind())?;
        let d = &sys.dofs;
        let counts = (d.interior.len(), d.psi_panels.len(), d.phi_vertices.len());
        let cond = linalg::condition_estimate(&sys.matrix);
        (sol, report, cond, counts, keep.then(|| (sys.matrix, sys.rhs)))
    } else {
        if !a.is_constant() {
            return Err(CliError::config(
                "coefficient",
                "a boundary-only domain needs a constant coefficient (the remainder is a volume integral)",
            ));
        }
        let bie: LaplaceBie = bdie::assemble_laplace_bie(&ev, data.clone(), f.as_ref())?;
        let (sol, report) = bie.solve(&ev, f.as_ref(), cfg.solver_kind())?;
        let d = &bie.dofs;
        let counts = (0, d.psi_panels.len(), d.phi_vertices.len());
        let cond = linalg::condition_estimate(&bie.matrix);
        (sol, report, cond, counts, keep.then(|| (bie.matrix, bie.rhs)))
    };
    let errors = match &problem {
        Problem::Manufactured(p) => Some(bdie::error_norms(&mesh, &solution, p, &data)),
        Problem::Raw { .. } => None,
    };
    Ok(SolveRun {
        mesh,
        solution,
        data,
        report,
        condition,
        dofs,
        errors,
        system,
    })
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output.dir.join(name)
}

fn write_solution(dir: &Path, run: &SolveRun) -> Result<(), CliError> {
    let mesh = &run.mesh;
    let u = run.solution.u_values();
    let mut t = Table::new(vec!["vertex", "x", "y", "z", "class", "u"]);
    for (v, x) in mesh.vertices.iter().enumerate() {
        let class = match mesh.vertex_class[v] {
            VertexClass::Interior => "interior",
            VertexClass::BoundaryDirichlet => "dirichlet",
            VertexClass::BoundaryNeumann => "neumann",
            VertexClass::Interface => "interface",
        };
        t.push(vec![v.to_string(), num(x.x), num(x.y), num(x.z), class.into(), num(u[v])]);
    }
    t.write(&dir.join("solution_u.csv"))?;

    let mut t = Table::new(vec!["panel", "x", "y", "z", "psi"]);
    for p in mesh.triangles_in(BoundaryPart::Dirichlet) {
        let c = mesh.triangle(p).centroid();
        t.push(vec![p.to_string(), num(c.x), num(c.y), num(c.z), num(run.solution.psi.values[p])]);
    }
    t.write(&dir.join("solution_psi.csv"))?;

    let mut t = Table::new(vec!["vertex", "x", "y", "z", "phi"]);
    for v in mesh.vertices_of_class(VertexClass::BoundaryNeumann) {
        let x = mesh.vertices[v];
        t.push(vec![v.to_string(), num(x.x), num(x.y), num(x.z), num(run.solution.phi.values[v])]);
    }
    t.write(&dir.join("solution_phi.csv"))?;
    Ok(())
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<bool, CliError> {
    let run = solve_once(cfg, None)?;
    let tol = cfg.tolerances.residual;
    let pass = run.report.converged && run.report.relative_residual <= tol;
    let e = run.errors;
    let has_volume = run.mesh.has_volume();
    let u_err = |f: fn(&ErrorNorms) -> f64| e.as_ref().filter(|_| has_volume).map(f);
    let (nu, npsi, nphi) = run.dofs;
    let u_norm = max_abs(run.solution.u_values());
    let psi_norm = max_abs(&run.solution.psi.values);
    let phi_norm = max_abs(&run.solution.phi.values);

    let header = vec![
        "domain",
        "refinement",
        "coefficient",
        "problem",
        "solver",
        "n_u",
        "n_psi",
        "n_phi",
        "n_total",
        "iterations",
        "relative_residual",
        "residual_tolerance",
        "converged",
        "condition_estimate",
        "u_max_abs",
        "psi_max_abs",
        "phi_max_abs",
        "u_l2",
        "u_l2_relative",
        "u_max_error",
        "psi_l2_error",
        "phi_l2_error",
        "pass",
    ];
    let mut t = Table::new(header);
    t.push(vec![
        cfg.domain.kind.name().into(),
        cfg.domain.refinement.to_string(),
        cfg.coefficient.clone(),
        cfg.problem_name(),
        run.report.solver.to_string(),
        nu.to_string(),
        npsi.to_string(),
        nphi.to_string(),
        (nu + npsi + nphi).to_string(),
        run.report.iterations.to_string(),
        num(run.report.relative_residual),
        num(tol),
        run.report.converged.to_string(),
        num(run.condition),
        num(u_norm),
        num(psi_norm),
        num(phi_norm),
        opt(u_err(|e| e.u_l2)),
        opt(u_err(|e| e.u_l2_relative)),
        opt(u_err(|e| e.u_max)),
        opt(e.map(|e| e.psi_l2)),
        opt(e.map(|e| e.phi_l2)),
        pass.to_string(),
    ]);
    let dir = &cfg.output.dir;
    t.write(&out_path(cfg, "summary.csv"))?;
    write_solution(dir, &run)?;
    if cfg.output.mesh_dump {
        io::write_mesh(&run.mesh, &mut BufWriter::new(File::create(out_path(cfg, "mesh.txt"))?))?;
    }
    if let Some((m, rhs)) = &run.system {
        io::write_system(m, rhs, &mut BufWriter::new(File::create(out_path(cfg, "system.txt"))?))?;
    }

    println!(
        "solve: {} unknowns (u {nu}, psi {npsi}, phi {nphi}), solver {}, relative residual {:.3e} (tol {:.1e}), condition estimate {:.3e}",
        nu + npsi + nphi,
        run.report.solver,
        run.report.relative_residual,
        tol,
        run.condition
    );
    println!("solution max |u| {u_norm:.3e}, |psi| {psi_norm:.3e}, |phi| {phi_norm:.3e}");
    if let Some(e) = e {
        if has_volume {
            println!("errors: u L2 relative {:.3e}, u max {:.3e}", e.u_l2_relative, e.u_max);
        }
        println!("errors: psi L2 {:.3e}, phi L2 {:.3e}", e.psi_l2, e.phi_l2);
    }
    println!("{} -> {}", if pass { "PASS" } else { "FAIL" }, dir.display());
    Ok(pass)
}

fn suite_checks(cfg: &RunConfig, suite: Suite) -> Result<Vec<Check>, CliError> {
    let mesh = cfg.mesh(None)?;
    let a = cfg.coefficient_field()?;
    let options = match suite {
        Suite::Jumps => cfg.quad_options_over(verify::jump_quadrature())?,
        _ => cfg.quad_options()?,
    };
    let ev = PotentialEvaluator::new(&mesh, &a, options)?;
    let tol = &cfg.tolerances;
    Ok(match suite {
        Suite::Jumps => {
            let e = verify::jump_errors(&ev, 20)?;
            verify::JUMP_NAMES
                .iter()
                .zip(e)
                .map(|(name, v)| Check::at_most(*name, v, tol.jumps))
                .collect()
        }
        Suite::Green => {
            if !mesh.has_volume() && !a.is_constant() {
                return Err(CliError::config("coefficient", "the green suite on a boundary-only domain needs a constant coefficient"));
            }
            let r = verify::green_constant_residual(&ev, &verify::interior_probes(&mesh))?;
            vec![Check::at_most("green_constant_one", r, tol.green)]
        }
        Suite::Relations => {
            let (surface, volume) = verify::relation_errors(&ev, 10)?;
            let mut v = vec![Check::at_most("relation_surface", surface, tol.relation_surface)];
            if let Some(vol) = volume {
                v.push(Check::at_most("relation_volume", vol, tol.relation_volume));
            }
            v
        }
        Suite::Reduction => {
            if !a.is_constant() {
                return Err(CliError::config("coefficient", "the reduction suite needs a constant coefficient"));
            }
            if !mesh.has_volume() {
                return Err(CliError::config("domain.kind", "the reduction suite needs a volume mesh"));
            }
            let p = match cfg.problem()? {
                Problem::Manufactured(p) => p,
                Problem::Raw { .. } => {
                    return Err(CliError::config("problem", "the reduction suite needs a manufactured solution (`exact`)"))
                }
            };
            let (blocks, relative) = verify::reduction_errors(&ev, &p)?;
            vec![
                Check::at_most("remainder_blocks", blocks, tol.remainder_blocks),
                Check::at_most("full_vs_reduced", relative, tol.reduction),
            ]
        }
    })
}

pub fn cmd_verify(cfg: &RunConfig, suite: Suite) -> Result<bool, CliError> {
    let checks = suite_checks(cfg, suite)?;
    let mut t = Table::new(vec!["suite", "check", "value", "tolerance", "pass"]);
    for c in &checks {
        t.push(vec![suite.name().into(), c.name.clone(), num(c.value), num(c.tolerance), c.pass.to_string()]);
        println!(
            "{} {}: {:.3e} (tol {:.1e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    t.write(&out_path(cfg, &format!("verify_{}.csv", suite.name())))?;
    let pass = checks.iter().all(|c| c.pass);
    println!("suite {}: {}", suite.name(), if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}

/// `log₂(e_k / e_{k+1})`; infinite when the finer error vanishes.
fn order(coarse: f64, fine: f64) -> f64 {
    if fine == 0.0 {
        if coarse == 0.0 {
            f64::NAN
        } else {
            f64::INFINITY
        }
    } else {
        (coarse / fine).log2()
    }
}

pub fn cmd_convergence(cfg: &RunConfig, levels: &[usize]) -> Result<bool, CliError> {
    if !matches!(cfg.problem()?, Problem::Manufactured(_)) {
        return Err(CliError::config("problem", "a convergence study needs a manufactured solution (`exact`)"));
    }
    let mut runs = Vec::with_capacity(levels.len());
    for &l in levels {
        let run = solve_once(cfg, Some(l))?;
        if !run.report.converged {
            return Err(CliError::Numeric(format!("solver did not converge at level {l}")));
        }
        let e = run.errors.expect("manufactured");
        log::info!("level {l}: u L2 relative {:.3e}", e.u_l2_relative);
        runs.push((l, run.mesh.mesh_size(), run.dofs, e, run.mesh.has_volume()));
    }
    let header = vec![
        "row",
        "level",
        "h",
        "n_total",
        "u_l2",
        "u_l2_relative",
        "u_max",
        "psi_l2",
        "phi_l2",
        "order_u_l2",
        "order_u_max",
        "order_psi_l2",
        "order_phi_l2",
        "order_tolerance",
        "pass",
    ];
    let mut t = Table::new(header);
    let tol = cfg.tolerances.order;
    for (l, h, (nu, npsi, nphi), e, vol) in &runs {
        let u = |v: f64| if *vol { num(v) } else { String::new() };
        t.push(vec![
            "level".into(),
            l.to_string(),
            num(*h),
            (nu + npsi + nphi).to_string(),
            u(e.u_l2),
            u(e.u_l2_relative),
            u(e.u_max),
            num(e.psi_l2),
            num(e.phi_l2),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            num(tol),
            String::new(),
        ]);
        println!(
            "level {l}: h {h:.4}, unknowns {}, u L2 rel {}, psi L2 {:.3e}, phi L2 {:.3e}",
            nu + npsi + nphi,
            if *vol { format!("{:.3e}", e.u_l2_relative) } else { "-".into() },
            e.psi_l2,
            e.phi_l2
        );
    }
    let mut pass = true;
    for w in runs.windows(2) {
        let (l0, _, _, e0, vol) = &w[0];
        let (l1, _, _, e1, _) = &w[1];
        let ou = order(e0.u_l2, e1.u_l2);
        let om = order(e0.u_max, e1.u_max);
        let op = order(e0.psi_l2, e1.psi_l2);
        let of = order(e0.phi_l2, e1.phi_l2);
        // The volume error decides on volume meshes; both boundary errors
        // decide on boundary-only meshes.
        let ok = |o: f64| o.is_nan() || o >= tol;
        let row_pass = if *vol { ok(ou) } else { ok(op) && ok(of) };
        pass &= row_pass;
        let u = |v: f64| if *vol { num(v) } else { String::new() };
        t.push(vec![
            "order".into(),
            format!("{l0}-{l1}"),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            u(ou),
            u(om),
            num(op),
            num(of),
            num(tol),
            row_pass.to_string(),
        ]);
        println!(
            "order {l0}->{l1}: u L2 {}, psi {op:.2}, phi {of:.2} (min {tol}) {}",
            if *vol { format!("{ou:.2}") } else { "-".into() },
            if row_pass { "PASS" } else { "FAIL" }
        );
    }
    t.write(&out_path(cfg, "convergence.csv"))?;
    Ok(pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_edge_cases() {
        assert_eq!(order(4.0, 1.0), 2.0);
        assert!(order(0.0, 0.0).is_nan());
        assert_eq!(order(1.0, 0.0), f64::INFINITY);
    }
}
