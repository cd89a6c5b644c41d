//! End-to-end behaviour of the public API.

use approx::assert_relative_eq;
use bdie_core::bdie::{self, BdieSystem, BoundaryData, SolverKind};
use bdie_core::*;
use proptest::prelude::*;

fn exp_problem(exact: ExactField) -> ManufacturedProblem {
    ManufacturedProblem::new("manufactured", CoefficientField::preset(CoefficientPreset::ExpX3), exact)
}

#[test]
fn mixed_problem_with_lower_half_dirichlet_converges() {
    let p = exp_problem(ExactField::RadiusSquared);
    let mut errors = Vec::new();
    for n in [2, 4] {
        let mesh = DomainMesh::cube(n).unwrap().with_partition(PartitionRule::LowerHalfDirichlet);
        let ev = PotentialEvaluator::new(&mesh, &p.coefficient, QuadOptions::default()).unwrap();
        let sys = BdieSystem::manufactured(&ev, &p).unwrap();
        let (sol, report) = sys.solve(&mesh, SolverKind::Lu).unwrap();
        assert!(report.relative_residual < 1e-10);
        errors.push(bdie::error_norms(&mesh, &sol, &p, &sys.data).u_l2_relative);
    }
    assert!(errors[1] < 0.5 * errors[0], "{errors:?}");
}

#[test]
fn linear_exact_solution_is_nearly_reproduced() {
    let p = exp_problem(ExactField::Linear {
        gradient: Vec3::new(0.3, -0.2, 1.0),
        offset: 0.5,
    });
    let mesh = DomainMesh::cube(4).unwrap();
    let ev = PotentialEvaluator::new(&mesh, &p.coefficient, QuadOptions::default()).unwrap();
    let sys = BdieSystem::manufactured(&ev, &p).unwrap();
    let (sol, _) = sys.solve(&mesh, SolverKind::gmres()).unwrap();
    let e = bdie::error_norms(&mesh, &sol, &p, &sys.data);
    assert!(e.u_l2_relative < 0.05, "{e:?}");
}

#[test]
fn representation_formula_reproduces_the_solution_inside() {
    let p = exp_problem(ExactField::X1Squared);
    let mesh = DomainMesh::cube(4).unwrap();
    let ev = PotentialEvaluator::new(&mesh, &p.coefficient, QuadOptions::default()).unwrap();
    let sys = BdieSystem::manufactured(&ev, &p).unwrap();
    let (sol, _) = sys.solve(&mesh, SolverKind::Lu).unwrap();
    let q = p.clone();
    let f = VolumeDensity::field(move |x| q.source_f(x));
    for y in [Vec3::new(0.5, 0.5, 0.5), Vec3::new(0.3, 0.6, 0.4)] {
        let u = bdie::representation_formula(&ev, &sol, &sys.data, Some(&f), &y).unwrap();
        assert!((u - y.x * y.x).abs() < 0.05, "{u} at {y:?}");
    }
}

#[test]
fn third_green_identity_holds_for_smooth_fields() {
    let mesh = DomainMesh::cube(4).unwrap();
    let p = ManufacturedProblem::new(
        "x1_squared",
        CoefficientField::preset(CoefficientPreset::Quadratic1pX1Sq),
        ExactField::X1Squared,
    );
    let ev = PotentialEvaluator::new(&mesh, &p.coefficient, QuadOptions::default()).unwrap();
    let r = bdie::third_green_residual(&ev, &p, &verify::interior_probes(&mesh)).unwrap();
    assert!(r < 2e-2, "{r}");
}

#[test]
fn system_dump_round_trips_through_text() {
    let mesh = DomainMesh::cube(1).unwrap();
    let p = exp_problem(ExactField::X1Squared);
    let ev = PotentialEvaluator::new(&mesh, &p.coefficient, QuadOptions::default()).unwrap();
    let sys = BdieSystem::manufactured(&ev, &p).unwrap();
    let mut buf = Vec::new();
    io::write_system(&sys.matrix, &sys.rhs, &mut buf).unwrap();
    let (m, rhs) = io::read_system(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(m, sys.matrix);
    for (a, b) in rhs.iter().zip(&sys.rhs) {
        assert_relative_eq!(*a, *b, max_relative = 1e-15);
    }
}

#[test]
fn assembly_is_deterministic() {
    let mesh = DomainMesh::cube(2).unwrap();
    let p = exp_problem(ExactField::X1Squared);
    let ev = PotentialEvaluator::new(&mesh, &p.coefficient, QuadOptions::default()).unwrap();
    let a = BdieSystem::manufactured(&ev, &p).unwrap();
    let b = BdieSystem::manufactured(&ev, &p).unwrap();
    assert_eq!(a.matrix, b.matrix);
    assert_eq!(a.rhs, b.rhs);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// The discrete solution depends linearly on the boundary data.
    #[test]
    fn solution_is_linear_in_the_data(s in -3.0_f64..3.0, c in -2.0_f64..2.0) {
        let mesh = DomainMesh::cube(2).unwrap();
        let a = CoefficientField::preset(CoefficientPreset::ExpX3);
        let ev = PotentialEvaluator::new(&mesh, &a, QuadOptions::default()).unwrap();
        let base = BoundaryData::from_problem(&mesh, &exp_problem(ExactField::X1Squared));
        let scaled = bdie::extend_boundary_data(
            &base.phi0.iter().map(|v| s * v + c).collect::<Vec<_>>(),
            &base.psi0.iter().map(|v| s * v).collect::<Vec<_>>(),
            &mesh,
        ).unwrap();
        let shift = bdie::extend_boundary_data(&vec![1.0; base.phi0.len()], &vec![0.0; base.psi0.len()], &mesh).unwrap();
        let solve = |d: BoundaryData| {
            let sys = BdieSystem::assemble(&ev, d, None).unwrap();
            let (sol, _) = sys.solve(&mesh, SolverKind::Lu).unwrap();
            sys.pack(&sol)
        };
        let x0 = solve(base);
        let x1 = solve(scaled);
        let xc = solve(shift);
        for i in 0..x0.len() {
            prop_assert!((x1[i] - (s * x0[i] + c * xc[i])).abs() < 1e-10 * (1.0 + x1[i].abs()));
        }
    }

    /// Unknowns partition exactly into interior vertices, Dirichlet panels and
    /// Neumann vertices off the interface.
    #[test]
    fn dof_map_partitions_the_mesh(n in 1_usize..4, rule in 0_usize..3) {
        let rule = [PartitionRule::BottomFaceDirichlet, PartitionRule::LowerHalfDirichlet, PartitionRule::AllNeumann][rule];
        let mesh = DomainMesh::cube(n).unwrap().with_partition(rule);
        let d = DofMap::new(&mesh);
        prop_assert_eq!(d.len(), d.interior.len() + d.psi_panels.len() + d.phi_vertices.len());
        for v in 0..mesh.vertices.len() {
            let carried = d.vertex_column(v).is_some();
            let expected = matches!(mesh.vertex_class[v], VertexClass::Interior | VertexClass::BoundaryNeumann);
            prop_assert_eq!(carried, expected);
        }
        prop_assert_eq!(d.psi_panels.len(), mesh.triangles_in(BoundaryPart::Dirichlet).count());
    }
}
