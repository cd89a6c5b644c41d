//! Property checks shared by the acceptance suite and the command-line
//! `verify` suites.

use crate::bdie::{self, BdieSystem, SolverKind};
use crate::coeff::ManufacturedProblem;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mesh::{DomainMesh, MeshKind};
use crate::quadrature::QuadOptions;
use crate::potentials::{
    BoundaryDensity, BoundaryPoint, PotentialEvaluator, Side, Support, SurfaceField, SurfaceFn, VolumeDensity,
};

/// One measured quantity against its tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

/// `n` nearly uniform unit vectors on a Fibonacci spiral.
pub fn fibonacci_directions(n: usize) -> Vec<Vec3> {
    let g = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let t = g * i as f64;
            Vec3::new(r * t.cos(), r * t.sin(), z)
        })
        .collect()
}

/// Panels whose centroids are nearest to `n` Fibonacci directions seen from
/// the mesh centre, deduplicated in order.
pub fn sample_panels(mesh: &DomainMesh, n: usize) -> Vec<usize> {
    let centre = mesh_centre(mesh);
    let mut out: Vec<usize> = Vec::with_capacity(n);
    for d in fibonacci_directions(n) {
        let target = centre + d;
        let t = (0..mesh.boundary_triangles.len())
            .min_by(|&i, &j| {
                let di = (mesh.triangle(i).centroid() - target).norm();
                let dj = (mesh.triangle(j).centroid() - target).norm();
                di.total_cmp(&dj)
            })
            .expect("non-empty boundary");
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

fn mesh_centre(mesh: &DomainMesh) -> Vec3 {
    match mesh.kind {
        MeshKind::Cube { .. } => Vec3::new(0.5, 0.5, 0.5),
        MeshKind::Sphere { .. } | MeshKind::Ball { .. } => Vec3::zeros(),
    }
}

/// Fixed interior probes: the 27 points of the grid `{1/4, 1/2, 3/4}³`,
/// shifted to the centre of the sphere and ball meshes.
pub fn interior_probes(mesh: &DomainMesh) -> Vec<Vec3> {
    let shift = mesh_centre(mesh) - Vec3::new(0.5, 0.5, 0.5);
    let c = [0.25, 0.5, 0.75];
    let mut p = Vec::with_capacity(27);
    for x in c {
        for y in c {
            for z in c {
                p.push(Vec3::new(x, y, z) + shift);
            }
        }
    }
    p
}

fn halton(i: usize, base: usize) -> f64 {
    let (mut f, mut r, mut i) = (1.0, 0.0, i);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Deterministic scattered interior points (Halton sequence, bases 2, 3, 5)
/// kept away from the boundary.
pub fn scattered_interior_points(mesh: &DomainMesh, n: usize) -> Vec<Vec3> {
    let centre = mesh_centre(mesh);
    (1..=n)
        .map(|i| {
            let h = Vec3::new(halton(i, 2), halton(i, 3), halton(i, 5)) - Vec3::new(0.5, 0.5, 0.5);
            centre + h * 0.8
        })
        .collect()
}

/// Deterministic scattered boundary points: panel and barycentric
/// coordinates from a Halton sequence.
pub fn scattered_boundary_points(mesh: &DomainMesh, n: usize) -> Vec<BoundaryPoint> {
    let nt = mesh.boundary_triangles.len();
    (1..=n)
        .map(|i| {
            let t = ((halton(i, 2) * nt as f64) as usize).min(nt - 1);
            let (mut l1, mut l2) = (0.05 + 0.85 * halton(i, 3), 0.05 + 0.85 * halton(i, 5));
            if l1 + l2 > 0.95 {
                (l1, l2) = (1.0 - l1, 1.0 - l2);
            }
            let tri = mesh.triangle(t);
            BoundaryPoint {
                x: tri.point([l1, l2, 1.0 - l1 - l2]),
                normal: mesh.triangle_normal[t],
                size: tri.diameter(),
            }
        })
        .collect()
}

/// Surface quadrature resolving the near field of the one-sided limit
/// samples, which sit a fraction of a panel off the boundary.
pub fn jump_quadrature() -> QuadOptions {
    QuadOptions {
        surface_regular: 6,
        near_ratio: 2.0,
        ..QuadOptions::default()
    }
}

/// Max relative errors of the four jump identities
/// `γ⁺Vψ - γ⁻Vψ = 0`, `γ⁺Wφ - γ⁻Wφ = -φ`, `T⁺Vψ - T⁻Vψ = ψ` and
/// `T⁺Wφ - T⁻Wφ = -(∂ₙa)φ` with `φ = x₃`, `ψ = 1`, at the centroids of
/// `samples` panels. Each error is scaled by the largest magnitude of the
/// matching reference quantity (`𝒱ψ`, `φ`, `ψ`, `(∂ₙa)φ`).
pub fn jump_errors(ev: &PotentialEvaluator, samples: usize) -> Result<[f64; 4]> {
    let mesh = ev.mesh;
    let a = ev.coeff;
    let phi = BoundaryDensity::nodal_from_fn(mesh, Support::All, |x| x.z);
    let psi = BoundaryDensity::panel_from_fn(mesh, Support::All, |_, _| 1.0);
    let mut err = [0.0_f64; 4];
    let mut scale = [0.0_f64, 0.0, 1.0, 0.0];
    for t in sample_panels(mesh, samples) {
        let y = BoundaryPoint::centroid(mesh, t);
        let ph = phi.eval(mesh, t, [1.0 / 3.0; 3]);
        let dna = a.normal_derivative(&y.x, &y.normal);

        let vp = ev.trace_single_layer(&psi, &y, Side::Interior)?.value;
        let vm = ev.trace_single_layer(&psi, &y, Side::Exterior)?.value;
        err[0] = err[0].max((vp - vm).abs());
        scale[0] = scale[0].max(ev.boundary_single_layer(&psi, &y).abs());

        let wp = ev.trace_double_layer(&phi, &y, Side::Interior)?.value;
        let wm = ev.trace_double_layer(&phi, &y, Side::Exterior)?.value;
        err[1] = err[1].max((wp - wm + ph).abs());
        scale[1] = scale[1].max(ph.abs());

        let tp = ev.conormal_single_layer(&psi, &y, Side::Interior)?.value;
        let tm = ev.conormal_single_layer(&psi, &y, Side::Exterior)?.value;
        err[2] = err[2].max((tp - tm - 1.0).abs());

        let sp = ev.one_sided_conormal_w(&phi, &y, Side::Interior)?.value;
        let sm = ev.one_sided_conormal_w(&phi, &y, Side::Exterior)?.value;
        err[3] = err[3].max((sp - sm + dna * ph).abs());
        scale[3] = scale[3].max((dna * ph).abs());
    }
    // A constant coefficient makes the last jump vanish: report it absolutely.
    let s3 = if scale[3] > 0.0 { scale[3] } else { 1.0 };
    Ok([err[0] / scale[0], err[1] / scale[1], err[2] / scale[2], err[3] / s3])
}

pub const JUMP_NAMES: [&str; 4] = [
    "jump_trace_single_layer",
    "jump_trace_double_layer",
    "jump_conormal_single_layer",
    "jump_conormal_double_layer",
];

/// Max over `probes` of `|1 + ℛ1 + W1|`.
pub fn green_constant_residual(ev: &PotentialEvaluator, probes: &[Vec3]) -> Result<f64> {
    let one = VolumeDensity::constant(1.0);
    let unit = SurfaceFn(|_, _: &Vec3| 1.0);
    let mut worst = 0.0_f64;
    for y in probes {
        let mut r = 1.0 + ev.double_layer(&unit, y)?;
        if ev.mesh.has_volume() {
            r += ev.remainder_potential(&one, y)?;
        } else if !ev.coeff.is_constant() {
            return Err(Error::invalid("a variable coefficient needs a volume mesh"));
        }
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Largest disagreement between the relation path and the direct-kernel path,
/// `(surface, volume)`, over `n` scattered points per operator. The volume
/// entry is `None` on boundary-only meshes.
pub fn relation_errors(ev: &PotentialEvaluator, n: usize) -> Result<(f64, Option<f64>)> {
    let mesh = ev.mesh;
    let rho = VolumeDensity::field(|x| 1.0 + x.x * x.y - x.z);
    let g = BoundaryDensity::nodal_from_fn(mesh, Support::All, |x| x.x - 2.0 * x.z * x.z + 0.5);
    let g: &dyn SurfaceField = &g;
    let mut vol = 0.0_f64;
    let mut surf = 0.0_f64;
    for y in scattered_interior_points(mesh, n) {
        if mesh.has_volume() {
            vol = vol.max(rel(ev.parametrix_newton_direct(&rho, &y)?, ev.parametrix_newton(&rho, &y)?));
            vol = vol.max(rel(ev.remainder_potential_direct(&rho, &y)?, ev.remainder_potential(&rho, &y)?));
        }
        surf = surf.max(rel(ev.single_layer_direct(g, &y)?, ev.single_layer(g, &y)?));
        surf = surf.max(rel(ev.double_layer_direct(g, &y)?, ev.double_layer(g, &y)?));
    }
    for bp in scattered_boundary_points(mesh, n) {
        surf = surf.max(rel(ev.boundary_single_layer_direct(g, &bp), ev.boundary_single_layer(g, &bp)));
        surf = surf.max(rel(ev.boundary_double_layer_direct(g, &bp), ev.boundary_double_layer(g, &bp)));
        surf = surf.max(rel(
            ev.boundary_adjoint_double_layer_direct(g, &bp),
            ev.boundary_adjoint_double_layer(g, &bp),
        ));
    }
    Ok((surf, mesh.has_volume().then_some(vol)))
}

/// For a constant coefficient: the largest deviation of the `u` columns of
/// the full system from the identity pattern, and the relative max
/// difference at interior vertices between the full solution and the
/// boundary-only solution followed by the representation `u = F₀ + Vψ - Wφ`.
pub fn reduction_errors(ev: &PotentialEvaluator, problem: &ManufacturedProblem) -> Result<(f64, f64)> {
    let mesh = ev.mesh;
    let full = BdieSystem::manufactured(ev, problem)?;
    let d = &full.dofs;
    let mut remainder = 0.0_f64;
    for i in 0..d.len() {
        for j in d.u_range() {
            let identity = if i == j { 1.0 } else { 0.0 };
            remainder = remainder.max((full.matrix[(i, j)] - identity).abs());
        }
    }
    let (fs, _) = full.solve(mesh, SolverKind::Lu)?;
    let q = problem.clone();
    let f = VolumeDensity::field(move |x| q.source_f(x));
    let bie = bdie::assemble_laplace_bie(ev, full.data.clone(), Some(&f))?;
    let (bs, _) = bie.solve(ev, Some(&f), SolverKind::Lu)?;
    let (mut diff, mut scale) = (0.0_f64, 0.0_f64);
    for &v in &d.interior {
        diff = diff.max((fs.u_values()[v] - bs.u_values()[v]).abs());
        scale = scale.max(fs.u_values()[v].abs());
    }
    let relative = if scale > 0.0 { diff / scale } else { diff };
    Ok((remainder, relative))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::CoefficientField;

    #[test]
    fn probes_lie_inside() {
        let cube = DomainMesh::cube(2).unwrap();
        assert!(interior_probes(&cube).iter().all(|p| p.min() > 0.0 && p.max() < 1.0));
        assert!(scattered_interior_points(&cube, 10).iter().all(|p| p.min() > 0.0 && p.max() < 1.0));
        let sphere = DomainMesh::sphere_boundary(2);
        assert!(interior_probes(&sphere).iter().all(|p| p.norm() < 0.5));
        assert!(scattered_interior_points(&sphere, 10).iter().all(|p| p.norm() < 0.75));
    }

    #[test]
    fn sample_panels_are_distinct_and_spread() {
        let mesh = DomainMesh::sphere_boundary(3);
        let p = sample_panels(&mesh, 20);
        assert_eq!(p.len(), 20);
        for d in fibonacci_directions(20) {
            assert!((d.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn scattered_boundary_points_lie_on_their_panels() {
        let mesh = DomainMesh::cube(2).unwrap();
        for bp in scattered_boundary_points(&mesh, 10) {
            assert!(mesh.boundary_triangles.iter().enumerate().any(|(t, _)| mesh.triangle(t).distance(&bp.x) < 1e-14));
        }
    }

    #[test]
    fn green_residual_needs_volume_for_variable_coefficient() {
        let mesh = DomainMesh::sphere_boundary(1);
        let a = CoefficientField::linear_x3(0.5);
        let ev = PotentialEvaluator::new(&mesh, &a, QuadOptions::default()).unwrap();
        assert!(green_constant_residual(&ev, &interior_probes(&mesh)).is_err());
    }
}
