//! The segregated mixed BDIE system and its post-processing.
//!
//! Unknowns are `u` at interior mesh vertices, `ψ` (piecewise constant) on
//! Dirichlet panels and `φ` (piecewise linear, zero at the interface) at
//! Neumann vertices. The boundary trace of `u` is `Φ₀ + φ` and its conormal
//! derivative `Ψ₀ + ψ`, with `Φ₀`, `Ψ₀` the zero extensions of the data.
//!
//! Row blocks:
//!
//! ```text
//! interior vertex y:   u + ℛu - Vψ + Wφ            = F₀ - ℛΦ₀
//! boundary point y:    c φ + γ⁺ℛu - 𝒱ψ + 𝒲φ        = γ⁺F₀ - Φ₀ - γ⁺ℛΦ₀
//! F₀ = 𝒫f + VΨ₀ - WΦ₀,   γ⁺F₀ = 𝒫f + 𝒱Ψ₀ + (1 - c)Φ₀ - 𝒲Φ₀
//! ```
//!
//! where `c(y) = -𝒲_Δ1(y)` is the free term (one half at smooth points)
//! and `ℛΦ₀` acts on the piecewise-linear lift of `Φ₀`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::coeff::ManufacturedProblem;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::linalg::{self, DenseMatrix};
use crate::mesh::{BoundaryPart, DomainMesh, VertexClass};
use crate::potentials::{
    BoundaryDensity, BoundaryPoint, DensityKind, PotentialEvaluator, Support, SurfaceFn, VolumeDensity,
};
use crate::quadrature::gauss_tet;

const FOUR_PI: f64 = 4.0 * PI;

/// Where one equation is collocated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Collocation {
    /// Interior mesh vertex (first equation).
    Interior(usize),
    /// Centroid of a Dirichlet panel (second equation).
    DirichletPanel(usize),
    /// Neumann vertex off the interface (second equation).
    NeumannVertex(usize),
}

/// Unknown numbering: `u` block, then `ψ`, then `φ`. Equation `i` is
/// collocated at the point paired with unknown `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub interior: Vec<usize>,
    pub psi_panels: Vec<usize>,
    pub phi_vertices: Vec<usize>,
    u_of_vertex: Vec<Option<usize>>,
    phi_of_vertex: Vec<Option<usize>>,
    psi_of_panel: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(mesh: &DomainMesh) -> Self {
        let interior: Vec<usize> = mesh.vertices_of_class(VertexClass::Interior).collect();
        let psi_panels: Vec<usize> = mesh.triangles_in(BoundaryPart::Dirichlet).collect();
        let phi_vertices: Vec<usize> = mesh.vertices_of_class(VertexClass::BoundaryNeumann).collect();
        let mut u_of_vertex = vec![None; mesh.vertices.len()];
        let mut phi_of_vertex = vec![None; mesh.vertices.len()];
        let mut psi_of_panel = vec![None; mesh.boundary_triangles.len()];
        let (nu, npsi) = (interior.len(), psi_panels.len());
        for (i, &v) in interior.iter().enumerate() {
            u_of_vertex[v] = Some(i);
        }
        for (i, &t) in psi_panels.iter().enumerate() {
            psi_of_panel[t] = Some(nu + i);
        }
        for (i, &v) in phi_vertices.iter().enumerate() {
            phi_of_vertex[v] = Some(nu + npsi + i);
        }
        Self {
            interior,
            psi_panels,
            phi_vertices,
            u_of_vertex,
            phi_of_vertex,
            psi_of_panel,
        }
    }

    pub fn len(&self) -> usize {
        self.interior.len() + self.psi_panels.len() + self.phi_vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn u_range(&self) -> std::ops::Range<usize> {
        0..self.interior.len()
    }

    pub fn psi_range(&self) -> std::ops::Range<usize> {
        let s = self.interior.len();
        s..s + self.psi_panels.len()
    }

    pub fn phi_range(&self) -> std::ops::Range<usize> {
        let s = self.interior.len() + self.psi_panels.len();
        s..s + self.phi_vertices.len()
    }

    /// Column of the unknown carried by a mesh vertex (`u` or `φ`), if any.
    pub fn vertex_column(&self, v: usize) -> Option<usize> {
        self.u_of_vertex[v].or(self.phi_of_vertex[v])
    }

    pub fn phi_column(&self, v: usize) -> Option<usize> {
        self.phi_of_vertex[v]
    }

    pub fn psi_column(&self, t: usize) -> Option<usize> {
        self.psi_of_panel[t]
    }

    pub fn collocation(&self, i: usize) -> Collocation {
        let (nu, npsi) = (self.interior.len(), self.psi_panels.len());
        if i < nu {
            Collocation::Interior(self.interior[i])
        } else if i < nu + npsi {
            Collocation::DirichletPanel(self.psi_panels[i - nu])
        } else {
            Collocation::NeumannVertex(self.phi_vertices[i - nu - npsi])
        }
    }
}

/// Dirichlet and Neumann data with their zero extensions to the whole
/// boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData {
    /// `φ₀` at the Dirichlet-part vertices (interface included), ascending
    /// vertex order.
    pub phi0: Vec<f64>,
    /// `ψ₀` on the Neumann panels, ascending triangle order.
    pub psi0: Vec<f64>,
    pub phi0_ext: BoundaryDensity,
    pub psi0_ext: BoundaryDensity,
}

fn dirichlet_vertices(mesh: &DomainMesh) -> Vec<usize> {
    (0..mesh.vertices.len())
        .filter(|&v| {
            matches!(
                mesh.vertex_class[v],
                VertexClass::BoundaryDirichlet | VertexClass::Interface
            )
        })
        .collect()
}

/// Extends `φ₀` and `ψ₀` by zero to the whole boundary.
pub fn extend_boundary_data(phi0: &[f64], psi0: &[f64], mesh: &DomainMesh) -> Result<BoundaryData> {
    let dv = dirichlet_vertices(mesh);
    let np: Vec<usize> = mesh.triangles_in(BoundaryPart::Neumann).collect();
    if phi0.len() != dv.len() {
        return Err(Error::invalid(format!(
            "phi0 has {} values, the Dirichlet part has {} vertices",
            phi0.len(),
            dv.len()
        )));
    }
    if psi0.len() != np.len() {
        return Err(Error::invalid(format!(
            "psi0 has {} values, the Neumann part has {} panels",
            psi0.len(),
            np.len()
        )));
    }
    let mut nodal = vec![0.0; mesh.vertices.len()];
    for (&v, &g) in dv.iter().zip(phi0) {
        nodal[v] = g;
    }
    let mut panel = vec![0.0; mesh.boundary_triangles.len()];
    for (&t, &g) in np.iter().zip(psi0) {
        panel[t] = g;
    }
    Ok(BoundaryData {
        phi0: phi0.to_vec(),
        psi0: psi0.to_vec(),
        phi0_ext: BoundaryDensity::new(mesh, DensityKind::Nodal, Support::Dirichlet, nodal)?,
        psi0_ext: BoundaryDensity::new(mesh, DensityKind::Panel, Support::Neumann, panel)?,
    })
}

impl BoundaryData {
    pub fn zero(mesh: &DomainMesh) -> Self {
        let nd = dirichlet_vertices(mesh).len();
        let nn = mesh.triangles_in(BoundaryPart::Neumann).count();
        extend_boundary_data(&vec![0.0; nd], &vec![0.0; nn], mesh).expect("consistent sizes")
    }

    /// Data of a manufactured problem: `u` at Dirichlet vertices, `a ∂ₙu` at
    /// Neumann panel centroids.
    pub fn from_problem(mesh: &DomainMesh, problem: &ManufacturedProblem) -> Self {
        let phi0: Vec<f64> = dirichlet_vertices(mesh)
            .iter()
            .map(|&v| problem.exact_u(&mesh.vertices[v]))
            .collect();
        let psi0: Vec<f64> = mesh
            .triangles_in(BoundaryPart::Neumann)
            .map(|t| problem.conormal_derivative(&mesh.triangle(t).centroid(), &mesh.triangle_normal[t]))
            .collect();
        extend_boundary_data(&phi0, &psi0, mesh).expect("consistent sizes")
    }

    /// Restriction of `Φ₀` to the Dirichlet part.
    pub fn restrict_phi0(&self, mesh: &DomainMesh) -> Vec<f64> {
        dirichlet_vertices(mesh)
            .iter()
            .map(|&v| self.phi0_ext.values[v])
            .collect()
    }

    fn lift(&self) -> VolumeDensity {
        VolumeDensity::Nodal(self.phi0_ext.values.clone())
    }
}

/// `F₀` at the interior collocation points and `γ⁺F₀` at the boundary ones.
#[derive(Debug, Clone, PartialEq)]
pub struct F0Values {
    pub interior: Vec<f64>,
    pub trace: Vec<f64>,
}

/// `F₀(y) = 𝒫f(y) + VΨ₀(y) - WΦ₀(y)` at a point off the boundary; `f = None`
/// means `f ≡ 0`.
pub fn f0_at(ev: &PotentialEvaluator, f: Option<&VolumeDensity>, data: &BoundaryData, y: &Vec3) -> Result<f64> {
    let mut v = ev.single_layer(&data.psi0_ext, y)? - ev.double_layer(&data.phi0_ext, y)?;
    if let Some(f) = f {
        v += ev.parametrix_newton(f, y)?;
    }
    Ok(v)
}

/// Free term `c(y) = -𝒲_Δ1(y)`.
pub fn free_term(ev: &PotentialEvaluator, y: &BoundaryPoint) -> f64 {
    -ev.boundary_double_layer_laplace(&SurfaceFn(|_, _: &Vec3| 1.0), y)
}

/// `γ⁺F₀(y) = 𝒫f(y) + 𝒱Ψ₀(y) + (1 - c(y))Φ₀(y) - 𝒲Φ₀(y)`.
pub fn f0_trace_at(
    ev: &PotentialEvaluator,
    f: Option<&VolumeDensity>,
    data: &BoundaryData,
    y: &BoundaryPoint,
    phi0_at_y: f64,
) -> Result<f64> {
    let c = free_term(ev, y);
    let mut v = ev.boundary_single_layer(&data.psi0_ext, y) + (1.0 - c) * phi0_at_y
        - ev.boundary_double_layer(&data.phi0_ext, y);
    if let Some(f) = f {
        v += ev.parametrix_newton(f, &y.x)?;
    }
    Ok(v)
}

fn boundary_point(mesh: &DomainMesh, c: Collocation) -> Option<BoundaryPoint> {
    match c {
        Collocation::Interior(_) => None,
        Collocation::DirichletPanel(t) => Some(BoundaryPoint::centroid(mesh, t)),
        Collocation::NeumannVertex(v) => Some(BoundaryPoint::vertex(mesh, v)),
    }
}

fn collocation_point(mesh: &DomainMesh, c: Collocation) -> Vec3 {
    match c {
        Collocation::Interior(v) | Collocation::NeumannVertex(v) => mesh.vertices[v],
        Collocation::DirichletPanel(t) => mesh.triangle(t).centroid(),
    }
}

/// Value at a collocation point of a nodal boundary density.
fn nodal_at(mesh: &DomainMesh, g: &BoundaryDensity, c: Collocation) -> f64 {
    match c {
        Collocation::Interior(_) => 0.0,
        Collocation::NeumannVertex(v) => g.values[v],
        Collocation::DirichletPanel(t) => g.eval(mesh, t, [1.0 / 3.0; 3]),
    }
}

/// `F₀` and `γ⁺F₀` at every collocation point.
pub fn assemble_rhs_f0(
    ev: &PotentialEvaluator,
    f: Option<&VolumeDensity>,
    data: &BoundaryData,
    dofs: &DofMap,
) -> Result<F0Values> {
    let mesh = ev.mesh;
    let values: Vec<f64> = (0..dofs.len())
        .into_par_iter()
        .map(|i| {
            let c = dofs.collocation(i);
            match boundary_point(mesh, c) {
                None => f0_at(ev, f, data, &collocation_point(mesh, c)),
                Some(bp) => f0_trace_at(ev, f, data, &bp, nodal_at(mesh, &data.phi0_ext, c)),
            }
        })
        .collect::<Result<_>>()?;
    let nu = dofs.interior.len();
    Ok(F0Values {
        interior: values[..nu].to_vec(),
        trace: values[nu..].to_vec(),
    })
}

/// One row of the system matrix, and the free term for boundary rows.
fn assemble_row(ev: &PotentialEvaluator, dofs: &DofMap, i: usize) -> (Vec<f64>, f64) {
    let mesh = ev.mesh;
    let coeff = ev.coeff;
    let c = dofs.collocation(i);
    let y = collocation_point(mesh, c);
    let mut row = vec![0.0; dofs.len()];
    let variable = !coeff.is_constant();

    let mut dl_one = 0.0;
    ev.surface_nodes_flagged(&y, &mut |t, x, b, w, contains| {
        let d = x - y;
        let r = d.norm();
        let n = mesh.triangle_normal[t];
        let sl = w / (FOUR_PI * r);
        if let Some(j) = dofs.psi_column(t) {
            row[j] -= sl / coeff.value(x);
        }
        let dl = if contains { 0.0 } else { -w * n.dot(&d) / (FOUR_PI * r * r * r) };
        dl_one += dl;
        let kw = if variable { dl - sl * coeff.normal_derivative_log(x, &n) } else { dl };
        for (m, &v) in mesh.boundary_triangles[t].iter().enumerate() {
            if let Some(j) = dofs.phi_column(v) {
                row[j] += kw * b[m];
            }
        }
    });

    if variable {
        ev.volume_nodes(&y, &mut |k, x, b, w| {
            let d = x - y;
            let r = d.norm();
            let grad_y_p = -d / (FOUR_PI * r * r * r);
            let newton = -1.0 / (FOUR_PI * r);
            let kr = w * (grad_y_p.dot(&coeff.grad_log(x)) - newton * coeff.laplacian_log(x));
            for (m, &v) in mesh.tetrahedra[k].iter().enumerate() {
                if let Some(j) = dofs.vertex_column(v) {
                    row[j] += kr * b[m];
                }
            }
        });
    }

    let free = match c {
        Collocation::Interior(_) => {
            row[i] += 1.0;
            0.0
        }
        Collocation::DirichletPanel(_) => -dl_one,
        Collocation::NeumannVertex(_) => {
            row[i] += -dl_one;
            -dl_one
        }
    };
    (row, free)
}

/// The system matrix alone, with its numbering and the free terms of the
/// second-equation rows.
pub fn assemble_m12(ev: &PotentialEvaluator) -> Result<(DenseMatrix, DofMap, Vec<f64>)> {
    let mesh = ev.mesh;
    if !mesh.has_volume() {
        return Err(Error::invalid("the BDIE system needs a volume mesh"));
    }
    let dofs = DofMap::new(mesh);
    let n = dofs.len();
    let rows: Vec<(Vec<f64>, f64)> = (0..n).into_par_iter().map(|i| assemble_row(ev, &dofs, i)).collect();
    let mut data = Vec::with_capacity(n * n);
    let mut free = Vec::with_capacity(n - dofs.interior.len());
    for (i, (row, c)) in rows.into_iter().enumerate() {
        data.extend(row);
        if i >= dofs.interior.len() {
            free.push(c);
        }
    }
    Ok((DenseMatrix::from_row_major(n, n, data)?, dofs, free))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    Lu,
    Gmres { tol: f64, max_iter: usize },
}

impl SolverKind {
    pub fn gmres() -> Self {
        SolverKind::Gmres {
            tol: 1e-10,
            max_iter: 2000,
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverKind::Lu => f.write_str("lu"),
            SolverKind::Gmres { .. } => f.write_str("gmres"),
        }
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lu" => Ok(SolverKind::Lu),
            "gmres" => Ok(SolverKind::gmres()),
            other => Err(Error::config("solver", format!("unknown solver `{other}` (expected lu or gmres)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solver: SolverKind,
    /// `‖Mx - F‖∞ / ‖F‖∞` (zero for a zero right-hand side and solution).
    pub relative_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// The discrete triple `(u, ψ, φ)`; `u` holds nodal values at every mesh
/// vertex, boundary ones reconstructed as `Φ₀ + φ`.
#[derive(Debug, Clone)]
pub struct SolutionTriple {
    pub u: VolumeDensity,
    pub psi: BoundaryDensity,
    pub phi: BoundaryDensity,
}

impl SolutionTriple {
    pub fn u_values(&self) -> &[f64] {
        match &self.u {
            VolumeDensity::Nodal(v) => v,
            VolumeDensity::Field(_) => unreachable!("solution triples are nodal"),
        }
    }
}

/// Full Cauchy data on the boundary: `γ⁺u = Φ₀ + φ`, `T⁺u = Ψ₀ + ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CauchyData {
    pub trace: BoundaryDensity,
    pub conormal: BoundaryDensity,
}

pub fn recover_cauchy_data(sol: &SolutionTriple, data: &BoundaryData) -> CauchyData {
    let add = |a: &BoundaryDensity, b: &BoundaryDensity| -> Vec<f64> {
        a.values.iter().zip(&b.values).map(|(x, y)| x + y).collect()
    };
    CauchyData {
        trace: BoundaryDensity {
            kind: DensityKind::Nodal,
            support: Support::All,
            values: add(&data.phi0_ext, &sol.phi),
        },
        conormal: BoundaryDensity {
            kind: DensityKind::Panel,
            support: Support::All,
            values: add(&data.psi0_ext, &sol.psi),
        },
    }
}

/// The assembled system `M X = F`.
#[derive(Debug, Clone)]
pub struct BdieSystem {
    pub matrix: DenseMatrix,
    pub rhs: Vec<f64>,
    pub dofs: DofMap,
    pub data: BoundaryData,
    pub f0: F0Values,
    /// Free term at each second-equation collocation point.
    pub free_term: Vec<f64>,
}

impl BdieSystem {
    pub fn assemble(ev: &PotentialEvaluator, data: BoundaryData, f: Option<&VolumeDensity>) -> Result<Self> {
        let (matrix, dofs, free) = assemble_m12(ev)?;
        let f0 = assemble_rhs_f0(ev, f, &data, &dofs)?;
        let mesh = ev.mesh;
        let lift = data.lift();
        let has_lift = !ev.coeff.is_constant() && data.phi0_ext.values.iter().any(|&v| v != 0.0);
        let nu = dofs.interior.len();
        let rhs: Vec<f64> = (0..dofs.len())
            .into_par_iter()
            .map(|i| {
                let c = dofs.collocation(i);
                let y = collocation_point(mesh, c);
                let r_lift = if has_lift { ev.remainder_potential(&lift, &y)? } else { 0.0 };
                Ok(match c {
                    Collocation::Interior(_) => f0.interior[i] - r_lift,
                    _ => f0.trace[i - nu] - nodal_at(mesh, &data.phi0_ext, c) - r_lift,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            matrix,
            rhs,
            dofs,
            data,
            f0,
            free_term: free,
        })
    }

    /// Builds the manufactured system: data from the exact solution and the
    /// source `f = div(a grad u)`.
    pub fn manufactured(ev: &PotentialEvaluator, problem: &ManufacturedProblem) -> Result<Self> {
        let data = BoundaryData::from_problem(ev.mesh, problem);
        let p = problem.clone();
        let f = VolumeDensity::field(move |x| p.source_f(x));
        Self::assemble(ev, data, Some(&f))
    }

    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhs.is_empty()
    }

    /// `‖M x - F‖∞`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let mx = self.matrix.matvec(x);
        mx.iter().zip(&self.rhs).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn solve(&self, mesh: &DomainMesh, solver: SolverKind) -> Result<(SolutionTriple, SolveReport)> {
        let (x, iterations, converged) = match solver {
            SolverKind::Lu => (linalg::lu_solve(&self.matrix, &self.rhs)?, 1, true),
            SolverKind::Gmres { tol, max_iter } => {
                let out = linalg::gmres_solve(&self.matrix, &self.rhs, tol, max_iter)?;
                (out.x, out.iterations, out.converged)
            }
        };
        let res = self.residual(&x);
        let scale = linalg::norm_inf(&self.rhs);
        let report = SolveReport {
            solver,
            relative_residual: if scale > 0.0 { res / scale } else { res },
            iterations,
            converged,
        };
        Ok((self.unpack(mesh, &x), report))
    }

    pub fn unpack(&self, mesh: &DomainMesh, x: &[f64]) -> SolutionTriple {
        let d = &self.dofs;
        let mut u = self.data.phi0_ext.values.clone();
        let mut phi = vec![0.0; mesh.vertices.len()];
        let mut psi = vec![0.0; mesh.boundary_triangles.len()];
        for (k, &v) in d.interior.iter().enumerate() {
            u[v] = x[k];
        }
        for (k, &t) in d.psi_panels.iter().enumerate() {
            psi[t] = x[d.psi_range().start + k];
        }
        for (k, &v) in d.phi_vertices.iter().enumerate() {
            phi[v] = x[d.phi_range().start + k];
            u[v] += phi[v];
        }
        SolutionTriple {
            u: VolumeDensity::Nodal(u),
            psi: BoundaryDensity {
                kind: DensityKind::Panel,
                support: Support::Dirichlet,
                values: psi,
            },
            phi: BoundaryDensity {
                kind: DensityKind::Nodal,
                support: Support::Neumann,
                values: phi,
            },
        }
    }

    /// Unknown vector of a triple.
    pub fn pack(&self, sol: &SolutionTriple) -> Vec<f64> {
        let d = &self.dofs;
        let u = sol.u_values();
        d.interior
            .iter()
            .map(|&v| u[v])
            .chain(d.psi_panels.iter().map(|&t| sol.psi.values[t]))
            .chain(d.phi_vertices.iter().map(|&v| sol.phi.values[v]))
            .collect()
    }
}

/// Interpolant of the exact triple: `u` at vertices, `ψ = T⁺u - Ψ₀` at
/// Dirichlet panel centroids, `φ = γ⁺u - Φ₀` at Neumann vertices.
pub fn exact_triple(mesh: &DomainMesh, problem: &ManufacturedProblem, data: &BoundaryData) -> SolutionTriple {
    let u: Vec<f64> = mesh.vertices.iter().map(|x| problem.exact_u(x)).collect();
    let psi = BoundaryDensity::panel_from_fn(mesh, Support::Dirichlet, |t, x| {
        problem.conormal_derivative(x, &mesh.triangle_normal[t]) - data.psi0_ext.values[t]
    });
    let mut phi = BoundaryDensity::nodal_from_fn(mesh, Support::Neumann, |x| problem.exact_u(x));
    for (v, p) in phi.values.iter_mut().enumerate() {
        *p -= if *p != 0.0 { data.phi0_ext.values[v] } else { 0.0 };
    }
    SolutionTriple {
        u: VolumeDensity::Nodal(u),
        psi,
        phi,
    }
}

/// `u(y) = 𝒫f(y) - ℛu(y) + V(T⁺u)(y) - W(γ⁺u)(y)` at a point inside the
/// domain, with the discrete `u` and the recovered Cauchy data.
pub fn representation_formula(
    ev: &PotentialEvaluator,
    sol: &SolutionTriple,
    data: &BoundaryData,
    f: Option<&VolumeDensity>,
    y: &Vec3,
) -> Result<f64> {
    let one = SurfaceFn(|_, _: &Vec3| 1.0);
    if ev.double_layer_laplace(&one, y)? > -0.5 {
        return Err(Error::invalid("representation point lies outside the domain"));
    }
    let cauchy = recover_cauchy_data(sol, data);
    let mut v = ev.single_layer(&cauchy.conormal, y)? - ev.double_layer(&cauchy.trace, y)?;
    if ev.mesh.has_volume() {
        v -= ev.remainder_potential(&sol.u, y)?;
        if let Some(f) = f {
            v += ev.parametrix_newton(f, y)?;
        }
    }
    Ok(v)
}

/// Max over `probes` of `|u + ℛu - V T⁺u + W γ⁺u - 𝒫(Au)|` for a smooth
/// closed-form `u`.
pub fn third_green_residual(ev: &PotentialEvaluator, problem: &ManufacturedProblem, probes: &[Vec3]) -> Result<f64> {
    let mesh = ev.mesh;
    let p1 = problem.clone();
    let p2 = problem.clone();
    let u = VolumeDensity::field(move |x| p1.exact_u(x));
    let au = VolumeDensity::field(move |x| p2.source_f(x));
    let trace = SurfaceFn(|_, x: &Vec3| problem.exact_u(x));
    let conormal = SurfaceFn(|t, x: &Vec3| problem.conormal_derivative(x, &mesh.triangle_normal[t]));
    probes
        .par_iter()
        .map(|y| {
            let mut r = problem.exact_u(y) - ev.single_layer(&conormal, y)? + ev.double_layer(&trace, y)?;
            if mesh.has_volume() {
                r += ev.remainder_potential(&u, y)? - ev.parametrix_newton(&au, y)?;
            }
            Ok(r.abs())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// The boundary-only system of the constant-coefficient case: the `ψ`, `φ`
/// rows and columns of the full system.
#[derive(Debug, Clone)]
pub struct LaplaceBie {
    pub matrix: DenseMatrix,
    pub rhs: Vec<f64>,
    pub dofs: DofMap,
    pub data: BoundaryData,
}

pub fn assemble_laplace_bie(ev: &PotentialEvaluator, data: BoundaryData, f: Option<&VolumeDensity>) -> Result<LaplaceBie> {
    if !ev.coeff.is_constant() {
        return Err(Error::invalid("the boundary-only reduction needs a constant coefficient"));
    }
    let mesh = ev.mesh;
    let dofs = DofMap::new(mesh);
    let nu = dofs.interior.len();
    let nb = dofs.len() - nu;
    let rows: Vec<(Vec<f64>, f64)> = (nu..dofs.len())
        .into_par_iter()
        .map(|i| {
            let (row, _) = assemble_row(ev, &dofs, i);
            let c = dofs.collocation(i);
            let bp = boundary_point(mesh, c).expect("boundary collocation");
            let phi0 = nodal_at(mesh, &data.phi0_ext, c);
            let g = f0_trace_at(ev, f, &data, &bp, phi0)? - phi0;
            Ok((row[nu..].to_vec(), g))
        })
        .collect::<Result<_>>()?;
    let mut m = Vec::with_capacity(nb * nb);
    let mut rhs = Vec::with_capacity(nb);
    for (row, g) in rows {
        m.extend(row);
        rhs.push(g);
    }
    Ok(LaplaceBie {
        matrix: DenseMatrix::from_row_major(nb, nb, m)?,
        rhs,
        dofs,
        data,
    })
}

impl LaplaceBie {
    /// Solves for `(ψ, φ)` and evaluates `u = F₀ + Vψ - Wφ` at the interior
    /// vertices.
    pub fn solve(
        &self,
        ev: &PotentialEvaluator,
        f: Option<&VolumeDensity>,
        solver: SolverKind,
    ) -> Result<(SolutionTriple, SolveReport)> {
        let (xb, iterations, converged) = match solver {
            SolverKind::Lu => (linalg::lu_solve(&self.matrix, &self.rhs)?, 1, true),
            SolverKind::Gmres { tol, max_iter } => {
                let out = linalg::gmres_solve(&self.matrix, &self.rhs, tol, max_iter)?;
                (out.x, out.iterations, out.converged)
            }
        };
        let res = self
            .matrix
            .matvec(&xb)
            .iter()
            .zip(&self.rhs)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = linalg::norm_inf(&self.rhs);
        let report = SolveReport {
            solver,
            relative_residual: if scale > 0.0 { res / scale } else { res },
            iterations,
            converged,
        };
        let mesh = ev.mesh;
        let d = &self.dofs;
        let mut psi = vec![0.0; mesh.boundary_triangles.len()];
        let mut phi = vec![0.0; mesh.vertices.len()];
        for (k, &t) in d.psi_panels.iter().enumerate() {
            psi[t] = xb[k];
        }
        for (k, &v) in d.phi_vertices.iter().enumerate() {
            phi[v] = xb[d.psi_panels.len() + k];
        }
        let psi = BoundaryDensity::new(mesh, DensityKind::Panel, Support::Dirichlet, psi)?;
        let phi = BoundaryDensity::new(mesh, DensityKind::Nodal, Support::Neumann, phi)?;
        let interior: Vec<f64> = d
            .interior
            .par_iter()
            .map(|&v| {
                let y = mesh.vertices[v];
                Ok(f0_at(ev, f, &self.data, &y)? + ev.single_layer(&psi, &y)? - ev.double_layer(&phi, &y)?)
            })
            .collect::<Result<_>>()?;
        let mut u = self.data.phi0_ext.values.clone();
        for (k, &v) in d.interior.iter().enumerate() {
            u[v] = interior[k];
        }
        for &v in &d.phi_vertices {
            u[v] += phi.values[v];
        }
        let sol = SolutionTriple {
            u: VolumeDensity::Nodal(u),
            psi,
            phi,
        };
        Ok((sol, report))
    }
}

/// Errors of a discrete solution against a manufactured one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub u_l2: f64,
    pub u_l2_relative: f64,
    /// Max nodal error of `u` over all vertices.
    pub u_max: f64,
    /// `L²` error of `ψ` over the Dirichlet part.
    pub psi_l2: f64,
    /// `L²` error of `φ` over the Neumann part.
    pub phi_l2: f64,
}

pub fn error_norms(
    mesh: &DomainMesh,
    sol: &SolutionTriple,
    problem: &ManufacturedProblem,
    data: &BoundaryData,
) -> ErrorNorms {
    let rule = gauss_tet(4).expect("supported order");
    let u = sol.u_values();
    let (mut e2, mut n2) = (0.0, 0.0);
    for (k, tet_v) in mesh.tetrahedra.iter().enumerate() {
        let tet = mesh.tet(k);
        let jac = 6.0 * tet.volume();
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let x = tet.point(*b);
            let uh: f64 = (0..4).map(|m| b[m] * u[tet_v[m]]).sum();
            let ue = problem.exact_u(&x);
            e2 += w * jac * (uh - ue).powi(2);
            n2 += w * jac * ue * ue;
        }
    }
    let u_max = mesh
        .vertices
        .iter()
        .zip(u)
        .fold(0.0_f64, |m, (x, v)| m.max((v - problem.exact_u(x)).abs()));
    let exact = exact_triple(mesh, problem, data);
    let tri_rule = crate::quadrature::gauss_triangle(4).expect("supported order");
    let (mut psi2, mut phi2) = (0.0, 0.0);
    for t in 0..mesh.boundary_triangles.len() {
        let jac = 2.0 * mesh.triangle_area[t];
        match mesh.triangle_part[t] {
            BoundaryPart::Dirichlet => psi2 += jac * 0.5 * (sol.psi.values[t] - exact.psi.values[t]).powi(2),
            BoundaryPart::Neumann => {
                for (b, w) in tri_rule.points.iter().zip(&tri_rule.weights) {
                    let d = sol.phi.eval(mesh, t, *b) - exact.phi.eval(mesh, t, *b);
                    phi2 += w * jac * d * d;
                }
            }
        }
    }
    ErrorNorms {
        u_l2: e2.sqrt(),
        u_l2_relative: if n2 > 0.0 { (e2 / n2).sqrt() } else { e2.sqrt() },
        u_max,
        psi_l2: psi2.sqrt(),
        phi_l2: phi2.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{CoefficientField, CoefficientPreset, ExactField};
    use crate::mesh::PartitionRule;
    use crate::quadrature::QuadOptions;

    fn manufactured() -> ManufacturedProblem {
        ManufacturedProblem::new(
            "x1_squared",
            CoefficientField::preset(CoefficientPreset::ExpX3),
            ExactField::X1Squared,
        )
    }

    #[test]
    fn dof_counts() {
        let mesh = DomainMesh::cube(1).unwrap();
        let d = DofMap::new(&mesh);
        assert_eq!((d.interior.len(), d.psi_panels.len(), d.phi_vertices.len()), (0, 2, 4));
        let mesh = DomainMesh::cube(8).unwrap();
        let d = DofMap::new(&mesh);
        assert_eq!((d.interior.len(), d.psi_panels.len(), d.phi_vertices.len()), (343, 128, 305));
        assert_eq!(d.collocation(343), Collocation::DirichletPanel(d.psi_panels[0]));
    }

    #[test]
    fn extension_examples() {
        let mesh = DomainMesh::cube(2).unwrap();
        let z = BoundaryData::zero(&mesh);
        assert!(z.phi0_ext.values.iter().chain(&z.psi0_ext.values).all(|&v| v == 0.0));
        let p = manufactured();
        let data = BoundaryData::from_problem(&mesh, &p);
        for (v, x) in mesh.vertices.iter().enumerate() {
            let expected = match mesh.vertex_class[v] {
                VertexClass::BoundaryDirichlet | VertexClass::Interface => x.x * x.x,
                _ => 0.0,
            };
            assert_eq!(data.phi0_ext.values[v], expected);
        }
        assert_eq!(data.restrict_phi0(&mesh), data.phi0);
        assert!(extend_boundary_data(&[1.0], &[], &mesh).is_err());
    }

    #[test]
    fn constant_coefficient_has_no_remainder_blocks() {
        let mesh = DomainMesh::cube(2).unwrap();
        let one = CoefficientField::constant(1.0);
        let ev = PotentialEvaluator::new(&mesh, &one, QuadOptions::default()).unwrap();
        let (m, d, _) = assemble_m12(&ev).unwrap();
        for i in d.u_range() {
            for j in d.u_range() {
                assert_eq!(m[(i, j)], if i == j { 1.0 } else { 0.0 });
            }
        }
        for i in d.psi_range().chain(d.phi_range()) {
            for j in d.u_range() {
                assert!(m[(i, j)].abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn single_cell_cube_is_boundary_only_and_square() {
        let mesh = DomainMesh::cube(1).unwrap();
        let a = CoefficientField::preset(CoefficientPreset::ExpX3);
        let ev = PotentialEvaluator::new(&mesh, &a, QuadOptions::default()).unwrap();
        let sys = BdieSystem::manufactured(&ev, &manufactured()).unwrap();
        assert_eq!(sys.matrix.rows(), 6);
        assert!(sys.matrix.is_square() && sys.matrix.all_finite());
    }

    #[test]
    fn free_term_is_one_half_on_faces() {
        let mesh = DomainMesh::cube(2).unwrap();
        let one = CoefficientField::constant(1.0);
        let ev = PotentialEvaluator::new(&mesh, &one, QuadOptions::default()).unwrap();
        let (_, d, free) = assemble_m12(&ev).unwrap();
        for (k, c) in free.iter().enumerate() {
            match d.collocation(d.interior.len() + k) {
                Collocation::DirichletPanel(_) => assert!((c - 0.5).abs() < 1e-3, "{c}"),
                Collocation::NeumannVertex(v) => {
                    let x = mesh.vertices[v];
                    let on_faces = [x.x, x.y, x.z].iter().filter(|&&t| t == 0.0 || t == 1.0).count();
                    // Face, edge and corner points see 1/2, 1/4 and 1/8 of
                    // the full angle.
                    let expected = [0.0, 0.5, 0.25, 0.125][on_faces];
                    assert!((c - expected).abs() < 1e-3, "{x:?}: {c}");
                }
                Collocation::Interior(_) => unreachable!(),
            }
        }
    }

    #[test]
    fn zero_data_gives_zero_rhs_and_solution() {
        let mesh = DomainMesh::cube(2).unwrap();
        let a = CoefficientField::preset(CoefficientPreset::ExpX3);
        let ev = PotentialEvaluator::new(&mesh, &a, QuadOptions::default()).unwrap();
        let sys = BdieSystem::assemble(&ev, BoundaryData::zero(&mesh), None).unwrap();
        assert!(sys.rhs.iter().all(|&v| v == 0.0));
        let (sol, _) = sys.solve(&mesh, SolverKind::Lu).unwrap();
        assert!(sol.u_values().iter().all(|&v| v == 0.0));
        let cauchy = recover_cauchy_data(&sol, &sys.data);
        assert!(cauchy.trace.values.iter().chain(&cauchy.conormal.values).all(|&v| v == 0.0));
        let y = Vec3::new(0.5, 0.4, 0.3);
        assert_eq!(representation_formula(&ev, &sol, &sys.data, None, &y).unwrap(), 0.0);
    }

    #[test]
    fn f0_of_unit_dirichlet_trace_on_sphere() {
        let mesh = DomainMesh::sphere_boundary(3);
        let one = CoefficientField::constant(1.0);
        let ev = PotentialEvaluator::new(&mesh, &one, QuadOptions::default()).unwrap();
        let nd = dirichlet_vertices(&mesh).len();
        assert_eq!(nd, 0);
        // All-Neumann sphere: build Φ₀ ≡ 1 directly.
        let data = BoundaryData {
            phi0: vec![],
            psi0: vec![],
            phi0_ext: BoundaryDensity::nodal_from_fn(&mesh, Support::All, |_| 1.0),
            psi0_ext: BoundaryDensity::zeros(&mesh, DensityKind::Panel, Support::Neumann),
        };
        for y in [Vec3::zeros(), Vec3::new(0.3, -0.2, 0.5)] {
            let v = f0_at(&ev, None, &data, &y).unwrap();
            assert!((v - 1.0).abs() < 0.01, "{v}");
        }
    }

    #[test]
    fn recovered_trace_equals_dirichlet_data() {
        let mesh = DomainMesh::cube(2).unwrap();
        let p = manufactured();
        let ev = PotentialEvaluator::new(&mesh, &p.coefficient, QuadOptions::default()).unwrap();
        let sys = BdieSystem::manufactured(&ev, &p).unwrap();
        let (sol, report) = sys.solve(&mesh, SolverKind::Lu).unwrap();
        assert!(report.relative_residual < 1e-10);
        let cauchy = recover_cauchy_data(&sol, &sys.data);
        for v in dirichlet_vertices(&mesh) {
            assert_eq!(cauchy.trace.values[v], mesh.vertices[v].x.powi(2));
        }
    }

    #[test]
    fn gmres_agrees_with_lu() {
        let mesh = DomainMesh::cube(2).unwrap();
        let p = manufactured();
        let ev = PotentialEvaluator::new(&mesh, &p.coefficient, QuadOptions::default()).unwrap();
        let sys = BdieSystem::manufactured(&ev, &p).unwrap();
        let (lu, _) = sys.solve(&mesh, SolverKind::Lu).unwrap();
        let (gm, report) = sys.solve(&mesh, SolverKind::gmres()).unwrap();
        assert!(report.converged);
        let (a, b) = (sys.pack(&lu), sys.pack(&gm));
        let scale = linalg::norm_inf(&a);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-8 * scale));
    }

    #[test]
    fn laplace_bie_matches_m12_blocks() {
        let mesh = DomainMesh::cube(2).unwrap();
        let one = CoefficientField::constant(1.0);
        let ev = PotentialEvaluator::new(&mesh, &one, QuadOptions::default()).unwrap();
        let (m, d, _) = assemble_m12(&ev).unwrap();
        let bie = assemble_laplace_bie(&ev, BoundaryData::zero(&mesh), None).unwrap();
        let nu = d.interior.len();
        for i in 0..bie.matrix.rows() {
            for j in 0..bie.matrix.cols() {
                assert!((bie.matrix[(i, j)] - m[(nu + i, nu + j)]).abs() <= 1e-14);
            }
        }
        let (sol, _) = bie.solve(&ev, None, SolverKind::Lu).unwrap();
        assert!(sol.u_values().iter().all(|&v| v == 0.0));
        let exp = CoefficientField::preset(CoefficientPreset::ExpX3);
        let ev2 = PotentialEvaluator::new(&mesh, &exp, QuadOptions::default()).unwrap();
        assert!(assemble_laplace_bie(&ev2, BoundaryData::zero(&mesh), None).is_err());
    }

    #[test]
    fn laplace_bie_recovers_normal_derivative_on_split_sphere() {
        let mesh = DomainMesh::sphere_boundary(3).with_partition(PartitionRule::LowerHalfDirichlet);
        let one = CoefficientField::constant(1.0);
        let ev = PotentialEvaluator::new(&mesh, &one, QuadOptions::default()).unwrap();
        let p = ManufacturedProblem::new(
            "x3",
            one,
            ExactField::Linear {
                gradient: Vec3::z(),
                offset: 0.0,
            },
        );
        let data = BoundaryData::from_problem(&mesh, &p);
        let bie = assemble_laplace_bie(&ev, data, None).unwrap();
        let xb = linalg::lu_solve(&bie.matrix, &bie.rhs).unwrap();
        let (mut e2, mut n2) = (0.0, 0.0);
        for (k, &t) in bie.dofs.psi_panels.iter().enumerate() {
            let exact = mesh.triangle_normal[t].z;
            e2 += mesh.triangle_area[t] * (xb[k] - exact).powi(2);
            n2 += mesh.triangle_area[t] * exact * exact;
        }
        let rel = (e2 / n2).sqrt();
        assert!(rel <= 0.15, "relative L2 error of psi: {rel}");
    }

    #[test]
    fn representation_of_constant_field() {
        for preset in CoefficientPreset::ALL {
            let mesh = DomainMesh::cube(4).unwrap();
            let a = CoefficientField::preset(preset);
            let ev = PotentialEvaluator::new(&mesh, &a, QuadOptions::default()).unwrap();
            let p = ManufacturedProblem::new("constant_one", a, ExactField::Constant(1.0));
            let data = BoundaryData::from_problem(&mesh, &p);
            let sys = BdieSystem::manufactured(&ev, &p).unwrap();
            let sol = sys.unpack(&mesh, &sys.pack(&exact_triple(&mesh, &p, &data)));
            let y = Vec3::new(0.5, 0.5, 0.5);
            let v = representation_formula(&ev, &sol, &data, None, &y).unwrap();
            assert!((v - 1.0).abs() < 5e-2, "{preset}: {v}");
            assert!(representation_formula(&ev, &sol, &data, None, &Vec3::new(2.0, 0.5, 0.5)).is_err());
        }
    }

    #[test]
    fn third_green_residual_of_constant() {
        let mesh = DomainMesh::sphere_boundary(3);
        let one = CoefficientField::constant(1.0);
        let ev = PotentialEvaluator::new(&mesh, &one, QuadOptions::default()).unwrap();
        let p = ManufacturedProblem::new("constant_one", one, ExactField::Constant(1.0));
        let probes = [Vec3::zeros(), Vec3::new(0.2, 0.3, -0.4)];
        assert!(third_green_residual(&ev, &p, &probes).unwrap() <= 5e-2);

        let mesh = DomainMesh::cube(4).unwrap();
        let a = CoefficientField::preset(CoefficientPreset::LinearHalfX3);
        let ev = PotentialEvaluator::new(&mesh, &a, QuadOptions::default()).unwrap();
        let p = ManufacturedProblem::new("constant_one", a, ExactField::Constant(1.0));
        let probes = [Vec3::new(0.5, 0.5, 0.5), Vec3::new(0.25, 0.75, 0.25)];
        assert!(third_green_residual(&ev, &p, &probes).unwrap() <= 5e-2);
    }
}
