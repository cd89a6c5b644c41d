//! Kernels, volume and surface potentials, and one-sided boundary limits.
//!
//! Sign conventions (with `r = |x - y|`, `x` the integration variable):
//!
//! | operator | integrand |
//! |---|---|
//! | `𝒫_Δρ(y)` | `-ρ(x) / (4πr)` |
//! | `V_Δg(y)` | `g(x) / (4πr)` |
//! | `W_Δg(y)` | `-n(x)·(x - y) g(x) / (4πr³)` |
//! | `𝒲'_Δg(y)` | `n(y)·(x - y) g(x) / (4πr³)` |
//!
//! The parametrix-based operators are evaluated through
//! `𝒫ρ = 𝒫_Δ(ρ/a)`, `Vρ = V_Δ(ρ/a)`, `Wρ = W_Δρ - V_Δ(ρ ∂ₙln a)`,
//! `𝒲'ρ = a 𝒲'_Δ(ρ/a)` and
//! `ℛρ = ∫ ∇_y P_Δ · (ρ ∇ln a) dx - 𝒫_Δ(ρ Δln a)`. Every operator also has a
//! `*_direct` twin that integrates the parametrix kernel itself.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::coeff::CoefficientField;
use crate::error::{Error, Result};
use crate::geometry::{Tetrahedron, Triangle, Vec3};
use crate::linalg::DenseMatrix;
use crate::mesh::{BoundaryPart, DomainMesh, VertexClass};
use crate::quadrature::{QuadOptions, Quadrature};

const FOUR_PI: f64 = 4.0 * PI;

/// Relative tolerance (in panel diameters) for "this point lies on the panel".
const ON_SURFACE_TOL: f64 = 1e-10;

fn distance_checked(x: &Vec3, y: &Vec3) -> Result<f64> {
    let r = (x - y).norm();
    if r == 0.0 {
        Err(Error::Singularity)
    } else {
        Ok(r)
    }
}

/// `P_Δ(x - y) = -1 / (4π|x - y|)`.
pub fn kernel_fundamental(x: &Vec3, y: &Vec3) -> Result<f64> {
    Ok(-1.0 / (FOUR_PI * distance_checked(x, y)?))
}

/// `P(x, y) = P_Δ(x - y) / a(x)`.
pub fn kernel_parametrix(x: &Vec3, y: &Vec3, a: &CoefficientField) -> Result<f64> {
    Ok(kernel_fundamental(x, y)? / a.value(x))
}

/// `R(x, y) = -∇ln a(x)·∇ₓP_Δ(x - y) - Δln a(x) P_Δ(x - y)`.
pub fn kernel_remainder(x: &Vec3, y: &Vec3, a: &CoefficientField) -> Result<f64> {
    let r = distance_checked(x, y)?;
    let grad_p = (x - y) / (FOUR_PI * r * r * r);
    let p = -1.0 / (FOUR_PI * r);
    Ok(-a.grad_log(x).dot(&grad_p) - a.laplacian_log(x) * p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DensityKind {
    /// Continuous piecewise linear, one value per mesh vertex.
    Nodal,
    /// Piecewise constant, one value per boundary triangle.
    Panel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Support {
    All,
    Dirichlet,
    Neumann,
}

/// A discrete density on the boundary.
///
/// Nodal densities are indexed by mesh vertex (values at interior vertices
/// are ignored), panel densities by boundary triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryDensity {
    pub kind: DensityKind,
    pub support: Support,
    pub values: Vec<f64>,
}

fn nodal_allowed(class: VertexClass, support: Support) -> bool {
    match support {
        Support::All => true,
        Support::Neumann => matches!(class, VertexClass::BoundaryNeumann | VertexClass::Interior),
        Support::Dirichlet => !matches!(class, VertexClass::BoundaryNeumann),
    }
}

fn panel_allowed(part: BoundaryPart, support: Support) -> bool {
    match support {
        Support::All => true,
        Support::Dirichlet => part == BoundaryPart::Dirichlet,
        Support::Neumann => part == BoundaryPart::Neumann,
    }
}

impl BoundaryDensity {
    /// Validates the length and the support constraint.
    pub fn new(mesh: &DomainMesh, kind: DensityKind, support: Support, values: Vec<f64>) -> Result<Self> {
        let expected = match kind {
            DensityKind::Nodal => mesh.vertices.len(),
            DensityKind::Panel => mesh.boundary_triangles.len(),
        };
        if values.len() != expected {
            return Err(Error::Dimension {
                expected,
                got: values.len(),
            });
        }
        let bad = match kind {
            DensityKind::Nodal => values
                .iter()
                .zip(&mesh.vertex_class)
                .position(|(&v, &c)| v != 0.0 && !nodal_allowed(c, support)),
            DensityKind::Panel => values
                .iter()
                .zip(&mesh.triangle_part)
                .position(|(&v, &p)| v != 0.0 && !panel_allowed(p, support)),
        };
        if let Some(i) = bad {
            return Err(Error::invalid(format!(
                "{kind:?} density with {support:?} support is nonzero at index {i}"
            )));
        }
        Ok(Self { kind, support, values })
    }

    pub fn zeros(mesh: &DomainMesh, kind: DensityKind, support: Support) -> Self {
        let n = match kind {
            DensityKind::Nodal => mesh.vertices.len(),
            DensityKind::Panel => mesh.boundary_triangles.len(),
        };
        Self {
            kind,
            support,
            values: vec![0.0; n],
        }
    }

    /// Nodal interpolant of `f` on boundary vertices, zero off the support.
    pub fn nodal_from_fn(mesh: &DomainMesh, support: Support, f: impl Fn(&Vec3) -> f64) -> Self {
        let values = mesh
            .vertices
            .iter()
            .enumerate()
            .map(|(v, x)| {
                let class = mesh.vertex_class[v];
                if class != VertexClass::Interior && nodal_allowed(class, support) {
                    f(x)
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            kind: DensityKind::Nodal,
            support,
            values,
        }
    }

    /// Centroid values `f(triangle, centroid)`, zero off the support.
    pub fn panel_from_fn(mesh: &DomainMesh, support: Support, f: impl Fn(usize, &Vec3) -> f64) -> Self {
        let values = (0..mesh.boundary_triangles.len())
            .map(|t| {
                if panel_allowed(mesh.triangle_part[t], support) {
                    f(t, &mesh.triangle(t).centroid())
                } else {
                    0.0
                }
            })
            .collect();
        Self {
            kind: DensityKind::Panel,
            support,
            values,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn eval(&self, mesh: &DomainMesh, tri: usize, bary: [f64; 3]) -> f64 {
        match self.kind {
            DensityKind::Panel => self.values[tri],
            DensityKind::Nodal => {
                let t = mesh.boundary_triangles[tri];
                bary[0] * self.values[t[0]] + bary[1] * self.values[t[1]] + bary[2] * self.values[t[2]]
            }
        }
    }
}

/// Anything that can be integrated over boundary panels.
pub trait SurfaceField: Sync {
    fn value(&self, mesh: &DomainMesh, tri: usize, bary: [f64; 3], x: &Vec3) -> f64;
}

impl SurfaceField for BoundaryDensity {
    fn value(&self, mesh: &DomainMesh, tri: usize, bary: [f64; 3], _x: &Vec3) -> f64 {
        self.eval(mesh, tri, bary)
    }
}

/// Closed-form surface field `f(triangle, x)`; the triangle index gives
/// access to the panel normal.
pub struct SurfaceFn<F>(pub F);

impl<F: Fn(usize, &Vec3) -> f64 + Sync> SurfaceField for SurfaceFn<F> {
    fn value(&self, _mesh: &DomainMesh, tri: usize, _bary: [f64; 3], x: &Vec3) -> f64 {
        (self.0)(tri, x)
    }
}

/// Integrand of a volume potential.
#[derive(Clone)]
pub enum VolumeDensity {
    /// Piecewise linear, one value per mesh vertex.
    Nodal(Vec<f64>),
    Field(Arc<dyn Fn(&Vec3) -> f64 + Send + Sync>),
}

impl fmt::Debug for VolumeDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VolumeDensity::Nodal(v) => f.debug_tuple("Nodal").field(&v.len()).finish(),
            VolumeDensity::Field(_) => f.write_str("Field(..)"),
        }
    }
}

impl VolumeDensity {
    pub fn nodal(mesh: &DomainMesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.vertices.len() {
            return Err(Error::Dimension {
                expected: mesh.vertices.len(),
                got: values.len(),
            });
        }
        Ok(VolumeDensity::Nodal(values))
    }

    pub fn field(f: impl Fn(&Vec3) -> f64 + Send + Sync + 'static) -> Self {
        VolumeDensity::Field(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::field(move |_| c)
    }

    pub fn eval(&self, mesh: &DomainMesh, tet: usize, bary: [f64; 4], x: &Vec3) -> f64 {
        match self {
            VolumeDensity::Nodal(v) => {
                let t = mesh.tetrahedra[tet];
                (0..4).map(|k| bary[k] * v[t[k]]).sum()
            }
            VolumeDensity::Field(f) => f(x),
        }
    }
}

/// Which one-sided limit to take: `Interior` is `γ⁺`/`T⁺` (approach from
/// inside the domain), `Exterior` is `γ⁻`/`T⁻`. Both use the outward normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Interior,
    Exterior,
}

impl Side {
    /// Sign of the offset along the outward normal.
    fn direction(self) -> f64 {
        match self {
            Side::Interior => -1.0,
            Side::Exterior => 1.0,
        }
    }
}

/// A collocation point on the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryPoint {
    pub x: Vec3,
    /// Outward normal (panel normal, or area-weighted average at a vertex).
    pub normal: Vec3,
    /// Local panel diameter, the length scale of one-sided offsets.
    pub size: f64,
}

impl BoundaryPoint {
    pub fn centroid(mesh: &DomainMesh, t: usize) -> Self {
        let tri = mesh.triangle(t);
        Self {
            x: tri.centroid(),
            normal: mesh.triangle_normal[t],
            size: tri.diameter(),
        }
    }

    pub fn vertex(mesh: &DomainMesh, v: usize) -> Self {
        let mut normal = Vec3::zeros();
        let mut size: f64 = 0.0;
        for (t, tri) in mesh.boundary_triangles.iter().enumerate() {
            if tri.contains(&v) {
                normal += mesh.triangle_normal[t] * mesh.triangle_area[t];
                size = size.max(mesh.triangle(t).diameter());
            }
        }
        Self {
            x: mesh.vertices[v],
            normal: normal.normalize(),
            size,
        }
    }
}

/// Result of a one-sided limit by polynomial extrapolation in the offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Limit {
    pub value: f64,
    /// `(offset, value)` samples, largest offset first.
    pub samples: Vec<(f64, f64)>,
    /// Successive extrapolants using the 1, 2, ... smallest offsets.
    pub estimates: Vec<f64>,
    /// Whether the corrections between successive extrapolants shrink.
    pub monotone: bool,
}

/// Neville extrapolation of the samples `(eps[i], vals[i])` to `eps = 0`.
///
/// Returns the extrapolant through all samples and the sequence of
/// extrapolants through the `k` samples with the smallest offsets.
pub fn extrapolate_to_zero(eps: &[f64], vals: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(eps.len(), vals.len());
    assert!(!eps.is_empty());
    let mut order: Vec<usize> = (0..eps.len()).collect();
    order.sort_by(|&i, &j| eps[i].total_cmp(&eps[j]));
    let e: Vec<f64> = order.iter().map(|&i| eps[i]).collect();
    let mut p: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let mut estimates = vec![p[0]];
    // After stage m, p[i] interpolates samples i..=i+m evaluated at 0.
    for m in 1..e.len() {
        for i in 0..e.len() - m {
            p[i] = (e[i + m] * p[i] - e[i] * p[i + 1]) / (e[i + m] - e[i]);
        }
        estimates.push(p[0]);
    }
    (p[0], estimates)
}

/// Offsets, as fractions of the local panel diameter, used for one-sided
/// limits.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitOptions {
    pub fractions: Vec<f64>,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            fractions: vec![0.25, 0.2, 0.15, 0.1],
        }
    }
}

/// Evaluates potentials of densities on one mesh with one coefficient.
#[derive(Debug, Clone)]
pub struct PotentialEvaluator<'a> {
    pub mesh: &'a DomainMesh,
    pub coeff: &'a CoefficientField,
    pub quad: Quadrature,
    pub limits: LimitOptions,
    triangles: Vec<Triangle>,
    tets: Vec<Tetrahedron>,
}

impl<'a> PotentialEvaluator<'a> {
    pub fn new(mesh: &'a DomainMesh, coeff: &'a CoefficientField, options: QuadOptions) -> Result<Self> {
        Ok(Self {
            mesh,
            coeff,
            quad: Quadrature::new(options)?,
            limits: LimitOptions::default(),
            triangles: (0..mesh.boundary_triangles.len()).map(|t| mesh.triangle(t)).collect(),
            tets: (0..mesh.tetrahedra.len()).map(|t| mesh.tet(t)).collect(),
        })
    }

    pub fn with_limits(mut self, limits: LimitOptions) -> Self {
        self.limits = limits;
        self
    }

    pub fn triangle(&self, t: usize) -> &Triangle {
        &self.triangles[t]
    }

    fn on_panel(&self, t: usize, y: &Vec3) -> bool {
        let tri = &self.triangles[t];
        let diam = tri.diameter();
        let c = tri.centroid();
        if (y - c).norm() > 2.0 * diam {
            return false;
        }
        tri.distance(y) <= ON_SURFACE_TOL * diam
    }

    /// Visits surface quadrature nodes `(triangle, x, bary, weight)` for an
    /// integrand singular at `y`. With `skip_containing`, panels that
    /// contain `y` are left out (principal-value double layers on flat
    /// panels).
    pub fn surface_nodes(
        &self,
        y: &Vec3,
        skip_containing: bool,
        visit: &mut impl FnMut(usize, &Vec3, [f64; 3], f64),
    ) {
        for (t, tri) in self.triangles.iter().enumerate() {
            if skip_containing && self.on_panel(t, y) {
                continue;
            }
            self.quad.triangle_near(tri, y, &mut |x, b, w| visit(t, x, b, w));
        }
    }

    /// Like [`Self::surface_nodes`] but visits every panel, flagging the
    /// nodes of panels that contain `y`.
    pub fn surface_nodes_flagged(
        &self,
        y: &Vec3,
        visit: &mut impl FnMut(usize, &Vec3, [f64; 3], f64, bool),
    ) {
        for (t, tri) in self.triangles.iter().enumerate() {
            let on = self.on_panel(t, y);
            self.quad.triangle_near(tri, y, &mut |x, b, w| visit(t, x, b, w, on));
        }
    }

    /// Visits volume quadrature nodes `(tet, x, bary, weight)` for an
    /// integrand singular at `y`.
    pub fn volume_nodes(&self, y: &Vec3, visit: &mut impl FnMut(usize, &Vec3, [f64; 4], f64)) {
        for (k, tet) in self.tets.iter().enumerate() {
            self.quad.tet_near(tet, y, &mut |x, b, w| visit(k, x, b, w));
        }
    }

    /// Distance from `y` to the boundary mesh.
    pub fn boundary_distance(&self, y: &Vec3) -> f64 {
        self.triangles
            .iter()
            .map(|t| t.distance(y))
            .fold(f64::INFINITY, f64::min)
    }

    fn require_off_boundary(&self, y: &Vec3) -> Result<()> {
        let h = self.mesh.mesh_size();
        if self.boundary_distance(y) <= ON_SURFACE_TOL * h {
            return Err(Error::invalid(
                "point lies on the boundary; use the boundary operator instead",
            ));
        }
        Ok(())
    }

    fn require_volume(&self) -> Result<()> {
        if self.tets.is_empty() {
            return Err(Error::invalid("volume potential on a mesh without tetrahedra"));
        }
        Ok(())
    }

    // ---- volume potentials ------------------------------------------------

    fn newton_of(&self, y: &Vec3, density: impl Fn(usize, &Vec3, [f64; 4]) -> f64) -> f64 {
        let mut sum = 0.0;
        self.volume_nodes(y, &mut |k, x, b, w| {
            sum -= w * density(k, x, b) / (FOUR_PI * (x - y).norm());
        });
        sum
    }

    /// `𝒫_Δρ(y)`.
    pub fn newtonian_potential(&self, rho: &VolumeDensity, y: &Vec3) -> Result<f64> {
        self.require_volume()?;
        Ok(self.newton_of(y, |k, x, b| rho.eval(self.mesh, k, b, x)))
    }

    /// `𝒫ρ(y) = 𝒫_Δ(ρ/a)(y)`.
    pub fn parametrix_newton(&self, rho: &VolumeDensity, y: &Vec3) -> Result<f64> {
        self.require_volume()?;
        Ok(self.newton_of(y, |k, x, b| rho.eval(self.mesh, k, b, x) / self.coeff.value(x)))
    }

    pub fn parametrix_newton_direct(&self, rho: &VolumeDensity, y: &Vec3) -> Result<f64> {
        self.require_volume()?;
        let mut sum = 0.0;
        let mut err = None;
        self.volume_nodes(y, &mut |k, x, b, w| match kernel_parametrix(x, y, self.coeff) {
            Ok(p) => sum += w * p * rho.eval(self.mesh, k, b, x),
            Err(e) => err = Some(e),
        });
        err.map_or(Ok(sum), Err)
    }

    /// `ℛρ(y)` through the gradient-kernel Newtonian potential.
    pub fn remainder_potential(&self, rho: &VolumeDensity, y: &Vec3) -> Result<f64> {
        self.require_volume()?;
        if self.coeff.is_constant() {
            return Ok(0.0);
        }
        let mut sum = 0.0;
        self.volume_nodes(y, &mut |k, x, b, w| {
            let d = x - y;
            let r = d.norm();
            let rho_x = rho.eval(self.mesh, k, b, x);
            let grad_y_p = -d / (FOUR_PI * r * r * r);
            let newton = -1.0 / (FOUR_PI * r);
            sum += w * rho_x * (grad_y_p.dot(&self.coeff.grad_log(x)) - newton * self.coeff.laplacian_log(x));
        });
        Ok(sum)
    }

    pub fn remainder_potential_direct(&self, rho: &VolumeDensity, y: &Vec3) -> Result<f64> {
        self.require_volume()?;
        let mut sum = 0.0;
        let mut err = None;
        self.volume_nodes(y, &mut |k, x, b, w| match kernel_remainder(x, y, self.coeff) {
            Ok(r) => sum += w * r * rho.eval(self.mesh, k, b, x),
            Err(e) => err = Some(e),
        });
        err.map_or(Ok(sum), Err)
    }

    // ---- Laplace layer potentials ----------------------------------------

    fn sl_sum(&self, y: &Vec3, g: &dyn Fn(usize, &Vec3, [f64; 3]) -> f64) -> f64 {
        let mut sum = 0.0;
        self.surface_nodes(y, false, &mut |t, x, b, w| {
            sum += w * g(t, x, b) / (FOUR_PI * (x - y).norm());
        });
        sum
    }

    fn dl_sum(&self, y: &Vec3, g: &dyn Fn(usize, &Vec3, [f64; 3]) -> f64) -> f64 {
        let mut sum = 0.0;
        self.surface_nodes(y, true, &mut |t, x, b, w| {
            let d = x - y;
            let r = d.norm();
            sum -= w * g(t, x, b) * self.mesh.triangle_normal[t].dot(&d) / (FOUR_PI * r * r * r);
        });
        sum
    }

    fn adl_sum(&self, y: &Vec3, ny: &Vec3, g: &dyn Fn(usize, &Vec3, [f64; 3]) -> f64) -> f64 {
        let mut sum = 0.0;
        self.surface_nodes(y, true, &mut |t, x, b, w| {
            let d = x - y;
            let r = d.norm();
            sum += w * g(t, x, b) * ny.dot(&d) / (FOUR_PI * r * r * r);
        });
        sum
    }

    fn grad_sl_sum(&self, y: &Vec3, g: &dyn Fn(usize, &Vec3, [f64; 3]) -> f64) -> Vec3 {
        let mut sum = Vec3::zeros();
        self.surface_nodes(y, false, &mut |t, x, b, w| {
            let d = x - y;
            let r = d.norm();
            sum += d * (w * g(t, x, b) / (FOUR_PI * r * r * r));
        });
        sum
    }

    fn grad_dl_sum(&self, y: &Vec3, g: &dyn Fn(usize, &Vec3, [f64; 3]) -> f64) -> Vec3 {
        let mut sum = Vec3::zeros();
        self.surface_nodes(y, false, &mut |t, x, b, w| {
            let n = self.mesh.triangle_normal[t];
            let d = x - y;
            let r2 = d.norm_squared();
            let r3 = r2 * r2.sqrt();
            let k = n / r3 - d * (3.0 * n.dot(&d) / (r3 * r2));
            sum += k * (w * g(t, x, b) / FOUR_PI);
        });
        sum
    }

    fn density<'b>(&'b self, rho: &'b dyn SurfaceField) -> impl Fn(usize, &Vec3, [f64; 3]) -> f64 + 'b {
        move |t, x, b| rho.value(self.mesh, t, b, x)
    }

    fn over_a<'b>(&'b self, rho: &'b dyn SurfaceField) -> impl Fn(usize, &Vec3, [f64; 3]) -> f64 + 'b {
        move |t, x, b| rho.value(self.mesh, t, b, x) / self.coeff.value(x)
    }

    fn times_dn_log_a<'b>(&'b self, rho: &'b dyn SurfaceField) -> impl Fn(usize, &Vec3, [f64; 3]) -> f64 + 'b {
        move |t, x, b| {
            rho.value(self.mesh, t, b, x) * self.coeff.normal_derivative_log(x, &self.mesh.triangle_normal[t])
        }
    }

    /// `V_Δg(y)` off the boundary.
    pub fn single_layer_laplace(&self, g: &dyn SurfaceField, y: &Vec3) -> Result<f64> {
        self.require_off_boundary(y)?;
        Ok(self.sl_sum(y, &self.density(g)))
    }

    /// `W_Δg(y)` off the boundary.
    pub fn double_layer_laplace(&self, g: &dyn SurfaceField, y: &Vec3) -> Result<f64> {
        self.require_off_boundary(y)?;
        Ok(self.dl_sum(y, &self.density(g)))
    }

    /// `∇V_Δg(y)` off the boundary.
    pub fn grad_single_layer_laplace(&self, g: &dyn SurfaceField, y: &Vec3) -> Result<Vec3> {
        self.require_off_boundary(y)?;
        Ok(self.grad_sl_sum(y, &self.density(g)))
    }

    /// `∇W_Δg(y)` off the boundary.
    pub fn grad_double_layer_laplace(&self, g: &dyn SurfaceField, y: &Vec3) -> Result<Vec3> {
        self.require_off_boundary(y)?;
        Ok(self.grad_dl_sum(y, &self.density(g)))
    }

    // ---- parametrix layer potentials -------------------------------------

    /// `Vρ(y) = V_Δ(ρ/a)(y)`.
    pub fn single_layer(&self, rho: &dyn SurfaceField, y: &Vec3) -> Result<f64> {
        self.require_off_boundary(y)?;
        Ok(self.sl_sum(y, &self.over_a(rho)))
    }

    pub fn single_layer_direct(&self, rho: &dyn SurfaceField, y: &Vec3) -> Result<f64> {
        self.require_off_boundary(y)?;
        Ok(self.sl_direct(y, rho))
    }

    fn sl_direct(&self, y: &Vec3, rho: &dyn SurfaceField) -> f64 {
        let mut sum = 0.0;
        self.surface_nodes(y, false, &mut |t, x, b, w| {
            let p = -1.0 / (FOUR_PI * (x - y).norm() * self.coeff.value(x));
            sum -= w * p * rho.value(self.mesh, t, b, x);
        });
        sum
    }

    /// `Wρ(y) = W_Δρ(y) - V_Δ(ρ ∂ₙln a)(y)`.
    pub fn double_layer(&self, rho: &dyn SurfaceField, y: &Vec3) -> Result<f64> {
        self.require_off_boundary(y)?;
        Ok(self.dl_relation(y, rho))
    }

    fn dl_relation(&self, y: &Vec3, rho: &dyn SurfaceField) -> f64 {
        let mut w = self.dl_sum(y, &self.density(rho));
        if !self.coeff.is_constant() {
            w -= self.sl_sum(y, &self.times_dn_log_a(rho));
        }
        w
    }

    pub fn double_layer_direct(&self, rho: &dyn SurfaceField, y: &Vec3) -> Result<f64> {
        self.require_off_boundary(y)?;
        Ok(self.dl_direct(y, rho, false))
    }

    /// `-∫ T_x P(x, y) ρ(x) dS(x)` with `T_x P = a(x) n(x)·∇ₓ[P_Δ(x - y)/a(x)]`.
    fn dl_direct(&self, y: &Vec3, rho: &dyn SurfaceField, skip_containing: bool) -> f64 {
        let mut sum = 0.0;
        self.surface_nodes(y, skip_containing, &mut |t, x, b, w| {
            let n = self.mesh.triangle_normal[t];
            let d = x - y;
            let r = d.norm();
            let a = self.coeff.value(x);
            let p_delta = -1.0 / (FOUR_PI * r);
            let grad_p_delta = d / (FOUR_PI * r * r * r);
            let grad_p = grad_p_delta / a - self.coeff.grad(x) * (p_delta / (a * a));
            let conormal = a * n.dot(&grad_p);
            sum -= w * conormal * rho.value(self.mesh, t, b, x);
        });
        sum
    }

    // ---- boundary operators ----------------------------------------------

    /// `𝒱_Δg(y)` at a boundary point.
    pub fn boundary_single_layer_laplace(&self, g: &dyn SurfaceField, y: &BoundaryPoint) -> f64 {
        self.sl_sum(&y.x, &self.density(g))
    }

    /// `𝒲_Δg(y)` (principal value) at a boundary point.
    pub fn boundary_double_layer_laplace(&self, g: &dyn SurfaceField, y: &BoundaryPoint) -> f64 {
        self.dl_sum(&y.x, &self.density(g))
    }

    /// `𝒲'_Δg(y)` (principal value) at a boundary point.
    pub fn boundary_adjoint_double_layer_laplace(&self, g: &dyn SurfaceField, y: &BoundaryPoint) -> f64 {
        self.adl_sum(&y.x, &y.normal, &self.density(g))
    }

    /// `𝒱ρ(y) = 𝒱_Δ(ρ/a)(y)`.
    pub fn boundary_single_layer(&self, rho: &dyn SurfaceField, y: &BoundaryPoint) -> f64 {
        self.sl_sum(&y.x, &self.over_a(rho))
    }

    pub fn boundary_single_layer_direct(&self, rho: &dyn SurfaceField, y: &BoundaryPoint) -> f64 {
        self.sl_direct(&y.x, rho)
    }

    /// `𝒲ρ(y) = 𝒲_Δρ(y) - 𝒱_Δ(ρ ∂ₙln a)(y)`.
    pub fn boundary_double_layer(&self, rho: &dyn SurfaceField, y: &BoundaryPoint) -> f64 {
        self.dl_relation(&y.x, rho)
    }

    /// Direct path; the flat self-panel contributes only through `∂ₙa`,
    /// so it is integrated with the singular rule instead of skipped.
    pub fn boundary_double_layer_direct(&self, rho: &dyn SurfaceField, y: &BoundaryPoint) -> f64 {
        let mut sum = self.dl_direct(&y.x, rho, true);
        for t in 0..self.triangles.len() {
            if !self.on_panel(t, &y.x) {
                continue;
            }
            let n = self.mesh.triangle_normal[t];
            self.quad.triangle_near(&self.triangles[t], &y.x, &mut |x, b, w| {
                let r = (x - y.x).norm();
                let a = self.coeff.value(x);
                let p_delta = -1.0 / (FOUR_PI * r);
                // Tangential part of ∇ₓP_Δ drops out against n.
                let conormal = -a * n.dot(&self.coeff.grad(x)) * p_delta / (a * a);
                sum -= w * conormal * rho.value(self.mesh, t, b, x);
            });
        }
        sum
    }

    /// `𝒲'ρ(y) = a(y) 𝒲'_Δ(ρ/a)(y)`.
    pub fn boundary_adjoint_double_layer(&self, rho: &dyn SurfaceField, y: &BoundaryPoint) -> f64 {
        self.coeff.value(&y.x) * self.adl_sum(&y.x, &y.normal, &self.over_a(rho))
    }

    /// `-∫ T_y P(x, y) ρ(x) dS(x)` with `T_y P = a(y) n(y)·∇_y P(x, y)`.
    pub fn boundary_adjoint_double_layer_direct(&self, rho: &dyn SurfaceField, y: &BoundaryPoint) -> f64 {
        let ay = self.coeff.value(&y.x);
        let mut sum = 0.0;
        self.surface_nodes(&y.x, true, &mut |t, x, b, w| {
            let d = x - y.x;
            let r = d.norm();
            let grad_y = -d / (FOUR_PI * r * r * r * self.coeff.value(x));
            sum -= w * ay * y.normal.dot(&grad_y) * rho.value(self.mesh, t, b, x);
        });
        sum
    }

    // ---- one-sided limits -------------------------------------------------

    /// Limit of `f(y ∓ εn)` as `ε → 0` from the chosen side.
    pub fn one_sided_limit(
        &self,
        y: &BoundaryPoint,
        side: Side,
        f: impl Fn(&Vec3) -> Result<f64>,
    ) -> Result<Limit> {
        let fractions = &self.limits.fractions;
        if fractions.len() < 2 || fractions.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::invalid("limit offsets must be strictly decreasing, at least two"));
        }
        if *fractions.last().unwrap() < 0.1 {
            return Err(Error::invalid("smallest limit offset is below a tenth of the panel size"));
        }
        let mut samples = Vec::with_capacity(fractions.len());
        for &frac in fractions {
            let eps = frac * y.size;
            let p = y.x + y.normal * (side.direction() * eps);
            samples.push((eps, f(&p)?));
        }
        let eps: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let vals: Vec<f64> = samples.iter().map(|s| s.1).collect();
        let (value, estimates) = extrapolate_to_zero(&eps, &vals);
        let corrections: Vec<f64> = estimates.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        let scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let monotone = corrections
            .windows(2)
            .all(|c| c[1] <= c[0] || c[1] <= 1e-12 * scale);
        if !monotone {
            log::warn!(
                "one-sided limit at ({:.4}, {:.4}, {:.4}) is not resolved: corrections {corrections:?}",
                y.x.x,
                y.x.y,
                y.x.z
            );
        }
        Ok(Limit {
            value,
            samples,
            estimates,
            monotone,
        })
    }

    /// `γ±Vρ(y)`.
    pub fn trace_single_layer(&self, rho: &dyn SurfaceField, y: &BoundaryPoint, side: Side) -> Result<Limit> {
        self.one_sided_limit(y, side, |p| self.single_layer(rho, p))
    }

    /// `γ±Wρ(y)`.
    pub fn trace_double_layer(&self, rho: &dyn SurfaceField, y: &BoundaryPoint, side: Side) -> Result<Limit> {
        self.one_sided_limit(y, side, |p| self.double_layer(rho, p))
    }

    /// `T±Vρ(y)`, the conormal derivative `a(y) n·∇Vρ` from one side.
    pub fn conormal_single_layer(&self, rho: &dyn SurfaceField, y: &BoundaryPoint, side: Side) -> Result<Limit> {
        let ay = self.coeff.value(&y.x);
        self.one_sided_limit(y, side, |p| {
            self.require_off_boundary(p)?;
            Ok(ay * y.normal.dot(&self.grad_sl_sum(p, &self.over_a(rho))))
        })
    }

    /// `T±Wρ(y)`, the conormal derivative of the double layer from one side.
    pub fn one_sided_conormal_w(&self, rho: &dyn SurfaceField, y: &BoundaryPoint, side: Side) -> Result<Limit> {
        let ay = self.coeff.value(&y.x);
        self.one_sided_limit(y, side, |p| {
            self.require_off_boundary(p)?;
            let mut g = self.grad_dl_sum(p, &self.density(rho));
            if !self.coeff.is_constant() {
                g -= self.grad_sl_sum(p, &self.times_dn_log_a(rho));
            }
            Ok(ay * y.normal.dot(&g))
        })
    }

    /// `ℒ̂ρ(y) = a(y) ℒ_Δρ(y)`, recovered from the two one-sided conormal
    /// derivatives of `Wρ`.
    pub fn hat_l(&self, rho: &dyn SurfaceField, y: &BoundaryPoint) -> Result<f64> {
        let plus = self.one_sided_conormal_w(rho, y, Side::Interior)?.value;
        let minus = self.one_sided_conormal_w(rho, y, Side::Exterior)?.value;
        let correction = self.coeff.value(&y.x) * self.adl_sum(&y.x, &y.normal, &self.times_dn_log_a(rho));
        Ok(0.5 * (plus + minus) + correction)
    }

    // ---- Galerkin single layer ------------------------------------------

    /// Galerkin matrix `∫_{T_i}∫_{T_j} dS dS / (4π|x - y|)` of the Laplace
    /// single layer over the given panels, symmetrized.
    pub fn galerkin_single_layer_laplace(&self, panels: &[usize]) -> DenseMatrix {
        let n = panels.len();
        let mut m = DenseMatrix::zeros(n, n);
        for (i, &ti) in panels.iter().enumerate() {
            let mut outer: Vec<(Vec3, f64)> = Vec::new();
            self.quad
                .triangle_regular(&self.triangles[ti], &mut |x, _, w| outer.push((*x, w)));
            for (j, &tj) in panels.iter().enumerate() {
                let mut sum = 0.0;
                for (y, wy) in &outer {
                    self.quad.triangle_near(&self.triangles[tj], y, &mut |x, _, w| {
                        sum += wy * w / (FOUR_PI * (x - y).norm());
                    });
                }
                m[(i, j)] = sum;
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let s = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        m
    }
}
