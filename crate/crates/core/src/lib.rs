//! Boundary-domain integral equations for the variable-coefficient diffusion
//! equation `div(a grad u) = f` with mixed Dirichlet/Neumann data.
//!
//! The solver is built on the parametrix `P(x, y) = P_Δ(x - y) / a(x)`, where
//! `P_Δ(x - y) = -1 / (4π|x - y|)` is the fundamental solution of the Laplace
//! operator and `x` is the integration variable. Every parametrix-based
//! potential is evaluated through its relation to the corresponding Laplace
//! potential, with a direct-kernel path available as an oracle.
//!
//! Modules:
//! - [`coeff`]: coefficient fields and manufactured problems.
//! - [`mesh`]: cube volume meshes and icosphere boundary meshes.
//! - [`quadrature`]: Gauss rules, Duffy transforms, near-singular subdivision.
//! - [`potentials`]: volume, layer and boundary potentials, one-sided limits.
//! - [`bdie`]: the segregated mixed BDIE system, its right-hand side and
//!   post-processing.
//! - [`linalg`]: dense LU, GMRES and condition estimation.
//! - [`io`]: plain-text mesh and system dumps.
//! - [`verify`]: property checks behind the acceptance and `verify` suites.

pub mod bdie;
pub mod coeff;
pub mod error;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod potentials;
pub mod quadrature;
pub mod verify;

pub use bdie::{
    BdieSystem, BoundaryData, CauchyData, DofMap, ErrorNorms, LaplaceBie, SolutionTriple, SolveReport,
    SolverKind,
};
pub use coeff::{CoefficientField, CoefficientPreset, ExactField, ManufacturedProblem};
pub use error::{Error, Result};
pub use geometry::Vec3;
pub use linalg::DenseMatrix;
pub use mesh::{BoundaryPart, DomainMesh, MeshKind, PartitionRule, VertexClass};
pub use potentials::{
    BoundaryDensity, BoundaryPoint, DensityKind, PotentialEvaluator, Side, Support, VolumeDensity,
};
pub use quadrature::{QuadOptions, QuadRule};
