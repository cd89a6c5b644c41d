//! Shared fixtures for the benchmarks.

use bdie_core::{CoefficientField, CoefficientPreset, DomainMesh, ExactField, ManufacturedProblem};

/// The manufactured problem of the convergence study.
pub fn manufactured() -> ManufacturedProblem {
    ManufacturedProblem::new(
        "x1_squared",
        CoefficientField::preset(CoefficientPreset::ExpX3),
        ExactField::X1Squared,
    )
}

pub fn cube(n: usize) -> DomainMesh {
    DomainMesh::cube(n).expect("valid subdivision count")
}
