//! The TOML run configuration.
//!
//! ```toml
//! coefficient = "exp_x3"
//!
//! [domain]
//! kind = "cube"                       # cube | sphere_boundary
//! refinement = 4                      # cube: cells per edge; sphere: icosphere level
//! partition = "bottom_face_dirichlet" # | lower_half_dirichlet | all_neumann
//!
//! [problem]
//! exact = "x1_squared"                # manufactured solution
//! # or raw data instead of `exact`:
//! # phi0 = 0.0                        # constant, or one value per Dirichlet vertex
//! # psi0 = [0.0, ...]                 # constant, or one value per Neumann panel
//! # source = 0.0                      # constant right-hand side f
//!
//! [quadrature]                        # optional overrides; the jumps suite
//! near_ratio = 0.5                    # starts from tightened surface settings
//!
//! [solver]
//! kind = "lu"                         # lu | gmres
//!
//! [output]
//! dir = "out"
//!
//! [tolerances]                        # optional overrides
//! green = 5e-2
//! ```

use std::path::{Path, PathBuf};

use bdie_core::{
    CoefficientField, CoefficientPreset, DomainMesh, ExactField, ManufacturedProblem, PartitionRule, QuadOptions,
    SolverKind,
};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Cube,
    SphereBoundary,
}

impl DomainKind {
    pub fn name(self) -> &'static str {
        match self {
            DomainKind::Cube => "cube",
            DomainKind::SphereBoundary => "sphere_boundary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    BottomFaceDirichlet,
    LowerHalfDirichlet,
    AllNeumann,
}

impl From<Partition> for PartitionRule {
    fn from(p: Partition) -> Self {
        match p {
            Partition::BottomFaceDirichlet => PartitionRule::BottomFaceDirichlet,
            Partition::LowerHalfDirichlet => PartitionRule::LowerHalfDirichlet,
            Partition::AllNeumann => PartitionRule::AllNeumann,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub kind: DomainKind,
    pub refinement: i64,
    /// Defaults to the bottom face on the cube and the lower half on the
    /// sphere.
    pub partition: Option<Partition>,
}

/// A constant or one value per entry.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Values {
    Constant(f64),
    List(Vec<f64>),
}

impl Values {
    pub fn expand(&self, field: &str, n: usize) -> Result<Vec<f64>, CliError> {
        match self {
            Values::Constant(c) => Ok(vec![*c; n]),
            Values::List(v) if v.len() == n => Ok(v.clone()),
            Values::List(v) => Err(CliError::config(field, format!("expected {n} values, got {}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub exact: Option<String>,
    pub phi0: Option<Values>,
    pub psi0: Option<Values>,
    pub source: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    pub surface_regular: Option<usize>,
    pub surface_singular: Option<usize>,
    pub volume_regular: Option<usize>,
    pub volume_singular: Option<usize>,
    pub near_ratio: Option<f64>,
    pub max_depth: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverName {
    #[default]
    Lu,
    Gmres,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub kind: SolverName,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            kind: SolverName::Lu,
            tol: 1e-10,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write the mesh in the plain-text dump format.
    pub mesh_dump: bool,
    /// Also write the dense system in the plain-text dump format.
    pub system_dump: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            mesh_dump: false,
            system_dump: false,
        }
    }
}

/// Pass/fail thresholds. Defaults are the acceptance tolerances.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative solver residual `‖MX - F‖∞ / ‖F‖∞`.
    pub residual: f64,
    /// Relative error of each jump identity.
    pub jumps: f64,
    /// Max `|1 + ℛ1 + W1|` at the interior probes.
    pub green: f64,
    /// Relation path vs direct-kernel path, surface potentials.
    pub relation_surface: f64,
    /// Relation path vs direct-kernel path, volume potentials.
    pub relation_volume: f64,
    /// Largest entry of the remainder blocks for constant `a`.
    pub remainder_blocks: f64,
    /// Full system vs boundary-only reduction, relative at interior nodes.
    pub reduction: f64,
    /// Minimum observed convergence order.
    pub order: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            residual: 1e-8,
            jumps: 5e-2,
            green: 5e-2,
            relation_surface: 1e-10,
            relation_volume: 1e-6,
            remainder_blocks: 1e-14,
            reduction: 1e-6,
            order: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub coefficient: String,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// The problem to solve: a manufactured solution, or raw data.
#[derive(Debug, Clone)]
pub enum Problem {
    Manufactured(ManufacturedProblem),
    Raw {
        phi0: Values,
        psi0: Values,
        source: f64,
    },
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .message()
                .split('`')
                .nth(1)
                .map(str::to_owned)
                .unwrap_or_else(|| "config".to_owned());
            CliError::config(field, e.to_string().trim().to_owned())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks everything that can be checked without building a mesh.
    pub fn validate(&self) -> Result<(), CliError> {
        let r = self.domain.refinement;
        match self.domain.kind {
            DomainKind::Cube if r < 1 => {
                return Err(CliError::config("domain.refinement", "the cube needs at least 1 cell per edge"))
            }
            DomainKind::SphereBoundary if r < 0 => {
                return Err(CliError::config("domain.refinement", "must be non-negative"))
            }
            _ => {}
        }
        self.coefficient_field()?;
        self.problem()?;
        self.quad_options()?;
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.residual", t.residual),
            ("tolerances.jumps", t.jumps),
            ("tolerances.green", t.green),
            ("tolerances.relation_surface", t.relation_surface),
            ("tolerances.relation_volume", t.relation_volume),
            ("tolerances.remainder_blocks", t.remainder_blocks),
            ("tolerances.reduction", t.reduction),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::config(name, "must be positive"));
            }
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(CliError::config("solver", "tol and max_iter must be positive"));
        }
        Ok(())
    }

    pub fn coefficient_field(&self) -> Result<CoefficientField, CliError> {
        let preset: CoefficientPreset = self.coefficient.parse().map_err(CliError::from_core_config)?;
        Ok(CoefficientField::preset(preset))
    }

    pub fn problem(&self) -> Result<Problem, CliError> {
        let p = &self.problem;
        let raw = p.phi0.is_some() || p.psi0.is_some() || p.source.is_some();
        match (&p.exact, raw) {
            (Some(_), true) => Err(CliError::config(
                "problem",
                "give either `exact` or raw data (`phi0`, `psi0`, `source`), not both",
            )),
            (Some(name), false) => {
                let exact = ExactField::from_name(name).map_err(CliError::from_core_config)?;
                Ok(Problem::Manufactured(ManufacturedProblem::new(
                    name.clone(),
                    self.coefficient_field()?,
                    exact,
                )))
            }
            (None, _) => Ok(Problem::Raw {
                phi0: p.phi0.clone().unwrap_or(Values::Constant(0.0)),
                psi0: p.psi0.clone().unwrap_or(Values::Constant(0.0)),
                source: p.source.unwrap_or(0.0),
            }),
        }
    }

    pub fn problem_name(&self) -> String {
        self.problem.exact.clone().unwrap_or_else(|| "raw".to_owned())
    }

    pub fn quad_options(&self) -> Result<QuadOptions, CliError> {
        self.quad_options_over(QuadOptions::default())
    }

    /// The configured overrides applied on top of `d`.
    pub fn quad_options_over(&self, d: QuadOptions) -> Result<QuadOptions, CliError> {
        let q = &self.quadrature;
        let o = QuadOptions {
            surface_regular: q.surface_regular.unwrap_or(d.surface_regular),
            surface_singular: q.surface_singular.unwrap_or(d.surface_singular),
            volume_regular: q.volume_regular.unwrap_or(d.volume_regular),
            volume_singular: q.volume_singular.unwrap_or(d.volume_singular),
            near_ratio: q.near_ratio.unwrap_or(d.near_ratio),
            max_depth: q.max_depth.unwrap_or(d.max_depth),
        };
        bdie_core::quadrature::Quadrature::new(o).map_err(|e| CliError::config("quadrature", e.to_string()))?;
        Ok(o)
    }

    pub fn solver_kind(&self) -> SolverKind {
        match self.solver.kind {
            SolverName::Lu => SolverKind::Lu,
            SolverName::Gmres => SolverKind::Gmres {
                tol: self.solver.tol,
                max_iter: self.solver.max_iter,
            },
        }
    }

    pub fn partition(&self) -> PartitionRule {
        match (self.domain.partition, self.domain.kind) {
            (Some(p), _) => p.into(),
            (None, DomainKind::Cube) => PartitionRule::BottomFaceDirichlet,
            (None, DomainKind::SphereBoundary) => PartitionRule::LowerHalfDirichlet,
        }
    }

    /// Mesh at the configured refinement, or at `level` when given.
    pub fn mesh(&self, level: Option<usize>) -> Result<DomainMesh, CliError> {
        let r = level.unwrap_or(self.domain.refinement as usize);
        let mesh = match self.domain.kind {
            DomainKind::Cube => DomainMesh::cube(r).map_err(|e| CliError::config("domain.refinement", e.to_string()))?,
            DomainKind::SphereBoundary => DomainMesh::sphere_boundary(r),
        };
        Ok(mesh.with_partition(self.partition()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "coefficient = \"exp_x3\"\n[domain]\nkind = \"cube\"\nrefinement = 2\n[problem]\nexact = \"x1_squared\"\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.solver_kind(), SolverKind::Lu);
        assert_eq!(c.quad_options().unwrap(), QuadOptions::default());
        assert_eq!(c.tolerances, Tolerances::default());
        assert_eq!(c.partition(), PartitionRule::BottomFaceDirichlet);
        assert!(matches!(c.problem().unwrap(), Problem::Manufactured(_)));
    }

    #[test]
    fn unknown_preset_names_the_field() {
        let e = RunConfig::from_toml(&MINIMAL.replace("exp_x3", "bogus")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("coefficient"), "{e}");
        let e = RunConfig::from_toml(&MINIMAL.replace("x1_squared", "bogus")).unwrap_err();
        assert!(e.to_string().contains("problem"), "{e}");
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let e = RunConfig::from_toml(&format!("{MINIMAL}[solver]\nkind = \"cg\"\n")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(RunConfig::from_toml(&format!("{MINIMAL}colour = 1\n")).is_err());
        assert!(RunConfig::from_toml(&MINIMAL.replace("refinement = 2", "refinement = 0")).is_err());
        assert!(RunConfig::from_toml(&format!("{MINIMAL}[quadrature]\nsurface_regular = 3\n")).is_err());
        assert!(RunConfig::from_toml(&format!("{MINIMAL}[tolerances]\ngreen = -1.0\n")).is_err());
    }

    #[test]
    fn raw_data_and_exact_are_exclusive() {
        let both = format!("{MINIMAL}phi0 = 1.0\n");
        assert!(RunConfig::from_toml(&both).is_err());
        let raw = MINIMAL.replace("exact = \"x1_squared\"", "phi0 = [1.0, 2.0]\nsource = 0.5");
        let c = RunConfig::from_toml(&raw).unwrap();
        match c.problem().unwrap() {
            Problem::Raw { phi0, psi0, source } => {
                assert_eq!(phi0, Values::List(vec![1.0, 2.0]));
                assert_eq!(psi0, Values::Constant(0.0));
                assert_eq!(source, 0.5);
            }
            Problem::Manufactured(_) => panic!("expected raw data"),
        }
    }

    #[test]
    fn values_expand_checks_length() {
        assert_eq!(Values::Constant(2.0).expand("f", 3).unwrap(), vec![2.0; 3]);
        assert!(Values::List(vec![1.0]).expand("f", 3).is_err());
    }

    #[test]
    fn sphere_defaults_to_lower_half() {
        let c = RunConfig::from_toml(&MINIMAL.replace("\"cube\"", "\"sphere_boundary\"")).unwrap();
        assert_eq!(c.partition(), PartitionRule::LowerHalfDirichlet);
        assert_eq!(c.mesh(Some(1)).unwrap().boundary_triangles.len(), 80);
    }

    proptest::proptest! {
        #[test]
        fn values_expand_preserves_or_rejects(v in proptest::collection::vec(-1e3_f64..1e3, 0..8), n in 0_usize..8) {
            let r = Values::List(v.clone()).expand("f", n);
            if v.len() == n {
                proptest::prop_assert_eq!(r.unwrap(), v);
            } else {
                proptest::prop_assert_eq!(r.unwrap_err().exit_code(), 2);
            }
        }

        #[test]
        fn every_preset_and_refinement_is_accepted(p in 0_usize..4, n in 1_i64..6) {
            let name = CoefficientPreset::ALL[p].name();
            let text = MINIMAL.replace("exp_x3", name).replace("refinement = 2", &format!("refinement = {n}"));
            let c = RunConfig::from_toml(&text).unwrap();
            proptest::prop_assert_eq!(c.coefficient_field().unwrap(), CoefficientField::preset(CoefficientPreset::ALL[p]));
        }
    }
}
