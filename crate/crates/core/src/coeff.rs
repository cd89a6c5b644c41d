//! Variable coefficients `a(x)` and manufactured problems.
//!
//! Every field is closed-form with hand-coded derivatives, so `∇ln a` and
//! `Δln a` (the only coefficient quantities entering the remainder kernel) are
//! exact at every point.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::Vec3;

/// Named coefficient presets accepted in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoefficientPreset {
    /// `a ≡ 1`.
    ConstantOne,
    /// `a = exp(x₃)`.
    ExpX3,
    /// `a = 1 + x₁²`.
    Quadratic1pX1Sq,
    /// `a = 1 + x₃ / 2`.
    LinearHalfX3,
}

impl CoefficientPreset {
    pub const ALL: [CoefficientPreset; 4] = [
        CoefficientPreset::ConstantOne,
        CoefficientPreset::ExpX3,
        CoefficientPreset::Quadratic1pX1Sq,
        CoefficientPreset::LinearHalfX3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CoefficientPreset::ConstantOne => "constant_one",
            CoefficientPreset::ExpX3 => "exp_x3",
            CoefficientPreset::Quadratic1pX1Sq => "quadratic_1px1sq",
            CoefficientPreset::LinearHalfX3 => "linear_half_x3",
        }
    }
}

impl fmt::Display for CoefficientPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CoefficientPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::config(
                    "coefficient",
                    format!(
                        "unknown preset `{s}` (expected one of {})",
                        Self::ALL.map(|p| p.name()).join(", ")
                    ),
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Constant(f64),
    /// `exp(rate * x₃)`
    Exponential { rate: f64 },
    /// `1 + x₁²`
    Quadratic,
    /// `1 + slope * x₃`
    Linear { slope: f64 },
}

/// A smooth, strictly positive coefficient with its derived fields.
///
/// `a_min`/`a_max` bound the field on the box `[-1, 1]³`, which contains both
/// the unit cube and the unit ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientField {
    kind: Kind,
    pub a_min: f64,
    pub a_max: f64,
}

impl CoefficientField {
    pub fn preset(preset: CoefficientPreset) -> Self {
        match preset {
            CoefficientPreset::ConstantOne => Self::constant(1.0),
            CoefficientPreset::ExpX3 => Self::exponential_x3(1.0),
            CoefficientPreset::Quadratic1pX1Sq => Self {
                kind: Kind::Quadratic,
                a_min: 1.0,
                a_max: 2.0,
            },
            CoefficientPreset::LinearHalfX3 => Self::linear_x3(0.5),
        }
    }

    /// Parses a preset name, as used by the configuration file.
    pub fn from_name(name: &str) -> Result<Self> {
        name.parse().map(Self::preset)
    }

    pub fn constant(value: f64) -> Self {
        assert!(value > 0.0, "coefficient must be positive");
        Self {
            kind: Kind::Constant(value),
            a_min: value,
            a_max: value,
        }
    }

    pub fn exponential_x3(rate: f64) -> Self {
        let r = rate.abs();
        Self {
            kind: Kind::Exponential { rate },
            a_min: (-r).exp(),
            a_max: r.exp(),
        }
    }

    /// `1 + slope * x₃`; positive on `[-1, 1]³` only for `|slope| < 1`.
    pub fn linear_x3(slope: f64) -> Self {
        assert!(slope.abs() < 1.0, "1 + s x3 must stay positive on [-1,1]^3");
        Self {
            kind: Kind::Linear { slope },
            a_min: 1.0 - slope.abs(),
            a_max: 1.0 + slope.abs(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, Kind::Constant(_))
    }

    pub fn value(&self, x: &Vec3) -> f64 {
        match self.kind {
            Kind::Constant(c) => c,
            Kind::Exponential { rate } => (rate * x.z).exp(),
            Kind::Quadratic => 1.0 + x.x * x.x,
            Kind::Linear { slope } => 1.0 + slope * x.z,
        }
    }

    pub fn grad(&self, x: &Vec3) -> Vec3 {
        match self.kind {
            Kind::Constant(_) => Vec3::zeros(),
            Kind::Exponential { rate } => Vec3::new(0.0, 0.0, rate * (rate * x.z).exp()),
            Kind::Quadratic => Vec3::new(2.0 * x.x, 0.0, 0.0),
            Kind::Linear { slope } => Vec3::new(0.0, 0.0, slope),
        }
    }

    pub fn grad_log(&self, x: &Vec3) -> Vec3 {
        match self.kind {
            Kind::Constant(_) => Vec3::zeros(),
            Kind::Exponential { rate } => Vec3::new(0.0, 0.0, rate),
            Kind::Quadratic => Vec3::new(2.0 * x.x / (1.0 + x.x * x.x), 0.0, 0.0),
            Kind::Linear { slope } => Vec3::new(0.0, 0.0, slope / (1.0 + slope * x.z)),
        }
    }

    pub fn laplacian_log(&self, x: &Vec3) -> f64 {
        match self.kind {
            Kind::Constant(_) | Kind::Exponential { .. } => 0.0,
            Kind::Quadratic => {
                let s = 1.0 + x.x * x.x;
                (2.0 - 2.0 * x.x * x.x) / (s * s)
            }
            Kind::Linear { slope } => {
                let a = 1.0 + slope * x.z;
                -slope * slope / (a * a)
            }
        }
    }

    /// `n · ∇a`.
    pub fn normal_derivative(&self, x: &Vec3, n: &Vec3) -> f64 {
        self.grad(x).dot(n)
    }

    /// `n · ∇ln a`.
    pub fn normal_derivative_log(&self, x: &Vec3, n: &Vec3) -> f64 {
        self.grad_log(x).dot(n)
    }
}

/// Closed-form exact solutions for manufactured problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactField {
    Constant(f64),
    /// `g · x + c`
    Linear { gradient: Vec3, offset: f64 },
    /// `x₁²`
    X1Squared,
    /// `|x|²`
    RadiusSquared,
    /// `x₁² - x₃²`, harmonic
    Saddle,
}

impl ExactField {
    pub const NAMES: [&'static str; 6] = ["zero", "constant_one", "x3", "x1_squared", "radius_squared", "saddle"];

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "zero" => ExactField::Constant(0.0),
            "constant_one" => ExactField::Constant(1.0),
            "x3" => ExactField::Linear {
                gradient: Vec3::z(),
                offset: 0.0,
            },
            "x1_squared" => ExactField::X1Squared,
            "radius_squared" => ExactField::RadiusSquared,
            "saddle" => ExactField::Saddle,
            other => {
                return Err(Error::config(
                    "problem",
                    format!(
                        "unknown manufactured solution `{other}` (expected one of {})",
                        Self::NAMES.join(", ")
                    ),
                ))
            }
        })
    }

    pub fn value(&self, x: &Vec3) -> f64 {
        match *self {
            ExactField::Constant(c) => c,
            ExactField::Linear { gradient, offset } => gradient.dot(x) + offset,
            ExactField::X1Squared => x.x * x.x,
            ExactField::RadiusSquared => x.norm_squared(),
            ExactField::Saddle => x.x * x.x - x.z * x.z,
        }
    }

    pub fn grad(&self, x: &Vec3) -> Vec3 {
        match *self {
            ExactField::Constant(_) => Vec3::zeros(),
            ExactField::Linear { gradient, .. } => gradient,
            ExactField::X1Squared => Vec3::new(2.0 * x.x, 0.0, 0.0),
            ExactField::RadiusSquared => 2.0 * x,
            ExactField::Saddle => Vec3::new(2.0 * x.x, 0.0, -2.0 * x.z),
        }
    }

    pub fn laplacian(&self, _x: &Vec3) -> f64 {
        match *self {
            ExactField::Constant(_) | ExactField::Linear { .. } | ExactField::Saddle => 0.0,
            ExactField::X1Squared => 2.0,
            ExactField::RadiusSquared => 6.0,
        }
    }
}

/// An exact solution `u` together with the coefficient; the source term is
/// induced as `f = A u`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedProblem {
    pub name: String,
    pub coefficient: CoefficientField,
    pub exact: ExactField,
}

impl ManufacturedProblem {
    pub fn new(name: impl Into<String>, coefficient: CoefficientField, exact: ExactField) -> Self {
        Self {
            name: name.into(),
            coefficient,
            exact,
        }
    }

    pub fn exact_u(&self, x: &Vec3) -> f64 {
        self.exact.value(x)
    }

    pub fn exact_grad_u(&self, x: &Vec3) -> Vec3 {
        self.exact.grad(x)
    }

    /// `f = div(a grad u) = a Δu + ∇a · ∇u`.
    pub fn source_f(&self, x: &Vec3) -> f64 {
        manufactured_source(&self.coefficient, &self.exact, x)
    }

    /// Classical conormal derivative `T⁺u = a (∇u · n)`.
    pub fn conormal_derivative(&self, x: &Vec3, n: &Vec3) -> f64 {
        self.coefficient.value(x) * self.exact.grad(x).dot(n)
    }
}

pub fn manufactured_source(a: &CoefficientField, u: &ExactField, x: &Vec3) -> f64 {
    a.value(x) * u.laplacian(x) + a.grad(x).dot(&u.grad(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn fd_grad(f: impl Fn(&Vec3) -> f64, x: &Vec3, h: f64) -> Vec3 {
        let mut g = Vec3::zeros();
        for i in 0..3 {
            let mut p = *x;
            let mut m = *x;
            p[i] += h;
            m[i] -= h;
            g[i] = (f(&p) - f(&m)) / (2.0 * h);
        }
        g
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1.0)
    }

    #[test]
    fn preset_examples() {
        let c = CoefficientField::preset(CoefficientPreset::ConstantOne);
        let x = Vec3::new(0.3, 0.1, 0.9);
        assert_eq!(c.value(&x), 1.0);
        assert_eq!(c.grad(&x), Vec3::zeros());

        let e = CoefficientField::preset(CoefficientPreset::ExpX3);
        let x = Vec3::new(0.0, 0.0, 1.0);
        assert!((e.value(&x) - 2.718281828).abs() < 1e-9);
        assert_eq!(e.grad_log(&x), Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(e.laplacian_log(&x), 0.0);

        let q = CoefficientField::preset(CoefficientPreset::Quadratic1pX1Sq);
        let x = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(q.value(&x), 2.0);
        assert_eq!(q.grad(&x), Vec3::new(2.0, 0.0, 0.0));
        assert_eq!(q.grad_log(&x), Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn unknown_preset_is_config_error() {
        let err = CoefficientField::from_name("cubic").unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "coefficient"));
        assert!(ExactField::from_name("nope").is_err());
    }

    #[test]
    fn constant_preset_has_vanishing_log_derivatives() {
        let c = CoefficientField::preset(CoefficientPreset::ConstantOne);
        for x in [Vec3::new(0.1, 0.7, 0.2), Vec3::new(-0.9, 0.0, 0.5)] {
            assert_eq!(c.grad_log(&x), Vec3::zeros());
            assert_eq!(c.laplacian_log(&x), 0.0);
        }
    }

    #[test]
    fn positivity_by_dense_sampling() {
        // 11³ samples of [-1,1]³ cover both the unit cube and the unit ball.
        for p in CoefficientPreset::ALL {
            let a = CoefficientField::preset(p);
            assert!(a.a_min > 0.0);
            for i in 0..=10 {
                for j in 0..=10 {
                    for k in 0..=10 {
                        let x = Vec3::new(i as f64, j as f64, k as f64) / 5.0 - Vec3::repeat(1.0);
                        let v = a.value(&x);
                        assert!(a.a_min - 1e-14 <= v && v <= a.a_max + 1e-14, "{p} at {x:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn conormal_examples() {
        let n = Vec3::z();
        let p = ManufacturedProblem::new(
            "const",
            CoefficientField::preset(CoefficientPreset::ExpX3),
            ExactField::Constant(3.0),
        );
        assert_eq!(p.conormal_derivative(&Vec3::new(0.2, 0.3, 0.4), &n), 0.0);
        let x3 = ExactField::from_name("x3").unwrap();
        let p = ManufacturedProblem::new("x3", CoefficientField::constant(1.0), x3);
        assert_eq!(p.conormal_derivative(&Vec3::new(0.5, 0.5, 1.0), &n), 1.0);
        let p = ManufacturedProblem::new("x3", CoefficientField::exponential_x3(1.0), x3);
        assert!((p.conormal_derivative(&Vec3::new(0.0, 0.0, 1.0), &n) - E).abs() < 1e-15);
    }

    #[test]
    fn source_examples() {
        let x = Vec3::new(0.3, -0.2, 0.7);
        let one = CoefficientField::constant(1.0);
        assert_eq!(manufactured_source(&one, &ExactField::RadiusSquared, &x), 6.0);
        let e = CoefficientField::exponential_x3(1.0);
        let f = manufactured_source(&e, &ExactField::X1Squared, &x);
        assert!((f - 2.0 * x.z.exp()).abs() < 1e-14);
        let q = CoefficientField::preset(CoefficientPreset::Quadratic1pX1Sq);
        let u = ExactField::Linear { gradient: Vec3::x(), offset: 0.0 };
        assert!((manufactured_source(&q, &u, &x) - 2.0 * x.x).abs() < 1e-15);
    }

    fn any_point() -> impl Strategy<Value = Vec3> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b, c)| Vec3::new(a, b, c))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn derivatives_match_finite_differences(x in any_point()) {
            let h = 1e-4;
            for p in CoefficientPreset::ALL {
                let a = CoefficientField::preset(p);
                let g = fd_grad(|y| a.value(y), &x, h);
                let gl = fd_grad(|y| a.value(y).ln(), &x, h);
                for i in 0..3 {
                    prop_assert!(rel(a.grad(&x)[i], g[i]) < 1e-5, "{} grad", p);
                    prop_assert!(rel(a.grad_log(&x)[i], gl[i]) < 1e-5, "{} grad_log", p);
                    prop_assert!(rel(a.grad_log(&x)[i], a.grad(&x)[i] / a.value(&x)) < 1e-12);
                }
                // Δ ln a by the 7-point stencil.
                let mut lap = -6.0 * a.value(&x).ln();
                for i in 0..3 {
                    let mut p = x;
                    let mut m = x;
                    p[i] += h;
                    m[i] -= h;
                    lap += a.value(&p).ln() + a.value(&m).ln();
                }
                lap /= h * h;
                prop_assert!((a.laplacian_log(&x) - lap).abs() < 1e-5 * a.laplacian_log(&x).abs().max(1.0));
            }
        }

        #[test]
        fn source_matches_divergence_of_flux(x in any_point()) {
            let h = 1e-4;
            for p in CoefficientPreset::ALL {
                for u in [ExactField::X1Squared, ExactField::RadiusSquared, ExactField::Saddle, ExactField::Linear { gradient: Vec3::new(0.3, -1.0, 2.0), offset: 1.0 }] {
                    let prob = ManufacturedProblem::new("mms", CoefficientField::preset(p), u);
                    let flux = |y: &Vec3, i: usize| prob.coefficient.value(y) * prob.exact_grad_u(y)[i];
                    let mut div = 0.0;
                    for i in 0..3 {
                        let mut pp = x;
                        let mut mm = x;
                        pp[i] += h;
                        mm[i] -= h;
                        div += (flux(&pp, i) - flux(&mm, i)) / (2.0 * h);
                    }
                    prop_assert!(rel(prob.source_f(&x), div) < 1e-5);
                }
            }
        }
    }
}
