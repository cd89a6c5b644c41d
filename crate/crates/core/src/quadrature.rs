//! Quadrature on triangles and tetrahedra.
//!
//! Integration routines are written as visitors: they call
//! `visit(x, bary, weight)` for every quadrature node, where `bary` are the
//! barycentric coordinates of `x` in the *original* element (so callers can
//! evaluate basis functions) and `weight` already contains the Jacobian.
//! Weakly singular integrands are handled by Duffy collapses at the singular
//! point, near-singular ones by dyadic subdivision graded toward the point.

use crate::error::{Error, Result};
use crate::geometry::{Tetrahedron, Triangle, Vec3};

/// A quadrature rule on the reference simplex, in barycentric coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule<const N: usize> {
    pub points: Vec<[f64; N]>,
    /// Sum to the reference measure (1/2 for triangles, 1/6 for tetrahedra).
    pub weights: Vec<f64>,
    /// Polynomial degree integrated exactly.
    pub order: usize,
}

pub type TriangleRule = QuadRule<3>;
pub type TetRule = QuadRule<4>;

impl<const N: usize> QuadRule<N> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn orbit3(a: f64, b: f64, c: f64) -> Vec<[f64; 3]> {
    let mut out: Vec<[f64; 3]> = Vec::with_capacity(6);
    for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

fn push_orbit3(rule: &mut TriangleRule, a: f64, b: f64, c: f64, w: f64) {
    for p in orbit3(a, b, c) {
        rule.points.push(p);
        rule.weights.push(w);
    }
}

/// Symmetric Gauss rules on the triangle exact for degree `order`
/// (1, 2, 4 or 6).
pub fn gauss_triangle(order: usize) -> Result<TriangleRule> {
    let mut rule = TriangleRule {
        points: Vec::new(),
        weights: Vec::new(),
        order,
    };
    match order {
        1 => push_orbit3(&mut rule, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.5),
        2 => push_orbit3(&mut rule, 2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0),
        4 => {
            let a = 0.445948490915965;
            push_orbit3(&mut rule, a, a, 1.0 - 2.0 * a, 0.5 * 0.223381589678011);
            let a = 0.091576213509771;
            push_orbit3(&mut rule, a, a, 1.0 - 2.0 * a, 0.5 * 0.109951743655322);
        }
        6 => {
            let a = 0.249286745170910;
            push_orbit3(&mut rule, a, a, 1.0 - 2.0 * a, 0.5 * 0.116786275726379);
            let a = 0.063089014491502;
            push_orbit3(&mut rule, a, a, 1.0 - 2.0 * a, 0.5 * 0.050844906370207);
            let (a, b) = (0.053145049844817, 0.310352451033784);
            push_orbit3(&mut rule, a, b, 1.0 - a - b, 0.5 * 0.082851075618374);
        }
        _ => {
            return Err(Error::invalid(format!(
                "no triangle rule of order {order} (supported: 1, 2, 4, 6)"
            )))
        }
    }
    Ok(rule)
}

fn push_orbit4(rule: &mut TetRule, p: [f64; 4], w: f64) {
    let mut seen: Vec<[f64; 4]> = Vec::new();
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                for l in 0..4 {
                    let idx = [i, j, k, l];
                    let mut sorted = idx;
                    sorted.sort_unstable();
                    if sorted != [0, 1, 2, 3] {
                        continue;
                    }
                    let q = idx.map(|m| p[m]);
                    if !seen.contains(&q) {
                        seen.push(q);
                    }
                }
            }
        }
    }
    for q in seen {
        rule.points.push(q);
        rule.weights.push(w);
    }
}

/// Symmetric positive-weight Gauss rules on the tetrahedron, exact for degree
/// `order` (1, 2 or 4; the order-4 rule is the 14-point degree-5 rule).
pub fn gauss_tet(order: usize) -> Result<TetRule> {
    let mut rule = TetRule {
        points: Vec::new(),
        weights: Vec::new(),
        order,
    };
    match order {
        1 => push_orbit4(&mut rule, [0.25; 4], 1.0 / 6.0),
        2 => {
            let b = 0.138_196_601_125_010_5;
            push_orbit4(&mut rule, [1.0 - 3.0 * b, b, b, b], 1.0 / 24.0);
        }
        4 => {
            let a = 0.092_735_250_310_891_244_364_6;
            push_orbit4(&mut rule, [a, a, a, 1.0 - 3.0 * a], 0.012_248_840_519_393_663_432_5);
            let a = 0.310_885_919_263_300_615_879_4;
            push_orbit4(&mut rule, [a, a, a, 1.0 - 3.0 * a], 0.018_781_320_953_002_653_027_6);
            let b = 0.045_503_704_125_649_570_651_4;
            push_orbit4(&mut rule, [b, b, 0.5 - b, 0.5 - b], 0.007_091_003_462_846_900_137_7);
        }
        _ => {
            return Err(Error::invalid(format!(
                "no tetrahedron rule of order {order} (supported: 1, 2, 4)"
            )))
        }
    }
    Ok(rule)
}

/// `n`-point Gauss–Legendre rule on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wi;
        w[n - 1 - i] = 0.5 * wi;
    }
    (x, w)
}

/// Quadrature settings shared by all potential evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub surface_regular: usize,
    /// Gauss–Legendre points per direction in surface Duffy rules.
    pub surface_singular: usize,
    pub volume_regular: usize,
    /// Gauss–Legendre points per direction in volume Duffy rules.
    pub volume_singular: usize,
    /// A cell is integrated with the regular rule once
    /// `distance >= near_ratio * diameter`.
    pub near_ratio: f64,
    pub max_depth: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            surface_regular: 4,
            surface_singular: 10,
            volume_regular: 2,
            volume_singular: 4,
            near_ratio: 0.5,
            max_depth: 12,
        }
    }
}

/// Precomputed rules for one [`QuadOptions`].
#[derive(Debug, Clone)]
pub struct Quadrature {
    pub options: QuadOptions,
    pub tri_regular: TriangleRule,
    pub tet_regular: TetRule,
    surface_gl: (Vec<f64>, Vec<f64>),
    volume_gl: (Vec<f64>, Vec<f64>),
}

const ON_ELEMENT_TOL: f64 = 1e-10;

impl Quadrature {
    pub fn new(options: QuadOptions) -> Result<Self> {
        if options.surface_singular == 0 || options.volume_singular == 0 {
            return Err(Error::invalid("singular tensor order must be positive"));
        }
        if !(options.near_ratio > 0.0) {
            return Err(Error::invalid("near_ratio must be positive"));
        }
        Ok(Self {
            options,
            tri_regular: gauss_triangle(options.surface_regular)?,
            tet_regular: gauss_tet(options.volume_regular)?,
            surface_gl: gauss_legendre(options.surface_singular),
            volume_gl: gauss_legendre(options.volume_singular),
        })
    }

    // ---- triangles -------------------------------------------------------

    fn tri_cell_regular(
        &self,
        tri: &Triangle,
        cell: &[[f64; 3]; 3],
        visit: &mut impl FnMut(&Vec3, [f64; 3], f64),
    ) {
        let scale = 2.0 * tri.area() * cell_area_fraction(cell);
        for (p, &w) in self.tri_regular.points.iter().zip(&self.tri_regular.weights) {
            let b = combine3(cell, p);
            visit(&tri.point(b), b, w * scale);
        }
    }

    /// Duffy rule on a cell whose corner 0 is the singular point.
    fn tri_cell_duffy(
        &self,
        tri: &Triangle,
        cell: &[[f64; 3]; 3],
        visit: &mut impl FnMut(&Vec3, [f64; 3], f64),
    ) {
        let scale = 2.0 * tri.area() * cell_area_fraction(cell);
        let (x, w) = &self.surface_gl;
        for (&s, &ws) in x.iter().zip(w) {
            for (&t, &wt) in x.iter().zip(w) {
                let mu = [1.0 - s, s * (1.0 - t), s * t];
                let b = combine3(cell, &mu);
                visit(&tri.point(b), b, scale * s * ws * wt);
            }
        }
    }

    /// All nodes of the regular rule on the whole triangle.
    pub fn triangle_regular(&self, tri: &Triangle, visit: &mut impl FnMut(&Vec3, [f64; 3], f64)) {
        self.tri_cell_regular(tri, &IDENTITY3, visit);
    }

    /// Nodes for an integrand singular at `y`, a point of the closed
    /// triangle: the triangle is split at `y` and each piece Duffy-collapsed.
    pub fn triangle_singular(
        &self,
        tri: &Triangle,
        y: &Vec3,
        visit: &mut impl FnMut(&Vec3, [f64; 3], f64),
    ) -> Result<()> {
        let diam = tri.diameter();
        let bary = tri.barycentric(y);
        let off_plane = (tri.point(bary) - y).norm();
        if off_plane > ON_ELEMENT_TOL * diam || bary.iter().any(|&l| l < -ON_ELEMENT_TOL) {
            return Err(Error::invalid("singular point lies outside the triangle"));
        }
        let bary = clamp_bary(bary);
        for i in 0..3 {
            // Sub-triangle (y, v_i, v_{i+1}) has area fraction bary[opposite].
            let k = (i + 2) % 3;
            if bary[k] < ON_ELEMENT_TOL {
                continue;
            }
            let mut a = [0.0; 3];
            let mut b = [0.0; 3];
            a[i] = 1.0;
            b[(i + 1) % 3] = 1.0;
            self.tri_cell_duffy(tri, &[bary, a, b], visit);
        }
        Ok(())
    }

    /// Dispatches on the position of `y`: on the triangle (Duffy), close to it
    /// (graded subdivision) or far (regular rule).
    pub fn triangle_near(&self, tri: &Triangle, y: &Vec3, visit: &mut impl FnMut(&Vec3, [f64; 3], f64)) {
        let diam = tri.diameter();
        let c = tri.centroid();
        let radius = tri.v.iter().map(|v| (v - c).norm()).fold(0.0, f64::max);
        if (y - c).norm() - radius >= self.options.near_ratio * diam {
            self.tri_cell_regular(tri, &IDENTITY3, visit);
            return;
        }
        let dist = tri.distance(y);
        if dist <= ON_ELEMENT_TOL * diam {
            let c = tri.closest_point(y);
            self.triangle_singular(tri, &c, visit)
                .expect("closest point lies on the triangle");
        } else {
            self.tri_graded(tri, &IDENTITY3, y, 0, visit);
        }
    }

    fn tri_graded(
        &self,
        tri: &Triangle,
        cell: &[[f64; 3]; 3],
        y: &Vec3,
        depth: usize,
        visit: &mut impl FnMut(&Vec3, [f64; 3], f64),
    ) {
        let sub = Triangle::new(tri.point(cell[0]), tri.point(cell[1]), tri.point(cell[2]));
        if depth >= self.options.max_depth || sub.distance(y) >= self.options.near_ratio * sub.diameter() {
            self.tri_cell_regular(tri, cell, visit);
            return;
        }
        let m = |i: usize, j: usize| mid3(&cell[i], &cell[j]);
        let (m01, m12, m20) = (m(0, 1), m(1, 2), m(2, 0));
        for child in [
            [cell[0], m01, m20],
            [m01, cell[1], m12],
            [m20, m12, cell[2]],
            [m01, m12, m20],
        ] {
            self.tri_graded(tri, &child, y, depth + 1, visit);
        }
    }

    // ---- tetrahedra ------------------------------------------------------

    fn tet_cell_regular(
        &self,
        tet: &Tetrahedron,
        cell: &[[f64; 4]; 4],
        volume: f64,
        visit: &mut impl FnMut(&Vec3, [f64; 4], f64),
    ) {
        let scale = 6.0 * volume * cell_volume_fraction(cell);
        for (p, &w) in self.tet_regular.points.iter().zip(&self.tet_regular.weights) {
            let b = combine4(cell, p);
            visit(&tet.point(b), b, w * scale);
        }
    }

    fn tet_cell_duffy(
        &self,
        tet: &Tetrahedron,
        cell: &[[f64; 4]; 4],
        volume: f64,
        visit: &mut impl FnMut(&Vec3, [f64; 4], f64),
    ) {
        let scale = 6.0 * volume * cell_volume_fraction(cell);
        let (x, w) = &self.volume_gl;
        for (&s, &ws) in x.iter().zip(w) {
            for (&t, &wt) in x.iter().zip(w) {
                for (&r, &wr) in x.iter().zip(w) {
                    let mu = [1.0 - s, s * (1.0 - t), s * t * (1.0 - r), s * t * r];
                    let b = combine4(cell, &mu);
                    visit(&tet.point(b), b, scale * s * s * t * ws * wt * wr);
                }
            }
        }
    }

    pub fn tet_regular(&self, tet: &Tetrahedron, visit: &mut impl FnMut(&Vec3, [f64; 4], f64)) {
        self.tet_cell_regular(tet, &IDENTITY4, tet.volume(), visit);
    }

    /// Nodes for an integrand with an (at most `|x - y|⁻²`) singularity at
    /// `y`: Duffy collapse if `y` is a vertex, split-and-collapse if `y` is in
    /// the closed tetrahedron, graded subdivision if `y` is close, the
    /// regular rule otherwise.
    pub fn tet_near(&self, tet: &Tetrahedron, y: &Vec3, visit: &mut impl FnMut(&Vec3, [f64; 4], f64)) {
        let volume = tet.volume();
        let diam = tet.diameter();
        let c = tet.centroid();
        let radius = tet.v.iter().map(|v| (v - c).norm()).fold(0.0, f64::max);
        if (y - c).norm() - radius >= self.options.near_ratio * diam {
            self.tet_cell_regular(tet, &IDENTITY4, volume, visit);
            return;
        }
        let bary = tet.barycentric(y);
        if bary.iter().all(|&l| l >= -ON_ELEMENT_TOL) {
            let bary = clamp_bary(bary);
            for i in 0..4 {
                if bary[i] < ON_ELEMENT_TOL {
                    continue;
                }
                // Replace vertex i by y; the sub-tet has volume fraction bary[i].
                let mut cell = IDENTITY4;
                cell[i] = bary;
                cell.swap(0, i);
                self.tet_cell_duffy(tet, &cell, volume, visit);
            }
            return;
        }
        if tet.distance(y) >= self.options.near_ratio * diam {
            self.tet_cell_regular(tet, &IDENTITY4, volume, visit);
        } else {
            self.tet_graded(tet, &IDENTITY4, volume, y, 0, visit);
        }
    }

    fn tet_graded(
        &self,
        tet: &Tetrahedron,
        cell: &[[f64; 4]; 4],
        volume: f64,
        y: &Vec3,
        depth: usize,
        visit: &mut impl FnMut(&Vec3, [f64; 4], f64),
    ) {
        let sub = Tetrahedron::new(cell.map(|b| tet.point(b)));
        if depth >= self.options.max_depth || sub.distance(y) >= self.options.near_ratio * sub.diameter() {
            self.tet_cell_regular(tet, cell, volume, visit);
            return;
        }
        for child in red_refinement(cell) {
            self.tet_graded(tet, &child, volume, y, depth + 1, visit);
        }
    }
}

const IDENTITY3: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
const IDENTITY4: [[f64; 4]; 4] = [
    [1.0, 0.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
];

fn clamp_bary<const N: usize>(mut b: [f64; N]) -> [f64; N] {
    for l in b.iter_mut() {
        *l = l.max(0.0);
    }
    let s: f64 = b.iter().sum();
    b.map(|l| l / s)
}

fn combine3(cell: &[[f64; 3]; 3], mu: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|k| cell[0][k] * mu[0] + cell[1][k] * mu[1] + cell[2][k] * mu[2])
}

fn combine4(cell: &[[f64; 4]; 4], mu: &[f64; 4]) -> [f64; 4] {
    std::array::from_fn(|k| (0..4).map(|c| cell[c][k] * mu[c]).sum())
}

fn mid3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    std::array::from_fn(|k| 0.5 * (a[k] + b[k]))
}

fn mid4(a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    std::array::from_fn(|k| 0.5 * (a[k] + b[k]))
}

/// Area of a barycentric cell relative to its parent triangle.
fn cell_area_fraction(cell: &[[f64; 3]; 3]) -> f64 {
    let m = nalgebra::Matrix3::from_fn(|r, c| cell[c][r]);
    m.determinant().abs()
}

fn cell_volume_fraction(cell: &[[f64; 4]; 4]) -> f64 {
    let m = nalgebra::Matrix4::from_fn(|r, c| cell[c][r]);
    m.determinant().abs()
}

/// Regular 1:8 subdivision; the inner octahedron is cut along one diagonal.
fn red_refinement(c: &[[f64; 4]; 4]) -> [[[f64; 4]; 4]; 8] {
    let m = |i: usize, j: usize| mid4(&c[i], &c[j]);
    let (m01, m02, m03, m12, m13, m23) = (m(0, 1), m(0, 2), m(0, 3), m(1, 2), m(1, 3), m(2, 3));
    [
        [c[0], m01, m02, m03],
        [m01, c[1], m12, m13],
        [m02, m12, c[2], m23],
        [m03, m13, m23, c[3]],
        [m01, m02, m03, m13],
        [m01, m02, m12, m13],
        [m02, m03, m13, m23],
        [m02, m12, m13, m23],
    ]
}

/// `∫_T k(x) dS` for `k` weakly singular at `y` on the closed triangle.
pub fn singular_triangle_integral(
    quad: &Quadrature,
    tri: &Triangle,
    y: &Vec3,
    kernel: impl Fn(&Vec3) -> f64,
) -> Result<f64> {
    let mut sum = 0.0;
    quad.triangle_singular(tri, y, &mut |x, _, w| sum += w * kernel(x))?;
    Ok(sum)
}

/// `∫_K k(x) dx` for `k` with at most an `|x - y|⁻²` singularity at `y`.
pub fn near_singular_tet_integral(
    quad: &Quadrature,
    tet: &Tetrahedron,
    y: &Vec3,
    kernel: impl Fn(&Vec3) -> f64,
) -> f64 {
    let mut sum = 0.0;
    quad.tet_near(tet, y, &mut |x, _, w| sum += w * kernel(x));
    sum
}
