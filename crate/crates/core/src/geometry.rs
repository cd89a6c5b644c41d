//! Flat simplices in three dimensions.

use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;

/// Straight-sided triangle given by its three corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub v: [Vec3; 3],
}

impl Triangle {
    pub fn new(a: Vec3, b: Vec3, c: Vec3) -> Self {
        Self { v: [a, b, c] }
    }

    /// Unnormalized normal `(b - a) x (c - a)`, twice the area in length.
    pub fn cross(&self) -> Vec3 {
        (self.v[1] - self.v[0]).cross(&(self.v[2] - self.v[0]))
    }

    pub fn area(&self) -> f64 {
        0.5 * self.cross().norm()
    }

    pub fn unit_normal(&self) -> Vec3 {
        self.cross().normalize()
    }

    pub fn centroid(&self) -> Vec3 {
        (self.v[0] + self.v[1] + self.v[2]) / 3.0
    }

    pub fn point(&self, bary: [f64; 3]) -> Vec3 {
        self.v[0] * bary[0] + self.v[1] * bary[1] + self.v[2] * bary[2]
    }

    pub fn diameter(&self) -> f64 {
        let [a, b, c] = self.v;
        (a - b).norm().max((b - c).norm()).max((c - a).norm())
    }

    /// Barycentric coordinates of the orthogonal projection of `p` onto the
    /// plane of the triangle.
    pub fn barycentric(&self, p: &Vec3) -> [f64; 3] {
        let e0 = self.v[1] - self.v[0];
        let e1 = self.v[2] - self.v[0];
        let d = p - self.v[0];
        let d00 = e0.dot(&e0);
        let d01 = e0.dot(&e1);
        let d11 = e1.dot(&e1);
        let d20 = d.dot(&e0);
        let d21 = d.dot(&e1);
        let det = d00 * d11 - d01 * d01;
        let l1 = (d11 * d20 - d01 * d21) / det;
        let l2 = (d00 * d21 - d01 * d20) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Closest point of the closed triangle to `p`.
    pub fn closest_point(&self, p: &Vec3) -> Vec3 {
        // Voronoi-region walk over vertices, edges and the face.
        let [a, b, c] = self.v;
        let ab = b - a;
        let ac = c - a;
        let ap = p - a;
        let d1 = ab.dot(&ap);
        let d2 = ac.dot(&ap);
        if d1 <= 0.0 && d2 <= 0.0 {
            return a;
        }
        let bp = p - b;
        let d3 = ab.dot(&bp);
        let d4 = ac.dot(&bp);
        if d3 >= 0.0 && d4 <= d3 {
            return b;
        }
        let vc = d1 * d4 - d3 * d2;
        if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
            return a + ab * (d1 / (d1 - d3));
        }
        let cp = p - c;
        let d5 = ab.dot(&cp);
        let d6 = ac.dot(&cp);
        if d6 >= 0.0 && d5 <= d6 {
            return c;
        }
        let vb = d5 * d2 - d1 * d6;
        if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
            return a + ac * (d2 / (d2 - d6));
        }
        let va = d3 * d6 - d5 * d4;
        if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
            return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
        }
        let denom = 1.0 / (va + vb + vc);
        a + ab * (vb * denom) + ac * (vc * denom)
    }

    pub fn distance(&self, p: &Vec3) -> f64 {
        (self.closest_point(p) - p).norm()
    }
}

/// Straight-sided tetrahedron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tetrahedron {
    pub v: [Vec3; 4],
}

pub(crate) const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]];

impl Tetrahedron {
    pub fn new(v: [Vec3; 4]) -> Self {
        Self { v }
    }

    fn edge_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[
            self.v[1] - self.v[0],
            self.v[2] - self.v[0],
            self.v[3] - self.v[0],
        ])
    }

    pub fn signed_volume(&self) -> f64 {
        self.edge_matrix().determinant() / 6.0
    }

    pub fn volume(&self) -> f64 {
        self.signed_volume().abs()
    }

    pub fn point(&self, bary: [f64; 4]) -> Vec3 {
        self.v[0] * bary[0] + self.v[1] * bary[1] + self.v[2] * bary[2] + self.v[3] * bary[3]
    }

    pub fn centroid(&self) -> Vec3 {
        self.point([0.25; 4])
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in i + 1..4 {
                d = d.max((self.v[i] - self.v[j]).norm());
            }
        }
        d
    }

    pub fn barycentric(&self, p: &Vec3) -> [f64; 4] {
        let m = self.edge_matrix();
        let l = m
            .try_inverse()
            .map(|inv| inv * (p - self.v[0]))
            .unwrap_or_else(|| Vec3::repeat(f64::NAN));
        [1.0 - l.x - l.y - l.z, l.x, l.y, l.z]
    }

    pub fn face(&self, i: usize) -> Triangle {
        let f = TET_FACES[i];
        Triangle::new(self.v[f[0]], self.v[f[1]], self.v[f[2]])
    }

    /// Euclidean distance from `p` to the closed tetrahedron.
    pub fn distance(&self, p: &Vec3) -> f64 {
        let b = self.barycentric(p);
        if b.iter().all(|&l| l >= 0.0) {
            return 0.0;
        }
        (0..4)
            .map(|i| self.face(i).distance(p))
            .fold(f64::INFINITY, f64::min)
    }
}
