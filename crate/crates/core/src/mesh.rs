//! Volume and boundary discretizations of the domain.
//!
//! Two domains are provided: the unit cube `[0,1]³` (tetrahedral volume mesh
//! plus its boundary, bottom face Dirichlet) and the unit sphere (boundary
//! only, icosahedral). A coned ball mesh is available for volume-potential
//! checks.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::{Tetrahedron, Triangle, Vec3, TET_FACES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryPart {
    Dirichlet,
    Neumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VertexClass {
    Interior,
    BoundaryDirichlet,
    BoundaryNeumann,
    /// Shared by a Dirichlet and a Neumann triangle.
    Interface,
}

/// How boundary triangles are split into Dirichlet and Neumann parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionRule {
    /// The cube face `x₃ = 0` is Dirichlet, the other five faces Neumann.
    BottomFaceDirichlet,
    /// Triangles with centroid below mid-height (`x₃ = 1/2` on the cube,
    /// `x₃ = 0` on the sphere and ball) are Dirichlet.
    LowerHalfDirichlet,
    AllNeumann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshKind {
    Cube { n: usize },
    Sphere { level: usize },
    Ball { level: usize },
}

impl fmt::Display for MeshKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshKind::Cube { n } => write!(f, "cube(n={n})"),
            MeshKind::Sphere { level } => write!(f, "sphere(level={level})"),
            MeshKind::Ball { level } => write!(f, "ball(level={level})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DomainMesh {
    pub kind: MeshKind,
    pub partition: PartitionRule,
    pub vertices: Vec<Vec3>,
    pub tetrahedra: Vec<[usize; 4]>,
    pub boundary_triangles: Vec<[usize; 3]>,
    pub triangle_part: Vec<BoundaryPart>,
    pub triangle_normal: Vec<Vec3>,
    pub triangle_area: Vec<f64>,
    pub vertex_class: Vec<VertexClass>,
}

impl DomainMesh {
    /// Structured Kuhn mesh of the unit cube: `n³` cells, six tetrahedra each.
    pub fn cube(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("cube mesh needs n >= 1 subdivisions"));
        }
        let m = n + 1;
        let h = 1.0 / n as f64;
        let idx = |i: usize, j: usize, k: usize| i + m * (j + m * k);
        let mut vertices = Vec::with_capacity(m * m * m);
        for k in 0..m {
            for j in 0..m {
                for i in 0..m {
                    vertices.push(Vec3::new(i as f64 * h, j as f64 * h, k as f64 * h));
                }
            }
        }
        // Every cell is cut along its main diagonal; each tet follows one
        // monotone lattice path from the low to the high corner.
        const PATHS: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let mut tetrahedra = Vec::with_capacity(6 * n * n * n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    for path in PATHS {
                        let mut c = [i, j, k];
                        let mut tet = [idx(i, j, k); 4];
                        for (step, axis) in path.into_iter().enumerate() {
                            c[axis] += 1;
                            tet[step + 1] = idx(c[0], c[1], c[2]);
                        }
                        tetrahedra.push(tet);
                    }
                }
            }
        }
        Ok(Self::from_volume(
            MeshKind::Cube { n },
            PartitionRule::BottomFaceDirichlet,
            vertices,
            tetrahedra,
        ))
    }

    /// Icosahedron refined `level` times, projected onto the unit sphere.
    /// Boundary only; every triangle is Neumann.
    pub fn sphere_boundary(level: usize) -> Self {
        let (vertices, triangles) = icosphere(level);
        Self::from_surface(MeshKind::Sphere { level }, PartitionRule::AllNeumann, vertices, triangles)
    }

    /// Unit ball: the icosphere surface coned to the origin.
    pub fn ball(level: usize) -> Self {
        let (mut vertices, triangles) = icosphere(level);
        let center = vertices.len();
        vertices.push(Vec3::zeros());
        let tetrahedra = triangles
            .iter()
            .map(|t| [center, t[0], t[1], t[2]])
            .collect();
        Self::from_volume(MeshKind::Ball { level }, PartitionRule::AllNeumann, vertices, tetrahedra)
    }

    fn from_volume(
        kind: MeshKind,
        partition: PartitionRule,
        vertices: Vec<Vec3>,
        mut tetrahedra: Vec<[usize; 4]>,
    ) -> Self {
        for t in tetrahedra.iter_mut() {
            let tet = Tetrahedron::new(t.map(|i| vertices[i]));
            if tet.signed_volume() < 0.0 {
                t.swap(2, 3);
            }
        }
        let mut face_count: HashMap<[usize; 3], u32> = HashMap::new();
        for t in &tetrahedra {
            for f in TET_FACES {
                let mut key = f.map(|i| t[i]);
                key.sort_unstable();
                *face_count.entry(key).or_default() += 1;
            }
        }
        let mut triangles = Vec::new();
        for t in &tetrahedra {
            for f in TET_FACES {
                let face = f.map(|i| t[i]);
                let mut key = face;
                key.sort_unstable();
                if face_count[&key] == 1 {
                    triangles.push(face);
                }
            }
        }
        let mut mesh = Self::bare(kind, partition, vertices, tetrahedra, triangles);
        mesh.apply_partition();
        mesh
    }

    fn from_surface(
        kind: MeshKind,
        partition: PartitionRule,
        vertices: Vec<Vec3>,
        mut triangles: Vec<[usize; 3]>,
    ) -> Self {
        for t in triangles.iter_mut() {
            let tri = Triangle::new(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            if tri.cross().dot(&tri.centroid()) < 0.0 {
                t.swap(1, 2);
            }
        }
        let mut mesh = Self::bare(kind, partition, vertices, Vec::new(), triangles);
        mesh.apply_partition();
        mesh
    }

    fn bare(
        kind: MeshKind,
        partition: PartitionRule,
        vertices: Vec<Vec3>,
        tetrahedra: Vec<[usize; 4]>,
        boundary_triangles: Vec<[usize; 3]>,
    ) -> Self {
        let (triangle_normal, triangle_area) = boundary_triangles
            .iter()
            .map(|t| {
                let tri = Triangle::new(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
                (tri.unit_normal(), tri.area())
            })
            .unzip();
        let nt = boundary_triangles.len();
        let nv = vertices.len();
        Self {
            kind,
            partition,
            vertices,
            tetrahedra,
            boundary_triangles,
            triangle_part: vec![BoundaryPart::Neumann; nt],
            triangle_normal,
            triangle_area,
            vertex_class: vec![VertexClass::Interior; nv],
        }
    }

    /// Re-tags the boundary triangles with `rule` and reclassifies vertices.
    pub fn with_partition(mut self, rule: PartitionRule) -> Self {
        self.partition = rule;
        self.apply_partition();
        self
    }

    fn apply_partition(&mut self) {
        let tol = 1e-12;
        let mid_height = match self.kind {
            MeshKind::Cube { .. } => 0.5,
            MeshKind::Sphere { .. } | MeshKind::Ball { .. } => 0.0,
        };
        for (t, tri) in self.boundary_triangles.iter().enumerate() {
            let c = tri.iter().map(|&i| self.vertices[i]).sum::<Vec3>() / 3.0;
            self.triangle_part[t] = match self.partition {
                PartitionRule::BottomFaceDirichlet => {
                    if tri.iter().all(|&i| self.vertices[i].z.abs() < tol) {
                        BoundaryPart::Dirichlet
                    } else {
                        BoundaryPart::Neumann
                    }
                }
                PartitionRule::LowerHalfDirichlet => {
                    if c.z < mid_height {
                        BoundaryPart::Dirichlet
                    } else {
                        BoundaryPart::Neumann
                    }
                }
                PartitionRule::AllNeumann => BoundaryPart::Neumann,
            };
        }
        self.classify_vertices();
    }

    fn classify_vertices(&mut self) {
        let mut seen = vec![(false, false); self.vertices.len()];
        for (tri, part) in self.boundary_triangles.iter().zip(&self.triangle_part) {
            for &i in tri {
                match part {
                    BoundaryPart::Dirichlet => seen[i].0 = true,
                    BoundaryPart::Neumann => seen[i].1 = true,
                }
            }
        }
        self.vertex_class = seen
            .into_iter()
            .map(|s| match s {
                (false, false) => VertexClass::Interior,
                (true, false) => VertexClass::BoundaryDirichlet,
                (false, true) => VertexClass::BoundaryNeumann,
                (true, true) => VertexClass::Interface,
            })
            .collect();
    }

    /// One uniform refinement step; partition tags are inherited.
    pub fn refine(&self) -> Result<Self> {
        match self.kind {
            MeshKind::Cube { n } => Ok(Self::cube(2 * n)?.with_partition(self.partition)),
            MeshKind::Ball { level } => Ok(Self::ball(level + 1).with_partition(self.partition)),
            MeshKind::Sphere { level } => {
                let mut cache = HashMap::new();
                let mut vertices = self.vertices.clone();
                let mut triangles = Vec::with_capacity(4 * self.boundary_triangles.len());
                let mut parts = Vec::with_capacity(triangles.capacity());
                for (tri, &part) in self.boundary_triangles.iter().zip(&self.triangle_part) {
                    for child in split_triangle(*tri, &mut vertices, &mut cache) {
                        triangles.push(child);
                        parts.push(part);
                    }
                }
                let mut mesh = Self::bare(
                    MeshKind::Sphere { level: level + 1 },
                    self.partition,
                    vertices,
                    Vec::new(),
                    triangles,
                );
                mesh.triangle_part = parts;
                mesh.classify_vertices();
                Ok(mesh)
            }
        }
    }

    pub fn has_volume(&self) -> bool {
        !self.tetrahedra.is_empty()
    }

    pub fn triangle(&self, t: usize) -> Triangle {
        let [a, b, c] = self.boundary_triangles[t];
        Triangle::new(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn tet(&self, t: usize) -> Tetrahedron {
        Tetrahedron::new(self.tetrahedra[t].map(|i| self.vertices[i]))
    }

    pub fn volume(&self) -> f64 {
        (0..self.tetrahedra.len()).map(|t| self.tet(t).signed_volume()).sum()
    }

    pub fn boundary_area(&self) -> f64 {
        self.triangle_area.iter().sum()
    }

    /// Volume enclosed by the boundary triangles, by the divergence theorem.
    pub fn enclosed_volume(&self) -> f64 {
        (0..self.boundary_triangles.len())
            .map(|t| self.triangle(t).centroid().dot(&self.triangle_normal[t]) * self.triangle_area[t])
            .sum::<f64>()
            / 3.0
    }

    /// Largest element diameter (tetrahedra if present, else triangles).
    pub fn mesh_size(&self) -> f64 {
        if self.has_volume() {
            (0..self.tetrahedra.len())
                .map(|t| self.tet(t).diameter())
                .fold(0.0, f64::max)
        } else {
            (0..self.boundary_triangles.len())
                .map(|t| self.triangle(t).diameter())
                .fold(0.0, f64::max)
        }
    }

    pub fn triangles_in(&self, part: BoundaryPart) -> impl Iterator<Item = usize> + '_ {
        (0..self.boundary_triangles.len()).filter(move |&t| self.triangle_part[t] == part)
    }

    pub fn vertices_of_class(&self, class: VertexClass) -> impl Iterator<Item = usize> + '_ {
        (0..self.vertices.len()).filter(move |&v| self.vertex_class[v] == class)
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.vertex_class[v] != VertexClass::Interior
    }

    /// Whether the triangles tagged `part` form one edge-connected patch.
    pub fn part_is_edge_connected(&self, part: BoundaryPart) -> bool {
        let tris: Vec<usize> = self.triangles_in(part).collect();
        if tris.is_empty() {
            return false;
        }
        let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for &t in &tris {
            for e in edges(&self.boundary_triangles[t]) {
                by_edge.entry(e).or_default().push(t);
            }
        }
        let mut visited = HashSet::from([tris[0]]);
        let mut queue = VecDeque::from([tris[0]]);
        while let Some(t) = queue.pop_front() {
            for e in edges(&self.boundary_triangles[t]) {
                for &s in &by_edge[&e] {
                    if visited.insert(s) {
                        queue.push_back(s);
                    }
                }
            }
        }
        visited.len() == tris.len()
    }

    /// Edges shared by a Dirichlet and a Neumann triangle.
    pub fn interface_edges(&self) -> Vec<(usize, usize)> {
        let mut parts: BTreeMap<(usize, usize), (bool, bool)> = BTreeMap::new();
        for (tri, part) in self.boundary_triangles.iter().zip(&self.triangle_part) {
            for e in edges(tri) {
                let entry = parts.entry(e).or_default();
                match part {
                    BoundaryPart::Dirichlet => entry.0 = true,
                    BoundaryPart::Neumann => entry.1 = true,
                }
            }
        }
        parts
            .into_iter()
            .filter(|(_, (d, n))| *d && *n)
            .map(|(e, _)| e)
            .collect()
    }

    /// Whether the interface edges form a single closed loop.
    pub fn interface_is_closed_loop(&self) -> bool {
        let edges = self.interface_edges();
        if edges.is_empty() {
            return false;
        }
        let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
        for &(a, b) in &edges {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        if adj.values().any(|n| n.len() != 2) {
            return false;
        }
        let start = edges[0].0;
        let (mut prev, mut cur, mut steps) = (start, adj[&start][0], 1);
        while cur != start {
            let next = if adj[&cur][0] == prev { adj[&cur][1] } else { adj[&cur][0] };
            prev = cur;
            cur = next;
            steps += 1;
        }
        steps == edges.len()
    }

    /// Boundary triangles incident to each vertex.
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for (t, tri) in self.boundary_triangles.iter().enumerate() {
            for &v in tri {
                out[v].push(t);
            }
        }
        out
    }
}

fn edges(t: &[usize; 3]) -> [(usize, usize); 3] {
    let e = |a: usize, b: usize| (a.min(b), a.max(b));
    [e(t[0], t[1]), e(t[1], t[2]), e(t[2], t[0])]
}

fn split_triangle(
    t: [usize; 3],
    vertices: &mut Vec<Vec3>,
    cache: &mut HashMap<(usize, usize), usize>,
) -> [[usize; 3]; 4] {
    let mut mid = |a: usize, b: usize| {
        *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
            vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
            vertices.len() - 1
        })
    };
    let ab = mid(t[0], t[1]);
    let bc = mid(t[1], t[2]);
    let ca = mid(t[2], t[0]);
    [[t[0], ab, ca], [ab, t[1], bc], [ca, bc, t[2]], [ab, bc, ca]]
}

fn icosphere(level: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .into_iter()
    .map(|(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache = HashMap::new();
        triangles = triangles
            .iter()
            .flat_map(|&t| split_triangle(t, &mut vertices, &mut cache))
            .collect();
    }
    (vertices, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_counts() {
        let m = DomainMesh::cube(1).unwrap();
        assert_eq!((m.vertices.len(), m.tetrahedra.len(), m.boundary_triangles.len()), (8, 6, 12));
        assert_eq!(m.triangles_in(BoundaryPart::Dirichlet).count(), 2);
        assert_eq!(m.triangles_in(BoundaryPart::Neumann).count(), 10);
        let m = DomainMesh::cube(2).unwrap();
        assert_eq!((m.vertices.len(), m.tetrahedra.len(), m.boundary_triangles.len()), (27, 48, 48));
        assert!(matches!(DomainMesh::cube(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn cube_geometry_invariants() {
        for n in [1, 2, 3, 4] {
            let m = DomainMesh::cube(n).unwrap();
            assert!((m.boundary_area() - 6.0).abs() < 1e-12);
            assert!((m.volume() - 1.0).abs() < 1e-12);
            assert!((m.enclosed_volume() - 1.0).abs() < 1e-10);
            for t in 0..m.tetrahedra.len() {
                assert!(m.tet(t).signed_volume() > 0.0);
            }
            for t in 0..m.boundary_triangles.len() {
                let n = m.triangle_normal[t];
                assert!((n.norm() - 1.0).abs() <= 1e-12);
                assert!(m.triangle_area[t] > 0.0);
                // Outward: points away from the cube center.
                assert!(n.dot(&(m.triangle(t).centroid() - Vec3::repeat(0.5))) > 0.0);
            }
        }
    }

    #[test]
    fn faces_shared_once_or_twice() {
        let m = DomainMesh::cube(3).unwrap();
        let mut count: HashMap<[usize; 3], u32> = HashMap::new();
        for t in &m.tetrahedra {
            for f in TET_FACES {
                let mut k = f.map(|i| t[i]);
                k.sort_unstable();
                *count.entry(k).or_default() += 1;
            }
        }
        assert!(count.values().all(|&c| c == 1 || c == 2));
        for tri in &m.boundary_triangles {
            let mut k = *tri;
            k.sort_unstable();
            assert_eq!(count[&k], 1);
        }
        assert_eq!(count.values().filter(|&&c| c == 1).count(), m.boundary_triangles.len());
    }

    #[test]
    fn partition_is_connected_with_closed_interface() {
        for n in [1, 2, 4] {
            let m = DomainMesh::cube(n).unwrap();
            assert!(m.part_is_edge_connected(BoundaryPart::Dirichlet));
            assert!(m.part_is_edge_connected(BoundaryPart::Neumann));
            assert!(m.interface_is_closed_loop());
            assert_eq!(m.interface_edges().len(), 4 * n);
            for (v, x) in m.vertices.iter().enumerate() {
                let on_rim = x.z == 0.0 && (x.x == 0.0 || x.x == 1.0 || x.y == 0.0 || x.y == 1.0);
                assert_eq!(m.vertex_class[v] == VertexClass::Interface, on_rim);
            }
        }
    }

    #[test]
    fn sphere_counts_and_area() {
        let s0 = DomainMesh::sphere_boundary(0);
        assert_eq!((s0.vertices.len(), s0.boundary_triangles.len()), (12, 20));
        let s1 = DomainMesh::sphere_boundary(1);
        assert_eq!((s1.vertices.len(), s1.boundary_triangles.len()), (42, 80));
        assert_eq!(s1.refine().unwrap().boundary_triangles.len(), 320);
        let mut prev = 0.0;
        for level in 0..4 {
            let s = DomainMesh::sphere_boundary(level);
            let area = s.boundary_area();
            assert!(area < 4.0 * std::f64::consts::PI && area > prev);
            prev = area;
            for v in &s.vertices {
                assert!((v.norm() - 1.0).abs() < 1e-14);
            }
        }
        assert!((prev - 4.0 * std::f64::consts::PI).abs() / (4.0 * std::f64::consts::PI) < 0.01);
    }

    #[test]
    fn refine_matches_regeneration() {
        let r = DomainMesh::cube(1).unwrap().refine().unwrap();
        let g = DomainMesh::cube(2).unwrap();
        assert_eq!(r.vertices, g.vertices);
        assert_eq!(r.tetrahedra, g.tetrahedra);
        assert_eq!(r.boundary_triangles, g.boundary_triangles);
        assert_eq!(r.triangle_part, g.triangle_part);

        let s = DomainMesh::sphere_boundary(1).with_partition(PartitionRule::LowerHalfDirichlet);
        let r = s.refine().unwrap().refine().unwrap();
        assert_eq!(r.boundary_triangles.len(), 16 * s.boundary_triangles.len());
        let d0 = s.triangles_in(BoundaryPart::Dirichlet).count();
        assert_eq!(r.triangles_in(BoundaryPart::Dirichlet).count(), 16 * d0);
    }

    #[test]
    fn ball_mesh() {
        let b = DomainMesh::ball(2);
        assert_eq!(b.tetrahedra.len(), 320);
        assert_eq!(b.boundary_triangles.len(), 320);
        assert!((b.volume() - b.enclosed_volume()).abs() < 1e-12);
        assert_eq!(b.vertex_class[b.vertices.len() - 1], VertexClass::Interior);
    }
}
