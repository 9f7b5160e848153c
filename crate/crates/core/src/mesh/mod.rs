//! Surface extraction, smoothing and PLY output.

mod marching;
mod ply;

pub use marching::marching_cubes;
pub use ply::{read_ply, write_ply, PlyFormat};

use std::collections::HashMap;

use crate::geometry::{Label, Vec3};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub colors: Vec<[u8; 3]>,
    /// Semantic label of each vertex.
    pub labels: Vec<Label>,
}

const PALETTE: [[u8; 3]; 8] = [
    [200, 200, 200],
    [178, 76, 60],
    [60, 150, 70],
    [70, 100, 180],
    [220, 180, 60],
    [140, 80, 160],
    [60, 170, 170],
    [120, 120, 120],
];

pub fn label_color(l: Label) -> [u8; 3] {
    PALETTE[l.index() % PALETTE.len()]
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Number of triangles using each undirected edge.
    pub fn edge_counts(&self) -> HashMap<(u32, u32), usize> {
        let mut counts = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }

    /// Every edge borders exactly two triangles, traversed in opposite
    /// directions.
    pub fn is_watertight(&self) -> bool {
        let mut directed: HashMap<(u32, u32), i32> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *directed.entry((a.min(b), a.max(b))).or_insert(0) += if a < b { 1 } else { -1 };
            }
        }
        directed.values().all(|&d| d == 0) && self.edge_counts().values().all(|&c| c == 2)
    }

    pub fn euler_characteristic(&self) -> i64 {
        let used: std::collections::HashSet<u32> =
            self.triangles.iter().flatten().copied().collect();
        used.len() as i64 - self.edge_counts().len() as i64 + self.triangles.len() as i64
    }

    pub fn area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i as usize]);
                0.5 * (b - a).cross(c - a).norm()
            })
            .sum()
    }

    /// Volume enclosed by a closed mesh; positive when triangles wind
    /// counter-clockwise seen from outside.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i as usize]);
                a.dot(b.cross(c)) / 6.0
            })
            .sum()
    }

    fn neighbors(&self) -> Vec<Vec<u32>> {
        let mut nb: Vec<Vec<u32>> = vec![Vec::new(); self.vertices.len()];
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                nb[a as usize].push(b);
                nb[b as usize].push(a);
            }
        }
        for n in &mut nb {
            n.sort_unstable();
            n.dedup();
        }
        nb
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothing {
    pub iterations: usize,
    pub step: f64,
}

impl Default for Smoothing {
    fn default() -> Self {
        Self {
            iterations: 3,
            step: 0.5,
        }
    }
}

/// Moves every vertex a fraction `step` towards the centroid of its
/// neighbours, all vertices at once, `iterations` times.
pub fn laplacian_smooth(mesh: &TriangleMesh, iterations: usize, step: f64) -> TriangleMesh {
    let nb = mesh.neighbors();
    let mut out = mesh.clone();
    for _ in 0..iterations {
        let prev = out.vertices.clone();
        for (v, n) in nb.iter().enumerate() {
            if n.is_empty() {
                continue;
            }
            let c = n.iter().fold(Vec3::ZERO, |acc, &u| acc + prev[u as usize])
                * (1.0 / n.len() as f64);
            out.vertices[v] = prev[v] + (c - prev[v]) * step;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::VoxelGrid;
    use proptest::prelude::*;

    const FREE: Label = Label(0);

    fn grid_with(n: [usize; 3], occupied: &[[usize; 3]]) -> VoxelGrid {
        let mut g = VoxelGrid::new(n, 1.0, Vec3::ZERO, FREE).unwrap();
        for c in occupied {
            let id = g.id(c[0], c[1], c[2]);
            g.set_label(id, Label(1));
        }
        g
    }

    #[test]
    fn empty_grid_gives_empty_mesh() {
        let m = marching_cubes(&VoxelGrid::cube(4, FREE).unwrap(), FREE);
        assert!(m.vertices.is_empty() && m.triangles.is_empty());
    }

    #[test]
    fn single_voxel_is_a_closed_sphere() {
        let m = marching_cubes(&grid_with([1, 1, 1], &[[0, 0, 0]]), FREE);
        assert_eq!(m.vertices.len(), 6);
        assert_eq!(m.triangles.len(), 8);
        assert_eq!(m.euler_characteristic(), 2);
        assert!(m.is_watertight());
        assert!(m.signed_volume() > 0.0);
        assert!(m.colors.iter().all(|&c| c == label_color(Label(1))));
    }

    #[test]
    fn solid_block_area() {
        let g = VoxelGrid::cube(8, Label(1)).unwrap();
        let m = marching_cubes(&g, FREE);
        assert!(m.is_watertight());
        assert_eq!(m.euler_characteristic(), 2);
        let area = m.area();
        assert!((area - 384.0).abs() <= 0.1 * 384.0, "{area}");
        assert!(m
            .triangles
            .iter()
            .all(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2]));
    }

    #[test]
    fn diagonal_voxels_stay_separate() {
        // Two voxels touching along an edge only, and two touching at a corner.
        for other in [[1, 1, 0], [1, 1, 1]] {
            let m = marching_cubes(&grid_with([2, 2, 2], &[[0, 0, 0], other]), FREE);
            assert!(m.is_watertight());
            assert_eq!(m.euler_characteristic(), 4);
        }
    }

    #[test]
    fn torus_has_genus_one() {
        let ring: Vec<[usize; 3]> = (0..3)
            .flat_map(|x| (0..3).map(move |y| [x, y, 0]))
            .filter(|&c| c != [1, 1, 0])
            .collect();
        let m = marching_cubes(&grid_with([3, 3, 1], &ring), FREE);
        assert!(m.is_watertight());
        assert_eq!(m.euler_characteristic(), 0);
    }

    #[test]
    fn smoothing_tetrahedron() {
        let s = 1.0 / 3f64.sqrt();
        let verts = vec![
            Vec3::new(s, s, s),
            Vec3::new(s, -s, -s),
            Vec3::new(-s, s, -s),
            Vec3::new(-s, -s, s),
        ];
        let mesh = TriangleMesh {
            vertices: verts.clone(),
            triangles: vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]],
            colors: vec![[0; 3]; 4],
            labels: vec![FREE; 4],
        };
        assert_eq!(laplacian_smooth(&mesh, 0, 0.5), mesh);
        let out = laplacian_smooth(&mesh, 1, 0.5);
        // Centroid of the other three is -p/3; half a step lands on p/3.
        for (a, b) in out.vertices.iter().zip(&verts) {
            assert!((*a - *b * (1.0 / 3.0)).norm() < 1e-12);
        }
        assert_eq!(out.triangles, mesh.triangles);
    }

    fn random_grid() -> impl Strategy<Value = VoxelGrid> {
        (1usize..5, 1usize..5, 1usize..5).prop_flat_map(|(x, y, z)| {
            proptest::collection::vec(any::<bool>(), x * y * z).prop_map(move |bits| {
                let mut g =
                    VoxelGrid::new([x, y, z], 0.5, Vec3::new(1.0, -2.0, 0.5), FREE).unwrap();
                for (i, b) in bits.into_iter().enumerate() {
                    if b {
                        g.set_label(i as u32, Label(1 + (i % 2) as u16));
                    }
                }
                g
            })
        })
    }

    proptest! {
        #[test]
        fn padded_output_is_watertight(g in random_grid()) {
            let m = marching_cubes(&g, FREE);
            prop_assert!(m.is_watertight());
            prop_assert!(m.triangles.iter().all(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2]));
            if !m.is_empty() {
                prop_assert!(m.signed_volume() > 0.0);
                prop_assert_eq!(m.euler_characteristic() % 2, 0);
            }
        }

        #[test]
        fn smoothing_keeps_connectivity_and_one_ring_bounds(g in random_grid(), step in 0.0f64..1.0) {
            let m = marching_cubes(&g, FREE);
            let s = laplacian_smooth(&m, 1, step);
            prop_assert_eq!(s.vertices.len(), m.vertices.len());
            prop_assert_eq!(&s.triangles, &m.triangles);
            let nb = m.neighbors();
            for (v, n) in nb.iter().enumerate() {
                for k in 0..3 {
                    let vals = n.iter().map(|&u| m.vertices[u as usize][k]).chain([m.vertices[v][k]]);
                    let (lo, hi) = vals.fold((f64::MAX, f64::MIN), |(a, b), x| (a.min(x), b.max(x)));
                    prop_assert!(s.vertices[v][k] >= lo - 1e-12 && s.vertices[v][k] <= hi + 1e-12);
                }
            }
        }
    }
}
