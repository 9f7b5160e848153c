use std::collections::HashMap;
use std::sync::OnceLock;

use super::{label_color, TriangleMesh};
use crate::geometry::{Label, Vec3, VoxelGrid};

/// Cube corner `k` sits at offset `(k & 1, (k >> 1) & 1, (k >> 2) & 1)`.
fn corner_offset(k: usize) -> [usize; 3] {
    [k & 1, (k >> 1) & 1, (k >> 2) & 1]
}

/// The 12 cube edges as (lower corner, upper corner, axis).
fn cube_edges() -> &'static [(usize, usize, usize); 12] {
    static EDGES: OnceLock<[(usize, usize, usize); 12]> = OnceLock::new();
    EDGES.get_or_init(|| {
        let mut out = [(0, 0, 0); 12];
        let mut n = 0;
        for axis in 0..3 {
            for k in 0..8 {
                if k & (1 << axis) == 0 {
                    out[n] = (k, k | (1 << axis), axis);
                    n += 1;
                }
            }
        }
        out
    })
}

fn edge_index(a: usize, b: usize) -> usize {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    cube_edges()
        .iter()
        .position(|&(p, q, _)| p == lo && q == hi)
        .expect("corners share an edge")
}

/// Corners of each face, counter-clockwise seen from outside the cube.
fn cube_faces() -> [[usize; 4]; 6] {
    let mut faces = [[0; 4]; 6];
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in 0..2 {
            let at = |du: usize, dv: usize| (side << axis) | (du << u) | (dv << v);
            faces[2 * axis + side] = if side == 1 {
                [at(0, 0), at(1, 0), at(1, 1), at(0, 1)]
            } else {
                [at(0, 0), at(0, 1), at(1, 1), at(1, 0)]
            };
        }
    }
    faces
}

/// Surface loops for every inside/outside corner pattern, as cycles of cube
/// edge indices. Loops are traced with the inside corners on the left as seen
/// from outside the cube, then reversed so they wind counter-clockwise seen
/// from outside the solid. On faces with diagonally
/// opposite inside corners the inside corners are cut off separately, a rule
/// that depends only on the face and so agrees between neighbouring cubes.
fn case_table() -> &'static [Vec<Vec<u8>>; 256] {
    static TABLE: OnceLock<[Vec<Vec<u8>>; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let faces = cube_faces();
        std::array::from_fn(|case| {
            let inside = |k: usize| case >> k & 1 == 1;
            let mut next = [None::<usize>; 12];
            for f in &faces {
                for j in 0..4 {
                    let (cj, cn) = (f[j], f[(j + 1) % 4]);
                    if !(inside(cj) && !inside(cn)) {
                        continue;
                    }
                    // Walk back over the inside run to where the face boundary enters it.
                    let mut i = j;
                    while inside(f[(i + 3) % 4]) {
                        i = (i + 3) % 4;
                    }
                    let from = edge_index(cj, cn);
                    let to = edge_index(f[(i + 3) % 4], f[i]);
                    next[from] = Some(to);
                }
            }
            let mut seen = [false; 12];
            let mut loops = Vec::new();
            for start in 0..12 {
                if seen[start] || next[start].is_none() {
                    continue;
                }
                let mut lp = Vec::new();
                let mut e = start;
                while !seen[e] {
                    seen[e] = true;
                    lp.push(e as u8);
                    e = next[e].expect("surface loops are closed");
                }
                lp.reverse();
                loops.push(lp);
            }
            loops
        })
    })
}

/// Faces (by index into `cube_faces`) containing each cube edge.
fn edge_faces() -> [u8; 12] {
    let faces = cube_faces();
    std::array::from_fn(|e| {
        let (a, b, _) = cube_edges()[e];
        let mut mask = 0u8;
        for (fi, f) in faces.iter().enumerate() {
            if f.contains(&a) && f.contains(&b) {
                mask |= 1 << fi;
            }
        }
        mask
    })
}

/// Triangulates a loop as a fan from a vertex whose diagonals all cross the
/// cube interior, so no diagonal can coincide with one from the neighbouring
/// cube. Returns positions within the loop, or `None` if no such vertex
/// exists.
fn fan(lp: &[u8], faces: &[u8; 12]) -> Option<Vec<[usize; 3]>> {
    let m = lp.len();
    (0..m).find_map(|s| {
        let ok = (2..m - 1).all(|k| faces[lp[s] as usize] & faces[lp[(s + k) % m] as usize] == 0);
        ok.then(|| {
            (1..m - 1)
                .map(|k| [s, (s + k) % m, (s + k + 1) % m])
                .collect()
        })
    })
}

struct Builder<'a> {
    grid: &'a VoxelGrid,
    free: Label,
    mesh: TriangleMesh,
    index: HashMap<([i64; 3], usize), u32>,
}

impl Builder<'_> {
    fn sample(&self, p: [i64; 3]) -> Option<Label> {
        self.grid
            .try_id(p)
            .map(|id| self.grid.label(id))
            .filter(|&l| l != self.free)
    }

    fn push(&mut self, p: Vec3, label: Label) -> u32 {
        self.mesh.vertices.push(p);
        self.mesh.colors.push(label_color(label));
        self.mesh.labels.push(label);
        (self.mesh.vertices.len() - 1) as u32
    }

    /// Vertex at the midpoint of the sample edge starting at `pa` along `axis`.
    fn vertex(&mut self, pa: [i64; 3], axis: usize) -> u32 {
        if let Some(&v) = self.index.get(&(pa, axis)) {
            return v;
        }
        let mut pb = pa;
        pb[axis] += 1;
        let label = self
            .sample(pa)
            .or_else(|| self.sample(pb))
            .expect("edge crosses the surface");
        let mid = |k: usize| (pa[k] + pb[k]) as f64 * 0.5 + 0.5;
        let p = self.grid.origin() + Vec3::new(mid(0), mid(1), mid(2)) * self.grid.voxel_size();
        let v = self.push(p, label);
        self.index.insert((pa, axis), v);
        v
    }
}

/// Iso-surface at 0.5 of the occupancy field (label != `free`), sampled at
/// voxel centers with an implicit free border so the result is closed.
/// Vertices sit at edge midpoints and take the label of their occupied end.
/// Triangles wind counter-clockwise seen from outside the solid.
pub fn marching_cubes(grid: &VoxelGrid, free: Label) -> TriangleMesh {
    let dims = grid.dims();
    let table = case_table();
    let faces = edge_faces();
    let edges = cube_edges();
    let mut b = Builder {
        grid,
        free,
        mesh: TriangleMesh::default(),
        index: HashMap::new(),
    };
    for cz in -1..dims[2] as i64 {
        for cy in -1..dims[1] as i64 {
            for cx in -1..dims[0] as i64 {
                let corner = |k: usize| {
                    let o = corner_offset(k);
                    [cx + o[0] as i64, cy + o[1] as i64, cz + o[2] as i64]
                };
                let case = (0..8)
                    .filter(|&k| b.sample(corner(k)).is_some())
                    .fold(0usize, |c, k| c | 1 << k);
                for lp in &table[case] {
                    let ids: Vec<u32> = lp
                        .iter()
                        .map(|&e| {
                            let (a, _, axis) = edges[e as usize];
                            b.vertex(corner(a), axis)
                        })
                        .collect();
                    match fan(lp, &faces) {
                        Some(tris) => {
                            for t in tris {
                                b.mesh.triangles.push(t.map(|k| ids[k]));
                            }
                        }
                        None => {
                            let n = ids.len();
                            let c = ids
                                .iter()
                                .fold(Vec3::ZERO, |acc, &i| acc + b.mesh.vertices[i as usize]);
                            let label = b.mesh.labels[ids[0] as usize];
                            let ci = b.push(c * (1.0 / n as f64), label);
                            for k in 0..n {
                                b.mesh.triangles.push([ci, ids[k], ids[(k + 1) % n]]);
                            }
                        }
                    }
                }
            }
        }
    }
    b.mesh
}
