use serde::{Deserialize, Serialize};

use super::VoxelGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neighborhood {
    /// Face neighbors.
    #[default]
    Six,
    /// Face, edge and corner neighbors, weighted by inverse offset length.
    TwentySix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridEdge {
    pub u: u32,
    pub v: u32,
    pub weight: i64,
}

/// Isotropic Potts edges over the grid. Each unordered pair appears once
/// with `u < v`; the per-edge weight is `weight * voxel_size^2`, divided by
/// the offset length for the 26-neighborhood.
pub fn pairwise_edges(grid: &VoxelGrid, weight: i64, neighborhood: Neighborhood) -> Vec<GridEdge> {
    let [nx, ny, nz] = grid.dims();
    let area = grid.voxel_size() * grid.voxel_size();
    let offsets: Vec<[i64; 3]> = match neighborhood {
        Neighborhood::Six => vec![[1, 0, 0], [0, 1, 0], [0, 0, 1]],
        // Lexicographically positive half of the 26 offsets.
        Neighborhood::TwentySix => {
            let mut v = Vec::new();
            for dz in -1..=1i64 {
                for dy in -1..=1i64 {
                    for dx in -1..=1i64 {
                        if (dz, dy, dx) > (0, 0, 0) {
                            v.push([dx, dy, dz]);
                        }
                    }
                }
            }
            v
        }
    };
    let weights: Vec<i64> = offsets
        .iter()
        .map(|o| {
            let len = ((o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) as f64).sqrt();
            (weight as f64 * area / len).round() as i64
        })
        .collect();

    let mut edges = Vec::new();
    for iz in 0..nz {
        for iy in 0..ny {
            for ix in 0..nx {
                let u = grid.id(ix, iy, iz);
                for (o, &w) in offsets.iter().zip(&weights) {
                    let c = [ix as i64 + o[0], iy as i64 + o[1], iz as i64 + o[2]];
                    if let Some(v) = grid.try_id(c) {
                        let (a, b) = if u < v { (u, v) } else { (v, u) };
                        edges.push(GridEdge {
                            u: a,
                            v: b,
                            weight: w,
                        });
                    }
                }
            }
        }
    }
    edges
}
