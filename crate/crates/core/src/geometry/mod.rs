//! Voxel lattice, cameras and ray traversal.

mod camera;
mod edges;
mod raycast;
mod vec3;

pub use camera::PinholeCamera;
pub use edges::{pairwise_edges, GridEdge, Neighborhood};
pub use raycast::{cast_ray, traverse, CastRay};
pub use vec3::Vec3;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("grid dimensions must all be >= 1, got {0:?}")]
    EmptyGrid([usize; 3]),
    #[error("voxel size must be positive, got {0}")]
    VoxelSize(f64),
    #[error("focal lengths must be positive, got ({0}, {1})")]
    Focal(f64, f64),
    #[error("rotation is not orthonormal (deviation {0:e})")]
    Rotation(f64),
    #[error("pixel ({0}, {1}) is outside the {2}x{3} image")]
    PixelOutside(u32, u32, u32, u32),
    #[error("degenerate ray direction")]
    DegenerateDirection,
    #[error("camera up vector is parallel to the viewing direction")]
    DegenerateUp,
    #[error("grid too large for 32-bit voxel ids")]
    TooManyVoxels,
}

/// Semantic label index. The free-space label is chosen by the label set.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct Label(pub u16);

impl Label {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Dense label field. Voxel ids are row-major with x fastest:
/// `id = ix + nx * (iy + ny * iz)`. Voxel `(ix, iy, iz)` covers
/// `origin + [ix, ix + 1) * voxel_size` along x, and likewise for y and z.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    dims: [usize; 3],
    voxel_size: f64,
    origin: Vec3,
    labels: Vec<Label>,
}

impl VoxelGrid {
    pub fn new(
        dims: [usize; 3],
        voxel_size: f64,
        origin: Vec3,
        fill: Label,
    ) -> Result<Self, GeometryError> {
        if dims.iter().any(|&d| d == 0) {
            return Err(GeometryError::EmptyGrid(dims));
        }
        if !(voxel_size > 0.0) || !voxel_size.is_finite() {
            return Err(GeometryError::VoxelSize(voxel_size));
        }
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= u32::MAX as usize)
            .ok_or(GeometryError::TooManyVoxels)?;
        Ok(Self {
            dims,
            voxel_size,
            origin,
            labels: vec![fill; len],
        })
    }

    pub fn cube(n: usize, fill: Label) -> Result<Self, GeometryError> {
        Self::new([n, n, n], 1.0, Vec3::ZERO, fill)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, ix: usize, iy: usize, iz: usize) -> u32 {
        debug_assert!(ix < self.dims[0] && iy < self.dims[1] && iz < self.dims[2]);
        (ix + self.dims[0] * (iy + self.dims[1] * iz)) as u32
    }

    pub fn try_id(&self, c: [i64; 3]) -> Option<u32> {
        let inside = (0..3).all(|a| c[a] >= 0 && (c[a] as usize) < self.dims[a]);
        inside.then(|| self.id(c[0] as usize, c[1] as usize, c[2] as usize))
    }

    pub fn coords(&self, id: u32) -> [usize; 3] {
        let id = id as usize;
        let ix = id % self.dims[0];
        let iy = (id / self.dims[0]) % self.dims[1];
        let iz = id / (self.dims[0] * self.dims[1]);
        [ix, iy, iz]
    }

    pub fn label(&self, id: u32) -> Label {
        self.labels[id as usize]
    }

    pub fn set_label(&mut self, id: u32, label: Label) {
        self.labels[id as usize] = label;
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn set_labels(&mut self, labels: Vec<Label>) {
        assert_eq!(labels.len(), self.labels.len());
        self.labels = labels;
    }

    pub fn with_labels(&self, labels: Vec<Label>) -> Self {
        let mut g = self.clone();
        g.set_labels(labels);
        g
    }

    /// World-space axis-aligned bounds of the whole grid.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let ext = Vec3::new(
            self.dims[0] as f64 * self.voxel_size,
            self.dims[1] as f64 * self.voxel_size,
            self.dims[2] as f64 * self.voxel_size,
        );
        (self.origin, self.origin + ext)
    }

    pub fn voxel_bounds(&self, id: u32) -> (Vec3, Vec3) {
        let [ix, iy, iz] = self.coords(id);
        let lo = self.origin + Vec3::new(ix as f64, iy as f64, iz as f64) * self.voxel_size;
        (lo, lo + Vec3::splat(self.voxel_size))
    }

    pub fn voxel_center(&self, id: u32) -> Vec3 {
        let (lo, hi) = self.voxel_bounds(id);
        (lo + hi) * 0.5
    }

    pub fn center(&self) -> Vec3 {
        let (lo, hi) = self.bounds();
        (lo + hi) * 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn id_bijection() {
        let g = VoxelGrid::new([3, 4, 5], 0.5, Vec3::ZERO, Label(0)).unwrap();
        for id in 0..g.len() as u32 {
            let [x, y, z] = g.coords(id);
            assert_eq!(g.id(x, y, z), id);
        }
        assert_eq!(g.id(1, 0, 0), 1);
        assert_eq!(g.id(0, 1, 0), 3);
        assert_eq!(g.id(0, 0, 1), 12);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(
            VoxelGrid::new([0, 1, 1], 1.0, Vec3::ZERO, Label(0)),
            Err(GeometryError::EmptyGrid(_))
        ));
        assert!(matches!(
            VoxelGrid::new([1, 1, 1], 0.0, Vec3::ZERO, Label(0)),
            Err(GeometryError::VoxelSize(_))
        ));
    }
}
