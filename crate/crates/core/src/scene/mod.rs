//! Synthetic worlds, simulated per-pixel observations and ray cost tables.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{cast_ray, CastRay, GeometryError, Label, PinholeCamera, Vec3, VoxelGrid};
use crate::raypbf::Energy;
use crate::solver::{LabelSet, RayCostTable};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("unknown preset {0:?} (expected box, wall_with_hole, thin_column or two_planes)")]
    UnknownPreset(String),
    #[error("resolution must be at least 4, got {0}")]
    Resolution(usize),
    #[error("label set has no label {0:?} and more than one occupied label to map it to")]
    MissingLabel(String),
    #[error("{field}: {msg}")]
    Params { field: &'static str, msg: String },
    #[error("grid dimensions differ: {0:?} vs {1:?}")]
    DimMismatch([usize; 3], [usize; 3]),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Box,
    WallWithHole,
    ThinColumn,
    TwoPlanes,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Box,
        Preset::WallWithHole,
        Preset::ThinColumn,
        Preset::TwoPlanes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Box => "box",
            Preset::WallWithHole => "wall_with_hole",
            Preset::ThinColumn => "thin_column",
            Preset::TwoPlanes => "two_planes",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| SceneError::UnknownPreset(s.to_string()))
    }
}

/// Cameras on a horizontal ring around the grid, alternating above and below
/// its mid-plane, all looking at the grid center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub count: usize,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self {
            count: 16,
            width: 64,
            height: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub preset: Preset,
    pub ground_truth: VoxelGrid,
    pub cameras: Vec<PinholeCamera>,
    /// Voxels of an opening that must stay free (wall preset only).
    pub hole_voxels: Vec<u32>,
}

/// Maps a preset class name onto the label set: by name, or onto the only
/// occupied label when there is just one.
pub fn resolve_class(labels: &LabelSet, name: &str) -> Result<Label, SceneError> {
    if let Some(l) = labels.find(name) {
        return Ok(l);
    }
    let mut occ = labels.occupied();
    match (occ.next(), occ.next()) {
        (Some(l), None) => Ok(l),
        _ => Err(SceneError::MissingLabel(name.to_string())),
    }
}

fn fill(grid: &mut VoxelGrid, lo: [usize; 3], hi: [usize; 3], label: Label) -> Vec<u32> {
    let mut ids = Vec::new();
    for iz in lo[2]..hi[2] {
        for iy in lo[1]..hi[1] {
            for ix in lo[0]..hi[0] {
                let id = grid.id(ix, iy, iz);
                grid.set_label(id, label);
                ids.push(id);
            }
        }
    }
    ids
}

fn round_div(num: usize, den: usize) -> usize {
    (2 * num + den) / (2 * den)
}

/// Builds the ground truth on an `n`-cube of unit voxels at the origin and
/// places `rig.count` cameras around it. The seed rotates the ring.
pub fn build_scene(
    preset: Preset,
    n: usize,
    seed: u64,
    labels: &LabelSet,
    rig: &CameraRig,
) -> Result<SyntheticScene, SceneError> {
    if n < 4 {
        return Err(SceneError::Resolution(n));
    }
    if rig.count == 0 || rig.width == 0 || rig.height == 0 {
        return Err(SceneError::Params {
            field: "cameras",
            msg: "need at least one camera and a non-empty image".into(),
        });
    }
    let free = labels.free();
    let building = resolve_class(labels, "building")?;
    let mut gt = VoxelGrid::cube(n, free)?;
    let mut hole_voxels = Vec::new();
    let (lo8, hi8) = (n / 8, n - n / 8);
    match preset {
        Preset::Box => {
            let (a, b) = (n / 4, n - n / 4);
            fill(&mut gt, [a; 3], [b; 3], building);
        }
        Preset::WallWithHole => {
            let x = n / 2;
            fill(&mut gt, [x, lo8, lo8], [x + 1, hi8, hi8], building);
            let h = round_div(3 * n, 16).max(1);
            let s = n / 2 - h / 2;
            hole_voxels = fill(&mut gt, [x, s, s], [x + 1, s + h, s + h], free);
        }
        Preset::ThinColumn => {
            let tree = resolve_class(labels, "tree")?;
            let len = round_div(5 * n, 8);
            let z0 = (n - len) / 2;
            fill(
                &mut gt,
                [n / 2, n / 2, z0],
                [n / 2 + 1, n / 2 + 1, z0 + len],
                tree,
            );
        }
        Preset::TwoPlanes => {
            let tree = resolve_class(labels, "tree")?;
            fill(&mut gt, [n / 4, lo8, lo8], [n / 4 + 1, hi8, hi8], building);
            fill(
                &mut gt,
                [3 * n / 4, lo8, lo8],
                [3 * n / 4 + 1, hi8, hi8],
                tree,
            );
        }
    }

    let center = gt.center();
    let nf = n as f64 * gt.voxel_size();
    let radius = 1.5 * nf;
    let height = 0.3 * nf;
    let distance = (radius * radius + height * height).sqrt();
    // Field of view that keeps the grid's bounding sphere in frame.
    let half = (0.5 * 3f64.sqrt() * nf / distance).asin() * 1.05;
    let phase = ChaCha8Rng::seed_from_u64(seed).random_range(0.0..std::f64::consts::TAU);
    let cameras = (0..rig.count)
        .map(|k| {
            let theta = phase + std::f64::consts::TAU * k as f64 / rig.count as f64;
            let z = if k % 2 == 0 { height } else { -height };
            let c = center + Vec3::new(radius * theta.cos(), radius * theta.sin(), z);
            PinholeCamera::look_at(
                c,
                center,
                Vec3::new(0.0, 0.0, 1.0),
                2.0 * half,
                rig.width,
                rig.height,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SyntheticScene {
        preset,
        ground_truth: gt,
        cameras,
        hole_voxels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub lambda_sem: f64,
    pub lambda_dep: f64,
    /// Depth tolerance, in length units.
    pub delta: f64,
    pub matches_per_pixel: usize,
    /// Standard deviation of the depth jitter on the best match.
    pub depth_sigma: f64,
    /// Probability mass spread uniformly over all labels in the semantic term.
    pub confusion: f64,
    pub seed: u64,
    /// Real-to-integer factor for all costs.
    pub scale: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            lambda_sem: 1.0,
            lambda_dep: 1.0,
            delta: 2.0,
            matches_per_pixel: 1,
            depth_sigma: 0.0,
            confusion: 0.0,
            seed: 0,
            scale: 10_000.0,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |field, msg: &str| {
            Err(SceneError::Params {
                field,
                msg: msg.to_string(),
            })
        };
        if !(self.lambda_sem >= 0.0 && self.lambda_sem.is_finite()) {
            return bad("lambda_sem", "must be a finite value >= 0");
        }
        if !(self.lambda_dep >= 0.0 && self.lambda_dep.is_finite()) {
            return bad("lambda_dep", "must be a finite value >= 0");
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta", "must be > 0");
        }
        if !(1..=3).contains(&self.matches_per_pixel) {
            return bad("matches_per_pixel", "must be 1, 2 or 3");
        }
        if !(self.depth_sigma >= 0.0 && self.depth_sigma.is_finite()) {
            return bad("depth_sigma", "must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.confusion) {
            return bad("confusion", "must be in [0, 1]");
        }
        if !(self.scale >= 1.0 && self.scale.is_finite()) {
            return bad("scale", "must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthMatch {
    pub depth: f64,
    /// Confidence relative to the best match, in (0, 1].
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelObservation {
    /// Semantic cost per label; the free-space entry is the sky cost.
    pub semantic: Vec<f64>,
    pub matches: Vec<DepthMatch>,
}

/// Lowest probability fed to the logarithm, so costs stay finite at zero
/// confusion.
pub const MIN_PROBABILITY: f64 = 1e-3;

pub fn semantic_costs(truth: Label, confusion: f64, label_count: usize) -> Vec<f64> {
    (0..label_count)
        .map(|l| {
            let hit = if l == truth.index() {
                1.0 - confusion
            } else {
                0.0
            };
            let p = hit + confusion / label_count as f64;
            -p.max(MIN_PROBABILITY).ln()
        })
        .collect()
}

/// A cast ray together with the ground-truth first hit along it.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPixel {
    pub ray: CastRay,
    pub observation: PixelObservation,
    /// Index into `ray.voxels` of the true first occupied voxel.
    pub true_hit: Option<usize>,
}

/// Observations for every pixel of camera `cam` whose ray crosses the grid,
/// in row-major pixel order. Each camera draws from its own random stream.
pub fn render_camera(
    scene: &SyntheticScene,
    cam: usize,
    params: &CostParams,
    labels: &LabelSet,
) -> Result<Vec<RenderedPixel>, SceneError> {
    let camera = &scene.cameras[cam];
    let gt = &scene.ground_truth;
    let free = labels.free();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(cam as u64);
    let mut out = Vec::new();
    for v in 0..camera.height {
        for u in 0..camera.width {
            let ray = cast_ray(camera, cam, (u, v), gt, f64::INFINITY)?;
            if ray.is_empty() {
                continue;
            }
            let true_hit = ray.voxels.iter().position(|&id| gt.label(id) != free);
            let truth = true_hit.map_or(free, |k| gt.label(ray.voxels[k]));
            let mut matches = Vec::new();
            if let Some(k) = true_hit {
                let jitter: f64 = rng.sample(StandardNormal);
                matches.push(DepthMatch {
                    depth: ray.depths[k] + params.depth_sigma * jitter,
                    weight: 1.0,
                });
                let mut w = 1.0;
                for _ in 1..params.matches_per_pixel {
                    w *= rng.random_range(0.3..0.9);
                    let depth = rng.random_range(ray.depths[0]..=ray.exit_depth);
                    matches.push(DepthMatch { depth, weight: w });
                }
            }
            let observation = PixelObservation {
                semantic: semantic_costs(truth, params.confusion, labels.len()),
                matches,
            };
            out.push(RenderedPixel {
                ray,
                observation,
                true_hit,
            });
        }
    }
    Ok(out)
}

/// All cameras, rendered in parallel and concatenated in camera order.
pub fn render_all(
    scene: &SyntheticScene,
    params: &CostParams,
    labels: &LabelSet,
) -> Result<Vec<RenderedPixel>, SceneError> {
    params.validate()?;
    let per_cam: Vec<Vec<RenderedPixel>> = (0..scene.cameras.len())
        .into_par_iter()
        .map(|c| render_camera(scene, c, params, labels))
        .collect::<Result<_, _>>()?;
    Ok(per_cam.into_iter().flatten().collect())
}

pub fn render_observations(
    scene: &SyntheticScene,
    cam: usize,
    params: &CostParams,
    labels: &LabelSet,
) -> Result<Vec<PixelObservation>, SceneError> {
    Ok(render_camera(scene, cam, params, labels)?
        .into_iter()
        .map(|p| p.observation)
        .collect())
}

/// Depth agreement cost: within `delta` of a match it is
/// `w * (-1 + |d - d_match| / delta)`, taking the lowest over matches; 0
/// elsewhere.
pub fn depth_cost(obs: &PixelObservation, d: f64, params: &CostParams) -> f64 {
    obs.matches
        .iter()
        .filter(|m| (d - m.depth).abs() <= params.delta)
        .map(|m| m.weight * (-1.0 + (d - m.depth).abs() / params.delta))
        .fold(0.0, f64::min)
}

fn fixed(x: f64, scale: f64) -> Energy {
    (x * scale).round() as Energy
}

/// `phi(i, l) = (lambda_sem C(l) + lambda_dep C(d_i)) d_i^2` for occupied
/// labels; seeing nothing costs `lambda_sem C(sky) d_last^2`.
pub fn ray_cost_table(
    ray: &CastRay,
    obs: &PixelObservation,
    params: &CostParams,
    labels: &LabelSet,
) -> RayCostTable {
    assert!(!ray.is_empty(), "cost table of an empty ray");
    let free = labels.free();
    let n = ray.len();
    let d_last = ray.depths[n - 1];
    let free_cost = fixed(
        params.lambda_sem * obs.semantic[free.index()] * d_last * d_last,
        params.scale,
    );
    let mut table = RayCostTable::new(n, labels.len(), free_cost);
    for (i, &d) in ray.depths.iter().enumerate() {
        let dep = params.lambda_dep * depth_cost(obs, d, params);
        for l in labels.occupied() {
            let phi = (params.lambda_sem * obs.semantic[l.index()] + dep) * d * d;
            table.set(i, l, fixed(phi, params.scale));
        }
    }
    table
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub occupancy_iou: f64,
    /// IoU of each occupied label present in either grid.
    pub per_class_iou: BTreeMap<String, f64>,
    pub accuracy: f64,
}

fn iou(result: &[Label], truth: &[Label], pred: impl Fn(Label) -> bool) -> Option<f64> {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&r, &t) in result.iter().zip(truth) {
        let (a, b) = (pred(r), pred(t));
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    (union > 0).then(|| inter as f64 / union as f64)
}

pub fn compute_metrics(
    result: &VoxelGrid,
    truth: &VoxelGrid,
    labels: &LabelSet,
) -> Result<Metrics, SceneError> {
    if result.dims() != truth.dims() {
        return Err(SceneError::DimMismatch(result.dims(), truth.dims()));
    }
    let free = labels.free();
    let (r, t) = (result.labels(), truth.labels());
    let occupancy_iou = iou(r, t, |l| l != free).unwrap_or(1.0);
    let per_class_iou = labels
        .occupied()
        .filter_map(|c| iou(r, t, |l| l == c).map(|v| (labels.name(c).to_string(), v)))
        .collect();
    let same = r.iter().zip(t).filter(|(a, b)| a == b).count();
    Ok(Metrics {
        occupancy_iou,
        per_class_iou,
        accuracy: same as f64 / r.len() as f64,
    })
}
