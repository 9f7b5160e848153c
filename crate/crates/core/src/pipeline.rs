//! End-to-end run: scene, observations, costs, solve, metrics, mesh.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, PairMode, RunConfig, SolverMode};
use crate::geometry::{pairwise_edges, Label, VoxelGrid};
use crate::mesh::{laplacian_smooth, marching_cubes, write_ply, TriangleMesh};
use crate::oracle::checks::{check_expansion, check_persistency, check_ray_reduction};
use crate::oracle::{brute_force_binary, brute_force_multilabel, fragment_min, OracleBudget, OracleError};
use crate::raypbf::{make_submodular, to_polynomial, Energy, QpboProblem, RayCostProfile};
use crate::scene::{build_scene, compute_metrics, ray_cost_table, render_all, RenderedPixel, SceneError};
use crate::solver::{
    alpha_expansion, evaluate_energy, solve_binary, EnergyInstance, EnergyRay, LabelSet, SolverError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("scene: {0}")]
    Scene(#[from] SceneError),
    #[error("solver: {0}")]
    Solver(#[from] SolverError),
    #[error("oracle: {0}")]
    Oracle(#[from] OracleError),
    #[error("thread pool: {0}")]
    Threads(String),
    #[error("writing {path}: {source}")]
    Io { path: String, source: io::Error },
}

/// Deterministic summary of a run; wall-clock timings are kept apart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub preset: String,
    pub resolution: usize,
    pub mode: SolverMode,
    pub seed: u64,
    pub voxels: usize,
    pub rays: usize,
    pub ray_voxels: usize,
    pub edges: usize,
    pub pair_weight: Energy,
    pub mean_ray_cost: Energy,
    pub energy: Energy,
    /// Lower bound from the cut; two-label mode only.
    pub lower_bound: Option<Energy>,
    pub initial_energy: Energy,
    pub ground_truth_energy: Energy,
    /// Variables left undecided by QPBO (final move in multi-label mode).
    pub unlabeled: usize,
    /// Largest flow network built.
    pub graph_nodes: usize,
    pub graph_arcs: usize,
    pub cycles: usize,
    pub moves: usize,
    pub commits: usize,
    pub occupancy_iou: f64,
    pub per_class_iou: std::collections::BTreeMap<String, f64>,
    pub accuracy: f64,
    /// Rays that see through the hole in the ground truth.
    pub hole_rays: usize,
    /// Of those, rays left entirely free in the result.
    pub hole_rays_open: usize,
    /// Occupied result voxels farther than one voxel (26-neighbourhood) from
    /// any occupied ground-truth voxel.
    pub occupied_outside_dilation: usize,
    pub mesh_vertices: usize,
    pub mesh_triangles: usize,
    pub mesh_watertight: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSummary {
    /// Exhaustive optimum of the whole instance, when it fits the budget.
    pub optimum: Option<Energy>,
    /// Short rays of this instance whose reduction was verified exhaustively.
    pub rays_checked: usize,
    pub ray_mismatches: usize,
    pub random_profiles: usize,
    pub random_profile_mismatches: usize,
    pub persistency_instances: usize,
    pub persistency_violations: usize,
    pub optimality_failures: usize,
    pub expansion_instances: usize,
    pub expansion_within_gap: usize,
    pub expansion_non_monotone: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub cycle: usize,
    pub label: String,
    pub energy: Energy,
    pub committed: bool,
    pub unlabeled: usize,
    pub lower_bound: Energy,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub config: RunConfig,
    pub labels: LabelSet,
    pub ground_truth: VoxelGrid,
    pub result: VoxelGrid,
    pub metrics: RunMetrics,
    pub trace: Vec<TraceRow>,
    pub mesh: TriangleMesh,
    /// Stage name and seconds.
    pub timings: Vec<(&'static str, f64)>,
}

struct Stopwatch {
    last: Instant,
    stages: Vec<(&'static str, f64)>,
}

impl Stopwatch {
    fn new() -> Self {
        Self { last: Instant::now(), stages: Vec::new() }
    }

    fn lap(&mut self, name: &'static str) {
        let now = Instant::now();
        self.stages.push((name, (now - self.last).as_secs_f64()));
        self.last = now;
    }
}

/// Magnitude of the mean over every ray cost entry, free-space entries included.
pub fn mean_ray_cost(rays: &[EnergyRay], labels: &LabelSet) -> Energy {
    let (sum, count) = rays
        .par_iter()
        .map(|r| {
            let mut s: i128 = r.table.free_cost() as i128;
            for i in 0..r.table.len() {
                for l in labels.occupied() {
                    s += r.table.phi(i, l) as i128;
                }
            }
            (s, 1 + r.table.len() * (labels.len() - 1))
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if count == 0 {
        0
    } else {
        (sum / count as i128).unsigned_abs() as Energy
    }
}

pub fn pair_weight(cfg: &RunConfig, mean_cost: Energy) -> Energy {
    let base = match cfg.solver.pair_mode {
        PairMode::Relative => mean_cost as f64,
        PairMode::Absolute => cfg.cost.scale,
    };
    (cfg.solver.lambda_pair * base).round() as Energy
}

/// `(hole rays, hole rays left free)`: rays with no true hit that cross a
/// voxel of the ground-truth hole.
pub fn hole_ray_stats(pixels: &[RenderedPixel], hole: &[u32], result: &VoxelGrid, free: Label) -> (usize, usize) {
    if hole.is_empty() {
        return (0, 0);
    }
    let mut in_hole = vec![false; result.len()];
    for &v in hole {
        in_hole[v as usize] = true;
    }
    pixels
        .par_iter()
        .filter(|p| p.true_hit.is_none() && p.ray.voxels.iter().any(|&v| in_hole[v as usize]))
        .map(|p| (1, usize::from(p.ray.voxels.iter().all(|&v| result.label(v) == free))))
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}

/// Occupied voxels of `result` with no occupied `truth` voxel within
/// Chebyshev distance 1.
pub fn occupied_outside_dilation(result: &VoxelGrid, truth: &VoxelGrid, free: Label) -> usize {
    (0..result.len() as u32)
        .filter(|&id| result.label(id) != free)
        .filter(|&id| {
            let c = truth.coords(id).map(|v| v as i64);
            let near = (-1..=1).any(|dx| {
                (-1..=1).any(|dy| {
                    (-1..=1).any(|dz| {
                        truth.try_id([c[0] + dx, c[1] + dy, c[2] + dz]).is_some_and(|n| truth.label(n) != free)
                    })
                })
            });
            !near
        })
        .count()
}

/// Runs the whole pipeline on a thread pool of the configured size.
pub fn run(cfg: &RunConfig) -> Result<Reconstruction, PipelineError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.threads)
        .build()
        .map_err(|e| PipelineError::Threads(e.to_string()))?;
    pool.install(|| run_inner(cfg))
}

fn run_inner(cfg: &RunConfig) -> Result<Reconstruction, PipelineError> {
    let mut clock = Stopwatch::new();
    let labels = cfg.label_set()?;
    let metric = cfg.metric()?;
    let free = labels.free();
    let params = cfg.cost_params();
    let scene = build_scene(cfg.scene.preset, cfg.scene.resolution, cfg.run.seed, &labels, &cfg.rig())?;
    clock.lap("scene");

    let pixels = render_all(&scene, &params, &labels)?;
    clock.lap("render");

    let rays: Vec<EnergyRay> = pixels
        .par_iter()
        .map(|p| EnergyRay { voxels: p.ray.voxels.clone(), table: ray_cost_table(&p.ray, &p.observation, &params, &labels) })
        .collect();
    let mean_cost = mean_ray_cost(&rays, &labels);
    let weight = pair_weight(cfg, mean_cost);
    clock.lap("costs");

    let gt = &scene.ground_truth;
    let edges = pairwise_edges(gt, weight, cfg.solver.neighborhood);
    let ray_voxels = rays.iter().map(|r| r.voxels.len()).sum();
    let inst = EnergyInstance::new(gt.len(), labels.clone(), rays, edges, metric)?;
    let ground_truth_energy = evaluate_energy(&inst, gt.labels())?;
    clock.lap("instance");

    let mut trace = Vec::new();
    let (labeling, energy, lower_bound, initial_energy, unlabeled, nodes, arcs, cycles, commits) = match cfg.solver.mode {
        SolverMode::Binary => {
            let initial = evaluate_energy(&inst, &vec![free; gt.len()])?;
            let sol = solve_binary(&inst)?;
            trace.push(TraceRow {
                step: 1,
                cycle: 1,
                label: "binary".into(),
                energy: sol.energy,
                committed: sol.energy < initial,
                unlabeled: sol.unlabeled,
                lower_bound: sol.lower_bound,
            });
            (sol.labeling, sol.energy, Some(sol.lower_bound), initial, sol.unlabeled, sol.node_count, sol.arc_count, 1, 1)
        }
        SolverMode::Multilabel => {
            let res = alpha_expansion(&inst, &cfg.expansion_options())?;
            for (k, m) in res.trace.iter().enumerate() {
                trace.push(TraceRow {
                    step: k + 1,
                    cycle: m.cycle,
                    label: labels.name(m.label).to_string(),
                    energy: m.energy,
                    committed: m.committed,
                    unlabeled: m.unlabeled,
                    lower_bound: m.lower_bound,
                });
            }
            let nodes = res.trace.iter().map(|m| m.node_count).max().unwrap_or(0);
            let arcs = res.trace.iter().map(|m| m.arc_count).max().unwrap_or(0);
            let unlabeled = res.trace.last().map_or(0, |m| m.unlabeled);
            let commits = res.commits();
            (res.labeling, res.energy, None, res.initial_energy, unlabeled, nodes, arcs, res.cycles, commits)
        }
    };
    trace.insert(0, TraceRow {
        step: 0,
        cycle: 0,
        label: labels.name(free).to_string(),
        energy: initial_energy,
        committed: true,
        unlabeled: 0,
        lower_bound: initial_energy,
    });
    clock.lap("solve");

    let result = gt.with_labels(labeling);
    let quality = compute_metrics(&result, gt, &labels)?;
    let (hole_rays, hole_rays_open) = hole_ray_stats(&pixels, &scene.hole_voxels, &result, free);
    let outside = occupied_outside_dilation(&result, gt, free);
    clock.lap("metrics");

    let raw = marching_cubes(&result, free);
    let mesh = laplacian_smooth(&raw, cfg.output.smoothing_iterations, cfg.output.smoothing_step);
    clock.lap("mesh");

    let oracle = if cfg.run.oracle_check {
        let s = oracle_summary(cfg, &inst, energy)?;
        clock.lap("oracle");
        Some(s)
    } else {
        None
    };

    let metrics = RunMetrics {
        preset: cfg.scene.preset.to_string(),
        resolution: cfg.scene.resolution,
        mode: cfg.solver.mode,
        seed: cfg.run.seed,
        voxels: gt.len(),
        rays: inst.rays().len(),
        ray_voxels,
        edges: inst.edges().len(),
        pair_weight: weight,
        mean_ray_cost: mean_cost,
        energy,
        lower_bound,
        initial_energy,
        ground_truth_energy,
        unlabeled,
        graph_nodes: nodes,
        graph_arcs: arcs,
        cycles,
        moves: trace.len() - 1,
        commits,
        occupancy_iou: quality.occupancy_iou,
        per_class_iou: quality.per_class_iou,
        accuracy: quality.accuracy,
        hole_rays,
        hole_rays_open,
        occupied_outside_dilation: outside,
        mesh_vertices: raw.vertices.len(),
        mesh_triangles: raw.triangles.len(),
        mesh_watertight: raw.is_watertight(),
        oracle,
    };
    Ok(Reconstruction {
        config: cfg.clone(),
        labels,
        ground_truth: scene.ground_truth,
        result,
        metrics,
        trace,
        mesh,
        timings: clock.stages,
    })
}

/// Exhaustive checks that fit in a few seconds: the reduction of this
/// instance's short rays, randomized small instances seeded by the run seed,
/// and the full instance when it is small enough.
pub fn oracle_summary(cfg: &RunConfig, inst: &EnergyInstance, energy: Energy) -> Result<OracleSummary, PipelineError> {
    const MAX_RAY: usize = 6;
    const RAYS: usize = 100;
    let budget = OracleBudget::default();
    let labels = inst.labels();
    let occ = labels.occupied().next().expect("an occupied label");
    let short: Vec<&EnergyRay> = inst.rays().iter().filter(|r| r.voxels.len() <= MAX_RAY).take(RAYS).collect();
    let ray_mismatches = short
        .par_iter()
        .map(|r| -> Result<usize, OracleError> {
            let n = r.voxels.len();
            let profile = RayCostProfile::new((0..=n).map(|i| r.table.phi(i, occ)).collect());
            let mut prob = QpboProblem::new(n).map_err(SolverError::from)?;
            let vars: Vec<u32> = (0..n as u32).collect();
            prob.emit_ray_fragment(&vars, &make_submodular(&to_polynomial(&profile))).map_err(SolverError::from)?;
            let mut bad = 0;
            for m in 0..1u32 << n {
                let x: Vec<bool> = (0..n).map(|v| m >> v & 1 == 1).collect();
                bad += usize::from(fragment_min(&prob, &x, &budget)?.min != 2 * profile.value(&x));
            }
            Ok(bad)
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();

    let seed = cfg.run.seed;
    let red = check_ray_reduction(20, 1..=5, seed)?;
    let per = check_persistency(40, seed)?;
    let exp = check_expansion(20, seed)?;

    let optimum = match cfg.solver.mode {
        SolverMode::Binary if inst.voxel_count() <= budget.max_binary_vars => {
            Some(brute_force_binary(inst, &budget)?.energy)
        }
        SolverMode::Multilabel => match brute_force_multilabel(inst, &budget) {
            Ok((_, e)) => Some(e),
            Err(OracleError::Budget { .. }) => None,
            Err(e) => return Err(e.into()),
        },
        _ => None,
    };
    let optimum_ok = match (cfg.solver.mode, optimum) {
        (SolverMode::Binary, Some(o)) => energy >= o,
        _ => true,
    };
    let persistency_violations = per.variable_violations + per.joint_violations;
    let passed = optimum_ok
        && ray_mismatches == 0
        && red.mismatches == 0
        && persistency_violations == 0
        && per.optimality_failures == 0
        && exp.non_monotone == 0;
    Ok(OracleSummary {
        optimum,
        rays_checked: short.len(),
        ray_mismatches,
        random_profiles: red.profiles,
        random_profile_mismatches: red.mismatches,
        persistency_instances: per.instances,
        persistency_violations,
        optimality_failures: per.optimality_failures,
        expansion_instances: exp.instances,
        expansion_within_gap: exp.within_gap,
        expansion_non_monotone: exp.non_monotone,
        passed,
    })
}

impl Reconstruction {
    pub fn metrics_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.metrics).expect("metrics serialize");
        s.push('\n');
        s
    }

    pub fn trace_csv(&self) -> String {
        let mut s = String::from("step,cycle,label,energy,committed,unlabeled,lower_bound\n");
        for r in &self.trace {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.step, r.cycle, r.label, r.energy, r.committed, r.unlabeled, r.lower_bound
            );
        }
        s
    }

    pub fn log_text(&self) -> String {
        let m = &self.metrics;
        let mut s = String::new();
        let _ = writeln!(s, "preset {} at {}^3, mode {:?}, seed {}", m.preset, m.resolution, m.mode, m.seed);
        let _ = writeln!(s, "labels: {}", self.labels.names().join(", "));
        let _ = writeln!(s, "rays {} ({} ray voxels), edges {} with weight {}", m.rays, m.ray_voxels, m.edges, m.pair_weight);
        let _ = writeln!(s, "graph: {} nodes, {} arcs", m.graph_nodes, m.graph_arcs);
        let _ = writeln!(s, "energy {} (initial {}, ground truth {})", m.energy, m.initial_energy, m.ground_truth_energy);
        if let Some(lb) = m.lower_bound {
            let _ = writeln!(s, "lower bound {lb}, unlabeled {}", m.unlabeled);
        }
        let _ = writeln!(s, "cycles {}, moves {}, commits {}", m.cycles, m.moves, m.commits);
        let _ = writeln!(s, "occupancy IoU {:.4}, accuracy {:.4}", m.occupancy_iou, m.accuracy);
        for (k, v) in &m.per_class_iou {
            let _ = writeln!(s, "  IoU {k}: {v:.4}");
        }
        if m.hole_rays > 0 {
            let _ = writeln!(s, "hole rays open: {} of {}", m.hole_rays_open, m.hole_rays);
        }
        let _ = writeln!(s, "mesh: {} vertices, {} triangles, watertight {}", m.mesh_vertices, m.mesh_triangles, m.mesh_watertight);
        if let Some(o) = &m.oracle {
            let _ = writeln!(s, "oracle check: {}", if o.passed { "passed" } else { "FAILED" });
        }
        let _ = writeln!(s, "timings:");
        let total: f64 = self.timings.iter().map(|t| t.1).sum();
        for (name, secs) in &self.timings {
            let _ = writeln!(s, "  {name:<9} {secs:>9.3} s");
        }
        let _ = writeln!(s, "  {:<9} {total:>9.3} s", "total");
        s
    }

    /// Writes result.ply, metrics.json, energy_trace.csv and run.log.
    pub fn write_outputs(&self, dir: &Path) -> Result<(), PipelineError> {
        let io_err = |p: &Path| {
            let path = p.display().to_string();
            move |source| PipelineError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let ply = dir.join("result.ply");
        write_ply(&self.mesh, &ply, self.config.output.ply_format).map_err(io_err(&ply))?;
        for (name, body) in
            [("metrics.json", self.metrics_json()), ("energy_trace.csv", self.trace_csv()), ("run.log", self.log_text())]
        {
            let p = dir.join(name);
            fs::write(&p, body).map_err(io_err(&p))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Preset;

    fn small(preset: Preset, n: usize) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.scene.preset = preset;
        cfg.scene.resolution = n;
        cfg.scene.cameras = 8;
        cfg.scene.width = 32;
        cfg.scene.height = 32;
        cfg
    }

    #[test]
    fn box_binary_run() {
        let rec = run(&small(Preset::Box, 12)).unwrap();
        let m = &rec.metrics;
        let slack = m.ground_truth_energy.abs() / 100;
        assert!(m.energy <= m.ground_truth_energy + slack, "{} vs {}", m.energy, m.ground_truth_energy);
        assert!(m.energy <= m.initial_energy);
        assert!(m.lower_bound.unwrap() <= m.energy);
        assert!(m.occupancy_iou > 0.9, "{}", m.occupancy_iou);
        assert!(m.mesh_watertight && m.mesh_triangles > 0);
        assert_eq!(rec.trace.len(), 2);
        assert!(rec.trace_csv().starts_with("step,cycle,label,energy"));
    }

    #[test]
    fn multilabel_trace_is_monotone() {
        let mut cfg = small(Preset::TwoPlanes, 10);
        cfg.labels.names = vec!["free".into(), "building".into(), "tree".into()];
        cfg.solver.mode = SolverMode::Multilabel;
        let rec = run(&cfg).unwrap();
        assert!(rec.trace.windows(2).all(|w| w[1].energy <= w[0].energy));
        assert_eq!(rec.trace.last().unwrap().energy, rec.metrics.energy);
        assert!(rec.metrics.energy <= rec.metrics.initial_energy);
        assert_eq!(rec.metrics.per_class_iou.len(), 2);
    }

    #[test]
    fn metrics_identical_across_thread_counts() {
        let mut cfg = small(Preset::WallWithHole, 12);
        cfg.cost.depth_sigma = 0.3;
        cfg.cost.matches_per_pixel = 2;
        cfg.run.threads = 1;
        let a = run(&cfg).unwrap();
        cfg.run.threads = 3;
        let b = run(&cfg).unwrap();
        assert_eq!(a.metrics_json(), b.metrics_json());
        assert_eq!(a.result.labels(), b.result.labels());
        assert_eq!(a.mesh, b.mesh);
    }

    #[test]
    fn oracle_summary_passes() {
        let mut cfg = small(Preset::Box, 6);
        cfg.run.oracle_check = true;
        let rec = run(&cfg).unwrap();
        let o = rec.metrics.oracle.as_ref().unwrap();
        assert!(o.passed, "{o:?}");
        assert!(o.rays_checked > 0);
    }

    #[test]
    fn outputs_written() {
        let rec = run(&small(Preset::Box, 8)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        rec.write_outputs(dir.path()).unwrap();
        for f in ["result.ply", "metrics.json", "energy_trace.csv", "run.log"] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
        assert!(json["energy"].is_i64() && json["graph_arcs"].as_u64().unwrap() > 0);
        assert!(fs::read_to_string(dir.path().join("run.log")).unwrap().contains("timings:"));
    }

    #[test]
    fn dilation_and_hole_helpers() {
        let free = Label(0);
        let mut truth = VoxelGrid::cube(5, free).unwrap();
        truth.set_label(truth.id(2, 2, 2), Label(1));
        let mut res = truth.clone();
        res.set_label(res.id(3, 3, 3), Label(1));
        assert_eq!(occupied_outside_dilation(&res, &truth, free), 0);
        res.set_label(res.id(4, 2, 2), Label(1));
        assert_eq!(occupied_outside_dilation(&res, &truth, free), 1);
    }
}
