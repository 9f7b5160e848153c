//! Randomized solver-versus-oracle checks shared by the CLI self-check and the
//! acceptance runs. Every check is a pure function of its seed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    brute_force_binary, brute_force_multilabel, fragment_min, half_fragment_min, unmerged_min,
    OracleBudget, OracleError,
};
use crate::geometry::{pairwise_edges, GridEdge, Label, Neighborhood, Vec3, VoxelGrid};
use crate::raypbf::{make_submodular, to_polynomial, Energy, QpboProblem, RayCostProfile};
use crate::solver::{
    alpha_expansion, solve_binary, EnergyInstance, EnergyRay, ExpansionOptions, LabelMetric,
    LabelSet, RayCostTable,
};

fn bits(m: u64, n: usize) -> Vec<bool> {
    (0..n).map(|v| (m >> v) & 1 == 1).collect()
}

fn random_profile(rng: &mut ChaCha8Rng, n: usize) -> RayCostProfile {
    RayCostProfile::new((0..=n).map(|_| rng.random_range(-100..=100)).collect())
}

fn single_ray_problem(profile: &RayCostProfile) -> (QpboProblem, usize) {
    let n = profile.len();
    let s = make_submodular(&to_polynomial(profile));
    let mut p = QpboProblem::new(n).expect("small problem");
    let vars: Vec<u32> = (0..n as u32).collect();
    let arcs = p.emit_ray_fragment(&vars, &s).expect("valid fragment");
    (p, arcs)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ReductionReport {
    pub profiles: usize,
    pub assignments: usize,
    /// Assignments where the auxiliary minimum differs from the profile.
    pub mismatches: usize,
    /// Assignments where the prefix-product auxiliaries are not optimal.
    pub canonical_misses: usize,
    /// Sum of all minima, as a fingerprint.
    pub checksum: i64,
}

/// Minimizes the symmetric network of random single-ray profiles over its
/// auxiliaries for every assignment and compares with twice the profile value.
pub fn check_ray_reduction(
    per_length: usize,
    lengths: std::ops::RangeInclusive<usize>,
    seed: u64,
) -> Result<ReductionReport, OracleError> {
    let budget = OracleBudget::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = ReductionReport::default();
    for n in lengths {
        for _ in 0..per_length {
            let profile = random_profile(&mut rng, n);
            let (prob, _) = single_ray_problem(&profile);
            r.profiles += 1;
            for m in 0..1u64 << n {
                let x = bits(m, n);
                let fm = fragment_min(&prob, &x, &budget)?;
                r.assignments += 1;
                r.mismatches += usize::from(fm.min != 2 * profile.value(&x));
                r.canonical_misses += usize::from(!fm.canonical_attains);
                r.checksum = r.checksum.wrapping_add(fm.min);
            }
        }
    }
    Ok(r)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DecompositionReport {
    pub profiles: usize,
    pub assignments: usize,
    pub mismatches: usize,
    pub negative_coefficients: usize,
    pub checksum: i64,
}

/// Exhaustive identity check of the polynomial and submodular forms.
pub fn check_decomposition(
    per_length: usize,
    lengths: std::ops::RangeInclusive<usize>,
    seed: u64,
) -> DecompositionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = DecompositionReport::default();
    for n in lengths {
        for _ in 0..per_length {
            let profile = random_profile(&mut rng, n);
            let poly = to_polynomial(&profile);
            let s = make_submodular(&poly);
            r.profiles += 1;
            r.negative_coefficients += s.a.iter().chain(&s.b).filter(|&&c| c < 0).count();
            for m in 0..1u64 << n {
                let x = bits(m, n);
                let v = profile.value(&x);
                r.assignments += 1;
                r.mismatches += usize::from(poly.value(&x) != v || s.value(&x) != v);
                r.checksum = r.checksum.wrapping_add(s.value(&x) * (m as i64 + 1));
            }
        }
    }
    r
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MergingReport {
    pub profiles: usize,
    pub assignments: usize,
    /// Merged half-network minimum differs from the sum of unmerged minima.
    pub mismatches: usize,
    pub checksum: i64,
}

/// Compares the merged construction (one half of the symmetric network)
/// against separately minimized per-depth constructions.
pub fn check_merging(
    per_length: usize,
    lengths: std::ops::RangeInclusive<usize>,
    seed: u64,
) -> Result<MergingReport, OracleError> {
    let budget = OracleBudget::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = MergingReport::default();
    for n in lengths {
        for _ in 0..per_length {
            let profile = random_profile(&mut rng, n);
            let s = make_submodular(&to_polynomial(&profile));
            let (prob, _) = single_ray_problem(&profile);
            r.profiles += 1;
            for m in 0..1u64 << n {
                let x = bits(m, n);
                let merged = half_fragment_min(&prob, 0, &x, &budget)?;
                let unmerged = unmerged_min(&s, &x, &budget)?;
                r.assignments += 1;
                r.mismatches +=
                    usize::from(merged != unmerged || merged + s.offset != profile.value(&x));
                r.checksum = r.checksum.wrapping_add(merged);
            }
        }
    }
    Ok(r)
}

/// Random two-label instance on a small grid: 2 to 4 rays over random
/// distinct voxels, face-neighbour Potts edges with weight from {0, 1, 5}.
pub fn random_binary_instance(rng: &mut ChaCha8Rng) -> EnergyInstance {
    const DIMS: [[usize; 3]; 6] = [
        [2, 2, 3],
        [3, 2, 2],
        [2, 3, 1],
        [3, 3, 1],
        [2, 2, 2],
        [4, 3, 1],
    ];
    let dims = DIMS[rng.random_range(0..DIMS.len())];
    let grid = VoxelGrid::new(dims, 1.0, Vec3::ZERO, Label(0)).expect("valid dims");
    let n = grid.len();
    let labels = LabelSet::new(["occupied", "free"], "free").expect("valid labels");
    let rays = (0..rng.random_range(2..=4))
        .map(|_| {
            let len = rng.random_range(1..=n);
            let mut vox: Vec<u32> = (0..n as u32).collect();
            vox.shuffle(rng);
            vox.truncate(len);
            let mut t = RayCostTable::new(len, 2, rng.random_range(-20..=20));
            for i in 0..len {
                t.set(i, Label(0), rng.random_range(-20..=20));
            }
            EnergyRay {
                voxels: vox,
                table: t,
            }
        })
        .collect();
    let w = [0, 1, 5][rng.random_range(0..3)];
    let edges = pairwise_edges(&grid, w, Neighborhood::Six);
    EnergyInstance::new(n, labels, rays, edges, LabelMetric::potts(2)).expect("consistent instance")
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PersistencyReport {
    pub instances: usize,
    pub labeled_variables: usize,
    /// Labeled variables whose value appears in no optimum.
    pub variable_violations: usize,
    /// Instances where no single optimum agrees with all labeled variables.
    pub joint_violations: usize,
    pub fully_labeled: usize,
    /// Fully labeled instances whose energy is not the optimum.
    pub optimality_failures: usize,
    /// Instances whose lower bound exceeds the optimum.
    pub bound_violations: usize,
    pub checksum: i64,
}

pub fn check_persistency(instances: usize, seed: u64) -> Result<PersistencyReport, OracleError> {
    let budget = OracleBudget::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = PersistencyReport::default();
    for _ in 0..instances {
        let inst = random_binary_instance(&mut rng);
        let free = inst.labels().free();
        let sol = solve_binary(&inst)?;
        let opt = brute_force_binary(&inst, &budget)?;
        r.instances += 1;
        let agrees = |l: &[Label], v: usize, x: bool| (l[v] == free) == x;
        let mut joint = false;
        for o in &opt.optima {
            joint |= sol
                .persistent
                .iter()
                .enumerate()
                .all(|(v, p)| p.is_none_or(|x| agrees(o, v, x)));
        }
        r.joint_violations += usize::from(!joint);
        for (v, p) in sol.persistent.iter().enumerate() {
            if let Some(x) = *p {
                r.labeled_variables += 1;
                r.variable_violations += usize::from(!opt.optima.iter().any(|o| agrees(o, v, x)));
            }
        }
        if sol.unlabeled == 0 {
            r.fully_labeled += 1;
            r.optimality_failures += usize::from(sol.energy != opt.energy);
        }
        r.bound_violations += usize::from(sol.lower_bound > opt.energy);
        r.checksum = r
            .checksum
            .wrapping_add(sol.energy)
            .wrapping_add(opt.energy * 3)
            .wrapping_add(sol.lower_bound * 7);
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinearityRow {
    pub length: usize,
    pub arcs: usize,
    pub bound: usize,
}

/// Directed arcs emitted for one random ray of each length.
pub fn check_edge_linearity(lengths: &[usize], seed: u64) -> Vec<LinearityRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    lengths
        .iter()
        .map(|&n| {
            let (_, arcs) = single_ray_problem(&random_profile(&mut rng, n));
            LinearityRow {
                length: n,
                arcs,
                bound: 8 * n + 8,
            }
        })
        .collect()
}

/// 2x2x2 grid, three labels, four distinct axis-aligned rays of length 2 in
/// random directions, costs in [1, 30], Potts weight 2 on face edges.
pub fn random_expansion_instance(rng: &mut ChaCha8Rng) -> EnergyInstance {
    let grid = VoxelGrid::cube(2, Label(0)).expect("valid grid");
    let mut lines: Vec<[u32; 2]> = Vec::new();
    for axis in 0..3 {
        for a in 0..2 {
            for b in 0..2 {
                let at = |t: usize| {
                    let mut c = [a, b, 0];
                    c.rotate_right(2 - axis);
                    c[axis] = t;
                    grid.id(c[0], c[1], c[2])
                };
                lines.push([at(0), at(1)]);
            }
        }
    }
    lines.shuffle(rng);
    let labels = LabelSet::new(["free", "building", "tree"], "free").expect("valid labels");
    let rays = lines[..4]
        .iter()
        .map(|line| {
            let mut voxels = line.to_vec();
            if rng.random_bool(0.5) {
                voxels.reverse();
            }
            let mut t = RayCostTable::new(2, 3, rng.random_range(1..=30));
            for i in 0..2 {
                for l in 1..3 {
                    t.set(i, Label(l), rng.random_range(1..=30));
                }
            }
            EnergyRay { voxels, table: t }
        })
        .collect();
    let edges: Vec<GridEdge> = pairwise_edges(&grid, 2, Neighborhood::Six);
    EnergyInstance::new(8, labels, rays, edges, LabelMetric::potts(3)).expect("consistent instance")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExpansionReport {
    pub instances: usize,
    /// Instances with `energy - optimum <= 0.05 |optimum|`.
    pub within_gap: usize,
    pub exact: usize,
    /// Instances whose trace increases at some move.
    pub non_monotone: usize,
    pub worst_ratio: f64,
    pub checksum: i64,
}

pub fn check_expansion(instances: usize, seed: u64) -> Result<ExpansionReport, OracleError> {
    let budget = OracleBudget::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = ExpansionReport {
        worst_ratio: 1.0,
        ..Default::default()
    };
    for _ in 0..instances {
        let inst = random_expansion_instance(&mut rng);
        let res = alpha_expansion(&inst, &ExpansionOptions::default())?;
        let (_, opt) = brute_force_multilabel(&inst, &budget)?;
        r.instances += 1;
        let gap = res.energy - opt;
        r.within_gap += usize::from(gap * 20 <= opt.abs());
        r.exact += usize::from(gap == 0);
        let mut last = res.initial_energy;
        let mut mono = true;
        for m in &res.trace {
            mono &= m.energy <= last;
            last = m.energy;
        }
        r.non_monotone += usize::from(!mono);
        if opt > 0 {
            r.worst_ratio = r.worst_ratio.max(res.energy as f64 / opt as f64);
        }
        let trace_sum: Energy = res.trace.iter().map(|m| m.energy).sum();
        r.checksum = r
            .checksum
            .wrapping_add(res.energy)
            .wrapping_add(opt * 5)
            .wrapping_add(trace_sum);
    }
    Ok(r)
}
