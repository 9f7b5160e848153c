use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{evaluate_energy, first_hit, EnergyInstance, EnergyRay, SolverError};
use crate::geometry::Label;
use crate::raypbf::{
    icm_complete_from, qpbo_solve, BinaryEnergy, Energy, PseudoBooleanEnergy, RayCostProfile,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionOptions {
    /// Shuffle the non-free labels once with this seed; free space stays first.
    pub shuffle_seed: Option<u64>,
    pub max_cycles: usize,
}

impl Default for ExpansionOptions {
    fn default() -> Self {
        Self {
            shuffle_seed: None,
            max_cycles: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoveRecord {
    pub cycle: usize,
    pub label: Label,
    /// Energy after the move (unchanged when not committed).
    pub energy: Energy,
    pub committed: bool,
    pub unlabeled: usize,
    pub lower_bound: Energy,
    pub node_count: usize,
    pub arc_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionResult {
    pub labeling: Vec<Label>,
    pub energy: Energy,
    pub initial_energy: Energy,
    pub trace: Vec<MoveRecord>,
    pub cycles: usize,
}

impl ExpansionResult {
    pub fn commits(&self) -> usize {
        self.trace.iter().filter(|m| m.committed).count()
    }
}

/// Free-space move: each currently occupied voxel either keeps its label
/// (`t = 0`) or becomes free (`t = 1`). Returns the occupied voxels of the ray
/// in order and the profile over them.
pub fn project_freespace_expansion(
    ray: &EnergyRay,
    current: &[Label],
    free: Label,
) -> (Vec<u32>, RayCostProfile) {
    let mut vars = Vec::new();
    let mut costs = Vec::new();
    for (i, &v) in ray.voxels.iter().enumerate() {
        let l = current[v as usize];
        if l != free {
            vars.push(v);
            costs.push(ray.table.phi(i, l));
        }
    }
    costs.push(ray.table.free_cost());
    (vars, RayCostProfile::new(costs))
}

/// Move towards `alpha`: each voxel takes `alpha` (`t = 0`) or keeps its label
/// (`t = 1`). Only the prefix up to and including the current first hit can
/// change the ray's cost; the last profile entry is the current contribution.
pub fn project_label_expansion(
    alpha: Label,
    ray: &EnergyRay,
    current: &[Label],
    free: Label,
) -> (Vec<u32>, RayCostProfile) {
    let n = ray.voxels.len();
    let k = first_hit(ray.voxels.iter().map(|&v| current[v as usize]), free);
    let m = (k + 1).min(n);
    let vars = ray.voxels[..m].to_vec();
    let mut costs: Vec<Energy> = (0..m).map(|i| ray.table.phi(i, alpha)).collect();
    let keep_label = ray.voxels.get(k).map_or(free, |&v| current[v as usize]);
    costs.push(ray.table.phi(k, keep_label));
    (vars, RayCostProfile::new(costs))
}

/// Binary energy of the `alpha` move from `current`. Its value at `t` equals
/// the full energy of `apply_move(current, alpha, t)`.
pub fn expansion_move(
    inst: &EnergyInstance,
    current: &[Label],
    alpha: Label,
) -> Result<BinaryEnergy, SolverError> {
    inst.check_labeling(current)?;
    let free = inst.labels().free();
    let projected: Vec<(Vec<u32>, RayCostProfile)> = inst
        .rays()
        .par_iter()
        .map(|r| {
            if alpha == free {
                project_freespace_expansion(r, current, free)
            } else {
                project_label_expansion(alpha, r, current, free)
            }
        })
        .collect();
    let mut e = BinaryEnergy::new(inst.voxel_count());
    for (vars, profile) in projected {
        e.add_ray(vars, profile);
    }
    let d = |a, b| inst.metric().get(a, b);
    for edge in inst.edges() {
        let (lu, lv) = (current[edge.u as usize], current[edge.v as usize]);
        let w = edge.weight;
        let table = if alpha == free {
            [w * d(lu, lv), w * d(lu, alpha), w * d(alpha, lv), 0]
        } else {
            [0, w * d(alpha, lv), w * d(lu, alpha), w * d(lu, lv)]
        };
        e.add_pairwise(edge.u, edge.v, table)?;
    }
    Ok(e)
}

pub fn apply_move(current: &[Label], alpha: Label, free: Label, t: &[bool]) -> Vec<Label> {
    current
        .iter()
        .zip(t)
        .map(|(&l, &ti)| match (alpha == free, ti) {
            (true, true) | (false, false) => alpha,
            _ => l,
        })
        .collect()
}

/// Alpha-expansion from the all-free labeling. Labels are visited free space
/// first, then in declaration order; a move is kept only if it strictly
/// lowers the energy, and the run stops after a cycle without any change.
pub fn alpha_expansion(
    inst: &EnergyInstance,
    opts: &ExpansionOptions,
) -> Result<ExpansionResult, SolverError> {
    let free = inst.labels().free();
    let mut others: Vec<Label> = inst.labels().occupied().collect();
    if let Some(seed) = opts.shuffle_seed {
        others.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let order: Vec<Label> = std::iter::once(free).chain(others).collect();

    let mut x = vec![free; inst.voxel_count()];
    let initial_energy = evaluate_energy(inst, &x)?;
    let mut energy = initial_energy;
    let mut trace = Vec::new();
    let mut cycles = 0;
    while cycles < opts.max_cycles {
        cycles += 1;
        let mut changed = false;
        for &alpha in &order {
            let be = expansion_move(inst, &x, alpha)?;
            let prob = be.build_qpbo()?;
            let sol = qpbo_solve(&prob)?;
            // Undecided move variables are completed from "keep" and from
            // "take alpha"; the lower move energy wins, ties going to keep.
            let keep = vec![alpha != free; x.len()];
            let take: Vec<bool> = keep.iter().map(|k| !k).collect();
            let t_keep = icm_complete_from(&sol.labeling, &keep, &be);
            let t_take = icm_complete_from(&sol.labeling, &take, &be);
            let t = if be.energy(&t_take) < be.energy(&t_keep) { t_take } else { t_keep };
            let y = apply_move(&x, alpha, free, &t);
            let ey = evaluate_energy(inst, &y)?;
            let committed = ey < energy;
            if committed {
                x = y;
                energy = ey;
                changed = true;
            }
            trace.push(MoveRecord {
                cycle: cycles,
                label: alpha,
                energy,
                committed,
                unlabeled: sol.labeling.unlabeled_count(),
                lower_bound: sol.lower_bound(),
                node_count: prob.network().node_count(),
                arc_count: prob.network().arcs().count(),
            });
        }
        if !changed {
            break;
        }
    }
    Ok(ExpansionResult {
        labeling: x,
        energy,
        initial_energy,
        trace,
        cycles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GridEdge;
    use crate::raypbf::PseudoBooleanEnergy;
    use crate::solver::{LabelMetric, LabelSet, RayCostTable};
    use rand::Rng;

    fn labels3() -> LabelSet {
        LabelSet::new(["free", "building", "tree"], "free").unwrap()
    }

    /// Table with `phi(i, l) = 10 * i + l` and free cost 99.
    fn tagged_ray(voxels: Vec<u32>) -> EnergyRay {
        let n = voxels.len();
        let mut t = RayCostTable::new(n, 3, 99);
        for i in 0..n {
            for l in 0..3u16 {
                t.set(i, Label(l), 10 * i as Energy + l as Energy);
            }
        }
        EnergyRay { voxels, table: t }
    }

    fn random_instance(
        rng: &mut ChaCha8Rng,
        n: usize,
        rays: usize,
        max_len: usize,
    ) -> EnergyInstance {
        let rays = (0..rays)
            .map(|_| {
                let len = rng.random_range(1..=max_len.min(n));
                let mut vox: Vec<u32> = (0..n as u32).collect();
                vox.shuffle(rng);
                vox.truncate(len);
                let mut t = RayCostTable::new(len, 3, rng.random_range(-20..20));
                for i in 0..len {
                    for l in 1..3 {
                        t.set(i, Label(l), rng.random_range(-20..20));
                    }
                }
                EnergyRay {
                    voxels: vox,
                    table: t,
                }
            })
            .collect();
        let edges = (0..n as u32 - 1)
            .map(|u| GridEdge {
                u,
                v: u + 1,
                weight: rng.random_range(0..4),
            })
            .collect();
        EnergyInstance::new(n, labels3(), rays, edges, LabelMetric::potts(3)).unwrap()
    }

    fn all_labelings(n: usize, k: u16) -> impl Iterator<Item = Vec<Label>> {
        (0..(k as usize).pow(n as u32)).map(move |mut m| {
            (0..n)
                .map(|_| {
                    let l = Label((m % k as usize) as u16);
                    m /= k as usize;
                    l
                })
                .collect()
        })
    }

    #[test]
    fn freespace_projection_examples() {
        let f = Label(0);
        let ray = tagged_ray(vec![0, 1, 2]);
        let (vars, p) = project_freespace_expansion(&ray, &[f, f, f], f);
        assert!(vars.is_empty());
        assert_eq!(p.costs, vec![99]);
        let (vars, p) = project_freespace_expansion(&ray, &[Label(1), f, Label(2)], f);
        assert_eq!(vars, vec![0, 2]);
        assert_eq!(p.costs, vec![1, 22, 99]);
        let (vars, p) = project_freespace_expansion(&ray, &[f, Label(2), f], f);
        assert_eq!(vars, vec![1]);
        assert_eq!(p.costs, vec![12, 99]);
    }

    #[test]
    fn label_projection_examples() {
        let f = Label(0);
        let ray = tagged_ray(vec![0, 1]);
        let (vars, p) = project_label_expansion(Label(1), &ray, &[f, f], f);
        assert_eq!(vars, vec![0, 1]);
        assert_eq!(p.costs, vec![1, 11, 99]);
        let (vars, p) = project_label_expansion(Label(1), &ray, &[Label(2), f], f);
        assert_eq!(vars, vec![0]);
        assert_eq!(p.costs, vec![1, 2]);
    }

    #[test]
    fn projections_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let inst = random_instance(&mut rng, 5, 3, 5);
            let free = inst.labels().free();
            let current: Vec<Label> = (0..5).map(|_| Label(rng.random_range(0..3))).collect();
            for alpha in inst.labels().all() {
                let be = expansion_move(&inst, &current, alpha).unwrap();
                for m in 0..32u32 {
                    let t: Vec<bool> = (0..5).map(|v| (m >> v) & 1 == 1).collect();
                    let y = apply_move(&current, alpha, free, &t);
                    assert_eq!(be.energy(&t), evaluate_energy(&inst, &y).unwrap());
                }
            }
        }
    }

    #[test]
    fn free_optimum_stops_after_one_cycle() {
        // Seeing nothing is cheapest on every ray.
        let mut t = RayCostTable::new(2, 3, -5);
        for i in 0..2 {
            for l in 1..3 {
                t.set(i, Label(l), 7);
            }
        }
        let ray = EnergyRay {
            voxels: vec![0, 1],
            table: t,
        };
        let inst =
            EnergyInstance::new(2, labels3(), vec![ray], vec![], LabelMetric::potts(3)).unwrap();
        let r = alpha_expansion(&inst, &ExpansionOptions::default()).unwrap();
        assert_eq!(r.cycles, 1);
        assert_eq!(r.commits(), 0);
        assert_eq!(r.energy, -5);
        assert_eq!(r.trace.len(), 3);
    }

    #[test]
    fn near_optimal_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 6, 4, 3);
            let r = alpha_expansion(&inst, &ExpansionOptions::default()).unwrap();
            assert_eq!(r.energy, evaluate_energy(&inst, &r.labeling).unwrap());
            let mut last = r.initial_energy;
            for m in &r.trace {
                assert!(m.energy <= last);
                last = m.energy;
            }
            let opt = all_labelings(6, 3)
                .map(|l| evaluate_energy(&inst, &l).unwrap())
                .min()
                .unwrap();
            assert!(r.energy >= opt);
        }
    }

    #[test]
    fn shuffle_keeps_free_first_and_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inst = random_instance(&mut rng, 4, 3, 3);
        let opts = ExpansionOptions {
            shuffle_seed: Some(9),
            ..Default::default()
        };
        let a = alpha_expansion(&inst, &opts).unwrap();
        let b = alpha_expansion(&inst, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trace[0].label, inst.labels().free());
    }
}
