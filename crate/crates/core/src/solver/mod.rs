//! Multi-label energy with first-hit ray potentials: evaluation, the direct
//! two-label solve and alpha-expansion.

mod expansion;

pub use expansion::{
    alpha_expansion, expansion_move, project_freespace_expansion, project_label_expansion,
    ExpansionOptions, ExpansionResult, MoveRecord,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GridEdge, Label};
use crate::raypbf::{
    icm_complete_from, qpbo_solve, BinaryEnergy, Energy, PairwiseError, QpboError, RayCostProfile,
};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("label set: {0}")]
    Labels(String),
    #[error("label metric: {0}")]
    Metric(String),
    #[error("ray {ray}: {msg}")]
    Ray { ray: usize, msg: String },
    #[error("edge ({u}, {v}) references a voxel outside the grid")]
    Edge { u: u32, v: u32 },
    #[error("labeling has {got} entries, expected {expected}")]
    LabelingLength { got: usize, expected: usize },
    #[error("binary solve needs exactly two labels, got {0}")]
    NotBinary(usize),
    #[error(transparent)]
    Pairwise(#[from] PairwiseError),
    #[error(transparent)]
    Qpbo(#[from] QpboError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    names: Vec<String>,
    free: Label,
}

impl LabelSet {
    pub fn new<S: Into<String>>(
        names: impl IntoIterator<Item = S>,
        free: &str,
    ) -> Result<Self, SolverError> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(SolverError::Labels(format!(
                "need at least two labels, got {}",
                names.len()
            )));
        }
        if names.len() > u16::MAX as usize {
            return Err(SolverError::Labels("too many labels".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(SolverError::Labels(format!("duplicate label {n:?}")));
            }
        }
        let free = names.iter().position(|n| n == free).ok_or_else(|| {
            SolverError::Labels(format!("free-space label {free:?} is not in the set"))
        })?;
        Ok(Self {
            names,
            free: Label(free as u16),
        })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn free(&self) -> Label {
        self.free
    }

    pub fn name(&self, l: Label) -> &str {
        &self.names[l.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn find(&self, name: &str) -> Option<Label> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| Label(i as u16))
    }

    pub fn all(&self) -> impl Iterator<Item = Label> + '_ {
        (0..self.names.len() as u16).map(Label)
    }

    /// Labels other than free space, in declaration order.
    pub fn occupied(&self) -> impl Iterator<Item = Label> + '_ {
        self.all().filter(move |&l| l != self.free)
    }
}

/// Costs `phi(i, l)` for depth indices `0..len` and every label, plus the
/// cost of the ray seeing nothing (`phi(len, free)`). Entries for the free
/// label at `i < len` are never read.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RayCostTable {
    len: usize,
    label_count: usize,
    costs: Vec<Energy>,
    free_cost: Energy,
}

impl RayCostTable {
    pub fn new(len: usize, label_count: usize, free_cost: Energy) -> Self {
        Self {
            len,
            label_count,
            costs: vec![0; len * label_count],
            free_cost,
        }
    }

    /// Row-major `costs[i * label_count + l]`.
    pub fn from_rows(
        len: usize,
        label_count: usize,
        costs: Vec<Energy>,
        free_cost: Energy,
    ) -> Self {
        assert_eq!(costs.len(), len * label_count);
        Self {
            len,
            label_count,
            costs,
            free_cost,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn set(&mut self, i: usize, l: Label, cost: Energy) {
        self.costs[i * self.label_count + l.index()] = cost;
    }

    pub fn free_cost(&self) -> Energy {
        self.free_cost
    }

    pub fn phi(&self, i: usize, l: Label) -> Energy {
        if i == self.len {
            self.free_cost
        } else {
            self.costs[i * self.label_count + l.index()]
        }
    }
}

/// Symmetric label distance with zero diagonal. Accepted tables satisfy the
/// triangle inequality so every expansion move is submodular in its
/// pairwise part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMetric {
    n: usize,
    table: Vec<Energy>,
}

impl LabelMetric {
    pub fn potts(n: usize) -> Self {
        let table = (0..n * n).map(|k| Energy::from(k / n != k % n)).collect();
        Self { n, table }
    }

    pub fn from_table(n: usize, table: Vec<Energy>) -> Result<Self, SolverError> {
        if table.len() != n * n {
            return Err(SolverError::Metric(format!(
                "expected {} entries, got {}",
                n * n,
                table.len()
            )));
        }
        let d = |a: usize, b: usize| table[a * n + b];
        for a in 0..n {
            if d(a, a) != 0 {
                return Err(SolverError::Metric(format!("d({a}, {a}) must be 0")));
            }
            for b in 0..n {
                if d(a, b) < 0 || d(a, b) != d(b, a) {
                    return Err(SolverError::Metric(format!(
                        "d({a}, {b}) must be non-negative and symmetric"
                    )));
                }
                for c in 0..n {
                    if d(a, c) > d(a, b) + d(b, c) {
                        return Err(SolverError::Metric(format!(
                            "triangle inequality fails for ({a}, {b}, {c})"
                        )));
                    }
                }
            }
        }
        Ok(Self { n, table })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, a: Label, b: Label) -> Energy {
        self.table[a.index() * self.n + b.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnergyRay {
    pub voxels: Vec<u32>,
    pub table: RayCostTable,
}

/// Energy over a labeling of `voxel_count` voxels: ray potentials plus
/// `weight * metric(l_u, l_v)` per edge.
#[derive(Debug, Clone)]
pub struct EnergyInstance {
    voxel_count: usize,
    labels: LabelSet,
    rays: Vec<EnergyRay>,
    edges: Vec<GridEdge>,
    metric: LabelMetric,
}

impl EnergyInstance {
    pub fn new(
        voxel_count: usize,
        labels: LabelSet,
        rays: Vec<EnergyRay>,
        edges: Vec<GridEdge>,
        metric: LabelMetric,
    ) -> Result<Self, SolverError> {
        if metric.len() != labels.len() {
            return Err(SolverError::Metric(format!(
                "metric covers {} labels, label set has {}",
                metric.len(),
                labels.len()
            )));
        }
        for (r, ray) in rays.iter().enumerate() {
            let err = |msg: String| SolverError::Ray { ray: r, msg };
            if ray.table.len() != ray.voxels.len() {
                return Err(err(format!(
                    "{} voxels but {} table rows",
                    ray.voxels.len(),
                    ray.table.len()
                )));
            }
            if ray.table.label_count() != labels.len() {
                return Err(err(format!(
                    "table has {} labels, expected {}",
                    ray.table.label_count(),
                    labels.len()
                )));
            }
            if let Some(&v) = ray.voxels.iter().find(|&&v| v as usize >= voxel_count) {
                return Err(err(format!("voxel {v} outside the grid")));
            }
            let mut sorted = ray.voxels.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(err("voxel visited twice".into()));
            }
        }
        if let Some(e) = edges
            .iter()
            .find(|e| e.u as usize >= voxel_count || e.v as usize >= voxel_count || e.u == e.v)
        {
            return Err(SolverError::Edge { u: e.u, v: e.v });
        }
        Ok(Self {
            voxel_count,
            labels,
            rays,
            edges,
            metric,
        })
    }

    pub fn voxel_count(&self) -> usize {
        self.voxel_count
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn rays(&self) -> &[EnergyRay] {
        &self.rays
    }

    pub fn edges(&self) -> &[GridEdge] {
        &self.edges
    }

    pub fn metric(&self) -> &LabelMetric {
        &self.metric
    }

    pub fn ray_energy(&self, ray: &EnergyRay, labeling: &[Label]) -> Energy {
        let free = self.labels.free();
        let k = first_hit(ray.voxels.iter().map(|&v| labeling[v as usize]), free);
        let l = ray.voxels.get(k).map_or(free, |&v| labeling[v as usize]);
        ray.table.phi(k, l)
    }

    fn check_labeling(&self, labeling: &[Label]) -> Result<(), SolverError> {
        if labeling.len() != self.voxel_count {
            return Err(SolverError::LabelingLength {
                got: labeling.len(),
                expected: self.voxel_count,
            });
        }
        Ok(())
    }
}

/// Index of the first label that is not free space, or the ray length.
pub fn first_hit(labels: impl IntoIterator<Item = Label>, free: Label) -> usize {
    let mut n = 0;
    for l in labels {
        if l != free {
            return n;
        }
        n += 1;
    }
    n
}

/// Reference energy of a complete labeling.
pub fn evaluate_energy(inst: &EnergyInstance, labeling: &[Label]) -> Result<Energy, SolverError> {
    inst.check_labeling(labeling)?;
    let rays: Energy = inst.rays.iter().map(|r| inst.ray_energy(r, labeling)).sum();
    let pairs: Energy = inst
        .edges
        .iter()
        .map(|e| {
            e.weight
                * inst
                    .metric
                    .get(labeling[e.u as usize], labeling[e.v as usize])
        })
        .sum();
    Ok(rays + pairs)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinarySolution {
    pub labeling: Vec<Label>,
    pub energy: Energy,
    pub lower_bound: Energy,
    /// Variables left undecided by QPBO and completed by ICM.
    pub unlabeled: usize,
    /// Variables QPBO fixed, with their values (true = free space).
    pub persistent: Vec<Option<bool>>,
    pub node_count: usize,
    pub arc_count: usize,
}

/// Binary energy over voxel variables, `x = 1` meaning free space.
pub fn binary_energy(inst: &EnergyInstance) -> Result<BinaryEnergy, SolverError> {
    if inst.labels.len() != 2 {
        return Err(SolverError::NotBinary(inst.labels.len()));
    }
    let free = inst.labels.free();
    let occ = inst.labels.occupied().next().expect("two labels");
    let mut e = BinaryEnergy::new(inst.voxel_count);
    let profiles: Vec<RayCostProfile> = inst
        .rays
        .par_iter()
        .map(|r| RayCostProfile::new((0..=r.voxels.len()).map(|i| r.table.phi(i, occ)).collect()))
        .collect();
    for (r, p) in inst.rays.iter().zip(profiles) {
        e.add_ray(r.voxels.clone(), p);
    }
    let d = |a, b| inst.metric.get(a, b);
    for edge in &inst.edges {
        let w = edge.weight;
        let table = [
            w * d(occ, occ),
            w * d(occ, free),
            w * d(free, occ),
            w * d(free, free),
        ];
        e.add_pairwise(edge.u, edge.v, table)?;
    }
    Ok(e)
}

/// Two-label solve: QPBO on the reduced ray potentials, then ICM over the
/// variables QPBO leaves undecided, starting them all as free space.
pub fn solve_binary(inst: &EnergyInstance) -> Result<BinarySolution, SolverError> {
    let be = binary_energy(inst)?;
    let prob = be.build_qpbo()?;
    let sol = qpbo_solve(&prob)?;
    let x = icm_complete_from(&sol.labeling, &vec![true; inst.voxel_count], &be);
    let free = inst.labels.free();
    let occ = inst.labels.occupied().next().expect("two labels");
    let labeling: Vec<Label> = x.iter().map(|&b| if b { free } else { occ }).collect();
    let energy = evaluate_energy(inst, &labeling)?;
    Ok(BinarySolution {
        labeling,
        energy,
        lower_bound: sol.lower_bound(),
        unlabeled: sol.labeling.unlabeled_count(),
        persistent: (0..sol.labeling.len())
            .map(|v| sol.labeling.get(v))
            .collect(),
        node_count: prob.network().node_count(),
        arc_count: prob.network().arcs().count(),
    })
}
