//! Exhaustive reference solvers for tests and acceptance runs.

pub mod checks;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::Label;
use crate::maxflow::{FlowNetwork, NodeId};
use crate::raypbf::{Energy, QpboProblem, SubmodularRay};
use crate::solver::{evaluate_energy, EnergyInstance, SolverError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    pub max_binary_vars: usize,
    pub max_multilabel_states: usize,
    /// Largest set of auxiliary nodes enumerated jointly in `fragment_min`.
    pub max_aux_vars: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self {
            max_binary_vars: 14,
            max_multilabel_states: 20_000,
            max_aux_vars: 20,
        }
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("enumeration of {needed} exceeds the budget of {budget}")]
    Budget { needed: String, budget: usize },
    #[error("binary oracle needs exactly two labels, got {0}")]
    NotBinary(usize),
    #[error("no ray fragment {0} in the problem")]
    NoRay(usize),
    #[error("expected {expected} variable values, got {got}")]
    Assignment { got: usize, expected: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryOptimum {
    pub energy: Energy,
    /// Every optimal labeling, in ascending enumeration order.
    pub optima: Vec<Vec<Label>>,
}

fn binary_labeling(mask: u64, n: usize, occ: Label, free: Label) -> Vec<Label> {
    (0..n)
        .map(|v| if (mask >> v) & 1 == 1 { free } else { occ })
        .collect()
}

/// All minimizers of a two-label instance. Bit `v` of the enumeration index
/// set means voxel `v` is free space.
pub fn brute_force_binary(
    inst: &EnergyInstance,
    budget: &OracleBudget,
) -> Result<BinaryOptimum, OracleError> {
    let n = inst.voxel_count();
    if inst.labels().len() != 2 {
        return Err(OracleError::NotBinary(inst.labels().len()));
    }
    if n > budget.max_binary_vars {
        return Err(OracleError::Budget {
            needed: format!("2^{n} labelings"),
            budget: budget.max_binary_vars,
        });
    }
    let free = inst.labels().free();
    let occ = inst.labels().occupied().next().expect("two labels");
    let energies: Vec<Energy> = (0..1u64 << n)
        .into_par_iter()
        .map(|m| evaluate_energy(inst, &binary_labeling(m, n, occ, free)))
        .collect::<Result<_, _>>()?;
    let energy = *energies.iter().min().expect("at least one labeling");
    let optima = (0..1u64 << n)
        .filter(|&m| energies[m as usize] == energy)
        .map(|m| binary_labeling(m, n, occ, free))
        .collect();
    Ok(BinaryOptimum { energy, optima })
}

/// Exhaustive multi-label optimum; ties go to the smallest enumeration index
/// (voxel 0 is the least significant digit).
pub fn brute_force_multilabel(
    inst: &EnergyInstance,
    budget: &OracleBudget,
) -> Result<(Vec<Label>, Energy), OracleError> {
    let n = inst.voxel_count();
    let k = inst.labels().len();
    let states = (k as u64)
        .checked_pow(n as u32)
        .filter(|&s| s <= budget.max_multilabel_states as u64);
    let Some(states) = states else {
        return Err(OracleError::Budget {
            needed: format!("{k}^{n} labelings"),
            budget: budget.max_multilabel_states,
        });
    };
    let decode = |mut m: u64| -> Vec<Label> {
        (0..n)
            .map(|_| {
                let l = Label((m % k as u64) as u16);
                m /= k as u64;
                l
            })
            .collect()
    };
    let (energy, best) = (0..states)
        .into_par_iter()
        .map(|m| evaluate_energy(inst, &decode(m)).map(|e| (e, m)))
        .try_reduce(|| (Energy::MAX, u64::MAX), |a, b| Ok(a.min(b)))?;
    Ok((decode(best), energy))
}

/// Minimum of a network energy over the nodes not fixed by `fixed`, with the
/// minimizing labeling. Free nodes are split into connected components; in
/// each, an independent set of nodes is minimized per node in closed form and
/// the remaining nodes are enumerated.
pub fn min_over_free_nodes(
    net: &FlowNetwork,
    fixed: &[Option<bool>],
    max_enumerated: usize,
) -> Result<(Energy, Vec<bool>), OracleError> {
    let n = net.node_count();
    assert_eq!(fixed.len(), n);
    let mut total = net.constant();
    // (cost when 0, cost when 1) for each free node.
    let mut unary = vec![(0, 0); n];
    let mut adj: Vec<Vec<(usize, Energy, bool)>> = vec![Vec::new(); n];
    for u in 0..n {
        let (w_source, w_sink) = net.terminal_weights(u as NodeId);
        match fixed[u] {
            Some(true) => total += w_source,
            Some(false) => total += w_sink,
            None => unary[u] = (w_sink, w_source),
        }
    }
    for (p, q, c) in net.arcs() {
        let (pu, qu) = (p as usize, q as usize);
        match (fixed[pu], fixed[qu]) {
            (Some(a), Some(b)) => {
                if !a && b {
                    total += c;
                }
            }
            (Some(false), None) => unary[qu].1 += c,
            (Some(true), None) | (None, Some(false)) => {}
            (None, Some(true)) => unary[pu].0 += c,
            (None, None) => {
                // Cost c when p = 0 and q = 1; `true` marks p as the tail.
                adj[pu].push((qu, c, true));
                adj[qu].push((pu, c, false));
            }
        }
    }

    // Costs of a leaf at 0 and 1; its neighbours are all enumerated nodes.
    let leaf_costs = |u: usize, labels: &[bool]| {
        let (mut e0, mut e1) = unary[u];
        for &(v, c, tail) in &adj[u] {
            if tail && labels[v] {
                e0 += c;
            }
            if !tail && !labels[v] {
                e1 += c;
            }
        }
        (e0, e1)
    };

    let mut labels: Vec<bool> = fixed.iter().map(|f| f.unwrap_or(false)).collect();
    let mut seen = vec![false; n];
    for start in 0..n {
        if fixed[start].is_some() || seen[start] {
            continue;
        }
        let mut comp = vec![start];
        seen[start] = true;
        let mut head = 0;
        while head < comp.len() {
            let u = comp[head];
            head += 1;
            for &(v, ..) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    comp.push(v);
                }
            }
        }
        comp.sort_unstable();

        // Greedy independent set, lowest degree first.
        let mut by_degree = comp.clone();
        by_degree.sort_by_key(|&u| (adj[u].len(), u));
        let mut is_leaf = vec![false; n];
        let mut blocked = vec![false; n];
        for &u in &by_degree {
            if !blocked[u] {
                is_leaf[u] = true;
                blocked[u] = true;
                for &(v, ..) in &adj[u] {
                    blocked[v] = true;
                }
            }
        }
        let core: Vec<usize> = comp.iter().copied().filter(|&u| !is_leaf[u]).collect();
        let leaves: Vec<usize> = comp.iter().copied().filter(|&u| is_leaf[u]).collect();
        if core.len() > max_enumerated {
            return Err(OracleError::Budget {
                needed: format!("2^{} auxiliary assignments", core.len()),
                budget: max_enumerated,
            });
        }

        let mut best: Option<(Energy, u64)> = None;
        for mask in 0..1u64 << core.len() {
            for (k, &u) in core.iter().enumerate() {
                labels[u] = (mask >> k) & 1 == 1;
            }
            let mut e = 0;
            for &u in &core {
                e += if labels[u] { unary[u].1 } else { unary[u].0 };
                for &(v, c, tail) in &adj[u] {
                    if tail && !is_leaf[v] && !labels[u] && labels[v] {
                        e += c;
                    }
                }
            }
            for &u in &leaves {
                let (e0, e1) = leaf_costs(u, &labels);
                e += e0.min(e1);
            }
            if best.is_none_or(|(b, _)| e < b) {
                best = Some((e, mask));
            }
        }
        let (e, mask) = best.expect("non-empty enumeration");
        total += e;
        for (k, &u) in core.iter().enumerate() {
            labels[u] = (mask >> k) & 1 == 1;
        }
        for &u in &leaves {
            let (e0, e1) = leaf_costs(u, &labels);
            labels[u] = e1 < e0;
        }
    }
    debug_assert_eq!(net.energy(&labels), total);
    Ok((total, labels))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FragmentMin {
    pub min: Energy,
    /// Energy at the prefix-product auxiliary assignment.
    pub canonical: Energy,
    pub canonical_attains: bool,
}

/// Node labels with the variables fixed to `x` (and complements to `!x`) and
/// every auxiliary node free.
fn fix_variables(prob: &QpboProblem, x: &[bool]) -> Result<Vec<Option<bool>>, OracleError> {
    if x.len() != prob.var_count() {
        return Err(OracleError::Assignment {
            got: x.len(),
            expected: prob.var_count(),
        });
    }
    let mut fixed = vec![None; prob.network().node_count()];
    for (v, &xv) in x.iter().enumerate() {
        fixed[QpboProblem::x_node(v as u32) as usize] = Some(xv);
        fixed[QpboProblem::xbar_node(v as u32) as usize] = Some(!xv);
    }
    Ok(fixed)
}

/// Prefix-product assignment of every registered ray's auxiliaries; mirror
/// nodes take the complement.
pub fn canonical_labels(prob: &QpboProblem, x: &[bool]) -> Result<Vec<bool>, OracleError> {
    let fixed = fix_variables(prob, x)?;
    let mut labels: Vec<bool> = fixed.iter().map(|f| f.unwrap_or(false)).collect();
    for ray in prob.rays() {
        let mut prefix = true;
        for (i, &v) in ray.vars.iter().enumerate() {
            let xi = x[v as usize];
            let zp = prefix && !xi;
            prefix &= xi;
            let (z, zpn) = (ray.z[i] as usize, ray.z_prime[i] as usize);
            labels[z] = prefix;
            labels[z ^ 1] = !prefix;
            labels[zpn] = zp;
            labels[zpn ^ 1] = !zp;
        }
    }
    Ok(labels)
}

/// Minimum of the whole symmetric network over its auxiliary nodes, for a
/// fixed assignment `x` of the problem variables.
pub fn fragment_min(
    prob: &QpboProblem,
    x: &[bool],
    budget: &OracleBudget,
) -> Result<FragmentMin, OracleError> {
    let fixed = fix_variables(prob, x)?;
    let (min, _) = min_over_free_nodes(prob.network(), &fixed, budget.max_aux_vars)?;
    let canonical = prob.network().energy(&canonical_labels(prob, x)?);
    Ok(FragmentMin {
        min,
        canonical,
        canonical_attains: canonical == min,
    })
}

/// The non-mirrored half of ray `ray`'s fragment: arcs and terminal weights
/// touching its `z` and `z'` nodes, without the constant.
pub fn half_fragment(prob: &QpboProblem, ray: usize) -> Result<FlowNetwork, OracleError> {
    let aux = prob.rays().get(ray).ok_or(OracleError::NoRay(ray))?;
    let src = prob.network();
    let mut primary = vec![false; src.node_count()];
    for &u in aux.z.iter().chain(&aux.z_prime) {
        primary[u as usize] = true;
    }
    let mut net = FlowNetwork::new();
    net.add_nodes(src.node_count())
        .expect("node count already valid");
    for u in (0..src.node_count()).filter(|&u| primary[u]) {
        let (s, t) = src.terminal_weights(u as NodeId);
        net.add_terminal_weights(u as NodeId, s, t)
            .expect("copied weights fit");
    }
    for (p, q, c) in src.arcs() {
        if primary[p as usize] || primary[q as usize] {
            net.add_edge(p, q, c, 0).expect("copied arc is valid");
        }
    }
    Ok(net)
}

/// Minimum of `half_fragment(prob, ray)` over its auxiliary nodes.
pub fn half_fragment_min(
    prob: &QpboProblem,
    ray: usize,
    x: &[bool],
    budget: &OracleBudget,
) -> Result<Energy, OracleError> {
    let net = half_fragment(prob, ray)?;
    let fixed = fix_variables(prob, x)?;
    Ok(min_over_free_nodes(&net, &fixed, budget.max_aux_vars)?.0)
}

fn enumerate_min(
    vars: usize,
    budget: usize,
    cost: impl Fn(&[bool]) -> Energy,
) -> Result<Energy, OracleError> {
    if vars > budget {
        return Err(OracleError::Budget {
            needed: format!("2^{vars} auxiliary assignments"),
            budget,
        });
    }
    let mut z = vec![false; vars];
    let mut best = Energy::MAX;
    for m in 0..1u64 << vars {
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = (m >> k) & 1 == 1;
        }
        best = best.min(cost(&z));
    }
    Ok(best)
}

/// Unmerged construction for `-a Π_{j≤i} x_j`, minimized over its `i + 1`
/// private auxiliaries.
pub fn positive_chain_min(
    a: Energy,
    i: usize,
    x: &[bool],
    budget: &OracleBudget,
) -> Result<Energy, OracleError> {
    let nb = |b: bool| Energy::from(!b);
    let b = |b: bool| Energy::from(b);
    enumerate_min(i + 1, budget.max_aux_vars, |z| {
        let mut e = -b(z[i]) + b(z[i]) * nb(x[i]);
        for j in 0..i {
            e += b(z[j + 1]) * nb(z[j]) + b(z[j]) * nb(x[j]);
        }
        a * e
    })
}

/// Unmerged construction for `-b x̄_i Π_{j<i} x_j`.
pub fn negative_chain_min(
    bw: Energy,
    i: usize,
    x: &[bool],
    budget: &OracleBudget,
) -> Result<Energy, OracleError> {
    let nb = |b: bool| Energy::from(!b);
    let b = |b: bool| Energy::from(b);
    enumerate_min(i + 1, budget.max_aux_vars, |z| {
        let mut e = -b(z[i]) + b(z[i]) * nb(!x[i]);
        for j in 0..i {
            e += b(z[j + 1]) * nb(z[j]) + b(z[j]) * nb(x[j]);
        }
        bw * e
    })
}

/// Sum over all depths of the separately minimized unmerged constructions,
/// excluding the constant offset.
pub fn unmerged_min(
    s: &SubmodularRay,
    x: &[bool],
    budget: &OracleBudget,
) -> Result<Energy, OracleError> {
    let mut total = 0;
    for i in 0..s.len() {
        if s.a[i] != 0 {
            total += positive_chain_min(s.a[i], i, x, budget)?;
        }
        if s.b[i] != 0 {
            total += negative_chain_min(s.b[i], i, x, budget)?;
        }
    }
    Ok(total)
}
