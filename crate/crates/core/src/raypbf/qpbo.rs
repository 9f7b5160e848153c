use thiserror::Error;

use super::{Energy, SubmodularRay};
use crate::maxflow::{FlowError, FlowNetwork, NodeId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("pairwise table on ({u}, {v}) is not submodular: {table:?}")]
pub struct PairwiseError {
    pub u: u32,
    pub v: u32,
    pub table: [Energy; 4],
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QpboError {
    #[error("variable {var} out of range (problem has {count})")]
    VariableOutOfRange { var: u32, count: usize },
    #[error("ray has {vars} variables but the decomposition has {weights}")]
    RayLength { vars: usize, weights: usize },
    #[error(transparent)]
    Pairwise(#[from] PairwiseError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Auxiliary nodes of one emitted ray: `z[i]` carries the prefix product up to
/// depth `i`, `z_prime[i]` the "first zero at depth i" indicator. Mirrors are
/// the adjacent node ids (`id ^ 1`).
#[derive(Debug, Clone)]
pub struct RayAux {
    pub vars: Vec<u32>,
    pub z: Vec<NodeId>,
    pub z_prime: Vec<NodeId>,
    pub arcs: usize,
}

/// Doubled-variable network for a quadratic pseudo-boolean energy.
///
/// Variable `v` owns node `2v` (`x`) and `2v + 1` (`x̄`). Every term is added
/// twice, once on the original nodes and once mirrored onto the complement
/// nodes, so the network represents twice the energy when `x̄ = 1 - x`.
#[derive(Debug, Clone)]
pub struct QpboProblem {
    net: FlowNetwork,
    var_count: usize,
    rays: Vec<RayAux>,
    keep_registry: bool,
}

#[inline]
pub(crate) fn mirror(n: NodeId) -> NodeId {
    n ^ 1
}

impl QpboProblem {
    pub fn new(var_count: usize) -> Result<Self, QpboError> {
        Self::with_capacity(var_count, 0)
    }

    pub fn with_capacity(var_count: usize, arc_pairs: usize) -> Result<Self, QpboError> {
        let mut net = FlowNetwork::with_capacity(2 * var_count, arc_pairs);
        net.add_nodes(2 * var_count)?;
        Ok(Self {
            net,
            var_count,
            rays: Vec::new(),
            keep_registry: true,
        })
    }

    /// Drop per-ray auxiliary bookkeeping; used for large problems.
    pub fn without_registry(mut self) -> Self {
        self.keep_registry = false;
        self
    }

    pub fn var_count(&self) -> usize {
        self.var_count
    }

    pub fn network(&self) -> &FlowNetwork {
        &self.net
    }

    pub fn rays(&self) -> &[RayAux] {
        &self.rays
    }

    pub fn x_node(v: u32) -> NodeId {
        2 * v
    }

    pub fn xbar_node(v: u32) -> NodeId {
        2 * v + 1
    }

    fn check_var(&self, v: u32) -> Result<(), QpboError> {
        if (v as usize) < self.var_count {
            Ok(())
        } else {
            Err(QpboError::VariableOutOfRange {
                var: v,
                count: self.var_count,
            })
        }
    }

    fn sym_edge(
        &mut self,
        p: NodeId,
        q: NodeId,
        w_pq: Energy,
        w_qp: Energy,
    ) -> Result<usize, QpboError> {
        if w_pq == 0 && w_qp == 0 {
            return Ok(0);
        }
        self.net.add_edge(p, q, w_pq, w_qp)?;
        self.net.add_edge(mirror(q), mirror(p), w_pq, w_qp)?;
        Ok(2 * (usize::from(w_pq > 0) + usize::from(w_qp > 0)))
    }

    fn sym_unary(&mut self, n: NodeId, cost0: Energy, cost1: Energy) -> Result<(), QpboError> {
        self.net.add_terminal_weights(n, cost1, cost0)?;
        self.net.add_terminal_weights(mirror(n), cost0, cost1)?;
        Ok(())
    }

    pub fn add_constant(&mut self, c: Energy) -> Result<(), QpboError> {
        self.net
            .add_constant(c.checked_mul(2).ok_or(FlowError::Overflow)?)?;
        Ok(())
    }

    /// `e0` when `x_v = 0`, `e1` when `x_v = 1`.
    pub fn add_unary(&mut self, v: u32, e0: Energy, e1: Energy) -> Result<(), QpboError> {
        self.check_var(v)?;
        self.sym_unary(Self::x_node(v), e0, e1)
    }

    /// Submodular pairwise table `[θ00, θ01, θ10, θ11]` indexed by `(x_u, x_v)`.
    pub fn add_pairwise_term(
        &mut self,
        u: u32,
        v: u32,
        table: [Energy; 4],
    ) -> Result<usize, QpboError> {
        self.check_var(u)?;
        self.check_var(v)?;
        let [t00, t01, t10, t11] = table;
        let w = t01 + t10 - t00 - t11;
        if w < 0 || u == v {
            return Err(PairwiseError { u, v, table }.into());
        }
        // Split into p·[u=0,v=1] + q·[u=1,v=0] with p + q = w, plus unaries.
        let (p, q) = (t01 - t00, t10 - t11);
        let (p, q) = if p < 0 {
            // remainder: t00 + (t01 - t00) v + (t11 - t01) u
            self.add_unary(v, 0, t01 - t00)?;
            self.add_unary(u, 0, t11 - t01)?;
            (0, w)
        } else if q < 0 {
            // remainder: t00 + (t10 - t00) u + (t11 - t10) v
            self.add_unary(u, 0, t10 - t00)?;
            self.add_unary(v, 0, t11 - t10)?;
            (w, 0)
        } else {
            // remainder: t00 + (t11 - t00) u
            self.add_unary(u, 0, t11 - t00)?;
            (p, q)
        };
        self.add_constant(t00)?;
        self.sym_edge(Self::x_node(u), Self::x_node(v), p, q)
    }

    /// Emits the merged, symmetric graph of one ray. Returns the number of
    /// directed arcs added.
    pub fn emit_ray_fragment(
        &mut self,
        vars: &[u32],
        s: &SubmodularRay,
    ) -> Result<usize, QpboError> {
        if vars.len() != s.len() {
            return Err(QpboError::RayLength {
                vars: vars.len(),
                weights: s.len(),
            });
        }
        for &v in vars {
            self.check_var(v)?;
        }
        self.add_constant(s.offset)?;
        let n = vars.len();
        let aux = self.net.add_nodes(4 * n)?;
        let z = |i: usize| aux.start + 4 * i as u32;
        let zp = |i: usize| aux.start + 4 * i as u32 + 2;
        let mut arcs = 0;
        for (i, &v) in vars.iter().enumerate() {
            let (a, b, f) = (s.a[i], s.b[i], s.f[i]);
            if a > 0 {
                self.sym_unary(z(i), 0, -a)?;
            }
            if f > 0 {
                // f_i · z_i (1 - x_i)
                arcs += self.sym_edge(Self::x_node(v), z(i), f, 0)?;
                if i > 0 {
                    // f_i · z_i (1 - z_{i-1})
                    arcs += self.sym_edge(z(i - 1), z(i), f, 0)?;
                }
            }
            if b > 0 {
                self.sym_unary(zp(i), 0, -b)?;
                // b_i · z'_i (1 - x̄_i)
                arcs += self.sym_edge(Self::xbar_node(v), zp(i), b, 0)?;
                if i > 0 {
                    // b_i · z'_i (1 - z_{i-1})
                    arcs += self.sym_edge(z(i - 1), zp(i), b, 0)?;
                }
            }
        }
        if self.keep_registry {
            self.rays.push(RayAux {
                vars: vars.to_vec(),
                z: (0..n).map(z).collect(),
                z_prime: (0..n).map(zp).collect(),
                arcs,
            });
        }
        Ok(arcs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartialValue {
    Zero,
    One,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartialLabeling {
    pub values: Vec<PartialValue>,
}

impl PartialLabeling {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, v: usize) -> Option<bool> {
        match self.values[v] {
            PartialValue::Zero => Some(false),
            PartialValue::One => Some(true),
            PartialValue::Unlabeled => None,
        }
    }

    pub fn unlabeled_count(&self) -> usize {
        self.values
            .iter()
            .filter(|&&v| v == PartialValue::Unlabeled)
            .count()
    }

    pub fn from_bools(x: &[bool]) -> Self {
        Self {
            values: x
                .iter()
                .map(|&b| {
                    if b {
                        PartialValue::One
                    } else {
                        PartialValue::Zero
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct QpboSolution {
    pub labeling: PartialLabeling,
    /// Label of every `x` node in the returned cut, including unlabeled ones.
    pub cut_labels: Vec<bool>,
    /// Minimum of the doubled network energy.
    pub doubled_bound: Energy,
    pub flow_value: Energy,
}

impl QpboSolution {
    /// Integer lower bound on the binary energy: `ceil(doubled / 2)`.
    pub fn lower_bound(&self) -> Energy {
        self.doubled_bound.div_euclid(2) + self.doubled_bound.rem_euclid(2)
    }
}

pub fn qpbo_solve(prob: &QpboProblem) -> Result<QpboSolution, QpboError> {
    let cut = prob.net.solve()?;
    let n = prob.var_count;
    let mut values = Vec::with_capacity(n);
    let mut cut_labels = Vec::with_capacity(n);
    for v in 0..n as u32 {
        let x = cut.side[QpboProblem::x_node(v) as usize].label();
        let xb = cut.side[QpboProblem::xbar_node(v) as usize].label();
        cut_labels.push(x);
        values.push(match (x, xb) {
            (false, true) => PartialValue::Zero,
            (true, false) => PartialValue::One,
            _ => PartialValue::Unlabeled,
        });
    }
    Ok(QpboSolution {
        labeling: PartialLabeling { values },
        cut_labels,
        doubled_bound: cut.min_energy(),
        flow_value: cut.flow_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raypbf::{make_submodular, to_polynomial, RayCostProfile};

    fn network_labels(prob: &QpboProblem, x: &[bool], aux: &[bool]) -> Vec<bool> {
        let mut labels = Vec::new();
        for &xi in x {
            labels.push(xi);
            labels.push(!xi);
        }
        labels.extend_from_slice(aux);
        assert_eq!(labels.len(), prob.network().node_count());
        labels
    }

    #[test]
    fn potts_is_one_arc_pair_per_side() {
        let mut p = QpboProblem::new(2).unwrap();
        let arcs = p.add_pairwise_term(0, 1, [0, 7, 7, 0]).unwrap();
        assert_eq!(arcs, 4);
        let net = p.network();
        assert_eq!(net.arc_pair_count(), 2);
        assert_eq!(net.arc_capacity(0, 2), 7);
        assert_eq!(net.arc_capacity(2, 0), 7);
        assert_eq!(net.arc_capacity(3, 1), 7);
        assert_eq!(net.arc_capacity(1, 3), 7);
    }

    #[test]
    fn zero_table_emits_nothing() {
        let mut p = QpboProblem::new(2).unwrap();
        assert_eq!(p.add_pairwise_term(0, 1, [0, 0, 0, 0]).unwrap(), 0);
        assert_eq!(p.network().arc_pair_count(), 0);
    }

    #[test]
    fn non_submodular_rejected() {
        let mut p = QpboProblem::new(2).unwrap();
        assert!(matches!(
            p.add_pairwise_term(0, 1, [3, 0, 0, 3]),
            Err(QpboError::Pairwise(_))
        ));
        assert!(matches!(
            p.add_pairwise_term(0, 9, [0, 1, 1, 0]),
            Err(QpboError::VariableOutOfRange { .. })
        ));
    }

    #[test]
    fn pairwise_tables_match_cut_values() {
        for table in [
            [0, 3, 1, 0],
            [5, 2, 9, 1],
            [0, 0, 4, -2],
            [2, 8, -1, 1],
            [-3, 4, 4, -3],
        ] {
            let mut p = QpboProblem::new(2).unwrap();
            p.add_pairwise_term(0, 1, table).unwrap();
            for (k, &want) in table.iter().enumerate() {
                let x = [k & 2 != 0, k & 1 != 0];
                let e = p.network().energy(&network_labels(&p, &x, &[]));
                assert_eq!(e, 2 * want, "table {table:?} at {x:?}");
            }
        }
    }

    #[test]
    fn unary_is_doubled() {
        let mut p = QpboProblem::new(1).unwrap();
        p.add_unary(0, 3, -4).unwrap();
        assert_eq!(p.network().energy(&[false, true]), 6);
        assert_eq!(p.network().energy(&[true, false]), -8);
    }

    #[test]
    fn single_negative_product_fragment() {
        // a = [2], b = [0]: the doubled fragment is -4 when x_0 = 1, else 0.
        let s = SubmodularRay {
            a: vec![2],
            b: vec![0],
            f: vec![2],
            offset: 0,
        };
        let mut p = QpboProblem::new(1).unwrap();
        p.emit_ray_fragment(&[0], &s).unwrap();
        for x0 in [false, true] {
            let min = (0u32..16)
                .map(|m| {
                    let aux: Vec<bool> = (0..4).map(|i| m >> i & 1 == 1).collect();
                    p.network().energy(&network_labels(&p, &[x0], &aux))
                })
                .min()
                .unwrap();
            assert_eq!(min, if x0 { -4 } else { 0 });
        }
    }

    #[test]
    fn fragment_chain_carries_merged_weights() {
        let s = make_submodular(&to_polynomial(&RayCostProfile::new(vec![0, -3, -8, 2])));
        let mut p = QpboProblem::new(3).unwrap();
        p.emit_ray_fragment(&[0, 1, 2], &s).unwrap();
        let ray = &p.rays()[0];
        let net = p.network();
        for i in 0..3 {
            assert_eq!(
                net.arc_capacity(QpboProblem::x_node(i as u32), ray.z[i]),
                s.f[i]
            );
            if i > 0 {
                assert_eq!(net.arc_capacity(ray.z[i - 1], ray.z[i]), s.f[i]);
            }
        }
        assert_eq!(s.f[0], s.a[2] + s.a[1] + s.a[0] + s.b[2] + s.b[1]);
    }

    #[test]
    fn arcs_grow_linearly() {
        let count = |n: usize| {
            let costs: Vec<Energy> = (0..=n as i64)
                .map(|i| if i % 2 == 0 { i } else { -i })
                .collect();
            let s = make_submodular(&to_polynomial(&RayCostProfile::new(costs)));
            let mut p = QpboProblem::new(n).unwrap();
            let vars: Vec<u32> = (0..n as u32).collect();
            p.emit_ray_fragment(&vars, &s).unwrap()
        };
        let (small, large) = (count(100), count(1000));
        assert!(large as f64 / small as f64 <= 10.5, "{large} / {small}");
        assert!(small <= 8 * 100 && large <= 8 * 1000);
    }

    #[test]
    fn lower_bound_rounds_up() {
        let sol = |d| QpboSolution {
            labeling: PartialLabeling { values: vec![] },
            cut_labels: vec![],
            doubled_bound: d,
            flow_value: 0,
        };
        assert_eq!(sol(5).lower_bound(), 3);
        assert_eq!(sol(-5).lower_bound(), -2);
        assert_eq!(sol(4).lower_bound(), 2);
    }
}
