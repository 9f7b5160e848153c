//! Exact s-t min-cut over sparse directed networks.
//!
//! The solver is the Boykov–Kolmogorov dual search-tree augmenting path
//! algorithm on integer capacities. Arcs are stored in pairs: arc `2k` and its
//! sister `2k + 1` run in opposite directions, so `a ^ 1` is always the reverse
//! residual arc.
//!
//! Terminal weights may be accumulated with either sign. Before solving, the
//! smaller of the two terminal weights of every node is folded into a constant
//! so that only one non-negative terminal arc per node remains.
//!
//! Labels follow the usual energy convention: a node on the [`Side::Source`]
//! side takes label 0 and pays its sink weight; a node on the [`Side::Sink`]
//! side takes label 1 and pays its source weight. An arc `u -> v` with capacity
//! `w` costs `w` when `u` is 0 and `v` is 1.

use std::collections::VecDeque;
use std::ops::Range;

use thiserror::Error;

pub type NodeId = u32;
pub type Capacity = i64;

const NONE: u32 = u32::MAX;
const TERMINAL: u32 = u32::MAX - 1;
const ORPHAN: u32 = u32::MAX - 2;
const MAX_ARCS: usize = (u32::MAX - 3) as usize;
const INFINITE_DIST: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FlowError {
    #[error("node id space exhausted ({requested} nodes requested, {existing} exist)")]
    NodeOverflow { existing: usize, requested: usize },
    #[error("arc id space exhausted")]
    ArcOverflow,
    #[error("node {0} is not allocated")]
    UnknownNode(NodeId),
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("negative arc capacity {0}")]
    NegativeCapacity(Capacity),
    #[error("capacity arithmetic overflow")]
    Overflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Source,
    Sink,
}

impl Side {
    /// Label convention: source side is 0, sink side is 1.
    pub fn label(self) -> bool {
        self == Side::Sink
    }
}

#[derive(Debug, Clone)]
pub struct CutResult {
    pub flow_value: Capacity,
    pub side: Vec<Side>,
    pub constant_offset: Capacity,
}

impl CutResult {
    /// Minimum of the energy represented by the network.
    pub fn min_energy(&self) -> Capacity {
        self.flow_value + self.constant_offset
    }
}

#[derive(Debug, Clone, Copy)]
struct Arc {
    head: NodeId,
    next: u32,
    cap: Capacity,
}

/// A flow network under construction.
#[derive(Debug, Clone, Default)]
pub struct FlowNetwork {
    first: Vec<u32>,
    source_w: Vec<Capacity>,
    sink_w: Vec<Capacity>,
    arcs: Vec<Arc>,
    constant: Capacity,
}

impl FlowNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize, arc_pairs: usize) -> Self {
        Self {
            first: Vec::with_capacity(nodes),
            source_w: Vec::with_capacity(nodes),
            sink_w: Vec::with_capacity(nodes),
            arcs: Vec::with_capacity(2 * arc_pairs),
            constant: 0,
        }
    }

    pub fn node_count(&self) -> usize {
        self.first.len()
    }

    /// Number of arc pairs added (each pair carries both directions).
    pub fn arc_pair_count(&self) -> usize {
        self.arcs.len() / 2
    }

    pub fn add_nodes(&mut self, n: usize) -> Result<Range<NodeId>, FlowError> {
        let start = self.first.len();
        let end = start
            .checked_add(n)
            .filter(|&e| e <= ORPHAN as usize)
            .ok_or(FlowError::NodeOverflow {
                existing: start,
                requested: n,
            })?;
        self.first.resize(end, NONE);
        self.source_w.resize(end, 0);
        self.sink_w.resize(end, 0);
        Ok(start as NodeId..end as NodeId)
    }

    fn check(&self, u: NodeId) -> Result<usize, FlowError> {
        let i = u as usize;
        if i < self.first.len() {
            Ok(i)
        } else {
            Err(FlowError::UnknownNode(u))
        }
    }

    /// Adds the arc pair `u -> v` (capacity `cap_uv`) and `v -> u` (`cap_vu`).
    /// Repeated calls between the same nodes accumulate.
    pub fn add_edge(
        &mut self,
        u: NodeId,
        v: NodeId,
        cap_uv: Capacity,
        cap_vu: Capacity,
    ) -> Result<(), FlowError> {
        let (ui, vi) = (self.check(u)?, self.check(v)?);
        if u == v {
            return Err(FlowError::SelfLoop(u));
        }
        if cap_uv < 0 || cap_vu < 0 {
            return Err(FlowError::NegativeCapacity(cap_uv.min(cap_vu)));
        }
        if cap_uv == 0 && cap_vu == 0 {
            return Ok(());
        }
        let a = self.arcs.len();
        if a + 2 > MAX_ARCS {
            return Err(FlowError::ArcOverflow);
        }
        self.arcs.push(Arc {
            head: v,
            next: self.first[ui],
            cap: cap_uv,
        });
        self.first[ui] = a as u32;
        self.arcs.push(Arc {
            head: u,
            next: self.first[vi],
            cap: cap_vu,
        });
        self.first[vi] = (a + 1) as u32;
        Ok(())
    }

    /// Accumulates terminal weights. `w_source` is paid when `u` ends on the
    /// sink side, `w_sink` when it ends on the source side. Either may be
    /// negative.
    pub fn add_terminal_weights(
        &mut self,
        u: NodeId,
        w_source: Capacity,
        w_sink: Capacity,
    ) -> Result<(), FlowError> {
        let i = self.check(u)?;
        self.source_w[i] = self.source_w[i]
            .checked_add(w_source)
            .ok_or(FlowError::Overflow)?;
        self.sink_w[i] = self.sink_w[i]
            .checked_add(w_sink)
            .ok_or(FlowError::Overflow)?;
        Ok(())
    }

    pub fn add_constant(&mut self, c: Capacity) -> Result<(), FlowError> {
        self.constant = self.constant.checked_add(c).ok_or(FlowError::Overflow)?;
        Ok(())
    }

    pub fn constant(&self) -> Capacity {
        self.constant
    }

    /// Raw accumulated (source, sink) terminal weights of a node.
    pub fn terminal_weights(&self, u: NodeId) -> (Capacity, Capacity) {
        (self.source_w[u as usize], self.sink_w[u as usize])
    }

    /// Normalized terminal capacities and the offset folded out of them.
    pub fn normalized_terminal(&self, u: NodeId) -> (Capacity, Capacity, Capacity) {
        let (s, t) = self.terminal_weights(u);
        let m = s.min(t);
        (s - m, t - m, m)
    }

    /// Total capacity from `u` to `v` over all parallel arcs.
    pub fn arc_capacity(&self, u: NodeId, v: NodeId) -> Capacity {
        let mut total = 0;
        let mut a = self.first[u as usize];
        while a != NONE {
            let arc = &self.arcs[a as usize];
            if arc.head == v {
                total += arc.cap;
            }
            a = arc.next;
        }
        total
    }

    /// Iterates all directed arcs with positive capacity as `(from, to, cap)`.
    pub fn arcs(&self) -> impl Iterator<Item = (NodeId, NodeId, Capacity)> + '_ {
        self.arcs
            .iter()
            .enumerate()
            .filter(|(_, a)| a.cap > 0)
            .map(|(i, a)| {
                let from = self.arcs[i ^ 1].head;
                (from, a.head, a.cap)
            })
    }

    /// Energy of a full 0/1 node labeling under the network's signed weights.
    pub fn energy(&self, labels: &[bool]) -> Capacity {
        let mut e = self.constant;
        for (i, &l) in labels.iter().enumerate().take(self.node_count()) {
            e += if l { self.source_w[i] } else { self.sink_w[i] };
        }
        for (u, v, c) in self.arcs() {
            if !labels[u as usize] && labels[v as usize] {
                e += c;
            }
        }
        e
    }

    /// Computes a minimum cut. The network is left unchanged.
    pub fn solve(&self) -> Result<CutResult, FlowError> {
        let mut state = BkState::new(self)?;
        state.run()?;
        let side = (0..self.node_count())
            .map(|i| {
                if state.parent[i] != NONE && state.is_sink[i] {
                    Side::Sink
                } else {
                    Side::Source
                }
            })
            .collect();
        Ok(CutResult {
            flow_value: state.flow,
            side,
            constant_offset: state.offset,
        })
    }
}

/// Solver state. Arcs are copied into per-node contiguous ranges so that
/// scanning a node's arcs touches consecutive memory.
struct BkState {
    start: Vec<u32>,
    head: Vec<u32>,
    sister: Vec<u32>,
    r_cap: Vec<Capacity>,
    tr_cap: Vec<Capacity>,
    parent: Vec<u32>,
    is_sink: Vec<bool>,
    ts: Vec<u32>,
    dist: Vec<u32>,
    active: Vec<bool>,
    queue: VecDeque<NodeId>,
    orphans: VecDeque<NodeId>,
    time: u32,
    flow: Capacity,
    offset: Capacity,
}

impl BkState {
    fn new(net: &FlowNetwork) -> Result<Self, FlowError> {
        let n = net.node_count();
        let mut offset = net.constant;
        let mut tr_cap = Vec::with_capacity(n);
        for i in 0..n {
            let (s, t) = (net.source_w[i], net.sink_w[i]);
            offset = offset.checked_add(s.min(t)).ok_or(FlowError::Overflow)?;
            tr_cap.push(s.checked_sub(t).ok_or(FlowError::Overflow)?);
        }

        let m = net.arcs.len();
        let mut start = vec![0u32; n + 1];
        for k in 0..m {
            // The tail of arc k is the head of its sister.
            start[net.arcs[k ^ 1].head as usize + 1] += 1;
        }
        for i in 0..n {
            start[i + 1] += start[i];
        }
        let mut pos = start.clone();
        let mut new_id = vec![0u32; m];
        for i in 0..n {
            let mut a = net.first[i];
            while a != NONE {
                new_id[a as usize] = pos[i];
                pos[i] += 1;
                a = net.arcs[a as usize].next;
            }
        }
        let mut head = vec![0u32; m];
        let mut sister = vec![0u32; m];
        let mut r_cap = vec![0; m];
        for k in 0..m {
            let id = new_id[k] as usize;
            head[id] = net.arcs[k].head;
            sister[id] = new_id[k ^ 1];
            r_cap[id] = net.arcs[k].cap;
        }
        drop(new_id);

        let mut st = Self {
            start,
            head,
            sister,
            r_cap,
            tr_cap,
            parent: vec![NONE; n],
            is_sink: vec![false; n],
            ts: vec![0; n],
            dist: vec![0; n],
            active: vec![false; n],
            queue: VecDeque::new(),
            orphans: VecDeque::new(),
            time: 0,
            flow: 0,
            offset,
        };
        for i in 0..n {
            let c = st.tr_cap[i];
            if c != 0 {
                st.is_sink[i] = c < 0;
                st.parent[i] = TERMINAL;
                st.dist[i] = 1;
                st.set_active(i as NodeId);
            }
        }
        Ok(st)
    }

    #[inline]
    fn arcs_of(&self, i: usize) -> Range<u32> {
        self.start[i]..self.start[i + 1]
    }

    #[inline]
    fn set_active(&mut self, i: NodeId) {
        if !self.active[i as usize] {
            self.active[i as usize] = true;
            self.queue.push_back(i);
        }
    }

    fn next_active(&mut self) -> Option<usize> {
        while let Some(i) = self.queue.pop_front() {
            let i = i as usize;
            self.active[i] = false;
            if self.parent[i] != NONE {
                return Some(i);
            }
        }
        None
    }

    fn run(&mut self) -> Result<(), FlowError> {
        let mut current: Option<usize> = None;
        loop {
            let i = match current.filter(|&i| self.parent[i] != NONE) {
                Some(i) => i,
                None => match self.next_active() {
                    Some(i) => i,
                    None => break,
                },
            };
            current = None;
            let Some(bridge) = self.grow(i) else { continue };
            // Keep expanding from the same node after augmenting.
            current = Some(i);
            self.time = self.time.wrapping_add(1);
            self.augment(bridge)?;
            self.adopt_orphans();
        }
        Ok(())
    }

    /// Grows the tree containing `i`; returns an S->T bridge arc if one is found.
    fn grow(&mut self, i: usize) -> Option<u32> {
        let sink = self.is_sink[i];
        for a in self.arcs_of(i) {
            let j = self.head[a as usize] as usize;
            let residual = if sink {
                self.r_cap[self.sister[a as usize] as usize]
            } else {
                self.r_cap[a as usize]
            };
            if residual > 0 {
                if self.parent[j] == NONE {
                    self.is_sink[j] = sink;
                    self.parent[j] = self.sister[a as usize];
                    self.ts[j] = self.ts[i];
                    self.dist[j] = self.dist[i] + 1;
                    self.set_active(j as NodeId);
                } else if self.is_sink[j] != sink {
                    return Some(if sink { self.sister[a as usize] } else { a });
                } else if self.ts[j] <= self.ts[i] && self.dist[j] > self.dist[i] {
                    self.parent[j] = self.sister[a as usize];
                    self.ts[j] = self.ts[i];
                    self.dist[j] = self.dist[i] + 1;
                }
            }
        }
        None
    }

    fn augment(&mut self, bridge: u32) -> Result<(), FlowError> {
        let tail = self.head[self.sister[bridge as usize] as usize] as usize;
        let head = self.head[bridge as usize] as usize;

        let mut b = self.r_cap[bridge as usize];
        let mut i = tail;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            b = b.min(self.r_cap[self.sister[a as usize] as usize]);
            i = self.head[a as usize] as usize;
        }
        b = b.min(self.tr_cap[i]);
        let mut i = head;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            b = b.min(self.r_cap[a as usize]);
            i = self.head[a as usize] as usize;
        }
        b = b.min(-self.tr_cap[i]);

        let sb = self.sister[bridge as usize] as usize;
        self.r_cap[sb] += b;
        self.r_cap[bridge as usize] -= b;

        let mut i = tail;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            let sa = self.sister[a as usize] as usize;
            self.r_cap[a as usize] += b;
            self.r_cap[sa] -= b;
            if self.r_cap[sa] == 0 {
                self.make_orphan_front(i);
            }
            i = self.head[a as usize] as usize;
        }
        self.tr_cap[i] -= b;
        if self.tr_cap[i] == 0 {
            self.make_orphan_front(i);
        }

        let mut i = head;
        loop {
            let a = self.parent[i];
            if a == TERMINAL {
                break;
            }
            let sa = self.sister[a as usize] as usize;
            self.r_cap[sa] += b;
            self.r_cap[a as usize] -= b;
            if self.r_cap[a as usize] == 0 {
                self.make_orphan_front(i);
            }
            i = self.head[a as usize] as usize;
        }
        self.tr_cap[i] += b;
        if self.tr_cap[i] == 0 {
            self.make_orphan_front(i);
        }

        self.flow = self.flow.checked_add(b).ok_or(FlowError::Overflow)?;
        Ok(())
    }

    fn make_orphan_front(&mut self, i: usize) {
        self.parent[i] = ORPHAN;
        self.orphans.push_front(i as NodeId);
    }

    fn make_orphan_back(&mut self, i: usize) {
        self.parent[i] = ORPHAN;
        self.orphans.push_back(i as NodeId);
    }

    fn adopt_orphans(&mut self) {
        while let Some(i) = self.orphans.pop_front() {
            self.adopt(i as usize);
        }
    }

    /// Distance from `j` to its terminal through valid parents, or `None` if
    /// the path ends in an orphan.
    fn origin_distance(&mut self, j: usize) -> Option<u32> {
        let mut d: u32 = 0;
        let mut k = j;
        loop {
            if self.ts[k] == self.time {
                d += self.dist[k];
                break;
            }
            let a = self.parent[k];
            d += 1;
            if a == TERMINAL {
                self.ts[k] = self.time;
                self.dist[k] = 1;
                break;
            }
            if a == ORPHAN {
                return None;
            }
            k = self.head[a as usize] as usize;
        }
        // Cache distances along the path.
        let mut k = j;
        let mut dd = d;
        while self.ts[k] != self.time {
            self.ts[k] = self.time;
            self.dist[k] = dd;
            dd -= 1;
            k = self.head[self.parent[k] as usize] as usize;
        }
        Some(d)
    }

    fn adopt(&mut self, i: usize) {
        let sink = self.is_sink[i];
        let mut best: Option<(u32, u32)> = None;
        for a in self.arcs_of(i) {
            let j = self.head[a as usize] as usize;
            let residual = if sink {
                self.r_cap[a as usize]
            } else {
                self.r_cap[self.sister[a as usize] as usize]
            };
            if residual > 0 && self.is_sink[j] == sink && self.parent[j] != NONE {
                if let Some(d) = self.origin_distance(j) {
                    if d < best.map_or(INFINITE_DIST, |b| b.1) {
                        best = Some((a, d));
                    }
                }
            }
        }

        if let Some((a, d)) = best {
            self.parent[i] = a;
            self.ts[i] = self.time;
            self.dist[i] = d + 1;
            return;
        }

        // No valid parent: the node becomes free.
        self.parent[i] = NONE;
        for a in self.arcs_of(i) {
            let j = self.head[a as usize] as usize;
            if self.is_sink[j] == sink && self.parent[j] != NONE {
                let residual = if sink {
                    self.r_cap[a as usize]
                } else {
                    self.r_cap[self.sister[a as usize] as usize]
                };
                if residual > 0 {
                    self.set_active(j as NodeId);
                }
                let pa = self.parent[j];
                if pa != TERMINAL && pa != ORPHAN && self.head[pa as usize] as usize == i {
                    self.make_orphan_back(j);
                }
            }
        }
    }
}
