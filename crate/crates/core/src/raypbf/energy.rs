use std::sync::OnceLock;

use super::{
    make_submodular, to_polynomial, Energy, PairwiseError, PseudoBooleanEnergy, QpboError,
    QpboProblem, RayCostProfile,
};

/// A binary energy made of ray profiles, submodular pairwise tables and a
/// constant. Variable value 1 means free space.
#[derive(Debug, Default)]
pub struct BinaryEnergy {
    var_count: usize,
    constant: Energy,
    rays: Vec<(Vec<u32>, RayCostProfile)>,
    pairwise: Vec<(u32, u32, [Energy; 4])>,
    index: OnceLock<Index>,
}

/// Compressed per-variable incidence lists.
#[derive(Debug)]
struct Index {
    ray_start: Vec<u32>,
    ray_entries: Vec<(u32, u32)>,
    pair_start: Vec<u32>,
    pair_entries: Vec<u32>,
}

fn csr<T: Copy + Default>(
    n: usize,
    items: impl Iterator<Item = (u32, T)> + Clone,
) -> (Vec<u32>, Vec<T>) {
    let mut start = vec![0u32; n + 1];
    for (v, _) in items.clone() {
        start[v as usize + 1] += 1;
    }
    for i in 0..n {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut entries = vec![T::default(); start[n] as usize];
    for (v, payload) in items {
        entries[fill[v as usize] as usize] = payload;
        fill[v as usize] += 1;
    }
    (start, entries)
}

impl BinaryEnergy {
    pub fn new(var_count: usize) -> Self {
        Self {
            var_count,
            ..Default::default()
        }
    }

    pub fn var_count(&self) -> usize {
        self.var_count
    }

    pub fn rays(&self) -> &[(Vec<u32>, RayCostProfile)] {
        &self.rays
    }

    pub fn pairwise(&self) -> &[(u32, u32, [Energy; 4])] {
        &self.pairwise
    }

    pub fn constant(&self) -> Energy {
        self.constant
    }

    pub fn add_constant(&mut self, c: Energy) {
        self.constant += c;
    }

    pub fn add_ray(&mut self, vars: Vec<u32>, profile: RayCostProfile) {
        assert_eq!(vars.len(), profile.len());
        assert!(vars.iter().all(|&v| (v as usize) < self.var_count));
        self.index.take();
        if vars.is_empty() {
            self.constant += profile.costs[0];
        } else {
            self.rays.push((vars, profile));
        }
    }

    pub fn add_pairwise(
        &mut self,
        u: u32,
        v: u32,
        table: [Energy; 4],
    ) -> Result<(), PairwiseError> {
        let [t00, t01, t10, t11] = table;
        if t00 + t11 > t01 + t10 || u == v {
            return Err(PairwiseError { u, v, table });
        }
        if table != [0; 4] {
            self.index.take();
            self.pairwise.push((u, v, table));
        }
        Ok(())
    }

    fn index(&self) -> &Index {
        self.index.get_or_init(|| {
            let ray_items = self.rays.iter().enumerate().flat_map(|(r, (vars, _))| {
                vars.iter()
                    .enumerate()
                    .map(move |(p, &v)| (v, (r as u32, p as u32)))
            });
            let (ray_start, ray_entries) = csr(self.var_count, ray_items);
            let pair_items = self
                .pairwise
                .iter()
                .enumerate()
                .flat_map(|(k, &(u, v, _))| [(u, k as u32), (v, k as u32)]);
            let (pair_start, pair_entries) = csr(self.var_count, pair_items);
            Index {
                ray_start,
                ray_entries,
                pair_start,
                pair_entries,
            }
        })
    }

    fn first_hit(&self, vars: &[u32], x: &[bool]) -> usize {
        vars.iter()
            .position(|&v| !x[v as usize])
            .unwrap_or(vars.len())
    }

    /// Builds the symmetric QPBO network for this energy.
    pub fn build_qpbo(&self) -> Result<QpboProblem, QpboError> {
        let ray_len: usize = self.rays.iter().map(|(v, _)| v.len()).sum();
        let large = ray_len > 100_000;
        let mut prob =
            QpboProblem::with_capacity(self.var_count, 4 * ray_len + 2 * self.pairwise.len())?;
        if large {
            prob = prob.without_registry();
        }
        prob.add_constant(self.constant)?;
        for &(u, v, table) in &self.pairwise {
            prob.add_pairwise_term(u, v, table)?;
        }
        for (vars, profile) in &self.rays {
            if profile.is_constant() {
                prob.add_constant(profile.costs[0])?;
                continue;
            }
            let sub = make_submodular(&to_polynomial(profile));
            prob.emit_ray_fragment(vars, &sub)?;
        }
        Ok(prob)
    }
}

impl PseudoBooleanEnergy for BinaryEnergy {
    fn energy(&self, x: &[bool]) -> Energy {
        let mut e = self.constant;
        for (vars, profile) in &self.rays {
            e += profile.costs[self.first_hit(vars, x)];
        }
        for &(u, v, t) in &self.pairwise {
            e += t[2 * usize::from(x[u as usize]) + usize::from(x[v as usize])];
        }
        e
    }

    fn flip_delta(&self, x: &[bool], var: usize) -> Energy {
        let idx = self.index();
        let mut delta = 0;
        let old = x[var];
        for &(r, p) in
            &idx.ray_entries[idx.ray_start[var] as usize..idx.ray_start[var + 1] as usize]
        {
            let (vars, profile) = &self.rays[r as usize];
            let p = p as usize;
            let k = self.first_hit(vars, x);
            let k_new = if old {
                k.min(p)
            } else if k == p {
                p + 1
                    + vars[p + 1..]
                        .iter()
                        .position(|&v| !x[v as usize])
                        .unwrap_or(vars.len() - p - 1)
            } else {
                k
            };
            delta += profile.costs[k_new] - profile.costs[k];
        }
        for &k in &idx.pair_entries[idx.pair_start[var] as usize..idx.pair_start[var + 1] as usize]
        {
            let (u, v, t) = self.pairwise[k as usize];
            let xu = x[u as usize];
            let xv = x[v as usize];
            let (nu, nv) = if u as usize == var {
                (!xu, xv)
            } else {
                (xu, !xv)
            };
            delta +=
                t[2 * usize::from(nu) + usize::from(nv)] - t[2 * usize::from(xu) + usize::from(xv)];
        }
        delta
    }
}
