//! Pseudo-boolean reduction of first-hit ray potentials.
//!
//! A binary ray over variables `x_0..x_{N-1}` (1 = free space, 0 = occupied)
//! costs `costs[K]` where `K` is the first zero, or `N` if there is none. The
//! reduction rewrites this cost as a constant plus negative products of the
//! `x` and `x̄ = 1 - x` literals, and then as a pairwise submodular function
//! of `x`, `x̄` and two auxiliary chains per ray. The symmetric form of that
//! function is what [`QpboProblem`] places into a flow network.

mod energy;
mod icm;
mod qpbo;

pub use energy::BinaryEnergy;
pub use icm::{icm_complete, icm_complete_from, PseudoBooleanEnergy};
pub use qpbo::{
    qpbo_solve, PairwiseError, PartialLabeling, PartialValue, QpboError, QpboProblem, QpboSolution,
    RayAux,
};

/// Signed fixed-point energy.
pub type Energy = i64;

/// `costs[i]` is the cost when `i` is the first occupied position; the last
/// entry is the cost of an all-free ray.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RayCostProfile {
    pub costs: Vec<Energy>,
}

impl RayCostProfile {
    pub fn new(costs: Vec<Energy>) -> Self {
        assert!(!costs.is_empty(), "a ray profile needs the all-free entry");
        Self { costs }
    }

    /// Number of variables on the ray.
    pub fn len(&self) -> usize {
        self.costs.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index of the first `false` (occupied) entry, or the ray length.
    pub fn first_hit(x: &[bool]) -> usize {
        x.iter().position(|&v| !v).unwrap_or(x.len())
    }

    pub fn value(&self, x: &[bool]) -> Energy {
        self.costs[Self::first_hit(x)]
    }

    pub fn is_constant(&self) -> bool {
        self.costs.windows(2).all(|w| w[0] == w[1])
    }
}

/// `k + Σ_i c_i Π_{j≤i} x_j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolynomialRay {
    pub k: Energy,
    pub c: Vec<Energy>,
}

impl PolynomialRay {
    pub fn value(&self, x: &[bool]) -> Energy {
        let mut v = self.k;
        for (ci, _) in self.c.iter().zip(x).take_while(|(_, &xi)| xi) {
            v += ci;
        }
        v
    }
}

pub fn to_polynomial(profile: &RayCostProfile) -> PolynomialRay {
    PolynomialRay {
        k: profile.costs[0],
        c: profile.costs.windows(2).map(|w| w[1] - w[0]).collect(),
    }
}

/// `offset + Σ_i (-a_i Π_{j≤i} x_j - b_i x̄_i Π_{j<i} x_j)` with non-negative
/// `a`, `b`; `f_i = Σ_{j≥i} a_j + Σ_{j>i} b_j` are the merged chain weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubmodularRay {
    pub a: Vec<Energy>,
    pub b: Vec<Energy>,
    pub f: Vec<Energy>,
    pub offset: Energy,
}

impl SubmodularRay {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn value(&self, x: &[bool]) -> Energy {
        let mut v = self.offset;
        let mut prefix = true;
        for i in 0..self.len() {
            if prefix && !x[i] {
                v -= self.b[i];
            }
            prefix &= x[i];
            if prefix {
                v -= self.a[i];
            }
        }
        v
    }
}

fn chain_weights(a: &[Energy], b: &[Energy]) -> Vec<Energy> {
    let n = a.len();
    let mut f = vec![0; n];
    let mut acc = 0;
    for i in (0..n).rev() {
        if i + 1 < n {
            acc += b[i + 1];
        }
        acc += a[i];
        f[i] = acc;
    }
    f
}

/// Backward sweep turning every positive coefficient into a `x̄`-term and
/// pushing it onto the preceding coefficient (or the constant, at index 0).
pub fn make_submodular(poly: &PolynomialRay) -> SubmodularRay {
    let n = poly.c.len();
    let mut c = poly.c.clone();
    let mut a = vec![0; n];
    let mut b = vec![0; n];
    let mut offset = poly.k;
    for i in (0..n).rev() {
        if c[i] <= 0 {
            a[i] = -c[i];
        } else {
            b[i] = c[i];
            if i > 0 {
                c[i - 1] += c[i];
            } else {
                offset += c[i];
            }
        }
    }
    let f = chain_weights(&a, &b);
    SubmodularRay { a, b, f, offset }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_assignments(n: usize) -> impl Iterator<Item = Vec<bool>> {
        (0u32..1 << n).map(move |m| (0..n).map(|i| m >> i & 1 == 1).collect())
    }

    #[test]
    fn polynomial_examples() {
        let p = to_polynomial(&RayCostProfile::new(vec![5, 5, 5, 5]));
        assert_eq!((p.k, p.c), (5, vec![0, 0, 0]));
        let p = to_polynomial(&RayCostProfile::new(vec![4, 6, 1, 3]));
        assert_eq!((p.k, p.c), (4, vec![2, -5, 2]));
        let p = to_polynomial(&RayCostProfile::new(vec![0, 1]));
        assert_eq!((p.k, p.c), (0, vec![1]));
    }

    #[test]
    fn submodular_examples() {
        let s = make_submodular(&PolynomialRay {
            k: 0,
            c: vec![-1, -2],
        });
        assert_eq!((s.a, s.b), (vec![1, 2], vec![0, 0]));

        let s = make_submodular(&PolynomialRay {
            k: 4,
            c: vec![2, -5, 2],
        });
        assert_eq!(s.a, vec![0, 3, 0]);
        assert_eq!(s.b, vec![2, 0, 2]);
        assert_eq!(s.f, vec![5, 5, 0]);
        assert_eq!(s.offset, 6);
    }

    #[test]
    fn chain_weights_match_three_voxel_merge() {
        let (a, b) = ([3, 5, 7], [11, 13, 17]);
        let f = chain_weights(&a, &b);
        assert_eq!(f[0], a[2] + a[1] + a[0] + b[2] + b[1]);
        assert_eq!(f[1], a[2] + a[1] + b[2]);
        assert_eq!(f[2], a[2]);
    }

    #[test]
    fn degenerate_profile() {
        let p = RayCostProfile::new(vec![7]);
        assert!(p.is_empty());
        let s = make_submodular(&to_polynomial(&p));
        assert!(s.is_empty());
        assert_eq!(s.value(&[]), 7);
    }

    proptest! {
        #[test]
        fn decomposition_identity(costs in prop::collection::vec(-20i64..=20, 1..=7)) {
            let profile = RayCostProfile::new(costs);
            let poly = to_polynomial(&profile);
            let sub = make_submodular(&poly);
            prop_assert!(sub.a.iter().chain(&sub.b).chain(&sub.f).all(|&w| w >= 0));
            for i in 0..sub.len() {
                prop_assert!(sub.a[i] == 0 || sub.b[i] == 0);
                if i + 1 < sub.len() {
                    prop_assert!(sub.f[i] >= sub.f[i + 1]);
                }
            }
            for x in all_assignments(profile.len()) {
                prop_assert_eq!(poly.value(&x), profile.value(&x));
                prop_assert_eq!(sub.value(&x), profile.value(&x));
            }
        }
    }
}
