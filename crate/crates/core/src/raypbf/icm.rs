use super::{Energy, PartialLabeling};

/// Energy over full binary labelings.
pub trait PseudoBooleanEnergy {
    fn energy(&self, x: &[bool]) -> Energy;

    /// `energy(x with var flipped) - energy(x)`.
    fn flip_delta(&self, x: &[bool], var: usize) -> Energy {
        let mut y = x.to_vec();
        y[var] = !y[var];
        self.energy(&y) - self.energy(x)
    }
}

impl<F> PseudoBooleanEnergy for F
where
    F: Fn(&[bool]) -> Energy,
{
    fn energy(&self, x: &[bool]) -> Energy {
        self(x)
    }
}

/// Completes unlabeled variables starting from all-zero.
pub fn icm_complete<E: PseudoBooleanEnergy + ?Sized>(
    partial: &PartialLabeling,
    energy: &E,
) -> Vec<bool> {
    icm_complete_from(partial, &vec![false; partial.len()], energy)
}

/// Iterated conditional modes over the unlabeled variables only, visited in
/// ascending id order until a full sweep changes nothing. Labeled variables
/// keep their values; `initial` seeds the unlabeled ones.
pub fn icm_complete_from<E: PseudoBooleanEnergy + ?Sized>(
    partial: &PartialLabeling,
    initial: &[bool],
    energy: &E,
) -> Vec<bool> {
    let mut x: Vec<bool> = (0..partial.len())
        .map(|v| partial.get(v).unwrap_or(initial[v]))
        .collect();
    let free: Vec<usize> = (0..partial.len())
        .filter(|&v| partial.get(v).is_none())
        .collect();
    if free.is_empty() {
        return x;
    }
    loop {
        let mut changed = false;
        for &v in &free {
            if energy.flip_delta(&x, v) < 0 {
                x[v] = !x[v];
                changed = true;
            }
        }
        if !changed {
            return x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raypbf::{PartialValue, RayCostProfile};

    #[test]
    fn fully_labeled_is_identity() {
        let p = PartialLabeling::from_bools(&[true, false, true]);
        let x = icm_complete(&p, &|_: &[bool]| 0);
        assert_eq!(x, vec![true, false, true]);
    }

    #[test]
    fn single_unlabeled_takes_cheaper_value() {
        let p = PartialLabeling {
            values: vec![PartialValue::One, PartialValue::Unlabeled],
        };
        let e = |x: &[bool]| if x[1] { 1 } else { 5 };
        assert_eq!(icm_complete(&p, &e), vec![true, true]);
        let e = |x: &[bool]| if x[1] { 5 } else { 1 };
        assert_eq!(icm_complete(&p, &e), vec![true, false]);
    }

    #[test]
    fn labeled_values_never_change() {
        let p = PartialLabeling {
            values: vec![PartialValue::Zero, PartialValue::Unlabeled],
        };
        // Energy wants x0 = 1, but x0 is labeled.
        let e = |x: &[bool]| i64::from(!x[0]) * 10 + i64::from(x[1]);
        assert_eq!(icm_complete(&p, &e), vec![false, false]);
    }

    #[test]
    fn never_worse_than_all_zero_completion() {
        let profile = RayCostProfile::new(vec![3, 9, -4, 6]);
        let p = PartialLabeling {
            values: vec![PartialValue::Unlabeled; 3],
        };
        let e = |x: &[bool]| profile.value(x);
        let x = icm_complete(&p, &e);
        assert!(e(&x) <= e(&[false, false, false]));
    }
}
