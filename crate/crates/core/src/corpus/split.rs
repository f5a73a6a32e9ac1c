use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::derived;

/// Disjoint patient-level partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Shuffle ids with `seed` and cut them by `(train, val, test)` ratios.
///
/// Validation and test sizes are rounded down; the remainder goes to train.
/// Each returned set keeps the ids' original relative order.
pub fn split_patients(ids: &[String], ratios: (f64, f64, f64), seed: u64) -> Result<PatientSplit> {
    if ids.is_empty() {
        return Err(Error::EmptyInput("patient ids"));
    }
    let (tr, va, te) = ratios;
    if [tr, va, te].iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::invalid("split ratios must be positive"));
    }
    if ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split ratios must sum to 1, got {}", tr + va + te)));
    }
    let n = ids.len();
    let cut = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
    let n_val = cut(va);
    let n_test = cut(te);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut derived(seed, "patient-split", 0));
    let mut label = vec![0u8; n];
    for &i in &order[..n_val] {
        label[i] = 1;
    }
    for &i in &order[n_val..n_val + n_test] {
        label[i] = 2;
    }
    let pick = |which: u8| -> Vec<String> {
        ids.iter().zip(&label).filter(|(_, &l)| l == which).map(|(id, _)| id.clone()).collect()
    };
    Ok(PatientSplit { train: pick(0), val: pick(1), test: pick(2) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    #[test]
    fn exact_ratio_sizes() {
        let s = split_patients(&ids(10), (0.8, 0.1, 0.1), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn rounding_goes_to_train() {
        let s = split_patients(&ids(7), (0.8, 0.1, 0.1), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (7, 0, 0));
        let s = split_patients(&ids(19), (0.8, 0.1, 0.1), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (17, 1, 1));
    }

    #[test]
    fn partition_property() {
        let all = ids(101);
        let s = split_patients(&all, (0.7, 0.2, 0.1), 9).unwrap();
        let mut union = BTreeSet::new();
        for id in s.train.iter().chain(&s.val).chain(&s.test) {
            assert!(union.insert(id.clone()), "duplicate {id}");
        }
        assert_eq!(union, all.into_iter().collect());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = split_patients(&ids(50), (0.8, 0.1, 0.1), 3).unwrap();
        let b = split_patients(&ids(50), (0.8, 0.1, 0.1), 3).unwrap();
        assert_eq!(a, b);
        let c = split_patients(&ids(50), (0.8, 0.1, 0.1), 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn errors() {
        assert!(split_patients(&[], (0.8, 0.1, 0.1), 0).is_err());
        assert!(split_patients(&ids(3), (0.8, 0.1, 0.2), 0).is_err());
        assert!(split_patients(&ids(3), (1.0, 0.0, 0.0), 0).is_err());
    }
}
