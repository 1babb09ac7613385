use std::collections::BTreeMap;

use proptest::prelude::*;

use cqael_core::eval::{accuracy, make_folds, N_FOLDS};
use cqael_core::index::{AliasIndex, AnchorCounts};

proptest! {
    #[test]
    fn folds_partition_texts(n in 5usize..3000, seed in any::<u64>()) {
        let folds = make_folds(n, seed).unwrap();
        prop_assert_eq!(folds.len(), N_FOLDS);
        let everything: Vec<usize> = (0..n).collect();
        let mut tests: Vec<usize> = folds.iter().flat_map(|f| f.test.iter().copied()).collect();
        tests.sort_unstable();
        prop_assert_eq!(&tests, &everything);
        for f in &folds {
            let mut all: Vec<usize> = f.train.iter().chain(&f.validation).chain(&f.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(&all, &everything);
            let n = n as f64;
            prop_assert!((f.train.len() as f64 - 0.7 * n).abs() <= 1.0);
            prop_assert!((f.validation.len() as f64 - 0.1 * n).abs() <= 1.0);
            prop_assert!((f.test.len() as f64 - 0.2 * n).abs() <= 1.0);
        }
        prop_assert_eq!(make_folds(n, seed).unwrap(), folds);
    }

    #[test]
    fn priors_are_distributions(
        links in prop::collection::vec(("[a-c]{1,3}", "[A-E]", 1u64..50), 1..60),
    ) {
        let mut counts = AnchorCounts::new();
        for (surface, entity, n) in &links {
            counts.add(surface, entity, *n);
        }
        let (index, _) = AliasIndex::from_counts(counts, &BTreeMap::new());
        for (_, entries) in index.surfaces() {
            let sum: f64 = entries.iter().map(|e| e.prior).sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(entries.windows(2).all(|w| w[0].prior >= w[1].prior));
        }
        let back = AliasIndex::from_bytes(&index.to_bytes()).unwrap();
        prop_assert_eq!(back, index);
    }
}

#[test]
fn too_few_texts_for_five_folds() {
    assert!(make_folds(4, 0).is_err());
}

#[test]
fn accuracy_counts_missing_predictions_as_wrong() {
    let preds = [Some("a"), None, Some("c"), Some("x")];
    let golds = ["a", "b", "c", "d"];
    assert_eq!(accuracy(&preds, &golds).unwrap(), 0.5);
    assert!(accuracy(&preds[..2], &golds).is_err());
}

#[test]
fn corrupted_index_is_rejected() {
    let mut counts = AnchorCounts::new();
    counts.add("Roosevelt", "Franklin D. Roosevelt", 3);
    counts.add("Roosevelt", "Theodore Roosevelt", 1);
    let (index, _) = AliasIndex::from_counts(counts, &BTreeMap::new());
    let mut bytes = index.to_bytes();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xff;
    assert!(AliasIndex::from_bytes(&bytes).is_err());
    assert!(AliasIndex::from_bytes(&bytes[..10]).is_err());
}
