use proptest::prelude::*;

use cqael_core::ranker::{
    fuse, fusion_loss_and_grad, loss, normalize, predict, Feature, FeatureMask, FeatureVector, FrozenMention,
    FusionLayer, N_FEATURES,
};

fn scores() -> impl Strategy<Value = Vec<f64>> {
    // small integers keep shifts exact and make ties common
    prop::collection::vec((-8i32..8).prop_map(f64::from), 1..10)
}

fn features() -> impl Strategy<Value = [f64; N_FEATURES]> {
    prop::array::uniform5(-3.0f64..3.0)
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(v in prop::collection::vec(-700.0f64..700.0, 1..20)) {
        let p = normalize(&v).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn argmax_ignores_constant_shift(v in scores(), c in -100i32..100) {
        let shifted: Vec<f64> = v.iter().map(|s| s + f64::from(c)).collect();
        prop_assert_eq!(predict(&v), predict(&shifted));
    }

    #[test]
    fn softmax_ignores_constant_shift(v in prop::collection::vec(-5.0f64..5.0, 1..10), c in -50.0f64..50.0) {
        let shifted: Vec<f64> = v.iter().map(|s| s + c).collect();
        for (a, b) in normalize(&v).unwrap().iter().zip(normalize(&shifted).unwrap()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn argmax_follows_permutation_up_to_ties(v in scores(), perm in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm));
        let permuted: Vec<f64> = order.iter().map(|&i| v[i]).collect();
        let p = predict(&v).unwrap();
        let q = order[predict(&permuted).unwrap()];
        prop_assert_eq!(v[p], v[q]);
        // the tie rule picks the lowest index among the maxima
        prop_assert!(v[..p].iter().all(|&s| s < v[p]));
    }

    #[test]
    fn base_mask_ignores_aux_features(x in features(), aux in prop::array::uniform3(-9.0f64..9.0), w in features()) {
        let layer = FusionLayer { weights: w, bias: 0.3 };
        let mut y = x;
        y[2..].copy_from_slice(&aux);
        let a = FeatureVector { values: x, mask: FeatureMask::base() };
        let b = FeatureVector { values: y, mask: FeatureMask::base() };
        prop_assert_eq!(fuse(&a, &layer), fuse(&b, &layer));
        let expected = w[0] * x[0] + w[1] * x[1] + 0.3;
        prop_assert!((fuse(&a, &layer) - expected).abs() < 1e-12);
    }

    #[test]
    fn fusion_gradient_matches_finite_differences(
        rows in prop::collection::vec(prop::collection::vec(features(), 2..5), 1..4),
        w in features(),
    ) {
        let data: Vec<FrozenMention> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| FrozenMention {
                gold: Some(i % r.len()),
                features: r.iter().map(|&values| FeatureVector { values, mask: FeatureMask::full() }).collect(),
            })
            .collect();
        let layer = FusionLayer { weights: w, bias: -0.2 };
        let (_, grad) = fusion_loss_and_grad(&layer, &data);
        // a shared offset cancels in the softmax
        prop_assert!(grad.bias.abs() < 1e-12);
        let h = 1e-5;
        for i in 0..N_FEATURES {
            let nudged = |d: f64| {
                let mut l = layer.clone();
                l.weights[i] += d;
                fusion_loss_and_grad(&l, &data).0
            };
            let numeric = (nudged(h) - nudged(-h)) / (2.0 * h);
            let analytic = grad.weights[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            prop_assert!(rel < 1e-4, "weight {i}: {analytic} vs {numeric}");
        }
    }
}

#[test]
fn loss_examples() {
    let certain = [1.0, 0.0];
    let uniform = [0.5, 0.5];
    assert_eq!(loss(&[(&certain[..], Some(0))]).unwrap(), (0.0, 0));
    let (l, excluded) = loss(&[(&uniform[..], Some(1)), (&uniform[..], None)]).unwrap();
    assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    assert_eq!(excluded, 1);
    assert!(loss(&[(&uniform[..], None)]).is_err());
}

#[test]
fn mask_names_round_trip() {
    for m in FeatureMask::ablation_set() {
        assert_eq!(m.to_string().parse::<FeatureMask>().unwrap(), m);
    }
    assert_eq!("ctxt,prior,topic".parse::<FeatureMask>().unwrap(), FeatureMask::base().with(Feature::AuxTopic));
    assert!("ctxt,colour".parse::<FeatureMask>().is_err());
}
