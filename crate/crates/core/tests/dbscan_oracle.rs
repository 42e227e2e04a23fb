mod oracles;

use pathbank_core::cluster::{canonicalize, dbscan};
use pathbank_core::DbscanParams;
use proptest::prelude::*;

use oracles::{brute_dbscan, label_partition, partition, random_dbscan_instance, rng, to_vectors};

#[test]
fn matches_brute_force_on_random_instances() {
    let mut r = rng(0xdb5c);
    let (mut multi, mut noisy) = (0, 0);
    for case in 0..200 {
        let inst = random_dbscan_instance(&mut r);
        let params = DbscanParams::new(inst.eps, inst.min_samples).unwrap();
        let got = dbscan(&to_vectors(&inst.points), &params).unwrap();
        let want = brute_dbscan(&inst.points, inst.eps, inst.min_samples);
        assert_eq!(label_partition(&got), partition(want.clone()), "case {case}");
        let ids: std::collections::BTreeSet<_> = want.iter().flatten().collect();
        multi += usize::from(ids.len() > 1);
        noisy += usize::from(want.iter().any(Option::is_none));
    }
    assert!(multi > 40 && noisy > 40, "instances too uniform: {multi} multi-cluster, {noisy} with noise");
}

#[test]
fn labels_ranked_by_first_core_point() {
    let mut r = rng(7);
    for _ in 0..50 {
        let inst = random_dbscan_instance(&mut r);
        let params = DbscanParams::new(inst.eps, inst.min_samples).unwrap();
        let got: Vec<Option<usize>> =
            dbscan(&to_vectors(&inst.points), &params).unwrap().into_iter().map(|l| l.cluster()).collect();
        assert_eq!(got, brute_dbscan(&inst.points, inst.eps, inst.min_samples));
    }
}

#[test]
fn min_samples_one_has_no_noise() {
    let mut r = rng(11);
    for _ in 0..20 {
        let inst = random_dbscan_instance(&mut r);
        let params = DbscanParams::new(inst.eps, 1).unwrap();
        let got = dbscan(&to_vectors(&inst.points), &params).unwrap();
        assert!(got.iter().all(|l| l.cluster().is_some()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_clusters_cover_every_intent(seed in any::<u64>()) {
        let inst = random_dbscan_instance(&mut rng(seed));
        let params = DbscanParams::new(inst.eps, inst.min_samples).unwrap();
        let intents: Vec<(String, pathbank_core::Vector)> = to_vectors(&inst.points)
            .into_iter()
            .enumerate()
            .map(|(i, v)| (format!("intent {i}"), v))
            .collect();
        let clusters = canonicalize("C", &intents, &params).unwrap();
        let mut seen = 0;
        for c in &clusters {
            prop_assert!(c.contains(&c.canonical_label));
            prop_assert!((c.centroid.norm() - 1.0).abs() < 1e-9);
            seen += c.member_intents.len();
        }
        prop_assert_eq!(seen, intents.len());
    }
}
