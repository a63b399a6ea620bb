mod common;

use proptest::prelude::*;
use srcsel::dataset::{label_set, DatasetManifest, ImageRecord, LabelId, LabelSet};
use srcsel::emd::{emd, solve_transport, Matrix};
use srcsel::longtail::gini_of;
use srcsel::signature::Signature;
use srcsel::subset::{filter_subset, SubsetPolicy};

use common::{brute_force_transport, euclid, pairwise_gini};

fn color() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(0.0f64..=255.0)
}

fn signature() -> impl Strategy<Value = Signature> {
    prop::collection::vec((color(), 0.01f64..1.0), 1..=5).prop_map(|pairs| {
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Signature {
            centroids: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        }
    })
}

const LABELS: [&str; 5] = ["y_1", "y_2", "y_3", "y_4", "y_5"];

fn manifest() -> impl Strategy<Value = DatasetManifest> {
    prop::collection::vec(prop::collection::vec(0..LABELS.len(), 0..4), 1..30).prop_map(|images| {
        let records = images
            .into_iter()
            .enumerate()
            .map(|(i, ls)| {
                ImageRecord::new(format!("img{i}"), format!("{i}.png"), 4, 4, ls.into_iter().map(|l| LabelId::from(LABELS[l])).collect())
            })
            .collect();
        DatasetManifest::new("src", records).unwrap()
    })
}

fn label_subset() -> impl Strategy<Value = LabelSet> {
    prop::collection::btree_set(0..LABELS.len(), 1..=LABELS.len())
        .prop_map(|idx| idx.into_iter().map(|i| LabelId::from(LABELS[i])).collect())
}

fn policy() -> impl Strategy<Value = SubsetPolicy> {
    prop_oneof![Just(SubsetPolicy::Strict), Just(SubsetPolicy::Relaxed)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gini_matches_pairwise_difference(counts in prop::collection::vec(1u64..10_000, 1..30)) {
        let got = gini_of(&counts).unwrap().delta;
        prop_assert!((got - pairwise_gini(&counts)).abs() < 1e-9);
        prop_assert!((0.0..1.0).contains(&got));
    }

    #[test]
    fn gini_scale_invariant(counts in prop::collection::vec(1u64..1000, 1..20), c in 2u64..100) {
        let scaled: Vec<u64> = counts.iter().map(|x| x * c).collect();
        prop_assert!((gini_of(&counts).unwrap().delta - gini_of(&scaled).unwrap().delta).abs() < 1e-12);
    }

    #[test]
    fn gini_ignores_order(mut counts in prop::collection::vec(1u64..1000, 1..20)) {
        let before = gini_of(&counts).unwrap().delta;
        counts.reverse();
        prop_assert_eq!(before, gini_of(&counts).unwrap().delta);
    }

    #[test]
    fn emd_is_a_metric(a in signature(), b in signature(), c in signature()) {
        prop_assert!(emd(&a, &a).unwrap().distance.abs() < 1e-9);
        let ab = emd(&a, &b).unwrap().distance;
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - emd(&b, &a).unwrap().distance).abs() < 1e-9);
        prop_assert!(emd(&a, &c).unwrap().distance <= ab + emd(&b, &c).unwrap().distance + 1e-6);
    }

    #[test]
    fn emd_bounded_by_centroid_extremes(a in signature(), b in signature()) {
        let d = emd(&a, &b).unwrap().distance;
        let pairs = a.centroids.iter().flat_map(|x| b.centroids.iter().map(move |y| euclid(x, y)));
        let (lo, hi) = pairs.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
        prop_assert!(d >= lo - 1e-9 && d <= hi + 1e-9);
    }

    #[test]
    fn transport_matches_oracle(
        s in prop::collection::vec(1u32..=10, 1..=3),
        d in prop::collection::vec(1u32..=10, 1..=3),
        seed in any::<u64>(),
    ) {
        // integer costs make ties and degenerate bases common
        let cost: Vec<Vec<f64>> = (0..s.len())
            .map(|i| (0..d.len()).map(|j| ((seed >> ((i * 3 + j) * 2)) & 3) as f64).collect())
            .collect();
        let s: Vec<f64> = s.iter().map(|&u| u as f64 / 10.0).collect();
        let d: Vec<f64> = d.iter().map(|&u| u as f64 / 10.0).collect();
        let g = Matrix::from_rows(&cost);
        let got = g.dot(&solve_transport(&g, &s, &d).unwrap());
        let want = brute_force_transport(&cost, &s, &d);
        prop_assert!((got - want).abs() <= 1e-9 * want.max(1.0), "{} vs {}", got, want);
    }

    #[test]
    fn subset_is_idempotent_and_contained(m in manifest(), t in label_subset(), p in policy()) {
        let once = filter_subset(&m, &t, p).unwrap();
        prop_assert!(label_set(&once.manifest).is_subset(&t));
        let twice = filter_subset(&once.manifest, &t, p).unwrap();
        prop_assert_eq!(&once.manifest, &twice.manifest);
        prop_assert_eq!(once.removed_images + once.manifest.records.len(), m.records.len());
    }

    #[test]
    fn relaxed_keeps_at_least_strict(m in manifest(), t in label_subset()) {
        let strict = filter_subset(&m, &t, SubsetPolicy::Strict).unwrap();
        let relaxed = filter_subset(&m, &t, SubsetPolicy::Relaxed).unwrap();
        prop_assert!(strict.manifest.records.len() <= relaxed.manifest.records.len());
        for r in &strict.manifest.records {
            prop_assert!(relaxed.manifest.records.contains(r));
        }
    }

    #[test]
    fn subset_monotone_in_target(m in manifest(), t in label_subset(), extra in 0..LABELS.len(), p in policy()) {
        let mut wider = t.clone();
        wider.insert(LabelId::from(LABELS[extra]));
        let small = filter_subset(&m, &t, p).unwrap();
        let large = filter_subset(&m, &wider, p).unwrap();
        let ids = |f: &srcsel::FilteredManifest| f.manifest.records.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
        let large_ids = ids(&large);
        prop_assert!(ids(&small).iter().all(|id| large_ids.contains(id)));
    }
}
