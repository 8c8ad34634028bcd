use std::collections::BTreeSet;

use deepforget::data::{apply_scenario, generate, GenConfig, Scenario, Split};
use proptest::prelude::*;

fn gen_config() -> impl Strategy<Value = GenConfig> {
    (2usize..7, 2usize..6, 10usize..60, any::<u64>()).prop_map(|(c, d, n, seed)| GenConfig {
        num_classes: c,
        input_dim: d,
        samples_per_class: n,
        seed,
        ..GenConfig::default()
    })
}

fn scenario(classes: usize) -> impl Strategy<Value = Scenario> {
    prop_oneof![
        Just(Scenario::None),
        prop::collection::btree_set(0..classes, 0..classes).prop_map(|s| Scenario::Class {
            classes: s.into_iter().collect()
        }),
        (0.0f64..=1.0).prop_map(|fraction| Scenario::Random { fraction }),
    ]
}

fn cfg_and_scenario() -> impl Strategy<Value = (GenConfig, Scenario)> {
    gen_config().prop_flat_map(|c| {
        let k = c.num_classes;
        (Just(c), scenario(k))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splits_are_disjoint_and_cover((cfg, sc) in cfg_and_scenario()) {
        let b = apply_scenario(&generate(&cfg).unwrap(), &sc).unwrap();
        let set = |s: Split| b.rows(s).into_iter().collect::<BTreeSet<_>>();
        let (r, f, v, t) = (set(Split::Retain), set(Split::Forget), set(Split::Val), set(Split::Test));
        let parts = [&r, &f, &v, &t];
        for i in 0..4 {
            for j in i + 1..4 {
                prop_assert!(parts[i].is_disjoint(parts[j]));
            }
        }
        let union: BTreeSet<usize> = parts.iter().flat_map(|s| s.iter().copied()).collect();
        prop_assert_eq!(union, (0..b.len()).collect::<BTreeSet<_>>());
        prop_assert_eq!(set(Split::Train), r.union(&f).copied().collect::<BTreeSet<_>>());
        let tf = set(Split::TestForget);
        let tr = set(Split::TestRetain);
        prop_assert!(tf.is_disjoint(&tr));
        prop_assert_eq!(tf.union(&tr).copied().collect::<BTreeSet<_>>(), t);
    }

    #[test]
    fn same_inputs_give_identical_bytes((cfg, sc) in cfg_and_scenario()) {
        let a = apply_scenario(&generate(&cfg).unwrap(), &sc).unwrap();
        let b = apply_scenario(&generate(&cfg).unwrap(), &sc).unwrap();
        prop_assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn class_scenario_labels_are_pure((cfg, classes) in gen_config().prop_flat_map(|c| {
        let k = c.num_classes;
        (Just(c), prop::collection::btree_set(0..k, 1..k))
    })) {
        let sc = Scenario::Class { classes: classes.iter().copied().collect() };
        let b = apply_scenario(&generate(&cfg).unwrap(), &sc).unwrap();
        let labels = |s: Split| b.rows(s).into_iter().map(|i| b.labels[i]).collect::<BTreeSet<_>>();
        let lf = labels(Split::Forget);
        prop_assert!(lf.is_disjoint(&labels(Split::Retain)));
        prop_assert_eq!(lf, classes);
    }
}
