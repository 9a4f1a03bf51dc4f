mod common;

use dendro_core::{Subtree, TreePoint};
use num_traits::Zero;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_a_metric(t in common::tree(10), raw in common::raw_points(3)) {
        let p = common::points(&t, &raw);
        let d = |a: &TreePoint, b: &TreePoint| t.distance(a, b);
        prop_assert_eq!(d(&p[0], &p[1]), d(&p[1], &p[0]));
        prop_assert!(d(&p[0], &p[2]) <= d(&p[0], &p[1]) + d(&p[1], &p[2]));
        prop_assert_eq!(d(&p[0], &p[0]).is_zero(), true);
        prop_assert_eq!(d(&p[0], &p[1]).is_zero(), p[0] == p[1]);
        prop_assert_eq!(t.path(&p[0], &p[1]).unwrap().length(), d(&p[0], &p[1]));
    }

    #[test]
    fn first_point_map_retracts(t in common::tree(10), raw in common::raw_points(4)) {
        let p = common::points(&t, &raw);
        let sub = Subtree::from_arc(&t.path(&p[0], &p[1]).unwrap());
        let rx = t.first_point_map(&sub, &p[2]).unwrap();
        let ry = t.first_point_map(&sub, &p[3]).unwrap();
        prop_assert!(sub.contains(&t, &rx));
        prop_assert_eq!(t.first_point_map(&sub, &rx).unwrap(), rx.clone());
        prop_assert!(t.distance(&rx, &ry) <= t.distance(&p[2], &p[3]));
    }

    #[test]
    fn hausdorff_is_a_metric(t in common::tree(8), raw in common::raw_points(6)) {
        let p = common::points(&t, &raw);
        let arcs: Vec<Subtree> = (0..3)
            .map(|k| Subtree::from_arc(&t.path(&p[2 * k], &p[2 * k + 1]).unwrap()))
            .collect();
        let h = |a: &Subtree, b: &Subtree| t.hausdorff_distance(a, b).unwrap();
        prop_assert_eq!(h(&arcs[0], &arcs[1]), h(&arcs[1], &arcs[0]));
        prop_assert!(h(&arcs[0], &arcs[2]) <= h(&arcs[0], &arcs[1]) + h(&arcs[1], &arcs[2]));
        prop_assert!(h(&arcs[0], &arcs[0]).is_zero());
        prop_assert_eq!(h(&arcs[0], &arcs[1]).is_zero(), arcs[0].same_set(&t, &arcs[1]));
    }

    #[test]
    fn disjoint_families_respect_the_bound(
        t in common::tree(12),
        raw in common::raw_points(20),
        eps in 1i64..=8,
        keep in prop::collection::vec(any::<bool>(), 64),
    ) {
        let eps = dendro_core::scalar::ratio(eps, 4);
        let mut cuts = common::points(&t, &raw);
        cuts.sort();
        cuts.dedup();
        let comps = t.components_minus(&cuts).unwrap();
        let big = comps
            .iter()
            .zip(keep.iter().cycle())
            .filter(|(_, &k)| k)
            .filter(|(c, _)| {
                let ends: Vec<TreePoint> = c
                    .segments
                    .iter()
                    .flat_map(|s| [t.point(s.edge, s.from.clone()).unwrap(), t.point(s.edge, s.to.clone()).unwrap()])
                    .collect();
                ends.iter().any(|a| ends.iter().any(|b| t.distance(a, b) >= eps))
            })
            .count();
        prop_assert!(big <= t.disjoint_family_bound(&eps).unwrap());
    }
}
