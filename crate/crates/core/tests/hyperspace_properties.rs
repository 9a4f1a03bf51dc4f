mod common;

use dendro_core::catalog;
use dendro_core::hyperspace::{almost_meshed_reduction, induced_image, HyperElement};
use dendro_core::scalar::ratio;
use dendro_core::{Subtree, TreePoint};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn images_of_subtrees_stay_connected(f in common::interval_map(), a in 0i64..=12, b in 0i64..=12) {
        let t = f.tree();
        let arc = t.path(&t.point(0, ratio(a, 12)).unwrap(), &t.point(0, ratio(b, 12)).unwrap()).unwrap();
        let el = HyperElement::continuum(&f, Subtree::from_arc(&arc)).unwrap();
        match induced_image(&f, &el).unwrap() {
            HyperElement::Continuum(s) => prop_assert!(s.is_connected(t)),
            HyperElement::Finite(_) => prop_assert!(false, "a subtree maps to a subtree"),
        }
    }

    #[test]
    fn images_of_finite_sets_are_pointwise(f in common::interval_map(), ks in prop::collection::vec(0i64..=12, 1..5)) {
        let pts: Vec<TreePoint> = ks.iter().map(|&k| f.tree().point(0, ratio(k, 12)).unwrap()).collect();
        let el = HyperElement::finite(&f, pts.clone()).unwrap();
        let want = HyperElement::finite(&f, pts.iter().map(|p| f.eval(p).unwrap())).unwrap();
        prop_assert_eq!(induced_image(&f, &el).unwrap(), want);
    }

    #[test]
    fn extracted_points_lie_inside_their_arcs(q in 1i64..=6, which in any::<bool>()) {
        let f = if which { catalog::tent() } else { catalog::three_fold() };
        let report = almost_meshed_reduction(&f, &ratio(1, q), 10).unwrap();
        for a in &report.arcs {
            let x = a.outcome.as_ref().unwrap();
            let s = a.arc.locate(f.tree(), &x.orbit.base).unwrap();
            prop_assert!(s > ratio(0, 1) && s < a.arc.length());
            prop_assert_eq!(f.iterate(&x.orbit.base, x.orbit.period).unwrap(), x.orbit.base.clone());
        }
    }
}
