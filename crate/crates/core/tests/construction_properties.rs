mod common;

use dendro_core::catalog;
use dendro_core::decomposition::{terminal_decomposition, verify_decomposition};
use dendro_core::graph::{classify, CoveringGraph};
use dendro_core::periodic::enumerate_periodic;
use dendro_core::perturbation::{dendrite_stage, star_mixing, totalize, StageState};
use dendro_core::scalar::{int, ratio};
use dendro_core::{MarkovMap, TreePoint};
use proptest::prelude::*;

fn check_decomposition(f: &MarkovMap) -> Result<(), TestCaseError> {
    let c = classify(f);
    let d = terminal_decomposition(f).unwrap();
    prop_assert_eq!(Some(d.len()), c.period);
    let report = verify_decomposition(f, &d);
    prop_assert!(report.all_pass(), "{}", report);
    if d.len() > 1 {
        for o in enumerate_periodic(f, 1).unwrap().orbits {
            for i in 0..d.len() {
                prop_assert!(d.piece_set(f, i).contains(f.tree(), &o.base));
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decompositions_of_random_transitive_maps(f in common::interval_map()) {
        prop_assume!(classify(&f).is_transitive());
        check_decomposition(&f)?;
    }
}

#[test]
fn decompositions_of_rotations() {
    for k in 2..=5 {
        check_decomposition(&catalog::star_rotation(k)).unwrap();
    }
    check_decomposition(&catalog::period_two_tent_pair()).unwrap();
}

#[test]
fn totalized_rotations() {
    for k in 2..=4 {
        let f = catalog::star_rotation(k);
        for eps in [ratio(1, 2), ratio(1, 5)] {
            let out = totalize(&f, &eps).unwrap();
            let g = CoveringGraph::build(&out.map);
            assert!(g.is_strongly_connected());
            assert_eq!(g.period().unwrap(), 1);
            assert!(f.sup_distance(&out.map).unwrap() < eps);
            for p in f.partition() {
                assert_eq!(out.map.eval(p).unwrap(), f.eval(p).unwrap());
            }
        }
    }
}

#[test]
fn star_mixing_fixes_the_frame() {
    for n in [2, 4] {
        let eps = ratio(1, 3);
        let out = star_mixing(n, &eps).unwrap();
        let f = &out.map;
        for v in 0..=n {
            assert_eq!(f.eval(&TreePoint::Vertex(v)).unwrap(), TreePoint::Vertex(v));
        }
        let id = MarkovMap::identity(f.tree().clone()).unwrap();
        assert!(f.sup_distance(&id).unwrap() < eps);
        assert!(CoveringGraph::build(f).primitivity_horizon().is_some());
    }
}

#[test]
fn stage_grows_the_tree_and_keeps_orbits() {
    let s1 = StageState::initial(catalog::tent(), &int(1)).unwrap();
    let r = s1.tree().point(0, ratio(3, 10)).unwrap();
    let s2 = dendrite_stage(&s1, Some(&r), 4).unwrap();
    let (t1, t2) = (s1.tree(), s2.tree());
    // the old tree sits inside the new one as the arc between its endpoints
    let a = TreePoint::Vertex(t2.vertex_by_name("a").unwrap());
    let b = TreePoint::Vertex(t2.vertex_by_name("b").unwrap());
    assert_eq!(t2.path(&a, &b).unwrap().length(), t1.total_length());
    assert!(t2.total_length() > t1.total_length());
    for orbit in &s2.pinned {
        for (k, p) in orbit.iter().enumerate() {
            assert_eq!(s2.map.eval(p).unwrap(), orbit[(k + 1) % orbit.len()]);
            assert!(t2.degree(match p {
                TreePoint::Vertex(v) => *v,
                _ => panic!("pinned points are vertices"),
            }) >= 3);
        }
    }
}
