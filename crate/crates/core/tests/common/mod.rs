#![allow(dead_code)]

use dendro_core::catalog;
use dendro_core::scalar::ratio;
use dendro_core::{MarkovMap, MetricTree, Scalar, TreePoint};
use proptest::prelude::*;

/// Random tree: vertex `i + 1` hangs off an earlier vertex, lengths `p / 4`.
pub fn tree(max_edges: usize) -> impl Strategy<Value = MetricTree> {
    (1..=max_edges)
        .prop_flat_map(|n| {
            let parents: Vec<BoxedStrategy<usize>> = (1..=n).map(|i| (0..i).boxed()).collect();
            (parents, prop::collection::vec(1i64..=12, n))
        })
        .prop_map(|(parents, lens)| {
            let names = (0..=parents.len()).map(|i| format!("v{i}")).collect();
            let edges = parents
                .iter()
                .zip(&lens)
                .enumerate()
                .map(|(i, (&p, &l))| (format!("e{i}"), p, i + 1, ratio(l, 4)))
                .collect();
            MetricTree::new("random", names, edges).unwrap()
        })
}

/// A point on edge `e % edges` at offset `k / 16` of its length.
pub fn point_on(t: &MetricTree, e: usize, k: i64) -> TreePoint {
    let e = e % t.edges().len();
    let off = &t.edge(e).length * ratio(k.rem_euclid(17), 16);
    t.point(e, off).unwrap()
}

pub fn points(t: &MetricTree, raw: &[(usize, i64)]) -> Vec<TreePoint> {
    raw.iter().map(|&(e, k)| point_on(t, e, k)).collect()
}

pub fn raw_points(n: usize) -> impl Strategy<Value = Vec<(usize, i64)>> {
    prop::collection::vec((0usize..64, 0i64..=16), n)
}

/// Map of `[0, 1]` with partition `k / d` and images drawn from the partition.
pub fn interval_map() -> impl Strategy<Value = MarkovMap> {
    (2i64..=6)
        .prop_flat_map(|d| (Just(d), prop::collection::vec(0..=d, (d + 1) as usize)))
        .prop_map(|(d, img)| {
            let parts: Vec<(Scalar, Scalar)> = img
                .iter()
                .enumerate()
                .map(|(k, &y)| (ratio(k as i64, d), ratio(y, d)))
                .collect();
            catalog::unit_interval_map(&parts)
        })
}

/// Map of `[0, 1]` whose pieces all have slope magnitude at least 2: the
/// partition is `k / d` and consecutive images differ by at least `2 / d`.
pub fn expanding_map() -> impl Strategy<Value = MarkovMap> {
    (3i64..=4)
        .prop_flat_map(|d| (Just(d), prop::collection::vec(any::<u8>(), (d + 1) as usize)))
        .prop_map(|(d, picks)| {
            let mut ys: Vec<i64> = vec![picks[0] as i64 % (d + 1)];
            for &pick in &picks[1..] {
                let prev = *ys.last().unwrap();
                let allowed: Vec<i64> = (0..=d).filter(|y| (y - prev).abs() >= 2).collect();
                ys.push(allowed[pick as usize % allowed.len()]);
            }
            let parts: Vec<(Scalar, Scalar)> = ys
                .iter()
                .enumerate()
                .map(|(k, &y)| (ratio(k as i64, d), ratio(y, d)))
                .collect();
            catalog::unit_interval_map(&parts)
        })
}

/// Offset of a point of the unit interval.
pub fn coord(f: &MarkovMap, p: &TreePoint) -> Scalar {
    f.tree().offset_on_edge(p, 0).unwrap()
}
