//! Small named maps used throughout the tests, benches and docs.

use crate::markov::MarkovMap;
use crate::scalar::{int, ratio, Scalar};
use crate::tree::{MetricTree, StarSpec, TreePoint};

/// Map on `[0, 1]` from `(x, f(x))` partition pairs.
pub fn unit_interval_map(parts: &[(Scalar, Scalar)]) -> MarkovMap {
    let t = MetricTree::interval(int(1));
    let partition = parts.iter().map(|(x, _)| t.point(0, x.clone()).unwrap()).collect();
    let images = parts.iter().map(|(_, y)| t.point(0, y.clone()).unwrap()).collect();
    MarkovMap::new(t, partition, images).expect("catalog maps are valid")
}

/// `0 -> 0, 1/2 -> 1, 1 -> 0`.
pub fn tent() -> MarkovMap {
    unit_interval_map(&[(int(0), int(0)), (ratio(1, 2), int(1)), (int(1), int(0))])
}

/// `0 -> 0, 1/3 -> 1, 2/3 -> 0, 1 -> 1`.
pub fn three_fold() -> MarkovMap {
    unit_interval_map(&[
        (int(0), int(0)),
        (ratio(1, 3), int(1)),
        (ratio(2, 3), int(0)),
        (int(1), int(1)),
    ])
}

pub fn identity() -> MarkovMap {
    unit_interval_map(&[(int(0), int(0)), (int(1), int(1))])
}

/// `x -> 1 - x`, which swaps the two halves.
pub fn swap_isometry() -> MarkovMap {
    unit_interval_map(&[(int(0), int(1)), (ratio(1, 2), ratio(1, 2)), (int(1), int(0))])
}

/// Two tents exchanging `[0, 1/2]` and `[1/2, 1]`; transitive with period 2.
pub fn period_two_tent_pair() -> MarkovMap {
    unit_interval_map(&[
        (int(0), ratio(1, 2)),
        (ratio(1, 4), int(1)),
        (ratio(1, 2), ratio(1, 2)),
        (ratio(3, 4), int(0)),
        (int(1), ratio(1, 2)),
    ])
}

/// Collapses `[0, 1/2]` to `0` and stretches `[1/2, 1]` over the whole interval.
/// Its only periodic points are `0` and `1`.
pub fn collapse() -> MarkovMap {
    unit_interval_map(&[(int(0), int(0)), (ratio(1, 2), int(0)), (int(1), int(1))])
}

/// `f([0,1/2]) = [1/2,1]`, `f([1/2,1]) = [0,1]`.
pub fn half_shift() -> MarkovMap {
    unit_interval_map(&[(int(0), ratio(1, 2)), (ratio(1, 2), int(1)), (int(1), int(0))])
}

/// Fixed ends; `[1/4, 1/2]` and `[5/8, 7/8]` are each flipped onto themselves,
/// and the gaps between them are stretched.
pub fn two_block() -> MarkovMap {
    unit_interval_map(&[
        (int(0), int(0)),
        (ratio(1, 4), ratio(1, 2)),
        (ratio(1, 2), ratio(1, 4)),
        (ratio(5, 8), ratio(7, 8)),
        (ratio(7, 8), ratio(5, 8)),
        (int(1), int(1)),
    ])
}

/// Star with `beams` unit beams rotated one step each, the last beam folded
/// at its midpoint back onto beam 0. The covering graph has period `beams`.
pub fn star_rotation(beams: usize) -> MarkovMap {
    assert!(beams >= 2);
    let t = MetricTree::star(&StarSpec::uniform(beams, int(1))).unwrap();
    let tip = |i: usize| TreePoint::Vertex(i + 1);
    let mut partition = vec![TreePoint::Vertex(0)];
    let mut images = vec![TreePoint::Vertex(0)];
    for i in 0..beams - 1 {
        partition.push(tip(i));
        images.push(tip(i + 1));
    }
    partition.push(t.point(beams - 1, ratio(1, 2)).unwrap());
    images.push(tip(0));
    partition.push(tip(beams - 1));
    images.push(TreePoint::Vertex(0));
    MarkovMap::new(t, partition, images).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_builds() {
        for f in [
            tent(),
            three_fold(),
            identity(),
            swap_isometry(),
            period_two_tent_pair(),
            collapse(),
            half_shift(),
            two_block(),
            star_rotation(3),
            star_rotation(6),
        ] {
            assert!(f.interval_count() >= 1);
        }
    }
}
