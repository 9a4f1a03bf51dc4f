//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_RED` are expected to fail (see the README); the
//! target exits nonzero only when some other criterion fails or a known-red
//! one starts passing.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use dendro_core::catalog;
use dendro_core::decomposition::{terminal_decomposition, verify_decomposition};
use dendro_core::graph::{classify, CoveringGraph};
use dendro_core::hyperspace::{almost_meshed_reduction, extract_periodic_from_free_arc, finite_periodic_sets};
use dendro_core::markov::Region;
use dendro_core::periodic::{density_certificate, enumerate_periodic};
use dendro_core::perturbation::{dendrite_stage, star_mixing, totalize, StageState};
use dendro_core::scalar::{int, ratio};
use dendro_core::sigma::{collapse_failures, for_each_in_box, periodic_endpoint_check};
use dendro_core::{DensityCertificate, MarkovMap, MetricTree, PointOrder, Scalar, Subtree, SymbolWord, TreePoint};
use num_traits::Zero;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const KNOWN_RED: &[usize] = &[9];

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn timed(limit: Duration, start: Instant) -> Result<String, String> {
    let took = start.elapsed();
    check(took < limit, format!("took {took:.2?}, limit {limit:?}"))?;
    Ok(format!("{took:.2?}"))
}

fn c1() -> Outcome {
    let start = Instant::now();
    let (count, bad) = collapse_failures(4, 5);
    if let Some(first) = bad.first() {
        return Err(format!("{} words fail, first {first}", bad.len()));
    }
    let t = timed(Duration::from_secs(10), start)?;
    Ok(format!("{count} words, {t}"))
}

fn c2() -> Outcome {
    let start = Instant::now();
    let mut words = Vec::new();
    for_each_in_box(2, 4, |w| words.push(SymbolWord(w.to_vec())));
    let mut n_checked = 0;
    for w in &words {
        for n in 1..=3 {
            let ok = periodic_endpoint_check(w, n).map_err(|e| e.to_string())?;
            check(ok, format!("{w} with n = {n}"))?;
            n_checked += 1;
        }
    }
    let t = timed(Duration::from_secs(5), start)?;
    Ok(format!("{n_checked} checks, {t}"))
}

/// Cells `(interval, lo, hi)` cutting every basic interval into `k` pieces.
fn grid_cells(f: &MarkovMap, k: i64) -> Vec<(usize, Scalar, Scalar)> {
    let mut out = Vec::new();
    for (i, iv) in f.intervals().iter().enumerate() {
        let len = iv.length();
        for c in 0..k {
            out.push((i, &len * ratio(c, k), &len * ratio(c + 1, k)));
        }
    }
    out
}

/// Transitivity by pushing small arcs forward: every grid cell's images must
/// meet every grid cell in a set of positive length within the step bound.
fn transitive_by_images(f: &MarkovMap) -> bool {
    let cells = grid_cells(f, 4);
    let steps = 10 * f.partition().len().pow(2);
    let pl = f.as_pl();
    for (i, a, b) in &cells {
        let mut hit = vec![false; cells.len()];
        let mut r = Region::interval_piece(*i, a.clone(), b.clone());
        for _ in 0..steps {
            r = r.image(pl);
            for (c, (j, lo, hi)) in cells.iter().enumerate() {
                hit[c] = hit[c] || r.pieces.iter().any(|(k, s, t)| k == j && s.max(lo) < t.min(hi));
            }
            if hit.iter().all(|&h| h) || r.pieces.is_empty() {
                break;
            }
        }
        if !hit.iter().all(|&h| h) {
            return false;
        }
    }
    true
}

fn random_interval_map(rng: &mut StdRng) -> MarkovMap {
    let k: i64 = rng.gen_range(3..=6);
    let mut xs: BTreeSet<i64> = BTreeSet::from([0, 12]);
    while (xs.len() as i64) < k {
        xs.insert(rng.gen_range(1..12));
    }
    let xs: Vec<i64> = xs.into_iter().collect();
    let parts: Vec<(Scalar, Scalar)> = xs
        .iter()
        .map(|&x| (ratio(x, 12), ratio(xs[rng.gen_range(0..xs.len())], 12)))
        .collect();
    catalog::unit_interval_map(&parts)
}

fn c3() -> Outcome {
    let mut corpus: Vec<(String, MarkovMap)> = vec![
        ("tent".into(), catalog::tent()),
        ("three-fold".into(), catalog::three_fold()),
        ("identity".into(), catalog::identity()),
        ("swap".into(), catalog::swap_isometry()),
        ("star rotation".into(), catalog::star_rotation(3)),
        ("tent pair".into(), catalog::period_two_tent_pair()),
        ("half shift".into(), catalog::half_shift()),
        ("collapse".into(), catalog::collapse()),
    ];
    let mut rng = StdRng::seed_from_u64(7);
    for k in 0..4 {
        corpus.push((format!("random {k}"), random_interval_map(&mut rng)));
    }
    let mut transitive = 0;
    for (name, f) in &corpus {
        let graph = classify(f).is_transitive();
        let oracle = transitive_by_images(f);
        check(graph == oracle, format!("{name}: graph says {graph}, oracle says {oracle}"))?;
        transitive += graph as usize;
    }
    Ok(format!("{} maps agree, {transitive} transitive", corpus.len()))
}

fn c4() -> Outcome {
    let f = catalog::period_two_tent_pair();
    for eps in [ratio(1, 2), ratio(1, 8)] {
        let out = totalize(&f, &eps).map_err(|e| e.to_string())?;
        check(classify(&out.map).is_mixing(), "output not mixing")?;
        let d = f.sup_distance(&out.map).map_err(|e| e.to_string())?;
        check(d < eps, format!("sup distance {d} >= {eps}"))?;
        for p in f.partition() {
            check(
                out.map.eval(p).unwrap() == f.eval(p).unwrap(),
                format!("moved on the partition at {p:?}"),
            )?;
        }
    }
    Ok("eps 1/2 and 1/8".into())
}

fn c5() -> Outcome {
    let start = Instant::now();
    let eps = ratio(1, 4);
    for n in [1, 3, 5] {
        let out = star_mixing(n, &eps).map_err(|e| e.to_string())?;
        let f = &out.map;
        let fixed: BTreeSet<TreePoint> = enumerate_periodic(f, 1)
            .map_err(|e| e.to_string())?
            .orbits
            .into_iter()
            .map(|o| o.base)
            .collect();
        for v in 0..=n {
            check(fixed.contains(&TreePoint::Vertex(v)), format!("n = {n}: vertex {v} not fixed"))?;
        }
        check(classify(f).is_mixing(), format!("n = {n}: not mixing"))?;
        let id = MarkovMap::identity(f.tree().clone()).unwrap();
        let d = f.sup_distance(&id).map_err(|e| e.to_string())?;
        check(d < eps, format!("n = {n}: distance {d}"))?;
    }
    timed(Duration::from_secs(30), start)
}

/// `sup_{x in T1} d(f2(x), f1(x))` with `T1 = [a, b]` inside `T2`. The distance
/// of two points moving linearly along geodesics of a tree is convex, so the
/// sup is attained at a breakpoint of one of the maps.
fn drift_on_interval(f1: &MarkovMap, f2: &MarkovMap) -> Scalar {
    let t2 = f2.tree();
    let a = TreePoint::Vertex(t2.vertex_by_name("a").unwrap());
    let b = TreePoint::Vertex(t2.vertex_by_name("b").unwrap());
    let path = t2.path(&a, &b).unwrap();
    assert_eq!(path.length(), int(1));
    let mut params: BTreeSet<Scalar> = f2.partition().iter().filter_map(|p| path.locate(t2, p)).collect();
    for p in f1.partition() {
        params.insert(f1.tree().offset_on_edge(p, 0).unwrap());
    }
    let mut worst = Scalar::zero();
    for s in params {
        let y2 = f2.eval(&path.point_at(t2, &s)).unwrap();
        let y1 = f1.eval(&f1.tree().point(0, s).unwrap()).unwrap();
        let y1 = path.point_at(t2, &f1.tree().offset_on_edge(&y1, 0).unwrap());
        let d = t2.distance(&y1, &y2);
        if d > worst {
            worst = d;
        }
    }
    worst
}

fn c6() -> Outcome {
    let f1 = catalog::tent();
    let s1 = StageState::initial(f1.clone(), &int(1)).map_err(|e| e.to_string())?;
    let r = s1.tree().point(0, ratio(2, 5)).unwrap();
    let s2 = dendrite_stage(&s1, Some(&r), 3).map_err(|e| e.to_string())?;
    let f2 = &s2.map;
    check(classify(f2).is_mixing(), "f2 not mixing")?;
    let orbit = s2.pinned.last().ok_or("nothing pinned")?;
    for (k, p) in orbit.iter().enumerate() {
        check(
            matches!(f2.tree().classify_point(p), Ok(PointOrder::Branch(_))),
            "pinned point is not a branch point",
        )?;
        check(f2.eval(p).unwrap() == orbit[(k + 1) % orbit.len()], "pinned points do not cycle")?;
    }
    let delta = s2.delta.clone().ok_or("no delta recorded")?;
    let drift = drift_on_interval(&f1, f2);
    check(drift < &delta / int(2), format!("drift {drift} >= delta/2 = {}", &delta / int(2)))?;
    Ok(format!("pinned period {}, drift {drift} < {}", orbit.len(), &delta / int(2)))
}

fn c7() -> Outcome {
    let start = Instant::now();
    for (name, f) in [("tent", catalog::tent()), ("three-fold", catalog::three_fold())] {
        match density_certificate(&f, &ratio(1, 64), 12).map_err(|e| e.to_string())? {
            DensityCertificate::Certified { max_period } => check(max_period <= 12, name)?,
            other => return Err(format!("{name}: {other}")),
        }
    }
    timed(Duration::from_secs(10), start)
}

fn c8() -> Outcome {
    let f = catalog::star_rotation(3);
    let d = terminal_decomposition(&f).map_err(|e| e.to_string())?;
    check(d.len() == 3, format!("{} pieces", d.len()))?;
    let report = verify_decomposition(&f, &d);
    check(report.all_pass(), report.to_string())?;
    let g = f.power(3).map_err(|e| e.to_string())?;
    let graph = CoveringGraph::build(&g);
    for i in 0..d.len() {
        let piece = d.piece_set(&f, i);
        let inside: Vec<usize> = (0..g.interval_count())
            .filter(|&k| {
                let arc = &g.interval(k).arc;
                piece.contains(g.tree(), &arc.point_at(g.tree(), &(arc.length() / int(2))))
            })
            .collect();
        check(!inside.is_empty(), format!("piece {i} is empty"))?;
        check(
            graph.induced(&inside).primitivity_horizon().is_some(),
            format!("piece {i}: cube not primitive"),
        )?;
    }
    Ok("3 pieces verified".into())
}

fn c9() -> Outcome {
    let f = catalog::tent();
    // grid oracle: every subset of a 12-point grid that some iterate of f fixes setwise
    let grid: Vec<TreePoint> = [(0, 1), (2, 15), (4, 15), (8, 15), (14, 15), (2, 5), (4, 5), (2, 3), (1, 2), (1, 1), (1, 3), (1, 5)]
        .iter()
        .map(|&(p, q)| f.tree().point(0, ratio(p, q)).unwrap())
        .collect();
    let image = |s: &BTreeSet<TreePoint>, n: usize| -> BTreeSet<TreePoint> {
        s.iter().map(|p| f.iterate(p, n).unwrap()).collect()
    };
    let mut oracle = BTreeSet::new();
    for mask in 1u32..(1 << grid.len()) {
        if mask.count_ones() > 2 {
            continue;
        }
        let s: BTreeSet<TreePoint> = (0..grid.len()).filter(|k| mask >> k & 1 == 1).map(|k| grid[k].clone()).collect();
        if (1..=2).any(|n| image(&s, n) == s) {
            oracle.insert(s);
        }
    }
    let on_grid = |s: &BTreeSet<TreePoint>| s.iter().all(|p| grid.contains(p));
    let listed: BTreeSet<BTreeSet<TreePoint>> = finite_periodic_sets(&f, 2, 2)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|s| s.points)
        .filter(on_grid)
        .collect();
    check(listed == oracle, format!("enumeration {} sets, grid oracle {}", listed.len(), oracle.len()))?;

    // every tested free arc yields a point strictly inside
    let mut arcs = 0;
    for (name, g) in [("tent", catalog::tent()), ("three-fold", catalog::three_fold())] {
        let report = almost_meshed_reduction(&g, &ratio(1, 4), 8).map_err(|e| e.to_string())?;
        for a in &report.arcs {
            let x = a.outcome.as_ref().map_err(|e| format!("{name} arc {}: {e}", a.id))?;
            let s = a.arc.locate(g.tree(), &x.orbit.base).ok_or("base off the arc")?;
            check(s > Scalar::zero() && s < a.arc.length(), format!("{name} arc {}: base on the boundary", a.id))?;
            check(g.iterate(&x.orbit.base, x.orbit.period).unwrap() == x.orbit.base, "period equation fails")?;
            arcs += 1;
        }
    }
    let two = catalog::two_block();
    let arc = two.tree().free_arcs().remove(0);
    let block = |a: Scalar, b: Scalar| {
        let t = two.tree();
        let arc = t.path(&t.point(0, a).unwrap(), &t.point(0, b).unwrap()).unwrap();
        dendro_core::HyperElement::continuum(&two, Subtree::from_arc(&arc)).unwrap()
    };
    let x = extract_periodic_from_free_arc(&two, &arc, &block(ratio(1, 4), ratio(1, 2)), &block(ratio(5, 8), ratio(7, 8)), 1, 1)
        .map_err(|e| e.to_string())?;
    check(two.eval(&x.orbit.base).unwrap() == x.orbit.base, "continuum case: not fixed")?;
    arcs += 1;

    let swap = catalog::swap_isometry();
    let report = almost_meshed_reduction(&swap, &ratio(1, 8), 8).map_err(|e| e.to_string())?;
    check(
        report.sparse(),
        format!(
            "{arcs} free arcs verified, grid oracle matches; swap isometry not sparse: every point of it has period <= 2, so no arc lacks periodic points"
        ),
    )?;
    Ok(format!("{arcs} free arcs verified"))
}

fn random_tree(rng: &mut StdRng, edges: usize) -> MetricTree {
    let names = (0..=edges).map(|i| format!("v{i}")).collect();
    let list = (1..=edges)
        .map(|i| {
            let len = ratio(rng.gen_range(1..=8), [1, 2, 4][rng.gen_range(0..3)]);
            (format!("e{i}"), rng.gen_range(0..i), i, len)
        })
        .collect();
    MetricTree::new("random", names, list).unwrap()
}

fn c10() -> Outcome {
    let mut rng = StdRng::seed_from_u64(10);
    let mut worst = (0, 1);
    for _ in 0..100 {
        let t = random_tree(&mut rng, 20);
        let eps = [ratio(1, 4), ratio(1, 2), int(1), int(2)][rng.gen_range(0..4)].clone();
        let mut cuts: Vec<TreePoint> = Vec::new();
        for _ in 0..rng.gen_range(0..40) {
            let e = rng.gen_range(0..t.edges().len());
            let off = &t.edge(e).length * ratio(rng.gen_range(0..=8), 8);
            cuts.push(t.point(e, off).unwrap());
        }
        cuts.sort();
        cuts.dedup();
        let family: Vec<_> = t
            .components_minus(&cuts)
            .map_err(|e| e.to_string())?
            .into_iter()
            .filter(|_| rng.gen_bool(0.8))
            .collect();
        let big = family
            .iter()
            .filter(|c| {
                let mut ends: Vec<TreePoint> = Vec::new();
                for s in &c.segments {
                    ends.push(t.point(s.edge, s.from.clone()).unwrap());
                    ends.push(t.point(s.edge, s.to.clone()).unwrap());
                }
                let diam = ends
                    .iter()
                    .flat_map(|p| ends.iter().map(move |q| (p, q)))
                    .map(|(p, q)| t.distance(p, q))
                    .max()
                    .unwrap_or_else(Scalar::zero);
                diam >= eps
            })
            .count();
        let bound = t.disjoint_family_bound(&eps).map_err(|e| e.to_string())?;
        check(big <= bound, format!("{big} members of diameter >= {eps}, bound {bound}"))?;
        if big * worst.1 > worst.0 * bound {
            worst = (big, bound);
        }
    }
    Ok(format!("100 families, tightest {}/{}", worst.0, worst.1))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("sigma collapse identity", c1),
        ("periodic-endpoint shadow", c2),
        ("transitivity criterion", c3),
        ("totalization", c4),
        ("star mixing", c5),
        ("stage construction", c6),
        ("periodic density", c7),
        ("terminal decomposition", c8),
        ("hyperspace free arcs", c9),
        ("disjoint family bound", c10),
    ];
    let mut unexpected = Vec::new();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = k + 1;
        let outcome = run();
        let red = KNOWN_RED.contains(&id);
        match &outcome {
            Ok(msg) => println!("PASS {id:>2} {name}: {msg}"),
            Err(msg) if red => println!("FAIL {id:>2} {name} (known): {msg}"),
            Err(msg) => println!("FAIL {id:>2} {name}: {msg}"),
        }
        if outcome.is_ok() == red {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
