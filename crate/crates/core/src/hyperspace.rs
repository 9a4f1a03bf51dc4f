//! The induced map on closed subsets, restricted to finite sets and
//! subtrees, and periodic points extracted from periodic subsets of free arcs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_integer::Integer;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::graph::CoveringGraph;
use crate::markov::{MarkovMap, Region};
use crate::periodic::{enumerate_periodic, find_periodic_in, periodic_points_in, PeriodicOrbit};
use crate::scalar::{self, Scalar};
use crate::tree::{Arc, Subtree, TreePoint};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HyperElement {
    Finite(BTreeSet<TreePoint>),
    Continuum(Subtree),
}

impl HyperElement {
    pub fn finite<I: IntoIterator<Item = TreePoint>>(f: &MarkovMap, points: I) -> Result<Self> {
        let set: BTreeSet<TreePoint> = points.into_iter().collect();
        if set.is_empty() {
            return Err(Error::Domain("hyperspace elements are nonempty".into()));
        }
        for p in &set {
            f.tree().check_point(p)?;
        }
        Ok(HyperElement::Finite(set))
    }

    pub fn continuum(f: &MarkovMap, set: Subtree) -> Result<Self> {
        let tree = f.tree();
        let set = set.normalized(tree);
        if set.is_empty() || !set.is_connected(tree) {
            return Err(Error::Domain("subtree elements are nonempty and connected".into()));
        }
        Ok(HyperElement::Continuum(set))
    }

    pub fn same(&self, f: &MarkovMap, other: &HyperElement) -> bool {
        match (self, other) {
            (HyperElement::Finite(a), HyperElement::Finite(b)) => a == b,
            (HyperElement::Continuum(a), HyperElement::Continuum(b)) => a.same_set(f.tree(), b),
            (HyperElement::Finite(a), HyperElement::Continuum(b))
            | (HyperElement::Continuum(b), HyperElement::Finite(a)) => {
                a.len() == 1 && b.same_set(f.tree(), &Subtree::point(a.first().unwrap().clone()))
            }
        }
    }

    pub fn render(&self, f: &MarkovMap) -> String {
        let tree = f.tree();
        match self {
            HyperElement::Finite(s) => {
                let pts: Vec<String> = s.iter().map(|p| tree.describe(p)).collect();
                format!("{{{}}}", pts.join(", "))
            }
            HyperElement::Continuum(s) => {
                let mut parts: Vec<String> = s
                    .segments
                    .iter()
                    .map(|g| {
                        format!(
                            "{}[{}, {}]",
                            tree.edge(g.edge).name,
                            scalar::render(g.lo()),
                            scalar::render(g.hi())
                        )
                    })
                    .collect();
                parts.extend(s.points.iter().map(|p| tree.describe(p)));
                parts.join(" u ")
            }
        }
    }
}

/// `2^f(A) = f(A)`.
pub fn induced_image(f: &MarkovMap, a: &HyperElement) -> Result<HyperElement> {
    match a {
        HyperElement::Finite(s) => Ok(HyperElement::Finite(
            s.iter().map(|p| f.eval(p)).collect::<Result<_>>()?,
        )),
        HyperElement::Continuum(s) => {
            let pl = f.as_pl();
            let img = Region::from_subtree(pl, s).image(pl).to_subtree(pl);
            Ok(HyperElement::Continuum(img.normalized(f.tree())))
        }
    }
}

pub fn induced_iterate(f: &MarkovMap, a: &HyperElement, n: usize) -> Result<HyperElement> {
    let mut cur = a.clone();
    for _ in 0..n {
        cur = induced_image(f, &cur)?;
    }
    Ok(cur)
}

/// Least `n <= max` with `(2^f)^n(A) = A`.
pub fn induced_period(f: &MarkovMap, a: &HyperElement, max: usize) -> Result<Option<usize>> {
    let mut cur = a.clone();
    for n in 1..=max {
        cur = induced_image(f, &cur)?;
        if cur.same(f, a) {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodicFiniteSet {
    pub points: BTreeSet<TreePoint>,
    /// Least `n` with `(2^f)^n(A) = A`.
    pub period: usize,
}

/// Finite sets `A` with `|A| <= max_cardinality` and `(2^f)^n(A) = A` for some
/// `n <= max_period`. Such an `A` is a union of cycles of `f^n`, so its points
/// are periodic with period at most `n |A|`. Points of intervals on which
/// every point is periodic are not listed.
pub fn finite_periodic_sets(
    f: &MarkovMap,
    max_period: usize,
    max_cardinality: usize,
) -> Result<Vec<PeriodicFiniteSet>> {
    if max_period == 0 || max_cardinality == 0 {
        return Err(Error::Domain("bounds must be at least 1".into()));
    }
    let orbits = enumerate_periodic(f, max_period * max_cardinality)?.orbits;
    let mut found: BTreeMap<BTreeSet<TreePoint>, usize> = BTreeMap::new();
    for n in 1..=max_period {
        // cycles of f^n inside each f-orbit
        let mut cycles: Vec<Vec<TreePoint>> = Vec::new();
        for o in &orbits {
            let pts = o.points(f);
            let g = o.period.gcd(&n);
            let size = o.period / g;
            if size > max_cardinality {
                continue;
            }
            for r in 0..g {
                cycles.push((0..size).map(|k| pts[(r + k * n) % o.period].clone()).collect());
            }
        }
        let mut chosen = Vec::new();
        collect_unions(&cycles, 0, max_cardinality, &mut chosen, &mut |set| {
            found.entry(set).or_insert(0);
        });
    }
    let mut out = Vec::with_capacity(found.len());
    for points in found.into_keys() {
        let el = HyperElement::Finite(points.clone());
        let period = induced_period(f, &el, max_period)?.expect("unions of cycles return");
        out.push(PeriodicFiniteSet { points, period });
    }
    out.sort_by(|a, b| (a.points.len(), &a.points).cmp(&(b.points.len(), &b.points)));
    Ok(out)
}

fn collect_unions<F: FnMut(BTreeSet<TreePoint>)>(
    cycles: &[Vec<TreePoint>],
    from: usize,
    room: usize,
    chosen: &mut Vec<usize>,
    emit: &mut F,
) {
    for c in from..cycles.len() {
        if cycles[c].len() > room {
            continue;
        }
        chosen.push(c);
        emit(chosen.iter().flat_map(|&k| cycles[k].iter().cloned()).collect());
        collect_unions(cycles, c + 1, room - cycles[c].len(), chosen, emit);
        chosen.pop();
    }
}

/// Sets of basic intervals `S` with `succ(S) = S` are exactly unions of the
/// eventual cycles `L(I)` of `succ^k({I})`.
fn eventual_cycle(g: &CoveringGraph, i: usize) -> BTreeSet<usize> {
    let step = |s: &BTreeSet<usize>| -> BTreeSet<usize> {
        s.iter().flat_map(|&v| g.successors(v).iter().copied()).collect()
    };
    let mut seen: Vec<BTreeSet<usize>> = vec![BTreeSet::from([i])];
    loop {
        let next = step(seen.last().unwrap());
        if let Some(k) = seen.iter().position(|s| s == &next) {
            return seen[k..].iter().flatten().copied().collect();
        }
        seen.push(next);
    }
}

/// Connected unions of basic intervals with `f(S) = S`, then the fixed points
/// as one-point subtrees. The whole tree comes first when it is invariant.
pub fn invariant_subtrees(f: &MarkovMap) -> Result<Vec<Subtree>> {
    const MAX_GENERATORS: usize = 16;
    let g = CoveringGraph::build(f);
    let pl = f.as_pl();
    let tree = f.tree();
    let gens: BTreeSet<BTreeSet<usize>> = (0..g.len())
        .map(|i| eventual_cycle(&g, i))
        .filter(|s| !s.is_empty())
        .collect();
    let gens: Vec<BTreeSet<usize>> = gens.into_iter().collect();
    if gens.len() > MAX_GENERATORS {
        return Err(Error::Inconclusive(format!(
            "{} independent invariant interval sets; too many unions to list",
            gens.len()
        )));
    }
    let mut sets: BTreeSet<BTreeSet<usize>> = BTreeSet::new();
    for mask in 1u32..(1 << gens.len()) {
        let s: BTreeSet<usize> = (0..gens.len())
            .filter(|k| mask >> k & 1 == 1)
            .flat_map(|k| gens[k].iter().copied())
            .collect();
        sets.insert(s);
    }
    let mut out = Vec::new();
    for s in sets {
        let region = Region {
            pieces: s.iter().map(|&i| (i, Scalar::zero(), f.interval(i).length())).collect(),
            points: BTreeSet::new(),
        }
        .normalized();
        let sub = region.to_subtree(pl).normalized(tree);
        if sub.is_connected(tree) {
            out.push((std::cmp::Reverse(s.len()), s, sub));
        }
    }
    out.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    let mut out: Vec<Subtree> = out.into_iter().map(|(_, _, t)| t).collect();
    for o in enumerate_periodic(f, 1)?.orbits {
        out.push(Subtree::point(o.base));
    }
    Ok(out)
}

/// Which step of the free-arc argument produced the periodic point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Via {
    /// One of the elements is a finite set.
    Finite,
    /// `f^n` keeps the orientation of the chosen preimage pair.
    Case3,
    /// `f^n` reverses it.
    Case5,
}

impl fmt::Display for Via {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Via::Finite => "finite",
            Via::Case3 => "case3",
            Via::Case5 => "case5",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Extraction {
    pub orbit: PeriodicOrbit,
    pub via: Via,
}

fn check_free(f: &MarkovMap, arc: &Arc) -> Result<()> {
    let tree = f.tree();
    if arc.is_degenerate() {
        return Err(Error::Domain("free arc is degenerate".into()));
    }
    for v in 0..tree.vertex_count() {
        let p = TreePoint::Vertex(v);
        if tree.degree(v) != 2 && p != arc.start && p != arc.end && arc.contains(tree, &p) {
            return Err(Error::Domain(format!(
                "arc is not free: it passes through {}",
                tree.vertex_name(v)
            )));
        }
    }
    Ok(())
}

/// Arc positions of the least and greatest points of `a`, which must lie in
/// the open arc.
fn span_on(f: &MarkovMap, arc: &Arc, a: &HyperElement) -> Result<(Scalar, Scalar)> {
    let tree = f.tree();
    let pts: Vec<TreePoint> = match a {
        HyperElement::Finite(s) => s.iter().cloned().collect(),
        HyperElement::Continuum(s) => {
            if !s.is_connected(tree) {
                return Err(Error::Domain("subtree element is not connected".into()));
            }
            let mut pts: Vec<TreePoint> = s.points.clone();
            for g in &s.segments {
                pts.push(tree.point(g.edge, g.from.clone())?);
                pts.push(tree.point(g.edge, g.to.clone())?);
            }
            pts
        }
    };
    let len = arc.length();
    let mut params = Vec::with_capacity(pts.len());
    for p in &pts {
        match arc.locate(tree, p) {
            Some(s) if s.is_positive() && s < len => params.push(s),
            _ => {
                return Err(Error::Domain(format!(
                    "{} is not inside the open arc",
                    tree.describe(p)
                )))
            }
        }
    }
    let lo = params.iter().min().cloned().expect("nonempty element");
    let hi = params.iter().max().cloned().expect("nonempty element");
    Ok((lo, hi))
}

/// Arc positions of points of the closed arc `[s0, s1]` with `f^n(x) = x`.
fn fixed_points_on(f: &MarkovMap, arc: &Arc, s0: &Scalar, s1: &Scalar, n: usize) -> Result<Vec<Scalar>> {
    let tree = f.tree();
    let sub = arc.sub_arc(tree, s0, s1);
    let mut out = BTreeSet::new();
    let mut candidates = vec![sub.start.clone(), sub.end.clone()];
    for (i, a, b) in f.decompose_arc(&sub) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let iv = &f.interval(i).arc;
        candidates.push(iv.point_at(tree, &lo));
        candidates.push(iv.point_at(tree, &hi));
        candidates.extend(periodic_points_in(f, i, &lo, &hi, n));
    }
    for p in candidates {
        if f.iterate(&p, n)? == p {
            out.insert(arc.locate(tree, &p).expect("sub-arc points lie on the arc"));
        }
    }
    Ok(out.into_iter().collect())
}

/// A periodic point of `f` in the open free arc `(a, b)`, given periodic
/// elements `A1` and `A2` of the induced map lying on either side of a point
/// of the arc.
pub fn extract_periodic_from_free_arc(
    f: &MarkovMap,
    arc: &Arc,
    a1: &HyperElement,
    a2: &HyperElement,
    n1: usize,
    n2: usize,
) -> Result<Extraction> {
    check_free(f, arc)?;
    if n1 == 0 || n2 == 0 {
        return Err(Error::Domain("periods must be at least 1".into()));
    }
    let (c1, d1) = span_on(f, arc, a1)?;
    let (c2, d2) = span_on(f, arc, a2)?;
    if d1 >= c2 {
        return Err(Error::Domain(
            "A1 must lie strictly before A2 along the arc".into(),
        ));
    }
    for (a, n, name) in [(a1, n1, "A1"), (a2, n2, "A2")] {
        if !induced_iterate(f, a, n)?.same(f, a) {
            return Err(Error::Domain(format!("{name} is not fixed by the {n}-th induced iterate")));
        }
    }
    let tree = f.tree();
    for (a, n) in [(a1, n1), (a2, n2)] {
        let point = match a {
            HyperElement::Finite(s) => s.first().cloned(),
            HyperElement::Continuum(s) if s.segments.is_empty() => s.points.first().cloned(),
            HyperElement::Continuum(_) => None,
        };
        if let Some(x) = point {
            let orbit = PeriodicOrbit::through(f, &x, n)?.expect("invariant finite sets are periodic");
            return Ok(Extraction { orbit, via: Via::Finite });
        }
    }
    let (c, d) = if c1 < d1 { (c1, d1) } else { (c2, d2) };
    let n = n1.lcm(&n2);
    let g = f.power(n)?;
    let pc = arc.point_at(tree, &c);
    let pd = arc.point_at(tree, &d);
    let pre = |y: &TreePoint| -> Vec<Scalar> {
        let mut pts = g.preimages(y);
        for (p, q) in g.partition().iter().zip(g.images()) {
            if q == y {
                pts.insert(p.clone());
            }
        }
        pts.iter()
            .filter_map(|p| arc.locate(tree, p))
            .filter(|s| s >= &c && s <= &d)
            .collect()
    };
    let (cs, ds) = (pre(&pc), pre(&pd));
    let mut best: Option<(Scalar, Scalar, Scalar)> = None;
    for x in &cs {
        for y in &ds {
            let gap = (x - y).abs();
            let better = match &best {
                None => true,
                Some((bg, bx, by)) => (&gap, scalar::min(x, y)) < (bg, scalar::min(bx, by)),
            };
            if better {
                best = Some((gap, x.clone(), y.clone()));
            }
        }
    }
    let (_, cp, dp) = best.ok_or_else(|| {
        Error::Domain("the continuum element is not mapped onto itself".into())
    })?;
    let via = if cp <= dp { Via::Case3 } else { Via::Case5 };
    let fixed = fixed_points_on(f, arc, &cp, &dp, n)?;
    let (lo, hi) = if cp <= dp { (&cp, &dp) } else { (&dp, &cp) };
    let s = fixed
        .into_iter()
        .find(|s| s >= lo && s <= hi)
        .ok_or_else(|| Error::Inconclusive("no fixed point between the preimages".into()))?;
    let x = arc.point_at(tree, &s);
    let orbit = PeriodicOrbit::through(f, &x, n)?.expect("fixed point of f^n");
    Ok(Extraction { orbit, via })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArcReport {
    pub id: String,
    pub arc: Arc,
    pub outcome: std::result::Result<Extraction, String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeshedReport {
    pub arcs: Vec<ArcReport>,
    text: Vec<String>,
}

impl MeshedReport {
    /// Some tested arc had no periodic point.
    pub fn sparse(&self) -> bool {
        self.arcs.iter().any(|a| a.outcome.is_err())
    }
}

impl fmt::Display for MeshedReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in &self.text {
            writeln!(f, "{line}")?;
        }
        if self.sparse() {
            writeln!(f, "periodic points: sparse")
        } else {
            writeln!(f, "periodic points: found in every arc")
        }
    }
}

/// Open cells of the part of `arc` between positions `s0 < s1`.
fn arc_cells(f: &MarkovMap, arc: &Arc, s0: &Scalar, s1: &Scalar) -> Vec<(usize, Scalar, Scalar)> {
    f.decompose_arc(&arc.sub_arc(f.tree(), s0, s1))
        .into_iter()
        .map(|(i, a, b)| if a <= b { (i, a, b) } else { (i, b, a) })
        .filter(|(_, a, b)| a < b)
        .collect()
}

/// A periodic element of the induced map inside the open part `(s0, s1)`.
fn element_in(
    f: &MarkovMap,
    arc: &Arc,
    s0: &Scalar,
    s1: &Scalar,
    subtrees: &[Subtree],
    period_budget: usize,
) -> Option<(HyperElement, usize)> {
    let tree = f.tree();
    let inside = |p: &TreePoint| matches!(arc.locate(tree, p), Some(s) if &s > s0 && &s < s1);
    if let Ok(o) = find_periodic_in(f, &arc_cells(f, arc, s0, s1), period_budget, inside) {
        return Some((HyperElement::Finite(BTreeSet::from([o.base])), o.period));
    }
    subtrees.iter().find_map(|s| {
        let el = HyperElement::Continuum(s.clone());
        match span_on(f, arc, &el) {
            Ok((lo, hi)) if &lo > s0 && &hi < s1 => Some((el, 1)),
            _ => None,
        }
    })
}

/// Cuts every maximal free arc into pieces of length at most `resolution`
/// and, in each piece, looks for periodic elements of the induced map on both
/// sides of its midpoint to extract a periodic point from.
pub fn almost_meshed_reduction(
    f: &MarkovMap,
    resolution: &Scalar,
    period_budget: usize,
) -> Result<MeshedReport> {
    if !resolution.is_positive() {
        return Err(Error::Domain("resolution must be positive".into()));
    }
    let tree = f.tree();
    let subtrees = invariant_subtrees(f).unwrap_or_default();
    let two = Scalar::from_integer(2.into());
    let mut arcs = Vec::new();
    let mut text = Vec::new();
    for (k, free) in tree.free_arcs().into_iter().enumerate() {
        let len = free.length();
        let pieces = (&len / resolution).ceil();
        let step = &len / &pieces;
        let count = pieces.to_integer().try_into().unwrap_or(usize::MAX);
        for j in 0..count {
            let s0 = &step * Scalar::from_integer(j.into());
            let s1 = &s0 + &step;
            let arc = free.sub_arc(tree, &s0, &s1);
            let id = if count == 1 { format!("{k}") } else { format!("{k}.{j}") };
            let l = arc.length();
            let mid = &l / &two;
            let left = element_in(f, &arc, &Scalar::zero(), &mid, &subtrees, period_budget);
            let right = element_in(f, &arc, &mid, &l, &subtrees, period_budget);
            let outcome = match (left, right) {
                (Some((a1, n1)), Some((a2, n2))) => {
                    extract_periodic_from_free_arc(f, &arc, &a1, &a2, n1, n2).map_err(|e| e.to_string())
                }
                (None, _) => Err("no periodic element before the midpoint".into()),
                (_, None) => Err("no periodic element after the midpoint".into()),
            };
            text.push(match &outcome {
                Ok(x) => format!(
                    "arc {id}: periodic point {} period {} via {}",
                    tree.edge_coordinates(&x.orbit.base),
                    x.orbit.period,
                    x.via
                ),
                Err(why) => format!("arc {id}: no periodic point found ({why})"),
            });
            arcs.push(ArcReport { id, arc, outcome });
        }
    }
    Ok(MeshedReport { arcs, text })
}
