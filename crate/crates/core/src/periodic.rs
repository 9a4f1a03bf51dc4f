//! Periodic orbits of Markov maps, found by solving the affine return maps of
//! closed walks in the covering graph.
//!
//! Along an edge `I -> J` the parameter of `f(x)` in `J` is an affine function
//! of the parameter of `x` in `I`. A closed walk of length `n` composes to
//! `s ↦ A s + B`. The walk's domain maps onto the first interval, so
//! `|A| >= 1` and the unique solution of `s = A s + B` (when `A != 1`) always
//! lies in the domain; no interval bookkeeping is needed.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::error::{Error, Result};
use crate::graph::CoveringGraph;
use crate::markov::{MarkovMap, Region};
use crate::scalar::{self, Scalar};
use crate::tree::{Subtree, TreePoint};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodicOrbit {
    pub base: TreePoint,
    pub period: usize,
    /// `itinerary[k]` is a basic interval containing `f^k(base)`.
    pub itinerary: Vec<usize>,
}

impl PeriodicOrbit {
    /// Builds the orbit through `x` when `x` has period at most `max_period`.
    pub fn through(f: &MarkovMap, x: &TreePoint, max_period: usize) -> Result<Option<Self>> {
        let mut y = x.clone();
        let mut itinerary = Vec::new();
        for k in 1..=max_period {
            itinerary.push(f.locate(&y).map(|(i, _)| i).expect("point on tree"));
            y = f.eval(&y)?;
            if &y == x {
                return Ok(Some(PeriodicOrbit {
                    base: x.clone(),
                    period: k,
                    itinerary,
                }));
            }
        }
        Ok(None)
    }

    pub fn points(&self, f: &MarkovMap) -> Vec<TreePoint> {
        let mut out = Vec::with_capacity(self.period);
        let mut y = self.base.clone();
        for _ in 0..self.period {
            out.push(y.clone());
            y = f.eval(&y).expect("orbit points lie on the tree");
        }
        out
    }

    /// `orbit period=<n> base=<edge>:<p/q> itinerary=I<i1>,...`
    pub fn render(&self, f: &MarkovMap) -> String {
        let it: Vec<String> = self.itinerary.iter().map(|i| format!("I{i}")).collect();
        format!(
            "orbit period={} base={} itinerary={}",
            self.period,
            f.tree().edge_coordinates(&self.base),
            it.join(",")
        )
    }
}

/// A closed walk whose return map is the identity: every point of the
/// walk's intervals is periodic with period dividing `walk.len()`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodicInterval {
    pub walk: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PeriodicSet {
    /// Sorted by `(period, base)`; bases are the least orbit point.
    pub orbits: Vec<PeriodicOrbit>,
    pub intervals: Vec<PeriodicInterval>,
}

impl PeriodicSet {
    pub fn periodic_intervals(&self) -> BTreeSet<usize> {
        self.intervals
            .iter()
            .flat_map(|p| p.walk.iter().copied())
            .collect()
    }

    pub fn count_by_period(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for o in &self.orbits {
            *out.entry(o.period).or_insert(0) += 1;
        }
        out
    }
}

/// Affine change of parameter along the covering edge `i -> j`.
fn edge_affine(f: &MarkovMap, i: usize, j: usize) -> (Scalar, Scalar) {
    let tree = f.tree();
    let img = f.image_arc(i);
    let target = &f.interval(j).arc;
    let ua = img.locate(tree, &target.start).expect("covered interval lies on the image");
    let ub = img.locate(tree, &target.end).expect("covered interval lies on the image");
    let lam = f.slope(i).clone();
    if ub > ua {
        (lam, -ua)
    } else {
        (-lam, ua)
    }
}

/// Every closed walk of length `n` in `g`, with its composed return map.
fn closed_walks<F: FnMut(&[usize], &Scalar, &Scalar)>(
    g: &CoveringGraph,
    affine: &BTreeMap<(usize, usize), (Scalar, Scalar)>,
    n: usize,
    visit: &mut F,
) {
    fn rec<F: FnMut(&[usize], &Scalar, &Scalar)>(
        g: &CoveringGraph,
        affine: &BTreeMap<(usize, usize), (Scalar, Scalar)>,
        n: usize,
        walk: &mut Vec<usize>,
        a: Scalar,
        b: Scalar,
        visit: &mut F,
    ) {
        let last = *walk.last().unwrap();
        if walk.len() == n {
            if g.has_edge(last, walk[0]) {
                let (ea, eb) = &affine[&(last, walk[0])];
                visit(walk, &(ea * &a), &(ea * &b + eb));
            }
            return;
        }
        for &next in g.successors(last) {
            let (ea, eb) = &affine[&(last, next)];
            walk.push(next);
            rec(g, affine, n, walk, ea * &a, ea * &b + eb, visit);
            walk.pop();
        }
    }
    for start in 0..g.len() {
        let mut walk = vec![start];
        rec(g, affine, n, &mut walk, Scalar::one(), Scalar::zero(), visit);
    }
}

struct Enumerator<'a> {
    f: &'a MarkovMap,
    graph: CoveringGraph,
    affine: BTreeMap<(usize, usize), (Scalar, Scalar)>,
    seen: HashSet<TreePoint>,
    set: PeriodicSet,
    interval_walks: HashSet<Vec<usize>>,
}

impl<'a> Enumerator<'a> {
    fn new(f: &'a MarkovMap) -> Self {
        let graph = CoveringGraph::build(f);
        let affine = graph
            .edges()
            .into_iter()
            .map(|(i, j)| ((i, j), edge_affine(f, i, j)))
            .collect();
        Enumerator {
            f,
            graph,
            affine,
            seen: HashSet::new(),
            set: PeriodicSet::default(),
            interval_walks: HashSet::new(),
        }
    }

    fn record(&mut self, x: TreePoint, max_period: usize) -> Result<()> {
        if self.seen.contains(&x) {
            return Ok(());
        }
        if let Some(orbit) = PeriodicOrbit::through(self.f, &x, max_period)? {
            let points = orbit.points(self.f);
            let base = points.iter().min().unwrap().clone();
            for p in points {
                self.seen.insert(p);
            }
            let orbit = PeriodicOrbit::through(self.f, &base, max_period)?.unwrap();
            self.set.orbits.push(orbit);
        }
        Ok(())
    }

    /// Records the periodic points whose period divides `n`, via walks of length `n`.
    fn period(&mut self, n: usize, max_period: usize) -> Result<()> {
        if n == 1 {
            for k in 0..self.f.partition().len() {
                let p = self.f.partition()[k].clone();
                self.record(p, max_period)?;
            }
        }
        let mut found: Vec<TreePoint> = Vec::new();
        let mut identity_walks: Vec<Vec<usize>> = Vec::new();
        let f = self.f;
        closed_walks(&self.graph, &self.affine, n, &mut |walk, a, b| {
            if a.is_one() {
                if b.is_zero() {
                    identity_walks.push(walk.to_vec());
                }
                return;
            }
            let s = b / (Scalar::one() - a);
            found.push(f.interval(walk[0]).arc.point_at(f.tree(), &s));
        });
        for x in found {
            self.record(x, max_period)?;
        }
        for w in identity_walks {
            let key = canonical_rotation(&w);
            if self.interval_walks.insert(key.clone()) {
                self.set.intervals.push(PeriodicInterval { walk: key });
            }
        }
        Ok(())
    }

    fn finish(mut self) -> PeriodicSet {
        self.set
            .orbits
            .sort_by(|a, b| (a.period, &a.base).cmp(&(b.period, &b.base)));
        self.set.intervals.sort_by(|a, b| (a.walk.len(), &a.walk).cmp(&(b.walk.len(), &b.walk)));
        self.set
    }
}

fn canonical_rotation(walk: &[usize]) -> Vec<usize> {
    (0..walk.len())
        .map(|r| walk[r..].iter().chain(&walk[..r]).copied().collect::<Vec<_>>())
        .min()
        .unwrap()
}

/// All periodic orbits of period `<= max_period`, plus the closed walks along
/// which every point is periodic.
pub fn enumerate_periodic(f: &MarkovMap, max_period: usize) -> Result<PeriodicSet> {
    if max_period == 0 {
        return Err(Error::Domain("max_period must be at least 1".into()));
    }
    let mut e = Enumerator::new(f);
    for n in 1..=max_period {
        e.period(n, max_period)?;
    }
    Ok(e.finish())
}

/// Walk search for periodic points inside a cell, dropping walks whose domain
/// misses the cell.
struct CellSearch<'a> {
    f: &'a MarkovMap,
    graph: CoveringGraph,
    affine: BTreeMap<(usize, usize), (Scalar, Scalar)>,
    lens: Vec<Scalar>,
}

impl<'a> CellSearch<'a> {
    fn new(f: &'a MarkovMap) -> Self {
        let graph = CoveringGraph::build(f);
        let affine = graph
            .edges()
            .into_iter()
            .map(|(u, v)| ((u, v), edge_affine(f, u, v)))
            .collect();
        let lens = f.intervals().iter().map(|iv| iv.length()).collect();
        CellSearch { f, graph, affine, lens }
    }

    /// Parameters in `(a, b)` sent by `s -> A s + B` into `[0, len]`.
    fn window(ca: &Scalar, cb: &Scalar, len: &Scalar, a: &Scalar, b: &Scalar) -> Option<(Scalar, Scalar)> {
        if ca.is_zero() {
            return None;
        }
        let u = (-cb) / ca;
        let v = (len - cb) / ca;
        let (lo, hi) = if u < v { (u, v) } else { (v, u) };
        let lo = scalar::max(&lo, a);
        let hi = scalar::min(&hi, b);
        (lo < hi).then_some((lo, hi))
    }

    #[allow(clippy::too_many_arguments)]
    fn rec(&self, j: usize, a: &Scalar, b: &Scalar, n: usize, last: usize, depth: usize, ca: Scalar, cb: Scalar, out: &mut BTreeSet<Scalar>) {
        if depth == n {
            if !self.graph.has_edge(last, j) {
                return;
            }
            let (ea, eb) = &self.affine[&(last, j)];
            let (ca, cb) = (ea * &ca, ea * &cb + eb);
            let Some((lo, hi)) = Self::window(&ca, &cb, &self.lens[j], a, b) else {
                return;
            };
            if ca.is_one() {
                if cb.is_zero() {
                    out.insert((lo + hi) / Scalar::from_integer(2.into()));
                }
                return;
            }
            let s = &cb / (Scalar::one() - &ca);
            if s > lo && s < hi {
                out.insert(s);
            }
            return;
        }
        for &next in self.graph.successors(last) {
            let (ea, eb) = &self.affine[&(last, next)];
            let (na, nb) = (ea * &ca, ea * &cb + eb);
            if Self::window(&na, &nb, &self.lens[next], a, b).is_some() {
                self.rec(j, a, b, n, next, depth + 1, na, nb, out);
            }
        }
    }

    fn points(&self, j: usize, a: &Scalar, b: &Scalar, n: usize) -> Vec<TreePoint> {
        let mut params = BTreeSet::new();
        if n == 0 || a >= b {
            return Vec::new();
        }
        self.rec(j, a, b, n, j, 1, Scalar::one(), Scalar::zero(), &mut params);
        let arc = &self.f.interval(j).arc;
        params.into_iter().map(|s| arc.point_at(self.f.tree(), &s)).collect()
    }
}

/// Points `x` of the open cell `(a, b)` of interval `j` with `f^n(x) = x`.
pub fn periodic_points_in(f: &MarkovMap, j: usize, a: &Scalar, b: &Scalar, n: usize) -> Vec<TreePoint> {
    CellSearch::new(f).points(j, a, b, n)
}

/// Smallest-period orbit meeting one of the open cells `(interval, a, b)`
/// and accepted by `accept`; ties go to the smallest point.
pub fn find_periodic_in<F: Fn(&TreePoint) -> bool>(
    f: &MarkovMap,
    cells: &[(usize, Scalar, Scalar)],
    period_budget: usize,
    accept: F,
) -> Result<PeriodicOrbit> {
    let search = CellSearch::new(f);
    for n in 1..=period_budget {
        let mut hits: Vec<TreePoint> = cells
            .iter()
            .flat_map(|(j, a, b)| search.points(*j, a, b, n))
            .filter(|p| accept(p))
            .collect();
        hits.sort();
        hits.dedup();
        for p in hits {
            if let Some(o) = PeriodicOrbit::through(f, &p, n)? {
                if o.period == n {
                    return Ok(o);
                }
            }
        }
    }
    Err(Error::Inconclusive(format!(
        "no periodic point of period <= {period_budget} in the requested cells"
    )))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DensityCertificate {
    /// Every open cell contains a periodic point of period `<= max_period`.
    Certified { max_period: usize },
    /// An open cell `(lo, hi)` of basic interval `interval` provably has no periodic point.
    Gap { interval: usize, lo: Scalar, hi: Scalar },
}

impl fmt::Display for DensityCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensityCertificate::Certified { max_period } => {
                write!(f, "certified max_period={max_period}")
            }
            DensityCertificate::Gap { interval, lo, hi } => write!(
                f,
                "gap I{interval} ({}, {})",
                scalar::render(lo),
                scalar::render(hi)
            ),
        }
    }
}

/// Open cells of length at most `eps` cutting every basic interval evenly.
pub fn cells(f: &MarkovMap, eps: &Scalar) -> Vec<(usize, Scalar, Scalar)> {
    let mut out = Vec::new();
    for (i, iv) in f.intervals().iter().enumerate() {
        let len = iv.length();
        let k = (&len / eps).ceil();
        let step = &len / &k;
        let mut a = Scalar::zero();
        while a < len {
            let b = &a + &step;
            out.push((i, a.clone(), b.clone()));
            a = b;
        }
    }
    out
}

/// When every strongly connected component of the covering graph is a single
/// cycle, all periodic points show up at periods `<= 2 * longest cycle`.
fn gap_is_final(g: &CoveringGraph, searched: usize) -> bool {
    let mut longest = 1;
    for comp in g.sccs() {
        let inside: Vec<usize> = comp
            .iter()
            .map(|&v| g.successors(v).iter().filter(|w| comp.contains(w)).count())
            .collect();
        let trivial = comp.len() == 1 && inside[0] == 0;
        if !trivial && inside.iter().any(|&d| d != 1) {
            return false;
        }
        longest = longest.max(comp.len());
    }
    searched >= 2 * longest
}

/// Raises the period bound until every `eps`-cell holds a periodic point.
/// Budget exhaustion is an error distinct from a proven gap.
pub fn density_certificate(
    f: &MarkovMap,
    eps: &Scalar,
    period_budget: usize,
) -> Result<DensityCertificate> {
    if !eps.is_positive() {
        return Err(Error::Domain("resolution must be positive".into()));
    }
    let cells = cells(f, eps);
    let mut covered = vec![false; cells.len()];
    let mut e = Enumerator::new(f);
    for n in 1..=period_budget.max(1) {
        e.period(n, period_budget)?;
        let full = e.set.periodic_intervals();
        for (c, (i, lo, hi)) in cells.iter().enumerate() {
            if covered[c] {
                continue;
            }
            // interior periodic points of a cell live in that interval only
            covered[c] = full.contains(i)
                || e.seen.iter().any(|p| match f.locate(p) {
                    Some((j, s)) if j == *i => &s > lo && &s < hi,
                    _ => false,
                });
        }
        if covered.iter().all(|&c| c) {
            return Ok(DensityCertificate::Certified { max_period: n });
        }
    }
    let (c, _) = covered.iter().enumerate().find(|(_, &c)| !c).unwrap();
    if gap_is_final(&e.graph, period_budget) {
        let (interval, lo, hi) = cells[c].clone();
        return Ok(DensityCertificate::Gap { interval, lo, hi });
    }
    Err(Error::Inconclusive(format!(
        "no periodic point of period <= {period_budget} in some cell"
    )))
}

/// Component of `T \ {x, y}` containing the open arc `(x, y)`.
pub fn component_between(f: &MarkovMap, x: &TreePoint, y: &TreePoint) -> Result<Subtree> {
    let tree = f.tree();
    if x == y {
        return Err(Error::Domain("x and y must differ".into()));
    }
    let arc = tree.path(x, y)?;
    let mid = arc.point_at(tree, &(arc.length() / Scalar::from_integer(2.into())));
    for comp in tree.components_minus(&[x.clone(), y.clone()])? {
        let set = Subtree {
            segments: comp.segments.clone(),
            points: Vec::new(),
        };
        if set.contains(tree, &mid) {
            return Ok(set);
        }
    }
    unreachable!("the midpoint of an arc lies in some component")
}

fn in_open_component(f: &MarkovMap, set: &Subtree, x: &TreePoint, y: &TreePoint, p: &TreePoint) -> bool {
    p != x && p != y && set.contains(f.tree(), p)
}

/// A periodic orbit with base in the component `U` of `T \ {x, y}` between
/// `x` and `y`, given `f^m(x), f^n(y) ∈ U`.
pub fn locate_periodic_in_component(
    f: &MarkovMap,
    x: &TreePoint,
    y: &TreePoint,
    m: usize,
    n: usize,
    period_budget: usize,
) -> Result<PeriodicOrbit> {
    let u = component_between(f, x, y)?;
    let fx = f.iterate(x, m)?;
    let fy = f.iterate(y, n)?;
    if !in_open_component(f, &u, x, y, &fx) || !in_open_component(f, &u, x, y, &fy) {
        return Err(Error::Precondition(
            "iterates of x and y do not land in the component between them".into(),
        ));
    }
    let region = Region::from_subtree(f.as_pl(), &u);
    let cells: Vec<(usize, Scalar, Scalar)> = region.pieces.into_iter().filter(|(_, a, b)| a < b).collect();
    find_periodic_in(f, &cells, period_budget, |p| in_open_component(f, &u, x, y, p)).map_err(|_| {
        Error::Inconclusive(format!(
            "no periodic point of period <= {period_budget} found between the given points"
        ))
    })
}
