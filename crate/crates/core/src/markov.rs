//! Piecewise-linear tree maps: Markov maps, homeomorphisms, and regions.
//!
//! A map is given by a finite partition `P` of the tree and the images of the
//! partition points. Each `P`-basic interval `[a, b]` is sent onto the arc
//! `[f(a), f(b)]` at constant speed, so the slope of a piece is
//! `|[f(a), f(b)]| / |[a, b]|` (zero for constant pieces).

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};
use crate::tree::{Arc, Embedding, MetricTree, Segment, Subtree, TreePoint};

/// Arc between two adjacent partition points, oriented from `start`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BasicInterval {
    /// Indices into the partition.
    pub start: usize,
    pub end: usize,
    pub arc: Arc,
}

impl BasicInterval {
    pub fn length(&self) -> Scalar {
        self.arc.length()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct EdgePiece {
    lo: Scalar,
    hi: Scalar,
    interval: usize,
    param_at_lo: Scalar,
    forward: bool,
}

impl EdgePiece {
    fn param(&self, offset: &Scalar) -> Scalar {
        if self.forward {
            &self.param_at_lo + (offset - &self.lo)
        } else {
            &self.param_at_lo - (offset - &self.lo)
        }
    }
}

/// A piecewise-linear self-map of a tree, linear on each basic interval of its
/// breakpoint set. No invariance of the breakpoints is assumed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlMap {
    tree: MetricTree,
    partition: Vec<TreePoint>,
    images: Vec<TreePoint>,
    intervals: Vec<BasicInterval>,
    image_arcs: Vec<Arc>,
    slopes: Vec<Scalar>,
    edge_index: Vec<Vec<EdgePiece>>,
    point_index: HashMap<TreePoint, usize>,
}

impl PlMap {
    pub fn new(tree: MetricTree, partition: Vec<TreePoint>, images: Vec<TreePoint>) -> Result<Self> {
        if partition.len() != images.len() {
            return Err(Error::Validation(format!(
                "{} partition points but {} images",
                partition.len(),
                images.len()
            )));
        }
        let mut point_index = HashMap::new();
        for (i, p) in partition.iter().enumerate() {
            tree.check_point(p)?;
            if point_index.insert(p.clone(), i).is_some() {
                return Err(Error::Validation(format!(
                    "partition point {} listed twice",
                    tree.describe(p)
                )));
            }
        }
        for y in &images {
            tree.check_point(y)?;
        }
        for v in 0..tree.vertex_count() {
            if tree.degree(v) != 2 && !point_index.contains_key(&TreePoint::Vertex(v)) {
                let kind = if tree.degree(v) == 1 {
                    "endpoint"
                } else {
                    "branch point"
                };
                return Err(Error::Validation(format!(
                    "partition misses {kind} {}",
                    tree.vertex_name(v)
                )));
            }
        }
        let mut intervals = Vec::new();
        for comp in tree.components_minus(&partition)? {
            if comp.boundary.len() != 2 {
                return Err(Error::Validation(
                    "a partition component is not bounded by two points".into(),
                ));
            }
            let a = point_index[&comp.boundary[0]];
            let b = point_index[&comp.boundary[1]];
            let mut arc = tree.path(&partition[a], &partition[b])?;
            let key = min_piece(&arc);
            let (mut start, mut end) = (a, b);
            if key.from > key.to {
                arc = arc.reversed();
                std::mem::swap(&mut start, &mut end);
            }
            if arc.length().is_zero() {
                return Err(Error::Validation("zero-length basic interval".into()));
            }
            intervals.push(BasicInterval { start, end, arc });
        }
        intervals.sort_by(|x, y| {
            let (kx, ky) = (min_piece(&x.arc), min_piece(&y.arc));
            (kx.edge, kx.lo().clone()).cmp(&(ky.edge, ky.lo().clone()))
        });
        let mut image_arcs = Vec::with_capacity(intervals.len());
        let mut slopes = Vec::with_capacity(intervals.len());
        for iv in &intervals {
            let arc = tree.path(&images[iv.start], &images[iv.end])?;
            slopes.push(arc.length() / iv.length());
            image_arcs.push(arc);
        }
        let mut edge_index = vec![Vec::new(); tree.edges().len()];
        for (i, iv) in intervals.iter().enumerate() {
            let mut acc = Scalar::zero();
            for seg in &iv.arc.segments {
                let forward = seg.from <= seg.to;
                let param_at_lo = if forward {
                    acc.clone()
                } else {
                    &acc + seg.length()
                };
                edge_index[seg.edge].push(EdgePiece {
                    lo: seg.lo().clone(),
                    hi: seg.hi().clone(),
                    interval: i,
                    param_at_lo,
                    forward,
                });
                acc += seg.length();
            }
        }
        for pieces in &mut edge_index {
            pieces.sort_by(|a, b| a.lo.cmp(&b.lo));
        }
        Ok(PlMap {
            tree,
            partition,
            images,
            intervals,
            image_arcs,
            slopes,
            edge_index,
            point_index,
        })
    }

    pub fn tree(&self) -> &MetricTree {
        &self.tree
    }

    pub fn partition(&self) -> &[TreePoint] {
        &self.partition
    }

    pub fn images(&self) -> &[TreePoint] {
        &self.images
    }

    pub fn intervals(&self) -> &[BasicInterval] {
        &self.intervals
    }

    pub fn interval(&self, i: usize) -> &BasicInterval {
        &self.intervals[i]
    }

    pub fn image_arc(&self, i: usize) -> &Arc {
        &self.image_arcs[i]
    }

    pub fn slope(&self, i: usize) -> &Scalar {
        &self.slopes[i]
    }

    pub fn partition_index(&self, p: &TreePoint) -> Option<usize> {
        self.point_index.get(p).copied()
    }

    /// Largest slope; a Lipschitz constant of the map.
    pub fn lipschitz(&self) -> Scalar {
        self.slopes.iter().max().cloned().unwrap_or_else(Scalar::zero)
    }

    /// Basic interval containing `x` and its arc-length parameter there.
    /// Partition points resolve to one of their adjacent intervals.
    pub fn locate(&self, x: &TreePoint) -> Option<(usize, Scalar)> {
        let edges: Vec<usize> = match x {
            TreePoint::Edge { edge, .. } => vec![*edge],
            TreePoint::Vertex(v) => self.tree.incident_edges(*v).to_vec(),
        };
        for e in edges {
            let o = self.tree.offset_on_edge(x, e)?;
            for piece in &self.edge_index[e] {
                if piece.lo <= o && o <= piece.hi {
                    return Some((piece.interval, piece.param(&o)));
                }
            }
        }
        None
    }

    /// Image of the point at parameter `s` of interval `i`.
    pub fn eval_at(&self, i: usize, s: &Scalar) -> TreePoint {
        self.image_arcs[i].point_at(&self.tree, &(&self.slopes[i] * s))
    }

    pub fn eval(&self, x: &TreePoint) -> Result<TreePoint> {
        self.tree.check_point(x)?;
        if let Some(&k) = self.point_index.get(x) {
            return Ok(self.images[k].clone());
        }
        let (i, s) = self
            .locate(x)
            .ok_or_else(|| Error::InvalidPoint(self.tree.describe(x)))?;
        Ok(self.eval_at(i, &s))
    }

    pub fn iterate(&self, x: &TreePoint, n: usize) -> Result<TreePoint> {
        let mut y = x.clone();
        for _ in 0..n {
            y = self.eval(&y)?;
        }
        Ok(y)
    }

    /// Points of interval `i` mapped to `y`; the whole interval when the piece
    /// is constant at `y`.
    pub fn preimages_in(&self, i: usize, y: &TreePoint) -> PiecePreimage {
        let arc = &self.image_arcs[i];
        if self.slopes[i].is_zero() {
            return if &arc.start == y {
                PiecePreimage::Whole
            } else {
                PiecePreimage::None
            };
        }
        match arc.locate(&self.tree, y) {
            Some(t) => PiecePreimage::Point(
                self.intervals[i]
                    .arc
                    .point_at(&self.tree, &(t / &self.slopes[i])),
            ),
            None => PiecePreimage::None,
        }
    }

    /// Finite preimage set of `y`, ignoring intervals that are constant at `y`.
    pub fn preimages(&self, y: &TreePoint) -> BTreeSet<TreePoint> {
        let mut out = BTreeSet::new();
        for i in 0..self.intervals.len() {
            if let PiecePreimage::Point(x) = self.preimages_in(i, y) {
                out.insert(x);
            }
        }
        out
    }

    /// Splits an arc into maximal pieces lying in single basic intervals, as
    /// `(interval, s0, s1)` with interval parameters listed in arc order.
    pub fn decompose_arc(&self, arc: &Arc) -> Vec<(usize, Scalar, Scalar)> {
        let mut out: Vec<(usize, Scalar, Scalar)> = Vec::new();
        for seg in &arc.segments {
            let forward = seg.from <= seg.to;
            let mut hits: Vec<(usize, Scalar, Scalar)> = Vec::new();
            for piece in &self.edge_index[seg.edge] {
                let lo = scalar::max(&piece.lo, seg.lo());
                let hi = scalar::min(&piece.hi, seg.hi());
                if lo < hi {
                    let (a, b) = if forward { (lo, hi) } else { (hi, lo) };
                    hits.push((piece.interval, piece.param(&a), piece.param(&b)));
                }
            }
            if !forward {
                hits.reverse();
            }
            for h in hits {
                match out.last_mut() {
                    Some(last) if last.0 == h.0 && last.2 == h.1 => last.2 = h.2,
                    _ => out.push(h),
                }
            }
        }
        out
    }

    /// Sup distance to another map on the same tree. Both maps are linear on
    /// every piece of the common refinement and the distance between two
    /// constant-speed geodesics in a tree is convex, so the sup is a max over
    /// the union of both partitions.
    pub fn sup_distance(&self, other: &PlMap) -> Result<Scalar> {
        if self.tree != other.tree {
            return Err(Error::Domain("maps live on different trees".into()));
        }
        let mut best = Scalar::zero();
        for p in self.partition.iter().chain(other.partition.iter()) {
            let d = self.tree.distance(&self.eval(p)?, &other.eval(p)?);
            if d > best {
                best = d;
            }
        }
        Ok(best)
    }

    /// `self ∘ other`, linear on pieces cut at `other`'s partition and at the
    /// `other`-preimages of `self`'s partition.
    pub fn compose(&self, other: &PlMap) -> Result<PlMap> {
        if self.tree != other.tree {
            return Err(Error::Domain("maps live on different trees".into()));
        }
        let mut pts: BTreeSet<TreePoint> = other.partition.iter().cloned().collect();
        for p in &self.partition {
            pts.extend(other.preimages(p));
        }
        let partition: Vec<TreePoint> = pts.into_iter().collect();
        let images = partition
            .iter()
            .map(|p| self.eval(&other.eval(p)?))
            .collect::<Result<Vec<_>>>()?;
        PlMap::new(self.tree.clone(), partition, images)
    }
}

impl PlMap {
    /// `true` when the image arc of `[a, b]` under `self` does not match `sub_arc`
    /// carried back through `emb`.
    fn path_image_differs(&self, a: &TreePoint, b: &TreePoint, sub_arc: &Arc, emb: &Embedding) -> bool {
        let fa = self.eval(a).ok();
        let fb = self.eval(b).ok();
        fa.as_ref() != Some(&emb.to_full(&sub_arc.start)) || fb.as_ref() != Some(&emb.to_full(&sub_arc.end))
    }
}

/// Preimage of a point inside one basic interval.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PiecePreimage {
    None,
    Point(TreePoint),
    Whole,
}

fn min_piece(arc: &Arc) -> &Segment {
    arc.segments
        .iter()
        .min_by(|a, b| (a.edge, a.lo()).cmp(&(b.edge, b.lo())))
        .expect("nondegenerate arc")
}

/// A `P`-Markov, `P`-linear map: a [`PlMap`] with `f(P) ⊆ P`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarkovMap {
    pl: PlMap,
    image_index: Vec<usize>,
}

impl std::ops::Deref for MarkovMap {
    type Target = PlMap;
    fn deref(&self) -> &PlMap {
        &self.pl
    }
}

impl MarkovMap {
    pub fn new(tree: MetricTree, partition: Vec<TreePoint>, images: Vec<TreePoint>) -> Result<Self> {
        let pl = PlMap::new(tree, partition, images)?;
        let image_index = pl
            .images
            .iter()
            .map(|y| {
                pl.partition_index(y).ok_or_else(|| {
                    Error::Validation(format!(
                        "image {} is not a partition point",
                        pl.tree.describe(y)
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MarkovMap { pl, image_index })
    }

    pub fn from_pl(pl: PlMap) -> Result<Self> {
        MarkovMap::new(pl.tree, pl.partition, pl.images)
    }

    pub fn as_pl(&self) -> &PlMap {
        &self.pl
    }

    /// Partition index of `f(P[k])`.
    pub fn image_index(&self, k: usize) -> usize {
        self.image_index[k]
    }

    pub fn interval_count(&self) -> usize {
        self.pl.intervals.len()
    }

    /// Adds the forward orbits of `extra` to the partition. Fails when an orbit
    /// has not closed up after `cap` new points.
    pub fn refine_with_cap(&self, extra: &[TreePoint], cap: usize) -> Result<MarkovMap> {
        let mut partition = self.pl.partition.clone();
        let mut known: BTreeSet<TreePoint> = partition.iter().cloned().collect();
        for x in extra {
            self.pl.tree.check_point(x)?;
            let mut y = x.clone();
            let mut added = 0usize;
            while known.insert(y.clone()) {
                partition.push(y.clone());
                added += 1;
                if added > cap {
                    return Err(Error::RefinementDiverges(self.pl.tree.describe(x), cap));
                }
                y = self.pl.eval(&y)?;
            }
        }
        self.with_partition(partition)
    }

    pub fn refine(&self, extra: &[TreePoint]) -> Result<MarkovMap> {
        self.refine_with_cap(extra, 4096)
    }

    /// Same map on a finer partition; the new points must map into it.
    pub fn with_partition(&self, partition: Vec<TreePoint>) -> Result<MarkovMap> {
        let images = partition
            .iter()
            .map(|p| self.pl.eval(p))
            .collect::<Result<Vec<_>>>()?;
        MarkovMap::new(self.pl.tree.clone(), partition, images)
    }

    /// Adds the preimages of partition points lying in interval `i`. The result
    /// is the same map, still Markov, with `i` cut into shorter pieces.
    pub fn refine_interval(&self, i: usize) -> Result<MarkovMap> {
        let mut partition = self.pl.partition.clone();
        let mut known: BTreeSet<TreePoint> = partition.iter().cloned().collect();
        for p in &self.pl.partition {
            if let PiecePreimage::Point(x) = self.pl.preimages_in(i, p) {
                if known.insert(x.clone()) {
                    partition.push(x);
                }
            }
        }
        self.with_partition(partition)
    }

    pub fn sup_distance(&self, other: &MarkovMap) -> Result<Scalar> {
        self.pl.sup_distance(&other.pl)
    }

    /// `g ∘ f ∘ g⁻¹`. The union of both partitions must be `f`-invariant.
    pub fn conjugate(&self, g: &PlHomeomorphism) -> Result<MarkovMap> {
        if g.map().tree != self.pl.tree {
            return Err(Error::Domain("homeomorphism lives on another tree".into()));
        }
        let mut p_prime: BTreeSet<TreePoint> = self.pl.partition.iter().cloned().collect();
        p_prime.extend(g.map().partition.iter().cloned());
        for p in &p_prime {
            let y = self.pl.eval(p)?;
            if !p_prime.contains(&y) {
                return Err(Error::Precondition(format!(
                    "breakpoint {} of the conjugacy is not mapped into the joint partition",
                    self.pl.tree.describe(p)
                )));
            }
        }
        let mut q0 = p_prime.clone();
        for p in &p_prime {
            q0.extend(self.pl.preimages(p));
        }
        let mut partition = Vec::with_capacity(q0.len());
        let mut images = Vec::with_capacity(q0.len());
        for q in &q0 {
            partition.push(g.apply(q)?);
            images.push(g.apply(&self.pl.eval(q)?)?);
        }
        MarkovMap::new(self.pl.tree.clone(), partition, images)
    }

    /// `f^n` as a Markov map on the `n`-fold preimage partition.
    pub fn power(&self, n: usize) -> Result<MarkovMap> {
        let mut acc = self.pl.clone();
        for _ in 1..n.max(1) {
            acc = self.pl.compose(&acc)?;
        }
        if n == 0 {
            let partition = self.pl.partition.clone();
            return MarkovMap::new(self.pl.tree.clone(), partition.clone(), partition);
        }
        // compose keeps Markov since f(P) ⊆ P and preimages of P map into P
        let partition = acc.partition.clone();
        let images = acc.images.clone();
        let mut pts: BTreeSet<TreePoint> = partition.iter().cloned().collect();
        let missing: Vec<TreePoint> = images.iter().filter(|y| !pts.contains(*y)).cloned().collect();
        if missing.is_empty() {
            return MarkovMap::new(self.pl.tree.clone(), partition, images);
        }
        pts.extend(missing);
        let partition: Vec<TreePoint> = pts.into_iter().collect();
        let images = partition
            .iter()
            .map(|p| acc.eval(p))
            .collect::<Result<Vec<_>>>()?;
        MarkovMap::new(self.pl.tree.clone(), partition, images)
    }

    /// The map on the invariant subtree spanned by `edges`.
    pub fn restrict(&self, edges: &BTreeSet<usize>) -> Result<(MarkovMap, Embedding)> {
        let (sub, emb) = self.pl.tree.subtree(edges)?;
        let mut partition = Vec::new();
        let mut images = Vec::new();
        for (p, y) in self.pl.partition.iter().zip(&self.pl.images) {
            if let Some(q) = emb.to_sub(p) {
                let fy = emb.to_sub(y).ok_or_else(|| {
                    Error::Domain(format!(
                        "subtree is not invariant: {} leaves it",
                        self.pl.tree.describe(p)
                    ))
                })?;
                partition.push(q);
                images.push(fy);
            }
        }
        let g = MarkovMap::new(sub, partition, images)?;
        for i in 0..g.interval_count() {
            let a = emb.to_full(&g.interval(i).arc.start);
            let b = emb.to_full(&g.interval(i).arc.end);
            if self.pl.path_image_differs(&a, &b, g.image_arc(i), &emb) {
                return Err(Error::Domain("subtree is not invariant".into()));
            }
        }
        Ok((g, emb))
    }

    /// Replaces the map on an embedded subtree by `g`; the rest is unchanged.
    pub fn replace_on(&self, emb: &Embedding, g: &MarkovMap) -> Result<MarkovMap> {
        let mut partition = Vec::new();
        let mut images = Vec::new();
        for (p, y) in self.pl.partition.iter().zip(&self.pl.images) {
            if emb.to_sub(p).is_none() {
                partition.push(p.clone());
                images.push(y.clone());
            }
        }
        for (p, y) in g.partition().iter().zip(g.images()) {
            partition.push(emb.to_full(p));
            images.push(emb.to_full(y));
        }
        MarkovMap::new(self.pl.tree.clone(), partition, images)
    }

    /// The basic interval with endpoint `p` whose other endpoint lies on `within`
    /// (an arc starting at `p`).
    pub fn adjacent_interval(&self, p: &TreePoint, within: &Arc) -> Option<usize> {
        let k = self.pl.partition_index(p)?;
        self.pl.intervals.iter().position(|iv| {
            let other = if iv.start == k {
                &iv.arc.end
            } else if iv.end == k {
                &iv.arc.start
            } else {
                return false;
            };
            within.contains(&self.pl.tree, other)
        })
    }

    /// Basic intervals having `p` as an endpoint.
    pub fn intervals_at(&self, p: &TreePoint) -> Vec<usize> {
        match self.pl.partition_index(p) {
            None => Vec::new(),
            Some(k) => (0..self.interval_count())
                .filter(|&i| self.pl.intervals[i].start == k || self.pl.intervals[i].end == k)
                .collect(),
        }
    }

    pub fn identity(tree: MetricTree) -> Result<MarkovMap> {
        let partition: Vec<TreePoint> = (0..tree.vertex_count())
            .filter(|&v| tree.degree(v) != 2)
            .map(TreePoint::Vertex)
            .collect();
        MarkovMap::new(tree, partition.clone(), partition)
    }
}

/// A piecewise-linear homeomorphism with its inverse.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlHomeomorphism {
    forward: PlMap,
    inverse: PlMap,
}

impl PlHomeomorphism {
    pub fn new(tree: MetricTree, breakpoints: Vec<TreePoint>, images: Vec<TreePoint>) -> Result<Self> {
        let forward = PlMap::new(tree.clone(), breakpoints, images)?;
        let bad = |msg: &str| Error::InvalidHomeomorphism(msg.to_string());
        let distinct: BTreeSet<&TreePoint> = forward.images.iter().collect();
        if distinct.len() != forward.images.len() {
            return Err(bad("two breakpoints share an image"));
        }
        if forward.slopes.iter().any(|s| s.is_zero()) {
            return Err(bad("a piece is constant"));
        }
        let total: Scalar = forward.image_arcs.iter().map(Arc::length).sum();
        let covered = Subtree {
            segments: forward
                .image_arcs
                .iter()
                .flat_map(|a| a.segments.iter().cloned())
                .collect(),
            points: Vec::new(),
        };
        if total != tree.total_length() || !covered.same_set(&tree, &Subtree::whole(&tree)) {
            return Err(bad("image pieces do not tile the tree"));
        }
        for (k, y) in forward.images.iter().enumerate() {
            for (i, iv) in forward.intervals.iter().enumerate() {
                if iv.start == k || iv.end == k {
                    continue;
                }
                let arc = &forward.image_arcs[i];
                if let Some(t) = arc.locate(&tree, y) {
                    if t.is_positive() && t < arc.length() {
                        return Err(bad("a breakpoint lands inside another piece"));
                    }
                }
            }
        }
        let inverse = PlMap::new(tree, forward.images.clone(), forward.partition.clone())
            .map_err(|e| Error::InvalidHomeomorphism(e.to_string()))?;
        Ok(PlHomeomorphism { forward, inverse })
    }

    pub fn identity(tree: MetricTree) -> Result<Self> {
        let pts: Vec<TreePoint> = (0..tree.vertex_count())
            .filter(|&v| tree.degree(v) != 2)
            .map(TreePoint::Vertex)
            .collect();
        PlHomeomorphism::new(tree, pts.clone(), pts)
    }

    pub fn map(&self) -> &PlMap {
        &self.forward
    }

    pub fn inverse(&self) -> &PlMap {
        &self.inverse
    }

    pub fn apply(&self, x: &TreePoint) -> Result<TreePoint> {
        self.forward.eval(x)
    }

    pub fn apply_inverse(&self, y: &TreePoint) -> Result<TreePoint> {
        self.inverse.eval(y)
    }
}

/// A closed subset recorded in interval coordinates: parameter ranges inside
/// basic intervals plus isolated points.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Region {
    pub pieces: Vec<(usize, Scalar, Scalar)>,
    pub points: BTreeSet<TreePoint>,
}

impl Region {
    pub fn interval_piece(i: usize, s0: Scalar, s1: Scalar) -> Self {
        Region {
            pieces: vec![(i, s0, s1)],
            points: BTreeSet::new(),
        }
        .normalized()
    }

    pub fn from_subtree(f: &PlMap, set: &Subtree) -> Self {
        let mut out = Region::default();
        for seg in &set.segments {
            let arc = Arc {
                start: f.tree.point(seg.edge, seg.from.clone()).expect("segment on tree"),
                end: f.tree.point(seg.edge, seg.to.clone()).expect("segment on tree"),
                segments: vec![seg.clone()],
            };
            out.pieces.extend(f.decompose_arc(&arc));
        }
        out.points.extend(set.points.iter().cloned());
        out.normalized()
    }

    /// Sorted ranges with `s0 < s1`, overlaps merged; degenerate ranges kept as points only
    /// when no range covers them.
    pub fn normalized(mut self) -> Self {
        let mut per: BTreeMap<usize, Vec<(Scalar, Scalar)>> = BTreeMap::new();
        for (i, a, b) in self.pieces.drain(..) {
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            per.entry(i).or_default().push((a, b));
        }
        let mut pieces = Vec::new();
        for (i, mut ranges) in per {
            ranges.sort();
            let mut merged: Vec<(Scalar, Scalar)> = Vec::new();
            for (a, b) in ranges {
                match merged.last_mut() {
                    Some(last) if a <= last.1 => {
                        if b > last.1 {
                            last.1 = b;
                        }
                    }
                    _ => merged.push((a, b)),
                }
            }
            pieces.extend(merged.into_iter().map(|(a, b)| (i, a, b)));
        }
        self.pieces = pieces;
        self
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty() && self.points.is_empty()
    }

    /// Total length of the nondegenerate part.
    pub fn measure(&self) -> Scalar {
        self.pieces.iter().map(|(_, a, b)| (b - a).abs()).sum()
    }

    /// Image under `f` (exact, as a region).
    pub fn image(&self, f: &PlMap) -> Region {
        let mut out = Region::default();
        for (i, s0, s1) in &self.pieces {
            let lam = f.slope(*i);
            if lam.is_zero() || s0 == s1 {
                out.points.insert(f.eval_at(*i, s0));
                continue;
            }
            let sub = f
                .image_arc(*i)
                .sub_arc(f.tree(), &(lam * s0), &(lam * s1));
            let parts = f.decompose_arc(&sub);
            if parts.is_empty() {
                out.points.insert(sub.start.clone());
            }
            out.pieces.extend(parts);
        }
        for p in &self.points {
            out.points.insert(f.eval(p).expect("region points lie on the tree"));
        }
        let mut out = out.normalized();
        let tree = f.tree();
        let as_set = out.to_subtree(f);
        let covered: BTreeSet<TreePoint> = out
            .points
            .iter()
            .filter(|p| {
                Subtree {
                    segments: as_set.segments.clone(),
                    points: Vec::new(),
                }
                .contains(tree, p)
            })
            .cloned()
            .collect();
        out.points.retain(|p| !covered.contains(p));
        out
    }

    /// `true` when the nondegenerate parts overlap in a set of positive length.
    pub fn overlaps(&self, other: &Region) -> bool {
        self.pieces.iter().any(|(i, a, b)| {
            other
                .pieces
                .iter()
                .any(|(j, c, d)| i == j && scalar::max(a, c) < scalar::min(b, d))
        })
    }

    pub fn to_subtree(&self, f: &PlMap) -> Subtree {
        let mut out = Subtree::default();
        for (i, a, b) in &self.pieces {
            let arc = f.interval(*i).arc.sub_arc(f.tree(), a, b);
            if arc.segments.is_empty() {
                out.points.push(arc.start);
            } else {
                out.segments.extend(arc.segments);
            }
        }
        out.points.extend(self.points.iter().cloned());
        out
    }
}
