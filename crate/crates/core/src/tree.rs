//! Finite metric trees with exact rational edge lengths.
//!
//! A [`MetricTree`] is the finite stand-in for a dendrite. Every location on it
//! is a [`TreePoint`] in canonical form: a point sitting at either end of an
//! edge is always represented by the vertex, so `==` and hashing agree with
//! geometric equality. Distances are taxicab distances along the unique arc.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub name: String,
    pub tail: usize,
    pub head: usize,
    pub length: Scalar,
}

/// A location on a tree.
///
/// `Edge` offsets are measured from the edge tail and always lie strictly
/// between `0` and the edge length.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TreePoint {
    Vertex(usize),
    Edge { edge: usize, offset: Scalar },
}

impl TreePoint {
    pub fn is_vertex(&self) -> bool {
        matches!(self, TreePoint::Vertex(_))
    }
}

/// Order of a point: 1 for endpoints, 2 for ordinary points, `k >= 3` for branch points.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointOrder {
    Endpoint,
    Regular,
    Branch(usize),
}

impl PointOrder {
    pub fn order(self) -> usize {
        match self {
            PointOrder::Endpoint => 1,
            PointOrder::Regular => 2,
            PointOrder::Branch(k) => k,
        }
    }
}

/// A straight piece of an edge between two offsets. `from != to` is not
/// enforced so that degenerate pieces can be carried through computations.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Segment {
    pub edge: usize,
    pub from: Scalar,
    pub to: Scalar,
}

impl Segment {
    pub fn length(&self) -> Scalar {
        (&self.to - &self.from).abs()
    }

    pub fn lo(&self) -> &Scalar {
        if self.from <= self.to {
            &self.from
        } else {
            &self.to
        }
    }

    pub fn hi(&self) -> &Scalar {
        if self.from <= self.to {
            &self.to
        } else {
            &self.from
        }
    }
}

/// The unique arc between two points, stored as the edge pieces it runs along.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Arc {
    pub start: TreePoint,
    pub end: TreePoint,
    pub segments: Vec<Segment>,
}

impl Arc {
    pub fn is_degenerate(&self) -> bool {
        self.start == self.end
    }

    pub fn length(&self) -> Scalar {
        self.segments.iter().map(Segment::length).sum()
    }

    /// The point at arc-length `s` from the start, clamped to the arc.
    pub fn point_at(&self, tree: &MetricTree, s: &Scalar) -> TreePoint {
        if self.segments.is_empty() || !s.is_positive() {
            return self.start.clone();
        }
        let mut acc = Scalar::zero();
        for seg in &self.segments {
            let len = seg.length();
            let next = &acc + &len;
            if s <= &next {
                let along = s - &acc;
                let offset = if seg.from <= seg.to {
                    &seg.from + &along
                } else {
                    &seg.from - &along
                };
                return tree.point_unchecked(seg.edge, offset);
            }
            acc = next;
        }
        self.end.clone()
    }

    /// Arc-length position of `p`, or `None` when `p` is off the arc.
    pub fn locate(&self, tree: &MetricTree, p: &TreePoint) -> Option<Scalar> {
        if p == &self.start {
            return Some(Scalar::zero());
        }
        let mut acc = Scalar::zero();
        for seg in &self.segments {
            if let Some(o) = tree.offset_on_edge(p, seg.edge) {
                if &o >= seg.lo() && &o <= seg.hi() {
                    return Some(&acc + (&o - &seg.from).abs());
                }
            }
            acc += seg.length();
        }
        None
    }

    pub fn contains(&self, tree: &MetricTree, p: &TreePoint) -> bool {
        self.locate(tree, p).is_some()
    }

    pub fn reversed(&self) -> Arc {
        Arc {
            start: self.end.clone(),
            end: self.start.clone(),
            segments: self
                .segments
                .iter()
                .rev()
                .map(|s| Segment {
                    edge: s.edge,
                    from: s.to.clone(),
                    to: s.from.clone(),
                })
                .collect(),
        }
    }

    /// Sub-arc between arc-length positions `s0` and `s1` (either order).
    pub fn sub_arc(&self, tree: &MetricTree, s0: &Scalar, s1: &Scalar) -> Arc {
        let a = self.point_at(tree, s0);
        let b = self.point_at(tree, s1);
        tree.path(&a, &b).expect("points of an arc lie on the tree")
    }
}

/// Shape of a star: a center with `beam_lengths.len()` beams.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StarSpec {
    pub beam_lengths: Vec<Scalar>,
}

impl StarSpec {
    pub fn uniform(beams: usize, length: Scalar) -> Self {
        StarSpec {
            beam_lengths: vec![length; beams],
        }
    }
}

/// A connected component of the tree with finitely many points removed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    /// Cut points on the closure of the component, sorted.
    pub boundary: Vec<TreePoint>,
    /// Edge pieces whose union (minus the boundary) is the component.
    pub segments: Vec<Segment>,
}

/// A closed subset given as finitely many edge pieces plus isolated points.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Subtree {
    pub segments: Vec<Segment>,
    pub points: Vec<TreePoint>,
}

impl Subtree {
    pub fn point(p: TreePoint) -> Self {
        Subtree {
            segments: Vec::new(),
            points: vec![p],
        }
    }

    pub fn from_arc(arc: &Arc) -> Self {
        if arc.segments.is_empty() {
            return Subtree::point(arc.start.clone());
        }
        Subtree {
            segments: arc.segments.clone(),
            points: Vec::new(),
        }
    }

    pub fn whole(tree: &MetricTree) -> Self {
        Subtree {
            segments: tree
                .edges()
                .iter()
                .enumerate()
                .map(|(i, e)| Segment {
                    edge: i,
                    from: Scalar::zero(),
                    to: e.length.clone(),
                })
                .collect(),
            points: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty() && self.points.is_empty()
    }

    pub fn union(&self, other: &Subtree) -> Subtree {
        let mut out = self.clone();
        out.segments.extend(other.segments.iter().cloned());
        out.points.extend(other.points.iter().cloned());
        out
    }

    /// Finite set of points at which every sup over the subtree is attained
    /// for convex functions (segment ends and isolated points).
    pub fn extreme_points(&self, tree: &MetricTree) -> Vec<TreePoint> {
        let mut out: BTreeSet<TreePoint> = self.points.iter().cloned().collect();
        for seg in &self.segments {
            out.insert(tree.point_unchecked(seg.edge, seg.from.clone()));
            out.insert(tree.point_unchecked(seg.edge, seg.to.clone()));
        }
        out.into_iter().collect()
    }

    pub fn contains(&self, tree: &MetricTree, p: &TreePoint) -> bool {
        self.points.contains(p)
            || self.segments.iter().any(|seg| {
                tree.offset_on_edge(p, seg.edge)
                    .is_some_and(|o| &o >= seg.lo() && &o <= seg.hi())
            })
    }

    /// Merged, sorted form: overlapping pieces on an edge are joined and
    /// points covered by pieces dropped. Two subtrees describe the same set
    /// iff their normal forms are equal.
    pub fn normalized(&self, tree: &MetricTree) -> Subtree {
        let mut per_edge: HashMap<usize, Vec<(Scalar, Scalar)>> = HashMap::new();
        let mut extra_points = BTreeSet::new();
        for seg in &self.segments {
            if seg.from == seg.to {
                extra_points.insert(tree.point_unchecked(seg.edge, seg.from.clone()));
            } else {
                per_edge
                    .entry(seg.edge)
                    .or_default()
                    .push((seg.lo().clone(), seg.hi().clone()));
            }
        }
        let mut edges: Vec<usize> = per_edge.keys().copied().collect();
        edges.sort_unstable();
        let mut segments = Vec::new();
        for e in edges {
            let mut ranges = per_edge.remove(&e).unwrap();
            ranges.sort();
            let mut merged: Vec<(Scalar, Scalar)> = Vec::new();
            for (lo, hi) in ranges {
                match merged.last_mut() {
                    Some(last) if lo <= last.1 => {
                        if hi > last.1 {
                            last.1 = hi;
                        }
                    }
                    _ => merged.push((lo, hi)),
                }
            }
            segments.extend(merged.into_iter().map(|(lo, hi)| Segment {
                edge: e,
                from: lo,
                to: hi,
            }));
        }
        let partial = Subtree {
            segments,
            points: Vec::new(),
        };
        let points = self
            .points
            .iter()
            .cloned()
            .chain(extra_points)
            .filter(|p| !partial.contains(tree, p))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Subtree { points, ..partial }
    }

    pub fn same_set(&self, tree: &MetricTree, other: &Subtree) -> bool {
        self.normalized(tree) == other.normalized(tree)
    }

    pub fn is_connected(&self, tree: &MetricTree) -> bool {
        let norm = self.normalized(tree);
        let n = norm.segments.len() + norm.points.len();
        if n == 0 {
            return false;
        }
        // Pieces touch iff one contains an end of the other.
        let pieces: Vec<Subtree> = norm
            .segments
            .iter()
            .map(|s| Subtree {
                segments: vec![s.clone()],
                points: Vec::new(),
            })
            .chain(norm.points.iter().cloned().map(Subtree::point))
            .collect();
        let ends: Vec<Vec<TreePoint>> = pieces.iter().map(|p| p.extreme_points(tree)).collect();
        let mut uf = UnionFind::new(n);
        for i in 0..n {
            for j in (i + 1)..n {
                let touch = ends[i].iter().any(|p| pieces[j].contains(tree, p))
                    || ends[j].iter().any(|p| pieces[i].contains(tree, p));
                if touch {
                    uf.union(i, j);
                }
            }
        }
        (1..n).all(|i| uf.find(i) == uf.find(0))
    }
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub(crate) fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let next = self.parent[c];
            self.parent[c] = r;
            c = next;
        }
        r
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Records where an edge was split so that points on the old tree can be
/// carried over to the new one.
#[derive(Clone, Debug)]
pub struct EdgeSplit {
    pub edge: usize,
    pub offset: Scalar,
    pub vertex: usize,
    pub new_edge: usize,
}

impl EdgeSplit {
    pub fn apply(&self, p: &TreePoint) -> TreePoint {
        match p {
            TreePoint::Edge { edge, offset } if *edge == self.edge => {
                if offset < &self.offset {
                    p.clone()
                } else if offset == &self.offset {
                    TreePoint::Vertex(self.vertex)
                } else {
                    TreePoint::Edge {
                        edge: self.new_edge,
                        offset: offset - &self.offset,
                    }
                }
            }
            _ => p.clone(),
        }
    }
}

impl EdgeSplit {
    /// Inverse of [`EdgeSplit::apply`].
    pub fn revert(&self, p: &TreePoint) -> TreePoint {
        match p {
            TreePoint::Vertex(v) if *v == self.vertex => TreePoint::Edge {
                edge: self.edge,
                offset: self.offset.clone(),
            },
            TreePoint::Edge { edge, offset } if *edge == self.new_edge => TreePoint::Edge {
                edge: self.edge,
                offset: offset + &self.offset,
            },
            _ => p.clone(),
        }
    }
}

/// Correspondence between a subtree (built from a set of edges) and the
/// tree it was cut from. Edge orientations and offsets are preserved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Embedding {
    /// Sub-tree vertex index to full-tree vertex index.
    pub vertices: Vec<usize>,
    /// Sub-tree edge index to full-tree edge index.
    pub edges: Vec<usize>,
}

impl Embedding {
    pub fn to_full(&self, p: &TreePoint) -> TreePoint {
        match p {
            TreePoint::Vertex(v) => TreePoint::Vertex(self.vertices[*v]),
            TreePoint::Edge { edge, offset } => TreePoint::Edge {
                edge: self.edges[*edge],
                offset: offset.clone(),
            },
        }
    }

    /// The sub-tree point for a full-tree point, if it lies on the subtree.
    pub fn to_sub(&self, p: &TreePoint) -> Option<TreePoint> {
        match p {
            TreePoint::Vertex(v) => self
                .vertices
                .iter()
                .position(|x| x == v)
                .map(TreePoint::Vertex),
            TreePoint::Edge { edge, offset } => {
                self.edges.iter().position(|x| x == edge).map(|e| TreePoint::Edge {
                    edge: e,
                    offset: offset.clone(),
                })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetricTree {
    name: String,
    vertex_names: Vec<String>,
    edges: Vec<Edge>,
    incident: Vec<Vec<usize>>,
    parent_edge: Vec<Option<usize>>,
    level: Vec<usize>,
    root_distance: Vec<Scalar>,
}

impl MetricTree {
    /// Validates and builds a tree. Edges are `(name, tail, head, length)`
    /// with vertex indices into `vertex_names`.
    pub fn new(
        name: impl Into<String>,
        vertex_names: Vec<String>,
        edges: Vec<(String, usize, usize, Scalar)>,
    ) -> Result<Self> {
        let n = vertex_names.len();
        if n < 2 {
            return Err(Error::Structure("a tree needs at least one edge".into()));
        }
        if edges.len() != n - 1 {
            return Err(Error::Structure(format!(
                "{} vertices need exactly {} edges, got {}",
                n,
                n - 1,
                edges.len()
            )));
        }
        let unique: BTreeSet<&String> = vertex_names.iter().collect();
        if unique.len() != n {
            return Err(Error::Structure("duplicate vertex name".into()));
        }
        let edge_names: BTreeSet<&String> = edges.iter().map(|e| &e.0).collect();
        if edge_names.len() != edges.len() {
            return Err(Error::Structure("duplicate edge name".into()));
        }
        let mut incident = vec![Vec::new(); n];
        let mut built = Vec::with_capacity(edges.len());
        for (i, (ename, tail, head, length)) in edges.into_iter().enumerate() {
            if tail >= n || head >= n {
                return Err(Error::Structure(format!("edge {ename} has an unknown vertex")));
            }
            if tail == head {
                return Err(Error::Structure(format!("edge {ename} is a loop")));
            }
            if !length.is_positive() {
                return Err(Error::Structure(format!("edge {ename} has non-positive length")));
            }
            incident[tail].push(i);
            incident[head].push(i);
            built.push(Edge {
                name: ename,
                tail,
                head,
                length,
            });
        }
        let mut parent_edge = vec![None; n];
        let mut level = vec![usize::MAX; n];
        let mut root_distance = vec![Scalar::zero(); n];
        level[0] = 0;
        let mut stack = vec![0usize];
        while let Some(v) = stack.pop() {
            for &e in &incident[v] {
                let w = if built[e].tail == v {
                    built[e].head
                } else {
                    built[e].tail
                };
                if level[w] == usize::MAX {
                    level[w] = level[v] + 1;
                    parent_edge[w] = Some(e);
                    root_distance[w] = &root_distance[v] + &built[e].length;
                    stack.push(w);
                }
            }
        }
        if level.contains(&usize::MAX) {
            return Err(Error::Structure("tree is not connected".into()));
        }
        Ok(MetricTree {
            name: name.into(),
            vertex_names,
            edges: built,
            incident,
            parent_edge,
            level,
            root_distance,
        })
    }

    /// The interval `[0, length]` as a one-edge tree with vertices `a`, `b`.
    pub fn interval(length: Scalar) -> Self {
        MetricTree::new(
            "interval",
            vec!["a".into(), "b".into()],
            vec![("e".into(), 0, 1, length)],
        )
        .expect("valid interval")
    }

    /// A path with the given edge lengths; vertices `v0..vn`, edges `e0..`.
    pub fn path_graph(lengths: &[Scalar]) -> Result<Self> {
        let names = (0..=lengths.len()).map(|i| format!("v{i}")).collect();
        let edges = lengths
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("e{i}"), i, i + 1, l.clone()))
            .collect();
        MetricTree::new("path", names, edges)
    }

    /// A star with center `c`, tips `t0..`, and beams `b0..` oriented from the center.
    pub fn star(spec: &StarSpec) -> Result<Self> {
        if spec.beam_lengths.is_empty() {
            return Err(Error::Structure("a star needs at least one beam".into()));
        }
        let mut names = vec!["c".to_string()];
        let mut edges = Vec::new();
        for (i, l) in spec.beam_lengths.iter().enumerate() {
            names.push(format!("t{i}"));
            edges.push((format!("b{i}"), 0, i + 1, l.clone()));
        }
        MetricTree::new("star", names, edges)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_names.len()
    }

    pub fn vertex_name(&self, v: usize) -> &str {
        &self.vertex_names[v]
    }

    pub fn vertex_by_name(&self, name: &str) -> Option<usize> {
        self.vertex_names.iter().position(|n| n == name)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn edge_by_name(&self, name: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.name == name)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.incident[v].len()
    }

    pub fn incident_edges(&self, v: usize) -> &[usize] {
        &self.incident[v]
    }

    pub fn total_length(&self) -> Scalar {
        self.edges.iter().map(|e| e.length.clone()).sum()
    }

    pub fn endpoints(&self) -> Vec<usize> {
        (0..self.vertex_count()).filter(|&v| self.degree(v) == 1).collect()
    }

    pub fn branch_points(&self) -> Vec<usize> {
        (0..self.vertex_count()).filter(|&v| self.degree(v) >= 3).collect()
    }

    /// Canonical point at `offset` along edge `edge`.
    pub fn point(&self, edge: usize, offset: Scalar) -> Result<TreePoint> {
        let e = self
            .edges
            .get(edge)
            .ok_or_else(|| Error::InvalidPoint(format!("no edge #{edge}")))?;
        if offset.is_negative() || offset > e.length {
            return Err(Error::InvalidPoint(format!(
                "offset {} outside edge {}",
                scalar::render(&offset),
                e.name
            )));
        }
        Ok(self.point_unchecked(edge, offset))
    }

    pub(crate) fn point_unchecked(&self, edge: usize, offset: Scalar) -> TreePoint {
        let e = &self.edges[edge];
        if offset.is_zero() {
            TreePoint::Vertex(e.tail)
        } else if offset == e.length {
            TreePoint::Vertex(e.head)
        } else {
            TreePoint::Edge { edge, offset }
        }
    }

    pub fn check_point(&self, p: &TreePoint) -> Result<()> {
        match p {
            TreePoint::Vertex(v) if *v < self.vertex_count() => Ok(()),
            TreePoint::Vertex(v) => Err(Error::InvalidPoint(format!("no vertex #{v}"))),
            TreePoint::Edge { edge, offset } => {
                let e = self
                    .edges
                    .get(*edge)
                    .ok_or_else(|| Error::InvalidPoint(format!("no edge #{edge}")))?;
                if offset.is_positive() && offset < &e.length {
                    Ok(())
                } else {
                    Err(Error::InvalidPoint(format!(
                        "offset {} is not strictly inside edge {}",
                        scalar::render(offset),
                        e.name
                    )))
                }
            }
        }
    }

    /// Offset of `p` along `edge` when `p` lies on the closed edge.
    pub fn offset_on_edge(&self, p: &TreePoint, edge: usize) -> Option<Scalar> {
        match p {
            TreePoint::Edge { edge: e, offset } if *e == edge => Some(offset.clone()),
            TreePoint::Edge { .. } => None,
            TreePoint::Vertex(v) => {
                let e = &self.edges[edge];
                if *v == e.tail {
                    Some(Scalar::zero())
                } else if *v == e.head {
                    Some(e.length.clone())
                } else {
                    None
                }
            }
        }
    }

    /// Vertices reachable from `p` without passing another vertex, with distances.
    fn anchors(&self, p: &TreePoint) -> Vec<(usize, Scalar)> {
        match p {
            TreePoint::Vertex(v) => vec![(*v, Scalar::zero())],
            TreePoint::Edge { edge, offset } => {
                let e = &self.edges[*edge];
                vec![(e.tail, offset.clone()), (e.head, &e.length - offset)]
            }
        }
    }

    fn lca(&self, mut u: usize, mut v: usize) -> usize {
        while self.level[u] > self.level[v] {
            u = self.parent_vertex(u);
        }
        while self.level[v] > self.level[u] {
            v = self.parent_vertex(v);
        }
        while u != v {
            u = self.parent_vertex(u);
            v = self.parent_vertex(v);
        }
        u
    }

    fn parent_vertex(&self, v: usize) -> usize {
        let e = &self.edges[self.parent_edge[v].expect("root has no parent")];
        if e.tail == v {
            e.head
        } else {
            e.tail
        }
    }

    pub fn vertex_distance(&self, u: usize, v: usize) -> Scalar {
        let w = self.lca(u, v);
        &self.root_distance[u] + &self.root_distance[v] - Scalar::from_integer(2.into()) * &self.root_distance[w]
    }

    /// Edges along the vertex path from `u` to `v`, in order.
    pub fn vertex_path(&self, u: usize, v: usize) -> Vec<usize> {
        let w = self.lca(u, v);
        let mut up = Vec::new();
        let mut x = u;
        while x != w {
            up.push(self.parent_edge[x].unwrap());
            x = self.parent_vertex(x);
        }
        let mut down = Vec::new();
        let mut y = v;
        while y != w {
            down.push(self.parent_edge[y].unwrap());
            y = self.parent_vertex(y);
        }
        up.extend(down.into_iter().rev());
        up
    }

    /// Taxicab distance between two points.
    pub fn distance(&self, a: &TreePoint, b: &TreePoint) -> Scalar {
        if let TreePoint::Edge { edge, offset } = a {
            if let Some(ob) = self.offset_on_edge(b, *edge) {
                return (offset - ob).abs();
            }
        }
        if let TreePoint::Edge { edge, offset } = b {
            if let Some(oa) = self.offset_on_edge(a, *edge) {
                return (offset - oa).abs();
            }
        }
        let mut best: Option<Scalar> = None;
        for (u, du) in self.anchors(a) {
            for (v, dv) in self.anchors(b) {
                let d = &du + &dv + self.vertex_distance(u, v);
                if best.as_ref().is_none_or(|b| &d < b) {
                    best = Some(d);
                }
            }
        }
        best.unwrap()
    }

    /// The unique arc from `a` to `b`.
    pub fn path(&self, a: &TreePoint, b: &TreePoint) -> Result<Arc> {
        self.check_point(a)?;
        self.check_point(b)?;
        if a == b {
            return Ok(Arc {
                start: a.clone(),
                end: b.clone(),
                segments: Vec::new(),
            });
        }
        for (p, q, flip) in [(a, b, false), (b, a, true)] {
            if let TreePoint::Edge { edge, offset } = p {
                if let Some(oq) = self.offset_on_edge(q, *edge) {
                    let (from, to) = if flip {
                        (oq, offset.clone())
                    } else {
                        (offset.clone(), oq)
                    };
                    return Ok(Arc {
                        start: a.clone(),
                        end: b.clone(),
                        segments: vec![Segment {
                            edge: *edge,
                            from,
                            to,
                        }],
                    });
                }
            }
        }
        let mut best: Option<(Scalar, usize, usize)> = None;
        for (u, du) in self.anchors(a) {
            for (v, dv) in self.anchors(b) {
                let d = &du + &dv + self.vertex_distance(u, v);
                if best.as_ref().is_none_or(|(b, _, _)| &d < b) {
                    best = Some((d, u, v));
                }
            }
        }
        let (_, u, v) = best.unwrap();
        let mut segments = Vec::new();
        if let TreePoint::Edge { edge, offset } = a {
            let e = &self.edges[*edge];
            let to = if u == e.tail {
                Scalar::zero()
            } else {
                e.length.clone()
            };
            segments.push(Segment {
                edge: *edge,
                from: offset.clone(),
                to,
            });
        }
        let mut at = u;
        for edge in self.vertex_path(u, v) {
            let e = &self.edges[edge];
            if e.tail == at {
                segments.push(Segment {
                    edge,
                    from: Scalar::zero(),
                    to: e.length.clone(),
                });
                at = e.head;
            } else {
                segments.push(Segment {
                    edge,
                    from: e.length.clone(),
                    to: Scalar::zero(),
                });
                at = e.tail;
            }
        }
        if let TreePoint::Edge { edge, offset } = b {
            let e = &self.edges[*edge];
            let from = if v == e.tail {
                Scalar::zero()
            } else {
                e.length.clone()
            };
            segments.push(Segment {
                edge: *edge,
                from,
                to: offset.clone(),
            });
        }
        Ok(Arc {
            start: a.clone(),
            end: b.clone(),
            segments,
        })
    }

    pub fn classify_point(&self, p: &TreePoint) -> Result<PointOrder> {
        self.check_point(p)?;
        Ok(match p {
            TreePoint::Edge { .. } => PointOrder::Regular,
            TreePoint::Vertex(v) => match self.degree(*v) {
                1 => PointOrder::Endpoint,
                2 => PointOrder::Regular,
                k => PointOrder::Branch(k),
            },
        })
    }

    /// Distance from `p` to a closed edge piece, with the nearest point.
    fn nearest_on_segment(&self, p: &TreePoint, seg: &Segment) -> (Scalar, TreePoint) {
        if let Some(o) = self.offset_on_edge(p, seg.edge) {
            let clamped = if &o < seg.lo() {
                seg.lo().clone()
            } else if &o > seg.hi() {
                seg.hi().clone()
            } else {
                o.clone()
            };
            let d = (&o - &clamped).abs();
            return (d, self.point_unchecked(seg.edge, clamped));
        }
        let e = &self.edges[seg.edge];
        let via_tail = self.distance(p, &TreePoint::Vertex(e.tail)) + seg.lo();
        let via_head = self.distance(p, &TreePoint::Vertex(e.head)) + (&e.length - seg.hi());
        if via_tail <= via_head {
            (via_tail, self.point_unchecked(seg.edge, seg.lo().clone()))
        } else {
            (via_head, self.point_unchecked(seg.edge, seg.hi().clone()))
        }
    }

    /// Distance from `p` to a nonempty closed set and a nearest point of it.
    pub fn nearest_in(&self, p: &TreePoint, set: &Subtree) -> Result<(Scalar, TreePoint)> {
        if set.is_empty() {
            return Err(Error::Domain("empty subtree".into()));
        }
        let mut best: Option<(Scalar, TreePoint)> = None;
        let candidates = set
            .segments
            .iter()
            .map(|s| self.nearest_on_segment(p, s))
            .chain(set.points.iter().map(|q| (self.distance(p, q), q.clone())));
        for (d, q) in candidates {
            if best.as_ref().is_none_or(|(b, _)| &d < b) {
                best = Some((d, q));
            }
        }
        Ok(best.unwrap())
    }

    /// The first point map onto a subtree: the unique point of `sub` on every
    /// arc from `x` into `sub`.
    pub fn first_point_map(&self, sub: &Subtree, x: &TreePoint) -> Result<TreePoint> {
        self.check_point(x)?;
        if sub.is_empty() || !sub.is_connected(self) {
            return Err(Error::Structure("retraction target is not a subtree".into()));
        }
        Ok(self.nearest_in(x, sub)?.1)
    }

    /// Directed excess `sup_{a in A} d(a, B)`.
    pub fn excess(&self, a: &Subtree, b: &Subtree) -> Result<Scalar> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::Domain("empty subtree".into()));
        }
        let mut best = Scalar::zero();
        for p in a.extreme_points(self) {
            let (d, _) = self.nearest_in(&p, b)?;
            if d > best {
                best = d;
            }
        }
        Ok(best)
    }

    /// Hausdorff distance between two nonempty closed subsets. Distance to a
    /// subtree is convex along edges, so the sups are attained at extreme points.
    pub fn hausdorff_distance(&self, a: &Subtree, b: &Subtree) -> Result<Scalar> {
        let ab = self.excess(a, b)?;
        let ba = self.excess(b, a)?;
        Ok(scalar::max(&ab, &ba))
    }

    /// Diameter of a connected closed subset.
    pub fn diameter(&self, set: &Subtree) -> Scalar {
        let pts = set.extreme_points(self);
        let mut best = Scalar::zero();
        for (i, p) in pts.iter().enumerate() {
            for q in &pts[i + 1..] {
                let d = self.distance(p, q);
                if d > best {
                    best = d;
                }
            }
        }
        best
    }

    /// Connected components of the tree with `cuts` removed.
    pub fn components_minus(&self, cuts: &[TreePoint]) -> Result<Vec<Component>> {
        for c in cuts {
            self.check_point(c)?;
        }
        let cut_set: BTreeSet<&TreePoint> = cuts.iter().collect();
        let mut pieces: Vec<Segment> = Vec::new();
        // first and last piece index per edge
        let mut edge_pieces: Vec<(usize, usize)> = Vec::with_capacity(self.edges.len());
        for (i, e) in self.edges.iter().enumerate() {
            let mut offsets: Vec<Scalar> = cuts
                .iter()
                .filter_map(|c| match c {
                    TreePoint::Edge { edge, offset } if *edge == i => Some(offset.clone()),
                    _ => None,
                })
                .collect();
            offsets.sort();
            offsets.dedup();
            let mut breaks = vec![Scalar::zero()];
            breaks.extend(offsets);
            breaks.push(e.length.clone());
            let first = pieces.len();
            for w in breaks.windows(2) {
                pieces.push(Segment {
                    edge: i,
                    from: w[0].clone(),
                    to: w[1].clone(),
                });
            }
            edge_pieces.push((first, pieces.len() - 1));
        }
        let mut uf = UnionFind::new(pieces.len());
        for v in 0..self.vertex_count() {
            if cut_set.contains(&TreePoint::Vertex(v)) {
                continue;
            }
            let touching: Vec<usize> = self.incident[v]
                .iter()
                .map(|&e| {
                    let (first, last) = edge_pieces[e];
                    if self.edges[e].tail == v {
                        first
                    } else {
                        last
                    }
                })
                .collect();
            for w in touching.windows(2) {
                uf.union(w[0], w[1]);
            }
        }
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut index: HashMap<usize, usize> = HashMap::new();
        for i in 0..pieces.len() {
            let r = uf.find(i);
            let slot = *index.entry(r).or_insert_with(|| {
                groups.push((r, Vec::new()));
                groups.len() - 1
            });
            groups[slot].1.push(i);
        }
        Ok(groups
            .into_iter()
            .map(|(_, members)| {
                let segments: Vec<Segment> = members.iter().map(|&i| pieces[i].clone()).collect();
                let mut boundary = BTreeSet::new();
                for s in &segments {
                    for o in [&s.from, &s.to] {
                        let p = self.point_unchecked(s.edge, o.clone());
                        if cut_set.contains(&p) {
                            boundary.insert(p);
                        }
                    }
                }
                Component {
                    boundary: boundary.into_iter().collect(),
                    segments,
                }
            })
            .collect())
    }

    /// Maximal free arcs: maximal paths whose interior avoids branch points.
    pub fn free_arcs(&self) -> Vec<Arc> {
        let mut used = vec![false; self.edges.len()];
        let mut out = Vec::new();
        for v in 0..self.vertex_count() {
            if self.degree(v) == 2 {
                continue;
            }
            for &first in &self.incident[v] {
                if used[first] {
                    continue;
                }
                let mut at = v;
                let mut e = first;
                loop {
                    used[e] = true;
                    let edge = &self.edges[e];
                    at = if edge.tail == at { edge.head } else { edge.tail };
                    if self.degree(at) != 2 {
                        break;
                    }
                    e = *self.incident[at].iter().find(|&&x| x != e).unwrap();
                }
                out.push(
                    self.path(&TreePoint::Vertex(v), &TreePoint::Vertex(at))
                        .expect("vertices are valid points"),
                );
            }
        }
        out
    }

    /// Cut points witnessing the finite form of the shrinking lemma for
    /// disjoint connected sets: every component of the tree minus these
    /// points has diameter `< eps`, so a family of pairwise disjoint connected
    /// sets with diameter `>= eps` has at most `cuts.len()` members.
    pub fn disjoint_family_cuts(&self, eps: &Scalar) -> Result<Vec<TreePoint>> {
        if !eps.is_positive() {
            return Err(Error::Domain("eps must be positive".into()));
        }
        let mut cuts: Vec<TreePoint> = (0..self.vertex_count())
            .filter(|&v| self.degree(v) >= 2)
            .map(TreePoint::Vertex)
            .collect();
        for (i, e) in self.edges.iter().enumerate() {
            let pieces = (&e.length / eps).floor().to_integer() + 1u32;
            let pieces = Scalar::from_integer(pieces);
            let step = &e.length / &pieces;
            let mut off = step.clone();
            while off < e.length {
                cuts.push(TreePoint::Edge {
                    edge: i,
                    offset: off.clone(),
                });
                off += &step;
            }
        }
        Ok(cuts)
    }

    /// `N(t, eps)`: bound on families of disjoint connected sets of diameter `>= eps`.
    pub fn disjoint_family_bound(&self, eps: &Scalar) -> Result<usize> {
        Ok(self.disjoint_family_cuts(eps)?.len())
    }

    /// The subtree spanned by `edges`, which must be connected.
    pub fn subtree(&self, edges: &BTreeSet<usize>) -> Result<(MetricTree, Embedding)> {
        let mut vertices: Vec<usize> = Vec::new();
        let mut sub_edges = Vec::new();
        let mut edge_ids = Vec::new();
        let mut index = HashMap::new();
        for &e in edges {
            let edge = self
                .edges
                .get(e)
                .ok_or_else(|| Error::Structure(format!("no edge #{e}")))?;
            for v in [edge.tail, edge.head] {
                index.entry(v).or_insert_with(|| {
                    vertices.push(v);
                    vertices.len() - 1
                });
            }
        }
        for &e in edges {
            let edge = &self.edges[e];
            sub_edges.push((edge.name.clone(), index[&edge.tail], index[&edge.head], edge.length.clone()));
            edge_ids.push(e);
        }
        let names = vertices.iter().map(|&v| self.vertex_names[v].clone()).collect();
        let tree = MetricTree::new(self.name.clone(), names, sub_edges)?;
        Ok((
            tree,
            Embedding {
                vertices,
                edges: edge_ids,
            },
        ))
    }

    /// Splits the edge containing the interior point `p`, creating a vertex there.
    pub fn split_edge(&self, p: &TreePoint, vertex_name: &str) -> Result<(MetricTree, EdgeSplit)> {
        let (edge, offset) = match p {
            TreePoint::Edge { edge, offset } => (*edge, offset.clone()),
            TreePoint::Vertex(_) => {
                return Err(Error::InvalidPoint("cannot split at a vertex".into()))
            }
        };
        self.check_point(p)?;
        let mut names = self.vertex_names.clone();
        names.push(vertex_name.to_string());
        let vertex = names.len() - 1;
        let mut edges: Vec<(String, usize, usize, Scalar)> = self
            .edges
            .iter()
            .map(|e| (e.name.clone(), e.tail, e.head, e.length.clone()))
            .collect();
        let old = &self.edges[edge];
        edges[edge] = (old.name.clone(), old.tail, vertex, offset.clone());
        let new_name = self.fresh_edge_name(&old.name);
        edges.push((new_name, vertex, old.head, &old.length - &offset));
        let new_edge = edges.len() - 1;
        let tree = MetricTree::new(self.name.clone(), names, edges)?;
        Ok((
            tree,
            EdgeSplit {
                edge,
                offset,
                vertex,
                new_edge,
            },
        ))
    }

    /// Adds a new leaf edge of length `length` hanging from vertex `at`.
    pub fn add_pendant(
        &self,
        at: usize,
        vertex_name: &str,
        length: Scalar,
    ) -> Result<(MetricTree, usize, usize)> {
        if at >= self.vertex_count() {
            return Err(Error::InvalidPoint(format!("no vertex #{at}")));
        }
        let mut names = self.vertex_names.clone();
        names.push(vertex_name.to_string());
        let vertex = names.len() - 1;
        let mut edges: Vec<(String, usize, usize, Scalar)> = self
            .edges
            .iter()
            .map(|e| (e.name.clone(), e.tail, e.head, e.length.clone()))
            .collect();
        let name = self.fresh_edge_name(&format!("{}-{}", self.vertex_names[at], vertex_name));
        edges.push((name, at, vertex, length));
        let edge = edges.len() - 1;
        Ok((MetricTree::new(self.name.clone(), names, edges)?, vertex, edge))
    }

    pub fn fresh_vertex_name(&self, base: &str) -> String {
        let mut k = 0;
        loop {
            let cand = format!("{base}{k}");
            if self.vertex_by_name(&cand).is_none() {
                return cand;
            }
            k += 1;
        }
    }

    fn fresh_edge_name(&self, base: &str) -> String {
        let mut k = 1;
        loop {
            let cand = format!("{base}.{k}");
            if self.edge_by_name(&cand).is_none() {
                return cand;
            }
            k += 1;
        }
    }

    /// Human-readable `edge:offset` or vertex name.
    pub fn describe(&self, p: &TreePoint) -> String {
        match p {
            TreePoint::Vertex(v) => self.vertex_names[*v].clone(),
            TreePoint::Edge { edge, offset } => {
                format!("{}:{}", self.edges[*edge].name, scalar::render(offset))
            }
        }
    }

    /// `edge:offset` form for any point; vertices use an incident edge.
    pub fn edge_coordinates(&self, p: &TreePoint) -> String {
        match p {
            TreePoint::Edge { .. } => self.describe(p),
            TreePoint::Vertex(v) => {
                let e = self.incident[*v][0];
                let off = self.offset_on_edge(p, e).unwrap();
                format!("{}:{}", self.edges[e].name, scalar::render(&off))
            }
        }
    }
}

impl fmt::Display for PointOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointOrder::Endpoint => write!(f, "endpoint"),
            PointOrder::Regular => write!(f, "cut-point of order 2"),
            PointOrder::Branch(k) => write!(f, "branch point of order {k}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, ratio};

    fn unit_star(n: usize) -> MetricTree {
        MetricTree::star(&StarSpec::uniform(n, int(1))).unwrap()
    }

    fn on(t: &MetricTree, e: usize, o: Scalar) -> TreePoint {
        t.point(e, o).unwrap()
    }

    #[test]
    fn rejects_bad_structure() {
        let names = vec!["a".to_string(), "b".into(), "c".into()];
        let cyc = vec![
            ("x".to_string(), 0, 1, int(1)),
            ("y".to_string(), 1, 0, int(1)),
        ];
        assert!(MetricTree::new("t", names.clone(), cyc).is_err());
        let zero = vec![("x".to_string(), 0, 1, int(0)), ("y".to_string(), 1, 2, int(1))];
        assert!(MetricTree::new("t", names, zero).is_err());
    }

    #[test]
    fn canonical_points() {
        let t = MetricTree::interval(int(1));
        assert_eq!(on(&t, 0, int(0)), TreePoint::Vertex(0));
        assert_eq!(on(&t, 0, int(1)), TreePoint::Vertex(1));
        assert!(t.point(0, int(2)).is_err());
        assert!(t.check_point(&TreePoint::Edge { edge: 0, offset: int(1) }).is_err());
    }

    #[test]
    fn path_examples() {
        let t = MetricTree::interval(int(1));
        let arc = t.path(&TreePoint::Vertex(0), &TreePoint::Vertex(1)).unwrap();
        assert_eq!(arc.length(), int(1));
        let p = on(&t, 0, ratio(1, 3));
        let deg = t.path(&p, &p).unwrap();
        assert!(deg.is_degenerate());
        assert_eq!(deg.length(), int(0));

        let s = unit_star(3);
        let arc = s.path(&TreePoint::Vertex(1), &TreePoint::Vertex(3)).unwrap();
        assert_eq!(arc.length(), int(2));
        assert!(arc.contains(&s, &TreePoint::Vertex(0)));
        assert!(!arc.contains(&s, &TreePoint::Vertex(2)));
    }

    #[test]
    fn arc_point_at_and_locate() {
        let s = unit_star(3);
        let a = on(&s, 0, ratio(1, 2));
        let b = on(&s, 2, ratio(1, 4));
        let arc = s.path(&a, &b).unwrap();
        assert_eq!(arc.length(), ratio(3, 4));
        assert_eq!(arc.point_at(&s, &ratio(1, 2)), TreePoint::Vertex(0));
        assert_eq!(arc.point_at(&s, &ratio(5, 8)), on(&s, 2, ratio(1, 8)));
        assert_eq!(arc.locate(&s, &on(&s, 2, ratio(1, 8))), Some(ratio(5, 8)));
        assert_eq!(arc.reversed().locate(&s, &a), Some(ratio(3, 4)));
    }

    #[test]
    fn classify_examples() {
        let s = unit_star(5);
        assert_eq!(s.classify_point(&TreePoint::Vertex(1)).unwrap(), PointOrder::Endpoint);
        assert_eq!(s.classify_point(&TreePoint::Vertex(0)).unwrap(), PointOrder::Branch(5));
        assert_eq!(
            s.classify_point(&on(&s, 0, ratio(1, 2))).unwrap(),
            PointOrder::Regular
        );
    }

    #[test]
    fn first_point_examples() {
        let t = MetricTree::path_graph(&[int(1), int(1)]).unwrap();
        let ab = Subtree::from_arc(&t.path(&TreePoint::Vertex(0), &TreePoint::Vertex(1)).unwrap());
        assert_eq!(t.first_point_map(&ab, &TreePoint::Vertex(2)).unwrap(), TreePoint::Vertex(1));
        let inside = on(&t, 0, ratio(1, 3));
        assert_eq!(t.first_point_map(&ab, &inside).unwrap(), inside);

        let s = unit_star(3);
        let beam = Subtree::from_arc(&s.path(&TreePoint::Vertex(0), &TreePoint::Vertex(1)).unwrap());
        assert_eq!(s.first_point_map(&beam, &TreePoint::Vertex(2)).unwrap(), TreePoint::Vertex(0));

        let split = Subtree {
            segments: Vec::new(),
            points: vec![TreePoint::Vertex(1), TreePoint::Vertex(2)],
        };
        assert!(matches!(
            s.first_point_map(&split, &TreePoint::Vertex(0)),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn components_examples() {
        let t = MetricTree::interval(int(1));
        assert_eq!(t.components_minus(&[on(&t, 0, ratio(1, 2))]).unwrap().len(), 2);
        let s = unit_star(3);
        let comps = s.components_minus(&[TreePoint::Vertex(0)]).unwrap();
        assert_eq!(comps.len(), 3);
        assert!(comps.iter().all(|c| c.boundary == vec![TreePoint::Vertex(0)]));
        let p = MetricTree::path_graph(&[int(1), int(1), int(1)]).unwrap();
        let comps = p
            .components_minus(&[TreePoint::Vertex(1), TreePoint::Vertex(2)])
            .unwrap();
        assert_eq!(comps.len(), 3);
        assert_eq!(s.components_minus(&[]).unwrap().len(), 1);
    }

    #[test]
    fn free_arc_examples() {
        let t = MetricTree::interval(int(1));
        assert_eq!(t.free_arcs().len(), 1);
        let s = unit_star(3);
        let arcs = s.free_arcs();
        assert_eq!(arcs.len(), 3);
        assert!(arcs.iter().all(|a| a.length() == int(1)));
        let p = MetricTree::path_graph(&[int(1), int(1)]).unwrap();
        let arcs = p.free_arcs();
        assert_eq!(arcs.len(), 1);
        assert_eq!(arcs[0].length(), int(2));
    }

    #[test]
    fn hausdorff_examples() {
        let t = MetricTree::interval(int(1));
        let whole = Subtree::whole(&t);
        assert_eq!(t.hausdorff_distance(&whole, &whole).unwrap(), int(0));
        let half = Subtree::from_arc(&t.path(&TreePoint::Vertex(0), &on(&t, 0, ratio(1, 2))).unwrap());
        assert_eq!(t.hausdorff_distance(&whole, &half).unwrap(), ratio(1, 2));

        let s = unit_star(3);
        let beam = Subtree::from_arc(&s.path(&TreePoint::Vertex(0), &TreePoint::Vertex(1)).unwrap());
        let center = Subtree::point(TreePoint::Vertex(0));
        assert_eq!(s.hausdorff_distance(&beam, &center).unwrap(), int(1));
        assert!(s.hausdorff_distance(&beam, &Subtree::default()).is_err());
    }

    #[test]
    fn split_and_pendant_preserve_geometry() {
        let t = MetricTree::interval(int(1));
        let q = on(&t, 0, ratio(1, 3));
        let (t2, split) = t.split_edge(&q, "q").unwrap();
        assert_eq!(split.apply(&q), TreePoint::Vertex(split.vertex));
        let r = on(&t, 0, ratio(2, 3));
        let r2 = split.apply(&r);
        assert_eq!(t2.distance(&TreePoint::Vertex(0), &r2), ratio(2, 3));
        assert_eq!(split.revert(&r2), r);
        assert_eq!(split.revert(&TreePoint::Vertex(split.vertex)), q);
        let (t3, tip, _) = t2.add_pendant(split.vertex, "tip", int(1)).unwrap();
        assert_eq!(t3.degree(split.vertex), 3);
        assert_eq!(t3.distance(&TreePoint::Vertex(tip), &TreePoint::Vertex(0)), ratio(4, 3));
    }

    #[test]
    fn subtree_embedding_round_trips() {
        let s = unit_star(3);
        let (sub, emb) = s.subtree(&BTreeSet::from([0, 2])).unwrap();
        assert_eq!(sub.vertex_count(), 3);
        let p = on(&s, 2, ratio(1, 3));
        let q = emb.to_sub(&p).unwrap();
        assert_eq!(emb.to_full(&q), p);
        assert_eq!(sub.distance(&q, &emb.to_sub(&TreePoint::Vertex(1)).unwrap()), ratio(4, 3));
        assert!(emb.to_sub(&TreePoint::Vertex(2)).is_none());
        assert!(s.subtree(&BTreeSet::from([])).is_err());
    }

    #[test]
    fn disjoint_bound_small_cases() {
        let t = MetricTree::interval(int(1));
        // pieces of length 1/3 < 1/2: two interior cuts
        assert_eq!(t.disjoint_family_bound(&ratio(1, 2)).unwrap(), 2);
        for c in t.components_minus(&t.disjoint_family_cuts(&ratio(1, 2)).unwrap()).unwrap() {
            let sub = Subtree {
                segments: c.segments.clone(),
                points: vec![],
            };
            assert!(t.diameter(&sub) < ratio(1, 2));
        }
    }
}
