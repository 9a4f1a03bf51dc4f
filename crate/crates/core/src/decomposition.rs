//! Regular periodic decompositions built from cyclic classes of the covering graph.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::graph::{classify, classify_graph, CoveringGraph};
use crate::markov::{MarkovMap, Region};
use crate::tree::Subtree;

/// `D_0, ..., D_{m-1}`, each a union of closed basic intervals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decomposition {
    pub pieces: Vec<BTreeSet<usize>>,
}

impl Decomposition {
    pub fn trivial(f: &MarkovMap) -> Self {
        Decomposition {
            pieces: vec![(0..f.interval_count()).collect()],
        }
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn piece_region(&self, f: &MarkovMap, i: usize) -> Region {
        Region {
            pieces: self.pieces[i]
                .iter()
                .map(|&j| (j, num_traits::Zero::zero(), f.interval(j).length()))
                .collect(),
            points: BTreeSet::new(),
        }
        .normalized()
    }

    pub fn piece_set(&self, f: &MarkovMap, i: usize) -> Subtree {
        self.piece_region(f, i).to_subtree(f.as_pl())
    }

    /// `D<i>: I<j1>,I<j2>,...` lines.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.pieces.iter().enumerate() {
            let names: Vec<String> = p.iter().map(|j| format!("I{j}")).collect();
            out.push_str(&format!("D{i}: {}\n", names.join(",")));
        }
        out
    }
}

/// Cyclic classes of the covering graph of a transitive map, starting with
/// the class of `I0`.
pub fn terminal_decomposition(f: &MarkovMap) -> Result<Decomposition> {
    let c = classify(f);
    if !c.is_transitive() {
        return Err(Error::Domain("map is not transitive".into()));
    }
    let g = CoveringGraph::build(f);
    let m = c.period.expect("transitive maps have a period");
    let n = g.len();
    let mut level = vec![usize::MAX; n];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        for &w in g.successors(v) {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                queue.push_back(w);
            }
        }
    }
    let mut pieces = vec![BTreeSet::new(); m];
    for (v, l) in level.into_iter().enumerate() {
        pieces[l % m].insert(v);
    }
    let d = Decomposition { pieces };
    for i in 0..m {
        if !image_matches(f, &d, i, 1)? {
            return Err(Error::Validation(format!("f(D{i}) differs from D{}", (i + 1) % m)));
        }
    }
    Ok(d)
}

fn image_matches(f: &MarkovMap, d: &Decomposition, i: usize, l: usize) -> Result<bool> {
    let m = d.len();
    let mut r = d.piece_region(f, i);
    for _ in 0..l {
        r = r.image(f.as_pl());
    }
    let target = d.piece_set(f, (i + l) % m);
    Ok(r.to_subtree(f.as_pl()).same_set(f.tree(), &target))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DecompositionReport {
    pub cover: bool,
    pub regular_closed: bool,
    pub finite_intersections: bool,
    pub shift: bool,
    pub pieces_transitive: bool,
    pub pieces_primitive: bool,
    pub failures: Vec<String>,
}

impl DecompositionReport {
    pub fn all_pass(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for DecompositionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = |b: bool| if b { "ok" } else { "FAIL" };
        writeln!(f, "cover: {}", mark(self.cover))?;
        writeln!(f, "regular closed: {}", mark(self.regular_closed))?;
        writeln!(f, "finite intersections: {}", mark(self.finite_intersections))?;
        writeln!(f, "shift: {}", mark(self.shift))?;
        writeln!(f, "pieces transitive: {}", mark(self.pieces_transitive))?;
        writeln!(f, "pieces primitive: {}", mark(self.pieces_primitive))?;
        for msg in &self.failures {
            writeln!(f, "failure: {msg}")?;
        }
        Ok(())
    }
}

/// Checks the decomposition properties; never fails, failures are listed.
pub fn verify_decomposition(f: &MarkovMap, d: &Decomposition) -> DecompositionReport {
    let mut rep = DecompositionReport::default();
    let m = d.len();
    let n = f.interval_count();

    let all: BTreeSet<usize> = d.pieces.iter().flatten().copied().collect();
    rep.cover = m > 0 && all == (0..n).collect();
    if !rep.cover {
        rep.failures.push("pieces do not cover the tree".into());
    }

    rep.regular_closed = d.pieces.iter().all(|p| !p.is_empty() && p.iter().all(|&j| j < n));
    if !rep.regular_closed {
        rep.failures.push("a piece is empty or names an unknown interval".into());
    }

    rep.finite_intersections = true;
    for i in 0..m {
        for j in (i + 1)..m {
            if d.pieces[i].intersection(&d.pieces[j]).next().is_some() {
                rep.finite_intersections = false;
                rep.failures.push(format!("D{i} and D{j} share a basic interval"));
            }
        }
    }

    rep.shift = rep.regular_closed;
    if rep.regular_closed {
        'outer: for l in 1..=2 * m {
            for i in 0..m {
                if !image_matches(f, d, i, l).unwrap_or(false) {
                    rep.shift = false;
                    rep.failures.push(format!("f^{l}(D{i}) differs from D{}", (i + l) % m));
                    break 'outer;
                }
            }
        }
    }

    // f^m is linear only on the m-fold preimage partition, so its graph is
    // built there and split by the piece holding each fine interval
    rep.pieces_transitive = rep.regular_closed;
    rep.pieces_primitive = rep.regular_closed;
    if rep.regular_closed {
        let fine = match f.power(m) {
            Ok(p) => p,
            Err(e) => {
                rep.pieces_transitive = false;
                rep.pieces_primitive = false;
                rep.failures.push(format!("f^{m} could not be built: {e}"));
                return rep;
            }
        };
        let g = CoveringGraph::build(&fine);
        let half = num_rational::BigRational::new(1.into(), 2.into());
        let owner: Vec<usize> = (0..fine.interval_count())
            .map(|k| {
                let iv = fine.interval(k);
                let mid = iv.arc.point_at(fine.tree(), &(iv.length() * &half));
                f.locate(&mid).expect("midpoint on tree").0
            })
            .collect();
        for (i, p) in d.pieces.iter().enumerate() {
            let verts: Vec<usize> = (0..owner.len()).filter(|&k| p.contains(&owner[k])).collect();
            let c = classify_graph(&g.induced(&verts));
            if !c.is_transitive() {
                rep.pieces_transitive = false;
                rep.failures.push(format!("f^{m} is not transitive on D{i}"));
            }
            if c.horizon.is_none() {
                rep.pieces_primitive = false;
                rep.failures.push(format!("f^{m} on D{i} has a non-primitive covering graph"));
            }
        }
    }
    rep
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Refinement {
    /// `containment[i][j]`: `C_i ⊆ D_j`.
    pub containment: Vec<Vec<bool>>,
    /// Number of `C_i` inside each `D_j` when `C` refines `D`.
    pub multiplicity: Option<usize>,
}

impl Refinement {
    pub fn refines(&self) -> bool {
        self.multiplicity.is_some()
    }
}

pub fn refinement_relation(c: &Decomposition, d: &Decomposition) -> Refinement {
    let containment: Vec<Vec<bool>> = c
        .pieces
        .iter()
        .map(|ci| d.pieces.iter().map(|dj| ci.is_subset(dj)).collect())
        .collect();
    let every_inside = containment.iter().all(|row| row.iter().any(|&x| x));
    let (n, m) = (c.len(), d.len());
    let multiplicity = if every_inside && m > 0 && n % m == 0 {
        let k = n / m;
        let counts_ok = (0..m).all(|j| containment.iter().filter(|row| row[j]).count() == k);
        counts_ok.then_some(k)
    } else {
        None
    };
    Refinement {
        containment,
        multiplicity,
    }
}
