//! The covering (Markov) graph of a Markov map and the decisions read off it.

use std::fmt;

use num_integer::Integer;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::markov::MarkovMap;

/// Directed graph on basic intervals: `I -> J` iff `J ⊆ f(I)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoveringGraph {
    adj: Vec<Vec<usize>>,
    matrix: Vec<Vec<u8>>,
}

impl CoveringGraph {
    pub fn build(f: &MarkovMap) -> Self {
        let n = f.interval_count();
        let mut matrix = vec![vec![0u8; n]; n];
        for (i, row) in matrix.iter_mut().enumerate() {
            if f.slope(i).is_zero() {
                continue;
            }
            for (j, s0, s1) in f.decompose_arc(f.image_arc(i)) {
                let (lo, hi) = if s0 <= s1 { (s0, s1) } else { (s1, s0) };
                if lo.is_zero() && hi == f.interval(j).length() {
                    row[j] = 1;
                }
            }
        }
        CoveringGraph::from_matrix(matrix)
    }

    pub fn from_matrix(matrix: Vec<Vec<u8>>) -> Self {
        let adj = matrix
            .iter()
            .map(|row| (0..row.len()).filter(|&j| row[j] != 0).collect())
            .collect();
        CoveringGraph { adj, matrix }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut matrix = vec![vec![0u8; n]; n];
        for &(a, b) in edges {
            matrix[a][b] = 1;
        }
        CoveringGraph::from_matrix(matrix)
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn successors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.matrix[i][j] != 0
    }

    pub fn matrix(&self) -> &[Vec<u8>] {
        &self.matrix
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.iter().map(move |&j| (i, j)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    /// Subgraph induced on `vertices`, reindexed in the given order.
    pub fn induced(&self, vertices: &[usize]) -> CoveringGraph {
        let matrix = vertices
            .iter()
            .map(|&a| vertices.iter().map(|&b| self.matrix[a][b]).collect())
            .collect();
        CoveringGraph::from_matrix(matrix)
    }

    /// Strongly connected components in order of their smallest vertex.
    pub fn sccs(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut rev = vec![Vec::new(); n];
        for (i, s) in self.adj.iter().enumerate() {
            for &j in s {
                rev[j].push(i);
            }
        }
        // Kosaraju: finishing order on the graph, then sweep the reverse graph.
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        for root in 0..n {
            if seen[root] {
                continue;
            }
            seen[root] = true;
            let mut stack = vec![(root, 0usize)];
            while let Some((v, k)) = stack.pop() {
                if k < self.adj[v].len() {
                    stack.push((v, k + 1));
                    let w = self.adj[v][k];
                    if !seen[w] {
                        seen[w] = true;
                        stack.push((w, 0));
                    }
                } else {
                    order.push(v);
                }
            }
        }
        let mut comp = vec![usize::MAX; n];
        let mut comps: Vec<Vec<usize>> = Vec::new();
        for &root in order.iter().rev() {
            if comp[root] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut members = vec![root];
            comp[root] = id;
            let mut stack = vec![root];
            while let Some(v) = stack.pop() {
                for &w in &rev[v] {
                    if comp[w] == usize::MAX {
                        comp[w] = id;
                        members.push(w);
                        stack.push(w);
                    }
                }
            }
            members.sort_unstable();
            comps.push(members);
        }
        comps.sort();
        comps
    }

    /// One component containing every vertex and at least one edge.
    pub fn is_strongly_connected(&self) -> bool {
        !self.is_empty() && self.edge_count() > 0 && self.sccs().len() == 1
    }

    /// A single cycle through all vertices with no other edges.
    pub fn is_cyclic_permutation(&self) -> bool {
        let n = self.len();
        let mut indeg = vec![0usize; n];
        for s in &self.adj {
            if s.len() != 1 {
                return false;
            }
            indeg[s[0]] += 1;
        }
        indeg.iter().all(|&d| d == 1) && self.is_strongly_connected()
    }

    /// Gcd of cycle lengths of a strongly connected graph.
    pub fn period(&self) -> Result<usize> {
        if !self.is_strongly_connected() {
            return Err(Error::Domain("graph is not strongly connected".into()));
        }
        let n = self.len();
        let mut level = vec![usize::MAX; n];
        level[0] = 0;
        let mut queue = std::collections::VecDeque::from([0usize]);
        while let Some(v) = queue.pop_front() {
            for &w in &self.adj[v] {
                if level[w] == usize::MAX {
                    level[w] = level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        let mut g = 0usize;
        for (u, v) in self.edges() {
            let diff = (level[u] as i64 + 1 - level[v] as i64).unsigned_abs() as usize;
            g = g.gcd(&diff);
        }
        Ok(g)
    }

    /// Least `N` with every entry of the `N`-th adjacency power positive.
    pub fn primitivity_horizon(&self) -> Option<usize> {
        let n = self.len();
        if n == 0 {
            return None;
        }
        let words = n.div_ceil(64);
        let full: Vec<u64> = (0..words)
            .map(|w| {
                let bits = (n - 64 * w).min(64);
                if bits == 64 {
                    u64::MAX
                } else {
                    (1u64 << bits) - 1
                }
            })
            .collect();
        // rows of A^k as bitsets; A^{k+1}[v] is the union of A^k[u] over successors u
        let mut power: Vec<Vec<u64>> = (0..n)
            .map(|v| {
                let mut row = vec![0u64; words];
                for &w in &self.adj[v] {
                    row[w / 64] |= 1 << (w % 64);
                }
                row
            })
            .collect();
        let bound = (n - 1) * (n - 1) + 1;
        for k in 1..=bound {
            if power.iter().all(|r| r == &full) {
                return Some(k);
            }
            power = (0..n)
                .map(|v| {
                    let mut row = vec![0u64; words];
                    for &u in &self.adj[v] {
                        for (x, y) in row.iter_mut().zip(&power[u]) {
                            *x |= y;
                        }
                    }
                    row
                })
                .collect();
        }
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    NotTransitive,
    /// Transitive, with `f^period` not transitive on the whole tree.
    Transitive { period: usize },
    /// Transitive with aperiodic graph; on trees this is totally transitive and mixing.
    Mixing,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::NotTransitive => write!(f, "not transitive"),
            Verdict::Transitive { period } => write!(f, "transitive with period {period}"),
            Verdict::Mixing => write!(f, "mixing"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Classification {
    pub sccs: Vec<Vec<usize>>,
    pub period: Option<usize>,
    pub horizon: Option<usize>,
    pub cyclic_permutation: bool,
    pub verdict: Verdict,
}

impl Classification {
    pub fn is_transitive(&self) -> bool {
        self.verdict != Verdict::NotTransitive
    }

    pub fn is_totally_transitive(&self) -> bool {
        self.verdict == Verdict::Mixing
    }

    pub fn is_mixing(&self) -> bool {
        self.verdict == Verdict::Mixing
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sccs: Vec<String> = self
            .sccs
            .iter()
            .map(|c| {
                let names: Vec<String> = c.iter().map(|i| format!("I{i}")).collect();
                format!("{{{}}}", names.join(","))
            })
            .collect();
        writeln!(f, "sccs: {}", sccs.join(" "))?;
        match self.period {
            Some(p) => writeln!(f, "period: {p}")?,
            None => writeln!(f, "period: none")?,
        }
        match self.horizon {
            Some(h) => writeln!(f, "horizon: {h}")?,
            None => writeln!(f, "horizon: none")?,
        }
        writeln!(f, "verdict: {}", self.verdict)
    }
}

pub fn classify_graph(g: &CoveringGraph) -> Classification {
    let sccs = g.sccs();
    let connected = g.is_strongly_connected();
    let period = if connected { g.period().ok() } else { None };
    let cyclic_permutation = g.is_cyclic_permutation();
    let horizon = if connected && period == Some(1) {
        g.primitivity_horizon()
    } else {
        None
    };
    let verdict = match (connected && !cyclic_permutation, period) {
        (false, _) => Verdict::NotTransitive,
        (true, Some(1)) => Verdict::Mixing,
        (true, Some(p)) => Verdict::Transitive { period: p },
        (true, None) => Verdict::NotTransitive,
    };
    Classification {
        sccs,
        period,
        horizon: if verdict == Verdict::Mixing { horizon } else { None },
        cyclic_permutation,
        verdict,
    }
}

pub fn classify(f: &MarkovMap) -> Classification {
    classify_graph(&CoveringGraph::build(f))
}

/// Transitivity decision with the strongly connected components as witness.
pub fn is_transitive(f: &MarkovMap) -> (bool, Vec<Vec<usize>>) {
    let c = classify(f);
    (c.is_transitive(), c.sccs)
}

/// `I<i> -> I<j>` lines.
pub fn dump(g: &CoveringGraph) -> String {
    let mut out = String::new();
    for (i, j) in g.edges() {
        out.push_str(&format!("I{i} -> I{j}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, ratio, Scalar};
    use crate::tree::MetricTree;

    fn unit_map(parts: &[(Scalar, Scalar)]) -> MarkovMap {
        let t = MetricTree::interval(int(1));
        let partition = parts.iter().map(|(x, _)| t.point(0, x.clone()).unwrap()).collect();
        let images = parts.iter().map(|(_, y)| t.point(0, y.clone()).unwrap()).collect();
        MarkovMap::new(t, partition, images).unwrap()
    }

    #[test]
    fn graph_examples() {
        let tent = unit_map(&[(int(0), int(0)), (ratio(1, 2), int(1)), (int(1), int(0))]);
        let g = CoveringGraph::build(&tent);
        assert_eq!(g.len(), 2);
        assert_eq!(g.edge_count(), 4);
        let three = unit_map(&[
            (int(0), int(0)),
            (ratio(1, 3), int(1)),
            (ratio(2, 3), int(0)),
            (int(1), int(1)),
        ]);
        assert_eq!(CoveringGraph::build(&three).edge_count(), 9);
        let id = unit_map(&[(int(0), int(0)), (ratio(1, 2), ratio(1, 2)), (int(1), int(1))]);
        assert_eq!(CoveringGraph::build(&id).edges(), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn transitivity_examples() {
        let tent = unit_map(&[(int(0), int(0)), (ratio(1, 2), int(1)), (int(1), int(0))]);
        assert!(is_transitive(&tent).0);
        let id = unit_map(&[(int(0), int(0)), (int(1), int(1))]);
        assert!(!is_transitive(&id).0);
        let swap = unit_map(&[(int(0), int(1)), (ratio(1, 2), ratio(1, 2)), (int(1), int(0))]);
        let c = classify(&swap);
        assert!(c.cyclic_permutation);
        assert_eq!(c.verdict, Verdict::NotTransitive);
    }

    #[test]
    fn period_examples() {
        let tent = unit_map(&[(int(0), int(0)), (ratio(1, 2), int(1)), (int(1), int(0))]);
        assert_eq!(CoveringGraph::build(&tent).period().unwrap(), 1);
        assert_eq!(CoveringGraph::from_edges(2, &[(0, 1), (1, 0)]).period().unwrap(), 2);
        assert!(CoveringGraph::from_edges(2, &[(0, 1)]).period().is_err());
        let g = CoveringGraph::from_edges(4, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 1)]);
        // cycles of length 3 and 3
        assert_eq!(g.period().unwrap(), 3);
    }

    #[test]
    fn classification_examples() {
        let tent = unit_map(&[(int(0), int(0)), (ratio(1, 2), int(1)), (int(1), int(0))]);
        let c = classify(&tent);
        assert_eq!(c.verdict, Verdict::Mixing);
        assert_eq!(c.horizon, Some(1));
        let three = unit_map(&[
            (int(0), int(0)),
            (ratio(1, 3), int(1)),
            (ratio(2, 3), int(0)),
            (int(1), int(1)),
        ]);
        assert_eq!(classify(&three).horizon, Some(1));
        let pair = unit_map(&[
            (int(0), ratio(1, 2)),
            (ratio(1, 4), int(1)),
            (ratio(1, 2), ratio(1, 2)),
            (ratio(3, 4), int(0)),
            (int(1), ratio(1, 2)),
        ]);
        assert_eq!(classify(&pair).verdict, Verdict::Transitive { period: 2 });
    }

    #[test]
    fn horizon_matches_wielandt_extremal() {
        // Wielandt graph on 4 vertices reaches the (n-1)^2+1 bound
        let g = CoveringGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (3, 1)]);
        assert_eq!(g.primitivity_horizon(), Some(10));
    }
}
