//! Words over pairs of positive integers and the rewriting map `σ` that
//! describes how branch points move in the endpoint dendrite.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::markov::{MarkovMap, Region};
use crate::scalar::int;
use crate::tree::{MetricTree, Subtree, TreePoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymbolPair {
    pub n: u64,
    pub j: u64,
}

impl SymbolPair {
    pub fn new(n: u64, j: u64) -> Result<Self> {
        if n == 0 || j == 0 {
            return Err(Error::Domain("pair entries must be positive".into()));
        }
        Ok(SymbolPair { n, j })
    }
}

/// A finite word of pairs; the empty word indexes the central branch point.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymbolWord(pub Vec<SymbolPair>);

impl SymbolWord {
    pub fn empty() -> Self {
        SymbolWord(Vec::new())
    }

    /// From `(n, j)` tuples; every entry must be positive.
    pub fn from_pairs(pairs: &[(u64, u64)]) -> Result<Self> {
        pairs
            .iter()
            .map(|&(n, j)| SymbolPair::new(n, j))
            .collect::<Result<Vec<_>>>()
            .map(SymbolWord)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `self` repeated `times` times.
    pub fn power(&self, times: usize) -> Self {
        SymbolWord(self.0.repeat(times))
    }

    pub fn concat(&self, other: &SymbolWord) -> Self {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        SymbolWord(v)
    }

    pub fn starts_with(&self, prefix: &SymbolWord) -> bool {
        self.0.starts_with(&prefix.0)
    }

    pub fn max_entry(&self) -> u64 {
        self.0.iter().map(|p| p.n.max(p.j)).max().unwrap_or(0)
    }
}

impl fmt::Display for SymbolWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "-");
        }
        for p in &self.0 {
            write!(f, "({},{})", p.n, p.j)?;
        }
        Ok(())
    }
}

impl FromStr for SymbolWord {
    type Err = Error;

    /// `(n,j)(n,j)...`, or `-` for the empty word. Whitespace is ignored.
    fn from_str(s: &str) -> Result<Self> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if s == "-" {
            return Ok(SymbolWord::empty());
        }
        let bad = || Error::Parse {
            line: 1,
            msg: format!("malformed word {s:?}"),
        };
        if s.is_empty() {
            return Err(bad());
        }
        let mut pairs = Vec::new();
        let mut rest = s.as_str();
        while !rest.is_empty() {
            let body = rest.strip_prefix('(').ok_or_else(bad)?;
            let close = body.find(')').ok_or_else(bad)?;
            let (n, j) = body[..close].split_once(',').ok_or_else(bad)?;
            let n: u64 = n.parse().map_err(|_| bad())?;
            let j: u64 = j.parse().map_err(|_| bad())?;
            pairs.push(SymbolPair::new(n, j).map_err(|_| bad())?);
            rest = &body[close + 1..];
        }
        Ok(SymbolWord(pairs))
    }
}

/// One step of `σ`, in place.
pub fn sigma_in_place(w: &mut Vec<SymbolPair>) {
    let Some(head) = w.first().copied() else {
        return;
    };
    if head.n > 1 {
        w[0].n -= 1;
    } else if w.len() == 1 {
        w.clear();
    } else {
        w.remove(0);
        w[0].n += head.j - 1;
    }
}

pub fn sigma(w: &SymbolWord) -> SymbolWord {
    let mut v = w.0.clone();
    sigma_in_place(&mut v);
    SymbolWord(v)
}

pub fn sigma_iter(w: &SymbolWord, steps: u64) -> SymbolWord {
    let mut v = w.0.clone();
    for _ in 0..steps {
        if v.is_empty() {
            break;
        }
        sigma_in_place(&mut v);
    }
    SymbolWord(v)
}

/// `m = Σ (n_i + j_i) - k`.
pub fn collapse_time(w: &SymbolWord) -> Result<u64> {
    if w.is_empty() {
        return Err(Error::Domain("collapse time of the empty word is undefined".into()));
    }
    Ok(w.0.iter().map(|p| p.n + p.j).sum::<u64>() - w.len() as u64)
}

/// Least `l` with `σ^l(w) = ∅`.
pub fn first_empty(w: &SymbolWord) -> u64 {
    let mut v = w.0.clone();
    let mut l = 0;
    while !v.is_empty() {
        sigma_in_place(&mut v);
        l += 1;
    }
    l
}

/// `σ^m(w) = ∅` with `m` the collapse time.
pub fn verify_collapse(w: &SymbolWord) -> Result<bool> {
    let m = collapse_time(w)?;
    Ok(first_empty(w) <= m)
}

/// `σ^m(w^{n+1}) = w^n` with `m` the collapse time of `w`.
pub fn periodic_endpoint_check(w: &SymbolWord, n: usize) -> Result<bool> {
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    let m = collapse_time(w)?;
    Ok(sigma_iter(&w.power(n + 1), m) == w.power(n))
}

/// Every nonempty word with length `<= max_len` and entries `<= max_entry`,
/// visited without allocation per word.
pub fn for_each_in_box<F: FnMut(&[SymbolPair])>(max_len: usize, max_entry: u64, mut visit: F) {
    if max_entry == 0 {
        return;
    }
    for len in 1..=max_len {
        let mut w = vec![SymbolPair { n: 1, j: 1 }; len];
        loop {
            visit(&w);
            // odometer over (n_1, j_1, ..., n_len, j_len)
            let mut pos = 2 * len;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                let slot = if pos % 2 == 0 { &mut w[pos / 2].n } else { &mut w[pos / 2].j };
                if *slot < max_entry {
                    *slot += 1;
                    break;
                }
                *slot = 1;
                if pos == 0 {
                    pos = usize::MAX;
                    break;
                }
            }
            if pos == usize::MAX {
                break;
            }
        }
    }
}

/// Words in the box that fail the collapse identity.
pub fn collapse_failures(max_len: usize, max_entry: u64) -> (usize, Vec<SymbolWord>) {
    let mut count = 0;
    let mut bad = Vec::new();
    let mut buf = Vec::with_capacity(max_len);
    for_each_in_box(max_len, max_entry, |w| {
        count += 1;
        let m: u64 = w.iter().map(|p| p.n + p.j).sum::<u64>() - w.len() as u64;
        buf.clear();
        buf.extend_from_slice(w);
        let mut steps = 0;
        while !buf.is_empty() && steps < m {
            sigma_in_place(&mut buf);
            steps += 1;
        }
        if !buf.is_empty() {
            bad.push(SymbolWord(w.to_vec()));
        }
    });
    (count, bad)
}

/// Preimages of `w` under `σ` with entries at most `bound`.
pub fn sigma_preimages(w: &SymbolWord, bound: u64) -> Vec<SymbolWord> {
    let mut out = Vec::new();
    match w.0.first() {
        None => {
            out.push(SymbolWord::empty());
            out.extend((1..=bound).map(|j| SymbolWord(vec![SymbolPair { n: 1, j }])));
        }
        Some(head) => {
            if head.n < bound {
                let mut v = w.0.clone();
                v[0].n += 1;
                out.push(SymbolWord(v));
            }
            for j1 in 1..=head.n.min(bound) {
                let mut v = vec![SymbolPair { n: 1, j: j1 }];
                v.push(SymbolPair {
                    n: head.n - j1 + 1,
                    j: head.j,
                });
                v.extend_from_slice(&w.0[1..]);
                out.push(SymbolWord(v));
            }
        }
    }
    out
}

/// Words of length `<= depth` with entries `<= depth`, the empty word included.
pub fn universe(depth: u64) -> Vec<SymbolWord> {
    let mut out = vec![SymbolWord::empty()];
    for_each_in_box(depth as usize, depth, |w| out.push(SymbolWord(w.to_vec())));
    out
}

/// Checks that `σ^m` maps the words extending `w` onto the finite universe
/// of depth `depth`: every word there has an `m`-fold preimage starting with `w`,
/// found by backward enumeration with bounded entries.
pub fn region_exactness(w: &SymbolWord, depth: u64) -> Result<bool> {
    let m = collapse_time(w)?;
    let bound = w.0.iter().map(|p| p.n + p.j).sum::<u64>() + depth + 1;
    for target in universe(depth) {
        let mut level: BTreeSet<SymbolWord> = BTreeSet::from([target.clone()]);
        for _ in 0..m {
            let mut next = BTreeSet::new();
            for v in &level {
                for p in sigma_preimages(v, bound) {
                    // a preimage chain ending in the region only ever grows
                    // the word, so words longer than needed are dropped
                    if p.len() <= w.len() + target.len() {
                        next.insert(p);
                    }
                }
            }
            level = next;
        }
        if !level.iter().any(|g| g.starts_with(w)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Finite piece of the endpoint dendrite: branch points `b_α` for a set of
/// words closed under `σ` and prefixes, the beams carrying them, and the
/// stage map sending each beam arc linearly onto its image arc.
#[derive(Clone, Debug)]
pub struct Realization {
    pub map: MarkovMap,
    pub branch: BTreeMap<SymbolWord, usize>,
    /// Tip vertex of beam `m` of the star at `b_α`.
    pub tips: BTreeMap<(SymbolWord, u64), usize>,
}

impl Realization {
    pub fn vertex(&self, w: &SymbolWord) -> Option<TreePoint> {
        self.branch.get(w).map(|&v| TreePoint::Vertex(v))
    }

    /// The arc `[b_∅, b_α]` as a subtree.
    pub fn arc_to(&self, w: &SymbolWord) -> Result<Subtree> {
        let tree = self.map.tree();
        let v = self.vertex(w).ok_or_else(|| Error::Domain(format!("{w} is not realized")))?;
        Ok(Subtree::from_arc(&tree.path(&TreePoint::Vertex(0), &v)?))
    }

    /// `F^steps([b_∅, b_α])` as a region.
    pub fn arc_image(&self, w: &SymbolWord, steps: u64) -> Result<Region> {
        let mut r = Region::from_subtree(self.map.as_pl(), &self.arc_to(w)?);
        for _ in 0..steps {
            r = r.image(self.map.as_pl());
        }
        Ok(r)
    }
}

/// Image of the tip of beam `m` at `b_α`, as a tip key or the center.
fn tip_image(alpha: &SymbolWord, m: u64) -> Option<(SymbolWord, u64)> {
    match alpha.0.as_slice() {
        [] if m == 1 => None,
        [] => Some((SymbolWord::empty(), m - 1)),
        [p] if p.n == 1 => Some((SymbolWord::empty(), p.j + m - 1)),
        _ => Some((sigma(alpha), m)),
    }
}

/// Builds the finite realization generated by the words of the box
/// `{length <= max_len, entries <= max_entry}`.
pub fn realize(max_len: usize, max_entry: u64) -> Result<Realization> {
    let mut words: BTreeSet<SymbolWord> = BTreeSet::from([SymbolWord::empty()]);
    let mut todo: Vec<SymbolWord> = Vec::new();
    for_each_in_box(max_len, max_entry, |w| todo.push(SymbolWord(w.to_vec())));
    while let Some(w) = todo.pop() {
        if !words.insert(w.clone()) {
            continue;
        }
        todo.push(sigma(&w));
        let mut prefix = w.0.clone();
        prefix.pop();
        todo.push(SymbolWord(prefix));
    }
    // beams (α, m) with the j-indices of the points on them
    let mut beams: BTreeMap<(SymbolWord, u64), BTreeSet<u64>> = BTreeMap::new();
    for w in &words {
        if let Some((last, parent)) = w.0.split_last() {
            beams
                .entry((SymbolWord(parent.to_vec()), last.n))
                .or_default()
                .insert(last.j);
        }
    }
    let mut pending: Vec<(SymbolWord, u64)> = beams.keys().cloned().collect();
    while let Some((a, m)) = pending.pop() {
        if let Some(key) = tip_image(&a, m) {
            if !beams.contains_key(&key) {
                beams.insert(key.clone(), BTreeSet::new());
                pending.push(key);
            }
        }
    }

    let mut names = Vec::new();
    let mut branch = BTreeMap::new();
    for w in &words {
        branch.insert(w.clone(), names.len());
        names.push(if w.is_empty() { "b".to_string() } else { format!("b{w}") });
    }
    let mut tips = BTreeMap::new();
    let mut edges = Vec::new();
    for ((a, m), js) in &beams {
        let tip = names.len();
        names.push(format!("t{a}{m}"));
        tips.insert((a.clone(), *m), tip);
        let mut prev = branch[a];
        for &j in js {
            let mut w = a.0.clone();
            w.push(SymbolPair { n: *m, j });
            let v = branch[&SymbolWord(w)];
            edges.push((format!("{}-{}", names[prev], names[v]), prev, v, int(1)));
            prev = v;
        }
        edges.push((format!("{}-{}", names[prev], names[tip]), prev, tip, int(1)));
    }
    let tree = MetricTree::new("endpoint dendrite stage", names, edges)?;
    let mut partition = Vec::new();
    let mut images = Vec::new();
    for (w, &v) in &branch {
        partition.push(TreePoint::Vertex(v));
        images.push(TreePoint::Vertex(branch[&sigma(w)]));
    }
    for ((a, m), &v) in &tips {
        partition.push(TreePoint::Vertex(v));
        images.push(match tip_image(a, *m) {
            Some(key) => TreePoint::Vertex(tips[&key]),
            None => TreePoint::Vertex(0),
        });
    }
    let map = MarkovMap::new(tree, partition, images)?;
    Ok(Realization { map, branch, tips })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> SymbolWord {
        s.parse().unwrap()
    }

    #[test]
    fn sigma_cases() {
        assert_eq!(sigma(&w("(1,1)")), SymbolWord::empty());
        assert_eq!(sigma(&w("(3,2)")), w("(2,2)"));
        assert_eq!(sigma(&w("(1,2)(3,4)")), w("(4,4)"));
        assert_eq!(sigma(&SymbolWord::empty()), SymbolWord::empty());
    }

    #[test]
    fn collapse_times() {
        assert_eq!(collapse_time(&w("(1,1)")).unwrap(), 1);
        assert_eq!(collapse_time(&w("(3,2)")).unwrap(), 4);
        assert_eq!(collapse_time(&w("(2,1)(1,3)")).unwrap(), 5);
        assert!(collapse_time(&SymbolWord::empty()).is_err());
    }

    #[test]
    fn collapse_reaches_empty_early() {
        // (3,2) -> (2,2) -> (1,2) -> ∅ in 3 < 4 steps
        assert_eq!(first_empty(&w("(3,2)")), 3);
        assert!(verify_collapse(&w("(3,2)")).unwrap());
        assert!(verify_collapse(&w("(1,1)")).unwrap());
    }

    #[test]
    fn periodic_endpoint_examples() {
        assert!(periodic_endpoint_check(&w("(1,1)"), 1).unwrap());
        assert!(periodic_endpoint_check(&w("(2,3)"), 2).unwrap());
        assert!(periodic_endpoint_check(&SymbolWord::empty(), 1).is_err());
    }

    #[test]
    fn parse_and_render() {
        assert_eq!(w("(1,2)(3,4)").to_string(), "(1,2)(3,4)");
        assert_eq!(w("-"), SymbolWord::empty());
        assert_eq!(w(" (1, 2) ").to_string(), "(1,2)");
        for bad in ["", "(0,1)", "(1,2", "1,2", "(1,2)x", "(a,1)"] {
            assert!(bad.parse::<SymbolWord>().is_err(), "{bad}");
        }
    }

    #[test]
    fn box_enumeration_counts() {
        let mut n = 0;
        for_each_in_box(2, 3, |_| n += 1);
        assert_eq!(n, 9 + 81);
    }

    #[test]
    fn preimages_map_back() {
        for target in universe(2) {
            for p in sigma_preimages(&target, 6) {
                assert_eq!(sigma(&p), target, "{p}");
            }
        }
    }

    #[test]
    fn region_examples() {
        assert!(region_exactness(&w("(1,1)"), 2).unwrap());
        assert!(region_exactness(&w("(2,2)"), 2).unwrap());
        assert!(region_exactness(&w("(1,1)"), 0).unwrap());
    }

    #[test]
    fn realization_moves_branch_points_by_sigma() {
        let r = realize(2, 2).unwrap();
        for (word, &v) in &r.branch {
            let image = r.map.eval(&TreePoint::Vertex(v)).unwrap();
            assert_eq!(image, r.vertex(&sigma(word)).unwrap());
        }
    }

    #[test]
    fn realized_arcs_collapse_to_center() {
        let r = realize(2, 2).unwrap();
        let f = r.map.as_pl();
        let center = Subtree::point(TreePoint::Vertex(0));
        for_each_in_box(2, 2, |pairs| {
            let word = SymbolWord(pairs.to_vec());
            let m = collapse_time(&word).unwrap();
            let img = r.arc_image(&word, m).unwrap().to_subtree(f);
            assert!(img.same_set(f.tree(), &center), "{word}");
        });
    }
}
