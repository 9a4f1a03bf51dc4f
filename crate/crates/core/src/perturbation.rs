//! Small perturbations of Markov maps that upgrade transitivity to mixing,
//! glue transitive pieces together, and grow trees stage by stage.

use std::collections::BTreeSet;
use std::fmt;

use num_traits::{One, Signed, Zero};

use crate::decomposition::terminal_decomposition;
use crate::error::{Error, Result};
use crate::graph::{classify, classify_graph, CoveringGraph};
use crate::markov::{MarkovMap, Region};
use crate::periodic::{enumerate_periodic, find_periodic_in};
use crate::scalar::{self, int, Scalar};
use crate::tree::{MetricTree, Subtree, TreePoint};

/// Largest period tried when looking for a periodic orbit to cut along.
pub const PERIOD_BUDGET: usize = 48;

/// A constructed map plus the choices made along the way.
#[derive(Clone, Debug)]
pub struct Construction {
    pub map: MarkovMap,
    pub log: Vec<String>,
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in &self.log {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

fn third(x: &Scalar) -> Scalar {
    x / int(3)
}

/// The basic interval with endpoint `p` that starts off along the arc `[p, d]`.
pub fn interval_toward(f: &MarkovMap, p: &TreePoint, d: &TreePoint) -> Option<usize> {
    let tree = f.tree();
    let toward = tree.path(p, d).ok()?;
    if toward.is_degenerate() {
        return None;
    }
    f.intervals_at(p).into_iter().find(|&i| {
        let arc = oriented_from(f, i, p);
        let h = scalar::min(&arc.length(), &toward.length()) / int(2);
        toward.contains(tree, &arc.point_at(tree, &h))
    })
}

/// Arc of interval `i` starting at its endpoint `p`.
fn oriented_from(f: &MarkovMap, i: usize, p: &TreePoint) -> crate::tree::Arc {
    let arc = &f.interval(i).arc;
    if &arc.start == p {
        arc.clone()
    } else {
        arc.reversed()
    }
}

fn other_end(f: &MarkovMap, i: usize, p: &TreePoint) -> TreePoint {
    oriented_from(f, i, p).end
}

/// Refines `f` along a periodic orbit so that the basic interval at `p`
/// toward `d` is shorter than `max_len` and its image shorter than `max_image`.
fn shrink_at(
    f: &MarkovMap,
    p: &TreePoint,
    d: &TreePoint,
    max_len: &Scalar,
    max_image: Option<&Scalar>,
) -> Result<MarkovMap> {
    let j = interval_toward(f, p, d)
        .ok_or_else(|| Error::StageFailure(format!("no basic interval at {}", f.tree().describe(p))))?;
    let len = f.interval(j).length();
    let mut bound = max_len.clone();
    if let Some(m) = max_image {
        let slope = f.slope(j);
        if slope.is_positive() {
            bound = scalar::min(&bound, &(m / slope));
        }
    }
    if len < bound {
        return Ok(f.clone());
    }
    let (a, b) = if &f.interval(j).arc.start == p {
        (Scalar::zero(), bound)
    } else {
        (&len - &bound, len)
    };
    let orbit = find_periodic_in(f, &[(j, a, b)], PERIOD_BUDGET, |_| true).map_err(|_| {
        Error::StageFailure(format!(
            "no periodic orbit of period <= {PERIOD_BUDGET} near {}",
            f.tree().describe(p)
        ))
    })?;
    f.refine(&[orbit.base])
}

/// Turns a transitive map with graph period `> 1` into a mixing map within `eps`
/// that agrees with `f` on its partition.
pub fn totalize(f: &MarkovMap, eps: &Scalar) -> Result<Construction> {
    if !eps.is_positive() {
        return Err(Error::Domain("eps must be positive".into()));
    }
    let c = classify(f);
    if !c.is_transitive() {
        return Err(Error::Domain("map is not transitive".into()));
    }
    if c.is_mixing() {
        return Ok(Construction {
            map: f.clone(),
            log: vec!["already totally transitive; map unchanged".into()],
        });
    }
    let tree = f.tree();
    let d = terminal_decomposition(f)?;
    let mut log = vec![format!("decomposition length {}", d.len())];

    // a fixed point common to all pieces
    let fixed = enumerate_periodic(f, 1)?;
    let p = fixed
        .orbits
        .iter()
        .map(|o| o.base.clone())
        .find(|x| (0..d.len()).all(|i| d.piece_set(f, i).contains(tree, x)))
        .ok_or_else(|| Error::StageFailure("no fixed point common to all pieces".into()))?;
    let f1 = f.refine(std::slice::from_ref(&p))?;
    let q = f1
        .preimages(&p)
        .into_iter()
        .find(|x| x != &p)
        .ok_or_else(|| Error::StageFailure("the fixed point has no other preimage".into()))?;
    let f1 = f1.refine(std::slice::from_ref(&q))?;
    log.push(format!("p = {}", tree.describe(&p)));
    log.push(format!("q = {}", tree.describe(&q)));

    let qt = f1.intervals_at(&q)[0];
    let t_far = other_end(&f1, qt, &q);
    let d1 = terminal_decomposition(&f1)?;
    let c0 = (0..d1.len())
        .find(|&i| d1.pieces[i].contains(&qt))
        .expect("pieces cover every interval");
    let i0 = f1
        .intervals_at(&p)
        .into_iter()
        .find(|i| d1.pieces[c0].contains(i))
        .ok_or_else(|| Error::StageFailure("no basic interval at p in the piece of [q, t]".into()))?;
    let z_far = other_end(&f1, i0, &p);

    let budget = third(eps);
    let f2 = shrink_at(&f1, &q, &t_far, &budget, Some(&budget))?;
    let f3 = shrink_at(&f2, &p, &z_far, &budget, None)?;

    let qt = interval_toward(&f3, &q, &t_far).expect("interval at q survives refinement");
    let arc = oriented_from(&f3, qt, &q);
    let t = arc.end.clone();
    let i0 = interval_toward(&f3, &p, &z_far).expect("interval at p survives refinement");
    let z0 = other_end(&f3, i0, &p);
    let len = arc.length();
    let r = arc.point_at(tree, &third(&len));
    let s = arc.point_at(tree, &(third(&len) * int(2)));
    let ft = f3.eval(&t)?;
    log.push(format!("[q, t] = [{}, {}]", tree.describe(&q), tree.describe(&t)));
    log.push(format!("z0 = {}", tree.describe(&z0)));
    log.push(format!("r = {} -> {}", tree.describe(&r), tree.describe(&ft)));
    log.push(format!("s = {} -> {}", tree.describe(&s), tree.describe(&z0)));

    let mut partition = f3.partition().to_vec();
    let mut images = f3.images().to_vec();
    partition.extend([r, s]);
    images.extend([ft, z0]);
    let g = MarkovMap::new(tree.clone(), partition, images)?;
    verify_perturbation(f, &g, eps, &mut log)?;
    Ok(Construction { map: g, log })
}

/// Mixing, within `eps` of `f`, and equal to `f` on its partition.
fn verify_perturbation(f: &MarkovMap, g: &MarkovMap, eps: &Scalar, log: &mut Vec<String>) -> Result<()> {
    let c = classify(g);
    log.push(format!("verdict = {}", c.verdict));
    if !c.is_mixing() {
        return Err(Error::StageFailure(format!("result is {} rather than mixing", c.verdict)));
    }
    let dist = f.sup_distance(g)?;
    log.push(format!("distance = {}", scalar::render(&dist)));
    if &dist >= eps {
        return Err(Error::StageFailure(format!(
            "distance {} is not below {}",
            scalar::render(&dist),
            scalar::render(eps)
        )));
    }
    for x in f.partition() {
        if f.eval(x)? != g.eval(x)? {
            return Err(Error::StageFailure(format!(
                "result moved the image of partition point {}",
                f.tree().describe(x)
            )));
        }
    }
    Ok(())
}

/// Edge sets of the invariant base tree `T'` and the trees `C_0..C_{n-1}`
/// attached at `points[i]`, cyclically permuted by the map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttachSpec {
    pub base: BTreeSet<usize>,
    pub cycle: Vec<BTreeSet<usize>>,
    pub points: Vec<TreePoint>,
}

fn edge_set(tree: &MetricTree, edges: &BTreeSet<usize>) -> Subtree {
    Subtree {
        segments: edges
            .iter()
            .map(|&e| crate::tree::Segment {
                edge: e,
                from: Scalar::zero(),
                to: tree.edge(e).length.clone(),
            })
            .collect(),
        points: Vec::new(),
    }
}

fn interval_edge(f: &MarkovMap, i: usize) -> usize {
    f.interval(i).arc.segments[0].edge
}

fn vertices_of(tree: &MetricTree, edges: &BTreeSet<usize>) -> BTreeSet<usize> {
    edges
        .iter()
        .flat_map(|&e| [tree.edge(e).tail, tree.edge(e).head])
        .collect()
}

impl AttachSpec {
    /// Checks the spec against `f`, whose partition must contain the points.
    pub fn validate(&self, f: &MarkovMap) -> Result<()> {
        let tree = f.tree();
        let n = self.cycle.len();
        if n == 0 || self.points.len() != n {
            return Err(Error::Domain("need one attachment point per attached tree".into()));
        }
        let mut seen = self.base.clone();
        for c in &self.cycle {
            if c.is_empty() {
                return Err(Error::Domain("attached tree without edges".into()));
            }
            for &e in c {
                if !seen.insert(e) {
                    return Err(Error::Domain(format!("edge #{e} is listed twice")));
                }
            }
        }
        if self.base.is_empty() || seen.len() != tree.edges().len() || seen.iter().any(|&e| e >= tree.edges().len()) {
            return Err(Error::Domain("edge sets must partition the tree".into()));
        }
        tree.subtree(&self.base)
            .map_err(|e| Error::Domain(format!("base is not a tree: {e}")))?;
        let base_vertices = vertices_of(tree, &self.base);
        for (i, c) in self.cycle.iter().enumerate() {
            tree.subtree(c)
                .map_err(|e| Error::Domain(format!("C{i} is not a tree: {e}")))?;
            let common: Vec<usize> = vertices_of(tree, c).intersection(&base_vertices).copied().collect();
            if common.len() != 1 || self.points[i] != TreePoint::Vertex(common[0]) {
                return Err(Error::Domain(format!("C{i} must meet the base exactly at its attachment point")));
            }
        }
        for i in 0..n {
            if f.eval(&self.points[i])? != self.points[(i + 1) % n] {
                return Err(Error::Domain(format!("f(p{i}) is not p{}", (i + 1) % n)));
            }
        }
        let g = CoveringGraph::build(f);
        let base_iv: Vec<usize> = (0..f.interval_count())
            .filter(|&i| self.base.contains(&interval_edge(f, i)))
            .collect();
        let cycle_iv: Vec<usize> = (0..f.interval_count())
            .filter(|&i| !self.base.contains(&interval_edge(f, i)))
            .collect();
        if base_iv.iter().any(|&i| g.successors(i).iter().any(|j| !base_iv.contains(j))) {
            return Err(Error::Domain("base tree is not invariant".into()));
        }
        for (i, c) in self.cycle.iter().enumerate() {
            let region = Region::from_subtree(f.as_pl(), &edge_set(tree, c));
            let image = region.image(f.as_pl()).to_subtree(f.as_pl());
            if !image.same_set(tree, &edge_set(tree, &self.cycle[(i + 1) % n])) {
                return Err(Error::Domain(format!("f(C{i}) is not C{}", (i + 1) % n)));
            }
        }
        if !classify_graph(&g.induced(&base_iv)).is_transitive() {
            return Err(Error::Domain("map is not transitive on the base".into()));
        }
        if !classify_graph(&g.induced(&cycle_iv)).is_transitive() {
            return Err(Error::Domain("map is not transitive on the attached trees".into()));
        }
        Ok(())
    }
}

/// Glues the transitive dynamics on the base and on the attached cycle into
/// one mixing map within `eps` of `f`, equal to `f` on its partition.
pub fn attach(f: &MarkovMap, spec: &AttachSpec, eps: &Scalar) -> Result<Construction> {
    if !eps.is_positive() {
        return Err(Error::Domain("eps must be positive".into()));
    }
    let tree = f.tree();
    for p in &spec.points {
        if !p.is_vertex() {
            return Err(Error::Domain("attachment points must be vertices".into()));
        }
    }
    let f0 = f.refine(&spec.points)?;
    spec.validate(&f0)?;
    let n = spec.cycle.len();
    let (p0, p1) = (spec.points[0].clone(), spec.points[1 % n].clone());
    let pick = |g: &MarkovMap, p: &TreePoint, edges: &BTreeSet<usize>| -> Result<TreePoint> {
        g.intervals_at(p)
            .into_iter()
            .find(|&i| edges.contains(&interval_edge(g, i)))
            .map(|i| other_end(g, i, p))
            .ok_or_else(|| Error::Domain(format!("no basic interval at {}", tree.describe(p))))
    };
    let z0_far = pick(&f0, &p0, &spec.cycle[0])?;
    let z0b_far = pick(&f0, &p0, &spec.base)?;
    let z1_far = pick(&f0, &p1, &spec.cycle[1 % n])?;
    let z1b_far = pick(&f0, &p1, &spec.base)?;

    let budget = third(eps);
    let whole = tree.total_length() + int(1);
    let mut g = shrink_at(&f0, &p1, &z1_far, &budget, None)?;
    g = shrink_at(&g, &p1, &z1b_far, &budget, None)?;
    g = shrink_at(&g, &p0, &z0_far, &whole, Some(&budget))?;
    g = shrink_at(&g, &p0, &z0b_far, &whole, Some(&budget))?;

    let end_toward = |g: &MarkovMap, p: &TreePoint, far: &TreePoint| {
        let i = interval_toward(g, p, far).expect("interval survives refinement");
        oriented_from(g, i, p)
    };
    let i0 = end_toward(&g, &p0, &z0_far);
    let i0b = end_toward(&g, &p0, &z0b_far);
    let z1 = end_toward(&g, &p1, &z1_far).end;
    let z1b = end_toward(&g, &p1, &z1b_far).end;
    let cut = |arc: &crate::tree::Arc, k: i64| arc.point_at(tree, &(third(&arc.length()) * int(k)));
    let (r, s) = (cut(&i0, 1), cut(&i0, 2));
    let (rb, sb) = (cut(&i0b, 1), cut(&i0b, 2));
    let mut log = vec![
        format!("p0 = {}, p1 = {}", tree.describe(&p0), tree.describe(&p1)),
        format!("r = {} -> {}", tree.describe(&r), tree.describe(&z1b)),
        format!("s = {} -> {}", tree.describe(&s), tree.describe(&p1)),
        format!("r' = {} -> {}", tree.describe(&rb), tree.describe(&z1)),
        format!("s' = {} -> {}", tree.describe(&sb), tree.describe(&p1)),
    ];
    let mut partition = g.partition().to_vec();
    let mut images = g.images().to_vec();
    partition.extend([r, s, rb, sb]);
    images.extend([z1b, p1.clone(), z1, p1]);
    let glued = MarkovMap::new(tree.clone(), partition, images)?;
    let c = classify(&glued);
    log.push(format!("glued verdict = {}", c.verdict));
    if !c.is_transitive() {
        return Err(Error::StageFailure("glued map is not transitive".into()));
    }
    let out = if c.is_mixing() {
        glued
    } else {
        let t = totalize(&glued, &third(eps))?;
        log.extend(t.log.into_iter().map(|l| format!("totalize: {l}")));
        t.map
    };
    verify_perturbation(f, &out, eps, &mut log)?;
    Ok(Construction { map: out, log })
}

/// Mixing map on the `beams`-star with unit beams that fixes the center and
/// every tip and stays within `eps` of the identity.
pub fn star_mixing(beams: usize, eps: &Scalar) -> Result<Construction> {
    if beams == 0 {
        return Err(Error::Domain("a star needs at least one beam".into()));
    }
    if !eps.is_positive() {
        return Err(Error::Domain("eps must be positive".into()));
    }
    // cells of length 1/k carry a three-fold map, at distance 2/(3k) <= eps/2 from id
    let k = (Scalar::from_integer(4.into()) / (eps * int(3))).ceil().to_integer();
    let k: usize = k.try_into().map_err(|_| Error::Domain("eps is too small".into()))?;
    let k = k.max(1);
    let cell = Scalar::new(1.into(), k.into());
    let mut names = vec!["c".to_string()];
    let mut edges = Vec::new();
    let vertex = |b: usize, j: usize| if j == 0 { 0 } else { 1 + b * k + (j - 1) };
    for b in 0..beams {
        for j in 1..=k {
            names.push(format!("v{b}_{j}"));
            edges.push((format!("b{b}_{j}"), vertex(b, j - 1), vertex(b, j), cell.clone()));
        }
    }
    let sub = MetricTree::new("subdivided star", names, edges)?;
    let mut partition = vec![TreePoint::Vertex(0)];
    let mut images = vec![TreePoint::Vertex(0)];
    for e in 0..beams * k {
        let (u, w) = (sub.edge(e).tail, sub.edge(e).head);
        partition.extend([
            TreePoint::Vertex(w),
            sub.point(e, third(&cell))?,
            sub.point(e, third(&cell) * int(2))?,
        ]);
        images.extend([TreePoint::Vertex(w), TreePoint::Vertex(w), TreePoint::Vertex(u)]);
    }
    let mut g = MarkovMap::new(sub.clone(), partition, images)?;

    let mut order: Vec<(usize, usize)> = (0..k).rev().map(|j| (j, vertex(0, j + 1))).collect();
    for b in 1..beams {
        order.extend((0..k).map(|j| (b * k + j, vertex(b, j))));
    }
    let steps = order.len() - 1;
    let mut log = vec![format!("{k} cells per beam, {steps} attach steps")];
    if steps > 0 {
        let step = (eps - cell.clone() * Scalar::new(2.into(), 3.into())) / int(steps as i64);
        log.push(format!("attach budget {} per step", scalar::render(&step)));
        let mut built = BTreeSet::from([order[0].0]);
        for &(e, at) in &order[1..] {
            let mut edges = built.clone();
            edges.insert(e);
            let (local, emb) = g.restrict(&edges)?;
            let pos = |x: usize| emb.edges.iter().position(|&y| y == x).expect("edge in subtree");
            let spec = AttachSpec {
                base: built.iter().map(|&x| pos(x)).collect(),
                cycle: vec![BTreeSet::from([pos(e)])],
                points: vec![emb.to_sub(&TreePoint::Vertex(at)).expect("vertex in subtree")],
            };
            let out = attach(&local, &spec, &step)?;
            g = g.replace_on(&emb, &out.map)?;
            built.insert(e);
        }
    }

    let star = MetricTree::star(&crate::tree::StarSpec::uniform(beams, int(1)))?;
    let carry = |p: &TreePoint| -> Result<TreePoint> {
        match p {
            TreePoint::Vertex(0) => Ok(TreePoint::Vertex(0)),
            TreePoint::Vertex(v) => {
                let (b, j) = ((v - 1) / k, (v - 1) % k + 1);
                if j == k {
                    Ok(TreePoint::Vertex(b + 1))
                } else {
                    star.point(b, &cell * int(j as i64))
                }
            }
            TreePoint::Edge { edge, offset } => {
                let (b, j) = (edge / k, edge % k);
                star.point(b, &cell * int(j as i64) + offset)
            }
        }
    };
    let partition = g.partition().iter().map(carry).collect::<Result<Vec<_>>>()?;
    let images = g.images().iter().map(carry).collect::<Result<Vec<_>>>()?;
    let out = MarkovMap::new(star.clone(), partition, images)?;

    let id = MarkovMap::identity(star.clone())?;
    let c = classify(&out);
    log.push(format!("verdict = {}", c.verdict));
    let dist = id.sup_distance(&out)?;
    log.push(format!("distance to identity = {}", scalar::render(&dist)));
    if !c.is_mixing() || &dist >= eps {
        return Err(Error::StageFailure("star map misses its bounds".into()));
    }
    for v in 0..star.vertex_count() {
        if out.eval(&TreePoint::Vertex(v))? != TreePoint::Vertex(v) {
            return Err(Error::StageFailure(format!("vertex {} is not fixed", star.vertex_name(v))));
        }
    }
    Ok(Construction { map: out, log })
}

/// Longest iterate tried when computing the covering time of a stage.
pub const MAX_COVER_TIME: usize = 64;

/// One finite stage of the growing tree and its mixing map.
#[derive(Clone, Debug)]
pub struct StageState {
    pub map: MarkovMap,
    pub stage: usize,
    /// Resolution of this stage.
    pub eps: Scalar,
    /// Budget and covering time used to reach this stage from the previous one.
    pub delta: Option<Scalar>,
    pub m: Option<usize>,
    /// Periodic orbits of branch points pinned so far.
    pub pinned: Vec<Vec<TreePoint>>,
    pub log: Vec<String>,
}

impl StageState {
    /// First stage: a mixing map on `T_1` at resolution `eps / 2`.
    pub fn initial(map: MarkovMap, eps: &Scalar) -> Result<Self> {
        if !eps.is_positive() {
            return Err(Error::Domain("eps must be positive".into()));
        }
        if !classify(&map).is_mixing() {
            return Err(Error::Domain("the first stage map must be mixing".into()));
        }
        Ok(StageState {
            map,
            stage: 1,
            eps: eps / int(2),
            delta: None,
            m: None,
            pinned: Vec::new(),
            log: Vec::new(),
        })
    }

    pub fn tree(&self) -> &MetricTree {
        self.map.tree()
    }
}

/// Covering time `m`, perturbation budget `delta` and pinning radius `gamma` of a stage.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageBudget {
    pub m: usize,
    pub delta: Scalar,
    pub gamma: Scalar,
}

/// Closed pieces of length `< size` cut evenly from the given edges.
fn mesh(tree: &MetricTree, edges: &BTreeSet<usize>, size: &Scalar) -> Vec<Subtree> {
    let mut out = Vec::new();
    for &e in edges {
        let len = &tree.edge(e).length;
        let k = (len / size).floor() + Scalar::one();
        let step = len / &k;
        let mut a = Scalar::zero();
        while &a < len {
            let b = &a + &step;
            out.push(Subtree {
                segments: vec![crate::tree::Segment {
                    edge: e,
                    from: a.clone(),
                    to: b.clone(),
                }],
                points: Vec::new(),
            });
            a = b;
        }
    }
    out
}

/// Points within `radius` of `r`.
fn ball(tree: &MetricTree, r: &TreePoint, radius: &Scalar) -> Subtree {
    let mut segments = Vec::new();
    for (e, edge) in tree.edges().iter().enumerate() {
        let len = &edge.length;
        if let Some(o) = tree.offset_on_edge(r, e) {
            let a = scalar::max(&(&o - radius), &Scalar::zero());
            let b = scalar::min(&(&o + radius), len);
            segments.push(crate::tree::Segment { edge: e, from: a, to: b });
            continue;
        }
        let du = radius - tree.distance(r, &TreePoint::Vertex(edge.tail));
        let dw = radius - tree.distance(r, &TreePoint::Vertex(edge.head));
        if du.is_positive() {
            let b = scalar::min(&du, len);
            segments.push(crate::tree::Segment { edge: e, from: Scalar::zero(), to: b });
        }
        if dw.is_positive() {
            let a = scalar::max(&(len - &dw), &Scalar::zero());
            segments.push(crate::tree::Segment { edge: e, from: a, to: len.clone() });
        }
    }
    Subtree {
        segments,
        points: vec![r.clone()],
    }
}

/// Least `m` with `excess(T, f^m(J)) < bound` for every piece `J`, where `T`
/// is spanned by `edges`.
fn covering_time(f: &MarkovMap, edges: &BTreeSet<usize>, pieces: &[Subtree], bound: &Scalar) -> Result<Option<usize>> {
    let tree = f.tree();
    let target = edge_set(tree, edges);
    let mut regions: Vec<Region> = pieces.iter().map(|j| Region::from_subtree(f.as_pl(), j)).collect();
    for m in 1..=MAX_COVER_TIME {
        regions = regions.iter().map(|r| r.image(f.as_pl())).collect();
        let mut ok = true;
        for r in &regions {
            if &tree.excess(&target, &r.to_subtree(f.as_pl()))? >= bound {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

/// Budgets for a stage at resolution `eps`: every arc of diameter `>= eps`
/// comes within `eps / 2` of covering the tree after `m` steps, and a map
/// `delta`-close to `f` keeps it within `eps`.
pub fn stage_budget(f: &MarkovMap, eps: &Scalar) -> Result<StageBudget> {
    let all: BTreeSet<usize> = (0..f.tree().edges().len()).collect();
    let half = eps / int(2);
    let m = covering_time(f, &all, &mesh(f.tree(), &all, &half), &half)?.ok_or_else(|| {
        Error::StageFailure(format!("arcs do not spread within {MAX_COVER_TIME} steps"))
    })?;
    // h^m stays within delta * (1 + L + ... + L^{m-1}) of f^m
    let lip = f.lipschitz();
    let mut sum = Scalar::zero();
    let mut pow = Scalar::one();
    for _ in 0..m {
        sum += &pow;
        pow *= &lip;
    }
    let delta = half / sum;
    let gamma = scalar::min(&(&delta / int(16)), &(&delta / ((lip + int(1)) * int(4))));
    Ok(StageBudget { m, delta, gamma })
}

/// Extends the stage by pinning a periodic orbit at `r`, making each of its
/// points a branch point of degree `degree`, and gluing in the new arcs.
pub fn dendrite_stage(state: &StageState, r: Option<&TreePoint>, degree: usize) -> Result<StageState> {
    let Some(r) = r else {
        let mut out = state.clone();
        out.log.push("no branch point requested; stage unchanged".into());
        return Ok(out);
    };
    if degree < 3 {
        return Err(Error::Domain("branch degree must be at least 3".into()));
    }
    let f = &state.map;
    let tree = f.tree();
    if tree.classify_point(r)? != crate::tree::PointOrder::Regular {
        return Err(Error::Precondition(format!("{} is not an interior point of an arc", tree.describe(r))));
    }
    let p_set: BTreeSet<TreePoint> = f.partition().iter().cloned().collect();
    if p_set.contains(r) {
        return Err(Error::Precondition(format!("{} is a partition point", tree.describe(r))));
    }
    let budget = stage_budget(f, &state.eps)?;
    let StageBudget { m, delta, gamma } = budget.clone();
    let mut log = vec![
        format!("stage {}", state.stage),
        format!("m = {m}"),
        format!("delta = {}", scalar::render(&delta)),
        format!("gamma = {}", scalar::render(&gamma)),
    ];

    // a periodic orbit whose point nearest r is within gamma, with nothing of
    // the partition or the orbit between that point and r
    let cells: Vec<(usize, Scalar, Scalar)> = Region::from_subtree(f.as_pl(), &ball(tree, r, &gamma))
        .pieces
        .into_iter()
        .filter(|(_, a, b)| a < b)
        .collect();
    let accept = |x: &TreePoint| -> bool {
        let d = tree.distance(x, r);
        if d >= gamma || p_set.contains(x) {
            return false;
        }
        let Ok(Some(orbit)) = crate::periodic::PeriodicOrbit::through(f, x, PERIOD_BUDGET) else {
            return false;
        };
        let pts = orbit.points(f);
        let arc = tree.path(x, r).expect("points lie on the tree");
        pts.iter().all(|y| tree.distance(y, r) >= d)
            && pts.iter().chain(p_set.iter()).all(|y| y == x || !arc.contains(tree, y))
    };
    let orbit = find_periodic_in(f, &cells, PERIOD_BUDGET, accept).map_err(|_| {
        Error::StageFailure(format!(
            "no periodic orbit of period <= {PERIOD_BUDGET} within {} of {}",
            scalar::render(&gamma),
            tree.describe(r)
        ))
    })?;
    let p = orbit.base.clone();
    log.push(format!("pinned orbit: period {} at {}", orbit.period, tree.describe(&p)));

    // conjugate so that the orbit passes through r
    let f1 = f.refine(std::slice::from_ref(&p))?;
    let images: Vec<TreePoint> = f1
        .partition()
        .iter()
        .map(|x| if x == &p { r.clone() } else { x.clone() })
        .collect();
    let g = crate::markov::PlHomeomorphism::new(tree.clone(), f1.partition().to_vec(), images)?;
    let ft = f1.conjugate(&g)?;
    let rho = f.sup_distance(&ft)?;
    log.push(format!("conjugation moves the map by {}", scalar::render(&rho)));
    if rho >= &delta / int(4) {
        return Err(Error::StageFailure("conjugation exceeds delta / 4".into()));
    }
    let mut qs = vec![r.clone()];
    for _ in 1..orbit.period {
        let next = ft.eval(qs.last().unwrap())?;
        qs.push(next);
    }

    // new vertices at the orbit, then degree - 2 arcs at each
    let mut big = tree.clone();
    let mut splits: Vec<crate::tree::EdgeSplit> = Vec::new();
    let carry = |splits: &[crate::tree::EdgeSplit], x: &TreePoint| splits.iter().fold(x.clone(), |y, s| s.apply(&y));
    let mut q_vertex = Vec::new();
    for q in &qs {
        match carry(&splits, q) {
            TreePoint::Vertex(v) => q_vertex.push(v),
            x => {
                let name = big.fresh_vertex_name("q");
                let (t, split) = big.split_edge(&x, &name)?;
                q_vertex.push(split.vertex);
                splits.push(split);
                big = t;
            }
        }
    }
    let base_edges: BTreeSet<usize> = (0..big.edges().len()).collect();
    let arms = degree - 2;
    let k = qs.len();
    let ell = &delta / int(8);
    let mut arm_edge = vec![vec![0usize; arms]; k];
    for (i, &v) in q_vertex.iter().enumerate() {
        for slot in arm_edge[i].iter_mut() {
            let name = big.fresh_vertex_name("e");
            let (t, _, e) = big.add_pendant(v, &name, ell.clone())?;
            *slot = e;
            big = t;
        }
    }

    // cycle map on the arms, the identity along each leg and a mixing interval
    // map on the last one
    let phi = star_mixing(1, &crate::scalar::ratio(1, 4))?.map;
    let at = |x: &TreePoint| phi.tree().offset_on_edge(x, 0).expect("interval map");
    let phi_pts: Vec<(Scalar, Scalar)> = phi
        .partition()
        .iter()
        .zip(phi.images())
        .map(|(x, y)| (at(x), at(y)))
        .collect();
    let mut partition: Vec<TreePoint> = ft.partition().iter().map(|x| carry(&splits, x)).collect();
    let mut images: Vec<TreePoint> = ft.images().iter().map(|x| carry(&splits, x)).collect();
    for i in 0..k {
        for j in 0..arms {
            for (x, y) in &phi_pts {
                if x.is_zero() {
                    continue;
                }
                partition.push(big.point(arm_edge[i][j], x * &ell)?);
                images.push(if i + 1 < k {
                    big.point(arm_edge[i + 1][j], x * &ell)?
                } else {
                    big.point(arm_edge[0][(j + 1) % arms], y * &ell)?
                });
            }
        }
    }
    let glued = MarkovMap::new(big.clone(), partition, images)?;
    let spec = AttachSpec {
        base: base_edges.clone(),
        cycle: (0..arms)
            .flat_map(|j| (0..k).map(move |i| (i, j)))
            .map(|(i, j)| BTreeSet::from([arm_edge[i][j]]))
            .collect(),
        points: (0..arms)
            .flat_map(|_| q_vertex.iter().map(|&v| TreePoint::Vertex(v)))
            .collect(),
    };
    let joined = attach(&glued, &spec, &(&delta / int(8)))?;
    let next = joined.map;
    log.extend(joined.log.into_iter().map(|l| format!("attach: {l}")));

    // distance to the previous stage over the old tree, at the breakpoints of both
    let uncarry = |x: &TreePoint| splits.iter().rev().fold(x.clone(), |y, s| s.revert(&y));
    let mut probe: BTreeSet<TreePoint> = f.partition().iter().map(|x| carry(&splits, x)).collect();
    let on_base = |x: &TreePoint| match x {
        TreePoint::Vertex(v) => *v < tree.vertex_count() + splits.len(),
        TreePoint::Edge { edge, .. } => base_edges.contains(edge),
    };
    probe.extend(next.partition().iter().filter(|x| on_base(x)).cloned());
    let mut drift = Scalar::zero();
    for x in &probe {
        let want = carry(&splits, &f.eval(&uncarry(x))?);
        let d = big.distance(&next.eval(x)?, &want);
        if d > drift {
            drift = d;
        }
    }
    log.push(format!("distance to previous stage = {}", scalar::render(&drift)));
    if drift >= &delta / int(2) {
        return Err(Error::StageFailure("new map is not within delta / 2 of the previous one".into()));
    }

    // pinned orbits, old and new, are still cycles
    let mut pinned: Vec<Vec<TreePoint>> = state
        .pinned
        .iter()
        .map(|o| o.iter().map(|x| carry(&splits, x)).collect())
        .collect();
    pinned.push(q_vertex.iter().map(|&v| TreePoint::Vertex(v)).collect());
    for o in &pinned {
        for i in 0..o.len() {
            if next.eval(&o[i])? != o[(i + 1) % o.len()] {
                return Err(Error::StageFailure("a pinned orbit is no longer periodic".into()));
            }
        }
    }

    // arcs of the old tree still spread over it after m steps of the new map
    let all_old: BTreeSet<usize> = (0..tree.edges().len()).collect();
    let pieces: Vec<Subtree> = mesh(tree, &all_old, &(&state.eps / int(2)))
        .iter()
        .map(|j| {
            let seg = &j.segments[0];
            let a = carry(&splits, &tree.point(seg.edge, seg.from.clone())?);
            let b = carry(&splits, &tree.point(seg.edge, seg.to.clone())?);
            Ok(Subtree::from_arc(&big.path(&a, &b)?))
        })
        .collect::<Result<_>>()?;
    let spread = covering_time(&next, &base_edges, &pieces, &state.eps)?;
    let whole = edge_set(&big, &base_edges);
    let mut reach = Region::from_subtree(next.as_pl(), &whole);
    for _ in 0..m {
        reach = reach.image(next.as_pl());
    }
    let outside = big.excess(&reach.to_subtree(next.as_pl()), &whole)?;
    log.push(format!("excursion of the old tree after m steps = {}", scalar::render(&outside)));
    if spread.is_none_or(|s| s > m) || outside >= state.eps {
        return Err(Error::StageFailure(format!(
            "arcs of the old tree no longer spread over it (covering time {spread:?}, m = {m}, excursion {})",
            scalar::render(&outside)
        )));
    }

    Ok(StageState {
        map: next,
        stage: state.stage + 1,
        eps: &state.eps / int(2),
        delta: Some(delta),
        m: Some(m),
        pinned,
        log,
    })
}
