//! Line-oriented text format for trees and maps.
//!
//! ```text
//! # comments start with '#'
//! tree unit
//! vertex a
//! vertex b
//! edge e a b 1
//! point m = e:1/2
//! partition a m b
//! image a -> a
//! image m -> b
//! image b -> a
//! ```
//!
//! Point ids are vertex ids, named points, or inline `<edge>:<offset>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::markov::MarkovMap;
use crate::scalar::{self, Scalar};
use crate::tree::{MetricTree, TreePoint};

/// A tree together with its named points.
#[derive(Clone, Debug)]
pub struct TreeFile {
    pub tree: MetricTree,
    pub points: BTreeMap<String, TreePoint>,
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

struct Parser {
    name: Option<String>,
    vertices: Vec<String>,
    vertex_ids: BTreeMap<String, usize>,
    edges: Vec<(String, usize, usize, Scalar)>,
    edge_ids: BTreeMap<String, usize>,
    /// Named points, resolved once the tree is built.
    points: Vec<(usize, String, String, Scalar)>,
    partition: Option<(usize, Vec<String>)>,
    images: Vec<(usize, String, String)>,
}

fn parse_offset(line: usize, text: &str) -> Result<(String, Scalar)> {
    let (edge, off) = text
        .split_once(':')
        .ok_or_else(|| err(line, format!("expected <edge>:<offset>, found {text:?}")))?;
    let off = scalar::parse(off).map_err(|_| err(line, format!("bad offset {off:?}")))?;
    Ok((edge.to_string(), off))
}

impl Parser {
    fn new() -> Self {
        Parser {
            name: None,
            vertices: Vec::new(),
            vertex_ids: BTreeMap::new(),
            edges: Vec::new(),
            edge_ids: BTreeMap::new(),
            points: Vec::new(),
            partition: None,
            images: Vec::new(),
        }
    }

    fn line(&mut self, no: usize, raw: &str, allow_map: bool) -> Result<()> {
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            return Ok(());
        }
        let words: Vec<&str> = text.split_whitespace().collect();
        match words[0] {
            "tree" => {
                if self.name.is_some() {
                    return Err(err(no, "second tree header"));
                }
                self.name = Some(text["tree".len()..].trim().to_string());
            }
            _ if self.name.is_none() => return Err(err(no, "expected `tree <name>` first")),
            "vertex" => {
                let [_, id] = words[..] else {
                    return Err(err(no, "expected `vertex <id>`"));
                };
                if self.vertex_ids.insert(id.to_string(), self.vertices.len()).is_some() {
                    return Err(err(no, format!("duplicate vertex {id}")));
                }
                self.vertices.push(id.to_string());
            }
            "edge" => {
                let [_, id, tail, head, len] = words[..] else {
                    return Err(err(no, "expected `edge <id> <tail> <head> <length>`"));
                };
                let vertex = |v: &str| {
                    self.vertex_ids
                        .get(v)
                        .copied()
                        .ok_or_else(|| err(no, format!("unknown vertex {v}")))
                };
                let (t, h) = (vertex(tail)?, vertex(head)?);
                let len = scalar::parse(len).map_err(|_| err(no, format!("bad length {len:?}")))?;
                if self.edge_ids.insert(id.to_string(), self.edges.len()).is_some() {
                    return Err(err(no, format!("duplicate edge {id}")));
                }
                self.edges.push((id.to_string(), t, h, len));
            }
            "point" => {
                let [_, id, "=", at] = words[..] else {
                    return Err(err(no, "expected `point <id> = <edge>:<offset>`"));
                };
                let (edge, off) = parse_offset(no, at)?;
                self.points.push((no, id.to_string(), edge, off));
            }
            "partition" if allow_map => {
                if self.partition.is_some() {
                    return Err(err(no, "second partition line"));
                }
                self.partition = Some((no, words[1..].iter().map(|s| s.to_string()).collect()));
            }
            "image" if allow_map => {
                let [_, from, "->", to] = words[..] else {
                    return Err(err(no, "expected `image <point> -> <point>`"));
                };
                self.images.push((no, from.to_string(), to.to_string()));
            }
            other => return Err(err(no, format!("unknown directive {other:?}"))),
        }
        Ok(())
    }

    fn tree(&mut self) -> Result<TreeFile> {
        let name = self.name.clone().ok_or_else(|| err(0, "missing `tree <name>` header"))?;
        let tree = MetricTree::new(name, self.vertices.clone(), self.edges.clone())?;
        let mut points = BTreeMap::new();
        for (no, id, edge, off) in &self.points {
            if self.vertex_ids.contains_key(id) || points.contains_key(id) {
                return Err(err(*no, format!("point id {id} is already taken")));
            }
            let e = *self.edge_ids.get(edge).ok_or_else(|| err(*no, format!("unknown edge {edge}")))?;
            let p = tree.point(e, off.clone()).map_err(|x| err(*no, x.to_string()))?;
            points.insert(id.clone(), p);
        }
        Ok(TreeFile { tree, points })
    }
}

fn resolve(file: &TreeFile, line: usize, id: &str) -> Result<TreePoint> {
    if let Some(v) = file.tree.vertex_by_name(id) {
        return Ok(TreePoint::Vertex(v));
    }
    if let Some(p) = file.points.get(id) {
        return Ok(p.clone());
    }
    if id.contains(':') {
        let (edge, off) = parse_offset(line, id)?;
        let e = file
            .tree
            .edge_by_name(&edge)
            .ok_or_else(|| err(line, format!("unknown edge {edge}")))?;
        return file.tree.point(e, off).map_err(|x| err(line, x.to_string()));
    }
    Err(err(line, format!("unknown point {id}")))
}

/// A vertex name or `<edge>:<offset>` on `tree`.
pub fn parse_point(tree: &MetricTree, id: &str) -> Result<TreePoint> {
    let file = TreeFile {
        tree: tree.clone(),
        points: BTreeMap::new(),
    };
    resolve(&file, 1, id)
}

pub fn parse_tree(text: &str) -> Result<TreeFile> {
    let mut p = Parser::new();
    for (i, raw) in text.lines().enumerate() {
        p.line(i + 1, raw, false)?;
    }
    p.tree()
}

pub fn parse_map(text: &str) -> Result<MarkovMap> {
    let mut p = Parser::new();
    for (i, raw) in text.lines().enumerate() {
        p.line(i + 1, raw, true)?;
    }
    let file = p.tree()?;
    let (pline, ids) = p
        .partition
        .clone()
        .ok_or_else(|| err(0, "missing `partition` line"))?;
    let partition = ids
        .iter()
        .map(|id| resolve(&file, pline, id))
        .collect::<Result<Vec<_>>>()?;
    let mut images: BTreeMap<TreePoint, TreePoint> = BTreeMap::new();
    for (no, from, to) in &p.images {
        let x = resolve(&file, *no, from)?;
        let y = resolve(&file, *no, to)?;
        if images.insert(x, y).is_some() {
            return Err(err(*no, format!("second image for {from}")));
        }
    }
    let mut ordered = Vec::with_capacity(partition.len());
    for (x, id) in partition.iter().zip(&ids) {
        ordered.push(
            images
                .remove(x)
                .ok_or_else(|| Error::Validation(format!("partition point {id} has no image")))?,
        );
    }
    if let Some((x, _)) = images.into_iter().next() {
        return Err(Error::Validation(format!(
            "image given for {}, which is not in the partition",
            file.tree.describe(&x)
        )));
    }
    MarkovMap::new(file.tree, partition, ordered)
}

fn check_token(kind: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.contains(char::is_whitespace) || s.contains('#') || s.contains(':') {
        return Err(Error::Structure(format!("{kind} name {s:?} cannot be written")));
    }
    Ok(())
}

fn write_tree_body(out: &mut String, tree: &MetricTree) -> Result<()> {
    writeln!(out, "tree {}", tree.name()).unwrap();
    for v in 0..tree.vertex_count() {
        check_token("vertex", tree.vertex_name(v))?;
        writeln!(out, "vertex {}", tree.vertex_name(v)).unwrap();
    }
    for e in tree.edges() {
        check_token("edge", &e.name)?;
        writeln!(
            out,
            "edge {} {} {} {}",
            e.name,
            tree.vertex_name(e.tail),
            tree.vertex_name(e.head),
            scalar::render(&e.length)
        )
        .unwrap();
    }
    Ok(())
}

pub fn write_tree(tree: &MetricTree) -> Result<String> {
    let mut out = String::new();
    write_tree_body(&mut out, tree)?;
    Ok(out)
}

pub fn write_map(f: &MarkovMap) -> Result<String> {
    let tree = f.tree();
    let mut out = String::new();
    write_tree_body(&mut out, tree)?;
    let mut ids: BTreeMap<TreePoint, String> = BTreeMap::new();
    let mut k = 0;
    for p in f.partition() {
        let id = match p {
            TreePoint::Vertex(v) => tree.vertex_name(*v).to_string(),
            TreePoint::Edge { edge, offset } => {
                let id = loop {
                    let cand = format!("p{k}");
                    k += 1;
                    if tree.vertex_by_name(&cand).is_none() {
                        break cand;
                    }
                };
                writeln!(out, "point {id} = {}:{}", tree.edge(*edge).name, scalar::render(offset)).unwrap();
                id
            }
        };
        ids.insert(p.clone(), id);
    }
    let names: Vec<&str> = f.partition().iter().map(|p| ids[p].as_str()).collect();
    writeln!(out, "partition {}", names.join(" ")).unwrap();
    for (p, q) in f.partition().iter().zip(f.images()) {
        writeln!(out, "image {} -> {}", ids[p], ids[q]).unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    const TENT: &str = "\
# the tent map
tree unit
vertex a
vertex b
edge e a b 1
point m = e:1/2
partition a m b
image a -> a
image m -> b   # peak
image b -> a
";

    #[test]
    fn parses_tent() {
        let f = parse_map(TENT).unwrap();
        let t = catalog::tent();
        for k in 0..=10 {
            let x = crate::scalar::ratio(k, 10);
            let y = f.eval(&f.tree().point(0, x.clone()).unwrap()).unwrap();
            let z = t.eval(&t.tree().point(0, x).unwrap()).unwrap();
            assert_eq!(f.tree().offset_on_edge(&y, 0), t.tree().offset_on_edge(&z, 0));
        }
    }

    #[test]
    fn round_trips() {
        for f in [catalog::tent(), catalog::three_fold(), catalog::star_rotation(3), catalog::two_block()] {
            let text = write_map(&f).unwrap();
            let g = parse_map(&text).unwrap();
            assert!(f.sup_distance(&g).unwrap() == Scalar::from_integer(0.into()));
            assert_eq!(write_map(&g).unwrap(), text);
        }
    }

    #[test]
    fn inline_points() {
        let text = TENT.replace("partition a m b", "partition a e:1/2 b").replace("image m", "image e:1/2");
        assert!(parse_map(&text).is_ok());
    }

    #[test]
    fn reports_line_numbers() {
        let bad = TENT.replace("edge e a b 1", "edge e a c 1");
        match parse_map(&bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_map("vertex a"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse_map(&TENT.replace("image b -> a\n", "")),
            Err(Error::Validation(_))
        ));
        assert!(parse_map(&TENT.replace("image b -> a", "image b -> e:1/3")).is_err());
    }

    #[test]
    fn tree_only() {
        let t = parse_tree("tree t\nvertex a\nvertex b\nedge e a b 3/2\npoint x = e:1/2\n").unwrap();
        assert_eq!(t.points.len(), 1);
        assert!(parse_tree(&write_tree(&t.tree).unwrap()).is_ok());
        assert!(parse_tree("tree t\nvertex a\nvertex b\nedge e a b 1\npartition a b\n").is_err());
    }
}
