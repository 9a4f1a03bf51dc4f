use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TENT: &str = "tree unit\nvertex a\nvertex b\nedge e a b 1\npoint m = e:1/2\npartition a m b\nimage a -> a\nimage m -> b\nimage b -> a\n";
const IDENTITY: &str = "tree unit\nvertex a\nvertex b\nedge e a b 1\npartition a b\nimage a -> a\nimage b -> b\n";
const COLLAPSE: &str = "tree unit\nvertex a\nvertex b\nedge e a b 1\npartition a e:1/2 b\nimage a -> a\nimage e:1/2 -> a\nimage b -> b\n";
const ROTATION: &str = "\
tree star
vertex c
vertex t0
vertex t1
vertex t2
edge b0 c t0 1
edge b1 c t1 1
edge b2 c t2 1
point h = b2:1/2
partition c t0 t1 h t2
image c -> c
image t0 -> t1
image t1 -> t2
image h -> t0
image t2 -> c
";

fn dendro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dendro")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn file(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn analyze_reports_verdicts() {
    let dir = TempDir::new().unwrap();
    let o = dendro(&["analyze", s(&file(&dir, "tent.map", TENT))]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("verdict: mixing") && out.contains("horizon: 1"), "{out}");
    let o = dendro(&["analyze", s(&file(&dir, "id.map", IDENTITY))]);
    assert!(stdout(&o).contains("verdict: not transitive"));
}

#[test]
fn malformed_files_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let bad = file(&dir, "bad.map", &TENT.replace("edge e a b 1", "edge e a zz 1"));
    let o = dendro(&["analyze", s(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));
    assert_eq!(dendro(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(dendro(&["analyze", "/nonexistent/file.map"]).status.code(), Some(1));
}

#[test]
fn invalid_maps_exit_with_two() {
    let dir = TempDir::new().unwrap();
    // image outside the partition breaks the Markov condition
    let bad = file(&dir, "bad.map", &TENT.replace("image m -> b", "image m -> e:1/3"));
    assert_eq!(dendro(&["analyze", s(&bad)]).status.code(), Some(2));
    let id = file(&dir, "id.map", IDENTITY);
    assert_eq!(dendro(&["decompose", s(&id)]).status.code(), Some(2));
}

#[test]
fn exhausted_budgets_exit_with_three() {
    let dir = TempDir::new().unwrap();
    let tent = file(&dir, "tent.map", TENT);
    let o = dendro(&["periodic", s(&tent), "--max-period", "1", "--resolution", "1/64", "--budget", "2"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn periodic_listings() {
    let dir = TempDir::new().unwrap();
    let out = stdout(&dendro(&["periodic", s(&file(&dir, "tent.map", TENT)), "--max-period", "2"]));
    assert_eq!(out.lines().filter(|l| l.starts_with("orbit period=")).count(), 3);
    assert!(out.contains("orbit period=2 base=e:2/5 itinerary=I0,I1"));
    let out = stdout(&dendro(&["periodic", s(&file(&dir, "id.map", IDENTITY)), "--max-period", "1"]));
    assert!(out.contains("interval of periodic points"), "{out}");
    let out = stdout(&dendro(&["periodic", s(&file(&dir, "c.map", COLLAPSE)), "--resolution", "1/8"]));
    assert!(out.contains("density: gap"), "{out}");
}

#[test]
fn sigma_words() {
    let o = dendro(&["sigma", "(1,1)", "--collapse"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("m=1, first empty at 1, verified"));
    let dir = TempDir::new().unwrap();
    let batch = file(&dir, "words.txt", "(3,2)\n# comment\n(2,1)(1,3)\n");
    let out = stdout(&dendro(&["sigma", "--batch", s(&batch), "--periodic", "1"]));
    assert!(out.contains("(3,2): m=4") && out.contains("(2,1)(1,3): m=5"), "{out}");
    assert_eq!(dendro(&["sigma", "(0,1)"]).status.code(), Some(1));
}

#[test]
fn star_mix_round_trips_through_analyze() {
    let dir = TempDir::new().unwrap();
    let star = dir.path().join("star.map");
    let o = dendro(&["star-mix", "--n", "3", "--eps", "1/4", "-o", s(&star)]);
    assert!(o.status.success());
    assert!(stdout(&dendro(&["analyze", s(&star)])).contains("verdict: mixing"));
}

#[test]
fn decompose_rotation() {
    let dir = TempDir::new().unwrap();
    let out = stdout(&dendro(&["decompose", s(&file(&dir, "rot.map", ROTATION))]));
    assert!(out.contains("pieces: 3") && out.contains("verification: pass"), "{out}");
}

#[test]
fn constructions_are_deterministic_and_reload() {
    let dir = TempDir::new().unwrap();
    let rot = file(&dir, "rot.map", ROTATION);
    let a = dendro(&["totalize", s(&rot), "--eps", "1/4"]);
    let b = dendro(&["totalize", s(&rot), "--eps", "1/4"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let out = dir.path().join("mixed.map");
    dendro(&["totalize", s(&rot), "--eps", "1/4", "-o", s(&out)]);
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(stdout(&a).ends_with(&text));
    assert!(stdout(&dendro(&["analyze", s(&out)])).contains("verdict: mixing"));
}

#[test]
fn stage_and_hyper() {
    let dir = TempDir::new().unwrap();
    let tent = file(&dir, "tent.map", TENT);
    let out = stdout(&dendro(&["stage", s(&tent), "--at", "e:2/5"]));
    assert!(out.contains("2 branch points"), "{out}");
    let out = stdout(&dendro(&["hyper", s(&tent), "--sets", "2", "--max-period", "1"]));
    assert!(out.contains("periodic set {e:2/5, e:4/5} period 1"), "{out}");
    assert!(out.contains("periodic points: found in every arc"));
    let out = stdout(&dendro(&["hyper", s(&file(&dir, "c.map", COLLAPSE))]));
    assert!(out.contains("periodic points: sparse"));
}
