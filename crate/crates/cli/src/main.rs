use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dendro_core::decomposition::{terminal_decomposition, verify_decomposition};
use dendro_core::format::{parse_map, parse_point, write_map};
use dendro_core::graph::{classify, dump};
use dendro_core::hyperspace::{almost_meshed_reduction, finite_periodic_sets, invariant_subtrees};
use dendro_core::periodic::{density_certificate, enumerate_periodic};
use dendro_core::perturbation::{attach, dendrite_stage, star_mixing, totalize, AttachSpec, StageState};
use dendro_core::sigma::{collapse_time, first_empty, periodic_endpoint_check, region_exactness, verify_collapse};
use dendro_core::{scalar, CoveringGraph, Error, MarkovMap, MetricTree, Scalar, SymbolWord};

#[derive(Parser, Debug)]
#[command(name = "dendro", version, about = "Exact piecewise-linear Markov dynamics on metric trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Output {
    /// Write the resulting map here instead of printing it.
    #[arg(short = 'o', long = "output")]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Covering graph classification.
    Analyze {
        map: PathBuf,
        /// Also print the covering graph edges.
        #[arg(long)]
        graph: bool,
    },
    /// Periodic orbits up to a period, and optionally a density certificate.
    Periodic {
        map: PathBuf,
        #[arg(long, default_value_t = 4)]
        max_period: usize,
        /// Cell size for the density check, as p/q.
        #[arg(long, value_parser = rational)]
        resolution: Option<Scalar>,
        /// Period budget for the density check.
        #[arg(long, default_value_t = 12)]
        budget: usize,
    },
    /// Terminal decomposition of a transitive map.
    Decompose { map: PathBuf },
    /// Mixing perturbation of a transitive map that agrees with it on its partition.
    Totalize {
        map: PathBuf,
        #[arg(long, value_parser = rational)]
        eps: Scalar,
        #[command(flatten)]
        out: Output,
    },
    /// Glue a cycle of subtrees to an invariant base.
    Attach {
        map: PathBuf,
        /// Edge names of the base subtree, comma separated.
        #[arg(long)]
        base: String,
        /// Edge names of each cycle member; members separated by ';'.
        #[arg(long)]
        cycle: String,
        /// Attachment points, one per member, comma separated.
        #[arg(long)]
        points: String,
        #[arg(long, value_parser = rational)]
        eps: Scalar,
        #[command(flatten)]
        out: Output,
    },
    /// Mixing map on a star close to the identity.
    StarMix {
        #[arg(long)]
        n: usize,
        #[arg(long, value_parser = rational)]
        eps: Scalar,
        #[command(flatten)]
        out: Output,
    },
    /// Grow the tree by pinned branch-point orbits, one stage per --at.
    Stage {
        map: PathBuf,
        #[arg(long, value_parser = rational, default_value = "1")]
        eps: Scalar,
        /// Point of the current tree to pin, once per stage.
        #[arg(long = "at")]
        at: Vec<String>,
        #[arg(long, default_value_t = 3)]
        degree: usize,
        #[command(flatten)]
        out: Output,
    },
    /// Checks on words for the branch-point rewriting map.
    Sigma {
        /// Words like "(1,2)(3,4)"; "-" is the empty word.
        words: Vec<String>,
        /// Read further words from a file, one per line.
        #[arg(long)]
        batch: Option<PathBuf>,
        #[arg(long)]
        collapse: bool,
        /// Check the periodic endpoint identity for this n.
        #[arg(long)]
        periodic: Option<usize>,
        /// Check region exactness at this depth.
        #[arg(long)]
        region: Option<u64>,
    },
    /// Periodic subsets and free-arc periodic points.
    Hyper {
        map: PathBuf,
        #[arg(long, value_parser = rational, default_value = "1/4")]
        resolution: Scalar,
        /// Period bound for the listed periodic sets.
        #[arg(long, default_value_t = 2)]
        max_period: usize,
        /// Also list periodic finite sets up to this size.
        #[arg(long)]
        sets: Option<usize>,
        /// Period budget for the periodic point search in each arc.
        #[arg(long, default_value_t = 8)]
        budget: usize,
    },
}

fn rational(s: &str) -> Result<Scalar, String> {
    scalar::parse(s).map_err(|e| e.to_string())
}

/// Failures with their exit codes: 1 usage or parse, 2 validation, 3 inconclusive.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(Error::Parse { .. }) => 1,
            Failure::Core(Error::Inconclusive(_) | Error::RefinementDiverges(..)) => 3,
            Failure::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

type Run = Result<String, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<MarkovMap, Failure> {
    Ok(parse_map(&read(path)?)?)
}

/// Writes the map to `-o` when given, otherwise appends it to the report.
fn emit(report: &mut String, map: &MarkovMap, out: &Output) -> Result<(), Failure> {
    let text = write_map(map)?;
    match &out.output {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            writeln!(report, "wrote {}", path.display()).unwrap();
        }
        None => report.push_str(&text),
    }
    Ok(())
}

fn edge_names(tree: &MetricTree, list: &str) -> Result<BTreeSet<usize>, Failure> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|name| {
            tree.edge_by_name(name)
                .ok_or_else(|| Failure::Usage(format!("unknown edge {name}")))
        })
        .collect()
}

fn analyze(map: &Path, graph: bool) -> Run {
    let f = load(map)?;
    let mut out = classify(&f).to_string();
    if graph {
        out.push_str(&dump(&CoveringGraph::build(&f)));
    }
    Ok(out)
}

fn periodic(map: &Path, max_period: usize, resolution: Option<Scalar>, budget: usize) -> Run {
    let f = load(map)?;
    let set = enumerate_periodic(&f, max_period)?;
    let mut out = String::new();
    for o in &set.orbits {
        writeln!(out, "{}", o.render(&f)).unwrap();
    }
    for p in &set.intervals {
        let walk: Vec<String> = p.walk.iter().map(|i| format!("I{i}")).collect();
        writeln!(out, "interval of periodic points: walk {} (period divides {})", walk.join(","), p.walk.len()).unwrap();
    }
    writeln!(out, "orbits: {}", set.orbits.len()).unwrap();
    if let Some(eps) = resolution {
        let cert = density_certificate(&f, &eps, budget)?;
        writeln!(out, "density: {cert}").unwrap();
    }
    Ok(out)
}

fn decompose(map: &Path) -> Run {
    let f = load(map)?;
    let d = terminal_decomposition(&f)?;
    let report = verify_decomposition(&f, &d);
    let mut out = format!("pieces: {}\n{}{report}", d.len(), d.render());
    writeln!(out, "verification: {}", if report.all_pass() { "pass" } else { "fail" }).unwrap();
    if report.all_pass() {
        Ok(out)
    } else {
        Err(Failure::Core(Error::Validation(out)))
    }
}

fn totalize_cmd(map: &Path, eps: &Scalar, out: &Output) -> Run {
    let f = load(map)?;
    let c = totalize(&f, eps)?;
    let mut report = c.to_string();
    emit(&mut report, &c.map, out)?;
    Ok(report)
}

fn attach_cmd(map: &Path, base: &str, cycle: &str, points: &str, eps: &Scalar, out: &Output) -> Run {
    let f = load(map)?;
    let tree = f.tree();
    let spec = AttachSpec {
        base: edge_names(tree, base)?,
        cycle: cycle.split(';').map(|c| edge_names(tree, c)).collect::<Result<_, _>>()?,
        points: points
            .split(',')
            .map(|p| parse_point(tree, p.trim()))
            .collect::<Result<_, _>>()?,
    };
    let c = attach(&f, &spec, eps)?;
    let mut report = c.to_string();
    emit(&mut report, &c.map, out)?;
    Ok(report)
}

fn star_mix(n: usize, eps: &Scalar, out: &Output) -> Run {
    let c = star_mixing(n, eps)?;
    let mut report = c.to_string();
    emit(&mut report, &c.map, out)?;
    Ok(report)
}

fn stage(map: &Path, eps: &Scalar, at: &[String], degree: usize, out: &Output) -> Run {
    let mut state = StageState::initial(load(map)?, eps)?;
    for id in at {
        let r = parse_point(state.tree(), id)?;
        state = dendrite_stage(&state, Some(&r), degree)?;
    }
    let mut report = String::new();
    for line in &state.log {
        writeln!(report, "{line}").unwrap();
    }
    writeln!(report, "stage {}: {} vertices, {} branch points", state.stage, state.tree().vertex_count(), state.tree().branch_points().len()).unwrap();
    emit(&mut report, &state.map, out)?;
    Ok(report)
}

fn sigma_cmd(words: &[String], batch: Option<&Path>, collapse: bool, periodic: Option<usize>, region: Option<u64>) -> Run {
    let mut texts: Vec<String> = words.to_vec();
    if let Some(path) = batch {
        texts.extend(
            read(path)?
                .lines()
                .map(|l| l.split('#').next().unwrap_or("").trim().to_string())
                .filter(|l| !l.is_empty()),
        );
    }
    if texts.is_empty() {
        return Err(Failure::Usage("no words given".into()));
    }
    let mut out = String::new();
    let mut all = true;
    for text in &texts {
        let w: SymbolWord = text.parse()?;
        let m = collapse_time(&w)?;
        let mut parts = vec![format!("m={m}")];
        if collapse {
            let ok = verify_collapse(&w)?;
            all &= ok;
            parts.push(format!("first empty at {}", first_empty(&w)));
            parts.push(if ok { "verified".into() } else { "FAILED".into() });
        }
        if let Some(n) = periodic {
            let ok = periodic_endpoint_check(&w, n)?;
            all &= ok;
            parts.push(format!("periodic n={n} {}", if ok { "verified" } else { "FAILED" }));
        }
        if let Some(depth) = region {
            let ok = region_exactness(&w, depth)?;
            all &= ok;
            parts.push(format!("region L={depth} {}", if ok { "verified" } else { "FAILED" }));
        }
        writeln!(out, "{w}: {}", parts.join(", ")).unwrap();
    }
    if all {
        Ok(out)
    } else {
        Err(Failure::Core(Error::Validation(out)))
    }
}

fn hyper(map: &Path, resolution: &Scalar, max_period: usize, sets: Option<usize>, budget: usize) -> Run {
    let f = load(map)?;
    let mut out = String::new();
    if let Some(card) = sets {
        for s in finite_periodic_sets(&f, max_period, card)? {
            let el = dendro_core::HyperElement::Finite(s.points);
            writeln!(out, "periodic set {} period {}", el.render(&f), s.period).unwrap();
        }
        for t in invariant_subtrees(&f)? {
            let el = dendro_core::HyperElement::Continuum(t);
            writeln!(out, "invariant subtree {}", el.render(&f)).unwrap();
        }
    }
    out.push_str(&almost_meshed_reduction(&f, resolution, budget)?.to_string());
    Ok(out)
}

fn run(cli: Cli) -> Run {
    match cli.command {
        Command::Analyze { map, graph } => analyze(&map, graph),
        Command::Periodic { map, max_period, resolution, budget } => periodic(&map, max_period, resolution, budget),
        Command::Decompose { map } => decompose(&map),
        Command::Totalize { map, eps, out } => totalize_cmd(&map, &eps, &out),
        Command::Attach { map, base, cycle, points, eps, out } => attach_cmd(&map, &base, &cycle, &points, &eps, &out),
        Command::StarMix { n, eps, out } => star_mix(n, &eps, &out),
        Command::Stage { map, eps, at, degree, out } => stage(&map, &eps, &at, degree, &out),
        Command::Sigma { words, batch, collapse, periodic, region } => {
            sigma_cmd(&words, batch.as_deref(), collapse, periodic, region)
        }
        Command::Hyper { map, resolution, max_period, sets, budget } => {
            hyper(&map, &resolution, max_period, sets, budget)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Core(Error::Validation(report))) if report.contains('\n') => {
            print!("{report}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
