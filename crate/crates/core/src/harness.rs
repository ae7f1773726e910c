//! Benchmark sweeps: run kernels over modes, thread counts, tile sizes and
//! hierarchy choices, verify against the reference, and tabulate.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::edt::MarkStrategy;
use crate::kernels::{self, Kernel, KernelError};
use crate::loop_tree::{ArrayStore, LoopTree, LoopType, NodeId};
use crate::runtime::{run, Metrics, Mode, Program, RunError, RunOptions};
use crate::runtime::trace::TraceEvent;
use crate::sym::Sym;

/// How EDT boundaries are chosen.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Hierarchy {
    /// One EDT level per tile-boundary band.
    #[default]
    Tile,
    /// Split each inter-tile chain into this many nested levels.
    Levels(usize),
    /// Mark the loops with these variable names.
    Vars(Vec<String>),
}

impl FromStr for Hierarchy {
    type Err = String;

    fn from_str(s: &str) -> Result<Hierarchy, String> {
        if s == "tile" {
            return Ok(Hierarchy::Tile);
        }
        let rest = s.strip_prefix("user:").ok_or_else(|| format!("unknown hierarchy `{s}` (expected tile, user:L or user:var,...)"))?;
        if let Ok(l) = rest.parse::<usize>() {
            return if l == 0 { Err("hierarchy depth must be at least 1".into()) } else { Ok(Hierarchy::Levels(l)) };
        }
        let vars: Vec<String> = rest.split(',').map(|v| v.trim().to_owned()).collect();
        if vars.iter().any(|v| v.is_empty() || !v.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')) {
            return Err(format!("bad loop list `{rest}`"));
        }
        Ok(Hierarchy::Vars(vars))
    }
}

impl fmt::Display for Hierarchy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hierarchy::Tile => f.write_str("tile"),
            Hierarchy::Levels(l) => write!(f, "user:{l}"),
            Hierarchy::Vars(v) => write!(f, "user:{}", v.join(",")),
        }
    }
}

impl Hierarchy {
    pub fn strategy(&self, tree: &LoopTree) -> Result<MarkStrategy, HarnessError> {
        match self {
            Hierarchy::Tile => Ok(MarkStrategy::TileGranularity),
            Hierarchy::Levels(l) => Ok(MarkStrategy::UserProvided(level_marks(tree, *l))),
            Hierarchy::Vars(vars) => {
                let mut marks = BTreeSet::new();
                for v in vars {
                    let sym = Sym::new(v);
                    let before = marks.len();
                    marks.extend(tree.nodes().iter().filter(|n| !n.is_root() && n.var == sym).map(|n| n.id));
                    if marks.len() == before {
                        return Err(HarnessError::Hierarchy(format!("no loop named `{v}` in {}", tree.name)));
                    }
                }
                Ok(MarkStrategy::UserProvided(marks))
            }
        }
    }
}

/// For every tile boundary, takes the run of non-sequential loops ending at
/// it, cuts the run into `levels` equal parts from the outside (the last part
/// may be short) and marks the innermost loop of each part.
pub fn level_marks(tree: &LoopTree, levels: usize) -> BTreeSet<NodeId> {
    let mut marks = BTreeSet::new();
    for n in tree.nodes().iter().filter(|n| n.tile_boundary) {
        let mut chain = vec![n.id];
        let mut cur = n.parent;
        while let Some(p) = cur {
            let node = tree.node(p);
            if node.is_root() || node.loop_type == LoopType::Sequential {
                break;
            }
            chain.push(p);
            cur = node.parent;
        }
        chain.reverse();
        let part = chain.len().div_ceil(levels.max(1));
        marks.extend(chain.chunks(part).map(|c| *c.last().expect("nonempty chunk")));
    }
    marks
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("{0}")]
    Hierarchy(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Run(#[from] RunError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kernel: String,
    pub size: Option<i64>,
    /// Empty for the kernel's default tiles; a single entry applies to every
    /// tiled dimension.
    pub tiles: Vec<i64>,
    pub mode: Mode,
    pub threads: usize,
    pub hierarchy: Hierarchy,
    pub reps: usize,
    pub verify: bool,
    pub trace: bool,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(kernel: &str, mode: Mode, threads: usize) -> RunConfig {
        RunConfig {
            kernel: kernel.to_owned(),
            size: None,
            tiles: Vec::new(),
            mode,
            threads,
            hierarchy: Hierarchy::Tile,
            reps: 3,
            verify: false,
            trace: false,
            seed: 42,
        }
    }
}

/// First cell where a run disagreed with the reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub array: String,
    pub index: Vec<i64>,
    pub got: f64,
    pub want: f64,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let idx: Vec<String> = self.index.iter().map(|i| i.to_string()).collect();
        write!(f, "{}[{}] = {} but reference has {}", self.array, idx.join("]["), self.got, self.want)
    }
}

#[derive(Debug, Clone)]
pub struct Row {
    pub kernel: String,
    pub mode: Mode,
    pub threads: usize,
    pub tiles: Vec<i64>,
    pub seconds: f64,
    pub gflops: f64,
    pub metrics: Metrics,
    pub checksum: u64,
    /// `None` when not verified.
    pub verified: Option<Result<(), Mismatch>>,
    pub trace: Vec<TraceEvent>,
}

/// Everything shared by runs of one kernel instance.
pub struct Prepared {
    pub kernel: &'static dyn Kernel,
    pub program: Program,
    pub params: crate::range_expr::Env,
    pub tiles: Vec<i64>,
    pub initial: ArrayStore,
    reference: Option<ArrayStore>,
}

impl Prepared {
    pub fn new(cfg: &RunConfig) -> Result<Prepared, HarnessError> {
        let kernel = kernels::lookup(&cfg.kernel).ok_or_else(|| HarnessError::UnknownKernel(cfg.kernel.clone()))?;
        let tiles = match cfg.tiles.as_slice() {
            [] => kernel.default_tiles(),
            &[t] if kernel.tile_dims() != 1 => vec![t; kernel.tile_dims()],
            t => t.to_vec(),
        };
        let tree = kernel.build(&tiles)?;
        let strategy = cfg.hierarchy.strategy(&tree)?;
        let program = Program::new(tree, &strategy, &[]).map_err(RunError::from)?;
        let params = kernel.params(cfg.size.unwrap_or_else(|| kernel.default_size()));
        let initial = ArrayStore::allocate(&program.tree.arrays, &params).map_err(KernelError::from)?;
        kernel.init(&initial, &params, cfg.seed);
        Ok(Prepared {
            kernel,
            program,
            params,
            tiles,
            initial,
            reference: None,
        })
    }

    fn reference(&mut self) -> Result<&ArrayStore, HarnessError> {
        if self.reference.is_none() {
            let r = self.initial.deep_clone();
            self.kernel.reference(&self.params, &r)?;
            self.reference = Some(r);
        }
        Ok(self.reference.as_ref().expect("just computed"))
    }

    /// Best-of-`reps` run of one (mode, threads) point. Every repetition is
    /// verified when requested; the first mismatch wins.
    pub fn run(&mut self, cfg: &RunConfig) -> Result<Row, HarnessError> {
        let mut best: Option<(Metrics, u64)> = None;
        let mut trace = Vec::new();
        let mut verified = cfg.verify.then_some(Ok(()));
        for rep in 0..cfg.reps.max(1) {
            let mut opts = RunOptions::new(cfg.mode, cfg.threads);
            opts.trace = cfg.trace && rep == 0;
            opts.seed = cfg.seed.wrapping_add(rep as u64);
            let out = run(&self.program, &self.params, self.initial.deep_clone(), &opts)?;
            if cfg.verify && matches!(verified, Some(Ok(()))) {
                let reference = self.reference()?;
                if let Some((array, index, got, want)) = out.store.first_difference(reference) {
                    verified = Some(Err(Mismatch {
                        array: array.to_string(),
                        index,
                        got: f64::from_bits(got),
                        want: f64::from_bits(want),
                    }));
                }
            }
            if opts.trace {
                trace = out.trace;
            }
            if best.as_ref().map_or(true, |b| out.metrics.seconds < b.0.seconds) {
                best = Some((out.metrics, out.store.checksum()));
            }
        }
        let (metrics, checksum) = best.expect("at least one repetition");
        let flops = self.kernel.flops(&self.params);
        Ok(Row {
            kernel: self.kernel.name().to_owned(),
            mode: cfg.mode,
            threads: cfg.threads,
            tiles: self.tiles.clone(),
            seconds: metrics.seconds,
            gflops: if metrics.seconds > 0.0 { flops / metrics.seconds / 1e9 } else { 0.0 },
            metrics,
            checksum,
            verified,
            trace,
        })
    }
}

/// Runs every (mode, threads) point of `base`, in the order given.
pub fn sweep(base: &RunConfig, modes: &[Mode], threads: &[usize]) -> Result<Vec<Row>, HarnessError> {
    let mut prepared = Prepared::new(base)?;
    let mut rows = Vec::new();
    for &mode in modes {
        for &t in threads {
            let cfg = RunConfig {
                mode,
                threads: t,
                ..base.clone()
            };
            rows.push(prepared.run(&cfg)?);
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "kernel,mode,threads,tiles,seconds,gflops,tasks,puts,get_misses,requeues,steals";

fn tiles_field(tiles: &[i64]) -> String {
    if tiles.is_empty() {
        "-".to_owned()
    } else {
        tiles.iter().map(|t| t.to_string()).collect::<Vec<_>>().join("x")
    }
}

pub fn emit_csv(rows: &[Row]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{}\n", CsvRow::from(r)));
    }
    out
}

/// The fields one CSV line carries.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub kernel: String,
    pub mode: Mode,
    pub threads: usize,
    pub tiles: Vec<i64>,
    pub seconds: f64,
    pub gflops: f64,
    pub tasks: u64,
    pub puts: u64,
    pub get_misses: u64,
    pub requeues: u64,
    pub steals: u64,
}

impl From<&Row> for CsvRow {
    fn from(r: &Row) -> CsvRow {
        CsvRow {
            kernel: r.kernel.clone(),
            mode: r.mode,
            threads: r.threads,
            tiles: r.tiles.clone(),
            seconds: r.seconds,
            gflops: r.gflops,
            tasks: r.metrics.tasks,
            puts: r.metrics.puts,
            get_misses: r.metrics.get_misses,
            requeues: r.metrics.requeues,
            steals: r.metrics.steals,
        }
    }
}

impl fmt::Display for CsvRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.kernel,
            self.mode,
            self.threads,
            tiles_field(&self.tiles),
            self.seconds,
            self.gflops,
            self.tasks,
            self.puts,
            self.get_misses,
            self.requeues,
            self.steals
        )
    }
}

impl FromStr for CsvRow {
    type Err = String;

    fn from_str(line: &str) -> Result<CsvRow, String> {
        let f: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
        let [kernel, mode, threads, tiles, seconds, gflops, tasks, puts, misses, requeues, steals] = f[..] else {
            return Err(format!("expected 11 fields, found {}", f.len()));
        };
        fn num<T: FromStr>(name: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("bad {name} `{v}`"))
        }
        if kernel.is_empty() {
            return Err("empty kernel name".into());
        }
        let tiles = if tiles == "-" {
            Vec::new()
        } else {
            tiles.split('x').map(|t| num("tile", t)).collect::<Result<_, _>>()?
        };
        Ok(CsvRow {
            kernel: kernel.to_owned(),
            mode: mode.parse()?,
            threads: num("threads", threads)?,
            tiles,
            seconds: num("seconds", seconds)?,
            gflops: num("gflops", gflops)?,
            tasks: num("tasks", tasks)?,
            puts: num("puts", puts)?,
            get_misses: num("get_misses", misses)?,
            requeues: num("requeues", requeues)?,
            steals: num("steals", steals)?,
        })
    }
}

/// Parses CSV text produced by [`emit_csv`], header included.
pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == CSV_HEADER => {}
        _ => return Err("missing CSV header".into()),
    }
    lines.filter(|l| !l.trim().is_empty()).map(str::parse).collect()
}

pub fn human_table(rows: &[Row]) -> String {
    let mut out = format!(
        "{:<16} {:>5} {:>3} {:>9} {:>10} {:>8} {:>9} {:>9} {:>8} {:>8} {:>7} {:>16} {}\n",
        "kernel", "mode", "thr", "tiles", "seconds", "gflops", "tasks", "puts", "misses", "requeue", "steals", "checksum", "verify"
    );
    for r in rows {
        let m = &r.metrics;
        let v = match &r.verified {
            None => "-",
            Some(Ok(())) => "ok",
            Some(Err(_)) => "FAIL",
        };
        out.push_str(&format!(
            "{:<16} {:>5} {:>3} {:>9} {:>10.4} {:>8.3} {:>9} {:>9} {:>8} {:>8} {:>7} {:>16x} {}\n",
            r.kernel,
            r.mode.to_string(),
            r.threads,
            tiles_field(&r.tiles),
            r.seconds,
            r.gflops,
            m.tasks,
            m.puts,
            m.get_misses,
            m.requeues,
            m.steals,
            r.checksum,
            v
        ));
    }
    out
}

/// Parses "1,2,4".
pub fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| format!("bad list element `{x}`")))
        .collect()
}

pub fn parse_modes(s: &str) -> Result<Vec<Mode>, String> {
    if s == "all" {
        Ok(Mode::ALL.to_vec())
    } else {
        s.split(',').map(|m| m.trim().parse()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::GaussSeidel3d;
    use crate::edt::{form_edts, mark_tree};

    fn small(kernel: &str) -> RunConfig {
        RunConfig {
            size: Some(12),
            tiles: vec![4],
            reps: 1,
            verify: true,
            ..RunConfig::new(kernel, Mode::Dep, 1)
        }
    }

    #[test]
    fn hierarchy_parsing() {
        assert_eq!("tile".parse::<Hierarchy>().unwrap(), Hierarchy::Tile);
        assert_eq!("user:2".parse::<Hierarchy>().unwrap(), Hierarchy::Levels(2));
        assert_eq!("user:jj,kk".parse::<Hierarchy>().unwrap(), Hierarchy::Vars(vec!["jj".into(), "kk".into()]));
        assert!("user:0".parse::<Hierarchy>().is_err());
        assert!("bogus".parse::<Hierarchy>().is_err());
        assert!("user:a,,b".parse::<Hierarchy>().is_err());
        for h in ["tile", "user:3", "user:ii,kk"] {
            assert_eq!(h.parse::<Hierarchy>().unwrap().to_string(), h);
        }
    }

    #[test]
    fn two_levels_on_gs3d_marks_second_and_tile_loops() {
        let tree = GaussSeidel3d.build(&[4, 4, 4]).unwrap();
        let marks = level_marks(&tree, 2);
        let names: Vec<String> = marks.iter().map(|&n| tree.node(n).var.to_string()).collect();
        assert_eq!(names, ["jj", "kk"]);
        let s = Hierarchy::Levels(2).strategy(&tree).unwrap();
        let forest = form_edts(&tree, &mark_tree(&tree, &s).unwrap()).unwrap();
        let depth = |mut e: u32| {
            let mut d = 0;
            while let Some(p) = forest.get(e).parent {
                d += 1;
                e = p;
            }
            d
        };
        let leaf = forest.edts.iter().find(|e| e.is_leaf()).unwrap();
        assert_eq!(depth(leaf.id), 2);
    }

    #[test]
    fn csv_header_and_round_trip() {
        assert_eq!(emit_csv(&[]), format!("{CSV_HEADER}\n"));
        let rows = sweep(&small("jac2d5p"), &[Mode::Dep], &[1]).unwrap();
        let text = emit_csv(&rows);
        assert_eq!(text.lines().count(), 2);
        let back = parse_csv(&text).unwrap();
        assert_eq!(back, vec![CsvRow::from(&rows[0])]);
        assert_eq!(back[0].tiles, [4, 4]);
        assert!("a,b".parse::<CsvRow>().is_err());
        assert!("K,dep,1,4x,1,1,1,1,1,1,1".parse::<CsvRow>().is_err());
    }

    #[test]
    fn sweep_verifies_and_checksums_agree() {
        let rows = sweep(&small("figseq"), &Mode::ALL, &[1, 2]).unwrap();
        assert_eq!(rows.len(), 6);
        for r in &rows {
            assert_eq!(r.verified, Some(Ok(())));
            assert_eq!(r.checksum, rows[0].checksum);
        }
        assert!(human_table(&rows).lines().count() == 7);
    }

    #[test]
    fn user_hierarchy_runs_verified() {
        let cfg = RunConfig {
            hierarchy: Hierarchy::Levels(2),
            ..small("gs3d7p")
        };
        let rows = sweep(&cfg, &Mode::ALL, &[2]).unwrap();
        assert!(rows.iter().all(|r| r.verified == Some(Ok(()))));
    }

    #[test]
    fn unknown_kernel_and_loop_are_errors() {
        assert!(matches!(Prepared::new(&small("nope")), Err(HarnessError::UnknownKernel(_))));
        let cfg = RunConfig {
            hierarchy: Hierarchy::Vars(vec!["zz".into()]),
            ..small("sor")
        };
        assert!(matches!(Prepared::new(&cfg), Err(HarnessError::Hierarchy(_))));
    }

    #[test]
    fn wrong_body_is_reported_at_first_cell() {
        let cfg = small("sor");
        let mut prep = Prepared::new(&cfg).unwrap();
        let a = prep.initial.id(Sym::new("A")).unwrap();
        let (i, j) = (Sym::new("i"), Sym::new("j"));
        prep.program.tree.set_body("S0", std::sync::Arc::new(move |e, m| m.write_f64(a, &[e[i], e[j]], -1.0)));
        let row = prep.run(&cfg).unwrap();
        let Some(Err(m)) = row.verified else { panic!("expected a mismatch") };
        assert_eq!((m.array.as_str(), m.index.as_slice(), m.got), ("A", &[1, 1][..], -1.0));
        assert!(m.to_string().starts_with("A[1][1] = -1"));
    }

    #[test]
    fn list_parsing() {
        assert_eq!(parse_list::<usize>("1,2, 4").unwrap(), [1, 2, 4]);
        assert!(parse_list::<usize>("1,x").is_err());
        assert_eq!(parse_modes("all").unwrap(), Mode::ALL);
        assert_eq!(parse_modes("dep,block").unwrap(), [Mode::Dep, Mode::Block]);
        assert!(parse_modes("fast").is_err());
    }
}
