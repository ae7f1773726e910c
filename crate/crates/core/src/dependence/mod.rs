//! Runtime dependence predicates synthesized from loop types.
//!
//! Permutable dimensions get point-to-point antecedents (`tag − d·e_k`, kept
//! only when the shifted tag is still inside the loop bounds), sequential
//! dimensions are realized as ordered phases of a group, and parallel
//! dimensions need nothing.

mod oracle;

pub use oracle::{brute_force_tile_deps, covers, dump_edges, uncovered, TaskGraph};
pub(crate) use oracle::phases;

use std::fmt;
use std::sync::Arc;

use smallvec::SmallVec;
use thiserror::Error;

use crate::edt::{CompileTimeEdt, EdtForest};
use crate::loop_tree::{ExecError, LoopTree, LoopType};
use crate::range_expr::Env;
use crate::sym::Sym;

pub type Coords = SmallVec<[i64; 6]>;
pub type Filter = Arc<dyn Fn(&Env) -> bool + Send + Sync>;

/// One task instance: an EDT id plus its coordinates at levels `0..=stop`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskTag {
    pub edt: u32,
    pub coords: Coords,
}

impl TaskTag {
    pub fn new(edt: u32, coords: &[i64]) -> TaskTag {
        TaskTag {
            edt,
            coords: coords.iter().copied().collect(),
        }
    }
}

impl fmt::Display for TaskTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:(", self.edt)?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

impl std::str::FromStr for TaskTag {
    type Err = String;

    fn from_str(s: &str) -> Result<TaskTag, String> {
        let (edt, rest) = s.split_once(':').ok_or("missing `:`")?;
        let edt = edt.parse().map_err(|_| format!("bad edt id `{edt}`"))?;
        let inner = rest
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or("coordinates must be parenthesized")?;
        let coords = if inner.is_empty() {
            Coords::new()
        } else {
            inner
                .split(',')
                .map(|c| c.parse::<i64>().map_err(|_| format!("bad coordinate `{c}`")))
                .collect::<Result<_, _>>()?
        };
        Ok(TaskTag { edt, coords })
    }
}

#[derive(Clone)]
pub enum DimDep {
    None,
    PointToPoint { distance: i64, filter: Option<Filter> },
    SequentialFan,
}

impl fmt::Debug for DimDep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DimDep::None => f.write_str("None"),
            DimDep::PointToPoint { distance, filter } => {
                write!(f, "PointToPoint(d={distance}{})", if filter.is_some() { ", filtered" } else { "" })
            }
            DimDep::SequentialFan => f.write_str("SequentialFan"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DepError {
    #[error("distance set is empty")]
    EmptyDistances,
    #[error("distance {0} is not positive")]
    NonPositiveDistance(i64),
    #[error("dimension {k} of EDT {edt} is not point-to-point")]
    NotPointToPoint { edt: u32, k: usize },
    #[error("{instances} statement instances exceed the oracle limit of {limit}")]
    TooLarge { instances: u64, limit: u64 },
    #[error("{0}")]
    Exec(String),
}

impl From<ExecError> for DepError {
    fn from(e: ExecError) -> DepError {
        DepError::Exec(e.to_string())
    }
}

/// Per-EDT, per-dimension dependence kinds.
#[derive(Debug, Clone)]
pub struct DepSpec {
    pub dims: Vec<Vec<DimDep>>,
}

impl DepSpec {
    /// Derives dimension kinds from loop types. Only the locally enumerated
    /// dimensions `start..=stop` carry anything; `distances` overrides the unit
    /// distance of a permutable loop by variable name.
    pub fn from_loop_types(tree: &LoopTree, forest: &EdtForest, distances: &[(Sym, i64)]) -> DepSpec {
        let dims = forest
            .edts
            .iter()
            .map(|e| {
                e.path
                    .iter()
                    .enumerate()
                    .map(|(lvl, &n)| {
                        let node = tree.node(n);
                        if lvl < e.start {
                            return DimDep::None;
                        }
                        match node.loop_type {
                            LoopType::Parallel => DimDep::None,
                            LoopType::Sequential => DimDep::SequentialFan,
                            LoopType::Permutable(_) => DimDep::PointToPoint {
                                distance: distances.iter().find(|(v, _)| *v == node.var).map_or(1, |&(_, d)| d),
                                filter: None,
                            },
                        }
                    })
                    .collect()
            })
            .collect();
        DepSpec { dims }
    }

    pub fn dim(&self, edt: u32, k: usize) -> &DimDep {
        &self.dims[edt as usize][k]
    }

    /// The sequential dimension of an EDT, if any (always its stop level).
    pub fn fan_dim(&self, edt: u32) -> Option<usize> {
        self.dims[edt as usize].iter().position(|d| matches!(d, DimDep::SequentialFan))
    }

    pub fn has_point_to_point(&self, edt: u32) -> bool {
        self.dims[edt as usize].iter().any(|d| matches!(d, DimDep::PointToPoint { .. }))
    }
}

/// Adds a filter on dimension `k` of `edt`: an antecedent on that dimension
/// additionally requires `predicate` on the antecedent's env.
pub fn attach_filter(mut spec: DepSpec, edt: u32, k: usize, predicate: Filter) -> Result<DepSpec, DepError> {
    match spec.dims.get_mut(edt as usize).and_then(|d| d.get_mut(k)) {
        Some(DimDep::PointToPoint { filter, .. }) => {
            *filter = Some(predicate);
            Ok(spec)
        }
        _ => Err(DepError::NotPointToPoint { edt, k }),
    }
}

pub fn gcd_distance(distances: &[i64]) -> Result<i64, DepError> {
    let mut g = 0i64;
    for &d in distances {
        if d < 1 {
            return Err(DepError::NonPositiveDistance(d));
        }
        let (mut a, mut b) = (g, d);
        while b != 0 {
            (a, b) = (b, a % b);
        }
        g = a;
    }
    if g == 0 {
        Err(DepError::EmptyDistances)
    } else {
        Ok(g)
    }
}

/// Parameters plus the tag's coordinates bound to the EDT's loop variables.
pub fn tag_env(tree: &LoopTree, edt: &CompileTimeEdt, params: &Env, coords: &[i64]) -> Env {
    let mut env = params.clone();
    for (&n, &c) in edt.path.iter().zip(coords) {
        env.push(tree.node(n).var, c);
    }
    env
}

/// Whether the tag shifted by `−d` on dimension `k` is still inside every loop
/// range at levels `0..=stop`, re-evaluating all bounds under the shift.
pub fn interior(tree: &LoopTree, edt: &CompileTimeEdt, params: &Env, coords: &[i64], k: usize, d: i64) -> bool {
    let mut env = params.clone();
    for (lvl, &n) in edt.path.iter().enumerate() {
        let node = tree.node(n);
        let v = if lvl == k { coords[lvl] - d } else { coords[lvl] };
        if !matches!(node.contains(&env, v), Ok(true)) {
            return false;
        }
        env.push(node.var, v);
    }
    true
}

pub fn antecedents(
    tree: &LoopTree,
    forest: &EdtForest,
    spec: &DepSpec,
    params: &Env,
    tag: &TaskTag,
) -> SmallVec<[TaskTag; 4]> {
    let edt = forest.get(tag.edt);
    let mut out = SmallVec::new();
    for (k, dim) in spec.dims[tag.edt as usize].iter().enumerate() {
        let DimDep::PointToPoint { distance, filter } = dim else {
            continue;
        };
        if !interior(tree, edt, params, &tag.coords, k, *distance) {
            continue;
        }
        let mut coords = tag.coords.clone();
        coords[k] -= distance;
        if let Some(f) = filter {
            if !f(&tag_env(tree, edt, params, &coords)) {
                continue;
            }
        }
        out.push(TaskTag { edt: tag.edt, coords });
    }
    out
}

/// Enumerates the local coordinates of one group: all tags of `edt` whose
/// first `start` coordinates equal `prefix`, in lexicographic order.
pub fn group_tags(tree: &LoopTree, edt: &CompileTimeEdt, params: &Env, prefix: &[i64]) -> Result<Vec<Coords>, ExecError> {
    let mut env = tag_env(tree, edt, params, prefix);
    let mut out = Vec::new();
    let mut coords: Coords = prefix.iter().copied().collect();
    let base = params.len();
    tree.for_each_point(edt.local_loops(), &mut env, &mut |e| {
        coords.truncate(prefix.len());
        coords.extend(e.iter().skip(base + prefix.len()).map(|(_, v)| v));
        out.push(coords.clone());
        Ok(())
    })?;
    Ok(out)
}
