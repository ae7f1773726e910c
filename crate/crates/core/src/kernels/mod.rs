//! Benchmark kernels, authored in post-tiling form, each with an independent
//! plain-loop reference.

mod dense;
mod stencils;
pub mod toys;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::loop_tree::{
    AccessMode, AccessSummary, ArrayStore, Body, LoopTree, LoopType, NodeId, Statement, StoreError, TreeBuilder,
    TreeError,
};
use crate::range_expr::Env;
use crate::sym::Sym;

pub use dense::{LuDecomposition, MatMult};
pub use stencils::{FigSeq, GaussSeidel2d, GaussSeidel3d, HeatDiamond, Jacobi2d, Jacobi3d, Sor};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("kernel takes {expected} tile size(s), got {got}")]
    TileCount { expected: usize, got: usize },
    #[error("tile sizes must be positive")]
    TileSize,
    #[error("{cells} cells exceed the reference size guard")]
    TooLarge { cells: u64 },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub trait Kernel: Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    /// Parameter bindings for a problem size.
    fn params(&self, size: i64) -> Env;
    fn default_size(&self) -> i64;
    /// How many tile sizes `build` takes; 0 when the tiling is fixed.
    fn tile_dims(&self) -> usize;
    /// Builds the tiled loop tree. `tiles` has `tile_dims()` entries.
    fn build_tiled(&self, tiles: &[i64]) -> Result<LoopTree, KernelError>;
    /// Plain nested-loop implementation, written without the loop tree.
    fn reference_impl(&self, params: &Env, store: &ArrayStore) -> Result<(), StoreError>;
    fn flops(&self, params: &Env) -> f64;
    /// Floating-point operations of one instance of the named statement.
    fn statement_flops(&self, stmt: &str) -> f64;

    fn init(&self, store: &ArrayStore, _params: &Env, seed: u64) {
        store.fill_random(seed);
    }

    fn default_tiles(&self) -> Vec<i64> {
        default_tile_policy(self.tile_dims())
    }

    fn build(&self, tiles: &[i64]) -> Result<LoopTree, KernelError> {
        let tiles = if tiles.is_empty() { self.default_tiles() } else { tiles.to_vec() };
        if tiles.len() != self.tile_dims() {
            return Err(KernelError::TileCount {
                expected: self.tile_dims(),
                got: tiles.len(),
            });
        }
        if tiles.iter().any(|&t| t < 1) {
            return Err(KernelError::TileSize);
        }
        self.build_tiled(&tiles)
    }

    fn reference(&self, params: &Env, store: &ArrayStore) -> Result<(), KernelError> {
        let cells: u64 = store.arrays().iter().map(|a| a.len() as u64).sum();
        if cells > REFERENCE_CELL_LIMIT {
            return Err(KernelError::TooLarge { cells });
        }
        Ok(self.reference_impl(params, store)?)
    }
}

const REFERENCE_CELL_LIMIT: u64 = 1 << 28;

/// 64 for the innermost tiled loop, 16 for the others.
pub fn default_tile_policy(dims: usize) -> Vec<i64> {
    (0..dims).map(|d| if d + 1 == dims { 64 } else { 16 }).collect()
}

pub fn registry() -> Vec<&'static dyn Kernel> {
    vec![
        &HeatDiamond,
        &Jacobi2d,
        &Jacobi3d,
        &GaussSeidel2d,
        &GaussSeidel3d,
        &Sor,
        &MatMult,
        &LuDecomposition,
        &FigSeq,
    ]
}

pub fn lookup(name: &str) -> Option<&'static dyn Kernel> {
    let key: String = name.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
    registry().into_iter().find(|k| {
        k.name().chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase() == key
    })
}

/// Counts executed instances per statement name by running the tree
/// sequentially with counting bodies.
pub fn instance_counts(tree: &LoopTree, params: &Env) -> Result<HashMap<String, u64>, crate::loop_tree::ExecError> {
    let mut tree = tree.clone();
    let names: Vec<String> = tree.statements().iter().map(|s| s.name.clone()).collect();
    let counters: Vec<(String, Arc<AtomicU64>)> = names.iter().map(|n| (n.clone(), Arc::new(AtomicU64::new(0)))).collect();
    for (n, c) in &counters {
        let c = c.clone();
        tree.set_body(
            n,
            Arc::new(move |_, _| {
                c.fetch_add(1, Ordering::Relaxed);
                Ok(())
            }),
        );
    }
    let store = ArrayStore::allocate(&[], params).expect("empty store");
    tree.iterate_sequentially(params, &store)?;
    Ok(counters.into_iter().map(|(n, c)| (n, c.load(Ordering::Relaxed))).collect())
}

pub(crate) fn env(pairs: &[(&str, i64)]) -> Env {
    pairs.iter().map(|&(k, v)| (k, v)).collect()
}

pub(crate) const R: AccessMode = AccessMode::Read;
pub(crate) const W: AccessMode = AccessMode::Write;

pub(crate) fn stmt(
    b: &TreeBuilder,
    name: &str,
    acc: &[(AccessMode, &str, &[&str])],
    body: Body,
) -> Result<Statement, TreeError> {
    let accesses = acc
        .iter()
        .map(|&(mode, array, idx)| {
            Ok(AccessSummary {
                array: Sym::new(array),
                indices: b.indices(name, idx)?,
                mode,
            })
        })
        .collect::<Result<_, TreeError>>()?;
    Ok(Statement {
        name: name.to_owned(),
        body,
        accesses,
    })
}

pub(crate) fn syms<const K: usize>(names: [&str; K]) -> [Sym; K] {
    names.map(Sym::new)
}

/// One dimension of a rectangular nest to be tiled.
pub(crate) struct Dim<'a> {
    pub var: &'a str,
    pub lo: &'a str,
    pub hi: &'a str,
}

/// Adds inter-tile loops (named by doubling the variable) then intra-tile
/// loops. The last inter-tile loop is the tile boundary. Returns the
/// innermost intra-tile loop.
pub(crate) fn tiled_nest(
    b: &mut TreeBuilder,
    parent: NodeId,
    dims: &[Dim],
    tiles: &[i64],
    inter: &[LoopType],
    intra: LoopType,
) -> Result<NodeId, TreeError> {
    use crate::loop_tree::LoopSpec;
    let mut node = parent;
    for (n, (d, (&s, &ty))) in dims.iter().zip(tiles.iter().zip(inter)).enumerate() {
        let tv = format!("{0}{0}", d.var);
        let mut spec = LoopSpec::new(&tv, format!("FLOOR({}, {s})", d.lo), format!("FLOOR({}, {s})", d.hi));
        spec.loop_type = ty;
        spec.tile_boundary = n + 1 == dims.len();
        node = b.add_loop(node, spec)?;
    }
    for (d, &s) in dims.iter().zip(tiles) {
        let tv = format!("{0}{0}", d.var);
        let mut spec = LoopSpec::new(
            d.var,
            format!("MAX({}, {s}*{tv})", d.lo),
            format!("MIN({}, {s}*{tv} + {})", d.hi, s - 1),
        );
        spec.loop_type = intra;
        node = b.add_loop(node, spec)?;
    }
    Ok(node)
}
