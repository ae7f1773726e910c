//! Two tiny nests where the plain loop-type dependences are more
//! conservative than necessary: one whose only dependence has distance 2
//! along t, and one whose t loop splits into two halves with no dependence
//! inside either half.

use std::sync::Arc;

use super::{env, stmt, KernelError, R, W};
use crate::dependence::Filter;
use crate::loop_tree::{ElemKind, LoopSpec, LoopTree, TreeBuilder, ROOT};
use crate::range_expr::Env;
use crate::sym::Sym;

const C0: f64 = 0.5;

pub fn params(t: i64, n: i64) -> Env {
    env(&[("T", t), ("N", n)])
}

/// `A[t+1][i] = C0 * A[t-1][i]` for t in [1, T-1], i in [1, N-2]; t is the
/// task dimension, i is split into parallel tiles of `tile`.
pub fn strided(tile: i64) -> Result<LoopTree, KernelError> {
    build("strided", tile, "T+1", &["t+1", "i"], &["t-1", "i"])
}

/// Dependence distances of [`strided`] along t.
pub const STRIDED_DISTANCES: [i64; 1] = [2];

/// `A[t][i] = C0 * A[T-t][i]`: every dependence links t and T-t, so each
/// half of the t range is internally independent.
pub fn mirrored(tile: i64) -> Result<LoopTree, KernelError> {
    build("mirrored", tile, "T", &["t", "i"], &["T-t", "i"])
}

/// First t of the upper half of [`mirrored`].
pub fn split_point(params: &Env) -> i64 {
    (params[Sym::new("T")] + 1) / 2
}

/// Keeps a t-chain edge only when it crosses the split point; edges whose
/// ends lie in the same half are dropped.
pub fn split_filter() -> Filter {
    let (t, tt) = (Sym::new("t"), Sym::new("T"));
    Arc::new(move |ante: &Env| ante[t] == (ante[tt] + 1) / 2 - 1)
}

fn build(name: &str, tile: i64, rows: &str, write: &[&str], read: &[&str]) -> Result<LoopTree, KernelError> {
    if tile < 1 {
        return Err(KernelError::TileSize);
    }
    let mut b = TreeBuilder::new(name, &["T", "N"]);
    let a = b.array("A", ElemKind::F64, &[rows, "N"])?;
    let t = b.add_loop(ROOT, LoopSpec::new("t", "1", "T-1").perm(1))?;
    let ii = b.add_loop(t, LoopSpec::new("ii", format!("FLOOR(1, {tile})"), format!("FLOOR(N-2, {tile})")).par().tile())?;
    let i = b.add_loop(
        ii,
        LoopSpec::new("i", format!("MAX(1, {tile}*ii)"), format!("MIN(N-2, {tile}*ii + {})", tile - 1)).par(),
    )?;
    let wx = b.indices("S0", write)?;
    let rx = b.indices("S0", read)?;
    let s = stmt(
        &b,
        "S0",
        &[(W, "A", write), (R, "A", read)],
        Arc::new(move |e, m| {
            let r = [rx[0].eval(e)?, rx[1].eval(e)?];
            let w = [wx[0].eval(e)?, wx[1].eval(e)?];
            m.write_f64(a, &w, C0 * m.read_f64(a, &r)?)
        }),
    )?;
    b.add_stmt(i, s)?;
    Ok(b.finish())
}
