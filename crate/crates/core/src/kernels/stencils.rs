use std::sync::Arc;

use super::{env, stmt, syms, tiled_nest, Dim, Kernel, KernelError, R, W};
use crate::loop_tree::{ArrayStore, ElemKind, LoopSpec, LoopTree, LoopType, StoreError, TreeBuilder, ROOT};
use crate::range_expr::Env;
use crate::sym::Sym;

const PERM: LoopType = LoopType::Permutable(1);

// Shared arithmetic: loop-tree bodies and references call the same
// functions so their results agree bit for bit.

#[inline]
pub(crate) fn avg5(c: f64, n: f64, s: f64, w: f64, e: f64) -> f64 {
    0.2 * ((((c + n) + s) + w) + e)
}

#[inline]
pub(crate) fn avg7(c: f64, xm: f64, xp: f64, ym: f64, yp: f64, zm: f64, zp: f64) -> f64 {
    ((((((c + xm) + xp) + ym) + yp) + zm) + zp) * (1.0 / 7.0)
}

#[inline]
pub(crate) fn heat7(c: f64, xm: f64, xp: f64, ym: f64, yp: f64, zm: f64, zp: f64) -> f64 {
    c + 0.125 * ((((((xm + xp) + ym) + yp) + zm) + zp) - 6.0 * c)
}

pub(crate) const OMEGA: f64 = 1.25;

#[inline]
pub(crate) fn sor(c: f64, n: f64, s: f64, w: f64, e: f64) -> f64 {
    c + OMEGA * (0.25 * (((n + s) + w) + e) - c)
}

#[inline]
pub(crate) fn fig(prev: f64, left: f64, below: f64) -> f64 {
    0.5 * prev + 0.25 * (left + below)
}

fn time_steps(n: i64) -> i64 {
    n.clamp(2, 8)
}

/// Time-expanded 3-D heat equation, diamond-tiled in (t-i, t+i) and skewed
/// in t+j; the three inter-tile loops form a single permutable band.
pub struct HeatDiamond;

impl Kernel for HeatDiamond {
    fn name(&self) -> &'static str {
        "HEAT-3D-DIAMOND"
    }

    fn description(&self) -> &'static str {
        "3-D heat, diamond tiles 8x16x16, one permutable band"
    }

    fn params(&self, size: i64) -> Env {
        env(&[("T", size), ("N", size)])
    }

    fn default_size(&self) -> i64 {
        48
    }

    fn tile_dims(&self) -> usize {
        0
    }

    fn build_tiled(&self, _tiles: &[i64]) -> Result<LoopTree, KernelError> {
        let mut b = TreeBuilder::new("heat-3d-diamond", &["T", "N"]);
        let a = b.array("A", ElemKind::F64, &["T", "N", "N", "N"])?;
        let t1 = b.add_loop(ROOT, LoopSpec::new("t1", "CEIL(-N-15, 16)", "FLOOR(T-3, 16)").perm(1))?;
        let t2 = b.add_loop(
            t1,
            LoopSpec::new(
                "t2",
                "MAX(t1, -t1-1)",
                "MIN(MIN(FLOOR(-8*t1+T-2, 8), FLOOR(8*t1+N+7, 8)), FLOOR(T+N-2, 16))",
            )
            .perm(1),
        )?;
        let t3 = b.add_loop(
            t2,
            LoopSpec::new(
                "t3",
                "MAX(MAX(0, CEIL(t1+t2-1, 2)), CEIL(16*t2-N-14, 16))",
                "MIN(MIN(FLOOR(T+N-2, 16), FLOOR(16*t2+N+14, 16)), FLOOR(8*t1+8*t2+N+15, 16))",
            )
            .perm(1)
            .tile(),
        )?;
        let t = b.add_loop(
            t3,
            LoopSpec::new(
                "t",
                "MAX(MAX(0, 8*t1+8*t2), 16*t3-N+2)",
                "MIN(MIN(T-2, 8*t1+8*t2+15), 16*t3+14)",
            )
            .seq(),
        )?;
        let i = b.add_loop(
            t,
            LoopSpec::new("i", "MAX(MAX(1, t-16*t1-15), 16*t2-t)", "MIN(MIN(N-2, t-16*t1), 16*t2+15-t)").par(),
        )?;
        let j = b.add_loop(i, LoopSpec::new("j", "MAX(1, 16*t3-t)", "MIN(N-2, 16*t3+15-t)").par())?;
        let k = b.add_loop(j, LoopSpec::new("k", "1", "N-2").par())?;
        let [st, si, sj, sk] = syms(["t", "i", "j", "k"]);
        let s = stmt(
            &b,
            "S0",
            &[
                (W, "A", &["t+1", "i", "j", "k"]),
                (R, "A", &["t", "i", "j", "k"]),
                (R, "A", &["t", "i-1", "j", "k"]),
                (R, "A", &["t", "i+1", "j", "k"]),
                (R, "A", &["t", "i", "j-1", "k"]),
                (R, "A", &["t", "i", "j+1", "k"]),
                (R, "A", &["t", "i", "j", "k-1"]),
                (R, "A", &["t", "i", "j", "k+1"]),
            ],
            Arc::new(move |e, m| heat_point(m, a, e[st], e[si], e[sj], e[sk])),
        )?;
        b.add_stmt(k, s)?;
        Ok(b.finish())
    }

    fn reference_impl(&self, p: &Env, m: &ArrayStore) -> Result<(), StoreError> {
        let (tt, n) = (p[Sym::new("T")], p[Sym::new("N")]);
        let a = m.id(Sym::new("A")).expect("array A");
        for t in 0..=tt - 2 {
            for i in 1..=n - 2 {
                for j in 1..=n - 2 {
                    for k in 1..=n - 2 {
                        heat_point(m, a, t, i, j, k)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn flops(&self, p: &Env) -> f64 {
        let (t, n) = (p[Sym::new("T")], p[Sym::new("N")]);
        9.0 * ((t - 1).max(0) * (n - 2).max(0).pow(3)) as f64
    }

    fn statement_flops(&self, _stmt: &str) -> f64 {
        9.0
    }
}

fn heat_point(m: &ArrayStore, a: crate::loop_tree::ArrayId, t: i64, i: i64, j: i64, k: i64) -> Result<(), StoreError> {
    let r = |di: i64, dj: i64, dk: i64| m.read_f64(a, &[t, i + di, j + dj, k + dk]);
    let v = heat7(r(0, 0, 0)?, r(-1, 0, 0)?, r(1, 0, 0)?, r(0, -1, 0)?, r(0, 1, 0)?, r(0, 0, -1)?, r(0, 0, 1)?);
    m.write_f64(a, &[t + 1, i, j, k], v)
}

/// 2-D five-point Jacobi: a sequential time loop over two tiled parallel
/// nests (compute into B, copy back into A).
pub struct Jacobi2d;

impl Kernel for Jacobi2d {
    fn name(&self) -> &'static str {
        "JAC-2D-5P"
    }

    fn description(&self) -> &'static str {
        "2-D Jacobi 5-point, seq time, parallel tiles"
    }

    fn params(&self, size: i64) -> Env {
        env(&[("T", time_steps(size)), ("N", size)])
    }

    fn default_size(&self) -> i64 {
        1024
    }

    fn tile_dims(&self) -> usize {
        2
    }

    fn build_tiled(&self, tiles: &[i64]) -> Result<LoopTree, KernelError> {
        let mut b = TreeBuilder::new("jac-2d-5p", &["T", "N"]);
        let a = b.array("A", ElemKind::F64, &["N", "N"])?;
        let bb = b.array("B", ElemKind::F64, &["N", "N"])?;
        let t = b.add_loop(ROOT, LoopSpec::new("t", "0", "T-1").seq())?;
        let dims = [Dim { var: "i", lo: "1", hi: "N-2" }, Dim { var: "j", lo: "1", hi: "N-2" }];
        let par = [LoopType::Parallel; 2];
        let [si, sj] = syms(["i", "j"]);
        let inner = tiled_nest(&mut b, t, &dims, tiles, &par, LoopType::Parallel)?;
        let s0 = stmt(
            &b,
            "S0",
            &[
                (W, "B", &["i", "j"]),
                (R, "A", &["i", "j"]),
                (R, "A", &["i-1", "j"]),
                (R, "A", &["i+1", "j"]),
                (R, "A", &["i", "j-1"]),
                (R, "A", &["i", "j+1"]),
            ],
            Arc::new(move |e, m| jac2_point(m, a, bb, e[si], e[sj])),
        )?;
        b.add_stmt(inner, s0)?;
        let inner = tiled_nest(&mut b, t, &dims, tiles, &par, LoopType::Parallel)?;
        let s1 = stmt(
            &b,
            "S1",
            &[(W, "A", &["i", "j"]), (R, "B", &["i", "j"])],
            Arc::new(move |e, m| m.write_f64(a, &[e[si], e[sj]], m.read_f64(bb, &[e[si], e[sj]])?)),
        )?;
        b.add_stmt(inner, s1)?;
        Ok(b.finish())
    }

    fn reference_impl(&self, p: &Env, m: &ArrayStore) -> Result<(), StoreError> {
        let (tt, n) = (p[Sym::new("T")], p[Sym::new("N")]);
        let a = m.id(Sym::new("A")).expect("array A");
        let bb = m.id(Sym::new("B")).expect("array B");
        for _ in 0..tt {
            for i in 1..=n - 2 {
                for j in 1..=n - 2 {
                    jac2_point(m, a, bb, i, j)?;
                }
            }
            for i in 1..=n - 2 {
                for j in 1..=n - 2 {
                    m.write_f64(a, &[i, j], m.read_f64(bb, &[i, j])?)?;
                }
            }
        }
        Ok(())
    }

    fn flops(&self, p: &Env) -> f64 {
        let (t, n) = (p[Sym::new("T")], p[Sym::new("N")]);
        5.0 * (t * (n - 2).max(0).pow(2)) as f64
    }

    fn statement_flops(&self, stmt: &str) -> f64 {
        if stmt == "S0" {
            5.0
        } else {
            0.0
        }
    }
}

fn jac2_point(m: &ArrayStore, a: crate::loop_tree::ArrayId, b: crate::loop_tree::ArrayId, i: i64, j: i64) -> Result<(), StoreError> {
    let r = |x: i64, y: i64| m.read_f64(a, &[x, y]);
    m.write_f64(b, &[i, j], avg5(r(i, j)?, r(i - 1, j)?, r(i + 1, j)?, r(i, j - 1)?, r(i, j + 1)?))
}

/// 3-D seven-point Jacobi, same shape as the 2-D one.
pub struct Jacobi3d;

impl Kernel for Jacobi3d {
    fn name(&self) -> &'static str {
        "JAC-3D-7P"
    }

    fn description(&self) -> &'static str {
        "3-D Jacobi 7-point, seq time, parallel tiles"
    }

    fn params(&self, size: i64) -> Env {
        env(&[("T", time_steps(size)), ("N", size)])
    }

    fn default_size(&self) -> i64 {
        96
    }

    fn tile_dims(&self) -> usize {
        3
    }

    fn build_tiled(&self, tiles: &[i64]) -> Result<LoopTree, KernelError> {
        let mut b = TreeBuilder::new("jac-3d-7p", &["T", "N"]);
        let a = b.array("A", ElemKind::F64, &["N", "N", "N"])?;
        let bb = b.array("B", ElemKind::F64, &["N", "N", "N"])?;
        let t = b.add_loop(ROOT, LoopSpec::new("t", "0", "T-1").seq())?;
        let dims = [
            Dim { var: "i", lo: "1", hi: "N-2" },
            Dim { var: "j", lo: "1", hi: "N-2" },
            Dim { var: "k", lo: "1", hi: "N-2" },
        ];
        let par = [LoopType::Parallel; 3];
        let [si, sj, sk] = syms(["i", "j", "k"]);
        let inner = tiled_nest(&mut b, t, &dims, tiles, &par, LoopType::Parallel)?;
        let s0 = stmt(
            &b,
            "S0",
            &[
                (W, "B", &["i", "j", "k"]),
                (R, "A", &["i", "j", "k"]),
                (R, "A", &["i-1", "j", "k"]),
                (R, "A", &["i+1", "j", "k"]),
                (R, "A", &["i", "j-1", "k"]),
                (R, "A", &["i", "j+1", "k"]),
                (R, "A", &["i", "j", "k-1"]),
                (R, "A", &["i", "j", "k+1"]),
            ],
            Arc::new(move |e, m| jac3_point(m, a, bb, e[si], e[sj], e[sk])),
        )?;
        b.add_stmt(inner, s0)?;
        let inner = tiled_nest(&mut b, t, &dims, tiles, &par, LoopType::Parallel)?;
        let s1 = stmt(
            &b,
            "S1",
            &[(W, "A", &["i", "j", "k"]), (R, "B", &["i", "j", "k"])],
            Arc::new(move |e, m| {
                let ix = [e[si], e[sj], e[sk]];
                m.write_f64(a, &ix, m.read_f64(bb, &ix)?)
            }),
        )?;
        b.add_stmt(inner, s1)?;
        Ok(b.finish())
    }

    fn reference_impl(&self, p: &Env, m: &ArrayStore) -> Result<(), StoreError> {
        let (tt, n) = (p[Sym::new("T")], p[Sym::new("N")]);
        let a = m.id(Sym::new("A")).expect("array A");
        let bb = m.id(Sym::new("B")).expect("array B");
        for _ in 0..tt {
            for i in 1..=n - 2 {
                for j in 1..=n - 2 {
                    for k in 1..=n - 2 {
                        jac3_point(m, a, bb, i, j, k)?;
                    }
                }
            }
            for i in 1..=n - 2 {
                for j in 1..=n - 2 {
                    for k in 1..=n - 2 {
                        m.write_f64(a, &[i, j, k], m.read_f64(bb, &[i, j, k])?)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn flops(&self, p: &Env) -> f64 {
        let (t, n) = (p[Sym::new("T")], p[Sym::new("N")]);
        7.0 * (t * (n - 2).max(0).pow(3)) as f64
    }

    fn statement_flops(&self, stmt: &str) -> f64 {
        if stmt == "S0" {
            7.0
        } else {
            0.0
        }
    }
}

fn jac3_point(
    m: &ArrayStore,
    a: crate::loop_tree::ArrayId,
    b: crate::loop_tree::ArrayId,
    i: i64,
    j: i64,
    k: i64,
) -> Result<(), StoreError> {
    let r = |x: i64, y: i64, z: i64| m.read_f64(a, &[x, y, z]);
    let v = avg7(r(i, j, k)?, r(i - 1, j, k)?, r(i + 1, j, k)?, r(i, j - 1, k)?, r(i, j + 1, k)?, r(i, j, k - 1)?, r(i, j, k + 1)?);
    m.write_f64(b, &[i, j, k], v)
}

/// In-place 2-D Gauss-Seidel; spatial tiles form one permutable band
/// under a sequential time loop.
pub struct GaussSeidel2d;

impl Kernel for GaussSeidel2d {
    fn name(&self) -> &'static str {
        "GS-2D-5P"
    }

    fn description(&self) -> &'static str {
        "2-D Gauss-Seidel 5-point, permutable tiles"
    }

    fn params(&self, size: i64) -> Env {
        env(&[("T", time_steps(size)), ("N", size)])
    }

    fn default_size(&self) -> i64 {
        1024
    }

    fn tile_dims(&self) -> usize {
        2
    }

    fn build_tiled(&self, tiles: &[i64]) -> Result<LoopTree, KernelError> {
        let mut b = TreeBuilder::new("gs-2d-5p", &["T", "N"]);
        let a = b.array("A", ElemKind::F64, &["N", "N"])?;
        let t = b.add_loop(ROOT, LoopSpec::new("t", "0", "T-1").seq())?;
        let dims = [Dim { var: "i", lo: "1", hi: "N-2" }, Dim { var: "j", lo: "1", hi: "N-2" }];
        let inner = tiled_nest(&mut b, t, &dims, tiles, &[PERM; 2], LoopType::Sequential)?;
        let [si, sj] = syms(["i", "j"]);
        let s = stmt(
            &b,
            "S0",
            &[
                (W, "A", &["i", "j"]),
                (R, "A", &["i", "j"]),
                (R, "A", &["i-1", "j"]),
                (R, "A", &["i+1", "j"]),
                (R, "A", &["i", "j-1"]),
                (R, "A", &["i", "j+1"]),
            ],
            Arc::new(move |e, m| gs2_point(m, a, e[si], e[sj])),
        )?;
        b.add_stmt(inner, s)?;
        Ok(b.finish())
    }

    fn reference_impl(&self, p: &Env, m: &ArrayStore) -> Result<(), StoreError> {
        let (tt, n) = (p[Sym::new("T")], p[Sym::new("N")]);
        let a = m.id(Sym::new("A")).expect("array A");
        for _ in 0..tt {
            for i in 1..=n - 2 {
                for j in 1..=n - 2 {
                    gs2_point(m, a, i, j)?;
                }
            }
        }
        Ok(())
    }

    fn flops(&self, p: &Env) -> f64 {
        let (t, n) = (p[Sym::new("T")], p[Sym::new("N")]);
        5.0 * (t * (n - 2).max(0).pow(2)) as f64
    }

    fn statement_flops(&self, _stmt: &str) -> f64 {
        5.0
    }
}

fn gs2_point(m: &ArrayStore, a: crate::loop_tree::ArrayId, i: i64, j: i64) -> Result<(), StoreError> {
    let r = |x: i64, y: i64| m.read_f64(a, &[x, y]);
    m.write_f64(a, &[i, j], avg5(r(i, j)?, r(i - 1, j)?, r(i + 1, j)?, r(i, j - 1)?, r(i, j + 1)?))
}

/// In-place 3-D Gauss-Seidel.
pub struct GaussSeidel3d;

impl Kernel for GaussSeidel3d {
    fn name(&self) -> &'static str {
        "GS-3D-7P"
    }

    fn description(&self) -> &'static str {
        "3-D Gauss-Seidel 7-point, permutable tiles"
    }

    fn params(&self, size: i64) -> Env {
        env(&[("T", time_steps(size)), ("N", size)])
    }

    fn default_size(&self) -> i64 {
        96
    }

    fn tile_dims(&self) -> usize {
        3
    }

    fn build_tiled(&self, tiles: &[i64]) -> Result<LoopTree, KernelError> {
        let mut b = TreeBuilder::new("gs-3d-7p", &["T", "N"]);
        let a = b.array("A", ElemKind::F64, &["N", "N", "N"])?;
        let t = b.add_loop(ROOT, LoopSpec::new("t", "0", "T-1").seq())?;
        let dims = [
            Dim { var: "i", lo: "1", hi: "N-2" },
            Dim { var: "j", lo: "1", hi: "N-2" },
            Dim { var: "k", lo: "1", hi: "N-2" },
        ];
        let inner = tiled_nest(&mut b, t, &dims, tiles, &[PERM; 3], LoopType::Sequential)?;
        let [si, sj, sk] = syms(["i", "j", "k"]);
        let s = stmt(
            &b,
            "S0",
            &[
                (W, "A", &["i", "j", "k"]),
                (R, "A", &["i", "j", "k"]),
                (R, "A", &["i-1", "j", "k"]),
                (R, "A", &["i+1", "j", "k"]),
                (R, "A", &["i", "j-1", "k"]),
                (R, "A", &["i", "j+1", "k"]),
                (R, "A", &["i", "j", "k-1"]),
                (R, "A", &["i", "j", "k+1"]),
            ],
            Arc::new(move |e, m| gs3_point(m, a, e[si], e[sj], e[sk])),
        )?;
        b.add_stmt(inner, s)?;
        Ok(b.finish())
    }

    fn reference_impl(&self, p: &Env, m: &ArrayStore) -> Result<(), StoreError> {
        let (tt, n) = (p[Sym::new("T")], p[Sym::new("N")]);
        let a = m.id(Sym::new("A")).expect("array A");
        for _ in 0..tt {
            for i in 1..=n - 2 {
                for j in 1..=n - 2 {
                    for k in 1..=n - 2 {
                        gs3_point(m, a, i, j, k)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn flops(&self, p: &Env) -> f64 {
        let (t, n) = (p[Sym::new("T")], p[Sym::new("N")]);
        7.0 * (t * (n - 2).max(0).pow(3)) as f64
    }

    fn statement_flops(&self, _stmt: &str) -> f64 {
        7.0
    }
}

fn gs3_point(m: &ArrayStore, a: crate::loop_tree::ArrayId, i: i64, j: i64, k: i64) -> Result<(), StoreError> {
    let r = |x: i64, y: i64, z: i64| m.read_f64(a, &[x, y, z]);
    let v = avg7(r(i, j, k)?, r(i - 1, j, k)?, r(i + 1, j, k)?, r(i, j - 1, k)?, r(i, j + 1, k)?, r(i, j, k - 1)?, r(i, j, k + 1)?);
    m.write_f64(a, &[i, j, k], v)
}

/// One in-place successive over-relaxation sweep.
pub struct Sor;

impl Kernel for Sor {
    fn name(&self) -> &'static str {
        "SOR"
    }

    fn description(&self) -> &'static str {
        "2-D SOR sweep, permutable tiles"
    }

    fn params(&self, size: i64) -> Env {
        env(&[("N", size)])
    }

    fn default_size(&self) -> i64 {
        2048
    }

    fn tile_dims(&self) -> usize {
        2
    }

    fn build_tiled(&self, tiles: &[i64]) -> Result<LoopTree, KernelError> {
        let mut b = TreeBuilder::new("sor", &["N"]);
        let a = b.array("A", ElemKind::F64, &["N", "N"])?;
        let dims = [Dim { var: "i", lo: "1", hi: "N-2" }, Dim { var: "j", lo: "1", hi: "N-2" }];
        let inner = tiled_nest(&mut b, ROOT, &dims, tiles, &[PERM; 2], LoopType::Sequential)?;
        let [si, sj] = syms(["i", "j"]);
        let s = stmt(
            &b,
            "S0",
            &[
                (W, "A", &["i", "j"]),
                (R, "A", &["i", "j"]),
                (R, "A", &["i-1", "j"]),
                (R, "A", &["i+1", "j"]),
                (R, "A", &["i", "j-1"]),
                (R, "A", &["i", "j+1"]),
            ],
            Arc::new(move |e, m| sor_point(m, a, e[si], e[sj])),
        )?;
        b.add_stmt(inner, s)?;
        Ok(b.finish())
    }

    fn reference_impl(&self, p: &Env, m: &ArrayStore) -> Result<(), StoreError> {
        let n = p[Sym::new("N")];
        let a = m.id(Sym::new("A")).expect("array A");
        for i in 1..=n - 2 {
            for j in 1..=n - 2 {
                sor_point(m, a, i, j)?;
            }
        }
        Ok(())
    }

    fn flops(&self, p: &Env) -> f64 {
        7.0 * (p[Sym::new("N")] - 2).max(0).pow(2) as f64
    }

    fn statement_flops(&self, _stmt: &str) -> f64 {
        7.0
    }
}

fn sor_point(m: &ArrayStore, a: crate::loop_tree::ArrayId, i: i64, j: i64) -> Result<(), StoreError> {
    let r = |x: i64, y: i64| m.read_f64(a, &[x, y]);
    m.write_f64(a, &[i, j], sor(r(i, j)?, r(i - 1, j)?, r(i + 1, j)?, r(i, j - 1)?, r(i, j + 1)?))
}

/// The seq/doall/seq/doall nest: time, then rows, then a sequential
/// recurrence along j, with k innermost and untiled.
pub struct FigSeq;

impl Kernel for FigSeq {
    fn name(&self) -> &'static str {
        "FIG-SEQ"
    }

    fn description(&self) -> &'static str {
        "seq/doall/seq/doall recurrence"
    }

    fn params(&self, size: i64) -> Env {
        env(&[("T", size), ("N", size)])
    }

    fn default_size(&self) -> i64 {
        64
    }

    fn tile_dims(&self) -> usize {
        0
    }

    fn build_tiled(&self, _tiles: &[i64]) -> Result<LoopTree, KernelError> {
        let mut b = TreeBuilder::new("fig-seq", &["T", "N"]);
        let a = b.array("A", ElemKind::F64, &["T", "N", "N", "N"])?;
        let t = b.add_loop(ROOT, LoopSpec::new("t", "1", "T-1").seq())?;
        let i = b.add_loop(t, LoopSpec::new("i", "1", "N-2").par())?;
        let j = b.add_loop(i, LoopSpec::new("j", "1", "N-2").seq())?;
        let k = b.add_loop(j, LoopSpec::new("k", "1", "N-2").par().tile())?;
        let [st, si, sj, sk] = syms(["t", "i", "j", "k"]);
        let s = stmt(
            &b,
            "S0",
            &[
                (W, "A", &["t", "i", "j", "k"]),
                (R, "A", &["t-1", "i", "j", "k"]),
                (R, "A", &["t", "i", "j-1", "k"]),
                (R, "A", &["t-1", "i+1", "j", "k"]),
            ],
            Arc::new(move |e, m| fig_point(m, a, e[st], e[si], e[sj], e[sk])),
        )?;
        b.add_stmt(k, s)?;
        Ok(b.finish())
    }

    fn reference_impl(&self, p: &Env, m: &ArrayStore) -> Result<(), StoreError> {
        let (tt, n) = (p[Sym::new("T")], p[Sym::new("N")]);
        let a = m.id(Sym::new("A")).expect("array A");
        for t in 1..tt {
            for i in 1..=n - 2 {
                for j in 1..=n - 2 {
                    for k in 1..=n - 2 {
                        fig_point(m, a, t, i, j, k)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn flops(&self, p: &Env) -> f64 {
        let (t, n) = (p[Sym::new("T")], p[Sym::new("N")]);
        4.0 * ((t - 1).max(0) * (n - 2).max(0).pow(3)) as f64
    }

    fn statement_flops(&self, _stmt: &str) -> f64 {
        4.0
    }
}

fn fig_point(m: &ArrayStore, a: crate::loop_tree::ArrayId, t: i64, i: i64, j: i64, k: i64) -> Result<(), StoreError> {
    let v = fig(
        m.read_f64(a, &[t - 1, i, j, k])?,
        m.read_f64(a, &[t, i, j - 1, k])?,
        m.read_f64(a, &[t - 1, i + 1, j, k])?,
    );
    m.write_f64(a, &[t, i, j, k], v)
}
