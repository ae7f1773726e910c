use std::sync::Arc;

use super::{env, stmt, syms, tiled_nest, Dim, Kernel, KernelError, R, W};
use crate::loop_tree::{ArrayId, ArrayStore, ElemKind, LoopSpec, LoopTree, LoopType, StoreError, TreeBuilder, ROOT};
use crate::range_expr::Env;
use crate::sym::Sym;

/// C += A·B. The i and j tile loops are parallel; the k tile loop carries
/// the accumulation and is a one-dimensional permutable band.
pub struct MatMult;

impl Kernel for MatMult {
    fn name(&self) -> &'static str {
        "MATMULT"
    }

    fn description(&self) -> &'static str {
        "dense C += A*B, parallel i/j tiles"
    }

    fn params(&self, size: i64) -> Env {
        env(&[("N", size)])
    }

    fn default_size(&self) -> i64 {
        512
    }

    fn tile_dims(&self) -> usize {
        3
    }

    fn build_tiled(&self, tiles: &[i64]) -> Result<LoopTree, KernelError> {
        let mut b = TreeBuilder::new("matmult", &["N"]);
        let a = b.array("A", ElemKind::F64, &["N", "N"])?;
        let bm = b.array("B", ElemKind::F64, &["N", "N"])?;
        let c = b.array("C", ElemKind::F64, &["N", "N"])?;
        let dims = [
            Dim { var: "i", lo: "0", hi: "N-1" },
            Dim { var: "j", lo: "0", hi: "N-1" },
            Dim { var: "k", lo: "0", hi: "N-1" },
        ];
        let inter = [LoopType::Parallel, LoopType::Parallel, LoopType::Permutable(1)];
        let inner = tiled_nest(&mut b, ROOT, &dims, tiles, &inter, LoopType::Sequential)?;
        let [si, sj, sk] = syms(["i", "j", "k"]);
        let s = stmt(
            &b,
            "S0",
            &[(W, "C", &["i", "j"]), (R, "C", &["i", "j"]), (R, "A", &["i", "k"]), (R, "B", &["k", "j"])],
            Arc::new(move |e, m| mm_point(m, a, bm, c, e[si], e[sj], e[sk])),
        )?;
        b.add_stmt(inner, s)?;
        Ok(b.finish())
    }

    fn reference_impl(&self, p: &Env, m: &ArrayStore) -> Result<(), StoreError> {
        let n = p[Sym::new("N")];
        let [a, bm, c] = ["A", "B", "C"].map(|x| m.id(Sym::new(x)).expect("matmult array"));
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    mm_point(m, a, bm, c, i, j, k)?;
                }
            }
        }
        Ok(())
    }

    fn flops(&self, p: &Env) -> f64 {
        2.0 * (p[Sym::new("N")].max(0).pow(3)) as f64
    }

    fn statement_flops(&self, _stmt: &str) -> f64 {
        2.0
    }
}

fn mm_point(m: &ArrayStore, a: ArrayId, b: ArrayId, c: ArrayId, i: i64, j: i64, k: i64) -> Result<(), StoreError> {
    let v = m.read_f64(c, &[i, j])? + m.read_f64(a, &[i, k])? * m.read_f64(b, &[k, j])?;
    m.write_f64(c, &[i, j], v)
}

/// Right-looking LU decomposition without pivoting. Each step of the
/// sequential k loop scales a column, then updates the trailing submatrix.
pub struct LuDecomposition;

impl Kernel for LuDecomposition {
    fn name(&self) -> &'static str {
        "LUD"
    }

    fn description(&self) -> &'static str {
        "LU decomposition, seq k, parallel tiles"
    }

    fn params(&self, size: i64) -> Env {
        env(&[("N", size)])
    }

    fn default_size(&self) -> i64 {
        512
    }

    fn tile_dims(&self) -> usize {
        2
    }

    /// Random fill made diagonally dominant so the factorization stays
    /// well-conditioned without pivoting.
    fn init(&self, store: &ArrayStore, p: &Env, seed: u64) {
        store.fill_random(seed);
        let n = p[Sym::new("N")];
        let a = store.id(Sym::new("A")).expect("array A");
        for i in 0..n {
            let v = store.read_f64(a, &[i, i]).expect("diagonal");
            store.write_f64(a, &[i, i], v + n as f64).expect("diagonal");
        }
    }

    fn build_tiled(&self, tiles: &[i64]) -> Result<LoopTree, KernelError> {
        let mut b = TreeBuilder::new("lud", &["N"]);
        let a = b.array("A", ElemKind::F64, &["N", "N"])?;
        let k = b.add_loop(ROOT, LoopSpec::new("k", "0", "N-2").seq())?;
        let [sk, si, sj] = syms(["k", "i", "j"]);
        let col = tiled_nest(
            &mut b,
            k,
            &[Dim { var: "i", lo: "k+1", hi: "N-1" }],
            &tiles[..1],
            &[LoopType::Parallel],
            LoopType::Parallel,
        )?;
        let s0 = stmt(
            &b,
            "S0",
            &[(W, "A", &["i", "k"]), (R, "A", &["i", "k"]), (R, "A", &["k", "k"])],
            Arc::new(move |e, m| lu_scale(m, a, e[sk], e[si])),
        )?;
        b.add_stmt(col, s0)?;
        let dims = [Dim { var: "i", lo: "k+1", hi: "N-1" }, Dim { var: "j", lo: "k+1", hi: "N-1" }];
        let upd = tiled_nest(&mut b, k, &dims, tiles, &[LoopType::Parallel; 2], LoopType::Parallel)?;
        let s1 = stmt(
            &b,
            "S1",
            &[(W, "A", &["i", "j"]), (R, "A", &["i", "j"]), (R, "A", &["i", "k"]), (R, "A", &["k", "j"])],
            Arc::new(move |e, m| lu_update(m, a, e[sk], e[si], e[sj])),
        )?;
        b.add_stmt(upd, s1)?;
        Ok(b.finish())
    }

    fn reference_impl(&self, p: &Env, m: &ArrayStore) -> Result<(), StoreError> {
        let n = p[Sym::new("N")];
        let a = m.id(Sym::new("A")).expect("array A");
        for k in 0..n - 1 {
            for i in k + 1..n {
                lu_scale(m, a, k, i)?;
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    lu_update(m, a, k, i, j)?;
                }
            }
        }
        Ok(())
    }

    fn flops(&self, p: &Env) -> f64 {
        let n = p[Sym::new("N")];
        (1..n).map(|r| (r + 2 * r * r) as f64).sum()
    }

    fn statement_flops(&self, stmt: &str) -> f64 {
        if stmt == "S0" {
            1.0
        } else {
            2.0
        }
    }
}

fn lu_scale(m: &ArrayStore, a: ArrayId, k: i64, i: i64) -> Result<(), StoreError> {
    m.write_f64(a, &[i, k], m.read_f64(a, &[i, k])? / m.read_f64(a, &[k, k])?)
}

fn lu_update(m: &ArrayStore, a: ArrayId, k: i64, i: i64, j: i64) -> Result<(), StoreError> {
    let v = m.read_f64(a, &[i, j])? - m.read_f64(a, &[i, k])? * m.read_f64(a, &[k, j])?;
    m.write_f64(a, &[i, j], v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dependence::group_tags;
    use crate::edt::{form_edts, mark_tree, MarkStrategy};

    #[test]
    fn identity_times_matrix() {
        let tree = MatMult.build(&[1, 1, 1]).unwrap();
        let p = MatMult.params(2);
        let m = ArrayStore::allocate(&tree.arrays, &p).unwrap();
        let [a, b, c] = ["A", "B", "C"].map(|x| m.id(Sym::new(x)).unwrap());
        let x = [[3.0, -1.5], [0.25, 7.0]];
        for i in 0..2 {
            for j in 0..2 {
                m.write_f64(a, &[i, j], if i == j { 1.0 } else { 0.0 }).unwrap();
                m.write_f64(b, &[i, j], x[i as usize][j as usize]).unwrap();
                m.write_f64(c, &[i, j], 0.0).unwrap();
            }
        }
        tree.iterate_sequentially(&p, &m).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(m.read_f64(c, &[i, j]).unwrap(), x[i as usize][j as usize]);
            }
        }
    }

    #[test]
    fn matmult_1024_has_64k_leaf_edts() {
        let tree = MatMult.build(&[]).unwrap();
        let marks = mark_tree(&tree, &MarkStrategy::TileGranularity).unwrap();
        let forest = form_edts(&tree, &marks).unwrap();
        let leaves: Vec<_> = forest.edts.iter().filter(|e| e.is_leaf()).collect();
        assert_eq!(leaves.len(), 1);
        let tags = group_tags(&tree, leaves[0], &MatMult.params(1024), &[]).unwrap();
        assert_eq!(tags.len(), 64 * 1024);
    }

    #[test]
    fn lud_reconstructs() {
        let n = 6;
        let tree = LuDecomposition.build(&[2, 2]).unwrap();
        let p = LuDecomposition.params(n);
        let m = ArrayStore::allocate(&tree.arrays, &p).unwrap();
        LuDecomposition.init(&m, &p, 9);
        let a = m.id(Sym::new("A")).unwrap();
        let orig = m.deep_clone();
        tree.iterate_sequentially(&p, &m).unwrap();
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..=i.min(j) {
                    let l = if k == i { 1.0 } else { m.read_f64(a, &[i, k]).unwrap() };
                    s += l * m.read_f64(a, &[k, j]).unwrap();
                }
                let want = orig.read_f64(a, &[i, j]).unwrap();
                assert!((s - want).abs() < 1e-9, "({i},{j}): {s} vs {want}");
            }
        }
    }
}
