//! Declarative kernel files.
//!
//! ```text
//! # comments run to end of line
//! kernel figseq
//! param T = 3
//! param N = 4
//! array A : f64[T, N, N, N]
//! loop t seq [1, T-2] {
//!   loop i parallel [1, N-2] {
//!     loop j seq [1, N-2] {
//!       loop k parallel [1, N-2] tile {
//!         stmt S0 {
//!           write A[t, i, j, k]
//!           read A[t-1, i, j, k]
//!         }
//!       }
//!     }
//!   }
//! }
//! distance t 2
//! ```
//!
//! Loop types are `seq`, `parallel` and `perm(<band>)`; `step <k>` and
//! `tile` are optional and follow the bounds. Statements parsed from text get
//! a generic body that writes a fixed weighted sum of their reads to every
//! write target; a host body can be bound afterwards by statement name.

use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use super::{
    AccessMode, AccessSummary, Body, ElemKind, Item, LoopSpec, LoopTree, LoopType, NodeId, Statement, StoreError,
    TreeBuilder, ROOT,
};
use crate::range_expr::{Env, Expr};
use crate::sym::Sym;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct TextError {
    pub line: usize,
    pub message: String,
}

/// A parsed kernel file.
#[derive(Debug, Clone)]
pub struct KernelFile {
    pub tree: LoopTree,
    pub defaults: Vec<(Sym, i64)>,
    /// Constant dependence distances keyed by loop variable.
    pub distances: Vec<(Sym, i64)>,
}

impl KernelFile {
    pub fn default_params(&self) -> Env {
        self.defaults.iter().copied().collect()
    }

    /// Replaces the body of every statement named `name`.
    pub fn bind(&mut self, name: &str, body: Body) -> bool {
        self.tree.set_body(name, body)
    }
}

fn err(line: usize, message: impl Into<String>) -> TextError {
    TextError {
        line,
        message: message.into(),
    }
}

/// Splits on commas that are not nested inside parentheses.
fn split_top(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                parts.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(s[start..].trim());
    parts
}

/// Splits `name[inner] rest` into its three pieces.
fn bracketed(s: &str) -> Option<(&str, &str, &str)> {
    let open = s.find('[')?;
    let close = s.rfind(']')?;
    if close < open {
        return None;
    }
    Some((s[..open].trim(), &s[open + 1..close], s[close + 1..].trim()))
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    matches!(cs.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && cs.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Kernel names also allow interior dashes (`jac-2d-5p`).
fn is_kernel_name(s: &str) -> bool {
    !s.starts_with('-') && !s.ends_with('-') && is_ident(&s.replace('-', "_"))
}

fn parse_type(s: &str) -> Option<LoopType> {
    match s {
        "seq" => Some(LoopType::Sequential),
        "parallel" => Some(LoopType::Parallel),
        _ => {
            let band = s.strip_prefix("perm(")?.strip_suffix(')')?;
            band.trim().parse().ok().map(LoopType::Permutable)
        }
    }
}

struct OpenStmt {
    name: String,
    node: NodeId,
    accesses: Vec<AccessSummary>,
    line: usize,
}

pub fn parse(text: &str) -> Result<KernelFile, TextError> {
    let mut name: Option<String> = None;
    let mut params: Vec<String> = Vec::new();
    let mut defaults: Vec<(Sym, i64)> = Vec::new();
    let mut builder: Option<TreeBuilder> = None;
    let mut stack: Vec<(NodeId, usize)> = Vec::new();
    let mut stmt: Option<OpenStmt> = None;
    let mut distances = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (kw, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();

        if let Some(open) = stmt.as_mut() {
            match kw {
                "}" if rest.is_empty() => {
                    let open = stmt.take().unwrap();
                    let b = builder.as_mut().unwrap();
                    let body = generic_body(b, &open.accesses).map_err(|m| err(open.line, m))?;
                    b.add_stmt(
                        open.node,
                        Statement {
                            name: open.name,
                            body,
                            accesses: open.accesses,
                        },
                    )
                    .map_err(|e| err(ln, e.to_string()))?;
                }
                "read" | "write" => {
                    let (arr, inner, tail) = bracketed(rest).ok_or_else(|| err(ln, "expected ARRAY[index, ...]"))?;
                    if !tail.is_empty() || !is_ident(arr) {
                        return Err(err(ln, format!("malformed access `{rest}`")));
                    }
                    let b = builder.as_ref().unwrap();
                    let idx: Vec<&str> = split_top(inner);
                    let indices = b.indices(&open.name, &idx).map_err(|e| err(ln, e.to_string()))?;
                    let mode = if kw == "read" { AccessMode::Read } else { AccessMode::Write };
                    open.accesses.push(AccessSummary {
                        array: Sym::new(arr),
                        indices,
                        mode,
                    });
                }
                _ => return Err(err(ln, format!("expected `read`, `write` or `}}` inside statement, found `{kw}`"))),
            }
            continue;
        }

        match kw {
            "kernel" => {
                if name.is_some() {
                    return Err(err(ln, "duplicate `kernel` line"));
                }
                if !is_kernel_name(rest) {
                    return Err(err(ln, "kernel name must be an identifier, dashes allowed"));
                }
                name = Some(rest.to_owned());
            }
            "param" => {
                if builder.is_some() {
                    return Err(err(ln, "parameters must precede arrays and loops"));
                }
                let (p, v) = rest.split_once('=').ok_or_else(|| err(ln, "expected `param NAME = VALUE`"))?;
                let p = p.trim();
                if !is_ident(p) || params.iter().any(|q| q == p) {
                    return Err(err(ln, format!("bad or duplicate parameter `{p}`")));
                }
                let v: i64 = v.trim().parse().map_err(|_| err(ln, "parameter default must be an integer"))?;
                params.push(p.to_owned());
                defaults.push((Sym::new(p), v));
            }
            "array" | "loop" | "stmt" | "}" | "distance" => {
                if builder.is_none() {
                    let n = name.as_deref().ok_or_else(|| err(ln, "missing `kernel` line"))?;
                    let ps: Vec<&str> = params.iter().map(String::as_str).collect();
                    builder = Some(TreeBuilder::new(n, &ps));
                }
                let b = builder.as_mut().unwrap();
                match kw {
                    "array" => {
                        if !stack.is_empty() {
                            return Err(err(ln, "arrays must be declared at top level"));
                        }
                        let (aname, ty) = rest.split_once(':').ok_or_else(|| err(ln, "expected `array NAME : f64[...]`"))?;
                        let aname = aname.trim();
                        let (kind, inner, tail) = bracketed(ty).ok_or_else(|| err(ln, "expected element type and extents"))?;
                        let kind = match kind {
                            "f64" => ElemKind::F64,
                            "i64" => ElemKind::I64,
                            other => return Err(err(ln, format!("unknown element type `{other}`"))),
                        };
                        if !tail.is_empty() || !is_ident(aname) {
                            return Err(err(ln, "malformed array declaration"));
                        }
                        if b.tree.arrays.iter().any(|a| a.name.as_str() == aname) {
                            return Err(err(ln, format!("duplicate array `{aname}`")));
                        }
                        let dims = split_top(inner);
                        b.array(aname, kind, &dims).map_err(|e| err(ln, e.to_string()))?;
                    }
                    "loop" => {
                        let (var, after) = rest.split_once(char::is_whitespace).ok_or_else(|| err(ln, "expected `loop VAR TYPE [lb, ub]`"))?;
                        let (ty, bounds, tail) = bracketed(after.trim()).ok_or_else(|| err(ln, "expected bounds `[lb, ub]`"))?;
                        let ty = parse_type(ty).ok_or_else(|| err(ln, format!("unknown loop type `{ty}`")))?;
                        let bs = split_top(bounds);
                        if bs.len() != 2 || !is_ident(var) {
                            return Err(err(ln, "loop bounds must be `[lb, ub]`"));
                        }
                        let mut spec = LoopSpec::new(var, bs[0], bs[1]);
                        spec.loop_type = ty;
                        let mut toks = tail.split_whitespace().peekable();
                        let mut opened = false;
                        while let Some(t) = toks.next() {
                            match t {
                                "tile" => spec.tile_boundary = true,
                                "step" => {
                                    let s = toks.next().and_then(|s| s.parse().ok()).ok_or_else(|| err(ln, "expected integer after `step`"))?;
                                    spec.step = s;
                                }
                                "{" if toks.peek().is_none() => opened = true,
                                other => return Err(err(ln, format!("unexpected `{other}` in loop header"))),
                            }
                        }
                        if !opened {
                            return Err(err(ln, "loop header must end with `{`"));
                        }
                        let parent = stack.last().map_or(ROOT, |&(n, _)| n);
                        let id = b.add_loop(parent, spec).map_err(|e| err(ln, e.to_string()))?;
                        stack.push((id, ln));
                    }
                    "stmt" => {
                        let sname = rest.strip_suffix('{').map(str::trim).ok_or_else(|| err(ln, "expected `stmt NAME {`"))?;
                        if !is_ident(sname) {
                            return Err(err(ln, "statement name must be an identifier"));
                        }
                        let node = stack.last().map_or(ROOT, |&(n, _)| n);
                        stmt = Some(OpenStmt {
                            name: sname.to_owned(),
                            node,
                            accesses: Vec::new(),
                            line: ln,
                        });
                    }
                    "}" => {
                        if !rest.is_empty() || stack.pop().is_none() {
                            return Err(err(ln, "unbalanced `}`"));
                        }
                    }
                    _ => {
                        let mut it = rest.split_whitespace();
                        let (Some(v), Some(d), None) = (it.next(), it.next(), it.next()) else {
                            return Err(err(ln, "expected `distance VAR D`"));
                        };
                        let d: i64 = d.parse().map_err(|_| err(ln, "distance must be an integer"))?;
                        if d < 1 || !is_ident(v) {
                            return Err(err(ln, "distance must be a positive integer on a loop variable"));
                        }
                        distances.push((Sym::new(v), d));
                    }
                }
            }
            other => return Err(err(ln, format!("unknown directive `{other}`"))),
        }
    }

    if let Some(open) = stmt {
        return Err(err(open.line, "unterminated statement"));
    }
    if let Some(&(_, line)) = stack.last() {
        return Err(err(line, "unterminated loop"));
    }
    let builder = match builder {
        Some(b) => b,
        None => {
            let n = name.ok_or_else(|| err(1, "missing `kernel` line"))?;
            let ps: Vec<&str> = params.iter().map(String::as_str).collect();
            TreeBuilder::new(&n, &ps)
        }
    };
    let tree = builder.finish();
    for &(v, _) in &distances {
        if !tree.nodes().iter().skip(1).any(|n| n.var == v) {
            return Err(err(0, format!("distance names unknown loop `{v}`")));
        }
    }
    Ok(KernelFile {
        tree,
        defaults,
        distances,
    })
}

/// Writes a fixed weighted sum of the reads to every write target.
fn generic_body(b: &TreeBuilder, accesses: &[AccessSummary]) -> Result<Body, String> {
    let mut reads = Vec::new();
    let mut writes = Vec::new();
    for acc in accesses {
        let id = b
            .tree
            .array_id(acc.array)
            .ok_or_else(|| format!("access to undeclared array `{}`", acc.array))?;
        let kind = b.tree.arrays[id.0 as usize].kind;
        let target = (id, kind, acc.indices.clone());
        match acc.mode {
            AccessMode::Read => reads.push(target),
            AccessMode::Write => writes.push(target),
        }
    }
    let weight = 1.0 / (reads.len() as f64 + 1.0);
    Ok(Arc::new(move |env: &Env, st| {
        let mut fsum = 0.25;
        let mut isum: i64 = 1;
        let mut idx = Vec::new();
        for (id, kind, ix) in &reads {
            idx.clear();
            for e in ix {
                idx.push(e.eval(env)?);
            }
            match kind {
                ElemKind::F64 => fsum += weight * st.read_f64(*id, &idx)?,
                ElemKind::I64 => isum = isum.wrapping_mul(31).wrapping_add(st.read_i64(*id, &idx)?),
            }
        }
        for (id, kind, ix) in &writes {
            idx.clear();
            for e in ix {
                idx.push(e.eval(env)?);
            }
            match kind {
                ElemKind::F64 => st.write_f64(*id, &idx, fsum)?,
                ElemKind::I64 => st.write_i64(*id, &idx, isum)?,
            }
        }
        Ok::<(), StoreError>(())
    }))
}

/// Prints a tree (with parameter defaults and distances) in the file format.
pub fn print(tree: &LoopTree, defaults: &[(Sym, i64)], distances: &[(Sym, i64)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "kernel {}", tree.name);
    for &p in &tree.params {
        let v = defaults.iter().find(|(q, _)| *q == p).map_or(0, |&(_, v)| v);
        let _ = writeln!(out, "param {p} = {v}");
    }
    for a in &tree.arrays {
        let kind = match a.kind {
            ElemKind::F64 => "f64",
            ElemKind::I64 => "i64",
        };
        let dims: Vec<String> = a.dims.iter().map(Expr::to_string).collect();
        let _ = writeln!(out, "array {} : {kind}[{}]", a.name, dims.join(", "));
    }
    print_body(tree, ROOT, 0, &mut out);
    for &(v, d) in distances {
        let _ = writeln!(out, "distance {v} {d}");
    }
    out
}

fn print_body(tree: &LoopTree, node: NodeId, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    for item in &tree.node(node).body {
        match *item {
            Item::Loop(c) => {
                let n = tree.node(c);
                let _ = write!(out, "{pad}loop {} {} [{}, {}]", n.var, n.loop_type, n.lb, n.ub);
                if n.step != 1 {
                    let _ = write!(out, " step {}", n.step);
                }
                if n.tile_boundary {
                    out.push_str(" tile");
                }
                out.push_str(" {\n");
                print_body(tree, c, depth + 1, out);
                let _ = writeln!(out, "{pad}}}");
            }
            Item::Stmt(s) => {
                let st = tree.statement(s);
                let _ = writeln!(out, "{pad}stmt {} {{", st.name);
                for acc in &st.accesses {
                    let mode = match acc.mode {
                        AccessMode::Read => "read",
                        AccessMode::Write => "write",
                    };
                    let ix: Vec<String> = acc.indices.iter().map(Expr::to_string).collect();
                    let _ = writeln!(out, "{pad}  {mode} {}[{}]", acc.array, ix.join(", "));
                }
                let _ = writeln!(out, "{pad}}}");
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loop_tree::ArrayStore;

    const FIGSEQ: &str = "\
kernel figseq
param T = 3
param N = 4
array A : f64[T, N, N, N]
loop t seq [1, T-1] {
  loop i parallel [1, N-2] {
    loop j seq [1, N-2] {
      loop k parallel [1, N-2] tile {
        stmt S0 {
          write A[t, i, j, k]
          read A[t-1, i, j, k]
          read A[t, i, j-1, k]
        }
      }
    }
  }
}
";

    #[test]
    fn parses_and_validates() {
        let k = parse(FIGSEQ).unwrap();
        let p = k.default_params();
        k.tree.validate(&p).unwrap();
        let store = ArrayStore::allocate(&k.tree.arrays, &p).unwrap();
        assert_eq!(k.tree.iterate_sequentially(&p, &store).unwrap(), 16);
        let mut store = store;
        assert_eq!(k.tree.check_access_summaries(&p, &mut store).unwrap(), 16);
    }

    #[test]
    fn print_parse_round_trip() {
        let k = parse(FIGSEQ).unwrap();
        let text = print(&k.tree, &k.defaults, &[(Sym::new("t"), 2)]);
        let k2 = parse(&text).unwrap();
        assert_eq!(print(&k2.tree, &k2.defaults, &k2.distances), text);
        assert_eq!(k2.distances, vec![(Sym::new("t"), 2)]);
    }

    #[test]
    fn min_bounds_with_commas() {
        let src = "kernel m\nparam N = 8\narray A : f64[N]\nloop i parallel [0, MIN(N-1, 5)] tile {\n stmt S {\n write A[i]\n }\n}\n";
        let k = parse(src).unwrap();
        let n = &k.tree.nodes()[1];
        assert_eq!(n.ub.to_string(), "MIN(N - 1, 5)");
    }

    #[test]
    fn dashed_kernel_names() {
        let src = FIGSEQ.replacen("kernel figseq", "kernel fig-seq", 1);
        let k = parse(&src).unwrap();
        assert!(print(&k.tree, &k.defaults, &[]).starts_with("kernel fig-seq\n"));
    }

    #[test]
    fn errors_carry_lines() {
        let cases = [
            ("kernel k\nloop i wat [0, 1] {\n}\n", 2),
            ("kernel k\nloop i seq [0, 1]\n", 2),
            ("kernel k\nloop i seq [0, 1] {\n", 2),
            ("kernel k\n}\n", 2),
            ("kernel k\nparam N = x\n", 2),
            ("kernel k\nloop i seq [0, FLOOR(i, j)] {\n}\n", 2),
            ("kernel k\nloop i seq [0, 1] {\nstmt S {\nread B[i]\n}\n}\n", 3),
            ("param N = 1\n", 0),
            ("kernel k-\n", 1),
            ("kernel -k\n", 1),
        ];
        for (src, line) in cases {
            let e = parse(src).unwrap_err();
            if line > 0 {
                assert_eq!(e.line, line, "{src:?}: {e}");
            }
        }
    }

    #[test]
    fn binding_host_body() {
        let mut k = parse(FIGSEQ).unwrap();
        assert!(k.bind("S0", Arc::new(|_, _| Ok(()))));
        assert!(!k.bind("nope", Arc::new(|_, _| Ok(()))));
    }
}
