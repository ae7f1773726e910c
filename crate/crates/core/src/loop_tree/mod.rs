//! Tree of typed loops produced after scheduling and tiling.
//!
//! Node 0 is the root: it carries no loop, sits at level −1 and is the
//! ancestor of every loop. Each node keeps an ordered body of nested loops
//! and statements; the order of that body is the program order of
//! distributed siblings.

pub mod store;
pub mod text;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::range_expr::{Env, Expr, ExprError, ParseError};
use crate::sym::Sym;

pub use store::{Access, AccessMode, ArrayDecl, ArrayId, ArrayStore, ElemKind, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StmtId(pub u32);

pub const ROOT: NodeId = NodeId(0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LoopType {
    Parallel,
    Permutable(u32),
    Sequential,
}

impl LoopType {
    pub fn band(self) -> Option<u32> {
        match self {
            LoopType::Permutable(b) => Some(b),
            _ => None,
        }
    }
}

impl fmt::Display for LoopType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LoopType::Parallel => f.write_str("parallel"),
            LoopType::Permutable(b) => write!(f, "perm({b})"),
            LoopType::Sequential => f.write_str("seq"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Item {
    Loop(NodeId),
    Stmt(StmtId),
}

#[derive(Debug, Clone)]
pub struct LoopNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub level: i32,
    pub var: Sym,
    pub lb: Expr,
    pub ub: Expr,
    pub step: i64,
    pub loop_type: LoopType,
    pub tile_boundary: bool,
    pub body: Vec<Item>,
}

impl LoopNode {
    pub fn children(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.body.iter().filter_map(|it| match it {
            Item::Loop(n) => Some(*n),
            Item::Stmt(_) => None,
        })
    }

    pub fn statements(&self) -> impl Iterator<Item = StmtId> + '_ {
        self.body.iter().filter_map(|it| match it {
            Item::Stmt(s) => Some(*s),
            Item::Loop(_) => None,
        })
    }

    pub fn is_root(&self) -> bool {
        self.level < 0
    }

    /// Whether `value` lies in this loop's range under `env`.
    pub fn contains(&self, env: &Env, value: i64) -> Result<bool, ExprError> {
        let lb = self.lb.eval(env)?;
        let ub = self.ub.eval(env)?;
        Ok(lb <= value && value <= ub && (value - lb) % self.step == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessSummary {
    pub array: Sym,
    pub indices: Vec<Expr>,
    pub mode: AccessMode,
}

impl AccessSummary {
    pub fn read(array: &str, indices: Vec<Expr>) -> AccessSummary {
        AccessSummary {
            array: Sym::new(array),
            indices,
            mode: AccessMode::Read,
        }
    }

    pub fn write(array: &str, indices: Vec<Expr>) -> AccessSummary {
        AccessSummary {
            array: Sym::new(array),
            indices,
            mode: AccessMode::Write,
        }
    }

    pub fn eval(&self, env: &Env) -> Result<Vec<i64>, ExprError> {
        self.indices.iter().map(|e| e.eval(env)).collect()
    }
}

pub type Body = Arc<dyn Fn(&Env, &ArrayStore) -> Result<(), StoreError> + Send + Sync>;

#[derive(Clone)]
pub struct Statement {
    pub name: String,
    pub body: Body,
    pub accesses: Vec<AccessSummary>,
}

impl fmt::Debug for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Statement")
            .field("name", &self.name)
            .field("accesses", &self.accesses)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("bad bound for loop `{var}`: {source}")]
    Bound { var: String, source: ParseError },
    #[error("bad access index in statement `{stmt}`: {source}")]
    Index { stmt: String, source: ParseError },
    #[error("unknown node {0:?}")]
    UnknownNode(NodeId),
    #[error("step of loop `{0}` must be positive")]
    Step(String),
    #[error("{0}")]
    Format(String),
}

/// A validation finding, located by the loop path from the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("statement `{stmt}` at {coords:?}: {source}")]
    Store {
        stmt: String,
        coords: Vec<(Sym, i64)>,
        source: StoreError,
    },
    #[error("evaluating bounds of `{var}`: {source}")]
    Bound { var: Sym, source: ExprError },
}

#[derive(Debug, Clone)]
pub struct LoopTree {
    pub name: String,
    pub params: Vec<Sym>,
    pub arrays: Vec<ArrayDecl>,
    nodes: Vec<LoopNode>,
    statements: Vec<Statement>,
}

/// Describes one loop for [`TreeBuilder::add_loop`].
#[derive(Debug, Clone)]
pub struct LoopSpec {
    pub var: String,
    pub lb: String,
    pub ub: String,
    pub step: i64,
    pub loop_type: LoopType,
    pub tile_boundary: bool,
}

impl LoopSpec {
    pub fn new(var: &str, lb: impl Into<String>, ub: impl Into<String>) -> LoopSpec {
        LoopSpec {
            var: var.to_owned(),
            lb: lb.into(),
            ub: ub.into(),
            step: 1,
            loop_type: LoopType::Parallel,
            tile_boundary: false,
        }
    }

    pub fn seq(mut self) -> LoopSpec {
        self.loop_type = LoopType::Sequential;
        self
    }

    pub fn par(mut self) -> LoopSpec {
        self.loop_type = LoopType::Parallel;
        self
    }

    pub fn perm(mut self, band: u32) -> LoopSpec {
        self.loop_type = LoopType::Permutable(band);
        self
    }

    pub fn tile(mut self) -> LoopSpec {
        self.tile_boundary = true;
        self
    }

    pub fn step(mut self, step: i64) -> LoopSpec {
        self.step = step;
        self
    }
}

pub struct TreeBuilder {
    tree: LoopTree,
}

impl TreeBuilder {
    pub fn new(name: &str, params: &[&str]) -> TreeBuilder {
        let root = LoopNode {
            id: ROOT,
            parent: None,
            level: -1,
            var: Sym::new("<root>"),
            lb: Expr::int(0),
            ub: Expr::int(0),
            step: 1,
            loop_type: LoopType::Sequential,
            tile_boundary: false,
            body: Vec::new(),
        };
        TreeBuilder {
            tree: LoopTree {
                name: name.to_owned(),
                params: params.iter().map(|p| Sym::new(p)).collect(),
                arrays: Vec::new(),
                nodes: vec![root],
                statements: Vec::new(),
            },
        }
    }

    pub fn params(&self) -> &[Sym] {
        &self.tree.params
    }

    /// Parses an expression with this tree's parameter set.
    pub fn expr(&self, text: &str) -> Result<Expr, ParseError> {
        Expr::parse_with_params(text, &self.tree.params)
    }

    /// Declares an array; extents are expressions over parameters. Returns
    /// the id the array will have in every store allocated for this tree.
    pub fn array(&mut self, name: &str, kind: ElemKind, dims: &[&str]) -> Result<ArrayId, TreeError> {
        let dims = dims
            .iter()
            .map(|d| self.expr(d))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| TreeError::Format(format!("array `{name}`: {e}")))?;
        let id = ArrayId(self.tree.arrays.len() as u32);
        self.tree.arrays.push(ArrayDecl {
            name: Sym::new(name),
            kind,
            dims,
        });
        Ok(id)
    }

    pub fn add_loop(&mut self, parent: NodeId, spec: LoopSpec) -> Result<NodeId, TreeError> {
        let plevel = self.tree.nodes.get(parent.0 as usize).ok_or(TreeError::UnknownNode(parent))?.level;
        if spec.step <= 0 {
            return Err(TreeError::Step(spec.var));
        }
        let parse = |t: &str| {
            Expr::parse_with_params(t, &self.tree.params).map_err(|source| TreeError::Bound {
                var: spec.var.clone(),
                source,
            })
        };
        let lb = parse(&spec.lb)?;
        let ub = parse(&spec.ub)?;
        let id = NodeId(self.tree.nodes.len() as u32);
        self.tree.nodes.push(LoopNode {
            id,
            parent: Some(parent),
            level: plevel + 1,
            var: Sym::new(&spec.var),
            lb,
            ub,
            step: spec.step,
            loop_type: spec.loop_type,
            tile_boundary: spec.tile_boundary,
            body: Vec::new(),
        });
        self.tree.nodes[parent.0 as usize].body.push(Item::Loop(id));
        Ok(id)
    }

    /// Parses access index expressions, e.g. `&["t-1", "i", "j+1"]`.
    pub fn indices(&self, stmt: &str, idx: &[&str]) -> Result<Vec<Expr>, TreeError> {
        idx.iter()
            .map(|t| {
                self.expr(t).map_err(|source| TreeError::Index {
                    stmt: stmt.to_owned(),
                    source,
                })
            })
            .collect()
    }

    pub fn add_stmt(&mut self, node: NodeId, stmt: Statement) -> Result<StmtId, TreeError> {
        if self.tree.nodes.get(node.0 as usize).is_none() {
            return Err(TreeError::UnknownNode(node));
        }
        let id = StmtId(self.tree.statements.len() as u32);
        self.tree.statements.push(stmt);
        self.tree.nodes[node.0 as usize].body.push(Item::Stmt(id));
        Ok(id)
    }

    pub fn finish(self) -> LoopTree {
        self.tree
    }
}

impl LoopTree {
    pub fn node(&self, id: NodeId) -> &LoopNode {
        &self.nodes[id.0 as usize]
    }

    pub fn nodes(&self) -> &[LoopNode] {
        &self.nodes
    }

    pub fn root(&self) -> &LoopNode {
        &self.nodes[0]
    }

    pub fn statement(&self, id: StmtId) -> &Statement {
        &self.statements[id.0 as usize]
    }

    pub fn statements(&self) -> &[Statement] {
        &self.statements
    }

    /// Replaces the body of every statement named `name`.
    pub fn set_body(&mut self, name: &str, body: Body) -> bool {
        let mut hit = false;
        for st in self.statements.iter_mut().filter(|s| s.name == name) {
            st.body = body.clone();
            hit = true;
        }
        hit
    }

    pub fn array_id(&self, name: Sym) -> Option<ArrayId> {
        self.arrays.iter().position(|a| a.name == name).map(|i| ArrayId(i as u32))
    }

    /// Loop ancestors of `id` (excluding the root), outermost first, ending with `id`.
    pub fn path_to(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = Vec::new();
        let mut cur = Some(id);
        while let Some(n) = cur {
            let node = self.node(n);
            if node.is_root() {
                break;
            }
            path.push(n);
            cur = node.parent;
        }
        path.reverse();
        path
    }

    pub fn path_name(&self, id: NodeId) -> String {
        let mut s = String::from("root");
        for n in self.path_to(id) {
            s.push('/');
            s.push_str(self.node(n).var.as_str());
        }
        s
    }

    pub fn is_ancestor(&self, anc: NodeId, mut n: NodeId) -> bool {
        while let Some(p) = self.node(n).parent {
            if p == anc {
                return true;
            }
            n = p;
        }
        false
    }

    /// Breadth-first order over loop nodes (root first).
    pub fn bfs(&self) -> Vec<NodeId> {
        let mut order = vec![ROOT];
        let mut i = 0;
        while i < order.len() {
            let n = order[i];
            order.extend(self.node(n).children());
            i += 1;
        }
        order
    }

    /// Binds all declared parameters into a fresh env, failing on any missing.
    pub fn param_env(&self, values: &Env) -> Result<Env, Vec<Diagnostic>> {
        let mut env = Env::new();
        let mut diags = Vec::new();
        for &p in &self.params {
            match values.get(p) {
                Some(v) => env.push(p, v),
                None => diags.push(Diagnostic {
                    path: "root".into(),
                    message: format!("parameter `{p}` is not bound"),
                }),
            }
        }
        if diags.is_empty() {
            Ok(env)
        } else {
            Err(diags)
        }
    }

    /// Checks structural invariants. All findings are reported together.
    pub fn validate(&self, params: &Env) -> Result<(), Vec<Diagnostic>> {
        let mut diags = match self.param_env(params) {
            Ok(_) => Vec::new(),
            Err(d) => d,
        };
        let mut diag = |n: NodeId, m: String| diags.push(Diagnostic {
            path: self.path_name(n),
            message: m,
        });

        if self.root().statements().next().is_some() {
            diag(ROOT, "statements cannot be attached to the root".into());
        }
        let array_rank: HashMap<Sym, usize> = self.arrays.iter().map(|a| (a.name, a.dims.len())).collect();

        for node in self.nodes.iter().skip(1) {
            let path = self.path_to(node.id);
            let outer: Vec<Sym> = path[..path.len() - 1].iter().map(|&n| self.node(n).var).collect();
            if outer.contains(&node.var) || self.params.contains(&node.var) {
                diag(node.id, format!("induction variable `{}` shadows an enclosing name", node.var));
            }
            if node.step <= 0 {
                diag(node.id, "step must be positive".into());
            }
            for (what, e) in [("lower", &node.lb), ("upper", &node.ub)] {
                if let Err(err) = e.validate() {
                    diag(node.id, format!("{what} bound `{e}`: {err}"));
                }
                for v in e.free_vars() {
                    if !self.params.contains(&v) && !outer.contains(&v) {
                        diag(
                            node.id,
                            format!("{what} bound `{e}` references `{v}`, which is not an enclosing loop or parameter"),
                        );
                    }
                }
            }
            if let LoopType::Permutable(0) = node.loop_type {
                diag(node.id, "band ids must be positive".into());
            }
            let has_loops = node.children().next().is_some();
            if has_loops && node.statements().next().is_some() {
                diag(node.id, "statements may only be attached to innermost loops".into());
            }
            let scope: Vec<Sym> = outer.iter().copied().chain(std::iter::once(node.var)).collect();
            for sid in node.statements() {
                let st = self.statement(sid);
                for acc in &st.accesses {
                    match array_rank.get(&acc.array) {
                        None => diag(node.id, format!("statement `{}` accesses unknown array `{}`", st.name, acc.array)),
                        Some(&r) if r != acc.indices.len() => diag(
                            node.id,
                            format!("statement `{}` indexes `{}` with {} subscripts, rank is {r}", st.name, acc.array, acc.indices.len()),
                        ),
                        _ => {}
                    }
                    for e in &acc.indices {
                        for v in e.free_vars() {
                            if !self.params.contains(&v) && !scope.contains(&v) {
                                diag(node.id, format!("statement `{}` index `{e}` references `{v}` out of scope", st.name));
                            }
                        }
                    }
                }
            }
            if !has_loops {
                let marks = path.iter().filter(|&&n| self.node(n).tile_boundary).count();
                if marks != 1 {
                    diag(node.id, format!("branch has {marks} tile-boundary loops, expected exactly one"));
                }
            }
        }

        // Band contiguity: all nodes of a band lie on one root-to-leaf path,
        // and only parallel loops may sit between them.
        let mut bands: HashMap<u32, Vec<NodeId>> = HashMap::new();
        for node in self.nodes.iter().skip(1) {
            if let Some(b) = node.loop_type.band() {
                bands.entry(b).or_default().push(node.id);
            }
        }
        let mut band_ids: Vec<_> = bands.keys().copied().collect();
        band_ids.sort_unstable();
        for b in band_ids {
            let members = &bands[&b];
            let deepest = *members.iter().max_by_key(|&&n| self.node(n).level).unwrap();
            let mut off_path = false;
            for &m in members {
                if m != deepest && !self.is_ancestor(m, deepest) {
                    diag(m, format!("permutable band {b} is split across divergent branches"));
                    off_path = true;
                    break;
                }
            }
            if off_path {
                continue;
            }
            let top = *members.iter().min_by_key(|&&n| self.node(n).level).unwrap();
            let path = self.path_to(deepest);
            let from = path.iter().position(|&n| n == top).unwrap();
            for &n in &path[from..] {
                match self.node(n).loop_type {
                    LoopType::Permutable(x) if x == b => {}
                    LoopType::Parallel => {}
                    other => diag(n, format!("{other} loop interrupts permutable band {b}")),
                }
            }
        }

        if diags.is_empty() {
            Ok(())
        } else {
            Err(diags)
        }
    }

    /// Executes every statement instance in the original sequential order.
    /// Returns the number of statement instances executed.
    pub fn iterate_sequentially(&self, params: &Env, store: &ArrayStore) -> Result<u64, ExecError> {
        let mut env = params.clone();
        self.exec_body(ROOT, &mut env, store)
    }

    /// Runs the body of `node` (its statements and nested loops) at `env`.
    pub fn exec_body(&self, node: NodeId, env: &mut Env, store: &ArrayStore) -> Result<u64, ExecError> {
        let mut count = 0;
        for item in &self.node(node).body {
            match *item {
                Item::Stmt(s) => {
                    let st = self.statement(s);
                    (st.body)(env, store).map_err(|source| ExecError::Store {
                        stmt: st.name.clone(),
                        coords: env.iter().collect(),
                        source,
                    })?;
                    count += 1;
                }
                Item::Loop(c) => {
                    let child = self.node(c);
                    let (lb, ub) = self.bounds(c, env)?;
                    let mut v = lb;
                    while v <= ub {
                        env.push(child.var, v);
                        let r = self.exec_body(c, env, store);
                        env.pop();
                        count += r?;
                        v += child.step;
                    }
                }
            }
        }
        Ok(count)
    }

    pub fn bounds(&self, node: NodeId, env: &Env) -> Result<(i64, i64), ExecError> {
        let n = self.node(node);
        let map = |source| ExecError::Bound { var: n.var, source };
        Ok((n.lb.eval(env).map_err(map)?, n.ub.eval(env).map_err(map)?))
    }

    /// Visits every point of the loop chain `segment` (outermost first), with
    /// the chain's variables pushed on `env`.
    pub fn for_each_point<F>(&self, segment: &[NodeId], env: &mut Env, f: &mut F) -> Result<(), ExecError>
    where
        F: FnMut(&Env) -> Result<(), ExecError>,
    {
        let Some((&first, rest)) = segment.split_first() else {
            return f(env);
        };
        let node = self.node(first);
        let (lb, ub) = self.bounds(first, env)?;
        let mut v = lb;
        while v <= ub {
            env.push(node.var, v);
            let r = self.for_each_point(rest, env, f);
            env.pop();
            r?;
            v += node.step;
        }
        Ok(())
    }

    /// Number of iterations of the loops from `from_level` down to `node`,
    /// with outer loops bound in `prefix_env`.
    pub fn count_instances(&self, node: NodeId, from_level: i32, prefix_env: &Env) -> Result<u64, ExecError> {
        let segment: Vec<NodeId> = self
            .path_to(node)
            .into_iter()
            .filter(|&n| self.node(n).level >= from_level)
            .collect();
        let mut env = prefix_env.clone();
        let mut count = 0u64;
        self.for_each_point(&segment, &mut env, &mut |_| {
            count += 1;
            Ok(())
        })?;
        Ok(count)
    }

    /// Runs every statement instance under recording and compares the touched
    /// cells against the evaluated access summaries. Returns the first
    /// mismatch as a human-readable message.
    pub fn check_access_summaries(&self, params: &Env, store: &mut ArrayStore) -> Result<u64, String> {
        store.enable_recording();
        let mut env = params.clone();
        let mut checked = 0;
        self.check_body(ROOT, &mut env, store, &mut checked)?;
        Ok(checked)
    }

    fn check_body(&self, node: NodeId, env: &mut Env, store: &ArrayStore, checked: &mut u64) -> Result<(), String> {
        for item in &self.node(node).body {
            match *item {
                Item::Stmt(s) => {
                    let st = self.statement(s);
                    store.take_recorded();
                    (st.body)(env, store).map_err(|e| format!("{}: {e}", st.name))?;
                    let got: BTreeSet<Access> = store.take_recorded().into_iter().collect();
                    let mut want = BTreeSet::new();
                    for acc in &st.accesses {
                        let array = self.array_id(acc.array).ok_or_else(|| format!("unknown array {}", acc.array))?;
                        let index = acc.eval(env).map_err(|e| e.to_string())?;
                        want.insert(Access {
                            array,
                            index,
                            mode: acc.mode,
                        });
                    }
                    if got != want {
                        return Err(format!(
                            "statement `{}` at {:?}: recorded {:?}, summaries predict {:?}",
                            st.name,
                            env.iter().collect::<Vec<_>>(),
                            got,
                            want
                        ));
                    }
                    *checked += 1;
                }
                Item::Loop(c) => {
                    let child = self.node(c);
                    let (lb, ub) = self.bounds(c, env).map_err(|e| e.to_string())?;
                    let mut v = lb;
                    while v <= ub {
                        env.push(child.var, v);
                        let r = self.check_body(c, env, store, checked);
                        env.pop();
                        r?;
                        v += child.step;
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noop() -> Body {
        Arc::new(|_, _| Ok(()))
    }

    fn stmt(name: &str) -> Statement {
        Statement {
            name: name.into(),
            body: noop(),
            accesses: vec![],
        }
    }

    fn fig_seq() -> LoopTree {
        let mut b = TreeBuilder::new("figseq", &["T", "N"]);
        let t = b.add_loop(ROOT, LoopSpec::new("t", "1", "T-1").seq()).unwrap();
        let i = b.add_loop(t, LoopSpec::new("i", "1", "N-2").par()).unwrap();
        let j = b.add_loop(i, LoopSpec::new("j", "1", "N-2").seq()).unwrap();
        let k = b.add_loop(j, LoopSpec::new("k", "1", "N-2").par().tile()).unwrap();
        b.add_stmt(k, stmt("S0")).unwrap();
        b.finish()
    }

    fn params(t: i64, n: i64) -> Env {
        [("T", t), ("N", n)].into_iter().collect()
    }

    #[test]
    fn fig_seq_is_valid() {
        fig_seq().validate(&params(3, 4)).unwrap();
    }

    #[test]
    fn scoping_diagnostic() {
        let mut b = TreeBuilder::new("bad", &["N"]);
        let j = b.add_loop(ROOT, LoopSpec::new("j", "0", "k").tile()).unwrap();
        let k = b.add_loop(j, LoopSpec::new("k", "0", "N")).unwrap();
        b.add_stmt(k, stmt("S")).unwrap();
        let diags = b.finish().validate(&[("N", 4)].into_iter().collect()).unwrap_err();
        assert!(diags.iter().any(|d| d.path == "root/j" && d.message.contains("`k`")), "{diags:?}");
    }

    #[test]
    fn band_contiguity_diagnostic() {
        let mut b = TreeBuilder::new("bad", &["N"]);
        let a = b.add_loop(ROOT, LoopSpec::new("a", "0", "N").perm(1).tile()).unwrap();
        let c = b.add_loop(ROOT, LoopSpec::new("c", "0", "N").perm(1).tile()).unwrap();
        b.add_stmt(a, stmt("S1")).unwrap();
        b.add_stmt(c, stmt("S2")).unwrap();
        let diags = b.finish().validate(&[("N", 4)].into_iter().collect()).unwrap_err();
        assert!(diags.iter().any(|d| d.message.contains("divergent")), "{diags:?}");
    }

    #[test]
    fn band_interrupted_by_sequential_loop() {
        let mut b = TreeBuilder::new("bad", &["N"]);
        let a = b.add_loop(ROOT, LoopSpec::new("a", "0", "N").perm(1)).unwrap();
        let s = b.add_loop(a, LoopSpec::new("s", "0", "N").seq()).unwrap();
        let c = b.add_loop(s, LoopSpec::new("c", "0", "N").perm(1).tile()).unwrap();
        b.add_stmt(c, stmt("S")).unwrap();
        let diags = b.finish().validate(&[("N", 4)].into_iter().collect()).unwrap_err();
        assert!(diags.iter().any(|d| d.path == "root/a/s" && d.message.contains("interrupts")), "{diags:?}");
    }

    #[test]
    fn tile_boundary_count_and_statement_placement() {
        let mut b = TreeBuilder::new("bad", &["N"]);
        let a = b.add_loop(ROOT, LoopSpec::new("a", "0", "N").tile()).unwrap();
        let c = b.add_loop(a, LoopSpec::new("c", "0", "N").tile()).unwrap();
        b.add_stmt(a, stmt("S0")).unwrap();
        b.add_stmt(c, stmt("S1")).unwrap();
        let d2 = b.add_loop(ROOT, LoopSpec::new("d", "0", "N")).unwrap();
        b.add_stmt(d2, stmt("S2")).unwrap();
        let diags = b.finish().validate(&[("N", 4)].into_iter().collect()).unwrap_err();
        assert!(diags.iter().any(|d| d.path == "root/a/c" && d.message.contains("2 tile-boundary")));
        assert!(diags.iter().any(|d| d.path == "root/d" && d.message.contains("0 tile-boundary")));
        assert!(diags.iter().any(|d| d.path == "root/a" && d.message.contains("innermost")));
    }

    #[test]
    fn missing_parameter() {
        let diags = fig_seq().validate(&[("T", 3)].into_iter().collect()).unwrap_err();
        assert!(diags.iter().any(|d| d.message.contains("`N`")));
    }

    #[test]
    fn sequential_instance_counts() {
        let tree = fig_seq();
        let store = ArrayStore::allocate(&tree.arrays, &params(3, 4)).unwrap();
        // t in {1,2}, i, j, k in {1,2}
        let mut brute = 0;
        for _t in 1..3 {
            for _i in 1..=2 {
                for _j in 1..=2 {
                    for _k in 1..=2 {
                        brute += 1;
                    }
                }
            }
        }
        assert_eq!(tree.iterate_sequentially(&params(3, 4), &store).unwrap(), brute);
        assert_eq!(tree.iterate_sequentially(&params(1, 4), &store).unwrap(), 0);
    }

    #[test]
    fn count_instances_segments() {
        let tree = fig_seq();
        let t = tree.root().children().next().unwrap();
        assert_eq!(tree.count_instances(t, 0, &params(3, 4)).unwrap(), 2);
        let k = tree.path_to(NodeId(4)).last().copied().unwrap();
        let mut env = params(3, 4);
        env.push(Sym::new("t"), 1);
        assert_eq!(tree.count_instances(k, 1, &env).unwrap(), 8);
        assert_eq!(tree.count_instances(t, 0, &params(0, 4)).unwrap(), 0);
    }

    #[test]
    fn out_of_bounds_reports_coordinates() {
        let mut b = TreeBuilder::new("oob", &["N"]);
        let a = b.array("A", ElemKind::F64, &["N"]).unwrap();
        let i = b.add_loop(ROOT, LoopSpec::new("i", "0", "N").tile()).unwrap();
        let isym = Sym::new("i");
        b.add_stmt(
            i,
            Statement {
                name: "S".into(),
                body: Arc::new(move |env, st| st.write_f64(a, &[env[isym]], 1.0)),
                accesses: vec![],
            },
        )
        .unwrap();
        let tree = b.finish();
        let p: Env = [("N", 3)].into_iter().collect();
        let store = ArrayStore::allocate(&tree.arrays, &p).unwrap();
        let err = tree.iterate_sequentially(&p, &store).unwrap_err();
        match err {
            ExecError::Store { coords, .. } => assert!(coords.contains(&(isym, 3))),
            other => panic!("{other}"),
        }
    }
}
