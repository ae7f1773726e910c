//! Exhaustive dependence enumeration on small instances, and the check that a
//! declared dependence scheme orders every enumerated pair.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use smallvec::SmallVec;

use super::{antecedents, group_tags, DepError, DepSpec, TaskTag};
use crate::edt::EdtForest;
use crate::loop_tree::{AccessMode, Item, LoopTree, NodeId, StmtId, ROOT};
use crate::range_expr::Env;

#[derive(Default)]
struct Cell {
    writer: Option<u32>,
    readers: SmallVec<[u32; 4]>,
}

struct Walk<'a> {
    tree: &'a LoopTree,
    stmt_edt: HashMap<StmtId, (u32, usize)>,
    base: usize,
    cells: HashMap<(u32, SmallVec<[i64; 4]>), Cell>,
    tags: Vec<TaskTag>,
    tag_ids: HashMap<TaskTag, u32>,
    pairs: BTreeSet<(u32, u32)>,
    instances: u64,
    limit: u64,
}

impl Walk<'_> {
    fn intern(&mut self, tag: TaskTag) -> u32 {
        if let Some(&id) = self.tag_ids.get(&tag) {
            return id;
        }
        let id = self.tags.len() as u32;
        self.tags.push(tag.clone());
        self.tag_ids.insert(tag, id);
        id
    }

    fn body(&mut self, node: NodeId, env: &mut Env) -> Result<(), DepError> {
        for item in self.tree.node(node).body.clone() {
            match item {
                Item::Stmt(s) => self.instance(s, env)?,
                Item::Loop(c) => {
                    let (lb, ub) = self.tree.bounds(c, env)?;
                    let (var, step) = (self.tree.node(c).var, self.tree.node(c).step);
                    let mut v = lb;
                    while v <= ub {
                        env.push(var, v);
                        let r = self.body(c, env);
                        env.pop();
                        r?;
                        v += step;
                    }
                }
            }
        }
        Ok(())
    }

    fn instance(&mut self, s: StmtId, env: &Env) -> Result<(), DepError> {
        self.instances += 1;
        if self.instances > self.limit {
            return Err(DepError::TooLarge {
                instances: self.instances,
                limit: self.limit,
            });
        }
        let (edt, dims) = self.stmt_edt[&s];
        let coords = env.iter().skip(self.base).take(dims).map(|(_, v)| v).collect();
        let me = self.intern(TaskTag { edt, coords });
        let st = self.tree.statement(s);
        let mut accesses: Vec<_> = st.accesses.iter().collect();
        // Reads of an instance happen before its writes.
        accesses.sort_by_key(|a| a.mode == AccessMode::Write);
        for acc in accesses {
            let array = self
                .tree
                .array_id(acc.array)
                .ok_or_else(|| DepError::Exec(format!("unknown array {}", acc.array)))?;
            let mut index = SmallVec::new();
            for e in &acc.indices {
                index.push(e.eval(env).map_err(|e| DepError::Exec(e.to_string()))?);
            }
            let cell = self.cells.entry((array.0, index)).or_default();
            match acc.mode {
                AccessMode::Read => {
                    if let Some(w) = cell.writer {
                        if w != me {
                            self.pairs.insert((w, me));
                        }
                    }
                    if !cell.readers.contains(&me) {
                        cell.readers.push(me);
                    }
                }
                AccessMode::Write => {
                    for &r in cell.readers.iter().chain(cell.writer.iter()) {
                        if r != me {
                            self.pairs.insert((r, me));
                        }
                    }
                    cell.readers.clear();
                    cell.writer = Some(me);
                }
            }
        }
        Ok(())
    }
}

/// Inter-task dependences of a small instance, as `(source, sink)` pairs.
///
/// Statement instances run in sequential order; every conflicting pair of
/// accesses to one cell (at least one a write) orders the sink's task after
/// the source's. Only the last writer and the readers since it are kept per
/// cell, which yields a set with the same transitive closure as the full
/// pairwise enumeration.
pub fn brute_force_tile_deps(
    tree: &LoopTree,
    forest: &EdtForest,
    params: &Env,
    limit: u64,
) -> Result<BTreeSet<(TaskTag, TaskTag)>, DepError> {
    let mut stmt_edt = HashMap::new();
    for e in &forest.edts {
        for &s in &e.statements {
            stmt_edt.insert(s, (e.id, e.dims()));
        }
    }
    let mut walk = Walk {
        tree,
        stmt_edt,
        base: params.len(),
        cells: HashMap::new(),
        tags: Vec::new(),
        tag_ids: HashMap::new(),
        pairs: BTreeSet::new(),
        instances: 0,
        limit,
    };
    let mut env = params.clone();
    walk.body(ROOT, &mut env)?;
    Ok(walk
        .pairs
        .iter()
        .map(|&(a, b)| (walk.tags[a as usize].clone(), walk.tags[b as usize].clone()))
        .collect())
}

/// Happens-before graph of a declared scheme: every task has a start and an
/// end node; group phases, sibling sequencing and point-to-point antecedents
/// become edges.
pub struct TaskGraph {
    preds: Vec<Vec<u32>>,
    tasks: HashMap<TaskTag, (u32, u32)>,
}

impl TaskGraph {
    pub fn build(tree: &LoopTree, forest: &EdtForest, spec: &DepSpec, params: &Env) -> Result<TaskGraph, DepError> {
        let mut g = TaskGraph {
            preds: Vec::new(),
            tasks: HashMap::new(),
        };
        let mut cur = g.node();
        for &top in &forest.top {
            cur = g.group(tree, forest, spec, params, top, &[], cur)?;
        }
        let tags: Vec<TaskTag> = g.tasks.keys().cloned().collect();
        for tag in tags {
            let start = g.tasks[&tag].0;
            for a in antecedents(tree, forest, spec, params, &tag) {
                let end = g
                    .tasks
                    .get(&a)
                    .ok_or_else(|| DepError::Exec(format!("antecedent {a} of {tag} is not a task")))?
                    .1;
                g.preds[start as usize].push(end);
            }
        }
        Ok(g)
    }

    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    fn node(&mut self) -> u32 {
        self.preds.push(Vec::new());
        (self.preds.len() - 1) as u32
    }

    fn edge(&mut self, from: u32, to: u32) {
        self.preds[to as usize].push(from);
    }

    #[allow(clippy::too_many_arguments)]
    fn group(
        &mut self,
        tree: &LoopTree,
        forest: &EdtForest,
        spec: &DepSpec,
        params: &Env,
        edt: u32,
        prefix: &[i64],
        entry: u32,
    ) -> Result<u32, DepError> {
        let e = forest.get(edt);
        let tags = group_tags(tree, e, params, prefix)?;
        let mut cur = entry;
        for phase in phases(tags, spec.fan_dim(edt)) {
            let next = self.node();
            for coords in phase {
                let (s, t) = (self.node(), self.node());
                self.edge(cur, s);
                let mut x = s;
                for &c in &e.children {
                    x = self.group(tree, forest, spec, params, c, &coords, x)?;
                }
                self.edge(x, t);
                self.edge(t, next);
                self.tasks.insert(TaskTag { edt, coords }, (s, t));
            }
            cur = next;
        }
        Ok(cur)
    }

    fn topo_rank(&self) -> Vec<u32> {
        let n = self.preds.len();
        let mut succs = vec![Vec::new(); n];
        let mut indeg = vec![0u32; n];
        for (to, ps) in self.preds.iter().enumerate() {
            for &p in ps {
                succs[p as usize].push(to as u32);
                indeg[to] += 1;
            }
        }
        let mut rank = vec![u32::MAX; n];
        let mut ready: Vec<u32> = (0..n as u32).filter(|&v| indeg[v as usize] == 0).collect();
        let mut next = 0;
        while let Some(v) = ready.pop() {
            rank[v as usize] = next;
            next += 1;
            for &s in &succs[v as usize] {
                indeg[s as usize] -= 1;
                if indeg[s as usize] == 0 {
                    ready.push(s);
                }
            }
        }
        rank
    }
}

/// Splits lexicographically ordered tags into sequential phases.
pub(crate) fn phases(tags: Vec<super::Coords>, fan: Option<usize>) -> Vec<Vec<super::Coords>> {
    let Some(k) = fan else {
        return if tags.is_empty() { Vec::new() } else { vec![tags] };
    };
    let mut by: std::collections::BTreeMap<i64, Vec<super::Coords>> = Default::default();
    for t in tags {
        by.entry(t[k]).or_default().push(t);
    }
    by.into_values().collect()
}

/// Pairs of `exact` not ordered by the graph, sorted.
pub fn uncovered(graph: &TaskGraph, exact: &BTreeSet<(TaskTag, TaskTag)>) -> Vec<(TaskTag, TaskTag)> {
    let rank = graph.topo_rank();
    let mut by_target: HashMap<&TaskTag, Vec<&TaskTag>> = HashMap::new();
    let mut missing = Vec::new();
    for (a, b) in exact {
        if graph.tasks.contains_key(a) && graph.tasks.contains_key(b) {
            by_target.entry(b).or_default().push(a);
        } else {
            missing.push((a.clone(), b.clone()));
        }
    }
    let mut stamp = vec![0u32; graph.preds.len()];
    let mut epoch = 0;
    let mut stack = Vec::new();
    for (b, sources) in by_target {
        epoch += 1;
        let mut want: HashMap<u32, &TaskTag> = sources.iter().map(|a| (graph.tasks[*a].1, *a)).collect();
        let floor = want.keys().map(|&n| rank[n as usize]).min().unwrap_or(0);
        stack.clear();
        stack.push(graph.tasks[b].0);
        stamp[graph.tasks[b].0 as usize] = epoch;
        while let Some(v) = stack.pop() {
            if want.is_empty() {
                break;
            }
            want.remove(&v);
            for &p in &graph.preds[v as usize] {
                if stamp[p as usize] != epoch && rank[p as usize] >= floor {
                    stamp[p as usize] = epoch;
                    stack.push(p);
                }
            }
        }
        for a in want.into_values() {
            missing.push((a.clone(), b.clone()));
        }
    }
    missing.sort();
    missing
}

pub fn covers(graph: &TaskGraph, exact: &BTreeSet<(TaskTag, TaskTag)>) -> bool {
    uncovered(graph, exact).is_empty()
}

/// One `source -> sink` line per pair, in sorted order.
pub fn dump_edges(pairs: &BTreeSet<(TaskTag, TaskTag)>) -> String {
    let mut out = String::new();
    for (a, b) in pairs {
        let _ = writeln!(out, "{a} -> {b}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dependence::DimDep;
    use crate::edt::{form_edts, mark_tree, MarkStrategy};
    use crate::loop_tree::{text, LoopSpec, Statement, TreeBuilder};
    use std::sync::Arc;

    fn setup(src: &str) -> (LoopTree, EdtForest, Env) {
        let k = text::parse(src).unwrap();
        let p = k.default_params();
        let marks = mark_tree(&k.tree, &MarkStrategy::TileGranularity).unwrap();
        let f = form_edts(&k.tree, &marks).unwrap();
        (k.tree, f, p)
    }

    const CHAIN: &str = "\
kernel chain
param N = 4
array A : f64[N]
loop i perm(1) [1, N-1] tile {
  stmt S {
    write A[i]
    read A[i-1]
  }
}
";

    #[test]
    fn chain_deps_and_cover() {
        let (tree, f, p) = setup(CHAIN);
        let exact = brute_force_tile_deps(&tree, &f, &p, 1000).unwrap();
        assert_eq!(dump_edges(&exact), "0:(1) -> 0:(2)\n0:(2) -> 0:(3)\n");
        let spec = DepSpec::from_loop_types(&tree, &f, &[]);
        let g = TaskGraph::build(&tree, &f, &spec, &p).unwrap();
        assert!(covers(&g, &exact));
        assert!(covers(&g, &BTreeSet::new()));

        let mut par = spec.clone();
        par.dims[0][0] = DimDep::None;
        let g = TaskGraph::build(&tree, &f, &par, &p).unwrap();
        assert_eq!(uncovered(&g, &exact).len(), 2);
    }

    #[test]
    fn manhattan_path() {
        let (tree, f, p) = crate::dependence::tests::grid(4);
        let spec = DepSpec::from_loop_types(&tree, &f, &[]);
        let g = TaskGraph::build(&tree, &f, &spec, &p).unwrap();
        let exact = BTreeSet::from([(TaskTag::new(0, &[0, 0]), TaskTag::new(0, &[2, 2]))]);
        assert!(covers(&g, &exact));
        let back = BTreeSet::from([(TaskTag::new(0, &[2, 2]), TaskTag::new(0, &[0, 0]))]);
        assert!(!covers(&g, &back));
    }

    #[test]
    fn sequential_phases_cover() {
        let (tree, f, p) = setup(
            "kernel s\nparam N = 4\narray A : f64[N]\nloop t seq [1, N-1] tile {\n stmt S {\n write A[t]\n read A[t-1]\n }\n}\n",
        );
        let exact = brute_force_tile_deps(&tree, &f, &p, 1000).unwrap();
        assert_eq!(exact.len(), 2);
        let spec = DepSpec::from_loop_types(&tree, &f, &[]);
        assert!(covers(&TaskGraph::build(&tree, &f, &spec, &p).unwrap(), &exact));
    }

    #[test]
    fn single_tile_and_size_guard() {
        let mut b = TreeBuilder::new("one", &[]);
        let a = b.array("A", crate::loop_tree::ElemKind::F64, &["4"]).unwrap();
        let _ = a;
        let t = b.add_loop(ROOT, LoopSpec::new("t", "0", "0").tile()).unwrap();
        let i = b.add_loop(t, LoopSpec::new("i", "1", "3")).unwrap();
        let idx = b.indices("S", &["i"]).unwrap();
        let prev = b.indices("S", &["i-1"]).unwrap();
        b.add_stmt(
            i,
            Statement {
                name: "S".into(),
                body: Arc::new(|_, _| Ok(())),
                accesses: vec![
                    crate::loop_tree::AccessSummary::write("A", idx),
                    crate::loop_tree::AccessSummary::read("A", prev),
                ],
            },
        )
        .unwrap();
        let tree = b.finish();
        let f = form_edts(&tree, &mark_tree(&tree, &MarkStrategy::TileGranularity).unwrap()).unwrap();
        let e = Env::new();
        assert!(brute_force_tile_deps(&tree, &f, &e, 100).unwrap().is_empty());
        assert!(matches!(brute_force_tile_deps(&tree, &f, &e, 2), Err(DepError::TooLarge { .. })));
    }
}
