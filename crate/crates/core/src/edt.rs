//! Tree marking and carving of marked nodes into compile-time EDTs.

use std::collections::{BTreeSet, HashSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::loop_tree::{Item, LoopTree, LoopType, NodeId, StmtId, ROOT};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MarkStrategy {
    /// Stop at the tile-boundary loop of every branch.
    TileGranularity,
    /// Mark the given loops; tile boundaries without a user mark below them
    /// are still marked so every statement lands in some EDT.
    UserProvided(BTreeSet<NodeId>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormError {
    #[error("user-marked node {0:?} is not a loop of this tree")]
    UnknownNode(NodeId),
    #[error("EDT at {path} mixes permutable bands {a} and {b}")]
    MixedBands { path: String, a: u32, b: u32 },
    #[error("sequential loop {path} is not the innermost dimension of its EDT")]
    SequentialInterior { path: String },
    #[error("loop {path} of type {ty} distributes into sibling EDTs without being marked")]
    UnmarkedDistribution { path: String, ty: LoopType },
}

/// Marks nodes breadth-first. The root is always marked.
pub fn mark_tree(tree: &LoopTree, strategy: &MarkStrategy) -> Result<BTreeSet<NodeId>, FormError> {
    let user: HashSet<NodeId> = match strategy {
        MarkStrategy::TileGranularity => HashSet::new(),
        MarkStrategy::UserProvided(ids) => {
            for &id in ids {
                if id == ROOT || id.0 as usize >= tree.nodes().len() {
                    return Err(FormError::UnknownNode(id));
                }
            }
            ids.iter().copied().collect()
        }
    };
    let user_mode = matches!(strategy, MarkStrategy::UserProvided(_));
    let has_user_below = |n: NodeId| user.iter().any(|&u| tree.is_ancestor(n, u));

    let mut marked = BTreeSet::from([ROOT]);
    let mut queue = std::collections::VecDeque::from([ROOT]);
    while let Some(p) = queue.pop_front() {
        let parent = tree.node(p);
        let loop_children: Vec<NodeId> = parent.children().collect();
        for &c in &loop_children {
            let node = tree.node(c);
            let granular = if user_mode {
                user.contains(&c) || (node.tile_boundary && !has_user_below(c))
            } else {
                node.tile_boundary
            };
            // A band change closes the run above it: marking the parent keeps
            // the two bands in different EDTs, since a mark ends an EDT.
            if node.loop_type.band().is_some() && band_changes(tree, &marked, c) {
                marked.insert(p);
            }
            let mark = granular || node.loop_type == LoopType::Sequential || loop_children.len() > 1;
            if mark {
                marked.insert(c);
            }
            let stop = if user_mode {
                (user.contains(&c) || node.tile_boundary) && !has_user_below(c)
            } else {
                node.tile_boundary
            };
            if !stop {
                queue.push_back(c);
            }
        }
    }
    Ok(marked)
}

/// True when `n` is permutable and the nearest permutable loop above it, within
/// the unmarked run that ends at the first marked ancestor, is in another band.
fn band_changes(tree: &LoopTree, marked: &BTreeSet<NodeId>, n: NodeId) -> bool {
    let band = tree.node(n).loop_type.band();
    let mut cur = tree.node(n).parent;
    while let Some(p) = cur {
        if marked.contains(&p) {
            return false;
        }
        if let Some(b) = tree.node(p).loop_type.band() {
            return Some(b) != band;
        }
        cur = tree.node(p).parent;
    }
    false
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileTimeEdt {
    pub id: u32,
    pub node: NodeId,
    pub start: usize,
    pub stop: usize,
    /// Loops at levels `0..=stop`; the tag has one coordinate per entry.
    pub path: Vec<NodeId>,
    pub statements: Vec<StmtId>,
    pub parent: Option<u32>,
    /// Child EDTs in program order.
    pub children: Vec<u32>,
}

impl CompileTimeEdt {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.stop + 1
    }

    /// Loops enumerated locally by this EDT's STARTUP.
    pub fn local_loops(&self) -> &[NodeId] {
        &self.path[self.start..]
    }
}

#[derive(Debug, Clone)]
pub struct EdtForest {
    pub edts: Vec<CompileTimeEdt>,
    /// EDTs directly under the root, in program order.
    pub top: Vec<u32>,
}

impl EdtForest {
    pub fn get(&self, id: u32) -> &CompileTimeEdt {
        &self.edts[id as usize]
    }

    /// Siblings (including `id`) in program order: the parent's children or the top level.
    pub fn siblings(&self, id: u32) -> &[u32] {
        match self.get(id).parent {
            Some(p) => &self.get(p).children,
            None => &self.top,
        }
    }

    pub fn dump(&self, tree: &LoopTree) -> String {
        let mut out = String::new();
        for e in &self.edts {
            let path: Vec<&str> = e.path.iter().map(|&n| tree.node(n).var.as_str()).collect();
            let stmts: Vec<&str> = e.statements.iter().map(|&s| tree.statement(s).name.as_str()).collect();
            let _ = writeln!(
                out,
                "{} start={} stop={} path={} stmts={}",
                e.id,
                e.start,
                e.stop,
                path.join("/"),
                if stmts.is_empty() { "-".to_owned() } else { stmts.join(",") }
            );
        }
        out
    }
}

/// Forms one EDT per marked non-root node, with dense ids in BFS order.
pub fn form_edts(tree: &LoopTree, marks: &BTreeSet<NodeId>) -> Result<EdtForest, FormError> {
    let order: Vec<NodeId> = tree.bfs().into_iter().filter(|n| *n != ROOT && marks.contains(n)).collect();
    let mut id_of = std::collections::HashMap::new();
    for (i, &n) in order.iter().enumerate() {
        id_of.insert(n, i as u32);
    }
    let nearest_marked = |n: NodeId| {
        let mut cur = tree.node(n).parent;
        while let Some(p) = cur {
            if marks.contains(&p) {
                return p;
            }
            cur = tree.node(p).parent;
        }
        ROOT
    };

    let mut edts = Vec::with_capacity(order.len());
    for &n in &order {
        let anc = nearest_marked(n);
        let start = (tree.node(anc).level + 1) as usize;
        let stop = tree.node(n).level as usize;
        let path = tree.path_to(n);
        let mut band: Option<u32> = None;
        for (lvl, &l) in path.iter().enumerate().skip(start) {
            let node = tree.node(l);
            match node.loop_type {
                LoopType::Permutable(b) => match band {
                    Some(a) if a != b => {
                        return Err(FormError::MixedBands {
                            path: tree.path_name(n),
                            a,
                            b,
                        })
                    }
                    _ => band = Some(b),
                },
                LoopType::Sequential if lvl != stop => {
                    return Err(FormError::SequentialInterior { path: tree.path_name(l) })
                }
                _ => {}
            }
            if lvl != stop && node.children().count() > 1 && node.loop_type != LoopType::Parallel {
                return Err(FormError::UnmarkedDistribution {
                    path: tree.path_name(l),
                    ty: node.loop_type,
                });
            }
        }
        let mut statements = Vec::new();
        collect_statements(tree, marks, n, &mut statements);
        edts.push(CompileTimeEdt {
            id: id_of[&n],
            node: n,
            start,
            stop,
            path,
            statements,
            parent: (anc != ROOT).then(|| id_of[&anc]),
            children: Vec::new(),
        });
    }

    // Children in program (depth-first) order.
    let mut top = Vec::new();
    let mut dfs = Vec::new();
    program_order(tree, ROOT, &mut dfs);
    for n in dfs {
        if let Some(&id) = id_of.get(&n) {
            match edts[id as usize].parent {
                Some(p) => edts[p as usize].children.push(id),
                None => top.push(id),
            }
        }
    }
    Ok(EdtForest { edts, top })
}

fn program_order(tree: &LoopTree, n: NodeId, out: &mut Vec<NodeId>) {
    for c in tree.node(n).children() {
        out.push(c);
        program_order(tree, c, out);
    }
}

/// Statements below `n` down to (excluding) the next marked descendants.
fn collect_statements(tree: &LoopTree, marks: &BTreeSet<NodeId>, n: NodeId, out: &mut Vec<StmtId>) {
    for item in &tree.node(n).body {
        match *item {
            Item::Stmt(s) => out.push(s),
            Item::Loop(c) if !marks.contains(&c) => collect_statements(tree, marks, c, out),
            Item::Loop(_) => {}
        }
    }
}

/// What a STARTUP does for one EDT instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StartupDescriptor {
    pub edt: u32,
    /// Tag dimensions enumerated locally (`start..=stop`).
    pub local_dims: std::ops::RangeInclusive<usize>,
    /// Set when the stop dimension is sequential: workers are grouped per
    /// sequential index and the groups run one after another.
    pub fan_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkerAction {
    ExecutesStatements(Vec<StmtId>),
    /// Spawns the first child STARTUP; the remaining children follow in order.
    SpawnsChild(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerDescriptor {
    pub edt: u32,
    pub action: WorkerAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShutdownAction {
    /// Start the next sibling EDT under the same parent instance.
    NextSibling(u32),
    /// Signal completion of the parent WORKER instance.
    CompleteParent(u32),
    /// The last top-level EDT: stop the runtime.
    StopRuntime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShutdownDescriptor {
    pub edt: u32,
    pub then: ShutdownAction,
}

impl fmt::Display for WorkerAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkerAction::ExecutesStatements(s) => write!(f, "executes {} statement(s)", s.len()),
            WorkerAction::SpawnsChild(c) => write!(f, "spawns child {}", c[0]),
        }
    }
}

pub fn runtime_triple(
    tree: &LoopTree,
    forest: &EdtForest,
    edt: u32,
) -> (StartupDescriptor, WorkerDescriptor, ShutdownDescriptor) {
    let e = forest.get(edt);
    let seq = tree.node(e.node).loop_type == LoopType::Sequential;
    let startup = StartupDescriptor {
        edt,
        local_dims: e.start..=e.stop,
        fan_dim: seq.then_some(e.stop),
    };
    let action = if e.is_leaf() {
        WorkerAction::ExecutesStatements(e.statements.clone())
    } else {
        WorkerAction::SpawnsChild(e.children.clone())
    };
    let sibs = forest.siblings(edt);
    let pos = sibs.iter().position(|&s| s == edt).unwrap();
    let then = match (sibs.get(pos + 1), e.parent) {
        (Some(&next), _) => ShutdownAction::NextSibling(next),
        (None, Some(p)) => ShutdownAction::CompleteParent(p),
        (None, None) => ShutdownAction::StopRuntime,
    };
    (
        startup,
        WorkerDescriptor { edt, action },
        ShutdownDescriptor { edt, then },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loop_tree::{LoopSpec, Statement, TreeBuilder};
    use std::sync::Arc;

    fn stmt(name: &str) -> Statement {
        Statement {
            name: name.into(),
            body: Arc::new(|_, _| Ok(())),
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

    fn names(tree: &LoopTree, set: &BTreeSet<NodeId>) -> Vec<String> {
        set.iter()
            .map(|&n| if n == ROOT { "root".into() } else { tree.node(n).var.to_string() })
            .collect()
    }

    #[test]
    fn fig_seq_marks_and_levels() {
        let tree = fig_seq();
        let marks = mark_tree(&tree, &MarkStrategy::TileGranularity).unwrap();
        assert_eq!(names(&tree, &marks), ["root", "t", "j", "k"]);
        let f = form_edts(&tree, &marks).unwrap();
        let lv: Vec<_> = f.edts.iter().map(|e| (e.start, e.stop)).collect();
        assert_eq!(lv, [(0, 0), (1, 2), (3, 3)]);
        assert_eq!(f.top, [0]);
        assert_eq!(f.get(0).children, [1]);
        assert_eq!(f.get(2).statements.len(), 1);
        assert_eq!(f.dump(&tree), "0 start=0 stop=0 path=t stmts=-\n1 start=1 stop=2 path=t/i/j stmts=-\n2 start=3 stop=3 path=t/i/j/k stmts=S0\n");
        let (s, w, d) = runtime_triple(&tree, &f, 1);
        assert_eq!(s.fan_dim, Some(2));
        assert_eq!(w.action, WorkerAction::SpawnsChild(vec![2]));
        assert_eq!(d.then, ShutdownAction::CompleteParent(0));
        let (_, w, d) = runtime_triple(&tree, &f, 2);
        assert!(matches!(w.action, WorkerAction::ExecutesStatements(_)));
        assert_eq!(runtime_triple(&tree, &f, 0).2.then, ShutdownAction::StopRuntime);
        assert_eq!(d.then, ShutdownAction::CompleteParent(1));
    }

    #[test]
    fn single_band_is_one_edt() {
        let mut b = TreeBuilder::new("band", &["N"]);
        let a = b.add_loop(ROOT, LoopSpec::new("a", "0", "N").perm(1)).unwrap();
        let c = b.add_loop(a, LoopSpec::new("c", "0", "N").perm(1)).unwrap();
        let d = b.add_loop(c, LoopSpec::new("d", "0", "N").perm(1).tile()).unwrap();
        let e = b.add_loop(d, LoopSpec::new("e", "0", "N").par()).unwrap();
        b.add_stmt(e, stmt("S")).unwrap();
        let tree = b.finish();
        let marks = mark_tree(&tree, &MarkStrategy::TileGranularity).unwrap();
        assert_eq!(names(&tree, &marks), ["root", "d"]);
        let f = form_edts(&tree, &marks).unwrap();
        assert_eq!(f.edts.len(), 1);
        assert_eq!((f.edts[0].start, f.edts[0].stop), (0, 2));
    }

    #[test]
    fn band_change_under_unmarked_parent() {
        let mut b = TreeBuilder::new("bands", &["N"]);
        let a = b.add_loop(ROOT, LoopSpec::new("a", "0", "N").perm(1)).unwrap();
        let p = b.add_loop(a, LoopSpec::new("p", "0", "N").par()).unwrap();
        let c = b.add_loop(p, LoopSpec::new("c", "0", "N").perm(2).tile()).unwrap();
        b.add_stmt(c, stmt("S")).unwrap();
        let tree = b.finish();
        let marks = mark_tree(&tree, &MarkStrategy::TileGranularity).unwrap();
        assert_eq!(names(&tree, &marks), ["root", "p", "c"]);
        let f = form_edts(&tree, &marks).unwrap();
        let lv: Vec<_> = f.edts.iter().map(|e| (e.start, e.stop)).collect();
        assert_eq!(lv, [(0, 1), (2, 2)]);
    }

    #[test]
    fn siblings_are_marked_and_ordered() {
        let mut b = TreeBuilder::new("sib", &["N"]);
        let t = b.add_loop(ROOT, LoopSpec::new("t", "0", "N").seq()).unwrap();
        let x = b.add_loop(t, LoopSpec::new("x", "0", "N").par().tile()).unwrap();
        let y = b.add_loop(t, LoopSpec::new("y", "0", "N").par()).unwrap();
        let z = b.add_loop(y, LoopSpec::new("z", "0", "N").par().tile()).unwrap();
        b.add_stmt(x, stmt("S1")).unwrap();
        b.add_stmt(z, stmt("S2")).unwrap();
        let tree = b.finish();
        let marks = mark_tree(&tree, &MarkStrategy::TileGranularity).unwrap();
        assert_eq!(names(&tree, &marks), ["root", "t", "x", "y", "z"]);
        let f = form_edts(&tree, &marks).unwrap();
        assert_eq!(f.get(0).children, [1, 2]);
        assert_eq!(runtime_triple(&tree, &f, 1).2.then, ShutdownAction::NextSibling(2));
        let all: usize = f.edts.iter().map(|e| e.statements.len()).sum();
        assert_eq!(all, 2);
    }

    #[test]
    fn user_marks() {
        let tree = fig_seq();
        let i = NodeId(2);
        let marks = mark_tree(&tree, &MarkStrategy::UserProvided(BTreeSet::from([i]))).unwrap();
        assert_eq!(names(&tree, &marks), ["root", "t", "i"]);
        assert!(mark_tree(&tree, &MarkStrategy::UserProvided(BTreeSet::from([NodeId(99)]))).is_err());
        let again = mark_tree(&tree, &MarkStrategy::UserProvided(marks.iter().copied().filter(|&n| n != ROOT).collect())).unwrap();
        assert_eq!(again, marks);
    }

    #[test]
    fn distribution_under_unmarked_permutable_is_rejected() {
        let mut b = TreeBuilder::new("bad", &["N"]);
        let a = b.add_loop(ROOT, LoopSpec::new("a", "0", "N").perm(1)).unwrap();
        let x = b.add_loop(a, LoopSpec::new("x", "0", "N").perm(1).tile()).unwrap();
        let y = b.add_loop(a, LoopSpec::new("y", "0", "N").perm(1).tile()).unwrap();
        b.add_stmt(x, stmt("S1")).unwrap();
        b.add_stmt(y, stmt("S2")).unwrap();
        let tree = b.finish();
        let marks = mark_tree(&tree, &MarkStrategy::TileGranularity).unwrap();
        assert!(matches!(form_edts(&tree, &marks), Err(FormError::UnmarkedDistribution { .. })));
    }
}
