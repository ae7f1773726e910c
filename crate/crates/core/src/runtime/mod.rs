//! Work-stealing execution of the STARTUP / WORKER / SHUTDOWN hierarchy.
//!
//! Each compile-time EDT instance group is opened by a STARTUP task that
//! enumerates its worker tags, creates one counting dependence per sequential
//! phase and spawns the first phase. The worker that drains a phase's counter
//! enqueues the SHUTDOWN for that phase, which either spawns the next phase or
//! closes the group: it then starts the next sibling EDT under the same
//! parent instance, completes the parent worker, or stops the run.
//!
//! Point-to-point antecedents are resolved through the completion table in
//! one of three disciplines (see [`Mode`]).

pub mod table;
pub mod trace;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use crossbeam::deque::{Steal, Stealer, Worker as Deque};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::dependence::{antecedents, group_tags, tag_env, Coords, DepSpec, TaskTag};
use crate::edt::{form_edts, mark_tree, EdtForest, FormError, MarkStrategy};
use crate::loop_tree::{ArrayStore, LoopTree};
use crate::range_expr::Env;
use crate::sym::Sym;
use table::{CompletionTable, CountingDep, Lookup, PutOutcome};
use trace::{Event, Kind, TraceEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Gets one at a time; the first miss suspends the task, which restarts
    /// from scratch once the missing tag is put.
    Block,
    /// All gets probed; the task parks on every missing tag and resumes past
    /// its gets when the last one arrives.
    Async,
    /// Antecedents registered at spawn; the task is only enqueued once all
    /// of them are done and never observes a miss.
    Dep,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Block, Mode::Async, Mode::Dep];
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Block => "block",
            Mode::Async => "async",
            Mode::Dep => "dep",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Mode, String> {
        match s.to_ascii_lowercase().as_str() {
            "block" => Ok(Mode::Block),
            "async" => Ok(Mode::Async),
            "dep" => Ok(Mode::Dep),
            _ => Err(format!("unknown mode `{s}` (expected block, async or dep)")),
        }
    }
}

/// Per-run counters. Merged across threads at the end of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metrics {
    /// Task executions of any kind, re-executions included.
    pub tasks: u64,
    pub startups: u64,
    pub workers: u64,
    pub shutdowns: u64,
    pub puts: u64,
    pub duplicate_puts: u64,
    pub gets: u64,
    pub get_misses: u64,
    pub suspensions: u64,
    pub requeues: u64,
    pub steals: u64,
    pub satisfies: u64,
    pub statement_instances: u64,
    pub max_ready_workers: u64,
    pub seconds: f64,
}

impl Metrics {
    fn merge(&mut self, o: &Metrics) {
        self.tasks += o.tasks;
        self.startups += o.startups;
        self.workers += o.workers;
        self.shutdowns += o.shutdowns;
        self.puts += o.puts;
        self.duplicate_puts += o.duplicate_puts;
        self.gets += o.gets;
        self.get_misses += o.get_misses;
        self.suspensions += o.suspensions;
        self.requeues += o.requeues;
        self.steals += o.steals;
        self.satisfies += o.satisfies;
        self.statement_instances += o.statement_instances;
    }

    /// Distinct task instances (each STARTUP, WORKER and SHUTDOWN once).
    pub fn task_instances(&self) -> u64 {
        self.startups + self.workers + self.shutdowns
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("deadlock: no runnable task while {} task(s) wait, e.g. {}", blocked.len(), blocked.first().map(|t| t.to_string()).unwrap_or_default())]
    Deadlock { blocked: Vec<TaskTag> },
    #[error("{0}")]
    Exec(String),
    #[error(transparent)]
    Form(#[from] FormError),
}

/// A loop tree carved into EDTs with its dependence specification.
#[derive(Debug, Clone)]
pub struct Program {
    pub tree: LoopTree,
    pub forest: EdtForest,
    pub spec: DepSpec,
}

impl Program {
    pub fn new(tree: LoopTree, strategy: &MarkStrategy, distances: &[(Sym, i64)]) -> Result<Program, FormError> {
        let marks = mark_tree(&tree, strategy)?;
        let forest = form_edts(&tree, &marks)?;
        let spec = DepSpec::from_loop_types(&tree, &forest, distances);
        Ok(Program { tree, forest, spec })
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub mode: Mode,
    pub threads: usize,
    pub trace: bool,
    pub seed: u64,
}

impl RunOptions {
    pub fn new(mode: Mode, threads: usize) -> RunOptions {
        RunOptions {
            mode,
            threads,
            trace: false,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug)]
pub struct RunOutput {
    pub store: ArrayStore,
    pub metrics: Metrics,
    /// Events sorted by epoch; empty unless tracing was requested.
    pub trace: Vec<TraceEvent>,
}

enum Parent {
    Root(usize),
    Worker { frame: Arc<WorkerTask>, child: usize },
}

struct Group {
    id: u64,
    edt: u32,
    prefix: Coords,
    phases: Vec<Vec<Coords>>,
    counters: Vec<CountingDep>,
    parent: Parent,
}

struct WorkerTask {
    tag: TaskTag,
    group: Arc<Group>,
    phase: usize,
    pending: AtomicUsize,
}

enum Task {
    Startup { edt: u32, prefix: Coords, parent: Parent },
    Worker { w: Arc<WorkerTask>, resumed: bool },
    Shutdown { group: Arc<Group>, phase: usize },
}

struct Shared<'a> {
    prog: &'a Program,
    params: &'a Env,
    store: &'a ArrayStore,
    mode: Mode,
    tracing: bool,
    table: CompletionTable<Arc<WorkerTask>>,
    stealers: Vec<Stealer<Task>>,
    /// Queued plus executing tasks. Zero with the run unfinished means no
    /// task can ever put again: a deadlock.
    active: AtomicUsize,
    queued: AtomicUsize,
    ready_workers: AtomicUsize,
    max_ready: AtomicUsize,
    done: AtomicBool,
    abort: AtomicBool,
    error: Mutex<Option<RunError>>,
    sleeping: AtomicUsize,
    idle_lock: Mutex<()>,
    idle_cv: Condvar,
    epoch: AtomicU64,
    group_ids: AtomicU64,
}

struct Local {
    id: usize,
    deque: Deque<Task>,
    rng: StdRng,
    m: Metrics,
    trace: Vec<TraceEvent>,
}

/// Executes `prog` over `store` to quiescence.
pub fn run(prog: &Program, params: &Env, store: ArrayStore, opts: &RunOptions) -> Result<RunOutput, RunError> {
    let threads = opts.threads.max(1);
    let deques: Vec<Deque<Task>> = (0..threads).map(|_| Deque::new_lifo()).collect();
    let shared = Shared {
        prog,
        params,
        store: &store,
        mode: opts.mode,
        tracing: opts.trace,
        table: CompletionTable::new(),
        stealers: deques.iter().map(Deque::stealer).collect(),
        active: AtomicUsize::new(0),
        queued: AtomicUsize::new(0),
        ready_workers: AtomicUsize::new(0),
        max_ready: AtomicUsize::new(0),
        done: AtomicBool::new(false),
        abort: AtomicBool::new(false),
        error: Mutex::new(None),
        sleeping: AtomicUsize::new(0),
        idle_lock: Mutex::new(()),
        idle_cv: Condvar::new(),
        epoch: AtomicU64::new(0),
        group_ids: AtomicU64::new(0),
    };
    let mut locals: Vec<Local> = deques
        .into_iter()
        .enumerate()
        .map(|(id, deque)| Local {
            id,
            deque,
            rng: StdRng::seed_from_u64(opts.seed.wrapping_add(id as u64)),
            m: Metrics::default(),
            trace: Vec::new(),
        })
        .collect();

    let began = Instant::now();
    if prog.forest.top.is_empty() {
        shared.done.store(true, Ordering::SeqCst);
    } else {
        let first = prog.forest.top[0];
        shared.push(
            &mut locals[0],
            Task::Startup {
                edt: first,
                prefix: Coords::new(),
                parent: Parent::Root(0),
            },
        );
    }
    let locals: Vec<Local> = std::thread::scope(|s| {
        let handles: Vec<_> = locals
            .into_iter()
            .map(|mut local| {
                let shared = &shared;
                s.spawn(move || {
                    shared.worker_loop(&mut local);
                    local
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("runtime thread panicked")).collect()
    });
    let seconds = began.elapsed().as_secs_f64();

    if let Some(e) = shared.error.lock().unwrap().take() {
        return Err(e);
    }
    let mut metrics = Metrics::default();
    let mut trace = Vec::new();
    for l in locals {
        metrics.merge(&l.m);
        trace.extend(l.trace);
    }
    metrics.max_ready_workers = shared.max_ready.load(Ordering::Relaxed) as u64;
    metrics.seconds = seconds;
    trace.sort_by_key(|e| e.epoch);
    drop(shared);
    Ok(RunOutput { store, metrics, trace })
}

impl Shared<'_> {
    fn fail(&self, e: RunError) {
        let mut slot = self.error.lock().unwrap();
        if slot.is_none() {
            *slot = Some(e);
        }
        self.abort.store(true, Ordering::SeqCst);
        self.idle_cv.notify_all();
    }

    fn emit(&self, l: &mut Local, event: Event, kind: Kind, tag: &TaskTag, group: Option<u64>) {
        if self.tracing {
            l.trace.push(TraceEvent {
                epoch: self.epoch.fetch_add(1, Ordering::SeqCst),
                thread: l.id,
                event,
                kind,
                tag: tag.clone(),
                group,
            });
        }
    }

    fn push(&self, l: &mut Local, task: Task) {
        if let Task::Worker { .. } = task {
            let r = self.ready_workers.fetch_add(1, Ordering::Relaxed) + 1;
            self.max_ready.fetch_max(r, Ordering::Relaxed);
        }
        self.active.fetch_add(1, Ordering::SeqCst);
        self.queued.fetch_add(1, Ordering::SeqCst);
        l.deque.push(task);
        if self.sleeping.load(Ordering::SeqCst) > 0 {
            self.idle_cv.notify_one();
        }
    }

    fn find(&self, l: &mut Local) -> Option<Task> {
        let task = l.deque.pop().or_else(|| {
            let n = self.stealers.len();
            if n < 2 {
                return None;
            }
            let start = l.rng.gen_range(0..n);
            for off in 0..n {
                let v = (start + off) % n;
                if v == l.id {
                    continue;
                }
                loop {
                    match self.stealers[v].steal() {
                        Steal::Success(t) => {
                            l.m.steals += 1;
                            return Some(t);
                        }
                        Steal::Empty => break,
                        Steal::Retry => continue,
                    }
                }
            }
            None
        })?;
        self.queued.fetch_sub(1, Ordering::SeqCst);
        if let Task::Worker { .. } = task {
            self.ready_workers.fetch_sub(1, Ordering::Relaxed);
        }
        Some(task)
    }

    fn worker_loop(&self, l: &mut Local) {
        let mut idle_rounds = 0u32;
        loop {
            if self.abort.load(Ordering::SeqCst) || self.done.load(Ordering::SeqCst) {
                break;
            }
            if let Some(task) = self.find(l) {
                idle_rounds = 0;
                l.m.tasks += 1;
                if let Err(e) = self.execute(l, task) {
                    self.fail(e);
                }
                self.active.fetch_sub(1, Ordering::SeqCst);
                continue;
            }
            if self.active.load(Ordering::SeqCst) == 0 {
                if !self.done.load(Ordering::SeqCst) {
                    let blocked = self.table.blocked(|w| w.tag.clone());
                    self.fail(RunError::Deadlock { blocked });
                }
                break;
            }
            idle_rounds += 1;
            if idle_rounds < 64 {
                std::thread::yield_now();
                continue;
            }
            self.sleeping.fetch_add(1, Ordering::SeqCst);
            let guard = self.idle_lock.lock().unwrap();
            if self.queued.load(Ordering::SeqCst) == 0
                && self.active.load(Ordering::SeqCst) > 0
                && !self.done.load(Ordering::SeqCst)
                && !self.abort.load(Ordering::SeqCst)
            {
                let _unused = self.idle_cv.wait_timeout(guard, Duration::from_micros(500)).unwrap();
            }
            self.sleeping.fetch_sub(1, Ordering::SeqCst);
        }
        self.idle_cv.notify_all();
    }

    fn execute(&self, l: &mut Local, task: Task) -> Result<(), RunError> {
        match task {
            Task::Startup { edt, prefix, parent } => self.startup(l, edt, prefix, parent),
            Task::Worker { w, resumed } => self.worker(l, w, resumed),
            Task::Shutdown { group, phase } => self.shutdown(l, group, phase),
        }
    }

    fn startup(&self, l: &mut Local, edt: u32, prefix: Coords, parent: Parent) -> Result<(), RunError> {
        l.m.startups += 1;
        let stag = TaskTag {
            edt,
            coords: prefix.clone(),
        };
        self.emit(l, Event::Start, Kind::Startup, &stag, None);
        let e = self.prog.forest.get(edt);
        let tags = group_tags(&self.prog.tree, e, self.params, &prefix).map_err(|e| RunError::Exec(e.to_string()))?;
        let phases = crate::dependence::phases(tags, self.prog.spec.fan_dim(edt));
        let counters = phases.iter().map(|p| CountingDep::new(p.len())).collect();
        let n = phases.len().max(1) as u64;
        let group = Arc::new(Group {
            id: self.group_ids.fetch_add(n, Ordering::Relaxed),
            edt,
            prefix,
            phases,
            counters,
            parent,
        });
        if group.phases.is_empty() {
            self.emit(l, Event::Spawn, Kind::Shutdown, &stag, Some(group.id));
            self.push(l, Task::Shutdown { group, phase: 0 });
        } else {
            self.spawn_phase(l, &group, 0);
        }
        self.emit(l, Event::Done, Kind::Startup, &stag, None);
        Ok(())
    }

    fn spawn_phase(&self, l: &mut Local, group: &Arc<Group>, phase: usize) {
        for coords in &group.phases[phase] {
            let w = Arc::new(WorkerTask {
                tag: TaskTag {
                    edt: group.edt,
                    coords: coords.clone(),
                },
                group: group.clone(),
                phase,
                pending: AtomicUsize::new(0),
            });
            self.emit(l, Event::Spawn, Kind::Worker, &w.tag, Some(group.id + phase as u64));
            if self.mode == Mode::Dep {
                // Withheld until every antecedent has been put.
                w.pending.store(1, Ordering::SeqCst);
                for a in antecedents(&self.prog.tree, &self.prog.forest, &self.prog.spec, self.params, &w.tag) {
                    self.table.get_or_wait(&a, || {
                        w.pending.fetch_add(1, Ordering::SeqCst);
                        w.clone()
                    });
                }
                if w.pending.fetch_sub(1, Ordering::SeqCst) == 1 {
                    self.push(l, Task::Worker { w, resumed: true });
                }
            } else {
                self.push(l, Task::Worker { w, resumed: false });
            }
        }
    }

    fn worker(&self, l: &mut Local, w: Arc<WorkerTask>, resumed: bool) -> Result<(), RunError> {
        let gid = Some(w.group.id + w.phase as u64);
        self.emit(l, if resumed && self.mode != Mode::Dep { Event::Resume } else { Event::Start }, Kind::Worker, &w.tag, gid);
        match self.mode {
            Mode::Block => {
                for a in antecedents(&self.prog.tree, &self.prog.forest, &self.prog.spec, self.params, &w.tag) {
                    l.m.gets += 1;
                    let miss = self.table.get_or_wait(&a, || {
                        w.pending.store(1, Ordering::SeqCst);
                        w.clone()
                    });
                    if miss == Lookup::Registered {
                        l.m.get_misses += 1;
                        l.m.suspensions += 1;
                        self.emit(l, Event::Suspend, Kind::Worker, &w.tag, gid);
                        return Ok(());
                    }
                }
            }
            Mode::Async if !resumed => {
                w.pending.store(1, Ordering::SeqCst);
                let mut missed = false;
                for a in antecedents(&self.prog.tree, &self.prog.forest, &self.prog.spec, self.params, &w.tag) {
                    l.m.gets += 1;
                    let r = self.table.get_or_wait(&a, || {
                        w.pending.fetch_add(1, Ordering::SeqCst);
                        w.clone()
                    });
                    if r == Lookup::Registered {
                        l.m.get_misses += 1;
                        missed = true;
                    }
                }
                if missed {
                    l.m.suspensions += 1;
                    if w.pending.fetch_sub(1, Ordering::SeqCst) != 1 {
                        self.emit(l, Event::Suspend, Kind::Worker, &w.tag, gid);
                        return Ok(());
                    }
                    // Everything arrived while registering: run now.
                }
            }
            Mode::Async | Mode::Dep => {}
        }

        let e = self.prog.forest.get(w.tag.edt);
        if e.is_leaf() {
            let mut env = tag_env(&self.prog.tree, e, self.params, &w.tag.coords);
            let n = self
                .prog
                .tree
                .exec_body(e.node, &mut env, self.store)
                .map_err(|e| RunError::Exec(format!("task {}: {e}", w.tag)))?;
            l.m.statement_instances += n;
            self.complete(l, &w);
        } else {
            let child = e.children[0];
            let prefix = w.tag.coords.clone();
            self.emit(l, Event::Spawn, Kind::Startup, &TaskTag { edt: child, coords: prefix.clone() }, None);
            self.push(
                l,
                Task::Startup {
                    edt: child,
                    prefix,
                    parent: Parent::Worker { frame: w, child: 0 },
                },
            );
        }
        Ok(())
    }

    /// One put and one counting-dependence satisfy for a finished worker.
    fn complete(&self, l: &mut Local, w: &Arc<WorkerTask>) {
        l.m.workers += 1;
        l.m.puts += 1;
        let gid = w.group.id + w.phase as u64;
        self.emit(l, Event::Done, Kind::Worker, &w.tag, Some(gid));
        match self.table.put(w.tag.clone()) {
            PutOutcome::First(waiters) => {
                for waiter in waiters {
                    if waiter.pending.fetch_sub(1, Ordering::SeqCst) == 1 {
                        if self.mode != Mode::Dep {
                            l.m.requeues += 1;
                        }
                        self.push(l, Task::Worker { w: waiter, resumed: true });
                    }
                }
            }
            PutOutcome::Duplicate => l.m.duplicate_puts += 1,
        }
        l.m.satisfies += 1;
        if w.group.counters[w.phase].satisfy() {
            let stag = TaskTag {
                edt: w.group.edt,
                coords: w.group.prefix.clone(),
            };
            self.emit(l, Event::Spawn, Kind::Shutdown, &stag, Some(gid));
            self.push(
                l,
                Task::Shutdown {
                    group: w.group.clone(),
                    phase: w.phase,
                },
            );
        }
    }

    fn shutdown(&self, l: &mut Local, group: Arc<Group>, phase: usize) -> Result<(), RunError> {
        l.m.shutdowns += 1;
        let stag = TaskTag {
            edt: group.edt,
            coords: group.prefix.clone(),
        };
        let gid = Some(group.id + phase as u64);
        self.emit(l, Event::Start, Kind::Shutdown, &stag, gid);
        if phase + 1 < group.phases.len() {
            self.spawn_phase(l, &group, phase + 1);
        } else {
            self.close_group(l, &group);
        }
        self.emit(l, Event::Done, Kind::Shutdown, &stag, gid);
        Ok(())
    }

    fn close_group(&self, l: &mut Local, group: &Group) {
        let forest = &self.prog.forest;
        match &group.parent {
            Parent::Root(i) => match forest.top.get(i + 1) {
                Some(&next) => self.push(
                    l,
                    Task::Startup {
                        edt: next,
                        prefix: Coords::new(),
                        parent: Parent::Root(i + 1),
                    },
                ),
                None => {
                    self.done.store(true, Ordering::SeqCst);
                    self.idle_cv.notify_all();
                }
            },
            Parent::Worker { frame, child } => {
                let siblings = &forest.get(frame.tag.edt).children;
                match siblings.get(child + 1) {
                    Some(&next) => self.push(
                        l,
                        Task::Startup {
                            edt: next,
                            prefix: frame.tag.coords.clone(),
                            parent: Parent::Worker {
                                frame: frame.clone(),
                                child: child + 1,
                            },
                        },
                    ),
                    None => self.complete(l, frame),
                }
            }
        }
    }
}
