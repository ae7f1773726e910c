//! Completion records keyed by task tag, and decrement-to-zero group counters.

use std::sync::atomic::{AtomicUsize, Ordering};

use dashmap::mapref::entry::Entry;
use dashmap::DashMap;

use crate::dependence::TaskTag;

#[derive(Debug)]
enum Record<W> {
    Waiting(Vec<W>),
    Done,
}

#[derive(Debug, PartialEq, Eq)]
pub enum Lookup {
    Done,
    Registered,
}

#[derive(Debug, PartialEq, Eq)]
pub enum PutOutcome<W> {
    /// First put for the tag; these waiters must be woken.
    First(Vec<W>),
    Duplicate,
}

/// Tag → completion record. A record only ever moves from absent to waiting
/// to done; every transition happens under the map's per-shard lock, so a
/// put can never slip between a failed probe and the waiter registration.
#[derive(Debug)]
pub struct CompletionTable<W> {
    map: DashMap<TaskTag, Record<W>>,
}

impl<W> Default for CompletionTable<W> {
    fn default() -> Self {
        CompletionTable { map: DashMap::new() }
    }
}

impl<W> CompletionTable<W> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_done(&self, tag: &TaskTag) -> bool {
        matches!(self.map.get(tag).as_deref(), Some(Record::Done))
    }

    /// Returns `Done` if `tag` has been put; otherwise builds a waiter with
    /// `make` (still under the tag's lock) and parks it on the record.
    pub fn get_or_wait(&self, tag: &TaskTag, make: impl FnOnce() -> W) -> Lookup {
        if self.is_done(tag) {
            return Lookup::Done;
        }
        match self.map.entry(tag.clone()) {
            Entry::Occupied(mut o) => match o.get_mut() {
                Record::Done => Lookup::Done,
                Record::Waiting(ws) => {
                    ws.push(make());
                    Lookup::Registered
                }
            },
            Entry::Vacant(v) => {
                v.insert(Record::Waiting(vec![make()]));
                Lookup::Registered
            }
        }
    }

    pub fn put(&self, tag: TaskTag) -> PutOutcome<W> {
        match self.map.entry(tag) {
            Entry::Occupied(mut o) => match std::mem::replace(o.get_mut(), Record::Done) {
                Record::Done => PutOutcome::Duplicate,
                Record::Waiting(ws) => PutOutcome::First(ws),
            },
            Entry::Vacant(v) => {
                v.insert(Record::Done);
                PutOutcome::First(Vec::new())
            }
        }
    }

    pub fn done_count(&self) -> usize {
        self.map.iter().filter(|r| matches!(r.value(), Record::Done)).count()
    }

    /// Tags of every parked waiter, as reported by `tag_of`.
    pub fn blocked(&self, tag_of: impl Fn(&W) -> TaskTag) -> Vec<TaskTag> {
        let mut out: Vec<TaskTag> = self
            .map
            .iter()
            .filter_map(|r| match r.value() {
                Record::Waiting(ws) => Some(ws.iter().map(&tag_of).collect::<Vec<_>>()),
                Record::Done => None,
            })
            .flatten()
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

/// Counter released by the last of a group's workers.
#[derive(Debug)]
pub struct CountingDep {
    count: AtomicUsize,
}

impl CountingDep {
    pub fn new(count: usize) -> CountingDep {
        CountingDep {
            count: AtomicUsize::new(count),
        }
    }

    pub fn remaining(&self) -> usize {
        self.count.load(Ordering::Acquire)
    }

    /// Decrements; true exactly once, for the decrement that reaches zero.
    /// Panics on a decrement past zero, which would mean a worker signaled twice.
    pub fn satisfy(&self) -> bool {
        let prev = self
            .count
            .fetch_update(Ordering::AcqRel, Ordering::Acquire, |c| c.checked_sub(1))
            .expect("counting dependence satisfied more times than it has workers");
        prev == 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn put_get_transitions() {
        let t: CompletionTable<u32> = CompletionTable::new();
        let a = TaskTag::new(0, &[1]);
        assert_eq!(t.get_or_wait(&a, || 7), Lookup::Registered);
        assert_eq!(t.get_or_wait(&a, || 8), Lookup::Registered);
        assert_eq!(t.blocked(|&w| TaskTag::new(9, &[w as i64])).len(), 2);
        assert_eq!(t.put(a.clone()), PutOutcome::First(vec![7, 8]));
        assert_eq!(t.put(a.clone()), PutOutcome::Duplicate);
        assert_eq!(t.get_or_wait(&a, || 9), Lookup::Done);
        assert_eq!(t.done_count(), 1);
        assert!(t.blocked(|_| a.clone()).is_empty());
    }

    #[test]
    fn counting_dep_fires_once_under_contention() {
        let dep = Arc::new(CountingDep::new(4000));
        let fired = Arc::new(AtomicUsize::new(0));
        std::thread::scope(|s| {
            for _ in 0..4 {
                let (dep, fired) = (dep.clone(), fired.clone());
                s.spawn(move || {
                    for _ in 0..1000 {
                        if dep.satisfy() {
                            fired.fetch_add(1, Ordering::SeqCst);
                        }
                    }
                });
            }
        });
        assert_eq!(fired.load(Ordering::SeqCst), 1);
        assert_eq!(dep.remaining(), 0);
    }

    #[test]
    #[should_panic]
    fn counting_dep_never_underflows() {
        let d = CountingDep::new(1);
        assert!(d.satisfy());
        d.satisfy();
    }

    #[test]
    fn racing_puts_and_waits_lose_nobody() {
        for _ in 0..50 {
            let t: Arc<CompletionTable<usize>> = Arc::new(CompletionTable::new());
            let tag = TaskTag::new(0, &[0]);
            let woken = std::thread::scope(|s| {
                let t2 = t.clone();
                let tag2 = tag.clone();
                let waiter = s.spawn(move || (0..100).filter(|&i| t2.get_or_wait(&tag2, || i) == Lookup::Registered).count());
                let putter = s.spawn(|| match t.put(tag.clone()) {
                    PutOutcome::First(ws) => ws.len(),
                    PutOutcome::Duplicate => unreachable!(),
                });
                let registered = waiter.join().unwrap();
                let woken = putter.join().unwrap();
                (registered, woken)
            });
            assert_eq!(woken.0, woken.1);
        }
    }
}
