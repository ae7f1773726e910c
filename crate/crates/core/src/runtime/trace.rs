//! Task event trace.
//!
//! One event per line:
//!
//! ```text
//! <epoch> <thread> <event> <kind> <edt>:(<coords>) g<group>
//! ```
//!
//! `epoch` is a global sequence number (strictly increasing over the run),
//! `event` is one of `spawn start suspend resume done`, `kind` one of
//! `startup worker shutdown`, and `group` names the counting dependence a
//! worker signals or a shutdown waits on (`g-` for startups).

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::dependence::TaskTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Event {
    Spawn,
    Start,
    Suspend,
    Resume,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Startup,
    Worker,
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub epoch: u64,
    pub thread: usize,
    pub event: Event,
    pub kind: Kind,
    pub tag: TaskTag,
    pub group: Option<u64>,
}

impl Event {
    fn as_str(self) -> &'static str {
        match self {
            Event::Spawn => "spawn",
            Event::Start => "start",
            Event::Suspend => "suspend",
            Event::Resume => "resume",
            Event::Done => "done",
        }
    }
}

impl Kind {
    fn as_str(self) -> &'static str {
        match self {
            Kind::Startup => "startup",
            Kind::Worker => "worker",
            Kind::Shutdown => "shutdown",
        }
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {} {} ", self.epoch, self.thread, self.event.as_str(), self.kind.as_str(), self.tag)?;
        match self.group {
            Some(g) => write!(f, "g{g}"),
            None => f.write_str("g-"),
        }
    }
}

impl FromStr for TraceEvent {
    type Err = String;

    fn from_str(line: &str) -> Result<TraceEvent, String> {
        let f: Vec<&str> = line.split_whitespace().collect();
        let [epoch, thread, event, kind, tag, group] = f[..] else {
            return Err(format!("expected 6 fields, found {}", f.len()));
        };
        let event = match event {
            "spawn" => Event::Spawn,
            "start" => Event::Start,
            "suspend" => Event::Suspend,
            "resume" => Event::Resume,
            "done" => Event::Done,
            other => return Err(format!("unknown event `{other}`")),
        };
        let kind = match kind {
            "startup" => Kind::Startup,
            "worker" => Kind::Worker,
            "shutdown" => Kind::Shutdown,
            other => return Err(format!("unknown task kind `{other}`")),
        };
        let group = match group.strip_prefix('g').ok_or("group must start with `g`")? {
            "-" => None,
            g => Some(g.parse().map_err(|_| format!("bad group `{g}`"))?),
        };
        Ok(TraceEvent {
            epoch: epoch.parse().map_err(|_| format!("bad epoch `{epoch}`"))?,
            thread: thread.parse().map_err(|_| format!("bad thread `{thread}`"))?,
            event,
            kind,
            tag: tag.parse()?,
            group,
        })
    }
}

pub fn parse(text: &str) -> Result<Vec<TraceEvent>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| l.parse().map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}

/// Checks that no shutdown starts before every worker of its group is done,
/// and that each spawned worker signals exactly once.
pub fn check_async_finish(events: &[TraceEvent]) -> Result<(), String> {
    #[derive(Default)]
    struct G {
        spawned: usize,
        done: usize,
        last_done: u64,
        shutdown: Option<u64>,
    }
    let mut groups: HashMap<u64, G> = HashMap::new();
    let mut done_tags: HashMap<&TaskTag, usize> = HashMap::new();
    for e in events {
        let Some(g) = e.group else { continue };
        let entry = groups.entry(g).or_default();
        match (e.kind, e.event) {
            (Kind::Worker, Event::Spawn) => entry.spawned += 1,
            (Kind::Worker, Event::Done) => {
                entry.done += 1;
                entry.last_done = entry.last_done.max(e.epoch);
                *done_tags.entry(&e.tag).or_default() += 1;
            }
            (Kind::Shutdown, Event::Start) => {
                if entry.shutdown.replace(e.epoch).is_some() {
                    return Err(format!("group {g} shut down twice"));
                }
            }
            _ => {}
        }
    }
    if let Some((t, n)) = done_tags.iter().find(|(_, &n)| n != 1) {
        return Err(format!("worker {t} signaled {n} times"));
    }
    for (g, s) in &groups {
        let Some(at) = s.shutdown else {
            if s.spawned > 0 {
                return Err(format!("group {g} never shut down"));
            }
            continue;
        };
        if s.done != s.spawned {
            return Err(format!("group {g}: {} of {} workers done at shutdown", s.done, s.spawned));
        }
        if s.done > 0 && s.last_done > at {
            return Err(format!("group {g}: worker finished at epoch {} after shutdown at {at}", s.last_done));
        }
    }
    Ok(())
}
