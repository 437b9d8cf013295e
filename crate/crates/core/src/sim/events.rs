use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Resource {
    Npu,
    Nand,
    Io,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SimEventKind {
    PageReadDone,
    CorrectionDone,
    NandStageDone,
    DramBurstDone,
    NpuChunkDone,
    IoTransferDone,
    TokenDone,
    TaskReady,
}

impl SimEventKind {
    /// Tie-break among events with equal timestamps: completions release
    /// resources before newly ready work is dispatched.
    fn priority(self) -> u8 {
        match self {
            SimEventKind::PageReadDone => 0,
            SimEventKind::CorrectionDone => 1,
            SimEventKind::NandStageDone => 2,
            SimEventKind::DramBurstDone => 3,
            SimEventKind::NpuChunkDone => 4,
            SimEventKind::IoTransferDone => 5,
            SimEventKind::TokenDone => 6,
            SimEventKind::TaskReady => 7,
        }
    }

    fn completion(r: Resource) -> Self {
        match r {
            Resource::Npu => SimEventKind::NpuChunkDone,
            Resource::Nand => SimEventKind::NandStageDone,
            Resource::Io => SimEventKind::IoTransferDone,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimEvent {
    pub timestamp_ps: u64,
    pub kind: SimEventKind,
    pub pass: usize,
    pub layer: usize,
    pub task: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Task<W> {
    pub resource: Resource,
    pub layer: usize,
    pub deps: Vec<usize>,
    pub work: W,
}

/// Timing of one task once it is dispatched.
pub(crate) struct Dispatch {
    pub duration_ps: u64,
    /// Informational events at offsets from the start (DRAM bursts, corrections).
    pub marks: Vec<(u64, SimEventKind)>,
}

pub(crate) trait Executor<W> {
    fn dispatch(&mut self, index: usize, task: &Task<W>, start_ps: u64) -> Dispatch;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Body {
    Done(usize),
    Mark(usize),
    Ready(usize),
}

/// Runs a dependency graph on single-server resources. Returns the time the
/// last task finishes.
pub(crate) fn run_graph<W, E: Executor<W>>(
    tasks: &[Task<W>],
    start_ps: u64,
    pass: usize,
    exec: &mut E,
    mut log: Option<&mut Vec<SimEvent>>,
) -> u64 {
    let mut heap: BinaryHeap<Reverse<(u64, u8, u64, Body, SimEventKind)>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push = |heap: &mut BinaryHeap<_>, t: u64, kind: SimEventKind, body: Body| {
        heap.push(Reverse((t, kind.priority(), seq, body, kind)));
        seq += 1;
    };
    let mut waiting: Vec<usize> = tasks.iter().map(|t| t.deps.len()).collect();
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); tasks.len()];
    for (i, t) in tasks.iter().enumerate() {
        for &d in &t.deps {
            dependents[d].push(i);
        }
    }
    for (i, &w) in waiting.iter().enumerate() {
        if w == 0 {
            push(&mut heap, start_ps, SimEventKind::TaskReady, Body::Ready(i));
        }
    }
    let mut busy = [false; 3];
    let mut queues: [VecDeque<usize>; 3] = Default::default();
    let slot = |r: Resource| r as usize;
    let mut end = start_ps;

    while let Some(Reverse((now, _, _, body, kind))) = heap.pop() {
        let task_idx = match body {
            Body::Done(i) | Body::Mark(i) | Body::Ready(i) => i,
        };
        if let Some(log) = log.as_deref_mut() {
            log.push(SimEvent {
                timestamp_ps: now,
                kind,
                pass,
                layer: tasks[task_idx].layer,
                task: task_idx,
            });
        }
        let mut to_start: Option<usize> = None;
        match body {
            Body::Mark(_) => {}
            Body::Ready(i) => {
                let r = slot(tasks[i].resource);
                if busy[r] {
                    queues[r].push_back(i);
                } else {
                    to_start = Some(i);
                }
            }
            Body::Done(i) => {
                end = end.max(now);
                let r = slot(tasks[i].resource);
                busy[r] = false;
                for &j in &dependents[i] {
                    waiting[j] -= 1;
                    if waiting[j] == 0 {
                        push(&mut heap, now, SimEventKind::TaskReady, Body::Ready(j));
                    }
                }
                to_start = queues[r].pop_front();
            }
        }
        if let Some(i) = to_start {
            let t = &tasks[i];
            busy[slot(t.resource)] = true;
            let d = exec.dispatch(i, t, now);
            for (off, k) in d.marks {
                push(&mut heap, now + off, k, Body::Mark(i));
            }
            push(&mut heap, now + d.duration_ps, SimEventKind::completion(t.resource), Body::Done(i));
        }
    }
    end
}
