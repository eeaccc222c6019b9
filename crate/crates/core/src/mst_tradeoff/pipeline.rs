//! Pipelined collection of inter-fragment edges at the BFS root.
//!
//! After one round of swapping fragment ids, a node at depth `d` is awake in
//! `[up + D - d, up + D - d + budget]`. Each round it forwards to its parent
//! the lightest queued edge that does not close a cycle among fragment ids it
//! already forwarded, but only once every unfinished child has sent something
//! heavier, so each node's stream is increasing. The root picks the
//! inter-fragment MST and streams it back down the tree.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::engine::{bits_of, BitSize, Fault, Wake};
use crate::graph::Port;
use crate::unionfind::LabelUnionFind;

use super::le_bfs::BfsInfo;

/// Default upcast window: `2 * ceil(n / 2^k) + 1`.
pub fn default_budget(n: u64, k: u32) -> u64 {
    let f = n.div_ceil(1u64 << k.min(63));
    2 * f + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CrossEdge {
    pub weight: u64,
    pub a: u64,
    pub b: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PipeMsg {
    Fid(u64),
    Edge(CrossEdge),
    Done,
    Chosen(u64),
    End,
}

impl BitSize for PipeMsg {
    fn bit_size(&self) -> u32 {
        3 + match *self {
            PipeMsg::Fid(f) => bits_of(f),
            PipeMsg::Edge(e) => bits_of(e.weight) + bits_of(e.a) + bits_of(e.b),
            PipeMsg::Chosen(w) => bits_of(w),
            PipeMsg::Done | PipeMsg::End => 0,
        }
    }
}

/// Round layout of the stage, shared by all nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipeTimes {
    /// Round of the fragment-id swap.
    pub swap: u64,
    pub budget: u64,
    pub height: u64,
}

impl PipeTimes {
    pub fn up_start(&self, depth: u64) -> u64 {
        self.swap + 1 + self.height - depth
    }
    pub fn up_end(&self, depth: u64) -> u64 {
        self.up_start(depth) + self.budget
    }
    /// Round the root sends its first chosen edge in.
    pub fn down_base(&self) -> u64 {
        self.up_end(0) + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Swap,
    Up,
    Down,
    Finished,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    bfs: BfsInfo,
    times: PipeTimes,
    fid: u64,
    weights: Vec<u64>,
    step: Step,
    queue: BTreeMap<u64, CrossEdge>,
    forwarded: LabelUnionFind,
    last_from: BTreeMap<Port, u64>,
    done_children: BTreeSet<Port>,
    sent_done: bool,
    outbox: VecDeque<PipeMsg>,
    /// Chosen edge weights seen going down.
    pub chosen: Vec<u64>,
    /// Edges this node forwarded upwards.
    pub forwards: u64,
    /// Edges the root ended up holding (root only).
    pub collected: Vec<CrossEdge>,
    /// Rounds of its window a node used before finishing the upcast.
    pub used: u64,
}

impl Pipeline {
    pub fn new(bfs: BfsInfo, times: PipeTimes, fid: u64, weights: Vec<u64>) -> Self {
        Pipeline {
            bfs,
            times,
            fid,
            weights,
            step: Step::Swap,
            queue: BTreeMap::new(),
            forwarded: LabelUnionFind::default(),
            last_from: BTreeMap::new(),
            done_children: BTreeSet::new(),
            sent_done: false,
            outbox: VecDeque::new(),
            chosen: Vec::new(),
            forwards: 0,
            collected: Vec::new(),
            used: 0,
        }
    }

    pub fn first_wake(&self) -> Wake {
        Wake::At(self.times.swap)
    }

    fn is_root(&self) -> bool {
        self.bfs.parent.is_none()
    }

    fn children_done(&self) -> bool {
        self.done_children.len() == self.bfs.children.len()
    }

    fn prune(&mut self) {
        let fw = &mut self.forwarded;
        self.queue.retain(|_, e| !fw.same(e.a, e.b));
    }

    /// Lightest queued edge, if no unfinished child can still undercut it.
    /// Child streams are strictly increasing, so matching a child's last
    /// edge is enough.
    fn pick(&mut self) -> Option<CrossEdge> {
        self.prune();
        let (&w, &e) = self.queue.iter().next()?;
        let safe = self
            .bfs
            .children
            .iter()
            .filter(|c| !self.done_children.contains(c))
            .all(|c| self.last_from.get(c).is_some_and(|&lw| w <= lw));
        if !safe {
            return None;
        }
        self.queue.remove(&w);
        self.forwarded.union(e.a, e.b);
        Some(e)
    }

    /// Inter-fragment MST over everything the root holds.
    fn choose(&mut self) {
        let mut uf = LabelUnionFind::default();
        self.collected = self.queue.values().copied().collect();
        for e in &self.collected {
            if uf.union(e.a, e.b) {
                self.outbox.push_back(PipeMsg::Chosen(e.weight));
                self.chosen.push(e.weight);
            }
        }
        self.outbox.push_back(PipeMsg::End);
    }

    pub fn send(&mut self, round: u64) -> Vec<(Port, PipeMsg)> {
        match self.step {
            Step::Swap => (0..self.weights.len()).map(|p| (p, PipeMsg::Fid(self.fid))).collect(),
            Step::Up => {
                let (Some(parent), false) = (self.bfs.parent, self.sent_done) else { return Vec::new() };
                if round <= self.times.up_start(self.bfs.depth) {
                    return Vec::new();
                }
                if let Some(e) = self.pick() {
                    self.forwards += 1;
                    return vec![(parent, PipeMsg::Edge(e))];
                }
                if self.queue.is_empty() && self.children_done() {
                    self.sent_done = true;
                    return vec![(parent, PipeMsg::Done)];
                }
                Vec::new()
            }
            Step::Down => match self.outbox.pop_front() {
                Some(m) => {
                    if m == PipeMsg::End {
                        self.step = Step::Finished;
                    }
                    self.bfs.children.iter().map(|&c| (c, m.clone())).collect()
                }
                None => Vec::new(),
            },
            Step::Finished => Vec::new(),
        }
    }

    pub fn receive(&mut self, round: u64, msgs: Vec<(Port, PipeMsg)>) -> Result<Wake, Fault> {
        match self.step {
            Step::Swap => {
                for (p, m) in msgs {
                    if let PipeMsg::Fid(f) = m {
                        if f != self.fid {
                            let (a, b) = (self.fid.min(f), self.fid.max(f));
                            let weight = self.weights[p];
                            self.queue.insert(weight, CrossEdge { weight, a, b });
                        }
                    }
                }
                self.step = Step::Up;
                Ok(Wake::At(self.times.up_start(self.bfs.depth)))
            }
            Step::Up => {
                for (p, m) in msgs {
                    match m {
                        PipeMsg::Edge(e) if self.bfs.children.contains(&p) => {
                            self.last_from.insert(p, e.weight);
                            if !self.forwarded.same(e.a, e.b) {
                                self.queue.insert(e.weight, e);
                            }
                        }
                        PipeMsg::Done if self.bfs.children.contains(&p) => {
                            self.done_children.insert(p);
                        }
                        _ => {}
                    }
                }
                let finished = if self.is_root() { self.children_done() } else { self.sent_done };
                if finished {
                    self.used = round - self.times.up_start(self.bfs.depth);
                    self.step = Step::Down;
                    if self.is_root() {
                        self.choose();
                        return Ok(self.wake_down(round, self.times.down_base()));
                    }
                    return Ok(self.wake_down(round, self.times.down_base() + self.bfs.depth - 1));
                }
                if round >= self.times.up_end(self.bfs.depth) {
                    return Err(Fault(format!(
                        "pipeline budget {} exceeded at depth {}",
                        self.times.budget, self.bfs.depth
                    )));
                }
                Ok(Wake::At(round + 1))
            }
            Step::Down => {
                for (p, m) in msgs {
                    if Some(p) != self.bfs.parent {
                        continue;
                    }
                    if let PipeMsg::Chosen(w) = m {
                        self.chosen.push(w);
                    }
                    if m == PipeMsg::End && self.bfs.children.is_empty() {
                        self.step = Step::Finished;
                    }
                    self.outbox.push_back(m);
                }
                Ok(self.next_down(round))
            }
            Step::Finished => Ok(Wake::Halt),
        }
    }

    fn wake_down(&self, now: u64, at: u64) -> Wake {
        Wake::At(at.max(now + 1))
    }

    fn next_down(&self, round: u64) -> Wake {
        if self.step == Step::Finished {
            Wake::Halt
        } else {
            Wake::At(round + 1)
        }
    }

    /// Ports of this node whose edge the root chose.
    pub fn chosen_ports(&self) -> Vec<Port> {
        self.chosen.iter().filter_map(|w| self.weights.iter().position(|x| x == w)).collect()
    }

    /// True once the stage is over at this node.
    pub fn finished(&self) -> bool {
        self.step == Step::Finished
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_formula() {
        assert_eq!(default_budget(1024, 5), 65);
        assert_eq!(default_budget(1024, 10), 3);
        assert_eq!(default_budget(100, 3), 27);
    }
}
