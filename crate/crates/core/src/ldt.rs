//! Fragments as labeled distance trees, the block transmission schedule and
//! a driver that runs fragment-wide primitives on top of the engine.
//!
//! A block spans `2s+1` rounds. Inside a block a node at level `i` uses at
//! most five rounds: it hears its parent at offset `i`, talks to its children
//! at `i+1`, talks across fragment boundaries at `s+1`, hears its children at
//! `2s-i+1` and talks to its parent at `2s-i+2`. One block can therefore carry
//! a broadcast, a boundary exchange and a convergecast, in that order.

use std::collections::BTreeSet;

use crate::engine::{bits_of, BitSize, Delivery, Fault, Protocol, Wake};
use crate::graph::{Port, WeightedGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    DownReceive,
    DownSend,
    Side,
    UpReceive,
    UpSend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleSlot {
    pub round: u64,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("level {level} exceeds block size {s}")]
pub struct LevelTooDeep {
    pub level: u64,
    pub s: u64,
}

/// The five (root: three) slots of a node in the block starting at `start`.
pub fn transmission_schedule(
    level: u64,
    is_root: bool,
    s: u64,
    start: u64,
) -> Result<Vec<ScheduleSlot>, LevelTooDeep> {
    if level > s {
        return Err(LevelTooDeep { level, s });
    }
    let base = start - 1;
    let slots: Vec<(u64, Role)> = if is_root {
        vec![(1, Role::DownSend), (s + 1, Role::Side), (2 * s + 1, Role::UpReceive)]
    } else {
        let i = level;
        vec![
            (i, Role::DownReceive),
            (i + 1, Role::DownSend),
            (s + 1, Role::Side),
            (2 * s - i + 1, Role::UpReceive),
            (2 * s - i + 2, Role::UpSend),
        ]
    };
    Ok(slots.into_iter().map(|(o, role)| ScheduleSlot { round: base + o, role }).collect())
}

pub fn block_len(s: u64) -> u64 {
    2 * s + 1
}

/// A node's membership in its fragment tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdtState {
    pub id: u64,
    pub fragment_id: u64,
    pub level: u64,
    pub parent: Option<Port>,
    pub children: BTreeSet<Port>,
    pub new_fragment_id: Option<u64>,
    pub new_level: Option<u64>,
    /// Set when the node lies on the reorientation path of a merge.
    pub new_parent: Option<Port>,
    pub new_children: Option<BTreeSet<Port>>,
    /// Children gained from fragments merging into this one.
    pub adopted: Vec<Port>,
}

impl LdtState {
    pub fn singleton(id: u64) -> Self {
        LdtState {
            id,
            fragment_id: id,
            level: 0,
            parent: None,
            children: BTreeSet::new(),
            new_fragment_id: None,
            new_level: None,
            new_parent: None,
            new_children: None,
            adopted: Vec::new(),
        }
    }

    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }

    pub fn tree_ports(&self) -> impl Iterator<Item = Port> + '_ {
        self.parent.iter().copied().chain(self.children.iter().copied())
    }

    /// Merge, upward pass, at the tails endpoint of the merging edge `port`
    /// whose other end sits at `head_level` in fragment `head_fid`.
    /// Returns the value to pass to the parent.
    pub fn merge_at_endpoint(&mut self, port: Port, head_fid: u64, head_level: u64) -> MergeUp {
        let lvl = head_level + 1;
        self.new_level = Some(lvl);
        self.new_fragment_id = Some(head_fid);
        self.new_parent = Some(port);
        let mut ch = self.children.clone();
        ch.extend(self.parent);
        self.new_children = Some(ch);
        MergeUp { new_level: lvl, new_fragment_id: head_fid }
    }

    /// Merge, upward pass, at a node whose child `child` is on the path.
    pub fn merge_from_child(&mut self, child: Port, up: MergeUp) -> MergeUp {
        let lvl = up.new_level + 1;
        self.new_level = Some(lvl);
        self.new_fragment_id = Some(up.new_fragment_id);
        self.new_parent = Some(child);
        let mut ch = self.children.clone();
        ch.remove(&child);
        ch.extend(self.parent);
        self.new_children = Some(ch);
        MergeUp { new_level: lvl, new_fragment_id: up.new_fragment_id }
    }

    /// Merge, downward pass. Nodes already relabelled by the upward pass keep
    /// their values; the rest hang below their old parent. Returns the value
    /// for the old children.
    pub fn merge_from_parent(&mut self, from_parent: Option<MergeUp>) -> Option<MergeUp> {
        if let Some(lvl) = self.new_level {
            return Some(MergeUp { new_level: lvl, new_fragment_id: self.new_fragment_id? });
        }
        let p = from_parent?;
        let lvl = p.new_level + 1;
        self.new_level = Some(lvl);
        self.new_fragment_id = Some(p.new_fragment_id);
        Some(MergeUp { new_level: lvl, new_fragment_id: p.new_fragment_id })
    }

    pub fn adopt(&mut self, port: Port) {
        self.adopted.push(port);
    }

    /// Commit the temporaries and clear them.
    pub fn apply_pending(&mut self) {
        if let Some(f) = self.new_fragment_id.take() {
            self.fragment_id = f;
        }
        if let Some(l) = self.new_level.take() {
            self.level = l;
        }
        if let Some(p) = self.new_parent.take() {
            self.parent = Some(p);
        }
        if let Some(ch) = self.new_children.take() {
            self.children = ch;
        }
        for p in self.adopted.drain(..) {
            self.children.insert(p);
        }
    }

    pub fn has_pending(&self) -> bool {
        self.new_fragment_id.is_some()
            || self.new_level.is_some()
            || self.new_parent.is_some()
            || self.new_children.is_some()
            || !self.adopted.is_empty()
    }
}

/// Payload of both merge passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MergeUp {
    pub new_level: u64,
    pub new_fragment_id: u64,
}

impl BitSize for MergeUp {
    fn bit_size(&self) -> u32 {
        bits_of(self.new_level) + bits_of(self.new_fragment_id)
    }
}

/// Tree states from a parent array over node indices. Levels and fragment
/// ids are derived from the roots.
pub fn ldt_from_parents(g: &WeightedGraph, parent: &[Option<usize>]) -> Result<Vec<LdtState>, String> {
    let n = g.n();
    let mut st: Vec<LdtState> = (0..n).map(|v| LdtState::singleton(g.id(v))).collect();
    for v in 0..n {
        if let Some(p) = parent[v] {
            let port = g.port_to(v, p).ok_or(format!("{v} and {p} are not adjacent"))?;
            st[v].parent = Some(port);
            st[p].children.insert(g.ports(v)[port].rev);
        }
    }
    for v in 0..n {
        let (mut u, mut depth) = (v, 0u64);
        while let Some(p) = parent[u] {
            u = p;
            depth += 1;
            if depth > n as u64 {
                return Err(format!("parent pointers from {v} cycle"));
            }
        }
        st[v].level = depth;
        st[v].fragment_id = g.id(u);
    }
    Ok(st)
}

/// Check every tree invariant over all nodes of `g`.
pub fn check_ldt(g: &WeightedGraph, states: &[&LdtState]) -> Result<(), String> {
    let n = g.n();
    if states.len() != n {
        return Err(format!("{} states for {n} nodes", states.len()));
    }
    for v in 0..n {
        let s = states[v];
        if s.id != g.id(v) {
            return Err(format!("node {v}: id {} but graph says {}", s.id, g.id(v)));
        }
        if s.has_pending() {
            return Err(format!("node {v}: temporaries not cleared"));
        }
        match s.parent {
            None => {
                if s.level != 0 {
                    return Err(format!("root {v} has level {}", s.level));
                }
                if s.fragment_id != s.id {
                    return Err(format!("root {v}: fragment id {} != own id {}", s.fragment_id, s.id));
                }
            }
            Some(p) => {
                let link = g.ports(v).get(p).ok_or(format!("node {v}: bad parent port {p}"))?;
                let up = states[link.to];
                if !up.children.contains(&link.rev) {
                    return Err(format!("node {v}: parent {} does not list it as child", link.to));
                }
                if s.level != up.level + 1 {
                    return Err(format!("node {v}: level {} but parent level {}", s.level, up.level));
                }
                if s.fragment_id != up.fragment_id {
                    return Err(format!("node {v}: fragment id differs from parent"));
                }
            }
        }
        for &c in &s.children {
            let link = g.ports(v).get(c).ok_or(format!("node {v}: bad child port {c}"))?;
            if states[link.to].parent != Some(link.rev) {
                return Err(format!("node {v}: child {} points elsewhere", link.to));
            }
        }
    }
    // Levels increase strictly along parent pointers, so the pointers are
    // acyclic and every node reaches the root whose id it carries.
    Ok(())
}

/// Which parts of a block a node takes part in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockPlan {
    pub s: u64,
    pub start: u64,
    pub down: bool,
    pub side: bool,
    pub up: bool,
}

impl BlockPlan {
    pub fn new(s: u64, start: u64) -> Self {
        BlockPlan { s, start, down: false, side: false, up: false }
    }
    pub fn down(mut self) -> Self {
        self.down = true;
        self
    }
    pub fn side(mut self) -> Self {
        self.side = true;
        self
    }
    pub fn up(mut self) -> Self {
        self.up = true;
        self
    }
    pub fn end(&self) -> u64 {
        self.start + block_len(self.s) - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NextBlock {
    Block(BlockPlan),
    /// Terminate now.
    Halt,
    /// Terminate at the given round without waking again.
    HaltAt(u64),
    /// Hand control back to an enclosing protocol.
    Yield,
}

/// A message received in a side exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideMsg<M> {
    pub port: Port,
    /// Fragment of the sender at the start of the block.
    pub fragment_id: u64,
    pub body: M,
}

/// A per-node program expressed in terms of block parts. Hooks run in the
/// order `down`, `side_send`/`side_recv`, `up`, `block_end`.
pub trait LdtProgram {
    type Msg: Clone + BitSize + std::fmt::Debug;

    fn ldt(&self) -> &LdtState;

    /// The next block this node takes part in; `now` is the current round
    /// (0 before the first block).
    fn next_block(&mut self, now: u64) -> Result<NextBlock, Fault>;

    /// Called when the value from the parent is available (roots: at block
    /// start with `None`). Returns messages for the children.
    fn down(&mut self, _from_parent: Option<Self::Msg>) -> Result<Vec<(Port, Self::Msg)>, Fault> {
        Ok(Vec::new())
    }

    fn side_send(&mut self) -> Vec<(Port, Self::Msg)> {
        Vec::new()
    }

    fn side_recv(&mut self, _msgs: Vec<SideMsg<Self::Msg>>) -> Result<(), Fault> {
        Ok(())
    }

    /// Called with the children's values. The return value goes to the
    /// parent; roots hold the aggregate themselves.
    fn up(&mut self, _from_children: Vec<(Port, Self::Msg)>) -> Result<Option<Self::Msg>, Fault> {
        Ok(None)
    }

    fn block_end(&mut self) -> Result<(), Fault> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Down = 0,
    Side = 1,
    Up = 2,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope<M> {
    part: Part,
    fragment_id: u64,
    body: M,
}

impl<M: BitSize> BitSize for Envelope<M> {
    fn bit_size(&self) -> u32 {
        2 + bits_of(self.fragment_id) + self.body.bit_size()
    }
}

#[derive(Debug)]
struct Active<M> {
    fragment_id: u64,
    parent: Option<Port>,
    children: BTreeSet<Port>,
    slots: Vec<ScheduleSlot>,
    next: usize,
    down_out: Vec<(Port, M)>,
    up_out: Option<M>,
    up_pending: bool,
}

/// Runs an [`LdtProgram`] as an engine [`Protocol`].
#[derive(Debug)]
pub struct LdtNode<P: LdtProgram> {
    pub program: P,
    active: Option<Active<P::Msg>>,
    yielded: bool,
    fault: Option<Fault>,
}

impl<P: LdtProgram> LdtNode<P> {
    pub fn new(program: P) -> Self {
        LdtNode { program, active: None, yielded: false, fault: None }
    }

    /// True once the program returned [`NextBlock::Yield`].
    pub fn yielded(&self) -> bool {
        self.yielded
    }

    /// Plan blocks from round `now` on until one with an awake slot exists.
    pub fn start(&mut self, now: u64) -> Result<Wake, Fault> {
        self.yielded = false;
        self.advance(now)
    }

    fn advance(&mut self, now: u64) -> Result<Wake, Fault> {
        loop {
            if let Some(a) = self.active.as_mut() {
                if a.next < a.slots.len() {
                    return Ok(Wake::At(a.slots[a.next].round));
                }
                if a.up_pending {
                    a.up_pending = false;
                    self.program.up(Vec::new())?;
                }
                self.active = None;
                self.program.block_end()?;
            }
            match self.program.next_block(now)? {
                NextBlock::Halt => return Ok(Wake::Halt),
                NextBlock::HaltAt(r) => return Ok(Wake::HaltAt(r)),
                NextBlock::Yield => {
                    self.yielded = true;
                    return Ok(Wake::Halt);
                }
                NextBlock::Block(plan) => {
                    if plan.start <= now {
                        return Err(Fault(format!("block at {} planned in round {now}", plan.start)));
                    }
                    self.plan(plan)?;
                }
            }
        }
    }

    fn plan(&mut self, plan: BlockPlan) -> Result<(), Fault> {
        let st = self.program.ldt();
        let root = st.is_root();
        let has_children = !st.children.is_empty();
        let tree = plan.down || plan.up;
        let level = if tree { st.level } else { 0 };
        let sched = transmission_schedule(level, root, plan.s, plan.start)
            .map_err(|e| Fault(format!("{e} at node {}", st.id)))?;
        let slots: Vec<ScheduleSlot> = sched
            .into_iter()
            .filter(|sl| match sl.role {
                Role::DownReceive => plan.down && !root,
                Role::DownSend => plan.down && has_children,
                Role::Side => plan.side,
                Role::UpReceive => plan.up && has_children,
                Role::UpSend => plan.up && !root,
            })
            .collect();
        let mut a = Active {
            fragment_id: st.fragment_id,
            parent: st.parent,
            children: st.children.clone(),
            slots,
            next: 0,
            down_out: Vec::new(),
            up_out: None,
            up_pending: plan.up && root && !has_children,
        };
        if plan.down && root {
            a.down_out = self.program.down(None)?;
        }
        self.active = Some(a);
        Ok(())
    }

    fn current_role(&self, round: u64) -> Option<Role> {
        let a = self.active.as_ref()?;
        let sl = a.slots.get(a.next)?;
        (sl.round == round).then_some(sl.role)
    }
}

impl<P: LdtProgram> Protocol for LdtNode<P> {
    type Msg = Envelope<P::Msg>;

    fn init(&mut self) -> Result<Wake, Fault> {
        self.start(0)
    }

    fn send(&mut self, round: u64) -> Vec<(Port, Self::Msg)> {
        let Some(role) = self.current_role(round) else { return Vec::new() };
        let a = self.active.as_mut().expect("active block");
        let fid = a.fragment_id;
        let wrap = |part: Part, v: Vec<(Port, P::Msg)>| {
            v.into_iter()
                .map(|(p, body)| (p, Envelope { part, fragment_id: fid, body }))
                .collect::<Vec<_>>()
        };
        match role {
            Role::DownSend => wrap(Part::Down, std::mem::take(&mut a.down_out)),
            Role::Side => wrap(Part::Side, self.program.side_send()),
            Role::UpSend => {
                let parent = a.parent.expect("non-root sends up");
                let msg = if a.children.is_empty() {
                    // Leaves compute their value in the send step.
                    match self.program.up(Vec::new()) {
                        Ok(m) => m,
                        Err(f) => {
                            self.fault = Some(f);
                            None
                        }
                    }
                } else {
                    a.up_out.take()
                };
                wrap(Part::Up, msg.into_iter().map(|m| (parent, m)).collect())
            }
            Role::DownReceive | Role::UpReceive => Vec::new(),
        }
    }

    fn receive(&mut self, round: u64, inbox: Vec<Delivery<Self::Msg>>) -> Result<Wake, Fault> {
        if let Some(f) = self.fault.take() {
            return Err(f);
        }
        let Some(role) = self.current_role(round) else {
            return Err(Fault(format!("woken in round {round} without a slot")));
        };
        let a = self.active.as_mut().expect("active block");
        let fid = a.fragment_id;
        match role {
            Role::DownReceive => {
                let parent = a.parent;
                let msg = inbox
                    .into_iter()
                    .find(|d| d.msg.part == Part::Down && d.msg.fragment_id == fid && Some(d.port) == parent)
                    .map(|d| d.msg.body);
                let out = self.program.down(msg)?;
                a.down_out = out;
            }
            Role::Side => {
                let msgs = inbox
                    .into_iter()
                    .filter(|d| d.msg.part == Part::Side)
                    .map(|d| SideMsg { port: d.port, fragment_id: d.msg.fragment_id, body: d.msg.body })
                    .collect();
                self.program.side_recv(msgs)?;
            }
            Role::UpReceive => {
                let from: Vec<(Port, P::Msg)> = inbox
                    .into_iter()
                    .filter(|d| d.msg.part == Part::Up && d.msg.fragment_id == fid && a.children.contains(&d.port))
                    .map(|d| (d.port, d.msg.body))
                    .collect();
                a.up_out = self.program.up(from)?;
            }
            Role::DownSend | Role::UpSend => {}
        }
        let a = self.active.as_mut().expect("active block");
        a.next += 1;
        self.advance(round)
    }
}

/// One entry of a fragment-neighbourhood listing: a node of fragment
/// `fragment_id` whose edge of weight `weight` leads into fragment
/// `nbr_fragment_id` (colored `color`, `-1` when unknown).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NbrTuple {
    pub node_id: u64,
    pub fragment_id: u64,
    pub weight: u64,
    pub nbr_fragment_id: u64,
    pub color: i8,
}

impl BitSize for NbrTuple {
    fn bit_size(&self) -> u32 {
        bits_of(self.node_id)
            + bits_of(self.fragment_id)
            + bits_of(self.weight)
            + bits_of(self.nbr_fragment_id)
            + 3
    }
}

/// Concatenate tuple lists from a subtree, normalized by node id then weight.
pub fn concat_tuples(mut own: Vec<NbrTuple>, from_children: impl IntoIterator<Item = Vec<NbrTuple>>) -> Vec<NbrTuple> {
    for c in from_children {
        own.extend(c);
    }
    own.sort();
    own.dedup();
    own
}
