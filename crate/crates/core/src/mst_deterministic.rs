//! Deterministic MST with `O(log n)` awake rounds per node.
//!
//! A phase runs on blocks of `2n+1` rounds:
//!
//! | block | parts | purpose |
//! |---|---|---|
//! | 0 | down, side, up | find; refresh neighbour fragment ids; lightest outgoing edge |
//! | 1 | down, side, up | MOE broadcast; tell targets; count incoming MOEs per subtree |
//! | 2 | down, side, up | hand out at most three tokens; reply to origins; one-hop tuples |
//! | 3 | down, side, up | one-hop broadcast; swap across fragment-graph edges; two-hop tuples |
//! | 4 | down | two-hop broadcast |
//! | 5.. | side+up, down | one pair per coloring stage |
//! | last four | side+up, down (twice) | Blue fragments merge, then Blue singletons |
//!
//! The fragment graph keeps only token-selected MOEs, so its degree is at
//! most four. A fragment is active in one coloring stage, chosen from four ID
//! bits that tell it apart from all its neighbours, and takes the highest
//! priority color its earlier neighbours left free.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::engine::{bits_of, BitSize, EngineError, Fault};
use crate::graph::{Port, WeightedGraph};
use crate::ldt::{block_len, concat_tuples, BlockPlan, LdtNode, LdtProgram, LdtState, MergeUp, NbrTuple, NextBlock, SideMsg};
use crate::outcome::{collect_edges, LocalView, MstOutcome, PhaseRecorder, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Color {
    Blue,
    Red,
    Orange,
    Black,
    Green,
}

/// Highest priority first.
pub const PRIORITY: [Color; 5] = [Color::Blue, Color::Red, Color::Orange, Color::Black, Color::Green];

impl Color {
    fn code(self) -> i8 {
        self as i8
    }

    fn from_code(c: i8) -> Option<Color> {
        PRIORITY.get(usize::try_from(c).ok()?).copied()
    }
}

/// Highest priority color not in `taken`.
pub fn pick_color(taken: impl IntoIterator<Item = Color>) -> Color {
    let taken: BTreeSet<Color> = taken.into_iter().collect();
    *PRIORITY.iter().find(|c| !taken.contains(c)).expect("at most four neighbours")
}

/// Number of ID bit positions the coloring schedule draws from.
pub fn id_bits(id_space: u64) -> u32 {
    bits_of(id_space).max(4)
}

fn choose4(l: u64) -> u64 {
    if l < 4 {
        0
    } else {
        l * (l - 1) * (l - 2) * (l - 3) / 24
    }
}

/// Coloring stages: every 4-subset of bit positions times 16 assignments.
pub fn stage_count(id_space: u64) -> u64 {
    choose4(id_bits(id_space) as u64) * 16
}

/// The stage in which fragment `fid` colors itself: the first 4-subset of bit
/// positions (lexicographic) on which `fid` differs from every neighbour, with
/// `fid`'s own bits as the assignment.
pub fn active_stage(fid: u64, neighbors: &[u64], id_space: u64) -> u64 {
    let l = id_bits(id_space);
    let mut idx = 0u64;
    for b1 in 0..l {
        for b2 in b1 + 1..l {
            for b3 in b2 + 1..l {
                for b4 in b3 + 1..l {
                    let mask = (1u64 << b1) | (1u64 << b2) | (1u64 << b3) | (1u64 << b4);
                    if neighbors.iter().all(|&x| (x ^ fid) & mask != 0) {
                        let a = [b1, b2, b3, b4]
                            .iter()
                            .enumerate()
                            .fold(0u64, |acc, (k, &b)| acc | (((fid >> b) & 1) << k));
                        return idx * 16 + a;
                    }
                    idx += 1;
                }
            }
        }
    }
    panic!("fragment ids must be distinct: {fid} vs {neighbors:?}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Msg {
    Find,
    Refresh { level: u64 },
    Candidate(Option<u64>),
    Moe(Option<u64>),
    Notify { moe_edge: bool },
    Count(u64),
    Tokens(u64),
    Reply { accepted: bool },
    Tuples(Vec<NbrTuple>),
    Colors(Vec<(u64, Color)>),
    Paint(Color),
    Head { level: u64 },
    Merge(MergeUp),
    Rejoin { level: u64, merge_into: bool },
}

impl BitSize for Msg {
    fn bit_size(&self) -> u32 {
        4 + match self {
            Msg::Find => 0,
            Msg::Refresh { level } | Msg::Head { level } => bits_of(*level),
            Msg::Candidate(w) | Msg::Moe(w) => w.map_or(1, |x| 1 + bits_of(x)),
            Msg::Notify { .. } | Msg::Reply { .. } => 1,
            Msg::Count(c) | Msg::Tokens(c) => bits_of(*c),
            Msg::Tuples(t) => 5 + t.iter().map(BitSize::bit_size).sum::<u32>(),
            Msg::Colors(c) => 5 + c.iter().map(|(f, _)| bits_of(*f) + 3).sum::<u32>(),
            Msg::Paint(_) => 3,
            Msg::Merge(m) => m.bit_size(),
            Msg::Rejoin { level, .. } => bits_of(*level) + 1,
        }
    }
}

/// What a node remembers about one phase, for checking the coloring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseLog {
    pub phase: u64,
    pub fragment_id: u64,
    pub color: Color,
    /// Fragment-graph neighbours.
    pub neighbors: Vec<u64>,
    pub active_stage: u64,
    /// Coloring stages in which this node was awake.
    pub stages_awake: BTreeSet<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Blk {
    Find,
    Moe,
    Tokens,
    Info,
    TwoHop,
    StageA(u64),
    StageB(u64),
    W1a,
    W1b,
    W2a,
    W2b,
}

#[derive(Debug, Clone, Copy, Default)]
struct StageRole {
    side: bool,
    relay: bool,
}

#[derive(Debug, Clone)]
pub struct DetNode {
    pub view: LocalView,
    pub st: LdtState,
    pub mst: BTreeSet<Port>,
    pub log: Vec<PhaseLog>,
    stages: u64,
    max_phases: u64,
    phase: u64,
    /// Index of the next block within the phase.
    idx: u64,
    cur: Blk,
    nbr_fid: Vec<u64>,
    candidate: Option<u64>,
    moe: Option<u64>,
    incoming: Vec<Port>,
    child_counts: BTreeMap<Port, u64>,
    subtree_count: u64,
    accepted_in: BTreeSet<Port>,
    valid_out: bool,
    one_hop: Vec<NbrTuple>,
    heard: Vec<NbrTuple>,
    two_hop: Vec<NbrTuple>,
    own_stage: u64,
    roles: BTreeMap<u64, StageRole>,
    color: Option<Color>,
    nbr_colors: BTreeMap<u64, Color>,
    heard_colors: Vec<(u64, Color)>,
    stages_awake: BTreeSet<u64>,
    tails_port: Option<Port>,
    heads_ports: Vec<Port>,
    tails_endpoint: bool,
    pub done: bool,
}

impl DetNode {
    pub fn new(view: LocalView, max_phases: u64) -> Self {
        let deg = view.degree();
        DetNode {
            st: LdtState::singleton(view.id),
            stages: stage_count(view.id_space),
            view,
            mst: BTreeSet::new(),
            log: Vec::new(),
            max_phases,
            phase: 1,
            idx: 0,
            cur: Blk::Find,
            nbr_fid: vec![0; deg],
            candidate: None,
            moe: None,
            incoming: Vec::new(),
            child_counts: BTreeMap::new(),
            subtree_count: 0,
            accepted_in: BTreeSet::new(),
            valid_out: false,
            one_hop: Vec::new(),
            heard: Vec::new(),
            two_hop: Vec::new(),
            own_stage: 0,
            roles: BTreeMap::new(),
            color: None,
            nbr_colors: BTreeMap::new(),
            heard_colors: Vec::new(),
            stages_awake: BTreeSet::new(),
            tails_port: None,
            heads_ports: Vec::new(),
            tails_endpoint: false,
            done: false,
        }
    }

    /// Blocks in one phase given the number of coloring stages.
    pub fn blocks_per_phase(stages: u64) -> u64 {
        9 + 2 * stages
    }

    fn s(&self) -> u64 {
        self.view.n
    }

    fn block_index(&self, b: Blk) -> u64 {
        let st = self.stages;
        match b {
            Blk::Find => 0,
            Blk::Moe => 1,
            Blk::Tokens => 2,
            Blk::Info => 3,
            Blk::TwoHop => 4,
            Blk::StageA(t) => 5 + 2 * t,
            Blk::StageB(t) => 6 + 2 * t,
            Blk::W1a => 5 + 2 * st,
            Blk::W1b => 6 + 2 * st,
            Blk::W2a => 7 + 2 * st,
            Blk::W2b => 8 + 2 * st,
        }
    }

    fn start_of(&self, b: Blk) -> u64 {
        let per = Self::blocks_per_phase(self.stages);
        ((self.phase - 1) * per + self.block_index(b)) * block_len(self.s()) + 1
    }

    fn moe_port(&self) -> Option<Port> {
        self.moe.and_then(|w| self.view.port_of_weight(w))
    }

    /// Ports of this node that carry fragment-graph edges.
    fn gedge_ports(&self) -> BTreeSet<Port> {
        let mut ports = self.accepted_in.clone();
        if self.valid_out {
            ports.extend(self.moe_port());
        }
        ports
    }

    fn neighbors(&self) -> Vec<u64> {
        let s: BTreeSet<u64> = self.one_hop.iter().map(|t| t.nbr_fragment_id).collect();
        s.into_iter().collect()
    }

    fn neighbors_of(&self, f: u64) -> Vec<u64> {
        let s: BTreeSet<u64> =
            self.two_hop.iter().filter(|t| t.fragment_id == f).map(|t| t.nbr_fragment_id).collect();
        s.into_iter().collect()
    }

    fn port_to_fragment(&self, f: u64) -> Option<Port> {
        self.one_hop
            .iter()
            .find(|t| t.nbr_fragment_id == f && t.node_id == self.view.id)
            .and_then(|t| self.view.port_of_weight(t.weight))
    }

    fn reset_phase(&mut self) {
        self.candidate = None;
        self.moe = None;
        self.incoming.clear();
        self.child_counts.clear();
        self.subtree_count = 0;
        self.accepted_in.clear();
        self.valid_out = false;
        self.one_hop.clear();
        self.heard.clear();
        self.two_hop.clear();
        self.roles.clear();
        self.color = None;
        self.nbr_colors.clear();
        self.heard_colors.clear();
        self.stages_awake.clear();
        self.tails_port = None;
        self.heads_ports.clear();
        self.tails_endpoint = false;
    }

    /// After the two-hop broadcast: work out in which stages to wake.
    fn plan_coloring(&mut self) {
        let fid = self.st.fragment_id;
        let nbrs = self.neighbors();
        self.own_stage = active_stage(fid, &nbrs, self.view.id_space);
        let has_gedges = !self.gedge_ports().is_empty();
        self.roles.insert(self.own_stage, StageRole { side: has_gedges, relay: false });
        for g in nbrs {
            let mut around = self.neighbors_of(g);
            if !around.contains(&fid) {
                around.push(fid);
            }
            let t = active_stage(g, &around, self.view.id_space);
            let touches = self.port_to_fragment(g).is_some();
            let r = self.roles.entry(t).or_default();
            r.relay = true;
            r.side |= touches;
        }
    }

    fn ensure_color(&mut self) {
        if self.color.is_none() {
            self.color = Some(pick_color(self.nbr_colors.values().copied()));
        }
    }

    fn is_blue(&self) -> bool {
        self.color == Some(Color::Blue)
    }

    /// Blue fragment with fragment-graph neighbours.
    fn merges_in_wave1(&self) -> bool {
        self.is_blue() && !self.one_hop.is_empty()
    }

    fn merges_in_wave2(&self) -> bool {
        self.is_blue() && self.one_hop.is_empty()
    }

    fn plan_waves(&mut self) {
        let me = self.view.id;
        if self.merges_in_wave1() {
            let target = *self.neighbors().first().expect("has neighbours");
            let t = self.one_hop.iter().find(|t| t.nbr_fragment_id == target).copied().expect("edge to target");
            if t.node_id == me {
                self.tails_port = self.view.port_of_weight(t.weight);
            }
        }
        let fid = self.st.fragment_id;
        for f in self.neighbors() {
            if self.nbr_colors.get(&f) != Some(&Color::Blue) {
                continue;
            }
            if self.neighbors_of(f).first() == Some(&fid) {
                if let Some(p) = self.port_to_fragment(f) {
                    self.heads_ports.push(p);
                }
            }
        }
    }

    fn push_log(&mut self) {
        self.log.push(PhaseLog {
            phase: self.phase,
            fragment_id: self.st.fragment_id,
            color: self.color.expect("colored"),
            neighbors: self.neighbors(),
            active_stage: self.own_stage,
            stages_awake: std::mem::take(&mut self.stages_awake),
        });
    }

    /// Does this node get any slot in a relay part (up or down)?
    fn has_tree_slot(&self) -> bool {
        !self.st.is_root() || !self.st.children.is_empty()
    }

    fn plan_for(&mut self, b: Blk) -> Option<BlockPlan> {
        let p = BlockPlan::new(self.s(), self.start_of(b));
        match b {
            Blk::Find | Blk::Moe | Blk::Tokens => Some(p.down().side().up()),
            Blk::Info => {
                let p = p.down().up();
                Some(if self.gedge_ports().is_empty() { p } else { p.side() })
            }
            Blk::TwoHop => Some(p.down()),
            Blk::StageA(t) => {
                let r = self.roles.get(&t).copied().unwrap_or_default();
                if r.side || (r.relay && self.has_tree_slot()) {
                    self.stages_awake.insert(t);
                }
                if !r.side && !r.relay {
                    return None;
                }
                let mut p = p;
                p.side = r.side;
                p.up = r.relay;
                Some(p)
            }
            Blk::StageB(t) => {
                let r = self.roles.get(&t).copied().unwrap_or_default();
                r.relay.then(|| p.down())
            }
            Blk::W1a => {
                if self.merges_in_wave1() {
                    Some(p.side().up())
                } else if !self.heads_ports.is_empty() {
                    Some(p.side())
                } else {
                    None
                }
            }
            Blk::W1b => self.merges_in_wave1().then(|| p.down()),
            Blk::W2a => Some(if self.merges_in_wave2() { p.side().up() } else { p.side() }),
            Blk::W2b => self.merges_in_wave2().then(|| p.down()),
        }
    }

    /// Next block of the phase at or after index `self.idx`, jumping over
    /// coloring stages this node sleeps through.
    fn next_in_phase(&self) -> Option<Blk> {
        let i = self.idx;
        let st = self.stages;
        match i {
            0 => Some(Blk::Find),
            1 => Some(Blk::Moe),
            2 => Some(Blk::Tokens),
            3 => Some(Blk::Info),
            4 => Some(Blk::TwoHop),
            _ if i < 5 + 2 * st => {
                let t = (i - 5) / 2;
                let in_b = (i - 5) % 2 == 1;
                if in_b && self.roles.contains_key(&t) {
                    return Some(Blk::StageB(t));
                }
                let from = if in_b { t + 1 } else { t };
                match self.roles.range(from..).next() {
                    Some((&t, _)) => Some(Blk::StageA(t)),
                    None => Some(Blk::W1a),
                }
            }
            _ if i == 5 + 2 * st => Some(Blk::W1a),
            _ if i == 6 + 2 * st => Some(Blk::W1b),
            _ if i == 7 + 2 * st => Some(Blk::W2a),
            _ if i == 8 + 2 * st => Some(Blk::W2b),
            _ => None,
        }
    }
}

impl LdtProgram for DetNode {
    type Msg = Msg;

    fn ldt(&self) -> &LdtState {
        &self.st
    }

    fn next_block(&mut self, _now: u64) -> Result<NextBlock, Fault> {
        loop {
            if self.done {
                return Ok(NextBlock::Halt);
            }
            let Some(b) = self.next_in_phase() else {
                self.phase += 1;
                self.idx = 0;
                if self.phase > self.max_phases {
                    return Err(Fault(format!("still running after {} phases", self.max_phases)));
                }
                self.reset_phase();
                continue;
            };
            if let Blk::StageA(t) = b {
                if t >= self.own_stage {
                    self.ensure_color();
                }
            }
            if b == Blk::W1a {
                self.ensure_color();
                self.push_log();
                self.plan_waves();
            }
            self.idx = self.block_index(b) + 1;
            if let Some(plan) = self.plan_for(b) {
                self.cur = b;
                return Ok(NextBlock::Block(plan));
            }
        }
    }

    fn down(&mut self, from_parent: Option<Msg>) -> Result<Vec<(Port, Msg)>, Fault> {
        let root = self.st.is_root();
        let expect = |m: Option<Msg>| m.ok_or_else(|| Fault("missing broadcast from parent".into()));
        let to_children = |msg: Msg, st: &LdtState| st.children.iter().map(|&c| (c, msg.clone())).collect();
        match self.cur {
            Blk::Find => Ok(to_children(Msg::Find, &self.st)),
            Blk::Moe => {
                let moe = if root {
                    self.candidate
                } else {
                    match expect(from_parent)? {
                        Msg::Moe(m) => m,
                        other => return Err(Fault(format!("expected MOE, got {other:?}"))),
                    }
                };
                self.moe = moe;
                if moe.is_none() {
                    self.done = true;
                }
                Ok(to_children(Msg::Moe(moe), &self.st))
            }
            Blk::Tokens => {
                let mut t = if root {
                    self.subtree_count.min(3)
                } else {
                    match expect(from_parent)? {
                        Msg::Tokens(t) => t,
                        other => return Err(Fault(format!("expected tokens, got {other:?}"))),
                    }
                };
                let mut own = self.incoming.clone();
                own.sort_by_key(|&p| self.view.weights[p]);
                for p in own {
                    if t == 0 {
                        break;
                    }
                    self.accepted_in.insert(p);
                    t -= 1;
                }
                let mut out = Vec::new();
                for &c in &self.st.children {
                    let give = t.min(self.child_counts.get(&c).copied().unwrap_or(0));
                    t -= give;
                    out.push((c, Msg::Tokens(give)));
                }
                Ok(out)
            }
            Blk::Info | Blk::TwoHop => {
                let tuples = if root {
                    if self.cur == Blk::Info {
                        self.one_hop.clone()
                    } else {
                        self.two_hop.clone()
                    }
                } else {
                    match expect(from_parent)? {
                        Msg::Tuples(t) => t,
                        other => return Err(Fault(format!("expected tuples, got {other:?}"))),
                    }
                };
                if self.cur == Blk::Info {
                    self.one_hop = tuples.clone();
                } else {
                    self.two_hop = tuples.clone();
                }
                Ok(to_children(Msg::Tuples(tuples), &self.st))
            }
            Blk::StageB(_) => {
                let colors = if root {
                    std::mem::take(&mut self.heard_colors)
                } else {
                    match expect(from_parent)? {
                        Msg::Colors(c) => c,
                        other => return Err(Fault(format!("expected colors, got {other:?}"))),
                    }
                };
                self.heard_colors.clear();
                for &(f, c) in &colors {
                    self.nbr_colors.insert(f, c);
                }
                Ok(to_children(Msg::Colors(colors), &self.st))
            }
            Blk::W1b | Blk::W2b => {
                let from = match from_parent {
                    Some(Msg::Merge(m)) => Some(m),
                    _ => None,
                };
                let m = self.st.merge_from_parent(from).ok_or_else(|| Fault("merge value missing".into()))?;
                Ok(to_children(Msg::Merge(m), &self.st))
            }
            Blk::StageA(_) | Blk::W1a | Blk::W2a => Ok(Vec::new()),
        }
    }

    fn side_send(&mut self) -> Vec<(Port, Msg)> {
        let all = 0..self.view.degree();
        let level = self.st.level;
        match self.cur {
            Blk::Find => all.map(|p| (p, Msg::Refresh { level })).collect(),
            Blk::Moe => {
                let mp = self.moe_port();
                all.map(|p| (p, Msg::Notify { moe_edge: Some(p) == mp })).collect()
            }
            Blk::Tokens => self
                .incoming
                .iter()
                .map(|&p| (p, Msg::Reply { accepted: self.accepted_in.contains(&p) }))
                .collect(),
            Blk::Info => self.gedge_ports().into_iter().map(|p| (p, Msg::Tuples(self.one_hop.clone()))).collect(),
            Blk::StageA(t) if t == self.own_stage => {
                let c = self.color.expect("colored in own stage");
                self.gedge_ports().into_iter().map(|p| (p, Msg::Paint(c))).collect()
            }
            Blk::W1a => self.heads_ports.iter().map(|&p| (p, Msg::Head { level })).collect(),
            Blk::W2a => {
                let into = if self.merges_in_wave2() { self.moe_port() } else { None };
                all.map(|p| (p, Msg::Rejoin { level, merge_into: Some(p) == into })).collect()
            }
            _ => Vec::new(),
        }
    }

    fn side_recv(&mut self, msgs: Vec<SideMsg<Msg>>) -> Result<(), Fault> {
        let fid = self.st.fragment_id;
        match self.cur {
            Blk::Find => {
                for m in msgs {
                    self.nbr_fid[m.port] = m.fragment_id;
                }
            }
            Blk::Moe => {
                for m in msgs {
                    if m.body == (Msg::Notify { moe_edge: true }) && m.fragment_id != fid {
                        self.incoming.push(m.port);
                    }
                }
            }
            Blk::Tokens => {
                if let Some(mp) = self.moe_port() {
                    let reply = msgs.iter().find(|m| m.port == mp);
                    match reply.map(|m| &m.body) {
                        Some(Msg::Reply { accepted }) => self.valid_out = *accepted,
                        _ if self.done => {}
                        other => return Err(Fault(format!("no reply on MOE port: {other:?}"))),
                    }
                }
            }
            Blk::Info => {
                let ports = self.gedge_ports();
                for m in msgs {
                    if let (true, Msg::Tuples(t)) = (ports.contains(&m.port), m.body) {
                        self.heard.extend(t);
                    }
                }
            }
            Blk::StageA(_) => {
                for m in msgs {
                    if let Msg::Paint(c) = m.body {
                        self.heard_colors.push((m.fragment_id, c));
                    }
                }
            }
            Blk::W1a => {
                for &p in &self.heads_ports.clone() {
                    self.mst.insert(p);
                    self.st.adopt(p);
                }
                if let Some(p) = self.tails_port {
                    let head = msgs.iter().find(|m| m.port == p).ok_or_else(|| Fault("no head level".into()))?;
                    let Msg::Head { level } = head.body else {
                        return Err(Fault("unexpected wave-1 message".into()));
                    };
                    self.mst.insert(p);
                    self.st.merge_at_endpoint(p, head.fragment_id, level);
                    self.tails_endpoint = true;
                }
            }
            Blk::W2a => {
                let into = if self.merges_in_wave2() { self.moe_port() } else { None };
                for m in msgs {
                    let Msg::Rejoin { level, merge_into } = m.body else { continue };
                    self.nbr_fid[m.port] = m.fragment_id;
                    if merge_into {
                        if self.merges_in_wave2() {
                            return Err(Fault("singleton merging into a singleton".into()));
                        }
                        self.mst.insert(m.port);
                        self.st.adopt(m.port);
                    }
                    if Some(m.port) == into {
                        self.mst.insert(m.port);
                        self.st.merge_at_endpoint(m.port, m.fragment_id, level);
                        self.tails_endpoint = true;
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn up(&mut self, from_children: Vec<(Port, Msg)>) -> Result<Option<Msg>, Fault> {
        let root = self.st.is_root();
        match self.cur {
            Blk::Find => {
                let own = (0..self.view.degree())
                    .filter(|&p| self.nbr_fid[p] != self.st.fragment_id)
                    .map(|p| self.view.weights[p])
                    .min();
                let best = from_children
                    .iter()
                    .filter_map(|(_, m)| match m {
                        Msg::Candidate(w) => *w,
                        _ => None,
                    })
                    .chain(own)
                    .min();
                self.candidate = best;
                Ok(Some(Msg::Candidate(best)))
            }
            Blk::Moe => {
                let mut total = self.incoming.len() as u64;
                for (c, m) in from_children {
                    if let Msg::Count(k) = m {
                        self.child_counts.insert(c, k);
                        total += k;
                    }
                }
                self.subtree_count = total;
                Ok(Some(Msg::Count(total)))
            }
            Blk::Tokens | Blk::Info => {
                let own: Vec<NbrTuple> = if self.cur == Blk::Tokens {
                    self.gedge_ports()
                        .into_iter()
                        .map(|p| NbrTuple {
                            node_id: self.view.id,
                            fragment_id: self.st.fragment_id,
                            weight: self.view.weights[p],
                            nbr_fragment_id: self.nbr_fid[p],
                            color: -1,
                        })
                        .collect()
                } else {
                    std::mem::take(&mut self.heard)
                };
                let all = concat_tuples(
                    own,
                    from_children.into_iter().filter_map(|(_, m)| match m {
                        Msg::Tuples(t) => Some(t),
                        _ => None,
                    }),
                );
                let cap = if self.cur == Blk::Tokens { 4 } else { 16 };
                if all.len() > cap {
                    return Err(Fault(format!("{} tuples exceed the degree bound", all.len())));
                }
                if root {
                    if self.cur == Blk::Tokens {
                        self.one_hop = all.clone();
                    } else {
                        self.two_hop = all.clone();
                    }
                }
                Ok(Some(Msg::Tuples(all)))
            }
            Blk::StageA(_) => {
                let mut all = std::mem::take(&mut self.heard_colors);
                for (_, m) in from_children {
                    if let Msg::Colors(c) = m {
                        all.extend(c);
                    }
                }
                all.sort();
                all.dedup();
                if root {
                    self.heard_colors = all.clone();
                }
                Ok(Some(Msg::Colors(all)))
            }
            Blk::W1a | Blk::W2a => {
                if self.tails_endpoint {
                    let m = MergeUp {
                        new_level: self.st.new_level.expect("endpoint relabelled"),
                        new_fragment_id: self.st.new_fragment_id.expect("endpoint relabelled"),
                    };
                    return Ok(Some(Msg::Merge(m)));
                }
                for (c, m) in from_children {
                    if let Msg::Merge(up) = m {
                        return Ok(Some(Msg::Merge(self.st.merge_from_child(c, up))));
                    }
                }
                Ok(None)
            }
            _ => Ok(None),
        }
    }

    fn block_end(&mut self) -> Result<(), Fault> {
        match self.cur {
            Blk::TwoHop => self.plan_coloring(),
            Blk::W1a if !self.merges_in_wave1() => self.st.apply_pending(),
            Blk::W2a if !self.merges_in_wave2() => self.st.apply_pending(),
            Blk::W1b | Blk::W2b => {
                self.st.apply_pending();
                self.tails_endpoint = false;
            }
            _ => {}
        }
        Ok(())
    }
}

/// Color-related facts about one fragment in one phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FragmentPhase {
    pub phase: u64,
    pub fragment_id: u64,
    pub color: Color,
    pub neighbors: Vec<u64>,
    pub active_stage: u64,
    /// Coloring stages in which any node of the fragment was awake.
    pub stages_awake: BTreeSet<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetOutcome {
    pub outcome: MstOutcome,
    pub fragments: Vec<FragmentPhase>,
    pub stages_per_phase: u64,
}

fn aggregate_logs<'a>(logs: impl Iterator<Item = &'a PhaseLog>) -> Vec<FragmentPhase> {
    let mut by: BTreeMap<(u64, u64), FragmentPhase> = BTreeMap::new();
    for l in logs {
        by.entry((l.phase, l.fragment_id))
            .and_modify(|f| f.stages_awake.extend(l.stages_awake.iter().copied()))
            .or_insert_with(|| FragmentPhase {
                phase: l.phase,
                fragment_id: l.fragment_id,
                color: l.color,
                neighbors: l.neighbors.clone(),
                active_stage: l.active_stage,
                stages_awake: l.stages_awake.clone(),
            });
    }
    by.into_values().collect()
}

pub fn run_deterministic_mst(g: &WeightedGraph, cfg: &RunConfig) -> Result<DetOutcome, EngineError> {
    let n = g.n() as u64;
    let max_phases = n.max(2);
    let nodes: Vec<LdtNode<DetNode>> =
        LocalView::all(g).into_iter().map(|v| LdtNode::new(DetNode::new(v, max_phases))).collect();
    let stages = stage_count(g.id_space());
    let per_phase = DetNode::blocks_per_phase(stages) * block_len(n);
    let checkpoints = (1..=max_phases).map(|p| p * per_phase).collect();
    let mut rec = PhaseRecorder::new(g.n());
    let out = cfg.build_engine(g)?.with_checkpoints(checkpoints).run_observed(
        nodes,
        &mut |round, nodes: &[LdtNode<DetNode>], awake| {
            let states: Vec<&LdtState> = nodes.iter().map(|x| &x.program.st).collect();
            rec.observe(g, round, &states, awake);
        },
    )?;
    let states: Vec<&LdtState> = out.nodes.iter().map(|x| &x.program.st).collect();
    rec.finish(g, out.stats.total_rounds, &states, &out.stats.awake);
    let (edges, one_sided) = collect_edges(g, out.nodes.iter().map(|x| &x.program.mst));
    let fragments = aggregate_logs(out.nodes.iter().flat_map(|x| x.program.log.iter()));
    let phases = rec.phase_awake.len() as u64;
    Ok(DetOutcome {
        outcome: MstOutcome {
            edges,
            stats: out.stats,
            trajectory: rec.trajectory,
            phase_awake: rec.phase_awake,
            phases,
            ldt_violations: rec.violations,
            one_sided_edges: one_sided,
        },
        fragments,
        stages_per_phase: stages,
    })
}

/// Most rounds a node can be awake in one phase, counted from the schedule:
/// four three-part blocks (5 rounds each), the two-hop broadcast (2),
/// at most five active coloring stages plus the neighbour-listening rounds
/// around them (21), and the two merge waves (6).
pub const AWAKE_PER_PHASE: u64 = 4 * 5 + 2 + 21 + 6;

/// Decode a tuple color field.
pub fn tuple_color(t: &NbrTuple) -> Option<Color> {
    Color::from_code(t.color)
}

/// Encode a color for a tuple.
pub fn color_code(c: Option<Color>) -> i8 {
    c.map_or(-1, Color::code)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_complete, gen_increasing_path, gen_path, gen_random_connected, gen_star, mst_oracle};

    #[test]
    fn stage_of_isolated_fragment_is_its_low_bits() {
        assert_eq!(active_stage(0b1011, &[], 256), 0b1011);
        assert_eq!(active_stage(0b10000, &[], 256), 0);
    }

    #[test]
    fn fragments_differing_in_one_bit_pick_a_subset_with_it() {
        let a = 0b1000_0001u64;
        let b = 0b0000_0001u64;
        let sa = active_stage(a, &[b], 256);
        let sb = active_stage(b, &[a], 256);
        // Subset (0,1,2,7) is the first containing bit 7.
        let idx = {
            let mut i = 0;
            'o: for b1 in 0..8 {
                for b2 in b1 + 1..8 {
                    for b3 in b2 + 1..8 {
                        for b4 in b3 + 1..8 {
                            if (b1, b2, b3, b4) == (0, 1, 2, 7) {
                                break 'o;
                            }
                            i += 1;
                        }
                    }
                }
            }
            i
        };
        assert_eq!(sa / 16, idx);
        assert_eq!(sb / 16, idx);
        assert_ne!(sa, sb);
    }

    #[test]
    fn priority_rule() {
        assert_eq!(pick_color([]), Color::Blue);
        assert_eq!(pick_color([Color::Blue]), Color::Red);
        assert_eq!(pick_color([Color::Blue, Color::Red, Color::Orange, Color::Black]), Color::Green);
    }

    #[test]
    fn small_graphs_match_oracle() {
        let g = gen_path(2, 1).unwrap();
        let out = run_deterministic_mst(&g, &RunConfig::for_graph(&g, 0)).unwrap();
        assert_eq!(out.outcome.edges, mst_oracle(&g));
        for seed in 0..3 {
            let g = gen_random_connected(24, 4.0, seed).unwrap();
            let out = run_deterministic_mst(&g, &RunConfig::for_graph(&g, 0)).unwrap();
            assert_eq!(out.outcome.edges, mst_oracle(&g));
            assert!(out.outcome.ldt_violations.is_empty(), "{:?}", out.outcome.ldt_violations);
            assert_eq!(out.outcome.one_sided_edges, 0);
        }
    }

    fn check_coloring(out: &DetOutcome) {
        let by: BTreeMap<(u64, u64), &FragmentPhase> =
            out.fragments.iter().map(|f| ((f.phase, f.fragment_id), f)).collect();
        for f in &out.fragments {
            assert!(f.neighbors.len() <= 4);
            assert!(f.stages_awake.len() <= 5, "{f:?}");
            for g in &f.neighbors {
                let other = by[&(f.phase, *g)];
                assert_ne!(f.color, other.color);
                assert!(other.neighbors.contains(&f.fragment_id));
            }
        }
    }

    #[test]
    fn families_match_oracle_with_proper_coloring() {
        let graphs = vec![
            gen_increasing_path(12, 0).unwrap(),
            gen_star(10, 1).unwrap(),
            gen_complete(9, 2).unwrap(),
            gen_random_connected(50, 3.0, 7).unwrap(),
        ];
        for g in graphs {
            let out = run_deterministic_mst(&g, &RunConfig::for_graph(&g, 0)).unwrap();
            assert_eq!(out.outcome.edges, mst_oracle(&g));
            assert!(out.outcome.ldt_violations.is_empty());
            check_coloring(&out);
            let t = &out.outcome.trajectory;
            assert!(t.windows(2).all(|w| w[1] < w[0] || w[0] == 1), "{t:?}");
        }
    }
}
