//! Controlled GHS: phases `i = 1..=k` on blocks of size `5 * 2^i`.
//!
//! A fragment takes part in phase `i` only if its tree diameter is at most
//! `2^i`. Participants find their MOE and form a rooted forest (each
//! fragment's parent is its MOE target, the lower fragment id of a mutual
//! pair is the root), 3-color it with Cole-Vishkin, match color by color and
//! merge: first matched children into their parents, then every remaining
//! participant along its MOE.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::engine::{bits_of, ceil_log2, BitSize, Fault};
use crate::graph::Port;
use crate::ldt::{block_len, BlockPlan, LdtProgram, LdtState, MergeUp, NextBlock, SideMsg};
use crate::outcome::LocalView;

/// Block size used in phase `i`.
pub fn phase_size(i: u32) -> u64 {
    5u64 << i
}

/// Cole-Vishkin iterations needed to bring ids below `id_space` down to six
/// colors.
pub fn cv_iterations(id_space: u64) -> u64 {
    let mut b = 1u64 << bits_of(id_space);
    let mut t = 0;
    while b > 6 {
        b = 2 * ceil_log2(b) as u64;
        t += 1;
    }
    t
}

pub fn blocks_per_phase(id_space: u64) -> u64 {
    19 + cv_iterations(id_space)
}

/// Last round of each phase, for a stage starting at round `t0`.
pub fn phase_ends(t0: u64, k: u32, id_space: u64) -> Vec<u64> {
    let mut end = t0 - 1;
    (1..=k)
        .map(|i| {
            end += blocks_per_phase(id_space) * block_len(phase_size(i));
            end
        })
        .collect()
}

/// One Cole-Vishkin step against the parent's color.
pub fn cv_step(own: u64, parent: u64) -> u64 {
    let i = (own ^ parent).trailing_zeros() as u64;
    2 * i + ((own >> i) & 1)
}

fn lowest_free(taken: &[u64]) -> u64 {
    (0..3).find(|c| !taken.contains(c)).expect("three colors, two taken")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Blk {
    Probe,
    Decide,
    Link,
    Cv,
    Shift,
    Recolor(u64),
    Ask(u64),
    Grant,
    W1a,
    W1b,
    W2a,
    W2b,
}

fn phase_blocks(id_space: u64) -> Vec<Blk> {
    let mut v = vec![Blk::Probe, Blk::Decide, Blk::Link];
    v.extend((0..cv_iterations(id_space)).map(|_| Blk::Cv));
    for x in [5, 4, 3] {
        v.push(Blk::Shift);
        v.push(Blk::Recolor(x));
    }
    for c in 0..3 {
        v.push(Blk::Ask(c));
        v.push(Blk::Grant);
    }
    v.extend([Blk::W1a, Blk::W1b, Blk::W2a, Blk::W2b]);
    v
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Msg {
    Find,
    Refresh { level: u64 },
    Probe { cand: Option<u64>, height: u64, diam: u64 },
    Decide { moe: Option<u64>, participate: bool },
    Announce { moe_edge: bool },
    Parent { has_parent: bool, target: u64 },
    Color { color: u64, has_parent: bool },
    ParentColor(Option<u64>),
    Ask(bool),
    Requester(Option<u64>),
    Grant(Option<u64>),
    Granted(bool),
    Wave(u8),
    Head { level: u64 },
    Merge(MergeUp),
    Rejoin { level: u64, merge_into: bool },
}

fn opt_bits(x: Option<u64>) -> u32 {
    x.map_or(1, |v| 1 + bits_of(v))
}

impl BitSize for Msg {
    fn bit_size(&self) -> u32 {
        5 + match *self {
            Msg::Find => 0,
            Msg::Refresh { level } | Msg::Head { level } => bits_of(level),
            Msg::Probe { cand, height, diam } => opt_bits(cand) + bits_of(height) + bits_of(diam),
            Msg::Decide { moe, .. } => opt_bits(moe) + 1,
            Msg::Announce { .. } | Msg::Ask(_) | Msg::Granted(_) => 1,
            Msg::Parent { target, .. } => 1 + bits_of(target),
            Msg::Color { color, .. } => bits_of(color) + 1,
            Msg::ParentColor(c) | Msg::Requester(c) | Msg::Grant(c) => opt_bits(c),
            Msg::Wave(_) => 2,
            Msg::Merge(m) => m.bit_size(),
            Msg::Rejoin { level, .. } => bits_of(level) + 1,
        }
    }
}

/// What a fragment root decided in one phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseRecord {
    pub phase: u32,
    pub fragment_id: u64,
    pub diameter: u64,
    pub participate: bool,
    /// Fragment at the other end of the MOE, if that fragment participates.
    pub parent: Option<u64>,
    pub color: u64,
    /// Participating fragment this one was matched with, as parent.
    pub granted: Option<u64>,
    /// 1: merged into its matched parent, 2: merged along its MOE afterwards.
    pub wave: u8,
}

#[derive(Debug, Clone)]
pub struct Ghs {
    pub view: LocalView,
    pub st: LdtState,
    pub mst: BTreeSet<Port>,
    pub records: Vec<PhaseRecord>,
    k: u32,
    blocks: Vec<Blk>,
    t0: u64,
    phase: u32,
    /// Index of the next block within the phase.
    idx: usize,
    /// First round of the next phase.
    phase_start: u64,
    cur: Blk,
    nbr_fid: Vec<u64>,
    cand: Option<u64>,
    height: u64,
    diam: u64,
    participate: bool,
    moe: Option<u64>,
    has_parent: bool,
    parent_fid: Option<u64>,
    /// Ports whose far side is a participating child fragment.
    child_ports: BTreeMap<Port, u64>,
    color: u64,
    prev_color: u64,
    heard_color: Option<u64>,
    matched: bool,
    asking: bool,
    requesters: Vec<u64>,
    granted: Option<u64>,
    /// Grant decided in the last ask block, broadcast in the next one.
    pending_grant: Option<u64>,
    grant_port: Option<Port>,
    /// This node is the MOE endpoint of a granted request.
    accepted: bool,
    /// Root only: the fragment's request was granted.
    joins_parent: bool,
    wave: u8,
    tails_endpoint: bool,
}

impl Ghs {
    pub fn new(view: LocalView, k: u32) -> Self {
        let deg = view.degree();
        Ghs {
            st: LdtState::singleton(view.id),
            blocks: phase_blocks(view.id_space),
            view,
            mst: BTreeSet::new(),
            records: Vec::new(),
            k,
            t0: 0,
            phase: 1,
            idx: 0,
            phase_start: 0,
            cur: Blk::Probe,
            nbr_fid: vec![0; deg],
            cand: None,
            height: 0,
            diam: 0,
            participate: false,
            moe: None,
            has_parent: false,
            parent_fid: None,
            child_ports: BTreeMap::new(),
            color: 0,
            prev_color: 0,
            heard_color: None,
            matched: false,
            asking: false,
            requesters: Vec::new(),
            granted: None,
            pending_grant: None,
            grant_port: None,
            accepted: false,
            joins_parent: false,
            wave: 0,
            tails_endpoint: false,
        }
    }

    /// Fix the first round of the stage; must precede the first block.
    pub fn set_start(&mut self, t0: u64) {
        self.t0 = t0;
        self.phase_start = t0;
    }

    /// Last round of the stage.
    pub fn end_round(&self) -> u64 {
        phase_ends(self.t0, self.k, self.view.id_space).last().copied().unwrap_or(self.t0 - 1)
    }

    fn s(&self) -> u64 {
        phase_size(self.phase)
    }

    fn moe_port(&self) -> Option<Port> {
        self.moe.and_then(|w| self.view.port_of_weight(w))
    }

    fn reset_phase(&mut self) {
        self.cand = None;
        self.height = 0;
        self.diam = 0;
        self.participate = false;
        self.moe = None;
        self.has_parent = false;
        self.parent_fid = None;
        self.child_ports.clear();
        self.color = self.st.fragment_id;
        self.prev_color = 0;
        self.heard_color = None;
        self.matched = false;
        self.asking = false;
        self.requesters.clear();
        self.granted = None;
        self.pending_grant = None;
        self.grant_port = None;
        self.accepted = false;
        self.joins_parent = false;
        self.wave = 0;
        self.tails_endpoint = false;
    }

    /// Nodes that talk across the forest in color and matching blocks.
    fn forest_side(&self) -> bool {
        !self.child_ports.is_empty() || (self.has_parent && self.moe_port().is_some())
    }

    fn plan_for(&self, b: Blk, start: u64) -> Option<BlockPlan> {
        let p = BlockPlan::new(self.s(), start);
        let part = self.participate;
        match b {
            Blk::Probe => Some(p.down().side().up()),
            Blk::Decide => Some(p.down()),
            Blk::Link => part.then(|| p.side().up()),
            Blk::Cv | Blk::Shift | Blk::Recolor(_) | Blk::Ask(_) | Blk::Grant => {
                let p = p.down().up();
                part.then(|| if self.forest_side() { p.side() } else { p })
            }
            Blk::W1a => {
                let p = p.down().up();
                let side = self.grant_port.is_some() || self.accepted;
                part.then(|| if side { p.side() } else { p })
            }
            Blk::W1b => (self.wave == 1).then(|| p.down()),
            Blk::W2a => Some(if self.wave == 2 { p.side().up() } else { p.side() }),
            Blk::W2b => (self.wave == 2).then(|| p.down()),
        }
    }

    fn record(&mut self) {
        if self.st.is_root() {
            self.records.push(PhaseRecord {
                phase: self.phase,
                fragment_id: self.st.fragment_id,
                diameter: self.diam,
                participate: self.participate,
                parent: if self.has_parent { self.parent_fid } else { None },
                color: self.color,
                granted: self.granted,
                wave: self.wave,
            });
        }
    }

    /// Root's color update once it knows its parent's current color.
    fn recolor_root(&mut self, parent: Option<u64>) -> Result<(), Fault> {
        let parent = if self.has_parent {
            Some(parent.ok_or_else(|| Fault("parent color missing".into()))?)
        } else {
            None
        };
        match self.cur {
            Blk::Cv => self.color = cv_step(self.color, parent.unwrap_or(self.color ^ 1)),
            Blk::Shift => {
                self.prev_color = self.color;
                self.color = parent.unwrap_or_else(|| lowest_free(&[self.color]));
            }
            Blk::Recolor(x) if self.color == x => {
                let mut taken = vec![self.prev_color];
                taken.extend(parent);
                self.color = lowest_free(&taken);
            }
            _ => {}
        }
        Ok(())
    }
}

fn expect_down(m: Option<Msg>) -> Result<Msg, Fault> {
    m.ok_or_else(|| Fault("missing broadcast from parent".into()))
}

impl LdtProgram for Ghs {
    type Msg = Msg;

    fn ldt(&self) -> &LdtState {
        &self.st
    }

    fn next_block(&mut self, _now: u64) -> Result<NextBlock, Fault> {
        loop {
            if self.phase > self.k {
                return Ok(NextBlock::Yield);
            }
            if self.idx == self.blocks.len() {
                self.phase_start += self.blocks.len() as u64 * block_len(self.s());
                self.phase += 1;
                self.idx = 0;
                continue;
            }
            if self.idx == 0 {
                self.reset_phase();
            }
            let b = self.blocks[self.idx];
            let start = self.phase_start + self.idx as u64 * block_len(self.s());
            self.idx += 1;
            if let Some(plan) = self.plan_for(b, start) {
                self.cur = b;
                return Ok(NextBlock::Block(plan));
            }
        }
    }

    fn down(&mut self, from_parent: Option<Msg>) -> Result<Vec<(Port, Msg)>, Fault> {
        let root = self.st.is_root();
        let msg = match self.cur {
            Blk::Probe => Msg::Find,
            Blk::Decide => {
                if root {
                    self.participate = self.cand.is_some() && self.diam <= 1u64 << self.phase;
                    self.moe = self.cand;
                    if !self.participate {
                        self.record();
                    }
                } else {
                    let Msg::Decide { moe, participate } = expect_down(from_parent)? else {
                        return Err(Fault("expected decision".into()));
                    };
                    self.moe = moe;
                    self.participate = participate;
                }
                Msg::Decide { moe: self.moe, participate: self.participate }
            }
            Blk::Cv | Blk::Shift | Blk::Recolor(_) => {
                if !root {
                    let Msg::Color { color, has_parent } = expect_down(from_parent)? else {
                        return Err(Fault("expected color".into()));
                    };
                    self.color = color;
                    self.has_parent = has_parent;
                }
                Msg::Color { color: self.color, has_parent: self.has_parent }
            }
            Blk::Ask(c) => {
                if root {
                    self.asking = !self.matched && self.has_parent && self.color == c;
                } else {
                    let Msg::Ask(a) = expect_down(from_parent)? else {
                        return Err(Fault("expected ask flag".into()));
                    };
                    self.asking = a;
                }
                self.requesters.clear();
                Msg::Ask(self.asking)
            }
            Blk::Grant => {
                let g = if root {
                    self.pending_grant.take()
                } else {
                    let Msg::Grant(g) = expect_down(from_parent)? else {
                        return Err(Fault("expected grant".into()));
                    };
                    g
                };
                if let Some(f) = g {
                    self.grant_port = self.child_ports.iter().find(|(_, &cf)| cf == f).map(|(&p, _)| p);
                }
                Msg::Grant(g)
            }
            Blk::W1a => {
                if root {
                    self.wave = if self.joins_parent {
                        1
                    } else if !self.matched {
                        2
                    } else {
                        0
                    };
                    self.record();
                } else {
                    let Msg::Wave(w) = expect_down(from_parent)? else {
                        return Err(Fault("expected wave".into()));
                    };
                    self.wave = w;
                }
                Msg::Wave(self.wave)
            }
            Blk::W1b | Blk::W2b => {
                let from = match from_parent {
                    Some(Msg::Merge(m)) => Some(m),
                    _ => None,
                };
                Msg::Merge(self.st.merge_from_parent(from).ok_or_else(|| Fault("merge value missing".into()))?)
            }
            Blk::Link | Blk::W2a => return Ok(Vec::new()),
        };
        Ok(self.st.children.iter().map(|&c| (c, msg.clone())).collect())
    }

    fn side_send(&mut self) -> Vec<(Port, Msg)> {
        let all = 0..self.view.degree();
        let level = self.st.level;
        let to_children = |m: Msg, s: &Self| s.child_ports.keys().map(|&p| (p, m.clone())).collect();
        match self.cur {
            Blk::Probe => all.map(|p| (p, Msg::Refresh { level })).collect(),
            Blk::Link => {
                let mp = self.moe_port();
                all.map(|p| (p, Msg::Announce { moe_edge: Some(p) == mp })).collect()
            }
            Blk::Cv | Blk::Shift | Blk::Recolor(_) => {
                to_children(Msg::Color { color: self.color, has_parent: true }, self)
            }
            Blk::Ask(_) if self.asking => self.moe_port().map(|p| vec![(p, Msg::Ask(true))]).unwrap_or_default(),
            Blk::Grant => self.grant_port.map(|p| vec![(p, Msg::Granted(true))]).unwrap_or_default(),
            Blk::W1a => self.grant_port.map(|p| vec![(p, Msg::Head { level })]).unwrap_or_default(),
            Blk::W2a => {
                let into = if self.wave == 2 { self.moe_port() } else { None };
                all.map(|p| (p, Msg::Rejoin { level, merge_into: Some(p) == into })).collect()
            }
            _ => Vec::new(),
        }
    }

    fn side_recv(&mut self, msgs: Vec<SideMsg<Msg>>) -> Result<(), Fault> {
        let fid = self.st.fragment_id;
        let mp = self.moe_port();
        let on_moe = |msgs: &[SideMsg<Msg>]| msgs.iter().find(|m| Some(m.port) == mp).cloned();
        match self.cur {
            Blk::Probe => {
                for m in msgs {
                    self.nbr_fid[m.port] = m.fragment_id;
                }
            }
            Blk::Link => {
                if let Some(m) = on_moe(&msgs) {
                    let mutual = m.body == Msg::Announce { moe_edge: true };
                    self.parent_fid = Some(m.fragment_id);
                    self.has_parent = !(mutual && fid < m.fragment_id);
                }
                for m in msgs {
                    let mutual_parent = Some(m.port) == mp && fid > m.fragment_id;
                    if m.body == (Msg::Announce { moe_edge: true }) && m.fragment_id != fid && !mutual_parent {
                        self.child_ports.insert(m.port, m.fragment_id);
                    }
                }
            }
            Blk::Cv | Blk::Shift | Blk::Recolor(_) => {
                if self.has_parent {
                    self.heard_color = match on_moe(&msgs).map(|m| m.body) {
                        Some(Msg::Color { color, .. }) => Some(color),
                        _ => None,
                    };
                }
            }
            Blk::Ask(_) => {
                for m in msgs {
                    if m.body == Msg::Ask(true) && self.child_ports.contains_key(&m.port) {
                        self.requesters.push(m.fragment_id);
                    }
                }
            }
            Blk::Grant => {
                if self.asking && on_moe(&msgs).map(|m| m.body) == Some(Msg::Granted(true)) {
                    self.accepted = true;
                }
            }
            Blk::W1a => {
                if let Some(p) = self.grant_port {
                    self.mst.insert(p);
                    self.st.adopt(p);
                }
                if self.accepted {
                    let m = on_moe(&msgs).ok_or_else(|| Fault("no head level".into()))?;
                    let Msg::Head { level } = m.body else {
                        return Err(Fault("unexpected wave-1 message".into()));
                    };
                    let p = mp.expect("accepted on MOE");
                    self.mst.insert(p);
                    self.st.merge_at_endpoint(p, m.fragment_id, level);
                    self.tails_endpoint = true;
                }
            }
            Blk::W2a => {
                let into = if self.wave == 2 { mp } else { None };
                for m in msgs {
                    let Msg::Rejoin { level, merge_into } = m.body else { continue };
                    if merge_into {
                        if self.wave == 2 {
                            return Err(Fault("wave-2 target is merging itself".into()));
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
                if into.is_some() && !self.tails_endpoint {
                    return Err(Fault("MOE target asleep in wave 2".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn up(&mut self, from_children: Vec<(Port, Msg)>) -> Result<Option<Msg>, Fault> {
        let root = self.st.is_root();
        match self.cur {
            Blk::Probe => {
                let own = (0..self.view.degree())
                    .filter(|&p| self.nbr_fid[p] != self.st.fragment_id)
                    .map(|p| self.view.weights[p])
                    .min();
                let mut cand = own;
                let mut heights = Vec::new();
                let mut diam = 0;
                for (_, m) in from_children {
                    if let Msg::Probe { cand: c, height, diam: d } = m {
                        cand = match (cand, c) {
                            (Some(a), Some(b)) => Some(a.min(b)),
                            (a, b) => a.or(b),
                        };
                        heights.push(height + 1);
                        diam = diam.max(d);
                    }
                }
                heights.sort_unstable_by(|a, b| b.cmp(a));
                let top2 = heights.iter().take(2).sum::<u64>();
                self.cand = cand;
                self.height = heights.first().copied().unwrap_or(0);
                self.diam = diam.max(top2);
                Ok(Some(Msg::Probe { cand, height: self.height, diam: self.diam }))
            }
            Blk::Link => {
                let mut info = self.parent_fid.map(|t| (self.has_parent, t));
                for (_, m) in from_children {
                    if let Msg::Parent { has_parent, target } = m {
                        info = Some((has_parent, target));
                    }
                }
                if let Some((h, t)) = info {
                    self.has_parent = h;
                    self.parent_fid = Some(t);
                }
                Ok(info.map(|(has_parent, target)| Msg::Parent { has_parent, target }))
            }
            Blk::Cv | Blk::Shift | Blk::Recolor(_) => {
                let mut heard = self.heard_color.take();
                for (_, m) in from_children {
                    if let Msg::ParentColor(Some(c)) = m {
                        heard = Some(c);
                    }
                }
                if root {
                    self.recolor_root(heard)?;
                    return Ok(None);
                }
                Ok(Some(Msg::ParentColor(heard)))
            }
            Blk::Ask(_) => {
                let mut best = self.requesters.iter().copied().min();
                for (_, m) in from_children {
                    if let Msg::Requester(Some(f)) = m {
                        best = Some(best.map_or(f, |b| b.min(f)));
                    }
                }
                if root {
                    if let (false, Some(f)) = (self.matched, best) {
                        self.matched = true;
                        self.granted = Some(f);
                        self.pending_grant = Some(f);
                    }
                    return Ok(None);
                }
                Ok(Some(Msg::Requester(best)))
            }
            Blk::Grant => {
                let mut acc = self.accepted;
                for (_, m) in from_children {
                    if m == Msg::Granted(true) {
                        acc = true;
                    }
                }
                if root && acc {
                    self.matched = true;
                    self.joins_parent = true;
                }
                Ok(Some(Msg::Granted(acc)))
            }
            Blk::W1a | Blk::W2a => {
                let merging = (self.cur == Blk::W1a && self.wave == 1) || (self.cur == Blk::W2a && self.wave == 2);
                if !merging {
                    return Ok(None);
                }
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
            Blk::W1a if self.wave != 1 => self.st.apply_pending(),
            Blk::W2a if self.wave != 2 => self.st.apply_pending(),
            Blk::W1b | Blk::W2b => {
                self.st.apply_pending();
                self.tails_endpoint = false;
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cv_step_separates_parent_and_child() {
        for own in 0..64u64 {
            for parent in 0..64u64 {
                if own == parent {
                    continue;
                }
                for gp in 0..64u64 {
                    if gp == parent {
                        continue;
                    }
                    assert_ne!(cv_step(own, parent), cv_step(parent, gp));
                }
            }
        }
    }

    #[test]
    fn iteration_count_is_log_star_like() {
        assert_eq!(cv_iterations(7), 1);
        assert!(cv_iterations(1 << 30) <= 4);
    }

    #[test]
    fn phase_layout() {
        let ends = phase_ends(10, 2, 100);
        let per = blocks_per_phase(100);
        assert_eq!(ends, vec![9 + per * 21, 9 + per * 21 + per * 41]);
    }
}
