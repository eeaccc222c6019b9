//! Leader election plus BFS tree.
//!
//! Every node draws a rank in `[1, n^4]`; the largest (rank, id) wins. In
//! flood mode each node stays awake every round: it floods the best key it
//! has seen, echoes to its BFS parent once all neighbours are accounted for,
//! and the leader finally broadcasts the tree height and the start round of
//! the next stage. Oracle mode hands out the same tree centrally.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{bits_of, ceil_log2, BitSize, Fault};
use crate::graph::{Port, WeightedGraph};
use crate::outcome::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeMode {
    /// Real flooding; awake cost grows with the diameter.
    Flood,
    /// Tree handed out by the simulator; each node is charged a fixed
    /// number of awake rounds.
    #[default]
    Oracle,
}

/// Default awake charge of oracle mode: `ceil(log2 n)^2`.
pub fn default_charge(n: u64) -> u64 {
    let l = ceil_log2(n.max(2)) as u64;
    l * l
}

/// Round at which the stage after leader election starts, given the tree
/// height and the oracle-mode charge (0 in flood mode).
pub fn stage_start(height: u64, charge: u64) -> u64 {
    (4 * height + 4).max(charge + 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BfsInfo {
    pub leader: u64,
    pub parent: Option<Port>,
    pub children: BTreeSet<Port>,
    pub depth: u64,
    /// Height of the whole BFS tree.
    pub height: u64,
}

pub fn draw_rank(seed: u64, id: u64, n: u64) -> u64 {
    let top = n.max(2).saturating_pow(4);
    ChaCha8Rng::seed_from_u64(mix_seed(&[seed, id, 0x4c45])).gen_range(1..=top)
}

/// Leader and BFS tree computed centrally, with the same tie rules the flood
/// uses: parent is the lowest port towards the previous layer.
pub fn oracle_bfs(g: &WeightedGraph, seed: u64) -> Vec<BfsInfo> {
    let n = g.n();
    if n == 0 {
        return Vec::new();
    }
    let key = |v: usize| (draw_rank(seed, g.id(v), n as u64), g.id(v));
    let leader = (0..n).max_by_key(|&v| key(v)).expect("non-empty");
    let mut dist = vec![u64::MAX; n];
    dist[leader] = 0;
    let mut q = VecDeque::from([leader]);
    while let Some(v) = q.pop_front() {
        for l in g.ports(v) {
            if dist[l.to] == u64::MAX {
                dist[l.to] = dist[v] + 1;
                q.push_back(l.to);
            }
        }
    }
    let height = dist.iter().copied().max().unwrap_or(0);
    let parent: Vec<Option<Port>> = (0..n)
        .map(|v| (v != leader).then(|| g.ports(v).iter().position(|l| dist[l.to] + 1 == dist[v]).expect("connected")))
        .collect();
    (0..n)
        .map(|v| BfsInfo {
            leader: g.id(leader),
            parent: parent[v],
            children: g
                .ports(v)
                .iter()
                .enumerate()
                .filter(|(_, l)| parent[l.to].map(|p| g.ports(l.to)[p].to) == Some(v))
                .map(|(p, _)| p)
                .collect(),
            depth: dist[v],
            height,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LeMsg {
    Flood { rank: u64, id: u64, dist: u64, to_parent: bool },
    Echo { rank: u64, id: u64, height: u64 },
    Done { height: u64, start: u64 },
}

impl BitSize for LeMsg {
    fn bit_size(&self) -> u32 {
        2 + match *self {
            LeMsg::Flood { rank, id, dist, .. } => bits_of(rank) + bits_of(id) + bits_of(dist) + 1,
            LeMsg::Echo { rank, id, height } => bits_of(rank) + bits_of(id) + bits_of(height),
            LeMsg::Done { height, start } => bits_of(height) + bits_of(start),
        }
    }
}

/// Flood-mode state of one node.
#[derive(Debug, Clone)]
pub struct FloodLe {
    id: u64,
    deg: usize,
    own: (u64, u64),
    best: (u64, u64),
    dist: u64,
    parent: Option<Port>,
    changed: bool,
    nonchild: BTreeSet<Port>,
    echoed: BTreeMap<Port, u64>,
    echo_due: Option<u64>,
    echo_sent: bool,
    done: Option<(u64, u64)>,
    forward_done: bool,
    pub finished: bool,
}

impl FloodLe {
    pub fn new(id: u64, rank: u64, deg: usize) -> Self {
        let own = (rank, id);
        let mut s = FloodLe {
            id,
            deg,
            own,
            best: own,
            dist: 0,
            parent: None,
            changed: true,
            nonchild: BTreeSet::new(),
            echoed: BTreeMap::new(),
            echo_due: None,
            echo_sent: false,
            done: None,
            forward_done: false,
            finished: false,
        };
        if deg == 0 {
            s.changed = false;
            s.done = Some((0, stage_start(0, 0)));
            s.finished = true;
        }
        s
    }

    pub fn send(&mut self) -> Vec<(Port, LeMsg)> {
        let mut out = Vec::new();
        let (rank, id) = self.best;
        if self.changed {
            self.changed = false;
            for p in 0..self.deg {
                out.push((p, LeMsg::Flood { rank, id, dist: self.dist, to_parent: Some(p) == self.parent }));
            }
        }
        if let Some(height) = self.echo_due.take() {
            out.push((self.parent.expect("non-leader echoes"), LeMsg::Echo { rank, id, height }));
        }
        if self.forward_done {
            self.forward_done = false;
            let (height, start) = self.done.expect("done known");
            out.extend(self.echoed.keys().map(|&c| (c, LeMsg::Done { height, start })));
            self.finished = true;
        }
        out
    }

    pub fn receive(&mut self, round: u64, msgs: Vec<(Port, LeMsg)>) -> Result<(), Fault> {
        let better = msgs
            .iter()
            .filter_map(|(p, m)| match *m {
                LeMsg::Flood { rank, id, dist, .. } if (rank, id) > self.best => Some(((rank, id), dist, *p)),
                _ => None,
            })
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)).then(b.2.cmp(&a.2)));
        if let Some((key, dist, port)) = better {
            self.best = key;
            self.dist = dist + 1;
            self.parent = Some(port);
            self.changed = true;
            self.nonchild.clear();
            self.echoed.clear();
            self.echo_due = None;
            self.echo_sent = false;
        }
        for (p, m) in msgs {
            match m {
                // Children stay unresolved until they echo.
                LeMsg::Flood { rank, id, to_parent: false, .. } if (rank, id) == self.best => {
                    self.nonchild.insert(p);
                }
                LeMsg::Echo { rank, id, height } if (rank, id) == self.best => {
                    self.echoed.insert(p, height);
                }
                LeMsg::Done { height, start } if Some(p) == self.parent => {
                    self.done = Some((height, start));
                    if self.echoed.is_empty() {
                        self.finished = true;
                    } else {
                        self.forward_done = true;
                    }
                }
                _ => {}
            }
        }
        if self.echo_sent || self.done.is_some() {
            return Ok(());
        }
        let resolved = (0..self.deg)
            .filter(|&p| Some(p) != self.parent)
            .all(|p| self.nonchild.contains(&p) || self.echoed.contains_key(&p));
        if !resolved {
            return Ok(());
        }
        let height = self.echoed.values().map(|h| h + 1).max().unwrap_or(0);
        self.echo_sent = true;
        if self.best == self.own {
            let start = stage_start(height, 0);
            if round + height + 1 >= start {
                return Err(Fault(format!("leader {} finished late at round {round}", self.id)));
            }
            self.done = Some((height, start));
            self.forward_done = true;
        } else {
            self.echo_due = Some(height);
        }
        Ok(())
    }

    pub fn start_round(&self) -> Option<u64> {
        self.done.map(|d| d.1)
    }

    pub fn info(&self) -> Option<BfsInfo> {
        let (height, _) = self.done?;
        Some(BfsInfo {
            leader: self.best.1,
            parent: self.parent,
            children: self.echoed.keys().copied().collect(),
            depth: self.dist,
            height,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_path, gen_star};

    #[test]
    fn star_depth_at_most_two() {
        let g = gen_star(9, 1).unwrap();
        let t = oracle_bfs(&g, 4);
        assert!(t.iter().all(|b| b.height <= 2));
        assert_eq!(t.iter().filter(|b| b.parent.is_none()).count(), 1);
    }

    #[test]
    fn path_height_matches_leader_position() {
        let g = gen_path(10, 0).unwrap();
        let t = oracle_bfs(&g, 2);
        let leader = t.iter().position(|b| b.parent.is_none()).unwrap();
        assert_eq!(t[0].height as usize, leader.max(9 - leader));
    }
}
