//! Scripted wake schedules and the brute-force delivery rule they are
//! checked against.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sleepmst_core::engine::{BitSize, Delivery, Fault, Protocol, RunOutcome};
use sleepmst_core::graph::WeightedGraph;
use sleepmst_core::{Engine, EngineConfig, Port, Wake};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Tag {
    pub from: usize,
    pub round: u64,
    pub port: Port,
}

impl BitSize for Tag {
    fn bit_size(&self) -> u32 {
        16
    }
}

/// Wakes on a fixed schedule and sends on a fixed set of ports each time.
#[derive(Debug, Clone)]
pub struct Scripted {
    pub me: usize,
    pub rounds: Vec<u64>,
    pub sends: Vec<Vec<Port>>,
    pub next: usize,
    pub got: BTreeSet<(u64, Port, Tag)>,
    /// Awake rounds counted by the node itself.
    pub shadow: u64,
}

impl Scripted {
    fn wake_after(&self) -> Wake {
        match self.rounds.get(self.next) {
            Some(&r) => Wake::At(r),
            None => Wake::Halt,
        }
    }
}

impl Protocol for Scripted {
    type Msg = Tag;

    fn init(&mut self) -> Result<Wake, Fault> {
        Ok(self.wake_after())
    }

    fn send(&mut self, round: u64) -> Vec<(Port, Tag)> {
        self.shadow += 1;
        self.sends[self.next].iter().map(|&port| (port, Tag { from: self.me, round, port })).collect()
    }

    fn receive(&mut self, round: u64, inbox: Vec<Delivery<Tag>>) -> Result<Wake, Fault> {
        assert_eq!(self.rounds[self.next], round);
        for d in inbox {
            self.got.insert((round, d.port, d.msg));
        }
        self.next += 1;
        Ok(self.wake_after())
    }
}

pub fn script(g: &WeightedGraph, seed: u64, horizon: u64) -> Vec<Scripted> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let density: f64 = rng.gen_range(0.1..0.9);
    (0..g.n())
        .map(|v| {
            let rounds: Vec<u64> = (1..=horizon).filter(|_| rng.gen_bool(density)).collect();
            let sends = rounds
                .iter()
                .map(|_| (0..g.degree(v)).filter(|_| rng.gen_bool(0.6)).collect())
                .collect();
            Scripted { me: v, rounds, sends, next: 0, got: BTreeSet::new(), shadow: 0 }
        })
        .collect()
}

/// Every delivery the sleeping model allows, computed directly from the
/// schedules.
pub fn reference(g: &WeightedGraph, nodes: &[Scripted]) -> Vec<BTreeSet<(u64, Port, Tag)>> {
    let mut out = vec![BTreeSet::new(); g.n()];
    for u in nodes {
        for (i, &r) in u.rounds.iter().enumerate() {
            for &p in &u.sends[i] {
                let link = &g.ports(u.me)[p];
                if nodes[link.to].rounds.contains(&r) {
                    let back = g.port_to(link.to, u.me).unwrap();
                    out[link.to].insert((r, back, Tag { from: u.me, round: r, port: p }));
                }
            }
        }
    }
    out
}

pub fn run(g: &WeightedGraph, nodes: Vec<Scripted>, ff: bool) -> RunOutcome<Scripted> {
    let cfg = EngineConfig { fast_forward: ff, drop_log: true, ..EngineConfig::for_graph(g) };
    Engine::new(g, cfg).run(nodes).unwrap()
}
