//! Synchronous CONGEST execution under the sleeping model.
//!
//! Every node is a [`Protocol`] state machine. A round has a send step and a
//! receive step: all awake nodes emit their messages, the engine delivers a
//! message only when both endpoints are awake in that round (everything else
//! is lost), then every awake node consumes its inbox and names the next
//! round it wants to be awake in. Rounds in which nobody is awake are skipped
//! by jumping straight to the earliest requested wake-up; they still count
//! toward the round total.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{Port, WeightedGraph};

/// Bits needed to write `v` in binary (at least one).
pub fn bits_of(v: u64) -> u32 {
    (64 - v.leading_zeros()).max(1)
}

/// `ceil(log2 x)`, at least 1.
pub fn ceil_log2(x: u64) -> u32 {
    if x <= 2 {
        1
    } else {
        64 - (x - 1).leading_zeros()
    }
}

/// Number of bits a message is charged for congestion accounting.
pub trait BitSize {
    fn bit_size(&self) -> u32;
}

/// What a node does after a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wake {
    /// Sleep until the given (strictly later) round.
    At(u64),
    /// Terminate now.
    Halt,
    /// Sleep and terminate at the given round without waking again.
    HaltAt(u64),
}

/// A protocol-level failure reported by a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fault(pub String);

impl<T: Into<String>> From<T> for Fault {
    fn from(s: T) -> Self {
        Fault(s.into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery<M> {
    /// Port at the receiver on which the message arrived.
    pub port: Port,
    pub msg: M,
}

pub trait Protocol {
    type Msg: Clone + BitSize;

    /// First wake-up. All nodes start awake, so most protocols return
    /// `Wake::At(1)`.
    fn init(&mut self) -> Result<Wake, Fault>;

    /// Send step of an awake round.
    fn send(&mut self, round: u64) -> Vec<(Port, Self::Msg)>;

    /// Receive/compute step of an awake round.
    fn receive(&mut self, round: u64, inbox: Vec<Delivery<Self::Msg>>) -> Result<Wake, Fault>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EngineConfig {
    /// Congestion budget `B` in bits per edge, direction and round.
    pub budget_bits: u32,
    pub max_rounds: u64,
    pub seed: u64,
    /// Record every lost message.
    pub drop_log: bool,
    /// Jump over rounds in which no node is awake.
    pub fast_forward: bool,
}

pub const DEFAULT_MAX_ROUNDS: u64 = 1_000_000_000;

impl EngineConfig {
    /// Defaults for `g`: `B = 128 * ceil(log2 N)`, a cap of 10^9 rounds.
    pub fn for_graph(g: &WeightedGraph) -> Self {
        EngineConfig {
            budget_bits: 128 * ceil_log2(g.id_space()),
            max_rounds: DEFAULT_MAX_ROUNDS,
            seed: 0,
            drop_log: false,
            fast_forward: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("congestion violation in round {round}: node {node} port {port} carries {bits} bits > {budget}")]
    CongestionViolation { round: u64, node: usize, port: Port, bits: u32, budget: u32 },
    #[error("no termination within {max_rounds} rounds")]
    NonTermination { max_rounds: u64 },
    #[error("node {node} failed in round {round}: {msg}")]
    Protocol { node: usize, round: u64, msg: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DropRecord {
    pub round: u64,
    pub from: usize,
    pub to: usize,
    pub bits: u32,
}

/// Raw counters gathered by the engine.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EngineStats {
    /// Awake rounds per node.
    pub awake: Vec<u64>,
    /// Last round of the run (awake or termination round).
    pub total_rounds: u64,
    pub messages_sent: u64,
    pub bits_sent: u64,
    pub messages_delivered: u64,
    pub messages_dropped: u64,
    /// Largest number of bits sent over one edge in one direction in one round.
    pub max_edge_round_bits: u32,
}

#[derive(Debug)]
pub struct RunOutcome<P> {
    pub nodes: Vec<P>,
    pub stats: EngineStats,
    pub drops: Vec<DropRecord>,
    /// Number of loop iterations the scheduler performed.
    pub scheduling_steps: u64,
}

#[derive(Serialize)]
struct TraceLink {
    #[serde(rename = "to", skip_serializing_if = "Option::is_none")]
    to: Option<usize>,
    #[serde(rename = "from", skip_serializing_if = "Option::is_none")]
    from: Option<usize>,
    bits: u32,
}

#[derive(Serialize)]
struct TraceRecord {
    round: u64,
    node: usize,
    sent: Vec<TraceLink>,
    received: Vec<TraceLink>,
}

/// Callback invoked at checkpoint rounds with all node states and the awake
/// counters so far.
pub type Observer<'a, P> = dyn FnMut(u64, &[P], &[u64]) + 'a;

pub struct Engine<'g> {
    graph: &'g WeightedGraph,
    cfg: EngineConfig,
    trace: Option<Box<dyn Write + 'g>>,
    checkpoints: Vec<u64>,
}

impl<'g> Engine<'g> {
    pub fn new(graph: &'g WeightedGraph, cfg: EngineConfig) -> Self {
        Engine { graph, cfg, trace: None, checkpoints: Vec::new() }
    }

    /// Emit one JSON line per awake node-round.
    pub fn with_trace(mut self, sink: Box<dyn Write + 'g>) -> Self {
        self.trace = Some(sink);
        self
    }

    /// Rounds after which the observer sees the node states. A checkpoint
    /// `c` is reported once round `c` is complete.
    pub fn with_checkpoints(mut self, mut rounds: Vec<u64>) -> Self {
        rounds.sort_unstable();
        rounds.dedup();
        self.checkpoints = rounds;
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn run<P: Protocol>(self, nodes: Vec<P>) -> Result<RunOutcome<P>, EngineError> {
        self.run_observed(nodes, &mut |_, _, _| {})
    }

    pub fn run_observed<P: Protocol>(
        mut self,
        mut nodes: Vec<P>,
        observer: &mut Observer<'_, P>,
    ) -> Result<RunOutcome<P>, EngineError> {
        let g = self.graph;
        let n = g.n();
        if nodes.len() != n {
            return Err(EngineError::InvalidConfig(format!("{} protocols for {n} nodes", nodes.len())));
        }
        if self.cfg.max_rounds == 0 {
            return Err(EngineError::InvalidConfig("max_rounds must be >= 1".into()));
        }
        if self.cfg.budget_bits < ceil_log2(g.id_space()) {
            return Err(EngineError::InvalidConfig("budget below ceil(log2 N) bits".into()));
        }
        let mut stats = EngineStats { awake: vec![0; n], ..Default::default() };
        let mut drops = Vec::new();
        let mut agenda: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        let mut halted = vec![false; n];
        let mut last_round = 0u64;

        let schedule = |v: usize,
                            now: u64,
                            wake: Wake,
                            agenda: &mut BTreeMap<u64, Vec<usize>>,
                            halted: &mut Vec<bool>,
                            last_round: &mut u64|
         -> Result<(), EngineError> {
            match wake {
                Wake::At(r) if r > now => agenda.entry(r).or_default().push(v),
                Wake::At(r) => {
                    return Err(EngineError::Protocol {
                        node: v,
                        round: now,
                        msg: format!("asked to wake in round {r}, not after {now}"),
                    })
                }
                Wake::Halt => {
                    halted[v] = true;
                    *last_round = (*last_round).max(now);
                }
                Wake::HaltAt(r) => {
                    halted[v] = true;
                    *last_round = (*last_round).max(r.max(now));
                }
            }
            Ok(())
        };

        for (v, node) in nodes.iter_mut().enumerate() {
            let wake = node
                .init()
                .map_err(|f| EngineError::Protocol { node: v, round: 0, msg: f.0 })?;
            schedule(v, 0, wake, &mut agenda, &mut halted, &mut last_round)?;
        }

        let mut next_checkpoint = 0usize;
        let mut awake_flag = vec![false; n];
        let mut inboxes: Vec<Vec<Delivery<P::Msg>>> = (0..n).map(|_| Vec::new()).collect();
        let mut steps = 0u64;
        let mut round = 0u64;

        loop {
            let Some((&first, _)) = agenda.first_key_value() else { break };
            steps += 1;
            let r = if self.cfg.fast_forward { first } else { round + 1 };
            round = r;
            if r > self.cfg.max_rounds {
                return Err(EngineError::NonTermination { max_rounds: self.cfg.max_rounds });
            }
            while next_checkpoint < self.checkpoints.len() && self.checkpoints[next_checkpoint] < r {
                observer(self.checkpoints[next_checkpoint], &nodes, &stats.awake);
                next_checkpoint += 1;
            }
            if r < first {
                continue;
            }
            let mut awake = agenda.pop_first().map(|(_, v)| v).unwrap_or_default();
            awake.sort_unstable();
            for &v in &awake {
                awake_flag[v] = true;
            }

            let mut sent_log: Vec<Vec<TraceLink>> = Vec::new();
            if self.trace.is_some() {
                sent_log = (0..awake.len()).map(|_| Vec::new()).collect();
            }
            let mut recv_bits: Vec<Vec<(usize, u32)>> = Vec::new();
            if self.trace.is_some() {
                recv_bits = (0..n).map(|_| Vec::new()).collect();
            }
            for (i, &v) in awake.iter().enumerate() {
                let out = nodes[v].send(r);
                let mut per_port: BTreeMap<Port, u32> = BTreeMap::new();
                for (port, msg) in out {
                    let Some(link) = g.ports(v).get(port) else {
                        return Err(EngineError::Protocol {
                            node: v,
                            round: r,
                            msg: format!("send on missing port {port}"),
                        });
                    };
                    let bits = msg.bit_size();
                    let on_edge = per_port.entry(port).or_insert(0);
                    *on_edge += bits;
                    if *on_edge > self.cfg.budget_bits {
                        return Err(EngineError::CongestionViolation {
                            round: r,
                            node: v,
                            port,
                            bits: *on_edge,
                            budget: self.cfg.budget_bits,
                        });
                    }
                    stats.max_edge_round_bits = stats.max_edge_round_bits.max(*on_edge);
                    stats.messages_sent += 1;
                    stats.bits_sent += bits as u64;
                    if self.trace.is_some() {
                        sent_log[i].push(TraceLink { to: Some(link.to), from: None, bits });
                    }
                    if awake_flag[link.to] && !halted[link.to] {
                        stats.messages_delivered += 1;
                        if self.trace.is_some() {
                            recv_bits[link.to].push((v, bits));
                        }
                        inboxes[link.to].push(Delivery { port: link.rev, msg });
                    } else {
                        stats.messages_dropped += 1;
                        if self.cfg.drop_log {
                            drops.push(DropRecord { round: r, from: v, to: link.to, bits });
                        }
                    }
                }
            }

            for (i, &v) in awake.iter().enumerate() {
                let inbox = std::mem::take(&mut inboxes[v]);
                stats.awake[v] += 1;
                let wake = nodes[v]
                    .receive(r, inbox)
                    .map_err(|f| EngineError::Protocol { node: v, round: r, msg: f.0 })?;
                if let Some(sink) = self.trace.as_mut() {
                    let rec = TraceRecord {
                        round: r,
                        node: v,
                        sent: std::mem::take(&mut sent_log[i]),
                        received: recv_bits[v]
                            .iter()
                            .map(|&(from, bits)| TraceLink { to: None, from: Some(from), bits })
                            .collect(),
                    };
                    let line = serde_json::to_string(&rec).expect("trace record serializes");
                    writeln!(sink, "{line}").map_err(|e| EngineError::InvalidConfig(format!("trace sink: {e}")))?;
                }
                schedule(v, r, wake, &mut agenda, &mut halted, &mut last_round)?;
            }
            for &v in &awake {
                awake_flag[v] = false;
            }
            last_round = last_round.max(r);
        }

        stats.total_rounds = last_round;
        while next_checkpoint < self.checkpoints.len() && self.checkpoints[next_checkpoint] <= last_round {
            observer(self.checkpoints[next_checkpoint], &nodes, &stats.awake);
            next_checkpoint += 1;
        }
        if let Some(sink) = self.trace.as_mut() {
            let _ = sink.flush();
        }
        Ok(RunOutcome { nodes, stats, drops, scheduling_steps: steps })
    }
}
