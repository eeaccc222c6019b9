//! Plumbing shared by the MST runners: per-node local views, phase
//! checkpoints and the collected result of a run.

use std::collections::{BTreeSet, HashSet};

use serde::Serialize;

use std::path::PathBuf;

use crate::engine::{Engine, EngineConfig, EngineError, EngineStats};
use crate::graph::{EdgeSet, Port, WeightedGraph};
use crate::ldt::{check_ldt, LdtState};

/// What a node knows at start: its own ID, the weights of its ports and the
/// global parameters `n` and `N`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalView {
    pub id: u64,
    pub n: u64,
    pub id_space: u64,
    pub weights: Vec<u64>,
}

impl LocalView {
    pub fn all(g: &WeightedGraph) -> Vec<LocalView> {
        (0..g.n())
            .map(|v| LocalView {
                id: g.id(v),
                n: g.n() as u64,
                id_space: g.id_space(),
                weights: g.ports(v).iter().map(|l| l.weight).collect(),
            })
            .collect()
    }

    pub fn degree(&self) -> usize {
        self.weights.len()
    }

    /// Port with the given weight (weights are distinct).
    pub fn port_of_weight(&self, w: u64) -> Option<Port> {
        self.weights.iter().position(|&x| x == w)
    }
}

/// Everything a runner reports besides the engine counters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MstOutcome {
    pub edges: EdgeSet,
    pub stats: EngineStats,
    /// Distinct fragments at each phase boundary, starting with `n`.
    pub trajectory: Vec<usize>,
    /// Per phase, awake rounds each node spent in it.
    pub phase_awake: Vec<Vec<u64>>,
    pub phases: u64,
    /// Tree-invariant violations seen at phase boundaries.
    pub ldt_violations: Vec<String>,
    /// Edges marked by only one of their endpoints.
    pub one_sided_edges: usize,
}

/// Split-mix style hash of a few words, used to derive independent streams.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    h
}

/// Union of the ports each node marked, and the number of edges only one
/// side marked.
pub fn collect_edges<'a>(g: &WeightedGraph, marks: impl Iterator<Item = &'a BTreeSet<Port>>) -> (EdgeSet, usize) {
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    let mut twice: HashSet<(usize, usize)> = HashSet::new();
    for (v, ports) in marks.enumerate() {
        for &p in ports {
            let u = g.ports(v)[p].to;
            let key = (v.min(u), v.max(u));
            if !seen.insert(key) {
                twice.insert(key);
            }
        }
    }
    let one_sided = seen.len() - twice.len();
    let mut es = EdgeSet::default();
    for (a, b) in seen {
        es.insert(a, b);
    }
    (es, one_sided)
}

/// Records fragment counts, awake deltas and invariant checks at phase
/// boundaries.
#[derive(Debug, Default)]
pub struct PhaseRecorder {
    pub trajectory: Vec<usize>,
    pub phase_awake: Vec<Vec<u64>>,
    pub violations: Vec<String>,
    last_awake: Vec<u64>,
}

impl PhaseRecorder {
    pub fn new(n: usize) -> Self {
        PhaseRecorder { trajectory: vec![n], phase_awake: Vec::new(), violations: Vec::new(), last_awake: vec![0; n] }
    }

    pub fn observe(&mut self, g: &WeightedGraph, round: u64, states: &[&LdtState], awake: &[u64]) {
        let fids: HashSet<u64> = states.iter().map(|s| s.fragment_id).collect();
        self.trajectory.push(fids.len());
        self.phase_awake.push(awake.iter().zip(&self.last_awake).map(|(a, b)| a - b).collect());
        self.last_awake = awake.to_vec();
        if let Err(e) = check_ldt(g, states) {
            self.violations.push(format!("round {round}: {e}"));
        }
    }

    /// Close a run that ended between two phase boundaries.
    pub fn finish(&mut self, g: &WeightedGraph, round: u64, states: &[&LdtState], awake: &[u64]) {
        if awake != self.last_awake.as_slice() {
            self.observe(g, round, states, awake);
        }
    }
}

/// Engine settings plus algorithm knobs common to all runners.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub engine: EngineConfig,
    pub seed: u64,
    /// Write a JSON-lines trace of every awake node-round here.
    pub trace: Option<PathBuf>,
}

impl RunConfig {
    pub fn for_graph(g: &WeightedGraph, seed: u64) -> Self {
        RunConfig { engine: EngineConfig::for_graph(g).with_seed(seed), seed, trace: None }
    }

    /// Engine for `g`, writing the trace if one was asked for.
    pub fn build_engine<'g>(&self, g: &'g WeightedGraph) -> Result<Engine<'g>, EngineError> {
        let engine = Engine::new(g, self.engine.clone());
        match &self.trace {
            None => Ok(engine),
            Some(path) => {
                let f = std::fs::File::create(path)
                    .map_err(|e| EngineError::InvalidConfig(format!("trace file {}: {e}", path.display())))?;
                Ok(engine.with_trace(Box::new(std::io::BufWriter::new(f))))
            }
        }
    }
}
