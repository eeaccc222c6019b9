//! Trade-off MST: awake time about `n / 2^k`, running time about
//! `D + 2^k + n / 2^k`, up to polylog factors.
//!
//! Three stages run back to back on global round numbers every node can
//! compute from `n`, `k`, `N` and the BFS height:
//!
//! 1. leader election and a BFS tree ([`le_bfs`]);
//! 2. `k` phases of controlled GHS ([`ghs`]), leaving at most `n / 2^k`
//!    fragments of diameter at most `5 * 2^k`;
//! 3. pipelined upcast of inter-fragment edges to the leader, which picks the
//!    remaining MST edges and streams them back ([`pipeline`]).

pub mod ghs;
pub mod le_bfs;
pub mod pipeline;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::engine::{BitSize, Delivery, EngineError, Fault, Protocol, Wake};
use crate::graph::{diameter, Port, WeightedGraph};
use crate::ldt::{Envelope, LdtNode, LdtState};
use crate::outcome::{collect_edges, LocalView, MstOutcome, PhaseRecorder, RunConfig};
use crate::unionfind::LabelUnionFind;

use ghs::{phase_ends, Ghs, PhaseRecord};
use le_bfs::{default_charge, draw_rank, oracle_bfs, stage_start, BfsInfo, FloodLe, LeMode, LeMsg};
use pipeline::{default_budget, CrossEdge, PipeMsg, PipeTimes, Pipeline};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TradeoffParams {
    pub k: u32,
    pub mode: LeMode,
    /// Upcast window; defaults to `2 * ceil(n / 2^k) + 1`.
    pub budget: Option<u64>,
    /// Awake rounds charged in oracle mode; defaults to `ceil(log2 n)^2`.
    pub charge: Option<u64>,
}

impl TradeoffParams {
    pub fn new(k: u32) -> Self {
        TradeoffParams { k, mode: LeMode::Oracle, budget: None, charge: None }
    }
}

/// The `k` range in which the bounds are meaningful.
pub fn useful_k(n: u64, diam: u64) -> (u32, u32) {
    let lg = |x: u64| if x <= 1 { 0 } else { 64 - (x - 1).leading_zeros() };
    let hi = lg(n);
    let lo = lg(n).div_ceil(2).max(lg(diam));
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Msg {
    Le(LeMsg),
    Ghs(Envelope<ghs::Msg>),
    Pipe(PipeMsg),
}

impl BitSize for Msg {
    fn bit_size(&self) -> u32 {
        2 + match self {
            Msg::Le(m) => m.bit_size(),
            Msg::Ghs(m) => m.bit_size(),
            Msg::Pipe(m) => m.bit_size(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Election,
    Ghs,
    Pipe,
}

#[derive(Debug)]
pub struct TradeoffNode {
    pub ghs: LdtNode<Ghs>,
    pub pipe: Option<Pipeline>,
    pub bfs: Option<BfsInfo>,
    stage: Stage,
    flood: Option<FloodLe>,
    charge: u64,
    t0: u64,
    budget: u64,
}

impl TradeoffNode {
    fn enter_ghs(&mut self, now: u64) -> Result<Wake, Fault> {
        self.stage = Stage::Ghs;
        self.ghs.program.set_start(self.t0);
        let w = self.ghs.start(now)?;
        if self.ghs.yielded() {
            return self.enter_pipe(now);
        }
        Ok(w)
    }

    fn enter_pipe(&mut self, now: u64) -> Result<Wake, Fault> {
        self.stage = Stage::Pipe;
        let bfs = self.bfs.clone().expect("tree known");
        let times = PipeTimes { swap: self.ghs.program.end_round() + 1, budget: self.budget, height: bfs.height };
        if times.swap <= now {
            return Err(Fault(format!("pipeline stage at {} planned in round {now}", times.swap)));
        }
        let p = &self.ghs.program;
        let pipe = Pipeline::new(bfs, times, p.st.fragment_id, p.view.weights.clone());
        let w = pipe.first_wake();
        self.pipe = Some(pipe);
        Ok(w)
    }

    /// All ports this node marked as MST edges.
    pub fn mst_ports(&self) -> BTreeSet<Port> {
        let mut s = self.ghs.program.mst.clone();
        if let Some(p) = &self.pipe {
            s.extend(p.chosen_ports());
        }
        s
    }
}

impl Protocol for TradeoffNode {
    type Msg = Msg;

    fn init(&mut self) -> Result<Wake, Fault> {
        match &self.flood {
            Some(f) if f.finished => {
                self.bfs = f.info();
                self.t0 = f.start_round().expect("finished");
                self.enter_ghs(0)
            }
            Some(_) => Ok(Wake::At(1)),
            None if self.charge > 0 => Ok(Wake::At(1)),
            None => self.enter_ghs(0),
        }
    }

    fn send(&mut self, round: u64) -> Vec<(Port, Msg)> {
        match self.stage {
            Stage::Election => match self.flood.as_mut() {
                Some(f) => f.send().into_iter().map(|(p, m)| (p, Msg::Le(m))).collect(),
                None => Vec::new(),
            },
            Stage::Ghs => self.ghs.send(round).into_iter().map(|(p, m)| (p, Msg::Ghs(m))).collect(),
            Stage::Pipe => {
                let pipe = self.pipe.as_mut().expect("pipeline set");
                pipe.send(round).into_iter().map(|(p, m)| (p, Msg::Pipe(m))).collect()
            }
        }
    }

    fn receive(&mut self, round: u64, inbox: Vec<Delivery<Msg>>) -> Result<Wake, Fault> {
        match self.stage {
            Stage::Election => {
                if let Some(f) = self.flood.as_mut() {
                    let msgs = inbox
                        .into_iter()
                        .filter_map(|d| match d.msg {
                            Msg::Le(m) => Some((d.port, m)),
                            _ => None,
                        })
                        .collect();
                    f.receive(round, msgs)?;
                    if !f.finished {
                        return Ok(Wake::At(round + 1));
                    }
                    self.bfs = f.info();
                    self.t0 = f.start_round().expect("finished");
                    return self.enter_ghs(round);
                }
                if round < self.charge {
                    return Ok(Wake::At(round + 1));
                }
                self.enter_ghs(round)
            }
            Stage::Ghs => {
                let msgs = inbox
                    .into_iter()
                    .filter_map(|d| match d.msg {
                        Msg::Ghs(m) => Some(Delivery { port: d.port, msg: m }),
                        _ => None,
                    })
                    .collect();
                let w = self.ghs.receive(round, msgs)?;
                if self.ghs.yielded() {
                    return self.enter_pipe(round);
                }
                Ok(w)
            }
            Stage::Pipe => {
                let msgs = inbox
                    .into_iter()
                    .filter_map(|d| match d.msg {
                        Msg::Pipe(m) => Some((d.port, m)),
                        _ => None,
                    })
                    .collect();
                self.pipe.as_mut().expect("pipeline set").receive(round, msgs)
            }
        }
    }
}

/// Fragment count, largest tree diameter and smallest size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FragmentStats {
    pub count: usize,
    pub max_diameter: u64,
    pub min_size: usize,
}

pub fn fragment_stats(g: &WeightedGraph, states: &[&LdtState]) -> FragmentStats {
    let n = states.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (v, s) in states.iter().enumerate() {
        if let Some(p) = s.parent {
            let u = g.ports(v)[p].to;
            adj[v].push(u);
            adj[u].push(v);
        }
    }
    let far = |src: usize| -> (usize, u64, Vec<usize>) {
        let mut dist = BTreeMap::from([(src, 0u64)]);
        let mut q = VecDeque::from([src]);
        let mut best = (src, 0);
        while let Some(v) = q.pop_front() {
            let d = dist[&v];
            if d > best.1 {
                best = (v, d);
            }
            for &u in &adj[v] {
                if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(u) {
                    e.insert(d + 1);
                    q.push_back(u);
                }
            }
        }
        (best.0, best.1, dist.into_keys().collect())
    };
    let mut seen = vec![false; n];
    let mut stats = FragmentStats { count: 0, max_diameter: 0, min_size: usize::MAX };
    for v in 0..n {
        if seen[v] {
            continue;
        }
        let (a, _, members) = far(v);
        let (_, d, _) = far(a);
        for &m in &members {
            seen[m] = true;
        }
        stats.count += 1;
        stats.max_diameter = stats.max_diameter.max(d);
        stats.min_size = stats.min_size.min(members.len());
    }
    if n == 0 {
        stats.min_size = 0;
    }
    stats
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffOutcome {
    pub outcome: MstOutcome,
    pub k: u32,
    pub leader: u64,
    pub bfs_height: u64,
    pub budget: u64,
    /// Last round of leader election, of controlled GHS, and of the run.
    pub stage_ends: [u64; 3],
    /// Per stage, awake rounds each node spent in it.
    pub stage_awake: Vec<Vec<u64>>,
    /// Fragment shape after each GHS phase.
    pub phase_stats: Vec<FragmentStats>,
    /// Fragment shape when controlled GHS ends.
    pub after_ghs: FragmentStats,
    pub records: Vec<PhaseRecord>,
    /// Most edges any node forwarded in the upcast.
    pub max_forwards: u64,
    /// Most upcast-window rounds any node needed.
    pub max_window_used: u64,
    /// Every inter-fragment MST edge reached the root.
    pub pipeline_complete: bool,
    pub warnings: Vec<String>,
}

/// Weights of the MST edges between the given fragments.
fn fragment_mst(g: &WeightedGraph, fid: &[u64]) -> BTreeSet<u64> {
    let mut es: Vec<(u64, u64, u64)> = g
        .edges()
        .iter()
        .filter(|e| fid[e.u] != fid[e.v])
        .map(|e| (e.w, fid[e.u], fid[e.v]))
        .collect();
    es.sort_unstable();
    let mut uf = LabelUnionFind::default();
    es.into_iter().filter(|&(_, a, b)| uf.union(a, b)).map(|(w, _, _)| w).collect()
}

pub fn run_tradeoff_mst(g: &WeightedGraph, cfg: &RunConfig, params: TradeoffParams) -> Result<TradeoffOutcome, EngineError> {
    let n = g.n() as u64;
    let k = params.k;
    let trees = oracle_bfs(g, cfg.seed);
    let height = trees.first().map_or(0, |t| t.height);
    let charge = match params.mode {
        LeMode::Flood => 0,
        LeMode::Oracle => params.charge.unwrap_or_else(|| default_charge(n)),
    };
    let budget = params.budget.unwrap_or_else(|| default_budget(n, k));
    let t0 = stage_start(height, charge);
    let mut warnings = Vec::new();
    let (lo, hi) = useful_k(n, diameter(g) as u64);
    if k < lo || k > hi {
        warnings.push(format!("k = {k} outside the useful range [{lo}, {hi}]"));
    }
    let views = LocalView::all(g);
    let nodes: Vec<TradeoffNode> = views
        .into_iter()
        .zip(trees)
        .map(|(v, t)| {
            let flood = (params.mode == LeMode::Flood).then(|| FloodLe::new(v.id, draw_rank(cfg.seed, v.id, n), v.degree()));
            TradeoffNode {
                bfs: (params.mode == LeMode::Oracle).then_some(t),
                ghs: LdtNode::new(Ghs::new(v, k)),
                pipe: None,
                stage: Stage::Election,
                flood,
                charge,
                t0,
                budget,
            }
        })
        .collect();
    let ends = phase_ends(t0, k, g.id_space());
    let ghs_end = ends.last().copied().unwrap_or(t0 - 1);
    let mut checkpoints = vec![t0 - 1];
    checkpoints.extend(&ends);
    let mut rec = PhaseRecorder::new(g.n());
    let mut phase_stats = Vec::new();
    let mut snapshots: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    let out = cfg.build_engine(g)?.with_checkpoints(checkpoints).run_observed(
        nodes,
        &mut |round, nodes: &[TradeoffNode], awake| {
            let states: Vec<&LdtState> = nodes.iter().map(|x| &x.ghs.program.st).collect();
            rec.observe(g, round, &states, awake);
            if round >= t0 {
                phase_stats.push(fragment_stats(g, &states));
            }
            snapshots.insert(round, awake.to_vec());
        },
    )?;
    let states: Vec<&LdtState> = out.nodes.iter().map(|x| &x.ghs.program.st).collect();
    let total = out.stats.total_rounds;
    rec.finish(g, total, &states, &out.stats.awake);

    let zero = vec![0; g.n()];
    let at = |r: u64| snapshots.get(&r).cloned().unwrap_or_else(|| zero.clone());
    let (a1, a2) = (at(t0 - 1), at(ghs_end));
    let a3 = &out.stats.awake;
    let stage_awake = vec![
        a1.clone(),
        a2.iter().zip(&a1).map(|(x, y)| x - y).collect(),
        a3.iter().zip(&a2).map(|(x, y)| x - y).collect(),
    ];
    let after_ghs = match phase_stats.last() {
        Some(s) if k > 0 => *s,
        _ => FragmentStats { count: g.n(), max_diameter: 0, min_size: usize::from(g.n() > 0) },
    };

    let root = out.nodes.iter().find_map(|x| x.pipe.as_ref().filter(|_| x.bfs.as_ref().is_some_and(|b| b.parent.is_none())));
    let fids: Vec<u64> = states.iter().map(|s| s.fragment_id).collect();
    let pipeline_complete = match root {
        Some(p) => {
            let got: BTreeSet<u64> = p.collected.iter().map(|e: &CrossEdge| e.weight).collect();
            // Fragment ids do not change during the pipeline stage.
            fragment_mst(g, &fids).is_subset(&got)
        }
        None => g.n() <= 1,
    };
    let max_forwards = out.nodes.iter().filter_map(|x| x.pipe.as_ref().map(|p| p.forwards)).max().unwrap_or(0);
    let max_window_used = out.nodes.iter().filter_map(|x| x.pipe.as_ref().map(|p| p.used)).max().unwrap_or(0);
    let marks: Vec<BTreeSet<Port>> = out.nodes.iter().map(TradeoffNode::mst_ports).collect();
    let (edges, one_sided) = collect_edges(g, marks.iter());
    let records = out.nodes.iter().flat_map(|x| x.ghs.program.records.iter().cloned()).collect();
    let leader = out.nodes.first().and_then(|x| x.bfs.as_ref()).map_or(0, |b| b.leader);
    let phases = k as u64;
    Ok(TradeoffOutcome {
        outcome: MstOutcome {
            edges,
            stats: out.stats,
            trajectory: rec.trajectory,
            phase_awake: rec.phase_awake,
            phases,
            ldt_violations: rec.violations,
            one_sided_edges: one_sided,
        },
        k,
        leader,
        bfs_height: height,
        budget,
        stage_ends: [t0 - 1, ghs_end, total],
        stage_awake,
        phase_stats,
        after_ghs,
        records,
        max_forwards,
        max_window_used,
        pipeline_complete,
        warnings,
    })
}
