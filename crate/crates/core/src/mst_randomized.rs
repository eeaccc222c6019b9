//! Randomized MST with `O(log n)` awake rounds per node.
//!
//! Each phase uses three blocks of `2n+1` rounds:
//!
//! 1. broadcast "find", refresh neighbour fragment ids, upcast the lightest
//!    outgoing edge;
//! 2. broadcast the MOE and the root's coin, exchange coins across fragment
//!    boundaries, upcast the merge path from the tails endpoint;
//! 3. broadcast the merge relabelling, then commit it.
//!
//! Only MOEs from a tails fragment into a heads fragment are used, so the
//! merging subgraphs are stars centred at heads fragments.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{bits_of, BitSize, EngineError, Fault};
use crate::graph::{Port, WeightedGraph};
use crate::ldt::{block_len, BlockPlan, LdtNode, LdtProgram, LdtState, MergeUp, NextBlock, SideMsg};
use crate::outcome::{collect_edges, mix_seed, LocalView, MstOutcome, PhaseRecorder, RunConfig};

pub const BLOCKS_PER_PHASE: u64 = 3;

/// `4 * ceil(log_{4/3} n) + 1`.
pub fn phase_count(n: u64) -> u64 {
    if n <= 1 {
        return 1;
    }
    let l = ((n as f64).ln() / (4.0f64 / 3.0).ln()).ceil() as u64;
    4 * l + 1
}

/// Closed-form round count of a full run.
pub fn total_rounds(n: u64, phases: u64) -> u64 {
    phases * BLOCKS_PER_PHASE * block_len(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Msg {
    Find,
    Refresh { level: u64 },
    /// Lightest outgoing edge weight in the subtree, `None` for none.
    Candidate(Option<u64>),
    MoeCoin { moe: Option<u64>, heads: bool },
    Announce { level: u64, heads: bool, moe_edge: bool },
    Merge(MergeUp),
}

fn opt_bits(x: Option<u64>) -> u32 {
    x.map_or(1, |v| 1 + bits_of(v))
}

impl BitSize for Msg {
    fn bit_size(&self) -> u32 {
        3 + match *self {
            Msg::Find => 0,
            Msg::Refresh { level } => bits_of(level),
            Msg::Candidate(w) => opt_bits(w),
            Msg::MoeCoin { moe, .. } => opt_bits(moe) + 1,
            Msg::Announce { level, .. } => bits_of(level) + 2,
            Msg::Merge(m) => m.bit_size(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandNode {
    pub view: LocalView,
    pub st: LdtState,
    pub mst: BTreeSet<Port>,
    seed: u64,
    phases: u64,
    phase: u64,
    block: u64,
    /// Index within the phase of the block being executed.
    cur: u64,
    nbr_fid: Vec<u64>,
    candidate: Option<u64>,
    moe: Option<u64>,
    heads: bool,
    /// This node is the tails endpoint of a valid MOE.
    tails_endpoint: bool,
    pub done: bool,
}

impl RandNode {
    pub fn new(view: LocalView, seed: u64, phases: u64) -> Self {
        let deg = view.degree();
        RandNode {
            st: LdtState::singleton(view.id),
            view,
            mst: BTreeSet::new(),
            seed,
            phases,
            phase: 1,
            block: 0,
            cur: 0,
            nbr_fid: vec![0; deg],
            candidate: None,
            moe: None,
            heads: false,
            tails_endpoint: false,
            done: false,
        }
    }

    fn s(&self) -> u64 {
        self.view.n
    }

    fn block_start(&self, phase: u64, block: u64) -> u64 {
        ((phase - 1) * BLOCKS_PER_PHASE + block) * block_len(self.s()) + 1
    }

    fn end_round(&self) -> u64 {
        total_rounds(self.view.n, self.phases)
    }

    fn flip(&self) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[self.seed, self.phase, self.st.fragment_id]));
        rng.gen_bool(0.5)
    }

    fn moe_port(&self) -> Option<Port> {
        self.moe.and_then(|w| self.view.port_of_weight(w))
    }
}

impl LdtProgram for RandNode {
    type Msg = Msg;

    fn ldt(&self) -> &LdtState {
        &self.st
    }

    fn next_block(&mut self, _now: u64) -> Result<NextBlock, Fault> {
        if self.done || self.phase > self.phases {
            return Ok(NextBlock::HaltAt(self.end_round()));
        }
        let start = self.block_start(self.phase, self.block);
        let plan = BlockPlan::new(self.s(), start);
        let plan = match self.block {
            0 | 1 => plan.down().side().up(),
            _ => plan.down(),
        };
        self.cur = self.block;
        self.block += 1;
        if self.block == BLOCKS_PER_PHASE {
            self.block = 0;
            self.phase += 1;
        }
        Ok(NextBlock::Block(plan))
    }

    fn down(&mut self, from_parent: Option<Msg>) -> Result<Vec<(Port, Msg)>, Fault> {
        let out = match self.cur {
            0 => {
                self.tails_endpoint = false;
                self.candidate = None;
                Msg::Find
            }
            1 => {
                let (moe, heads) = if self.st.is_root() {
                    let heads = self.flip();
                    (self.candidate, heads)
                } else {
                    match from_parent {
                        Some(Msg::MoeCoin { moe, heads }) => (moe, heads),
                        other => return Err(Fault(format!("expected MOE broadcast, got {other:?}"))),
                    }
                };
                self.moe = moe;
                self.heads = heads;
                if moe.is_none() {
                    self.done = true;
                }
                Msg::MoeCoin { moe, heads }
            }
            _ => {
                let from = match from_parent {
                    Some(Msg::Merge(m)) => Some(m),
                    _ => None,
                };
                match self.st.merge_from_parent(from) {
                    Some(m) => Msg::Merge(m),
                    None => return Ok(Vec::new()),
                }
            }
        };
        Ok(self.st.children.iter().map(|&c| (c, out)).collect())
    }

    fn side_send(&mut self) -> Vec<(Port, Msg)> {
        let ports = 0..self.view.degree();
        if self.cur == 0 {
            let level = self.st.level;
            ports.map(|p| (p, Msg::Refresh { level })).collect()
        } else {
            let moe_port = self.moe_port();
            let (level, heads) = (self.st.level, self.heads);
            ports.map(|p| (p, Msg::Announce { level, heads, moe_edge: Some(p) == moe_port })).collect()
        }
    }

    fn side_recv(&mut self, msgs: Vec<SideMsg<Msg>>) -> Result<(), Fault> {
        if self.cur == 0 {
            for m in msgs {
                self.nbr_fid[m.port] = m.fragment_id;
            }
            return Ok(());
        }
        if self.done {
            return Ok(());
        }
        let moe_port = self.moe_port();
        for m in msgs {
            let Msg::Announce { level, heads, moe_edge } = m.body else { continue };
            if Some(m.port) == moe_port && !self.heads && heads {
                self.mst.insert(m.port);
                self.st.merge_at_endpoint(m.port, m.fragment_id, level);
                self.tails_endpoint = true;
            }
            if moe_edge && self.heads && !heads {
                self.mst.insert(m.port);
                self.st.adopt(m.port);
            }
        }
        Ok(())
    }

    fn up(&mut self, from_children: Vec<(Port, Msg)>) -> Result<Option<Msg>, Fault> {
        if self.cur == 0 {
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
            return Ok(Some(Msg::Candidate(best)));
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

    fn block_end(&mut self) -> Result<(), Fault> {
        if self.cur == 2 {
            self.st.apply_pending();
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RandomizedParams {
    /// Replaces the default phase count (testing only).
    pub phases: Option<u64>,
}

pub fn run_randomized_mst(g: &WeightedGraph, cfg: &RunConfig, params: RandomizedParams) -> Result<MstOutcome, EngineError> {
    let n = g.n() as u64;
    let phases = params.phases.unwrap_or_else(|| phase_count(n));
    let nodes: Vec<LdtNode<RandNode>> = LocalView::all(g)
        .into_iter()
        .map(|v| LdtNode::new(RandNode::new(v, cfg.seed, phases)))
        .collect();
    let per_phase = BLOCKS_PER_PHASE * block_len(n);
    let checkpoints = (1..=phases).map(|p| p * per_phase).collect();
    let mut rec = PhaseRecorder::new(g.n());
    let out = cfg.build_engine(g)?.with_checkpoints(checkpoints).run_observed(
        nodes,
        &mut |round, nodes: &[LdtNode<RandNode>], awake| {
            let states: Vec<&LdtState> = nodes.iter().map(|x| &x.program.st).collect();
            rec.observe(g, round, &states, awake);
        },
    )?;
    let (edges, one_sided) = collect_edges(g, out.nodes.iter().map(|x| &x.program.mst));
    Ok(MstOutcome {
        edges,
        stats: out.stats,
        trajectory: rec.trajectory,
        phase_awake: rec.phase_awake,
        phases,
        ldt_violations: rec.violations,
        one_sided_edges: one_sided,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_path, gen_random_connected, gen_ring, mst_oracle};

    #[test]
    fn phase_count_formula() {
        assert_eq!(phase_count(2), 13);
        assert_eq!(phase_count(16), 4 * 10 + 1);
        assert_eq!(phase_count(1024), 4 * 25 + 1);
    }

    #[test]
    fn two_nodes_find_the_edge() {
        let g = gen_path(2, 1).unwrap();
        let out = run_randomized_mst(&g, &RunConfig::for_graph(&g, 3), RandomizedParams::default()).unwrap();
        assert_eq!(out.edges, mst_oracle(&g));
    }

    #[test]
    fn ring_and_random_graphs_match_oracle() {
        for seed in 0..5 {
            let g = gen_ring(16, seed).unwrap();
            let out = run_randomized_mst(&g, &RunConfig::for_graph(&g, seed), RandomizedParams::default()).unwrap();
            assert_eq!(out.edges, mst_oracle(&g));
            assert!(out.ldt_violations.is_empty(), "{:?}", out.ldt_violations);
            assert_eq!(out.stats.total_rounds, total_rounds(16, phase_count(16)));
            let g = gen_random_connected(40, 4.0, seed).unwrap();
            let out = run_randomized_mst(&g, &RunConfig::for_graph(&g, seed), RandomizedParams::default()).unwrap();
            assert_eq!(out.edges, mst_oracle(&g));
            assert_eq!(out.one_sided_edges, 0);
        }
    }
}
