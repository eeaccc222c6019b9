//! One-call entry point over the three algorithms, shared by the command
//! line, the benchmarks and the acceptance tests.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::EngineError;
use crate::graph::{mst_oracle, WeightedGraph};
use crate::metrics::{ExperimentRecord, Metrics};
use crate::mst_deterministic::{run_deterministic_mst, DetOutcome};
use crate::mst_randomized::{run_randomized_mst, RandomizedParams};
use crate::mst_tradeoff::le_bfs::LeMode;
use crate::mst_tradeoff::{run_tradeoff_mst, useful_k, TradeoffOutcome, TradeoffParams};
use crate::outcome::{MstOutcome, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Rand,
    Det,
    Tradeoff,
}

impl Algo {
    pub const ALL: [Algo; 3] = [Algo::Rand, Algo::Det, Algo::Tradeoff];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Rand => "rand",
            Algo::Det => "det",
            Algo::Tradeoff => "tradeoff",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Algo::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| format!("unknown algorithm {s:?}"))
    }
}

/// Knobs only some algorithms read.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AlgoParams {
    /// Trade-off parameter; defaults to the low end of the useful range.
    pub k: Option<u32>,
    pub le_mode: LeMode,
    pub budget: Option<u64>,
}

#[derive(Debug, Clone)]
pub enum Report {
    Rand(MstOutcome),
    Det(DetOutcome),
    Tradeoff(TradeoffOutcome),
}

impl Report {
    pub fn outcome(&self) -> &MstOutcome {
        match self {
            Report::Rand(o) => o,
            Report::Det(d) => &d.outcome,
            Report::Tradeoff(t) => &t.outcome,
        }
    }

    pub fn k(&self) -> Option<u32> {
        match self {
            Report::Tradeoff(t) => Some(t.k),
            _ => None,
        }
    }
}

/// `k` used when none is given.
pub fn default_k(g: &WeightedGraph, diam: u64) -> u32 {
    useful_k(g.n() as u64, diam).0
}

pub fn run_algo(g: &WeightedGraph, algo: Algo, cfg: &RunConfig, p: AlgoParams, diam: u64) -> Result<Report, EngineError> {
    Ok(match algo {
        Algo::Rand => Report::Rand(run_randomized_mst(g, cfg, RandomizedParams::default())?),
        Algo::Det => Report::Det(run_deterministic_mst(g, cfg)?),
        Algo::Tradeoff => {
            let mut tp = TradeoffParams::new(p.k.unwrap_or_else(|| default_k(g, diam)));
            tp.mode = p.le_mode;
            tp.budget = p.budget;
            Report::Tradeoff(run_tradeoff_mst(g, cfg, tp)?)
        }
    })
}

/// What identifies a run in its record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLabel {
    pub run_id: String,
    /// Generator family, or the graph file path.
    pub source: String,
    pub algo: Algo,
    pub seed: u64,
}

/// Record of a finished run. The oracle verdict is recomputed here from the
/// edge set, never taken from the runner.
pub fn record(label: &RunLabel, g: &WeightedGraph, diam: u64, report: &Report, wall_seconds: f64) -> ExperimentRecord {
    let o = report.outcome();
    ExperimentRecord {
        oracle_match: Some(o.edges == mst_oracle(g)),
        k: report.k(),
        wall_seconds,
        ..base_record(label, g, diam)
    }
    .with_metrics(&Metrics::from_outcome(o))
}

/// Record of a run that failed; carries parameters and the error only.
pub fn failed_record(label: &RunLabel, g: &WeightedGraph, diam: u64, k: Option<u32>, error: String) -> ExperimentRecord {
    ExperimentRecord { k, error: Some(error), ..base_record(label, g, diam) }
}

fn base_record(label: &RunLabel, g: &WeightedGraph, diam: u64) -> ExperimentRecord {
    ExperimentRecord {
        run_id: label.run_id.clone(),
        algo: label.algo.name().into(),
        source: label.source.clone(),
        n: g.n() as u64,
        m: g.m() as u64,
        id_space: g.id_space(),
        diameter: diam,
        seed: label.seed,
        ..Default::default()
    }
}
