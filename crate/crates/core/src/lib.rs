//! Minimum spanning tree algorithms for the sleeping model of distributed
//! computation, together with the round-by-round simulator they run on.

pub mod engine;
pub mod experiment;
pub mod graph;
pub mod ldt;
pub mod metrics;
pub mod mst_deterministic;
pub mod mst_randomized;
pub mod mst_tradeoff;
pub mod outcome;
pub mod unionfind;

pub use engine::{Engine, EngineConfig, EngineError, EngineStats, Wake};
pub use experiment::{run_algo, Algo, AlgoParams, Report};
pub use graph::{mst_oracle, Edge, EdgeSet, GraphError, Port, WeightedGraph};
pub use metrics::{ExperimentRecord, Metrics};
pub use mst_tradeoff::le_bfs::LeMode;
pub use outcome::{MstOutcome, RunConfig};
