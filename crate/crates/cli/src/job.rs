use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use serde_json::{json, Value};
use sleepmst_core::experiment::{failed_record, record, RunLabel};
use sleepmst_core::graph::diameter;
use sleepmst_core::mst_deterministic::Color;
use sleepmst_core::{run_algo, Algo, AlgoParams, ExperimentRecord, Report, RunConfig};

use crate::graphs::Source;

pub const MAX_ROUNDS_VAR: &str = "SLEEPMST_MAX_ROUNDS";

/// Engine cap from the environment, if set.
pub fn max_rounds_override() -> Result<Option<u64>, String> {
    match std::env::var(MAX_ROUNDS_VAR) {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .ok()
            .filter(|&r| r >= 1)
            .map(Some)
            .ok_or_else(|| format!("{MAX_ROUNDS_VAR} must be a positive integer, got {v:?}")),
        Err(_) => Ok(None),
    }
}

#[derive(Debug, Clone)]
pub struct Job {
    pub run_id: String,
    pub source: Source,
    pub algo: Algo,
    pub params: AlgoParams,
    pub seed: u64,
    pub trace: Option<PathBuf>,
    pub max_rounds: Option<u64>,
}

pub struct Finished {
    pub record: ExperimentRecord,
    /// Per-phase or per-stage extras, shown with `--detail`.
    pub detail: Value,
}

/// Runs one job. Graph problems are bad input; engine failures come back as
/// a record with its error set.
pub fn execute(job: &Job) -> Result<Finished, String> {
    let g = job.source.load()?;
    let diam = diameter(&g) as u64;
    let mut cfg = RunConfig::for_graph(&g, job.seed);
    cfg.trace = job.trace.clone();
    if let Some(r) = job.max_rounds {
        cfg.engine.max_rounds = r;
    }
    let label = RunLabel { run_id: job.run_id.clone(), source: job.source.label(), algo: job.algo, seed: job.seed };
    let started = Instant::now();
    match run_algo(&g, job.algo, &cfg, job.params, diam) {
        Ok(rep) => {
            let secs = started.elapsed().as_secs_f64();
            let rec = record(&label, &g, diam, &rep, secs);
            Ok(Finished { detail: detail(&rep), record: rec })
        }
        Err(e) => {
            let rec = failed_record(&label, &g, diam, job.params.k, e.to_string());
            Ok(Finished { record: rec, detail: Value::Null })
        }
    }
}

fn detail(rep: &Report) -> Value {
    let o = rep.outcome();
    let phase_awake_max: Vec<u64> = o.phase_awake.iter().map(|p| p.iter().copied().max().unwrap_or(0)).collect();
    match rep {
        Report::Rand(_) => json!({ "F_i": o.trajectory, "phase_awake_max": phase_awake_max }),
        Report::Det(d) => {
            let mut blue: BTreeMap<u64, usize> = BTreeMap::new();
            for f in &d.fragments {
                *blue.entry(f.phase).or_default() += usize::from(f.color == Color::Blue);
            }
            json!({
                "F_i": o.trajectory,
                "blue_per_phase": blue.values().collect::<Vec<_>>(),
                "phase_awake_max": phase_awake_max,
                "coloring_stages": d.stages_per_phase,
            })
        }
        Report::Tradeoff(t) => json!({
            "F_i": o.trajectory,
            "stage_awake_max": t.stage_awake.iter().map(|s| s.iter().copied().max().unwrap_or(0)).collect::<Vec<_>>(),
            "stage_ends": t.stage_ends,
            "fragments_after_ghs": t.after_ghs.count,
            "max_fragment_diameter": t.after_ghs.max_diameter,
            "bfs_height": t.bfs_height,
            "budget": t.budget,
            "max_window_used": t.max_window_used,
            "warnings": t.warnings,
        }),
    }
}
