//! Parameter sweeps from a flat `key = value` file.
//!
//! ```text
//! # comments and blank lines are ignored
//! algo = rand, det
//! family = random
//! n = 16..1024*2      # 16, 32, ..., 1024
//! k = 3..6            # inclusive, trade-off only
//! trials = 20
//! seed = 1
//! degree = 4
//! ```
//!
//! Lists are comma separated. An item `lo..hi` is an inclusive range, with an
//! optional `+step` or `*factor` suffix. Each trial `t` uses seed `seed + t`
//! for both the graph and the algorithm. For `grc`, `n` lists the column
//! counts and `rows` the row count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use sleepmst_core::{Algo, AlgoParams, ExperimentRecord, LeMode};

use crate::graphs::{Family, GraphSpec, Source};
use crate::job::{execute, Finished, Job};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub algos: Vec<Algo>,
    pub family: Family,
    pub ns: Vec<usize>,
    /// Only trade-off runs are crossed with these.
    pub ks: Vec<u32>,
    pub trials: u64,
    pub seed: u64,
    pub degree: f64,
    pub rows: usize,
    pub id_space: Option<u64>,
    pub le_mode: LeMode,
    pub budget: Option<u64>,
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<u64>, String> {
    let bad = |item: &str| format!("{key}: cannot read {item:?}");
    let mut out = Vec::new();
    for item in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let Some((lo, rest)) = item.split_once("..") else {
            out.push(item.parse().map_err(|_| bad(item))?);
            continue;
        };
        let lo: u64 = lo.trim().parse().map_err(|_| bad(item))?;
        let (hi, next): (&str, Box<dyn Fn(u64) -> u64>) = if let Some((h, f)) = rest.split_once('*') {
            let f: u64 = f.trim().parse().map_err(|_| bad(item))?;
            if f < 2 || lo == 0 {
                return Err(bad(item));
            }
            (h, Box::new(move |x| x * f))
        } else if let Some((h, s)) = rest.split_once('+') {
            let s: u64 = s.trim().parse().map_err(|_| bad(item))?;
            if s == 0 {
                return Err(bad(item));
            }
            (h, Box::new(move |x| x + s))
        } else {
            (rest, Box::new(|x| x + 1))
        };
        let hi: u64 = hi.trim().parse().map_err(|_| bad(item))?;
        let mut x = lo;
        while x <= hi {
            out.push(x);
            x = next(x);
        }
    }
    if out.is_empty() {
        return Err(format!("{key}: empty list"));
    }
    Ok(out)
}

fn one<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, String> {
    raw.trim().parse().map_err(|_| format!("{key}: cannot read {raw:?}"))
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key = value", i + 1))?;
            let k = k.trim().to_lowercase().replace('-', "_");
            if kv.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(format!("line {}: {k} given twice", i + 1));
            }
        }
        let known = ["algo", "family", "n", "k", "trials", "seed", "degree", "rows", "id_space", "le_mode", "budget"];
        if let Some(k) = kv.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(format!("unknown key {k:?}"));
        }
        let get = |k: &str| kv.get(k).map(String::as_str);
        let algos = get("algo")
            .ok_or("missing key algo")?
            .split(',')
            .map(|a| a.trim().parse::<Algo>())
            .collect::<Result<Vec<_>, _>>()?;
        let family = match get("family") {
            Some(f) => Family::parse(f.trim())?,
            None => Family::Random,
        };
        let ns = parse_list("n", get("n").ok_or("missing key n")?)?.into_iter().map(|x| x as usize).collect();
        let ks = match get("k") {
            Some(k) => parse_list("k", k)?.into_iter().map(|x| x as u32).collect(),
            None => Vec::new(),
        };
        let le_mode = match get("le_mode").map(str::trim) {
            None | Some("oracle") => LeMode::Oracle,
            Some("flood") => LeMode::Flood,
            Some(other) => return Err(format!("le_mode: unknown mode {other:?}")),
        };
        let trials = get("trials").map_or(Ok(1), |v| one("trials", v))?;
        if trials == 0 {
            return Err("trials must be at least 1".into());
        }
        Ok(SweepSpec {
            algos,
            family,
            ns,
            ks,
            trials,
            seed: get("seed").map_or(Ok(0), |v| one("seed", v))?,
            degree: get("degree").map_or(Ok(4.0), |v| one("degree", v))?,
            rows: get("rows").map_or(Ok(4), |v| one("rows", v))?,
            id_space: get("id_space").map(|v| one("id_space", v)).transpose()?,
            le_mode,
            budget: get("budget").map(|v| one("budget", v)).transpose()?,
        })
    }

    /// Every run of the cross product, in output order.
    pub fn jobs(&self, max_rounds: Option<u64>) -> Vec<Job> {
        let mut out = Vec::new();
        for &algo in &self.algos {
            for &n in &self.ns {
                let ks: Vec<Option<u32>> = if algo == Algo::Tradeoff && !self.ks.is_empty() {
                    self.ks.iter().copied().map(Some).collect()
                } else {
                    vec![None]
                };
                for k in ks {
                    for t in 0..self.trials {
                        let seed = self.seed + t;
                        let spec = GraphSpec {
                            family: self.family,
                            n,
                            degree: self.degree,
                            rows: self.rows,
                            cols: n,
                            id_space: self.id_space,
                            seed,
                        };
                        let kpart = k.map(|k| format!("-k{k}")).unwrap_or_default();
                        out.push(Job {
                            run_id: format!("{algo}-{}-n{n}{kpart}-t{t}", self.family.name()),
                            source: Source::Generated(spec),
                            algo,
                            params: AlgoParams { k, le_mode: self.le_mode, budget: self.budget },
                            seed,
                            trace: None,
                            max_rounds,
                        });
                    }
                }
            }
        }
        out
    }
}

/// How a sweep run ended.
pub enum Status {
    Ok,
    Mismatch,
    EngineError,
    BadInput,
}

/// Runs all jobs in parallel; results come back in job order.
pub fn run_all(jobs: &[Job]) -> Vec<(ExperimentRecord, Status)> {
    jobs.par_iter()
        .map(|job| match execute(job) {
            Ok(Finished { record, .. }) => {
                let status = match record.oracle_match {
                    Some(true) => Status::Ok,
                    Some(false) => Status::Mismatch,
                    None => Status::EngineError,
                };
                (record, status)
            }
            Err(e) => {
                let r = ExperimentRecord {
                    run_id: job.run_id.clone(),
                    algo: job.algo.name().into(),
                    source: job.source.label(),
                    seed: job.seed,
                    k: job.params.k,
                    error: Some(e),
                    ..Default::default()
                };
                (r, Status::BadInput)
            }
        })
        .collect()
}
