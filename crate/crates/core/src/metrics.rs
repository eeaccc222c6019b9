//! Complexity measurements of one run and their CSV/JSON export.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::outcome::MstOutcome;

/// Header of the CSV export, one row per run.
pub const CSV_HEADER: [&str; 15] = [
    "run_id",
    "algo",
    "n",
    "m",
    "N",
    "D",
    "k",
    "seed",
    "awake_max",
    "awake_avg",
    "total_rounds",
    "messages",
    "bits",
    "phases",
    "oracle_match",
];

/// Round to 6 significant digits, the precision every export uses.
pub fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

/// `%g`-style rendering with 6 significant digits.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..6).contains(&exp) {
        let s = format!("{x:.5e}");
        let (mant, e) = s.split_once('e').expect("exponent form");
        return format!("{}e{e}", trim_zeros(mant));
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Awake rounds of every node.
    pub awake: Vec<u64>,
    pub awake_max: u64,
    /// Mean awake rounds, already rounded to 6 significant digits.
    pub awake_avg: f64,
    pub total_rounds: u64,
    pub messages: u64,
    pub bits: u64,
    /// Largest bit load on one edge, one direction, one round.
    pub max_edge_round_bits: u32,
    /// Fragment count at each phase boundary, starting with `n`.
    pub trajectory: Vec<usize>,
    /// Awake rounds each node spent in each phase.
    pub phase_awake: Vec<Vec<u64>>,
    pub phases: u64,
}

impl Metrics {
    pub fn from_outcome(o: &MstOutcome) -> Self {
        let awake = o.stats.awake.clone();
        let awake_max = awake.iter().copied().max().unwrap_or(0);
        let awake_avg = if awake.is_empty() {
            0.0
        } else {
            round_sig6(awake.iter().sum::<u64>() as f64 / awake.len() as f64)
        };
        Metrics {
            awake,
            awake_max,
            awake_avg,
            total_rounds: o.stats.total_rounds,
            messages: o.stats.messages_sent,
            bits: o.stats.bits_sent,
            max_edge_round_bits: o.stats.max_edge_round_bits,
            trajectory: o.trajectory.clone(),
            phase_awake: o.phase_awake.clone(),
            phases: o.phases,
        }
    }

    /// Max over nodes of awake rounds spent in a single phase.
    pub fn max_phase_awake(&self) -> u64 {
        self.phase_awake.iter().flatten().copied().max().unwrap_or(0)
    }

    pub fn check(&self) -> Result<(), String> {
        if (self.awake_max as f64) < self.awake_avg || self.awake_avg < 0.0 {
            return Err(format!("awake_max {} below awake_avg {}", self.awake_max, self.awake_avg));
        }
        if self.total_rounds < self.awake_max {
            return Err(format!("total_rounds {} below awake_max {}", self.total_rounds, self.awake_max));
        }
        if let Some(w) = self.trajectory.windows(2).find(|w| w[1] > w[0]) {
            return Err(format!("fragment count rose from {} to {}", w[0], w[1]));
        }
        Ok(())
    }
}

/// One run: parameters, measurements and the oracle verdict.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub run_id: String,
    pub algo: String,
    /// Generator family, or the graph file path.
    pub source: String,
    pub n: u64,
    pub m: u64,
    #[serde(rename = "N")]
    pub id_space: u64,
    #[serde(rename = "D")]
    pub diameter: u64,
    pub k: Option<u32>,
    pub seed: u64,
    pub awake_max: u64,
    pub awake_avg: f64,
    pub total_rounds: u64,
    pub messages: u64,
    pub bits: u64,
    pub phases: u64,
    /// `None` when the run failed before producing an edge set.
    pub oracle_match: Option<bool>,
    #[serde(rename = "F_i")]
    pub trajectory: Vec<usize>,
    pub wall_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct CsvRow {
    run_id: String,
    algo: String,
    n: u64,
    m: u64,
    #[serde(rename = "N")]
    id_space: u64,
    #[serde(rename = "D")]
    diameter: u64,
    k: Option<u32>,
    seed: u64,
    awake_max: u64,
    awake_avg: String,
    total_rounds: u64,
    messages: u64,
    bits: u64,
    phases: u64,
    oracle_match: String,
}

impl ExperimentRecord {
    pub fn with_metrics(mut self, m: &Metrics) -> Self {
        self.awake_max = m.awake_max;
        self.awake_avg = m.awake_avg;
        self.total_rounds = m.total_rounds;
        self.messages = m.messages;
        self.bits = m.bits;
        self.phases = m.phases;
        self.trajectory = m.trajectory.clone();
        self
    }

    fn row(&self) -> CsvRow {
        CsvRow {
            run_id: self.run_id.clone(),
            algo: self.algo.clone(),
            n: self.n,
            m: self.m,
            id_space: self.id_space,
            diameter: self.diameter,
            k: self.k,
            seed: self.seed,
            awake_max: self.awake_max,
            awake_avg: fmt_sig6(self.awake_avg),
            total_rounds: self.total_rounds,
            messages: self.messages,
            bits: self.bits,
            phases: self.phases,
            oracle_match: match self.oracle_match {
                Some(b) => b.to_string(),
                None => "FAILED".into(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        let mut r = self.clone();
        r.awake_avg = round_sig6(r.awake_avg);
        r.wall_seconds = round_sig6(r.wall_seconds);
        serde_json::to_string(&r).expect("record serializes")
    }
}

/// CSV writer that emits the header once and one row per record.
pub struct CsvSink<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(out: W) -> Self {
        CsvSink { inner: csv::WriterBuilder::new().has_headers(true).from_writer(out) }
    }

    pub fn write(&mut self, r: &ExperimentRecord) -> csv::Result<()> {
        self.inner.serialize(r.row())?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.inner.into_inner().map_err(|e| e.into_error()).expect("flush")
    }
}

pub fn to_csv(records: &[ExperimentRecord]) -> String {
    let mut sink = CsvSink::new(Vec::new());
    if records.is_empty() {
        return CSV_HEADER.join(",") + "\n";
    }
    for r in records {
        sink.write(r).expect("in-memory write");
    }
    String::from_utf8(sink.into_inner()).expect("utf8")
}

/// Parse records back from CSV. Fields the CSV does not carry stay default.
pub fn from_csv(text: &str) -> csv::Result<Vec<ExperimentRecord>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    rd.deserialize::<CsvRow>()
        .map(|row| {
            let row = row?;
            Ok(ExperimentRecord {
                run_id: row.run_id,
                algo: row.algo,
                n: row.n,
                m: row.m,
                id_space: row.id_space,
                diameter: row.diameter,
                k: row.k,
                seed: row.seed,
                awake_max: row.awake_max,
                awake_avg: row.awake_avg.parse().unwrap_or(f64::NAN),
                total_rounds: row.total_rounds,
                messages: row.messages,
                bits: row.bits,
                phases: row.phases,
                oracle_match: row.oracle_match.parse().ok(),
                ..Default::default()
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_ring, mst_oracle};
    use crate::mst_randomized::{run_randomized_mst, RandomizedParams};
    use crate::outcome::RunConfig;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt_sig6(0.0), "0");
        assert_eq!(fmt_sig6(12.5), "12.5");
        assert_eq!(fmt_sig6(1.0 / 3.0), "0.333333");
        assert_eq!(fmt_sig6(123456789.0), "1.23457e8");
        assert_eq!(fmt_sig6(91.0), "91");
        assert_eq!(round_sig6(2.0 / 3.0), 0.666667);
    }

    #[test]
    fn empty_run_is_all_zero() {
        let r = ExperimentRecord::default().with_metrics(&Metrics::default());
        let text = to_csv(&[r]);
        let row = text.lines().nth(1).unwrap();
        assert_eq!(row, ",,0,0,0,0,,0,0,0,0,0,0,0,FAILED");
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(to_csv(&[]).trim_end(), CSV_HEADER.join(","));
    }

    fn toy() -> (Metrics, ExperimentRecord) {
        let g = gen_ring(12, 3).unwrap();
        let o = run_randomized_mst(&g, &RunConfig::for_graph(&g, 3), RandomizedParams::default()).unwrap();
        let m = Metrics::from_outcome(&o);
        let r = ExperimentRecord {
            run_id: "toy".into(),
            algo: "rand".into(),
            source: "ring".into(),
            n: 12,
            m: 12,
            id_space: g.id_space(),
            diameter: 6,
            seed: 3,
            oracle_match: Some(o.edges == mst_oracle(&g)),
            ..Default::default()
        }
        .with_metrics(&m);
        (m, r)
    }

    #[test]
    fn toy_run_round_trips() {
        let (m, r) = toy();
        m.check().unwrap();
        let back = from_csv(&to_csv(std::slice::from_ref(&r))).unwrap();
        assert_eq!(back.len(), 1);
        let expect = ExperimentRecord { source: String::new(), trajectory: Vec::new(), ..r.clone() };
        assert_eq!(back[0], expect);
        let json: ExperimentRecord = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json, r);
        assert_eq!(json.trajectory, m.trajectory);
        let mj: Metrics = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(mj, m);
    }

    #[test]
    fn exports_are_byte_identical() {
        let (_, a) = toy();
        let (_, b) = toy();
        assert_eq!(to_csv(std::slice::from_ref(&a)), to_csv(std::slice::from_ref(&b)));
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn check_rejects_rising_trajectory() {
        let m = Metrics { trajectory: vec![4, 2, 3], ..Default::default() };
        assert!(m.check().is_err());
    }
}
