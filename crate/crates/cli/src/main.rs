mod graphs;
mod job;
mod sweep;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sleepmst_core::metrics::CsvSink;
use sleepmst_core::{Algo, AlgoParams, ExperimentRecord, LeMode};

use graphs::{Family, GraphSpec, Source};
use job::{execute, max_rounds_override, Job};
use sweep::{run_all, Status, SweepSpec};

const EXIT_MISMATCH: u8 = 2;
const EXIT_ENGINE: u8 = 3;
const EXIT_BAD_INPUT: u8 = 4;

#[derive(Parser)]
#[command(name = "sleepmst", version, about = "Run awake-efficient MST algorithms on a sleeping-model simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a graph file.
    Gen {
        #[command(flatten)]
        graph: GenArgs,
        /// Output path; standard output if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one algorithm, check it against the oracle and print the record.
    Run(RunArgs),
    /// Run the cross product described by a sweep file.
    Sweep {
        spec: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Clone)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "random")]
    family: Family,
    /// Node count (ring length for rings).
    #[arg(long, default_value_t = 64)]
    n: usize,
    /// Average degree of random graphs.
    #[arg(long, default_value_t = 4.0)]
    degree: f64,
    #[arg(long, default_value_t = 4)]
    rows: usize,
    #[arg(long, default_value_t = 32)]
    cols: usize,
    /// ID space `N`; defaults to `n^3`.
    #[arg(long)]
    id_space: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl GenArgs {
    fn spec(&self, seed: u64) -> GraphSpec {
        GraphSpec {
            family: self.family,
            n: self.n,
            degree: self.degree,
            rows: self.rows,
            cols: self.cols,
            id_space: self.id_space,
            seed,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Graph file; when absent the graph is generated.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[command(flatten)]
    gen: GenArgs,
    #[arg(long, value_enum)]
    algo: AlgoArg,
    /// Trade-off parameter.
    #[arg(long)]
    k: Option<u32>,
    #[arg(long, value_enum, default_value = "oracle")]
    le_mode: LeModeArg,
    /// Upcast window of the trade-off pipeline.
    #[arg(long)]
    budget: Option<u64>,
    /// Runs with seeds `seed, seed+1, ...`; generated graphs follow the seed.
    #[arg(long, default_value_t = 1)]
    trials: u64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// JSON-lines trace of every awake node-round (single trial only).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print per-phase extras (fragment counts, Blue fragments, stage costs).
    #[arg(long)]
    detail: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    Rand,
    Det,
    Tradeoff,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Algo {
        match a {
            AlgoArg::Rand => Algo::Rand,
            AlgoArg::Det => Algo::Det,
            AlgoArg::Tradeoff => Algo::Tradeoff,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LeModeArg {
    Oracle,
    Flood,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

struct Failure {
    code: u8,
    msg: String,
}

fn bad_input(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_BAD_INPUT, msg: msg.into() }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| bad_input(format!("{}: {e}", p.display())))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Writes records as CSV or JSON lines.
struct Output {
    csv: Option<CsvSink<Box<dyn Write>>>,
    json: Option<Box<dyn Write>>,
}

impl Output {
    fn new(format: Format, out: Box<dyn Write>) -> Self {
        match format {
            Format::Csv => Output { csv: Some(CsvSink::new(out)), json: None },
            Format::Json => Output { csv: None, json: Some(out) },
        }
    }

    fn write(&mut self, r: &ExperimentRecord, detail: Option<&serde_json::Value>) -> io::Result<()> {
        if let Some(sink) = self.csv.as_mut() {
            sink.write(r).map_err(io::Error::other)?;
            if let Some(d) = detail {
                eprintln!("{} {d}", r.run_id);
            }
        }
        if let Some(w) = self.json.as_mut() {
            match detail {
                Some(d) => {
                    let mut v: serde_json::Value = serde_json::from_str(&r.to_json())?;
                    v["detail"] = d.clone();
                    writeln!(w, "{v}")?;
                }
                None => writeln!(w, "{}", r.to_json())?,
            }
            w.flush()?;
        }
        Ok(())
    }

    fn finish(self) -> io::Result<()> {
        if let Some(sink) = self.csv {
            sink.into_inner().flush()?;
        }
        Ok(())
    }
}

fn cmd_gen(graph: &GenArgs, out: Option<&Path>) -> Result<(), Failure> {
    let g = graph.spec(graph.seed).build().map_err(|e| bad_input(e.to_string()))?;
    let mut w = open_out(out)?;
    g.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| bad_input(e.to_string()))
}

fn cmd_run(a: &RunArgs) -> Result<(), Failure> {
    if a.trials == 0 {
        return Err(bad_input("--trials must be at least 1"));
    }
    if a.trace.is_some() && a.trials > 1 {
        return Err(bad_input("--trace needs a single trial"));
    }
    let max_rounds = max_rounds_override().map_err(bad_input)?;
    let algo = Algo::from(a.algo);
    let params = AlgoParams {
        k: a.k,
        le_mode: match a.le_mode {
            LeModeArg::Oracle => LeMode::Oracle,
            LeModeArg::Flood => LeMode::Flood,
        },
        budget: a.budget,
    };
    let mut out = Output::new(a.format, open_out(a.out.as_deref())?);
    let mut worst = 0u8;
    let mut last_err = String::new();
    for t in 0..a.trials {
        let seed = a.gen.seed + t;
        let source = match &a.graph {
            Some(p) => Source::File(p.clone()),
            None => Source::Generated(a.gen.spec(seed)),
        };
        let job = Job {
            run_id: format!("{algo}-t{t}"),
            source,
            algo,
            params,
            seed,
            trace: a.trace.clone(),
            max_rounds,
        };
        let done = execute(&job).map_err(bad_input)?;
        let r = &done.record;
        out.write(r, a.detail.then_some(&done.detail)).map_err(|e| bad_input(e.to_string()))?;
        match (r.oracle_match, &r.error) {
            (None, Some(e)) => {
                worst = worst.max(EXIT_ENGINE);
                last_err = e.clone();
            }
            (Some(false), _) => {
                worst = worst.max(EXIT_MISMATCH);
                last_err = format!("{}: edge set differs from the oracle", r.run_id);
            }
            _ => {}
        }
    }
    out.finish().map_err(|e| bad_input(e.to_string()))?;
    if worst == 0 {
        Ok(())
    } else {
        Err(Failure { code: worst, msg: last_err })
    }
}

fn cmd_sweep(spec: &Path, format: Format, out: Option<&Path>) -> Result<(), Failure> {
    let text = std::fs::read_to_string(spec).map_err(|e| bad_input(format!("{}: {e}", spec.display())))?;
    let spec = SweepSpec::parse(&text).map_err(bad_input)?;
    let max_rounds = max_rounds_override().map_err(bad_input)?;
    let jobs = spec.jobs(max_rounds);
    let results = run_all(&jobs);
    let mut w = Output::new(format, open_out(out)?);
    let mut code = 0u8;
    let mut failures = 0usize;
    for (r, status) in &results {
        w.write(r, None).map_err(|e| bad_input(e.to_string()))?;
        let c = match status {
            Status::Ok => 0,
            Status::Mismatch => EXIT_MISMATCH,
            Status::EngineError => EXIT_ENGINE,
            Status::BadInput => EXIT_BAD_INPUT,
        };
        failures += usize::from(c != 0);
        code = code.max(c);
    }
    w.finish().map_err(|e| bad_input(e.to_string()))?;
    if code == 0 {
        Ok(())
    } else {
        Err(Failure { code, msg: format!("{failures} of {} runs failed", results.len()) })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_BAD_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    let res = match &cli.cmd {
        Cmd::Gen { graph, out } => cmd_gen(graph, out.as_deref()),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Sweep { spec, format, out } => cmd_sweep(spec, *format, out.as_deref()),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sleepmst: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
