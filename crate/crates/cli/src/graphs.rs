use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use sleepmst_core::graph::{
    gen_complete, gen_grc, gen_increasing_path, gen_path, gen_random_connected, gen_ring, gen_star, GraphError,
};
use sleepmst_core::WeightedGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Random,
    Ring,
    Path,
    Grc,
    IncreasingPath,
    Complete,
    Star,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Random => "random",
            Family::Ring => "ring",
            Family::Path => "path",
            Family::Grc => "grc",
            Family::IncreasingPath => "increasing-path",
            Family::Complete => "complete",
            Family::Star => "star",
        }
    }

    pub fn parse(s: &str) -> Result<Self, String> {
        Family::from_str(s, true)
    }
}

/// Everything needed to regenerate a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    pub family: Family,
    /// Node count; ring length for rings. Unused by `grc`.
    pub n: usize,
    pub degree: f64,
    pub rows: usize,
    pub cols: usize,
    pub id_space: Option<u64>,
    pub seed: u64,
}

impl GraphSpec {
    pub fn build(&self) -> Result<WeightedGraph, GraphError> {
        let g = match self.family {
            Family::Random => gen_random_connected(self.n, self.degree, self.seed)?,
            Family::Ring => gen_ring(self.n, self.seed)?,
            Family::Path => gen_path(self.n, self.seed)?,
            Family::Grc => gen_grc(self.rows, self.cols, None, self.seed)?.0,
            Family::IncreasingPath => gen_increasing_path(self.n, self.seed)?,
            Family::Complete => gen_complete(self.n, self.seed)?,
            Family::Star => gen_star(self.n, self.seed)?,
        };
        match self.id_space {
            Some(id_space) => g.with_id_space(id_space, self.seed),
            None => Ok(g),
        }
    }

    pub fn label(&self) -> String {
        match self.family {
            Family::Grc => format!("grc:{}x{}", self.rows, self.cols),
            f => f.name().to_string(),
        }
    }
}

/// Where a run gets its graph from.
#[derive(Debug, Clone)]
pub enum Source {
    File(PathBuf),
    Generated(GraphSpec),
}

impl Source {
    pub fn load(&self) -> Result<WeightedGraph, String> {
        match self {
            Source::File(p) => read_graph(p),
            Source::Generated(spec) => spec.build().map_err(|e| e.to_string()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Source::File(p) => p.display().to_string(),
            Source::Generated(spec) => spec.label(),
        }
    }
}

pub fn read_graph(path: &Path) -> Result<WeightedGraph, String> {
    let f = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    WeightedGraph::read_from(BufReader::new(f)).map_err(|e| format!("{}: {e}", path.display()))
}
