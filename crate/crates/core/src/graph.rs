//! Weighted input graphs: generators, validation, the graph file format and
//! the centralized MST oracle used to verify distributed runs.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::unionfind::UnionFind;

/// Local port number of an incident edge (0-based index into the node's
/// adjacency list).
pub type Port = usize;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("graph is not connected")]
    Disconnected,
    #[error("duplicate edge weight {0}")]
    DuplicateWeight(u64),
    #[error("edge ({0}, {1}) is a self-loop or duplicate")]
    BadEdge(usize, usize),
    #[error("node id problem: {0}")]
    BadId(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: u64,
}

impl Edge {
    pub fn key(&self) -> (usize, usize) {
        (self.u.min(self.v), self.u.max(self.v))
    }

    pub fn other(&self, x: usize) -> usize {
        if x == self.u {
            self.v
        } else {
            self.u
        }
    }
}

/// One entry of a node's port table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    /// Neighbor node index.
    pub to: usize,
    /// Index into [`WeightedGraph::edges`].
    pub edge: usize,
    /// Port number of this edge at the neighbor.
    pub rev: Port,
    pub weight: u64,
}

/// Undirected, connected graph with pairwise distinct positive weights and
/// distinct node IDs drawn from `[1, id_space]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedGraph {
    n: usize,
    id_space: u64,
    ids: Vec<u64>,
    edges: Vec<Edge>,
    adj: Vec<Vec<Link>>,
}

impl WeightedGraph {
    /// Builds and validates a graph. Ports follow edge-list order.
    pub fn new(
        n: usize,
        edges: Vec<Edge>,
        ids: Vec<u64>,
        id_space: u64,
    ) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::InvalidParameter("n must be positive".into()));
        }
        if ids.len() != n {
            return Err(GraphError::BadId(format!("expected {n} ids, got {}", ids.len())));
        }
        let mut seen_ids = HashSet::new();
        for &id in &ids {
            if id == 0 || id > id_space {
                return Err(GraphError::BadId(format!("id {id} outside [1, {id_space}]")));
            }
            if !seen_ids.insert(id) {
                return Err(GraphError::BadId(format!("id {id} repeated")));
            }
        }
        let mut weights = HashSet::new();
        let mut pairs = HashSet::new();
        let mut adj: Vec<Vec<Link>> = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            if e.u >= n || e.v >= n || e.u == e.v || !pairs.insert(e.key()) {
                return Err(GraphError::BadEdge(e.u, e.v));
            }
            if e.w == 0 || !weights.insert(e.w) {
                return Err(GraphError::DuplicateWeight(e.w));
            }
            let pu = adj[e.u].len();
            let pv = adj[e.v].len();
            adj[e.u].push(Link { to: e.v, edge: i, rev: pv, weight: e.w });
            adj[e.v].push(Link { to: e.u, edge: i, rev: pu, weight: e.w });
        }
        let g = WeightedGraph { n, id_space, ids, edges, adj };
        if !g.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    /// Upper bound `N` on node IDs.
    pub fn id_space(&self) -> u64 {
        self.id_space
    }

    pub fn id(&self, v: usize) -> u64 {
        self.ids[v]
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn ports(&self, v: usize) -> &[Link] {
        &self.adj[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Port of `u` leading to `v`, if adjacent.
    pub fn port_to(&self, u: usize, v: usize) -> Option<Port> {
        self.adj[u].iter().position(|l| l.to == v)
    }

    /// Edge index between `u` and `v`, if any.
    pub fn edge_between(&self, u: usize, v: usize) -> Option<usize> {
        self.adj[u].iter().find(|l| l.to == v).map(|l| l.edge)
    }

    fn is_connected(&self) -> bool {
        self.bfs_depths(0).iter().all(Option::is_some)
    }

    /// Hop distances from `src`, `None` for unreachable nodes.
    pub fn bfs_depths(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        let mut queue = VecDeque::from([src]);
        dist[src] = Some(0);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            for l in &self.adj[u] {
                if dist[l.to].is_none() {
                    dist[l.to] = Some(du + 1);
                    queue.push_back(l.to);
                }
            }
        }
        dist
    }

    /// Re-checks every structural invariant (used by tests and the CLI).
    pub fn validate(&self) -> Result<(), GraphError> {
        WeightedGraph::new(self.n, self.edges.clone(), self.ids.clone(), self.id_space).map(|_| ())
    }

    /// Writes the line-oriented graph file: `n m N`, then `u v w` per edge,
    /// then `idx id` per node.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(self.to_text().as_bytes())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", self.n, self.m(), self.id_space);
        for e in &self.edges {
            let _ = writeln!(s, "{} {} {}", e.u, e.v, e.w);
        }
        for (i, id) in self.ids.iter().enumerate() {
            let _ = writeln!(s, "{i} {id}");
        }
        s
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, GraphError> {
        let mut lines = input
            .lines()
            .enumerate()
            .filter(|(_, l)| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true));
        let mut next_fields = |want: usize| -> Result<(usize, Vec<u64>), GraphError> {
            let (no, line) = lines.next().ok_or(GraphError::Parse {
                line: 0,
                msg: "unexpected end of file".into(),
            })?;
            let line = line?;
            let fields: Result<Vec<u64>, _> = line.split_whitespace().map(str::parse).collect();
            let fields = fields.map_err(|e| GraphError::Parse { line: no + 1, msg: e.to_string() })?;
            if fields.len() != want {
                return Err(GraphError::Parse {
                    line: no + 1,
                    msg: format!("expected {want} fields, got {}", fields.len()),
                });
            }
            Ok((no + 1, fields))
        };
        let (_, header) = next_fields(3)?;
        let (n, m, id_space) = (header[0] as usize, header[1] as usize, header[2]);
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            let (_, f) = next_fields(3)?;
            edges.push(Edge { u: f[0] as usize, v: f[1] as usize, w: f[2] });
        }
        let mut ids = vec![0; n];
        for _ in 0..n {
            let (line, f) = next_fields(2)?;
            let idx = f[0] as usize;
            if idx >= n {
                return Err(GraphError::Parse { line, msg: format!("node index {idx} out of range") });
            }
            ids[idx] = f[1];
        }
        WeightedGraph::new(n, edges, ids, id_space)
    }
}

/// Canonical set of undirected edges, keyed by `(min, max)` node pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSet {
    pub edges: BTreeSet<(usize, usize)>,
}

impl EdgeSet {
    pub fn insert(&mut self, u: usize, v: usize) -> bool {
        self.edges.insert((u.min(v), u.max(v)))
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn total_weight(&self, g: &WeightedGraph) -> u64 {
        self.edges
            .iter()
            .map(|&(u, v)| g.edges()[g.edge_between(u, v).expect("edge of graph")].w)
            .sum()
    }

    /// True iff the set is a spanning tree of `g`.
    pub fn is_spanning_tree(&self, g: &WeightedGraph) -> bool {
        if self.len() + 1 != g.n() {
            return false;
        }
        let mut uf = UnionFind::new(g.n());
        for &(u, v) in &self.edges {
            if g.edge_between(u, v).is_none() || !uf.union(u, v) {
                return false;
            }
        }
        true
    }
}

impl FromIterator<(usize, usize)> for EdgeSet {
    fn from_iter<I: IntoIterator<Item = (usize, usize)>>(iter: I) -> Self {
        let mut s = EdgeSet::default();
        for (u, v) in iter {
            s.insert(u, v);
        }
        s
    }
}

/// Kruskal with union-find. The MST is unique because weights are distinct.
pub fn mst_oracle(g: &WeightedGraph) -> EdgeSet {
    let mut order: Vec<&Edge> = g.edges().iter().collect();
    order.sort_unstable_by_key(|e| e.w);
    let mut uf = UnionFind::new(g.n());
    order
        .into_iter()
        .filter(|e| uf.union(e.u, e.v))
        .map(|e| (e.u, e.v))
        .collect()
}

/// Unweighted (hop) diameter: max BFS eccentricity.
pub fn diameter(g: &WeightedGraph) -> usize {
    (0..g.n())
        .map(|s| g.bfs_depths(s).into_iter().map(|d| d.unwrap_or(0)).max().unwrap_or(0))
        .max()
        .unwrap_or(0)
}

/// Default ID space `N = n³` (at least 8 so IDs carry four bits).
pub fn default_id_space(n: usize) -> u64 {
    (n as u64).pow(3).max(8)
}

fn random_ids(n: usize, id_space: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut seen = HashSet::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    while ids.len() < n {
        let id = rng.gen_range(1..=id_space);
        if seen.insert(id) {
            ids.push(id);
        }
    }
    ids
}

impl WeightedGraph {
    /// Same topology and weights with fresh random IDs drawn from `[1, N]`.
    pub fn with_id_space(&self, id_space: u64, seed: u64) -> Result<WeightedGraph, GraphError> {
        if id_space < self.n as u64 {
            return Err(GraphError::InvalidParameter(format!("N = {id_space} < n = {}", self.n)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1d5);
        let ids = random_ids(self.n, id_space, &mut rng);
        WeightedGraph::new(self.n, self.edges.clone(), ids, id_space)
    }
}

/// Assigns a random permutation of `1..=m` as weights to `pairs`.
fn finish(
    n: usize,
    pairs: Vec<(usize, usize)>,
    id_space: Option<u64>,
    rng: &mut ChaCha8Rng,
) -> Result<WeightedGraph, GraphError> {
    let id_space = id_space.unwrap_or_else(|| default_id_space(n));
    if id_space < n as u64 {
        return Err(GraphError::InvalidParameter(format!("N = {id_space} < n = {n}")));
    }
    let mut weights: Vec<u64> = (1..=pairs.len() as u64).collect();
    weights.shuffle(rng);
    let edges = pairs
        .into_iter()
        .zip(weights)
        .map(|((u, v), w)| Edge { u, v, w })
        .collect();
    let ids = random_ids(n, id_space, rng);
    WeightedGraph::new(n, edges, ids, id_space)
}

/// Random connected graph: a random spanning tree plus uniformly random
/// extra edges up to `round(n * avg_degree / 2)` edges.
pub fn gen_random_connected(n: usize, avg_degree: f64, seed: u64) -> Result<WeightedGraph, GraphError> {
    gen_random_connected_with(n, avg_degree, seed, None)
}

pub fn gen_random_connected_with(
    n: usize,
    avg_degree: f64,
    seed: u64,
    id_space: Option<u64>,
) -> Result<WeightedGraph, GraphError> {
    if n < 2 {
        return Err(GraphError::InvalidParameter(format!("random graph needs n >= 2, got {n}")));
    }
    if !(avg_degree >= 2.0) {
        return Err(GraphError::InvalidParameter(format!("avg_degree must be >= 2, got {avg_degree}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_m = n * (n - 1) / 2;
    let target = ((n as f64 * avg_degree / 2.0).round() as usize).clamp(n - 1, max_m);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut present = HashSet::new();
    let mut pairs = Vec::with_capacity(target);
    for i in 1..n {
        let j = rng.gen_range(0..i);
        let (a, b) = (order[i], order[j]);
        present.insert((a.min(b), a.max(b)));
        pairs.push((a, b));
    }
    while pairs.len() < target {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b && present.insert((a.min(b), a.max(b))) {
            pairs.push((a, b));
        }
    }
    finish(n, pairs, id_space, &mut rng)
}

/// Cycle on `len` nodes with random distinct weights and IDs.
pub fn gen_ring(len: usize, seed: u64) -> Result<WeightedGraph, GraphError> {
    if len < 3 {
        return Err(GraphError::InvalidParameter(format!("ring needs len >= 3, got {len}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..len).map(|i| (i, (i + 1) % len)).collect();
    finish(len, pairs, None, &mut rng)
}

/// Path `0 - 1 - ... - n-1` with random distinct weights.
pub fn gen_path(n: usize, seed: u64) -> Result<WeightedGraph, GraphError> {
    if n < 2 {
        return Err(GraphError::InvalidParameter(format!("path needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..n - 1).map(|i| (i, i + 1)).collect();
    finish(n, pairs, None, &mut rng)
}

/// Path whose weights increase left to right (edge `(i, i+1)` has weight
/// `i+1`). Every node's lightest edge points left, so the first-phase
/// fragment graph is one long chain.
pub fn gen_increasing_path(n: usize, seed: u64) -> Result<WeightedGraph, GraphError> {
    if n < 2 {
        return Err(GraphError::InvalidParameter(format!("path needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id_space = default_id_space(n);
    let edges = (0..n - 1).map(|i| Edge { u: i, v: i + 1, w: i as u64 + 1 }).collect();
    let ids = random_ids(n, id_space, &mut rng);
    WeightedGraph::new(n, edges, ids, id_space)
}

/// Complete graph on `n` nodes.
pub fn gen_complete(n: usize, seed: u64) -> Result<WeightedGraph, GraphError> {
    if n < 2 {
        return Err(GraphError::InvalidParameter(format!("complete graph needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    finish(n, pairs, None, &mut rng)
}

/// Star with center 0.
pub fn gen_star(n: usize, seed: u64) -> Result<WeightedGraph, GraphError> {
    if n < 2 {
        return Err(GraphError::InvalidParameter(format!("star needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (1..n).map(|v| (0, v)).collect();
    finish(n, pairs, None, &mut rng)
}

/// Layout of a generated `G_rc` instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrcLayout {
    pub rows: usize,
    pub cols: usize,
    /// Node index of row `l`, column `j` is `l * cols + j`.
    pub alice: usize,
    pub bob: usize,
    /// Columns of the tree leaves on the bottom row.
    pub x_columns: Vec<usize>,
    /// Internal nodes of the binary tree over the leaves.
    pub internal: Vec<usize>,
}

/// Default leaf count: the smallest power of two `>= log2(rc)`, at least 2.
pub fn grc_default_leaves(r: usize, c: usize) -> usize {
    let lg = ((r * c) as f64).log2().ceil().max(1.0) as usize;
    lg.next_power_of_two().max(2)
}

/// `G_rc`: `r` parallel paths of `c` nodes, Alice/Bob joined to the
/// first/last node of every path, leaf set `X` spaced evenly on the bottom
/// path with column edges to every other path, and a complete binary tree
/// over `X`.
pub fn gen_grc(r: usize, c: usize, leaves: Option<usize>, seed: u64) -> Result<(WeightedGraph, GrcLayout), GraphError> {
    if r < 1 || c < 4 {
        return Err(GraphError::InvalidParameter(format!("G_rc needs r >= 1 and c >= 4, got r={r}, c={c}")));
    }
    let x = leaves.unwrap_or_else(|| grc_default_leaves(r, c));
    if x < 2 || !x.is_power_of_two() || x > c {
        return Err(GraphError::InvalidParameter(format!(
            "|X| = {x} must be a power of two in [2, c = {c}]"
        )));
    }
    let x_columns: Vec<usize> = (0..x)
        .map(|j| ((j * (c - 1)) as f64 / (x - 1) as f64).round() as usize)
        .collect();
    if x_columns.windows(2).any(|w| w[0] == w[1]) {
        return Err(GraphError::InvalidParameter("leaves cannot be spaced distinctly".into()));
    }
    let node = |l: usize, j: usize| l * c + j;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut present = HashSet::new();
    let mut add = |a: usize, b: usize, pairs: &mut Vec<(usize, usize)>| {
        if a != b && present.insert((a.min(b), a.max(b))) {
            pairs.push((a, b));
        }
    };
    for l in 0..r {
        for j in 0..c - 1 {
            add(node(l, j), node(l, j + 1), &mut pairs);
        }
    }
    let alice = node(0, 0);
    let bob = node(0, c - 1);
    for l in 1..r {
        add(alice, node(l, 0), &mut pairs);
        add(bob, node(l, c - 1), &mut pairs);
    }
    for &j in &x_columns {
        for l in 1..r {
            add(node(0, j), node(l, j), &mut pairs);
        }
    }
    // Complete binary tree, built bottom-up by pairing adjacent subtrees.
    let mut next = r * c;
    let mut internal = Vec::new();
    let mut level: Vec<usize> = x_columns.iter().map(|&j| node(0, j)).collect();
    while level.len() > 1 {
        let mut up = Vec::with_capacity(level.len() / 2);
        for pair in level.chunks(2) {
            let parent = next;
            next += 1;
            internal.push(parent);
            for &child in pair {
                add(parent, child, &mut pairs);
            }
            up.push(parent);
        }
        level = up;
    }
    let n = next;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = finish(n, pairs, None, &mut rng)?;
    Ok((g, GrcLayout { rows: r, cols: c, alice, bob, x_columns, internal }))
}
