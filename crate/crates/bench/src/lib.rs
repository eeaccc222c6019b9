//! Fixed inputs shared by the benchmarks.

use sleepmst_core::graph::{gen_path, gen_random_connected};
use sleepmst_core::WeightedGraph;

/// Random connected graph of average degree 4 with a fixed seed.
pub fn random_graph(n: usize) -> WeightedGraph {
    gen_random_connected(n, 4.0, 0xBE7C + n as u64).expect("valid parameters")
}

pub fn path_graph(n: usize) -> WeightedGraph {
    gen_path(n, 0xBE7C).expect("valid parameters")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_stable() {
        assert_eq!(random_graph(32), random_graph(32));
        assert_eq!(path_graph(10).m(), 9);
    }
}
