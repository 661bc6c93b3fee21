//! Deterministic synthetic graphs for tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph_store::{GraphStore, NodeId};

/// Directed graph in which every node has exactly `degree` out-edges to
/// uniformly chosen targets.
pub fn uniform_degree(num_nodes: usize, degree: usize, seed: u64) -> Result<GraphStore> {
    if num_nodes == 0 && degree > 0 {
        return Err(Error::InvalidArgument("cannot add edges to an empty graph".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<(NodeId, NodeId)> = (0..num_nodes)
        .flat_map(|v| std::iter::repeat_n(v, degree))
        .map(|v| (NodeId(v as u32), NodeId(rng.random_range(0..num_nodes) as u32)))
        .collect();
    GraphStore::build_from_edge_index(edges, num_nodes, false)
}

/// Directed graph whose out-degrees follow a discrete Pareto law with the
/// given `exponent`, clamped to `[min_degree, max_degree]`. Node 0 always has
/// `max_degree` out-edges so the tail is present.
pub fn power_law(
    num_nodes: usize,
    exponent: f64,
    min_degree: usize,
    max_degree: usize,
    seed: u64,
) -> Result<GraphStore> {
    if num_nodes == 0 || min_degree > max_degree || exponent.is_nan() || exponent <= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "power_law needs nodes >= 1, min <= max and exponent > 1 \
             (got {num_nodes}, {min_degree}..={max_degree}, {exponent})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let floor = min_degree.max(1) as f64;
    let mut edges = Vec::new();
    for v in 0..num_nodes {
        let d = if v == 0 {
            max_degree
        } else {
            let u: f64 = rng.random::<f64>();
            let x = floor * (1.0 - u).powf(-1.0 / (exponent - 1.0));
            (x.floor() as usize).clamp(min_degree, max_degree)
        };
        for _ in 0..d {
            edges.push((NodeId(v as u32), NodeId(rng.random_range(0..num_nodes) as u32)));
        }
    }
    GraphStore::build_from_edge_index(edges, num_nodes, false)
}
