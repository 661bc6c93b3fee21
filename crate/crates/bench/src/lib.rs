//! Shared fixtures for the criterion benchmarks.

use csam_core::{synth, GraphStore};

/// Node counts of the six reference datasets, smallest first.
pub const DATASET_NODES: [(&str, usize); 6] = [
    ("cora", 2708),
    ("citeseer", 3327),
    ("pubmed", 19_717),
    ("nell", 65_755),
    ("ogb-arxiv", 169_343),
    ("reddit", 232_965),
];

/// Uniform-degree stand-in for a dataset of `nodes` nodes.
pub fn uniform_fixture(nodes: usize, degree: usize) -> GraphStore {
    synth::uniform_degree(nodes, degree, nodes as u64).expect("valid fixture")
}

/// Heavy-tailed fixture used for the large-mode path.
pub fn power_law_fixture(nodes: usize) -> GraphStore {
    synth::power_law(nodes, 2.1, 1, 500, nodes as u64).expect("valid fixture")
}
