//! Statistical and structural checks on sampler output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::graph_store::{GraphStore, NodeId};
use crate::rng::Lfsr16;
use crate::sampler::ComputationalGraph;

/// p-value below which a goodness-of-fit check fails.
pub const P_THRESHOLD: f64 = 0.001;

/// Observed sample counts per neighbor offset of one node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrequencyTable {
    pub node: NodeId,
    pub counts: Vec<u64>,
    pub trials: u64,
}

impl FrequencyTable {
    pub fn new(node: NodeId, counts: Vec<u64>) -> Self {
        let trials = counts.iter().sum();
        FrequencyTable {
            node,
            counts,
            trials,
        }
    }

    /// At least 100 draws per class.
    pub fn has_sufficient_trials(&self) -> bool {
        self.trials >= 100 * self.counts.len() as u64
    }
}

/// Pearson chi-square statistic of `f` against `expected` proportions and its
/// p-value with `classes - 1` degrees of freedom.
pub fn chi_square_uniform(f: &FrequencyTable, expected: &[f64]) -> Result<(f64, f64)> {
    let k = f.counts.len();
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "chi-square needs at least two classes, got {k}"
        )));
    }
    if expected.len() != k {
        return Err(Error::InvalidArgument(format!(
            "{k} observed classes but {} expected proportions",
            expected.len()
        )));
    }
    if f.trials == 0 {
        return Err(Error::InvalidArgument("no trials recorded".into()));
    }
    if expected.iter().any(|&p| p.is_nan() || p <= 0.0) || (expected.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(
            "expected proportions must be positive and sum to 1".into(),
        ));
    }
    let trials = f.trials as f64;
    let stat: f64 = f
        .counts
        .iter()
        .zip(expected)
        .map(|(&obs, &p)| {
            let exp = trials * p;
            (obs as f64 - exp).powi(2) / exp
        })
        .sum();
    let dist = ChiSquared::new((k - 1) as f64).expect("dof >= 1");
    Ok((stat, dist.sf(stat)))
}

/// Offsets drawn for a degree-`degree` node, one per freshly seeded LFSR.
/// Seeds come from a ChaCha stream keyed by `seed`.
pub fn fresh_seed_frequencies(node: NodeId, degree: usize, trials: u64, seed: u64) -> Result<FrequencyTable> {
    if degree == 0 {
        return Err(Error::InvalidArgument(format!("node {node} has no neighbors")));
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; degree];
    for _ in 0..trials {
        let mut lfsr = Lfsr16::new(seeds.random_range(1..=u16::MAX))?;
        counts[lfsr.next_value() as usize % degree] += 1;
    }
    Ok(FrequencyTable::new(node, counts))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationStats {
    pub truncated_nodes: usize,
    pub discarded_edges: usize,
    pub truncated_fraction: f64,
    pub discarded_edge_fraction: f64,
}

/// How much of the graph a first-`cap` truncation hides: nodes with degree
/// above `cap`, and stored edges past position `cap` of their node.
pub fn truncation_stats(g: &GraphStore, cap: usize) -> Result<TruncationStats> {
    if cap == 0 {
        return Err(Error::InvalidArgument("cap must be at least 1".into()));
    }
    let (mut truncated_nodes, mut discarded_edges) = (0, 0);
    for &d in g.degree_list() {
        let d = d as usize;
        if d > cap {
            truncated_nodes += 1;
            discarded_edges += d - cap;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(TruncationStats {
        truncated_nodes,
        discarded_edges,
        truncated_fraction: ratio(truncated_nodes, g.num_nodes()),
        discarded_edge_fraction: ratio(discarded_edges, g.num_edges()),
    })
}

/// Per-node feature vectors for the toy aggregation check.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyFeatures {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl ToyFeatures {
    pub fn new(dim: usize, vectors: Vec<Vec<f64>>) -> Result<Self> {
        for (v, h) in vectors.iter().enumerate() {
            if h.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "feature of node {v} has length {}, expected {dim}",
                    h.len()
                )));
            }
            if h.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument(format!("feature of node {v} is not finite")));
            }
        }
        Ok(ToyFeatures { dim, vectors })
    }

    /// Features drawn uniformly from `[0, 1)`.
    pub fn random(num_nodes: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors = (0..num_nodes)
            .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
            .collect();
        ToyFeatures { dim, vectors }
    }

    pub fn constant(num_nodes: usize, value: &[f64]) -> Self {
        ToyFeatures {
            dim: value.len(),
            vectors: vec![value.to_vec(); num_nodes],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, v: NodeId) -> Option<&[f64]> {
        self.vectors.get(v.index()).map(Vec::as_slice)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        ToyFeatures {
            dim: self.dim,
            vectors: self
                .vectors
                .iter()
                .map(|h| h.iter().map(|x| alpha * x).collect())
                .collect(),
        }
    }
}

/// Mean aggregation over the computational graph, without learned weights.
///
/// Each occurrence aggregates itself and its sampled children,
/// `a = (h_self + sum of child aggregates) / (children + 1)`, starting from
/// raw features at the deepest layer kept. Entry `k` of the result is the
/// root's aggregate when layers `0..=k` are kept, so entry 0 is the root's
/// own feature.
pub fn mean_aggregate(cg: &ComputationalGraph, feats: &ToyFeatures) -> Result<Vec<Vec<f64>>> {
    for layer in cg.layers() {
        if let Some(&missing) = layer.iter().find(|&&u| feats.get(u).is_none()) {
            return Err(Error::MissingFeature { node: missing.0 });
        }
    }
    let h = |u: NodeId| feats.get(u).expect("checked above");

    let mut per_depth = Vec::with_capacity(cg.depth() + 1);
    for keep in 0..=cg.depth() {
        let mut below: Vec<Vec<f64>> = cg.layer(keep).iter().map(|&u| h(u).to_vec()).collect();
        for j in (0..keep).rev() {
            below = cg
                .layer(j)
                .iter()
                .enumerate()
                .map(|(pos, &u)| {
                    let kids = cg.child_range(j, pos);
                    let mut acc = h(u).to_vec();
                    for c in kids.clone() {
                        for (a, x) in acc.iter_mut().zip(&below[c]) {
                            *a += x;
                        }
                    }
                    let n = (kids.len() + 1) as f64;
                    acc.iter_mut().for_each(|a| *a /= n);
                    acc
                })
                .collect();
        }
        per_depth.push(below.swap_remove(0));
    }
    Ok(per_depth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph_store::toy_graph;
    use crate::rng::residue_proportions;
    use crate::sampler::{concat_expand, sample_one_hop, SampleTable};
    use crate::synth;
    use proptest::prelude::*;

    #[test]
    fn exact_fit_scores_zero() {
        let f = FrequencyTable::new(NodeId(0), vec![250, 250, 250, 250]);
        let (stat, p) = chi_square_uniform(&f, &[0.25; 4]).unwrap();
        assert_eq!(stat, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn thirty_seventy() {
        let f = FrequencyTable::new(NodeId(0), vec![30, 70]);
        let (stat, p) = chi_square_uniform(&f, &[0.5, 0.5]).unwrap();
        assert!((stat - 16.0).abs() < 1e-12);
        assert!(p < P_THRESHOLD);
        assert!(!f.has_sufficient_trials());
    }

    #[test]
    fn full_period_residues_fit_bias_exactly() {
        for d in [3usize, 7, 56, 100] {
            let mut counts = vec![0u64; d];
            let mut l = Lfsr16::new(0x1D2C).unwrap();
            for _ in 0..Lfsr16::PERIOD {
                counts[l.next_value() as usize % d] += 1;
            }
            let f = FrequencyTable::new(NodeId(0), counts);
            let (stat, p) = chi_square_uniform(&f, &residue_proportions(d)).unwrap();
            assert!(stat.abs() < 1e-9, "d={d} stat={stat}");
            assert!(p > 0.999);
        }
    }

    #[test]
    fn chi_square_input_errors() {
        let one = FrequencyTable::new(NodeId(0), vec![10]);
        assert!(chi_square_uniform(&one, &[1.0]).is_err());
        let f = FrequencyTable::new(NodeId(0), vec![10, 10]);
        assert!(chi_square_uniform(&f, &[1.0]).is_err());
        assert!(chi_square_uniform(&f, &[0.2, 0.2]).is_err());
        let empty = FrequencyTable::new(NodeId(0), vec![0, 0]);
        assert!(chi_square_uniform(&empty, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn fresh_seed_draws_pass() {
        let f = fresh_seed_frequencies(NodeId(3), 8, 100_000, 42).unwrap();
        assert_eq!(f.trials, 100_000);
        let (_, p) = chi_square_uniform(&f, &residue_proportions(8)).unwrap();
        assert!(p > P_THRESHOLD, "p = {p}");
    }

    #[test]
    fn rigged_counts_fail() {
        let f = FrequencyTable::new(NodeId(0), vec![5000, 3000, 1000, 1000]);
        let (_, p) = chi_square_uniform(&f, &residue_proportions(4)).unwrap();
        assert!(p < P_THRESHOLD);
    }

    #[test]
    fn truncation_examples() {
        let g = toy_graph();
        let s = truncation_stats(&g, 56).unwrap();
        assert_eq!((s.truncated_fraction, s.discarded_edge_fraction), (0.0, 0.0));

        let s = truncation_stats(&g, 1).unwrap();
        assert_eq!(s.truncated_fraction, 0.5);
        assert_eq!(s.discarded_edges, 2);

        let star = GraphStore::build_from_edge_index((1..=100u32).map(|u| (NodeId(0), NodeId(u))), 101, false)
            .unwrap();
        let s = truncation_stats(&star, 56).unwrap();
        assert_eq!(s.truncated_nodes, 1);
        assert_eq!(s.discarded_edges, 44);
        assert!((s.discarded_edge_fraction - 0.44).abs() < 1e-12);

        assert!(truncation_stats(&g, 0).is_err());
    }

    #[test]
    fn constant_features_are_a_fixed_point() {
        let g = synth::uniform_degree(40, 5, 3).unwrap();
        let t = sample_one_hop(&g, &mut Lfsr16::new(0x99).unwrap(), 4).unwrap();
        let c = [0.25, -1.5, 3.0];
        let feats = ToyFeatures::constant(40, &c);
        let cg = concat_expand(&t, NodeId(11), 3).unwrap();
        for agg in mean_aggregate(&cg, &feats).unwrap() {
            for (a, x) in agg.iter().zip(&c) {
                assert!((a - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_level_unrolled() {
        let rows = vec![
            vec![NodeId(1), NodeId(2), NodeId(2)],
            vec![],
            vec![],
        ];
        let t = SampleTable::from_rows(3, 1, rows).unwrap();
        let feats = ToyFeatures::new(2, vec![vec![1.0, 0.0], vec![2.0, 4.0], vec![3.0, 8.0]]).unwrap();
        let cg = concat_expand(&t, NodeId(0), 1).unwrap();
        let agg = mean_aggregate(&cg, &feats).unwrap();
        assert_eq!(agg[0], vec![1.0, 0.0]);
        // (h + s) / (N + 1) with s = (8, 20).
        assert_eq!(agg[1], vec![9.0 / 4.0, 20.0 / 4.0]);
    }

    #[test]
    fn missing_feature_named() {
        let g = toy_graph();
        let t = sample_one_hop(&g, &mut Lfsr16::new(1).unwrap(), 2).unwrap();
        let cg = concat_expand(&t, NodeId(0), 2).unwrap();
        let feats = ToyFeatures::constant(1, &[1.0]);
        let err = mean_aggregate(&cg, &feats).unwrap_err();
        assert!(matches!(err, Error::MissingFeature { .. }));
        assert!(ToyFeatures::new(2, vec![vec![1.0]]).is_err());
        assert!(ToyFeatures::new(1, vec![vec![f64::NAN]]).is_err());
    }

    proptest! {
        #[test]
        fn aggregates_stay_convex_and_linear(seed in 1u16.., root in 0u32..30, alpha in -4.0f64..4.0) {
            let g = synth::power_law(30, 2.0, 0, 6, seed as u64).unwrap();
            let t = sample_one_hop(&g, &mut Lfsr16::new(seed).unwrap(), 3).unwrap();
            let cg = concat_expand(&t, NodeId(root), 3).unwrap();
            let feats = ToyFeatures::random(30, 8, seed as u64);
            let agg = mean_aggregate(&cg, &feats).unwrap();
            let scaled = mean_aggregate(&cg, &feats.scaled(alpha)).unwrap();
            for (a, b) in agg.iter().zip(&scaled) {
                for (x, y) in a.iter().zip(b) {
                    prop_assert!((0.0..1.0).contains(x));
                    prop_assert!((alpha * x - y).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn discarded_fraction_non_increasing(seed in any::<u64>(), cap in 1usize..60) {
            let g = synth::power_law(200, 2.0, 0, 80, seed).unwrap();
            let a = truncation_stats(&g, cap).unwrap();
            let b = truncation_stats(&g, cap + 1).unwrap();
            prop_assert!(b.discarded_edge_fraction <= a.discarded_edge_fraction);
            prop_assert!(b.truncated_fraction <= a.truncated_fraction);
        }
    }
}
