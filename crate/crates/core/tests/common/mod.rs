#![allow(dead_code)]

use ndarray::Array2;
use popgcn::dataset::{AcquisitionRecord, Dataset, Label, SyntheticConfig};
use popgcn::harness::{CvConfig, ExperimentConfig, ModelConfig};
use popgcn::popgraph::{Edge, GraphSpec, PopulationGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn graph_from_pairs(n: usize, pairs: impl IntoIterator<Item = (usize, usize, f64)>) -> PopulationGraph {
    let mut edges: Vec<Edge> = pairs
        .into_iter()
        .map(|(a, b, weight)| Edge {
            u: a.min(b),
            v: a.max(b),
            weight,
        })
        .collect();
    edges.sort_by_key(|e| (e.u, e.v));
    edges.dedup_by_key(|e| (e.u, e.v));
    PopulationGraph::new(n, edges, GraphSpec::default()).unwrap()
}

/// Erdős–Rényi graph with uniform weights in [0.1, 2).
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> PopulationGraph {
    let mut pairs = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.random::<f64>() < p {
                pairs.push((u, v, rng.random_range(0.1..2.0)));
            }
        }
    }
    graph_from_pairs(n, pairs)
}

/// Several connected blocks (random spanning tree plus extra edges), none
/// of size one, with node labels shuffled. Returns the graph and block count.
pub fn block_graph(rng: &mut ChaCha8Rng, n_blocks: usize) -> (PopulationGraph, usize) {
    let sizes: Vec<usize> = (0..n_blocks).map(|_| rng.random_range(2..9)).collect();
    let n: usize = sizes.iter().sum();
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let mut pairs = Vec::new();
    let mut start = 0;
    for &s in &sizes {
        for i in 1..s {
            let j = rng.random_range(0..i);
            pairs.push((perm[start + i], perm[start + j], rng.random_range(0.1..2.0)));
        }
        for i in 0..s {
            for j in (i + 1)..s {
                if rng.random::<f64>() < 0.3 {
                    pairs.push((perm[start + i], perm[start + j], rng.random_range(0.1..2.0)));
                }
            }
        }
        start += s;
    }
    (graph_from_pairs(n, pairs), n_blocks)
}

/// Random tree that attaches each node to one of the few previous ones, so
/// the diameter grows roughly linearly.
pub fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> PopulationGraph {
    let pairs: Vec<_> = (1..n)
        .map(|v| {
            let lo = v.saturating_sub(3);
            (rng.random_range(lo..v), v, rng.random_range(0.2..1.5))
        })
        .collect();
    graph_from_pairs(n, pairs)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, c), |_| rng.random_range(-1.0..1.0))
}

pub fn record(id: &str, subject: &str, label: Label) -> AcquisitionRecord {
    AcquisitionRecord {
        acquisition_id: id.into(),
        subject_id: subject.into(),
        label,
        site: "A".into(),
        sex: "M".into(),
        age: 40.0,
        gene_flag: None,
    }
}

/// Synthetic benchmark: 600 subjects, 1-3 scans, 4 sites, sex and site
/// strongly associated with the label, features only moderately informative.
pub fn benchmark_synthetic() -> SyntheticConfig {
    SyntheticConfig {
        n_subjects: 600,
        scans_min: 1,
        scans_max: 3,
        n_sites: 4,
        n_features: 20,
        class_separation: 1.0,
        site_shift_scale: 1.0,
        sex_effect: 0.8,
        site_effect: 0.8,
        noise_scale: 0.5,
        seed: 0,
    }
}

pub fn benchmark_dataset() -> Dataset {
    popgcn::dataset::generate_synthetic(&benchmark_synthetic()).unwrap()
}

/// Phenotypic graph over SEX and SITE with a narrow kernel, ABIDE preset
/// with 8 hidden units and dropout disabled, 10 folds, seeds 0..3.
pub fn benchmark_experiment() -> ExperimentConfig {
    ExperimentConfig {
        name: "benchmark".into(),
        graph: GraphSpec {
            sigma: Some(0.25),
            ..GraphSpec::default()
        },
        model: ModelConfig {
            hidden_width: Some(8),
            dropout_rate: Some(0.0),
            ..ModelConfig::default()
        },
        cv: CvConfig {
            folds: 10,
            seeds: vec![0, 1, 2],
            fold_seed: 0,
            sigma_all_pairs: false,
        },
        ..ExperimentConfig::default()
    }
}
