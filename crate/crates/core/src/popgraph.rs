//! Population graph construction.
//!
//! The phenotypic graph weights every pair of acquisitions by
//! `Sim(v, w) * Σ_h γ(M_h(v), M_h(w))`, where `γ` is a Kronecker delta for
//! categorical measures and a strict unit step `|a - b| < θ` for age.
//! `Sim` is either the Gaussian kernel of the correlation distance between
//! feature vectors, the longitudinal term (`λ` for two scans of the same
//! subject, 0 otherwise) or the constant 1.
//!
//! Baseline builders (knn, complete, all, random) live here too. Every
//! builder returns a [`PopulationGraph`] whose constructor checks the
//! structural invariants, so a successfully built graph is always
//! self-loop free, non-negative and stored once per unordered pair.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{AcquisitionRecord, FeatureMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Measure {
    Sex,
    Site,
    Age,
    Gene,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Phenotypic,
    Knn,
    /// Binary complete graph.
    Complete,
    /// Complete graph weighted by the feature kernel.
    All,
    /// Phenotypic edge count, uniformly rewired endpoints.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    CorrelationKernel,
    Longitudinal,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSpec {
    pub strategy: Strategy,
    pub measures: Vec<Measure>,
    pub sim_mode: SimMode,
    /// Age threshold in years.
    pub theta: f64,
    /// Longitudinal weight, must exceed 1.
    pub lambda: f64,
    /// Neighbour count for knn.
    pub k: usize,
    /// Kernel width. `None` means the mean correlation distance over the
    /// reference pairs (all pairs, or training pairs when the caller says so).
    pub sigma: Option<f64>,
    /// Seed for random rewiring.
    pub seed: u64,
}

impl Default for GraphSpec {
    fn default() -> Self {
        Self {
            strategy: Strategy::Phenotypic,
            measures: vec![Measure::Sex, Measure::Site],
            sim_mode: SimMode::CorrelationKernel,
            theta: 2.0,
            lambda: 10.0,
            k: 50,
            sigma: None,
            seed: 0,
        }
    }
}

impl GraphSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0) {
            return Err(Error::config("graph.theta", "must be > 0"));
        }
        if self.sim_mode == SimMode::Longitudinal && !(self.lambda > 1.0) {
            return Err(Error::config(
                "graph.lambda",
                "must be > 1 for longitudinal similarity",
            ));
        }
        if self.strategy == Strategy::Knn && self.k < 1 {
            return Err(Error::config("graph.k", "must be ≥ 1"));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::config("graph.sigma", "must be a positive number"));
            }
        }
        let mut seen = HashSet::new();
        for m in &self.measures {
            if !seen.insert(m) {
                return Err(Error::config("graph.measures", format!("{m:?} listed twice")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub weight: f64,
}

/// Weighted undirected graph stored as an upper-triangular edge list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationGraph {
    n_nodes: usize,
    edges: Vec<Edge>,
    provenance: GraphSpec,
}

impl PopulationGraph {
    pub fn new(n_nodes: usize, mut edges: Vec<Edge>, provenance: GraphSpec) -> Result<Self> {
        for e in &edges {
            if e.u >= e.v {
                return Err(Error::Integrity(format!(
                    "edge ({},{}) must satisfy u < v",
                    e.u, e.v
                )));
            }
            if e.v >= n_nodes {
                return Err(Error::Integrity(format!(
                    "edge ({},{}) out of range for {n_nodes} nodes",
                    e.u, e.v
                )));
            }
            if !(e.weight >= 0.0) || !e.weight.is_finite() {
                return Err(Error::Integrity(format!(
                    "edge ({},{}) has invalid weight {}",
                    e.u, e.v, e.weight
                )));
            }
        }
        edges.sort_by_key(|e| (e.u, e.v));
        if let Some(w) = edges.windows(2).find(|w| (w[0].u, w[0].v) == (w[1].u, w[1].v)) {
            return Err(Error::Integrity(format!(
                "duplicate edge ({},{})",
                w[0].u, w[0].v
            )));
        }
        Ok(Self {
            n_nodes,
            edges,
            provenance,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn provenance(&self) -> &GraphSpec {
        &self.provenance
    }

    /// Weighted degree of each node.
    pub fn degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_nodes];
        for e in &self.edges {
            d[e.u] += e.weight;
            d[e.v] += e.weight;
        }
        d
    }

    /// Symmetric dense adjacency matrix.
    pub fn adjacency(&self) -> Array2<f64> {
        let mut w = Array2::zeros((self.n_nodes, self.n_nodes));
        for e in &self.edges {
            w[[e.u, e.v]] = e.weight;
            w[[e.v, e.u]] = e.weight;
        }
        w
    }

    /// Neighbour lists with weights, both directions.
    pub fn neighbours(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for e in &self.edges {
            adj[e.u].push((e.v, e.weight));
            adj[e.v].push((e.u, e.weight));
        }
        adj
    }

    /// Edge weight of an unordered pair (0 when absent).
    pub fn weight(&self, a: usize, b: usize) -> f64 {
        let (u, v) = if a < b { (a, b) } else { (b, a) };
        self.edges
            .binary_search_by_key(&(u, v), |e| (e.u, e.v))
            .map(|i| self.edges[i].weight)
            .unwrap_or(0.0)
    }

    /// Hop distances from `source`; `usize::MAX` for unreachable nodes.
    pub fn hop_distances(&self, source: usize) -> Vec<usize> {
        let adj = self.neighbours();
        let mut dist = vec![usize::MAX; self.n_nodes];
        let mut queue = std::collections::VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &(v, w) in &adj[u] {
                if w > 0.0 && dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Connected components as a label per node.
    pub fn components(&self) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.n_nodes).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for e in self.edges.iter().filter(|e| e.weight > 0.0) {
            let (a, b) = (find(&mut parent, e.u), find(&mut parent, e.v));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
        (0..self.n_nodes).map(|i| find(&mut parent, i)).collect()
    }

    /// `(components, isolated nodes)`.
    pub fn component_counts(&self) -> (usize, usize) {
        let labels = self.components();
        let roots: HashSet<usize> = labels.iter().copied().collect();
        let isolated = self.degrees().iter().filter(|d| **d == 0.0).count();
        (roots.len(), isolated)
    }
}

pub fn gamma_categorical(a: &str, b: &str) -> u8 {
    u8::from(a == b)
}

/// Strict unit step: 1 iff `|a - b| < theta`.
pub fn gamma_quantitative(a: f64, b: f64, theta: f64) -> u8 {
    u8::from((a - b).abs() < theta)
}

fn gamma(measure: Measure, a: &AcquisitionRecord, b: &AcquisitionRecord, theta: f64) -> u8 {
    match measure {
        Measure::Sex => gamma_categorical(&a.sex, &b.sex),
        Measure::Site => gamma_categorical(&a.site, &b.site),
        Measure::Age => gamma_quantitative(a.age, b.age, theta),
        // A missing flag never counts as agreement.
        Measure::Gene => match (&a.gene_flag, &b.gene_flag) {
            (Some(x), Some(y)) => gamma_categorical(x, y),
            _ => 0,
        },
    }
}

/// Sum of the measure agreement terms for one pair.
pub fn phenotype_score(
    a: &AcquisitionRecord,
    b: &AcquisitionRecord,
    measures: &[Measure],
    theta: f64,
) -> u32 {
    measures.iter().map(|&m| u32::from(gamma(m, a, b, theta))).sum()
}

pub fn pearson(x: ArrayView1<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "vectors of length {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Degenerate("correlation needs at least 2 entries".into()));
    }
    let n = x.len() as f64;
    let mx = x.sum() / n;
    let my = y.sum() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero-variance feature vector".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Gaussian kernel of the correlation distance `ρ = 1 - r`.
pub fn similarity_kernel(x_v: ArrayView1<'_, f64>, x_w: ArrayView1<'_, f64>, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("sigma must be > 0, got {sigma}")));
    }
    let rho = 1.0 - pearson(x_v, x_w)?;
    Ok(kernel_from_distance(rho, sigma))
}

/// Subnormal results are flushed to zero.
pub fn kernel_from_distance(rho: f64, sigma: f64) -> f64 {
    let k = (-(rho * rho) / (2.0 * sigma * sigma)).exp();
    if k < f64::MIN_POSITIVE {
        0.0
    } else {
        k
    }
}

pub fn longitudinal_sim(subj_v: &str, subj_w: &str, lambda: f64) -> f64 {
    if subj_v == subj_w {
        lambda
    } else {
        0.0
    }
}

/// Correlation distances between all rows, via z-scored rows.
pub fn correlation_distances(features: &FeatureMatrix) -> Result<Array2<f64>> {
    let x = features.values();
    let c = x.ncols();
    if c < 2 {
        return Err(Error::Degenerate(
            "correlation distance needs at least 2 features".into(),
        ));
    }
    let mut z = x.to_owned();
    for (i, mut row) in z.axis_iter_mut(Axis(0)).enumerate() {
        let mean = row.sum() / c as f64;
        row.mapv_inplace(|v| v - mean);
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(Error::Degenerate(format!(
                "zero-variance feature vector at row {i}"
            )));
        }
        row.mapv_inplace(|v| v / norm);
    }
    let mut rho = z.dot(&z.t());
    rho.mapv_inplace(|r| 1.0 - r.clamp(-1.0, 1.0));
    rho.diag_mut().fill(0.0);
    Ok(rho)
}

/// Mean correlation distance over unordered pairs of `nodes` (all nodes when `None`).
/// Summation runs in a fixed pair order.
pub fn mean_pair_distance(rho: &Array2<f64>, nodes: Option<&[usize]>) -> f64 {
    let all: Vec<usize>;
    let nodes = match nodes {
        Some(n) => n,
        None => {
            all = (0..rho.nrows()).collect();
            &all
        }
    };
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, &u) in nodes.iter().enumerate() {
        for &v in &nodes[a + 1..] {
            sum += rho[[u, v]];
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Resolves the kernel width: an explicit value, else the mean reference
/// distance. A population of identical profiles has mean distance 0, where
/// every kernel value is 1 for any width; σ = 1 is used then.
/// Mean distances below this are treated as zero.
pub const SIGMA_FLOOR: f64 = 1e-12;

pub fn resolve_sigma(rho: &Array2<f64>, explicit: Option<f64>, nodes: Option<&[usize]>) -> f64 {
    match explicit {
        Some(s) => s,
        None => {
            let m = mean_pair_distance(rho, nodes);
            if m > SIGMA_FLOOR {
                m
            } else {
                1.0
            }
        }
    }
}

/// Precomputed pairwise kernel for one population.
pub struct KernelMatrix {
    pub sigma: f64,
    pub values: Array2<f64>,
}

impl KernelMatrix {
    pub fn from_distances(rho: &Array2<f64>, sigma: f64) -> Self {
        Self {
            sigma,
            values: rho.mapv(|r| kernel_from_distance(r, sigma)),
        }
    }

    pub fn compute(features: &FeatureMatrix, sigma: Option<f64>, nodes: Option<&[usize]>) -> Result<Self> {
        let rho = correlation_distances(features)?;
        let s = resolve_sigma(&rho, sigma, nodes);
        Ok(Self::from_distances(&rho, s))
    }
}

fn check_aligned(features: Option<&FeatureMatrix>, records: &[AcquisitionRecord]) -> Result<()> {
    if let Some(f) = features {
        if f.n_rows() != records.len() {
            return Err(Error::Integrity(format!(
                "{} feature rows but {} records",
                f.n_rows(),
                records.len()
            )));
        }
    }
    Ok(())
}

/// Phenotypic graph. `sigma_nodes` restricts the σ estimate to a node subset
/// (the training fold) while edges still cover every pair.
pub fn build_phenotypic_graph(
    features: &FeatureMatrix,
    records: &[AcquisitionRecord],
    spec: &GraphSpec,
    sigma_nodes: Option<&[usize]>,
) -> Result<PopulationGraph> {
    spec.validate()?;
    check_aligned(Some(features), records)?;
    let kernel = match spec.sim_mode {
        SimMode::CorrelationKernel => Some(KernelMatrix::compute(features, spec.sigma, sigma_nodes)?),
        _ => None,
    };
    phenotypic_from_kernel(records, spec, kernel.as_ref())
}

/// Phenotypic graph from an already computed kernel (required for the
/// correlation-kernel mode, ignored otherwise).
pub fn phenotypic_from_kernel(
    records: &[AcquisitionRecord],
    spec: &GraphSpec,
    kernel: Option<&KernelMatrix>,
) -> Result<PopulationGraph> {
    spec.validate()?;
    let n = records.len();
    if spec.sim_mode == SimMode::CorrelationKernel && kernel.is_none() {
        return Err(Error::Parameter(
            "correlation kernel similarity requires a kernel matrix".into(),
        ));
    }
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let score = phenotype_score(&records[u], &records[v], &spec.measures, spec.theta);
            let sim = match spec.sim_mode {
                SimMode::CorrelationKernel => kernel.expect("checked above").values[[u, v]],
                SimMode::Longitudinal => {
                    longitudinal_sim(&records[u].subject_id, &records[v].subject_id, spec.lambda)
                }
                SimMode::None => 1.0,
            };
            let weight = sim * f64::from(score);
            if weight > 0.0 {
                edges.push(Edge { u, v, weight });
            }
        }
    }
    let mut prov = spec.clone();
    prov.strategy = Strategy::Phenotypic;
    prov.sigma = kernel.map(|k| k.sigma).or(spec.sigma);
    PopulationGraph::new(n, edges, prov)
}

/// Union-symmetrized k nearest neighbour graph under the feature kernel.
pub fn build_knn_graph(
    features: &FeatureMatrix,
    k: usize,
    sigma: Option<f64>,
    sigma_nodes: Option<&[usize]>,
) -> Result<PopulationGraph> {
    let kernel = KernelMatrix::compute(features, sigma, sigma_nodes)?;
    knn_from_kernel(&kernel, k)
}

pub fn knn_from_kernel(kernel: &KernelMatrix, k: usize) -> Result<PopulationGraph> {
    let n = kernel.values.nrows();
    if k < 1 || k >= n {
        return Err(Error::Parameter(format!("knn needs 1 ≤ k < N, got k={k}, N={n}")));
    }
    let mut keep = HashSet::new();
    for u in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&v| v != u).collect();
        // Most similar first; ties go to the lower index.
        order.sort_by(|&a, &b| {
            kernel.values[[u, b]]
                .total_cmp(&kernel.values[[u, a]])
                .then(a.cmp(&b))
        });
        for &v in &order[..k] {
            keep.insert((u.min(v), u.max(v)));
        }
    }
    let mut pairs: Vec<(usize, usize)> = keep.into_iter().collect();
    pairs.sort_unstable();
    let edges = pairs
        .into_iter()
        .map(|(u, v)| Edge {
            u,
            v,
            weight: kernel.values[[u, v]],
        })
        .collect();
    let prov = GraphSpec {
        strategy: Strategy::Knn,
        k,
        sigma: Some(kernel.sigma),
        measures: vec![],
        ..Default::default()
    };
    PopulationGraph::new(n, edges, prov)
}

/// Complete graph, binary or weighted by the feature kernel.
pub fn build_complete_graph(
    n: usize,
    weighted: bool,
    features: Option<&FeatureMatrix>,
    sigma: Option<f64>,
    sigma_nodes: Option<&[usize]>,
) -> Result<PopulationGraph> {
    if !weighted {
        return complete_from_kernel(n, None);
    }
    let f = features.ok_or_else(|| Error::Parameter("weighted complete graph requires features".into()))?;
    if f.n_rows() != n {
        return Err(Error::Shape(format!("{} feature rows for {n} nodes", f.n_rows())));
    }
    let kernel = KernelMatrix::compute(f, sigma, sigma_nodes)?;
    complete_from_kernel(n, Some(&kernel))
}

pub fn complete_from_kernel(n: usize, kernel: Option<&KernelMatrix>) -> Result<PopulationGraph> {
    let mut edges = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for u in 0..n {
        for v in (u + 1)..n {
            let weight = kernel.map_or(1.0, |k| k.values[[u, v]]);
            edges.push(Edge { u, v, weight });
        }
    }
    let prov = GraphSpec {
        strategy: if kernel.is_some() {
            Strategy::All
        } else {
            Strategy::Complete
        },
        measures: vec![],
        sigma: kernel.map(|k| k.sigma),
        ..Default::default()
    };
    PopulationGraph::new(n, edges, prov)
}

/// Same node count and edge count as `reference`, endpoints drawn uniformly
/// over unordered pairs without replacement, weights a random permutation of
/// the reference weights.
pub fn build_random_graph(reference: &PopulationGraph, seed: u64) -> Result<PopulationGraph> {
    let n = reference.n_nodes();
    let e = reference.n_edges();
    if e == 0 {
        return Err(Error::Parameter(
            "random rewiring needs a reference with ≥ 1 edge".into(),
        ));
    }
    let total = n * (n - 1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = rand::seq::index::sample(&mut rng, total, e).into_vec();
    picks.sort_unstable();
    let mut weights: Vec<f64> = reference.edges().iter().map(|e| e.weight).collect();
    weights.shuffle(&mut rng);
    let edges = picks
        .into_iter()
        .zip(weights)
        .map(|(p, weight)| {
            let (u, v) = pair_from_index(p, n);
            Edge { u, v, weight }
        })
        .collect();
    let mut prov = reference.provenance().clone();
    prov.strategy = Strategy::Random;
    prov.seed = seed;
    PopulationGraph::new(n, edges, prov)
}

/// Row-major index over the strict upper triangle -> (u, v).
fn pair_from_index(mut p: usize, n: usize) -> (usize, usize) {
    let mut u = 0;
    loop {
        let row = n - 1 - u;
        if p < row {
            return (u, u + 1 + p);
        }
        p -= row;
        u += 1;
    }
}

/// Builds whichever graph `spec` names. The random strategy rewires the
/// phenotypic graph built from the same spec.
pub fn build_graph(
    features: &FeatureMatrix,
    records: &[AcquisitionRecord],
    spec: &GraphSpec,
    sigma_nodes: Option<&[usize]>,
) -> Result<PopulationGraph> {
    spec.validate()?;
    check_aligned(Some(features), records)?;
    let n = records.len();
    match spec.strategy {
        Strategy::Phenotypic => build_phenotypic_graph(features, records, spec, sigma_nodes),
        Strategy::Knn => build_knn_graph(features, spec.k, spec.sigma, sigma_nodes),
        Strategy::Complete => build_complete_graph(n, false, None, None, None),
        Strategy::All => build_complete_graph(n, true, Some(features), spec.sigma, sigma_nodes),
        Strategy::Random => {
            let reference = build_phenotypic_graph(features, records, spec, sigma_nodes)?;
            build_random_graph(&reference, spec.seed)
        }
    }
}

const PROVENANCE_PREFIX: &str = "# provenance: ";

#[derive(Serialize, Deserialize)]
struct ProvenanceLine {
    n_nodes: usize,
    spec: GraphSpec,
}

/// Edge-list CSV: one provenance comment line, a `u,v,weight` header, then edges.
pub fn write_edge_list(path: &Path, graph: &PopulationGraph) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let line = serde_json::to_string(&ProvenanceLine {
        n_nodes: graph.n_nodes(),
        spec: graph.provenance().clone(),
    })?;
    let io = |e| Error::io(path, e);
    writeln!(w, "{PROVENANCE_PREFIX}{line}").map_err(io)?;
    writeln!(w, "u,v,weight").map_err(io)?;
    for e in graph.edges() {
        writeln!(w, "{},{},{}", e.u, e.v, e.weight).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_edge_list(path: &Path) -> Result<PopulationGraph> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .transpose()
        .map_err(|e| Error::io(path, e))?
        .ok_or_else(|| Error::Format("empty edge list".into()))?;
    let json = first
        .strip_prefix(PROVENANCE_PREFIX)
        .ok_or_else(|| Error::Format("edge list must start with a provenance line".into()))?;
    let prov: ProvenanceLine = serde_json::from_str(json)?;
    let header = lines.next().transpose().map_err(|e| Error::io(path, e))?;
    if header.as_deref() != Some("u,v,weight") {
        return Err(Error::Format("expected header `u,v,weight`".into()));
    }
    let mut edges = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 3 {
            return Err(Error::Format(format!(
                "edge row {} has {} fields",
                i + 1,
                cells.len()
            )));
        }
        let parse_err = |col: usize| Error::Parse {
            row: i + 1,
            col,
            value: cells[col].to_owned(),
        };
        edges.push(Edge {
            u: cells[0].parse().map_err(|_| parse_err(0))?,
            v: cells[1].parse().map_err(|_| parse_err(1))?,
            weight: cells[2].parse().map_err(|_| parse_err(2))?,
        });
    }
    PopulationGraph::new(prov.n_nodes, edges, prov.spec)
}
