//! Grouped stratified cross-validation, metrics, seed ensembling and the
//! experiment driver.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, MLP_EPOCHS};
use crate::dataset::{AcquisitionRecord, Dataset, Label};
use crate::error::{Error, Result};
use crate::featsel::{FittedSelector, SelectorConfig};
use crate::gcn::{self, GcnConfig, GraphInput, TrainMask};
use crate::popgraph::{self, GraphSpec};

/// Fold index per acquisition.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<usize>,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.folds {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Subject-grouped stratified k-fold.
///
/// Subjects are visited largest first (the seed shuffles subjects of equal
/// size) and each goes to the fold holding the fewest subjects of its class,
/// then the fewest acquisitions, then the lowest index.
pub fn stratified_group_kfold(records: &[AcquisitionRecord], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Parameter(format!("fold count must be ≥ 2, got {k}")));
    }
    let mut groups: BTreeMap<&str, (Vec<usize>, u8)> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let y = r.label.known().ok_or_else(|| {
            Error::Integrity(format!(
                "acquisition {} has no label; cross-validation needs labels",
                r.acquisition_id
            ))
        })?;
        let entry = groups.entry(r.subject_id.as_str()).or_insert((Vec::new(), y));
        if entry.1 != y {
            return Err(Error::Integrity(format!(
                "subject {} has acquisitions with different labels",
                r.subject_id
            )));
        }
        entry.0.push(i);
    }
    if groups.len() < k {
        return Err(Error::Parameter(format!(
            "{} subjects cannot fill {k} folds",
            groups.len()
        )));
    }
    let mut order: Vec<(Vec<usize>, u8)> = groups.into_values().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by_key(|g| std::cmp::Reverse(g.0.len()));
    let n_classes = order.iter().map(|g| g.1 as usize + 1).max().unwrap_or(1);
    let mut class_counts = vec![vec![0usize; n_classes]; k];
    let mut sizes = vec![0usize; k];
    let mut folds = vec![0usize; records.len()];
    for (members, y) in &order {
        let f = (0..k)
            .min_by_key(|&f| (class_counts[f][*y as usize], sizes[f], f))
            .expect("k ≥ 2");
        class_counts[f][*y as usize] += 1;
        sizes[f] += members.len();
        for &i in members {
            folds[i] = f;
        }
    }
    Ok(FoldAssignment { k, seed, folds })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub auc: Option<f64>,
}

/// Threshold prediction: `p > 0.5` is class 1, anything else class 0.
pub fn threshold(p: f64) -> u8 {
    u8::from(p > 0.5)
}

/// Mann–Whitney AUC over all positive/negative pairs, ties counted half.
/// `None` when either class is absent.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let mut neg: Vec<f64> = scores
        .iter()
        .zip(labels)
        .filter(|(_, &y)| y == 0)
        .map(|(&s, _)| s)
        .collect();
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    if neg.is_empty() || n_pos == 0 {
        return None;
    }
    neg.sort_by(f64::total_cmp);
    // Twice the Mann-Whitney count, in integers.
    let mut doubled: u64 = 0;
    for (&s, _) in scores.iter().zip(labels).filter(|(_, &y)| y == 1) {
        let below = neg.partition_point(|&v| v < s) as u64;
        let not_above = neg.partition_point(|&v| v <= s) as u64;
        doubled += 2 * below + (not_above - below);
    }
    Some(doubled as f64 / (2 * n_pos as u64 * neg.len() as u64) as f64)
}

pub fn compute_metrics(probs: &[f64], labels: &[u8]) -> Result<Metrics> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::Parameter("metrics need at least one prediction".into()));
    }
    if let Some(&y) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Parameter(format!("binary metrics got label {y}")));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Parameter(format!("probability {p} outside [0, 1]")));
    }
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| threshold(p) == y)
        .count();
    Ok(Metrics {
        accuracy: hits as f64 / labels.len() as f64,
        auc: auc(probs, labels),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    Average,
    MajorityVote,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub labels: Vec<u8>,
    pub mean_probabilities: Vec<f64>,
    pub metrics: Metrics,
}

/// Combines per-seed positive-class probabilities for the same nodes.
///
/// `Average` reports the mean of the per-seed metrics, with labels from
/// the mean probability. `MajorityVote` takes the modal per-seed label;
/// split votes go to class 1 when the mean probability exceeds 0.5.
pub fn ensemble_seeds(per_seed: &[Vec<f64>], labels: &[u8], mode: EnsembleMode) -> Result<Ensemble> {
    let first = per_seed
        .first()
        .ok_or_else(|| Error::Parameter("ensembling needs at least one seed".into()))?;
    if per_seed.iter().any(|p| p.len() != first.len()) || first.len() != labels.len() {
        return Err(Error::Shape("per-seed predictions are not aligned".into()));
    }
    let s = per_seed.len() as f64;
    let mean: Vec<f64> = (0..labels.len())
        .map(|i| per_seed.iter().map(|p| p[i]).sum::<f64>() / s)
        .collect();
    match mode {
        EnsembleMode::Average => {
            let runs = per_seed
                .iter()
                .map(|p| compute_metrics(p, labels))
                .collect::<Result<Vec<_>>>()?;
            let accuracy = runs.iter().map(|m| m.accuracy).sum::<f64>() / s;
            let aucs: Option<Vec<f64>> = runs.iter().map(|m| m.auc).collect();
            Ok(Ensemble {
                labels: mean.iter().map(|&p| threshold(p)).collect(),
                metrics: Metrics {
                    accuracy,
                    auc: aucs.map(|a| a.iter().sum::<f64>() / s),
                },
                mean_probabilities: mean,
            })
        }
        EnsembleMode::MajorityVote => {
            let voted: Vec<u8> = (0..labels.len())
                .map(|i| {
                    let ones = per_seed.iter().filter(|p| threshold(p[i]) == 1).count();
                    let zeros = per_seed.len() - ones;
                    match ones.cmp(&zeros) {
                        std::cmp::Ordering::Greater => 1,
                        std::cmp::Ordering::Less => 0,
                        std::cmp::Ordering::Equal => threshold(mean[i]),
                    }
                })
                .collect();
            let hits = voted.iter().zip(labels).filter(|(a, b)| a == b).count();
            let m = compute_metrics(&mean, labels)?;
            Ok(Ensemble {
                metrics: Metrics {
                    accuracy: hits as f64 / labels.len() as f64,
                    auc: m.auc,
                },
                labels: voted,
                mean_probabilities: mean,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gcn,
    Ridge,
    Mlp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Abide,
    Adni,
}

/// Model choice plus hyperparameters. Unset GCN/MLP fields come from the
/// preset; the MLP baseline defaults to 200 epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub preset: Preset,
    pub hidden_layers: Option<usize>,
    pub hidden_width: Option<usize>,
    pub cheb_order: Option<usize>,
    pub dropout_rate: Option<f64>,
    pub l2_coeff: Option<f64>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub use_bias: Option<bool>,
    /// Ridge penalty.
    pub alpha: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Gcn,
            preset: Preset::Abide,
            hidden_layers: None,
            hidden_width: None,
            cheb_order: None,
            dropout_rate: None,
            l2_coeff: None,
            learning_rate: None,
            epochs: None,
            use_bias: None,
            alpha: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn gcn_config(&self) -> GcnConfig {
        let base = match self.preset {
            Preset::Abide => GcnConfig::abide(),
            Preset::Adni => GcnConfig::adni(),
        };
        let default_epochs = match self.kind {
            ModelKind::Mlp => MLP_EPOCHS,
            _ => base.epochs,
        };
        GcnConfig {
            hidden_layers: self.hidden_layers.unwrap_or(base.hidden_layers),
            hidden_width: self.hidden_width.or(base.hidden_width),
            cheb_order: match self.kind {
                ModelKind::Gcn => self.cheb_order.unwrap_or(base.cheb_order),
                _ => 0,
            },
            dropout_rate: self.dropout_rate.unwrap_or(base.dropout_rate),
            l2_coeff: self.l2_coeff.unwrap_or(base.l2_coeff),
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            epochs: self.epochs.unwrap_or(default_epochs),
            use_bias: self.use_bias.unwrap_or(base.use_bias),
            ..base
        }
    }

    /// Same model with every preset-derived field written out.
    pub fn resolved(&self) -> Self {
        if self.kind == ModelKind::Ridge {
            return self.clone();
        }
        let g = self.gcn_config();
        Self {
            hidden_layers: Some(g.hidden_layers),
            hidden_width: g.hidden_width,
            cheb_order: (self.kind == ModelKind::Gcn).then_some(g.cheb_order),
            dropout_rate: Some(g.dropout_rate),
            l2_coeff: Some(g.l2_coeff),
            learning_rate: Some(g.learning_rate),
            epochs: Some(g.epochs),
            use_bias: Some(g.use_bias),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ModelKind::Gcn => self.gcn_config().validate(),
            ModelKind::Mlp => self.gcn_config().validate_common("model"),
            ModelKind::Ridge if !(self.alpha > 0.0) => Err(Error::config("model.alpha", "must be > 0")),
            ModelKind::Ridge => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    /// Model initialisation seeds; every fold is trained once per seed.
    pub seeds: Vec<u64>,
    /// Seed for the fold assignment.
    pub fold_seed: u64,
    /// Estimate the kernel width over all node pairs instead of training pairs.
    pub sigma_all_pairs: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            seeds: (0..10).collect(),
            fold_seed: 0,
            sigma_all_pairs: false,
        }
    }
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::config("cv.folds", "must be ≥ 2"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("cv.seeds", "needs at least one seed"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub graph: GraphSpec,
    pub model: ModelConfig,
    pub selector: SelectorConfig,
    pub cv: CvConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            graph: GraphSpec::default(),
            model: ModelConfig::default(),
            selector: SelectorConfig::default(),
            cv: CvConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains([',', '\n', '"']) {
            return Err(Error::config(
                "name",
                "must be non-empty without commas, quotes or newlines",
            ));
        }
        if self.model.kind == ModelKind::Gcn {
            self.graph.validate()?;
        }
        self.model.validate()?;
        self.selector.validate()?;
        self.cv.validate()
    }

    pub fn resolved(&self) -> Self {
        Self {
            model: self.model.resolved(),
            ..self.clone()
        }
    }
}

/// Predictions of one model (fold, seed) on its test fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub seed: u64,
    pub test_ids: Vec<String>,
    pub labels: Vec<u8>,
    pub predicted: Vec<u8>,
    pub probabilities: Vec<f64>,
    pub accuracy: f64,
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldGraphInfo {
    pub fold: usize,
    pub n_edges: usize,
    pub components: usize,
    pub isolated: usize,
    pub lambda_max: f64,
    pub lambda_fallback: bool,
}

/// Selector output for one fold. `explained_variance` is the fraction of
/// training variance retained by PCA.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSelectorInfo {
    pub fold: usize,
    pub n_features: usize,
    pub explained_variance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub fold: usize,
    pub seed: Option<u64>,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Mean and population standard deviation. `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub folds: usize,
    pub seeds: Vec<u64>,
    /// Over folds of the seed-averaged fold accuracy.
    pub accuracy: Option<Stat>,
    /// Folds where either class is missing from the test set are skipped.
    pub auc: Option<Stat>,
    /// Mean over folds, per seed.
    pub per_seed_accuracy: Vec<f64>,
    pub majority_vote_accuracy: Option<Stat>,
    pub majority_vote_auc: Option<Stat>,
}

impl Summary {
    /// Aggregates recomputed from per-fold records.
    pub fn from_records(records: &[FoldRecord]) -> Result<Self> {
        let mut by_fold: BTreeMap<usize, Vec<&FoldRecord>> = BTreeMap::new();
        for r in records {
            by_fold.entry(r.fold).or_default().push(r);
        }
        let mut seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        let (mut acc, mut aucs, mut mv_acc, mut mv_auc) = (vec![], vec![], vec![], vec![]);
        for runs in by_fold.values() {
            let probs: Vec<Vec<f64>> = runs.iter().map(|r| r.probabilities.clone()).collect();
            let avg = ensemble_seeds(&probs, &runs[0].labels, EnsembleMode::Average)?;
            let mv = ensemble_seeds(&probs, &runs[0].labels, EnsembleMode::MajorityVote)?;
            acc.push(avg.metrics.accuracy);
            aucs.extend(avg.metrics.auc);
            mv_acc.push(mv.metrics.accuracy);
            mv_auc.extend(mv.metrics.auc);
        }
        let per_seed_accuracy = seeds
            .iter()
            .map(|&s| {
                let v: Vec<f64> = records
                    .iter()
                    .filter(|r| r.seed == s)
                    .map(|r| r.accuracy)
                    .collect();
                v.iter().sum::<f64>() / v.len() as f64
            })
            .collect();
        Ok(Self {
            folds: by_fold.len(),
            seeds,
            accuracy: Stat::of(&acc),
            auc: Stat::of(&aucs),
            per_seed_accuracy,
            majority_vote_accuracy: Stat::of(&mv_acc),
            majority_vote_auc: Stat::of(&mv_auc),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config: ExperimentConfig,
    pub n_nodes: usize,
    pub folds: FoldAssignment,
    pub records: Vec<FoldRecord>,
    pub graphs: Vec<FoldGraphInfo>,
    pub selectors: Vec<FoldSelectorInfo>,
    pub failures: Vec<Failure>,
    pub summary: Summary,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn fmt_stat(s: Option<Stat>) -> String {
    s.map_or_else(|| "n/a".into(), |s| format!("{:.4} ± {:.4}", s.mean, s.std))
}

impl ExperimentReport {
    pub fn mean_accuracy(&self) -> f64 {
        self.summary.accuracy.map_or(f64::NAN, |s| s.mean)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// `experiment,fold,seed,accuracy,auc`, one row per record.
    pub fn plot_csv(&self) -> String {
        let mut out = String::from("experiment,fold,seed,accuracy,auc\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                self.name,
                r.fold,
                r.seed,
                r.accuracy,
                fmt_opt(r.auc)
            );
        }
        out
    }

    pub fn summary_text(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        let _ = writeln!(out, "experiment      {}", self.name);
        let _ = writeln!(out, "nodes           {}", self.n_nodes);
        let _ = writeln!(out, "folds x seeds   {} x {}", s.folds, s.seeds.len());
        let _ = writeln!(out, "accuracy        {}", fmt_stat(s.accuracy));
        let _ = writeln!(out, "auc             {}", fmt_stat(s.auc));
        let _ = writeln!(out, "vote accuracy   {}", fmt_stat(s.majority_vote_accuracy));
        let _ = writeln!(out, "vote auc        {}", fmt_stat(s.majority_vote_auc));
        let ev: Vec<f64> = self
            .selectors
            .iter()
            .filter_map(|f| f.explained_variance)
            .collect();
        if let Some(ev) = Stat::of(&ev) {
            let _ = writeln!(out, "explained var   {}", fmt_stat(Some(ev)));
        }
        for (seed, a) in s.seeds.iter().zip(&s.per_seed_accuracy) {
            let _ = writeln!(out, "seed {seed:<10} {a:.4}");
        }
        for f in &self.failures {
            let seed = f.seed.map_or_else(|| "-".into(), |s| s.to_string());
            let _ = writeln!(out, "FAILED fold {} seed {}: {}", f.fold, seed, f.message);
        }
        out
    }

    /// Writes `report.json`, `summary.txt` and `plot.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("report.json", self.to_json()?),
            ("summary.txt", self.summary_text()),
            ("plot.csv", self.plot_csv()),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

struct FoldOutcome {
    records: Vec<FoldRecord>,
    graph: Option<FoldGraphInfo>,
    selector: Option<FoldSelectorInfo>,
    failure: Option<Failure>,
}

fn known_labels(dataset: &Dataset, idx: &[usize]) -> Result<Vec<u8>> {
    idx.iter()
        .map(|&i| {
            dataset.records[i].label.known().ok_or_else(|| {
                Error::Integrity(format!(
                    "acquisition {} has no label",
                    dataset.records[i].acquisition_id
                ))
            })
        })
        .collect()
}

fn make_record(
    dataset: &Dataset,
    fold: usize,
    seed: u64,
    test: &[usize],
    truth: &[u8],
    probabilities: Vec<f64>,
) -> Result<FoldRecord> {
    let m = compute_metrics(&probabilities, truth)?;
    Ok(FoldRecord {
        fold,
        seed,
        test_ids: test
            .iter()
            .map(|&i| dataset.records[i].acquisition_id.clone())
            .collect(),
        labels: truth.to_vec(),
        predicted: probabilities.iter().map(|&p| threshold(p)).collect(),
        probabilities,
        accuracy: m.accuracy,
        auc: m.auc,
    })
}

/// Input features for one fold after the selector has been fitted on the
/// training rows.
fn fold_features(
    dataset: &Dataset,
    cfg: &ExperimentConfig,
    fold: usize,
    train: &[usize],
    y_train: &[u8],
) -> Result<(Array2<f64>, FoldSelectorInfo)> {
    let x_all = dataset.features.values().view();
    let x_train = x_all.select(Axis(0), train);
    let selector = FittedSelector::fit(&cfg.selector, x_train.view(), y_train)?;
    let x = selector.transform(x_all)?;
    let info = FoldSelectorInfo {
        fold,
        n_features: x.ncols(),
        explained_variance: selector.explained_variance_ratio().map(|r| r.iter().sum()),
    };
    Ok((x, info))
}

fn run_fold(dataset: &Dataset, cfg: &ExperimentConfig, folds: &FoldAssignment, fold: usize) -> FoldOutcome {
    let mut out = FoldOutcome {
        records: Vec::new(),
        graph: None,
        selector: None,
        failure: None,
    };
    if let Err(e) = run_fold_inner(dataset, cfg, folds, fold, &mut out) {
        out.failure = Some(Failure {
            fold,
            seed: cfg.cv.seeds.get(out.records.len()).copied(),
            message: e.to_string(),
        });
    }
    out
}

fn run_fold_inner(
    dataset: &Dataset,
    cfg: &ExperimentConfig,
    folds: &FoldAssignment,
    fold: usize,
    out: &mut FoldOutcome,
) -> Result<()> {
    let train = folds.train_indices(fold);
    let test = folds.test_indices(fold);
    if test.is_empty() {
        return Err(Error::Parameter(format!("fold {fold} has no test acquisitions")));
    }
    let y_train = known_labels(dataset, &train)?;
    let truth = known_labels(dataset, &test)?;
    let (x, selector) = fold_features(dataset, cfg, fold, &train, &y_train)?;
    out.selector = Some(selector);
    let gcfg = cfg.model.gcn_config();
    let test_probs = |probs: &[f64]| test.iter().map(|&i| probs[i]).collect::<Vec<f64>>();
    match cfg.model.kind {
        ModelKind::Gcn => {
            let features = dataset
                .features
                .with_values(x.clone(), (0..x.ncols()).map(|j| format!("f{j}")).collect())?;
            let sigma_nodes = (!cfg.cv.sigma_all_pairs).then_some(&train[..]);
            let graph = popgraph::build_graph(&features, &dataset.records, &cfg.graph, sigma_nodes)?;
            let input = GraphInput::new(&graph, x.view(), gcfg.cheb_order)?;
            let (components, isolated) = graph.component_counts();
            let lm = input.lambda_max().expect("graph input");
            out.graph = Some(FoldGraphInfo {
                fold,
                n_edges: graph.n_edges(),
                components,
                isolated,
                lambda_max: lm.value,
                lambda_fallback: lm.fallback,
            });
            // Only training labels reach the model.
            let mut labels = vec![Label::Unknown; dataset.len()];
            for (&i, &y) in train.iter().zip(&y_train) {
                labels[i] = Label::Known(y);
            }
            let mask = TrainMask::from_indices(dataset.len(), &train, &labels)?;
            for &seed in &cfg.cv.seeds {
                let run_cfg = GcnConfig { seed, ..gcfg.clone() };
                let (model, _) =
                    gcn::train_prepared(&run_cfg, run_cfg.cheb_order, &input, &labels, &mask, None)?;
                let probs = model.predict(&input)?.positive();
                out.records.push(make_record(
                    dataset,
                    fold,
                    seed,
                    &test,
                    &truth,
                    test_probs(&probs),
                )?);
            }
        }
        ModelKind::Ridge => {
            let res = baselines::ridge_classify(
                x.select(Axis(0), &train).view(),
                &y_train,
                x.select(Axis(0), &test).view(),
                cfg.model.alpha,
            )?;
            for &seed in &cfg.cv.seeds {
                out.records.push(make_record(
                    dataset,
                    fold,
                    seed,
                    &test,
                    &truth,
                    res.probabilities.clone(),
                )?);
            }
        }
        ModelKind::Mlp => {
            let (x_train, x_test) = (x.select(Axis(0), &train), x.select(Axis(0), &test));
            for &seed in &cfg.cv.seeds {
                let run_cfg = GcnConfig { seed, ..gcfg.clone() };
                let res = baselines::mlp_classify(x_train.view(), &y_train, x_test.view(), &run_cfg)?;
                out.records.push(make_record(
                    dataset,
                    fold,
                    seed,
                    &test,
                    &truth,
                    res.probabilities,
                )?);
            }
        }
    }
    Ok(())
}

/// Cross-validated experiment with folds from `stratified_group_kfold`.
pub fn run_experiment(dataset: &Dataset, cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let folds = stratified_group_kfold(&dataset.records, cfg.cv.folds, cfg.cv.fold_seed)?;
    run_with_folds(dataset, cfg, &folds, jobs)
}

/// Cross-validated experiment on a given fold assignment. Fold failures are
/// recorded in the report rather than aborting the other folds.
pub fn run_with_folds(
    dataset: &Dataset,
    cfg: &ExperimentConfig,
    folds: &FoldAssignment,
    jobs: usize,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    if folds.folds.len() != dataset.len() {
        return Err(Error::Shape(format!(
            "fold assignment covers {} acquisitions, dataset has {}",
            folds.folds.len(),
            dataset.len()
        )));
    }
    let outcomes: Vec<FoldOutcome> = if jobs <= 1 {
        (0..folds.k).map(|f| run_fold(dataset, cfg, folds, f)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..folds.k)
                .into_par_iter()
                .map(|f| run_fold(dataset, cfg, folds, f))
                .collect()
        })
    };
    let mut records = Vec::new();
    let mut graphs = Vec::new();
    let mut selectors = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        records.extend(o.records);
        graphs.extend(o.graph);
        selectors.extend(o.selector);
        failures.extend(o.failure);
    }
    let summary = Summary::from_records(&records)?;
    Ok(ExperimentReport {
        name: cfg.name.clone(),
        config: cfg.resolved(),
        n_nodes: dataset.len(),
        folds: folds.clone(),
        records,
        graphs,
        selectors,
        failures,
        summary,
    })
}
