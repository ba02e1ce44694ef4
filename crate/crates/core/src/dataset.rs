//! Acquisition records, imaging feature matrices, CSV ingestion and a seeded
//! synthetic population generator.
//!
//! Files are UTF-8, comma separated and always carry a header row:
//!
//! ```text
//! features.csv:   acquisition_id,f0,f1,...
//! phenotypes.csv: acquisition_id,subject_id,label,site,sex,age,gene_flag
//! ```
//!
//! An unknown label is written as `?`. An empty `gene_flag` cell means the
//! measure is missing for that acquisition.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PHENOTYPE_COLUMNS: [&str; 7] = [
    "acquisition_id",
    "subject_id",
    "label",
    "site",
    "sex",
    "age",
    "gene_flag",
];

/// Class label of an acquisition. Test nodes in a transductive run carry
/// `Unknown` so that their true class never reaches the loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Known(u8),
    Unknown,
}

impl Label {
    pub fn known(self) -> Option<u8> {
        match self {
            Label::Known(c) => Some(c),
            Label::Unknown => None,
        }
    }

    pub fn is_known(self) -> bool {
        matches!(self, Label::Known(_))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Known(c) => write!(f, "{c}"),
            Label::Unknown => f.write_str("?"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionRecord {
    pub acquisition_id: String,
    pub subject_id: String,
    pub label: Label,
    pub site: String,
    pub sex: String,
    pub age: f64,
    pub gene_flag: Option<String>,
}

/// N x C matrix of imaging features, rows keyed by acquisition id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    ids: Vec<String>,
    names: Vec<String>,
    values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(ids: Vec<String>, names: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let (n, c) = values.dim();
        if n < 2 {
            return Err(Error::Integrity(format!("N ≥ 2 required, got {n} rows")));
        }
        if c < 1 {
            return Err(Error::Integrity("C ≥ 1 required, got 0 columns".into()));
        }
        if ids.len() != n {
            return Err(Error::Shape(format!("{} ids for {n} rows", ids.len())));
        }
        if names.len() != c {
            return Err(Error::Shape(format!("{} names for {c} columns", names.len())));
        }
        if let Some(((r, col), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Integrity(format!(
                "non-finite value {v} at row {r}, column {col}"
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Integrity(format!("duplicate acquisition_id {id:?}")));
            }
        }
        Ok(Self { ids, names, values })
    }

    /// Builds a matrix with generated ids `a0, a1, ...` and names `f0, f1, ...`.
    pub fn from_array(values: Array2<f64>) -> Result<Self> {
        let ids = (0..values.nrows()).map(|i| format!("a{i}")).collect();
        let names = (0..values.ncols()).map(|j| format!("f{j}")).collect();
        Self::new(ids, names, values)
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Same rows, new columns (e.g. after feature selection).
    pub fn with_values(&self, values: Array2<f64>, names: Vec<String>) -> Result<Self> {
        Self::new(self.ids.clone(), names, values)
    }

    /// Rows permuted by `order` (row `i` of the result is row `order[i]`).
    pub fn permute_rows(&self, order: &[usize]) -> Result<Self> {
        let ids = order.iter().map(|&i| self.ids[i].clone()).collect();
        Self::new(ids, self.names.clone(), self.values.select(Axis(0), order))
    }
}

/// Features and phenotypes with matching row order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: FeatureMatrix,
    pub records: Vec<AcquisitionRecord>,
}

impl Dataset {
    pub fn new(features: FeatureMatrix, records: Vec<AcquisitionRecord>) -> Result<Self> {
        if features.n_rows() != records.len() {
            return Err(Error::Integrity(format!(
                "{} feature rows but {} phenotype records",
                features.n_rows(),
                records.len()
            )));
        }
        for (i, (id, rec)) in features.ids().iter().zip(&records).enumerate() {
            if *id != rec.acquisition_id {
                return Err(Error::Integrity(format!(
                    "row {i}: feature id {id:?} does not match phenotype id {:?}",
                    rec.acquisition_id
                )));
            }
        }
        Ok(Self { features, records })
    }

    pub fn load(features: &Path, phenotypes: &Path) -> Result<Self> {
        Self::new(load_features(features)?, load_phenotypes(phenotypes)?)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Consistent reordering of features and records.
    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        let records = order.iter().map(|&i| self.records[i].clone()).collect();
        Self::new(self.features.permute_rows(order)?, records)
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file))
}

pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let mut rdr = open_reader(path)?;
    let header = rdr.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Format(format!(
            "{}: header needs acquisition_id plus at least one feature column",
            path.display()
        )));
    }
    let width = header.len();
    let names: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut ids = Vec::new();
    let mut flat = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != width {
            return Err(Error::Format(format!(
                "{}: data row {row} has {} fields, header has {width}",
                path.display(),
                rec.len()
            )));
        }
        ids.push(rec[0].to_owned());
        for (col, cell) in rec.iter().enumerate().skip(1) {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row,
                col,
                value: cell.to_owned(),
            })?;
            flat.push(v);
        }
    }
    let n = ids.len();
    let values = Array2::from_shape_vec((n, width - 1), flat).map_err(|e| Error::Format(e.to_string()))?;
    FeatureMatrix::new(ids, names, values)
}

pub fn load_phenotypes(path: &Path) -> Result<Vec<AcquisitionRecord>> {
    let mut rdr = open_reader(path)?;
    let header = rdr.headers()?.clone();
    let mut index = [0usize; 7];
    for (slot, name) in index.iter_mut().zip(PHENOTYPE_COLUMNS) {
        *slot = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Format(format!("{}: missing required column {name:?}", path.display())))?;
    }
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != header.len() {
            return Err(Error::Format(format!(
                "{}: data row {row} has {} fields, header has {}",
                path.display(),
                rec.len(),
                header.len()
            )));
        }
        let cell = |k: usize| rec[index[k]].trim();
        let label = match cell(2) {
            "?" => Label::Unknown,
            "0" => Label::Known(0),
            "1" => Label::Known(1),
            other => {
                return Err(Error::Integrity(format!(
                    "row {row}: label must be 0, 1 or ?, got {other:?}"
                )))
            }
        };
        let age: f64 = cell(5).parse().map_err(|_| Error::Parse {
            row,
            col: index[5],
            value: cell(5).to_owned(),
        })?;
        if !(age >= 0.0) || !age.is_finite() {
            return Err(Error::Integrity(format!(
                "row {row}: age must be a non-negative number, got {age}"
            )));
        }
        let acquisition_id = cell(0).to_owned();
        if !seen.insert(acquisition_id.clone()) {
            return Err(Error::Integrity(format!(
                "duplicate acquisition_id {acquisition_id:?}"
            )));
        }
        let gene = cell(6);
        out.push(AcquisitionRecord {
            acquisition_id,
            subject_id: cell(1).to_owned(),
            label,
            site: cell(3).to_owned(),
            sex: cell(4).to_owned(),
            age,
            gene_flag: (!gene.is_empty()).then(|| gene.to_owned()),
        });
    }
    Ok(out)
}

pub fn write_features(path: &Path, features: &FeatureMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["acquisition_id".to_owned()];
    header.extend(features.names().iter().cloned());
    w.write_record(&header)?;
    for (id, row) in features.ids().iter().zip(features.values().rows()) {
        let mut rec = Vec::with_capacity(row.len() + 1);
        rec.push(id.clone());
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_phenotypes(path: &Path, records: &[AcquisitionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(PHENOTYPE_COLUMNS)?;
    for r in records {
        w.write_record([
            r.acquisition_id.as_str(),
            r.subject_id.as_str(),
            &r.label.to_string(),
            r.site.as_str(),
            r.sex.as_str(),
            &r.age.to_string(),
            r.gene_flag.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Strict upper triangle of a symmetric connectivity matrix, row-major.
pub fn vectorize_connectivity(m: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::Shape(format!("connectivity matrix is {r}x{c}")));
    }
    if r < 2 {
        return Err(Error::Parameter(format!("R ≥ 2 required, got {r}")));
    }
    let mut out = Vec::with_capacity(r * (r - 1) / 2);
    for i in 0..r {
        for j in (i + 1)..r {
            if (m[[i, j]] - m[[j, i]]).abs() > 1e-8 {
                return Err(Error::Integrity(format!(
                    "connectivity matrix not symmetric at ({i},{j}): {} vs {}",
                    m[[i, j]],
                    m[[j, i]]
                )));
            }
            out.push(m[[i, j]]);
        }
    }
    Ok(Array1::from(out))
}

/// Inverse of [`vectorize_connectivity`]: symmetric matrix with unit diagonal.
pub fn connectivity_from_vector(v: &[f64], r: usize) -> Result<Array2<f64>> {
    if v.len() != r * r.saturating_sub(1) / 2 {
        return Err(Error::Shape(format!(
            "vector of length {} cannot fill a {r}x{r} upper triangle",
            v.len()
        )));
    }
    let mut m = Array2::eye(r);
    let mut it = v.iter();
    for i in 0..r {
        for j in (i + 1)..r {
            let x = *it.next().expect("length checked");
            m[[i, j]] = x;
            m[[j, i]] = x;
        }
    }
    Ok(m)
}

/// arctanh of a Pearson correlation.
pub fn fisher_transform(r: f64) -> Result<f64> {
    if !(r.abs() < 1.0) {
        return Err(Error::Domain(format!("fisher transform needs |r| < 1, got {r}")));
    }
    Ok(r.atanh())
}

/// Parameters of the synthetic population generator.
///
/// Each subject gets a class label (balanced to within one subject), a site,
/// a sex, an age and a gene flag, and a latent feature vector drawn once.
/// Every scan of the subject is `class mean + site shift + latent + noise`.
/// The class means differ by `class_separation` along a random unit
/// direction. `sex_effect` and `site_effect` control how strongly sex and
/// site are associated with the label (0 = independent).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_subjects: usize,
    pub scans_min: usize,
    pub scans_max: usize,
    pub n_sites: usize,
    pub n_features: usize,
    pub class_separation: f64,
    pub site_shift_scale: f64,
    pub sex_effect: f64,
    pub site_effect: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_subjects: 200,
            scans_min: 1,
            scans_max: 3,
            n_sites: 4,
            n_features: 20,
            class_separation: 1.0,
            site_shift_scale: 1.0,
            sex_effect: 0.4,
            site_effect: 0.4,
            noise_scale: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let count = |name: &str, v: usize| {
            if v < 1 {
                Err(Error::config(format!("synthetic.{name}"), "must be ≥ 1"))
            } else {
                Ok(())
            }
        };
        count("n_subjects", self.n_subjects)?;
        count("scans_min", self.scans_min)?;
        count("n_sites", self.n_sites)?;
        count("n_features", self.n_features)?;
        if self.scans_max < self.scans_min {
            return Err(Error::config("synthetic.scans_max", "must be ≥ scans_min"));
        }
        if self.n_subjects < 2 {
            return Err(Error::config("synthetic.n_subjects", "must be ≥ 2"));
        }
        if !(self.class_separation >= 0.0) {
            return Err(Error::config("synthetic.class_separation", "must be ≥ 0"));
        }
        if !(self.site_shift_scale >= 0.0) {
            return Err(Error::config("synthetic.site_shift_scale", "must be ≥ 0"));
        }
        if !(self.noise_scale > 0.0) {
            return Err(Error::config("synthetic.noise_scale", "must be > 0"));
        }
        if !(self.sex_effect.abs() <= 1.0) {
            return Err(Error::config("synthetic.sex_effect", "must lie in [-1, 1]"));
        }
        if !(self.site_effect.abs() <= 1.0) {
            return Err(Error::config("synthetic.site_effect", "must lie in [-1, 1]"));
        }
        Ok(())
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Array1<f64> {
    Array1::from_iter((0..n).map(|_| {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    }))
}

/// Deterministic function of the config (seed included).
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let c = cfg.n_features;

    let mut direction = normal_vec(&mut rng, c, 1.0);
    let norm = direction.dot(&direction).sqrt();
    direction /= norm;
    let half = &direction * (cfg.class_separation / 2.0);
    let site_shifts: Vec<Array1<f64>> = (0..cfg.n_sites)
        .map(|_| normal_vec(&mut rng, c, cfg.site_shift_scale))
        .collect();

    let n_pos = cfg.n_subjects / 2;
    let mut subject_labels: Vec<u8> = (0..cfg.n_subjects).map(|i| u8::from(i < n_pos)).collect();
    subject_labels.shuffle(&mut rng);

    // Per-site tilt in [-1, 1]; positive sites are over-represented in class 1.
    let site_tilt: Vec<f64> = (0..cfg.n_sites)
        .map(|j| {
            if cfg.n_sites == 1 {
                0.0
            } else {
                2.0 * j as f64 / (cfg.n_sites - 1) as f64 - 1.0
            }
        })
        .collect();

    let mut records = Vec::new();
    let mut rows: Vec<Array1<f64>> = Vec::new();
    for (s, &y) in subject_labels.iter().enumerate() {
        let sign = if y == 1 { 1.0 } else { -1.0 };
        let weights: Vec<f64> = site_tilt
            .iter()
            .map(|t| (1.0 + sign * cfg.site_effect * t).max(0.0) + 1e-12)
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut site = cfg.n_sites - 1;
        for (j, w) in weights.iter().enumerate() {
            if u < *w {
                site = j;
                break;
            }
            u -= w;
        }
        let p_male = (0.5 + sign * cfg.sex_effect / 2.0).clamp(0.0, 1.0);
        let sex = if rng.random::<f64>() < p_male { "M" } else { "F" };
        let p_carrier = 0.3 + 0.2 * f64::from(y);
        let gene = if rng.random::<f64>() < p_carrier {
            "carrier"
        } else {
            "noncarrier"
        };
        let base_age = 20.0 + 60.0 * rng.random::<f64>();
        let n_scans = rng.random_range(cfg.scans_min..=cfg.scans_max);

        let mean = if y == 1 { half.clone() } else { -&half };
        let latent = normal_vec(&mut rng, c, 1.0) + &mean + &site_shifts[site];
        for t in 0..n_scans {
            let x = &latent + &normal_vec(&mut rng, c, cfg.noise_scale);
            rows.push(x);
            records.push(AcquisitionRecord {
                acquisition_id: format!("s{s}_t{t}"),
                subject_id: format!("s{s}"),
                label: Label::Known(y),
                site: format!("site{site}"),
                sex: sex.to_owned(),
                age: ((base_age + t as f64) * 10.0).round() / 10.0,
                gene_flag: Some(gene.to_owned()),
            });
        }
    }
    if records.len() < 2 {
        return Err(Error::config(
            "synthetic.n_subjects",
            "population must contain at least 2 acquisitions",
        ));
    }
    let mut values = Array2::zeros((rows.len(), c));
    for (mut dst, src) in values.rows_mut().into_iter().zip(&rows) {
        dst.assign(src);
    }
    let ids = records.iter().map(|r| r.acquisition_id.clone()).collect();
    let names = (0..c).map(|j| format!("f{j}")).collect();
    Dataset::new(FeatureMatrix::new(ids, names, values)?, records)
}
