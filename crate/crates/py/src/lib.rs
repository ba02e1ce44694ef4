//! Python bindings: datasets, population graphs, spectral operators, GCN
//! training and the cross-validation driver. Matrices cross the boundary as
//! lists of rows (numpy arrays are accepted on input); configuration is
//! passed as dicts using the same keys as the TOML config file.

use std::path::PathBuf;

use ndarray::{Array1, Array2};
use popgcn::dataset::{self, Dataset, Label, SyntheticConfig};
use popgcn::gcn::{self, GcnConfig, GcnModel, GraphInput, TrainMask};
use popgcn::harness::{self, ExperimentConfig, ExperimentReport};
use popgcn::popgraph::{self, GraphSpec, PopulationGraph};
use popgcn::{spectral, Error};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(PyValueError::new_err("matrix rows have different lengths"));
    }
    Array2::from_shape_vec((n, c), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Dict (or None) to a config struct, via JSON so the TOML keys apply.
fn config<T: DeserializeOwned + Default>(py: Python<'_>, obj: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    match obj {
        None => Ok(T::default()),
        Some(o) if o.is_none() => Ok(T::default()),
        Some(o) => {
            let text: String = py.import("json")?.call_method1("dumps", (o,))?.extract()?;
            serde_json::from_str(&text).map_err(|e| PyValueError::new_err(format!("invalid config: {e}")))
        }
    }
}

fn labels_from(values: Vec<Option<u8>>) -> Vec<Label> {
    values
        .into_iter()
        .map(|v| v.map_or(Label::Unknown, Label::Known))
        .collect()
}

/// Acquisitions with imaging features and phenotypes.
#[pyclass(name = "Dataset", module = "popgcn_py", frozen)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(features: PathBuf, phenotypes: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Dataset::load(&features, &phenotypes).map_err(to_py)?,
        })
    }

    /// Synthetic population; keys as in the `[synthetic]` config table.
    #[staticmethod]
    #[pyo3(signature = (config=None))]
    fn synthetic(py: Python<'_>, config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let cfg: SyntheticConfig = self::config(py, config)?;
        Ok(Self {
            inner: dataset::generate_synthetic(&cfg).map_err(to_py)?,
        })
    }

    fn write(&self, features: PathBuf, phenotypes: PathBuf) -> PyResult<()> {
        dataset::write_features(&features, &self.inner.features).map_err(to_py)?;
        dataset::write_phenotypes(&phenotypes, &self.inner.records).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset({} acquisitions x {} features)",
            self.inner.len(),
            self.inner.features.n_cols()
        )
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        rows(self.inner.features.values())
    }

    #[getter]
    fn acquisition_ids(&self) -> Vec<String> {
        self.inner.features.ids().to_vec()
    }

    #[getter]
    fn subject_ids(&self) -> Vec<String> {
        self.inner.records.iter().map(|r| r.subject_id.clone()).collect()
    }

    /// Class per acquisition, None where unknown.
    #[getter]
    fn labels(&self) -> Vec<Option<u8>> {
        self.inner.records.iter().map(|r| r.label.known()).collect()
    }

    #[getter]
    fn sites(&self) -> Vec<String> {
        self.inner.records.iter().map(|r| r.site.clone()).collect()
    }
}

/// Weighted undirected population graph.
#[pyclass(name = "Graph", module = "popgcn_py", frozen)]
struct PyGraph {
    inner: PopulationGraph,
}

#[pymethods]
impl PyGraph {
    /// Builds a graph over every acquisition; keys as in the `[graph]` table.
    #[staticmethod]
    #[pyo3(signature = (dataset, spec=None))]
    fn build(py: Python<'_>, dataset: &PyDataset, spec: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let spec: GraphSpec = config(py, spec)?;
        let g = popgraph::build_graph(&dataset.inner.features, &dataset.inner.records, &spec, None)
            .map_err(to_py)?;
        Ok(Self { inner: g })
    }

    #[staticmethod]
    fn from_edges(n_nodes: usize, edges: Vec<(usize, usize, f64)>) -> PyResult<Self> {
        let edges = edges
            .into_iter()
            .map(|(a, b, weight)| popgraph::Edge {
                u: a.min(b),
                v: a.max(b),
                weight,
            })
            .collect();
        Ok(Self {
            inner: PopulationGraph::new(n_nodes, edges, GraphSpec::default()).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: popgraph::read_edge_list(&path).map_err(to_py)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        popgraph::write_edge_list(&path, &self.inner).map_err(to_py)
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn n_edges(&self) -> usize {
        self.inner.n_edges()
    }

    fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.inner.edges().iter().map(|e| (e.u, e.v, e.weight)).collect()
    }

    fn adjacency(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.adjacency())
    }

    /// Component id per node.
    fn components(&self) -> Vec<usize> {
        self.inner.components()
    }

    /// Dense normalized Laplacian.
    fn laplacian(&self) -> Vec<Vec<f64>> {
        rows(&spectral::normalized_laplacian(&self.inner).to_dense())
    }

    /// `(value, fallback)` for the largest Laplacian eigenvalue.
    fn lambda_max(&self) -> (f64, bool) {
        let lm = spectral::estimate_lambda_max(&spectral::normalized_laplacian(&self.inner));
        (lm.value, lm.fallback)
    }

    /// Chebyshev terms `[T_0 X, ..., T_K X]` of the rescaled Laplacian.
    fn chebyshev_basis(&self, x: Vec<Vec<f64>>, order: usize) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let x = matrix(x)?;
        let (ls, _) = spectral::scaled_laplacian(&self.inner).map_err(to_py)?;
        if x.nrows() != ls.n() {
            return Err(PyValueError::new_err(format!(
                "{} rows for {} nodes",
                x.nrows(),
                ls.n()
            )));
        }
        Ok(spectral::chebyshev_basis(&ls, x.view(), order)
            .terms()
            .iter()
            .map(rows)
            .collect())
    }

    /// Graph-Fourier filtering of one signal by eigendecomposition.
    fn spectral_filter(&self, x: Vec<f64>, theta: Vec<f64>) -> PyResult<Vec<f64>> {
        let l = spectral::normalized_laplacian(&self.inner);
        let lm = spectral::estimate_lambda_max(&l).value;
        Ok(spectral::spectral_filter_oracle(&l, lm, &Array1::from(x), &theta)
            .map_err(to_py)?
            .to_vec())
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph({} nodes, {} edges)",
            self.inner.n_nodes(),
            self.inner.n_edges()
        )
    }
}

/// Trained Chebyshev GCN.
#[pyclass(name = "Model", module = "popgcn_py", frozen)]
struct PyModel {
    inner: GcnModel,
}

#[pymethods]
impl PyModel {
    /// Trains on the nodes flagged in `train_mask`; keys as in `GcnConfig`
    /// (`hidden_layers`, `cheb_order`, `epochs`, ...). Returns the model and
    /// the per-epoch training loss.
    #[staticmethod]
    #[pyo3(signature = (graph, x, labels, train_mask, config=None))]
    fn train(
        py: Python<'_>,
        graph: &PyGraph,
        x: Vec<Vec<f64>>,
        labels: Vec<Option<u8>>,
        train_mask: Vec<bool>,
        config: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<(Self, Vec<f64>)> {
        let cfg: GcnConfig = self::config(py, config)?;
        let x = matrix(x)?;
        let labels = labels_from(labels);
        let mask = TrainMask::new(train_mask, &labels).map_err(to_py)?;
        let (model, history, _) =
            gcn::train(&cfg, &graph.inner, x.view(), &labels, &mask, None).map_err(to_py)?;
        Ok((Self { inner: model }, history.iter().map(|h| h.loss).collect()))
    }

    /// Class probabilities per node.
    fn predict(&self, graph: &PyGraph, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = matrix(x)?;
        let input = GraphInput::new(&graph.inner, x.view(), self.inner.order).map_err(to_py)?;
        Ok(rows(&self.inner.predict(&input).map_err(to_py)?.probabilities))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save_checkpoint(&path).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: GcnModel::load_checkpoint(&path).map_err(to_py)?,
        })
    }

    #[getter]
    fn order(&self) -> usize {
        self.inner.order
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(order={}, hidden_layers={}, input_dim={})",
            self.inner.order,
            self.inner.hidden_layers(),
            self.inner.input_dim()
        )
    }
}

/// Result of a cross-validated experiment.
#[pyclass(name = "Report", module = "popgcn_py", frozen)]
struct PyReport {
    inner: ExperimentReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn mean_accuracy(&self) -> f64 {
        self.inner.mean_accuracy()
    }

    #[getter]
    fn mean_auc(&self) -> Option<f64> {
        self.inner.summary.auc.map(|s| s.mean)
    }

    #[getter]
    fn n_failures(&self) -> usize {
        self.inner.failures.len()
    }

    fn summary(&self) -> String {
        self.inner.summary_text()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    fn plot_csv(&self) -> String {
        self.inner.plot_csv()
    }

    fn write(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.write(&dir).map_err(to_py)
    }
}

/// Cross-validated experiment; keys as in the TOML config (`graph`,
/// `model`, `selector`, `cv`, `name`).
#[pyfunction]
#[pyo3(signature = (dataset, config=None, jobs=1))]
fn run_experiment(
    py: Python<'_>,
    dataset: &PyDataset,
    config: Option<&Bound<'_, PyAny>>,
    jobs: usize,
) -> PyResult<PyReport> {
    let cfg: ExperimentConfig = self::config(py, config)?;
    let report = py
        .detach(|| harness::run_experiment(&dataset.inner, &cfg, jobs))
        .map_err(to_py)?;
    Ok(PyReport { inner: report })
}

/// Fold index per acquisition, grouped by subject and stratified by label.
#[pyfunction]
#[pyo3(signature = (dataset, k=10, seed=0))]
fn stratified_folds(dataset: &PyDataset, k: usize, seed: u64) -> PyResult<Vec<usize>> {
    Ok(harness::stratified_group_kfold(&dataset.inner.records, k, seed)
        .map_err(to_py)?
        .folds)
}

/// Area under the ROC curve, None unless both classes occur.
#[pyfunction]
fn auc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(PyValueError::new_err("scores and labels differ in length"));
    }
    Ok(harness::auc(&scores, &labels))
}

/// Upper triangle (row-major, diagonal excluded) of a connectivity matrix.
#[pyfunction]
fn vectorize_connectivity(m: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let m = matrix(m)?;
    Ok(dataset::vectorize_connectivity(m.view()).map_err(to_py)?.to_vec())
}

#[pyfunction]
fn fisher_transform(r: f64) -> PyResult<f64> {
    dataset::fisher_transform(r).map_err(to_py)
}

#[pymodule]
fn popgcn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(stratified_folds, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(vectorize_connectivity, m)?)?;
    m.add_function(wrap_pyfunction!(fisher_transform, m)?)?;
    Ok(())
}
