//! Chebyshev graph convolutional network with hand-derived gradients.
//!
//! Architecture: `L` hidden layers (dropout on the layer input, Chebyshev
//! convolution, ReLU) followed by an output Chebyshev convolution whose
//! rows are class logits. The loss is softmax cross-entropy averaged over
//! the training mask plus `l2 * Σ W²` over every weight tensor (biases
//! excluded). Parameters are updated with Adam on the full graph each epoch.
//!
//! A convolution layer maps `H (N x C_in)` to
//! `Σ_k T_k(L̃) H W_k + b` with `W_k ∈ R^{C_in x C_out}`. It can be evaluated
//! input-side (propagate `H`, then mix channels) or output-side (mix first,
//! then combine with Clenshaw). Both give the same values; the cheaper side
//! is chosen per layer from the channel counts.

use std::path::Path;

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::popgraph::PopulationGraph;
use crate::spectral::{self, ChebyshevBasis, LambdaMax, LaplacianMatrix};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

const CHECKPOINT_FORMAT: &str = "popgcn-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcnConfig {
    pub hidden_layers: usize,
    /// Width of every hidden layer; `None` uses the input feature count.
    pub hidden_width: Option<usize>,
    pub cheb_order: usize,
    pub dropout_rate: f64,
    pub l2_coeff: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub n_classes: usize,
    pub use_bias: bool,
}

impl Default for GcnConfig {
    fn default() -> Self {
        Self::abide()
    }
}

impl GcnConfig {
    /// Autism/connectivity protocol: L=1, dropout 0.3, l2 5e-4, lr 0.005, 150 epochs.
    pub fn abide() -> Self {
        Self {
            hidden_layers: 1,
            hidden_width: None,
            cheb_order: 3,
            dropout_rate: 0.3,
            l2_coeff: 5e-4,
            learning_rate: 0.005,
            epochs: 150,
            seed: 0,
            n_classes: 2,
            use_bias: true,
        }
    }

    /// Longitudinal structural protocol: L=6, dropout 0.02, l2 1e-5, lr 0.01, 200 epochs.
    pub fn adni() -> Self {
        Self {
            hidden_layers: 6,
            dropout_rate: 0.02,
            l2_coeff: 1e-5,
            learning_rate: 0.01,
            epochs: 200,
            ..Self::abide()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_common("model")?;
        if self.cheb_order < 1 {
            return Err(Error::config("model.cheb_order", "must be ≥ 1"));
        }
        Ok(())
    }

    /// Range checks shared with the MLP baseline (which runs with order 0).
    pub(crate) fn validate_common(&self, section: &str) -> Result<()> {
        let f = |name: &str| format!("{section}.{name}");
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(f("dropout_rate"), "must lie in [0, 1)"));
        }
        if !(self.l2_coeff >= 0.0) {
            return Err(Error::config(f("l2_coeff"), "must be ≥ 0"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config(f("learning_rate"), "must be > 0"));
        }
        if self.n_classes < 2 {
            return Err(Error::config(f("n_classes"), "must be ≥ 2"));
        }
        if self.hidden_width == Some(0) {
            return Err(Error::config(f("hidden_width"), "must be ≥ 1"));
        }
        Ok(())
    }
}

/// Boolean vector over nodes marking the labelled training set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainMask(Vec<bool>);

impl TrainMask {
    pub fn new(mask: Vec<bool>, labels: &[Label]) -> Result<Self> {
        if mask.len() != labels.len() {
            return Err(Error::Shape(format!(
                "mask of length {} for {} labels",
                mask.len(),
                labels.len()
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::Parameter("training mask is empty".into()));
        }
        if let Some(i) = mask.iter().zip(labels).position(|(&m, l)| m && !l.is_known()) {
            return Err(Error::Parameter(format!("masked node {i} has no label")));
        }
        Ok(Self(mask))
    }

    pub fn from_indices(n: usize, indices: &[usize], labels: &[Label]) -> Result<Self> {
        let mut mask = vec![false; n];
        for &i in indices {
            mask[i] = true;
        }
        Self::new(mask, labels)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&m| m).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i)
    }
}

/// Scaled Laplacian plus the precomputed Chebyshev basis of the node features.
#[derive(Clone, Debug)]
pub struct GraphInput {
    operator: Option<LaplacianMatrix>,
    basis: ChebyshevBasis,
    lambda_max: Option<LambdaMax>,
}

impl GraphInput {
    pub fn new(graph: &PopulationGraph, x: ArrayView2<'_, f64>, order: usize) -> Result<Self> {
        if graph.n_nodes() != x.nrows() {
            return Err(Error::Shape(format!(
                "graph has {} nodes, features have {} rows",
                graph.n_nodes(),
                x.nrows()
            )));
        }
        let (ls, lm) = spectral::scaled_laplacian(graph)?;
        let basis = spectral::chebyshev_basis(&ls, x, order);
        Ok(Self {
            operator: Some(ls),
            basis,
            lambda_max: Some(lm),
        })
    }

    pub fn from_parts(operator: LaplacianMatrix, basis: ChebyshevBasis) -> Result<Self> {
        if operator.n() != basis.n_nodes() {
            return Err(Error::Shape("operator and basis sizes differ".into()));
        }
        Ok(Self {
            operator: Some(operator),
            basis,
            lambda_max: None,
        })
    }

    /// No graph at all: order-0 filters only (plain MLP).
    pub fn identity(x: ArrayView2<'_, f64>) -> Self {
        Self {
            operator: None,
            basis: spectral::chebyshev_basis_identity(x),
            lambda_max: None,
        }
    }

    pub fn basis(&self) -> &ChebyshevBasis {
        &self.basis
    }

    pub fn operator(&self) -> Option<&LaplacianMatrix> {
        self.operator.as_ref()
    }

    pub fn lambda_max(&self) -> Option<LambdaMax> {
        self.lambda_max
    }

    pub fn n_nodes(&self) -> usize {
        self.basis.n_nodes()
    }

    fn propagate(&self, y: ArrayView2<'_, f64>, order: usize) -> ChebyshevBasis {
        match (&self.operator, order) {
            (_, 0) => spectral::chebyshev_basis_identity(y),
            (Some(op), k) => spectral::chebyshev_basis(op, y, k),
            (None, _) => panic!("order > 0 convolution without a graph operator"),
        }
    }

    fn combine(&self, coeffs: &[Array2<f64>]) -> Array2<f64> {
        match (&self.operator, coeffs.len()) {
            (_, 1) => coeffs[0].clone(),
            (Some(op), _) => spectral::chebyshev_combine(op, coeffs),
            (None, _) => panic!("order > 0 convolution without a graph operator"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// Shape `(K+1, C_in, C_out)`.
    pub weights: Array3<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn glorot(order: usize, c_in: usize, c_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = (c_in * (order + 1)) as f64;
        let limit = (6.0 / (fan_in + c_out as f64)).sqrt();
        let weights = Array3::from_shape_fn((order + 1, c_in, c_out), |_| rng.random_range(-limit..limit));
        Self {
            weights,
            bias: Array1::zeros(c_out),
        }
    }

    pub fn c_in(&self) -> usize {
        self.weights.dim().1
    }

    pub fn c_out(&self) -> usize {
        self.weights.dim().2
    }
}

/// Gradient (or moment) tensors with the same shapes as the model parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    fn zeros_like(layers: &[Layer]) -> Self {
        Self {
            layers: layers
                .iter()
                .map(|l| Layer {
                    weights: Array3::zeros(l.weights.dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub first: Gradients,
    pub second: Gradients,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnModel {
    pub order: usize,
    pub use_bias: bool,
    pub dropout_rate: f64,
    pub layers: Vec<Layer>,
    pub optimizer: AdamState,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Debug)]
enum Propagation {
    /// First layer without dropout: the precomputed basis of X was used.
    Given,
    /// Basis of the dropped-out input, kept for the weight gradient.
    InputSide(ChebyshevBasis),
    OutputSide,
}

#[derive(Clone, Debug)]
struct LayerCache {
    input: Array2<f64>,
    dropout: Option<Array2<f64>>,
    propagation: Propagation,
    pre_activation: Array2<f64>,
}

/// Values retained from a forward pass for backpropagation.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    layers: Vec<LayerCache>,
    pub logits: Array2<f64>,
}

/// `Σ_k basis[k] W[k] + bias`.
pub fn cheb_conv_forward(
    basis: &ChebyshevBasis,
    weights: &Array3<f64>,
    bias: &Array1<f64>,
) -> Result<Array2<f64>> {
    let (k1, c_in, c_out) = weights.dim();
    if k1 != basis.order() + 1 {
        return Err(Error::Shape(format!(
            "basis has {} terms, weights have {k1}",
            basis.order() + 1
        )));
    }
    if basis.n_channels() != c_in || bias.len() != c_out {
        return Err(Error::Shape(format!(
            "basis channels {} / bias {} vs weights {c_in}x{c_out}",
            basis.n_channels(),
            bias.len()
        )));
    }
    let mut out = Array2::zeros((basis.n_nodes(), c_out));
    for (k, term) in basis.terms().iter().enumerate() {
        out += &term.dot(&weights.index_axis(Axis(0), k));
    }
    out += bias;
    Ok(out)
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

fn log_softmax_row(row: ndarray::ArrayView1<'_, f64>) -> Array1<f64> {
    let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = row.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
    row.mapv(|v| v - lse)
}

/// Index of the row maximum; ties go to the lower index.
pub fn argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl GcnModel {
    pub fn new(input_dim: usize, cfg: &GcnConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self::build(input_dim, cfg, cfg.cheb_order))
    }

    /// Model of arbitrary polynomial order (order 0 gives a plain MLP).
    pub(crate) fn build(input_dim: usize, cfg: &GcnConfig, order: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let width = cfg.hidden_width.unwrap_or(input_dim);
        let mut layers = Vec::with_capacity(cfg.hidden_layers + 1);
        let mut c_in = input_dim;
        for _ in 0..cfg.hidden_layers {
            layers.push(Layer::glorot(order, c_in, width, &mut rng));
            c_in = width;
        }
        layers.push(Layer::glorot(order, c_in, cfg.n_classes, &mut rng));
        let zeros = Gradients::zeros_like(&layers);
        Self {
            order,
            use_bias: cfg.use_bias,
            dropout_rate: cfg.dropout_rate,
            optimizer: AdamState {
                step: 0,
                first: zeros.clone(),
                second: zeros,
            },
            layers,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].c_in()
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().expect("at least one layer").c_out()
    }

    pub fn hidden_layers(&self) -> usize {
        self.layers.len() - 1
    }

    fn check_input(&self, input: &GraphInput) -> Result<()> {
        if input.basis().n_channels() != self.input_dim() {
            return Err(Error::Shape(format!(
                "model expects {} input features, got {}",
                self.input_dim(),
                input.basis().n_channels()
            )));
        }
        if input.basis().order() != self.order {
            return Err(Error::Shape(format!(
                "model order {} but basis order {}",
                self.order,
                input.basis().order()
            )));
        }
        Ok(())
    }

    /// Forward pass. Dropout is drawn from `rng` only in train mode.
    pub fn forward(&self, input: &GraphInput, mode: Mode, rng: &mut impl Rng) -> Result<ForwardPass> {
        self.check_input(input)?;
        let n_layers = self.layers.len();
        let mut caches = Vec::with_capacity(n_layers);
        let mut h: Option<Array2<f64>> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let hidden = i + 1 < n_layers;
            let use_dropout = hidden && mode == Mode::Train && self.dropout_rate > 0.0;
            let source = h.take().unwrap_or_else(|| input.basis().input().clone());
            let (dropped, mask) = if use_dropout {
                let keep = 1.0 - self.dropout_rate;
                let mask = Array2::from_shape_fn(source.dim(), |_| {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                (&source * &mask, Some(mask))
            } else {
                (source, None)
            };
            let bias = if self.use_bias {
                layer.bias.clone()
            } else {
                Array1::zeros(layer.c_out())
            };
            let (z, propagation) = if i == 0 && mask.is_none() {
                (
                    cheb_conv_forward(input.basis(), &layer.weights, &bias)?,
                    Propagation::Given,
                )
            } else if self.input_side(i, layer) {
                let basis = input.propagate(dropped.view(), self.order);
                let z = cheb_conv_forward(&basis, &layer.weights, &bias)?;
                (z, Propagation::InputSide(basis))
            } else {
                let mixed: Vec<Array2<f64>> = (0..=self.order)
                    .map(|k| dropped.dot(&layer.weights.index_axis(Axis(0), k)))
                    .collect();
                let mut z = input.combine(&mixed);
                z += &bias;
                (z, Propagation::OutputSide)
            };
            if hidden {
                h = Some(relu(&z));
            }
            caches.push(LayerCache {
                input: dropped,
                dropout: mask,
                propagation,
                pre_activation: z,
            });
        }
        let logits = caches.last().expect("output layer").pre_activation.clone();
        Ok(ForwardPass {
            layers: caches,
            logits,
        })
    }

    /// Cheaper evaluation side from channel counts; ties go input-side.
    fn input_side(&self, index: usize, layer: &Layer) -> bool {
        let needs_input_grad = index > 0;
        let input_cost = layer.c_in() * if needs_input_grad { 2 } else { 1 };
        let output_cost = 2 * layer.c_out();
        input_cost <= output_cost
    }

    /// Exact gradients of [`masked_loss`] with respect to every weight and bias.
    pub fn backward(
        &self,
        input: &GraphInput,
        pass: &ForwardPass,
        labels: &[Label],
        mask: &TrainMask,
        l2_coeff: f64,
    ) -> Result<Gradients> {
        let n = pass.logits.nrows();
        if labels.len() != n || mask.as_slice().len() != n {
            return Err(Error::Shape("labels/mask length differs from node count".into()));
        }
        let m = mask.count() as f64;
        let probs = softmax(&pass.logits);
        let mut delta = Array2::<f64>::zeros(probs.dim());
        for i in mask.indices() {
            let y = labels[i]
                .known()
                .ok_or_else(|| Error::Parameter(format!("masked node {i} has no label")))?
                as usize;
            let mut row = delta.row_mut(i);
            row.assign(&probs.row(i));
            row[y] -= 1.0;
            row /= m;
        }

        let mut grads = Gradients::zeros_like(&self.layers);
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let cache = &pass.layers[i];
            if i + 1 < self.layers.len() {
                Zip::from(&mut delta)
                    .and(&cache.pre_activation)
                    .for_each(|d, &z| {
                        if z <= 0.0 {
                            *d = 0.0
                        }
                    });
            }
            let g = &mut grads.layers[i];
            if self.use_bias {
                g.bias = delta.sum_axis(Axis(0));
            }
            let need_input_grad = i > 0;
            let mut d_input: Option<Array2<f64>> = None;
            match &cache.propagation {
                Propagation::Given | Propagation::InputSide(_) => {
                    let basis = match &cache.propagation {
                        Propagation::InputSide(b) => b,
                        _ => input.basis(),
                    };
                    for (k, term) in basis.terms().iter().enumerate() {
                        g.weights.index_axis_mut(Axis(0), k).assign(&term.t().dot(&delta));
                    }
                    if need_input_grad {
                        let pulled: Vec<Array2<f64>> = (0..=self.order)
                            .map(|k| delta.dot(&layer.weights.index_axis(Axis(0), k).t()))
                            .collect();
                        d_input = Some(input.combine(&pulled));
                    }
                }
                Propagation::OutputSide => {
                    let propagated = input.propagate(delta.view(), self.order);
                    let mut acc: Option<Array2<f64>> = None;
                    for (k, term) in propagated.terms().iter().enumerate() {
                        g.weights
                            .index_axis_mut(Axis(0), k)
                            .assign(&cache.input.t().dot(term));
                        if need_input_grad {
                            let part = term.dot(&layer.weights.index_axis(Axis(0), k).t());
                            acc = Some(match acc {
                                Some(a) => a + part,
                                None => part,
                            });
                        }
                    }
                    d_input = acc;
                }
            }
            if l2_coeff > 0.0 {
                g.weights.scaled_add(2.0 * l2_coeff, &layer.weights);
            }
            if let Some(mut d) = d_input {
                if let Some(mask) = &cache.dropout {
                    d *= mask;
                }
                delta = d;
            }
        }
        Ok(grads)
    }

    pub fn l2_penalty(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    /// One Adam update with bias correction.
    pub fn adam_step(&mut self, grads: &Gradients, lr: f64) {
        let st = &mut self.optimizer;
        st.step += 1;
        let t = st.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + ADAM_EPS);
        };
        for (((layer, g), m), v) in self
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut st.first.layers)
            .zip(&mut st.second.layers)
        {
            Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            if self.use_bias {
                Zip::from(&mut layer.bias)
                    .and(&g.bias)
                    .and(&mut m.bias)
                    .and(&mut v.bias)
                    .for_each(|p, &g, m, v| update(p, g, m, v));
            }
        }
    }

    pub fn predict(&self, input: &GraphInput) -> Result<Prediction> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pass = self.forward(input, Mode::Eval, &mut rng)?;
        Ok(Prediction::from_logits(&pass.logits))
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let doc = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: self.clone(),
        };
        let text = serde_json::to_string_pretty(&doc)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: Checkpoint = serde_json::from_str(&text)?;
        if doc.format != CHECKPOINT_FORMAT || doc.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint {} v{}",
                doc.format, doc.version
            )));
        }
        Ok(doc.model)
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: GcnModel,
}

/// Mean softmax cross-entropy over masked nodes plus the L2 weight penalty.
pub fn masked_loss(
    logits: &Array2<f64>,
    labels: &[Label],
    mask: &TrainMask,
    l2_coeff: f64,
    model: &GcnModel,
) -> Result<f64> {
    if labels.len() != logits.nrows() || mask.as_slice().len() != logits.nrows() {
        return Err(Error::Shape("labels/mask length differs from node count".into()));
    }
    let mut total = 0.0;
    for i in mask.indices() {
        let y = labels[i]
            .known()
            .ok_or_else(|| Error::Parameter(format!("masked node {i} has no label")))?
            as usize;
        total -= log_softmax_row(logits.row(i))[y];
    }
    Ok(total / mask.count() as f64 + l2_coeff * model.l2_penalty())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probabilities: Array2<f64>,
    pub labels: Vec<usize>,
}

impl Prediction {
    pub fn from_logits(logits: &Array2<f64>) -> Self {
        let probabilities = softmax(logits);
        let labels = probabilities.rows().into_iter().map(argmax).collect();
        Self {
            probabilities,
            labels,
        }
    }

    /// Probability of class 1 for each node.
    pub fn positive(&self) -> Vec<f64> {
        self.probabilities.column(1).to_vec()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

fn masked_accuracy(logits: &Array2<f64>, labels: &[Label], mask: &[bool]) -> Option<f64> {
    let mut hit = 0usize;
    let mut total = 0usize;
    for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        if let Some(y) = labels[i].known() {
            total += 1;
            hit += usize::from(argmax(logits.row(i)) == y as usize);
        }
    }
    (total > 0).then(|| hit as f64 / total as f64)
}

/// Full-graph training on a prepared input.
///
/// `val` optionally names nodes (with labels) whose accuracy is tracked;
/// they never enter the loss.
pub fn train_prepared(
    cfg: &GcnConfig,
    order: usize,
    input: &GraphInput,
    labels: &[Label],
    mask: &TrainMask,
    val: Option<(&[bool], &[Label])>,
) -> Result<(GcnModel, Vec<EpochStats>)> {
    cfg.validate_common("model")?;
    if labels.len() != input.n_nodes() {
        return Err(Error::Shape(format!(
            "{} labels for {} nodes",
            labels.len(),
            input.n_nodes()
        )));
    }
    if let Some(bad) = labels
        .iter()
        .filter_map(|l| l.known())
        .find(|&c| usize::from(c) >= cfg.n_classes)
    {
        return Err(Error::Parameter(format!(
            "label {bad} out of range for {} classes",
            cfg.n_classes
        )));
    }
    let mut model = GcnModel::build(input.basis().n_channels(), cfg, order);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xD50F_0D50);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let pass = model.forward(input, Mode::Train, &mut rng)?;
        let loss = masked_loss(&pass.logits, labels, mask, cfg.l2_coeff, &model)?;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("loss is {loss}"),
            });
        }
        let grads = model.backward(input, &pass, labels, mask, cfg.l2_coeff)?;
        model.adam_step(&grads, cfg.learning_rate);
        let val_accuracy = val.and_then(|(m, l)| {
            let mut r = ChaCha8Rng::seed_from_u64(0);
            model
                .forward(input, Mode::Eval, &mut r)
                .ok()
                .and_then(|p| masked_accuracy(&p.logits, l, m))
        });
        history.push(EpochStats {
            epoch,
            loss,
            train_accuracy: masked_accuracy(&pass.logits, labels, mask.as_slice()).unwrap_or(0.0),
            val_accuracy,
        });
    }
    if model
        .layers
        .iter()
        .any(|l| l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()))
    {
        return Err(Error::Diverged {
            epoch: cfg.epochs,
            detail: "non-finite parameters".into(),
        });
    }
    Ok((model, history))
}

/// Builds the scaled Laplacian and basis from `graph`, then trains.
pub fn train(
    cfg: &GcnConfig,
    graph: &PopulationGraph,
    x: ArrayView2<'_, f64>,
    labels: &[Label],
    mask: &TrainMask,
    val: Option<(&[bool], &[Label])>,
) -> Result<(GcnModel, Vec<EpochStats>, GraphInput)> {
    cfg.validate()?;
    let input = GraphInput::new(graph, x, cfg.cheb_order)?;
    let (model, history) = train_prepared(cfg, cfg.cheb_order, &input, labels, mask, val)?;
    Ok((model, history, input))
}

/// Logits of the given nodes only (rows sliced from a full eval pass).
pub fn eval_logits(model: &GcnModel, input: &GraphInput) -> Result<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok(model.forward(input, Mode::Eval, &mut rng)?.logits)
}

/// Hidden-layer activations after the first hidden layer (eval mode).
pub(crate) fn first_hidden_activations(model: &GcnModel, input: &GraphInput) -> Result<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pass = model.forward(input, Mode::Eval, &mut rng)?;
    if model.layers.len() < 2 {
        return Err(Error::Parameter("model has no hidden layer".into()));
    }
    Ok(relu(&pass.layers[0].pre_activation))
}
