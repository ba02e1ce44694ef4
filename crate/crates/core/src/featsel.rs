//! Dimensionality reduction front-ends: ridge-driven recursive feature
//! elimination, PCA, the hidden layer of an MLP classifier and the code
//! layer of a tied-weight autoencoder. Every selector is fitted on training
//! rows only and then applied to all rows.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::gcn::{self, GcnConfig, GcnModel, GraphInput, TrainMask, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

fn to_nalgebra(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Solves a symmetric positive definite system by Cholesky.
fn solve_spd(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let chol = to_nalgebra(a.view())
        .cholesky()
        .ok_or_else(|| Error::Linalg("matrix is not positive definite".into()))?;
    let x = chol.solve(&DVector::from_iterator(b.len(), b.iter().copied()));
    Ok(Array1::from_iter(x.iter().copied()))
}

fn column_means(x: ArrayView2<'_, f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).expect("non-empty rows")
}

/// Ridge regression fitted on mean-centred features and targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Array1<f64>,
    pub x_mean: Array1<f64>,
    pub y_mean: f64,
}

impl RidgeModel {
    /// `(x - x̄)·w + ȳ` per row.
    pub fn decision(&self, x: ArrayView2<'_, f64>) -> Array1<f64> {
        let centred = &x - &self.x_mean;
        centred.dot(&self.weights) + self.y_mean
    }
}

/// `w` solving `(XᵀX + αI) w = Xᵀy` on centred data. When there are more
/// features than rows the equivalent dual system `(XXᵀ + αI) a = y`,
/// `w = Xᵀa` is solved instead.
pub fn ridge_fit(x: ArrayView2<'_, f64>, y: &[f64], alpha: f64) -> Result<RidgeModel> {
    let (n, c) = x.dim();
    if n < 2 {
        return Err(Error::Parameter(format!("ridge needs ≥ 2 rows, got {n}")));
    }
    if y.len() != n {
        return Err(Error::Shape(format!("{} targets for {n} rows", y.len())));
    }
    if !(alpha > 0.0) {
        return Err(Error::Parameter(format!("ridge alpha must be > 0, got {alpha}")));
    }
    if !(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0)) {
        return Err(Error::Parameter("ridge classifier needs both classes".into()));
    }
    let x_mean = column_means(x);
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let xc = &x - &x_mean;
    let yc = Array1::from_iter(y.iter().map(|v| v - y_mean));
    let weights = if c <= n {
        let mut gram = xc.t().dot(&xc);
        gram.diag_mut().mapv_inplace(|d| d + alpha);
        solve_spd(&gram, &xc.t().dot(&yc))?
    } else {
        let mut gram = xc.dot(&xc.t());
        gram.diag_mut().mapv_inplace(|d| d + alpha);
        let dual = solve_spd(&gram, &yc)?;
        xc.t().dot(&dual)
    };
    Ok(RidgeModel {
        weights,
        x_mean,
        y_mean,
    })
}

/// Class labels {0,1} as ±1 ridge targets.
pub fn signed_targets(labels: &[u8]) -> Vec<f64> {
    labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect()
}

/// Recursive feature elimination: refit ridge, drop the
/// `ceil(step_fraction · current)` smallest |coefficients| (clipped so the
/// count lands exactly on `target_c`), repeat. Returns sorted column indices.
pub fn rfe_select(
    x_train: ArrayView2<'_, f64>,
    y_train: &[f64],
    target_c: usize,
    step_fraction: f64,
    alpha: f64,
) -> Result<Vec<usize>> {
    let c = x_train.ncols();
    if target_c < 1 || target_c > c {
        return Err(Error::Parameter(format!(
            "rfe target {target_c} must lie in 1..={c}"
        )));
    }
    if !(step_fraction > 0.0 && step_fraction <= 1.0) {
        return Err(Error::Parameter(format!(
            "rfe step fraction must lie in (0, 1], got {step_fraction}"
        )));
    }
    let mut active: Vec<usize> = (0..c).collect();
    while active.len() > target_c {
        let sub = x_train.select(Axis(1), &active);
        let model = ridge_fit(sub.view(), y_train, alpha)?;
        let current = active.len();
        let drop = ((step_fraction * current as f64).ceil() as usize)
            .max(1)
            .min(current - target_c);
        let mut order: Vec<usize> = (0..current).collect();
        order.sort_by(|&a, &b| {
            model.weights[a]
                .abs()
                .total_cmp(&model.weights[b].abs())
                .then(active[a].cmp(&active[b]))
        });
        let mut removed = vec![false; current];
        for &i in &order[..drop] {
            removed[i] = true;
        }
        active = active
            .into_iter()
            .zip(removed)
            .filter(|(_, r)| !r)
            .map(|(j, _)| j)
            .collect();
    }
    Ok(active)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `C x target_c`, columns ordered by singular value, descending.
    pub components: Array2<f64>,
    pub singular_values: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    /// Requested components beyond the numerical rank (zero columns).
    pub rank_deficient: usize,
}

impl PcaModel {
    pub fn fit(x_train: ArrayView2<'_, f64>, target_c: usize) -> Result<Self> {
        let (n, c) = x_train.dim();
        if target_c < 1 || target_c > n.min(c) {
            return Err(Error::Parameter(format!(
                "pca target {target_c} must lie in 1..={}",
                n.min(c)
            )));
        }
        let mean = column_means(x_train);
        let centred = &x_train - &mean;
        let svd = to_nalgebra(centred.view()).svd(false, true);
        let v_t = svd
            .v_t
            .ok_or_else(|| Error::Linalg("svd did not return right singular vectors".into()))?;
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let s_max = order.first().map_or(0.0, |&i| svd.singular_values[i]);
        let tol = s_max * 1e-10 * n.max(c) as f64;
        let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
        let mut components = Array2::zeros((c, target_c));
        let mut singular_values = Vec::with_capacity(target_c);
        let mut explained = Vec::with_capacity(target_c);
        let mut rank_deficient = 0;
        for (slot, &i) in order.iter().take(target_c).enumerate() {
            let s = svd.singular_values[i];
            if s > tol && s_max > 0.0 {
                for j in 0..c {
                    components[[j, slot]] = v_t[(i, j)];
                }
                singular_values.push(s);
                explained.push(s * s / total);
            } else {
                rank_deficient += 1;
                singular_values.push(0.0);
                explained.push(0.0);
            }
        }
        rank_deficient += target_c.saturating_sub(order.len());
        Ok(Self {
            mean,
            components,
            singular_values,
            explained_variance_ratio: explained,
            rank_deficient,
        })
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &self.mean).dot(&self.components)
    }

    /// Back-projection into feature space.
    pub fn reconstruct(&self, codes: ArrayView2<'_, f64>) -> Array2<f64> {
        codes.dot(&self.components.t()) + &self.mean
    }

    pub fn cumulative_explained_variance(&self) -> f64 {
        self.explained_variance_ratio.iter().sum()
    }
}

/// Training rows → hidden activations. Returns the fitted network too.
#[allow(clippy::too_many_arguments)]
pub fn mlp_feature_extract(
    x_train: ArrayView2<'_, f64>,
    y_train: &[u8],
    x_all: ArrayView2<'_, f64>,
    target_c: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<(Array2<f64>, GcnModel)> {
    let model = fit_mlp_extractor(x_train, y_train, target_c, epochs, lr, seed)?;
    let codes = gcn::first_hidden_activations(&model, &GraphInput::identity(x_all))?;
    Ok((codes, model))
}

fn fit_mlp_extractor(
    x_train: ArrayView2<'_, f64>,
    y_train: &[u8],
    target_c: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<GcnModel> {
    if target_c < 1 {
        return Err(Error::Parameter("mlp target width must be ≥ 1".into()));
    }
    if !(y_train.contains(&0) && y_train.contains(&1)) {
        return Err(Error::Parameter("mlp extractor needs both classes".into()));
    }
    let cfg = GcnConfig {
        hidden_layers: 1,
        hidden_width: Some(target_c),
        dropout_rate: 0.0,
        l2_coeff: 1e-4,
        learning_rate: lr,
        epochs,
        seed,
        ..GcnConfig::default()
    };
    let labels: Vec<Label> = y_train.iter().map(|&y| Label::Known(y)).collect();
    let mask = TrainMask::new(vec![true; labels.len()], &labels)?;
    let input = GraphInput::identity(x_train);
    let (model, _) = gcn::train_prepared(&cfg, 0, &input, &labels, &mask, None)?;
    Ok(model)
}

/// Per-feature affine map of the training range onto [-1, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Array1<f64>,
    pub range: Array1<f64>,
    /// Features with zero training range, mapped to 0.
    pub degenerate: Vec<usize>,
}

impl MinMaxScaler {
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let min = x.fold_axis(Axis(0), f64::INFINITY, |a, &b| a.min(b));
        let max = x.fold_axis(Axis(0), f64::NEG_INFINITY, |a, &b| a.max(b));
        let range = &max - &min;
        let degenerate = range
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == 0.0)
            .map(|(j, _)| j)
            .collect();
        Self {
            min,
            range,
            degenerate,
        }
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            Zip::from(&mut row)
                .and(&self.min)
                .and(&self.range)
                .for_each(|v, &lo, &r| {
                    *v = if r == 0.0 { 0.0 } else { 2.0 * (*v - lo) / r - 1.0 };
                });
        }
        out
    }
}

/// Tied-weight autoencoder: `code = σ(XW + b)`, `X̂ = tanh(code Wᵀ + b′)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub scaler: MinMaxScaler,
    /// `C x target_c`.
    pub weights: Array2<f64>,
    pub encoder_bias: Array1<f64>,
    pub decoder_bias: Array1<f64>,
    /// Reconstruction MSE before each epoch's update.
    pub loss_history: Vec<f64>,
}

pub const AE_DEFAULT_EPOCHS: usize = 100;
pub const AE_DEFAULT_LR: f64 = 5e-4;

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

struct AdamSlot {
    m: Array2<f64>,
    v: Array2<f64>,
}

impl AdamSlot {
    fn new(dim: (usize, usize)) -> Self {
        Self {
            m: Array2::zeros(dim),
            v: Array2::zeros(dim),
        }
    }

    fn step(&mut self, p: &mut Array2<f64>, g: &Array2<f64>, lr: f64, t: i32) {
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        Zip::from(p)
            .and(g)
            .and(&mut self.m)
            .and(&mut self.v)
            .for_each(|p, &g, m, v| {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            });
    }
}

impl Autoencoder {
    pub fn fit(
        x_train: ArrayView2<'_, f64>,
        target_c: usize,
        epochs: usize,
        lr: f64,
        seed: u64,
    ) -> Result<Self> {
        let (n, c) = x_train.dim();
        if target_c < 1 {
            return Err(Error::Parameter("autoencoder code size must be ≥ 1".into()));
        }
        if n < 1 {
            return Err(Error::Parameter("autoencoder needs training rows".into()));
        }
        if !(lr > 0.0) {
            return Err(Error::Parameter("autoencoder learning rate must be > 0".into()));
        }
        let scaler = MinMaxScaler::fit(x_train);
        let x = scaler.transform(x_train);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let limit = (6.0 / (c + target_c) as f64).sqrt();
        let mut w = Array2::from_shape_fn((c, target_c), |_| rng.random_range(-limit..limit));
        let mut be = Array2::<f64>::zeros((1, target_c));
        let mut bd = Array2::<f64>::zeros((1, c));
        let (mut sw, mut se, mut sd) = (
            AdamSlot::new(w.dim()),
            AdamSlot::new(be.dim()),
            AdamSlot::new(bd.dim()),
        );
        let scale = 2.0 / (n * c) as f64;
        let mut history = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let code = (x.dot(&w) + &be).mapv(sigmoid);
            let recon = (code.dot(&w.t()) + &bd).mapv(f64::tanh);
            let err = &recon - &x;
            let loss = err.iter().map(|e| e * e).sum::<f64>() / (n * c) as f64;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("autoencoder loss is {loss}"),
                });
            }
            history.push(loss);
            let d_out = Zip::from(&err)
                .and(&recon)
                .map_collect(|&e, &r| scale * e * (1.0 - r * r));
            let d_code = d_out.dot(&w);
            let d_pre = Zip::from(&d_code)
                .and(&code)
                .map_collect(|&d, &s| d * s * (1.0 - s));
            let gw = d_out.t().dot(&code) + x.t().dot(&d_pre);
            let gbe = d_pre.sum_axis(Axis(0)).insert_axis(Axis(0));
            let gbd = d_out.sum_axis(Axis(0)).insert_axis(Axis(0));
            let t = epoch as i32 + 1;
            sw.step(&mut w, &gw, lr, t);
            se.step(&mut be, &gbe, lr, t);
            sd.step(&mut bd, &gbd, lr, t);
        }
        Ok(Self {
            scaler,
            weights: w,
            encoder_bias: be.row(0).to_owned(),
            decoder_bias: bd.row(0).to_owned(),
            loss_history: history,
        })
    }

    pub fn encode(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let xs = self.scaler.transform(x);
        (xs.dot(&self.weights) + &self.encoder_bias).mapv(sigmoid)
    }

    /// Reconstruction in the scaled [-1, 1] space.
    pub fn reconstruct_scaled(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let code = self.encode(x);
        (code.dot(&self.weights.t()) + &self.decoder_bias).mapv(f64::tanh)
    }

    pub fn reconstruction_mse(&self, x: ArrayView2<'_, f64>) -> f64 {
        let xs = self.scaler.transform(x);
        let r = self.reconstruct_scaled(x);
        (&r - &xs).iter().map(|e| e * e).sum::<f64>() / xs.len() as f64
    }
}

/// Fits on training rows and returns codes for all rows.
pub fn autoencoder_encode(
    x_train: ArrayView2<'_, f64>,
    x_all: ArrayView2<'_, f64>,
    target_c: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<(Array2<f64>, Autoencoder)> {
    let ae = Autoencoder::fit(x_train, target_c, epochs, lr, seed)?;
    Ok((ae.encode(x_all), ae))
}

pub fn pca_fit_transform(
    x_train: ArrayView2<'_, f64>,
    x_all: ArrayView2<'_, f64>,
    target_c: usize,
) -> Result<(Array2<f64>, PcaModel)> {
    let model = PcaModel::fit(x_train, target_c)?;
    Ok((model.transform(x_all), model))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    None,
    Rfe,
    Pca,
    Mlp,
    Autoencoder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorConfig {
    pub kind: SelectorKind,
    pub target_c: usize,
    /// Fraction of the remaining features removed per RFE round.
    pub step_fraction: f64,
    /// Ridge penalty used by RFE.
    pub alpha: f64,
    /// MLP / autoencoder epochs; `None` picks the kind's default.
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: u64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            kind: SelectorKind::None,
            target_c: 2000,
            step_fraction: 0.1,
            alpha: 1.0,
            epochs: None,
            learning_rate: None,
            seed: 0,
        }
    }
}

pub const MLP_SELECTOR_EPOCHS: usize = 200;
pub const MLP_SELECTOR_LR: f64 = 0.01;

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kind == SelectorKind::None {
            return Ok(());
        }
        if self.target_c < 1 {
            return Err(Error::config("selector.target_c", "must be ≥ 1"));
        }
        if !(self.step_fraction > 0.0 && self.step_fraction <= 1.0) {
            return Err(Error::config("selector.step_fraction", "must lie in (0, 1]"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::config("selector.alpha", "must be > 0"));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0) {
                return Err(Error::config("selector.learning_rate", "must be > 0"));
            }
        }
        Ok(())
    }
}

/// Fitted reduction, applicable to any row set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedSelector {
    None,
    Rfe { indices: Vec<usize> },
    Pca(PcaModel),
    Mlp(GcnModel),
    Autoencoder(Autoencoder),
}

impl FittedSelector {
    pub fn fit(cfg: &SelectorConfig, x_train: ArrayView2<'_, f64>, y_train: &[u8]) -> Result<Self> {
        cfg.validate()?;
        if cfg.kind != SelectorKind::None && cfg.target_c > x_train.ncols() {
            return Err(Error::Parameter(format!(
                "selector target {} exceeds the {} available features",
                cfg.target_c,
                x_train.ncols()
            )));
        }
        Ok(match cfg.kind {
            SelectorKind::None => FittedSelector::None,
            SelectorKind::Rfe => FittedSelector::Rfe {
                indices: rfe_select(
                    x_train,
                    &signed_targets(y_train),
                    cfg.target_c,
                    cfg.step_fraction,
                    cfg.alpha,
                )?,
            },
            SelectorKind::Pca => FittedSelector::Pca(PcaModel::fit(x_train, cfg.target_c)?),
            SelectorKind::Mlp => FittedSelector::Mlp(fit_mlp_extractor(
                x_train,
                y_train,
                cfg.target_c,
                cfg.epochs.unwrap_or(MLP_SELECTOR_EPOCHS),
                cfg.learning_rate.unwrap_or(MLP_SELECTOR_LR),
                cfg.seed,
            )?),
            SelectorKind::Autoencoder => FittedSelector::Autoencoder(Autoencoder::fit(
                x_train,
                cfg.target_c,
                cfg.epochs.unwrap_or(AE_DEFAULT_EPOCHS),
                cfg.learning_rate.unwrap_or(AE_DEFAULT_LR),
                cfg.seed,
            )?),
        })
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(match self {
            FittedSelector::None => x.to_owned(),
            FittedSelector::Rfe { indices } => x.select(Axis(1), indices),
            FittedSelector::Pca(p) => p.transform(x),
            FittedSelector::Mlp(m) => gcn::first_hidden_activations(m, &GraphInput::identity(x))?,
            FittedSelector::Autoencoder(a) => a.encode(x),
        })
    }

    /// Names for the output columns.
    pub fn output_names(&self, input_names: &[String], width: usize) -> Vec<String> {
        match self {
            FittedSelector::None => input_names.to_vec(),
            FittedSelector::Rfe { indices } => indices.iter().map(|&j| input_names[j].clone()).collect(),
            FittedSelector::Pca(_) => (0..width).map(|j| format!("pc{j}")).collect(),
            FittedSelector::Mlp(_) => (0..width).map(|j| format!("mlp{j}")).collect(),
            FittedSelector::Autoencoder(_) => (0..width).map(|j| format!("ae{j}")).collect(),
        }
    }

    pub fn explained_variance_ratio(&self) -> Option<&[f64]> {
        match self {
            FittedSelector::Pca(p) => Some(&p.explained_variance_ratio),
            _ => None,
        }
    }
}
