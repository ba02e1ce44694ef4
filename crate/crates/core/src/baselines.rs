//! Node-feature-only reference classifiers: ridge and an MLP that shares the
//! GCN training code with the graph operator removed.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::featsel::{ridge_fit, signed_targets};
use crate::gcn::{self, GcnConfig, GraphInput, TrainMask};

/// MLP baseline epoch count.
pub const MLP_EPOCHS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Ridge,
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub alpha: f64,
    /// Layer count, width, dropout, l2, lr, epochs and seed for the MLP.
    /// `cheb_order` is ignored.
    pub mlp: GcnConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            kind: BaselineKind::Ridge,
            alpha: 1.0,
            mlp: GcnConfig {
                epochs: MLP_EPOCHS,
                ..GcnConfig::default()
            },
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            BaselineKind::Ridge if !(self.alpha > 0.0) => Err(Error::config("model.alpha", "must be > 0")),
            BaselineKind::Ridge => Ok(()),
            BaselineKind::Mlp => self.mlp.validate_common("model"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutput {
    pub labels: Vec<u8>,
    /// Positive-class probability per test row.
    pub probabilities: Vec<f64>,
    /// Raw decision values (ridge only; the MLP repeats `probabilities`).
    pub scores: Vec<f64>,
}

fn logistic(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

/// Ridge on ±1 targets. The decision value is squashed by a logistic so the
/// 0.5 probability threshold coincides with the sign of the score.
pub fn ridge_classify(
    x_train: ArrayView2<'_, f64>,
    y_train: &[u8],
    x_test: ArrayView2<'_, f64>,
    alpha: f64,
) -> Result<BaselineOutput> {
    let model = ridge_fit(x_train, &signed_targets(y_train), alpha)?;
    if x_test.ncols() != model.x_mean.len() {
        return Err(Error::Shape(format!(
            "test rows have {} features, model expects {}",
            x_test.ncols(),
            model.x_mean.len()
        )));
    }
    let scores = model.decision(x_test).to_vec();
    let probabilities: Vec<f64> = scores.iter().map(|&s| logistic(s)).collect();
    let labels = probabilities.iter().map(|&p| u8::from(p > 0.5)).collect();
    Ok(BaselineOutput {
        labels,
        probabilities,
        scores,
    })
}

/// Trains on the training rows alone with an order-0 network and predicts
/// the test rows.
pub fn mlp_classify(
    x_train: ArrayView2<'_, f64>,
    y_train: &[u8],
    x_test: ArrayView2<'_, f64>,
    cfg: &GcnConfig,
) -> Result<BaselineOutput> {
    cfg.validate_common("model")?;
    if x_test.ncols() != x_train.ncols() {
        return Err(Error::Shape("train and test feature counts differ".into()));
    }
    let labels: Vec<Label> = y_train.iter().map(|&y| Label::Known(y)).collect();
    let mask = TrainMask::new(vec![true; labels.len()], &labels)?;
    let (model, _) = gcn::train_prepared(cfg, 0, &GraphInput::identity(x_train), &labels, &mask, None)?;
    let pred = model.predict(&GraphInput::identity(x_test))?;
    let probabilities = pred.positive();
    Ok(BaselineOutput {
        labels: probabilities.iter().map(|&p| u8::from(p > 0.5)).collect(),
        scores: probabilities.clone(),
        probabilities,
    })
}

/// Dispatches on `cfg.kind`.
pub fn classify(
    cfg: &BaselineConfig,
    x_train: ArrayView2<'_, f64>,
    y_train: &[u8],
    x_test: ArrayView2<'_, f64>,
) -> Result<BaselineOutput> {
    cfg.validate()?;
    match cfg.kind {
        BaselineKind::Ridge => ridge_classify(x_train, y_train, x_test, cfg.alpha),
        BaselineKind::Mlp => mlp_classify(x_train, y_train, x_test, &cfg.mlp),
    }
}
