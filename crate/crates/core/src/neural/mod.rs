//! Reconstruction models for drift detection: a dense autoencoder and a
//! transformer autoencoder, both trained from scratch with momentum SGD.
//!
//! A model trained on clean data freezes the mean and standard deviation of
//! its per-sample training reconstruction error. A batch drifts when its mean
//! error rises above that baseline; the rise is reported both raw (`delta`)
//! and in baseline standard deviations (`z`).

mod attention;
mod autoencoder;
mod train;
pub use autoencoder::train_autoencoder;
pub use transformer::train_transformer_ae;
mod transformer;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use attention::{attention, attention_weights};
pub use autoencoder::{Activation, AutoencoderModel, DenseLayer};
pub use train::{TrainConfig, TrainReport};
pub use transformer::{TaeShape, TransformerAeModel};

/// A differentiable reconstruction network with a flat parameter vector.
///
/// The loss for one row is the squared L2 reconstruction error
/// `‖x − x̂‖²`.
pub trait Network {
    type Workspace;

    fn input_dim(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn workspace(&self) -> Self::Workspace;

    /// Reconstruct one row into `out`.
    fn forward(&self, x: &[f64], ws: &mut Self::Workspace, out: &mut [f64]);

    /// Forward and backward pass for one row: adds the loss gradient into
    /// `grad` and returns the loss.
    fn backprop(&self, x: &[f64], ws: &mut Self::Workspace, grad: &mut [f64]) -> f64;

    /// Summed loss and gradient over every row of `x`.
    fn loss_and_gradient(&self, x: &Matrix) -> (f64, Vec<f64>) {
        let mut ws = self.workspace();
        let mut grad = vec![0.0; self.params().len()];
        let loss = x
            .iter_rows()
            .map(|row| self.backprop(row, &mut ws, &mut grad))
            .sum();
        (loss, grad)
    }

    fn total_loss(&self, x: &Matrix) -> f64 {
        let mut ws = self.workspace();
        let mut out = vec![0.0; self.input_dim()];
        x.iter_rows()
            .map(|row| {
                self.forward(row, &mut ws, &mut out);
                squared_error(row, &out)
            })
            .sum()
    }
}

pub(crate) fn squared_error(x: &[f64], x_hat: &[f64]) -> f64 {
    x.iter().zip(x_hat).map(|(a, b)| (a - b).powi(2)).sum()
}

/// Frozen per-sample reconstruction error statistics of the training data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionErrors {
    pub per_sample: Vec<f64>,
    pub mean: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftDelta {
    /// Batch mean error minus baseline mean error.
    pub delta: f64,
    /// `delta / baseline std`; +inf when the baseline std is zero and the
    /// error rose.
    pub z: f64,
}

/// A trained reconstruction model with frozen baseline statistics.
pub trait Reconstructor: Network {
    fn baseline(&self) -> Option<BaselineStats>;
}

fn check_width<N: Network + ?Sized>(model: &N, x: &Matrix) -> Result<()> {
    if x.cols() != model.input_dim() {
        return Err(Error::Shape(format!(
            "matrix width {} does not match model input dimension {}",
            x.cols(),
            model.input_dim()
        )));
    }
    Ok(())
}

/// Reconstruct every row of `x`.
pub fn reconstruct<N: Network>(model: &N, x: &Matrix) -> Result<Matrix> {
    check_width(model, x)?;
    let mut ws = model.workspace();
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for (i, row) in x.iter_rows().enumerate() {
        model.forward(row, &mut ws, out.row_mut(i));
    }
    Ok(out)
}

/// Per-sample squared L2 reconstruction error and its mean.
pub fn reconstruction_error<N: Network>(model: &N, x: &Matrix) -> Result<ReconstructionErrors> {
    check_width(model, x)?;
    if x.rows() == 0 {
        return Err(Error::Data("cannot score an empty matrix".into()));
    }
    let mut ws = model.workspace();
    let mut out = vec![0.0; x.cols()];
    let per_sample: Vec<f64> = x
        .iter_rows()
        .map(|row| {
            model.forward(row, &mut ws, &mut out);
            squared_error(row, &out)
        })
        .collect();
    let mean = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok(ReconstructionErrors { per_sample, mean })
}

pub(crate) fn baseline_of(errors: &ReconstructionErrors) -> BaselineStats {
    let n = errors.per_sample.len() as f64;
    let var = errors
        .per_sample
        .iter()
        .map(|e| (e - errors.mean).powi(2))
        .sum::<f64>()
        / n;
    BaselineStats {
        mean: errors.mean,
        std: var.sqrt(),
    }
}

/// Rise of the batch mean reconstruction error over the frozen training
/// baseline.
pub fn drift_delta<M: Reconstructor>(model: &M, batch: &Matrix) -> Result<DriftDelta> {
    let baseline = model
        .baseline()
        .ok_or_else(|| Error::Config("model has no baseline; train it first".into()))?;
    let errors = reconstruction_error(model, batch)?;
    let delta = errors.mean - baseline.mean;
    let z = if baseline.std > 0.0 {
        delta / baseline.std
    } else if delta > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(DriftDelta { delta, z })
}

/// Glorot-uniform bound for a weight matrix.
pub(crate) fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
