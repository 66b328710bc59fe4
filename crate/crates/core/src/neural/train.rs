//! Minibatch momentum-SGD training loop with early stopping on a held-out
//! slice of the training rows.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{baseline_of, reconstruction_error, BaselineStats, Network};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    /// Relative validation-loss decrease that counts as an improvement.
    pub min_improvement: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-3,
            momentum: 0.9,
            patience: 20,
            validation_fraction: 0.1,
            min_improvement: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return Err(Error::Config("validation fraction must lie in [0, 0.5)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sample training loss of each epoch, accumulated while the
    /// epoch ran.
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// Epoch (0-based) whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub baseline: BaselineStats,
}

impl TrainReport {
    pub fn first_loss(&self) -> f64 {
        self.train_loss[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.train_loss.last().expect("at least one epoch")
    }
}

pub(crate) const MIN_ROWS: usize = 32;

pub(crate) fn fit<N: Network>(net: &mut N, x: &Matrix, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if x.cols() != net.input_dim() {
        return Err(Error::Shape(format!(
            "training matrix width {} does not match model input {}",
            x.cols(),
            net.input_dim()
        )));
    }
    if x.rows() < MIN_ROWS {
        return Err(Error::Data(format!(
            "need at least {MIN_ROWS} training rows, got {}",
            x.rows()
        )));
    }
    if !x.all_finite() {
        return Err(Error::Data("training matrix contains non-finite values".into()));
    }

    let mut rng = seed::rng(seed::derive(cfg.seed, "train"));
    let mut order: Vec<usize> = (0..x.rows()).collect();
    order.shuffle(&mut rng);
    let n_val = (x.rows() as f64 * cfg.validation_fraction).floor() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let val = x.select_rows(val_idx);
    let mut train_idx = train_idx.to_vec();

    let n_params = net.params().len();
    let mut grad = vec![0.0; n_params];
    let mut velocity = vec![0.0; n_params];
    let mut ws = net.workspace();

    let mut report = TrainReport {
        train_loss: Vec::new(),
        validation_loss: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
        baseline: BaselineStats { mean: 0.0, std: 0.0 },
    };
    let mut best = (f64::INFINITY, net.params().to_vec());
    let mut since_best = 0;

    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in train_idx.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in chunk {
                epoch_loss += net.backprop(x.row(i), &mut ws, &mut grad);
            }
            let scale = 1.0 / chunk.len() as f64;
            for ((p, v), g) in net.params_mut().iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v + g * scale;
                *p -= cfg.learning_rate * *v;
            }
        }
        let epoch_loss = epoch_loss / train_idx.len() as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        report.train_loss.push(epoch_loss);

        let val_loss = if val.rows() > 0 {
            net.total_loss(&val) / val.rows() as f64
        } else {
            epoch_loss
        };
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        report.validation_loss.push(val_loss);
        log::debug!("epoch {epoch}: train {epoch_loss:.5} val {val_loss:.5}");

        if val_loss < best.0 * (1.0 - cfg.min_improvement) {
            best = (val_loss, net.params().to_vec());
            report.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                report.stopped_early = true;
                break;
            }
        }
    }
    if report.stopped_early {
        net.params_mut().copy_from_slice(&best.1);
    }
    report.baseline = baseline_of(&reconstruction_error(net, x)?);
    Ok(report)
}
