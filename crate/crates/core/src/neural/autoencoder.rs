//! Dense autoencoder `d → 16 → 8 → 16 → d` with ReLU hidden layers and an
//! identity output layer.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::train::{fit, TrainConfig, TrainReport};
use super::{glorot, BaselineStats, Network, Reconstructor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct LayerShape {
    inputs: usize,
    outputs: usize,
    activation: Activation,
}

impl LayerShape {
    fn param_count(&self) -> usize {
        self.outputs * (self.inputs + 1)
    }
}

/// Borrowed view of one layer: `y = act(W x + b)` with `W` stored
/// row-major as `outputs × inputs`.
#[derive(Clone, Copy, Debug)]
pub struct DenseLayer<'a> {
    pub weights: &'a [f64],
    pub bias: &'a [f64],
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderModel {
    dim: usize,
    shapes: Vec<LayerShape>,
    params: Vec<f64>,
    baseline: Option<BaselineStats>,
}

pub struct AeWorkspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    offsets: Vec<usize>,
}

const FORMAT: &str = "trustdrift.autoencoder";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    dim: usize,
    layers: Vec<LayerShape>,
    params: Vec<f64>,
    baseline: Option<BaselineStats>,
}

impl AutoencoderModel {
    pub const HIDDEN: usize = 16;
    pub const LATENT: usize = 8;

    /// Randomly initialised, untrained model with the default widths.
    pub fn new(dim: usize, seed: u64) -> Self {
        Self::with_widths(dim, Self::HIDDEN, Self::LATENT, seed)
    }

    pub fn with_widths(dim: usize, hidden: usize, latent: usize, seed: u64) -> Self {
        use Activation::*;
        let shapes = vec![
            LayerShape { inputs: dim, outputs: hidden, activation: Relu },
            LayerShape { inputs: hidden, outputs: latent, activation: Relu },
            LayerShape { inputs: latent, outputs: hidden, activation: Relu },
            LayerShape { inputs: hidden, outputs: dim, activation: Identity },
        ];
        let mut rng = seed::rng(seed);
        let mut params = Vec::with_capacity(shapes.iter().map(LayerShape::param_count).sum());
        for s in &shapes {
            let a = glorot(s.inputs, s.outputs);
            params.extend((0..s.inputs * s.outputs).map(|_| rng.random_range(-a..=a)));
            params.extend(std::iter::repeat_n(0.0, s.outputs));
        }
        Self {
            dim,
            shapes,
            params,
            baseline: None,
        }
    }

    pub fn layers(&self) -> Vec<DenseLayer<'_>> {
        let mut off = 0;
        self.shapes
            .iter()
            .map(|s| {
                let w = s.inputs * s.outputs;
                let layer = DenseLayer {
                    weights: &self.params[off..off + w],
                    bias: &self.params[off + w..off + w + s.outputs],
                    inputs: s.inputs,
                    outputs: s.outputs,
                    activation: s.activation,
                };
                off += s.param_count();
                layer
            })
            .collect()
    }

    pub fn baseline(&self) -> Option<BaselineStats> {
        self.baseline
    }

    pub(crate) fn set_baseline(&mut self, b: BaselineStats) {
        self.baseline = Some(b);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            dim: self.dim,
            layers: self.shapes.clone(),
            params: self.params.clone(),
            baseline: self.baseline,
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        if c.format != FORMAT || c.version != VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint {} v{}",
                c.format, c.version
            )));
        }
        let chained = c.layers.windows(2).all(|w| w[0].outputs == w[1].inputs);
        let ends = c.layers.first().map(|l| l.inputs) == Some(c.dim)
            && c.layers.last().map(|l| l.outputs) == Some(c.dim);
        let count: usize = c.layers.iter().map(LayerShape::param_count).sum();
        if !chained || !ends || count != c.params.len() {
            return Err(Error::Data("autoencoder checkpoint has inconsistent shapes".into()));
        }
        Ok(Self {
            dim: c.dim,
            shapes: c.layers,
            params: c.params,
            baseline: c.baseline,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Train a fresh autoencoder on standardized rows of `x`.
pub fn train_autoencoder(x: &Matrix, cfg: &TrainConfig) -> Result<(AutoencoderModel, TrainReport)> {
    let mut model = AutoencoderModel::new(x.cols(), seed::derive(cfg.seed, "init"));
    let report = fit(&mut model, x, cfg)?;
    model.set_baseline(report.baseline);
    Ok((model, report))
}

impl AutoencoderModel {
    pub fn train(x: &Matrix, cfg: &TrainConfig) -> Result<(Self, TrainReport)> {
        train_autoencoder(x, cfg)
    }
}

impl Network for AutoencoderModel {
    type Workspace = AeWorkspace;

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn workspace(&self) -> AeWorkspace {
        AeWorkspace {
            acts: self.shapes.iter().map(|s| vec![0.0; s.outputs]).collect(),
            deltas: self.shapes.iter().map(|s| vec![0.0; s.outputs]).collect(),
            offsets: self
                .shapes
                .iter()
                .scan(0, |acc, s| {
                    let o = *acc;
                    *acc += s.param_count();
                    Some(o)
                })
                .collect(),
        }
    }

    fn forward(&self, x: &[f64], ws: &mut AeWorkspace, out: &mut [f64]) {
        self.run_layers(x, ws);
        out.copy_from_slice(ws.acts.last().expect("at least one layer"));
    }

    fn backprop(&self, x: &[f64], ws: &mut AeWorkspace, grad: &mut [f64]) -> f64 {
        self.run_layers(x, ws);
        self.backward(x, ws, grad)
    }
}

impl AutoencoderModel {
    fn run_layers(&self, x: &[f64], ws: &mut AeWorkspace) {
        let mut off = 0;
        for (l, s) in self.shapes.iter().enumerate() {
            let (prev, rest) = ws.acts.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &prev[l - 1] };
            let w = &self.params[off..off + s.inputs * s.outputs];
            let b = &self.params[off + s.inputs * s.outputs..off + s.param_count()];
            for (o, a) in rest[0].iter_mut().enumerate() {
                let row = &w[o * s.inputs..(o + 1) * s.inputs];
                let z = b[o] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
                *a = match s.activation {
                    Activation::Relu => z.max(0.0),
                    Activation::Identity => z,
                };
            }
            off += s.param_count();
        }
    }

    fn backward(&self, x: &[f64], ws: &mut AeWorkspace, grad: &mut [f64]) -> f64 {
        let mut scratch = std::mem::take(&mut ws.deltas);
        let last = self.shapes.len() - 1;
        let mut loss = 0.0;
        let out = &ws.acts[last];
        for (d, (&y, &t)) in scratch[last].iter_mut().zip(out.iter().zip(x)) {
            let r = y - t;
            loss += r * r;
            *d = 2.0 * r;
        }
        if self.shapes[last].activation == Activation::Relu {
            for (d, &a) in scratch[last].iter_mut().zip(out) {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }
        }

        for l in (0..=last).rev() {
            let s = self.shapes[l];
            let off = ws.offsets[l];
            let input: &[f64] = if l == 0 { x } else { &ws.acts[l - 1] };
            let (lower, upper) = scratch.split_at_mut(l);
            let delta = &upper[0];
            let (gw, gb) = grad[off..off + s.param_count()].split_at_mut(s.inputs * s.outputs);
            for (o, &d) in delta.iter().enumerate() {
                gb[o] += d;
                if d != 0.0 {
                    for (g, &a) in gw[o * s.inputs..(o + 1) * s.inputs].iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
            }
            if l > 0 {
                let below = &mut lower[l - 1];
                below.iter_mut().for_each(|v| *v = 0.0);
                let w = &self.params[off..off + s.inputs * s.outputs];
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        for (b, &wv) in below.iter_mut().zip(&w[o * s.inputs..(o + 1) * s.inputs]) {
                            *b += d * wv;
                        }
                    }
                }
                let act = &ws.acts[l - 1];
                if self.shapes[l - 1].activation == Activation::Relu {
                    for (b, &a) in below.iter_mut().zip(act) {
                        if a <= 0.0 {
                            *b = 0.0;
                        }
                    }
                }
            }
        }
        ws.deltas = scratch;
        loss
    }
}

impl Reconstructor for AutoencoderModel {
    fn baseline(&self) -> Option<BaselineStats> {
        self.baseline
    }
}
