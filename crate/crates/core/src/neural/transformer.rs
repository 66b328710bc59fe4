//! Transformer autoencoder over per-feature tokens.
//!
//! Each scalar feature `x_i` becomes a token `x_i · w_emb + pos_i`. One
//! single-head attention block and one feed-forward block, each with a
//! residual connection, contextualise the tokens. The flattened tokens are
//! compressed to a ReLU latent code; the decoder expands the code back to one
//! token per feature (`u + pos_out_i`, ReLU) and projects each token to a
//! scalar with its own output vector.
//!
//! The latent bottleneck matters: with residual paths alone a per-token
//! decoder could copy every input through unchanged, and reconstruction error
//! would carry no information about inter-feature structure.

// Index loops mirror the math in the hand-written kernels.
#![allow(clippy::needless_range_loop)]

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::softmax_in_place;
use super::train::{fit, TrainConfig, TrainReport};
use super::{glorot, BaselineStats, Network, Reconstructor};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaeShape {
    pub features: usize,
    pub d_model: usize,
    pub ff: usize,
    pub latent: usize,
}

impl TaeShape {
    pub fn new(features: usize) -> Self {
        Self {
            features,
            d_model: 16,
            ff: 32,
            latent: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Offsets {
    emb: usize,
    pos: usize,
    wq: usize,
    wk: usize,
    wv: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    wz: usize,
    bz: usize,
    wu: usize,
    bu: usize,
    pos_out: usize,
    wout: usize,
    bout: usize,
    total: usize,
}

impl Offsets {
    fn new(s: &TaeShape) -> Self {
        let (d, m, f, l) = (s.features, s.d_model, s.ff, s.latent);
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let o = Offsets {
            emb: take(m),
            pos: take(d * m),
            wq: take(m * m),
            wk: take(m * m),
            wv: take(m * m),
            w1: take(m * f),
            b1: take(f),
            w2: take(f * m),
            b2: take(m),
            wz: take(l * d * m),
            bz: take(l),
            wu: take(m * l),
            bu: take(m),
            pos_out: take(d * m),
            wout: take(d * m),
            bout: take(d),
            total: 0,
        };
        Offsets { total: at, ..o }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformerAeModel {
    shape: TaeShape,
    off: Offsets,
    params: Vec<f64>,
    baseline: Option<BaselineStats>,
}

/// Activations and gradient scratch for one row.
pub struct TaeWorkspace {
    h0: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    a: Vec<f64>,
    h1: Vec<f64>,
    p: Vec<f64>,
    r: Vec<f64>,
    h2: Vec<f64>,
    zpre: Vec<f64>,
    z: Vec<f64>,
    u: Vec<f64>,
    t: Vec<f64>,
    g: Vec<f64>,
    xhat: Vec<f64>,
    dt: Vec<f64>,
    du: Vec<f64>,
    dz: Vec<f64>,
    dh2: Vec<f64>,
    dh1: Vec<f64>,
    dr: Vec<f64>,
    da: Vec<f64>,
    dq: Vec<f64>,
    dk: Vec<f64>,
    dv: Vec<f64>,
    dh0: Vec<f64>,
    wt: Vec<f64>,
}

/// `out (n×m) += a (n×k) · b (k×m)`, all row-major.
#[inline(always)]
fn mm_acc(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    match m {
        16 => mm_acc_fixed::<16>(a, b, n, k, out),
        32 => mm_acc_fixed::<32>(a, b, n, k, out),
        _ => {
            for i in 0..n {
                let dst = &mut out[i * m..(i + 1) * m];
                for (r, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
                    for (d, &bv) in dst.iter_mut().zip(&b[r * m..(r + 1) * m]) {
                        *d += av * bv;
                    }
                }
            }
        }
    }
}

/// `mm_acc` with the output row held in registers; the summation order per
/// element is unchanged.
#[inline(always)]
fn mm_acc_fixed<const M: usize>(a: &[f64], b: &[f64], n: usize, k: usize, out: &mut [f64]) {
    for (arow, dst) in a.chunks_exact(k).zip(out.chunks_exact_mut(M)).take(n) {
        let mut acc = [0.0; M];
        acc.copy_from_slice(dst);
        for (&av, brow) in arow.iter().zip(b.chunks_exact(M)) {
            for c in 0..M {
                acc[c] += av * brow[c];
            }
        }
        dst.copy_from_slice(&acc);
    }
}

/// `out (k×m) += aᵀ · g` for `a (n×k)`, `g (n×m)`.
#[inline(always)]
fn mm_at_acc(a: &[f64], g: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    match m {
        16 => mm_at_acc_fixed::<16>(a, g, n, k, out),
        32 => mm_at_acc_fixed::<32>(a, g, n, k, out),
        _ => {
            for i in 0..n {
                let gi = &g[i * m..(i + 1) * m];
                for (r, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
                    for (d, &gv) in out[r * m..(r + 1) * m].iter_mut().zip(gi) {
                        *d += av * gv;
                    }
                }
            }
        }
    }
}

#[inline(always)]
fn mm_at_acc_fixed<const M: usize>(a: &[f64], g: &[f64], n: usize, k: usize, out: &mut [f64]) {
    for (r, dst) in out.chunks_exact_mut(M).enumerate().take(k) {
        let mut acc = [0.0; M];
        acc.copy_from_slice(dst);
        for (i, gi) in g.chunks_exact(M).enumerate().take(n) {
            let av = a[i * k + r];
            for c in 0..M {
                acc[c] += av * gi[c];
            }
        }
        dst.copy_from_slice(&acc);
    }
}

/// `out (n×k) += g · wᵀ` for `g (n×m)`, `w (k×m)`. `scratch` receives `wᵀ`
/// so the product can run as a row update.
#[inline(always)]
fn mm_bt_acc(
    g: &[f64],
    w: &[f64],
    n: usize,
    k: usize,
    m: usize,
    out: &mut [f64],
    scratch: &mut Vec<f64>,
) {
    scratch.resize(k * m, 0.0);
    for r in 0..k {
        for c in 0..m {
            scratch[c * k + r] = w[r * m + c];
        }
    }
    mm_acc(g, scratch, n, m, k, out);
}

/// Dot product with four independent accumulators; the summation order is
/// fixed, so results stay deterministic.
#[inline(always)]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for i in 0..chunks {
        let (x, y) = (&a[4 * i..4 * i + 4], &b[4 * i..4 * i + 4]);
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

const FORMAT: &str = "trustdrift.transformer_autoencoder";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    shape: TaeShape,
    params: Vec<f64>,
    baseline: Option<BaselineStats>,
}

impl TransformerAeModel {
    pub fn new(shape: TaeShape, seed: u64) -> Self {
        let off = Offsets::new(&shape);
        let (d, m, f, l) = (shape.features, shape.d_model, shape.ff, shape.latent);
        let mut params = vec![0.0; off.total];
        let mut rng = seed::rng(seed);
        let mut fill = |start: usize, len: usize, bound: f64| {
            for p in &mut params[start..start + len] {
                *p = rng.random_range(-bound..=bound);
            }
        };
        fill(off.emb, m, glorot(1, m));
        fill(off.pos, d * m, glorot(1, m));
        for w in [off.wq, off.wk, off.wv] {
            fill(w, m * m, glorot(m, m));
        }
        fill(off.w1, m * f, glorot(m, f));
        fill(off.w2, f * m, glorot(f, m));
        fill(off.wz, l * d * m, glorot(d * m, l));
        fill(off.wu, m * l, glorot(l, m));
        fill(off.pos_out, d * m, glorot(1, m));
        fill(off.wout, d * m, glorot(m, 1));
        Self {
            shape,
            off,
            params,
            baseline: None,
        }
    }

    pub fn shape(&self) -> TaeShape {
        self.shape
    }

    pub fn baseline(&self) -> Option<BaselineStats> {
        self.baseline
    }

    pub fn train(x: &Matrix, cfg: &TrainConfig) -> Result<(Self, TrainReport)> {
        train_transformer_ae(x, cfg)
    }

    /// Post-softmax attention weights (`features × features`) for one row.
    pub fn attention_weights(&self, x: &[f64]) -> Result<Matrix> {
        if x.len() != self.shape.features {
            return Err(Error::Shape(format!(
                "row width {} does not match {} features",
                x.len(),
                self.shape.features
            )));
        }
        let mut ws = self.workspace();
        self.run(x, &mut ws);
        let d = self.shape.features;
        Matrix::from_vec(d, d, ws.a)
    }

    #[inline(always)]
    fn run(&self, x: &[f64], ws: &mut TaeWorkspace) {
        let TaeShape {
            features: d,
            d_model: m,
            ff: f,
            latent: l,
        } = self.shape;
        let o = &self.off;
        let p = &self.params;

        let emb = &p[o.emb..o.emb + m];
        for i in 0..d {
            let pos = &p[o.pos + i * m..o.pos + (i + 1) * m];
            for c in 0..m {
                ws.h0[i * m + c] = x[i] * emb[c] + pos[c];
            }
        }

        for buf in [&mut ws.q, &mut ws.k, &mut ws.v] {
            buf.iter_mut().for_each(|v| *v = 0.0);
        }
        mm_acc(&ws.h0, &p[o.wq..o.wq + m * m], d, m, m, &mut ws.q);
        mm_acc(&ws.h0, &p[o.wk..o.wk + m * m], d, m, m, &mut ws.k);
        mm_acc(&ws.h0, &p[o.wv..o.wv + m * m], d, m, m, &mut ws.v);

        let scale = 1.0 / (m as f64).sqrt();
        for i in 0..d {
            let qi = &ws.q[i * m..(i + 1) * m];
            for j in 0..d {
                ws.a[i * d + j] = dot(qi, &ws.k[j * m..(j + 1) * m]) * scale;
            }
            softmax_in_place(&mut ws.a[i * d..(i + 1) * d]);
        }

        ws.h1.copy_from_slice(&ws.h0);
        mm_acc(&ws.a, &ws.v, d, d, m, &mut ws.h1);

        for i in 0..d {
            ws.p[i * f..(i + 1) * f].copy_from_slice(&p[o.b1..o.b1 + f]);
        }
        mm_acc(&ws.h1, &p[o.w1..o.w1 + m * f], d, m, f, &mut ws.p);
        for (r, &pv) in ws.r.iter_mut().zip(&ws.p) {
            *r = pv.max(0.0);
        }

        for i in 0..d {
            for c in 0..m {
                ws.h2[i * m + c] = ws.h1[i * m + c] + p[o.b2 + c];
            }
        }
        mm_acc(&ws.r, &p[o.w2..o.w2 + f * m], d, f, m, &mut ws.h2);

        let dm = d * m;
        for j in 0..l {
            let w = &p[o.wz + j * dm..o.wz + (j + 1) * dm];
            ws.zpre[j] = p[o.bz + j] + dot(w, &ws.h2);
            ws.z[j] = ws.zpre[j].max(0.0);
        }

        for c in 0..m {
            ws.u[c] = p[o.bu + c] + dot(&p[o.wu + c * l..o.wu + (c + 1) * l], &ws.z);
        }

        for i in 0..d {
            let pos = &p[o.pos_out + i * m..o.pos_out + (i + 1) * m];
            for c in 0..m {
                let t = ws.u[c] + pos[c];
                ws.t[i * m + c] = t;
                ws.g[i * m + c] = t.max(0.0);
            }
            ws.xhat[i] = p[o.bout + i]
                + dot(&p[o.wout + i * m..o.wout + (i + 1) * m], &ws.g[i * m..(i + 1) * m]);
        }
    }

    #[inline(always)]
    fn backward(&self, x: &[f64], ws: &mut TaeWorkspace, grad: &mut [f64]) -> f64 {
        let TaeShape {
            features: d,
            d_model: m,
            ff: f,
            latent: l,
        } = self.shape;
        let o = &self.off;
        let p = &self.params;
        let dm = d * m;

        // Decoder: per-feature projections.
        let mut loss = 0.0;
        ws.du.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            let r = ws.xhat[i] - x[i];
            loss += r * r;
            let dx = 2.0 * r;
            grad[o.bout + i] += dx;
            let wout = &p[o.wout + i * m..o.wout + (i + 1) * m];
            for c in 0..m {
                let idx = i * m + c;
                grad[o.wout + idx] += dx * ws.g[idx];
                let dt = if ws.t[idx] > 0.0 { dx * wout[c] } else { 0.0 };
                ws.dt[idx] = dt;
                grad[o.pos_out + idx] += dt;
                ws.du[c] += dt;
            }
        }

        // u = Wu z + bu
        ws.dz.iter_mut().for_each(|v| *v = 0.0);
        for c in 0..m {
            let du = ws.du[c];
            grad[o.bu + c] += du;
            for j in 0..l {
                grad[o.wu + c * l + j] += du * ws.z[j];
                ws.dz[j] += p[o.wu + c * l + j] * du;
            }
        }

        // z = relu(Wz flat(h2) + bz)
        ws.dh2.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..l {
            if ws.zpre[j] <= 0.0 {
                continue;
            }
            let dzp = ws.dz[j];
            grad[o.bz + j] += dzp;
            let (gw, w) = (
                &mut grad[o.wz + j * dm..o.wz + (j + 1) * dm],
                &p[o.wz + j * dm..o.wz + (j + 1) * dm],
            );
            for ((g, dh), (&h, &wv)) in gw.iter_mut().zip(ws.dh2.iter_mut()).zip(ws.h2.iter().zip(w)) {
                *g += dzp * h;
                *dh += dzp * wv;
            }
        }

        // h2 = h1 + relu(h1 W1 + b1) W2 + b2
        ws.dh1.copy_from_slice(&ws.dh2);
        mm_at_acc(&ws.r, &ws.dh2, d, f, m, &mut grad[o.w2..o.w2 + f * m]);
        for i in 0..d {
            for c in 0..m {
                grad[o.b2 + c] += ws.dh2[i * m + c];
            }
        }
        ws.dr.iter_mut().for_each(|v| *v = 0.0);
        mm_bt_acc(&ws.dh2, &p[o.w2..o.w2 + f * m], d, f, m, &mut ws.dr, &mut ws.wt);
        for (dr, &pv) in ws.dr.iter_mut().zip(&ws.p) {
            if pv <= 0.0 {
                *dr = 0.0;
            }
        }
        mm_at_acc(&ws.h1, &ws.dr, d, m, f, &mut grad[o.w1..o.w1 + m * f]);
        for i in 0..d {
            for c in 0..f {
                grad[o.b1 + c] += ws.dr[i * f + c];
            }
        }
        mm_bt_acc(&ws.dr, &p[o.w1..o.w1 + m * f], d, m, f, &mut ws.dh1, &mut ws.wt);

        // h1 = h0 + softmax(q kᵀ / √m) v
        ws.dh0.copy_from_slice(&ws.dh1);
        for i in 0..d {
            let g = &ws.dh1[i * m..(i + 1) * m];
            for j in 0..d {
                ws.da[i * d + j] = dot(g, &ws.v[j * m..(j + 1) * m]);
            }
        }
        ws.dv.iter_mut().for_each(|v| *v = 0.0);
        mm_at_acc(&ws.a, &ws.dh1, d, d, m, &mut ws.dv);
        // Softmax backward, reusing `da` for the score gradient.
        for i in 0..d {
            let a = &ws.a[i * d..(i + 1) * d];
            let da = &mut ws.da[i * d..(i + 1) * d];
            let s = dot(a, da);
            for (dv, &av) in da.iter_mut().zip(a) {
                *dv = av * (*dv - s);
            }
        }
        let scale = 1.0 / (m as f64).sqrt();
        ws.da.iter_mut().for_each(|v| *v *= scale);
        ws.dq.iter_mut().for_each(|v| *v = 0.0);
        ws.dk.iter_mut().for_each(|v| *v = 0.0);
        mm_acc(&ws.da, &ws.k, d, d, m, &mut ws.dq);
        mm_at_acc(&ws.da, &ws.q, d, d, m, &mut ws.dk);

        for (w, dbuf) in [(o.wq, &ws.dq), (o.wk, &ws.dk), (o.wv, &ws.dv)] {
            mm_at_acc(&ws.h0, dbuf, d, m, m, &mut grad[w..w + m * m]);
            mm_bt_acc(dbuf, &p[w..w + m * m], d, m, m, &mut ws.dh0, &mut ws.wt);
        }

        // h0 = x w_emb + pos
        for i in 0..d {
            for c in 0..m {
                let g = ws.dh0[i * m + c];
                grad[o.emb + c] += x[i] * g;
                grad[o.pos + i * m + c] += g;
            }
        }
        loss
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            shape: self.shape,
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
        let off = Offsets::new(&c.shape);
        if off.total != c.params.len() {
            return Err(Error::Data(format!(
                "checkpoint holds {} parameters, shape needs {}",
                c.params.len(),
                off.total
            )));
        }
        Ok(Self {
            shape: c.shape,
            off,
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

/// Train a fresh transformer autoencoder on standardized rows of `x`.
pub fn train_transformer_ae(
    x: &Matrix,
    cfg: &TrainConfig,
) -> Result<(TransformerAeModel, TrainReport)> {
    let mut model = TransformerAeModel::new(TaeShape::new(x.cols()), seed::derive(cfg.seed, "init"));
    let report = fit(&mut model, x, cfg)?;
    model.baseline = Some(report.baseline);
    Ok((model, report))
}

impl Network for TransformerAeModel {
    type Workspace = TaeWorkspace;

    fn input_dim(&self) -> usize {
        self.shape.features
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn workspace(&self) -> TaeWorkspace {
        let TaeShape {
            features: d,
            d_model: m,
            ff: f,
            latent: l,
        } = self.shape;
        let z = |n: usize| vec![0.0; n];
        TaeWorkspace {
            h0: z(d * m),
            q: z(d * m),
            k: z(d * m),
            v: z(d * m),
            a: z(d * d),
            h1: z(d * m),
            p: z(d * f),
            r: z(d * f),
            h2: z(d * m),
            zpre: z(l),
            z: z(l),
            u: z(m),
            t: z(d * m),
            g: z(d * m),
            xhat: z(d),
            dt: z(d * m),
            du: z(m),
            dz: z(l),
            dh2: z(d * m),
            dh1: z(d * m),
            dr: z(d * f),
            da: z(d * d),
            dq: z(d * m),
            dk: z(d * m),
            dv: z(d * m),
            dh0: z(d * m),
            wt: Vec::new(),
        }
    }

    fn forward(&self, x: &[f64], ws: &mut TaeWorkspace, out: &mut [f64]) {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: AVX2 support was just checked.
            return unsafe { self.forward_avx2(x, ws, out) };
        }
        self.run(x, ws);
        out.copy_from_slice(&ws.xhat);
    }

    fn backprop(&self, x: &[f64], ws: &mut TaeWorkspace, grad: &mut [f64]) -> f64 {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: AVX2 support was just checked.
            return unsafe { self.backprop_avx2(x, ws, grad) };
        }
        self.run(x, ws);
        self.backward(x, ws, grad)
    }
}

/// The same kernels compiled for wider vectors. Only independent lanes are
/// vectorized and nothing is fused, so results match the portable path bit
/// for bit.
#[cfg(target_arch = "x86_64")]
impl TransformerAeModel {
    #[target_feature(enable = "avx2")]
    fn forward_avx2(&self, x: &[f64], ws: &mut TaeWorkspace, out: &mut [f64]) {
        self.run(x, ws);
        out.copy_from_slice(&ws.xhat);
    }

    #[target_feature(enable = "avx2")]
    fn backprop_avx2(&self, x: &[f64], ws: &mut TaeWorkspace, grad: &mut [f64]) -> f64 {
        self.run(x, ws);
        self.backward(x, ws, grad)
    }
}

impl Reconstructor for TransformerAeModel {
    fn baseline(&self) -> Option<BaselineStats> {
        self.baseline
    }
}
