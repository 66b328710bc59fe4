//! Multiclass gradient-boosted regression trees on the softmax objective,
//! plus the margin-based uncertainty and accuracy signals used per batch.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: f64 },
}

/// A regression tree stored as a node arena; the root is node 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { value } => return value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] < threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
            }
        }
        walk(self, 0)
    }

    fn validate(&self, width: usize, max_depth: usize) -> Result<()> {
        let n = self.nodes.len();
        let bad = |m: &str| Err(Error::Data(format!("invalid tree: {m}")));
        if n == 0 {
            return bad("no nodes");
        }
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                TreeNode::Leaf { value } if !value.is_finite() => return bad("non-finite leaf"),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    if feature >= width || !threshold.is_finite() {
                        return bad("bad split");
                    }
                    // Children always follow their parent, which rules out cycles.
                    if left <= i || right <= i || left >= n || right >= n {
                        return bad("bad child index");
                    }
                }
                _ => {}
            }
        }
        if self.depth() > max_depth {
            return bad("deeper than the configured maximum");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtConfig {
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            max_depth: 4,
            learning_rate: 0.1,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

const FORMAT: &str = "trustdrift.gbdt";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub classes: Vec<String>,
    pub width: usize,
    pub config: GbdtConfig,
    /// `trees[c][r]` is the round-`r` tree of class `c`.
    pub trees: Vec<Vec<Tree>>,
    /// Training log-loss before the first round and after each round.
    pub train_loss: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    model: GbdtModel,
}

fn softmax(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

fn log_loss(probs: &[f64], y: &[usize], k: usize) -> f64 {
    let n = y.len();
    -y.iter()
        .enumerate()
        .map(|(i, &c)| probs[i * k + c].max(1e-300).ln())
        .sum::<f64>()
        / n as f64
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Fit one regression tree to `target`, level by level. `order[f]` lists the
/// rows sorted by feature `f`. Returns the tree and each row's leaf value.
fn fit_tree(
    x: &Matrix,
    order: &[Vec<usize>],
    target: &[f64],
    max_depth: usize,
    learning_rate: f64,
) -> (Tree, Vec<f64>) {
    let n = target.len();
    let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
    // Node id of each row, and the open (splittable) nodes of this level.
    let mut node_of = vec![0usize; n];
    let mut open = vec![0usize];
    let mut sums = vec![(target.iter().sum::<f64>(), n)];

    for _ in 0..max_depth {
        if open.is_empty() {
            break;
        }
        // Dense slot per open node.
        let mut slot = vec![usize::MAX; nodes.len()];
        for (s, &node) in open.iter().enumerate() {
            slot[node] = s;
        }
        let mut best: Vec<Option<Best>> = open.iter().map(|_| None).collect();
        let mut left_sum = vec![0.0; open.len()];
        let mut left_n = vec![0usize; open.len()];
        let mut last = vec![f64::NAN; open.len()];
        for (f, rows) in order.iter().enumerate() {
            left_sum.iter_mut().for_each(|v| *v = 0.0);
            left_n.iter_mut().for_each(|v| *v = 0);
            for &r in rows {
                let s = slot[node_of[r]];
                if s == usize::MAX {
                    continue;
                }
                let v = x.get(r, f);
                if left_n[s] > 0 && v > last[s] {
                    let (total, count) = sums[open[s]];
                    let (sl, nl) = (left_sum[s], left_n[s] as f64);
                    let (sr, nr) = (total - sl, (count - left_n[s]) as f64);
                    let gain = sl * sl / nl + sr * sr / nr - total * total / count as f64;
                    if best[s].as_ref().is_none_or(|b| gain > b.gain) {
                        let mut threshold = 0.5 * (last[s] + v);
                        if threshold <= last[s] {
                            threshold = v;
                        }
                        best[s] = Some(Best {
                            gain,
                            feature: f,
                            threshold,
                        });
                    }
                }
                left_sum[s] += target[r];
                left_n[s] += 1;
                last[s] = v;
            }
        }

        let mut next = Vec::new();
        let mut children = vec![None; open.len()];
        for (s, b) in best.iter().enumerate() {
            let Some(b) = b.as_ref().filter(|b| b.gain > 1e-12) else {
                continue;
            };
            let (l, r) = (nodes.len(), nodes.len() + 1);
            nodes[open[s]] = TreeNode::Split {
                feature: b.feature,
                threshold: b.threshold,
                left: l,
                right: r,
            };
            nodes.push(TreeNode::Leaf { value: 0.0 });
            nodes.push(TreeNode::Leaf { value: 0.0 });
            sums.push((0.0, 0));
            sums.push((0.0, 0));
            children[s] = Some((l, r, b.feature, b.threshold));
            next.extend([l, r]);
        }
        for (r, node) in node_of.iter_mut().enumerate() {
            let s = slot[*node];
            if s == usize::MAX {
                continue;
            }
            if let Some((l, rt, f, t)) = children[s] {
                *node = if x.get(r, f) < t { l } else { rt };
                sums[*node].0 += target[r];
                sums[*node].1 += 1;
            }
        }
        open = next;
    }

    for (i, node) in nodes.iter_mut().enumerate() {
        if let TreeNode::Leaf { value } = node {
            let (s, c) = sums[i];
            *value = if c > 0 {
                learning_rate * s / c as f64
            } else {
                0.0
            };
        }
    }
    let leaf_values = node_of
        .iter()
        .map(|&i| match nodes[i] {
            TreeNode::Leaf { value } => value,
            TreeNode::Split { .. } => unreachable!("rows end in leaves"),
        })
        .collect();
    (Tree { nodes }, leaf_values)
}

impl GbdtModel {
    /// Fit `cfg.rounds` boosting rounds; each round fits one tree per class
    /// to the log-loss residual `onehot(y) - p`.
    pub fn fit(x: &Matrix, y: &[usize], classes: &[String], cfg: &GbdtConfig) -> Result<Self> {
        cfg.validate()?;
        let (n, width, k) = (x.rows(), x.cols(), classes.len());
        if n != y.len() {
            return Err(Error::Shape(format!("{n} rows but {} labels", y.len())));
        }
        if !x.all_finite() {
            return Err(Error::Data("classifier input contains non-finite values".into()));
        }
        if let Some(&c) = y.iter().find(|&&c| c >= k) {
            return Err(Error::Data(format!("label index {c} outside {k} classes")));
        }
        let mut present = vec![false; k];
        y.iter().for_each(|&c| present[c] = true);
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(Error::Data("need at least two distinct classes".into()));
        }

        let order: Vec<Vec<usize>> = (0..width)
            .map(|f| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| x.get(a, f).total_cmp(&x.get(b, f)).then(a.cmp(&b)));
                idx
            })
            .collect();

        let mut scores = vec![0.0; n * k];
        let mut probs = vec![1.0 / k as f64; n * k];
        let mut trees: Vec<Vec<Tree>> = vec![Vec::with_capacity(cfg.rounds); k];
        let mut train_loss = vec![log_loss(&probs, y, k)];
        let mut residual = vec![0.0; n];
        for _ in 0..cfg.rounds {
            for (c, class_trees) in trees.iter_mut().enumerate() {
                for (i, r) in residual.iter_mut().enumerate() {
                    *r = f64::from(u8::from(y[i] == c)) - probs[i * k + c];
                }
                let (tree, leaf) = fit_tree(x, &order, &residual, cfg.max_depth, cfg.learning_rate);
                for (i, v) in leaf.into_iter().enumerate() {
                    scores[i * k + c] += v;
                }
                class_trees.push(tree);
            }
            probs.copy_from_slice(&scores);
            probs.chunks_mut(k).for_each(softmax);
            train_loss.push(log_loss(&probs, y, k));
        }
        Ok(Self {
            classes: classes.to_vec(),
            width,
            config: cfg.clone(),
            trees,
            train_loss,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    fn check_width(&self, w: usize) -> Result<()> {
        if w != self.width {
            return Err(Error::Shape(format!(
                "classifier expects {} features, got {w}",
                self.width
            )));
        }
        Ok(())
    }

    /// Class probabilities for one row.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_width(x.len())?;
        let mut s: Vec<f64> = self
            .trees
            .iter()
            .map(|ts| ts.iter().map(|t| t.predict(x)).sum())
            .collect();
        softmax(&mut s);
        Ok(s)
    }

    /// Class probabilities for every row, row-major `rows x classes`.
    pub fn predict_proba_matrix(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x.cols())?;
        let k = self.n_classes();
        let mut out = Vec::with_capacity(x.rows() * k);
        for row in x.iter_rows() {
            out.extend(self.predict_proba(row)?);
        }
        Matrix::from_vec(x.rows(), k, out)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let p = self.predict_proba_matrix(x)?;
        Ok(p.iter_rows().map(argmax).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            format: FORMAT.into(),
            version: VERSION,
            model: self.clone(),
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
        let m = c.model;
        if m.trees.len() != m.classes.len() || m.classes.len() < 2 {
            return Err(Error::Data("checkpoint class list and ensembles disagree".into()));
        }
        for t in m.trees.iter().flatten() {
            t.validate(m.width, m.config.max_depth)?;
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

/// Difference between the two largest probabilities.
pub fn softmax_margin(p: &[f64]) -> Result<f64> {
    if p.len() < 2 {
        return Err(Error::Shape("margin needs at least two classes".into()));
    }
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &v in p {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    Ok((first - second).clamp(0.0, 1.0))
}

/// Mean-margin uncertainty over probability rows: `1 - mean(margin)`.
pub fn uncertainty_of(probs: &Matrix) -> Result<f64> {
    if probs.rows() == 0 {
        return Err(Error::Data("uncertainty of an empty batch".into()));
    }
    let mut total = 0.0;
    for p in probs.iter_rows() {
        total += softmax_margin(p)?;
    }
    Ok((1.0 - total / probs.rows() as f64).clamp(0.0, 1.0))
}

/// Accuracy and error rate of probability rows against labels.
pub fn error_of(probs: &Matrix, y: &[usize]) -> Result<(f64, f64)> {
    if probs.rows() == 0 {
        return Err(Error::Data("accuracy of an empty batch".into()));
    }
    if probs.rows() != y.len() {
        return Err(Error::Shape(format!(
            "{} predictions but {} labels",
            probs.rows(),
            y.len()
        )));
    }
    let correct = probs
        .iter_rows()
        .zip(y)
        .filter(|(p, &c)| argmax(p) == c)
        .count();
    let acc = correct as f64 / y.len() as f64;
    Ok((acc, 1.0 - acc))
}

/// `U_t = 1 - mean softmax margin` of the batch.
pub fn batch_uncertainty(model: &GbdtModel, x: &Matrix) -> Result<f64> {
    uncertainty_of(&model.predict_proba_matrix(x)?)
}

/// `(A_t, E_t)`: fraction of correct argmax predictions and its complement.
pub fn batch_error(model: &GbdtModel, x: &Matrix, y: &[usize]) -> Result<(f64, f64)> {
    error_of(&model.predict_proba_matrix(x)?, y)
}

/// Mean accuracy drop over five shuffles of each feature column.
pub fn permutation_importance(model: &GbdtModel, x: &Matrix, y: &[usize], seed: u64) -> Result<Vec<f64>> {
    const REPEATS: u64 = 5;
    let (base, _) = batch_error(model, x, y)?;
    let mut out = Vec::with_capacity(x.cols());
    let mut shuffled = x.clone();
    for f in 0..x.cols() {
        let original = x.column(f);
        let mut drop = 0.0;
        for rep in 0..REPEATS {
            let mut col = original.clone();
            col.shuffle(&mut seed::rng(seed::derive_indexed(
                seed,
                f as u64 * REPEATS + rep,
            )));
            for (r, v) in col.into_iter().enumerate() {
                shuffled.set(r, f, v);
            }
            drop += base - batch_error(model, &shuffled, y)?.0;
        }
        for (r, v) in original.into_iter().enumerate() {
            shuffled.set(r, f, v);
        }
        out.push(drop / REPEATS as f64);
    }
    Ok(out)
}
