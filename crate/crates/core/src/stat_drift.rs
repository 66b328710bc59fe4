//! Histograms over one numeric feature and the PSI / Jensen-Shannon
//! divergences between them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinStrategy {
    /// Equal-width bins spanning the reference range.
    EqualWidth,
    /// Edges at the reference quantiles.
    Quantile,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinningSpec {
    pub bins: usize,
    pub strategy: BinStrategy,
    /// Additive per-bin smoothing.
    pub epsilon: f64,
}

impl Default for BinningSpec {
    fn default() -> Self {
        Self {
            bins: 10,
            strategy: BinStrategy::Quantile,
            epsilon: 1e-6,
        }
    }
}

impl BinningSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::Config("histograms need at least two bins".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config("smoothing epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Smoothed bin proportions. `edges` has one more entry than `proportions`;
/// the outermost edges are infinite so every finite value lands in a bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub proportions: Vec<f64>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.proportions.len()
    }

    /// Bin index of `v`; bins are half-open `[lo, hi)`.
    pub fn bin_of(&self, v: f64) -> usize {
        let inner = &self.edges[1..self.edges.len() - 1];
        inner.partition_point(|&e| e <= v)
    }
}

/// Interior edges (n - 1 of them) fitted on the reference values.
fn fit_edges(sorted: &[f64], spec: &BinningSpec) -> Vec<f64> {
    let n = spec.bins;
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let equal_width = |lo: f64, hi: f64| -> Vec<f64> {
        (1..n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
    };
    if lo == hi {
        return equal_width(lo - 1.0, lo + 1.0);
    }
    match spec.strategy {
        BinStrategy::EqualWidth => equal_width(lo, hi),
        BinStrategy::Quantile => {
            let mut e: Vec<f64> = (1..n)
                .map(|i| stats::quantile_sorted(sorted, i as f64 / n as f64))
                .collect();
            e.dedup();
            // Heavy ties can collapse quantiles; pad with equal-width edges
            // until the bin count is restored.
            if e.len() < n - 1 {
                let mut merged: Vec<f64> = e.into_iter().chain(equal_width(lo, hi)).collect();
                merged.sort_by(f64::total_cmp);
                merged.dedup();
                while merged.len() > n - 1 {
                    let (i, _) = merged
                        .windows(2)
                        .enumerate()
                        .min_by(|a, b| (a.1[1] - a.1[0]).total_cmp(&(b.1[1] - b.1[0])))
                        .expect("at least two edges");
                    merged.remove(i + 1);
                }
                e = merged;
            }
            e
        }
    }
}

/// Bin `values` and smooth: `p_i = (c_i + eps) / (N + n * eps)`.
///
/// Without a reference the edges are fitted on `values` (the expected side);
/// with one, its edges are reused so the two histograms are comparable.
pub fn build_histogram(
    values: &[f64],
    spec: &BinningSpec,
    reference: Option<&Histogram>,
) -> Result<Histogram> {
    spec.validate()?;
    if values.is_empty() {
        return Err(Error::Data("cannot build a histogram from no values".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("histogram input contains non-finite values".into()));
    }
    let edges = match reference {
        Some(r) => r.edges.clone(),
        None => {
            let mut e = vec![f64::NEG_INFINITY];
            e.extend(fit_edges(&stats::sorted(values), spec));
            e.push(f64::INFINITY);
            e
        }
    };
    let n = edges.len() - 1;
    let mut hist = Histogram {
        edges,
        proportions: vec![0.0; n],
    };
    let mut counts = vec![0usize; n];
    for &v in values {
        counts[hist.bin_of(v)] += 1;
    }
    let denom = values.len() as f64 + n as f64 * spec.epsilon;
    hist.proportions = counts
        .iter()
        .map(|&c| (c as f64 + spec.epsilon) / denom)
        .collect();
    Ok(hist)
}

/// Population stability index `sum (A - E) ln(A / E)`.
pub fn psi(expected: &Histogram, actual: &Histogram) -> Result<f64> {
    if expected.edges != actual.edges {
        return Err(Error::Shape("PSI needs histograms with identical edges".into()));
    }
    Ok(expected
        .proportions
        .iter()
        .zip(&actual.proportions)
        .map(|(&e, &a)| (a - e) * (a / e).ln())
        .sum())
}

fn same_len(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!(
            "distributions of length {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// `KL(p || q)` in bits, with `0 log 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    same_len(p, q)?;
    Ok(p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).log2())
        .sum())
}

/// Jensen-Shannon divergence in bits; lies in [0, 1].
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    same_len(p, q)?;
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let v = 0.5 * kl_divergence(p, &m)? + 0.5 * kl_divergence(q, &m)?;
    Ok(v.clamp(0.0, 1.0))
}

/// PSI and JSD of `actual` values against a reference histogram.
pub fn drift_against(reference: &Histogram, actual: &[f64], spec: &BinningSpec) -> Result<(f64, f64)> {
    let h = build_histogram(actual, spec, Some(reference))?;
    Ok((
        psi(reference, &h)?,
        jsd(&reference.proportions, &h.proportions)?,
    ))
}
