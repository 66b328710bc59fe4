//! Detector benchmarking: per-batch flags against ground-truth drift, scored
//! by accuracy, F1 and detection latency.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{FittedPipeline, PipelineConfig};
use crate::seed;
use crate::synth::{generate_dataset, DriftSpec, GeneratorConfig};
use crate::trust::TrustReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    /// PSI or JSD of the drift target above threshold.
    Statistical,
    AeOnly,
    TaeOnly,
    /// The full trust-score flag.
    Hybrid,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [
        DetectorKind::Statistical,
        DetectorKind::AeOnly,
        DetectorKind::TaeOnly,
        DetectorKind::Hybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Statistical => "statistical",
            DetectorKind::AeOnly => "ae_only",
            DetectorKind::TaeOnly => "tae_only",
            DetectorKind::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = Self::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!(
                    "unknown detector `{s}`; valid kinds: {}",
                    valid.join(", ")
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Above,
    Below,
}

/// Flag each score that crosses `threshold` strictly in `direction`.
pub fn flags_from_scores(scores: &[f64], threshold: f64, direction: Direction) -> Vec<bool> {
    scores
        .iter()
        .map(|&s| match direction {
            Direction::Above => s > threshold,
            Direction::Below => s < threshold,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    /// `2TP / (2TP + FP + FN)`; 1 when there is neither drift nor a flag.
    pub f1: f64,
    /// Batches from the first drifted batch to the first flag at or after
    /// it; `None` if drift is never flagged or absent.
    pub latency: Option<usize>,
}

/// Score per-batch `flags` against the 1-based drifted batch indices.
pub fn detection_metrics(flags: &[bool], truth: &[usize]) -> Result<DetectionMetrics> {
    let k = flags.len();
    if let Some(&b) = truth.iter().find(|&&b| b == 0 || b > k) {
        return Err(Error::Shape(format!(
            "drifted batch {b} outside the {k} flagged batches"
        )));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (i, &f) in flags.iter().enumerate() {
        match (f, truth.contains(&(i + 1))) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let denom = 2 * tp + fp + fn_;
    let f1 = if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    };
    let latency = truth.iter().min().and_then(|&first| {
        flags
            .iter()
            .enumerate()
            .skip(first - 1)
            .find(|(_, &f)| f)
            .map(|(i, _)| i + 1 - first)
    });
    Ok(DetectionMetrics {
        tp,
        fp,
        tn,
        fn_,
        accuracy: if k == 0 { 1.0 } else { (tp + tn) as f64 / k as f64 },
        f1,
        latency,
    })
}

/// Thresholds that turn report signals into per-detector flags.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorThresholds {
    pub psi: f64,
    pub jsd: f64,
    pub z: f64,
}

impl Default for DetectorThresholds {
    fn default() -> Self {
        Self {
            psi: 0.2,
            jsd: 0.1,
            z: 3.0,
        }
    }
}

/// Per-batch flags of one detector on a monitoring report.
pub fn detector_flags(report: &TrustReport, kind: DetectorKind, t: &DetectorThresholds) -> Vec<bool> {
    let b = &report.batches;
    match kind {
        DetectorKind::Statistical => b
            .iter()
            .map(|b| b.signals.psi > t.psi || b.signals.jsd > t.jsd)
            .collect(),
        DetectorKind::AeOnly => {
            let z: Vec<f64> = b.iter().map(|b| b.signals.ae_z).collect();
            flags_from_scores(&z, t.z, Direction::Above)
        }
        DetectorKind::TaeOnly => {
            let z: Vec<f64> = b.iter().map(|b| b.signals.tae_z).collect();
            flags_from_scores(&z, t.z, Direction::Above)
        }
        DetectorKind::Hybrid => b.iter().map(|b| b.flagged).collect(),
    }
}

/// One detector on one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub detector: DetectorKind,
    pub seed: u64,
    pub flags: Vec<bool>,
    pub truth: Vec<usize>,
    pub metrics: DetectionMetrics,
}

/// Score every detector kind on a report.
pub fn evaluate_report(
    report: &TrustReport,
    seed: u64,
    t: &DetectorThresholds,
) -> Result<Vec<BenchmarkResult>> {
    DetectorKind::ALL
        .iter()
        .map(|&kind| {
            let flags = detector_flags(report, kind, t);
            let metrics = detection_metrics(&flags, &report.drifted_batches)?;
            Ok(BenchmarkResult {
                detector: kind,
                seed,
                flags,
                truth: report.drifted_batches.clone(),
                metrics,
            })
        })
        .collect()
}

/// Mean metrics of one detector over trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub detector: DetectorKind,
    pub accuracy: f64,
    /// Mean over the trials that detected the drift; `None` if none did.
    pub latency_batches: Option<f64>,
    pub f1: f64,
    pub trials: usize,
    pub detected_trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTable {
    pub rows: Vec<BenchmarkRow>,
}

impl BenchmarkTable {
    /// Average results per detector, in `DetectorKind::ALL` order.
    pub fn from_results(results: &[BenchmarkResult]) -> Self {
        let rows = DetectorKind::ALL
            .iter()
            .filter_map(|&kind| {
                let rs: Vec<&BenchmarkResult> =
                    results.iter().filter(|r| r.detector == kind).collect();
                if rs.is_empty() {
                    return None;
                }
                let n = rs.len() as f64;
                let lat: Vec<f64> = rs
                    .iter()
                    .filter_map(|r| r.metrics.latency.map(|l| l as f64))
                    .collect();
                Some(BenchmarkRow {
                    detector: kind,
                    accuracy: rs.iter().map(|r| r.metrics.accuracy).sum::<f64>() / n,
                    latency_batches: (!lat.is_empty())
                        .then(|| lat.iter().sum::<f64>() / lat.len() as f64),
                    f1: rs.iter().map(|r| r.metrics.f1).sum::<f64>() / n,
                    trials: rs.len(),
                    detected_trials: lat.len(),
                })
            })
            .collect();
        Self { rows }
    }

    pub fn row(&self, kind: DetectorKind) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.detector == kind)
    }

    /// Columns `detector,accuracy,latency_batches,f1`; undefined latency is
    /// written as `NA`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["detector", "accuracy", "latency_batches", "f1"])?;
        for r in &self.rows {
            out.write_record([
                r.detector.name().to_string(),
                r.accuracy.to_string(),
                r.latency_batches.map_or_else(|| "NA".into(), |l| l.to_string()),
                r.f1.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Inputs of a multi-seed benchmark.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub generator: GeneratorConfig,
    pub pipeline: PipelineConfig,
    pub drift: DriftSpec,
    pub detectors: DetectorThresholds,
}

/// Trial seeds derived from a master seed.
pub fn trial_seeds(master: u64, trials: usize) -> Vec<u64> {
    (0..trials as u64)
        .map(|i| seed::derive_indexed(seed::derive(master, "trial"), i))
        .collect()
}

/// Fit and monitor once per seed, then score every detector. Each trial
/// uses the seed for data generation, the pipeline and drift injection.
pub fn compare_detectors(cfg: &BenchmarkConfig, seeds: &[u64]) -> Result<(BenchmarkTable, Vec<BenchmarkResult>)> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let mut results = Vec::new();
    for &s in seeds {
        log::info!("trial seed {s}");
        let data = generate_dataset(&GeneratorConfig {
            seed: s,
            ..cfg.generator.clone()
        })?;
        let fitted = FittedPipeline::fit(
            data,
            &PipelineConfig {
                seed: s,
                ..cfg.pipeline.clone()
            },
        )?;
        let report = fitted.monitor(&DriftSpec {
            seed: seed::derive(s, "drift"),
            ..cfg.drift.clone()
        })?;
        results.extend(evaluate_report(&report, s, &cfg.detectors)?);
    }
    Ok((BenchmarkTable::from_results(&results), results))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_examples() {
        let s = [0.1, 0.2, 0.9];
        assert_eq!(flags_from_scores(&s, f64::INFINITY, Direction::Above), [false; 3]);
        assert_eq!(flags_from_scores(&s, 0.0, Direction::Above), [true; 3]);
        assert_eq!(flags_from_scores(&s, 0.5, Direction::Above), [false, false, true]);
        assert_eq!(flags_from_scores(&s, 0.5, Direction::Below), [true, true, false]);
    }

    #[test]
    fn metric_examples() {
        let truth: Vec<usize> = (6..=10).collect();
        let perfect: Vec<bool> = (1..=10).map(|b| b >= 6).collect();
        let m = detection_metrics(&perfect, &truth).unwrap();
        assert_eq!((m.accuracy, m.f1, m.latency), (1.0, 1.0, Some(0)));

        let none = detection_metrics(&[false; 10], &truth).unwrap();
        assert_eq!((none.f1, none.latency), (0.0, None));

        let late: Vec<bool> = (1..=10).map(|b| b >= 7).collect();
        let m = detection_metrics(&late, &truth).unwrap();
        assert_eq!((m.tp, m.fn_, m.fp, m.tn), (4, 1, 0, 5));
        assert!((m.accuracy - 0.9).abs() < 1e-15);
        assert!((m.f1 - 8.0 / 9.0).abs() < 1e-15);
        assert_eq!(m.latency, Some(1));

        assert!(detection_metrics(&[true; 3], &[4]).is_err());
        let clean = detection_metrics(&[false; 4], &[]).unwrap();
        assert_eq!((clean.f1, clean.accuracy, clean.latency), (1.0, 1.0, None));
    }

    #[test]
    fn exhaustive_agreement_with_brute_force() {
        for k in 1..=8usize {
            for truth_mask in 0u32..(1 << k) {
                let truth: Vec<usize> = (0..k).filter(|i| truth_mask >> i & 1 == 1).map(|i| i + 1).collect();
                for mask in 0u32..(1 << k) {
                    let flags: Vec<bool> = (0..k).map(|i| mask >> i & 1 == 1).collect();
                    let m = detection_metrics(&flags, &truth).unwrap();

                    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
                    for i in 0..k {
                        let (f, t) = (mask >> i & 1 == 1, truth_mask >> i & 1 == 1);
                        tp += usize::from(f && t);
                        fp += usize::from(f && !t);
                        fn_ += usize::from(!f && t);
                    }
                    let tn = k - tp - fp - fn_;
                    assert_eq!((m.tp, m.fp, m.fn_, m.tn), (tp, fp, fn_, tn));
                    assert_eq!(m.accuracy, (tp + tn) as f64 / k as f64);
                    let f1 = if 2 * tp + fp + fn_ == 0 { 1.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
                    assert_eq!(m.f1, f1);
                    let latency = if truth_mask == 0 {
                        None
                    } else {
                        let first = truth_mask.trailing_zeros();
                        (first..k as u32).find(|i| mask >> i & 1 == 1).map(|i| (i - first) as usize)
                    };
                    assert_eq!(m.latency, latency);
                    if truth_mask != 0 && mask >> truth_mask.trailing_zeros() & 1 == 1 {
                        assert_eq!(m.latency, Some(0));
                    }
                }
            }
        }
    }

    #[test]
    fn detector_names_round_trip() {
        for k in DetectorKind::ALL {
            assert_eq!(k.name().parse::<DetectorKind>().unwrap(), k);
        }
        let err = "magic".parse::<DetectorKind>().unwrap_err().to_string();
        assert!(err.contains("statistical, ae_only, tae_only, hybrid"), "{err}");
    }

    fn result(kind: DetectorKind, f1: f64, latency: Option<usize>) -> BenchmarkResult {
        BenchmarkResult {
            detector: kind,
            seed: 0,
            flags: vec![],
            truth: vec![],
            metrics: DetectionMetrics {
                tp: 0,
                fp: 0,
                tn: 0,
                fn_: 0,
                accuracy: f1,
                f1,
                latency,
            },
        }
    }

    #[test]
    fn table_means_and_csv() {
        let rs = vec![
            result(DetectorKind::Hybrid, 1.0, Some(0)),
            result(DetectorKind::Hybrid, 0.5, Some(2)),
            result(DetectorKind::Statistical, 0.0, None),
        ];
        let t = BenchmarkTable::from_results(&rs);
        let h = t.row(DetectorKind::Hybrid).unwrap();
        assert_eq!((h.f1, h.latency_batches, h.detected_trials), (0.75, Some(1.0), 2));
        assert_eq!(t.row(DetectorKind::Statistical).unwrap().latency_batches, None);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let csv = String::from_utf8(buf).unwrap();
        assert_eq!(csv, "detector,accuracy,latency_batches,f1\nstatistical,0,NA,0\nhybrid,0.75,1,0.75\n");
    }

    #[test]
    fn trial_seeds_are_stable_and_distinct() {
        let s = trial_seeds(7, 5);
        assert_eq!(s, trial_seeds(7, 5));
        let mut d = s.clone();
        d.sort_unstable();
        d.dedup();
        assert_eq!(d.len(), 5);
    }
}
