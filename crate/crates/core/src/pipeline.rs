//! End-to-end monitoring: preprocess, split, rebalance, fit the classifier
//! and both reconstruction models, then score every batch of the stream.

use std::collections::BTreeMap;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, GbdtConfig, GbdtModel};
use crate::data::{partition_batches, sort_by_timestamp, Batch, Dataset, Schema};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::neural::{
    drift_delta, train_autoencoder, train_transformer_ae, AutoencoderModel, TrainConfig,
    TrainReport, TransformerAeModel,
};
use crate::preprocess::{
    self, CleaningRuleSet, EngineerReport, Encoding, FittedTransform, PreprocessReport,
};
use crate::seed;
use crate::stat_drift::{build_histogram, drift_against, BinningSpec, Histogram};
use crate::synth::{apply_drift, DriftSpec};
use crate::trust::{
    default_rules, evaluate_rules, normalize_components, trust_score, BatchReport, BatchSignals,
    Calibration, DriftSource, Rule, RuleSet, Thresholds, TrustReport, TrustWeights,
    REPORT_FORMAT, REPORT_VERSION,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Master seed; every component derives its own stream from it.
    pub seed: u64,
    /// Number of stream batches.
    pub k: usize,
    pub train_fraction: f64,
    pub cleaning: CleaningRuleSet,
    pub binning: BinningSpec,
    pub smote_neighbors: usize,
    pub classifier: GbdtConfig,
    /// Seeds inside the two training configs are replaced by derived ones.
    pub autoencoder: TrainConfig,
    pub transformer: TrainConfig,
    /// Cap on the rows used to train the reconstruction models; a seeded
    /// subset of the training split is drawn when it is larger.
    pub neural_rows: Option<usize>,
    pub rules: Vec<Rule>,
    pub weights: TrustWeights,
    pub thresholds: Thresholds,
    pub drift_source: DriftSource,
    /// Batches assumed clean, used for calibration.
    pub calibration_batches: Vec<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            k: 10,
            train_fraction: 0.8,
            cleaning: CleaningRuleSet::default(),
            binning: BinningSpec::default(),
            smote_neighbors: 5,
            classifier: GbdtConfig::default(),
            autoencoder: TrainConfig::default(),
            transformer: TrainConfig::default(),
            neural_rows: None,
            rules: default_rules(),
            weights: TrustWeights::default(),
            thresholds: Thresholds::default(),
            drift_source: DriftSource::default(),
            calibration_batches: vec![1, 2],
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config("k must be at least 2".into()));
        }
        if let Some(&b) = self
            .calibration_batches
            .iter()
            .find(|&&b| b == 0 || b > self.k)
        {
            return Err(Error::Config(format!(
                "calibration batch {b} outside 1..={}",
                self.k
            )));
        }
        if self.calibration_batches.is_empty() {
            return Err(Error::Config("at least one calibration batch is required".into()));
        }
        self.binning.validate()?;
        self.classifier.validate()?;
        self.autoencoder.validate()?;
        self.transformer.validate()
    }
}

/// Models and references fitted once; `monitor` can then replay the stream
/// under any drift scenario.
#[derive(Clone, Debug)]
pub struct FittedPipeline {
    pub config: PipelineConfig,
    pub schema: Schema,
    /// Clean, preprocessed stream batches.
    pub batches: Vec<Batch>,
    pub transform: FittedTransform,
    pub engineered: EngineerReport,
    pub preprocess_report: PreprocessReport,
    pub classifier: GbdtModel,
    pub autoencoder: AutoencoderModel,
    pub autoencoder_report: TrainReport,
    pub transformer: TransformerAeModel,
    pub transformer_report: TrainReport,
    /// Held-out accuracy on the test split.
    pub holdout_accuracy: f64,
    /// Training-split histogram of every numeric model feature.
    pub references: BTreeMap<String, Histogram>,
    rules: RuleSet,
}

fn raw_column(schema: &Schema, records: &[crate::data::Record], name: &str) -> Result<Vec<f64>> {
    let i = schema.numeric_index(name)?;
    Ok(records.iter().filter_map(|r| r.number(i)).collect())
}

impl FittedPipeline {
    pub fn fit(raw: Dataset, config: &PipelineConfig) -> Result<Self> {
        config.validate()?;
        let master = config.seed;

        let (cleaned, cleaning) = preprocess::clean(raw, &config.cleaning)?;
        let standardized = preprocess::standardize_categoricals(cleaned);
        let stamped = sort_by_timestamp(preprocess::build_timestamp(standardized)?)?;
        let (stream, engineered) = preprocess::engineer_features(stamped)?;
        let schema = stream.schema().clone();
        let rules = RuleSet::compile(&config.rules, &schema)?;

        let (train, test) =
            preprocess::train_test_split(&stream, config.train_fraction, seed::derive(master, "split"))?;
        let transform = preprocess::fit_transform(&train)?;
        let (x_train, y_train) = preprocess::apply_transform(&transform, &train)?;
        log::info!(
            "{} stream rows, {} training rows, {} model features",
            stream.len(),
            train.len(),
            transform.width()
        );

        let (x_bal, y_bal) = preprocess::smote_resample(
            &x_train,
            &y_train,
            config.smote_neighbors,
            seed::derive(master, "smote"),
        )?;
        let classifier = GbdtModel::fit(&x_bal, &y_bal, &transform.classes, &config.classifier)?;
        let holdout_accuracy = if test.is_empty() {
            f64::NAN
        } else {
            let (x_test, y_test) = preprocess::apply_transform(&transform, &test)?;
            classifier::batch_error(&classifier, &x_test, &y_test)?.0
        };
        log::info!("classifier held-out accuracy {holdout_accuracy:.4}");

        let x_neural = match config.neural_rows {
            Some(cap) if cap < x_train.rows() => {
                let mut idx =
                    index::sample(&mut seed::rng(seed::derive(master, "neural_rows")), x_train.rows(), cap)
                        .into_vec();
                idx.sort_unstable();
                x_train.select_rows(&idx)
            }
            _ => x_train,
        };
        let ae_cfg = TrainConfig {
            seed: seed::derive(master, "autoencoder"),
            ..config.autoencoder.clone()
        };
        let (autoencoder, autoencoder_report) = train_autoencoder(&x_neural, &ae_cfg)?;
        log::info!(
            "autoencoder: {} epochs, loss {:.4} -> {:.4}",
            autoencoder_report.train_loss.len(),
            autoencoder_report.first_loss(),
            autoencoder_report.final_loss()
        );
        let tae_cfg = TrainConfig {
            seed: seed::derive(master, "transformer"),
            ..config.transformer.clone()
        };
        let (transformer, transformer_report) = train_transformer_ae(&x_neural, &tae_cfg)?;
        log::info!(
            "transformer autoencoder: {} epochs, loss {:.4} -> {:.4}",
            transformer_report.train_loss.len(),
            transformer_report.first_loss(),
            transformer_report.final_loss()
        );

        let mut references = BTreeMap::new();
        for f in &transform.features {
            if matches!(f.encoding, Encoding::Numeric { .. }) {
                let values = raw_column(&schema, train.records(), &f.name)?;
                if !values.is_empty() {
                    references.insert(f.name.clone(), build_histogram(&values, &config.binning, None)?);
                }
            }
        }
        if !references.contains_key(schema.drift_target()) {
            return Err(Error::Data(format!(
                "drift target `{}` has no usable training values",
                schema.drift_target()
            )));
        }

        let batches = partition_batches(&stream, config.k)?;
        let preprocess_report = PreprocessReport {
            cleaning,
            engineered: engineered.clone(),
            dropped_features: transform.dropped.clone(),
            imputation: transform.imputation_values(),
        };
        Ok(Self {
            config: config.clone(),
            schema,
            batches,
            transform,
            engineered,
            preprocess_report,
            classifier,
            autoencoder,
            autoencoder_report,
            transformer,
            transformer_report,
            holdout_accuracy,
            references,
            rules,
        })
    }

    /// Training standard deviation of a feature in raw units.
    pub fn feature_std(&self, name: &str) -> Result<f64> {
        self.transform
            .feature(name)
            .map(|f| f.std)
            .ok_or_else(|| Error::UnknownFeature(name.into()))
    }

    /// Stream batches with `drift` injected and derived features recomputed.
    pub fn drifted_batches(&self, drift: &DriftSpec) -> Result<Vec<Batch>> {
        let mut batches = self.batches.clone();
        let std = match drift.mode {
            crate::synth::DriftMode::Shift => self.feature_std(&drift.feature)?,
            _ => 0.0,
        };
        apply_drift(&mut batches, &self.schema, drift, std)?;
        let affected = drift.affected();
        for b in batches.iter_mut().filter(|b| affected.contains(&b.index)) {
            preprocess::recompute_derived(&self.schema, &mut b.records, &self.engineered)?;
        }
        Ok(batches)
    }

    /// Raw signals of one batch.
    pub fn signals(&self, batch: &Batch) -> Result<BatchSignals> {
        let (x, y) = self.transform.apply_records(&self.schema, &batch.records)?;
        let mut feature_psi = BTreeMap::new();
        let mut target = (0.0, 0.0);
        for (name, reference) in &self.references {
            let values = raw_column(&self.schema, &batch.records, name)?;
            if values.is_empty() {
                continue;
            }
            let (psi, jsd) = drift_against(reference, &values, &self.config.binning)?;
            if name == self.schema.drift_target() {
                target = (psi, jsd);
            }
            feature_psi.insert(name.clone(), psi);
        }
        let ae = drift_delta(&self.autoencoder, &x)?;
        let tae = drift_delta(&self.transformer, &x)?;
        let probs = self.classifier.predict_proba_matrix(&x)?;
        let uncertainty = classifier::uncertainty_of(&probs)?;
        let (accuracy, error) = classifier::error_of(&probs, &y)?;
        let rules = evaluate_rules(&self.rules, &batch.records)?;
        Ok(BatchSignals {
            batch: batch.index,
            rows: batch.len(),
            psi: target.0,
            jsd: target.1,
            ae_delta: ae.delta,
            ae_z: ae.z,
            tae_delta: tae.delta,
            tae_z: tae.z,
            uncertainty,
            rule_rate: rules.rate,
            accuracy,
            error,
            feature_psi,
            rule_counts: rules.per_rule,
        })
    }

    /// Replay the stream under `drift` and score every batch.
    pub fn monitor(&self, drift: &DriftSpec) -> Result<TrustReport> {
        self.monitor_with(drift, &self.config.weights, &self.config.thresholds)
    }

    pub fn monitor_with(
        &self,
        drift: &DriftSpec,
        weights: &TrustWeights,
        thresholds: &Thresholds,
    ) -> Result<TrustReport> {
        let batches = self.drifted_batches(drift)?;
        let signals: Vec<BatchSignals> = batches
            .iter()
            .map(|b| self.signals(b).map_err(|e| e.in_batch(b.index)))
            .collect::<Result<_>>()?;
        let affected = drift.affected();
        let calibration_batches = &self.config.calibration_batches;
        if let Some(b) = calibration_batches.iter().find(|b| affected.contains(b)) {
            log::warn!("calibration batch {b} is drifted");
        }
        let calibration = Calibration::from_batches(&signals, calibration_batches)?;

        let mut reports = Vec::with_capacity(signals.len());
        for s in signals {
            let components =
                normalize_components(&s, Some(&calibration), self.config.drift_source)
                    .map_err(|e| e.in_batch(s.batch))?;
            let trust = trust_score(&components, weights).map_err(|e| e.in_batch(s.batch))?;
            reports.push(BatchReport {
                batch: s.batch,
                components,
                trust,
                flagged: thresholds.flags(trust, s.tae_z),
                drifted: affected.contains(&s.batch),
                signals: s,
            });
        }
        Ok(TrustReport {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            seed: self.config.seed,
            drift_mode: drift.mode,
            drift_feature: drift.feature.clone(),
            drifted_batches: affected,
            weights: *weights,
            thresholds: *thresholds,
            drift_source: self.config.drift_source,
            calibration,
            holdout_accuracy: self.holdout_accuracy,
            batches: reports,
        })
    }

    /// Model matrix of a batch, e.g. for ad-hoc reconstruction scoring.
    pub fn batch_matrix(&self, batch: &Batch) -> Result<(Matrix, Vec<usize>)> {
        self.transform.apply_records(&self.schema, &batch.records)
    }
}

/// Fit everything on `raw` and score its stream under `drift`.
pub fn run_monitoring(raw: Dataset, config: &PipelineConfig, drift: &DriftSpec) -> Result<TrustReport> {
    FittedPipeline::fit(raw, config)?.monitor(drift)
}
