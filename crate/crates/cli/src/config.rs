use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trustdrift::eval::{BenchmarkConfig, DetectorKind, DetectorThresholds};
use trustdrift::pipeline::PipelineConfig;
use trustdrift::seed;
use trustdrift::synth::{DriftMode, DriftSpec, GeneratorConfig};
use trustdrift::trust::TrustWeights;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSettings {
    pub trials: usize,
    pub detectors: Vec<DetectorKind>,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            trials: 5,
            detectors: DetectorKind::ALL.to_vec(),
        }
    }
}

/// Everything a command needs, loadable from a JSON file; command-line
/// flags are applied on top.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// CSV to monitor; data is generated when absent.
    pub input: Option<PathBuf>,
    pub generator: GeneratorConfig,
    pub pipeline: PipelineConfig,
    pub drift: DriftSpec,
    pub detectors: DetectorThresholds,
    pub bench: BenchSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = Self {
            input: None,
            generator: GeneratorConfig::default(),
            pipeline: PipelineConfig::default(),
            drift: DriftSpec::default(),
            detectors: DetectorThresholds::default(),
            bench: BenchSettings::default(),
        };
        c.set_seed(0);
        c
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Point every seeded component at one master seed.
    pub fn set_seed(&mut self, master: u64) {
        self.generator.seed = master;
        self.pipeline.seed = master;
        self.drift.seed = seed::derive(master, "drift");
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.pipeline.k < 2 {
            return Err(CliError::Usage("k must be at least 2".into()));
        }
        self.generator.validate()?;
        self.pipeline.validate()?;
        self.drift.validate(self.pipeline.k)?;
        if self.bench.trials == 0 {
            return Err(CliError::Usage("trials must be positive".into()));
        }
        Ok(())
    }

    pub fn benchmark(&self) -> BenchmarkConfig {
        BenchmarkConfig {
            generator: self.generator.clone(),
            pipeline: self.pipeline.clone(),
            drift: self.drift.clone(),
            detectors: self.detectors,
        }
    }
}

/// Optional overrides shared by the commands.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub rows: Option<usize>,
    pub k: Option<usize>,
    pub drift: Option<String>,
    pub drift_batches: Option<String>,
    pub weights: Option<String>,
    pub trust_threshold: Option<f64>,
    pub input: Option<PathBuf>,
    pub trials: Option<usize>,
    pub detectors: Option<String>,
}

impl Overrides {
    pub fn apply(&self, c: &mut RunConfig) -> Result<(), CliError> {
        if let Some(s) = self.seed {
            c.set_seed(s);
        }
        if let Some(r) = self.rows {
            c.generator.rows = r;
        }
        if let Some(k) = self.k {
            c.pipeline.k = k;
        }
        if let Some(m) = &self.drift {
            c.drift.mode = m.parse::<DriftMode>()?;
        }
        if let Some(b) = &self.drift_batches {
            c.drift.batches = parse_batches(b)?;
        }
        if let Some(w) = &self.weights {
            c.pipeline.weights = w.parse::<TrustWeights>()?;
        }
        if let Some(t) = self.trust_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(CliError::Usage(format!("trust threshold {t} outside [0, 1]")));
            }
            c.pipeline.thresholds.trust = t;
        }
        if let Some(p) = &self.input {
            c.input = Some(p.clone());
        }
        if let Some(t) = self.trials {
            c.bench.trials = t;
        }
        if let Some(d) = &self.detectors {
            c.bench.detectors = d
                .split(',')
                .map(|s| s.trim().parse::<DetectorKind>())
                .collect::<Result<_, _>>()?;
        }
        Ok(())
    }
}

/// `6-10`, `6,8,9` or a mix such as `2,6-8`; empty means no batch.
pub fn parse_batches(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Usage(format!("invalid batch list `{s}`"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: usize = a.trim().parse().map_err(|_| bad())?;
                let b: usize = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}
