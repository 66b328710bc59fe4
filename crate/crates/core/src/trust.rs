//! Domain rules, component normalization and the composite trust score.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Record, Schema};
use crate::error::{Error, Result};
use crate::preprocess::DISTANCE_PER_MINUTE;
use crate::synth;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

impl Op {
    pub fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Op::Lt => a < b,
            Op::Le => a <= b,
            Op::Gt => a > b,
            Op::Ge => a >= b,
            Op::Eq => a == b,
            Op::Ne => a != b,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
            Op::Eq => "==",
            Op::Ne => "!=",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Operand {
    Constant(f64),
    Feature(String),
}

/// `feature op rhs` must hold for a record to be valid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub feature: String,
    pub op: Op,
    pub rhs: Operand,
}

impl Constraint {
    pub fn new(feature: &str, op: Op, rhs: f64) -> Self {
        Self {
            feature: feature.into(),
            op,
            rhs: Operand::Constant(rhs),
        }
    }
}

/// A named domain rule; a record violates it when any constraint fails.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub name: String,
    pub constraints: Vec<Constraint>,
    #[serde(default)]
    pub description: String,
}

pub fn default_rules() -> Vec<Rule> {
    vec![
        Rule {
            name: "plausible_speed".into(),
            constraints: vec![
                Constraint::new(DISTANCE_PER_MINUTE, Op::Ge, 1.0),
                Constraint::new(DISTANCE_PER_MINUTE, Op::Le, 12.0),
            ],
            description: "distance per minute within [1, 12] mi/min".into(),
        },
        Rule {
            name: "positive_price".into(),
            constraints: vec![Constraint::new(synth::PRICE, Op::Gt, 0.0)],
            description: "ticket price above zero".into(),
        },
        Rule {
            name: "positive_duration".into(),
            constraints: vec![Constraint::new(synth::DURATION, Op::Gt, 0.0)],
            description: "flight duration above zero".into(),
        },
    ]
}

#[derive(Clone, Debug)]
enum Rhs {
    Constant(f64),
    Column(usize),
}

/// Rules with feature names resolved against a schema.
#[derive(Clone, Debug)]
pub struct RuleSet {
    names: Vec<String>,
    compiled: Vec<Vec<(usize, Op, Rhs)>>,
}

impl RuleSet {
    pub fn compile(rules: &[Rule], schema: &Schema) -> Result<Self> {
        let mut compiled = Vec::with_capacity(rules.len());
        for rule in rules {
            let cs = rule
                .constraints
                .iter()
                .map(|c| {
                    let lhs = schema.numeric_index(&c.feature)?;
                    let rhs = match &c.rhs {
                        Operand::Constant(v) if v.is_finite() => Rhs::Constant(*v),
                        Operand::Constant(_) => {
                            return Err(Error::Config(format!(
                                "rule `{}`: constant must be finite",
                                rule.name
                            )))
                        }
                        Operand::Feature(f) => Rhs::Column(schema.numeric_index(f)?),
                    };
                    Ok((lhs, c.op, rhs))
                })
                .collect::<Result<Vec<_>>>()?;
            compiled.push(cs);
        }
        Ok(Self {
            names: rules.iter().map(|r| r.name.clone()).collect(),
            compiled,
        })
    }

    /// Whether `record` breaks rule `i`. Constraints touching a missing value
    /// are not evaluated.
    fn violates(&self, i: usize, record: &Record) -> bool {
        self.compiled[i].iter().any(|(lhs, op, rhs)| {
            let a = record.number(*lhs);
            let b = match rhs {
                Rhs::Constant(v) => Some(*v),
                Rhs::Column(c) => record.number(*c),
            };
            matches!((a, b), (Some(a), Some(b)) if !op.holds(a, b))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleOutcome {
    /// Fraction of records breaking at least one rule.
    pub rate: f64,
    pub per_rule: BTreeMap<String, usize>,
}

pub fn evaluate_rules(rules: &RuleSet, records: &[Record]) -> Result<RuleOutcome> {
    if records.is_empty() {
        return Err(Error::Data("rule evaluation on an empty batch".into()));
    }
    let mut per_rule: BTreeMap<String, usize> =
        rules.names.iter().map(|n| (n.clone(), 0)).collect();
    let mut violators = 0;
    for r in records {
        let mut any = false;
        for (i, name) in rules.names.iter().enumerate() {
            if rules.violates(i, r) {
                *per_rule.get_mut(name).expect("every rule has an entry") += 1;
                any = true;
            }
        }
        violators += usize::from(any);
    }
    Ok(RuleOutcome {
        rate: violators as f64 / records.len() as f64,
        per_rule,
    })
}

/// Nonnegative component weights, normalized to sum to one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct TrustWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl TrustWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        let w = [alpha, beta, gamma, delta];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("trust weights must be finite and nonnegative".into()));
        }
        let s: f64 = w.iter().sum();
        if s <= 0.0 {
            return Err(Error::Config("trust weights must not all be zero".into()));
        }
        Ok(Self {
            alpha: alpha / s,
            beta: beta / s,
            gamma: gamma / s,
            delta: delta / s,
        })
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.alpha, self.beta, self.gamma, self.delta]
    }
}

impl Default for TrustWeights {
    fn default() -> Self {
        Self::new(0.25, 0.25, 0.25, 0.25).expect("valid defaults")
    }
}

impl TryFrom<[f64; 4]> for TrustWeights {
    type Error = Error;

    fn try_from(w: [f64; 4]) -> Result<Self> {
        Self::new(w[0], w[1], w[2], w[3])
    }
}

impl From<TrustWeights> for [f64; 4] {
    fn from(w: TrustWeights) -> Self {
        w.as_array()
    }
}

impl std::str::FromStr for TrustWeights {
    type Err = Error;

    /// Parse `a,b,c,d`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("weights `{s}`: {e}")))?;
        let w: [f64; 4] = parts
            .try_into()
            .map_err(|_| Error::Config(format!("weights `{s}`: expected four values")))?;
        Self::try_from(w)
    }
}

/// Serialize floats as JSON numbers, or as `"inf"`, `"-inf"`, `"nan"` when
/// not finite.
pub mod float_or_string {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

/// Raw per-batch signals before normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSignals {
    pub batch: usize,
    pub rows: usize,
    /// PSI and JSD of the drift-target feature against training.
    pub psi: f64,
    pub jsd: f64,
    pub ae_delta: f64,
    #[serde(with = "float_or_string")]
    pub ae_z: f64,
    pub tae_delta: f64,
    #[serde(with = "float_or_string")]
    pub tae_z: f64,
    pub uncertainty: f64,
    pub rule_rate: f64,
    pub accuracy: f64,
    pub error: f64,
    /// PSI of every numeric model feature.
    pub feature_psi: BTreeMap<String, f64>,
    pub rule_counts: BTreeMap<String, usize>,
}

/// Which reconstruction z-score feeds the drift component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftSource {
    #[default]
    Tae,
    Ae,
    /// Average of the AE and TAE terms.
    Both,
}

/// Signal means over the designated clean batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub batches: Vec<usize>,
    pub psi: f64,
    pub jsd: f64,
    #[serde(with = "float_or_string")]
    pub ae_z: f64,
    #[serde(with = "float_or_string")]
    pub tae_z: f64,
    pub uncertainty: f64,
    pub rule_rate: f64,
    pub error: f64,
}

impl Calibration {
    /// Average the signals of the listed batches.
    pub fn from_batches(signals: &[BatchSignals], batches: &[usize]) -> Result<Self> {
        let chosen: Vec<&BatchSignals> = signals
            .iter()
            .filter(|s| batches.contains(&s.batch))
            .collect();
        if chosen.is_empty() || chosen.len() != batches.len() {
            return Err(Error::Config(format!(
                "calibration batches {batches:?} are not all present"
            )));
        }
        let mean = |f: fn(&BatchSignals) -> f64| {
            chosen.iter().map(|s| f(s)).sum::<f64>() / chosen.len() as f64
        };
        Ok(Self {
            batches: batches.to_vec(),
            psi: mean(|s| s.psi),
            jsd: mean(|s| s.jsd),
            ae_z: mean(|s| s.ae_z),
            tae_z: mean(|s| s.tae_z),
            uncertainty: mean(|s| s.uncertainty),
            rule_rate: mean(|s| s.rule_rate),
            error: mean(|s| s.error),
        })
    }
}

/// Normalized components, each in [0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Components {
    pub drift: f64,
    pub uncertainty: f64,
    pub rules: f64,
    pub error: f64,
}

impl Components {
    pub fn as_array(&self) -> [f64; 4] {
        [self.drift, self.uncertainty, self.rules, self.error]
    }
}

pub fn psi_term(psi: f64) -> f64 {
    (psi / 0.5).clamp(0.0, 1.0)
}

/// Maps a reconstruction z-score to [0, 1]; z = 3 lands at 0.5.
pub fn z_term(z: f64) -> f64 {
    if z.is_nan() {
        return 0.0;
    }
    (z.max(0.0) / 6.0).min(1.0)
}

/// Map raw signals to components. The drift component averages the PSI,
/// JSD and reconstruction terms; the other three pass through.
pub fn normalize_components(
    signals: &BatchSignals,
    calibration: Option<&Calibration>,
    source: DriftSource,
) -> Result<Components> {
    if calibration.is_none() {
        return Err(Error::Config(
            "normalization needs clean-batch calibration".into(),
        ));
    }
    let recon = match source {
        DriftSource::Tae => z_term(signals.tae_z),
        DriftSource::Ae => z_term(signals.ae_z),
        DriftSource::Both => 0.5 * (z_term(signals.tae_z) + z_term(signals.ae_z)),
    };
    let drift = (psi_term(signals.psi) + signals.jsd.clamp(0.0, 1.0) + recon) / 3.0;
    let c = Components {
        drift,
        uncertainty: signals.uncertainty,
        rules: signals.rule_rate,
        error: signals.error,
    };
    check_components(&c)?;
    Ok(c)
}

fn check_components(c: &Components) -> Result<()> {
    if c.as_array().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Data(format!(
            "trust components must lie in [0, 1], got {:?}",
            c.as_array()
        )));
    }
    Ok(())
}

/// `1 - (alpha D + beta U + gamma R + delta E)`, clamped to [0, 1].
pub fn trust_score(c: &Components, w: &TrustWeights) -> Result<f64> {
    check_components(c)?;
    let s: f64 = c
        .as_array()
        .iter()
        .zip(w.as_array())
        .map(|(c, w)| c * w)
        .sum();
    Ok((1.0 - s).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Flag when trust falls below this.
    pub trust: f64,
    /// Flag when the TAE z-score exceeds this.
    pub tae_z: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            trust: 0.7,
            tae_z: 3.0,
        }
    }
}

impl Thresholds {
    pub fn flags(&self, trust: f64, tae_z: f64) -> bool {
        trust < self.trust || tae_z > self.tae_z
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub batch: usize,
    pub components: Components,
    pub trust: f64,
    pub flagged: bool,
    pub drifted: bool,
    pub signals: BatchSignals,
}

pub const REPORT_FORMAT: &str = "trustdrift.trust_report";
pub const REPORT_VERSION: u32 = 1;

/// Everything a monitoring run produced; the JSON layout is versioned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustReport {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub drift_mode: synth::DriftMode,
    pub drift_feature: String,
    pub drifted_batches: Vec<usize>,
    pub weights: TrustWeights,
    pub thresholds: Thresholds,
    pub drift_source: DriftSource,
    pub calibration: Calibration,
    pub holdout_accuracy: f64,
    pub batches: Vec<BatchReport>,
}

pub const CSV_HEADER: [&str; 17] = [
    "batch",
    "rows",
    "psi",
    "jsd",
    "ae_delta",
    "ae_z",
    "tae_delta",
    "tae_z",
    "uncertainty",
    "rule_rate",
    "accuracy",
    "error",
    "drift_component",
    "trust",
    "flagged",
    "drifted",
    "first_flag",
];

impl TrustReport {
    pub fn first_flagged(&self) -> Option<usize> {
        self.batches.iter().find(|b| b.flagged).map(|b| b.batch)
    }

    pub fn trust_values(&self) -> Vec<f64> {
        self.batches.iter().map(|b| b.trust).collect()
    }

    pub fn flags(&self) -> Vec<bool> {
        self.batches.iter().map(|b| b.flagged).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s)?;
        if r.format != REPORT_FORMAT || r.version != REPORT_VERSION {
            return Err(Error::Data(format!(
                "unsupported report {} v{}",
                r.format, r.version
            )));
        }
        Ok(r)
    }

    /// One row per batch.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        let first = self.first_flagged();
        for b in &self.batches {
            let s = &b.signals;
            let f = |v: f64| v.to_string();
            out.write_record([
                b.batch.to_string(),
                s.rows.to_string(),
                f(s.psi),
                f(s.jsd),
                f(s.ae_delta),
                f(s.ae_z),
                f(s.tae_delta),
                f(s.tae_z),
                f(s.uncertainty),
                f(s.rule_rate),
                f(s.accuracy),
                f(s.error),
                f(b.components.drift),
                f(b.trust),
                b.flagged.to_string(),
                b.drifted.to_string(),
                (first == Some(b.batch)).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureKind, Field, TimestampFields, Value};
    use crate::seed;
    use proptest::prelude::{prop_assert, proptest};
    use rand::Rng;

    fn schema() -> Schema {
        Schema::new(
            vec![
                Field::new("Month", FeatureKind::numeric()),
                Field::new("Day", FeatureKind::numeric()),
                Field::new("Hour", FeatureKind::numeric()),
                Field::new("a", FeatureKind::numeric()),
                Field::new("b", FeatureKind::numeric()),
                Field::new("Price_USD", FeatureKind::numeric()),
                Field::new("y", FeatureKind::Label),
            ],
            "Price_USD",
            TimestampFields::default(),
        )
        .unwrap()
    }

    fn rec(a: f64, b: f64) -> Record {
        let n = Value::Number;
        Record::new(vec![n(1.0), n(1.0), n(0.0), n(a), n(b), n(1.0), Value::Text("p".into())])
    }

    fn rules() -> Vec<Rule> {
        vec![
            Rule {
                name: "a_small".into(),
                constraints: vec![Constraint::new("a", Op::Lt, 10.0)],
                description: String::new(),
            },
            Rule {
                name: "a_le_b".into(),
                constraints: vec![Constraint {
                    feature: "a".into(),
                    op: Op::Le,
                    rhs: Operand::Feature("b".into()),
                }],
                description: String::new(),
            },
        ]
    }

    #[test]
    fn rule_rates() {
        let s = schema();
        let empty = RuleSet::compile(&[], &s).unwrap();
        let recs: Vec<Record> = (0..10).map(|i| rec(i as f64, 100.0)).collect();
        assert_eq!(evaluate_rules(&empty, &recs).unwrap().rate, 0.0);

        let set = RuleSet::compile(&rules(), &s).unwrap();
        let bad: Vec<Record> = (0..4).map(|_| rec(50.0, 1.0)).collect();
        assert_eq!(evaluate_rules(&set, &bad).unwrap().rate, 1.0);

        // Record 0 breaks both rules, record 1 breaks one.
        let mut recs: Vec<Record> = (0..10).map(|i| rec(i as f64, 100.0)).collect();
        recs[0] = rec(20.0, 5.0);
        recs[1] = rec(3.0, 2.0);
        let out = evaluate_rules(&set, &recs).unwrap();
        let brute = recs
            .iter()
            .filter(|r| {
                let (a, b) = (r.number(3).unwrap(), r.number(4).unwrap());
                a >= 10.0 || a > b
            })
            .count() as f64
            / 10.0;
        assert_eq!(out.rate, 0.2);
        assert_eq!(out.rate, brute);
        assert_eq!(out.per_rule["a_small"], 1);
        assert_eq!(out.per_rule["a_le_b"], 2);
    }

    #[test]
    fn unknown_rule_feature_fails_at_compile() {
        let r = vec![Rule {
            name: "x".into(),
            constraints: vec![Constraint::new("zzz", Op::Gt, 0.0)],
            description: String::new(),
        }];
        assert!(matches!(RuleSet::compile(&r, &schema()), Err(Error::UnknownFeature(_))));
    }

    #[test]
    fn missing_values_do_not_violate() {
        let set = RuleSet::compile(&rules(), &schema()).unwrap();
        let mut r = rec(50.0, 1.0);
        r.values[3] = Value::Missing;
        assert_eq!(evaluate_rules(&set, &[r]).unwrap().rate, 0.0);
    }

    #[test]
    fn rules_parse_from_json() {
        let json = r#"[{"name":"r","constraints":[{"feature":"a","op":">=","rhs":1.5},{"feature":"a","op":"!=","rhs":"b"}]}]"#;
        let r: Vec<Rule> = serde_json::from_str(json).unwrap();
        assert_eq!(r[0].constraints[0].rhs, Operand::Constant(1.5));
        assert_eq!(r[0].constraints[1].rhs, Operand::Feature("b".into()));
        assert_eq!(r[0].constraints[1].op, Op::Ne);
    }

    fn signals(psi: f64, jsd: f64, z: f64) -> BatchSignals {
        BatchSignals {
            batch: 1,
            rows: 1,
            psi,
            jsd,
            ae_delta: 0.0,
            ae_z: 0.0,
            tae_delta: 0.0,
            tae_z: z,
            uncertainty: 0.0,
            rule_rate: 0.0,
            accuracy: 1.0,
            error: 0.0,
            feature_psi: BTreeMap::new(),
            rule_counts: BTreeMap::new(),
        }
    }

    fn calib() -> Calibration {
        Calibration::from_batches(&[signals(0.0, 0.0, 0.0)], &[1]).unwrap()
    }

    #[test]
    fn normalization_examples() {
        let c = normalize_components(&signals(0.0, 0.0, 0.0), Some(&calib()), DriftSource::Tae).unwrap();
        assert_eq!(c.as_array(), [0.0; 4]);
        assert_eq!(psi_term(0.5), 1.0);
        assert_eq!(psi_term(3.0), 1.0);
        assert_eq!(z_term(3.0), 0.5);
        assert_eq!(z_term(-2.0), 0.0);
        assert_eq!(z_term(f64::INFINITY), 1.0);
        let c = normalize_components(&signals(0.5, 0.0, 3.0), Some(&calib()), DriftSource::Tae).unwrap();
        assert!((c.drift - 0.5).abs() < 1e-15);
        assert!(normalize_components(&signals(0.0, 0.0, 0.0), None, DriftSource::Tae).is_err());
        let mut s = signals(0.0, 0.0, 6.0);
        s.ae_z = 0.0;
        let both = normalize_components(&s, Some(&calib()), DriftSource::Both).unwrap();
        assert!((both.drift - 0.5 / 3.0).abs() < 1e-15);
        let ae = normalize_components(&s, Some(&calib()), DriftSource::Ae).unwrap();
        assert_eq!(ae.drift, 0.0);
    }

    #[test]
    fn calibration_requires_listed_batches() {
        let s = [signals(0.1, 0.0, 1.0)];
        assert!(Calibration::from_batches(&s, &[1, 2]).is_err());
        assert_eq!(Calibration::from_batches(&s, &[1]).unwrap().tae_z, 1.0);
    }

    fn comps(d: f64, u: f64, r: f64, e: f64) -> Components {
        Components {
            drift: d,
            uncertainty: u,
            rules: r,
            error: e,
        }
    }

    #[test]
    fn trust_examples() {
        let w = TrustWeights::default();
        assert_eq!(trust_score(&comps(0.0, 0.0, 0.0, 0.0), &w).unwrap(), 1.0);
        assert_eq!(trust_score(&comps(1.0, 1.0, 1.0, 1.0), &w).unwrap(), 0.0);
        let t = trust_score(&comps(0.4, 0.2, 0.0, 0.2), &w).unwrap();
        assert!((t - 0.8).abs() < 1e-12);
        assert!(trust_score(&comps(1.2, 0.0, 0.0, 0.0), &w).is_err());
        assert!(trust_score(&comps(-0.1, 0.0, 0.0, 0.0), &w).is_err());
    }

    #[test]
    fn weights_parse_and_validate() {
        let w: TrustWeights = "1,1,1,1".parse().unwrap();
        assert_eq!(w, TrustWeights::default());
        assert!("1,2,3".parse::<TrustWeights>().is_err());
        assert!("1,-1,1,1".parse::<TrustWeights>().is_err());
        assert!("0,0,0,0".parse::<TrustWeights>().is_err());
        let json = serde_json::to_string(&w).unwrap();
        assert_eq!(json, "[0.25,0.25,0.25,0.25]");
        assert!(serde_json::from_str::<TrustWeights>("[0,0,0,0]").is_err());
    }

    proptest! {
        #[test]
        fn trust_algebra(
            c in proptest::array::uniform4(0.0f64..=1.0),
            raw in proptest::array::uniform4(0.0f64..10.0),
            scale in 0.01f64..100.0,
            bump in 0.0f64..1.0,
            which in 0usize..4,
        ) {
            if raw.iter().sum::<f64>() <= 1e-9 {
                return Ok(());
            }
            let w = TrustWeights::new(raw[0], raw[1], raw[2], raw[3]).unwrap();
            let comp = comps(c[0], c[1], c[2], c[3]);
            let t = trust_score(&comp, &w).unwrap();
            let s: f64 = raw.iter().sum();
            let direct = 1.0 - (0..4).map(|i| raw[i] / s * c[i]).sum::<f64>();
            prop_assert!((t - direct.clamp(0.0, 1.0)).abs() < 1e-12);

            let ws = TrustWeights::new(raw[0] * scale, raw[1] * scale, raw[2] * scale, raw[3] * scale).unwrap();
            prop_assert!((trust_score(&comp, &ws).unwrap() - t).abs() < 1e-12);

            let mut hi = c;
            hi[which] = (hi[which] + bump).min(1.0);
            prop_assert!(trust_score(&comps(hi[0], hi[1], hi[2], hi[3]), &w).unwrap() <= t + 1e-15);

            let mut one = [0.0; 4];
            one[which] = 1.0;
            let single = TrustWeights::new(one[0], one[1], one[2], one[3]).unwrap();
            prop_assert!(trust_score(&comp, &single).unwrap() == 1.0 - c[which]);
        }
    }

    #[test]
    fn infinite_z_survives_json() {
        let mut s = signals(0.1, 0.01, f64::INFINITY);
        s.ae_z = f64::NEG_INFINITY;
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains(r#""tae_z":"inf""#), "{json}");
        let back: BatchSignals = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn thresholds_flag_either_condition() {
        let t = Thresholds::default();
        assert!(t.flags(0.69, 0.0));
        assert!(t.flags(0.9, 3.1));
        assert!(!t.flags(0.7, 3.0));
        let mut rng = seed::rng(1);
        for _ in 0..100 {
            let (a, b): (f64, f64) = (rng.random(), rng.random_range(0.0..6.0));
            assert_eq!(t.flags(a, b), a < 0.7 || b > 3.0);
        }
    }
}
