//! Cleaning, categorical normalization, feature engineering, timestamps,
//! encoding and scaling, SMOTE rebalancing and stratified splitting.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureKind, Field, Record, Schema, Value};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;
use crate::stats;
use crate::synth;

pub const DISTANCE_PER_MINUTE: &str = "Distance_per_Minute";
pub const PRICE_PER_MILE: &str = "Price_per_Mile";

/// A predicate marking a row as invalid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RowPredicate {
    /// Two categorical fields carry the same value (compared case- and
    /// whitespace-insensitively).
    SameValue { a: String, b: String },
    /// A numeric field is below zero.
    Negative { feature: String },
}

impl RowPredicate {
    pub fn name(&self) -> String {
        match self {
            RowPredicate::SameValue { a, b } => format!("{a} == {b}"),
            RowPredicate::Negative { feature } => format!("{feature} < 0"),
        }
    }

    fn check(&self, schema: &Schema) -> Result<()> {
        match self {
            RowPredicate::SameValue { a, b } => {
                for f in [a, b] {
                    schema
                        .index_of(f)
                        .ok_or_else(|| Error::UnknownFeature(f.clone()))?;
                }
                Ok(())
            }
            RowPredicate::Negative { feature } => schema.numeric_index(feature).map(|_| ()),
        }
    }

    fn matches(&self, schema: &Schema, record: &Record) -> bool {
        match self {
            RowPredicate::SameValue { a, b } => {
                let get = |f: &str| {
                    schema
                        .index_of(f)
                        .and_then(|i| record.values[i].as_str())
                        .map(normalize_text)
                };
                matches!((get(a), get(b)), (Some(x), Some(y)) if x == y)
            }
            RowPredicate::Negative { feature } => schema
                .index_of(feature)
                .and_then(|i| record.number(i))
                .is_some_and(|v| v < 0.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CleaningRuleSet {
    pub predicates: Vec<RowPredicate>,
    /// Lower and upper clipping quantiles applied to every numeric model
    /// feature; `None` disables clipping.
    pub clip: Option<(f64, f64)>,
}

impl Default for CleaningRuleSet {
    fn default() -> Self {
        let negative = |f: &str| RowPredicate::Negative { feature: f.into() };
        Self {
            predicates: vec![
                RowPredicate::SameValue {
                    a: synth::DEPARTURE.into(),
                    b: synth::ARRIVAL.into(),
                },
                negative(synth::DISTANCE),
                negative(synth::DELAY),
                negative(synth::PRICE),
            ],
            clip: Some((0.005, 0.995)),
        }
    }
}

impl CleaningRuleSet {
    pub fn empty() -> Self {
        Self {
            predicates: Vec::new(),
            clip: None,
        }
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        if let Some((lo, hi)) = self.clip {
            if !(lo > 0.0 && hi < 1.0 && lo < hi) {
                return Err(Error::Config(format!(
                    "clipping quantiles must satisfy 0 < lower < upper < 1, got ({lo}, {hi})"
                )));
            }
        }
        self.predicates.iter().try_for_each(|p| p.check(schema))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipReport {
    pub lower: f64,
    pub upper: f64,
    pub clipped: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    pub rows_in: usize,
    pub rows_out: usize,
    /// Rows matching each rule. A row matching several rules counts once per
    /// rule.
    pub removed: BTreeMap<String, usize>,
    pub clipped: BTreeMap<String, ClipReport>,
}

/// Drop invalid rows, then clamp numeric model features to their clipping
/// quantiles computed on the surviving rows.
pub fn clean(dataset: Dataset, rules: &CleaningRuleSet) -> Result<(Dataset, CleanReport)> {
    let (schema, records) = dataset.into_parts();
    rules.validate(&schema)?;
    let mut report = CleanReport {
        rows_in: records.len(),
        ..CleanReport::default()
    };
    for p in &rules.predicates {
        report.removed.insert(p.name(), 0);
    }
    let mut kept = Vec::with_capacity(records.len());
    for r in records {
        let mut invalid = false;
        for p in &rules.predicates {
            if p.matches(&schema, &r) {
                *report.removed.get_mut(&p.name()).expect("inserted above") += 1;
                invalid = true;
            }
        }
        if !invalid {
            kept.push(r);
        }
    }
    if kept.is_empty() && report.rows_in > 0 {
        return Err(Error::Data(
            "cleaning removed every row; the input is degenerate".into(),
        ));
    }

    if let Some((lo, hi)) = rules.clip {
        for col in schema.model_feature_indices() {
            if !schema.fields()[col].kind.is_numeric() {
                continue;
            }
            let values: Vec<f64> = kept.iter().filter_map(|r| r.number(col)).collect();
            if values.is_empty() {
                continue;
            }
            let s = stats::sorted(&values);
            let (lower, upper) = (stats::quantile_sorted(&s, lo), stats::quantile_sorted(&s, hi));
            let mut clipped = 0;
            for r in &mut kept {
                if let Value::Number(v) = &mut r.values[col] {
                    let c = v.clamp(lower, upper);
                    if c != *v {
                        *v = c;
                        clipped += 1;
                    }
                }
            }
            report.clipped.insert(
                schema.fields()[col].name.clone(),
                ClipReport {
                    lower,
                    upper,
                    clipped,
                },
            );
        }
    }
    report.rows_out = kept.len();
    Ok((Dataset::from_parts(schema, kept), report))
}

fn normalize_text(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Lowercase and trim every categorical value.
pub fn standardize_categoricals(dataset: Dataset) -> Dataset {
    let (schema, mut records) = dataset.into_parts();
    let cols: Vec<usize> = (0..schema.len())
        .filter(|&i| schema.fields()[i].kind == FeatureKind::Categorical)
        .collect();
    for r in &mut records {
        for &c in &cols {
            if let Value::Text(s) = &mut r.values[c] {
                let n = normalize_text(s);
                if n.is_empty() {
                    r.values[c] = Value::Missing;
                } else {
                    *s = n;
                }
            }
        }
    }
    Dataset::from_parts(schema, records)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedFeature {
    pub name: String,
    pub numerator: String,
    pub denominator: String,
    /// Median of the computable ratios, used where the ratio is undefined.
    pub fallback: f64,
    pub imputed: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineerReport {
    pub features: Vec<DerivedFeature>,
}

fn ratio(record: &Record, num: usize, den: usize) -> Option<f64> {
    let (n, d) = (record.number(num)?, record.number(den)?);
    (d != 0.0).then(|| n / d).filter(|v| v.is_finite())
}

/// Append `Distance_per_Minute` and `Price_per_Mile`. Ratios with a zero or
/// missing operand are imputed with the median of the computable ones.
pub fn engineer_features(dataset: Dataset) -> Result<(Dataset, EngineerReport)> {
    let specs = [
        (DISTANCE_PER_MINUTE, synth::DISTANCE, synth::DURATION),
        (PRICE_PER_MILE, synth::PRICE, synth::DISTANCE),
    ];
    let (mut schema, mut records) = dataset.into_parts();
    let mut report = EngineerReport::default();
    for (name, num, den) in specs {
        let (ni, di) = (schema.numeric_index(num)?, schema.numeric_index(den)?);
        let ratios: Vec<Option<f64>> = records.iter().map(|r| ratio(r, ni, di)).collect();
        let valid: Vec<f64> = ratios.iter().flatten().copied().collect();
        let fallback = if valid.is_empty() {
            0.0
        } else {
            stats::median(&valid)
        };
        let imputed = ratios.iter().filter(|r| r.is_none()).count();
        if imputed > 0 {
            log::warn!("{name}: {imputed} undefined ratios imputed with median {fallback}");
        }
        schema = schema.with_field(Field::new(name, FeatureKind::numeric()))?;
        for (r, v) in records.iter_mut().zip(ratios) {
            r.values.push(Value::Number(v.unwrap_or(fallback)));
        }
        report.features.push(DerivedFeature {
            name: name.into(),
            numerator: num.into(),
            denominator: den.into(),
            fallback,
            imputed,
        });
    }
    Ok((Dataset::from_parts(schema, records), report))
}

/// Recompute previously engineered features in place, e.g. after drift has
/// altered one of their inputs. Undefined ratios take the fitted fallback.
pub fn recompute_derived(
    schema: &Schema,
    records: &mut [Record],
    report: &EngineerReport,
) -> Result<()> {
    for f in &report.features {
        let out = schema.numeric_index(&f.name)?;
        let (ni, di) = (
            schema.numeric_index(&f.numerator)?,
            schema.numeric_index(&f.denominator)?,
        );
        for r in records.iter_mut() {
            r.values[out] = Value::Number(ratio(r, ni, di).unwrap_or(f.fallback));
        }
    }
    Ok(())
}

const DAYS_IN_MONTH: [i64; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

/// Minutes since January 1, 00:00 of a non-leap reference year.
pub fn timestamp_minutes(month: i64, day: i64, hour: i64) -> Result<i64> {
    if !(1..=12).contains(&month) {
        return Err(Error::Data(format!("month {month} outside 1..=12")));
    }
    let days = DAYS_IN_MONTH[(month - 1) as usize];
    if !(1..=days).contains(&day) {
        return Err(Error::Data(format!("day {day} outside 1..={days} for month {month}")));
    }
    if !(0..=23).contains(&hour) {
        return Err(Error::Data(format!("hour {hour} outside 0..=23")));
    }
    let before: i64 = DAYS_IN_MONTH[..(month - 1) as usize].iter().sum();
    Ok(((before + day - 1) * 24 + hour) * 60)
}

fn integral(v: Option<f64>) -> Option<i64> {
    v.filter(|x| x.fract() == 0.0 && x.abs() < 1e9).map(|x| x as i64)
}

/// Set each record's timestamp from its month, day and hour fields.
pub fn build_timestamp(dataset: Dataset) -> Result<Dataset> {
    let (schema, mut records) = dataset.into_parts();
    let ts = schema.timestamp_fields();
    let cols = [
        schema.numeric_index(&ts.month)?,
        schema.numeric_index(&ts.day)?,
        schema.numeric_index(&ts.hour)?,
    ];
    for (i, r) in records.iter_mut().enumerate() {
        let parts: Option<Vec<i64>> = cols.iter().map(|&c| integral(r.number(c))).collect();
        let parts = parts.ok_or_else(|| {
            Error::Data(format!(
                "record {i}: month, day and hour must be present integers"
            ))
        })?;
        let t = timestamp_minutes(parts[0], parts[1], parts[2])
            .map_err(|e| Error::Data(format!("record {i}: {e}")))?;
        r.timestamp = Some(t);
    }
    Ok(Dataset::from_parts(schema, records))
}

/// Stratified split keeping the original record order on both sides.
///
/// The training side receives `round(n * train_fraction)` records, allocated
/// across classes by largest remainder so every class is within one record
/// of its exact share.
pub fn train_test_split(
    dataset: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let labels = dataset.labels();
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let n = dataset.len();
    let target = (n as f64 * train_fraction).round() as usize;
    let mut alloc: Vec<(usize, f64)> = by_class
        .values()
        .map(|idx| {
            let exact = idx.len() as f64 * train_fraction;
            (exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = alloc.iter().map(|a| a.0).sum();
    let mut order: Vec<usize> = (0..alloc.len()).collect();
    order.sort_by(|&a, &b| alloc[b].1.total_cmp(&alloc[a].1).then(a.cmp(&b)));
    for &c in order.iter().take(target.saturating_sub(assigned)) {
        alloc[c].0 += 1;
    }

    let mut rng = seed::rng(seed);
    let mut in_train = vec![false; n];
    for ((class, idx), (take, _)) in by_class.iter().zip(&alloc) {
        let mut idx = idx.clone();
        idx.shuffle(&mut rng);
        for &i in &idx[..*take] {
            in_train[i] = true;
        }
        if *take == 0 || *take == idx.len() {
            log::warn!("class `{class}` is absent from one side of the split");
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (r, t) in dataset.records().iter().zip(in_train) {
        if t {
            train.push(r.clone());
        } else {
            test.push(r.clone());
        }
    }
    let schema = dataset.schema().clone();
    Ok((
        Dataset::from_parts(schema.clone(), train),
        Dataset::from_parts(schema, test),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "encoding", rename_all = "snake_case")]
pub enum Encoding {
    /// Raw value; missing values take the training median.
    Numeric { median: f64 },
    /// Code = position in `codes` (sorted); unseen values map to
    /// `codes.len()`; missing values take the training mode.
    Ordinal { codes: Vec<String>, mode: String },
}

impl Encoding {
    fn encode(&self, v: &Value) -> f64 {
        match self {
            Encoding::Numeric { median } => v.as_f64().unwrap_or(*median),
            Encoding::Ordinal { codes, mode } => {
                let s = v.as_str().unwrap_or(mode);
                codes
                    .binary_search_by(|c| c.as_str().cmp(s))
                    .unwrap_or(codes.len()) as f64
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureTransform {
    pub name: String,
    pub encoding: Encoding,
    pub mean: f64,
    pub std: f64,
}

/// Encoding, imputation and z-score parameters fitted on training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedTransform {
    /// Retained features in model-column order.
    pub features: Vec<FeatureTransform>,
    /// Zero-variance features left out of the model matrix.
    pub dropped: Vec<String>,
    /// Sorted class labels; `y` holds positions in this list.
    pub classes: Vec<String>,
}

impl FittedTransform {
    pub fn width(&self) -> usize {
        self.features.len()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn feature(&self, name: &str) -> Option<&FeatureTransform> {
        self.features.iter().find(|f| f.name == name)
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    /// Imputation value of every retained feature, in raw units (category
    /// name for ordinal features).
    pub fn imputation_values(&self) -> BTreeMap<String, Value> {
        self.features
            .iter()
            .map(|f| {
                let v = match &f.encoding {
                    Encoding::Numeric { median } => Value::Number(*median),
                    Encoding::Ordinal { mode, .. } => Value::Text(mode.clone()),
                };
                (f.name.clone(), v)
            })
            .collect()
    }

    /// Encode and scale records into a model matrix, plus class indices.
    pub fn apply_records(&self, schema: &Schema, records: &[Record]) -> Result<(Matrix, Vec<usize>)> {
        let cols: Vec<usize> = self
            .features
            .iter()
            .map(|f| {
                schema
                    .index_of(&f.name)
                    .ok_or_else(|| Error::UnknownFeature(f.name.clone()))
            })
            .collect::<Result<_>>()?;
        let li = schema.label_index();
        let mut data = Vec::with_capacity(records.len() * cols.len());
        let mut y = Vec::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            for (f, &c) in self.features.iter().zip(&cols) {
                data.push((f.encoding.encode(&r.values[c]) - f.mean) / f.std);
            }
            let label = r.values[li].as_str().unwrap_or_default();
            y.push(self.class_index(label).ok_or_else(|| {
                Error::Data(format!("record {i}: unknown label `{label}`"))
            })?);
        }
        Ok((Matrix::from_vec(records.len(), cols.len(), data)?, y))
    }
}

/// Fit encodings, imputation values and z-score scales on the training set.
pub fn fit_transform(train: &Dataset) -> Result<FittedTransform> {
    if train.is_empty() {
        return Err(Error::Data("cannot fit a transform on an empty dataset".into()));
    }
    let schema = train.schema();
    let mut features = Vec::new();
    let mut dropped = Vec::new();
    for col in schema.model_feature_indices() {
        let field = &schema.fields()[col];
        let values = train.records().iter().map(|r| &r.values[col]);
        let encoding = if field.kind.is_numeric() {
            let present: Vec<f64> = values.filter_map(Value::as_f64).collect();
            let median = if present.is_empty() {
                0.0
            } else {
                stats::median(&present)
            };
            Encoding::Numeric { median }
        } else {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for v in values.filter_map(Value::as_str) {
                *counts.entry(v).or_default() += 1;
            }
            // BTreeMap iteration is sorted, so ties go to the smallest value.
            let mode = counts
                .iter()
                .fold(None::<(&str, usize)>, |best, (&v, &c)| match best {
                    Some((_, bc)) if bc >= c => best,
                    _ => Some((v, c)),
                })
                .map(|(v, _)| v.to_string())
                .unwrap_or_default();
            let mut codes: BTreeSet<String> = counts.keys().map(|s| s.to_string()).collect();
            codes.insert(mode.clone());
            Encoding::Ordinal {
                codes: codes.into_iter().collect(),
                mode,
            }
        };
        let encoded: Vec<f64> = train
            .records()
            .iter()
            .map(|r| encoding.encode(&r.values[col]))
            .collect();
        let (mean, std) = (stats::mean(&encoded), stats::std_dev(&encoded));
        if !std.is_finite() || std <= 1e-12 * mean.abs().max(1.0) {
            log::warn!("dropping zero-variance feature `{}`", field.name);
            dropped.push(field.name.clone());
            continue;
        }
        features.push(FeatureTransform {
            name: field.name.clone(),
            encoding,
            mean,
            std,
        });
    }
    if features.is_empty() {
        return Err(Error::Data("no feature has nonzero variance".into()));
    }
    let classes: BTreeSet<String> = train.labels().into_iter().map(String::from).collect();
    Ok(FittedTransform {
        features,
        dropped,
        classes: classes.into_iter().collect(),
    })
}

/// Encode and scale a dataset with a fitted transform.
pub fn apply_transform(t: &FittedTransform, dataset: &Dataset) -> Result<(Matrix, Vec<usize>)> {
    t.apply_records(dataset.schema(), dataset.records())
}

/// Resampled training data. `parents[i]` is `None` for original rows and the
/// (base, neighbor) input rows for synthetic ones.
#[derive(Clone, Debug)]
pub struct SmoteOutput {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub parents: Vec<Option<(usize, usize)>>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// The `k` nearest members of `pool` to `pool[at]`, excluding itself; ties
/// go to the earlier row.
fn nearest(x: &Matrix, pool: &[usize], at: usize, k: usize) -> Vec<usize> {
    let me = x.row(pool[at]);
    let mut d: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != at)
        .map(|(_, &r)| (squared_distance(me, x.row(r)), r))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if d.len() > k {
        d.select_nth_unstable_by(k - 1, cmp);
        d.truncate(k);
    }
    d.sort_by(cmp);
    d.into_iter().map(|(_, r)| r).collect()
}

/// SMOTE with provenance of each synthetic row.
pub fn smote_traced(x: &Matrix, y: &[usize], k_neighbors: usize, seed: u64) -> Result<SmoteOutput> {
    if x.rows() != y.len() {
        return Err(Error::Shape(format!(
            "{} rows but {} labels",
            x.rows(),
            y.len()
        )));
    }
    if !x.all_finite() {
        return Err(Error::Data("SMOTE input contains non-finite values".into()));
    }
    if k_neighbors == 0 {
        return Err(Error::Config("k_neighbors must be positive".into()));
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in y.iter().enumerate() {
        members.entry(c).or_default().push(i);
    }
    let target = members.values().map(Vec::len).max().unwrap_or(0);
    if let Some((c, _)) = members.iter().find(|(_, m)| m.len() == 1 && target > 1) {
        return Err(Error::Data(format!(
            "class {c} has a single sample; SMOTE needs at least two"
        )));
    }

    let mut out = x.clone();
    let mut y_out = y.to_vec();
    let mut parents = vec![None; y.len()];
    let mut rng = seed::rng(seed);
    let mut row = vec![0.0; x.cols()];
    for (&class, pool) in &members {
        let need = target - pool.len();
        if need == 0 {
            continue;
        }
        let k = if k_neighbors > pool.len() - 1 {
            log::warn!(
                "class {class}: k_neighbors {k_neighbors} clamped to {}",
                pool.len() - 1
            );
            pool.len() - 1
        } else {
            k_neighbors
        };
        let mut cache: Vec<Option<Vec<usize>>> = vec![None; pool.len()];
        for _ in 0..need {
            let at = rng.random_range(0..pool.len());
            let nn = cache[at].get_or_insert_with(|| nearest(x, pool, at, k));
            let neighbor = nn[rng.random_range(0..nn.len())];
            let u: f64 = rng.random();
            let (a, b) = (x.row(pool[at]), x.row(neighbor));
            for ((o, &av), &bv) in row.iter_mut().zip(a).zip(b) {
                *o = av + u * (bv - av);
            }
            out.push_row(&row)?;
            y_out.push(class);
            parents.push(Some((pool[at], neighbor)));
        }
    }
    Ok(SmoteOutput {
        x: out,
        y: y_out,
        parents,
    })
}

/// Upsample every minority class to the majority count by interpolating
/// between a random member and one of its `k_neighbors` nearest same-class
/// neighbors.
pub fn smote_resample(
    x: &Matrix,
    y: &[usize],
    k_neighbors: usize,
    seed: u64,
) -> Result<(Matrix, Vec<usize>)> {
    let o = smote_traced(x, y, k_neighbors, seed)?;
    Ok((o.x, o.y))
}

/// Everything preprocessing decided, for the JSON report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub cleaning: CleanReport,
    pub engineered: EngineerReport,
    pub dropped_features: Vec<String>,
    pub imputation: BTreeMap<String, Value>,
}
