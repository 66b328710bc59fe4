//! Schema, record, dataset and batching primitives.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        unit: Option<String>,
    },
    Categorical,
    Label,
}

impl FeatureKind {
    pub fn numeric() -> Self {
        FeatureKind::Numeric { unit: None }
    }

    pub fn numeric_in(unit: &str) -> Self {
        FeatureKind::Numeric {
            unit: Some(unit.to_string()),
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, FeatureKind::Numeric { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Field {
    pub name: String,
    pub kind: FeatureKind,
}

impl Field {
    pub fn new(name: &str, kind: FeatureKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
        }
    }
}

/// Names of the departure month, day and hour fields.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimestampFields {
    pub month: String,
    pub day: String,
    pub hour: String,
}

impl Default for TimestampFields {
    fn default() -> Self {
        Self {
            month: "Month".into(),
            day: "Day".into(),
            hour: "Hour".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaDef", into = "SchemaDef")]
pub struct Schema {
    fields: Vec<Field>,
    drift_target: String,
    timestamp: TimestampFields,
    label: usize,
}

#[derive(Serialize, Deserialize)]
struct SchemaDef {
    fields: Vec<Field>,
    drift_target: String,
    timestamp: TimestampFields,
}

impl TryFrom<SchemaDef> for Schema {
    type Error = Error;

    fn try_from(d: SchemaDef) -> Result<Self> {
        Schema::new(d.fields, &d.drift_target, d.timestamp)
    }
}

impl From<Schema> for SchemaDef {
    fn from(s: Schema) -> Self {
        SchemaDef {
            fields: s.fields,
            drift_target: s.drift_target,
            timestamp: s.timestamp,
        }
    }
}

impl Schema {
    pub fn new(fields: Vec<Field>, drift_target: &str, timestamp: TimestampFields) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &fields {
            if f.name.is_empty() {
                return Err(Error::Schema("empty field name".into()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate field `{}`", f.name)));
            }
        }
        let labels: Vec<usize> = fields
            .iter()
            .enumerate()
            .filter(|(_, f)| f.kind == FeatureKind::Label)
            .map(|(i, _)| i)
            .collect();
        if labels.len() != 1 {
            return Err(Error::Schema(format!(
                "exactly one label field required, found {}",
                labels.len()
            )));
        }
        let schema = Self {
            label: labels[0],
            fields,
            drift_target: drift_target.to_string(),
            timestamp,
        };
        schema.numeric_index(&schema.drift_target)?;
        for name in schema.timestamp_field_names() {
            schema.numeric_index(name)?;
        }
        Ok(schema)
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    /// Index of `name`, which must be a numeric field.
    pub fn numeric_index(&self, name: &str) -> Result<usize> {
        let i = self
            .index_of(name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))?;
        if !self.fields[i].kind.is_numeric() {
            return Err(Error::Schema(format!("field `{name}` is not numeric")));
        }
        Ok(i)
    }

    pub fn label_index(&self) -> usize {
        self.label
    }

    pub fn label_name(&self) -> &str {
        &self.fields[self.label].name
    }

    pub fn drift_target(&self) -> &str {
        &self.drift_target
    }

    pub fn timestamp_fields(&self) -> &TimestampFields {
        &self.timestamp
    }

    fn timestamp_field_names(&self) -> [&str; 3] {
        [&self.timestamp.month, &self.timestamp.day, &self.timestamp.hour]
    }

    pub fn is_timestamp_field(&self, i: usize) -> bool {
        self.timestamp_field_names().contains(&self.fields[i].name.as_str())
    }

    /// Field indices that feed models: everything except the label and the
    /// timestamp components.
    pub fn model_feature_indices(&self) -> Vec<usize> {
        (0..self.fields.len())
            .filter(|&i| i != self.label && !self.is_timestamp_field(i))
            .collect()
    }

    /// Copy of the schema with `field` appended.
    pub fn with_field(&self, field: Field) -> Result<Schema> {
        let mut fields = self.fields.clone();
        fields.push(field);
        Schema::new(fields, &self.drift_target, self.timestamp.clone())
    }

    pub fn header(&self) -> Vec<&str> {
        self.fields.iter().map(|f| f.name.as_str()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Text(String),
    Missing,
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Number(v) => write!(f, "{v}"),
            Value::Text(s) => f.write_str(s),
            Value::Missing => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub values: Vec<Value>,
    /// Minutes since the start of the reference year, once preprocessing has
    /// built it.
    pub timestamp: Option<i64>,
}

impl Record {
    pub fn new(values: Vec<Value>) -> Self {
        Self {
            values,
            timestamp: None,
        }
    }

    pub fn number(&self, i: usize) -> Option<f64> {
        self.values.get(i).and_then(Value::as_f64)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Arity,
    Type,
    NonFinite,
    MissingLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub field: Option<String>,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ViolationKind::Arity => "arity",
            ViolationKind::Type => "type",
            ViolationKind::NonFinite => "non-finite",
            ViolationKind::MissingLabel => "missing label",
        };
        match &self.field {
            Some(name) => write!(f, "{kind} ({name})"),
            None => f.write_str(kind),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Ok,
    Invalid(Vec<Violation>),
}

impl Verdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, Verdict::Ok)
    }
}

/// Check arity and per-field value types. Missing values are allowed
/// everywhere except the label; preprocessing imputes them.
pub fn validate_record(schema: &Schema, record: &Record) -> Verdict {
    if record.values.len() != schema.len() {
        return Verdict::Invalid(vec![Violation {
            kind: ViolationKind::Arity,
            field: None,
        }]);
    }
    let mut out = Vec::new();
    for (field, value) in schema.fields().iter().zip(&record.values) {
        let kind = match (&field.kind, value) {
            (FeatureKind::Label, Value::Missing) => Some(ViolationKind::MissingLabel),
            (_, Value::Missing) => None,
            (FeatureKind::Numeric { .. }, Value::Number(v)) if !v.is_finite() => {
                Some(ViolationKind::NonFinite)
            }
            (FeatureKind::Numeric { .. }, Value::Number(_)) => None,
            (FeatureKind::Categorical | FeatureKind::Label, Value::Text(_)) => None,
            _ => Some(ViolationKind::Type),
        };
        if let Some(kind) = kind {
            out.push(Violation {
                kind,
                field: Some(field.name.clone()),
            });
        }
    }
    if out.is_empty() {
        Verdict::Ok
    } else {
        Verdict::Invalid(out)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: Schema,
    records: Vec<Record>,
}

impl Dataset {
    pub fn new(schema: Schema, records: Vec<Record>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if let Verdict::Invalid(v) = validate_record(&schema, r) {
                let list: Vec<String> = v.iter().map(|v| v.to_string()).collect();
                return Err(Error::Data(format!("record {i}: {}", list.join(", "))));
            }
        }
        Ok(Self { schema, records })
    }

    /// For transformations that provably keep records schema-conformant.
    pub(crate) fn from_parts(schema: Schema, records: Vec<Record>) -> Self {
        Self { schema, records }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_parts(self) -> (Schema, Vec<Record>) {
        (self.schema, self.records)
    }

    pub fn labels(&self) -> Vec<&str> {
        let li = self.schema.label_index();
        self.records
            .iter()
            .map(|r| r.values[li].as_str().unwrap_or(""))
            .collect()
    }

    /// Numeric column by name; missing cells are skipped.
    pub fn numeric_column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.schema.numeric_index(name)?;
        Ok(self.records.iter().filter_map(|r| r.number(i)).collect())
    }
}

/// A contiguous, chronologically ordered slice of the stream.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// 1-based position in the stream.
    pub index: usize,
    pub records: Vec<Record>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Stable sort by timestamp.
pub fn sort_by_timestamp(dataset: Dataset) -> Result<Dataset> {
    if let Some(i) = dataset.records.iter().position(|r| r.timestamp.is_none()) {
        return Err(Error::MissingTimestamp { record: i });
    }
    let (schema, mut records) = dataset.into_parts();
    records.sort_by_key(|r| r.timestamp);
    Ok(Dataset::from_parts(schema, records))
}

/// Split a sorted dataset into `k` contiguous batches whose sizes differ by at
/// most one; the earliest batches absorb the remainder.
pub fn partition_batches(dataset: &Dataset, k: usize) -> Result<Vec<Batch>> {
    let n = dataset.len();
    if k == 0 {
        return Err(Error::Config("batch count must be positive".into()));
    }
    if k > n {
        return Err(Error::Config(format!(
            "cannot split {n} records into {k} batches"
        )));
    }
    let mut prev = i64::MIN;
    for (i, r) in dataset.records.iter().enumerate() {
        let ts = r.timestamp.ok_or(Error::MissingTimestamp { record: i })?;
        if ts < prev {
            return Err(Error::Data("dataset is not sorted by timestamp".into()));
        }
        prev = ts;
    }
    let base = n / k;
    let extra = n % k;
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for b in 0..k {
        let size = base + usize::from(b < extra);
        out.push(Batch {
            index: b + 1,
            records: dataset.records[start..start + size].to_vec(),
        });
        start += size;
    }
    Ok(out)
}

/// Read a CSV whose header matches the schema field names exactly.
pub fn read_csv<R: Read>(schema: &Schema, reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != schema.header() {
        return Err(Error::Schema(format!(
            "CSV header {:?} does not match schema {:?}",
            header,
            schema.header()
        )));
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let mut values = Vec::with_capacity(schema.len());
        for (field, cell) in schema.fields().iter().zip(row.iter()) {
            let value = if cell.is_empty() {
                Value::Missing
            } else if field.kind.is_numeric() {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    Error::Data(format!(
                        "line {line}: field `{}`: `{cell}` is not a number",
                        field.name
                    ))
                })?;
                Value::Number(v)
            } else {
                Value::Text(cell.to_string())
            };
            values.push(value);
        }
        let record = Record::new(values);
        if let Verdict::Invalid(v) = validate_record(schema, &record) {
            let list: Vec<String> = v.iter().map(|v| v.to_string()).collect();
            return Err(Error::Data(format!("line {line}: {}", list.join(", "))));
        }
        records.push(record);
    }
    Ok(Dataset::from_parts(schema.clone(), records))
}

pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(dataset.schema.header())?;
    for r in &dataset.records {
        wtr.write_record(r.values.iter().map(|v| v.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}
