//! Seeded airline-style dataset generator and drift injectors.
//!
//! The generator stands in for a flight-status dataset: each row is a flight
//! with route, check-in channel, passenger age, distance, duration, departure
//! delay, ticket price and a three-way status label. The label is drawn first
//! from the class priors; delay and the fare premium (price above the route's
//! expected fare) are then drawn conditionally on it, which is what makes the
//! label learnable. Price is affine in distance plus that premium.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Batch, Dataset, FeatureKind, Field, Record, Schema, TimestampFields, Value};
use crate::error::{Error, Result};
use crate::seed;

pub const MONTH: &str = "Month";
pub const DAY: &str = "Day";
pub const HOUR: &str = "Hour";
pub const DEPARTURE: &str = "Departure_Airport";
pub const ARRIVAL: &str = "Arrival_Airport";
pub const CHECKIN: &str = "Checkin_Type";
pub const AGE: &str = "Passenger_Age";
pub const DISTANCE: &str = "Distance_Miles";
pub const DURATION: &str = "Duration_Min";
pub const DELAY: &str = "Delay_Min";
pub const PRICE: &str = "Price_USD";
pub const STATUS: &str = "Flight_Status";

pub const CLASSES: [&str; 3] = ["on_time", "delayed", "cancelled"];

/// Schema of the generated flight records.
pub fn airline_schema() -> Schema {
    Schema::new(
        vec![
            Field::new(MONTH, FeatureKind::numeric()),
            Field::new(DAY, FeatureKind::numeric()),
            Field::new(HOUR, FeatureKind::numeric()),
            Field::new(DEPARTURE, FeatureKind::Categorical),
            Field::new(ARRIVAL, FeatureKind::Categorical),
            Field::new(CHECKIN, FeatureKind::Categorical),
            Field::new(AGE, FeatureKind::numeric_in("years")),
            Field::new(DISTANCE, FeatureKind::numeric_in("mi")),
            Field::new(DURATION, FeatureKind::numeric_in("min")),
            Field::new(DELAY, FeatureKind::numeric_in("min")),
            Field::new(PRICE, FeatureKind::numeric_in("usd")),
            Field::new(STATUS, FeatureKind::Label),
        ],
        PRICE,
        TimestampFields::default(),
    )
    .expect("built-in schema is valid")
}

/// Per-class shape of the delay and fare-premium distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub prior: f64,
    /// Delay is `delay_offset + Exp(mean = delay_mean)` minutes.
    pub delay_offset: f64,
    pub delay_mean: f64,
    /// Mean fare premium in USD over the route's expected fare.
    pub premium_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceModel {
    pub base: f64,
    pub per_mile: f64,
    pub premium_sd: f64,
    pub floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Airport {
    pub code: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub rows: usize,
    /// Profiles for `on_time`, `delayed`, `cancelled`, in that order.
    pub classes: [ClassProfile; 3],
    /// Log-scale jitter applied to great-circle route distance.
    pub distance_log_sd: f64,
    /// Cruise speed range in miles per minute.
    pub speed_range: (f64, f64),
    pub price: PriceModel,
    pub airports: Vec<Airport>,
    pub checkin_types: Vec<(String, f64)>,
    /// Share of categorical cells written with stray case or whitespace.
    pub messy_fraction: f64,
    /// Share of age and check-in cells left empty.
    pub missing_fraction: f64,
    /// Share of rows whose arrival airport equals the departure airport.
    pub invalid_route_fraction: f64,
    pub seed: u64,
}

fn airport(code: &str, lat: f64, lon: f64) -> Airport {
    Airport {
        code: code.into(),
        lat,
        lon,
    }
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            rows: 20_000,
            classes: [
                ClassProfile {
                    prior: 0.70,
                    delay_offset: 0.0,
                    delay_mean: 6.0,
                    premium_mean: 15.0,
                },
                ClassProfile {
                    prior: 0.25,
                    delay_offset: 12.0,
                    delay_mean: 40.0,
                    premium_mean: -20.0,
                },
                ClassProfile {
                    prior: 0.05,
                    delay_offset: 0.0,
                    delay_mean: 30.0,
                    premium_mean: -55.0,
                },
            ],
            distance_log_sd: 0.05,
            speed_range: (7.0, 9.0),
            price: PriceModel {
                base: 45.0,
                per_mile: 0.11,
                premium_sd: 25.0,
                floor: 25.0,
            },
            airports: vec![
                airport("ATL", 33.64, -84.43),
                airport("BOS", 42.36, -71.01),
                airport("DEN", 39.86, -104.67),
                airport("DFW", 32.90, -97.04),
                airport("JFK", 40.64, -73.78),
                airport("LAX", 33.94, -118.41),
                airport("MIA", 25.79, -80.29),
                airport("ORD", 41.97, -87.91),
                airport("PHX", 33.43, -112.01),
                airport("SEA", 47.45, -122.31),
                airport("SFO", 37.62, -122.38),
                airport("MSP", 44.88, -93.22),
            ],
            checkin_types: vec![
                ("online".into(), 0.45),
                ("mobile".into(), 0.25),
                ("kiosk".into(), 0.15),
                ("counter".into(), 0.15),
            ],
            messy_fraction: 0.05,
            missing_fraction: 0.01,
            invalid_route_fraction: 0.005,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 {
            return Err(Error::Config("rows must be positive".into()));
        }
        let total: f64 = self.classes.iter().map(|c| c.prior).sum();
        if (total - 1.0).abs() > 1e-9 || self.classes.iter().any(|c| c.prior < 0.0) {
            return Err(Error::Config(format!(
                "class priors must be nonnegative and sum to 1, got {total}"
            )));
        }
        if self.airports.len() < 2 {
            return Err(Error::Config("need at least two airports".into()));
        }
        if self.checkin_types.is_empty() || self.checkin_types.iter().any(|(_, w)| *w < 0.0) {
            return Err(Error::Config("check-in weights must be nonnegative".into()));
        }
        let (lo, hi) = self.speed_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Config("invalid speed range".into()));
        }
        for (name, f) in [
            ("messy_fraction", self.messy_fraction),
            ("missing_fraction", self.missing_fraction),
            ("invalid_route_fraction", self.invalid_route_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.classes.iter().any(|c| c.delay_mean <= 0.0) || self.price.premium_sd < 0.0 {
            return Err(Error::Config("distribution scales must be positive".into()));
        }
        Ok(())
    }
}

const DAYS_IN_MONTH: [u32; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

fn great_circle_miles(a: &Airport, b: &Airport) -> f64 {
    const EARTH_RADIUS_MI: f64 = 3958.8;
    let (la1, lo1) = (a.lat.to_radians(), a.lon.to_radians());
    let (la2, lo2) = (b.lat.to_radians(), b.lon.to_radians());
    let h = ((la2 - la1) / 2.0).sin().powi(2)
        + la1.cos() * la2.cos() * ((lo2 - lo1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_MI * h.sqrt().asin()
}

fn pick_weighted<R: Rng>(rng: &mut R, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
            if u < w {
                return i;
            }
        }
        u -= w;
    }
    last
}

fn messy<R: Rng>(rng: &mut R, s: &str, fraction: f64) -> String {
    if rng.random::<f64>() >= fraction {
        return s.to_string();
    }
    match rng.random_range(0..3) {
        0 => s.to_uppercase(),
        1 => format!(" {s} "),
        _ => {
            let mut c = s.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect::<String>() + " ",
                None => String::new(),
            }
        }
    }
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let p = 10f64.powi(decimals);
    (v * p).round() / p
}

/// Generate a dataset; identical configs yield identical datasets.
pub fn generate_dataset(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = seed::rng(config.seed);
    let premium = Normal::new(0.0, config.price.premium_sd)
        .map_err(|e| Error::Config(e.to_string()))?;
    let jitter =
        Normal::new(0.0, config.distance_log_sd).map_err(|e| Error::Config(e.to_string()))?;
    let duration_noise = Normal::<f64>::new(0.0, 3.0).expect("constant sd");
    let age_dist = Normal::<f64>::new(41.0, 13.0).expect("constant sd");
    let delay_dists: Vec<Exp<f64>> = config
        .classes
        .iter()
        .map(|c| Exp::new(1.0 / c.delay_mean).map_err(|e| Error::Config(e.to_string())))
        .collect::<Result<_>>()?;

    let n_airports = config.airports.len();
    let mut records = Vec::with_capacity(config.rows);
    for _ in 0..config.rows {
        let class = pick_weighted(&mut rng, config.classes.iter().map(|c| c.prior));
        let profile = &config.classes[class];

        let month = rng.random_range(1..=12u32);
        let day = rng.random_range(1..=DAYS_IN_MONTH[month as usize - 1]);
        let hour = rng.random_range(5..=23u32);

        let dep = rng.random_range(0..n_airports);
        let arr = if rng.random::<f64>() < config.invalid_route_fraction {
            dep
        } else {
            (dep + rng.random_range(1..n_airports)) % n_airports
        };
        let route = great_circle_miles(&config.airports[dep], &config.airports[arr]);
        let distance = round_to(route * jitter.sample(&mut rng).exp(), 1);

        let (lo, hi) = config.speed_range;
        let speed = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let duration = (20.0 + distance / speed + duration_noise.sample(&mut rng))
            .round()
            .max(15.0);

        let delay = (profile.delay_offset + delay_dists[class].sample(&mut rng)).round();
        let fare = config.price.base
            + config.price.per_mile * distance
            + profile.premium_mean
            + premium.sample(&mut rng);
        let price = round_to(fare.max(config.price.floor), 2);
        let age = age_dist.sample(&mut rng).clamp(18.0, 85.0).round();

        let checkin = pick_weighted(&mut rng, config.checkin_types.iter().map(|(_, w)| *w));
        let checkin = messy(&mut rng, &config.checkin_types[checkin].0, config.messy_fraction);
        let checkin = if rng.random::<f64>() < config.missing_fraction {
            Value::Missing
        } else {
            Value::Text(checkin)
        };
        let age = if rng.random::<f64>() < config.missing_fraction {
            Value::Missing
        } else {
            Value::Number(age)
        };

        records.push(Record::new(vec![
            Value::Number(f64::from(month)),
            Value::Number(f64::from(day)),
            Value::Number(f64::from(hour)),
            Value::Text(config.airports[dep].code.clone()),
            Value::Text(config.airports[arr].code.clone()),
            checkin,
            age,
            Value::Number(distance),
            Value::Number(duration),
            Value::Number(delay),
            Value::Number(price),
            Value::Text(CLASSES[class].to_string()),
        ]));
    }
    Ok(Dataset::from_parts(airline_schema(), records))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    None,
    /// Shuffle the target column within each affected batch.
    Permutation,
    /// Add `magnitude` training standard deviations to the target column.
    Shift,
}

impl std::str::FromStr for DriftMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(DriftMode::None),
            "permutation" => Ok(DriftMode::Permutation),
            "shift" => Ok(DriftMode::Shift),
            other => Err(Error::Config(format!(
                "unknown drift mode `{other}` (expected none, permutation or shift)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriftSpec {
    pub mode: DriftMode,
    pub feature: String,
    /// 1-based indices of affected batches.
    pub batches: Vec<usize>,
    pub magnitude: f64,
    pub seed: u64,
}

impl Default for DriftSpec {
    fn default() -> Self {
        Self {
            mode: DriftMode::Permutation,
            feature: PRICE.into(),
            batches: (6..=10).collect(),
            magnitude: 2.0,
            seed: 0,
        }
    }
}

impl DriftSpec {
    pub fn none() -> Self {
        Self {
            mode: DriftMode::None,
            batches: Vec::new(),
            ..Self::default()
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if let Some(&b) = self.batches.iter().find(|&&b| b == 0 || b > k) {
            return Err(Error::Config(format!(
                "drift batch {b} outside 1..={k}"
            )));
        }
        if !self.magnitude.is_finite() {
            return Err(Error::Config("shift magnitude must be finite".into()));
        }
        Ok(())
    }

    /// Batches that actually receive drift.
    pub fn affected(&self) -> Vec<usize> {
        match self.mode {
            DriftMode::None => Vec::new(),
            _ => {
                let mut b = self.batches.clone();
                b.sort_unstable();
                b.dedup();
                b
            }
        }
    }
}

/// Shuffle one numeric column within the batch; every other cell is untouched.
pub fn inject_permutation_drift(
    batch: &Batch,
    schema: &Schema,
    feature: &str,
    seed: u64,
) -> Result<Batch> {
    let col = schema.numeric_index(feature)?;
    let mut values: Vec<Value> = batch.records.iter().map(|r| r.values[col].clone()).collect();
    values.shuffle(&mut seed::rng(seed));
    let mut out = batch.clone();
    for (r, v) in out.records.iter_mut().zip(values) {
        r.values[col] = v;
    }
    Ok(out)
}

/// Add `magnitude * std` to every present value of a numeric column, where
/// `std` is the training-standardization scale of that feature.
pub fn inject_shift_drift(
    batch: &Batch,
    schema: &Schema,
    feature: &str,
    magnitude: f64,
    std: f64,
) -> Result<Batch> {
    let col = schema.numeric_index(feature)?;
    if batch.is_empty() {
        return Err(Error::Data(format!("batch {} is empty", batch.index)));
    }
    let delta = magnitude * std;
    let mut out = batch.clone();
    for r in &mut out.records {
        if let Value::Number(v) = &mut r.values[col] {
            *v += delta;
        }
    }
    Ok(out)
}

/// Apply `spec` to the affected batches in place. Each batch shuffles with
/// its own seed derived from the spec seed and the batch index.
pub fn apply_drift(
    batches: &mut [Batch],
    schema: &Schema,
    spec: &DriftSpec,
    feature_std: f64,
) -> Result<()> {
    spec.validate(batches.len())?;
    let affected = spec.affected();
    for batch in batches.iter_mut().filter(|b| affected.contains(&b.index)) {
        *batch = match spec.mode {
            DriftMode::None => continue,
            DriftMode::Permutation => inject_permutation_drift(
                batch,
                schema,
                &spec.feature,
                seed::derive_indexed(spec.seed, batch.index as u64),
            )?,
            DriftMode::Shift => {
                inject_shift_drift(batch, schema, &spec.feature, spec.magnitude, feature_std)?
            }
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::pearson;

    fn small(rows: usize, seed: u64) -> Dataset {
        generate_dataset(&GeneratorConfig {
            rows,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    fn as_batch(d: &Dataset) -> Batch {
        Batch {
            index: 1,
            records: d.records().to_vec(),
        }
    }

    fn column(b: &Batch, col: usize) -> Vec<f64> {
        b.records.iter().map(|r| r.number(col).unwrap()).collect()
    }

    #[test]
    fn deterministic_given_seed() {
        assert_eq!(small(500, 9), small(500, 9));
        assert_ne!(small(500, 9), small(500, 10));
    }

    #[test]
    fn zero_rows_rejected() {
        let err = generate_dataset(&GeneratorConfig {
            rows: 0,
            ..Default::default()
        })
        .unwrap_err();
        assert!(err.to_string().contains("rows must be positive"));
    }

    #[test]
    fn degenerate_priors() {
        let mut cfg = GeneratorConfig {
            rows: 300,
            ..Default::default()
        };
        cfg.classes[0].prior = 1.0;
        cfg.classes[1].prior = 0.0;
        cfg.classes[2].prior = 0.0;
        let d = generate_dataset(&cfg).unwrap();
        assert!(d.labels().iter().all(|&l| l == "on_time"));

        cfg.classes[0].prior = 0.9;
        assert!(generate_dataset(&cfg).is_err());
    }

    #[test]
    fn class_counts_track_priors() {
        let d = small(20_000, 1);
        let labels = d.labels();
        for (name, prior) in CLASSES.iter().zip([0.70, 0.25, 0.05]) {
            let frac = labels.iter().filter(|&&l| l == *name).count() as f64 / 20_000.0;
            assert!((frac - prior).abs() < 0.02, "{name}: {frac}");
        }
    }

    #[test]
    fn price_tracks_distance() {
        let d = small(5_000, 2);
        let r = pearson(
            &d.numeric_column(DISTANCE).unwrap(),
            &d.numeric_column(PRICE).unwrap(),
        );
        assert!(r > 0.5, "r = {r}");
    }

    #[test]
    fn permutation_preserves_multiset_and_other_columns() {
        let d = small(2_000, 3);
        let s = d.schema();
        let price = s.index_of(PRICE).unwrap();
        let dist = s.index_of(DISTANCE).unwrap();
        let batch = as_batch(&d);
        let drifted = inject_permutation_drift(&batch, s, PRICE, 11).unwrap();

        let mut before = column(&batch, price);
        let mut after = column(&drifted, price);
        assert_ne!(before, after);
        before.sort_by(f64::total_cmp);
        after.sort_by(f64::total_cmp);
        assert_eq!(before, after);

        for (a, b) in batch.records.iter().zip(&drifted.records) {
            for c in (0..s.len()).filter(|&c| c != price) {
                assert_eq!(a.values[c], b.values[c]);
            }
        }

        let r_before = pearson(&column(&batch, dist), &column(&batch, price));
        let r_after = pearson(&column(&drifted, dist), &column(&drifted, price));
        assert!(r_before > 0.5);
        assert!(r_after.abs() < 0.1, "r after shuffle = {r_after}");

        assert_eq!(
            inject_permutation_drift(&batch, s, PRICE, 11).unwrap(),
            drifted
        );
        assert!(inject_permutation_drift(&batch, s, "Nope", 1).is_err());
    }

    #[test]
    fn permutation_of_single_record_is_identity() {
        let d = small(1, 4);
        let b = as_batch(&d);
        assert_eq!(inject_permutation_drift(&b, d.schema(), PRICE, 5).unwrap(), b);
    }

    #[test]
    fn shift_examples() {
        let d = small(400, 5);
        let s = d.schema();
        let price = s.index_of(PRICE).unwrap();
        let b = as_batch(&d);
        assert_eq!(inject_shift_drift(&b, s, PRICE, 0.0, 70.0).unwrap(), b);

        let m0 = crate::stats::mean(&column(&b, price));
        let up = inject_shift_drift(&b, s, PRICE, 2.0, 1.0).unwrap();
        let down = inject_shift_drift(&b, s, PRICE, -2.0, 1.0).unwrap();
        assert!((crate::stats::mean(&column(&up, price)) - m0 - 2.0).abs() < 1e-9);
        assert!((crate::stats::mean(&column(&down, price)) - m0 + 2.0).abs() < 1e-9);

        let empty = Batch {
            index: 3,
            records: vec![],
        };
        assert!(inject_shift_drift(&empty, s, PRICE, 1.0, 1.0).is_err());
        assert!(inject_shift_drift(&b, s, CHECKIN, 1.0, 1.0).is_err());
    }

    #[test]
    fn drift_spec_validation() {
        let spec = DriftSpec::default();
        assert!(spec.validate(10).is_ok());
        assert!(spec.validate(8).is_err());
        assert!(DriftSpec {
            magnitude: f64::NAN,
            ..DriftSpec::default()
        }
        .validate(10)
        .is_err());
        assert!(DriftSpec::none().affected().is_empty());
        assert_eq!("shift".parse::<DriftMode>().unwrap(), DriftMode::Shift);
        assert!("gradual".parse::<DriftMode>().is_err());
    }
}
