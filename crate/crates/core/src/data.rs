//! Time-series containers, CSV ingestion and hourly resampling.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Epoch minutes (UTC).
pub type Timestamp = i64;

/// A run of consumption samples (kWh per interval) on a regular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSeries {
    values: Vec<f64>,
    interval: u32,
    start: Timestamp,
}

impl LoadSeries {
    /// `interval` is in minutes and must divide 60.
    pub fn new(values: Vec<f64>, interval: u32, start: Timestamp) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSeries("series is empty".into()));
        }
        if interval == 0 || 60 % interval != 0 {
            return Err(Error::InvalidSeries(format!(
                "interval {interval} min does not divide 60"
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidSeries(format!(
                "value {v} at index {i} is negative or not finite"
            )));
        }
        Ok(Self {
            values,
            interval,
            start,
        })
    }

    pub fn hourly(values: Vec<f64>, start: Timestamp) -> Result<Self> {
        Self::new(values, 60, start)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn interval(&self) -> u32 {
        self.interval
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, index: usize) -> Timestamp {
        self.start + index as i64 * self.interval as i64
    }
}

/// Sums sub-hourly samples into hourly totals, left to right within each hour.
pub fn resample_hourly(series: &LoadSeries) -> Result<LoadSeries> {
    let per_hour = (60 / series.interval) as usize;
    if !series.len().is_multiple_of(per_hour) {
        return Err(Error::InvalidSeries(format!(
            "length {} is not a multiple of {per_hour} samples per hour",
            series.len()
        )));
    }
    if per_hour == 1 {
        return Ok(series.clone());
    }
    let values = series
        .values
        .chunks_exact(per_hour)
        .map(|c| c.iter().fold(0.0, |acc, v| acc + v))
        .collect();
    LoadSeries::hourly(values, series.start)
}

/// Mean hourly consumption of an hourly series.
pub fn mean_consumption(series: &LoadSeries) -> Result<f64> {
    if series.interval != 60 {
        return Err(Error::InvalidSeries(format!(
            "mean consumption needs an hourly series, got {} min",
            series.interval
        )));
    }
    Ok(series.values.iter().sum::<f64>() / series.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CustomerRecord {
    pub id: String,
    pub series: LoadSeries,
    /// Mean hourly consumption, kWh.
    pub mean_w: f64,
}

impl CustomerRecord {
    pub fn new(id: impl Into<String>, series: LoadSeries) -> Result<Self> {
        let mean_w = mean_consumption(&resample_hourly(&series)?)?;
        Ok(Self {
            id: id.into(),
            series,
            mean_w,
        })
    }
}

/// Customers aligned to one time axis. Immutable once built.
#[derive(Debug, Clone)]
pub struct Dataset {
    customers: Vec<CustomerRecord>,
    index: HashMap<String, usize>,
    rejected: Vec<String>,
}

impl Dataset {
    pub fn new(customers: Vec<CustomerRecord>) -> Result<Self> {
        let first = customers
            .first()
            .ok_or_else(|| Error::Empty("dataset has no customers".into()))?;
        let (start, interval, len) = (
            first.series.start,
            first.series.interval,
            first.series.len(),
        );
        let mut index = HashMap::with_capacity(customers.len());
        for (i, c) in customers.iter().enumerate() {
            if c.series.start != start || c.series.interval != interval || c.series.len() != len {
                return Err(Error::InvalidSeries(format!(
                    "customer {} is not aligned to the common time axis",
                    c.id
                )));
            }
            if index.insert(c.id.clone(), i).is_some() {
                return Err(Error::InvalidSeries(format!(
                    "duplicate customer id {}",
                    c.id
                )));
            }
        }
        Ok(Self {
            customers,
            index,
            rejected: Vec::new(),
        })
    }

    pub fn customers(&self) -> &[CustomerRecord] {
        &self.customers
    }

    pub fn len(&self) -> usize {
        self.customers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.customers.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CustomerRecord> {
        self.index.get(id).map(|&i| &self.customers[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Ids dropped at ingestion because they did not cover the common axis.
    pub fn rejected(&self) -> &[String] {
        &self.rejected
    }

    pub fn start(&self) -> Timestamp {
        self.customers[0].series.start
    }

    pub fn interval(&self) -> u32 {
        self.customers[0].series.interval
    }

    pub fn series_len(&self) -> usize {
        self.customers[0].series.len()
    }
}

/// Column names for [`parse_load_csv`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub customer_id: String,
    pub timestamp: String,
    pub kwh: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            customer_id: "customer_id".into(),
            timestamp: "timestamp".into(),
            kwh: "kwh".into(),
        }
    }
}

pub fn parse_timestamp(s: &str) -> Option<Timestamp> {
    let secs = if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        dt.timestamp()
    } else {
        const FORMATS: [&str; 4] = [
            "%Y-%m-%dT%H:%M:%S",
            "%Y-%m-%d %H:%M:%S",
            "%Y-%m-%dT%H:%M",
            "%Y-%m-%d %H:%M",
        ];
        FORMATS
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())?
            .and_utc()
            .timestamp()
    };
    (secs % 60 == 0).then_some(secs / 60)
}

pub fn format_timestamp(ts: Timestamp) -> String {
    DateTime::from_timestamp(ts * 60, 0)
        .expect("timestamp in range")
        .format("%Y-%m-%dT%H:%M:%S")
        .to_string()
}

pub fn parse_load_csv(path: impl AsRef<Path>, schema: &ColumnMapping) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_load_csv(file, schema)
}

struct Row {
    ts: Timestamp,
    kwh: f64,
}

/// Reads `customer_id,timestamp,kwh` rows. Customers that do not cover every
/// point of the common axis are dropped and listed in [`Dataset::rejected`].
pub fn read_load_csv<R: Read>(reader: R, schema: &ColumnMapping) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MalformedRow {
                line: 1,
                reason: format!("missing column `{name}`"),
            })
    };
    let (id_col, ts_col, kwh_col) = (
        column(&schema.customer_id)?,
        column(&schema.timestamp)?,
        column(&schema.kwh)?,
    );

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<Row>> = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| {
            record.get(i).ok_or_else(|| Error::MalformedRow {
                line,
                reason: format!("expected at least {} fields, got {}", i + 1, record.len()),
            })
        };
        let id = field(id_col)?;
        if id.is_empty() {
            return Err(Error::MalformedRow {
                line,
                reason: "empty customer id".into(),
            });
        }
        let ts_raw = field(ts_col)?;
        let ts = parse_timestamp(ts_raw).ok_or_else(|| Error::MalformedRow {
            line,
            reason: format!("unparseable timestamp `{ts_raw}`"),
        })?;
        let kwh_raw = field(kwh_col)?;
        let kwh: f64 = kwh_raw
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::MalformedRow {
                line,
                reason: format!("unparseable kwh `{kwh_raw}`"),
            })?;
        if kwh < 0.0 {
            return Err(Error::NegativeConsumption { line, value: kwh });
        }
        let entry = rows.entry(id.to_string()).or_insert_with(|| {
            order.push(id.to_string());
            Vec::new()
        });
        if entry.last().is_some_and(|prev| prev.ts >= ts) {
            return Err(Error::NonIncreasingTimestamp {
                line,
                customer: id.to_string(),
            });
        }
        entry.push(Row { ts, kwh });
    }
    if order.is_empty() {
        return Err(Error::Empty("no data rows".into()));
    }

    let interval = rows
        .values()
        .flat_map(|r| r.windows(2).map(|w| w[1].ts - w[0].ts))
        .min()
        .unwrap_or(60);
    if interval <= 0 || 60 % interval != 0 {
        return Err(Error::InconsistentInterval(format!(
            "smallest step {interval} min does not divide 60"
        )));
    }
    for (id, r) in &rows {
        if let Some(w) = r.windows(2).find(|w| (w[1].ts - w[0].ts) % interval != 0) {
            return Err(Error::InconsistentInterval(format!(
                "customer {id}: step {} min is not a multiple of {interval} min",
                w[1].ts - w[0].ts
            )));
        }
    }
    let axis_start = rows.values().map(|r| r[0].ts).min().unwrap();
    let axis_end = rows.values().map(|r| r[r.len() - 1].ts).max().unwrap();
    let axis_len = ((axis_end - axis_start) / interval) as usize + 1;

    let mut customers = Vec::new();
    let mut rejected = Vec::new();
    for id in order {
        let r = rows.remove(&id).unwrap();
        if r.len() != axis_len || r[0].ts != axis_start {
            rejected.push(id);
            continue;
        }
        let series = LoadSeries::new(
            r.into_iter().map(|row| row.kwh).collect(),
            interval as u32,
            axis_start,
        )?;
        customers.push(CustomerRecord::new(id, series)?);
    }
    if customers.is_empty() {
        return Err(Error::NoCompleteCustomers {
            rejected: rejected.len(),
        });
    }
    let mut dataset = Dataset::new(customers)?;
    dataset.rejected = rejected;
    Ok(dataset)
}

/// Writes the dataset in the ingestion schema; values use shortest round-trip formatting.
pub fn write_load_csv<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["customer_id", "timestamp", "kwh"])?;
    let stamps: Vec<String> = (0..dataset.series_len())
        .map(|i| format_timestamp(dataset.customers[0].series.timestamp(i)))
        .collect();
    for c in dataset.customers() {
        for (v, ts) in c.series.values().iter().zip(&stamps) {
            w.write_record([c.id.as_str(), ts.as_str(), &v.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        read_load_csv(text.as_bytes(), &ColumnMapping::default())
    }

    fn hourly_csv(rows: &[(&str, f64)], hours: usize) -> String {
        let mut s = String::from("customer_id,timestamp,kwh\n");
        for (id, v) in rows {
            for h in 0..hours {
                s += &format!("{id},{},{v}\n", format_timestamp(h as i64 * 60));
            }
        }
        s
    }

    #[test]
    fn two_constant_customers() {
        let d = parse(&hourly_csv(&[("a", 1.0), ("b", 1.0)], 24)).unwrap();
        assert_eq!(d.len(), 2);
        for c in d.customers() {
            assert_eq!(c.mean_w, 1.0);
        }
    }

    #[test]
    fn alternating_values_mean() {
        let mut s = String::from("customer_id,timestamp,kwh\n");
        for h in 0..48 {
            let v = if h % 2 == 0 { 0.5 } else { 1.5 };
            s += &format!("x,{},{v}\n", format_timestamp(h * 60));
        }
        let d = parse(&s).unwrap();
        assert_eq!(d.customers()[0].mean_w, 1.0);
    }

    #[test]
    fn negative_kwh_names_line() {
        let s = "customer_id,timestamp,kwh\na,2010-08-01T00:00:00,1\na,2010-08-01T01:00:00,-2\n";
        match parse(s) {
            Err(Error::NegativeConsumption { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_and_empty() {
        let s = "customer_id,timestamp,kwh\na,not-a-time,1\n";
        assert!(matches!(parse(s), Err(Error::MalformedRow { line: 2, .. })));
        assert!(matches!(
            parse("customer_id,timestamp,kwh\n"),
            Err(Error::Empty(_))
        ));
        let s = "customer_id,timestamp,kwh\na,2010-08-01T00:00:00,abc\n";
        assert!(matches!(parse(s), Err(Error::MalformedRow { line: 2, .. })));
    }

    #[test]
    fn inconsistent_interval() {
        let s = "customer_id,timestamp,kwh\n\
                 a,2010-08-01T00:00:00,1\na,2010-08-01T00:15:00,1\n\
                 b,2010-08-01T00:00:00,1\nb,2010-08-01T00:25:00,1\n";
        assert!(matches!(parse(s), Err(Error::InconsistentInterval(_))));
    }

    #[test]
    fn non_increasing_timestamps() {
        let s = "customer_id,timestamp,kwh\na,2010-08-01T01:00:00,1\na,2010-08-01T00:00:00,1\n";
        assert!(matches!(
            parse(s),
            Err(Error::NonIncreasingTimestamp { line: 3, .. })
        ));
    }

    #[test]
    fn gaps_are_rejected_by_id() {
        let mut s = hourly_csv(&[("full", 1.0)], 4);
        s += "gappy,1970-01-01T00:00:00,1\ngappy,1970-01-01T03:00:00,1\n";
        let d = parse(&s).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.rejected(), ["gappy".to_string()]);
    }

    #[test]
    fn timestamp_formats() {
        let a = parse_timestamp("2010-08-01T00:00:00").unwrap();
        assert_eq!(parse_timestamp("2010-08-01 00:00:00"), Some(a));
        assert_eq!(parse_timestamp("2010-08-01T00:00:00Z"), Some(a));
        assert_eq!(parse_timestamp("2010-08-01T02:00:00+02:00"), Some(a));
        assert_eq!(parse_timestamp("2010-08-01T00:00:30"), None);
        assert_eq!(format_timestamp(a), "2010-08-01T00:00:00");
    }

    #[test]
    fn resample_examples() {
        let s = LoadSeries::new(vec![1.0, 2.0, 3.0, 4.0], 15, 0).unwrap();
        assert_eq!(resample_hourly(&s).unwrap().values(), &[10.0]);
        let s = LoadSeries::new(vec![0.5, 0.5, 1.0, 1.0], 30, 0).unwrap();
        assert_eq!(resample_hourly(&s).unwrap().values(), &[1.0, 2.0]);
        let s = LoadSeries::hourly(vec![3.0, 1.0], 0).unwrap();
        assert_eq!(resample_hourly(&s).unwrap(), s);
    }

    #[test]
    fn resample_errors() {
        assert!(LoadSeries::new(vec![1.0], 25, 0).is_err());
        let s = LoadSeries::new(vec![1.0; 3], 15, 0).unwrap();
        assert!(resample_hourly(&s).is_err());
    }

    #[test]
    fn mean_examples() {
        let m = |v: Vec<f64>| mean_consumption(&LoadSeries::hourly(v, 0).unwrap()).unwrap();
        assert_eq!(m(vec![2.0; 3]), 2.0);
        assert_eq!(m(vec![0.0, 4.0]), 2.0);
        assert!((m(vec![1.05; 8760]) - 1.05).abs() < 1e-12);
        assert!(LoadSeries::hourly(vec![], 0).is_err());
    }

    #[test]
    fn quarter_hour_ingestion() {
        let mut s = String::from("customer_id,timestamp,kwh\n");
        for q in 0..8 {
            s += &format!("a,{},0.25\n", format_timestamp(q * 15));
        }
        let d = parse(&s).unwrap();
        assert_eq!(d.interval(), 15);
        assert!((d.customers()[0].mean_w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let series = |v: Vec<f64>| LoadSeries::hourly(v, 1_000_020).unwrap();
        let d = Dataset::new(vec![
            CustomerRecord::new("a", series(vec![0.1, 1.0 / 3.0, 2.5])).unwrap(),
            CustomerRecord::new("b", series(vec![1e-17, 7.0, 0.0])).unwrap(),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_load_csv(&d, &mut buf).unwrap();
        let back = read_load_csv(buf.as_slice(), &ColumnMapping::default()).unwrap();
        assert_eq!(back.customers(), d.customers());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn resample_conserves_energy(q in prop::collection::vec(0u32..4000, 1..50)) {
                // quarter-kWh values keep every partial sum exact
                let v: Vec<f64> = q.iter().cycle().take(q.len() * 4).map(|&x| x as f64 / 4.0).collect();
                let s = LoadSeries::new(v.clone(), 15, 0).unwrap();
                let h = resample_hourly(&s).unwrap();
                prop_assert_eq!(h.values().iter().sum::<f64>(), v.iter().sum::<f64>());
            }

            #[test]
            fn mean_of_doubled_series(v in prop::collection::vec(0.0f64..10.0, 1..100)) {
                let once = mean_consumption(&LoadSeries::hourly(v.clone(), 0).unwrap()).unwrap();
                let twice: Vec<f64> = v.iter().chain(v.iter()).copied().collect();
                let twice = mean_consumption(&LoadSeries::hourly(twice, 0).unwrap()).unwrap();
                prop_assert!((once - twice).abs() <= 1e-12 * once.max(1.0));
            }
        }
    }
}
