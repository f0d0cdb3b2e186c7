//! Synchronized sample store and the point-in-time data API.
//!
//! A [`DataStore`] holds complete, strictly time-ordered observations of the
//! signal vector. Queries between two samples interpolate entrywise; queries
//! outside the recorded range fail instead of extrapolating.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::sync::{Arc, RwLock, RwLockReadGuard};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Two timestamps closer than this are the same instant.
pub const TIME_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("timestamp {at} is not after the last stored timestamp {last}")]
    NonMonotonicTime { at: f64, last: f64 },
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("signal index {index} out of range for {n} signals")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("time {t} outside recorded range [{min}, {max}]")]
    TimeOutOfRange { t: f64, min: f64, max: f64 },
    #[error("data store is empty")]
    EmptyStore,
    #[error("invalid timestamp {0}: must be finite and non-negative")]
    InvalidTimestamp(f64),
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

/// Seconds since the scenario epoch.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Timestamp(f64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0.0);

    pub fn new(secs: f64) -> Result<Self> {
        if secs.is_finite() && secs >= 0.0 {
            Ok(Timestamp(secs))
        } else {
            Err(DataError::InvalidTimestamp(secs))
        }
    }

    pub fn secs(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Timestamp {
    type Error = DataError;
    fn try_from(value: f64) -> Result<Self> {
        Timestamp::new(value)
    }
}

impl From<Timestamp> for f64 {
    fn from(t: Timestamp) -> f64 {
        t.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalInfo {
    pub index: usize,
    pub name: String,
    pub unit: String,
}

/// Ordered signal descriptions; the dimension of the observable state.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SignalSchema {
    signals: Vec<SignalInfo>,
}

impl SignalSchema {
    /// Builds a schema from `(name, unit)` pairs; indices follow list order.
    pub fn new<N, U>(signals: impl IntoIterator<Item = (N, U)>) -> Result<Self>
    where
        N: Into<String>,
        U: Into<String>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (index, (name, unit)) in signals.into_iter().enumerate() {
            let name = name.into();
            if !is_identifier(&name) {
                return Err(DataError::InvalidSchema(format!("`{name}` is not an identifier")));
            }
            if !seen.insert(name.clone()) {
                return Err(DataError::InvalidSchema(format!("duplicate signal `{name}`")));
            }
            out.push(SignalInfo { index, name, unit: unit.into() });
        }
        Ok(SignalSchema { signals: out })
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn signals(&self) -> &[SignalInfo] {
        &self.signals
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.signals.iter().position(|s| s.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.signals.iter().map(|s| s.name.as_str())
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

/// A possibly partial observation; `None` marks a missing entry.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SignalVector(pub Vec<Option<f64>>);

impl SignalVector {
    pub fn complete(values: &[f64]) -> Self {
        SignalVector(values.iter().copied().map(Some).collect())
    }

    pub fn missing(n: usize) -> Self {
        SignalVector(vec![None; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.0.get(i).copied().flatten()
    }

    /// All entries, if none is missing.
    pub fn to_complete(&self) -> Option<Vec<f64>> {
        self.0.iter().copied().collect()
    }

    pub fn is_complete(&self) -> bool {
        self.0.iter().all(Option::is_some)
    }

    pub(crate) fn check(&self, n: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(DataError::SchemaMismatch(format!("vector has {} entries, schema has {n}", self.0.len())));
        }
        if let Some(i) = self.0.iter().position(|v| matches!(v, Some(v) if !v.is_finite())) {
            return Err(DataError::SchemaMismatch(format!("entry {i} is not finite")));
        }
        Ok(())
    }
}

/// A complete observation at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub at: Timestamp,
    pub x: Vec<f64>,
}

impl Sample {
    pub fn new(at: f64, x: Vec<f64>) -> Result<Self> {
        Ok(Sample { at: Timestamp::new(at)?, x })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataStore {
    schema: SignalSchema,
    samples: Vec<Sample>,
}

impl DataStore {
    pub fn new(schema: SignalSchema) -> Self {
        DataStore { schema, samples: Vec::new() }
    }

    pub fn schema(&self) -> &SignalSchema {
        &self.schema
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Appends `s` as the latest sample. The store is unchanged on error.
    pub fn ingest(&mut self, s: Sample) -> Result<()> {
        if s.x.len() != self.schema.len() {
            return Err(DataError::SchemaMismatch(format!(
                "sample has {} entries, schema has {}",
                s.x.len(),
                self.schema.len()
            )));
        }
        if let Some(i) = s.x.iter().position(|v| !v.is_finite()) {
            return Err(DataError::SchemaMismatch(format!("entry {i} is missing or not finite")));
        }
        if let Some(last) = self.samples.last() {
            if s.at.secs() <= last.at.secs() {
                return Err(DataError::NonMonotonicTime { at: s.at.secs(), last: last.at.secs() });
            }
        }
        self.samples.push(s);
        Ok(())
    }

    pub fn time_range(&self) -> Result<(Timestamp, Timestamp)> {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => Ok((a.at, b.at)),
            _ => Err(DataError::EmptyStore),
        }
    }

    /// Signal `i` at time `t`.
    pub fn get(&self, i: usize, t: f64) -> Result<f64> {
        let n = self.schema.len();
        if i >= n {
            return Err(DataError::IndexOutOfRange { index: i, n });
        }
        self.get_all(t).map(|x| x[i])
    }

    /// The full signal vector at time `t`: the stored vector on an exact
    /// hit, otherwise entrywise linear interpolation between neighbors.
    pub fn get_all(&self, t: f64) -> Result<Vec<f64>> {
        let (first, last) = self.time_range()?;
        let (lo, hi) = (first.secs(), last.secs());
        if !t.is_finite() || t < lo - TIME_EPSILON || t > hi + TIME_EPSILON {
            return Err(DataError::TimeOutOfRange { t, min: lo, max: hi });
        }
        // first sample strictly after t
        let idx = self.samples.partition_point(|s| s.at.secs() <= t);
        if idx > 0 && (t - self.samples[idx - 1].at.secs()).abs() <= TIME_EPSILON {
            return Ok(self.samples[idx - 1].x.clone());
        }
        if idx < self.samples.len() && (self.samples[idx].at.secs() - t).abs() <= TIME_EPSILON {
            return Ok(self.samples[idx].x.clone());
        }
        let (a, b) = (&self.samples[idx - 1], &self.samples[idx]);
        let w = (t - a.at.secs()) / (b.at.secs() - a.at.secs());
        Ok(a.x.iter().zip(&b.x).map(|(&u, &v)| u + (v - u) * w).collect())
    }

    /// Index of the stored sample at `t` (within [`TIME_EPSILON`]).
    pub fn position_of(&self, t: f64) -> Option<usize> {
        let idx = self.samples.partition_point(|s| s.at.secs() < t - TIME_EPSILON);
        self.samples.get(idx).filter(|s| (s.at.secs() - t).abs() <= TIME_EPSILON).map(|_| idx)
    }

    /// Samples with `from <= at < until`.
    pub fn slice(&self, from: f64, until: f64) -> &[Sample] {
        let a = self.samples.partition_point(|s| s.at.secs() < from);
        let b = self.samples.partition_point(|s| s.at.secs() < until);
        &self.samples[a..b.max(a)]
    }

    /// A new store holding `slice(from, until)`.
    pub fn window(&self, from: f64, until: f64) -> DataStore {
        DataStore { schema: self.schema.clone(), samples: self.slice(from, until).to_vec() }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| DataError::Io(e.to_string());
        let mut header = vec!["t".to_string()];
        header.extend(self.schema.names().map(str::to_string));
        out.write_record(&header).map_err(io)?;
        for s in &self.samples {
            let mut row = Vec::with_capacity(s.x.len() + 1);
            row.push(format_value(s.at.secs()));
            row.extend(s.x.iter().map(|&v| format_value(v)));
            out.write_record(&row).map_err(io)?;
        }
        out.flush().map_err(|e| DataError::Io(e.to_string()))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let header = rdr.headers().map_err(|e| DataError::Csv { line: 1, message: e.to_string() })?.clone();
        if header.get(0) != Some("t") {
            return Err(DataError::Csv { line: 1, message: "first column must be `t`".into() });
        }
        let schema = SignalSchema::new(header.iter().skip(1).map(|n| (n, "")))
            .map_err(|e| DataError::Csv { line: 1, message: e.to_string() })?;
        let mut store = DataStore::new(schema);
        for rec in rdr.records() {
            let rec =
                rec.map_err(|e| DataError::Csv { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
            let line = rec.position().map_or(0, |p| p.line());
            let mut vals = Vec::with_capacity(rec.len());
            for field in rec.iter() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| DataError::Csv { line, message: format!("`{field}` is not a number") })?;
                vals.push(v);
            }
            let t = vals.remove(0);
            let sample = Sample::new(t, vals).map_err(|e| DataError::Csv { line, message: e.to_string() })?;
            store.ingest(sample).map_err(|e| DataError::Csv { line, message: e.to_string() })?;
        }
        Ok(store)
    }

    pub fn save_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::fs::File::create(path.as_ref()).map_err(|e| DataError::Io(e.to_string()))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load_csv(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref())
            .map_err(|e| DataError::Io(format!("{}: {e}", path.as_ref().display())))?;
        DataStore::read_csv(std::io::BufReader::new(f))
    }
}

/// 17 significant digits; parses back to the identical `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// A store shared between one writer and many readers.
#[derive(Debug, Clone, Default)]
pub struct SharedStore(Arc<RwLock<DataStore>>);

impl SharedStore {
    pub fn new(store: DataStore) -> Self {
        SharedStore(Arc::new(RwLock::new(store)))
    }

    /// A consistent read snapshot; writers wait until it is dropped.
    pub fn read(&self) -> RwLockReadGuard<'_, DataStore> {
        self.0.read().unwrap_or_else(|p| p.into_inner())
    }

    pub fn ingest(&self, s: Sample) -> Result<()> {
        self.0.write().unwrap_or_else(|p| p.into_inner()).ingest(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(n: usize) -> SignalSchema {
        SignalSchema::new((0..n).map(|i| (format!("x{i}"), "m"))).unwrap()
    }

    fn store(points: &[(f64, Vec<f64>)]) -> DataStore {
        let mut s = DataStore::new(schema(points[0].1.len()));
        for (t, x) in points {
            s.ingest(Sample::new(*t, x.clone()).unwrap()).unwrap();
        }
        s
    }

    #[test]
    fn first_insert() {
        let mut s = DataStore::new(schema(2));
        s.ingest(Sample::new(0.0, vec![0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn equal_timestamp_rejected_and_store_unchanged() {
        let mut s = store(&[(0.0, vec![1.0]), (1.0, vec![2.0])]);
        let before = s.clone();
        let err = s.ingest(Sample::new(1.0, vec![3.0]).unwrap()).unwrap_err();
        assert!(matches!(err, DataError::NonMonotonicTime { .. }));
        assert_eq!(s, before);
    }

    #[test]
    fn schema_mismatch_on_length_and_non_finite() {
        let mut s = DataStore::new(schema(2));
        assert!(matches!(s.ingest(Sample::new(0.0, vec![1.0]).unwrap()), Err(DataError::SchemaMismatch(_))));
        assert!(matches!(s.ingest(Sample::new(0.0, vec![1.0, f64::NAN]).unwrap()), Err(DataError::SchemaMismatch(_))));
        assert!(s.is_empty());
    }

    #[test]
    fn rejects_bad_timestamps() {
        assert!(Timestamp::new(-1.0).is_err());
        assert!(Timestamp::new(f64::INFINITY).is_err());
    }

    #[test]
    fn duplicate_signal_names() {
        assert!(SignalSchema::new([("a", ""), ("a", "")]).is_err());
    }

    #[test]
    fn exact_hit_and_midpoint() {
        let s = store(&[(0.0, vec![2.0, -1.0]), (1.0, vec![4.0, 1.0])]);
        assert_eq!(s.get(0, 0.0).unwrap(), 2.0);
        assert_eq!(s.get(0, 0.5).unwrap(), 3.0);
        assert_eq!(s.get_all(0.5).unwrap(), vec![3.0, 0.0]);
        assert_eq!(s.get_all(1.0).unwrap(), vec![4.0, 1.0]);
    }

    #[test]
    fn out_of_range_queries() {
        let s = store(&[(0.0, vec![2.0]), (1.0, vec![4.0])]);
        assert!(matches!(s.get(0, 2.0), Err(DataError::TimeOutOfRange { .. })));
        assert!(matches!(s.get(1, 0.5), Err(DataError::IndexOutOfRange { index: 1, n: 1 })));
        assert_eq!(DataStore::new(schema(1)).get_all(0.0), Err(DataError::EmptyStore));
    }

    #[test]
    fn time_ranges() {
        assert_eq!(DataStore::new(schema(1)).time_range(), Err(DataError::EmptyStore));
        let s = store(&[(5.0, vec![1.0])]);
        let (a, b) = s.time_range().unwrap();
        assert_eq!((a.secs(), b.secs()), (5.0, 5.0));
        let pts: Vec<_> = (0..10).map(|i| (i as f64, vec![i as f64])).collect();
        let (a, b) = store(&pts).time_range().unwrap();
        assert_eq!((a.secs(), b.secs()), (0.0, 9.0));
    }

    #[test]
    fn affine_signals_interpolate_exactly() {
        let line = |t: f64| vec![3.0 * t - 2.0, -0.25 * t + 7.5];
        let pts: Vec<_> = (0..20).map(|i| (i as f64 * 0.7, line(i as f64 * 0.7))).collect();
        let s = store(&pts);
        for k in 0..500 {
            let t = k as f64 * 13.3 / 500.0;
            let got = s.get_all(t).unwrap();
            for (g, e) in got.iter().zip(line(t)) {
                assert!((g - e).abs() <= 1e-9, "t={t}: {g} vs {e}");
            }
        }
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let pts: Vec<_> =
            (0..5).map(|i| (i as f64 * 0.1, vec![std::f64::consts::PI * i as f64, 1.0 / 3.0, -1e-300])).collect();
        let s = store(&pts);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = DataStore::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.samples(), s.samples());
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x0,x1,x2\n"));
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let err = DataStore::read_csv("t,a\n0,1\n1,oops\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::Csv { line: 3, .. }), "{err:?}");
        let err = DataStore::read_csv("t,a\n1,1\n1,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::Csv { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn shared_store_readers_see_snapshots() {
        let shared = SharedStore::new(DataStore::new(schema(1)));
        shared.ingest(Sample::new(0.0, vec![1.0]).unwrap()).unwrap();
        let reader = shared.clone();
        let handle = std::thread::spawn(move || reader.read().len());
        assert_eq!(handle.join().unwrap(), 1);
    }
}
