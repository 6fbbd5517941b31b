//! Loading and subsetting of paired time series.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TimeIndex {
    /// Plain integer index (day number or row number).
    Index(i64),
    Date(NaiveDate),
}

impl TimeIndex {
    pub fn month(&self) -> Option<u32> {
        match self {
            TimeIndex::Date(d) => Some(d.month()),
            TimeIndex::Index(_) => None,
        }
    }
}

impl fmt::Display for TimeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeIndex::Index(i) => write!(f, "{i}"),
            TimeIndex::Date(d) => write!(f, "{}", d.format("%Y-%m-%d")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Original,
    Frechet,
}

impl Scale {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scale::Original => "original",
            Scale::Frechet => "frechet",
        }
    }
}

/// Paired observations `(x1, x2)` indexed by strictly increasing time.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateSample {
    t: Vec<TimeIndex>,
    x1: Vec<f64>,
    x2: Vec<f64>,
    labels: [String; 2],
    scale: Scale,
}

impl BivariateSample {
    /// Validating constructor.
    pub fn new(
        t: Vec<TimeIndex>,
        x1: Vec<f64>,
        x2: Vec<f64>,
        labels: [String; 2],
        scale: Scale,
    ) -> Result<Self> {
        if t.len() != x1.len() || x1.len() != x2.len() {
            return Err(Error::invalid("time and coordinate columns differ in length"));
        }
        if x1.len() < 2 {
            return Err(Error::TooFewRows {
                found: x1.len(),
                needed: 2,
            });
        }
        if let Some(row) = t.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::DuplicateTime { row: row + 1 });
        }
        if x1.iter().chain(&x2).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite coordinate value"));
        }
        if scale == Scale::Frechet && x1.iter().chain(&x2).any(|&v| v <= 0.0) {
            return Err(Error::invalid("Fréchet-scale values must be positive"));
        }
        Ok(Self {
            t,
            x1,
            x2,
            labels,
            scale,
        })
    }

    /// Sample with a synthetic `0..n` time index.
    pub fn from_columns(x1: Vec<f64>, x2: Vec<f64>, scale: Scale) -> Result<Self> {
        let t = (0..x1.len() as i64).map(TimeIndex::Index).collect();
        Self::new(t, x1, x2, ["x1".into(), "x2".into()], scale)
    }

    pub fn len(&self) -> usize {
        self.x1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x1.is_empty()
    }

    pub fn x1(&self) -> &[f64] {
        &self.x1
    }

    pub fn x2(&self) -> &[f64] {
        &self.x2
    }

    pub fn coord(&self, k: usize) -> &[f64] {
        match k {
            0 => &self.x1,
            1 => &self.x2,
            _ => panic!("coordinate index {k} out of range"),
        }
    }

    pub fn time(&self) -> &[TimeIndex] {
        &self.t
    }

    pub fn labels(&self) -> &[String; 2] {
        &self.labels
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.x1.iter().zip(&self.x2).map(|(&a, &b)| [a, b])
    }

    /// Same time index and labels with replacement coordinates.
    pub fn with_values(&self, x1: Vec<f64>, x2: Vec<f64>, scale: Scale) -> Result<Self> {
        Self::new(self.t.clone(), x1, x2, self.labels.clone(), scale)
    }

    /// Rows picked by `rows`, re-indexed `0..rows.len()`.
    pub fn resample(&self, rows: &[usize]) -> Result<Self> {
        let x1 = rows.iter().map(|&i| self.x1[i]).collect();
        let x2 = rows.iter().map(|&i| self.x2[i]).collect();
        let t = (0..rows.len() as i64).map(TimeIndex::Index).collect();
        Self::new(t, x1, x2, self.labels.clone(), self.scale)
    }

    /// Write `time,<label1>,<label2>` CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", &self.labels[0], &self.labels[1]])?;
        for i in 0..self.len() {
            w.write_record([
                self.t[i].to_string(),
                format_f64(self.x1[i]),
                format_f64(self.x2[i]),
            ])?;
        }
        w.flush().map_err(|e| Error::io("csv output", e))?;
        Ok(())
    }
}

/// Shortest round-trip decimal representation.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CoordSummary {
    pub min: f64,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
    pub max: f64,
}

impl CoordSummary {
    fn of(values: &[f64]) -> Self {
        let s = stats::sorted_copy(values);
        Self {
            min: s[0],
            q05: stats::quantile_sorted(&s, 0.05),
            median: stats::quantile_sorted(&s, 0.5),
            q95: stats::quantile_sorted(&s, 0.95),
            max: s[s.len() - 1],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
    /// Calendar months present in the retained rows (empty without dates).
    pub months_retained: Vec<u32>,
    pub summary: [CoordSummary; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ColumnSpec {
    pub col1: String,
    pub col2: String,
    /// `None` assigns the row number as time index.
    pub time: Option<String>,
}

/// Per-coordinate sign flips applied at load time, e.g. turning humidity
/// into dryness so that large values are the direction of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Orientation {
    pub negate1: bool,
    pub negate2: bool,
}

impl std::str::FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (negate1, negate2) = match s.trim() {
            "none" => (false, false),
            "1" => (true, false),
            "2" => (false, true),
            "both" => (true, true),
            other => return Err(Error::invalid(format!("negate: expected none|1|2|both, got {other:?}"))),
        };
        Ok(Self { negate1, negate2 })
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match (self.negate1, self.negate2) {
            (false, false) => "none",
            (true, false) => "1",
            (false, true) => "2",
            (true, true) => "both",
        };
        f.write_str(s)
    }
}

fn find_column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    if let Some(i) = headers.iter().position(|h| h.trim() == name) {
        return Ok(i);
    }
    match name.parse::<usize>() {
        Ok(i) if i < headers.len() => Ok(i),
        _ => Err(Error::ColumnNotFound(name.to_string())),
    }
}

fn parse_value(field: &str) -> Option<f64> {
    let f = field.trim();
    if f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan") {
        return None;
    }
    f.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_time(field: &str) -> Option<TimeIndex> {
    let f = field.trim();
    if let Ok(i) = f.parse::<i64>() {
        return Some(TimeIndex::Index(i));
    }
    let date_part = f.get(..10).unwrap_or(f);
    NaiveDate::parse_from_str(date_part, "%Y-%m-%d")
        .ok()
        .map(TimeIndex::Date)
}

/// Read a headed CSV file into a sample. Rows with a missing or
/// unparseable coordinate (or time stamp) are dropped and counted.
pub fn load_series(
    path: impl AsRef<Path>,
    columns: &ColumnSpec,
    orientation: Orientation,
) -> Result<(BivariateSample, IngestReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    read_series(file, columns, orientation)
}

pub fn read_series<R: std::io::Read>(
    input: R,
    columns: &ColumnSpec,
    orientation: Orientation,
) -> Result<(BivariateSample, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = reader.headers()?.clone();
    let i1 = find_column(&headers, &columns.col1)?;
    let i2 = find_column(&headers, &columns.col2)?;
    let it = columns
        .time
        .as_deref()
        .map(|name| find_column(&headers, name))
        .transpose()?;

    let mut rows: Vec<(TimeIndex, f64, f64)> = Vec::new();
    let mut rows_read = 0usize;
    let mut rows_dropped = 0usize;
    for record in reader.records() {
        rows_read += 1;
        let Ok(record) = record else {
            rows_dropped += 1;
            continue;
        };
        let a = record.get(i1).and_then(parse_value);
        let b = record.get(i2).and_then(parse_value);
        let t = match it {
            Some(c) => record.get(c).and_then(parse_time),
            None => Some(TimeIndex::Index(rows_read as i64 - 1)),
        };
        match (t, a, b) {
            (Some(t), Some(a), Some(b)) => {
                let a = if orientation.negate1 { -a } else { a };
                let b = if orientation.negate2 { -b } else { b };
                rows.push((t, a, b));
            }
            _ => rows_dropped += 1,
        }
    }
    if rows.len() < 2 {
        return Err(Error::TooFewRows {
            found: rows.len(),
            needed: 2,
        });
    }
    let dated = rows.iter().filter(|r| matches!(r.0, TimeIndex::Date(_))).count();
    if dated != 0 && dated != rows.len() {
        return Err(Error::invalid("time column mixes dates and integer indices"));
    }
    rows.sort_by_key(|r| r.0);

    let labels = [
        headers.get(i1).unwrap_or("x1").trim().to_string(),
        headers.get(i2).unwrap_or("x2").trim().to_string(),
    ];
    let t: Vec<_> = rows.iter().map(|r| r.0).collect();
    let x1: Vec<_> = rows.iter().map(|r| r.1).collect();
    let x2: Vec<_> = rows.iter().map(|r| r.2).collect();
    let months_retained = t
        .iter()
        .filter_map(TimeIndex::month)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let report = IngestReport {
        rows_read,
        rows_dropped,
        months_retained,
        summary: [CoordSummary::of(&x1), CoordSummary::of(&x2)],
    };
    let sample = BivariateSample::new(t, x1, x2, labels, Scale::Original)?;
    Ok((sample, report))
}

/// Keep rows whose calendar month is in `months` (1..=12).
///
/// Selecting all twelve months is the identity and works on any index;
/// proper subsets need a date-valued time column.
pub fn subset_months(sample: &BivariateSample, months: &[u32]) -> Result<BivariateSample> {
    if months.is_empty() {
        return Err(Error::Months("month set is empty".into()));
    }
    if let Some(m) = months.iter().find(|m| !(1..=12).contains(*m)) {
        return Err(Error::Months(format!("month {m} outside 1..=12")));
    }
    let wanted: BTreeSet<u32> = months.iter().copied().collect();
    if wanted.len() == 12 {
        return Ok(sample.clone());
    }
    let mut keep = Vec::new();
    for (i, t) in sample.t.iter().enumerate() {
        match t.month() {
            Some(m) if wanted.contains(&m) => keep.push(i),
            Some(_) => {}
            None => {
                return Err(Error::Months(
                    "time column holds no calendar dates".into(),
                ))
            }
        }
    }
    if keep.is_empty() {
        return Err(Error::Months("no rows fall in the selected months".into()));
    }
    let pick = |v: &[f64]| keep.iter().map(|&i| v[i]).collect::<Vec<_>>();
    BivariateSample::new(
        keep.iter().map(|&i| sample.t[i]).collect(),
        pick(&sample.x1),
        pick(&sample.x2),
        sample.labels.clone(),
        sample.scale,
    )
}

/// Parse `"all"` or a comma list such as `"9,10,11"` or `"4-10"`.
pub fn parse_months(spec: &str) -> Result<Vec<u32>> {
    let spec = spec.trim();
    if spec.eq_ignore_ascii_case("all") {
        return Ok((1..=12).collect());
    }
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        let bad = || Error::Months(format!("cannot parse {part:?}"));
        if let Some((a, b)) = part.split_once('-') {
            let a: u32 = a.trim().parse().map_err(|_| bad())?;
            let b: u32 = b.trim().parse().map_err(|_| bad())?;
            out.extend(a..=b);
        } else {
            out.push(part.parse().map_err(|_| bad())?);
        }
    }
    Ok(out)
}
