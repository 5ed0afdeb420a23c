//! Time-series containers: period indexing, CSV ingestion, frequency
//! aggregation, index rebasing, and the transforms shared by the rest of
//! the crate.
//!
//! All types are immutable values after construction; operations are pure
//! functions returning new series.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Sampling frequency of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Frequency {
    Quarterly,
    Annual,
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frequency::Quarterly => write!(f, "quarterly"),
            Frequency::Annual => write!(f, "annual"),
        }
    }
}

/// A point on the quarterly or annual time axis.
///
/// `quarter` is `Some(1..=4)` for quarterly periods and `None` for annual
/// ones. Ordering is lexicographic on `(year, quarter)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeriodIndex {
    pub year: i32,
    pub quarter: Option<u8>,
}

impl PeriodIndex {
    pub fn annual(year: i32) -> Self {
        PeriodIndex { year, quarter: None }
    }

    pub fn quarterly(year: i32, quarter: u8) -> Result<Self> {
        if !(1..=4).contains(&quarter) {
            return Err(Error::Period {
                token: format!("{year}Q{quarter}"),
                msg: "quarter must be in 1..=4".into(),
            });
        }
        Ok(PeriodIndex { year, quarter: Some(quarter) })
    }

    pub fn frequency(&self) -> Frequency {
        if self.quarter.is_some() {
            Frequency::Quarterly
        } else {
            Frequency::Annual
        }
    }

    /// The period immediately after this one at the same frequency.
    pub fn next(&self) -> Self {
        match self.quarter {
            None => PeriodIndex::annual(self.year + 1),
            Some(4) => PeriodIndex { year: self.year + 1, quarter: Some(1) },
            Some(q) => PeriodIndex { year: self.year, quarter: Some(q + 1) },
        }
    }

    /// The period `offset` steps after this one.
    pub fn offset(&self, offset: usize) -> Self {
        match self.quarter {
            None => PeriodIndex::annual(self.year + offset as i32),
            Some(q) => {
                let idx = (q as i32 - 1) + offset as i32;
                PeriodIndex {
                    year: self.year + idx.div_euclid(4),
                    quarter: Some((idx.rem_euclid(4) + 1) as u8),
                }
            }
        }
    }
}

impl fmt::Display for PeriodIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.quarter {
            Some(q) => write!(f, "{}Q{}", self.year, q),
            None => write!(f, "{}", self.year),
        }
    }
}

impl FromStr for PeriodIndex {
    type Err = Error;

    /// Parses `YYYY` (annual) or `YYYYQn` (quarterly).
    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Period { token: s.into(), msg: msg.into() };
        match s.find(['Q', 'q']) {
            Some(pos) => {
                let year: i32 = s[..pos].parse().map_err(|_| bad("invalid year"))?;
                let q: u8 = s[pos + 1..].parse().map_err(|_| bad("invalid quarter"))?;
                PeriodIndex::quarterly(year, q)
            }
            None => {
                let year: i32 = s.parse().map_err(|_| bad("invalid year"))?;
                Ok(PeriodIndex::annual(year))
            }
        }
    }
}

/// A named time series at a fixed frequency with an explicit start period.
///
/// Missing observations are `None`; present values are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    name: String,
    start: PeriodIndex,
    values: Vec<Option<f64>>,
}

impl Series {
    /// Builds a series, validating finiteness of the present values.
    pub fn new(
        name: impl Into<String>,
        start: PeriodIndex,
        values: Vec<Option<f64>>,
    ) -> Result<Self> {
        let name = name.into();
        for (i, v) in values.iter().enumerate() {
            if let Some(x) = v {
                if !x.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "series `{name}` at {}",
                        start.offset(i)
                    )));
                }
            }
        }
        Ok(Series { name, start, values })
    }

    /// Convenience constructor for a fully observed series.
    pub fn from_values(
        name: impl Into<String>,
        start: PeriodIndex,
        values: Vec<f64>,
    ) -> Result<Self> {
        Series::new(name, start, values.into_iter().map(Some).collect())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn frequency(&self) -> Frequency {
        self.start.frequency()
    }

    pub fn start(&self) -> PeriodIndex {
        self.start
    }

    /// Last period covered by the series.
    pub fn end(&self) -> PeriodIndex {
        self.start.offset(self.values.len().saturating_sub(1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn period_at(&self, i: usize) -> PeriodIndex {
        self.start.offset(i)
    }

    /// Position of `p` within the series span, if covered.
    pub fn index_of(&self, p: PeriodIndex) -> Option<usize> {
        if p.frequency() != self.frequency() || p < self.start {
            return None;
        }
        let steps = match p.quarter {
            None => (p.year - self.start.year) as usize,
            Some(q) => {
                let a = (self.start.year as i64) * 4 + self.start.quarter.unwrap() as i64 - 1;
                let b = (p.year as i64) * 4 + q as i64 - 1;
                (b - a) as usize
            }
        };
        (steps < self.values.len()).then_some(steps)
    }

    pub fn iter(&self) -> impl Iterator<Item = (PeriodIndex, Option<f64>)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| (self.start.offset(i), *v))
    }

    /// Dense view of the values; errors on the first missing observation.
    pub fn dense(&self) -> Result<Vec<f64>> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.ok_or_else(|| Error::MissingValue {
                    period: self.start.offset(i).to_string(),
                    context: format!("series `{}` must be fully observed", self.name),
                })
            })
            .collect()
    }

    /// Sub-series covering `[from, to]` (inclusive, both within span).
    pub fn slice(&self, from: PeriodIndex, to: PeriodIndex) -> Result<Series> {
        let i = self.index_of(from).ok_or_else(|| {
            Error::Alignment(format!("period {from} outside span of `{}`", self.name))
        })?;
        let j = self.index_of(to).ok_or_else(|| {
            Error::Alignment(format!("period {to} outside span of `{}`", self.name))
        })?;
        if j < i {
            return Err(Error::Alignment(format!("empty slice {from}..{to}")));
        }
        Ok(Series {
            name: self.name.clone(),
            start: from,
            values: self.values[i..=j].to_vec(),
        })
    }

    /// Element-wise map over present values.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Series> {
        Series::new(
            self.name.clone(),
            self.start,
            self.values.iter().map(|v| v.map(&f)).collect(),
        )
    }
}

/// Aggregation rule for quarterly-to-annual conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateMethod {
    Sum,
    Mean,
}

/// Collapses a quarterly series spanning complete calendar years into an
/// annual one. Quarters are added in chronological order so the result is
/// bit-reproducible.
pub fn aggregate_to_annual(s: &Series, method: AggregateMethod) -> Result<Series> {
    if s.frequency() != Frequency::Quarterly {
        return Err(Error::Frequency(format!(
            "aggregate_to_annual needs a quarterly series, got {}",
            s.frequency()
        )));
    }
    if s.start.quarter != Some(1) || s.len() % 4 != 0 || s.is_empty() {
        return Err(Error::InvalidInput(format!(
            "series `{}` must start at Q1 and span complete years (len {} from {})",
            s.name,
            s.len(),
            s.start
        )));
    }
    let mut out = Vec::with_capacity(s.len() / 4);
    for (y, chunk) in s.values.chunks_exact(4).enumerate() {
        let mut acc = 0.0;
        for (q, v) in chunk.iter().enumerate() {
            match v {
                Some(x) => acc += x,
                None => {
                    return Err(Error::MissingValue {
                        period: s.start.offset(4 * y + q).to_string(),
                        context: "missing value inside a year being aggregated".into(),
                    })
                }
            }
        }
        out.push(match method {
            AggregateMethod::Sum => acc,
            AggregateMethod::Mean => acc / 4.0,
        });
    }
    Series::from_values(s.name.clone(), PeriodIndex::annual(s.start.year), out)
}

/// Rescales a series so its base-year average equals 1.
pub fn rebase_index(s: &Series, base_year: i32) -> Result<Series> {
    let year_values: Vec<f64> = s
        .iter()
        .filter(|(p, _)| p.year == base_year)
        .map(|(p, v)| {
            v.ok_or_else(|| Error::MissingValue {
                period: p.to_string(),
                context: "base-year value required for rebasing".into(),
            })
        })
        .collect::<Result<_>>()?;
    if year_values.is_empty() {
        return Err(Error::InvalidInput(format!(
            "base year {base_year} outside span of `{}` ({}..{})",
            s.name,
            s.start,
            s.end()
        )));
    }
    let base = year_values.iter().sum::<f64>() / year_values.len() as f64;
    if base == 0.0 {
        return Err(Error::InvalidInput(format!(
            "base-year {base_year} average of `{}` is zero",
            s.name
        )));
    }
    s.map(|x| x / base)
}

/// Element-wise natural logarithm; errors on the first non-positive value.
pub fn log_transform(s: &Series) -> Result<Series> {
    for (p, v) in s.iter() {
        if let Some(x) = v {
            if x <= 0.0 {
                return Err(Error::NonPositive {
                    period: p.to_string(),
                    value: x,
                    context: format!("log transform of `{}`", s.name),
                });
            }
        }
    }
    s.map(f64::ln)
}

/// A response series with its regressors, all sharing frequency and span.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub response: Series,
    pub regressors: Vec<Series>,
}

impl Dataset {
    pub fn new(response: Series, regressors: Vec<Series>) -> Result<Self> {
        for r in &regressors {
            if r.frequency() != response.frequency()
                || r.start() != response.start()
                || r.len() != response.len()
            {
                return Err(Error::Alignment(format!(
                    "regressor `{}` ({} {}..{}) not aligned with response `{}` ({} {}..{})",
                    r.name(),
                    r.frequency(),
                    r.start(),
                    r.end(),
                    response.name(),
                    response.frequency(),
                    response.start(),
                    response.end()
                )));
            }
        }
        Ok(Dataset { response, regressors })
    }

    pub fn n_obs(&self) -> usize {
        self.response.len()
    }
}

/// Truncates all series to the intersection of their spans; the first series
/// becomes the response. Errors on mixed frequencies or an empty
/// intersection.
pub fn align(series: &[Series]) -> Result<Dataset> {
    let first = series
        .first()
        .ok_or_else(|| Error::InvalidInput("align needs at least one series".into()))?;
    let freq = first.frequency();
    let mut start = first.start();
    let mut end = first.end();
    for s in &series[1..] {
        if s.frequency() != freq {
            return Err(Error::Frequency(format!(
                "cannot align `{}` ({}) with `{}` ({})",
                s.name(),
                s.frequency(),
                first.name(),
                freq
            )));
        }
        start = start.max(s.start());
        end = end.min(s.end());
    }
    if end < start {
        return Err(Error::Alignment("spans have empty intersection".into()));
    }
    let mut aligned = series.iter().map(|s| s.slice(start, end));
    let response = aligned.next().unwrap()?;
    let regressors = aligned.collect::<Result<Vec<_>>>()?;
    Dataset::new(response, regressors)
}

/// Parses the two-column `period,value` CSV format. Periods must be strictly
/// consecutive at the stated frequency; missing values are empty cells.
pub fn parse_csv(text: &str, frequency: Frequency) -> Result<Series> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::Csv { line: 1, msg: e.to_string() })?;
        if headers.len() != 2 || &headers[0] != "period" || &headers[1] != "value" {
            return Err(Error::Csv {
                line: 1,
                msg: format!("expected header `period,value`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
    }

    let mut start: Option<PeriodIndex> = None;
    let mut expected: Option<PeriodIndex> = None;
    let mut values: Vec<Option<f64>> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| Error::Csv { line, msg: e.to_string() })?;
        if record.len() != 2 {
            return Err(Error::Csv {
                line,
                msg: format!("expected 2 fields, got {}", record.len()),
            });
        }
        let period: PeriodIndex = record[0].parse()?;
        if period.frequency() != frequency {
            return Err(Error::Csv {
                line,
                msg: format!(
                    "period {period} is {} but the file was declared {frequency}",
                    period.frequency()
                ),
            });
        }
        match expected {
            None => start = Some(period),
            Some(exp) => {
                if period != exp {
                    let msg = if period <= values_last_period(start.unwrap(), &values) {
                        format!("period {period} is out of order or duplicated")
                    } else {
                        format!("gap in periods: expected {exp}, got {period}")
                    };
                    return Err(Error::Csv { line, msg });
                }
            }
        }
        expected = Some(period.next());
        let cell = &record[1];
        if cell.is_empty() {
            values.push(None);
        } else {
            let v: f64 = cell.parse().map_err(|_| Error::Csv {
                line,
                msg: format!("non-numeric value `{cell}`"),
            })?;
            values.push(Some(v));
        }
    }
    let start = start.ok_or(Error::Csv { line: 2, msg: "no data rows".into() })?;
    Series::new("", start, values)
}

fn values_last_period(start: PeriodIndex, values: &[Option<f64>]) -> PeriodIndex {
    start.offset(values.len().saturating_sub(1))
}

/// Emits the same CSV format accepted by [`parse_csv`]; values are written
/// in shortest round-trip decimal form, missing values as empty cells.
pub fn serialize_csv(s: &Series) -> String {
    let mut out = String::from("period,value\n");
    for (p, v) in s.iter() {
        match v {
            Some(x) => out.push_str(&format!("{p},{x}\n")),
            None => out.push_str(&format!("{p},\n")),
        }
    }
    out
}

/// Reads a series from a CSV file on disk.
pub fn read_csv_file(path: &std::path::Path, frequency: Frequency) -> Result<Series> {
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(parse_csv(&text, frequency)?.with_name(name))
}

/// Writes a series to a CSV file on disk.
pub fn write_csv_file(path: &std::path::Path, s: &Series) -> Result<()> {
    std::fs::write(path, serialize_csv(s))?;
    Ok(())
}
