//! Time-series container and the derived-series algebra the rest of the
//! toolkit consumes: growth rates, moving averages, cumulative sums and
//! lag alignment.
//!
//! Values are immutable after construction; every operation returns a new
//! [`Series`]. Missing observations are explicit (`None`) and are rejected
//! by the numeric kernels instead of being interpolated.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sampling frequency of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Frequency {
    Annual,
    Quarterly,
    Monthly,
}

impl Frequency {
    /// Observations per calendar year (1, 4 or 12).
    pub fn periods_per_year(self) -> usize {
        match self {
            Frequency::Annual => 1,
            Frequency::Quarterly => 4,
            Frequency::Monthly => 12,
        }
    }

    fn max_sub(self) -> u8 {
        self.periods_per_year() as u8
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Frequency::Annual => "ANNUAL",
            Frequency::Quarterly => "QUARTERLY",
            Frequency::Monthly => "MONTHLY",
        };
        f.write_str(s)
    }
}

/// Measurement unit of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Unit {
    /// Head counts (labor force levels). Non-negative.
    Persons,
    /// Annualized rates: inflation, unemployment, relative growth.
    RatePerYear,
    /// Dimensionless running sums of annualized rates.
    Index,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Unit::Persons => "PERSONS",
            Unit::RatePerYear => "RATE_PER_YEAR",
            Unit::Index => "INDEX",
        };
        f.write_str(s)
    }
}

/// Errors raised by series construction and the derived-series kernels.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SeriesError {
    #[error("sub-period {sub} out of range for {frequency} (expected 1..={max})")]
    InvalidSub { frequency: Frequency, sub: u8, max: u8 },
    #[error("cannot compare or align {left} and {right} periods")]
    CrossFrequency { left: Frequency, right: Frequency },
    #[error("cannot parse period from {text:?}")]
    PeriodParse { text: String },
    #[error("series must contain at least one value")]
    Empty,
    #[error("series too short: need {needed} values, have {actual}")]
    InsufficientLength { needed: usize, actual: usize },
    #[error("PERSONS value {value} at {period} is negative")]
    NegativePersons { period: Period, value: f64 },
    #[error("non-finite value at {period}")]
    NonFinite { period: Period },
    #[error("level at {period} is zero; growth rate undefined")]
    DivisionByZeroLevel { period: Period },
    #[error("missing value at {period} inside a differencing window")]
    MissingInWindow { period: Period },
    #[error("missing value at {period}")]
    MissingValue { period: Period },
    #[error("moving-average window {window} exceeds series length {length}")]
    WindowTooLarge { window: usize, length: usize },
    #[error("moving-average window must be at least 2, got {window}")]
    InvalidWindow { window: usize },
    #[error("frequency mismatch: {left} vs {right}")]
    FrequencyMismatch { left: Frequency, right: Frequency },
    #[error("series do not overlap after lag alignment")]
    EmptyOverlap,
}

/// A point on the regular sampling grid: a year plus a 1-based quarter or
/// month index (`sub` is always 1 for annual data).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Period {
    frequency: Frequency,
    year: i32,
    sub: u8,
}

impl Period {
    pub fn new(frequency: Frequency, year: i32, sub: u8) -> Result<Self, SeriesError> {
        let max = frequency.max_sub();
        if sub < 1 || sub > max {
            return Err(SeriesError::InvalidSub { frequency, sub, max });
        }
        Ok(Period { frequency, year, sub })
    }

    pub fn annual(year: i32) -> Self {
        Period { frequency: Frequency::Annual, year, sub: 1 }
    }

    pub fn quarterly(year: i32, quarter: u8) -> Result<Self, SeriesError> {
        Period::new(Frequency::Quarterly, year, quarter)
    }

    pub fn monthly(year: i32, month: u8) -> Result<Self, SeriesError> {
        Period::new(Frequency::Monthly, year, month)
    }

    pub fn frequency(self) -> Frequency {
        self.frequency
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn sub(self) -> u8 {
        self.sub
    }

    /// Position on the global grid of this frequency.
    fn index(self) -> i64 {
        self.year as i64 * self.frequency.periods_per_year() as i64 + (self.sub as i64 - 1)
    }

    /// The period `n` steps later (earlier for negative `n`).
    pub fn offset(self, n: i64) -> Period {
        let p = self.frequency.periods_per_year() as i64;
        let idx = self.index() + n;
        Period {
            frequency: self.frequency,
            year: idx.div_euclid(p) as i32,
            sub: (idx.rem_euclid(p) + 1) as u8,
        }
    }

    pub fn next(self) -> Period {
        self.offset(1)
    }

    /// Signed number of periods from `other` to `self`; errors across frequencies.
    pub fn offset_from(self, other: Period) -> Result<i64, SeriesError> {
        if self.frequency != other.frequency {
            return Err(SeriesError::CrossFrequency {
                left: self.frequency,
                right: other.frequency,
            });
        }
        Ok(self.index() - other.index())
    }
}

impl PartialOrd for Period {
    /// Total order within a frequency; `None` across frequencies.
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        if self.frequency != other.frequency {
            return None;
        }
        Some(self.index().cmp(&other.index()))
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.frequency {
            Frequency::Annual => write!(f, "{}", self.year),
            Frequency::Quarterly => write!(f, "{}-Q{}", self.year, self.sub),
            Frequency::Monthly => write!(f, "{}-{:02}", self.year, self.sub),
        }
    }
}

impl FromStr for Period {
    type Err = SeriesError;

    /// Parses `"1994"`, `"1994-Q2"` or `"1994-07"`.
    fn from_str(s: &str) -> Result<Self, SeriesError> {
        let parse_err = || SeriesError::PeriodParse { text: s.to_string() };
        let s = s.trim();
        match s.split_once('-') {
            None => {
                let year: i32 = s.parse().map_err(|_| parse_err())?;
                Ok(Period::annual(year))
            }
            Some((y, rest)) => {
                let year: i32 = y.parse().map_err(|_| parse_err())?;
                if let Some(q) = rest.strip_prefix(['Q', 'q']) {
                    let quarter: u8 = q.parse().map_err(|_| parse_err())?;
                    Period::quarterly(year, quarter).map_err(|_| parse_err())
                } else {
                    let month: u8 = rest.parse().map_err(|_| parse_err())?;
                    Period::monthly(year, month).map_err(|_| parse_err())
                }
            }
        }
    }
}

impl Serialize for Period {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Period {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// How a growth-rate series is formed from a level series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GrowthMethod {
    /// Period-over-period change, annualized by periods-per-year.
    Backward,
    /// Change against the same period of the previous year.
    YearOverYear,
}

/// Growth-rate recipe: differencing method plus optional smoothing of the
/// result (`smooth_window` of 0 means no smoothing; otherwise it must be >= 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowthSpec {
    pub method: GrowthMethod,
    #[serde(default)]
    pub smooth_window: usize,
}

impl GrowthSpec {
    pub fn new(method: GrowthMethod, smooth_window: usize) -> Self {
        GrowthSpec { method, smooth_window }
    }
}

/// A regularly sampled series: contiguous values from `start`, with missing
/// observations kept as explicit `None` markers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SeriesData", into = "SeriesData")]
pub struct Series {
    start: Period,
    values: Vec<Option<f64>>,
    unit: Unit,
    role: String,
}

/// Wire form of [`Series`]; conversion re-runs the constructor checks.
#[derive(Serialize, Deserialize)]
struct SeriesData {
    start: Period,
    values: Vec<Option<f64>>,
    unit: Unit,
    role: String,
}

impl TryFrom<SeriesData> for Series {
    type Error = SeriesError;

    fn try_from(d: SeriesData) -> Result<Self, SeriesError> {
        Series::new(d.start, d.values, d.unit, d.role)
    }
}

impl From<Series> for SeriesData {
    fn from(s: Series) -> SeriesData {
        SeriesData { start: s.start, values: s.values, unit: s.unit, role: s.role }
    }
}

impl Series {
    /// Builds a series, enforcing the container invariants: at least one
    /// value, finite numbers only, and non-negative PERSONS levels.
    pub fn new(
        start: Period,
        values: Vec<Option<f64>>,
        unit: Unit,
        role: impl Into<String>,
    ) -> Result<Self, SeriesError> {
        if values.is_empty() {
            return Err(SeriesError::Empty);
        }
        for (i, v) in values.iter().enumerate() {
            if let Some(x) = *v {
                if !x.is_finite() {
                    return Err(SeriesError::NonFinite { period: start.offset(i as i64) });
                }
                if unit == Unit::Persons && x < 0.0 {
                    return Err(SeriesError::NegativePersons {
                        period: start.offset(i as i64),
                        value: x,
                    });
                }
            }
        }
        Ok(Series { start, values, unit, role: role.into() })
    }

    /// Convenience constructor for fully observed data.
    pub fn from_values(
        start: Period,
        values: Vec<f64>,
        unit: Unit,
        role: impl Into<String>,
    ) -> Result<Self, SeriesError> {
        Series::new(start, values.into_iter().map(Some).collect(), unit, role)
    }

    pub fn frequency(&self) -> Frequency {
        self.start.frequency()
    }

    pub fn start(&self) -> Period {
        self.start
    }

    pub fn end(&self) -> Period {
        self.start.offset(self.values.len() as i64 - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        // The constructor rejects empty payloads.
        self.values.is_empty()
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn role(&self) -> &str {
        &self.role
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn period_at(&self, index: usize) -> Period {
        self.start.offset(index as i64)
    }

    /// Index of `period` within this series, if in range.
    pub fn index_of(&self, period: Period) -> Option<usize> {
        let off = period.offset_from(self.start).ok()?;
        if off < 0 || off >= self.values.len() as i64 {
            return None;
        }
        Some(off as usize)
    }

    /// Value at `period`: `None` if out of range or missing.
    pub fn at(&self, period: Period) -> Option<f64> {
        self.index_of(period).and_then(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Period, Option<f64>)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, v)| (self.start.offset(i as i64), *v))
    }

    /// Returns all values, erroring on the first missing one.
    pub fn dense_values(&self) -> Result<Vec<f64>, SeriesError> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| v.ok_or(SeriesError::MissingValue { period: self.period_at(i) }))
            .collect()
    }

    /// Sub-series over `[from, to]` (inclusive); both bounds must be in range.
    pub fn window(&self, from: Period, to: Period) -> Result<Series, SeriesError> {
        let i = self
            .index_of(from)
            .ok_or(SeriesError::MissingValue { period: from })?;
        let j = self
            .index_of(to)
            .ok_or(SeriesError::MissingValue { period: to })?;
        if j < i {
            return Err(SeriesError::EmptyOverlap);
        }
        Series::new(from, self.values[i..=j].to_vec(), self.unit, self.role.clone())
    }

    /// Copy of this series with a different role label.
    pub fn with_role(&self, role: impl Into<String>) -> Series {
        let mut out = self.clone();
        out.role = role.into();
        out
    }
}

/// Annualized relative growth of a level series.
///
/// BACKWARD forms `p * (x(t) - x(t-1)) / x(t-1)` with `p` periods per year;
/// YEAR_OVER_YEAR forms `(x(t) - x(t-p)) / x(t-p)`. The output starts after
/// the differencing span and optionally passes through [`moving_average`].
pub fn growth_rate(levels: &Series, spec: GrowthSpec) -> Result<Series, SeriesError> {
    let p = levels.frequency().periods_per_year();
    let span = match spec.method {
        GrowthMethod::Backward => 1,
        GrowthMethod::YearOverYear => p,
    };
    if levels.len() < span + 1 {
        return Err(SeriesError::InsufficientLength { needed: span + 1, actual: levels.len() });
    }
    let values = levels.values();
    let mut out = Vec::with_capacity(levels.len() - span);
    for t in span..levels.len() {
        let prev = values[t - span]
            .ok_or(SeriesError::MissingInWindow { period: levels.period_at(t - span) })?;
        let cur =
            values[t].ok_or(SeriesError::MissingInWindow { period: levels.period_at(t) })?;
        if prev == 0.0 {
            return Err(SeriesError::DivisionByZeroLevel { period: levels.period_at(t - span) });
        }
        let rate = match spec.method {
            GrowthMethod::Backward => p as f64 * (cur - prev) / prev,
            GrowthMethod::YearOverYear => (cur - prev) / prev,
        };
        out.push(Some(rate));
    }
    let series = Series::new(
        levels.start().offset(span as i64),
        out,
        Unit::RatePerYear,
        levels.role(),
    )?;
    if spec.smooth_window > 0 {
        moving_average(&series, spec.smooth_window)
    } else {
        Ok(series)
    }
}

/// Moving average: centered for odd windows (losing `(w-1)/2` points at each
/// end), trailing for even windows (losing `w-1` leading points).
pub fn moving_average(s: &Series, window: usize) -> Result<Series, SeriesError> {
    if window < 2 {
        return Err(SeriesError::InvalidWindow { window });
    }
    if window > s.len() {
        return Err(SeriesError::WindowTooLarge { window, length: s.len() });
    }
    let values = s.dense_values()?;
    let inv = 1.0 / window as f64;
    // Accumulate deviations from the window's first point; constant stretches
    // then average to their value exactly.
    let mean_of = |lo: usize| {
        let base = values[lo];
        let dev: f64 = values[lo..lo + window].iter().map(|v| v - base).sum();
        base + dev * inv
    };
    let out: Vec<Option<f64>> = (0..=values.len() - window).map(|lo| Some(mean_of(lo))).collect();
    // Window lo covers its center (odd) or its last point (even).
    let anchor = if window % 2 == 1 { (window - 1) / 2 } else { window - 1 };
    Series::new(s.start().offset(anchor as i64), out, s.unit(), s.role())
}

/// Running sum of annualized rates, accumulating `value / p` per period so a
/// constant rate `r` adds up to `r` per calendar year at any frequency.
pub fn cumulative(s: &Series) -> Result<Series, SeriesError> {
    let p = s.frequency().periods_per_year() as f64;
    let values = s.dense_values()?;
    let mut sum = 0.0;
    let out = values
        .iter()
        .map(|v| {
            sum += v / p;
            Some(sum)
        })
        .collect();
    Series::new(s.start(), out, Unit::Index, s.role())
}

/// Restricts `a` and `b` to their overlapping range after shifting `b`
/// forward by `lag_on_b` periods: `a(t)` is paired with `b(t - lag)`.
pub fn align(a: &Series, b: &Series, lag_on_b: i64) -> Result<(Series, Series), SeriesError> {
    if a.frequency() != b.frequency() {
        return Err(SeriesError::FrequencyMismatch { left: a.frequency(), right: b.frequency() });
    }
    let a_from = a.start().index();
    let a_to = a.end().index();
    let b_from = b.start().index() + lag_on_b;
    let b_to = b.end().index() + lag_on_b;
    let from = a_from.max(b_from);
    let to = a_to.min(b_to);
    if from > to {
        return Err(SeriesError::EmptyOverlap);
    }
    let from_p = a.start().offset(from - a_from);
    let to_p = a.start().offset(to - a_from);
    let a_win = a.window(from_p, to_p)?;
    let b_win = b.window(from_p.offset(-lag_on_b), to_p.offset(-lag_on_b))?;
    Ok((a_win, b_win))
}

/// Pointwise `a - b` over the lag-0 overlap; missing markers propagate.
pub fn difference(a: &Series, b: &Series) -> Result<Series, SeriesError> {
    let (aw, bw) = align(a, b, 0)?;
    let out = aw
        .values()
        .iter()
        .zip(bw.values())
        .map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) => Some(x - y),
            _ => None,
        })
        .collect();
    Series::new(aw.start(), out, aw.unit(), aw.role())
}
