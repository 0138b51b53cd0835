//! Piecewise-linear lagged model family: a target rate is a linear function
//! of lagged regressors, with coefficients that change at structural breaks.
//!
//! Models are immutable value objects; [`evaluate`] and [`forecast`] are pure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::{Frequency, Period, Series, SeriesError, Unit};

/// Input variable a model segment can load on.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RegressorKind {
    LfGrowth,
    Unemployment,
    CpiInflation,
}

impl std::fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RegressorKind::LfGrowth => "LF_GROWTH",
            RegressorKind::Unemployment => "UNEMPLOYMENT",
            RegressorKind::CpiInflation => "CPI_INFLATION",
        };
        f.write_str(s)
    }
}

/// A regressor reference: which input and how many periods it lags behind
/// the target. The lag is expressed in the owning model's frequency.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Regressor {
    pub kind: RegressorKind,
    pub lag: usize,
}

impl Regressor {
    pub fn new(kind: RegressorKind, lag: usize) -> Self {
        Regressor { kind, lag }
    }

    pub fn contemporaneous(kind: RegressorKind) -> Self {
        Regressor { kind, lag: 0 }
    }
}

/// One slope entry of a segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeTerm {
    pub kind: RegressorKind,
    pub lag: usize,
    pub value: f64,
}

impl SlopeTerm {
    pub fn regressor(&self) -> Regressor {
        Regressor { kind: self.kind, lag: self.lag }
    }
}

/// A time range with fixed coefficients: `target = intercept + Σ slope·input(t-lag)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Period,
    pub end: Period,
    pub intercept: f64,
    pub slopes: Vec<SlopeTerm>,
}

impl Segment {
    pub fn new(
        start: Period,
        end: Period,
        intercept: f64,
        mut slopes: Vec<SlopeTerm>,
    ) -> Result<Self, ModelError> {
        if start.partial_cmp(&end).map_or(true, |o| o == std::cmp::Ordering::Greater) {
            return Err(ModelError::InvalidSegmentBounds { start, end });
        }
        if slopes.is_empty() {
            return Err(ModelError::EmptySlopes);
        }
        slopes.sort_by_key(|t| (t.kind, t.lag));
        if slopes.windows(2).any(|w| w[0].kind == w[1].kind && w[0].lag == w[1].lag) {
            return Err(ModelError::DuplicateRegressor);
        }
        Ok(Segment { start, end, intercept, slopes })
    }

    /// Regressor kinds this segment loads on, sorted and deduplicated.
    pub fn kinds(&self) -> Vec<RegressorKind> {
        let mut kinds: Vec<RegressorKind> = self.slopes.iter().map(|t| t.kind).collect();
        kinds.dedup();
        kinds
    }

    pub fn slope_for(&self, reg: Regressor) -> Option<f64> {
        self.slopes
            .iter()
            .find(|t| t.kind == reg.kind && t.lag == reg.lag)
            .map(|t| t.value)
    }
}

/// A piecewise-linear lagged model: ordered, non-overlapping segments that
/// all load on the same set of regressor kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentedModel {
    pub target: String,
    pub frequency: Frequency,
    pub segments: Vec<Segment>,
}

/// Errors raised by model validation and evaluation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("segment start {start} is after end {end} (or frequencies differ)")]
    InvalidSegmentBounds { start: Period, end: Period },
    #[error("segment has no slope terms")]
    EmptySlopes,
    #[error("segment repeats a (kind, lag) regressor")]
    DuplicateRegressor,
    #[error("model has no segments")]
    NoSegments,
    #[error("segments overlap or are out of order near {period}")]
    OverlappingSegments { period: Period },
    #[error("segment range does not match model frequency {expected}")]
    SegmentFrequency { expected: Frequency },
    #[error("segments use different regressor kind sets")]
    InconsistentRegressors,
    #[error("no input series for regressor {kind}")]
    MissingRegressor { kind: RegressorKind },
    #[error("input for {kind} has frequency {got}, model is {expected}")]
    FrequencyMismatch { kind: RegressorKind, expected: Frequency, got: Frequency },
    #[error("no {kind} data at {period} (lag {lag})")]
    CoverageGap { kind: RegressorKind, period: Period, lag: usize },
    #[error(transparent)]
    Series(#[from] SeriesError),
}

impl SegmentedModel {
    pub fn new(
        target: impl Into<String>,
        frequency: Frequency,
        segments: Vec<Segment>,
    ) -> Result<Self, ModelError> {
        let model = SegmentedModel { target: target.into(), frequency, segments };
        model.validate()?;
        Ok(model)
    }

    /// Checks the structural invariants; used after deserializing as well.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.segments.is_empty() {
            return Err(ModelError::NoSegments);
        }
        for seg in &self.segments {
            if seg.start.frequency() != self.frequency || seg.end.frequency() != self.frequency {
                return Err(ModelError::SegmentFrequency { expected: self.frequency });
            }
            if seg.slopes.is_empty() {
                return Err(ModelError::EmptySlopes);
            }
        }
        for pair in self.segments.windows(2) {
            let gap = pair[1].start.offset_from(pair[0].end)?;
            if gap < 1 {
                return Err(ModelError::OverlappingSegments { period: pair[1].start });
            }
        }
        let first = self.segments[0].kinds();
        if self.segments.iter().any(|s| s.kinds() != first) {
            return Err(ModelError::InconsistentRegressors);
        }
        Ok(())
    }

    /// Regressor kinds used by every segment.
    pub fn kinds(&self) -> Vec<RegressorKind> {
        self.segments[0].kinds()
    }

    /// The segment containing `period`, if any.
    pub fn segment_at(&self, period: Period) -> Option<&Segment> {
        self.segments.iter().find(|s| {
            period.partial_cmp(&s.start).is_some_and(|o| o != std::cmp::Ordering::Less)
                && period.partial_cmp(&s.end).is_some_and(|o| o != std::cmp::Ordering::Greater)
        })
    }

    pub fn first_start(&self) -> Period {
        self.segments[0].start
    }

    pub fn last_end(&self) -> Period {
        self.segments[self.segments.len() - 1].end
    }
}

fn check_inputs(
    model: &SegmentedModel,
    inputs: &BTreeMap<RegressorKind, Series>,
) -> Result<(), ModelError> {
    for kind in model.kinds() {
        let s = inputs.get(&kind).ok_or(ModelError::MissingRegressor { kind })?;
        if s.frequency() != model.frequency {
            return Err(ModelError::FrequencyMismatch {
                kind,
                expected: model.frequency,
                got: s.frequency(),
            });
        }
    }
    Ok(())
}

fn eval_at(
    segment: &Segment,
    inputs: &BTreeMap<RegressorKind, Series>,
    period: Period,
) -> Result<f64, ModelError> {
    let mut value = segment.intercept;
    for term in &segment.slopes {
        let source = period.offset(-(term.lag as i64));
        let x = inputs[&term.kind].at(source).ok_or(ModelError::CoverageGap {
            kind: term.kind,
            period,
            lag: term.lag,
        })?;
        value += term.value * x;
    }
    Ok(value)
}

/// Evaluates the model over its segment ranges. Periods between segments
/// come back as missing markers; periods outside the overall span are
/// omitted. Every period inside a segment must be fully covered by the
/// lagged inputs.
pub fn evaluate(
    model: &SegmentedModel,
    inputs: &BTreeMap<RegressorKind, Series>,
) -> Result<Series, ModelError> {
    model.validate()?;
    check_inputs(model, inputs)?;
    let start = model.first_start();
    let len = model.last_end().offset_from(start)? + 1;
    let mut out = Vec::with_capacity(len as usize);
    for i in 0..len {
        let period = start.offset(i);
        match model.segment_at(period) {
            Some(seg) => out.push(Some(eval_at(seg, inputs, period)?)),
            None => out.push(None),
        }
    }
    Ok(Series::new(start, out, Unit::RatePerYear, model.target.clone())?)
}

/// Projection-driven prediction: the final segment extends indefinitely
/// forward, and exactly `horizon` periods are produced starting at the first
/// projected period the model can serve. `Ok(None)` for a zero horizon.
pub fn forecast(
    model: &SegmentedModel,
    projections: &BTreeMap<RegressorKind, Series>,
    horizon: usize,
) -> Result<Option<Series>, ModelError> {
    model.validate()?;
    check_inputs(model, projections)?;
    if horizon == 0 {
        return Ok(None);
    }
    // Range every lagged regressor can serve.
    let mut lo = model.first_start();
    let mut hi: Option<Period> = None;
    for seg in &model.segments {
        for term in &seg.slopes {
            let s = &projections[&term.kind];
            let from = s.start().offset(term.lag as i64);
            let to = s.end().offset(term.lag as i64);
            if lo.offset_from(from)? < 0 {
                lo = from;
            }
            hi = Some(match hi {
                None => to,
                Some(h) if to.offset_from(h)? < 0 => to,
                Some(h) => h,
            });
        }
    }
    let hi = hi.expect("validated model has at least one slope term");
    let available = hi.offset_from(lo)? + 1;
    if available < horizon as i64 {
        return Err(ModelError::CoverageGap {
            kind: model.kinds()[0],
            period: lo.offset(available.max(0)),
            lag: 0,
        });
    }
    let mut out = Vec::with_capacity(horizon);
    for i in 0..horizon as i64 {
        let period = lo.offset(i);
        let seg = match model.segment_at(period) {
            Some(seg) => seg,
            // Beyond the last segment the final coefficients keep applying;
            // before the first segment there is no model to apply.
            None if period.partial_cmp(&model.last_end())
                == Some(std::cmp::Ordering::Greater) =>
            {
                &model.segments[model.segments.len() - 1]
            }
            None => {
                out.push(None);
                continue;
            }
        };
        out.push(Some(eval_at(seg, projections, period)?));
    }
    Ok(Some(Series::new(lo, out, Unit::RatePerYear, model.target.clone())?))
}

fn single_regressor_segment(
    start: Period,
    end: Period,
    kind: RegressorKind,
    slope: f64,
    intercept: f64,
) -> Segment {
    Segment::new(start, end, intercept, vec![SlopeTerm { kind, lag: 0, value: slope }])
        .expect("static segment")
}

/// The fitted Australian model family shipped with the toolkit.
///
/// All presets are contemporaneous (lag 0). Annual UE and DGDP models use
/// the 1994/1995 policy break and the 1984/1985 definitional break; the
/// generalized CPI model keeps 1995 in its middle segment, reading its
/// boundary inequalities literally.
pub fn australian_presets() -> BTreeMap<String, SegmentedModel> {
    use RegressorKind::*;
    let annual = |y: i32| Period::annual(y);
    let monthly = |y: i32, m: u8| Period::monthly(y, m).expect("static period");
    let quarterly = |y: i32, q: u8| Period::quarterly(y, q).expect("static period");

    let mut presets = BTreeMap::new();

    presets.insert(
        "phillips-annual".to_string(),
        SegmentedModel::new(
            "UE",
            Frequency::Annual,
            vec![
                single_regressor_segment(annual(1974), annual(1994), CpiInflation, -0.47, 0.112),
                single_regressor_segment(annual(1995), annual(2009), CpiInflation, -1.5, 0.105),
            ],
        )
        .expect("static model"),
    );

    presets.insert(
        "ue-annual".to_string(),
        SegmentedModel::new(
            "UE",
            Frequency::Annual,
            vec![
                single_regressor_segment(annual(1970), annual(1994), LfGrowth, -2.1, 0.13),
                single_regressor_segment(annual(1995), annual(2009), LfGrowth, -2.1, 0.098),
            ],
        )
        .expect("static model"),
    );

    presets.insert(
        "ue-monthly".to_string(),
        SegmentedModel::new(
            "UE",
            Frequency::Monthly,
            vec![
                single_regressor_segment(
                    monthly(1978, 1),
                    monthly(1994, 12),
                    LfGrowth,
                    -1.77,
                    0.124,
                ),
                single_regressor_segment(
                    monthly(1995, 1),
                    monthly(2010, 12),
                    LfGrowth,
                    -2.1,
                    0.0977,
                ),
            ],
        )
        .expect("static model"),
    );

    presets.insert(
        "dgdp-annual".to_string(),
        SegmentedModel::new(
            "DGDP",
            Frequency::Annual,
            vec![
                single_regressor_segment(annual(1979), annual(1984), LfGrowth, 7.8, -0.024),
                single_regressor_segment(annual(1985), annual(2009), LfGrowth, 4.2, -0.042),
            ],
        )
        .expect("static model"),
    );

    presets.insert(
        "dgdp-quarterly".to_string(),
        SegmentedModel::new(
            "DGDP",
            Frequency::Quarterly,
            vec![
                single_regressor_segment(
                    quarterly(1980, 1),
                    quarterly(1984, 4),
                    LfGrowth,
                    6.5,
                    -0.021,
                ),
                single_regressor_segment(
                    quarterly(1985, 1),
                    quarterly(2010, 3),
                    LfGrowth,
                    3.3,
                    -0.026,
                ),
            ],
        )
        .expect("static model"),
    );

    let cpi_segment = |start: i32, end: i32, lf: f64, ue: f64| {
        Segment::new(
            annual(start),
            annual(end),
            -0.1,
            vec![
                SlopeTerm { kind: LfGrowth, lag: 0, value: lf },
                SlopeTerm { kind: Unemployment, lag: 0, value: ue },
            ],
        )
        .expect("static segment")
    };
    presets.insert(
        "cpi-generalized".to_string(),
        SegmentedModel::new(
            "CPI",
            Frequency::Annual,
            vec![
                cpi_segment(1974, 1984, 8.3, 0.97),
                cpi_segment(1985, 1995, 3.9, 0.97),
                cpi_segment(1996, 2009, 3.9, 0.88),
            ],
        )
        .expect("static model"),
    );

    presets
}
