//! Coefficient estimation by cumulative-curve matching, with plain OLS for
//! bias comparison, goodness-of-fit measures, break scanning and forecast
//! scoring.
//!
//! The estimator searches a deterministic coefficient grid per segment and
//! minimizes a cumulative-curve objective instead of least squares; when
//! both series carry measurement noise this avoids the attenuation bias of
//! regression slopes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::simple_regression;
use crate::model::{ModelError, Regressor, RegressorKind, Segment, SegmentedModel, SlopeTerm};
use crate::series::{align, cumulative, difference, Frequency, Period, Series, SeriesError};

/// Objective minimized between the observed and predicted cumulative curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Objective {
    /// Root-mean-square of the pointwise cumulative difference.
    CumRms,
    /// Largest absolute cumulative deviation, relative to the magnitude of
    /// the observed cumulative curve at the segment end.
    CumEndpointRel,
}

/// An inclusive coefficient range scanned at a fixed step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn new(min: f64, max: f64, step: f64) -> Self {
        GridSpec { min, max, step }
    }

    fn validate(&self) -> bool {
        self.min < self.max && self.step > 0.0 && self.step.is_finite()
    }

    /// Number of grid points (both endpoints included).
    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        !self.validate()
    }

    pub fn value(&self, index: usize) -> f64 {
        self.min + index as f64 * self.step
    }
}

/// Grid-search configuration for [`fit_cumulative`].
///
/// `breaks` lists the first period of each new segment; an empty list fits a
/// single segment. `coarsen` of 1 scans the full grid; a larger factor runs
/// a two-stage search (every `coarsen`-th point first, then the full
/// resolution within one coarse step of the winner) — the refinement factor
/// equals `coarsen`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub breaks: Vec<Period>,
    pub slope_grid: BTreeMap<RegressorKind, GridSpec>,
    pub intercept_grid: GridSpec,
    pub lag_grid: BTreeMap<RegressorKind, Vec<usize>>,
    pub objective: Objective,
    pub coarsen: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        let kinds =
            [RegressorKind::LfGrowth, RegressorKind::Unemployment, RegressorKind::CpiInflation];
        FitConfig {
            breaks: Vec::new(),
            slope_grid: kinds.iter().map(|&k| (k, GridSpec::new(-10.0, 10.0, 0.01))).collect(),
            intercept_grid: GridSpec::new(-0.2, 0.2, 0.001),
            lag_grid: kinds.iter().map(|&k| (k, vec![0, 1, 2, 3])).collect(),
            objective: Objective::CumRms,
            coarsen: 1,
        }
    }
}

/// A calibrated model with its fit diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub model: SegmentedModel,
    pub r2_dynamic: f64,
    pub r2_cumulative: f64,
    pub residual: Series,
    pub objective_value: f64,
}

/// Errors raised by the calibration operations.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum CalibrateError {
    #[error("segment {start}..{end} has {len} observations, need at least {min}")]
    SegmentTooShort { start: Period, end: Period, len: usize, min: usize },
    #[error("empty or degenerate grid for {what}")]
    EmptyGrid { what: String },
    #[error("no {kind} data at {period} (lag {lag})")]
    CoverageGap { kind: RegressorKind, period: Period, lag: usize },
    #[error("input for {kind} has frequency {got}, observed is {expected}")]
    FrequencyMismatch { kind: RegressorKind, expected: Frequency, got: Frequency },
    #[error("regressor has no variance")]
    DegenerateInput,
    #[error("need at least {needed} overlapping points, have {actual}")]
    InsufficientOverlap { needed: usize, actual: usize },
    #[error("observed series has zero variance over the common range")]
    ZeroVariance,
    #[error("breaks must be strictly increasing and inside the observed range: {period}")]
    BadBreak { period: Period },
    #[error("no input series supplied")]
    NoInputs,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

const MIN_SEGMENT_POINTS: usize = 4;

/// Data for one segment under one lag assignment: cumulative curves of the
/// observed series, each lagged regressor, and the intercept ramp, plus the
/// cross-moments that make the RMS objective O(1) per grid point.
struct Frame {
    n: usize,
    slots: Vec<Regressor>,
    obs_cum: Vec<f64>,
    x_cum: Vec<Vec<f64>>,
    ramp: Vec<f64>,
    soo: f64,
    sox: Vec<f64>,
    sor: f64,
    sxx: Vec<Vec<f64>>,
    sxr: Vec<f64>,
    srr: f64,
}

impl Frame {
    fn build(
        observed: &Series,
        inputs: &BTreeMap<RegressorKind, Series>,
        start: Period,
        end: Period,
        slots: &[Regressor],
    ) -> Result<Frame, CalibrateError> {
        let p = observed.frequency().periods_per_year() as f64;
        let n = (end.offset_from(start)? + 1) as usize;

        let mut obs_cum = Vec::with_capacity(n);
        let mut sum = 0.0;
        for i in 0..n {
            let period = start.offset(i as i64);
            let v = observed
                .at(period)
                .ok_or(SeriesError::MissingValue { period })?;
            sum += v / p;
            obs_cum.push(sum);
        }

        let mut x_cum = Vec::with_capacity(slots.len());
        for reg in slots {
            let series = inputs
                .get(&reg.kind)
                .ok_or(ModelError::MissingRegressor { kind: reg.kind })?;
            let mut cum = Vec::with_capacity(n);
            let mut sum = 0.0;
            for i in 0..n {
                let period = start.offset(i as i64);
                let v = series.at(period.offset(-(reg.lag as i64))).ok_or(
                    CalibrateError::CoverageGap { kind: reg.kind, period, lag: reg.lag },
                )?;
                sum += v / p;
                cum.push(sum);
            }
            x_cum.push(cum);
        }

        let ramp: Vec<f64> = (0..n).map(|i| (i + 1) as f64 / p).collect();

        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let k = slots.len();
        let soo = dot(&obs_cum, &obs_cum);
        let sox: Vec<f64> = (0..k).map(|j| dot(&obs_cum, &x_cum[j])).collect();
        let sor = dot(&obs_cum, &ramp);
        let mut sxx = vec![vec![0.0; k]; k];
        for j in 0..k {
            for l in j..k {
                sxx[j][l] = dot(&x_cum[j], &x_cum[l]);
                sxx[l][j] = sxx[j][l];
            }
        }
        let sxr: Vec<f64> = (0..k).map(|j| dot(&x_cum[j], &ramp)).collect();
        let srr = dot(&ramp, &ramp);

        Ok(Frame { n, slots: slots.to_vec(), obs_cum, x_cum, ramp, soo, sox, sor, sxx, sxr, srr })
    }

    /// RMS of the cumulative difference for the candidate coefficients,
    /// evaluated from the precomputed cross-moments.
    fn rms(&self, slopes: &[f64], intercept: f64) -> f64 {
        let k = slopes.len();
        let mut q = self.soo - 2.0 * intercept * self.sor + intercept * intercept * self.srr;
        for j in 0..k {
            q -= 2.0 * slopes[j] * self.sox[j];
            q += 2.0 * intercept * slopes[j] * self.sxr[j];
            for l in 0..k {
                q += slopes[j] * slopes[l] * self.sxx[j][l];
            }
        }
        (q.max(0.0) / self.n as f64).sqrt()
    }

    /// Largest cumulative deviation relative to the observed endpoint level.
    fn endpoint_rel(&self, slopes: &[f64], intercept: f64) -> f64 {
        let denom = self.obs_cum[self.n - 1].abs().max(1e-12);
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let mut pred = intercept * self.ramp[i];
            for (j, s) in slopes.iter().enumerate() {
                pred += s * self.x_cum[j][i];
            }
            worst = worst.max((pred - self.obs_cum[i]).abs());
        }
        worst / denom
    }

    fn objective(&self, objective: Objective, slopes: &[f64], intercept: f64) -> f64 {
        match objective {
            Objective::CumRms => self.rms(slopes, intercept),
            Objective::CumEndpointRel => self.endpoint_rel(slopes, intercept),
        }
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    objective: f64,
    slopes: Vec<f64>,
    intercept: f64,
    lags: Vec<usize>,
}

impl Candidate {
    /// Strict "better than" with the deterministic tie-breaking order:
    /// objective, then |slope| per regressor, then |intercept|, then lags.
    fn beats(&self, other: &Candidate) -> bool {
        match self.objective.total_cmp(&other.objective) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
        for (a, b) in self.slopes.iter().zip(&other.slopes) {
            match a.abs().total_cmp(&b.abs()) {
                std::cmp::Ordering::Less => return true,
                std::cmp::Ordering::Greater => return false,
                std::cmp::Ordering::Equal => {}
            }
        }
        match self.intercept.abs().total_cmp(&other.intercept.abs()) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
        self.lags < other.lags
    }
}

/// Index ranges scanned per dimension in one pass.
#[derive(Clone)]
struct ScanWindow {
    slope_lo: Vec<usize>,
    slope_hi: Vec<usize>,
    intercept_lo: usize,
    intercept_hi: usize,
    stride: usize,
}

fn scan_segment(
    frame: &Frame,
    objective: Objective,
    slope_grids: &[GridSpec],
    intercept_grid: &GridSpec,
    lags: &[usize],
    window: &ScanWindow,
    best: &mut Option<Candidate>,
) {
    let k = slope_grids.len();
    let mut idx: Vec<usize> = window.slope_lo.clone();
    let mut slopes: Vec<f64> =
        idx.iter().zip(slope_grids).map(|(&i, g)| g.value(i)).collect();
    loop {
        let mut ci = window.intercept_lo;
        while ci <= window.intercept_hi {
            let intercept = intercept_grid.value(ci);
            let obj = frame.objective(objective, &slopes, intercept);
            let cand = Candidate {
                objective: obj,
                slopes: slopes.clone(),
                intercept,
                lags: lags.to_vec(),
            };
            if best.as_ref().map_or(true, |b| cand.beats(b)) {
                *best = Some(cand);
            }
            ci += window.stride;
        }
        // Odometer advance over the slope dimensions.
        let mut dim = 0;
        loop {
            if dim == k {
                return;
            }
            let next = idx[dim] + window.stride;
            if next <= window.slope_hi[dim] {
                idx[dim] = next;
                slopes[dim] = slope_grids[dim].value(next);
                break;
            }
            idx[dim] = window.slope_lo[dim];
            slopes[dim] = slope_grids[dim].value(idx[dim]);
            dim += 1;
        }
    }
}

fn lag_combos(lag_lists: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut combos = vec![Vec::new()];
    for list in lag_lists {
        let mut next = Vec::with_capacity(combos.len() * list.len());
        for combo in &combos {
            for &lag in list {
                let mut c = combo.clone();
                c.push(lag);
                next.push(c);
            }
        }
        combos = next;
    }
    combos
}

/// Splits the observed range into the segments implied by `breaks`; each
/// break names the first period of a new segment.
fn segment_bounds(
    observed: &Series,
    breaks: &[Period],
) -> Result<Vec<(Period, Period)>, CalibrateError> {
    let mut bounds = Vec::with_capacity(breaks.len() + 1);
    let mut cursor = observed.start();
    for &b in breaks {
        let off = b.offset_from(cursor)?;
        if off < 1 || observed.end().offset_from(b)? < 0 {
            return Err(CalibrateError::BadBreak { period: b });
        }
        bounds.push((cursor, b.offset(-1)));
        cursor = b;
    }
    bounds.push((cursor, observed.end()));
    Ok(bounds)
}

fn fit_segment(
    observed: &Series,
    inputs: &BTreeMap<RegressorKind, Series>,
    cfg: &FitConfig,
    start: Period,
    end: Period,
) -> Result<(Candidate, usize), CalibrateError> {
    let kinds: Vec<RegressorKind> = inputs.keys().copied().collect();
    let n = (end.offset_from(start)? + 1) as usize;
    if n < MIN_SEGMENT_POINTS {
        return Err(CalibrateError::SegmentTooShort {
            start,
            end,
            len: n,
            min: MIN_SEGMENT_POINTS,
        });
    }

    let mut slope_grids = Vec::with_capacity(kinds.len());
    let mut lag_lists = Vec::with_capacity(kinds.len());
    for &kind in &kinds {
        let grid = cfg
            .slope_grid
            .get(&kind)
            .ok_or_else(|| CalibrateError::EmptyGrid { what: format!("slope for {kind}") })?;
        if grid.is_empty() {
            return Err(CalibrateError::EmptyGrid { what: format!("slope for {kind}") });
        }
        let lags = cfg
            .lag_grid
            .get(&kind)
            .filter(|l| !l.is_empty())
            .ok_or_else(|| CalibrateError::EmptyGrid { what: format!("lags for {kind}") })?;
        slope_grids.push(*grid);
        lag_lists.push(lags.clone());
    }
    if cfg.intercept_grid.is_empty() {
        return Err(CalibrateError::EmptyGrid { what: "intercept".to_string() });
    }

    let coarsen = cfg.coarsen.max(1);
    let full = ScanWindow {
        slope_lo: vec![0; kinds.len()],
        slope_hi: slope_grids.iter().map(|g| g.len() - 1).collect(),
        intercept_lo: 0,
        intercept_hi: cfg.intercept_grid.len() - 1,
        stride: 1,
    };

    let mut best: Option<Candidate> = None;
    for combo in lag_combos(&lag_lists) {
        let slots: Vec<Regressor> = kinds
            .iter()
            .zip(&combo)
            .map(|(&kind, &lag)| Regressor { kind, lag })
            .collect();
        let frame = Frame::build(observed, inputs, start, end, &slots)?;

        if coarsen == 1 {
            scan_segment(
                &frame,
                cfg.objective,
                &slope_grids,
                &cfg.intercept_grid,
                &combo,
                &full,
                &mut best,
            );
        } else {
            // Coarse pass over every coarsen-th point, then full resolution
            // within one coarse step of the winner.
            let mut coarse = full.clone();
            coarse.stride = coarsen;
            let mut stage: Option<Candidate> = None;
            scan_segment(
                &frame,
                cfg.objective,
                &slope_grids,
                &cfg.intercept_grid,
                &combo,
                &coarse,
                &mut stage,
            );
            if let Some(seed) = stage {
                let centers: Vec<usize> = seed
                    .slopes
                    .iter()
                    .zip(&slope_grids)
                    .map(|(&v, g)| ((v - g.min) / g.step).round() as usize)
                    .collect();
                let ci =
                    ((seed.intercept - cfg.intercept_grid.min) / cfg.intercept_grid.step).round()
                        as usize;
                let refine = ScanWindow {
                    slope_lo: centers.iter().map(|&c| c.saturating_sub(coarsen)).collect(),
                    slope_hi: centers
                        .iter()
                        .zip(&full.slope_hi)
                        .map(|(&c, &hi)| (c + coarsen).min(hi))
                        .collect(),
                    intercept_lo: ci.saturating_sub(coarsen),
                    intercept_hi: (ci + coarsen).min(full.intercept_hi),
                    stride: 1,
                };
                scan_segment(
                    &frame,
                    cfg.objective,
                    &slope_grids,
                    &cfg.intercept_grid,
                    &combo,
                    &refine,
                    &mut best,
                );
            }
        }
    }

    best.map(|c| (c, n)).ok_or(CalibrateError::EmptyGrid { what: "scan".to_string() })
}

/// Per-segment exhaustive grid search minimizing the configured cumulative
/// objective, assembling the winning coefficients into a [`SegmentedModel`]
/// with dynamic and cumulative R² computed over the full fitted range.
pub fn fit_cumulative(
    observed: &Series,
    inputs: &BTreeMap<RegressorKind, Series>,
    cfg: &FitConfig,
) -> Result<FitResult, CalibrateError> {
    if inputs.is_empty() {
        return Err(CalibrateError::NoInputs);
    }
    for (&kind, series) in inputs {
        if series.frequency() != observed.frequency() {
            return Err(CalibrateError::FrequencyMismatch {
                kind,
                expected: observed.frequency(),
                got: series.frequency(),
            });
        }
    }
    for pair in cfg.breaks.windows(2) {
        if pair[1].offset_from(pair[0])? < 1 {
            return Err(CalibrateError::BadBreak { period: pair[1] });
        }
    }

    let bounds = segment_bounds(observed, &cfg.breaks)?;
    let kinds: Vec<RegressorKind> = inputs.keys().copied().collect();

    let mut segments = Vec::with_capacity(bounds.len());
    let mut pooled_sq = 0.0;
    let mut pooled_n = 0usize;
    let mut worst = 0.0f64;
    for &(start, end) in &bounds {
        let (cand, n) = fit_segment(observed, inputs, cfg, start, end)?;
        pooled_sq += cand.objective * cand.objective * n as f64;
        pooled_n += n;
        worst = worst.max(cand.objective);
        let slopes: Vec<SlopeTerm> = kinds
            .iter()
            .zip(&cand.slopes)
            .zip(&cand.lags)
            .map(|((&kind, &value), &lag)| SlopeTerm { kind, lag, value })
            .collect();
        segments.push(Segment::new(start, end, cand.intercept, slopes)?);
    }

    let objective_value = match cfg.objective {
        Objective::CumRms => (pooled_sq / pooled_n as f64).sqrt(),
        Objective::CumEndpointRel => worst,
    };

    let model =
        SegmentedModel::new(observed.role().to_string(), observed.frequency(), segments)?;
    let predicted = crate::model::evaluate(&model, inputs)?;
    let (r2_dynamic, r2_cumulative) = goodness(observed, &predicted)?;
    let residual = difference(observed, &predicted)?;

    Ok(FitResult { model, r2_dynamic, r2_cumulative, residual, objective_value })
}

/// Re-evaluates the configured objective for an explicit model over the
/// observed data, using the same kernels as the fit scan. Exposed so grid
/// optimality can be checked point by point.
pub fn objective_value(
    observed: &Series,
    inputs: &BTreeMap<RegressorKind, Series>,
    model: &SegmentedModel,
    objective: Objective,
) -> Result<f64, CalibrateError> {
    let mut pooled_sq = 0.0;
    let mut pooled_n = 0usize;
    let mut worst = 0.0f64;
    for seg in &model.segments {
        let slots: Vec<Regressor> = seg.slopes.iter().map(|t| t.regressor()).collect();
        let slopes: Vec<f64> = seg.slopes.iter().map(|t| t.value).collect();
        let frame = Frame::build(observed, inputs, seg.start, seg.end, &slots)?;
        let obj = frame.objective(objective, &slopes, seg.intercept);
        pooled_sq += obj * obj * frame.n as f64;
        pooled_n += frame.n;
        worst = worst.max(obj);
    }
    Ok(match objective {
        Objective::CumRms => (pooled_sq / pooled_n as f64).sqrt(),
        Objective::CumEndpointRel => worst,
    })
}

/// Ordinary least squares of `observed` on `input` lagged by `lag` periods:
/// `(slope, intercept, r2)`. Kept for bias comparison against
/// [`fit_cumulative`] — with noise on the regressor the OLS slope shrinks
/// toward zero.
pub fn fit_ols(
    observed: &Series,
    input: &Series,
    lag: usize,
) -> Result<(f64, f64, f64), CalibrateError> {
    let (obs, x) = align(observed, input, lag as i64)?;
    let y = obs.dense_values()?;
    let xv = x.dense_values()?;
    if y.len() < 3 {
        return Err(CalibrateError::InsufficientOverlap { needed: 3, actual: y.len() });
    }
    simple_regression(&xv, &y).ok_or(CalibrateError::DegenerateInput)
}

/// R² on the raw series and on their cumulative curves over the common range.
pub fn goodness(observed: &Series, predicted: &Series) -> Result<(f64, f64), CalibrateError> {
    let (obs, pred) = align(observed, predicted, 0)?;
    if obs.len() < 3 {
        return Err(CalibrateError::InsufficientOverlap { needed: 3, actual: obs.len() });
    }
    let r2 = |o: &Series, p: &Series| -> Result<f64, CalibrateError> {
        let ov = o.dense_values()?;
        let pv = p.dense_values()?;
        let mean = ov.iter().sum::<f64>() / ov.len() as f64;
        let ss_tot: f64 = ov.iter().map(|v| (v - mean) * (v - mean)).sum();
        if ss_tot == 0.0 {
            return Err(CalibrateError::ZeroVariance);
        }
        let ss_res: f64 = ov.iter().zip(&pv).map(|(o, p)| (o - p) * (o - p)).sum();
        Ok(1.0 - ss_res / ss_tot)
    };
    let r2_dynamic = r2(&obs, &pred)?;
    let r2_cumulative = r2(&cumulative(&obs)?, &cumulative(&pred)?)?;
    Ok((r2_dynamic, r2_cumulative))
}

/// Fits each candidate break on its own and ranks them by objective value,
/// best first.
pub fn break_scan(
    observed: &Series,
    inputs: &BTreeMap<RegressorKind, Series>,
    candidates: &[Period],
    cfg: &FitConfig,
) -> Result<Vec<(Period, f64)>, CalibrateError> {
    let mut ranked = Vec::with_capacity(candidates.len());
    for &candidate in candidates {
        let mut one = cfg.clone();
        one.breaks = vec![candidate];
        let fit = fit_cumulative(observed, inputs, &one)?;
        ranked.push((candidate, fit.objective_value));
    }
    ranked.sort_by(|a, b| {
        a.1.total_cmp(&b.1).then_with(|| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(ranked)
}

/// Root-mean-square difference between observation and a prediction made
/// `horizon` periods ahead. The horizon is provenance the caller asserts;
/// the score is the RMS over the common range.
pub fn rmsfe(
    observed: &Series,
    predicted: &Series,
    _horizon: usize,
) -> Result<f64, CalibrateError> {
    let (obs, pred) = align(observed, predicted, 0)?;
    let o = obs.dense_values()?;
    let p = pred.dense_values()?;
    let ss: f64 = o.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / o.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Unit;
    use crate::sim;
    use rand::Rng;

    fn monthly_start() -> Period {
        Period::monthly(1990, 1).unwrap()
    }

    fn rate_series(start: Period, values: Vec<f64>, role: &str) -> Series {
        Series::from_values(start, values, Unit::RatePerYear, role).unwrap()
    }

    /// Generator used as the oracle: a persistent growth series plus the
    /// exact linear law, with optional observation noise on both sides.
    fn synthetic_pair(
        seed: u64,
        n: usize,
        slope: f64,
        intercept: f64,
        noise: f64,
    ) -> (Series, Series) {
        let mut rng = sim::seeded_rng(seed);
        let mut g = Vec::with_capacity(n);
        let mut x = 0.02;
        for _ in 0..n {
            x = 0.02 + 0.8 * (x - 0.02) + 0.004 * sim::standard_normal(&mut rng);
            g.push(x);
        }
        let ue: Vec<f64> = g.iter().map(|v| slope * v + intercept).collect();
        let g_obs: Vec<f64> =
            g.iter().map(|v| v + noise * sim::standard_normal(&mut rng)).collect();
        let ue_obs: Vec<f64> =
            ue.iter().map(|v| v + noise * sim::standard_normal(&mut rng)).collect();
        (
            rate_series(monthly_start(), ue_obs, "UE"),
            rate_series(monthly_start(), g_obs, "LF"),
        )
    }

    fn narrow_cfg() -> FitConfig {
        let mut cfg = FitConfig::default();
        cfg.slope_grid.insert(RegressorKind::LfGrowth, GridSpec::new(-4.0, 0.0, 0.01));
        cfg.intercept_grid = GridSpec::new(0.0, 0.2, 0.001);
        cfg.lag_grid.insert(RegressorKind::LfGrowth, vec![0]);
        cfg
    }

    fn lf_inputs(g: Series) -> BTreeMap<RegressorKind, Series> {
        [(RegressorKind::LfGrowth, g)].into_iter().collect()
    }

    #[test]
    fn noise_free_recovery_within_one_grid_step() {
        let (ue, g) = synthetic_pair(11, 120, -2.1, 0.098, 0.0);
        let fit = fit_cumulative(&ue, &lf_inputs(g), &narrow_cfg()).unwrap();
        let seg = &fit.model.segments[0];
        assert!((seg.slopes[0].value - (-2.1)).abs() <= 0.01 + 1e-9);
        assert!((seg.intercept - 0.098).abs() <= 0.001 + 1e-9);
        assert!(fit.r2_dynamic > 0.999);
        assert!(fit.r2_cumulative > 0.999);
    }

    #[test]
    fn noisy_recovery_stays_close() {
        for seed in [1u64, 2, 3] {
            let (ue, g) = synthetic_pair(seed, 300, -2.1, 0.098, 0.005);
            let fit = fit_cumulative(&ue, &lf_inputs(g), &narrow_cfg()).unwrap();
            let seg = &fit.model.segments[0];
            assert!(
                (seg.slopes[0].value - (-2.1)).abs() <= 0.1,
                "seed {seed}: slope {}",
                seg.slopes[0].value
            );
            assert!((seg.intercept - 0.098).abs() <= 0.005, "seed {seed}");
        }
    }

    #[test]
    fn two_segment_fit_recovers_intercept_jump() {
        let n = 160;
        let (ue_a, g) = synthetic_pair(5, n, -2.1, 0.13, 0.0);
        // Shift the intercept from period 80 onward.
        let values: Vec<f64> = ue_a
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v.unwrap() + if i >= 80 { -0.032 } else { 0.0 })
            .collect();
        let ue = rate_series(monthly_start(), values, "UE");
        let mut cfg = narrow_cfg();
        let break_at = monthly_start().offset(80);
        cfg.breaks = vec![break_at];
        let fit = fit_cumulative(&ue, &lf_inputs(g), &cfg).unwrap();
        assert_eq!(fit.model.segments.len(), 2);
        assert!((fit.model.segments[0].intercept - 0.13).abs() <= 0.002);
        assert!((fit.model.segments[1].intercept - 0.098).abs() <= 0.002);
        assert_eq!(fit.model.segments[1].start, break_at);
    }

    #[test]
    fn grid_optimality_by_exhaustive_reevaluation() {
        let (ue, g) = synthetic_pair(9, 60, -1.8, 0.05, 0.01);
        let mut cfg = FitConfig::default();
        cfg.slope_grid.insert(RegressorKind::LfGrowth, GridSpec::new(-3.0, -1.0, 0.1));
        cfg.intercept_grid = GridSpec::new(0.0, 0.1, 0.01);
        cfg.lag_grid.insert(RegressorKind::LfGrowth, vec![0]);
        let inputs = lf_inputs(g);
        let fit = fit_cumulative(&ue, &inputs, &cfg).unwrap();

        let slope_grid = cfg.slope_grid[&RegressorKind::LfGrowth];
        for si in 0..slope_grid.len() {
            for ii in 0..cfg.intercept_grid.len() {
                let model = SegmentedModel::new(
                    "UE",
                    Frequency::Monthly,
                    vec![Segment::new(
                        ue.start(),
                        ue.end(),
                        cfg.intercept_grid.value(ii),
                        vec![SlopeTerm {
                            kind: RegressorKind::LfGrowth,
                            lag: 0,
                            value: slope_grid.value(si),
                        }],
                    )
                    .unwrap()],
                )
                .unwrap();
                let obj = objective_value(&ue, &inputs, &model, cfg.objective).unwrap();
                assert!(
                    fit.objective_value <= obj,
                    "grid point ({si},{ii}) beats the fit: {} < {}",
                    obj,
                    fit.objective_value
                );
            }
        }
    }

    #[test]
    fn two_stage_search_matches_full_scan_here() {
        let (ue, g) = synthetic_pair(21, 200, -2.1, 0.098, 0.003);
        let inputs = lf_inputs(g);
        let full = fit_cumulative(&ue, &inputs, &narrow_cfg()).unwrap();
        let mut coarse_cfg = narrow_cfg();
        coarse_cfg.coarsen = 10;
        let coarse = fit_cumulative(&ue, &inputs, &coarse_cfg).unwrap();
        assert_eq!(
            full.model.segments[0].slopes[0].value.to_bits(),
            coarse.model.segments[0].slopes[0].value.to_bits()
        );
        assert_eq!(
            full.model.segments[0].intercept.to_bits(),
            coarse.model.segments[0].intercept.to_bits()
        );
    }

    #[test]
    fn fit_recovers_lag() {
        let mut rng = sim::seeded_rng(33);
        let n = 90;
        let g_raw: Vec<f64> = (0..n + 2)
            .map(|_| 0.02 + 0.01 * sim::standard_normal(&mut rng))
            .collect();
        // UE at t responds to growth two months earlier.
        let ue: Vec<f64> = (2..n + 2).map(|t| -2.1 * g_raw[t - 2] + 0.098).collect();
        let g = rate_series(monthly_start(), g_raw, "LF");
        let ue = rate_series(monthly_start().offset(2), ue, "UE");
        let mut cfg = narrow_cfg();
        cfg.lag_grid.insert(RegressorKind::LfGrowth, vec![0, 1, 2, 3]);
        let fit = fit_cumulative(&ue, &lf_inputs(g), &cfg).unwrap();
        assert_eq!(fit.model.segments[0].slopes[0].lag, 2);
        assert!((fit.model.segments[0].slopes[0].value - (-2.1)).abs() <= 0.01 + 1e-9);
    }

    #[test]
    fn segment_too_short_is_rejected() {
        let (ue, g) = synthetic_pair(2, 10, -2.0, 0.1, 0.0);
        let mut cfg = narrow_cfg();
        cfg.breaks = vec![monthly_start().offset(8)];
        assert!(matches!(
            fit_cumulative(&ue, &lf_inputs(g), &cfg),
            Err(CalibrateError::SegmentTooShort { .. })
        ));
    }

    #[test]
    fn degenerate_grid_is_rejected() {
        let (ue, g) = synthetic_pair(3, 20, -2.0, 0.1, 0.0);
        let mut cfg = narrow_cfg();
        cfg.intercept_grid = GridSpec::new(0.2, 0.0, 0.001);
        assert!(matches!(
            fit_cumulative(&ue, &lf_inputs(g), &cfg),
            Err(CalibrateError::EmptyGrid { .. })
        ));
    }

    #[test]
    fn coverage_gap_when_lagged_input_missing() {
        let (ue, g) = synthetic_pair(4, 40, -2.0, 0.1, 0.0);
        // Input starts at the same period as observed, so lag 2 has no data.
        let mut cfg = narrow_cfg();
        cfg.lag_grid.insert(RegressorKind::LfGrowth, vec![2]);
        assert!(matches!(
            fit_cumulative(&ue, &lf_inputs(g), &cfg),
            Err(CalibrateError::CoverageGap { .. })
        ));
    }

    #[test]
    fn ols_exact_fit() {
        let x = rate_series(monthly_start(), (0..50).map(|i| 0.01 * i as f64).collect(), "x");
        let y = rate_series(
            monthly_start(),
            (0..50).map(|i| 2.0 * 0.01 * i as f64 + 1.0).collect(),
            "y",
        );
        let (slope, intercept, r2) = fit_ols(&y, &x, 0).unwrap();
        assert!((slope - 2.0).abs() < 1e-10);
        assert!((intercept - 1.0).abs() < 1e-10);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ols_constant_input_is_degenerate() {
        let x = rate_series(monthly_start(), vec![0.02; 30], "x");
        let y = rate_series(monthly_start(), (0..30).map(|i| i as f64).collect(), "y");
        assert!(matches!(fit_ols(&y, &x, 0), Err(CalibrateError::DegenerateInput)));
    }

    #[test]
    fn ols_attenuates_under_regressor_noise() {
        let trials = 200;
        let mut below = 0;
        for seed in 0..trials {
            let (ue, g) = synthetic_pair(1000 + seed, 300, -2.1, 0.098, 0.005);
            let (slope, _, _) = fit_ols(&ue, &g, 0).unwrap();
            if slope.abs() < 2.1 {
                below += 1;
            }
        }
        assert!(below as f64 >= 0.95 * trials as f64, "attenuated in {below}/{trials}");
    }

    #[test]
    fn goodness_perfect_and_mean_predictor() {
        let o = rate_series(monthly_start(), vec![0.01, 0.03, 0.02, 0.05, 0.04], "o");
        let (d, c) = goodness(&o, &o).unwrap();
        assert_eq!(d, 1.0);
        assert_eq!(c, 1.0);
        let mean = 0.03;
        let m = rate_series(monthly_start(), vec![mean; 5], "p");
        let (d, _) = goodness(&o, &m).unwrap();
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn goodness_anticorrelated_is_negative() {
        let o = rate_series(monthly_start(), vec![1.0, -1.0, 1.0, -1.0], "o");
        let p = rate_series(monthly_start(), vec![-1.0, 1.0, -1.0, 1.0], "p");
        let (d, _) = goodness(&o, &p).unwrap();
        assert!(d < 0.0);
    }

    #[test]
    fn goodness_is_scale_aware() {
        let (ue, g) = synthetic_pair(8, 60, -2.1, 0.098, 0.002);
        let fit = fit_cumulative(&ue, &lf_inputs(g.clone()), &narrow_cfg()).unwrap();
        let predicted = crate::model::evaluate(&fit.model, &lf_inputs(g)).unwrap();
        let shifted = Series::from_values(
            predicted.start(),
            predicted.values().iter().map(|v| v.unwrap() + 0.01).collect(),
            Unit::RatePerYear,
            "p",
        )
        .unwrap();
        let (d0, _) = goodness(&ue, &predicted).unwrap();
        let (d1, _) = goodness(&ue, &shifted).unwrap();
        assert!((d0 - d1).abs() > 1e-6);
    }

    #[test]
    fn r2_cumulative_dominates_dynamic_on_noisy_regression_data() {
        for seed in [17u64, 18, 19] {
            let (ue, g) = synthetic_pair(seed, 240, -2.1, 0.098, 0.01);
            let fit = fit_cumulative(&ue, &lf_inputs(g), &narrow_cfg()).unwrap();
            assert!(
                fit.r2_cumulative >= fit.r2_dynamic,
                "seed {seed}: {} < {}",
                fit.r2_cumulative,
                fit.r2_dynamic
            );
        }
    }

    #[test]
    fn break_scan_ranks_true_break_first() {
        let mut hits = 0;
        let trials = 10;
        for seed in 0..trials {
            let n = 160;
            let (ue_a, g) = synthetic_pair(700 + seed, n, -2.1, 0.13, 0.002);
            let values: Vec<f64> = ue_a
                .values()
                .iter()
                .enumerate()
                .map(|(i, v)| v.unwrap() + if i >= 80 { 0.03 } else { 0.0 })
                .collect();
            let ue = rate_series(monthly_start(), values, "UE");
            let truth = monthly_start().offset(80);
            let candidates: Vec<Period> = (-2..=2).map(|d| truth.offset(d)).collect();
            let ranked = break_scan(&ue, &lf_inputs(g), &candidates, &narrow_cfg()).unwrap();
            if ranked[0].0 == truth {
                hits += 1;
            }
        }
        assert!(hits >= 9, "true break ranked first in {hits}/{trials}");
    }

    #[test]
    fn break_scan_flat_generator_is_indifferent() {
        let (ue, g) = synthetic_pair(55, 160, -2.1, 0.1, 0.0);
        let candidates: Vec<Period> =
            (-2..=2).map(|d| monthly_start().offset(80 + d)).collect();
        let ranked = break_scan(&ue, &lf_inputs(g), &candidates, &narrow_cfg()).unwrap();
        assert_eq!(ranked.len(), 5);
        // Noise-free data from a single regime: every candidate fits equally well.
        let best = ranked[0].1;
        let worst = ranked[ranked.len() - 1].1;
        assert!(worst <= best.max(1e-9) * 1.1 + 1e-12);
    }

    #[test]
    fn break_scan_single_candidate() {
        let (ue, g) = synthetic_pair(56, 40, -2.1, 0.1, 0.0);
        let ranked = break_scan(
            &ue,
            &lf_inputs(g),
            &[monthly_start().offset(20)],
            &narrow_cfg(),
        )
        .unwrap();
        assert_eq!(ranked.len(), 1);
    }

    #[test]
    fn rmsfe_cases() {
        let o = rate_series(monthly_start(), vec![0.05, 0.04, 0.06], "o");
        assert_eq!(rmsfe(&o, &o, 30).unwrap(), 0.0);

        let p = rate_series(
            monthly_start(),
            o.values().iter().map(|v| v.unwrap() + 0.008).collect(),
            "p",
        );
        assert!((rmsfe(&o, &p, 30).unwrap() - 0.008).abs() < 1e-12);

        let o2 = rate_series(monthly_start(), vec![0.01, -0.01], "o");
        let z = rate_series(monthly_start(), vec![0.0, 0.0], "p");
        assert!((rmsfe(&o2, &z, 1).unwrap() - 0.01).abs() < 1e-15);

        let far = rate_series(Period::monthly(2050, 1).unwrap(), vec![0.0], "p");
        assert!(matches!(
            rmsfe(&o, &far, 1),
            Err(CalibrateError::Series(SeriesError::EmptyOverlap))
        ));
    }

    #[test]
    fn fit_config_json_round_trip() {
        let cfg = FitConfig::default();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: FitConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
        // Partial documents fall back to defaults.
        let partial: FitConfig =
            serde_json::from_str(r#"{"breaks": ["1995"], "coarsen": 5}"#).unwrap();
        assert_eq!(partial.breaks, vec![Period::annual(1995)]);
        assert_eq!(partial.coarsen, 5);
        assert_eq!(partial.intercept_grid, FitConfig::default().intercept_grid);
    }

    #[test]
    fn fit_result_json_includes_residual() {
        let (ue, g) = synthetic_pair(77, 40, -2.1, 0.098, 0.001);
        let fit = fit_cumulative(&ue, &lf_inputs(g), &narrow_cfg()).unwrap();
        let json = serde_json::to_value(&fit).unwrap();
        assert!(json.get("model").is_some());
        assert!(json.get("objective_value").is_some());
        let residual = &json["residual"];
        assert_eq!(
            residual["values"].as_array().unwrap().len(),
            fit.residual.len()
        );
    }

    #[test]
    fn multi_regressor_fit_with_coarsening() {
        // CPI-style generalized form with two regressors.
        let mut rng = sim::seeded_rng(99);
        let n = 120;
        let g: Vec<f64> = (0..n).map(|_| 0.02 + 0.01 * sim::standard_normal(&mut rng)).collect();
        let ue: Vec<f64> = (0..n).map(|_| 0.07 + 0.02 * rng.gen::<f64>()).collect();
        let cpi: Vec<f64> =
            (0..n).map(|t| 3.9 * g[t] + 0.88 * ue[t] - 0.1).collect();
        let inputs: BTreeMap<RegressorKind, Series> = [
            (RegressorKind::LfGrowth, rate_series(monthly_start(), g, "LF")),
            (RegressorKind::Unemployment, rate_series(monthly_start(), ue, "UE")),
        ]
        .into_iter()
        .collect();
        let observed = rate_series(monthly_start(), cpi, "CPI");
        let mut cfg = FitConfig::default();
        cfg.slope_grid.insert(RegressorKind::LfGrowth, GridSpec::new(0.0, 10.0, 0.01));
        cfg.slope_grid.insert(RegressorKind::Unemployment, GridSpec::new(0.0, 2.0, 0.01));
        cfg.intercept_grid = GridSpec::new(-0.2, 0.0, 0.001);
        cfg.lag_grid.insert(RegressorKind::LfGrowth, vec![0]);
        cfg.lag_grid.insert(RegressorKind::Unemployment, vec![0]);
        cfg.coarsen = 10;
        let fit = fit_cumulative(&observed, &inputs, &cfg).unwrap();
        let seg = &fit.model.segments[0];
        let lf_slope = seg.slope_for(Regressor::contemporaneous(RegressorKind::LfGrowth)).unwrap();
        let ue_slope =
            seg.slope_for(Regressor::contemporaneous(RegressorKind::Unemployment)).unwrap();
        assert!((lf_slope - 3.9).abs() <= 0.05, "lf slope {lf_slope}");
        assert!((ue_slope - 0.88).abs() <= 0.05, "ue slope {ue_slope}");
        assert!((seg.intercept - (-0.1)).abs() <= 0.005, "intercept {}", seg.intercept);
    }

    #[test]
    fn endpoint_objective_also_recovers_truth() {
        let (ue, g) = synthetic_pair(101, 80, -2.1, 0.098, 0.0);
        let mut cfg = narrow_cfg();
        cfg.objective = Objective::CumEndpointRel;
        cfg.slope_grid.insert(RegressorKind::LfGrowth, GridSpec::new(-3.0, -1.0, 0.02));
        cfg.intercept_grid = GridSpec::new(0.05, 0.15, 0.002);
        let fit = fit_cumulative(&ue, &lf_inputs(g), &cfg).unwrap();
        let seg = &fit.model.segments[0];
        assert!((seg.slopes[0].value - (-2.1)).abs() <= 0.02 + 1e-9);
        assert!((seg.intercept - 0.098).abs() <= 0.002 + 1e-9);
    }
}
