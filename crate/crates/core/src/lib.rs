//! Models of price inflation and unemployment as piecewise-linear, lagged
//! functions of labor-force growth, calibrated by matching cumulative curves
//! and validated with unit-root and cointegration tests.

pub mod calibrate;
mod linalg;
pub mod model;
pub mod series;
pub mod sim;

pub use calibrate::{CalibrateError, FitConfig, FitResult, GridSpec, Objective};
pub use model::{ModelError, Regressor, RegressorKind, Segment, SegmentedModel, SlopeTerm};
pub use series::{Frequency, GrowthMethod, GrowthSpec, Period, Series, SeriesError, Unit};
