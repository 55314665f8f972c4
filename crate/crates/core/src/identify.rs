//! Model identification from cumulative reply series.
//!
//! Three FOPDT estimators are provided so that results can be cross-checked:
//!
//! - **two-point**: times at which the response crosses 28.3 % and 63.2 % of
//!   the gain pin down T and L analytically;
//! - **area**: the area above the response equals `K(L + T)` and the area under
//!   it up to `L + T` equals `K·T/e`;
//! - **least squares**: grid search over L with golden-section refinement, T by
//!   golden section, K either read from the steady state or solved linearly.
//!
//! The logistic fit linearizes `n(t)` through the logit transform.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{SeriesKind, SeriesPoint, StepResponseSeries};
use crate::optimize::golden_section;
use crate::response::{FopdtModel, LogisticModel, ModelError, ResponseModel};

/// Lower crossing level of the two-point method, as a fraction of K.
pub const TWO_POINT_LOW: f64 = 0.283;
/// Upper crossing level of the two-point method, as a fraction of K.
pub const TWO_POINT_HIGH: f64 = 0.632;
/// Replies needed before any model is fitted.
pub const MIN_REPLIES: f64 = 3.0;

const LS_GRID_STEPS: usize = 1000;
const LS_MIN_TIME_CONSTANT: f64 = 1e-3;
const LS_MAX_TIME_CONSTANT_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("series has not reached steady state; fit the gain instead")]
    RequiresSteadyState,
    #[error("insufficient data: {replies} replies, at least {required} needed")]
    InsufficientData { replies: f64, required: f64 },
    #[error("degenerate crossings: t1 = {t1}, t2 = {t2}")]
    DegenerateCrossing { t1: f64, t2: f64 },
    #[error("every point was clamped during logistic normalization")]
    DegenerateNormalization,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    TwoPoint,
    Area,
    LeastSquares,
    Logistic,
}

impl FitMethod {
    pub const FOPDT: [FitMethod; 3] = [FitMethod::TwoPoint, FitMethod::Area, FitMethod::LeastSquares];

    pub fn as_str(self) -> &'static str {
        match self {
            FitMethod::TwoPoint => "two_point",
            FitMethod::Area => "area",
            FitMethod::LeastSquares => "least_squares",
            FitMethod::Logistic => "logistic",
        }
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FitMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "two_point" => Ok(FitMethod::TwoPoint),
            "area" => Ok(FitMethod::Area),
            "least_squares" | "ls" => Ok(FitMethod::LeastSquares),
            "logistic" => Ok(FitMethod::Logistic),
            other => Err(format!("unknown fit method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainSource {
    SteadyStateReading,
    Fitted,
}

pub type FittedModel = ResponseModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub t: f64,
    /// Observed minus fitted.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: FittedModel,
    pub method: FitMethod,
    pub rmse: f64,
    pub residuals: Vec<Residual>,
    pub gain_source: GainSource,
}

impl FitReport {
    fn new(model: FittedModel, method: FitMethod, gain_source: GainSource, series: &StepResponseSeries) -> Self {
        let residuals: Vec<Residual> = evaluation_points(series)
            .map(|p| Residual {
                t: p.t,
                residual: p.y - model.evaluate(p.t),
            })
            .collect();
        FitReport {
            rmse: rmse(&residuals),
            model,
            method,
            residuals,
            gain_source,
        }
    }

    pub fn fopdt(&self) -> Option<&FopdtModel> {
        match &self.model {
            FittedModel::Fopdt(m) => Some(m),
            FittedModel::Logistic(_) => None,
        }
    }

    pub fn logistic(&self) -> Option<&LogisticModel> {
        match &self.model {
            FittedModel::Logistic(m) => Some(m),
            FittedModel::Fopdt(_) => None,
        }
    }

    /// Flat JSON summary. FOPDT reports carry `K`, `T`, `L` and the printed
    /// transfer function; logistic reports carry `K`, `b`, `n0`.
    pub fn summary_json(&self, decimals: usize) -> serde_json::Value {
        let mut obj = serde_json::Map::new();
        obj.insert("method".into(), self.method.as_str().into());
        match &self.model {
            FittedModel::Fopdt(m) => {
                obj.insert("K".into(), m.gain().into());
                obj.insert("T".into(), m.time_constant().into());
                obj.insert("L".into(), m.dead_time().into());
            }
            FittedModel::Logistic(m) => {
                obj.insert("K".into(), m.scale().into());
                obj.insert("b".into(), m.rate().into());
                obj.insert("n0".into(), m.initial_fraction().into());
            }
        }
        obj.insert("time_unit".into(), self.model.time_unit().as_str().into());
        obj.insert("rmse".into(), self.rmse.into());
        if let FittedModel::Fopdt(m) = &self.model {
            obj.insert("transfer_function".into(), m.transfer_function(decimals).text.into());
        }
        obj.insert(
            "gain_source".into(),
            serde_json::to_value(self.gain_source).expect("enum serializes"),
        );
        serde_json::Value::Object(obj)
    }
}

pub fn rmse(residuals: &[Residual]) -> f64 {
    if residuals.is_empty() {
        return 0.0;
    }
    let sum: f64 = residuals.iter().map(|r| r.residual * r.residual).sum();
    (sum / residuals.len() as f64).sqrt()
}

/// Observation points plus the terminal point at the end of the observation
/// window when the window extends past the last point.
fn evaluation_points(series: &StepResponseSeries) -> impl Iterator<Item = SeriesPoint> + '_ {
    let terminal = (series.observed_until() > series.last_change()).then(|| SeriesPoint {
        t: series.observed_until(),
        y: series.final_count(),
    });
    series.points().iter().copied().chain(terminal)
}

/// The steady-state reply count, which is the gain of a unit-step response.
pub fn estimate_gain(series: &StepResponseSeries) -> Result<f64, FitError> {
    if !series.is_complete() {
        return Err(FitError::RequiresSteadyState);
    }
    Ok(series.final_count())
}

fn require_replies(series: &StepResponseSeries) -> Result<(), FitError> {
    if series.final_count() < MIN_REPLIES {
        return Err(FitError::InsufficientData {
            replies: series.final_count(),
            required: MIN_REPLIES,
        });
    }
    Ok(())
}

/// First time the series reaches `level`, interpolating linearly between
/// consecutive distinct time points.
pub fn first_crossing(series: &StepResponseSeries, level: f64) -> Option<f64> {
    let pts = series.points();
    let mut prev: Option<SeriesPoint> = None;
    let mut i = 0;
    while i < pts.len() {
        // Collapse stacked points at one time to the highest count.
        let mut cur = pts[i];
        while i + 1 < pts.len() && pts[i + 1].t == cur.t {
            i += 1;
            cur = pts[i];
        }
        if cur.y >= level {
            return Some(match prev {
                Some(p) if cur.y > p.y => p.t + (level - p.y) / (cur.y - p.y) * (cur.t - p.t),
                _ => cur.t,
            });
        }
        prev = Some(cur);
        i += 1;
    }
    None
}

/// Two-point identification from the 28.3 % and 63.2 % crossings.
pub fn two_point_fit(series: &StepResponseSeries) -> Result<FitReport, FitError> {
    let gain = estimate_gain(series)?;
    require_replies(series)?;
    let cross = |frac: f64| {
        first_crossing(series, frac * gain)
            .ok_or_else(|| FitError::NumericalFailure(format!("series never reaches {frac} of K")))
    };
    let t1 = cross(TWO_POINT_LOW)?;
    let t2 = cross(TWO_POINT_HIGH)?;
    if t2 <= t1 {
        return Err(FitError::DegenerateCrossing { t1, t2 });
    }
    // y(t) = K(1 - e^{-(t-L)/T}) reaches fraction p at t = L + T·ln(1/(1-p)).
    let lag_low = (1.0 / (1.0 - TWO_POINT_LOW)).ln();
    let lag_high = (1.0 / (1.0 - TWO_POINT_HIGH)).ln();
    let time_constant = (t2 - t1) / (lag_high - lag_low);
    let dead_time = (t2 - time_constant * lag_high).max(0.0);
    let model = FopdtModel::new(gain, time_constant, dead_time, series.time_unit())?;
    Ok(FitReport::new(
        FittedModel::Fopdt(model),
        FitMethod::TwoPoint,
        GainSource::SteadyStateReading,
        series,
    ))
}

/// Integral of the series' interpolant over `[0, upto]`; flat beyond the
/// last point.
pub fn integral_to(series: &StepResponseSeries, upto: f64) -> f64 {
    let pts = series.points();
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.t >= upto {
            return total;
        }
        let end = b.t.min(upto);
        let width = end - a.t;
        total += match series.kind() {
            SeriesKind::Events => a.y * width,
            SeriesKind::Sampled if b.t > a.t => {
                let y_end = a.y + (b.y - a.y) * width / (b.t - a.t);
                0.5 * (a.y + y_end) * width
            }
            SeriesKind::Sampled => 0.0,
        };
    }
    if let Some(last) = pts.last() {
        if upto > last.t {
            total += last.y * (upto - last.t);
        }
    }
    total
}

/// Area (average residence time) identification.
pub fn area_fit(series: &StepResponseSeries) -> Result<FitReport, FitError> {
    let gain = estimate_gain(series)?;
    require_replies(series)?;
    let t_end = series.observed_until();
    // Area between K and the response; zero after steady state.
    let area_above = gain * t_end - integral_to(series, t_end);
    let residence = area_above / gain;
    let area_below = integral_to(series, residence);
    let time_constant = std::f64::consts::E * area_below / gain;
    if !(time_constant > 0.0 && time_constant.is_finite()) {
        return Err(FitError::NumericalFailure(format!(
            "area method produced time constant {time_constant}"
        )));
    }
    let dead_time = (residence - time_constant).max(0.0);
    let model = FopdtModel::new(gain, time_constant, dead_time, series.time_unit())?;
    Ok(FitReport::new(
        FittedModel::Fopdt(model),
        FitMethod::Area,
        GainSource::SteadyStateReading,
        series,
    ))
}

/// Sum-of-squares objective over a fixed set of observation points.
struct LeastSquaresProblem {
    t: Vec<f64>,
    y: Vec<f64>,
    /// Prefix sums of y², so points inside the dead time cost nothing.
    y2_prefix: Vec<f64>,
    gain: Option<f64>,
}

impl LeastSquaresProblem {
    fn new(series: &StepResponseSeries, gain: Option<f64>) -> Self {
        let (t, y): (Vec<f64>, Vec<f64>) = evaluation_points(series).map(|p| (p.t, p.y)).unzip();
        let mut y2_prefix = Vec::with_capacity(y.len() + 1);
        y2_prefix.push(0.0);
        for v in &y {
            y2_prefix.push(y2_prefix.last().unwrap() + v * v);
        }
        LeastSquaresProblem { t, y, y2_prefix, gain }
    }

    /// Returns `(sse, gain)` for the given dead time and time constant.
    fn evaluate(&self, dead_time: f64, time_constant: f64) -> (f64, f64) {
        let start = self.t.partition_point(|&t| t <= dead_time);
        let before = self.y2_prefix[start];
        let inv_tc = 1.0 / time_constant;
        match self.gain {
            Some(k) => {
                let mut sse = before;
                for (&t, &y) in self.t[start..].iter().zip(&self.y[start..]) {
                    let r = y + k * (-(t - dead_time) * inv_tc).exp_m1();
                    sse += r * r;
                }
                (sse, k)
            }
            None => {
                let (mut syy, mut syp, mut spp) = (0.0, 0.0, 0.0);
                for (&t, &y) in self.t[start..].iter().zip(&self.y[start..]) {
                    let phi = -(-(t - dead_time) * inv_tc).exp_m1();
                    syy += y * y;
                    syp += y * phi;
                    spp += phi * phi;
                }
                if spp <= 0.0 {
                    return (before + syy, 0.0);
                }
                let k = (syp / spp).max(0.0);
                // Direct residual sum, not syy - syp²/spp, to avoid cancellation.
                let sse_tail = syy - 2.0 * k * syp + k * k * spp;
                (before + sse_tail.max(0.0), k)
            }
        }
    }

    /// Best time constant for a fixed dead time, searched on a log scale.
    fn best_time_constant(&self, dead_time: f64, t_max: f64, log_tol: f64) -> (f64, f64) {
        let found = golden_section(
            |log_tc| self.evaluate(dead_time, log_tc.exp()).0,
            LS_MIN_TIME_CONSTANT.ln(),
            t_max.ln(),
            log_tol,
        );
        (found.x.exp(), found.value)
    }
}

/// Least-squares FOPDT fit. With `fit_gain` the gain is solved in closed form
/// for each (T, L); otherwise it is the steady-state count.
pub fn least_squares_fit(series: &StepResponseSeries, fit_gain: bool) -> Result<FitReport, FitError> {
    require_replies(series)?;
    let gain = if fit_gain {
        None
    } else {
        Some(estimate_gain(series)?)
    };
    let t_end = series.observed_until();
    if t_end <= 0.0 {
        return Err(FitError::InsufficientData {
            replies: series.final_count(),
            required: MIN_REPLIES,
        });
    }
    let problem = LeastSquaresProblem::new(series, gain);
    let t_max = LS_MAX_TIME_CONSTANT_FACTOR * t_end;
    let step = t_end / LS_GRID_STEPS as f64;

    // Coarse scan: dead time on the grid, time constant to 0.1 %.
    let mut best = (0usize, f64::INFINITY);
    for j in 0..=LS_GRID_STEPS {
        let (_, sse) = problem.best_time_constant(j as f64 * step, t_max, 1e-3);
        if sse < best.1 {
            best = (j, sse);
        }
    }
    if !best.1.is_finite() {
        return Err(FitError::NumericalFailure("objective is not finite on the grid".into()));
    }

    // Refine the dead time within two grid cells of the best node.
    let lo = (best.0 as f64 - 2.0) * step;
    let hi = (best.0 as f64 + 2.0) * step;
    let refined = golden_section(
        |dead| problem.best_time_constant(dead, t_max, 1e-8).1,
        lo.max(0.0),
        hi.min(t_end),
        1e-9 * t_end,
    );
    let dead_time = refined.x;
    let (time_constant, sse) = problem.best_time_constant(dead_time, t_max, 1e-12);
    let (_, fitted_gain) = problem.evaluate(dead_time, time_constant);
    if !sse.is_finite() || !time_constant.is_finite() {
        return Err(FitError::NumericalFailure(format!("objective {sse} at T = {time_constant}")));
    }

    let model = FopdtModel::new(fitted_gain, time_constant, dead_time, series.time_unit())?;
    Ok(FitReport::new(
        FittedModel::Fopdt(model),
        FitMethod::LeastSquares,
        if fit_gain {
            GainSource::Fitted
        } else {
            GainSource::SteadyStateReading
        },
        series,
    ))
}

/// Logistic fit by ordinary least squares on `logit(y/K)`.
///
/// Normalized values are clamped to `[ε, 1 - ε]` with `ε = 1/(2K)`; points
/// that hit the clamp carry no slope information and are left out of the
/// regression (they still enter the residuals).
pub fn logistic_fit(series: &StepResponseSeries) -> Result<FitReport, FitError> {
    let scale = estimate_gain(series)?;
    require_replies(series)?;
    let eps = 1.0 / (2.0 * scale);
    let samples: Vec<(f64, f64)> = series
        .points()
        .iter()
        .filter_map(|p| {
            let n = p.y / scale;
            (eps..=1.0 - eps)
                .contains(&n)
                .then(|| (p.t, (n / (1.0 - n)).ln()))
        })
        .collect();
    if samples.is_empty() {
        return Err(FitError::DegenerateNormalization);
    }
    let count = samples.len() as f64;
    let mean_t = samples.iter().map(|s| s.0).sum::<f64>() / count;
    let mean_z = samples.iter().map(|s| s.1).sum::<f64>() / count;
    let (mut stt, mut stz) = (0.0, 0.0);
    for &(t, z) in &samples {
        stt += (t - mean_t) * (t - mean_t);
        stz += (t - mean_t) * (z - mean_z);
    }
    if stt <= 0.0 {
        return Err(FitError::DegenerateNormalization);
    }
    let rate = stz / stt;
    let intercept = mean_z - rate * mean_t;
    let initial_fraction = 1.0 / (1.0 + (-intercept).exp());
    let model = LogisticModel::new(scale, rate, initial_fraction, series.time_unit())?;
    Ok(FitReport::new(
        FittedModel::Logistic(model),
        FitMethod::Logistic,
        GainSource::SteadyStateReading,
        series,
    ))
}

/// Dispatches to a method. Least squares reads the gain from complete series
/// and fits it on truncated ones.
pub fn fit(series: &StepResponseSeries, method: FitMethod) -> Result<FitReport, FitError> {
    match method {
        FitMethod::TwoPoint => two_point_fit(series),
        FitMethod::Area => area_fit(series),
        FitMethod::LeastSquares => least_squares_fit(series, !series.is_complete()),
        FitMethod::Logistic => logistic_fit(series),
    }
}

/// `L + T`.
pub fn characteristic_time(model: &FopdtModel) -> f64 {
    model.characteristic_time()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub t: f64,
    pub value: f64,
    pub rounded: i64,
}

/// Expected cumulative reply count at `t`, also rounded to a whole count.
pub fn predict_count_at(model: &FopdtModel, t: f64) -> Prediction {
    let value = model.step_response(t);
    Prediction {
        t,
        value,
        rounded: value.round() as i64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::SeriesKind;
    use crate::units::TimeUnit;
    use approx::assert_relative_eq;

    fn m(k: f64, t: f64, l: f64) -> FopdtModel {
        FopdtModel::hours(k, t, l).unwrap()
    }

    /// Noiseless samples of `model` on a uniform grid, built here rather than
    /// through the simulator so the fit checks stay independent of it.
    fn dense(model: &FopdtModel, step: f64, horizon: f64) -> StepResponseSeries {
        let n = (horizon / step).round() as usize;
        let points = (0..=n)
            .map(|i| {
                let t = i as f64 * step;
                SeriesPoint { t, y: model.step_response(t) }
            })
            .collect();
        StepResponseSeries::new(model.time_unit(), points, SeriesKind::Sampled, horizon, true).unwrap()
    }

    fn fixture_series(model: &FopdtModel) -> StepResponseSeries {
        dense(model, 0.02, model.dead_time() + 25.0 * model.time_constant())
    }

    fn assert_recovers(found: &FopdtModel, truth: &FopdtModel, tol: f64) {
        assert_relative_eq!(found.gain(), truth.gain(), max_relative = tol);
        assert_relative_eq!(found.time_constant(), truth.time_constant(), max_relative = tol);
        if truth.dead_time() == 0.0 {
            assert!(found.dead_time().abs() <= tol, "{found:?}");
        } else {
            assert_relative_eq!(found.dead_time(), truth.dead_time(), max_relative = tol);
        }
    }

    fn staircase(times: &[f64], observed_until: f64, complete: bool) -> StepResponseSeries {
        let mut points = vec![SeriesPoint { t: 0.0, y: 0.0 }];
        points.extend(times.iter().enumerate().map(|(i, &t)| SeriesPoint { t, y: (i + 1) as f64 }));
        StepResponseSeries::new(TimeUnit::Hour, points, SeriesKind::Events, observed_until, complete).unwrap()
    }

    #[test]
    fn gain_reading() {
        let times: Vec<f64> = (1..=23).map(|i| i as f64 * 0.7).collect();
        assert_eq!(estimate_gain(&staircase(&times, 100.0, true)).unwrap(), 23.0);
        let times: Vec<f64> = (1..=27).map(|i| i as f64).collect();
        assert_eq!(estimate_gain(&staircase(&times, 200.0, true)).unwrap(), 27.0);
        assert_eq!(estimate_gain(&staircase(&[], 100.0, true)).unwrap(), 0.0);
        assert_eq!(
            estimate_gain(&staircase(&times, 30.0, false)),
            Err(FitError::RequiresSteadyState)
        );
    }

    #[test]
    fn two_point_crossings_on_motivation_model() {
        let truth = m(27.0, 5.0, 1.0);
        let series = dense(&truth, 0.01, 60.0);
        let t1 = first_crossing(&series, TWO_POINT_LOW * series.final_count()).unwrap();
        let t2 = first_crossing(&series, TWO_POINT_HIGH * series.final_count()).unwrap();
        // Closed-form inversion: t = L + T·ln(1/(1-p)).
        assert!((t1 - (1.0 + 5.0 * (1.0f64 / 0.717).ln())).abs() < 1e-3);
        assert!((t1 - 2.663).abs() < 1e-3);
        assert!((t2 - 6.0).abs() < 1e-2);
        let fit = two_point_fit(&series).unwrap();
        assert_recovers(fit.fopdt().unwrap(), &truth, 1e-3);
    }

    #[test]
    fn two_point_no_delay_and_caption_model() {
        let truth = m(12.0, 3.0, 0.0);
        let fit = two_point_fit(&fixture_series(&truth)).unwrap();
        assert!(fit.fopdt().unwrap().dead_time() <= 1e-3);
        let truth = m(16.0, 2.5, 2.5);
        let fit = two_point_fit(&fixture_series(&truth)).unwrap();
        assert_recovers(fit.fopdt().unwrap(), &truth, 1e-3);
    }

    #[test]
    fn two_point_errors() {
        assert!(matches!(
            two_point_fit(&staircase(&[1.0, 2.0], 100.0, true)),
            Err(FitError::InsufficientData { .. })
        ));
        // Every reply stacked on the initial post: both crossings land at t = 0.
        let series = staircase(&[0.0, 0.0, 0.0, 0.0], 100.0, true);
        assert!(matches!(two_point_fit(&series), Err(FitError::DegenerateCrossing { .. })));
    }

    #[test]
    fn staircase_crossing_interpolates_between_replies() {
        let series = staircase(&[1.0, 2.0, 4.0], 10.0, true);
        assert_eq!(first_crossing(&series, 2.5), Some(3.0));
        assert_eq!(first_crossing(&series, 0.5), Some(0.5));
        assert_eq!(first_crossing(&series, 4.0), None);
    }

    #[test]
    fn area_closed_form_integrals() {
        let truth = m(27.0, 5.0, 1.0);
        let series = dense(&truth, 0.01, 80.0);
        let area_above = 27.0 * 80.0 - integral_to(&series, 80.0);
        assert_relative_eq!(area_above, 162.0, max_relative = 1e-5);
        let area_below = integral_to(&series, 6.0);
        assert_relative_eq!(area_below, 135.0 / std::f64::consts::E, max_relative = 1e-5);
        let fit = area_fit(&series).unwrap();
        assert_recovers(fit.fopdt().unwrap(), &truth, 1e-3);
    }

    #[test]
    fn area_identity_over_grid() {
        for (k, tc, l) in [(5.0, 0.5, 0.1), (40.0, 9.0, 3.0), (3.0, 1.0, 7.0)] {
            let truth = m(k, tc, l);
            let series = dense(&truth, tc / 100.0, l + 25.0 * tc);
            let t_end = series.observed_until();
            let above = k * t_end - integral_to(&series, t_end);
            assert_relative_eq!(above / k, l + tc, max_relative = 1e-4);
        }
    }

    #[test]
    fn area_errors() {
        assert!(matches!(
            area_fit(&staircase(&[], 100.0, true)),
            Err(FitError::InsufficientData { .. })
        ));
        assert!(matches!(
            area_fit(&staircase(&[1.0, 2.0, 3.0], 4.0, false)),
            Err(FitError::RequiresSteadyState)
        ));
    }

    #[test]
    fn event_integral_uses_rectangles() {
        let series = staircase(&[1.0, 3.0], 5.0, true);
        assert_eq!(integral_to(&series, 5.0), 0.0 * 1.0 + 1.0 * 2.0 + 2.0 * 2.0);
        assert_eq!(integral_to(&series, 2.0), 1.0);
    }

    #[test]
    fn least_squares_long_delay() {
        let truth = m(17.0, 2.5, 13.1);
        let fit = least_squares_fit(&fixture_series(&truth), false).unwrap();
        assert_recovers(fit.fopdt().unwrap(), &truth, 1e-3);
        assert_eq!(fit.gain_source, GainSource::SteadyStateReading);
    }

    #[test]
    fn least_squares_fitted_gain_on_truncated_series() {
        let truth = m(23.0, 5.5, 0.5);
        let mut series = dense(&truth, 0.05, 15.0);
        series.set_complete(false);
        let fit = least_squares_fit(&series, true).unwrap();
        assert_eq!(fit.gain_source, GainSource::Fitted);
        assert_recovers(fit.fopdt().unwrap(), &truth, 1e-4);
        assert_eq!(least_squares_fit(&series, false).unwrap_err(), FitError::RequiresSteadyState);
    }

    #[test]
    fn least_squares_self_fit_residuals_within_one_count() {
        let times: Vec<f64> = (1..=27)
            .map(|j| {
                // Time at which the expected count reaches j - 1/2.
                let frac = (j as f64 - 0.5) / 27.0;
                1.0 + 5.0 * (1.0 / (1.0 - frac)).ln()
            })
            .collect();
        let series = staircase(&times, 120.0, true);
        let fit = least_squares_fit(&series, false).unwrap();
        assert!(fit.residuals.iter().all(|r| r.residual.abs() <= 1.0), "{:?}", fit.residuals);
    }

    #[test]
    fn rmse_is_recomputable() {
        let truth = m(16.0, 1.5, 0.3);
        let series = fixture_series(&truth);
        for method in [FitMethod::TwoPoint, FitMethod::Area, FitMethod::LeastSquares] {
            let report = fit(&series, method).unwrap();
            let again = rmse(&report.residuals);
            assert!((again - report.rmse).abs() <= 1e-12 * report.rmse.max(f64::MIN_POSITIVE));
            assert!(report.rmse >= 0.0);
        }
    }

    #[test]
    fn count_scale_equivariance() {
        let series = fixture_series(&m(9.0, 2.0, 1.0));
        let scaled = series.scale_counts(3.0);
        for method in [FitMethod::TwoPoint, FitMethod::Area] {
            let a = *fit(&series, method).unwrap().fopdt().unwrap();
            let b = *fit(&scaled, method).unwrap().fopdt().unwrap();
            assert_relative_eq!(b.gain(), 3.0 * a.gain(), max_relative = 1e-12);
            assert_relative_eq!(b.time_constant(), a.time_constant(), max_relative = 1e-10);
            assert_relative_eq!(b.dead_time(), a.dead_time(), max_relative = 1e-10);
        }
        let mut trunc = series.clone();
        trunc.set_complete(false);
        let a = *least_squares_fit(&trunc, true).unwrap().fopdt().unwrap();
        let b = *least_squares_fit(&trunc.scale_counts(3.0), true).unwrap().fopdt().unwrap();
        assert_relative_eq!(b.time_constant(), a.time_constant(), max_relative = 1e-6);
        assert_relative_eq!(b.dead_time(), a.dead_time(), max_relative = 1e-6);
        assert_relative_eq!(b.gain(), 3.0 * a.gain(), max_relative = 1e-6);
    }

    #[test]
    fn time_unit_equivariance() {
        let series = fixture_series(&m(16.0, 2.5, 2.5));
        let days = series.to_unit(TimeUnit::Day);
        for method in FitMethod::FOPDT {
            let h = *fit(&series, method).unwrap().fopdt().unwrap();
            let d = *fit(&days, method).unwrap().fopdt().unwrap();
            assert_eq!(d.time_unit(), TimeUnit::Day);
            assert_relative_eq!(d.gain(), h.gain(), max_relative = 1e-12);
            assert_relative_eq!(d.time_constant(), h.time_constant() / 24.0, max_relative = 1e-6);
            assert_relative_eq!(d.dead_time(), h.dead_time() / 24.0, max_relative = 1e-6);
        }
    }

    #[test]
    fn methods_agree_on_noiseless_data() {
        let series = fixture_series(&m(36.0, 2.5, 1.5));
        let fits: Vec<FopdtModel> = FitMethod::FOPDT
            .iter()
            .map(|&method| *fit(&series, method).unwrap().fopdt().unwrap())
            .collect();
        for pair in fits.windows(2) {
            assert_recovers(&pair[0], &pair[1], 1e-3);
        }
    }

    fn logistic_series(scale: f64, rate: f64, n0: f64, times: &[f64], extra: Option<(f64, f64)>) -> StepResponseSeries {
        let model = LogisticModel::new(scale, rate, n0, TimeUnit::Hour).unwrap();
        let mut points: Vec<SeriesPoint> = times.iter().map(|&t| SeriesPoint { t, y: model.value(t) }).collect();
        if let Some((t, y)) = extra {
            points.push(SeriesPoint { t, y });
        }
        StepResponseSeries::new(TimeUnit::Hour, points, SeriesKind::Sampled, 0.0, true).unwrap()
    }

    #[test]
    fn logistic_exact_recovery() {
        // A large scale keeps the clamp 1/(2K) from touching interior samples;
        // the terminal point at K sits on the clamp and is excluded.
        let scale = 1e6;
        let times: Vec<f64> = (0..=24).map(|i| i as f64 * 0.5).collect();
        let series = logistic_series(scale, 1.0, 0.1, &times, Some((40.0, scale)));
        let report = logistic_fit(&series).unwrap();
        let model = report.logistic().unwrap();
        assert!((model.rate() - 1.0).abs() < 1e-6, "{model:?}");
        assert!((model.initial_fraction() - 0.1).abs() < 1e-6);

        let times: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let series = logistic_series(scale, 0.5, 0.05, &times, Some((60.0, scale)));
        let model = *logistic_fit(&series).unwrap().logistic().unwrap();
        assert!((model.rate() - 0.5).abs() < 1e-6);
        assert!((model.initial_fraction() - 0.05).abs() < 1e-6);
    }

    #[test]
    fn logistic_flat_half() {
        let points = vec![
            SeriesPoint { t: 0.0, y: 5.0 },
            SeriesPoint { t: 1.0, y: 5.0 },
            SeriesPoint { t: 2.0, y: 5.0 },
            SeriesPoint { t: 3.0, y: 10.0 },
        ];
        let series = StepResponseSeries::new(TimeUnit::Hour, points, SeriesKind::Events, 3.0, true).unwrap();
        let model = *logistic_fit(&series).unwrap().logistic().unwrap();
        assert_eq!(model.rate(), 0.0);
        assert!((model.initial_fraction() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn logistic_all_clamped() {
        let points = vec![SeriesPoint { t: 0.0, y: 0.0 }, SeriesPoint { t: 1.0, y: 4.0 }];
        let series = StepResponseSeries::new(TimeUnit::Hour, points, SeriesKind::Events, 9.0, true).unwrap();
        assert_eq!(logistic_fit(&series).unwrap_err(), FitError::DegenerateNormalization);
    }

    #[test]
    fn characteristic_times_and_predictions() {
        assert_eq!(characteristic_time(&m(27.0, 5.0, 1.0)), 6.0);
        assert!((characteristic_time(&m(16.0, 1.5, 0.3)) - 1.8).abs() < 1e-15);
        assert_eq!(characteristic_time(&m(4.0, 2.0, 0.0)), 2.0);

        let p = predict_count_at(&m(27.0, 5.0, 1.0), 6.0);
        assert!((p.value - 17.07).abs() < 5e-3);
        assert_eq!(p.rounded, 17);
        assert_eq!(predict_count_at(&m(27.0, 5.0, 1.0), 0.0).value, 0.0);
        let p = predict_count_at(&m(23.0, 5.5, 0.5), 1e4);
        assert_eq!(p.rounded, 23);
        assert!((p.value - 23.0).abs() < 1e-9);
    }

    #[test]
    fn summary_json_shape() {
        let report = two_point_fit(&fixture_series(&m(16.0, 2.5, 2.5))).unwrap();
        let json = report.summary_json(1);
        assert_eq!(json["method"], "two_point");
        assert_eq!(json["transfer_function"], "16.0·e^{-2.5s}/(2.5s+1)");
        assert_eq!(json["time_unit"], "hour");
        for key in ["K", "T", "L", "rmse"] {
            assert!(json[key].is_number(), "{key}");
        }
    }

    #[test]
    fn method_names() {
        assert_eq!("two-point".parse::<FitMethod>().unwrap(), FitMethod::TwoPoint);
        assert_eq!("least_squares".parse::<FitMethod>().unwrap(), FitMethod::LeastSquares);
        assert!("newton".parse::<FitMethod>().is_err());
    }
}
