//! Closed-form FOPDT and logistic responses.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::TimeUnit;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("gain K must be finite and nonnegative, got {0}")]
    Gain(f64),
    #[error("time constant T must be finite and positive, got {0}")]
    TimeConstant(f64),
    #[error("dead time L must be finite and nonnegative, got {0}")]
    DeadTime(f64),
    #[error("growth rate b must be finite, got {0}")]
    Rate(f64),
    #[error("initial fraction n0 must lie in (0, 1), got {0}")]
    InitialFraction(f64),
    #[error("malformed transfer function `{0}`")]
    TransferFunction(String),
}

/// First order plus dead time: `K·e^{-Ls}/(Ts+1)` driven by a unit step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFopdt", into = "RawFopdt")]
pub struct FopdtModel {
    gain: f64,
    time_constant: f64,
    dead_time: f64,
    time_unit: TimeUnit,
}

#[derive(Serialize, Deserialize)]
struct RawFopdt {
    #[serde(rename = "K")]
    gain: f64,
    #[serde(rename = "T")]
    time_constant: f64,
    #[serde(rename = "L")]
    dead_time: f64,
    #[serde(default)]
    time_unit: TimeUnit,
}

impl TryFrom<RawFopdt> for FopdtModel {
    type Error = ModelError;

    fn try_from(raw: RawFopdt) -> Result<Self, Self::Error> {
        FopdtModel::new(raw.gain, raw.time_constant, raw.dead_time, raw.time_unit)
    }
}

impl From<FopdtModel> for RawFopdt {
    fn from(m: FopdtModel) -> Self {
        RawFopdt {
            gain: m.gain,
            time_constant: m.time_constant,
            dead_time: m.dead_time,
            time_unit: m.time_unit,
        }
    }
}

impl FopdtModel {
    pub fn new(gain: f64, time_constant: f64, dead_time: f64, time_unit: TimeUnit) -> Result<Self, ModelError> {
        if !(gain.is_finite() && gain >= 0.0) {
            return Err(ModelError::Gain(gain));
        }
        if !(time_constant.is_finite() && time_constant > 0.0) {
            return Err(ModelError::TimeConstant(time_constant));
        }
        if !(dead_time.is_finite() && dead_time >= 0.0) {
            return Err(ModelError::DeadTime(dead_time));
        }
        Ok(FopdtModel {
            gain,
            time_constant,
            dead_time,
            time_unit,
        })
    }

    /// Shorthand for an hour-based model.
    pub fn hours(gain: f64, time_constant: f64, dead_time: f64) -> Result<Self, ModelError> {
        Self::new(gain, time_constant, dead_time, TimeUnit::Hour)
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn time_constant(&self) -> f64 {
        self.time_constant
    }

    pub fn dead_time(&self) -> f64 {
        self.dead_time
    }

    pub fn time_unit(&self) -> TimeUnit {
        self.time_unit
    }

    /// Expected cumulative reply count at `t`. Zero up to and including `L`.
    pub fn step_response(&self, t: f64) -> f64 {
        if t <= self.dead_time {
            return 0.0;
        }
        -self.gain * (-(t - self.dead_time) / self.time_constant).exp_m1()
    }

    /// Expected posting rate `dy/dt`, in replies per time unit.
    pub fn rate(&self, t: f64) -> f64 {
        if t < self.dead_time {
            return 0.0;
        }
        self.gain / self.time_constant * (-(t - self.dead_time) / self.time_constant).exp()
    }

    /// `L + T`, where the response reaches `1 - 1/e` (about 63 %) of `K`.
    pub fn characteristic_time(&self) -> f64 {
        self.dead_time + self.time_constant
    }

    /// Same dynamics with T and L expressed in `unit`.
    pub fn in_unit(&self, unit: TimeUnit) -> Self {
        FopdtModel {
            gain: self.gain,
            time_constant: self.time_unit.convert(self.time_constant, unit),
            dead_time: self.time_unit.convert(self.dead_time, unit),
            time_unit: unit,
        }
    }

    pub fn transfer_function(&self, decimals: usize) -> TransferFunctionDisplay {
        format_transfer_function(self, decimals)
    }
}

/// Logistic growth `K·n(t)` with `n' = b·n·(1 - n)` and `n(0) = n0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLogistic", into = "RawLogistic")]
pub struct LogisticModel {
    scale: f64,
    rate: f64,
    initial_fraction: f64,
    time_unit: TimeUnit,
}

#[derive(Serialize, Deserialize)]
struct RawLogistic {
    #[serde(rename = "K")]
    scale: f64,
    b: f64,
    n0: f64,
    #[serde(default)]
    time_unit: TimeUnit,
}

impl TryFrom<RawLogistic> for LogisticModel {
    type Error = ModelError;

    fn try_from(raw: RawLogistic) -> Result<Self, Self::Error> {
        LogisticModel::new(raw.scale, raw.b, raw.n0, raw.time_unit)
    }
}

impl From<LogisticModel> for RawLogistic {
    fn from(m: LogisticModel) -> Self {
        RawLogistic {
            scale: m.scale,
            b: m.rate,
            n0: m.initial_fraction,
            time_unit: m.time_unit,
        }
    }
}

impl LogisticModel {
    pub fn new(scale: f64, rate: f64, initial_fraction: f64, time_unit: TimeUnit) -> Result<Self, ModelError> {
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(ModelError::Gain(scale));
        }
        if !rate.is_finite() {
            return Err(ModelError::Rate(rate));
        }
        if !(initial_fraction > 0.0 && initial_fraction < 1.0) {
            return Err(ModelError::InitialFraction(initial_fraction));
        }
        Ok(LogisticModel {
            scale,
            rate,
            initial_fraction,
            time_unit,
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn initial_fraction(&self) -> f64 {
        self.initial_fraction
    }

    pub fn time_unit(&self) -> TimeUnit {
        self.time_unit
    }

    /// Normalized population `n(t)`.
    pub fn fraction(&self, t: f64) -> f64 {
        // n0·e^{bt} / (1 + n0(e^{bt} - 1)) rewritten so large |bt| cannot overflow
        // into inf/inf.
        let odds_against = (1.0 - self.initial_fraction) / self.initial_fraction;
        1.0 / (1.0 + odds_against * (-self.rate * t).exp())
    }

    /// Expected cumulative count `K·n(t)`.
    pub fn value(&self, t: f64) -> f64 {
        self.scale * self.fraction(t)
    }

    /// `K·b·n(t)·(1 - n(t))`, the time derivative of [`Self::value`].
    pub fn growth_rate(&self, t: f64) -> f64 {
        let n = self.fraction(t);
        self.scale * self.rate * n * (1.0 - n)
    }

    pub fn in_unit(&self, unit: TimeUnit) -> Self {
        LogisticModel {
            rate: self.rate / self.time_unit.convert(1.0, unit),
            time_unit: unit,
            ..*self
        }
    }
}

/// Either response family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResponseModel {
    Fopdt(FopdtModel),
    Logistic(LogisticModel),
}

impl ResponseModel {
    /// Expected cumulative count at `t`.
    pub fn evaluate(&self, t: f64) -> f64 {
        match self {
            ResponseModel::Fopdt(m) => m.step_response(t),
            ResponseModel::Logistic(m) => m.value(t),
        }
    }

    /// Expected posting rate at `t`.
    pub fn intensity(&self, t: f64) -> f64 {
        match self {
            ResponseModel::Fopdt(m) => m.rate(t),
            ResponseModel::Logistic(m) => m.growth_rate(t),
        }
    }

    /// Gain (FOPDT) or scale (logistic).
    pub fn gain(&self) -> f64 {
        match self {
            ResponseModel::Fopdt(m) => m.gain(),
            ResponseModel::Logistic(m) => m.scale(),
        }
    }

    pub fn time_unit(&self) -> TimeUnit {
        match self {
            ResponseModel::Fopdt(m) => m.time_unit(),
            ResponseModel::Logistic(m) => m.time_unit(),
        }
    }
}

impl From<FopdtModel> for ResponseModel {
    fn from(m: FopdtModel) -> Self {
        ResponseModel::Fopdt(m)
    }
}

impl From<LogisticModel> for ResponseModel {
    fn from(m: LogisticModel) -> Self {
        ResponseModel::Logistic(m)
    }
}

/// Free-function form of [`FopdtModel::step_response`].
pub fn fopdt_step_response(model: &FopdtModel, t: f64) -> f64 {
    model.step_response(t)
}

pub fn fopdt_rate(model: &FopdtModel, t: f64) -> f64 {
    model.rate(t)
}

pub fn logistic_value(model: &LogisticModel, t: f64) -> f64 {
    model.value(t)
}

/// Printed transfer function, e.g. `16.0·e^{-2.5s}/(2.5s+1)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransferFunctionDisplay {
    pub text: String,
}

pub const MAX_DECIMALS: usize = 6;

/// Canonical one-line form `<K>·e^{-<L>s}/(<T>s+1)` with `decimals` fixed
/// decimals (capped at [`MAX_DECIMALS`]).
pub fn format_transfer_function(model: &FopdtModel, decimals: usize) -> TransferFunctionDisplay {
    let d = decimals.min(MAX_DECIMALS);
    TransferFunctionDisplay {
        text: format!(
            "{:.d$}·e^{{-{:.d$}s}}/({:.d$}s+1)",
            model.gain, model.dead_time, model.time_constant
        ),
    }
}

impl fmt::Display for TransferFunctionDisplay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Parsed `(K, T, L)` triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferFunctionParams {
    pub gain: f64,
    pub time_constant: f64,
    pub dead_time: f64,
}

impl TransferFunctionParams {
    pub fn into_model(self, unit: TimeUnit) -> Result<FopdtModel, ModelError> {
        FopdtModel::new(self.gain, self.time_constant, self.dead_time, unit)
    }
}

impl FromStr for TransferFunctionParams {
    type Err = ModelError;

    /// Accepts the canonical form with optional whitespace; `*` may stand in for `·`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::TransferFunction(s.to_owned());
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let (gain, rest) = compact
            .split_once("·e^{-")
            .or_else(|| compact.split_once("*e^{-"))
            .ok_or_else(bad)?;
        let (dead, rest) = rest.split_once("s}/(").ok_or_else(bad)?;
        let time_constant = rest.strip_suffix("s+1)").ok_or_else(bad)?;
        let num = |v: &str| v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(bad);
        Ok(TransferFunctionParams {
            gain: num(gain)?,
            time_constant: num(time_constant)?,
            dead_time: num(dead)?,
        })
    }
}

impl TransferFunctionDisplay {
    pub fn parse(&self) -> Result<TransferFunctionParams, ModelError> {
        self.text.parse()
    }
}
