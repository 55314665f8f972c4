use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Base time unit a series or model is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    #[default]
    Hour,
    Day,
}

impl TimeUnit {
    pub fn seconds(self) -> f64 {
        match self {
            TimeUnit::Hour => 3600.0,
            TimeUnit::Day => 86_400.0,
        }
    }

    /// Factor that converts a duration in `self` into `target` units.
    pub fn factor_to(self, target: TimeUnit) -> f64 {
        match (self, target) {
            (TimeUnit::Hour, TimeUnit::Day) => 1.0 / 24.0,
            (TimeUnit::Day, TimeUnit::Hour) => 24.0,
            _ => 1.0,
        }
    }

    /// Converts a duration from `self` into `target` units. Hour to day is an
    /// exact division by 24.
    pub fn convert(self, value: f64, target: TimeUnit) -> f64 {
        match (self, target) {
            (TimeUnit::Hour, TimeUnit::Day) => value / 24.0,
            (TimeUnit::Day, TimeUnit::Hour) => value * 24.0,
            _ => value,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TimeUnit::Hour => "hour",
            TimeUnit::Day => "day",
        }
    }
}

impl fmt::Display for TimeUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TimeUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hour" | "hours" | "h" => Ok(TimeUnit::Hour),
            "day" | "days" | "d" => Ok(TimeUnit::Day),
            other => Err(format!("unknown time unit `{other}` (expected hour or day)")),
        }
    }
}
