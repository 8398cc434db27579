//! Millisecond-resolution time values.
//!
//! Every timestamp in the pipeline is held as an integer count of
//! milliseconds so that segmentation is exact. Conversion from decimal
//! seconds rounds half away from zero on the decimal digits of the input.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest accepted magnitude in seconds (roughly 31 years).
const MAX_SECS: f64 = 1.0e9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimeError {
    #[error("time value {0} is not finite")]
    NotFinite(f64),
    #[error("time value {0}s is out of range")]
    OutOfRange(f64),
    #[error("interval start {start} must be non-negative")]
    NegativeStart { start: Millis },
    #[error("interval end {end} must be after start {start}")]
    Empty { start: Millis, end: Millis },
}

/// A point in time or a duration, in whole milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Millis(pub i64);

impl Millis {
    pub const ZERO: Millis = Millis(0);

    /// Converts decimal seconds, rounding half away from zero at the
    /// millisecond digit.
    pub fn from_secs(secs: f64) -> Result<Self, TimeError> {
        if !secs.is_finite() {
            return Err(TimeError::NotFinite(secs));
        }
        if secs.abs() > MAX_SECS {
            return Err(TimeError::OutOfRange(secs));
        }
        Ok(Millis(round_decimal_millis(secs)))
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn as_i64(self) -> i64 {
        self.0
    }
}

impl fmt::Display for Millis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:03}s", abs / 1000, abs % 1000)
    }
}

impl std::ops::Add for Millis {
    type Output = Millis;
    fn add(self, rhs: Millis) -> Millis {
        Millis(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Millis {
    type Output = Millis;
    fn sub(self, rhs: Millis) -> Millis {
        Millis(self.0 - rhs.0)
    }
}

impl Serialize for Millis {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_secs())
    }
}

impl<'de> Deserialize<'de> for Millis {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let secs = f64::deserialize(deserializer)?;
        Millis::from_secs(secs).map_err(D::Error::custom)
    }
}

// Works on the shortest decimal rendering of the float, so "1.0005" rounds
// to 1001 ms even though its binary value is slightly below 1.0005.
fn round_decimal_millis(secs: f64) -> i64 {
    let negative = secs < 0.0;
    let text = format!("{}", secs.abs());
    let (int_part, frac_part) = text.split_once('.').unwrap_or((text.as_str(), ""));
    let whole: i64 = int_part.parse().unwrap_or(0);
    let digits: Vec<i64> = frac_part
        .bytes()
        .map(|b| i64::from(b - b'0'))
        .chain(std::iter::repeat(0))
        .take(4)
        .collect();
    let mut ms = whole * 1000 + digits[0] * 100 + digits[1] * 10 + digits[2];
    if digits[3] >= 5 {
        ms += 1;
    }
    if negative {
        -ms
    } else {
        ms
    }
}

/// A non-empty time window `[start, end)` in source-video coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeInterval {
    start: Millis,
    end: Millis,
}

impl TimeInterval {
    pub fn new(start: Millis, end: Millis) -> Result<Self, TimeError> {
        if start < Millis::ZERO {
            return Err(TimeError::NegativeStart { start });
        }
        if end <= start {
            return Err(TimeError::Empty { start, end });
        }
        Ok(Self { start, end })
    }

    pub fn from_millis(start: i64, end: i64) -> Result<Self, TimeError> {
        Self::new(Millis(start), Millis(end))
    }

    pub fn from_secs(start: f64, end: f64) -> Result<Self, TimeError> {
        Self::new(Millis::from_secs(start)?, Millis::from_secs(end)?)
    }

    pub fn start(&self) -> Millis {
        self.start
    }

    pub fn end(&self) -> Millis {
        self.end
    }

    pub fn duration(&self) -> Millis {
        self.end - self.start
    }

    pub fn contains(&self, t: Millis) -> bool {
        self.start <= t && t < self.end
    }

    /// Intersection with `[0, limit]`, or `None` when nothing remains.
    pub fn clamp_to(&self, limit: Millis) -> Option<TimeInterval> {
        let start = self.start.max(Millis::ZERO);
        let end = self.end.min(limit);
        TimeInterval::new(start, end).ok()
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Serialized as a two-element array of seconds: `[start, end]`.
impl Serialize for TimeInterval {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.start.as_secs(), self.end.as_secs()].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TimeInterval {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [start, end] = <[f64; 2]>::deserialize(deserializer)?;
        TimeInterval::from_secs(start, end).map_err(D::Error::custom)
    }
}
