//! Killing rates for dangling edges and exponential timers.
//!
//! An infinite rate is its own variant so that limits such as `κ → ∞` never
//! pass through a large float.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Rate {
    Finite(f64),
    Infinite,
}

impl Rate {
    pub fn finite(value: f64) -> Result<Rate> {
        if value.is_finite() && value >= 0.0 {
            Ok(Rate::Finite(value))
        } else {
            Err(Error::InvalidInput(format!(
                "rate {value} must be finite and nonnegative"
            )))
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Rate::Finite(v) => Some(v),
            Rate::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Rate::Infinite)
    }

    /// `x / rate`, which vanishes for an infinite rate.
    pub fn divide(self, x: f64) -> f64 {
        match self {
            Rate::Finite(v) => x / v,
            Rate::Infinite => 0.0,
        }
    }

    /// The rate as an `f64`, with `+∞` for the infinite variant.
    pub fn as_f64(self) -> f64 {
        match self {
            Rate::Finite(v) => v,
            Rate::Infinite => f64::INFINITY,
        }
    }
}

impl PartialOrd for Rate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Rate::Infinite, Rate::Infinite) => Some(Ordering::Equal),
            (Rate::Infinite, Rate::Finite(_)) => Some(Ordering::Greater),
            (Rate::Finite(_), Rate::Infinite) => Some(Ordering::Less),
            (Rate::Finite(a), Rate::Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rate::Finite(v) => write!(f, "{}", crate::io::fmt_f64(*v)),
            Rate::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for Rate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Rate> {
        let t = s.trim();
        if matches!(t.to_ascii_lowercase().as_str(), "inf" | "infinity" | "+inf") {
            return Ok(Rate::Infinite);
        }
        let v: f64 = t
            .parse()
            .map_err(|_| Error::InvalidInput(format!("cannot parse rate `{s}`")))?;
        Rate::finite(v)
    }
}
