//! Simulation time.
//!
//! Model time is a non-negative, finite `f64` measured in hours. The
//! wrapper keeps NaN and infinities out of the calendar so that ordering
//! is total; "no more messages ever" is expressed by sentinel enum cases
//! elsewhere (see [`crate::sync::SafeTime`]), never by `f64::INFINITY`
//! inside a running clock.

use std::fmt;
use std::ops::Add;

use serde::{Deserialize, Serialize};

/// A point in simulation time, in hours since run start.
#[derive(Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Wraps a raw hour value.
    ///
    /// # Panics
    /// Panics if `hours` is negative, NaN or infinite. Scenario validation
    /// rejects such values before they can reach a run, so hitting this in
    /// a simulation indicates a kernel bug.
    pub fn new(hours: f64) -> SimTime {
        assert!(
            hours.is_finite() && hours >= 0.0,
            "simulation time must be finite and non-negative, got {hours}"
        );
        SimTime(hours)
    }

    pub fn hours(self) -> f64 {
        self.0
    }

    pub fn max(self, other: SimTime) -> SimTime {
        if other.0 > self.0 {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: SimTime) -> SimTime {
        if other.0 < self.0 {
            other
        } else {
            self
        }
    }

    /// Renders the timestamp with 17 significant digits, enough for the
    /// text form to round-trip to the identical `f64` bit pattern. Trace
    /// files and the diff tool rely on this.
    pub fn to_trace_field(self) -> String {
        format!("{:.16e}", self.0)
    }
}

impl Eq for SimTime {}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Values are finite and non-NaN by construction, so total_cmp
        // agrees with the usual numeric order.
        self.0.total_cmp(&other.0)
    }
}

impl Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        SimTime::new(self.0 + rhs.0)
    }
}

impl fmt::Debug for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}h", self.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_field_round_trips_exactly() {
        for v in [0.0, 50.0, 1.0 / 3.0, 4999.999999999999, 0.1 + 0.2] {
            let t = SimTime::new(v);
            let parsed: f64 = t.to_trace_field().parse().unwrap();
            assert_eq!(parsed.to_bits(), v.to_bits(), "value {v}");
        }
    }

    #[test]
    fn ordering_is_numeric() {
        let a = SimTime::new(1.0);
        let b = SimTime::new(2.0);
        assert!(a < b);
        assert_eq!(a.max(b), b);
        assert_eq!(a.min(b), a);
    }

    #[test]
    #[should_panic]
    fn rejects_negative() {
        SimTime::new(-1.0);
    }

    #[test]
    #[should_panic]
    fn rejects_nan() {
        SimTime::new(f64::NAN);
    }
}
