//! Service-time and inter-arrival distributions.
//!
//! Four families cover the scenarios: constant, uniform, exponential and
//! triangular. Sampling is inverse-transform on a single `[0,1)` draw per
//! variate, so the number of raw draws per sample is fixed and identical
//! in every run mode.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Dist {
    /// Always `c`.
    Constant(f64),
    /// Uniform on `[a, b]`.
    Uniform(f64, f64),
    /// Exponential with the given mean.
    Exponential(f64),
    /// Triangular with minimum `a`, mode `m`, maximum `b`.
    Triangular(f64, f64, f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("bad distribution parameters: {0}")]
    BadParams(String),
    #[error("cannot parse distribution from {0:?}")]
    Parse(String),
}

impl Dist {
    /// Checks parameter sanity: finite, non-negative support, properly
    /// ordered bounds. Times never run backwards, so negative support is
    /// rejected outright.
    pub fn validate(&self) -> Result<(), DistError> {
        let bad = |msg: String| Err(DistError::BadParams(msg));
        match *self {
            Dist::Constant(c) => {
                if !c.is_finite() || c < 0.0 {
                    return bad(format!("const({c})"));
                }
            }
            Dist::Uniform(a, b) => {
                if !(a.is_finite() && b.is_finite()) || a < 0.0 || b < a {
                    return bad(format!("uniform({a},{b})"));
                }
            }
            Dist::Exponential(mean) => {
                if !mean.is_finite() || mean <= 0.0 {
                    return bad(format!("exp({mean})"));
                }
            }
            Dist::Triangular(a, m, b) => {
                if !(a.is_finite() && m.is_finite() && b.is_finite())
                    || a < 0.0
                    || m < a
                    || b < m
                    || b <= a
                {
                    return bad(format!("tri({a},{m},{b})"));
                }
            }
        }
        Ok(())
    }

    /// Draws one variate. Exactly one `next_f64` is consumed regardless of
    /// family (the constant family still burns a draw so that swapping a
    /// distribution in a scenario does not shift every later draw of the
    /// same stream).
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        let u = rng.next_f64();
        match *self {
            Dist::Constant(c) => c,
            Dist::Uniform(a, b) => a + (b - a) * u,
            // u is in [0,1), so 1-u is in (0,1] and ln stays finite.
            Dist::Exponential(mean) => -mean * (1.0 - u).ln(),
            Dist::Triangular(a, m, b) => {
                let cut = (m - a) / (b - a);
                if u < cut {
                    a + ((b - a) * (m - a) * u).sqrt()
                } else {
                    b - ((b - a) * (b - m) * (1.0 - u)).sqrt()
                }
            }
        }
    }

    /// Analytic expectation.
    pub fn mean(&self) -> f64 {
        match *self {
            Dist::Constant(c) => c,
            Dist::Uniform(a, b) => 0.5 * (a + b),
            Dist::Exponential(mean) => mean,
            Dist::Triangular(a, m, b) => (a + m + b) / 3.0,
        }
    }

    /// Lower bound of the support. Exponential is unbounded below in the
    /// sense that draws arbitrarily close to zero occur, hence 0.
    pub fn lower_bound(&self) -> f64 {
        match *self {
            Dist::Constant(c) => c,
            Dist::Uniform(a, _) => a,
            Dist::Exponential(_) => 0.0,
            Dist::Triangular(a, _, _) => a,
        }
    }

    /// Parses the textual form used by scenario files: `const(c)`,
    /// `uniform(a,b)`, `exp(mean)`, `tri(a,m,b)`.
    pub fn parse(text: &str) -> Result<Dist, DistError> {
        let text = text.trim();
        let (name, rest) = text
            .split_once('(')
            .ok_or_else(|| DistError::Parse(text.to_string()))?;
        let args = rest
            .strip_suffix(')')
            .ok_or_else(|| DistError::Parse(text.to_string()))?;
        let nums: Result<Vec<f64>, _> = args
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect();
        let nums = nums.map_err(|_| DistError::Parse(text.to_string()))?;
        let dist = match (name.trim(), nums.as_slice()) {
            ("const", [c]) => Dist::Constant(*c),
            ("uniform", [a, b]) => Dist::Uniform(*a, *b),
            ("exp", [m]) => Dist::Exponential(*m),
            ("tri", [a, m, b]) => Dist::Triangular(*a, *m, *b),
            _ => return Err(DistError::Parse(text.to_string())),
        };
        dist.validate()?;
        Ok(dist)
    }
}

impl fmt::Display for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Dist::Constant(c) => write!(f, "const({c})"),
            Dist::Uniform(a, b) => write!(f, "uniform({a},{b})"),
            Dist::Exponential(m) => write!(f, "exp({m})"),
            Dist::Triangular(a, m, b) => write!(f, "tri({a},{m},{b})"),
        }
    }
}
