use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Largest number of sweep points accepted.
pub const MAX_SWEEP_POINTS: usize = 100_000;

/// `a:b:n`, n evenly spaced values from a to b inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RangeSpec {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl RangeSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let span = self.end - self.start;
        let last = self.points - 1;
        (0..self.points)
            .map(|i| if i == last { self.end } else { self.start + span * i as f64 / last as f64 })
            .collect()
    }
}

impl FromStr for RangeSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts.as_slice() else {
            return Err(format!("range `{s}` is not of the form a:b:n"));
        };
        let num = |x: &str, what: &str| -> Result<f64, String> {
            let v: f64 = x.trim().parse().map_err(|_| format!("range {what} `{x}` is not a number"))?;
            if !v.is_finite() {
                return Err(format!("range {what} `{x}` is not finite"));
            }
            Ok(v)
        };
        let start = num(a, "start")?;
        let end = num(b, "end")?;
        let points: usize = n.trim().parse().map_err(|_| format!("range point count `{n}` is not a positive integer"))?;
        if points == 0 {
            return Err("range needs at least one point".into());
        }
        if points > MAX_SWEEP_POINTS {
            return Err(format!("range has {points} points, more than {MAX_SWEEP_POINTS}"));
        }
        Ok(RangeSpec { start, end, points })
    }
}

impl TryFrom<String> for RangeSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<RangeSpec> for String {
    fn from(r: RangeSpec) -> String {
        r.to_string()
    }
}

impl fmt::Display for RangeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.end, self.points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_spans_endpoints() {
        let r: RangeSpec = "0:1:101".parse().unwrap();
        let v = r.values();
        assert_eq!(v.len(), 101);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[100], 1.0);
        assert!((v[37] - 0.37).abs() < 1e-15);
    }

    #[test]
    fn single_point() {
        let r: RangeSpec = "0.25:0.9:1".parse().unwrap();
        assert_eq!(r.values(), vec![0.25]);
    }

    #[test]
    fn descending_range() {
        let r: RangeSpec = "1:-1:3".parse().unwrap();
        assert_eq!(r.values(), vec![1.0, 0.0, -1.0]);
    }

    #[test]
    fn rejects_malformed() {
        for s in ["", "1:2", "1:2:3:4", "a:1:2", "0:1:0", "0:1:-3", "0:inf:3", "0:NaN:2", "0:1:100001"] {
            assert!(s.parse::<RangeSpec>().is_err(), "{s}");
        }
    }

    #[test]
    fn round_trips_through_string() {
        let r: RangeSpec = "-0.5:2.5:7".parse().unwrap();
        assert_eq!(r.to_string().parse::<RangeSpec>().unwrap(), r);
    }
}
