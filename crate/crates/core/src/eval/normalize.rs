//! Mapping raw observations into QoS values in `(0, 1]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::data::{QosMatrix, RawMatrix};
use crate::error::{PdsrError, Result};

/// Smallest value an observed entry may take, so it stays distinct from "missing".
pub const FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `(x - min) / (max - min)`
    MinMax,
    /// `1 - (x - min) / (max - min)`: smaller raw values (response times) become better.
    InvertedMinMax,
    /// Raw values kept as they are (ratings).
    None,
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::MinMax => "minmax",
            Normalization::InvertedMinMax => "inverted-minmax",
            Normalization::None => "none",
        })
    }
}

impl FromStr for Normalization {
    type Err = PdsrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(Normalization::MinMax),
            "inverted-minmax" => Ok(Normalization::InvertedMinMax),
            "none" => Ok(Normalization::None),
            other => Err(PdsrError::Config(format!(
                "unknown normalization {other:?} (expected minmax, inverted-minmax or none)"
            ))),
        }
    }
}

/// Normalizes over all observed entries; missing entries become 0 and
/// observed ones are floored at [`FLOOR`]. A degenerate range maps every
/// observation to 1.
pub fn normalize(raw: &RawMatrix, mode: Normalization) -> Result<QosMatrix> {
    let (min, max) = raw
        .observed()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if min > max {
        return Err(PdsrError::invalid("dataset has no observed entries"));
    }
    let range = max - min;
    let map = |x: f64| -> f64 {
        if x.is_nan() {
            return 0.0;
        }
        let v = match mode {
            Normalization::None => x,
            _ if range == 0.0 => 1.0,
            Normalization::MinMax => (x - min) / range,
            Normalization::InvertedMinMax => 1.0 - (x - min) / range,
        };
        v.max(FLOOR)
    };
    Ok(QosMatrix {
        user_ids: raw.user_ids.clone(),
        n_items: raw.n_items,
        values: raw.values.iter().map(|&x| map(x)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(values: &[f64]) -> RawMatrix {
        RawMatrix::new(vec![0], values.len(), values.to_vec()).unwrap()
    }

    #[test]
    fn minmax_with_floor() {
        let q = normalize(&raw(&[2.0, 4.0, f64::NAN, 6.0]), Normalization::MinMax).unwrap();
        assert_eq!(q.values, vec![FLOOR, 0.5, 0.0, 1.0]);
    }

    #[test]
    fn inverted_minmax_with_floor() {
        let q = normalize(&raw(&[2.0, 4.0, 6.0]), Normalization::InvertedMinMax).unwrap();
        assert_eq!(q.values, vec![1.0, 0.5, FLOOR]);
    }

    #[test]
    fn degenerate_range_maps_to_one() {
        for mode in [Normalization::MinMax, Normalization::InvertedMinMax] {
            let q = normalize(&raw(&[3.0, f64::NAN, 3.0]), mode).unwrap();
            assert_eq!(q.values, vec![1.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn none_keeps_ratings() {
        let q = normalize(&raw(&[4.0, f64::NAN, 1.0]), Normalization::None).unwrap();
        assert_eq!(q.values, vec![4.0, 0.0, 1.0]);
    }

    #[test]
    fn all_missing_is_an_error() {
        assert!(normalize(&raw(&[f64::NAN]), Normalization::MinMax).is_err());
    }

    #[test]
    fn names_round_trip() {
        for mode in [Normalization::MinMax, Normalization::InvertedMinMax, Normalization::None] {
            assert_eq!(mode.to_string().parse::<Normalization>().unwrap(), mode);
        }
        assert!(matches!("zscore".parse::<Normalization>(), Err(PdsrError::Config(_))));
    }
}
