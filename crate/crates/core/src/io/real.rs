//! Reals as decimal strings.
//!
//! Every real is written with at least 12 significant digits and never
//! fewer than the shortest representation that parses back to the same
//! `f64`, so documents round-trip bit for bit.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

const MIN_SIGNIFICANT: i32 = 12;

fn significant_digits(s: &str) -> usize {
    let digits: String = s.chars().filter(|c| c.is_ascii_digit()).collect();
    digits.trim_start_matches('0').len()
}

pub fn format_real(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let shortest = format!("{x}");
    if significant_digits(&shortest) >= MIN_SIGNIFICANT as usize {
        return shortest;
    }
    if x == 0.0 {
        return format!("{:.*}", (MIN_SIGNIFICANT - 1) as usize, x);
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (MIN_SIGNIFICANT - 1 - exponent).max(0) as usize;
    let padded = format!("{x:.decimals$}");
    // Padding must never change the value; fall back to the shortest form.
    if padded.parse::<f64>().ok() == Some(x) {
        padded
    } else {
        shortest
    }
}

pub fn parse_real(s: &str) -> Result<f64, std::num::ParseFloatError> {
    s.trim().parse::<f64>()
}

/// An `f64` that serializes through [`format_real`] and accepts either a
/// string or a JSON number on input.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Real(pub f64);

impl From<f64> for Real {
    fn from(x: f64) -> Self {
        Real(x)
    }
}

impl From<Real> for f64 {
    fn from(r: Real) -> Self {
        r.0
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_real(self.0))
    }
}

struct RealVisitor;

impl Visitor<'_> for RealVisitor {
    type Value = Real;

    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("a decimal string or a number")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Real, E> {
        parse_real(v).map(Real).map_err(|_| E::custom(format!("`{v}` is not a decimal number")))
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Real, E> {
        Ok(Real(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Real, E> {
        Ok(Real(v as f64))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Real, E> {
        Ok(Real(v as f64))
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Real, D::Error> {
        d.deserialize_any(RealVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pads_short_values() {
        assert_eq!(format_real(0.129), "0.129000000000");
        assert_eq!(format_real(2.0), "2.00000000000");
        assert_eq!(format_real(0.0), "0.00000000000");
        assert_eq!(format_real(1.0 / 3.0), "0.3333333333333333");
        assert_eq!(format_real(-0.5), "-0.500000000000");
    }

    #[test]
    fn accepts_numbers_and_strings() {
        let r: Real = serde_json::from_str("0.25").unwrap();
        assert_eq!(r, Real(0.25));
        let r: Real = serde_json::from_str("\"1e-3\"").unwrap();
        assert_eq!(r, Real(0.001));
        let r: Real = serde_json::from_str("3").unwrap();
        assert_eq!(r, Real(3.0));
        assert!(serde_json::from_str::<Real>("\"abc\"").is_err());
    }

    proptest! {
        #[test]
        fn lossless(x in prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO) {
            let s = format_real(x);
            prop_assert_eq!(parse_real(&s).unwrap().to_bits(), x.to_bits());
            prop_assert!(significant_digits(&s) >= 12 || x == 0.0, "{}", s);
        }
    }
}
