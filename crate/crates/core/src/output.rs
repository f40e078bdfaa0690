//! Number formatting shared by the report writers and the command-line tool.
//!
//! JSON numbers carry 17 significant digits so every `f64` round-trips exactly.
//! Plain text uses 15 significant digits without exponent where practical.

use serde::Serializer;
use serde_json::value::RawValue;

/// 17 significant digits in scientific notation, or `null` for non-finite values.
pub fn json_number(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "null".to_string()
    }
}

/// Serde adapter writing an `f64` through [`json_number`].
pub fn sig17<S: Serializer>(x: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    let raw = RawValue::from_string(json_number(*x)).map_err(serde::ser::Error::custom)?;
    serde::Serialize::serialize(&raw, serializer)
}

/// Serde adapter for sequences of `f64`.
pub fn sig17_seq<S: Serializer>(xs: &[f64], serializer: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = serializer.serialize_seq(Some(xs.len()))?;
    for &x in xs {
        let raw = RawValue::from_string(json_number(x)).map_err(serde::ser::Error::custom)?;
        seq.serialize_element(&raw)?;
    }
    seq.end()
}

/// A wrapper whose `Serialize` impl uses [`sig17`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sig17(pub f64);

impl serde::Serialize for Sig17 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        sig17(&self.0, serializer)
    }
}

/// 15 significant digits, trailing zeros removed. Positional notation is used for
/// decimal exponents in `[-5, 15)`.
pub fn plain_number(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{x:.14e}");
    let (mantissa, exponent) = sci.split_once('e').expect("scientific format has an exponent");
    let exponent: i32 = exponent.parse().expect("exponent is an integer");
    if (-5..15).contains(&exponent) {
        let decimals = (14 - exponent).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exponent}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
