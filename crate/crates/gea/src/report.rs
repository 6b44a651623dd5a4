//! Deterministic serialization helpers for reports.
//!
//! Every float written by this crate goes through one formatter: 17
//! significant digits in exponent form, which round-trips `f64` exactly and
//! is byte-stable across runs and thread counts. JSON key order follows
//! struct declaration order (maps are sorted), NaN is refused, and the only
//! admissible infinity is `+inf`, serialized as the string `"inf"` on the
//! fields that can legitimately saturate (PSNR, error ratios).

use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// 17-significant-digit formatting; exact decimal round-trip for `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct SigDigits17;

impl serde_json::ser::Formatter for SigDigits17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: std::io::Write + ?Sized,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes any value as compact JSON with the crate-wide float format.
pub fn to_json_string<T: Serialize>(value: &T) -> crate::error::Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigits17);
    value.serialize(&mut ser)?;
    let s = String::from_utf8(out).map_err(|e| crate::error::Error::invalid(e.to_string()))?;
    // serde_json writes non-finite floats as null; every optional field in
    // this crate is skipped when absent, so a null can only mean a NaN or a
    // negative infinity escaped construction-time validation.
    if let Some(pos) = s.find("null") {
        let mut start = pos.saturating_sub(80);
        while !s.is_char_boundary(start) {
            start -= 1;
        }
        return Err(crate::error::Error::invalid(format!(
            "refusing to serialize a non-finite float (NaN or -inf) near `{}`",
            &s[start..pos + 4]
        )));
    }
    Ok(s)
}

/// Field serializer for floats that may saturate to `+inf` ("inf" in JSON);
/// NaN and `-inf` are errors.
pub fn ser_inf_aware<S: Serializer>(v: &f64, serializer: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        serializer.serialize_f64(*v)
    } else if *v == f64::INFINITY {
        serializer.serialize_str("inf")
    } else {
        Err(serde::ser::Error::custom("NaN and -inf are not serializable"))
    }
}

/// Inverse of [`ser_inf_aware`].
pub fn de_inf_aware<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum NumOrStr {
        Num(f64),
        Str(String),
    }
    match NumOrStr::deserialize(deserializer)? {
        NumOrStr::Num(v) => Ok(v),
        NumOrStr::Str(s) if s == "inf" => Ok(f64::INFINITY),
        NumOrStr::Str(s) => Err(D::Error::custom(format!("unexpected float string {s:?}"))),
    }
}

/// Aggregate statistic value; plain number or saturated `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat(pub f64);

impl Serialize for Stat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ser_inf_aware(&self.0, serializer)
    }
}

impl<'de> Deserialize<'de> for Stat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        de_inf_aware(deserializer).map(Stat)
    }
}

/// Mean in input order (so it is reproducible digit-for-digit).
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median with the even-count midpoint averaged.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}
