//! Transfer quantity representation: native floats or exact decimals.
//!
//! Raw logs carry token amounts as decimal strings. The default mode parses
//! them as `f64`; the exact mode keeps a normalized `mantissa * 10^-scale`
//! integer pair so equal textual amounts always compare equal regardless of
//! float rounding. Feature math always runs on the `f64` projection.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// How transfer quantities are parsed and compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum QuantityMode {
    /// Parse as `f64`; fastest and sufficient for scoring.
    #[default]
    Float,
    /// Parse as an exact non-negative decimal; dedup keys are rounding-free.
    ExactDecimal,
}

/// Why a quantity string was rejected.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QuantityParseError {
    #[error("empty quantity")]
    Empty,
    #[error("negative quantity: {0}")]
    Negative(String),
    #[error("not a finite non-negative number: {0}")]
    NotANumber(String),
    #[error("quantity out of representable range: {0}")]
    OutOfRange(String),
}

/// Exact non-negative decimal `mantissa * 10^-scale`, kept normalized
/// (no trailing zero digits in the fraction; zero is `(0, 0)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Decimal {
    mantissa: u128,
    scale: u32,
}

impl Decimal {
    /// Parses a decimal string, accepting optional `+`, a fraction part, and
    /// an exponent (`1.5e3`). Rejects signs of negative values, non-digits,
    /// and values whose integer form overflows 128 bits.
    pub fn parse(input: &str) -> Result<Self, QuantityParseError> {
        let s = input.trim();
        if s.is_empty() {
            return Err(QuantityParseError::Empty);
        }
        let s = s.strip_prefix('+').unwrap_or(s);
        if s.starts_with('-') {
            return Err(QuantityParseError::Negative(input.to_string()));
        }
        let (base, exp) = match s.find(['e', 'E']) {
            Some(pos) => {
                let exp: i32 = s[pos + 1..]
                    .parse()
                    .map_err(|_| QuantityParseError::NotANumber(input.to_string()))?;
                (&s[..pos], exp)
            }
            None => (s, 0),
        };
        let (int_part, frac_part) = match base.find('.') {
            Some(pos) => (&base[..pos], &base[pos + 1..]),
            None => (base, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(QuantityParseError::NotANumber(input.to_string()));
        }
        let mut mantissa: u128 = 0;
        for c in int_part.chars().chain(frac_part.chars()) {
            let d = c
                .to_digit(10)
                .ok_or_else(|| QuantityParseError::NotANumber(input.to_string()))?;
            mantissa = mantissa
                .checked_mul(10)
                .and_then(|m| m.checked_add(u128::from(d)))
                .ok_or_else(|| QuantityParseError::OutOfRange(input.to_string()))?;
        }
        let scale = i64::from(u32::try_from(frac_part.len()).unwrap_or(u32::MAX)) - i64::from(exp);
        let (mantissa, scale) = if scale < 0 {
            let shift =
                u32::try_from(-scale).map_err(|_| QuantityParseError::OutOfRange(input.to_string()))?;
            let factor = 10u128
                .checked_pow(shift)
                .ok_or_else(|| QuantityParseError::OutOfRange(input.to_string()))?;
            let m = mantissa
                .checked_mul(factor)
                .ok_or_else(|| QuantityParseError::OutOfRange(input.to_string()))?;
            (m, 0u32)
        } else {
            let s = u32::try_from(scale).map_err(|_| QuantityParseError::OutOfRange(input.to_string()))?;
            (mantissa, s)
        };
        Ok(Self::normalized(mantissa, scale))
    }

    fn normalized(mut mantissa: u128, mut scale: u32) -> Self {
        if mantissa == 0 {
            return Self { mantissa: 0, scale: 0 };
        }
        while scale > 0 && mantissa.is_multiple_of(10) {
            mantissa /= 10;
            scale -= 1;
        }
        Self { mantissa, scale }
    }

    pub fn to_f64(self) -> f64 {
        self.mantissa as f64 * 10f64.powi(-(self.scale as i32))
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.scale == 0 {
            return write!(f, "{}", self.mantissa);
        }
        let digits = format!("{:0>width$}", self.mantissa, width = self.scale as usize + 1);
        let split = digits.len() - self.scale as usize;
        write!(f, "{}.{}", &digits[..split], &digits[split..])
    }
}

/// A transfer amount in the configured representation.
#[derive(Debug, Clone, Copy)]
pub enum Quantity {
    Float(f64),
    Exact(Decimal),
}

/// Hashable, totally ordered key for dedup and tie-breaking.
///
/// Float keys order numerically (non-negative IEEE bit patterns are monotone);
/// exact keys order by `(mantissa, scale)`, which is canonical per value and
/// only ever used as the last component of a sort key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QuantityKey {
    Float(u64),
    Exact { mantissa: u128, scale: u32 },
}

impl Quantity {
    /// Parses per the configured mode; rejects negative, NaN, and infinite values.
    pub fn parse(input: &str, mode: QuantityMode) -> Result<Self, QuantityParseError> {
        match mode {
            QuantityMode::Float => {
                let s = input.trim();
                if s.is_empty() {
                    return Err(QuantityParseError::Empty);
                }
                let v = f64::from_str(s)
                    .map_err(|_| QuantityParseError::NotANumber(input.to_string()))?;
                if !v.is_finite() {
                    return Err(QuantityParseError::NotANumber(input.to_string()));
                }
                if v < 0.0 || s.starts_with('-') {
                    return Err(QuantityParseError::Negative(input.to_string()));
                }
                Ok(Quantity::Float(v))
            }
            QuantityMode::ExactDecimal => Decimal::parse(input).map(Quantity::Exact),
        }
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            Quantity::Float(v) => *v,
            Quantity::Exact(d) => d.to_f64(),
        }
    }

    pub fn key(&self) -> QuantityKey {
        match self {
            Quantity::Float(v) => QuantityKey::Float(v.to_bits()),
            Quantity::Exact(d) => QuantityKey::Exact { mantissa: d.mantissa, scale: d.scale },
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // Shortest round-trip representation: re-parsing yields the same bits.
            Quantity::Float(v) => write!(f, "{v}"),
            Quantity::Exact(d) => write!(f, "{d}"),
        }
    }
}

impl PartialEq for Quantity {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}
impl Eq for Quantity {}
