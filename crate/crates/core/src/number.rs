//! Exact rational helpers, decimal/fraction parsing and the [`Exponent`] type.

use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Relative tolerance used when comparing costs that involve real powers.
pub const COST_RTOL: f64 = 1e-12;

/// Largest decimal exponent accepted by [`parse_rational`]. Keeps hostile
/// inputs such as `1e999999999` from allocating huge integers.
const MAX_DECIMAL_EXPONENT: i64 = 4096;
const MAX_DIGITS: usize = 4096;

fn number_err(text: &str, reason: &'static str) -> Error {
    Error::Number {
        text: text.to_string(),
        reason,
    }
}

fn parse_digits(text: &str, digits: &str) -> Result<BigInt> {
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(number_err(text, "expected decimal digits"));
    }
    if digits.len() > MAX_DIGITS {
        return Err(number_err(text, "too many digits"));
    }
    BigInt::parse_bytes(digits.as_bytes(), 10).ok_or_else(|| number_err(text, "expected decimal digits"))
}

fn parse_decimal(text: &str, body: &str) -> Result<Rational> {
    let (mantissa, exp) = match body.find(['e', 'E']) {
        Some(pos) => {
            let exp_text = &body[pos + 1..];
            let exp: i64 = exp_text
                .parse()
                .map_err(|_| number_err(text, "malformed exponent"))?;
            if exp.abs() > MAX_DECIMAL_EXPONENT {
                return Err(number_err(text, "exponent out of range"));
            }
            (&body[..pos], exp)
        }
        None => (body, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(number_err(text, "expected decimal digits"));
    }
    let digits = format!("{int_part}{frac_part}");
    let numer = parse_digits(text, &digits)?;
    let scale = exp - frac_part.len() as i64;
    let ten = BigInt::from(10u32);
    let value = if scale >= 0 {
        Rational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    Ok(value)
}

/// Parses `"3"`, `"-3/4"`, `"0.125"`, `"1e-3"` or `"2.5E2"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let trimmed = text.trim();
    let (negative, body) = match trimmed.as_bytes().first() {
        Some(b'-') => (true, &trimmed[1..]),
        Some(b'+') => (false, &trimmed[1..]),
        Some(_) => (false, trimmed),
        None => return Err(number_err(text, "empty number")),
    };
    let value = match body.split_once('/') {
        Some((num, den)) => {
            let num = parse_digits(text, num.trim())?;
            let den = parse_digits(text, den.trim())?;
            if den.is_zero() {
                return Err(number_err(text, "zero denominator"));
            }
            Rational::new(num, den)
        }
        None => parse_decimal(text, body)?,
    };
    Ok(if negative { -value } else { value })
}

/// Canonical text form: `"a"` for integers, `"a/b"` otherwise.
pub fn format_rational(value: &Rational) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Shortest decimal that round-trips to the same `f64`.
pub fn format_float(value: f64) -> String {
    let text = format!("{value:?}");
    text.strip_suffix(".0").map(str::to_string).unwrap_or(text)
}

/// 15-significant-digit rendering used in reports, in the style of `%.15g`:
/// plain decimals for moderate magnitudes, scientific otherwise, trailing
/// zeros removed.
pub fn format_sig15(value: f64) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return format!("{value}");
    }
    let sci = format!("{value:.14e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..15).contains(&exp) {
        let decimals = (14 - exp).max(0) as usize;
        trim_zeros(&format!("{value:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(text: &str) -> String {
    if text.contains('.') {
        text.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        text.to_string()
    }
}

pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

/// Exact conversion of a finite float.
pub fn from_f64(value: f64) -> Rational {
    Rational::from_float(value).unwrap_or_else(Rational::zero)
}

fn exact_root(value: &BigInt, degree: u32) -> Option<BigInt> {
    if degree == 1 {
        return Some(value.clone());
    }
    if value.sign() == Sign::Minus {
        return None;
    }
    let root = value.nth_root(degree);
    (num_traits::pow(root.clone(), degree as usize) == *value).then_some(root)
}

/// `base^exponent` when the result is rational and computable exactly.
/// Returns `None` for irrational results (e.g. `2^(1/2)`) or negative bases.
pub fn pow_exact(base: &Rational, exponent: &Ratio<i64>) -> Option<Rational> {
    if base.is_negative() {
        return None;
    }
    if base.is_zero() {
        return (*exponent.numer() > 0).then(Rational::zero);
    }
    let numer = *exponent.numer();
    let denom = u32::try_from(*exponent.denom()).ok()?;
    if numer.unsigned_abs() > 4096 {
        return None;
    }
    let num_root = exact_root(base.numer(), denom)?;
    let den_root = exact_root(base.denom(), denom)?;
    let rooted = Rational::new(num_root, den_root);
    let powered = num_traits::pow(rooted, numer.unsigned_abs() as usize);
    Some(if numer < 0 { powered.recip() } else { powered })
}

/// Least common multiple of the denominators.
pub fn common_denominator<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values
        .into_iter()
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

/// An exponent in `(0, 1]` (or, for snowflaking, any positive power), kept
/// exactly when it was given as a fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct Exponent {
    value: f64,
    exact: Option<Ratio<i64>>,
}

impl Exponent {
    pub fn from_ratio(numer: i64, denom: i64) -> Self {
        let exact = Ratio::new(numer, denom);
        // a single correctly rounded division; `numer as f64 / denom as f64`
        // rounds twice once either side exceeds 2^53
        let value = to_f64(&Rational::new((*exact.numer()).into(), (*exact.denom()).into()));
        Exponent {
            value,
            exact: Some(exact),
        }
    }

    pub fn one() -> Self {
        Self::from_ratio(1, 1)
    }

    pub fn from_f64(value: f64) -> Self {
        Exponent { value, exact: None }
    }

    pub fn from_rational(value: &Rational) -> Self {
        match (value.numer().to_i64(), value.denom().to_i64()) {
            (Some(n), Some(d)) => Self::from_ratio(n, d),
            _ => Self::from_f64(to_f64(value)),
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn exact(&self) -> Option<&Ratio<i64>> {
        self.exact.as_ref()
    }

    pub fn is_one(&self) -> bool {
        match &self.exact {
            Some(r) => r.is_one(),
            None => self.value == 1.0,
        }
    }

    /// `1 / self`.
    pub fn recip(&self) -> Exponent {
        match &self.exact {
            Some(r) if !r.is_zero() => {
                let inv = r.recip();
                Exponent {
                    value: *inv.numer() as f64 / *inv.denom() as f64,
                    exact: Some(inv),
                }
            }
            _ => Exponent::from_f64(1.0 / self.value),
        }
    }

    pub fn mul(&self, other: &Exponent) -> Exponent {
        match (&self.exact, &other.exact) {
            (Some(a), Some(b)) => match (a.numer().checked_mul(*b.numer()), a.denom().checked_mul(*b.denom())) {
                (Some(n), Some(d)) => Exponent::from_ratio(n, d),
                _ => Exponent::from_f64(self.value * other.value),
            },
            _ => Exponent::from_f64(self.value * other.value),
        }
    }

    pub fn min(&self, other: &Exponent) -> Exponent {
        if other.value < self.value {
            other.clone()
        } else {
            self.clone()
        }
    }

    /// Checks `0 < self <= 1`.
    pub fn check_unit(&self) -> Result<()> {
        if self.value > 0.0 && self.value <= 1.0 {
            Ok(())
        } else {
            Err(Error::ExponentRange(self.to_string()))
        }
    }

    /// `base^self`, exactly when possible.
    pub fn pow_rational(&self, base: &Rational) -> Option<Rational> {
        self.exact.as_ref().and_then(|e| pow_exact(base, e))
    }

    pub fn powf(&self, base: f64) -> f64 {
        if self.is_one() {
            base
        } else {
            base.powf(self.value)
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.exact {
            Some(r) if r.is_integer() => write!(f, "{}", r.numer()),
            Some(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            None => write!(f, "{}", format_float(self.value)),
        }
    }
}

impl FromStr for Exponent {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let value = parse_rational(text)?;
        if !value.is_positive() {
            return Err(Error::ExponentRange(text.to_string()));
        }
        Ok(Exponent::from_rational(&value))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    #[test]
    fn exponent_display_round_trips_large_decimals() {
        let p: Exponent = "444444444444.044444".parse().unwrap();
        let again: Exponent = p.to_string().parse().unwrap();
        assert_eq!(again.value().to_bits(), p.value().to_bits());
        assert_eq!(p.value(), 444444444444.044444_f64);
    }

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_rational("1/2").unwrap(), r(1, 2));
        assert_eq!(parse_rational("-3/6").unwrap(), r(-1, 2));
        assert_eq!(parse_rational("0.125").unwrap(), r(1, 8));
        assert_eq!(parse_rational("2.5E2").unwrap(), r(250, 1));
        assert_eq!(parse_rational("1e-3").unwrap(), r(1, 1000));
        assert_eq!(parse_rational(".5").unwrap(), r(1, 2));
        assert_eq!(parse_rational("7").unwrap(), r(7, 1));
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "-", "1/0", "a", "1/2/3", "1e", "1e99999", "--1", ".", "1.2.3", "0x10"] {
            assert!(parse_rational(bad).is_err(), "{bad:?} should fail");
        }
    }

    #[test]
    fn exact_powers() {
        let half = Ratio::new(1, 2);
        assert_eq!(pow_exact(&r(9, 4), &half), Some(r(3, 2)));
        assert_eq!(pow_exact(&r(2, 1), &half), None);
        assert_eq!(pow_exact(&r(2, 3), &Ratio::new(2, 1)), Some(r(4, 9)));
        assert_eq!(pow_exact(&r(1, 4), &Ratio::new(-3, 2)), Some(r(8, 1)));
        assert_eq!(pow_exact(&r(0, 1), &half), Some(r(0, 1)));
    }

    #[test]
    fn exponent_display_and_parse() {
        let e: Exponent = "2/4".parse().unwrap();
        assert_eq!(e.to_string(), "1/2");
        assert_eq!(e.recip().to_string(), "2");
        assert!("0".parse::<Exponent>().is_err());
        assert!("3/2".parse::<Exponent>().unwrap().check_unit().is_err());
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 2f64.sqrt(), 1e-300, 12345.0] {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
    }
}
