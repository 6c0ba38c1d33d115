//! Numeric abstraction shared by every engine in the crate.
//!
//! All of the hedging, measure and bounds arithmetic needs only field
//! operations and an ordering, so the engines are written once against
//! [`Scalar`] and instantiated for `f64`, `f32` and exact rationals.
//! Floating types compare against small noise floors; exact types compare
//! exactly (every noise floor collapses to zero).

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};

/// Field-like number used for prices, probabilities and money.
pub trait Scalar:
    Copy + Num + Signed + PartialOrd + Debug + Display + Send + Sync + 'static
{
    /// True for exact (rational) arithmetic.
    const EXACT: bool;

    /// Parses a decimal literal such as `"2.56"` or `"-1e-3"`, or a fraction
    /// `"17/30"` (rounded once for floating types).
    fn parse_decimal(text: &str) -> Option<Self>;

    /// Converts an `f64` (used for RNG draws and user options).
    fn from_f64(x: f64) -> Option<Self>;

    fn to_f64(self) -> f64;

    /// Noise floor corresponding to `eps` stated for `f64` arithmetic.
    ///
    /// `f64` returns `eps`, `f32` scales it by the ratio of machine
    /// epsilons, exact types return zero.
    fn noise_floor(eps: f64) -> Self;

    /// Shortest text that parses back to the identical value.
    fn to_exact_string(self) -> String;

    fn two() -> Self {
        Self::one() + Self::one()
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn parse_decimal(text: &str) -> Option<Self> {
        parse_float(text.trim())
    }

    fn from_f64(x: f64) -> Option<Self> {
        x.is_finite().then_some(x)
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn noise_floor(eps: f64) -> Self {
        eps
    }

    fn to_exact_string(self) -> String {
        format!("{self:?}")
    }
}

impl Scalar for f32 {
    const EXACT: bool = false;

    fn parse_decimal(text: &str) -> Option<Self> {
        // through f64 so fractions of exact integers round once
        parse_float::<f64>(text.trim()).map(|x| x as f32).filter(|x| x.is_finite())
    }

    fn from_f64(x: f64) -> Option<Self> {
        let y = x as f32;
        y.is_finite().then_some(y)
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn noise_floor(eps: f64) -> Self {
        (eps * (f32::EPSILON as f64 / f64::EPSILON)) as f32
    }

    fn to_exact_string(self) -> String {
        format!("{self:?}")
    }
}

impl<I> Scalar for Ratio<I>
where
    I: Integer + Signed + Copy + FromPrimitive + ToPrimitive + FromStr + Debug + Display,
    I: Send + Sync + 'static,
    Ratio<I>: FromPrimitive + ToPrimitive,
{
    const EXACT: bool = true;

    fn parse_decimal(text: &str) -> Option<Self> {
        parse_rational(text.trim())
    }

    fn from_f64(x: f64) -> Option<Self> {
        <Ratio<I> as FromPrimitive>::from_f64(x)
    }

    fn to_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn noise_floor(_eps: f64) -> Self {
        Self::zero()
    }

    fn to_exact_string(self) -> String {
        terminating_decimal(self).unwrap_or_else(|| format!("{}/{}", self.numer(), self.denom()))
    }
}

fn parse_float<F>(text: &str) -> Option<F>
where
    F: FromStr + Num + Copy + Into<f64>,
{
    let value = match text.split_once('/') {
        Some((n, d)) => F::from_str(n.trim()).ok()? / F::from_str(d.trim()).ok()?,
        None => F::from_str(text).ok()?,
    };
    value.into().is_finite().then_some(value)
}

fn parse_rational<I>(text: &str) -> Option<Ratio<I>>
where
    I: Integer + Signed + Copy + FromPrimitive + FromStr,
{
    if let Some((n, d)) = text.split_once('/') {
        let n = I::from_str(n.trim()).ok()?;
        let d = I::from_str(d.trim()).ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Ratio::new(n, d));
    }
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let ten = I::from_u8(10)?;
    let mut numer = I::zero();
    for c in int_part.chars().chain(frac_part.chars()) {
        numer = numer * ten + I::from_u32(c.to_digit(10)?)?;
    }
    let scale = exponent - frac_part.len() as i32;
    let mut value = Ratio::from_integer(numer);
    let factor = Ratio::from_integer(num_traits::pow(ten, scale.unsigned_abs() as usize));
    if scale >= 0 {
        value = value * factor;
    } else {
        value = value / factor;
    }
    Some(if negative { -value } else { value })
}

/// Exact decimal expansion when the reduced denominator is of the form 2^a 5^b.
fn terminating_decimal<I>(x: Ratio<I>) -> Option<String>
where
    I: Integer + Signed + Copy + FromPrimitive + Display,
{
    let two = I::from_u8(2)?;
    let five = I::from_u8(5)?;
    let ten = I::from_u8(10)?;
    let mut d = *x.denom();
    let (mut twos, mut fives) = (0u32, 0u32);
    while (d % two).is_zero() {
        d = d / two;
        twos += 1;
    }
    while (d % five).is_zero() {
        d = d / five;
        fives += 1;
    }
    if !d.is_one() {
        return None;
    }
    let places = twos.max(fives) as usize;
    // numer * 10^places / denom is an integer
    let scaled = x * Ratio::from_integer(num_traits::pow(ten, places));
    let mut digits = scaled.to_integer().abs().to_string();
    let sign = if x.is_negative() { "-" } else { "" };
    if places == 0 {
        return Some(format!("{sign}{digits}"));
    }
    if digits.len() <= places {
        digits = format!("{}{digits}", "0".repeat(places + 1 - digits.len()));
    }
    let (int_part, frac_part) = digits.split_at(digits.len() - places);
    Some(format!("{sign}{int_part}.{frac_part}"))
}
