//! Numeric constants: exact rationals that degrade to doubles on overflow or
//! on mixed arithmetic.

use std::cmp::Ordering;
use std::fmt;

#[derive(Clone, Copy, Debug)]
pub enum Number {
    /// Reduced fraction with positive denominator.
    Rational(i64, i64),
    Float(f64),
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

impl Number {
    pub const ZERO: Number = Number::Rational(0, 1);
    pub const ONE: Number = Number::Rational(1, 1);

    pub fn int(n: i64) -> Self {
        Number::Rational(n, 1)
    }

    /// Builds `num/den`, falling back to a double when the reduced fraction
    /// does not fit in `i64`.
    pub fn ratio(num: i128, den: i128) -> Self {
        assert!(den != 0, "zero denominator");
        let g = gcd(num, den).max(1);
        let (mut n, mut d) = (num / g, den / g);
        if d < 0 {
            n = -n;
            d = -d;
        }
        match (i64::try_from(n), i64::try_from(d)) {
            (Ok(n), Ok(d)) => Number::Rational(n, d),
            _ => Number::Float(num as f64 / den as f64),
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Number::Rational(n, d) => n as f64 / d as f64,
            Number::Float(v) => v,
        }
    }

    pub fn is_zero(self) -> bool {
        match self {
            Number::Rational(n, _) => n == 0,
            Number::Float(v) => v == 0.0,
        }
    }

    pub fn is_one(self) -> bool {
        match self {
            Number::Rational(n, d) => n == 1 && d == 1,
            Number::Float(v) => v == 1.0,
        }
    }

    pub fn is_negative(self) -> bool {
        self.to_f64() < 0.0
    }

    pub fn is_positive(self) -> bool {
        self.to_f64() > 0.0
    }

    pub fn as_integer(self) -> Option<i64> {
        match self {
            Number::Rational(n, 1) => Some(n),
            Number::Rational(..) => None,
            Number::Float(v) if v.fract() == 0.0 && v.abs() < 1e15 => Some(v as i64),
            Number::Float(_) => None,
        }
    }

    pub fn add(self, other: Number) -> Number {
        match (self, other) {
            (Number::Rational(a, b), Number::Rational(c, d)) => {
                Number::ratio(a as i128 * d as i128 + c as i128 * b as i128, b as i128 * d as i128)
            }
            _ => Number::Float(self.to_f64() + other.to_f64()),
        }
    }

    pub fn mul(self, other: Number) -> Number {
        match (self, other) {
            (Number::Rational(a, b), Number::Rational(c, d)) => {
                Number::ratio(a as i128 * c as i128, b as i128 * d as i128)
            }
            _ => Number::Float(self.to_f64() * other.to_f64()),
        }
    }

    pub fn neg(self) -> Number {
        match self {
            Number::Rational(n, d) => Number::ratio(-(n as i128), d as i128),
            Number::Float(v) => Number::Float(-v),
        }
    }

    pub fn abs(self) -> Number {
        if self.is_negative() {
            self.neg()
        } else {
            self
        }
    }

    /// `None` for zero.
    pub fn recip(self) -> Option<Number> {
        if self.is_zero() {
            return None;
        }
        Some(match self {
            Number::Rational(n, d) => Number::ratio(d as i128, n as i128),
            Number::Float(v) => Number::Float(1.0 / v),
        })
    }

    /// Exact integer power where possible.
    pub fn powi(self, exp: i64) -> Option<Number> {
        if exp < 0 {
            return self.recip()?.powi(-exp);
        }
        match self {
            Number::Rational(n, d) => {
                if exp > 64 {
                    return Some(Number::Float(self.to_f64().powf(exp as f64)));
                }
                let mut num: i128 = 1;
                let mut den: i128 = 1;
                for _ in 0..exp {
                    num = match num.checked_mul(n as i128) {
                        Some(v) if v.abs() < i64::MAX as i128 => v,
                        _ => return Some(Number::Float(self.to_f64().powf(exp as f64))),
                    };
                    den = match den.checked_mul(d as i128) {
                        Some(v) if v < i64::MAX as i128 => v,
                        _ => return Some(Number::Float(self.to_f64().powf(exp as f64))),
                    };
                }
                Some(Number::ratio(num, den))
            }
            Number::Float(v) => Some(Number::Float(v.powi(exp as i32))),
        }
    }

    /// Total order used for canonical sorting: by value, rationals before
    /// floats on ties.
    pub fn total_cmp(&self, other: &Number) -> Ordering {
        self.to_f64()
            .total_cmp(&other.to_f64())
            .then_with(|| match (self, other) {
                (Number::Rational(a, b), Number::Rational(c, d)) => (a, b).cmp(&(c, d)),
                (Number::Rational(..), Number::Float(_)) => Ordering::Less,
                (Number::Float(_), Number::Rational(..)) => Ordering::Greater,
                (Number::Float(a), Number::Float(b)) => a.to_bits().cmp(&b.to_bits()),
            })
    }
}

impl PartialEq for Number {
    fn eq(&self, other: &Self) -> bool {
        self.total_cmp(other) == Ordering::Equal
    }
}

impl Eq for Number {}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Number::Rational(n, 1) => write!(f, "{n}"),
            Number::Rational(n, d) => write!(f, "{n}/{d}"),
            // Scientific notation marks the literal as a double when re-parsed.
            Number::Float(v) => write!(f, "{v:e}"),
        }
    }
}
