//! Exact rational scalars used throughout the engine.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Rat = BigRational;

/// Shorthand constructor for small rationals.
pub fn rat(num: i64, den: i64) -> Rat {
    assert!(den != 0, "zero denominator");
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn rint(num: i64) -> Rat {
    Rat::from_integer(BigInt::from(num))
}

pub fn rzero() -> Rat {
    Rat::zero()
}

pub fn rone() -> Rat {
    Rat::one()
}

/// 2^-k, the step used by sampling grids and epsilon schedules.
pub fn pow2_neg(k: u32) -> Rat {
    Rat::new(BigInt::one(), BigInt::from(2u8).pow(k))
}

/// Renders a rational as `p` or `p/q` with no sign on the denominator.
pub fn fmt_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses `p` or `p/q` (optionally signed) into a rational.
pub fn parse_rat(s: &str) -> Option<Rat> {
    let s = s.trim();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: BigInt = num.parse().ok()?;
    let d: BigInt = den.parse().ok()?;
    if d.is_zero() {
        return None;
    }
    Some(Rat::new(n, d))
}

/// Midpoint of two rationals.
pub fn midpoint(a: &Rat, b: &Rat) -> Rat {
    (a + b) / rint(2)
}

/// True when `r` is negative, used for sign dispatch in bound handling.
pub fn is_neg(r: &Rat) -> bool {
    r.is_negative()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_text_round_trip() {
        for r in [rat(3, 8), rat(-19, 8), rint(5), rzero()] {
            assert_eq!(parse_rat(&fmt_rat(&r)).unwrap(), r);
        }
    }

    #[test]
    fn pow2_neg_values() {
        assert_eq!(pow2_neg(3), rat(1, 8));
        assert_eq!(pow2_neg(0), rint(1));
    }
}
