//! Cantor function and distance to the Cantor set by exact ternary digit scans.
//!
//! A finite float is a dyadic rational `m / 2^s`; its ternary digits are
//! produced exactly with integer arithmetic (`r ← 3r`, digit = `r >> s`).

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_CANTOR_DEPTH: u32 = 48;
pub const MAX_CANTOR_DEPTH: u32 = 63;

/// Largest denominator exponent kept; lower bits are truncated, which moves
/// the argument by less than 2^-120.
const MAX_SHIFT: u32 = 120;

fn check_depth(depth: u32) -> Result<()> {
    if !(1..=MAX_CANTOR_DEPTH).contains(&depth) {
        return Err(Error::Domain(format!(
            "cantor depth must be in 1..={MAX_CANTOR_DEPTH}, got {depth}"
        )));
    }
    Ok(())
}

/// `x` in `(0, 1)` as `num / 2^shift`.
fn dyadic(x: f64) -> (u128, u32) {
    let (mantissa, exponent, _) = num_traits::Float::integer_decode(x);
    let mut num = mantissa as u128;
    let mut shift = (-(exponent as i32)) as u32;
    if shift > MAX_SHIFT {
        num >>= (shift - MAX_SHIFT).min(127);
        shift = MAX_SHIFT;
    }
    (num, shift)
}

fn unit_interval<T: Real>(x: T) -> Result<f64> {
    let v = x.to_f64_lossy();
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Domain(format!("cantor argument {x} outside [0, 1]")));
    }
    Ok(v)
}

/// Devil's staircase `C(x)` from the first `depth` ternary digits; absolute
/// error at most `2^-depth`.
pub fn cantor_function<T: Real>(x: T, depth: u32) -> Result<T> {
    check_depth(depth)?;
    let v = unit_interval(x)?;
    if v == 0.0 {
        return Ok(T::zero());
    }
    if v == 1.0 {
        return Ok(T::one());
    }
    let (mut num, shift) = dyadic(v);
    let mask = (1u128 << shift) - 1;
    let mut bits: u64 = 0;
    for i in 1..=depth {
        num *= 3;
        let digit = num >> shift;
        num &= mask;
        if digit != 0 {
            bits |= 1u64 << (63 - i);
        }
        if digit == 1 {
            break;
        }
    }
    Ok(T::lit(bits as f64 / 9_223_372_036_854_775_808.0))
}

/// Distance from `x` to the Cantor set, resolved to `3^-depth`.
pub fn cantor_distance<T: Real>(x: T, depth: u32) -> Result<T> {
    check_depth(depth)?;
    let v = unit_interval(x)?;
    if v == 0.0 || v == 1.0 {
        return Ok(T::zero());
    }
    let (mut num, shift) = dyadic(v);
    let mask = (1u128 << shift) - 1;
    let unit = 2f64.powi(-(shift as i32));
    let mut scale = 1.0;
    for _ in 1..=depth {
        let prev = num;
        num *= 3;
        let digit = num >> shift;
        num &= mask;
        if digit == 1 {
            let r = prev as f64 * unit;
            let d = (r - 1.0 / 3.0).min(2.0 / 3.0 - r).max(0.0);
            return Ok(T::lit(d * scale));
        }
        scale /= 3.0;
    }
    Ok(T::zero())
}

/// Deterministic time set `D`: times whose rescaled value `t / s_max` lies
/// off the Cantor set by more than `tolerance`. Times past `s_max` are in `D`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CantorComplement<T> {
    pub s_max: T,
    pub depth: u32,
    pub tolerance: T,
}

impl<T: Real> CantorComplement<T> {
    pub fn new(s_max: T, depth: u32) -> Result<Self> {
        check_depth(depth)?;
        if !(s_max.is_finite() && s_max > T::zero()) {
            return Err(Error::Configuration(format!(
                "staircase horizon must be > 0, got {s_max}"
            )));
        }
        Ok(CantorComplement {
            s_max,
            depth,
            tolerance: T::lit(1e-9),
        })
    }

    pub fn contains(&self, t: T) -> bool {
        let x = t / self.s_max;
        if x < T::zero() || x > T::one() {
            return true;
        }
        cantor_distance(x, self.depth)
            .map(|d| d > self.tolerance)
            .unwrap_or(true)
    }

    pub fn describe(&self) -> String {
        format!(
            "complement of the Cantor set scaled to [0, {}] (depth {}, membership tolerance {:e})",
            self.s_max,
            self.depth,
            self.tolerance.to_f64_lossy()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{One, Zero};
    use proptest::prelude::*;

    /// Recursive midpoint construction on exact rationals.
    fn oracle(x: &BigRational, levels: u32) -> BigRational {
        let third = BigRational::new(BigInt::from(1), BigInt::from(3));
        let two_thirds = BigRational::new(BigInt::from(2), BigInt::from(3));
        let half = BigRational::new(BigInt::from(1), BigInt::from(2));
        let three = BigRational::from_integer(BigInt::from(3));
        let mut x = x.clone();
        let mut value = BigRational::zero();
        let mut weight = BigRational::one();
        for _ in 0..levels {
            if x < third {
                x = &x * &three;
            } else if x > two_thirds {
                value += &weight * &half;
                x = &x * &three - BigRational::from_integer(BigInt::from(2));
            } else {
                return value + &weight * &half;
            }
            weight = &weight * &half;
        }
        value
    }

    fn to_f64(r: &BigRational) -> f64 {
        use num_traits::ToPrimitive;
        r.to_f64().unwrap()
    }

    #[test]
    fn endpoints() {
        assert_eq!(cantor_function(0.0, 48).unwrap(), 0.0);
        assert_eq!(cantor_function(1.0, 48).unwrap(), 1.0);
    }

    #[test]
    fn one_third_maps_to_one_half() {
        // The float nearest 1/3 lies below it; the staircase climbs to 1/2 there.
        let third = BigRational::new(BigInt::from(1), BigInt::from(3));
        assert_eq!(to_f64(&oracle(&third, 60)), 0.5);
        assert!((cantor_function(1.0f64 / 3.0, 48).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn one_quarter_maps_to_one_third() {
        let quarter = BigRational::new(BigInt::from(1), BigInt::from(4));
        let exact = to_f64(&oracle(&quarter, 80));
        assert!((exact - 1.0 / 3.0).abs() < 1e-15);
        assert!((cantor_function(0.25f64, 48).unwrap() - 1.0 / 3.0).abs() <= 2f64.powi(-48));
    }

    #[test]
    fn single_precision_argument() {
        assert!((cantor_function(0.25f32, 24).unwrap() - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(cantor_function(1.5, 48), Err(Error::Domain(_))));
        assert!(matches!(cantor_function(-0.1, 48), Err(Error::Domain(_))));
        assert!(matches!(cantor_function(f64::NAN, 48), Err(Error::Domain(_))));
        assert!(matches!(cantor_function(0.5, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn distance_examples() {
        assert!((cantor_distance(0.5f64, 48).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!(cantor_distance(0.25, 48).unwrap() == 0.0);
        assert!((cantor_distance(0.4f64, 48).unwrap() - (0.4 - 1.0 / 3.0)).abs() < 1e-15);
        // 0.15 lies in the removed interval (1/9, 2/9).
        assert!((cantor_distance(0.15f64, 48).unwrap() - (0.15 - 1.0 / 9.0)).abs() < 1e-15);
    }

    #[test]
    fn complement_membership() {
        let d = CantorComplement::new(2.0, 48).unwrap();
        assert!(d.contains(1.0));
        assert!(!d.contains(0.5));
        assert!(d.contains(2.5));
        assert!(!d.contains(2.0 / 3.0 + 1e-12));
    }

    proptest! {
        #[test]
        fn matches_rational_oracle(x in 0.0f64..=1.0) {
            let r = BigRational::from_float(x).unwrap();
            let want = to_f64(&oracle(&r, 64));
            let got = cantor_function(x, 48).unwrap();
            prop_assert!((got - want).abs() <= 2f64.powi(-47), "x={x} got={got} want={want}");
        }

        #[test]
        fn nondecreasing(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(cantor_function(lo, 48).unwrap() <= cantor_function(hi, 48).unwrap());
        }

        #[test]
        fn flat_off_the_set(x in 0.0f64..=1.0) {
            let d = cantor_distance(x, 48).unwrap();
            if d > 1e-6 {
                let c = cantor_function(x, 48).unwrap();
                prop_assert_eq!(cantor_function((x - 0.5 * d).max(0.0), 48).unwrap(), c);
                prop_assert_eq!(cantor_function((x + 0.5 * d).min(1.0), 48).unwrap(), c);
            }
        }
    }
}
