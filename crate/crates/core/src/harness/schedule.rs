//! The recoverable-resilience schedule in exact rationals.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error("rho_C must be positive, got {0}")]
    NonPositiveRhoC(BigRational),
    #[error("rho_C + 2 rho_L must equal 1, got {0}")]
    NotOptimal(BigRational),
}

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// `x_r`: the fraction of processes guaranteed removed after `r` recoveries,
/// `x_0 = 0`, `x_{r+1} = x_r + ρ_C (1 - x_r)`.
pub fn removed_fraction(rho_c: &BigRational, r: u32) -> BigRational {
    let mut x = BigRational::zero();
    for _ in 0..r {
        x = &x + rho_c * (BigRational::one() - &x);
    }
    x
}

/// `(g_1(r), g_2(r))`: the consistency and liveness resilience after `r`
/// violations.
///
/// ```
/// use smr_recovery::harness::{ratio, resilience_schedule};
///
/// let third = ratio(1, 3);
/// let (g1, g2) = resilience_schedule(&third, &third, 1).unwrap();
/// assert_eq!((g1, g2), (ratio(5, 9), ratio(5, 9)));
/// ```
pub fn resilience_schedule(
    rho_c: &BigRational,
    rho_l: &BigRational,
    r: u32,
) -> Result<(BigRational, BigRational), ScheduleError> {
    if !rho_c.is_positive() {
        return Err(ScheduleError::NonPositiveRhoC(rho_c.clone()));
    }
    let total = rho_c + rho_l * BigInt::from(2);
    if !total.is_one() {
        return Err(ScheduleError::NotOptimal(total));
    }
    let cap = BigRational::one() - rho_l;
    let x_r = removed_fraction(rho_c, r);
    let x_next = removed_fraction(rho_c, r + 1);
    let g2 = &x_r + rho_l * (BigRational::one() - &x_r);
    Ok((x_next.min(cap.clone()), g2.min(cap)))
}

/// Most violations a run with `f` of `n` processes corrupted can suffer: the
/// least `r` with `f < g_1(r) n`. `None` when no schedule value exceeds `f / n`.
pub fn violation_bound(rho_c: &BigRational, rho_l: &BigRational, f: usize, n: usize) -> Option<u32> {
    let frac = ratio(f as i64, n as i64);
    let cap = BigRational::one() - rho_l;
    if frac >= cap {
        return None;
    }
    (0..).find(|&r| {
        resilience_schedule(rho_c, rho_l, r)
            .map(|(g1, _)| frac < g1)
            .unwrap_or(true)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Pow;

    #[test]
    fn thirds_schedule() {
        let t = ratio(1, 3);
        let g1: Vec<BigRational> = (0..4).map(|r| resilience_schedule(&t, &t, r).unwrap().0).collect();
        assert_eq!(g1, vec![ratio(1, 3), ratio(5, 9), ratio(2, 3), ratio(2, 3)]);
        let g2: Vec<BigRational> = (0..3).map(|r| resilience_schedule(&t, &t, r).unwrap().1).collect();
        assert_eq!(g2, vec![ratio(1, 3), ratio(5, 9), ratio(2, 3)]);
    }

    #[test]
    fn removed_fraction_has_a_closed_form() {
        for (num, den) in [(1, 3), (1, 5), (3, 5), (1, 1)] {
            let rho = ratio(num, den);
            for r in 0..8u32 {
                let closed = BigRational::one() - (BigRational::one() - &rho).pow(r as i32);
                assert_eq!(removed_fraction(&rho, r), closed, "rho={rho} r={r}");
            }
        }
    }

    #[test]
    fn violation_bounds() {
        let t = ratio(1, 3);
        assert_eq!(violation_bound(&t, &t, 2, 9), Some(0));
        assert_eq!(violation_bound(&t, &t, 3, 9), Some(1));
        assert_eq!(violation_bound(&t, &t, 4, 9), Some(1));
        assert_eq!(violation_bound(&t, &t, 5, 9), Some(2));
        assert_eq!(violation_bound(&t, &t, 6, 9), None);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            resilience_schedule(&ratio(0, 1), &ratio(1, 2), 0),
            Err(ScheduleError::NonPositiveRhoC(_))
        ));
        assert!(matches!(
            resilience_schedule(&ratio(1, 3), &ratio(1, 4), 0),
            Err(ScheduleError::NotOptimal(_))
        ));
        let fifth = ratio(1, 5);
        let (g1, g2) = resilience_schedule(&fifth, &ratio(2, 5), 1).unwrap();
        assert_eq!((g1, g2), (ratio(9, 25), ratio(13, 25)));
    }
}
