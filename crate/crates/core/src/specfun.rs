//! Log-gamma, digamma and trigamma on the positive reals.
//!
//! All three shift the argument upwards with the functional recurrences until
//! it is at least [`ASYMPTOTIC_MIN`] and then sum the Stirling-type asymptotic
//! series. `ln_gamma` additionally uses the Taylor series of `ln Γ(1 + z)`
//! close to its zeros at 1 and 2, where the shifted form loses all relative
//! accuracy to cancellation.

use crate::error::{Error, Result};

const ASYMPTOTIC_MIN: f64 = 10.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// ζ(2), ζ(3), …, ζ(30).
#[allow(clippy::excessive_precision)]
const ZETA: [f64; 29] = [
    1.6449340668482264,
    1.2020569031595943,
    1.0823232337111382,
    1.0369277551433699,
    1.0173430619844491,
    1.0083492773819228,
    1.0040773561979443,
    1.0020083928260822,
    1.0009945751278181,
    1.0004941886041195,
    1.000246086553308,
    1.0001227133475785,
    1.0000612481350587,
    1.000030588236307,
    1.0000152822594087,
    1.0000076371976379,
    1.000003817293265,
    1.0000019082127166,
    1.0000009539620339,
    1.0000004769329868,
    1.0000002384505027,
    1.000000119219926,
    1.0000000596081891,
    1.0000000298035035,
    1.0000000149015548,
    1.0000000074507118,
    1.000000003725334,
    1.0000000018626597,
    1.0000000009313274,
];

fn check(function: &'static str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::DomainError { function, x })
    }
}

/// `ln Γ(1 + z)` for `|z| <= 0.25`.
fn ln_gamma_1p_series(z: f64) -> f64 {
    let mut sum = 0.0;
    let mut power = -z;
    for (i, zeta) in ZETA.iter().enumerate() {
        power *= -z;
        sum += zeta * power / (i + 2) as f64;
    }
    sum - EULER_GAMMA * z
}

fn ln_gamma_stirling(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2
                                * (-1.0 / 1680.0
                                    + inv2
                                        * (1.0 / 1188.0
                                            + inv2 * (-691.0 / 360360.0 + inv2 / 156.0))))));
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + series
}

pub fn ln_gamma(x: f64) -> Result<f64> {
    check("ln_gamma", x)?;
    if x == 1.0 || x == 2.0 {
        return Ok(0.0);
    }
    if (x - 1.0).abs() <= 0.25 {
        return Ok(ln_gamma_1p_series(x - 1.0));
    }
    if (x - 2.0).abs() <= 0.25 {
        let z = x - 2.0;
        return Ok(z.ln_1p() + ln_gamma_1p_series(z));
    }
    if x >= ASYMPTOTIC_MIN {
        return Ok(ln_gamma_stirling(x));
    }
    let mut shifted = x;
    let mut product = 1.0;
    while shifted < ASYMPTOTIC_MIN {
        product *= shifted;
        shifted += 1.0;
    }
    Ok(ln_gamma_stirling(shifted) - product.ln())
}

pub fn digamma(x: f64) -> Result<f64> {
    check("digamma", x)?;
    let mut shifted = x;
    let mut correction = 0.0;
    while shifted < ASYMPTOTIC_MIN {
        correction -= 1.0 / shifted;
        shifted += 1.0;
    }
    let inv = 1.0 / shifted;
    let inv2 = inv * inv;
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    Ok(shifted.ln() - 0.5 * inv - series + correction)
}

pub fn trigamma(x: f64) -> Result<f64> {
    check("trigamma", x)?;
    let mut shifted = x;
    let mut correction = 0.0;
    while shifted < ASYMPTOTIC_MIN {
        correction += 1.0 / (shifted * shifted);
        shifted += 1.0;
    }
    let inv = 1.0 / shifted;
    let inv2 = inv * inv;
    let series = inv
        + inv2 / 2.0
        + inv
            * inv2
            * (1.0 / 6.0
                - inv2
                    * (1.0 / 30.0
                        - inv2
                            * (1.0 / 42.0
                                - inv2
                                    * (1.0 / 30.0
                                        - inv2 * (5.0 / 66.0 - inv2 * (691.0 / 2730.0 - inv2 * 7.0 / 6.0))))));
    Ok(series + correction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    // Reference values computed with 30-digit arbitrary precision arithmetic.
    #[allow(clippy::excessive_precision)]
    const REFERENCE: [(f64, f64, f64, f64); 8] = [
        (0.5, 0.57236494292470008707, -1.9635100260214234794, 4.9348022005446793094),
        (1e-6, 13.815509980749431714, -1000000.5772140200139, 1000000000001.6450222),
        (3.7, 1.4280723266653881292, 1.1671535393615114409, 0.31003785767003830216),
        (1234.5, 7550.5509010778948957, 7.1180162318279978433, 0.0008103727271269666527),
        (0.999, 0.00057803853289138023817, -0.57886180210864542792, 1.6473414317770505536),
        (1.001, -0.00057639359828330615152, -0.57557193181030065237, 1.642533195868978297),
        (2.0001, 0.000042281658112919946317, 0.42284882648466538607, 0.64489365793714374133),
        (150.3, 601.51196083353637959, 5.009302927868656741, 0.0066755426332302014267),
    ];

    #[test]
    fn analytic_values() {
        assert_eq!(ln_gamma(1.0).unwrap(), 0.0);
        assert!((ln_gamma(5.0).unwrap() - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5).unwrap() - 0.5 * PI.ln()).abs() < 1e-12);
        assert!((digamma(1.0).unwrap() + 0.5772156649).abs() < 1e-10);
        assert!((digamma(2.0).unwrap() - 0.4227843351).abs() < 1e-10);
        assert!((digamma(0.5).unwrap() + 1.9635100260).abs() < 1e-10);
        assert!((trigamma(1.0).unwrap() - 1.6449340668).abs() < 1e-9);
        assert!((trigamma(2.0).unwrap() - 0.6449340668).abs() < 1e-9);
        let h = 1e-5;
        let fd = (digamma(10.0 + h).unwrap() - digamma(10.0 - h).unwrap()) / (2.0 * h);
        assert!((trigamma(10.0).unwrap() - fd).abs() < 1e-6);
    }

    #[test]
    fn matches_high_precision_reference() {
        for (x, lg, dg, tg) in REFERENCE {
            assert!(rel(ln_gamma(x).unwrap(), lg) < 1e-12, "ln_gamma({x})");
            assert!(rel(digamma(x).unwrap(), dg) < 1e-10, "digamma({x})");
            assert!(rel(trigamma(x).unwrap(), tg) < 1e-9, "trigamma({x})");
        }
    }

    #[test]
    fn domain_errors() {
        for x in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(ln_gamma(x).is_err());
            assert!(digamma(x).is_err());
            assert!(trigamma(x).is_err());
        }
    }

    proptest! {
        #[test]
        fn recurrences(x in 0.1f64..100.0) {
            let d = digamma(x + 1.0).unwrap() - digamma(x).unwrap() - 1.0 / x;
            prop_assert!(d.abs() < 1e-10 * (1.0 + digamma(x).unwrap().abs()));
            let t = trigamma(x + 1.0).unwrap() - trigamma(x).unwrap() + 1.0 / (x * x);
            prop_assert!(t.abs() < 1e-10 * (1.0 + trigamma(x).unwrap()));
            let l = ln_gamma(x + 1.0).unwrap() - ln_gamma(x).unwrap() - x.ln();
            prop_assert!(l.abs() < 1e-12 * (1.0 + ln_gamma(x).unwrap().abs()));
        }

        #[test]
        fn digamma_is_derivative_of_ln_gamma(x in 0.5f64..1000.0) {
            let h = 1e-6 * x.max(1.0);
            let fd = (ln_gamma(x + h).unwrap() - ln_gamma(x - h).unwrap()) / (2.0 * h);
            let d = digamma(x).unwrap();
            prop_assert!((fd - d).abs() <= 1e-5 * d.abs().max(1.0));
        }

        #[test]
        fn trigamma_positive(x in 1e-6f64..1e6) {
            prop_assert!(trigamma(x).unwrap() > 0.0);
        }
    }
}
