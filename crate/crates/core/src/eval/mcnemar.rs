//! McNemar's test on paired binary outcomes.
//!
//! Per-question exact-match outcomes of two systems are paired observations;
//! only the discordant counts matter: `b` (A right, B wrong) and `c` (A
//! wrong, B right). At desk scale the exact two-sided binomial test is the
//! default; the continuity-corrected chi-square approximation takes over for
//! large discordant counts.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Discordant-count threshold above which the chi-square approximation is
/// used instead of exact binomial enumeration.
const CHI_SQUARE_MIN_DISCORDANT: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McNemarMethod {
    ExactBinomial,
    ChiSquareCorrected,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McNemarResult {
    /// Questions system A got right and system B got wrong.
    pub b: usize,
    /// Questions system A got wrong and system B got right.
    pub c: usize,
    /// Continuity-corrected statistic `max(|b-c|-1, 0)^2 / (b+c)`.
    pub statistic: f64,
    pub p_value: f64,
    pub method: McNemarMethod,
    /// No discordant pairs: the test carries no evidence and p is 1.
    pub degenerate: bool,
}

/// Two-sided McNemar test over aligned 0/1 outcome vectors.
pub fn mcnemar_test(em_a: &[u8], em_b: &[u8]) -> Result<McNemarResult> {
    if em_a.len() != em_b.len() {
        return Err(Error::Alignment(format!(
            "outcome vectors differ in length: {} vs {}",
            em_a.len(),
            em_b.len()
        )));
    }
    let mut b = 0usize;
    let mut c = 0usize;
    for (&a, &bb) in em_a.iter().zip(em_b) {
        match (a, bb) {
            (1, 0) => b += 1,
            (0, 1) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(b, c))
}

/// The test itself, from discordant counts.
pub fn mcnemar_from_counts(b: usize, c: usize) -> McNemarResult {
    let n = b + c;
    let statistic = if n == 0 {
        0.0
    } else {
        let d = (b as f64 - c as f64).abs() - 1.0;
        d.max(0.0).powi(2) / n as f64
    };
    if n == 0 {
        return McNemarResult {
            b,
            c,
            statistic,
            p_value: 1.0,
            method: McNemarMethod::ExactBinomial,
            degenerate: true,
        };
    }
    if n >= CHI_SQUARE_MIN_DISCORDANT {
        let chi = ChiSquared::new(1.0).expect("df 1");
        let p_value = (1.0 - chi.cdf(statistic)).clamp(0.0, 1.0);
        McNemarResult {
            b,
            c,
            statistic,
            p_value,
            method: McNemarMethod::ChiSquareCorrected,
            degenerate: false,
        }
    } else {
        McNemarResult {
            b,
            c,
            statistic,
            p_value: exact_two_sided_p(b, c),
            method: McNemarMethod::ExactBinomial,
            degenerate: false,
        }
    }
}

/// `min(1, 2 * P[Bin(b+c, 1/2) >= max(b, c)])`, computed with exact integer
/// binomial coefficients.
fn exact_two_sided_p(b: usize, c: usize) -> f64 {
    let n = b + c;
    let k_min = b.max(c);
    let mut tail: u128 = 0;
    for k in k_min..=n {
        tail += binomial(n as u128, k as u128);
    }
    let total = 1u128 << n;
    (2.0 * tail as f64 / total as f64).min(1.0)
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Oracle: enumerate all 2^n equally likely head/tail outcomes of the
    /// discordant pairs and count those at least as extreme as max(b, c).
    fn enumeration_p(b: usize, c: usize) -> f64 {
        let n = b + c;
        if n == 0 {
            return 1.0;
        }
        let threshold = b.max(c);
        let mut extreme = 0u64;
        for outcome in 0u64..(1u64 << n) {
            if (outcome.count_ones() as usize) >= threshold {
                extreme += 1;
            }
        }
        (2.0 * extreme as f64 / (1u64 << n) as f64).min(1.0)
    }

    #[test]
    fn five_one_fixture_is_exactly_14_of_64() {
        let r = mcnemar_from_counts(5, 1);
        assert_eq!(r.p_value, 0.21875);
        assert_eq!(r.method, McNemarMethod::ExactBinomial);
        assert!(!r.degenerate);
    }

    #[test]
    fn concordant_only_pairs_are_degenerate() {
        let r = mcnemar_test(&[1, 1, 0, 0], &[1, 1, 0, 0]).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(r.degenerate);
        assert_eq!((r.b, r.c), (0, 0));
    }

    #[test]
    fn balanced_discordance_has_minimal_statistic_and_large_p() {
        let r = mcnemar_from_counts(4, 4);
        assert_eq!(r.statistic, 0.0);
        assert!(r.p_value > 0.05);
        // shifting one pair away from balance grows the statistic
        assert!(mcnemar_from_counts(6, 2).statistic > r.statistic);
    }

    #[test]
    fn length_mismatch_is_an_alignment_error() {
        assert!(mcnemar_test(&[1, 0], &[1]).is_err());
    }

    #[test]
    fn large_discordance_switches_to_chi_square() {
        let r = mcnemar_from_counts(20, 10);
        assert_eq!(r.method, McNemarMethod::ChiSquareCorrected);
        // statistic = (|20-10|-1)^2/30 = 81/30 = 2.7
        assert!((r.statistic - 2.7).abs() < 1e-12);
        assert!(r.p_value > 0.0 && r.p_value < 1.0);
    }

    #[test]
    fn exact_p_matches_enumeration_for_small_counts() {
        for b in 0..=8usize {
            for c in 0..=8usize {
                if b + c == 0 {
                    continue;
                }
                let r = mcnemar_from_counts(b, c);
                assert_eq!(r.p_value, enumeration_p(b, c), "b={b} c={c}");
            }
        }
    }

    proptest! {
        #[test]
        fn two_sided_p_is_symmetric(b in 0usize..12, c in 0usize..12) {
            let r1 = mcnemar_from_counts(b, c);
            let r2 = mcnemar_from_counts(c, b);
            prop_assert_eq!(r1.p_value, r2.p_value);
            prop_assert_eq!(r1.statistic, r2.statistic);
        }

        #[test]
        fn concordant_pairs_do_not_move_the_test(seed in 0u64..128) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(4..40);
            let a: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
            let mut b: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=1)).collect();
            // keep the discordant count inside the exact regime
            let mut discordant = 0;
            for i in 0..n {
                if a[i] != b[i] {
                    discordant += 1;
                    if discordant > 12 {
                        b[i] = a[i];
                    }
                }
            }
            let base = mcnemar_test(&a, &b).unwrap();
            // append concordant pairs: the result must not change
            let mut a2 = a.clone();
            let mut b2 = b.clone();
            for v in [0u8, 1, 1, 0, 1] {
                a2.push(v);
                b2.push(v);
            }
            let padded = mcnemar_test(&a2, &b2).unwrap();
            prop_assert_eq!(base.p_value, padded.p_value);
            prop_assert_eq!((base.b, base.c), (padded.b, padded.c));
            // and the exact p agrees with brute-force enumeration
            prop_assert_eq!(base.p_value, enumeration_p(base.b, base.c));
        }
    }
}
