//! Validation tooling for the tiered-allocation model: closed-form tier
//! distributions, a Monte-Carlo estimator over a real frame pool, and a
//! chi-square goodness-of-fit check between the two.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::hash::{mix64, AllocTier, AnalyticModel, HashPolicy, Vpn};
use crate::mem::PhysMem;

/// Expected probability of landing in each bin: tiers 1..=n followed by the
/// fallback bin. Sums to 1.
pub fn expected_tier_distribution(p: f64, n: usize) -> Vec<f64> {
    let model = AnalyticModel::new(p, n);
    let mut dist: Vec<f64> = (1..=n)
        .map(|i| model.tier_probability(i).expect("tier in range"))
        .collect();
    dist.push(p.powi(n as i32));
    dist
}

/// Estimated tier distribution from `trials` independent allocations against
/// a pool of `total_frames` frames held at occupancy `p`. Returns counts per
/// bin (tiers 1..=n, then fallback).
///
/// Each trial claims and immediately releases its frame so occupancy stays
/// exactly at p, and the pool is periodically re-randomized so trials do not
/// all see the same occupied set.
pub fn monte_carlo_tier_distribution(
    total_frames: u64,
    p: f64,
    n: usize,
    trials: u64,
    seed: u64,
) -> Vec<u64> {
    const RESHUFFLE_EVERY: u64 = 10_000;
    let mut counts = vec![0u64; n + 1];
    let mut mem = PhysMem::new(total_frames).expect("frame count >= 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = HashPolicy::new(n, mix64(seed ^ 0x616c6c6f63), total_frames);
    for trial in 0..trials {
        if trial % RESHUFFLE_EVERY == 0 {
            mem.inject_pressure(p, mix64(seed.wrapping_add(trial)))
                .expect("valid occupancy fraction");
        }
        let vpn = Vpn(rng.random_range(0..(1u64 << 36)));
        match policy.tiered_allocate(&mut mem, vpn) {
            Ok(out) => {
                match out.tier {
                    AllocTier::Hash(i) => counts[i - 1] += 1,
                    AllocTier::Fallback => counts[n] += 1,
                }
                mem.release(out.ppn).expect("frame was just claimed");
            }
            // A full pool (p = 1.0) cannot satisfy any probe or fallback.
            Err(_) => counts[n] += 1,
        }
    }
    counts
}

#[derive(Debug, Clone, Copy)]
pub struct ChiSquareFit {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub critical_value: f64,
    pub accepted: bool,
}

/// Pearson chi-square test of observed counts against expected bin
/// probabilities at significance `alpha`. Bins whose expected count falls
/// below 5 are merged into the last kept bin, the standard validity rule.
pub fn chi_square_fit(observed: &[u64], expected: &[f64], alpha: f64) -> ChiSquareFit {
    assert_eq!(observed.len(), expected.len());
    assert!(!observed.is_empty());
    let trials: u64 = observed.iter().sum();
    let mut merged: Vec<(f64, f64)> = Vec::new(); // (observed, expected) counts
    for (&obs, &prob) in observed.iter().zip(expected) {
        let exp = prob * trials as f64;
        match merged.last_mut() {
            Some(last) if last.1 < 5.0 => {
                last.0 += obs as f64;
                last.1 += exp;
            }
            _ => merged.push((obs as f64, exp)),
        }
    }
    // A trailing under-filled bin is folded backwards.
    while merged.len() > 1 && merged.last().expect("non-empty").1 < 5.0 {
        let (obs, exp) = merged.pop().expect("non-empty");
        let last = merged.last_mut().expect("non-empty");
        last.0 += obs;
        last.1 += exp;
    }
    let statistic: f64 = merged
        .iter()
        .map(|&(obs, exp)| (obs - exp).powi(2) / exp)
        .sum();
    let df = merged.len().saturating_sub(1).max(1);
    let critical_value = ChiSquared::new(df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - alpha);
    ChiSquareFit {
        statistic,
        degrees_of_freedom: df,
        critical_value,
        accepted: statistic <= critical_value,
    }
}

/// Three-sigma binomial check of an observed success count against
/// probability `p` over `trials` draws.
pub fn within_three_sigma(successes: u64, trials: u64, p: f64) -> bool {
    let n = trials as f64;
    let sigma = (n * p * (1.0 - p)).sqrt();
    (successes as f64 - n * p).abs() <= 3.0 * sigma.max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expected_distribution_sums_to_one() {
        for &(p, n) in &[(0.0, 1), (0.3, 3), (0.8, 6), (1.0, 4)] {
            let d = expected_tier_distribution(p, n);
            assert_eq!(d.len(), n + 1);
            let total: f64 = d.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn expected_distribution_known_values() {
        // p = 0.4, N = 3: 0.6, 0.24, 0.096, fallback 0.064.
        let d = expected_tier_distribution(0.4, 3);
        assert!((d[0] - 0.6).abs() < 1e-12);
        assert!((d[1] - 0.24).abs() < 1e-12);
        assert!((d[2] - 0.096).abs() < 1e-12);
        assert!((d[3] - 0.064).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_matches_model_at_moderate_pressure() {
        let trials = 40_000u64;
        let counts = monte_carlo_tier_distribution(1 << 16, 0.4, 3, trials, 77);
        assert_eq!(counts.iter().sum::<u64>(), trials);
        let expected = expected_tier_distribution(0.4, 3);
        let fit = chi_square_fit(&counts, &expected, 0.001);
        assert!(
            fit.accepted,
            "chi2 {} > critical {}",
            fit.statistic, fit.critical_value
        );
        let successes: u64 = counts[..3].iter().sum();
        assert!(within_three_sigma(successes, trials, 1.0 - 0.4f64.powi(3)));
    }

    #[test]
    fn monte_carlo_empty_pool_always_first_tier() {
        let counts = monte_carlo_tier_distribution(1 << 12, 0.0, 3, 1_000, 5);
        assert_eq!(counts, vec![1_000, 0, 0, 0]);
    }

    #[test]
    fn monte_carlo_full_pool_always_fallback_bin() {
        let counts = monte_carlo_tier_distribution(1 << 10, 1.0, 2, 500, 5);
        assert_eq!(counts, vec![0, 0, 500]);
    }

    #[test]
    fn chi_square_rejects_gross_mismatch() {
        let observed = vec![900u64, 50, 25, 25];
        let expected = expected_tier_distribution(0.8, 3);
        let fit = chi_square_fit(&observed, &expected, 0.001);
        assert!(!fit.accepted);
    }

    #[test]
    fn chi_square_merges_thin_bins() {
        // p = 0.05: tiers 2 and 3 plus fallback expect < 5 of 100 trials each
        // and must merge rather than blow up the statistic.
        let observed = vec![95u64, 5, 0, 0];
        let expected = expected_tier_distribution(0.05, 3);
        let fit = chi_square_fit(&observed, &expected, 0.001);
        assert!(fit.degrees_of_freedom < 3);
        assert!(fit.accepted);
    }

    #[test]
    fn three_sigma_bounds() {
        assert!(within_three_sigma(500, 1_000, 0.5));
        assert!(!within_three_sigma(700, 1_000, 0.5));
        // Degenerate sigma guard: p = 0 with zero successes passes.
        assert!(within_three_sigma(0, 1_000, 0.0));
    }
}
