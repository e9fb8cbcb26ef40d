//! Monte Carlo Green estimates: expected visit counts over independent
//! walk streams, parallel across walks with scheduling-independent totals.

use rayon::prelude::*;

use crate::error::Result;
use crate::group::{inverse, multiply, GroupElement};
use crate::green::{GreenEstimate, Method};
use crate::measure::{StepMeasure, Walker};
use crate::scalar::Scalar;

/// Normal quantile for two-sided 99% confidence.
pub const Z99: f64 = 2.5758293035489004;

/// Mean number of visits to `y` within `horizon` steps of walks started at
/// `x`: an unbiased estimate of the horizon-truncated Green value, with a
/// 99% CLT half-width. Deterministic in (seed, walk index).
pub fn green_mc<S: Scalar>(
    m: &StepMeasure<S>,
    x: &GroupElement,
    y: &GroupElement,
    n_walks: u64,
    horizon: u32,
    seed: u64,
) -> Result<GreenEstimate<S>> {
    let group = m.group().clone();
    // Visits of the walk from x to y are visits of the identity-based walk
    // to x^-1 y.
    let target = multiply(&group, &inverse(&group, x), y);
    let target_len = target.word_length();

    let chunk = 4096u64;
    let n_chunks = n_walks.div_ceil(chunk);
    let stats: Vec<(u64, u64)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * chunk;
            let hi = (lo + chunk).min(n_walks);
            let mut visits_sum = 0u64;
            let mut visits_sq = 0u64;
            for w in lo..hi {
                let mut walker = Walker::new(m, seed, w);
                let mut visits = u64::from(target.is_identity());
                for _ in 0..horizon {
                    walker.step();
                    if walker.word_length() == target_len && *walker.position() == target {
                        visits += 1;
                    }
                }
                visits_sum += visits;
                visits_sq += visits * visits;
            }
            (visits_sum, visits_sq)
        })
        .collect();

    let (sum, sq) = stats
        .into_iter()
        .fold((0u64, 0u64), |(a, b), (s, q)| (a + s, b + q));
    let n = n_walks as f64;
    let mean = sum as f64 / n;
    let var = if n_walks > 1 {
        (sq as f64 - n * mean * mean) / (n - 1.0)
    } else {
        0.0
    };
    let half_width = Z99 * (var.max(0.0) / n).sqrt();
    Ok(GreenEstimate {
        value: S::of(mean),
        method: Method::MonteCarlo,
        error: S::of(half_width),
        radius_used: None,
        samples: Some(n_walks),
        seed: Some(seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Group;

    #[test]
    fn deterministic_single_visit() {
        let g = Group::parse("free(1)").unwrap();
        let m = StepMeasure::<f64>::parse(g.clone(), "a:1.0").unwrap();
        let x = GroupElement::identity();
        let y = GroupElement::parse(&g, "a").unwrap();
        for horizon in [1, 5, 50] {
            let est = green_mc(&m, &x, &y, 10, horizon, 3).unwrap();
            assert_eq!(est.value, 1.0);
            assert_eq!(est.error, 0.0);
        }
    }

    #[test]
    fn single_walk_reproducible() {
        let g = Group::parse("free(2)").unwrap();
        let m: StepMeasure<f64> = StepMeasure::srw(g);
        let x = GroupElement::identity();
        let a = green_mc(&m, &x, &x, 1, 100, 11).unwrap();
        let b = green_mc(&m, &x, &x, 1, 100, 11).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.value.fract(), 0.0);
    }

    #[test]
    fn tree_return_estimate() {
        let g = Group::parse("free(2)").unwrap();
        let m: StepMeasure<f64> = StepMeasure::srw(g);
        let e = GroupElement::identity();
        let est = green_mc(&m, &e, &e, 40_000, 60, 7).unwrap();
        assert!(
            (est.value - 1.5).abs() < 3.0 * est.error.max(0.01),
            "value {} +- {}",
            est.value,
            est.error
        );
    }
}
