//! Green functions on balls: exact solves, Monte Carlo estimates, the
//! derived metric and kernels, and the analytic oracle for simple random
//! walk on free groups.

pub mod analysis;
pub mod mc;
pub mod operator;

pub use analysis::{
    fit_length_tail, green_metric, green_solve, harmonicity_defect, hit_probability,
    length_distribution, martin_kernel, spectral_radius_lb, weighted_green, GreenValues,
    LengthDistribution, TailFit, WeightedGreen,
};
pub use mc::green_mc;
pub use operator::{green_column, power_iteration, GreenColumn, TruncatedOperator};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Method {
    Oracle,
    Solve,
    MonteCarlo,
}

/// A Green-function value with provenance and error information: residual
/// bound for solves, 99% confidence half-width for Monte Carlo, zero for
/// oracle values.
#[derive(Clone, Debug, Serialize)]
pub struct GreenEstimate<S> {
    pub value: S,
    pub method: Method,
    pub error: S,
    pub radius_used: Option<u32>,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
}

/// Closed-form constants for simple random walk on the free group of rank
/// k >= 2, from the first-passage quadratic q F^2 - (q+1) F + 1 = 0 with
/// q = 2k - 1 (root F = 1/q) and the radial birth-death drift.
#[derive(Clone, Debug, Serialize)]
pub struct TreeOracle<S> {
    pub rank: usize,
    pub first_passage: S,
    pub green_ee: S,
    pub spectral_radius: S,
    pub drift: S,
    pub green_metric_slope: S,
}

pub fn tree_oracle<S: Scalar>(rank: usize) -> Result<TreeOracle<S>> {
    if rank < 2 {
        return Err(Error::Config(
            "tree oracle needs rank >= 2 (rank 1 is recurrent)".into(),
        ));
    }
    let k = S::of(rank as f64);
    let q = S::of(2.0 * rank as f64 - 1.0);
    let first_passage = S::one() / q;
    let green_ee = q / (q - S::one());
    let spectral_radius = q.sqrt() / k;
    let drift = (k - S::one()) / k;
    let green_metric_slope = q.ln();
    Ok(TreeOracle {
        rank,
        first_passage,
        green_ee,
        spectral_radius,
        drift,
        green_metric_slope,
    })
}

impl<S: Scalar> TreeOracle<S> {
    /// Green value between points at word distance d.
    pub fn green_at_distance(&self, d: u32) -> S {
        self.green_ee * self.first_passage.powi(d as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_constants() {
        let t: TreeOracle<f64> = tree_oracle(2).unwrap();
        assert!((t.green_ee - 1.5).abs() < 1e-15);
        assert!((t.spectral_radius - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert!((t.drift - 0.5).abs() < 1e-15);
        assert!((t.green_metric_slope - 3f64.ln()).abs() < 1e-15);

        let t3: TreeOracle<f64> = tree_oracle(3).unwrap();
        assert!((t3.green_ee - 1.25).abs() < 1e-15);
        assert!((t3.spectral_radius - 5f64.sqrt() / 3.0).abs() < 1e-12);
        assert!((t3.drift - 2.0 / 3.0).abs() < 1e-15);

        assert!(tree_oracle::<f64>(1).is_err());
    }

    #[test]
    fn oracle_consistency_green_vs_return() {
        // green_ee = 1 / (1 - F) with return probability F.
        for k in 2..6 {
            let t: TreeOracle<f64> = tree_oracle(k).unwrap();
            assert!((t.green_ee - 1.0 / (1.0 - t.first_passage)).abs() < 1e-14);
        }
    }
}
