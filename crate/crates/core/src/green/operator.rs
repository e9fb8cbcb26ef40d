//! Truncated transition operator on a ball and the Neumann iteration for
//! Green columns.

use crate::error::{Error, Result};
use crate::group::{CayleyBall, OUTSIDE};
use crate::measure::{step_table, AtomStep, StepMeasure};
use crate::scalar::Scalar;

/// Substochastic transition operator restricted to a ball, with everything
/// outside the ball absorbing, plus an optional forbidden set of interior
/// states.
pub struct TruncatedOperator<'a, S: Scalar> {
    ball: &'a CayleyBall,
    steps: Vec<(AtomStep, S)>,
    /// Letter atoms as (dirgen, weight) when *all* atoms are single letters.
    letter_fast: Option<Vec<(u32, S)>>,
    uniform_weight: Option<S>,
    forbidden: Option<Vec<bool>>,
}

impl<'a, S: Scalar> TruncatedOperator<'a, S> {
    pub fn new(
        ball: &'a CayleyBall,
        m: &StepMeasure<S>,
        forbidden: Option<&[u32]>,
    ) -> Result<Self> {
        let steps = step_table(ball, m)?;
        let letter_fast = steps
            .iter()
            .map(|(step, w)| match step {
                AtomStep::Letter(s) => Some((*s, *w)),
                _ => None,
            })
            .collect::<Option<Vec<_>>>();
        let uniform_weight = {
            let w0 = steps[0].1;
            steps.iter().all(|&(_, w)| w == w0).then_some(w0)
        };
        let forbidden = forbidden.map(|set| {
            let mut mask = vec![false; ball.len()];
            for &i in set {
                mask[i as usize] = true;
            }
            mask
        });
        Ok(TruncatedOperator {
            ball,
            steps,
            letter_fast,
            uniform_weight,
            forbidden,
        })
    }

    pub fn ball(&self) -> &CayleyBall {
        self.ball
    }

    pub fn is_forbidden(&self, i: u32) -> bool {
        self.forbidden
            .as_ref()
            .is_some_and(|mask| mask[i as usize])
    }

    /// One application `out[i] = sum_a w_a * u[i . a]` over non-forbidden
    /// rows, reading absorbed states as zero. `u` and `out` carry one
    /// padding slot at index n that stays zero. Returns the max change over
    /// updated rows; `target` adds the unit source term.
    fn apply(&self, u: &[S], out: &mut [S], target: Option<u32>) -> S {
        let n = self.ball.len();
        let n32 = n as u32;
        let g = self.ball.n_dirgens() as usize;
        let adj = self.ball.adjacency();
        let mut max_inc = S::zero();
        let tgt = target.map(|t| t as usize).unwrap_or(usize::MAX);

        if let (Some(letters), None) = (&self.letter_fast, &self.forbidden) {
            if let Some(w) = self.uniform_weight {
                // Hot kernel: uniform single-letter atoms, no forbidden set.
                for i in 0..n {
                    let row = &adj[i * g..i * g + g];
                    let mut acc = S::zero();
                    for &(s, _) in letters.iter() {
                        acc += u[row[s as usize].min(n32) as usize];
                    }
                    let mut val = acc * w;
                    if i == tgt {
                        val += S::one();
                    }
                    let inc = (val - u[i]).abs();
                    if inc > max_inc {
                        max_inc = inc;
                    }
                    out[i] = val;
                }
            } else {
                for i in 0..n {
                    let row = &adj[i * g..i * g + g];
                    let mut val = S::zero();
                    for &(s, w) in letters.iter() {
                        val += u[row[s as usize].min(n32) as usize] * w;
                    }
                    if i == tgt {
                        val += S::one();
                    }
                    let inc = (val - u[i]).abs();
                    if inc > max_inc {
                        max_inc = inc;
                    }
                    out[i] = val;
                }
            }
            return max_inc;
        }

        let blocked = self.forbidden.as_deref();
        for i in 0..n {
            if blocked.is_some_and(|b| b[i]) {
                out[i] = u[i];
                continue;
            }
            let mut val = S::zero();
            for (step, w) in &self.steps {
                let t = step.target(self.ball, i as u32);
                let t = if t == OUTSIDE { n32 } else { t };
                val += u[t as usize] * *w;
            }
            if i == tgt {
                val += S::one();
            }
            let inc = (val - u[i]).abs();
            if inc > max_inc {
                max_inc = inc;
            }
            out[i] = val;
        }
        max_inc
    }

    /// Evaluate one row against frozen neighbor values (used to patch
    /// forbidden rows after convergence: their own trajectories may start
    /// there as an exempt endpoint).
    fn row_value(&self, u: &[S], i: u32, target: u32) -> S {
        let n32 = self.ball.len() as u32;
        let mut val = S::zero();
        for (step, w) in &self.steps {
            let t = step.target(self.ball, i);
            let t = if t == OUTSIDE { n32 } else { t };
            val += u[t as usize] * *w;
        }
        if i == target {
            val += S::one();
        }
        val
    }
}

/// A solved Green column: total trajectory weight from every ball point to
/// the target, restricted to the ball (and to the allowed set when a
/// forbidden set was given; forbidden points count only as start points).
pub struct GreenColumn<S> {
    pub target: u32,
    pub values: Vec<S>,
    /// Extrapolated remaining increment mass at termination.
    pub residual: S,
    pub sweeps: u32,
}

impl<S: Scalar> GreenColumn<S> {
    pub fn value(&self, x: u32) -> S {
        self.values[x as usize]
    }
}

pub const DEFAULT_SOLVE_TOL: f64 = 1e-12;
const CONSECUTIVE_BELOW: u32 = 3;
const PROBE_WINDOW: usize = 50;
const DECAY_GUARD: f64 = 0.999;

/// Neumann iteration for the Green column of `target`: value(x) accumulates
/// the weight of all trajectories x -> target staying in the ball, absorbed
/// on leaving it or on entering the forbidden set strictly between the
/// endpoints. Converges geometrically for transient truncations; a decay
/// probe aborts when increments stall (recurrence suspect).
pub fn green_column<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    target: u32,
    forbidden: Option<&[u32]>,
    tol: S,
) -> Result<GreenColumn<S>> {
    let op = TruncatedOperator::new(ball, m, forbidden)?;
    let n = ball.len();
    if target as usize >= n {
        return Err(Error::OutOfBall("green target".into()));
    }
    let mut u = vec![S::zero(); n + 1];
    let mut next = vec![S::zero(); n + 1];
    // Frozen continuation values for forbidden states: a mid-trajectory
    // visit terminates unless the state is the target itself.
    if op.is_forbidden(target) {
        u[target as usize] = S::one();
    }

    let mut inc_history: Vec<f64> = Vec::new();
    let mut below = 0u32;
    let mut sweeps = 0u32;
    let max_sweeps = 2_000_000u32;
    loop {
        let inc = op.apply(&u, &mut next, Some(target));
        std::mem::swap(&mut u, &mut next);
        sweeps += 1;
        inc_history.push(inc.as_f64());
        if inc < tol {
            below += 1;
            if below >= CONSECUTIVE_BELOW {
                break;
            }
        } else {
            below = 0;
        }
        if sweeps as usize > PROBE_WINDOW {
            let prev = inc_history[inc_history.len() - 1 - PROBE_WINDOW];
            let cur = inc_history[inc_history.len() - 1];
            if prev > 0.0 && cur > 0.0 {
                let rate = (cur / prev).powf(1.0 / PROBE_WINDOW as f64);
                if rate >= DECAY_GUARD && cur >= tol.as_f64() {
                    return Err(Error::Divergence(format!(
                        "increment decay {rate:.6} over {PROBE_WINDOW} sweeps \
                         (sweep {sweeps}, increment {cur:.3e})"
                    )));
                }
            }
        }
        if sweeps >= max_sweeps {
            return Err(Error::Numeric(format!(
                "no convergence after {max_sweeps} sweeps"
            )));
        }
    }

    // Residual estimate by geometric extrapolation of the increments.
    let last = *inc_history.last().unwrap();
    let residual = if inc_history.len() > 10 {
        let prev = inc_history[inc_history.len() - 11];
        if prev > 0.0 && last > 0.0 {
            let rate = (last / prev).powf(0.1).min(0.9999);
            S::of(last * rate / (1.0 - rate))
        } else {
            S::of(last)
        }
    } else {
        S::of(last)
    };

    // Patch forbidden rows with their exempt-start values.
    if let Some(set) = forbidden {
        let frozen = u.clone();
        for &i in set {
            u[i as usize] = op.row_value(&frozen, i, target);
        }
    }
    u.truncate(n);
    Ok(GreenColumn {
        target,
        values: u,
        residual,
        sweeps,
    })
}

/// Dominant-eigenvalue estimate of the truncated operator by power
/// iteration from the uniform positive vector. A lower bound for the full
/// operator's spectral radius, nondecreasing in the ball radius.
pub fn power_iteration<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    iterations: u32,
) -> Result<S> {
    if iterations < 10 {
        return Err(Error::Config("power iteration needs >= 10 iterations".into()));
    }
    let op = TruncatedOperator::new(ball, m, None)?;
    let n = ball.len();
    let init = S::one() / S::of(n as f64).sqrt();
    let mut u = vec![init; n + 1];
    u[n] = S::zero();
    let mut next = vec![S::zero(); n + 1];
    let mut lambda = S::zero();
    for _ in 0..iterations {
        op.apply(&u, &mut next, None);
        let norm = next[..n]
            .iter()
            .map(|&v| v * v)
            .sum::<S>()
            .sqrt();
        if norm == S::zero() {
            // Nilpotent truncation (one-sided measures): no return mass.
            return Ok(S::zero());
        }
        lambda = norm;
        let inv = S::one() / norm;
        for v in next[..n].iter_mut() {
            *v *= inv;
        }
        std::mem::swap(&mut u, &mut next);
    }
    Ok(lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Group;

    #[test]
    fn tree_green_column_matches_oracle() {
        let g = Group::parse("free(2)").unwrap();
        let ball = CayleyBall::build(g.clone(), 12).unwrap();
        let m: StepMeasure<f64> = StepMeasure::srw(g);
        let col = green_column(&ball, &m, 0, None, 1e-12).unwrap();
        // Radial-chain oracle value at radius 12 (exact truncated Green).
        assert!(
            (col.value(0) - 1.4999990591617887).abs() < 1e-9,
            "value {}",
            col.value(0)
        );
    }

    #[test]
    fn recurrent_chain_flagged() {
        let g = Group::parse("free(1)").unwrap();
        let ball = CayleyBall::build(g.clone(), 100).unwrap();
        let m: StepMeasure<f64> = StepMeasure::srw(g);
        match green_column(&ball, &m, 0, None, 1e-12) {
            Err(Error::Divergence(_)) => {}
            other => panic!("expected divergence, got {:?}", other.map(|c| c.value(0))),
        }
    }

    #[test]
    fn forbidden_set_blocks_cut_vertex() {
        let g = Group::parse("free(2)").unwrap();
        let ball = CayleyBall::build(g.clone(), 8).unwrap();
        let m: StepMeasure<f64> = StepMeasure::srw(g.clone());
        let a = ball
            .index_of(&crate::group::GroupElement::parse(&g, "a").unwrap())
            .unwrap();
        let ai = ball
            .index_of(&crate::group::GroupElement::parse(&g, "a^-1").unwrap())
            .unwrap();
        // Every path from a to a^-1 passes the identity.
        let col = green_column(&ball, &m, ai, Some(&[0]), 1e-12).unwrap();
        assert_eq!(col.value(a), 0.0);
        // But paths from the identity itself may start there.
        assert!(col.value(0) > 0.0);
    }

    #[test]
    fn nilpotent_power_iteration_degenerates() {
        let g = Group::parse("free(1)").unwrap();
        let ball = CayleyBall::build(g.clone(), 6).unwrap();
        let m = StepMeasure::<f64>::parse(g, "a:1.0").unwrap();
        let lam = power_iteration(&ball, &m, 50).unwrap();
        assert!(lam < 1e-6, "lambda {lam}");
    }
}
