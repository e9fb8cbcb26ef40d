//! Derived quantities over Green columns: the log metric, kernels and their
//! harmonicity, weighted series, ball-hitting probabilities, and
//! trajectory-length statistics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::green::operator::{green_column, power_iteration, GreenColumn, DEFAULT_SOLVE_TOL};
use crate::green::{GreenEstimate, Method};
use crate::group::{inverse, CayleyBall, GroupElement, OUTSIDE};
use crate::measure::{step_table, StepMeasure};
use crate::scalar::Scalar;

pub fn default_tol<S: Scalar>() -> S {
    S::of(DEFAULT_SOLVE_TOL)
}

/// Solve one Green value: total trajectory weight from `x` to `y` within
/// the ball, avoiding `forbidden` strictly between the endpoints.
pub fn green_solve<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    x: u32,
    y: u32,
    forbidden: Option<&[u32]>,
) -> Result<GreenEstimate<S>> {
    let col = green_column(ball, m, y, forbidden, default_tol::<S>())?;
    Ok(GreenEstimate {
        value: col.value(x),
        method: Method::Solve,
        error: col.residual,
        radius_used: Some(ball.radius()),
        samples: None,
        seed: None,
    })
}

/// Row of Green values G(x, .) for every ball target, via one solve with
/// the reflected measure.
pub fn green_row<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    x: u32,
) -> Result<GreenColumn<S>> {
    green_column(ball, &m.reflect(), x, None, default_tol::<S>())
}

/// Translation-equivariant Green evaluation: every pair value G(u, v) is
/// read off the identity row as G(e, u^-1 v), so left translation is exact
/// by construction. One solve serves every pair whose quotient stays in
/// the ball.
pub struct GreenValues<'a, S: Scalar> {
    ball: &'a CayleyBall,
    row: GreenColumn<S>,
}

impl<'a, S: Scalar> GreenValues<'a, S> {
    pub fn new(ball: &'a CayleyBall, m: &StepMeasure<S>) -> Result<Self> {
        let row = green_row(ball, m, 0)?;
        Ok(GreenValues { ball, row })
    }

    pub fn green_ee(&self) -> S {
        self.row.value(0)
    }

    pub fn group(&self) -> &crate::group::Group {
        self.ball.group()
    }

    pub fn residual(&self) -> S {
        self.row.residual
    }

    pub fn from_identity(&self, w: u32) -> S {
        self.row.value(w)
    }

    pub fn at(&self, w: &GroupElement) -> Result<S> {
        let idx = self
            .ball
            .index_of(w)
            .ok_or_else(|| Error::OutOfBall(format!("quotient of length {}", w.word_length())))?;
        Ok(self.row.value(idx))
    }

    /// G(u, v) evaluated equivariantly as G(e, u^-1 v).
    pub fn pair(&self, u: &GroupElement, v: &GroupElement) -> Result<S> {
        let group = self.ball.group();
        let mut q = inverse(group, u);
        q.apply(group, v);
        self.at(&q)
    }
}

/// The log metric -ln(G(x,y) / G(e,e)): nonnegative, asymmetric for
/// asymmetric measures.
pub fn green_metric<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    x: u32,
    y: u32,
) -> Result<S> {
    if x == y {
        return Ok(S::zero());
    }
    let col = green_column(ball, m, y, None, default_tol::<S>())?;
    let ee = green_column(ball, m, 0, None, default_tol::<S>())?.value(0);
    Ok(-(col.value(x) / ee).ln())
}

/// Finite-stage kernel K(x, y) = G(x,y) / G(e,y); K(e, y) = 1 exactly.
pub fn martin_kernel<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    x: u32,
    y: u32,
) -> Result<S> {
    let col = green_column(ball, m, y, None, default_tol::<S>())?;
    Ok(col.value(x) / col.value(0))
}

/// Mean-value defect of the kernel at `x` away from the pole:
/// |sum_g mu(g) K(xg, y) - K(x, y)|, which vanishes up to solver residual.
pub fn harmonicity_defect<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    y_target: u32,
    x: u32,
) -> Result<S> {
    if x == y_target {
        return Err(Error::Pole(
            "mean value at the pole differs by the zero-length trajectory".into(),
        ));
    }
    let col = green_column(ball, m, y_target, None, default_tol::<S>())?;
    let norm = col.value(0);
    let group = ball.group().clone();
    let xg = ball.element(x);
    let mut mean = S::zero();
    for (g, p) in m.atoms() {
        let mut w = xg.clone();
        w.apply(&group, g);
        let t = ball
            .index_of(&w)
            .ok_or_else(|| Error::OutOfBall("step from x leaves the ball".into()))?;
        mean += *p * col.value(t) / norm;
    }
    Ok((mean - col.value(x) / norm).abs())
}

/// Partial sum of the power series sum_n r^n p_n(x, y) on the ball.
#[derive(Clone, Debug, Serialize)]
pub struct WeightedGreen<S> {
    pub value: S,
    pub last_increment: S,
    pub diverging: bool,
    pub terms_used: u32,
}

pub fn weighted_green<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    x: u32,
    y: u32,
    r: S,
    n_max: u32,
) -> Result<WeightedGreen<S>> {
    if r < S::zero() {
        return Err(Error::Config("weight must be nonnegative".into()));
    }
    let steps = step_table(ball, m)?;
    let n = ball.len();
    let mut cur = vec![S::zero(); n];
    cur[x as usize] = S::one();
    let mut next = vec![S::zero(); n];
    let mut value = if x == y { S::one() } else { S::zero() };
    let mut weight = S::one();
    let mut incs: Vec<S> = vec![value];
    let mut below = 0;
    let tol = default_tol::<S>();
    let window = 10;
    for _ in 1..=n_max {
        next.iter_mut().for_each(|v| *v = S::zero());
        for i in 0..n {
            let p = cur[i];
            if p == S::zero() {
                continue;
            }
            for (step, w) in &steps {
                let t = step.target(ball, i as u32);
                if t != OUTSIDE {
                    next[t as usize] += p * *w;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
        weight *= r;
        let inc = weight * cur[y as usize];
        incs.push(inc);
        value += inc;
        // Compare windowed maxima so bipartite parity zeros do not mask
        // growth of the even subsequence.
        if incs.len() >= 2 * window {
            let recent = incs[incs.len() - window..]
                .iter()
                .copied()
                .fold(S::zero(), S::max);
            let earlier = incs[incs.len() - 2 * window..incs.len() - window]
                .iter()
                .copied()
                .fold(S::zero(), S::max);
            if recent > earlier && recent > S::one() {
                return Ok(WeightedGreen {
                    value,
                    last_increment: inc,
                    diverging: true,
                    terms_used: incs.len() as u32 - 1,
                });
            }
        }
        if inc < tol {
            below += 1;
            if below >= 3 {
                break;
            }
        } else {
            below = 0;
        }
    }
    Ok(WeightedGreen {
        value,
        last_increment: *incs.last().unwrap(),
        diverging: false,
        terms_used: incs.len() as u32 - 1,
    })
}

/// Probability that a trajectory from `x` to `y` (under the normalized
/// trajectory measure) meets the ball of the given radius around `z`,
/// computed as 1 - G(x,y,outside)/G(x,y). Exactly 1 when the ball contains
/// either endpoint or disconnects them.
pub fn hit_probability<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    x: u32,
    y: u32,
    z: u32,
    radius: u32,
) -> Result<S> {
    let dz = ball.dist_from(z);
    if dz[x as usize] <= radius || dz[y as usize] <= radius {
        return Ok(S::one());
    }
    hit_probability_with_dz(ball, m, x, y, &dz, radius)
}

/// Same, with the distance field of `z` precomputed (radius sweeps).
pub fn hit_probability_with_dz<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    x: u32,
    y: u32,
    dz: &[u32],
    radius: u32,
) -> Result<S> {
    if dz[x as usize] <= radius || dz[y as usize] <= radius {
        return Ok(S::one());
    }
    let forbidden: Vec<u32> = (0..ball.len() as u32)
        .filter(|&i| dz[i as usize] <= radius)
        .collect();
    let full = green_column(ball, m, y, None, default_tol::<S>())?;
    let restricted = green_column(ball, m, y, Some(&forbidden), default_tol::<S>())?;
    let p = S::one() - restricted.value(x) / full.value(x);
    Ok(p.max(S::zero()).min(S::one()))
}

/// Lower bound for the spectral radius: dominant eigenvalue of the
/// ball-truncated operator by power iteration, nondecreasing in the radius.
pub fn spectral_radius_lb<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    iterations: u32,
) -> Result<S> {
    power_iteration(ball, m, iterations)
}

/// Trajectory-length distribution from `x` to `y`: the n-step kernel values
/// normalized by the Green value of the same truncation.
#[derive(Clone, Debug, Serialize)]
pub struct LengthDistribution<S> {
    pub probs: Vec<S>,
    pub tail_residual: S,
    pub green_value: S,
    pub source_target_distance: u32,
}

pub fn length_distribution<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    x: u32,
    y: u32,
    n_max: u32,
) -> Result<LengthDistribution<S>> {
    let steps = step_table(ball, m)?;
    let n = ball.len();
    let mut cur = vec![S::zero(); n];
    cur[x as usize] = S::one();
    let mut next = vec![S::zero(); n];
    let mut raw = Vec::with_capacity(n_max as usize + 1);
    raw.push(cur[y as usize]);
    for _ in 1..=n_max {
        next.iter_mut().for_each(|v| *v = S::zero());
        for i in 0..n {
            let p = cur[i];
            if p == S::zero() {
                continue;
            }
            for (step, w) in &steps {
                let t = step.target(ball, i as u32);
                if t != OUTSIDE {
                    next[t as usize] += p * *w;
                }
            }
        }
        std::mem::swap(&mut cur, &mut next);
        raw.push(cur[y as usize]);
    }
    // Normalize by the series' own partial sum plus the geometric
    // continuation of its last terms: this is the Green value of the same
    // truncation, summed past the solver's stopping point, and it keeps the
    // survival function at zero exactly bounded by one.
    let tail = extrapolate_tail(&raw);
    let norm = raw.iter().copied().sum::<S>() + tail;
    let probs = raw.iter().map(|&p| p / norm).collect();
    Ok(LengthDistribution {
        probs,
        tail_residual: tail / norm,
        green_value: norm,
        source_target_distance: ball.dist_between(x, y),
    })
}

/// Remaining mass beyond the computed range by geometric continuation of
/// the last nonzero terms (the direct `1 - covered` drowns in floating
/// cancellation once the true tail is below machine epsilon).
fn extrapolate_tail<S: Scalar>(raw: &[S]) -> S {
    let nz: Vec<usize> = raw
        .iter()
        .enumerate()
        .rev()
        .filter(|(_, p)| **p > S::zero())
        .map(|(k, _)| k)
        .take(2)
        .collect();
    if nz.len() < 2 {
        return S::zero();
    }
    let (last, prev) = (nz[0], nz[1]);
    let ratio = raw[last] / raw[prev];
    if ratio >= S::one() {
        return S::zero();
    }
    // Mass continues at indices last + k*(last-prev), scaled by ratio^k.
    raw[last] * ratio / (S::one() - ratio)
}

/// Exponential-tail fit of a length distribution: least squares on the log
/// survival function over the upper half of the range, a decay base phi in
/// (0,1), a distance coefficient making the bound phi^(M - D d) hold at
/// every computed M when d > 0, and the minimal margin of that bound.
#[derive(Clone, Debug, Serialize)]
pub struct TailFit<S> {
    pub phi: S,
    pub d_coef: S,
    pub margin_min: S,
    pub max_log_residual: S,
}

pub fn fit_length_tail<S: Scalar>(
    dist: &LengthDistribution<S>,
    d_xy: u32,
) -> Result<TailFit<S>> {
    let n = dist.probs.len();
    // Survival S(M) = P(length >= M), including the uncovered residual.
    let mut survival = vec![S::zero(); n + 1];
    survival[n] = dist.tail_residual;
    for k in (0..n).rev() {
        survival[k] = survival[k + 1] + dist.probs[k];
    }
    let window: Vec<(S, S)> = (n / 2..n)
        .filter(|&k| survival[k] > S::zero())
        .map(|k| (S::of(k as f64), survival[k].ln()))
        .collect();
    if window.len() < 10 {
        return Err(Error::FitFailure(format!(
            "only {} nonzero tail points",
            window.len()
        )));
    }
    let len = S::of(window.len() as f64);
    let sx: S = window.iter().map(|&(x, _)| x).sum();
    let sy: S = window.iter().map(|&(_, y)| y).sum();
    let sxx: S = window.iter().map(|&(x, _)| x * x).sum();
    let sxy: S = window.iter().map(|&(x, y)| x * y).sum();
    let denom = len * sxx - sx * sx;
    if denom == S::zero() {
        return Err(Error::FitFailure("degenerate tail window".into()));
    }
    let slope = (len * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / len;
    let ls_phi = slope.exp();
    if !(ls_phi > S::zero() && ls_phi < S::one()) {
        return Err(Error::FitFailure(format!(
            "non-decaying tail, phi = {ls_phi}"
        )));
    }
    let max_log_residual = window
        .iter()
        .map(|&(x, y)| (y - (intercept + slope * x)).abs())
        .fold(S::zero(), S::max);
    if max_log_residual > S::of(0.75) {
        return Err(Error::FitFailure(format!(
            "log-survival fit residual {max_log_residual} too large"
        )));
    }
    // The returned constants are the least ones (at the fitted decay or
    // slightly above) for which the bound actually holds at every computed
    // M; without the distance term the base itself absorbs the anchor.
    let slack = S::one() + S::of(1e-12);
    let phi = if d_xy == 0 {
        let mut needed = S::zero();
        for (k, s) in survival.iter().enumerate().take(n).skip(1) {
            if *s > S::zero() {
                needed = needed.max(s.powf(S::one() / S::of(k as f64)));
            }
        }
        let phi = ls_phi.max(needed * slack);
        if phi >= S::one() {
            return Err(Error::FitFailure(format!(
                "no valid decay base (needed {phi})"
            )));
        }
        phi
    } else {
        ls_phi
    };
    let log_phi = phi.ln();
    let d_coef = if d_xy > 0 {
        let mut need = S::of(1e-9);
        for (k, s) in survival.iter().enumerate().take(n) {
            if *s > S::zero() {
                let bound = S::of(k as f64) - s.ln() / log_phi;
                need = need.max(bound / S::of(d_xy as f64));
            }
        }
        need * slack
    } else {
        S::one()
    };
    // At M = 0 the bound is the survival identity itself; the margin is
    // informative from M = 1 on.
    let shift = d_coef * S::of(d_xy as f64);
    let margin_min = survival
        .iter()
        .enumerate()
        .take(n)
        .skip(1)
        .filter(|(_, s)| **s > S::zero())
        .map(|(k, s)| phi.powf(S::of(k as f64) - shift) - *s)
        .fold(S::infinity(), S::min);
    Ok(TailFit {
        phi,
        d_coef,
        margin_min,
        max_log_residual,
    })
}
