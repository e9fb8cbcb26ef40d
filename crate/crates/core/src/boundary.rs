//! Boundary statistics from walk ensembles: first-exit cylinder measures
//! and their stationarity residual, escape rates in the word and log
//! metrics, sphere growth, and the bilateral separation fraction along a
//! two-sided walk.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::floyd::{floyd_distance, FloydFunction};
use crate::green::analysis::green_row;
use crate::green::mc::Z99;
use crate::group::{inverse, CayleyBall, GroupElement};
use crate::measure::{sample_walk_stream, StepMeasure, Walker};
use crate::scalar::Scalar;

/// Empirical first-exit distribution from a ball, projected to normal-form
/// prefixes of a fixed letter depth. Counts are exact; masses derive from
/// them.
#[derive(Clone, Debug, Serialize)]
pub struct ExitMeasure<S> {
    pub radius: u32,
    pub depth: u32,
    /// (prefix, walk count), sorted by normal-form order.
    pub cylinders: Vec<(String, u64)>,
    pub n_walks: u64,
    pub seed: u64,
    #[serde(skip)]
    prefixes: Vec<(GroupElement, u64)>,
    #[serde(skip)]
    _marker: std::marker::PhantomData<S>,
}

impl<S: Scalar> ExitMeasure<S> {
    pub fn from_counts(
        group: &crate::group::Group,
        radius: u32,
        depth: u32,
        counts: Vec<(GroupElement, u64)>,
        seed: u64,
    ) -> Self {
        let mut prefixes = counts;
        prefixes.sort_by(|a, b| a.0.cmp_normal(&b.0));
        let n_walks = prefixes.iter().map(|(_, c)| *c).sum();
        let cylinders = prefixes
            .iter()
            .map(|(g, c)| (g.display(group), *c))
            .collect();
        ExitMeasure {
            radius,
            depth,
            cylinders,
            n_walks,
            seed,
            prefixes,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn masses(&self) -> Vec<(GroupElement, S)> {
        self.prefixes
            .iter()
            .map(|(g, c)| (g.clone(), S::of(*c as f64 / self.n_walks as f64)))
            .collect()
    }

    pub fn counts(&self) -> &[(GroupElement, u64)] {
        &self.prefixes
    }

    /// Aggregate to a smaller depth by summing refinement counts.
    pub fn aggregate(&self, group: &crate::group::Group, depth: u32) -> Result<ExitMeasure<S>> {
        if depth > self.depth {
            return Err(Error::Algebra(format!(
                "cannot refine depth {} to {}",
                self.depth, depth
            )));
        }
        let mut map: HashMap<GroupElement, u64> = HashMap::new();
        for (g, c) in &self.prefixes {
            *map.entry(g.prefix(group, depth as u64)).or_default() += c;
        }
        Ok(ExitMeasure::from_counts(
            group,
            self.radius,
            depth,
            map.into_iter().collect(),
            self.seed,
        ))
    }
}

/// Sample the first-exit measure: walks run until the word length first
/// exceeds `radius`; the exit position's leading letters label the
/// cylinder. Deterministic in (seed, walk index).
pub fn exit_measure<S: Scalar>(
    m: &StepMeasure<S>,
    radius: u32,
    n_walks: u64,
    depth: u32,
    seed: u64,
    step_cap: u64,
) -> Result<ExitMeasure<S>> {
    if depth > radius {
        return Err(Error::Config("depth exceeds the exit radius".into()));
    }
    let group = m.group().clone();
    let chunk = 1024u64;
    let n_chunks = n_walks.div_ceil(chunk);
    let partials: Result<Vec<HashMap<GroupElement, u64>>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * chunk;
            let hi = (lo + chunk).min(n_walks);
            let mut counts: HashMap<GroupElement, u64> = HashMap::new();
            for w in lo..hi {
                let mut walker = Walker::new(m, seed, w);
                let mut steps = 0u64;
                while walker.word_length() <= radius as u64 {
                    walker.step();
                    steps += 1;
                    if steps > step_cap {
                        return Err(Error::Sampling(format!(
                            "walk {w} failed to exit radius {radius} within {step_cap} steps \
                             (recurrence suspect)"
                        )));
                    }
                }
                let prefix = walker.position().prefix(&group, depth as u64);
                *counts.entry(prefix).or_default() += 1;
            }
            Ok(counts)
        })
        .collect();
    let mut total: HashMap<GroupElement, u64> = HashMap::new();
    for part in partials? {
        for (k, v) in part {
            *total.entry(k).or_default() += v;
        }
    }
    let exit = ExitMeasure::from_counts(&group, radius, depth, total.into_iter().collect(), seed);
    debug_assert_eq!(exit.n_walks, n_walks);
    Ok(exit)
}

/// One-step stationarity residual of an exit measure: the L1 distance on
/// the cylinder algebra of depth (measure depth - max step) between the
/// measure and its convolution by the step distribution. Translated
/// cylinders refine within the available depth; reordering blocks at the
/// prefix boundary make the translate inexpressible and raise an error.
pub fn stationarity_residual<S: Scalar>(
    exit: &ExitMeasure<S>,
    m: &StepMeasure<S>,
) -> Result<S> {
    let group = m.group().clone();
    if exit.depth <= m.max_step() {
        return Err(Error::Algebra(format!(
            "depth {} cannot absorb steps of length {} (raise depth)",
            exit.depth,
            m.max_step()
        )));
    }
    let d = (exit.depth - m.max_step()) as u64;
    let base = exit.aggregate(&group, d as u32)?;
    let mut convolved: HashMap<GroupElement, f64> = HashMap::new();
    for (g, p) in m.atoms() {
        for (u, c) in exit.counts() {
            let mut v = g.clone();
            v.apply(&group, u);
            if v.word_length() < d {
                return Err(Error::Algebra(
                    "translate shorter than the evaluation depth (raise depth)".into(),
                ));
            }
            // The continuation of u extends or merges into the trailing
            // block of g*u; a reordering block overlapping the prefix
            // cannot be projected.
            let syls = v.syllables();
            let mut tail_start = v.word_length();
            if let Some(last) = syls.last() {
                let leaf = group.leaf_of_gen(last.gen);
                let mut start = syls.len();
                while start > 0 && group.leaf_of_gen(syls[start - 1].gen) == leaf {
                    start -= 1;
                }
                if group.gen_is_sorted(last.gen) {
                    tail_start = syls[..start]
                        .iter()
                        .map(|s| s.exp.unsigned_abs())
                        .sum::<u64>();
                }
            }
            if tail_start < d {
                return Err(Error::Algebra(
                    "reordering block overlaps the prefix (raise depth)".into(),
                ));
            }
            let w = v.prefix(&group, d);
            *convolved.entry(w).or_default() +=
                p.as_f64() * (*c as f64 / exit.n_walks as f64);
        }
    }
    let mut keys: Vec<GroupElement> = convolved.keys().cloned().collect();
    for (g, _) in base.counts() {
        if !convolved.contains_key(g) {
            keys.push(g.clone());
        }
    }
    let base_masses: HashMap<GroupElement, f64> = base
        .counts()
        .iter()
        .map(|(g, c)| (g.clone(), *c as f64 / base.n_walks as f64))
        .collect();
    let mut residual = 0.0;
    for k in keys {
        let a = base_masses.get(&k).copied().unwrap_or(0.0);
        let b = convolved.get(&k).copied().unwrap_or(0.0);
        residual += (a - b).abs();
    }
    Ok(S::of(residual))
}

/// Escape-rate estimates along one walk ensemble, in the word metric and
/// (on a ball subsample) the log metric, with the sphere growth rate and
/// the combined ratio diagnostic.
#[derive(Clone, Debug, Serialize)]
pub struct DriftReport<S> {
    pub word_drift: S,
    pub word_ci: S,
    pub green_drift: S,
    pub green_ci: S,
    pub growth_rate: S,
    /// green / (growth * word) with its propagated CI; 1 when the exit
    /// measure and the sphere measure have comparable dimensions. Absent
    /// when the growth rate degenerates (amenable directions).
    pub ratio: Option<(S, S)>,
    pub n_walks: u64,
    pub t_steps: u32,
    pub green_points: u64,
    pub seed: u64,
}

fn linear_fit<S: Scalar>(points: &[(S, S)]) -> Result<(S, S, S)> {
    if points.len() < 3 {
        return Err(Error::Sampling("not enough points for a line fit".into()));
    }
    let n = S::of(points.len() as f64);
    let sx: S = points.iter().map(|p| p.0).sum();
    let sy: S = points.iter().map(|p| p.1).sum();
    let sxx: S = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: S = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom == S::zero() {
        return Err(Error::Sampling("degenerate abscissae".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let ssr: S = points
        .iter()
        .map(|&(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let dof = S::of((points.len() - 2) as f64).max(S::one());
    let se = (ssr / dof / (sxx - sx * sx / n)).sqrt();
    Ok((slope, intercept, se))
}

/// Sphere growth rate of the ball: least-squares slope of log sphere sizes
/// over the top half of the radii.
pub fn growth_rate<S: Scalar>(ball: &CayleyBall) -> Result<S> {
    let r_max = ball.radius();
    if r_max < 4 {
        return Err(Error::Config("growth rate needs radius >= 4".into()));
    }
    let points: Vec<(S, S)> = (r_max / 2..=r_max)
        .map(|r| {
            let size = ball.sphere_range(r).len() as f64;
            (S::of(r as f64), S::of(size.ln()))
        })
        .collect();
    Ok(linear_fit(&points)?.0)
}

pub fn drift<S: Scalar>(
    m: &StepMeasure<S>,
    ball: &CayleyBall,
    n_walks: u64,
    t_steps: u32,
    green_subsample: u64,
    seed: u64,
) -> Result<DriftReport<S>> {
    if t_steps < 10 {
        return Err(Error::Config("drift needs at least 10 steps".into()));
    }
    let finals: Vec<f64> = (0..n_walks)
        .into_par_iter()
        .map(|w| {
            let mut walker = Walker::new(m, seed, w);
            for _ in 0..t_steps {
                walker.step();
            }
            walker.word_length() as f64 / t_steps as f64
        })
        .collect();
    let n = n_walks as f64;
    let mean = finals.iter().sum::<f64>() / n;
    let var = finals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let word_ci = Z99 * (var / n).sqrt();

    // Log-metric drift: evaluate -ln(G(e, w_t)/G(e,e)) at small times
    // t <= radius/2, where the walk cannot have left the ball, so the
    // cloud carries no exit conditioning; the line fit's intercept absorbs
    // the burn-in offset. Truncation-biased: only small t contribute.
    let row = green_row(ball, m, 0)?;
    let gee = row.value(0);
    let cap = (ball.radius() / 2).max(2);
    let t_lo = cap.saturating_sub(2).max(2);
    if t_lo >= cap {
        return Err(Error::OutOfBall(
            "ball too small for a green-drift window (needs radius >= 8)".into(),
        ));
    }
    let chunk = 512u64;
    let subsample = green_subsample;
    let n_chunks = subsample.div_ceil(chunk);
    let point_chunks: Vec<Vec<(S, S)>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * chunk;
            let hi = (lo + chunk).min(subsample);
            let mut pts = Vec::new();
            for w in lo..hi {
                let mut walker = Walker::new(m, seed, w);
                for t in 1..=cap {
                    walker.step();
                    if t >= t_lo {
                        let idx = ball
                            .index_of(walker.position())
                            .expect("within half the radius");
                        let d = -(row.value(idx) / gee).ln();
                        pts.push((S::of(t as f64), d));
                    }
                }
            }
            pts
        })
        .collect();
    let points: Vec<(S, S)> = point_chunks.into_iter().flatten().collect();
    if points.len() < 3 {
        return Err(Error::OutOfBall(
            "green-metric subsample is empty (ball too small)".into(),
        ));
    }
    let (green_drift, _, green_se) = linear_fit(&points)?;
    let green_ci = S::of(Z99) * green_se;

    let growth = growth_rate(ball)?;
    let word = S::of(mean);
    let ratio = if growth > S::of(1e-9) && word > S::zero() {
        let r = green_drift / (growth * word);
        let rel = (green_ci / green_drift).powi(2) + (S::of(word_ci) / word).powi(2);
        Some((r, r.abs() * rel.sqrt()))
    } else {
        None
    };
    Ok(DriftReport {
        word_drift: word,
        word_ci: S::of(word_ci),
        green_drift,
        green_ci,
        growth_rate: growth,
        ratio,
        n_walks,
        t_steps,
        green_points: points.len() as u64,
        seed,
    })
}

/// The ratio diagnostic of a drift report. Degenerate growth (amenable
/// directions) has no ratio.
pub fn fundamental_ratio<S: Scalar>(report: &DriftReport<S>) -> Result<(S, S)> {
    report
        .ratio
        .ok_or_else(|| Error::Config("growth rate degenerates; no ratio".into()))
}

/// Fraction of bilateral walk times whose horizon endpoints stay
/// separated: for each n in [0, N], the rescaled distance between the two
/// horizon points seen from the walk position is compared with `eps`.
///
/// Horizon points beyond the auxiliary ball are projected to its radius
/// along their geodesics (surrogates of surrogates; the projection moves
/// the distance by at most 2 tail(radius)). The distance itself is the
/// in-ball path value: a rigorous lower bound through the sphere-hub
/// relaxation caps at the radial escape cost of the endpoints, which is
/// always below the projection correction, so the conservative variant is
/// identically zero for far endpoints and carries no information.
pub fn bilateral_transition_fraction<S: Scalar>(
    m: &StepMeasure<S>,
    f: &FloydFunction<S>,
    floyd_ball: &CayleyBall,
    n_steps: u32,
    m_horizon: u32,
    eps: S,
    seed: u64,
) -> Result<S> {
    let group = m.group().clone();
    let pos = sample_walk_stream(m, seed, 0, n_steps + m_horizon);
    let neg = sample_walk_stream(&m.reflect(), seed, 1, m_horizon);
    let r_f = floyd_ball.radius() as u64;
    let mut count = 0u64;
    for n in 0..=n_steps {
        let at = |k: i64| -> &GroupElement {
            if k >= 0 {
                &pos[k as usize]
            } else {
                &neg[(-k) as usize]
            }
        };
        let center_inv = inverse(&group, &pos[n as usize]);
        let project = |w: &GroupElement| -> GroupElement {
            let mut t = center_inv.clone();
            t.apply(&group, w);
            if t.word_length() > r_f {
                t.prefix(&group, r_f)
            } else {
                t
            }
        };
        let a = project(at(n as i64 - m_horizon as i64));
        let b = project(at(n as i64 + m_horizon as i64));
        let (ia, ib) = (
            floyd_ball.index_of(&a).expect("projected point in ball"),
            floyd_ball.index_of(&b).expect("projected point in ball"),
        );
        let bound = floyd_distance(floyd_ball, f, 0, ia, ib)?;
        if bound.upper > eps {
            count += 1;
        }
    }
    Ok(S::of(count as f64 / (n_steps as f64 + 1.0)))
}
