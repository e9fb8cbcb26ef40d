//! Finitely supported step distributions, their convolutions on balls, and
//! deterministic walk sampling.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::group::{CayleyBall, Group, GroupElement, OUTSIDE};
use crate::scalar::Scalar;

/// A finitely supported probability measure on a group.
#[derive(Clone, Debug)]
pub struct StepMeasure<S: Scalar> {
    group: Group,
    atoms: Vec<(GroupElement, S)>,
    max_step: u32,
}

impl<S: Scalar> StepMeasure<S> {
    pub fn new(group: Group, atoms: Vec<(GroupElement, S)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("empty support".into()));
        }
        let mut seen = HashSet::new();
        let mut sum = S::zero();
        let mut max_step = 0u64;
        for (g, p) in &atoms {
            g.validate(&group)
                .map_err(|e| Error::InvalidMeasure(e.to_string()))?;
            if !seen.insert(g.clone()) {
                return Err(Error::InvalidMeasure("duplicate support element".into()));
            }
            if *p <= S::zero() {
                return Err(Error::InvalidMeasure("nonpositive probability".into()));
            }
            sum += *p;
            max_step = max_step.max(g.word_length());
        }
        let tol = S::of(1e-12).max(S::epsilon() * S::of(16.0 * atoms.len() as f64));
        if (sum - S::one()).abs() > tol {
            return Err(Error::InvalidMeasure(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(StepMeasure {
            group,
            atoms,
            max_step: max_step as u32,
        })
    }

    /// Uniform measure on the standard symmetric generating set.
    pub fn srw(group: Group) -> Self {
        let n = group.n_dirgens();
        let p = S::one() / S::of(n as f64);
        let atoms = (0..n as u32)
            .map(|s| {
                let mut g = GroupElement::identity();
                g.apply_dirgen(&group, s);
                (g, p)
            })
            .collect();
        StepMeasure {
            group,
            atoms,
            max_step: 1,
        }
    }

    /// Parse a measure spec: `srw` or an atom list `a:0.25, b^-1:0.75`.
    pub fn parse(group: Group, text: &str) -> Result<Self> {
        let text = text.trim();
        if text == "srw" {
            return Ok(Self::srw(group));
        }
        let mut atoms = Vec::new();
        for part in text.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (word, prob) = part
                .rsplit_once(':')
                .ok_or_else(|| Error::InvalidMeasure(format!("expected word:prob in {part:?}")))?;
            let g = GroupElement::parse(&group, word.trim())
                .map_err(|e| Error::InvalidMeasure(e.to_string()))?;
            let p: f64 = prob
                .trim()
                .parse()
                .map_err(|_| Error::InvalidMeasure(format!("bad probability {prob:?}")))?;
            atoms.push((g, S::of(p)));
        }
        Self::new(group, atoms)
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn atoms(&self) -> &[(GroupElement, S)] {
        &self.atoms
    }

    /// Largest word length in the support.
    pub fn max_step(&self) -> u32 {
        self.max_step
    }

    pub fn min_prob(&self) -> S {
        self.atoms
            .iter()
            .map(|(_, p)| *p)
            .fold(S::infinity(), |a, b| a.min(b))
    }

    /// The reflected measure g -> mu(g^-1).
    pub fn reflect(&self) -> Self {
        let atoms = self
            .atoms
            .iter()
            .map(|(g, p)| (crate::group::element::inverse(&self.group, g), *p))
            .collect();
        StepMeasure {
            group: self.group.clone(),
            atoms,
            max_step: self.max_step,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        let refl = self.reflect();
        let tol = S::of(1e-12);
        self.atoms.iter().all(|(g, p)| {
            refl.atoms
                .iter()
                .any(|(h, q)| h == g && (*q - *p).abs() <= tol)
        })
    }

    /// Exact moment diagnostics of the finitely supported measure.
    pub fn moment_report(&self, c_values: &[S]) -> MomentReport<S> {
        let tail_mass = (0..=self.max_step)
            .map(|n| {
                let mass = self
                    .atoms
                    .iter()
                    .filter(|(g, _)| g.word_length() > n as u64)
                    .map(|(_, p)| *p)
                    .sum();
                (n, mass)
            })
            .collect();
        let exp_moments = c_values
            .iter()
            .map(|&c| {
                let m = self
                    .atoms
                    .iter()
                    .map(|(g, p)| c.powi(g.word_length() as i32) * *p)
                    .sum();
                (c, m)
            })
            .collect();
        MomentReport {
            max_step: self.max_step,
            tail_mass,
            exp_moments,
        }
    }

    /// Do products of at most `budget` support elements cover sphere 1 of
    /// the ball (semigroup generation probe)?
    pub fn generates_check(&self, ball: &CayleyBall, budget: u32) -> bool {
        let mut reached: HashSet<GroupElement> = HashSet::new();
        let mut frontier: Vec<GroupElement> = vec![GroupElement::identity()];
        for _ in 0..budget {
            let mut next = Vec::new();
            for f in &frontier {
                for (g, _) in &self.atoms {
                    let prod = crate::group::element::multiply(&self.group, f, g);
                    if reached.insert(prod.clone()) {
                        next.push(prod);
                    }
                }
            }
            frontier = next;
            if frontier.is_empty() {
                break;
            }
        }
        ball.sphere_range(1)
            .map(|i| ball.element(i))
            .all(|g| reached.contains(&g))
    }
}

/// Moment diagnostics: tail masses of the cutoff decomposition and
/// exponential moments.
#[derive(Clone, Debug, serde::Serialize)]
pub struct MomentReport<S: Scalar> {
    pub max_step: u32,
    /// (n, total mass of steps longer than n); zero at n = max_step.
    pub tail_mass: Vec<(u32, S)>,
    /// (c, sum of c^{|g|} mu(g)).
    pub exp_moments: Vec<(S, S)>,
}

/// How each atom of a measure acts on ball indices.
pub enum AtomStep {
    Stay,
    /// Single directed generator: use the adjacency column.
    Letter(u32),
    /// Longer step: precomputed target per ball index (`OUTSIDE` leaves).
    Map(Vec<u32>),
}

impl AtomStep {
    #[inline]
    pub fn target(&self, ball: &CayleyBall, i: u32) -> u32 {
        match self {
            AtomStep::Stay => i,
            AtomStep::Letter(s) => ball.neighbor(i, *s),
            AtomStep::Map(map) => map[i as usize],
        }
    }
}

/// Build the per-atom transition table of a measure on a ball.
pub fn step_table<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
) -> Result<Vec<(AtomStep, S)>> {
    if m.max_step() > ball.radius() {
        return Err(Error::Config(format!(
            "support step length {} exceeds ball radius {}",
            m.max_step(),
            ball.radius()
        )));
    }
    let group = ball.group();
    m.atoms()
        .iter()
        .map(|(g, p)| {
            let step = if g.is_identity() {
                AtomStep::Stay
            } else if g.word_length() == 1 {
                AtomStep::Letter(g.letters().next().unwrap())
            } else {
                let map = (0..ball.len() as u32)
                    .map(|i| {
                        let mut w = ball.element(i);
                        w.apply(group, g);
                        ball.index_of(&w).unwrap_or(OUTSIDE)
                    })
                    .collect();
                AtomStep::Map(map)
            };
            Ok((step, *p))
        })
        .collect()
}

/// Truncated k-step transition probabilities from `x`, with the mass that
/// stepped outside the ball accumulated per step.
#[derive(Clone, Debug)]
pub struct NStepProbabilities<S> {
    /// `per_step[k][i]` = probability of being at ball index `i` after `k`
    /// steps without having left the ball.
    pub per_step: Vec<Vec<S>>,
    /// Cumulative absorbed (out-of-ball) mass after k steps.
    pub absorbed: Vec<S>,
}

pub fn n_step_probabilities<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    x: u32,
    n: u32,
) -> Result<NStepProbabilities<S>> {
    let steps = step_table(ball, m)?;
    let len = ball.len();
    let mut cur = vec![S::zero(); len];
    cur[x as usize] = S::one();
    let mut per_step = vec![cur.clone()];
    let mut absorbed = vec![S::zero()];
    let mut lost = S::zero();
    for _ in 0..n {
        let prev = per_step.last().unwrap();
        let mut next = vec![S::zero(); len];
        for i in 0..len as u32 {
            let p = prev[i as usize];
            if p == S::zero() {
                continue;
            }
            for (step, w) in &steps {
                let t = step.target(ball, i);
                if t == OUTSIDE {
                    lost += p * *w;
                } else {
                    next[t as usize] += p * *w;
                }
            }
        }
        per_step.push(next);
        absorbed.push(lost);
    }
    Ok(NStepProbabilities { per_step, absorbed })
}

/// Deterministic walk stream: position after each step of an i.i.d. walk
/// with increments from `m`. Stream identity is (seed, stream), so walk
/// ensembles are independent of scheduling.
pub struct Walker<'a, S: Scalar> {
    measure: &'a StepMeasure<S>,
    cumul: Vec<f64>,
    rng: ChaCha8Rng,
    position: GroupElement,
    length: i64,
}

impl<'a, S: Scalar> Walker<'a, S> {
    pub fn new(measure: &'a StepMeasure<S>, seed: u64, stream: u64) -> Self {
        let mut acc = 0.0;
        let cumul = measure
            .atoms()
            .iter()
            .map(|(_, p)| {
                acc += p.as_f64();
                acc
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Walker {
            measure,
            cumul,
            rng,
            position: GroupElement::identity(),
            length: 0,
        }
    }

    pub fn position(&self) -> &GroupElement {
        &self.position
    }

    /// Current word length, tracked incrementally.
    pub fn word_length(&self) -> u64 {
        self.length as u64
    }

    pub fn step(&mut self) -> &GroupElement {
        let u: f64 = rand::Rng::random(&mut self.rng);
        let k = self.cumul.partition_point(|&c| c < u);
        let k = k.min(self.measure.atoms().len() - 1);
        let atom = &self.measure.atoms()[k].0;
        self.length += self.position.apply(self.measure.group(), atom);
        &self.position
    }
}

/// Trajectory of a walk of the given length (length+1 positions, starting
/// at the identity). Deterministic in the seed.
pub fn sample_walk<S: Scalar>(
    m: &StepMeasure<S>,
    seed: u64,
    length: u32,
) -> Vec<GroupElement> {
    sample_walk_stream(m, seed, 0, length)
}

pub fn sample_walk_stream<S: Scalar>(
    m: &StepMeasure<S>,
    seed: u64,
    stream: u64,
    length: u32,
) -> Vec<GroupElement> {
    let mut walker = Walker::new(m, seed, stream);
    let mut out = Vec::with_capacity(length as usize + 1);
    out.push(GroupElement::identity());
    for _ in 0..length {
        out.push(walker.step().clone());
    }
    out
}

/// Two-sided walk: (negative half, positive half), each of the given
/// horizon, with independent streams. The negative half has increments from
/// the reflected measure, so position -n is distributed like the inverse
/// prefix products of the forward walk.
pub fn bilateral_walk<S: Scalar>(
    m: &StepMeasure<S>,
    seed: u64,
    horizon_neg: u32,
    horizon_pos: u32,
) -> (Vec<GroupElement>, Vec<GroupElement>) {
    let pos = sample_walk_stream(m, seed, 0, horizon_pos);
    let reflected = m.reflect();
    let neg = sample_walk_stream(&reflected, seed, 1, horizon_neg);
    (neg, pos)
}
