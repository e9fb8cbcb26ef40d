//! Triangle-defect experiments for the log metric: per-triple defect
//! records with rescaled separation intervals, stratified surveys with
//! decreasing envelopes, ball-hitting radius surveys, the double-boundary
//! quotient with its exact cocycle identity, and the midpoint
//! classification experiment on free products with a flat factor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::floyd::{floyd_distance, FloydDistanceBound, FloydFunction};
use crate::green::analysis::{default_tol, green_row, hit_probability_with_dz, GreenValues};
use crate::green::operator::green_column;
use crate::group::{inverse, CayleyBall, GroupElement};
use crate::measure::StepMeasure;
use crate::scalar::Scalar;

/// One triple (x, y, z): the triangle defect of the log metric at the
/// middle point z, with the rescaled separation of x and y seen from z.
#[derive(Clone, Debug, Serialize)]
pub struct DefectRecord<S> {
    pub x: String,
    pub y: String,
    pub z: String,
    /// d(x,z) + d(z,y) - d(x,y) in the log metric; nonnegative up to
    /// solver slack.
    pub defect: S,
    /// Interval for the separation of x and y at basepoint z.
    pub floyd: FloydDistanceBound<S>,
    pub collinear: bool,
    pub transition: Option<bool>,
}

/// Compute one defect record. Green values are solved on the given ball;
/// the separation is evaluated equivariantly by translating z to the ball
/// center, so the translated endpoints must stay inside.
pub fn defect<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    f: &FloydFunction<S>,
    x: u32,
    y: u32,
    z: u32,
) -> Result<DefectRecord<S>> {
    let col_y = green_column(ball, m, y, None, default_tol::<S>())?;
    let col_z = green_column(ball, m, z, None, default_tol::<S>())?;
    let gee = green_column(ball, m, 0, None, default_tol::<S>())?.value(0);
    defect_from_values(
        ball,
        f,
        x,
        y,
        z,
        col_z.value(x),
        col_y.value(z),
        col_y.value(x),
        gee,
    )
}

#[allow(clippy::too_many_arguments)]
fn defect_from_values<S: Scalar>(
    ball: &CayleyBall,
    f: &FloydFunction<S>,
    x: u32,
    y: u32,
    z: u32,
    g_xz: S,
    g_zy: S,
    g_xy: S,
    gee: S,
) -> Result<DefectRecord<S>> {
    // Metric convention: d(u, u) = 0 exactly, so degenerate triples have
    // zero defect instead of picking up the off-center truncation of
    // G(u, u) versus G(e, e).
    let metric = |g: S, equal: bool| if equal { S::zero() } else { -(g / gee).ln() };
    let defect = metric(g_xz, x == z) + metric(g_zy, z == y) - metric(g_xy, x == y);
    let group = ball.group().clone();
    let (ex, ey, ez) = (ball.element(x), ball.element(y), ball.element(z));
    let z_inv = inverse(&group, &ez);
    let translate = |w: &GroupElement| -> Result<u32> {
        let mut t = z_inv.clone();
        t.apply(&group, w);
        ball.index_of(&t)
            .ok_or_else(|| Error::OutOfBall("translated endpoint leaves the ball".into()))
    };
    let floyd = floyd_distance(ball, f, 0, translate(&ex)?, translate(&ey)?)?;
    let collinear =
        ball.dist_between(x, z) + ball.dist_between(z, y) == ball.dist_between(x, y);
    Ok(DefectRecord {
        x: ex.display(&group),
        y: ey.display(&group),
        z: ez.display(&group),
        defect,
        floyd,
        collinear,
        transition: None,
    })
}

/// Decreasing envelope over log-spaced separation bins: per-bin maxima
/// regularized by a right-to-left cumulative maximum.
#[derive(Clone, Debug, Serialize)]
pub struct Envelope<S> {
    /// Bin edges, ascending; bin i covers [edges[i], edges[i+1]), with the
    /// first bin absorbing everything below and the last everything above.
    pub edges: Vec<S>,
    pub counts: Vec<u64>,
    /// Per-bin maximum of the value (zero for empty bins).
    pub raw_max: Vec<S>,
    /// Nonincreasing regularization (suffix maximum over occupied bins).
    pub regularized: Vec<S>,
}

pub fn fit_envelope<S: Scalar>(points: &[(S, S)], n_bins: usize) -> Envelope<S> {
    let n_bins = n_bins.max(1);
    let positive: Vec<S> = points
        .iter()
        .map(|&(d, _)| d)
        .filter(|&d| d > S::zero())
        .collect();
    let lo = positive
        .iter()
        .copied()
        .fold(S::infinity(), S::min)
        .max(S::of(1e-12));
    let hi = positive.iter().copied().fold(S::zero(), S::max);
    let edges: Vec<S> = if positive.is_empty() || hi <= lo {
        vec![S::zero(), hi.max(S::one())]
    } else {
        let ratio = (hi / lo).powf(S::one() / S::of(n_bins as f64));
        let mut e = vec![S::zero()];
        for i in 0..n_bins {
            e.push(lo * ratio.powi(i as i32 + 1));
        }
        e
    };
    let nb = edges.len() - 1;
    let mut counts = vec![0u64; nb];
    let mut raw_max = vec![S::zero(); nb];
    let mut occupied = vec![false; nb];
    for &(d, v) in points {
        let mut bin = edges[1..].partition_point(|&e| e <= d);
        if bin >= nb {
            bin = nb - 1;
        }
        counts[bin] += 1;
        if !occupied[bin] || v > raw_max[bin] {
            raw_max[bin] = v;
            occupied[bin] = true;
        }
    }
    let mut regularized = vec![S::zero(); nb];
    let mut running = S::zero();
    for i in (0..nb).rev() {
        if occupied[i] {
            running = running.max(raw_max[i]);
        }
        regularized[i] = running;
    }
    Envelope {
        edges,
        counts,
        raw_max,
        regularized,
    }
}

/// Stratified triple sampler: pairs by distance, middle points on, near,
/// or far from the connecting geodesic.
#[derive(Clone, Debug, Serialize)]
pub struct TripleSamplerParams {
    pub n_triples: usize,
    /// Inclusive range for d(x, y).
    pub pair_distance: (u32, u32),
    /// Relative weights of the on-geodesic / near-geodesic / far strata.
    pub strata_weights: (f64, f64, f64),
    /// Cap on every participant's norm; translations by the middle point
    /// must stay in the ball, so 2 * max_norm <= radius is required.
    pub max_norm: u32,
}

impl TripleSamplerParams {
    pub fn validate(&self, ball: &CayleyBall) -> Result<()> {
        if self.n_triples == 0 {
            return Err(Error::Config("n_triples must be positive".into()));
        }
        if self.pair_distance.0 > self.pair_distance.1 || self.pair_distance.0 == 0 {
            return Err(Error::Config("bad pair distance range".into()));
        }
        if 2 * self.max_norm > ball.radius() {
            return Err(Error::Config(format!(
                "max_norm {} needs radius >= {}",
                self.max_norm,
                2 * self.max_norm
            )));
        }
        if self.max_norm + self.pair_distance.1 > ball.radius() {
            return Err(Error::Config(
                "pair distance plus norm exceeds the radius".into(),
            ));
        }
        let (a, b, c) = self.strata_weights;
        if a < 0.0 || b < 0.0 || c < 0.0 || a + b + c <= 0.0 {
            return Err(Error::Config("bad strata weights".into()));
        }
        Ok(())
    }
}

struct Triple {
    x: u32,
    y: u32,
    z: u32,
}

fn sample_sphere_index(rng: &mut ChaCha8Rng, ball: &CayleyBall, r: u32) -> u32 {
    let range = ball.sphere_range(r);
    rng.random_range(range.start..range.end)
}

fn sample_triples(
    ball: &CayleyBall,
    params: &TripleSamplerParams,
    seed: u64,
) -> Result<Vec<Triple>> {
    params.validate(ball)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triples = Vec::with_capacity(params.n_triples);
    let (w_on, w_near, w_far) = params.strata_weights;
    let total_w = w_on + w_near + w_far;
    let mut attempts = 0usize;
    let max_attempts = params.n_triples * 400;
    while triples.len() < params.n_triples {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Sampling(format!(
                "only {} of {} triples found after {} attempts",
                triples.len(),
                params.n_triples,
                attempts
            )));
        }
        let d = rng.random_range(params.pair_distance.0..=params.pair_distance.1);
        let nx = rng.random_range(0..=params.max_norm.min(ball.radius() - d));
        let x = if nx == 0 {
            0
        } else {
            sample_sphere_index(&mut rng, ball, nx)
        };
        // y = x * w for a uniform sphere-d element w; keep it within norms.
        let w = ball.element(sample_sphere_index(&mut rng, ball, d));
        let mut ye = ball.element(x);
        ye.apply(ball.group(), &w);
        let Some(y) = ball.index_of(&ye) else {
            continue;
        };
        if ball.dist(y) > params.max_norm || ball.dist_between(x, y) != d {
            continue;
        }
        let geod = ball.geodesic(x, y)?;
        let pick = rng.random_range(0.0..total_w);
        let z = if pick < w_on {
            geod[rng.random_range(0..geod.len())]
        } else if pick < w_on + w_near {
            let base = geod[rng.random_range(0..geod.len())];
            let row = ball.adjacency_row(base);
            let s = rng.random_range(0..row.len());
            let t = row[s];
            if t == crate::group::OUTSIDE {
                continue;
            }
            t
        } else {
            let nz = rng.random_range(1..=params.max_norm);
            let cand = sample_sphere_index(&mut rng, ball, nz);
            let near = geod.iter().any(|&p| ball.dist_between(cand, p) < 2);
            if near {
                continue;
            }
            cand
        };
        if ball.dist(z) > params.max_norm {
            continue;
        }
        triples.push(Triple { x, y, z });
    }
    Ok(triples)
}

#[derive(Clone, Debug, Serialize)]
pub struct DefectSurvey<S> {
    pub records: Vec<DefectRecord<S>>,
    pub envelope: Envelope<S>,
}

/// Survey the triangle defect over stratified triples. The envelope takes
/// the separation's lower bound as its argument (understating the
/// separation only weakens the fitted envelope).
pub fn defect_survey<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    f: &FloydFunction<S>,
    params: &TripleSamplerParams,
    n_bins: usize,
    seed: u64,
) -> Result<DefectSurvey<S>> {
    let triples = sample_triples(ball, params, seed)?;
    let gee = green_column(ball, m, 0, None, default_tol::<S>())?.value(0);
    // Group triples by (x, y) so one row solve and one column solve serve
    // every middle point of the pair.
    let mut by_pair: std::collections::BTreeMap<(u32, u32), Vec<u32>> =
        std::collections::BTreeMap::new();
    for t in &triples {
        by_pair.entry((t.x, t.y)).or_default().push(t.z);
    }
    let mut records = Vec::with_capacity(triples.len());
    for (&(x, y), zs) in &by_pair {
        let row_x = green_row(ball, m, x)?;
        let col_y = green_column(ball, m, y, None, default_tol::<S>())?;
        for &z in zs {
            records.push(defect_from_values(
                ball,
                f,
                x,
                y,
                z,
                row_x.value(z),
                col_y.value(z),
                col_y.value(x),
                gee,
            )?);
        }
    }
    let points: Vec<(S, S)> = records
        .iter()
        .map(|r| (r.floyd.lower, r.defect))
        .collect();
    let envelope = fit_envelope(&points, n_bins);
    Ok(DefectSurvey { records, envelope })
}

/// One hitting-radius record: the smallest ball radius around the middle
/// point that captures the trajectory measure at each confidence level.
#[derive(Clone, Debug, Serialize)]
pub struct HitRecord<S> {
    pub x: String,
    pub y: String,
    pub z: String,
    pub floyd: FloydDistanceBound<S>,
    /// Per epsilon: smallest radius with hit probability >= 1 - eps, or
    /// None when the searchable range is exhausted (capacity flag).
    pub r_hat: Vec<Option<u32>>,
}

pub fn hitting_survey<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    f: &FloydFunction<S>,
    epsilons: &[S],
    params: &TripleSamplerParams,
    seed: u64,
) -> Result<Vec<HitRecord<S>>> {
    let triples = sample_triples(ball, params, seed)?;
    let group = ball.group().clone();
    let mut out = Vec::with_capacity(triples.len());
    for t in &triples {
        let dz = ball.dist_from(t.z);
        let r_cap = dz[t.x as usize].min(dz[t.y as usize]).saturating_sub(1);
        let mut cache: std::collections::BTreeMap<u32, S> = std::collections::BTreeMap::new();
        let mut hit_at = |r: u32| -> Result<S> {
            if let Some(&v) = cache.get(&r) {
                return Ok(v);
            }
            let v = hit_probability_with_dz(ball, m, t.x, t.y, &dz, r)?;
            cache.insert(r, v);
            Ok(v)
        };
        let mut r_hat = Vec::with_capacity(epsilons.len());
        for &eps in epsilons {
            let threshold = S::one() - eps;
            if threshold <= S::zero() {
                r_hat.push(Some(0));
                continue;
            }
            if hit_at(r_cap)? < threshold {
                r_hat.push(None);
                continue;
            }
            // Binary search on the nondecreasing hit probability.
            let (mut lo, mut hi) = (0u32, r_cap);
            while lo < hi {
                let mid = (lo + hi) / 2;
                if hit_at(mid)? >= threshold {
                    hi = mid;
                } else {
                    lo = mid + 1;
                }
            }
            r_hat.push(Some(lo));
        }
        let ez = ball.element(t.z);
        let z_inv = inverse(&group, &ez);
        let translate = |w: u32| -> Result<u32> {
            let mut q = z_inv.clone();
            q.apply(&group, &ball.element(w));
            ball.index_of(&q)
                .ok_or_else(|| Error::OutOfBall("translated endpoint".into()))
        };
        let floyd = floyd_distance(ball, f, 0, translate(t.x)?, translate(t.y)?)?;
        out.push(HitRecord {
            x: ball.element(t.x).display(&group),
            y: ball.element(t.y).display(&group),
            z: ez.display(&group),
            floyd,
            r_hat,
        });
    }
    Ok(out)
}

/// The double-boundary quotient G(x,y) / (G(x,e) G(e,y)) at finite stage,
/// evaluated equivariantly from one identity row.
pub fn theta_with<S: Scalar>(
    vals: &GreenValues<'_, S>,
    x: &GroupElement,
    y: &GroupElement,
) -> Result<S> {
    let group = vals.group();
    let num = vals.pair(x, y)?;
    let den = vals.at(&inverse(group, x))? * vals.at(y)?;
    Ok(num / den)
}

pub fn theta<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    x: &GroupElement,
    y: &GroupElement,
) -> Result<S> {
    let vals = GreenValues::new(ball, m)?;
    theta_with(&vals, x, y)
}

/// Half the logarithm of the quotient: the log-metric analogue of the
/// word-metric product.
pub fn rho_green<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    x: &GroupElement,
    y: &GroupElement,
) -> Result<S> {
    Ok(theta(ball, m, x, y)?.ln() / S::of(2.0))
}

/// Residual of the translation cocycle identity
/// Theta(g^-1 x, g^-1 y) * Khat(g,x) * K(g,y) = Theta(x,y), where Khat is
/// the kernel of the reflected measure. Algebraically exact at finite
/// points, so the residual is solver/rounding noise only.
pub fn naim_identity_residual<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    g: &GroupElement,
    x: &GroupElement,
    y: &GroupElement,
) -> Result<S> {
    let vals = GreenValues::new(ball, m)?;
    naim_identity_residual_with(&vals, g, x, y)
}

pub fn naim_identity_residual_with<S: Scalar>(
    vals: &GreenValues<'_, S>,
    g: &GroupElement,
    x: &GroupElement,
    y: &GroupElement,
) -> Result<S> {
    let group = vals.group().clone();
    let g_inv = inverse(&group, g);
    let mut gx = g_inv.clone();
    gx.apply(&group, x);
    let mut gy = g_inv;
    gy.apply(&group, y);
    let theta_shifted = theta_with(vals, &gx, &gy)?;
    let theta_base = theta_with(vals, x, y)?;
    // Khat(g, x) = G(x, g) / G(x, e); K(g, y) = G(g, y) / G(e, y).
    let khat = vals.pair(x, g)? / vals.at(&inverse(&group, x))?;
    let k = vals.pair(g, y)? / vals.at(y)?;
    Ok((theta_shifted * khat * k / theta_base - S::one()).abs())
}

/// Midpoint classification on a free product with a flat factor: defects
/// of collinear triples whose middle point is either deep inside a flat
/// segment (horospherical) or at a factor switch (transition), classified
/// by the separation interval against a threshold.
#[derive(Clone, Debug, Serialize)]
pub struct TransitionParams<S> {
    /// Half-length of the flat segments (depth of the midpoint).
    pub flat_extent: u32,
    pub n_horospherical: usize,
    pub n_transition: usize,
    /// Separation threshold between the two classes.
    pub delta0: S,
    /// Minimal depth of a horospherical midpoint inside its flat segment.
    pub depth: u32,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TransitionReport<S> {
    pub records: Vec<DefectRecord<S>>,
    pub max_defect_transition: S,
    pub max_defect_horospherical: S,
    /// Horospherical max minus transition max.
    pub gap: S,
    pub dropped: usize,
}

pub fn transition_experiment<S: Scalar>(
    ball: &CayleyBall,
    m: &StepMeasure<S>,
    f: &FloydFunction<S>,
    params: &TransitionParams<S>,
) -> Result<TransitionReport<S>> {
    let group = ball.group().clone();
    if group.leaves().len() < 2 {
        return Err(Error::Config("needs a free product".into()));
    }
    let flat = group
        .leaves()
        .iter()
        .copied()
        .find(|l| l.abelian && l.rank >= 2)
        .ok_or_else(|| {
            Error::Config("needs a free product with an abelian factor of rank >= 2".into())
        })?;
    let other_gen = (0..group.n_gens() as u32)
        .find(|&g| {
            let leaf = group.leaves()[group.leaf_of_gen(g) as usize];
            leaf.first_gen != flat.first_gen
        })
        .expect("a second factor exists");
    let n = params.flat_extent;
    if params.depth > n {
        return Err(Error::Config("depth exceeds the flat extent".into()));
    }
    if 2 * n + 2 > ball.radius() {
        return Err(Error::OutOfBall(format!(
            "flat extent {n} needs radius >= {}",
            2 * n + 2
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let col_e = green_column(ball, m, 0, None, default_tol::<S>())?;
    let gee = col_e.value(0);
    let row_e = green_row(ball, m, 0)?;

    // Random flat lattice point of norm exactly n in the closed positive
    // quadrant of the first two flat generators.
    let g0 = flat.first_gen as u32;
    let g1 = (flat.first_gen + 1) as u32;
    let mut flat_point = |rng: &mut ChaCha8Rng| -> GroupElement {
        let split = rng.random_range(0..=n);
        let mut w = GroupElement::identity();
        for _ in 0..split {
            w.apply_dirgen(&group, crate::group::dirgen(g0, false));
        }
        for _ in 0..n - split {
            w.apply_dirgen(&group, crate::group::dirgen(g1, false));
        }
        w
    };

    let mut candidates: Vec<(GroupElement, GroupElement, bool)> = Vec::new();
    for _ in 0..params.n_horospherical {
        // x the inverse of a nonnegative lattice point, z a nonnegative
        // lattice point: the identity is a geodesic midpoint at depth n
        // inside the flat.
        let x = inverse(&group, &flat_point(&mut rng));
        let z = flat_point(&mut rng);
        candidates.push((x, z, true));
    }
    for k in 0..params.n_transition {
        // x deep in the flat, z behind the bridge into the other factor:
        // the identity is a factor-switch midpoint.
        let x = inverse(&group, &flat_point(&mut rng));
        let mut z = GroupElement::identity();
        for _ in 0..1 + (k as u32 % 2) {
            z.apply_dirgen(&group, crate::group::dirgen(other_gen, false));
        }
        candidates.push((x, z, false));
    }

    let mut records = Vec::new();
    let mut dropped = 0usize;
    let mut max_tr = S::neg_infinity();
    let mut max_horo = S::neg_infinity();
    for (xe, ze, wants_horo) in candidates {
        let (Some(x), Some(z)) = (ball.index_of(&xe), ball.index_of(&ze)) else {
            dropped += 1;
            continue;
        };
        let col_z = green_column(ball, m, z, None, default_tol::<S>())?;
        let mut rec = defect_from_values(
            ball,
            f,
            x,
            z,
            0,
            col_e.value(x),
            row_e.value(z),
            col_z.value(x),
            gee,
        )?;
        let is_horo = wants_horo
            && rec.floyd.upper < params.delta0
            && ball.dist(x).min(ball.dist(z)) >= params.depth;
        let is_transition = !wants_horo && rec.floyd.lower >= params.delta0;
        if is_horo {
            rec.transition = Some(false);
            max_horo = max_horo.max(rec.defect);
        } else if is_transition {
            rec.transition = Some(true);
            max_tr = max_tr.max(rec.defect);
        } else {
            dropped += 1;
            continue;
        }
        records.push(rec);
    }
    if !max_tr.is_finite() {
        return Err(Error::Sampling("transition class is empty".into()));
    }
    if !max_horo.is_finite() {
        return Err(Error::Sampling("horospherical class is empty".into()));
    }
    Ok(TransitionReport {
        records,
        max_defect_transition: max_tr,
        max_defect_horospherical: max_horo,
        gap: max_horo - max_tr,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::Group;

    fn setup_f2(r: u32) -> (CayleyBall, StepMeasure<f64>, FloydFunction<f64>) {
        let g = Group::parse("free(2)").unwrap();
        let ball = CayleyBall::build(g.clone(), r).unwrap();
        (
            ball,
            StepMeasure::srw(g),
            FloydFunction::exponential(0.5).unwrap(),
        )
    }

    fn idx(ball: &CayleyBall, w: &str) -> u32 {
        ball.index_of(&GroupElement::parse(ball.group(), w).unwrap())
            .unwrap()
    }

    #[test]
    fn collinear_triple_through_center_has_no_defect() {
        let (ball, m, f) = setup_f2(10);
        let rec = defect(&ball, &m, &f, idx(&ball, "a^-3"), idx(&ball, "a^3"), 0).unwrap();
        assert!(rec.collinear);
        assert!(rec.defect.abs() <= 1e-6, "defect {}", rec.defect);
        // Degenerate triple x = z.
        let x = idx(&ball, "a^2");
        let rec = defect(&ball, &m, &f, x, idx(&ball, "a^3"), x).unwrap();
        assert!(rec.defect.abs() <= 1e-9);
    }

    #[test]
    fn off_geodesic_middle_has_positive_defect_and_small_separation() {
        let (ball, m, f) = setup_f2(12);
        let rec = defect(
            &ball,
            &m,
            &f,
            idx(&ball, "a^3"),
            idx(&ball, "b^3"),
            idx(&ball, "a^-1"),
        )
        .unwrap();
        assert!(rec.defect > 0.5, "defect {}", rec.defect);
        // The cheapest in-ball path from a^4 to a b^3 runs through a:
        // 2(f(3) + f(2) + f(1)) = 1.75.
        assert!((rec.floyd.upper - 1.75).abs() < 1e-12, "floyd {:?}", rec.floyd.upper);
        assert!(!rec.collinear);
    }

    #[test]
    fn defect_is_nonnegative_on_sampled_triples() {
        let (ball, m, f) = setup_f2(8);
        let params = TripleSamplerParams {
            n_triples: 60,
            pair_distance: (2, 4),
            strata_weights: (1.0, 1.0, 1.0),
            max_norm: 4,
        };
        let survey = defect_survey(&ball, &m, &f, &params, 6, 7).unwrap();
        assert_eq!(survey.records.len(), 60);
        for rec in &survey.records {
            assert!(rec.defect >= -1e-9, "defect {}", rec.defect);
            assert!(rec.floyd.lower <= rec.floyd.upper);
        }
        // Envelope is nonincreasing by construction.
        for w in survey.envelope.regularized.windows(2) {
            assert!(w[0] >= w[1]);
        }
        // Collinear triples have near-zero defect on the tree; off-center
        // middles pick up a small truncation inflation at this radius.
        for rec in survey.records.iter().filter(|r| r.collinear) {
            assert!(rec.defect <= 2e-3, "collinear defect {}", rec.defect);
        }
    }

    #[test]
    fn survey_is_deterministic_in_the_seed() {
        let (ball, m, f) = setup_f2(8);
        let params = TripleSamplerParams {
            n_triples: 20,
            pair_distance: (2, 4),
            strata_weights: (1.0, 1.0, 1.0),
            max_norm: 4,
        };
        let s1 = defect_survey(&ball, &m, &f, &params, 6, 11).unwrap();
        let s2 = defect_survey(&ball, &m, &f, &params, 6, 11).unwrap();
        let k1: Vec<_> = s1.records.iter().map(|r| (r.x.clone(), r.defect)).collect();
        let k2: Vec<_> = s2.records.iter().map(|r| (r.x.clone(), r.defect)).collect();
        assert_eq!(k1, k2);
    }

    #[test]
    fn envelope_binning_is_monotone() {
        let points: Vec<(f64, f64)> = vec![
            (0.01, 3.0),
            (0.02, 2.5),
            (0.1, 1.0),
            (0.5, 0.2),
            (1.0, 0.1),
            (2.0, 0.3),
        ];
        let env = fit_envelope(&points, 4);
        for w in env.regularized.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert_eq!(env.counts.iter().sum::<u64>(), 6);
        // The small-separation end dominates.
        assert_eq!(env.regularized[0], 3.0);
    }

    #[test]
    fn hitting_survey_on_geodesic_middle_needs_radius_zero() {
        let (ball, m, f) = setup_f2(8);
        let params = TripleSamplerParams {
            n_triples: 12,
            pair_distance: (3, 4),
            strata_weights: (1.0, 0.0, 0.0),
            max_norm: 4,
        };
        let recs = hitting_survey(&ball, &m, &f, &[0.1, 1.0], &params, 5).unwrap();
        for rec in &recs {
            // Middle points strictly inside the geodesic force passage.
            let z = GroupElement::parse(ball.group(), &rec.z).unwrap();
            let x = GroupElement::parse(ball.group(), &rec.x).unwrap();
            let y = GroupElement::parse(ball.group(), &rec.y).unwrap();
            if z != x && z != y {
                assert_eq!(rec.r_hat[0], Some(0), "record {rec:?}");
            }
            // Vacuous threshold is satisfied at radius zero.
            assert_eq!(rec.r_hat[1], Some(0));
        }
    }

    #[test]
    fn theta_examples_on_tree() {
        let (ball, m, _) = setup_f2(10);
        let g = ball.group().clone();
        let e = GroupElement::identity();
        let y = GroupElement::parse(&g, "a^2 b").unwrap();
        // Theta(e, y) = 1 / G(e,e) = 2/3 up to truncation at this radius.
        let th = theta(&ball, &m, &e, &y).unwrap();
        assert!((th - 2.0 / 3.0).abs() < 1e-4, "{th}");
        // Factorization through the identity for opposite ray points.
        for k in 1..=3 {
            let x = GroupElement::parse(&g, &format!("a^-{k}")).unwrap();
            let y = GroupElement::parse(&g, &format!("a^{k}")).unwrap();
            let th = theta(&ball, &m, &x, &y).unwrap();
            assert!((th - 2.0 / 3.0).abs() < 1e-2, "k={k} {th}");
        }
        // On-diagonal blow-up.
        let a2 = GroupElement::parse(&g, "a^2").unwrap();
        let a4 = GroupElement::parse(&g, "a^4").unwrap();
        let t2 = theta(&ball, &m, &a2, &a2).unwrap();
        let t4 = theta(&ball, &m, &a4, &a4).unwrap();
        assert!(t4 > t2 && t2 > 10.0);
    }

    #[test]
    fn cocycle_identity_is_exact() {
        let (ball, m, _) = setup_f2(10);
        let g = ball.group().clone();
        let vals = GreenValues::new(&ball, &m).unwrap();
        let cases = [
            ("a", "b^2", "a b"),
            ("e", "a^2", "b^-1"),
            ("b^-1", "a b", "a^-1 b"),
        ];
        for (gw, xw, yw) in cases {
            let r = naim_identity_residual_with(
                &vals,
                &GroupElement::parse(&g, gw).unwrap(),
                &GroupElement::parse(&g, xw).unwrap(),
                &GroupElement::parse(&g, yw).unwrap(),
            )
            .unwrap();
            assert!(r <= 1e-10, "residual {r} for g={gw}");
        }
        // g = e gives residual 0 exactly.
        let r = naim_identity_residual_with(
            &vals,
            &GroupElement::identity(),
            &GroupElement::parse(&g, "a").unwrap(),
            &GroupElement::parse(&g, "b").unwrap(),
        )
        .unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn transition_classes_separate_on_free_product_with_flat() {
        let g = Group::parse("product(abelian(2), free(1))").unwrap();
        let ball = CayleyBall::build(g.clone(), 8).unwrap();
        let m: StepMeasure<f64> = StepMeasure::srw(g);
        let f = FloydFunction::exponential(0.5).unwrap();
        let params = TransitionParams {
            flat_extent: 3,
            n_horospherical: 6,
            n_transition: 6,
            delta0: 0.5,
            depth: 2,
            seed: 3,
        };
        let report = transition_experiment(&ball, &m, &f, &params).unwrap();
        assert!(
            report.max_defect_transition < report.max_defect_horospherical,
            "transition {} vs horospherical {}",
            report.max_defect_transition,
            report.max_defect_horospherical
        );
        assert!(report.gap > 0.0);
    }

    #[test]
    fn transition_experiment_rejects_wrong_spec() {
        let g = Group::parse("free(2)").unwrap();
        let ball = CayleyBall::build(g.clone(), 6).unwrap();
        let m: StepMeasure<f64> = StepMeasure::srw(g);
        let f = FloydFunction::exponential(0.5).unwrap();
        let params = TransitionParams {
            flat_extent: 2,
            n_horospherical: 2,
            n_transition: 2,
            delta0: 0.5,
            depth: 1,
            seed: 1,
        };
        assert!(matches!(
            transition_experiment(&ball, &m, &f, &params),
            Err(Error::Config(_))
        ));
    }
}
