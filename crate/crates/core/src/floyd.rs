//! Rescaling functions and the rescaled path metric: validated rescaling
//! kinds, exact tail sums, two-sided distance bounds on balls (in-ball
//! shortest path above, sphere-hub relaxation below), and the decay helper
//! integral with its growth quotient.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::CayleyBall;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub enum FloydKind<S> {
    /// f(n) = lambda^n, 0 < lambda < 1.
    Exponential { lambda: S },
    /// f(n) = (n+1)^(-a), a > 1.
    Polynomial { a: S },
    /// Finite table continued by a geometric tail with the last ratio.
    Table { values: Vec<S>, tail_ratio: S },
}

/// A validated rescaling function: positive, nonincreasing, summable, with
/// bounded consecutive ratio f(n)/f(n+1) <= kappa.
#[derive(Clone, Debug)]
pub struct FloydFunction<S: Scalar> {
    kind: FloydKind<S>,
    kappa: S,
}

impl<S: Scalar> FloydFunction<S> {
    pub fn exponential(lambda: S) -> Result<Self> {
        if !(lambda > S::zero() && lambda < S::one()) {
            return Err(Error::Config(format!(
                "exponential base {lambda} outside (0,1)"
            )));
        }
        Ok(FloydFunction {
            kind: FloydKind::Exponential { lambda },
            kappa: S::one() / lambda,
        })
    }

    pub fn polynomial(a: S) -> Result<Self> {
        if a <= S::one() {
            return Err(Error::Config(format!("polynomial exponent {a} must be > 1")));
        }
        Ok(FloydFunction {
            kind: FloydKind::Polynomial { a },
            kappa: S::of(2.0).powf(a),
        })
    }

    pub fn table(values: Vec<S>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Config("table needs at least 2 values".into()));
        }
        if values.iter().any(|&v| v <= S::zero()) {
            return Err(Error::Config("table values must be positive".into()));
        }
        for w in values.windows(2) {
            if w[1] > w[0] {
                return Err(Error::Config("table must be nonincreasing".into()));
            }
        }
        let last = values[values.len() - 1];
        let prev = values[values.len() - 2];
        let tail_ratio = last / prev;
        if tail_ratio >= S::one() {
            return Err(Error::Config(
                "table tail ratio must be < 1 for summability".into(),
            ));
        }
        let mut kappa = S::one() / tail_ratio;
        for w in values.windows(2) {
            kappa = kappa.max(w[0] / w[1]);
        }
        Ok(FloydFunction {
            kind: FloydKind::Table { values, tail_ratio },
            kappa,
        })
    }

    /// Parse `exp(0.5)`, `poly(2.0)` or `table(1,0.5,0.25)`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let inner = |prefix: &str| -> Option<&str> {
            text.strip_prefix(prefix)
                .and_then(|rest| rest.strip_suffix(')'))
        };
        if let Some(arg) = inner("exp(") {
            let v: f64 = arg
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad exp argument {arg:?}")))?;
            Self::exponential(S::of(v))
        } else if let Some(arg) = inner("poly(") {
            let v: f64 = arg
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad poly argument {arg:?}")))?;
            Self::polynomial(S::of(v))
        } else if let Some(args) = inner("table(") {
            let values = args
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map(S::of)
                        .map_err(|_| Error::Config(format!("bad table value {t:?}")))
                })
                .collect::<Result<Vec<S>>>()?;
            Self::table(values)
        } else {
            Err(Error::Config(format!(
                "expected exp(..), poly(..) or table(..), got {text:?}"
            )))
        }
    }

    pub fn kappa(&self) -> S {
        self.kappa
    }

    pub fn eval_int(&self, n: u64) -> S {
        match &self.kind {
            FloydKind::Exponential { lambda } => lambda.powi(n as i32),
            FloydKind::Polynomial { a } => S::of(n as f64 + 1.0).powf(-*a),
            FloydKind::Table { values, tail_ratio } => {
                let len = values.len() as u64;
                if n < len {
                    values[n as usize]
                } else {
                    values[values.len() - 1] * tail_ratio.powi((n - len + 1) as i32)
                }
            }
        }
    }

    /// Real extension: analytic for the closed-form kinds, linear
    /// interpolation between integer arguments for tables.
    pub fn eval_real(&self, t: S) -> S {
        debug_assert!(t >= S::zero());
        match &self.kind {
            FloydKind::Exponential { lambda } => lambda.powf(t),
            FloydKind::Polynomial { a } => (t + S::one()).powf(-*a),
            FloydKind::Table { .. } => {
                let lo = t.floor();
                let frac = t - lo;
                let lo = lo.as_f64() as u64;
                let (f0, f1) = (self.eval_int(lo), self.eval_int(lo + 1));
                f0 + (f1 - f0) * frac
            }
        }
    }

    /// Tail sum over integers: sum of f(k) for k >= from.
    pub fn tail(&self, from: u64) -> S {
        match &self.kind {
            FloydKind::Exponential { lambda } => {
                lambda.powi(from as i32) / (S::one() - *lambda)
            }
            FloydKind::Polynomial { a } => {
                // Partial sum plus an integral bracket of the remainder:
                // int_{K+1} <= sum_{k > K} <= int_K, midpoint taken, half
                // the bracket width bounds the absolute error.
                let a = *a;
                let target = S::of(1e-12).max(S::epsilon() * S::of(16.0));
                let integral_from =
                    |s: S| -> S { (s + S::one()).powf(S::one() - a) / (a - S::one()) };
                let mut sum = S::zero();
                let mut k = from;
                loop {
                    let hi = integral_from(S::of(k as f64));
                    let lo = integral_from(S::of(k as f64 + 1.0));
                    if (hi - lo) / S::of(2.0) <= target || k > from + 10_000_000 {
                        return sum + (hi + lo) / S::of(2.0);
                    }
                    sum += self.eval_int(k);
                    k += 1;
                }
            }
            FloydKind::Table { values, tail_ratio } => {
                let len = values.len() as u64;
                let mut sum = S::zero();
                let mut k = from;
                while k < len {
                    sum += values[k as usize];
                    k += 1;
                }
                // Geometric continuation from index len-1.
                let last = values[values.len() - 1];
                if from >= len {
                    sum + last * tail_ratio.powi((from - len + 1) as i32)
                        / (S::one() - *tail_ratio)
                } else {
                    sum + last * *tail_ratio / (S::one() - *tail_ratio)
                }
            }
        }
    }

    /// Integral of the real extension from `s` to infinity.
    pub fn alpha(&self, s: S) -> S {
        match &self.kind {
            FloydKind::Exponential { lambda } => {
                let log_inv = -lambda.ln();
                lambda.powf(s) / log_inv
            }
            FloydKind::Polynomial { a } => (s + S::one()).powf(S::one() - *a) / (*a - S::one()),
            FloydKind::Table { values, tail_ratio } => {
                let len = values.len() as u64;
                let last_idx = S::of(len as f64 - 1.0);
                let log_inv = -tail_ratio.ln();
                let geom_from = |t: S| -> S {
                    // f(t) = last * q^(t - (len-1)) for t >= len-1
                    values[values.len() - 1] * tail_ratio.powf(t - last_idx) / log_inv
                };
                if s >= last_idx {
                    return geom_from(s);
                }
                // Trapezoids of the linear interpolation up to len-1.
                let mut total = geom_from(last_idx);
                let mut t = s;
                while t < last_idx {
                    let next = (t.floor() + S::one()).min(last_idx);
                    let (f0, f1) = (self.eval_real(t), self.eval_real(next));
                    total += (f0 + f1) / S::of(2.0) * (next - t);
                    t = next;
                }
                total
            }
        }
    }
}

/// A rigorous interval around a rescaled distance computed on a finite
/// ball: the in-ball shortest path from above, the sphere-hub relaxation
/// (all outside excursions free) from below.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FloydDistanceBound<S> {
    pub lower: S,
    pub upper: S,
    pub radius_used: u32,
    pub basepoint: u32,
    pub x: u32,
    pub y: u32,
}

struct HeapItem<S> {
    cost: S,
    node: u32,
}

impl<S: Scalar> PartialEq for HeapItem<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cost == other.cost && self.node == other.node
    }
}
impl<S: Scalar> Eq for HeapItem<S> {}
impl<S: Scalar> Ord for HeapItem<S> {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (cost, node) through BinaryHeap's max order.
        other
            .cost
            .partial_cmp(&self.cost)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}
impl<S: Scalar> PartialOrd for HeapItem<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra<S: Scalar>(
    ball: &CayleyBall,
    node_weight: &[S],
    x: u32,
    y: u32,
    hub: bool,
) -> S {
    let n = ball.len();
    let gdir = ball.n_dirgens() as usize;
    let hub_id = n as u32;
    let sphere_r = ball.sphere_range(ball.radius());
    let mut dist: Vec<S> = vec![S::infinity(); n + 1];
    let mut heap = BinaryHeap::new();
    dist[x as usize] = S::zero();
    heap.push(HeapItem {
        cost: S::zero(),
        node: x,
    });
    while let Some(HeapItem { cost, node }) = heap.pop() {
        if cost > dist[node as usize] {
            continue;
        }
        if node == y {
            return cost;
        }
        if node == hub_id {
            // Zero-cost edges to every outermost-sphere vertex.
            for t in sphere_r.clone() {
                if cost < dist[t as usize] {
                    dist[t as usize] = cost;
                    heap.push(HeapItem { cost, node: t });
                }
            }
            continue;
        }
        if hub && sphere_r.contains(&node) && cost < dist[hub_id as usize] {
            dist[hub_id as usize] = cost;
            heap.push(HeapItem {
                cost,
                node: hub_id,
            });
        }
        let row = ball.adjacency_row(node);
        let w_here = node_weight[node as usize];
        for s in 0..gdir {
            let t = row[s];
            if t == crate::group::OUTSIDE {
                continue;
            }
            // Edge weight f(min(d(v,a), d(v,b))) = max of the endpoint
            // values since f is nonincreasing.
            let w = w_here.max(node_weight[t as usize]);
            let next = cost + w;
            if next < dist[t as usize] {
                dist[t as usize] = next;
                heap.push(HeapItem { cost: next, node: t });
            }
        }
    }
    dist[y as usize]
}

/// Rescaled length of an explicit path (sequence of adjacent ball indices).
pub fn floyd_path_length<S: Scalar>(
    ball: &CayleyBall,
    f: &FloydFunction<S>,
    v: u32,
    path: &[u32],
) -> Result<S> {
    if path.len() <= 1 {
        return Ok(S::zero());
    }
    let mut total = S::zero();
    for pair in path.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let adjacent = ball.adjacency_row(a).iter().any(|&t| t == b);
        if !adjacent {
            return Err(Error::MalformedElement(format!(
                "path vertices {a} and {b} are not adjacent"
            )));
        }
        let da = ball.dist_between(v, a);
        let db = ball.dist_between(v, b);
        total += f.eval_int(da.min(db) as u64);
    }
    Ok(total)
}

/// Two-sided bound on the rescaled distance with basepoint `v`, computed on
/// the ball. The upper bound restricts paths to the ball; the lower bound
/// lets any excursion beyond the outermost sphere travel for free.
pub fn floyd_distance<S: Scalar>(
    ball: &CayleyBall,
    f: &FloydFunction<S>,
    v: u32,
    x: u32,
    y: u32,
) -> Result<FloydDistanceBound<S>> {
    let n = ball.len();
    if (x as usize) >= n || (y as usize) >= n || (v as usize) >= n {
        return Err(Error::OutOfBall("floyd_distance index".into()));
    }
    if x == y {
        return Ok(FloydDistanceBound {
            lower: S::zero(),
            upper: S::zero(),
            radius_used: ball.radius(),
            basepoint: v,
            x,
            y,
        });
    }
    let dist_v = ball.dist_from(v);
    let node_weight: Vec<S> = dist_v.iter().map(|&d| f.eval_int(d as u64)).collect();
    let upper = dijkstra(ball, &node_weight, x, y, false);
    let lower = dijkstra(ball, &node_weight, x, y, true);
    debug_assert!(lower <= upper + S::epsilon());
    Ok(FloydDistanceBound {
        lower: lower.min(upper),
        upper,
        radius_used: ball.radius(),
        basepoint: v,
        x,
        y,
    })
}

fn adaptive_simpson<S: Scalar>(
    g: &impl Fn(S) -> S,
    a: S,
    b: S,
    fa: S,
    fb: S,
    fm: S,
    whole: S,
    tol: S,
    depth: u32,
) -> Result<S> {
    if depth > 48 {
        return Err(Error::Numeric("quadrature did not converge".into()));
    }
    let two = S::of(2.0);
    let m = (a + b) / two;
    let lm = (a + m) / two;
    let rm = (m + b) / two;
    let flm = g(lm);
    let frm = g(rm);
    let six = S::of(6.0);
    let left = (m - a) / six * (fa + S::of(4.0) * flm + fm);
    let right = (b - m) / six * (fm + S::of(4.0) * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= S::of(15.0) * tol {
        Ok(left + right + delta / S::of(15.0))
    } else {
        let half = tol / two;
        Ok(
            adaptive_simpson(g, a, m, fa, fm, flm, left, half, depth + 1)?
                + adaptive_simpson(g, m, b, fm, fb, frm, right, half, depth + 1)?,
        )
    }
}

/// The decay helper e(r): integral from r to infinity of
/// f(t/tau) / sqrt(alpha(t/tau)), by adaptive quadrature with the improper
/// tail evaluated analytically (the integrand has the exact antiderivative
/// -2 tau sqrt(alpha(t/tau))).
pub fn helper_e<S: Scalar>(f: &FloydFunction<S>, tau: S, r: S) -> Result<S> {
    if tau <= S::one() || r <= S::zero() {
        return Err(Error::Config("helper_e needs tau > 1, r > 0".into()));
    }
    let g = |t: S| f.eval_real(t / tau) / f.alpha(t / tau).sqrt();
    let two = S::of(2.0);
    let tail_at = |m: S| two * tau * f.alpha(m / tau).sqrt();
    let rel = S::of(1e-8);
    // Grow the quadrature window until the exact remainder is negligible.
    let mut m = r * two + S::of(8.0);
    let reference = tail_at(r); // equals e(r) exactly
    while tail_at(m) > reference * rel / two {
        m = m * two;
        if m > r * S::of(1e6) {
            break;
        }
    }
    let fa = g(r);
    let fb = g(m);
    let mid = (r + m) / two;
    let fm = g(mid);
    let whole = (m - r) / S::of(6.0) * (fa + S::of(4.0) * fm + fb);
    let tol = reference * rel;
    let integral = adaptive_simpson(&g, r, m, fa, fb, fm, whole, tol, 0)?;
    Ok(integral + tail_at(m))
}

/// Minimal trajectory-length scale h(r) = C(K) (e(r) - e(tau r)) / (K f(r))
/// with C(K) = kappa^(ceil(K/2 + 1)) / K. Diverges superlinearly in r.
pub fn h_growth<S: Scalar>(f: &FloydFunction<S>, tau: S, r: S, k_jump: S) -> Result<S> {
    if k_jump <= S::zero() {
        return Err(Error::Config("jump bound must be positive".into()));
    }
    let c = f.kappa().powf((k_jump / S::of(2.0) + S::one()).ceil()) / k_jump;
    let e_r = helper_e(f, tau, r)?;
    let e_tr = helper_e(f, tau, tau * r)?;
    Ok(c * (e_r - e_tr) / (k_jump * f.eval_real(r)))
}

/// One scatter point relating word-metric distance from the basepoint to a
/// geodesic with the rescaled separation of its endpoints.
#[derive(Clone, Debug, Serialize)]
pub struct KarlssonRecord<S> {
    pub x: u32,
    pub y: u32,
    pub dist_to_geodesic: u32,
    pub bound: FloydDistanceBound<S>,
}

pub fn karlsson_scatter<S: Scalar>(
    ball: &CayleyBall,
    f: &FloydFunction<S>,
    v: u32,
    pairs: &[(u32, u32)],
) -> Result<Vec<KarlssonRecord<S>>> {
    let dist_v = ball.dist_from(v);
    pairs
        .iter()
        .map(|&(x, y)| {
            let path = ball.geodesic(x, y)?;
            let d = path
                .iter()
                .map(|&i| dist_v[i as usize])
                .min()
                .unwrap_or(0);
            let bound = floyd_distance(ball, f, v, x, y)?;
            Ok(KarlssonRecord {
                x,
                y,
                dist_to_geodesic: d,
                bound,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{Group, GroupElement};

    fn exp_half() -> FloydFunction<f64> {
        FloydFunction::exponential(0.5).unwrap()
    }

    #[test]
    fn construction_and_kappa() {
        assert_eq!(exp_half().kappa(), 2.0);
        let poly = FloydFunction::<f64>::polynomial(2.0).unwrap();
        assert_eq!(poly.kappa(), 4.0);
        assert_eq!(poly.eval_int(0), 1.0);
        assert_eq!(poly.eval_int(3), 1.0 / 16.0);
        assert!(FloydFunction::<f64>::table(vec![1.0, 1.0, 2.0]).is_err());
        assert!(FloydFunction::<f64>::exponential(1.5).is_err());
        assert!(FloydFunction::<f64>::polynomial(1.0).is_err());
        assert!(FloydFunction::<f64>::table(vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn parse_grammar() {
        assert!(FloydFunction::<f64>::parse("exp(0.5)").is_ok());
        assert!(FloydFunction::<f64>::parse("poly(2.0)").is_ok());
        assert!(FloydFunction::<f64>::parse("table(1, 0.5, 0.25)").is_ok());
        assert!(FloydFunction::<f64>::parse("exp(1.5)").is_err());
        assert!(FloydFunction::<f64>::parse("spline(1)").is_err());
    }

    #[test]
    fn exponential_tail_closed_form() {
        let f = exp_half();
        assert!((f.tail(3) - 0.25).abs() < 1e-15);
        assert!((f.tail(0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn polynomial_tail_matches_basel() {
        let f = FloydFunction::<f64>::polynomial(2.0).unwrap();
        let expected = std::f64::consts::PI.powi(2) / 6.0 - 1.0;
        assert!((f.tail(1) - expected).abs() < 1e-10, "{}", f.tail(1));
    }

    #[test]
    fn table_tail_and_eval() {
        let f = FloydFunction::<f64>::table(vec![1.0, 0.5, 0.25]).unwrap();
        // Geometric continuation with ratio 1/2 from the last value.
        assert_eq!(f.eval_int(3), 0.125);
        assert!((f.tail(0) - (1.0 + 0.5 + 0.25 + 0.25)).abs() < 1e-15);
        assert!((f.tail(3) - 0.25).abs() < 1e-15);
        assert_eq!(f.kappa(), 2.0);
    }

    #[test]
    fn path_length_examples() {
        let z = Group::parse("free(1)").unwrap();
        let ball = crate::group::CayleyBall::build(z.clone(), 3).unwrap();
        let f = exp_half();
        let idx = |w: &str| {
            ball.index_of(&GroupElement::parse(&z, w).unwrap())
                .unwrap()
        };
        let path = vec![idx("a^-1"), 0, idx("a")];
        assert_eq!(floyd_path_length(&ball, &f, 0, &path).unwrap(), 2.0);
        assert_eq!(
            floyd_path_length(&ball, &f, 0, &[]).unwrap(),
            0.0
        );

        let g2 = Group::parse("free(2)").unwrap();
        let b2 = crate::group::CayleyBall::build(g2.clone(), 3).unwrap();
        let i2 = |w: &str| {
            b2.index_of(&GroupElement::parse(&g2, w).unwrap())
                .unwrap()
        };
        let path = vec![i2("a^2"), i2("a"), 0, i2("b"), i2("b^2")];
        assert_eq!(floyd_path_length(&b2, &f, 0, &path).unwrap(), 3.0);
        // Broken path rejected.
        assert!(floyd_path_length(&b2, &f, 0, &[i2("a^2"), 0]).is_err());
    }

    #[test]
    fn tree_distance_interval() {
        let g = Group::parse("free(2)").unwrap();
        let ball = crate::group::CayleyBall::build(g.clone(), 8).unwrap();
        let f = exp_half();
        let a = ball.index_of(&GroupElement::parse(&g, "a").unwrap()).unwrap();
        let ai = ball
            .index_of(&GroupElement::parse(&g, "a^-1").unwrap())
            .unwrap();
        let b = floyd_distance(&ball, &f, 0, a, ai).unwrap();
        assert_eq!(b.upper, 2.0);
        // Radial escape on each side costs sum_{k=1}^{7} 2^-k.
        let escape = 2.0 * (1.0 - 0.5f64.powi(7));
        assert!((b.lower - escape).abs() < 1e-12, "lower={}", b.lower);
        assert!(b.lower <= b.upper);
        // Symmetry.
        let rev = floyd_distance(&ball, &f, 0, ai, a).unwrap();
        assert_eq!(rev.upper, b.upper);
        assert_eq!(rev.lower, b.lower);
    }

    #[test]
    fn tree_upper_is_geodesic_sum() {
        let g = Group::parse("free(2)").unwrap();
        let ball = crate::group::CayleyBall::build(g.clone(), 8).unwrap();
        let f = exp_half();
        let x = ball
            .index_of(&GroupElement::parse(&g, "a^4").unwrap())
            .unwrap();
        let y = ball
            .index_of(&GroupElement::parse(&g, "b^4").unwrap())
            .unwrap();
        let bound = floyd_distance(&ball, &f, 0, x, y).unwrap();
        // Unique reduced path through the identity: 2 * sum_{k=0}^{3} 2^-k.
        let expected = 2.0 * (1.0 + 0.5 + 0.25 + 0.125);
        assert!((bound.upper - expected).abs() < 1e-12);
    }

    #[test]
    fn flat_collapses_via_staircase() {
        let g = Group::parse("abelian(2)").unwrap();
        let ball = crate::group::CayleyBall::build(g.clone(), 8).unwrap();
        let f = exp_half();
        let x = ball
            .index_of(&GroupElement::parse(&g, "x^4").unwrap())
            .unwrap();
        let y = ball
            .index_of(&GroupElement::parse(&g, "y^4").unwrap())
            .unwrap();
        let bound = floyd_distance(&ball, &f, 0, x, y).unwrap();
        // The L-shaped path at distance >= 3 from the basepoint costs at
        // most 8 * f(3).
        assert!(bound.upper <= 8.0 * f.eval_int(3) + 1e-12);
    }

    #[test]
    fn helper_e_exponential_closed_form() {
        let f = exp_half();
        let tau = 2.0;
        let closed = |r: f64| (2.0 * tau / (2.0f64.ln()).sqrt()) * 2.0f64.powf(-r / (2.0 * tau));
        for r in [1.0, 4.0, 8.0, 16.0, 33.5, 60.0] {
            let e = helper_e(&f, tau, r).unwrap();
            let rel = (e - closed(r)).abs() / closed(r);
            assert!(rel < 1e-6, "r={r} e={e} closed={} rel={rel}", closed(r));
        }
        // Anchor value at r = 8: (2 tau / sqrt(ln 2)) * 2^(-r / (2 tau)).
        let e8 = helper_e(&f, tau, 8.0).unwrap();
        assert!((e8 - 1.2011224087864498).abs() < 1e-6);
        // Strictly decreasing.
        let e16 = helper_e(&f, tau, 16.0).unwrap();
        let e32 = helper_e(&f, tau, 32.0).unwrap();
        assert!(e8 > e16 && e16 > e32);
    }

    #[test]
    fn helper_growth_quotient_increases() {
        let f = exp_half();
        let tau = 2.0;
        let quot = |r: f64| {
            let num = helper_e(&f, tau, r).unwrap() - helper_e(&f, tau, 2.0 * r).unwrap();
            num / (r * f.eval_real(r))
        };
        let q10 = quot(10.0);
        let q20 = quot(20.0);
        let q40 = quot(40.0);
        assert!(q10 < q20 && q20 < q40, "{q10} {q20} {q40}");
    }

    #[test]
    fn h_growth_properties() {
        let f = exp_half();
        let h = |r: f64, k: f64| h_growth(&f, 2.0, r, k).unwrap();
        assert!(h(40.0, 1.0) / 40.0 > h(20.0, 1.0) / 20.0);
        assert!(h(5.0, 1.0) > 0.0);
        // Doubling the jump bound recomputes the prefactor.
        let h1 = h(20.0, 1.0);
        let h2 = h(20.0, 2.0);
        let c1 = 2.0f64.powi(2) / 1.0; // kappa^ceil(1.5+...)=kappa^2 over K=1
        let c2 = 2.0f64.powi(2) / 2.0;
        assert!((h1 / h2 - (c1 / 1.0) / (c2 / 2.0)).abs() < 1e-9);
    }

    #[test]
    fn karlsson_scatter_tree_geometry() {
        let g = Group::parse("free(2)").unwrap();
        let ball = crate::group::CayleyBall::build(g.clone(), 7).unwrap();
        let f = exp_half();
        let idx = |w: &str| {
            ball.index_of(&GroupElement::parse(&g, w).unwrap())
                .unwrap()
        };
        // Basepoint on the geodesic: distance 0.
        let recs = karlsson_scatter(&ball, &f, 0, &[(idx("a^-2"), idx("a^2"))]).unwrap();
        assert_eq!(recs[0].dist_to_geodesic, 0);
        // Deep pair x = a^3, y = a^3 b^3: both legs far from the identity.
        let recs = karlsson_scatter(&ball, &f, 0, &[(idx("a^3"), idx("a^3 b^3"))]).unwrap();
        assert_eq!(recs[0].dist_to_geodesic, 3);
        assert!(recs[0].bound.upper < 0.76);
    }
}
