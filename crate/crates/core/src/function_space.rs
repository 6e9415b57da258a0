//! Candidate functions, Dom_w membership, the norms of `X = L^p(ŵ_p^{p-1})` and
//! `W`, and numerical checks of the double-weight Poincaré inequalities.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auxweight::AuxWeight;
use crate::degeneracy::{DegeneracyCount, DegeneracyStructure, SideFlag};
use crate::quadrature::{breaks_within, integrate_with_breaks, IntegralResult, QuadratureConfig};
use crate::weight::{Exponent, Side, Weight};
use crate::{Error, Extended, Result};

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Global regularity of a function on the closed domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularity {
    /// Continuously differentiable on `[a, b]`.
    C1,
    /// Absolutely continuous on `[a, b]`.
    AC,
    /// Sampled data; derivative from finite differences.
    Grid,
    /// Absolutely continuous only on compact subsets of the components of `I`.
    Local,
}

impl Regularity {
    pub fn is_globally_ac(self) -> bool {
        matches!(self, Regularity::C1 | Regularity::AC)
    }
}

/// A function `u` together with its (a.e.) derivative.
#[derive(Clone)]
pub struct TestFunction {
    eval: RealFn,
    deriv: RealFn,
    regularity: Regularity,
    /// Points where `u'` may be discontinuous or singular.
    kinks: Vec<f64>,
    label: String,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("label", &self.label)
            .field("regularity", &self.regularity)
            .field("kinks", &self.kinks)
            .finish_non_exhaustive()
    }
}

impl TestFunction {
    pub fn new(
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
        regularity: Regularity,
        kinks: Vec<f64>,
    ) -> Self {
        let mut kinks = kinks;
        kinks.sort_by(f64::total_cmp);
        kinks.dedup();
        TestFunction {
            eval: Arc::new(eval),
            deriv: Arc::new(deriv),
            regularity,
            kinks,
            label: "custom".into(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_regularity(mut self, regularity: Regularity) -> Self {
        self.regularity = regularity;
        self
    }

    pub fn constant(c: f64) -> Self {
        TestFunction::new(move |_| c, |_| 0.0, Regularity::C1, vec![]).with_label(format!("const({c})"))
    }

    /// `Σ c_k x^k`, coefficients in ascending order.
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        let d: Vec<f64> = coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| k as f64 * c)
            .collect();
        let label = format!("poly({coeffs:?})");
        let horner = |c: &[f64], x: f64| c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck);
        TestFunction::new(
            move |x| horner(&coeffs, x),
            move |x| horner(&d, x),
            Regularity::C1,
            vec![],
        )
        .with_label(label)
    }

    /// `ln |x − z|`; not absolutely continuous on any range touching `z`.
    pub fn log_distance(z: f64) -> Self {
        TestFunction::new(
            move |x| (x - z).abs().ln(),
            move |x| 1.0 / (x - z),
            Regularity::Local,
            vec![z],
        )
        .with_label(format!("log-dist({z})"))
    }

    /// `√|x − z|`.
    pub fn sqrt_distance(z: f64) -> Self {
        TestFunction::new(
            move |x| (x - z).abs().sqrt(),
            move |x| {
                let d = x - z;
                d.signum() * 0.5 / d.abs().sqrt()
            },
            Regularity::AC,
            vec![z],
        )
        .with_label(format!("sqrt-dist({z})"))
    }

    /// Piecewise-linear interpolant of samples; the derivative interpolates
    /// nonuniform central differences at the nodes (one-sided at the ends).
    pub fn from_grid(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::InvalidParameter(
                "grid function needs at least two (x, u) pairs of equal length".into(),
            ));
        }
        if xs.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::InvalidParameter(
                "grid abscissae must be strictly increasing".into(),
            ));
        }
        let n = xs.len();
        let mut ds = vec![0.0; n];
        ds[0] = (ys[1] - ys[0]) / (xs[1] - xs[0]);
        ds[n - 1] = (ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2]);
        for i in 1..n - 1 {
            let h1 = xs[i] - xs[i - 1];
            let h2 = xs[i + 1] - xs[i];
            ds[i] = (h1 * h1 * ys[i + 1] - h2 * h2 * ys[i - 1] + (h2 * h2 - h1 * h1) * ys[i])
                / (h1 * h2 * (h1 + h2));
        }
        let xs = Arc::new(xs);
        let (xe, xd) = (xs.clone(), xs.clone());
        let kinks = xs.to_vec();
        Ok(TestFunction::new(
            move |x| interp(&xe, &ys, x),
            move |x| interp(&xd, &ds, x),
            Regularity::Grid,
            kinks,
        )
        .with_label("grid"))
    }

    /// Function assembled from pieces on disjoint closed spans and `outside` elsewhere.
    /// A point shared by two spans belongs to the left one.
    pub fn piecewise(parts: Vec<(f64, f64, TestFunction)>, outside: f64, regularity: Regularity) -> Self {
        let mut parts = parts;
        parts.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut kinks: Vec<f64> = parts
            .iter()
            .flat_map(|(a, b, u)| {
                [*a, *b]
                    .into_iter()
                    .chain(u.kinks.iter().copied().filter(move |&k| k > *a && k < *b))
            })
            .collect();
        kinks.sort_by(f64::total_cmp);
        let parts = Arc::new(parts);
        let find = |parts: &[(f64, f64, TestFunction)], x: f64| -> Option<usize> {
            let k = parts.partition_point(|p| p.1 < x);
            parts.get(k).filter(|p| x >= p.0 && x <= p.1).map(|_| k)
        };
        let (pe, pd) = (parts.clone(), parts.clone());
        TestFunction::new(
            move |x| find(&pe, x).map_or(outside, |k| pe[k].2.eval(x)),
            move |x| find(&pd, x).map_or(0.0, |k| pd[k].2.deriv(x)),
            regularity,
            kinks,
        )
        .with_label("piecewise")
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn deriv(&self, x: f64) -> f64 {
        (self.deriv)(x)
    }

    pub fn regularity(&self) -> Regularity {
        self.regularity
    }

    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `|u(b) − u(a) − ∫_a^b u'|`, relative to `max(|u(b) − u(a)|, ∫_a^b |u'|)`.
    pub fn derivative_mismatch(&self, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<f64> {
        let pts = breaks_within(a, b, self.kinks.iter().copied());
        let du = |x: f64| self.deriv(x);
        let signed = integrate_with_breaks(&du, &pts, cfg)?;
        let total = integrate_with_breaks(&|x: f64| self.deriv(x).abs(), &pts, cfg)?;
        let (Some(s), Some(t)) = (signed.value(), total.value()) else {
            return Ok(f64::INFINITY);
        };
        let delta = self.eval(b) - self.eval(a);
        let scale = delta.abs().max(t);
        Ok(if scale == 0.0 { 0.0 } else { (delta - s).abs() / scale })
    }
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let k = xs.partition_point(|&t| t <= x).clamp(1, n - 1) - 1;
    let t = ((x - xs[k]) / (xs[k + 1] - xs[k])).clamp(0.0, 1.0);
    ys[k] + t * (ys[k + 1] - ys[k])
}

/// C¹ cubic Hermite spline on `[a, b]` with equally spaced knots.
#[derive(Debug, Clone)]
pub struct HermiteSpline {
    a: f64,
    b: f64,
    values: Vec<f64>,
    /// Slopes with respect to the normalized variable `t = (x − a)/(b − a)`.
    slopes: Vec<f64>,
}

impl HermiteSpline {
    pub fn new(a: f64, b: f64, values: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if values.len() != slopes.len() || values.len() < 2 || !(b > a) {
            return Err(Error::InvalidParameter(
                "spline needs at least two knots and a < b".into(),
            ));
        }
        Ok(HermiteSpline { a, b, values, slopes })
    }

    fn segments(&self) -> usize {
        self.values.len() - 1
    }

    fn locate(&self, x: f64) -> (usize, f64, f64) {
        let m = self.segments() as f64;
        let t = ((x - self.a) / (self.b - self.a)).clamp(0.0, 1.0) * m;
        let k = (t.floor() as usize).min(self.segments() - 1);
        (k, t - k as f64, 1.0 / m)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (k, s, h) = self.locate(x);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * m1
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let (k, s, h) = self.locate(x);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let s2 = s * s;
        let ds = (6.0 * s2 - 6.0 * s) * y0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * y1
            + (3.0 * s2 - 2.0 * s) * m1;
        ds / (h * (self.b - self.a))
    }

    pub fn knots(&self) -> Vec<f64> {
        let m = self.segments();
        (0..=m)
            .map(|k| self.a + (self.b - self.a) * k as f64 / m as f64)
            .collect()
    }

    pub fn into_test_function(self) -> TestFunction {
        let kinks = self.knots();
        let s = Arc::new(self);
        let (se, sd) = (s.clone(), s);
        TestFunction::new(move |x| se.eval(x), move |x| sd.deriv(x), Regularity::C1, kinks)
            .with_label("spline")
    }
}

/// Segments per interval of a random Dom_w function.
pub const RANDOM_SPLINE_SEGMENTS: usize = 4;

/// A random element of Dom_w: on each interval of `I` an independent C¹ cubic spline
/// with knot values and slopes uniform in `[−1, 1]`; zero off `I`.
pub fn random_dom_w(s: &DegeneracyStructure, rng: &mut impl Rng) -> Result<TestFunction> {
    let mut parts = Vec::with_capacity(s.intervals.len());
    for iv in &s.intervals {
        let values: Vec<f64> = (0..=RANDOM_SPLINE_SEGMENTS).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let slopes: Vec<f64> = (0..=RANDOM_SPLINE_SEGMENTS).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let spline = HermiteSpline::new(iv.a, iv.b, values, slopes)?;
        parts.push((iv.a, iv.b, spline.into_test_function()));
    }
    let single = s.intervals.len() == 1
        && s.intervals[0].a == s.domain.a
        && s.intervals[0].b == s.domain.b;
    let reg = if single { Regularity::C1 } else { Regularity::Local };
    Ok(TestFunction::piecewise(parts, 0.0, reg).with_label("random-spline"))
}

/// Seeded variant of [`random_dom_w`]; `stream` selects an independent sequence.
pub fn random_dom_w_seeded(s: &DegeneracyStructure, seed: u64, stream: u64) -> Result<TestFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    Ok(random_dom_w(s, &mut rng)?.with_label(format!("random-spline(seed={seed},stream={stream})")))
}

fn energy_density(u: &TestFunction, w: &Weight, p: f64, x: f64) -> f64 {
    let wx = w.value(x);
    if wx == 0.0 {
        return 0.0;
    }
    let d = u.deriv(x).abs();
    if d == 0.0 {
        0.0
    } else {
        d.powf(p) * wx
    }
}

fn interval_breaks(w: &Weight, u: &TestFunction, a: f64, b: f64, extra: &[f64]) -> Vec<f64> {
    breaks_within(
        a,
        b,
        w.kinks()
            .into_iter()
            .chain(w.singular_points())
            .chain(u.kinks.iter().copied())
            .chain(extra.iter().copied()),
    )
}

/// `∫_a^b |u'|^p w`.
pub fn energy_on(
    u: &TestFunction,
    w: &Weight,
    p: Exponent,
    a: f64,
    b: f64,
    cfg: &QuadratureConfig,
) -> Result<IntegralResult> {
    let pts = interval_breaks(w, u, a, b, &[0.5 * (a + b)]);
    integrate_with_breaks(&|x: f64| energy_density(u, w, p.p(), x), &pts, cfg)
}

/// `∫_I |u'|^p w`.
pub fn seminorm_f(
    u: &TestFunction,
    w: &Weight,
    s: &DegeneracyStructure,
    p: Exponent,
    cfg: &QuadratureConfig,
) -> Result<IntegralResult> {
    Ok(check_dom_w(u, w, s, p, cfg)?.seminorm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub in_dom_w: bool,
    pub seminorm: IntegralResult,
    pub per_interval: Vec<IntegralResult>,
}

/// Whether `∫_I |u'|^p w < ∞`, with the contribution of each interval.
pub fn check_dom_w(
    u: &TestFunction,
    w: &Weight,
    s: &DegeneracyStructure,
    p: Exponent,
    cfg: &QuadratureConfig,
) -> Result<MembershipReport> {
    let per_interval: Vec<IntegralResult> = s
        .intervals
        .iter()
        .map(|iv| energy_on(u, w, p, iv.a, iv.b, cfg))
        .collect::<Result<_>>()?;
    let seminorm = per_interval
        .iter()
        .fold(IntegralResult::Finite { value: 0.0, err: 0.0 }, |acc, r| acc.add(*r));
    Ok(MembershipReport {
        in_dom_w: seminorm.is_finite(),
        seminorm,
        per_interval,
    })
}

/// `∫_{a_i}^{b_i} g(x)·ŵ_p(x)^{p−1}` split at every break of interval `i`.
fn aux_weighted_integral(
    aux: &AuxWeight,
    i: usize,
    u: &TestFunction,
    g: impl Fn(f64) -> f64,
    cfg: &QuadratureConfig,
) -> Result<IntegralResult> {
    let iv = &aux.intervals()[i].interval;
    let mut pts = aux.breakpoints(i);
    pts.extend(u.kinks.iter().copied().filter(|&k| k > iv.a && k < iv.b));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let pm1 = aux.p().p() - 1.0;
    let f = |x: f64| {
        let gx = g(x);
        if gx == 0.0 {
            return 0.0;
        }
        let wh = aux.eval(x);
        if wh == 0.0 {
            0.0
        } else {
            gx * wh.powf(pm1)
        }
    };
    integrate_with_breaks(&f, &pts, cfg)
}

/// `(∫_Ω |u|^p ŵ_p^{p−1})^{1/p}`; infinite when the integral diverges.
pub fn lp_aux_norm(u: &TestFunction, aux: &AuxWeight, cfg: &QuadratureConfig) -> Result<Extended> {
    let p = aux.p().p();
    let mut total = 0.0;
    for i in 0..aux.intervals().len() {
        match aux_weighted_integral(aux, i, u, |x| u.eval(x).abs().powf(p), cfg)? {
            IntegralResult::Finite { value, .. } => total += value,
            IntegralResult::Divergent { .. } => return Ok(Extended::Infinite),
        }
    }
    Ok(Extended::Finite(total.max(0.0).powf(1.0 / p)))
}

/// `(‖u‖_X^p + ∫_I |u'|^p w)^{1/p}`; infinite when either part is.
pub fn w_norm(u: &TestFunction, aux: &AuxWeight, cfg: &QuadratureConfig) -> Result<Extended> {
    let p = aux.p().p();
    let Extended::Finite(x) = lp_aux_norm(u, aux, cfg)? else {
        return Ok(Extended::Infinite);
    };
    let semi = seminorm_f(u, aux.weight(), aux.structure(), aux.p(), cfg)?;
    Ok(match semi.value() {
        Some(v) => Extended::Finite((x.powf(p) + v).powf(1.0 / p)),
        None => Extended::Infinite,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointwiseReport {
    /// `|u(x) − u(η)|·ŵ(η)^{1/p'}`.
    pub lhs_difference: f64,
    /// `(∫ between η and x of |u'|^p w)^{1/p}`.
    pub rhs_difference: f64,
    /// `|u(η)|^p ŵ(η)^{p−1}`.
    pub lhs_value: f64,
    /// `2^{p−1}(|u(x)|^p ŵ(η)^{p−1} + ∫ from the interval end to x of |u'|^p w)`.
    pub rhs_value: f64,
    pub ok: bool,
}

/// Relative slack allowed in numerical inequality checks.
pub const INEQUALITY_SLACK: f64 = 1e-8;

fn le(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs * (1.0 + INEQUALITY_SLACK) + 1e-14
}

/// Pointwise double-weight inequalities between `η` and `x` on interval `i`.
///
/// Left side: `a_i < η ≤ x ≤ mid_i`. Right side: `mid_i ≤ x ≤ η < b_i`.
pub fn pointwise_poincare_check(
    u: &TestFunction,
    aux: &AuxWeight,
    i: usize,
    eta: f64,
    x: f64,
    side: Side,
    cfg: &QuadratureConfig,
) -> Result<PointwiseReport> {
    let ia = aux
        .intervals()
        .get(i)
        .ok_or_else(|| Error::InvalidParameter(format!("no interval with index {i}")))?;
    let iv = ia.interval;
    let ordered = match side {
        Side::Left => iv.a < eta && eta <= x && x <= iv.mid(),
        Side::Right => iv.mid() <= x && x <= eta && eta < iv.b,
    };
    if !ordered {
        return Err(Error::Precondition(format!(
            "points eta = {eta}, x = {x} violate the {side:?}-side ordering on ({}, {})",
            iv.a, iv.b
        )));
    }
    let p = aux.p();
    let w = aux.weight();
    let (lo, hi) = if eta <= x { (eta, x) } else { (x, eta) };
    let between = energy_on(u, w, p, lo, hi, cfg)?;
    let to_end = match side {
        Side::Left => energy_on(u, w, p, iv.a, x, cfg)?,
        Side::Right => energy_on(u, w, p, x, iv.b, cfg)?,
    };
    let (Some(between), Some(to_end)) = (between.value(), to_end.value()) else {
        return Err(Error::Precondition("u is not in Dom_w".into()));
    };
    let wh = aux.eval(eta);
    let pv = p.p();
    let lhs_difference = (u.eval(x) - u.eval(eta)).abs() * wh.powf(1.0 / p.conj());
    let rhs_difference = between.max(0.0).powf(1.0 / pv);
    let whp = wh.powf(pv - 1.0);
    let lhs_value = u.eval(eta).abs().powf(pv) * whp;
    let rhs_value = 2f64.powf(pv - 1.0) * (u.eval(x).abs().powf(pv) * whp + to_end);
    Ok(PointwiseReport {
        lhs_difference,
        rhs_difference,
        lhs_value,
        rhs_value,
        ok: le(lhs_difference, rhs_difference) && le(lhs_value, rhs_value),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareInterval {
    pub a: f64,
    pub b: f64,
    /// `(1/(b−a))·∫_a^b |u − u(mid)|^p ŵ^{p−1}`.
    pub lhs: f64,
    /// `∫_a^b |u'|^p w`.
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareReport {
    pub per_interval: Vec<PoincareInterval>,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, taken as 0 when both vanish.
    pub ratio: f64,
}

impl PoincareReport {
    pub fn holds(&self) -> bool {
        le(self.lhs, self.rhs)
    }
}

/// Both sides of the averaged Poincaré inequality on Dom_w.
pub fn poincare_global_check(
    u: &TestFunction,
    aux: &AuxWeight,
    cfg: &QuadratureConfig,
) -> Result<PoincareReport> {
    let membership = check_dom_w(u, aux.weight(), aux.structure(), aux.p(), cfg)?;
    if !membership.in_dom_w {
        return Err(Error::Precondition(format!("{} is not in Dom_w", u.label)));
    }
    let pv = aux.p().p();
    let mut per_interval = Vec::with_capacity(aux.intervals().len());
    for (i, ia) in aux.intervals().iter().enumerate() {
        let iv = ia.interval;
        let um = u.eval(iv.mid());
        let lhs_int = aux_weighted_integral(aux, i, u, |x| (u.eval(x) - um).abs().powf(pv), cfg)?;
        let lhs = lhs_int.value().ok_or_else(|| {
            Error::Invariant(format!("Poincaré left side diverges on ({}, {})", iv.a, iv.b))
        })? / iv.len();
        let rhs = membership.per_interval[i].value().unwrap_or(f64::INFINITY);
        per_interval.push(PoincareInterval {
            a: iv.a,
            b: iv.b,
            lhs,
            rhs,
        });
    }
    let lhs: f64 = per_interval.iter().map(|r| r.lhs).sum();
    let rhs = membership.seminorm.value().unwrap_or(f64::INFINITY);
    let ratio = if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    };
    Ok(PoincareReport {
        per_interval,
        lhs,
        rhs,
        ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishingReport {
    /// `(distance to the endpoint, |u|^p ŵ^{p−1})` pairs, nearest last.
    pub samples: Vec<(f64, f64)>,
    pub limit_estimate: f64,
    pub ok: bool,
}

/// Samples closer than this multiple of the float spacing at the endpoint are skipped.
const VANISHING_RESOLUTION: f64 = 1e3;
pub const VANISH_TOL: f64 = 1e-6;

/// Checks that `|u|^p ŵ^{p−1} → 0` at an endpoint where the transform is not integrable.
///
/// Samples at distances `2^{−k}(b_i − a_i)`, `k ≥ 4`, down to the float resolution at
/// the endpoint. The test passes when the last three samples fall below
/// `1e−6 × peak`, or, when `ŵ` vanishes at the endpoint, when the samples decay
/// at least like a positive power of `ŵ` over the last eight offsets.
pub fn endpoint_vanishing_check(
    u: &TestFunction,
    aux: &AuxWeight,
    i: usize,
    side: Side,
) -> Result<VanishingReport> {
    let ia = aux
        .intervals()
        .get(i)
        .ok_or_else(|| Error::InvalidParameter(format!("no interval with index {i}")))?;
    let iv = ia.interval;
    if iv.flag(side).flag == SideFlag::Integrable {
        return Err(Error::NotApplicable(format!(
            "transform is integrable at the {side:?} endpoint of interval {i}"
        )));
    }
    let z = iv.endpoint(side);
    let inward = -side.sign();
    let floor = VANISHING_RESOLUTION * f64::EPSILON * z.abs().max(1.0);
    let pv = aux.p().p();
    let mut samples = Vec::new();
    let mut aux_values = Vec::new();
    for k in 4.. {
        let d = iv.len() * (-(k as f64)).exp2();
        if d < floor {
            break;
        }
        let x = z + inward * d;
        let wh = aux.eval(x);
        samples.push((d, u.eval(x).abs().powf(pv) * wh.powf(pv - 1.0)));
        aux_values.push(wh);
    }
    let peak = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    let n = samples.len();
    let tail_small = n >= 3 && samples[n - 3..].iter().all(|s| s.1 < VANISH_TOL * peak);
    let power_decay = ia.endpoint_value(side) == 0.0 && n >= 8 && {
        let tail = &samples[n - 8..];
        let pts: Vec<(f64, f64)> = tail
            .iter()
            .zip(&aux_values[n - 8..])
            .filter(|(s, wh)| s.1 > 0.0 && **wh > 0.0)
            .map(|(s, wh)| (wh.ln(), s.1.ln()))
            .collect();
        let monotone = tail.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12));
        let slope_ok = if pts.len() == tail.len() {
            crate::weight::least_squares_slope(&pts).is_some_and(|s| s >= 0.1)
        } else {
            // exact zeros in the tail: only acceptable if the tail ends at zero
            tail.last().is_some_and(|s| s.1 == 0.0)
        };
        monotone && slope_ok
    };
    let all_zero = peak == 0.0 && n > 0;
    Ok(VanishingReport {
        limit_estimate: samples.last().map_or(0.0, |s| s.1),
        ok: all_zero || tail_small || power_decay,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcExtensionReport {
    /// `u(mid) ∓ ∫ u'` over the half interval.
    pub boundary_value: f64,
    /// `(∫_half |u'|^p w)^{1/p}·(∫_half w^{−1/(p−1)})^{1/p'}`.
    pub holder_bound: f64,
    /// `∫_half |u'|`.
    pub total_variation: f64,
    pub ok: bool,
}

/// Existence of the boundary limit of `u` at an endpoint where the transform is integrable.
pub fn ac_extension_check(
    u: &TestFunction,
    aux: &AuxWeight,
    i: usize,
    side: Side,
    cfg: &QuadratureConfig,
) -> Result<AcExtensionReport> {
    let ia = aux
        .intervals()
        .get(i)
        .ok_or_else(|| Error::InvalidParameter(format!("no interval with index {i}")))?;
    let iv = ia.interval;
    let flag = iv.flag(side);
    let Some(half) = flag.half_integral else {
        return Err(Error::NotApplicable(format!(
            "transform is not integrable at the {side:?} endpoint of interval {i}"
        )));
    };
    let (lo, hi) = match side {
        Side::Left => (iv.a, iv.mid()),
        Side::Right => (iv.mid(), iv.b),
    };
    let p = aux.p();
    let w = aux.weight();
    let semi = energy_on(u, w, p, lo, hi, cfg)?;
    let pts = interval_breaks(w, u, lo, hi, &[]);
    let signed = integrate_with_breaks(&|x: f64| u.deriv(x), &pts, cfg)?;
    let variation = integrate_with_breaks(&|x: f64| u.deriv(x).abs(), &pts, cfg)?;
    let holder_bound = semi
        .value()
        .map_or(f64::INFINITY, |s| s.max(0.0).powf(1.0 / p.p()) * half.powf(1.0 / p.conj()));
    let total_variation = variation.value().unwrap_or(f64::INFINITY);
    let integral = signed.value().unwrap_or(f64::NAN);
    let boundary_value = match side {
        Side::Left => u.eval(iv.mid()) - integral,
        Side::Right => u.eval(iv.mid()) + integral,
    };
    Ok(AcExtensionReport {
        boundary_value,
        holder_bound,
        total_variation,
        ok: holder_bound.is_finite()
            && boundary_value.is_finite()
            && le(total_variation, holder_bound),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryCase {
    pub weight: String,
    pub p: f64,
    pub index: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub cases: Vec<BatteryCase>,
    pub worst_ratio: f64,
}

impl BatteryReport {
    pub fn worst(&self) -> Option<&BatteryCase> {
        self.cases.iter().max_by(|a, b| a.ratio.total_cmp(&b.ratio))
    }
}

/// Global Poincaré check on `per_case` random Dom_w functions for every prepared
/// auxiliary weight. Case `j` of setting `k` uses stream `k·per_case + j` of `seed`.
pub fn poincare_battery(
    settings: &[&AuxWeight],
    per_case: usize,
    seed: u64,
    cfg: &QuadratureConfig,
) -> Result<BatteryReport> {
    let jobs: Vec<(usize, usize)> = (0..settings.len())
        .flat_map(|k| (0..per_case).map(move |j| (k, j)))
        .collect();
    let cases: Vec<BatteryCase> = jobs
        .par_iter()
        .map(|&(k, j)| {
            let aux = settings[k];
            let stream = (k * per_case + j) as u64;
            let u = random_dom_w_seeded(aux.structure(), seed, stream)?;
            let r = poincare_global_check(&u, aux, cfg)?;
            Ok(BatteryCase {
                weight: aux.weight().label().to_string(),
                p: aux.p().p(),
                index: j,
                lhs: r.lhs,
                rhs: r.rhs,
                ratio: r.ratio,
            })
        })
        .collect::<Result<_>>()?;
    let worst_ratio = cases.iter().map(|c| c.ratio).fold(0.0, f64::max);
    Ok(BatteryReport { cases, worst_ratio })
}

/// Whether `X` collapses to `{0}` (no interval carries an integrable transform).
pub fn x_is_trivial(s: &DegeneracyStructure) -> bool {
    s.n_w == DegeneracyCount::Zero
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auxweight::build_aux_weight;
    use crate::degeneracy::detect_structure;
    use crate::weight::builtins::*;
    use crate::weight::Interval;

    fn p(v: f64) -> Exponent {
        Exponent::new(v).unwrap()
    }

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    fn aux_for(w: &Weight, q: f64) -> AuxWeight {
        let s = detect_structure(w, p(q), &cfg()).unwrap();
        build_aux_weight(w, &s, p(q), &cfg()).unwrap()
    }

    fn unit() -> Weight {
        constant(Interval::new(0.0, 1.0).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn seminorm_examples() {
        let a = aux_for(&unit(), 2.0);
        let r = seminorm_f(&TestFunction::polynomial(vec![0.0, 1.0]), a.weight(), a.structure(), p(2.0), &cfg())
            .unwrap();
        assert!((r.value().unwrap() - 1.0).abs() < 1e-12);

        let lin = power(1.0).unwrap();
        let s = detect_structure(&lin, p(2.0), &cfg()).unwrap();
        let r = seminorm_f(&TestFunction::sqrt_distance(0.0), &lin, &s, p(2.0), &cfg()).unwrap();
        assert!((r.value().unwrap() - 0.25).abs() < 1e-9);

        let r = seminorm_f(&TestFunction::log_distance(0.0), a.weight(), a.structure(), p(2.0), &cfg())
            .unwrap();
        assert!(!r.is_finite());
    }

    #[test]
    fn lp_aux_norm_of_one() {
        let a = aux_for(&unit(), 2.0);
        let n = lp_aux_norm(&TestFunction::constant(1.0), &a, &cfg()).unwrap();
        let exact = (2.0 * 2f64.ln() + 1.0).sqrt();
        assert!((n.finite().unwrap() - exact).abs() < 1e-9);
        let z = lp_aux_norm(&TestFunction::constant(0.0), &a, &cfg()).unwrap();
        assert_eq!(z, Extended::Finite(0.0));
        let wn = w_norm(&TestFunction::constant(1.0), &a, &cfg()).unwrap();
        assert!((wn.finite().unwrap() - exact).abs() < 1e-9);
    }

    #[test]
    fn membership() {
        let a = aux_for(&figure1(), 2.0);
        let m = check_dom_w(&TestFunction::polynomial(vec![0.0, 1.0]), a.weight(), a.structure(), p(2.0), &cfg())
            .unwrap();
        assert!(m.in_dom_w);
        // ∫_{−2}^{2} (1 − x²)² dx
        assert!((m.seminorm.value().unwrap() - 92.0 / 15.0).abs() < 1e-8);
        let c = check_dom_w(&TestFunction::constant(3.0), a.weight(), a.structure(), p(2.0), &cfg()).unwrap();
        assert!(c.in_dom_w);
        assert_eq!(c.seminorm.value(), Some(0.0));
    }

    #[test]
    fn pointwise_equality_case() {
        let a = aux_for(&unit(), 2.0);
        let u = TestFunction::polynomial(vec![0.0, 1.0]);
        let r = pointwise_poincare_check(&u, &a, 0, 0.1, 0.5, Side::Left, &cfg()).unwrap();
        assert!((r.lhs_difference - 0.4 * 2.5f64.sqrt()).abs() < 1e-10);
        assert!((r.rhs_difference - 0.4f64.sqrt()).abs() < 1e-10);
        assert!(r.ok);
        assert!(matches!(
            pointwise_poincare_check(&u, &a, 0, 0.4, 0.2, Side::Left, &cfg()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn global_linear_case() {
        let a = aux_for(&unit(), 2.0);
        let r = poincare_global_check(&TestFunction::polynomial(vec![0.0, 1.0]), &a, &cfg()).unwrap();
        assert!((r.lhs - 5.0 / 24.0).abs() < 1e-9);
        assert!((r.rhs - 1.0).abs() < 1e-12);
        let c = poincare_global_check(&TestFunction::constant(2.0), &a, &cfg()).unwrap();
        assert_eq!(c.lhs, 0.0);
    }

    #[test]
    fn vanishing_at_figure1_zero() {
        for q in [2.0, 3.0] {
            let a = aux_for(&figure1(), q);
            for u in [TestFunction::polynomial(vec![0.0, 1.0]), TestFunction::constant(1.0)] {
                let r = endpoint_vanishing_check(&u, &a, 1, Side::Right).unwrap();
                assert!(r.ok, "p = {q}, {}", u.label());
            }
        }
    }

    #[test]
    fn vanishing_not_applicable_at_integrable_end() {
        let a = aux_for(&power(1.0).unwrap(), 3.0);
        assert!(matches!(
            endpoint_vanishing_check(&TestFunction::constant(1.0), &a, 0, Side::Left),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn ac_extension_sqrt() {
        let a = aux_for(&power(1.0).unwrap(), 3.0);
        let r = ac_extension_check(&TestFunction::sqrt_distance(0.0), &a, 0, Side::Left, &cfg()).unwrap();
        assert!(r.ok);
        assert!(r.boundary_value.abs() < 1e-8, "{}", r.boundary_value);
        let c = ac_extension_check(&TestFunction::constant(1.5), &a, 0, Side::Left, &cfg()).unwrap();
        assert_eq!(c.boundary_value, 1.5);
        let f = aux_for(&figure1(), 2.0);
        assert!(matches!(
            ac_extension_check(&TestFunction::constant(1.0), &f, 1, Side::Left, &cfg()),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn grid_function_derivative() {
        let xs: Vec<f64> = (0..=200).map(|k| (k as f64 / 200.0).powf(1.3)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let u = TestFunction::from_grid(xs, ys).unwrap();
        assert_eq!(u.regularity(), Regularity::Grid);
        for x in [0.1, 0.5, 0.9] {
            assert!((u.deriv(x) - x.cos()).abs() < 1e-3);
        }
        assert!(u.derivative_mismatch(0.0, 1.0, &cfg()).unwrap() < 1e-3);
    }

    #[test]
    fn spline_is_c1() {
        let s = HermiteSpline::new(0.0, 2.0, vec![0.0, 1.0, -1.0], vec![0.5, 0.0, 2.0]).unwrap();
        let eps = 1e-7;
        let knot = 1.0;
        assert!((s.eval(knot - eps) - s.eval(knot + eps)).abs() < 1e-6);
        assert!((s.deriv(knot - eps) - s.deriv(knot + eps)).abs() < 1e-5);
        let u = s.into_test_function();
        assert!(u.derivative_mismatch(0.0, 2.0, &cfg()).unwrap() < 1e-10);
    }

    #[test]
    fn zero_structure_collapses_x() {
        let w = constant(Interval::new(0.0, 1.0).unwrap(), 0.0).unwrap();
        let a = aux_for(&w, 2.0);
        assert!(x_is_trivial(a.structure()));
        let n = lp_aux_norm(&TestFunction::polynomial(vec![1.0, 2.0]), &a, &cfg()).unwrap();
        assert_eq!(n, Extended::Finite(0.0));
    }
}
