//! Adaptive Gauss–Kronrod quadrature with graded meshes toward possibly singular
//! endpoints, and a convergent/divergent verdict for improper integrals.
//!
//! Every half of an integration range is covered by geometric panels
//! `[z + L r^{k+1}, z + L r^k]` shrinking toward the endpoint `z`. Panel sums are
//! tracked level by level. A geometric tail estimate closes the sum once two
//! consecutive ratio estimates agree, while persistently non-decaying panel
//! contributions mark the integral as divergent.

use serde::{Deserialize, Serialize};

use crate::weight::{Exponent, Side, Weight, WeightForm};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub divergence_cap: f64,
    pub max_refinement_depth: usize,
    pub geometric_ratio: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-13,
            divergence_cap: 1e12,
            max_refinement_depth: 60,
            geometric_ratio: 0.5,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(self.rel_tol) && positive(self.abs_tol) && positive(self.divergence_cap)) {
            return Err(Error::InvalidParameter(
                "quadrature tolerances and divergence cap must be positive and finite".into(),
            ));
        }
        if self.max_refinement_depth == 0 {
            return Err(Error::InvalidParameter(
                "max_refinement_depth must be positive".into(),
            ));
        }
        if !(self.geometric_ratio > 0.0 && self.geometric_ratio < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "geometric_ratio must lie in (0, 1), got {}",
                self.geometric_ratio
            )));
        }
        Ok(())
    }

    fn tol(&self, value: f64) -> f64 {
        self.rel_tol * value.abs() + self.abs_tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntegralResult {
    Finite { value: f64, err: f64 },
    Divergent { partial: f64 },
}

impl IntegralResult {
    pub fn is_finite(&self) -> bool {
        matches!(self, IntegralResult::Finite { .. })
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            IntegralResult::Finite { value, .. } => Some(*value),
            IntegralResult::Divergent { .. } => None,
        }
    }

    pub fn err(&self) -> f64 {
        match self {
            IntegralResult::Finite { err, .. } => *err,
            IntegralResult::Divergent { .. } => f64::INFINITY,
        }
    }

    /// Sum of two results; divergent if either is.
    pub fn add(self, other: IntegralResult) -> IntegralResult {
        match (self, other) {
            (
                IntegralResult::Finite { value: v1, err: e1 },
                IntegralResult::Finite { value: v2, err: e2 },
            ) => IntegralResult::Finite {
                value: v1 + v2,
                err: e1 + e2,
            },
            (IntegralResult::Divergent { partial }, o) | (o, IntegralResult::Divergent { partial }) => {
                let rest = match o {
                    IntegralResult::Finite { value, .. } => value,
                    IntegralResult::Divergent { partial } => partial,
                };
                IntegralResult::Divergent {
                    partial: partial + rest,
                }
            }
        }
    }
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Why a panel could not be integrated.
enum PanelFault {
    Nan(f64),
    Infinite,
}

impl PanelFault {
    fn into_error(self) -> Error {
        match self {
            PanelFault::Nan(x) => Error::NanIntegrand { x },
            PanelFault::Infinite => unreachable!("infinite values are reported as divergence"),
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

fn sample<F: Fn(f64) -> f64 + ?Sized>(f: &F, x: f64) -> std::result::Result<f64, PanelFault> {
    let v = f(x);
    if v.is_nan() {
        Err(PanelFault::Nan(x))
    } else if v.is_infinite() {
        Err(PanelFault::Infinite)
    } else {
        Ok(v)
    }
}

/// One 15-point Kronrod rule with the QUADPACK error estimate.
fn gk15<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> std::result::Result<Segment, PanelFault> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = sample(f, c)?;
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = sample(f, c - dx)?;
        let f2 = sample(f, c + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * h;
    res_abs *= h.abs();
    res_asc *= h.abs();
    let mut err = ((res_k - res_g) * h).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok(Segment { a, b, value, err })
}

const MAX_SEGMENTS: usize = 200;

/// Globally adaptive bisection on a regular panel, largest error first.
fn adaptive_gk<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    rel: f64,
    abs: f64,
) -> std::result::Result<(f64, f64), PanelFault> {
    let first = gk15(f, a, b)?;
    let mut total = first.value;
    let mut total_err = first.err;
    let mut segs = vec![first];
    while total_err > abs.max(rel * total.abs()) && segs.len() < MAX_SEGMENTS {
        let (idx, _) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .expect("nonempty");
        let s = segs.swap_remove(idx);
        let m = 0.5 * (s.a + s.b);
        if !(m > s.a && m < s.b) {
            segs.push(s);
            break;
        }
        let l = gk15(f, s.a, m)?;
        let r = gk15(f, m, s.b)?;
        total += l.value + r.value - s.value;
        total_err += l.err + r.err - s.err;
        segs.push(l);
        segs.push(r);
    }
    // Recompute from scratch to avoid drift in the running sums.
    let value = segs.iter().map(|s| s.value).sum();
    let err = segs.iter().map(|s| s.err).sum();
    Ok((value, err))
}

/// Adaptive quadrature for an integrand that is bounded and piecewise smooth on
/// `[a, b]` (no grading toward the endpoints).
pub fn integrate_regular<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    cfg: &QuadratureConfig,
) -> Result<IntegralResult> {
    check_range(a, b)?;
    if a == b {
        return Ok(IntegralResult::Finite { value: 0.0, err: 0.0 });
    }
    match adaptive_gk(f, a, b, cfg.rel_tol, cfg.abs_tol) {
        Ok((value, err)) => {
            if value.abs() > cfg.divergence_cap {
                Ok(IntegralResult::Divergent { partial: value })
            } else if err > cfg.tol(value) {
                Err(Error::NotConverged { a, b, err })
            } else {
                Ok(IntegralResult::Finite { value, err })
            }
        }
        Err(PanelFault::Infinite) => Ok(IntegralResult::Divergent { partial: f64::INFINITY }),
        Err(e) => Err(e.into_error()),
    }
}

fn check_range(a: f64, b: f64) -> Result<()> {
    if !(a.is_finite() && b.is_finite()) || a > b {
        return Err(Error::InvalidParameter(format!(
            "integration range must be finite with a <= b, got ({a}, {b})"
        )));
    }
    Ok(())
}

/// Consecutive non-decreasing panel levels that mark divergence.
const NON_DECAY_LEVELS: usize = 10;
/// Levels computed before the tail extrapolation may close the sum.
const MIN_LEVELS: usize = 4;

/// Improper integral of `f` between `z` and `far`, graded toward `z`.
///
/// `far` must be a regular point of `f`; only `z` may be singular.
pub fn integrate_toward<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    z: f64,
    far: f64,
    cfg: &QuadratureConfig,
) -> Result<IntegralResult> {
    if !(z.is_finite() && far.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "integration endpoints must be finite, got {z} and {far}"
        )));
    }
    if z == far {
        return Ok(IntegralResult::Finite { value: 0.0, err: 0.0 });
    }
    let len = far - z;
    let r = cfg.geometric_ratio;
    let resolution = 4.0 * f64::EPSILON * z.abs();
    let panel_rel = 0.1 * cfg.rel_tol;
    let panel_abs = 0.01 * cfg.abs_tol;

    let mut sum = 0.0;
    let mut err = 0.0;
    let mut contribs: Vec<f64> = Vec::new();
    let mut ratios: Vec<f64> = Vec::new();
    let mut zero_run = 0;
    let mut non_decreasing = 0;
    let mut outer = 1.0f64;

    for k in 0..cfg.max_refinement_depth {
        let inner = outer * r;
        let (x_out, x_in) = (z + len * outer, z + len * inner);
        outer = inner;
        if (x_in - z).abs() < resolution || x_in == x_out {
            break;
        }
        let (lo, hi) = if x_in < x_out { (x_in, x_out) } else { (x_out, x_in) };
        let (c, e) = match adaptive_gk(f, lo, hi, panel_rel, panel_abs) {
            Ok(v) => v,
            Err(PanelFault::Infinite) => {
                return Ok(IntegralResult::Divergent { partial: f64::INFINITY })
            }
            Err(fault) => return Err(fault.into_error()),
        };
        let c = c * len.signum();
        sum += c;
        err += e;
        if sum.abs() > cfg.divergence_cap {
            return Ok(IntegralResult::Divergent { partial: sum });
        }

        if c == 0.0 {
            zero_run += 1;
            if zero_run >= 3 {
                return finish(sum, err, z, far, cfg);
            }
        } else {
            zero_run = 0;
        }

        if let Some(&prev) = contribs.last() {
            if c != 0.0 && c.abs() >= prev.abs() && c.signum() == prev.signum() {
                non_decreasing += 1;
            } else {
                non_decreasing = 0;
            }
            if non_decreasing >= NON_DECAY_LEVELS {
                return Ok(IntegralResult::Divergent { partial: sum });
            }
            ratios.push(if prev != 0.0 && c.signum() == prev.signum() {
                (c / prev).abs()
            } else {
                f64::NAN
            });
        }
        contribs.push(c);

        if k + 1 < MIN_LEVELS {
            continue;
        }
        let prev = contribs[contribs.len() - 2];
        if c.abs() + prev.abs() <= 0.01 * cfg.tol(sum) {
            return finish(sum, err + c.abs(), z, far, cfg);
        }
        let n = ratios.len();
        let (rho, rho_prev) = (ratios[n - 1], ratios[n - 2]);
        if rho < 0.999 && rho_prev < 0.999 {
            let tail = c * rho / (1.0 - rho);
            let tail_prev = c * rho_prev / (1.0 - rho_prev);
            let uncertainty = (tail - tail_prev).abs();
            if uncertainty + err <= cfg.tol(sum + tail) {
                return finish(sum + tail, err + uncertainty, z, far, cfg);
            }
        }
    }

    // Depth or float resolution exhausted before the tail settled.
    let n = contribs.len();
    if n > NON_DECAY_LEVELS {
        let last = contribs[n - 1].abs();
        let earlier = contribs[n - 1 - NON_DECAY_LEVELS].abs();
        if last >= 0.5 * earlier {
            return Ok(IntegralResult::Divergent { partial: sum });
        }
    }
    if let Some(&last) = contribs.last() {
        // The unresolved remainder is below the last panel at float resolution.
        if last.abs() + err <= cfg.tol(sum) {
            return finish(sum, err + last.abs(), z, far, cfg);
        }
    }
    Err(Error::NotConverged {
        a: z.min(far),
        b: z.max(far),
        err: err + contribs.last().map_or(0.0, |c| c.abs()),
    })
}

fn finish(value: f64, err: f64, z: f64, far: f64, cfg: &QuadratureConfig) -> Result<IntegralResult> {
    if value.abs() > cfg.divergence_cap {
        return Ok(IntegralResult::Divergent { partial: value });
    }
    if err > cfg.tol(value) {
        return Err(Error::NotConverged {
            a: z.min(far),
            b: z.max(far),
            err,
        });
    }
    Ok(IntegralResult::Finite { value, err })
}

/// `∫_a^b f` with both endpoints treated as potentially singular.
pub fn integrate<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    cfg: &QuadratureConfig,
) -> Result<IntegralResult> {
    check_range(a, b)?;
    if a == b {
        return Ok(IntegralResult::Finite { value: 0.0, err: 0.0 });
    }
    let m = 0.5 * (a + b);
    let left = integrate_toward(f, a, m, cfg)?;
    let right = integrate_toward(f, b, m, cfg)?;
    // integrate_toward(b, m) integrates from b down to m, hence the sign flip.
    let right = match right {
        IntegralResult::Finite { value, err } => IntegralResult::Finite { value: -value, err },
        IntegralResult::Divergent { partial } => IntegralResult::Divergent { partial: -partial },
    };
    Ok(left.add(right))
}

/// `∫ f` over `[points[0], points[last]]`, split at every listed point, each piece
/// graded toward both of its ends.
pub fn integrate_with_breaks<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    points: &[f64],
    cfg: &QuadratureConfig,
) -> Result<IntegralResult> {
    let mut total = IntegralResult::Finite { value: 0.0, err: 0.0 };
    for w in points.windows(2) {
        if w[1] > w[0] {
            total = total.add(integrate(f, w[0], w[1], cfg)?);
        } else if w[1] < w[0] {
            return Err(Error::InvalidParameter(
                "break points must be nondecreasing".into(),
            ));
        }
    }
    if let IntegralResult::Finite { value, .. } = total {
        if value.abs() > cfg.divergence_cap {
            return Ok(IntegralResult::Divergent { partial: value });
        }
    }
    Ok(total)
}

/// Sorted break list: the two ends plus every interior point strictly between them.
pub fn breaks_within(a: f64, b: f64, interior: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut pts = vec![a, b];
    pts.extend(interior.into_iter().filter(|&x| x > a && x < b));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Integrability {
    Integrable(f64),
    NonIntegrable,
}

impl Integrability {
    pub fn is_integrable(&self) -> bool {
        matches!(self, Integrability::Integrable(_))
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Integrability::Integrable(v) => Some(*v),
            Integrability::NonIntegrable => None,
        }
    }
}

/// Band around `α/(p−1) = 1` in which grid-based classification is refused.
pub const INDETERMINATE_BAND: f64 = 0.02;

/// Integrability of `w^{-1/(p-1)}` on the range between `z` and `reach`.
///
/// `side` is the side of `z` on which the range lies, so `reach` must be greater
/// than `z` for [`Side::Right`] and smaller for [`Side::Left`].
pub fn classify_endpoint_integrability(
    w: &Weight,
    p: Exponent,
    z: f64,
    side: Side,
    reach: f64,
    cfg: &QuadratureConfig,
) -> Result<Integrability> {
    check_side(z, side, reach)?;
    let (lo, hi) = if z < reach { (z, reach) } else { (reach, z) };
    match w.form() {
        WeightForm::PiecewisePower(_) => {
            let v = w
                .transform_integral_exact(p, lo, hi)
                .expect("piecewise power weights have exact integrals");
            Ok(if v.is_finite() && v <= cfg.divergence_cap {
                Integrability::Integrable(v)
            } else {
                Integrability::NonIntegrable
            })
        }
        WeightForm::GridSampled(g) => {
            if let Some(k) = g.xs().iter().position(|&x| x == z) {
                if g.is_zero_node(k) {
                    let alpha = g.node_exponent(k, side)?;
                    let ratio = p.alpha_p(alpha);
                    if (ratio - 1.0).abs() < INDETERMINATE_BAND {
                        return Err(Error::Indeterminate { z, ratio });
                    }
                    if ratio >= 1.0 {
                        return Ok(Integrability::NonIntegrable);
                    }
                }
            }
            classify_numeric(w, p, z, reach, cfg)
        }
        WeightForm::ClosedForm(_) => classify_numeric(w, p, z, reach, cfg),
    }
}

/// Purely numerical classification, ignoring any closed form the weight carries.
pub fn classify_endpoint_numeric(
    w: &Weight,
    p: Exponent,
    z: f64,
    side: Side,
    reach: f64,
    cfg: &QuadratureConfig,
) -> Result<Integrability> {
    check_side(z, side, reach)?;
    classify_numeric(w, p, z, reach, cfg)
}

fn check_side(z: f64, side: Side, reach: f64) -> Result<()> {
    let ok = match side {
        Side::Right => reach > z,
        Side::Left => reach < z,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "reach {reach} is not on the {side:?} side of {z}"
        )))
    }
}

fn classify_numeric(
    w: &Weight,
    p: Exponent,
    z: f64,
    reach: f64,
    cfg: &QuadratureConfig,
) -> Result<Integrability> {
    let f = |x: f64| w.neg_power(x, p);
    let (lo, hi) = if z < reach { (z, reach) } else { (reach, z) };
    // Interior kinks are regular points for the transform; the singular end is z.
    let mut pts: Vec<f64> = w.kinks().into_iter().filter(|&x| x > lo && x < hi).collect();
    pts.sort_by(f64::total_cmp);
    let mut total = IntegralResult::Finite { value: 0.0, err: 0.0 };
    let mut nodes = vec![lo];
    nodes.extend(pts);
    nodes.push(hi);
    for pair in nodes.windows(2) {
        let piece = if pair[0] == z {
            integrate_toward(&f, pair[0], pair[1], cfg)?
        } else if pair[1] == z {
            flip(integrate_toward(&f, pair[1], pair[0], cfg)?)
        } else {
            integrate(&f, pair[0], pair[1], cfg)?
        };
        total = total.add(piece);
        if !total.is_finite() {
            return Ok(Integrability::NonIntegrable);
        }
    }
    Ok(match total {
        IntegralResult::Finite { value, .. } if value <= cfg.divergence_cap => {
            Integrability::Integrable(value)
        }
        _ => Integrability::NonIntegrable,
    })
}

fn flip(r: IntegralResult) -> IntegralResult {
    match r {
        IntegralResult::Finite { value, err } => IntegralResult::Finite { value: -value, err },
        IntegralResult::Divergent { partial } => IntegralResult::Divergent { partial: -partial },
    }
}

/// Least-squares slope of `log w(x)` against `log |x − z|` at offsets
/// `2^{−k}·h₀`, `k = 4..=20`, on the given side of the zero `z`.
pub fn local_exponent_estimate(w: &Weight, z: f64, side: Side) -> Result<f64> {
    if let WeightForm::GridSampled(g) = w.form() {
        if let Some(k) = g.xs().iter().position(|&x| x == z) {
            return g.node_exponent(k, side);
        }
    }
    let dom = w.domain();
    let edge = match side {
        Side::Right => dom.b - z,
        Side::Left => z - dom.a,
    };
    let nearest_feature = w
        .kinks()
        .into_iter()
        .chain(w.singular_points())
        .map(|x| (x - z) * side.sign())
        .filter(|&d| d > 0.0)
        .fold(f64::INFINITY, f64::min);
    let h0 = 1f64.min(edge).min(0.5 * nearest_feature);
    if !(h0 > 0.0) {
        return Err(Error::Estimation {
            z,
            reason: format!("no room on the {side:?} side inside the domain"),
        });
    }
    let tol = w.zero_tol();
    let pts: Vec<(f64, f64)> = (4..=20)
        .filter_map(|k| {
            let d = h0 * (-(k as f64)).exp2();
            let v = w.value(z + side.sign() * d);
            (v > tol && v.is_finite()).then(|| (d.ln(), v.ln()))
        })
        .collect();
    crate::weight::least_squares_slope(&pts).ok_or_else(|| Error::Estimation {
        z,
        reason: format!("only {} positive samples near the zero", pts.len()),
    })
}
