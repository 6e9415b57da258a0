//! The energy `F`, its relaxation `F̄`, and explicit absolutely continuous
//! approximation sequences `ū_h → u`.
//!
//! `ū_h` is assembled interval by interval. A half interval ending at a free end
//! (domain side or gap) uses `ũ_h = u(mid) + ∫_mid^x v_h`, where `v_h` is `u'`
//! smoothed by a `(1 − t²)²` kernel of width `1/h` and cut off near the interval
//! ends. A half interval ending at a point shared with the next interval keeps `u`
//! and multiplies `u − c` by `(ŵ(x)/ŵ(b − 1/h))^{1/p}` on the last `1/h`, so that `ū_h`
//! reaches the seam value `c` continuously. Outside `I` the function is constant or
//! linear between neighbouring intervals.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auxweight::AuxWeight;
use crate::degeneracy::{DegeneracyCount, SideFlag};
use crate::function_space::{
    ac_extension_check, check_dom_w, energy_on, lp_aux_norm, Regularity, TestFunction,
};
use crate::quadrature::{
    breaks_within, integrate, integrate_regular, integrate_with_breaks, QuadratureConfig,
};
use crate::weight::{Exponent, Side, Weight};
use crate::{Error, Extended, Result};

/// `F̄(u)`: finite exactly on Dom_w.
pub type RelaxedValue = Extended;

/// `F(u) = ∫_a^b |u'|^p w` for globally absolutely continuous `u`, `+∞` otherwise.
pub fn original_functional(
    u: &TestFunction,
    w: &Weight,
    p: Exponent,
    cfg: &QuadratureConfig,
) -> Result<Extended> {
    if !u.regularity().is_globally_ac() {
        return Ok(Extended::Infinite);
    }
    let d = w.domain();
    Ok(match energy_on(u, w, p, d.a, d.b, cfg)?.value() {
        Some(v) => Extended::Finite(v),
        None => Extended::Infinite,
    })
}

/// `F̄(u) = ∫_I |u'|^p w` on Dom_w and `+∞` elsewhere. When `I` is empty the space
/// reduces to `{0}` and `F̄ ≡ 0`.
pub fn relaxed_functional(
    u: &TestFunction,
    w: &Weight,
    s: &crate::degeneracy::DegeneracyStructure,
    p: Exponent,
    cfg: &QuadratureConfig,
) -> Result<RelaxedValue> {
    if s.n_w == DegeneracyCount::Zero {
        return Ok(Extended::Finite(0.0));
    }
    let m = check_dom_w(u, w, s, p, cfg)?;
    Ok(match m.seminorm.value() {
        Some(v) => Extended::Finite(v),
        None => Extended::Infinite,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstructionCase {
    /// One interval; `ū_h` is constant outside it.
    Single,
    /// `b_i < a_{i+1}`; linear bridge across the gap.
    Gap,
    /// `b_i = a_{i+1}`; tapers toward the shared point.
    Touching,
}

/// Kernel cells per mollifier width.
const CELLS_PER_WIDTH: f64 = 32.0;
/// Extra nodes placed inside each cutoff ramp.
const RAMP_NODES: usize = 16;

/// `v_h` on one half interval, piecewise linear on a fine grid.
#[derive(Debug, Clone)]
struct MollifiedHalf {
    nodes: Vec<f64>,
    v: Vec<f64>,
    /// `∫_mid^{node} v_h` (signed).
    cum: Vec<f64>,
}

impl MollifiedHalf {
    fn cell(&self, x: f64) -> usize {
        let n = self.nodes.len();
        self.nodes.partition_point(|&t| t <= x).clamp(1, n - 1) - 1
    }

    fn slope(&self, x: f64) -> f64 {
        let k = self.cell(x);
        let (x0, x1) = (self.nodes[k], self.nodes[k + 1]);
        let t = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
        self.v[k] + t * (self.v[k + 1] - self.v[k])
    }

    /// `∫_mid^x v_h`.
    fn primitive(&self, x: f64) -> f64 {
        let k = self.cell(x);
        let x0 = self.nodes[k];
        let dx = x.clamp(self.nodes[0], *self.nodes.last().unwrap()) - x0;
        let s = (self.v[k + 1] - self.v[k]) / (self.nodes[k + 1] - x0);
        self.cum[k] + dx * (self.v[k] + 0.5 * s * dx)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Taper {
    /// Which end of the interval the taper touches.
    pub side: Side,
    pub lo: f64,
    pub hi: f64,
    /// `ŵ` at the inner end of the taper (`b − 1/h` or `a + 1/h`).
    pub anchor_aux: f64,
    /// Value of `ū_h` at the shared point.
    pub seam_value: f64,
}

#[derive(Debug, Clone)]
enum HalfMode {
    Mollified(MollifiedHalf),
    Original(Option<Taper>),
}

#[derive(Debug, Clone)]
struct IntervalPlan {
    index: usize,
    a: f64,
    b: f64,
    mid: f64,
    u_mid: f64,
    /// Cutoff distance `δ` of the mollified derivative.
    delta: f64,
    left: HalfMode,
    right: HalfMode,
}

/// One member `ū_h` of an approximation sequence.
#[derive(Debug, Clone)]
pub struct ApproxMember {
    pub h: u32,
    plans: Vec<IntervalPlan>,
    u: TestFunction,
    aux: Arc<AuxWeight>,
}

fn ramp(x: f64, a: f64, b: f64, delta: f64) -> f64 {
    let d = (x - a).min(b - x);
    ((d - delta) / delta).clamp(0.0, 1.0)
}

/// `∫_{-1}^{s} (1 − t²)² dt`.
fn kernel_mass(s: f64) -> f64 {
    let s = s.clamp(-1.0, 1.0);
    let prim = |t: f64| t - 2.0 * t.powi(3) / 3.0 + t.powi(5) / 5.0;
    prim(s) - prim(-1.0)
}

fn integrate_smooth<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, cfg: &QuadratureConfig) -> Result<f64> {
    if hi <= lo {
        return Ok(0.0);
    }
    let r = match integrate_regular(f, lo, hi, cfg) {
        Ok(r) => r,
        Err(Error::NotConverged { .. }) => integrate(f, lo, hi, cfg)?,
        Err(e) => return Err(e),
    };
    r.value().ok_or_else(|| Error::Invariant(format!("integral diverges on ({lo}, {hi})")))
}

fn mollify_half(
    u: &TestFunction,
    w: &Weight,
    a: f64,
    b: f64,
    side: Side,
    h: f64,
    delta: f64,
    cfg: &QuadratureConfig,
) -> Result<MollifiedHalf> {
    let mid = 0.5 * (a + b);
    let eps = 1.0 / h;
    let (lo, hi) = match side {
        Side::Left => (a, mid),
        Side::Right => (mid, b),
    };
    let cells = ((hi - lo) * h * CELLS_PER_WIDTH).ceil().max(1.0) as usize;
    let mut nodes: Vec<f64> = (0..=cells)
        .map(|k| lo + (hi - lo) * k as f64 / cells as f64)
        .collect();
    let end = match side {
        Side::Left => a,
        Side::Right => b,
    };
    let inward = -side.sign();
    for k in 0..=RAMP_NODES {
        nodes.push(end + inward * delta * (1.0 + k as f64 / RAMP_NODES as f64));
    }
    nodes.extend(w.kinks().into_iter().filter(|&x| x > lo && x < hi));
    nodes.retain(|&x| x >= lo && x <= hi);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();

    // The convolution only sees u' on [a + δ/2, b − δ/2], where it is locally integrable.
    let (ca, cb) = (a + 0.5 * delta, b - 0.5 * delta);
    let v: Vec<f64> = nodes
        .par_iter()
        .map(|&x| {
            let r = ramp(x, a, b, delta);
            if r == 0.0 {
                return Ok(0.0);
            }
            let (s0, s1) = ((x - 0.5 * eps).max(ca), (x + 0.5 * eps).min(cb));
            let t = |y: f64| 2.0 * (y - x) / eps;
            let mass = 0.5 * eps * (kernel_mass(t(s1)) - kernel_mass(t(s0)));
            let kern = |y: f64| {
                let s = t(y);
                let k = (1.0 - s * s).max(0.0);
                k * k * u.deriv(y)
            };
            let pts = breaks_within(s0, s1, u.kinks().iter().copied());
            let mut num = 0.0;
            for seg in pts.windows(2) {
                num += integrate_smooth(&kern, seg[0], seg[1], cfg)?;
            }
            Ok(r * num / mass)
        })
        .collect::<Result<_>>()?;

    let mut cum = vec![0.0; nodes.len()];
    let m = match side {
        Side::Left => nodes.len() - 1,
        Side::Right => 0,
    };
    for k in m + 1..nodes.len() {
        cum[k] = cum[k - 1] + 0.5 * (v[k] + v[k - 1]) * (nodes[k] - nodes[k - 1]);
    }
    for k in (0..m).rev() {
        cum[k] = cum[k + 1] - 0.5 * (v[k] + v[k + 1]) * (nodes[k + 1] - nodes[k]);
    }
    Ok(MollifiedHalf { nodes, v, cum })
}

impl ApproxMember {
    fn plan_at(&self, x: f64) -> Option<&IntervalPlan> {
        let k = self.plans.partition_point(|p| p.b <= x);
        match self.plans.get(k) {
            Some(p) if x >= p.a => Some(p),
            _ => self.plans.last().filter(|p| x == p.b),
        }
    }

    /// `ŵ` seen from interval `plan`, using that interval's own endpoint values.
    fn aux_in(&self, plan: &IntervalPlan, x: f64) -> f64 {
        let ia = &self.aux.intervals()[plan.index];
        if x <= plan.a {
            ia.left_value
        } else if x >= plan.b {
            ia.right_value
        } else {
            self.aux.eval(x)
        }
    }

    fn taper_factor(&self, plan: &IntervalPlan, t: &Taper, x: f64) -> f64 {
        let wh = self.aux_in(plan, x);
        (wh / t.anchor_aux).max(0.0).powf(1.0 / self.aux.p().p())
    }

    fn end_value(&self, plan: &IntervalPlan, side: Side) -> f64 {
        let x = match side {
            Side::Left => plan.a,
            Side::Right => plan.b,
        };
        self.eval_in(plan, x, side)
    }

    fn eval_in(&self, plan: &IntervalPlan, x: f64, side: Side) -> f64 {
        let mode = match side {
            Side::Left => &plan.left,
            Side::Right => &plan.right,
        };
        match mode {
            HalfMode::Mollified(m) => plan.u_mid + m.primitive(x),
            HalfMode::Original(None) => self.u.eval(x),
            HalfMode::Original(Some(t)) if x >= t.lo && x <= t.hi => {
                let r = self.taper_factor(plan, t, x);
                if r == 0.0 {
                    t.seam_value
                } else {
                    t.seam_value + (self.u.eval(x) - t.seam_value) * r
                }
            }
            HalfMode::Original(Some(_)) => self.u.eval(x),
        }
    }

    fn deriv_in(&self, plan: &IntervalPlan, x: f64, side: Side) -> f64 {
        let mode = match side {
            Side::Left => &plan.left,
            Side::Right => &plan.right,
        };
        match mode {
            HalfMode::Mollified(m) => m.slope(x),
            HalfMode::Original(Some(t)) if x >= t.lo && x <= t.hi => {
                let r = self.taper_factor(plan, t, x);
                if r == 0.0 {
                    return 0.0;
                }
                // (ŵ^{1/p})'/ŵ^{1/p} = (1/p)·ŵ'/ŵ = ±(1/p)·ŵ·w^{-1/(p-1)}
                let wh = self.aux_in(plan, x);
                let sign = -t.side.sign();
                let log_deriv = sign * wh * self.aux.transform(x) / self.aux.p().p();
                r * self.u.deriv(x) + (self.u.eval(x) - t.seam_value) * r * log_deriv
            }
            HalfMode::Original(_) => self.u.deriv(x),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let first = &self.plans[0];
        let last = self.plans.last().unwrap();
        if x < first.a {
            return self.end_value(first, Side::Left);
        }
        if x > last.b {
            return self.end_value(last, Side::Right);
        }
        match self.plan_at(x) {
            Some(plan) => {
                let side = if x < plan.mid { Side::Left } else { Side::Right };
                self.eval_in(plan, x, side)
            }
            None => {
                let (l, r) = self.gap_around(x);
                let (y0, y1) = (self.end_value(l, Side::Right), self.end_value(r, Side::Left));
                y0 + (y1 - y0) * (x - l.b) / (r.a - l.b)
            }
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let first = &self.plans[0];
        let last = self.plans.last().unwrap();
        if x < first.a || x > last.b {
            return 0.0;
        }
        match self.plan_at(x) {
            Some(plan) => {
                let side = if x < plan.mid { Side::Left } else { Side::Right };
                self.deriv_in(plan, x, side)
            }
            None => {
                let (l, r) = self.gap_around(x);
                (self.end_value(r, Side::Left) - self.end_value(l, Side::Right)) / (r.a - l.b)
            }
        }
    }

    fn gap_around(&self, x: f64) -> (&IntervalPlan, &IntervalPlan) {
        let k = self.plans.partition_point(|p| p.b <= x);
        (&self.plans[k - 1], &self.plans[k])
    }

    /// Tapers in use, with the interval index they belong to.
    pub fn tapers(&self) -> Vec<(usize, Taper)> {
        self.plans
            .iter()
            .flat_map(|p| {
                [&p.left, &p.right].into_iter().filter_map(move |m| match m {
                    HalfMode::Original(Some(t)) => Some((p.index, *t)),
                    _ => None,
                })
            })
            .collect()
    }

    /// Largest difference between the one-sided values of `ū_h` at the points where
    /// its pieces meet: interval midpoints, inner taper ends and shared endpoints.
    pub fn seam_mismatch(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut note = |l: f64, r: f64| worst = worst.max((l - r).abs());
        for plan in &self.plans {
            note(
                self.eval_in(plan, plan.mid, Side::Left),
                self.eval_in(plan, plan.mid, Side::Right),
            );
            for (mode, side) in [(&plan.left, Side::Left), (&plan.right, Side::Right)] {
                if let HalfMode::Original(Some(t)) = mode {
                    let inner = if side == Side::Left { t.hi } else { t.lo };
                    note(self.eval_in(plan, inner, side), self.u.eval(inner));
                }
            }
        }
        for pair in self.plans.windows(2) {
            let (l, r) = (&pair[0], &pair[1]);
            if l.b == r.a {
                note(self.eval_in(l, l.b, Side::Right), self.eval_in(r, r.a, Side::Left));
            }
        }
        worst
    }

    /// `ū_h` as a globally absolutely continuous test function.
    pub fn to_test_function(&self) -> TestFunction {
        let me = Arc::new(self.clone());
        let (m1, m2) = (me.clone(), me.clone());
        let mut kinks: Vec<f64> = Vec::new();
        for p in &me.plans {
            kinks.extend([p.a, p.mid, p.b]);
            for t in me.tapers().iter().filter(|t| t.0 == p.index) {
                kinks.extend([t.1.lo, t.1.hi]);
            }
        }
        kinks.extend(me.u.kinks().iter().copied());
        TestFunction::new(
            move |x| m1.eval(x),
            move |x| m2.deriv(x),
            Regularity::AC,
            kinks,
        )
        .with_label(format!("approx(h={})", me.h))
    }

    /// Samples `(x, ū_h(x), u(x))` on a uniform grid of the domain.
    pub fn profile(&self, points: usize) -> Vec<(f64, f64, f64)> {
        let d = self.aux.weight().domain();
        let n = points.max(2);
        (0..n)
            .map(|k| {
                let x = d.a + d.len() * k as f64 / (n - 1) as f64;
                (x, self.eval(x), self.u.eval(x))
            })
            .collect()
    }

    /// `F(ū_h) = ∫_a^b |ū_h'|^p w`, accumulated region by region.
    pub fn energy(&self, cfg: &QuadratureConfig) -> Result<f64> {
        let w = self.aux.weight();
        let p = self.aux.p();
        let pv = p.p();
        let mut total = 0.0;
        for plan in &self.plans {
            for side in [Side::Left, Side::Right] {
                let (lo, hi) = match side {
                    Side::Left => (plan.a, plan.mid),
                    Side::Right => (plan.mid, plan.b),
                };
                let mode = match side {
                    Side::Left => &plan.left,
                    Side::Right => &plan.right,
                };
                match mode {
                    HalfMode::Mollified(m) => {
                        let f = |x: f64| {
                            let s = m.slope(x).abs();
                            if s == 0.0 {
                                0.0
                            } else {
                                s.powf(pv) * w.value(x)
                            }
                        };
                        let parts: Vec<f64> = m
                            .nodes
                            .par_windows(2)
                            .map(|c| integrate_smooth(&f, c[0], c[1], cfg))
                            .collect::<Result<_>>()?;
                        total += parts.iter().sum::<f64>();
                    }
                    HalfMode::Original(taper) => {
                        let (ulo, uhi) = match taper {
                            Some(t) if side == Side::Left => (t.hi, hi),
                            Some(t) => (lo, t.lo),
                            None => (lo, hi),
                        };
                        total += energy_on(&self.u, w, p, ulo, uhi, cfg)?
                            .value()
                            .ok_or_else(|| Error::Precondition("u is not in Dom_w".into()))?;
                        if let Some(t) = taper {
                            total += self.taper_energy(plan, t, cfg)?;
                        }
                    }
                }
            }
        }
        for pair in self.plans.windows(2) {
            let (l, r) = (&pair[0], &pair[1]);
            if r.a > l.b {
                let slope =
                    (self.end_value(r, Side::Left) - self.end_value(l, Side::Right)) / (r.a - l.b);
                if slope != 0.0 {
                    let pts = breaks_within(l.b, r.a, w.kinks());
                    let mass = integrate_with_breaks(&|x: f64| w.value(x), &pts, cfg)?
                        .value()
                        .unwrap_or(f64::INFINITY);
                    total += slope.abs().powf(pv) * mass;
                }
            }
        }
        Ok(total)
    }

    fn taper_energy(&self, plan: &IntervalPlan, t: &Taper, cfg: &QuadratureConfig) -> Result<f64> {
        let w = self.aux.weight();
        let pv = self.aux.p().p();
        let f = |x: f64| {
            let wx = w.value(x);
            if wx == 0.0 {
                return 0.0;
            }
            let d = self.deriv_in(plan, x, t.side).abs();
            if d == 0.0 {
                0.0
            } else {
                d.powf(pv) * wx
            }
        };
        let pts = breaks_within(
            t.lo,
            t.hi,
            w.kinks().into_iter().chain(self.u.kinks().iter().copied()),
        );
        integrate_with_breaks(&f, &pts, cfg)?
            .value()
            .ok_or_else(|| Error::Invariant("taper energy diverges".into()))
    }

    /// `‖ū_h − u‖` in `L^p(ŵ^{p−1})`.
    pub fn x_error(&self, cfg: &QuadratureConfig) -> Result<f64> {
        let pv = self.aux.p().p();
        let mut total = 0.0;
        for plan in &self.plans {
            for side in [Side::Left, Side::Right] {
                let (lo, hi) = match side {
                    Side::Left => (plan.a, plan.mid),
                    Side::Right => (plan.mid, plan.b),
                };
                let mode = match side {
                    Side::Left => &plan.left,
                    Side::Right => &plan.right,
                };
                let (rlo, rhi) = match mode {
                    HalfMode::Mollified(_) => (lo, hi),
                    HalfMode::Original(Some(t)) => (t.lo, t.hi),
                    HalfMode::Original(None) => continue,
                };
                let f = |x: f64| {
                    let diff = (self.eval_in(plan, x, side) - self.u.eval(x)).abs();
                    let wh = self.aux_in(plan, x);
                    if diff == 0.0 || wh == 0.0 {
                        0.0
                    } else {
                        diff.powf(pv) * wh.powf(pv - 1.0)
                    }
                };
                let iv = &self.aux.intervals()[plan.index].interval;
                let end = match side {
                    Side::Left => plan.a,
                    Side::Right => plan.b,
                };
                let inward = -side.sign();
                let extra = [
                    iv.q1(),
                    iv.q3(),
                    end + inward * plan.delta,
                    end + inward * 2.0 * plan.delta,
                ];
                let pts = breaks_within(
                    rlo,
                    rhi,
                    self.aux
                        .weight()
                        .kinks()
                        .into_iter()
                        .chain(self.u.kinks().iter().copied())
                        .chain(extra),
                );
                total += integrate_with_breaks(&f, &pts, cfg)?
                    .value()
                    .ok_or_else(|| Error::Invariant("approximation error diverges".into()))?;
            }
        }
        Ok(total.max(0.0).powf(1.0 / pv))
    }

    /// Energy of every taper next to its bound `2^{p−1}(∫_taper |u'|^p w + C_p/p^p)`,
    /// `C_p = sup_taper |u − c|^p ŵ^{p−1}`.
    pub fn taper_energy_bounds(&self, cfg: &QuadratureConfig) -> Result<Vec<TaperBound>> {
        let pv = self.aux.p().p();
        let mut out = Vec::new();
        for plan in &self.plans {
            for mode in [&plan.left, &plan.right] {
                let HalfMode::Original(Some(t)) = mode else {
                    continue;
                };
                let energy = self.taper_energy(plan, t, cfg)?;
                let u_energy = energy_on(&self.u, self.aux.weight(), self.aux.p(), t.lo, t.hi, cfg)?
                    .value()
                    .unwrap_or(f64::INFINITY);
                let end = match t.side {
                    Side::Left => plan.a,
                    Side::Right => plan.b,
                };
                let len = t.hi - t.lo;
                let inward = -t.side.sign();
                let mut c_p: f64 = 0.0;
                let mut probe = |x: f64| {
                    let wh = self.aux_in(plan, x);
                    let v = (self.u.eval(x) - t.seam_value).abs().powf(pv) * wh.powf(pv - 1.0);
                    if v.is_finite() {
                        c_p = c_p.max(v);
                    }
                };
                for k in 0..=256 {
                    probe(t.lo + len * k as f64 / 256.0);
                }
                for k in 1..50 {
                    probe(end + inward * len * (-(k as f64)).exp2());
                }
                let bound = 2f64.powf(pv - 1.0) * (u_energy + c_p / pv.powf(pv));
                out.push(TaperBound {
                    interval: plan.index,
                    side: t.side,
                    energy,
                    bound,
                });
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaperBound {
    pub interval: usize,
    pub side: Side,
    pub energy: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxDiagnostics {
    pub h: u32,
    /// `‖ū_h − u‖_{L^p(ŵ^{p−1})}`.
    pub x_err: f64,
    /// `F(ū_h)`.
    pub energy: f64,
    /// `|F(ū_h) − F̄(u)|`.
    pub f_gap: f64,
}

#[derive(Debug, Clone)]
pub struct ApproxSequence {
    pub members: Vec<ApproxMember>,
    pub diagnostics: Vec<ApproxDiagnostics>,
    /// Construction used between consecutive intervals (`Single` for one interval).
    pub cases: Vec<ConstructionCase>,
    pub relaxed: f64,
    /// `‖u‖_{L^p(ŵ^{p−1})}`.
    pub u_norm: f64,
}

/// Smallest power of two `h` with `1/h < min_i (b_i − a_i)/4`.
pub fn min_h(aux: &AuxWeight) -> u32 {
    let min_len = aux
        .intervals()
        .iter()
        .map(|ia| ia.interval.len())
        .fold(f64::INFINITY, f64::min);
    let mut h = 1u32;
    while !(1.0 / (h as f64) < min_len / 4.0) {
        h = h.saturating_mul(2);
        if h == u32::MAX {
            break;
        }
    }
    h
}

/// Builds `ū_h` for `h = h_min, 2h_min, …, h_max` and their diagnostics.
pub fn build_approx_sequence(
    u: &TestFunction,
    aux: &AuxWeight,
    h_max: u32,
    cfg: &QuadratureConfig,
) -> Result<ApproxSequence> {
    let s = aux.structure();
    match s.n_w {
        DegeneracyCount::InfiniteTruncated(_) => {
            return Err(Error::Unsupported(
                "approximation sequences need a finitely degenerate weight".into(),
            ))
        }
        DegeneracyCount::Zero => {
            return Err(Error::Precondition(
                "no intervals: the approximation space is trivial".into(),
            ))
        }
        DegeneracyCount::Finite(_) => {}
    }
    let h_min = min_h(aux);
    if h_max < h_min {
        return Err(Error::Precondition(format!(
            "h_max = {h_max} is below the smallest admissible h = {h_min}"
        )));
    }
    let membership = check_dom_w(u, aux.weight(), s, aux.p(), cfg)?;
    let relaxed = membership
        .seminorm
        .value()
        .ok_or_else(|| Error::Precondition(format!("{} is not in Dom_w", u.label())))?;
    let u_norm = lp_aux_norm(u, aux, cfg)?
        .finite()
        .ok_or_else(|| Error::Precondition(format!("{} is not in L^p(ŵ^(p-1))", u.label())))?;

    let mut hs = vec![h_min];
    while let Some(&last) = hs.last() {
        match last.checked_mul(2) {
            Some(next) if next <= h_max => hs.push(next),
            _ => break,
        }
    }

    let cases = if s.intervals.len() == 1 {
        vec![ConstructionCase::Single]
    } else {
        s.intervals
            .windows(2)
            .map(|p| {
                if p[0].b < p[1].a {
                    ConstructionCase::Gap
                } else {
                    ConstructionCase::Touching
                }
            })
            .collect()
    };

    // Seam values: zero between two non-integrable sides, otherwise the trace of u
    // from the integrable side.
    let seams: Vec<Option<f64>> = (0..s.intervals.len().saturating_sub(1))
        .map(|i| {
            if cases.get(i) != Some(&ConstructionCase::Touching) {
                return Ok(None);
            }
            let (l, r) = (&s.intervals[i], &s.intervals[i + 1]);
            Ok(Some(if l.right.flag == SideFlag::Integrable {
                ac_extension_check(u, aux, i, Side::Right, cfg)?.boundary_value
            } else if r.left.flag == SideFlag::Integrable {
                ac_extension_check(u, aux, i + 1, Side::Left, cfg)?.boundary_value
            } else {
                0.0
            }))
        })
        .collect::<Result<_>>()?;

    let aux_arc = Arc::new(aux.clone());
    let members: Vec<ApproxMember> = hs
        .iter()
        .map(|&h| build_member(u, &aux_arc, &seams, h, cfg))
        .collect::<Result<_>>()?;
    let diagnostics: Vec<ApproxDiagnostics> = members
        .par_iter()
        .map(|m| {
            let energy = m.energy(cfg)?;
            Ok(ApproxDiagnostics {
                h: m.h,
                x_err: m.x_error(cfg)?,
                energy,
                f_gap: (energy - relaxed).abs(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(ApproxSequence {
        members,
        diagnostics,
        cases,
        relaxed,
        u_norm,
    })
}

fn build_member(
    u: &TestFunction,
    aux: &Arc<AuxWeight>,
    seams: &[Option<f64>],
    h: u32,
    cfg: &QuadratureConfig,
) -> Result<ApproxMember> {
    let hf = h as f64;
    let delta = 0.25 / (hf * hf);
    let s = aux.structure();
    let n = s.intervals.len();
    let mut plans = Vec::with_capacity(n);
    for (i, iv) in s.intervals.iter().enumerate() {
        let touching_left = i > 0 && seams[i - 1].is_some();
        let touching_right = i + 1 < n && seams[i].is_some();
        let half = |side: Side, touching: bool| -> Result<HalfMode> {
            if !touching {
                return Ok(HalfMode::Mollified(mollify_half(
                    u,
                    aux.weight(),
                    iv.a,
                    iv.b,
                    side,
                    hf,
                    delta,
                    cfg,
                )?));
            }
            if iv.flag(side).flag == SideFlag::Integrable {
                return Ok(HalfMode::Original(None));
            }
            let seam = match side {
                Side::Left => seams[i - 1],
                Side::Right => seams[i],
            }
            .expect("touching side has a seam value");
            let (lo, hi, inner) = match side {
                Side::Left => (iv.a, iv.a + 1.0 / hf, iv.a + 1.0 / hf),
                Side::Right => (iv.b - 1.0 / hf, iv.b, iv.b - 1.0 / hf),
            };
            let anchor_aux = aux.eval(inner);
            if !(anchor_aux > 0.0) {
                return Err(Error::Invariant(format!(
                    "auxiliary weight vanishes at {inner} inside ({}, {})",
                    iv.a, iv.b
                )));
            }
            Ok(HalfMode::Original(Some(Taper {
                side,
                lo,
                hi,
                anchor_aux,
                seam_value: seam,
            })))
        };
        let left = half(Side::Left, touching_left)?;
        let right = half(Side::Right, touching_right)?;
        plans.push(IntervalPlan {
            index: i,
            a: iv.a,
            b: iv.b,
            mid: iv.mid(),
            u_mid: u.eval(iv.mid()),
            delta,
            left,
            right,
        });
    }
    Ok(ApproxMember {
        h,
        plans,
        u: u.clone(),
        aux: aux.clone(),
    })
}

/// Thresholds for [`verify_relaxation`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxationCriteria {
    /// Required reduction of `x_err` and `f_gap` from the first to the last `h`.
    pub decay_fraction: f64,
    /// Final `f_gap / F̄(u)`.
    pub final_gap_ratio: f64,
    /// Values below this (relative to `1 + scale`) count as converged.
    pub floor: f64,
}

impl Default for RelaxationCriteria {
    fn default() -> Self {
        RelaxationCriteria {
            decay_fraction: 0.5,
            final_gap_ratio: 0.01,
            floor: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationReport {
    pub rows: Vec<ApproxDiagnostics>,
    pub relaxed: f64,
    pub u_norm: f64,
    pub final_x_ratio: f64,
    pub final_gap_ratio: f64,
    pub x_decays: bool,
    pub gap_decays: bool,
    pub passes: bool,
}

/// Checks that `x_err` and `f_gap` shrink along the sequence and that the final gap
/// is small relative to `F̄(u)`.
pub fn verify_relaxation(seq: &ApproxSequence, criteria: &RelaxationCriteria) -> RelaxationReport {
    let rows = seq.diagnostics.clone();
    let first = rows.first().copied();
    let last = rows.last().copied();
    let x_floor = criteria.floor * (1.0 + seq.u_norm);
    let f_floor = criteria.floor * (1.0 + seq.relaxed);
    let decays = |a: f64, b: f64, floor: f64| b <= floor || b <= criteria.decay_fraction * a;
    let (x_decays, gap_decays) = match (first, last) {
        (Some(f), Some(l)) => (
            decays(f.x_err, l.x_err, x_floor),
            decays(f.f_gap, l.f_gap, f_floor),
        ),
        _ => (false, false),
    };
    let ratio = |v: f64, scale: f64, floor: f64| {
        if v <= floor {
            0.0
        } else if scale > 0.0 {
            v / scale
        } else {
            f64::INFINITY
        }
    };
    let final_gap_ratio = last.map_or(f64::INFINITY, |l| ratio(l.f_gap, seq.relaxed, f_floor));
    let final_x_ratio = last.map_or(f64::INFINITY, |l| ratio(l.x_err, seq.u_norm, x_floor));
    RelaxationReport {
        passes: x_decays && gap_decays && final_gap_ratio <= criteria.final_gap_ratio,
        rows,
        relaxed: seq.relaxed,
        u_norm: seq.u_norm,
        final_x_ratio,
        final_gap_ratio,
        x_decays,
        gap_decays,
    }
}
