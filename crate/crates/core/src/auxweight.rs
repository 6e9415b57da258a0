//! The auxiliary weight `ŵ_p`.
//!
//! On each interval `(a_i, b_i)` with quarter points `q1`, `q3` and midpoint `mid`:
//!
//! * `ŵ_p(x) = 1 / ∫_x^{mid} w^{-1/(p-1)}` on `(a_i, q1)`,
//! * `ŵ_p(x) = 1 / ∫_{q1}^{q3} w^{-1/(p-1)}` on `[q1, q3]`,
//! * `ŵ_p(x) = 1 / ∫_{mid}^x w^{-1/(p-1)}` on `(q3, b_i)`,
//! * the limits `1 / ∫_{a_i}^{mid}` and `1 / ∫_{mid}^{b_i}` at the endpoints (zero when
//!   the half integral diverges),
//!
//! and `ŵ_p = 0` off the closure of `I`.
//!
//! Each outer branch keeps the cumulative integral at geometrically graded nodes;
//! an evaluation adds the integral from the nearest node, computed by Gauss–Legendre.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::degeneracy::{DegenerateInterval, DegeneracyStructure};
use crate::quadrature::{
    breaks_within, integrate, integrate_regular, integrate_with_breaks, IntegralResult,
    QuadratureConfig,
};
use crate::weight::{Exponent, Side, Weight};
use crate::{Error, Result};

/// Geometric nodes per halving of the distance to the endpoint.
const NODES_PER_OCTAVE: f64 = 12.0;
const MAX_GRADED_NODES: usize = 512;

const GL10_X: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL10_W: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_3,
    0.219_086_362_515_982_0,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

fn gauss_legendre10(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for k in 0..5 {
        s += GL10_W[k] * (f(c - h * GL10_X[k]) + f(c + h * GL10_X[k]));
    }
    s * h
}

/// Cumulative integrals of `w^{-1/(p-1)}` along one outer branch.
#[derive(Debug, Clone)]
pub struct BranchCache {
    side: Side,
    /// Interval endpoint the branch runs toward.
    endpoint: f64,
    /// `q1` for the left branch, `q3` for the right branch.
    anchor: f64,
    /// Integral between the midpoint and the anchor.
    base: f64,
    /// Nodes ordered from the anchor toward the endpoint.
    nodes: Vec<f64>,
    /// Integral between the anchor and each node.
    cum: Vec<f64>,
    /// Cells `(nodes[j], nodes[j+1])` touching a zero of `w`.
    singular: Vec<bool>,
    /// Whether the stretch beyond the last node touches a zero of `w` other than the endpoint.
    tail_singular: bool,
}

impl BranchCache {
    fn build(
        w: &Weight,
        p: Exponent,
        iv: &DegenerateInterval,
        side: Side,
        cfg: &QuadratureConfig,
    ) -> Result<Self> {
        let (endpoint, anchor) = match side {
            Side::Left => (iv.a, iv.q1()),
            Side::Right => (iv.b, iv.q3()),
        };
        let f = |x: f64| w.neg_power(x, p);
        let zeros = w.singular_points();
        let kinks = w.kinks();
        let (lo, hi) = if anchor < iv.mid() {
            (anchor, iv.mid())
        } else {
            (iv.mid(), anchor)
        };
        let base = finite(
            integrate_with_breaks(&f, &breaks_within(lo, hi, kinks.iter().chain(&zeros).copied()), cfg)?,
            lo,
            hi,
        )?;

        let span = (anchor - endpoint).abs();
        let resolution = 4.0 * f64::EPSILON * endpoint.abs().max(span);
        let dir = (anchor - endpoint).signum();
        let mut nodes: Vec<f64> = (0..MAX_GRADED_NODES)
            .map(|j| endpoint + dir * span * (-(j as f64) / NODES_PER_OCTAVE).exp2())
            .take_while(|&x| (x - endpoint).abs() >= resolution)
            .collect();
        let (rlo, rhi) = if endpoint < anchor { (endpoint, anchor) } else { (anchor, endpoint) };
        nodes.extend(
            kinks
                .iter()
                .chain(&zeros)
                .copied()
                .filter(|&x| x > rlo && x < rhi),
        );
        nodes.sort_by(|x, y| ((x - endpoint).abs()).total_cmp(&(y - endpoint).abs()).reverse());
        nodes.dedup();
        nodes.retain(|&x| x != endpoint);

        let is_zero = |x: f64| zeros.iter().any(|&z| z == x);
        let cells: Vec<(f64, f64, bool)> = nodes
            .windows(2)
            .map(|c| {
                let (l, h) = if c[0] < c[1] { (c[0], c[1]) } else { (c[1], c[0]) };
                (l, h, is_zero(c[0]) || is_zero(c[1]))
            })
            .collect();
        let pieces: Vec<f64> = cells
            .par_iter()
            .map(|&(l, h, sing)| {
                if sing {
                    return finite(integrate(&f, l, h, cfg)?, l, h);
                }
                // Next to an endpoint far from the origin, abscissae are too coarse for
                // the requested relative accuracy; the plain rule is then as good as it gets.
                // A regular cell is finite whatever its size; the cap only guards improper integrals.
                let cell_cfg = QuadratureConfig {
                    divergence_cap: f64::INFINITY,
                    ..*cfg
                };
                match integrate_regular(&f, l, h, &cell_cfg) {
                    Ok(r) => finite(r, l, h),
                    Err(Error::NotConverged { .. }) => Ok(gauss_legendre10(f, l, h)),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_>>()?;
        let mut cum = Vec::with_capacity(nodes.len());
        let mut acc = 0.0;
        cum.push(0.0);
        for v in &pieces {
            acc += v;
            cum.push(acc);
        }
        let tail_singular = nodes.last().is_some_and(|&x| is_zero(x));
        Ok(BranchCache {
            side,
            endpoint,
            anchor,
            base,
            singular: cells.iter().map(|c| c.2).collect(),
            nodes,
            cum,
            tail_singular,
        })
    }

    /// `∫` of the transform between `x` and the midpoint, for `x` strictly between the
    /// endpoint and the anchor.
    fn integral_to_mid(&self, w: &Weight, p: Exponent, x: f64, cfg: &QuadratureConfig) -> f64 {
        let f = |t: f64| w.neg_power(t, p);
        let dist = (x - self.endpoint).abs();
        // nodes are ordered by decreasing distance to the endpoint
        let j = self
            .nodes
            .partition_point(|&n| (n - self.endpoint).abs() > dist);
        if j == 0 {
            return self.base;
        }
        let node = self.nodes[j - 1];
        let (lo, hi) = if x < node { (x, node) } else { (node, x) };
        let singular = if j < self.nodes.len() {
            self.singular[j - 1]
        } else {
            self.tail_singular
        };
        let local = if j == self.nodes.len() || singular {
            match integrate(&f, lo, hi, cfg) {
                Ok(IntegralResult::Finite { value, .. }) => value,
                Ok(IntegralResult::Divergent { .. }) => f64::INFINITY,
                Err(_) => gauss_legendre10(f, lo, hi),
            }
        } else {
            gauss_legendre10(f, lo, hi)
        };
        self.base + self.cum[j - 1] + local
    }

    pub fn side(&self) -> Side {
        self.side
    }

    /// `q1` for the left branch, `q3` for the right branch.
    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

fn finite(r: IntegralResult, a: f64, b: f64) -> Result<f64> {
    match r {
        IntegralResult::Finite { value, .. } => Ok(value),
        IntegralResult::Divergent { .. } => Err(Error::Invariant(format!(
            "transform integral diverges on ({a}, {b}) inside a component of I"
        ))),
    }
}

/// Per-interval data of `ŵ_p`.
#[derive(Debug, Clone)]
pub struct IntervalAux {
    pub interval: DegenerateInterval,
    /// `(∫_{q1}^{q3} w^{-1/(p-1)})^{-1}`.
    pub plateau: f64,
    pub left_value: f64,
    pub right_value: f64,
    left: BranchCache,
    right: BranchCache,
}

impl IntervalAux {
    /// Value of the left branch formula at `q1` (the supremum of that branch).
    pub fn left_branch_limit(&self) -> f64 {
        1.0 / self.left.base
    }

    /// Value of the right branch formula at `q3`.
    pub fn right_branch_limit(&self) -> f64 {
        1.0 / self.right.base
    }

    pub fn endpoint_value(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.left_value,
            Side::Right => self.right_value,
        }
    }

    pub fn branch(&self, side: Side) -> &BranchCache {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }
}

/// Which formula defines `ŵ_p` at a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Gap,
    Endpoint,
    Left,
    Plateau,
    Right,
}

#[derive(Debug, Clone)]
pub struct AuxWeight {
    p: Exponent,
    weight: Weight,
    structure: DegeneracyStructure,
    intervals: Vec<IntervalAux>,
    cfg: QuadratureConfig,
}

/// Builds `ŵ_p` for the structure computed from the same weight and exponent.
pub fn build_aux_weight(
    w: &Weight,
    s: &DegeneracyStructure,
    p: Exponent,
    cfg: &QuadratureConfig,
) -> Result<AuxWeight> {
    cfg.validate()?;
    if s.p != p {
        return Err(Error::Precondition(format!(
            "structure computed for p = {} but ŵ requested for p = {p}",
            s.p
        )));
    }
    let f = |x: f64| w.neg_power(x, p);
    let zeros = w.singular_points();
    let kinks = w.kinks();
    let intervals = s
        .intervals
        .par_iter()
        .map(|iv| {
            let pts = breaks_within(iv.q1(), iv.q3(), kinks.iter().chain(&zeros).copied());
            let plateau_integral = finite(integrate_with_breaks(&f, &pts, cfg)?, iv.q1(), iv.q3())?;
            if !(plateau_integral > 0.0) {
                return Err(Error::Invariant(format!(
                    "plateau integral {plateau_integral} is not positive on ({}, {})",
                    iv.a, iv.b
                )));
            }
            let inv = |flag: crate::degeneracy::EndpointFlag| flag.half_integral.map_or(0.0, |v| 1.0 / v);
            Ok(IntervalAux {
                interval: *iv,
                plateau: 1.0 / plateau_integral,
                left_value: inv(iv.left),
                right_value: inv(iv.right),
                left: BranchCache::build(w, p, iv, Side::Left, cfg)?,
                right: BranchCache::build(w, p, iv, Side::Right, cfg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AuxWeight {
        p,
        weight: w.clone(),
        structure: s.clone(),
        intervals,
        cfg: *cfg,
    })
}

impl AuxWeight {
    pub fn p(&self) -> Exponent {
        self.p
    }

    pub fn weight(&self) -> &Weight {
        &self.weight
    }

    pub fn structure(&self) -> &DegeneracyStructure {
        &self.structure
    }

    pub fn intervals(&self) -> &[IntervalAux] {
        &self.intervals
    }

    pub fn config(&self) -> &QuadratureConfig {
        &self.cfg
    }

    /// Locates `x`: interval index (if any) and the branch in effect.
    pub fn locate(&self, x: f64) -> (Option<usize>, Branch) {
        let Some(i) = self.structure.closure_index(x) else {
            return (None, Branch::Gap);
        };
        let iv = &self.intervals[i].interval;
        let branch = if x == iv.a || x == iv.b {
            Branch::Endpoint
        } else if x < iv.q1() {
            Branch::Left
        } else if x <= iv.q3() {
            Branch::Plateau
        } else {
            Branch::Right
        };
        (Some(i), branch)
    }

    /// `ŵ_p(x)`. At a point shared by two touching intervals the left interval's
    /// endpoint value is used.
    pub fn eval(&self, x: f64) -> f64 {
        let (Some(i), branch) = self.locate(x) else {
            return 0.0;
        };
        let ia = &self.intervals[i];
        match branch {
            Branch::Gap => 0.0,
            Branch::Endpoint => {
                if x == ia.interval.a {
                    ia.left_value
                } else {
                    ia.right_value
                }
            }
            Branch::Plateau => ia.plateau,
            Branch::Left => 1.0 / ia.left.integral_to_mid(&self.weight, self.p, x, &self.cfg),
            Branch::Right => 1.0 / ia.right.integral_to_mid(&self.weight, self.p, x, &self.cfg),
        }
    }

    /// `w(x)^{-1/(p-1)}` for the underlying weight.
    pub fn transform(&self, x: f64) -> f64 {
        self.weight.neg_power(x, self.p)
    }

    /// Exact derivative of `ŵ_p` on the outer branches: `+ŵ²·w^{-1/(p-1)}` on the
    /// left branch and `−ŵ²·w^{-1/(p-1)}` on the right branch; zero elsewhere.
    pub fn derivative(&self, x: f64) -> f64 {
        match self.locate(x).1 {
            Branch::Left => self.eval(x).powi(2) * self.transform(x),
            Branch::Right => -self.eval(x).powi(2) * self.transform(x),
            _ => 0.0,
        }
    }

    /// Points at which integrands involving `ŵ_p` on interval `i` may be
    /// nonsmooth: the ends, quarter points, midpoint, kinks and zeros of `w`.
    pub fn breakpoints(&self, i: usize) -> Vec<f64> {
        let iv = &self.intervals[i].interval;
        let w = &self.weight;
        breaks_within(
            iv.a,
            iv.b,
            [iv.q1(), iv.mid(), iv.q3()]
                .into_iter()
                .chain(w.kinks())
                .chain(w.singular_points()),
        )
    }
}

/// `ŵ_p(x)`.
pub fn eval_aux(aux: &AuxWeight, x: f64) -> f64 {
    aux.eval(x)
}

/// Relative mismatch between a central difference of `ŵ_p` at `x` and the identity
/// `ŵ' = ±ŵ²·w^{-1/(p-1)}` (sign `+` on the left branch, `−` on the right one).
pub fn derivative_identity_residual(aux: &AuxWeight, x: f64) -> Result<f64> {
    let (i, branch) = aux.locate(x);
    let Some(i) = i else {
        return Err(Error::Branch { x });
    };
    let iv = &aux.intervals[i].interval;
    let dist = match branch {
        Branch::Left => (x - iv.a).min(iv.q1() - x),
        Branch::Right => (iv.b - x).min(x - iv.q3()),
        _ => return Err(Error::Branch { x }),
    };
    let h = 1e-4 * dist;
    let fd = (aux.eval(x + h) - aux.eval(x - h)) / (2.0 * h);
    let expected = aux.derivative(x);
    Ok((fd - expected).abs() / (expected.abs() + aux.cfg.abs_tol))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxBounds {
    pub sup: f64,
    /// Infimum over the whole domain; zero when `I` misses part of it or an endpoint
    /// value vanishes.
    pub inf: f64,
    pub per_interval_sup: Vec<f64>,
}

/// Suprema of `ŵ_p` per interval and overall, and its infimum over the domain.
pub fn aux_global_bounds(aux: &AuxWeight) -> AuxBounds {
    let per_interval_sup: Vec<f64> = aux
        .intervals
        .iter()
        .map(|ia| {
            let iv = &ia.interval;
            let mut sup = ia
                .plateau
                .max(ia.left_value)
                .max(ia.right_value)
                .max(ia.left_branch_limit())
                .max(ia.right_branch_limit());
            for k in 1..200 {
                let x = iv.a + iv.len() * k as f64 / 200.0;
                sup = sup.max(aux.eval(x));
            }
            for k in 4..40 {
                let d = 0.25 * iv.len() * (-(k as f64)).exp2();
                sup = sup.max(aux.eval(iv.q1() - d)).max(aux.eval(iv.q3() + d));
            }
            sup
        })
        .collect();
    let sup = per_interval_sup.iter().cloned().fold(0.0, f64::max);
    let covered = (aux.structure.measure() - aux.structure.domain.len()).abs()
        <= 1e-12 * aux.structure.domain.len();
    let inf = if !covered || aux.intervals.is_empty() {
        0.0
    } else {
        aux.intervals
            .iter()
            .map(|ia| ia.left_value.min(ia.right_value).min(ia.plateau))
            .fold(f64::INFINITY, f64::min)
    };
    AuxBounds {
        sup,
        inf,
        per_interval_sup,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degeneracy::detect_structure;
    use crate::weight::builtins::*;
    use crate::weight::Interval;

    fn p(v: f64) -> Exponent {
        Exponent::new(v).unwrap()
    }

    fn aux_for(w: &Weight, q: f64) -> AuxWeight {
        let cfg = QuadratureConfig::default();
        let s = detect_structure(w, p(q), &cfg).unwrap();
        build_aux_weight(w, &s, p(q), &cfg).unwrap()
    }

    fn unit() -> Weight {
        constant(Interval::new(0.0, 1.0).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn constant_weight_closed_form() {
        let a = aux_for(&unit(), 2.0);
        assert!((a.eval(0.0) - 2.0).abs() < 1e-12);
        assert!((a.eval(1.0) - 2.0).abs() < 1e-12);
        assert!((a.eval(0.5) - 2.0).abs() < 1e-12);
        assert!((a.eval(0.25) - 2.0).abs() < 1e-12);
        for x in [0.01, 0.1, 0.2, 0.2499] {
            assert!((a.eval(x) - 1.0 / (0.5 - x)).abs() < 1e-10, "{x}");
            let y = 1.0 - x;
            assert!((a.eval(y) - 1.0 / (y - 0.5)).abs() < 1e-10, "{y}");
        }
    }

    #[test]
    fn power_weight_endpoint_value() {
        let a = aux_for(&power(1.0).unwrap(), 3.0);
        assert!((a.eval(0.0) - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn figure1_zero_at_degenerate_points() {
        let a = aux_for(&figure1(), 2.0);
        assert_eq!(a.eval(1.0), 0.0);
        assert_eq!(a.eval(-1.0), 0.0);
        assert!(a.eval(0.999_999) > 0.0);
        assert!(a.eval(0.0) > 0.0);
    }

    #[test]
    fn derivative_identity_on_branches() {
        let a = aux_for(&unit(), 2.0);
        assert!(derivative_identity_residual(&a, 0.1).unwrap() <= 1e-6);
        assert!(derivative_identity_residual(&a, 0.9).unwrap() <= 1e-6);
        let a = aux_for(&power(1.0).unwrap(), 3.0);
        assert!(derivative_identity_residual(&a, 0.1).unwrap() <= 1e-4);
        let a = aux_for(&figure1(), 2.0);
        assert!(matches!(
            derivative_identity_residual(&a, 0.5),
            Err(Error::Branch { .. })
        ));
    }

    #[test]
    fn bounds_for_constant_weight() {
        let b = aux_global_bounds(&aux_for(&unit(), 2.0));
        assert!((b.sup - 4.0).abs() < 1e-10);
        assert!((b.inf - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gaps_are_zero() {
        let w = cascade(2.0, p(2.0), 4).unwrap();
        let a = aux_for(&w, 2.0);
        assert_eq!(a.eval(0.99), 0.0);
        assert_eq!(a.locate(0.99).1, Branch::Gap);
    }

    #[test]
    fn cascade_branch_formula() {
        let (alpha, q) = (2.0, 2.0);
        let w = cascade(alpha, p(q), 5).unwrap();
        let a = aux_for(&w, q);
        let ap = p(q).alpha_p(alpha);
        for (k, bump) in cascade_bumps(5).iter().enumerate() {
            let i = (k + 1) as f64;
            let mi = ((i + 1.0) * alpha).exp2();
            for t in [0.01, 0.1, 0.2] {
                let x = bump.a + t * bump.len();
                let d = x - bump.a;
                let expected = (ap - 1.0) * mi.powf(p(q).inv_pm1()) * d.powf(ap - 1.0)
                    / (1.0 - (2.0 * d / bump.len()).powf(ap - 1.0));
                let got = a.eval(x);
                assert!((got - expected).abs() <= 1e-9 * expected, "bump {i} t {t}");
            }
        }
    }
}
