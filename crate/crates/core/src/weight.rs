//! Weights `w ≥ 0` on a bounded interval and the transform `w^{-1/(p-1)}`.
//!
//! Three representations are supported:
//!
//! * [`WeightForm::PiecewisePower`]: pieces `m·(x − z)^α` or `m·(z − x)^α` tiling the
//!   domain. Local exponents are exact and every integral of `w^{-1/(p-1)}` has a
//!   closed form.
//! * [`WeightForm::GridSampled`]: nonnegative samples on a strictly increasing grid.
//! * [`WeightForm::ClosedForm`]: an arbitrary closure plus its declared zeros.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Bounded open interval `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(Error::InvalidParameter(format!(
                "interval endpoints must be finite with a < b, got ({a}, {b})"
            )));
        }
        Ok(Interval { a, b })
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.a + self.b)
    }

    /// Membership in the closure `[a, b]`.
    pub fn contains(&self, x: f64) -> bool {
        x >= self.a && x <= self.b
    }
}

/// Exponent `p ∈ (1, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Exponent(f64);

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if !(p.is_finite() && p > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "exponent p must satisfy 1 < p < inf, got {p}"
            )));
        }
        Ok(Exponent(p))
    }

    pub fn p(self) -> f64 {
        self.0
    }

    /// Conjugate exponent `p' = p/(p−1)`.
    pub fn conj(self) -> f64 {
        self.0 / (self.0 - 1.0)
    }

    /// `1/(p−1)`, the power applied to `w` in the transform.
    pub fn inv_pm1(self) -> f64 {
        1.0 / (self.0 - 1.0)
    }

    /// `α_p = α/(p−1)`.
    pub fn alpha_p(self, alpha: f64) -> f64 {
        alpha / (self.0 - 1.0)
    }
}

impl TryFrom<f64> for Exponent {
    type Error = Error;

    fn try_from(p: f64) -> Result<Self> {
        Exponent::new(p)
    }
}

impl From<Exponent> for f64 {
    fn from(p: Exponent) -> f64 {
        p.0
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

/// Which way a power piece grows away from its center.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `m·(x − center)^α`, center at or left of the piece.
    Right,
    /// `m·(center − x)^α`, center at or right of the piece.
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerPiece {
    pub span: Interval,
    pub coeff: f64,
    pub center: f64,
    pub exponent: f64,
    pub orientation: Orientation,
}

impl PowerPiece {
    pub fn new(
        span: Interval,
        coeff: f64,
        center: f64,
        exponent: f64,
        orientation: Orientation,
    ) -> Result<Self> {
        if !(coeff.is_finite() && coeff >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "piece coefficient must be finite and nonnegative, got {coeff}"
            )));
        }
        if !exponent.is_finite() || exponent <= -1.0 {
            return Err(Error::InvalidParameter(format!(
                "piece exponent must be > -1 for local integrability, got {exponent}"
            )));
        }
        let ok = match orientation {
            Orientation::Right => center <= span.a,
            Orientation::Left => center >= span.b,
        };
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "center {center} lies inside piece ({}, {})",
                span.a, span.b
            )));
        }
        Ok(PowerPiece {
            span,
            coeff,
            center,
            exponent,
            orientation,
        })
    }

    /// A piece on which `w ≡ 0`.
    pub fn zero(span: Interval) -> Self {
        PowerPiece {
            span,
            coeff: 0.0,
            center: span.a,
            exponent: 0.0,
            orientation: Orientation::Right,
        }
    }

    fn dist(&self, x: f64) -> f64 {
        match self.orientation {
            Orientation::Right => (x - self.center).max(0.0),
            Orientation::Left => (self.center - x).max(0.0),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.coeff == 0.0 {
            return 0.0;
        }
        if self.exponent == 0.0 {
            return self.coeff;
        }
        self.coeff * self.dist(x).powf(self.exponent)
    }

    /// `w(x)^{-1/(p-1)}` evaluated in log space.
    fn neg_power(&self, x: f64, p: Exponent) -> f64 {
        if self.coeff == 0.0 {
            return f64::INFINITY;
        }
        if self.exponent == 0.0 {
            return self.coeff.powf(-p.inv_pm1());
        }
        let d = self.dist(x);
        if d == 0.0 {
            return if self.exponent > 0.0 { f64::INFINITY } else { 0.0 };
        }
        (-(self.coeff.ln() + self.exponent * d.ln()) * p.inv_pm1()).exp()
    }

    /// Whether the piece vanishes at `t` (identically zero, or its center with α > 0).
    pub fn vanishes_at(&self, t: f64) -> bool {
        self.coeff == 0.0 || (self.exponent > 0.0 && self.center == t)
    }

    /// Closed-form `∫_lo^hi w^{-1/(p-1)}` over a subrange of the piece (may be `+∞`).
    fn transform_integral(&self, lo: f64, hi: f64, p: Exponent) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        if self.coeff == 0.0 {
            return f64::INFINITY;
        }
        let k = self.coeff.powf(-p.inv_pm1());
        let (d1, d2) = {
            let (x, y) = (self.dist(lo), self.dist(hi));
            if x <= y {
                (x, y)
            } else {
                (y, x)
            }
        };
        let s = p.alpha_p(self.exponent);
        if s == 0.0 {
            return k * (d2 - d1);
        }
        if s == 1.0 {
            return if d1 == 0.0 {
                f64::INFINITY
            } else {
                k * (d2 / d1).ln()
            };
        }
        if s < 1.0 {
            k * (d2.powf(1.0 - s) - d1.powf(1.0 - s)) / (1.0 - s)
        } else if d1 == 0.0 {
            f64::INFINITY
        } else {
            k * (d1.powf(1.0 - s) - d2.powf(1.0 - s)) / (s - 1.0)
        }
    }
}

/// Weight sampled on a strictly increasing grid.
///
/// Interpolation is piecewise linear, except on a cell joining a zero node to a
/// positive node: there the weight follows the power law `w_+·(d/h)^α̂`, with `α̂`
/// the exponent fitted to the nodes beyond the zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWeight {
    xs: Vec<f64>,
    ws: Vec<f64>,
    zero_tol: f64,
    /// Per cell: `Some((zero_on_left, exponent))` for power-law closure cells.
    closure: Vec<Option<(bool, f64)>>,
}

/// Nodes used on each side of a zero to fit its local exponent.
const GRID_EXPONENT_NODES: usize = 8;

impl GridWeight {
    pub fn new(xs: Vec<f64>, ws: Vec<f64>) -> Result<Self> {
        if xs.len() != ws.len() || xs.len() < 2 {
            return Err(Error::InvalidParameter(
                "grid weight needs at least two (x, w) pairs of equal length".into(),
            ));
        }
        if xs.windows(2).any(|p| !(p[1] > p[0])) || xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "grid abscissae must be finite and strictly increasing".into(),
            ));
        }
        if ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter(
                "grid ordinates must be finite and nonnegative".into(),
            ));
        }
        let max = ws.iter().cloned().fold(0.0, f64::max);
        let zero_tol = 1e-14 * max;
        let mut grid = GridWeight {
            xs,
            ws,
            zero_tol,
            closure: Vec::new(),
        };
        let cells = grid.xs.len() - 1;
        let mut closure = vec![None; cells];
        for (k, slot) in closure.iter_mut().enumerate() {
            let (z0, z1) = (grid.is_zero_node(k), grid.is_zero_node(k + 1));
            if z0 && !z1 {
                *slot = grid.node_exponent(k, Side::Right).ok().map(|e| (true, e));
            } else if z1 && !z0 {
                *slot = grid.node_exponent(k + 1, Side::Left).ok().map(|e| (false, e));
            }
        }
        grid.closure = closure;
        Ok(grid)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ws(&self) -> &[f64] {
        &self.ws
    }

    pub fn zero_tol(&self) -> f64 {
        self.zero_tol
    }

    pub(crate) fn is_zero_node(&self, k: usize) -> bool {
        self.ws[k] <= self.zero_tol
    }

    /// Least-squares slope of `log w` against `log |x − z|` over the positive nodes
    /// next to the zero node `k` on `side`.
    pub(crate) fn node_exponent(&self, k: usize, side: Side) -> Result<f64> {
        let z = self.xs[k];
        let mut pts = Vec::new();
        let mut j = k;
        loop {
            let next = match side {
                Side::Right if j + 1 < self.xs.len() => j + 1,
                Side::Left if j > 0 => j - 1,
                _ => break,
            };
            if self.is_zero_node(next) || pts.len() == GRID_EXPONENT_NODES {
                break;
            }
            pts.push(((self.xs[next] - z).abs().ln(), self.ws[next].ln()));
            j = next;
        }
        least_squares_slope(&pts).ok_or_else(|| Error::Estimation {
            z,
            reason: format!("only {} positive grid samples next to the zero", pts.len()),
        })
    }

    /// Whether `x` lies in the sampled zero set: a zero node or a cell between two.
    fn in_zero_set(&self, x: f64) -> bool {
        let n = self.xs.len();
        let k = self.xs.partition_point(|&t| t <= x).clamp(1, n - 1) - 1;
        let (z0, z1) = (self.is_zero_node(k), self.is_zero_node(k + 1));
        (z0 && z1) || (z0 && x == self.xs[k]) || (z1 && x == self.xs[k + 1])
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let k = self.xs.partition_point(|&t| t <= x).clamp(1, n - 1) - 1;
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let (w0, w1) = (self.ws[k], self.ws[k + 1]);
        let h = x1 - x0;
        match self.closure[k] {
            Some((true, e)) => w1 * ((x - x0).max(0.0) / h).powf(e),
            Some((false, e)) => w0 * ((x1 - x).max(0.0) / h).powf(e),
            None => {
                let t = ((x - x0) / h).clamp(0.0, 1.0);
                (w0 + t * (w1 - w0)).max(0.0)
            }
        }
    }
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    slope.is_finite().then_some(slope)
}

/// A zero of a closed-form weight, with its one-sided local exponents when known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeclaredZero {
    pub at: f64,
    pub left_exponent: Option<f64>,
    pub right_exponent: Option<f64>,
}

/// Weight given by a closure. All zeros in the closed domain must be declared.
#[derive(Clone)]
pub struct ClosedForm {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    zeros: Vec<DeclaredZero>,
}

impl ClosedForm {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static, zeros: Vec<DeclaredZero>) -> Self {
        let mut zeros = zeros;
        zeros.sort_by(|a, b| a.at.total_cmp(&b.at));
        ClosedForm {
            f: Arc::new(f),
            zeros,
        }
    }

    pub fn zeros(&self) -> &[DeclaredZero] {
        &self.zeros
    }
}

impl fmt::Debug for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosedForm")
            .field("zeros", &self.zeros)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum WeightForm {
    PiecewisePower(Vec<PowerPiece>),
    GridSampled(GridWeight),
    ClosedForm(ClosedForm),
}

/// A nonnegative, locally integrable weight on a bounded interval.
#[derive(Debug, Clone)]
pub struct Weight {
    domain: Interval,
    form: WeightForm,
    label: String,
    /// Set for finite truncations of weights with infinitely many degeneracy intervals.
    truncated_accumulation: bool,
}

impl Weight {
    pub fn piecewise_power(domain: Interval, pieces: Vec<PowerPiece>) -> Result<Self> {
        let mut pieces = pieces;
        pieces.sort_by(|a, b| a.span.a.total_cmp(&b.span.a));
        let tol = 1e-12 * domain.len();
        let tiles = pieces.first().map(|p| (p.span.a - domain.a).abs() <= tol) == Some(true)
            && pieces.last().map(|p| (p.span.b - domain.b).abs() <= tol) == Some(true)
            && pieces
                .windows(2)
                .all(|w| (w[1].span.a - w[0].span.b).abs() <= tol);
        if !tiles {
            return Err(Error::InvalidParameter(
                "power pieces must tile the domain without gaps or overlaps".into(),
            ));
        }
        Ok(Weight {
            domain,
            form: WeightForm::PiecewisePower(pieces),
            label: "piecewise_power".into(),
            truncated_accumulation: false,
        })
    }

    pub fn grid(xs: Vec<f64>, ws: Vec<f64>) -> Result<Self> {
        let grid = GridWeight::new(xs, ws)?;
        let domain = Interval::new(grid.xs[0], *grid.xs.last().unwrap())?;
        Ok(Weight {
            domain,
            form: WeightForm::GridSampled(grid),
            label: "grid".into(),
            truncated_accumulation: false,
        })
    }

    pub fn closed_form(domain: Interval, form: ClosedForm) -> Self {
        Weight {
            domain,
            form: WeightForm::ClosedForm(form),
            label: "closed_form".into(),
            truncated_accumulation: false,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn form(&self) -> &WeightForm {
        &self.form
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_truncated_accumulation(&self) -> bool {
        self.truncated_accumulation
    }

    /// Threshold below which a sampled value counts as a zero.
    pub fn zero_tol(&self) -> f64 {
        match &self.form {
            WeightForm::GridSampled(g) => g.zero_tol,
            _ => 0.0,
        }
    }

    /// `w(x)` for `x` in the closed domain.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !self.domain.contains(x) {
            return Err(Error::OutOfDomain {
                x,
                a: self.domain.a,
                b: self.domain.b,
            });
        }
        Ok(self.value(x))
    }

    /// Unchecked evaluation; points outside the domain are clamped onto it.
    pub(crate) fn value(&self, x: f64) -> f64 {
        let x = x.clamp(self.domain.a, self.domain.b);
        match &self.form {
            WeightForm::PiecewisePower(pieces) => piece_at(pieces, x).eval(x),
            WeightForm::GridSampled(g) => g.eval(x),
            WeightForm::ClosedForm(c) => (c.f)(x).max(0.0),
        }
    }

    /// `w(x)^{-1/(p-1)}`, `+∞` where `w(x) = 0`.
    pub fn neg_power(&self, x: f64, p: Exponent) -> f64 {
        let x = x.clamp(self.domain.a, self.domain.b);
        match &self.form {
            WeightForm::PiecewisePower(pieces) => piece_at(pieces, x).neg_power(x, p),
            WeightForm::GridSampled(g) => {
                let w = g.eval(x);
                if w == 0.0 || g.in_zero_set(x) {
                    f64::INFINITY
                } else {
                    w.powf(-p.inv_pm1())
                }
            }
            WeightForm::ClosedForm(_) => {
                let w = self.value(x);
                if w <= 0.0 {
                    f64::INFINITY
                } else {
                    w.powf(-p.inv_pm1())
                }
            }
        }
    }

    /// The transform `x ↦ w(x)^{-1/(p-1)}` as a function object.
    pub fn neg_power_transform(&self, p: Exponent) -> NegPowerTransform<'_> {
        NegPowerTransform { weight: self, p }
    }

    /// Closed-form `∫_lo^hi w^{-1/(p-1)}` where the representation allows it.
    pub fn transform_integral_exact(&self, p: Exponent, lo: f64, hi: f64) -> Option<f64> {
        let WeightForm::PiecewisePower(pieces) = &self.form else {
            return None;
        };
        let (lo, hi) = (lo.max(self.domain.a), hi.min(self.domain.b));
        if hi <= lo {
            return Some(0.0);
        }
        let mut total = 0.0;
        for piece in pieces {
            let (l, h) = (lo.max(piece.span.a), hi.min(piece.span.b));
            if h > l {
                total += piece.transform_integral(l, h, p);
            }
        }
        Some(total)
    }

    /// Points where the weight, or one of its derivatives, may fail to be smooth:
    /// piece boundaries, declared zeros, grid nodes.
    pub fn kinks(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = match &self.form {
            WeightForm::PiecewisePower(pieces) => pieces
                .iter()
                .flat_map(|p| [p.span.a, p.span.b])
                .collect(),
            WeightForm::GridSampled(g) => g.xs.clone(),
            WeightForm::ClosedForm(c) => c.zeros.iter().map(|z| z.at).collect(),
        };
        pts.retain(|&x| x > self.domain.a && x < self.domain.b);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Points where the weight vanishes, as needed for splitting integrals:
    /// zero pieces' boundaries, power centers, declared zeros, zero grid nodes.
    pub fn singular_points(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = match &self.form {
            WeightForm::PiecewisePower(pieces) => pieces
                .iter()
                .flat_map(|p| {
                    if p.coeff == 0.0 {
                        vec![p.span.a, p.span.b]
                    } else if p.exponent != 0.0 {
                        vec![p.center]
                    } else {
                        vec![]
                    }
                })
                .collect(),
            WeightForm::GridSampled(g) => (0..g.xs.len())
                .filter(|&k| g.is_zero_node(k))
                .map(|k| g.xs[k])
                .collect(),
            WeightForm::ClosedForm(c) => c.zeros.iter().map(|z| z.at).collect(),
        };
        pts.retain(|&x| x >= self.domain.a && x <= self.domain.b);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }
}

fn piece_at(pieces: &[PowerPiece], x: f64) -> &PowerPiece {
    let k = pieces.partition_point(|p| p.span.b < x);
    &pieces[k.min(pieces.len() - 1)]
}

/// `x ↦ w(x)^{-1/(p-1)}` for a fixed weight and exponent.
#[derive(Debug, Clone, Copy)]
pub struct NegPowerTransform<'a> {
    weight: &'a Weight,
    p: Exponent,
}

impl NegPowerTransform<'_> {
    pub fn eval(&self, x: f64) -> f64 {
        self.weight.neg_power(x, self.p)
    }

    pub fn exponent(&self) -> Exponent {
        self.p
    }
}

/// The weight families used throughout the examples and tests.
pub mod builtins {
    use super::*;

    /// `w(x) = (1 − x²)²` on `(−2, 2)`, with double zeros at `±1`.
    pub fn figure1() -> Weight {
        let domain = Interval { a: -2.0, b: 2.0 };
        let zeros = [-1.0, 1.0]
            .into_iter()
            .map(|at| DeclaredZero {
                at,
                left_exponent: Some(2.0),
                right_exponent: Some(2.0),
            })
            .collect();
        let f = |x: f64| {
            let v = (1.0 - x) * (1.0 + x);
            v * v
        };
        Weight::closed_form(domain, ClosedForm::new(f, zeros)).with_label("figure1")
    }

    /// `w(x) = x^α` on `(0, 1)`, `α > −1`.
    pub fn power(alpha: f64) -> Result<Weight> {
        if !(alpha.is_finite() && alpha > -1.0) {
            return Err(Error::InvalidParameter(format!(
                "power weight x^alpha is not locally integrable for alpha = {alpha} <= -1"
            )));
        }
        let domain = Interval { a: 0.0, b: 1.0 };
        let piece = PowerPiece::new(domain, 1.0, 0.0, alpha, Orientation::Right)?;
        Ok(Weight::piecewise_power(domain, vec![piece])?.with_label(format!("power(alpha={alpha})")))
    }

    /// `w ≡ c` on `domain`; `c = 0` gives the identically zero weight.
    pub fn constant(domain: Interval, c: f64) -> Result<Weight> {
        let piece = if c == 0.0 {
            PowerPiece::zero(domain)
        } else {
            PowerPiece::new(domain, c, domain.a, 0.0, Orientation::Right)?
        };
        Ok(Weight::piecewise_power(domain, vec![piece])?.with_label(format!("constant({c})")))
    }

    /// Largest truncation accepted by [`cascade`].
    pub const CASCADE_MAX_BUMPS: usize = 40;

    /// `M` adjacent bumps on `(0, 1)`: bump `i` occupies `(a_i, b_i)` with
    /// `b_i − a_i = 2^{−i}`, `a_1 = 0`, `a_{i+1} = b_i`, and equals
    /// `m_i (x − a_i)^α` on its left half and `m_i (b_i − x)^α` on its right half,
    /// `m_i = 2^{(i+1)α}`. The remainder `[1 − 2^{−M}, 1)` carries `w ≡ 0`.
    pub fn cascade(alpha: f64, p: Exponent, bumps: usize) -> Result<Weight> {
        if !(alpha > 0.0 && p.alpha_p(alpha) > 1.0) {
            return Err(Error::Precondition(format!(
                "cascade weight needs alpha > 0 and alpha/(p-1) > 1, got alpha = {alpha}, p = {p}"
            )));
        }
        if bumps == 0 || bumps > CASCADE_MAX_BUMPS {
            return Err(Error::InvalidParameter(format!(
                "cascade truncation must be in 1..={CASCADE_MAX_BUMPS}, got {bumps}"
            )));
        }
        let domain = Interval { a: 0.0, b: 1.0 };
        let mut pieces = Vec::with_capacity(2 * bumps + 1);
        let mut a = 0.0;
        for i in 1..=bumps {
            let len = (-(i as f64)).exp2();
            let b = a + len;
            let mid = a + 0.5 * len;
            let m = ((i + 1) as f64 * alpha).exp2();
            pieces.push(PowerPiece::new(Interval { a, b: mid }, m, a, alpha, Orientation::Right)?);
            pieces.push(PowerPiece::new(Interval { a: mid, b }, m, b, alpha, Orientation::Left)?);
            a = b;
        }
        pieces.push(PowerPiece::zero(Interval { a, b: 1.0 }));
        let mut w = Weight::piecewise_power(domain, pieces)?
            .with_label(format!("cascade(alpha={alpha},M={bumps})"));
        w.truncated_accumulation = true;
        Ok(w)
    }

    /// Bump intervals `(a_i, b_i)` of the cascade weight.
    pub fn cascade_bumps(bumps: usize) -> Vec<Interval> {
        let mut out = Vec::with_capacity(bumps);
        let mut a = 0.0;
        for i in 1..=bumps {
            let b = a + (-(i as f64)).exp2();
            out.push(Interval { a, b });
            a = b;
        }
        out
    }
}

/// Serializable weight description, as read from a `--weight` JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WeightSpec {
    Figure1,
    Power {
        alpha: f64,
    },
    Cascade {
        alpha: f64,
        #[serde(default)]
        p: Option<f64>,
        #[serde(rename = "M", alias = "m")]
        bumps: usize,
    },
    Grid {
        #[serde(default)]
        x: Vec<f64>,
        #[serde(default)]
        w: Vec<f64>,
        /// CSV path with `x,w` columns; resolved by the caller before [`WeightSpec::build`].
        #[serde(default, skip_serializing_if = "Option::is_none")]
        csv: Option<String>,
    },
    PiecewisePower {
        domain: [f64; 2],
        pieces: Vec<PieceSpec>,
    },
    Constant {
        domain: [f64; 2],
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PieceSpec {
    pub a: f64,
    pub b: f64,
    pub coeff: f64,
    #[serde(default)]
    pub center: Option<f64>,
    #[serde(default)]
    pub exponent: f64,
    #[serde(default = "default_orientation")]
    pub orientation: Orientation,
}

fn default_orientation() -> Orientation {
    Orientation::Right
}

impl WeightSpec {
    /// Builds the weight. `p` is needed only by the cascade family when the spec
    /// does not carry its own exponent.
    pub fn build(&self, p: Option<Exponent>) -> Result<Weight> {
        match self {
            WeightSpec::Figure1 => Ok(builtins::figure1()),
            WeightSpec::Power { alpha } => builtins::power(*alpha),
            WeightSpec::Cascade { alpha, p: own, bumps } => {
                let p = match (own, p) {
                    (Some(q), _) => Exponent::new(*q)?,
                    (None, Some(q)) => q,
                    (None, None) => {
                        return Err(Error::InvalidParameter(
                            "cascade weight needs an exponent p".into(),
                        ))
                    }
                };
                builtins::cascade(*alpha, p, *bumps)
            }
            WeightSpec::Grid { x, w, csv } => {
                if x.is_empty() {
                    if let Some(path) = csv {
                        return Err(Error::InvalidParameter(format!(
                            "grid CSV {path} has not been loaded"
                        )));
                    }
                }
                Weight::grid(x.clone(), w.clone())
            }
            WeightSpec::PiecewisePower { domain, pieces } => {
                let domain = Interval::new(domain[0], domain[1])?;
                let pieces = pieces
                    .iter()
                    .map(|s| {
                        let span = Interval::new(s.a, s.b)?;
                        if s.coeff == 0.0 {
                            return Ok(PowerPiece::zero(span));
                        }
                        let center = s.center.unwrap_or(match s.orientation {
                            Orientation::Right => s.a,
                            Orientation::Left => s.b,
                        });
                        PowerPiece::new(span, s.coeff, center, s.exponent, s.orientation)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Weight::piecewise_power(domain, pieces)
            }
            WeightSpec::Constant { domain, value } => {
                builtins::constant(Interval::new(domain[0], domain[1])?, *value)
            }
        }
    }
}
