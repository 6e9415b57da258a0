//! Decomposition of the set where `w^{-1/(p-1)}` is locally integrable into its
//! component intervals, and the resulting count `N_w`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::quadrature::{classify_endpoint_integrability, Integrability, QuadratureConfig};
use crate::weight::{Exponent, Interval, Side, Weight, WeightForm};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideFlag {
    Integrable,
    NonIntegrable,
}

/// Integrability of `w^{-1/(p-1)}` between an interval endpoint and its midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndpointFlag {
    pub flag: SideFlag,
    /// The half integral when finite.
    pub half_integral: Option<f64>,
}

impl From<Integrability> for EndpointFlag {
    fn from(c: Integrability) -> Self {
        match c {
            Integrability::Integrable(v) => EndpointFlag {
                flag: SideFlag::Integrable,
                half_integral: Some(v),
            },
            Integrability::NonIntegrable => EndpointFlag {
                flag: SideFlag::NonIntegrable,
                half_integral: None,
            },
        }
    }
}

impl EndpointFlag {
    pub fn is_integrable(&self) -> bool {
        self.flag == SideFlag::Integrable
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegenerateInterval {
    pub a: f64,
    pub b: f64,
    pub left: EndpointFlag,
    pub right: EndpointFlag,
}

impl DegenerateInterval {
    pub fn interval(&self) -> Interval {
        Interval { a: self.a, b: self.b }
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.a + self.b)
    }

    pub fn q1(&self) -> f64 {
        0.25 * (3.0 * self.a + self.b)
    }

    pub fn q3(&self) -> f64 {
        0.25 * (self.a + 3.0 * self.b)
    }

    pub fn flag(&self, side: Side) -> EndpointFlag {
        match side {
            Side::Left => self.left,
            Side::Right => self.right,
        }
    }

    pub fn endpoint(&self, side: Side) -> f64 {
        match side {
            Side::Left => self.a,
            Side::Right => self.b,
        }
    }

    pub fn contains_open(&self, x: f64) -> bool {
        x > self.a && x < self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "count", rename_all = "snake_case")]
pub enum DegeneracyCount {
    Zero,
    Finite(usize),
    /// A finite truncation of a weight with infinitely many intervals.
    InfiniteTruncated(usize),
}

/// A point where consecutive intervals meet or where an interval meets a zero set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPoint {
    pub at: f64,
    /// Classification on the side `x < at`; `None` at the left end of the domain.
    pub left: Option<SideFlag>,
    /// Classification on the side `x > at`; `None` at the right end of the domain.
    pub right: Option<SideFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyStructure {
    pub p: Exponent,
    pub domain: Interval,
    pub intervals: Vec<DegenerateInterval>,
    pub n_w: DegeneracyCount,
    /// Zeros of `w` that do not split `I` because the transform is integrable on both sides.
    pub removable_zeros: Vec<f64>,
    /// Boundary points of the intervals lying inside the domain.
    pub splits: Vec<SplitPoint>,
}

impl DegeneracyStructure {
    /// Index of the interval whose open span contains `x`.
    pub fn interval_index(&self, x: f64) -> Option<usize> {
        let k = self.intervals.partition_point(|iv| iv.b <= x);
        self.intervals
            .get(k)
            .filter(|iv| iv.contains_open(x))
            .map(|_| k)
    }

    /// Index of the interval whose closure contains `x` (the left one at a shared endpoint).
    pub fn closure_index(&self, x: f64) -> Option<usize> {
        let k = self.intervals.partition_point(|iv| iv.b < x);
        self.intervals
            .get(k)
            .filter(|iv| x >= iv.a && x <= iv.b)
            .map(|_| k)
    }

    pub fn is_finitely_degenerate(&self) -> bool {
        matches!(self.n_w, DegeneracyCount::Finite(_))
    }

    /// Total length of `I`.
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|iv| iv.len()).sum()
    }
}

/// A zero set component: an isolated point (`lo == hi`) or a closed run.
#[derive(Debug, Clone, Copy)]
struct ZeroRegion {
    lo: f64,
    hi: f64,
}

fn zero_regions(w: &Weight) -> Vec<ZeroRegion> {
    let dom = w.domain();
    let mut regions: Vec<ZeroRegion> = match w.form() {
        WeightForm::PiecewisePower(pieces) => pieces
            .iter()
            .filter_map(|piece| {
                if piece.coeff == 0.0 {
                    Some(ZeroRegion {
                        lo: piece.span.a,
                        hi: piece.span.b,
                    })
                } else if piece.exponent > 0.0 {
                    [piece.span.a, piece.span.b]
                        .into_iter()
                        .find(|&t| piece.vanishes_at(t))
                        .map(|t| ZeroRegion { lo: t, hi: t })
                } else {
                    None
                }
            })
            .collect(),
        WeightForm::GridSampled(g) => (0..g.xs().len())
            .filter(|&k| g.is_zero_node(k))
            .map(|k| ZeroRegion {
                lo: g.xs()[k],
                hi: g.xs()[k],
            })
            .collect(),
        WeightForm::ClosedForm(c) => c
            .zeros()
            .iter()
            .filter(|z| dom.contains(z.at))
            .map(|z| ZeroRegion { lo: z.at, hi: z.at })
            .collect(),
    };
    regions.sort_by(|x, y| x.lo.total_cmp(&y.lo));
    let touch = 1e-12 * dom.len();
    let grid_nodes: Option<&[f64]> = match w.form() {
        WeightForm::GridSampled(g) => Some(g.xs()),
        _ => None,
    };
    let mut merged: Vec<ZeroRegion> = Vec::new();
    for r in regions {
        if let Some(last) = merged.last_mut() {
            let adjacent_grid_zeros = grid_nodes.is_some_and(|xs| {
                let k = xs.partition_point(|&x| x < last.hi);
                xs.get(k + 1) == Some(&r.lo)
            });
            if r.lo <= last.hi + touch || adjacent_grid_zeros {
                last.hi = last.hi.max(r.hi);
                continue;
            }
        }
        merged.push(r);
    }
    for r in &mut merged {
        r.lo = r.lo.clamp(dom.a, dom.b);
        r.hi = r.hi.clamp(dom.a, dom.b);
    }
    merged
}

fn flag_of(c: &Integrability) -> SideFlag {
    if c.is_integrable() {
        SideFlag::Integrable
    } else {
        SideFlag::NonIntegrable
    }
}

/// Computes the intervals of `I`, their endpoint flags and `N_w`.
pub fn detect_structure(w: &Weight, p: Exponent, cfg: &QuadratureConfig) -> Result<DegeneracyStructure> {
    cfg.validate()?;
    let dom = w.domain();
    let regions = zero_regions(w);

    // Open segments on which w > 0.
    let mut segments: Vec<(f64, f64)> = Vec::new();
    let mut cursor = dom.a;
    for r in &regions {
        if r.lo > cursor {
            segments.push((cursor, r.lo));
        }
        cursor = cursor.max(r.hi);
    }
    if cursor < dom.b {
        segments.push((cursor, dom.b));
    }

    // Decide for each isolated zero between two segments whether it splits.
    let joins: Vec<Option<(f64, Integrability, Integrability)>> = segments
        .windows(2)
        .map(|pair| {
            let (s0, s1) = (pair[0], pair[1]);
            if s0.1 != s1.0 {
                return Ok(None);
            }
            let z = s0.1;
            let left = classify_endpoint_integrability(w, p, z, Side::Left, 0.5 * (s0.0 + s0.1), cfg)?;
            let right = classify_endpoint_integrability(w, p, z, Side::Right, 0.5 * (s1.0 + s1.1), cfg)?;
            Ok(Some((z, left, right)))
        })
        .collect::<Result<_>>()?;

    let mut chains: Vec<(f64, f64)> = Vec::new();
    let mut removable = Vec::new();
    for (j, seg) in segments.iter().enumerate() {
        let merge = j > 0
            && matches!(&joins[j - 1], Some((_, l, r)) if l.is_integrable() && r.is_integrable());
        if merge {
            removable.push(seg.0);
            chains.last_mut().expect("merge follows a segment").1 = seg.1;
        } else {
            chains.push(*seg);
        }
    }

    let intervals: Vec<DegenerateInterval> = chains
        .par_iter()
        .map(|&(a, b)| {
            let mid = 0.5 * (a + b);
            let left = classify_endpoint_integrability(w, p, a, Side::Right, mid, cfg)?;
            let right = classify_endpoint_integrability(w, p, b, Side::Left, mid, cfg)?;
            Ok(DegenerateInterval {
                a,
                b,
                left: left.into(),
                right: right.into(),
            })
        })
        .collect::<Result<_>>()?;

    let mut splits = Vec::new();
    let mut push_split = |at: f64, left: Option<SideFlag>, right: Option<SideFlag>| {
        if at > dom.a && at < dom.b {
            splits.push(SplitPoint { at, left, right });
        }
    };
    for (k, iv) in intervals.iter().enumerate() {
        let touching_prev = k > 0 && intervals[k - 1].b == iv.a;
        if !touching_prev {
            push_split(iv.a, Some(SideFlag::NonIntegrable), Some(iv.left.flag));
        }
        let touching_next = intervals.get(k + 1).is_some_and(|n| n.a == iv.b);
        let right_of_b = if touching_next {
            Some(intervals[k + 1].left.flag)
        } else {
            Some(SideFlag::NonIntegrable)
        };
        push_split(iv.b, Some(iv.right.flag), right_of_b);
    }
    // Use the local classifications at touching seams rather than the half-interval ones.
    for split in &mut splits {
        if let Some(Some((_, l, r))) = joins.iter().find(|j| matches!(j, Some((z, _, _)) if *z == split.at)) {
            split.left = Some(flag_of(l));
            split.right = Some(flag_of(r));
        }
    }

    let n_w = if intervals.is_empty() {
        DegeneracyCount::Zero
    } else if w.is_truncated_accumulation() {
        DegeneracyCount::InfiniteTruncated(intervals.len())
    } else {
        DegeneracyCount::Finite(intervals.len())
    };

    Ok(DegeneracyStructure {
        p,
        domain: dom,
        intervals,
        n_w,
        removable_zeros: removable,
        splits,
    })
}

/// `N_w` of a computed structure.
pub fn classify(s: &DegeneracyStructure) -> DegeneracyCount {
    s.n_w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weight::builtins::*;

    fn p(v: f64) -> Exponent {
        Exponent::new(v).unwrap()
    }

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn figure1_has_three_intervals() {
        let s = detect_structure(&figure1(), p(2.0), &cfg()).unwrap();
        let ends: Vec<(f64, f64)> = s.intervals.iter().map(|i| (i.a, i.b)).collect();
        assert_eq!(ends, vec![(-2.0, -1.0), (-1.0, 1.0), (1.0, 2.0)]);
        assert_eq!(classify(&s), DegeneracyCount::Finite(3));
        let iv = &s.intervals;
        assert!(iv[0].left.is_integrable() && !iv[0].right.is_integrable());
        assert!(!iv[1].left.is_integrable() && !iv[1].right.is_integrable());
        assert!(!iv[2].left.is_integrable() && iv[2].right.is_integrable());
        assert_eq!(s.splits.len(), 2);
        assert!(s.removable_zeros.is_empty());
    }

    #[test]
    fn figure1_large_p_has_removable_zeros() {
        let s = detect_structure(&figure1(), p(6.0), &cfg()).unwrap();
        assert_eq!(s.n_w, DegeneracyCount::Finite(1));
        assert_eq!(s.removable_zeros, vec![-1.0, 1.0]);
    }

    #[test]
    fn subcritical_power_is_one_interval() {
        for (alpha, q) in [(0.5, 2.0), (1.0, 3.0), (0.2, 1.5)] {
            let s = detect_structure(&power(alpha).unwrap(), p(q), &cfg()).unwrap();
            assert_eq!(s.n_w, DegeneracyCount::Finite(1));
            assert_eq!((s.intervals[0].a, s.intervals[0].b), (0.0, 1.0));
            assert!(s.intervals[0].left.is_integrable());
            assert!(s.intervals[0].right.is_integrable());
        }
    }

    #[test]
    fn zero_weight_has_no_intervals() {
        let w = constant(Interval::new(0.0, 1.0).unwrap(), 0.0).unwrap();
        let s = detect_structure(&w, p(2.0), &cfg()).unwrap();
        assert_eq!(classify(&s), DegeneracyCount::Zero);
        assert!(s.intervals.is_empty());
    }

    #[test]
    fn cascade_reports_truncation() {
        let s = detect_structure(&cascade(2.0, p(2.0), 8).unwrap(), p(2.0), &cfg()).unwrap();
        assert_eq!(classify(&s), DegeneracyCount::InfiniteTruncated(8));
        for (iv, bump) in s.intervals.iter().zip(cascade_bumps(8)) {
            assert_eq!((iv.a, iv.b), (bump.a, bump.b));
            assert!(!iv.left.is_integrable() && !iv.right.is_integrable());
        }
    }

    #[test]
    fn grid_zero_runs_form_gaps() {
        let xs: Vec<f64> = (0..=40).map(|k| k as f64 / 40.0).collect();
        let ws: Vec<f64> = xs
            .iter()
            .map(|&x| if (0.4..=0.6).contains(&x) { 0.0 } else { 1.0 })
            .collect();
        let w = Weight::grid(xs, ws).unwrap();
        let s = detect_structure(&w, p(2.0), &cfg()).unwrap();
        assert_eq!(s.n_w, DegeneracyCount::Finite(2));
        assert!((s.intervals[0].b - 0.4).abs() < 1e-12);
        assert!((s.intervals[1].a - 0.6).abs() < 1e-12);
    }

    #[test]
    fn lookup_helpers() {
        let s = detect_structure(&figure1(), p(2.0), &cfg()).unwrap();
        assert_eq!(s.interval_index(0.0), Some(1));
        assert_eq!(s.interval_index(1.0), None);
        assert_eq!(s.closure_index(1.0), Some(1));
        assert_eq!(s.closure_index(1.5), Some(2));
        let iv = s.intervals[1];
        assert_eq!((iv.q1(), iv.mid(), iv.q3()), (-0.5, 0.0, 0.5));
    }
}
