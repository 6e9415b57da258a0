//! Truncations of the accumulating-zeros cascade weight.
//!
//! Bump `i` lives on `(a_i, b_i)` with `b_i − a_i = 2^{−i}` and carries
//! `m_i = 2^{(i+1)α}`. The terms `t_i = ∫_{a_i}^{q1_i} ŵ_p` are comparable to
//! `m_i^{1/(p−1)}(b_i − a_i)^{α_p} = 2^{α_p}`, so their partial sums grow linearly and
//! `ŵ_p` is not integrable once infinitely many bumps are present.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::auxweight::build_aux_weight;
use crate::degeneracy::detect_structure;
use crate::quadrature::{integrate_with_breaks, QuadratureConfig};
use crate::weight::{builtins, Exponent};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeReport {
    pub alpha: f64,
    pub p: Exponent,
    #[serde(rename = "M")]
    pub m: usize,
    /// `t_i = ∫_{a_i}^{(3a_i+b_i)/4} ŵ_p`, `i = 1..M`.
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// `m_i^{1/(p−1)}(b_i − a_i)^{α_p}`, evaluated through its base-2 logarithm.
    pub comparison: Vec<f64>,
    /// `t_i / comparison_i`.
    pub ratios: Vec<f64>,
    /// Plateau value of `ŵ_p` on each bump (the local sup of the middle half).
    pub plateaus: Vec<f64>,
}

impl CascadeReport {
    /// `max ratio / min ratio`.
    pub fn ratio_spread(&self) -> f64 {
        let max = self.ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.ratios.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }
}

/// `log2` of `m_i^{1/(p−1)}(b_i − a_i)^{α_p}`: `(i+1)α_p − iα_p`.
pub fn comparison_log2(alpha: f64, p: Exponent, i: usize) -> f64 {
    let ap = p.alpha_p(alpha);
    (i + 1) as f64 * ap - i as f64 * ap
}

pub fn cascade_partial_sums(
    alpha: f64,
    p: Exponent,
    bumps: usize,
    cfg: &QuadratureConfig,
) -> Result<CascadeReport> {
    if !(p.alpha_p(alpha) > 1.0) {
        return Err(Error::Precondition(format!(
            "the cascade needs alpha/(p-1) > 1, got {}",
            p.alpha_p(alpha)
        )));
    }
    let w = builtins::cascade(alpha, p, bumps)?;
    let s = detect_structure(&w, p, cfg)?;
    let aux = build_aux_weight(&w, &s, p, cfg)?;
    if aux.intervals().len() != bumps {
        return Err(Error::Invariant(format!(
            "expected {bumps} bumps, found {} intervals",
            aux.intervals().len()
        )));
    }
    let terms: Vec<f64> = aux
        .intervals()
        .par_iter()
        .map(|ia| {
            let iv = &ia.interval;
            let (a, q1) = (iv.a, iv.q1());
            let f = |x: f64| aux.eval(x);
            integrate_with_breaks(&f, &[a, 0.5 * (a + q1), q1], cfg)?
                .value()
                .ok_or_else(|| Error::Invariant(format!("t_i diverges on ({a}, {q1})")))
        })
        .collect::<Result<_>>()?;
    let partial_sums = terms
        .iter()
        .scan(0.0, |acc, t| {
            *acc += t;
            Some(*acc)
        })
        .collect();
    let comparison: Vec<f64> = (1..=bumps)
        .map(|i| comparison_log2(alpha, p, i).exp2())
        .collect();
    let ratios = terms.iter().zip(&comparison).map(|(t, c)| t / c).collect();
    let plateaus = aux.intervals().iter().map(|ia| ia.plateau).collect();
    Ok(CascadeReport {
        alpha,
        p,
        m: bumps,
        terms,
        partial_sums,
        comparison,
        ratios,
        plateaus,
    })
}
