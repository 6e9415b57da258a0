#![allow(dead_code)]

use degen_relax::auxweight::{build_aux_weight, AuxWeight};
use degen_relax::degeneracy::detect_structure;
use degen_relax::quadrature::QuadratureConfig;
use degen_relax::weight::{builtins, Exponent, Interval, Orientation, PowerPiece, Weight};

pub fn cfg() -> QuadratureConfig {
    QuadratureConfig::default()
}

pub fn exp(p: f64) -> Exponent {
    Exponent::new(p).unwrap()
}

pub fn aux(w: &Weight, p: f64) -> AuxWeight {
    let s = detect_structure(w, exp(p), &cfg()).unwrap();
    build_aux_weight(w, &s, exp(p), &cfg()).unwrap()
}

/// Two bumps `25·dist²` on (0, .4) and (.6, 1) separated by a zero gap.
pub fn two_bump() -> Weight {
    let i = |a, b| Interval::new(a, b).unwrap();
    let piece = |a: f64, b: f64, c: f64, o| PowerPiece::new(i(a, b), 25.0, c, 2.0, o).unwrap();
    Weight::piecewise_power(
        i(0.0, 1.0),
        vec![
            piece(0.0, 0.2, 0.0, Orientation::Right),
            piece(0.2, 0.4, 0.4, Orientation::Left),
            PowerPiece::zero(i(0.4, 0.6)),
            piece(0.6, 0.8, 0.6, Orientation::Right),
            piece(0.8, 1.0, 1.0, Orientation::Left),
        ],
    )
    .unwrap()
    .with_label("two-bump")
}

/// The builtin families used across sweeps, for a given exponent.
pub fn families(p: f64) -> Vec<Weight> {
    vec![
        builtins::figure1(),
        builtins::power(0.0).unwrap(),
        builtins::power(0.5).unwrap(),
        builtins::power(1.0).unwrap(),
        builtins::power(3.0).unwrap(),
        builtins::cascade(2.0 * (p - 1.0), exp(p), 6).unwrap(),
        two_bump(),
    ]
}

pub const PS: [f64; 3] = [1.5, 2.0, 3.0];
