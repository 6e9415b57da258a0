mod common;

use common::*;
use degen_relax::degeneracy::*;
use degen_relax::quadrature::{classify_endpoint_integrability, integrate};
use degen_relax::weight::{builtins, Interval, Side};

#[test]
fn figure1_has_three_intervals() {
    for p in [1.5, 2.0, 2.5] {
        let s = detect_structure(&builtins::figure1(), exp(p), &cfg()).unwrap();
        assert_eq!(s.n_w, DegeneracyCount::Finite(3));
        let ends: Vec<(f64, f64)> = s.intervals.iter().map(|i| (i.a, i.b)).collect();
        assert_eq!(ends, vec![(-2.0, -1.0), (-1.0, 1.0), (1.0, 2.0)]);
    }
    // 2/(p-1) < 1 makes the zeros at ±1 removable
    let s = detect_structure(&builtins::figure1(), exp(4.0), &cfg()).unwrap();
    assert_eq!(s.n_w, DegeneracyCount::Finite(1));
    assert_eq!(s.removable_zeros.len(), 2);
}

#[test]
fn zero_and_cascade_counts() {
    let z = builtins::constant(Interval::new(0.0, 1.0).unwrap(), 0.0).unwrap();
    assert_eq!(detect_structure(&z, exp(2.0), &cfg()).unwrap().n_w, DegeneracyCount::Zero);
    let c = builtins::cascade(2.0, exp(2.0), 8).unwrap();
    assert_eq!(
        detect_structure(&c, exp(2.0), &cfg()).unwrap().n_w,
        DegeneracyCount::InfiniteTruncated(8)
    );
}

#[test]
fn maximality() {
    for p in PS {
        for w in families(p) {
            let s = detect_structure(&w, exp(p), &cfg()).unwrap();
            for iv in &s.intervals {
                for frac in [0.25, 0.1, 0.01] {
                    let (lo, hi) = (iv.a + frac * iv.len(), iv.b - frac * iv.len());
                    let r = integrate(&|x: f64| w.neg_power(x, exp(p)), lo, hi, &cfg()).unwrap();
                    assert!(r.is_finite(), "{} p={p} on ({lo}, {hi})", w.label());
                }
            }
        }
    }
}

#[test]
fn splitting_points_are_non_integrable() {
    for p in PS {
        for w in families(p) {
            let s = detect_structure(&w, exp(p), &cfg()).unwrap();
            let d = w.domain();
            for iv in &s.intervals {
                for (z, inward, outward) in [(iv.a, Side::Right, Side::Left), (iv.b, Side::Left, Side::Right)] {
                    if z == d.a || z == d.b {
                        continue;
                    }
                    let reach = |side: Side| z + side.sign() * 0.25 * iv.len();
                    let inside = classify_endpoint_integrability(&w, exp(p), z, inward, reach(inward), &cfg()).unwrap();
                    let outside = classify_endpoint_integrability(&w, exp(p), z, outward, reach(outward), &cfg()).unwrap();
                    assert!(
                        !inside.is_integrable() || !outside.is_integrable(),
                        "{} p={p} at {z}",
                        w.label()
                    );
                }
            }
        }
    }
}

#[test]
fn idempotence() {
    for w in families(2.0) {
        let a = detect_structure(&w, exp(2.0), &cfg()).unwrap();
        let b = detect_structure(&w, exp(2.0), &cfg()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn grid_weight_boundaries() {
    let xs: Vec<f64> = (0..=400).map(|k| -2.0 + k as f64 / 100.0).collect();
    let ws: Vec<f64> = xs.iter().map(|x: &f64| (1.0 - x * x).powi(2)).collect();
    let w = degen_relax::weight::Weight::grid(xs, ws).unwrap();
    let s = detect_structure(&w, exp(2.0), &cfg()).unwrap();
    assert_eq!(s.n_w, DegeneracyCount::Finite(3));
    assert!((s.intervals[0].b + 1.0).abs() < 1e-6 && (s.intervals[1].b - 1.0).abs() < 1e-6);
}
