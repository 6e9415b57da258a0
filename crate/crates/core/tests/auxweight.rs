mod common;

use common::*;
use degen_relax::auxweight::*;
use degen_relax::degeneracy::SideFlag;
use degen_relax::weight::{builtins, Interval, Side};

fn samples(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (1..n).map(move |k| lo + (hi - lo) * k as f64 / n as f64)
}

#[test]
fn constant_weight_closed_form() {
    let a = aux(&builtins::constant(Interval::new(0.0, 1.0).unwrap(), 1.0).unwrap(), 2.0);
    let ia = &a.intervals()[0];
    assert!((ia.left_value - 2.0).abs() < 1e-8 && (ia.right_value - 2.0).abs() < 1e-8);
    assert!((ia.plateau - 2.0).abs() < 1e-8);
    assert!((a.eval(0.1) - 2.5).abs() < 1e-8);
    assert!((a.eval(0.9) - 2.5).abs() < 1e-8);
}

#[test]
fn monotone_positive_and_endpoint_dichotomy() {
    for p in PS {
        for w in families(p) {
            let a = aux(&w, p);
            for ia in a.intervals() {
                let iv = ia.interval;
                let mut prev = 0.0;
                for x in samples(iv.a, iv.q1(), 200) {
                    let v = a.eval(x);
                    assert!(v > 0.0, "{} p={p} at {x}", w.label());
                    assert!(v >= prev * (1.0 - 1e-10), "{} p={p} not increasing at {x}", w.label());
                    prev = v;
                }
                let mut prev = f64::INFINITY;
                for x in samples(iv.q3(), iv.b, 200) {
                    let v = a.eval(x);
                    assert!(v > 0.0);
                    assert!(v <= prev * (1.0 + 1e-10), "{} p={p} not decreasing at {x}", w.label());
                    prev = v;
                }
                for side in [Side::Left, Side::Right] {
                    let zero = ia.endpoint_value(side) == 0.0;
                    assert_eq!(zero, iv.flag(side).flag == SideFlag::NonIntegrable, "{} p={p}", w.label());
                }
            }
        }
    }
}

#[test]
fn derivative_identity_on_outer_branches() {
    for p in PS {
        for w in families(p) {
            let a = aux(&w, p);
            for ia in a.intervals() {
                let iv = ia.interval;
                let pad = 0.02 * iv.len();
                let pts: Vec<f64> = samples(iv.a + pad, iv.q1() - pad, 51)
                    .chain(samples(iv.q3() + pad, iv.b - pad, 51))
                    .collect();
                for x in pts {
                    let r = derivative_identity_residual(&a, x).unwrap();
                    assert!(r <= 1e-4, "{} p={p} at {x}: {r}", w.label());
                }
            }
        }
    }
}

#[test]
fn cascade_two_sided_bound() {
    for p in PS {
        let alpha = 2.0 * (p - 1.0);
        let a = aux(&builtins::cascade(alpha, exp(p), 6).unwrap(), p);
        let ap = exp(p).alpha_p(alpha);
        for (i, ia) in a.intervals().iter().enumerate() {
            let iv = ia.interval;
            let m = ((i + 2) as f64 * alpha).exp2();
            for x in samples(iv.a, iv.q1(), 100) {
                let lower = (ap - 1.0) * m.powf(1.0 / (p - 1.0)) * (x - iv.a).powf(ap - 1.0);
                let upper = lower / (1.0 - 0.5f64.powf(ap - 1.0));
                let v = a.eval(x);
                assert!(v >= lower * (1.0 - 1e-8) && v <= upper * (1.0 + 1e-8), "p={p} bump {i} at {x}");
            }
        }
    }
}

#[test]
fn locally_bounded() {
    let a = aux(&builtins::figure1(), 2.0);
    let b = aux_global_bounds(&a);
    assert!(b.per_interval_sup.iter().all(|s| s.is_finite() && *s > 0.0));
    assert_eq!(b.inf, 0.0);
}
