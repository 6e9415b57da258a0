//! Acceptance checks. Runs without the libtest harness so that every criterion
//! prints exactly one PASS/FAIL line; the process fails if any criterion fails.

use std::time::{Duration, Instant};

use degen_relax::auxweight::{build_aux_weight, derivative_identity_residual, AuxWeight};
use degen_relax::cascade::cascade_partial_sums;
use degen_relax::degeneracy::{detect_structure, DegeneracyCount, SideFlag};
use degen_relax::function_space::{
    ac_extension_check, check_dom_w, endpoint_vanishing_check, lp_aux_norm, poincare_battery,
    poincare_global_check, random_dom_w_seeded, TestFunction,
};
use degen_relax::quadrature::QuadratureConfig;
use degen_relax::relaxation::{build_approx_sequence, relaxed_functional, verify_relaxation, RelaxationCriteria};
use degen_relax::weight::{builtins, Exponent, Interval, Orientation, PowerPiece, Side, Weight};
use degen_relax::Extended;

type Outcome = Result<String, String>;

const PS: [f64; 3] = [1.5, 2.0, 3.0];

fn cfg() -> QuadratureConfig {
    QuadratureConfig::default()
}

fn exp(p: f64) -> Exponent {
    Exponent::new(p).unwrap()
}

fn build(w: &Weight, p: f64) -> Result<AuxWeight, String> {
    let s = detect_structure(w, exp(p), &cfg()).map_err(|e| e.to_string())?;
    build_aux_weight(w, &s, exp(p), &cfg()).map_err(|e| e.to_string())
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Builtin families for the derivative and endpoint sweeps.
fn families(p: f64) -> Vec<Weight> {
    vec![
        builtins::figure1(),
        builtins::power(0.0).unwrap(),
        builtins::power(0.5).unwrap(),
        builtins::power(1.0).unwrap(),
        builtins::power(3.0).unwrap(),
        builtins::cascade(2.0 * (p - 1.0), exp(p), 6).unwrap(),
    ]
}

fn two_bump() -> Weight {
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

fn figure1_reproduction() -> Outcome {
    let start = Instant::now();
    let w = builtins::figure1();
    let s = detect_structure(&w, exp(2.0), &cfg()).map_err(err)?;
    ensure!(s.n_w == DegeneracyCount::Finite(3), "n_w = {:?}", s.n_w);
    let ends: Vec<f64> = s.intervals.iter().flat_map(|i| [i.a, i.b]).collect();
    for (got, want) in ends.iter().zip([-2.0, -1.0, -1.0, 1.0, 1.0, 2.0]) {
        ensure!((got - want).abs() <= 1e-6, "boundary {got} vs {want}");
    }

    let dir = tempfile::tempdir().map_err(err)?;
    let csv_path = dir.path().join("aux.csv");
    let code = degen_relax_cli::run([
        "degen-relax", "aux", "--weight", "figure1", "--p", "2", "--grid", "1001",
        "--out", csv_path.to_str().unwrap(),
    ]);
    ensure!(code == 0, "aux exited with {code}");
    let mut rdr = csv::Reader::from_path(&csv_path).map_err(err)?;
    ensure!(rdr.headers().map_err(err)?.iter().collect::<Vec<_>>() == ["x", "w", "w_hat"], "CSV header");
    let rows: Vec<(f64, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.map_err(err)?;
            Ok((r[0].parse::<f64>().map_err(err)?, r[2].parse::<f64>().map_err(err)?))
        })
        .collect::<Result<_, String>>()?;
    for z in [-1.0, 1.0] {
        let at = rows.iter().find(|r| r.0 == z).ok_or(format!("no CSV row at {z}"))?;
        ensure!(at.1 == 0.0, "w_hat({z}) = {}", at.1);
    }
    let mut plateaus = Vec::new();
    for iv in &s.intervals {
        let (q1, q3) = (iv.q1(), iv.q3());
        let inner: Vec<f64> = rows.iter().filter(|r| r.0 >= q1 && r.0 <= q3).map(|r| r.1).collect();
        ensure!(!inner.is_empty() && inner.iter().all(|&v| v > 0.0), "plateau on ({}, {})", iv.a, iv.b);
        let spread = inner.iter().cloned().fold(0.0, f64::max) - inner.iter().cloned().fold(f64::INFINITY, f64::min);
        ensure!(spread <= 1e-9 * inner[0], "plateau not flat on ({}, {})", iv.a, iv.b);
        plateaus.push(inner[0]);
    }
    let t = start.elapsed();
    ensure!(t < Duration::from_secs(5), "took {t:?}");
    Ok(format!("3 intervals, plateaus {plateaus:.4?}, {t:.2?}"))
}

fn constant_weight() -> Outcome {
    let w = builtins::constant(Interval::new(0.0, 1.0).unwrap(), 1.0).unwrap();
    let a = build(&w, 2.0)?;
    let ia = &a.intervals()[0];
    let checks = [
        ("w_hat(0)", ia.left_value, 2.0),
        ("w_hat(1)", ia.right_value, 2.0),
        ("plateau", ia.plateau, 2.0),
        ("w_hat(0.1)", a.eval(0.1), 2.5),
    ];
    for (name, got, want) in checks {
        ensure!((got - want).abs() <= 1e-8, "{name} = {got}, expected {want}");
    }
    Ok("w_hat(0) = w_hat(1) = plateau = 2, w_hat(0.1) = 2.5".into())
}

fn derivative_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for p in PS {
        for w in families(p) {
            let a = build(&w, p)?;
            let branches: Vec<(f64, f64)> = a
                .intervals()
                .iter()
                .flat_map(|ia| {
                    let iv = ia.interval;
                    let pad = 0.02 * iv.len();
                    [(iv.a + pad, iv.q1() - pad), (iv.q3() + pad, iv.b - pad)]
                })
                .collect();
            let per_branch = 100usize.div_ceil(branches.len());
            let mut n = 0;
            for (lo, hi) in &branches {
                for k in 0..per_branch {
                    let x = lo + (hi - lo) * (k as f64 + 0.5) / per_branch as f64;
                    let r = derivative_identity_residual(&a, x).map_err(err)?;
                    ensure!(r <= 1e-4, "{} p={p} x={x}: residual {r:.3e}", w.label());
                    worst = worst.max(r);
                    n += 1;
                }
            }
            ensure!(n >= 100, "only {n} points for {}", w.label());
            count += n;
        }
    }
    Ok(format!("{count} points, worst relative residual {worst:.2e}"))
}

fn poincare() -> Outcome {
    let start = Instant::now();
    let one = builtins::constant(Interval::new(0.0, 1.0).unwrap(), 1.0).unwrap();
    let a = build(&one, 2.0)?;
    let r = poincare_global_check(&TestFunction::polynomial(vec![0.0, 1.0]), &a, &cfg()).map_err(err)?;
    ensure!((r.lhs - 5.0 / 24.0).abs() <= 1e-6, "lhs for u = x is {}", r.lhs);
    ensure!((r.rhs - 1.0).abs() <= 1e-6, "rhs for u = x is {}", r.rhs);

    let mut auxes = Vec::new();
    for p in PS {
        for w in [
            builtins::figure1(),
            builtins::power(1.0).unwrap(),
            builtins::cascade(2.0 * (p - 1.0), exp(p), 6).unwrap(),
        ] {
            auxes.push(build(&w, p)?);
        }
    }
    let refs: Vec<&AuxWeight> = auxes.iter().collect();
    let b = poincare_battery(&refs, 50, 20_240_601, &cfg()).map_err(err)?;
    ensure!(b.cases.len() >= 450, "{} cases", b.cases.len());
    ensure!(b.worst_ratio <= 1.0 + 1e-8, "worst ratio {} ({:?})", b.worst_ratio, b.worst());
    let t = start.elapsed();
    ensure!(t < Duration::from_secs(60), "took {t:?}");
    Ok(format!(
        "{} cases, worst ratio {:.4}, u = x gives lhs {:.8} rhs {:.8}, {t:.2?}",
        b.cases.len(),
        b.worst_ratio,
        r.lhs,
        r.rhs
    ))
}

fn endpoint_dichotomy() -> Outcome {
    let (mut zeros, mut positives) = (0, 0);
    for p in PS {
        let mut weights = families(p);
        weights.push(two_bump());
        for w in weights {
            let a = build(&w, p)?;
            let s = a.structure();
            let mut funcs: Vec<TestFunction> =
                (0..3).map(|k| random_dom_w_seeded(s, 77, k).unwrap()).collect();
            // an unbounded member of Dom_w
            let log = TestFunction::log_distance(w.domain().a);
            if s.intervals.len() == 1
                && check_dom_w(&log, &w, s, exp(p), &cfg()).map_err(err)?.in_dom_w
                && lp_aux_norm(&log, &a, &cfg()).map_err(err)?.is_finite()
            {
                funcs.push(log);
            }
            for (i, ia) in a.intervals().iter().enumerate() {
                for side in [Side::Left, Side::Right] {
                    let value = ia.endpoint_value(side);
                    match ia.interval.flag(side).flag {
                        SideFlag::NonIntegrable => {
                            ensure!(value == 0.0, "{} p={p} interval {i} {side:?}: value {value}", w.label());
                            for u in &funcs {
                                let r = endpoint_vanishing_check(u, &a, i, side).map_err(err)?;
                                ensure!(r.ok, "{} p={p} {}: no vanishing at {side:?} of {i}", w.label(), u.label());
                            }
                            zeros += 1;
                        }
                        SideFlag::Integrable => {
                            ensure!(value > 0.0, "{} p={p} interval {i} {side:?}: value {value}", w.label());
                            for u in &funcs {
                                let r = ac_extension_check(u, &a, i, side, &cfg()).map_err(err)?;
                                ensure!(
                                    r.ok && r.holder_bound.is_finite() && r.boundary_value.is_finite(),
                                    "{} p={p} {}: no boundary limit at {side:?} of {i}",
                                    w.label(),
                                    u.label()
                                );
                            }
                            positives += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(format!("{zeros} non-integrable endpoints vanish, {positives} integrable endpoints extend"))
}

fn relaxation() -> Outcome {
    let mut worst_x: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for w in [builtins::figure1(), two_bump()] {
        let a = build(&w, 2.0)?;
        for k in 0..10 {
            let u = random_dom_w_seeded(a.structure(), 31_415, k).map_err(err)?;
            let seq = build_approx_sequence(&u, &a, 64, &cfg()).map_err(err)?;
            let r = verify_relaxation(&seq, &RelaxationCriteria::default());
            let last = r.rows.last().ok_or("empty sequence")?;
            ensure!(last.h == 64, "last h = {}", last.h);
            let xr = last.x_err / seq.u_norm;
            let gr = last.f_gap / seq.relaxed;
            ensure!(xr <= 0.02, "{} u#{k}: x_err/‖u‖ = {xr:.4}", w.label());
            ensure!(gr <= 0.01, "{} u#{k}: f_gap/F̄ = {gr:.4}", w.label());
            worst_x = worst_x.max(xr);
            worst_gap = worst_gap.max(gr);
        }
    }
    Ok(format!("20 functions, worst x_err/‖u‖ {worst_x:.4}, worst f_gap/F̄ {worst_gap:.4}"))
}

fn cascade() -> Outcome {
    let p = exp(2.0);
    let mut sums = Vec::new();
    for m in [5, 10, 20] {
        let r = cascade_partial_sums(2.0, p, m, &cfg()).map_err(err)?;
        ensure!(r.comparison.iter().all(|&c| c == 4.0), "comparison terms {:?}", r.comparison);
        ensure!(r.partial_sums.windows(2).all(|w| w[1] > w[0]), "partial sums not increasing");
        sums.push(*r.partial_sums.last().unwrap());
    }
    let ratio = sums[2] / sums[1];
    ensure!((1.8..=2.2).contains(&ratio), "S(20)/S(10) = {ratio}");
    Ok(format!("S(5), S(10), S(20) = {sums:.4?}, S(20)/S(10) = {ratio:.4}"))
}

fn degenerate_x() -> Outcome {
    let w = builtins::constant(Interval::new(0.0, 1.0).unwrap(), 0.0).unwrap();
    let a = build(&w, 2.0)?;
    let s = a.structure();
    ensure!(s.n_w == DegeneracyCount::Zero, "n_w = {:?}", s.n_w);
    for u in [TestFunction::constant(0.0), TestFunction::constant(5.0), TestFunction::polynomial(vec![1.0, -3.0, 2.0])] {
        let n = lp_aux_norm(&u, &a, &cfg()).map_err(err)?;
        ensure!(n == Extended::Finite(0.0), "lp_aux_norm({}) = {n:?}", u.label());
    }
    let f = relaxed_functional(&TestFunction::constant(0.0), &w, s, exp(2.0), &cfg()).map_err(err)?;
    ensure!(f == Extended::Finite(0.0), "relaxed functional {f:?}");
    Ok("n_w = Zero, lp_aux_norm = 0, relaxed functional of 0 = 0".into())
}

fn main() {
    degen_relax::init_thread_pool_from_env();
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("figure 1 reproduction", figure1_reproduction),
        ("constant-weight closed form", constant_weight),
        ("derivative identity", derivative_identity),
        ("global Poincaré battery", poincare),
        ("endpoint dichotomy", endpoint_dichotomy),
        ("relaxation convergence", relaxation),
        ("cascade divergence", cascade),
        ("degenerate X", degenerate_x),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let t = start.elapsed();
        match outcome {
            Ok(msg) => println!("PASS criterion {} ({name}): {msg} [{t:.2?}]", k + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {msg} [{t:.2?}]", k + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
