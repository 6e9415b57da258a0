//! Command-line front end: `degen-relax <command> --weight <spec> --p <p> ...`.
//!
//! Reports are JSON (`"schema_version": 1`) on stdout or in `--out`. Plot data is CSV
//! with a header row. Exit codes: 0 success, 1 verification failure or numerical
//! breakdown, 2 invalid input.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use degen_relax::auxweight::{aux_global_bounds, build_aux_weight, AuxWeight};
use degen_relax::cascade::cascade_partial_sums;
use degen_relax::degeneracy::{detect_structure, DegeneracyStructure};
use degen_relax::function_space::{
    check_dom_w, lp_aux_norm, poincare_battery, poincare_global_check, random_dom_w_seeded,
    TestFunction, INEQUALITY_SLACK,
};
use degen_relax::quadrature::QuadratureConfig;
use degen_relax::relaxation::{
    build_approx_sequence, original_functional, relaxed_functional, verify_relaxation,
    RelaxationCriteria,
};
use degen_relax::weight::{builtins, Exponent, Interval, Weight, WeightSpec};
use degen_relax::Error as CoreError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Csv(_) | CliError::Json(_) => 2,
            CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                CoreError::OutOfDomain { .. }
                | CoreError::InvalidParameter(_)
                | CoreError::Precondition(_)
                | CoreError::NotApplicable(_)
                | CoreError::Unsupported(_)
                | CoreError::Indeterminate { .. } => 2,
                _ => 1,
            },
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "degen-relax", version, about = "p-energies with degenerate weights on an interval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Builtin (`figure1`, `power:alpha=1`, `cascade:alpha=2,M=6`,
    /// `constant:value=1,a=0,b=1`), a JSON spec file, or an `x,w` CSV file.
    #[arg(long)]
    weight: String,
    #[arg(long)]
    p: f64,
    #[arg(long = "rel-tol")]
    rel_tol: Option<f64>,
    #[arg(long = "abs-tol")]
    abs_tol: Option<f64>,
    #[arg(long = "divergence-cap")]
    divergence_cap: Option<f64>,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "no-timestamp")]
    no_timestamp: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Intervals of I, endpoint flags and N_w.
    Analyze {
        #[command(flatten)]
        common: Common,
    },
    /// Samples of w and the auxiliary weight as CSV.
    Aux {
        #[command(flatten)]
        common: Common,
        /// Number of equispaced sample points.
        #[arg(long, default_value_t = 1001)]
        grid: usize,
    },
    /// Global Poincaré check on one function or a random battery.
    Poincare {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        battery: usize,
        #[arg(long)]
        function: Option<String>,
        /// Per-case CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// F and the relaxed functional of one function.
    Relax {
        #[command(flatten)]
        common: Common,
        /// `poly:c0,c1,..`, `log-dist:z`, `sqrt-dist:z` or `random:seed`.
        #[arg(long)]
        function: String,
    },
    /// Approximation sequence and its convergence diagnostics.
    Approx {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        function: Option<String>,
        #[arg(long = "h-max", default_value_t = 64)]
        h_max: u32,
        /// Allowed final energy gap relative to the relaxed value.
        #[arg(long = "gap-tol", default_value_t = 0.01)]
        gap_tol: f64,
        /// Per-h diagnostics CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Sampled profiles of u and every member, as CSV.
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long = "profile-points", default_value_t = 1001)]
        profile_points: usize,
    },
    /// Partial sums for the cascade weight, as CSV.
    Cascade {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        p: f64,
        #[arg(long = "M")]
        m: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "rel-tol")]
        rel_tol: Option<f64>,
        #[arg(long = "abs-tol")]
        abs_tol: Option<f64>,
    },
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    degen_relax::init_thread_pool_from_env();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<i32> {
    match cmd {
        Command::Analyze { common } => analyze(&common),
        Command::Aux { common, grid } => aux_csv(&common, grid),
        Command::Poincare {
            common,
            battery,
            function,
            csv,
        } => poincare(&common, battery, function.as_deref(), csv.as_deref()),
        Command::Relax { common, function } => relax(&common, &function),
        Command::Approx {
            common,
            function,
            h_max,
            gap_tol,
            csv,
            profiles,
            profile_points,
        } => approx(
            &common,
            function.as_deref(),
            h_max,
            gap_tol,
            csv.as_deref(),
            profiles.as_deref(),
            profile_points,
        ),
        Command::Cascade {
            alpha,
            p,
            m,
            out,
            rel_tol,
            abs_tol,
        } => cascade(alpha, p, m, out.as_deref(), config(rel_tol, abs_tol, None)?),
    }
}

fn config(rel: Option<f64>, abs: Option<f64>, cap: Option<f64>) -> CliResult<QuadratureConfig> {
    let mut cfg = QuadratureConfig::default();
    if let Some(v) = rel {
        cfg.rel_tol = v;
    }
    if let Some(v) = abs {
        cfg.abs_tol = v;
    }
    if let Some(v) = cap {
        cfg.divergence_cap = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Setup {
    weight: Weight,
    p: Exponent,
    cfg: QuadratureConfig,
    structure: DegeneracyStructure,
}

impl Setup {
    fn new(c: &Common) -> CliResult<Self> {
        let p = Exponent::new(c.p)?;
        let cfg = config(c.rel_tol, c.abs_tol, c.divergence_cap)?;
        let weight = parse_weight(&c.weight, p)?;
        let structure = detect_structure(&weight, p, &cfg)?;
        Ok(Setup {
            weight,
            p,
            cfg,
            structure,
        })
    }

    fn aux(&self) -> CliResult<AuxWeight> {
        Ok(build_aux_weight(&self.weight, &self.structure, self.p, &self.cfg)?)
    }
}

fn parse_params(s: &str) -> CliResult<HashMap<String, f64>> {
    let mut out = HashMap::new();
    for kv in s.split(',').filter(|t| !t.trim().is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("expected key=value, got `{kv}`")))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::Input(format!("`{v}` is not a number")))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

fn param(map: &HashMap<String, f64>, key: &str, family: &str) -> CliResult<f64> {
    map.get(key)
        .copied()
        .ok_or_else(|| CliError::Input(format!("weight `{family}` needs `{key}=`")))
}

/// Reads an `x,w` CSV (extra columns are ignored).
pub fn read_grid_csv(path: &Path) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::Input(format!("{}: missing `{name}` column", path.display())))
    };
    let (ix, iw) = (col("x")?, col("w")?);
    let (mut xs, mut ws) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> CliResult<f64> {
            rec.get(i)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| CliError::Input(format!("{}: bad number in row {:?}", path.display(), rec)))
        };
        xs.push(num(ix)?);
        ws.push(num(iw)?);
    }
    Ok((xs, ws))
}

pub fn parse_weight(spec: &str, p: Exponent) -> CliResult<Weight> {
    let path = Path::new(spec);
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext.eq_ignore_ascii_case("csv") {
        let (xs, ws) = read_grid_csv(path)?;
        return Ok(Weight::grid(xs, ws)?.with_label(spec.to_string()));
    }
    if ext.eq_ignore_ascii_case("json") {
        let text = std::fs::read_to_string(path)?;
        let mut ws: WeightSpec = serde_json::from_str(&text)?;
        if let WeightSpec::Grid { x, w, csv: Some(file) } = &mut ws {
            if x.is_empty() {
                let file = path.parent().unwrap_or(Path::new(".")).join(&*file);
                (*x, *w) = read_grid_csv(&file)?;
            }
        }
        return Ok(ws.build(Some(p))?);
    }
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let params = parse_params(rest)?;
    let w = match name {
        "figure1" => builtins::figure1(),
        "power" => builtins::power(param(&params, "alpha", name)?)?,
        "cascade" => {
            let m = param(&params, "M", name)?;
            if m.fract() != 0.0 || m < 1.0 {
                return Err(CliError::Input(format!("M must be a positive integer, got {m}")));
            }
            builtins::cascade(param(&params, "alpha", name)?, p, m as usize)?
        }
        "constant" => {
            let a = params.get("a").copied().unwrap_or(0.0);
            let b = params.get("b").copied().unwrap_or(1.0);
            builtins::constant(Interval::new(a, b)?, param(&params, "value", name)?)?
        }
        other => return Err(CliError::Input(format!("unknown weight `{other}`"))),
    };
    Ok(w)
}

pub fn parse_function(spec: &str, s: &DegeneracyStructure) -> CliResult<TestFunction> {
    let (name, rest) = spec
        .split_once(':')
        .ok_or_else(|| CliError::Input(format!("function spec `{spec}` needs `kind:args`")))?;
    let nums = || -> CliResult<Vec<f64>> {
        rest.split(',')
            .map(|t| {
                t.trim()
                    .parse()
                    .map_err(|_| CliError::Input(format!("`{t}` is not a number")))
            })
            .collect()
    };
    let one = || -> CliResult<f64> {
        match nums()?.as_slice() {
            [z] => Ok(*z),
            _ => Err(CliError::Input(format!("`{spec}` takes one number"))),
        }
    };
    Ok(match name {
        "poly" => TestFunction::polynomial(nums()?).with_label(spec.to_string()),
        "log-dist" => TestFunction::log_distance(one()?),
        "sqrt-dist" => TestFunction::sqrt_distance(one()?),
        "random" => {
            let seed: u64 = rest
                .trim()
                .parse()
                .map_err(|_| CliError::Input(format!("`{rest}` is not a seed")))?;
            random_dom_w_seeded(s, seed, 0)?
        }
        other => return Err(CliError::Input(format!("unknown function kind `{other}`"))),
    })
}

fn sink(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit_json(c: &Common, command: &str, mut body: Value) -> CliResult<()> {
    let obj = body
        .as_object_mut()
        .expect("report bodies are JSON objects");
    obj.insert("schema_version".into(), json!(SCHEMA_VERSION));
    obj.insert("command".into(), json!(command));
    obj.insert("p".into(), json!(c.p));
    obj.insert("weight".into(), json!(c.weight));
    if !c.no_timestamp {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        obj.insert("generated_at_unix".into(), json!(secs));
    }
    let mut w = sink(c.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &body)?;
    writeln!(w)?;
    Ok(())
}

fn write_csv<R: Serialize>(path: Option<&Path>, rows: &[R]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(sink(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct IntervalSummary {
    a: f64,
    b: f64,
    left: Value,
    right: Value,
    left_value: f64,
    plateau: f64,
    right_value: f64,
    sup: f64,
}

fn analyze(c: &Common) -> CliResult<i32> {
    let st = Setup::new(c)?;
    let aux = st.aux()?;
    let bounds = aux_global_bounds(&aux);
    let intervals: Vec<IntervalSummary> = aux
        .intervals()
        .iter()
        .zip(&bounds.per_interval_sup)
        .map(|(ia, sup)| {
            Ok(IntervalSummary {
                a: ia.interval.a,
                b: ia.interval.b,
                left: serde_json::to_value(ia.interval.left)?,
                right: serde_json::to_value(ia.interval.right)?,
                left_value: ia.left_value,
                plateau: ia.plateau,
                right_value: ia.right_value,
                sup: *sup,
            })
        })
        .collect::<CliResult<_>>()?;
    let body = json!({
        "label": st.weight.label(),
        "n_w": st.structure.n_w,
        "intervals": intervals,
        "removable_zeros": st.structure.removable_zeros,
        "measure": st.structure.measure(),
        "truncated_accumulation": st.weight.is_truncated_accumulation(),
    });
    emit_json(c, "analyze", body)?;
    Ok(0)
}

#[derive(Serialize)]
struct AuxRow {
    x: f64,
    w: f64,
    w_hat: f64,
}

fn aux_csv(c: &Common, grid: usize) -> CliResult<i32> {
    if grid < 2 {
        return Err(CliError::Input("--grid needs at least 2 points".into()));
    }
    let st = Setup::new(c)?;
    let aux = st.aux()?;
    let d = st.weight.domain();
    let rows: Vec<AuxRow> = (0..grid)
        .map(|k| {
            let x = if k + 1 == grid {
                d.b
            } else {
                d.a + d.len() * k as f64 / (grid - 1) as f64
            };
            Ok(AuxRow {
                x,
                w: st.weight.eval(x)?,
                w_hat: aux.eval(x),
            })
        })
        .collect::<CliResult<_>>()?;
    write_csv(c.out.as_deref(), &rows)?;
    Ok(0)
}

fn poincare(c: &Common, battery: usize, function: Option<&str>, csv_path: Option<&Path>) -> CliResult<i32> {
    let st = Setup::new(c)?;
    let aux = st.aux()?;
    let limit = 1.0 + INEQUALITY_SLACK;
    if let Some(spec) = function {
        let u = parse_function(spec, &st.structure)?;
        let r = poincare_global_check(&u, &aux, &st.cfg)?;
        let ok = r.ratio <= limit;
        emit_json(c, "poincare", json!({ "function": spec, "report": r, "holds": ok }))?;
        return Ok(if ok { 0 } else { 1 });
    }
    if battery == 0 {
        return Err(CliError::Input("--battery must be positive".into()));
    }
    let r = poincare_battery(&[&aux], battery, c.seed, &st.cfg)?;
    if let Some(path) = csv_path {
        write_csv(Some(path), &r.cases)?;
    }
    let ok = r.worst_ratio <= limit;
    let worst = r.worst().cloned();
    emit_json(
        c,
        "poincare",
        json!({
            "seed": c.seed,
            "cases": r.cases.len(),
            "worst_ratio": r.worst_ratio,
            "worst_case": worst,
            "holds": ok,
        }),
    )?;
    Ok(if ok { 0 } else { 1 })
}

fn relax(c: &Common, function: &str) -> CliResult<i32> {
    let st = Setup::new(c)?;
    let aux = st.aux()?;
    let u = parse_function(function, &st.structure)?;
    let f = original_functional(&u, &st.weight, st.p, &st.cfg)?;
    let fbar = relaxed_functional(&u, &st.weight, &st.structure, st.p, &st.cfg)?;
    let membership = check_dom_w(&u, &st.weight, &st.structure, st.p, &st.cfg)?;
    let x_norm = lp_aux_norm(&u, &aux, &st.cfg)?;
    emit_json(
        c,
        "relax",
        json!({
            "function": function,
            "original": f,
            "relaxed": fbar,
            "in_dom_w": membership.in_dom_w,
            "per_interval": membership.per_interval,
            "x_norm": x_norm,
        }),
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct DiagRow {
    h: u32,
    x_err: f64,
    energy: f64,
    f_gap: f64,
}

fn approx(
    c: &Common,
    function: Option<&str>,
    h_max: u32,
    gap_tol: f64,
    csv_path: Option<&Path>,
    profiles: Option<&Path>,
    points: usize,
) -> CliResult<i32> {
    let st = Setup::new(c)?;
    let aux = st.aux()?;
    let default = format!("random:{}", c.seed);
    let spec = function.unwrap_or(&default);
    let u = parse_function(spec, &st.structure)?;
    let seq = build_approx_sequence(&u, &aux, h_max, &st.cfg)?;
    let criteria = RelaxationCriteria {
        final_gap_ratio: gap_tol,
        ..RelaxationCriteria::default()
    };
    let report = verify_relaxation(&seq, &criteria);
    if let Some(path) = csv_path {
        let rows: Vec<DiagRow> = report
            .rows
            .iter()
            .map(|d| DiagRow {
                h: d.h,
                x_err: d.x_err,
                energy: d.energy,
                f_gap: d.f_gap,
            })
            .collect();
        write_csv(Some(path), &rows)?;
    }
    if let Some(path) = profiles {
        let samples: Vec<Vec<(f64, f64, f64)>> = seq.members.iter().map(|m| m.profile(points)).collect();
        let mut w = csv::Writer::from_writer(sink(Some(path))?);
        let mut header = vec!["x".to_string(), "u".to_string()];
        header.extend(seq.members.iter().map(|m| format!("u_h{}", m.h)));
        w.write_record(&header)?;
        for k in 0..points.max(2) {
            let mut rec = vec![samples[0][k].0.to_string(), samples[0][k].2.to_string()];
            rec.extend(samples.iter().map(|s| s[k].1.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    emit_json(
        c,
        "approx",
        json!({
            "function": spec,
            "cases": seq.cases,
            "report": report,
        }),
    )?;
    Ok(if report.passes { 0 } else { 1 })
}

#[derive(Serialize)]
struct CascadeRow {
    i: usize,
    t_i: f64,
    partial_sum: f64,
    comparison: f64,
    ratio: f64,
}

fn cascade(alpha: f64, p: f64, m: usize, out: Option<&Path>, cfg: QuadratureConfig) -> CliResult<i32> {
    let r = cascade_partial_sums(alpha, Exponent::new(p)?, m, &cfg)?;
    let rows: Vec<CascadeRow> = (0..r.m)
        .map(|k| CascadeRow {
            i: k + 1,
            t_i: r.terms[k],
            partial_sum: r.partial_sums[k],
            comparison: r.comparison[k],
            ratio: r.ratios[k],
        })
        .collect();
    write_csv(out, &rows)?;
    Ok(0)
}
