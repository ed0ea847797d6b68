//! `reldiff` command-line front end.
//!
//! Every subcommand prints a JSON run report on stdout. Exit status is 0 for
//! a true verdict, 3 for a false one, 1 on error and 2 on usage errors.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant as Clock;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use reldiff::controllability::{kappa, saturation_bound};
use reldiff::io::{delays_from_json, delays_to_json, instant_to_json, parse_system_value, plan_to_json, vector_to_json, AnySystem, SystemData};
use reldiff::scalar::{decimal_to_ratio, format_ratio, parse_ratio};
use reldiff::synthesis::{point_residual, tracking_residual, ExplicitSolver};
use reldiff::{
    ck_rank_condition, controllable_some_time, is_relatively_controllable, minimal_controllability_time,
    reduced_generator_check, synthesize_point_control, synthesize_tracking_control, transfer_controllability,
    DelayVector, Horizon, Instant, MinTime, PiecewisePolynomial, RankBackend, Real, Signal, TimePoint, TimeStamp,
    Vector, ZeroSignal,
};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Relative controllability of x(t) = Σ A_j x(t - Λ_j) + B u(t).
#[derive(Debug, Parser)]
#[command(name = "reldiff", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Span test over classes with Λ·n <= T.
    Check {
        system: PathBuf,
        #[arg(long)]
        time: String,
    },
    /// Span test over classes with Λ·n < T.
    CkCheck {
        system: PathBuf,
        #[arg(long)]
        time: String,
    },
    /// Minimal controllability time.
    Mintime { system: PathBuf },
    /// Control plan steering to a point (--target) or tracking x1 on [0, eps] (--track).
    Synthesize {
        system: PathBuf,
        #[arg(long)]
        time: String,
        /// Comma-separated target state, e.g. "1,2,3".
        #[arg(long, conflicts_with = "track")]
        target: Option<String>,
        /// Track the x1 signal of the system file.
        #[arg(long)]
        track: bool,
        /// Window width; defaults to half the gap radius.
        #[arg(long, requires = "track")]
        eps: Option<String>,
        /// Also write the plan to this file.
        #[arg(long)]
        plan_out: Option<PathBuf>,
    },
    /// Trajectory on [0, until] as CSV.
    Simulate {
        system: PathBuf,
        #[arg(long)]
        until: String,
        #[arg(long, default_value_t = 101)]
        samples: usize,
        /// Write the CSV here and the report on stdout.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Preorder between the delays of two files, with transfer at --time.
    Compare {
        system: PathBuf,
        #[arg(long)]
        other: PathBuf,
        #[arg(long)]
        time: Option<String>,
    },
    /// Reduced generator check against coarser delays.
    Reduce {
        system: PathBuf,
        #[arg(long)]
        other: PathBuf,
    },
    /// Commensurable surrogate delays preserving the class pattern up to --time.
    Surrogate {
        system: PathBuf,
        #[arg(long)]
        time: String,
        #[arg(long)]
        eps: String,
        #[arg(long, default_value_t = 100_000)]
        max_steps: u64,
    },
}

/// Result of one command before it is wrapped into a report.
struct Outcome {
    verdict: Option<bool>,
    body: Value,
}

impl Outcome {
    fn new(verdict: bool, body: Value) -> Self {
        Outcome { verdict: Some(verdict), body }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Clock::now();
    match run(&cli.command) {
        Ok((name, digest, outcome)) => {
            let report = json!({
                "command": name,
                "inputs_digest": digest,
                "verdict": outcome.verdict,
                "result": outcome.body,
                "timings": { "total_ms": start.elapsed().as_secs_f64() * 1e3 },
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            match outcome.verdict {
                Some(false) => ExitCode::from(3),
                _ => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: &Command) -> Result<(&'static str, String, Outcome)> {
    match command {
        Command::Check { system, time } => {
            let (sys, digest) = load(system, &[time])?;
            let t = parse_time(time)?;
            Ok(("check", digest, dispatch!(sys, |d| span(d, &t, false))?))
        }
        Command::CkCheck { system, time } => {
            let (sys, digest) = load(system, &[time])?;
            let t = parse_time(time)?;
            Ok(("ck-check", digest, dispatch!(sys, |d| span(d, &t, true))?))
        }
        Command::Mintime { system } => {
            let (sys, digest) = load(system, &[])?;
            Ok(("mintime", digest, dispatch!(sys, |d| mintime(d))?))
        }
        Command::Synthesize { system, time, target, track, eps, plan_out } => {
            let mut args = vec![time.as_str()];
            args.extend(target.as_deref());
            args.extend(eps.as_deref());
            if *track {
                args.push("--track");
            }
            let (sys, digest) = load(system, &args)?;
            let t = parse_time(time)?;
            let eps = eps.as_deref().map(parse_time).transpose()?;
            let outcome = dispatch!(sys, |d| synthesize(d, &t, target.as_deref(), *track, eps.as_ref()))?;
            if let Some(path) = plan_out {
                std::fs::write(path, serde_json::to_string_pretty(&outcome.body["plan"])?)
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
            Ok(("synthesize", digest, outcome))
        }
        Command::Simulate { system, until, samples, csv } => {
            let samples_text = samples.to_string();
            let (sys, digest) = load(system, &[until, &samples_text])?;
            let t = parse_time(until)?;
            if *samples < 2 {
                bail!("--samples must be at least 2");
            }
            let rows = dispatch!(sys, |d| simulate(d, &t, *samples))?;
            let target: Box<dyn Write> = match csv {
                Some(path) => Box::new(std::fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?),
                None => Box::new(std::io::stdout()),
            };
            write_csv(target, &rows)?;
            if csv.is_none() {
                std::process::exit(0);
            }
            Ok(("simulate", digest, Outcome::new(true, json!({ "samples": rows.len(), "csv": csv }))))
        }
        Command::Compare { system, other, time } => {
            let other_text = read(other)?;
            let mut args = vec![other_text.as_str()];
            args.extend(time.as_deref());
            let (sys, digest) = load(system, &args)?;
            let other_delays = parse_delays(&other_text)?;
            let t = time.as_deref().map(parse_time).transpose()?;
            Ok(("compare", digest, dispatch!(sys, |d| compare(d, &other_delays, t.as_ref()))?))
        }
        Command::Reduce { system, other } => {
            let other_text = read(other)?;
            let (sys, digest) = load(system, &[&other_text])?;
            let other_delays = parse_delays(&other_text)?;
            Ok(("reduce", digest, dispatch!(sys, |d| reduce(d, &other_delays))?))
        }
        Command::Surrogate { system, time, eps, max_steps } => {
            let steps = max_steps.to_string();
            let (sys, digest) = load(system, &[time, eps, &steps])?;
            let t = parse_time(time)?;
            let e = parse_time(eps)?.value();
            let surrogate = sys.delays().commensurable_surrogate(&t, e, *max_steps)?;
            let body = json!({
                "delays": delays_to_json(&surrogate),
                "values": surrogate.delays(),
                "original": sys.delays().delays(),
            });
            Ok(("surrogate", digest, Outcome::new(true, body)))
        }
    }
}

/// Runs a generic body on the exact or numeric system.
macro_rules! dispatch {
    ($sys:expr, |$d:ident| $body:expr) => {
        match &$sys {
            AnySystem::Exact($d) => $body,
            AnySystem::Numeric($d) => $body,
        }
    };
}
use dispatch;

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Parses the system file and digests it together with the arguments.
fn load(path: &Path, args: &[&str]) -> Result<(AnySystem, String)> {
    let text = read(path)?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", path.display()))?;
    let system = parse_system_value(&value)?;
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    for arg in args {
        hasher.update([0u8]);
        hasher.update(arg.as_bytes());
    }
    let digest = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Ok((system, digest))
}

/// Delays of another file: either a full system file or a bare delays object.
fn parse_delays(text: &str) -> Result<DelayVector> {
    let value: Value = serde_json::from_str(text).context("comparison file is not valid JSON")?;
    Ok(delays_from_json(value.get("delays").unwrap_or(&value))?)
}

/// Integers, "p/q" and decimals are read exactly.
fn parse_time(text: &str) -> Result<Instant> {
    let text = text.trim();
    parse_ratio(text)
        .or_else(|| decimal_to_ratio(text))
        .map(Instant::exact)
        .ok_or_else(|| anyhow!("`{text}` is not a number"))
}

fn backend<R: Real>() -> Result<RankBackend> {
    Ok(RankBackend::for_scalar::<R>().with_env_override()?)
}

/// `4 = 4/1 (exact)` or `≈ 1.4142 (coefficients [0, 1])`.
fn describe(stamp: &TimeStamp) -> String {
    match stamp.exact() {
        Some(q) => format!("{} = {}/{} (exact)", stamp.value(), q.numer(), q.denom()),
        None => format!("≈ {} (coefficients {:?})", stamp.value(), stamp.coeffs()),
    }
}

fn stamp_json(stamp: &TimeStamp) -> Value {
    json!({
        "coeffs": stamp.coeffs(),
        "value": stamp.value(),
        "exact": stamp.exact().map(format_ratio),
        "text": describe(stamp),
    })
}

fn span<R: Real>(data: &SystemData<R>, t: &Instant, strict: bool) -> Result<Outcome> {
    let backend = backend::<R>()?;
    let h = Horizon::Real(t.clone());
    let report = if strict {
        ck_rank_condition(&data.system, &data.delays, &h, &backend)?
    } else {
        is_relatively_controllable(&data.system, &data.delays, &h, &backend)?
    };
    Ok(Outcome::new(report.controllable, json!({ "time": instant_to_json(t), "report": report })))
}

fn mintime<R: Real>(data: &SystemData<R>) -> Result<Outcome> {
    let backend = backend::<R>()?;
    let bound = saturation_bound(data.system.dim(), &data.delays);
    Ok(match minimal_controllability_time(&data.system, &data.delays, &backend)? {
        MinTime::Controllable(t) => {
            Outcome::new(true, json!({ "minimal_time": stamp_json(&t), "bound": stamp_json(&bound) }))
        }
        MinTime::NotControllable { rank } => Outcome::new(
            false,
            json!({ "minimal_time": null, "rank": rank, "dim": data.system.dim(), "bound": stamp_json(&bound) }),
        ),
    })
}

fn parse_target<R: Real>(text: &str, dim: usize) -> Result<Vector<R>> {
    let entries = text
        .split(',')
        .map(|part| parse_time(part).map(|t| reldiff::scalar::real(reldiff::signal::instant_to_real::<R>(&t))))
        .collect::<Result<Vec<_>>>()?;
    if entries.len() != dim {
        bail!("target has {} entries, state has {dim}", entries.len());
    }
    Ok(Vector::from_vec(entries))
}

/// The file's initial condition, or zero on [-Λ_max, 0].
fn initial_condition<R: Real>(data: &SystemData<R>) -> Result<PiecewisePolynomial<R>> {
    if let Some(x0) = &data.x0 {
        return Ok(x0.clone());
    }
    let lmax = Instant::from_stamp(&data.delays.max_delay().1);
    Ok(PiecewisePolynomial::constant(&reldiff::linalg::zero_vector(data.system.dim()), Instant::zero().minus(&lmax), Instant::zero())?)
}

fn synthesize<R: Real>(
    data: &SystemData<R>,
    t: &Instant,
    target: Option<&str>,
    track: bool,
    eps: Option<&Instant>,
) -> Result<Outcome> {
    let backend = backend::<R>()?;
    let (sys, lambda) = (&data.system, &data.delays);
    let x0 = initial_condition(data)?;
    if track {
        let x1 = data.x1.as_ref().ok_or_else(|| anyhow!("--track needs an x1 signal in the system file"))?;
        let eps0 = lambda.epsilon0(&Horizon::Real(t.clone()));
        let eps = match eps {
            Some(e) => e.clone(),
            None => match (R::EXACT, decimal_to_ratio(&(eps0 / 2.0).to_string())) {
                (true, Some(q)) => Instant::exact(q),
                _ => Instant::numeric(eps0 / 2.0),
            },
        };
        let outcome = synthesize_tracking_control(sys, lambda, &x0, x1, t, &eps, &backend)?;
        let residual = tracking_residual(sys, lambda, &x0, &outcome.plan, x1, 11)?;
        for w in &outcome.warnings {
            eprintln!("warning: {w}");
        }
        let ok = residual <= 1e-9;
        Ok(Outcome::new(
            ok,
            json!({
                "plan": plan_to_json(&outcome.plan),
                "epsilon0": outcome.epsilon0,
                "residual": residual,
                "segments_disjoint": outcome.plan.segments_disjoint(),
                "warnings": outcome.warnings,
            }),
        ))
    } else {
        let x1 = match target {
            Some(text) => parse_target::<R>(text, sys.dim())?,
            None => match &data.x1 {
                Some(signal) => signal.eval(&TimePoint::plain(Instant::zero())),
                None => bail!("give --target, --track, or an x1 signal in the system file"),
            },
        };
        let plan = synthesize_point_control(sys, lambda, &x0, &x1, t, &backend)?;
        let residual = point_residual(sys, lambda, &x0, &plan, &x1)?;
        Ok(Outcome::new(
            residual <= 1e-9,
            json!({ "plan": plan_to_json(&plan), "target": vector_to_json(&x1), "residual": residual }),
        ))
    }
}

/// Sample time `until · i / (samples - 1)`, exact when `until` is.
fn sample_time(until: &Instant, i: usize, samples: usize) -> Instant {
    reldiff::synthesis::sample_offset(until, i, samples - 1)
}

/// Sample time with the state as (re, im) pairs.
type Row = (f64, Vec<(f64, f64)>);

fn simulate<R: Real>(data: &SystemData<R>, until: &Instant, samples: usize) -> Result<Vec<Row>> {
    let x0 = initial_condition(data)?;
    let zero = ZeroSignal { dim: data.system.inputs() };
    let u: &dyn Signal<R> = match &data.u {
        Some(u) => u,
        None => &zero,
    };
    let mut solver = ExplicitSolver::new(&data.system, &data.delays)?;
    (0..samples)
        .map(|i| {
            let t = sample_time(until, i, samples);
            let x = solver.solve(&x0, u, &t)?;
            Ok((t.value(), x.iter().map(|z| (z.re.to_f64(), z.im.to_f64())).collect()))
        })
        .collect()
}

fn write_csv(target: Box<dyn Write>, rows: &[Row]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(target);
    let dim = rows.first().map_or(0, |r| r.1.len());
    let mut header = vec!["t".to_string()];
    for k in 1..=dim {
        header.push(format!("x{k}_re"));
        header.push(format!("x{k}_im"));
    }
    writer.write_record(&header)?;
    for (t, x) in rows {
        let mut record = vec![t.to_string()];
        for (re, im) in x {
            record.push(re.to_string());
            record.push(im.to_string());
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

fn compare<R: Real>(data: &SystemData<R>, other: &DelayVector, t: Option<&Instant>) -> Result<Outcome> {
    let lambda = &data.delays;
    let below = lambda.preorder_leq(other)?;
    let above = other.preorder_leq(lambda)?;
    let mut body = json!({
        "below": below,
        "above": above,
        "equivalent": below && above,
        "other": delays_to_json(other),
    });
    if below {
        body["kappa"] = instant_to_json(&kappa(lambda, other));
    }
    if let (Some(t), true) = (t, below) {
        let transfer = transfer_controllability(&data.system, lambda, other, t, &backend::<R>()?)?;
        body["transfer"] = json!({
            "time": instant_to_json(t),
            "target_time": instant_to_json(&t.scale(&transfer.kappa)),
            "source": transfer.source,
            "target": transfer.target,
        });
    }
    Ok(Outcome::new(below, body))
}

fn reduce<R: Real>(data: &SystemData<R>, other: &DelayVector) -> Result<Outcome> {
    let backend = backend::<R>()?;
    let reduced = reduced_generator_check(&data.system, &data.delays, other, &backend)?;
    let direct = controllable_some_time(&data.system, &data.delays, &backend)?;
    let agree = reduced.controllable == direct.controllable;
    Ok(Outcome::new(
        reduced.controllable,
        json!({ "reduced": reduced, "saturation": direct, "agree": agree }),
    ))
}
