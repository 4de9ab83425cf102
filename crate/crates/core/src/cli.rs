//! The `stochinf` command line.
//!
//! Exit codes: 0 success, 1 I/O, parse or usage errors, 2 mean-square
//! unstable system, 3 bracket failure. `STOCHINF_THREADS` caps the worker
//! pool used by `profile` and the Monte Carlo paths.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::hinf::{gamma_grid, profile, stoch_hinf_norm, NormOptions, NormReport};
use crate::io::{load_system, write_system};
use crate::operators::{ms_stable_oracle, stability_report, StochasticSystem, KRON_GUARD, POWER_MAXIT, POWER_TOL};
use crate::problems::{heat_system, random_system};
use crate::riccati::{InnerSolver, NewtonOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_UNSTABLE: i32 = 2;
pub const EXIT_BRACKET: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "stochinf", version, about = "Stochastic H-infinity norms of linear systems with multiplicative noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute the stochastic H-infinity norm
    Norm(NormArgs),
    /// Mean-square stability test
    Stability(SourceArgs),
    /// Spectral radius and abscissa of the Riccati derivative over a gamma grid (CSV)
    Profile(ProfileArgs),
    /// Write a generated system as MatrixMarket files plus manifest.json
    Gen(GenArgs),
    /// Heat and random benchmark table (CSV)
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SourceArgs {
    /// JSON manifest describing the system
    #[arg(long, conflicts_with = "gen", required_unless_present = "gen")]
    pub manifest: Option<PathBuf>,
    /// Built-in system: heat:K or random:N,M,P,SEED
    #[arg(long)]
    pub gen: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InnerArg {
    Krylov,
    FixedPoint,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Relative bisection tolerance
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Newton iteration cap per gamma
    #[arg(long, default_value_t = 50)]
    pub kmax: usize,
    /// Newton residual tolerance
    #[arg(long, default_value_t = 1e-10)]
    pub newton_tol: f64,
    /// Solver for the generalized Lyapunov equation in each Newton step
    #[arg(long, value_enum, default_value_t = InnerArg::Krylov)]
    pub inner: InnerArg,
    /// Stop Newton when an iterate violates the a priori solution bounds
    #[arg(long)]
    pub bound_checks: bool,
}

impl SolverArgs {
    fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            kmax: self.kmax,
            newton_tol: self.newton_tol,
            bound_checks: self.bound_checks,
            inner: match self.inner {
                InnerArg::Krylov => InnerSolver::Krylov,
                InnerArg::FixedPoint => InnerSolver::FixedPoint,
            },
            ..NewtonOptions::default()
        }
    }

    fn norm(&self) -> NormOptions {
        NormOptions {
            tol: self.tol,
            newton: self.newton(),
            ..NormOptions::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct NormArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Write the full report as JSON
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Smallest gamma (default 1.1 times the norm)
    #[arg(long)]
    pub gamma_min: Option<f64>,
    /// Largest gamma (default 6 times the norm)
    #[arg(long)]
    pub gamma_max: Option<f64>,
    #[arg(long, default_value_t = 50)]
    pub points: usize,
    /// Write CSV here instead of standard output
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// N,M,P,SEED
    #[arg(long, conflicts_with = "heat", required_unless_present = "heat")]
    pub random: Option<String>,
    /// Grid size K (n = K^2)
    #[arg(long)]
    pub heat: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Heat grid sizes
    #[arg(long, value_delimiter = ',', default_value = "5,6,7,8,9,10")]
    pub heat: Vec<usize>,
    /// Random system orders
    #[arg(long, value_delimiter = ',', default_value = "10,20,40")]
    pub random: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
}

fn bad_arg(msg: String) -> Error {
    Error::InvalidArgument(msg)
}

fn parse_list<T: std::str::FromStr>(text: &str, expected: usize, what: &str) -> Result<Vec<T>> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != expected {
        return Err(bad_arg(format!("{what}: expected {expected} comma-separated values, got '{text}'")));
    }
    parts
        .iter()
        .map(|p| p.parse::<T>().map_err(|_| bad_arg(format!("{what}: cannot parse '{p}'"))))
        .collect()
}

fn parse_heat(text: &str) -> Result<usize> {
    let k = parse_list::<usize>(text, 1, "heat")?[0];
    if k < 2 {
        return Err(bad_arg(format!("heat: grid size must be >= 2, got {k}")));
    }
    Ok(k)
}

fn parse_random(text: &str) -> Result<(usize, usize, usize, u64)> {
    let v = parse_list::<u64>(text, 4, "random")?;
    Ok((v[0] as usize, v[1] as usize, v[2] as usize, v[3]))
}

/// Builds a system from `heat:K` or `random:N,M,P,SEED`.
pub fn generate(spec: &str) -> Result<StochasticSystem> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| bad_arg(format!("generator spec '{spec}' should look like heat:5 or random:10,2,2,0")))?;
    match kind {
        "heat" => heat_system(parse_heat(rest)?),
        "random" => {
            let (n, m, p, seed) = parse_random(rest)?;
            random_system(n, m, p, seed)
        }
        _ => Err(bad_arg(format!("unknown generator '{kind}'"))),
    }
}

fn load(source: &SourceArgs) -> Result<StochasticSystem> {
    match (&source.manifest, &source.gen) {
        (Some(path), _) => load_system(path),
        (None, Some(spec)) => generate(spec),
        (None, None) => Err(bad_arg("either --manifest or --gen is required".into())),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::MsUnstable(_) => EXIT_UNSTABLE,
        Error::BracketFailure { .. } => EXIT_BRACKET,
        _ => EXIT_INPUT,
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|source| Error::Io {
            path: p.display().to_string(),
            source,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            // a closed pipe is not worth an error
            let _ = out.write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn summary(rep: &NormReport) -> String {
    let evals = rep.bracket_history.len();
    let newton: usize = rep.bracket_history.iter().map(|e| e.newton_iters).sum();
    format!(
        "norm      {:.6}\nbracket   [{:.10}, {:.10}]\ntol       {:e}\ndet_hinf  {:.6}\nnewton    {} runs, {} iterations\ntime      {:.3} s\n",
        rep.norm, rep.gamma_lo, rep.gamma_hi, rep.tol, rep.det_hinf, evals, newton, rep.timings.total_s
    )
}

fn cmd_norm(args: &NormArgs) -> Result<()> {
    let sys = load(&args.source)?;
    let rep = stoch_hinf_norm(&sys, &args.solver.norm())?;
    write_out(None, &summary(&rep))?;
    if let Some(path) = &args.json {
        write_out(Some(path), &rep.to_json())?;
    }
    Ok(())
}

fn cmd_stability(args: &SourceArgs) -> Result<i32> {
    let sys = load(args)?;
    let rep = stability_report(&sys.a, &sys.nx, POWER_TOL, POWER_MAXIT)?;
    let mut text = format!("abscissa(A)  {:.6e}\n", rep.abscissa);
    match &rep.power {
        Some(p) => text.push_str(&format!(
            "rho          {:.10} ({} iterations{})\n",
            p.rho,
            p.iterations,
            if p.converged { "" } else { ", not converged" }
        )),
        None => text.push_str("rho          -\n"),
    }
    let n2 = sys.n() * sys.n();
    if n2 <= KRON_GUARD {
        let oracle = ms_stable_oracle(&sys.a, &sys.nx)?;
        text.push_str(&format!("kronecker    {}\n", if oracle { "stable" } else { "unstable" }));
    } else {
        text.push_str(&format!("kronecker    skipped (n^2 = {n2} > {KRON_GUARD})\n"));
    }
    text.push_str(&format!(
        "verdict      {}\n",
        if rep.stable { "mean-square stable" } else { "not mean-square stable" }
    ));
    if let Some(reason) = &rep.reason {
        text.push_str(&format!("reason       {reason}\n"));
    }
    write_out(None, &text)?;
    Ok(if rep.stable { EXIT_OK } else { EXIT_UNSTABLE })
}

fn cmd_profile(args: &ProfileArgs) -> Result<()> {
    let sys = load(&args.source)?;
    let (lo, hi) = match (args.gamma_min, args.gamma_max) {
        (Some(lo), Some(hi)) => (lo, hi),
        (lo, hi) => {
            let norm = stoch_hinf_norm(&sys, &args.solver.norm())?.norm;
            (lo.unwrap_or(1.1 * norm), hi.unwrap_or(6.0 * norm))
        }
    };
    if !(lo > 0.0 && hi >= lo) {
        return Err(bad_arg(format!("bad gamma range [{lo}, {hi}]")));
    }
    let points = profile(&sys, &gamma_grid(lo, hi, args.points), &args.solver.newton())?;
    let mut csv = String::from("gamma,rho,alpha,status\n");
    for p in &points {
        csv.push_str(&format!("{:.12e},{:.12e},{:.12e},{}\n", p.gamma, p.rho, p.alpha, p.status));
    }
    write_out(args.out.as_deref(), &csv)
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let (sys, name, provenance) = match (&args.random, &args.heat) {
        (Some(spec), _) => {
            let (n, m, p, seed) = parse_random(spec)?;
            (
                random_system(n, m, p, seed)?,
                format!("random-{n}-{m}-{p}-{seed}"),
                format!("random_system({n}, {m}, {p}, {seed})"),
            )
        }
        (None, Some(spec)) => {
            let k = parse_heat(spec)?;
            (heat_system(k)?, format!("heat-{k}"), format!("heat_system({k})"))
        }
        (None, None) => return Err(bad_arg("either --random or --heat is required".into())),
    };
    let path = write_system(&args.out, &sys, &name, &provenance)?;
    write_out(None, &format!("{}\n", path.display()))
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let opts = args.solver.norm();
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "case,n,norm,det_hinf,gamma_evaluations,newton_iterations,seconds");
    let mut cases: Vec<(String, Box<dyn Fn() -> Result<StochasticSystem>>)> = Vec::new();
    for &k in &args.heat {
        cases.push((format!("heat:{k}"), Box::new(move || heat_system(k))));
    }
    for &n in &args.random {
        let seed = args.seed;
        cases.push((format!("random:{n}"), Box::new(move || random_system(n, 1, 1, seed))));
    }
    for (name, make) in cases {
        let sys = make()?;
        let t = Instant::now();
        let rep = stoch_hinf_norm(&sys, &opts)?;
        let secs = t.elapsed().as_secs_f64();
        let newton: usize = rep.bracket_history.iter().map(|e| e.newton_iters).sum();
        let _ = writeln!(
            out,
            "{name},{},{:.6},{:.6},{},{newton},{secs:.3}",
            sys.n(),
            rep.norm,
            rep.det_hinf,
            rep.bracket_history.len()
        );
        let _ = out.flush();
    }
    Ok(())
}

fn configure_threads() {
    if let Ok(v) = std::env::var("STOCHINF_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                // fails only if a pool already exists, which is fine
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("stochinf: ignoring STOCHINF_THREADS={v:?}"),
        }
    }
}

/// Runs one command and returns its exit code. Diagnostics go to standard
/// error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    configure_threads();
    let result = match &cli.command {
        Command::Norm(a) => cmd_norm(a).map(|_| EXIT_OK),
        Command::Stability(a) => cmd_stability(a),
        Command::Profile(a) => cmd_profile(a).map(|_| EXIT_OK),
        Command::Gen(a) => cmd_gen(a).map(|_| EXIT_OK),
        Command::Bench(a) => cmd_bench(a).map(|_| EXIT_OK),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("stochinf: {e}");
            exit_code(&e)
        }
    }
}
