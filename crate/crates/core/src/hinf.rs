//! Stochastic H∞-norm by bisection over `γ`.
//!
//! A level `γ` lies above the norm exactly when Newton's method on `R_γ`
//! started from zero converges to a stabilizing solution. The bracket is
//! seeded with the deterministic H∞-norm of `(A, B, C, D)`, a lower bound.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, operator_2norm, spectral_abscissa, Matrix};
use crate::operators::{is_ms_stable, StochasticSystem, KRON_GUARD};
use crate::riccati::{
    det_hamiltonian, has_imaginary_eigenvalue, newton_solve_with, BoundChecker, NewtonOptions,
    NewtonOutcome, NewtonStatus, RiccatiProblem,
};

pub const DEFAULT_TOL: f64 = 1e-4;
pub const DET_TOL: f64 = 1e-9;
pub const MAX_DOUBLINGS: usize = 60;
/// Replaces a zero deterministic bound when seeding the bracket.
pub const GAMMA_FLOOR: f64 = 1e-12;
/// Candidate levels stay above `‖D‖₂·(1 + D_MARGIN)`.
pub const D_MARGIN: f64 = 1e-9;

fn transfer_sigma_max(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix, omega: f64) -> Result<f64> {
    use nalgebra::{Complex, DMatrix};
    let n = a.nrows();
    let z = DMatrix::<Complex<f64>>::from_fn(n, n, |i, j| {
        let re = -a[(i, j)];
        let im = if i == j { omega } else { 0.0 };
        Complex::new(re, im)
    });
    let bc = b.map(|v| Complex::new(v, 0.0));
    let x = z.lu().solve(&bc).ok_or(Error::Singular {
        context: "transfer function evaluation",
    })?;
    let g = c.map(|v| Complex::new(v, 0.0)) * x + d.map(|v| Complex::new(v, 0.0));
    Ok(g.singular_values().max())
}

/// `σ_max(C(iωI - A)⁻¹B + D)`.
pub fn transfer_gain(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix, omega: f64) -> Result<f64> {
    transfer_sigma_max(a, b, c, d, omega)
}

/// H∞-norm of `G(s) = C(sI - A)⁻¹B + D` to relative tolerance `tol`.
pub fn det_hinf_norm(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix, tol: f64) -> Result<f64> {
    let abscissa = spectral_abscissa(a)?;
    if abscissa >= 0.0 {
        return Err(Error::NotHurwitz { abscissa });
    }
    let d_norm = operator_2norm(d)?;
    if c.iter().all(|v| *v == 0.0) || b.iter().all(|v| *v == 0.0) {
        return Ok(d_norm);
    }
    // lower bound from a few frequencies
    let mut lo = d_norm;
    let mut probes = vec![0.0];
    probes.extend(eigenvalues(a)?.iter().map(|z| z.im.abs()).filter(|w| *w > 0.0));
    for w in probes {
        lo = lo.max(transfer_sigma_max(a, b, c, d, w)?);
    }
    let bounded = |g: f64| -> Result<bool> {
        Ok(!has_imaginary_eigenvalue(&det_hamiltonian(a, b, c, d, g)?)?)
    };
    let mut hi = if lo > 0.0 { 2.0 * lo } else { 1.0 };
    let mut tries = 0;
    while !bounded(hi)? {
        lo = hi;
        hi *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(Error::NonConverged {
                iterations: tries,
                residual: hi,
            });
        }
    }
    let mut steps = 0;
    while hi - lo > tol * hi && steps < 2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= d_norm {
            lo = mid;
        } else if bounded(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
        steps += 1;
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormOptions {
    /// Relative bisection tolerance: stop once `γ₁ - γ₀ < tol·γ₁`.
    pub tol: f64,
    pub newton: NewtonOptions,
    pub max_doublings: usize,
    pub det_tol: f64,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions {
            tol: DEFAULT_TOL,
            newton: NewtonOptions::default(),
            max_doublings: MAX_DOUBLINGS,
            det_tol: DET_TOL,
        }
    }
}

impl NormOptions {
    pub fn with_tol(tol: f64) -> Self {
        NormOptions {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Bracket,
    Bisect,
}

/// One Newton run at a trial level.
#[derive(Clone, Debug, Serialize)]
pub struct BracketEntry {
    pub gamma: f64,
    pub status: NewtonStatus,
    pub newton_iters: usize,
    pub residual: f64,
    #[serde(skip)]
    pub phase: Phase,
    #[serde(skip)]
    pub outcome: NewtonOutcome,
}

impl BracketEntry {
    pub fn converged(&self) -> bool {
        self.status == NewtonStatus::Converged
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub stability_s: f64,
    pub det_hinf_s: f64,
    pub bracket_s: f64,
    pub bisection_s: f64,
    pub total_s: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormReport {
    pub norm: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub tol: f64,
    pub det_hinf: f64,
    pub bracket_history: Vec<BracketEntry>,
    pub timings: Timings,
}

impl NormReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn converged_entries(&self) -> impl Iterator<Item = &BracketEntry> {
        self.bracket_history.iter().filter(|e| e.converged())
    }
}

struct Evaluator<'a> {
    sys: &'a StochasticSystem,
    opts: &'a NewtonOptions,
    bounds: Option<BoundChecker>,
    floor: f64,
}

impl<'a> Evaluator<'a> {
    fn new(sys: &'a StochasticSystem, opts: &'a NewtonOptions) -> Result<Self> {
        let bounds = if opts.bound_checks {
            Some(BoundChecker::new(sys)?)
        } else {
            None
        };
        let floor = operator_2norm(&sys.d)? * (1.0 + D_MARGIN);
        Ok(Evaluator {
            sys,
            opts,
            bounds,
            floor,
        })
    }

    fn run(&self, gamma: f64, phase: Phase) -> Result<BracketEntry> {
        let gamma = gamma.max(self.floor);
        let prob = RiccatiProblem::with_gamma(self.sys, gamma)?;
        let outcome = newton_solve_with(&prob, self.opts, self.bounds.as_ref())?;
        Ok(BracketEntry {
            gamma,
            status: outcome.status,
            newton_iters: outcome.iterations,
            residual: outcome.final_residual(),
            phase,
            outcome,
        })
    }
}

fn bracket_from(
    eval: &Evaluator<'_>,
    seed: f64,
    max_doublings: usize,
    history: &mut Vec<BracketEntry>,
) -> Result<(f64, f64)> {
    let mut g0 = if seed > 0.0 { seed } else { GAMMA_FLOOR };
    g0 = g0.max(eval.floor);
    for _ in 0..max_doublings {
        let g1 = 2.0 * g0;
        let entry = eval.run(g1, Phase::Bracket)?;
        let ok = entry.converged();
        let g1 = entry.gamma;
        history.push(entry);
        if ok {
            return Ok((g0, g1));
        }
        g0 = g1;
    }
    Err(Error::BracketFailure {
        doublings: max_doublings,
    })
}

/// Levels `γ₀ < ‖L‖ ≤ γ₁`, where `γ₀` starts at the deterministic norm and
/// is doubled until Newton converges at `γ₁ = 2γ₀`.
pub fn gamma_bracket(sys: &StochasticSystem, opts: &NormOptions) -> Result<(f64, f64)> {
    if !is_ms_stable(sys)? {
        return Err(Error::MsUnstable("bracketing needs a mean-square stable system".into()));
    }
    let det = det_hinf_norm(&sys.a, &sys.b, &sys.c, &sys.d, opts.det_tol)?;
    let eval = Evaluator::new(sys, &opts.newton)?;
    bracket_from(&eval, det, opts.max_doublings, &mut Vec::new())
}

/// Stochastic H∞-norm of `sys`.
pub fn stoch_hinf_norm(sys: &StochasticSystem, opts: &NormOptions) -> Result<NormReport> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let start = Instant::now();
    let mut timings = Timings::default();

    let t = Instant::now();
    if !is_ms_stable(sys)? {
        return Err(Error::MsUnstable(
            "the pair (A, Nx) fails the mean-square stability test".into(),
        ));
    }
    timings.stability_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let det = det_hinf_norm(&sys.a, &sys.b, &sys.c, &sys.d, opts.det_tol)?;
    timings.det_hinf_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let eval = Evaluator::new(sys, &opts.newton)?;
    let mut history = Vec::new();
    let (mut g0, mut g1) = bracket_from(&eval, det, opts.max_doublings, &mut history)?;
    timings.bracket_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    while g1 - g0 >= opts.tol * g1 {
        let entry = eval.run(0.5 * (g0 + g1), Phase::Bisect)?;
        if entry.converged() {
            g1 = entry.gamma;
        } else {
            g0 = entry.gamma;
        }
        history.push(entry);
    }
    timings.bisection_s = t.elapsed().as_secs_f64();
    timings.total_s = start.elapsed().as_secs_f64();

    Ok(NormReport {
        norm: 0.5 * (g0 + g1),
        gamma_lo: g0,
        gamma_hi: g1,
        tol: opts.tol,
        det_hinf: det,
        bracket_history: history,
        timings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMethod {
    /// Eigenvalues of the `n² × n²` Kronecker matrix.
    Kronecker,
    /// Shift bisection with the power method.
    Bisection,
}

/// `ρ` and `α` of the Riccati derivative at the stabilizing solution.
#[derive(Clone, Debug, Serialize)]
pub struct ProfilePoint {
    pub gamma: f64,
    pub rho: f64,
    pub alpha: f64,
    pub status: NewtonStatus,
    pub alpha_method: AlphaMethod,
}

/// Evaluates each level independently (in parallel). Newton failures are
/// recorded in `status` with `rho = alpha = NaN`.
pub fn profile(sys: &StochasticSystem, gammas: &[f64], opts: &NewtonOptions) -> Result<Vec<ProfilePoint>> {
    let method = if sys.n() * sys.n() <= KRON_GUARD {
        AlphaMethod::Kronecker
    } else {
        AlphaMethod::Bisection
    };
    let eval = Evaluator::new(sys, opts)?;
    gammas
        .par_iter()
        .map(|&g| {
            let entry = eval.run(g, Phase::Bisect)?;
            let mut point = ProfilePoint {
                gamma: entry.gamma,
                rho: f64::NAN,
                alpha: f64::NAN,
                status: entry.status,
                alpha_method: method,
            };
            if entry.converged() {
                let prob = RiccatiProblem::with_gamma(sys, entry.gamma)?;
                let op = prob.frechet_operator(&entry.outcome.x)?;
                point.rho = entry.outcome.rho_final;
                point.alpha = match method {
                    AlphaMethod::Kronecker => op.kron_abscissa()?,
                    AlphaMethod::Bisection => op.abscissa_by_bisection(1e-10)?.unwrap_or(f64::NAN),
                };
            }
            Ok(point)
        })
        .collect()
}

/// `count` levels spaced evenly over `[lo, hi]`.
pub fn gamma_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}
