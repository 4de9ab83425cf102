//! The parametrized Riccati map and its Newton iteration.
//!
//! For a system with noise channels `(N_{x,j}, N_{u,j})`:
//!
//! ```text
//! P(X)   = AᵀX + XA + Σ N_{x,j}ᵀ X N_{x,j} - CᵀC
//! S(X)   = BᵀX + Σ N_{u,j}ᵀ X N_{x,j} - DᵀC
//! Q_γ(X) = Σ N_{u,j}ᵀ X N_{u,j} + γ²I - DᵀD
//! R_γ(X) = P(X) - S(X)ᵀ Q_γ(X)⁻¹ S(X)
//! ```
//!
//! With `K = Q_γ(X)⁻¹S(X)` the derivative of `R_γ` at `X` is the generalized
//! Lyapunov operator with drift `A - BK` and noise `N_{x,j} - N_{u,j}K`.
//! Newton's method from `X₀ = 0` converges monotonically to the stabilizing
//! solution whenever `γ` exceeds the stochastic H∞-norm.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::glyap::{fixed_point_with, gmres_with, FIXED_POINT_MAXIT, FIXED_POINT_TOL};
use crate::linalg::{
    operator_2norm, pseudoinverse, spd_solve, spectral_abscissa, sym_eig, LyapunovSolver, Matrix,
    SymMatrix, DEFAULT_RANK_TOL,
};
use crate::operators::{
    is_ms_stable, power_with_solver, GLyapOperator, StochasticSystem, POWER_MAXIT, POWER_TOL,
    STABILITY_MARGIN,
};

pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_KMAX: usize = 50;

/// `Q_γ(X)` counts as positive definite when `λ_min > Q_PD_TOL · ‖Q_γ‖`.
pub const Q_PD_TOL: f64 = 1e-12;

/// Iterates whose norm exceeds this multiple of `1 + ‖R_γ(0)‖` are treated
/// as diverging.
pub const DIVERGENCE_FACTOR: f64 = 1e12;

/// `R_γ` for a fixed system and level `γ > ‖D‖₂`.
#[derive(Clone, Copy, Debug)]
pub struct RiccatiProblem<'a> {
    sys: &'a StochasticSystem,
    gamma: f64,
}

impl<'a> RiccatiProblem<'a> {
    /// Checks `γ > ‖D‖₂` and mean-square stability of `(A, Nx)`.
    pub fn new(sys: &'a StochasticSystem, gamma: f64) -> Result<Self> {
        if !is_ms_stable(sys)? {
            return Err(Error::MsUnstable(
                "Riccati problem needs a mean-square stable pair (A, N)".into(),
            ));
        }
        Self::with_gamma(sys, gamma)
    }

    /// Checks only `γ > ‖D‖₂`; stability is the caller's business.
    pub fn with_gamma(sys: &'a StochasticSystem, gamma: f64) -> Result<Self> {
        let d_norm = operator_2norm(&sys.d)?;
        if !(gamma > d_norm) || !gamma.is_finite() {
            return Err(Error::GammaTooSmall { gamma, d_norm });
        }
        Ok(RiccatiProblem { sys, gamma })
    }

    pub fn system(&self) -> &'a StochasticSystem {
        self.sys
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn q_gamma(&self, x: &SymMatrix) -> SymMatrix {
        let m = self.sys.m();
        let mut q = Matrix::identity(m, m) * (self.gamma * self.gamma)
            - self.sys.d.transpose() * &self.sys.d;
        for nu in &self.sys.nu {
            q += nu.transpose() * x.as_matrix() * nu;
        }
        SymMatrix::new(q)
    }

    pub fn s_of(&self, x: &SymMatrix) -> Matrix {
        let sys = self.sys;
        let mut s = sys.b.transpose() * x.as_matrix() - sys.d.transpose() * &sys.c;
        for (nx, nu) in sys.nx.iter().zip(&sys.nu) {
            s += nu.transpose() * x.as_matrix() * nx;
        }
        s
    }

    pub fn p_of(&self, x: &SymMatrix) -> SymMatrix {
        let sys = self.sys;
        let xa = x.as_matrix() * &sys.a;
        let mut p = xa.transpose() + xa - sys.c.transpose() * &sys.c;
        for nx in &sys.nx {
            p += nx.transpose() * x.as_matrix() * nx;
        }
        SymMatrix::new(p)
    }

    fn checked_q(&self, x: &SymMatrix) -> Result<SymMatrix> {
        let q = self.q_gamma(x);
        let (vals, _) = sym_eig(&q)?;
        let lo = vals.first().copied().unwrap_or(1.0);
        let hi = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if lo <= Q_PD_TOL * hi {
            return Err(Error::QIndefinite { min_eig: lo });
        }
        Ok(q)
    }

    /// `K = Q_γ(X)⁻¹ S(X)`, so that the closed-loop drift is `A - BK`.
    pub fn gain(&self, x: &SymMatrix) -> Result<Matrix> {
        let q = self.checked_q(x)?;
        spd_solve(&q, &self.s_of(x))
    }

    pub fn riccati_eval(&self, x: &SymMatrix) -> Result<SymMatrix> {
        let q = self.checked_q(x)?;
        let s = self.s_of(x);
        let k = spd_solve(&q, &s)?;
        let p = self.p_of(x);
        Ok(SymMatrix::new(p.as_matrix() - s.transpose() * k))
    }

    /// The single-noise formula
    /// `AᵀX + XA + NᵀXN - CᵀC - (BᵀX - DᵀC)ᵀ(γ²I - DᵀD)⁻¹(BᵀX - DᵀC)`,
    /// summed over state noise terms. Only valid without input noise.
    pub fn riccati_eval_basic(&self, x: &SymMatrix) -> Result<SymMatrix> {
        if self.sys.has_input_noise() {
            return Err(Error::InvalidArgument(
                "basic Riccati formula needs Nu = 0".into(),
            ));
        }
        let sys = self.sys;
        let m = sys.m();
        let r = SymMatrix::new(
            Matrix::identity(m, m) * (self.gamma * self.gamma) - sys.d.transpose() * &sys.d,
        );
        let s = sys.b.transpose() * x.as_matrix() - sys.d.transpose() * &sys.c;
        let rinv_s = spd_solve(&r, &s)?;
        let mut out = sys.a.transpose() * x.as_matrix() + x.as_matrix() * &sys.a
            - sys.c.transpose() * &sys.c
            - s.transpose() * rinv_s;
        for n in &sys.nx {
            out += n.transpose() * x.as_matrix() * n;
        }
        Ok(SymMatrix::new(out))
    }

    /// `(γ²I - DᵀD)⁻¹(BᵀX - DᵀC)`; only valid without input noise.
    pub fn gain_basic(&self, x: &SymMatrix) -> Result<Matrix> {
        if self.sys.has_input_noise() {
            return Err(Error::InvalidArgument(
                "basic gain formula needs Nu = 0".into(),
            ));
        }
        let sys = self.sys;
        let m = sys.m();
        let r = SymMatrix::new(
            Matrix::identity(m, m) * (self.gamma * self.gamma) - sys.d.transpose() * &sys.d,
        );
        spd_solve(&r, &(sys.b.transpose() * x.as_matrix() - sys.d.transpose() * &sys.c))
    }

    /// Derivative of `R_γ` at `X` as a generalized Lyapunov operator.
    pub fn frechet_operator(&self, x: &SymMatrix) -> Result<GLyapOperator> {
        let k = self.gain(x)?;
        let sys = self.sys;
        let ac = &sys.a - &sys.b * &k;
        let njs = sys
            .nx
            .iter()
            .zip(&sys.nu)
            .map(|(nx, nu)| nx - nu * &k)
            .collect();
        GLyapOperator::new(ac, njs)
    }

    /// The block matrix `[[P(X), S(X)ᵀ], [S(X), Q_γ(X)]]`, whose Schur
    /// complement is `R_γ(X)`.
    pub fn lmi_block(&self, x: &SymMatrix) -> SymMatrix {
        let n = self.sys.n();
        let m = self.sys.m();
        let mut blk = Matrix::zeros(n + m, n + m);
        let s = self.s_of(x);
        blk.view_mut((0, 0), (n, n)).copy_from(self.p_of(x).as_matrix());
        blk.view_mut((n, 0), (m, n)).copy_from(&s);
        blk.view_mut((0, n), (n, m)).copy_from(&s.transpose());
        blk.view_mut((n, n), (m, m))
            .copy_from(self.q_gamma(x).as_matrix());
        SymMatrix::new(blk)
    }
}

/// How each Newton step's generalized Lyapunov equation is solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum InnerSolver {
    FixedPoint,
    /// Restarted GMRES on the `L_Ac`-preconditioned equation.
    Krylov,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonOptions {
    pub kmax: usize,
    pub newton_tol: f64,
    pub bound_checks: bool,
    pub inner: InnerSolver,
    pub inner_tol: f64,
    pub inner_maxit: usize,
    pub power_tol: f64,
    pub power_maxit: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            kmax: NEWTON_KMAX,
            newton_tol: NEWTON_TOL,
            bound_checks: false,
            inner: InnerSolver::Krylov,
            inner_tol: FIXED_POINT_TOL,
            inner_maxit: FIXED_POINT_MAXIT,
            power_tol: POWER_TOL,
            power_maxit: POWER_MAXIT,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NewtonStatus {
    Converged,
    StabilityLost,
    MaxIter,
    BoundViolated,
    QIndefinite,
}

impl NewtonStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            NewtonStatus::Converged => "Converged",
            NewtonStatus::StabilityLost => "StabilityLost",
            NewtonStatus::MaxIter => "MaxIter",
            NewtonStatus::BoundViolated => "BoundViolated",
            NewtonStatus::QIndefinite => "QIndefinite",
        }
    }
}

impl std::fmt::Display for NewtonStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Diagnostics of one Newton update `X_{k+1} = X_k + Δ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NewtonStep {
    pub k: usize,
    /// `‖R_γ(X_k)‖_F`.
    pub residual: f64,
    /// `λ_max(R_γ(X_k))`; nonpositive for `k ≥ 1` in exact arithmetic.
    pub riccati_max_eig: f64,
    /// `λ_max(X_{k+1} - X_k)`; nonpositive for `k ≥ 1` in exact arithmetic.
    pub increment_max_eig: f64,
    pub rho: f64,
    pub alpha: f64,
    pub inner_iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonOutcome {
    pub status: NewtonStatus,
    /// Last iterate.
    pub x: SymMatrix,
    /// Number of Newton updates performed.
    pub iterations: usize,
    /// `‖R_γ(X_k)‖_F` for every evaluated iterate.
    pub residuals: Vec<f64>,
    pub steps: Vec<NewtonStep>,
    /// `ρ(L_Ac⁻¹Π)` at the last iterate where it was evaluated.
    pub rho_final: f64,
    /// Spectral abscissa of the closed-loop drift `Ac` at the last iterate.
    pub alpha_final: f64,
    pub note: Option<String>,
}

impl NewtonOutcome {
    pub fn converged(&self) -> bool {
        self.status == NewtonStatus::Converged
    }

    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::NAN)
    }
}

/// Precomputed data for the optional solution bounds.
#[derive(Clone, Debug)]
pub struct BoundChecker {
    /// `‖BᵀP†B‖₂` with `P` the controllability Gramian.
    pub pdag_norm: f64,
    pub m: usize,
}

impl BoundChecker {
    pub fn new(sys: &StochasticSystem) -> Result<Self> {
        let p = crate::glyap::controllability_gramian(sys)?;
        let pdag = pseudoinverse(&p, DEFAULT_RANK_TOL)?;
        let term = sys.b.transpose() * pdag.as_matrix() * &sys.b;
        Ok(BoundChecker {
            pdag_norm: operator_2norm(&term)?,
            m: sys.m(),
        })
    }
}

/// `trace(-BᵀXB) ≤ m²γ²‖BᵀP†B‖₂`, up to a relative slack of `1e-8`.
pub fn check_gain_bound(x: &SymMatrix, b: &Matrix, pdag_norm: f64, gamma: f64, m: usize) -> bool {
    let t = -(b.transpose() * x.as_matrix() * b).trace();
    let bound = (m * m) as f64 * gamma * gamma * pdag_norm;
    t <= bound + 1e-8 * bound.max(1.0)
}

/// Pieces of the deterministic Riccati equation
/// `FᵀX + XF - XGX - H = 0` with `R = γ²I - DᵀD`,
/// `F = A + BR⁻¹DᵀC`, `G = BR⁻¹Bᵀ`, `H = Cᵀ(I + DR⁻¹Dᵀ)C`.
pub(crate) struct DetRiccatiData {
    pub f: Matrix,
    pub g: Matrix,
    pub h: Matrix,
}

pub(crate) fn det_riccati_data(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix, gamma: f64) -> Result<DetRiccatiData> {
    let m = b.ncols();
    let p = c.nrows();
    let r = SymMatrix::new(Matrix::identity(m, m) * (gamma * gamma) - d.transpose() * d);
    let rinv_dtc = spd_solve(&r, &(d.transpose() * c))?;
    let rinv_bt = spd_solve(&r, &b.transpose())?;
    let rinv_dt = spd_solve(&r, &d.transpose())?;
    let f = a + b * rinv_dtc;
    let g = b * rinv_bt;
    let h = c.transpose() * (Matrix::identity(p, p) + d * rinv_dt) * c;
    Ok(DetRiccatiData { f, g, h })
}

/// `[[F, G], [-H, -Fᵀ]]`, the Hamiltonian of the deterministic bounded real
/// lemma. It has no imaginary-axis eigenvalues iff `γ > ‖G‖_∞` (for `A`
/// Hurwitz).
pub fn det_hamiltonian(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix, gamma: f64) -> Result<Matrix> {
    let DetRiccatiData { f, g, h } = det_riccati_data(a, b, c, d, gamma)?;
    let n = a.nrows();
    let mut ham = Matrix::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(&f);
    ham.view_mut((0, n), (n, n)).copy_from(&g);
    ham.view_mut((n, 0), (n, n)).copy_from(&(-h));
    ham.view_mut((n, n), (n, n)).copy_from(&(-f.transpose()));
    Ok(ham)
}

/// `|Re λ| ≤ IMAG_AXIS_TOL · (1 + |λ|)` counts as an imaginary-axis eigenvalue.
pub const IMAG_AXIS_TOL: f64 = 1e-8;

pub(crate) fn has_imaginary_eigenvalue(m: &Matrix) -> Result<bool> {
    let ev = crate::linalg::eigenvalues(m)?;
    Ok(ev
        .iter()
        .any(|z| z.re.abs() <= IMAG_AXIS_TOL * (1.0 + z.norm())))
}

/// Matrix sign function by the scaled Newton iteration.
fn matrix_sign(m: &Matrix) -> Result<Matrix> {
    let dim = m.nrows();
    let mut z = m.clone();
    for it in 0..100 {
        let lu = z.clone().lu();
        let inv = lu.try_inverse().ok_or(Error::Singular {
            context: "matrix sign iteration",
        })?;
        // determinant scaling, computed in log space
        let lu = z.clone().lu();
        let u = lu.u();
        let logdet: f64 = (0..dim).map(|i| u[(i, i)].abs().ln()).sum();
        let c = if it < 20 {
            (logdet / dim as f64).exp()
        } else {
            1.0
        };
        let next = (&z / c + inv * c) * 0.5;
        let change = (&next - &z).norm();
        let size = next.norm();
        z = next;
        if change <= 1e-13 * size {
            return Ok(z);
        }
        if change <= 1e-10 * size && c == 1.0 {
            return Ok(z);
        }
    }
    Err(Error::NonConverged {
        iterations: 100,
        residual: f64::NAN,
    })
}

/// Smallest (anti-stabilizing) solution `X₋` of the deterministic Riccati
/// equation `R_γ(X) - Σ NᵀXN = 0` at level `gamma1`.
///
/// `[I; X₋]` spans the invariant subspace of the Hamiltonian
/// `[[F, -G], [H, -Fᵀ]]` for its open right half-plane eigenvalues, so
/// `F - GX₋` is anti-stable. Requires `gamma1` above the deterministic
/// H∞-norm.
pub fn deterministic_smallest_solution(sys: &StochasticSystem, gamma1: f64) -> Result<SymMatrix> {
    let d_norm = operator_2norm(&sys.d)?;
    if !(gamma1 > d_norm) {
        return Err(Error::GammaTooSmall {
            gamma: gamma1,
            d_norm,
        });
    }
    let n = sys.n();
    let DetRiccatiData { f, g, h } = det_riccati_data(&sys.a, &sys.b, &sys.c, &sys.d, gamma1)?;
    let mut ham = Matrix::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(&f);
    ham.view_mut((0, n), (n, n)).copy_from(&(-&g));
    ham.view_mut((n, 0), (n, n)).copy_from(&h);
    ham.view_mut((n, n), (n, n)).copy_from(&(-f.transpose()));
    if has_imaginary_eigenvalue(&ham)? {
        return Err(Error::ImaginaryAxisEigenvalues { gamma: gamma1 });
    }
    let z = matrix_sign(&ham)?;
    // (Z - I)[I; X] = 0 on the unstable subspace
    let zm = z - Matrix::identity(2 * n, 2 * n);
    let mut lhs = Matrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&zm.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&zm.view((n, n), (n, n)));
    let mut rhs = Matrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-zm.view((0, 0), (n, n))));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-zm.view((n, 0), (n, n))));
    let svd = lhs.svd(true, true);
    let x = svd
        .solve(&rhs, 1e-14 * svd.singular_values.max())
        .map_err(|_| Error::Singular {
            context: "anti-stabilizing Riccati solution",
        })?;
    Ok(SymMatrix::new(x))
}

/// Residual of the deterministic Riccati map at `X` (noise dropped).
pub fn det_riccati_residual(sys: &StochasticSystem, gamma: f64, x: &SymMatrix) -> Result<SymMatrix> {
    let det = sys.deterministic();
    RiccatiProblem::with_gamma(&det, gamma)?.riccati_eval(x)
}

struct StabilityProbe {
    solver: Option<LyapunovSolver>,
    rho: f64,
    alpha: f64,
    reason: Option<String>,
}

fn probe_stability(op: &GLyapOperator, opts: &NewtonOptions) -> Result<StabilityProbe> {
    let alpha = spectral_abscissa(&op.ac)?;
    if alpha >= 0.0 {
        return Ok(StabilityProbe {
            solver: None,
            rho: f64::NAN,
            alpha,
            reason: Some(format!("closed-loop drift abscissa {alpha:e} >= 0")),
        });
    }
    let solver = match LyapunovSolver::new(&op.ac) {
        Ok(s) => s,
        Err(Error::SingularLyapunov { min_sum }) => {
            return Ok(StabilityProbe {
                solver: None,
                rho: f64::NAN,
                alpha,
                reason: Some(format!("closed-loop Lyapunov operator singular ({min_sum:e})")),
            })
        }
        Err(e) => return Err(e),
    };
    let est = power_with_solver(&solver, op, opts.power_tol, opts.power_maxit)?;
    let reason = if !est.converged {
        Some(format!(
            "power method did not settle in {} iterations",
            est.iterations
        ))
    } else if est.rho >= 1.0 - STABILITY_MARGIN {
        Some(format!("spectral radius {} >= 1", est.rho))
    } else {
        None
    };
    Ok(StabilityProbe {
        solver: Some(solver),
        rho: est.rho,
        alpha,
        reason,
    })
}

/// Newton's method on `R_γ(X) = 0` from `X₀ = 0`.
pub fn newton_solve(prob: &RiccatiProblem<'_>, opts: &NewtonOptions) -> Result<NewtonOutcome> {
    if opts.bound_checks {
        let checker = BoundChecker::new(prob.system())?;
        newton_solve_with(prob, opts, Some(&checker))
    } else {
        newton_solve_with(prob, opts, None)
    }
}

/// [`newton_solve`] with a precomputed [`BoundChecker`]; bounds are only
/// checked when `bounds` is given.
pub fn newton_solve_with(
    prob: &RiccatiProblem<'_>,
    opts: &NewtonOptions,
    bounds: Option<&BoundChecker>,
) -> Result<NewtonOutcome> {
    let sys = prob.system();
    let n = sys.n();
    let mut x = SymMatrix::zeros(n);
    let mut residuals = Vec::new();
    let mut steps = Vec::new();
    let mut rho_final = f64::NAN;
    let mut alpha_final = f64::NAN;

    let x_minus = match bounds {
        Some(_) => match deterministic_smallest_solution(sys, prob.gamma()) {
            Ok(xm) => Some(xm),
            Err(Error::ImaginaryAxisEigenvalues { .. }) => {
                return Ok(NewtonOutcome {
                    status: NewtonStatus::BoundViolated,
                    x,
                    iterations: 0,
                    residuals,
                    steps,
                    rho_final,
                    alpha_final,
                    note: Some("gamma below the deterministic H-infinity norm".into()),
                })
            }
            Err(e) => return Err(e),
        },
        None => None,
    };

    let finish = |status, x, k, residuals, steps, rho, alpha, note: Option<String>| NewtonOutcome {
        status,
        x,
        iterations: k,
        residuals,
        steps,
        rho_final: rho,
        alpha_final: alpha,
        note,
    };

    let mut blowup_scale = f64::NAN;
    let mut k = 0;
    loop {
        let r = match prob.riccati_eval(&x) {
            Ok(r) => r,
            Err(Error::QIndefinite { min_eig }) => {
                return Ok(finish(
                    NewtonStatus::QIndefinite,
                    x,
                    k,
                    residuals,
                    steps,
                    rho_final,
                    alpha_final,
                    Some(format!("Q_gamma smallest eigenvalue {min_eig:e}")),
                ))
            }
            Err(e) => return Err(e),
        };
        let res = r.norm();
        residuals.push(res);
        if blowup_scale.is_nan() {
            blowup_scale = DIVERGENCE_FACTOR * (1.0 + res);
        }
        let op = prob.frechet_operator(&x)?;
        let probe = probe_stability(&op, opts)?;
        rho_final = probe.rho;
        alpha_final = probe.alpha;
        if let Some(reason) = probe.reason {
            return Ok(finish(
                NewtonStatus::StabilityLost,
                x,
                k,
                residuals,
                steps,
                rho_final,
                alpha_final,
                Some(reason),
            ));
        }
        let solver = probe.solver.expect("stable probe carries a solver");
        if res <= opts.newton_tol * (1.0 + x.norm()) {
            return Ok(finish(
                NewtonStatus::Converged,
                x,
                k,
                residuals,
                steps,
                rho_final,
                alpha_final,
                None,
            ));
        }
        if k >= opts.kmax {
            return Ok(finish(
                NewtonStatus::MaxIter,
                x,
                k,
                residuals,
                steps,
                rho_final,
                alpha_final,
                Some(format!("no convergence within kmax = {}", opts.kmax)),
            ));
        }
        let rhs = r.scale(-1.0);
        let inner = match opts.inner {
            InnerSolver::FixedPoint => {
                fixed_point_with(&solver, &op, &rhs, opts.inner_tol, opts.inner_maxit)
            }
            InnerSolver::Krylov => gmres_with(&solver, &op, &rhs, opts.inner_tol, opts.inner_maxit),
        };
        let sol = match inner {
            Ok(sol) => sol,
            Err(Error::NonConverged { iterations, residual }) => {
                return Ok(finish(
                    NewtonStatus::MaxIter,
                    x,
                    k,
                    residuals,
                    steps,
                    rho_final,
                    alpha_final,
                    Some(format!(
                        "Newton step stalled after {iterations} inner iterations (residual {residual:e})"
                    )),
                ))
            }
            Err(e) => return Err(e),
        };
        let (r_vals, _) = sym_eig(&r)?;
        let (d_vals, _) = sym_eig(&sol.delta)?;
        steps.push(NewtonStep {
            k,
            residual: res,
            riccati_max_eig: r_vals.last().copied().unwrap_or(0.0),
            increment_max_eig: d_vals.last().copied().unwrap_or(0.0),
            rho: rho_final,
            alpha: alpha_final,
            inner_iterations: sol.iterations,
        });
        x = &x + &sol.delta;
        k += 1;

        if x.norm() > blowup_scale {
            return Ok(finish(
                NewtonStatus::MaxIter,
                x,
                k,
                residuals,
                steps,
                rho_final,
                alpha_final,
                Some("iterates diverge".into()),
            ));
        }
        if let Some(checker) = bounds {
            let mut violated = None;
            if !check_gain_bound(&x, &sys.b, checker.pdag_norm, prob.gamma(), checker.m) {
                violated = Some("trace bound on BᵀXB violated".to_string());
            } else if let Some(xm) = &x_minus {
                let gap = (&x - xm).min_eigenvalue()?;
                if gap < -1e-8 * (1.0 + xm.norm()) {
                    violated = Some(format!(
                        "iterate fell below the deterministic smallest solution ({gap:e})"
                    ));
                }
            }
            if violated.is_some() {
                return Ok(finish(
                    NewtonStatus::BoundViolated,
                    x,
                    k,
                    residuals,
                    steps,
                    rho_final,
                    alpha_final,
                    violated,
                ));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_sys() -> StochasticSystem {
        StochasticSystem::scalar(-1.0, 1.0, 1.0, 1.0, 0.0)
    }

    #[test]
    fn q_gamma_and_s_basic() {
        let sys = StochasticSystem::scalar(-1.0, 1.0, 1.0, 1.0, 0.0);
        let prob = RiccatiProblem::new(&sys, 2.0).unwrap();
        let x = SymMatrix::from_diagonal(&[-0.7]);
        assert!((prob.q_gamma(&x)[(0, 0)] - 4.0).abs() < 1e-15);
        assert!((prob.s_of(&x)[(0, 0)] + 0.7).abs() < 1e-15);
        assert!(prob.s_of(&SymMatrix::zeros(1)).norm() == 0.0);
    }

    #[test]
    fn riccati_scalar_value() {
        let sys = scalar_sys();
        let prob = RiccatiProblem::new(&sys, 3.0).unwrap();
        let x = SymMatrix::from_diagonal(&[-1.0]);
        // -x - 1 - x²/9 at x = -1
        let r = prob.riccati_eval(&x).unwrap();
        assert!((r[(0, 0)] + 1.0 / 9.0).abs() < 1e-15);
        let rb = prob.riccati_eval_basic(&x).unwrap();
        assert!((rb[(0, 0)] + 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn zero_output_gives_zero_residual() {
        let sys = StochasticSystem::basic(
            -Matrix::identity(2, 2),
            Matrix::identity(2, 2) * 0.5,
            Matrix::identity(2, 2),
            Matrix::zeros(1, 2),
            Matrix::zeros(1, 2),
        )
        .unwrap();
        let prob = RiccatiProblem::new(&sys, 1.0).unwrap();
        assert_eq!(prob.riccati_eval(&SymMatrix::zeros(2)).unwrap().norm(), 0.0);
        let out = newton_solve(&prob, &NewtonOptions::default()).unwrap();
        assert_eq!(out.status, NewtonStatus::Converged);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.x.norm(), 0.0);
    }

    #[test]
    fn gamma_must_exceed_d() {
        let sys = StochasticSystem::scalar(-1.0, 0.5, 1.0, 1.0, 2.0);
        assert!(matches!(
            RiccatiProblem::new(&sys, 2.0),
            Err(Error::GammaTooSmall { .. })
        ));
        assert!(RiccatiProblem::new(&sys, 2.0001).is_ok());
    }

    #[test]
    fn unstable_pair_is_rejected() {
        let sys = StochasticSystem::scalar(-1.0, 1.5, 1.0, 1.0, 0.0);
        assert!(matches!(
            RiccatiProblem::new(&sys, 5.0),
            Err(Error::MsUnstable(_))
        ));
    }

    #[test]
    fn scalar_gain_and_derivative() {
        let sys = scalar_sys();
        let g = 3.0;
        let prob = RiccatiProblem::new(&sys, g).unwrap();
        let xv = -0.8;
        let x = SymMatrix::from_diagonal(&[xv]);
        let k = prob.gain(&x).unwrap();
        assert!((k[(0, 0)] - xv / (g * g)).abs() < 1e-15);
        assert!((prob.gain_basic(&x).unwrap()[(0, 0)] - xv / (g * g)).abs() < 1e-15);
        let op = prob.frechet_operator(&x).unwrap();
        let d = op.apply(&SymMatrix::from_diagonal(&[1.0])).unwrap()[(0, 0)];
        // d/dx (2ax + n²x - c² - b²x²/γ²) = 2a + n² - 2b²x/γ²
        assert!((d - (-2.0 + 1.0 - 2.0 * xv / (g * g))).abs() < 1e-14);
    }

    #[test]
    fn scalar_newton_converges_to_larger_root() {
        let sys = scalar_sys();
        let prob = RiccatiProblem::new(&sys, 3.0).unwrap();
        for inner in [InnerSolver::FixedPoint, InnerSolver::Krylov] {
            let opts = NewtonOptions {
                inner,
                ..NewtonOptions::default()
            };
            let out = newton_solve(&prob, &opts).unwrap();
            assert_eq!(out.status, NewtonStatus::Converged);
            let want = (-9.0 + 3.0 * 5f64.sqrt()) / 2.0;
            assert!((out.x[(0, 0)] - want).abs() < 1e-9, "{}", out.x[(0, 0)]);
            assert!(prob.riccati_eval(&out.x).unwrap().norm() < 1e-9);
        }
    }

    #[test]
    fn scalar_newton_fails_below_norm() {
        let sys = scalar_sys();
        // (2a + n²)² = 1 < 4b²c²/γ² = 4/2.25: no real root
        let prob = RiccatiProblem::new(&sys, 1.5).unwrap();
        let out = newton_solve(&prob, &NewtonOptions::default()).unwrap();
        assert!(matches!(
            out.status,
            NewtonStatus::StabilityLost | NewtonStatus::MaxIter
        ));
    }

    #[test]
    fn scalar_smallest_solution() {
        let sys = scalar_sys();
        let xm = deterministic_smallest_solution(&sys, 3.0).unwrap();
        let want = -9.0 - 6.0 * 2f64.sqrt();
        assert!((xm[(0, 0)] - want).abs() < 1e-9, "{}", xm[(0, 0)]);
        assert!(matches!(
            deterministic_smallest_solution(&sys, 0.9),
            Err(Error::ImaginaryAxisEigenvalues { .. })
        ));
    }

    #[test]
    fn gain_bound_scalar() {
        let sys = scalar_sys();
        let x = SymMatrix::from_diagonal(&[(-9.0 + 3.0 * 5f64.sqrt()) / 2.0]);
        // P = 1 for the scalar system, so the bound is m²γ²b²/P = 9
        let checker = BoundChecker::new(&sys).unwrap();
        assert!((checker.pdag_norm - 1.0).abs() < 1e-9);
        assert!(check_gain_bound(&x, &sys.b, checker.pdag_norm, 3.0, 1));
        assert!(check_gain_bound(&SymMatrix::zeros(1), &sys.b, 1.0, 3.0, 1));
        let far = x.scale(10.0);
        assert!(!check_gain_bound(&far, &sys.b, checker.pdag_norm, 3.0, 1));
    }

    #[test]
    fn bound_checks_do_not_reject_valid_gamma() {
        let sys = scalar_sys();
        let prob = RiccatiProblem::new(&sys, 3.0).unwrap();
        let opts = NewtonOptions {
            bound_checks: true,
            ..NewtonOptions::default()
        };
        let out = newton_solve(&prob, &opts).unwrap();
        assert_eq!(out.status, NewtonStatus::Converged);
    }

    #[test]
    fn q_indefinite_in_general_case() {
        // Input noise lets Q_γ(X) lose definiteness once X is very negative.
        let s = |v| Matrix::from_element(1, 1, v);
        let sys = StochasticSystem::new(
            s(-1.0),
            vec![s(0.2)],
            vec![s(2.0)],
            s(1.0),
            s(3.0),
            s(0.0),
        )
        .unwrap();
        let prob = RiccatiProblem::with_gamma(&sys, 1.0).unwrap();
        let x = SymMatrix::from_diagonal(&[-1.0]);
        assert!(matches!(
            prob.riccati_eval(&x),
            Err(Error::QIndefinite { .. })
        ));
    }
}
