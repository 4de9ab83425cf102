//! Lyapunov-type operators on symmetric matrices and mean-square stability.
//!
//! With `L_A(X) = AᵀX + XA` and `Π(X) = Σ NⱼᵀXNⱼ`, the pair `(A, {Nⱼ})` is
//! mean-square stable iff `σ(L_A + Π) ⊂ ℂ₋`, equivalently iff `A` is Hurwitz
//! and `ρ(L_A⁻¹Π) < 1`. The second form only needs standard Lyapunov solves
//! and is what the solvers use; the Kronecker materialization is kept as a
//! brute-force reference for small orders.

use crate::error::{Error, Result};
use crate::linalg::{
    ensure_finite, ensure_square, eigenvalues, kron, spectral_abscissa, LyapunovSolver, Matrix,
    SymMatrix,
};

/// Largest `n²` accepted by [`GLyapOperator::kron_materialize`].
pub const KRON_GUARD: usize = 4096;

pub const POWER_TOL: f64 = 1e-9;
pub const POWER_MAXIT: usize = 10_000;

/// Spectral radii inside `[1 - MARGIN, 1 + MARGIN]` are treated as unstable.
pub const STABILITY_MARGIN: f64 = 1e-8;

/// `dx = (Ax + Bu)dt + Σⱼ (N_{x,j}x + N_{u,j}u) dwⱼ`, `y = Cx + Du`.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticSystem {
    pub a: Matrix,
    pub nx: Vec<Matrix>,
    pub nu: Vec<Matrix>,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
}

fn mismatch(context: &'static str, expected: (usize, usize), got: &Matrix) -> Error {
    Error::DimensionMismatch {
        context,
        expected: format!("{}x{}", expected.0, expected.1),
        got: format!("{}x{}", got.nrows(), got.ncols()),
    }
}

impl StochasticSystem {
    /// General form with `ν = nx.len()` noise channels. An empty `nu` means
    /// no input noise and is expanded to `ν` zero matrices.
    pub fn new(
        a: Matrix,
        nx: Vec<Matrix>,
        nu: Vec<Matrix>,
        b: Matrix,
        c: Matrix,
        d: Matrix,
    ) -> Result<Self> {
        ensure_square(&a, "A")?;
        let n = a.nrows();
        let m = b.ncols();
        let p = c.nrows();
        if nx.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one state noise matrix is required".into(),
            ));
        }
        if b.nrows() != n {
            return Err(mismatch("B", (n, m), &b));
        }
        if c.ncols() != n {
            return Err(mismatch("C", (p, n), &c));
        }
        if d.nrows() != p || d.ncols() != m {
            return Err(mismatch("D", (p, m), &d));
        }
        for nj in &nx {
            if nj.nrows() != n || nj.ncols() != n {
                return Err(mismatch("Nx", (n, n), nj));
            }
        }
        let nu = if nu.is_empty() {
            vec![Matrix::zeros(n, m); nx.len()]
        } else {
            nu
        };
        if nu.len() != nx.len() {
            return Err(Error::InvalidArgument(format!(
                "{} state noise terms but {} input noise terms",
                nx.len(),
                nu.len()
            )));
        }
        for nj in &nu {
            if nj.nrows() != n || nj.ncols() != m {
                return Err(mismatch("Nu", (n, m), nj));
            }
        }
        for (name, mat) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            ensure_finite(mat, name)?;
        }
        for mat in nx.iter().chain(nu.iter()) {
            ensure_finite(mat, "noise")?;
        }
        Ok(StochasticSystem { a, nx, nu, b, c, d })
    }

    /// One state noise term and no input noise.
    pub fn basic(a: Matrix, n: Matrix, b: Matrix, c: Matrix, d: Matrix) -> Result<Self> {
        Self::new(a, vec![n], Vec::new(), b, c, d)
    }

    /// The scalar system `dx = (ax + bu)dt + nx dw`, `y = cx + du`.
    pub fn scalar(a: f64, n: f64, b: f64, c: f64, d: f64) -> Self {
        let s = |v| Matrix::from_element(1, 1, v);
        Self::basic(s(a), s(n), s(b), s(c), s(d)).expect("scalar system is well formed")
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn noise_terms(&self) -> usize {
        self.nx.len()
    }

    pub fn has_input_noise(&self) -> bool {
        self.nu.iter().any(|m| m.iter().any(|v| *v != 0.0))
    }

    /// Same drift, input and output maps with all noise removed.
    pub fn deterministic(&self) -> Self {
        let n = self.n();
        let m = self.m();
        StochasticSystem {
            a: self.a.clone(),
            nx: vec![Matrix::zeros(n, n)],
            nu: vec![Matrix::zeros(n, m)],
            b: self.b.clone(),
            c: self.c.clone(),
            d: self.d.clone(),
        }
    }

    /// Open-loop operator `L_A + Π_{Nx}`.
    pub fn open_loop_operator(&self) -> GLyapOperator {
        GLyapOperator {
            ac: self.a.clone(),
            njs: self.nx.clone(),
        }
    }
}

/// `Δ ↦ AcᵀΔ + ΔAc + Σⱼ NⱼᵀΔNⱼ`.
#[derive(Clone, Debug, PartialEq)]
pub struct GLyapOperator {
    pub ac: Matrix,
    pub njs: Vec<Matrix>,
}

impl GLyapOperator {
    pub fn new(ac: Matrix, njs: Vec<Matrix>) -> Result<Self> {
        ensure_square(&ac, "GLyapOperator drift")?;
        let n = ac.nrows();
        for nj in &njs {
            if nj.nrows() != n || nj.ncols() != n {
                return Err(mismatch("GLyapOperator noise", (n, n), nj));
            }
        }
        Ok(GLyapOperator { ac, njs })
    }

    pub fn order(&self) -> usize {
        self.ac.nrows()
    }

    fn check(&self, x: &SymMatrix) -> Result<()> {
        let n = self.order();
        if x.order() != n {
            return Err(Error::DimensionMismatch {
                context: "GLyapOperator argument",
                expected: format!("{n}x{n}"),
                got: format!("{0}x{0}", x.order()),
            });
        }
        Ok(())
    }

    /// `Σⱼ NⱼᵀXNⱼ`.
    pub fn pi(&self, x: &SymMatrix) -> SymMatrix {
        let n = self.order();
        let mut acc = Matrix::zeros(n, n);
        for nj in &self.njs {
            acc += nj.transpose() * x.as_matrix() * nj;
        }
        SymMatrix::new(acc)
    }

    pub fn apply(&self, x: &SymMatrix) -> Result<SymMatrix> {
        self.check(x)?;
        let ax = x.as_matrix() * &self.ac;
        let mut out = ax.transpose() + ax;
        for nj in &self.njs {
            out += nj.transpose() * x.as_matrix() * nj;
        }
        Ok(SymMatrix::new(out))
    }

    /// Adjoint under the trace inner product: `AcX + XAcᵀ + Σⱼ NⱼXNⱼᵀ`.
    pub fn apply_adjoint(&self, x: &SymMatrix) -> Result<SymMatrix> {
        self.transpose().apply(x)
    }

    /// The operator built from `Acᵀ` and `Nⱼᵀ`, whose `apply` is this
    /// operator's adjoint.
    pub fn transpose(&self) -> GLyapOperator {
        GLyapOperator {
            ac: self.ac.transpose(),
            njs: self.njs.iter().map(|n| n.transpose()).collect(),
        }
    }

    pub fn has_noise(&self) -> bool {
        self.njs.iter().any(|m| m.iter().any(|v| *v != 0.0))
    }

    /// `n² × n²` matrix `K` with `K vec(X) = vec(apply(X))`, column stacking.
    pub fn kron_materialize(&self) -> Result<Matrix> {
        let n = self.order();
        let order = n * n;
        if order > KRON_GUARD {
            return Err(Error::KroneckerGuard {
                order,
                guard: KRON_GUARD,
            });
        }
        let i = Matrix::identity(n, n);
        let at = self.ac.transpose();
        let mut k = kron(&i, &at) + kron(&at, &i);
        for nj in &self.njs {
            let nt = nj.transpose();
            k += kron(&nt, &nt);
        }
        Ok(k)
    }

    /// Kronecker matrices of `L_Ac` and `Π` separately.
    pub fn kron_parts(&self) -> Result<(Matrix, Matrix)> {
        let n = self.order();
        if n * n > KRON_GUARD {
            return Err(Error::KroneckerGuard {
                order: n * n,
                guard: KRON_GUARD,
            });
        }
        let i = Matrix::identity(n, n);
        let at = self.ac.transpose();
        let l = kron(&i, &at) + kron(&at, &i);
        let mut p = Matrix::zeros(n * n, n * n);
        for nj in &self.njs {
            let nt = nj.transpose();
            p += kron(&nt, &nt);
        }
        Ok((l, p))
    }

    /// Spectral abscissa of the Kronecker materialization.
    pub fn kron_abscissa(&self) -> Result<f64> {
        spectral_abscissa(&self.kron_materialize()?)
    }

    /// Spectral abscissa of the operator without materializing it.
    ///
    /// The operator is resolvent positive, so its abscissa `α` is the unique
    /// shift `s > 2·α(Ac)` with `ρ(L_{Ac - s/2}⁻¹ Π) = 1`; `s` is located by
    /// bisection with the power method. Returns `None` when the power method
    /// does not settle.
    pub fn abscissa_by_bisection(&self, tol: f64) -> Result<Option<f64>> {
        let n = self.order();
        let base = spectral_abscissa(&self.ac)?;
        let lower_bound = 2.0 * base;
        if !self.has_noise() {
            return Ok(Some(lower_bound));
        }
        let shifted_rho = |s: f64| -> Result<Option<f64>> {
            let shifted = &self.ac - Matrix::identity(n, n) * (0.5 * s);
            let est = spectral_radius_power(&shifted, &self.njs, POWER_TOL, POWER_MAXIT)?;
            Ok(est.converged.then_some(est.rho))
        };
        // ρ(s) decreases monotonically in s on (2α(Ac), ∞).
        let scale = 1.0 + lower_bound.abs();
        let mut lo = lower_bound + 1e-9 * scale;
        let mut hi = lower_bound + scale;
        let mut guard = 0;
        loop {
            match shifted_rho(hi)? {
                None => return Ok(None),
                Some(r) if r < 1.0 => break,
                Some(_) => {
                    lo = hi;
                    hi = lower_bound + 2.0 * (hi - lower_bound);
                }
            }
            guard += 1;
            if guard > 200 {
                return Ok(None);
            }
        }
        while hi - lo > tol * (1.0 + hi.abs()) {
            let mid = 0.5 * (lo + hi);
            match shifted_rho(mid)? {
                None => return Ok(None),
                Some(r) if r < 1.0 => hi = mid,
                Some(_) => lo = mid,
            }
        }
        Ok(Some(0.5 * (lo + hi)))
    }
}

/// Brute-force mean-square stability test: `α(L_A + Π) < 0` on the
/// Kronecker matrix. Only for `n² ≤ KRON_GUARD`.
pub fn ms_stable_oracle(a: &Matrix, nx: &[Matrix]) -> Result<bool> {
    let op = GLyapOperator::new(a.clone(), nx.to_vec())?;
    Ok(op.kron_abscissa()? < 0.0)
}

/// Result of the power method on `-L_Ac⁻¹Π`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerEstimate {
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power method for `ρ(L_Ac⁻¹Π)` with `Ac` Hurwitz.
///
/// Starts from `P₀ = I`, iterates `P_{k+1} = -L_Ac⁻¹Π(P_k)` and estimates
/// `ρ_k = ⟨P_k, P_{k+1}⟩ / ⟨P_k, P_k⟩`. Iterates are renormalized to unit
/// Frobenius norm each step. The map preserves the PSD cone, so the
/// iterates stay positive semidefinite.
pub fn spectral_radius_power(
    ac: &Matrix,
    njs: &[Matrix],
    tol: f64,
    maxit: usize,
) -> Result<PowerEstimate> {
    let solver = LyapunovSolver::new(ac)?;
    let op = GLyapOperator::new(ac.clone(), njs.to_vec())?;
    power_with_solver(&solver, &op, tol, maxit)
}

pub(crate) fn power_with_solver(
    solver: &LyapunovSolver,
    op: &GLyapOperator,
    tol: f64,
    maxit: usize,
) -> Result<PowerEstimate> {
    power_iterates(solver, op, tol, maxit, |_| {})
}

/// Power method exposing each normalized iterate to `observe`.
pub fn power_iterates(
    solver: &LyapunovSolver,
    op: &GLyapOperator,
    tol: f64,
    maxit: usize,
    mut observe: impl FnMut(&SymMatrix),
) -> Result<PowerEstimate> {
    let n = op.order();
    let mut p = SymMatrix::identity(n).scale(1.0 / (n as f64).sqrt());
    let mut prev = f64::NAN;
    for it in 1..=maxit.max(1) {
        observe(&p);
        let next = solver.solve(&op.pi(&p).scale(-1.0))?;
        let nrm = next.norm();
        if nrm == 0.0 {
            return Ok(PowerEstimate {
                rho: 0.0,
                iterations: it,
                converged: true,
            });
        }
        let rho = p.dot(&next).max(0.0);
        if (rho - prev).abs() <= tol * rho.max(1.0) {
            return Ok(PowerEstimate {
                rho,
                iterations: it,
                converged: true,
            });
        }
        prev = rho;
        p = next.scale(1.0 / nrm);
    }
    Ok(PowerEstimate {
        rho: prev,
        iterations: maxit,
        converged: false,
    })
}

/// Outcome of the fast mean-square stability test.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub stable: bool,
    /// Spectral abscissa of the drift matrix.
    pub abscissa: f64,
    /// Power-method estimate, absent when the drift is not Hurwitz.
    pub power: Option<PowerEstimate>,
    pub reason: Option<String>,
}

/// `A` Hurwitz and `ρ(L_A⁻¹Π) < 1 - STABILITY_MARGIN`.
pub fn stability_report(
    a: &Matrix,
    nx: &[Matrix],
    tol: f64,
    maxit: usize,
) -> Result<StabilityReport> {
    let abscissa = spectral_abscissa(a)?;
    if abscissa >= 0.0 {
        return Ok(StabilityReport {
            stable: false,
            abscissa,
            power: None,
            reason: Some(format!("drift not Hurwitz (abscissa {abscissa:e})")),
        });
    }
    let solver = match LyapunovSolver::new(a) {
        Ok(s) => s,
        Err(Error::SingularLyapunov { min_sum }) => {
            return Ok(StabilityReport {
                stable: false,
                abscissa,
                power: None,
                reason: Some(format!("Lyapunov operator singular ({min_sum:e})")),
            })
        }
        Err(e) => return Err(e),
    };
    let op = GLyapOperator::new(a.clone(), nx.to_vec())?;
    let est = power_with_solver(&solver, &op, tol, maxit)?;
    let (stable, reason) = if !est.converged {
        (
            false,
            Some(format!(
                "power method did not converge in {} iterations",
                est.iterations
            )),
        )
    } else if est.rho >= 1.0 - STABILITY_MARGIN {
        (false, Some(format!("spectral radius {} >= 1", est.rho)))
    } else {
        (true, None)
    };
    Ok(StabilityReport {
        stable,
        abscissa,
        power: Some(est),
        reason,
    })
}

pub fn ms_stable_fast(a: &Matrix, nx: &[Matrix], tol: f64, maxit: usize) -> Result<bool> {
    Ok(stability_report(a, nx, tol, maxit)?.stable)
}

/// Convenience: fast test with default tolerances.
pub fn is_ms_stable(sys: &StochasticSystem) -> Result<bool> {
    ms_stable_fast(&sys.a, &sys.nx, POWER_TOL, POWER_MAXIT)
}

/// Eigenvalues of the Kronecker matrix, for diagnostics.
pub fn kron_spectrum(op: &GLyapOperator) -> Result<Vec<nalgebra::Complex<f64>>> {
    eigenvalues(&op.kron_materialize()?)
}
