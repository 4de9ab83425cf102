//! Generalized Lyapunov equations `AcᵀΔ + ΔAc + Σ NⱼᵀΔNⱼ = Q`.
//!
//! Both solvers need `Ac` Hurwitz and `ρ(L_Ac⁻¹Π) < 1`; the caller checks
//! this. Every converged solve satisfies
//! `‖apply(Δ) - Q‖_F ≤ tol · (1 + ‖Q‖_F)`.

use crate::error::{Error, Result};
use crate::linalg::{LyapunovSolver, Matrix, SymMatrix};
use crate::operators::{is_ms_stable, GLyapOperator, StochasticSystem};

pub const FIXED_POINT_TOL: f64 = 1e-11;
pub const FIXED_POINT_MAXIT: usize = 5_000;

/// Krylov subspace size between restarts of the accelerated solver.
pub const GMRES_RESTART: usize = 40;

#[derive(Clone, Debug, PartialEq)]
pub struct GLyapSolution {
    pub delta: SymMatrix,
    pub iterations: usize,
    /// Final absolute residual `‖apply(Δ) - Q‖_F`.
    pub residual: f64,
    /// Residual after each sweep (fixed point) or restart cycle (Krylov).
    pub history: Vec<f64>,
}

/// Fixed-point sweep `Δ_{j+1} = L_Ac⁻¹(Q - Π(Δ_j))` from `Δ₀ = 0`.
pub fn solve_fixed_point(
    op: &GLyapOperator,
    q: &SymMatrix,
    tol: f64,
    maxit: usize,
) -> Result<GLyapSolution> {
    let solver = LyapunovSolver::new(&op.ac)?;
    fixed_point_with(&solver, op, q, tol, maxit)
}

pub(crate) fn fixed_point_with(
    solver: &LyapunovSolver,
    op: &GLyapOperator,
    q: &SymMatrix,
    tol: f64,
    maxit: usize,
) -> Result<GLyapSolution> {
    let target = tol * (1.0 + q.norm());
    let mut pi_prev = SymMatrix::zeros(op.order());
    let mut history = Vec::new();
    for it in 1..=maxit.max(1) {
        let delta = solver.solve(&(q - &pi_prev))?;
        let pi_next = op.pi(&delta);
        // L(Δ_{j+1}) = Q - Π(Δ_j), so the residual is Π(Δ_{j+1}) - Π(Δ_j).
        let residual = (&pi_next - &pi_prev).norm();
        history.push(residual);
        if residual <= target {
            return Ok(GLyapSolution {
                delta,
                iterations: it,
                residual,
                history,
            });
        }
        pi_prev = pi_next;
    }
    Err(Error::NonConverged {
        iterations: maxit,
        residual: history.last().copied().unwrap_or(f64::NAN),
    })
}

/// Restarted GMRES on `Δ ↦ Δ + L_Ac⁻¹Π(Δ)` with right-hand side
/// `L_Ac⁻¹(Q)`, symmetric matrices taken as vectors under the trace inner
/// product. Same contract as [`solve_fixed_point`]; `maxit` bounds the total
/// number of Krylov steps.
pub fn solve_accelerated(
    op: &GLyapOperator,
    q: &SymMatrix,
    tol: f64,
    maxit: usize,
) -> Result<GLyapSolution> {
    let solver = LyapunovSolver::new(&op.ac)?;
    gmres_with(&solver, op, q, tol, maxit)
}

pub(crate) fn gmres_with(
    solver: &LyapunovSolver,
    op: &GLyapOperator,
    q: &SymMatrix,
    tol: f64,
    maxit: usize,
) -> Result<GLyapSolution> {
    let n = op.order();
    let target = tol * (1.0 + q.norm());
    let base = solver.solve(q)?;
    let mut history = Vec::new();
    if !op.has_noise() {
        let residual = (op.apply(&base)?.as_matrix() - q.as_matrix()).norm();
        return Ok(GLyapSolution {
            delta: base,
            iterations: 1,
            residual,
            history: vec![residual],
        });
    }
    // Preconditioned operator M(Δ) = Δ + L⁻¹Π(Δ).
    let precond = |x: &SymMatrix| -> Result<SymMatrix> {
        let lp = solver.solve(&op.pi(x))?;
        Ok(x + &lp)
    };
    // ‖L(E)‖ ≤ l_scale ‖E‖ translates the true-residual target.
    let l_scale = 2.0 * op.ac.norm() + 1e-300;
    let mut x = SymMatrix::zeros(n);
    let mut steps = 0;
    loop {
        let true_res = (op.apply(&x)?.as_matrix() - q.as_matrix()).norm();
        history.push(true_res);
        if true_res <= target {
            return Ok(GLyapSolution {
                delta: x,
                iterations: steps.max(1),
                residual: true_res,
                history,
            });
        }
        if steps >= maxit {
            return Err(Error::NonConverged {
                iterations: steps,
                residual: true_res,
            });
        }
        let r0 = &base - &precond(&x)?;
        let beta = r0.norm();
        if beta == 0.0 {
            return Err(Error::NonConverged {
                iterations: steps,
                residual: true_res,
            });
        }
        let inner_target = 0.1 * target / l_scale;
        let m = GMRES_RESTART.min(maxit - steps).max(1);
        let mut basis: Vec<SymMatrix> = vec![r0.scale(1.0 / beta)];
        let mut h = Matrix::zeros(m + 1, m);
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            let mut w = precond(&basis[j])?;
            for (i, v) in basis.iter().enumerate() {
                let hij = w.dot(v);
                h[(i, j)] = hij;
                w = &w - &v.scale(hij);
            }
            let wn = w.norm();
            h[(j + 1, j)] = wn;
            for i in 0..j {
                let (a, b) = (h[(i, j)], h[(i + 1, j)]);
                h[(i, j)] = cs[i] * a + sn[i] * b;
                h[(i + 1, j)] = -sn[i] * a + cs[i] * b;
            }
            let (a, b) = (h[(j, j)], h[(j + 1, j)]);
            let r = a.hypot(b);
            cs[j] = if r == 0.0 { 1.0 } else { a / r };
            sn[j] = if r == 0.0 { 0.0 } else { b / r };
            h[(j, j)] = r;
            h[(j + 1, j)] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            steps += 1;
            if g[j + 1].abs() <= inner_target || wn == 0.0 || steps >= maxit {
                break;
            }
            basis.push(w.scale(1.0 / wn));
        }
        // back substitution on the triangular part
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in (i + 1)..used {
                s -= h[(i, k)] * y[k];
            }
            y[i] = s / h[(i, i)];
        }
        let mut update = Matrix::zeros(n, n);
        for (yi, v) in y.iter().zip(&basis) {
            update += v.as_matrix() * *yi;
        }
        x = &x + &SymMatrix::new(update);
    }
}

/// Controllability Gramian `P` with `AP + PAᵀ + Σ NⱼPNⱼᵀ = -BBᵀ`.
///
/// Solved as the dual equation, i.e. the fixed-point scheme applied to
/// `(Aᵀ, Nⱼᵀ)`. Small negative eigenvalues (down to `-1e-10‖P‖`) are
/// clamped to zero.
pub fn controllability_gramian(sys: &StochasticSystem) -> Result<SymMatrix> {
    if !is_ms_stable(sys)? {
        return Err(Error::MsUnstable(
            "controllability Gramian needs a mean-square stable pair (A, N)".into(),
        ));
    }
    let dual = sys.open_loop_operator().transpose();
    let rhs = SymMatrix::gram(&sys.b).scale(-1.0);
    let sol = solve_fixed_point(&dual, &rhs, FIXED_POINT_TOL, FIXED_POINT_MAXIT)?;
    clamp_psd(&sol.delta, 1e-10)
}

fn clamp_psd(p: &SymMatrix, floor: f64) -> Result<SymMatrix> {
    let (vals, vecs) = crate::linalg::sym_eig(p)?;
    let scale = vals.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if vals.iter().all(|v| *v >= 0.0) {
        return Ok(p.clone());
    }
    if let Some(&lo) = vals.first() {
        if lo < -floor * scale {
            return Err(Error::NotPsd { min_eig: lo });
        }
    }
    let mut scaled = vecs.clone();
    for (j, v) in vals.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v.max(0.0));
    }
    Ok(SymMatrix::new(scaled * vecs.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_matrix, random_stable, random_sym};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn s(v: f64) -> Matrix {
        Matrix::from_element(1, 1, v)
    }

    #[test]
    fn scalar_fixed_point() {
        // (2a + n²)Δ = q with a = -1, n = 1 gives Δ = -q
        let op = GLyapOperator::new(s(-1.0), vec![s(1.0)]).unwrap();
        let q = SymMatrix::from_diagonal(&[3.0]);
        let sol = solve_fixed_point(&op, &q, FIXED_POINT_TOL, FIXED_POINT_MAXIT).unwrap();
        assert!((sol.delta[(0, 0)] + 3.0).abs() < 1e-9);
        let acc = solve_accelerated(&op, &q, FIXED_POINT_TOL, 100).unwrap();
        assert!((acc.delta[(0, 0)] + 3.0).abs() < 1e-10);
    }

    #[test]
    fn zero_noise_is_one_lyapunov_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_stable(&mut rng, 4);
        let q = random_sym(&mut rng, 4);
        let op = GLyapOperator::new(a.clone(), vec![Matrix::zeros(4, 4)]).unwrap();
        let sol = solve_fixed_point(&op, &q, FIXED_POINT_TOL, FIXED_POINT_MAXIT).unwrap();
        assert_eq!(sol.iterations, 1);
        let direct = crate::linalg::lyap_solve(&a, &q).unwrap();
        assert!((sol.delta.as_matrix() - direct.as_matrix()).norm() < 1e-14);
        let acc = solve_accelerated(&op, &q, FIXED_POINT_TOL, 100).unwrap();
        assert_eq!(acc.iterations, 1);
    }

    #[test]
    fn residual_contract_and_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_stable(&mut rng, 5);
        let n = random_matrix(&mut rng, 5, 5) * 0.4;
        let op = GLyapOperator::new(a.clone(), vec![n.clone()]).unwrap();
        let rho = crate::operators::spectral_radius_power(&a, &[n], 1e-12, 10_000)
            .unwrap()
            .rho;
        assert!(rho < 1.0);
        let q = random_sym(&mut rng, 5);
        let sol = solve_fixed_point(&op, &q, FIXED_POINT_TOL, FIXED_POINT_MAXIT).unwrap();
        let res = (op.apply(&sol.delta).unwrap().as_matrix() - q.as_matrix()).norm();
        assert!(res <= FIXED_POINT_TOL * (1.0 + q.norm()) * 1.0001);
        let first = sol.history[0];
        let last = *sol.history.last().unwrap();
        assert!(last / first <= rho.powi(sol.iterations as i32 - 1) * 10.0 + 1e-300);
    }

    #[test]
    fn non_convergence_is_reported() {
        let op = GLyapOperator::new(s(-1.0), vec![s(1.41)]).unwrap();
        let q = SymMatrix::from_diagonal(&[1.0]);
        let err = solve_fixed_point(&op, &q, 1e-14, 20).unwrap_err();
        assert!(matches!(err, Error::NonConverged { iterations: 20, .. }));
    }

    #[test]
    fn gramian_examples() {
        let sys = StochasticSystem::scalar(-1.0, 1.0, 1.0, 1.0, 0.0);
        let p = controllability_gramian(&sys).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-9);

        let sys = StochasticSystem::basic(
            -Matrix::identity(2, 2),
            Matrix::zeros(2, 2),
            Matrix::identity(2, 2),
            Matrix::zeros(1, 2),
            Matrix::zeros(1, 2),
        )
        .unwrap();
        let p = controllability_gramian(&sys).unwrap();
        assert!((p.as_matrix() - Matrix::identity(2, 2) * 0.5).norm() < 1e-14);

        let unstable = StochasticSystem::scalar(-1.0, 2.0, 1.0, 1.0, 0.0);
        assert!(matches!(
            controllability_gramian(&unstable),
            Err(Error::MsUnstable(_))
        ));
    }
}
