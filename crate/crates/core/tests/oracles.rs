//! Library results against independent brute-force computations.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use stochinf::glyap::{controllability_gramian, solve_accelerated, solve_fixed_point};
use stochinf::hinf::{det_hinf_norm, stoch_hinf_norm, transfer_gain, NormOptions};
use stochinf::linalg::{operator_2norm, spectral_abscissa, Matrix, SymMatrix};
use stochinf::operators::{spectral_radius_power, GLyapOperator, StochasticSystem};
use stochinf::problems::{random_general_system, random_system};
use stochinf::riccati::{
    deterministic_smallest_solution, newton_solve, det_riccati_residual, InnerSolver, NewtonOptions,
    NewtonStatus, RiccatiProblem,
};

fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Companion matrix of the monic polynomial with the given real roots.
fn companion(roots: &[f64]) -> Matrix {
    let mut coeffs = vec![1.0];
    for r in roots {
        let mut next = vec![0.0; coeffs.len() + 1];
        for (i, c) in coeffs.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c * r;
        }
        coeffs = next;
    }
    let n = roots.len();
    let mut m = Matrix::zeros(n, n);
    for j in 0..n {
        m[(0, j)] = -coeffs[j + 1];
    }
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    m
}

#[test]
fn abscissa_of_companion_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.random_range(1..7);
        let roots: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..1.0)).collect();
        let want = roots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let got = spectral_abscissa(&companion(&roots)).unwrap();
        // companion matrices are badly conditioned near clustered roots
        assert!((got - want).abs() < 1e-4, "{roots:?}: {got} vs {want}");
    }
}

#[test]
fn two_norm_by_power_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let (r, c) = (rng.random_range(1..8), rng.random_range(1..8));
        let m = randn(&mut rng, r, c);
        let mtm = m.transpose() * &m;
        let mut v = DVector::from_element(c, 1.0);
        let mut lam = 0.0;
        for _ in 0..5000 {
            let w = &mtm * &v;
            lam = w.norm();
            v = w / lam;
        }
        let got = operator_2norm(&m).unwrap();
        assert!((got - lam.sqrt()).abs() < 1e-6 * (1.0 + got), "{got} vs {}", lam.sqrt());
    }
}

fn kron_solve(op: &GLyapOperator, q: &SymMatrix) -> Matrix {
    let n = op.order();
    let k = op.kron_materialize().unwrap();
    let x = k.lu().solve(&DVector::from_column_slice(q.as_slice())).unwrap();
    Matrix::from_column_slice(n, n, x.as_slice())
}

#[test]
fn krylov_and_fixed_point_match_kronecker() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for seed in 0..40 {
        let n = 1 + seed % 7;
        let sys = random_general_system(n, 2, 1, 2, seed as u64).unwrap();
        let op = sys.open_loop_operator();
        let q = SymMatrix::new(randn(&mut rng, n, n));
        let dense = kron_solve(&op, &q);
        for sol in [
            solve_fixed_point(&op, &q, 1e-11, 10_000).unwrap(),
            solve_accelerated(&op, &q, 1e-11, 10_000).unwrap(),
        ] {
            let err = (sol.delta.as_matrix() - &dense).norm() / dense.norm();
            assert!(err < 1e-9, "n = {n}: {err}");
        }
    }
}

#[test]
fn krylov_copes_where_fixed_point_stalls() {
    // ρ(L⁻¹Π) = n²/2 = 0.999
    let n = (2.0f64 * 0.999).sqrt();
    let op = GLyapOperator::new(Matrix::from_element(1, 1, -1.0), vec![Matrix::from_element(1, 1, n)]).unwrap();
    let q = SymMatrix::from_diagonal(&[1.0]);
    assert!(solve_fixed_point(&op, &q, 1e-11, 5000).is_err());
    let sol = solve_accelerated(&op, &q, 1e-11, 5000).unwrap();
    // (-2 + n²) x = 1
    assert!((sol.delta[(0, 0)] - 1.0 / (-2.0 + n * n)).abs() < 1e-7);
}

#[test]
fn power_method_matches_kronecker_radius() {
    for seed in 0..30u64 {
        let n = 1 + (seed as usize) % 6;
        let sys = random_system(n, 1, 1, 300 + seed).unwrap();
        let op = sys.open_loop_operator();
        let (l, p) = op.kron_parts().unwrap();
        let m = l.lu().solve(&p).unwrap();
        let want = stochinf::linalg::eigenvalues(&m)
            .unwrap()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        let got = spectral_radius_power(&sys.a, &sys.nx, 1e-12, 100_000).unwrap();
        assert!(got.converged);
        assert!((got.rho - want).abs() < 1e-6 * (1.0 + want), "{} vs {want}", got.rho);
    }
}

#[test]
fn det_norm_against_frequency_sweep() {
    for seed in 0..5u64 {
        let sys = random_system(5, 2, 2, 40 + seed).unwrap();
        let got = det_hinf_norm(&sys.a, &sys.b, &sys.c, &sys.d, 1e-10).unwrap();
        let count = 100_000;
        let mut sweep: f64 = transfer_gain(&sys.a, &sys.b, &sys.c, &sys.d, 0.0).unwrap();
        for i in 0..count {
            let w = 10f64.powf(-4.0 + 8.0 * i as f64 / (count - 1) as f64);
            sweep = sweep.max(transfer_gain(&sys.a, &sys.b, &sys.c, &sys.d, w).unwrap());
        }
        assert!(got >= sweep * (1.0 - 1e-9), "{got} < {sweep}");
        assert!(got <= sweep * (1.0 + 1e-4), "{got} > {sweep}");
    }
}

#[test]
fn scalar_norm_by_discriminant_scan() {
    // The scalar Riccati quadratic -b²x²/γ² + (2a + n²)x - c² = 0 has a real
    // root iff γ ≥ 2|bc|/|2a + n²|. Scan γ on a fine grid instead of using
    // the formula.
    let cases = [(-1.0, 1.0, 1.0, 1.0), (-2.0, 0.5, 0.3, -2.0), (-0.5, 0.9, 1.5, 0.7)];
    for (a, n, b, c) in cases {
        let q: f64 = 2.0 * a + n * n;
        let has_root = |g: f64| q * q - 4.0 * b * b * c * c / (g * g) >= 0.0;
        let mut g = 1e-3;
        while !has_root(g) {
            g *= 1.0 + 1e-7;
        }
        let sys = StochasticSystem::scalar(a, n, b, c, 0.0);
        let rep = stoch_hinf_norm(&sys, &NormOptions::with_tol(1e-7)).unwrap();
        assert!((rep.norm - g).abs() < 1e-6 * g, "{} vs {g}", rep.norm);
    }
}

#[test]
fn decoupled_blocks_give_max_norm() {
    let s1 = (-1.0, 1.0, 1.0, 1.0); // norm 2
    let s2 = (-2.0, 1.0, 1.0, 3.0); // norm 2
    let s3 = (-1.5, 0.5, 2.0, 1.0); // norm 4/2.75
    for (x, y) in [(s1, s3), (s3, s2)] {
        let diag = |p: f64, q: f64| Matrix::from_row_slice(2, 2, &[p, 0.0, 0.0, q]);
        let sys = StochasticSystem::basic(
            diag(x.0, y.0),
            diag(x.1, y.1),
            diag(x.2, y.2),
            diag(x.3, y.3),
            Matrix::zeros(2, 2),
        )
        .unwrap();
        let scalar = |s: (f64, f64, f64, f64)| 2.0 * (s.2 * s.3).abs() / (-2.0 * s.0 - s.1 * s.1);
        let want = scalar(x).max(scalar(y));
        let rep = stoch_hinf_norm(&sys, &NormOptions::with_tol(1e-7)).unwrap();
        assert!((rep.norm - want).abs() < 1e-6 * want, "{} vs {want}", rep.norm);
    }
}

#[test]
fn no_state_noise_matches_det_norm() {
    for seed in 0..10u64 {
        let base = random_system(4, 2, 2, 60 + seed).unwrap();
        let sys = StochasticSystem::basic(base.a, Matrix::zeros(4, 4), base.b, base.c, base.d).unwrap();
        let det = det_hinf_norm(&sys.a, &sys.b, &sys.c, &sys.d, 1e-10).unwrap();
        let rep = stoch_hinf_norm(&sys, &NormOptions::with_tol(1e-6)).unwrap();
        assert!((rep.norm - det).abs() < 2e-6 * det);
        // Newton at 2·det converges immediately from the deterministic bound
        assert!(rep.bracket_history[0].converged());
    }
}

#[test]
fn stochastic_norm_dominates_det_norm() {
    for seed in 0..10u64 {
        let sys = random_system(5, 1, 2, 80 + seed).unwrap();
        let rep = stoch_hinf_norm(&sys, &NormOptions::default()).unwrap();
        assert!(rep.det_hinf <= rep.norm * (1.0 + rep.tol));
        assert!(rep.gamma_hi - rep.gamma_lo < rep.tol * rep.gamma_hi);
    }
}

#[test]
fn derivative_matches_finite_differences_general_case() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for seed in 0..20u64 {
        let n = 2 + (seed as usize) % 4;
        let sys = random_general_system(n, 2, 2, 3, seed).unwrap();
        let gamma = 3.0 + operator_2norm(&sys.d).unwrap();
        let prob = RiccatiProblem::with_gamma(&sys, gamma).unwrap();
        let x = SymMatrix::new(randn(&mut rng, n, n) * 0.1);
        let e = SymMatrix::new(randn(&mut rng, n, n));
        let h = 1e-5;
        let fd = (prob.riccati_eval(&(&x + &e.scale(h))).unwrap().as_matrix()
            - prob.riccati_eval(&(&x - &e.scale(h))).unwrap().as_matrix())
            / (2.0 * h);
        let exact = prob.frechet_operator(&x).unwrap().apply(&e).unwrap();
        assert!((fd - exact.as_matrix()).norm() < 1e-6 * exact.norm());
    }
}

#[test]
fn basic_and_general_riccati_agree_without_input_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for seed in 0..20u64 {
        let n = 1 + (seed as usize) % 5;
        let sys = random_system(n, 2, 2, 100 + seed).unwrap();
        let prob = RiccatiProblem::with_gamma(&sys, 2.5).unwrap();
        let x = SymMatrix::new(randn(&mut rng, n, n));
        let general = prob.riccati_eval(&x).unwrap();
        let basic = prob.riccati_eval_basic(&x).unwrap();
        assert!((general.as_matrix() - basic.as_matrix()).norm() < 1e-12 * (1.0 + general.norm()));
    }
}

#[test]
fn newton_solution_sandwiched_by_smallest_solution() {
    for seed in 0..10u64 {
        let sys = random_system(4, 1, 1, 120 + seed).unwrap();
        let rep = stoch_hinf_norm(&sys, &NormOptions::default()).unwrap();
        let gamma = 1.5 * rep.norm;
        let prob = RiccatiProblem::new(&sys, gamma).unwrap();
        let out = newton_solve(&prob, &NewtonOptions::default()).unwrap();
        assert_eq!(out.status, NewtonStatus::Converged);
        let xm = deterministic_smallest_solution(&sys, gamma).unwrap();
        assert!(det_riccati_residual(&sys, gamma, &xm).unwrap().norm() < 1e-6 * (1.0 + xm.norm()));
        // X₋ ⪯ X₊ ⪯ 0
        let gap = (&out.x - &xm).min_eigenvalue().unwrap();
        assert!(gap > -1e-8 * (1.0 + xm.norm()), "{gap}");
        assert!(out.x.max_eigenvalue().unwrap() < 1e-9 * (1.0 + out.x.norm()));
    }
}

#[test]
fn inner_solvers_give_same_newton_solution() {
    for seed in 0..10u64 {
        let sys = random_general_system(4, 2, 2, 2, 140 + seed).unwrap();
        let gamma = 2.0 * stoch_hinf_norm(&sys, &NormOptions::default()).unwrap().norm;
        let prob = RiccatiProblem::new(&sys, gamma).unwrap();
        let fixed = newton_solve(
            &prob,
            &NewtonOptions {
                inner: InnerSolver::FixedPoint,
                ..NewtonOptions::default()
            },
        )
        .unwrap();
        let krylov = newton_solve(&prob, &NewtonOptions::default()).unwrap();
        assert!(fixed.converged() && krylov.converged());
        assert!((fixed.x.as_matrix() - krylov.x.as_matrix()).norm() < 1e-8 * (1.0 + fixed.x.norm()));
    }
}

#[test]
fn gramian_solves_its_equation() {
    for seed in 0..10u64 {
        let sys = random_system(5, 2, 1, 160 + seed).unwrap();
        let p = controllability_gramian(&sys).unwrap();
        let n = &sys.nx[0];
        let res = &sys.a * p.as_matrix() + p.as_matrix() * sys.a.transpose() + n * p.as_matrix() * n.transpose()
            + &sys.b * sys.b.transpose();
        assert!(res.norm() < 1e-8 * (1.0 + p.norm()));
        assert!(p.min_eigenvalue().unwrap() > -1e-10 * p.norm());
    }
}
