//! Test problems: seeded random systems, a stochastically forced heat
//! equation, and a Monte Carlo check of the input-output gain.
//!
//! Random data comes from `ChaCha8Rng` seeded with `seed_from_u64`, with
//! normal variates from `rand_distr::StandardNormal` (ziggurat), so corpora
//! are identical across platforms.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{spectral_abscissa, Matrix, RealSchur};
use crate::operators::{spectral_radius_power, StochasticSystem, POWER_MAXIT, POWER_TOL};

/// Trajectories with `‖x‖ >` this are treated as blown up.
pub const BLOWUP: f64 = 1e12;
/// Seeds tried by [`random_system`] before giving up.
pub const MAX_RESAMPLES: u64 = 100;

fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Reflects the eigenvalues of `a` with positive real part across the
/// imaginary axis, working on the real Schur form so no eigenvector basis
/// is needed.
pub fn mirror_unstable(a: &Matrix) -> Result<Matrix> {
    let RealSchur { u, mut t, blocks } = RealSchur::new(a)?;
    for (s, size) in blocks {
        if size == 1 {
            if t[(s, s)] > 0.0 {
                t[(s, s)] = -t[(s, s)];
            }
        } else {
            let re = 0.5 * (t[(s, s)] + t[(s + 1, s + 1)]);
            if re > 0.0 {
                t[(s, s)] -= 2.0 * re;
                t[(s + 1, s + 1)] -= 2.0 * re;
            }
        }
    }
    Ok(&u * t * u.transpose())
}

/// Random system with one state noise term, `n` states, `m` inputs and `p`
/// outputs.
///
/// `A, N, B, C` are standard normal (drawn in that order). `A` is stabilized
/// by [`mirror_unstable`]; then `N ← N/√(2ρ + 1)` with `ρ = ρ(L_A⁻¹Π_N)`,
/// which leaves `ρ(L_A⁻¹Π_N) = ρ/(2ρ + 1) < 1/2`. `D = 0`. If the mirrored
/// matrix is not strictly stable the next seed is used.
pub fn random_system(n: usize, m: usize, p: usize, seed: u64) -> Result<StochasticSystem> {
    if n == 0 || m == 0 || p == 0 {
        return Err(Error::InvalidArgument(format!(
            "random system needs n, m, p >= 1, got {n}, {m}, {p}"
        )));
    }
    for offset in 0..MAX_RESAMPLES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(offset));
        let a = randn(&mut rng, n, n);
        let nx = randn(&mut rng, n, n);
        let b = randn(&mut rng, n, m);
        let c = randn(&mut rng, p, n);
        let a = mirror_unstable(&a)?;
        if spectral_abscissa(&a)? >= 0.0 {
            continue;
        }
        let rho = match spectral_radius_power(&a, std::slice::from_ref(&nx), POWER_TOL, POWER_MAXIT) {
            Ok(est) => est.rho,
            Err(Error::SingularLyapunov { .. }) => continue,
            Err(e) => return Err(e),
        };
        let nx = nx / (2.0 * rho + 1.0).sqrt();
        return StochasticSystem::basic(a, nx, b, c, Matrix::zeros(p, m));
    }
    Err(Error::InvalidArgument(format!(
        "no stable sample within {MAX_RESAMPLES} seeds from {seed}"
    )))
}

/// Random system with `nu` noise channels that act on both state and input,
/// for exercising the general Riccati map. The state noise is scaled so that
/// `ρ(L_A⁻¹Π) < 1/2` as in [`random_system`]; input noise is scaled by `1/2`.
pub fn random_general_system(
    n: usize,
    m: usize,
    p: usize,
    nu: usize,
    seed: u64,
) -> Result<StochasticSystem> {
    let base = random_system(n, m, p, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut nxs = vec![base.nx[0].clone()];
    for _ in 1..nu {
        nxs.push(randn(&mut rng, n, n));
    }
    let rho = spectral_radius_power(&base.a, &nxs, POWER_TOL, POWER_MAXIT)?.rho;
    let scale = 1.0 / (2.0 * rho + 1.0).sqrt();
    let nxs: Vec<Matrix> = nxs.into_iter().map(|x| x * scale).collect();
    let nus = (0..nu).map(|_| randn(&mut rng, n, m) * 0.5).collect();
    let d = randn(&mut rng, p, m) * 0.5;
    StochasticSystem::new(base.a, nxs, nus, base.b, base.c, d)
}

/// Heat equation on the unit square on a `k × k` interior grid,
/// `h = 1/(k+1)`, `n = k²`, node `(i, j)` stored at `i·k + j` with `i` along `x`.
///
/// Dirichlet data `u₁, u₂, u₃` enter on the edges `x = 0`, `y = 0`, `y = 1`
/// with weight `1/h²`. On `x = 1` the stochastic Robin condition
/// `∂T/∂x = (1/2 + ẇ)T` eliminates the boundary value as
/// `T_b = (1/2)(1 - h/2 + h·ẇ)·T_k`, giving drift `(1/2 - h/4)/h²` and noise
/// gain `1/(2h)` on the diagonal of the adjacent nodes. The output is the
/// mean temperature.
pub fn heat_system(k: usize) -> Result<StochasticSystem> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("heat grid needs k >= 2, got {k}")));
    }
    let n = k * k;
    let h = 1.0 / (k + 1) as f64;
    let h2 = h * h;
    let idx = |i: usize, j: usize| i * k + j;
    let mut a = Matrix::zeros(n, n);
    let mut nx = Matrix::zeros(n, n);
    let mut b = Matrix::zeros(n, 3);
    for i in 0..k {
        for j in 0..k {
            let p = idx(i, j);
            a[(p, p)] = -4.0 / h2;
            if i > 0 {
                a[(p, idx(i - 1, j))] = 1.0 / h2;
            } else {
                b[(p, 0)] += 1.0 / h2;
            }
            if i + 1 < k {
                a[(p, idx(i + 1, j))] = 1.0 / h2;
            } else {
                a[(p, p)] += (0.5 - 0.25 * h) / h2;
                nx[(p, p)] = 0.5 / h;
            }
            if j > 0 {
                a[(p, idx(i, j - 1))] = 1.0 / h2;
            } else {
                b[(p, 1)] += 1.0 / h2;
            }
            if j + 1 < k {
                a[(p, idx(i, j + 1))] = 1.0 / h2;
            } else {
                b[(p, 2)] += 1.0 / h2;
            }
        }
    }
    let c = Matrix::from_element(1, n, 1.0 / n as f64);
    StochasticSystem::basic(a, nx, b, c, Matrix::zeros(1, 3))
}

/// Monte Carlo estimate of `‖y‖_{L²}/‖u‖_{L²}` for one deterministic input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub paths: usize,
}

/// Simulates `dx = (Ax + Bu)dt + Σ(N_{x,j}x + N_{u,j}u)dw_j`, `x(0) = 0`, with
/// Euler–Maruyama on `[0, t_final]` and returns the mean-square gain for
/// `u`, a statistical lower bound on the norm.
///
/// Path `i` draws from the ChaCha stream `i` of `seed`, so results do not
/// depend on thread scheduling. The standard error uses the delta method on
/// the mean output energy.
pub fn mc_norm_lower_bound<F>(
    sys: &StochasticSystem,
    u: F,
    t_final: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate>
where
    F: Fn(f64) -> DVector<f64>,
{
    if !(dt > 0.0) || !(t_final > 0.0) || n_paths == 0 {
        return Err(Error::InvalidArgument(
            "Monte Carlo needs dt > 0, t_final > 0 and at least one path".into(),
        ));
    }
    let steps = (t_final / dt).round().max(1.0) as usize;
    let m = sys.m();
    let mut inputs = Vec::with_capacity(steps);
    let mut u_energy = 0.0;
    for s in 0..steps {
        let v = u(s as f64 * dt);
        if v.len() != m {
            return Err(Error::DimensionMismatch {
                context: "Monte Carlo input",
                expected: format!("{m}"),
                got: format!("{}", v.len()),
            });
        }
        u_energy += v.norm_squared() * dt;
        inputs.push(v);
    }
    if u_energy == 0.0 {
        return Ok(McEstimate {
            estimate: 0.0,
            std_error: 0.0,
            paths: n_paths,
        });
    }
    let sqdt = dt.sqrt();
    let energies: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(path as u64);
            let mut x = DVector::zeros(sys.n());
            let mut energy = 0.0;
            for (s, us) in inputs.iter().enumerate() {
                let y = &sys.c * &x + &sys.d * us;
                energy += y.norm_squared() * dt;
                let mut next = &x + (&sys.a * &x + &sys.b * us) * dt;
                for (nx, nu) in sys.nx.iter().zip(&sys.nu) {
                    let xi: f64 = rng.sample(StandardNormal);
                    next += (nx * &x + nu * us) * (sqdt * xi);
                }
                x = next;
                let nrm = x.norm();
                if !nrm.is_finite() || nrm > BLOWUP {
                    return Err(Error::TrajectoryBlowUp {
                        time: (s + 1) as f64 * dt,
                    });
                }
            }
            Ok(energy)
        })
        .collect::<Result<_>>()?;
    let count = energies.len() as f64;
    let mean = energies.iter().sum::<f64>() / count;
    let var = if energies.len() > 1 {
        energies.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    let se_mean = (var / count).sqrt();
    let estimate = (mean / u_energy).sqrt();
    let std_error = if mean > 0.0 {
        se_mean / (2.0 * (mean * u_energy).sqrt())
    } else {
        0.0
    };
    Ok(McEstimate {
        estimate,
        std_error,
        paths: n_paths,
    })
}
